//! Polya-gamma random variates `PG(b, c)`.
//!
//! * `b = 1`: Devroye-style exact accept/reject sampler on the Jacobi
//!   distribution `J*(1, c/2)`, using the alternating series for the
//!   acceptance test (truncation point `t = 0.64`).
//! * integer `b`: sum of `b` independent `PG(1, c)` draws.
//! * non-integer `b`: exact draws for `floor(b)` plus the fractional part from
//!   the sum-of-gammas representation truncated at [`SERIES_TERMS`] terms, with
//!   the discarded tail replaced by its mean.
//! * `b > `[`GAUSSIAN_SHAPE`]: moment-matched Gaussian approximation.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use rand::Rng;
use rand_distr::{Distribution, Exp1, Gamma, StandardNormal};
use rayon::prelude::*;
use statrs::function::erf::erfc;

use crate::error::{domain_err, shape_err, Result};
use crate::rng::{Phase, Streams};

const TRUNC: f64 = 0.64;
const TRUNC_RECIP: f64 = 1.0 / TRUNC;
const PI2: f64 = PI * PI;

/// Number of gamma terms kept for the fractional part of a non-integer shape.
pub const SERIES_TERMS: usize = 200;
/// Above this shape the sampler switches to a Gaussian with the exact mean and variance.
pub const GAUSSIAN_SHAPE: f64 = 170.0;
const BATCH_CHUNK: usize = 256;

/// Parameters of `PG(b, c)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PgParams {
    pub b: f64,
    pub c: f64,
}

impl PgParams {
    pub fn new(b: f64, c: f64) -> Result<Self> {
        if !(b >= 0.0) || !b.is_finite() {
            return Err(domain_err!("Polya-gamma shape must be >= 0, got {b}"));
        }
        if !c.is_finite() {
            return Err(domain_err!("Polya-gamma tilt must be finite, got {c}"));
        }
        Ok(Self { b, c })
    }

    pub fn mean(&self) -> f64 {
        self.b * pg1_mean(self.c)
    }

    pub fn variance(&self) -> f64 {
        self.b * pg1_variance(self.c)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        sample_unchecked(self.b, self.c, rng)
    }
}

fn pg1_mean(c: f64) -> f64 {
    let c = c.abs();
    if c < 1e-4 {
        0.25 - c * c / 48.0
    } else {
        (c / 2.0).tanh() / (2.0 * c)
    }
}

fn pg1_variance(c: f64) -> f64 {
    let c = c.abs();
    if c < 1e-3 {
        1.0 / 24.0 - c * c / 120.0
    } else {
        let ch = (c / 2.0).cosh();
        (c.sinh() - c) / (4.0 * c * c * c * ch * ch)
    }
}

/// `E[PG(b, c)]`: `b/4` at `c = 0`, otherwise `(b / 2c) tanh(c / 2)`.
pub fn pg_mean(b: f64, c: f64) -> Result<f64> {
    Ok(PgParams::new(b, c)?.mean())
}

/// `Var[PG(b, c)] = b (sinh c - c) / (4 c^3 cosh^2(c/2))`, `b/24` at `c = 0`.
pub fn pg_variance(b: f64, c: f64) -> Result<f64> {
    Ok(PgParams::new(b, c)?.variance())
}

/// One draw from `PG(b, c)`.
pub fn sample_pg<R: Rng + ?Sized>(b: f64, c: f64, rng: &mut R) -> Result<f64> {
    Ok(PgParams::new(b, c)?.sample(rng))
}

/// Elementwise independent draws. Work is split into fixed-size chunks, each with
/// its own substream derived from one seed taken from `rng`, so the output does
/// not depend on how rayon schedules the chunks.
pub fn sample_pg_batch<R: Rng + ?Sized>(bs: &[f64], cs: &[f64], rng: &mut R) -> Result<Vec<f64>> {
    if bs.len() != cs.len() {
        return Err(shape_err!("{} shapes but {} tilts", bs.len(), cs.len()));
    }
    for (&b, &c) in bs.iter().zip(cs) {
        PgParams::new(b, c)?;
    }
    let streams = Streams::new(rng.random());
    let mut out = vec![0.0; bs.len()];
    out.par_chunks_mut(BATCH_CHUNK).enumerate().for_each(|(i, chunk)| {
        let mut r = streams.rng(Phase::Batch, 0, i as u64);
        let off = i * BATCH_CHUNK;
        for (j, o) in chunk.iter_mut().enumerate() {
            *o = sample_unchecked(bs[off + j], cs[off + j], &mut r);
        }
    });
    Ok(out)
}

#[inline]
pub(crate) fn sample_unchecked<R: Rng + ?Sized>(b: f64, c: f64, rng: &mut R) -> f64 {
    if b == 0.0 {
        return 0.0;
    }
    if b > GAUSSIAN_SHAPE {
        let m = b * pg1_mean(c);
        let sd = (b * pg1_variance(c)).sqrt();
        let z: f64 = rng.sample(StandardNormal);
        return (m + sd * z).max(f64::MIN_POSITIVE);
    }
    let whole = b.floor();
    let frac = b - whole;
    let mut total = 0.0;
    for _ in 0..whole as u32 {
        total += sample_pg1(c, rng);
    }
    if frac > 0.0 {
        total += sample_series(frac, c, rng);
    }
    total
}

/// Exact `PG(1, c)` draw.
#[inline]
pub fn sample_pg1<R: Rng + ?Sized>(c: f64, rng: &mut R) -> f64 {
    // PG(1, c) = J*(1, |c|/2) / 4
    let z = c.abs() * 0.5;
    let fz = 0.125 * PI2 + 0.5 * z * z;
    let p_exp = mass_texpon(z, fz);
    loop {
        let x = if rng.random::<f64>() < p_exp {
            let e: f64 = rng.sample(Exp1);
            TRUNC + e / fz
        } else {
            rtigauss(z, rng)
        };
        let mut s = series_coef(0, x);
        let y = rng.random::<f64>() * s;
        let mut n = 0;
        loop {
            n += 1;
            if n % 2 == 1 {
                s -= series_coef(n, x);
                if y <= s {
                    return 0.25 * x;
                }
            } else {
                s += series_coef(n, x);
                if y > s {
                    break;
                }
            }
        }
    }
}

/// Piecewise coefficients of the alternating series for the `J*(1)` density.
#[inline]
fn series_coef(n: u32, x: f64) -> f64 {
    let k = (n as f64 + 0.5) * PI;
    if x > TRUNC {
        k * (-0.5 * k * k * x).exp()
    } else if x > 0.0 {
        let h = n as f64 + 0.5;
        (-1.5 * ((0.5 * PI).ln() + x.ln()) + k.ln() - 2.0 * h * h / x).exp()
    } else {
        0.0
    }
}

#[inline]
fn log_norm_cdf(x: f64) -> f64 {
    (0.5 * erfc(-x * FRAC_1_SQRT_2)).ln()
}

/// Probability of proposing from the truncated exponential piece.
#[inline]
fn mass_texpon(z: f64, fz: f64) -> f64 {
    let t = TRUNC;
    let rt = (1.0 / t).sqrt();
    let b = rt * (t * z - 1.0);
    let a = -rt * (t * z + 1.0);
    let x0 = fz.ln() + fz * t;
    let xb = x0 - z + log_norm_cdf(b);
    let xa = x0 + z + log_norm_cdf(a);
    let qdivp = 4.0 / PI * (xb.exp() + xa.exp());
    1.0 / (1.0 + qdivp)
}

/// Inverse Gaussian with mean `1/z`, truncated to `(0, TRUNC]`.
#[inline]
fn rtigauss<R: Rng + ?Sized>(z: f64, rng: &mut R) -> f64 {
    let t = TRUNC;
    if TRUNC_RECIP > z {
        // mean beyond the truncation point: propose from the z = 0 case and thin
        loop {
            let mut e1: f64 = rng.sample(Exp1);
            let mut e2: f64 = rng.sample(Exp1);
            while e1 * e1 > 2.0 * e2 / t {
                e1 = rng.sample(Exp1);
                e2 = rng.sample(Exp1);
            }
            let x = 1.0 + e1 * t;
            let x = t / (x * x);
            let alpha = (-0.5 * z * z * x).exp();
            if rng.random::<f64>() <= alpha {
                return x;
            }
        }
    } else {
        let mu = 1.0 / z;
        let mut x = t + 1.0;
        while x > t {
            let y: f64 = rng.sample(StandardNormal);
            let half_mu = 0.5 * mu;
            let mu_y = mu * y * y;
            x = mu + half_mu * mu_y - half_mu * (4.0 * mu_y + mu_y * mu_y).sqrt();
            if rng.random::<f64>() > mu / (mu + x) {
                x = mu * mu / x;
            }
        }
        x
    }
}

/// `PG(b, c)` for small non-integer `b` via `(1/2pi^2) sum_k g_k / ((k-1/2)^2 + c^2/4pi^2)`,
/// `g_k ~ Gamma(b, 1)`, truncated with a mean-matched tail.
fn sample_series<R: Rng + ?Sized>(b: f64, c: f64, rng: &mut R) -> f64 {
    let gamma = Gamma::new(b, 1.0).expect("positive shape");
    let shift = c * c / (4.0 * PI2);
    let mut total = 0.0;
    let mut kept_mean = 0.0;
    for k in 1..=SERIES_TERMS {
        let h = k as f64 - 0.5;
        let denom = h * h + shift;
        total += gamma.sample(rng) / denom;
        kept_mean += b / denom;
    }
    let scale = 1.0 / (2.0 * PI2);
    let tail = (b * pg1_mean(c) - kept_mean * scale).max(0.0);
    total * scale + tail
}
