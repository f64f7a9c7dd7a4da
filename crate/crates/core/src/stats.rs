//! Elementary distributions and conjugate posteriors used by the samplers.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Beta, ChiSquared, Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

pub fn log_normal(x: f64, mean: f64, var: f64) -> f64 {
    let d = x - mean;
    -0.5 * (LN_2PI + var.ln() + d * d / var)
}

pub fn log_bernoulli(a: bool, p: f64) -> f64 {
    if a {
        p.ln()
    } else {
        (-p).ln_1p()
    }
}

pub fn std_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// Gamma with shape/rate parameterization.
pub fn gamma<R: Rng + ?Sized>(shape: f64, rate: f64, rng: &mut R) -> f64 {
    Gamma::new(shape, 1.0 / rate).expect("positive gamma parameters").sample(rng)
}

pub fn inv_gamma<R: Rng + ?Sized>(shape: f64, rate: f64, rng: &mut R) -> f64 {
    1.0 / gamma(shape, rate, rng)
}

pub fn beta<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> f64 {
    Beta::new(a, b).expect("positive beta parameters").sample(rng)
}

pub fn dirichlet<R: Rng + ?Sized>(alpha: &[f64], rng: &mut R) -> Vec<f64> {
    let mut g: Vec<f64> = alpha.iter().map(|&a| gamma(a, 1.0, rng)).collect();
    let total: f64 = g.iter().sum();
    if total > 0.0 {
        g.iter_mut().for_each(|v| *v /= total);
    } else {
        // every gamma underflowed (tiny alpha); fall back to a random vertex
        let i = rng.random_range(0..g.len());
        g.iter_mut().enumerate().for_each(|(j, v)| *v = (j == i) as u8 as f64);
    }
    g
}

/// Draw an index with probabilities proportional to `exp(logw)`.
pub fn categorical_log<R: Rng + ?Sized>(logw: &[f64], rng: &mut R) -> usize {
    let max = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logw.iter().map(|&l| (l - max).exp()).collect();
    let total: f64 = w.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, &wi) in w.iter().enumerate() {
        if u < wi {
            return i;
        }
        u -= wi;
    }
    w.iter().rposition(|&x| x > 0.0).unwrap_or(0)
}

pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + xs.iter().map(|&x| (x - max).exp()).sum::<f64>().ln()
}

pub fn cholesky(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    m.clone()
        .cholesky()
        .map(|c| c.l())
        .ok_or_else(|| Error::Numerical(format!("matrix of size {} is not positive definite", m.nrows())))
}

/// `mean + L z` with `z` standard normal.
pub fn mvn_from_chol<R: Rng + ?Sized>(mean: &DVector<f64>, l: &DMatrix<f64>, rng: &mut R) -> DVector<f64> {
    let z = DVector::from_fn(mean.len(), |_, _| std_normal(rng));
    mean + l * z
}

pub fn log_mvn(x: &DVector<f64>, mean: &DVector<f64>, cov: &DMatrix<f64>) -> Result<f64> {
    let l = cholesky(cov)?;
    let d = x - mean;
    let y = l.solve_lower_triangular(&d).expect("nonsingular factor");
    let logdet: f64 = 2.0 * l.diagonal().iter().map(|v| v.ln()).sum::<f64>();
    Ok(-0.5 * (x.len() as f64 * LN_2PI + logdet + y.norm_squared()))
}

/// Wishart draw with scale `V` (lower Cholesky factor given) and `dof` degrees of freedom,
/// via the Bartlett decomposition.
fn wishart_from_chol<R: Rng + ?Sized>(lv: &DMatrix<f64>, dof: f64, rng: &mut R) -> DMatrix<f64> {
    let p = lv.nrows();
    let mut a = DMatrix::<f64>::zeros(p, p);
    for i in 0..p {
        a[(i, i)] = ChiSquared::new(dof - i as f64).expect("dof > p - 1").sample(rng).sqrt();
        for j in 0..i {
            a[(i, j)] = std_normal(rng);
        }
    }
    let la = lv * a;
    &la * la.transpose()
}

/// Normal-inverse-Wishart: `Sigma ~ IW(scale, dof)`, `mu | Sigma ~ N(mean, Sigma / kappa)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NiwPrior {
    pub mean: Vec<f64>,
    pub kappa: f64,
    /// Row-major `K x K` scale matrix.
    pub scale: Vec<f64>,
    pub dof: f64,
}

impl NiwPrior {
    /// Weakly informative default for `K`-dimensional weights.
    pub fn default_for(k: usize) -> Self {
        let mut scale = vec![0.0; k * k];
        for i in 0..k {
            scale[i * k + i] = 1.0;
        }
        Self { mean: vec![0.0; k], kappa: 1.0, scale, dof: k as f64 + 2.0 }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.dim();
        if self.scale.len() != k * k || !(self.kappa > 0.0) || !(self.dof > k as f64 - 1.0) {
            return Err(Error::Domain("normal-inverse-Wishart hyperparameters out of range".into()));
        }
        cholesky(&self.scale_matrix()).map(|_| ())
    }

    pub fn scale_matrix(&self) -> DMatrix<f64> {
        let k = self.dim();
        DMatrix::from_row_slice(k, k, &self.scale)
    }

    /// Conjugate update on observations `xs`.
    pub fn posterior(&self, xs: &[DVector<f64>]) -> NiwPrior {
        let n = xs.len() as f64;
        if xs.is_empty() {
            return self.clone();
        }
        let k = self.dim();
        let m0 = DVector::from_column_slice(&self.mean);
        let mut xbar = DVector::<f64>::zeros(k);
        for x in xs {
            xbar += x;
        }
        xbar /= n;
        let mut s = DMatrix::<f64>::zeros(k, k);
        for x in xs {
            let d = x - &xbar;
            s += &d * d.transpose();
        }
        let kappa_n = self.kappa + n;
        let mean_n = (&m0 * self.kappa + &xbar * n) / kappa_n;
        let dm = &xbar - &m0;
        let scale_n = self.scale_matrix() + s + (&dm * dm.transpose()) * (self.kappa * n / kappa_n);
        // symmetrize against rounding
        let scale_n = (&scale_n + scale_n.transpose()) * 0.5;
        NiwPrior {
            mean: mean_n.iter().copied().collect(),
            kappa: kappa_n,
            scale: scale_n.transpose().iter().copied().collect(),
            dof: self.dof + n,
        }
    }

    /// Draw `(mu, Sigma)`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let scale = self.scale_matrix();
        let inv = scale
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::Numerical("singular inverse-Wishart scale".into()))?;
        let lv = cholesky(&((&inv + inv.transpose()) * 0.5))?;
        let w = wishart_from_chol(&lv, self.dof, rng);
        let sigma = w
            .try_inverse()
            .ok_or_else(|| Error::Numerical("singular Wishart draw".into()))?;
        let sigma = (&sigma + sigma.transpose()) * 0.5;
        let l = cholesky(&(&sigma / self.kappa))?;
        let mu = mvn_from_chol(&DVector::from_column_slice(&self.mean), &l, rng);
        Ok((mu, sigma))
    }
}

/// Inverse-gamma prior with shape/rate parameterization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InvGammaPrior {
    pub shape: f64,
    pub rate: f64,
}

impl InvGammaPrior {
    /// Posterior for a variance given zero-mean residuals: `shape + n/2`, `rate + sum r^2 / 2`.
    pub fn posterior(&self, residuals: &[f64]) -> InvGammaPrior {
        InvGammaPrior {
            shape: self.shape + residuals.len() as f64 / 2.0,
            rate: self.rate + residuals.iter().map(|r| r * r).sum::<f64>() / 2.0,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        inv_gamma(self.shape, self.rate, rng)
    }

    pub fn log_pdf(&self, x: f64) -> f64 {
        self.shape * self.rate.ln() - statrs::function::gamma::ln_gamma(self.shape)
            - (self.shape + 1.0) * x.ln()
            - self.rate / x
    }
}

/// Normal-inverse-gamma: `var ~ IG(shape, rate)`, `mu | var ~ N(mean, var / kappa)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NigPrior {
    pub mean: f64,
    pub kappa: f64,
    pub shape: f64,
    pub rate: f64,
}

impl NigPrior {
    pub fn posterior(&self, xs: &[f64]) -> NigPrior {
        if xs.is_empty() {
            return *self;
        }
        let n = xs.len() as f64;
        let xbar = xs.iter().sum::<f64>() / n;
        let ss: f64 = xs.iter().map(|x| (x - xbar).powi(2)).sum();
        let kappa_n = self.kappa + n;
        NigPrior {
            mean: (self.kappa * self.mean + n * xbar) / kappa_n,
            kappa: kappa_n,
            shape: self.shape + n / 2.0,
            rate: self.rate + 0.5 * ss + self.kappa * n * (xbar - self.mean).powi(2) / (2.0 * kappa_n),
        }
    }

    /// Draw `(mu, var)`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (f64, f64) {
        let var = inv_gamma(self.shape, self.rate, rng);
        let mu = self.mean + (var / self.kappa).sqrt() * std_normal(rng);
        (mu, var)
    }
}
