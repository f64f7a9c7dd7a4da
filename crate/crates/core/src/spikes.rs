//! Spike-count data and the logistic count models (Bernoulli, binomial,
//! negative binomial) written in the exponential-ratio standard form
//!
//! ```text
//! p(s | psi, nu) = c(s, nu) * (e^psi)^a(s, nu) / (1 + e^psi)^b(s, nu)
//! ```
//!
//! which is what the Polya-gamma augmentation needs.

use rand::Rng;
use rand_distr::{Binomial, Distribution, Gamma, Poisson};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{domain_err, shape_err, Result};

/// `log(1 + e^x)` in the branch-free form `max(x, 0) + log1p(e^{-|x|})`.
///
/// The naive `ln(1 + exp(x))` loses all relative precision of the correction
/// term once `|x| > 37` (where `e^{-|x|}` drops below half an ulp of 1) and
/// overflows past 709; this form is exact to rounding for every finite `x`.
#[inline]
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// `log sigma(x)`.
#[inline]
pub fn log_sigmoid(x: f64) -> f64 {
    -softplus(-x)
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `log C(n, k)` for real `n >= k >= 0`.
pub fn ln_choose(n: f64, k: f64) -> f64 {
    if k == 0.0 || k == n {
        return 0.0;
    }
    ln_gamma(n + 1.0) - ln_gamma(k + 1.0) - ln_gamma(n - k + 1.0)
}

/// A `T x N` matrix of non-negative spike counts, stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpikeData {
    bins: usize,
    neurons: usize,
    bin_ms: f64,
    counts: Vec<u32>,
}

impl SpikeData {
    pub fn new(bins: usize, neurons: usize, bin_ms: f64, counts: Vec<u32>) -> Result<Self> {
        if counts.len() != bins * neurons {
            return Err(shape_err!(
                "expected {} counts for {bins} bins x {neurons} neurons, got {}",
                bins * neurons,
                counts.len()
            ));
        }
        if !(bin_ms > 0.0 && bin_ms.is_finite()) {
            return Err(domain_err!("bin width must be positive, got {bin_ms}"));
        }
        Ok(Self { bins, neurons, bin_ms, counts })
    }

    pub fn zeros(bins: usize, neurons: usize, bin_ms: f64) -> Self {
        Self { bins, neurons, bin_ms, counts: vec![0; bins * neurons] }
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn neurons(&self) -> usize {
        self.neurons
    }

    pub fn bin_ms(&self) -> f64 {
        self.bin_ms
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    #[inline]
    pub fn get(&self, t: usize, n: usize) -> u32 {
        self.counts[t * self.neurons + n]
    }

    #[inline]
    pub fn set(&mut self, t: usize, n: usize, s: u32) {
        self.counts[t * self.neurons + n] = s;
    }

    pub fn row(&self, t: usize) -> &[u32] {
        &self.counts[t * self.neurons..(t + 1) * self.neurons]
    }

    pub fn column(&self, n: usize) -> Vec<u32> {
        (0..self.bins).map(|t| self.get(t, n)).collect()
    }

    pub fn max_count(&self, n: usize) -> u32 {
        (0..self.bins).map(|t| self.get(t, n)).max().unwrap_or(0)
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().map(|&c| c as u64).sum()
    }

    /// Restrict to a subset of neurons, in the order given.
    pub fn select_neurons(&self, keep: &[usize]) -> Result<SpikeData> {
        if let Some(&bad) = keep.iter().find(|&&n| n >= self.neurons) {
            return Err(shape_err!("neuron {bad} out of range for {} neurons", self.neurons));
        }
        let mut counts = Vec::with_capacity(self.bins * keep.len());
        for t in 0..self.bins {
            counts.extend(keep.iter().map(|&n| self.get(t, n)));
        }
        Ok(SpikeData { bins: self.bins, neurons: keep.len(), bin_ms: self.bin_ms, counts })
    }

    /// The first `bins` rows.
    pub fn truncate(&self, bins: usize) -> SpikeData {
        let bins = bins.min(self.bins);
        SpikeData {
            bins,
            neurons: self.neurons,
            bin_ms: self.bin_ms,
            counts: self.counts[..bins * self.neurons].to_vec(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObsKind {
    Bernoulli,
    Binomial,
    #[serde(rename = "negbinomial")]
    NegBinomial,
}

impl ObsKind {
    pub fn name(&self) -> &'static str {
        match self {
            ObsKind::Bernoulli => "bernoulli",
            ObsKind::Binomial => "binomial",
            ObsKind::NegBinomial => "negbinomial",
        }
    }
}

impl std::str::FromStr for ObsKind {
    type Err = crate::error::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bernoulli" => Ok(ObsKind::Bernoulli),
            "binomial" => Ok(ObsKind::Binomial),
            "negbinomial" | "negative_binomial" => Ok(ObsKind::NegBinomial),
            other => Err(domain_err!("unknown observation model '{other}'")),
        }
    }
}

/// Coefficients of `c (e^psi)^a / (1 + e^psi)^b`, with `c` kept in the log domain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StandardForm {
    pub a: f64,
    pub b: f64,
    pub log_c: f64,
    pub kappa: f64,
}

impl StandardForm {
    /// `log c + a psi - b log(1 + e^psi)`.
    pub fn log_density(&self, psi: f64) -> f64 {
        self.log_c + self.a * psi - self.b * softplus(psi)
    }
}

/// The count distribution of a single neuron: a kind plus its dispersion `nu`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CountModel {
    kind: ObsKind,
    nu: f64,
}

impl CountModel {
    pub fn new(kind: ObsKind, nu: f64) -> Result<Self> {
        match kind {
            ObsKind::Bernoulli if nu != 1.0 => {
                Err(domain_err!("bernoulli model requires nu = 1, got {nu}"))
            }
            ObsKind::Binomial if !(nu >= 1.0 && nu.fract() == 0.0 && nu.is_finite()) => {
                Err(domain_err!("binomial nu must be a positive integer, got {nu}"))
            }
            ObsKind::NegBinomial if !(nu > 0.0 && nu.is_finite()) => {
                Err(domain_err!("negative binomial nu must be positive, got {nu}"))
            }
            _ => Ok(Self { kind, nu }),
        }
    }

    pub fn bernoulli() -> Self {
        Self { kind: ObsKind::Bernoulli, nu: 1.0 }
    }

    pub fn kind(&self) -> ObsKind {
        self.kind
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn check_count(&self, s: u32) -> Result<()> {
        match self.kind {
            ObsKind::Bernoulli if s > 1 => {
                Err(domain_err!("bernoulli count must be 0 or 1, got {s}"))
            }
            ObsKind::Binomial if s as f64 > self.nu => {
                Err(domain_err!("binomial count {s} exceeds nu = {}", self.nu))
            }
            _ => Ok(()),
        }
    }

    /// `b(s, nu)` without validation; never zero for the three models.
    #[inline]
    pub fn shape_b(&self, s: u32) -> f64 {
        match self.kind {
            ObsKind::Bernoulli => 1.0,
            ObsKind::Binomial => self.nu,
            ObsKind::NegBinomial => self.nu + s as f64,
        }
    }

    /// `kappa(s, nu) = a - b/2` without validation.
    #[inline]
    pub fn kappa(&self, s: u32) -> f64 {
        let s = s as f64;
        match self.kind {
            ObsKind::Bernoulli => s - 0.5,
            ObsKind::Binomial => s - self.nu / 2.0,
            ObsKind::NegBinomial => (s - self.nu) / 2.0,
        }
    }

    pub fn standard_form(&self, s: u32) -> Result<StandardForm> {
        self.check_count(s)?;
        let sf = s as f64;
        let (a, b, log_c) = match self.kind {
            ObsKind::Bernoulli => (sf, 1.0, 0.0),
            ObsKind::Binomial => (sf, self.nu, ln_choose(self.nu, sf)),
            ObsKind::NegBinomial => (sf, self.nu + sf, ln_choose(self.nu + sf - 1.0, sf)),
        };
        Ok(StandardForm { a, b, log_c, kappa: a - b / 2.0 })
    }

    /// Exact log probability mass of `s` at activation `psi`.
    pub fn log_likelihood(&self, s: u32, psi: f64) -> Result<f64> {
        self.check_count(s)?;
        Ok(self.log_likelihood_unchecked(s, psi))
    }

    #[inline]
    pub fn log_likelihood_unchecked(&self, s: u32, psi: f64) -> f64 {
        let sf = s as f64;
        let lp = log_sigmoid(psi);
        let lq = log_sigmoid(-psi);
        match self.kind {
            ObsKind::Bernoulli => {
                if s == 0 {
                    lq
                } else {
                    lp
                }
            }
            ObsKind::Binomial => ln_choose(self.nu, sf) + sf * lp + (self.nu - sf) * lq,
            ObsKind::NegBinomial => {
                let log_c = if s == 0 { 0.0 } else { ln_choose(self.nu + sf - 1.0, sf) };
                log_c + sf * lp + self.nu * lq
            }
        }
    }

    /// `(E[s], Var[s])` at activation `psi`.
    pub fn mean_variance(&self, psi: f64) -> (f64, f64) {
        let p = sigmoid(psi);
        let q = sigmoid(-psi);
        match self.kind {
            ObsKind::Bernoulli => (p, p * q),
            ObsKind::Binomial => (self.nu * p, self.nu * p * q),
            ObsKind::NegBinomial => {
                let mean = self.nu * psi.exp();
                (mean, mean / q)
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, psi: f64, rng: &mut R) -> u32 {
        match self.kind {
            ObsKind::Bernoulli => (rng.random::<f64>() < sigmoid(psi)) as u32,
            ObsKind::Binomial => {
                let p = sigmoid(psi);
                Binomial::new(self.nu as u64, p).expect("valid binomial").sample(rng) as u32
            }
            ObsKind::NegBinomial => {
                // Gamma-Poisson mixture with mean nu e^psi; the rate is capped so
                // that a runaway simulation saturates instead of panicking.
                let scale = psi.min(40.0).exp();
                let lambda = Gamma::new(self.nu, scale).expect("valid gamma").sample(rng);
                if lambda <= 0.0 {
                    return 0;
                }
                let lambda = lambda.min(1e9);
                Poisson::new(lambda).expect("valid poisson").sample(rng) as u32
            }
        }
    }
}

/// Observation model for a whole population: one kind, per-neuron `nu`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObsModel {
    pub kind: ObsKind,
    pub nu: Vec<f64>,
}

impl ObsModel {
    pub fn new(kind: ObsKind, nu: Vec<f64>) -> Result<Self> {
        for &v in &nu {
            CountModel::new(kind, v)?;
        }
        Ok(Self { kind, nu })
    }

    pub fn bernoulli(neurons: usize) -> Self {
        Self { kind: ObsKind::Bernoulli, nu: vec![1.0; neurons] }
    }

    pub fn uniform(kind: ObsKind, nu: f64, neurons: usize) -> Result<Self> {
        Self::new(kind, vec![nu; neurons])
    }

    pub fn neurons(&self) -> usize {
        self.nu.len()
    }

    #[inline]
    pub fn neuron(&self, n: usize) -> CountModel {
        CountModel { kind: self.kind, nu: self.nu[n] }
    }

    /// Check every count in `data` against the model.
    pub fn validate(&self, data: &SpikeData) -> Result<()> {
        if data.neurons() != self.neurons() {
            return Err(shape_err!(
                "observation model has {} neurons, data has {}",
                self.neurons(),
                data.neurons()
            ));
        }
        for n in 0..self.neurons() {
            let m = self.neuron(n);
            for t in 0..data.bins() {
                m.check_count(data.get(t, n)).map_err(|e| {
                    domain_err!("bin {t}, neuron {n}: {e}")
                })?;
            }
        }
        Ok(())
    }
}
