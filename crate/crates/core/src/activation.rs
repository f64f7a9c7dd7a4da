//! Basis functions, causal filtering of spike trains, and the linear
//! autoregressive activation `psi[t, n] = b_n + sum_m sum_dt h_{m->n}[dt] s[t - dt, m]`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{domain_err, shape_err, Result};
use crate::network::NetworkState;
use crate::spikes::SpikeData;

/// `K` impulse-response basis functions sampled on lags `1..=dt_max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Basis {
    dt_max: usize,
    k: usize,
    /// Row-major `dt_max x K`; row `dt - 1` holds `phi_k[dt]`.
    phi: Vec<f64>,
}

/// Default lag window covering five time constants of the slowest exponential.
pub fn default_dt_max(tau_ms: f64, bin_ms: f64) -> usize {
    ((5.0 * tau_ms / bin_ms).ceil() as usize).max(1)
}

impl Basis {
    pub fn new(dt_max: usize, k: usize, phi: Vec<f64>) -> Result<Self> {
        if dt_max == 0 || k == 0 {
            return Err(domain_err!("basis needs dt_max >= 1 and K >= 1"));
        }
        if phi.len() != dt_max * k {
            return Err(shape_err!("basis matrix has {} entries, expected {}", phi.len(), dt_max * k));
        }
        if phi.iter().any(|v| !v.is_finite()) {
            return Err(domain_err!("basis entries must be finite"));
        }
        Ok(Self { dt_max, k, phi })
    }

    /// One exponential per time constant: `phi_k[dt] = exp(-dt * bin / tau_k)`.
    pub fn exponentials(taus_ms: &[f64], bin_ms: f64, dt_max: usize) -> Result<Self> {
        if taus_ms.is_empty() || taus_ms.iter().any(|&t| !(t > 0.0)) || !(bin_ms > 0.0) {
            return Err(domain_err!("time constants and bin width must be positive"));
        }
        let k = taus_ms.len();
        let mut phi = Vec::with_capacity(dt_max * k);
        for dt in 1..=dt_max {
            for &tau in taus_ms {
                let v = if tau.is_infinite() { 1.0 } else { (-(dt as f64) * bin_ms / tau).exp() };
                phi.push(v);
            }
        }
        Self::new(dt_max, k, phi)
    }

    pub fn dt_max(&self) -> usize {
        self.dt_max
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// `phi_k[dt]` for `dt` in `1..=dt_max`, `k` in `0..K`.
    #[inline]
    pub fn value(&self, dt: usize, k: usize) -> f64 {
        self.phi[(dt - 1) * self.k + k]
    }
}

/// `K = 1` exponential basis with time constant `tau_ms`.
pub fn exponential_basis(tau_ms: f64, bin_ms: f64, dt_max: usize) -> Result<Basis> {
    Basis::exponentials(&[tau_ms], bin_ms, dt_max)
}

/// The regressor matrix `S_hat`: a bias column of ones followed by the
/// filtered spike trains `s_hat[t, m, k] = sum_dt phi_k[dt] s[t - dt, m]`,
/// neuron-major (`[1, (m=0, k=0..K), (m=1, k=0..K), ...]`).
#[derive(Debug, Clone, PartialEq)]
pub struct FilteredSpikes {
    neurons: usize,
    k: usize,
    x: DMatrix<f64>,
}

impl FilteredSpikes {
    pub fn bins(&self) -> usize {
        self.x.nrows()
    }

    pub fn neurons(&self) -> usize {
        self.neurons
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// `1 + N K`.
    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    /// Column-major `T x (1 + N K)` regressors.
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn row(&self, t: usize) -> Vec<f64> {
        self.x.row(t).iter().copied().collect()
    }

    #[inline]
    pub fn column(&self, j: usize) -> &[f64] {
        let t = self.x.nrows();
        &self.x.as_slice()[j * t..(j + 1) * t]
    }

    /// Column index of `(source neuron m, basis k)`.
    #[inline]
    pub fn col(&self, m: usize, k: usize) -> usize {
        1 + m * self.k + k
    }
}

/// Filter one spike train with every basis function, zero-padding before the first bin.
pub fn filter_train(counts: &[u32], basis: &Basis) -> Vec<Vec<f64>> {
    let t_len = counts.len();
    let mut out = vec![vec![0.0; t_len]; basis.k()];
    for (t0, &c) in counts.iter().enumerate() {
        if c == 0 {
            continue;
        }
        let c = c as f64;
        let end = (t0 + basis.dt_max()).min(t_len.saturating_sub(1));
        for t in t0 + 1..=end {
            let dt = t - t0;
            for (k, col) in out.iter_mut().enumerate() {
                col[t] += c * basis.value(dt, k);
            }
        }
    }
    out
}

pub fn filter_spikes(data: &SpikeData, basis: &Basis) -> FilteredSpikes {
    let (t_len, n) = (data.bins(), data.neurons());
    let k = basis.k();
    let mut x = DMatrix::<f64>::zeros(t_len, 1 + n * k);
    x.column_mut(0).fill(1.0);
    for m in 0..n {
        let cols = filter_train(&data.column(m), basis);
        for (kk, col) in cols.into_iter().enumerate() {
            x.column_mut(1 + m * k + kk).copy_from_slice(&col);
        }
    }
    FilteredSpikes { neurons: n, k, x }
}

/// `(a_n (.) w_n)^T s_hat_t` for one bin.
pub fn activation(shat_t: &[f64], mask: &[bool], weights: &[f64]) -> Result<f64> {
    if shat_t.len() != mask.len() || shat_t.len() != weights.len() {
        return Err(shape_err!(
            "regressor length {}, mask length {}, weight length {}",
            shat_t.len(),
            mask.len(),
            weights.len()
        ));
    }
    if mask.first() != Some(&true) {
        return Err(domain_err!("the bias entry of the mask must be 1"));
    }
    Ok(shat_t
        .iter()
        .zip(mask)
        .zip(weights)
        .filter(|&((_, &on), _)| on)
        .map(|((x, _), w)| x * w)
        .sum())
}

/// `psi_n = S_hat (a_n (.) w_n)` written into `out`.
pub fn activation_column(shat: &FilteredSpikes, masked_weights: &[f64], out: &mut [f64]) {
    out.fill(0.0);
    for (j, &w) in masked_weights.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        for (o, x) in out.iter_mut().zip(shat.column(j)) {
            *o += w * x;
        }
    }
}

/// The `T x N` activation matrix; column `n` is the masked inner product for neuron `n`.
pub fn activation_matrix(shat: &FilteredSpikes, net: &NetworkState) -> Result<DMatrix<f64>> {
    if shat.neurons() != net.neurons() || shat.k() != net.k() {
        return Err(shape_err!(
            "regressors for {} neurons x {} bases, network has {} x {}",
            shat.neurons(),
            shat.k(),
            net.neurons(),
            net.k()
        ));
    }
    let t_len = shat.bins();
    let mut psi = DMatrix::<f64>::zeros(t_len, net.neurons());
    for n in 0..net.neurons() {
        let wm = net.masked_weight_vector(n);
        let col = &mut psi.as_mut_slice()[n * t_len..(n + 1) * t_len];
        activation_column(shat, &wm, col);
    }
    Ok(psi)
}
