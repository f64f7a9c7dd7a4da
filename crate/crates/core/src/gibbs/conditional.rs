//! Gaussian conditionals of one neuron's incoming weights, and the collapsed
//! update of its incoming connections with those weights integrated out.
//!
//! Everything is expressed in terms of the precision `J = Sigma^{-1} + X^T Omega X`
//! and linear term `h = Sigma^{-1} mu + X^T kappa`, restricted to the active
//! coordinates. The Polya-gamma path and the Gaussian-observation path differ
//! only in how `Omega` and `kappa` are formed.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::activation::FilteredSpikes;
use crate::error::{shape_err, Error, Result};
use crate::network::NeuronPrior;
use crate::spikes::sigmoid;
use crate::stats;

/// `X^T diag(omega) X` and `X^T kappa` for one neuron.
#[derive(Debug, Clone, PartialEq)]
pub struct NeuronStats {
    pub gram: DMatrix<f64>,
    pub xk: DVector<f64>,
}

impl NeuronStats {
    /// Statistics of the augmented likelihood `exp(kappa psi - omega psi^2 / 2)`.
    pub fn from_augmented(shat: &FilteredSpikes, omega: &[f64], kappa: &[f64]) -> Result<Self> {
        let t = shat.bins();
        if omega.len() != t || kappa.len() != t {
            return Err(shape_err!("expected {t} auxiliaries, got {} and {}", omega.len(), kappa.len()));
        }
        Ok(weighted_stats(shat.matrix(), omega, kappa))
    }

    /// Statistics of Gaussian observations `y_t ~ N(psi_t, noise_var)`:
    /// `Omega = I / noise_var`, `kappa = y / noise_var`.
    pub fn gaussian(shat: &FilteredSpikes, targets: &[f64], noise_var: f64) -> Result<Self> {
        let t = shat.bins();
        if targets.len() != t {
            return Err(shape_err!("expected {t} targets, got {}", targets.len()));
        }
        if !(noise_var > 0.0) {
            return Err(Error::Domain(format!("noise variance must be positive, got {noise_var}")));
        }
        let omega = vec![1.0 / noise_var; t];
        let kappa: Vec<f64> = targets.iter().map(|y| y / noise_var).collect();
        Ok(weighted_stats(shat.matrix(), &omega, &kappa))
    }

    /// No observations.
    pub fn empty(dim: usize) -> Self {
        Self { gram: DMatrix::zeros(dim, dim), xk: DVector::zeros(dim) }
    }

    pub fn dim(&self) -> usize {
        self.xk.len()
    }
}

pub(crate) fn weighted_stats(x: &DMatrix<f64>, omega: &[f64], kappa: &[f64]) -> NeuronStats {
    let (t, d) = x.shape();
    let mut scaled = x.clone();
    for mut col in scaled.column_iter_mut() {
        for (v, w) in col.iter_mut().zip(omega) {
            *v *= w;
        }
    }
    let mut gram = DMatrix::<f64>::zeros(d, d);
    if t > 0 {
        // gram = X^T (Omega X); X is column-major T x D.
        unsafe {
            matrixmultiply::dgemm(
                d,
                t,
                d,
                1.0,
                x.as_ptr(),
                t as isize,
                1,
                scaled.as_ptr(),
                1,
                t as isize,
                0.0,
                gram.as_mut_ptr(),
                1,
                d as isize,
            );
        }
    }
    let xk = x.tr_mul(&DVector::from_column_slice(kappa));
    NeuronStats { gram, xk }
}

/// Exact Gaussian conditional of the active weights.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightPosterior {
    /// Coordinates of `w_n` covered, in increasing order.
    pub coords: Vec<usize>,
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

fn active_coords(mask: &[bool]) -> Vec<usize> {
    mask.iter().enumerate().filter(|(_, &a)| a).map(|(i, _)| i).collect()
}

/// Precision entry `J_ij = P_ij + G_ij`, with `P` block diagonal.
#[inline]
fn precision_entry(stats: &NeuronStats, prior: &NeuronPrior, i: usize, j: usize) -> f64 {
    let g = stats.gram[(i, j)];
    let (bi, oi) = block_of(i, prior.k);
    let (bj, oj) = block_of(j, prior.k);
    if bi == bj {
        g + prior.prec_blocks[bi][(oi, oj)]
    } else {
        g
    }
}

#[inline]
fn block_of(i: usize, k: usize) -> (usize, usize) {
    if i == 0 {
        (0, 0)
    } else {
        (1 + (i - 1) / k, (i - 1) % k)
    }
}

#[inline]
fn linear_entry(stats: &NeuronStats, prior: &NeuronPrior, i: usize) -> f64 {
    prior.prec_mean[i] + stats.xk[i]
}

/// `Sigma~ = [Sigma^{-1} + (X^T Omega X) (.) a a^T]^{-1}` and
/// `mu~ = Sigma~ [Sigma^{-1} mu + (X^T kappa) (.) a]`, restricted to coordinates with `mask = true`.
pub fn weight_posterior(stats: &NeuronStats, prior: &NeuronPrior, mask: &[bool]) -> Result<WeightPosterior> {
    let d = prior.dim();
    if mask.len() != d || stats.dim() != d {
        return Err(shape_err!("mask {}, statistics {}, prior {d}", mask.len(), stats.dim()));
    }
    if !mask[0] {
        return Err(Error::Domain("the bias coordinate must be active".into()));
    }
    let coords = active_coords(mask);
    let p = coords.len();
    let j = DMatrix::from_fn(p, p, |a, b| precision_entry(stats, prior, coords[a], coords[b]));
    let h = DVector::from_fn(p, |a, _| linear_entry(stats, prior, coords[a]));
    let chol = j.clone().cholesky().ok_or_else(|| {
        let diag_min = j.diagonal().min();
        Error::Numerical(format!(
            "posterior precision over {p} active coordinates is not positive definite (smallest diagonal {diag_min:e})"
        ))
    })?;
    let mean = chol.solve(&h);
    let cov = chol.inverse();
    Ok(WeightPosterior { coords, mean, cov })
}

/// An exact draw from `N(mean, cov)` through a Cholesky factor.
pub fn sample_weights<R: Rng + ?Sized>(post: &WeightPosterior, rng: &mut R) -> Result<DVector<f64>> {
    let l = stats::cholesky(&post.cov)?;
    Ok(stats::mvn_from_chol(&post.mean, &l, rng))
}

/// Lower Cholesky factor of the active-set precision, kept in sync with the
/// set of active sources while entries are toggled.
///
/// Rows are ordered as: bias, then one `K`-row block per active source in
/// the order the sources were activated. `z = L^{-1} h` is kept alongside.
#[derive(Debug, Clone)]
pub struct ActiveFactor {
    k: usize,
    cap: usize,
    /// Row-major `cap x cap`; only the lower triangle of the leading `dim x dim` block is meaningful.
    l: Vec<f64>,
    coords: Vec<usize>,
    sources: Vec<usize>,
    z: Vec<f64>,
    toggles: usize,
}

/// The pieces needed to score and then append one candidate source block.
struct Candidate {
    /// `L^{-1} J_{A,m}`, one column per row of `y` (row-major `K x d`).
    y: Vec<f64>,
    /// Lower Cholesky factor of the Schur complement (row-major `K x K`).
    s_chol: Vec<f64>,
    /// `L_S^{-1} r`.
    v: Vec<f64>,
    /// `log Z(on) - log Z(off)` without the prior odds.
    log_evidence: f64,
}

impl ActiveFactor {
    /// Factor the precision over the bias and the given sources from scratch.
    pub fn new(stats: &NeuronStats, prior: &NeuronPrior, sources: &[usize]) -> Result<Self> {
        let k = prior.k;
        let cap = prior.dim();
        let mut coords = vec![0];
        for &m in sources {
            coords.extend(1 + m * k..1 + (m + 1) * k);
        }
        let d = coords.len();
        let j = DMatrix::from_fn(d, d, |a, b| precision_entry(stats, prior, coords[a], coords[b]));
        let chol = j.cholesky().ok_or_else(|| {
            Error::Numerical(format!("precision over active sources {sources:?} is not positive definite"))
        })?;
        let lm = chol.l();
        let mut l = vec![0.0; cap * cap];
        for r in 0..d {
            for c in 0..=r {
                l[r * cap + c] = lm[(r, c)];
            }
        }
        let mut f = Self { k, cap, l, coords, sources: sources.to_vec(), z: Vec::with_capacity(cap), toggles: 0 };
        f.refresh_z(stats, prior);
        Ok(f)
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    /// Active sources in factor order.
    pub fn sources(&self) -> &[usize] {
        &self.sources
    }

    /// Coordinates of `w_n` in factor order.
    pub fn coords(&self) -> &[usize] {
        &self.coords
    }

    /// `log |J_A|`.
    pub fn log_det(&self) -> f64 {
        (0..self.dim()).map(|i| 2.0 * self.l[i * self.cap + i].ln()).sum()
    }

    /// Posterior mean over the active coordinates, in factor order.
    pub fn mean(&self) -> Vec<f64> {
        let mut v = self.z.clone();
        self.back_solve(&mut v);
        v
    }

    fn refresh_z(&mut self, stats: &NeuronStats, prior: &NeuronPrior) {
        let d = self.dim();
        self.z.clear();
        self.z.extend(self.coords.iter().map(|&c| linear_entry(stats, prior, c)));
        let cap = self.cap;
        for i in 0..d {
            let row = &self.l[i * cap..i * cap + i];
            let s: f64 = row.iter().zip(&self.z[..i]).map(|(a, b)| a * b).sum();
            self.z[i] = (self.z[i] - s) / self.l[i * cap + i];
        }
    }

    fn forward_solve(&self, b: &mut [f64]) {
        let cap = self.cap;
        for i in 0..b.len() {
            let row = &self.l[i * cap..i * cap + i];
            let s: f64 = row.iter().zip(&b[..i]).map(|(a, c)| a * c).sum();
            b[i] = (b[i] - s) / self.l[i * cap + i];
        }
    }

    /// Solve `L^T x = b` in place.
    fn back_solve(&self, b: &mut [f64]) {
        let cap = self.cap;
        for i in (0..b.len()).rev() {
            b[i] /= self.l[i * cap + i];
            let bi = b[i];
            let row = &self.l[i * cap..i * cap + i];
            for (bj, lij) in b[..i].iter_mut().zip(row) {
                *bj -= lij * bi;
            }
        }
    }

    fn position(&self, m: usize) -> Option<usize> {
        self.sources.iter().position(|&s| s == m)
    }

    /// Drop the block of source `m`: a rank-`K` update of the trailing factor, then compaction.
    fn remove(&mut self, pos: usize, stats: &NeuronStats, prior: &NeuronPrior) {
        let (k, cap, d) = (self.k, self.cap, self.dim());
        let s = 1 + pos * k;
        let e = s + k;
        let mut x = vec![0.0; d - e];
        for j in s..e {
            for i in e..d {
                x[i - e] = self.l[i * cap + j];
            }
            rank_one_update(&mut self.l, cap, e, d, &mut x);
        }
        for i in e..d {
            let (src, dst) = (i * cap, (i - k) * cap);
            self.l.copy_within(src..src + s, dst);
            self.l.copy_within(src + e..src + i + 1, dst + s);
        }
        self.coords.drain(s..e);
        self.sources.remove(pos);
        self.refresh_z(stats, prior);
        self.toggles += 1;
    }

    /// Schur complement and evidence ratio for adding source `m`. `None` if the
    /// Schur complement is not numerically positive definite.
    fn candidate(&self, stats: &NeuronStats, prior: &NeuronPrior, m: usize) -> Option<Candidate> {
        let (k, d) = (self.k, self.dim());
        let c0 = 1 + m * k;
        let mut y = vec![0.0; k * d];
        for a in 0..k {
            let col = &mut y[a * d..(a + 1) * d];
            for (i, &ci) in self.coords.iter().enumerate() {
                col[i] = stats.gram[(ci, c0 + a)];
            }
            self.forward_solve(col);
        }
        let pm = &prior.prec_blocks[m + 1];
        let mut s = vec![0.0; k * k];
        let mut r = vec![0.0; k];
        for a in 0..k {
            let ya = &y[a * d..(a + 1) * d];
            for b in 0..=a {
                let yb = &y[b * d..(b + 1) * d];
                let dot: f64 = ya.iter().zip(yb).map(|(p, q)| p * q).sum();
                s[a * k + b] = stats.gram[(c0 + a, c0 + b)] + pm[(a, b)] - dot;
            }
            let dz: f64 = ya.iter().zip(&self.z).map(|(p, q)| p * q).sum();
            r[a] = linear_entry(stats, prior, c0 + a) - dz;
        }
        // in-place Cholesky of the K x K Schur complement
        for a in 0..k {
            for b in 0..=a {
                let mut v = s[a * k + b];
                for c in 0..b {
                    v -= s[a * k + c] * s[b * k + c];
                }
                if a == b {
                    if !(v > 0.0) || !v.is_finite() {
                        return None;
                    }
                    s[a * k + a] = v.sqrt();
                } else {
                    s[a * k + b] = v / s[b * k + b];
                }
            }
        }
        let mut v = r;
        for a in 0..k {
            let mut t = v[a];
            for c in 0..a {
                t -= s[a * k + c] * v[c];
            }
            v[a] = t / s[a * k + a];
        }
        let log_det_s: f64 = (0..k).map(|a| 2.0 * s[a * k + a].ln()).sum();
        let quad: f64 = v.iter().map(|x| x * x).sum();
        let log_evidence = 0.5 * (prior.block_evidence[m + 1] - log_det_s + quad);
        Some(Candidate { y, s_chol: s, v, log_evidence })
    }

    fn append(&mut self, m: usize, cand: Candidate) {
        let (k, cap, d) = (self.k, self.cap, self.dim());
        for a in 0..k {
            let row = (d + a) * cap;
            for i in 0..d {
                self.l[row + i] = cand.y[a * d + i];
            }
            for b in 0..=a {
                self.l[row + d + b] = cand.s_chol[a * k + b];
            }
        }
        self.coords.extend(1 + m * k..1 + (m + 1) * k);
        self.sources.push(m);
        self.z.extend_from_slice(&cand.v);
        self.toggles += 1;
    }

    /// `w_A = L^{-T} (z + eps)`, a draw from the active-weight conditional, scattered
    /// into a full `w_n` whose inactive blocks are drawn from the prior.
    pub fn draw_weights<R: Rng + ?Sized>(&self, prior: &NeuronPrior, rng: &mut R) -> Vec<f64> {
        let mut v: Vec<f64> = self.z.iter().map(|z| z + stats::std_normal(rng)).collect();
        self.back_solve(&mut v);
        let mut w = vec![0.0; prior.dim()];
        let mut active = vec![false; prior.rho.len()];
        for &m in &self.sources {
            active[m] = true;
        }
        for (m, &on) in active.iter().enumerate() {
            if !on {
                let draw = prior.sample_block(m + 1, rng);
                let r = NeuronPrior::range_of(m + 1, self.k);
                w[r].copy_from_slice(draw.as_slice());
            }
        }
        for (&c, val) in self.coords.iter().zip(v) {
            w[c] = val;
        }
        w
    }
}

/// `L L^T + x x^T` on the trailing block `[off, end)` of a row-major factor. Overwrites `x`.
fn rank_one_update(l: &mut [f64], cap: usize, off: usize, end: usize, x: &mut [f64]) {
    let n = end - off;
    for kk in 0..n {
        let a = off + kk;
        let lkk = l[a * cap + a];
        let xk = x[kk];
        let r = lkk.hypot(xk);
        let c = r / lkk;
        let s = xk / lkk;
        l[a * cap + a] = r;
        for i in kk + 1..n {
            let idx = (off + i) * cap + a;
            let lik = (l[idx] + s * x[i]) / c;
            l[idx] = lik;
            x[i] = c * x[i] - s * lik;
        }
    }
}

/// Sweep the incoming connections `a_{m->n}`, `m = 0..N`, drawing each from its
/// two-point conditional with the weights integrated out. `edges` is updated in
/// place; the returned factor describes the final active set.
///
/// The factor is rebuilt from scratch after `refactor_every` toggles, or when a
/// Schur complement fails to be positive definite.
pub fn collapsed_sample_adjacency<R: Rng + ?Sized>(
    stats: &NeuronStats,
    prior: &NeuronPrior,
    edges: &mut [bool],
    refactor_every: usize,
    rng: &mut R,
) -> Result<ActiveFactor> {
    let n_src = prior.rho.len();
    if edges.len() != n_src || stats.dim() != prior.dim() {
        return Err(shape_err!("{} edges, {} statistics, prior over {n_src} sources", edges.len(), stats.dim()));
    }
    let initial: Vec<usize> = (0..n_src).filter(|&m| edges[m]).collect();
    let mut f = ActiveFactor::new(stats, prior, &initial)?;
    for m in 0..n_src {
        if f.toggles >= refactor_every.max(1) {
            f = ActiveFactor::new(stats, prior, &f.sources.clone())?;
        }
        if let Some(pos) = f.position(m) {
            f.remove(pos, stats, prior);
        }
        let rho = prior.rho[m];
        if rho <= 0.0 {
            edges[m] = false;
            continue;
        }
        let cand = match f.candidate(stats, prior, m) {
            Some(c) => c,
            None => {
                f = ActiveFactor::new(stats, prior, &f.sources.clone())?;
                f.candidate(stats, prior, m).ok_or_else(|| {
                    Error::Numerical(format!(
                        "Schur complement for source {m} given active sources {:?} is not positive definite",
                        f.sources
                    ))
                })?
            }
        };
        let on = if rho >= 1.0 {
            true
        } else {
            let log_odds = rho.ln() - (-rho).ln_1p() + cand.log_evidence;
            rng.random::<f64>() < sigmoid(log_odds)
        };
        edges[m] = on;
        if on {
            f.append(m, cand);
        }
    }
    Ok(f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{
        AdjacencyPrior, BiasPrior, GaussianBlock, Hyperpriors, PriorSpec, SelfEdges, WeightPrior,
    };
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_stats(t: usize, d: usize, seed: u64) -> (DMatrix<f64>, NeuronStats) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = DMatrix::from_fn(t, d, |_, j| if j == 0 { 1.0 } else { stats::std_normal(&mut rng) });
        let omega: Vec<f64> = (0..t).map(|_| rng.random::<f64>() + 0.1).collect();
        let kappa: Vec<f64> = (0..t).map(|_| rng.random::<f64>() - 0.5).collect();
        let st = weighted_stats(&x, &omega, &kappa);
        (x, st)
    }

    fn prior(n: usize, k: usize, rho: f64) -> NeuronPrior {
        let mut cov = vec![0.0; k * k];
        for i in 0..k {
            cov[i * k + i] = 0.5;
            if i + 1 < k {
                cov[i * k + i + 1] = 0.1;
                cov[(i + 1) * k + i] = 0.1;
            }
        }
        let spec = PriorSpec {
            neurons: n,
            k,
            adjacency: AdjacencyPrior::Independent { rho },
            weights: WeightPrior::Independent(GaussianBlock { mean: vec![0.2; k], cov }),
            bias: BiasPrior { mean: -1.0, var: 2.0 },
            hyper: Hyperpriors::default_for(k),
            self_edges: SelfEdges::Prior,
        };
        spec.neuron_prior(0).unwrap()
    }

    #[test]
    fn gram_matches_direct_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = DMatrix::from_fn(37, 5, |_, _| stats::std_normal(&mut rng));
        let omega: Vec<f64> = (0..37).map(|i| 0.1 + i as f64 / 10.0).collect();
        let kappa: Vec<f64> = (0..37).map(|i| i as f64 - 18.0).collect();
        let st = weighted_stats(&x, &omega, &kappa);
        let direct = x.transpose() * DMatrix::from_diagonal(&DVector::from_vec(omega)) * &x;
        assert!((st.gram - direct).abs().max() < 1e-10);
        let xk = x.transpose() * DVector::from_vec(kappa);
        assert!((st.xk - xk).abs().max() < 1e-10);
    }

    #[test]
    fn bias_only_posterior_is_one_dimensional_conjugate() {
        let (_, st) = random_stats(50, 7, 2);
        let p = prior(3, 2, 0.5);
        let mut mask = vec![false; 7];
        mask[0] = true;
        let post = weight_posterior(&st, &p, &mask).unwrap();
        let prec = 1.0 / 2.0 + st.gram[(0, 0)];
        let mean = (-1.0 / 2.0 + st.xk[0]) / prec;
        assert_eq!(post.coords, vec![0]);
        assert!((post.mean[0] - mean).abs() < 1e-12);
        assert!((post.cov[(0, 0)] - 1.0 / prec).abs() < 1e-12);
    }

    #[test]
    fn no_data_recovers_prior() {
        let p = prior(3, 2, 0.5);
        let st = NeuronStats::empty(7);
        let mask = vec![true, false, false, true, true, true, true];
        let post = weight_posterior(&st, &p, &mask).unwrap();
        let full = p.dense_covariance();
        for (a, &i) in post.coords.iter().enumerate() {
            assert!((post.mean[a] - p.mean[i]).abs() < 1e-12);
            for (b, &j) in post.coords.iter().enumerate() {
                assert!((post.cov[(a, b)] - full[(i, j)]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn inactive_bias_is_rejected() {
        let p = prior(2, 1, 0.5);
        let st = NeuronStats::empty(3);
        assert!(weight_posterior(&st, &p, &[false, true, true]).is_err());
        assert!(weight_posterior(&st, &p, &[true, true]).is_err());
    }

    #[test]
    fn incremental_factor_matches_direct_factorization() {
        let (n, k) = (6, 2);
        let (_, st) = random_stats(80, 1 + n * k, 4);
        let p = prior(n, k, 0.5);
        let mut f = ActiveFactor::new(&st, &p, &[1, 4]).unwrap();
        for &m in &[0, 5, 2] {
            let c = f.candidate(&st, &p, m).unwrap();
            f.append(m, c);
        }
        let pos = f.position(4).unwrap();
        f.remove(pos, &st, &p);
        let pos = f.position(1).unwrap();
        f.remove(pos, &st, &p);
        let direct = ActiveFactor::new(&st, &p, f.sources()).unwrap();
        assert_eq!(f.coords(), direct.coords());
        for i in 0..f.dim() {
            for j in 0..=i {
                assert!((f.l[i * f.cap + j] - direct.l[j + i * direct.cap]).abs() < 1e-10);
            }
            assert!((f.z[i] - direct.z[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn evidence_ratio_matches_log_determinants() {
        let (n, k) = (4, 2);
        let (_, st) = random_stats(60, 1 + n * k, 8);
        let p = prior(n, k, 0.5);
        let log_z = |sources: &[usize]| {
            let f = ActiveFactor::new(&st, &p, sources).unwrap();
            let mut prior_term = p.block_evidence[0];
            for &m in sources {
                prior_term += p.block_evidence[m + 1];
            }
            let zz: f64 = f.z.iter().map(|v| v * v).sum();
            0.5 * (prior_term - f.log_det() + zz)
        };
        let f = ActiveFactor::new(&st, &p, &[0, 3]).unwrap();
        let c = f.candidate(&st, &p, 2).unwrap();
        assert!((c.log_evidence - (log_z(&[0, 3, 2]) - log_z(&[0, 3]))).abs() < 1e-9);
    }

    #[test]
    fn factor_mean_matches_posterior_mean() {
        let (n, k) = (5, 1);
        let (_, st) = random_stats(40, 1 + n, 3);
        let p = prior(n, k, 0.5);
        let f = ActiveFactor::new(&st, &p, &[3, 1]).unwrap();
        let mut mask = vec![false; 1 + n];
        mask[0] = true;
        mask[2] = true;
        mask[4] = true;
        let post = weight_posterior(&st, &p, &mask).unwrap();
        let mean = f.mean();
        // factor order is bias, source 3, source 1
        assert!((mean[0] - post.mean[0]).abs() < 1e-10);
        assert!((mean[1] - post.mean[2]).abs() < 1e-10);
        assert!((mean[2] - post.mean[1]).abs() < 1e-10);
    }

    #[test]
    fn forced_probabilities_short_circuit() {
        let (n, k) = (4, 1);
        let (_, st) = random_stats(30, 1 + n, 5);
        let mut p = prior(n, k, 0.5);
        p.rho = vec![1.0, 0.0, 1.0, 0.0];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..20 {
            let mut edges = vec![false, true, false, true];
            collapsed_sample_adjacency(&st, &p, &mut edges, 4, &mut rng).unwrap();
            assert_eq!(edges, vec![true, false, true, false]);
        }
    }

    #[test]
    fn weight_draw_covariance_matches_identity() {
        let post = WeightPosterior { coords: vec![0, 1, 2], mean: DVector::zeros(3), cov: DMatrix::identity(3, 3) };
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 100_000;
        let mut acc = DMatrix::<f64>::zeros(3, 3);
        for _ in 0..n {
            let w = sample_weights(&post, &mut rng).unwrap();
            acc += &w * w.transpose();
        }
        acc /= n as f64;
        // sd of a sample second moment is sqrt(2/n) on the diagonal, sqrt(1/n) off it
        for i in 0..3 {
            for j in 0..3 {
                let target = if i == j { 1.0 } else { 0.0 };
                let sd = if i == j { (2.0 / n as f64).sqrt() } else { (1.0 / n as f64).sqrt() };
                assert!((acc[(i, j)] - target).abs() < 3.5 * sd, "({i},{j}) {}", acc[(i, j)]);
            }
        }
        let one = WeightPosterior { coords: vec![0], mean: DVector::from_element(1, 0.3), cov: DMatrix::from_element(1, 1, 4.0) };
        let a = sample_weights(&one, &mut ChaCha8Rng::seed_from_u64(2)).unwrap()[0];
        let z = stats::std_normal(&mut ChaCha8Rng::seed_from_u64(2));
        assert_eq!(a, 0.3 + 2.0 * z);
    }
}
