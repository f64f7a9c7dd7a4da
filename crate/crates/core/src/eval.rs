//! Model comparison by held-out-neuron predictive likelihood, and recovery
//! metrics against a known ground truth.
//!
//! The predictive likelihood of a held-out spike train `s*` is estimated as
//! `log (1/Q) sum_q p(s* | z*_q, S)`, where each `z*_q` (bias, latents,
//! incoming edges and weights of the held-out neuron) is drawn from the
//! network prior conditioned on the `q`-th posterior sample. The held-out
//! neuron's activation uses the observed spike history; it sends nothing back
//! to the observed neurons.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::activation::{filter_spikes, filter_train, FilteredSpikes};
use crate::chain::{Chain, ChainSample};
use crate::error::{shape_err, Error, Result};
use crate::network::{AdjacencyPrior, PriorSpec, WeightPrior};
use crate::rng::{ChainRng, Phase, Streams};
use crate::spikes::{CountModel, ObsKind, SpikeData};
use crate::stats;

/// Substream indices for the held-out draws. Keeping one stream per purpose
/// lets models that share a component reuse the same random numbers.
const STREAM_BIAS: u64 = 0;
const STREAM_CLASS: u64 = 1;
const STREAM_LOCATION: u64 = 2;
const STREAM_EDGES: u64 = 3;
const STREAM_WEIGHTS: u64 = 4;
const STREAM_NU: u64 = 5;

/// A Monte Carlo estimate of a held-out log predictive likelihood, in nats.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictiveEstimate {
    /// `log sum_q exp(terms_q) - log Q`.
    pub value: f64,
    pub q: usize,
    /// `log p(s* | z*_q, S)` per posterior sample.
    pub terms: Vec<f64>,
    /// Delta-method standard error of `value`.
    pub std_error: f64,
}

impl PredictiveEstimate {
    pub fn from_terms(terms: Vec<f64>) -> Result<Self> {
        if terms.is_empty() {
            return Err(Error::Usage("predictive estimate needs at least one term".into()));
        }
        let q = terms.len();
        let value = stats::log_sum_exp(&terms) - (q as f64).ln();
        // Ratios exp(term - value) have mean one; the standard error of the
        // log of their mean is their standard deviation over sqrt(Q).
        let std_error = if q > 1 {
            let ratios: Vec<f64> = terms.iter().map(|t| (t - value).exp()).collect();
            let var = ratios.iter().map(|r| (r - 1.0).powi(2)).sum::<f64>() / (q - 1) as f64;
            (var / q as f64).sqrt()
        } else {
            0.0
        };
        Ok(Self { value, q, terms, std_error })
    }
}

/// The held-out neuron's prior conditional, realized for one posterior sample.
struct HeldOutDraw {
    bias: f64,
    /// Incoming edges from each observed neuron, then the self-edge.
    edges: Vec<bool>,
    /// `(N + 1) x K` incoming weights, same order as `edges`.
    weights: Vec<f64>,
    model: CountModel,
}

/// `spec` with one extra neuron whose latents are drawn from their priors.
fn extend_spec(spec: &PriorSpec, class_rng: &mut ChainRng, loc_rng: &mut ChainRng) -> PriorSpec {
    let mut ext = spec.clone();
    ext.neurons += 1;
    match &mut ext.adjacency {
        AdjacencyPrior::Sbm(s) => {
            let c = draw_class(&s.pi, class_rng);
            s.assignments.push(c);
        }
        AdjacencyPrior::Distance(d) => {
            let sd = d.scale2.sqrt();
            for _ in 0..d.dim {
                d.locations.push(sd * stats::std_normal(loc_rng));
            }
        }
        AdjacencyPrior::Dense | AdjacencyPrior::Independent { .. } => {}
    }
    match &mut ext.weights {
        WeightPrior::Sbm(s) => {
            let c = draw_class(&s.pi, class_rng);
            s.assignments.push(c);
        }
        WeightPrior::Distance(d) => {
            let sd = d.scale2.sqrt();
            for _ in 0..d.dim {
                d.locations.push(sd * stats::std_normal(loc_rng));
            }
        }
        WeightPrior::Independent(_) => {}
    }
    ext
}

fn draw_class<R: Rng + ?Sized>(pi: &[f64], rng: &mut R) -> usize {
    let logpi: Vec<f64> = pi.iter().map(|p| p.ln()).collect();
    stats::categorical_log(&logpi, rng)
}

fn draw_held_out(chain: &Chain, sample: &ChainSample, streams: &Streams, q: u64) -> Result<HeldOutDraw> {
    let spec = &sample.spec;
    let (n, k) = (spec.neurons, spec.k);
    let rng = |purpose| streams.rng(Phase::Predict, q, purpose);

    let mut bias_rng = rng(STREAM_BIAS);
    let bias = spec.bias.mean + spec.bias.var.sqrt() * stats::std_normal(&mut bias_rng);

    let ext = extend_spec(spec, &mut rng(STREAM_CLASS), &mut rng(STREAM_LOCATION));

    let mut edge_rng = rng(STREAM_EDGES);
    let mut weight_rng = rng(STREAM_WEIGHTS);
    let mut edges = Vec::with_capacity(n + 1);
    let mut weights = Vec::with_capacity((n + 1) * k);
    for m in 0..=n {
        let u: f64 = edge_rng.random();
        edges.push(u < ext.edge_probability(m, n));
        let (mu, cov) = ext.weight_moments(m, n);
        let w = stats::mvn_from_chol(&mu, &stats::cholesky(&cov)?, &mut weight_rng);
        weights.extend(w.iter());
    }

    let model = match chain.obs_kind {
        ObsKind::Bernoulli => CountModel::bernoulli(),
        ObsKind::Binomial => {
            let nu = sample.nu.iter().copied().fold(1.0, f64::max);
            CountModel::new(ObsKind::Binomial, nu)?
        }
        ObsKind::NegBinomial => {
            let nu = stats::gamma(chain.nu_prior.shape, chain.nu_prior.rate, &mut rng(STREAM_NU));
            CountModel::new(ObsKind::NegBinomial, nu.max(f64::MIN_POSITIVE))?
        }
    };
    Ok(HeldOutDraw { bias, edges, weights, model })
}

fn held_out_log_likelihood(draw: &HeldOutDraw, shat: &FilteredSpikes, own: &[Vec<f64>], s_star: &[u32]) -> Result<f64> {
    let (n, k) = (shat.neurons(), shat.k());
    let mut psi = vec![draw.bias; s_star.len()];
    for m in 0..=n {
        if !draw.edges[m] {
            continue;
        }
        for kk in 0..k {
            let w = draw.weights[m * k + kk];
            let x = if m < n { shat.column(shat.col(m, kk)) } else { &own[kk][..] };
            for (p, xv) in psi.iter_mut().zip(x) {
                *p += w * xv;
            }
        }
    }
    let mut total = 0.0;
    for (&s, &p) in s_star.iter().zip(&psi) {
        draw.model.check_count(s)?;
        total += draw.model.log_likelihood_unchecked(s, p);
    }
    Ok(total)
}

fn check_inputs(chain: &Chain, s_obs: &SpikeData, s_star: &[u32]) -> Result<()> {
    let Some(n) = chain.neurons() else {
        return Err(Error::Usage("cannot evaluate an empty chain".into()));
    };
    if s_obs.neurons() != n {
        return Err(Error::Usage(format!("chain has {n} neurons but the observed data has {}", s_obs.neurons())));
    }
    if s_star.len() != s_obs.bins() {
        return Err(Error::Usage(format!(
            "held-out train has {} bins but the observed data has {}",
            s_star.len(),
            s_obs.bins()
        )));
    }
    if chain.samples[0].net.k() != chain.basis.k() {
        return Err(shape_err!("chain weights have K = {} but the basis has {}", chain.samples[0].net.k(), chain.basis.k()));
    }
    Ok(())
}

fn predictive_with_filtered(
    chain: &Chain,
    shat: &FilteredSpikes,
    s_star: &[u32],
    seed: u64,
) -> Result<PredictiveEstimate> {
    let own = filter_train(s_star, &chain.basis);
    let streams = Streams::new(seed);
    let terms = chain
        .samples
        .par_iter()
        .enumerate()
        .map(|(q, sample)| {
            let draw = draw_held_out(chain, sample, &streams, q as u64)?;
            held_out_log_likelihood(&draw, shat, &own, s_star)
        })
        .collect::<Result<Vec<f64>>>()?;
    PredictiveEstimate::from_terms(terms)
}

/// Held-out-neuron log predictive likelihood of `s_star` given a chain fit to `s_obs`.
/// Deterministic in `seed`; chains that share a model component draw it from the
/// same random numbers.
pub fn predictive_ll_heldout(chain: &Chain, s_obs: &SpikeData, s_star: &[u32], seed: u64) -> Result<PredictiveEstimate> {
    check_inputs(chain, s_obs, s_star)?;
    let shat = filter_spikes(s_obs, &chain.basis);
    predictive_with_filtered(chain, &shat, s_star, seed)
}

/// One model's predictive scores over a set of held-out neurons.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelScore {
    pub name: String,
    pub per_neuron: Vec<PredictiveEstimate>,
    /// Mean predictive log likelihood per held-out neuron, in nats.
    pub mean: f64,
    /// Monte Carlo standard error of `mean`.
    pub std_error: f64,
    pub bins: usize,
}

impl ModelScore {
    /// Nats per held-out neuron per time bin.
    pub fn per_bin(&self) -> f64 {
        self.mean / self.bins as f64
    }

    pub fn per_bin_std_error(&self) -> f64 {
        self.std_error / self.bins as f64
    }
}

/// Models ranked by predictive likelihood, best first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub ranking: Vec<ModelScore>,
}

impl Comparison {
    pub fn score(&self, name: &str) -> Option<&ModelScore> {
        self.ranking.iter().find(|s| s.name == name)
    }

    /// `(mean_a - mean_b, sqrt(se_a^2 + se_b^2))`.
    pub fn margin(&self, a: &str, b: &str) -> Option<(f64, f64)> {
        let (a, b) = (self.score(a)?, self.score(b)?);
        Some((a.mean - b.mean, (a.std_error.powi(2) + b.std_error.powi(2)).sqrt()))
    }

    /// Tab-separated ranking with a header stating the units.
    pub fn table(&self) -> String {
        let mut out = String::from("# predictive log likelihood, nats per held-out neuron per time bin\n");
        out.push_str("rank\tmodel\tll_per_bin\tse_per_bin\tll_per_neuron\tse_per_neuron\n");
        for (i, s) in self.ranking.iter().enumerate() {
            out.push_str(&format!(
                "{}\t{}\t{:.8}\t{:.8}\t{:.4}\t{:.4}\n",
                i + 1,
                s.name,
                s.per_bin(),
                s.per_bin_std_error(),
                s.mean,
                s.std_error
            ));
        }
        out
    }
}

/// Score every fit on each held-out neuron (columns of `heldout`) and rank them.
/// Held-out neuron `h` uses the same seed under every model.
pub fn compare_models(fits: &[(&str, &Chain)], s_obs: &SpikeData, heldout: &SpikeData, seed: u64) -> Result<Comparison> {
    if fits.is_empty() {
        return Err(Error::Usage("no models to compare".into()));
    }
    if heldout.neurons() == 0 {
        return Err(Error::Usage("no held-out neurons".into()));
    }
    let trains: Vec<Vec<u32>> = (0..heldout.neurons()).map(|h| heldout.column(h)).collect();
    let root = Streams::new(seed);
    let mut ranking = Vec::with_capacity(fits.len());
    for &(name, chain) in fits {
        for train in &trains {
            check_inputs(chain, s_obs, train)?;
        }
        if chain.basis != fits[0].1.basis {
            return Err(Error::Usage(format!("model {name} uses a different basis from {}", fits[0].0)));
        }
        let shat = filter_spikes(s_obs, &chain.basis);
        let per_neuron = trains
            .iter()
            .enumerate()
            .map(|(h, train)| predictive_with_filtered(chain, &shat, train, root.child(Phase::Predict, h as u64).seed()))
            .collect::<Result<Vec<_>>>()?;
        let h = per_neuron.len() as f64;
        let mean = per_neuron.iter().map(|e| e.value).sum::<f64>() / h;
        let std_error = per_neuron.iter().map(|e| e.std_error.powi(2)).sum::<f64>().sqrt() / h;
        ranking.push(ModelScore { name: name.to_string(), per_neuron, mean, std_error, bins: s_obs.bins() });
    }
    ranking.sort_by(|a, b| b.mean.total_cmp(&a.mean));
    Ok(Comparison { ranking })
}

/// Rank-based area under the ROC curve of edge marginals against the true
/// adjacency, both row-major `N x N`. Self-edges are not scored. Returns
/// `None` when the truth has no edges or no non-edges.
pub fn adjacency_auc(marginals: &[f64], truth: &[bool], neurons: usize) -> Result<Option<f64>> {
    if marginals.len() != neurons * neurons || truth.len() != neurons * neurons {
        return Err(shape_err!(
            "expected {} entries, got {} marginals and {} truth values",
            neurons * neurons,
            marginals.len(),
            truth.len()
        ));
    }
    let mut scored: Vec<(f64, bool)> = (0..neurons)
        .flat_map(|m| (0..neurons).filter(move |&n| n != m).map(move |n| m * neurons + n))
        .map(|i| (marginals[i], truth[i]))
        .collect();
    let pos = scored.iter().filter(|s| s.1).count();
    let neg = scored.len() - pos;
    if pos == 0 || neg == 0 {
        return Ok(None);
    }
    scored.sort_by(|a, b| a.0.total_cmp(&b.0));
    // Mann-Whitney U with mid-ranks for ties.
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < scored.len() {
        let mut j = i;
        while j < scored.len() && scored[j].0 == scored[i].0 {
            j += 1;
        }
        let mid = (i + j + 1) as f64 / 2.0;
        rank_sum += mid * scored[i..j].iter().filter(|s| s.1).count() as f64;
        i = j;
    }
    let (p, q) = (pos as f64, neg as f64);
    Ok(Some((rank_sum - p * (p + 1.0) / 2.0) / (p * q)))
}

/// Result of comparing inferred locations with true ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceRecovery {
    /// Pearson correlation of true and posterior-mean pairwise distances.
    pub correlation: f64,
    /// `(true, inferred)` distance for each unordered pair `m < n`.
    pub pairs: Vec<(f64, f64)>,
    pub dim: usize,
    /// Posterior mean of the per-sample aligned locations, row-major `N x D`.
    pub aligned: Vec<f64>,
    /// Sum of squared differences between `aligned` and the truth.
    pub residual: f64,
}

fn pairwise_distances(locs: &[f64], neurons: usize, dim: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(neurons * (neurons - 1) / 2);
    for m in 0..neurons {
        for n in m + 1..neurons {
            out.push(crate::network::sq_dist(locs, dim, m, n).sqrt());
        }
    }
    out
}

pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(shape_err!("pearson needs two equal-length series of length >= 2, got {} and {}", x.len(), y.len()));
    }
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Usage("correlation is undefined for a constant series".into()));
    }
    Ok(sxy / (sxx * syy).sqrt())
}

/// Similarity transform (rotation or reflection, isotropic scale, translation)
/// of `x` that best matches `target` in least squares. Both row-major `N x D`.
pub fn procrustes(x: &[f64], target: &[f64], dim: usize) -> Result<Vec<f64>> {
    if x.len() != target.len() || dim == 0 || x.len() % dim != 0 {
        return Err(shape_err!("procrustes inputs have {} and {} entries with D = {dim}", x.len(), target.len()));
    }
    let n = x.len() / dim;
    let xm = DMatrix::from_row_slice(n, dim, x);
    let ym = DMatrix::from_row_slice(n, dim, target);
    let xc = DVector::from_iterator(dim, xm.column_iter().map(|c| c.mean()));
    let yc = DVector::from_iterator(dim, ym.column_iter().map(|c| c.mean()));
    let x0 = DMatrix::from_fn(n, dim, |i, j| xm[(i, j)] - xc[j]);
    let y0 = DMatrix::from_fn(n, dim, |i, j| ym[(i, j)] - yc[j]);
    let norm = x0.norm_squared();
    if norm == 0.0 {
        return Err(Error::Usage("cannot align locations that all coincide".into()));
    }
    let svd = (x0.transpose() * &y0).svd(true, true);
    let (u, vt) = (svd.u.expect("requested"), svd.v_t.expect("requested"));
    let rot = u * vt;
    let scale = svd.singular_values.sum() / norm;
    let aligned = x0 * rot * scale;
    let mut out = Vec::with_capacity(n * dim);
    for i in 0..n {
        for j in 0..dim {
            out.push(aligned[(i, j)] + yc[j]);
        }
    }
    Ok(out)
}

/// Compare location samples (each row-major `N x D`) with the true locations.
pub fn distance_recovery(samples: &[Vec<f64>], truth: &[f64], dim: usize) -> Result<DistanceRecovery> {
    if samples.is_empty() {
        return Err(Error::Usage("no location samples".into()));
    }
    if dim == 0 || truth.len() % dim != 0 {
        return Err(shape_err!("true locations have {} entries, not a multiple of D = {dim}", truth.len()));
    }
    let neurons = truth.len() / dim;
    if neurons < 3 {
        return Err(Error::Usage(format!("distance recovery needs at least 3 neurons, got {neurons}")));
    }
    if let Some(s) = samples.iter().find(|s| s.len() != truth.len()) {
        return Err(shape_err!("location sample has {} entries, truth has {}", s.len(), truth.len()));
    }
    let true_d = pairwise_distances(truth, neurons, dim);
    let mut mean_d = vec![0.0; true_d.len()];
    let mut aligned = vec![0.0; truth.len()];
    for s in samples {
        for (acc, d) in mean_d.iter_mut().zip(pairwise_distances(s, neurons, dim)) {
            *acc += d;
        }
        for (acc, v) in aligned.iter_mut().zip(procrustes(s, truth, dim)?) {
            *acc += v;
        }
    }
    let q = samples.len() as f64;
    mean_d.iter_mut().for_each(|d| *d /= q);
    aligned.iter_mut().for_each(|v| *v /= q);
    let correlation = pearson(&true_d, &mean_d)?;
    let residual = aligned.iter().zip(truth).map(|(a, t)| (a - t).powi(2)).sum();
    let pairs = true_d.into_iter().zip(mean_d).collect();
    Ok(DistanceRecovery { correlation, pairs, dim, aligned, residual })
}

/// Fraction of neuron pairs whose same/different-class relation matches the
/// truth, averaged over assignment samples. Invariant to relabeling.
pub fn type_recovery(samples: &[Vec<usize>], truth: &[usize]) -> Result<f64> {
    let n = truth.len();
    if samples.is_empty() || n < 2 {
        return Err(Error::Usage("type recovery needs at least one sample and two neurons".into()));
    }
    let pairs = (n * (n - 1) / 2) as f64;
    let mut total = 0.0;
    for s in samples {
        if s.len() != n {
            return Err(shape_err!("assignment sample has {} entries, truth has {n}", s.len()));
        }
        let mut agree = 0usize;
        for m in 0..n {
            for k in m + 1..n {
                if (s[m] == s[k]) == (truth[m] == truth[k]) {
                    agree += 1;
                }
            }
        }
        total += agree as f64 / pairs;
    }
    Ok(total / samples.len() as f64)
}
