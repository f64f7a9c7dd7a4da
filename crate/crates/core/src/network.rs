//! Spike-and-slab networks and the random-network priors over them.
//!
//! Adjacency priors: dense, independent, stochastic block model, latent
//! distance. Weight priors: independent (one shared Gaussian), stochastic
//! block model, latent distance. Any adjacency prior combines with any
//! weight prior, giving twelve models.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{domain_err, shape_err, Error, Result};
use crate::spikes::sigmoid;
use crate::stats::{self, InvGammaPrior, NigPrior, NiwPrior};

/// Binary adjacency `A`, weights `W` (`N x N x K`), and biases `b`.
///
/// Edge `(m, n)` is the connection from source `m` to target `n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkState {
    neurons: usize,
    k: usize,
    adjacency: Vec<bool>,
    weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl NetworkState {
    pub fn empty(neurons: usize, k: usize) -> Self {
        Self {
            neurons,
            k,
            adjacency: vec![false; neurons * neurons],
            weights: vec![0.0; neurons * neurons * k],
            bias: vec![0.0; neurons],
        }
    }

    pub fn from_parts(neurons: usize, k: usize, adjacency: Vec<bool>, weights: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        if adjacency.len() != neurons * neurons || weights.len() != neurons * neurons * k || bias.len() != neurons {
            return Err(shape_err!("network arrays do not match {neurons} neurons x {k} bases"));
        }
        if weights.iter().chain(&bias).any(|v| !v.is_finite()) {
            return Err(domain_err!("network weights and biases must be finite"));
        }
        Ok(Self { neurons, k, adjacency, weights, bias })
    }

    pub fn neurons(&self) -> usize {
        self.neurons
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// `1 + N K`.
    pub fn dim(&self) -> usize {
        1 + self.neurons * self.k
    }

    #[inline]
    pub fn edge(&self, m: usize, n: usize) -> bool {
        self.adjacency[m * self.neurons + n]
    }

    #[inline]
    pub fn set_edge(&mut self, m: usize, n: usize, on: bool) {
        self.adjacency[m * self.neurons + n] = on;
    }

    #[inline]
    pub fn weight(&self, m: usize, n: usize, k: usize) -> f64 {
        self.weights[(m * self.neurons + n) * self.k + k]
    }

    #[inline]
    pub fn set_weight(&mut self, m: usize, n: usize, k: usize, w: f64) {
        self.weights[(m * self.neurons + n) * self.k + k] = w;
    }

    pub fn weight_vec(&self, m: usize, n: usize) -> &[f64] {
        let i = (m * self.neurons + n) * self.k;
        &self.weights[i..i + self.k]
    }

    pub fn adjacency(&self) -> &[bool] {
        &self.adjacency
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `a_n = [1, a_{0->n} 1_K, ..., a_{N-1->n} 1_K]`.
    pub fn mask(&self, n: usize) -> Vec<bool> {
        let mut mask = Vec::with_capacity(self.dim());
        mask.push(true);
        for m in 0..self.neurons {
            mask.extend(std::iter::repeat(self.edge(m, n)).take(self.k));
        }
        mask
    }

    /// `w_n = [b_n, w_{0->n}, ..., w_{N-1->n}]`.
    pub fn weight_vector(&self, n: usize) -> Vec<f64> {
        let mut w = Vec::with_capacity(self.dim());
        w.push(self.bias[n]);
        for m in 0..self.neurons {
            w.extend_from_slice(self.weight_vec(m, n));
        }
        w
    }

    /// `a_n (.) w_n`.
    pub fn masked_weight_vector(&self, n: usize) -> Vec<f64> {
        let mut w = Vec::with_capacity(self.dim());
        w.push(self.bias[n]);
        for m in 0..self.neurons {
            if self.edge(m, n) {
                w.extend_from_slice(self.weight_vec(m, n));
            } else {
                w.extend(std::iter::repeat(0.0).take(self.k));
            }
        }
        w
    }

    /// Write the incoming connections and weights of neuron `n` from `a_n`, `w_n` vectors.
    pub fn set_incoming(&mut self, n: usize, edges: &[bool], w: &[f64]) {
        self.bias[n] = w[0];
        for m in 0..self.neurons {
            self.set_edge(m, n, edges[m]);
            for k in 0..self.k {
                self.set_weight(m, n, k, w[1 + m * self.k + k]);
            }
        }
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().filter(|&&a| a).count()
    }

    pub fn density(&self) -> f64 {
        self.edge_count() as f64 / (self.neurons * self.neurons).max(1) as f64
    }

    /// Neurons `keep`, in order, with their mutual connections.
    pub fn subnetwork(&self, keep: &[usize]) -> NetworkState {
        let n = keep.len();
        let mut out = NetworkState::empty(n, self.k);
        for (i, &m) in keep.iter().enumerate() {
            out.bias[i] = self.bias[m];
            for (j, &nn) in keep.iter().enumerate() {
                out.set_edge(i, j, self.edge(m, nn));
                for k in 0..self.k {
                    out.set_weight(i, j, k, self.weight(m, nn, k));
                }
            }
        }
        out
    }
}

/// How self-connections `a_{n->n}` are treated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelfEdges {
    /// Same prior as every other edge.
    Prior,
    /// Always present.
    Always,
    /// Never present.
    Never,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AdjacencyKind {
    Dense,
    Independent,
    Sbm,
    Distance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightKind {
    Independent,
    Sbm,
    Distance,
}

impl AdjacencyKind {
    pub const ALL: [AdjacencyKind; 4] =
        [AdjacencyKind::Dense, AdjacencyKind::Independent, AdjacencyKind::Sbm, AdjacencyKind::Distance];

    pub fn name(&self) -> &'static str {
        match self {
            AdjacencyKind::Dense => "dense",
            AdjacencyKind::Independent => "independent",
            AdjacencyKind::Sbm => "sbm",
            AdjacencyKind::Distance => "distance",
        }
    }
}

impl WeightKind {
    pub const ALL: [WeightKind; 3] = [WeightKind::Independent, WeightKind::Sbm, WeightKind::Distance];

    pub fn name(&self) -> &'static str {
        match self {
            WeightKind::Independent => "independent",
            WeightKind::Sbm => "sbm",
            WeightKind::Distance => "distance",
        }
    }
}

impl std::str::FromStr for AdjacencyKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s).ok_or_else(|| domain_err!("unknown adjacency prior '{s}'"))
    }
}

impl std::str::FromStr for WeightKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s).ok_or_else(|| domain_err!("unknown weight prior '{s}'"))
    }
}

/// Stochastic block model for the adjacency matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SbmAdjacency {
    pub pi: Vec<f64>,
    /// Row-major `C x C`; entry `(c, c')` is the probability of an edge from class `c` to `c'`.
    pub rho: Vec<f64>,
    pub assignments: Vec<usize>,
}

impl SbmAdjacency {
    pub fn classes(&self) -> usize {
        self.pi.len()
    }

    #[inline]
    pub fn block_rho(&self, from: usize, to: usize) -> f64 {
        self.rho[from * self.classes() + to]
    }
}

/// Latent distance model for the adjacency matrix:
/// `rho(m, n) = sigma(-||u_m - u_n||^2 + gamma0)`, `u_n ~ N(0, scale2 I)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceAdjacency {
    pub dim: usize,
    /// Row-major `N x D`.
    pub locations: Vec<f64>,
    pub gamma0: f64,
    pub scale2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum AdjacencyPrior {
    Dense,
    Independent { rho: f64 },
    Sbm(SbmAdjacency),
    Distance(DistanceAdjacency),
}

impl AdjacencyPrior {
    pub fn kind(&self) -> AdjacencyKind {
        match self {
            AdjacencyPrior::Dense => AdjacencyKind::Dense,
            AdjacencyPrior::Independent { .. } => AdjacencyKind::Independent,
            AdjacencyPrior::Sbm(_) => AdjacencyKind::Sbm,
            AdjacencyPrior::Distance(_) => AdjacencyKind::Distance,
        }
    }
}

/// A Gaussian over `K`-vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianBlock {
    pub mean: Vec<f64>,
    /// Row-major `K x K`.
    pub cov: Vec<f64>,
}

impl GaussianBlock {
    pub fn from_nalgebra(mean: &DVector<f64>, cov: &DMatrix<f64>) -> Self {
        Self { mean: mean.iter().copied().collect(), cov: cov.transpose().iter().copied().collect() }
    }

    pub fn mean_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.mean)
    }

    pub fn cov_matrix(&self) -> DMatrix<f64> {
        let k = self.mean.len();
        DMatrix::from_row_slice(k, k, &self.cov)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SbmWeights {
    pub pi: Vec<f64>,
    /// Row-major `C x C` blocks, from class to class.
    pub blocks: Vec<GaussianBlock>,
    pub assignments: Vec<usize>,
}

impl SbmWeights {
    pub fn classes(&self) -> usize {
        self.pi.len()
    }

    pub fn block(&self, from: usize, to: usize) -> &GaussianBlock {
        &self.blocks[from * self.classes() + to]
    }
}

/// Latent distance model for weights:
/// `w_{m->n} ~ N((-||v_m - v_n||^2 + mu0) 1_K, sigma2 I)`, `v_n ~ N(0, scale2 I)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceWeights {
    pub dim: usize,
    pub k: usize,
    pub locations: Vec<f64>,
    pub mu0: f64,
    pub sigma2: f64,
    pub scale2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum WeightPrior {
    Independent(GaussianBlock),
    Sbm(SbmWeights),
    Distance(DistanceWeights),
}

impl WeightPrior {
    pub fn kind(&self) -> WeightKind {
        match self {
            WeightPrior::Independent(_) => WeightKind::Independent,
            WeightPrior::Sbm(_) => WeightKind::Sbm,
            WeightPrior::Distance(_) => WeightKind::Distance,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiasPrior {
    pub mean: f64,
    pub var: f64,
}

/// Hyperpriors over the global parameters and latent scales.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperpriors {
    /// Beta prior on edge probabilities (independent and SBM adjacency).
    pub rho_alpha: f64,
    pub rho_beta: f64,
    /// Symmetric Dirichlet concentration on SBM class proportions.
    pub dirichlet_alpha: f64,
    /// Normal-inverse-Wishart prior on Gaussian weight blocks.
    pub niw: NiwPrior,
    /// Inverse-gamma prior on the latent location variance.
    pub location_scale: InvGammaPrior,
    /// Gaussian prior on the distance-model log-odds offset `gamma0`.
    pub gamma0_mean: f64,
    pub gamma0_var: f64,
    /// Normal-inverse-gamma prior on the distance weight baseline `(mu0, sigma2)`.
    pub baseline: NigPrior,
    /// Normal-inverse-gamma prior on the bias mean and variance; `None` keeps them fixed.
    pub bias: Option<NigPrior>,
}

impl Hyperpriors {
    pub fn default_for(k: usize) -> Self {
        Self {
            rho_alpha: 1.0,
            rho_beta: 1.0,
            dirichlet_alpha: 1.0,
            niw: NiwPrior::default_for(k),
            location_scale: InvGammaPrior { shape: 2.0, rate: 2.0 },
            gamma0_mean: 0.0,
            gamma0_var: 9.0,
            baseline: NigPrior { mean: 0.0, kappa: 1.0, shape: 2.0, rate: 1.0 },
            bias: Some(NigPrior { mean: 0.0, kappa: 0.1, shape: 2.0, rate: 1.0 }),
        }
    }
}

/// Static description of a network model: which priors, their sizes, hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorConfig {
    pub adjacency: AdjacencyKind,
    pub weights: WeightKind,
    pub k: usize,
    pub classes: usize,
    pub dim: usize,
    pub self_edges: SelfEdges,
    pub bias: BiasPrior,
    pub hyper: Hyperpriors,
}

impl PriorConfig {
    pub fn new(adjacency: AdjacencyKind, weights: WeightKind, k: usize) -> Self {
        Self {
            adjacency,
            weights,
            k,
            classes: 2,
            dim: 2,
            self_edges: SelfEdges::Prior,
            bias: BiasPrior { mean: 0.0, var: 1.0 },
            hyper: Hyperpriors::default_for(k),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.classes == 0 || self.dim == 0 {
            return Err(domain_err!("K, class count, and latent dimension must be positive"));
        }
        if !(self.bias.var > 0.0) {
            return Err(domain_err!("bias prior variance must be positive"));
        }
        let h = &self.hyper;
        if !(h.rho_alpha > 0.0 && h.rho_beta > 0.0 && h.dirichlet_alpha > 0.0) {
            return Err(domain_err!("beta and Dirichlet hyperparameters must be positive"));
        }
        if h.niw.dim() != self.k {
            return Err(domain_err!("NIW prior has dimension {}, K = {}", h.niw.dim(), self.k));
        }
        h.niw.validate()?;
        if !(h.location_scale.shape > 0.0 && h.location_scale.rate > 0.0 && h.gamma0_var > 0.0) {
            return Err(domain_err!("location hyperparameters must be positive"));
        }
        for b in std::iter::once(&h.baseline).chain(&h.bias) {
            if !(b.kappa > 0.0 && b.shape > 0.0 && b.rate > 0.0) || !b.mean.is_finite() {
                return Err(domain_err!("normal-inverse-gamma hyperparameters must be positive"));
            }
        }
        Ok(())
    }

    /// Draw global parameters and latents from the hyperpriors.
    pub fn draw<R: Rng + ?Sized>(&self, neurons: usize, rng: &mut R) -> Result<PriorSpec> {
        self.validate()?;
        let h = &self.hyper;
        let c = self.classes;
        let adjacency = match self.adjacency {
            AdjacencyKind::Dense => AdjacencyPrior::Dense,
            AdjacencyKind::Independent => {
                AdjacencyPrior::Independent { rho: stats::beta(h.rho_alpha, h.rho_beta, rng) }
            }
            AdjacencyKind::Sbm => {
                let pi = stats::dirichlet(&vec![h.dirichlet_alpha; c], rng);
                let assignments = draw_assignments(&pi, neurons, rng);
                let rho = (0..c * c).map(|_| stats::beta(h.rho_alpha, h.rho_beta, rng)).collect();
                AdjacencyPrior::Sbm(SbmAdjacency { pi, rho, assignments })
            }
            AdjacencyKind::Distance => {
                let scale2 = h.location_scale.sample(rng);
                let locations = draw_locations(neurons, self.dim, scale2, rng);
                let gamma0 = h.gamma0_mean + h.gamma0_var.sqrt() * stats::std_normal(rng);
                AdjacencyPrior::Distance(DistanceAdjacency { dim: self.dim, locations, gamma0, scale2 })
            }
        };
        let weights = match self.weights {
            WeightKind::Independent => {
                let (m, s) = h.niw.sample(rng)?;
                WeightPrior::Independent(GaussianBlock::from_nalgebra(&m, &s))
            }
            WeightKind::Sbm => {
                let pi = stats::dirichlet(&vec![h.dirichlet_alpha; c], rng);
                let assignments = draw_assignments(&pi, neurons, rng);
                let mut blocks = Vec::with_capacity(c * c);
                for _ in 0..c * c {
                    let (m, s) = h.niw.sample(rng)?;
                    blocks.push(GaussianBlock::from_nalgebra(&m, &s));
                }
                WeightPrior::Sbm(SbmWeights { pi, blocks, assignments })
            }
            WeightKind::Distance => {
                let scale2 = h.location_scale.sample(rng);
                let locations = draw_locations(neurons, self.dim, scale2, rng);
                let (mu0, sigma2) = h.baseline.sample(rng);
                WeightPrior::Distance(DistanceWeights { dim: self.dim, k: self.k, locations, mu0, sigma2, scale2 })
            }
        };
        let bias = match &h.bias {
            Some(nig) => {
                let (mean, var) = nig.sample(rng);
                BiasPrior { mean, var }
            }
            None => self.bias,
        };
        Ok(PriorSpec {
            neurons,
            k: self.k,
            adjacency,
            weights,
            bias,
            hyper: self.hyper.clone(),
            self_edges: self.self_edges,
        })
    }
}

pub(crate) fn draw_assignments<R: Rng + ?Sized>(pi: &[f64], neurons: usize, rng: &mut R) -> Vec<usize> {
    let logpi: Vec<f64> = pi.iter().map(|p| p.ln()).collect();
    (0..neurons).map(|_| stats::categorical_log(&logpi, rng)).collect()
}

pub(crate) fn draw_locations<R: Rng + ?Sized>(neurons: usize, dim: usize, scale2: f64, rng: &mut R) -> Vec<f64> {
    let sd = scale2.sqrt();
    (0..neurons * dim).map(|_| sd * stats::std_normal(rng)).collect()
}

#[inline]
pub(crate) fn sq_dist(locs: &[f64], dim: usize, m: usize, n: usize) -> f64 {
    (0..dim).map(|d| (locs[m * dim + d] - locs[n * dim + d]).powi(2)).sum()
}

/// A realized network prior: adjacency and weight models with their latents
/// and global parameters, the bias prior, and the hyperpriors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    pub neurons: usize,
    pub k: usize,
    pub adjacency: AdjacencyPrior,
    pub weights: WeightPrior,
    pub bias: BiasPrior,
    pub hyper: Hyperpriors,
    pub self_edges: SelfEdges,
}

/// Prior of the weights into one neuron, stacked as `[bias, w_{0->n}, ..., w_{N-1->n}]`
/// with block-diagonal covariance, plus the edge probabilities `rho_n`.
#[derive(Debug, Clone)]
pub struct NeuronPrior {
    pub rho: Vec<f64>,
    pub mean: Vec<f64>,
    /// Covariance blocks: `1 x 1` for the bias, then one `K x K` block per source.
    pub blocks: Vec<DMatrix<f64>>,
    pub(crate) prec_blocks: Vec<DMatrix<f64>>,
    pub(crate) chol_blocks: Vec<DMatrix<f64>>,
    /// `Sigma^{-1} mu`.
    pub(crate) prec_mean: Vec<f64>,
    /// Per block: `log |Sigma_b^{-1}| - mu_b^T Sigma_b^{-1} mu_b`.
    pub(crate) block_evidence: Vec<f64>,
    pub(crate) k: usize,
}

impl NeuronPrior {
    fn build(rho: Vec<f64>, mean: Vec<f64>, blocks: Vec<DMatrix<f64>>, k: usize) -> Result<Self> {
        let mut prec_blocks = Vec::with_capacity(blocks.len());
        let mut chol_blocks = Vec::with_capacity(blocks.len());
        let mut prec_mean = vec![0.0; mean.len()];
        let mut block_evidence = Vec::with_capacity(blocks.len());
        for (b, cov) in blocks.iter().enumerate() {
            let l = stats::cholesky(cov)?;
            let chol = cov.clone().cholesky().expect("checked above");
            let prec = chol.inverse();
            let r = Self::range_of(b, k);
            let mu = DVector::from_column_slice(&mean[r.clone()]);
            let pm = &prec * &mu;
            prec_mean[r].copy_from_slice(pm.as_slice());
            let logdet_prec = -2.0 * l.diagonal().iter().map(|v| v.ln()).sum::<f64>();
            block_evidence.push(logdet_prec - mu.dot(&pm));
            prec_blocks.push(prec);
            chol_blocks.push(l);
        }
        Ok(Self { rho, mean, blocks, prec_blocks, chol_blocks, prec_mean, block_evidence, k })
    }

    /// Coordinates of block `b` (0 = bias, `m + 1` = source `m`).
    #[inline]
    pub fn range_of(b: usize, k: usize) -> std::ops::Range<usize> {
        if b == 0 {
            0..1
        } else {
            let s = 1 + (b - 1) * k;
            s..s + k
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// The full block-diagonal covariance `Sigma_n`.
    pub fn dense_covariance(&self) -> DMatrix<f64> {
        let d = self.dim();
        let mut s = DMatrix::<f64>::zeros(d, d);
        for (b, blk) in self.blocks.iter().enumerate() {
            let r = Self::range_of(b, self.k);
            s.view_mut((r.start, r.start), (r.len(), r.len())).copy_from(blk);
        }
        s
    }

    /// A draw of block `b` from its prior.
    pub fn sample_block<R: Rng + ?Sized>(&self, b: usize, rng: &mut R) -> DVector<f64> {
        let r = Self::range_of(b, self.k);
        stats::mvn_from_chol(&DVector::from_column_slice(&self.mean[r]), &self.chol_blocks[b], rng)
    }
}

impl PriorSpec {
    /// Edge probability from `m` to `n`, including the self-edge policy.
    pub fn edge_probability(&self, m: usize, n: usize) -> f64 {
        if m == n {
            match self.self_edges {
                SelfEdges::Always => return 1.0,
                SelfEdges::Never => return 0.0,
                SelfEdges::Prior => {}
            }
        }
        edge_probability(&self.adjacency, m, n)
    }

    /// Whether `a_{m->n}` is random (and therefore scored and sampled).
    #[inline]
    pub fn edge_is_random(&self, m: usize, n: usize) -> bool {
        m != n || self.self_edges == SelfEdges::Prior
    }

    pub fn weight_moments(&self, m: usize, n: usize) -> (DVector<f64>, DMatrix<f64>) {
        weight_moments(&self.weights, self.k, m, n)
    }

    pub fn neuron_prior(&self, n: usize) -> Result<NeuronPrior> {
        neuron_prior_vectors(self, n)
    }
}

/// Draw `A`, `W`, and the biases from the prior given the latents and globals.
/// Weights of absent edges are drawn too, so the state is complete.
pub fn draw_network<R: Rng + ?Sized>(spec: &PriorSpec, rng: &mut R) -> Result<NetworkState> {
    let (n, k) = (spec.neurons, spec.k);
    let mut net = NetworkState::empty(n, k);
    for m in 0..n {
        for nn in 0..n {
            let p = spec.edge_probability(m, nn);
            net.set_edge(m, nn, rng.random::<f64>() < p);
            let (mu, cov) = spec.weight_moments(m, nn);
            let w = stats::mvn_from_chol(&mu, &stats::cholesky(&cov)?, rng);
            for (kk, &v) in w.iter().enumerate() {
                net.set_weight(m, nn, kk, v);
            }
        }
    }
    let sd = spec.bias.var.sqrt();
    for b in net.bias.iter_mut() {
        *b = spec.bias.mean + sd * stats::std_normal(rng);
    }
    Ok(net)
}

/// `rho(u_m, u_n, theta)` for each adjacency model.
pub fn edge_probability(prior: &AdjacencyPrior, m: usize, n: usize) -> f64 {
    match prior {
        AdjacencyPrior::Dense => 1.0,
        AdjacencyPrior::Independent { rho } => *rho,
        AdjacencyPrior::Sbm(s) => s.block_rho(s.assignments[m], s.assignments[n]),
        AdjacencyPrior::Distance(d) => sigmoid(-sq_dist(&d.locations, d.dim, m, n) + d.gamma0),
    }
}

/// `(mu(v_m, v_n, theta), Sigma(v_m, v_n, theta))` for each weight model.
pub fn weight_moments(prior: &WeightPrior, k: usize, m: usize, n: usize) -> (DVector<f64>, DMatrix<f64>) {
    match prior {
        WeightPrior::Independent(g) => (g.mean_vector(), g.cov_matrix()),
        WeightPrior::Sbm(s) => {
            let g = s.block(s.assignments[m], s.assignments[n]);
            (g.mean_vector(), g.cov_matrix())
        }
        WeightPrior::Distance(d) => {
            let mean = -sq_dist(&d.locations, d.dim, m, n) + d.mu0;
            (DVector::from_element(k, mean), DMatrix::identity(k, k) * d.sigma2)
        }
    }
}

/// The separate pieces of `log p(A, W, b | latents, theta)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogPriorTerms {
    pub adjacency: f64,
    pub weights: f64,
    pub bias: f64,
}

impl LogPriorTerms {
    pub fn total(&self) -> f64 {
        self.adjacency + self.weights + self.bias
    }
}

/// Spike-and-slab log prior: Bernoulli terms for every random edge, Gaussian
/// terms for the weights of present edges only, Gaussian terms for the biases.
pub fn log_prior_terms(net: &NetworkState, spec: &PriorSpec) -> Result<LogPriorTerms> {
    let n = net.neurons();
    if spec.neurons != n || spec.k != net.k() {
        return Err(shape_err!("prior for {} neurons, network has {n}", spec.neurons));
    }
    let mut adjacency = 0.0;
    let mut weights = 0.0;
    for m in 0..n {
        for nn in 0..n {
            let a = net.edge(m, nn);
            if spec.edge_is_random(m, nn) {
                adjacency += stats::log_bernoulli(a, spec.edge_probability(m, nn));
            } else if a != (spec.self_edges == SelfEdges::Always) {
                adjacency = f64::NEG_INFINITY;
            }
            if a {
                let (mu, cov) = spec.weight_moments(m, nn);
                let w = DVector::from_column_slice(net.weight_vec(m, nn));
                weights += stats::log_mvn(&w, &mu, &cov)?;
            }
        }
    }
    let bias = net.bias.iter().map(|&b| stats::log_normal(b, spec.bias.mean, spec.bias.var)).sum();
    Ok(LogPriorTerms { adjacency, weights, bias })
}

pub fn log_prior(net: &NetworkState, spec: &PriorSpec) -> Result<f64> {
    Ok(log_prior_terms(net, spec)?.total())
}

/// `log p(latents)`: class assignments under `pi`, locations under their Gaussian prior.
pub fn latent_log_prior(spec: &PriorSpec) -> f64 {
    let mut lp = 0.0;
    match &spec.adjacency {
        AdjacencyPrior::Sbm(s) => lp += s.assignments.iter().map(|&c| s.pi[c].ln()).sum::<f64>(),
        AdjacencyPrior::Distance(d) => {
            lp += d.locations.iter().map(|&x| stats::log_normal(x, 0.0, d.scale2)).sum::<f64>();
            lp += stats::log_normal(d.gamma0, spec.hyper.gamma0_mean, spec.hyper.gamma0_var);
        }
        _ => {}
    }
    match &spec.weights {
        WeightPrior::Sbm(s) => lp += s.assignments.iter().map(|&c| s.pi[c].ln()).sum::<f64>(),
        WeightPrior::Distance(d) => {
            lp += d.locations.iter().map(|&x| stats::log_normal(x, 0.0, d.scale2)).sum::<f64>();
        }
        _ => {}
    }
    lp
}

/// Stack the per-edge priors of everything feeding into neuron `n`.
pub fn neuron_prior_vectors(spec: &PriorSpec, n: usize) -> Result<NeuronPrior> {
    let big_n = spec.neurons;
    if n >= big_n {
        return Err(shape_err!("neuron {n} out of range for {big_n} neurons"));
    }
    let k = spec.k;
    let rho = (0..big_n).map(|m| spec.edge_probability(m, n)).collect();
    let mut mean = Vec::with_capacity(1 + big_n * k);
    let mut blocks = Vec::with_capacity(1 + big_n);
    mean.push(spec.bias.mean);
    blocks.push(DMatrix::from_element(1, 1, spec.bias.var));
    for m in 0..big_n {
        let (mu, cov) = spec.weight_moments(m, n);
        mean.extend(mu.iter());
        blocks.push(cov);
    }
    NeuronPrior::build(rho, mean, blocks, k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn spec_with(adjacency: AdjacencyPrior, weights: WeightPrior, n: usize) -> PriorSpec {
        PriorSpec {
            neurons: n,
            k: 1,
            adjacency,
            weights,
            bias: BiasPrior { mean: -1.0, var: 0.5 },
            hyper: Hyperpriors::default_for(1),
            self_edges: SelfEdges::Prior,
        }
    }

    fn fixed_weights() -> WeightPrior {
        WeightPrior::Independent(GaussianBlock { mean: vec![0.3], cov: vec![0.2] })
    }

    #[test]
    fn edge_probability_examples() {
        assert_eq!(edge_probability(&AdjacencyPrior::Dense, 0, 3), 1.0);
        let d = AdjacencyPrior::Distance(DistanceAdjacency {
            dim: 2,
            locations: vec![0.0, 0.0, 0.0, 0.0, 1.0, 1.0],
            gamma0: 0.0,
            scale2: 1.0,
        });
        assert_eq!(edge_probability(&d, 0, 1), 0.5);
        assert!((edge_probability(&d, 0, 2) - 0.119_202_922_022_117_57).abs() < 1e-15);
    }

    #[test]
    fn weight_moment_examples() {
        let (m, s) = weight_moments(&fixed_weights(), 1, 0, 1);
        assert_eq!((m[0], s[(0, 0)]), (0.3, 0.2));
        let d = WeightPrior::Distance(DistanceWeights {
            dim: 1, k: 2, locations: vec![0.5, 0.5, 2.5], mu0: 0.7, sigma2: 0.1, scale2: 1.0,
        });
        let (m, s) = weight_moments(&d, 2, 0, 1);
        assert_eq!(m.as_slice(), &[0.7, 0.7]);
        assert_eq!(s, DMatrix::identity(2, 2) * 0.1);
        let (m, _) = weight_moments(&d, 2, 0, 2);
        assert!((m[0] - (0.7 - 4.0)).abs() < 1e-15);
        let one = WeightPrior::Sbm(SbmWeights {
            pi: vec![1.0],
            blocks: vec![GaussianBlock { mean: vec![-0.4], cov: vec![0.3] }],
            assignments: vec![0; 4],
        });
        for (a, b) in [(0, 1), (3, 2), (1, 1)] {
            let (m, s) = weight_moments(&one, 1, a, b);
            assert_eq!((m[0], s[(0, 0)]), (-0.4, 0.3));
        }
    }

    #[test]
    fn log_prior_adjacency_terms() {
        let mut net = NetworkState::empty(2, 1);
        net.set_edge(0, 1, true);
        let dense = spec_with(AdjacencyPrior::Dense, fixed_weights(), 2);
        let mut full = net.clone();
        for m in 0..2 {
            for n in 0..2 {
                full.set_edge(m, n, true);
            }
        }
        assert_eq!(log_prior_terms(&full, &dense).unwrap().adjacency, 0.0);
        let ind = spec_with(AdjacencyPrior::Independent { rho: 0.5 }, fixed_weights(), 2);
        let t = log_prior_terms(&net, &ind).unwrap();
        assert!((t.adjacency - 4.0 * 0.5f64.ln()).abs() < 1e-15);
        // one present edge with weight 0 scored under N(0.3, 0.2); absent edges ignored
        assert!((t.weights - stats::log_normal(0.0, 0.3, 0.2)).abs() < 1e-12);
        assert!((t.bias - 2.0 * stats::log_normal(0.0, -1.0, 0.5)).abs() < 1e-12);
    }

    #[test]
    fn log_prior_sbm_by_hand() {
        let sbm = SbmAdjacency { pi: vec![0.6, 0.4], rho: vec![0.9, 0.2, 0.3, 0.7], assignments: vec![0, 1, 1] };
        let spec = spec_with(AdjacencyPrior::Sbm(sbm.clone()), fixed_weights(), 3);
        let mut net = NetworkState::empty(3, 1);
        let edges = [(0, 0), (0, 1), (2, 1), (1, 2), (2, 0)];
        for &(m, n) in &edges {
            net.set_edge(m, n, true);
        }
        let mut expected = 0.0;
        for m in 0..3 {
            for n in 0..3 {
                let p = sbm.rho[sbm.assignments[m] * 2 + sbm.assignments[n]];
                expected += if edges.contains(&(m, n)) { p.ln() } else { (1.0 - p).ln() };
            }
        }
        assert!((log_prior_terms(&net, &spec).unwrap().adjacency - expected).abs() < 1e-12);
    }

    #[test]
    fn neuron_prior_structure() {
        let spec = spec_with(AdjacencyPrior::Dense, fixed_weights(), 3);
        let p = neuron_prior_vectors(&spec, 1).unwrap();
        assert_eq!(p.rho, vec![1.0; 3]);
        assert_eq!(p.mean, vec![-1.0, 0.3, 0.3, 0.3]);
        let s = p.dense_covariance();
        for i in 0..4 {
            for j in 0..4 {
                if i != j {
                    assert_eq!(s[(i, j)], 0.0);
                }
            }
        }
        assert_eq!(s[(0, 0)], 0.5);
        assert!((1..4).all(|i| s[(i, i)] == 0.2));
        assert!(neuron_prior_vectors(&spec, 3).is_err());
    }

    #[test]
    fn all_twelve_models_construct() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for a in AdjacencyKind::ALL {
            for w in WeightKind::ALL {
                let cfg = PriorConfig::new(a, w, 1);
                let spec = cfg.draw(5, &mut rng).unwrap();
                assert_eq!(spec.adjacency.kind(), a);
                assert_eq!(spec.weights.kind(), w);
                let mut net = NetworkState::empty(5, 1);
                for m in 0..5 {
                    for n in 0..5 {
                        net.set_edge(m, n, rng.random::<f64>() < spec.edge_probability(m, n));
                        let (mu, cov) = spec.weight_moments(m, n);
                        let l = stats::cholesky(&cov).unwrap();
                        net.set_weight(m, n, 0, stats::mvn_from_chol(&mu, &l, &mut rng)[0]);
                    }
                }
                assert!(log_prior(&net, &spec).unwrap().is_finite());
                assert!(latent_log_prior(&spec).is_finite());
            }
        }
    }

    #[test]
    fn distance_probability_is_rigid_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let locs: Vec<f64> = (0..12).map(|_| stats::std_normal(&mut rng)).collect();
        let theta: f64 = 0.7;
        let (c, s) = (theta.cos(), theta.sin());
        let moved: Vec<f64> = locs
            .chunks(2)
            .flat_map(|p| [c * p[0] - s * p[1] + 3.0, s * p[0] + c * p[1] - 1.0])
            .collect();
        let a = AdjacencyPrior::Distance(DistanceAdjacency { dim: 2, locations: locs, gamma0: 0.4, scale2: 1.0 });
        let b = AdjacencyPrior::Distance(DistanceAdjacency { dim: 2, locations: moved, gamma0: 0.4, scale2: 1.0 });
        for m in 0..6 {
            for n in 0..6 {
                assert!((edge_probability(&a, m, n) - edge_probability(&b, m, n)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn sbm_probability_is_relabeling_equivariant() {
        let sbm = SbmAdjacency { pi: vec![0.5, 0.5], rho: vec![0.9, 0.2, 0.3, 0.7], assignments: vec![0, 1, 1, 0] };
        let perm = [2, 0, 3, 1];
        let permuted = SbmAdjacency {
            assignments: (0..4).map(|i| sbm.assignments[perm[i]]).collect(),
            ..sbm.clone()
        };
        let (a, b) = (AdjacencyPrior::Sbm(sbm), AdjacencyPrior::Sbm(permuted));
        for m in 0..4 {
            for n in 0..4 {
                assert_eq!(edge_probability(&b, m, n), edge_probability(&a, perm[m], perm[n]));
            }
        }
    }

    #[test]
    fn self_edge_policy_overrides_prior() {
        let mut spec = spec_with(AdjacencyPrior::Independent { rho: 0.3 }, fixed_weights(), 2);
        spec.self_edges = SelfEdges::Never;
        assert_eq!(spec.edge_probability(1, 1), 0.0);
        assert_eq!(spec.edge_probability(0, 1), 0.3);
        spec.self_edges = SelfEdges::Always;
        assert_eq!(neuron_prior_vectors(&spec, 0).unwrap().rho, vec![1.0, 0.3]);
    }
}
