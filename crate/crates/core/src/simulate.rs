//! Forward simulation of the generative model.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::activation::{activation_matrix, exponential_basis, filter_spikes, Basis};
use crate::error::{shape_err, Error, Result};
use crate::network::{
    self, AdjacencyPrior, BiasPrior, DistanceAdjacency, GaussianBlock, Hyperpriors, NetworkState, PriorSpec,
    SbmWeights, SelfEdges, WeightPrior,
};
use crate::rng::{Phase, Streams};
use crate::spikes::{ObsModel, SpikeData};

/// Draw `A ~ Bern(rho)`, `W ~ N(mu, Sigma)`, and biases from a realized prior.
pub fn sample_network<R: Rng + ?Sized>(spec: &PriorSpec, rng: &mut R) -> Result<NetworkState> {
    network::draw_network(spec, rng)
}

/// Firing-rate guard for forward simulation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimulationOptions {
    /// Largest allowed mean count per bin of any neuron over a window; `None` disables the guard.
    pub ceiling: Option<f64>,
    pub window: usize,
}

impl Default for SimulationOptions {
    fn default() -> Self {
        Self { ceiling: Some(0.9), window: 1000 }
    }
}

impl SimulationOptions {
    pub fn unguarded() -> Self {
        Self { ceiling: None, window: 1000 }
    }
}

/// Bin-by-bin ancestral simulation: `psi_t` from the history, `s_t` from the
/// count model, and `s_t` fed forward into later activations. History before
/// the first bin is zero. Each neuron draws from its own substream.
pub fn simulate_spikes<R: Rng + ?Sized>(
    net: &NetworkState,
    bins: usize,
    model: &ObsModel,
    basis: &Basis,
    options: &SimulationOptions,
    bin_ms: f64,
    rng: &mut R,
) -> Result<SpikeData> {
    let n_count = net.neurons();
    if model.neurons() != n_count || basis.k() != net.k() {
        return Err(shape_err!(
            "network has {n_count} neurons and {} bases; model {} neurons, basis {} functions",
            net.k(),
            model.neurons(),
            basis.k()
        ));
    }
    if bins == 0 {
        return Err(Error::Domain("simulation needs at least one bin".into()));
    }
    let dt_max = basis.dt_max();
    // impulse responses h_{m->n}[dt] of present edges, grouped by source
    let mut outgoing: Vec<Vec<(usize, Vec<f64>)>> = vec![Vec::new(); n_count];
    for (m, out) in outgoing.iter_mut().enumerate() {
        for n in 0..n_count {
            if net.edge(m, n) {
                let w = net.weight_vec(m, n);
                let h = (1..=dt_max).map(|dt| w.iter().enumerate().map(|(k, wk)| wk * basis.value(dt, k)).sum()).collect();
                out.push((n, h));
            }
        }
    }
    let streams = Streams::new(rng.random());
    let mut rngs: Vec<_> = (0..n_count).map(|n| streams.rng(Phase::Simulate, 0, n as u64)).collect();
    let models: Vec<_> = (0..n_count).map(|n| model.neuron(n)).collect();
    let ring_len = dt_max + 1;
    let mut drive = vec![0.0; ring_len * n_count];
    let mut counts = vec![0u32; bins * n_count];
    let mut window_counts = vec![0u64; n_count];
    let window = options.window.max(1);
    for t in 0..bins {
        let row = (t % ring_len) * n_count;
        for n in 0..n_count {
            let psi = net.bias[n] + drive[row + n];
            counts[t * n_count + n] = models[n].sample(psi, &mut rngs[n]);
        }
        drive[row..row + n_count].fill(0.0);
        for m in 0..n_count {
            let s = counts[t * n_count + m];
            if s == 0 {
                continue;
            }
            window_counts[m] += s as u64;
            let s = s as f64;
            for (n, h) in &outgoing[m] {
                for (i, hv) in h.iter().enumerate() {
                    drive[((t + 1 + i) % ring_len) * n_count + n] += s * hv;
                }
            }
        }
        let filled = (t + 1) % window == 0 || t + 1 == bins;
        if filled {
            let span = if (t + 1) % window == 0 { window } else { (t + 1) % window };
            if let Some(ceiling) = options.ceiling {
                for (n, &c) in window_counts.iter().enumerate() {
                    let rate = c as f64 / span as f64;
                    if rate > ceiling {
                        return Err(Error::Stability(format!(
                            "neuron {n} averaged {rate:.3} counts per bin over bins {}..{}, above the ceiling {ceiling}",
                            t + 1 - span,
                            t + 1
                        )));
                    }
                }
            }
            window_counts.fill(0);
        }
    }
    SpikeData::new(bins, n_count, bin_ms, counts)
}

/// A simulated dataset with everything that generated it.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub net: NetworkState,
    pub spec: PriorSpec,
    pub data: SpikeData,
    /// `T x N` activations of `data` under `net`.
    pub psi: DMatrix<f64>,
    pub basis: Basis,
    pub obs: ObsModel,
}

impl GroundTruth {
    /// Simulate `bins` bins from a realized prior.
    pub fn simulate<R: Rng + ?Sized>(
        spec: PriorSpec,
        bins: usize,
        obs: ObsModel,
        basis: Basis,
        options: &SimulationOptions,
        bin_ms: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let net = sample_network(&spec, rng)?;
        let data = simulate_spikes(&net, bins, &obs, &basis, options, bin_ms, rng)?;
        let psi = activation_matrix(&filter_spikes(&data, &basis), &net)?;
        Ok(Self { net, spec, data, psi, basis, obs })
    }

    /// True weight-model block assignments, if any.
    pub fn weight_types(&self) -> Option<&[usize]> {
        match &self.spec.weights {
            WeightPrior::Sbm(s) => Some(&s.assignments),
            _ => None,
        }
    }

    /// True adjacency-model locations, if any (row-major `N x D`).
    pub fn locations(&self) -> Option<&[f64]> {
        match &self.spec.adjacency {
            AdjacencyPrior::Distance(d) => Some(&d.locations),
            _ => None,
        }
    }
}

/// Size of the synthetic recovery benchmark.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BenchmarkScale {
    /// 20 neurons, 50000 bins.
    Desk,
    /// 200 neurons, 60000 one-millisecond bins.
    Paper,
}

impl BenchmarkScale {
    pub fn dims(&self) -> (usize, usize) {
        match self {
            BenchmarkScale::Desk => (20, 50_000),
            BenchmarkScale::Paper => (200, 60_000),
        }
    }
}

/// Time constant of the single exponential basis of the benchmark, in milliseconds.
pub const BENCHMARK_TAU_MS: f64 = 10.0;
/// Lag window of the benchmark basis, in bins.
pub const BENCHMARK_DT_MAX: usize = 50;

/// Generating prior of the benchmark: 2-D latent distance adjacency, and a
/// two-type block model of the weights with one excitatory type (0) and one
/// inhibitory type (1).
pub fn benchmark_spec<R: Rng + ?Sized>(neurons: usize, rng: &mut R) -> PriorSpec {
    let mut hyper = Hyperpriors::default_for(1);
    hyper.bias = None;
    let scale2 = 1.5 * 1.5;
    let locations = network::draw_locations(neurons, 2, scale2, rng);
    let mut types: Vec<usize> = (0..neurons).map(|n| n % 2).collect();
    types.shuffle(rng);
    let block = |mean: f64| GaussianBlock { mean: vec![mean], cov: vec![0.2 * 0.2] };
    PriorSpec {
        neurons,
        k: 1,
        adjacency: AdjacencyPrior::Distance(DistanceAdjacency { dim: 2, locations, gamma0: 3.0, scale2 }),
        weights: WeightPrior::Sbm(SbmWeights {
            pi: vec![0.5, 0.5],
            blocks: vec![block(0.3), block(0.5), block(-1.0), block(-0.5)],
            assignments: types,
        }),
        bias: BiasPrior { mean: -3.0, var: 0.2 * 0.2 },
        hyper,
        self_edges: SelfEdges::Prior,
    }
}

/// The synthetic recovery benchmark: Bernoulli spikes in 1 ms bins from
/// [`benchmark_spec`], simulated under the default stability guard.
pub fn make_synthetic_benchmark<R: Rng + ?Sized>(scale: BenchmarkScale, rng: &mut R) -> Result<GroundTruth> {
    let (n, t) = scale.dims();
    let spec = benchmark_spec(n, rng);
    let basis = exponential_basis(BENCHMARK_TAU_MS, 1.0, BENCHMARK_DT_MAX)?;
    GroundTruth::simulate(spec, t, ObsModel::bernoulli(n), basis, &SimulationOptions::default(), 1.0, rng)
}
