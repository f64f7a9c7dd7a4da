//! The Markov chain: Polya-gamma auxiliary draws, collapsed updates of each
//! neuron's incoming connections and weights, and the updates of the network
//! model's latents and global parameters, composed into a systematic sweep.
//!
//! Sweep order: `omega`, then per neuron `(a_n, w_n)` with the weights
//! integrated out of the adjacency update, then count-model shapes, then
//! latents (block assignments, locations), then global parameters. Neurons
//! are processed in parallel, each with its own substream.

mod auxiliary;
mod conditional;
mod hmc;
mod latent;

use std::time::Instant;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use auxiliary::{crt, sample_nu_negbinomial, sample_omega, sample_omega_column, GammaPrior};
pub use conditional::{collapsed_sample_adjacency, sample_weights, weight_posterior, ActiveFactor, NeuronStats, WeightPosterior};
pub use hmc::{
    adjacency_location_log_density, hmc_adjacency_locations, hmc_transition, hmc_weight_locations,
    weight_location_log_density, DualAveraging, HmcTransition,
};
pub use latent::{
    adjacency_class_log_weights, sample_bias_prior, sample_distance_hypers, sample_independent_params, sample_sbm_assignments,
    sample_sbm_params, weight_class_log_weights,
};

use crate::activation::{activation_column, activation_matrix, filter_spikes, Basis, FilteredSpikes};
use crate::chain::{Chain, ChainSample};
use crate::error::{Error, Result};
use crate::network::{self, AdjacencyPrior, NetworkState, PriorConfig, PriorSpec, WeightPrior};
use crate::polyagamma::pg_mean;
use crate::rng::{Phase, Streams};
use crate::spikes::{ObsModel, SpikeData};

/// Which blocks of variables a sweep updates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Updates {
    pub omega: bool,
    pub adjacency: bool,
    pub weights: bool,
    pub dispersion: bool,
    pub latents: bool,
    pub globals: bool,
}

impl Updates {
    pub fn all() -> Self {
        Self { omega: true, adjacency: true, weights: true, dispersion: true, latents: true, globals: true }
    }

    pub fn none() -> Self {
        Self { omega: false, adjacency: false, weights: false, dispersion: false, latents: false, globals: false }
    }
}

/// Chain length, HMC tuning, and update toggles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub iterations: usize,
    /// Sweeps discarded before samples are retained; HMC step sizes adapt only during these.
    pub burn_in: usize,
    pub thin: usize,
    pub hmc_step: f64,
    pub hmc_leapfrog: usize,
    /// HMC transitions per sweep for each set of locations.
    pub hmc_transitions: usize,
    pub hmc_target_accept: f64,
    /// Rebuild the active-set factor after this many toggles; 0 means the number of neurons.
    pub refactor_every: usize,
    pub nu_prior: GammaPrior,
    pub updates: Updates,
    pub seed: u64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            iterations: 1000,
            burn_in: 500,
            thin: 1,
            hmc_step: 0.01,
            hmc_leapfrog: 10,
            hmc_transitions: 1,
            hmc_target_accept: 0.8,
            refactor_every: 0,
            nu_prior: GammaPrior::default(),
            updates: Updates::all(),
            seed: 0,
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 || self.thin == 0 {
            return Err(Error::Domain("iterations and thinning must be at least 1".into()));
        }
        if self.burn_in > self.iterations {
            return Err(Error::Domain(format!("burn-in {} exceeds {} iterations", self.burn_in, self.iterations)));
        }
        if !(self.hmc_step > 0.0) || !self.hmc_step.is_finite() || self.hmc_leapfrog == 0 {
            return Err(Error::Domain("HMC step must be positive and leapfrog count at least 1".into()));
        }
        if !(self.hmc_target_accept > 0.0 && self.hmc_target_accept < 1.0) {
            return Err(Error::Domain("HMC target acceptance must be in (0, 1)".into()));
        }
        if !(self.nu_prior.shape > 0.0 && self.nu_prior.rate > 0.0) {
            return Err(Error::Domain("shape prior parameters must be positive".into()));
        }
        Ok(())
    }
}

/// The full chain state: network, latents and globals, count-model parameters,
/// and the augmented variables. `psi` and `omega` are `T x N`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainState {
    pub net: NetworkState,
    pub spec: PriorSpec,
    pub obs: ObsModel,
    pub psi: DMatrix<f64>,
    pub omega: DMatrix<f64>,
}

/// Step-size adaptation state for both sets of locations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Adaptation {
    pub adjacency: DualAveraging,
    pub weights: DualAveraging,
}

/// Everything needed to continue a chain exactly where it stopped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub iteration: u64,
    pub net: NetworkState,
    pub spec: PriorSpec,
    pub obs: ObsModel,
    pub adaptation: Adaptation,
}

/// Per-sweep progress: joint log probability and time spent per phase.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRecord {
    pub iteration: u64,
    pub log_prob: f64,
    /// Auxiliary variables and the statistics built from them, plus activation refresh.
    pub t_obs: f64,
    /// Collapsed adjacency and weight updates.
    pub t_net: f64,
    /// Shapes, latents, and global parameters.
    pub t_model: f64,
}

impl SweepRecord {
    /// `iter=<k> logp=<v> t_obs=<s> t_net=<s>`.
    pub fn log_line(&self) -> String {
        format!("iter={} logp={} t_obs={:.6} t_net={:.6}", self.iteration, self.log_prob, self.t_obs, self.t_net)
    }
}

struct NeuronOutcome {
    edges: Vec<bool>,
    weights: Vec<f64>,
    omega: Vec<f64>,
    psi: Option<Vec<f64>>,
    t_obs: f64,
    t_net: f64,
}

/// A running chain bound to one dataset.
pub struct Sampler {
    data: SpikeData,
    basis: Basis,
    shat: FilteredSpikes,
    config: SweepConfig,
    streams: Streams,
    state: ChainState,
    iteration: u64,
    adaptation: Adaptation,
}

impl Sampler {
    /// Draw latents, globals, and an initial network from the priors, then bind to `data`.
    pub fn new(data: SpikeData, basis: Basis, obs: ObsModel, prior: &PriorConfig, config: SweepConfig) -> Result<Self> {
        let streams = Streams::new(config.seed);
        let mut rng = streams.rng(Phase::Init, 0, 0);
        let spec = prior.draw(data.neurons(), &mut rng)?;
        let net = network::draw_network(&spec, &mut rng)?;
        Self::with_state(data, basis, net, spec, obs, config)
    }

    /// Start from a given network and prior.
    pub fn with_state(
        data: SpikeData,
        basis: Basis,
        net: NetworkState,
        spec: PriorSpec,
        obs: ObsModel,
        config: SweepConfig,
    ) -> Result<Self> {
        config.validate()?;
        obs.validate(&data)?;
        if spec.neurons != data.neurons() || net.neurons() != data.neurons() || net.k() != basis.k() || spec.k != basis.k() {
            return Err(Error::Shape(format!(
                "data has {} neurons, basis {} functions; network {} x {}, prior {} x {}",
                data.neurons(),
                basis.k(),
                net.neurons(),
                net.k(),
                spec.neurons,
                spec.k
            )));
        }
        let shat = filter_spikes(&data, &basis);
        let psi = activation_matrix(&shat, &net)?;
        let omega = initial_omega(&data, &psi, &obs);
        let adaptation = Adaptation {
            adjacency: DualAveraging::new(config.hmc_step, config.hmc_target_accept),
            weights: DualAveraging::new(config.hmc_step, config.hmc_target_accept),
        };
        let streams = Streams::new(config.seed);
        Ok(Self {
            data,
            basis,
            shat,
            config,
            streams,
            state: ChainState { net, spec, obs, psi, omega },
            iteration: 0,
            adaptation,
        })
    }

    /// Continue from a checkpoint; the next sweep uses the same substreams it
    /// would have used in the original run.
    pub fn resume(data: SpikeData, basis: Basis, checkpoint: Checkpoint, config: SweepConfig) -> Result<Self> {
        let mut s = Self::with_state(data, basis, checkpoint.net, checkpoint.spec, checkpoint.obs, config)?;
        s.iteration = checkpoint.iteration;
        s.adaptation = checkpoint.adaptation;
        Ok(s)
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            iteration: self.iteration,
            net: self.state.net.clone(),
            spec: self.state.spec.clone(),
            obs: self.state.obs.clone(),
            adaptation: self.adaptation,
        }
    }

    pub fn state(&self) -> &ChainState {
        &self.state
    }

    pub fn data(&self) -> &SpikeData {
        &self.data
    }

    pub fn basis(&self) -> &Basis {
        &self.basis
    }

    pub fn config(&self) -> &SweepConfig {
        &self.config
    }

    /// Completed sweeps.
    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    /// Replace the spikes (same shape), keeping the network state. Used by
    /// successive-conditional simulation.
    pub fn set_data(&mut self, data: SpikeData) -> Result<()> {
        if data.neurons() != self.data.neurons() {
            return Err(Error::Shape(format!("expected {} neurons, got {}", self.data.neurons(), data.neurons())));
        }
        self.state.obs.validate(&data)?;
        self.shat = filter_spikes(&data, &self.basis);
        self.state.psi = activation_matrix(&self.shat, &self.state.net)?;
        self.state.omega = initial_omega(&data, &self.state.psi, &self.state.obs);
        self.data = data;
        Ok(())
    }

    /// Replace latents and globals (same model variants and sizes).
    pub fn set_spec(&mut self, spec: PriorSpec) -> Result<()> {
        if spec.neurons != self.state.spec.neurons || spec.k != self.state.spec.k {
            return Err(Error::Shape("replacement prior has different dimensions".into()));
        }
        self.state.spec = spec;
        Ok(())
    }

    /// `log p(S | A, W, b, nu) + log p(A, W, b | latents, theta) + log p(latents)`.
    pub fn log_probability(&self) -> Result<f64> {
        let st = &self.state;
        let t_len = self.data.bins();
        let mut ll = 0.0;
        for n in 0..self.data.neurons() {
            let model = st.obs.neuron(n);
            let psi = &st.psi.as_slice()[n * t_len..(n + 1) * t_len];
            for (t, &p) in psi.iter().enumerate() {
                ll += model.log_likelihood_unchecked(self.data.get(t, n), p);
            }
        }
        Ok(ll + network::log_prior(&st.net, &st.spec)? + network::latent_log_prior(&st.spec))
    }

    fn update_neuron(&self, n: usize, it: u64) -> Result<NeuronOutcome> {
        let st = &self.state;
        let up = self.config.updates;
        let n_count = self.data.neurons();
        let t_len = self.data.bins();
        let start = Instant::now();
        let model = st.obs.neuron(n);
        let counts = self.data.column(n);
        let mut omega = st.omega.column(n).as_slice().to_vec();
        if up.omega {
            let mut rng = self.streams.rng(Phase::Omega, it, n as u64);
            sample_omega_column(&counts, &st.psi.as_slice()[n * t_len..(n + 1) * t_len], &model, &mut rng, &mut omega);
        }
        let mut edges: Vec<bool> = (0..n_count).map(|m| st.net.edge(m, n)).collect();
        let mut weights = st.net.weight_vector(n);
        if !(up.adjacency || up.weights) {
            return Ok(NeuronOutcome { edges, weights, omega, psi: None, t_obs: start.elapsed().as_secs_f64(), t_net: 0.0 });
        }
        let kappa: Vec<f64> = counts.iter().map(|&s| model.kappa(s)).collect();
        let stats = NeuronStats::from_augmented(&self.shat, &omega, &kappa)?;
        let mut t_obs = start.elapsed().as_secs_f64();

        let net_start = Instant::now();
        let prior = st.spec.neuron_prior(n)?;
        let mut rng = self.streams.rng(Phase::Neuron, it, n as u64);
        let refactor = if self.config.refactor_every == 0 { n_count } else { self.config.refactor_every };
        let factor = if up.adjacency {
            collapsed_sample_adjacency(&stats, &prior, &mut edges, refactor, &mut rng)?
        } else {
            let active: Vec<usize> = (0..n_count).filter(|&m| edges[m]).collect();
            ActiveFactor::new(&stats, &prior, &active)?
        };
        if up.weights {
            weights = factor.draw_weights(&prior, &mut rng);
        }
        let t_net = net_start.elapsed().as_secs_f64();

        let psi_start = Instant::now();
        let k = st.net.k();
        let mut masked = weights.clone();
        for (m, &on) in edges.iter().enumerate() {
            if !on {
                masked[1 + m * k..1 + (m + 1) * k].fill(0.0);
            }
        }
        let mut psi = vec![0.0; t_len];
        activation_column(&self.shat, &masked, &mut psi);
        t_obs += psi_start.elapsed().as_secs_f64();
        Ok(NeuronOutcome { edges, weights, omega, psi: Some(psi), t_obs, t_net })
    }

    /// One full sweep.
    pub fn sweep(&mut self) -> Result<SweepRecord> {
        let it = self.iteration;
        let n_count = self.data.neurons();
        let t_len = self.data.bins();
        let outcomes: Vec<Result<NeuronOutcome>> =
            (0..n_count).into_par_iter().map(|n| self.update_neuron(n, it)).collect();
        let (mut t_obs, mut t_net) = (0.0, 0.0);
        for (n, out) in outcomes.into_iter().enumerate() {
            let out = out.map_err(|e| with_context(e, it, Some(n)))?;
            t_obs += out.t_obs;
            t_net += out.t_net;
            self.state.net.set_incoming(n, &out.edges, &out.weights);
            self.state.omega.as_mut_slice()[n * t_len..(n + 1) * t_len].copy_from_slice(&out.omega);
            if let Some(psi) = out.psi {
                self.state.psi.as_mut_slice()[n * t_len..(n + 1) * t_len].copy_from_slice(&psi);
            }
        }

        let model_start = Instant::now();
        let up = self.config.updates;
        if up.dispersion {
            auxiliary::update_dispersion(&self.data, &self.state.psi, &mut self.state.obs, self.config.nu_prior, &self.streams, it)
                .map_err(|e| with_context(e, it, None))?;
        }
        if up.latents {
            self.update_latents(it).map_err(|e| with_context(e, it, None))?;
        }
        if up.globals {
            let mut rng = self.streams.rng(Phase::Global, it, 0);
            latent::sample_globals(&self.state.net, &mut self.state.spec, &mut rng).map_err(|e| with_context(e, it, None))?;
        }
        let t_model = model_start.elapsed().as_secs_f64();
        self.iteration += 1;
        let log_prob = self.log_probability()?;
        Ok(SweepRecord { iteration: self.iteration, log_prob, t_obs, t_net, t_model })
    }

    fn update_latents(&mut self, it: u64) -> Result<()> {
        let mut rng = self.streams.rng(Phase::Latent, it, 0);
        let st = &mut self.state;
        latent::sample_sbm_assignments(&st.net, &mut st.spec, &mut rng)?;
        let adapting = (it as usize) < self.config.burn_in;
        let (l, reps) = (self.config.hmc_leapfrog, self.config.hmc_transitions);
        if matches!(st.spec.adjacency, AdjacencyPrior::Distance(_)) {
            for _ in 0..reps {
                let da = &mut self.adaptation.adjacency;
                let step = if adapting { da.step() } else { da.final_step() };
                let t = hmc_adjacency_locations(&st.net, &mut st.spec, step, l, &mut rng)?;
                if adapting {
                    da.update(t.accept_prob);
                }
            }
        }
        if matches!(st.spec.weights, WeightPrior::Distance(_)) {
            for _ in 0..reps {
                let da = &mut self.adaptation.weights;
                let step = if adapting { da.step() } else { da.final_step() };
                let t = hmc_weight_locations(&st.net, &mut st.spec, step, l, &mut rng)?;
                if adapting {
                    da.update(t.accept_prob);
                }
            }
        }
        Ok(())
    }

    /// The current state as a retained sample.
    pub fn sample(&self, log_prob: f64) -> ChainSample {
        ChainSample {
            iteration: self.iteration,
            net: self.state.net.clone(),
            spec: self.state.spec.clone(),
            nu: self.state.obs.nu.clone(),
            log_prob,
        }
    }

    /// Whether the state after the sweep numbered `iteration` (1-based) is retained.
    pub fn retains(&self, iteration: u64) -> bool {
        let i = iteration as usize;
        i > self.config.burn_in && (i - self.config.burn_in) % self.config.thin == 0
    }

    /// Run the remaining sweeps, calling `on_sweep` after each, and collect retained samples.
    pub fn run<F: FnMut(&SweepRecord, Option<&ChainSample>) -> Result<()>>(&mut self, mut on_sweep: F) -> Result<Chain> {
        let mut chain = Chain::new(self.state.obs.kind, self.config.nu_prior, self.basis.clone());
        while (self.iteration as usize) < self.config.iterations {
            let rec = self.sweep()?;
            let kept = if self.retains(rec.iteration) {
                chain.samples.push(self.sample(rec.log_prob));
                chain.samples.last()
            } else {
                None
            };
            on_sweep(&rec, kept)?;
        }
        Ok(chain)
    }
}

fn initial_omega(data: &SpikeData, psi: &DMatrix<f64>, obs: &ObsModel) -> DMatrix<f64> {
    DMatrix::from_fn(data.bins(), data.neurons(), |t, n| {
        let b = obs.neuron(n).shape_b(data.get(t, n));
        pg_mean(b, psi[(t, n)]).unwrap_or(0.25)
    })
}

fn with_context(e: Error, it: u64, neuron: Option<usize>) -> Error {
    let at = match neuron {
        Some(n) => format!("iteration {it}, neuron {n}"),
        None => format!("iteration {it}"),
    };
    match e {
        Error::Numerical(m) => Error::Numerical(format!("{at}: {m}")),
        Error::Stability(m) => Error::Stability(format!("{at}: {m}")),
        other => other,
    }
}
