//! Run configuration: a flat `key = value` file with dotted section keys.
//!
//! ```text
//! seed = 7
//! model.adjacency = "distance"
//! model.weights = "sbm"
//! sweep.iterations = 1000
//! io.data = "data.nglm"
//! ```
//!
//! Every key is optional; unknown keys are errors.

use std::path::{Path, PathBuf};

use netglm_core::gibbs::GammaPrior;
use netglm_core::network::{BiasPrior, Hyperpriors};
use netglm_core::simulate::BenchmarkScale;
use netglm_core::stats::{InvGammaPrior, NigPrior, NiwPrior};
use netglm_core::{AdjacencyKind, ObsKind, PriorConfig, SelfEdges, SweepConfig, Updates, WeightKind};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Written as a string when it exceeds the largest TOML integer.
    #[serde(with = "seed_repr")]
    pub seed: u64,
    pub obs: ObsSection,
    pub model: ModelSection,
    pub prior: PriorSection,
    pub basis: BasisSection,
    pub sweep: SweepSection,
    pub io: IoSection,
    pub simulate: SimulateSection,
    pub bench: BenchSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            obs: ObsSection::default(),
            model: ModelSection::default(),
            prior: PriorSection::default(),
            basis: BasisSection::default(),
            sweep: SweepSection::default(),
            io: IoSection::default(),
            simulate: SimulateSection::default(),
            bench: BenchSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObsSection {
    pub kind: ObsKind,
    /// Binomial trials or negative binomial starting shape, shared by all neurons.
    /// Unset: binomial uses each neuron's max count, negative binomial starts at 1.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nu: Option<f64>,
    pub nu_prior_shape: f64,
    pub nu_prior_rate: f64,
}

impl Default for ObsSection {
    fn default() -> Self {
        let g = GammaPrior::default();
        Self { kind: ObsKind::Bernoulli, nu: None, nu_prior_shape: g.shape, nu_prior_rate: g.rate }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub adjacency: AdjacencyKind,
    pub weights: WeightKind,
    pub classes: usize,
    pub dim: usize,
    pub self_edges: SelfEdges,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            adjacency: AdjacencyKind::Distance,
            weights: WeightKind::Sbm,
            classes: 2,
            dim: 2,
            self_edges: SelfEdges::Prior,
        }
    }
}

/// Hyperparameters. Weight blocks use a normal-inverse-Wishart prior with an
/// isotropic scale matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorSection {
    pub rho_alpha: f64,
    pub rho_beta: f64,
    pub dirichlet_alpha: f64,
    pub weight_mean: f64,
    pub weight_kappa: f64,
    pub weight_scale: f64,
    /// Extra degrees of freedom beyond `K`.
    pub weight_dof_extra: f64,
    pub location_shape: f64,
    pub location_rate: f64,
    pub gamma0_mean: f64,
    pub gamma0_var: f64,
    pub baseline_mean: f64,
    pub baseline_kappa: f64,
    pub baseline_shape: f64,
    pub baseline_rate: f64,
    /// Resample the bias mean and variance under a normal-inverse-gamma prior.
    pub bias_hyper: bool,
    pub bias_mean: f64,
    pub bias_var: f64,
    pub bias_kappa: f64,
    pub bias_shape: f64,
    pub bias_rate: f64,
}

impl Default for PriorSection {
    fn default() -> Self {
        let h = Hyperpriors::default_for(1);
        let bias_nig = h.bias.expect("bias hyperprior is on by default");
        Self {
            rho_alpha: h.rho_alpha,
            rho_beta: h.rho_beta,
            dirichlet_alpha: h.dirichlet_alpha,
            weight_mean: h.niw.mean[0],
            weight_kappa: h.niw.kappa,
            weight_scale: h.niw.scale[0],
            weight_dof_extra: h.niw.dof - 1.0,
            location_shape: h.location_scale.shape,
            location_rate: h.location_scale.rate,
            gamma0_mean: h.gamma0_mean,
            gamma0_var: h.gamma0_var,
            baseline_mean: h.baseline.mean,
            baseline_kappa: h.baseline.kappa,
            baseline_shape: h.baseline.shape,
            baseline_rate: h.baseline.rate,
            bias_hyper: true,
            bias_mean: bias_nig.mean,
            bias_var: 1.0,
            bias_kappa: bias_nig.kappa,
            bias_shape: bias_nig.shape,
            bias_rate: bias_nig.rate,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BasisSection {
    /// One exponential basis function per time constant.
    pub tau_ms: Vec<f64>,
    /// Lag window in bins; 0 covers five time constants of the slowest function.
    pub dt_max: usize,
}

impl Default for BasisSection {
    fn default() -> Self {
        Self { tau_ms: vec![netglm_core::simulate::BENCHMARK_TAU_MS], dt_max: netglm_core::simulate::BENCHMARK_DT_MAX }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub hmc_step: f64,
    pub hmc_leapfrog: usize,
    pub hmc_transitions: usize,
    pub hmc_target_accept: f64,
    pub refactor_every: usize,
    /// Write a resumable checkpoint every this many sweeps; 0 only at the end.
    pub checkpoint_every: usize,
    pub update_omega: bool,
    pub update_adjacency: bool,
    pub update_weights: bool,
    pub update_dispersion: bool,
    pub update_latents: bool,
    pub update_globals: bool,
}

impl Default for SweepSection {
    fn default() -> Self {
        let s = SweepConfig::default();
        Self {
            iterations: s.iterations,
            burn_in: s.burn_in,
            thin: s.thin,
            hmc_step: s.hmc_step,
            hmc_leapfrog: s.hmc_leapfrog,
            hmc_transitions: s.hmc_transitions,
            hmc_target_accept: s.hmc_target_accept,
            refactor_every: s.refactor_every,
            checkpoint_every: 50,
            update_omega: true,
            update_adjacency: true,
            update_weights: true,
            update_dispersion: true,
            update_latents: true,
            update_globals: true,
        }
    }
}

/// Dataset file encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataFormat {
    Binary,
    Text,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IoSection {
    /// Observed dataset (`fit`, `predict`, `compare`).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data: Option<PathBuf>,
    /// Neurons of `data` withheld from fitting and used as held-out trains.
    pub heldout_neurons: Vec<usize>,
    /// A separate dataset of held-out trains, used instead of `heldout_neurons`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub heldout: Option<PathBuf>,
    /// Chain directory for `predict`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub chain: Option<PathBuf>,
    /// Chain directories for `compare`.
    pub chains: Vec<PathBuf>,
    /// Truth sidecar for recovery metrics in `predict`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub truth: Option<PathBuf>,
    /// Format written by `simulate`.
    pub format: DataFormat,
}

impl Default for IoSection {
    fn default() -> Self {
        Self {
            data: None,
            heldout_neurons: Vec::new(),
            heldout: None,
            chain: None,
            chains: Vec::new(),
            truth: None,
            format: DataFormat::Binary,
        }
    }
}

/// What `simulate` generates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SimulateSource {
    /// The fixed benchmark generator (`simulate.scale`).
    Benchmark,
    /// A draw from the `model` and `prior` sections.
    Prior,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSection {
    pub source: SimulateSource,
    pub scale: BenchmarkScale,
    pub neurons: usize,
    pub bins: usize,
    pub bin_ms: f64,
    /// Mean spikes per bin above which simulation fails; 0 disables the guard.
    pub ceiling: f64,
}

impl Default for SimulateSection {
    fn default() -> Self {
        Self { source: SimulateSource::Benchmark, scale: BenchmarkScale::Desk, neurons: 20, bins: 10_000, bin_ms: 1.0, ceiling: 0.9 }
    }
}

/// Which quantity the scaling benchmark varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BenchAxis {
    #[serde(rename = "T")]
    Bins,
    #[serde(rename = "N")]
    Neurons,
    #[serde(rename = "rho")]
    Density,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchSection {
    pub axis: BenchAxis,
    pub grid: Vec<f64>,
    /// Sizes held fixed while the axis varies.
    pub neurons: usize,
    pub bins: usize,
    pub rho: f64,
    /// Timed sweeps per grid point, after `warmup` untimed ones.
    pub iterations: usize,
    pub warmup: usize,
}

impl Default for BenchSection {
    fn default() -> Self {
        Self {
            axis: BenchAxis::Bins,
            grid: vec![5000.0, 10_000.0],
            neurons: 20,
            bins: 10_000,
            rho: 0.2,
            iterations: 20,
            warmup: 2,
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// Flat `key = value` lines, one per setting, in declaration order.
    pub fn to_flat(&self) -> String {
        let value = toml::Value::try_from(self).expect("config serializes");
        let mut out = String::new();
        flatten("", &value, &mut out);
        out
    }

    pub fn prior_config(&self) -> CliResult<PriorConfig> {
        let p = &self.prior;
        let m = &self.model;
        let k = self.basis.tau_ms.len();
        let mut scale = vec![0.0; k * k];
        for i in 0..k {
            scale[i * k + i] = p.weight_scale;
        }
        let hyper = Hyperpriors {
            rho_alpha: p.rho_alpha,
            rho_beta: p.rho_beta,
            dirichlet_alpha: p.dirichlet_alpha,
            niw: NiwPrior { mean: vec![p.weight_mean; k], kappa: p.weight_kappa, scale, dof: k as f64 + p.weight_dof_extra },
            location_scale: InvGammaPrior { shape: p.location_shape, rate: p.location_rate },
            gamma0_mean: p.gamma0_mean,
            gamma0_var: p.gamma0_var,
            baseline: NigPrior { mean: p.baseline_mean, kappa: p.baseline_kappa, shape: p.baseline_shape, rate: p.baseline_rate },
            bias: p.bias_hyper.then_some(NigPrior {
                mean: p.bias_mean,
                kappa: p.bias_kappa,
                shape: p.bias_shape,
                rate: p.bias_rate,
            }),
        };
        let cfg = PriorConfig {
            adjacency: m.adjacency,
            weights: m.weights,
            k,
            classes: m.classes,
            dim: m.dim,
            self_edges: m.self_edges,
            bias: BiasPrior { mean: p.bias_mean, var: p.bias_var },
            hyper,
        };
        cfg.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn sweep_config(&self) -> CliResult<SweepConfig> {
        let s = &self.sweep;
        let cfg = SweepConfig {
            iterations: s.iterations,
            burn_in: s.burn_in,
            thin: s.thin,
            hmc_step: s.hmc_step,
            hmc_leapfrog: s.hmc_leapfrog,
            hmc_transitions: s.hmc_transitions,
            hmc_target_accept: s.hmc_target_accept,
            refactor_every: s.refactor_every,
            nu_prior: GammaPrior { shape: self.obs.nu_prior_shape, rate: self.obs.nu_prior_rate },
            updates: Updates {
                omega: s.update_omega,
                adjacency: s.update_adjacency,
                weights: s.update_weights,
                dispersion: s.update_dispersion,
                latents: s.update_latents,
                globals: s.update_globals,
            },
            seed: self.seed,
        };
        cfg.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(cfg)
    }

    /// A short `adjacency-weights` label for reports.
    pub fn model_name(&self) -> String {
        format!("{}-{}", self.model.adjacency.name(), self.model.weights.name())
    }
}

mod seed_repr {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(seed: &u64, s: S) -> Result<S::Ok, S::Error> {
        match i64::try_from(*seed) {
            Ok(v) => s.serialize_i64(v),
            Err(_) => s.serialize_str(&seed.to_string()),
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Int(u64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<u64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Int(v) => Ok(v),
            Repr::Text(t) => t.parse().map_err(|_| serde::de::Error::custom(format!("seed `{t}` is not a 64-bit unsigned integer"))),
        }
    }
}

fn flatten(prefix: &str, value: &toml::Value, out: &mut String) {
    match value {
        toml::Value::Table(t) => {
            for (k, v) in t {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(&key, v, out);
            }
        }
        v => {
            out.push_str(prefix);
            out.push_str(" = ");
            out.push_str(&v.to_string());
            out.push('\n');
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let c = RunConfig::default();
        let flat = c.to_flat();
        assert!(flat.lines().all(|l| !l.starts_with('[')));
        assert!(flat.contains("model.adjacency = \"distance\""));
        assert_eq!(RunConfig::parse(&flat).unwrap(), c);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(matches!(RunConfig::parse("sweep.iteration = 3"), Err(CliError::Config(_))));
        assert!(matches!(RunConfig::parse("colour = 1"), Err(CliError::Config(_))));
    }

    #[test]
    fn partial_file_keeps_defaults() {
        let c = RunConfig::parse("seed = 9\nmodel.weights = \"distance\"\nbench.axis = \"rho\"\n").unwrap();
        assert_eq!(c.seed, 9);
        assert_eq!(c.model.weights, WeightKind::Distance);
        assert_eq!(c.bench.axis, BenchAxis::Density);
        assert_eq!(c.sweep, SweepSection::default());
    }

    #[test]
    fn defaults_match_core_defaults() {
        let c = RunConfig::default();
        let core = PriorConfig::new(AdjacencyKind::Distance, WeightKind::Sbm, 1);
        let mine = c.prior_config().unwrap();
        assert_eq!(mine.hyper, core.hyper);
        let mut sweep = SweepConfig::default();
        sweep.seed = c.seed;
        assert_eq!(c.sweep_config().unwrap(), sweep);
    }

    #[test]
    fn invalid_values_are_config_errors() {
        let mut c = RunConfig::default();
        c.sweep.burn_in = c.sweep.iterations + 1;
        assert!(matches!(c.sweep_config(), Err(CliError::Config(_))));
        let mut c = RunConfig::default();
        c.model.classes = 0;
        assert!(matches!(c.prior_config(), Err(CliError::Config(_))));
    }
}
