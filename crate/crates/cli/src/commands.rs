//! The five subcommands as library functions. Each takes a parsed
//! configuration and an output directory and writes its results there.

use std::path::{Path, PathBuf};

use netglm_core::activation::default_dt_max;
use netglm_core::eval::{self, Comparison, DistanceRecovery};
use netglm_core::network::{AdjacencyPrior, BiasPrior, GaussianBlock, Hyperpriors, WeightPrior};
use netglm_core::simulate::{self, GroundTruth, SimulationOptions};
use netglm_core::{
    Basis, Chain, NetworkState, ObsKind, ObsModel, Phase, PriorSpec, Sampler, SelfEdges, SpikeData,
    Streams,
};
use serde::{Deserialize, Serialize};

use crate::config::{BenchAxis, DataFormat, RunConfig, SimulateSource};
use crate::dataset;
use crate::error::{CliError, CliResult};
use crate::store::{ChainStore, Manifest};

pub const TRUTH_FILE: &str = "truth.json";

fn ensure_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn write_file(path: &Path, contents: &[u8]) -> CliResult<()> {
    std::fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

fn required<'a>(p: &'a Option<PathBuf>, key: &str) -> CliResult<&'a Path> {
    p.as_deref().ok_or_else(|| CliError::Config(format!("`{key}` is not set")))
}

/// Basis for data with bins of `bin_ms`.
pub fn basis_for(cfg: &RunConfig, bin_ms: f64) -> CliResult<Basis> {
    let taus = &cfg.basis.tau_ms;
    if taus.is_empty() {
        return Err(CliError::Config("`basis.tau_ms` must list at least one time constant".into()));
    }
    let dt_max = match cfg.basis.dt_max {
        0 => default_dt_max(taus.iter().copied().fold(0.0, f64::max), bin_ms),
        d => d,
    };
    Basis::exponentials(taus, bin_ms, dt_max).map_err(|e| CliError::Config(e.to_string()))
}

/// Observation model for fitting `data`.
pub fn obs_model_for(cfg: &RunConfig, data: &SpikeData) -> CliResult<ObsModel> {
    let n = data.neurons();
    let model = match cfg.obs.kind {
        ObsKind::Bernoulli => Ok(ObsModel::bernoulli(n)),
        ObsKind::Binomial => match cfg.obs.nu {
            Some(nu) => ObsModel::uniform(ObsKind::Binomial, nu, n),
            None => ObsModel::new(ObsKind::Binomial, (0..n).map(|m| f64::from(data.max_count(m).max(1))).collect()),
        },
        ObsKind::NegBinomial => ObsModel::uniform(ObsKind::NegBinomial, cfg.obs.nu.unwrap_or(1.0), n),
    };
    model.map_err(|e| CliError::Config(e.to_string()))
}

/// Everything that generated a simulated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthSidecar {
    /// Dataset file name, relative to the sidecar.
    pub dataset: String,
    pub dataset_sha256: String,
    pub neurons: usize,
    pub bins: usize,
    pub bin_ms: f64,
    pub obs: ObsModel,
    pub basis: Basis,
    pub net: NetworkState,
    pub spec: PriorSpec,
}

impl TruthSidecar {
    pub fn load(path: &Path) -> CliResult<Self> {
        let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_slice(&bytes).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
    }

    pub fn weight_types(&self) -> Option<&[usize]> {
        match (&self.spec.weights, &self.spec.adjacency) {
            (WeightPrior::Sbm(s), _) => Some(&s.assignments),
            (_, AdjacencyPrior::Sbm(s)) => Some(&s.assignments),
            _ => None,
        }
    }

    pub fn locations(&self) -> Option<(&[f64], usize)> {
        match (&self.spec.adjacency, &self.spec.weights) {
            (AdjacencyPrior::Distance(d), _) => Some((&d.locations, d.dim)),
            (_, WeightPrior::Distance(d)) => Some((&d.locations, d.dim)),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulateReport {
    pub data_path: PathBuf,
    pub truth_path: PathBuf,
    pub truth: TruthSidecar,
}

/// Generate a dataset and its truth sidecar in `out`.
pub fn cmd_simulate(cfg: &RunConfig, out: &Path) -> CliResult<SimulateReport> {
    let mut rng = Streams::new(cfg.seed).rng(Phase::Simulate, 0, 0);
    let sim = &cfg.simulate;
    let truth = match sim.source {
        SimulateSource::Benchmark => simulate::make_synthetic_benchmark(sim.scale, &mut rng)?,
        SimulateSource::Prior => {
            if sim.neurons == 0 || sim.bins == 0 {
                return Err(CliError::Config("`simulate.neurons` and `simulate.bins` must be positive".into()));
            }
            let spec = cfg.prior_config()?.draw(sim.neurons, &mut rng)?;
            let basis = basis_for(cfg, sim.bin_ms)?;
            let nu = cfg.obs.nu.unwrap_or(1.0);
            let obs = ObsModel::uniform(cfg.obs.kind, nu, sim.neurons).map_err(|e| CliError::Config(e.to_string()))?;
            let options = SimulationOptions { ceiling: (sim.ceiling > 0.0).then_some(sim.ceiling), ..Default::default() };
            GroundTruth::simulate(spec, sim.bins, obs, basis, &options, sim.bin_ms, &mut rng)?
        }
    };
    ensure_dir(out)?;
    let name = match cfg.io.format {
        DataFormat::Binary => "data.nglm",
        DataFormat::Text => "data.txt",
    };
    let data_path = out.join(name);
    let sha = dataset::write(&data_path, &truth.data, cfg.io.format)?;
    let sidecar = TruthSidecar {
        dataset: name.into(),
        dataset_sha256: sha,
        neurons: truth.data.neurons(),
        bins: truth.data.bins(),
        bin_ms: truth.data.bin_ms(),
        obs: truth.obs,
        basis: truth.basis,
        net: truth.net,
        spec: truth.spec,
    };
    let truth_path = out.join(TRUTH_FILE);
    let mut json = serde_json::to_vec_pretty(&sidecar).expect("serializable");
    json.push(b'\n');
    write_file(&truth_path, &json)?;
    Ok(SimulateReport { data_path, truth_path, truth: sidecar })
}

/// Observed and held-out parts of the configured dataset.
pub struct Split {
    pub observed: SpikeData,
    pub observed_ids: Vec<usize>,
    pub heldout: Option<SpikeData>,
}

pub fn load_split(cfg: &RunConfig) -> CliResult<Split> {
    let data = dataset::read(required(&cfg.io.data, "io.data")?)?;
    let n = data.neurons();
    let held = &cfg.io.heldout_neurons;
    if let Some(&bad) = held.iter().find(|&&h| h >= n) {
        return Err(CliError::Config(format!("held-out neuron {bad} is out of range for {n} neurons")));
    }
    let mut sorted = held.clone();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != held.len() {
        return Err(CliError::Config("`io.heldout_neurons` lists a neuron twice".into()));
    }
    let observed_ids: Vec<usize> = (0..n).filter(|i| !held.contains(i)).collect();
    if observed_ids.is_empty() {
        return Err(CliError::Config("every neuron is held out".into()));
    }
    let observed = data.select_neurons(&observed_ids)?;
    let heldout = match &cfg.io.heldout {
        Some(path) => Some(dataset::read(path)?),
        None if !held.is_empty() => Some(data.select_neurons(held)?),
        None => None,
    };
    Ok(Split { observed, observed_ids, heldout })
}

/// Controls for [`cmd_fit`] beyond the configuration.
#[derive(Debug, Clone, Copy, Default)]
pub struct FitOptions {
    /// Continue the chain in the output directory from its last checkpoint.
    pub resume: bool,
    /// Stop (as if interrupted) after this sweep.
    pub stop_after: Option<u64>,
}

/// Fit the configured model and persist the chain in `out`. Progress lines go
/// to `progress.log` in `out` and to `log`.
pub fn cmd_fit(cfg: &RunConfig, out: &Path, opts: FitOptions, log: &mut dyn FnMut(&str)) -> CliResult<Chain> {
    let (cfg, mut store, checkpoint) = if opts.resume {
        let store = ChainStore::open(out)?;
        let stored = RunConfig::parse(&store.manifest().config)?;
        let cp = store.path(crate::store::CHECKPOINT).exists().then(|| store.read_checkpoint()).transpose()?;
        (stored, Some(store), cp)
    } else {
        (cfg.clone(), None, None)
    };
    let split = load_split(&cfg)?;
    let data = split.observed;
    let basis = basis_for(&cfg, data.bin_ms())?;
    let sweep = cfg.sweep_config()?;
    let data_sha = dataset::sha256_hex(&dataset::encode_binary(&data));
    if let Some(s) = &store {
        if s.manifest().data_sha256 != data_sha {
            return Err(CliError::Data(format!("{}: the chain was fitted to different data", s.dir().display())));
        }
    }

    let (mut sampler, mut store) = match (checkpoint, store.take()) {
        (Some(cp), Some(store)) => {
            store.truncate_after(cp.iteration)?;
            store.truncate_progress(cp.iteration)?;
            (Sampler::resume(data, basis, cp, sweep)?, store)
        }
        _ => {
            let obs = obs_model_for(&cfg, &data)?;
            let manifest = Manifest::new(
                cfg.to_flat(),
                cfg.seed,
                cfg.model_name(),
                obs.kind,
                sweep.nu_prior,
                basis.clone(),
                data.neurons(),
                data.bins(),
                data_sha,
                split.observed_ids,
            );
            let store = ChainStore::create(out, manifest)?;
            (Sampler::new(data, basis, obs, &cfg.prior_config()?, sweep)?, store)
        }
    };

    let mut chain = store.load_chain()?;
    let every = cfg.sweep.checkpoint_every as u64;
    let total = cfg.sweep.iterations as u64;
    while sampler.iteration() < total {
        let rec = sampler.sweep()?;
        let line = rec.log_line();
        store.append_progress(&line)?;
        log(&line);
        if sampler.retains(rec.iteration) {
            let s = sampler.sample(rec.log_prob);
            store.append(&s)?;
            chain.samples.push(s);
        }
        if (every > 0 && rec.iteration % every == 0) || rec.iteration == total {
            store.write_checkpoint(&sampler.checkpoint())?;
        }
        if opts.stop_after == Some(rec.iteration) {
            return Ok(chain);
        }
    }
    write_edge_table(&store.path("edge_marginals.tsv"), &chain)?;
    Ok(chain)
}

fn write_edge_table(path: &Path, chain: &Chain) -> CliResult<()> {
    let Some(n) = chain.neurons() else {
        return Ok(());
    };
    let marg = chain.edge_marginals();
    let w = chain.mean_effective_weights();
    let k = chain.basis.k();
    let mut s = String::from("from\tto\tedge_probability\tmean_effective_weight\n");
    for m in 0..n {
        for nn in 0..n {
            let i = m * n + nn;
            let mean_w: f64 = w[i * k..(i + 1) * k].iter().sum();
            s.push_str(&format!("{m}\t{nn}\t{}\t{}\n", marg[i], mean_w));
        }
    }
    write_file(path, s.as_bytes())
}

/// Recovery of a known ground truth by a chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recovery {
    pub auc: Option<f64>,
    pub distance: Option<DistanceRecovery>,
    pub types: Option<f64>,
}

/// Compare a chain with a truth sidecar over the fitted neurons `ids`.
pub fn recovery(chain: &Chain, truth: &TruthSidecar, ids: &[usize]) -> CliResult<Recovery> {
    let n = ids.len();
    let sub = truth.net.subnetwork(ids);
    let auc = eval::adjacency_auc(&chain.edge_marginals(), sub.adjacency(), n)?;
    let distance = match (chain.adjacency_locations(), truth.locations()) {
        (Some(samples), Some((locs, dim))) if n >= 3 && samples.first().is_some_and(|s| s.len() == n * dim) => {
            let sub_locs: Vec<f64> = ids.iter().flat_map(|&i| locs[i * dim..(i + 1) * dim].iter().copied()).collect();
            Some(eval::distance_recovery(&samples, &sub_locs, dim)?)
        }
        _ => None,
    };
    let types = match (chain.weight_assignments().or_else(|| chain.adjacency_assignments()), truth.weight_types()) {
        (Some(samples), Some(t)) if n >= 2 => {
            let sub_t: Vec<usize> = ids.iter().map(|&i| t[i]).collect();
            Some(eval::type_recovery(&samples, &sub_t)?)
        }
        _ => None,
    };
    Ok(Recovery { auc, distance, types })
}

fn open_chain(dir: &Path) -> CliResult<(ChainStore, Chain)> {
    let store = ChainStore::open(dir)?;
    let chain = store.load_chain()?;
    if chain.is_empty() {
        return Err(CliError::Config(format!("{}: the chain has no retained samples", dir.display())));
    }
    Ok((store, chain))
}

fn check_chain_data(store: &ChainStore, split: &Split) -> CliResult<()> {
    let m = store.manifest();
    if m.neuron_ids != split.observed_ids
        || m.data_sha256 != dataset::sha256_hex(&dataset::encode_binary(&split.observed))
    {
        return Err(CliError::Config(format!(
            "{}: the chain was not fitted to the configured observed data",
            store.dir().display()
        )));
    }
    Ok(())
}

fn write_per_neuron(path: &Path, cmp: &Comparison) -> CliResult<()> {
    let mut s = String::from("# predictive log likelihood, nats per held-out neuron and per time bin\n");
    s.push_str("model\theldout\tll\tse\tll_per_bin\tq\n");
    for m in &cmp.ranking {
        for (h, e) in m.per_neuron.iter().enumerate() {
            s.push_str(&format!("{}\t{h}\t{}\t{}\t{}\t{}\n", m.name, e.value, e.std_error, e.value / m.bins as f64, e.q));
        }
    }
    write_file(path, s.as_bytes())
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictReport {
    /// Held-out predictive likelihood, when held-out trains are configured.
    pub comparison: Option<Comparison>,
    pub recovery: Option<Recovery>,
}

/// Held-out predictive likelihood of one chain and, when a truth sidecar is
/// configured, recovery metrics. At least one of the two must be configured.
pub fn cmd_predict(cfg: &RunConfig, out: &Path) -> CliResult<PredictReport> {
    let (store, chain) = open_chain(required(&cfg.io.chain, "io.chain")?)?;
    let split = load_split(cfg)?;
    check_chain_data(&store, &split)?;
    if split.heldout.is_none() && cfg.io.truth.is_none() {
        return Err(CliError::Config("`predict` needs held-out neurons or a truth sidecar".into()));
    }
    ensure_dir(out)?;
    let comparison = match &split.heldout {
        Some(heldout) => {
            let name = store.manifest().model.clone();
            let c = eval::compare_models(&[(&name, &chain)], &split.observed, heldout, cfg.seed)?;
            write_per_neuron(&out.join("predict.tsv"), &c)?;
            Some(c)
        }
        None => None,
    };
    let recovery = match &cfg.io.truth {
        Some(path) => {
            let truth = TruthSidecar::load(path)?;
            let r = recovery(&chain, &truth, &split.observed_ids)?;
            write_recovery(out, &r)?;
            Some(r)
        }
        None => None,
    };
    Ok(PredictReport { comparison, recovery })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "undefined".into(), |x| x.to_string())
}

fn write_recovery(out: &Path, r: &Recovery) -> CliResult<()> {
    let summary = format!(
        "metric\tvalue\nadjacency_auc\t{}\ndistance_correlation\t{}\ntype_coclustering\t{}\n",
        fmt_opt(r.auc),
        fmt_opt(r.distance.as_ref().map(|d| d.correlation)),
        fmt_opt(r.types)
    );
    write_file(&out.join("recovery.tsv"), summary.as_bytes())?;
    if let Some(d) = &r.distance {
        let mut s = String::from("true_distance\tinferred_distance\n");
        for (a, b) in &d.pairs {
            s.push_str(&format!("{a}\t{b}\n"));
        }
        write_file(&out.join("distance_pairs.tsv"), s.as_bytes())?;
        let dim = d.dim;
        let n = d.aligned.len() / dim;
        let mut s = String::from("neuron\tcoordinates\n");
        for i in 0..n {
            let row: Vec<String> = d.aligned[i * dim..(i + 1) * dim].iter().map(|v| v.to_string()).collect();
            s.push_str(&format!("{i}\t{}\n", row.join("\t")));
        }
        write_file(&out.join("aligned_locations.tsv"), s.as_bytes())?;
    }
    Ok(())
}

/// Rank several chains fitted to the same data by held-out predictive likelihood.
pub fn cmd_compare(cfg: &RunConfig, out: &Path) -> CliResult<Comparison> {
    if cfg.io.chains.is_empty() {
        return Err(CliError::Config("`io.chains` lists no chains".into()));
    }
    let split = load_split(cfg)?;
    let heldout = split.heldout.as_ref().ok_or_else(|| CliError::Config("no held-out neurons configured".into()))?;
    let mut fits = Vec::new();
    for dir in &cfg.io.chains {
        let (store, chain) = open_chain(dir)?;
        check_chain_data(&store, &split)?;
        let mut name = store.manifest().model.clone();
        if fits.iter().any(|(n, _): &(String, Chain)| *n == name) {
            name = format!("{name}@{}", dir.display());
        }
        fits.push((name, chain));
    }
    let refs: Vec<(&str, &Chain)> = fits.iter().map(|(n, c)| (n.as_str(), c)).collect();
    let cmp = eval::compare_models(&refs, &split.observed, heldout, cfg.seed)?;
    ensure_dir(out)?;
    write_file(&out.join("ranking.tsv"), cmp.table().as_bytes())?;
    write_per_neuron(&out.join("per_neuron.tsv"), &cmp)?;
    Ok(cmp)
}

/// Median per-sweep phase times at one grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub value: f64,
    pub neurons: usize,
    pub bins: usize,
    pub rho: f64,
    pub t_obs: f64,
    pub t_net: f64,
    pub t_model: f64,
    /// Mean fraction of present edges over the timed sweeps.
    pub density: f64,
}

fn median(xs: &mut [f64]) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        (xs[n / 2 - 1] + xs[n / 2]) / 2.0
    }
}

/// Synthetic data with independent edges of probability `rho` and weak weights.
fn bench_truth(neurons: usize, bins: usize, rho: f64, basis: &Basis, seed: u64) -> CliResult<GroundTruth> {
    let k = basis.k();
    let mut cov = vec![0.0; k * k];
    for i in 0..k {
        cov[i * k + i] = 0.1 * 0.1;
    }
    let mut hyper = Hyperpriors::default_for(k);
    hyper.bias = None;
    let spec = PriorSpec {
        neurons,
        k,
        adjacency: AdjacencyPrior::Independent { rho },
        weights: WeightPrior::Independent(GaussianBlock { mean: vec![0.0; k], cov }),
        bias: BiasPrior { mean: -3.0, var: 0.01 },
        hyper,
        self_edges: SelfEdges::Prior,
    };
    let mut rng = Streams::new(seed).rng(Phase::Simulate, 0, 0);
    Ok(GroundTruth::simulate(
        spec,
        bins,
        ObsModel::bernoulli(neurons),
        basis.clone(),
        &SimulationOptions::default(),
        1.0,
        &mut rng,
    )?)
}

/// Time sweeps over a grid of `T`, `N`, or edge density. The `T` and `N` axes
/// fit the configured model; the density axis fits under the fixed generating
/// prior so the active set has the intended size.
pub fn cmd_bench(cfg: &RunConfig, out: &Path, log: &mut dyn FnMut(&str)) -> CliResult<Vec<BenchRow>> {
    let b = &cfg.bench;
    if b.grid.is_empty() || b.iterations == 0 {
        return Err(CliError::Config("`bench.grid` and `bench.iterations` must be non-empty".into()));
    }
    let basis = basis_for(cfg, 1.0)?;
    let mut rows = Vec::with_capacity(b.grid.len());
    for (i, &value) in b.grid.iter().enumerate() {
        let (neurons, bins, rho) = match b.axis {
            BenchAxis::Bins => (b.neurons, value as usize, b.rho),
            BenchAxis::Neurons => (value as usize, b.bins, b.rho),
            BenchAxis::Density => (b.neurons, b.bins, value),
        };
        if neurons == 0 || bins == 0 || !(0.0..=1.0).contains(&rho) {
            return Err(CliError::Config(format!("invalid bench grid point {value}")));
        }
        let truth = bench_truth(neurons, bins, rho, &basis, cfg.seed.wrapping_add(i as u64))?;
        let mut sweep = cfg.sweep_config()?;
        sweep.iterations = b.warmup + b.iterations;
        sweep.burn_in = sweep.iterations;
        let spec = if b.axis == BenchAxis::Density {
            // the generating prior, held fixed, keeps the active set near rho * N
            sweep.updates.globals = false;
            truth.spec.clone()
        } else {
            let mut rng = Streams::new(cfg.seed).rng(Phase::Init, i as u64, 0);
            cfg.prior_config()?.draw(neurons, &mut rng)?
        };
        let mut sampler = Sampler::with_state(truth.data, basis.clone(), truth.net, spec, truth.obs, sweep)?;
        let (mut obs, mut net, mut model, mut density) = (Vec::new(), Vec::new(), Vec::new(), 0.0);
        for it in 0..b.warmup + b.iterations {
            let rec = sampler.sweep()?;
            if it >= b.warmup {
                obs.push(rec.t_obs);
                net.push(rec.t_net);
                model.push(rec.t_model);
                density += sampler.state().net.density();
            }
        }
        let row = BenchRow {
            value,
            neurons,
            bins,
            rho,
            t_obs: median(&mut obs),
            t_net: median(&mut net),
            t_model: median(&mut model),
            density: density / b.iterations as f64,
        };
        log(&format!(
            "bench {}={value} t_obs={:.6} t_net={:.6} t_model={:.6} density={:.3}",
            axis_name(b.axis),
            row.t_obs,
            row.t_net,
            row.t_model,
            row.density
        ));
        rows.push(row);
    }
    ensure_dir(out)?;
    let mut s = format!("# median seconds per sweep; Obs. = auxiliary variables, Net. = adjacency and weights\n{}\tN\tT\trho\tt_obs\tt_net\tt_model\tdensity\n", axis_name(b.axis));
    for r in &rows {
        s.push_str(&format!(
            "{}\t{}\t{}\t{}\t{:.6}\t{:.6}\t{:.6}\t{:.4}\n",
            r.value, r.neurons, r.bins, r.rho, r.t_obs, r.t_net, r.t_model, r.density
        ));
    }
    write_file(&out.join("bench.tsv"), s.as_bytes())?;
    Ok(rows)
}

fn axis_name(a: BenchAxis) -> &'static str {
    match a {
        BenchAxis::Bins => "T",
        BenchAxis::Neurons => "N",
        BenchAxis::Density => "rho",
    }
}
