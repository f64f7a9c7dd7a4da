//! Fixtures shared by the sampler benchmarks.

use netglm_core::simulate::{benchmark_spec, GroundTruth, SimulationOptions, BENCHMARK_DT_MAX, BENCHMARK_TAU_MS};
use netglm_core::{AdjacencyKind, Basis, ObsModel, PriorConfig, Sampler, SweepConfig, Updates, WeightKind};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// A dataset simulated from the benchmark prior with `neurons` neurons and
/// `bins` bins. Draws that trip the firing-rate guard are replaced by the
/// next seed.
pub fn simulated(neurons: usize, bins: usize, seed: u64) -> GroundTruth {
    let basis = Basis::exponentials(&[BENCHMARK_TAU_MS], 1.0, BENCHMARK_DT_MAX).expect("valid basis");
    (seed..seed + 100)
        .find_map(|s| {
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            let spec = benchmark_spec(neurons, &mut rng);
            let obs = ObsModel::bernoulli(neurons);
            GroundTruth::simulate(spec, bins, obs, basis.clone(), &SimulationOptions::default(), 1.0, &mut rng).ok()
        })
        .expect("a stable draw within 100 seeds")
}

/// A sampler on `truth` under the given network model, started from its prior.
pub fn sampler(truth: &GroundTruth, adjacency: AdjacencyKind, weights: WeightKind, updates: Updates) -> Sampler {
    let cfg = PriorConfig::new(adjacency, weights, truth.basis.k());
    let config = SweepConfig { iterations: usize::MAX, burn_in: 0, updates, ..Default::default() };
    Sampler::new(truth.data.clone(), truth.basis.clone(), truth.obs.clone(), &cfg, config).expect("valid sampler")
}
