//! Polya-gamma auxiliary variables and the negative binomial shape update.

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain_err, shape_err, Result};
use crate::polyagamma;
use crate::rng::{ChainRng, Phase, Streams};
use crate::spikes::{softplus, CountModel, ObsKind, ObsModel, SpikeData};
use crate::stats;

/// `omega_t ~ PG(b(s_t, nu), psi_t)` for one neuron.
pub fn sample_omega_column<R: Rng + ?Sized>(counts: &[u32], psi: &[f64], model: &CountModel, rng: &mut R, out: &mut [f64]) {
    for ((o, &s), &p) in out.iter_mut().zip(counts).zip(psi) {
        let b = model.shape_b(s);
        debug_assert!(b > 0.0, "PG shape must be positive");
        *o = polyagamma::sample_unchecked(b, p, rng);
    }
}

/// Draw every `omega_{t,n}`. `psi` is `T x N`. Neurons use independent substreams
/// derived from one seed drawn from `rng`.
pub fn sample_omega<R: Rng + ?Sized>(data: &SpikeData, psi: &DMatrix<f64>, model: &ObsModel, rng: &mut R) -> Result<DMatrix<f64>> {
    let (t, n) = (data.bins(), data.neurons());
    if psi.shape() != (t, n) || model.neurons() != n {
        return Err(shape_err!("activations {:?} and model for {} neurons vs data {t} x {n}", psi.shape(), model.neurons()));
    }
    let streams = Streams::new(rng.random());
    let mut omega = DMatrix::<f64>::zeros(t, n);
    omega.as_mut_slice().par_chunks_mut(t.max(1)).enumerate().for_each(|(j, col)| {
        let mut r = streams.rng(Phase::Omega, 0, j as u64);
        let counts = data.column(j);
        sample_omega_column(&counts, psi.column(j).as_slice(), &model.neuron(j), &mut r, col);
    });
    Ok(omega)
}

/// Chinese restaurant table count: the number of tables occupied by `s`
/// customers with concentration `nu`, `sum_{i=1}^{s} Bern(nu / (nu + i - 1))`.
pub fn crt<R: Rng + ?Sized>(s: u32, nu: f64, rng: &mut R) -> u32 {
    (0..s).filter(|&i| rng.random::<f64>() < nu / (nu + i as f64)).count() as u32
}

/// Gamma prior (shape, rate) on the negative binomial shape.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaPrior {
    pub shape: f64,
    pub rate: f64,
}

impl Default for GammaPrior {
    fn default() -> Self {
        Self { shape: 1.0, rate: 0.1 }
    }
}

/// `nu | s, psi` by augmentation: `l_t ~ CRT(s_t, nu)`, then
/// `nu ~ Gamma(shape + sum l, rate + sum softplus(psi_t))`.
pub fn sample_nu_negbinomial<R: Rng + ?Sized>(
    counts: &[u32],
    psi: &[f64],
    nu: f64,
    prior: GammaPrior,
    rng: &mut R,
) -> Result<f64> {
    if counts.len() != psi.len() {
        return Err(shape_err!("{} counts vs {} activations", counts.len(), psi.len()));
    }
    if !(nu > 0.0) || !(prior.shape > 0.0 && prior.rate > 0.0) {
        return Err(domain_err!("shape {nu} and its gamma prior must be positive"));
    }
    let tables: u64 = counts.iter().map(|&s| crt(s, nu, rng) as u64).sum();
    let exposure: f64 = psi.iter().map(|&p| softplus(p)).sum();
    Ok(stats::gamma(prior.shape + tables as f64, prior.rate + exposure, rng))
}

/// Resample the shape of every negative binomial neuron; other models are left alone.
pub(crate) fn update_dispersion(
    data: &SpikeData,
    psi: &DMatrix<f64>,
    model: &mut ObsModel,
    prior: GammaPrior,
    streams: &Streams,
    iteration: u64,
) -> Result<()> {
    if model.kind != ObsKind::NegBinomial {
        return Ok(());
    }
    let updated: Result<Vec<f64>> = (0..data.neurons())
        .into_par_iter()
        .map(|n| {
            let mut rng: ChainRng = streams.rng(Phase::Dispersion, iteration, n as u64);
            sample_nu_negbinomial(&data.column(n), psi.column(n).as_slice(), model.neuron(n).nu(), prior, &mut rng)
        })
        .collect();
    *model = ObsModel::new(ObsKind::NegBinomial, updated?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use statrs::function::gamma::digamma;

    #[test]
    fn omega_shapes_follow_the_model() {
        // Bernoulli ignores s; NB uses nu + s.
        let data = SpikeData::new(100_000, 1, 1.0, (0..100_000).map(|t| (t % 2) as u32).collect()).unwrap();
        let psi = DMatrix::zeros(100_000, 1);
        let mut rng = ChainRng::seed_from_u64(4);
        let om = sample_omega(&data, &psi, &ObsModel::bernoulli(1), &mut rng).unwrap();
        let m = om.mean();
        let sd = (1.0f64 / 24.0 / 1e5).sqrt();
        assert!((m - 0.25).abs() < 3.0 * sd, "mean {m}");

        let zeros = SpikeData::zeros(100_000, 1, 1.0);
        let nb = ObsModel::uniform(ObsKind::NegBinomial, 2.0, 1).unwrap();
        let om = sample_omega(&zeros, &psi, &nb, &mut rng).unwrap();
        let sd = (2.0f64 / 24.0 / 1e5).sqrt();
        assert!((om.mean() - 0.5).abs() < 3.0 * sd);
        assert!(om.iter().all(|&w| w > 0.0));
    }

    #[test]
    fn omega_is_deterministic_and_checks_shapes() {
        let data = SpikeData::new(3, 2, 1.0, vec![0, 1, 1, 0, 0, 0]).unwrap();
        let psi = DMatrix::from_element(3, 2, 0.5);
        let m = ObsModel::bernoulli(2);
        let a = sample_omega(&data, &psi, &m, &mut ChainRng::seed_from_u64(1)).unwrap();
        let b = sample_omega(&data, &psi, &m, &mut ChainRng::seed_from_u64(1)).unwrap();
        assert_eq!(a, b);
        assert!(sample_omega(&data, &DMatrix::zeros(2, 2), &m, &mut ChainRng::seed_from_u64(1)).is_err());
    }

    #[test]
    fn crt_zero_and_mean() {
        let mut rng = ChainRng::seed_from_u64(7);
        assert!((0..100).all(|_| crt(0, 2.5, &mut rng) == 0));
        let (s, nu) = (10u32, 2.0f64);
        let n = 200_000;
        let draws: Vec<f64> = (0..n).map(|_| crt(s, nu, &mut rng) as f64).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let expected = nu * (digamma(nu + s as f64) - digamma(nu));
        // variance of a sum of independent Bernoullis
        let var: f64 = (0..s).map(|i| {
            let p = nu / (nu + i as f64);
            p * (1.0 - p)
        }).sum();
        assert!((mean - expected).abs() < 4.0 * (var / n as f64).sqrt(), "{mean} vs {expected}");
    }

    #[test]
    fn shape_posterior_concentrates_near_truth() {
        let mut rng = ChainRng::seed_from_u64(13);
        let model = CountModel::new(ObsKind::NegBinomial, 4.0).unwrap();
        let psi = vec![-0.5; 10_000];
        let counts: Vec<u32> = psi.iter().map(|&p| model.sample(p, &mut rng)).collect();
        let mut nu = 1.0;
        let mut draws = Vec::new();
        for it in 0..3000 {
            nu = sample_nu_negbinomial(&counts, &psi, nu, GammaPrior::default(), &mut rng).unwrap();
            if it >= 1000 {
                draws.push(nu);
            }
        }
        draws.sort_by(f64::total_cmp);
        let median = draws[draws.len() / 2];
        assert!((3.2..=4.8).contains(&median), "median {median}");
    }
}
