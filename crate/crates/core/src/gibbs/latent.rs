//! Conjugate and categorical updates of the network model: block assignments,
//! block parameters, global edge and weight parameters, and the scales of the
//! latent distance models.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::Result;
use crate::network::{
    sq_dist, AdjacencyPrior, BiasPrior, DistanceAdjacency, DistanceWeights, GaussianBlock, NetworkState, PriorSpec, SbmAdjacency,
    SbmWeights, WeightPrior,
};
use crate::stats::{self, NiwPrior};

/// Cached Cholesky factor of a Gaussian block for repeated density evaluation.
struct BlockDensity {
    mean: DVector<f64>,
    l: DMatrix<f64>,
    half_logdet: f64,
}

impl BlockDensity {
    fn new(g: &GaussianBlock) -> Result<Self> {
        let l = stats::cholesky(&g.cov_matrix())?;
        let half_logdet = l.diagonal().iter().map(|v| v.ln()).sum();
        Ok(Self { mean: g.mean_vector(), l, half_logdet })
    }

    fn log_pdf(&self, x: &[f64]) -> f64 {
        let d = DVector::from_column_slice(x) - &self.mean;
        let y = self.l.solve_lower_triangular(&d).expect("nonsingular factor");
        -0.5 * (x.len() as f64 * (2.0 * std::f64::consts::PI).ln() + y.norm_squared()) - self.half_logdet
    }
}

/// Log conditional of neuron `n`'s adjacency class, one entry per class (unnormalized).
pub fn adjacency_class_log_weights(n: usize, net: &NetworkState, sbm: &SbmAdjacency, spec: &PriorSpec) -> Vec<f64> {
    let c_count = sbm.classes();
    (0..c_count)
        .map(|c| {
            let mut lw = sbm.pi[c].ln();
            for m in 0..net.neurons() {
                if m == n {
                    if spec.edge_is_random(n, n) {
                        lw += stats::log_bernoulli(net.edge(n, n), sbm.block_rho(c, c));
                    }
                    continue;
                }
                let cm = sbm.assignments[m];
                if spec.edge_is_random(m, n) {
                    lw += stats::log_bernoulli(net.edge(m, n), sbm.block_rho(cm, c));
                }
                if spec.edge_is_random(n, m) {
                    lw += stats::log_bernoulli(net.edge(n, m), sbm.block_rho(c, cm));
                }
            }
            lw
        })
        .collect()
}

/// Log conditional of neuron `n`'s weight class: present incoming and outgoing
/// weights scored under the corresponding blocks.
pub fn weight_class_log_weights(n: usize, net: &NetworkState, sbm: &SbmWeights) -> Result<Vec<f64>> {
    let c_count = sbm.classes();
    let dens: Vec<BlockDensity> = sbm.blocks.iter().map(BlockDensity::new).collect::<Result<_>>()?;
    let block = |from: usize, to: usize| &dens[from * c_count + to];
    Ok((0..c_count)
        .map(|c| {
            let mut lw = sbm.pi[c].ln();
            for m in 0..net.neurons() {
                if m == n {
                    if net.edge(n, n) {
                        lw += block(c, c).log_pdf(net.weight_vec(n, n));
                    }
                    continue;
                }
                let cm = sbm.assignments[m];
                if net.edge(m, n) {
                    lw += block(cm, c).log_pdf(net.weight_vec(m, n));
                }
                if net.edge(n, m) {
                    lw += block(c, cm).log_pdf(net.weight_vec(n, m));
                }
            }
            lw
        })
        .collect())
}

/// Resample every block assignment in the spec, neuron by neuron.
pub fn sample_sbm_assignments<R: Rng + ?Sized>(net: &NetworkState, spec: &mut PriorSpec, rng: &mut R) -> Result<()> {
    let n_count = net.neurons();
    if let AdjacencyPrior::Sbm(sbm) = &spec.adjacency {
        let mut sbm = sbm.clone();
        for n in 0..n_count {
            let lw = adjacency_class_log_weights(n, net, &sbm, spec);
            sbm.assignments[n] = stats::categorical_log(&lw, rng);
        }
        spec.adjacency = AdjacencyPrior::Sbm(sbm);
    }
    if let WeightPrior::Sbm(sbm) = &mut spec.weights {
        for n in 0..n_count {
            let lw = weight_class_log_weights(n, net, sbm)?;
            sbm.assignments[n] = stats::categorical_log(&lw, rng);
        }
    }
    Ok(())
}

fn class_counts(assignments: &[usize], classes: usize) -> Vec<f64> {
    let mut counts = vec![0.0; classes];
    for &c in assignments {
        counts[c] += 1.0;
    }
    counts
}

fn niw_draw<R: Rng + ?Sized>(niw: &NiwPrior, xs: &[DVector<f64>], rng: &mut R) -> Result<GaussianBlock> {
    let post = if xs.is_empty() { niw.clone() } else { niw.posterior(xs) };
    let (m, s) = post.sample(rng)?;
    Ok(GaussianBlock::from_nalgebra(&m, &s))
}

/// Beta posterior draws of every block's edge probability, Dirichlet draws of
/// class proportions, and normal-inverse-Wishart draws of every weight block.
pub fn sample_sbm_params<R: Rng + ?Sized>(net: &NetworkState, spec: &mut PriorSpec, rng: &mut R) -> Result<()> {
    let h = spec.hyper.clone();
    let n_count = net.neurons();
    let random: Vec<bool> = (0..n_count * n_count).map(|i| spec.edge_is_random(i / n_count, i % n_count)).collect();
    if let AdjacencyPrior::Sbm(sbm) = &mut spec.adjacency {
        let c = sbm.classes();
        let mut on = vec![0.0; c * c];
        let mut off = vec![0.0; c * c];
        for m in 0..n_count {
            for n in 0..n_count {
                if !random[m * n_count + n] {
                    continue;
                }
                let b = sbm.assignments[m] * c + sbm.assignments[n];
                if net.edge(m, n) {
                    on[b] += 1.0;
                } else {
                    off[b] += 1.0;
                }
            }
        }
        for b in 0..c * c {
            sbm.rho[b] = stats::beta(h.rho_alpha + on[b], h.rho_beta + off[b], rng);
        }
        let alpha: Vec<f64> = class_counts(&sbm.assignments, c).iter().map(|k| k + h.dirichlet_alpha).collect();
        sbm.pi = stats::dirichlet(&alpha, rng);
    }
    if let WeightPrior::Sbm(sbm) = &mut spec.weights {
        let c = sbm.classes();
        let mut groups: Vec<Vec<DVector<f64>>> = vec![Vec::new(); c * c];
        for m in 0..n_count {
            for n in 0..n_count {
                if net.edge(m, n) {
                    groups[sbm.assignments[m] * c + sbm.assignments[n]]
                        .push(DVector::from_column_slice(net.weight_vec(m, n)));
                }
            }
        }
        for (b, xs) in groups.iter().enumerate() {
            sbm.blocks[b] = niw_draw(&h.niw, xs, rng)?;
        }
        let alpha: Vec<f64> = class_counts(&sbm.assignments, c).iter().map(|k| k + h.dirichlet_alpha).collect();
        sbm.pi = stats::dirichlet(&alpha, rng);
    }
    Ok(())
}

/// Beta draw of the global edge probability and normal-inverse-Wishart draw of
/// the shared weight distribution.
pub fn sample_independent_params<R: Rng + ?Sized>(net: &NetworkState, spec: &mut PriorSpec, rng: &mut R) -> Result<()> {
    let h = spec.hyper.clone();
    let n_count = net.neurons();
    if let AdjacencyPrior::Independent { .. } = spec.adjacency {
        let (mut on, mut off) = (0.0, 0.0);
        for m in 0..n_count {
            for n in 0..n_count {
                if spec.edge_is_random(m, n) {
                    if net.edge(m, n) {
                        on += 1.0;
                    } else {
                        off += 1.0;
                    }
                }
            }
        }
        spec.adjacency = AdjacencyPrior::Independent { rho: stats::beta(h.rho_alpha + on, h.rho_beta + off, rng) };
    }
    if let WeightPrior::Independent(block) = &mut spec.weights {
        let mut xs = Vec::new();
        for m in 0..n_count {
            for n in 0..n_count {
                if net.edge(m, n) {
                    xs.push(DVector::from_column_slice(net.weight_vec(m, n)));
                }
            }
        }
        *block = niw_draw(&h.niw, &xs, rng)?;
    }
    Ok(())
}

/// Inverse-gamma draws of the location variances, and the normal-inverse-gamma
/// draw of the distance-weight baseline `(mu0, sigma2)` from present edges.
pub fn sample_distance_hypers<R: Rng + ?Sized>(net: &NetworkState, spec: &mut PriorSpec, rng: &mut R) -> Result<()> {
    let h = spec.hyper.clone();
    if let AdjacencyPrior::Distance(DistanceAdjacency { locations, scale2, .. }) = &mut spec.adjacency {
        *scale2 = h.location_scale.posterior(locations).sample(rng);
    }
    if let WeightPrior::Distance(dw) = &mut spec.weights {
        dw.scale2 = h.location_scale.posterior(&dw.locations).sample(rng);
        let xs = baseline_residuals(net, dw);
        let post = if xs.is_empty() { h.baseline } else { h.baseline.posterior(&xs) };
        let (mu0, sigma2) = post.sample(rng);
        dw.mu0 = mu0;
        dw.sigma2 = sigma2;
    }
    Ok(())
}

/// `w_{m->n,k} + ||v_m - v_n||^2` over present edges: draws of `N(mu0, sigma2)`.
pub(crate) fn baseline_residuals(net: &NetworkState, dw: &DistanceWeights) -> Vec<f64> {
    let n_count = net.neurons();
    let mut xs = Vec::new();
    for m in 0..n_count {
        for n in 0..n_count {
            if net.edge(m, n) {
                let d2 = sq_dist(&dw.locations, dw.dim, m, n);
                xs.extend(net.weight_vec(m, n).iter().map(|w| w + d2));
            }
        }
    }
    xs
}

/// Normal-inverse-gamma draw of the bias mean and variance, when they are random.
pub fn sample_bias_prior<R: Rng + ?Sized>(net: &NetworkState, spec: &mut PriorSpec, rng: &mut R) {
    if let Some(nig) = &spec.hyper.bias {
        let (mean, var) = nig.posterior(&net.bias).sample(rng);
        spec.bias = BiasPrior { mean, var };
    }
}

/// Run all global-parameter updates that apply to the spec's variants.
pub(crate) fn sample_globals<R: Rng + ?Sized>(net: &NetworkState, spec: &mut PriorSpec, rng: &mut R) -> Result<()> {
    sample_sbm_params(net, spec, rng)?;
    sample_independent_params(net, spec, rng)?;
    sample_distance_hypers(net, spec, rng)?;
    sample_bias_prior(net, spec, rng);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{Hyperpriors, SelfEdges};
    use crate::stats::InvGammaPrior;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn spec(adjacency: AdjacencyPrior, weights: WeightPrior, n: usize) -> PriorSpec {
        PriorSpec {
            neurons: n,
            k: 1,
            adjacency,
            weights,
            bias: BiasPrior { mean: 0.0, var: 1.0 },
            hyper: Hyperpriors::default_for(1),
            self_edges: SelfEdges::Prior,
        }
    }

    fn fixed() -> WeightPrior {
        WeightPrior::Independent(GaussianBlock { mean: vec![0.0], cov: vec![1.0] })
    }

    #[test]
    fn single_class_is_certain() {
        let sbm = SbmAdjacency { pi: vec![1.0], rho: vec![0.4], assignments: vec![0; 4] };
        let mut s = spec(AdjacencyPrior::Sbm(sbm), fixed(), 4);
        let net = NetworkState::empty(4, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..10 {
            sample_sbm_assignments(&net, &mut s, &mut rng).unwrap();
            match &s.adjacency {
                AdjacencyPrior::Sbm(b) => assert!(b.assignments.iter().all(|&c| c == 0)),
                _ => unreachable!(),
            }
        }
    }

    #[test]
    fn symmetric_classes_split_evenly() {
        let sbm = SbmAdjacency { pi: vec![0.5, 0.5], rho: vec![0.5; 4], assignments: vec![0, 1, 0] };
        let s = spec(AdjacencyPrior::Sbm(sbm.clone()), fixed(), 3);
        let mut net = NetworkState::empty(3, 1);
        net.set_edge(0, 1, true);
        let lw = adjacency_class_log_weights(2, &net, &sbm, &s);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let hits = (0..10_000).filter(|_| stats::categorical_log(&lw, &mut rng) == 0).count();
        assert!((hits as f64 / 1e4 - 0.5).abs() < 0.015, "{hits}");
    }

    #[test]
    fn adjacency_class_conditional_matches_enumeration() {
        let sbm = SbmAdjacency { pi: vec![0.3, 0.7], rho: vec![0.8, 0.1, 0.25, 0.6], assignments: vec![0, 1, 1, 0] };
        let s = spec(AdjacencyPrior::Sbm(sbm.clone()), fixed(), 4);
        let mut net = NetworkState::empty(4, 1);
        for &(m, n) in &[(0, 1), (1, 1), (2, 0), (3, 2), (2, 3), (0, 3)] {
            net.set_edge(m, n, true);
        }
        let n = 2;
        // brute force: the full joint log prior of the network for each label of neuron n
        let joint: Vec<f64> = (0..2)
            .map(|c| {
                let mut b = sbm.clone();
                b.assignments[n] = c;
                let mut sp = s.clone();
                sp.adjacency = AdjacencyPrior::Sbm(b.clone());
                crate::network::log_prior_terms(&net, &sp).unwrap().adjacency + b.pi[c].ln()
            })
            .collect();
        let lw = adjacency_class_log_weights(n, &net, &sbm, &s);
        let p_brute = 1.0 / (1.0 + (joint[1] - joint[0]).exp());
        let p = 1.0 / (1.0 + (lw[1] - lw[0]).exp());
        assert!((p - p_brute).abs() < 1e-12);
    }

    #[test]
    fn weight_class_conditional_matches_enumeration() {
        let blocks = vec![
            GaussianBlock { mean: vec![1.0], cov: vec![0.2] },
            GaussianBlock { mean: vec![-1.0], cov: vec![0.3] },
            GaussianBlock { mean: vec![-0.5], cov: vec![0.5] },
            GaussianBlock { mean: vec![0.7], cov: vec![0.1] },
        ];
        let sbm = SbmWeights { pi: vec![0.4, 0.6], blocks, assignments: vec![0, 1, 0, 1] };
        let s = spec(AdjacencyPrior::Dense, WeightPrior::Sbm(sbm.clone()), 4);
        let mut net = NetworkState::empty(4, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for m in 0..4 {
            for n in 0..4 {
                net.set_edge(m, n, rng.random::<f64>() < 0.6);
                net.set_weight(m, n, 0, stats::std_normal(&mut rng));
            }
        }
        let n = 1;
        let joint: Vec<f64> = (0..2)
            .map(|c| {
                let mut b = sbm.clone();
                b.assignments[n] = c;
                let mut sp = s.clone();
                sp.weights = WeightPrior::Sbm(b.clone());
                crate::network::log_prior_terms(&net, &sp).unwrap().weights + b.pi[c].ln()
            })
            .collect();
        let lw = weight_class_log_weights(n, &net, &sbm).unwrap();
        assert!(((lw[1] - lw[0]) - (joint[1] - joint[0])).abs() < 1e-10);
    }

    #[test]
    fn beta_posterior_counts_block_edges() {
        // one class, 2 neurons, 3 of 4 edges present: rho ~ Beta(4, 2)
        let sbm = SbmAdjacency { pi: vec![1.0], rho: vec![0.5], assignments: vec![0, 0] };
        let mut net = NetworkState::empty(2, 1);
        net.set_edge(0, 0, true);
        net.set_edge(0, 1, true);
        net.set_edge(1, 0, true);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 40_000;
        let mut sum = 0.0;
        for _ in 0..n {
            let mut s = spec(AdjacencyPrior::Sbm(sbm.clone()), fixed(), 2);
            sample_sbm_params(&net, &mut s, &mut rng).unwrap();
            if let AdjacencyPrior::Sbm(b) = &s.adjacency {
                sum += b.rho[0];
            }
        }
        let mean = sum / n as f64;
        let (a, b) = (4.0, 2.0);
        let sd = (a * b / ((a + b) * (a + b) * (a + b + 1.0)) / n as f64).sqrt();
        assert!((mean - a / (a + b)).abs() < 4.0 * sd, "{mean}");
    }

    #[test]
    fn empty_blocks_fall_back_to_prior() {
        // class 1 is empty: its rows of rho and its weight blocks come from the prior
        let sbm = SbmWeights {
            pi: vec![0.5, 0.5],
            blocks: vec![GaussianBlock { mean: vec![0.0], cov: vec![1.0] }; 4],
            assignments: vec![0, 0, 0],
        };
        let net = NetworkState::empty(3, 1);
        let mut s = spec(AdjacencyPrior::Dense, WeightPrior::Sbm(sbm), 3);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 20_000;
        let (mut pi0, mut mus) = (0.0, 0.0);
        for _ in 0..n {
            sample_sbm_params(&net, &mut s, &mut rng).unwrap();
            if let WeightPrior::Sbm(b) = &s.weights {
                pi0 += b.pi[0];
                mus += b.blocks[3].mean[0];
            }
        }
        // Dirichlet(1 + 3, 1 + 0) mean for class 0
        assert!((pi0 / n as f64 - 0.8).abs() < 0.01);
        assert!((mus / n as f64).abs() < 0.05);
    }

    #[test]
    fn independent_rho_counts_all_edges() {
        let mut net = NetworkState::empty(3, 1);
        for &(m, n) in &[(0, 1), (1, 2), (2, 2)] {
            net.set_edge(m, n, true);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let n = 40_000;
        let mut sum = 0.0;
        for _ in 0..n {
            let mut s = spec(AdjacencyPrior::Independent { rho: 0.5 }, fixed(), 3);
            sample_independent_params(&net, &mut s, &mut rng).unwrap();
            if let AdjacencyPrior::Independent { rho } = s.adjacency {
                sum += rho;
            }
        }
        // Beta(1 + 3, 1 + 6)
        assert!((sum / n as f64 - 4.0 / 11.0).abs() < 0.003);
    }

    #[test]
    fn location_scale_update_is_conjugate() {
        let prior = InvGammaPrior { shape: 2.0, rate: 3.0 };
        let post = prior.posterior(&[1.0, -2.0, 0.5]);
        assert_eq!(post.shape, 3.5);
        assert!((post.rate - (3.0 + 5.25 / 2.0)).abs() < 1e-15);
        assert_eq!(prior.posterior(&[0.0, 0.0]).rate, 3.0);
    }

    #[test]
    fn baseline_without_edges_is_a_prior_draw() {
        let dw = DistanceWeights { dim: 2, k: 1, locations: vec![0.0; 6], mu0: 0.0, sigma2: 1.0, scale2: 1.0 };
        let net = NetworkState::empty(3, 1);
        assert!(baseline_residuals(&net, &dw).is_empty());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut s = spec(AdjacencyPrior::Dense, WeightPrior::Distance(dw), 3);
        let n = 20_000;
        let (mut mu, mut prec) = (0.0, 0.0);
        for _ in 0..n {
            sample_distance_hypers(&net, &mut s, &mut rng).unwrap();
            if let WeightPrior::Distance(d) = &s.weights {
                mu += d.mu0;
                prec += 1.0 / d.sigma2;
            }
        }
        // prior NIG(0, 1, 2, 1): 1 / sigma2 ~ Gamma(2, 1), mu0 is Student-t with 4 dof and unit variance
        assert!((mu / n as f64).abs() < 4.0 / (n as f64).sqrt());
        assert!((prec / n as f64 - 2.0).abs() < 4.0 * (2.0 / n as f64).sqrt());
    }
}
