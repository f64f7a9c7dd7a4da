//! Hamiltonian Monte Carlo for the latent locations of the distance models.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{sq_dist, AdjacencyPrior, NetworkState, PriorSpec, WeightPrior};
use crate::spikes::{log_sigmoid, sigmoid};
use crate::stats;

/// Outcome of one HMC transition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HmcTransition {
    pub accepted: bool,
    pub accept_prob: f64,
}

/// One HMC transition with identity mass matrix. `target` returns the log density
/// and its gradient; a non-finite value anywhere along the trajectory rejects.
pub fn hmc_transition<F, R>(x: &mut [f64], target: F, step: f64, leapfrog: usize, rng: &mut R) -> HmcTransition
where
    F: Fn(&[f64]) -> (f64, Vec<f64>),
    R: Rng + ?Sized,
{
    let dim = x.len();
    let mut p: Vec<f64> = (0..dim).map(|_| stats::std_normal(rng)).collect();
    let (lp0, mut g) = target(x);
    let h0 = -lp0 + 0.5 * p.iter().map(|v| v * v).sum::<f64>();
    let mut q = x.to_vec();
    let mut lp = lp0;
    let mut finite = lp0.is_finite() && g.iter().all(|v| v.is_finite());
    if finite {
        for (pi, gi) in p.iter_mut().zip(&g) {
            *pi += 0.5 * step * gi;
        }
        for i in 0..leapfrog {
            for (qi, pi) in q.iter_mut().zip(&p) {
                *qi += step * pi;
            }
            let (l, grad) = target(&q);
            lp = l;
            g = grad;
            if !lp.is_finite() || g.iter().any(|v| !v.is_finite()) {
                finite = false;
                break;
            }
            let scale = if i + 1 == leapfrog { 0.5 } else { 1.0 };
            for (pi, gi) in p.iter_mut().zip(&g) {
                *pi += scale * step * gi;
            }
        }
    }
    let u: f64 = rng.random();
    if !finite {
        return HmcTransition { accepted: false, accept_prob: 0.0 };
    }
    let h1 = -lp + 0.5 * p.iter().map(|v| v * v).sum::<f64>();
    let accept_prob = (h0 - h1).exp().min(1.0);
    let accepted = u < accept_prob;
    if accepted {
        x.copy_from_slice(&q);
    }
    HmcTransition { accepted, accept_prob: if accept_prob.is_nan() { 0.0 } else { accept_prob } }
}

/// Dual-averaging step size adaptation (Hoffman and Gelman), used during burn-in only.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DualAveraging {
    pub target: f64,
    mu: f64,
    log_step: f64,
    log_step_bar: f64,
    h_bar: f64,
    count: u64,
}

impl DualAveraging {
    const GAMMA: f64 = 0.05;
    const T0: f64 = 10.0;
    const KAPPA: f64 = 0.75;

    pub fn new(initial_step: f64, target: f64) -> Self {
        Self {
            target,
            mu: (10.0 * initial_step).ln(),
            log_step: initial_step.ln(),
            log_step_bar: initial_step.ln(),
            h_bar: 0.0,
            count: 0,
        }
    }

    /// The step to use while adapting.
    pub fn step(&self) -> f64 {
        self.log_step.exp()
    }

    /// The averaged step to freeze at after adaptation.
    pub fn final_step(&self) -> f64 {
        self.log_step_bar.exp()
    }

    pub fn update(&mut self, accept_prob: f64) {
        self.count += 1;
        let m = self.count as f64;
        let w = 1.0 / (m + Self::T0);
        self.h_bar = (1.0 - w) * self.h_bar + w * (self.target - accept_prob);
        self.log_step = self.mu - m.sqrt() / Self::GAMMA * self.h_bar;
        let eta = m.powf(-Self::KAPPA);
        self.log_step_bar = eta * self.log_step + (1.0 - eta) * self.log_step_bar;
    }
}

/// Log conditional density of the adjacency-model locations and offset, flattened
/// as `[u_0, ..., u_{N-1}, gamma0]`, with its gradient: Bernoulli terms of every
/// random edge plus the Gaussian priors.
pub fn adjacency_location_log_density(net: &NetworkState, spec: &PriorSpec, params: &[f64]) -> Result<(f64, Vec<f64>)> {
    let AdjacencyPrior::Distance(d) = &spec.adjacency else {
        return Err(Error::Usage("adjacency prior is not a latent distance model".into()));
    };
    let (n_count, dim) = (net.neurons(), d.dim);
    if params.len() != n_count * dim + 1 {
        return Err(Error::Shape(format!("expected {} parameters, got {}", n_count * dim + 1, params.len())));
    }
    let locs = &params[..n_count * dim];
    let gamma0 = params[n_count * dim];
    let mut grad = vec![0.0; params.len()];
    let mut lp = 0.0;
    for m in 0..n_count {
        for n in 0..n_count {
            if !spec.edge_is_random(m, n) {
                continue;
            }
            let x = -sq_dist(locs, dim, m, n) + gamma0;
            let a = net.edge(m, n);
            lp += if a { log_sigmoid(x) } else { log_sigmoid(-x) };
            let dx = if a { 1.0 } else { 0.0 } - sigmoid(x);
            grad[n_count * dim] += dx;
            if m != n {
                for k in 0..dim {
                    let diff = locs[m * dim + k] - locs[n * dim + k];
                    grad[m * dim + k] -= 2.0 * diff * dx;
                    grad[n * dim + k] += 2.0 * diff * dx;
                }
            }
        }
    }
    for (i, &u) in locs.iter().enumerate() {
        lp += stats::log_normal(u, 0.0, d.scale2);
        grad[i] -= u / d.scale2;
    }
    let (gm, gv) = (spec.hyper.gamma0_mean, spec.hyper.gamma0_var);
    lp += stats::log_normal(gamma0, gm, gv);
    grad[n_count * dim] -= (gamma0 - gm) / gv;
    Ok((lp, grad))
}

/// Log conditional density of the weight-model locations with its gradient:
/// Gaussian terms of every present weight plus the location prior.
pub fn weight_location_log_density(net: &NetworkState, spec: &PriorSpec, params: &[f64]) -> Result<(f64, Vec<f64>)> {
    let WeightPrior::Distance(d) = &spec.weights else {
        return Err(Error::Usage("weight prior is not a latent distance model".into()));
    };
    let (n_count, dim) = (net.neurons(), d.dim);
    if params.len() != n_count * dim {
        return Err(Error::Shape(format!("expected {} parameters, got {}", n_count * dim, params.len())));
    }
    let mut grad = vec![0.0; params.len()];
    let mut lp = 0.0;
    for m in 0..n_count {
        for n in 0..n_count {
            if !net.edge(m, n) {
                continue;
            }
            let mean = -sq_dist(params, dim, m, n) + d.mu0;
            let mut dmean = 0.0;
            for &w in net.weight_vec(m, n) {
                lp += stats::log_normal(w, mean, d.sigma2);
                dmean += (w - mean) / d.sigma2;
            }
            if m != n {
                for k in 0..dim {
                    let diff = params[m * dim + k] - params[n * dim + k];
                    grad[m * dim + k] -= 2.0 * diff * dmean;
                    grad[n * dim + k] += 2.0 * diff * dmean;
                }
            }
        }
    }
    for (i, &v) in params.iter().enumerate() {
        lp += stats::log_normal(v, 0.0, d.scale2);
        grad[i] -= v / d.scale2;
    }
    Ok((lp, grad))
}

fn invalid_to_reject(r: Result<(f64, Vec<f64>)>) -> (f64, Vec<f64>) {
    r.unwrap_or((f64::NAN, Vec::new()))
}

/// One HMC transition of the adjacency locations and offset.
pub fn hmc_adjacency_locations<R: Rng + ?Sized>(
    net: &NetworkState,
    spec: &mut PriorSpec,
    step: f64,
    leapfrog: usize,
    rng: &mut R,
) -> Result<HmcTransition> {
    let AdjacencyPrior::Distance(d) = &spec.adjacency else {
        return Err(Error::Usage("adjacency prior is not a latent distance model".into()));
    };
    let mut x = d.locations.clone();
    x.push(d.gamma0);
    let t = {
        let s: &PriorSpec = spec;
        hmc_transition(&mut x, |q| invalid_to_reject(adjacency_location_log_density(net, s, q)), step, leapfrog, rng)
    };
    if let AdjacencyPrior::Distance(d) = &mut spec.adjacency {
        d.gamma0 = x.pop().expect("offset");
        d.locations = x;
    }
    Ok(t)
}

/// One HMC transition of the weight-model locations.
pub fn hmc_weight_locations<R: Rng + ?Sized>(
    net: &NetworkState,
    spec: &mut PriorSpec,
    step: f64,
    leapfrog: usize,
    rng: &mut R,
) -> Result<HmcTransition> {
    let WeightPrior::Distance(d) = &spec.weights else {
        return Err(Error::Usage("weight prior is not a latent distance model".into()));
    };
    let mut x = d.locations.clone();
    let t = {
        let s: &PriorSpec = spec;
        hmc_transition(&mut x, |q| invalid_to_reject(weight_location_log_density(net, s, q)), step, leapfrog, rng)
    };
    if let WeightPrior::Distance(d) = &mut spec.weights {
        d.locations = x;
    }
    Ok(t)
}
