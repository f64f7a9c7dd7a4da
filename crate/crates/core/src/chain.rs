//! Retained posterior samples and summaries computed from them.

use serde::{Deserialize, Serialize};

use crate::activation::Basis;
use crate::gibbs::GammaPrior;
use crate::network::{AdjacencyPrior, NetworkState, PriorSpec, WeightPrior};
use crate::spikes::ObsKind;

/// One retained state of the Markov chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainSample {
    pub iteration: u64,
    pub net: NetworkState,
    /// Latents and global parameters.
    pub spec: PriorSpec,
    /// Per-neuron count-model parameter.
    pub nu: Vec<f64>,
    /// Joint log probability of the data, network, and latents.
    pub log_prob: f64,
}

/// Retained samples with what is needed to re-evaluate them on data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chain {
    pub obs_kind: ObsKind,
    /// Prior of a negative binomial shape, used for held-out neurons.
    pub nu_prior: GammaPrior,
    pub basis: Basis,
    pub samples: Vec<ChainSample>,
}

impl Chain {
    pub fn new(obs_kind: ObsKind, nu_prior: GammaPrior, basis: Basis) -> Self {
        Self { obs_kind, nu_prior, basis, samples: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn neurons(&self) -> Option<usize> {
        self.samples.first().map(|s| s.net.neurons())
    }

    /// Posterior `P(a_{m->n} = 1)`, row-major `N x N`.
    pub fn edge_marginals(&self) -> Vec<f64> {
        let Some(n) = self.neurons() else {
            return Vec::new();
        };
        let mut acc = vec![0.0; n * n];
        for s in &self.samples {
            for (a, &e) in acc.iter_mut().zip(s.net.adjacency()) {
                if e {
                    *a += 1.0;
                }
            }
        }
        let q = self.samples.len() as f64;
        acc.iter().map(|a| a / q).collect()
    }

    /// Posterior mean of `a_{m->n} w_{m->n}`, row-major `N x N x K`.
    pub fn mean_effective_weights(&self) -> Vec<f64> {
        let Some(s0) = self.samples.first() else {
            return Vec::new();
        };
        let (n, k) = (s0.net.neurons(), s0.net.k());
        let mut acc = vec![0.0; n * n * k];
        for s in &self.samples {
            for m in 0..n {
                for nn in 0..n {
                    if s.net.edge(m, nn) {
                        for kk in 0..k {
                            acc[(m * n + nn) * k + kk] += s.net.weight(m, nn, kk);
                        }
                    }
                }
            }
        }
        let q = self.samples.len() as f64;
        acc.iter().map(|a| a / q).collect()
    }

    /// Adjacency-model locations per sample (row-major `N x D`), if that model is a distance model.
    pub fn adjacency_locations(&self) -> Option<Vec<Vec<f64>>> {
        self.samples
            .iter()
            .map(|s| match &s.spec.adjacency {
                AdjacencyPrior::Distance(d) => Some(d.locations.clone()),
                _ => None,
            })
            .collect()
    }

    /// Weight-model block assignments per sample, if that model is a block model.
    pub fn weight_assignments(&self) -> Option<Vec<Vec<usize>>> {
        self.samples
            .iter()
            .map(|s| match &s.spec.weights {
                WeightPrior::Sbm(b) => Some(b.assignments.clone()),
                _ => None,
            })
            .collect()
    }

    /// Adjacency-model block assignments per sample, if that model is a block model.
    pub fn adjacency_assignments(&self) -> Option<Vec<Vec<usize>>> {
        self.samples
            .iter()
            .map(|s| match &s.spec.adjacency {
                AdjacencyPrior::Sbm(b) => Some(b.assignments.clone()),
                _ => None,
            })
            .collect()
    }
}
