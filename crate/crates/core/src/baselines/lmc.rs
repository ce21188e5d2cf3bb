//! Langevin Monte Carlo on the full data with a Metropolis-Hastings test.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::global::{theta_gradient_sum, Memberships};
use crate::graph::{Graph, HeldOutSplit};
use crate::kernels::LinkTable;
use crate::local::dense_row_gradient;
use crate::minibatch::NodeBatch;
use crate::state::{HyperParams, ModelState};

use super::training_pairs;

/// Full-data sampler state: current parameters plus acceptance counts.
#[derive(Clone, Debug)]
pub struct LmcSampler {
    state: ModelState,
    hp: HyperParams,
    pairs: Vec<(usize, usize, bool)>,
    /// Training peers of each node as (neighbors, non-neighbors).
    peers: Vec<(Vec<usize>, Vec<usize>)>,
    proposals: u64,
    accepted: u64,
    /// Proposal moments and log posterior at the current state for one step size.
    cached: Option<Cached>,
}

#[derive(Clone, Debug)]
struct Cached {
    eps: f64,
    mean: Vec<f64>,
    var: Vec<f64>,
    log_post: f64,
}

fn side(peers: &mut (Vec<usize>, Vec<usize>), y: bool) -> &mut Vec<usize> {
    if y {
        &mut peers.0
    } else {
        &mut peers.1
    }
}

/// Log of the `Gamma(shape, 1)` density up to a constant.
#[inline]
fn log_gamma_kernel(x: f64, shape: f64) -> f64 {
    (shape - 1.0) * x.ln() - x
}

/// Log density of `N(mean, var)` at `x` up to a constant.
#[inline]
fn log_normal(x: f64, mean: f64, var: f64) -> f64 {
    let d = x - mean;
    -0.5 * d * d / var - 0.5 * var.ln()
}

impl LmcSampler {
    pub fn new(state: ModelState, g: &Graph, heldout: &HeldOutSplit, hp: HyperParams) -> Self {
        let pairs = training_pairs(g, heldout);
        let mut peers = vec![(Vec::new(), Vec::new()); g.num_nodes()];
        for &(a, b, y) in &pairs {
            side(&mut peers[a], y).push(b);
            side(&mut peers[b], y).push(a);
        }
        LmcSampler {
            state,
            hp,
            pairs,
            peers,
            proposals: 0,
            accepted: 0,
            cached: None,
        }
    }

    pub fn state(&self) -> &ModelState {
        &self.state
    }

    pub fn into_state(self) -> ModelState {
        self.state
    }

    /// Fraction of accepted proposals so far.
    pub fn acceptance_rate(&self) -> Option<f64> {
        (self.proposals > 0).then(|| self.accepted as f64 / self.proposals as f64)
    }

    /// Log posterior of `state` over the expanded-mean parameters, up to a constant.
    pub fn log_posterior(&self, state: &ModelState) -> f64 {
        let table = LinkTable::new(state.beta(), self.hp.delta);
        let prior_phi: f64 = state.phi.iter().map(|&x| log_gamma_kernel(x, self.hp.alpha)).sum();
        let prior_theta: f64 = state
            .theta()
            .iter()
            .flatten()
            .map(|&x| log_gamma_kernel(x, self.hp.eta))
            .sum();
        let lik: f64 = self
            .pairs
            .iter()
            .map(|&(a, b, y)| state.pair_norm(a, b, y, &table).ln())
            .sum();
        prior_phi + prior_theta + lik
    }

    /// Exact likelihood gradients `(d/d phi, d/d theta)` at `state`.
    pub fn gradients(&self, state: &ModelState) -> (Vec<f64>, Vec<[f64; 2]>) {
        let table = LinkTable::new(state.beta(), self.hp.delta);
        let mut phi_grad = Vec::with_capacity(state.phi.len());
        for (a, (v1, v0)) in self.peers.iter().enumerate() {
            let nb = NodeBatch {
                pivot: a,
                v1: v1.clone(),
                v0: v0.clone(),
                c1: 1.0,
                c0: 1.0,
            };
            phi_grad.extend(dense_row_gradient(state, &table, &nb));
        }
        let all: Vec<usize> = (0..state.num_communities()).collect();
        let theta_grad = theta_gradient_sum(state, state.theta(), &table, self.pairs.iter().copied(), &all);
        (phi_grad, theta_grad)
    }

    /// Langevin proposal means and variances for every coordinate, `phi` first.
    fn proposal(&self, state: &ModelState, eps: f64) -> (Vec<f64>, Vec<f64>) {
        let (gp, gt) = self.gradients(state);
        let mut mean = Vec::with_capacity(gp.len() + 2 * gt.len());
        let mut var = Vec::with_capacity(mean.capacity());
        for (&x, &g) in state.phi.iter().zip(&gp) {
            mean.push(x + 0.5 * eps * (self.hp.alpha - x + x * g));
            var.push(eps * x);
        }
        for (t, g) in state.theta().iter().zip(&gt) {
            for i in 0..2 {
                mean.push(t[i] + 0.5 * eps * (self.hp.eta - t[i] + t[i] * g[i]));
                var.push(eps * t[i]);
            }
        }
        (mean, var)
    }

    /// One proposal and accept/reject test. Returns whether it was accepted.
    pub fn step<R: Rng + ?Sized>(&mut self, eps: f64, rng: &mut R) -> bool {
        self.proposals += 1;
        let here = match self.cached.take() {
            Some(c) if c.eps == eps => c,
            _ => {
                let (mean, var) = self.proposal(&self.state, eps);
                let log_post = self.log_posterior(&self.state);
                Cached {
                    eps,
                    mean,
                    var,
                    log_post,
                }
            }
        };
        let proposed: Vec<f64> = here
            .mean
            .iter()
            .zip(&here.var)
            .map(|(&m, &v)| m + v.sqrt() * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let u: f64 = rng.random();
        if proposed.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
            self.cached = Some(here);
            return false;
        }
        let n_phi = self.state.phi.len();
        let theta = proposed[n_phi..].chunks(2).map(|c| [c[0], c[1]]).collect();
        let candidate = ModelState::from_parts(
            self.state.num_nodes(),
            self.state.num_communities(),
            proposed[..n_phi].to_vec(),
            theta,
        )
        .expect("proposal checked positive");

        let current = self
            .state
            .phi
            .iter()
            .copied()
            .chain(self.state.theta().iter().flatten().copied());
        let (back_mean, back_var) = self.proposal(&candidate, eps);
        let forward: f64 = proposed
            .iter()
            .zip(here.mean.iter().zip(&here.var))
            .map(|(&x, (&m, &v))| log_normal(x, m, v))
            .sum();
        let backward: f64 = current
            .zip(back_mean.iter().zip(&back_var))
            .map(|(x, (&m, &v))| log_normal(x, m, v))
            .sum();
        let log_post = self.log_posterior(&candidate);
        let log_ratio = log_post - here.log_post + backward - forward;
        if u.ln() < log_ratio {
            self.state = candidate;
            self.accepted += 1;
            self.cached = Some(Cached {
                eps,
                mean: back_mean,
                var: back_var,
                log_post,
            });
            true
        } else {
            self.cached = Some(here);
            false
        }
    }
}
