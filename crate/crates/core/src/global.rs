//! Global update of the community strengths `theta`.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::kernels::{f_pair, z_norm, LinkTable, PairContext};
use crate::minibatch::{EdgeBatch, Stratum};
use crate::state::{riemannian_step, ModelState};

/// Read access to node memberships, dense or sparse.
pub trait Memberships: Sync {
    fn num_nodes(&self) -> usize;
    fn num_communities(&self) -> usize;
    /// `pi_ak`.
    fn pi(&self, a: usize, k: usize) -> f64;
    /// Pair normalizer `Z_ab` for observation `y`.
    fn pair_norm(&self, a: usize, b: usize, y: bool, table: &LinkTable) -> f64;
    /// Full membership row of `a`.
    fn pi_row(&self, a: usize) -> Vec<f64> {
        (0..self.num_communities()).map(|k| self.pi(a, k)).collect()
    }
}

impl Memberships for ModelState {
    fn num_nodes(&self) -> usize {
        ModelState::num_nodes(self)
    }

    fn num_communities(&self) -> usize {
        ModelState::num_communities(self)
    }

    #[inline]
    fn pi(&self, a: usize, k: usize) -> f64 {
        self.phi[a * self.num_communities() + k] / self.row_totals[a]
    }

    fn pair_norm(&self, a: usize, b: usize, y: bool, table: &LinkTable) -> f64 {
        let (row_a, row_b) = (self.phi_row(a), self.phi_row(b));
        let (total_a, total_b) = (self.row_totals[a], self.row_totals[b]);
        let excess = &table.excess[y as usize];
        let mut s = 0.0;
        for k in 0..excess.len() {
            s += excess[k] * (row_a[k] / total_a) * (row_b[k] / total_b);
        }
        table.cross[y as usize] + s
    }
}

/// `d log b_k / d theta_ki` where `b_k = beta_k^y (1 - beta_k)^(1 - y)`.
#[inline]
pub fn strength_log_derivative(y: bool, theta_k: [f64; 2], i: usize) -> f64 {
    let matches = (i == 1) == y;
    let own = if matches { 1.0 / theta_k[i] } else { 0.0 };
    own - 1.0 / (theta_k[0] + theta_k[1])
}

/// Gradient of `log Z_ab` with respect to `theta_ki`.
pub fn grad_theta_pair(ctx: &PairContext<'_>, theta: &[[f64; 2]], k: usize, i: usize) -> f64 {
    f_pair(ctx, k, k) / z_norm(ctx) * strength_log_derivative(ctx.y, theta[k], i)
}

/// `sum_{(a,b,y)} d log Z_ab / d theta_ki` for each community in `subset`.
pub fn theta_gradient_sum<M: Memberships + ?Sized>(
    mem: &M,
    theta: &[[f64; 2]],
    table: &LinkTable,
    pairs: impl IntoIterator<Item = (usize, usize, bool)>,
    subset: &[usize],
) -> Vec<[f64; 2]> {
    let mut grad = vec![[0.0; 2]; subset.len()];
    for (a, b, y) in pairs {
        let z = mem.pair_norm(a, b, y, table);
        let same = &table.same[y as usize];
        for (slot, &k) in grad.iter_mut().zip(subset) {
            let weight = same[k] * mem.pi(a, k) * mem.pi(b, k) / z;
            slot[0] += weight * strength_log_derivative(y, theta[k], 0);
            slot[1] += weight * strength_log_derivative(y, theta[k], 1);
        }
    }
    grad
}

/// Settings of one global step.
#[derive(Clone, Copy, Debug)]
pub struct GlobalStep {
    pub eta: f64,
    pub delta: f64,
    pub eps: f64,
    pub noise: bool,
}

/// Updates `theta_k` for `k` in `subset` from the edge batch, with
/// memberships read from `mem`.
pub fn update_theta<M: Memberships + ?Sized, R: Rng + ?Sized>(
    theta: &mut [[f64; 2]],
    mem: &M,
    batch: &EdgeBatch,
    subset: &[usize],
    step: &GlobalStep,
    rng: &mut R,
) {
    let table = LinkTable::new(crate::state::beta_from_theta(theta), step.delta);
    let y = batch.kind == Stratum::Link;
    let grad = theta_gradient_sum(
        mem,
        theta,
        &table,
        batch.pairs.iter().map(|&(a, b)| (a, b, y)),
        subset,
    );
    for (g, &k) in grad.iter().zip(subset) {
        for i in 0..2 {
            let noise = if step.noise {
                rng.sample::<f64, _>(StandardNormal) * step.eps.sqrt()
            } else {
                0.0
            };
            theta[k][i] = riemannian_step(theta[k][i], step.eta, batch.scale * g[i], step.eps, noise);
        }
    }
}
