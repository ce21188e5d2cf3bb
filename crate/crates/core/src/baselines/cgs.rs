//! Collapsed Gibbs sampling over the pair indicators `(z_ab, z_ba)` with
//! memberships and strengths integrated out.

use rand::Rng;

use crate::graph::{Graph, HeldOutSplit};
use crate::kernels::bernoulli;
use crate::state::{HyperParams, ModelState};

use super::training_pairs;

/// Indicators for every training pair plus the count tables they imply.
#[derive(Clone, Debug)]
pub struct AssignmentState {
    num_nodes: usize,
    num_communities: usize,
    pairs: Vec<(usize, usize, bool)>,
    /// `[z_ab, z_ba]` per pair.
    z: Vec<[u32; 2]>,
    /// `n_ak`, row-major `N x K`.
    node_counts: Vec<u32>,
    /// `[s_k0, s_k1]`: pairs with `z_ab = z_ba = k` and `y = 0` / `y = 1`.
    strength_counts: Vec<[u32; 2]>,
}

impl AssignmentState {
    /// Uniformly random indicators over the training pairs.
    pub fn random<R: Rng + ?Sized>(g: &Graph, heldout: &HeldOutSplit, num_communities: usize, rng: &mut R) -> Self {
        let pairs = training_pairs(g, heldout);
        let kk = num_communities as u32;
        let z = pairs
            .iter()
            .map(|_| [rng.random_range(0..kk), rng.random_range(0..kk)])
            .collect();
        Self::from_assignments(g.num_nodes(), num_communities, pairs, z)
    }

    pub fn from_assignments(
        num_nodes: usize,
        num_communities: usize,
        pairs: Vec<(usize, usize, bool)>,
        z: Vec<[u32; 2]>,
    ) -> Self {
        let mut state = AssignmentState {
            num_nodes,
            num_communities,
            pairs,
            z,
            node_counts: Vec::new(),
            strength_counts: Vec::new(),
        };
        (state.node_counts, state.strength_counts) = state.recount();
        state
    }

    fn recount(&self) -> (Vec<u32>, Vec<[u32; 2]>) {
        let kk = self.num_communities;
        let mut n = vec![0u32; self.num_nodes * kk];
        let mut s = vec![[0u32; 2]; kk];
        for (&(a, b, y), &[za, zb]) in self.pairs.iter().zip(&self.z) {
            n[a * kk + za as usize] += 1;
            n[b * kk + zb as usize] += 1;
            if za == zb {
                s[za as usize][y as usize] += 1;
            }
        }
        (n, s)
    }

    /// Whether the incremental counts equal a from-scratch recount.
    pub fn counts_consistent(&self) -> bool {
        let (n, s) = self.recount();
        n == self.node_counts && s == self.strength_counts
    }

    pub fn pairs(&self) -> &[(usize, usize, bool)] {
        &self.pairs
    }

    pub fn assignments(&self) -> &[[u32; 2]] {
        &self.z
    }

    pub fn node_counts(&self, a: usize) -> &[u32] {
        let kk = self.num_communities;
        &self.node_counts[a * kk..(a + 1) * kk]
    }

    pub fn strength_counts(&self) -> &[[u32; 2]] {
        &self.strength_counts
    }

    fn shift(&mut self, p: usize, sign: i32) {
        let kk = self.num_communities;
        let (a, b, y) = self.pairs[p];
        let [za, zb] = self.z[p];
        let bump = |c: &mut u32| *c = c.wrapping_add_signed(sign);
        bump(&mut self.node_counts[a * kk + za as usize]);
        bump(&mut self.node_counts[b * kk + zb as usize]);
        if za == zb {
            bump(&mut self.strength_counts[za as usize][y as usize]);
        }
    }
}

/// Draws an index with probability proportional to `weights`.
fn draw<R: Rng + ?Sized>(weights: &[f64], total: f64, rng: &mut R) -> usize {
    let mut u = rng.random::<f64>() * total;
    for (i, &w) in weights.iter().enumerate() {
        if u < w {
            return i;
        }
        u -= w;
    }
    // rounding fallback: last positive weight
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
}

/// Resamples every pair jointly from its collapsed conditional, in pair order.
pub fn cgs_sweep<R: Rng + ?Sized>(state: &mut AssignmentState, hp: &HyperParams, rng: &mut R) {
    let kk = state.num_communities;
    let alpha = hp.alpha;
    let eta = hp.eta;
    let mut from_a = vec![0.0; kk];
    let mut from_b = vec![0.0; kk];
    let mut diag = vec![0.0; kk];
    let mut first = vec![0.0; kk];
    let mut second = vec![0.0; kk];
    for p in 0..state.pairs.len() {
        state.shift(p, -1);
        let (a, b, y) = state.pairs[p];
        let cross = bernoulli(hp.delta, y);
        let (mut sum_a, mut sum_b, mut sum_ab, mut sum_diag) = (0.0, 0.0, 0.0, 0.0);
        for k in 0..kk {
            from_a[k] = state.node_counts[a * kk + k] as f64 + alpha;
            from_b[k] = state.node_counts[b * kk + k] as f64 + alpha;
            let [s0, s1] = state.strength_counts[k];
            let hit = if y { s1 } else { s0 } as f64;
            let same = (hit + eta) / (s0 as f64 + s1 as f64 + 2.0 * eta);
            let ab = from_a[k] * from_b[k];
            diag[k] = ab * same;
            sum_a += from_a[k];
            sum_b += from_b[k];
            sum_ab += ab;
            sum_diag += diag[k];
        }
        let off_total = cross * (sum_a * sum_b - sum_ab);
        let total = sum_diag + off_total;
        let (za, zb) = if rng.random::<f64>() * total < sum_diag {
            let k = draw(&diag, sum_diag, rng);
            (k, k)
        } else {
            let mut t = 0.0;
            for k in 0..kk {
                first[k] = from_a[k] * (sum_b - from_b[k]);
                t += first[k];
            }
            let k = draw(&first, t, rng);
            second.copy_from_slice(&from_b);
            second[k] = 0.0;
            let l = draw(&second, sum_b - from_b[k], rng);
            (k, l)
        };
        state.z[p] = [za as u32, zb as u32];
        state.shift(p, 1);
    }
}

/// Point estimates packed as a [`ModelState`]: `phi = n + alpha` and
/// `theta = (s_0 + eta, s_1 + eta)`, so that the derived memberships and
/// strengths are the posterior predictive means given the indicators.
pub fn cgs_estimate_params(state: &AssignmentState, hp: &HyperParams) -> ModelState {
    let phi = state.node_counts.iter().map(|&c| c as f64 + hp.alpha).collect();
    let theta = state
        .strength_counts
        .iter()
        .map(|&[s0, s1]| [s0 as f64 + hp.eta, s1 as f64 + hp.eta])
        .collect();
    ModelState::from_parts(state.num_nodes, state.num_communities, phi, theta)
        .expect("count-based parameters are positive")
}
