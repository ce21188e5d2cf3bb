//! Exact batch samplers used as accuracy references.

pub mod cgs;
pub mod lmc;

use crate::graph::{Graph, HeldOutSplit};

/// Every training pair `a < b` with its observation, held-out pairs excluded.
pub fn training_pairs(g: &Graph, heldout: &HeldOutSplit) -> Vec<(usize, usize, bool)> {
    let n = g.num_nodes();
    let mut pairs = Vec::with_capacity(n * (n - 1) / 2);
    for a in 0..n {
        for b in a + 1..n {
            if !heldout.contains(a, b) {
                pairs.push((a, b, g.has_link(a, b)));
            }
        }
    }
    pairs
}
