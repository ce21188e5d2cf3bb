//! Stratified mini-batches and the weights that make gradient sums over them
//! unbiased.
//!
//! All functions expect the *training* graph: held-out links are already
//! removed from its adjacency, and every held-out pair (link or not) is
//! excluded from sampling through the [`HeldOutSplit`].

use std::collections::HashSet;

use rand::seq::index;
use rand::Rng;

use crate::graph::{Graph, HeldOutSplit};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stratum {
    Link,
    NonLink,
}

/// Node pairs around one pivot node, with the scale `h` that makes
/// `h * sum_{pairs} g` an unbiased estimate of the sum over all training pairs.
#[derive(Clone, Debug, PartialEq)]
pub struct EdgeBatch {
    pub pivot: usize,
    pub pairs: Vec<(usize, usize)>,
    pub scale: f64,
    pub kind: Stratum,
}

impl EdgeBatch {
    /// Distinct endpoints in ascending order.
    pub fn nodes(&self) -> Vec<usize> {
        let mut nodes: Vec<usize> = self.pairs.iter().flat_map(|&(a, b)| [a, b]).collect();
        nodes.sort_unstable();
        nodes.dedup();
        nodes
    }
}

/// Training non-neighbors of `a`: peers that are neither linked nor held out.
#[inline]
pub fn nonlink_population(g: &Graph, heldout: &HeldOutSplit, a: usize) -> usize {
    g.num_nodes() - 1 - g.degree(a) - heldout.count_for(a)
}

/// Probabilities of the link and non-link branch once `a` is the pivot.
///
/// A fair coin, except that an empty stratum hands its mass to the other.
pub fn branch_probabilities(g: &Graph, heldout: &HeldOutSplit, a: usize) -> (f64, f64) {
    match (g.degree(a) > 0, nonlink_population(g, heldout, a) > 0) {
        (true, true) => (0.5, 0.5),
        (true, false) => (1.0, 0.0),
        _ => (0.0, 1.0),
    }
}

/// All training links of `a`.
pub fn link_stratum(g: &Graph, heldout: &HeldOutSplit, a: usize) -> EdgeBatch {
    let (p_link, _) = branch_probabilities(g, heldout, a);
    let pairs: Vec<_> = g.neighbors(a).iter().map(|&b| (a, b as usize)).collect();
    // every link is reachable from both endpoints
    let scale = if p_link > 0.0 {
        g.num_nodes() as f64 / (2.0 * p_link)
    } else {
        0.0
    };
    EdgeBatch {
        pivot: a,
        pairs,
        scale,
        kind: Stratum::Link,
    }
}

/// `ceil(N / m)` uniformly chosen training non-links of `a`.
///
/// With `s` pairs drawn from a population of `P` the scale is
/// `N * P / (2 * p_nonlink * s)`, which is `m * N` when `P` is close to `N`.
pub fn nonlink_stratum<R: Rng + ?Sized>(
    g: &Graph,
    heldout: &HeldOutSplit,
    a: usize,
    m: usize,
    rng: &mut R,
) -> EdgeBatch {
    let n = g.num_nodes();
    let (_, p_nonlink) = branch_probabilities(g, heldout, a);
    let population = nonlink_population(g, heldout, a);
    let wanted = n.div_ceil(m.max(1));
    let partners = sample_nonneighbors(g, heldout, a, wanted, rng);
    let scale = if partners.is_empty() || p_nonlink == 0.0 {
        0.0
    } else {
        n as f64 * population as f64 / (2.0 * p_nonlink * partners.len() as f64)
    };
    EdgeBatch {
        pivot: a,
        pairs: partners.into_iter().map(|b| (a, b)).collect(),
        scale,
        kind: Stratum::NonLink,
    }
}

/// Uniform pivot, then a coin for the stratum.
pub fn sample_edge_strata<R: Rng + ?Sized>(
    g: &Graph,
    m: usize,
    heldout: &HeldOutSplit,
    rng: &mut R,
) -> EdgeBatch {
    let a = rng.random_range(0..g.num_nodes());
    let take_link = match branch_probabilities(g, heldout, a) {
        (p, _) if p == 1.0 => true,
        (p, _) if p == 0.0 => false,
        _ => rng.random_bool(0.5),
    };
    if take_link {
        link_stratum(g, heldout, a)
    } else {
        nonlink_stratum(g, heldout, a, m, rng)
    }
}

/// Up to `count` distinct training non-neighbors of `a`, without replacement.
pub fn sample_nonneighbors<R: Rng + ?Sized>(
    g: &Graph,
    heldout: &HeldOutSplit,
    a: usize,
    count: usize,
    rng: &mut R,
) -> Vec<usize> {
    let n = g.num_nodes();
    let population = nonlink_population(g, heldout, a);
    let eligible = |b: usize| b != a && !g.has_link(a, b) && !heldout.contains(a, b);

    if count >= population || 2 * count >= population {
        let pool: Vec<usize> = (0..n).filter(|&b| eligible(b)).collect();
        if count >= pool.len() {
            return pool;
        }
        return index::sample(rng, pool.len(), count)
            .into_iter()
            .map(|i| pool[i])
            .collect();
    }

    // Sparse case: rejection from uniform peers, O(1) expected retries.
    let mut chosen = Vec::with_capacity(count);
    let mut seen = HashSet::with_capacity(count);
    while chosen.len() < count {
        let b = rng.random_range(0..n);
        if eligible(b) && seen.insert(b) {
            chosen.push(b);
        }
    }
    chosen
}

/// Neighbor and non-neighbor samples for the local update of `pivot`.
///
/// `c1 * sum_{v1} g + c0 * sum_{v0} g` is unbiased for the sum of `g` over
/// every training peer of `pivot`.
#[derive(Clone, Debug, PartialEq)]
pub struct NodeBatch {
    pub pivot: usize,
    pub v1: Vec<usize>,
    pub v0: Vec<usize>,
    pub c1: f64,
    pub c0: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum LocalSampling {
    #[default]
    Stratified,
    Uniform,
}

/// `n1` neighbors and `n0` non-neighbors of `a`, each stratum without
/// replacement and reweighted by its population over its sample size.
pub fn sample_node_batch<R: Rng + ?Sized>(
    g: &Graph,
    heldout: &HeldOutSplit,
    a: usize,
    n1: usize,
    n0: usize,
    rng: &mut R,
) -> NodeBatch {
    let neighbors = g.neighbors(a);
    let v1: Vec<usize> = if n1 >= neighbors.len() {
        neighbors.iter().map(|&b| b as usize).collect()
    } else {
        index::sample(rng, neighbors.len(), n1)
            .into_iter()
            .map(|i| neighbors[i] as usize)
            .collect()
    };
    let v0 = sample_nonneighbors(g, heldout, a, n0, rng);
    let ratio = |population: usize, taken: usize| {
        if taken == 0 {
            0.0
        } else {
            population as f64 / taken as f64
        }
    };
    NodeBatch {
        pivot: a,
        c1: ratio(neighbors.len(), v1.len()),
        c0: ratio(nonlink_population(g, heldout, a), v0.len()),
        v1,
        v0,
    }
}

/// `n` peers drawn uniformly regardless of adjacency; both strata share the
/// weight `peers / n`.
pub fn sample_node_batch_uniform<R: Rng + ?Sized>(
    g: &Graph,
    heldout: &HeldOutSplit,
    a: usize,
    n: usize,
    rng: &mut R,
) -> NodeBatch {
    let num_nodes = g.num_nodes();
    let peers = num_nodes - 1 - heldout.count_for(a);
    let chosen: Vec<usize> = if 2 * n >= peers {
        let pool: Vec<usize> = (0..num_nodes)
            .filter(|&b| b != a && !heldout.contains(a, b))
            .collect();
        if n >= pool.len() {
            pool
        } else {
            index::sample(rng, pool.len(), n)
                .into_iter()
                .map(|i| pool[i])
                .collect()
        }
    } else {
        let mut seen = HashSet::with_capacity(n);
        let mut out = Vec::with_capacity(n);
        while out.len() < n {
            let b = rng.random_range(0..num_nodes);
            if b != a && !heldout.contains(a, b) && seen.insert(b) {
                out.push(b);
            }
        }
        out
    };
    let weight = if chosen.is_empty() {
        0.0
    } else {
        peers as f64 / chosen.len() as f64
    };
    let (v1, v0): (Vec<usize>, Vec<usize>) = chosen.into_iter().partition(|&b| g.has_link(a, b));
    NodeBatch {
        pivot: a,
        v1,
        v0,
        c1: weight,
        c0: weight,
    }
}
