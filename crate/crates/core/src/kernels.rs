//! Closed-form pair likelihood quantities with the latent community
//! indicators `(z_ab, z_ba)` summed out.
//!
//! All kernels take normalized memberships and strengths.

/// Observed pair plus the parameters of both endpoints.
#[derive(Clone, Copy, Debug)]
pub struct PairContext<'a> {
    pub y: bool,
    pub pi_a: &'a [f64],
    pub pi_b: &'a [f64],
    pub beta: &'a [f64],
    pub delta: f64,
}

/// `p^y (1 - p)^(1 - y)`.
#[inline]
pub fn bernoulli(p: f64, y: bool) -> f64 {
    if y {
        p
    } else {
        1.0 - p
    }
}

/// Unnormalized posterior weight of `z_ab = k, z_ba = l`.
pub fn f_pair(ctx: &PairContext<'_>, k: usize, l: usize) -> f64 {
    if k == l {
        bernoulli(ctx.beta[k], ctx.y) * ctx.pi_a[k] * ctx.pi_b[k]
    } else {
        bernoulli(ctx.delta, ctx.y) * ctx.pi_a[k] * ctx.pi_b[l]
    }
}

/// Normalizer `sum_{k,l} f_pair(k, l)` in a single pass over communities.
pub fn z_norm(ctx: &PairContext<'_>) -> f64 {
    let d = bernoulli(ctx.delta, ctx.y);
    let mut s = 0.0;
    for k in 0..ctx.beta.len() {
        s += (bernoulli(ctx.beta[k], ctx.y) - d) * ctx.pi_a[k] * ctx.pi_b[k];
    }
    d + s
}

/// `sum_l f_pair(k, l)`: weight of `z_ab = k` with `z_ba` summed out.
#[inline]
pub fn f_local(ctx: &PairContext<'_>, k: usize) -> f64 {
    let p = ctx.pi_b[k];
    ctx.pi_a[k] * (bernoulli(ctx.beta[k], ctx.y) * p + bernoulli(ctx.delta, ctx.y) * (1.0 - p))
}

/// Marginal probability of the observed `y` under the model.
pub fn pair_likelihood(ctx: &PairContext<'_>) -> f64 {
    let mut same = 0.0;
    let mut overlap = 0.0;
    for k in 0..ctx.beta.len() {
        let w = ctx.pi_a[k] * ctx.pi_b[k];
        same += w * bernoulli(ctx.beta[k], ctx.y);
        overlap += w;
    }
    same + (1.0 - overlap) * bernoulli(ctx.delta, ctx.y)
}

/// Per-community likelihood factors for both values of `y`, computed once
/// from `beta` and shared by every pair in an update phase.
#[derive(Clone, Debug)]
pub struct LinkTable {
    pub beta: Vec<f64>,
    pub delta: f64,
    /// `bernoulli(beta_k, y)`, indexed `[y][k]`.
    pub same: [Vec<f64>; 2],
    /// `bernoulli(delta, y)`.
    pub cross: [f64; 2],
    /// `same[y][k] - cross[y]`.
    pub excess: [Vec<f64>; 2],
    /// `sum_k excess[y][k]`.
    pub excess_total: [f64; 2],
}

impl LinkTable {
    pub fn new(beta: Vec<f64>, delta: f64) -> Self {
        let same = [false, true].map(|y| beta.iter().map(|&b| bernoulli(b, y)).collect::<Vec<_>>());
        let cross = [bernoulli(delta, false), bernoulli(delta, true)];
        let excess = [0, 1].map(|y| same[y].iter().map(|&s| s - cross[y]).collect::<Vec<_>>());
        let excess_total = [0, 1].map(|y| excess[y].iter().sum());
        LinkTable {
            beta,
            delta,
            same,
            cross,
            excess,
            excess_total,
        }
    }

    #[inline]
    pub fn num_communities(&self) -> usize {
        self.beta.len()
    }
}
