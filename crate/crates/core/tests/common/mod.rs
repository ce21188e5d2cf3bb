//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

use ammsb::global::grad_theta_pair;
use ammsb::graph::{Graph, HeldOutSplit, TestPair};
use ammsb::kernels::{f_local, f_pair, z_norm, PairContext};
use ammsb::local::grad_phi;
use ammsb::minibatch::{
    branch_probabilities, link_stratum, nonlink_stratum, sample_node_batch, sample_node_batch_uniform,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn bern(p: f64, y: bool) -> f64 {
    if y {
        p
    } else {
        1.0 - p
    }
}

/// `sum_{k,l} p(y, z_ab = k, z_ba = l)` by the explicit double sum.
pub fn brute_z(ctx: &PairContext<'_>) -> f64 {
    let k = ctx.beta.len();
    let mut s = 0.0;
    for i in 0..k {
        for j in 0..k {
            let link = if i == j { ctx.beta[i] } else { ctx.delta };
            s += ctx.pi_a[i] * ctx.pi_b[j] * bern(link, ctx.y);
        }
    }
    s
}

pub fn normalize(x: &[f64]) -> Vec<f64> {
    let t: f64 = x.iter().sum();
    x.iter().map(|v| v / t).collect()
}

/// `log p(y | phi_a, phi_b, theta)` with both indicators summed out.
pub fn log_pair(y: bool, phi_a: &[f64], phi_b: &[f64], theta: &[[f64; 2]], delta: f64) -> f64 {
    let pa = normalize(phi_a);
    let pb = normalize(phi_b);
    let beta: Vec<f64> = theta.iter().map(|t| t[1] / (t[0] + t[1])).collect();
    brute_z(&PairContext {
        y,
        pi_a: &pa,
        pi_b: &pb,
        beta: &beta,
        delta,
    })
    .ln()
}

/// Central difference of `f` at `x`.
pub fn central_diff(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    (f(x + h) - f(x - h)) / (2.0 * h)
}

/// Whether `got` matches `want` within relative `rel` or absolute `abs`.
pub fn close(got: f64, want: f64, rel: f64, abs: f64) -> bool {
    (got - want).abs() <= rel * want.abs().max(got.abs()) || (got - want).abs() <= abs
}

/// All `r`-subsets of `items`.
pub fn subsets(items: &[usize], r: usize) -> Vec<Vec<usize>> {
    fn rec(items: &[usize], r: usize, start: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == r {
            out.push(cur.clone());
            return;
        }
        for i in start..items.len() {
            cur.push(items[i]);
            rec(items, r, i + 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(items, r, 0, &mut Vec::new(), &mut out);
    out
}

/// Training peers of `a` split by adjacency, held-out pairs removed.
pub fn peers(g: &Graph, heldout: &HeldOutSplit, a: usize) -> (Vec<usize>, Vec<usize>) {
    let mut links = Vec::new();
    let mut non = Vec::new();
    for b in 0..g.num_nodes() {
        if b == a || heldout.contains(a, b) {
            continue;
        }
        if g.has_link(a, b) {
            links.push(b);
        } else {
            non.push(b);
        }
    }
    (links, non)
}

/// Deterministic pseudo-random symmetric pair function.
pub fn pair_value(a: usize, b: usize) -> f64 {
    let (lo, hi) = (a.min(b) as u64, a.max(b) as u64);
    let mut x = lo.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ hi.wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
    x ^= x >> 31;
    x = x.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x ^= x >> 29;
    (x % 10_000) as f64 / 1000.0 - 3.0
}

/// Log collapsed posterior of indicator assignments, up to a constant.
///
/// `pairs[p] = (a, b, y)`, `z[p] = [z_ab, z_ba]`. Dirichlet-multinomial
/// terms per node, beta-Bernoulli terms per community, and a cross term for
/// every pair whose indicators differ.
pub fn log_collapsed(
    n: usize,
    k: usize,
    pairs: &[(usize, usize, bool)],
    z: &[[usize; 2]],
    alpha: f64,
    eta: f64,
    delta: f64,
) -> f64 {
    let mut counts = vec![0usize; n * k];
    let mut s = vec![[0usize; 2]; k];
    let mut cross = 0.0;
    for (&(a, b, y), &[za, zb]) in pairs.iter().zip(z) {
        counts[a * k + za] += 1;
        counts[b * k + zb] += 1;
        if za == zb {
            s[za][y as usize] += 1;
        } else {
            cross += bern(delta, y).ln();
        }
    }
    // log Gamma(c + x) - log Gamma(x) for integer c
    let rising = |x: f64, c: usize| (0..c).map(|i| (x + i as f64).ln()).sum::<f64>();
    let nodes: f64 = counts.iter().map(|&c| rising(alpha, c)).sum();
    let comms: f64 = s
        .iter()
        .map(|&[s0, s1]| rising(eta, s0) + rising(eta, s1) - rising(2.0 * eta, s0 + s1))
        .sum();
    nodes + comms + cross
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_simplex(k: usize, rng: &mut impl Rng) -> Vec<f64> {
    let raw: Vec<f64> = (0..k).map(|_| rng.random_range(0.05..1.0)).collect();
    normalize(&raw)
}

/// Largest deviation of `z_norm` from the double sum of `f_pair` and from
/// the brute-force oracle, and of `sum_k f_local` from `z_norm`, over
/// `instances` random contexts with `K` in `1..=6`.
pub fn kernel_max_error(instances: usize, seed: u64) -> f64 {
    let mut r = rng(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..instances {
        let k = r.random_range(1..=6);
        let pi_a = random_simplex(k, &mut r);
        let pi_b = random_simplex(k, &mut r);
        let beta: Vec<f64> = (0..k).map(|_| r.random_range(0.01..0.99)).collect();
        let ctx = PairContext {
            y: r.random_bool(0.5),
            pi_a: &pi_a,
            pi_b: &pi_b,
            beta: &beta,
            delta: r.random_range(1e-6..0.3),
        };
        let z = z_norm(&ctx);
        let double: f64 = (0..k).flat_map(|i| (0..k).map(move |j| (i, j))).map(|(i, j)| f_pair(&ctx, i, j)).sum();
        let local: f64 = (0..k).map(|i| f_local(&ctx, i)).sum();
        worst = worst
            .max((z - double).abs())
            .max((z - brute_z(&ctx)).abs())
            .max((local - z).abs());
    }
    worst
}

/// Largest relative error of the analytic pair gradients against central
/// differences of the exact log-likelihood, over `points` random `K = 3`
/// points (each point checks every `theta` and `phi` coordinate).
pub fn gradient_max_rel_error(points: usize, seed: u64) -> f64 {
    let mut r = rng(seed);
    let k = 3;
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for _ in 0..points {
        let y = r.random_bool(0.5);
        let delta = r.random_range(1e-4..0.2);
        let phi_a: Vec<f64> = (0..k).map(|_| r.random_range(0.2..3.0)).collect();
        let phi_b: Vec<f64> = (0..k).map(|_| r.random_range(0.2..3.0)).collect();
        let theta: Vec<[f64; 2]> = (0..k)
            .map(|_| [r.random_range(0.5..5.0), r.random_range(0.5..5.0)])
            .collect();
        let pa = normalize(&phi_a);
        let pb = normalize(&phi_b);
        let beta: Vec<f64> = theta.iter().map(|t| t[1] / (t[0] + t[1])).collect();
        let ctx = PairContext {
            y,
            pi_a: &pa,
            pi_b: &pb,
            beta: &beta,
            delta,
        };
        for c in 0..k {
            for i in 0..2 {
                let fd = central_diff(
                    |x| {
                        let mut t = theta.clone();
                        t[c][i] = x;
                        log_pair(y, &phi_a, &phi_b, &t, delta)
                    },
                    theta[c][i],
                    h,
                );
                worst = worst.max(rel_err(grad_theta_pair(&ctx, &theta, c, i), fd));
            }
            let fd = central_diff(
                |x| {
                    let mut p = phi_a.clone();
                    p[c] = x;
                    log_pair(y, &p, &phi_b, &theta, delta)
                },
                phi_a[c],
                h,
            );
            worst = worst.max(rel_err(grad_phi(&ctx, &phi_a, c), fd));
        }
    }
    worst
}

/// Relative error with a floor of 1e-3 on the scale, since finite
/// differences carry ~1e-10 absolute noise.
pub fn rel_err(got: f64, want: f64) -> f64 {
    (got - want).abs() / want.abs().max(got.abs()).max(1e-3)
}

/// Graph on `n` nodes with a few held-out pairs, some of them former links.
pub fn small_training_graph(n: usize, seed: u64) -> (Graph, HeldOutSplit) {
    let mut r = rng(seed);
    let mut edges = Vec::new();
    let mut held = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            let link = r.random_bool(0.4);
            if r.random_bool(0.12) {
                held.push(TestPair { a, b, y: link });
            } else if link {
                edges.push((a, b));
            }
        }
    }
    // keep one node isolated in training to exercise the one-sided branch
    let edges: Vec<_> = edges.into_iter().filter(|&(a, b)| a != n - 1 && b != n - 1).collect();
    (Graph::from_edges(n, edges), HeldOutSplit::from_pairs(n, held).unwrap())
}

/// Exact `E[h * sum_batch g] - sum_{training pairs} g` over every pivot,
/// branch and non-link subset of the edge sampler.
pub fn edge_strata_bias(g: &Graph, heldout: &HeldOutSplit, m: usize) -> f64 {
    let n = g.num_nodes();
    let mut truth = 0.0;
    for a in 0..n {
        for b in a + 1..n {
            if !heldout.contains(a, b) {
                truth += pair_value(a, b);
            }
        }
    }
    let mut expected = 0.0;
    let mut r = rng(0);
    for a in 0..n {
        let (p_link, p_non) = branch_probabilities(g, heldout, a);
        let (links, non) = peers(g, heldout, a);
        if p_link > 0.0 {
            let batch = link_stratum(g, heldout, a);
            let s: f64 = batch.pairs.iter().map(|&(u, v)| pair_value(u, v)).sum();
            expected += p_link * batch.scale * s / n as f64;
            assert_eq!(batch.pairs.len(), links.len());
        }
        if p_non > 0.0 {
            let batch = nonlink_stratum(g, heldout, a, m, &mut r);
            let all = subsets(&non, batch.pairs.len());
            for sub in &all {
                let s: f64 = sub.iter().map(|&b| pair_value(a, b)).sum();
                expected += p_non * batch.scale * s / (n as f64 * all.len() as f64);
            }
        }
    }
    (expected - truth).abs()
}

/// Exact `E[c1 sum_V1 g + c0 sum_V0 g] - sum_{peers} g` for every pivot,
/// in stratified mode with `(n1, n0)` and uniform mode with `n1 + n0`.
pub fn node_batch_bias(g: &Graph, heldout: &HeldOutSplit, n1: usize, n0: usize) -> f64 {
    let mut worst: f64 = 0.0;
    let mut r = rng(1);
    for a in 0..g.num_nodes() {
        let (links, non) = peers(g, heldout, a);
        let truth: f64 = links.iter().chain(&non).map(|&b| pair_value(a, b)).sum();

        let nb = sample_node_batch(g, heldout, a, n1, n0, &mut r);
        let s1 = subsets(&links, nb.v1.len());
        let s0 = subsets(&non, nb.v0.len());
        let mean = |subs: &[Vec<usize>]| {
            subs.iter().map(|s| s.iter().map(|&b| pair_value(a, b)).sum::<f64>()).sum::<f64>() / subs.len() as f64
        };
        let expected = nb.c1 * mean(&s1) + nb.c0 * mean(&s0);
        worst = worst.max((expected - truth).abs());

        let nb = sample_node_batch_uniform(g, heldout, a, n1 + n0, &mut r);
        let all: Vec<usize> = links.iter().chain(&non).copied().collect();
        let size = nb.v1.len() + nb.v0.len();
        let subs = subsets(&all, size);
        let expected: f64 = subs
            .iter()
            .map(|s| {
                s.iter()
                    .map(|&b| {
                        let w = if g.has_link(a, b) { nb.c1 } else { nb.c0 };
                        w * pair_value(a, b)
                    })
                    .sum::<f64>()
            })
            .sum::<f64>()
            / subs.len() as f64;
        worst = worst.max((expected - truth).abs());
    }
    worst
}

/// Exact collapsed-posterior summaries for two communities, by Gray-code
/// enumeration of every indicator configuration.
pub struct TwoCommunityPosterior {
    /// `hist[same_links][same_nonlinks]`: probability that that many link and
    /// non-link pairs have equal indicators.
    pub hist: Vec<Vec<f64>>,
    /// Posterior mean of `(beta_0 + beta_1) / 2`.
    pub mean_strength: f64,
}

pub fn two_community_posterior(
    n: usize,
    pairs: &[(usize, usize, bool)],
    alpha: f64,
    eta: f64,
    delta: f64,
) -> TwoCommunityPosterior {
    let bits = 2 * pairs.len();
    assert!(bits < 40);
    let max_count = 2 * pairs.len() + 1;
    let rising = |x: f64| {
        let mut t = vec![0.0; max_count + 1];
        for c in 1..=max_count {
            t[c] = t[c - 1] + (x + (c - 1) as f64).ln();
        }
        t
    };
    let (lg_a, lg_e, lg_2e) = (rising(alpha), rising(eta), rising(2.0 * eta));
    let (ln_d, ln_nd) = (delta.ln(), (1.0 - delta).ln());
    let links = pairs.iter().filter(|p| p.2).count();

    // all indicators start at community 0
    let mut z = vec![0u8; bits];
    let mut counts = vec![[0usize; 2]; n];
    let mut s = [[0usize; 2]; 2];
    for &(a, b, y) in pairs {
        counts[a][0] += 1;
        counts[b][0] += 1;
        s[0][y as usize] += 1;
    }
    let (mut same_l, mut same_n) = (links, pairs.len() - links);
    let node_term = |c: &[usize; 2]| lg_a[c[0]] + lg_a[c[1]];
    let strength_term = |s: &[[usize; 2]; 2]| {
        s.iter()
            .map(|&[s0, s1]| lg_e[s0] + lg_e[s1] - lg_2e[s0 + s1])
            .sum::<f64>()
    };
    let cross_term = |sl: usize, sn: usize| (links - sl) as f64 * ln_d + (pairs.len() - links - sn) as f64 * ln_nd;
    let mean_beta = |s: &[[usize; 2]; 2]| {
        s.iter()
            .map(|&[s0, s1]| (s1 as f64 + eta) / ((s0 + s1) as f64 + 2.0 * eta))
            .sum::<f64>()
            / 2.0
    };

    let mut lw: f64 = counts.iter().map(node_term).sum::<f64>() + strength_term(&s) + cross_term(same_l, same_n);
    let reference = lw;
    let mut hist = vec![vec![0.0; pairs.len() - links + 1]; links + 1];
    let mut beta_acc = 0.0;
    let mut total = 0.0;
    let mut visit = |lw: f64, sl: usize, sn: usize, s: &[[usize; 2]; 2]| {
        let w = (lw - reference).exp();
        hist[sl][sn] += w;
        beta_acc += w * mean_beta(s);
        total += w;
    };
    visit(lw, same_l, same_n, &s);
    for i in 1u64..(1u64 << bits) {
        let bit = i.trailing_zeros() as usize;
        let p = bit / 2;
        let (a, b, y) = pairs[p];
        let node = if bit % 2 == 0 { a } else { b };
        let before = node_term(&counts[node]) + strength_term(&s) + cross_term(same_l, same_n);
        let (za, zb) = (z[2 * p] as usize, z[2 * p + 1] as usize);
        if za == zb {
            s[za][y as usize] -= 1;
            if y { same_l -= 1 } else { same_n -= 1 }
        }
        let old = z[bit] as usize;
        counts[node][old] -= 1;
        counts[node][1 - old] += 1;
        z[bit] ^= 1;
        let (za, zb) = (z[2 * p] as usize, z[2 * p + 1] as usize);
        if za == zb {
            s[za][y as usize] += 1;
            if y { same_l += 1 } else { same_n += 1 }
        }
        lw += node_term(&counts[node]) + strength_term(&s) + cross_term(same_l, same_n) - before;
        visit(lw, same_l, same_n, &s);
    }
    for row in &mut hist {
        for v in row.iter_mut() {
            *v /= total;
        }
    }
    TwoCommunityPosterior {
        hist,
        mean_strength: beta_acc / total,
    }
}

/// Total-variation distance between two distributions on the same support.
pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// Mean and batch-means standard error of a correlated series.
pub fn mean_and_se(xs: &[f64], batches: usize) -> (f64, f64) {
    let n = xs.len() / batches * batches;
    let size = n / batches;
    let means: Vec<f64> = xs[..n].chunks(size).map(|c| c.iter().sum::<f64>() / size as f64).collect();
    let mean = means.iter().sum::<f64>() / batches as f64;
    let var = means.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (batches - 1) as f64;
    (mean, (var / batches as f64).sqrt())
}
