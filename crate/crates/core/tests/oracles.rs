mod common;

use ammsb::baselines::lmc::LmcSampler;
use ammsb::baselines::training_pairs;
use ammsb::global::{update_theta, GlobalStep};
use ammsb::graph::{Graph, HeldOutSplit};
use ammsb::kernels::{f_local, z_norm, LinkTable, PairContext};
use ammsb::local::{update_phi_row, LocalStep};
use ammsb::minibatch::{EdgeBatch, NodeBatch, Stratum};
use ammsb::sparse::{f_tilde, promote_demote, split_communities, z_tilde, BulkSummary, SparseRow};
use ammsb::state::riemannian_step;
use ammsb::{HyperParams, ModelState};
use common::*;
use proptest::prelude::*;
use rand::Rng;

#[test]
fn kernels_match_brute_force() {
    assert!(kernel_max_error(1000, 11) <= 1e-12);
}

#[test]
fn kernel_total_probability() {
    let mut r = rng(3);
    for _ in 0..200 {
        let k = r.random_range(1..=5);
        let pa = random_simplex(k, &mut r);
        let pb = random_simplex(k, &mut r);
        let beta: Vec<f64> = (0..k).map(|_| r.random_range(0.0..1.0)).collect();
        let total: f64 = [true, false]
            .iter()
            .map(|&y| {
                z_norm(&PairContext {
                    y,
                    pi_a: &pa,
                    pi_b: &pb,
                    beta: &beta,
                    delta: 0.05,
                })
            })
            .sum();
        assert!((total - 1.0).abs() < 1e-12);
    }
}

#[test]
fn pair_gradients_match_finite_differences() {
    let worst = gradient_max_rel_error(200, 5);
    assert!(worst <= 1e-5, "worst relative error {worst}");
}

#[test]
fn edge_strata_are_unbiased() {
    for seed in 0..4 {
        let (g, held) = small_training_graph(8, seed);
        for m in 1..=3 {
            let bias = edge_strata_bias(&g, &held, m);
            assert!(bias <= 1e-9, "seed {seed} m {m}: bias {bias}");
        }
    }
}

#[test]
fn node_batches_are_unbiased() {
    for seed in 0..4 {
        let (g, held) = small_training_graph(7, seed);
        for (n1, n0) in [(1, 1), (2, 3), (10, 10)] {
            let bias = node_batch_bias(&g, &held, n1, n0);
            assert!(bias <= 1e-9, "seed {seed} ({n1},{n0}): bias {bias}");
        }
    }
}

fn tiny_instance() -> (Graph, ModelState, f64) {
    let g = Graph::from_edges(6, [(0, 1), (0, 2), (1, 2), (3, 4), (4, 5), (2, 3)]);
    let mut r = rng(17);
    let phi: Vec<f64> = (0..12).map(|_| r.random_range(0.5..2.0)).collect();
    let theta = vec![[1.5, 2.5], [3.0, 0.8]];
    (g, ModelState::from_parts(6, 2, phi, theta).unwrap(), 0.05)
}

fn log_lik(g: &Graph, phi: &[f64], theta: &[[f64; 2]], delta: f64) -> f64 {
    let mut s = 0.0;
    for a in 0..6 {
        for b in a + 1..6 {
            s += log_pair(g.has_link(a, b), &phi[2 * a..2 * a + 2], &phi[2 * b..2 * b + 2], theta, delta);
        }
    }
    s
}

/// `log Gamma(x; shape, 1)` up to a constant.
fn log_gamma_prior(x: f64, shape: f64) -> f64 {
    (shape - 1.0) * x.ln() - x
}

#[test]
fn full_batch_theta_drift_is_riemannian_posterior_gradient() {
    let (g, state, delta) = tiny_instance();
    let eta = 1.7;
    let eps = 1e-3;
    let step = GlobalStep {
        eta,
        delta,
        eps,
        noise: false,
    };
    let mut links = Vec::new();
    let mut non = Vec::new();
    for a in 0..6 {
        for b in a + 1..6 {
            if g.has_link(a, b) {
                links.push((a, b));
            } else {
                non.push((a, b));
            }
        }
    }
    let batch = |pairs: Vec<(usize, usize)>, kind| EdgeBatch {
        pivot: 0,
        pairs,
        scale: 1.0,
        kind,
    };
    let drift = |b: &EdgeBatch| {
        let mut theta = state.theta().to_vec();
        update_theta(&mut theta, &state, b, &[0, 1], &step, &mut rng(0));
        theta
            .iter()
            .zip(state.theta())
            .map(|(n, o)| [(n[0] - o[0]) * 2.0 / eps, (n[1] - o[1]) * 2.0 / eps])
            .collect::<Vec<_>>()
    };
    let dl = drift(&batch(links, Stratum::Link));
    let dn = drift(&batch(non, Stratum::NonLink));
    let phi: Vec<f64> = (0..6).flat_map(|a| state.phi_row(a).to_vec()).collect();
    for k in 0..2 {
        for i in 0..2 {
            let x = state.theta()[k][i];
            let fd = central_diff(
                |v| {
                    let mut t = state.theta().to_vec();
                    t[k][i] = v;
                    log_lik(&g, &phi, &t, delta) + log_gamma_prior(v, eta)
                },
                x,
                1e-5,
            );
            // prior drift counted once across the two strata
            let got = dl[k][i] + dn[k][i] - (eta - x);
            let want = 1.0 + x * fd;
            assert!((got - want).abs() < 1e-6, "theta[{k}][{i}]: {got} vs {want}");
        }
    }
}

#[test]
fn full_strata_phi_drift_is_riemannian_posterior_gradient() {
    let (g, state, delta) = tiny_instance();
    let alpha = 0.6;
    let eps = 1e-3;
    let table = LinkTable::new(state.beta(), delta);
    let step = LocalStep {
        alpha,
        eps,
        noise: false,
    };
    let phi: Vec<f64> = (0..6).flat_map(|a| state.phi_row(a).to_vec()).collect();
    for a in 0..6 {
        let (v1, v0) = peers(&g, &HeldOutSplit::none(6), a);
        let nb = NodeBatch {
            pivot: a,
            v1,
            v0,
            c1: 1.0,
            c0: 1.0,
        };
        let row = update_phi_row(&state, &table, &nb, &step, &mut rng(0));
        for k in 0..2 {
            let x = phi[2 * a + k];
            let fd = central_diff(
                |v| {
                    let mut p = phi.clone();
                    p[2 * a + k] = v;
                    log_lik(&g, &p, state.theta(), delta) + log_gamma_prior(v, alpha)
                },
                x,
                1e-5,
            );
            let got = (row[k] - x) * 2.0 / eps;
            let want = 1.0 + x * fd;
            assert!((got - want).abs() < 1e-6, "phi[{a}][{k}]: {got} vs {want}");
        }
    }
}

#[test]
fn lmc_gradients_match_finite_differences() {
    let (g, state, delta) = tiny_instance();
    let mut hp = HyperParams::with_defaults(2);
    hp.delta = delta;
    let held = HeldOutSplit::none(6);
    let lmc = LmcSampler::new(state.clone(), &g, &held, hp);
    let (gp, gt) = lmc.gradients(&state);
    let phi: Vec<f64> = (0..6).flat_map(|a| state.phi_row(a).to_vec()).collect();
    for (j, &x) in phi.iter().enumerate() {
        let fd = central_diff(
            |v| {
                let mut p = phi.clone();
                p[j] = v;
                log_lik(&g, &p, state.theta(), delta)
            },
            x,
            1e-5,
        );
        assert!(rel_err(gp[j], fd) < 1e-6);
    }
    for k in 0..2 {
        for i in 0..2 {
            let fd = central_diff(
                |v| {
                    let mut t = state.theta().to_vec();
                    t[k][i] = v;
                    log_lik(&g, &phi, &t, delta)
                },
                state.theta()[k][i],
                1e-5,
            );
            assert!(rel_err(gt[k][i], fd) < 1e-6);
        }
    }
    assert_eq!(training_pairs(&g, &held).len(), 15);
}

#[test]
fn bulk_approximation_improves_with_batch_size() {
    // 200 bulk communities with independent strengths and peer memberships
    let mut r = rng(23);
    let bulk = 200;
    let beta: Vec<f64> = (0..bulk).map(|_| r.random_range(0.0..1.0)).collect();
    let pi_b: Vec<f64> = (0..bulk).map(|_| r.random_range(0.0..0.01)).collect();
    let pi_a_bulk = 0.002;
    let delta = 0.01;
    let exact: f64 = (0..bulk)
        .map(|k| pi_a_bulk * (beta[k] * pi_b[k] + delta * (1.0 - pi_b[k])))
        .sum::<f64>()
        / bulk as f64;
    let mean_error = |m: usize| {
        let mut r = rng(m as u64);
        let trials = 4000;
        let mut total = 0.0;
        for _ in 0..trials {
            let idx = rand::seq::index::sample(&mut r, bulk, m);
            let summary = BulkSummary {
                pi_bar: idx.iter().map(|k| pi_b[k]).sum::<f64>() / m as f64,
                beta_bar: idx.iter().map(|k| beta[k]).sum::<f64>() / m as f64,
                batch_size: m,
            };
            total += (f_tilde(true, delta, &summary, pi_a_bulk) - exact).abs() / exact;
        }
        total / trials as f64
    };
    let (e1, e4, e16) = (mean_error(1), mean_error(4), mean_error(16));
    assert!(e1 > e4 && e4 > e16, "errors {e1} {e4} {e16}");
}

#[test]
fn approximate_normalizer_diagnostic() {
    let mut r = rng(31);
    let k = 50;
    let tau = 0.9;
    // peaked memberships, as after burn-in
    let raw_a: Vec<f64> = (0..k).map(|i| if i < 3 { 10.0 } else { r.random_range(0.01..0.1) }).collect();
    let raw_b: Vec<f64> = (0..k).map(|i| if (2..5).contains(&i) { 10.0 } else { r.random_range(0.01..0.1) }).collect();
    let (pa, pb) = (normalize(&raw_a), normalize(&raw_b));
    let beta: Vec<f64> = (0..k).map(|_| r.random_range(0.2..0.9)).collect();
    let ctx = PairContext {
        y: true,
        pi_a: &pa,
        pi_b: &pb,
        beta: &beta,
        delta: 1e-4,
    };
    let split = split_communities(&pa, tau, &[2, 3, 4]);
    let explicit: Vec<usize> = split.active.iter().chain(&split.candidate).copied().collect();
    let exact_terms: Vec<f64> = explicit.iter().map(|&c| f_local(&ctx, c)).collect();
    let sub: Vec<usize> = split.bulk.iter().copied().take(16).collect();
    let summary = BulkSummary {
        pi_bar: sub.iter().map(|&c| pb[c]).sum::<f64>() / sub.len() as f64,
        beta_bar: sub.iter().map(|&c| beta[c]).sum::<f64>() / sub.len() as f64,
        batch_size: sub.len(),
    };
    let pi_a_bulk = split.bulk.iter().map(|&c| pa[c]).sum::<f64>() / split.bulk.len() as f64;
    let approx = z_tilde(split.bulk.len(), &exact_terms, f_tilde(true, 1e-4, &summary, pi_a_bulk));
    let exact = z_norm(&ctx);
    println!("z_tilde / z_norm = {:.4} (K = {k}, tau = {tau})", approx / exact);
    assert!(approx.is_finite() && approx > 0.0);
}

/// Mass of entries at or above `value`, excluding index `skip`.
fn mass_at_or_above(pi: &[f64], value: f64, skip: usize) -> f64 {
    pi.iter()
        .enumerate()
        .filter(|&(j, &p)| j != skip && p >= value)
        .map(|(_, p)| p)
        .sum()
}

fn mass_above(pi: &[f64], value: f64) -> f64 {
    pi.iter().filter(|&&p| p > value).sum()
}

fn arb_row() -> impl Strategy<Value = (usize, Vec<u32>, Vec<f64>, f64)> {
    (3usize..40).prop_flat_map(|k| {
        (
            Just(k),
            proptest::sample::subsequence((0..k as u32).collect::<Vec<_>>(), 1..k),
            proptest::collection::vec(0.001f64..5.0, k),
            0.0001f64..0.5,
        )
            .prop_map(|(k, ids, vals, bulk)| {
                let values = ids.iter().map(|&i| vals[i as usize]).collect();
                (k, ids, values, bulk)
            })
    })
}

proptest! {
    #[test]
    fn local_weights_sum_to_normalizer(k in 1usize..7, seed in any::<u64>(), y in any::<bool>()) {
        let mut r = rng(seed);
        let pa = random_simplex(k, &mut r);
        let pb = random_simplex(k, &mut r);
        let beta: Vec<f64> = (0..k).map(|_| r.random_range(0.0..1.0)).collect();
        let ctx = PairContext { y, pi_a: &pa, pi_b: &pb, beta: &beta, delta: 0.01 };
        let s: f64 = (0..k).map(|c| f_local(&ctx, c)).sum();
        prop_assert!((s - z_norm(&ctx)).abs() <= 1e-12);
    }

    #[test]
    fn riemannian_step_stays_positive(
        x in 1e-12f64..1e3,
        shape in 0.01f64..10.0,
        grad in -1e6f64..1e6,
        eps in 1e-8f64..1.0,
        noise in -10.0f64..10.0,
    ) {
        let next = riemannian_step(x, shape, grad, eps, noise);
        prop_assert!(next > 0.0 && next.is_finite());
    }

    #[test]
    fn split_is_a_partition(
        raw in proptest::collection::vec(0.0001f64..1.0, 1..60),
        tau in 0.05f64..1.0,
        neighbors in proptest::collection::vec(0usize..60, 0..8),
    ) {
        let k = raw.len();
        let pi = normalize(&raw);
        let neighbors: Vec<usize> = neighbors.into_iter().filter(|&c| c < k).collect();
        let split = split_communities(&pi, tau, &neighbors);
        let mut seen = vec![0u8; k];
        for &c in split.active.iter().chain(&split.candidate).chain(&split.bulk) {
            seen[c] += 1;
        }
        prop_assert!(seen.iter().all(|&s| s == 1));
        let active_mass: f64 = split.active.iter().map(|&c| pi[c]).sum();
        prop_assert!(active_mass < tau);
        for &c in &split.candidate {
            prop_assert!(neighbors.contains(&c));
        }
        // active is a top prefix
        for &c in &split.active {
            prop_assert!(mass_above(&pi, pi[c]) + pi[c] < tau + 1e-12);
        }
        for c in 0..k {
            if !split.active.contains(&c) {
                prop_assert!(mass_at_or_above(&pi, pi[c], c) + pi[c] >= tau - 1e-12);
            }
        }
    }

    #[test]
    fn promote_demote_keeps_invariants(
        (k, ids, values, bulk) in arb_row(),
        tau in 0.05f64..0.999,
        neighbor_mask in any::<u64>(),
        zero_mask in any::<u64>(),
        seed in any::<u64>(),
    ) {
        let row = SparseRow::from_parts(ids.clone(), values, bulk, k, tau);
        let neighbor_active: Vec<u32> = (0..k as u32).filter(|&c| neighbor_mask >> c & 1 == 1 && c % 3 == 0).collect();
        let zero_pool: Vec<u32> = (0..k as u32).filter(|c| zero_mask >> c & 1 == 1 && ids.binary_search(c).is_err()).collect();
        let out = promote_demote(&row, &neighbor_active, &zero_pool, tau, k, &mut rng(seed));

        prop_assert!(out.ids().windows(2).all(|w| w[0] < w[1]));
        prop_assert!(out.ids().iter().all(|&c| (c as usize) < k));
        prop_assert!(!out.ids().is_empty());
        prop_assert!((out.total() - row.total()).abs() <= 1e-12 * row.total());
        for c in &neighbor_active {
            prop_assert!(out.ids().binary_search(c).is_ok());
        }

        // entries with less than tau mass strictly ahead of them stay explicit
        let before = row.dense(k);
        let before_pi: Vec<f64> = before.iter().map(|v| v / row.total()).collect();
        for &c in &ids {
            let ahead = mass_at_or_above(&before_pi, before_pi[c as usize], c as usize);
            if ahead < tau {
                prop_assert!(out.ids().binary_search(&c).is_ok(), "id {} dropped", c);
            }
        }

        let pi: Vec<f64> = out.dense(k).iter().map(|v| v / out.total()).collect();
        let active = out.active();
        prop_assert!(active.iter().all(|c| out.ids().binary_search(c).is_ok()));
        let active_mass: f64 = active.iter().map(|&c| pi[c as usize]).sum();
        prop_assert!(active_mass < tau);
        for &c in active {
            prop_assert!(mass_above(&pi, pi[c as usize]) + pi[c as usize] < tau + 1e-12);
        }
        for &c in out.ids() {
            if active.binary_search(&c).is_err() {
                prop_assert!(mass_at_or_above(&pi, pi[c as usize], c as usize) + pi[c as usize] >= tau - 1e-12);
            }
        }
        // prefix: an explicit entry strictly heavier than an active one is active
        for &c in active {
            for &d in out.ids() {
                if pi[d as usize] > pi[c as usize] {
                    prop_assert!(active.binary_search(&d).is_ok());
                }
            }
        }
    }
}
