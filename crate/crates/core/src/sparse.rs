//! Sparse membership rows for large `K`.
//!
//! Each node keeps explicit values for its active and candidate communities;
//! every other community shares a single bulk value. Rows are updated with
//! approximate kernels over the bulk block, then re-split by promotion and
//! demotion.

use std::collections::HashSet;

use rand::seq::index;
use rand::Rng;

use crate::global::Memberships;
use crate::graph::Graph;
use crate::kernels::{bernoulli, LinkTable};
use crate::local::{apply_local_step, stratified_gradient, LocalStep, RowRef};
use crate::minibatch::NodeBatch;
use crate::state::ModelState;

/// Partition of the communities of one node.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CommunitySplit {
    /// In descending membership order.
    pub active: Vec<usize>,
    pub candidate: Vec<usize>,
    pub bulk: Vec<usize>,
}

/// Communities sorted by descending `pi_a`, ties by id.
fn descending_order(pi_a: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..pi_a.len()).collect();
    order.sort_by(|&i, &j| pi_a[j].total_cmp(&pi_a[i]).then(i.cmp(&j)));
    order
}

/// Active = descending prefix with cumulative mass `< tau`; candidate =
/// neighbor-active communities outside it; bulk = the rest.
pub fn split_communities(pi_a: &[f64], tau: f64, neighbor_active: &[usize]) -> CommunitySplit {
    let mut cumulative = 0.0;
    let mut active = Vec::new();
    for k in descending_order(pi_a) {
        cumulative += pi_a[k];
        if cumulative >= tau {
            break;
        }
        active.push(k);
    }
    let in_active: HashSet<usize> = active.iter().copied().collect();
    let mut candidate: Vec<usize> = neighbor_active
        .iter()
        .copied()
        .filter(|k| !in_active.contains(k))
        .collect();
    candidate.sort_unstable();
    candidate.dedup();
    let explicit: HashSet<usize> = in_active.iter().chain(&candidate).copied().collect();
    let bulk = (0..pi_a.len()).filter(|k| !explicit.contains(k)).collect();
    CommunitySplit {
        active,
        candidate,
        bulk,
    }
}

/// Bulk means over a sub-sample of the bulk communities of node `a`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BulkSummary {
    /// Mean `pi_bk` over the sub-sample.
    pub pi_bar: f64,
    /// Mean `beta_k` over the sub-sample.
    pub beta_bar: f64,
    pub batch_size: usize,
}

/// Approximate `f_local(k)` shared by every bulk community of `a`.
pub fn f_tilde(y: bool, delta: f64, bulk: &BulkSummary, pi_a_bulk: f64) -> f64 {
    pi_a_bulk * (bernoulli(bulk.beta_bar, y) * bulk.pi_bar + bernoulli(delta, y) * (1.0 - bulk.pi_bar))
}

/// Approximate normalizer: exact terms for explicit communities plus the
/// shared bulk term once per bulk member.
pub fn z_tilde(bulk_count: usize, exact_terms: &[f64], f_tilde: f64) -> f64 {
    exact_terms.iter().sum::<f64>() + bulk_count as f64 * f_tilde
}

/// Number of bulk communities to promote when the mass ranked above the
/// bulk representative is `mass_before < tau`.
pub fn promotion_count(tau: f64, mass_before: f64, pi_bulk: f64, bulk_count: usize) -> usize {
    if mass_before >= tau || pi_bulk <= 0.0 {
        return 0;
    }
    (((tau - mass_before) / pi_bulk) as usize).min(bulk_count)
}

/// Explicit entries (ids ascending) plus a shared bulk value.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseRow {
    ids: Vec<u32>,
    phi: Vec<f64>,
    /// Active subset of `ids`, ascending.
    active: Vec<u32>,
    bulk_value: f64,
    total: f64,
}

impl SparseRow {
    fn new(ids: Vec<u32>, phi: Vec<f64>, active: Vec<u32>, bulk_value: f64, num_communities: usize) -> Self {
        let mut row = SparseRow {
            ids,
            phi,
            active,
            bulk_value,
            total: 0.0,
        };
        row.refresh_total(num_communities);
        row
    }

    /// Row with explicit `(ids, values)` and the given bulk value; the active
    /// set is derived from `tau`.
    pub fn from_parts(ids: Vec<u32>, values: Vec<f64>, bulk_value: f64, num_communities: usize, tau: f64) -> Self {
        assert_eq!(ids.len(), values.len(), "one value per explicit id");
        assert!(ids.windows(2).all(|w| w[0] < w[1]), "explicit ids must ascend");
        let mut row = SparseRow::new(ids, values, Vec::new(), bulk_value, num_communities);
        row.active = active_ids(&row, tau, num_communities);
        row
    }

    fn refresh_total(&mut self, num_communities: usize) {
        let explicit: f64 = self.phi.iter().sum();
        let bulk = num_communities - self.ids.len();
        self.total = if bulk > 0 {
            explicit + bulk as f64 * self.bulk_value
        } else {
            explicit
        };
    }

    pub fn ids(&self) -> &[u32] {
        &self.ids
    }

    pub fn values(&self) -> &[f64] {
        &self.phi
    }

    pub fn active(&self) -> &[u32] {
        &self.active
    }

    pub fn bulk_value(&self) -> f64 {
        self.bulk_value
    }

    pub fn total(&self) -> f64 {
        self.total
    }

    #[inline]
    fn index_of(&self, k: usize, num_communities: usize) -> Option<usize> {
        if self.ids.len() == num_communities {
            return Some(k);
        }
        self.ids.binary_search(&(k as u32)).ok()
    }

    #[inline]
    fn value(&self, k: usize, num_communities: usize) -> f64 {
        match self.index_of(k, num_communities) {
            Some(j) => self.phi[j],
            None => self.bulk_value,
        }
    }

    fn bulk_count(&self, num_communities: usize) -> usize {
        num_communities - self.ids.len()
    }

    /// Full `phi` row.
    pub fn dense(&self, num_communities: usize) -> Vec<f64> {
        let mut row = vec![self.bulk_value; num_communities];
        for (&k, &v) in self.ids.iter().zip(&self.phi) {
            row[k as usize] = v;
        }
        row
    }

    /// Split view of this row.
    pub fn split(&self, num_communities: usize) -> CommunitySplit {
        let mut active: Vec<(f64, usize)> = self
            .active
            .iter()
            .map(|&k| (self.value(k as usize, num_communities), k as usize))
            .collect();
        active.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)));
        let candidate = self
            .ids
            .iter()
            .filter(|k| self.active.binary_search(k).is_err())
            .map(|&k| k as usize)
            .collect();
        let bulk = (0..num_communities)
            .filter(|&k| self.index_of(k, num_communities).is_none())
            .collect();
        CommunitySplit {
            active: active.into_iter().map(|(_, k)| k).collect(),
            candidate,
            bulk,
        }
    }
}

/// Rank-ordered view of a row: explicit entries descending with the bulk
/// block (all members together) inserted at its value, explicit first on
/// ties. Yields `(explicit index or None for the block, mass before, mass)`.
fn ranked(row: &SparseRow, num_communities: usize) -> Vec<(Option<usize>, f64, f64)> {
    let mut order: Vec<usize> = (0..row.ids.len()).collect();
    order.sort_by(|&i, &j| row.phi[j].total_cmp(&row.phi[i]).then(i.cmp(&j)));
    let bulk = row.bulk_count(num_communities);
    let mut out = Vec::with_capacity(order.len() + 1);
    let mut before = 0.0;
    let mut block_done = bulk == 0;
    for j in order {
        if !block_done && row.phi[j] < row.bulk_value {
            let mass = bulk as f64 * row.bulk_value / row.total;
            out.push((None, before, mass));
            before += mass;
            block_done = true;
        }
        let mass = row.phi[j] / row.total;
        out.push((Some(j), before, mass));
        before += mass;
    }
    if !block_done {
        out.push((None, before, bulk as f64 * row.bulk_value / row.total));
    }
    out
}

/// Active ids (ascending): explicit entries whose inclusive cumulative mass
/// in rank order is `< tau`.
fn active_ids(row: &SparseRow, tau: f64, num_communities: usize) -> Vec<u32> {
    let mut active: Vec<u32> = ranked(row, num_communities)
        .into_iter()
        .filter_map(|(j, before, mass)| j.filter(|_| before + mass < tau).map(|j| row.ids[j]))
        .collect();
    active.sort_unstable();
    active
}

/// Draws up to `count` distinct communities outside `explicit` and `skip`.
fn sample_outside<R: Rng + ?Sized>(
    num_communities: usize,
    explicit: &[u32],
    skip: &HashSet<u32>,
    count: usize,
    rng: &mut R,
) -> Vec<u32> {
    let excluded = |k: u32| explicit.binary_search(&k).is_ok() || skip.contains(&k);
    let pool_size = num_communities.saturating_sub(explicit.len() + skip.len());
    if count == 0 || pool_size == 0 {
        return Vec::new();
    }
    if 4 * count >= pool_size {
        let pool: Vec<u32> = (0..num_communities as u32).filter(|&k| !excluded(k)).collect();
        if count >= pool.len() {
            return pool;
        }
        return index::sample(rng, pool.len(), count).into_iter().map(|i| pool[i]).collect();
    }
    let mut chosen = Vec::with_capacity(count);
    let mut seen = HashSet::with_capacity(count);
    while chosen.len() < count {
        let k = rng.random_range(0..num_communities as u32);
        if !excluded(k) && seen.insert(k) {
            chosen.push(k);
        }
    }
    chosen
}

/// Re-splits `row` after its values changed.
///
/// Explicit entries ranked with less than `tau` mass ahead of them stay, as
/// do those active at some neighbor; the others are absorbed into the bulk
/// value, preserving the row total. Bulk members active at a neighbor become
/// explicit, and [`promotion_count`] more are drawn from `zero_pool` (ids
/// held by no node) before the rest of the bulk. Promoted entries start at
/// the bulk value.
pub fn promote_demote<R: Rng + ?Sized>(
    row: &SparseRow,
    neighbor_active: &[u32],
    zero_pool: &[u32],
    tau: f64,
    num_communities: usize,
    rng: &mut R,
) -> SparseRow {
    let neighbor: HashSet<u32> = neighbor_active.iter().copied().collect();
    let bulk_count = row.bulk_count(num_communities);
    let ranks = ranked(row, num_communities);

    let mut keep = vec![false; row.ids.len()];
    let mut bulk_before = 1.0;
    for &(j, before, _) in &ranks {
        match j {
            Some(j) => keep[j] = before < tau || neighbor.contains(&row.ids[j]),
            None => bulk_before = before,
        }
    }
    if !keep.iter().any(|&x| x) && !row.ids.is_empty() {
        // never leave a row without explicit entries
        let top = ranks.iter().find_map(|r| r.0).unwrap_or(0);
        keep[top] = true;
    }

    let mut promoted: Vec<u32> = neighbor_active
        .iter()
        .copied()
        .filter(|k| row.ids.binary_search(k).is_err())
        .collect();
    promoted.sort_unstable();
    promoted.dedup();
    let pi_bulk = row.bulk_value / row.total;
    let wanted = promotion_count(tau, bulk_before, pi_bulk, bulk_count).min(bulk_count - promoted.len());
    if wanted > 0 {
        let fresh = |k: &u32| !neighbor.contains(k) && row.ids.binary_search(k).is_err();
        let from_zero: Vec<u32> = if zero_pool.len() <= wanted {
            zero_pool.iter().copied().filter(fresh).collect()
        } else {
            index::sample(rng, zero_pool.len(), wanted)
                .into_iter()
                .map(|i| zero_pool[i])
                .filter(fresh)
                .collect()
        };
        let short = wanted - from_zero.len();
        promoted.extend(&from_zero);
        if short > 0 {
            let skip: HashSet<u32> = promoted.iter().copied().collect();
            let rest = sample_outside(num_communities, &row.ids, &skip, short, rng);
            promoted.extend(rest);
        }
    }

    let demoted_mass: f64 = row
        .phi
        .iter()
        .zip(&keep)
        .filter(|(_, &k)| !k)
        .map(|(v, _)| v)
        .sum();
    let demoted = keep.iter().filter(|&&k| !k).count();
    let remaining_bulk = bulk_count - promoted.len();
    let new_bulk = remaining_bulk + demoted;
    let bulk_value = if demoted > 0 && new_bulk > 0 {
        (remaining_bulk as f64 * row.bulk_value + demoted_mass) / new_bulk as f64
    } else {
        row.bulk_value
    };

    let mut entries: Vec<(u32, f64)> = row
        .ids
        .iter()
        .zip(&row.phi)
        .zip(&keep)
        .filter(|(_, &k)| k)
        .map(|((&id, &v), _)| (id, v))
        .chain(promoted.iter().map(|&id| (id, row.bulk_value)))
        .collect();
    entries.sort_unstable_by_key(|e| e.0);
    let (ids, phi): (Vec<u32>, Vec<f64>) = entries.into_iter().unzip();
    let mut out = SparseRow::new(ids, phi, Vec::new(), bulk_value, num_communities);
    out.active = active_ids(&out, tau, num_communities);
    out
}

/// Sparse counterpart of [`ModelState`].
#[derive(Clone, Debug)]
pub struct SparseState {
    num_communities: usize,
    tau: f64,
    rows: Vec<SparseRow>,
    pub(crate) theta: Vec<[f64; 2]>,
    /// Number of nodes holding each community explicitly.
    registry: Vec<u32>,
}

impl SparseState {
    /// Splits every row of `dense`. With `tau >= 1` all entries stay explicit.
    pub fn from_dense(dense: &ModelState, g: &Graph, tau: f64) -> Self {
        let n = dense.num_nodes();
        let kk = dense.num_communities();
        let rows: Vec<SparseRow> = if tau >= 1.0 {
            (0..n)
                .map(|a| {
                    let ids = (0..kk as u32).collect::<Vec<_>>();
                    SparseRow::new(ids.clone(), dense.phi_row(a).to_vec(), ids, 0.0, kk)
                })
                .collect()
        } else {
            let actives: Vec<Vec<usize>> = (0..n)
                .map(|a| {
                    let mut act = split_communities(&dense.pi_row(a), tau, &[]).active;
                    act.sort_unstable();
                    act
                })
                .collect();
            (0..n)
                .map(|a| {
                    let pi = dense.pi_row(a);
                    let order = descending_order(&pi);
                    let mut explicit: HashSet<usize> = HashSet::new();
                    let mut before = 0.0;
                    for &k in &order {
                        if before >= tau {
                            break;
                        }
                        explicit.insert(k);
                        before += pi[k];
                    }
                    for &b in g.neighbors(a) {
                        explicit.extend(&actives[b as usize]);
                    }
                    let phi_row = dense.phi_row(a);
                    let mut ids: Vec<u32> = explicit.iter().map(|&k| k as u32).collect();
                    ids.sort_unstable();
                    let bulk = kk - ids.len();
                    let bulk_value = if bulk > 0 {
                        let explicit_mass: f64 = ids.iter().map(|&k| phi_row[k as usize]).sum();
                        ((dense.row_total(a) - explicit_mass) / bulk as f64).max(crate::state::MIN_POSITIVE)
                    } else {
                        0.0
                    };
                    let phi = ids.iter().map(|&k| phi_row[k as usize]).collect();
                    let mut row = SparseRow::new(ids, phi, Vec::new(), bulk_value, kk);
                    row.active = active_ids(&row, tau, kk);
                    row
                })
                .collect()
        };
        let mut registry = vec![0u32; kk];
        for row in &rows {
            for &k in &row.ids {
                registry[k as usize] += 1;
            }
        }
        SparseState {
            num_communities: kk,
            tau,
            rows,
            theta: dense.theta().to_vec(),
            registry,
        }
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn row(&self, a: usize) -> &SparseRow {
        &self.rows[a]
    }

    pub fn theta(&self) -> &[[f64; 2]] {
        &self.theta
    }

    pub fn theta_mut(&mut self) -> &mut [[f64; 2]] {
        &mut self.theta
    }

    pub fn registry(&self) -> &[u32] {
        &self.registry
    }

    /// Communities held explicitly by no node, ascending.
    pub fn zero_pool(&self) -> Vec<u32> {
        (0..self.num_communities as u32)
            .filter(|&k| self.registry[k as usize] == 0)
            .collect()
    }

    /// Union of the active sets of `a`'s neighbors, ascending.
    pub fn neighbor_active(&self, g: &Graph, a: usize) -> Vec<u32> {
        let mut out: Vec<u32> = g
            .neighbors(a)
            .iter()
            .flat_map(|&b| self.rows[b as usize].active.iter().copied())
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Installs `row` for node `a` and updates the registry.
    pub fn replace_row(&mut self, a: usize, row: SparseRow) {
        for &k in &self.rows[a].ids {
            self.registry[k as usize] -= 1;
        }
        for &k in &row.ids {
            self.registry[k as usize] += 1;
        }
        self.rows[a] = row;
    }

    /// Mean over nodes of `(|active| + |candidate| + 1) / K`.
    pub fn memory_ratio(&self) -> f64 {
        let kk = self.num_communities as f64;
        self.rows.iter().map(|r| (r.ids.len() + 1) as f64 / kk).sum::<f64>() / self.rows.len() as f64
    }

    /// Largest per-node memory ratio.
    pub fn max_memory_ratio(&self) -> f64 {
        let kk = self.num_communities as f64;
        self.rows
            .iter()
            .map(|r| (r.ids.len() + 1) as f64 / kk)
            .fold(0.0, f64::max)
    }

    /// Dense copy with every bulk value expanded.
    pub fn densify(&self) -> ModelState {
        let kk = self.num_communities;
        let phi = self.rows.iter().flat_map(|r| r.dense(kk)).collect();
        ModelState::from_parts(self.rows.len(), kk, phi, self.theta.clone())
            .expect("sparse rows hold positive values")
    }

    /// Checks disjointness, positivity, registry counts and the active rule.
    pub fn check_invariants(&self) -> std::result::Result<(), String> {
        let kk = self.num_communities;
        let mut registry = vec![0u32; kk];
        for (a, row) in self.rows.iter().enumerate() {
            if row.ids.windows(2).any(|w| w[0] >= w[1]) || row.ids.iter().any(|&k| k as usize >= kk) {
                return Err(format!("node {a}: explicit ids not strictly ascending in range"));
            }
            if row.phi.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
                return Err(format!("node {a}: non-positive explicit value"));
            }
            if row.bulk_count(kk) > 0 && !(row.bulk_value > 0.0) {
                return Err(format!("node {a}: non-positive bulk value"));
            }
            if row.active.iter().any(|k| row.ids.binary_search(k).is_err()) {
                return Err(format!("node {a}: active id not explicit"));
            }
            if self.tau < 1.0 && row.active != active_ids(row, self.tau, kk) {
                return Err(format!("node {a}: active set breaks the threshold rule"));
            }
            for &k in &row.ids {
                registry[k as usize] += 1;
            }
        }
        if registry != self.registry {
            return Err("registry out of sync".into());
        }
        Ok(())
    }
}

impl Memberships for SparseState {
    fn num_nodes(&self) -> usize {
        self.rows.len()
    }

    fn num_communities(&self) -> usize {
        self.num_communities
    }

    #[inline]
    fn pi(&self, a: usize, k: usize) -> f64 {
        let row = &self.rows[a];
        row.value(k, self.num_communities) / row.total
    }

    fn pair_norm(&self, a: usize, b: usize, y: bool, table: &LinkTable) -> f64 {
        let (ra, rb) = (&self.rows[a], &self.rows[b]);
        let excess = &table.excess[y as usize];
        let (mut i, mut j) = (0, 0);
        let mut s = 0.0;
        let mut union_excess = 0.0;
        while i < ra.ids.len() || j < rb.ids.len() {
            let ka = ra.ids.get(i).copied().unwrap_or(u32::MAX);
            let kb = rb.ids.get(j).copied().unwrap_or(u32::MAX);
            let k = ka.min(kb);
            let pa = if ka == k {
                i += 1;
                ra.phi[i - 1]
            } else {
                ra.bulk_value
            };
            let pb = if kb == k {
                j += 1;
                rb.phi[j - 1]
            } else {
                rb.bulk_value
            };
            s += excess[k as usize] * (pa / ra.total) * (pb / rb.total);
            union_excess += excess[k as usize];
        }
        let kk = self.num_communities;
        if ra.bulk_count(kk) > 0 && rb.bulk_count(kk) > 0 {
            s += (ra.bulk_value / ra.total) * (rb.bulk_value / rb.total) * (table.excess_total[y as usize] - union_excess);
        }
        table.cross[y as usize] + s
    }
}

/// Settings of one sparse local step.
#[derive(Clone, Copy, Debug)]
pub struct SparseStep {
    pub local: LocalStep,
    pub tau: f64,
    /// Bulk sub-sample size for the approximate kernel.
    pub bulk_batch: usize,
}

/// Updates the explicit entries and the bulk value of `nb.pivot`, then
/// re-splits the row. Reads every other row from `state`.
pub fn sparse_grad_and_update<R: Rng + ?Sized>(
    state: &SparseState,
    g: &Graph,
    table: &LinkTable,
    nb: &NodeBatch,
    zero_pool: &[u32],
    step: &SparseStep,
    rng: &mut R,
) -> SparseRow {
    let kk = state.num_communities;
    let a = nb.pivot;
    let row = &state.rows[a];
    let bulk_count = row.bulk_count(kk);

    let sample: Vec<u32> = if bulk_count > 0 {
        let m = step.bulk_batch.clamp(1, bulk_count);
        sample_outside(kk, &row.ids, &HashSet::new(), m, rng)
    } else {
        Vec::new()
    };
    let same_bar = if sample.is_empty() {
        [0.0; 2]
    } else {
        let beta_bar = sample.iter().map(|&k| table.beta[k as usize]).sum::<f64>() / sample.len() as f64;
        [bernoulli(beta_bar, false), bernoulli(beta_bar, true)]
    };
    let pi_bar = |b: usize| {
        let peer = &state.rows[b];
        sample.iter().map(|&k| peer.value(k as usize, kk)).sum::<f64>() / (sample.len() as f64 * peer.total)
    };

    let view = RowRef {
        ids: Some(&row.ids),
        phi: &row.phi,
        total: row.total,
        bulk: (bulk_count > 0).then_some((bulk_count, row.bulk_value)),
    };
    let grad = stratified_gradient(
        &view,
        nb,
        |b, k| state.pi(b, k),
        |b, y| (bulk_count > 0).then(|| (same_bar[y as usize], pi_bar(b))),
        table,
    );

    let mut values = row.phi.clone();
    if bulk_count > 0 {
        values.push(row.bulk_value);
    }
    apply_local_step(&mut values, &grad, &step.local, rng);
    let bulk_value = if bulk_count > 0 {
        values.pop().expect("bulk slot")
    } else {
        row.bulk_value
    };
    let updated = SparseRow::new(row.ids.clone(), values, row.active.clone(), bulk_value, kk);
    if step.tau >= 1.0 {
        return updated;
    }
    promote_demote(&updated, &state.neighbor_active(g, a), zero_pool, step.tau, kk, rng)
}
