//! Local update of the membership parameters `phi`, one node row at a time.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::kernels::{f_local, z_norm, LinkTable, PairContext};
use crate::minibatch::NodeBatch;
use crate::state::{riemannian_step, ModelState};

/// `d log Z_ab / d phi_ak`.
pub fn grad_phi(ctx: &PairContext<'_>, phi_a: &[f64], k: usize) -> f64 {
    let total: f64 = phi_a.iter().sum();
    f_local(ctx, k) / (z_norm(ctx) * phi_a[k]) - 1.0 / total
}

/// Explicit part of a membership row: values, optional community ids
/// (identity when absent) and the row total including any bulk mass.
pub(crate) struct RowRef<'a> {
    pub ids: Option<&'a [u32]>,
    pub phi: &'a [f64],
    pub total: f64,
    /// `(member count, shared value)` of the bulk block.
    pub bulk: Option<(usize, f64)>,
}

impl RowRef<'_> {
    #[inline]
    fn id(&self, j: usize) -> usize {
        self.ids.map_or(j, |ids| ids[j] as usize)
    }

    /// Gradient slots: one per explicit entry plus one for the bulk block.
    pub fn slots(&self) -> usize {
        self.phi.len() + usize::from(self.bulk.is_some())
    }
}

/// Adds `d log Z_ab / d phi_ak` for one peer `b` to `grad`.
///
/// `bulk_peer` gives `(bernoulli(mean bulk beta, y), mean bulk pi_b)` when
/// the row has a bulk block.
pub(crate) fn accumulate_peer(
    row: &RowRef<'_>,
    pi_b: impl Fn(usize) -> f64,
    y: bool,
    table: &LinkTable,
    bulk_peer: Option<(f64, f64)>,
    inner: &mut Vec<f64>,
    grad: &mut [f64],
) {
    let same = &table.same[y as usize];
    let d = table.cross[y as usize];
    inner.clear();
    let mut z = 0.0;
    for j in 0..row.phi.len() {
        let k = row.id(j);
        let p = pi_b(k);
        let v = same[k] * p + d * (1.0 - p);
        z += row.phi[j] / row.total * v;
        inner.push(v);
    }
    let mut bulk_inner = 0.0;
    if let (Some((count, value)), Some((same_bar, pi_bar))) = (row.bulk, bulk_peer) {
        bulk_inner = same_bar * pi_bar + d * (1.0 - pi_bar);
        z += count as f64 * (value / row.total * bulk_inner);
    }
    let inv_total = 1.0 / row.total;
    let scale = z * row.total;
    for (g, v) in grad.iter_mut().zip(inner.iter()) {
        *g += v / scale - inv_total;
    }
    if row.bulk.is_some() {
        grad[row.phi.len()] += bulk_inner / scale - inv_total;
    }
}

/// `c1 * sum_{V1} grad + c0 * sum_{V0} grad` for every slot of `row`.
pub(crate) fn stratified_gradient(
    row: &RowRef<'_>,
    nb: &NodeBatch,
    pi: impl Fn(usize, usize) -> f64,
    bulk_peer: impl Fn(usize, bool) -> Option<(f64, f64)>,
    table: &LinkTable,
) -> Vec<f64> {
    let slots = row.slots();
    let mut g1 = vec![0.0; slots];
    let mut g0 = vec![0.0; slots];
    let mut inner = Vec::with_capacity(row.phi.len());
    for &b in &nb.v1 {
        accumulate_peer(row, |k| pi(b, k), true, table, bulk_peer(b, true), &mut inner, &mut g1);
    }
    for &b in &nb.v0 {
        accumulate_peer(row, |k| pi(b, k), false, table, bulk_peer(b, false), &mut inner, &mut g0);
    }
    g1.iter().zip(&g0).map(|(x1, x0)| nb.c1 * x1 + nb.c0 * x0).collect()
}

/// Settings of one local step.
#[derive(Clone, Copy, Debug)]
pub struct LocalStep {
    pub alpha: f64,
    pub eps: f64,
    pub noise: bool,
}

/// Moves each value by [`riemannian_step`], drawing noise in slot order.
pub(crate) fn apply_local_step<R: Rng + ?Sized>(values: &mut [f64], grad: &[f64], step: &LocalStep, rng: &mut R) {
    for (x, &g) in values.iter_mut().zip(grad) {
        let noise = if step.noise {
            rng.sample::<f64, _>(StandardNormal) * step.eps.sqrt()
        } else {
            0.0
        };
        *x = riemannian_step(*x, step.alpha, g, step.eps, noise);
    }
}

/// Full local gradient estimate for row `nb.pivot` of a dense state.
pub fn dense_row_gradient(state: &ModelState, table: &LinkTable, nb: &NodeBatch) -> Vec<f64> {
    let a = nb.pivot;
    let row = RowRef {
        ids: None,
        phi: state.phi_row(a),
        total: state.row_total(a),
        bulk: None,
    };
    let k = state.num_communities();
    stratified_gradient(
        &row,
        nb,
        |b, c| state.phi[b * k + c] / state.row_totals[b],
        |_, _| None,
        table,
    )
}

/// New `phi` row for `nb.pivot`, reading every other row from `state`.
pub fn update_phi_row<R: Rng + ?Sized>(
    state: &ModelState,
    table: &LinkTable,
    nb: &NodeBatch,
    step: &LocalStep,
    rng: &mut R,
) -> Vec<f64> {
    let grad = dense_row_gradient(state, table, nb);
    let mut row = state.phi_row(nb.pivot).to_vec();
    apply_local_step(&mut row, &grad, step, rng);
    row
}
