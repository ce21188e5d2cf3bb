//! The mini-batch sampler: per iteration, one edge batch, local updates for
//! every node it touches, then a global update of a community subset.

use rand::seq::index;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::global::{update_theta, GlobalStep, Memberships};
use crate::graph::{Graph, HeldOutSplit};
use crate::kernels::LinkTable;
use crate::local::{update_phi_row, LocalStep};
use crate::minibatch::{sample_edge_strata, sample_node_batch, sample_node_batch_uniform, LocalSampling, NodeBatch};
use crate::rng::{node_stream, stream, Purpose, StreamRng};
use crate::sparse::{sparse_grad_and_update, SparseState, SparseStep};
use crate::state::{beta_from_theta, HyperParams, ModelState, StepSchedule};

/// Tuning knobs shared by the dense and sparse samplers.
#[derive(Clone, Debug)]
pub struct SgmcSettings {
    /// Non-link stratum partition count: each non-link batch holds `ceil(N/m)` pairs.
    pub m: usize,
    pub n1: usize,
    pub n0: usize,
    pub local_sampling: LocalSampling,
    pub schedule: StepSchedule,
    /// Fraction of communities whose strengths move per iteration.
    pub global_fraction: f64,
    pub seed: u64,
    pub threads: usize,
    /// Bulk sub-sample size of the sparse variant.
    pub bulk_batch: usize,
}

impl SgmcSettings {
    pub fn new(num_nodes: usize, num_communities: usize, seed: u64) -> Self {
        SgmcSettings {
            m: default_partitions(num_nodes),
            n1: 10,
            n0: 10,
            local_sampling: LocalSampling::Stratified,
            schedule: StepSchedule::default(),
            global_fraction: default_global_fraction(num_communities),
            seed,
            threads: 1,
            bulk_batch: 32,
        }
    }
}

/// `max(1, round(N / 50))`, which keeps `N / m` near 50.
pub fn default_partitions(num_nodes: usize) -> usize {
    ((num_nodes as f64 / 50.0).round() as usize).max(1)
}

/// All communities for small `K`, a tenth from `K = 100` on.
pub fn default_global_fraction(num_communities: usize) -> f64 {
    if num_communities < 100 {
        1.0
    } else {
        0.1
    }
}

/// Membership storage of a running sampler.
#[derive(Clone, Debug)]
pub enum Rows {
    Dense(ModelState),
    Sparse(SparseState),
}

/// Stochastic-gradient sampler over a fixed training graph.
pub struct SgmcSampler<'g> {
    graph: &'g Graph,
    heldout: &'g HeldOutSplit,
    hp: HyperParams,
    settings: SgmcSettings,
    rows: Rows,
    pool: rayon::ThreadPool,
}

impl<'g> SgmcSampler<'g> {
    pub fn new(
        graph: &'g Graph,
        heldout: &'g HeldOutSplit,
        hp: HyperParams,
        settings: SgmcSettings,
        rows: Rows,
    ) -> Result<Self> {
        hp.validate()?;
        settings.schedule.validate()?;
        if settings.m == 0 || settings.threads == 0 {
            return Err(Error::InvalidParam("m and threads must be positive".into()));
        }
        if !(settings.global_fraction > 0.0) {
            return Err(Error::InvalidParam("global update fraction must be positive".into()));
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(settings.threads)
            .build()
            .map_err(|e| Error::InvalidParam(format!("cannot build worker pool: {e}")))?;
        Ok(SgmcSampler {
            graph,
            heldout,
            hp,
            settings,
            rows,
            pool,
        })
    }

    pub fn rows(&self) -> &Rows {
        &self.rows
    }

    pub fn into_rows(self) -> Rows {
        self.rows
    }

    pub fn memberships(&self) -> &dyn Memberships {
        match &self.rows {
            Rows::Dense(s) => s,
            Rows::Sparse(s) => s,
        }
    }

    pub fn theta(&self) -> &[[f64; 2]] {
        match &self.rows {
            Rows::Dense(s) => s.theta(),
            Rows::Sparse(s) => s.theta(),
        }
    }

    /// Link table for the current strengths.
    pub fn link_table(&self) -> LinkTable {
        LinkTable::new(beta_from_theta(self.theta()), self.hp.delta)
    }

    /// Mean memory ratio of the sparse variant.
    pub fn memory_ratio(&self) -> Option<f64> {
        match &self.rows {
            Rows::Dense(_) => None,
            Rows::Sparse(s) => Some(s.memory_ratio()),
        }
    }

    /// Dense copy of the current parameters.
    pub fn dense_state(&self) -> ModelState {
        match &self.rows {
            Rows::Dense(s) => s.clone(),
            Rows::Sparse(s) => s.densify(),
        }
    }

    fn node_batch(&self, a: usize, rng: &mut StreamRng) -> NodeBatch {
        let s = &self.settings;
        match s.local_sampling {
            LocalSampling::Stratified => sample_node_batch(self.graph, self.heldout, a, s.n1, s.n0, rng),
            LocalSampling::Uniform => sample_node_batch_uniform(self.graph, self.heldout, a, s.n1 + s.n0, rng),
        }
    }

    /// Runs iteration `t`. Every random draw comes from streams keyed by
    /// `(seed, t)` and `(seed, t, node)`, so results do not depend on the
    /// thread count or on where a run was resumed.
    pub fn iterate(&mut self, t: u64) -> Result<()> {
        let eps = self.settings.schedule.step_size(t)?;
        let seed = self.settings.seed;
        let mut rng = stream(seed, Purpose::Iteration, t);
        let batch = sample_edge_strata(self.graph, self.settings.m, self.heldout, &mut rng);
        let nodes = batch.nodes();
        let table = self.link_table();
        let local = LocalStep {
            alpha: self.hp.alpha,
            eps,
            noise: true,
        };

        match &self.rows {
            Rows::Dense(state) => {
                let updated: Vec<Vec<f64>> = self.pool.install(|| {
                    nodes
                        .par_iter()
                        .map(|&a| {
                            let mut node_rng = node_stream(seed, t, a);
                            let nb = self.node_batch(a, &mut node_rng);
                            update_phi_row(state, &table, &nb, &local, &mut node_rng)
                        })
                        .collect()
                });
                let Rows::Dense(state) = &mut self.rows else { unreachable!() };
                for (&a, row) in nodes.iter().zip(&updated) {
                    state.set_phi_row(a, row);
                }
            }
            Rows::Sparse(state) => {
                let zero_pool = state.zero_pool();
                let step = SparseStep {
                    local,
                    tau: state.tau(),
                    bulk_batch: self.settings.bulk_batch,
                };
                let updated: Vec<_> = self.pool.install(|| {
                    nodes
                        .par_iter()
                        .map(|&a| {
                            let mut node_rng = node_stream(seed, t, a);
                            let nb = self.node_batch(a, &mut node_rng);
                            sparse_grad_and_update(state, self.graph, &table, &nb, &zero_pool, &step, &mut node_rng)
                        })
                        .collect()
                });
                let Rows::Sparse(state) = &mut self.rows else { unreachable!() };
                for (&a, row) in nodes.iter().zip(updated) {
                    state.replace_row(a, row);
                }
            }
        }

        let k = self.hp.num_communities;
        let subset: Vec<usize> = if self.settings.global_fraction >= 1.0 {
            (0..k).collect()
        } else {
            let size = ((self.settings.global_fraction * k as f64).ceil() as usize).clamp(1, k);
            let mut s = index::sample(&mut rng, k, size).into_vec();
            s.sort_unstable();
            s
        };
        let step = GlobalStep {
            eta: self.hp.eta,
            delta: self.hp.delta,
            eps,
            noise: true,
        };
        let mut theta = self.theta().to_vec();
        update_theta(&mut theta, self.memberships(), &batch, &subset, &step, &mut rng);
        match &mut self.rows {
            Rows::Dense(s) => s.theta_mut().copy_from_slice(&theta),
            Rows::Sparse(s) => s.theta_mut().copy_from_slice(&theta),
        }
        Ok(())
    }
}
