//! Held-out perplexity with predictive probabilities averaged over samples.

use crate::error::{Error, Result};
use crate::global::Memberships;
use crate::graph::HeldOutSplit;
use crate::kernels::{bernoulli, LinkTable};

/// Running per-pair sums of `p(y_ab | sample)`.
#[derive(Clone, Debug, Default)]
pub struct PerplexityAccumulator {
    sums: Vec<f64>,
    samples: usize,
}

impl PerplexityAccumulator {
    pub fn new(num_pairs: usize) -> Self {
        PerplexityAccumulator {
            sums: vec![0.0; num_pairs],
            samples: 0,
        }
    }

    /// Number of samples absorbed.
    pub fn samples(&self) -> usize {
        self.samples
    }

    /// Adds one sample's predictive probabilities, one per held-out pair.
    pub fn absorb_probabilities(&mut self, probs: &[f64]) {
        assert_eq!(probs.len(), self.sums.len(), "one probability per held-out pair");
        for (s, p) in self.sums.iter_mut().zip(probs) {
            *s += p;
        }
        self.samples += 1;
    }

    /// Adds the predictions of the parameters in `mem` with strengths from `table`.
    pub fn absorb_sample<M: Memberships + ?Sized>(&mut self, heldout: &HeldOutSplit, mem: &M, table: &LinkTable) {
        let probs = predictive_probabilities(heldout, mem, table);
        self.absorb_probabilities(&probs);
    }

    /// Per-pair averages over the absorbed samples.
    pub fn averages(&self) -> Result<Vec<f64>> {
        if self.samples == 0 {
            return Err(Error::NoSamples);
        }
        let t = self.samples as f64;
        Ok(self.sums.iter().map(|s| s / t).collect())
    }

    /// `exp(-mean log(average probability))`; `+inf` if any average is zero.
    pub fn perplexity(&self) -> Result<f64> {
        perplexity_of(&self.averages()?)
    }
}

/// `p(y_ab)` for every held-out pair under one parameter sample.
pub fn predictive_probabilities<M: Memberships + ?Sized>(
    heldout: &HeldOutSplit,
    mem: &M,
    table: &LinkTable,
) -> Vec<f64> {
    heldout
        .pairs()
        .iter()
        .map(|p| mem.pair_norm(p.a, p.b, p.y, table))
        .collect()
}

/// Perplexity of a set of predictive probabilities.
pub fn perplexity_of(probs: &[f64]) -> Result<f64> {
    if probs.is_empty() {
        return Err(Error::InvalidParam("perplexity needs at least one held-out pair".into()));
    }
    if probs.iter().any(|&p| p <= 0.0) {
        log::warn!("a held-out pair has zero predictive probability; perplexity is infinite");
        return Ok(f64::INFINITY);
    }
    let mean_log = probs.iter().map(|p| p.ln()).sum::<f64>() / probs.len() as f64;
    Ok((-mean_log).exp())
}

/// Perplexity of predicting every held-out pair with the constant `rate`.
pub fn constant_rate_perplexity(heldout: &HeldOutSplit, rate: f64) -> Result<f64> {
    let probs: Vec<f64> = heldout.pairs().iter().map(|p| bernoulli(rate, p.y)).collect();
    perplexity_of(&probs)
}

pub const TRACE_HEADER: &str = "iter,seconds,perplexity,mem_ratio,accept_rate";

/// One line of `trace.csv`; absent fields are written empty.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TraceRow {
    pub iter: u64,
    pub seconds: Option<f64>,
    pub perplexity: Option<f64>,
    pub mem_ratio: Option<f64>,
    pub accept_rate: Option<f64>,
}

impl TraceRow {
    pub fn to_csv(&self) -> String {
        let field = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{}",
            self.iter,
            field(self.seconds),
            field(self.perplexity),
            field(self.mem_ratio),
            field(self.accept_rate)
        )
    }
}
