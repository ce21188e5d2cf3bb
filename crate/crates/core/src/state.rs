//! Expanded-mean sampler state, hyperparameters and step-size schedules.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Gamma};

use crate::error::{Error, Result};
use crate::graph::join_exact;

/// Floor applied after every reflected update; gradients divide by these
/// entries.
pub const MIN_POSITIVE: f64 = 1e-12;

pub const DEFAULT_DELTA: f64 = 1e-7;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HyperParams {
    pub num_communities: usize,
    /// Dirichlet concentration of memberships.
    pub alpha: f64,
    /// Beta shape of community strengths.
    pub eta: f64,
    /// Link probability between nodes that drew different communities.
    pub delta: f64,
}

impl HyperParams {
    /// `alpha = 1/K`, `eta = 1`, `delta = 1e-7`.
    pub fn with_defaults(num_communities: usize) -> Self {
        HyperParams {
            num_communities,
            alpha: 1.0 / num_communities.max(1) as f64,
            eta: 1.0,
            delta: DEFAULT_DELTA,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_communities == 0 {
            return Err(Error::InvalidParam("K must be at least 1".into()));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::InvalidParam(format!("alpha must be positive, got {}", self.alpha)));
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::InvalidParam(format!("eta must be positive, got {}", self.eta)));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::InvalidParam(format!(
                "delta must lie in (0, 1), got {}",
                self.delta
            )));
        }
        Ok(())
    }
}

/// Unnormalized parameters: `phi` (`N x K`, row-major) and `theta` (`K x 2`).
///
/// `pi_a = phi_a / sum(phi_a)` and `beta_k = theta_k1 / (theta_k0 + theta_k1)`
/// are derived on read.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelState {
    num_nodes: usize,
    num_communities: usize,
    pub(crate) phi: Vec<f64>,
    pub(crate) theta: Vec<[f64; 2]>,
    pub(crate) row_totals: Vec<f64>,
}

impl ModelState {
    pub fn from_parts(
        num_nodes: usize,
        num_communities: usize,
        phi: Vec<f64>,
        theta: Vec<[f64; 2]>,
    ) -> Result<Self> {
        if phi.len() != num_nodes * num_communities || theta.len() != num_communities {
            return Err(Error::InvalidParam("state dimensions do not match N and K".into()));
        }
        if phi.iter().chain(theta.iter().flatten()).any(|&x| !(x > 0.0 && x.is_finite())) {
            return Err(Error::InvalidParam("state entries must be positive and finite".into()));
        }
        let mut state = ModelState {
            num_nodes,
            num_communities,
            phi,
            theta,
            row_totals: vec![0.0; num_nodes],
        };
        for a in 0..num_nodes {
            state.refresh_total(a);
        }
        Ok(state)
    }

    #[inline]
    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    #[inline]
    pub fn num_communities(&self) -> usize {
        self.num_communities
    }

    #[inline]
    pub fn phi_row(&self, a: usize) -> &[f64] {
        let k = self.num_communities;
        &self.phi[a * k..(a + 1) * k]
    }

    /// Replaces row `a`; entries must already be positive.
    pub fn set_phi_row(&mut self, a: usize, row: &[f64]) {
        let k = self.num_communities;
        self.phi[a * k..(a + 1) * k].copy_from_slice(row);
        self.refresh_total(a);
    }

    #[inline]
    pub fn theta(&self) -> &[[f64; 2]] {
        &self.theta
    }

    pub fn theta_mut(&mut self) -> &mut [[f64; 2]] {
        &mut self.theta
    }

    #[inline]
    pub fn row_total(&self, a: usize) -> f64 {
        self.row_totals[a]
    }

    fn refresh_total(&mut self, a: usize) {
        self.row_totals[a] = self.phi_row(a).iter().sum();
    }

    pub fn pi_row(&self, a: usize) -> Vec<f64> {
        let total = self.row_totals[a];
        self.phi_row(a).iter().map(|&x| x / total).collect()
    }

    pub fn beta(&self) -> Vec<f64> {
        beta_from_theta(&self.theta)
    }

    /// Writes the plain-text checkpoint: a header line, `N` rows of `phi`
    /// and `K` rows of `theta`, each value with 17 significant digits.
    pub fn write_checkpoint(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        let io = |e| Error::io(path, e);
        writeln!(
            out,
            "ammsb-checkpoint v1 {} {}",
            self.num_nodes, self.num_communities
        )
        .map_err(io)?;
        for a in 0..self.num_nodes {
            writeln!(out, "{}", join_exact(self.phi_row(a))).map_err(io)?;
        }
        for t in &self.theta {
            writeln!(out, "{}", join_exact(t)).map_err(io)?;
        }
        out.flush().map_err(io)
    }

    pub fn read_checkpoint(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut lines = BufReader::new(file).lines();
        let mut next_line = |what: &str| -> Result<String> {
            lines
                .next()
                .transpose()
                .map_err(|e| Error::io(path, e))?
                .ok_or_else(|| Error::Checkpoint(format!("truncated before {what}")))
        };

        let header = next_line("header")?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 4 || fields[0] != "ammsb-checkpoint" {
            return Err(Error::Checkpoint(format!("bad header `{header}`")));
        }
        if fields[1] != "v1" {
            return Err(Error::Checkpoint(format!("unsupported version `{}`", fields[1])));
        }
        let dim = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| Error::Checkpoint(format!("bad dimension `{s}`")))
        };
        let (n, k) = (dim(fields[2])?, dim(fields[3])?);

        let parse_row = |line: &str, width: usize| -> Result<Vec<f64>> {
            let row: Vec<f64> = line
                .split_whitespace()
                .map(|t| t.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::Checkpoint(format!("unparsable row `{line}`")))?;
            if row.len() != width {
                return Err(Error::Checkpoint(format!(
                    "expected {width} values, found {}",
                    row.len()
                )));
            }
            Ok(row)
        };

        let mut phi = Vec::with_capacity(n * k);
        for a in 0..n {
            phi.extend(parse_row(&next_line(&format!("phi row {a}"))?, k)?);
        }
        let mut theta = Vec::with_capacity(k);
        for j in 0..k {
            let row = parse_row(&next_line(&format!("theta row {j}"))?, 2)?;
            theta.push([row[0], row[1]]);
        }
        ModelState::from_parts(n, k, phi, theta).map_err(|e| Error::Checkpoint(e.to_string()))
    }
}

pub fn beta_from_theta(theta: &[[f64; 2]]) -> Vec<f64> {
    theta.iter().map(|t| t[1] / (t[0] + t[1])).collect()
}

pub(crate) fn gamma_draws<R: Rng + ?Sized>(shape: f64, count: usize, rng: &mut R) -> Result<Vec<f64>> {
    let dist = Gamma::new(shape, 1.0).map_err(|e| Error::InvalidParam(e.to_string()))?;
    Ok((0..count)
        .map(|_| dist.sample(rng).max(MIN_POSITIVE))
        .collect())
}

/// Draws `phi ~ Gamma(alpha, 1)` and `theta ~ Gamma(eta, 1)` entrywise.
pub fn init_state<R: Rng + ?Sized>(hp: &HyperParams, num_nodes: usize, rng: &mut R) -> Result<ModelState> {
    hp.validate()?;
    let k = hp.num_communities;
    let phi = gamma_draws(hp.alpha, num_nodes * k, rng)?;
    let flat = gamma_draws(hp.eta, 2 * k, rng)?;
    let theta = flat.chunks(2).map(|c| [c[0], c[1]]).collect();
    ModelState::from_parts(num_nodes, k, phi, theta)
}

/// One Riemannian Langevin move of a positive coordinate `x` with a
/// `Gamma(prior_shape, 1)` prior and likelihood gradient estimate `grad`:
/// `|x + eps/2 (prior_shape - x + x grad) + sqrt(x) noise|`, clamped to stay positive.
///
/// `noise` is a `N(0, eps)` draw; it is scaled by `sqrt(x)` here.
#[inline]
pub fn riemannian_step(x: f64, prior_shape: f64, grad: f64, eps: f64, noise: f64) -> f64 {
    let moved = x + 0.5 * eps * (prior_shape - x + x * grad) + x.sqrt() * noise;
    moved.abs().max(MIN_POSITIVE)
}

/// Step-size schedule: `(tau0 + t)^(-kappa)` or a constant.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StepSchedule {
    Decaying { tau0: f64, kappa: f64 },
    Fixed(f64),
}

impl Default for StepSchedule {
    fn default() -> Self {
        StepSchedule::Decaying {
            tau0: 1024.0,
            kappa: 0.5,
        }
    }
}

impl StepSchedule {
    pub fn validate(&self) -> Result<()> {
        match *self {
            StepSchedule::Fixed(eps) if !(eps > 0.0 && eps.is_finite()) => Err(Error::InvalidParam(
                format!("fixed step must be positive, got {eps}"),
            )),
            StepSchedule::Decaying { tau0, kappa } if tau0 < 0.0 || !(kappa > 0.0 && kappa <= 1.0) => {
                Err(Error::InvalidParam(format!(
                    "need tau0 >= 0 and kappa in (0, 1], got tau0={tau0} kappa={kappa}"
                )))
            }
            _ => Ok(()),
        }
    }

    /// Step size at iteration `t`.
    pub fn step_size(&self, t: u64) -> Result<f64> {
        self.validate()?;
        match *self {
            StepSchedule::Fixed(eps) => Ok(eps),
            StepSchedule::Decaying { tau0, kappa } => {
                let base = tau0 + t as f64;
                if base <= 0.0 {
                    return Err(Error::InvalidParam(
                        "decaying schedule with tau0 = 0 is undefined at t = 0".into(),
                    ));
                }
                Ok(base.powf(-kappa))
            }
        }
    }
}
