//! Flat `key = value` experiment configuration.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::minibatch::LocalSampling;
use crate::state::DEFAULT_DELTA;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Algorithm {
    Sgmc,
    SgmcM,
    Cgs,
    Lmc,
}

impl std::str::FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sgmc" => Ok(Algorithm::Sgmc),
            "sgmc-m" => Ok(Algorithm::SgmcM),
            "cgs" => Ok(Algorithm::Cgs),
            "lmc" => Ok(Algorithm::Lmc),
            other => Err(Error::Config(format!(
                "unknown algorithm `{other}` (expected sgmc, sgmc-m, cgs or lmc)"
            ))),
        }
    }
}

/// Settings of `run`.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub dataset: PathBuf,
    pub algorithm: Algorithm,
    pub num_communities: usize,
    pub alpha: Option<f64>,
    pub eta: f64,
    pub delta: f64,
    pub tau: f64,
    pub kappa: f64,
    pub tau0: f64,
    pub fixed_step: Option<f64>,
    pub m: Option<usize>,
    pub n1: usize,
    pub n0: usize,
    pub heldout_fraction: f64,
    pub max_iters: u64,
    pub eval_interval: u64,
    pub burn_in: u64,
    pub seed: u64,
    pub global_update_fraction: Option<f64>,
    pub threads: usize,
    pub out_dir: PathBuf,
    pub local_sampling: LocalSampling,
    /// Record wall-clock seconds in the trace.
    pub timing: bool,
    pub bulk_batch: usize,
    pub resume_from: Option<PathBuf>,
    pub start_iter: u64,
}

pub const RUN_KEYS: &[&str] = &[
    "dataset",
    "algorithm",
    "K",
    "alpha",
    "eta",
    "delta",
    "tau",
    "kappa",
    "tau0",
    "fixed_step",
    "m",
    "n1",
    "n0",
    "heldout_fraction",
    "max_iters",
    "eval_interval",
    "burn_in",
    "seed",
    "global_update_fraction",
    "threads",
    "out_dir",
    "local_sampling",
    "timing",
    "bulk_batch",
    "resume_from",
    "start_iter",
];

/// Settings of `synth`.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub nodes: usize,
    pub communities: usize,
    pub alpha: f64,
    pub eta: f64,
    pub eta_nonlink: f64,
    pub delta: f64,
    pub seed: u64,
    pub out_dir: PathBuf,
}

pub const SYNTH_KEYS: &[&str] = &["nodes", "communities", "alpha", "eta", "eta_nonlink", "delta", "seed", "out_dir"];

impl Default for SynthConfig {
    /// 75 nodes at about 30% link density.
    fn default() -> Self {
        SynthConfig {
            nodes: 75,
            communities: 4,
            alpha: 0.1,
            eta: 9.0,
            eta_nonlink: 1.0,
            delta: 0.1,
            seed: 0,
            out_dir: PathBuf::from("synthetic"),
        }
    }
}

/// `(line, key, value)` triples; `#` starts a comment.
fn entries(text: &str) -> Result<Vec<(usize, String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::Config(format!("line {}: expected `key = value`", i + 1)));
        };
        out.push((i + 1, key.trim().to_string(), value.trim().to_string()));
    }
    Ok(out)
}

fn value<T: std::str::FromStr>(line: usize, key: &str, raw: &str) -> Result<T> {
    raw.parse()
        .map_err(|_| Error::Config(format!("line {line}: cannot parse `{raw}` for `{key}`")))
}

fn resolve(base: &Path, raw: &str) -> PathBuf {
    let p = PathBuf::from(raw);
    if p.is_absolute() {
        p
    } else {
        base.join(p)
    }
}

fn unknown(line: usize, key: &str, valid: &[&str]) -> Error {
    Error::Config(format!(
        "line {line}: unknown key `{key}`; valid keys: {}",
        valid.join(", ")
    ))
}

fn read(path: &Path) -> Result<(String, PathBuf)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok((text, base))
}

impl RunConfig {
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let (text, base) = read(path.as_ref())?;
        Self::parse(&text, &base)
    }

    /// Parses `text`; relative paths resolve against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut dataset = None;
        let mut algorithm = Algorithm::Sgmc;
        let mut num_communities = None;
        let mut c = RunConfig {
            dataset: PathBuf::new(),
            algorithm,
            num_communities: 0,
            alpha: None,
            eta: 1.0,
            delta: DEFAULT_DELTA,
            tau: 0.9,
            kappa: 0.5,
            tau0: 1024.0,
            fixed_step: None,
            m: None,
            n1: 10,
            n0: 10,
            heldout_fraction: 0.01,
            max_iters: 1000,
            eval_interval: 10,
            burn_in: 0,
            seed: 0,
            global_update_fraction: None,
            threads: 1,
            out_dir: base.join("out"),
            local_sampling: LocalSampling::Stratified,
            timing: true,
            bulk_batch: 32,
            resume_from: None,
            start_iter: 0,
        };
        for (line, key, raw) in entries(text)? {
            let v = raw.as_str();
            match key.as_str() {
                "dataset" => dataset = Some(resolve(base, v)),
                "algorithm" => algorithm = v.parse()?,
                "K" => num_communities = Some(value(line, &key, v)?),
                "alpha" => c.alpha = Some(value(line, &key, v)?),
                "eta" => c.eta = value(line, &key, v)?,
                "delta" => c.delta = value(line, &key, v)?,
                "tau" => c.tau = value(line, &key, v)?,
                "kappa" => c.kappa = value(line, &key, v)?,
                "tau0" => c.tau0 = value(line, &key, v)?,
                "fixed_step" => c.fixed_step = Some(value(line, &key, v)?),
                "m" => c.m = Some(value(line, &key, v)?),
                "n1" => c.n1 = value(line, &key, v)?,
                "n0" => c.n0 = value(line, &key, v)?,
                "heldout_fraction" => c.heldout_fraction = value(line, &key, v)?,
                "max_iters" => c.max_iters = value(line, &key, v)?,
                "eval_interval" => c.eval_interval = value(line, &key, v)?,
                "burn_in" => c.burn_in = value(line, &key, v)?,
                "seed" => c.seed = value(line, &key, v)?,
                "global_update_fraction" => c.global_update_fraction = Some(value(line, &key, v)?),
                "threads" => c.threads = value(line, &key, v)?,
                "out_dir" => c.out_dir = resolve(base, v),
                "local_sampling" => {
                    c.local_sampling = match v {
                        "stratified" => LocalSampling::Stratified,
                        "uniform" => LocalSampling::Uniform,
                        _ => {
                            return Err(Error::Config(format!(
                                "line {line}: local_sampling must be `stratified` or `uniform`"
                            )))
                        }
                    }
                }
                "timing" => c.timing = value(line, &key, v)?,
                "bulk_batch" => c.bulk_batch = value(line, &key, v)?,
                "resume_from" => c.resume_from = Some(resolve(base, v)),
                "start_iter" => c.start_iter = value(line, &key, v)?,
                _ => return Err(unknown(line, &key, RUN_KEYS)),
            }
        }
        c.dataset = dataset.ok_or_else(|| Error::Config("missing required key `dataset`".into()))?;
        c.num_communities = num_communities.ok_or_else(|| Error::Config("missing required key `K`".into()))?;
        c.algorithm = algorithm;
        c.validate()?;
        Ok(c)
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.num_communities == 0 {
            return bad("K must be at least 1");
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return bad("tau must lie in (0, 1]");
        }
        if self.eval_interval == 0 || self.threads == 0 || self.bulk_batch == 0 {
            return bad("eval_interval, threads and bulk_batch must be positive");
        }
        if self.m == Some(0) {
            return bad("m must be positive");
        }
        if self.start_iter > self.max_iters {
            return bad("start_iter exceeds max_iters");
        }
        if self.start_iter > 0 && self.resume_from.is_none() {
            return bad("start_iter needs resume_from");
        }
        Ok(())
    }
}

impl SynthConfig {
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let (text, base) = read(path.as_ref())?;
        Self::parse(&text, &base)
    }

    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut c = SynthConfig {
            out_dir: base.join("synthetic"),
            ..Default::default()
        };
        for (line, key, raw) in entries(text)? {
            let v = raw.as_str();
            match key.as_str() {
                "nodes" => c.nodes = value(line, &key, v)?,
                "communities" => c.communities = value(line, &key, v)?,
                "alpha" => c.alpha = value(line, &key, v)?,
                "eta" => c.eta = value(line, &key, v)?,
                "eta_nonlink" => c.eta_nonlink = value(line, &key, v)?,
                "delta" => c.delta = value(line, &key, v)?,
                "seed" => c.seed = value(line, &key, v)?,
                "out_dir" => c.out_dir = resolve(base, v),
                _ => return Err(unknown(line, &key, SYNTH_KEYS)),
            }
        }
        Ok(c)
    }
}
