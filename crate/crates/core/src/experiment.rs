//! Experiment harness behind the command line: data preparation, the
//! sampling loop with periodic evaluation, and the files it leaves behind.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::info;

use crate::baselines::cgs::{cgs_estimate_params, cgs_sweep, AssignmentState};
use crate::baselines::lmc::LmcSampler;
use crate::config::{Algorithm, RunConfig, SynthConfig};
use crate::error::{Error, Result};
use crate::eval::{constant_rate_perplexity, perplexity_of, predictive_probabilities, PerplexityAccumulator, TraceRow, TRACE_HEADER};
use crate::graph::{load_edge_list, split_heldout, write_edge_list, AmmsbGenerator, Graph, HeldOutSplit};
use crate::kernels::LinkTable;
use crate::rng::{stream, Purpose};
use crate::sgmc::{default_global_fraction, default_partitions, Rows, SgmcSampler, SgmcSettings};
use crate::sparse::SparseState;
use crate::state::{init_state, HyperParams, ModelState, StepSchedule};

/// Outcome of [`run_experiment`].
#[derive(Clone, Debug, PartialEq)]
pub struct RunSummary {
    pub iterations: u64,
    /// Seconds spent sampling, evaluation excluded.
    pub sampling_seconds: f64,
    /// Perplexity after the last evaluation, if any sample was absorbed.
    pub perplexity: Option<f64>,
    /// Perplexity of predicting every held-out pair with the training link density.
    pub baseline_perplexity: f64,
    pub mem_ratio: Option<f64>,
    pub accept_rate: Option<f64>,
    pub out_dir: PathBuf,
}

/// Training graph and held-out pairs derived from a config.
pub fn prepare_dataset(config: &RunConfig) -> Result<(Graph, HeldOutSplit)> {
    let (graph, stats) = load_edge_list(&config.dataset)?;
    if stats.self_loops > 0 || stats.duplicates > 0 {
        info!(
            "{}: dropped {} self-loops and {} duplicate links",
            config.dataset.display(),
            stats.self_loops,
            stats.duplicates
        );
    }
    split_heldout(&graph, config.heldout_fraction, &mut stream(config.seed, Purpose::Split, 0))
}

/// Training link density, ignoring held-out pairs.
pub fn training_density(graph: &Graph, heldout: &HeldOutSplit) -> f64 {
    let pairs = graph.num_pairs() - heldout.len();
    graph.num_links() as f64 / pairs as f64
}

fn hyper_params(config: &RunConfig) -> HyperParams {
    let k = config.num_communities;
    HyperParams {
        num_communities: k,
        alpha: config.alpha.unwrap_or(1.0 / k as f64),
        eta: config.eta,
        delta: config.delta,
    }
}

fn schedule(config: &RunConfig) -> StepSchedule {
    match config.fixed_step {
        Some(eps) => StepSchedule::Fixed(eps),
        None => StepSchedule::Decaying {
            tau0: config.tau0,
            kappa: config.kappa,
        },
    }
}

enum Engine<'g> {
    Sgmc(SgmcSampler<'g>),
    Cgs(AssignmentState),
    Lmc(LmcSampler),
}

impl Engine<'_> {
    fn step(&mut self, t: u64, hp: &HyperParams, schedule: &StepSchedule, seed: u64) -> Result<()> {
        match self {
            Engine::Sgmc(s) => s.iterate(t)?,
            Engine::Cgs(st) => cgs_sweep(st, hp, &mut stream(seed, Purpose::Iteration, t)),
            Engine::Lmc(l) => {
                l.step(schedule.step_size(t)?, &mut stream(seed, Purpose::Iteration, t));
            }
        }
        Ok(())
    }

    fn absorb(&self, acc: &mut PerplexityAccumulator, heldout: &HeldOutSplit, hp: &HyperParams) {
        match self {
            Engine::Sgmc(s) => acc.absorb_sample(heldout, s.memberships(), &s.link_table()),
            Engine::Cgs(st) => {
                let est = cgs_estimate_params(st, hp);
                acc.absorb_sample(heldout, &est, &LinkTable::new(est.beta(), hp.delta));
            }
            Engine::Lmc(l) => {
                let st = l.state();
                acc.absorb_sample(heldout, st, &LinkTable::new(st.beta(), hp.delta));
            }
        }
    }

    fn mem_ratio(&self) -> Option<f64> {
        match self {
            Engine::Sgmc(s) => s.memory_ratio(),
            _ => None,
        }
    }

    fn accept_rate(&self) -> Option<f64> {
        match self {
            Engine::Lmc(l) => l.acceptance_rate(),
            _ => None,
        }
    }

    fn checkpoint(&self, hp: &HyperParams) -> ModelState {
        match self {
            Engine::Sgmc(s) => s.dense_state(),
            Engine::Cgs(st) => cgs_estimate_params(st, hp),
            Engine::Lmc(l) => l.state().clone(),
        }
    }
}

fn initial_state(config: &RunConfig, hp: &HyperParams, num_nodes: usize) -> Result<ModelState> {
    match &config.resume_from {
        Some(path) => {
            let st = ModelState::read_checkpoint(path)?;
            if st.num_nodes() != num_nodes || st.num_communities() != hp.num_communities {
                return Err(Error::Checkpoint(format!(
                    "{} holds N={} K={}, but the run has N={} K={}",
                    path.display(),
                    st.num_nodes(),
                    st.num_communities(),
                    num_nodes,
                    hp.num_communities
                )));
            }
            Ok(st)
        }
        None => init_state(hp, num_nodes, &mut stream(config.seed, Purpose::Init, 0)),
    }
}

fn create_file(path: &Path) -> Result<BufWriter<fs::File>> {
    Ok(BufWriter::new(fs::File::create(path).map_err(|e| Error::io(path, e))?))
}

/// Runs the configured sampler and writes `trace.csv`, `checkpoint.txt`,
/// `summary.txt` and `heldout.txt` into the output directory.
pub fn run_experiment(config: &RunConfig) -> Result<RunSummary> {
    let (graph, heldout) = prepare_dataset(config)?;
    let hp = hyper_params(config);
    hp.validate()?;
    let schedule = schedule(config);
    schedule.validate()?;
    let n = graph.num_nodes();
    info!(
        "{} nodes, {} training links, {} held-out pairs",
        n,
        graph.num_links(),
        heldout.len()
    );

    fs::create_dir_all(&config.out_dir).map_err(|e| Error::io(&config.out_dir, e))?;
    heldout.write(config.out_dir.join("heldout.txt"))?;

    let mut engine = match config.algorithm {
        Algorithm::Sgmc | Algorithm::SgmcM => {
            let mut settings = SgmcSettings::new(n, hp.num_communities, config.seed);
            settings.m = config.m.unwrap_or_else(|| default_partitions(n));
            settings.n1 = config.n1;
            settings.n0 = config.n0;
            settings.local_sampling = config.local_sampling;
            settings.schedule = schedule;
            settings.global_fraction = config
                .global_update_fraction
                .unwrap_or_else(|| default_global_fraction(hp.num_communities));
            settings.threads = config.threads;
            settings.bulk_batch = config.bulk_batch;
            let dense = initial_state(config, &hp, n)?;
            let rows = if config.algorithm == Algorithm::SgmcM {
                Rows::Sparse(SparseState::from_dense(&dense, &graph, config.tau))
            } else {
                Rows::Dense(dense)
            };
            Engine::Sgmc(SgmcSampler::new(&graph, &heldout, hp, settings, rows)?)
        }
        Algorithm::Cgs => {
            if config.resume_from.is_some() {
                return Err(Error::Config(
                    "cgs keeps discrete assignments that checkpoints do not store; it cannot resume".into(),
                ));
            }
            Engine::Cgs(AssignmentState::random(
                &graph,
                &heldout,
                hp.num_communities,
                &mut stream(config.seed, Purpose::Init, 0),
            ))
        }
        Algorithm::Lmc => Engine::Lmc(LmcSampler::new(initial_state(config, &hp, n)?, &graph, &heldout, hp)),
    };

    let trace_path = config.out_dir.join("trace.csv");
    let mut trace = create_file(&trace_path)?;
    writeln!(trace, "{TRACE_HEADER}").map_err(|e| Error::io(&trace_path, e))?;

    let mut acc = PerplexityAccumulator::new(heldout.len());
    let mut seconds = 0.0;
    let mut perplexity = None;
    for t in config.start_iter..config.max_iters {
        let started = Instant::now();
        engine.step(t, &hp, &schedule, config.seed)?;
        seconds += started.elapsed().as_secs_f64();

        let done = t + 1;
        if done % config.eval_interval != 0 {
            continue;
        }
        if done > config.burn_in {
            engine.absorb(&mut acc, &heldout, &hp);
            perplexity = Some(acc.perplexity()?);
        }
        let row = TraceRow {
            iter: done,
            seconds: config.timing.then_some(seconds),
            perplexity,
            mem_ratio: engine.mem_ratio(),
            accept_rate: engine.accept_rate(),
        };
        info!("{}", row.to_csv());
        writeln!(trace, "{}", row.to_csv()).map_err(|e| Error::io(&trace_path, e))?;
    }
    trace.flush().map_err(|e| Error::io(&trace_path, e))?;

    engine.checkpoint(&hp).write_checkpoint(config.out_dir.join("checkpoint.txt"))?;

    let summary = RunSummary {
        iterations: config.max_iters - config.start_iter,
        sampling_seconds: seconds,
        perplexity,
        baseline_perplexity: constant_rate_perplexity(&heldout, training_density(&graph, &heldout))?,
        mem_ratio: engine.mem_ratio(),
        accept_rate: engine.accept_rate(),
        out_dir: config.out_dir.clone(),
    };
    write_summary(&summary, &config.out_dir.join("summary.txt"))?;
    Ok(summary)
}

fn write_summary(s: &RunSummary, path: &Path) -> Result<()> {
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_else(|| "none".into());
    let mut text = String::new();
    let _ = writeln!(text, "iterations = {}", s.iterations);
    let _ = writeln!(text, "sampling_seconds = {}", s.sampling_seconds);
    let _ = writeln!(text, "perplexity = {}", opt(s.perplexity));
    let _ = writeln!(text, "baseline_perplexity = {}", s.baseline_perplexity);
    let _ = writeln!(text, "mem_ratio = {}", opt(s.mem_ratio));
    let _ = writeln!(text, "accept_rate = {}", opt(s.accept_rate));
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Perplexity of a single checkpoint on a held-out pair file.
pub fn evaluate_checkpoint(checkpoint: impl AsRef<Path>, heldout: impl AsRef<Path>, delta: f64) -> Result<f64> {
    let state = ModelState::read_checkpoint(checkpoint)?;
    let pairs = HeldOutSplit::read(heldout, state.num_nodes())?;
    let table = LinkTable::new(state.beta(), delta);
    perplexity_of(&predictive_probabilities(&pairs, &state, &table))
}

/// What [`make_synthetic`] wrote.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthReport {
    pub edges_path: PathBuf,
    pub truth_path: PathBuf,
    pub nodes: usize,
    pub links: usize,
    pub density: f64,
}

/// Samples a graph and writes `edges.txt` and `ground_truth.txt`.
pub fn make_synthetic(config: &SynthConfig) -> Result<SynthReport> {
    let generator = AmmsbGenerator::new(config.nodes, config.communities, config.alpha, config.eta, config.delta)
        .with_eta_nonlink(config.eta_nonlink);
    let (graph, truth) = generator.generate(&mut stream(config.seed, Purpose::Generate, 0))?;
    fs::create_dir_all(&config.out_dir).map_err(|e| Error::io(&config.out_dir, e))?;
    let edges_path = config.out_dir.join("edges.txt");
    let truth_path = config.out_dir.join("ground_truth.txt");
    write_edge_list(&graph, &edges_path)?;
    truth.write(&truth_path)?;
    Ok(SynthReport {
        edges_path,
        truth_path,
        nodes: graph.num_nodes(),
        links: graph.num_links(),
        density: graph.density(),
    })
}
