//! Undirected simple graphs, edge-list IO, synthetic a-MMSB generation and
//! held-out splitting.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use log::{info, warn};
use rand::seq::index;
use rand::Rng;
use rand_distr::{Beta, Distribution, Gamma};

use crate::error::{Error, Result};

/// Undirected graph without self-loops on dense node ids `0..N`.
///
/// Neighbor lists are kept sorted so membership tests are binary searches.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Graph {
    adj: Vec<Vec<u32>>,
    num_links: usize,
}

impl Graph {
    /// Builds a graph from an edge iterator, ignoring self-loops and repeats.
    pub fn from_edges(num_nodes: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut adj = vec![Vec::new(); num_nodes];
        for (a, b) in edges {
            assert!(a < num_nodes && b < num_nodes, "edge ({a}, {b}) out of range");
            if a != b {
                adj[a].push(b as u32);
                adj[b].push(a as u32);
            }
        }
        let mut twice = 0;
        for list in &mut adj {
            list.sort_unstable();
            list.dedup();
            twice += list.len();
        }
        Graph {
            adj,
            num_links: twice / 2,
        }
    }

    pub fn empty(num_nodes: usize) -> Self {
        Graph {
            adj: vec![Vec::new(); num_nodes],
            num_links: 0,
        }
    }

    #[inline]
    pub fn num_nodes(&self) -> usize {
        self.adj.len()
    }

    #[inline]
    pub fn num_links(&self) -> usize {
        self.num_links
    }

    /// Number of unordered node pairs, `N(N-1)/2`.
    pub fn num_pairs(&self) -> usize {
        let n = self.num_nodes();
        n * n.saturating_sub(1) / 2
    }

    #[inline]
    pub fn neighbors(&self, a: usize) -> &[u32] {
        &self.adj[a]
    }

    #[inline]
    pub fn degree(&self, a: usize) -> usize {
        self.adj[a].len()
    }

    #[inline]
    pub fn has_link(&self, a: usize, b: usize) -> bool {
        self.adj[a].binary_search(&(b as u32)).is_ok()
    }

    /// Links as `(a, b)` with `a < b`, in lexicographic order.
    pub fn links(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.adj.iter().enumerate().flat_map(|(a, list)| {
            list.iter()
                .map(|&b| b as usize)
                .filter(move |&b| b > a)
                .map(move |b| (a, b))
        })
    }

    /// Fraction of node pairs that are links.
    pub fn density(&self) -> f64 {
        match self.num_pairs() {
            0 => 0.0,
            p => self.num_links as f64 / p as f64,
        }
    }

    /// Checks symmetry, sortedness, absence of self-loops and the link count.
    pub fn check_invariants(&self) -> std::result::Result<(), String> {
        let n = self.num_nodes();
        let mut twice = 0;
        for (a, list) in self.adj.iter().enumerate() {
            if list.windows(2).any(|w| w[0] >= w[1]) {
                return Err(format!("neighbors of {a} not strictly sorted"));
            }
            for &b in list {
                let b = b as usize;
                if b >= n {
                    return Err(format!("neighbor {b} of {a} out of range"));
                }
                if b == a {
                    return Err(format!("self-loop at {a}"));
                }
                if !self.has_link(b, a) {
                    return Err(format!("link ({a}, {b}) not symmetric"));
                }
            }
            twice += list.len();
        }
        if twice != 2 * self.num_links {
            return Err(format!(
                "num_links {} disagrees with adjacency ({})",
                self.num_links,
                twice / 2
            ));
        }
        Ok(())
    }

    fn remove_link(&mut self, a: usize, b: usize) -> bool {
        let removed = match self.adj[a].binary_search(&(b as u32)) {
            Ok(i) => {
                self.adj[a].remove(i);
                true
            }
            Err(_) => false,
        };
        if removed {
            if let Ok(i) = self.adj[b].binary_search(&(a as u32)) {
                self.adj[b].remove(i);
            }
            self.num_links -= 1;
        }
        removed
    }
}

/// What the edge-list loader dropped and how it renumbered nodes.
#[derive(Clone, Debug, Default)]
pub struct LoadStats {
    pub self_loops: usize,
    pub duplicates: usize,
    /// `external_ids[i]` is the id used in the file for dense node `i`.
    pub external_ids: Vec<u64>,
}

/// Reads a whitespace-separated edge list. Lines starting with `#` are
/// comments. External ids are renumbered densely in first-appearance order.
pub fn load_edge_list(path: impl AsRef<Path>) -> Result<(Graph, LoadStats)> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_edge_list(BufReader::new(file), path)
}

pub fn parse_edge_list(reader: impl BufRead, path: &Path) -> Result<(Graph, LoadStats)> {
    let mut ids: HashMap<u64, usize> = HashMap::new();
    let mut stats = LoadStats::default();
    let mut edges = HashSet::new();
    let mut intern = |x: u64, stats: &mut LoadStats| -> usize {
        *ids.entry(x).or_insert_with(|| {
            stats.external_ids.push(x);
            stats.external_ids.len() - 1
        })
    };

    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: lineno + 1,
            message,
        };
        let mut tokens = trimmed.split_whitespace();
        let mut next = || -> Result<u64> {
            let tok = tokens
                .next()
                .ok_or_else(|| parse_err("expected two node ids".into()))?;
            tok.parse::<u64>()
                .map_err(|_| parse_err(format!("`{tok}` is not a non-negative integer")))
        };
        let (x, y) = (next()?, next()?);
        let a = intern(x, &mut stats);
        let b = intern(y, &mut stats);
        if a == b {
            stats.self_loops += 1;
            continue;
        }
        if !edges.insert((a.min(b), a.max(b))) {
            stats.duplicates += 1;
        }
    }

    if edges.is_empty() {
        return Err(Error::EmptyGraph);
    }
    if stats.self_loops + stats.duplicates > 0 {
        info!(
            "{}: dropped {} self-loops and {} duplicate edges",
            path.display(),
            stats.self_loops,
            stats.duplicates
        );
    }
    let mut edges: Vec<_> = edges.into_iter().collect();
    edges.sort_unstable();
    Ok((Graph::from_edges(stats.external_ids.len(), edges), stats))
}

/// Writes one `a b` line per link with `a < b`.
pub fn write_edge_list(graph: &Graph, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for (a, b) in graph.links() {
        writeln!(out, "{a} {b}").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

/// Parameters drawn by the generator.
#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruth {
    pub num_communities: usize,
    /// Row-major `N x K` membership matrix.
    pub pi: Vec<f64>,
    pub beta: Vec<f64>,
}

impl GroundTruth {
    pub fn pi_row(&self, a: usize) -> &[f64] {
        let k = self.num_communities;
        &self.pi[a * k..(a + 1) * k]
    }

    /// Header line, `N` membership rows, then one line of strengths.
    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let k = self.num_communities;
        let n = self.pi.len() / k;
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        let io = |e| Error::io(path, e);
        writeln!(out, "ammsb-ground-truth v1 {n} {k}").map_err(io)?;
        for a in 0..n {
            writeln!(out, "{}", join_exact(self.pi_row(a))).map_err(io)?;
        }
        writeln!(out, "{}", join_exact(&self.beta)).map_err(io)?;
        out.flush().map_err(io)
    }
}

pub(crate) fn join_exact(values: &[f64]) -> String {
    values
        .iter()
        .map(|v| format!("{v:.16e}"))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Synthetic a-MMSB generator.
///
/// Community strengths are drawn from `Beta(eta, eta_nonlink)`; the plain
/// model uses `eta_nonlink = eta`.
#[derive(Clone, Debug)]
pub struct AmmsbGenerator {
    pub num_nodes: usize,
    pub num_communities: usize,
    pub alpha: f64,
    pub eta: f64,
    pub eta_nonlink: f64,
    pub delta: f64,
    /// Overrides the strength draw, e.g. to force `beta = 1`.
    pub fixed_beta: Option<Vec<f64>>,
}

impl AmmsbGenerator {
    pub fn new(num_nodes: usize, num_communities: usize, alpha: f64, eta: f64, delta: f64) -> Self {
        AmmsbGenerator {
            num_nodes,
            num_communities,
            alpha,
            eta,
            eta_nonlink: eta,
            delta,
            fixed_beta: None,
        }
    }

    pub fn with_eta_nonlink(mut self, eta_nonlink: f64) -> Self {
        self.eta_nonlink = eta_nonlink;
        self
    }

    pub fn with_fixed_beta(mut self, beta: Vec<f64>) -> Self {
        self.fixed_beta = Some(beta);
        self
    }

    /// Link probability averaged over the prior: `E[beta]/K + delta (1 - 1/K)`.
    pub fn expected_density(&self) -> f64 {
        let k = self.num_communities as f64;
        let mean_beta = match &self.fixed_beta {
            Some(b) => b.iter().sum::<f64>() / k,
            None => self.eta / (self.eta + self.eta_nonlink),
        };
        // E[pi_ak pi_bk] = 1/K^2 for independent symmetric Dirichlet rows.
        mean_beta / k + self.delta * (1.0 - 1.0 / k)
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParam(m));
        if self.num_nodes < 2 {
            return bad(format!("need at least 2 nodes, got {}", self.num_nodes));
        }
        if self.num_communities < 1 {
            return bad("need at least one community".into());
        }
        if !(self.alpha > 0.0 && self.eta > 0.0 && self.eta_nonlink > 0.0) {
            return bad("alpha and eta must be positive".into());
        }
        if !(0.0..1.0).contains(&self.delta) {
            return bad(format!("delta must lie in [0, 1), got {}", self.delta));
        }
        if let Some(b) = &self.fixed_beta {
            if b.len() != self.num_communities || b.iter().any(|x| !(0.0..=1.0).contains(x)) {
                return bad("fixed beta must hold K probabilities".into());
            }
        }
        Ok(())
    }

    pub fn generate<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<(Graph, GroundTruth)> {
        self.validate()?;
        let (n, k) = (self.num_nodes, self.num_communities);

        let beta = match &self.fixed_beta {
            Some(b) => b.clone(),
            None => {
                let dist = Beta::new(self.eta, self.eta_nonlink)
                    .map_err(|e| Error::InvalidParam(e.to_string()))?;
                (0..k).map(|_| dist.sample(rng)).collect()
            }
        };

        let gamma = Gamma::new(self.alpha, 1.0).map_err(|e| Error::InvalidParam(e.to_string()))?;
        let mut pi = Vec::with_capacity(n * k);
        for _ in 0..n {
            let row: Vec<f64> = (0..k).map(|_| gamma.sample(rng)).collect();
            let total: f64 = row.iter().sum();
            if total > 0.0 {
                pi.extend(row.iter().map(|x| x / total));
            } else {
                // every draw underflowed; the limit is a point mass
                let hot = rng.random_range(0..k);
                pi.extend((0..k).map(|j| if j == hot { 1.0 } else { 0.0 }));
            }
        }

        let cumulative: Vec<Vec<f64>> = pi
            .chunks(k)
            .map(|row| {
                row.iter()
                    .scan(0.0, |acc, p| {
                        *acc += p;
                        Some(*acc)
                    })
                    .collect()
            })
            .collect();
        let draw = |cdf: &[f64], rng: &mut R| -> usize {
            let u = rng.random::<f64>() * cdf[k - 1];
            cdf.partition_point(|&c| c <= u).min(k - 1)
        };

        let mut edges = Vec::new();
        for a in 0..n {
            for b in a + 1..n {
                let z_ab = draw(&cumulative[a], rng);
                let z_ba = draw(&cumulative[b], rng);
                let p = if z_ab == z_ba { beta[z_ab] } else { self.delta };
                if rng.random::<f64>() < p {
                    edges.push((a, b));
                }
            }
        }

        let truth = GroundTruth {
            num_communities: k,
            pi,
            beta,
        };
        Ok((Graph::from_edges(n, edges), truth))
    }
}

/// Draws a graph from the a-MMSB generative process with `Beta(eta, eta)`
/// strengths.
pub fn generate_ammsb<R: Rng + ?Sized>(
    num_nodes: usize,
    num_communities: usize,
    alpha: f64,
    eta: f64,
    delta: f64,
    rng: &mut R,
) -> Result<(Graph, GroundTruth)> {
    AmmsbGenerator::new(num_nodes, num_communities, alpha, eta, delta).generate(rng)
}

/// A labelled node pair withheld from training.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TestPair {
    pub a: usize,
    pub b: usize,
    pub y: bool,
}

/// Held-out link and non-link pairs plus fast exclusion lookups.
#[derive(Clone, Debug, Default)]
pub struct HeldOutSplit {
    pairs: Vec<TestPair>,
    keys: HashSet<(u32, u32)>,
    per_node: Vec<u32>,
}

impl HeldOutSplit {
    /// A split that withholds nothing.
    pub fn none(num_nodes: usize) -> Self {
        HeldOutSplit {
            pairs: Vec::new(),
            keys: HashSet::new(),
            per_node: vec![0; num_nodes],
        }
    }

    pub fn from_pairs(num_nodes: usize, pairs: Vec<TestPair>) -> Result<Self> {
        let mut split = HeldOutSplit::none(num_nodes);
        for p in pairs {
            if p.a >= num_nodes || p.b >= num_nodes || p.a == p.b {
                return Err(Error::InvalidParam(format!(
                    "held-out pair ({}, {}) invalid for {num_nodes} nodes",
                    p.a, p.b
                )));
            }
            let p = TestPair {
                a: p.a.min(p.b),
                b: p.a.max(p.b),
                y: p.y,
            };
            if !split.keys.insert((p.a as u32, p.b as u32)) {
                return Err(Error::InvalidParam(format!(
                    "held-out pair ({}, {}) listed twice",
                    p.a, p.b
                )));
            }
            split.per_node[p.a] += 1;
            split.per_node[p.b] += 1;
            split.pairs.push(p);
        }
        Ok(split)
    }

    pub fn pairs(&self) -> &[TestPair] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    #[inline]
    pub fn contains(&self, a: usize, b: usize) -> bool {
        if self.keys.is_empty() {
            return false;
        }
        let key = if a < b { (a as u32, b as u32) } else { (b as u32, a as u32) };
        self.keys.contains(&key)
    }

    /// Number of held-out pairs touching `a`.
    #[inline]
    pub fn count_for(&self, a: usize) -> usize {
        self.per_node.get(a).copied().unwrap_or(0) as usize
    }

    /// One `a b y` line per pair.
    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        for p in &self.pairs {
            writeln!(out, "{} {} {}", p.a, p.b, p.y as u8).map_err(|e| Error::io(path, e))?;
        }
        out.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>, num_nodes: usize) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut pairs = Vec::new();
        for (lineno, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            let f: Vec<&str> = t.split_whitespace().collect();
            let parsed = (f.len() == 3)
                .then(|| {
                    Some((
                        f[0].parse::<usize>().ok()?,
                        f[1].parse::<usize>().ok()?,
                        match f[2] {
                            "0" => false,
                            "1" => true,
                            _ => return None,
                        },
                    ))
                })
                .flatten();
            let (a, b, y) = parsed.ok_or_else(|| Error::Parse {
                path: path.to_path_buf(),
                line: lineno + 1,
                message: "expected `a b y` with y in {0, 1}".into(),
            })?;
            pairs.push(TestPair { a, b, y });
        }
        HeldOutSplit::from_pairs(num_nodes, pairs)
    }
}

/// Withholds `ceil(fraction * links)` links and as many non-links.
///
/// Held-out links are removed from the returned training graph; held-out
/// non-links are recorded so samplers can skip them.
pub fn split_heldout<R: Rng + ?Sized>(
    graph: &Graph,
    fraction: f64,
    rng: &mut R,
) -> Result<(Graph, HeldOutSplit)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidParam(format!(
            "held-out fraction must lie in (0, 1), got {fraction}"
        )));
    }
    let count = (fraction * graph.num_links() as f64).ceil() as usize;
    let non_links = graph.num_pairs() - graph.num_links();
    if count > graph.num_links() || count > non_links {
        return Err(Error::InvalidParam(format!(
            "cannot withhold {count} links and non-links from a graph with {} links and {non_links} non-links",
            graph.num_links()
        )));
    }

    let links: Vec<(usize, usize)> = graph.links().collect();
    let mut pairs = Vec::with_capacity(2 * count);
    for i in index::sample(rng, links.len(), count).into_vec() {
        let (a, b) = links[i];
        pairs.push(TestPair { a, b, y: true });
    }

    let n = graph.num_nodes();
    let mut chosen = HashSet::with_capacity(count);
    if 2 * count > non_links {
        let pool: Vec<(usize, usize)> = (0..n)
            .flat_map(|a| (a + 1..n).map(move |b| (a, b)))
            .filter(|&(a, b)| !graph.has_link(a, b))
            .collect();
        for i in index::sample(rng, pool.len(), count).into_vec() {
            let (a, b) = pool[i];
            pairs.push(TestPair { a, b, y: false });
        }
    } else {
        while chosen.len() < count {
            let a = rng.random_range(0..n);
            let b = rng.random_range(0..n);
            if a == b || graph.has_link(a, b) {
                continue;
            }
            let key = (a.min(b), a.max(b));
            if chosen.insert(key) {
                pairs.push(TestPair {
                    a: key.0,
                    b: key.1,
                    y: false,
                });
            }
        }
    }

    let mut training = graph.clone();
    for p in pairs.iter().filter(|p| p.y) {
        training.remove_link(p.a, p.b);
    }
    let newly_isolated = (0..n)
        .filter(|&a| training.degree(a) == 0 && graph.degree(a) > 0)
        .count();
    if newly_isolated > 0 {
        warn!("held-out split isolates {newly_isolated} nodes in the training graph");
    }
    Ok((training, HeldOutSplit::from_pairs(n, pairs)?))
}
