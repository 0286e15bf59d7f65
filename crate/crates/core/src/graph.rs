//! Directed graph storage, ingestion, synthetic generators, conductance,
//! clustered-set sampling and the power-iteration PPR oracle.

use std::collections::BTreeSet;
use std::io::{BufRead, Write};
use std::ops::Deref;

use rand::Rng;

use crate::error::{PprError, Result};
use crate::rng::{self, TAG_GENERATOR};

/// Immutable directed graph in compressed adjacency form.
///
/// Every node has at least one out-edge: nodes without one receive a
/// self-loop at construction. Adjacency lists are sorted.
#[derive(Debug, Clone)]
pub struct Graph {
    n: usize,
    out_offsets: Vec<usize>,
    out_targets: Vec<usize>,
    in_offsets: Vec<usize>,
    in_sources: Vec<usize>,
    labels: Option<Vec<usize>>,
    original_ids: Option<Vec<u64>>,
}

fn csr(n: usize, pairs: &[(usize, usize)]) -> (Vec<usize>, Vec<usize>) {
    let mut offsets = vec![0usize; n + 1];
    for &(u, _) in pairs {
        offsets[u + 1] += 1;
    }
    for i in 0..n {
        offsets[i + 1] += offsets[i];
    }
    let mut fill = offsets.clone();
    let mut targets = vec![0usize; pairs.len()];
    for &(u, v) in pairs {
        targets[fill[u]] = v;
        fill[u] += 1;
    }
    for u in 0..n {
        targets[offsets[u]..offsets[u + 1]].sort_unstable();
    }
    (offsets, targets)
}

impl Graph {
    /// Builds a graph on nodes `0..n`. Dangling nodes get a self-loop.
    pub fn from_edges(n: usize, mut edges: Vec<(usize, usize)>, dedup: bool) -> Result<Self> {
        if n == 0 {
            return Err(PprError::EmptyGraph);
        }
        for &(u, v) in &edges {
            let bad = u.max(v);
            if bad >= n {
                return Err(PprError::NodeOutOfRange { node: bad, n });
            }
        }
        if dedup {
            edges.sort_unstable();
            edges.dedup();
        }
        let mut has_out = vec![false; n];
        for &(u, _) in &edges {
            has_out[u] = true;
        }
        for (v, _) in has_out.iter().enumerate().filter(|(_, &h)| !h) {
            edges.push((v, v));
        }
        let (out_offsets, out_targets) = csr(n, &edges);
        let reversed: Vec<(usize, usize)> = edges.iter().map(|&(u, v)| (v, u)).collect();
        let (in_offsets, in_sources) = csr(n, &reversed);
        Ok(Self { n, out_offsets, out_targets, in_offsets, in_sources, labels: None, original_ids: None })
    }

    pub fn with_labels(mut self, labels: Vec<usize>) -> Result<Self> {
        if labels.len() != self.n {
            return Err(PprError::DimensionMismatch(format!("{} labels for {} nodes", labels.len(), self.n)));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.out_targets.len()
    }

    pub fn out_neighbors(&self, v: usize) -> &[usize] {
        &self.out_targets[self.out_offsets[v]..self.out_offsets[v + 1]]
    }

    pub fn in_neighbors(&self, v: usize) -> &[usize] {
        &self.in_sources[self.in_offsets[v]..self.in_offsets[v + 1]]
    }

    pub fn out_degree(&self, v: usize) -> usize {
        self.out_offsets[v + 1] - self.out_offsets[v]
    }

    pub fn in_degree(&self, v: usize) -> usize {
        self.in_offsets[v + 1] - self.in_offsets[v]
    }

    /// Community labels, present for graphs from the block-model generator.
    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    /// Original ids of the loaded file, indexed by dense id.
    pub fn original_ids(&self) -> Option<&[u64]> {
        self.original_ids.as_deref()
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.n).flat_map(move |u| self.out_neighbors(u).iter().map(move |&v| (u, v)))
    }

    pub fn check_node(&self, v: usize) -> Result<()> {
        if v < self.n {
            Ok(())
        } else {
            Err(PprError::NodeOutOfRange { node: v, n: self.n })
        }
    }

    /// True when the stored in-adjacency equals the transpose of the out-adjacency.
    pub fn transpose_consistent(&self) -> bool {
        let reversed: Vec<(usize, usize)> = self.edges().map(|(u, v)| (v, u)).collect();
        let (offsets, sources) = csr(self.n, &reversed);
        offsets == self.in_offsets && sources == self.in_sources
    }

    /// Writes `orig<TAB>dense` lines.
    pub fn write_id_map<W: Write>(&self, mut out: W) -> Result<()> {
        for v in 0..self.n {
            let orig = self.original_ids.as_ref().map_or(v as u64, |ids| ids[v]);
            writeln!(out, "{orig}\t{v}")?;
        }
        Ok(())
    }

    /// Writes the graph as an edge list that [`load_edge_list`] reads back.
    pub fn write_edge_list<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "# nodes {} edges {}", self.n, self.m())?;
        for (u, v) in self.edges() {
            writeln!(out, "{u}\t{v}")?;
        }
        Ok(())
    }
}

/// Ordered list of distinct, valid node ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeSet {
    ids: Vec<usize>,
}

impl NodeSet {
    pub fn new(ids: Vec<usize>, n: usize) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for &v in &ids {
            if v >= n {
                return Err(PprError::NodeOutOfRange { node: v, n });
            }
            if !seen.insert(v) {
                return Err(PprError::InvalidParameter(format!("duplicate node {v} in set")));
            }
        }
        Ok(Self { ids })
    }

    pub fn into_vec(self) -> Vec<usize> {
        self.ids
    }
}

impl Deref for NodeSet {
    type Target = [usize];
    fn deref(&self) -> &[usize] {
        &self.ids
    }
}

/// Nonnegative weights over all nodes summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseDistribution {
    weights: Vec<f64>,
}

impl DenseDistribution {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.iter().any(|&x| !(x >= 0.0)) {
            return Err(PprError::InvalidParameter("distribution has a negative or NaN entry".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(PprError::InvalidParameter(format!("distribution sums to {total}")));
        }
        Ok(Self { weights })
    }

    pub fn point_mass(n: usize, v: usize) -> Self {
        let mut weights = vec![0.0; n];
        weights[v] = 1.0;
        Self { weights }
    }

    pub fn uniform_over(n: usize, nodes: &[usize]) -> Self {
        let mut weights = vec![0.0; n];
        for &v in nodes {
            weights[v] += 1.0 / nodes.len() as f64;
        }
        Self { weights }
    }
}

impl Deref for DenseDistribution {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.weights
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LoadOptions {
    pub symmetrize: bool,
    pub dedup: bool,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self { symmetrize: false, dedup: true }
    }
}

/// Reads a whitespace-separated edge list. Lines starting with `#` and blank
/// lines are skipped; ids are remapped to `0..n` in increasing original order.
pub fn load_edge_list<R: BufRead>(source: R, opts: LoadOptions) -> Result<Graph> {
    let mut raw: Vec<(u64, u64)> = Vec::new();
    for (idx, line) in source.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let lineno = idx + 1;
        let mut tokens = trimmed.split_whitespace();
        let mut next_id = |what: &str| -> Result<u64> {
            let tok =
                tokens.next().ok_or_else(|| PprError::Parse { line: lineno, msg: format!("missing {what} node") })?;
            tok.parse::<u64>()
                .map_err(|_| PprError::Parse { line: lineno, msg: format!("invalid {what} node id {tok:?}") })
        };
        let u = next_id("source")?;
        let v = next_id("target")?;
        if tokens.next().is_some() {
            return Err(PprError::Parse { line: lineno, msg: "expected exactly two fields".into() });
        }
        raw.push((u, v));
    }
    if raw.is_empty() {
        return Err(PprError::EmptyGraph);
    }
    let mut ids: Vec<u64> = raw.iter().flat_map(|&(u, v)| [u, v]).collect();
    ids.sort_unstable();
    ids.dedup();
    let dense = |x: u64| ids.binary_search(&x).expect("id collected above");
    let mut edges: Vec<(usize, usize)> = Vec::with_capacity(raw.len() * if opts.symmetrize { 2 } else { 1 });
    for &(u, v) in &raw {
        let (a, b) = (dense(u), dense(v));
        edges.push((a, b));
        if opts.symmetrize && a != b {
            edges.push((b, a));
        }
    }
    let mut g = Graph::from_edges(ids.len(), edges, opts.dedup)?;
    g.original_ids = Some(ids);
    Ok(g)
}

/// Calls `f(j)` for each `j` in `0..slots` independently with probability `p`,
/// using geometric gaps between successes.
fn bernoulli_slots<R: Rng>(rng: &mut R, slots: usize, p: f64, mut f: impl FnMut(usize)) {
    if slots == 0 || p <= 0.0 {
        return;
    }
    if p >= 1.0 {
        (0..slots).for_each(f);
        return;
    }
    let log_q = (1.0 - p).ln();
    let mut pos: f64 = -1.0;
    loop {
        let u: f64 = rng.random();
        pos += ((1.0 - u).ln() / log_q).floor() + 1.0;
        if pos >= slots as f64 {
            break;
        }
        f(pos as usize);
    }
}

fn check_probability(name: &str, p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(PprError::InvalidParameter(format!("{name} = {p} is not a probability")))
    }
}

/// Directed Erdos-Renyi graph: each ordered pair `u != v` is an edge with probability `p`.
pub fn generate_directed_er(n: usize, p: f64, seed: u64) -> Result<Graph> {
    if n == 0 {
        return Err(PprError::InvalidParameter("n must be at least 1".into()));
    }
    check_probability("p", p)?;
    let mut rng = rng::stream(seed, TAG_GENERATOR, 1, 0);
    let mut edges = Vec::new();
    for u in 0..n {
        bernoulli_slots(&mut rng, n - 1, p, |j| edges.push((u, if j < u { j } else { j + 1 })));
    }
    Graph::from_edges(n, edges, false)
}

/// Directed block model with `k` equal contiguous communities. Intra-community
/// ordered pairs appear with probability `in_expected / (n/k - 1)`, the rest
/// with `out_expected / (n - n/k)`. Community labels are retained.
pub fn generate_directed_sbm(n: usize, k: usize, in_expected: f64, out_expected: f64, seed: u64) -> Result<Graph> {
    if n == 0 || k == 0 || !n.is_multiple_of(k) {
        return Err(PprError::InvalidParameter(format!("k = {k} must divide n = {n}")));
    }
    let b = n / k;
    let rate = |expected: f64, slots: usize, name: &str| -> Result<f64> {
        if expected < 0.0 {
            return Err(PprError::InvalidParameter(format!("{name} must be nonnegative")));
        }
        if slots == 0 {
            return if expected == 0.0 {
                Ok(0.0)
            } else {
                Err(PprError::InvalidParameter(format!("{name} > 0 but no such pairs exist")))
            };
        }
        let p = expected / slots as f64;
        check_probability(name, p)?;
        Ok(p)
    };
    let p_in = rate(in_expected, b - 1, "intra-community probability")?;
    let p_out = rate(out_expected, n - b, "inter-community probability")?;
    let mut rng = rng::stream(seed, TAG_GENERATOR, 2, 0);
    let mut edges = Vec::new();
    for u in 0..n {
        let start = (u / b) * b;
        let local = u - start;
        bernoulli_slots(&mut rng, b - 1, p_in, |j| {
            edges.push((u, start + if j < local { j } else { j + 1 }));
        });
        bernoulli_slots(&mut rng, n - b, p_out, |j| {
            edges.push((u, if j < start { j } else { j + b }));
        });
    }
    let labels = (0..n).map(|v| v / b).collect();
    Graph::from_edges(n, edges, false)?.with_labels(labels)
}

fn membership(g: &Graph, u: &[usize]) -> Result<Vec<bool>> {
    let mut inside = vec![false; g.n()];
    for &v in u {
        g.check_node(v)?;
        if std::mem::replace(&mut inside[v], true) {
            return Err(PprError::InvalidParameter(format!("duplicate node {v} in set")));
        }
    }
    Ok(inside)
}

/// Edges leaving `u` divided by the smaller out-degree volume of the two sides.
pub fn conductance(g: &Graph, u: &[usize]) -> Result<f64> {
    if u.is_empty() || u.len() >= g.n() {
        return Err(PprError::InvalidParameter("conductance needs a nonempty proper subset".into()));
    }
    let inside = membership(g, u)?;
    let mut cut = 0usize;
    let mut vol_in = 0usize;
    for &v in u {
        vol_in += g.out_degree(v);
        cut += g.out_neighbors(v).iter().filter(|&&w| !inside[w]).count();
    }
    let vol_out = g.m() - vol_in;
    Ok(cut as f64 / vol_in.min(vol_out) as f64)
}

#[derive(Debug, Clone)]
pub struct ClusteredSet {
    pub nodes: Vec<usize>,
    /// False when the out-frontier ran dry before reaching the requested size.
    pub complete: bool,
}

/// Grows a set from a uniform seed. Each new node comes from the out-frontier
/// with probability proportional to (in-set in-neighbors) / in-degree.
pub fn construct_clustered_set<R: Rng>(g: &Graph, l: usize, rng: &mut R) -> Result<ClusteredSet> {
    if l == 0 || l > g.n() {
        return Err(PprError::InvalidParameter(format!("set size {l} outside 1..={}", g.n())));
    }
    let n = g.n();
    let mut in_set = vec![false; n];
    let mut hits = vec![0usize; n];
    let mut frontier: Vec<usize> = Vec::new();
    let mut slot = vec![usize::MAX; n];
    let mut nodes = Vec::with_capacity(l);

    let add = |v: usize,
               nodes: &mut Vec<usize>,
               in_set: &mut Vec<bool>,
               hits: &mut Vec<usize>,
               frontier: &mut Vec<usize>,
               slot: &mut Vec<usize>| {
        in_set[v] = true;
        nodes.push(v);
        if slot[v] != usize::MAX {
            let i = slot[v];
            frontier.swap_remove(i);
            if i < frontier.len() {
                slot[frontier[i]] = i;
            }
            slot[v] = usize::MAX;
        }
        for &w in g.out_neighbors(v) {
            if in_set[w] {
                continue;
            }
            hits[w] += 1;
            if slot[w] == usize::MAX {
                slot[w] = frontier.len();
                frontier.push(w);
            }
        }
    };

    let first = rng.random_range(0..n);
    add(first, &mut nodes, &mut in_set, &mut hits, &mut frontier, &mut slot);
    while nodes.len() < l {
        if frontier.is_empty() {
            return Ok(ClusteredSet { nodes, complete: false });
        }
        let weight = |w: usize| hits[w] as f64 / g.in_degree(w) as f64;
        let total: f64 = frontier.iter().map(|&w| weight(w)).sum();
        let mut target = rng.random::<f64>() * total;
        let mut pick = *frontier.last().unwrap();
        for &w in &frontier {
            target -= weight(w);
            if target < 0.0 {
                pick = w;
                break;
            }
        }
        add(pick, &mut nodes, &mut in_set, &mut hits, &mut frontier, &mut slot);
    }
    Ok(ClusteredSet { nodes, complete: true })
}

/// `l` distinct nodes drawn uniformly.
pub fn uniform_node_set<R: Rng>(g: &Graph, l: usize, rng: &mut R) -> Result<Vec<usize>> {
    if l > g.n() {
        return Err(PprError::InvalidParameter(format!("set size {l} exceeds n = {}", g.n())));
    }
    Ok(rand::seq::index::sample(rng, g.n(), l).into_vec())
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha <= 1.0 {
        Ok(())
    } else {
        Err(PprError::InvalidParameter(format!("alpha = {alpha} outside (0, 1]")))
    }
}

/// Power iteration `pi <- alpha*sigma + (1-alpha)*pi*P` until the L1 change drops below `tol`.
pub fn exact_ppr(g: &Graph, sigma: &[f64], alpha: f64, tol: f64) -> Result<Vec<f64>> {
    check_alpha(alpha)?;
    if sigma.len() != g.n() {
        return Err(PprError::DimensionMismatch(format!("sigma has {} entries, n = {}", sigma.len(), g.n())));
    }
    if !(tol > 0.0) {
        return Err(PprError::InvalidParameter("tol must be positive".into()));
    }
    let n = g.n();
    let mut pi: Vec<f64> = sigma.to_vec();
    let mut next = vec![0.0; n];
    loop {
        for (x, &s) in next.iter_mut().zip(sigma) {
            *x = alpha * s;
        }
        for (u, &mass) in pi.iter().enumerate() {
            if mass == 0.0 {
                continue;
            }
            let share = (1.0 - alpha) * mass / g.out_degree(u) as f64;
            for &v in g.out_neighbors(u) {
                next[v] += share;
            }
        }
        let change: f64 = pi.iter().zip(&next).map(|(a, b)| (a - b).abs()).sum();
        std::mem::swap(&mut pi, &mut next);
        if change < tol {
            return Ok(pi);
        }
    }
}

/// `pi_v(t)` for every `v`, from the fixed point `x = alpha*e_t + (1-alpha)*P*x`.
pub fn exact_contributions(g: &Graph, t: usize, alpha: f64, tol: f64) -> Result<Vec<f64>> {
    g.check_node(t)?;
    let mut weights = vec![0.0; g.n()];
    weights[t] = 1.0;
    exact_contributions_of(g, &weights, alpha, tol)
}

/// `sum_w weights(w) * pi_v(w)` for every `v`.
pub fn exact_contributions_of(g: &Graph, weights: &[f64], alpha: f64, tol: f64) -> Result<Vec<f64>> {
    check_alpha(alpha)?;
    if weights.len() != g.n() {
        return Err(PprError::DimensionMismatch(format!("{} weights, n = {}", weights.len(), g.n())));
    }
    let n = g.n();
    let mut x: Vec<f64> = weights.iter().map(|&w| alpha * w).collect();
    let mut next = vec![0.0; n];
    loop {
        for v in 0..n {
            let mean: f64 = g.out_neighbors(v).iter().map(|&u| x[u]).sum::<f64>() / g.out_degree(v) as f64;
            next[v] = (1.0 - alpha) * mean + alpha * weights[v];
        }
        let change = x.iter().zip(&next).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        std::mem::swap(&mut x, &mut next);
        if change < tol {
            return Ok(x);
        }
    }
}

/// Global PageRank: PPR with the uniform teleport distribution.
pub fn global_pagerank(g: &Graph, alpha: f64, tol: f64) -> Result<Vec<f64>> {
    let uniform = vec![1.0 / g.n() as f64; g.n()];
    exact_ppr(g, &uniform, alpha, tol)
}
