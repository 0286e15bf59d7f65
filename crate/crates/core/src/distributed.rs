//! Simulated k-machine walk sampling with source partitioning.
//!
//! Stage 1 splits `S` arbitrarily and runs forward pushes per machine. Stage 2
//! partitions `S` centrally. Stage 3 samples shared walks per machine over its part.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;

use crate::error::{PprError, Result};
use crate::estimators::{combine, source_stage, EstimatorParams, Method, SourceStage};
use crate::graph::Graph;
use crate::matrix::{build_push_matrices, stable_rank_of_rows};
use crate::metrics::{sigma_infinity_one, sigma_max_vector};
use crate::push::PushResult;
use crate::rng::{self, TAG_MACHINE, TAG_PARTITION};
use crate::sparse::SparseVec;

/// Nominal cost of one walk step, used for modeled sampling time.
pub const MODELED_STEP_NS: f64 = 100.0;

/// `sum_v max(sigma_s(v) - part(v), 0)`: growth of `‖sigma_{S'}‖₁` when `s` joins `S'`.
pub fn partition_distance(sigma_s: &SparseVec, part: &SparseVec) -> f64 {
    sigma_s.iter().map(|(v, x)| (x - part.get(v)).max(0.0)).sum()
}

fn l1_distance(a: &SparseVec, b: &SparseVec) -> f64 {
    let diff: Vec<(usize, f64)> = a.iter().chain(b.iter().map(|(v, x)| (v, -x))).collect();
    SparseVec::from_pairs(diff).l1()
}

/// Per-part aggregates kept by the assignment loop.
#[derive(Debug, Clone, PartialEq)]
pub enum PartAggregates {
    None,
    /// `sigma_{S_j}`, the elementwise max of member rows.
    Max(Vec<SparseVec>),
    /// `x_j = sum ‖surr‖₂²` and `y_j(t) = sum surr(t) ‖surr‖₁`.
    Surrogate {
        x: Vec<f64>,
        y: Vec<Vec<f64>>,
    },
}

/// Parts hold positions into the source list.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    pub parts: Vec<Vec<usize>>,
    pub aggregates: PartAggregates,
}

impl Partition {
    pub fn k(&self) -> usize {
        self.parts.len()
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.parts.iter().map(Vec::len).collect()
    }

    /// True when the parts are nonempty, disjoint and cover `0..len`.
    pub fn is_cover(&self, len: usize) -> bool {
        let mut seen = vec![false; len];
        for part in &self.parts {
            if part.is_empty() {
                return false;
            }
            for &i in part {
                if i >= len || seen[i] {
                    return false;
                }
                seen[i] = true;
            }
        }
        seen.into_iter().all(|x| x)
    }

    /// Part index of every position.
    pub fn assignment(&self, len: usize) -> Vec<usize> {
        let mut out = vec![usize::MAX; len];
        for (j, part) in self.parts.iter().enumerate() {
            for &i in part {
                out[i] = j;
            }
        }
        out
    }

    /// Node ids of each part.
    pub fn nodes(&self, sources: &[usize]) -> Vec<Vec<usize>> {
        self.parts.iter().map(|p| p.iter().map(|&i| sources[i]).collect()).collect()
    }
}

/// `(min, max)` part size.
pub fn partition_balance(p: &Partition) -> (usize, usize) {
    let sizes = p.sizes();
    (sizes.iter().copied().min().unwrap_or(0), sizes.iter().copied().max().unwrap_or(0))
}

fn check_k(len: usize, k: usize) -> Result<()> {
    if k == 0 || k > len {
        return Err(PprError::InvalidParameter(format!("k = {k} outside 1..={len}")));
    }
    Ok(())
}

/// Contiguous split into `k` equal parts; `k` must divide `len`.
pub fn arbitrary_partition(len: usize, k: usize) -> Result<Partition> {
    check_k(len, k)?;
    if !len.is_multiple_of(k) {
        return Err(PprError::InvalidParameter(format!("k = {k} does not divide |S| = {len}")));
    }
    let b = len / k;
    Ok(Partition { parts: (0..k).map(|j| (j * b..(j + 1) * b).collect()).collect(), aggregates: PartAggregates::None })
}

/// Shuffled split into `k` parts whose sizes differ by at most one.
pub fn random_balanced_partition<R: Rng>(len: usize, k: usize, rng: &mut R) -> Result<Partition> {
    check_k(len, k)?;
    let mut order: Vec<usize> = (0..len).collect();
    order.shuffle(rng);
    let mut parts = vec![Vec::new(); k];
    for (pos, i) in order.into_iter().enumerate() {
        parts[pos % k].push(i);
    }
    for p in &mut parts {
        p.sort_unstable();
    }
    Ok(Partition { parts, aggregates: PartAggregates::None })
}

/// Groups positions by label, parts ordered by first appearance.
pub fn oracle_partition(labels: &[usize]) -> Partition {
    let mut order: Vec<usize> = Vec::new();
    let mut parts: Vec<Vec<usize>> = Vec::new();
    for (i, &l) in labels.iter().enumerate() {
        match order.iter().position(|&x| x == l) {
            Some(j) => parts[j].push(i),
            None => {
                order.push(l);
                parts.push(vec![i]);
            }
        }
    }
    Partition { parts, aggregates: PartAggregates::None }
}

/// k-means++-style seeds: the first uniform, each next one with probability
/// proportional to its L1 distance to the nearest chosen seed. Uniform over the
/// unchosen rows when every distance is zero.
fn seed_parts<R: Rng>(rows: &[SparseVec], k: usize, rng: &mut R) -> Result<Vec<usize>> {
    let len = rows.len();
    let mut seeds = vec![rng.random_range(0..len)];
    let mut nearest: Vec<f64> = rows.iter().map(|r| l1_distance(r, &rows[seeds[0]])).collect();
    nearest[seeds[0]] = 0.0;
    while seeds.len() < k {
        let next = match WeightedIndex::new(&nearest) {
            Ok(dist) => dist.sample(rng),
            Err(_) => {
                let free: Vec<usize> = (0..len).filter(|i| !seeds.contains(i)).collect();
                free[rng.random_range(0..free.len())]
            }
        };
        seeds.push(next);
        for (i, r) in rows.iter().enumerate() {
            nearest[i] = nearest[i].min(l1_distance(r, &rows[next]));
        }
        for &s in &seeds {
            nearest[s] = 0.0;
        }
    }
    Ok(seeds)
}

/// Seeds plus the shuffled order in which remaining rows are assigned.
fn seeds_and_order<R: Rng>(rows: &[SparseVec], k: usize, rng: &mut R) -> Result<(Vec<usize>, Vec<usize>)> {
    check_k(rows.len(), k)?;
    let seeds = seed_parts(rows, k, rng)?;
    let mut rest: Vec<usize> = (0..rows.len()).filter(|i| !seeds.contains(i)).collect();
    rest.shuffle(rng);
    Ok((seeds, rest))
}

fn argmin(costs: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::INFINITY);
    for (j, c) in costs.enumerate() {
        if c < best.1 {
            best = (j, c);
        }
    }
    best.0
}

/// Greedy partition minimizing `max_j ‖sigma_{S_j}‖₁`.
pub fn source_partition_max<R: Rng>(sigmas: &[SparseVec], k: usize, rng: &mut R) -> Result<Partition> {
    let (seeds, rest) = seeds_and_order(sigmas, k, rng)?;
    let mut parts: Vec<Vec<usize>> = seeds.iter().map(|&s| vec![s]).collect();
    let mut agg: Vec<SparseVec> = seeds.iter().map(|&s| sigmas[s].clone()).collect();
    let mut norms: Vec<f64> = agg.iter().map(SparseVec::l1).collect();
    for s in rest {
        let j = argmin((0..k).map(|j| partition_distance(&sigmas[s], &agg[j]) + norms[j]));
        agg[j] = sigma_max_vector(&[agg[j].clone(), sigmas[s].clone()]);
        norms[j] = agg[j].l1();
        parts[j].push(s);
    }
    Ok(Partition { parts, aggregates: PartAggregates::Max(agg) })
}

/// Stable rank of stacked rows, 1 for an all-zero stack (sources reaching no target).
fn stack_srank(rows: &[&SparseVec]) -> Result<f64> {
    match stable_rank_of_rows(rows) {
        Err(PprError::ZeroMatrix) => Ok(1.0),
        other => other,
    }
}

/// `sqrt((|S_j| + 1) srank(surr_{S_j + s}))`.
pub fn d_tilde(surr: &[SparseVec], part: &[usize], s: usize) -> Result<f64> {
    let stacked: Vec<&SparseVec> = part.iter().chain(std::iter::once(&s)).map(|&i| &surr[i]).collect();
    Ok(((part.len() + 1) as f64 * stack_srank(&stacked)?).sqrt())
}

/// Greedy partition for `max_i sqrt(|S_i| srank(surr_{S_i}))` with exact stable ranks.
/// Quadratic in part size per assignment.
pub fn source_partition_avg<R: Rng>(surr: &[SparseVec], k: usize, rng: &mut R) -> Result<Partition> {
    let (seeds, rest) = seeds_and_order(surr, k, rng)?;
    let mut parts: Vec<Vec<usize>> = seeds.iter().map(|&s| vec![s]).collect();
    for s in rest {
        let costs = parts.iter().map(|p| d_tilde(surr, p, s)).collect::<Result<Vec<_>>>()?;
        let j = argmin(costs.into_iter());
        parts[j].push(s);
    }
    Ok(Partition { parts, aggregates: PartAggregates::None })
}

/// `d_hat` and the exact `d_tilde` for one candidate assignment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AltWitness {
    pub source: usize,
    pub part: usize,
    pub d_hat: f64,
    pub d_tilde: f64,
}

fn dense_dim(rows: &[SparseVec]) -> usize {
    rows.iter().filter_map(SparseVec::max_index).max().map_or(0, |m| m + 1)
}

fn d_hat(size: usize, x: f64, y: &[f64], row: &SparseVec) -> f64 {
    let (l2, l1) = (row.l2_squared(), row.l1());
    let mut top = y.iter().copied().fold(0.0, f64::max);
    for (t, v) in row.iter() {
        top = top.max(y[t] + v * l1);
    }
    let ratio = if top > 0.0 { (x + l2) / top } else { 1.0 };
    ((size + 1) as f64 * ratio).sqrt()
}

fn avg_alt<R: Rng>(
    surr: &[SparseVec],
    k: usize,
    rng: &mut R,
    mut witness: Option<&mut Vec<AltWitness>>,
) -> Result<Partition> {
    let (seeds, rest) = seeds_and_order(surr, k, rng)?;
    let dim = dense_dim(surr);
    let mut parts: Vec<Vec<usize>> = seeds.iter().map(|&s| vec![s]).collect();
    let mut x: Vec<f64> = seeds.iter().map(|&s| surr[s].l2_squared()).collect();
    let mut y: Vec<Vec<f64>> = seeds
        .iter()
        .map(|&s| {
            let l1 = surr[s].l1();
            let mut v = vec![0.0; dim];
            for (t, val) in surr[s].iter() {
                v[t] = val * l1;
            }
            v
        })
        .collect();
    for s in rest {
        let costs: Vec<f64> = (0..k).map(|j| d_hat(parts[j].len(), x[j], &y[j], &surr[s])).collect();
        if let Some(w) = witness.as_deref_mut() {
            for (j, &c) in costs.iter().enumerate() {
                w.push(AltWitness { source: s, part: j, d_hat: c, d_tilde: d_tilde(surr, &parts[j], s)? });
            }
        }
        let j = argmin(costs.into_iter());
        let l1 = surr[s].l1();
        x[j] += surr[s].l2_squared();
        for (t, val) in surr[s].iter() {
            y[j][t] += val * l1;
        }
        parts[j].push(s);
    }
    Ok(Partition { parts, aggregates: PartAggregates::Surrogate { x, y } })
}

/// Greedy partition for the stable-rank objective with the SVD-free cost
/// `sqrt((|S_j|+1)(x_j + ‖surr_s‖₂²) / max_t(y_j(t) + surr_s(t) ‖surr_s‖₁))`.
pub fn source_partition_avg_alt<R: Rng>(surr: &[SparseVec], k: usize, rng: &mut R) -> Result<Partition> {
    avg_alt(surr, k, rng, None)
}

/// Same as [`source_partition_avg_alt`], also returning `(d_hat, d_tilde)` for every candidate.
pub fn source_partition_avg_alt_witnessed<R: Rng>(
    surr: &[SparseVec],
    k: usize,
    rng: &mut R,
) -> Result<(Partition, Vec<AltWitness>)> {
    let mut w = Vec::new();
    let p = avg_alt(surr, k, rng, Some(&mut w))?;
    Ok((p, w))
}

/// `max_i ‖sigma_{S_i}‖₁`.
pub fn objective_max(sigmas: &[SparseVec], p: &Partition) -> f64 {
    p.parts
        .iter()
        .map(|part| sigma_infinity_one(&part.iter().map(|&i| sigmas[i].clone()).collect::<Vec<_>>()))
        .fold(0.0, f64::max)
}

/// `max_i sqrt(|S_i| srank(surr_{S_i}))`.
pub fn objective_srank(surr: &[SparseVec], p: &Partition) -> Result<f64> {
    let mut best = 0.0f64;
    for part in &p.parts {
        let rows: Vec<&SparseVec> = part.iter().map(|&i| &surr[i]).collect();
        best = best.max((part.len() as f64 * stack_srank(&rows)?).sqrt());
    }
    Ok(best)
}

/// Rows `P_T(s,:) + (p^s)^T R_T`.
pub fn surrogate_rows(forward: &[PushResult], targets: &[PushResult]) -> Result<Vec<SparseVec>> {
    let det = build_push_matrices(forward, targets)?.deterministic_part();
    Ok((0..det.rows()).map(|i| SparseVec::from_dense(det.row(i))).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub enum Scheme {
    /// No forward push; `w` walks per source on an arbitrary split.
    Baseline,
    HeuristicMax,
    HeuristicAvg,
    HeuristicAvgAlt,
    /// Parts given by one label per source.
    Oracle(Vec<usize>),
}

impl Scheme {
    pub fn tag(&self) -> &'static str {
        match self {
            Scheme::Baseline => "baseline",
            Scheme::HeuristicMax => "heuristic_max",
            Scheme::HeuristicAvg => "heuristic_avg",
            Scheme::HeuristicAvgAlt => "heuristic_avg_alt",
            Scheme::Oracle(_) => "oracle",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistributedConfig {
    pub k: usize,
    pub scheme: Scheme,
    pub params: EstimatorParams,
    /// Degree-normalized forward push with `ceil(w ‖r‖₁)` walks per source.
    pub practical_forward: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MachineReport {
    pub machine_id: usize,
    pub sources: usize,
    pub walks: u64,
    /// Forward-push work done on this machine in stage 1.
    pub push_work: usize,
    /// `walks * (1/alpha) * MODELED_STEP_NS`, in milliseconds.
    pub modeled_time_ms: f64,
    pub wall_time_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistributedRun {
    pub partition: Partition,
    pub machines: Vec<MachineReport>,
    pub total_walks: u64,
    pub max_walks: u64,
    pub max_push_work: usize,
    pub objective_max: f64,
    pub objective_srank: Option<f64>,
    /// `estimates[i][j]` for `sources[i]`, `targets[j]`; empty without targets.
    pub estimates: Vec<Vec<f64>>,
}

fn modeled_ms(walks: u64, alpha: f64) -> f64 {
    walks as f64 / alpha * MODELED_STEP_NS / 1e6
}

/// Runs the three stages for one scheme. `targets` are precomputed backward
/// pushes; the stable-rank schemes need them.
pub fn run_distributed_estimation(
    g: &Graph,
    sources: &[usize],
    targets: &[PushResult],
    cfg: &DistributedConfig,
) -> Result<DistributedRun> {
    let params = &cfg.params;
    params.validate()?;
    let len = sources.len();
    let split = arbitrary_partition(len, cfg.k)?;
    let baseline = cfg.scheme == Scheme::Baseline;
    let method = match (baseline, cfg.practical_forward) {
        (true, _) => Method::Bidirectional,
        (false, true) => Method::Practical,
        (false, false) => Method::FwBw,
    };

    // stage 1: forward pushes on the arbitrary split
    let stage1: Vec<Vec<SourceStage>> = split
        .parts
        .par_iter()
        .map(|part| part.iter().map(|&i| source_stage(g, sources[i], params, method)).collect())
        .collect::<Result<_>>()?;
    let push_work: Vec<usize> = stage1.iter().map(|m| m.iter().map(|st| st.push.pushed_work).sum()).collect();
    let mut stages: Vec<Option<SourceStage>> = vec![None; len];
    for (part, machine) in split.parts.iter().zip(stage1) {
        for (&i, st) in part.iter().zip(machine) {
            stages[i] = Some(st);
        }
    }
    let stages: Vec<SourceStage> = stages.into_iter().map(|s| s.expect("every source pushed")).collect();
    let sigmas: Vec<SparseVec> =
        stages.iter().map(|st| st.sigma.clone().unwrap_or_else(|| SparseVec::unit(st.push.origin))).collect();
    let forward: Vec<PushResult> = stages.iter().map(|st| st.push.clone()).collect();
    let surr = if targets.is_empty() { None } else { Some(surrogate_rows(&forward, targets)?) };
    let need_surr = || surr.as_deref().ok_or_else(|| PprError::InvalidParameter("scheme needs target pushes".into()));

    // stage 2: central partition
    let mut rng = rng::stream(params.seed, TAG_PARTITION, cfg.k as u64, 0);
    let partition = match &cfg.scheme {
        Scheme::Baseline => split,
        Scheme::HeuristicMax => source_partition_max(&sigmas, cfg.k, &mut rng)?,
        Scheme::HeuristicAvg => source_partition_avg(need_surr()?, cfg.k, &mut rng)?,
        Scheme::HeuristicAvgAlt => source_partition_avg_alt(need_surr()?, cfg.k, &mut rng)?,
        Scheme::Oracle(labels) => {
            if labels.len() != len {
                return Err(PprError::DimensionMismatch(format!("{} labels for {len} sources", labels.len())));
            }
            oracle_partition(labels)
        }
    };
    if !partition.is_cover(len) {
        return Err(PprError::Precondition("partition is not a disjoint cover of S".into()));
    }

    // stage 3: shared walks per machine
    let per_machine: Vec<(Vec<Vec<f64>>, u64, f64)> = partition
        .parts
        .par_iter()
        .enumerate()
        .map(|(j, part)| {
            let start = Instant::now();
            let mine: Vec<SourceStage> = part.iter().map(|&i| stages[i].clone()).collect();
            let seed = rng::mix(params.seed, TAG_MACHINE, j as u64, 0);
            let (est, stats) = combine(g, &mine, targets, params.alpha, seed)?;
            Ok((est, stats.sampled, start.elapsed().as_secs_f64() * 1e3))
        })
        .collect::<Result<_>>()?;

    let mut estimates = if targets.is_empty() { Vec::new() } else { vec![Vec::new(); len] };
    let mut machines = Vec::with_capacity(partition.k());
    for (j, (part, (est, walks, wall))) in partition.parts.iter().zip(per_machine).enumerate() {
        if !targets.is_empty() {
            for (&i, row) in part.iter().zip(est) {
                estimates[i] = row;
            }
        }
        machines.push(MachineReport {
            machine_id: j,
            sources: part.len(),
            walks,
            push_work: push_work.get(j).copied().unwrap_or(0),
            modeled_time_ms: modeled_ms(walks, params.alpha),
            wall_time_ms: wall,
        });
    }
    let objective_srank = surr.as_deref().map(|s| objective_srank(s, &partition)).transpose()?;
    Ok(DistributedRun {
        objective_max: objective_max(&sigmas, &partition),
        objective_srank,
        total_walks: machines.iter().map(|m| m.walks).sum(),
        max_walks: machines.iter().map(|m| m.walks).max().unwrap_or(0),
        max_push_work: machines.iter().map(|m| m.push_work).max().unwrap_or(0),
        partition,
        machines,
        estimates,
    })
}

/// Backward pushes loaded from a push-table directory.
#[derive(Debug, Clone, PartialEq)]
pub struct PushTable {
    pub alpha: f64,
    pub r_max_t: f64,
    pub n: usize,
    pub results: Vec<PushResult>,
}

const INDEX_FILE: &str = "index.tsv";

fn target_file(t: usize) -> String {
    format!("target_{t}.tsv")
}

/// Writes one file per target (`node<TAB>p<TAB>r` after an `alpha r_max_t n`
/// header line) and an index listing `target<TAB>file<TAB>iterations<TAB>work`.
pub fn write_push_table(dir: &Path, results: &[PushResult], alpha: f64, r_max_t: f64) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut index = BufWriter::new(fs::File::create(dir.join(INDEX_FILE))?);
    for res in results {
        let name = target_file(res.origin);
        let mut out = BufWriter::new(fs::File::create(dir.join(&name))?);
        writeln!(out, "{alpha}\t{r_max_t}\t{}", res.n)?;
        let mut nodes: Vec<usize> = res.p.iter().chain(res.r.iter()).map(|(v, _)| v).collect();
        nodes.sort_unstable();
        nodes.dedup();
        for v in nodes {
            writeln!(out, "{v}\t{}\t{}", res.p.get(v), res.r.get(v))?;
        }
        out.flush()?;
        writeln!(index, "{}\t{name}\t{}\t{}", res.origin, res.iterations, res.pushed_work)?;
    }
    index.flush()?;
    Ok(())
}

fn parse<T: std::str::FromStr>(tok: Option<&str>, line: usize, what: &str) -> Result<T> {
    tok.and_then(|t| t.parse().ok()).ok_or_else(|| PprError::Parse { line, msg: format!("bad or missing {what}") })
}

/// Reads a directory written by [`write_push_table`], in index order.
pub fn read_push_table(dir: &Path) -> Result<PushTable> {
    let index = BufReader::new(fs::File::open(dir.join(INDEX_FILE))?);
    let mut header: Option<(f64, f64, usize)> = None;
    let mut results = Vec::new();
    for (k, line) in index.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut it = line.split('\t');
        let t: usize = parse(it.next(), k + 1, "target")?;
        let name: String = parse(it.next(), k + 1, "file name")?;
        let iterations: usize = parse(it.next(), k + 1, "iterations")?;
        let pushed_work: usize = parse(it.next(), k + 1, "work")?;
        let file = BufReader::new(fs::File::open(dir.join(&name))?);
        let mut lines = file.lines();
        let head = lines.next().ok_or(PprError::Parse { line: 1, msg: format!("{name}: empty file") })??;
        let mut h = head.split('\t');
        let this: (f64, f64, usize) =
            (parse(h.next(), 1, "alpha")?, parse(h.next(), 1, "r_max_t")?, parse(h.next(), 1, "n")?);
        match header {
            None => header = Some(this),
            Some(prev) if prev != this => {
                return Err(PprError::DimensionMismatch(format!("{name}: header differs from earlier files")))
            }
            _ => {}
        }
        let (mut p, mut r) = (Vec::new(), Vec::new());
        for (ln, rec) in lines.enumerate() {
            let rec = rec?;
            let mut f = rec.split('\t');
            let v: usize = parse(f.next(), ln + 2, "node")?;
            if v >= this.2 {
                return Err(PprError::NodeOutOfRange { node: v, n: this.2 });
            }
            p.push((v, parse::<f64>(f.next(), ln + 2, "p value")?));
            r.push((v, parse::<f64>(f.next(), ln + 2, "r value")?));
        }
        results.push(PushResult {
            origin: t,
            n: this.2,
            p: SparseVec::from_pairs(p),
            r: SparseVec::from_pairs(r),
            iterations,
            pushed_work,
        });
    }
    let (alpha, r_max_t, n) = header.ok_or_else(|| PprError::InvalidParameter("empty push table".into()))?;
    Ok(PushTable { alpha, r_max_t, n, results })
}
