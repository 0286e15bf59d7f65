//! Clustering quantities: `‖Σ‖∞,1`, `c_T`, and the community-sweep harness.

use rand::seq::index::sample;
use rayon::prelude::*;

use crate::error::{PprError, Result};
use crate::graph::{conductance, exact_contributions, Graph};
use crate::matrix::{build_push_matrices, stable_rank, DenseMatrix};
use crate::push::{backward_push, backward_push_many, forward_push_degree_normalized, PushResult};
use crate::rng::{self, TAG_SAMPLE};
use crate::sparse::SparseVec;

/// Rows `sigma_s = r^s / ‖r^s‖₁` for a source set.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceResidualMatrix {
    rows: Vec<SparseVec>,
}

impl SourceResidualMatrix {
    /// Normalizes each residual; fails on an all-zero residual.
    pub fn from_residuals(residuals: &[SparseVec]) -> Result<Self> {
        let rows = residuals
            .iter()
            .map(|r| r.normalized().ok_or_else(|| PprError::InvalidParameter("zero residual row".into())))
            .collect::<Result<_>>()?;
        Ok(Self { rows })
    }

    pub fn rows(&self) -> &[SparseVec] {
        &self.rows
    }

    pub fn infinity_one(&self) -> f64 {
        sigma_infinity_one(&self.rows)
    }
}

/// Elementwise maximum of sparse nonnegative rows.
pub fn sigma_max_vector(rows: &[SparseVec]) -> SparseVec {
    let mut all: Vec<(usize, f64)> = rows.iter().flat_map(|r| r.iter()).collect();
    all.sort_by_key(|&(v, _)| v);
    let mut out: Vec<(usize, f64)> = Vec::new();
    for (v, x) in all {
        match out.last_mut() {
            Some(last) if last.0 == v => last.1 = last.1.max(x),
            _ => out.push((v, x)),
        }
    }
    SparseVec::from_pairs(out)
}

/// `sum_v max_s sigma_s(v)`.
pub fn sigma_infinity_one(rows: &[SparseVec]) -> f64 {
    sigma_max_vector(rows).l1()
}

/// `sum_i |{j < i : pi_{t_j}(t_i) > r_max_t}|` with `lookup(source, target)`.
pub fn target_clustering_ct(lookup: impl Fn(usize, usize) -> f64, targets: &[usize], r_max_t: f64) -> usize {
    let mut count = 0;
    for (i, &ti) in targets.iter().enumerate() {
        for &tj in &targets[..i] {
            if lookup(tj, ti) > r_max_t {
                count += 1;
            }
        }
    }
    count
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CtProxy {
    /// Pairs certified above the threshold.
    pub definite: usize,
    /// Pairs whose push window straddles the threshold.
    pub ambiguous: usize,
}

/// `c_T` from push output only. `results[i]` must be a backward push for target `i`
/// (in order). A pair is counted when `p^{t_i}(t_j) > r_max_t`, settled false when
/// `p^{t_i}(t_j) + ‖r^{t_i}‖∞ <= r_max_t`, and otherwise checked against the optional
/// tighter `reference` pushes before being reported ambiguous.
pub fn ct_push_proxy(results: &[PushResult], r_max_t: f64, reference: Option<&[PushResult]>) -> CtProxy {
    let classify = |res: &PushResult, tj: usize| {
        let p = res.p.get(tj);
        if p > r_max_t {
            Some(true)
        } else if p + res.r.linf() <= r_max_t {
            Some(false)
        } else {
            None
        }
    };
    let mut out = CtProxy::default();
    for (i, res) in results.iter().enumerate() {
        for tj in results[..i].iter().map(|r| r.origin) {
            let verdict = classify(res, tj).or_else(|| reference.and_then(|refs| classify(&refs[i], tj)));
            match verdict {
                Some(true) => out.definite += 1,
                Some(false) => {}
                None => out.ambiguous += 1,
            }
        }
    }
    out
}

fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation with average ranks for ties.
/// `None` when lengths differ, fewer than two points, or either side is constant.
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let (rx, ry) = (average_ranks(x), average_ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}

/// Where `c_T` comes from in the community sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CtSource {
    /// Exact columns by power iteration. Also yields the exact `srank(Pi(S,T))`.
    Oracle { tol: f64 },
    /// Push proxy, with optional reference pushes at threshold `eta`.
    Proxy { eta: Option<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolConfig {
    pub set_size: usize,
    /// Numbers of communities to draw from; each level picks that many communities.
    pub levels: Vec<usize>,
    pub seeds: Vec<u64>,
    pub alpha: f64,
    pub r_tilde_max_s: f64,
    pub r_max_t: f64,
    pub ct_source: CtSource,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationRow {
    pub level: usize,
    pub seed: u64,
    pub phi_s: f64,
    pub sigma_inf1: f64,
    pub phi_t: f64,
    pub c_t: usize,
    pub c_t_ambiguous: usize,
    /// `srank(Pi(S,T))` with the oracle, else the surrogate.
    pub srank: f64,
    pub srank_surrogate: f64,
}

/// Draws `S` and `T` (independently, same size) from the union of `level` random communities.
pub fn sample_community_sets(g: &Graph, level: usize, size: usize, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    let labels = g.labels().ok_or_else(|| PprError::InvalidParameter("graph has no community labels".into()))?;
    let k = labels.iter().copied().max().map_or(0, |m| m + 1);
    if level == 0 || level > k {
        return Err(PprError::InvalidParameter(format!("level {level} outside 1..={k}")));
    }
    let mut rng = rng::stream(seed, TAG_SAMPLE, level as u64, 0);
    let mut chosen = vec![false; k];
    for c in sample(&mut rng, k, level) {
        chosen[c] = true;
    }
    let pool: Vec<usize> = (0..g.n()).filter(|&v| chosen[labels[v]]).collect();
    if pool.len() < size {
        return Err(PprError::InvalidParameter(format!("{} nodes in pool, need {size}", pool.len())));
    }
    let mut pick = || {
        let mut s: Vec<usize> = sample(&mut rng, pool.len(), size).into_iter().map(|i| pool[i]).collect();
        s.sort_unstable();
        s
    };
    let s = pick();
    let t = pick();
    Ok((s, t))
}

/// One row per `(level, seed)` of the community sweep.
pub fn clustering_correlation_protocol(g: &Graph, cfg: &ProtocolConfig) -> Result<Vec<CorrelationRow>> {
    let mut rows = Vec::new();
    for &level in &cfg.levels {
        for &seed in &cfg.seeds {
            let (s, t) = sample_community_sets(g, level, cfg.set_size, seed)?;
            rows.push(correlation_row(g, cfg, level, seed, &s, &t)?);
        }
    }
    Ok(rows)
}

/// Conductances, `‖Σ‖∞,1`, `c_T` and stable ranks for one `(S, T)`.
pub fn correlation_row(
    g: &Graph,
    cfg: &ProtocolConfig,
    level: usize,
    seed: u64,
    s: &[usize],
    t: &[usize],
) -> Result<CorrelationRow> {
    let fwd: Vec<PushResult> = s
        .par_iter()
        .map(|&v| forward_push_degree_normalized(g, v, cfg.alpha, cfg.r_tilde_max_s))
        .collect::<Result<_>>()?;
    let (bwd, _) = backward_push_many(g, t, cfg.alpha, cfg.r_max_t)?;
    let pm = build_push_matrices(&fwd, &bwd)?;
    let sigma = SourceResidualMatrix::from_residuals(&pm.r_s)?;
    let srank_surrogate = stable_rank(&pm.deterministic_part())?;
    let (c_t, c_t_ambiguous, srank) = match cfg.ct_source {
        CtSource::Oracle { tol } => {
            // column i holds pi_v(t_i) for every v
            let cols: Vec<Vec<f64>> =
                t.par_iter().map(|&ti| exact_contributions(g, ti, cfg.alpha, tol)).collect::<Result<_>>()?;
            let pos = |v: usize| t.iter().position(|&x| x == v).expect("target in set");
            let ct = target_clustering_ct(|src, tgt| cols[pos(tgt)][src], t, cfg.r_max_t);
            let pi =
                DenseMatrix::from_rows(&s.iter().map(|&v| cols.iter().map(|c| c[v]).collect()).collect::<Vec<_>>())?;
            (ct, 0, stable_rank(&pi)?)
        }
        CtSource::Proxy { eta } => {
            let reference = match eta {
                Some(e) => {
                    Some(t.par_iter().map(|&ti| backward_push(g, ti, cfg.alpha, e)).collect::<Result<Vec<_>>>()?)
                }
                None => None,
            };
            let proxy = ct_push_proxy(&bwd, cfg.r_max_t, reference.as_deref());
            (proxy.definite, proxy.ambiguous, srank_surrogate)
        }
    };
    Ok(CorrelationRow {
        level,
        seed,
        phi_s: conductance(g, s)?,
        sigma_inf1: sigma.infinity_one(),
        phi_t: conductance(g, t)?,
        c_t,
        c_t_ambiguous,
        srank,
        srank_surrogate,
    })
}
