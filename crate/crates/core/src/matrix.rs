//! PPR submatrix estimation from rank-one samples, plus stable rank.

use rand::Rng;
use rayon::prelude::*;

use crate::error::{PprError, Result};
use crate::estimators::EstimatorParams;
use crate::graph::Graph;
use crate::metrics::{sigma_infinity_one, sigma_max_vector};
use crate::push::{backward_push, backward_push_many, forward_push_degree_normalized, forward_push_l1, PushResult};
use crate::rng::{self, TAG_MATRIX};
use crate::sparse::{node_map, NodeMap, SparseVec};
use crate::walks::sample_walk_endpoint;

const POWER_TOL: f64 = 1e-10;
const POWER_MAX_ITERS: usize = 100_000;
const SAMPLE_BLOCK: u64 = 4096;

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(PprError::DimensionMismatch("ragged rows".into()));
        }
        Ok(Self { rows: rows.len(), cols, data: rows.concat() })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, x: f64) {
        self.data[i * self.cols + j] = x;
    }

    pub fn add(&mut self, i: usize, j: usize, x: f64) {
        self.data[i * self.cols + j] += x;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn sub(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        if (self.rows, self.cols) != (other.rows, other.cols) {
            return Err(PprError::DimensionMismatch(format!(
                "{}x{} vs {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        Ok(DenseMatrix { rows: self.rows, cols: self.cols, data })
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&x| x == 0.0)
    }

    fn mul_vec(&self, v: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.row(i).iter().zip(v).map(|(a, b)| a * b).sum();
        }
    }

    fn mul_t_vec(&self, u: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|x| *x = 0.0);
        for (i, &ui) in u.iter().enumerate() {
            for (o, a) in out.iter_mut().zip(self.row(i)) {
                *o += a * ui;
            }
        }
    }

    /// Largest singular value, by power iteration on `A^T A`.
    pub fn spectral_norm(&self) -> f64 {
        if self.is_zero() {
            return 0.0;
        }
        let start = vec![1.0 / (self.cols as f64).sqrt(); self.cols];
        let mut u = vec![0.0; self.rows];
        let apply = |v: &[f64], u: &mut [f64], out: &mut [f64]| {
            self.mul_vec(v, u);
            self.mul_t_vec(u, out);
        };
        power_iteration(
            self.cols,
            start,
            |v, out| apply(v, &mut u, out),
            || {
                (0..self.cols)
                    .max_by(|&a, &b| {
                        let na: f64 = (0..self.rows).map(|i| self.get(i, a).powi(2)).sum();
                        let nb: f64 = (0..self.rows).map(|i| self.get(i, b).powi(2)).sum();
                        na.total_cmp(&nb)
                    })
                    .unwrap_or(0)
            },
        )
        .sqrt()
    }

    /// Adds `scale * a b^T` for sparse `a`, `b`.
    fn add_outer(&mut self, a: &[(usize, f64)], b: &[(usize, f64)], scale: f64) {
        for &(i, x) in a {
            for &(j, y) in b {
                self.data[i * self.cols + j] += scale * x * y;
            }
        }
    }

    fn add_assign(&mut self, other: &DenseMatrix) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }
}

/// Dominant eigenvalue of a symmetric PSD operator. Starts from `start`; if the
/// iterate collapses to zero, restarts from basis vector `fallback()`.
fn power_iteration(
    dim: usize,
    start: Vec<f64>,
    mut apply: impl FnMut(&[f64], &mut [f64]),
    fallback: impl FnOnce() -> usize,
) -> f64 {
    let mut v = start;
    let mut w = vec![0.0; dim];
    let mut fallback = Some(fallback);
    let mut lambda = 0.0f64;
    let mut iters = 0;
    while iters < POWER_MAX_ITERS {
        apply(&v, &mut w);
        let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            match fallback.take() {
                Some(f) => {
                    v = vec![0.0; dim];
                    v[f()] = 1.0;
                    continue;
                }
                None => return 0.0,
            }
        }
        // Rayleigh quotient v^T A v with ‖v‖ = 1
        let next: f64 = v.iter().zip(&w).map(|(a, b)| a * b).sum();
        for (a, b) in v.iter_mut().zip(&w) {
            *a = b / norm;
        }
        iters += 1;
        if (next - lambda).abs() <= POWER_TOL * next.abs() {
            return next.max(lambda);
        }
        lambda = next;
    }
    lambda
}

/// `(‖A‖_F / ‖A‖_2)^2`, never below 1.
pub fn stable_rank(a: &DenseMatrix) -> Result<f64> {
    if a.is_zero() {
        return Err(PprError::ZeroMatrix);
    }
    let f = a.frobenius();
    let s = a.spectral_norm();
    Ok(((f * f) / (s * s)).max(1.0))
}

/// Stable rank of the matrix whose rows are `rows`, via its Gram matrix.
pub fn stable_rank_of_rows(rows: &[&SparseVec]) -> Result<f64> {
    let k = rows.len();
    let mut gram = DenseMatrix::zeros(k, k);
    for i in 0..k {
        for j in i..k {
            let x = rows[i].dot(rows[j]);
            gram.set(i, j, x);
            gram.set(j, i, x);
        }
    }
    let trace: f64 = (0..k).map(|i| gram.get(i, i)).sum();
    if trace == 0.0 {
        return Err(PprError::ZeroMatrix);
    }
    let start = vec![1.0 / (k as f64).sqrt(); k];
    let top = power_iteration(
        k,
        start,
        |v, out| gram.mul_vec(v, out),
        || (0..k).max_by(|&a, &b| gram.get(a, a).total_cmp(&gram.get(b, b))).unwrap_or(0),
    );
    Ok((trace / top).max(1.0))
}

/// Push outputs for sources and targets, stored column-wise.
#[derive(Debug, Clone, PartialEq)]
pub struct PushMatrices {
    pub n: usize,
    pub sources: Vec<usize>,
    pub targets: Vec<usize>,
    pub p_s: Vec<SparseVec>,
    pub r_s: Vec<SparseVec>,
    pub p_t: Vec<SparseVec>,
    pub r_t: Vec<SparseVec>,
}

pub fn build_push_matrices(fwd: &[PushResult], bwd: &[PushResult]) -> Result<PushMatrices> {
    let n = match (fwd.first(), bwd.first()) {
        (Some(a), Some(_)) => a.n,
        _ => return Err(PprError::InvalidParameter("push lists must be nonempty".into())),
    };
    if fwd.iter().chain(bwd).any(|r| r.n != n) {
        return Err(PprError::DimensionMismatch("push results over different graphs".into()));
    }
    Ok(PushMatrices {
        n,
        sources: fwd.iter().map(|r| r.origin).collect(),
        targets: bwd.iter().map(|r| r.origin).collect(),
        p_s: fwd.iter().map(|r| r.p.clone()).collect(),
        r_s: fwd.iter().map(|r| r.r.clone()).collect(),
        p_t: bwd.iter().map(|r| r.p.clone()).collect(),
        r_t: bwd.iter().map(|r| r.r.clone()).collect(),
    })
}

/// Row view `node -> [(column, value)]` of a column list.
pub fn rows_of(cols: &[SparseVec]) -> NodeMap<Vec<(usize, f64)>> {
    let mut rows: NodeMap<Vec<(usize, f64)>> = node_map();
    for (j, c) in cols.iter().enumerate() {
        for (v, x) in c.iter() {
            rows.entry(v).or_default().push((j, x));
        }
    }
    rows
}

impl PushMatrices {
    /// `P_T(S,:) + P_S^T R_T`.
    pub fn deterministic_part(&self) -> DenseMatrix {
        let rows = rows_of(&self.r_t);
        let mut out = DenseMatrix::zeros(self.sources.len(), self.targets.len());
        for (i, &s) in self.sources.iter().enumerate() {
            for (j, p) in self.p_t.iter().enumerate() {
                out.set(i, j, p.get(s));
            }
            for (v, pv) in self.p_s[i].iter() {
                if let Some(row) = rows.get(&v) {
                    for &(j, rv) in row {
                        out.add(i, j, pv * rv);
                    }
                }
            }
        }
        out
    }

    /// `srank(P_T(S,:) + P_S^T R_T)`, the runtime stand-in for `srank(Pi(S,T))`.
    pub fn surrogate_stable_rank(&self) -> Result<f64> {
        stable_rank(&self.deterministic_part())
    }

    /// Rows `sigma_s = r^s / ‖r^s‖₁`.
    pub fn source_distributions(&self) -> Result<Vec<SparseVec>> {
        self.r_s
            .iter()
            .zip(&self.sources)
            .map(|(r, s)| {
                r.normalized().ok_or_else(|| PprError::InvalidParameter(format!("source {s} has zero residual")))
            })
            .collect()
    }
}

pub fn surrogate_stable_rank(pm: &PushMatrices) -> Result<f64> {
    pm.surrogate_stable_rank()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SigmaMode {
    Avg,
    Max,
}

/// Sampling distribution over the union of residual supports.
pub fn sampling_distribution(r_s: &[SparseVec], mode: SigmaMode) -> Result<SparseVec> {
    if r_s.is_empty() {
        return Err(PprError::InvalidParameter("no source residuals".into()));
    }
    let sigmas: Vec<SparseVec> = r_s
        .iter()
        .map(|r| r.normalized().ok_or_else(|| PprError::InvalidParameter("source with zero residual".into())))
        .collect::<Result<_>>()?;
    Ok(match mode {
        SigmaMode::Avg => {
            let l = sigmas.len() as f64;
            SparseVec::from_pairs(sigmas.iter().flat_map(|s| s.iter()).map(|(v, x)| (v, x / l)).collect())
        }
        SigmaMode::Max => {
            let m = sigma_max_vector(&sigmas);
            let total = m.l1();
            m.scaled(1.0 / total)
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixMode {
    Avg,
    Max,
    /// No forward push; sources sampled uniformly; independent backward pushes.
    Baseline,
}

impl MatrixMode {
    pub fn tag(self) -> &'static str {
        match self {
            MatrixMode::Avg => "avg",
            MatrixMode::Max => "max",
            MatrixMode::Baseline => "baseline",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MatrixBudget {
    Fixed(u64),
    /// Sample count guaranteeing `‖Pi - Pi_hat‖_2 <= eps max(‖Pi‖_2, 1)` w.p. `1 - p_fail`.
    /// `srank` is the stable rank used by the avg mode; the surrogate when `None`.
    Theorem {
        eps: f64,
        p_fail: f64,
        srank: Option<f64>,
    },
    /// `l`, `‖Σ‖∞,1` or `sqrt(l srank)` times `c r_max_t / delta`.
    Practical {
        srank: Option<f64>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatrixOptions {
    pub mode: MatrixMode,
    pub budget: MatrixBudget,
    /// Use the degree-normalized forward push (threshold `r_tilde_max_s`).
    pub practical_forward: bool,
    pub clamp_negative: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PprMatrixEstimate {
    pub sources: Vec<usize>,
    pub targets: Vec<usize>,
    pub values: DenseMatrix,
    pub w_used: u64,
    pub mode: MatrixMode,
    pub sigma_inf1: f64,
    pub srank_surrogate: Option<f64>,
    /// The budget's accuracy statement does not cover this configuration.
    pub outside_theorem: bool,
    /// `w = 0`: only `P_T(S,:) + P_S^T R_T` was returned.
    pub deterministic_only: bool,
    pub forward_iterations: usize,
    pub backward_iterations: usize,
    pub merge_count: usize,
}

fn log_factor(l: usize, eps: f64, p_fail: f64) -> f64 {
    (2.0 * l as f64 / p_fail).ln() * (6.0 + 4.0 * eps) / (3.0 * eps * eps)
}

/// Walk count for the avg mode guarantee.
pub fn theorem_walks_avg(l: usize, srank: f64, r_s: f64, r_t: f64, eps: f64, p_fail: f64) -> f64 {
    (l as f64).powi(2) * srank.sqrt() * r_s * r_t * log_factor(l, eps, p_fail)
}

/// Walk count for the max mode guarantee.
pub fn theorem_walks_max(l: usize, sigma_inf1: f64, r_s: f64, r_t: f64, eps: f64, p_fail: f64) -> f64 {
    (l as f64).powf(1.5) * sigma_inf1 * r_s * r_t * log_factor(l, eps, p_fail)
}

/// Estimates `Pi(S,T)` for `|S| = |T|`.
pub fn approx_matrix(
    g: &Graph,
    sources: &[usize],
    targets: &[usize],
    params: &EstimatorParams,
    opts: &MatrixOptions,
) -> Result<PprMatrixEstimate> {
    params.validate()?;
    let l = sources.len();
    if l == 0 || l != targets.len() {
        return Err(PprError::InvalidParameter(format!(
            "need |S| = |T| >= 1, got {} and {}",
            sources.len(),
            targets.len()
        )));
    }
    for &s in sources {
        g.check_node(s)?;
    }
    let baseline = opts.mode == MatrixMode::Baseline;
    let fwd: Vec<PushResult> = sources
        .par_iter()
        .map(|&s| {
            if baseline {
                forward_push_l1(g, s, params.alpha, 1.0)
            } else if opts.practical_forward {
                forward_push_degree_normalized(g, s, params.alpha, params.r_tilde_max_s)
            } else {
                forward_push_l1(g, s, params.alpha, params.r_max_s)
            }
        })
        .collect::<Result<_>>()?;
    let (bwd, merge_count) = if baseline {
        let res: Vec<PushResult> =
            targets.par_iter().map(|&t| backward_push(g, t, params.alpha, params.r_max_t)).collect::<Result<_>>()?;
        (res, 0)
    } else {
        let (res, stats) = backward_push_many(g, targets, params.alpha, params.r_max_t)?;
        (res, stats.merge_count)
    };
    let pm = build_push_matrices(&fwd, &bwd)?;
    let det = pm.deterministic_part();
    let srank_surrogate = stable_rank(&det).ok();
    let sigmas = pm.source_distributions()?;
    let sigma_inf1 = sigma_infinity_one(&sigmas);
    let sigma =
        sampling_distribution(&pm.r_s, if opts.mode == MatrixMode::Avg { SigmaMode::Avg } else { SigmaMode::Max })?;

    let r_s = if baseline { 1.0 } else { params.r_max_s };
    let srank_or_surrogate = |given: Option<f64>| given.or(srank_surrogate).unwrap_or(1.0);
    let (w_real, outside_theorem) = match opts.budget {
        MatrixBudget::Fixed(w) => (w as f64, false),
        MatrixBudget::Theorem { eps, p_fail, srank } => {
            let w = match opts.mode {
                MatrixMode::Avg => theorem_walks_avg(l, srank_or_surrogate(srank), r_s, params.r_max_t, eps, p_fail),
                _ => theorem_walks_max(l, sigma_inf1, r_s, params.r_max_t, eps, p_fail),
            };
            (w, opts.practical_forward && !baseline)
        }
        MatrixBudget::Practical { srank } => {
            let base = params.c * params.r_max_t / params.delta;
            let mult = match opts.mode {
                MatrixMode::Baseline => l as f64,
                MatrixMode::Max => sigma_inf1,
                MatrixMode::Avg => (l as f64 * srank_or_surrogate(srank)).sqrt(),
            };
            (mult * base, true)
        }
    };
    let w = params.walks.unwrap_or(w_real.ceil() as u64);

    let mut values = det.clone();
    if w > 0 {
        let acc = sample_sum(g, &pm, &sigma, w, params.alpha, params.seed);
        for i in 0..l {
            for j in 0..l {
                values.add(i, j, acc.get(i, j) / w as f64);
            }
        }
    }
    if opts.clamp_negative {
        for x in values.data.iter_mut() {
            *x = x.max(0.0);
        }
    }
    Ok(PprMatrixEstimate {
        sources: sources.to_vec(),
        targets: targets.to_vec(),
        values,
        w_used: w,
        mode: opts.mode,
        sigma_inf1,
        srank_surrogate,
        outside_theorem,
        deterministic_only: w == 0,
        forward_iterations: fwd.iter().map(|r| r.iterations).sum(),
        backward_iterations: bwd.iter().map(|r| r.iterations).sum(),
        merge_count,
    })
}

/// Sum of `w` samples `X_i = R_S^T diag(1/sigma) e_mu e_nu^T R_T`.
/// Samples are drawn in fixed blocks with one stream per block and summed in block order.
pub fn sample_sum(g: &Graph, pm: &PushMatrices, sigma: &SparseVec, w: u64, alpha: f64, seed: u64) -> DenseMatrix {
    let l_s = pm.sources.len();
    let l_t = pm.targets.len();
    let rs_rows = rows_of(&pm.r_s);
    let rt_rows = rows_of(&pm.r_t);
    let support: Vec<usize> = sigma.iter().map(|(v, _)| v).collect();
    let mut cumulative = Vec::with_capacity(support.len());
    let mut acc = 0.0;
    for (_, x) in sigma.iter() {
        acc += x;
        cumulative.push(acc);
    }
    let empty: Vec<(usize, f64)> = Vec::new();
    let blocks = w.div_ceil(SAMPLE_BLOCK);
    let partials: Vec<DenseMatrix> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = rng::stream(seed, TAG_MATRIX, b, 0);
            let mut out = DenseMatrix::zeros(l_s, l_t);
            let count = SAMPLE_BLOCK.min(w - b * SAMPLE_BLOCK);
            for _ in 0..count {
                let u = rng.random::<f64>() * acc;
                let k = cumulative.partition_point(|&c| c <= u).min(support.len() - 1);
                let mu = support[k];
                let nu = sample_walk_endpoint(g, mu, alpha, &mut rng);
                let b_row = rt_rows.get(&nu).unwrap_or(&empty);
                if b_row.is_empty() {
                    continue;
                }
                let a_row = rs_rows.get(&mu).unwrap_or(&empty);
                out.add_outer(a_row, b_row, 1.0 / sigma.get(mu));
            }
            out
        })
        .collect();
    let mut total = DenseMatrix::zeros(l_s, l_t);
    for p in &partials {
        total.add_assign(p);
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stable_rank_examples() {
        let rank_one = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0], vec![3.0, 6.0]]).unwrap();
        assert!((stable_rank(&rank_one).unwrap() - 1.0).abs() < 1e-9);
        let id = DenseMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert!((stable_rank(&id).unwrap() - 2.0).abs() < 1e-12);
        let d = DenseMatrix::from_rows(&[vec![2.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert!((stable_rank(&d).unwrap() - 1.25).abs() < 1e-9);
        assert!(matches!(stable_rank(&DenseMatrix::zeros(2, 2)), Err(PprError::ZeroMatrix)));
    }

    #[test]
    fn start_vector_orthogonal_to_top_direction() {
        let a = DenseMatrix::from_rows(&[vec![1.0, -1.0]]).unwrap();
        assert!((a.spectral_norm() - 2f64.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn stable_rank_of_sparse_rows() {
        let a = SparseVec::from_pairs(vec![(0, 1.0)]);
        let b = SparseVec::from_pairs(vec![(0, 1.0), (1, 1.0)]);
        let s = stable_rank_of_rows(&[&a, &b]).unwrap();
        assert!((s - 3.0 / ((3.0 + 5f64.sqrt()) / 2.0)).abs() < 1e-9);
    }

    #[test]
    fn sampling_distribution_examples() {
        let a = SparseVec::from_pairs(vec![(0, 1.0)]);
        let b = SparseVec::from_pairs(vec![(1, 1.0)]);
        for mode in [SigmaMode::Avg, SigmaMode::Max] {
            let s = sampling_distribution(&[a.clone(), b.clone()], mode).unwrap();
            assert_eq!(s.entries(), &[(0, 0.5), (1, 0.5)]);
        }
        let c = SparseVec::from_pairs(vec![(0, 0.5), (1, 0.5)]);
        let d = SparseVec::from_pairs(vec![(1, 0.5), (2, 0.5)]);
        let s = sampling_distribution(&[c, d], SigmaMode::Max).unwrap();
        for (_, x) in s.iter() {
            assert!((x - 1.0 / 3.0).abs() < 1e-15);
        }
        assert!(sampling_distribution(&[SparseVec::new()], SigmaMode::Avg).is_err());
    }

    #[test]
    fn theorem_budgets_scale() {
        let max_identical = theorem_walks_max(16, 1.0, 1.0, 1.0, 0.5, 0.1);
        let max_disjoint = theorem_walks_max(16, 16.0, 1.0, 1.0, 0.5, 0.1);
        assert!((max_disjoint / max_identical - 16.0).abs() < 1e-12);
        let avg = theorem_walks_avg(16, 1.0, 1.0, 1.0, 0.5, 0.1);
        assert!((avg / max_identical - 4.0).abs() < 1e-12);
    }
}
