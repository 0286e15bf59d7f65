//! Scalar PPR estimators combining push and random walks.
//!
//! Every estimator evaluates `p^t(s) + <p^s, r^t> + ‖r^s‖₁ * mean_i r^t(U_i)`
//! where `U_i` are endpoints of walks started from `sigma_s = r^s / ‖r^s‖₁`.

use rayon::prelude::*;

use crate::error::{PprError, Result};
use crate::graph::Graph;
use crate::matrix::{build_push_matrices, rows_of, stable_rank, DenseMatrix};
use crate::metrics::{ct_push_proxy, sigma_infinity_one};
use crate::push::{backward_push, backward_push_many, forward_push_degree_normalized, forward_push_l1, PushResult};
use crate::rng::{self, TAG_COUNTS};
use crate::sparse::{NodeMap, SparseVec};
use crate::walks::{build_walk_plan, execute_walk_plan, multinomial, StartCounts};

pub const DEFAULT_ALPHA: f64 = 0.2;
pub const DEFAULT_SEED: u64 = 0x5eed_2024;
pub const DEFAULT_EPS: f64 = 0.25;
pub const DEFAULT_P_FAIL: f64 = 0.05;

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorParams {
    pub alpha: f64,
    pub delta: f64,
    pub eps: f64,
    pub p_fail: f64,
    pub r_max_s: f64,
    pub r_max_t: f64,
    pub r_tilde_max_s: f64,
    pub c: f64,
    /// Overrides the walk budget `w` derived from `c`.
    pub walks: Option<u64>,
    pub seed: u64,
}

impl EstimatorParams {
    pub fn new(delta: f64) -> Self {
        Self {
            alpha: DEFAULT_ALPHA,
            delta,
            eps: DEFAULT_EPS,
            p_fail: DEFAULT_P_FAIL,
            r_max_s: 0.5,
            r_max_t: 1e-3,
            r_tilde_max_s: 1e-3,
            c: 7.0,
            walks: None,
            seed: DEFAULT_SEED,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let open = |name: &str, x: f64| {
            if x > 0.0 && x < 1.0 {
                Ok(())
            } else {
                Err(PprError::InvalidParameter(format!("{name} = {x} outside (0, 1)")))
            }
        };
        let half_open = |name: &str, x: f64| {
            if x > 0.0 && x <= 1.0 {
                Ok(())
            } else {
                Err(PprError::InvalidParameter(format!("{name} = {x} outside (0, 1]")))
            }
        };
        open("alpha", self.alpha)?;
        open("delta", self.delta)?;
        open("eps", self.eps)?;
        open("p_fail", self.p_fail)?;
        half_open("r_max_s", self.r_max_s)?;
        open("r_max_t", self.r_max_t)?;
        if !(self.r_tilde_max_s > 0.0) {
            return Err(PprError::InvalidParameter("r_tilde_max_s must be positive".into()));
        }
        if !(self.c > 0.0) {
            return Err(PprError::InvalidParameter("c must be positive".into()));
        }
        Ok(())
    }

    /// `w = c r_max_s r_max_t / delta`, rounded up.
    pub fn walks_l1(&self) -> u64 {
        self.walks.unwrap_or_else(|| (self.c * self.r_max_s * self.r_max_t / self.delta).ceil() as u64)
    }

    /// `w = c r_max_t / delta` before rounding.
    pub fn walks_practical_real(&self) -> f64 {
        self.walks.map_or(self.c * self.r_max_t / self.delta, |w| w as f64)
    }

    pub fn walks_practical(&self) -> u64 {
        self.walks_practical_real().ceil() as u64
    }
}

/// Smallest `c` for which the relative-error guarantee of the push-walk estimator holds.
pub fn theoretical_c(eps: f64, p_fail: f64) -> f64 {
    3.0 * (2.0 * std::f64::consts::E).powf(1.0 / 3.0) * (2.0 / p_fail).ln() / eps.powf(7.0 / 3.0)
}

/// Smallest `c` for which the backward-push-only estimator's guarantee holds.
pub fn bidirectional_c(eps: f64, p_fail: f64) -> f64 {
    3.0 * (2.0 / p_fail).ln() / (eps * eps)
}

/// Named parameter presets for the practical and bidirectional estimators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Profile {
    pub name: &'static str,
    pub r_tilde_max_s: f64,
    pub r_max_t: f64,
    pub c: f64,
    pub bidir_r_max_t: f64,
    pub bidir_c: f64,
    /// `delta = delta_scale / n`.
    pub delta_scale: f64,
}

pub const PROFILES: [Profile; 9] = [
    Profile {
        name: "direct-er",
        r_tilde_max_s: 1e-3,
        r_max_t: 3e-3,
        c: 7.0,
        bidir_r_max_t: 1.7e-3,
        bidir_c: 10.0,
        delta_scale: 1.0,
    },
    Profile {
        name: "direct-sbm",
        r_tilde_max_s: 1e-3,
        r_max_t: 4e-3,
        c: 7.0,
        bidir_r_max_t: 3e-3,
        bidir_c: 10.0,
        delta_scale: 1.0,
    },
    Profile {
        name: "com-amazon",
        r_tilde_max_s: 3.6e-3,
        r_max_t: 18.2e-3,
        c: 12.0,
        bidir_r_max_t: 7.4e-3,
        bidir_c: 13.0,
        delta_scale: 10.0,
    },
    Profile {
        name: "com-dblp",
        r_tilde_max_s: 2.9e-3,
        r_max_t: 14.3e-3,
        c: 13.0,
        bidir_r_max_t: 6e-3,
        bidir_c: 15.0,
        delta_scale: 10.0,
    },
    Profile {
        name: "roadnet-pa",
        r_tilde_max_s: 15.1e-3,
        r_max_t: 34.8e-3,
        c: 6.0,
        bidir_r_max_t: 12.8e-3,
        bidir_c: 6.0,
        delta_scale: 10.0,
    },
    Profile {
        name: "slashdot",
        r_tilde_max_s: 2e-3,
        r_max_t: 12.2e-3,
        c: 7.0,
        bidir_r_max_t: 4.2e-3,
        bidir_c: 17.0,
        delta_scale: 10.0,
    },
    Profile {
        name: "web-berkstan",
        r_tilde_max_s: 6.9e-3,
        r_max_t: 23e-3,
        c: 3.0,
        bidir_r_max_t: 11.6e-3,
        bidir_c: 3.0,
        delta_scale: 10.0,
    },
    Profile {
        name: "web-google",
        r_tilde_max_s: 4.5e-3,
        r_max_t: 17.6e-3,
        c: 8.0,
        bidir_r_max_t: 6.7e-3,
        bidir_c: 11.0,
        delta_scale: 10.0,
    },
    Profile {
        name: "wikitalk",
        r_tilde_max_s: 2.3e-3,
        r_max_t: 7.5e-3,
        c: 8.0,
        bidir_r_max_t: 2.9e-3,
        bidir_c: 20.0,
        delta_scale: 10.0,
    },
];

pub fn profile(name: &str) -> Option<&'static Profile> {
    let key = name.to_ascii_lowercase();
    PROFILES.iter().find(|p| p.name == key)
}

impl Profile {
    /// Parameters for the practical push-walk estimator on an `n`-node graph.
    pub fn practical_params(&self, n: usize) -> EstimatorParams {
        EstimatorParams {
            r_tilde_max_s: self.r_tilde_max_s,
            r_max_t: self.r_max_t,
            c: self.c,
            ..EstimatorParams::new(self.delta_scale / n as f64)
        }
    }

    /// Parameters for the backward-push-only estimator.
    pub fn bidirectional_params(&self, n: usize) -> EstimatorParams {
        EstimatorParams {
            r_max_s: 1.0,
            r_max_t: self.bidir_r_max_t,
            c: self.bidir_c,
            ..EstimatorParams::new(self.delta_scale / n as f64)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// Forward push to `‖r‖₁ <= r_max_s`, then `w` walks.
    FwBw,
    /// Degree-normalized forward push, then `ceil(w ‖r‖₁)` walks.
    Practical,
    /// No forward push; `w` walks from the source.
    Bidirectional,
}

impl Method {
    pub fn tag(self) -> &'static str {
        match self {
            Method::FwBw => "fwbw",
            Method::Practical => "fwbw-practical",
            Method::Bidirectional => "bidirectional",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairEstimate {
    pub value: f64,
    pub walks_used: u64,
    pub push_iterations: usize,
    pub method: Method,
}

/// Forward stage for one source: push output, walk distribution and walk count.
#[derive(Debug, Clone)]
pub struct SourceStage {
    pub push: PushResult,
    pub sigma: Option<SparseVec>,
    pub mass: f64,
    pub walks: u64,
}

pub fn source_stage(g: &Graph, s: usize, params: &EstimatorParams, method: Method) -> Result<SourceStage> {
    let push = match method {
        Method::FwBw => forward_push_l1(g, s, params.alpha, params.r_max_s)?,
        Method::Practical => forward_push_degree_normalized(g, s, params.alpha, params.r_tilde_max_s)?,
        Method::Bidirectional => forward_push_l1(g, s, params.alpha, 1.0)?,
    };
    let mass = push.r.l1();
    let sigma = push.r.normalized();
    let walks = match method {
        Method::FwBw => params.walks_l1(),
        Method::Practical => (params.walks_practical_real() * mass).ceil() as u64,
        Method::Bidirectional => params.walks_practical(),
    };
    Ok(SourceStage { push, sigma, mass, walks })
}

/// Residual rows: for each node, the `(target index, r^t(node))` pairs.
pub fn residual_rows(targets: &[PushResult]) -> NodeMap<Vec<(usize, f64)>> {
    let cols: Vec<SparseVec> = targets.iter().map(|t| t.r.clone()).collect();
    rows_of(&cols)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct WalkStats {
    /// Walks sampled after sharing.
    pub sampled: u64,
    /// Walks independent per-source sampling would need.
    pub separate: u64,
}

/// Combines source stages and target pushes into an `|S| x |T|` table.
/// All sources share one walk plan.
pub fn combine(
    g: &Graph,
    sources: &[SourceStage],
    targets: &[PushResult],
    alpha: f64,
    seed: u64,
) -> Result<(Vec<Vec<f64>>, WalkStats)> {
    let counts: Vec<StartCounts> = sources
        .iter()
        .map(|st| match &st.sigma {
            Some(sigma) => {
                let mut rng = rng::stream(seed, TAG_COUNTS, st.push.origin as u64, 0);
                multinomial(sigma, st.walks, &mut rng)
            }
            None => Ok(Vec::new()),
        })
        .collect::<Result<_>>()?;
    let plan = build_walk_plan(counts);
    let table = execute_walk_plan(g, &plan, alpha, seed)?;
    let rows = residual_rows(targets);
    let empty: Vec<(usize, f64)> = Vec::new();
    let row = |v: usize| rows.get(&v).unwrap_or(&empty);

    let estimates = sources
        .par_iter()
        .zip(plan.per_source.par_iter())
        .map(|(st, counts)| {
            let s = st.push.origin;
            let mut dot = vec![0.0; targets.len()];
            for (v, pv) in st.push.p.iter() {
                for &(j, rv) in row(v) {
                    dot[j] += pv * rv;
                }
            }
            let mut walk = vec![0.0; targets.len()];
            for u in table.source_endpoints(counts) {
                for &(j, rv) in row(u) {
                    walk[j] += rv;
                }
            }
            let scale = if st.walks > 0 { st.mass / st.walks as f64 } else { 0.0 };
            targets.iter().enumerate().map(|(j, t)| t.p.get(s) + dot[j] + scale * walk[j]).collect()
        })
        .collect();
    Ok((estimates, WalkStats { sampled: plan.total_walks(), separate: plan.separate_walks() }))
}

fn pair(g: &Graph, s: usize, t: usize, params: &EstimatorParams, method: Method) -> Result<PairEstimate> {
    params.validate()?;
    g.check_node(s)?;
    let target = backward_push(g, t, params.alpha, params.r_max_t)?;
    let source = source_stage(g, s, params, method)?;
    let iterations = target.iterations + source.push.iterations;
    let (table, stats) =
        combine(g, std::slice::from_ref(&source), std::slice::from_ref(&target), params.alpha, params.seed)?;
    Ok(PairEstimate { value: table[0][0], walks_used: stats.sampled, push_iterations: iterations, method })
}

/// Forward push to `‖r‖₁ <= r_max_s`, backward push, and `w = c r_max_s r_max_t / delta` walks.
pub fn fwbw_mcmc_single(g: &Graph, s: usize, t: usize, params: &EstimatorParams) -> Result<PairEstimate> {
    pair(g, s, t, params, Method::FwBw)
}

/// Degree-normalized forward push with `ceil(w ‖r‖₁)` walks, `w = c r_max_t / delta`.
pub fn fwbw_mcmc_practical(g: &Graph, s: usize, t: usize, params: &EstimatorParams) -> Result<PairEstimate> {
    pair(g, s, t, params, Method::Practical)
}

/// Backward push plus `w = c r_max_t / delta` walks from the source.
pub fn bidirectional_ppr(g: &Graph, s: usize, t: usize, params: &EstimatorParams) -> Result<PairEstimate> {
    pair(g, s, t, params, Method::Bidirectional)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ManyMode {
    /// L1 forward pushes, shared walks, merged backward pushes.
    Shared,
    /// Degree-normalized forward pushes, shared walks, merged backward pushes.
    SharedPractical,
    /// Independent walks per source and independent backward pushes per target.
    Baseline,
}

impl ManyMode {
    pub fn tag(self) -> &'static str {
        match self {
            ManyMode::Shared => "shared",
            ManyMode::SharedPractical => "shared-practical",
            ManyMode::Baseline => "baseline",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManyPairStats {
    pub walks: WalkStats,
    pub forward_iterations: usize,
    pub backward_iterations: usize,
    pub merge_count: usize,
    pub sigma_inf1: f64,
    /// Pairs `j < i` certified to have `pi_{t_j}(t_i) > r_max_t` from push output.
    pub c_t_lower: usize,
    pub srank_surrogate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManyPairEstimate {
    pub sources: Vec<usize>,
    pub targets: Vec<usize>,
    /// `values[i][j]` estimates `pi_{sources[i]}(targets[j])`.
    pub values: Vec<Vec<f64>>,
    pub stats: ManyPairStats,
}

/// Estimates every pair in `S x T`.
pub fn estimate_many_pairs(
    g: &Graph,
    sources: &[usize],
    targets: &[usize],
    params: &EstimatorParams,
    mode: ManyMode,
) -> Result<ManyPairEstimate> {
    params.validate()?;
    if sources.is_empty() || targets.is_empty() {
        return Err(PprError::InvalidParameter("source and target sets must be nonempty".into()));
    }
    for &s in sources {
        g.check_node(s)?;
    }
    let method = match mode {
        ManyMode::Shared => Method::FwBw,
        ManyMode::SharedPractical => Method::Practical,
        ManyMode::Baseline => Method::Bidirectional,
    };
    let stages: Vec<SourceStage> =
        sources.par_iter().map(|&s| source_stage(g, s, params, method)).collect::<Result<_>>()?;
    let (backward, merge_count) = match mode {
        ManyMode::Baseline => {
            let res: Vec<PushResult> = targets
                .par_iter()
                .map(|&t| backward_push(g, t, params.alpha, params.r_max_t))
                .collect::<Result<_>>()?;
            (res, 0)
        }
        _ => {
            let (res, stats) = backward_push_many(g, targets, params.alpha, params.r_max_t)?;
            (res, stats.merge_count)
        }
    };
    let (values, walks) = combine(g, &stages, &backward, params.alpha, params.seed)?;

    let sigmas: Vec<SparseVec> = stages.iter().filter_map(|st| st.sigma.clone()).collect();
    let sigma_inf1 = if sigmas.is_empty() { 0.0 } else { sigma_infinity_one(&sigmas) };
    let deterministic = deterministic_table(&stages, &backward)?;
    let srank_surrogate = stable_rank(&deterministic).ok();
    let stats = ManyPairStats {
        walks,
        forward_iterations: stages.iter().map(|st| st.push.iterations).sum(),
        backward_iterations: backward.iter().map(|r| r.iterations).sum(),
        merge_count,
        sigma_inf1,
        c_t_lower: ct_push_proxy(&backward, params.r_max_t, None).definite,
        srank_surrogate,
    };
    Ok(ManyPairEstimate { sources: sources.to_vec(), targets: targets.to_vec(), values, stats })
}

/// `P_T(S,:) + P_S^T R_T` for the given stages.
pub fn deterministic_table(stages: &[SourceStage], targets: &[PushResult]) -> Result<DenseMatrix> {
    let fwd: Vec<PushResult> = stages.iter().map(|st| st.push.clone()).collect();
    Ok(build_push_matrices(&fwd, targets)?.deterministic_part())
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimalParameters {
    /// Equal forward and backward thresholds minimizing worst-case cost.
    pub r_max: f64,
    /// Backward threshold of the practical variant.
    pub r_max_t_practical: f64,
    /// Degree-normalized forward threshold of the practical variant.
    pub r_tilde_max_s_practical: f64,
    /// Walks per pair at the worst-case thresholds with the theoretical `c`.
    pub walks: f64,
    /// `m delta < log(1/p_fail) / eps^2`; when false the thresholds were clamped.
    pub precondition_holds: bool,
    pub clamped: bool,
}

/// Thresholds balancing push cost against walk cost.
pub fn optimal_parameters(m: usize, n: usize, delta: f64, eps: f64, p_fail: f64) -> Result<OptimalParameters> {
    for (name, x) in [("delta", delta), ("eps", eps), ("p_fail", p_fail)] {
        if !(x > 0.0 && x < 1.0) {
            return Err(PprError::InvalidParameter(format!("{name} = {x} outside (0, 1)")));
        }
    }
    if m == 0 || n == 0 {
        return Err(PprError::InvalidParameter("m and n must be positive".into()));
    }
    let (m, n) = (m as f64, n as f64);
    let log = (1.0 / p_fail).ln();
    let raw = (m * delta).cbrt() * eps.powf(7.0 / 9.0) / log.cbrt();
    let raw_t = (m * delta).sqrt() * eps.powf(7.0 / 6.0) / (n * log).sqrt();
    let r_max_t_practical = raw_t.min(1.0);
    let raw_s = delta * eps.powf(7.0 / 3.0) / (r_max_t_practical * log);
    let clamp = |x: f64| x.clamp(f64::MIN_POSITIVE, 1.0);
    let r_max = clamp(raw);
    let clamped = r_max != raw || r_max_t_practical != raw_t || clamp(raw_s) != raw_s;
    Ok(OptimalParameters {
        r_max,
        r_max_t_practical: clamp(r_max_t_practical),
        r_tilde_max_s_practical: clamp(raw_s),
        walks: theoretical_c(eps, p_fail) * r_max * r_max / delta,
        precondition_holds: m * delta < log / (eps * eps),
        clamped,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Significance {
    Significant,
    Insignificant,
    /// Reference value in `[delta - eta, delta)`: excluded from error statistics.
    Gap,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceBound {
    pub source: usize,
    pub estimate: f64,
    pub reference: f64,
    pub label: Significance,
    /// `|estimate - ref| / ref + eta / delta`, for significant pairs.
    pub relative_bound: Option<f64>,
    /// `|estimate - ref| + eta`.
    pub absolute_bound: f64,
}

/// Bounds the error of estimates of `pi_s(t)` using a backward push with threshold `eta`.
pub fn reference_error_bounds(
    g: &Graph,
    t: usize,
    eta: f64,
    estimates: &[(usize, f64)],
    delta: f64,
    alpha: f64,
) -> Result<Vec<ReferenceBound>> {
    if !(eta > 0.0 && eta < delta) {
        return Err(PprError::InvalidParameter(format!("need 0 < eta < delta, got eta = {eta}, delta = {delta}")));
    }
    let reference = backward_push(g, t, alpha, eta)?;
    Ok(reference_bounds_from(&reference, eta, estimates, delta))
}

/// Same as [`reference_error_bounds`] with a precomputed reference push.
pub fn reference_bounds_from(
    reference: &PushResult,
    eta: f64,
    estimates: &[(usize, f64)],
    delta: f64,
) -> Vec<ReferenceBound> {
    estimates
        .iter()
        .map(|&(s, est)| {
            let p = reference.p.get(s);
            let dev = (est - p).abs();
            let label = if p >= delta {
                Significance::Significant
            } else if p < delta - eta {
                Significance::Insignificant
            } else {
                Significance::Gap
            };
            ReferenceBound {
                source: s,
                estimate: est,
                reference: p,
                label,
                relative_bound: (label == Significance::Significant).then(|| dev / p + eta / delta),
                absolute_bound: dev + eta,
            }
        })
        .collect()
}
