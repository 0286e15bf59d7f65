//! Local push algorithms.
//!
//! Forward push maintains `pi_s = p + sum_w r(w) pi_w`; backward push
//! maintains `pi_v(t) = p(v) + sum_w pi_v(w) r(w)`. Each push moves `alpha`
//! of the selected residual into `p` and spreads the rest one hop.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use ordered_float::OrderedFloat;

use crate::error::{PprError, Result};
use crate::graph::Graph;
use crate::sparse::{node_map, NodeMap, SparseVec};

/// Estimate and residual vectors produced by a push run.
#[derive(Debug, Clone, PartialEq)]
pub struct PushResult {
    /// Source node for forward push, target node for backward push.
    pub origin: usize,
    pub n: usize,
    pub p: SparseVec,
    pub r: SparseVec,
    pub iterations: usize,
    /// Sum of adjacency-list lengths (or donor support sizes for merges) touched.
    pub pushed_work: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MergeStats {
    pub merge_count: usize,
    pub extend_count: usize,
    pub per_target_iterations: Vec<usize>,
}

impl MergeStats {
    pub fn total_iterations(&self) -> usize {
        self.per_target_iterations.iter().sum()
    }
}

type Heap = BinaryHeap<(OrderedFloat<f64>, Reverse<usize>)>;

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(PprError::InvalidParameter(format!("alpha = {alpha} outside (0, 1)")))
    }
}

fn add(map: &mut NodeMap<f64>, v: usize, x: f64) -> f64 {
    let e = map.entry(v).or_insert(0.0);
    *e += x;
    *e
}

/// Forward stopping rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ForwardRule {
    /// Stop once `‖r‖₁ <= r_max_s`.
    L1(f64),
    /// Stop once `max_v r(v)/d_out(v) <= r_tilde_max_s`.
    DegreeNormalized(f64),
}

/// Incremental forward push, exposed so callers can observe intermediate states.
pub struct ForwardPush<'g> {
    g: &'g Graph,
    source: usize,
    alpha: f64,
    rule: ForwardRule,
    p: NodeMap<f64>,
    r: NodeMap<f64>,
    heap: Heap,
    r_l1: f64,
    iterations: usize,
    work: usize,
}

impl<'g> ForwardPush<'g> {
    pub fn new(g: &'g Graph, source: usize, alpha: f64, rule: ForwardRule) -> Result<Self> {
        check_alpha(alpha)?;
        g.check_node(source)?;
        match rule {
            ForwardRule::L1(x) if !(x > 0.0 && x <= 1.0) => {
                return Err(PprError::InvalidParameter(format!("r_max_s = {x} outside (0, 1]")));
            }
            ForwardRule::DegreeNormalized(x) if !(x > 0.0) => {
                return Err(PprError::InvalidParameter(format!("r_tilde_max_s = {x} must be positive")));
            }
            _ => {}
        }
        let mut r = node_map();
        r.insert(source, 1.0);
        let mut heap = Heap::new();
        heap.push((OrderedFloat(1.0 / g.out_degree(source) as f64), Reverse(source)));
        Ok(Self { g, source, alpha, rule, p: node_map(), r, heap, r_l1: 1.0, iterations: 0, work: 0 })
    }

    fn priority(&self, v: usize, rv: f64) -> f64 {
        rv / self.g.out_degree(v) as f64
    }

    /// Largest live `(node, r/d_out)` entry, discarding stale heap entries.
    fn top(&mut self) -> Option<(usize, f64)> {
        while let Some(&(OrderedFloat(prio), Reverse(v))) = self.heap.peek() {
            let rv = self.r.get(&v).copied().unwrap_or(0.0);
            if rv > 0.0 && self.priority(v, rv) == prio {
                return Some((v, prio));
            }
            self.heap.pop();
        }
        None
    }

    fn exact_l1(&self) -> f64 {
        SparseVec::from_map(&self.r).l1()
    }

    /// The node the next push would select, or `None` once terminated.
    pub fn next_node(&mut self) -> Option<usize> {
        let (v, prio) = self.top()?;
        match self.rule {
            ForwardRule::DegreeNormalized(th) => (prio > th).then_some(v),
            ForwardRule::L1(th) => {
                if self.r_l1 <= th {
                    // the running total can drift from the true sum by rounding
                    self.r_l1 = self.exact_l1();
                    if self.r_l1 <= th {
                        return None;
                    }
                }
                Some(v)
            }
        }
    }

    /// Performs one push if not terminated; returns the pushed node.
    pub fn step(&mut self) -> Option<usize> {
        let v = self.next_node()?;
        let rv = self.r.remove(&v).unwrap_or(0.0);
        add(&mut self.p, v, self.alpha * rv);
        self.r_l1 -= self.alpha * rv;
        let nbrs = self.g.out_neighbors(v);
        let share = (1.0 - self.alpha) * rv / nbrs.len() as f64;
        for &u in nbrs {
            let ru = add(&mut self.r, u, share);
            let prio = self.priority(u, ru);
            self.heap.push((OrderedFloat(prio), Reverse(u)));
        }
        self.iterations += 1;
        self.work += nbrs.len();
        Some(v)
    }

    /// Running value of `‖r‖₁`, decreased by `alpha * r(v*)` per push.
    pub fn residual_l1(&self) -> f64 {
        self.r_l1
    }

    pub fn residual_at(&self, v: usize) -> f64 {
        self.r.get(&v).copied().unwrap_or(0.0)
    }

    pub fn snapshot(&self) -> PushResult {
        PushResult {
            origin: self.source,
            n: self.g.n(),
            p: SparseVec::from_map(&self.p),
            r: SparseVec::from_map(&self.r),
            iterations: self.iterations,
            pushed_work: self.work,
        }
    }

    pub fn run(mut self) -> PushResult {
        while self.step().is_some() {}
        self.snapshot()
    }
}

/// Forward push terminating on `‖r‖₁ <= r_max_s`.
pub fn forward_push_l1(g: &Graph, s: usize, alpha: f64, r_max_s: f64) -> Result<PushResult> {
    Ok(ForwardPush::new(g, s, alpha, ForwardRule::L1(r_max_s))?.run())
}

/// Forward push terminating on `max_v r(v)/d_out(v) <= r_tilde_max_s`.
pub fn forward_push_degree_normalized(g: &Graph, s: usize, alpha: f64, r_tilde_max_s: f64) -> Result<PushResult> {
    Ok(ForwardPush::new(g, s, alpha, ForwardRule::DegreeNormalized(r_tilde_max_s))?.run())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackwardStep {
    Extend(usize),
    Merge(usize),
}

/// Core of the merge update. `touched` sees every residual entry whose value changed.
fn merge_maps(
    p: &mut NodeMap<f64>,
    r: &mut NodeMap<f64>,
    donor: &PushResult,
    mut touched: impl FnMut(usize, f64),
) -> Result<()> {
    let t1 = donor.origin;
    let c = r.get(&t1).copied().unwrap_or(0.0);
    if !(c > 0.0) {
        return Err(PprError::Precondition(format!("residual at donor {t1} is zero")));
    }
    for (u, x) in donor.p.iter() {
        add(p, u, c * x);
    }
    for (u, x) in donor.r.iter() {
        if u != t1 {
            let ru = add(r, u, c * x);
            touched(u, ru);
        }
    }
    // the t1 coordinate becomes c * r^{t1}(t1) exactly, avoiding cancellation
    let left = c * donor.r.get(t1);
    if left > 0.0 {
        r.insert(t1, left);
        touched(t1, left);
    } else {
        r.remove(&t1);
    }
    Ok(())
}

/// Incremental backward push with optional merges from finished donors.
pub struct BackwardPush<'g> {
    g: &'g Graph,
    target: usize,
    alpha: f64,
    r_max: f64,
    p: NodeMap<f64>,
    r: NodeMap<f64>,
    heap: Heap,
    iterations: usize,
    merges: usize,
    work: usize,
}

impl<'g> BackwardPush<'g> {
    pub fn new(g: &'g Graph, target: usize, alpha: f64, r_max_t: f64) -> Result<Self> {
        check_alpha(alpha)?;
        g.check_node(target)?;
        if !(r_max_t > 0.0 && r_max_t < 1.0) {
            return Err(PprError::InvalidParameter(format!("r_max_t = {r_max_t} outside (0, 1)")));
        }
        let mut r = node_map();
        r.insert(target, 1.0);
        let mut heap = Heap::new();
        heap.push((OrderedFloat(1.0), Reverse(target)));
        Ok(Self { g, target, alpha, r_max: r_max_t, p: node_map(), r, heap, iterations: 0, merges: 0, work: 0 })
    }

    fn top(&mut self) -> Option<(usize, f64)> {
        while let Some(&(OrderedFloat(prio), Reverse(v))) = self.heap.peek() {
            let rv = self.r.get(&v).copied().unwrap_or(0.0);
            if rv > 0.0 && rv == prio {
                return Some((v, prio));
            }
            self.heap.pop();
        }
        None
    }

    /// The node the next iteration would select, or `None` once `‖r‖∞ <= r_max_t`.
    pub fn next_node(&mut self) -> Option<usize> {
        let (v, rv) = self.top()?;
        (rv > self.r_max).then_some(v)
    }

    fn bump(&mut self, v: usize, x: f64) {
        let rv = add(&mut self.r, v, x);
        self.heap.push((OrderedFloat(rv), Reverse(v)));
    }

    /// One ordinary push at `v`.
    pub fn extend(&mut self, v: usize) {
        let rv = self.r.remove(&v).unwrap_or(0.0);
        add(&mut self.p, v, self.alpha * rv);
        let spread = (1.0 - self.alpha) * rv;
        let g = self.g;
        for &u in g.in_neighbors(v) {
            self.bump(u, spread / g.out_degree(u) as f64);
        }
        self.iterations += 1;
        self.work += g.in_degree(v);
    }

    /// Splices in the finished result of another target `t1 = donor.origin`:
    /// with `c = r(t1)`, `p += c*p^{t1}` and `r += c*(r^{t1} - e_{t1})`.
    pub fn merge(&mut self, donor: &PushResult) -> Result<()> {
        let heap = &mut self.heap;
        merge_maps(&mut self.p, &mut self.r, donor, |v, x| heap.push((OrderedFloat(x), Reverse(v))))?;
        self.iterations += 1;
        self.merges += 1;
        self.work += donor.p.nnz() + donor.r.nnz();
        Ok(())
    }

    /// One iteration: merge when `lookup` yields a donor for the selected node, else extend.
    pub fn step_with<'d, F>(&mut self, lookup: F) -> Option<BackwardStep>
    where
        F: Fn(usize) -> Option<&'d PushResult>,
    {
        let v = self.next_node()?;
        match lookup(v) {
            Some(donor) => {
                self.merge(donor).expect("selected node has positive residual");
                Some(BackwardStep::Merge(v))
            }
            None => {
                self.extend(v);
                Some(BackwardStep::Extend(v))
            }
        }
    }

    pub fn step(&mut self) -> Option<usize> {
        let v = self.next_node()?;
        self.extend(v);
        Some(v)
    }

    pub fn merges(&self) -> usize {
        self.merges
    }

    pub fn snapshot(&self) -> PushResult {
        PushResult {
            origin: self.target,
            n: self.g.n(),
            p: SparseVec::from_map(&self.p),
            r: SparseVec::from_map(&self.r),
            iterations: self.iterations,
            pushed_work: self.work,
        }
    }
}

/// Backward push terminating on `‖r‖∞ <= r_max_t`.
pub fn backward_push(g: &Graph, t: usize, alpha: f64, r_max_t: f64) -> Result<PushResult> {
    let mut state = BackwardPush::new(g, t, alpha, r_max_t)?;
    while state.step().is_some() {}
    Ok(state.snapshot())
}

/// Applies a single merge to a standalone result.
pub fn merge_update(current: &PushResult, donor: &PushResult) -> Result<PushResult> {
    if current.n != donor.n {
        return Err(PprError::DimensionMismatch(format!("n = {} vs {}", current.n, donor.n)));
    }
    let mut p: NodeMap<f64> = current.p.iter().collect();
    let mut r: NodeMap<f64> = current.r.iter().collect();
    merge_maps(&mut p, &mut r, donor, |_, _| {})?;
    Ok(PushResult {
        origin: current.origin,
        n: current.n,
        p: SparseVec::from_map(&p),
        r: SparseVec::from_map(&r),
        iterations: current.iterations + 1,
        pushed_work: current.pushed_work + donor.p.nnz() + donor.r.nnz(),
    })
}

/// Backward push for each target in order, merging whenever the selected
/// node is an earlier target (whose final result is the donor).
pub fn backward_push_many(
    g: &Graph,
    targets: &[usize],
    alpha: f64,
    r_max_t: f64,
) -> Result<(Vec<PushResult>, MergeStats)> {
    let mut position: NodeMap<usize> = node_map();
    for (i, &t) in targets.iter().enumerate() {
        g.check_node(t)?;
        if position.insert(t, i).is_some() {
            return Err(PprError::InvalidParameter(format!("duplicate target {t}")));
        }
    }
    let mut results: Vec<PushResult> = Vec::with_capacity(targets.len());
    let mut stats = MergeStats::default();
    for &t in targets {
        let mut state = BackwardPush::new(g, t, alpha, r_max_t)?;
        let done = &results;
        let lookup = |v: usize| position.get(&v).and_then(|&j| done.get(j));
        while state.step_with(lookup).is_some() {}
        let res = state.snapshot();
        stats.merge_count += state.merges();
        stats.extend_count += res.iterations - state.merges();
        stats.per_target_iterations.push(res.iterations);
        results.push(res);
    }
    Ok((results, stats))
}
