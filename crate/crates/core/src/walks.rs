//! Geometric-length random walks and shared walk plans.
//!
//! A walk from `v` stops with probability `alpha` before each step, so its
//! length `L` has `P[L = l] = alpha (1-alpha)^l` and its endpoint is
//! distributed as `pi_v`.

use rand::Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;

use crate::error::{PprError, Result};
use crate::graph::Graph;
use crate::rng::{self, TAG_WALK};
use crate::sparse::SparseVec;

/// Per-start-node walk counts, sorted by node.
pub type StartCounts = Vec<(usize, u64)>;

/// Samples one walk and returns `(endpoint, length)`.
pub fn sample_walk<R: Rng + ?Sized>(g: &Graph, start: usize, alpha: f64, rng: &mut R) -> (usize, usize) {
    let mut v = start;
    let mut len = 0;
    while rng.random::<f64>() >= alpha {
        let nbrs = g.out_neighbors(v);
        v = nbrs[rng.random_range(0..nbrs.len())];
        len += 1;
    }
    (v, len)
}

pub fn sample_walk_endpoint<R: Rng + ?Sized>(g: &Graph, start: usize, alpha: f64, rng: &mut R) -> usize {
    sample_walk(g, start, alpha, rng).0
}

fn check_distribution(sigma: &SparseVec) -> Result<()> {
    if sigma.iter().any(|(_, x)| !(x >= 0.0)) {
        return Err(PprError::InvalidParameter("start distribution has a negative entry".into()));
    }
    let total = sigma.l1();
    if (total - 1.0).abs() > 1e-9 {
        return Err(PprError::InvalidParameter(format!("start distribution sums to {total}")));
    }
    Ok(())
}

/// One multinomial draw of `w` trials, via successive conditional binomials.
pub fn multinomial<R: Rng + ?Sized>(sigma: &SparseVec, w: u64, rng: &mut R) -> Result<StartCounts> {
    check_distribution(sigma)?;
    let mut out = Vec::new();
    let mut left = w;
    let mut mass = 1.0f64;
    let entries = sigma.entries();
    for (k, &(v, x)) in entries.iter().enumerate() {
        if left == 0 {
            break;
        }
        let count = if k + 1 == entries.len() {
            left
        } else {
            let q = (x / mass).clamp(0.0, 1.0);
            let draw = Binomial::new(left, q).map_err(|e| PprError::InvalidParameter(e.to_string()))?;
            draw.sample(rng)
        };
        if count > 0 {
            out.push((v, count));
        }
        left -= count;
        mass -= x;
    }
    Ok(out)
}

/// Independent multinomial start counts for each source, all with budget `w`.
pub fn draw_start_counts<R: Rng + ?Sized>(sigmas: &[SparseVec], w: u64, rng: &mut R) -> Result<Vec<StartCounts>> {
    sigmas.iter().map(|s| multinomial(s, w, rng)).collect()
}

/// Per-source counts plus their elementwise maximum.
#[derive(Debug, Clone, PartialEq)]
pub struct WalkPlan {
    pub per_source: Vec<StartCounts>,
    pub consolidated: StartCounts,
}

impl WalkPlan {
    /// Walks actually sampled, `sum_v max_s X_s(v)`.
    pub fn total_walks(&self) -> u64 {
        self.consolidated.iter().map(|&(_, c)| c).sum()
    }

    /// Walks that independent per-source sampling would need.
    pub fn separate_walks(&self) -> u64 {
        self.per_source.iter().flatten().map(|&(_, c)| c).sum()
    }

    pub fn count(&self, v: usize) -> u64 {
        lookup(&self.consolidated, v)
    }
}

fn lookup(counts: &StartCounts, v: usize) -> u64 {
    counts.binary_search_by_key(&v, |&(u, _)| u).map_or(0, |k| counts[k].1)
}

pub fn build_walk_plan(per_source: Vec<StartCounts>) -> WalkPlan {
    let mut all: Vec<(usize, u64)> = per_source.iter().flatten().copied().collect();
    all.sort_unstable();
    let mut consolidated: StartCounts = Vec::new();
    for (v, c) in all {
        match consolidated.last_mut() {
            Some(last) if last.0 == v => last.1 = last.1.max(c),
            _ => consolidated.push((v, c)),
        }
    }
    WalkPlan { per_source, consolidated }
}

/// Ordered walk endpoints for each start node of a plan.
#[derive(Debug, Clone, PartialEq)]
pub struct EndpointTable {
    starts: Vec<usize>,
    endpoints: Vec<Vec<usize>>,
}

impl EndpointTable {
    pub fn endpoints(&self, v: usize) -> &[usize] {
        match self.starts.binary_search(&v) {
            Ok(k) => &self.endpoints[k],
            Err(_) => &[],
        }
    }

    pub fn starts(&self) -> &[usize] {
        &self.starts
    }

    pub fn total(&self) -> usize {
        self.endpoints.iter().map(Vec::len).sum()
    }

    /// Endpoints used by one source: the first `X_s(v)` walks at each start `v`.
    pub fn source_endpoints<'a>(&'a self, counts: &'a StartCounts) -> impl Iterator<Item = usize> + 'a {
        counts.iter().flat_map(move |&(v, c)| self.endpoints(v)[..c as usize].iter().copied())
    }
}

/// Samples `X(v)` walks from each start `v`. Walk `i` from `v` is the `i`-th
/// draw of a stream keyed on `(seed, v)`, so the table does not depend on how
/// start nodes are scheduled across threads.
pub fn execute_walk_plan(g: &Graph, plan: &WalkPlan, alpha: f64, seed: u64) -> Result<EndpointTable> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(PprError::InvalidParameter(format!("alpha = {alpha} outside (0, 1]")));
    }
    for &(v, _) in &plan.consolidated {
        g.check_node(v)?;
    }
    let endpoints = plan
        .consolidated
        .par_iter()
        .map(|&(v, c)| {
            let mut rng = rng::stream(seed, TAG_WALK, v as u64, 0);
            (0..c).map(|_| sample_walk_endpoint(g, v, alpha, &mut rng)).collect()
        })
        .collect();
    Ok(EndpointTable { starts: plan.consolidated.iter().map(|&(v, _)| v).collect(), endpoints })
}

/// Per-source budget above which shared-walk totals concentrate around
/// `w * ‖Σ‖∞,1`: `3 log(2 nnz / p_fail) / (eps^2 min_{sigma_s(v) > 0} sigma_s(v))`.
/// Reported only; it is often far larger than practical budgets.
pub fn shared_walk_lower_bound(sigmas: &[SparseVec], eps: f64, p_fail: f64) -> f64 {
    let nnz: usize = sigmas.iter().map(SparseVec::nnz).sum();
    let min = sigmas.iter().filter_map(SparseVec::min_value).fold(f64::INFINITY, f64::min);
    3.0 * (2.0 * nnz as f64 / p_fail).ln() / (eps * eps * min)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cycle3() -> Graph {
        Graph::from_edges(3, vec![(0, 1), (1, 2), (2, 0)], true).unwrap()
    }

    #[test]
    fn alpha_one_never_moves() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert!((0..100).all(|_| sample_walk_endpoint(&cycle3(), 1, 1.0, &mut rng) == 1));
    }

    #[test]
    fn endpoint_law_on_cycle() {
        let g = cycle3();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut hist = [0usize; 3];
        let trials = 100_000;
        for _ in 0..trials {
            hist[sample_walk_endpoint(&g, 0, 0.2, &mut rng)] += 1;
        }
        let expect = [0.4098, 0.3279, 0.2623];
        let tv: f64 = hist.iter().zip(expect).map(|(&h, e)| (h as f64 / trials as f64 - e).abs()).sum::<f64>() / 2.0;
        assert!(tv < 0.02, "tv = {tv}");
    }

    #[test]
    fn point_mass_counts() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let counts = draw_start_counts(&[SparseVec::unit(4)], 25, &mut rng).unwrap();
        assert_eq!(counts, vec![vec![(4, 25)]]);
        let zero = draw_start_counts(&[SparseVec::from_pairs(vec![(0, 0.5), (1, 0.5)])], 0, &mut rng).unwrap();
        assert!(zero[0].is_empty());
        assert!(draw_start_counts(&[SparseVec::from_pairs(vec![(0, 0.5)])], 3, &mut rng).is_err());
    }

    #[test]
    fn plan_examples() {
        let plan = build_walk_plan(vec![vec![(0, 3), (1, 1)], vec![(0, 2), (2, 2)]]);
        assert_eq!(plan.consolidated, vec![(0, 3), (1, 1), (2, 2)]);
        assert_eq!(plan.total_walks(), 6);
        assert_eq!(plan.separate_walks(), 8);
    }

    #[test]
    fn table_prefixes_per_source() {
        let g = cycle3();
        let plan = build_walk_plan(vec![vec![(0, 3)], vec![(0, 1), (1, 2)]]);
        let table = execute_walk_plan(&g, &plan, 0.2, 5).unwrap();
        assert_eq!(table.total(), 5);
        let second: Vec<usize> = table.source_endpoints(&plan.per_source[1]).collect();
        assert_eq!(second[0], table.endpoints(0)[0]);
        assert_eq!(&second[1..], table.endpoints(1));
        assert_eq!(table, execute_walk_plan(&g, &plan, 0.2, 5).unwrap());
    }
}
