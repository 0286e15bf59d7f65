//! Seeded statistical checks against the power-iteration oracle.

use ppr_core::distributed::{run_distributed_estimation, DistributedConfig, Scheme};
use ppr_core::estimators::{
    bidirectional_ppr, estimate_many_pairs, fwbw_mcmc_practical, fwbw_mcmc_single, EstimatorParams, ManyMode,
};
use ppr_core::graph::{exact_contributions, exact_contributions_of, exact_ppr, generate_directed_sbm};
use ppr_core::matrix::{
    approx_matrix, build_push_matrices, theorem_walks_avg, theorem_walks_max, MatrixBudget, MatrixMode, MatrixOptions,
};
use ppr_core::metrics::sigma_infinity_one;
use ppr_core::push::{backward_push_many, forward_push_l1};
use ppr_core::rng;
use ppr_core::walks::sample_walk_endpoint;
use ppr_core::{Graph, SparseVec};

const ALPHA: f64 = 0.2;
const SEEDS: u64 = 300;

fn graph() -> Graph {
    generate_directed_sbm(200, 4, 6.0, 1.0, 17).unwrap()
}

fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn params(seed: u64) -> EstimatorParams {
    EstimatorParams { r_max_t: 2e-2, r_tilde_max_s: 2e-2, walks: Some(20), seed, ..EstimatorParams::new(1.0 / 200.0) }
}

#[test]
fn single_pair_estimators_unbiased() {
    let g = graph();
    let (s, t) = (3, 7);
    let truth = exact_contributions(&g, t, ALPHA, 1e-14).unwrap()[s];
    type Estimator = fn(&Graph, usize, usize, &EstimatorParams) -> ppr_core::Result<ppr_core::estimators::PairEstimate>;
    let methods: [(&str, Estimator); 3] =
        [("fwbw", fwbw_mcmc_single), ("practical", fwbw_mcmc_practical), ("bidirectional", bidirectional_ppr)];
    for (name, f) in methods {
        let xs: Vec<f64> = (0..SEEDS).map(|seed| f(&g, s, t, &params(seed)).unwrap().value).collect();
        let (mean, se) = mean_se(&xs);
        assert!(se > 0.0, "{name}: no variance, walks unused");
        assert!((mean - truth).abs() <= 3.0 * se, "{name}: mean {mean} truth {truth} se {se}");
    }
}

#[test]
fn shared_and_baseline_agree_in_distribution() {
    let g = graph();
    let sources = [0, 1, 2, 3];
    let targets = [4, 5, 60, 7];
    let cols: Vec<Vec<f64>> = targets.iter().map(|&t| exact_contributions(&g, t, ALPHA, 1e-14).unwrap()).collect();
    let mut runs = Vec::new();
    for mode in [ManyMode::Shared, ManyMode::SharedPractical, ManyMode::Baseline] {
        let ests: Vec<_> = (0..SEEDS)
            .map(|seed| estimate_many_pairs(&g, &sources, &targets, &params(seed), mode).unwrap().values)
            .collect();
        for i in 0..sources.len() {
            for j in 0..targets.len() {
                let xs: Vec<f64> = ests.iter().map(|v| v[i][j]).collect();
                let (mean, se) = mean_se(&xs);
                let truth = cols[j][sources[i]];
                assert!((mean - truth).abs() <= 3.0 * se.max(1e-12), "{mode:?} ({i},{j}): {mean} vs {truth}, se {se}");
            }
        }
        runs.push(ests);
    }
    // shared walks are reused across sources, so per-pair marginals match but runs differ
    assert_ne!(runs[0], runs[2]);
}

#[test]
fn walk_endpoints_follow_ppr() {
    let g = graph();
    let truth = exact_ppr(
        &g,
        &{
            let mut x = vec![0.0; g.n()];
            x[11] = 1.0;
            x
        },
        ALPHA,
        1e-14,
    )
    .unwrap();
    let draws = 200_000;
    let mut counts = vec![0u64; g.n()];
    let mut r = rng::stream(5, rng::TAG_WALK, 0, 0);
    for _ in 0..draws {
        counts[sample_walk_endpoint(&g, 11, ALPHA, &mut r)] += 1;
    }
    for v in 0..g.n() {
        let p = truth[v];
        let se = (p * (1.0 - p) / draws as f64).sqrt();
        let freq = counts[v] as f64 / draws as f64;
        assert!((freq - p).abs() <= 4.5 * se + 1e-9, "node {v}: {freq} vs {p}");
    }
}

#[test]
fn deterministic_matrix_part_identity() {
    let g = graph();
    let sources = [0, 50, 100, 150];
    let targets = [1, 51, 101, 151];
    let fwd: Vec<_> = sources.iter().map(|&s| forward_push_l1(&g, s, ALPHA, 0.3).unwrap()).collect();
    let (bwd, _) = backward_push_many(&g, &targets, ALPHA, 1e-2).unwrap();
    let pm = build_push_matrices(&fwd, &bwd).unwrap();
    let det = pm.deterministic_part();
    // Pi(S,T) = det + R_S^T Pi R_T
    for (i, &s) in sources.iter().enumerate() {
        let rs = fwd[i].r.to_dense(g.n());
        let through = exact_ppr(&g, &rs, ALPHA, 1e-14).unwrap();
        for (j, &t) in targets.iter().enumerate() {
            let pi = exact_contributions(&g, t, ALPHA, 1e-14).unwrap()[s];
            let rt = bwd[j].r.to_dense(g.n());
            let cross: f64 = through.iter().zip(&rt).map(|(a, b)| a * b).sum();
            assert!((det.get(i, j) + cross - pi).abs() <= 1e-9);
        }
    }
    let p = EstimatorParams { r_max_s: 0.3, r_max_t: 1e-2, ..EstimatorParams::new(1.0 / 200.0) };
    let opts = MatrixOptions {
        mode: MatrixMode::Max,
        budget: MatrixBudget::Fixed(0),
        practical_forward: false,
        clamp_negative: false,
    };
    let est = approx_matrix(&g, &sources, &targets, &p, &opts).unwrap();
    assert!(est.deterministic_only);
    assert!(est.values.sub(&det).unwrap().max_abs() <= 1e-15);
    // the residual-weighted oracle agrees with the column oracle
    let w = exact_contributions_of(&g, &bwd[0].r.to_dense(g.n()), ALPHA, 1e-14).unwrap();
    let direct = exact_contributions(&g, targets[0], ALPHA, 1e-14).unwrap();
    assert!((bwd[0].p.get(sources[0]) + w[sources[0]] - direct[sources[0]]).abs() <= 1e-9);
}

#[test]
fn matrix_estimates_unbiased() {
    let g = graph();
    let sources = [0, 1, 2];
    let targets = [3, 4, 5];
    let p = |seed| EstimatorParams { r_max_s: 0.3, r_max_t: 2e-2, seed, ..EstimatorParams::new(1.0 / 200.0) };
    for mode in [MatrixMode::Avg, MatrixMode::Max, MatrixMode::Baseline] {
        let opts =
            MatrixOptions { mode, budget: MatrixBudget::Fixed(30), practical_forward: false, clamp_negative: false };
        let ests: Vec<_> =
            (0..SEEDS).map(|seed| approx_matrix(&g, &sources, &targets, &p(seed), &opts).unwrap()).collect();
        for (j, &t) in targets.iter().enumerate() {
            let col = exact_contributions(&g, t, ALPHA, 1e-14).unwrap();
            for i in 0..3 {
                let xs: Vec<f64> = ests.iter().map(|e| e.values.get(i, j)).collect();
                let (mean, se) = mean_se(&xs);
                assert!((mean - col[sources[i]]).abs() <= 3.0 * se.max(1e-12), "{mode:?} ({i},{j})");
            }
        }
    }
}

#[test]
fn matrix_budget_scaling_by_construction() {
    let l = 16;
    let identical = vec![SparseVec::unit(0); l];
    let disjoint: Vec<SparseVec> = (0..l).map(SparseVec::unit).collect();
    let (si, sd) = (sigma_infinity_one(&identical), sigma_infinity_one(&disjoint));
    assert_eq!((si, sd), (1.0, l as f64));
    let max_ratio = theorem_walks_max(l, sd, 0.5, 1e-3, 0.5, 0.1) / theorem_walks_max(l, si, 0.5, 1e-3, 0.5, 0.1);
    assert!((max_ratio - l as f64).abs() <= 1e-9);
    let avg_ratio =
        theorem_walks_avg(l, l as f64, 0.5, 1e-3, 0.5, 0.1) / theorem_walks_avg(l, 1.0, 0.5, 1e-3, 0.5, 0.1);
    assert!((avg_ratio - (l as f64).sqrt()).abs() <= 1e-9);
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let g = graph();
    let sources: Vec<usize> = (0..20).collect();
    let targets: Vec<usize> = (100..120).collect();
    let run = |threads| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            let many = estimate_many_pairs(&g, &sources, &targets, &params(1), ManyMode::SharedPractical).unwrap();
            let opts = MatrixOptions {
                mode: MatrixMode::Avg,
                budget: MatrixBudget::Fixed(5000),
                practical_forward: true,
                clamp_negative: false,
            };
            let mat = approx_matrix(&g, &sources, &targets, &params(2), &opts).unwrap();
            let (bwd, _) = backward_push_many(&g, &targets, ALPHA, 2e-2).unwrap();
            let cfg =
                DistributedConfig { k: 4, scheme: Scheme::HeuristicAvgAlt, params: params(3), practical_forward: true };
            let dist = run_distributed_estimation(&g, &sources, &bwd, &cfg).unwrap();
            (many, mat.values, dist.partition, dist.estimates, dist.total_walks)
        })
    };
    assert_eq!(run(1), run(4));
}
