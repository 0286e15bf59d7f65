use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use ppr_core::estimators::DEFAULT_SEED;

pub const COLUMNS_HELP: &str = "\
Output columns

  pair, many, matrix (estimate rows):
    method          estimator tag (fwbw, practical, bidirectional, many-*, matrix-*)
    s, t            source and target node ids
    estimate        estimated pi_s(t)
    walks           random walks sampled for the run
    push_iters      forward plus backward push iterations
    merge_count     merge operations during the backward pushes
    sigma_inf1      max over nodes of the summed normalized source residuals
    c_T             target pairs certified clustered from push output
    srank_surrogate stable rank of the deterministic part (empty when undefined)
    wall_ms         wall time; 0 unless --record-timings

  partition: scheme, machine, source
  distributed: scheme, machine, sources, walks, push_work, modeled_ms, wall_ms,
    objective_max, objective_srank
  metrics: size_s, size_t, phi_s, phi_t, sigma_inf1, c_T, c_T_ambiguous, srank, srank_surrogate
  bench growth|real: sweep, set_kind, size, trial, seed, method, walks, push_iters,
    merge_count, sigma_inf1, c_T, srank_surrogate, wall_ms
  bench community: level, seed, phi_s, sigma_inf1, phi_t, c_T, c_T_ambiguous, srank,
    srank_surrogate
  bench distributed: trial, seed, scheme, k, total_walks, max_walks, max_push_work,
    objective_max, objective_srank, max_modeled_ms, wall_ms

Node lists take comma-separated ids and inclusive ranges, e.g. 0-9,20,31.
Graph files are whitespace-separated edge lists; a sibling <graph>.labels file
(one community label per node) is read when present.";

#[derive(Debug, Parser)]
#[command(name = "ppr", version, about = "Personalized PageRank estimation harness", after_help = COLUMNS_HELP)]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Edge-list file.
    #[arg(long, global = true)]
    pub graph: Option<PathBuf>,
    /// Parameter profile (direct-er, direct-sbm, com-amazon, ...).
    #[arg(long, global = true)]
    pub profile: Option<String>,
    #[arg(long, global = true)]
    pub alpha: Option<f64>,
    /// Significance threshold; defaults to 1/n.
    #[arg(long, global = true)]
    pub delta: Option<f64>,
    #[arg(long, global = true)]
    pub eps: Option<f64>,
    #[arg(long, global = true)]
    pub pfail: Option<f64>,
    /// Walk-count constant.
    #[arg(long, global = true)]
    pub c: Option<f64>,
    /// L1 forward-push threshold.
    #[arg(long = "rmax-s", global = true)]
    pub rmax_s: Option<f64>,
    /// Degree-normalized forward-push threshold.
    #[arg(long = "rtilde-s", global = true)]
    pub rtilde_s: Option<f64>,
    #[arg(long = "rmax-t", global = true)]
    pub rmax_t: Option<f64>,
    /// Override the walk count.
    #[arg(long, global = true)]
    pub walks: Option<u64>,
    #[arg(long, global = true)]
    pub mode: Option<String>,
    #[arg(long, global = true)]
    pub scheme: Option<String>,
    /// Parts, machines or communities depending on the command.
    #[arg(long, global = true)]
    pub k: Option<usize>,
    #[arg(long, global = true, env = "PPR_SEED", default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Output path; stdout when absent.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Fill wall-time columns instead of writing 0.
    #[arg(long = "record-timings", global = true)]
    pub record_timings: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Directed Erdos-Renyi graph.
    GenEr {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        p: f64,
    },
    /// Directed block model with --k equal communities; writes <out>.labels.
    GenSbm {
        #[arg(long)]
        n: usize,
        /// Expected intra-community out-degree.
        #[arg(long = "deg-in", default_value_t = 9.0)]
        deg_in: f64,
        /// Expected inter-community out-degree.
        #[arg(long = "deg-out", default_value_t = 1.0)]
        deg_out: f64,
    },
    /// One pair estimate.
    Pair {
        #[arg(long)]
        source: usize,
        #[arg(long)]
        target: usize,
        /// fwbw, practical or bidirectional.
        #[arg(long, default_value = "practical")]
        method: String,
    },
    /// Every pair in S x T; --mode shared, shared-practical or baseline.
    Many(SetArgs),
    /// PPR submatrix; --mode avg, max or baseline.
    Matrix {
        #[command(flatten)]
        sets: SetArgs,
        /// theorem or practical; ignored with --walks.
        #[arg(long, default_value = "theorem")]
        budget: String,
        /// Degree-normalized forward push instead of the L1 push.
        #[arg(long = "practical-forward")]
        practical_forward: bool,
        /// Clamp negative entries to zero.
        #[arg(long)]
        clamp: bool,
        /// Also write the dense |S| x |T| matrix here.
        #[arg(long = "dense-out")]
        dense_out: Option<PathBuf>,
    },
    /// Backward pushes for --targets written to the --out directory.
    PrecomputeTargets {
        #[arg(long)]
        targets: String,
    },
    /// Source partition for --scheme.
    Partition(DistArgs),
    /// Simulated distributed estimation for --scheme.
    Distributed {
        #[command(flatten)]
        dist: DistArgs,
        /// Also write estimate rows here.
        #[arg(long = "estimates-out")]
        estimates_out: Option<PathBuf>,
    },
    /// Experiment sweeps.
    Bench {
        #[command(subcommand)]
        sweep: Sweep,
    },
    /// Clustering metrics of S and T.
    Metrics {
        #[command(flatten)]
        sets: SetArgs,
        /// Exact c_T and stable rank from the power-iteration oracle.
        #[arg(long)]
        exact: bool,
    },
}

#[derive(Debug, Clone, Args)]
pub struct SetArgs {
    #[arg(long)]
    pub sources: String,
    #[arg(long)]
    pub targets: String,
}

#[derive(Debug, Clone, Args)]
pub struct DistArgs {
    #[arg(long)]
    pub sources: String,
    /// Targets to push now; avg schemes need these or --store.
    #[arg(long)]
    pub targets: Option<String>,
    /// Directory written by precompute-targets.
    #[arg(long)]
    pub store: Option<PathBuf>,
    /// Per-source labels for --scheme oracle; graph labels when absent.
    #[arg(long)]
    pub labels: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum Sweep {
    /// Shared vs baseline walks as |S| = |T| grows (uniform sets).
    Growth(SweepArgs),
    /// Uniform vs clustered sets, shared vs baseline.
    Real(SweepArgs),
    /// Clustering metrics over community levels.
    Community {
        #[arg(long, default_value = "1-20")]
        levels: String,
        #[arg(long, default_value_t = 100)]
        size: usize,
        #[arg(long, default_value_t = 10)]
        trials: u64,
        #[arg(long)]
        exact: bool,
    },
    /// Baseline, heuristic and oracle schemes on --k planted communities.
    Distributed {
        /// Sources per community.
        #[arg(long, default_value_t = 100)]
        size: usize,
        #[arg(long, default_value_t = 1)]
        trials: u64,
    },
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[arg(long, default_value = "10,20,50,100")]
    pub sizes: String,
    #[arg(long, default_value_t = 3)]
    pub trials: u64,
}
