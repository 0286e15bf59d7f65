use std::path::Path;
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use ppr_core::distributed::{
    read_push_table, run_distributed_estimation, write_push_table, DistributedConfig, DistributedRun, Scheme,
};
use ppr_core::estimators::{
    bidirectional_ppr, estimate_many_pairs, fwbw_mcmc_practical, fwbw_mcmc_single, profile, EstimatorParams, ManyMode,
    ManyPairEstimate,
};
use ppr_core::graph::{generate_directed_er, generate_directed_sbm};
use ppr_core::matrix::{approx_matrix, MatrixBudget, MatrixMode, MatrixOptions, PprMatrixEstimate};
use ppr_core::metrics::{correlation_row, CorrelationRow, CtSource, ProtocolConfig};
use ppr_core::push::backward_push_many;
use ppr_core::{Graph, PushResult};

use crate::args::{Command, Common, DistArgs, SetArgs};
use crate::io::{csv_out, load_graph, opt, parse_nodes, save_graph, sink, CsvOut};

pub const ESTIMATE_HEADER: [&str; 11] = [
    "method",
    "s",
    "t",
    "estimate",
    "walks",
    "push_iters",
    "merge_count",
    "sigma_inf1",
    "c_T",
    "srank_surrogate",
    "wall_ms",
];

pub const METRICS_HEADER: [&str; 9] =
    ["size_s", "size_t", "phi_s", "phi_t", "sigma_inf1", "c_T", "c_T_ambiguous", "srank", "srank_surrogate"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Flavor {
    Practical,
    Bidirectional,
}

/// Profile or default parameters with explicit flags layered on top.
pub fn resolve_params(c: &Common, n: usize, flavor: Flavor) -> Result<EstimatorParams> {
    let mut p = match &c.profile {
        Some(name) => {
            let prof = profile(name).ok_or_else(|| anyhow!("unknown profile {name:?}"))?;
            match flavor {
                Flavor::Practical => prof.practical_params(n),
                Flavor::Bidirectional => prof.bidirectional_params(n),
            }
        }
        None => EstimatorParams::new(1.0 / n as f64),
    };
    let set = |slot: &mut f64, v: Option<f64>| {
        if let Some(v) = v {
            *slot = v;
        }
    };
    set(&mut p.alpha, c.alpha);
    set(&mut p.delta, c.delta);
    set(&mut p.eps, c.eps);
    set(&mut p.p_fail, c.pfail);
    set(&mut p.c, c.c);
    set(&mut p.r_max_s, c.rmax_s);
    set(&mut p.r_tilde_max_s, c.rtilde_s);
    set(&mut p.r_max_t, c.rmax_t);
    p.walks = c.walks.or(p.walks);
    p.seed = c.seed;
    p.validate()?;
    Ok(p)
}

/// Runs `f`, returning its result and the elapsed milliseconds (0 unless recording).
pub fn timed<T>(record: bool, f: impl FnOnce() -> T) -> (T, f64) {
    let start = Instant::now();
    let out = f();
    (out, if record { start.elapsed().as_secs_f64() * 1e3 } else { 0.0 })
}

pub fn many_mode(name: Option<&str>) -> Result<ManyMode> {
    Ok(match name.unwrap_or("shared-practical") {
        "shared" => ManyMode::Shared,
        "shared-practical" | "practical" => ManyMode::SharedPractical,
        "baseline" => ManyMode::Baseline,
        other => bail!("unknown many mode {other:?} (shared, shared-practical, baseline)"),
    })
}

fn matrix_mode(name: Option<&str>) -> Result<MatrixMode> {
    Ok(match name.unwrap_or("max") {
        "avg" => MatrixMode::Avg,
        "max" => MatrixMode::Max,
        "baseline" => MatrixMode::Baseline,
        other => bail!("unknown matrix mode {other:?} (avg, max, baseline)"),
    })
}

pub fn scheme(name: Option<&str>, labels: Option<Vec<usize>>) -> Result<Scheme> {
    Ok(match name.unwrap_or("heuristic_max") {
        "baseline" => Scheme::Baseline,
        "heuristic_max" => Scheme::HeuristicMax,
        "heuristic_avg" => Scheme::HeuristicAvg,
        "heuristic_avg_alt" => Scheme::HeuristicAvgAlt,
        "oracle" => Scheme::Oracle(labels.ok_or_else(|| anyhow!("oracle scheme needs --labels or a labelled graph"))?),
        other => bail!("unknown scheme {other:?} (baseline, heuristic_max, heuristic_avg, heuristic_avg_alt, oracle)"),
    })
}

pub fn write_many(out: &mut CsvOut, est: &ManyPairEstimate, tag: &str, wall: f64) -> Result<()> {
    let st = &est.stats;
    for (i, &s) in est.sources.iter().enumerate() {
        for (j, &t) in est.targets.iter().enumerate() {
            out.write_record([
                tag.to_string(),
                s.to_string(),
                t.to_string(),
                est.values[i][j].to_string(),
                st.walks.sampled.to_string(),
                (st.forward_iterations + st.backward_iterations).to_string(),
                st.merge_count.to_string(),
                st.sigma_inf1.to_string(),
                st.c_t_lower.to_string(),
                opt(st.srank_surrogate),
                wall.to_string(),
            ])?;
        }
    }
    Ok(())
}

fn write_matrix(out: &mut CsvOut, est: &PprMatrixEstimate, wall: f64) -> Result<()> {
    let tag = format!("matrix-{}", est.mode.tag());
    for (i, &s) in est.sources.iter().enumerate() {
        for (j, &t) in est.targets.iter().enumerate() {
            out.write_record([
                tag.clone(),
                s.to_string(),
                t.to_string(),
                est.values.get(i, j).to_string(),
                est.w_used.to_string(),
                (est.forward_iterations + est.backward_iterations).to_string(),
                est.merge_count.to_string(),
                est.sigma_inf1.to_string(),
                String::new(),
                opt(est.srank_surrogate),
                wall.to_string(),
            ])?;
        }
    }
    Ok(())
}

fn write_dense(path: &Path, est: &PprMatrixEstimate) -> Result<()> {
    let mut header = vec!["s".to_string()];
    header.extend(est.targets.iter().map(|t| t.to_string()));
    let mut w = csv::Writer::from_writer(sink(Some(path))?);
    w.write_record(&header)?;
    for (i, &s) in est.sources.iter().enumerate() {
        let mut row = vec![s.to_string()];
        row.extend((0..est.targets.len()).map(|j| est.values.get(i, j).to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn metrics_record(r: &CorrelationRow, size_s: usize, size_t: usize) -> [String; 9] {
    [
        size_s.to_string(),
        size_t.to_string(),
        r.phi_s.to_string(),
        r.phi_t.to_string(),
        r.sigma_inf1.to_string(),
        r.c_t.to_string(),
        r.c_t_ambiguous.to_string(),
        r.srank.to_string(),
        r.srank_surrogate.to_string(),
    ]
}

/// Target pushes from `--store` or computed for `--targets`.
fn target_pushes(g: &Graph, d: &DistArgs, params: &EstimatorParams) -> Result<Vec<PushResult>> {
    match (&d.store, &d.targets) {
        (Some(_), Some(_)) => bail!("give either --store or --targets, not both"),
        (Some(dir), None) => {
            let table = read_push_table(dir).with_context(|| format!("reading push table {}", dir.display()))?;
            if table.n != g.n() || table.alpha != params.alpha {
                bail!(
                    "push table built for n = {}, alpha = {}; graph has n = {}, alpha = {}",
                    table.n,
                    table.alpha,
                    g.n(),
                    params.alpha
                );
            }
            Ok(table.results)
        }
        (None, Some(t)) => Ok(backward_push_many(g, &parse_nodes(t)?, params.alpha, params.r_max_t)?.0),
        (None, None) => Ok(Vec::new()),
    }
}

pub fn distributed_run(g: &Graph, c: &Common, d: &DistArgs) -> Result<(Vec<usize>, Vec<PushResult>, DistributedRun)> {
    let sources = parse_nodes(&d.sources)?;
    let params = resolve_params(c, g.n(), Flavor::Practical)?;
    let k = c.k.ok_or_else(|| anyhow!("--k is required"))?;
    let labels = match &d.labels {
        Some(l) => Some(parse_nodes(l)?),
        None => g.labels().map(|l| sources.iter().map(|&v| l[v]).collect()),
    };
    let targets = target_pushes(g, d, &params)?;
    let cfg = DistributedConfig { k, scheme: scheme(c.scheme.as_deref(), labels)?, params, practical_forward: true };
    let run = run_distributed_estimation(g, &sources, &targets, &cfg)?;
    Ok((sources, targets, run))
}

pub fn run(cmd: &Command, c: &Common) -> Result<()> {
    let out = c.out.as_deref();
    match cmd {
        Command::GenEr { n, p } => save_graph(&generate_directed_er(*n, *p, c.seed)?, out),
        Command::GenSbm { n, deg_in, deg_out } => {
            let k = c.k.ok_or_else(|| anyhow!("--k (communities) is required"))?;
            save_graph(&generate_directed_sbm(*n, k, *deg_in, *deg_out, c.seed)?, out)
        }
        Command::Pair { source, target, method } => {
            let g = load_graph(c.graph.as_deref())?;
            let flavor = if method == "bidirectional" { Flavor::Bidirectional } else { Flavor::Practical };
            let params = resolve_params(c, g.n(), flavor)?;
            let estimator = match method.as_str() {
                "fwbw" => fwbw_mcmc_single,
                "practical" | "fwbw-practical" => fwbw_mcmc_practical,
                "bidirectional" => bidirectional_ppr,
                other => bail!("unknown method {other:?} (fwbw, practical, bidirectional)"),
            };
            let (est, wall) = timed(c.record_timings, || estimator(&g, *source, *target, &params));
            let est = est?;
            let mut w = csv_out(out, &ESTIMATE_HEADER)?;
            w.write_record([
                est.method.tag().to_string(),
                source.to_string(),
                target.to_string(),
                est.value.to_string(),
                est.walks_used.to_string(),
                est.push_iterations.to_string(),
                "0".into(),
                String::new(),
                "0".into(),
                String::new(),
                wall.to_string(),
            ])?;
            Ok(w.flush()?)
        }
        Command::Many(SetArgs { sources, targets }) => {
            let g = load_graph(c.graph.as_deref())?;
            let mode = many_mode(c.mode.as_deref())?;
            let flavor = if mode == ManyMode::Baseline { Flavor::Bidirectional } else { Flavor::Practical };
            let params = resolve_params(c, g.n(), flavor)?;
            let (s, t) = (parse_nodes(sources)?, parse_nodes(targets)?);
            let (est, wall) = timed(c.record_timings, || estimate_many_pairs(&g, &s, &t, &params, mode));
            let mut w = csv_out(out, &ESTIMATE_HEADER)?;
            write_many(&mut w, &est?, &format!("many-{}", mode.tag()), wall)?;
            Ok(w.flush()?)
        }
        Command::Matrix { sets, budget, practical_forward, clamp, dense_out } => {
            let g = load_graph(c.graph.as_deref())?;
            let params = resolve_params(c, g.n(), Flavor::Practical)?;
            let budget = match (c.walks, budget.as_str()) {
                (Some(w), _) => MatrixBudget::Fixed(w),
                (None, "theorem") => MatrixBudget::Theorem { eps: params.eps, p_fail: params.p_fail, srank: None },
                (None, "practical") => MatrixBudget::Practical { srank: None },
                (None, other) => bail!("unknown budget {other:?} (theorem, practical)"),
            };
            let opts = MatrixOptions {
                mode: matrix_mode(c.mode.as_deref())?,
                budget,
                practical_forward: *practical_forward,
                clamp_negative: *clamp,
            };
            let (s, t) = (parse_nodes(&sets.sources)?, parse_nodes(&sets.targets)?);
            let (est, wall) = timed(c.record_timings, || approx_matrix(&g, &s, &t, &params, &opts));
            let est = est?;
            if est.outside_theorem {
                eprintln!("note: this configuration is outside the sample-count guarantee");
            }
            if let Some(p) = dense_out {
                write_dense(p, &est)?;
            }
            let mut w = csv_out(out, &ESTIMATE_HEADER)?;
            write_matrix(&mut w, &est, wall)?;
            Ok(w.flush()?)
        }
        Command::PrecomputeTargets { targets } => {
            let g = load_graph(c.graph.as_deref())?;
            let dir = out.ok_or_else(|| anyhow!("--out (directory) is required"))?;
            let params = resolve_params(c, g.n(), Flavor::Practical)?;
            let (results, stats) = backward_push_many(&g, &parse_nodes(targets)?, params.alpha, params.r_max_t)?;
            std::fs::create_dir_all(dir)?;
            write_push_table(dir, &results, params.alpha, params.r_max_t)?;
            let mut w = csv_out(None, &["targets", "iterations", "merge_count"])?;
            w.write_record([
                results.len().to_string(),
                stats.total_iterations().to_string(),
                stats.merge_count.to_string(),
            ])?;
            Ok(w.flush()?)
        }
        Command::Partition(d) => {
            let g = load_graph(c.graph.as_deref())?;
            let (sources, _, run) = distributed_run(&g, c, d)?;
            let tag = scheme(c.scheme.as_deref(), Some(Vec::new()))?.tag();
            let mut w = csv_out(out, &["scheme", "machine", "source"])?;
            for (j, part) in run.partition.parts.iter().enumerate() {
                for &i in part {
                    w.write_record([tag.to_string(), j.to_string(), sources[i].to_string()])?;
                }
            }
            eprintln!("objective_max {} objective_srank {}", run.objective_max, opt(run.objective_srank));
            Ok(w.flush()?)
        }
        Command::Distributed { dist, estimates_out } => {
            let g = load_graph(c.graph.as_deref())?;
            let (sources, targets, run) = distributed_run(&g, c, dist)?;
            let tag = scheme(c.scheme.as_deref(), Some(Vec::new()))?.tag();
            let mut w = csv_out(
                out,
                &[
                    "scheme",
                    "machine",
                    "sources",
                    "walks",
                    "push_work",
                    "modeled_ms",
                    "wall_ms",
                    "objective_max",
                    "objective_srank",
                ],
            )?;
            for m in &run.machines {
                let wall = if c.record_timings { m.wall_time_ms } else { 0.0 };
                w.write_record([
                    tag.to_string(),
                    m.machine_id.to_string(),
                    m.sources.to_string(),
                    m.walks.to_string(),
                    m.push_work.to_string(),
                    m.modeled_time_ms.to_string(),
                    wall.to_string(),
                    run.objective_max.to_string(),
                    opt(run.objective_srank),
                ])?;
            }
            w.flush()?;
            if let Some(p) = estimates_out {
                if targets.is_empty() {
                    bail!("--estimates-out needs --targets or --store");
                }
                let mut e = csv_out(Some(p), &ESTIMATE_HEADER)?;
                let machine_of = run.partition.assignment(sources.len());
                for (i, &s) in sources.iter().enumerate() {
                    let walks = run.machines[machine_of[i]].walks;
                    for (j, t) in targets.iter().enumerate() {
                        e.write_record([
                            format!("distributed-{tag}"),
                            s.to_string(),
                            t.origin.to_string(),
                            run.estimates[i][j].to_string(),
                            walks.to_string(),
                            String::new(),
                            String::new(),
                            String::new(),
                            String::new(),
                            String::new(),
                            "0".into(),
                        ])?;
                    }
                }
                e.flush()?;
            }
            Ok(())
        }
        Command::Metrics { sets, exact } => {
            let g = load_graph(c.graph.as_deref())?;
            let params = resolve_params(c, g.n(), Flavor::Practical)?;
            let (s, t) = (parse_nodes(&sets.sources)?, parse_nodes(&sets.targets)?);
            let cfg = protocol(&params, s.len(), *exact);
            let row = correlation_row(&g, &cfg, 0, c.seed, &s, &t)?;
            let mut w = csv_out(out, &METRICS_HEADER)?;
            w.write_record(metrics_record(&row, s.len(), t.len()))?;
            Ok(w.flush()?)
        }
        Command::Bench { sweep } => crate::bench::run(sweep, c),
    }
}

pub fn protocol(params: &EstimatorParams, set_size: usize, exact: bool) -> ProtocolConfig {
    ProtocolConfig {
        set_size,
        levels: Vec::new(),
        seeds: Vec::new(),
        alpha: params.alpha,
        r_tilde_max_s: params.r_tilde_max_s,
        r_max_t: params.r_max_t,
        ct_source: if exact { CtSource::Oracle { tol: 1e-10 } } else { CtSource::Proxy { eta: None } },
    }
}
