use anyhow::{anyhow, bail, Result};
use ppr_core::distributed::{run_distributed_estimation, DistributedConfig, Scheme};
use ppr_core::estimators::{estimate_many_pairs, ManyMode};
use ppr_core::graph::{construct_clustered_set, uniform_node_set};
use ppr_core::metrics::clustering_correlation_protocol;
use ppr_core::rng::{self, TAG_SAMPLE};
use ppr_core::Graph;
use rand::seq::SliceRandom;

use crate::args::{Common, Sweep, SweepArgs};
use crate::commands::{protocol, resolve_params, timed, Flavor};
use crate::io::{csv_out, load_graph, opt, parse_nodes};

const SET_HEADER: [&str; 13] = [
    "sweep",
    "set_kind",
    "size",
    "trial",
    "seed",
    "method",
    "walks",
    "push_iters",
    "merge_count",
    "sigma_inf1",
    "c_T",
    "srank_surrogate",
    "wall_ms",
];

const COMMUNITY_HEADER: [&str; 9] =
    ["level", "seed", "phi_s", "sigma_inf1", "phi_t", "c_T", "c_T_ambiguous", "srank", "srank_surrogate"];

const DISTRIBUTED_HEADER: [&str; 11] = [
    "trial",
    "seed",
    "scheme",
    "k",
    "total_walks",
    "max_walks",
    "max_push_work",
    "objective_max",
    "objective_srank",
    "max_modeled_ms",
    "wall_ms",
];

pub fn run(sweep: &Sweep, c: &Common) -> Result<()> {
    let g = load_graph(c.graph.as_deref())?;
    let out = c.out.as_deref();
    match sweep {
        Sweep::Growth(a) => set_sweep(&g, c, a, "growth", &["uniform"]),
        Sweep::Real(a) => set_sweep(&g, c, a, "real", &["uniform", "clustered"]),
        Sweep::Community { levels, size, trials, exact } => {
            let mut w = csv_out(out, &COMMUNITY_HEADER)?;
            if *trials > 0 {
                if g.labels().is_none() {
                    bail!("community sweep needs a labelled graph");
                }
                let params = resolve_params(c, g.n(), Flavor::Practical)?;
                let mut cfg = protocol(&params, *size, *exact);
                cfg.levels = parse_nodes(levels)?;
                cfg.seeds = (0..*trials).map(|i| rng::mix(c.seed, TAG_SAMPLE, i, 0)).collect();
                for row in clustering_correlation_protocol(&g, &cfg)? {
                    w.write_record([
                        row.level.to_string(),
                        row.seed.to_string(),
                        row.phi_s.to_string(),
                        row.sigma_inf1.to_string(),
                        row.phi_t.to_string(),
                        row.c_t.to_string(),
                        row.c_t_ambiguous.to_string(),
                        row.srank.to_string(),
                        row.srank_surrogate.to_string(),
                    ])?;
                }
            }
            Ok(w.flush()?)
        }
        Sweep::Distributed { size, trials } => {
            let k = c.k.unwrap_or(10);
            let mut w = csv_out(out, &DISTRIBUTED_HEADER)?;
            for trial in 0..*trials {
                let seed = rng::mix(c.seed, TAG_SAMPLE, trial, k as u64);
                let (sources, labels) = planted_sources(&g, k, *size, seed)?;
                let mut params = resolve_params(c, g.n(), Flavor::Practical)?;
                params.seed = seed;
                for scheme in [Scheme::Baseline, Scheme::HeuristicMax, Scheme::Oracle(labels.clone())] {
                    let cfg = DistributedConfig { k, scheme, params: params.clone(), practical_forward: true };
                    let (res, wall) = timed(c.record_timings, || run_distributed_estimation(&g, &sources, &[], &cfg));
                    let res = res?;
                    let modeled = res.machines.iter().map(|m| m.modeled_time_ms).fold(0.0, f64::max);
                    w.write_record([
                        trial.to_string(),
                        seed.to_string(),
                        cfg.scheme.tag().to_string(),
                        k.to_string(),
                        res.total_walks.to_string(),
                        res.max_walks.to_string(),
                        res.max_push_work.to_string(),
                        res.objective_max.to_string(),
                        opt(res.objective_srank),
                        modeled.to_string(),
                        wall.to_string(),
                    ])?;
                }
            }
            Ok(w.flush()?)
        }
    }
}

/// `size` nodes from each of `k` random communities, shuffled, with their community index.
fn planted_sources(g: &Graph, k: usize, size: usize, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    let labels = g.labels().ok_or_else(|| anyhow!("distributed sweep needs a labelled graph"))?;
    let mut ids: Vec<usize> = labels.to_vec();
    ids.sort_unstable();
    ids.dedup();
    if ids.len() < k {
        bail!("graph has {} communities, need {k}", ids.len());
    }
    let mut rng = rng::stream(seed, TAG_SAMPLE, 0, 0);
    ids.shuffle(&mut rng);
    let mut picked: Vec<(usize, usize)> = Vec::with_capacity(k * size);
    for (j, &label) in ids[..k].iter().enumerate() {
        let mut members: Vec<usize> = (0..g.n()).filter(|&v| labels[v] == label).collect();
        if members.len() < size {
            bail!("community {label} has {} nodes, need {size}", members.len());
        }
        members.shuffle(&mut rng);
        picked.extend(members[..size].iter().map(|&v| (v, j)));
    }
    picked.shuffle(&mut rng);
    Ok(picked.into_iter().unzip())
}

fn set_sweep(g: &Graph, c: &Common, a: &SweepArgs, name: &str, kinds: &[&str]) -> Result<()> {
    let mut w = csv_out(c.out.as_deref(), &SET_HEADER)?;
    let sizes = parse_nodes(&a.sizes)?;
    for &size in &sizes {
        for trial in 0..a.trials {
            for (ki, &kind) in kinds.iter().enumerate() {
                let seed = rng::mix(c.seed, TAG_SAMPLE, size as u64, trial * kinds.len() as u64 + ki as u64);
                let mut rng = rng::stream(seed, TAG_SAMPLE, 0, 0);
                let mut draw = || -> Result<Vec<usize>> {
                    Ok(match kind {
                        "clustered" => construct_clustered_set(g, size, &mut rng)?.nodes,
                        _ => uniform_node_set(g, size, &mut rng)?,
                    })
                };
                let (s, t) = (draw()?, draw()?);
                for mode in [ManyMode::SharedPractical, ManyMode::Baseline] {
                    let flavor = if mode == ManyMode::Baseline { Flavor::Bidirectional } else { Flavor::Practical };
                    let mut params = resolve_params(c, g.n(), flavor)?;
                    params.seed = seed;
                    let (est, wall) = timed(c.record_timings, || estimate_many_pairs(g, &s, &t, &params, mode));
                    let st = est?.stats;
                    w.write_record([
                        name.to_string(),
                        kind.to_string(),
                        size.to_string(),
                        trial.to_string(),
                        seed.to_string(),
                        mode.tag().to_string(),
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
        }
    }
    Ok(w.flush()?)
}
