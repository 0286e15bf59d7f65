use std::path::Path;
use std::process::{Command, Output};

fn ppr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ppr")).args(args).env_remove("PPR_SEED").output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = ppr(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn sbm(dir: &Path, n: &str, k: &str) -> String {
    let g = dir.join("g.tsv").to_string_lossy().into_owned();
    ok(&["gen-sbm", "--n", n, "--k", k, "--seed", "1", "--out", &g]);
    g
}

fn column(csv: &str, name: &str) -> Vec<String> {
    let mut lines = csv.lines();
    let idx = lines.next().unwrap().split(',').position(|h| h == name).unwrap();
    lines.map(|l| l.split(',').nth(idx).unwrap().to_string()).collect()
}

#[test]
fn help_documents_columns() {
    let out = ok(&["--help"]);
    for col in ["method", "estimate", "push_iters", "merge_count", "sigma_inf1", "c_T", "srank_surrogate", "wall_ms"] {
        assert!(out.contains(col), "help lacks {col}");
    }
}

#[test]
fn missing_graph_is_an_error() {
    let out = ppr(&["many", "--graph", "/nonexistent/g.tsv", "--sources", "0", "--targets", "1"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("opening graph"));
}

#[test]
fn bad_flags_print_usage() {
    let out = ppr(&["pair", "--source", "0"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    let dir = tempfile::tempdir().unwrap();
    let g = sbm(dir.path(), "100", "4");
    let out = ppr(&["pair", "--graph", &g, "--source", "0", "--target", "1", "--method", "nope"]);
    assert!(!out.status.success());
}

#[test]
fn pair_prints_one_estimate() {
    let dir = tempfile::tempdir().unwrap();
    let g = dir.path().join("er.tsv").to_string_lossy().into_owned();
    ok(&["gen-er", "--n", "300", "--p", "0.02", "--out", &g]);
    let out =
        ok(&["pair", "--graph", &g, "--source", "0", "--target", "5", "--method", "fwbw", "--profile", "direct-er"]);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0], "method,s,t,estimate,walks,push_iters,merge_count,sigma_inf1,c_T,srank_surrogate,wall_ms");
    assert!(lines[1].starts_with("fwbw,0,5,"));
    let est: f64 = column(&out, "estimate")[0].parse().unwrap();
    assert!((0.0..=1.0).contains(&est));
}

#[test]
fn seed_env_and_flag() {
    let dir = tempfile::tempdir().unwrap();
    let g = sbm(dir.path(), "200", "4");
    let run = |env: Option<&str>, flag: Option<&str>| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_ppr"));
        cmd.args(["many", "--graph", &g, "--sources", "0-4", "--targets", "5-9", "--walks", "50"]);
        if let Some(f) = flag {
            cmd.args(["--seed", f]);
        }
        match env {
            Some(e) => cmd.env("PPR_SEED", e),
            None => cmd.env_remove("PPR_SEED"),
        };
        cmd.output().unwrap().stdout
    };
    assert_eq!(run(None, None), run(None, None));
    assert_eq!(run(Some("9"), None), run(None, Some("9")));
    assert_ne!(run(None, Some("9")), run(None, Some("10")));
    assert_eq!(run(Some("3"), Some("9")), run(None, Some("9")));
}

#[test]
fn timings_zero_unless_recorded() {
    let dir = tempfile::tempdir().unwrap();
    let g = sbm(dir.path(), "200", "4");
    let base = ["many", "--graph", &g, "--sources", "0-9", "--targets", "10-19"];
    assert!(column(&ok(&base), "wall_ms").iter().all(|v| v == "0"));
    let mut timed = base.to_vec();
    timed.push("--record-timings");
    assert!(column(&ok(&timed), "wall_ms").iter().all(|v| v.parse::<f64>().unwrap() >= 0.0));
}

#[test]
fn zero_trials_is_header_only() {
    let dir = tempfile::tempdir().unwrap();
    let g = sbm(dir.path(), "200", "4");
    for sweep in ["growth", "real", "community", "distributed"] {
        let out = ok(&["bench", sweep, "--graph", &g, "--trials", "0"]);
        assert_eq!(out.lines().count(), 1, "{sweep}");
    }
}

#[test]
fn sbm_labels_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let g = sbm(dir.path(), "120", "6");
    let labels = std::fs::read_to_string(format!("{g}.labels")).unwrap();
    assert_eq!(labels.lines().count(), 120);
    // oracle scheme reads the labels back
    let out = ok(&["partition", "--graph", &g, "--sources", "0-9,20-29", "--k", "2", "--scheme", "oracle"]);
    let parts = column(&out, "machine");
    assert_eq!(parts[..10], vec!["0".to_string(); 10][..]);
    assert_eq!(parts[10..], vec!["1".to_string(); 10][..]);
}

#[test]
fn dense_matrix_export() {
    let dir = tempfile::tempdir().unwrap();
    let g = sbm(dir.path(), "200", "4");
    let dense = dir.path().join("m.csv");
    let out = ok(&[
        "matrix",
        "--graph",
        &g,
        "--sources",
        "0-1",
        "--targets",
        "3,4",
        "--walks",
        "500",
        "--dense-out",
        dense.to_str().unwrap(),
    ]);
    let text = std::fs::read_to_string(&dense).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "s,3,4");
    assert_eq!(lines.len(), 3);
    let long = column(&out, "estimate");
    assert_eq!(lines[1].split(',').nth(2).unwrap(), long[1]);
}

#[test]
fn precompute_then_distributed() {
    let dir = tempfile::tempdir().unwrap();
    let g = sbm(dir.path(), "200", "4");
    let store = dir.path().join("store");
    ok(&["precompute-targets", "--graph", &g, "--targets", "0-5", "--out", store.to_str().unwrap()]);
    assert!(store.join("index.tsv").exists());
    let est = dir.path().join("e.csv");
    let out = ok(&[
        "distributed",
        "--graph",
        &g,
        "--sources",
        "0-7",
        "--k",
        "2",
        "--scheme",
        "heuristic_avg",
        "--store",
        store.to_str().unwrap(),
        "--estimates-out",
        est.to_str().unwrap(),
    ]);
    assert_eq!(out.lines().count(), 3);
    assert_eq!(std::fs::read_to_string(&est).unwrap().lines().count(), 1 + 8 * 6);
    // alpha mismatch against the stored table
    let bad = ppr(&[
        "distributed",
        "--graph",
        &g,
        "--sources",
        "0-7",
        "--k",
        "2",
        "--alpha",
        "0.3",
        "--store",
        store.to_str().unwrap(),
    ]);
    assert!(!bad.status.success());
}

#[test]
fn growth_sweep_shared_walks_scale_slower() {
    let dir = tempfile::tempdir().unwrap();
    let g = dir.path().join("er.tsv").to_string_lossy().into_owned();
    ok(&["gen-er", "--n", "2000", "--p", "0.005", "--out", &g]);
    let out = ok(&["bench", "growth", "--graph", &g, "--profile", "direct-er", "--sizes", "10,100", "--trials", "1"]);
    let walks: Vec<u64> = column(&out, "walks").iter().map(|w| w.parse().unwrap()).collect();
    let methods = column(&out, "method");
    assert_eq!(methods, ["shared-practical", "baseline", "shared-practical", "baseline"]);
    let (shared_growth, base_growth) = (walks[2] as f64 / walks[0] as f64, walks[3] as f64 / walks[1] as f64);
    assert!(shared_growth < base_growth, "{shared_growth} vs {base_growth}");
}

#[test]
fn clustered_sets_share_walks() {
    let dir = tempfile::tempdir().unwrap();
    let g = sbm(dir.path(), "2000", "20");
    let out = ok(&["bench", "real", "--graph", &g, "--profile", "direct-sbm", "--sizes", "100", "--trials", "1"]);
    let kinds = column(&out, "set_kind");
    let walks: Vec<f64> = column(&out, "walks").iter().map(|w| w.parse().unwrap()).collect();
    let row = |kind: &str, i: usize| walks[kinds.iter().position(|k| k == kind).unwrap() + i];
    let ratio = row("clustered", 1) / row("clustered", 0);
    assert!(ratio >= 2.0, "baseline/shared walk ratio on clustered sets {ratio}");
}
