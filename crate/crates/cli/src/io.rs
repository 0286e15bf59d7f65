use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use ppr_core::graph::{load_edge_list, LoadOptions};
use ppr_core::Graph;

pub type CsvOut = csv::Writer<Box<dyn Write>>;

pub fn sink(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(BufWriter::new(std::io::stdout())),
    })
}

pub fn csv_out(path: Option<&Path>, header: &[&str]) -> Result<CsvOut> {
    let mut w = csv::Writer::from_writer(sink(path)?);
    w.write_record(header)?;
    Ok(w)
}

pub fn labels_path(graph: &Path) -> PathBuf {
    let mut s = graph.as_os_str().to_owned();
    s.push(".labels");
    PathBuf::from(s)
}

pub fn load_graph(path: Option<&Path>) -> Result<Graph> {
    let Some(path) = path else { bail!("--graph is required") };
    let file = File::open(path).with_context(|| format!("opening graph {}", path.display()))?;
    let g = load_edge_list(BufReader::new(file), LoadOptions::default())
        .with_context(|| format!("reading graph {}", path.display()))?;
    let lp = labels_path(path);
    if !lp.exists() {
        return Ok(g);
    }
    let mut labels = Vec::with_capacity(g.n());
    for (i, line) in BufReader::new(File::open(&lp)?).lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        labels.push(line.parse().with_context(|| format!("{}:{}: bad label {line:?}", lp.display(), i + 1))?);
    }
    Ok(g.with_labels(labels)?)
}

pub fn save_graph(g: &Graph, path: Option<&Path>) -> Result<()> {
    let mut out = sink(path)?;
    g.write_edge_list(&mut out)?;
    out.flush()?;
    if let (Some(p), Some(labels)) = (path, g.labels()) {
        let mut lw = sink(Some(&labels_path(p)))?;
        for l in labels {
            writeln!(lw, "{l}")?;
        }
        lw.flush()?;
    }
    Ok(())
}

/// Parses `0-9,20,31` into ids.
pub fn parse_nodes(list: &str) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    for part in list.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        match part.split_once('-') {
            Some((a, b)) => {
                let (a, b): (usize, usize) = (a.trim().parse()?, b.trim().parse()?);
                if b < a {
                    bail!("empty range {part:?}");
                }
                out.extend(a..=b);
            }
            None => out.push(part.parse().with_context(|| format!("bad node id {part:?}"))?),
        }
    }
    if out.is_empty() {
        bail!("empty node list {list:?}");
    }
    Ok(out)
}

pub fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}
