//! Bundles the per-config outputs of an output directory into one summary.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{ensure, Context, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub window: String,
    pub signal: String,
    pub scheme: String,
    pub loss_ro: f64,
    pub loss_re: f64,
}

fn files_with_suffix(dir: &Path, suffix: &str) -> Result<Vec<PathBuf>> {
    let mut v: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("listing {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.ends_with(suffix)))
        .collect();
    v.sort();
    Ok(v)
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricRow>> {
    let mut rd = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    rd.deserialize()
        .map(|r| r.with_context(|| format!("parsing {}", path.display())))
        .collect()
}

/// Per-window rows of every metrics file, followed by suite averages per
/// scheme and signal taken over all windows.
pub fn suite_rows(files: &[PathBuf]) -> Result<Vec<MetricRow>> {
    let mut rows = Vec::new();
    for f in files {
        rows.extend(read_metrics(f)?.into_iter().filter(|r| r.window != "Average"));
    }
    let mut acc: BTreeMap<(String, String), (f64, f64, usize)> = BTreeMap::new();
    for r in &rows {
        let e = acc.entry((r.scheme.clone(), r.signal.clone())).or_default();
        e.0 += r.loss_ro;
        e.1 += r.loss_re;
        e.2 += 1;
    }
    for ((scheme, signal), (ro, re, k)) in acc {
        rows.push(MetricRow {
            window: "Average".into(),
            signal,
            scheme,
            loss_ro: ro / k as f64,
            loss_re: re / k as f64,
        });
    }
    Ok(rows)
}

/// Writes `suite_metrics.csv` and `report.md` into `dir` and returns the
/// report text.
pub fn bundle(dir: &Path) -> Result<String> {
    let metrics = files_with_suffix(dir, "_metrics.csv")?;
    let synth = files_with_suffix(dir, "_synthesis.txt")?;
    let analyses = files_with_suffix(dir, "_analysis.txt")?;
    ensure!(
        !metrics.is_empty() || !synth.is_empty(),
        "{} holds no synthesis or analysis outputs",
        dir.display()
    );
    let rows = suite_rows(&metrics)?;

    let mut wtr = csv::Writer::from_path(dir.join("suite_metrics.csv"))?;
    for r in &rows {
        wtr.serialize(r)?;
    }
    wtr.flush()?;

    let mut s = String::from("# Run summary\n");
    for f in synth.iter().chain(&analyses) {
        let name = f.file_name().unwrap().to_string_lossy();
        let _ = writeln!(s, "\n## {name}\n\n```text\n{}```", fs::read_to_string(f)?);
    }
    if !rows.is_empty() {
        let _ = writeln!(s, "\n## Loss metrics\n\n| window | signal | scheme | loss_Ro | loss_Re |\n|---|---|---|---|---|");
        for r in &rows {
            let _ = writeln!(s, "| {} | {} | {} | {:.4e} | {:.4e} |", r.window, r.signal, r.scheme, r.loss_ro, r.loss_re);
        }
    }
    fs::write(dir.join("report.md"), &s)?;
    Ok(s)
}
