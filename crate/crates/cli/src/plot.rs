//! Plot-ready tables derived from a sweep's report directory. Nothing is
//! rendered here.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Deserialize;

use crate::sweep::BreakdownReport;

#[derive(Debug, Deserialize)]
struct TrajectoryRow {
    trial: usize,
    t: f64,
    x: f64,
    y: f64,
    theta: f64,
}

fn file_label(label: &str) -> String {
    label
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

/// Writes envelope, per-keyframe scatter and contraction tables for the
/// report in `report_dir` into `out_dir`, returning the files written.
pub fn emit_plots(report_dir: &Path, out_dir: &Path) -> Result<Vec<PathBuf>> {
    if !report_dir.join("summary.json").is_file() {
        bail!("missing report: no summary.json in {}", report_dir.display());
    }
    std::fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let mut files = Vec::new();
    let mut warnings: Vec<(String, String)> = Vec::new();

    let traj = report_dir.join("trajectories.csv");
    if traj.is_file() {
        let mut r = csv::Reader::from_path(&traj)?;
        let rows: Vec<TrajectoryRow> = r.deserialize().collect::<std::result::Result<_, _>>()?;
        let mut by_trial: BTreeMap<usize, Vec<&TrajectoryRow>> = BTreeMap::new();
        for row in &rows {
            by_trial.entry(row.trial).or_default().push(row);
        }

        let path = out_dir.join("envelope.csv");
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(["trial", "t", "x", "y", "theta", "dx", "dy", "dtheta"])?;
        for (trial, samples) in &by_trial {
            let s0 = samples[0];
            for s in samples {
                w.write_record([
                    trial.to_string(),
                    s.t.to_string(),
                    s.x.to_string(),
                    s.y.to_string(),
                    s.theta.to_string(),
                    (s.x - s0.x).to_string(),
                    (s.y - s0.y).to_string(),
                    (s.theta - s0.theta).to_string(),
                ])?;
            }
        }
        w.flush()?;
        files.push(path);

        // min / max / mean across trials at each sample index
        let path = out_dir.join("envelope_bounds.csv");
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record([
            "index",
            "t",
            "count",
            "x_min",
            "x_max",
            "x_mean",
            "y_min",
            "y_max",
            "y_mean",
            "theta_min",
            "theta_max",
            "theta_mean",
        ])?;
        let longest = by_trial.values().map(Vec::len).max().unwrap_or(0);
        for i in 0..longest {
            let at: Vec<&TrajectoryRow> = by_trial.values().filter_map(|s| s.get(i).copied()).collect();
            let mut rec = vec![i.to_string(), at[0].t.to_string(), at.len().to_string()];
            for get in [|r: &TrajectoryRow| r.x, |r: &TrajectoryRow| r.y, |r: &TrajectoryRow| r.theta] {
                let vals: Vec<f64> = at.iter().map(|r| get(r)).collect();
                let min = vals.iter().copied().fold(f64::INFINITY, f64::min);
                let max = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let mean = vals.iter().sum::<f64>() / vals.len() as f64;
                rec.extend([min.to_string(), max.to_string(), mean.to_string()]);
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        files.push(path);
        if by_trial.is_empty() {
            warnings.push(("no_trajectories".into(), "no trial was played".into()));
        }
    }

    let bd = report_dir.join("breakdown.json");
    if bd.is_file() {
        let text = std::fs::read_to_string(&bd)?;
        let report: BreakdownReport = serde_json::from_str(&text).with_context(|| format!("parsing {}", bd.display()))?;
        let path = out_dir.join("contraction.csv");
        let mut bars = csv::Writer::from_path(&path)?;
        bars.write_record(["label", "std_x", "std_y", "std_theta", "det", "det_ratio_to_first"])?;
        files.push(path);
        for label in &report.labels {
            let path = out_dir.join(format!("keyframe_{}.csv", file_label(label)));
            let mut w = csv::Writer::from_path(&path)?;
            w.write_record(["trial", "x", "y", "theta"])?;
            if let Some(k) = report.breakdown.as_ref().and_then(|b| b.get(label).ok()) {
                for (i, p) in k.poses.iter().enumerate() {
                    w.write_record([i.to_string(), p.x.to_string(), p.y.to_string(), p.theta.to_string()])?;
                }
            }
            w.flush()?;
            files.push(path);
        }
        match &report.breakdown {
            Some(b) => {
                let first = b.keyframes.first().map(|k| k.det).unwrap_or(0.0);
                for k in &b.keyframes {
                    let ratio = if first == 0.0 && k.det == 0.0 { 1.0 } else { k.det / first };
                    bars.write_record([
                        k.label.clone(),
                        k.std[0].to_string(),
                        k.std[1].to_string(),
                        k.std[2].to_string(),
                        k.det.to_string(),
                        ratio.to_string(),
                    ])?;
                }
            }
            None => warnings.push((
                "no_breakdown".into(),
                match report.successful_trials {
                    0 => "no successful trials".to_string(),
                    n => format!("{n} successful trial(s); at least 2 are needed"),
                },
            )),
        }
        bars.flush()?;
    }

    let path = out_dir.join("warnings.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["kind", "message"])?;
    for (k, m) in &warnings {
        w.write_record([k, m])?;
    }
    w.flush()?;
    files.push(path);
    Ok(files)
}
