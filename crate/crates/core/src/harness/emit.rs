//! File output: CSV tables, `report.json` and an SVG histogram figure.
//!
//! Nothing time- or host-dependent is written, so reruns with the same
//! configuration produce identical files.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde_json::{json, Value};

use crate::diagnostics::{histogram_and_qq, normal_cdf, HistogramQq};
use crate::error::Result;
use crate::harness::config::EmitKind;
use crate::harness::experiment::{DivergenceOutcome, ExperimentOutcome, ReplicationOutcome};

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

fn fmt(v: f64) -> String {
    format!("{v:?}")
}

pub fn summaries_header(checkpoints: &[usize], dim: usize) -> Vec<String> {
    let mut h = vec!["replication_id".to_string()];
    h.extend(checkpoints.iter().map(|c| format!("projection_stat_at_{c}")));
    h.extend((1..=dim).map(|i| format!("zbar_{i}")));
    h.push("truncation_count".into());
    h
}

pub fn write_summaries(outcome: &ExperimentOutcome, path: &Path) -> Result<()> {
    let dim = outcome.config.z0.len();
    let with_stats = outcome.saddle.is_some();
    let cps: &[usize] = if with_stats { &outcome.checkpoints } else { &[] };
    let header = summaries_header(cps, dim);
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(&header)?;
    for s in &outcome.summaries {
        let mut rec = vec![s.replication_id.to_string()];
        match &s.outcome {
            ReplicationOutcome::Success(d) => {
                rec.extend(d.projection_stats.iter().map(|v| fmt(*v)));
                rec.extend(d.averaged_z.as_slice().iter().map(|v| fmt(*v)));
                rec.push(d.truncation_count.to_string());
            }
            ReplicationOutcome::Failure(_) => rec.resize(header.len(), String::new()),
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_trace(trace: &[(usize, f64, Option<f64>)], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["step", "distance", "suboptimality"])?;
    for (k, d, g) in trace {
        w.write_record([k.to_string(), fmt(*d), g.map(fmt).unwrap_or_default()])?;
    }
    w.flush()?;
    Ok(())
}

fn normal_density(x: f64, sigma: f64) -> f64 {
    (-(x / sigma).powi(2) / 2.0).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt())
}

pub fn write_histogram(h: &HistogramQq, sigma: f64, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["bin_left", "bin_right", "density", "normal_density"])?;
    for (i, d) in h.densities.iter().enumerate() {
        let (l, r) = (h.edges[i], h.edges[i + 1]);
        let mass = normal_cdf(r / sigma) - normal_cdf(l / sigma);
        w.write_record([fmt(l), fmt(r), fmt(*d), fmt(mass / (r - l))])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_qq(h: &HistogramQq, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["theoretical_quantile", "sample_quantile"])?;
    for (t, s) in &h.qq {
        w.write_record([fmt(*t), fmt(*s)])?;
    }
    w.flush()?;
    Ok(())
}

pub fn report_json(outcome: &ExperimentOutcome) -> Result<Value> {
    let failures: Vec<Value> = outcome
        .failures()
        .into_iter()
        .map(|(id, reason)| json!({ "replication_id": id, "reason": reason }))
        .collect();
    let truncations: Vec<usize> = outcome
        .summaries
        .iter()
        .filter_map(|s| s.data().map(|d| d.truncation_count))
        .collect();
    let last_truncation = outcome
        .summaries
        .iter()
        .filter_map(|s| s.data().and_then(|d| d.reinit_log.last().copied()))
        .max();
    Ok(json!({
        "config": serde_json::to_value(&outcome.config)?,
        "equilibrium": outcome.saddle.as_ref().map(|z| z.as_slice().to_vec()),
        "n_replications": outcome.config.n_replications,
        "successes": outcome.successes(),
        "failures": failures,
        "mean_averaged_z": outcome.mean_averaged_z,
        "truncations": {
            "total": truncations.iter().sum::<usize>(),
            "max_per_run": truncations.iter().max(),
            "last_step": last_truncation,
        },
        "q_star": outcome.theory.as_ref().map(|t| rows(&t.q_star)),
        "noise_covariance": outcome.theory.as_ref().map(|t| rows(&t.sigma)),
        "theoretical_covariance": outcome.theory.as_ref().map(|t| rows(&t.covariance)),
        "projection_variance_theoretical": outcome.theory.as_ref().map(|t| t.sigma2),
        "empirical_covariance": outcome.report.as_ref().map(|r| rows(&r.empirical)),
        "frobenius_rel_error": outcome.report.as_ref().map(|r| r.frobenius_rel_error),
        "projection_variances": outcome.report.as_ref().map(|r| &r.projection_variances),
        "ks": outcome.checkpoint_stats,
        "pass": outcome.passed(),
    }))
}

/// Histogram panels with the limiting normal density overlaid.
pub fn histogram_svg(panels: &[(usize, HistogramQq)], sigma: f64) -> String {
    let (pw, ph, pad) = (360.0, 240.0, 30.0);
    let width = pw * panels.len().max(1) as f64;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{ph}" viewBox="0 0 {width} {ph}">"#
    );
    for (p, (step, h)) in panels.iter().enumerate() {
        let x0 = p as f64 * pw;
        let (lo, hi) = (h.edges[0], h.edges[h.edges.len() - 1]);
        let peak = normal_density(0.0, sigma);
        let ymax = h.densities.iter().copied().fold(peak, f64::max) * 1.05;
        let sx = |x: f64| x0 + pad + (x - lo) / (hi - lo) * (pw - 2.0 * pad);
        let sy = |y: f64| ph - pad - y / ymax * (ph - 2.0 * pad);
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="18" font-family="sans-serif" font-size="13">n = {step}</text>"#,
            x0 + pad
        );
        for (i, d) in h.densities.iter().enumerate() {
            let (l, r) = (sx(h.edges[i]), sx(h.edges[i + 1]));
            let _ = writeln!(
                s,
                r##"<rect x="{l:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="#9ecae1" stroke="#3182bd" stroke-width="0.5"/>"##,
                sy(*d),
                (r - l).max(0.0),
                (ph - pad) - sy(*d)
            );
        }
        let pts: Vec<String> = (0..=200)
            .map(|i| {
                let x = lo + (hi - lo) * i as f64 / 200.0;
                format!("{:.2},{:.2}", sx(x), sy(normal_density(x, sigma)))
            })
            .collect();
        let _ = writeln!(
            s,
            r##"<polyline fill="none" stroke="#d62728" stroke-width="1.5" points="{}"/>"##,
            pts.join(" ")
        );
        let _ = writeln!(
            s,
            r##"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="#000"/>"##,
            x0 + pad,
            ph - pad,
            x0 + pw - pad,
            ph - pad
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Writes every requested artifact into `config.output_dir` and returns the paths.
pub fn emit_experiment(outcome: &ExperimentOutcome) -> Result<Vec<PathBuf>> {
    let cfg = &outcome.config;
    let dir = &cfg.output_dir;
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let sigma = outcome.theory.as_ref().map(|t| t.sigma2.sqrt());
    let mut panels = Vec::new();
    if let Some(sigma) = sigma {
        for (i, step) in outcome.checkpoints.iter().enumerate() {
            if let Ok(h) = histogram_and_qq(&outcome.projection_samples(i), cfg.hist_bins, sigma) {
                panels.push((*step, h));
            }
        }
    }
    if cfg.wants(EmitKind::Csv) {
        let p = dir.join("summaries.csv");
        write_summaries(outcome, &p)?;
        written.push(p);
        if let Some(trace) = &outcome.trace {
            let p = dir.join("trace.csv");
            write_trace(trace, &p)?;
            written.push(p);
        }
        if let Some(sigma) = sigma {
            for (step, h) in &panels {
                let p = dir.join(format!("histogram_at_{step}.csv"));
                write_histogram(h, sigma, &p)?;
                written.push(p);
                let p = dir.join(format!("qq_at_{step}.csv"));
                write_qq(h, &p)?;
                written.push(p);
            }
        }
    }
    if cfg.wants(EmitKind::Json) {
        let p = dir.join("report.json");
        fs::write(&p, serde_json::to_string_pretty(&report_json(outcome)?)? + "\n")?;
        written.push(p);
    }
    if cfg.wants(EmitKind::Svg) {
        if let Some(sigma) = sigma {
            let p = dir.join("histogram.svg");
            fs::write(&p, histogram_svg(&panels, sigma))?;
            written.push(p);
        }
    }
    Ok(written)
}

pub fn emit_divergence(outcome: &DivergenceOutcome, dir: &Path, emit: &[EmitKind]) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    if emit.contains(&EmitKind::Csv) {
        let p = dir.join("divergence.csv");
        let mut w = csv::Writer::from_path(&p)?;
        w.write_record(["step", "sgda_mean_sq_norm", "sgda_se", "seg_mean_sq_norm", "seg_mean_norm"])?;
        let opt = |v: Option<f64>| v.map(fmt).unwrap_or_default();
        for r in &outcome.rows {
            w.write_record([
                r.step.to_string(),
                opt(r.sgda_mean_sq_norm),
                opt(r.sgda_se),
                opt(r.seg_mean_sq_norm),
                opt(r.seg_mean_norm),
            ])?;
        }
        w.flush()?;
        written.push(p);
    }
    if emit.contains(&EmitKind::Json) {
        let p = dir.join("divergence.json");
        let v = json!({
            "config": outcome.config,
            "one_step_prediction": outcome.one_step_prediction,
            "one_step_mean": outcome.one_step_mean,
            "one_step_se": outcome.one_step_se,
            "one_step_pass": outcome.one_step_pass,
            "sgda_growth_pass": outcome.sgda_growth_pass,
            "seg_final_mean_norm": outcome.seg_final_mean_norm,
            "seg_converged_pass": outcome.seg_converged_pass,
            "failures": outcome.failures,
            "pass": outcome.passed(),
        });
        fs::write(&p, serde_json::to_string_pretty(&v)? + "\n")?;
        written.push(p);
    }
    Ok(written)
}
