//! Report envelope and its JSON, CSV and plot-data renderings.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::experiment::{ComparisonTable, MonteCarloSummary, TuneReport};
use crate::metrics::MetricsReport;

pub const REPORT_SCHEMA: &str = include_str!("../schema/report.schema.json");

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "data", rename_all = "snake_case")]
pub enum Report {
    Run(MetricsReport),
    Comparison(ComparisonTable),
    MonteCarlo(Vec<MonteCarloSummary>),
    Tune(Box<TuneReport>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Json,
    Csv,
    Plotdata,
}

/// Writes `bytes` next to `path` and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path.file_name().ok_or_else(|| LabError::Data(format!("{} is not a file path", path.display())))?;
    let tmp = dir.join(format!(".{}.{}.tmp", name.to_string_lossy(), std::process::id()));
    let res = fs::File::create(&tmp)
        .and_then(|mut f| f.write_all(bytes).and_then(|_| f.sync_all()))
        .and_then(|_| fs::rename(&tmp, path));
    if let Err(e) = res {
        let _ = fs::remove_file(&tmp);
        return Err(LabError::io(path, e));
    }
    Ok(())
}

pub fn read_report(path: &Path) -> Result<Report> {
    let text = fs::read_to_string(path).map_err(|e| LabError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| LabError::Parse { path: path.to_path_buf(), line: e.line() as u64, msg: e.to_string() })
}

/// Renders `report` to `out`. Plot data for multi-row reports goes to one file
/// per row, named `<stem>_<row>.csv`. Returns the written paths.
pub fn emit_report(report: &Report, format: Format, out: &Path) -> Result<Vec<PathBuf>> {
    match format {
        Format::Json => {
            let json = serde_json::to_vec_pretty(report).map_err(|e| LabError::Data(format!("report encoding: {e}")))?;
            write_atomic(out, &json)?;
            Ok(vec![out.to_path_buf()])
        }
        Format::Csv => {
            write_atomic(out, &metrics_csv(report)?)?;
            Ok(vec![out.to_path_buf()])
        }
        Format::Plotdata => {
            let files = plot_files(report)?;
            if let [(None, bytes)] = files.as_slice() {
                write_atomic(out, bytes)?;
                return Ok(vec![out.to_path_buf()]);
            }
            let mut paths = Vec::with_capacity(files.len());
            for (suffix, bytes) in files {
                let p = suffixed(out, suffix.as_deref().unwrap_or("plot"));
                write_atomic(&p, &bytes)?;
                paths.push(p);
            }
            Ok(paths)
        }
    }
}

fn suffixed(out: &Path, suffix: &str) -> PathBuf {
    let stem = out.file_stem().map_or_else(|| "report".into(), |s| s.to_string_lossy().into_owned());
    let ext = out.extension().map_or_else(|| "csv".into(), |s| s.to_string_lossy().into_owned());
    out.with_file_name(format!("{stem}_{}.{ext}", suffix.to_lowercase()))
}

struct Csv(csv::Writer<Vec<u8>>);

impl Csv {
    fn new() -> Self {
        Csv(csv::Writer::from_writer(Vec::new()))
    }

    fn row<I: IntoIterator<Item = String>>(&mut self, fields: I) -> Result<()> {
        self.0.write_record(fields.into_iter().collect::<Vec<_>>()).map_err(|e| LabError::Data(format!("csv encoding: {e}")))
    }

    fn header(&mut self, names: &[&str]) -> Result<()> {
        self.row(names.iter().map(|s| s.to_string()))
    }

    fn finish(self) -> Result<Vec<u8>> {
        self.0.into_inner().map_err(|e| LabError::Data(format!("csv encoding: {e}")))
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub const METRICS_COLUMNS: [&str; 12] =
    ["filter", "steps", "mae", "mse", "rmse", "max_abs", "max_ms", "mean_ms", "fp_cap", "fallback", "cov_repaired", "cost_decrease"];

fn metrics_row(r: &MetricsReport) -> Vec<String> {
    let e = r.errors;
    vec![
        r.filter.clone(),
        r.steps.to_string(),
        opt(e.map(|e| e.mae)),
        opt(e.map(|e| e.mse)),
        opt(e.map(|e| e.rmse)),
        opt(e.map(|e| e.max_abs)),
        r.timing.max_ms.to_string(),
        r.timing.mean_ms.to_string(),
        r.flags.fp_cap.to_string(),
        r.flags.fallback.to_string(),
        r.flags.cov_repaired.to_string(),
        r.flags.cost_decrease.to_string(),
    ]
}

pub const MONTE_CARLO_COLUMNS: [&str; 13] =
    ["filter", "trials", "failed", "mean", "std", "min", "q1", "median", "q3", "max", "max_ms", "mean_ms", "fallback"];

fn monte_carlo_row(s: &MonteCarloSummary) -> Vec<String> {
    vec![
        s.filter.clone(),
        s.trials.to_string(),
        s.failed.len().to_string(),
        s.mean.to_string(),
        s.std.to_string(),
        s.min.to_string(),
        s.q1.to_string(),
        s.median.to_string(),
        s.q3.to_string(),
        s.max.to_string(),
        s.timing.max_ms.to_string(),
        s.timing.mean_ms.to_string(),
        s.flags.fallback.to_string(),
    ]
}

/// Metric tables: one row per filter (or the tuned kernel for tuning runs).
pub fn metrics_csv(report: &Report) -> Result<Vec<u8>> {
    let mut w = Csv::new();
    match report {
        Report::Run(r) => {
            w.header(&METRICS_COLUMNS)?;
            w.row(metrics_row(r))?;
        }
        Report::Comparison(t) => {
            w.header(&METRICS_COLUMNS)?;
            for r in &t.rows {
                w.row(metrics_row(r))?;
            }
        }
        Report::MonteCarlo(v) => {
            w.header(&MONTE_CARLO_COLUMNS)?;
            for s in v {
                w.row(monte_carlo_row(s))?;
            }
        }
        Report::Tune(t) => {
            w.header(&["alpha1", "alpha2", "beta1", "beta2", "best_fitness", "fresh_mean", "fresh_std", "evaluations", "wall_time_s"])?;
            let mut row: Vec<String> = t.best_params.iter().map(|p| p.to_string()).collect();
            row.extend([
                t.best_fitness.to_string(),
                t.fresh.mean.to_string(),
                t.fresh.std.to_string(),
                t.evaluations.to_string(),
                t.wall_time_s.to_string(),
            ]);
            w.row(row)?;
        }
    }
    w.finish()
}

pub const PLOT_COLUMNS: [&str; 5] = ["step", "t_s", "soc_true_pct", "soc_est_pct", "abs_err_pct"];

fn trace_csv(r: &MetricsReport) -> Result<Vec<u8>> {
    let mut w = Csv::new();
    w.header(&PLOT_COLUMNS)?;
    let tr = &r.trace;
    for k in 0..tr.len() {
        w.row([
            tr.step[k].to_string(),
            tr.t_s[k].to_string(),
            opt(tr.soc_true_pct.as_ref().map(|v| v[k])),
            tr.soc_est_pct[k].to_string(),
            opt(tr.abs_err_pct.as_ref().map(|v| v[k])),
        ])?;
    }
    w.finish()
}

fn bands_csv(s: &MonteCarloSummary) -> Result<Vec<u8>> {
    let mut w = Csv::new();
    w.header(&["step", "t_s", "q1_abs_err_pct", "median_abs_err_pct", "q3_abs_err_pct"])?;
    let b = &s.bands;
    for k in 0..b.t_s.len() {
        w.row([k.to_string(), b.t_s[k].to_string(), b.q1[k].to_string(), b.median[k].to_string(), b.q3[k].to_string()])?;
    }
    w.finish()
}

fn trial_rmse_csv(v: &[MonteCarloSummary]) -> Result<Vec<u8>> {
    let mut w = Csv::new();
    w.header(&["filter", "trial", "rmse"])?;
    for s in v {
        for (i, r) in s.rmse.iter().enumerate() {
            w.row([s.filter.clone(), i.to_string(), r.to_string()])?;
        }
    }
    w.finish()
}

fn plot_files(report: &Report) -> Result<Vec<(Option<String>, Vec<u8>)>> {
    Ok(match report {
        Report::Run(r) => vec![(None, trace_csv(r)?)],
        Report::Comparison(t) => t.rows.iter().map(|r| Ok((Some(r.filter.clone()), trace_csv(r)?))).collect::<Result<_>>()?,
        Report::MonteCarlo(v) => {
            let mut files = vec![(Some("trials".to_string()), trial_rmse_csv(v)?)];
            for s in v {
                files.push((Some(format!("{}_bands", s.filter)), bands_csv(s)?));
            }
            files
        }
        Report::Tune(t) => {
            let mut w = Csv::new();
            w.header(&["iteration", "best_fitness"])?;
            for (i, f) in t.history.iter().enumerate() {
                w.row([i.to_string(), f.to_string()])?;
            }
            vec![(Some("history".into()), w.finish()?), (Some("fresh_bands".into()), bands_csv(&t.fresh)?)]
        }
    })
}

/// Fixed-width text table of a comparison, in the MAE/MSE/RMSE plus timing layout.
pub fn comparison_text(t: &ComparisonTable) -> String {
    let mut s = format!(
        "{:<8} {:>10} {:>10} {:>10} {:>10} {:>10} {:>10}\n",
        "FILTER", "MAE(%)", "MSE(%²)", "RMSE(%)", "MAX(%)", "MAX(ms)", "MEAN(ms)"
    );
    for r in &t.rows {
        let e = r.errors;
        let f = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.4}"));
        s += &format!(
            "{:<8} {:>10} {:>10} {:>10} {:>10} {:>10.4} {:>10.4}\n",
            r.filter,
            f(e.map(|e| e.mae)),
            f(e.map(|e| e.mse)),
            f(e.map(|e| e.rmse)),
            f(e.map(|e| e.max_abs)),
            r.timing.max_ms,
            r.timing.mean_ms
        );
    }
    s
}
