//! Measurement traces and their CSV form
//! (`t_s,current_a,voltage_v,soc_true[,temp_c]`).

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::report::write_atomic;

/// Relative tolerance on sample-interval jitter.
pub const DT_JITTER_TOL: f64 = 1e-9;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    /// `synthetic` or the CSV path.
    pub source: String,
    pub dt: f64,
    pub temperature: Option<String>,
    pub seed: Option<u64>,
    /// True state-of-charge before the first sample, when known.
    pub soc_initial: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub t: Vec<f64>,
    pub current: Vec<f64>,
    pub voltage: Vec<f64>,
    /// Absent for estimation-only data.
    pub soc_true: Option<Vec<f64>>,
    pub temp_c: Option<Vec<f64>>,
    pub meta: DatasetMeta,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn dt(&self) -> f64 {
        self.meta.dt
    }

    /// Checks lengths, finiteness, truth range and uniform sampling.
    pub fn validate(&self) -> Result<()> {
        let n = self.t.len();
        if n < 2 {
            return Err(LabError::Data(format!("dataset needs at least 2 samples, got {n}")));
        }
        let same = |v: &Vec<f64>| v.len() == n;
        if !same(&self.current)
            || !same(&self.voltage)
            || !self.soc_true.as_ref().is_none_or(same)
            || !self.temp_c.as_ref().is_none_or(same)
        {
            return Err(LabError::Data("dataset traces differ in length".into()));
        }
        let all = self.t.iter().chain(&self.current).chain(&self.voltage);
        if !all.chain(self.soc_true.iter().flatten()).all(|v| v.is_finite()) {
            return Err(LabError::Data("dataset contains non-finite values".into()));
        }
        if let Some(s) = &self.soc_true {
            if let Some(k) = s.iter().position(|v| !(0.0..=1.0).contains(v)) {
                return Err(LabError::Data(format!("soc_true out of [0, 1] at row {k}: {}", s[k])));
            }
        }
        check_uniform(&self.t).map_err(|(row, jitter)| LabError::Data(format!("non-uniform dt at row {row} (jitter {jitter:.3e})")))?;
        Ok(())
    }
}

/// Constant interval of `t`, or the offending row and its relative jitter.
pub fn infer_dt(t: &[f64]) -> std::result::Result<f64, (usize, f64)> {
    check_uniform(t)
}

fn check_uniform(t: &[f64]) -> std::result::Result<f64, (usize, f64)> {
    let n = t.len();
    let dt = (t[n - 1] - t[0]) / (n - 1) as f64;
    if !(dt > 0.0) {
        return Err((1, f64::INFINITY));
    }
    for (k, w) in t.windows(2).enumerate() {
        let jitter = ((w[1] - w[0]) - dt).abs() / dt;
        if jitter > DT_JITTER_TOL {
            return Err((k + 1, jitter));
        }
    }
    Ok(dt)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TruthMode {
    /// `soc_true` must be present.
    Required,
    /// `soc_true` may be absent; metrics are then unavailable.
    Optional,
}

/// Loads a dataset whose `soc_true` column is mandatory.
pub fn load_dataset_csv(path: &Path) -> Result<Dataset> {
    load_dataset_csv_with(path, TruthMode::Required)
}

pub fn load_dataset_csv_with(path: &Path, truth: TruthMode) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let headers = rdr.headers().map_err(|e| csv_error(path, e))?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let schema = |msg: String| LabError::Schema { path: path.to_path_buf(), msg };
    let need = |name: &str| col(name).ok_or_else(|| schema(format!("missing column `{name}`")));
    let (ct, ci, cv) = (need("t_s")?, need("current_a")?, need("voltage_v")?);
    let cs = match (col("soc_true"), truth) {
        (None, TruthMode::Required) => return Err(schema("missing column `soc_true`".into())),
        (c, _) => c,
    };
    let ctemp = col("temp_c");

    let mut ds = Dataset {
        t: Vec::new(),
        current: Vec::new(),
        voltage: Vec::new(),
        soc_true: cs.map(|_| Vec::new()),
        temp_c: ctemp.map(|_| Vec::new()),
        meta: DatasetMeta { source: path.display().to_string(), ..Default::default() },
    };
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        let field = |c: usize| -> Result<f64> {
            let raw = rec.get(c).unwrap_or("");
            raw.parse::<f64>().map_err(|_| LabError::Parse {
                path: path.to_path_buf(),
                line,
                msg: format!("column `{}`: cannot parse `{raw}` as a number", &headers[c]),
            })
        };
        ds.t.push(field(ct)?);
        ds.current.push(field(ci)?);
        ds.voltage.push(field(cv)?);
        if let (Some(c), Some(v)) = (cs, ds.soc_true.as_mut()) {
            v.push(field(c)?);
        }
        if let (Some(c), Some(v)) = (ctemp, ds.temp_c.as_mut()) {
            v.push(field(c)?);
        }
    }
    if ds.t.len() < 2 {
        return Err(LabError::Data(format!("{}: need at least 2 rows, got {}", path.display(), ds.t.len())));
    }
    ds.meta.dt = infer_dt(&ds.t).map_err(|(row, jitter)| LabError::Jitter { path: path.to_path_buf(), row, jitter })?;
    ds.validate()?;
    Ok(ds)
}

fn csv_error(path: &Path, e: csv::Error) -> LabError {
    let line = e.position().map_or(0, |p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(source) => LabError::io(path, source),
        kind => LabError::Parse { path: path.to_path_buf(), line, msg: format!("{kind:?}") },
    }
}

/// Writes the dataset with shortest round-trip float formatting.
pub fn write_dataset_csv(ds: &Dataset, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["t_s", "current_a", "voltage_v"];
    if ds.soc_true.is_some() {
        header.push("soc_true");
    }
    if ds.temp_c.is_some() {
        header.push("temp_c");
    }
    let werr = |e: csv::Error| LabError::Data(format!("csv encoding: {e}"));
    w.write_record(&header).map_err(werr)?;
    for k in 0..ds.len() {
        let mut row = vec![ds.t[k].to_string(), ds.current[k].to_string(), ds.voltage[k].to_string()];
        if let Some(s) = &ds.soc_true {
            row.push(s[k].to_string());
        }
        if let Some(s) = &ds.temp_c {
            row.push(s[k].to_string());
        }
        w.write_record(&row).map_err(werr)?;
    }
    let bytes = w.into_inner().map_err(|e| LabError::Data(format!("csv encoding: {e}")))?;
    write_atomic(path, &bytes)
}
