mod common;

use std::fs;

use gmmee_lab::experiment::{monte_carlo_filters, run_comparison, tune_kernels};
use gmmee_lab::report::{metrics_csv, read_report, METRICS_COLUMNS, MONTE_CARLO_COLUMNS, PLOT_COLUMNS, REPORT_SCHEMA};
use gmmee_lab::{emit_report, run_experiment, FilterConfig, Format, Report};
use gmmee::tsga::Bound;
use tempfile::TempDir;

fn read_csv(path: &std::path::Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let h = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r.records().map(|x| x.unwrap().iter().map(String::from).collect()).collect();
    (h, rows)
}

fn sample_reports() -> Vec<Report> {
    let cfg = common::uniform(common::reference_gmmee(), 300);
    let run = run_experiment(&cfg, Some(1)).unwrap();
    let mut cmp_cfg = cfg.clone();
    cmp_cfg.compare = Some(vec![FilterConfig::Srckf, common::reference_gmmee()]);
    let cmp = run_comparison(&cmp_cfg, Some(1)).unwrap();
    let mc = monte_carlo_filters(&cfg, &[FilterConfig::Srckf, cfg.filter], 5, 3).unwrap();
    let mut tcfg = cfg.clone();
    let mut t = gmmee_lab::config::TuneSettings { fitness_trials: 1, fresh_trials: 2, ..Default::default() };
    t.optimizer.population = 4;
    t.optimizer.max_iter = 2;
    t.optimizer.bounds = vec![Bound::linear(1.5, 3.0), Bound::linear(2.0, 4.0), Bound::log(1.0, 30.0), Bound::log(0.1, 1.0)];
    tcfg.tsga = Some(t);
    let tune = tune_kernels(&tcfg, 9).unwrap();
    vec![Report::Run(run), Report::Comparison(cmp), Report::MonteCarlo(mc), Report::Tune(Box::new(tune))]
}

#[test]
fn reports_round_trip_and_validate() {
    let schema: serde_json::Value = serde_json::from_str(REPORT_SCHEMA).unwrap();
    let validator = jsonschema::validator_for(&schema).unwrap();
    let dir = TempDir::new().unwrap();
    for (i, rep) in sample_reports().into_iter().enumerate() {
        let json = dir.path().join(format!("r{i}.json"));
        assert_eq!(emit_report(&rep, Format::Json, &json).unwrap(), vec![json.clone()]);
        let value: serde_json::Value = serde_json::from_str(&fs::read_to_string(&json).unwrap()).unwrap();
        let errors: Vec<String> = validator.iter_errors(&value).map(|e| format!("{e} at {}", e.instance_path())).collect();
        assert!(errors.is_empty(), "report {i}: {errors:?}");
        let back = read_report(&json).unwrap();
        assert_eq!(back, rep);

        // json → csv: the numbers survive formatting.
        let csv_path = dir.path().join(format!("r{i}.csv"));
        emit_report(&back, Format::Csv, &csv_path).unwrap();
        let (h, rows) = read_csv(&csv_path);
        match &rep {
            Report::Run(r) => {
                assert_eq!(h, METRICS_COLUMNS);
                assert_eq!(rows[0][4].parse::<f64>().unwrap(), r.rmse());
                assert_eq!(rows[0][1].parse::<usize>().unwrap(), r.steps);
            }
            Report::Comparison(t) => {
                assert_eq!(h, METRICS_COLUMNS);
                for (row, r) in rows.iter().zip(&t.rows) {
                    assert_eq!(row[0], r.filter);
                    assert_eq!(row[2].parse::<f64>().unwrap(), r.mae());
                    assert_eq!(row[7].parse::<f64>().unwrap(), r.timing.mean_ms);
                }
            }
            Report::MonteCarlo(v) => {
                assert_eq!(h, MONTE_CARLO_COLUMNS);
                assert_eq!(rows.len(), v.len());
                assert_eq!(rows[1][3].parse::<f64>().unwrap(), v[1].mean);
            }
            Report::Tune(t) => {
                assert_eq!(rows[0][0].parse::<f64>().unwrap(), t.best_params[0]);
                assert_eq!(rows[0][4].parse::<f64>().unwrap(), t.best_fitness);
            }
        }
    }
}

#[test]
fn schema_rejects_malformed_reports() {
    let schema: serde_json::Value = serde_json::from_str(REPORT_SCHEMA).unwrap();
    let validator = jsonschema::validator_for(&schema).unwrap();
    let good = serde_json::to_value(&sample_reports()[0]).unwrap();
    assert!(validator.is_valid(&good));
    let mut bad = good.clone();
    bad["kind"] = "nonsense".into();
    assert!(!validator.is_valid(&bad));
    let mut bad = good.clone();
    bad["data"]["steps"] = (-3).into();
    assert!(!validator.is_valid(&bad));
    let mut bad = good;
    bad["data"].as_object_mut().unwrap().remove("timing");
    assert!(!validator.is_valid(&bad));
}

#[test]
fn plotdata_layout() {
    let dir = TempDir::new().unwrap();
    let reports = sample_reports();

    let Report::Run(run) = &reports[0] else { unreachable!() };
    let out = dir.path().join("run.csv");
    assert_eq!(emit_report(&reports[0], Format::Plotdata, &out).unwrap(), vec![out.clone()]);
    let (h, rows) = read_csv(&out);
    assert_eq!(h, PLOT_COLUMNS);
    assert_eq!(rows.len(), 300);
    assert_eq!(rows.len(), run.steps);
    let last = &rows[299];
    let diff = (last[2].parse::<f64>().unwrap() - last[3].parse::<f64>().unwrap()).abs();
    assert!((diff - last[4].parse::<f64>().unwrap()).abs() < 1e-9);

    let out = dir.path().join("cmp.csv");
    let files = emit_report(&reports[1], Format::Plotdata, &out).unwrap();
    let names: Vec<String> = files.iter().map(|p| p.file_name().unwrap().to_string_lossy().into_owned()).collect();
    assert_eq!(names, ["cmp_srckf.csv", "cmp_gmmee.csv"]);
    for f in &files {
        assert_eq!(read_csv(f).1.len(), 300);
    }

    let out = dir.path().join("mc.csv");
    let files = emit_report(&reports[2], Format::Plotdata, &out).unwrap();
    assert_eq!(files.len(), 3);
    assert_eq!(read_csv(&files[0]).1.len(), 6);
    let (h, rows) = read_csv(&files[2]);
    assert_eq!(h[2..], ["q1_abs_err_pct", "median_abs_err_pct", "q3_abs_err_pct"]);
    assert_eq!(rows.len(), 300);
    for r in &rows {
        let q: Vec<f64> = r[2..].iter().map(|v| v.parse().unwrap()).collect();
        assert!(q[0] <= q[1] && q[1] <= q[2]);
    }

    let out = dir.path().join("tune.csv");
    let files = emit_report(&reports[3], Format::Plotdata, &out).unwrap();
    let Report::Tune(t) = &reports[3] else { unreachable!() };
    let hist = read_csv(&files[0]).1;
    assert_eq!(hist.len(), t.history.len());
    let fitness: Vec<f64> = hist.iter().map(|r| r[1].parse().unwrap()).collect();
    assert!(fitness.windows(2).all(|w| w[1] <= w[0]));
}

#[test]
fn text_table_and_csv_share_rows() {
    let reports = sample_reports();
    let Report::Comparison(t) = &reports[1] else { unreachable!() };
    let text = gmmee_lab::report::comparison_text(t);
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines[0].contains("MAX(ms)") && lines[0].contains("MEAN(ms)"));
    assert_eq!(lines.len(), 1 + t.rows.len());
    let csv = String::from_utf8(metrics_csv(&reports[1]).unwrap()).unwrap();
    assert_eq!(csv.lines().count(), 1 + t.rows.len());
}

#[test]
fn unwritable_destination_is_io_error() {
    let reports = sample_reports();
    let err = emit_report(&reports[0], Format::Json, std::path::Path::new("/nonexistent-dir/x.json")).unwrap_err();
    assert_eq!(err.exit_code(), 1);
}
