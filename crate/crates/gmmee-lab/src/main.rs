use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use gmmee_lab::config::TraceSource;
use gmmee_lab::experiment::{self, build_dataset, monte_carlo_filters};
use gmmee_lab::report::{comparison_text, emit_report, read_report, Format, Report};
use gmmee_lab::{write_dataset_csv, ExperimentConfig, LabError, Result};

#[derive(Parser)]
#[command(name = "gmmee", version, about = "Robust SOC filter benchmark harness")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct ConfigArgs {
    /// Experiment config (JSON or TOML).
    #[arg(short, long)]
    config: PathBuf,
    /// Override a config value, e.g. `--set experiment.soc0=0.9`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Args)]
struct Output {
    #[arg(short, long)]
    out: Option<PathBuf>,
    #[arg(short, long, value_enum, default_value = "json")]
    format: Format,
}

#[derive(Subcommand)]
enum Cmd {
    /// Synthesize a noisy trace and write it as dataset CSV.
    Simulate {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        seed: u64,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Run the configured filter once.
    Run {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Required for synthetic traces.
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        output: Output,
    },
    /// Run the comparison filters over one shared trace.
    Compare {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Required for synthetic traces.
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        output: Output,
    },
    /// Tune the kernel parameters of the configured entropy filter.
    Tune {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        seed: u64,
        #[command(flatten)]
        output: Output,
    },
    /// Monte Carlo sweep over independent noise realizations.
    Montecarlo {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        seed: u64,
        /// Overrides `experiment.trials`.
        #[arg(long)]
        trials: Option<usize>,
        /// Sweep the comparison filters instead of the configured one.
        #[arg(long)]
        compare: bool,
        #[command(flatten)]
        output: Output,
    },
    /// Re-render a JSON report.
    Report {
        #[arg(short, long)]
        input: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
        #[arg(short, long, value_enum)]
        format: Format,
    },
}

fn load(c: &ConfigArgs) -> Result<ExperimentConfig> {
    let cfg = ExperimentConfig::load(&c.config, &c.overrides)?;
    cfg.validate()?;
    Ok(cfg)
}

fn require_seed(cfg: &ExperimentConfig, seed: Option<u64>) -> Result<Option<u64>> {
    match (&cfg.experiment.source, seed) {
        (TraceSource::Synthetic { .. }, None) => Err(LabError::Config("--seed is required for synthetic traces".into())),
        (_, s) => Ok(s),
    }
}

fn write(report: &Report, output: &Output) -> Result<()> {
    if let Some(out) = &output.out {
        for p in emit_report(report, output.format, out)? {
            eprintln!("wrote {}", p.display());
        }
    }
    Ok(())
}

fn summary(r: &gmmee_lab::MetricsReport) -> String {
    let err = r.errors.map_or_else(
        || "no ground truth".to_string(),
        |e| format!("MAE {:.4}%  MSE {:.4}  RMSE {:.4}%  MAX {:.4}%", e.mae, e.mse, e.rmse, e.max_abs),
    );
    format!(
        "{}: {} steps  {err}  step time max {:.3} ms mean {:.3} ms  fallbacks {}",
        r.filter, r.steps, r.timing.max_ms, r.timing.mean_ms, r.flags.fallback
    )
}

fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::Simulate { cfg, seed, out } => {
            let cfg = load(&cfg)?;
            let ds = build_dataset(&cfg, Some(seed))?;
            write_dataset_csv(&ds, &out)?;
            eprintln!("wrote {} ({} samples)", out.display(), ds.len());
        }
        Cmd::Run { cfg, seed, output } => {
            let cfg = load(&cfg)?;
            let r = experiment::run_experiment(&cfg, require_seed(&cfg, seed)?)?;
            println!("{}", summary(&r));
            write(&Report::Run(r), &output)?;
        }
        Cmd::Compare { cfg, seed, output } => {
            let cfg = load(&cfg)?;
            let t = experiment::run_comparison(&cfg, require_seed(&cfg, seed)?)?;
            print!("{}", comparison_text(&t));
            write(&Report::Comparison(t), &output)?;
        }
        Cmd::Tune { cfg, seed, output } => {
            let cfg = load(&cfg)?;
            let t = experiment::tune_kernels(&cfg, seed)?;
            println!(
                "best (alpha1, alpha2, beta1, beta2) = {:?}  frozen RMSE {:.4}%  fresh RMSE {:.4} ± {:.4}%  ({} evaluations, {:.1} s)",
                t.best_params, t.best_fitness, t.fresh.mean, t.fresh.std, t.evaluations, t.wall_time_s
            );
            write(&Report::Tune(Box::new(t)), &output)?;
        }
        Cmd::Montecarlo { cfg, seed, trials, compare, output } => {
            let cfg = load(&cfg)?;
            let filters = if compare {
                let mut f = cfg.compare.clone().unwrap_or_else(|| experiment::default_comparison_filters(&cfg));
                f.sort_by_key(gmmee_lab::FilterConfig::table_rank);
                f
            } else {
                vec![cfg.filter]
            };
            let v = monte_carlo_filters(&cfg, &filters, seed, trials.unwrap_or(cfg.experiment.trials))?;
            for s in &v {
                println!(
                    "{:<8} RMSE mean {:.4}% std {:.4}  median {:.4}  [{:.4}, {:.4}]  failed {}/{}",
                    s.filter,
                    s.mean,
                    s.std,
                    s.median,
                    s.min,
                    s.max,
                    s.failed.len(),
                    s.trials
                );
            }
            write(&Report::MonteCarlo(v), &output)?;
        }
        Cmd::Report { input, out, format } => {
            let r = read_report(&input)?;
            for p in emit_report(&r, format, &out)? {
                eprintln!("wrote {}", p.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
