//! `smprivacy`: run energy-management policies on load traces and compute
//! privacy measures from the command line.
//!
//! Exit status is 0 on success, 2 for invalid arguments or configuration, and
//! 1 for failures during a run.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;
use smprivacy::harness::{
    ingest_csv, run_experiment, simulate_config, spiky_fixture_spec, write_experiment, write_simulation_csv,
    write_trace_csv, ExperimentConfig, MdpSpec, SyntheticSpec,
};
use smprivacy::measures::{
    empirical_kl, empirical_mi_smoothed, feature_count, load_variance, privacy_power_ba, Pmf, Quantizer,
};
use smprivacy::policies::mdp::mdp_value_iteration;
use smprivacy::Error;

#[derive(Debug, Parser)]
#[command(name = "smprivacy", version, about = "Smart-meter privacy policies and measures")]
struct Cli {
    /// Configuration file (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides the seed in the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the configured policy once and report its cost and feasibility.
    Simulate {
        /// Trade-off weight; the first value of the configured grid by default.
        #[arg(long)]
        alpha: Option<f64>,
    },
    /// Run the configured policy over the α grid and write results.csv,
    /// timings.csv and manifest.json.
    Sweep,
    /// Compute a privacy measure on trace files.
    Measure {
        #[arg(value_enum)]
        kind: MeasureKind,
        /// Trace to measure (the grid load for variance and feature counts,
        /// the user load for mutual information and divergence).
        #[arg(long)]
        trace: PathBuf,
        /// Grid-load trace for mutual information and divergence.
        #[arg(long)]
        grid: Option<PathBuf>,
        /// Variance target in kW; the trace mean by default.
        #[arg(long)]
        target: Option<f64>,
        /// Feature-detection threshold in kW.
        #[arg(long, default_value_t = 1.0)]
        threshold: f64,
        /// Quantizer bins for mutual information and divergence.
        #[arg(long, default_value_t = 10)]
        bins: usize,
        /// Additive smoothing.
        #[arg(long)]
        kappa: Option<f64>,
    },
    /// Privacy-power function: minimum leakage for an average power budget.
    SolveBa {
        /// Demand distribution: `uniformK`, `bernoulli:Q`, `binomial:N:P`, or
        /// `value:prob,value:prob,...`.
        #[arg(long)]
        pmf: String,
        /// Average power budget P̄ in kW.
        #[arg(long)]
        pbar: f64,
        /// Peak power P̂ in kW; the largest demand value by default.
        #[arg(long)]
        peak: Option<f64>,
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
    },
    /// Solve an MDP given in the configuration file and write policy.json.
    SolveMdp {
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
    },
    /// Generate a synthetic trace from the configuration file (or the
    /// shipped spiky household fixture).
    Gen {
        #[arg(long)]
        spiky: bool,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum MeasureKind {
    Variance,
    FeatureCount,
    Mi,
    Kl,
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Runtime(String),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::ParseError { .. } | Error::NonUniformSpacing { .. } => {
                CliError::Usage(e.to_string())
            }
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("smprivacy: error[config]: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("smprivacy: error[runtime]: {msg}");
            ExitCode::from(1)
        }
    }
}

fn require_config(cli: &Cli) -> Result<&Path, CliError> {
    cli.config
        .as_deref()
        .ok_or_else(|| CliError::Usage("this command needs --config <file>".into()))
}

fn load_experiment(cli: &Cli) -> Result<ExperimentConfig, CliError> {
    let mut cfg = ExperimentConfig::load(require_config(cli)?)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn read_config_text(cli: &Cli) -> Result<String, CliError> {
    let path = require_config(cli)?;
    fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn print_json(value: &serde_json::Value) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Runtime(e.to_string()))?;
    println!("{text}");
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Simulate { alpha } => {
            let cfg = load_experiment(&cli)?;
            let alpha = alpha.unwrap_or(cfg.alphas[0]);
            if !(0.0..=1.0).contains(&alpha) {
                return Err(CliError::Usage(format!("alpha {alpha} outside [0, 1]")));
            }
            let (user, result) = simulate_config(&cfg, alpha)?;
            if let Some(dir) = &cli.out {
                fs::create_dir_all(dir)?;
                let file = fs::File::create(dir.join("simulation.csv"))?;
                write_simulation_csv(&user, &result, &cfg.tariff.resolve()?, file)?;
            }
            print_json(&json!({
                "policy": cfg.policy.label(),
                "alpha": alpha,
                "slots": user.len(),
                "energy_cost": result.energy_cost,
                "total_cost": result.total_cost,
                "wear_events": result.wear_events,
                "wasted_kwh": result.wasted_kwh,
                "violations": result.violations.len(),
                "variance": load_variance(&result.grid_load, user.mean())?,
            }))
        }
        Command::Sweep => {
            let cfg = load_experiment(&cli)?;
            let out = run_experiment(&cfg)?;
            let dir = cli.out.clone().unwrap_or_else(|| cfg.output_dir.clone());
            write_experiment(&out, &dir)?;
            print_json(&json!({
                "output_dir": dir.display().to_string(),
                "rows": out.manifest.rows,
                "failed_rows": out.manifest.failed_rows,
                "config_sha256": out.manifest.config_sha256,
            }))
        }
        Command::Measure {
            kind,
            trace,
            grid,
            target,
            threshold,
            bins,
            kappa,
        } => {
            let x = ingest_csv(trace, None)?;
            let value = match kind {
                MeasureKind::Variance => load_variance(&x, target.unwrap_or_else(|| x.mean()))?,
                MeasureKind::FeatureCount => {
                    if !(*threshold > 0.0) {
                        return Err(CliError::Usage("--threshold must be positive".into()));
                    }
                    feature_count(&x, *threshold) as f64
                }
                MeasureKind::Mi | MeasureKind::Kl => {
                    let grid = grid
                        .as_ref()
                        .ok_or_else(|| CliError::Usage("mutual information and divergence need --grid".into()))?;
                    let y = ingest_csv(grid, None)?;
                    let all = x.values().iter().chain(y.values());
                    let lo = all.clone().copied().fold(0.0, f64::min);
                    let hi = all.copied().fold(f64::NEG_INFINITY, f64::max);
                    let q = Quantizer::uniform(lo, if hi > lo { hi } else { lo + 1.0 }, *bins)
                        .map_err(|e| CliError::Usage(e.to_string()))?;
                    if matches!(kind, MeasureKind::Mi) {
                        empirical_mi_smoothed(&x, &y, &q, *kappa)?
                    } else {
                        empirical_kl(&x, &y, &q, *kappa)?
                    }
                }
            };
            println!("{value}");
            Ok(())
        }
        Command::SolveBa { pmf, pbar, peak, tol } => {
            let px = parse_pmf(pmf)?;
            let peak = peak.unwrap_or_else(|| px.alphabet().iter().copied().fold(0.0, f64::max));
            if !(*pbar >= 0.0) || !(peak >= 0.0) {
                return Err(CliError::Usage("--pbar and --peak must be nonnegative".into()));
            }
            let out = privacy_power_ba(&px, *pbar, peak, *tol)?;
            println!("H(X) = {:.6} bits", px.entropy_bits());
            println!("I(X;Y) = {:.6} bits", out.leakage_bits);
            println!("E[X-Y] = {:.6} kW", out.mean_power_kw);
            if let Some(dir) = &cli.out {
                fs::create_dir_all(dir)?;
                let json = serde_json::to_string_pretty(&out.kernel).map_err(|e| CliError::Runtime(e.to_string()))?;
                fs::write(dir.join("kernel.json"), json + "\n")?;
            }
            Ok(())
        }
        Command::SolveMdp { tol } => {
            let spec = MdpSpec::from_toml(&read_config_text(&cli)?)?;
            let model = spec.to_model()?;
            let sol = mdp_value_iteration(&model, *tol)?;
            if let Some(dir) = &cli.out {
                fs::create_dir_all(dir)?;
                fs::write(dir.join("policy.json"), sol.policy.to_json()? + "\n")?;
            }
            let first = &sol.values[0];
            let expected: f64 = (0..model.num_states())
                .map(|s| {
                    let (e, _) = model.split_state(s);
                    model.initial[e] * first[s] / model.num_soc() as f64
                })
                .sum();
            print_json(&json!({
                "states": model.num_states(),
                "iterations": sol.iterations,
                "final_residual": sol.residuals.last().copied(),
                "mean_initial_value": expected,
            }))
        }
        Command::Gen { spiky } => {
            let mut spec = if *spiky {
                spiky_fixture_spec()
            } else {
                SyntheticSpec::from_toml(&read_config_text(&cli)?)?
            };
            if let Some(seed) = cli.seed {
                spec.seed = Some(seed);
            }
            let trace = smprivacy::harness::generate(&spec).map_err(|e| CliError::Usage(e.to_string()))?;
            let start = smprivacy::harness::ingest::default_start();
            match &cli.out {
                Some(dir) => {
                    fs::create_dir_all(dir)?;
                    write_trace_csv(&trace, start, fs::File::create(dir.join("trace.csv"))?)?;
                }
                None => {
                    let stdout = std::io::stdout();
                    let mut lock = stdout.lock();
                    write_trace_csv(&trace, start, &mut lock)?;
                    lock.flush()?;
                }
            }
            Ok(())
        }
    }
}

/// Parses the demand-distribution shorthand accepted by `solve-ba`.
fn parse_pmf(text: &str) -> Result<Pmf, CliError> {
    let bad = |why: &str| CliError::Usage(format!("cannot read pmf '{text}': {why}"));
    let num = |s: &str| s.trim().parse::<f64>().map_err(|_| bad("expected a number"));
    let pmf = if let Some(k) = text.strip_prefix("uniform") {
        let k: usize = k.parse().map_err(|_| bad("expected uniformK"))?;
        Pmf::uniform_levels(k)
    } else if let Some(q) = text.strip_prefix("bernoulli:") {
        Pmf::bernoulli(num(q)?)
    } else if let Some(rest) = text.strip_prefix("binomial:") {
        let (n, p) = rest.split_once(':').ok_or_else(|| bad("expected binomial:N:P"))?;
        Pmf::binomial(n.parse().map_err(|_| bad("expected an integer N"))?, num(p)?)
    } else {
        let mut alphabet = Vec::new();
        let mut probs = Vec::new();
        for pair in text.split(',') {
            let (v, p) = pair.split_once(':').ok_or_else(|| bad("expected value:prob pairs"))?;
            alphabet.push(num(v)?);
            probs.push(num(p)?);
        }
        Pmf::new(alphabet, probs)
    };
    pmf.map_err(|e| CliError::Usage(e.to_string()))
}
