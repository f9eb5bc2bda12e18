use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use sda_core::decoder::exhaustive_decode_with;
use sda_core::harness::{run_phase_transition, theta_star, ExperimentConfig, ModelSpec};
use sda_core::model::{sample_dataset, Dataset};
use sda_core::ndarray::Array1;
use sda_core::risk::{bayes_risk, conditional_error_rate};
use sda_core::sda::{fit_sda, FitExport};
use sda_core::theory::{lambda_of, lambda_sda, theory_report, TheoryConstants};
use sda_core::{Error, Result};

#[derive(Parser)]
#[command(
    name = "sda",
    version,
    about = "Sparse linear discriminant analysis toolkit"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum RuleArg {
    PaperSda,
    Theorem3,
}

#[derive(Subcommand)]
enum Command {
    /// Run a support-recovery experiment and write the results table as CSV.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// At most 50 replications and p = 100.
        #[arg(long)]
        quick: bool,
    },
    /// Draw a labelled dataset from a model spec and write it as CSV.
    Generate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit the sparse discriminant direction on a CSV dataset.
    Fit {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, conflicts_with = "lambda_rule")]
        lambda: Option<f64>,
        /// Penalty rule evaluated on the true model (needs --model).
        #[arg(long, value_enum, requires = "model")]
        lambda_rule: Option<RuleArg>,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, default_value_t = 1.0)]
        k_lambda0: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Exhaustive search for the size-s subset with the largest Mahalanobis score.
    Decode {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        s: usize,
        #[arg(long, default_value_t = 10_000_000)]
        cap: u128,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate recovery conditions, penalty levels and thresholds for a model.
    Theory {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 1.0)]
        k_lambda0: f64,
        #[arg(long, default_value_t = 1.0)]
        k_beta: f64,
        #[arg(long, default_value_t = 4.0)]
        k: f64,
        #[arg(long, default_value_t = 0.3)]
        sda_multiplier: f64,
        #[arg(long, default_value_t = 0.1)]
        alpha: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Error rate of a fitted direction under the true model.
    Risk {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        fit: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Serialize)]
struct RiskOutput {
    conditional_error: f64,
    bayes_risk: Option<f64>,
    excess: Option<f64>,
}

fn emit<T: Serialize>(value: &T, out: Option<&Path>) -> Result<()> {
    let text =
        serde_json::to_string_pretty(value).map_err(|e| Error::InvalidInput(e.to_string()))?;
    match out {
        Some(path) => std::fs::write(path, text + "\n")?,
        None => {
            let mut stdout = std::io::stdout().lock();
            match writeln!(stdout, "{text}") {
                // a closed downstream pipe is not an error for the caller
                Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => {}
                other => other?,
            }
        }
    }
    Ok(())
}

fn read_fit(path: &Path) -> Result<FitExport> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        source_name: "fit json",
        line: e.line() as u64,
        column: e.column(),
        message: e.to_string(),
    })
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { config, out, quick } => {
            let mut cfg = ExperimentConfig::from_path(&config)?;
            if quick {
                cfg = cfg.quick();
            }
            let table = run_phase_transition(&cfg)?;
            table.write_csv_path(&out)?;
            let mut curves: Vec<_> = table.rows.iter().map(|r| (r.regime, r.p, r.rho)).collect();
            curves.dedup();
            for (regime, p, rho) in curves {
                let star = theta_star(&table.curve(regime, p, rho));
                eprintln!(
                    "{} p={p} rho={rho}: theta* = {}",
                    regime.name(),
                    star.map_or("not reached".to_string(), |t| t.to_string())
                );
            }
            eprintln!("wrote {} rows to {}", table.rows.len(), out.display());
        }
        Command::Generate {
            model,
            n,
            seed,
            out,
        } => {
            let model = ModelSpec::from_path(&model)?.build()?;
            sample_dataset(&model, n, seed)?.write_csv_path(&out)?;
        }
        Command::Fit {
            data,
            lambda,
            lambda_rule,
            model,
            k_lambda0,
            out,
        } => {
            let dataset = Dataset::read_csv_path(&data)?;
            let lambda = match (lambda, lambda_rule) {
                (Some(l), _) => l,
                (None, Some(rule)) => {
                    let path = model
                        .ok_or_else(|| Error::InvalidInput("--lambda-rule needs --model".into()))?;
                    let m = ModelSpec::from_path(&path)?.build()?;
                    match rule {
                        RuleArg::PaperSda => lambda_sda(&m, dataset.n())?,
                        RuleArg::Theorem3 => lambda_of(&m, dataset.n(), k_lambda0)?,
                    }
                }
                (None, None) => {
                    return Err(Error::InvalidInput("give --lambda or --lambda-rule".into()))
                }
            };
            let fit = fit_sda(&dataset, lambda)?;
            emit(&fit.export(), out.as_deref())?;
        }
        Command::Decode { data, s, cap, out } => {
            let dataset = Dataset::read_csv_path(&data)?;
            emit(
                &exhaustive_decode_with(&dataset, s, cap)?.export(),
                out.as_deref(),
            )?;
        }
        Command::Theory {
            model,
            n,
            k_lambda0,
            k_beta,
            k,
            sda_multiplier,
            alpha,
            out,
        } => {
            let m = ModelSpec::from_path(&model)?.build()?;
            let constants = TheoryConstants {
                k_lambda0,
                k_beta,
                k_n: k,
                sda_multiplier,
            };
            emit(&theory_report(&m, n, constants, alpha)?, out.as_deref())?;
        }
        Command::Risk {
            model,
            fit,
            data,
            out,
        } => {
            let m = ModelSpec::from_path(&model)?.build()?;
            let fit = read_fit(&fit)?;
            let dataset = Dataset::read_csv_path(&data)?;
            let v = Array1::from(fit.v_hat);
            let conditional_error = conditional_error_rate(
                &m,
                v.view(),
                dataset.mu1_hat().view(),
                dataset.mu2_hat().view(),
            )?;
            let bayes = bayes_risk(&m).ok();
            emit(
                &RiskOutput {
                    conditional_error,
                    bayes_risk: bayes,
                    excess: bayes.map(|b| conditional_error - b),
                },
                out.as_deref(),
            )?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numeric() { 3 } else { 2 })
        }
    }
}
