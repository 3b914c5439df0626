//! `ik-exp`: runs the built-in inverse-kinematics experiments, verifies
//! robot model files, and exports the built-in models.

use aiik::experiments::{
    apply_overrides, builtin_scenario, builtin_scenarios, run_and_emit, ScenarioOverrides,
};
use aiik::liegroup::ErrorMode;
use aiik::model::{builtin, parse_model, verify_model, write_model};
use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "ik-exp",
    version,
    about = "Inverse-kinematics experiments at singular configurations"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ErrorModeArg {
    /// Exact SE(3) logarithm of the pose difference.
    Log,
    /// First-order twist of the pose difference.
    FirstOrder,
}

impl From<ErrorModeArg> for ErrorMode {
    fn from(v: ErrorModeArg) -> Self {
        match v {
            ErrorModeArg::Log => ErrorMode::Log,
            ErrorModeArg::FirstOrder => ErrorMode::FirstOrder,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// List the built-in scenarios.
    List,
    /// Run a scenario and write CSV convergence traces.
    Run {
        /// Scenario id (see `ik-exp list`).
        scenario_id: String,
        /// Iteration budget per run.
        #[arg(long)]
        iters: Option<usize>,
        /// Squared damping factor for every damped method.
        #[arg(long = "lambda-sq")]
        lambda_sq: Option<f64>,
        /// Magnitude of the regularizing perturbation entries.
        #[arg(long)]
        epsilon: Option<f64>,
        /// Base seed of the random-perturbation stream.
        #[arg(long)]
        seed: Option<u64>,
        /// Number of random perturbation vectors per sweep.
        #[arg(long = "seeds-count")]
        seeds_count: Option<usize>,
        /// Output directory for the CSV files.
        #[arg(long, default_value = "ik-exp-out")]
        out: PathBuf,
        /// Pose-error mode.
        #[arg(long = "error-mode", value_enum)]
        error_mode: Option<ErrorModeArg>,
        /// Use the order-1 bracket-prolonged Jacobian for the first
        /// regularized step instead of the exact one.
        #[arg(long = "prolonged-jacobian")]
        prolonged_jacobian: bool,
    },
    /// Verify the singular-motion data of a robot model file.
    Verify {
        /// Path to a robot model file.
        model_file: PathBuf,
    },
    /// Print a built-in robot model in the model file format.
    ExportModel {
        /// Model name (planar3r or iiwa14).
        name: String,
        /// Write to this file instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::List => {
            for s in builtin_scenarios() {
                println!(
                    "{:14} {} ({} methods)",
                    s.id,
                    s.description,
                    s.methods.len()
                );
            }
            Ok(())
        }
        Command::Run {
            scenario_id,
            iters,
            lambda_sq,
            epsilon,
            seed,
            seeds_count,
            out,
            error_mode,
            prolonged_jacobian,
        } => {
            let mut scenario = builtin_scenario(&scenario_id)
                .ok_or_else(|| anyhow!("unknown scenario `{scenario_id}`; see `ik-exp list`"))?;
            let overrides = ScenarioOverrides {
                iterations: iters,
                lambda_sq,
                epsilon,
                seed,
                seeds_count,
                error_mode: error_mode.map(Into::into),
                prolonged_first_order: prolonged_jacobian.then_some(1),
            };
            apply_overrides(&mut scenario, &overrides);
            let (records, paths) = run_and_emit(&scenario, &out).context("running the scenario")?;
            for r in &records {
                let seed = r
                    .seed_index
                    .map_or_else(String::new, |k| format!(" seed {k}"));
                println!(
                    "{:24}{:8} {}  final error {:.3e}  ({} iterations, {:.1} ms)",
                    r.method_label,
                    seed,
                    r.outcome.status,
                    r.outcome.trace.final_error(),
                    r.outcome.trace.steps(),
                    r.wall_time.as_secs_f64() * 1e3,
                );
            }
            for p in &paths {
                println!("wrote {}", p.display());
            }
            Ok(())
        }
        Command::Verify { model_file } => {
            let text = std::fs::read_to_string(&model_file)
                .with_context(|| format!("reading {}", model_file.display()))?;
            let loaded = parse_model::<f64>(&text)
                .with_context(|| format!("parsing {}", model_file.display()))?;
            println!(
                "model `{}`: {} joints, task dimension {}, {} catalogued singularities",
                loaded.model.name(),
                loaded.model.dof(),
                loaded.model.task_dim(),
                loaded.singular_bases.len()
            );
            let checks = verify_model(&loaded, &[0.05, 0.1, 0.2]);
            let mut failed = 0usize;
            for c in &checks {
                println!(
                    "{} {}",
                    if c.passed { "PASS" } else { "FAIL" },
                    c.description
                );
                if !c.passed {
                    failed += 1;
                }
            }
            if failed > 0 {
                bail!("{failed} of {} checks failed", checks.len());
            }
            println!("all {} checks passed", checks.len());
            Ok(())
        }
        Command::ExportModel { name, out } => {
            let loaded = builtin::by_name::<f64>(&name).ok_or_else(|| {
                anyhow!(
                    "unknown model `{name}`; built-ins: {}",
                    builtin::names().join(", ")
                )
            })?;
            let text = write_model(&loaded);
            match out {
                Some(path) => {
                    std::fs::write(&path, text)
                        .with_context(|| format!("writing {}", path.display()))?;
                    println!("wrote {}", path.display());
                }
                None => print!("{text}"),
            }
            Ok(())
        }
    }
}
