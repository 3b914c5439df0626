//! Experiment harness: built-in scenarios around the singular reference
//! configurations, seeded random-perturbation sweeps, and CSV convergence
//! traces suitable for plotting.
//!
//! All randomness comes from SplitMix64, a publicly specified 64-bit mixing
//! generator, so sweeps are reproducible bit-exactly across platforms from
//! a single seed. Floats in the emitted CSVs carry 17 significant digits;
//! parsing them back reproduces the trace values bit-exactly.

use crate::fmt_f64;
use crate::kinematics::{forward_kinematics, JointConfig};
use crate::liegroup::{ErrorMode, Pose};
use crate::model::builtin;
use crate::pinv::InverseKind;
use crate::solver::{solve, solve_ai_ik, solve_perturbed, SolveOutcome, SolverConfig, SolverError};
use nalgebra::{DVector, Matrix3, Vector3};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};
use thiserror::Error;

/// Default damping `λ²` quoted by scenario method labels.
pub const DEFAULT_LAMBDA_SQ: f64 = 1e-4;
/// Default magnitude of regularizing and random perturbation entries (rad).
pub const DEFAULT_EPSILON: f64 = 1e-3;
/// Default base seed of the perturbation stream.
pub const DEFAULT_SEED: u64 = 12345;
/// Default number of random perturbation vectors per sweep.
pub const DEFAULT_SEED_COUNT: usize = 20;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("unknown robot model `{0}`")]
    ModelLoad(String),
    #[error("scenario `{scenario}` has no catalogued singularity at its start configuration")]
    NoSingularBasis { scenario: String },
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("writing `{path}`: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

/// SplitMix64: the 64-bit mixing generator of Steele, Lea and Flood, as
/// used for stream splitting in `SplittableRandom` and for seeding the
/// xoshiro family. State update `s += 0x9E3779B97F4A7C15`, output mixed by
/// two xor-multiply rounds.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform double in [0, 1) from the top 53 bits.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

/// `count` perturbation vectors of length `n` with entries uniform in
/// `[0, magnitude)`, drawn sequentially from one SplitMix64 stream.
pub fn random_perturbations(
    seed: u64,
    count: usize,
    n: usize,
    magnitude: f64,
) -> Vec<DVector<f64>> {
    assert!(count >= 1, "need at least one perturbation");
    assert!(magnitude > 0.0, "magnitude must be positive");
    let mut rng = SplitMix64::new(seed);
    (0..count)
        .map(|_| DVector::from_fn(n, |_, _| rng.next_f64() * magnitude))
        .collect()
}

/// Target specification of a scenario.
#[derive(Debug, Clone, PartialEq)]
pub enum TargetSpec {
    /// Desired pose relative to the end-effector frame at the start
    /// configuration: `C_d = C(q₀) · rel`.
    RelativePose(Pose<f64>),
    /// Desired pose reached by a joint-space displacement:
    /// `C_d = f(q₀ + Δq_d)`.
    JointDisplacement(DVector<f64>),
}

/// How a method chooses its start configuration.
#[derive(Debug, Clone, PartialEq)]
pub enum MethodStart {
    /// Plain solve from the scenario start (the singular configuration).
    Singularity,
    /// Regularized solve: first step is the transversal perturbation built
    /// from this seed vector.
    Regularized { epsilon: DVector<f64> },
    /// Solve from `q₀ + ε` with the first random vector of the stream.
    PerturbedFirst,
    /// One run per random vector of the stream.
    PerturbedSweep,
}

/// One solver setup within a scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Method {
    pub label: String,
    pub inverse: InverseKind<f64>,
    pub start: MethodStart,
    pub tol: f64,
}

/// Seeded random-perturbation plan of a scenario.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeedSpec {
    pub seed: u64,
    pub count: usize,
    pub magnitude: f64,
}

/// A complete experiment definition.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub id: String,
    pub description: String,
    pub robot: String,
    pub start: JointConfig<f64>,
    pub target: TargetSpec,
    pub methods: Vec<Method>,
    pub iterations: usize,
    pub seeds: SeedSpec,
    pub error_mode: ErrorMode,
    pub prolonged_first_order: Option<usize>,
}

/// Result of one (method, seed) run.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub scenario_id: String,
    pub method_label: String,
    pub seed_index: Option<usize>,
    pub tol: f64,
    pub outcome: SolveOutcome<f64>,
    pub wall_time: Duration,
}

fn damped(lambda_sq: f64) -> InverseKind<f64> {
    InverseKind::damped_from_lambda_sq(lambda_sq)
}

fn standard_methods(n: usize, tol: f64, include_lambda4_sweep: bool) -> Vec<Method> {
    let eps = DVector::from_element(n, DEFAULT_EPSILON);
    let mut methods = vec![
        Method {
            label: "dpi-singular".into(),
            inverse: damped(DEFAULT_LAMBDA_SQ),
            start: MethodStart::Singularity,
            tol,
        },
        Method {
            label: "aiik-pi".into(),
            inverse: InverseKind::pseudo_inverse_default(),
            start: MethodStart::Regularized {
                epsilon: eps.clone(),
            },
            tol,
        },
        Method {
            label: "aiik-dpi".into(),
            inverse: damped(DEFAULT_LAMBDA_SQ),
            start: MethodStart::Regularized { epsilon: eps },
            tol,
        },
        Method {
            label: "rand-pi".into(),
            inverse: InverseKind::pseudo_inverse_default(),
            start: MethodStart::PerturbedFirst,
            tol,
        },
        Method {
            label: "rand-dpi".into(),
            inverse: damped(DEFAULT_LAMBDA_SQ),
            start: MethodStart::PerturbedFirst,
            tol,
        },
    ];
    if include_lambda4_sweep {
        methods.push(Method {
            label: "rand-dpi-sweep-l2-1e-4".into(),
            inverse: damped(1e-4),
            start: MethodStart::PerturbedSweep,
            tol,
        });
    }
    methods.push(Method {
        label: "rand-dpi-sweep-l2-1e-6".into(),
        inverse: damped(1e-6),
        start: MethodStart::PerturbedSweep,
        tol,
    });
    methods
}

/// The built-in scenarios.
///
/// - `3r-lockup`: the 3R arm at its stretched singularity, commanded to
///   move straight down — instantaneously infeasible at the start, so
///   every pseudoinverse method stalls until the start is regularized.
/// - `iiwa-xz`: the 7R arm at its stretched singularity, target displaced
///   0.01 m in x and −0.01 m in z of the end-effector frame; the commanded
///   error lies entirely in the left kernel of the Jacobian.
/// - `iiwa-general`: a general motion target `f(q₀ + Δq_d)`; every method
///   makes progress, judged at a tracking tolerance matched to the
///   15-iteration horizon.
pub fn builtin_scenarios() -> Vec<Scenario> {
    let seeds = SeedSpec {
        seed: DEFAULT_SEED,
        count: DEFAULT_SEED_COUNT,
        magnitude: DEFAULT_EPSILON,
    };
    let down_3r = Pose::from_parts_unchecked(Matrix3::identity(), Vector3::new(0.0, 0.0, -0.01));
    let xz_iiwa = Pose::from_parts_unchecked(Matrix3::identity(), Vector3::new(0.01, 0.0, -0.01));
    vec![
        Scenario {
            id: "3r-lockup".into(),
            description: "3R regional arm, stretched singularity, straight-down target".into(),
            robot: "planar3r".into(),
            start: JointConfig::zeros(3),
            target: TargetSpec::RelativePose(down_3r),
            methods: standard_methods(3, 1e-10, true),
            iterations: 15,
            seeds,
            error_mode: ErrorMode::Log,
            prolonged_first_order: None,
        },
        Scenario {
            id: "iiwa-xz".into(),
            description: "7R arm, stretched singularity, x-z plane target".into(),
            robot: "iiwa14".into(),
            start: JointConfig::zeros(7),
            target: TargetSpec::RelativePose(xz_iiwa),
            methods: standard_methods(7, 1e-10, true),
            iterations: 15,
            seeds,
            error_mode: ErrorMode::Log,
            prolonged_first_order: None,
        },
        Scenario {
            id: "iiwa-general".into(),
            description: "7R arm, stretched singularity, general joint-space target".into(),
            robot: "iiwa14".into(),
            start: JointConfig::zeros(7),
            target: TargetSpec::JointDisplacement(DVector::from_vec(vec![
                0.01, 0.01, 0.05, 0.01, 0.01, 0.01, 0.05,
            ])),
            // tracking tolerance matched to the 15-iteration horizon: the
            // damped methods converge steadily but not to solver precision
            methods: standard_methods(7, 1e-4, false),
            iterations: 15,
            seeds,
            error_mode: ErrorMode::Log,
            prolonged_first_order: None,
        },
    ]
}

/// Looks up a built-in scenario by id.
pub fn builtin_scenario(id: &str) -> Option<Scenario> {
    builtin_scenarios().into_iter().find(|s| s.id == id)
}

/// CLI-facing adjustments applied on top of a scenario definition.
#[derive(Debug, Clone, Default)]
pub struct ScenarioOverrides {
    pub iterations: Option<usize>,
    /// Replaces the damping of every damped method.
    pub lambda_sq: Option<f64>,
    /// Replaces the magnitude of the regularizing seed vector.
    pub epsilon: Option<f64>,
    pub seed: Option<u64>,
    pub seeds_count: Option<usize>,
    pub error_mode: Option<ErrorMode>,
    /// Order of the bracket-prolonged Jacobian used for the first
    /// regularized step instead of the exact one.
    pub prolonged_first_order: Option<usize>,
}

/// Applies overrides in place.
pub fn apply_overrides(scenario: &mut Scenario, overrides: &ScenarioOverrides) {
    if let Some(iters) = overrides.iterations {
        scenario.iterations = iters;
    }
    if let Some(seed) = overrides.seed {
        scenario.seeds.seed = seed;
    }
    if let Some(count) = overrides.seeds_count {
        scenario.seeds.count = count;
    }
    if let Some(mode) = overrides.error_mode {
        scenario.error_mode = mode;
    }
    if overrides.prolonged_first_order.is_some() {
        scenario.prolonged_first_order = overrides.prolonged_first_order;
    }
    for method in &mut scenario.methods {
        if let Some(l2) = overrides.lambda_sq {
            if matches!(method.inverse, InverseKind::Damped { .. }) {
                method.inverse = damped(l2);
            }
        }
        if let Some(eps) = overrides.epsilon {
            if let MethodStart::Regularized { epsilon } = &mut method.start {
                *epsilon = DVector::from_element(epsilon.len(), eps);
            }
        }
    }
}

/// Executes every (method, seed) combination of a scenario.
///
/// Individual lock-ups, stalls and numerical failures are the phenomena of
/// interest and never abort the run; only configuration-level problems
/// (unknown model, missing singular basis) are errors.
pub fn run_scenario(scenario: &Scenario) -> Result<Vec<RunRecord>, ExperimentError> {
    let loaded = builtin::by_name::<f64>(&scenario.robot)
        .ok_or_else(|| ExperimentError::ModelLoad(scenario.robot.clone()))?;
    let model = &loaded.model;
    let c_d = match &scenario.target {
        TargetSpec::RelativePose(rel) => {
            let c0 = forward_kinematics(model, &scenario.start).map_err(SolverError::from)?;
            c0 * *rel
        }
        TargetSpec::JointDisplacement(dq) => {
            let q_d = JointConfig::new(scenario.start.as_vector() + dq);
            forward_kinematics(model, &q_d).map_err(SolverError::from)?
        }
    };
    let perturbations = random_perturbations(
        scenario.seeds.seed,
        scenario.seeds.count,
        model.dof(),
        scenario.seeds.magnitude,
    );
    let basis = loaded.singular_bases.iter().find(|b| {
        (b.config().as_vector() - scenario.start.as_vector())
            .abs()
            .max()
            <= 1e-9
    });

    let mut records = Vec::new();
    for method in &scenario.methods {
        let mut config = SolverConfig::new(method.inverse.clone());
        config.error_mode = scenario.error_mode;
        config.tol = method.tol;
        config.max_iters = scenario.iterations;
        config.trace_full_horizon = true;
        config.prolonged_first_order = scenario.prolonged_first_order;

        let mut push =
            |seed_index: Option<usize>, outcome: SolveOutcome<f64>, wall_time: Duration| {
                records.push(RunRecord {
                    scenario_id: scenario.id.clone(),
                    method_label: method.label.clone(),
                    seed_index,
                    tol: method.tol,
                    outcome,
                    wall_time,
                });
            };

        match &method.start {
            MethodStart::Singularity => {
                let t0 = Instant::now();
                let outcome = solve(model, &scenario.start, &c_d, &config)?;
                push(None, outcome, t0.elapsed());
            }
            MethodStart::Regularized { epsilon } => {
                let basis = basis.ok_or_else(|| ExperimentError::NoSingularBasis {
                    scenario: scenario.id.clone(),
                })?;
                let t0 = Instant::now();
                let outcome = solve_ai_ik(model, &scenario.start, &c_d, basis, epsilon, &config)?;
                push(None, outcome, t0.elapsed());
            }
            MethodStart::PerturbedFirst => {
                let t0 = Instant::now();
                let outcome =
                    solve_perturbed(model, &scenario.start, &c_d, &perturbations[0], &config)?;
                push(Some(0), outcome, t0.elapsed());
            }
            MethodStart::PerturbedSweep => {
                for (k, eps) in perturbations.iter().enumerate() {
                    let t0 = Instant::now();
                    let outcome = solve_perturbed(model, &scenario.start, &c_d, eps, &config)?;
                    push(Some(k), outcome, t0.elapsed());
                }
            }
        }
    }
    Ok(records)
}

/// Runs a scenario and emits its CSV files into `dir`.
pub fn run_and_emit(
    scenario: &Scenario,
    dir: &Path,
) -> Result<(Vec<RunRecord>, Vec<PathBuf>), ExperimentError> {
    let records = run_scenario(scenario)?;
    let paths = emit_traces(&records, dir)?;
    Ok((records, paths))
}

fn seed_field(seed_index: Option<usize>) -> String {
    seed_index.map_or_else(String::new, |k| k.to_string())
}

/// Writes one trace CSV per scenario plus a `summary.csv`, and returns the
/// created paths.
///
/// Trace columns: `method,seed,iter,error_norm,step_norm,rank,sigma_min`.
/// Summary columns: `scenario,method,seed,status,final_error,iters`, where
/// `iters` is the first iteration at or below the method tolerance for
/// converged runs and the number of executed steps otherwise.
pub fn emit_traces(records: &[RunRecord], dir: &Path) -> Result<Vec<PathBuf>, ExperimentError> {
    std::fs::create_dir_all(dir).map_err(|source| ExperimentError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut paths = Vec::new();
    let mut scenario_ids: Vec<&str> = Vec::new();
    for r in records {
        if !scenario_ids.contains(&r.scenario_id.as_str()) {
            scenario_ids.push(&r.scenario_id);
        }
    }

    for id in &scenario_ids {
        let mut csv = String::from("method,seed,iter,error_norm,step_norm,rank,sigma_min\n");
        for r in records.iter().filter(|r| r.scenario_id == *id) {
            for rec in &r.outcome.trace.records {
                writeln!(
                    csv,
                    "{},{},{},{},{},{},{}",
                    r.method_label,
                    seed_field(r.seed_index),
                    rec.iter,
                    fmt_f64(rec.error_norm),
                    fmt_f64(rec.step_norm),
                    rec.jacobian_rank,
                    fmt_f64(rec.sigma_min),
                )
                .expect("writing to string cannot fail");
            }
        }
        let path = dir.join(format!("{id}_traces.csv"));
        std::fs::write(&path, csv).map_err(|source| ExperimentError::Io {
            path: path.clone(),
            source,
        })?;
        paths.push(path);
    }

    let mut summary = String::from("scenario,method,seed,status,final_error,iters\n");
    for r in records {
        let iters = r
            .outcome
            .trace
            .first_iteration_at_or_below(r.tol)
            .unwrap_or_else(|| r.outcome.trace.steps());
        writeln!(
            summary,
            "{},{},{},{},{},{}",
            r.scenario_id,
            r.method_label,
            seed_field(r.seed_index),
            r.outcome.status,
            fmt_f64(r.outcome.trace.final_error()),
            iters,
        )
        .expect("writing to string cannot fail");
    }
    let path = dir.join("summary.csv");
    std::fs::write(&path, summary).map_err(|source| ExperimentError::Io {
        path: path.clone(),
        source,
    })?;
    paths.push(path);
    Ok(paths)
}

/// One parsed row of a trace CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub method: String,
    pub seed: Option<usize>,
    pub iter: usize,
    pub error_norm: f64,
    pub step_norm: f64,
    pub rank: usize,
    pub sigma_min: f64,
}

/// Parses a trace CSV produced by [`emit_traces`].
pub fn parse_trace_csv(text: &str) -> Vec<TraceRow> {
    text.lines()
        .skip(1)
        .filter(|l| !l.trim().is_empty())
        .map(|line| {
            let f: Vec<&str> = line.split(',').collect();
            TraceRow {
                method: f[0].to_string(),
                seed: if f[1].is_empty() {
                    None
                } else {
                    Some(f[1].parse().expect("seed index"))
                },
                iter: f[2].parse().expect("iter"),
                error_norm: f[3].parse().expect("error_norm"),
                step_norm: f[4].parse().expect("step_norm"),
                rank: f[5].parse().expect("rank"),
                sigma_min: f[6].parse().expect("sigma_min"),
            }
        })
        .collect()
}

/// One parsed row of the summary CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub scenario: String,
    pub method: String,
    pub seed: Option<usize>,
    pub status: String,
    pub final_error: f64,
    pub iters: usize,
}

/// Parses the summary CSV produced by [`emit_traces`].
pub fn parse_summary_csv(text: &str) -> Vec<SummaryRow> {
    text.lines()
        .skip(1)
        .filter(|l| !l.trim().is_empty())
        .map(|line| {
            let f: Vec<&str> = line.split(',').collect();
            SummaryRow {
                scenario: f[0].to_string(),
                method: f[1].to_string(),
                seed: if f[2].is_empty() {
                    None
                } else {
                    Some(f[2].parse().expect("seed index"))
                },
                status: f[3].to_string(),
                final_error: f[4].parse().expect("final_error"),
                iters: f[5].parse().expect("iters"),
            }
        })
        .collect()
}
