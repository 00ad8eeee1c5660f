//! `coopcast`: fit, evaluate, simulate and probe models of cooperation in
//! repeated Prisoner's Dilemma games.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use coopcast_core::behavior::{fit_model, BehaviorError, BehaviorModel, FitConfig, ModelKind, RankPolicy};
use coopcast_core::evaluation::{
    compare, evaluate_aggregate, evaluate_individual, inertia_actual, inertia_predicted, make_folds, EvalError,
    EvalOptions, MetricsReport,
};
use coopcast_core::game::{Action, DecisionRecord, GameStructure, InteractionHistory};
use coopcast_core::io::{
    bundled_structures, generate_synthetic_with, load_decisions, load_model, load_structures, model_fingerprint,
    save_model, write_decisions, IoError,
};
use coopcast_core::report::{
    comparisons_csv, interval_svg, line_svg, metrics_csv, sensitivity_csv, sensitivity_svg, simulation_csv,
    simulation_json, to_canonical_json,
};
use coopcast_core::sensitivity::{
    first_period_intervention, run_global_sensitivity, summarize, ParameterSpace, SensitivityError,
};
use coopcast_core::simulator::{simulate_structure, NoiseMode, SimulationConfig, SimulationError, REPORTING_HORIZON};

#[derive(Parser)]
#[command(name = "coopcast", version, about = "Models of cooperation in repeated Prisoner's Dilemma games")]
struct Cli {
    /// Worker threads for parallel stages (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a structures file (and optionally a decisions file against it).
    Validate {
        structures: PathBuf,
        #[arg(long)]
        decisions: Option<PathBuf>,
    },
    /// Fit a model and write it as JSON.
    Fit {
        #[arg(long)]
        model_kind: ModelKind,
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        fit: FitArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Tabulate a model's cooperation probabilities for every structure,
    /// period and previous joint outcome.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        structures: Option<PathBuf>,
        #[arg(long, default_value_t = REPORTING_HORIZON)]
        horizon: u32,
        #[arg(long)]
        out: PathBuf,
    },
    /// Simulate one structure and report cooperation per period.
    Simulate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        structures: Option<PathBuf>,
        #[arg(long)]
        structure: String,
        #[command(flatten)]
        sim: SimArgs,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        json: Option<PathBuf>,
        #[arg(long)]
        svg: Option<PathBuf>,
    },
    /// Cross-validate model kinds with held-out structures.
    Crossval {
        /// One kind or a comma-separated list.
        #[arg(long, value_delimiter = ',', required = true)]
        model_kind: Vec<ModelKind>,
        /// `loo`, a fold count, or a comma-separated list of fold counts.
        #[arg(long, default_value = "loo")]
        folds: String,
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        fit: FitArgs,
        /// Simulated interactions per structure for the aggregate protocol.
        #[arg(long, default_value_t = 1000)]
        interactions: usize,
        /// Skip folds whose fit fails instead of aborting.
        #[arg(long)]
        skip_failed_folds: bool,
        #[arg(long)]
        out: PathBuf,
        /// Full reports as JSON, for `report`.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Global sensitivity of mean cooperation to the game's design variables.
    Sensitivity {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 5000)]
        samples: usize,
        #[arg(long, default_value_t = 500)]
        sims: usize,
        #[arg(long, default_value_t = 1000)]
        bootstrap: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        svg: Option<PathBuf>,
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Later-period cooperation when first-period play is fixed.
    Intervene {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        structures: Option<PathBuf>,
        /// Restrict to one structure id.
        #[arg(long)]
        structure: Option<String>,
        #[arg(long, value_delimiter = ',', default_value = "0,0.5,1")]
        p1: Vec<f64>,
        #[command(flatten)]
        sim: SimArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Predicted (and observed) cooperation following own cooperation.
    Inertia {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        structures: Option<PathBuf>,
        #[arg(long)]
        decisions: Option<PathBuf>,
        #[arg(long, default_value_t = REPORTING_HORIZON)]
        horizon: u32,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate synthetic decisions from a known model.
    GenSynthetic {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        structures: Option<PathBuf>,
        #[command(flatten)]
        sim: SimArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Paired comparisons and charts from saved cross-validation reports.
    Report {
        /// JSON written by `crossval --json`.
        #[arg(long)]
        crossval: PathBuf,
        #[arg(long, default_value = "full")]
        reference: ModelKind,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        svg: Option<PathBuf>,
    },
}

#[derive(Args)]
struct DataArgs {
    /// Structures CSV (default: the bundled 30-structure table).
    #[arg(long)]
    structures: Option<PathBuf>,
    #[arg(long)]
    decisions: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct FitArgs {
    /// Fix weights of columns that are linear combinations of others at 0
    /// instead of failing.
    #[arg(long)]
    drop_aliased: bool,
}

impl FitArgs {
    fn config(&self, seed: u64) -> FitConfig {
        FitConfig {
            rank_policy: if self.drop_aliased { RankPolicy::DropAliased } else { RankPolicy::Error },
            seed: Some(seed),
            ..FitConfig::default()
        }
    }
}

#[derive(Args)]
struct SimArgs {
    #[arg(long, default_value_t = 1000)]
    interactions: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Play every game for exactly this many periods.
    #[arg(long)]
    horizon: Option<u32>,
    /// Ignore execution errors: every intended action is implemented.
    #[arg(long)]
    no_flip: bool,
}

impl SimArgs {
    fn config(&self) -> SimulationConfig {
        SimulationConfig {
            horizon_override: self.horizon,
            noise_mode: if self.no_flip { NoiseMode::NoFlip } else { NoiseMode::FlipImplemented },
            ..SimulationConfig::new(self.interactions, self.seed)
        }
    }
}

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Numeric(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }
}

impl From<IoError> for CliError {
    fn from(e: IoError) -> Self {
        match e {
            IoError::Behavior(b) => b.into(),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<BehaviorError> for CliError {
    fn from(e: BehaviorError) -> Self {
        match e {
            BehaviorError::Glm { .. } => CliError::Numeric(e.to_string()),
            BehaviorError::EmptyGrid | BehaviorError::InvalidLambda(_) | BehaviorError::InvalidRate(_) => {
                CliError::Usage(e.to_string())
            }
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<SimulationError> for CliError {
    fn from(e: SimulationError) -> Self {
        match e {
            SimulationError::InvalidConfig(_) => CliError::Usage(e.to_string()),
            SimulationError::Behavior(b) => b.into(),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::BadK { .. } | EvalError::HorizonTooShort(_) | EvalError::NoDynamicComponent(_) => {
                CliError::Usage(e.to_string())
            }
            EvalError::Fit { .. } | EvalError::Stats(_) => CliError::Numeric(e.to_string()),
            EvalError::Behavior(b) => b.into(),
            EvalError::Simulation(s) => s.into(),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<SensitivityError> for CliError {
    fn from(e: SensitivityError) -> Self {
        match e {
            SensitivityError::Stats(_) | SensitivityError::TooManyDegenerate(_) => CliError::Numeric(e.to_string()),
            SensitivityError::Simulation(s) => s.into(),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<(), CliError> {
    std::fs::write(path, bytes).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn structures_from(path: Option<&Path>) -> Result<Vec<GameStructure>, CliError> {
    Ok(match path {
        Some(p) => load_structures(p)?,
        None => bundled_structures(),
    })
}

fn find<'a>(structures: &'a [GameStructure], id: &str) -> Result<&'a GameStructure, CliError> {
    structures.iter().find(|s| s.id == id).ok_or_else(|| CliError::Usage(format!("no structure with id '{id}'")))
}

fn fold_counts(folds: &str, n: usize) -> Result<Vec<usize>, CliError> {
    folds
        .split(',')
        .map(|part| match part.trim() {
            "loo" => Ok(n),
            k => k.parse().map_err(|_| CliError::Usage(format!("--folds: expected 'loo' or a count, got '{k}'"))),
        })
        .collect()
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(format!("--threads: {e}")))?;
    }
    match cli.command {
        Command::Validate { structures, decisions } => {
            let s = load_structures(&structures)?;
            println!("{} structures OK", s.len());
            if let Some(d) = decisions {
                println!("{} decisions OK", load_decisions(&d, &s)?.len());
            }
        }
        Command::Fit { model_kind, data, fit, out } => {
            let structures = structures_from(data.structures.as_deref())?;
            let decisions = load_decisions(&data.decisions, &structures)?;
            let model = fit_model(model_kind, &structures, &decisions, &fit.config(data.seed))?;
            save_model(&model, &out)?;
            log::info!("wrote {model_kind} model {} to {}", model_fingerprint(&model), out.display());
        }
        Command::Predict { model, structures, horizon, out } => {
            let model = load_model(&model)?;
            let structures = structures_from(structures.as_deref())?;
            if horizon == 0 {
                return Err(CliError::Usage("--horizon must be >= 1".into()));
            }
            let mut w = csv::Writer::from_writer(Vec::new());
            let csv_err = |e: csv::Error| CliError::Data(e.to_string());
            w.write_record(["structure_id", "period", "my_prev", "other_prev", "probability"]).map_err(csv_err)?;
            for game in &structures {
                // Period 1 is reported at the imputed history's expectation.
                let p1 = if model.kind.has_dynamic_component() && model.static_glm.is_none() {
                    let mut total = 0.0;
                    for me in Action::BOTH {
                        for other in Action::BOTH {
                            let h = InteractionHistory::new(me, other);
                            total += model.predict_cooperation(game, Some(&h), 1, None)?;
                        }
                    }
                    total / 4.0
                } else {
                    model.predict_cooperation(game, None, 1, None)?
                };
                w.write_record([game.id.as_str(), "1", "", "", &p1.to_string()]).map_err(csv_err)?;
                for t in 2..=horizon {
                    for me in Action::BOTH {
                        for other in Action::BOTH {
                            let h = InteractionHistory::new(me, other);
                            let p = model.predict_cooperation(game, Some(&h), t, None)?;
                            w.write_record([&game.id, &t.to_string(), me.code(), other.code(), &p.to_string()])
                                .map_err(csv_err)?;
                        }
                    }
                }
            }
            write(&out, w.into_inner().map_err(|e| CliError::Data(e.to_string()))?)?;
        }
        Command::Simulate { model, structures, structure, sim, out, json, svg } => {
            let model = load_model(&model)?;
            let structures = structures_from(structures.as_deref())?;
            let game = find(&structures, &structure)?;
            let result = simulate_structure(&model, game, &sim.config())?;
            write(&out, simulation_csv(&result)?)?;
            if let Some(p) = json {
                write(&p, simulation_json(&result, Some(&model_fingerprint(&model))))?;
            }
            if let Some(p) = svg {
                let title = format!("Simulated cooperation, structure {}", game.id);
                write(&p, line_svg(&title, &[(model.kind.name().to_string(), result.per_period_cooperation.clone())]))?;
            }
        }
        Command::Crossval { model_kind, folds, data, fit, interactions, skip_failed_folds, out, json } => {
            let structures = structures_from(data.structures.as_deref())?;
            let decisions: Vec<DecisionRecord> = load_decisions(&data.decisions, &structures)?;
            let ids: Vec<String> = structures.iter().map(|s| s.id.clone()).collect();
            let options = EvalOptions { fit: fit.config(data.seed), skip_failed_folds, ..EvalOptions::default() };
            let sim = SimulationConfig::new(interactions, data.seed);
            let mut reports = Vec::new();
            for k in fold_counts(&folds, ids.len())? {
                let plan = make_folds(&ids, k, data.seed)?;
                for &kind in &model_kind {
                    log::info!("cross-validating {kind} with k = {k}");
                    reports.push(MetricsReport {
                        model_kind: kind,
                        k,
                        seed: data.seed,
                        individual: Some(evaluate_individual(kind, &plan, &structures, &decisions, &options)?),
                        aggregate: Some(evaluate_aggregate(kind, &plan, &structures, &decisions, &sim, &options)?),
                    });
                }
            }
            write(&out, metrics_csv(&reports)?)?;
            if let Some(p) = json {
                write(&p, to_canonical_json(&reports))?;
            }
        }
        Command::Sensitivity { model, samples, sims, bootstrap, seed, out, svg, json } => {
            let model = load_model(&model)?;
            let run = run_global_sensitivity(&model, &ParameterSpace::default(), samples, sims, seed)?;
            let report = summarize(&run, bootstrap)?;
            write(&out, sensitivity_csv(&report)?)?;
            if let Some(p) = svg {
                write(&p, sensitivity_svg(&report))?;
            }
            if let Some(p) = json {
                write(&p, to_canonical_json(&report))?;
            }
        }
        Command::Intervene { model, structures, structure, p1, sim, out } => {
            let model = load_model(&model)?;
            let structures = structures_from(structures.as_deref())?;
            let targets: Vec<&GameStructure> = match &structure {
                Some(id) => vec![find(&structures, id)?],
                None => structures.iter().collect(),
            };
            let cfg = sim.config();
            let mut w = csv::Writer::from_writer(Vec::new());
            let csv_err = |e: csv::Error| CliError::Data(e.to_string());
            w.write_record(["structure_id", "p1", "mean_cooperation"]).map_err(csv_err)?;
            for game in targets {
                for &p in &p1 {
                    let v = first_period_intervention(&model, game, p, &cfg)?;
                    w.write_record([game.id.clone(), p.to_string(), v.to_string()]).map_err(csv_err)?;
                }
            }
            write(&out, w.into_inner().map_err(|e| CliError::Data(e.to_string()))?)?;
        }
        Command::Inertia { model, structures, decisions, horizon, out } => {
            let model = load_model(&model)?;
            let structures = structures_from(structures.as_deref())?;
            let decisions = decisions.map(|d| load_decisions(&d, &structures)).transpose()?;
            let mut w = csv::Writer::from_writer(Vec::new());
            let csv_err = |e: csv::Error| CliError::Data(e.to_string());
            w.write_record(["structure_id", "predicted", "actual"]).map_err(csv_err)?;
            for game in &structures {
                let predicted = inertia_predicted(&model, game, horizon)?;
                let actual = match &decisions {
                    Some(d) => match inertia_actual(d, &game.id) {
                        Ok(v) => v.to_string(),
                        Err(EvalError::NoPriorCooperation(_) | EvalError::NoObservations(_)) => String::new(),
                        Err(e) => return Err(e.into()),
                    },
                    None => String::new(),
                };
                w.write_record([game.id.clone(), predicted.to_string(), actual]).map_err(csv_err)?;
            }
            write(&out, w.into_inner().map_err(|e| CliError::Data(e.to_string()))?)?;
        }
        Command::GenSynthetic { model, structures, sim, out } => {
            let model: BehaviorModel = load_model(&model)?;
            let structures = structures_from(structures.as_deref())?;
            let decisions = generate_synthetic_with(&model, &structures, &sim.config())?;
            write_decisions(&out, &decisions)?;
            log::info!("wrote {} decisions to {}", decisions.len(), out.display());
        }
        Command::Report { crossval, reference, out, svg } => {
            let text = std::fs::read_to_string(&crossval)
                .map_err(|e| CliError::Data(format!("{}: {e}", crossval.display())))?;
            let reports: Vec<MetricsReport> =
                serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", crossval.display())))?;
            let mut comparisons = Vec::new();
            for r in reports.iter().filter(|r| r.model_kind == reference) {
                for c in reports.iter().filter(|c| c.k == r.k && c.model_kind != reference) {
                    comparisons.push(compare(r, c));
                }
            }
            if comparisons.is_empty() {
                return Err(CliError::Usage(format!("no {reference} report with a competitor at the same k")));
            }
            write(&out, comparisons_csv(&comparisons)?)?;
            if let Some(p) = svg {
                let rows: Vec<(String, f64, f64, f64)> = reports
                    .iter()
                    .filter_map(|r| r.aggregate.as_ref().map(|a| (r, a.summary.rmse_time)))
                    .map(|(r, v)| (format!("{} k={}", r.model_kind, r.k), v, v, v))
                    .collect();
                let hi = rows.iter().map(|r| r.1).fold(0.0f64, f64::max).max(1e-3) * 1.1;
                write(&p, interval_svg("RMSE of per-period cooperation", &rows, (0.0, hi)))?;
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
