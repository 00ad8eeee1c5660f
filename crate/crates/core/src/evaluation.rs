//! Structure-level cross-validation.
//!
//! Folds always hold out whole game structures. The individual-level
//! protocol predicts every held-out decision conditioning on the observed
//! previous period; the aggregate protocol simulates held-out structures
//! from their parameters alone and compares per-period cooperation.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::behavior::{fit_model, Agent, BehaviorError, BehaviorModel, FitConfig, Imputation, ModelKind, Policy};
use crate::game::{
    group_trajectories, Action, DecisionError, DecisionRecord, GameStructure, InteractionHistory, PlayerTrajectory,
};
use crate::simulator::{
    derive_seed, horizon_for, interaction_rng, simulate_structure, SimulationConfig, SimulationError,
};
use crate::stats::{paired_t_test, pearson, rmse, StatsError, TTest};

/// Probabilities are clamped to `[ε, 1 - ε]` when scoring log-likelihood.
pub const PROB_CLAMP: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("fold count k = {k} must lie in [2, {n}]")]
    BadK { k: usize, n: usize },
    #[error("fold {fold}: {source}")]
    Fit {
        fold: usize,
        #[source]
        source: BehaviorError,
    },
    #[error(transparent)]
    Behavior(#[from] BehaviorError),
    #[error(transparent)]
    Simulation(#[from] SimulationError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Decisions(#[from] DecisionError),
    #[error("structure {0} has no recorded decisions")]
    NoObservations(String),
    #[error("structure {0}: no cooperation is ever followed by another period")]
    NoPriorCooperation(String),
    #[error("{0} model has no later-period component")]
    NoDynamicComponent(ModelKind),
    #[error("horizon {0} leaves no period after the first")]
    HorizonTooShort(u32),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub assignments: BTreeMap<String, usize>,
    pub seed: u64,
}

impl FoldPlan {
    /// Structure ids per fold, each sorted.
    pub fn folds(&self) -> Vec<Vec<String>> {
        let mut folds = vec![Vec::new(); self.k];
        for (id, &f) in &self.assignments {
            folds[f].push(id.clone());
        }
        folds
    }
}

/// Seeded balanced partition of `ids` into `k` folds.
pub fn make_folds(ids: &[String], k: usize, seed: u64) -> Result<FoldPlan, EvalError> {
    let mut sorted: Vec<String> = ids.to_vec();
    sorted.sort();
    sorted.dedup();
    let n = sorted.len();
    if k < 2 || k > n {
        return Err(EvalError::BadK { k, n });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sorted.shuffle(&mut rng);
    let assignments = sorted.into_iter().enumerate().map(|(i, id)| (id, i % k)).collect();
    Ok(FoldPlan { k, assignments, seed })
}

/// Scores of one structure's held-out decisions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructureScores {
    pub structure_id: String,
    pub fold: usize,
    pub n_t1: usize,
    pub hits_t1: usize,
    pub loglik_t1: f64,
    pub n_tgt1: usize,
    pub hits_tgt1: usize,
    pub loglik_tgt1: f64,
}

impl StructureScores {
    fn new(structure_id: &str, fold: usize) -> Self {
        StructureScores {
            structure_id: structure_id.to_string(),
            fold,
            n_t1: 0,
            hits_t1: 0,
            loglik_t1: 0.0,
            n_tgt1: 0,
            hits_tgt1: 0,
            loglik_tgt1: 0.0,
        }
    }

    fn record(&mut self, period: usize, p: f64, action: Action) {
        let hit = if action.is_cooperate() { p > 0.5 } else { p < 0.5 };
        let q = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
        let ll = if action.is_cooperate() { q.ln() } else { (1.0 - q).ln() };
        if period == 1 {
            self.n_t1 += 1;
            self.hits_t1 += hit as usize;
            self.loglik_t1 += ll;
        } else {
            self.n_tgt1 += 1;
            self.hits_tgt1 += hit as usize;
            self.loglik_tgt1 += ll;
        }
    }

    pub fn accuracy_t1(&self) -> Option<f64> {
        (self.n_t1 > 0).then(|| self.hits_t1 as f64 / self.n_t1 as f64)
    }

    pub fn accuracy_tgt1(&self) -> Option<f64> {
        (self.n_tgt1 > 0).then(|| self.hits_tgt1 as f64 / self.n_tgt1 as f64)
    }

    pub fn loglik(&self) -> f64 {
        self.loglik_t1 + self.loglik_tgt1
    }
}

/// Scores `predict`'s per-period probabilities against every trajectory.
/// `predict` returns one probability per move of the trajectory.
pub fn score_trajectories<F>(
    trajectories: &[PlayerTrajectory],
    fold_of: impl Fn(&str) -> usize,
    mut predict: F,
) -> Result<Vec<StructureScores>, EvalError>
where
    F: FnMut(&PlayerTrajectory) -> Result<Vec<f64>, EvalError>,
{
    let mut by_structure: BTreeMap<String, StructureScores> = BTreeMap::new();
    for traj in trajectories {
        let probs = predict(traj)?;
        let scores = by_structure
            .entry(traj.structure_id.clone())
            .or_insert_with(|| StructureScores::new(&traj.structure_id, fold_of(&traj.structure_id)));
        for (i, (&p, &(action, _))) in probs.iter().zip(&traj.moves).enumerate() {
            scores.record(i + 1, p, action);
        }
    }
    Ok(by_structure.into_values().collect())
}

/// Summary of individual-level scores, averaged over structures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndividualMetrics {
    pub accuracy_t1: f64,
    pub accuracy_tgt1: f64,
    pub error_rate_t1: f64,
    pub error_rate_tgt1: f64,
    /// Mean over structures of the summed log-likelihood.
    pub loglik_t1: f64,
    pub loglik_tgt1: f64,
    pub n_t1: usize,
    pub n_tgt1: usize,
    pub n_structures: usize,
}

impl IndividualMetrics {
    pub fn from_scores(scores: &[StructureScores]) -> Self {
        let avg = |vals: Vec<f64>| {
            if vals.is_empty() {
                f64::NAN
            } else {
                vals.iter().sum::<f64>() / vals.len() as f64
            }
        };
        let accuracy_t1 = avg(scores.iter().filter_map(|s| s.accuracy_t1()).collect());
        let accuracy_tgt1 = avg(scores.iter().filter_map(|s| s.accuracy_tgt1()).collect());
        IndividualMetrics {
            accuracy_t1,
            accuracy_tgt1,
            error_rate_t1: 1.0 - accuracy_t1,
            error_rate_tgt1: 1.0 - accuracy_tgt1,
            loglik_t1: avg(scores.iter().filter(|s| s.n_t1 > 0).map(|s| s.loglik_t1).collect()),
            loglik_tgt1: avg(scores.iter().filter(|s| s.n_tgt1 > 0).map(|s| s.loglik_tgt1).collect()),
            n_t1: scores.iter().map(|s| s.n_t1).sum(),
            n_tgt1: scores.iter().map(|s| s.n_tgt1).sum(),
            n_structures: scores.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndividualReport {
    pub model_kind: ModelKind,
    pub k: usize,
    pub per_structure: Vec<StructureScores>,
    pub per_fold: Vec<(usize, IndividualMetrics)>,
    pub summary: IndividualMetrics,
    pub skipped_folds: Vec<usize>,
}

#[derive(Debug, Clone, Default)]
pub struct EvalOptions {
    pub fit: FitConfig,
    /// How a history-dependent component fills the missing first-period history.
    pub imputation: Imputation,
    /// Skip (and record) folds whose fit fails instead of aborting.
    pub skip_failed_folds: bool,
}

fn fold_data<'a>(
    held_out: &BTreeSet<&str>,
    structures: &'a [GameStructure],
    decisions: &'a [DecisionRecord],
) -> (Vec<GameStructure>, Vec<DecisionRecord>) {
    let train_structures = structures.iter().filter(|s| !held_out.contains(s.id.as_str())).cloned().collect();
    let train_decisions = decisions.iter().filter(|d| !held_out.contains(d.structure_id.as_str())).cloned().collect();
    (train_structures, train_decisions)
}

/// Per-period probabilities the model assigns along an observed trajectory.
pub fn trajectory_predictions(
    model: &BehaviorModel,
    game: &GameStructure,
    traj: &PlayerTrajectory,
    imputation: Imputation,
    rng: &mut dyn rand::RngCore,
) -> Result<Vec<f64>, BehaviorError> {
    let mut agent = model.agent(game, imputation);
    let mut out = Vec::with_capacity(traj.moves.len());
    for (i, &(mine, theirs)) in traj.moves.iter().enumerate() {
        out.push(agent.cooperation_prob(i as u32 + 1, rng)?);
        agent.observe(mine, theirs);
    }
    Ok(out)
}

fn structure_index(structures: &[GameStructure]) -> BTreeMap<&str, (usize, &GameStructure)> {
    let mut ids: Vec<&GameStructure> = structures.iter().collect();
    ids.sort_by(|a, b| a.id.cmp(&b.id));
    ids.into_iter().enumerate().map(|(i, s)| (s.id.as_str(), (i, s))).collect()
}

/// Individual-level cross-validation.
pub fn evaluate_individual(
    kind: ModelKind,
    plan: &FoldPlan,
    structures: &[GameStructure],
    decisions: &[DecisionRecord],
    options: &EvalOptions,
) -> Result<IndividualReport, EvalError> {
    let index = structure_index(structures);
    let trajectories = group_trajectories(decisions)?;
    for t in &trajectories {
        if !index.contains_key(t.structure_id.as_str()) {
            return Err(DecisionError::UnknownStructure(t.structure_id.clone()).into());
        }
    }
    let folds = plan.folds();
    let results: Vec<Result<Option<Vec<StructureScores>>, EvalError>> = folds
        .par_iter()
        .enumerate()
        .map(|(fold, held)| {
            let held_set: BTreeSet<&str> = held.iter().map(String::as_str).collect();
            let (train_s, train_d) = fold_data(&held_set, structures, decisions);
            let model = match fit_model(kind, &train_s, &train_d, &options.fit) {
                Ok(m) => m,
                Err(_) if options.skip_failed_folds => return Ok(None),
                Err(source) => return Err(EvalError::Fit { fold, source }),
            };
            let held_trajs: Vec<PlayerTrajectory> =
                trajectories.iter().filter(|t| held_set.contains(t.structure_id.as_str())).cloned().collect();
            let scores = score_trajectories(
                &held_trajs,
                |_| fold,
                |traj| {
                    let (pos, game) = index[traj.structure_id.as_str()];
                    // One imputation stream per trajectory keeps results independent of fold scheduling.
                    let stream = derive_seed(pos as u64, traj.interaction_id) ^ traj.player_id.rotate_left(32);
                    let mut rng = interaction_rng(plan.seed, stream);
                    Ok(trajectory_predictions(&model, game, traj, options.imputation, &mut rng)?)
                },
            )?;
            Ok(Some(scores))
        })
        .collect();

    let mut per_structure = Vec::new();
    let mut per_fold = Vec::new();
    let mut skipped_folds = Vec::new();
    for (fold, r) in results.into_iter().enumerate() {
        match r? {
            Some(scores) => {
                per_fold.push((fold, IndividualMetrics::from_scores(&scores)));
                per_structure.extend(scores);
            }
            None => skipped_folds.push(fold),
        }
    }
    per_structure.sort_by(|a, b| a.structure_id.cmp(&b.structure_id));
    Ok(IndividualReport {
        model_kind: kind,
        k: plan.k,
        summary: IndividualMetrics::from_scores(&per_structure),
        per_structure,
        per_fold,
        skipped_folds,
    })
}

/// Predicted and observed per-period cooperation for one held-out structure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructureSeries {
    pub structure_id: String,
    pub fold: usize,
    pub predicted: Vec<f64>,
    pub observed: Vec<f64>,
    pub predicted_mean: f64,
    pub observed_mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateMetrics {
    pub rmse_time: f64,
    pub rmse_avg: f64,
    /// `None` when either series has zero variance.
    pub cor_time: Option<f64>,
    pub cor_avg: Option<f64>,
    pub n_points: usize,
    pub n_structures: usize,
}

impl AggregateMetrics {
    pub fn from_series(series: &[StructureSeries]) -> Result<Self, EvalError> {
        let pred_t: Vec<f64> = series.iter().flat_map(|s| s.predicted.iter().copied()).collect();
        let obs_t: Vec<f64> = series.iter().flat_map(|s| s.observed.iter().copied()).collect();
        let pred_a: Vec<f64> = series.iter().map(|s| s.predicted_mean).collect();
        let obs_a: Vec<f64> = series.iter().map(|s| s.observed_mean).collect();
        Ok(AggregateMetrics {
            rmse_time: rmse(&pred_t, &obs_t)?,
            rmse_avg: rmse(&pred_a, &obs_a)?,
            cor_time: pearson(&pred_t, &obs_t).ok(),
            cor_avg: pearson(&pred_a, &obs_a).ok(),
            n_points: pred_t.len(),
            n_structures: series.len(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub model_kind: ModelKind,
    pub k: usize,
    pub per_structure: Vec<StructureSeries>,
    pub per_fold: Vec<(usize, AggregateMetrics)>,
    pub summary: AggregateMetrics,
    pub skipped_folds: Vec<usize>,
}

/// Observed cooperation rate per period `1..=horizon` (truncated at the
/// last period with data) and the pooled rate over that window.
pub fn observed_series(decisions: &[&DecisionRecord], horizon: u32) -> Option<(Vec<f64>, f64)> {
    let mut coop = vec![0usize; horizon as usize];
    let mut total = vec![0usize; horizon as usize];
    for d in decisions {
        if d.period >= 1 && d.period <= horizon {
            let i = d.period as usize - 1;
            total[i] += 1;
            coop[i] += d.action.is_cooperate() as usize;
        }
    }
    let len = total.iter().take_while(|&&n| n > 0).count();
    if len == 0 {
        return None;
    }
    let series = (0..len).map(|i| coop[i] as f64 / total[i] as f64).collect();
    let pooled = coop[..len].iter().sum::<usize>() as f64 / total[..len].iter().sum::<usize>() as f64;
    Some((series, pooled))
}

/// Aggregate-level cross-validation: held-out structures are simulated from
/// their parameters only.
pub fn evaluate_aggregate(
    kind: ModelKind,
    plan: &FoldPlan,
    structures: &[GameStructure],
    decisions: &[DecisionRecord],
    sim_config: &SimulationConfig,
    options: &EvalOptions,
) -> Result<AggregateReport, EvalError> {
    let index = structure_index(structures);
    let mut by_structure: BTreeMap<&str, Vec<&DecisionRecord>> = BTreeMap::new();
    for d in decisions {
        if !index.contains_key(d.structure_id.as_str()) {
            return Err(DecisionError::UnknownStructure(d.structure_id.clone()).into());
        }
        by_structure.entry(d.structure_id.as_str()).or_default().push(d);
    }
    let folds = plan.folds();
    let results: Vec<Result<Option<Vec<StructureSeries>>, EvalError>> = folds
        .par_iter()
        .enumerate()
        .map(|(fold, held)| {
            let held_set: BTreeSet<&str> = held.iter().map(String::as_str).collect();
            let (train_s, train_d) = fold_data(&held_set, structures, decisions);
            let model = match fit_model(kind, &train_s, &train_d, &options.fit) {
                Ok(m) => m,
                Err(_) if options.skip_failed_folds => return Ok(None),
                Err(source) => return Err(EvalError::Fit { fold, source }),
            };
            let mut out = Vec::with_capacity(held.len());
            for id in held {
                let (pos, game) = index[id.as_str()];
                let cfg = SimulationConfig { seed: derive_seed(sim_config.seed, pos as u64), ..sim_config.clone() };
                let horizon = horizon_for(game, &cfg);
                let observed_rows = by_structure.get(id.as_str()).map(Vec::as_slice).unwrap_or(&[]);
                let (observed, observed_mean) =
                    observed_series(observed_rows, horizon).ok_or_else(|| EvalError::NoObservations(id.clone()))?;
                let sim = simulate_structure(&model, game, &cfg)?;
                let predicted: Vec<f64> = sim.per_period_cooperation[..observed.len()].to_vec();
                let predicted_mean = predicted.iter().sum::<f64>() / predicted.len() as f64;
                out.push(StructureSeries {
                    structure_id: id.clone(),
                    fold,
                    predicted,
                    observed,
                    predicted_mean,
                    observed_mean,
                });
            }
            Ok(Some(out))
        })
        .collect();

    let mut per_structure = Vec::new();
    let mut per_fold = Vec::new();
    let mut skipped_folds = Vec::new();
    for (fold, r) in results.into_iter().enumerate() {
        match r? {
            Some(series) => {
                per_fold.push((fold, AggregateMetrics::from_series(&series)?));
                per_structure.extend(series);
            }
            None => skipped_folds.push(fold),
        }
    }
    per_structure.sort_by(|a, b| a.structure_id.cmp(&b.structure_id));
    Ok(AggregateReport {
        model_kind: kind,
        k: plan.k,
        summary: AggregateMetrics::from_series(&per_structure)?,
        per_structure,
        per_fold,
        skipped_folds,
    })
}

/// Both protocols for one model kind under one fold plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub model_kind: ModelKind,
    pub k: usize,
    pub seed: u64,
    pub individual: Option<IndividualReport>,
    pub aggregate: Option<AggregateReport>,
}

/// Paired t-tests of a reference model against a competitor over matched
/// structures (and matched time points for the squared-error tests).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub reference: ModelKind,
    pub competitor: ModelKind,
    pub tests: Vec<(String, Option<(f64, usize, f64)>)>,
}

fn t_or_none(a: &[f64], b: &[f64]) -> Option<(f64, usize, f64)> {
    paired_t_test(a, b).ok().map(|TTest { t, df, p_two_sided }| (t, df, p_two_sided))
}

pub fn compare(reference: &MetricsReport, competitor: &MetricsReport) -> Comparison {
    let mut tests = Vec::new();
    if let (Some(a), Some(b)) = (&reference.individual, &competitor.individual) {
        let pick = |r: &IndividualReport, f: fn(&StructureScores) -> Option<f64>| -> Vec<f64> {
            r.per_structure.iter().map(|s| f(s).unwrap_or(f64::NAN)).collect()
        };
        for (name, f) in [
            ("accuracy_t1", (|s: &StructureScores| s.accuracy_t1()) as fn(&StructureScores) -> Option<f64>),
            ("accuracy_tgt1", |s| s.accuracy_tgt1()),
            ("loglik_t1", |s| (s.n_t1 > 0).then_some(s.loglik_t1)),
            ("loglik_tgt1", |s| (s.n_tgt1 > 0).then_some(s.loglik_tgt1)),
        ] {
            let (x, y) = (pick(a, f), pick(b, f));
            let keep: Vec<usize> =
                (0..x.len().min(y.len())).filter(|&i| x[i].is_finite() && y[i].is_finite()).collect();
            let xs: Vec<f64> = keep.iter().map(|&i| x[i]).collect();
            let ys: Vec<f64> = keep.iter().map(|&i| y[i]).collect();
            tests.push((name.to_string(), t_or_none(&xs, &ys)));
        }
    }
    if let (Some(a), Some(b)) = (&reference.aggregate, &competitor.aggregate) {
        let sq = |r: &AggregateReport| -> (Vec<f64>, Vec<f64>) {
            let time = r
                .per_structure
                .iter()
                .flat_map(|s| s.predicted.iter().zip(&s.observed).map(|(p, o)| (p - o) * (p - o)))
                .collect();
            let avg = r.per_structure.iter().map(|s| (s.predicted_mean - s.observed_mean).powi(2)).collect();
            (time, avg)
        };
        let (at, aa) = sq(a);
        let (bt, ba) = sq(b);
        tests.push(("squared_error_time".to_string(), t_or_none(&at, &bt)));
        tests.push(("squared_error_avg".to_string(), t_or_none(&aa, &ba)));
    }
    Comparison { reference: reference.model_kind, competitor: competitor.model_kind, tests }
}

/// Share of cooperative actions among those that follow the same player's
/// cooperation, pooled over every player and interaction of the structure.
pub fn inertia_actual(decisions: &[DecisionRecord], structure_id: &str) -> Result<f64, EvalError> {
    let rows: Vec<DecisionRecord> = decisions.iter().filter(|d| d.structure_id == structure_id).cloned().collect();
    let mut after_coop = 0usize;
    let mut coop_again = 0usize;
    for traj in group_trajectories(&rows)? {
        for w in traj.moves.windows(2) {
            if w[0].0.is_cooperate() {
                after_coop += 1;
                coop_again += w[1].0.is_cooperate() as usize;
            }
        }
    }
    if after_coop == 0 {
        return Err(EvalError::NoPriorCooperation(structure_id.to_string()));
    }
    Ok(coop_again as f64 / after_coop as f64)
}

/// Mean predicted cooperation after own cooperation, averaged uniformly over
/// periods `2..=horizon` and both previous opponent actions.
pub fn inertia_predicted(model: &BehaviorModel, game: &GameStructure, horizon: u32) -> Result<f64, EvalError> {
    if !model.kind.has_dynamic_component() {
        return Err(EvalError::NoDynamicComponent(model.kind));
    }
    if horizon < 2 {
        return Err(EvalError::HorizonTooShort(horizon));
    }
    let mut total = 0.0;
    let mut n = 0usize;
    for t in 2..=horizon {
        for other in Action::BOTH {
            let h = InteractionHistory::new(Action::Cooperate, other);
            total += model.predict_cooperation(game, Some(&h), t, None)?;
            n += 1;
        }
    }
    Ok(total / n as f64)
}

/// Aggregate RMSE/correlation of several model kinds as the fold count varies.
pub fn fold_sweep(
    kinds: &[ModelKind],
    ks: &[usize],
    structures: &[GameStructure],
    decisions: &[DecisionRecord],
    fold_seed: u64,
    sim_config: &SimulationConfig,
    options: &EvalOptions,
) -> Result<Vec<(usize, ModelKind, AggregateMetrics)>, EvalError> {
    let ids: Vec<String> = structures.iter().map(|s| s.id.clone()).collect();
    let mut out = Vec::new();
    for &k in ks {
        let plan = make_folds(&ids, k, fold_seed)?;
        for &kind in kinds {
            let report = evaluate_aggregate(kind, &plan, structures, decisions, sim_config, options)?;
            out.push((k, kind, report.summary));
        }
    }
    Ok(out)
}
