//! Prediction policies: the two-piece logistic model, its two halves used
//! alone, a constant baseline, and self-tuning EWA learning.
//!
//! Everything that plays or scores a game goes through [`Policy`], which
//! hands out one stateful [`Agent`] per player and interaction. For the
//! logistic models the agent only remembers the previous joint outcome; the
//! learning model threads its full attraction state.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{dynamic_features, static_features, FeatureError, FeatureSchema};
use crate::fewa::{FewaParams, FewaState, InitialAttraction};
use crate::game::{
    group_trajectories, Action, DecisionError, DecisionRecord, GameStructure, InteractionHistory, PayoffTable,
};
use crate::glm::{fit_logistic, fit_logistic_dropping_aliased, Dataset, FitOptions, FittedGlm, GlmError};
use crate::num::ln_sigmoid;

/// Default logit-sensitivity candidates for unit-gauge payoffs.
pub const DEFAULT_LAMBDA_GRID: [f64; 6] = [0.5, 1.0, 2.0, 5.0, 10.0, 20.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Full,
    StaticOnly,
    DynamicOnly,
    Baseline,
    Fewa,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] =
        [ModelKind::Full, ModelKind::StaticOnly, ModelKind::DynamicOnly, ModelKind::Fewa, ModelKind::Baseline];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Full => "full",
            ModelKind::StaticOnly => "static",
            ModelKind::DynamicOnly => "dynamic",
            ModelKind::Baseline => "baseline",
            ModelKind::Fewa => "fewa",
        }
    }

    pub fn has_dynamic_component(self) -> bool {
        matches!(self, ModelKind::Full | ModelKind::DynamicOnly)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "full" => Ok(ModelKind::Full),
            "static" | "static_only" | "static-only" => Ok(ModelKind::StaticOnly),
            "dynamic" | "dynamic_only" | "dynamic-only" => Ok(ModelKind::DynamicOnly),
            "baseline" => Ok(ModelKind::Baseline),
            "fewa" => Ok(ModelKind::Fewa),
            other => Err(format!("unknown model kind '{other}'")),
        }
    }
}

/// How the later-period model fills in the missing lagged outcome at `t = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Imputation {
    /// Each lagged action is Cooperate or Defect with probability 1/2.
    #[default]
    BernoulliHalf,
    MutualCooperation,
}

#[derive(Debug, Error)]
pub enum BehaviorError {
    #[error("{kind} model requires {component}")]
    MissingComponent { kind: ModelKind, component: &'static str },
    #[error("{0} model has a component it should not carry")]
    UnexpectedComponent(ModelKind),
    #[error("training data has no {0} rows")]
    EmptyTrainingSlice(&'static str),
    #[error("fitting the {component} component: {source}")]
    Glm {
        component: &'static str,
        #[source]
        source: GlmError,
    },
    #[error(transparent)]
    Decisions(#[from] DecisionError),
    #[error(transparent)]
    Features(#[from] FeatureError),
    #[error("period {0} requires the previous joint outcome")]
    MissingHistory(u32),
    #[error("period-zero imputation needs a random source")]
    MissingRng,
    #[error("period must be >= 1")]
    InvalidPeriod,
    #[error("lambda grid is empty")]
    EmptyGrid,
    #[error("lambda must be finite and non-negative, got {0}")]
    InvalidLambda(f64),
    #[error("baseline rate {0} outside [0, 1]")]
    InvalidRate(f64),
    #[error("{component} weights do not match the {expected} feature schema")]
    SchemaMismatch { component: &'static str, expected: &'static str },
}

/// Provenance of a fitted model.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainingFingerprint {
    pub structure_ids: Vec<String>,
    pub n_decisions: usize,
    pub n_static_rows: usize,
    pub n_dynamic_rows: usize,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BehaviorModel {
    pub kind: ModelKind,
    pub static_glm: Option<FittedGlm<f64>>,
    pub dynamic_glm: Option<FittedGlm<f64>>,
    pub baseline_rate: Option<f64>,
    pub fewa: Option<FewaParams<f64>>,
    pub training: Option<TrainingFingerprint>,
}

impl BehaviorModel {
    fn bare(kind: ModelKind) -> Self {
        BehaviorModel { kind, static_glm: None, dynamic_glm: None, baseline_rate: None, fewa: None, training: None }
    }

    pub fn full(static_glm: FittedGlm<f64>, dynamic_glm: FittedGlm<f64>) -> Result<Self, BehaviorError> {
        BehaviorModel { static_glm: Some(static_glm), dynamic_glm: Some(dynamic_glm), ..Self::bare(ModelKind::Full) }
            .validate()
    }

    pub fn static_only(static_glm: FittedGlm<f64>) -> Result<Self, BehaviorError> {
        BehaviorModel { static_glm: Some(static_glm), ..Self::bare(ModelKind::StaticOnly) }.validate()
    }

    pub fn dynamic_only(dynamic_glm: FittedGlm<f64>) -> Result<Self, BehaviorError> {
        BehaviorModel { dynamic_glm: Some(dynamic_glm), ..Self::bare(ModelKind::DynamicOnly) }.validate()
    }

    pub fn baseline(rate: f64) -> Result<Self, BehaviorError> {
        BehaviorModel { baseline_rate: Some(rate), ..Self::bare(ModelKind::Baseline) }.validate()
    }

    pub fn fewa(params: FewaParams<f64>) -> Result<Self, BehaviorError> {
        BehaviorModel { fewa: Some(params), ..Self::bare(ModelKind::Fewa) }.validate()
    }

    /// Checks that exactly the components required by `kind` are present
    /// and that the regression weights match their feature schemas.
    pub fn validate(self) -> Result<Self, BehaviorError> {
        let kind = self.kind;
        let missing = |component| BehaviorError::MissingComponent { kind, component };
        let (needs_static, needs_dynamic, needs_rate, needs_fewa) = match kind {
            ModelKind::Full => (true, true, false, false),
            ModelKind::StaticOnly => (true, false, false, false),
            ModelKind::DynamicOnly => (false, true, false, false),
            ModelKind::Baseline => (false, false, true, false),
            ModelKind::Fewa => (false, false, false, true),
        };
        for (needed, present, name) in [
            (needs_static, self.static_glm.is_some(), "a static component"),
            (needs_dynamic, self.dynamic_glm.is_some(), "a dynamic component"),
            (needs_rate, self.baseline_rate.is_some(), "a baseline rate"),
            (needs_fewa, self.fewa.is_some(), "learning parameters"),
        ] {
            if needed && !present {
                return Err(missing(name));
            }
            if !needed && present {
                return Err(BehaviorError::UnexpectedComponent(kind));
            }
        }
        if let Some(g) = &self.static_glm {
            if g.schema() != Some(FeatureSchema::STATIC) {
                return Err(BehaviorError::SchemaMismatch { component: "static", expected: "static" });
            }
        }
        if let Some(g) = &self.dynamic_glm {
            if g.schema() != Some(FeatureSchema::DYNAMIC) {
                return Err(BehaviorError::SchemaMismatch { component: "dynamic", expected: "dynamic" });
            }
        }
        if let Some(rate) = self.baseline_rate {
            if !(0.0..=1.0).contains(&rate) {
                return Err(BehaviorError::InvalidRate(rate));
            }
        }
        if let Some(p) = &self.fewa {
            if !(p.lambda.is_finite() && p.lambda >= 0.0) {
                return Err(BehaviorError::InvalidLambda(p.lambda));
            }
        }
        Ok(self)
    }

    /// Cooperation probability at period `t`, imputing a random period-zero
    /// outcome for the dynamic-only model at `t = 1`.
    pub fn predict_cooperation(
        &self,
        game: &GameStructure,
        history: Option<&InteractionHistory>,
        t: u32,
        rng: Option<&mut dyn RngCore>,
    ) -> Result<f64, BehaviorError> {
        self.predict_cooperation_with(game, history, t, Imputation::BernoulliHalf, rng)
    }

    /// As [`Self::predict_cooperation`] with an explicit imputation rule.
    ///
    /// The learning model is history-dependent beyond one period; here its
    /// state is rebuilt from the single visible outcome. Use [`Policy::agent`]
    /// to follow a whole trajectory.
    pub fn predict_cooperation_with(
        &self,
        game: &GameStructure,
        history: Option<&InteractionHistory>,
        t: u32,
        imputation: Imputation,
        rng: Option<&mut dyn RngCore>,
    ) -> Result<f64, BehaviorError> {
        if t == 0 {
            return Err(BehaviorError::InvalidPeriod);
        }
        match self.kind {
            ModelKind::Baseline => Ok(self.baseline_rate.expect("validated")),
            ModelKind::StaticOnly => self.static_prob(game),
            ModelKind::Full if t == 1 => self.static_prob(game),
            ModelKind::Full => self.dynamic_prob(game, history.ok_or(BehaviorError::MissingHistory(t))?, t),
            ModelKind::DynamicOnly if t == 1 => {
                let imputed = impute(imputation, rng)?;
                self.dynamic_prob(game, &imputed, 1)
            }
            ModelKind::DynamicOnly => self.dynamic_prob(game, history.ok_or(BehaviorError::MissingHistory(t))?, t),
            ModelKind::Fewa => {
                let params = self.fewa.expect("validated");
                let payoffs = game.unit_payoffs();
                let mut state = FewaState::initial(&payoffs, params.initial_attraction);
                if t > 1 {
                    let h = history.ok_or(BehaviorError::MissingHistory(t))?;
                    state = state.update(h.my_prev, h.other_prev, &payoffs);
                }
                Ok(state.choice_probabilities(params.lambda).0)
            }
        }
    }

    fn static_prob(&self, game: &GameStructure) -> Result<f64, BehaviorError> {
        let glm = self.static_glm.as_ref().expect("validated");
        glm.predict(&static_features(game)).map_err(|source| BehaviorError::Glm { component: "static", source })
    }

    fn dynamic_prob(&self, game: &GameStructure, history: &InteractionHistory, t: u32) -> Result<f64, BehaviorError> {
        let glm = self.dynamic_glm.as_ref().expect("validated");
        glm.predict(&dynamic_features(game, Some(history), t)?)
            .map_err(|source| BehaviorError::Glm { component: "dynamic", source })
    }
}

fn impute(imputation: Imputation, rng: Option<&mut dyn RngCore>) -> Result<InteractionHistory, BehaviorError> {
    match imputation {
        Imputation::MutualCooperation => Ok(InteractionHistory::new(Action::Cooperate, Action::Cooperate)),
        Imputation::BernoulliHalf => {
            let rng = rng.ok_or(BehaviorError::MissingRng)?;
            let mine = Action::from_cooperated(rng.random_bool(0.5));
            let other = Action::from_cooperated(rng.random_bool(0.5));
            Ok(InteractionHistory::new(mine, other))
        }
    }
}

/// Something that can field a player in a game.
pub trait Policy: Sync {
    type Agent<'a>: Agent
    where
        Self: 'a;

    fn agent<'a>(&'a self, game: &'a GameStructure, imputation: Imputation) -> Self::Agent<'a>;
}

/// One player's decision process within one interaction.
pub trait Agent {
    /// Probability of cooperating at `period`, given everything observed so far.
    fn cooperation_prob(&mut self, period: u32, rng: &mut dyn RngCore) -> Result<f64, BehaviorError>;

    /// Records the implemented joint outcome of the period just played.
    fn observe(&mut self, mine: Action, theirs: Action);
}

pub struct ModelAgent<'a> {
    model: &'a BehaviorModel,
    game: &'a GameStructure,
    imputation: Imputation,
    last: Option<InteractionHistory>,
    learning: Option<(FewaState<f64>, PayoffTable<f64>)>,
}

impl Agent for ModelAgent<'_> {
    fn cooperation_prob(&mut self, period: u32, rng: &mut dyn RngCore) -> Result<f64, BehaviorError> {
        if let (Some((state, _)), Some(params)) = (&self.learning, &self.model.fewa) {
            return Ok(state.choice_probabilities(params.lambda).0);
        }
        let history = if period > 1 { self.last.as_ref() } else { None };
        self.model.predict_cooperation_with(self.game, history, period, self.imputation, Some(rng))
    }

    fn observe(&mut self, mine: Action, theirs: Action) {
        self.last = Some(InteractionHistory::new(mine, theirs));
        if let Some((state, payoffs)) = &mut self.learning {
            *state = state.update(mine, theirs, payoffs);
        }
    }
}

impl Policy for BehaviorModel {
    type Agent<'a> = ModelAgent<'a>;

    fn agent<'a>(&'a self, game: &'a GameStructure, imputation: Imputation) -> ModelAgent<'a> {
        let learning = self.fewa.map(|params| {
            let payoffs = game.unit_payoffs();
            (FewaState::initial(&payoffs, params.initial_attraction), payoffs)
        });
        ModelAgent { model: self, game, imputation, last: None, learning }
    }
}

/// Cooperates with a fixed probability every period.
#[derive(Debug, Clone, Copy)]
pub struct ConstantPolicy(pub f64);

pub struct ConstantAgent(f64);

impl Agent for ConstantAgent {
    fn cooperation_prob(&mut self, _period: u32, _rng: &mut dyn RngCore) -> Result<f64, BehaviorError> {
        Ok(self.0)
    }

    fn observe(&mut self, _mine: Action, _theirs: Action) {}
}

impl Policy for ConstantPolicy {
    type Agent<'a> = ConstantAgent;

    fn agent<'a>(&'a self, _game: &'a GameStructure, _imputation: Imputation) -> ConstantAgent {
        ConstantAgent(self.0)
    }
}

/// Cooperates in period one with probability `first_period`, then repeats
/// its own previous (implemented) action forever.
#[derive(Debug, Clone, Copy)]
pub struct InertiaPolicy {
    pub first_period: f64,
}

pub struct InertiaAgent {
    first_period: f64,
    last_own: Option<Action>,
}

impl Agent for InertiaAgent {
    fn cooperation_prob(&mut self, period: u32, _rng: &mut dyn RngCore) -> Result<f64, BehaviorError> {
        match (period, self.last_own) {
            (1, _) | (_, None) => Ok(self.first_period),
            (_, Some(a)) => Ok(a.indicator()),
        }
    }

    fn observe(&mut self, mine: Action, _theirs: Action) {
        self.last_own = Some(mine);
    }
}

impl Policy for InertiaPolicy {
    type Agent<'a> = InertiaAgent;

    fn agent<'a>(&'a self, _game: &'a GameStructure, _imputation: Imputation) -> InertiaAgent {
        InertiaAgent { first_period: self.first_period, last_own: None }
    }
}

/// What to do when a training design lacks full column rank, e.g. a fold
/// whose structures never vary an indicator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankPolicy {
    #[default]
    Error,
    /// Drop aliased columns; their weights are fixed at 0.
    DropAliased,
}

#[derive(Debug, Clone)]
pub struct FitConfig {
    pub glm: FitOptions<f64>,
    pub rank_policy: RankPolicy,
    pub lambda_grid: Vec<f64>,
    pub initial_attraction: InitialAttraction,
    pub seed: Option<u64>,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            glm: FitOptions::default(),
            rank_policy: RankPolicy::default(),
            lambda_grid: DEFAULT_LAMBDA_GRID.to_vec(),
            initial_attraction: InitialAttraction::default(),
            seed: None,
        }
    }
}

/// First-period and later-period regression designs built from observed
/// trajectories.
pub struct TrainingData {
    pub first_period: Dataset<f64>,
    pub later_periods: Dataset<f64>,
    pub n_decisions: usize,
}

pub fn training_data(
    structures: &[GameStructure],
    decisions: &[DecisionRecord],
) -> Result<TrainingData, BehaviorError> {
    let index: BTreeMap<&str, &GameStructure> = structures.iter().map(|s| (s.id.as_str(), s)).collect();
    let mut first_period = Dataset::for_schema(FeatureSchema::STATIC);
    let mut later_periods = Dataset::for_schema(FeatureSchema::DYNAMIC);
    for traj in group_trajectories(decisions)? {
        let game = index
            .get(traj.structure_id.as_str())
            .ok_or_else(|| DecisionError::UnknownStructure(traj.structure_id.clone()))?;
        let static_x = static_features(game);
        for (i, &(action, _)) in traj.moves.iter().enumerate() {
            let period = i + 1;
            let outcome = action.is_cooperate();
            if period == 1 {
                first_period.push_features(&static_x, outcome).expect("schema matches by construction");
            } else {
                let x = dynamic_features(game, traj.history_at(period).as_ref(), period as u32)?;
                later_periods.push_features(&x, outcome).expect("schema matches by construction");
            }
        }
    }
    Ok(TrainingData { first_period, later_periods, n_decisions: decisions.len() })
}

fn fit_component(
    data: &Dataset<f64>,
    component: &'static str,
    config: &FitConfig,
) -> Result<FittedGlm<f64>, BehaviorError> {
    if data.is_empty() {
        return Err(BehaviorError::EmptyTrainingSlice(if component == "static" { "period-1" } else { "period>1" }));
    }
    let fitted = match config.rank_policy {
        RankPolicy::Error => fit_logistic(data, config.glm),
        RankPolicy::DropAliased => fit_logistic_dropping_aliased(data, config.glm),
    };
    fitted.map_err(|source| BehaviorError::Glm { component, source })
}

/// Calibrates a model of the given kind on `decisions` played in `structures`.
pub fn fit_model(
    kind: ModelKind,
    structures: &[GameStructure],
    decisions: &[DecisionRecord],
    config: &FitConfig,
) -> Result<BehaviorModel, BehaviorError> {
    if decisions.is_empty() {
        return Err(BehaviorError::EmptyTrainingSlice("decision"));
    }
    let data = training_data(structures, decisions)?;
    let mut ids: Vec<String> = decisions.iter().map(|d| d.structure_id.clone()).collect();
    ids.sort();
    ids.dedup();
    let fingerprint = TrainingFingerprint {
        structure_ids: ids,
        n_decisions: data.n_decisions,
        n_static_rows: data.first_period.len(),
        n_dynamic_rows: data.later_periods.len(),
        seed: config.seed,
    };
    let mut model = match kind {
        ModelKind::Full => BehaviorModel::full(
            fit_component(&data.first_period, "static", config)?,
            fit_component(&data.later_periods, "dynamic", config)?,
        )?,
        ModelKind::StaticOnly => BehaviorModel::static_only(fit_component(&data.first_period, "static", config)?)?,
        ModelKind::DynamicOnly => BehaviorModel::dynamic_only(fit_component(&data.later_periods, "dynamic", config)?)?,
        ModelKind::Baseline => {
            let coop = decisions.iter().filter(|d| d.action.is_cooperate()).count();
            BehaviorModel::baseline(coop as f64 / decisions.len() as f64)?
        }
        ModelKind::Fewa => {
            let lambda = calibrate_lambda(structures, decisions, &config.lambda_grid, config.initial_attraction)?;
            BehaviorModel::fewa(FewaParams { lambda, initial_attraction: config.initial_attraction })?
        }
    };
    model.training = Some(fingerprint);
    Ok(model)
}

/// Picks the grid value maximizing the log-likelihood of all later-period
/// decisions under learning states driven by the observed play. Ties go to
/// the smaller value.
pub fn calibrate_lambda(
    structures: &[GameStructure],
    decisions: &[DecisionRecord],
    grid: &[f64],
    initial: InitialAttraction,
) -> Result<f64, BehaviorError> {
    if grid.is_empty() {
        return Err(BehaviorError::EmptyGrid);
    }
    if let Some(&bad) = grid.iter().find(|l| !(l.is_finite() && **l >= 0.0)) {
        return Err(BehaviorError::InvalidLambda(bad));
    }
    let index: BTreeMap<&str, &GameStructure> = structures.iter().map(|s| (s.id.as_str(), s)).collect();
    // The attraction path does not depend on lambda, so record each scored
    // decision's attraction gap once.
    let mut scored: Vec<(f64, bool)> = Vec::new();
    for traj in group_trajectories(decisions)? {
        let game = index
            .get(traj.structure_id.as_str())
            .ok_or_else(|| DecisionError::UnknownStructure(traj.structure_id.clone()))?;
        let payoffs = game.unit_payoffs();
        let mut state = FewaState::initial(&payoffs, initial);
        for (i, &(mine, theirs)) in traj.moves.iter().enumerate() {
            if i > 0 {
                scored.push((state.attractions[0] - state.attractions[1], mine.is_cooperate()));
            }
            state = state.update(mine, theirs, &payoffs);
        }
    }
    let mut sorted = grid.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut best = (sorted[0], f64::NEG_INFINITY);
    for &lambda in &sorted {
        let ll: f64 =
            scored.iter().map(|&(gap, coop)| ln_sigmoid(if coop { lambda * gap } else { -lambda * gap })).sum();
        if ll > best.1 {
            best = (lambda, ll);
        }
    }
    Ok(best.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{DYNAMIC_NAMES, STATIC_NAMES};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn game() -> GameStructure {
        GameStructure {
            id: "g".into(),
            error: 0.0625,
            delta: 0.875,
            infinite: true,
            continuous: false,
            risk: false,
            r1: 0.6,
            r2: 0.8,
            dataset: "FR".into(),
            observed_cooperation: None,
        }
    }

    fn model(kind: ModelKind) -> BehaviorModel {
        let s =
            FittedGlm::from_weights(&STATIC_NAMES, vec![-0.5, 1.0, 0.5, -0.3, -1.0, 0.4, 0.1, 0.2, 0.3, 0.0]).unwrap();
        let mut dw = vec![0.0; 15];
        dw[0] = -2.0;
        dw[11] = 3.0;
        dw[12] = 1.0;
        dw[14] = -0.05;
        let d = FittedGlm::from_weights(&DYNAMIC_NAMES, dw).unwrap();
        match kind {
            ModelKind::Full => BehaviorModel::full(s, d).unwrap(),
            ModelKind::StaticOnly => BehaviorModel::static_only(s).unwrap(),
            ModelKind::DynamicOnly => BehaviorModel::dynamic_only(d).unwrap(),
            ModelKind::Baseline => BehaviorModel::baseline(0.43).unwrap(),
            ModelKind::Fewa => {
                BehaviorModel::fewa(FewaParams { lambda: 5.0, initial_attraction: InitialAttraction::default() })
                    .unwrap()
            }
        }
    }

    #[test]
    fn component_invariants() {
        let s = FittedGlm::from_weights(&STATIC_NAMES, vec![0.0; 10]).unwrap();
        let mut m = BehaviorModel::static_only(s.clone()).unwrap();
        m.kind = ModelKind::Full;
        assert!(matches!(m.validate(), Err(BehaviorError::MissingComponent { .. })));
        assert!(matches!(BehaviorModel::dynamic_only(s), Err(BehaviorError::SchemaMismatch { .. })));
        assert!(matches!(BehaviorModel::baseline(1.5), Err(BehaviorError::InvalidRate(_))));
    }

    #[test]
    fn baseline_is_constant() {
        let m = model(ModelKind::Baseline);
        let h = InteractionHistory::new(Action::Defect, Action::Defect);
        assert_eq!(m.predict_cooperation(&game(), None, 1, None).unwrap(), 0.43);
        assert_eq!(m.predict_cooperation(&game(), Some(&h), 9, None).unwrap(), 0.43);
    }

    #[test]
    fn full_first_period_ignores_history() {
        let m = model(ModelKind::Full);
        let a = m.predict_cooperation(&game(), None, 1, None).unwrap();
        for my in Action::BOTH {
            for other in Action::BOTH {
                let h = InteractionHistory::new(my, other);
                assert_eq!(m.predict_cooperation(&game(), Some(&h), 1, None).unwrap(), a);
            }
        }
        assert!(matches!(m.predict_cooperation(&game(), None, 2, None), Err(BehaviorError::MissingHistory(2))));
    }

    #[test]
    fn static_only_uses_structure_at_any_period() {
        let m = model(ModelKind::StaticOnly);
        let h = InteractionHistory::new(Action::Defect, Action::Cooperate);
        let p1 = m.predict_cooperation(&game(), None, 1, None).unwrap();
        assert_eq!(m.predict_cooperation(&game(), Some(&h), 5, None).unwrap(), p1);
        assert_eq!(p1, m.static_glm.as_ref().unwrap().predict(&static_features(&game())).unwrap());
    }

    #[test]
    fn dynamic_only_imputation() {
        let m = model(ModelKind::DynamicOnly);
        assert!(matches!(m.predict_cooperation(&game(), None, 1, None), Err(BehaviorError::MissingRng)));
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            m.predict_cooperation(&game(), None, 1, Some(&mut rng)).unwrap()
        };
        assert_eq!(draw(3), draw(3));
        let cc = m.predict_cooperation_with(&game(), None, 1, Imputation::MutualCooperation, None).unwrap();
        let h = InteractionHistory::new(Action::Cooperate, Action::Cooperate);
        let direct = m.dynamic_glm.as_ref().unwrap().predict(&dynamic_features(&game(), Some(&h), 1).unwrap()).unwrap();
        assert_eq!(cc, direct);
    }

    #[test]
    fn all_kinds_predict_inside_unit_interval() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for kind in ModelKind::ALL {
            let m = model(kind);
            for t in 1..=8 {
                for my in Action::BOTH {
                    for other in Action::BOTH {
                        let h = InteractionHistory::new(my, other);
                        let p = m.predict_cooperation(&game(), Some(&h), t, Some(&mut rng)).unwrap();
                        assert!(p > 0.0 && p < 1.0, "{kind} {t}: {p}");
                    }
                }
            }
        }
    }

    #[test]
    fn agent_matches_direct_prediction_for_logistic_models() {
        let m = model(ModelKind::Full);
        let g = game();
        let mut agent = m.agent(&g, Imputation::BernoulliHalf);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(agent.cooperation_prob(1, &mut rng).unwrap(), m.predict_cooperation(&g, None, 1, None).unwrap());
        agent.observe(Action::Cooperate, Action::Defect);
        let h = InteractionHistory::new(Action::Cooperate, Action::Defect);
        assert_eq!(agent.cooperation_prob(2, &mut rng).unwrap(), m.predict_cooperation(&g, Some(&h), 2, None).unwrap());
    }

    #[test]
    fn learning_agent_threads_state() {
        let m = model(ModelKind::Fewa);
        let g = game();
        let payoffs = g.unit_payoffs();
        let mut agent = m.agent(&g, Imputation::BernoulliHalf);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut state = FewaState::initial(&payoffs, InitialAttraction::default());
        for (mine, theirs) in [
            (Action::Cooperate, Action::Defect),
            (Action::Defect, Action::Defect),
            (Action::Cooperate, Action::Cooperate),
        ] {
            agent.observe(mine, theirs);
            state = state.update(mine, theirs, &payoffs);
        }
        assert_eq!(agent.cooperation_prob(4, &mut rng).unwrap(), state.choice_probabilities(5.0).0);
    }

    #[test]
    fn single_candidate_grid() {
        let d = vec![DecisionRecord {
            structure_id: "g".into(),
            interaction_id: 0,
            player_id: 0,
            period: 1,
            action: Action::Cooperate,
            partner_action: Action::Defect,
        }];
        let l = calibrate_lambda(&[game()], &d, &[2.0], InitialAttraction::default()).unwrap();
        assert_eq!(l, 2.0);
        assert!(matches!(
            calibrate_lambda(&[game()], &d, &[], InitialAttraction::default()),
            Err(BehaviorError::EmptyGrid)
        ));
        assert!(matches!(
            calibrate_lambda(&[game()], &d, &[-1.0], InitialAttraction::default()),
            Err(BehaviorError::InvalidLambda(_))
        ));
    }

    #[test]
    fn payoff_scaling_is_compensated_by_lambda() {
        let p = game().unit_payoffs();
        let c = 7.5;
        let scaled = p.scaled(c);
        let mut a = FewaState::initial(&p, InitialAttraction::UniformOpponentExpectation);
        let mut b = FewaState::initial(&scaled, InitialAttraction::UniformOpponentExpectation);
        for (mine, theirs) in
            [(Action::Cooperate, Action::Defect), (Action::Defect, Action::Cooperate), (Action::Defect, Action::Defect)]
        {
            a = a.update(mine, theirs, &p);
            b = b.update(mine, theirs, &scaled);
            for j in 0..2 {
                assert!((b.attractions[j] - c * a.attractions[j]).abs() < 1e-12);
            }
            let (pa, _) = a.choice_probabilities(4.0);
            let (pb, _) = b.choice_probabilities(4.0 / c);
            assert!((pa - pb).abs() < 1e-12);
        }
    }

    #[test]
    fn model_kind_names_roundtrip() {
        for k in ModelKind::ALL {
            assert_eq!(k.name().parse::<ModelKind>().unwrap(), k);
        }
        assert!("nope".parse::<ModelKind>().is_err());
    }
}
