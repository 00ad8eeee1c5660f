//! Agent-based playout of a game structure.
//!
//! Two agents drawn from the same [`Policy`] play a fixed number of periods.
//! Every interaction gets its own ChaCha stream (root seed, stream = index),
//! so results do not depend on how interactions are spread over threads.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::behavior::{Agent, BehaviorError, Imputation, Policy};
use crate::game::{Action, GameStructure};

/// Longest reported trajectory.
pub const REPORTING_HORIZON: u32 = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseMode {
    /// Intended actions flip with the structure's error rate; the flipped
    /// action is what both players observe.
    #[default]
    FlipImplemented,
    NoFlip,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub n_interactions: usize,
    pub seed: u64,
    pub horizon_override: Option<u32>,
    pub first_period_prob_override: Option<f64>,
    pub noise_mode: NoiseMode,
    pub imputation: Imputation,
}

impl SimulationConfig {
    pub fn new(n_interactions: usize, seed: u64) -> Self {
        SimulationConfig {
            n_interactions,
            seed,
            horizon_override: None,
            first_period_prob_override: None,
            noise_mode: NoiseMode::default(),
            imputation: Imputation::default(),
        }
    }

    pub fn validate(&self) -> Result<(), SimulationError> {
        if self.n_interactions == 0 {
            return Err(SimulationError::InvalidConfig("n_interactions must be >= 1".into()));
        }
        if self.horizon_override == Some(0) {
            return Err(SimulationError::InvalidConfig("horizon override must be >= 1".into()));
        }
        if let Some(p) = self.first_period_prob_override {
            if !(0.0..=1.0).contains(&p) {
                return Err(SimulationError::InvalidConfig(format!("first-period probability {p} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum SimulationError {
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Behavior(#[from] BehaviorError),
}

/// Number of periods to play: finite games last their expected length capped
/// at the reporting horizon; indefinite games run the full horizon, one
/// period shorter when `delta = 0.5`.
pub fn horizon_for(game: &GameStructure, config: &SimulationConfig) -> u32 {
    if let Some(h) = config.horizon_override {
        return h;
    }
    if game.infinite {
        if (game.delta - 0.5).abs() < 1e-9 {
            REPORTING_HORIZON - 1
        } else {
            REPORTING_HORIZON
        }
    } else {
        let expected = (1.0 / (1.0 - game.delta)).round();
        (expected.max(1.0) as u32).min(REPORTING_HORIZON)
    }
}

/// Random stream for interaction `index` under `seed`.
pub fn interaction_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Derives an independent child seed (SplitMix64 finaliser of `root + index`).
pub fn derive_seed(root: u64, index: u64) -> u64 {
    let mut z = root.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Joint actions per period, player 0 first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InteractionTrace {
    pub intended: Vec<[Action; 2]>,
    pub implemented: Vec<[Action; 2]>,
}

impl InteractionTrace {
    pub fn len(&self) -> usize {
        self.implemented.len()
    }

    pub fn is_empty(&self) -> bool {
        self.implemented.is_empty()
    }
}

pub fn simulate_interaction<P: Policy + ?Sized>(
    policy: &P,
    game: &GameStructure,
    config: &SimulationConfig,
    rng: &mut dyn RngCore,
) -> Result<InteractionTrace, BehaviorError> {
    let horizon = horizon_for(game, config) as usize;
    let mut agents = [policy.agent(game, config.imputation), policy.agent(game, config.imputation)];
    let flips = config.noise_mode == NoiseMode::FlipImplemented && game.error > 0.0;
    let mut trace =
        InteractionTrace { intended: Vec::with_capacity(horizon), implemented: Vec::with_capacity(horizon) };
    for period in 1..=horizon as u32 {
        let mut intended = [Action::Defect; 2];
        for (slot, agent) in intended.iter_mut().zip(agents.iter_mut()) {
            let p = match config.first_period_prob_override {
                Some(p) if period == 1 => p,
                _ => agent.cooperation_prob(period, rng)?,
            };
            *slot = Action::from_cooperated(rng.random::<f64>() < p);
        }
        let mut implemented = intended;
        if flips {
            for a in implemented.iter_mut() {
                if rng.random::<f64>() < game.error {
                    *a = a.flipped();
                }
            }
        }
        agents[0].observe(implemented[0], implemented[1]);
        agents[1].observe(implemented[1], implemented[0]);
        trace.intended.push(intended);
        trace.implemented.push(implemented);
    }
    Ok(trace)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationResult {
    pub structure_id: String,
    pub per_period_cooperation: Vec<f64>,
    /// Cooperative implemented actions per period.
    pub cooperative_actions: Vec<u64>,
    /// Actions recorded per period (two per interaction).
    pub actions: Vec<u64>,
    pub mean_cooperation: f64,
    pub n_interactions: usize,
    pub horizon: u32,
    pub config: SimulationConfig,
}

impl SimulationResult {
    /// Mean cooperation over periods `2..=horizon`; `None` for one-period runs.
    pub fn mean_after_first_period(&self) -> Option<f64> {
        let coop: u64 = self.cooperative_actions.iter().skip(1).sum();
        let total: u64 = self.actions.iter().skip(1).sum();
        (total > 0).then(|| coop as f64 / total as f64)
    }
}

/// Plays `config.n_interactions` independent interactions and reports the
/// implemented cooperation rate per period.
pub fn simulate_structure<P: Policy + ?Sized>(
    policy: &P,
    game: &GameStructure,
    config: &SimulationConfig,
) -> Result<SimulationResult, SimulationError> {
    config.validate()?;
    let horizon = horizon_for(game, config) as usize;
    let counts = (0..config.n_interactions as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = interaction_rng(config.seed, i);
            let trace = simulate_interaction(policy, game, config, &mut rng)?;
            let mut coop = vec![0u64; horizon];
            for (slot, joint) in coop.iter_mut().zip(&trace.implemented) {
                *slot = joint.iter().filter(|a| a.is_cooperate()).count() as u64;
            }
            Ok(coop)
        })
        .try_reduce(
            || vec![0u64; horizon],
            |mut a, b| {
                for (x, y) in a.iter_mut().zip(b) {
                    *x += y;
                }
                Ok::<_, BehaviorError>(a)
            },
        )?;
    let per_period_actions = 2 * config.n_interactions as u64;
    let per_period_cooperation: Vec<f64> = counts.iter().map(|&c| c as f64 / per_period_actions as f64).collect();
    let total: u64 = counts.iter().sum();
    Ok(SimulationResult {
        structure_id: game.id.clone(),
        per_period_cooperation,
        cooperative_actions: counts,
        actions: vec![per_period_actions; horizon],
        mean_cooperation: total as f64 / (per_period_actions * horizon as u64) as f64,
        n_interactions: config.n_interactions,
        horizon: horizon as u32,
        config: config.clone(),
    })
}
