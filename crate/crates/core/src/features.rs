//! Regression feature vectors for the first-period and later-period models.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::game::{GameStructure, InteractionHistory};

/// Embedded in persisted models; bump whenever a name list below changes.
pub const SCHEMA_VERSION: &str = "pd-features/1";

pub const STATIC_NAMES: [&str; 10] =
    ["intercept", "r1", "r2", "risk", "error", "delta", "r1*delta", "r2*delta", "infinity", "continuous"];

pub const DYNAMIC_NAMES: [&str; 15] = [
    "intercept",
    "r1",
    "r2",
    "risk",
    "error",
    "delta",
    "r1*delta",
    "r2*delta",
    "infinity",
    "continuous",
    "delta*infinity",
    "my_decision_prev",
    "other_decision_prev",
    "error*other_decision_prev",
    "t",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SchemaKind {
    Static,
    Dynamic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FeatureSchema {
    pub kind: SchemaKind,
}

impl FeatureSchema {
    pub const STATIC: FeatureSchema = FeatureSchema { kind: SchemaKind::Static };
    pub const DYNAMIC: FeatureSchema = FeatureSchema { kind: SchemaKind::Dynamic };

    pub fn names(&self) -> &'static [&'static str] {
        match self.kind {
            SchemaKind::Static => &STATIC_NAMES,
            SchemaKind::Dynamic => &DYNAMIC_NAMES,
        }
    }

    pub fn len(&self) -> usize {
        self.names().len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Recognizes a persisted name list, if it is exactly one of the schemas.
    pub fn from_names<S: AsRef<str>>(names: &[S]) -> Option<FeatureSchema> {
        [FeatureSchema::STATIC, FeatureSchema::DYNAMIC]
            .into_iter()
            .find(|s| s.names().len() == names.len() && s.names().iter().zip(names).all(|(a, b)| *a == b.as_ref()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub schema: FeatureSchema,
    pub values: Vec<f64>,
}

impl FeatureVector {
    pub fn names(&self) -> &'static [&'static str] {
        self.schema.names()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FeatureError {
    #[error("period {0} requires the previous period's joint outcome")]
    MissingHistory(u32),
    #[error("period must be >= 1")]
    InvalidPeriod,
}

fn flag(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

fn push_structural(game: &GameStructure, out: &mut Vec<f64>) {
    out.extend_from_slice(&[
        1.0,
        game.r1,
        game.r2,
        flag(game.risk),
        game.error,
        game.delta,
        game.r1 * game.delta,
        game.r2 * game.delta,
        flag(game.infinite),
        flag(game.continuous),
    ]);
}

pub fn static_features(game: &GameStructure) -> FeatureVector {
    let mut values = Vec::with_capacity(STATIC_NAMES.len());
    push_structural(game, &mut values);
    FeatureVector { schema: FeatureSchema::STATIC, values }
}

/// Later-period features. `history` may be an imputed period-zero outcome
/// when called at `t = 1`; otherwise it is required.
pub fn dynamic_features(
    game: &GameStructure,
    history: Option<&InteractionHistory>,
    t: u32,
) -> Result<FeatureVector, FeatureError> {
    if t == 0 {
        return Err(FeatureError::InvalidPeriod);
    }
    let history = history.ok_or(FeatureError::MissingHistory(t))?;
    let mut values = Vec::with_capacity(DYNAMIC_NAMES.len());
    push_structural(game, &mut values);
    let other = history.other_prev.indicator();
    values.extend_from_slice(&[
        game.delta * flag(game.infinite),
        history.my_prev.indicator(),
        other,
        game.error * other,
        f64::from(t),
    ]);
    Ok(FeatureVector { schema: FeatureSchema::DYNAMIC, values })
}
