#![allow(dead_code)]

use coopcast_core::behavior::BehaviorModel;
use coopcast_core::features::{FeatureSchema, DYNAMIC_NAMES, STATIC_NAMES};
use coopcast_core::glm::FittedGlm;

/// Weight vector for `schema` from `(name, weight)` pairs; unnamed features get 0.
pub fn weights(schema: FeatureSchema, pairs: &[(&str, f64)]) -> Vec<f64> {
    for (name, _) in pairs {
        assert!(schema.names().contains(name), "unknown feature {name}");
    }
    schema.names().iter().map(|n| pairs.iter().find(|p| p.0 == *n).map_or(0.0, |p| p.1)).collect()
}

pub fn full_model(static_w: Vec<f64>, dynamic_w: Vec<f64>) -> BehaviorModel {
    BehaviorModel::full(
        FittedGlm::from_weights(&STATIC_NAMES, static_w).unwrap(),
        FittedGlm::from_weights(&DYNAMIC_NAMES, dynamic_w).unwrap(),
    )
    .unwrap()
}

/// History-dependent generator with every coefficient non-zero.
pub fn truth_model() -> BehaviorModel {
    full_model(
        weights(
            FeatureSchema::STATIC,
            &[
                ("intercept", -1.2),
                ("r1", 1.5),
                ("r2", 1.0),
                ("risk", -0.6),
                ("error", -1.5),
                ("delta", 1.2),
                ("r1*delta", 0.8),
                ("r2*delta", -0.5),
                ("infinity", 0.4),
                ("continuous", 0.3),
            ],
        ),
        weights(
            FeatureSchema::DYNAMIC,
            &[
                ("intercept", -2.5),
                ("r1", 1.0),
                ("r2", 0.8),
                ("risk", -0.4),
                ("error", -1.0),
                ("delta", 0.6),
                ("r1*delta", 0.9),
                ("r2*delta", -0.3),
                ("infinity", -0.4),
                ("continuous", 0.2),
                ("delta*infinity", 0.8),
                ("my_decision_prev", 2.2),
                ("other_decision_prev", 1.8),
                ("error*other_decision_prev", -2.0),
                ("t", -0.06),
            ],
        ),
    )
}

/// Cooperation rises with delta, r1, r2 and infinity and falls with error
/// and risk, in both components.
pub fn sign_pattern_model() -> BehaviorModel {
    full_model(
        weights(
            FeatureSchema::STATIC,
            &[
                ("intercept", 0.0),
                ("r1", 1.0),
                ("r2", 1.5),
                ("risk", -1.0),
                ("error", -3.0),
                ("delta", 2.0),
                ("infinity", 0.8),
            ],
        ),
        weights(
            FeatureSchema::DYNAMIC,
            &[
                ("intercept", -1.0),
                ("r1", 0.8),
                ("r2", 1.2),
                ("risk", -0.8),
                ("error", -3.0),
                ("delta", 1.5),
                ("infinity", 0.5),
                ("delta*infinity", 0.5),
                ("my_decision_prev", 1.5),
                ("other_decision_prev", 1.5),
                ("error*other_decision_prev", -1.0),
            ],
        ),
    )
}

/// Later periods copy the player's own previous action with probability
/// `σ(gap)`; the first period depends on `first_period` weights.
pub fn inertia_model(static_w: Vec<f64>, gap: f64) -> BehaviorModel {
    full_model(static_w, weights(FeatureSchema::DYNAMIC, &[("intercept", -gap), ("my_decision_prev", 2.0 * gap)]))
}
