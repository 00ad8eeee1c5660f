//! Calibration, simulation, and analysis of predictive models of cooperation
//! in repeated Prisoner's Dilemma games.
//!
//! The numeric kernels ([`glm`], [`linalg`], the payoff arithmetic in
//! [`game`], the learning model in [`fewa`] and the statistics in [`stats`])
//! are generic over [`num::Real`]; the aliases below fix them to `f64`, which
//! is what the data pipeline uses.

// Negated comparisons are deliberate: `!(x > 0.0)` also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod behavior;
pub mod evaluation;
pub mod features;
pub mod fewa;
pub mod game;
pub mod glm;
pub mod io;
pub mod linalg;
pub mod num;
pub mod report;
pub mod sensitivity;
pub mod simulator;
pub mod stats;

pub use features::{FeatureSchema, FeatureVector};
pub use game::{Action, DecisionRecord, GameStructure, InteractionHistory};

pub type PayoffTable = game::PayoffTable<f64>;
pub type FittedGlm = glm::FittedGlm<f64>;
pub type Dataset = glm::Dataset<f64>;
