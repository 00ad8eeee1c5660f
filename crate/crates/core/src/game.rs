//! Games, payoffs, and recorded decisions.
//!
//! A [`GameStructure`] is the institutional description of one experimental
//! design: the two normalized payoff indices `r1 = (R-P)/(T-S)` and
//! `r2 = (R-S)/(T-S)`, the continuation probability `delta`, the execution
//! error rate, and three indicator flags. Raw payoffs are only needed by the
//! learning baseline and are recovered in the unit gauge `S = 0, T = 1`.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::num::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Action {
    Cooperate,
    Defect,
}

impl Action {
    pub const BOTH: [Action; 2] = [Action::Cooperate, Action::Defect];

    /// Regression encoding: Cooperate = 1, Defect = 0.
    pub fn indicator(self) -> f64 {
        match self {
            Action::Cooperate => 1.0,
            Action::Defect => 0.0,
        }
    }

    pub fn is_cooperate(self) -> bool {
        self == Action::Cooperate
    }

    /// Position in two-element per-action arrays (C first).
    pub fn index(self) -> usize {
        match self {
            Action::Cooperate => 0,
            Action::Defect => 1,
        }
    }

    pub fn flipped(self) -> Action {
        match self {
            Action::Cooperate => Action::Defect,
            Action::Defect => Action::Cooperate,
        }
    }

    pub fn from_cooperated(cooperated: bool) -> Action {
        if cooperated {
            Action::Cooperate
        } else {
            Action::Defect
        }
    }

    pub fn code(self) -> &'static str {
        match self {
            Action::Cooperate => "C",
            Action::Defect => "D",
        }
    }

    pub fn parse(code: &str) -> Option<Action> {
        match code.trim() {
            "C" => Some(Action::Cooperate),
            "D" => Some(Action::Defect),
            _ => None,
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PayoffError {
    #[error("payoff ordering T > R > P > S violated: {0}")]
    OrderingViolation(&'static str),
    #[error("R must exceed (S + T) / 2, got R = {reward} and (S + T) / 2 = {midpoint}")]
    MixedInequalityViolation { reward: f64, midpoint: f64 },
    #[error("payoff {0} is not finite")]
    NonFinite(&'static str),
    #[error("T equals S; normalization undefined")]
    DegenerateScale,
    #[error("infeasible payoff ratios r1 = {r1}, r2 = {r2}: {reason}")]
    InfeasibleRatios { r1: f64, r2: f64, reason: &'static str },
    #[error("expected interaction length must exceed 1, got {0}")]
    InvalidLength(f64),
}

/// Symmetric 2x2 stage-game payoffs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PayoffTable<T> {
    pub reward: T,
    pub sucker: T,
    pub temptation: T,
    pub punishment: T,
}

impl<T: Real> PayoffTable<T> {
    pub fn new(reward: T, sucker: T, temptation: T, punishment: T) -> Self {
        PayoffTable { reward, sucker, temptation, punishment }
    }

    /// Checks `T > R > P > S` and `R > (S + T) / 2`.
    pub fn validate(self) -> Result<Self, PayoffError> {
        for (name, v) in [("R", self.reward), ("S", self.sucker), ("T", self.temptation), ("P", self.punishment)] {
            if !v.is_finite() {
                return Err(PayoffError::NonFinite(name));
            }
        }
        if !(self.temptation > self.reward) {
            return Err(PayoffError::OrderingViolation("T > R"));
        }
        if !(self.reward > self.punishment) {
            return Err(PayoffError::OrderingViolation("R > P"));
        }
        if !(self.punishment > self.sucker) {
            return Err(PayoffError::OrderingViolation("P > S"));
        }
        let midpoint = (self.sucker + self.temptation) / T::lit(2.0);
        if !(self.reward > midpoint) {
            return Err(PayoffError::MixedInequalityViolation {
                reward: self.reward.as_f64(),
                midpoint: midpoint.as_f64(),
            });
        }
        Ok(self)
    }

    /// Returns `(r1, r2) = ((R-P)/(T-S), (R-S)/(T-S))`.
    pub fn normalize(&self) -> Result<(T, T), PayoffError> {
        let scale = self.temptation - self.sucker;
        if scale == T::zero() {
            return Err(PayoffError::DegenerateScale);
        }
        Ok(((self.reward - self.punishment) / scale, (self.reward - self.sucker) / scale))
    }

    /// Unit-gauge payoffs `S = 0, T = 1, R = r2, P = r2 - r1`, validated as a PD.
    pub fn from_ratios(r1: T, r2: T) -> Result<Self, PayoffError> {
        let infeasible = |reason| PayoffError::InfeasibleRatios { r1: r1.as_f64(), r2: r2.as_f64(), reason };
        if !(r1.is_finite() && r2.is_finite()) {
            return Err(infeasible("ratios must be finite"));
        }
        if !(r1 > T::zero()) {
            return Err(infeasible("r1 must be positive"));
        }
        if !(r1 < r2) {
            return Err(infeasible("r1 < r2 required"));
        }
        if !(r2 < T::one()) {
            return Err(infeasible("r2 < 1 required"));
        }
        if !(r2 > T::lit(0.5)) {
            return Err(infeasible("r2 > 1/2 required"));
        }
        Self::from_ratios_unchecked(r1, r2)
            .validate()
            .map_err(|_| infeasible("reconstructed table is not a Prisoner's Dilemma"))
    }

    /// Unit-gauge payoffs without the Prisoner's Dilemma checks, for
    /// hypothetical designs outside the PD region.
    pub fn from_ratios_unchecked(r1: T, r2: T) -> Self {
        PayoffTable { reward: r2, sucker: T::zero(), temptation: T::one(), punishment: r2 - r1 }
    }

    /// Payoff to the player choosing `mine` against `theirs`.
    pub fn payoff(&self, mine: Action, theirs: Action) -> T {
        match (mine, theirs) {
            (Action::Cooperate, Action::Cooperate) => self.reward,
            (Action::Cooperate, Action::Defect) => self.sucker,
            (Action::Defect, Action::Cooperate) => self.temptation,
            (Action::Defect, Action::Defect) => self.punishment,
        }
    }

    pub fn scaled(&self, c: T) -> Self {
        PayoffTable {
            reward: self.reward * c,
            sucker: self.sucker * c,
            temptation: self.temptation * c,
            punishment: self.punishment * c,
        }
    }
}

/// `delta = 1 - 1/length`, the continuation probability implied by an expected length.
pub fn delta_from_expected_length(length: f64) -> Result<f64, PayoffError> {
    if !(length.is_finite() && length > 1.0) {
        return Err(PayoffError::InvalidLength(length));
    }
    Ok(1.0 - 1.0 / length)
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StructureError {
    #[error("structure {id}: {field} = {value} outside {domain}")]
    OutOfDomain { id: String, field: &'static str, value: f64, domain: &'static str },
    #[error("structure {id}: r1 < r2 invariant violated (r1 = {r1}, r2 = {r2})")]
    RatioOrder { id: String, r1: f64, r2: f64 },
    #[error("structure id must not be empty")]
    EmptyId,
}

/// One experimental design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameStructure {
    pub id: String,
    pub error: f64,
    pub delta: f64,
    pub infinite: bool,
    pub continuous: bool,
    pub risk: bool,
    pub r1: f64,
    pub r2: f64,
    pub dataset: String,
    pub observed_cooperation: Option<f64>,
}

impl GameStructure {
    pub fn validate(self) -> Result<Self, StructureError> {
        if self.id.trim().is_empty() {
            return Err(StructureError::EmptyId);
        }
        let out = |field, value, domain| StructureError::OutOfDomain { id: self.id.clone(), field, value, domain };
        if !(self.error >= 0.0 && self.error < 1.0) {
            return Err(out("error", self.error, "[0, 1)"));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(out("delta", self.delta, "(0, 1)"));
        }
        if !(self.r1 > 0.0 && self.r1 < 1.0) {
            return Err(out("r1", self.r1, "(0, 1)"));
        }
        if !(self.r2 > 0.0 && self.r2 < 1.0) {
            return Err(out("r2", self.r2, "(0, 1)"));
        }
        if let Some(c) = self.observed_cooperation {
            if !(0.0..=1.0).contains(&c) {
                return Err(out("cooperation", c, "[0, 1]"));
            }
        }
        if !(self.r1 < self.r2) {
            return Err(StructureError::RatioOrder { id: self.id.clone(), r1: self.r1, r2: self.r2 });
        }
        Ok(self)
    }

    /// Unit-gauge payoffs for this design. Not checked against the PD
    /// inequalities since sampled designs may leave that region.
    pub fn unit_payoffs(&self) -> PayoffTable<f64> {
        PayoffTable::from_ratios_unchecked(self.r1, self.r2)
    }

    /// Average design over `structures`; indicator flags take the majority value.
    pub fn mean_of(id: &str, structures: &[GameStructure]) -> Option<GameStructure> {
        if structures.is_empty() {
            return None;
        }
        let n = structures.len() as f64;
        let mean = |f: fn(&GameStructure) -> f64| structures.iter().map(f).sum::<f64>() / n;
        let majority =
            |f: fn(&GameStructure) -> bool| 2 * structures.iter().filter(|s| f(s)).count() > structures.len();
        Some(GameStructure {
            id: id.to_string(),
            error: mean(|s| s.error),
            delta: mean(|s| s.delta),
            infinite: majority(|s| s.infinite),
            continuous: majority(|s| s.continuous),
            risk: majority(|s| s.risk),
            r1: mean(|s| s.r1),
            r2: mean(|s| s.r2),
            dataset: "mean".to_string(),
            observed_cooperation: None,
        })
    }
}

/// The previous period's joint outcome as seen by the focal player.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct InteractionHistory {
    pub my_prev: Action,
    pub other_prev: Action,
}

impl InteractionHistory {
    pub fn new(my_prev: Action, other_prev: Action) -> Self {
        InteractionHistory { my_prev, other_prev }
    }
}

/// One player's action in one period of one interaction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub structure_id: String,
    pub interaction_id: u64,
    pub player_id: u64,
    pub period: u32,
    pub action: Action,
    pub partner_action: Action,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DecisionError {
    #[error("decision references unknown structure {0}")]
    UnknownStructure(String),
    #[error("structure {structure_id}, interaction {interaction_id}, player {player_id}: periods are not a contiguous 1..T sequence")]
    NonContiguousPeriods { structure_id: String, interaction_id: u64, player_id: u64 },
    #[error("structure {structure_id}, interaction {interaction_id}: expected 2 players, found {found}")]
    PlayerCount { structure_id: String, interaction_id: u64, found: usize },
    #[error(
        "structure {structure_id}, interaction {interaction_id}, period {period}: player actions are not mirrored"
    )]
    NotMirrored { structure_id: String, interaction_id: u64, period: u32 },
}

/// All decisions of one player in one interaction, ordered by period.
#[derive(Debug, Clone, PartialEq)]
pub struct PlayerTrajectory {
    pub structure_id: String,
    pub interaction_id: u64,
    pub player_id: u64,
    /// `(own action, partner action)` for periods `1..=len`.
    pub moves: Vec<(Action, Action)>,
}

impl PlayerTrajectory {
    /// History visible at `period` (1-based); `None` for the first period.
    pub fn history_at(&self, period: usize) -> Option<InteractionHistory> {
        if period < 2 {
            return None;
        }
        self.moves.get(period - 2).map(|&(mine, theirs)| InteractionHistory::new(mine, theirs))
    }
}

/// Groups decisions into per-player trajectories in a canonical order
/// (structure, interaction, player) and checks period contiguity.
pub fn group_trajectories(decisions: &[DecisionRecord]) -> Result<Vec<PlayerTrajectory>, DecisionError> {
    let mut groups: BTreeMap<(&str, u64, u64), Vec<&DecisionRecord>> = BTreeMap::new();
    for d in decisions {
        groups.entry((d.structure_id.as_str(), d.interaction_id, d.player_id)).or_default().push(d);
    }
    let mut out = Vec::with_capacity(groups.len());
    for ((sid, iid, pid), mut rows) in groups {
        rows.sort_by_key(|d| d.period);
        let contiguous = rows.iter().enumerate().all(|(i, d)| d.period as usize == i + 1);
        if !contiguous {
            return Err(DecisionError::NonContiguousPeriods {
                structure_id: sid.to_string(),
                interaction_id: iid,
                player_id: pid,
            });
        }
        out.push(PlayerTrajectory {
            structure_id: sid.to_string(),
            interaction_id: iid,
            player_id: pid,
            moves: rows.iter().map(|d| (d.action, d.partner_action)).collect(),
        });
    }
    Ok(out)
}

/// Full integrity check: known structures, contiguous periods, and two
/// mirrored players per interaction.
pub fn validate_decisions(structures: &[GameStructure], decisions: &[DecisionRecord]) -> Result<(), DecisionError> {
    let known: std::collections::BTreeSet<&str> = structures.iter().map(|s| s.id.as_str()).collect();
    if let Some(d) = decisions.iter().find(|d| !known.contains(d.structure_id.as_str())) {
        return Err(DecisionError::UnknownStructure(d.structure_id.clone()));
    }
    let trajectories = group_trajectories(decisions)?;
    let mut interactions: BTreeMap<(&str, u64), Vec<&PlayerTrajectory>> = BTreeMap::new();
    for t in &trajectories {
        interactions.entry((t.structure_id.as_str(), t.interaction_id)).or_default().push(t);
    }
    for ((sid, iid), players) in interactions {
        if players.len() != 2 {
            return Err(DecisionError::PlayerCount {
                structure_id: sid.to_string(),
                interaction_id: iid,
                found: players.len(),
            });
        }
        let (a, b) = (players[0], players[1]);
        let len = a.moves.len().max(b.moves.len());
        for p in 0..len {
            let mirrored = matches!(
                (a.moves.get(p), b.moves.get(p)),
                (Some(&(a_own, a_other)), Some(&(b_own, b_other))) if a_own == b_other && a_other == b_own
            );
            if !mirrored {
                return Err(DecisionError::NotMirrored {
                    structure_id: sid.to_string(),
                    interaction_id: iid,
                    period: p as u32 + 1,
                });
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn table(r: f64, s: f64, t: f64, p: f64) -> PayoffTable<f64> {
        PayoffTable::new(r, s, t, p)
    }

    #[test]
    fn classic_table_is_valid() {
        // 5 > 3 > 1 > 0 and 3 > 2.5
        assert!(table(3.0, 0.0, 5.0, 1.0).validate().is_ok());
    }

    #[test]
    fn ordering_and_mixed_violations() {
        assert_eq!(table(5.0, 0.0, 3.0, 1.0).validate(), Err(PayoffError::OrderingViolation("T > R")));
        assert!(matches!(table(2.4, 0.0, 5.0, 1.0).validate(), Err(PayoffError::MixedInequalityViolation { .. })));
        assert!(matches!(table(f64::NAN, 0.0, 5.0, 1.0).validate(), Err(PayoffError::NonFinite("R"))));
    }

    #[test]
    fn normalize_classic_table() {
        let (r1, r2) = table(3.0, 0.0, 5.0, 1.0).normalize().unwrap();
        assert!((r1 - 0.4).abs() < 1e-15);
        assert!((r2 - 0.6).abs() < 1e-15);
        assert_eq!(table(1.0, 2.0, 2.0, 0.0).normalize(), Err(PayoffError::DegenerateScale));
    }

    #[test]
    fn reconstruct_table2_row1() {
        let t = PayoffTable::<f64>::from_ratios(0.18, 0.59).unwrap();
        assert_eq!(t.reward, 0.59);
        assert_eq!(t.sucker, 0.0);
        assert_eq!(t.temptation, 1.0);
        assert!((t.punishment - 0.41).abs() < 1e-15);
    }

    #[test]
    fn reconstruct_rejects_infeasible_ratios() {
        assert!(matches!(PayoffTable::from_ratios(0.5, 0.5), Err(PayoffError::InfeasibleRatios { .. })));
        assert!(matches!(PayoffTable::from_ratios(0.2, 0.45), Err(PayoffError::InfeasibleRatios { .. })));
    }

    #[test]
    fn delta_from_length() {
        assert!((delta_from_expected_length(10.0).unwrap() - 0.9).abs() < 1e-15);
        assert_eq!(delta_from_expected_length(2.0).unwrap(), 0.5);
        assert_eq!(delta_from_expected_length(4.0).unwrap(), 0.75);
        assert!(delta_from_expected_length(1.0).is_err());
        assert!(delta_from_expected_length(0.5).is_err());
    }

    #[test]
    fn generic_over_f32() {
        let (r1, r2) = PayoffTable::<f32>::new(3.0, 0.0, 5.0, 1.0).normalize().unwrap();
        assert!((r1 - 0.4).abs() < 1e-6 && (r2 - 0.6).abs() < 1e-6);
    }

    fn valid_table() -> impl Strategy<Value = PayoffTable<f64>> {
        // Build S < P < R < T with R > (S+T)/2 by construction.
        (-10.0f64..10.0, 0.01f64..5.0, 0.01f64..1.0, 0.01f64..0.99, 0.01f64..0.99).prop_map(
            |(s, span, p_frac, r_frac, _)| {
                let t = s + span;
                let mid = (s + t) / 2.0;
                let r = mid + r_frac * (t - mid) * 0.98 + 1e-3 * span;
                let r = r.min(t - 1e-4 * span);
                let p = s + p_frac * (r - s) * 0.98 + 1e-4 * span;
                PayoffTable::new(r, s, t, p)
            },
        )
    }

    proptest! {
        #[test]
        fn normalize_reconstruct_roundtrip(t in valid_table()) {
            prop_assume!(t.validate().is_ok());
            let (r1, r2) = t.normalize().unwrap();
            prop_assert!(0.0 < r1 && r1 < r2 && r2 < 1.0);
            prop_assert!(r2 > 0.5);
            let unit = PayoffTable::from_ratios(r1, r2).unwrap();
            let (q1, q2) = unit.normalize().unwrap();
            prop_assert!((q1 - r1).abs() < 1e-12 && (q2 - r2).abs() < 1e-12);
        }

        #[test]
        fn delta_is_increasing(a in 1.0001f64..1e6, b in 1.0001f64..1e6) {
            prop_assume!(a < b);
            let da = delta_from_expected_length(a).unwrap();
            let db = delta_from_expected_length(b).unwrap();
            prop_assert!(0.0 < da && da <= db && db < 1.0);
        }
    }

    fn rec(iid: u64, pid: u64, period: u32, a: Action, b: Action) -> DecisionRecord {
        DecisionRecord {
            structure_id: "1".into(),
            interaction_id: iid,
            player_id: pid,
            period,
            action: a,
            partner_action: b,
        }
    }

    #[test]
    fn trajectories_require_contiguous_periods() {
        use Action::*;
        let gap = vec![rec(0, 0, 1, Cooperate, Defect), rec(0, 0, 3, Cooperate, Defect)];
        assert!(matches!(group_trajectories(&gap), Err(DecisionError::NonContiguousPeriods { .. })));
        let ok = vec![rec(0, 0, 2, Defect, Defect), rec(0, 0, 1, Cooperate, Defect)];
        let t = group_trajectories(&ok).unwrap();
        assert_eq!(t[0].moves, vec![(Cooperate, Defect), (Defect, Defect)]);
        assert_eq!(t[0].history_at(1), None);
        assert_eq!(t[0].history_at(2), Some(InteractionHistory::new(Cooperate, Defect)));
    }

    #[test]
    fn mirrored_pairs_are_checked() {
        use Action::*;
        let s = GameStructure {
            id: "1".into(),
            error: 0.0,
            delta: 0.9,
            infinite: false,
            continuous: false,
            risk: false,
            r1: 0.18,
            r2: 0.59,
            dataset: "BR".into(),
            observed_cooperation: None,
        };
        let good = vec![rec(0, 0, 1, Cooperate, Defect), rec(0, 1, 1, Defect, Cooperate)];
        assert!(validate_decisions(std::slice::from_ref(&s), &good).is_ok());
        let bad = vec![rec(0, 0, 1, Cooperate, Defect), rec(0, 1, 1, Cooperate, Cooperate)];
        assert!(matches!(validate_decisions(std::slice::from_ref(&s), &bad), Err(DecisionError::NotMirrored { .. })));
        let mut unknown = good.clone();
        unknown[0].structure_id = "99".into();
        assert!(matches!(validate_decisions(&[s], &unknown), Err(DecisionError::UnknownStructure(_))));
    }

    #[test]
    fn structure_validation() {
        let mut s = GameStructure {
            id: "x".into(),
            error: 0.0,
            delta: 0.9,
            infinite: false,
            continuous: false,
            risk: false,
            r1: 0.6,
            r2: 0.5,
            dataset: "".into(),
            observed_cooperation: None,
        };
        assert!(matches!(s.clone().validate(), Err(StructureError::RatioOrder { .. })));
        s.r1 = 0.3;
        s.delta = 1.0;
        assert!(matches!(s.validate(), Err(StructureError::OutOfDomain { field: "delta", .. })));
    }
}
