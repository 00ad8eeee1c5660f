//! Self-tuning experience-weighted attraction learning.
//!
//! Each player keeps one attraction per action. After every period the
//! attractions are decayed by the change detector `φ` and reinforced by the
//! realized payoff of the chosen action and, under attention, by the foregone
//! payoff of the other action:
//!
//! ```text
//! A_j(t) = (φ(t) N(t-1) A_j(t-1) + [δ_j(t) + (1 - δ_j(t)) I(j, s(t))] π(j, s₋(t)))
//!          / (N(t-1) φ(t) + 1)
//! N(t)   = φ(t) N(t-1) + 1
//! ```
//!
//! `φ(t) = 1 - S(t)/2` where the surprise `S(t) = Σ_k (h_k(t) - r_k(t))²`
//! compares the opponent's cumulative action frequencies `h` (including
//! period `t`) with the indicator `r` of their latest action. Attention
//! `δ_j(t)` is 1 when action `j` would have paid at least the realized payoff.
//! Choice probabilities are a logit response with sensitivity `λ`.

use serde::{Deserialize, Serialize};

use crate::game::{Action, PayoffTable};
use crate::num::{sigmoid, Real};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum InitialAttraction {
    Zero,
    /// `A_C(0) = (R + S)/2`, `A_D(0) = (T + P)/2`: payoffs against an
    /// opponent expected to cooperate half the time.
    #[default]
    UniformOpponentExpectation,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FewaParams<T> {
    pub lambda: T,
    pub initial_attraction: InitialAttraction,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FewaState<T> {
    /// Indexed by [`Action::index`]: Cooperate, then Defect.
    pub attractions: [T; 2],
    pub experience: T,
    pub opponent_counts: [u64; 2],
    pub last_opponent_action: Option<Action>,
    pub period: u32,
}

impl<T: Real> FewaState<T> {
    pub fn initial(payoffs: &PayoffTable<T>, mode: InitialAttraction) -> Self {
        let two = T::lit(2.0);
        let attractions = match mode {
            InitialAttraction::Zero => [T::zero(), T::zero()],
            InitialAttraction::UniformOpponentExpectation => {
                [(payoffs.reward + payoffs.sucker) / two, (payoffs.temptation + payoffs.punishment) / two]
            }
        };
        FewaState { attractions, experience: T::one(), opponent_counts: [0, 0], last_opponent_action: None, period: 0 }
    }

    /// Opponent's empirical action frequencies so far; zeros before any play.
    pub fn opponent_frequencies(&self) -> [T; 2] {
        let total = self.opponent_counts[0] + self.opponent_counts[1];
        if total == 0 {
            return [T::zero(), T::zero()];
        }
        let n = T::from_u64(total).expect("count fits");
        [
            T::from_u64(self.opponent_counts[0]).expect("count fits") / n,
            T::from_u64(self.opponent_counts[1]).expect("count fits") / n,
        ]
    }

    /// Change-detector weight for an update in which the opponent played
    /// `other`, given the counts before that update.
    pub fn decay_for(&self, other: Action) -> T {
        let mut counts = self.opponent_counts;
        counts[other.index()] += 1;
        let n = T::from_u64(counts[0] + counts[1]).expect("count fits");
        let surprise = Action::BOTH
            .iter()
            .map(|&k| {
                let h = T::from_u64(counts[k.index()]).expect("count fits") / n;
                let r = if k == other { T::one() } else { T::zero() };
                (h - r) * (h - r)
            })
            .sum::<T>();
        T::one() - surprise / T::lit(2.0)
    }

    /// State after a period in which this player chose `mine` and the
    /// opponent chose `other`.
    pub fn update(&self, mine: Action, other: Action, payoffs: &PayoffTable<T>) -> Self {
        let phi = self.decay_for(other);
        let realized = payoffs.payoff(mine, other);
        let prior = phi * self.experience;
        let denom = prior + T::one();
        let mut attractions = self.attractions;
        for j in Action::BOTH {
            let foregone = payoffs.payoff(j, other);
            let attended = foregone >= realized;
            let weight = if attended || j == mine { T::one() } else { T::zero() };
            attractions[j.index()] = (prior * self.attractions[j.index()] + weight * foregone) / denom;
        }
        let mut opponent_counts = self.opponent_counts;
        opponent_counts[other.index()] += 1;
        FewaState {
            attractions,
            experience: prior + T::one(),
            opponent_counts,
            last_opponent_action: Some(other),
            period: self.period + 1,
        }
    }

    /// Logit response `(p_C, p_D)` with sensitivity `lambda`.
    pub fn choice_probabilities(&self, lambda: T) -> (T, T) {
        fewa_prob(&self.attractions, lambda)
    }
}

/// Two-action softmax; equals `σ(λ (A_C - A_D))` for cooperation.
pub fn fewa_prob<T: Real>(attractions: &[T; 2], lambda: T) -> (T, T) {
    let gap = lambda * (attractions[0] - attractions[1]);
    let pc = sigmoid(gap);
    (pc, sigmoid(-gap))
}

#[cfg(test)]
mod tests {
    use super::*;
    use Action::{Cooperate as C, Defect as D};

    fn unit() -> PayoffTable<f64> {
        PayoffTable::from_ratios(0.4, 0.6).unwrap()
    }

    #[test]
    fn unit_gauge_of_point_four_point_six() {
        let p = unit();
        assert_eq!((p.reward, p.sucker, p.temptation), (0.6, 0.0, 1.0));
        assert!((p.punishment - 0.2).abs() < 1e-15);
    }

    #[test]
    fn first_update_worked_example() {
        let s0 = FewaState::initial(&unit(), InitialAttraction::Zero);
        assert_eq!(s0.decay_for(D), 1.0);
        let s1 = s0.update(C, D, &unit());
        assert_eq!(s1.attractions[0], 0.0);
        assert!((s1.attractions[1] - 0.1).abs() < 1e-15);
        assert_eq!(s1.experience, 2.0);
        assert_eq!(s1.opponent_frequencies(), [0.0, 1.0]);
        assert_eq!(s1.last_opponent_action, Some(D));
    }

    #[test]
    fn repeated_opponent_action_has_no_surprise() {
        let s1 = FewaState::initial(&unit(), InitialAttraction::Zero).update(D, C, &unit());
        assert_eq!(s1.decay_for(C), 1.0);
        assert!(s1.decay_for(D) < 1.0);
    }

    #[test]
    fn chosen_action_always_reinforced() {
        // Cooperating against cooperation: the foregone temptation exceeds R,
        // and the chosen action enters with full weight regardless.
        let s = FewaState::initial(&unit(), InitialAttraction::Zero).update(C, C, &unit());
        assert!((s.attractions[0] - 0.3).abs() < 1e-15);
        assert!((s.attractions[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn softmax_identities() {
        assert_eq!(fewa_prob(&[0.3, 0.3], 5.0), (0.5, 0.5));
        assert_eq!(fewa_prob(&[0.9, 0.1], 0.0), (0.5, 0.5));
        let (pc, pd) = fewa_prob(&[1.0f64, 0.0], 1.0);
        assert!((pc - 0.7310585786300049).abs() < 1e-12);
        assert!((pc + pd - 1.0).abs() < 1e-15);
    }

    #[test]
    fn uniform_expectation_initial_attractions() {
        let s = FewaState::initial(&unit(), InitialAttraction::UniformOpponentExpectation);
        assert!((s.attractions[0] - 0.3).abs() < 1e-15);
        assert!((s.attractions[1] - 0.6).abs() < 1e-15);
        assert_eq!(s.experience, 1.0);
    }
}
