//! Global sensitivity of simulated cooperation to the design variables:
//! Latin hypercube sampling, partial rank correlation, percentile bootstrap
//! intervals, and first-period interventions.

use std::fmt;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::behavior::Policy;
use crate::game::GameStructure;
use crate::simulator::{derive_seed, interaction_rng, simulate_structure, SimulationConfig, SimulationError};
use crate::stats::{self, quantile_sorted, StatsError};

/// Redraw attempts for a row violating `r1 < r2` before its pair is swapped.
pub const MAX_REDRAWS: usize = 100;
/// Bound on degenerate bootstrap resamples, relative to the replicate count.
const MAX_DEGENERATE_FACTOR: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DesignVariable {
    Error,
    Delta,
    Infinity,
    Risk,
    R1,
    R2,
}

impl DesignVariable {
    /// Column order of every sample matrix.
    pub const ALL: [DesignVariable; 6] = [
        DesignVariable::Error,
        DesignVariable::Delta,
        DesignVariable::Infinity,
        DesignVariable::Risk,
        DesignVariable::R1,
        DesignVariable::R2,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DesignVariable::Error => "error",
            DesignVariable::Delta => "delta",
            DesignVariable::Infinity => "infinity",
            DesignVariable::Risk => "risk",
            DesignVariable::R1 => "r1",
            DesignVariable::R2 => "r2",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for DesignVariable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Error)]
pub enum SensitivityError {
    #[error("sample size {0} is too small (need at least 2)")]
    BadN(usize),
    #[error("bootstrap needs at least 100 replicates, got {0}")]
    BadReplicates(usize),
    #[error("invalid parameter space: {0}")]
    BadSpace(String),
    #[error("first-period probability {0} outside [0, 1]")]
    BadProbability(f64),
    #[error("horizon {0} leaves no period after the first")]
    HorizonTooShort(u32),
    #[error("too many degenerate bootstrap resamples ({0})")]
    TooManyDegenerate(usize),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Simulation(#[from] SimulationError),
}

/// Marginals of the design variables. `Uniform(lo, hi)` for continuous
/// variables, `Bernoulli(p)` for indicators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSpace {
    pub error: (f64, f64),
    pub delta: (f64, f64),
    pub infinity_p: f64,
    pub risk_p: f64,
    pub r1: (f64, f64),
    pub r2: (f64, f64),
    /// Held fixed for every sampled structure.
    pub continuous: bool,
}

impl Default for ParameterSpace {
    fn default() -> Self {
        ParameterSpace {
            error: (0.0, 0.5),
            delta: (0.45, 0.95),
            infinity_p: 0.5,
            risk_p: 0.5,
            r1: (0.0, 1.0),
            r2: (0.0, 1.0),
            continuous: false,
        }
    }
}

impl ParameterSpace {
    pub fn validate(&self) -> Result<(), SensitivityError> {
        let ranges = [("error", self.error), ("delta", self.delta), ("r1", self.r1), ("r2", self.r2)];
        for (name, (lo, hi)) in ranges {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(SensitivityError::BadSpace(format!("{name} range ({lo}, {hi}) is empty")));
            }
        }
        for (name, p) in [("infinity", self.infinity_p), ("risk", self.risk_p)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(SensitivityError::BadSpace(format!("{name} probability {p} outside [0, 1]")));
            }
        }
        if self.r1.0 >= self.r2.1 {
            return Err(SensitivityError::BadSpace("r1 < r2 is unsatisfiable".into()));
        }
        Ok(())
    }

    fn uniform_range(&self, v: DesignVariable) -> Option<(f64, f64)> {
        match v {
            DesignVariable::Error => Some(self.error),
            DesignVariable::Delta => Some(self.delta),
            DesignVariable::R1 => Some(self.r1),
            DesignVariable::R2 => Some(self.r2),
            DesignVariable::Infinity | DesignVariable::Risk => None,
        }
    }
}

/// Latin hypercube design, one row per sample in [`DesignVariable::ALL`] order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignSample {
    pub rows: Vec<[f64; 6]>,
    /// Stratum index of each row for each uniform column (`None` for indicators).
    pub strata: Vec<[Option<usize>; 6]>,
    pub redraws: usize,
    pub swaps: usize,
}

impl DesignSample {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn column(&self, v: DesignVariable) -> Vec<f64> {
        self.rows.iter().map(|r| r[v.index()]).collect()
    }

    pub fn columns(&self) -> Vec<Vec<f64>> {
        DesignVariable::ALL.iter().map(|&v| self.column(v)).collect()
    }

    /// The `i`-th design point as a game structure.
    pub fn structure(&self, i: usize, continuous: bool) -> GameStructure {
        let r = &self.rows[i];
        GameStructure {
            id: format!("lhs-{}", i + 1),
            error: r[DesignVariable::Error.index()],
            delta: r[DesignVariable::Delta.index()],
            infinite: r[DesignVariable::Infinity.index()] == 1.0,
            continuous,
            risk: r[DesignVariable::Risk.index()] == 1.0,
            r1: r[DesignVariable::R1.index()],
            r2: r[DesignVariable::R2.index()],
            dataset: "LHS".into(),
            observed_cooperation: None,
        }
    }
}

fn stratum_draw(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64), stratum: usize, n: usize) -> f64 {
    let u: f64 = rng.random();
    lo + (hi - lo) * (stratum as f64 + u) / n as f64
}

/// Stratified sample without the `r1 < r2` constraint: every uniform column
/// has exactly one value in each of its `n` equal-probability strata.
pub fn lhs_unconstrained(space: &ParameterSpace, n: usize, seed: u64) -> Result<DesignSample, SensitivityError> {
    if n < 2 {
        return Err(SensitivityError::BadN(n));
    }
    space.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = vec![[0.0; 6]; n];
    let mut strata = vec![[None; 6]; n];
    for v in DesignVariable::ALL {
        let j = v.index();
        match space.uniform_range(v) {
            Some(range) => {
                let mut perm: Vec<usize> = (0..n).collect();
                perm.shuffle(&mut rng);
                for (i, &s) in perm.iter().enumerate() {
                    rows[i][j] = stratum_draw(&mut rng, range, s, n);
                    strata[i][j] = Some(s);
                }
            }
            None => {
                let p = if v == DesignVariable::Infinity { space.infinity_p } else { space.risk_p };
                for row in rows.iter_mut() {
                    row[j] = if rng.random_bool(p) { 1.0 } else { 0.0 };
                }
            }
        }
    }
    Ok(DesignSample { rows, strata, redraws: 0, swaps: 0 })
}

/// Latin hypercube sample satisfying `r1 < r2` on every row. Violating rows
/// redraw their pair inside the assigned strata; after [`MAX_REDRAWS`]
/// failures the pair is swapped.
pub fn lhs_sample(space: &ParameterSpace, n: usize, seed: u64) -> Result<DesignSample, SensitivityError> {
    let mut sample = lhs_unconstrained(space, n, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 1));
    let (j1, j2) = (DesignVariable::R1.index(), DesignVariable::R2.index());
    for i in 0..n {
        let mut attempts = 0;
        while sample.rows[i][j1] >= sample.rows[i][j2] && attempts < MAX_REDRAWS {
            let (s1, s2) = (sample.strata[i][j1].unwrap(), sample.strata[i][j2].unwrap());
            sample.rows[i][j1] = stratum_draw(&mut rng, space.r1, s1, n);
            sample.rows[i][j2] = stratum_draw(&mut rng, space.r2, s2, n);
            attempts += 1;
            sample.redraws += 1;
        }
        if sample.rows[i][j1] >= sample.rows[i][j2] {
            sample.rows[i].swap(j1, j2);
            let s = &mut sample.strata[i];
            s.swap(j1, j2);
            sample.swaps += 1;
        }
    }
    Ok(sample)
}

/// Sampled design and the simulated mean cooperation of each row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityRun {
    pub sample: DesignSample,
    pub outcomes: Vec<f64>,
    pub sims_per_sample: usize,
    pub seed: u64,
}

/// Simulates every LHS design point with `sims_per_sample` interactions.
pub fn run_global_sensitivity<P: Policy + ?Sized>(
    model: &P,
    space: &ParameterSpace,
    n_samples: usize,
    sims_per_sample: usize,
    seed: u64,
) -> Result<SensitivityRun, SensitivityError> {
    let sample = lhs_sample(space, n_samples, derive_seed(seed, 0))?;
    let outcomes = (0..sample.len())
        .into_par_iter()
        .map(|i| {
            let game = sample.structure(i, space.continuous);
            let cfg = SimulationConfig::new(sims_per_sample, derive_seed(seed, i as u64 + 1));
            Ok(simulate_structure(model, &game, &cfg)?.mean_cooperation)
        })
        .collect::<Result<Vec<f64>, SensitivityError>>()?;
    Ok(SensitivityRun { sample, outcomes, sims_per_sample, seed })
}

/// Partial rank correlation of each design column with the outcome.
pub fn prcc(columns: &[Vec<f64>], outcomes: &[f64]) -> Result<Vec<f64>, SensitivityError> {
    Ok(stats::prcc(columns, outcomes)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapIntervals {
    /// 2.5th and 97.5th percentiles per column.
    pub intervals: Vec<(f64, f64)>,
    pub replicates: usize,
    /// Resamples discarded because their PRCC was undefined.
    pub degenerate_redraws: usize,
}

/// Percentile bootstrap over rows for every column's PRCC.
pub fn bootstrap_ci(
    columns: &[Vec<f64>],
    outcomes: &[f64],
    replicates: usize,
    seed: u64,
) -> Result<BootstrapIntervals, SensitivityError> {
    if replicates < 100 {
        return Err(SensitivityError::BadReplicates(replicates));
    }
    stats::prcc(columns, outcomes)?;
    let n = outcomes.len();
    let max_tries = MAX_DEGENERATE_FACTOR * replicates;
    let draws: Vec<(Vec<f64>, usize)> = (0..replicates as u64)
        .into_par_iter()
        .map(|b| {
            let mut rng = interaction_rng(seed, b);
            for tries in 0..max_tries {
                let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
                let cols: Vec<Vec<f64>> = columns.iter().map(|c| idx.iter().map(|&i| c[i]).collect()).collect();
                let y: Vec<f64> = idx.iter().map(|&i| outcomes[i]).collect();
                match stats::prcc(&cols, &y) {
                    Ok(r) => return Ok((r, tries)),
                    Err(StatsError::DegenerateRanks(_) | StatsError::RankDeficientRegression(_)) => continue,
                    Err(e) => return Err(SensitivityError::Stats(e)),
                }
            }
            Err(SensitivityError::TooManyDegenerate(max_tries))
        })
        .collect::<Result<_, _>>()?;
    let degenerate_redraws = draws.iter().map(|d| d.1).sum();
    if degenerate_redraws > 0 {
        log::info!("bootstrap redrew {degenerate_redraws} degenerate resamples");
    }
    let intervals = (0..columns.len())
        .map(|j| {
            let mut v: Vec<f64> = draws.iter().map(|d| d.0[j]).collect();
            v.sort_by(f64::total_cmp);
            (quantile_sorted(&v, 0.025), quantile_sorted(&v, 0.975))
        })
        .collect();
    Ok(BootstrapIntervals { intervals, replicates, degenerate_redraws })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariableSensitivity {
    pub variable: DesignVariable,
    pub estimate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityReport {
    pub variables: Vec<VariableSensitivity>,
    pub replicates: usize,
    pub degenerate_redraws: usize,
    pub n_samples: usize,
    pub sims_per_sample: usize,
    pub seed: u64,
}

impl SensitivityReport {
    pub fn get(&self, v: DesignVariable) -> &VariableSensitivity {
        &self.variables[v.index()]
    }
}

/// PRCC point estimates with bootstrap intervals. Each interval is widened
/// to contain its point estimate if the percentile interval misses it.
pub fn summarize(run: &SensitivityRun, replicates: usize) -> Result<SensitivityReport, SensitivityError> {
    let columns = run.sample.columns();
    let estimates = prcc(&columns, &run.outcomes)?;
    let boot = bootstrap_ci(&columns, &run.outcomes, replicates, derive_seed(run.seed, u64::MAX))?;
    let variables = DesignVariable::ALL
        .iter()
        .zip(estimates.iter().zip(&boot.intervals))
        .map(|(&variable, (&estimate, &(lo, hi)))| VariableSensitivity {
            variable,
            estimate,
            ci_low: lo.min(estimate),
            ci_high: hi.max(estimate),
        })
        .collect();
    Ok(SensitivityReport {
        variables,
        replicates,
        degenerate_redraws: boot.degenerate_redraws,
        n_samples: run.sample.len(),
        sims_per_sample: run.sims_per_sample,
        seed: run.seed,
    })
}

/// Mean cooperation over periods `2..=horizon` when first-period play is
/// fixed at `p1` for every agent.
pub fn first_period_intervention<P: Policy + ?Sized>(
    model: &P,
    game: &GameStructure,
    p1: f64,
    sim_config: &SimulationConfig,
) -> Result<f64, SensitivityError> {
    if !(0.0..=1.0).contains(&p1) {
        return Err(SensitivityError::BadProbability(p1));
    }
    let cfg = SimulationConfig { first_period_prob_override: Some(p1), ..sim_config.clone() };
    let result = simulate_structure(model, game, &cfg)?;
    result.mean_after_first_period().ok_or(SensitivityError::HorizonTooShort(result.horizon))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::behavior::ConstantPolicy;

    #[test]
    fn four_strata_of_delta() {
        let s = lhs_sample(&ParameterSpace::default(), 4, 3).unwrap();
        let mut bins: Vec<usize> =
            s.column(DesignVariable::Delta).iter().map(|&d| (((d - 0.45) / 0.125).floor() as usize).min(3)).collect();
        bins.sort();
        assert_eq!(bins, vec![0, 1, 2, 3]);
    }

    #[test]
    fn constraint_and_determinism() {
        let space = ParameterSpace::default();
        let a = lhs_sample(&space, 500, 11).unwrap();
        assert!(a.rows.iter().all(|r| r[4] < r[5]));
        assert!(a.rows.iter().all(|r| (r[2] == 0.0 || r[2] == 1.0) && (r[3] == 0.0 || r[3] == 1.0)));
        assert_eq!(a, lhs_sample(&space, 500, 11).unwrap());
        assert!(matches!(lhs_sample(&space, 0, 1), Err(SensitivityError::BadN(0))));
        assert!(matches!(lhs_sample(&space, 1, 1), Err(SensitivityError::BadN(1))));
    }

    #[test]
    fn intervention_rejects_bad_probability() {
        let s = lhs_sample(&ParameterSpace::default(), 2, 0).unwrap().structure(0, false);
        let cfg = SimulationConfig::new(10, 1);
        assert!(matches!(
            first_period_intervention(&ConstantPolicy(0.5), &s, 1.5, &cfg),
            Err(SensitivityError::BadProbability(_))
        ));
    }

    #[test]
    fn bootstrap_needs_replicates() {
        let cols = vec![vec![1.0, 2.0, 3.0, 4.0]];
        assert!(matches!(bootstrap_ci(&cols, &[1.0, 2.0, 3.0, 4.0], 99, 0), Err(SensitivityError::BadReplicates(99))));
    }
}
