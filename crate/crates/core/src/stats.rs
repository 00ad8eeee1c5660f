//! Correlation, error, and significance statistics.

use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

use crate::linalg::ols_residuals;
use crate::num::Real;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("series lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("need at least {needed} observations, got {got}")]
    TooFew { needed: usize, got: usize },
    #[error("correlation undefined: a series has zero variance")]
    UndefinedCorrelation,
    #[error("paired differences have zero variance")]
    ZeroVariance,
    #[error("column {0} is constant; ranks are degenerate")]
    DegenerateRanks(usize),
    #[error("rank regression for column {0} is rank deficient")]
    RankDeficientRegression(usize),
}

pub fn mean<T: Real>(xs: &[T]) -> Option<T> {
    (!xs.is_empty()).then(|| xs.iter().copied().sum::<T>() / T::from_count(xs.len()))
}

pub fn pearson<T: Real>(a: &[T], b: &[T]) -> Result<T, StatsError> {
    if a.len() != b.len() {
        return Err(StatsError::LengthMismatch(a.len(), b.len()));
    }
    if a.len() < 2 {
        return Err(StatsError::TooFew { needed: 2, got: a.len() });
    }
    let ma = mean(a).expect("non-empty");
    let mb = mean(b).expect("non-empty");
    let (mut sab, mut saa, mut sbb) = (T::zero(), T::zero(), T::zero());
    for (&x, &y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == T::zero() || sbb == T::zero() {
        return Err(StatsError::UndefinedCorrelation);
    }
    let r = sab / (saa.sqrt() * sbb.sqrt());
    Ok(r.max(-T::one()).min(T::one()))
}

pub fn rmse<T: Real>(predicted: &[T], observed: &[T]) -> Result<T, StatsError> {
    if predicted.len() != observed.len() {
        return Err(StatsError::LengthMismatch(predicted.len(), observed.len()));
    }
    if predicted.is_empty() {
        return Err(StatsError::TooFew { needed: 1, got: 0 });
    }
    let sse: T = predicted.iter().zip(observed).map(|(&p, &o)| (p - o) * (p - o)).sum();
    Ok((sse / T::from_count(predicted.len())).sqrt())
}

/// 1-based ranks with ties sharing their average rank.
pub fn midranks<T: Real>(xs: &[T]) -> Vec<T> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&i, &j| xs[i].partial_cmp(&xs[j]).unwrap_or(std::cmp::Ordering::Equal));
    let mut ranks = vec![T::zero(); xs.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && xs[order[end]] == xs[order[start]] {
            end += 1;
        }
        // positions start..end hold ranks start+1..=end
        let avg = T::from_count(start + 1 + end) / T::lit(2.0);
        for &i in &order[start..end] {
            ranks[i] = avg;
        }
        start = end;
    }
    ranks
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TTest {
    pub t: f64,
    pub df: usize,
    pub p_two_sided: f64,
}

/// Paired t-test on `a - b`.
pub fn paired_t_test<T: Real>(a: &[T], b: &[T]) -> Result<TTest, StatsError> {
    if a.len() != b.len() {
        return Err(StatsError::LengthMismatch(a.len(), b.len()));
    }
    let n = a.len();
    if n < 2 {
        return Err(StatsError::TooFew { needed: 2, got: n });
    }
    let d: Vec<T> = a.iter().zip(b).map(|(&x, &y)| x - y).collect();
    let m = mean(&d).expect("non-empty");
    let var = d.iter().map(|&x| (x - m) * (x - m)).sum::<T>() / T::from_count(n - 1);
    if var == T::zero() {
        return Err(StatsError::ZeroVariance);
    }
    let t = (m / (var.sqrt() / T::from_count(n).sqrt())).as_f64();
    let df = n - 1;
    let dist = StudentsT::new(0.0, 1.0, df as f64).expect("df >= 1");
    let p = (2.0 * (1.0 - dist.cdf(t.abs()))).clamp(0.0, 1.0);
    Ok(TTest { t, df, p_two_sided: p })
}

/// Partial rank correlation of each column of `columns` with `outcome`,
/// controlling for the ranks of all other columns.
pub fn prcc<T: Real>(columns: &[Vec<T>], outcome: &[T]) -> Result<Vec<T>, StatsError> {
    let n = outcome.len();
    let k = columns.len();
    if n < k + 2 {
        return Err(StatsError::TooFew { needed: k + 2, got: n });
    }
    for c in columns {
        if c.len() != n {
            return Err(StatsError::LengthMismatch(c.len(), n));
        }
    }
    let ranked: Vec<Vec<T>> = columns.iter().map(|c| midranks(c)).collect();
    for (j, r) in ranked.iter().enumerate() {
        if r.iter().all(|&v| v == r[0]) {
            return Err(StatsError::DegenerateRanks(j));
        }
    }
    let ry = midranks(outcome);
    if ry.iter().all(|&v| v == ry[0]) {
        return Err(StatsError::DegenerateRanks(k));
    }
    (0..k)
        .map(|j| {
            let others: Vec<&[T]> =
                ranked.iter().enumerate().filter(|&(i, _)| i != j).map(|(_, c)| c.as_slice()).collect();
            let rx = ols_residuals(&others, &ranked[j]).ok_or(StatsError::RankDeficientRegression(j))?;
            let res_y = ols_residuals(&others, &ry).ok_or(StatsError::RankDeficientRegression(j))?;
            pearson(&rx, &res_y).map_err(|_| StatsError::RankDeficientRegression(j))
        })
        .collect()
}

/// Linear-interpolated quantile (`q` in `[0, 1]`) of already sorted data.
pub fn quantile_sorted<T: Real>(sorted: &[T], q: f64) -> T {
    assert!(!sorted.is_empty());
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = T::lit(pos - lo as f64);
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}
