//! Binary logistic regression by maximum likelihood.
//!
//! Fitting is Newton-Raphson (equivalently IRLS) from the origin with
//! step-halving whenever a full step would lower the log-likelihood.
//! Convergence is declared when the relative deviance change
//! `|D_k - D_{k-1}| / (|D_k| + 0.1)` drops below the tolerance.

use thiserror::Error;

use crate::features::{FeatureSchema, FeatureVector};
use crate::linalg::{Cholesky, SquareMatrix};
use crate::num::{dot, ln_sigmoid, sigmoid, CompensatedSum, Real};

/// Any coefficient beyond this magnitude during iteration is treated as
/// quasi-separation: the fitted probabilities have saturated to 0 or 1.
pub const SEPARATION_BOUND: f64 = 30.0;

const MAX_HALVINGS: usize = 40;

/// Squared-norm ratio below which a column counts as aliased.
const ALIAS_TOLERANCE: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GlmError {
    #[error("no rows to fit")]
    EmptyData,
    #[error("outcomes contain a single class; the MLE does not exist")]
    SingleClass,
    #[error("coefficient {coefficient} diverged past |w| = {SEPARATION_BOUND} at iteration {iteration} (separation)")]
    Separation { iteration: usize, coefficient: usize },
    #[error("design matrix is rank deficient")]
    RankDeficient,
    #[error("no convergence after {0} iterations")]
    NotConverged(usize),
    #[error("observed information matrix is singular")]
    SingularInformation,
    #[error("feature vector has {found} entries, model expects {expected}")]
    SchemaMismatch { expected: usize, found: usize },
}

/// Design matrix with binary outcomes, stored row-major.
#[derive(Debug, Clone)]
pub struct Dataset<T> {
    names: Vec<String>,
    x: Vec<T>,
    y: Vec<bool>,
}

impl<T: Real> Dataset<T> {
    /// Empty design with the given column names; the first column is
    /// expected to be the intercept.
    pub fn new<S: AsRef<str>>(names: &[S]) -> Self {
        Dataset { names: names.iter().map(|s| s.as_ref().to_string()).collect(), x: Vec::new(), y: Vec::new() }
    }

    pub fn for_schema(schema: FeatureSchema) -> Self {
        Self::new(schema.names())
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn width(&self) -> usize {
        self.names.len()
    }

    pub fn push(&mut self, row: &[T], outcome: bool) -> Result<(), GlmError> {
        if row.len() != self.width() {
            return Err(GlmError::SchemaMismatch { expected: self.width(), found: row.len() });
        }
        self.x.extend_from_slice(row);
        self.y.push(outcome);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn positives(&self) -> usize {
        self.y.iter().filter(|&&y| y).count()
    }

    pub fn row(&self, i: usize) -> &[T] {
        let w = self.width();
        &self.x[i * w..(i + 1) * w]
    }

    pub fn outcome(&self, i: usize) -> bool {
        self.y[i]
    }

    pub fn rows(&self) -> impl Iterator<Item = (&[T], bool)> + '_ {
        self.x.chunks_exact(self.width()).zip(self.y.iter().copied())
    }

    /// The design restricted to columns `keep`, in that order.
    pub fn select(&self, keep: &[usize]) -> Self {
        let names: Vec<&str> = keep.iter().map(|&j| self.names[j].as_str()).collect();
        let mut out = Dataset::new(&names);
        for (row, y) in self.rows() {
            out.x.extend(keep.iter().map(|&j| row[j]));
            out.y.push(y);
        }
        out
    }

    /// Columns that are, to a relative tolerance, linear combinations of
    /// earlier columns (e.g. a constant-zero indicator). Earlier columns are
    /// always kept, so the intercept is never aliased.
    pub fn aliased_columns(&self) -> Vec<usize> {
        let p = self.width();
        let mut gram = SquareMatrix::zeros(p);
        for (row, _) in self.rows() {
            gram.rank_one_upper(T::one(), row);
        }
        gram.mirror_upper();
        let tol = T::lit(ALIAS_TOLERANCE);
        let mut kept: Vec<usize> = Vec::new();
        // Rows of the Cholesky factor of the kept block, indexed like `kept`.
        let mut factor: Vec<Vec<T>> = Vec::new();
        let mut aliased = Vec::new();
        for j in 0..p {
            let mut v = Vec::with_capacity(kept.len());
            for (a, &i) in kept.iter().enumerate() {
                let s = gram.get(i, j) - dot(&factor[a][..a], &v[..a]);
                v.push(s / factor[a][a]);
            }
            let d = gram.get(j, j) - dot(&v, &v);
            if gram.get(j, j) == T::zero() || !(d > tol * gram.get(j, j)) {
                aliased.push(j);
            } else {
                v.push(d.sqrt());
                factor.push(v);
                kept.push(j);
            }
        }
        aliased
    }

    /// The same rows repeated `times` times.
    pub fn replicated(&self, times: usize) -> Self {
        let mut out = Dataset::new(&self.names);
        for _ in 0..times {
            out.x.extend_from_slice(&self.x);
            out.y.extend_from_slice(&self.y);
        }
        out
    }
}

impl Dataset<f64> {
    pub fn push_features(&mut self, x: &FeatureVector, outcome: bool) -> Result<(), GlmError> {
        if !same_names(x.names(), &self.names) {
            return Err(GlmError::SchemaMismatch { expected: self.width(), found: x.values.len() });
        }
        self.push(&x.values, outcome)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct FitOptions<T> {
    pub tolerance: T,
    pub max_iterations: usize,
}

impl<T: Real> Default for FitOptions<T> {
    fn default() -> Self {
        FitOptions { tolerance: T::lit(1e-8), max_iterations: 100 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FittedGlm<T> {
    pub names: Vec<String>,
    pub weights: Vec<T>,
    pub standard_errors: Vec<T>,
    pub log_likelihood: T,
    pub converged: bool,
    pub iterations: usize,
    pub n_rows: usize,
    /// Log-likelihood after each accepted iterate, starting at the origin.
    pub trace: Vec<T>,
}

/// `Σ y ln p + (1 - y) ln(1 - p)` at weights `w`.
pub fn log_likelihood<T: Real>(data: &Dataset<T>, w: &[T]) -> T {
    // Compensated so that the final Newton steps remain resolvable.
    let mut total = CompensatedSum::default();
    for (x, y) in data.rows() {
        let eta = dot(w, x);
        total.add(if y { ln_sigmoid(eta) } else { ln_sigmoid(-eta) });
    }
    total.value()
}

/// Score vector `Σ (y - p) x`.
pub fn score<T: Real>(data: &Dataset<T>, w: &[T]) -> Vec<T> {
    let mut g = vec![CompensatedSum::default(); data.width()];
    for (x, y) in data.rows() {
        let r = (if y { T::one() } else { T::zero() }) - sigmoid(dot(w, x));
        for (gj, &xj) in g.iter_mut().zip(x) {
            gj.add(r * xj);
        }
    }
    g.iter().map(CompensatedSum::value).collect()
}

/// Observed information `Σ p(1 - p) x xᵀ`.
pub fn information<T: Real>(data: &Dataset<T>, w: &[T]) -> SquareMatrix<T> {
    let mut h = SquareMatrix::zeros(data.width());
    for (x, _) in data.rows() {
        let p = sigmoid(dot(w, x));
        h.rank_one_upper(p * (T::one() - p), x);
    }
    h.mirror_upper();
    h
}

fn relative_change<T: Real>(old: T, new: T) -> T {
    let dev_old = T::lit(-2.0) * old;
    let dev_new = T::lit(-2.0) * new;
    (dev_new - dev_old).abs() / (dev_new.abs() + T::lit(0.1))
}

pub fn fit_logistic<T: Real>(data: &Dataset<T>, options: FitOptions<T>) -> Result<FittedGlm<T>, GlmError> {
    if data.is_empty() {
        return Err(GlmError::EmptyData);
    }
    let pos = data.positives();
    if pos == 0 || pos == data.len() {
        return Err(GlmError::SingleClass);
    }
    let p = data.width();
    let bound = T::lit(SEPARATION_BOUND);
    let mut w = vec![T::zero(); p];
    let mut ll = log_likelihood(data, &w);
    let mut trace = vec![ll];

    for iteration in 1..=options.max_iterations {
        let info = information(data, &w);
        let chol = Cholesky::factor(&info).ok_or(if iteration == 1 {
            GlmError::RankDeficient
        } else {
            GlmError::SingularInformation
        })?;
        let step = chol.solve(&score(data, &w));

        let mut scale = T::one();
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            let candidate: Vec<T> = w.iter().zip(&step).map(|(&a, &s)| a + scale * s).collect();
            if let Some(j) = candidate.iter().position(|v| !(v.abs() <= bound)) {
                return Err(GlmError::Separation { iteration, coefficient: j });
            }
            let cand_ll = log_likelihood(data, &candidate);
            if cand_ll >= ll {
                accepted = Some((candidate, cand_ll));
                break;
            }
            scale *= T::lit(0.5);
        }
        // No ascent along the Newton direction: already at the optimum to
        // working precision.
        let Some((next, next_ll)) = accepted else {
            return finish(data, w, ll, true, iteration, trace);
        };
        let change = relative_change(ll, next_ll);
        w = next;
        ll = next_ll;
        trace.push(ll);
        if change < options.tolerance {
            // The deviance test stops one quadratic step short of working
            // precision in the weights; take that step if it does not hurt.
            if let Some(chol) = Cholesky::factor(&information(data, &w)) {
                let step = chol.solve(&score(data, &w));
                let polished: Vec<T> = w.iter().zip(&step).map(|(&a, &s)| a + s).collect();
                let polished_ll = log_likelihood(data, &polished);
                if polished_ll >= ll && polished.iter().all(|v| v.abs() <= bound) {
                    w = polished;
                    ll = polished_ll;
                    *trace.last_mut().expect("non-empty") = ll;
                }
            }
            return finish(data, w, ll, true, iteration, trace);
        }
    }
    Err(GlmError::NotConverged(options.max_iterations))
}

/// Fits the non-aliased columns and reports aliased ones with weight 0 and
/// an undefined (NaN) standard error, the way rank-deficient fits are
/// conventionally reported.
pub fn fit_logistic_dropping_aliased<T: Real>(
    data: &Dataset<T>,
    options: FitOptions<T>,
) -> Result<FittedGlm<T>, GlmError> {
    let aliased = data.aliased_columns();
    if aliased.is_empty() {
        return fit_logistic(data, options);
    }
    let keep: Vec<usize> = (0..data.width()).filter(|j| !aliased.contains(j)).collect();
    if keep.is_empty() {
        return Err(GlmError::RankDeficient);
    }
    let reduced = fit_logistic(&data.select(&keep), options)?;
    let mut weights = vec![T::zero(); data.width()];
    let mut standard_errors = vec![T::nan(); data.width()];
    for (k, &j) in keep.iter().enumerate() {
        weights[j] = reduced.weights[k];
        standard_errors[j] = reduced.standard_errors[k];
    }
    Ok(FittedGlm { names: data.names.clone(), weights, standard_errors, ..reduced })
}

fn finish<T: Real>(
    data: &Dataset<T>,
    weights: Vec<T>,
    log_likelihood: T,
    converged: bool,
    iterations: usize,
    trace: Vec<T>,
) -> Result<FittedGlm<T>, GlmError> {
    let standard_errors = standard_errors_at(data, &weights)?;
    Ok(FittedGlm {
        names: data.names.clone(),
        weights,
        standard_errors,
        log_likelihood,
        converged,
        iterations,
        n_rows: data.len(),
        trace,
    })
}

fn standard_errors_at<T: Real>(data: &Dataset<T>, w: &[T]) -> Result<Vec<T>, GlmError> {
    let chol = Cholesky::factor(&information(data, w)).ok_or(GlmError::SingularInformation)?;
    Ok(chol.inverse_diagonal().into_iter().map(|v| v.sqrt()).collect())
}

/// Square roots of the diagonal of the inverse observed information at the
/// model's weights.
pub fn standard_errors<T: Real>(model: &FittedGlm<T>, data: &Dataset<T>) -> Result<Vec<T>, GlmError> {
    if data.width() != model.weights.len() {
        return Err(GlmError::SchemaMismatch { expected: model.weights.len(), found: data.width() });
    }
    standard_errors_at(data, &model.weights)
}

impl<T: Real> FittedGlm<T> {
    /// A model with fixed weights, e.g. a ground-truth generator.
    pub fn from_weights<S: AsRef<str>>(names: &[S], weights: Vec<T>) -> Result<Self, GlmError> {
        if weights.len() != names.len() {
            return Err(GlmError::SchemaMismatch { expected: names.len(), found: weights.len() });
        }
        Ok(FittedGlm {
            names: names.iter().map(|s| s.as_ref().to_string()).collect(),
            standard_errors: vec![T::zero(); weights.len()],
            weights,
            log_likelihood: T::zero(),
            converged: false,
            iterations: 0,
            n_rows: 0,
            trace: Vec::new(),
        })
    }

    pub fn linear_predictor(&self, x: &[T]) -> Result<T, GlmError> {
        if x.len() != self.weights.len() {
            return Err(GlmError::SchemaMismatch { expected: self.weights.len(), found: x.len() });
        }
        Ok(dot(&self.weights, x))
    }

    /// `σ(w·x)`.
    pub fn predict_prob(&self, x: &[T]) -> Result<T, GlmError> {
        self.linear_predictor(x).map(sigmoid)
    }

    /// Feature names ranked by `|w| / se`, descending; the intercept is
    /// excluded and ties keep schema order.
    pub fn variable_importance(&self) -> Vec<(&str, T)> {
        let mut ranked: Vec<(&str, T)> = self
            .names
            .iter()
            .zip(self.weights.iter().zip(&self.standard_errors))
            .skip(1)
            .map(|(name, (&w, &se))| {
                let t = if w == T::zero() { T::zero() } else { (w / se).abs() };
                (name.as_str(), t)
            })
            .collect();
        ranked.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(std::cmp::Ordering::Equal));
        ranked
    }

    /// Whether coefficient `j` was dropped as aliased during fitting.
    pub fn is_aliased(&self, j: usize) -> bool {
        self.standard_errors[j].is_nan()
    }

    /// The feature schema this model's names spell out, if any.
    pub fn schema(&self) -> Option<FeatureSchema> {
        FeatureSchema::from_names(&self.names)
    }
}

fn same_names(a: &[&str], b: &[String]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| *x == y)
}

impl FittedGlm<f64> {
    pub fn predict(&self, x: &FeatureVector) -> Result<f64, GlmError> {
        if !same_names(x.names(), &self.names) {
            return Err(GlmError::SchemaMismatch { expected: self.names.len(), found: x.values.len() });
        }
        self.predict_prob(&x.values)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FeatureSchema;

    fn intercept_only<T: Real>(pos: usize, neg: usize) -> Dataset<T> {
        let mut d = Dataset::new(&["intercept"]);
        for i in 0..(pos + neg) {
            d.push(&[T::one()], i < pos).unwrap();
        }
        d
    }

    #[test]
    fn intercept_only_reference_values() {
        let m = fit_logistic(&intercept_only::<f64>(50, 50), FitOptions::default()).unwrap();
        assert!(m.weights[0].abs() < 1e-12);
        let m = fit_logistic(&intercept_only::<f64>(75, 25), FitOptions::default()).unwrap();
        assert!((m.weights[0] - 3.0f64.ln()).abs() < 1e-8);
        let m = fit_logistic(&intercept_only::<f32>(75, 25), FitOptions::default()).unwrap();
        assert!((m.weights[0] - 3.0f32.ln()).abs() < 1e-5);
    }

    #[test]
    fn intercept_only_standard_error() {
        // information = n p (1 - p) = n / 4 at p = 1/2
        let d = intercept_only::<f64>(200, 200);
        let m = fit_logistic(&d, FitOptions::default()).unwrap();
        assert!((m.standard_errors[0] - 2.0 / 400f64.sqrt()).abs() < 1e-12);
        let quad = d.replicated(4);
        let se4 = standard_errors(&m, &quad).unwrap();
        assert!((se4[0] - m.standard_errors[0] / 2.0).abs() < 1e-12);
    }

    #[test]
    fn rank_deficient_design() {
        let mut d: Dataset<f64> = Dataset::new(&["intercept", "a", "a_copy"]);
        for i in 0..40 {
            let a = (i % 7) as f64;
            d.push(&[1.0, a, 2.0 * a], i % 3 == 0).unwrap();
        }
        assert_eq!(fit_logistic(&d, FitOptions::default()).unwrap_err(), GlmError::RankDeficient);
        let m = FittedGlm::from_weights(d.names(), vec![0.0; 3]).unwrap();
        assert_eq!(standard_errors(&m, &d).unwrap_err(), GlmError::SingularInformation);
    }

    #[test]
    fn separation_is_detected() {
        let mut d: Dataset<f64> = Dataset::new(&["intercept", "x"]);
        for i in 0..20 {
            let x = i as f64 - 9.5;
            d.push(&[1.0, x], x > 0.0).unwrap();
        }
        assert!(matches!(fit_logistic(&d, FitOptions::default()), Err(GlmError::Separation { .. })));
    }

    #[test]
    fn sigmoid_symmetry() {
        let m = FittedGlm::from_weights(&crate::features::STATIC_NAMES, vec![0.0f64; 10]).unwrap();
        let mut x = vec![0.0; 10];
        x[0] = 1.0;
        assert_eq!(m.predict_prob(&x).unwrap(), 0.5);
        for i in 0..1000 {
            let z = (i as f64 - 500.0) / 37.0;
            assert!((sigmoid(-z) - (1.0 - sigmoid(z))).abs() < 1e-15);
        }
        assert!(matches!(m.predict_prob(&x[..3]), Err(GlmError::SchemaMismatch { .. })));
    }

    #[test]
    fn single_class_and_empty_are_rejected() {
        let d: Dataset<f64> = Dataset::for_schema(FeatureSchema::STATIC);
        assert_eq!(fit_logistic(&d, FitOptions::default()).unwrap_err(), GlmError::EmptyData);
        let mut d: Dataset<f64> = Dataset::for_schema(FeatureSchema::STATIC);
        let row = [1.0, 0.1, 0.6, 0.0, 0.0, 0.9, 0.09, 0.54, 0.0, 0.0];
        d.push(&row, true).unwrap();
        assert_eq!(fit_logistic(&d, FitOptions::default()).unwrap_err(), GlmError::SingleClass);
    }

    #[test]
    fn importance_ranking_rules() {
        let mut w = vec![0.0f64; 10];
        w[0] = 5.0; // intercept is never ranked
        w[1] = 1.0;
        w[2] = -3.0;
        w[3] = 1.0;
        let mut m = FittedGlm::from_weights(&crate::features::STATIC_NAMES, w).unwrap();
        m.standard_errors = vec![1.0; 10];
        let ranked = m.variable_importance();
        assert_eq!(ranked.len(), 9);
        assert_eq!(ranked[0], ("r2", 3.0));
        // tie between r1 and risk keeps schema order
        assert_eq!(ranked[1].0, "r1");
        assert_eq!(ranked[2].0, "risk");
        assert!(ranked[3..].iter().all(|&(_, t)| t == 0.0));
    }
}
