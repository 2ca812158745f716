//! Ridge regression, sequential thresholding (STRidge) and the train/test
//! tolerance search wrapped around it.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::assembly::RegressionProblem;
use crate::error::{CtsrError, Result};

/// Weight of the sparsity penalty in the selection error.
pub const L0_PENALTY: f64 = 1e-3;

/// How the threshold tolerance moves between training steps.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TolSchedule {
    /// Improvement lowers the tolerance (`tol / 1.5`), otherwise it doubles,
    /// capped at `10 · d_tol · 2^n_train`.
    #[default]
    Geometric,
    /// Additive schedule of the original TrainSTRidge: improvement raises the
    /// tolerance by the step, otherwise it backs off and the step shrinks.
    Additive,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Hyperparams {
    pub lambda: f64,
    pub d_tol: f64,
    pub n_train: usize,
    pub n_stridge: usize,
    pub split_ratio: f64,
    pub seed: u64,
    pub tol_schedule: TolSchedule,
    pub normalize_columns: bool,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            lambda: 1e-5,
            d_tol: 1e-3,
            n_train: 25,
            n_stridge: 10,
            split_ratio: 0.8,
            seed: 0,
            tol_schedule: TolSchedule::Geometric,
            normalize_columns: true,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.lambda >= 0.0
            && self.lambda.is_finite()
            && self.d_tol > 0.0
            && self.d_tol.is_finite()
            && self.n_train >= 1
            && self.n_stridge >= 1
            && self.split_ratio > 0.0
            && self.split_ratio < 1.0;
        if ok {
            Ok(())
        } else {
            Err(CtsrError::Spec(format!("invalid hyperparameters: {self:?}")))
        }
    }
}

/// A ridge solve together with whether the system was singular.
#[derive(Clone, Debug, PartialEq)]
pub struct RidgeFit {
    pub coefficients: DVector<f64>,
    /// The Cholesky factorisation failed and the minimum-norm SVD solution was used.
    pub min_norm: bool,
}

/// Minimises `‖Θξ − y‖² + λ‖ξ‖²`.
pub fn ridge(theta: &DMatrix<f64>, lhs: &DVector<f64>, lambda: f64) -> Result<RidgeFit> {
    if theta.ncols() == 0 {
        return Err(CtsrError::Spec("ridge needs at least one column".into()));
    }
    if theta.nrows() != lhs.len() {
        return Err(CtsrError::Spec(format!(
            "Θ has {} rows but lhs has {}",
            theta.nrows(),
            lhs.len()
        )));
    }
    let gram = Gram::new(theta, lhs);
    let all: Vec<usize> = (0..theta.ncols()).collect();
    let (xi, min_norm) = gram.solve(&all, lambda)?;
    Ok(RidgeFit {
        coefficients: xi,
        min_norm,
    })
}

/// Normal-equation data `ΘᵀΘ`, `Θᵀy`, shared by every sub-solve on a column subset.
struct Gram {
    g: DMatrix<f64>,
    b: DVector<f64>,
}

impl Gram {
    fn new(theta: &DMatrix<f64>, lhs: &DVector<f64>) -> Self {
        Gram {
            g: theta.tr_mul(theta),
            b: theta.tr_mul(lhs),
        }
    }

    fn solve(&self, active: &[usize], lambda: f64) -> Result<(DVector<f64>, bool)> {
        let n = self.g.ncols();
        let mut out = DVector::zeros(n);
        if active.is_empty() {
            return Ok((out, false));
        }
        let mut g = self.g.select_rows(active).select_columns(active);
        let b = self.b.select_rows(active);
        for i in 0..active.len() {
            g[(i, i)] += lambda;
        }
        let scale = g.diagonal().amax().max(f64::MIN_POSITIVE);
        let (x, min_norm) = match g.clone().cholesky() {
            Some(ch) if ch.l_dirty().diagonal().iter().all(|d| d * d > 1e-13 * scale) => (ch.solve(&b), false),
            _ => {
                // Gram is symmetric positive semidefinite: pseudo-inverse via its SVD.
                let svd = g.svd(true, true);
                let tol = svd.singular_values.amax() * 1e-12 * active.len() as f64;
                let x = svd
                    .solve(&b, tol)
                    .map_err(|e| CtsrError::Numerical(e.to_string()))?;
                (x, true)
            }
        };
        if x.iter().any(|v| !v.is_finite()) {
            return Err(CtsrError::Numerical("non-finite coefficients from ridge solve".into()));
        }
        for (k, &c) in active.iter().enumerate() {
            out[c] = x[k];
        }
        Ok((out, min_norm))
    }
}

/// Ratio of the largest to the smallest singular value; infinite when the
/// smallest vanishes at machine precision.
pub fn condition_number(theta: &DMatrix<f64>) -> f64 {
    if theta.is_empty() {
        return f64::INFINITY;
    }
    let sv = if theta.nrows() > theta.ncols() {
        // Same singular values, much smaller decomposition.
        theta.clone().qr().r().singular_values()
    } else {
        theta.singular_values()
    };
    let max = sv.amax();
    let min = sv.iter().copied().fold(f64::INFINITY, f64::min);
    if max == 0.0 || min <= max * f64::EPSILON * theta.nrows().max(theta.ncols()) as f64 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// `‖Θξ − y‖² + 10⁻³ · κ · ‖ξ‖₀`.
pub fn selection_error(theta_test: &DMatrix<f64>, lhs_test: &DVector<f64>, xi: &DVector<f64>, kappa: f64) -> f64 {
    let residual = (theta_test * xi - lhs_test).norm_squared();
    let nnz = xi.iter().filter(|v| **v != 0.0).count();
    if nnz == 0 {
        residual
    } else {
        residual + L0_PENALTY * kappa * nnz as f64
    }
}

/// Result of one STRidge call.
#[derive(Clone, Debug, PartialEq)]
pub struct StridgeFit {
    pub coefficients: DVector<f64>,
    /// Ridge coefficients on the final support before the least-squares refit.
    pub pre_debias: DVector<f64>,
    /// Active-set sizes after each thresholding pass.
    pub active_trace: Vec<usize>,
}

/// Sequential thresholded ridge regression.
///
/// Ridge-solves on the active columns, zeroes coefficients below `tol`, and
/// repeats until the active set stops changing or `n_stridge` passes elapse.
/// The surviving support is refit by unregularised least squares. `tol = 0`
/// performs no thresholding and returns the plain ridge solution.
pub fn stridge(theta: &DMatrix<f64>, lhs: &DVector<f64>, lambda: f64, tol: f64, n_stridge: usize) -> Result<StridgeFit> {
    if theta.nrows() != lhs.len() || theta.ncols() == 0 {
        return Err(CtsrError::Spec("Θ and lhs do not align".into()));
    }
    stridge_gram(&Gram::new(theta, lhs), lambda, tol, n_stridge)
}

fn stridge_gram(gram: &Gram, lambda: f64, tol: f64, n_stridge: usize) -> Result<StridgeFit> {
    if !(tol >= 0.0) {
        return Err(CtsrError::Spec(format!("tolerance must be non-negative, got {tol}")));
    }
    let n = gram.g.ncols();
    let mut active: Vec<usize> = (0..n).collect();
    let (mut xi, _) = gram.solve(&active, lambda)?;
    if tol == 0.0 {
        return Ok(StridgeFit {
            pre_debias: xi.clone(),
            coefficients: xi,
            active_trace: vec![n],
        });
    }
    let threshold = |xi: &DVector<f64>, active: &[usize]| -> Vec<usize> {
        active.iter().copied().filter(|&c| xi[c].abs() >= tol).collect()
    };
    let mut trace = Vec::new();
    let mut stable = false;
    for _ in 0..n_stridge {
        let next = threshold(&xi, &active);
        trace.push(next.len());
        if next == active {
            stable = true;
            break;
        }
        active = next;
        if active.is_empty() {
            break;
        }
        xi = gram.solve(&active, lambda)?.0;
    }
    if !stable && !active.is_empty() {
        // The pass budget ran out after a re-solve; enforce the threshold once more.
        active = threshold(&xi, &active);
        trace.push(active.len());
        if !active.is_empty() {
            xi = gram.solve(&active, lambda)?.0;
        }
    }
    let mut pre = DVector::zeros(n);
    for &c in &active {
        pre[c] = xi[c];
    }
    let coefficients = gram.solve(&active, 0.0)?.0;
    Ok(StridgeFit {
        coefficients,
        pre_debias: pre,
        active_trace: trace,
    })
}

/// One step of the tolerance search.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub tolerance: f64,
    pub error: f64,
    pub nnz: usize,
    pub accepted: bool,
}

/// Output of [`train_stridge`]. Coefficients are in the units of the original
/// (unnormalised) columns.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SparseSolution {
    pub columns: Vec<String>,
    pub coefficients: Vec<f64>,
    pub support: Vec<usize>,
    pub test_error: f64,
    pub baseline_error: f64,
    pub kappa: f64,
    pub best_tolerance: f64,
    pub iterations_run: usize,
    pub tolerance_trace: Vec<TraceStep>,
}

impl SparseSolution {
    pub fn zero(columns: Vec<String>) -> Self {
        let n = columns.len();
        SparseSolution {
            columns,
            coefficients: vec![0.0; n],
            support: Vec::new(),
            test_error: 0.0,
            baseline_error: 0.0,
            kappa: f64::NAN,
            best_tolerance: 0.0,
            iterations_run: 0,
            tolerance_trace: Vec::new(),
        }
    }

    pub fn nnz(&self) -> usize {
        self.support.len()
    }

    pub fn coefficient(&self, label: &str) -> Option<f64> {
        self.columns.iter().position(|c| c == label).map(|i| self.coefficients[i])
    }

    pub fn xi(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.coefficients)
    }

    /// `‖lhs − Θξ‖₂` on a full problem.
    pub fn residual_norm(&self, problem: &RegressionProblem) -> f64 {
        (&problem.lhs - &problem.theta * self.xi()).norm()
    }

    /// Equation text such as `-1 u[j] du[i]/dx[j] + 0.1 d2u[i]/dx[j]dx[j]`.
    pub fn equation(&self) -> String {
        if self.support.is_empty() {
            return "0".into();
        }
        let parts: Vec<String> = self
            .support
            .iter()
            .map(|&c| format!("{:+.6e} {}", self.coefficients[c], self.columns[c]))
            .collect();
        parts.join(" ")
    }

    /// One row per column: index, term, coefficient.
    pub fn write_csv(&self, w: impl Write) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["index", "term", "coefficient"])?;
        for (i, (t, c)) in self.columns.iter().zip(&self.coefficients).enumerate() {
            out.write_record([i.to_string(), t.clone(), format!("{c:e}")])?;
        }
        out.flush()?;
        Ok(())
    }
}

fn support_of(xi: &DVector<f64>) -> Vec<usize> {
    xi.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(i, _)| i).collect()
}

/// Seeded train/test row partition.
pub fn split_rows(n: usize, ratio: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    let n_train = (ratio * n as f64).round() as usize;
    if n_train == 0 || n_train >= n {
        return Err(CtsrError::DegenerateSplit {
            train: n_train,
            test: n.saturating_sub(n_train),
        });
    }
    let mut rows: Vec<usize> = (0..n).collect();
    rows.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let test = rows.split_off(n_train);
    Ok((rows, test))
}

/// Train/test tolerance search around [`stridge`], returning the step with the
/// lowest test-set selection error.
pub fn train_stridge(problem: &RegressionProblem, hyper: &Hyperparams) -> Result<SparseSolution> {
    hyper.validate()?;
    let n_cols = problem.n_cols();
    if n_cols == 0 {
        return Ok(SparseSolution::zero(Vec::new()));
    }
    let (train, test) = split_rows(problem.n_rows(), hyper.split_ratio, hyper.seed)?;
    let mut theta_tr = problem.theta.select_rows(&train);
    let y_tr = problem.lhs.select_rows(&train);
    let mut theta_te = problem.theta.select_rows(&test);
    let y_te = problem.lhs.select_rows(&test);

    let mut scale = DVector::from_element(n_cols, 1.0);
    if hyper.normalize_columns {
        for c in 0..n_cols {
            let norm = theta_tr.column(c).norm();
            if norm > 0.0 {
                scale[c] = 1.0 / norm;
            }
        }
        for c in 0..n_cols {
            theta_tr.column_mut(c).scale_mut(scale[c]);
            theta_te.column_mut(c).scale_mut(scale[c]);
        }
    }

    let kappa = condition_number(&theta_tr);
    let gram = Gram::new(&theta_tr, &y_tr);
    let all: Vec<usize> = (0..n_cols).collect();
    let baseline = gram.solve(&all, 0.0)?.0;
    let mut incumbent = selection_error(&theta_te, &y_te, &baseline, kappa);
    let baseline_error = incumbent;

    let cap = 10.0 * hyper.d_tol * 2f64.powi(hyper.n_train.min(1000) as i32);
    let mut tol = hyper.d_tol;
    let mut step = hyper.d_tol;
    let mut best: Option<(f64, DVector<f64>, f64)> = None;
    let mut trace = Vec::with_capacity(hyper.n_train);
    for iter in 0..hyper.n_train {
        let fit = stridge_gram(&gram, hyper.lambda, tol, hyper.n_stridge)?;
        let xi = fit.coefficients;
        let err = selection_error(&theta_te, &y_te, &xi, kappa);
        if best.as_ref().is_none_or(|(e, _, _)| err < *e) {
            best = Some((err, xi.clone(), tol));
        }
        let accepted = match hyper.tol_schedule {
            TolSchedule::Geometric => err < incumbent,
            TolSchedule::Additive => err <= incumbent,
        };
        trace.push(TraceStep {
            tolerance: tol,
            error: err,
            nnz: support_of(&xi).len(),
            accepted,
        });
        if accepted {
            incumbent = err;
        }
        match (hyper.tol_schedule, accepted) {
            (TolSchedule::Geometric, true) => tol /= 1.5,
            (TolSchedule::Geometric, false) => tol = (tol * 2.0).min(cap),
            (TolSchedule::Additive, true) => tol += step,
            (TolSchedule::Additive, false) => {
                tol = (tol - 2.0 * step).max(0.0);
                step = 2.0 * step / (hyper.n_train - iter) as f64;
                tol += step;
            }
        }
    }
    let (test_error, xi, best_tolerance) = best.expect("n_train >= 1");
    let coefficients: Vec<f64> = xi.iter().zip(scale.iter()).map(|(x, s)| x * s).collect();
    let support = coefficients
        .iter()
        .enumerate()
        .filter(|(_, v)| **v != 0.0)
        .map(|(i, _)| i)
        .collect();
    Ok(SparseSolution {
        columns: problem.columns.clone(),
        coefficients,
        support,
        test_error,
        baseline_error,
        kappa,
        best_tolerance,
        iterations_run: trace.len(),
        tolerance_trace: trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::RowMeta;
    use rand_distr::{Distribution, StandardNormal};

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(&mut rng))
    }

    pub(crate) fn problem(theta: DMatrix<f64>, lhs: DVector<f64>) -> RegressionProblem {
        let n = theta.ncols();
        RegressionProblem {
            rows: (0..theta.nrows()).map(|s| RowMeta { sample: s, free: vec![] }).collect(),
            theta,
            lhs,
            columns: (0..n).map(|c| format!("c{c}")).collect(),
            column_factors: vec![1; n],
            pruned: vec![],
        }
    }

    #[test]
    fn ridge_reduces_to_least_squares() {
        let theta = random_matrix(40, 5, 1);
        let truth = DVector::from_vec(vec![1.0, -2.0, 0.5, 0.0, 3.0]);
        let y = &theta * &truth;
        let fit = ridge(&theta, &y, 0.0).unwrap();
        assert!(!fit.min_norm);
        assert!((fit.coefficients - truth).amax() < 1e-10);
    }

    #[test]
    fn ridge_on_orthonormal_columns() {
        let q = random_matrix(30, 6, 2).qr().q();
        let y = DVector::from_fn(30, |i, _| (i as f64 * 0.3).sin());
        let lambda = 0.7;
        let fit = ridge(&q, &y, lambda).unwrap();
        let expected = q.tr_mul(&y) / (1.0 + lambda);
        assert!((fit.coefficients - expected).amax() < 1e-10);
    }

    #[test]
    fn ridge_zero_lhs_and_singular() {
        let theta = random_matrix(10, 3, 3);
        assert_eq!(ridge(&theta, &DVector::zeros(10), 1e-5).unwrap().coefficients, DVector::zeros(3));
        let mut dup = DMatrix::zeros(10, 2);
        dup.set_column(0, &theta.column(0));
        dup.set_column(1, &theta.column(0));
        let y = theta.column(0) * 2.0;
        let fit = ridge(&dup, &y, 0.0).unwrap();
        assert!(fit.min_norm);
        assert!((fit.coefficients[0] - 1.0).abs() < 1e-8 && (fit.coefficients[1] - 1.0).abs() < 1e-8);
    }

    #[test]
    fn condition_numbers() {
        assert!((condition_number(&DMatrix::identity(4, 4)) - 1.0).abs() < 1e-14);
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![10.0, 1.0]));
        assert!((condition_number(&d) - 10.0).abs() < 1e-12);
        let q = random_matrix(7, 7, 4).qr().q();
        assert!((condition_number(&q) - 1.0).abs() < 1e-10);
        let tall = random_matrix(50, 4, 5).qr().q();
        assert!((condition_number(&tall) - 1.0).abs() < 1e-10);
        assert!(condition_number(&DMatrix::zeros(3, 2)).is_infinite());
    }

    #[test]
    fn selection_error_examples() {
        let theta = DMatrix::identity(2, 2);
        let xi = DVector::from_vec(vec![1.0, 2.0]);
        assert!((selection_error(&theta, &xi.clone(), &xi, 100.0) - 0.2).abs() < 1e-15);
        assert_eq!(selection_error(&theta, &DVector::zeros(2), &DVector::zeros(2), f64::INFINITY), 0.0);
        let t10 = DMatrix::identity(11, 10);
        let xi10 = DVector::from_element(10, 1.0);
        let mut y = &t10 * &xi10;
        y[10] = 1.0;
        assert!((selection_error(&t10, &y, &xi10, 10.0) - 1.1).abs() < 1e-12);
    }

    #[test]
    fn stridge_examples() {
        let theta = random_matrix(60, 10, 6);
        let y = theta.column(3) * 2.0 - theta.column(7) * 0.5;
        let fit = stridge(&theta, &y, 1e-5, 0.1, 10).unwrap();
        assert_eq!(support_of(&fit.coefficients), vec![3, 7]);
        assert!((fit.coefficients[3] - 2.0).abs() < 1e-10);
        assert!((fit.coefficients[7] + 0.5).abs() < 1e-10);

        let big = stridge(&theta, &y, 1e-5, 1e6, 10).unwrap();
        assert_eq!(big.coefficients, DVector::zeros(10));

        let plain = stridge(&theta, &y, 1e-3, 0.0, 10).unwrap();
        assert_eq!(plain.coefficients, ridge(&theta, &y, 1e-3).unwrap().coefficients);
    }

    #[test]
    fn train_stridge_zero_lhs() {
        let p = problem(random_matrix(50, 6, 7), DVector::zeros(50));
        let s = train_stridge(&p, &Hyperparams::default()).unwrap();
        assert!(s.support.is_empty());
        assert_eq!(s.test_error, 0.0);
    }

    #[test]
    fn train_stridge_recovers_sparse_truth() {
        let theta = random_matrix(200, 12, 8);
        let y = theta.column(2) * -1.0 + theta.column(9) * 0.1;
        let p = problem(theta, y);
        for schedule in [TolSchedule::Geometric, TolSchedule::Additive] {
            let h = Hyperparams {
                tol_schedule: schedule,
                ..Hyperparams::default()
            };
            let s = train_stridge(&p, &h).unwrap();
            assert_eq!(s.support, vec![2, 9], "{schedule:?}");
            assert!((s.coefficients[2] + 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn degenerate_split() {
        let p = problem(random_matrix(1, 2, 9), DVector::zeros(1));
        assert!(matches!(train_stridge(&p, &Hyperparams::default()), Err(CtsrError::DegenerateSplit { .. })));
    }
}
