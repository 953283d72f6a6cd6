//! Multinomial logistic regression with a reference class, fitted by Newton's
//! method on the L2-penalized negative log-likelihood.
//!
//! For `N` classes and `K` features the model holds intercepts `λ_n` and
//! coefficient vectors `θ_n` for the `N - 1` non-reference classes. The last
//! class is the reference; its linear predictor is fixed at zero, so
//!
//! ```text
//! π_n(x) = exp(λ_n + θ_nᵀx) / (1 + Σ_k exp(λ_k + θ_kᵀx))    n < N - 1
//! π_ref(x) = 1 / (1 + Σ_k exp(λ_k + θ_kᵀx))
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{AbsenteeismClass, Attribute};
use crate::numerics::{argmax, log_sum_exp, norm, softmax_in_place, Matrix, Scalar};
use crate::preprocess::EncodedMatrix;

/// Attributes left out of the MLR design matrix. Everything else (including
/// the reason and education one-hot groups) is used.
pub const MLR_EXCLUDED_ATTRIBUTES: [Attribute; 1] = [Attribute::Height];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MlrConfig {
    /// L2 penalty on the coefficients (intercepts are not penalized).
    pub alpha: f64,
    /// Stopping threshold on the gradient norm divided by the row count.
    pub tolerance: f64,
    pub max_iter: usize,
}

impl Default for MlrConfig {
    fn default() -> Self {
        Self {
            alpha: 1e-4,
            tolerance: 1e-8,
            max_iter: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlrModel<T> {
    n_classes: usize,
    intercepts: Vec<T>,
    /// `(n_classes - 1) × K`, one row per non-reference class.
    coefficients: Matrix<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlrFitReport {
    pub iterations: usize,
    /// Final gradient norm divided by the row count.
    pub gradient_norm: f64,
    pub objective: f64,
    pub converged: bool,
    /// Penalized objective at the start and after every accepted step.
    pub objective_history: Vec<f64>,
}

impl<T: Scalar> MlrModel<T> {
    pub fn zeros(n_classes: usize, n_features: usize) -> Self {
        assert!(n_classes >= 2);
        Self {
            n_classes,
            intercepts: vec![T::zero(); n_classes - 1],
            coefficients: Matrix::zeros(n_classes - 1, n_features),
        }
    }

    pub fn from_parts(intercepts: Vec<T>, coefficients: Matrix<T>) -> Result<Self> {
        if intercepts.is_empty() || intercepts.len() != coefficients.rows() {
            return Err(Error::ShapeMismatch(format!(
                "{} intercepts for {} coefficient rows",
                intercepts.len(),
                coefficients.rows()
            )));
        }
        if intercepts.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("MLR intercepts".into()));
        }
        Ok(Self {
            n_classes: intercepts.len() + 1,
            intercepts,
            coefficients,
        })
    }

    fn from_flat(n_classes: usize, k: usize, params: &[T]) -> Self {
        let p = k + 1;
        let mut intercepts = Vec::with_capacity(n_classes - 1);
        let mut coefs = Vec::with_capacity((n_classes - 1) * k);
        for n in 0..n_classes - 1 {
            intercepts.push(params[n * p]);
            coefs.extend_from_slice(&params[n * p + 1..(n + 1) * p]);
        }
        Self {
            n_classes,
            intercepts,
            coefficients: Matrix::from_raw(n_classes - 1, k, coefs),
        }
    }

    /// Parameters flattened as `[λ_0, θ_0…, λ_1, θ_1…, …]`.
    pub fn flat_params(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.intercepts.len() * (self.n_features() + 1));
        for (n, &l) in self.intercepts.iter().enumerate() {
            out.push(l);
            out.extend_from_slice(self.coefficients.row(n));
        }
        out
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn n_features(&self) -> usize {
        self.coefficients.cols()
    }

    pub fn reference_class(&self) -> usize {
        self.n_classes - 1
    }

    pub fn intercepts(&self) -> &[T] {
        &self.intercepts
    }

    pub fn coefficients(&self) -> &Matrix<T> {
        &self.coefficients
    }

    fn check_dim(&self, x: &[T]) -> Result<()> {
        if x.len() != self.n_features() {
            return Err(Error::DimensionMismatch {
                expected: self.n_features(),
                found: x.len(),
            });
        }
        Ok(())
    }

    /// Linear predictors, with the reference class fixed at zero.
    pub fn logits(&self, x: &[T]) -> Result<Vec<T>> {
        self.check_dim(x)?;
        let mut eta: Vec<T> = self
            .intercepts
            .iter()
            .enumerate()
            .map(|(n, &l)| l + crate::numerics::dot(self.coefficients.row(n), x))
            .collect();
        eta.push(T::zero());
        Ok(eta)
    }

    pub fn predict_proba(&self, x: &[T]) -> Result<Vec<T>> {
        let mut p = self.logits(x)?;
        softmax_in_place(&mut p);
        Ok(p)
    }

    /// Most probable class index; ties go to the lower index.
    pub fn predict(&self, x: &[T]) -> Result<usize> {
        Ok(argmax(&self.predict_proba(x)?))
    }
}

/// Three-class convenience wrapper over [`MlrModel::predict_proba`].
pub fn mlr_predict_proba<T: Scalar>(model: &MlrModel<T>, x: &[T]) -> Result<Vec<T>> {
    model.predict_proba(x)
}

pub fn mlr_predict<T: Scalar>(model: &MlrModel<T>, x: &[T]) -> Result<AbsenteeismClass> {
    let i = model.predict(x)?;
    AbsenteeismClass::from_index(i).ok_or(Error::InvalidParameter(format!(
        "model has {} classes",
        model.n_classes
    )))
}

/// Penalized negative log-likelihood over a fixed data set, as a function of
/// the flat parameter vector.
pub struct MlrObjective<'a, T> {
    x: &'a Matrix<T>,
    labels: &'a [usize],
    n_classes: usize,
    alpha: T,
}

impl<'a, T: Scalar> MlrObjective<'a, T> {
    pub fn new(x: &'a Matrix<T>, labels: &'a [usize], n_classes: usize, alpha: f64) -> Result<Self> {
        if labels.len() != x.rows() {
            return Err(Error::DimensionMismatch {
                expected: x.rows(),
                found: labels.len(),
            });
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= n_classes) {
            return Err(Error::InvalidParameter(format!("label {bad} with {n_classes} classes")));
        }
        Ok(Self {
            x,
            labels,
            n_classes,
            alpha: T::of(alpha),
        })
    }

    pub fn dim(&self) -> usize {
        (self.n_classes - 1) * (self.x.cols() + 1)
    }

    fn eta(&self, params: &[T], row: &[T], out: &mut [T]) {
        let p = self.x.cols() + 1;
        for n in 0..self.n_classes - 1 {
            let block = &params[n * p..(n + 1) * p];
            out[n] = block[0] + crate::numerics::dot(&block[1..], row);
        }
        out[self.n_classes - 1] = T::zero();
    }

    fn penalty(&self, params: &[T]) -> T {
        let p = self.x.cols() + 1;
        let mut s = T::zero();
        for (i, &v) in params.iter().enumerate() {
            if i % p != 0 {
                s += v * v;
            }
        }
        self.alpha * s / T::of(2.0)
    }

    pub fn value(&self, params: &[T]) -> T {
        let mut eta = vec![T::zero(); self.n_classes];
        let mut nll = T::zero();
        for (row, &y) in self.x.row_iter().zip(self.labels) {
            self.eta(params, row, &mut eta);
            nll += log_sum_exp(&eta) - eta[y];
        }
        nll + self.penalty(params)
    }

    pub fn gradient(&self, params: &[T]) -> Vec<T> {
        self.gradient_and_hessian(params, false).0
    }

    /// Gradient, and the Hessian when requested.
    pub fn gradient_and_hessian(&self, params: &[T], with_hessian: bool) -> (Vec<T>, Option<Matrix<T>>) {
        let k = self.x.cols();
        let p = k + 1;
        let m = self.n_classes - 1;
        let d = self.dim();
        let mut grad = vec![T::zero(); d];
        let mut hess = with_hessian.then(|| vec![T::zero(); d * d]);
        let mut prob = vec![T::zero(); self.n_classes];
        let mut xt = vec![T::one(); p];
        for (row, &y) in self.x.row_iter().zip(self.labels) {
            self.eta(params, row, &mut prob);
            softmax_in_place(&mut prob);
            xt[1..].copy_from_slice(row);
            for n in 0..m {
                let r = prob[n] - if y == n { T::one() } else { T::zero() };
                for (g, &xv) in grad[n * p..(n + 1) * p].iter_mut().zip(&xt) {
                    *g += r * xv;
                }
            }
            if let Some(h) = hess.as_mut() {
                for n in 0..m {
                    for n2 in n..m {
                        let w = prob[n] * (if n == n2 { T::one() } else { T::zero() } - prob[n2]);
                        for a in 0..p {
                            let wa = w * xt[a];
                            if wa == T::zero() {
                                continue;
                            }
                            let base = (n * p + a) * d + n2 * p;
                            let start = if n == n2 { a } else { 0 };
                            for b in start..p {
                                h[base + b] += wa * xt[b];
                            }
                        }
                    }
                }
            }
        }
        for (i, g) in grad.iter_mut().enumerate() {
            if i % p != 0 {
                *g += self.alpha * params[i];
            }
        }
        let hess = hess.map(|mut h| {
            // Mirror the upper triangle and add the penalty curvature.
            for i in 0..d {
                for j in 0..i {
                    h[i * d + j] = h[j * d + i];
                }
                if i % p != 0 {
                    h[i * d + i] += self.alpha;
                }
            }
            Matrix::from_raw(d, d, h)
        });
        (grad, hess)
    }
}

/// Fits by damped Newton iterations: each step is halved until the penalized
/// objective does not increase.
pub fn mlr_fit<T: Scalar>(
    x: &Matrix<T>,
    labels: &[usize],
    n_classes: usize,
    config: &MlrConfig,
) -> Result<(MlrModel<T>, MlrFitReport)> {
    if x.rows() == 0 {
        return Err(Error::EmptyInput("no training rows".into()));
    }
    if n_classes < 2 {
        return Err(Error::InvalidParameter("need at least 2 classes".into()));
    }
    let objective = MlrObjective::new(x, labels, n_classes, config.alpha)?;
    let mut present = vec![false; n_classes];
    for &l in labels {
        present[l] = true;
    }
    if present.iter().filter(|&&p| p).count() < 2 {
        return Err(Error::SingleClass);
    }

    let mut params = vec![T::zero(); objective.dim()];
    let mut value = objective.value(&params);
    let mut history = vec![value.as_f64()];
    let mut iterations = 0;
    // The objective sums over rows, so near the optimum its rounding noise
    // swamps Newton's decrease long before the summed gradient is tiny;
    // convergence is judged on the per-row gradient instead.
    let rows = x.rows() as f64;
    let mut grad_norm;
    loop {
        let (grad, hess) = objective.gradient_and_hessian(&params, true);
        grad_norm = norm(&grad).as_f64() / rows;
        if grad_norm <= config.tolerance || iterations >= config.max_iter {
            break;
        }
        let step = hess.expect("requested").solve_spd(&grad)?;
        let mut t = T::one();
        let mut accepted = None;
        for _ in 0..60 {
            let trial: Vec<T> = params.iter().zip(&step).map(|(&p, &s)| p - t * s).collect();
            let v = objective.value(&trial);
            if v.is_finite() && v <= value {
                accepted = Some((trial, v));
                break;
            }
            t /= T::of(2.0);
        }
        iterations += 1;
        match accepted {
            Some((trial, v)) => {
                let stalled = trial == params;
                params = trial;
                value = v;
                history.push(value.as_f64());
                if stalled {
                    grad_norm = norm(&objective.gradient(&params)).as_f64() / rows;
                    break;
                }
            }
            None => break,
        }
    }
    let model = MlrModel::from_flat(n_classes, x.cols(), &params);
    if model.flat_params().iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("MLR parameters".into()));
    }
    let report = MlrFitReport {
        iterations,
        gradient_norm: grad_norm,
        objective: value.as_f64(),
        converged: grad_norm <= config.tolerance,
        objective_history: history,
    };
    if !report.converged {
        log::warn!(
            "MLR stopped after {} iterations with gradient norm {:e}",
            report.iterations,
            report.gradient_norm
        );
    }
    Ok((model, report))
}

/// Fits on an encoded matrix with three absenteeism classes.
pub fn mlr_fit_encoded<T: Scalar>(matrix: &EncodedMatrix<T>, config: &MlrConfig) -> Result<(MlrModel<T>, MlrFitReport)> {
    mlr_fit(&matrix.values, &matrix.label_indices(), AbsenteeismClass::COUNT, config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{finite_diff_grad, RngStream};

    #[test]
    fn zero_model_is_uniform_and_predicts_lowest_class() {
        let m = MlrModel::<f64>::zeros(3, 4);
        let p = m.predict_proba(&[0.3, -1.0, 2.0, 5.0]).unwrap();
        for v in &p {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
        assert_eq!(mlr_predict(&m, &[1.0, 2.0, 3.0, 4.0]).unwrap(), AbsenteeismClass::APlus);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let m = MlrModel::<f64>::zeros(3, 4);
        assert!(matches!(m.predict_proba(&[1.0]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn two_class_model_is_logistic() {
        let theta = Matrix::new(1, 2, vec![0.7, -1.3]).unwrap();
        let m = MlrModel::from_parts(vec![0.25], theta).unwrap();
        let x = [1.5, 0.4];
        let z: f64 = 0.25 + 0.7 * 1.5 - 1.3 * 0.4;
        let p = m.predict_proba(&x).unwrap();
        assert!((p[0] - 1.0 / (1.0 + (-z).exp())).abs() < 1e-15);
        assert!((p[0] + p[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn hand_set_intercepts_follow_closed_form() {
        let m = MlrModel::from_parts(vec![1.0, 0.0], Matrix::zeros(2, 3)).unwrap();
        let p = m.predict_proba(&[4.0, -2.0, 9.0]).unwrap();
        let e = std::f64::consts::E;
        let expected = [e / (2.0 + e), 1.0 / (2.0 + e), 1.0 / (2.0 + e)];
        for (a, b) in p.iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn argmax_tie_rules() {
        assert_eq!(argmax(&[0.1, 0.7, 0.2]), 1);
        assert_eq!(argmax(&[0.4, 0.4, 0.2]), 0);
    }

    #[test]
    fn independent_labels_recover_class_frequencies() {
        // Every feature value carries labels in the same 2:1:1 proportions.
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for v in 0..10 {
            for y in [0, 0, 1, 2] {
                rows.push(vec![v as f64 / 10.0, (v % 3) as f64]);
                labels.push(y);
            }
        }
        let x = Matrix::from_rows(&rows).unwrap();
        let (m, report) = mlr_fit(&x, &labels, 3, &MlrConfig::default()).unwrap();
        assert!(report.converged);
        for row in x.row_iter() {
            let p = m.predict_proba(row).unwrap();
            assert!((p[0] - 0.5).abs() < 1e-3);
            assert!((p[1] - 0.25).abs() < 1e-3);
            assert!((p[2] - 0.25).abs() < 1e-3);
        }
    }

    /// Plain gradient descent on the binary penalized objective, written out
    /// independently of the Newton code.
    fn gradient_descent_reference(alpha: f64) -> (f64, f64) {
        let (mut lambda, mut theta) = (0.0f64, 0.0f64);
        let sigmoid = |z: f64| 1.0 / (1.0 + (-z).exp());
        let step = 0.02;
        for _ in 0..400_000 {
            // 20 copies each of (x=0, class 0) and (x=1, class 1 = reference).
            let p0 = sigmoid(lambda);
            let p1 = sigmoid(lambda + theta);
            let g_lambda = 20.0 * (p0 - 1.0) + 20.0 * p1;
            let g_theta = 20.0 * p1 + alpha * theta;
            lambda -= step * g_lambda;
            theta -= step * g_theta;
        }
        (lambda, theta)
    }

    #[test]
    fn newton_matches_gradient_descent_on_toy_problem() {
        let alpha = 0.1;
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for _ in 0..20 {
            rows.push(vec![0.0]);
            labels.push(0);
            rows.push(vec![1.0]);
            labels.push(1);
        }
        let x = Matrix::from_rows(&rows).unwrap();
        let cfg = MlrConfig {
            alpha,
            ..MlrConfig::default()
        };
        let (m, report) = mlr_fit(&x, &labels, 2, &cfg).unwrap();
        assert!(report.converged);
        let (lambda, theta) = gradient_descent_reference(alpha);
        assert!((m.intercepts()[0] - lambda).abs() < 1e-4, "{} vs {lambda}", m.intercepts()[0]);
        assert!((m.coefficients().get(0, 0) - theta).abs() < 1e-4);
    }

    fn noisy_three_class(seed: u64, n: usize, k: usize) -> (Matrix<f64>, Vec<usize>) {
        let mut rng = RngStream::new(seed);
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for _ in 0..n {
            let row: Vec<f64> = (0..k).map(|_| rng.next_f64()).collect();
            let score = row[0] * 3.0 - row[1] * 2.0 + rng.next_normal();
            labels.push(if score < 0.0 { 0 } else if score < 1.2 { 1 } else { 2 });
            rows.push(row);
        }
        (Matrix::from_rows(&rows).unwrap(), labels)
    }

    #[test]
    fn optimum_gradient_agrees_with_finite_differences() {
        let (x, labels) = noisy_three_class(5, 150, 4);
        let cfg = MlrConfig::default();
        let (m, report) = mlr_fit(&x, &labels, 3, &cfg).unwrap();
        assert!(report.converged);
        assert!(report.gradient_norm <= cfg.tolerance);
        let obj = MlrObjective::new(&x, &labels, 3, cfg.alpha).unwrap();
        let params = m.flat_params();
        let fd = finite_diff_grad(|p: &[f64]| obj.value(p), &params, 1e-5);
        let analytic = obj.gradient(&params);
        for (a, b) in fd.iter().zip(&analytic) {
            assert!((a - b).abs() < 1e-5, "{a} vs {b}");
        }
        // Away from the optimum the analytic gradient still matches.
        let shifted: Vec<f64> = params.iter().map(|p| p + 0.3).collect();
        let fd = finite_diff_grad(|p: &[f64]| obj.value(p), &shifted, 1e-5);
        for (a, b) in fd.iter().zip(obj.gradient(&shifted)) {
            assert!((a - b).abs() < 1e-5 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn objective_never_increases_across_newton_steps() {
        for seed in 0..5 {
            let (x, labels) = noisy_three_class(seed, 120, 3);
            let (_, report) = mlr_fit(&x, &labels, 3, &MlrConfig::default()).unwrap();
            for w in report.objective_history.windows(2) {
                assert!(w[1] <= w[0], "objective rose: {w:?}");
            }
            assert!(report.converged);
        }
    }

    #[test]
    fn probabilities_are_valid() {
        let (x, labels) = noisy_three_class(8, 100, 3);
        let (m, _) = mlr_fit(&x, &labels, 3, &MlrConfig::default()).unwrap();
        let mut rng = RngStream::new(1);
        for _ in 0..200 {
            let probe: Vec<f64> = (0..3).map(|_| rng.next_normal() * 5.0).collect();
            let p = m.predict_proba(&probe).unwrap();
            assert!(p.iter().all(|&v| v > 0.0));
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn shifting_a_zero_coefficient_column_changes_nothing() {
        let theta = Matrix::new(2, 2, vec![0.5, 0.0, -1.0, 0.0]).unwrap();
        let m = MlrModel::from_parts(vec![0.1, 0.2], theta).unwrap();
        let a = m.predict_proba(&[0.3, 1.0]).unwrap();
        let b = m.predict_proba(&[0.3, 101.0]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn class_permutation_commutes_with_fit() {
        let (x, labels) = noisy_three_class(21, 200, 3);
        let perm = [2usize, 0, 1];
        let permuted: Vec<usize> = labels.iter().map(|&l| perm[l]).collect();
        // The ridge term depends on which class is the reference, so drop it.
        let cfg = MlrConfig {
            alpha: 0.0,
            ..MlrConfig::default()
        };
        let (m, _) = mlr_fit(&x, &labels, 3, &cfg).unwrap();
        let (mp, _) = mlr_fit(&x, &permuted, 3, &cfg).unwrap();
        for row in x.row_iter() {
            let p = m.predict_proba(row).unwrap();
            let q = mp.predict_proba(row).unwrap();
            for c in 0..3 {
                assert!((p[c] - q[perm[c]]).abs() < 1e-6, "{} vs {}", p[c], q[perm[c]]);
            }
        }
    }

    #[test]
    fn single_class_is_rejected() {
        let x = Matrix::from_rows(&[vec![0.0], vec![1.0]]).unwrap();
        assert!(matches!(
            mlr_fit(&x, &[1, 1], 3, &MlrConfig::default()),
            Err(Error::SingleClass)
        ));
    }

    #[test]
    fn fits_in_single_precision() {
        let (x, labels) = noisy_three_class(2, 80, 2);
        let x32 = Matrix::new(x.rows(), x.cols(), x.values().iter().map(|&v| v as f32).collect()).unwrap();
        let cfg = MlrConfig {
            tolerance: 1e-3,
            ..MlrConfig::default()
        };
        let (m, report) = mlr_fit(&x32, &labels, 3, &cfg).unwrap();
        assert!(report.converged, "{report:?}");
        let p = m.predict_proba(x32.row(0)).unwrap();
        assert!((p.iter().sum::<f32>() - 1.0).abs() < 1e-5);
    }
}
