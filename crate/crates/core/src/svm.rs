//! Soft-margin RBF support vector machines trained by sequential minimal
//! optimization, combined one-vs-rest for three classes.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::AbsenteeismClass;
use crate::metrics;
use crate::numerics::{argmax, softmax, squared_distance, Matrix, Scalar};
use crate::preprocess::{stratified_folds, EncodedMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec<T> {
    pub gamma: T,
    /// Box constraint.
    pub c: T,
}

impl<T: Scalar> KernelSpec<T> {
    pub fn new(gamma: T, c: T) -> Result<Self> {
        if !(gamma > T::zero() && gamma.is_finite()) || !(c > T::zero() && c.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "kernel needs gamma > 0 and c > 0, got gamma={gamma}, c={c}"
            )));
        }
        Ok(Self { gamma, c })
    }
}

/// `exp(-γ‖x − z‖²)`.
pub fn rbf_kernel<T: Scalar>(x: &[T], z: &[T], gamma: T) -> Result<T> {
    if x.len() != z.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            found: z.len(),
        });
    }
    Ok((-gamma * squared_distance(x, z)).exp())
}

fn gram<T: Scalar>(x: &Matrix<T>, gamma: T) -> Vec<T> {
    let n = x.rows();
    let mut k = vec![T::zero(); n * n];
    k.par_chunks_mut(n.max(1)).enumerate().for_each(|(i, row)| {
        for (j, v) in row.iter_mut().enumerate() {
            *v = (-gamma * squared_distance(x.row(i), x.row(j))).exp();
        }
    });
    k
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoConfig {
    /// Maximal KKT violation accepted at convergence.
    pub tolerance: f64,
    /// Iteration budget in units of training-set size.
    pub max_passes: usize,
    /// Record the dual objective after every pair update.
    pub record_history: bool,
}

impl Default for SmoConfig {
    fn default() -> Self {
        Self {
            tolerance: 1e-3,
            max_passes: 200,
            record_history: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinarySvmModel<T> {
    pub support_vectors: Matrix<T>,
    /// `αᵢ yᵢ` for each support vector.
    pub dual_coef: Vec<T>,
    pub bias: T,
    pub kernel: KernelSpec<T>,
    /// Training-row index of each support vector.
    pub support_indices: Vec<usize>,
    pub converged: bool,
    pub iterations: usize,
    #[serde(skip)]
    pub dual_history: Vec<f64>,
}

impl<T: Scalar> BinarySvmModel<T> {
    /// `Σ αᵢyᵢ K(xᵢ, x) + b`.
    pub fn decision(&self, x: &[T]) -> Result<T> {
        if x.len() != self.support_vectors.cols() {
            return Err(Error::DimensionMismatch {
                expected: self.support_vectors.cols(),
                found: x.len(),
            });
        }
        let mut s = self.bias;
        for (sv, &coef) in self.support_vectors.row_iter().zip(&self.dual_coef) {
            s += coef * (-self.kernel.gamma * squared_distance(sv, x)).exp();
        }
        Ok(s)
    }

    pub fn n_features(&self) -> usize {
        self.support_vectors.cols()
    }
}

pub fn svm_decision<T: Scalar>(model: &BinarySvmModel<T>, x: &[T]) -> Result<T> {
    model.decision(x)
}

struct SmoResult<T> {
    alpha: Vec<T>,
    rho: T,
    converged: bool,
    iterations: usize,
    history: Vec<f64>,
}

/// Solves `min ½αᵀQα − eᵀα` s.t. `0 ≤ α ≤ c`, `yᵀα = 0` with `Q = yyᵀ∘K`,
/// choosing the maximal violating pair at each step.
fn smo_solve<T: Scalar>(k: &[T], y: &[T], c: T, cfg: &SmoConfig) -> SmoResult<T> {
    let n = y.len();
    let tau = T::of(1e-12);
    let tol = T::of(cfg.tolerance);
    let mut alpha = vec![T::zero(); n];
    let mut grad = vec![-T::one(); n];
    let max_iter = cfg.max_passes.saturating_mul(n.max(1));
    let mut history = Vec::new();
    let dual = |alpha: &[T], grad: &[T]| -> f64 {
        // D(α) = eᵀα − ½αᵀQα = −½ Σ αᵢ (Gᵢ − 1)
        -0.5 * alpha
            .iter()
            .zip(grad)
            .map(|(&a, &g)| (a * (g - T::one())).as_f64())
            .sum::<f64>()
    };
    if cfg.record_history {
        history.push(dual(&alpha, &grad));
    }
    let is_up = |a: T, yt: T| (yt > T::zero() && a < c) || (yt < T::zero() && a > T::zero());
    let is_low = |a: T, yt: T| (yt < T::zero() && a < c) || (yt > T::zero() && a > T::zero());

    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iter {
        let mut gmax = T::neg_infinity();
        let mut gmin = T::infinity();
        let (mut i, mut j) = (usize::MAX, usize::MAX);
        for t in 0..n {
            let v = -y[t] * grad[t];
            if is_up(alpha[t], y[t]) && v > gmax {
                gmax = v;
                i = t;
            }
            if is_low(alpha[t], y[t]) && v < gmin {
                gmin = v;
                j = t;
            }
        }
        if i == usize::MAX || j == usize::MAX || gmax - gmin < tol {
            converged = true;
            break;
        }
        iterations += 1;

        let (kii, kjj, kij) = (k[i * n + i], k[j * n + j], k[i * n + j]);
        let (old_i, old_j) = (alpha[i], alpha[j]);
        if y[i] != y[j] {
            let mut quad = kii + kjj + kij + kij;
            if quad <= T::zero() {
                quad = tau;
            }
            // With Q in label space Q_ij = y_i y_j K_ij = −K_ij here.
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > T::zero() {
                if alpha[j] < T::zero() {
                    alpha[j] = T::zero();
                    alpha[i] = diff;
                }
            } else if alpha[i] < T::zero() {
                alpha[i] = T::zero();
                alpha[j] = -diff;
            }
            if diff > T::zero() {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let mut quad = kii + kjj - kij - kij;
            if quad <= T::zero() {
                quad = tau;
            }
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < T::zero() {
                alpha[j] = T::zero();
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < T::zero() {
                alpha[i] = T::zero();
                alpha[j] = sum;
            }
        }
        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        for t in 0..n {
            grad[t] += y[t] * (y[i] * k[t * n + i] * di + y[j] * k[t * n + j] * dj);
        }
        if cfg.record_history {
            history.push(dual(&alpha, &grad));
        }
    }

    // ρ: mean of yᵢGᵢ over free vectors, else midpoint of the feasible interval.
    let (mut ub, mut lb) = (T::infinity(), T::neg_infinity());
    let (mut sum_free, mut n_free) = (T::zero(), 0usize);
    for t in 0..n {
        let yg = y[t] * grad[t];
        if alpha[t] >= c {
            if y[t] < T::zero() {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alpha[t] <= T::zero() {
            if y[t] > T::zero() {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            n_free += 1;
            sum_free += yg;
        }
    }
    let rho = if n_free > 0 {
        sum_free / T::of(n_free as f64)
    } else {
        (ub + lb) / T::of(2.0)
    };
    SmoResult {
        alpha,
        rho,
        converged,
        iterations,
        history,
    }
}

fn binary_from_solution<T: Scalar>(x: &Matrix<T>, y: &[T], kernel: KernelSpec<T>, sol: SmoResult<T>) -> BinarySvmModel<T> {
    let support_indices: Vec<usize> = (0..y.len()).filter(|&i| sol.alpha[i] > T::zero()).collect();
    if !sol.converged {
        log::warn!("SMO hit its iteration budget ({}) before convergence", sol.iterations);
    }
    BinarySvmModel {
        support_vectors: x.select_rows(&support_indices),
        dual_coef: support_indices.iter().map(|&i| sol.alpha[i] * y[i]).collect(),
        bias: -sol.rho,
        kernel,
        support_indices,
        converged: sol.converged,
        iterations: sol.iterations,
        dual_history: sol.history,
    }
}

fn check_binary_labels<T: Scalar>(x: &Matrix<T>, y: &[T]) -> Result<()> {
    if y.len() != x.rows() {
        return Err(Error::DimensionMismatch {
            expected: x.rows(),
            found: y.len(),
        });
    }
    let pos = y.iter().any(|&v| v == T::one());
    let neg = y.iter().any(|&v| v == -T::one());
    if y.iter().any(|&v| v != T::one() && v != -T::one()) {
        return Err(Error::InvalidParameter("binary labels must be ±1".into()));
    }
    if !(pos && neg) {
        return Err(Error::SingleClass);
    }
    Ok(())
}

/// Trains one binary machine on labels `±1`.
pub fn svm_fit_binary<T: Scalar>(x: &Matrix<T>, y: &[T], kernel: KernelSpec<T>, cfg: &SmoConfig) -> Result<BinarySvmModel<T>> {
    check_binary_labels(x, y)?;
    let k = gram(x, kernel.gamma);
    Ok(binary_from_solution(x, y, kernel, smo_solve(&k, y, kernel.c, cfg)))
}

/// One binary machine per class against the rest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OvrSvmModel<T> {
    pub machines: Vec<BinarySvmModel<T>>,
}

impl<T: Scalar> OvrSvmModel<T> {
    pub fn decisions(&self, x: &[T]) -> Result<Vec<T>> {
        self.machines.iter().map(|m| m.decision(x)).collect()
    }

    /// Class with the largest decision value; ties go to the lower index.
    pub fn predict_index(&self, x: &[T]) -> Result<usize> {
        Ok(argmax(&self.decisions(x)?))
    }

    /// Softmax of the decision values, used as a ranking score.
    pub fn scores(&self, x: &[T]) -> Result<Vec<T>> {
        Ok(softmax(&self.decisions(x)?))
    }

    pub fn validate(&self) -> Result<()> {
        if self.machines.len() != AbsenteeismClass::COUNT {
            return Err(Error::InvalidParameter(format!("expected {} machines, found {}", AbsenteeismClass::COUNT, self.machines.len())));
        }
        let d = self.n_features();
        for m in &self.machines {
            if m.dual_coef.len() != m.support_vectors.rows() || m.support_vectors.cols() != d || !m.bias.is_finite() {
                return Err(Error::InvalidParameter("inconsistent support vector machine".into()));
            }
            KernelSpec::new(m.kernel.gamma, m.kernel.c)?;
        }
        Ok(())
    }

    pub fn n_features(&self) -> usize {
        self.machines.first().map_or(0, BinarySvmModel::n_features)
    }
}

pub fn svm_predict<T: Scalar>(model: &OvrSvmModel<T>, x: &[T]) -> Result<AbsenteeismClass> {
    let i = model.predict_index(x)?;
    AbsenteeismClass::from_index(i).ok_or_else(|| Error::InvalidParameter(format!("class index {i}")))
}

fn fit_ovr_with_gram<T: Scalar>(x: &Matrix<T>, labels: &[usize], n_classes: usize, k: &[T], kernel: KernelSpec<T>, cfg: &SmoConfig) -> Result<OvrSvmModel<T>> {
    let machines = (0..n_classes)
        .into_par_iter()
        .map(|class| {
            let y: Vec<T> = labels
                .iter()
                .map(|&l| if l == class { T::one() } else { -T::one() })
                .collect();
            check_binary_labels(x, &y)?;
            Ok(binary_from_solution(x, &y, kernel, smo_solve(k, &y, kernel.c, cfg)))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(OvrSvmModel { machines })
}

pub fn svm_fit_ovr<T: Scalar>(x: &Matrix<T>, labels: &[usize], n_classes: usize, kernel: KernelSpec<T>, cfg: &SmoConfig) -> Result<OvrSvmModel<T>> {
    if labels.len() != x.rows() {
        return Err(Error::DimensionMismatch {
            expected: x.rows(),
            found: labels.len(),
        });
    }
    let k = gram(x, kernel.gamma);
    fit_ovr_with_gram(x, labels, n_classes, &k, kernel, cfg)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub gamma: f64,
    pub c: f64,
    /// Mean cross-validated weighted F1, or `None` when a fold failed.
    pub mean_f1: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSearchResult {
    pub best: KernelSpec<f64>,
    pub cells: Vec<GridCell>,
    /// Held-out positions of each fold, as indices into the searched matrix.
    pub folds: Vec<Vec<usize>>,
}

/// Exhaustive search over `(γ, c)` by stratified k-fold weighted F1. Ties
/// prefer the smaller `c`, then the smaller `γ`.
pub fn svm_grid_search<T: Scalar>(
    train: &EncodedMatrix<T>,
    folds: usize,
    gamma_grid: &[f64],
    c_grid: &[f64],
    seed: u64,
    cfg: &SmoConfig,
) -> Result<GridSearchResult> {
    if gamma_grid.is_empty() || c_grid.is_empty() {
        return Err(Error::InvalidParameter("grid-search grids must be non-empty".into()));
    }
    let fold_sets = stratified_folds(&train.labels, folds, seed)?;
    let labels = train.label_indices();
    let n = train.rows();

    let mut cs = c_grid.to_vec();
    cs.sort_by(f64::total_cmp);
    let mut gammas = gamma_grid.to_vec();
    gammas.sort_by(f64::total_cmp);

    // Fold-level work shares one Gram matrix per (fold, γ).
    let jobs: Vec<(usize, usize)> = (0..fold_sets.len())
        .flat_map(|f| (0..gammas.len()).map(move |g| (f, g)))
        .collect();
    let fold_scores: Vec<((usize, usize), Vec<Result<f64>>)> = jobs
        .par_iter()
        .map(|&(f, g)| {
            let held = &fold_sets[f];
            let mut in_fold = vec![false; n];
            for &i in held {
                in_fold[i] = true;
            }
            let fit_rows: Vec<usize> = (0..n).filter(|&i| !in_fold[i]).collect();
            let x_fit = train.values.select_rows(&fit_rows);
            let y_fit: Vec<usize> = fit_rows.iter().map(|&i| labels[i]).collect();
            let gamma = T::of(gammas[g]);
            let k = gram(&x_fit, gamma);
            let scores = cs
                .iter()
                .map(|&c| {
                    let kernel = KernelSpec::new(gamma, T::of(c))?;
                    let model = fit_ovr_with_gram(&x_fit, &y_fit, AbsenteeismClass::COUNT, &k, kernel, cfg)?;
                    let truth: Vec<usize> = held.iter().map(|&i| labels[i]).collect();
                    let pred: Vec<usize> = held
                        .iter()
                        .map(|&i| model.predict_index(train.row(i)))
                        .collect::<Result<_>>()?;
                    let cm = metrics::confusion(&truth, &pred, AbsenteeismClass::COUNT)?;
                    metrics::f1_weighted(&cm)
                })
                .collect();
            ((f, g), scores)
        })
        .collect();

    let mut cells = Vec::new();
    let mut best: Option<(f64, KernelSpec<f64>)> = None;
    for (ci, &c) in cs.iter().enumerate() {
        for (gi, &gamma) in gammas.iter().enumerate() {
            let mut sum = 0.0;
            let mut error = None;
            for ((_, g), scores) in &fold_scores {
                if *g != gi {
                    continue;
                }
                match &scores[ci] {
                    Ok(v) => sum += v,
                    Err(e) => error = Some(e.to_string()),
                }
            }
            let mean_f1 = error.is_none().then(|| sum / fold_sets.len() as f64);
            if let Some(e) = &error {
                log::warn!("grid cell gamma={gamma} c={c} skipped: {e}");
            }
            if let Some(m) = mean_f1 {
                if best.as_ref().is_none_or(|(b, _)| m > *b) {
                    best = Some((m, KernelSpec { gamma, c }));
                }
            }
            cells.push(GridCell {
                gamma,
                c,
                mean_f1,
                error,
            });
        }
    }
    let (_, best) = best.ok_or(Error::GridExhausted)?;
    Ok(GridSearchResult {
        best,
        cells,
        folds: fold_sets,
    })
}
