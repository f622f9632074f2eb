//! Dense regularized baselines over the same dictionary: ridge regression
//! through the normal equations and the Lasso through FISTA.
//!
//! Both objectives weight the data term by `1/m`:
//!
//! - ridge: `(1/m)‖y - G a‖² + λ‖a‖²`
//! - Lasso: `(1/m)‖y - G a‖² + λ‖a‖₁`

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::truncate;
use crate::dictionary::Dictionary;
use crate::error::{Error, Result};
use crate::greedy::Predictor;

/// Coefficients with magnitude at or below this do not count toward sparsity.
pub const NNZ_CUTOFF: f64 = 1e-8;
pub const DEFAULT_LASSO_TOL: f64 = 1e-8;
pub const DEFAULT_LASSO_MAX_ITER: usize = 20_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DenseKind {
    Ridge,
    Lasso,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverStats {
    pub iterations: usize,
    /// Ridge: `‖Gᵀ(y - Ga)/m - λa‖∞`; Lasso: proximal fixed-point residual.
    pub optimality_residual: f64,
    /// `false` when the iteration cap was hit before the tolerance.
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseModel {
    pub kind: DenseKind,
    pub coefficients: Vec<f64>,
    pub lambda: f64,
    pub nnz: usize,
    pub solver_stats: SolverStats,
    #[serde(rename = "M")]
    pub truncation_m: f64,
    pub dictionary_fingerprint: String,
}

impl DenseModel {
    fn new(
        kind: DenseKind,
        coefficients: Vec<f64>,
        lambda: f64,
        stats: SolverStats,
        y: &[f64],
        d: &Dictionary,
    ) -> Self {
        let nnz = coefficients.iter().filter(|a| a.abs() > NNZ_CUTOFF).count();
        Self {
            kind,
            coefficients,
            lambda,
            nnz,
            solver_stats: stats,
            truncation_m: y.iter().fold(0.0_f64, |acc, v| acc.max(v.abs())),
            dictionary_fingerprint: d.fingerprint().to_string(),
        }
    }

    pub fn with_truncation(mut self, level: f64) -> Self {
        self.truncation_m = level;
        self
    }
}

impl Predictor for DenseModel {
    fn predict_design(&self, d: &Dictionary, design: &DMatrix<f64>) -> Result<Vec<f64>> {
        if self.dictionary_fingerprint != d.fingerprint() {
            return Err(Error::FingerprintMismatch {
                expected: self.dictionary_fingerprint.clone(),
                found: d.fingerprint().to_string(),
            });
        }
        let a = DVector::from_column_slice(&self.coefficients);
        Ok((design * a)
            .iter()
            .map(|&v| truncate(v, self.truncation_m))
            .collect())
    }

    fn sparsity(&self) -> usize {
        self.nnz
    }
}

fn check_targets(d: &Dictionary, y: &[f64]) -> Result<()> {
    if y.len() != d.n_samples() {
        return Err(Error::invalid(format!(
            "{} targets for a dictionary on {} points",
            y.len(),
            d.n_samples()
        )));
    }
    Ok(())
}

/// Ridge regression through `(GᵀG/m + λI) a = Gᵀy/m` and a Cholesky factorization.
pub fn fit_ridge(d: &Dictionary, y: &[f64], lambda: f64) -> Result<DenseModel> {
    check_targets(d, y)?;
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::invalid(format!(
            "ridge weight must be >= 0, got {lambda}"
        )));
    }
    let m = d.n_samples() as f64;
    let g = d.design();
    let yv = DVector::from_column_slice(y);
    let mut system = g.tr_mul(g) / m;
    for i in 0..system.nrows() {
        system[(i, i)] += lambda;
    }
    let rhs = g.tr_mul(&yv) / m;
    let chol = system.clone().cholesky().ok_or_else(|| {
        Error::RankDeficient(format!(
            "ridge system not positive definite at λ = {lambda}"
        ))
    })?;
    let a = chol.solve(&rhs);
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::RankDeficient(format!(
            "ridge solve produced non-finite values at λ = {lambda}"
        )));
    }
    let foc = (&rhs - &system * &a).amax();
    let stats = SolverStats {
        iterations: 1,
        optimality_residual: foc,
        converged: true,
    };
    Ok(DenseModel::new(
        DenseKind::Ridge,
        a.as_slice().to_vec(),
        lambda,
        stats,
        y,
        d,
    ))
}

/// `sign(v) · max(|v| - τ, 0)`.
pub fn soft_threshold(v: f64, tau: f64) -> f64 {
    if v > tau {
        v - tau
    } else if v < -tau {
        v + tau
    } else {
        0.0
    }
}

/// Largest eigenvalue of a symmetric positive semidefinite matrix.
pub fn power_iteration(a: &DMatrix<f64>, rel_tol: f64, max_iter: usize) -> f64 {
    let n = a.nrows();
    if n == 0 {
        return 0.0;
    }
    let mut v = DVector::from_element(n, 1.0 / (n as f64).sqrt());
    let mut estimate = 0.0;
    for _ in 0..max_iter {
        let w = a * &v;
        let next = v.dot(&w);
        let norm = w.norm();
        if norm == 0.0 {
            return 0.0;
        }
        v = w / norm;
        if (next - estimate).abs() <= rel_tol * next.abs() {
            return next;
        }
        estimate = next;
    }
    estimate
}

/// Precomputed quadratic pieces of the Lasso objective on one dictionary.
///
/// Solving for many λ on the same data reuses the Gram matrix and the
/// Lipschitz constant.
#[derive(Debug, Clone)]
pub struct LassoProblem {
    gram: DMatrix<f64>,
    gty: DVector<f64>,
    y_sq: f64,
    lipschitz: f64,
    y: Vec<f64>,
}

impl LassoProblem {
    pub fn new(d: &Dictionary, y: &[f64]) -> Result<Self> {
        check_targets(d, y)?;
        let m = d.n_samples() as f64;
        let g = d.design();
        let yv = DVector::from_column_slice(y);
        let gram = g.tr_mul(g) / m;
        let gty = g.tr_mul(&yv) / m;
        let lipschitz = 2.0 * power_iteration(&gram, 1e-6, 100_000);
        Ok(Self {
            gram,
            gty,
            y_sq: yv.norm_squared() / m,
            lipschitz,
            y: y.to_vec(),
        })
    }

    /// `L`, the largest eigenvalue of `2GᵀG/m`.
    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    /// `‖Gᵀy/m‖∞`; every λ at or above twice this gives the zero solution.
    pub fn null_threshold(&self) -> f64 {
        2.0 * self.gty.amax()
    }

    pub fn objective(&self, a: &DVector<f64>, lambda: f64) -> f64 {
        let ga = &self.gram * a;
        a.dot(&ga) - 2.0 * a.dot(&self.gty) + self.y_sq + lambda * a.lp_norm(1)
    }

    fn gradient(&self, a: &DVector<f64>) -> DVector<f64> {
        (&self.gram * a - &self.gty) * 2.0
    }

    fn prox_step(&self, point: &DVector<f64>, grad: &DVector<f64>, lambda: f64) -> DVector<f64> {
        let l = self.lipschitz;
        let tau = lambda / l;
        point.zip_map(grad, |p, g| soft_threshold(p - g / l, tau))
    }

    /// `‖a - prox(a - ∇f(a)/L)‖∞`.
    pub fn fixed_point_residual(&self, a: &DVector<f64>, lambda: f64) -> f64 {
        let g = self.gradient(a);
        (a - self.prox_step(a, &g, lambda)).amax()
    }

    /// FISTA from `warm` (zero when absent).
    pub fn solve(
        &self,
        d: &Dictionary,
        lambda: f64,
        max_iter: usize,
        tol: f64,
        warm: Option<&[f64]>,
    ) -> Result<DenseModel> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::invalid(format!(
                "Lasso weight must be positive, got {lambda}"
            )));
        }
        let n = self.gty.len();
        if d.n_atoms() != n {
            return Err(Error::invalid(
                "dictionary does not match the Lasso problem",
            ));
        }
        let mut x = match warm {
            Some(w) if w.len() == n => DVector::from_column_slice(w),
            Some(w) => {
                return Err(Error::invalid(format!(
                    "warm start of length {} for {n} atoms",
                    w.len()
                )))
            }
            None => DVector::zeros(n),
        };
        if self.lipschitz == 0.0 {
            // all-zero design: the minimizer is zero
            let stats = SolverStats {
                iterations: 0,
                optimality_residual: 0.0,
                converged: true,
            };
            return Ok(DenseModel::new(
                DenseKind::Lasso,
                vec![0.0; n],
                lambda,
                stats,
                &self.y,
                d,
            ));
        }

        let mut momentum_point = x.clone();
        let mut t = 1.0_f64;
        let mut first: Option<DVector<f64>> = None;
        let mut iterations = 0;
        let mut residual = f64::INFINITY;
        let mut converged = false;
        for it in 1..=max_iter {
            iterations = it;
            let g = self.gradient(&momentum_point);
            let next = self.prox_step(&momentum_point, &g, lambda);
            // fixed-point residual at the momentum point, free to compute
            let proxy = (&next - &momentum_point).amax();
            let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
            let beta = (t - 1.0) / t_next;
            momentum_point = &next + (&next - &x) * beta;
            x = next;
            t = t_next;
            if it == 1 {
                first = Some(x.clone());
            }
            if proxy <= tol || it % 50 == 0 || it == max_iter {
                residual = self.fixed_point_residual(&x, lambda);
                if residual <= tol {
                    converged = true;
                    break;
                }
            }
        }
        if let Some(first) = first {
            if self.objective(&first, lambda) < self.objective(&x, lambda) {
                residual = self.fixed_point_residual(&first, lambda);
                x = first;
            }
        }
        let stats = SolverStats {
            iterations,
            optimality_residual: residual,
            converged,
        };
        Ok(DenseModel::new(
            DenseKind::Lasso,
            x.as_slice().to_vec(),
            lambda,
            stats,
            &self.y,
            d,
        ))
    }
}

/// Lasso by FISTA with step `1/L`, `L` from power iteration on `2GᵀG/m`.
pub fn fit_lasso_fista(
    d: &Dictionary,
    y: &[f64],
    lambda: f64,
    max_iter: usize,
    tol: f64,
) -> Result<DenseModel> {
    LassoProblem::new(d, y)?.solve(d, lambda, max_iter, tol, None)
}
