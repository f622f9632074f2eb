//! Empirical inner-product geometry and the incremental orthogonal projector.
//!
//! Projection under `⟨·,·⟩_m` coincides with ordinary least squares on the
//! sample values because the `1/m` weight cancels in the projector, so the
//! factorization below works with plain Euclidean products. Only the reported
//! norms carry the `1/m` weight.

use nalgebra::{DVector, DVectorView};

use crate::error::{Error, Result};

/// Relative rank tolerance for accepting a new column.
pub const RANK_TOL: f64 = 1e-10;

/// `(1/m) Σ u_i v_i`.
pub fn emp_inner(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::invalid(format!(
            "inner product of vectors of length {} and {}",
            u.len(),
            v.len()
        )));
    }
    if u.is_empty() {
        return Err(Error::invalid("inner product of empty vectors"));
    }
    Ok(u.iter().zip(v).map(|(a, b)| a * b).sum::<f64>() / u.len() as f64)
}

/// `sqrt(⟨u,u⟩_m)`; zero for an empty vector.
pub fn emp_norm(u: &[f64]) -> f64 {
    if u.is_empty() {
        return 0.0;
    }
    (u.iter().map(|a| a * a).sum::<f64>() / u.len() as f64).sqrt()
}

/// The candidate column lies (numerically) in the span already selected.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RankReject;

/// Selected atoms, a thin QR factorization of their columns and the residual.
#[derive(Debug, Clone)]
pub struct GreedyState {
    selected: Vec<usize>,
    /// Orthonormal columns (Euclidean inner product on sample values).
    q: Vec<DVector<f64>>,
    /// Upper-triangular factor stored by column; column `j` has `j + 1` entries.
    r: Vec<Vec<f64>>,
    /// `Qᵀ y`.
    qty: Vec<f64>,
    residual: DVector<f64>,
    residual_norm_m: f64,
}

impl GreedyState {
    /// Empty model: `f_0 = 0`, `r_0 = y`.
    pub fn new(y: &DVector<f64>) -> Self {
        Self {
            selected: Vec::new(),
            q: Vec::new(),
            r: Vec::new(),
            qty: Vec::new(),
            residual: y.clone(),
            residual_norm_m: emp_norm(y.as_slice()),
        }
    }

    pub fn k(&self) -> usize {
        self.selected.len()
    }

    pub fn selected(&self) -> &[usize] {
        &self.selected
    }

    pub fn residual(&self) -> &DVector<f64> {
        &self.residual
    }

    pub fn residual_norm_m(&self) -> f64 {
        self.residual_norm_m
    }

    pub fn q_columns(&self) -> &[DVector<f64>] {
        &self.q
    }

    /// Diagonal of the triangular factor.
    pub fn r_diagonal(&self) -> Vec<f64> {
        self.r.iter().enumerate().map(|(j, col)| col[j]).collect()
    }

    /// Append atom `atom` with sample values `col` and re-project `y`.
    ///
    /// Classical Gram–Schmidt with one reorthogonalization pass. On
    /// [`RankReject`] the state is left untouched.
    pub fn project_append(
        &mut self,
        atom: usize,
        col: DVectorView<'_, f64>,
        y: &DVector<f64>,
    ) -> std::result::Result<(), RankReject> {
        let plain = col.norm();
        if !(plain > 0.0) {
            return Err(RankReject);
        }
        let k = self.q.len();
        let mut v = col.clone_owned();
        let mut h = vec![0.0; k];
        for _pass in 0..2 {
            let c: Vec<f64> = self.q.iter().map(|qj| qj.dot(&v)).collect();
            for (j, qj) in self.q.iter().enumerate() {
                v.axpy(-c[j], qj, 1.0);
                h[j] += c[j];
            }
        }
        let nv = v.norm();
        if nv < RANK_TOL * plain {
            return Err(RankReject);
        }
        v.unscale_mut(nv);
        h.push(nv);
        self.q.push(v);
        self.r.push(h);
        self.selected.push(atom);
        self.reproject(y);
        Ok(())
    }

    /// Residual `y - Q(Qᵀy)` from scratch.
    fn reproject(&mut self, y: &DVector<f64>) {
        self.qty = self.q.iter().map(|qj| qj.dot(y)).collect();
        let mut res = y.clone();
        for (qj, c) in self.q.iter().zip(&self.qty) {
            res.axpy(-c, qj, 1.0);
        }
        self.residual_norm_m = emp_norm(res.as_slice());
        self.residual = res;
    }

    /// Coefficients of the projection in the basis of the selected atoms.
    pub fn coefficients(&self) -> Vec<f64> {
        self.prefix_coefficients(self.k())
    }

    /// Coefficients of the projection onto the first `k` selected atoms.
    ///
    /// The triangular factor of a column prefix is the leading block, so every
    /// intermediate estimator of a fit is available from its final state.
    pub fn prefix_coefficients(&self, k: usize) -> Vec<f64> {
        let k = k.min(self.k());
        let mut a = self.qty[..k].to_vec();
        for i in (0..k).rev() {
            let mut s = a[i];
            for j in (i + 1)..k {
                s -= self.r[j][i] * a[j];
            }
            a[i] = s / self.r[i][i];
        }
        a
    }
}
