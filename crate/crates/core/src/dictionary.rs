//! Gaussian radial-basis dictionaries.
//!
//! An atom is `g_j(x) = exp(-|x - t_j|² / η²)` optionally divided by a
//! per-atom constant fixed at construction. The design matrix holds every
//! atom evaluated at the training inputs, one column per atom.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::Interval;
use crate::error::{Error, Result};

/// Atoms whose empirical norm falls below this are dead.
pub const DEAD_ATOM_NORM: f64 = 1e-12;

/// Midpoint grid `t_i = a + (i - 1/2)(b - a)/n`, `i = 1..=n`.
pub fn packing_centers(n: usize, a: f64, b: f64) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::invalid("dictionary needs at least one center"));
    }
    if !(a < b) {
        return Err(Error::invalid(format!(
            "packing interval requires a < b, got [{a}, {b}]"
        )));
    }
    let h = (b - a) / n as f64;
    Ok((0..n).map(|i| a + (i as f64 + 0.5) * h).collect())
}

/// What the atoms are as functions.
#[derive(Debug, Clone, PartialEq)]
pub enum AtomFamily {
    /// `exp(-|x - t_j|² / η²)`.
    Gaussian { centers: Vec<f64>, eta: f64 },
    /// Atoms known only through their values at the training points.
    Tabulated,
}

#[derive(Debug, Clone)]
pub struct Dictionary {
    family: AtomFamily,
    design: DMatrix<f64>,
    /// Empirical norms of the design columns as stored.
    atom_norms: Vec<f64>,
    /// Divisors applied to the raw Gaussians (1 when not normalized).
    scales: Vec<f64>,
    normalized: bool,
    dead: Vec<bool>,
    fingerprint: String,
}

fn gaussian(x: f64, center: f64, eta: f64) -> f64 {
    let d = x - center;
    (-(d * d) / (eta * eta)).exp()
}

fn empirical_norm_of_column(design: &DMatrix<f64>, j: usize) -> f64 {
    let m = design.nrows() as f64;
    (design.column(j).norm_squared() / m).sqrt()
}

pub fn build_rbf_dictionary(
    centers: &[f64],
    eta: f64,
    xs: &[f64],
    normalize: bool,
) -> Result<Dictionary> {
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(Error::invalid(format!(
            "RBF width must be positive, got {eta}"
        )));
    }
    if xs.is_empty() {
        return Err(Error::invalid("dictionary needs at least one sample point"));
    }
    if centers.is_empty() {
        return Err(Error::invalid("dictionary needs at least one center"));
    }
    let (m, n) = (xs.len(), centers.len());
    let mut design = DMatrix::from_fn(m, n, |i, j| gaussian(xs[i], centers[j], eta));

    let raw_norms: Vec<f64> = (0..n)
        .map(|j| empirical_norm_of_column(&design, j))
        .collect();
    let dead: Vec<bool> = raw_norms.iter().map(|&s| s < DEAD_ATOM_NORM).collect();
    let scales: Vec<f64> = raw_norms
        .iter()
        .zip(&dead)
        .map(|(&s, &is_dead)| if normalize && !is_dead { s } else { 1.0 })
        .collect();
    if normalize {
        for (j, &s) in scales.iter().enumerate() {
            design.column_mut(j).unscale_mut(s);
        }
    }
    let atom_norms: Vec<f64> = (0..n)
        .map(|j| empirical_norm_of_column(&design, j))
        .collect();
    debug_assert!(atom_norms.iter().all(|&s| s <= 1.0 + 1e-12));
    debug_assert!(design.iter().all(|v| v.is_finite()));

    let fingerprint = fingerprint(centers, eta, normalize, &scales);
    Ok(Dictionary {
        family: AtomFamily::Gaussian {
            centers: centers.to_vec(),
            eta,
        },
        design,
        atom_norms,
        scales,
        normalized: normalize,
        dead,
        fingerprint,
    })
}

fn fingerprint(centers: &[f64], eta: f64, normalized: bool, scales: &[f64]) -> String {
    let mut h = Sha256::new();
    h.update(b"gaussian-rbf/v1");
    h.update(eta.to_bits().to_le_bytes());
    h.update([normalized as u8]);
    h.update((centers.len() as u64).to_le_bytes());
    for c in centers {
        h.update(c.to_bits().to_le_bytes());
    }
    for s in scales {
        h.update(s.to_bits().to_le_bytes());
    }
    hex::encode(&h.finalize()[..8])
}

impl Dictionary {
    /// Dictionary given directly by its design matrix (one column per atom).
    ///
    /// Such atoms have no values away from the training points, so only
    /// in-sample quantities are available. Columns must satisfy `‖g_j‖_m <= 1`.
    pub fn from_design(design: DMatrix<f64>) -> Result<Dictionary> {
        if design.nrows() == 0 || design.ncols() == 0 {
            return Err(Error::invalid("design matrix must be nonempty"));
        }
        if design.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("design matrix has non-finite entries"));
        }
        let n = design.ncols();
        let atom_norms: Vec<f64> = (0..n)
            .map(|j| empirical_norm_of_column(&design, j))
            .collect();
        if let Some(j) = atom_norms.iter().position(|&s| s > 1.0 + 1e-12) {
            return Err(Error::invalid(format!(
                "atom {j} has empirical norm {} > 1",
                atom_norms[j]
            )));
        }
        let dead = atom_norms.iter().map(|&s| s < DEAD_ATOM_NORM).collect();
        let mut h = Sha256::new();
        h.update(b"tabulated/v1");
        h.update((design.nrows() as u64).to_le_bytes());
        h.update((n as u64).to_le_bytes());
        for v in design.iter() {
            h.update(v.to_bits().to_le_bytes());
        }
        Ok(Dictionary {
            family: AtomFamily::Tabulated,
            design,
            atom_norms,
            scales: vec![1.0; n],
            normalized: false,
            dead,
            fingerprint: hex::encode(&h.finalize()[..8]),
        })
    }

    pub fn n_atoms(&self) -> usize {
        self.design.ncols()
    }

    pub fn n_samples(&self) -> usize {
        self.design.nrows()
    }

    pub fn family(&self) -> &AtomFamily {
        &self.family
    }

    /// Centers of a Gaussian dictionary; empty for tabulated atoms.
    pub fn centers(&self) -> &[f64] {
        match &self.family {
            AtomFamily::Gaussian { centers, .. } => centers,
            AtomFamily::Tabulated => &[],
        }
    }

    /// Width of a Gaussian dictionary.
    pub fn eta(&self) -> Option<f64> {
        match self.family {
            AtomFamily::Gaussian { eta, .. } => Some(eta),
            AtomFamily::Tabulated => None,
        }
    }

    pub fn design(&self) -> &DMatrix<f64> {
        &self.design
    }

    pub fn atom_norms(&self) -> &[f64] {
        &self.atom_norms
    }

    pub fn scales(&self) -> &[f64] {
        &self.scales
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn is_dead(&self, j: usize) -> bool {
        self.dead[j]
    }

    pub fn dead_mask(&self) -> &[bool] {
        &self.dead
    }

    /// Stable identifier of the atom family (centers, width, scaling).
    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    fn out_of_sample(&self) -> Result<(&[f64], f64)> {
        match &self.family {
            AtomFamily::Gaussian { centers, eta } => Ok((centers, *eta)),
            AtomFamily::Tabulated => Err(Error::NotApplicable(
                "tabulated atoms have no values away from the training points".into(),
            )),
        }
    }

    /// Value of atom `j` at `x`, using the scaling frozen at construction.
    pub fn eval_atom(&self, j: usize, x: f64) -> Result<f64> {
        let (centers, eta) = self.out_of_sample()?;
        Ok(gaussian(x, centers[j], eta) / self.scales[j])
    }

    /// All atom values at `x`.
    pub fn eval_atoms(&self, x: f64) -> Result<Vec<f64>> {
        let (centers, eta) = self.out_of_sample()?;
        Ok(centers
            .iter()
            .zip(&self.scales)
            .map(|(&c, &s)| gaussian(x, c, eta) / s)
            .collect())
    }

    /// Atom values at many points, one row per point.
    pub fn eval_design(&self, xs: &[f64]) -> Result<DMatrix<f64>> {
        let (centers, eta) = self.out_of_sample()?;
        Ok(DMatrix::from_fn(xs.len(), self.n_atoms(), |i, j| {
            gaussian(xs[i], centers[j], eta) / self.scales[j]
        }))
    }
}

/// Recipe for rebuilding a dictionary on a different sample (e.g. per CV fold).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DictionarySpec {
    pub n_atoms: usize,
    pub eta: f64,
    pub normalize: bool,
    pub domain: Interval,
}

impl DictionarySpec {
    pub fn centers(&self) -> Result<Vec<f64>> {
        packing_centers(self.n_atoms, self.domain.lo, self.domain.hi)
    }

    pub fn build(&self, xs: &[f64]) -> Result<Dictionary> {
        build_rbf_dictionary(&self.centers()?, self.eta, xs, self.normalize)
    }
}
