use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::select::{correlation_ratios, select_atom, should_stop, Selector};
use super::{GreedyConfig, SelectionRule, StoppingRule, TerminationReason, Truncation};
use crate::data::{truncate, SampleSet};
use crate::dictionary::Dictionary;
use crate::error::{Error, Result};
use crate::projection::{emp_norm, GreedyState};

/// Residuals this small relative to `‖y‖_m` count as exact interpolation.
pub const EXACT_FIT_REL: f64 = 1e-13;

/// Anything that predicts from a dictionary's atoms.
pub trait Predictor: Send + Sync {
    /// Predictions at the points whose atom values are the rows of `design`.
    /// `design` must come from [`Dictionary::eval_design`] on `d`.
    fn predict_design(&self, d: &Dictionary, design: &DMatrix<f64>) -> Result<Vec<f64>>;

    /// Number of atoms carrying a nonzero weight.
    fn sparsity(&self) -> usize;

    fn predict_points(&self, d: &Dictionary, xs: &[f64]) -> Result<Vec<f64>> {
        self.predict_design(d, &d.eval_design(xs)?)
    }
}

/// Sparse greedy estimator; predictions are truncated to `[-M, M]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimator {
    pub atom_indices: Vec<usize>,
    pub coefficients: Vec<f64>,
    pub k_final: usize,
    pub delta: Option<f64>,
    #[serde(rename = "M")]
    pub truncation_m: f64,
    pub termination_reason: TerminationReason,
    pub dictionary_fingerprint: String,
}

impl Estimator {
    fn check(&self, d: &Dictionary) -> Result<()> {
        if self.dictionary_fingerprint != d.fingerprint() {
            return Err(Error::FingerprintMismatch {
                expected: self.dictionary_fingerprint.clone(),
                found: d.fingerprint().to_string(),
            });
        }
        Ok(())
    }

    /// `Σ_j a_j g_j(x)` without truncation.
    pub fn predict_raw(&self, d: &Dictionary, x: f64) -> Result<f64> {
        self.check(d)?;
        let mut acc = 0.0;
        for (&j, a) in self.atom_indices.iter().zip(&self.coefficients) {
            acc += a * d.eval_atom(j, x)?;
        }
        Ok(acc)
    }

    /// Untruncated values at the training points of `d`.
    pub fn fitted_values(&self, d: &Dictionary) -> Result<Vec<f64>> {
        self.check(d)?;
        let mut out = DVector::zeros(d.n_samples());
        for (&j, &a) in self.atom_indices.iter().zip(&self.coefficients) {
            out.axpy(a, &d.design().column(j), 1.0);
        }
        Ok(out.as_slice().to_vec())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("estimator serializes")
    }
}

impl Predictor for Estimator {
    fn predict_design(&self, d: &Dictionary, design: &DMatrix<f64>) -> Result<Vec<f64>> {
        self.check(d)?;
        let mut out = DVector::zeros(design.nrows());
        for (&j, &a) in self.atom_indices.iter().zip(&self.coefficients) {
            out.axpy(a, &design.column(j), 1.0);
        }
        Ok(out
            .iter()
            .map(|&v| truncate(v, self.truncation_m))
            .collect())
    }

    fn sparsity(&self) -> usize {
        self.k_final
    }
}

/// `π_M(Σ_j a_j g_j(x))`.
pub fn predict(e: &Estimator, d: &Dictionary, x: f64) -> Result<f64> {
    Ok(truncate(e.predict_raw(d, x)?, e.truncation_m))
}

/// One pass of the greedy loop.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceStep {
    /// Atoms selected before this pass.
    pub k: usize,
    pub residual_norm_m: f64,
    /// Largest ratio over eligible atoms; `None` when none is eligible or the residual vanished.
    pub max_ratio: Option<f64>,
    /// Atom accepted in this pass and its ratio.
    pub accepted: Option<(usize, f64)>,
    /// Atoms rank-rejected in this pass.
    pub rejected: Vec<usize>,
}

/// A finished fit together with its final factorization and history.
#[derive(Debug, Clone)]
pub struct GreedyFit {
    pub estimator: Estimator,
    pub state: GreedyState,
    pub trace: Vec<TraceStep>,
    pub y_norm_m: f64,
    /// Atoms rank-rejected during the fit.
    pub blacklist: Vec<usize>,
}

impl GreedyFit {
    /// Estimator built from the first `k` selected atoms.
    pub fn prefix_estimator(&self, k: usize, reason: TerminationReason) -> Estimator {
        let k = k.min(self.state.k());
        Estimator {
            atom_indices: self.state.selected()[..k].to_vec(),
            coefficients: self.state.prefix_coefficients(k),
            k_final: k,
            delta: self.estimator.delta,
            truncation_m: self.estimator.truncation_m,
            termination_reason: reason,
            dictionary_fingerprint: self.estimator.dictionary_fingerprint.clone(),
        }
    }
}

pub fn fit_greedy(cfg: &GreedyConfig, z: &SampleSet, d: &Dictionary) -> Result<Estimator> {
    Ok(fit_greedy_traced(cfg, z, d)?.estimator)
}

/// Run the orthogonal greedy loop and keep the full history.
pub fn fit_greedy_traced(cfg: &GreedyConfig, z: &SampleSet, d: &Dictionary) -> Result<GreedyFit> {
    cfg.validate()?;
    let n = d.n_atoms();
    if n == 0 {
        return Err(Error::invalid("empty dictionary"));
    }
    if d.n_samples() != z.len() {
        return Err(Error::invalid(format!(
            "dictionary built on {} points but the sample has {}",
            d.n_samples(),
            z.len()
        )));
    }
    let y = DVector::from_column_slice(&z.ys);
    let y_norm = emp_norm(&z.ys);
    let delta = cfg.stopping.delta();
    let mut state = GreedyState::new(&y);
    let mut eligible: Vec<bool> = d.dead_mask().iter().map(|dead| !dead).collect();
    let mut selector = Selector::new(cfg.selection, n, cfg.seed);
    let mut trace = Vec::new();
    let mut blacklist = Vec::new();

    let reason = 'outer: loop {
        let rn = state.residual_norm_m();
        let mut step = TraceStep {
            k: state.k(),
            residual_norm_m: rn,
            max_ratio: None,
            accepted: None,
            rejected: Vec::new(),
        };
        if rn <= EXACT_FIT_REL * y_norm {
            trace.push(step);
            break TerminationReason::RelativeResidual;
        }
        let Some(mut ratios) = correlation_ratios(state.residual(), d, &eligible) else {
            trace.push(step);
            break TerminationReason::RelativeResidual;
        };
        step.max_ratio = ratios.iter().flatten().copied().reduce(f64::max);
        let active_exists = match (delta, step.max_ratio) {
            (Some(dl), Some(mr)) => mr >= dl,
            (None, Some(_)) => true,
            (_, None) => false,
        };
        if let Some(reason) = should_stop(cfg.stopping, &state, y_norm, active_exists) {
            trace.push(step);
            break reason;
        }
        if step.max_ratio.is_none() {
            trace.push(step);
            break TerminationReason::DictionaryExhausted;
        }
        loop {
            let Some(j) = select_atom(cfg.selection, &ratios, delta, &mut selector) else {
                trace.push(step);
                break 'outer if delta.is_some() {
                    TerminationReason::NoActiveAtom
                } else {
                    TerminationReason::DictionaryExhausted
                };
            };
            let ratio = ratios[j].unwrap_or(0.0);
            eligible[j] = false;
            match state.project_append(j, d.design().column(j), &y) {
                Ok(()) => {
                    step.accepted = Some((j, ratio));
                    break;
                }
                Err(_) => {
                    ratios[j] = None;
                    step.rejected.push(j);
                    blacklist.push(j);
                }
            }
        }
        trace.push(step);
    };

    let estimator = Estimator {
        atom_indices: state.selected().to_vec(),
        coefficients: state.coefficients(),
        k_final: state.k(),
        delta,
        truncation_m: cfg.truncation.resolve(&z.ys),
        termination_reason: reason,
        dictionary_fingerprint: d.fingerprint().to_string(),
    };
    Ok(GreedyFit {
        estimator,
        state,
        trace,
        y_norm_m: y_norm,
        blacklist,
    })
}

/// δ-TOGL with arg-max selection for many thresholds from one fit.
///
/// Arg-max picks the same atom for every threshold it passes and both
/// terminal conditions are monotone in δ, so the fit at the smallest δ visits
/// every state the larger thresholds stop in. Output order follows `deltas`.
pub fn delta_sweep_argmax(
    z: &SampleSet,
    d: &Dictionary,
    deltas: &[f64],
    truncation: Truncation,
) -> Result<Vec<Estimator>> {
    let Some(delta_min) = deltas.iter().copied().reduce(f64::min) else {
        return Ok(Vec::new());
    };
    let cfg = GreedyConfig::new(
        SelectionRule::ArgMax,
        StoppingRule::Adaptive { delta: delta_min },
    )
    .with_truncation(truncation);
    for &dl in deltas {
        StoppingRule::Adaptive { delta: dl }.validate()?;
    }
    let fit = fit_greedy_traced(&cfg, z, d)?;
    let yn = fit.y_norm_m;
    Ok(deltas
        .iter()
        .map(|&dl| {
            let (k, reason) = fit
                .trace
                .iter()
                .find_map(|s| {
                    if s.residual_norm_m <= EXACT_FIT_REL * yn || s.residual_norm_m <= dl * yn {
                        Some((s.k, TerminationReason::RelativeResidual))
                    } else if s.accepted.is_none_or(|(_, ratio)| ratio < dl) {
                        Some((s.k, TerminationReason::NoActiveAtom))
                    } else {
                        None
                    }
                })
                .expect("trace ends in a stop that holds for every larger threshold");
            let mut e = fit.prefix_estimator(k, reason);
            e.delta = Some(dl);
            e
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{gen_samples, Interval, TargetFunction};
    use crate::dictionary::{build_rbf_dictionary, packing_centers};
    use crate::greedy::StoppingRule;
    use nalgebra::DMatrix;

    /// Two-point sample y = [3, 1] with atoms [1, 1] and [1, -1].
    fn toy_tabulated() -> (SampleSet, Dictionary) {
        let z = SampleSet::new(
            vec![0.0, 1.0],
            vec![3.0, 1.0],
            Some(0.0),
            0,
            Interval::new(-1.0, 2.0).unwrap(),
        )
        .unwrap();
        let d =
            Dictionary::from_design(DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, -1.0])).unwrap();
        (z, d)
    }

    fn toy() -> (SampleSet, Dictionary) {
        let z = SampleSet::new(
            vec![-1.0, 1.0],
            vec![3.0, 1.0],
            Some(0.0),
            0,
            Interval::new(-2.0, 2.0).unwrap(),
        )
        .unwrap();
        let d = build_rbf_dictionary(&[-1.0, 1.0], 1.0, &z.xs, false).unwrap();
        (z, d)
    }

    #[test]
    fn worked_example_small_threshold() {
        let (z, d) = toy_tabulated();
        let cfg = GreedyConfig::new(SelectionRule::ArgMax, StoppingRule::Adaptive { delta: 0.1 });
        let fit = fit_greedy_traced(&cfg, &z, &d).unwrap();
        let e = &fit.estimator;
        assert_eq!(e.k_final, 2);
        assert_eq!(e.atom_indices, vec![0, 1]);
        assert!(fit.state.residual().norm() < 1e-14);
        assert!((e.coefficients[0] - 2.0).abs() < 1e-14 && (e.coefficients[1] - 1.0).abs() < 1e-14);
        assert_eq!(e.termination_reason, TerminationReason::RelativeResidual);
        // first pass: ratios 2/√5 and 1/√5
        assert!((fit.trace[0].max_ratio.unwrap() - 2.0 / 5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn worked_example_harsh_threshold() {
        let (z, d) = toy_tabulated();
        let cfg = GreedyConfig::new(SelectionRule::ArgMax, StoppingRule::Adaptive { delta: 0.5 });
        // after one atom ‖r‖_m = 1 <= 0.5·√5
        let e = fit_greedy(&cfg, &z, &d).unwrap();
        assert_eq!(e.k_final, 1);
        assert_eq!(e.termination_reason, TerminationReason::RelativeResidual);

        // the threshold alone keeps going: atom 1 has ratio 1 against r = [1, -1]
        let strict = GreedyConfig::new(
            SelectionRule::ArgMax,
            StoppingRule::ThresholdOnly { delta: 0.5 },
        );
        assert_eq!(fit_greedy(&strict, &z, &d).unwrap().k_final, 2);
        let single = Dictionary::from_design(DMatrix::from_row_slice(2, 1, &[1.0, 1.0])).unwrap();
        let e = fit_greedy(&strict, &z, &single).unwrap();
        assert_eq!(
            (e.k_final, e.termination_reason),
            (1, TerminationReason::NoActiveAtom)
        );
    }

    #[test]
    fn full_span_interpolates() {
        let (z, d) = toy();
        let cfg = GreedyConfig::new(SelectionRule::ArgMax, StoppingRule::Adaptive { delta: 0.1 });
        let e = fit_greedy(&cfg, &z, &d).unwrap();
        assert_eq!(e.k_final, 2);
        assert_eq!(e.termination_reason, TerminationReason::RelativeResidual);
        let fitted = e.fitted_values(&d).unwrap();
        assert!((fitted[0] - 3.0).abs() < 1e-12 && (fitted[1] - 1.0).abs() < 1e-12);
        for (i, &x) in z.xs.iter().enumerate() {
            assert!((e.predict_raw(&d, x).unwrap() - fitted[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn fixed_k_exhausts_dictionary() {
        let (z, d) = toy_tabulated();
        let y = SampleSet {
            ys: vec![1.0, 1.0],
            ..z.clone()
        };
        let cfg = GreedyConfig::new(
            SelectionRule::KthMax { order: 2 },
            StoppingRule::FixedK { k_max: 5 },
        );
        // y lies on the first atom; the second max picks [1,-1] (ratio 0) first
        let e = fit_greedy(&cfg, &y, &d).unwrap();
        assert_eq!(e.k_final, 2);
        assert_eq!(e.termination_reason, TerminationReason::RelativeResidual);

        let dup =
            Dictionary::from_design(DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0])).unwrap();
        let cfg = GreedyConfig::new(SelectionRule::ArgMax, StoppingRule::FixedK { k_max: 5 });
        let fit = fit_greedy_traced(&cfg, &z, &dup).unwrap();
        assert_eq!(fit.estimator.k_final, 1);
        assert_eq!(fit.blacklist, vec![1]);
        assert_eq!(
            fit.estimator.termination_reason,
            TerminationReason::DictionaryExhausted
        );
    }

    #[test]
    fn empty_estimator_predicts_zero_and_clamps() {
        let (z, d) = toy();
        let mut e = fit_greedy(
            &GreedyConfig::new(SelectionRule::ArgMax, StoppingRule::FixedK { k_max: 1 }),
            &z,
            &d,
        )
        .unwrap();
        e.atom_indices.clear();
        e.coefficients.clear();
        e.k_final = 0;
        assert_eq!(predict(&e, &d, 0.3).unwrap(), 0.0);

        e.atom_indices = vec![0];
        e.coefficients = vec![2.0 * e.truncation_m];
        // at the center the atom is 1, so the raw value is 2M
        assert_eq!(predict(&e, &d, -1.0).unwrap(), e.truncation_m);
    }

    #[test]
    fn fingerprint_mismatch_is_rejected() {
        let (z, d) = toy();
        let e = fit_greedy(
            &GreedyConfig::new(SelectionRule::ArgMax, StoppingRule::FixedK { k_max: 1 }),
            &z,
            &d,
        )
        .unwrap();
        let other = build_rbf_dictionary(&[-1.0, 1.0], 2.0, &z.xs, false).unwrap();
        assert!(matches!(
            predict(&e, &other, 0.0),
            Err(Error::FingerprintMismatch { .. })
        ));
    }

    #[test]
    fn sweep_matches_individual_fits() {
        let t = TargetFunction::sinc();
        let z = gen_samples(&t, 200, 0.1, 17).unwrap();
        let d = build_rbf_dictionary(&packing_centers(60, -3.2, 3.2).unwrap(), 1.0, &z.xs, false)
            .unwrap();
        let deltas = crate::modelsel::log_grid(1e-6, 0.5, 25).unwrap().values;
        let swept = delta_sweep_argmax(&z, &d, &deltas, Truncation::Auto).unwrap();
        for (dl, e) in deltas.iter().zip(&swept) {
            let cfg =
                GreedyConfig::new(SelectionRule::ArgMax, StoppingRule::Adaptive { delta: *dl });
            let direct = fit_greedy(&cfg, &z, &d).unwrap();
            assert_eq!(e.atom_indices, direct.atom_indices, "delta {dl}");
            assert_eq!(
                e.termination_reason, direct.termination_reason,
                "delta {dl}"
            );
            for (a, b) in e.coefficients.iter().zip(&direct.coefficients) {
                assert!((a - b).abs() <= 1e-9 * b.abs().max(1.0));
            }
        }
    }

    #[test]
    fn estimator_json_fields() {
        let (z, d) = toy();
        let e = fit_greedy(
            &GreedyConfig::new(SelectionRule::ArgMax, StoppingRule::FixedK { k_max: 1 }),
            &z,
            &d,
        )
        .unwrap();
        let v: serde_json::Value = serde_json::from_str(&e.to_json()).unwrap();
        for key in [
            "atom_indices",
            "coefficients",
            "k_final",
            "delta",
            "M",
            "termination_reason",
            "dictionary_fingerprint",
        ] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
        let back: Estimator = serde_json::from_str(&e.to_json()).unwrap();
        assert_eq!(back, e);
    }
}
