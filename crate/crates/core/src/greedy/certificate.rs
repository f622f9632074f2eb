use nalgebra::DVector;

use super::{Estimator, TerminationReason};
use crate::data::SampleSet;
use crate::dictionary::Dictionary;
use crate::error::{Error, Result};
use crate::projection::emp_norm;

/// Check the hypothesis-error bound of a threshold-terminated estimator:
///
/// `‖y - f‖_m <= ‖y - h‖_m + δ Σ_j |h_j|` for `h = Σ_j h_j g_j`.
///
/// Holds whenever the fit stopped because no atom was active or because the
/// relative residual dropped below δ, and the atoms satisfy `‖g_j‖_m <= 1`.
pub fn threshold_certificate(
    e: &Estimator,
    z: &SampleSet,
    d: &Dictionary,
    h_coeffs: &[f64],
) -> Result<bool> {
    match e.termination_reason {
        TerminationReason::NoActiveAtom | TerminationReason::RelativeResidual => {}
        other => {
            return Err(Error::NotApplicable(format!(
                "certificate needs a threshold stop, estimator ended with {other:?}"
            )))
        }
    }
    let Some(delta) = e.delta else {
        return Err(Error::NotApplicable(
            "estimator carries no threshold".into(),
        ));
    };
    if h_coeffs.len() != d.n_atoms() {
        return Err(Error::invalid(format!(
            "{} coefficients for {} atoms",
            h_coeffs.len(),
            d.n_atoms()
        )));
    }
    let y = DVector::from_column_slice(&z.ys);
    let f = DVector::from_vec(e.fitted_values(d)?);
    let h = d.design() * DVector::from_column_slice(h_coeffs);
    let lhs = emp_norm((&y - &f).as_slice());
    let l1: f64 = h_coeffs.iter().map(|a| a.abs()).sum();
    let rhs = emp_norm((&y - &h).as_slice()) + delta * l1;
    // rounding slack only
    Ok(lhs <= rhs * (1.0 + 1e-10) + 1e-14 * emp_norm(&z.ys))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{gen_samples, TargetFunction};
    use crate::dictionary::{build_rbf_dictionary, packing_centers};
    use crate::greedy::{fit_greedy, GreedyConfig, SelectionRule, StoppingRule};

    fn setup(delta: f64) -> (SampleSet, Dictionary, Estimator) {
        let z = gen_samples(&TargetFunction::sinc(), 40, 0.2, 5).unwrap();
        let d = build_rbf_dictionary(&packing_centers(12, -3.2, 3.2).unwrap(), 1.0, &z.xs, false)
            .unwrap();
        let cfg = GreedyConfig::new(SelectionRule::ArgMax, StoppingRule::Adaptive { delta });
        let e = fit_greedy(&cfg, &z, &d).unwrap();
        (z, d, e)
    }

    #[test]
    fn zero_comparator_always_passes() {
        let (z, d, e) = setup(0.05);
        assert!(threshold_certificate(&e, &z, &d, &[0.0; 12]).unwrap());
    }

    #[test]
    fn interpolant_comparator() {
        // y lies exactly in the span of three atoms
        let xs: Vec<f64> = (0..30).map(|i| -3.0 + 0.2 * i as f64).collect();
        let d = build_rbf_dictionary(&packing_centers(10, -3.2, 3.2).unwrap(), 1.0, &xs, false)
            .unwrap();
        let mut h = vec![0.0; 10];
        h[2] = 0.7;
        h[5] = -0.4;
        h[8] = 1.1;
        let ys = (d.design() * DVector::from_column_slice(&h))
            .as_slice()
            .to_vec();
        let z = SampleSet::new(
            xs,
            ys,
            Some(0.0),
            0,
            crate::data::Interval::new(-3.2, 3.2).unwrap(),
        )
        .unwrap();
        let delta = 0.01;
        let cfg = GreedyConfig::new(SelectionRule::ArgMax, StoppingRule::Adaptive { delta });
        let e = fit_greedy(&cfg, &z, &d).unwrap();
        let r = emp_norm(
            &z.ys
                .iter()
                .zip(e.fitted_values(&d).unwrap())
                .map(|(a, b)| a - b)
                .collect::<Vec<_>>(),
        );
        assert!(r <= delta * 2.2 + 1e-12);
        assert!(threshold_certificate(&e, &z, &d, &h).unwrap());
    }

    #[test]
    fn k_limit_is_not_applicable() {
        let (z, d, _) = setup(0.05);
        let cfg = GreedyConfig::new(SelectionRule::ArgMax, StoppingRule::FixedK { k_max: 2 });
        let e = fit_greedy(&cfg, &z, &d).unwrap();
        assert!(matches!(
            threshold_certificate(&e, &z, &d, &[0.0; 12]),
            Err(Error::NotApplicable(_))
        ));
    }
}
