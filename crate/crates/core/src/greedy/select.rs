use nalgebra::DVector;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{SelectionRule, StoppingRule, TerminationReason};
use crate::data::rng_from_seed;
use crate::dictionary::Dictionary;
use crate::projection::{emp_norm, GreedyState};

/// `|⟨r, g_j⟩_m| / ‖r‖_m` for every eligible atom, `None` elsewhere.
///
/// Returns `None` when the residual vanishes: the fit interpolates exactly
/// and the caller stops.
pub fn correlation_ratios(
    residual: &DVector<f64>,
    d: &Dictionary,
    eligible: &[bool],
) -> Option<Vec<Option<f64>>> {
    let m = residual.len() as f64;
    let rn = emp_norm(residual.as_slice());
    if !(rn > 0.0) {
        return None;
    }
    let corr = d.design().tr_mul(residual);
    Some(
        corr.iter()
            .zip(eligible)
            .map(|(c, &ok)| ok.then(|| (c / m).abs() / rn))
            .collect(),
    )
}

/// Random state owned by one fit.
#[derive(Debug, Clone)]
pub struct Selector {
    rng: ChaCha8Rng,
    scan_order: Vec<usize>,
}

impl Selector {
    /// The scan order of `DeltaArbitrary` is a permutation drawn once here.
    pub fn new(rule: SelectionRule, n_atoms: usize, seed: u64) -> Self {
        let mut rng = rng_from_seed(seed);
        let mut scan_order: Vec<usize> = (0..n_atoms).collect();
        if rule == SelectionRule::DeltaArbitrary {
            scan_order.shuffle(&mut rng);
        }
        Self { rng, scan_order }
    }

    pub fn scan_order(&self) -> &[usize] {
        &self.scan_order
    }
}

/// Pick the next atom, or `None` when the rule's candidate set is empty.
///
/// With a threshold present every rule except `UniformRandom` only considers
/// active atoms (`ratio >= delta`); `KthMax` falls back to the weakest
/// candidate when fewer than `order` remain.
pub fn select_atom(
    rule: SelectionRule,
    ratios: &[Option<f64>],
    delta: Option<f64>,
    sel: &mut Selector,
) -> Option<usize> {
    let threshold = match rule {
        SelectionRule::UniformRandom => None,
        _ => delta,
    };
    let passes = |r: f64| threshold.is_none_or(|d| r >= d);
    let candidates: Vec<(usize, f64)> = ratios
        .iter()
        .enumerate()
        .filter_map(|(j, r)| r.filter(|&v| passes(v)).map(|v| (j, v)))
        .collect();
    if candidates.is_empty() {
        return None;
    }
    match rule {
        SelectionRule::ArgMax => {
            let mut best = candidates[0];
            for &c in &candidates[1..] {
                if c.1 > best.1 {
                    best = c;
                }
            }
            Some(best.0)
        }
        SelectionRule::KthMax { order } => {
            let mut ranked = candidates;
            ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            let pos = order.max(1).min(ranked.len()) - 1;
            Some(ranked[pos].0)
        }
        SelectionRule::UniformRandom | SelectionRule::DeltaRandom => {
            let i = sel.rng.random_range(0..candidates.len());
            Some(candidates[i].0)
        }
        SelectionRule::DeltaArbitrary => sel
            .scan_order
            .iter()
            .copied()
            .find(|&j| ratios.get(j).copied().flatten().is_some_and(passes)),
    }
}

/// Termination test evaluated before each selection.
pub fn should_stop(
    rule: StoppingRule,
    state: &GreedyState,
    y_norm_m: f64,
    active_exists: bool,
) -> Option<TerminationReason> {
    let k = state.k();
    match rule {
        StoppingRule::FixedK { k_max } => (k >= k_max).then_some(TerminationReason::KLimit),
        StoppingRule::ThresholdOnly { .. } => {
            (!active_exists).then_some(TerminationReason::NoActiveAtom)
        }
        StoppingRule::ThresholdPlusK { k_max, .. } => {
            if !active_exists {
                Some(TerminationReason::NoActiveAtom)
            } else if k >= k_max {
                Some(TerminationReason::KLimit)
            } else {
                None
            }
        }
        StoppingRule::Adaptive { delta } => {
            if state.residual_norm_m() <= delta * y_norm_m {
                Some(TerminationReason::RelativeResidual)
            } else if !active_exists {
                Some(TerminationReason::NoActiveAtom)
            } else {
                None
            }
        }
    }
}
