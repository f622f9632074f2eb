//! Greedy metrics, stopping rules and the orthogonal greedy fit drivers.
//!
//! Every learner here shares the iteration strategy: after an atom is chosen
//! the targets are projected onto the span of all chosen atoms. The learners
//! differ in how the next atom is chosen ([`SelectionRule`]) and when to stop
//! ([`StoppingRule`]):
//!
//! | learner | selection | stopping |
//! |---------|-----------|----------|
//! | OGL1/2/3 | `ArgMax` / `KthMax(2)` / `KthMax(3)` | `FixedK` |
//! | OGLR | `UniformRandom` | `FixedK` |
//! | TOGL | any rule | `ThresholdPlusK` |
//! | δ-TOGL | any rule | `Adaptive` |
//!
//! The greedy metric is the ratio `|⟨r, g⟩_m| / ‖r‖_m`; an atom whose ratio is
//! at least δ is *active*.

mod certificate;
mod fit;
mod select;

pub use certificate::threshold_certificate;
pub use fit::{
    delta_sweep_argmax, fit_greedy, fit_greedy_traced, predict, Estimator, GreedyFit, Predictor,
    TraceStep,
};
pub use select::{correlation_ratios, select_atom, should_stop, Selector};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How the next atom is picked from the eligible ones.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "kebab-case")]
pub enum SelectionRule {
    /// Largest ratio (steepest descent).
    ArgMax,
    /// `order`-th largest ratio, `order >= 2`.
    KthMax { order: usize },
    /// Uniform over eligible atoms, ignoring any threshold.
    UniformRandom,
    /// First active atom in a per-fit seeded scan order.
    DeltaArbitrary,
    /// Uniform over the active atoms.
    DeltaRandom,
}

impl SelectionRule {
    pub fn validate(&self) -> Result<()> {
        match self {
            SelectionRule::KthMax { order } if *order < 2 => Err(Error::Config(format!(
                "k-th max selection needs order >= 2, got {order}"
            ))),
            _ => Ok(()),
        }
    }

    pub fn needs_threshold(&self) -> bool {
        matches!(
            self,
            SelectionRule::DeltaArbitrary | SelectionRule::DeltaRandom
        )
    }

    pub fn is_random(&self) -> bool {
        matches!(
            self,
            SelectionRule::UniformRandom
                | SelectionRule::DeltaArbitrary
                | SelectionRule::DeltaRandom
        )
    }
}

/// When the fit terminates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "kebab-case")]
pub enum StoppingRule {
    /// Stop after `k_max` atoms.
    FixedK { k_max: usize },
    /// Stop when no atom is active.
    ThresholdOnly { delta: f64 },
    /// Stop when no atom is active or after `k_max` atoms.
    ThresholdPlusK { delta: f64, k_max: usize },
    /// Stop when no atom is active or `‖r‖_m <= δ ‖y‖_m`.
    Adaptive { delta: f64 },
}

impl StoppingRule {
    pub fn delta(&self) -> Option<f64> {
        match *self {
            StoppingRule::FixedK { .. } => None,
            StoppingRule::ThresholdOnly { delta }
            | StoppingRule::ThresholdPlusK { delta, .. }
            | StoppingRule::Adaptive { delta } => Some(delta),
        }
    }

    pub fn k_max(&self) -> Option<usize> {
        match *self {
            StoppingRule::FixedK { k_max } | StoppingRule::ThresholdPlusK { k_max, .. } => {
                Some(k_max)
            }
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(delta) = self.delta() {
            if !(delta > 0.0 && delta <= 0.5) {
                return Err(Error::Config(format!(
                    "threshold must lie in (0, 1/2], got {delta}"
                )));
            }
        }
        if let Some(k) = self.k_max() {
            if k == 0 {
                return Err(Error::Config("iteration cap must be at least 1".into()));
            }
        }
        Ok(())
    }
}

/// Truncation level used at prediction time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Truncation {
    /// `max |y_i|` over the training targets.
    #[default]
    Auto,
    Level(f64),
}

impl Truncation {
    pub fn resolve(&self, ys: &[f64]) -> f64 {
        match *self {
            Truncation::Level(m) => m,
            Truncation::Auto => ys.iter().fold(0.0_f64, |acc, y| acc.max(y.abs())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GreedyConfig {
    pub selection: SelectionRule,
    pub stopping: StoppingRule,
    #[serde(default)]
    pub truncation: Truncation,
    #[serde(default)]
    pub seed: u64,
}

impl GreedyConfig {
    pub fn new(selection: SelectionRule, stopping: StoppingRule) -> Self {
        Self {
            selection,
            stopping,
            truncation: Truncation::Auto,
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_truncation(mut self, truncation: Truncation) -> Self {
        self.truncation = truncation;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.selection.validate()?;
        self.stopping.validate()?;
        if self.selection.needs_threshold() && self.stopping.delta().is_none() {
            return Err(Error::Config(
                "threshold selection rules need a stopping rule carrying δ".into(),
            ));
        }
        if let Truncation::Level(m) = self.truncation {
            if !(m > 0.0) {
                return Err(Error::Config(format!(
                    "truncation level must be positive, got {m}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TerminationReason {
    NoActiveAtom,
    RelativeResidual,
    KLimit,
    DictionaryExhausted,
}
