use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::Interval;
use crate::dictionary::DictionarySpec;
use crate::error::{Error, Result};
use crate::greedy::{GreedyConfig, SelectionRule, StoppingRule};
use crate::modelsel::{log_grid, Grid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    OglCompare,
    ToglCompare,
    DeltaTogl,
    CostProfile,
    PhaseDiagram,
    MethodTable,
    Fit,
}

impl ExperimentKind {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::OglCompare => "ogl-compare",
            ExperimentKind::ToglCompare => "togl-compare",
            ExperimentKind::DeltaTogl => "delta-togl",
            ExperimentKind::CostProfile => "cost-profile",
            ExperimentKind::PhaseDiagram => "phase-diagram",
            ExperimentKind::MethodTable => "method-table",
            ExperimentKind::Fit => "fit",
        }
    }
}

/// Whether tuned parameters are picked on the test set or by cross-validation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    #[default]
    Oracle,
    Cv,
}

impl Mode {
    pub fn name(&self) -> &'static str {
        match self {
            Mode::Oracle => "oracle",
            Mode::Cv => "cv",
        }
    }
}

/// Atom choice shared by the OGL, TOGL and δ-TOGL families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    /// Largest ratio.
    First,
    Second,
    Third,
    /// Uniform among the candidates.
    Random,
    /// First active atom in a seeded scan order.
    Arbitrary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Method {
    Ogl(Variant),
    Togl(Variant),
    DeltaTogl(Variant),
    Ridge,
    Lasso,
}

impl Method {
    pub fn selection(&self) -> Option<SelectionRule> {
        let (threshold, v) = match *self {
            Method::Ogl(v) => (false, v),
            Method::Togl(v) | Method::DeltaTogl(v) => (true, v),
            Method::Ridge | Method::Lasso => return None,
        };
        Some(match v {
            Variant::First => SelectionRule::ArgMax,
            Variant::Second => SelectionRule::KthMax { order: 2 },
            Variant::Third => SelectionRule::KthMax { order: 3 },
            Variant::Random if threshold => SelectionRule::DeltaRandom,
            Variant::Random => SelectionRule::UniformRandom,
            Variant::Arbitrary => SelectionRule::DeltaArbitrary,
        })
    }

    pub fn is_greedy(&self) -> bool {
        self.selection().is_some()
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (family, v) = match *self {
            Method::Ogl(v) => ("ogl", v),
            Method::Togl(v) => ("togl", v),
            Method::DeltaTogl(v) => ("delta-togl", v),
            Method::Ridge => return f.write_str("ridge"),
            Method::Lasso => return f.write_str("lasso"),
        };
        let suffix = match v {
            Variant::First => "1",
            Variant::Second => "2",
            Variant::Third => "3",
            Variant::Random => "r",
            Variant::Arbitrary => "a",
        };
        write!(f, "{family}{suffix}")
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("unknown method {s:?}"));
        match s {
            "ridge" => return Ok(Method::Ridge),
            "lasso" => return Ok(Method::Lasso),
            _ => {}
        }
        let cut = s
            .len()
            .checked_sub(1)
            .filter(|&i| s.is_char_boundary(i))
            .ok_or_else(bad)?;
        let (family, suffix) = s.split_at(cut);
        let v = match suffix {
            "1" => Variant::First,
            "2" => Variant::Second,
            "3" => Variant::Third,
            "r" => Variant::Random,
            "a" => Variant::Arbitrary,
            _ => return Err(bad()),
        };
        match family {
            "ogl" if v != Variant::Arbitrary => Ok(Method::Ogl(v)),
            "togl" => Ok(Method::Togl(v)),
            "delta-togl" => Ok(Method::DeltaTogl(v)),
            _ => Err(bad()),
        }
    }
}

impl TryFrom<String> for Method {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Method> for String {
    fn from(m: Method) -> String {
        m.to_string()
    }
}

/// Log-spaced grid recipe.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogGridSpec {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

impl LogGridSpec {
    pub fn grid(&self) -> Result<Grid> {
        log_grid(self.lo, self.hi, self.count).map_err(|e| Error::Config(e.to_string()))
    }
}

/// Settings of every experiment; unset keys take the study's defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    /// When present, must match the subcommand.
    pub kind: Option<ExperimentKind>,
    pub m_train: usize,
    pub m_test: usize,
    pub n_atoms: usize,
    pub eta: f64,
    pub normalize: bool,
    /// Domain of the target and of the dictionary centers.
    pub domain: Option<Interval>,
    pub sigmas: Vec<f64>,
    pub delta_grid: LogGridSpec,
    pub k_min: usize,
    pub k_max: usize,
    pub trials: usize,
    pub seed: u64,
    /// Parameter selection; cross-validation by default for `method-table`
    /// and `phase-diagram`, the test set otherwise.
    pub mode: Option<Mode>,
    pub cv_folds: usize,
    /// Add noise to the test targets as well (default: score against the clean target).
    pub test_noise: bool,
    pub ridge_grid: LogGridSpec,
    pub lasso_grid: LogGridSpec,
    pub lasso_max_iter: usize,
    pub lasso_tol: f64,
    pub phase_m_values: Vec<usize>,
    pub phase_accuracies: Vec<f64>,
    pub n_atoms_list: Vec<usize>,
    /// Methods to run; each experiment has its own default set.
    pub methods: Option<Vec<Method>>,
    /// Learner used by `fit`.
    pub fit: GreedyConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            kind: None,
            m_train: 1000,
            m_test: 1000,
            n_atoms: 300,
            eta: 1.0,
            normalize: false,
            domain: None,
            sigmas: vec![0.1, 0.5, 1.0, 2.0],
            delta_grid: LogGridSpec {
                lo: 1e-6,
                hi: 0.5,
                count: 100,
            },
            k_min: 1,
            k_max: 40,
            trials: 10,
            seed: 1,
            mode: None,
            cv_folds: 5,
            test_noise: false,
            ridge_grid: LogGridSpec {
                lo: 1e-8,
                hi: 1e-1,
                count: 15,
            },
            lasso_grid: LogGridSpec {
                lo: 1e-7,
                hi: 1e-3,
                count: 9,
            },
            lasso_max_iter: crate::baselines::DEFAULT_LASSO_MAX_ITER,
            lasso_tol: crate::baselines::DEFAULT_LASSO_TOL,
            phase_m_values: vec![100, 200, 400, 800, 1600],
            phase_accuracies: vec![0.02, 0.03, 0.05, 0.08, 0.12, 0.2],
            n_atoms_list: vec![300, 1000, 2000],
            methods: None,
            fit: GreedyConfig::new(
                SelectionRule::ArgMax,
                StoppingRule::Adaptive { delta: 1e-3 },
            ),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Ok(cfg)
    }

    /// Read a config file, or the `config` object of a run manifest.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        let value: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| Error::Config(e.to_string()))?;
        let inner = match value.get("config") {
            Some(c) if value.get("artifact_version").is_some() => c.clone(),
            _ => value,
        };
        serde_json::from_value(inner).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn mode_for(&self, kind: ExperimentKind) -> Mode {
        self.mode.unwrap_or(match kind {
            ExperimentKind::MethodTable | ExperimentKind::PhaseDiagram => Mode::Cv,
            _ => Mode::Oracle,
        })
    }

    pub fn domain(&self) -> Interval {
        self.domain.unwrap_or_else(Interval::symmetric_pi)
    }

    pub fn dictionary_spec(&self, n_atoms: usize) -> DictionarySpec {
        DictionarySpec {
            n_atoms,
            eta: self.eta,
            normalize: self.normalize,
            domain: self.domain(),
        }
    }

    pub fn methods_or(&self, default: &[Method]) -> Vec<Method> {
        self.methods.clone().unwrap_or_else(|| default.to_vec())
    }

    pub fn validate(&self, kind: ExperimentKind) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if let Some(k) = self.kind {
            if k != kind {
                return fail(format!(
                    "config is for {} but {} was requested",
                    k.name(),
                    kind.name()
                ));
            }
        }
        for (name, v) in [
            ("m_train", self.m_train),
            ("m_test", self.m_test),
            ("n_atoms", self.n_atoms),
            ("trials", self.trials),
            ("k_max", self.k_max),
            ("lasso_max_iter", self.lasso_max_iter),
        ] {
            if v == 0 {
                return fail(format!("{name} must be at least 1"));
            }
        }
        if self.k_min > self.k_max {
            return fail(format!("k_min {} exceeds k_max {}", self.k_min, self.k_max));
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return fail(format!("eta must be positive, got {}", self.eta));
        }
        if self.sigmas.is_empty() || self.sigmas.iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
            return fail("sigmas must be a nonempty list of finite values >= 0".into());
        }
        if self.cv_folds < 2 {
            return fail(format!(
                "cv_folds must be at least 2, got {}",
                self.cv_folds
            ));
        }
        if !(self.lasso_tol > 0.0) {
            return fail(format!(
                "lasso_tol must be positive, got {}",
                self.lasso_tol
            ));
        }
        let deltas = self.delta_grid.grid()?;
        if deltas.values.iter().any(|&d| d > 0.5) {
            return fail("delta grid must lie in (0, 1/2]".into());
        }
        self.ridge_grid.grid()?;
        self.lasso_grid.grid()?;
        if let Some(methods) = &self.methods {
            if methods.is_empty() {
                return fail("methods must not be empty".into());
            }
        }
        match kind {
            ExperimentKind::PhaseDiagram => {
                if self.phase_m_values.is_empty()
                    || self.phase_m_values.iter().any(|&m| m < self.cv_folds)
                {
                    return fail("phase_m_values must be nonempty with every m >= cv_folds".into());
                }
                if self.phase_accuracies.is_empty()
                    || self.phase_accuracies.iter().any(|a| !(*a > 0.0))
                {
                    return fail(
                        "phase_accuracies must be a nonempty list of positive values".into(),
                    );
                }
            }
            ExperimentKind::MethodTable => {
                if self.n_atoms_list.is_empty() || self.n_atoms_list.contains(&0) {
                    return fail("n_atoms_list must be a nonempty list of positive counts".into());
                }
            }
            ExperimentKind::Fit => self.fit.validate()?,
            _ => {}
        }
        if let Some(d) = self.domain {
            Interval::new(d.lo, d.hi).map_err(|e| Error::Config(e.to_string()))?;
        }
        if kind == ExperimentKind::ToglCompare && self.mode_for(kind) == Mode::Cv {
            return fail(
                "togl-compare selects (δ, k) on the test set only; use mode \"oracle\"".into(),
            );
        }
        if self.mode_for(kind) == Mode::Cv && self.m_train < self.cv_folds {
            return fail("m_train must be at least cv_folds in cv mode".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn method_names_round_trip() {
        for name in [
            "ogl1",
            "ogl2",
            "ogl3",
            "oglr",
            "togl1",
            "toglr",
            "togla",
            "delta-togl1",
            "delta-togl3",
            "delta-toglr",
            "delta-togla",
            "ridge",
            "lasso",
        ] {
            let m: Method = name.parse().unwrap();
            assert_eq!(m.to_string(), name);
        }
        assert!("ogla".parse::<Method>().is_err());
        assert!("svm".parse::<Method>().is_err());
        assert!("".parse::<Method>().is_err());
        assert_eq!(
            Method::Ogl(Variant::Random).selection(),
            Some(SelectionRule::UniformRandom)
        );
        assert_eq!(
            Method::DeltaTogl(Variant::Random).selection(),
            Some(SelectionRule::DeltaRandom)
        );
    }

    #[test]
    fn defaults_and_unknown_keys() {
        let cfg = ExperimentConfig::from_json("{}").unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        assert_eq!(cfg.delta_grid.grid().unwrap().len(), 100);
        assert!(ExperimentConfig::from_json(r#"{"m_trian": 5}"#).is_err());
        let cfg =
            ExperimentConfig::from_json(r#"{"trials": 3, "methods": ["ogl1", "lasso"]}"#).unwrap();
        assert_eq!(cfg.trials, 3);
        assert_eq!(
            cfg.methods,
            Some(vec![Method::Ogl(Variant::First), Method::Lasso])
        );
    }

    #[test]
    fn validation() {
        let ok = ExperimentConfig::default();
        assert!(ok.validate(ExperimentKind::OglCompare).is_ok());
        let cfg = ExperimentConfig {
            trials: 0,
            ..ExperimentConfig::default()
        };
        assert!(matches!(
            cfg.validate(ExperimentKind::OglCompare),
            Err(Error::Config(_))
        ));
        let cfg = ExperimentConfig {
            kind: Some(ExperimentKind::DeltaTogl),
            ..ExperimentConfig::default()
        };
        assert!(cfg.validate(ExperimentKind::OglCompare).is_err());
        let cfg = ExperimentConfig {
            delta_grid: LogGridSpec {
                lo: 1e-3,
                hi: 0.9,
                count: 4,
            },
            ..ExperimentConfig::default()
        };
        assert!(cfg.validate(ExperimentKind::DeltaTogl).is_err());
    }
}
