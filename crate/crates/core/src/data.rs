//! Learning data: synthetic sinc samples, CSV ingestion and error metrics.
//!
//! Random streams come from ChaCha8 (`rand_chacha::ChaCha8Rng::seed_from_u64`),
//! whose output is specified bit-for-bit and therefore identical on every
//! platform. Inputs are drawn first, then the Gaussian noise, so two sample
//! sets with the same seed share their inputs whatever the noise level.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// XOR mask separating the test-set stream from the training stream of a trial.
pub const TEST_STREAM_MASK: u64 = 0x7e57_5e7d_0000_0000;

/// Seedable generator used everywhere in the crate.
pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Per-trial stream: `master ⊕ trial`.
pub fn trial_seed(master: u64, trial: u64) -> u64 {
    master ^ trial
}

/// Seed of the held-out set belonging to a training seed.
pub fn test_seed(train_seed: u64) -> u64 {
    train_seed ^ TEST_STREAM_MASK
}

/// Closed interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::invalid(format!(
                "interval requires lo < hi, got [{lo}, {hi}]"
            )));
        }
        Ok(Self { lo, hi })
    }

    /// `[-π, π]`, the domain of the sinc study.
    pub fn symmetric_pi() -> Self {
        Self {
            lo: -std::f64::consts::PI,
            hi: std::f64::consts::PI,
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo && x <= self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

#[derive(Debug, Clone, Copy)]
pub enum TargetKind {
    Sinc,
    Custom(fn(f64) -> f64),
}

/// Regression function the synthetic data is drawn around.
#[derive(Debug, Clone, Copy)]
pub struct TargetFunction {
    pub kind: TargetKind,
    pub domain: Interval,
}

impl TargetFunction {
    /// `sin(x)/x` on `[-π, π]`.
    pub fn sinc() -> Self {
        Self {
            kind: TargetKind::Sinc,
            domain: Interval::symmetric_pi(),
        }
    }

    pub fn custom(f: fn(f64) -> f64, domain: Interval) -> Self {
        Self {
            kind: TargetKind::Custom(f),
            domain,
        }
    }
}

/// `sin(x)/x`, with the series `1 - x²/6` near the removable singularity.
pub fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-8 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}

pub fn eval_target(t: &TargetFunction, x: f64) -> Result<f64> {
    if !t.domain.contains(x) {
        return Err(Error::Domain(format!(
            "x = {x} outside [{}, {}]",
            t.domain.lo, t.domain.hi
        )));
    }
    Ok(match t.kind {
        TargetKind::Sinc => sinc(x),
        TargetKind::Custom(f) => f(x),
    })
}

/// Paired inputs and targets.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    /// Noise standard deviation; `None` when unknown (external data).
    pub sigma: Option<f64>,
    pub seed: u64,
    pub domain: Interval,
}

impl SampleSet {
    pub fn new(
        xs: Vec<f64>,
        ys: Vec<f64>,
        sigma: Option<f64>,
        seed: u64,
        domain: Interval,
    ) -> Result<Self> {
        if xs.is_empty() {
            return Err(Error::invalid("no samples"));
        }
        if xs.len() != ys.len() {
            return Err(Error::invalid(format!(
                "{} inputs but {} targets",
                xs.len(),
                ys.len()
            )));
        }
        if let Some(x) = xs.iter().find(|x| !domain.contains(**x)) {
            return Err(Error::Domain(format!(
                "x = {x} outside [{}, {}]",
                domain.lo, domain.hi
            )));
        }
        Ok(Self {
            xs,
            ys,
            sigma,
            seed,
            domain,
        })
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    /// Sub-sample by index, keeping metadata.
    pub fn subset(&self, idx: &[usize]) -> SampleSet {
        SampleSet {
            xs: idx.iter().map(|&i| self.xs[i]).collect(),
            ys: idx.iter().map(|&i| self.ys[i]).collect(),
            sigma: self.sigma,
            seed: self.seed,
            domain: self.domain,
        }
    }

    /// Largest |y|, the default truncation level.
    pub fn max_abs_y(&self) -> f64 {
        self.ys.iter().fold(0.0_f64, |acc, y| acc.max(y.abs()))
    }
}

/// Draw `m` i.i.d. uniform inputs on the target's domain and noisy targets.
pub fn gen_samples(t: &TargetFunction, m: usize, sigma: f64, seed: u64) -> Result<SampleSet> {
    if m == 0 {
        return Err(Error::invalid("sample count must be at least 1"));
    }
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::invalid(format!(
            "noise level must be finite and >= 0, got {sigma}"
        )));
    }
    let mut rng = rng_from_seed(seed);
    let (lo, hi) = (t.domain.lo, t.domain.hi);
    let xs: Vec<f64> = (0..m).map(|_| rng.random_range(lo..=hi)).collect();
    let mut ys = xs
        .iter()
        .map(|&x| eval_target(t, x))
        .collect::<Result<Vec<_>>>()?;
    if sigma > 0.0 {
        for y in ys.iter_mut() {
            let eps: f64 = rng.sample(StandardNormal);
            *y += sigma * eps;
        }
    }
    Ok(SampleSet {
        xs,
        ys,
        sigma: Some(sigma),
        seed,
        domain: t.domain,
    })
}

/// Parse `x,y` CSV text. Line numbers in errors are 1-based and count the header.
pub fn parse_csv(text: &str) -> Result<SampleSet> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim().replace(' ', "") == "x,y" => {}
        Some((_, header)) => {
            return Err(Error::Parse {
                line: 1,
                message: format!("expected header \"x,y\", found {header:?}"),
            })
        }
        None => return Err(Error::invalid("no samples")),
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (idx, raw) in lines {
        let line = idx + 1;
        let row = raw.trim();
        if row.is_empty() {
            continue;
        }
        let cells: Vec<&str> = row.split(',').map(str::trim).collect();
        if cells.len() != 2 {
            return Err(Error::Parse {
                line,
                message: format!("expected 2 columns, found {}", cells.len()),
            });
        }
        let parse = |cell: &str| -> Result<f64> {
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                line,
                message: format!("non-numeric cell {cell:?}"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    line,
                    message: format!("non-finite cell {cell:?}"),
                });
            }
            Ok(v)
        };
        xs.push(parse(cells[0])?);
        ys.push(parse(cells[1])?);
    }
    if xs.is_empty() {
        return Err(Error::invalid("no samples"));
    }
    let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    // a single distinct input still needs a non-degenerate interval
    let domain = if lo < hi {
        Interval { lo, hi }
    } else {
        Interval {
            lo: lo - 0.5,
            hi: hi + 0.5,
        }
    };
    SampleSet::new(xs, ys, None, 0, domain)
}

pub fn load_csv(path: impl AsRef<Path>) -> Result<SampleSet> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_csv(&text)
}

/// Root-mean-square error.
pub fn rmse(pred: &[f64], truth: &[f64]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::invalid(format!(
            "rmse of {} predictions against {} targets",
            pred.len(),
            truth.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::invalid("rmse of empty vectors"));
    }
    let sse: f64 = pred.iter().zip(truth).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok((sse / pred.len() as f64).sqrt())
}

/// Clamp `v` to `[-level, level]`.
pub fn truncate(v: f64, level: f64) -> f64 {
    if v.abs() <= level {
        v
    } else {
        level.copysign(v)
    }
}
