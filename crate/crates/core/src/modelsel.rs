//! Parameter grids and k-fold cross-validation.
//!
//! Each training fold gets its own dictionary, built from the fold's inputs,
//! so atom norms and greedy ratios are relative to the fold's sample size.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{rmse, rng_from_seed, SampleSet};
use crate::dictionary::{Dictionary, DictionarySpec};
use crate::error::{Error, Result};
use crate::greedy::Predictor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scale {
    Log,
    Linear,
}

/// Strictly increasing candidate values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub values: Vec<f64>,
    pub scale: Scale,
}

impl Grid {
    pub fn from_values(values: Vec<f64>, scale: Scale) -> Result<Grid> {
        if values.is_empty() {
            return Err(Error::invalid("empty grid"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("grid values must be finite"));
        }
        if values.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("grid values must be strictly increasing"));
        }
        if scale == Scale::Log && values[0] <= 0.0 {
            return Err(Error::invalid("log grid values must be positive"));
        }
        Ok(Grid { values, scale })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// `count` geometrically spaced values with exact endpoints.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Result<Grid> {
    if !(lo > 0.0 && hi > lo && hi.is_finite()) {
        return Err(Error::invalid(format!(
            "log grid needs 0 < lo < hi, got [{lo}, {hi}]"
        )));
    }
    if count < 2 {
        return Err(Error::invalid("a grid needs at least two values"));
    }
    let (a, b) = (lo.ln(), hi.ln());
    let step = (b - a) / (count - 1) as f64;
    let mut values: Vec<f64> = (0..count).map(|i| (a + step * i as f64).exp()).collect();
    values[0] = lo;
    values[count - 1] = hi;
    Grid::from_values(values, Scale::Log)
}

/// `count` evenly spaced values with exact endpoints.
pub fn linear_grid(lo: f64, hi: f64, count: usize) -> Result<Grid> {
    if !(hi > lo && lo.is_finite() && hi.is_finite()) {
        return Err(Error::invalid(format!(
            "linear grid needs lo < hi, got [{lo}, {hi}]"
        )));
    }
    if count < 2 {
        return Err(Error::invalid("a grid needs at least two values"));
    }
    let step = (hi - lo) / (count - 1) as f64;
    let mut values: Vec<f64> = (0..count).map(|i| lo + step * i as f64).collect();
    values[count - 1] = hi;
    Grid::from_values(values, Scale::Linear)
}

/// Every integer in `lo..=hi`, as a linear grid.
pub fn integer_grid(lo: usize, hi: usize) -> Result<Grid> {
    if hi < lo {
        return Err(Error::invalid(format!(
            "integer grid needs lo <= hi, got {lo}..={hi}"
        )));
    }
    Grid::from_values((lo..=hi).map(|k| k as f64).collect(), Scale::Linear)
}

/// A seeded partition of `0..m` into `k` folds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldAssignment {
    /// Held-out indices of each fold, ascending.
    pub folds: Vec<Vec<usize>>,
    pub seed: u64,
}

impl FoldAssignment {
    pub fn k(&self) -> usize {
        self.folds.len()
    }

    /// Complement of fold `f`, ascending.
    pub fn train_indices(&self, f: usize) -> Vec<usize> {
        let m: usize = self.folds.iter().map(Vec::len).sum();
        let mut held = vec![false; m];
        for &i in &self.folds[f] {
            held[i] = true;
        }
        (0..m).filter(|&i| !held[i]).collect()
    }
}

/// Shuffle `0..m` and deal the indices round-robin into `k` folds.
pub fn kfold_split(m: usize, k: usize, seed: u64) -> Result<FoldAssignment> {
    if k < 2 {
        return Err(Error::invalid(format!(
            "k-fold split needs k >= 2, got {k}"
        )));
    }
    if k > m {
        return Err(Error::invalid(format!(
            "cannot split {m} samples into {k} folds"
        )));
    }
    let mut perm: Vec<usize> = (0..m).collect();
    perm.shuffle(&mut rng_from_seed(seed));
    let mut folds = vec![Vec::with_capacity(m / k + 1); k];
    for (pos, i) in perm.into_iter().enumerate() {
        folds[pos % k].push(i);
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    Ok(FoldAssignment { folds, seed })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub grid: Grid,
    pub mean_rmse: Vec<f64>,
    pub std_rmse: Vec<f64>,
    pub best_index: usize,
    pub folds: FoldAssignment,
}

impl CvResult {
    pub fn best_value(&self) -> f64 {
        self.grid.values[self.best_index]
    }

    /// `candidate,mean_rmse,std_rmse`, one row per grid value.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("candidate,mean_rmse,std_rmse\n");
        for ((c, m), s) in self
            .grid
            .values
            .iter()
            .zip(&self.mean_rmse)
            .zip(&self.std_rmse)
        {
            writeln!(out, "{c:.16e},{m:.16e},{s:.16e}").expect("writing to a String cannot fail");
        }
        out
    }
}

/// Cross-validate a procedure that fits one model per grid value.
pub fn cross_validate<P, F>(
    fitter: F,
    grid: &Grid,
    z: &SampleSet,
    spec: &DictionarySpec,
    k: usize,
    seed: u64,
) -> Result<CvResult>
where
    P: Predictor,
    F: Fn(f64, &SampleSet, &Dictionary) -> Result<P> + Sync,
{
    cross_validate_batch(
        |values: &[f64], zt: &SampleSet, d: &Dictionary| {
            Ok(values.iter().map(|&v| fitter(v, zt, d)).collect())
        },
        grid,
        z,
        spec,
        k,
        seed,
    )
}

/// Cross-validate a procedure that fits the whole grid at once on each fold.
///
/// `fitter` returns one model per grid value, in grid order. A failed model,
/// or a failed fold, scores an infinite RMSE rather than aborting.
pub fn cross_validate_batch<P, F>(
    fitter: F,
    grid: &Grid,
    z: &SampleSet,
    spec: &DictionarySpec,
    k: usize,
    seed: u64,
) -> Result<CvResult>
where
    P: Predictor,
    F: Fn(&[f64], &SampleSet, &Dictionary) -> Result<Vec<Result<P>>> + Sync,
{
    if grid.is_empty() {
        return Err(Error::invalid("empty grid"));
    }
    let folds = kfold_split(z.len(), k, seed)?;
    let per_fold: Vec<Vec<f64>> = (0..k)
        .into_par_iter()
        .map(|f| {
            fold_scores(&fitter, grid, z, spec, &folds, f)
                .unwrap_or_else(|_| vec![f64::INFINITY; grid.len()])
        })
        .collect();

    let kf = k as f64;
    let mut mean_rmse = Vec::with_capacity(grid.len());
    let mut std_rmse = Vec::with_capacity(grid.len());
    for c in 0..grid.len() {
        let scores: Vec<f64> = per_fold.iter().map(|s| s[c]).collect();
        if scores.iter().any(|s| !s.is_finite()) {
            mean_rmse.push(f64::INFINITY);
            std_rmse.push(f64::INFINITY);
            continue;
        }
        let mean = scores.iter().sum::<f64>() / kf;
        let var = scores.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / (kf - 1.0);
        mean_rmse.push(mean);
        std_rmse.push(var.sqrt());
    }
    let mut best_index = 0;
    for (c, &m) in mean_rmse.iter().enumerate() {
        if m < mean_rmse[best_index] {
            best_index = c;
        }
    }
    Ok(CvResult {
        grid: grid.clone(),
        mean_rmse,
        std_rmse,
        best_index,
        folds,
    })
}

fn fold_scores<P, F>(
    fitter: &F,
    grid: &Grid,
    z: &SampleSet,
    spec: &DictionarySpec,
    folds: &FoldAssignment,
    f: usize,
) -> Result<Vec<f64>>
where
    P: Predictor,
    F: Fn(&[f64], &SampleSet, &Dictionary) -> Result<Vec<Result<P>>> + Sync,
{
    let held = &folds.folds[f];
    let train = folds.train_indices(f);
    assert_disjoint(&train, held, z.len());
    let zt = z.subset(&train);
    let zv = z.subset(held);
    let d = spec.build(&zt.xs)?;
    let val_design: DMatrix<f64> = d.eval_design(&zv.xs)?;
    let models = fitter(&grid.values, &zt, &d)?;
    if models.len() != grid.len() {
        return Err(Error::invalid(format!(
            "fitter returned {} models for {} grid values",
            models.len(),
            grid.len()
        )));
    }
    Ok(models
        .into_iter()
        .map(|model| {
            model
                .and_then(|p| p.predict_design(&d, &val_design))
                .and_then(|pred| rmse(&pred, &zv.ys))
                .ok()
                .filter(|r| r.is_finite())
                .unwrap_or(f64::INFINITY)
        })
        .collect())
}

fn assert_disjoint(train: &[usize], held: &[usize], m: usize) {
    let mut seen = vec![false; m];
    for &i in train {
        seen[i] = true;
    }
    assert!(
        held.iter().all(|&i| !seen[i]),
        "held-out fold overlaps its training indices"
    );
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Interval, TargetFunction};
    use crate::dictionary::build_rbf_dictionary;
    use crate::greedy::{fit_greedy, GreedyConfig, SelectionRule, StoppingRule, Truncation};
    use proptest::prelude::*;

    #[test]
    fn log_grid_examples() {
        let g = log_grid(1e-6, 0.5, 100).unwrap();
        assert_eq!(g.len(), 100);
        assert_eq!(g.values[0], 1e-6);
        assert_eq!(g.values[99], 0.5);
        let ratio = g.values[1] / g.values[0];
        for w in g.values.windows(2) {
            assert!((w[1] / w[0] - ratio).abs() <= 1e-10);
        }
        let small = log_grid(1.0, 100.0, 3).unwrap();
        assert_eq!(small.values[0], 1.0);
        assert!((small.values[1] - 10.0).abs() < 1e-12);
        assert_eq!(small.values[2], 100.0);
        assert!(log_grid(0.0, 1.0, 5).is_err());
        assert!(log_grid(1.0, 1.0, 5).is_err());
        assert!(log_grid(1.0, 2.0, 1).is_err());
    }

    #[test]
    fn other_grids() {
        assert_eq!(
            linear_grid(0.0, 1.0, 3).unwrap().values,
            vec![0.0, 0.5, 1.0]
        );
        assert_eq!(integer_grid(2, 4).unwrap().values, vec![2.0, 3.0, 4.0]);
        assert!(Grid::from_values(vec![1.0, 1.0], Scale::Linear).is_err());
        assert!(Grid::from_values(vec![-1.0, 1.0], Scale::Log).is_err());
    }

    #[test]
    fn kfold_examples() {
        let f = kfold_split(10, 5, 3).unwrap();
        assert!(f.folds.iter().all(|fold| fold.len() == 2));
        let g = kfold_split(11, 5, 3).unwrap();
        let mut sizes: Vec<usize> = g.folds.iter().map(Vec::len).collect();
        sizes.sort_unstable();
        assert_eq!(sizes, vec![2, 2, 2, 2, 3]);
        assert!(kfold_split(4, 5, 0).is_err());
        assert!(kfold_split(4, 1, 0).is_err());
        assert_eq!(
            kfold_split(30, 5, 9).unwrap(),
            kfold_split(30, 5, 9).unwrap()
        );
    }

    proptest! {
        #[test]
        fn folds_partition_the_indices(m in 2usize..200, k in 2usize..10, seed in any::<u64>()) {
            prop_assume!(k <= m);
            let f = kfold_split(m, k, seed).unwrap();
            let mut all: Vec<usize> = f.folds.iter().flatten().copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..m).collect::<Vec<_>>());
            let min = f.folds.iter().map(Vec::len).min().unwrap();
            let max = f.folds.iter().map(Vec::len).max().unwrap();
            prop_assert!(max - min <= 1);
            for fold in 0..k {
                let train = f.train_indices(fold);
                prop_assert_eq!(train.len() + f.folds[fold].len(), m);
                prop_assert!(train.iter().all(|i| f.folds[fold].binary_search(i).is_err()));
            }
        }
    }

    fn spec() -> DictionarySpec {
        DictionarySpec {
            n_atoms: 12,
            eta: 1.0,
            normalize: false,
            domain: Interval::symmetric_pi(),
        }
    }

    fn sinc_sample(m: usize, seed: u64) -> SampleSet {
        crate::data::gen_samples(&TargetFunction::sinc(), m, 0.1, seed).unwrap()
    }

    fn adaptive(delta: f64, z: &SampleSet, d: &Dictionary) -> Result<crate::greedy::Estimator> {
        let cfg = GreedyConfig::new(SelectionRule::ArgMax, StoppingRule::Adaptive { delta });
        fit_greedy(&cfg, z, d)
    }

    #[test]
    fn single_candidate_wins() {
        let z = sinc_sample(40, 1);
        let grid = Grid::from_values(vec![0.1], Scale::Log).unwrap();
        let cv = cross_validate(adaptive, &grid, &z, &spec(), 5, 7).unwrap();
        assert_eq!(cv.best_index, 0);
        assert!(cv.mean_rmse[0].is_finite());
        assert_eq!(cv.to_csv().lines().count(), 2);
    }

    #[test]
    fn failing_candidate_loses() {
        let z = sinc_sample(40, 2);
        let grid = Grid::from_values(vec![0.01, 0.2], Scale::Log).unwrap();
        let fitter = |delta: f64, zt: &SampleSet, d: &Dictionary| {
            if delta < 0.1 {
                Err(Error::invalid("always fails"))
            } else {
                adaptive(delta, zt, d)
            }
        };
        let cv = cross_validate(fitter, &grid, &z, &spec(), 5, 7).unwrap();
        assert!(cv.mean_rmse[0].is_infinite());
        assert_eq!(cv.best_index, 1);
    }

    #[test]
    fn ties_prefer_the_smaller_value() {
        let z = sinc_sample(30, 3);
        let grid = Grid::from_values(vec![0.2, 0.3, 0.4], Scale::Log).unwrap();
        // every candidate produces the same model
        let cv = cross_validate(
            |_, zt: &SampleSet, d: &Dictionary| adaptive(0.3, zt, d),
            &grid,
            &z,
            &spec(),
            3,
            1,
        )
        .unwrap();
        assert_eq!(cv.best_index, 0);
    }

    #[test]
    fn representable_target_is_recovered() {
        // three atoms of the dictionary the folds are built from
        let s = DictionarySpec {
            n_atoms: 6,
            ..spec()
        };
        let c = s.centers().unwrap();
        let coefs = [(1, 0.7), (3, -1.3), (4, 0.4)];
        let target = |x: f64| -> f64 {
            coefs
                .iter()
                .map(|&(j, a)| a * (-(x - c[j]) * (x - c[j])).exp())
                .sum()
        };
        let base = sinc_sample(60, 4);
        let ys: Vec<f64> = base.xs.iter().map(|&x| target(x)).collect();
        let z = SampleSet::new(base.xs.clone(), ys, Some(0.0), 4, base.domain).unwrap();

        let direct_d = build_rbf_dictionary(&c, 1.0, &z.xs, false).unwrap();
        let direct = adaptive(1e-9, &z, &direct_d).unwrap();
        let fitted = direct.fitted_values(&direct_d).unwrap();
        assert!(rmse(&fitted, &z.ys).unwrap() < 1e-6);

        let grid = log_grid(1e-9, 0.5, 12).unwrap();
        // a fixed truncation level keeps held-out extremes from being clipped
        let untruncated = |delta: f64, zt: &SampleSet, d: &Dictionary| {
            let cfg = GreedyConfig::new(SelectionRule::ArgMax, StoppingRule::Adaptive { delta })
                .with_truncation(Truncation::Level(10.0));
            fit_greedy(&cfg, zt, d)
        };
        let cv = cross_validate(untruncated, &grid, &z, &s, 5, 11).unwrap();
        assert!(cv.mean_rmse[cv.best_index] < 1e-6, "{}", cv.to_csv());
    }

    #[test]
    fn deterministic_given_seed() {
        let z = sinc_sample(50, 5);
        let grid = log_grid(1e-4, 0.5, 6).unwrap();
        let a = cross_validate(adaptive, &grid, &z, &spec(), 5, 3).unwrap();
        let b = cross_validate(adaptive, &grid, &z, &spec(), 5, 3).unwrap();
        assert_eq!(a.to_csv(), b.to_csv());
    }
}
