use std::path::Path;
use std::time::Instant;

use nalgebra::DMatrix;
use rayon::prelude::*;

use super::config::{ExperimentConfig, ExperimentKind, Method, Mode, Variant};
use super::report::{
    mean_std, median, Cell, Hardware, Manifest, RunReport, Table, TrialRecord, ARTIFACT_VERSION,
};
use crate::baselines::{fit_ridge, DenseModel, LassoProblem};
use crate::data::{
    gen_samples, load_csv, rmse, test_seed, trial_seed, SampleSet, TargetFunction, TargetKind,
};
use crate::dictionary::Dictionary;
use crate::error::{Error, Result};
use crate::greedy::{
    delta_sweep_argmax, fit_greedy, fit_greedy_traced, Estimator, GreedyConfig, Predictor,
    StoppingRule, TerminationReason, Truncation,
};
use crate::modelsel::{cross_validate_batch, integer_grid, Grid};

/// SplitMix64 finalizer.
fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive an independent stream seed from a parent seed and a label.
pub fn derive_seed(parent: u64, label: u64) -> u64 {
    splitmix(parent ^ splitmix(label))
}

fn method_label(m: &Method) -> u64 {
    // FNV-1a over the method name
    m.to_string().bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0100_0000_01b3)
    })
}

const CV_LABEL: u64 = 0xc0ff_ee00;

/// Greedy or dense model produced during an experiment.
#[derive(Debug, Clone)]
pub enum Model {
    Greedy(Estimator),
    Dense(DenseModel),
}

impl Predictor for Model {
    fn predict_design(&self, d: &Dictionary, design: &DMatrix<f64>) -> Result<Vec<f64>> {
        match self {
            Model::Greedy(e) => e.predict_design(d, design),
            Model::Dense(m) => m.predict_design(d, design),
        }
    }

    fn sparsity(&self) -> usize {
        match self {
            Model::Greedy(e) => e.sparsity(),
            Model::Dense(m) => m.sparsity(),
        }
    }
}

/// Training set, dictionary and clean held-out targets of one trial.
#[derive(Debug, Clone)]
pub struct Instance {
    pub seed: u64,
    pub train: SampleSet,
    pub dict: Dictionary,
    pub test_design: DMatrix<f64>,
    pub test_truth: Vec<f64>,
}

impl Instance {
    pub fn generate(
        cfg: &ExperimentConfig,
        m_train: usize,
        n_atoms: usize,
        sigma: f64,
        seed: u64,
    ) -> Result<Self> {
        let target = TargetFunction {
            kind: TargetKind::Sinc,
            domain: cfg.domain(),
        };
        let train = gen_samples(&target, m_train, sigma, seed)?;
        let test_sigma = if cfg.test_noise { sigma } else { 0.0 };
        let test = gen_samples(&target, cfg.m_test, test_sigma, test_seed(seed))?;
        let dict = cfg.dictionary_spec(n_atoms).build(&train.xs)?;
        let test_design = dict.eval_design(&test.xs)?;
        Ok(Self {
            seed,
            train,
            dict,
            test_design,
            test_truth: test.ys,
        })
    }

    pub fn test_rmse<P: Predictor>(&self, p: &P) -> Result<f64> {
        rmse(
            &p.predict_design(&self.dict, &self.test_design)?,
            &self.test_truth,
        )
    }
}

/// One model per grid value, fitted on `z`. Paths are shared where the
/// learner allows it: OGL prefixes, the arg-max threshold sweep and warm
/// started Lasso solves.
pub fn fit_grid(
    cfg: &ExperimentConfig,
    method: Method,
    params: &[f64],
    z: &SampleSet,
    d: &Dictionary,
    seed: u64,
) -> Result<Vec<Result<Model>>> {
    let greedy = |stopping: StoppingRule| -> Result<Model> {
        let selection = method.selection().expect("greedy method");
        let gc = GreedyConfig::new(selection, stopping).with_seed(seed);
        Ok(Model::Greedy(fit_greedy(&gc, z, d)?))
    };
    Ok(match method {
        Method::Ogl(_) => {
            let k_top = params.iter().fold(1.0_f64, |a, &b| a.max(b)) as usize;
            let selection = method.selection().expect("greedy method");
            let gc =
                GreedyConfig::new(selection, StoppingRule::FixedK { k_max: k_top }).with_seed(seed);
            let path = fit_greedy_traced(&gc, z, d)?;
            let reached = path.state.k();
            params
                .iter()
                .map(|&k| {
                    let k = k as usize;
                    let reason = if k < reached {
                        TerminationReason::KLimit
                    } else {
                        path.estimator.termination_reason
                    };
                    Ok(Model::Greedy(path.prefix_estimator(k, reason)))
                })
                .collect()
        }
        Method::DeltaTogl(Variant::First) => delta_sweep_argmax(z, d, params, Truncation::Auto)?
            .into_iter()
            .map(|e| Ok(Model::Greedy(e)))
            .collect(),
        Method::DeltaTogl(_) => params
            .iter()
            .map(|&delta| greedy(StoppingRule::Adaptive { delta }))
            .collect(),
        Method::Togl(_) => params
            .iter()
            .map(|&delta| {
                greedy(StoppingRule::ThresholdPlusK {
                    delta,
                    k_max: cfg.k_max,
                })
            })
            .collect(),
        Method::Ridge => params
            .iter()
            .map(|&lambda| fit_ridge(d, &z.ys, lambda).map(Model::Dense))
            .collect(),
        Method::Lasso => {
            let problem = LassoProblem::new(d, &z.ys)?;
            let mut out: Vec<Option<Result<Model>>> = (0..params.len()).map(|_| None).collect();
            let mut warm: Option<Vec<f64>> = None;
            // decreasing λ so each solve starts near its solution
            for i in (0..params.len()).rev() {
                let fit = problem.solve(
                    d,
                    params[i],
                    cfg.lasso_max_iter,
                    cfg.lasso_tol,
                    warm.as_deref(),
                );
                if let Ok(m) = &fit {
                    warm = Some(m.coefficients.clone());
                }
                out[i] = Some(fit.map(Model::Dense));
            }
            out.into_iter()
                .map(|m| m.expect("every grid value solved"))
                .collect()
        }
    })
}

/// Test-set scores of a whole grid and the selected entry.
#[derive(Debug, Clone)]
pub struct GridEval {
    pub values: Vec<f64>,
    pub rmse: Vec<f64>,
    pub sparsity: Vec<usize>,
    pub chosen: usize,
    pub fit_time_s: f64,
}

impl GridEval {
    pub fn param(&self) -> f64 {
        self.values[self.chosen]
    }

    pub fn test_rmse(&self) -> f64 {
        self.rmse[self.chosen]
    }
}

/// Index of the smallest score; ties and non-finite scores resolve toward
/// the front of the grid.
fn argmin(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s < scores[best] || (!scores[best].is_finite() && s.is_finite()) {
            best = i;
        }
    }
    best
}

/// Fit the grid on the full training set, score it on the test set and pick
/// a value by `mode`.
pub fn evaluate(
    cfg: &ExperimentConfig,
    mode: Mode,
    method: Method,
    inst: &Instance,
    grid: &Grid,
) -> Result<GridEval> {
    let seed = derive_seed(inst.seed, method_label(&method));
    let start = Instant::now();
    let models = fit_grid(cfg, method, &grid.values, &inst.train, &inst.dict, seed)?;
    let fit_time_s = start.elapsed().as_secs_f64();
    let mut scores = Vec::with_capacity(models.len());
    let mut sparsity = Vec::with_capacity(models.len());
    for m in &models {
        match m {
            Ok(model) => {
                scores.push(inst.test_rmse(model).unwrap_or(f64::INFINITY));
                sparsity.push(model.sparsity());
            }
            Err(_) => {
                scores.push(f64::INFINITY);
                sparsity.push(0);
            }
        }
    }
    let chosen = match mode {
        Mode::Oracle => argmin(&scores),
        Mode::Cv => {
            let spec = cfg.dictionary_spec(inst.dict.n_atoms());
            let fitter = |values: &[f64], zt: &SampleSet, d: &Dictionary| {
                fit_grid(cfg, method, values, zt, d, seed)
            };
            let cv = cross_validate_batch(
                fitter,
                grid,
                &inst.train,
                &spec,
                cfg.cv_folds,
                derive_seed(seed, CV_LABEL),
            )?;
            cv.best_index
        }
    };
    Ok(GridEval {
        values: grid.values.clone(),
        rmse: scores,
        sparsity,
        chosen,
        fit_time_s,
    })
}

fn param_grid(cfg: &ExperimentConfig, method: Method) -> Result<Grid> {
    match method {
        Method::Ogl(_) => integer_grid(cfg.k_min, cfg.k_max),
        Method::Togl(_) | Method::DeltaTogl(_) => cfg.delta_grid.grid(),
        Method::Ridge => cfg.ridge_grid.grid(),
        Method::Lasso => cfg.lasso_grid.grid(),
    }
}

fn manifest(cfg: &ExperimentConfig, kind: ExperimentKind, trial_seeds: Vec<u64>) -> Manifest {
    Manifest {
        artifact_version: ARTIFACT_VERSION.to_string(),
        experiment: kind.name().to_string(),
        mode: cfg.mode_for(kind).name().to_string(),
        master_seed: cfg.seed,
        trial_seeds,
        config: cfg.clone(),
        hardware: Hardware::detect(),
        files: Vec::new(),
        timing_files: Vec::new(),
    }
}

fn trial_seeds(cfg: &ExperimentConfig) -> Vec<u64> {
    (0..cfg.trials as u64)
        .map(|t| trial_seed(cfg.seed, t))
        .collect()
}

fn trials_table(records: &[TrialRecord]) -> Table {
    let mut t = Table::new([
        "method",
        "sigma",
        "n_atoms",
        "m_train",
        "trial",
        "seed",
        "param",
        "test_rmse",
        "sparsity",
    ]);
    for r in records {
        t.push(vec![
            r.method.clone().into(),
            r.sigma.into(),
            r.n_atoms.into(),
            r.m_train.into(),
            r.trial.into(),
            r.seed.into(),
            r.param.into(),
            r.test_rmse.into(),
            r.sparsity.into(),
        ]);
    }
    t
}

/// Key of one summary row.
#[derive(Debug, Clone, PartialEq)]
struct GroupKey {
    method: String,
    sigma: f64,
    n_atoms: usize,
    m_train: usize,
}

fn group(records: &[TrialRecord]) -> Vec<(GroupKey, Vec<&TrialRecord>)> {
    let mut groups: Vec<(GroupKey, Vec<&TrialRecord>)> = Vec::new();
    for r in records {
        let key = GroupKey {
            method: r.method.clone(),
            sigma: r.sigma,
            n_atoms: r.n_atoms,
            m_train: r.m_train,
        };
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, v)) => v.push(r),
            None => groups.push((key, vec![r])),
        }
    }
    groups
}

/// Per-trial parameters are summarized by their median, errors by mean and
/// standard deviation, sparsity by its mean.
fn summary_table(records: &[TrialRecord], mode: Mode) -> Table {
    let mut t = Table::new([
        "method",
        "sigma",
        "n_atoms",
        "m_train",
        "mode",
        "best_param",
        "test_rmse_mean",
        "test_rmse_std",
        "k_star",
        "sparsity",
    ]);
    for (key, rs) in group(records) {
        let params: Vec<f64> = rs.iter().map(|r| r.param).collect();
        let errs: Vec<f64> = rs.iter().map(|r| r.test_rmse).collect();
        let k_star: Vec<f64> = rs
            .iter()
            .map(|r| {
                if r.method.starts_with("ogl") {
                    r.param
                } else {
                    r.sparsity as f64
                }
            })
            .collect();
        let sparsity: Vec<f64> = rs.iter().map(|r| r.sparsity as f64).collect();
        let (mean, std) = mean_std(&errs);
        t.push(vec![
            key.method.into(),
            key.sigma.into(),
            key.n_atoms.into(),
            key.m_train.into(),
            mode.name().into(),
            median(&params).into(),
            mean.into(),
            std.into(),
            mean_std(&k_star).0.into(),
            mean_std(&sparsity).0.into(),
        ]);
    }
    t
}

fn timing_table(records: &[TrialRecord]) -> Table {
    let mut t = Table::new(["method", "sigma", "n_atoms", "m_train", "median_fit_time_s"]);
    for (key, rs) in group(records) {
        let times: Vec<f64> = rs.iter().map(|r| r.fit_time_s).collect();
        t.push(vec![
            key.method.into(),
            key.sigma.into(),
            key.n_atoms.into(),
            key.m_train.into(),
            median(&times).into(),
        ]);
    }
    t
}

/// Curves averaged over trials: for each (method, σ), the mean of `value`
/// at each grid position.
fn average_curves(
    evals: &[(usize, usize, Vec<GridEval>)],
    n_methods: usize,
    n_sigmas: usize,
    f: impl Fn(&GridEval, usize) -> f64,
) -> Vec<Vec<Vec<f64>>> {
    let mut out = vec![vec![Vec::new(); n_sigmas]; n_methods];
    for (mi, row) in out.iter_mut().enumerate() {
        for (si, cell) in row.iter_mut().enumerate() {
            let runs: Vec<&GridEval> = evals
                .iter()
                .filter(|(s, _, _)| *s == si)
                .map(|(_, _, ev)| &ev[mi])
                .collect();
            let Some(first) = runs.first() else { continue };
            *cell = (0..first.values.len())
                .map(|i| runs.iter().map(|e| f(e, i)).sum::<f64>() / runs.len() as f64)
                .collect();
        }
    }
    out
}

fn record(
    method: Method,
    sigma: f64,
    inst: &Instance,
    trial: usize,
    n_atoms: usize,
    ev: &GridEval,
) -> TrialRecord {
    TrialRecord {
        method: method.to_string(),
        sigma,
        n_atoms,
        m_train: inst.train.len(),
        trial,
        seed: inst.seed,
        param: ev.param(),
        test_rmse: ev.test_rmse(),
        sparsity: ev.sparsity[ev.chosen],
        fit_time_s: ev.fit_time_s,
    }
}

/// Grid evaluations of every method over every (σ, trial) cell, in
/// (σ, trial) order.
fn sweep_sigma_trials(
    cfg: &ExperimentConfig,
    mode: Mode,
    methods: &[Method],
) -> Result<Vec<(usize, usize, Vec<GridEval>)>> {
    let grids = methods
        .iter()
        .map(|&m| param_grid(cfg, m))
        .collect::<Result<Vec<_>>>()?;
    let cells: Vec<(usize, usize)> = (0..cfg.sigmas.len())
        .flat_map(|s| (0..cfg.trials).map(move |t| (s, t)))
        .collect();
    cells
        .into_par_iter()
        .map(|(s, t)| {
            let inst = Instance::generate(
                cfg,
                cfg.m_train,
                cfg.n_atoms,
                cfg.sigmas[s],
                trial_seed(cfg.seed, t as u64),
            )?;
            let evals = methods
                .iter()
                .zip(&grids)
                .map(|(&m, g)| evaluate(cfg, mode, m, &inst, g))
                .collect::<Result<Vec<_>>>()?;
            Ok((s, t, evals))
        })
        .collect()
}

fn records_by_method(
    cfg: &ExperimentConfig,
    methods: &[Method],
    evals: &[(usize, usize, Vec<GridEval>)],
) -> Vec<TrialRecord> {
    let mut records = Vec::new();
    for (mi, &m) in methods.iter().enumerate() {
        for (s, t, ev) in evals {
            let e = &ev[mi];
            records.push(TrialRecord {
                method: m.to_string(),
                sigma: cfg.sigmas[*s],
                n_atoms: cfg.n_atoms,
                m_train: cfg.m_train,
                trial: *t,
                seed: trial_seed(cfg.seed, *t as u64),
                param: e.param(),
                test_rmse: e.test_rmse(),
                sparsity: e.sparsity[e.chosen],
                fit_time_s: e.fit_time_s,
            });
        }
    }
    records
}

/// OGL with the four atom-choice metrics, the iteration count as parameter.
pub fn run_ogl_comparison(cfg: &ExperimentConfig) -> Result<RunReport> {
    let kind = ExperimentKind::OglCompare;
    cfg.validate(kind)?;
    let mode = cfg.mode_for(kind);
    let methods = cfg.methods_or(&[
        Method::Ogl(Variant::First),
        Method::Ogl(Variant::Second),
        Method::Ogl(Variant::Third),
        Method::Ogl(Variant::Random),
    ]);
    if let Some(m) = methods.iter().find(|m| !matches!(m, Method::Ogl(_))) {
        return Err(Error::Config(format!(
            "ogl-compare runs OGL methods only, got {m}"
        )));
    }
    let evals = sweep_sigma_trials(cfg, mode, &methods)?;
    let curves = average_curves(&evals, methods.len(), cfg.sigmas.len(), |e, i| e.rmse[i]);
    let mut curve_table = Table::new(["k", "method", "sigma", "mean_test_rmse"]);
    for (mi, m) in methods.iter().enumerate() {
        for (si, &sigma) in cfg.sigmas.iter().enumerate() {
            for (i, k) in (cfg.k_min..=cfg.k_max).enumerate() {
                curve_table.push(vec![
                    k.into(),
                    m.to_string().into(),
                    sigma.into(),
                    curves[mi][si][i].into(),
                ]);
            }
        }
    }
    let records = records_by_method(cfg, &methods, &evals);
    let mut report = RunReport::new(manifest(cfg, kind, trial_seeds(cfg)));
    report.tables.insert("ogl_curves.csv".into(), curve_table);
    finish(report, records, mode)
}

fn finish(mut report: RunReport, records: Vec<TrialRecord>, mode: Mode) -> Result<RunReport> {
    report
        .tables
        .insert("summary.csv".into(), summary_table(&records, mode));
    report
        .tables
        .insert("trials.csv".into(), trials_table(&records));
    report
        .timing
        .insert("timing.csv".into(), timing_table(&records));
    report.trials = records;
    Ok(report)
}

/// Outcome of one TOGL method on one trial over the whole (δ, k) grid.
struct ToglEval {
    /// `rmse[j][i]`: threshold `j`, cap `k_min + i`.
    rmse: Vec<Vec<f64>>,
    /// Atoms selected with the threshold alone.
    k_threshold_only: Vec<usize>,
    fit_time_s: f64,
}

fn togl_grid(
    cfg: &ExperimentConfig,
    method: Method,
    inst: &Instance,
    deltas: &[f64],
) -> Result<ToglEval> {
    let selection = method.selection().expect("greedy method");
    let seed = derive_seed(inst.seed, method_label(&method));
    let mut rmse_grid = Vec::with_capacity(deltas.len());
    let mut k_thr = Vec::with_capacity(deltas.len());
    let mut fit_time_s = 0.0;
    for &delta in deltas {
        let gc =
            GreedyConfig::new(selection, StoppingRule::ThresholdOnly { delta }).with_seed(seed);
        let start = Instant::now();
        let path = fit_greedy_traced(&gc, &inst.train, &inst.dict)?;
        fit_time_s += start.elapsed().as_secs_f64();
        let reached = path.state.k();
        // the capped fit follows the uncapped path and stops at min(k, reached)
        let row = (cfg.k_min..=cfg.k_max)
            .map(|k| {
                let reason = if k < reached {
                    TerminationReason::KLimit
                } else {
                    path.estimator.termination_reason
                };
                inst.test_rmse(&path.prefix_estimator(k, reason))
            })
            .collect::<Result<Vec<_>>>()?;
        rmse_grid.push(row);
        k_thr.push(reached);
    }
    Ok(ToglEval {
        rmse: rmse_grid,
        k_threshold_only: k_thr,
        fit_time_s,
    })
}

/// TOGL over the (δ, k) grid, both chosen on the test set.
pub fn run_togl_comparison(cfg: &ExperimentConfig) -> Result<RunReport> {
    let kind = ExperimentKind::ToglCompare;
    cfg.validate(kind)?;
    let methods = cfg.methods_or(&[
        Method::Togl(Variant::First),
        Method::Togl(Variant::Second),
        Method::Togl(Variant::Third),
        Method::Togl(Variant::Random),
    ]);
    if let Some(m) = methods.iter().find(|m| !matches!(m, Method::Togl(_))) {
        return Err(Error::Config(format!(
            "togl-compare runs TOGL methods only, got {m}"
        )));
    }
    let deltas = cfg.delta_grid.grid()?.values;
    let cells: Vec<(usize, usize)> = (0..cfg.sigmas.len())
        .flat_map(|s| (0..cfg.trials).map(move |t| (s, t)))
        .collect();
    let evals: Vec<(usize, usize, Vec<ToglEval>)> = cells
        .into_par_iter()
        .map(|(s, t)| {
            let inst = Instance::generate(
                cfg,
                cfg.m_train,
                cfg.n_atoms,
                cfg.sigmas[s],
                trial_seed(cfg.seed, t as u64),
            )?;
            let ev = methods
                .iter()
                .map(|&m| togl_grid(cfg, m, &inst, &deltas))
                .collect::<Result<Vec<_>>>()?;
            Ok((s, t, ev))
        })
        .collect::<Result<_>>()?;

    let ks: Vec<usize> = (cfg.k_min..=cfg.k_max).collect();
    let mut curve_table = Table::new([
        "delta",
        "method",
        "sigma",
        "mean_test_rmse",
        "mean_k",
        "mean_k_threshold_only",
    ]);
    let mut records = Vec::new();
    for (mi, m) in methods.iter().enumerate() {
        for (si, &sigma) in cfg.sigmas.iter().enumerate() {
            let runs: Vec<(usize, &ToglEval)> = evals
                .iter()
                .filter(|(s, _, _)| *s == si)
                .map(|(_, t, ev)| (*t, &ev[mi]))
                .collect();
            let n = runs.len() as f64;
            for (j, &delta) in deltas.iter().enumerate() {
                let (mut err, mut kk, mut kt) = (0.0, 0.0, 0.0);
                for (_, e) in &runs {
                    let i = argmin(&e.rmse[j]);
                    err += e.rmse[j][i];
                    kk += ks[i].min(e.k_threshold_only[j]) as f64;
                    kt += e.k_threshold_only[j] as f64;
                }
                curve_table.push(vec![
                    delta.into(),
                    m.to_string().into(),
                    sigma.into(),
                    (err / n).into(),
                    (kk / n).into(),
                    (kt / n).into(),
                ]);
            }
            for (t, e) in &runs {
                let flat: Vec<f64> = e.rmse.iter().flatten().copied().collect();
                let best = argmin(&flat);
                let (j, i) = (best / ks.len(), best % ks.len());
                records.push(TrialRecord {
                    method: m.to_string(),
                    sigma,
                    n_atoms: cfg.n_atoms,
                    m_train: cfg.m_train,
                    trial: *t,
                    seed: trial_seed(cfg.seed, *t as u64),
                    param: deltas[j],
                    test_rmse: flat[best],
                    sparsity: ks[i].min(e.k_threshold_only[j]),
                    fit_time_s: e.fit_time_s,
                });
            }
        }
    }
    let mut report = RunReport::new(manifest(cfg, kind, trial_seeds(cfg)));
    report.tables.insert("togl_curves.csv".into(), curve_table);
    finish(report, records, Mode::Oracle)
}

/// δ-TOGL: adaptive stopping, δ the only parameter.
pub fn run_delta_togl(cfg: &ExperimentConfig) -> Result<RunReport> {
    let kind = ExperimentKind::DeltaTogl;
    cfg.validate(kind)?;
    let mode = cfg.mode_for(kind);
    let methods = cfg.methods_or(&[
        Method::DeltaTogl(Variant::First),
        Method::DeltaTogl(Variant::Second),
        Method::DeltaTogl(Variant::Third),
        Method::DeltaTogl(Variant::Random),
    ]);
    if let Some(m) = methods.iter().find(|m| !matches!(m, Method::DeltaTogl(_))) {
        return Err(Error::Config(format!(
            "delta-togl runs δ-TOGL methods only, got {m}"
        )));
    }
    let evals = sweep_sigma_trials(cfg, mode, &methods)?;
    let errs = average_curves(&evals, methods.len(), cfg.sigmas.len(), |e, i| e.rmse[i]);
    let ks = average_curves(&evals, methods.len(), cfg.sigmas.len(), |e, i| {
        e.sparsity[i] as f64
    });
    let deltas = cfg.delta_grid.grid()?.values;
    let mut curve_table =
        Table::new(["delta", "method", "sigma", "mean_test_rmse", "mean_k_final"]);
    for (mi, m) in methods.iter().enumerate() {
        for (si, &sigma) in cfg.sigmas.iter().enumerate() {
            for (j, &delta) in deltas.iter().enumerate() {
                curve_table.push(vec![
                    delta.into(),
                    m.to_string().into(),
                    sigma.into(),
                    errs[mi][si][j].into(),
                    ks[mi][si][j].into(),
                ]);
            }
        }
    }
    let records = records_by_method(cfg, &methods, &evals);
    let mut report = RunReport::new(manifest(cfg, kind, trial_seeds(cfg)));
    report
        .tables
        .insert("delta_togl_curves.csv".into(), curve_table);
    finish(report, records, mode)
}

/// Wall-clock cost and sparsity of single δ-TOGL fits across the δ grid.
pub fn run_cost_profile(cfg: &ExperimentConfig) -> Result<RunReport> {
    let kind = ExperimentKind::CostProfile;
    cfg.validate(kind)?;
    let method = cfg.methods_or(&[Method::DeltaTogl(Variant::First)])[0];
    let Some(selection) = method
        .selection()
        .filter(|_| matches!(method, Method::DeltaTogl(_)))
    else {
        return Err(Error::Config(format!(
            "cost-profile needs a δ-TOGL method, got {method}"
        )));
    };
    let deltas = cfg.delta_grid.grid()?.values;
    let mut sparse = Table::new(["sigma", "delta", "sparsity", "max_sparsity"]);
    let mut cost = Table::new(["sigma", "delta", "fit_time_s", "sparsity"]);
    for &sigma in &cfg.sigmas {
        let mut times = vec![Vec::with_capacity(cfg.trials); deltas.len()];
        let mut ks = vec![Vec::with_capacity(cfg.trials); deltas.len()];
        // sequential on purpose: concurrent fits would distort the timings
        for t in 0..cfg.trials {
            let inst = Instance::generate(
                cfg,
                cfg.m_train,
                cfg.n_atoms,
                sigma,
                trial_seed(cfg.seed, t as u64),
            )?;
            let seed = derive_seed(inst.seed, method_label(&method));
            for (j, &delta) in deltas.iter().enumerate() {
                let gc =
                    GreedyConfig::new(selection, StoppingRule::Adaptive { delta }).with_seed(seed);
                let start = Instant::now();
                let e = fit_greedy(&gc, &inst.train, &inst.dict)?;
                times[j].push(start.elapsed().as_secs_f64());
                ks[j].push(e.k_final as f64);
            }
        }
        for (j, &delta) in deltas.iter().enumerate() {
            let mean_k = mean_std(&ks[j]).0;
            let max_k = ks[j].iter().copied().fold(0.0, f64::max);
            sparse.push(vec![
                sigma.into(),
                delta.into(),
                mean_k.into(),
                max_k.into(),
            ]);
            cost.push(vec![
                sigma.into(),
                delta.into(),
                median(&times[j]).into(),
                mean_k.into(),
            ]);
        }
    }
    let mut report = RunReport::new(manifest(cfg, kind, trial_seeds(cfg)));
    report.tables.insert("cost_sparsity.csv".into(), sparse);
    report.timing.insert("cost_profile.csv".into(), cost);
    Ok(report)
}

/// Success counts of δ-TOGL over (training size, target accuracy) cells.
pub fn run_phase_diagram(cfg: &ExperimentConfig) -> Result<RunReport> {
    let kind = ExperimentKind::PhaseDiagram;
    cfg.validate(kind)?;
    let mode = cfg.mode_for(kind);
    let method = cfg.methods_or(&[Method::DeltaTogl(Variant::First)])[0];
    if !matches!(method, Method::DeltaTogl(_)) {
        return Err(Error::Config(format!(
            "phase-diagram needs a δ-TOGL method, got {method}"
        )));
    }
    let sigma = cfg.sigmas[0];
    let grid = cfg.delta_grid.grid()?;
    let cells: Vec<(usize, usize)> = (0..cfg.phase_m_values.len())
        .flat_map(|mi| (0..cfg.trials).map(move |t| (mi, t)))
        .collect();
    let results: Vec<TrialRecord> = cells
        .into_par_iter()
        .map(|(mi, t)| {
            let m = cfg.phase_m_values[mi];
            let seed = derive_seed(trial_seed(cfg.seed, t as u64), m as u64);
            let inst = Instance::generate(cfg, m, cfg.n_atoms, sigma, seed)?;
            let ev = evaluate(cfg, mode, method, &inst, &grid)?;
            Ok(record(method, sigma, &inst, t, cfg.n_atoms, &ev))
        })
        .collect::<Result<_>>()?;

    let mut header = vec!["m".to_string()];
    header.extend(cfg.phase_accuracies.iter().map(|a| format!("acc_{a}")));
    let mut matrix = Table::new(header);
    for &m in &cfg.phase_m_values {
        let mut row: Vec<Cell> = vec![m.into()];
        for &acc in &cfg.phase_accuracies {
            let wins = results
                .iter()
                .filter(|r| r.m_train == m && r.test_rmse < acc)
                .count();
            row.push(wins.into());
        }
        matrix.push(row);
    }
    let seeds = results.iter().map(|r| r.seed).collect();
    let mut report = RunReport::new(manifest(cfg, kind, seeds));
    report.tables.insert("phase_diagram.csv".into(), matrix);
    report
        .tables
        .insert("trials.csv".into(), trials_table(&results));
    report
        .timing
        .insert("timing.csv".into(), timing_table(&results));
    report.trials = results;
    Ok(report)
}

/// Greedy learners against ridge and Lasso for several dictionary sizes.
pub fn run_method_table(cfg: &ExperimentConfig) -> Result<RunReport> {
    let kind = ExperimentKind::MethodTable;
    cfg.validate(kind)?;
    let mode = cfg.mode_for(kind);
    let methods = cfg.methods_or(&[
        Method::Ogl(Variant::First),
        Method::DeltaTogl(Variant::First),
        Method::DeltaTogl(Variant::Second),
        Method::DeltaTogl(Variant::Third),
        Method::DeltaTogl(Variant::Random),
        Method::Ridge,
        Method::Lasso,
    ]);
    let grids = methods
        .iter()
        .map(|&m| param_grid(cfg, m))
        .collect::<Result<Vec<_>>>()?;
    let sigma = cfg.sigmas[0];
    let cells: Vec<(usize, usize)> = (0..cfg.n_atoms_list.len())
        .flat_map(|ni| (0..cfg.trials).map(move |t| (ni, t)))
        .collect();
    let per_cell: Vec<Vec<TrialRecord>> = cells
        .into_par_iter()
        .map(|(ni, t)| {
            let n = cfg.n_atoms_list[ni];
            let inst =
                Instance::generate(cfg, cfg.m_train, n, sigma, trial_seed(cfg.seed, t as u64))?;
            methods
                .iter()
                .zip(&grids)
                .map(|(&m, g)| {
                    Ok(record(
                        m,
                        sigma,
                        &inst,
                        t,
                        n,
                        &evaluate(cfg, mode, m, &inst, g)?,
                    ))
                })
                .collect()
        })
        .collect::<Result<_>>()?;

    let mut records = Vec::new();
    for mi in 0..methods.len() {
        for &n in &cfg.n_atoms_list {
            records.extend(
                per_cell
                    .iter()
                    .map(|c| &c[mi])
                    .filter(|r| r.n_atoms == n)
                    .cloned(),
            );
        }
    }
    let mut table = Table::new([
        "method",
        "n",
        "param",
        "test_rmse_mean",
        "test_rmse_std",
        "sparsity",
    ]);
    for (key, rs) in group(&records) {
        let params: Vec<f64> = rs.iter().map(|r| r.param).collect();
        let errs: Vec<f64> = rs.iter().map(|r| r.test_rmse).collect();
        let sparsity: Vec<f64> = rs.iter().map(|r| r.sparsity as f64).collect();
        let (mean, std) = mean_std(&errs);
        table.push(vec![
            key.method.into(),
            key.n_atoms.into(),
            median(&params).into(),
            mean.into(),
            std.into(),
            mean_std(&sparsity).0.into(),
        ]);
    }
    let mut report = RunReport::new(manifest(cfg, kind, trial_seeds(cfg)));
    report.tables.insert("method_table.csv".into(), table);
    report
        .tables
        .insert("trials.csv".into(), trials_table(&records));
    report
        .timing
        .insert("timing.csv".into(), timing_table(&records));
    report.trials = records;
    Ok(report)
}

/// Result of fitting one learner to external data.
#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub estimator: Estimator,
    pub train_rmse: f64,
    pub n_samples: usize,
}

/// Fit the configured greedy learner to an `x,y` CSV file.
pub fn fit_one(cfg: &ExperimentConfig, input: impl AsRef<Path>) -> Result<FitOutcome> {
    cfg.validate(ExperimentKind::Fit)?;
    let mut z = load_csv(input)?;
    if let Some(domain) = cfg.domain {
        z = SampleSet::new(z.xs, z.ys, None, 0, domain)?;
    }
    let spec = crate::dictionary::DictionarySpec {
        domain: z.domain,
        ..cfg.dictionary_spec(cfg.n_atoms)
    };
    let d = spec.build(&z.xs)?;
    let estimator = fit_greedy(&cfg.fit, &z, &d)?;
    let fitted = estimator.predict_design(&d, d.design())?;
    let train_rmse = rmse(&fitted, &z.ys)?;
    Ok(FitOutcome {
        estimator,
        train_rmse,
        n_samples: z.len(),
    })
}

/// Run the experiment behind a subcommand. `fit` is not a report-producing
/// experiment and is rejected here.
pub fn run(kind: ExperimentKind, cfg: &ExperimentConfig) -> Result<RunReport> {
    match kind {
        ExperimentKind::OglCompare => run_ogl_comparison(cfg),
        ExperimentKind::ToglCompare => run_togl_comparison(cfg),
        ExperimentKind::DeltaTogl => run_delta_togl(cfg),
        ExperimentKind::CostProfile => run_cost_profile(cfg),
        ExperimentKind::PhaseDiagram => run_phase_diagram(cfg),
        ExperimentKind::MethodTable => run_method_table(cfg),
        ExperimentKind::Fit => Err(Error::Config("fit needs an input file; use fit_one".into())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ExperimentConfig {
        ExperimentConfig {
            m_train: 60,
            m_test: 50,
            n_atoms: 20,
            sigmas: vec![0.1],
            trials: 2,
            k_max: 8,
            delta_grid: super::super::config::LogGridSpec {
                lo: 1e-4,
                hi: 0.5,
                count: 6,
            },
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn argmin_prefers_front_and_finite() {
        assert_eq!(argmin(&[2.0, 1.0, 1.0]), 1);
        assert_eq!(argmin(&[f64::INFINITY, 3.0]), 1);
        assert_eq!(argmin(&[f64::NAN, 3.0]), 1);
    }

    #[test]
    fn derived_seeds_differ() {
        assert_ne!(derive_seed(1, 2), derive_seed(2, 1));
        assert_ne!(derive_seed(0, 0), 0);
        assert_eq!(derive_seed(5, 9), derive_seed(5, 9));
    }

    #[test]
    fn ogl_prefixes_match_direct_fits() {
        let cfg = small();
        let inst = Instance::generate(&cfg, 60, 20, 0.1, 3).unwrap();
        let params = [1.0, 3.0, 5.0];
        let models = fit_grid(
            &cfg,
            Method::Ogl(Variant::Second),
            &params,
            &inst.train,
            &inst.dict,
            0,
        )
        .unwrap();
        for (&k, model) in params.iter().zip(models) {
            let Model::Greedy(e) = model.unwrap() else {
                panic!("greedy model expected")
            };
            let gc = GreedyConfig::new(
                crate::greedy::SelectionRule::KthMax { order: 2 },
                StoppingRule::FixedK { k_max: k as usize },
            );
            let direct = fit_greedy(&gc, &inst.train, &inst.dict).unwrap();
            assert_eq!(e.atom_indices, direct.atom_indices);
            for (a, b) in e.coefficients.iter().zip(&direct.coefficients) {
                assert!((a - b).abs() <= 1e-9 * b.abs().max(1.0));
            }
        }
    }

    #[test]
    fn lasso_path_matches_cold_starts() {
        let cfg = small();
        let inst = Instance::generate(&cfg, 60, 12, 0.1, 4).unwrap();
        let params = [1e-3, 1e-2];
        let models = fit_grid(&cfg, Method::Lasso, &params, &inst.train, &inst.dict, 0).unwrap();
        let problem = LassoProblem::new(&inst.dict, &inst.train.ys).unwrap();
        for (&lambda, model) in params.iter().zip(models) {
            let Model::Dense(warm) = model.unwrap() else {
                panic!("dense model expected")
            };
            let cold = problem
                .solve(&inst.dict, lambda, 20_000, 1e-10, None)
                .unwrap();
            let a = nalgebra::DVector::from_vec(warm.coefficients);
            let b = nalgebra::DVector::from_vec(cold.coefficients);
            let (fa, fb) = (problem.objective(&a, lambda), problem.objective(&b, lambda));
            assert!(
                (fa - fb).abs() <= 1e-6 * fb.abs().max(1e-12),
                "{fa} vs {fb}"
            );
        }
    }

    #[test]
    fn ogl_report_shape() {
        let report = run_ogl_comparison(&small()).unwrap();
        let curves = report.table("ogl_curves.csv").unwrap();
        assert_eq!(curves.rows.len(), 4 * 8);
        let summary = report.table("summary.csv").unwrap();
        assert_eq!(summary.rows.len(), 4);
        assert_eq!(report.trials.len(), 8);
    }

    #[test]
    fn togl_keeps_grid_endpoints() {
        let cfg = ExperimentConfig {
            methods: Some(vec![Method::Togl(Variant::First)]),
            ..small()
        };
        let report = run_togl_comparison(&cfg).unwrap();
        let deltas = report
            .table("togl_curves.csv")
            .unwrap()
            .column_f64("delta")
            .unwrap();
        assert_eq!(deltas[0], 1e-4);
        assert_eq!(*deltas.last().unwrap(), 0.5);
    }

    #[test]
    fn cv_mode_runs() {
        let cfg = ExperimentConfig {
            mode: Some(Mode::Cv),
            methods: Some(vec![
                Method::DeltaTogl(Variant::First),
                Method::DeltaTogl(Variant::Random),
            ]),
            ..small()
        };
        let report = run_delta_togl(&cfg).unwrap();
        assert!(report.trials.iter().all(|r| r.test_rmse.is_finite()));
        assert_eq!(report.manifest.mode, "cv");
    }

    #[test]
    fn wrong_family_is_a_config_error() {
        let cfg = ExperimentConfig {
            methods: Some(vec![Method::Ridge]),
            ..small()
        };
        assert!(matches!(run_ogl_comparison(&cfg), Err(Error::Config(_))));
        assert!(matches!(run_cost_profile(&cfg), Err(Error::Config(_))));
    }
}
