use greedy_dict::experiment::{
    run_cost_profile, run_delta_togl, run_method_table, run_phase_diagram, run_togl_comparison,
    ExperimentConfig, LogGridSpec, Method, Table, Variant,
};
use tempfile::TempDir;

fn base() -> ExperimentConfig {
    ExperimentConfig {
        m_train: 200,
        m_test: 200,
        n_atoms: 60,
        sigmas: vec![0.1],
        trials: 3,
        k_max: 15,
        delta_grid: LogGridSpec {
            lo: 1e-6,
            hi: 0.5,
            count: 20,
        },
        ..ExperimentConfig::default()
    }
}

/// Spearman rank correlation without tie correction.
fn spearman(a: &[f64], b: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0;
            for &k in &idx[i..=j] {
                r[k] = avg;
            }
            i = j + 1;
        }
        r
    }
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

#[test]
fn harsh_threshold_selects_almost_nothing() {
    let cfg = ExperimentConfig {
        methods: Some(vec![Method::Togl(Variant::First)]),
        ..base()
    };
    let report = run_togl_comparison(&cfg).unwrap();
    let curves = report.table("togl_curves.csv").unwrap();
    let deltas = curves.column_f64("delta").unwrap();
    let k_thr = curves.column_f64("mean_k_threshold_only").unwrap();
    assert_eq!(deltas[0], 1e-6);
    assert_eq!(*deltas.last().unwrap(), 0.5);
    assert!(*k_thr.last().unwrap() <= 1.0, "{k_thr:?}");
    assert!(k_thr[0] >= *k_thr.last().unwrap());
}

#[test]
fn delta_togl_reports_terminal_sparsity() {
    let report = run_delta_togl(&ExperimentConfig {
        methods: Some(vec![
            Method::DeltaTogl(Variant::First),
            Method::DeltaTogl(Variant::Arbitrary),
        ]),
        ..base()
    })
    .unwrap();
    let summary = report.table("summary.csv").unwrap();
    let k_star = summary.column_f64("k_star").unwrap();
    let sparsity = summary.column_f64("sparsity").unwrap();
    assert_eq!(k_star, sparsity);
    assert!(report.trials.iter().all(|r| r.sparsity <= 60));
}

#[test]
fn phase_diagram_extremes() {
    let cfg = ExperimentConfig {
        phase_m_values: vec![50, 150],
        phase_accuracies: vec![1e-9, 10.0],
        trials: 4,
        ..base()
    };
    let report = run_phase_diagram(&cfg).unwrap();
    let t = report.table("phase_diagram.csv").unwrap();
    assert_eq!(t.header, vec!["m", "acc_0.000000001", "acc_10"]);
    assert_eq!(t.column_f64("acc_0.000000001").unwrap(), vec![0.0, 0.0]);
    assert_eq!(t.column_f64("acc_10").unwrap(), vec![4.0, 4.0]);
    assert_eq!(report.manifest.mode, "cv");
}

#[test]
fn method_table_has_one_row_per_method_and_size() {
    let cfg = ExperimentConfig {
        trials: 2,
        n_atoms_list: vec![20, 40],
        lasso_max_iter: 2000,
        ..base()
    };
    let report = run_method_table(&cfg).unwrap();
    let t = report.table("method_table.csv").unwrap();
    assert_eq!(t.rows.len(), 7 * 2);
    let methods = t.column_text("method").unwrap();
    let ns = t.column_f64("n").unwrap();
    assert_eq!(&methods[..2], ["ogl1", "ogl1"]);
    assert_eq!(&ns[..2], [20.0, 40.0]);
    let ridge = methods.iter().position(|m| m == "ridge").unwrap();
    assert_eq!(t.column_f64("sparsity").unwrap()[ridge], 20.0);
}

#[test]
fn cost_profile_sparsity_falls_as_delta_grows() {
    let cfg = ExperimentConfig {
        trials: 10,
        ..base()
    };
    let report = run_cost_profile(&cfg).unwrap();
    let t = report.table("cost_sparsity.csv").unwrap();
    let rho = spearman(
        &t.column_f64("delta").unwrap(),
        &t.column_f64("sparsity").unwrap(),
    );
    assert!(rho <= 0.0, "{rho}");
    assert!(report.timing.contains_key("cost_profile.csv"));
}

#[test]
fn written_tables_parse_back_unchanged() {
    let report = run_delta_togl(&ExperimentConfig {
        methods: Some(vec![Method::DeltaTogl(Variant::First)]),
        ..base()
    })
    .unwrap();
    let dir = TempDir::new().unwrap();
    report.write_to(dir.path()).unwrap();
    for (name, table) in &report.tables {
        let text = std::fs::read_to_string(dir.path().join(name)).unwrap();
        let back = Table::parse(&text).unwrap();
        assert_eq!(back.to_csv(), text);
        assert_eq!(back.header, table.header);
        for col in ["test_rmse", "mean_test_rmse"] {
            if let (Ok(a), Ok(b)) = (back.column_f64(col), table.column_f64(col)) {
                assert_eq!(a, b);
            }
        }
    }
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["master_seed"], 1);
    assert_eq!(manifest["config"]["trials"], 3);
    assert_eq!(manifest["trial_seeds"].as_array().unwrap().len(), 3);
}
