use nalgebra::DMatrix;
use svshrink::matnorm::{haar_orthogonal, rng_stream, ModelSpec};
use svshrink::predictive::uniform_kl_risk;
use svshrink::riskbench::*;
use svshrink::Error;

fn small(name: &str, reps: usize, grid: &[f64]) -> RiskExperiment {
    let mut e = preset(name, reps, 11).unwrap();
    e.grid = grid.to_vec();
    e
}

#[test]
fn mean_from_singulars_embeds_diagonal() {
    let s = ModelSpec::unit(4, 2).unwrap();
    let z = mean_from_singulars(&s, &[0.0, 0.0]).unwrap();
    assert_eq!(z.entries(), &DMatrix::zeros(4, 2));
    let m = mean_from_singulars(&s, &[20.0, 5.0]).unwrap().into_inner();
    let expect = DMatrix::from_row_slice(4, 2, &[20.0, 0.0, 0.0, 5.0, 0.0, 0.0, 0.0, 0.0]);
    assert_eq!(m, expect);
    assert!(matches!(
        mean_from_singulars(&s, &[1.0, -1.0]),
        Err(Error::InvalidParameter(_))
    ));
    assert!(mean_from_singulars(&s, &[1.0]).is_err());
}

#[test]
fn mle_risk_is_nm_v1() {
    let t = run_experiment(&small("fig1", 400, &[0.0, 10.0])).unwrap();
    for g in [0.0, 10.0] {
        let r = t.row(g, "mle").unwrap();
        assert!((r.mean_risk - 8.0).abs() < 3.0 * r.std_error, "{r:?}");
    }
}

#[test]
fn uniform_predictive_risk_is_constant() {
    let e = small("fig6", 400, &[0.0, 8.0]);
    let t = run_experiment(&e).unwrap();
    let k = uniform_kl_risk(&e.spec);
    assert!((k - 4.0 * 2f64.ln()).abs() < 1e-12);
    for g in [0.0, 8.0] {
        let r = t.row(g, "uniform").unwrap();
        assert!((r.mean_risk - k).abs() < 3.0 * r.std_error, "{r:?}");
    }
    let s = t.row(0.0, "stein").unwrap();
    assert!(s.mean_risk < k, "{s:?}");
}

/// Risk depends on the mean only through its singular values.
#[test]
fn risk_invariant_under_rotation() {
    let e = small("fig1", 300, &[3.0]);
    let sig = e.singulars_at(3.0);
    let base = mean_from_singulars(&e.spec, &sig).unwrap().into_inner();
    let mut rng = rng_stream(5, 0);
    let p = haar_orthogonal(4, &mut rng);
    let q = haar_orthogonal(2, &mut rng);
    let rotated = &p * &base * &q;
    let risk = |truth: &DMatrix<f64>, seed: u64| {
        let l: Vec<f64> = (0..e.replications)
            .map(|r| {
                let mut g = rng_stream(seed, r as u64);
                let y = svshrink::matnorm::sample_around(truth, 1.0, &mut g);
                let est = svshrink::estimators::bayes_estimate(
                    &svshrink::PriorKind::Svs,
                    &e.spec,
                    &y,
                    1.0,
                    &e.series,
                )
                .unwrap();
                svshrink::estimators::frobenius_loss(&est.estimate, truth)
            })
            .collect();
        svshrink::stats::mean_and_stderr(&l)
    };
    let (a, sa) = risk(&base, 1);
    let (b, sb) = risk(&rotated, 2);
    assert!(
        (a - b).abs() < 3.0 * (sa * sa + sb * sb).sqrt(),
        "{a} +- {sa} vs {b} +- {sb}"
    );
}

#[test]
fn reruns_are_bit_identical() {
    let e = small("fig2", 150, &[0.0, 4.0]);
    let a = run_experiment(&e).unwrap();
    let b = run_experiment(&e).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.to_csv(), b.to_csv());
    let mut other = e.clone();
    other.master_seed += 1;
    assert_ne!(run_experiment(&other).unwrap().to_csv(), a.to_csv());
}

#[test]
fn common_random_numbers_reduce_variance() {
    let t = run_experiment(&small("fig1", 300, &[4.0])).unwrap();
    let (_, paired) = t.paired_difference(0, "mle", "svs-bayes").unwrap();
    let a = t.row(4.0, "mle").unwrap().std_error;
    let b = t.row(4.0, "svs-bayes").unwrap().std_error;
    assert!(paired < (a * a + b * b).sqrt(), "{paired} vs {a}, {b}");
}

#[test]
fn rows_sorted_and_csv_round_trips() {
    let t = run_experiment(&small("fig2", 100, &[6.0, 0.0])).unwrap();
    let keys: Vec<(f64, &str)> = t
        .rows
        .iter()
        .map(|r| (r.grid_value, r.method.as_str()))
        .collect();
    let mut sorted = keys.clone();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(b.1)));
    assert_eq!(keys, sorted);
    let csv = t.to_csv();
    assert!(csv.starts_with(CSV_HEADER));
    let back = RiskTable::from_csv(&csv).unwrap();
    assert_eq!(back.rows, t.rows);
    assert!(RiskTable::from_csv("a,b\n").is_err());
    assert!(RiskTable::from_csv(&format!("{CSV_HEADER}\n1,mle,x,0,1,\n")).is_err());
}

#[test]
fn experiment_json_round_trips_with_defaults() {
    let e = preset("fig3", 2000, 1).unwrap();
    let j = serde_json::to_string(&e).unwrap();
    let back: RiskExperiment = serde_json::from_str(&j).unwrap();
    assert_eq!(back, e);
    let minimal = r#"{"spec":{"n":4,"m":2,"v1":1.0,"v2":1.0},"kind":"estimation",
        "fixed_singulars":[20.0,null],"swept_index":2,"grid":[0.0],"methods":["mle"],"master_seed":3}"#;
    let e: RiskExperiment = serde_json::from_str(minimal).unwrap();
    assert_eq!(e.replications, 10_000);
    e.validate().unwrap();
}

#[test]
fn invalid_experiments_rejected() {
    let good = small("fig1", 100, &[0.0]);
    let mut e = good.clone();
    e.replications = 99;
    assert!(e.validate().is_err());
    let mut e = good.clone();
    e.methods = vec!["nope".into()];
    assert!(run_experiment(&e).is_err());
    let mut e = good.clone();
    e.swept_index = 3;
    assert!(e.validate().is_err());
    let mut e = good.clone();
    e.fixed_singulars = vec![None, None];
    assert!(e.validate().is_err());
    let mut e = good.clone();
    e.grid = vec![-1.0];
    assert!(e.validate().is_err());
    let mut e = good;
    e.methods = vec!["uniform".into()];
    assert!(e.validate().is_err());
    assert!(preset("fig9", 100, 0).is_err());
    assert!(run_prediction_experiment(&small("fig1", 100, &[0.0])).is_err());
}

#[test]
fn presets_cover_all_configurations() {
    for i in 1..=8 {
        let e = preset(&format!("fig{i}"), 2000, 0).unwrap();
        e.validate().unwrap();
        assert_eq!(e.grid, default_grid());
        assert_eq!(e.grid.len(), 11);
        assert_eq!(e.spec.m(), if (i - 1) % 4 < 2 { 2 } else { 3 });
    }
    assert_eq!(
        preset("fig1", 100, 0).unwrap().singulars_at(6.0),
        vec![20.0, 6.0]
    );
    assert_eq!(
        preset("fig4", 100, 0).unwrap().singulars_at(6.0),
        vec![6.0, 0.0, 0.0]
    );
}

#[test]
fn dominance_reports_each_grid_point() {
    let t = run_experiment(&small("fig2", 200, &[0.0, 2.0])).unwrap();
    let d = dominance(&t, "mle", "svs-bayes", 3.0).unwrap();
    assert_eq!(d.len(), 2);
    assert!(d.iter().all(|r| r.passed), "{d:?}");
    assert!(dominance(&t, "mle", "absent", 3.0).is_none());
    assert_eq!(summary(&t).len(), 4);
}

#[test]
fn risk_identity_holds_at_small_mean() {
    let s = ModelSpec::unit(4, 2).unwrap();
    let r = risk_identity_check(&s, &[1.0, 0.5], 300, 2, &Default::default()).unwrap();
    assert!(r.discrepancy() < 3.0, "{r:?}");
    assert!(r.all_converged);
}
