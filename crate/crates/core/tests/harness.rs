use iterteach::harness::{
    self, compare, read_trace, replay_selected_set, run, trace_csv, Experiment, ExperimentConfig, MetricsTrace, TraceRow,
    TRACE_HEADER,
};
use iterteach::learner::batch_objective;
use iterteach::numkit::distance;
use iterteach::Error;
use serde_json::json;

fn config(value: serde_json::Value) -> ExperimentConfig {
    ExperimentConfig::from_json(&value.to_string()).unwrap()
}

fn gaussian(teacher: serde_json::Value, iterations: u64) -> ExperimentConfig {
    config(json!({
        "schema_version": 1,
        "loss": {"kind": "logistic", "lambda": 5e-5},
        "iterations": iterations,
        "seed": 3,
        "data": {"generator": "gaussian", "n_per_class": 200},
        "teacher": teacher,
    }))
}

fn ball(teacher: serde_json::Value, iterations: u64, seed: u64) -> ExperimentConfig {
    config(json!({
        "schema_version": 1,
        "loss": {"kind": "square"},
        "eta": 0.05,
        "iterations": iterations,
        "seed": seed,
        "data": {"generator": "ball", "dim": 5, "n": 100, "task": "regression", "radius": 1.0, "bias": false},
        "teacher": teacher,
    }))
}

#[test]
fn trace_has_one_row_per_iteration_plus_initial() {
    let out = run(&gaussian(json!({"kind": "omniscient", "strategy": "pool"}), 50)).unwrap();
    assert_eq!(out.trace.rows.len(), 51);
    assert_eq!(out.weights.len(), 51);
    let first = &out.trace.rows[0];
    assert_eq!(first.selected_index, -1);
    assert!(first.selected_gamma.is_none() && first.objective_combined.is_none());
    assert!(out.trace.rows.iter().all(|r| r.dist_to_wstar >= 0.0));
    assert!(out.trace.rows[1..].iter().all(|r| r.selected_index >= 0 && r.objective_combined.is_some()));
}

#[test]
fn zero_iterations_is_initial_state() {
    let cfg = gaussian(json!({"kind": "random"}), 0);
    let exp = Experiment::prepare(&cfg).unwrap();
    let out = exp.run().unwrap();
    assert_eq!(out.trace.rows.len(), 1);
    let r = &out.trace.rows[0];
    assert_eq!(r.t, 0);
    assert_eq!(r.dist_to_wstar, distance(&exp.w0, &exp.w_star));
    assert_eq!(r.train_objective, batch_objective(&exp.train.examples, &exp.loss, &exp.w0));
}

#[test]
fn logged_objective_matches_weights() {
    for teacher in [
        json!({"kind": "random"}),
        json!({"kind": "batch"}),
        json!({"kind": "surrogate"}),
        json!({"kind": "omniscient", "strategy": "rescalable_pool"}),
    ] {
        let cfg = gaussian(teacher, 40);
        let exp = Experiment::prepare(&cfg).unwrap();
        let out = exp.run().unwrap();
        for (row, w) in out.trace.rows.iter().zip(&out.weights) {
            let recomputed = batch_objective(&exp.train.examples, &exp.loss, w);
            assert!((row.train_objective - recomputed).abs() <= 1e-12);
            assert!((row.dist_to_wstar - distance(w, &exp.w_star)).abs() <= 1e-12);
        }
    }
}

#[test]
fn stops_once_within_epsilon() {
    let mut cfg = ball(json!({"kind": "omniscient", "strategy": "synthesis"}), 500, 1);
    cfg.epsilon = 1e-3;
    let out = run(&cfg).unwrap();
    let rows = &out.trace.rows;
    let hit = rows.iter().position(|r| r.dist_to_wstar < 1e-3).expect("synthesis reaches epsilon");
    assert_eq!(hit, rows.len() - 1);
    assert!(rows.len() < 501);
}

#[test]
fn repeated_runs_are_identical() {
    let cfg = gaussian(json!({"kind": "imitation", "warm_start": 3}), 30);
    let a = run(&cfg).unwrap();
    let b = run(&cfg).unwrap();
    assert_eq!(trace_csv(&a.trace).unwrap(), trace_csv(&b.trace).unwrap());
    let mut other = cfg.clone();
    other.seed += 1;
    assert_ne!(trace_csv(&a.trace).unwrap(), trace_csv(&run(&other).unwrap().trace).unwrap());
}

#[test]
fn written_files_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ball(json!({"kind": "omniscient", "strategy": "combination"}), 20, 4);
    let mut bytes = Vec::new();
    for sub in ["a", "b"] {
        let exp = Experiment::prepare(&cfg).unwrap();
        let out = exp.run().unwrap();
        let files = harness::write_run(&dir.path().join(sub), &exp.report(&out), &out.trace).unwrap();
        bytes.push((std::fs::read(&files.trace).unwrap(), std::fs::read(&files.report).unwrap()));
    }
    assert_eq!(bytes[0], bytes[1]);
    let leftovers: Vec<_> = std::fs::read_dir(dir.path().join("a"))
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(".tmp"))
        .collect();
    assert!(leftovers.is_empty());
}

#[test]
fn trace_csv_format_round_trips() {
    let out = run(&gaussian(json!({"kind": "omniscient", "strategy": "rescalable_pool"}), 10)).unwrap();
    let bytes = trace_csv(&out.trace).unwrap();
    let text = String::from_utf8(bytes.clone()).unwrap();
    assert_eq!(text.lines().next().unwrap(), TRACE_HEADER.join(","));
    assert!(!text.contains('\r'));
    assert_eq!(text.lines().count(), 12);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.csv");
    std::fs::write(&path, &bytes).unwrap();
    assert_eq!(read_trace(&path).unwrap(), out.trace);
}

#[test]
fn regression_rows_have_no_accuracy() {
    let out = run(&ball(json!({"kind": "random"}), 5, 1)).unwrap();
    assert!(out.trace.rows.iter().all(|r| r.test_accuracy.is_none()));
    let out = run(&gaussian(json!({"kind": "random"}), 5)).unwrap();
    assert!(out.trace.rows.iter().all(|r| r.test_accuracy.is_some()));
}

#[test]
fn synthesis_runs_carry_a_certificate() {
    let out = run(&ball(json!({"kind": "omniscient", "strategy": "synthesis"}), 100, 2)).unwrap();
    let cert = out.certificate.expect("synthesis certificate");
    assert!(cert.valid, "{:?}", cert.violations);
    assert!(out.trace.rows[1..].iter().all(|r| r.selected_index == -1 && r.selected_gamma.is_some()));
    assert!(run(&ball(json!({"kind": "random"}), 10, 2)).unwrap().certificate.is_none());
}

fn single_row_trace(index: i64) -> MetricsTrace {
    let row = |t, i| TraceRow {
        t,
        train_objective: 0.0,
        dist_to_wstar: 0.0,
        test_accuracy: None,
        selected_index: i,
        selected_gamma: None,
        objective_combined: None,
        query_count: 0,
    };
    MetricsTrace {
        rows: vec![row(0, -1), row(1, index), row(2, index)],
    }
}

#[test]
fn replay_of_one_example_repeats_it() {
    let cfg = ball(json!({"kind": "random"}), 30, 5);
    let r = replay_selected_set(&single_row_trace(7), &cfg).unwrap();
    assert_eq!(r.rows.len(), 31);
    assert!(r.rows[1..].iter().all(|row| row.selected_index == 7));
    assert_eq!(r, replay_selected_set(&single_row_trace(7), &cfg).unwrap());
}

#[test]
fn replay_stays_inside_the_selected_set() {
    let cfg = gaussian(json!({"kind": "omniscient", "strategy": "pool"}), 200);
    let exp = Experiment::prepare(&cfg).unwrap();
    let original = exp.run().unwrap().trace;
    let subset = original.selected_indices();
    let replayed = exp.replay(&original).unwrap();
    assert_eq!(replayed.rows.len(), original.rows.len());
    assert_eq!(replayed.rows[0], original.rows[0]);
    assert!(replayed.rows[1..]
        .iter()
        .all(|r| subset.binary_search(&(r.selected_index as usize)).is_ok()));
}

#[test]
fn replay_rejects_synthesis_traces() {
    let cfg = ball(json!({"kind": "omniscient", "strategy": "synthesis"}), 10, 1);
    let trace = run(&cfg).unwrap().trace;
    assert!(matches!(replay_selected_set(&trace, &cfg), Err(Error::NoPoolIndices)));
}

#[test]
fn comparing_a_config_with_itself() {
    let cfg = gaussian(json!({"kind": "surrogate"}), 25);
    let cmp = compare(&[cfg.clone(), cfg.clone(), cfg]).unwrap();
    assert_eq!(cmp.summary.len(), 3);
    assert_eq!(cmp.traces[0], cmp.traces[1]);
    assert_eq!(cmp.summary[0].final_dist_to_wstar, cmp.summary[2].final_dist_to_wstar);
    let labels: std::collections::HashSet<_> = cmp.summary.iter().map(|m| m.label.clone()).collect();
    assert_eq!(labels.len(), 3);
}

#[test]
fn compare_rejects_mismatched_data() {
    let a = gaussian(json!({"kind": "random"}), 5);
    let mut b = a.clone();
    b.seed += 1;
    assert!(matches!(compare(&[a.clone(), b]), Err(Error::Config(_))));
    let mut c = a.clone();
    c.eta = Some(0.5);
    assert!(matches!(compare(&[a, c]), Err(Error::Config(_))));
}

#[test]
fn ball_synthesis_never_trails_random() {
    for seed in 0..3 {
        let cmp = compare(&[
            ball(json!({"kind": "random"}), 300, seed),
            ball(json!({"kind": "omniscient", "strategy": "synthesis"}), 300, seed),
        ])
        .unwrap();
        for (r, o) in cmp.traces[0].rows.iter().zip(&cmp.traces[1].rows) {
            assert!(o.dist_to_wstar <= r.dist_to_wstar + 1e-9, "seed {seed} t {}", r.t);
        }
        assert!(cmp.summary[1].area_under_dist < cmp.summary[0].area_under_dist);
    }
}

#[test]
fn compare_files_are_written() {
    let dir = tempfile::tempdir().unwrap();
    let cmp = compare(&[
        ball(json!({"kind": "random"}), 10, 0),
        ball(json!({"kind": "batch"}), 10, 0),
    ])
    .unwrap();
    let files = harness::write_comparison(dir.path(), &cmp).unwrap();
    let csv = std::fs::read_to_string(&files.traces).unwrap();
    assert!(csv.starts_with("t,random:dist_to_wstar,random:train_objective,random:test_accuracy,batch:"));
    assert_eq!(csv.lines().count(), 12);
    let summary: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&files.summary).unwrap()).unwrap();
    assert_eq!(summary["summary"].as_array().unwrap().len(), 2);
}

#[test]
fn teaching_errors_name_the_iteration() {
    // three pool points cannot span five dimensions
    let mut cfg = ball(json!({"kind": "omniscient", "strategy": "combination"}), 10, 1);
    cfg.data.source = harness::DataSource::Ball {
        dim: 5,
        n: 3,
        task: iterteach::data::BallTask::Regression,
        noise: 0.0,
    };
    let err = run(&cfg).unwrap_err();
    assert!(matches!(err, Error::Teaching { iteration: 1, .. }), "{err}");
    assert_eq!(err.exit_code(), 3);
}

#[test]
fn classification_synthesis_needs_small_optimum() {
    let cfg = gaussian(json!({"kind": "omniscient", "strategy": "synthesis"}), 10);
    let err = run(&cfg).unwrap_err();
    assert!(err.to_string().contains("‖w*‖ ≤ 1"), "{err}");
    assert_eq!(err.exit_code(), 3);
}

#[test]
fn config_validation() {
    let bad = [
        json!({"schema_version": 2, "loss": {"kind": "square"}, "iterations": 1, "data": {"generator": "spherical"}, "teacher": {"kind": "random"}}),
        json!({"loss": {"kind": "square"}, "eta": -1.0, "iterations": 1, "data": {"generator": "spherical"}, "teacher": {"kind": "random"}}),
        json!({"loss": {"kind": "square"}, "iterations": 1, "data": {"generator": "spherical", "radius": 0.0}, "teacher": {"kind": "random"}}),
        json!({"loss": {"kind": "square"}, "iterations": 1, "data": {"generator": "spherical"}, "teacher": {"kind": "oracle"}}),
        json!({"loss": {"kind": "square"}, "iterations": 1, "data": {"generator": "spherical"}, "teacher": {"kind": "random"}, "extra": 1}),
        json!({"loss": {"kind": "hinge"}, "iterations": 1, "data": {"generator": "ball", "dim": 2, "n": 5, "task": "regression"}, "teacher": {"kind": "random"}}),
        json!({"loss": {"kind": "logistic", "lambda": -1.0}, "iterations": 1, "data": {"generator": "gaussian"}, "teacher": {"kind": "random"}}),
    ];
    for v in bad {
        let e = ExperimentConfig::from_json(&v.to_string()).unwrap_err();
        assert!(matches!(e, Error::Config(_)), "{v}: {e}");
        assert_eq!(e.exit_code(), 2);
    }
}

#[test]
fn learning_rate_defaults() {
    let mk = |data: serde_json::Value| {
        config(json!({"loss": {"kind": "logistic"}, "iterations": 1, "data": data, "teacher": {"kind": "random"}})).eta()
    };
    assert_eq!(mk(json!({"generator": "gaussian"})), 1e-4);
    assert_eq!(mk(json!({"generator": "gaussian", "teacher_space": "random_orthogonal"})), 1e-5);
    assert_eq!(mk(json!({"generator": "spherical"})), 1e-3);
    assert_eq!(mk(json!({"generator": "spherical", "teacher_space": "random_orthogonal"})), 1e-4);
}

#[test]
fn file_data_runs() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("train.csv");
    std::fs::write(&path, "f1,f2,label\n0.5,0.1,1\n-0.4,0.2,-1\n0.3,-0.6,1\n-0.1,-0.3,-1\n").unwrap();
    let cfg_path = dir.path().join("cfg.json");
    std::fs::write(
        &cfg_path,
        json!({"loss": {"kind": "hinge", "lambda": 0.01}, "iterations": 20,
               "data": {"generator": "file", "path": "train.csv"}, "teacher": {"kind": "random"}})
        .to_string(),
    )
    .unwrap();
    let cfg = ExperimentConfig::load(&cfg_path).unwrap();
    assert_eq!(cfg.eta(), 1e-3);
    let exp = Experiment::prepare(&cfg).unwrap();
    assert_eq!(exp.train.dim(), 3);
    assert_eq!(exp.run().unwrap().trace.rows.len(), 21);
}
