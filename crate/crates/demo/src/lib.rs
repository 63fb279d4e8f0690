//! wasm-bindgen bindings for the static page in `www/`.
//!
//! Every function takes and returns JSON strings so the page needs no glue
//! beyond `JSON.parse`. Errors are thrown as JS strings.

use serde::{Deserialize, Serialize};
use wasm_bindgen::prelude::*;

use iterteach::harness::{Experiment, ExperimentConfig};
use iterteach::teachers::{selection_objective, Pool};
use iterteach::theory::{pool_volume, PoolVolumeOptions};
use iterteach::{Example, LossKind, RegularizedLoss};

fn js_err(e: impl std::fmt::Display) -> JsValue {
    JsValue::from_str(&e.to_string())
}

#[derive(Serialize)]
struct Series {
    label: String,
    t: Vec<u64>,
    dist_to_wstar: Vec<f64>,
    train_objective: Vec<f64>,
}

/// Runs one experiment config and returns its distance and objective curves.
/// File-backed data sources are unavailable in the browser.
#[wasm_bindgen]
pub fn run_experiment(config_json: &str) -> Result<String, JsValue> {
    let cfg = ExperimentConfig::from_json(config_json).map_err(js_err)?;
    run(&cfg).map_err(js_err)
}

pub fn run(cfg: &ExperimentConfig) -> iterteach::Result<String> {
    let exp = Experiment::prepare(cfg)?;
    let out = exp.run()?;
    let rows = &out.trace.rows;
    let series = Series {
        label: cfg.label(),
        t: rows.iter().map(|r| r.t).collect(),
        dist_to_wstar: rows.iter().map(|r| r.dist_to_wstar).collect(),
        train_objective: rows.iter().map(|r| r.train_objective).collect(),
    };
    Ok(serde_json::to_string(&series)?)
}

/// Pool volume of a JSON array of points (arrays of equal length).
#[wasm_bindgen]
pub fn volume(points_json: &str) -> Result<String, JsValue> {
    let points: Vec<Vec<f64>> = serde_json::from_str(points_json).map_err(js_err)?;
    volume_of(points).map_err(js_err)
}

pub fn volume_of(points: Vec<Vec<f64>>) -> iterteach::Result<String> {
    let pool = Pool::enclosing(points.into_iter().map(|x| Example::new(x, 0.0)).collect())?;
    let report = pool_volume(&pool, &PoolVolumeOptions::default())?;
    Ok(serde_json::to_string(&report)?)
}

#[derive(Deserialize)]
pub struct ObjectiveQuery {
    pub loss: LossKind,
    #[serde(default)]
    pub lambda: f64,
    pub eta: f64,
    pub w: Vec<f64>,
    pub w_star: Vec<f64>,
    pub x: Vec<f64>,
    pub y: f64,
}

#[derive(Serialize)]
struct ObjectiveAnswer {
    t1: f64,
    t2: f64,
    combined: f64,
    dist_before: f64,
    dist_after: f64,
}

/// Teacher objective of one candidate example and the distance it leaves.
#[wasm_bindgen]
pub fn objective(query_json: &str) -> Result<String, JsValue> {
    let q: ObjectiveQuery = serde_json::from_str(query_json).map_err(js_err)?;
    objective_of(&q).map_err(js_err)
}

pub fn objective_of(q: &ObjectiveQuery) -> iterteach::Result<String> {
    let loss = RegularizedLoss::new(q.loss, q.lambda)?;
    let obj = selection_objective(&q.w, &q.w_star, &loss, q.eta, &Example::new(q.x.clone(), q.y))?;
    let before = iterteach::numkit::distance(&q.w, &q.w_star);
    let answer = ObjectiveAnswer {
        t1: obj.t1,
        t2: obj.t2,
        combined: obj.combined,
        dist_before: before,
        dist_after: (before * before + obj.combined).max(0.0).sqrt(),
    };
    Ok(serde_json::to_string(&answer)?)
}
