//! Experiment orchestration: data preparation, teaching loops, replays and
//! comparisons.

mod config;
mod output;

use serde::{Deserialize, Serialize};

pub use config::{
    CompareConfig, DataSource, DataSpec, ExperimentConfig, LossSpec, SpaceMode, Strategy, TeacherSpace, TeacherSpec,
    SCHEMA_VERSION,
};
pub use output::{
    read_trace, trace_csv, write_atomic, write_comparison, write_replay, write_run, ComparisonFiles, RunFiles,
    TRACE_HEADER,
};

use crate::data::{self, BallTask, Dataset, DatasetMeta, FeatureMap};
use crate::error::{Error, Result};
use crate::learner::{batch_gradient, batch_objective, random_init, train_batch, BatchFit, BatchOptions, Example, LearnerState};
use crate::losses::RegularizedLoss;
use crate::numkit::{distance, inner, sub, Rng};
use crate::teachers::{
    omniscient_pool_select, random_select, rescalable_pool_select, selection_objective, surrogate_select,
    CombinationTeacher, ImitationState, ImitationTeacher, Pool, ScaleGrid, SynthesisTeacher,
};
use crate::theory::{certify_distances, TeachabilityCertificate};

const STREAM_DATA: u64 = 1;
const STREAM_INIT: u64 = 2;
const STREAM_TEACHER: u64 = 3;
const STREAM_MAP: u64 = 4;
const STREAM_REPLAY: u64 = 5;
/// Mixed into the run seed for the held-out set.
pub const TEST_SEED_XOR: u64 = 0x5EED_7E57_0000_0001;

/// Scale of the standard-normal initialization.
pub const INIT_SCALE: f64 = 0.1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub t: u64,
    pub train_objective: f64,
    pub dist_to_wstar: f64,
    /// Classification runs with a held-out set only.
    pub test_accuracy: Option<f64>,
    /// `-1` for synthesized examples and batch steps.
    pub selected_index: i64,
    pub selected_gamma: Option<f64>,
    pub objective_combined: Option<f64>,
    pub query_count: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsTrace {
    pub rows: Vec<TraceRow>,
}

impl MetricsTrace {
    pub fn last(&self) -> Option<&TraceRow> {
        self.rows.last()
    }

    pub fn distances(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.dist_to_wstar).collect()
    }

    /// Distinct selected pool indices, sorted.
    pub fn selected_indices(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = self
            .rows
            .iter()
            .filter(|r| r.t > 0 && r.selected_index >= 0)
            .map(|r| r.selected_index as usize)
            .collect();
        idx.sort_unstable();
        idx.dedup();
        idx
    }
}

/// Everything a run needs, built deterministically from the config.
#[derive(Clone, Debug)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub loss: RegularizedLoss,
    pub eta: f64,
    /// Student-space training data, bias included.
    pub train: Dataset,
    pub test: Option<Dataset>,
    /// Training data as the teacher sees it.
    pub teacher_train: Dataset,
    pub student_pool: Pool,
    pub teacher_pool: Pool,
    pub w_star: Vec<f64>,
    pub w_star_fit: BatchFit,
    /// Teacher-space optimum, for the teachers that work there.
    pub v_star: Option<Vec<f64>>,
    pub w0: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub trace: MetricsTrace,
    /// `w^t` for every trace row.
    pub weights: Vec<Vec<f64>>,
    pub certificate: Option<TeachabilityCertificate>,
}

/// JSON sidecar of a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub label: String,
    pub config: ExperimentConfig,
    pub rng: String,
    pub data: DatasetMeta,
    pub w_star: Vec<f64>,
    pub w_star_fit: FitSummary,
    pub final_row: Option<TraceRow>,
    pub certificate: Option<TeachabilityCertificate>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub method: crate::learner::BatchMethod,
    pub converged: bool,
    pub stationarity: f64,
    pub iterations: u64,
}

impl From<&BatchFit> for FitSummary {
    fn from(f: &BatchFit) -> Self {
        Self {
            method: f.method,
            converged: f.converged,
            stationarity: f.stationarity,
            iterations: f.iterations,
        }
    }
}

fn with_bias(ds: Dataset, bias: bool) -> Dataset {
    if bias {
        data::augment_bias(&ds)
    } else {
        ds
    }
}

fn build_pool(ds: &Dataset, radius: Option<f64>) -> Result<Pool> {
    match radius {
        Some(r) => Pool::new(ds.examples.clone(), r),
        None => Pool::enclosing(ds.examples.clone()),
    }
}

fn load_raw(config: &ExperimentConfig, root: &Rng) -> Result<(Dataset, Option<Dataset>)> {
    let kind = config.loss.kind;
    let mut rng = root.derive(STREAM_DATA);
    let mut test_rng = Rng::new(config.seed ^ TEST_SEED_XOR);
    Ok(match &config.data.source {
        DataSource::Gaussian { dim, n_per_class, mean } => (
            data::gen_gaussian(*dim, *n_per_class, *mean, &mut rng)?,
            Some(data::gen_gaussian(*dim, *n_per_class, *mean, &mut test_rng)?),
        ),
        DataSource::Spherical { n } => (
            data::gen_spherical(*n, &mut rng)?,
            Some(data::gen_spherical(*n, &mut test_rng)?),
        ),
        DataSource::Ball { dim, n, task, noise } => {
            // one draw so both halves share the labelling rule
            let radius = config.data.radius.unwrap_or(1.0);
            let all = data::gen_ball(*dim, 2 * n, radius, *task, *noise, &mut rng)?;
            let (train, test) = all.examples.split_at(*n);
            let train = Dataset::new(train.to_vec(), "ball", Some(config.seed))?;
            let test = Dataset::new(test.to_vec(), "ball-test", Some(config.seed))?;
            (train, (*task == BallTask::Classification).then_some(test))
        }
        DataSource::File { path, test_path } => {
            let train = data::load_features(path, Some(kind))?;
            let test = test_path.as_deref().map(|p| data::load_features(p, Some(kind))).transpose()?;
            (train, test)
        }
    })
}

impl Experiment {
    pub fn prepare(config: &ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let loss = config.loss.loss()?;
        let root = Rng::new(config.seed);
        let (raw, raw_test) = load_raw(config, &root)?;
        if let Some(t) = &raw_test {
            if t.dim() != raw.dim() {
                return Err(Error::Config(format!(
                    "test set has dimension {}, training set {}",
                    t.dim(),
                    raw.dim()
                )));
            }
        }
        raw.check_labels(loss.kind)?;
        let map = match config.data.teacher_space {
            TeacherSpace::Same => FeatureMap::identity(raw.dim()),
            TeacherSpace::RandomOrthogonal => FeatureMap::random(raw.dim(), &mut root.derive(STREAM_MAP)),
        };
        let teacher_raw = data::apply_map(&map, &raw)?;
        let bias = config.data.bias;
        let train = with_bias(raw, bias);
        let teacher_train = with_bias(teacher_raw, bias);
        let test = raw_test.map(|t| with_bias(t, bias));

        let student_pool = build_pool(&train, config.data.radius)?;
        // the map preserves norms, so the radius carries over up to rounding
        let teacher_radius = student_pool.radius() * (1.0 + 1e-12);
        let teacher_pool = Pool::new(teacher_train.examples.clone(), teacher_radius)?;

        let opts = BatchOptions::default();
        let w_star_fit = train_batch(&train.examples, &loss, &opts)?;
        let v_star = if config.teacher.uses_teacher_space() {
            Some(train_batch(&teacher_train.examples, &loss, &opts)?.w)
        } else {
            None
        };
        let w0 = random_init(train.dim(), INIT_SCALE, &mut root.derive(STREAM_INIT));
        Ok(Self {
            config: config.clone(),
            loss,
            eta: config.eta(),
            w_star: w_star_fit.w.clone(),
            w_star_fit,
            v_star,
            w0,
            train,
            test,
            teacher_train,
            student_pool,
            teacher_pool,
        })
    }

    /// `selected` is `(index, gamma, combined)` for every row after the first.
    fn row(&self, t: u64, w: &[f64], selected: Option<(i64, Option<f64>, f64)>, queries: u64) -> TraceRow {
        TraceRow {
            t,
            train_objective: batch_objective(&self.train.examples, &self.loss, w),
            dist_to_wstar: distance(w, &self.w_star),
            test_accuracy: self.test_accuracy(w),
            selected_index: selected.map_or(-1, |s| s.0),
            selected_gamma: selected.and_then(|s| s.1),
            objective_combined: selected.map(|s| s.2),
            query_count: queries,
        }
    }

    /// Sign agreement on the held-out set; classification only.
    pub fn test_accuracy(&self, w: &[f64]) -> Option<f64> {
        if !self.loss.kind.is_classification() {
            return None;
        }
        let test = self.test.as_ref()?;
        let hits = test
            .examples
            .iter()
            .filter(|e| {
                let s = if inner(w, &e.x) >= 0.0 { 1.0 } else { -1.0 };
                s == e.y
            })
            .count();
        Some(hits as f64 / test.len() as f64)
    }

    fn stop(&self, w: &[f64]) -> bool {
        self.config.epsilon > 0.0 && distance(w, &self.w_star) < self.config.epsilon
    }

    fn teacher_loss(&self, include_regularizer: bool) -> RegularizedLoss {
        if include_regularizer {
            self.loss
        } else {
            RegularizedLoss::unregularized(self.loss.kind)
        }
    }

    fn driver(&self) -> Result<Driver> {
        let radius = self.student_pool.radius();
        Ok(match &self.config.teacher {
            TeacherSpec::Random => Driver::Random,
            TeacherSpec::Batch => Driver::Batch,
            TeacherSpec::Omniscient {
                strategy,
                grid_size,
                include_regularizer,
            } => {
                let loss = self.teacher_loss(*include_regularizer);
                match strategy {
                    Strategy::Synthesis => Driver::Synthesis(SynthesisTeacher::new(
                        &self.w0,
                        self.w_star.clone(),
                        self.loss.kind,
                        self.eta,
                        radius,
                    )?),
                    Strategy::Combination => Driver::Combination(CombinationTeacher::new(
                        SynthesisTeacher::new(&self.w0, self.w_star.clone(), self.loss.kind, self.eta, radius)?,
                        &self.student_pool,
                    )?),
                    Strategy::Pool => Driver::Pool(loss),
                    Strategy::RescalablePool => Driver::Rescalable(loss, ScaleGrid::new(radius, *grid_size)?),
                }
            }
            TeacherSpec::Surrogate { space } => Driver::Surrogate(*space == SpaceMode::Cross),
            TeacherSpec::Imitation { warm_start } => {
                let v_star = self.v_star.clone().expect("teacher-space optimum is trained for imitation");
                let state = ImitationState::new(vec![0.0; v_star.len()], v_star, self.config.eta_v())?;
                let teacher = ImitationTeacher::new(state, self.teacher_pool.clone())?;
                Driver::Imitation(Box::new(teacher), *warm_start)
            }
        })
    }

    /// Runs the configured teaching loop.
    pub fn run(&self) -> Result<RunOutput> {
        let mut teacher_rng = Rng::new(self.config.seed).derive(STREAM_TEACHER);
        let mut driver = self.driver()?;
        let mut student = LearnerState::new(self.w0.clone(), self.eta, self.loss)?;
        if let Driver::Imitation(t, k) = &mut driver {
            t.warm_start(&mut student, &self.student_pool, *k, &mut teacher_rng)
                .map_err(|e| e.at_iteration(0))?;
        }
        let mut rows = vec![self.row(0, student.weights(), None, student.query_count())];
        let mut weights = vec![student.weights().to_vec()];
        let mut nus = Vec::new();
        let mut first_gamma = None;
        for t in 1..=self.config.iterations {
            if self.stop(student.weights()) {
                break;
            }
            let lesson = self
                .lesson(&mut driver, &mut student, &mut teacher_rng)
                .and_then(|l| {
                    self.apply(&mut student, &l)?;
                    if let Driver::Imitation(teacher, _) = &mut driver {
                        let i = l.index as usize;
                        teacher.observe(&mut student, &self.student_pool, i)?;
                    }
                    Ok(l)
                })
                .map_err(|e| e.at_iteration(t))?;
            if let Some(nu) = lesson.nu {
                nus.push(nu);
                first_gamma.get_or_insert(lesson.gamma.unwrap_or(0.0));
            }
            let selected = (lesson.index, lesson.gamma, lesson.combined);
            rows.push(self.row(t, student.weights(), Some(selected), student.query_count()));
            weights.push(student.weights().to_vec());
        }
        let trace = MetricsTrace { rows };
        let certificate = match (&driver, nus.iter().copied().reduce(f64::min)) {
            (Driver::Synthesis(_) | Driver::Combination(_), Some(nu)) if trace.rows.len() >= 2 && nu > 0.0 => Some(
                certify_distances(&trace.distances(), self.eta, nu, first_gamma.unwrap_or(0.0), self.config.epsilon)?,
            ),
            _ => None,
        };
        Ok(RunOutput {
            trace,
            weights,
            certificate,
        })
    }

    fn lesson(&self, driver: &mut Driver, student: &mut LearnerState, rng: &mut Rng) -> Result<Lesson> {
        let w = student.weights().to_vec();
        let pool_lesson = |index: usize, gamma: Option<f64>| -> Result<Lesson> {
            let e = self.student_pool.examples()[index].clone();
            let combined = selection_objective(&w, &self.w_star, &self.loss, self.eta, &e)?.combined;
            Ok(Lesson {
                step: Step::Example(e),
                index: index as i64,
                gamma,
                nu: None,
                combined,
            })
        };
        match driver {
            Driver::Random => {
                let (i, _) = random_select(&self.student_pool, rng)?;
                pool_lesson(i, None)
            }
            Driver::Batch => {
                let g = batch_gradient(&self.train.examples, &self.loss, &w);
                let u = sub(&w, &self.w_star)?;
                let combined = self.eta * self.eta * inner(&g, &g) - 2.0 * self.eta * inner(&u, &g);
                Ok(Lesson {
                    step: Step::Gradient(g),
                    index: -1,
                    gamma: None,
                    nu: None,
                    combined,
                })
            }
            Driver::Synthesis(teacher) => {
                let s = teacher.teach(&w)?;
                self.synthesized(&w, s.example, s.gamma, s.nu, s.converged)
            }
            Driver::Combination(teacher) => {
                let (_, s) = teacher.teach(&w)?;
                self.synthesized(&w, s.example, s.gamma, s.nu, s.converged)
            }
            Driver::Pool(loss) => {
                let c = omniscient_pool_select(&w, &self.w_star, loss, self.eta, &self.student_pool)?;
                pool_lesson(c.index, None)
            }
            Driver::Rescalable(loss, grid) => {
                let c = rescalable_pool_select(&w, &self.w_star, loss, self.eta, &self.student_pool, grid)?;
                let combined = selection_objective(&w, &self.w_star, &self.loss, self.eta, &c.example)?.combined;
                Ok(Lesson {
                    step: Step::Example(c.example),
                    index: c.index as i64,
                    gamma: Some(c.gamma),
                    nu: None,
                    combined,
                })
            }
            Driver::Surrogate(cross) => {
                let (target, teacher_pool) = if *cross {
                    (self.v_star.as_deref().expect("trained for cross-space"), &self.teacher_pool)
                } else {
                    (self.w_star.as_slice(), &self.student_pool)
                };
                let c = surrogate_select(student, target, self.loss.kind, self.eta, &self.student_pool, teacher_pool)?;
                pool_lesson(c.index, None)
            }
            Driver::Imitation(teacher, _) => {
                let c = teacher.select(&self.loss, self.eta)?;
                pool_lesson(c.index, None)
            }
        }
    }

    fn synthesized(&self, w: &[f64], example: Example, gamma: f64, nu: f64, converged: bool) -> Result<Lesson> {
        let combined = selection_objective(w, &self.w_star, &self.loss, self.eta, &example)?.combined;
        Ok(Lesson {
            step: Step::Example(example),
            index: -1,
            gamma: Some(gamma),
            nu: (!converged).then_some(nu),
            combined,
        })
    }

    fn apply(&self, student: &mut LearnerState, lesson: &Lesson) -> Result<()> {
        match &lesson.step {
            Step::Example(e) => student.sgd_step(&e.x, e.y),
            Step::Gradient(g) => student.apply_gradient(g),
        }
    }

    /// Plain SGD on the union of the pool indices selected in `trace`, with
    /// the same initialization and learning rate as the original run.
    pub fn replay(&self, trace: &MetricsTrace) -> Result<MetricsTrace> {
        let subset = trace.selected_indices();
        if subset.is_empty() {
            return Err(Error::NoPoolIndices);
        }
        if let Some(&bad) = subset.iter().find(|&&i| i >= self.student_pool.len()) {
            return Err(Error::Config(format!(
                "trace selects index {bad} but the pool has {} examples",
                self.student_pool.len()
            )));
        }
        let mut rng = Rng::new(self.config.seed).derive(STREAM_REPLAY);
        let mut student = LearnerState::new(self.w0.clone(), self.eta, self.loss)?;
        let mut rows = vec![self.row(0, student.weights(), None, 0)];
        for t in 1..=self.config.iterations {
            if self.stop(student.weights()) {
                break;
            }
            let i = subset[rng.index(subset.len())];
            let e = &self.student_pool.examples()[i];
            let combined = selection_objective(student.weights(), &self.w_star, &self.loss, self.eta, e)
                .map_err(|err| err.at_iteration(t))?
                .combined;
            student.sgd_step(&e.x, e.y).map_err(|err| err.at_iteration(t))?;
            rows.push(self.row(t, student.weights(), Some((i as i64, None, combined)), 0));
        }
        Ok(MetricsTrace { rows })
    }

    pub fn report(&self, output: &RunOutput) -> RunReport {
        let mut config = self.config.clone();
        config.eta = Some(self.eta);
        if config.teacher.uses_teacher_space() {
            config.eta_v = Some(config.eta_v());
        }
        RunReport {
            schema_version: SCHEMA_VERSION,
            label: self.config.label(),
            config,
            rng: crate::numkit::RNG_ALGORITHM.into(),
            data: self.train.meta.clone(),
            w_star: self.w_star.clone(),
            w_star_fit: FitSummary::from(&self.w_star_fit),
            final_row: output.trace.last().cloned(),
            certificate: output.certificate.clone(),
        }
    }
}

enum Driver {
    Random,
    Batch,
    Synthesis(SynthesisTeacher),
    Combination(CombinationTeacher),
    Pool(RegularizedLoss),
    Rescalable(RegularizedLoss, ScaleGrid),
    /// `true` for cross-space.
    Surrogate(bool),
    Imitation(Box<ImitationTeacher>, u64),
}

enum Step {
    Example(Example),
    Gradient(Vec<f64>),
}

struct Lesson {
    step: Step,
    index: i64,
    gamma: Option<f64>,
    nu: Option<f64>,
    combined: f64,
}

pub fn run(config: &ExperimentConfig) -> Result<RunOutput> {
    Experiment::prepare(config)?.run()
}

/// SGD restricted to the pool examples a teacher selected in `trace`.
pub fn replay_selected_set(trace: &MetricsTrace, config: &ExperimentConfig) -> Result<MetricsTrace> {
    Experiment::prepare(config)?.replay(trace)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MemberSummary {
    pub label: String,
    pub teacher: String,
    pub rows: usize,
    pub final_dist_to_wstar: f64,
    pub final_train_objective: f64,
    pub final_test_accuracy: Option<f64>,
    /// First `t` with `‖w − w*‖ < epsilon`.
    pub iterations_to_epsilon: Option<u64>,
    /// Trapezoidal area under the distance curve.
    pub area_under_dist: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub schema_version: u32,
    pub summary: Vec<MemberSummary>,
    #[serde(skip)]
    pub traces: Vec<MetricsTrace>,
}

fn summarize(label: String, config: &ExperimentConfig, trace: &MetricsTrace) -> MemberSummary {
    let last = trace.last().expect("traces have a row for t = 0");
    let eps = config.epsilon;
    MemberSummary {
        label,
        teacher: config.teacher.label(),
        rows: trace.rows.len(),
        final_dist_to_wstar: last.dist_to_wstar,
        final_train_objective: last.train_objective,
        final_test_accuracy: last.test_accuracy,
        iterations_to_epsilon: if eps > 0.0 {
            trace.rows.iter().find(|r| r.dist_to_wstar < eps).map(|r| r.t)
        } else {
            None
        },
        area_under_dist: trace
            .rows
            .windows(2)
            .map(|p| 0.5 * (p[0].dist_to_wstar + p[1].dist_to_wstar))
            .sum(),
    }
}

fn unique_labels(configs: &[ExperimentConfig]) -> Vec<String> {
    let raw: Vec<String> = configs.iter().map(ExperimentConfig::label).collect();
    raw.iter()
        .enumerate()
        .map(|(i, l)| {
            if raw.iter().filter(|o| *o == l).count() > 1 {
                format!("{l}#{i}")
            } else {
                l.clone()
            }
        })
        .collect()
}

/// Runs every member on the same data, seed and learning rate, in parallel.
pub fn compare(configs: &[ExperimentConfig]) -> Result<Comparison> {
    let first = configs
        .first()
        .ok_or_else(|| Error::Config("a comparison needs at least one run".into()))?;
    for (i, c) in configs.iter().enumerate().skip(1) {
        if c.data != first.data || c.seed != first.seed || c.eta() != first.eta() {
            return Err(Error::Config(format!(
                "run {i} does not share the data spec, seed and eta of run 0"
            )));
        }
    }
    let results: Vec<Result<MetricsTrace>> = std::thread::scope(|scope| {
        let handles: Vec<_> = configs
            .iter()
            .map(|c| scope.spawn(move || run(c).map(|o| o.trace)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|p| std::panic::resume_unwind(p)))
            .collect()
    });
    let traces = results.into_iter().collect::<Result<Vec<_>>>()?;
    let summary = unique_labels(configs)
        .into_iter()
        .zip(configs)
        .zip(&traces)
        .map(|((label, c), t)| summarize(label, c, t))
        .collect();
    Ok(Comparison {
        schema_version: SCHEMA_VERSION,
        summary,
        traces,
    })
}

