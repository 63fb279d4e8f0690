//! The SGD student, the restricted query surface it exposes to teachers that
//! may not read its weights, and batch solvers used to find the target `w*`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::{LossKind, RegularizedLoss};
use crate::numkit::{self, all_finite, axpy, check_dims, inner, norm2, Mat, Rng};

/// A labeled feature vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Example {
    pub x: Vec<f64>,
    pub y: f64,
}

impl Example {
    pub fn new(x: Vec<f64>, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }
}

/// Learning-rate schedule. The teaching theory assumes a fixed rate, which is
/// the default.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Schedule {
    #[default]
    Constant,
    /// `η_t = η / (1 + decay·t)`.
    InverseTime { decay: f64 },
}

/// What a teacher without weight access may ask of the student.
pub trait StudentQuery {
    /// The student's score `⟨w, x⟩` on a teacher-provided input.
    fn predict(&mut self, x: &[f64]) -> Result<f64>;
}

#[derive(Clone, Debug)]
pub struct LearnerState {
    w: Vec<f64>,
    eta: f64,
    schedule: Schedule,
    loss: RegularizedLoss,
    t: u64,
    query_count: u64,
}

impl LearnerState {
    pub fn new(w0: Vec<f64>, eta: f64, loss: RegularizedLoss) -> Result<Self> {
        if !(eta > 0.0) || !eta.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "learning rate must be positive, got {eta}"
            )));
        }
        if w0.is_empty() || !all_finite(&w0) {
            return Err(Error::InvalidArgument(
                "initial weights must be non-empty and finite".into(),
            ));
        }
        Ok(Self {
            w: w0,
            eta,
            schedule: Schedule::Constant,
            loss,
            t: 0,
            query_count: 0,
        })
    }

    pub fn with_schedule(mut self, schedule: Schedule) -> Self {
        self.schedule = schedule;
        self
    }

    pub fn weights(&self) -> &[f64] {
        &self.w
    }

    pub fn dim(&self) -> usize {
        self.w.len()
    }

    pub fn loss(&self) -> RegularizedLoss {
        self.loss
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    pub fn query_count(&self) -> u64 {
        self.query_count
    }

    /// Learning rate used by the next step.
    pub fn current_eta(&self) -> f64 {
        match self.schedule {
            Schedule::Constant => self.eta,
            Schedule::InverseTime { decay } => self.eta / (1.0 + decay * self.t as f64),
        }
    }

    /// `w ← w − η·∇_w ℓ(⟨w,x⟩, y)`.
    pub fn sgd_step(&mut self, x: &[f64], y: f64) -> Result<()> {
        let g = self.loss.grad_w(&self.w, x, y)?;
        self.apply_gradient(&g)
    }

    /// `w ← w − η·g` for an externally computed gradient (full-batch steps).
    pub fn apply_gradient(&mut self, g: &[f64]) -> Result<()> {
        check_dims(self.w.len(), g.len())?;
        let eta = self.current_eta();
        let mut next = self.w.clone();
        axpy(-eta, g, &mut next);
        self.t += 1;
        if !all_finite(&next) {
            return Err(Error::NumericOverflow { step: self.t });
        }
        self.w = next;
        Ok(())
    }
}

impl StudentQuery for LearnerState {
    fn predict(&mut self, x: &[f64]) -> Result<f64> {
        check_dims(self.w.len(), x.len())?;
        self.query_count += 1;
        Ok(inner(&self.w, x))
    }
}

/// Target optimum plus the accuracy at which teaching stops.
#[derive(Clone, Debug, PartialEq)]
pub struct TeachingGoal {
    pub w_star: Vec<f64>,
    pub epsilon: f64,
}

impl TeachingGoal {
    pub fn reached(&self, w: &[f64]) -> bool {
        numkit::distance(w, &self.w_star) < self.epsilon
    }
}

/// Mean regularized loss over a dataset.
pub fn batch_objective(data: &[Example], loss: &RegularizedLoss, w: &[f64]) -> f64 {
    let n = data.len() as f64;
    let mean: f64 = data.iter().map(|e| loss.kind.eval(inner(w, &e.x), e.y)).sum::<f64>() / n;
    mean + 0.5 * loss.lambda * inner(w, w)
}

/// Gradient of [`batch_objective`] (kinks resolved as in [`LossKind::intensity`]).
pub fn batch_gradient(data: &[Example], loss: &RegularizedLoss, w: &[f64]) -> Vec<f64> {
    let n = data.len() as f64;
    let mut g = vec![0.0; w.len()];
    for e in data {
        let beta = loss.kind.beta(inner(w, &e.x), e.y);
        axpy(beta / n, &e.x, &mut g);
    }
    axpy(loss.lambda, w, &mut g);
    g
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BatchMethod {
    ClosedForm,
    Newton,
    DualCoordinateDescent,
    GradientDescent,
    Subgradient,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BatchOptions {
    /// Step size for the first-order paths; `None` uses `1/L` from a power
    /// iteration estimate of the smoothness constant.
    pub lr: Option<f64>,
    pub max_iters: u64,
    pub tol: f64,
}

impl Default for BatchOptions {
    fn default() -> Self {
        Self {
            lr: None,
            max_iters: 1_000_000,
            tol: 1e-10,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchFit {
    pub w: Vec<f64>,
    /// `‖batch gradient‖` for smooth losses; for the hinge and absolute losses
    /// solved in the dual, the largest projected-gradient violation.
    pub stationarity: f64,
    pub iterations: u64,
    /// `false` means the iteration budget ran out; `w` is the best iterate.
    pub converged: bool,
    pub method: BatchMethod,
}

fn validate_dataset(data: &[Example], loss: &RegularizedLoss) -> Result<usize> {
    let first = data.first().ok_or(Error::EmptyDataset)?;
    let d = first.dim();
    for e in data {
        check_dims(d, e.dim())?;
        loss.kind.check_label(e.y)?;
    }
    Ok(d)
}

/// Minimizer of the mean regularized loss over `data`.
///
/// Square loss is solved in closed form (ridge normal equations, or minimum
/// norm least squares when `λ = 0`), logistic loss by damped Newton, and the
/// non-smooth losses by dual coordinate descent when `λ > 0`. Without
/// regularization the non-smooth losses fall back to a subgradient method
/// flagged as not converged.
pub fn train_batch(data: &[Example], loss: &RegularizedLoss, opts: &BatchOptions) -> Result<BatchFit> {
    let d = validate_dataset(data, loss)?;
    match loss.kind {
        LossKind::Square => square_closed_form(data, loss, d),
        LossKind::Logistic => logistic_newton(data, loss, d, opts),
        LossKind::Hinge | LossKind::Absolute if loss.lambda > 0.0 => dual_coordinate_descent(data, loss, d, opts),
        LossKind::Hinge | LossKind::Absolute => subgradient(data, loss, d, opts),
    }
}

fn design(data: &[Example], d: usize) -> Mat {
    let mut rows = Vec::with_capacity(data.len() * d);
    for e in data {
        rows.extend_from_slice(&e.x);
    }
    Mat::from_row_major(data.len(), d, rows).expect("validated dimensions")
}

fn square_closed_form(data: &[Example], loss: &RegularizedLoss, d: usize) -> Result<BatchFit> {
    let n = data.len() as f64;
    let w = if loss.lambda > 0.0 {
        let mut a = Mat::zeros(d, d);
        let mut b = vec![0.0; d];
        for e in data {
            for i in 0..d {
                b[i] += 2.0 * e.x[i] * e.y / n;
                for j in 0..d {
                    a[(i, j)] += 2.0 * e.x[i] * e.x[j] / n;
                }
            }
        }
        for i in 0..d {
            a[(i, i)] += loss.lambda;
        }
        a.solve_spd(&b)?
    } else {
        let x = design(data, d);
        let y: Vec<f64> = data.iter().map(|e| e.y).collect();
        numkit::least_squares_min_norm(&x, &y)?.coeffs
    };
    let stationarity = norm2(&batch_gradient(data, loss, &w));
    Ok(BatchFit {
        w,
        stationarity,
        iterations: 1,
        converged: true,
        method: BatchMethod::ClosedForm,
    })
}

fn logistic_newton(data: &[Example], loss: &RegularizedLoss, d: usize, opts: &BatchOptions) -> Result<BatchFit> {
    let n = data.len() as f64;
    let mut w = vec![0.0; d];
    let mut f = batch_objective(data, loss, &w);
    let max_iters = opts.max_iters.min(500);
    let mut iterations = 0;
    loop {
        let g = batch_gradient(data, loss, &w);
        let gnorm = norm2(&g);
        if gnorm < opts.tol || iterations >= max_iters {
            return Ok(BatchFit {
                w,
                stationarity: gnorm,
                iterations,
                converged: gnorm < opts.tol,
                method: BatchMethod::Newton,
            });
        }
        iterations += 1;
        let mut h = Mat::zeros(d, d);
        for e in data {
            let s = 1.0 / (1.0 + (-e.y * inner(&w, &e.x)).exp());
            let c = s * (1.0 - s) / n;
            for i in 0..d {
                let ci = c * e.x[i];
                for j in 0..d {
                    h[(i, j)] += ci * e.x[j];
                }
            }
        }
        let mut jitter = loss.lambda.max(0.0);
        let step = loop {
            let mut hj = h.clone();
            for i in 0..d {
                hj[(i, i)] += jitter;
            }
            match hj.solve_spd(&g) {
                Ok(p) => break p,
                Err(_) => jitter = (jitter * 10.0).max(1e-12),
            }
        };
        let slope = inner(&g, &step);
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let mut cand = w.clone();
            axpy(-t, &step, &mut cand);
            let fc = batch_objective(data, loss, &cand);
            if fc <= f - 0.25 * t * slope || fc < f {
                w = cand;
                f = fc;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            // no descent left at machine precision
            let gnorm = norm2(&batch_gradient(data, loss, &w));
            return Ok(BatchFit {
                w,
                stationarity: gnorm,
                iterations,
                converged: gnorm < opts.tol,
                method: BatchMethod::Newton,
            });
        }
    }
}

/// Coordinate ascent on the box-constrained dual of
/// `(λ/2)‖w‖² + (1/n) Σ ℓ(⟨w,xᵢ⟩, yᵢ)` for the hinge and absolute losses.
fn dual_coordinate_descent(
    data: &[Example],
    loss: &RegularizedLoss,
    d: usize,
    opts: &BatchOptions,
) -> Result<BatchFit> {
    let n = data.len();
    let c = 1.0 / (n as f64 * loss.lambda);
    let (lo, hi) = match loss.kind {
        LossKind::Hinge => (0.0, c),
        _ => (-c, c),
    };
    // w = Σ αᵢ sᵢ xᵢ with sᵢ = yᵢ for hinge and 1 for absolute
    let sign = |e: &Example| if loss.kind == LossKind::Hinge { e.y } else { 1.0 };
    let q: Vec<f64> = data.iter().map(|e| inner(&e.x, &e.x)).collect();
    let mut alpha = vec![0.0; n];
    let mut w = vec![0.0; d];
    let max_sweeps = (opts.max_iters / n as u64).clamp(1000, 50_000);
    let tol = opts.tol.max(1e-12);
    let mut sweeps = 0;
    let mut violation = f64::INFINITY;
    while sweeps < max_sweeps {
        sweeps += 1;
        violation = 0.0f64;
        for (i, e) in data.iter().enumerate() {
            // gradient of the minimization form of the dual in αᵢ
            let grad = match loss.kind {
                LossKind::Hinge => e.y * inner(&w, &e.x) - 1.0,
                _ => inner(&w, &e.x) - e.y,
            };
            let pg = if alpha[i] <= lo {
                grad.min(0.0)
            } else if alpha[i] >= hi {
                grad.max(0.0)
            } else {
                grad
            };
            violation = violation.max(pg.abs());
            if pg != 0.0 && q[i] > 0.0 {
                let next = (alpha[i] - grad / q[i]).clamp(lo, hi);
                let delta = next - alpha[i];
                if delta != 0.0 {
                    axpy(delta * sign(e), &e.x, &mut w);
                    alpha[i] = next;
                }
            }
        }
        if violation < tol {
            break;
        }
    }
    Ok(BatchFit {
        w,
        stationarity: violation,
        iterations: sweeps,
        converged: violation < tol,
        method: BatchMethod::DualCoordinateDescent,
    })
}

fn subgradient(data: &[Example], loss: &RegularizedLoss, d: usize, opts: &BatchOptions) -> Result<BatchFit> {
    let lr = opts.lr.unwrap_or_else(|| 1.0 / smoothness_estimate(data, loss, d).max(1e-12));
    let iters = opts.max_iters.min(20_000);
    let mut w = vec![0.0; d];
    let mut best = w.clone();
    let mut best_f = batch_objective(data, loss, &w);
    for k in 0..iters {
        let g = batch_gradient(data, loss, &w);
        axpy(-lr / ((k + 1) as f64).sqrt(), &g, &mut w);
        let f = batch_objective(data, loss, &w);
        if f < best_f {
            best_f = f;
            best.clone_from(&w);
        }
    }
    let stationarity = norm2(&batch_gradient(data, loss, &best));
    Ok(BatchFit {
        w: best,
        stationarity,
        iterations: iters,
        converged: false,
        method: BatchMethod::Subgradient,
    })
}

/// Upper estimate of the smoothness constant of the batch objective from the
/// leading eigenvalue of `XᵀX/n`.
fn smoothness_estimate(data: &[Example], loss: &RegularizedLoss, d: usize) -> f64 {
    let n = data.len() as f64;
    let mut v = vec![1.0 / (d as f64).sqrt(); d];
    let mut lambda_max = 0.0;
    for _ in 0..100 {
        let mut next = vec![0.0; d];
        for e in data {
            axpy(inner(&e.x, &v) / n, &e.x, &mut next);
        }
        let nn = norm2(&next);
        if nn == 0.0 {
            break;
        }
        lambda_max = nn;
        v = next.iter().map(|x| x / nn).collect();
    }
    // power iteration approaches from below; pad by 5%
    let curvature = match loss.kind {
        LossKind::Square => 2.0,
        LossKind::Logistic => 0.25,
        _ => 1.0,
    };
    1.05 * curvature * lambda_max + loss.lambda
}

/// Plain full-batch gradient descent from `w0`.
pub fn gradient_descent(
    data: &[Example],
    loss: &RegularizedLoss,
    w0: Vec<f64>,
    opts: &BatchOptions,
) -> Result<BatchFit> {
    let d = validate_dataset(data, loss)?;
    check_dims(d, w0.len())?;
    let lr = opts.lr.unwrap_or_else(|| 1.0 / smoothness_estimate(data, loss, d).max(1e-12));
    let mut w = w0;
    for k in 0..opts.max_iters {
        let g = batch_gradient(data, loss, &w);
        let gnorm = norm2(&g);
        if gnorm < opts.tol {
            return Ok(BatchFit {
                w,
                stationarity: gnorm,
                iterations: k,
                converged: true,
                method: BatchMethod::GradientDescent,
            });
        }
        axpy(-lr, &g, &mut w);
    }
    let stationarity = norm2(&batch_gradient(data, loss, &w));
    Ok(BatchFit {
        w,
        stationarity,
        iterations: opts.max_iters,
        converged: stationarity < opts.tol,
        method: BatchMethod::GradientDescent,
    })
}

/// `w⁰ = scale · N(0, I)`.
pub fn random_init(dim: usize, scale: f64, rng: &mut Rng) -> Vec<f64> {
    (0..dim).map(|_| scale * rng.normal()).collect()
}
