//! Teaching policies.
//!
//! Every omniscient policy scores a candidate `(x, y)` by the one-step change
//! it would cause in `‖w − w*‖²`:
//!
//! ```text
//! η²·T1 − 2η·T2,   T1 = ‖g‖²,   T2 = ⟨w − w*, g⟩,   g = β(⟨w,x⟩, y)·x + λw
//! ```
//!
//! and picks the smallest value.

mod imitation;
mod rescalable;
mod surrogate;
mod synthesis;

pub use imitation::{imitation_fit_step, imitation_select, ImitationState, ImitationTeacher};
pub use rescalable::{rescalable_pool_select, RescaledChoice, ScaleGrid, DEFAULT_GRID_SIZE};
pub use surrogate::{surrogate_objective, surrogate_select, SurrogateChoice};
pub use synthesis::{
    omniscient_combine, omniscient_synthesize, CombinationPlan, CombinationTeacher, Synthesis,
    SynthesisTeacher,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learner::Example;
use crate::losses::RegularizedLoss;
use crate::numkit::{check_dims, inner, norm2, sub, Rng};

/// Candidate examples plus the radius of the teacher's knowledge domain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pool {
    examples: Vec<Example>,
    radius: f64,
}

impl Pool {
    pub fn new(examples: Vec<Example>, radius: f64) -> Result<Self> {
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(Error::InvalidArgument(format!("pool radius must be positive, got {radius}")));
        }
        if let Some(first) = examples.first() {
            let d = first.dim();
            for (index, e) in examples.iter().enumerate() {
                check_dims(d, e.dim())?;
                let norm = norm2(&e.x);
                if norm > radius + 1e-12 {
                    return Err(Error::OutsideRadius { index, norm, radius });
                }
            }
        }
        Ok(Self { examples, radius })
    }

    /// Pool whose radius is the largest example norm.
    pub fn enclosing(examples: Vec<Example>) -> Result<Self> {
        let radius = examples.iter().map(|e| norm2(&e.x)).fold(0.0, f64::max);
        Self::new(examples, if radius > 0.0 { radius } else { 1.0 })
    }

    pub fn examples(&self) -> &[Example] {
        &self.examples
    }

    pub fn get(&self, index: usize) -> Option<&Example> {
        self.examples.get(index)
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn dim(&self) -> Option<usize> {
        self.examples.first().map(Example::dim)
    }

    pub(crate) fn check_nonempty(&self) -> Result<()> {
        if self.examples.is_empty() {
            Err(Error::EmptyPool)
        } else {
            Ok(())
        }
    }
}

/// Difficulty `t1`, usefulness `t2` and the combined score `η²t1 − 2ηt2`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionObjective {
    pub t1: f64,
    pub t2: f64,
    pub combined: f64,
}

impl SelectionObjective {
    fn from_terms(t1: f64, t2: f64, eta: f64) -> Self {
        Self {
            t1,
            t2,
            combined: eta * eta * t1 - 2.0 * eta * t2,
        }
    }
}

/// Scores one candidate by forming the full gradient explicitly.
pub fn selection_objective(
    w: &[f64],
    w_star: &[f64],
    loss: &RegularizedLoss,
    eta: f64,
    example: &Example,
) -> Result<SelectionObjective> {
    let u = sub(w, w_star)?;
    let g = loss.grad_w(w, &example.x, example.y)?;
    Ok(SelectionObjective::from_terms(inner(&g, &g), inner(&u, &g), eta))
}

/// Per-step cache that scores candidates from three inner products.
///
/// With `g = βx + λw` and `u = w − w*`:
/// `T1 = β²‖x‖² + 2βλ⟨w,x⟩ + λ²‖w‖²` and `T2 = β⟨u,x⟩ + λ⟨u,w⟩`.
#[derive(Clone, Debug)]
pub struct ObjectiveContext<'a> {
    w: &'a [f64],
    u: Vec<f64>,
    loss: RegularizedLoss,
    eta: f64,
    ww: f64,
    uw: f64,
}

impl<'a> ObjectiveContext<'a> {
    pub fn new(w: &'a [f64], w_star: &[f64], loss: RegularizedLoss, eta: f64) -> Result<Self> {
        let u = sub(w, w_star)?;
        let ww = inner(w, w);
        let uw = inner(&u, w);
        Ok(Self { w, u, loss, eta, ww, uw })
    }

    pub fn discrepancy(&self) -> &[f64] {
        &self.u
    }

    /// Score of `(x, y)`; the dimension of `x` must already be checked.
    pub fn evaluate(&self, x: &[f64], y: f64) -> SelectionObjective {
        self.from_projections(inner(self.w, x), inner(&self.u, x), inner(x, x), y)
    }

    /// Score from `z = ⟨w,x⟩`, `ux = ⟨u,x⟩` and `xx = ‖x‖²`.
    pub fn from_projections(&self, z: f64, ux: f64, xx: f64, y: f64) -> SelectionObjective {
        let beta = self.loss.kind.beta(z, y);
        let lambda = self.loss.lambda;
        let t1 = if lambda == 0.0 {
            beta * beta * xx
        } else {
            (beta * beta * xx + 2.0 * beta * lambda * z + lambda * lambda * self.ww).max(0.0)
        };
        let t2 = beta * ux + lambda * self.uw;
        SelectionObjective::from_terms(t1, t2, self.eta)
    }
}

/// Outcome of a scan over a finite pool.
#[derive(Clone, Debug, PartialEq)]
pub struct PoolChoice {
    pub index: usize,
    pub example: Example,
    pub objective: SelectionObjective,
}

/// Uniform draw from the pool.
pub fn random_select<'p>(pool: &'p Pool, rng: &mut Rng) -> Result<(usize, &'p Example)> {
    pool.check_nonempty()?;
    let i = rng.index(pool.len());
    Ok((i, &pool.examples[i]))
}

/// Exhaustive argmin of the combined score; ties go to the lowest index.
pub fn omniscient_pool_select(
    w: &[f64],
    w_star: &[f64],
    loss: &RegularizedLoss,
    eta: f64,
    pool: &Pool,
) -> Result<PoolChoice> {
    pool.check_nonempty()?;
    check_dims(w.len(), pool.dim().unwrap_or(0))?;
    let ctx = ObjectiveContext::new(w, w_star, *loss, eta)?;
    let mut best: Option<(usize, SelectionObjective)> = None;
    for (i, e) in pool.examples.iter().enumerate() {
        let obj = ctx.evaluate(&e.x, e.y);
        if best.is_none_or(|(_, b)| obj.combined < b.combined) {
            best = Some((i, obj));
        }
    }
    let (index, objective) = best.expect("non-empty pool");
    Ok(PoolChoice {
        index,
        example: pool.examples[index].clone(),
        objective,
    })
}
