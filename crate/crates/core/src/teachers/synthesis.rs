use serde::{Deserialize, Serialize};

use super::Pool;
use crate::error::{Error, Result};
use crate::learner::Example;
use crate::losses::LossKind;
use crate::numkit::{check_dims, distance, inner, norm2, scaled, sub, Mat, MinNormSolver};

/// A constructed example `x̂ = γ(w − w*)` with its label and the lower bound
/// `ν` on the effective intensity `γ·β`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Synthesis {
    pub example: Example,
    pub gamma: f64,
    pub nu: f64,
    /// `w = w*` already; the example is zero.
    pub converged: bool,
}

/// Synthesizes the next example for `kind`.
///
/// `initial_distance` is `‖w⁰ − w*‖`; the absolute, hinge and logistic
/// constructions cap `γ` by `R/‖w⁰ − w*‖` rather than by the current distance.
pub fn omniscient_synthesize(
    w: &[f64],
    w_star: &[f64],
    kind: LossKind,
    eta: f64,
    radius: f64,
    initial_distance: f64,
) -> Result<Synthesis> {
    check_dims(w.len(), w_star.len())?;
    if !(eta > 0.0) || !(radius > 0.0) {
        return Err(Error::InvalidArgument("eta and radius must be positive".into()));
    }
    if kind.is_classification() {
        let n = norm2(w_star);
        if n > 1.0 {
            return Err(Error::Precondition(format!(
                "{kind} synthesis requires ‖w*‖ ≤ 1, found ‖w*‖ = {n}; lower the data scale or increase the regularization"
            )));
        }
    }
    let u = sub(w, w_star)?;
    let dist = norm2(&u);
    let label_for = |x: &[f64]| if kind.is_classification() { -1.0 } else { inner(w_star, x) };
    if dist == 0.0 {
        let x = vec![0.0; w.len()];
        let y = label_for(&x);
        return Ok(Synthesis {
            example: Example::new(x, y),
            gamma: 0.0,
            nu: 0.0,
            converged: true,
        });
    }
    let d0 = if initial_distance > 0.0 { initial_distance } else { dist };
    let (gamma, nu) = match kind {
        LossKind::Absolute => {
            let g = (radius / d0).min(1.0 / eta);
            (g, g)
        }
        LossKind::Hinge => {
            // ⟨w, w − w*⟩ ≥ −‖w*‖²/4, so γ ≤ 2/‖w*‖² keeps the margin violated
            let ws = inner(w_star, w_star);
            let cap = if ws > 0.0 { 2.0 / ws } else { f64::INFINITY };
            let g = (radius / d0).min(1.0 / eta).min(cap);
            (g, g)
        }
        LossKind::Logistic => {
            let g = (radius / d0).min(1.0 / eta);
            (g, g / (1.0 + g.exp()))
        }
        LossKind::Square => {
            let g = (1.0 / ((2.0 * eta).sqrt() * dist)).min(radius / dist);
            (g, 2.0 * g * g * dist * dist)
        }
    };
    let x = scaled(&u, gamma);
    let y = label_for(&x);
    Ok(Synthesis {
        example: Example::new(x, y),
        gamma,
        nu,
        converged: false,
    })
}

/// Synthesis teacher that latches `‖w⁰ − w*‖` on construction.
#[derive(Clone, Debug)]
pub struct SynthesisTeacher {
    w_star: Vec<f64>,
    kind: LossKind,
    eta: f64,
    radius: f64,
    initial_distance: f64,
}

impl SynthesisTeacher {
    pub fn new(w0: &[f64], w_star: Vec<f64>, kind: LossKind, eta: f64, radius: f64) -> Result<Self> {
        check_dims(w0.len(), w_star.len())?;
        let initial_distance = distance(w0, &w_star);
        let teacher = Self {
            w_star,
            kind,
            eta,
            radius,
            initial_distance,
        };
        // surfaces precondition failures before the first step
        teacher.teach(w0)?;
        Ok(teacher)
    }

    pub fn initial_distance(&self) -> f64 {
        self.initial_distance
    }

    pub fn w_star(&self) -> &[f64] {
        &self.w_star
    }

    pub fn teach(&self, w: &[f64]) -> Result<Synthesis> {
        omniscient_synthesize(w, &self.w_star, self.kind, self.eta, self.radius, self.initial_distance)
    }
}

/// Coefficients expressing the synthesized example in the pool.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CombinationPlan {
    pub alphas: Vec<f64>,
    pub residual: f64,
}

/// Combination teacher: a synthesis teacher whose examples are rebuilt as
/// linear combinations of pool inputs.
#[derive(Clone, Debug)]
pub struct CombinationTeacher {
    synthesis: SynthesisTeacher,
    columns: Mat,
    solver: MinNormSolver,
}

impl CombinationTeacher {
    pub fn new(synthesis: SynthesisTeacher, pool: &Pool) -> Result<Self> {
        pool.check_nonempty()?;
        check_dims(synthesis.w_star.len(), pool.dim().unwrap_or(0))?;
        let cols: Vec<&[f64]> = pool.examples().iter().map(|e| e.x.as_slice()).collect();
        let columns = Mat::from_columns(&cols)?;
        let solver = MinNormSolver::new(&columns)?;
        Ok(Self {
            synthesis,
            columns,
            solver,
        })
    }

    pub fn synthesis(&self) -> &SynthesisTeacher {
        &self.synthesis
    }

    pub fn teach(&self, w: &[f64]) -> Result<(CombinationPlan, Synthesis)> {
        let target = self.synthesis.teach(w)?;
        combine(&self.columns, &self.solver, &self.synthesis, target)
    }
}

fn combine(
    columns: &Mat,
    solver: &MinNormSolver,
    teacher: &SynthesisTeacher,
    target: Synthesis,
) -> Result<(CombinationPlan, Synthesis)> {
    let sol = solver.solve(&target.example.x)?;
    let threshold = 1e-6 * norm2(&target.example.x);
    if target.converged {
        let plan = CombinationPlan {
            alphas: sol.coeffs,
            residual: sol.residual,
        };
        return Ok((plan, target));
    }
    if sol.residual >= threshold {
        return Err(Error::SpanViolation {
            residual: sol.residual,
            threshold,
        });
    }
    let x = columns.mul_vec(&sol.coeffs)?;
    let y = if teacher.kind.is_classification() {
        -1.0
    } else {
        inner(&teacher.w_star, &x)
    };
    let plan = CombinationPlan {
        alphas: sol.coeffs,
        residual: sol.residual,
    };
    Ok((
        plan,
        Synthesis {
            example: Example::new(x, y),
            ..target
        },
    ))
}

/// One-off combination step; builds the factorization of the pool each call.
pub fn omniscient_combine(
    w: &[f64],
    w_star: &[f64],
    kind: LossKind,
    eta: f64,
    pool: &Pool,
    initial_distance: f64,
) -> Result<(CombinationPlan, Synthesis)> {
    let teacher = SynthesisTeacher {
        w_star: w_star.to_vec(),
        kind,
        eta,
        radius: pool.radius(),
        initial_distance,
    };
    CombinationTeacher::new(teacher, pool)?.teach(w)
}
