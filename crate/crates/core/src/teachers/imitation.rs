use super::{omniscient_pool_select, Pool, PoolChoice};
use crate::error::{Error, Result};
use crate::learner::StudentQuery;
use crate::losses::RegularizedLoss;
use crate::numkit::{axpy, check_dims, inner, Rng};

/// The teacher's running estimate `v` of the student, expressed in the
/// teacher's own feature space, with the teacher-space optimum `v*`.
#[derive(Clone, Debug, PartialEq)]
pub struct ImitationState {
    pub v: Vec<f64>,
    pub v_star: Vec<f64>,
    pub eta_v: f64,
}

impl ImitationState {
    pub fn new(v: Vec<f64>, v_star: Vec<f64>, eta_v: f64) -> Result<Self> {
        check_dims(v.len(), v_star.len())?;
        if !(eta_v > 0.0) || !eta_v.is_finite() {
            return Err(Error::InvalidArgument(format!("imitation rate must be positive, got {eta_v}")));
        }
        Ok(Self { v, v_star, eta_v })
    }
}

/// `v ← v − η_v(⟨v, x̃⟩ − output)·x̃`.
pub fn imitation_fit_step(state: &mut ImitationState, x_teacher: &[f64], student_output: f64) -> Result<()> {
    check_dims(state.v.len(), x_teacher.len())?;
    let r = inner(&state.v, x_teacher) - student_output;
    axpy(-state.eta_v * r, x_teacher, &mut state.v);
    Ok(())
}

/// Omniscient scan with `(v, v*)` standing in for `(w, w*)`.
pub fn imitation_select(
    state: &ImitationState,
    loss: &RegularizedLoss,
    eta: f64,
    teacher_pool: &Pool,
) -> Result<PoolChoice> {
    omniscient_pool_select(&state.v, &state.v_star, loss, eta, teacher_pool)
}

/// Imitation teacher: fits `v` to the student's answers and selects in its
/// own space. It holds no reference to the student's weights.
#[derive(Clone, Debug)]
pub struct ImitationTeacher {
    state: ImitationState,
    teacher_pool: Pool,
    queries: u64,
}

impl ImitationTeacher {
    pub fn new(state: ImitationState, teacher_pool: Pool) -> Result<Self> {
        teacher_pool.check_nonempty()?;
        check_dims(state.v.len(), teacher_pool.dim().unwrap_or(0))?;
        Ok(Self {
            state,
            teacher_pool,
            queries: 0,
        })
    }

    pub fn state(&self) -> &ImitationState {
        &self.state
    }

    /// Queries issued so far.
    pub fn queries(&self) -> u64 {
        self.queries
    }

    /// `k` fit steps on uniformly drawn pool examples before teaching starts.
    pub fn warm_start<S: StudentQuery + ?Sized>(
        &mut self,
        student: &mut S,
        student_pool: &Pool,
        k: u64,
        rng: &mut Rng,
    ) -> Result<()> {
        check_dims(self.teacher_pool.len(), student_pool.len())?;
        for _ in 0..k {
            let i = rng.index(student_pool.len());
            self.observe(student, student_pool, i)?;
        }
        Ok(())
    }

    pub fn select(&self, loss: &RegularizedLoss, eta: f64) -> Result<PoolChoice> {
        imitation_select(&self.state, loss, eta, &self.teacher_pool)
    }

    /// Queries the student on pool example `index` and fits `v` to the answer.
    pub fn observe<S: StudentQuery + ?Sized>(&mut self, student: &mut S, student_pool: &Pool, index: usize) -> Result<()> {
        let xs = &student_pool.examples()[index].x;
        let out = student.predict(xs)?;
        self.queries += 1;
        let xt = &self.teacher_pool.examples()[index].x;
        imitation_fit_step(&mut self.state, xt, out)
    }
}
