use super::Pool;
use crate::error::Result;
use crate::learner::StudentQuery;
use crate::losses::LossKind;
use crate::numkit::{check_dims, inner};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SurrogateChoice {
    pub index: usize,
    pub objective: f64,
}

/// `η²β(z,y)²‖x‖² − 2η(ℓ(z,y) − ℓ(z*,y))`.
///
/// By convexity `ℓ(z,y) − ℓ(z*,y) ≤ β(z,y)(z − z*)`, the usefulness term this
/// replaces, so only the student's score `z` is needed.
pub fn surrogate_objective(kind: LossKind, eta: f64, z: f64, z_star: f64, y: f64, xx: f64) -> f64 {
    let beta = kind.beta(z, y);
    eta * eta * beta * beta * xx - 2.0 * eta * (kind.eval(z, y) - kind.eval(z_star, y))
}

/// Exhaustive argmin of the surrogate score, one `predict` per candidate.
///
/// `student_pool` holds the inputs as the student sees them and is what gets
/// queried. `teacher_pool` holds the same examples in the space of `target`;
/// it provides `z* = ⟨target, x̃⟩` and `‖x̃‖²`. Pass the student pool twice for
/// same-space teaching with `target = w*`.
pub fn surrogate_select<S: StudentQuery + ?Sized>(
    student: &mut S,
    target: &[f64],
    kind: LossKind,
    eta: f64,
    student_pool: &Pool,
    teacher_pool: &Pool,
) -> Result<SurrogateChoice> {
    student_pool.check_nonempty()?;
    check_dims(student_pool.len(), teacher_pool.len())?;
    check_dims(target.len(), teacher_pool.dim().unwrap_or(0))?;
    let mut best: Option<SurrogateChoice> = None;
    for (i, (s, t)) in student_pool.examples().iter().zip(teacher_pool.examples()).enumerate() {
        let z = student.predict(&s.x)?;
        let z_star = inner(target, &t.x);
        let objective = surrogate_objective(kind, eta, z, z_star, t.y, inner(&t.x, &t.x));
        if best.is_none_or(|b| objective < b.objective) {
            best = Some(SurrogateChoice { index: i, objective });
        }
    }
    Ok(best.expect("non-empty pool"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learner::{Example, LearnerState};
    use crate::losses::RegularizedLoss;
    use crate::numkit::Rng;
    use crate::teachers::tests::{random_label, random_pool, reference_pool};
    use crate::teachers::selection_objective;

    #[test]
    fn usefulness_bound_holds() {
        let mut rng = Rng::new(3);
        for kind in LossKind::ALL {
            for _ in 0..500 {
                let d = 1 + rng.index(5);
                let w = rng.normal_vec(d);
                let ws = rng.normal_vec(d);
                let x = rng.normal_vec(d);
                let y = random_label(kind, &mut rng);
                let loss = RegularizedLoss::unregularized(kind);
                let t2 = selection_objective(&w, &ws, &loss, 0.1, &Example::new(x.clone(), y)).unwrap().t2;
                let gap = kind.eval(inner(&w, &x), y) - kind.eval(inner(&ws, &x), y);
                assert!(t2 - gap >= -1e-12, "{kind}: {gap} > {t2}");
            }
        }
    }

    #[test]
    fn degenerate_bound_picks_easiest() {
        // student already agrees with the target on every candidate
        let w = vec![0.5, -0.5];
        let pool = Pool::new(
            vec![
                Example::new(vec![1.0, 0.0], 0.0),
                Example::new(vec![0.2, 0.0], 0.0),
                Example::new(vec![0.0, 0.7], 0.0),
            ],
            1.0,
        )
        .unwrap();
        let mut st = LearnerState::new(w.clone(), 0.1, RegularizedLoss::unregularized(LossKind::Square)).unwrap();
        let c = surrogate_select(&mut st, &w, LossKind::Square, 0.1, &pool, &pool).unwrap();
        assert_eq!(c.index, 1);
    }

    #[test]
    fn reference_pool_and_query_budget() {
        let pool = reference_pool();
        let mut st = LearnerState::new(vec![1.0, 0.0], 0.1, RegularizedLoss::unregularized(LossKind::Square)).unwrap();
        let c = surrogate_select(&mut st, &[0.0, 0.0], LossKind::Square, 0.1, &pool, &pool).unwrap();
        assert_eq!(c.index, 0);
        assert_eq!(st.query_count(), 2);
    }

    #[test]
    fn matches_brute_force() {
        let mut rng = Rng::new(99);
        for trial in 0..100 {
            let kind = LossKind::ALL[trial % 4];
            let d = 1 + rng.index(6);
            let pool = random_pool(kind, 1 + rng.index(200), d, &mut rng);
            let w = rng.normal_vec(d);
            let ws = rng.normal_vec(d);
            let eta = 10f64.powf(-3.0 * rng.uniform());
            let mut st = LearnerState::new(w.clone(), eta, RegularizedLoss::unregularized(kind)).unwrap();
            let c = surrogate_select(&mut st, &ws, kind, eta, &pool, &pool).unwrap();
            assert_eq!(st.query_count(), pool.len() as u64);
            let mut best = (0, f64::INFINITY);
            for (i, e) in pool.examples().iter().enumerate() {
                let g = RegularizedLoss::unregularized(kind).grad_w(&w, &e.x, e.y).unwrap();
                let v = eta * eta * inner(&g, &g)
                    - 2.0 * eta * (kind.value(inner(&w, &e.x), e.y).unwrap() - kind.value(inner(&ws, &e.x), e.y).unwrap());
                if v < best.1 {
                    best = (i, v);
                }
            }
            assert_eq!(c.index, best.0, "trial {trial}");
        }
    }
}
