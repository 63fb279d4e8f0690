//! Teaching volume, pool volume and contraction certificates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learner::Example;
use crate::losses::{LossKind, RegularizedLoss};
use crate::numkit::{column_space_basis, distance, inner, norm2, norm2_sq, scaled, sub, Mat, Rng};
use crate::teachers::{omniscient_pool_select, selection_objective, Pool};

/// Example set a teacher may draw from.
#[derive(Clone, Copy, Debug)]
pub enum TeachingSet<'a> {
    Pool(&'a Pool),
    /// Synthesis domain `‖x‖ ≤ R`, searched along `x = γ(w − w*)`.
    Ball { radius: f64 },
}

/// Scale `γ` maximizing the one-step decrease along `w − w*` inside the ball.
///
/// For the square loss the decrease is `‖u‖²(1 − (1 − 2ηγ²‖u‖²)²)`, for the
/// absolute and hinge losses `2ηγ‖u‖² − η²γ²‖u‖²`; both are maximized at the
/// returned value. The logistic loss reuses the hinge scale.
fn ball_gamma(kind: LossKind, eta: f64, radius: f64, dist: f64) -> f64 {
    let cap = radius / dist;
    match kind {
        LossKind::Square => (1.0 / ((2.0 * eta).sqrt() * dist)).min(cap),
        _ => (1.0 / eta).min(cap),
    }
}

/// `max {−η²T1 + 2ηT2}` over the set.
pub fn teaching_volume(
    w: &[f64],
    w_star: &[f64],
    loss: &RegularizedLoss,
    eta: f64,
    set: TeachingSet<'_>,
) -> Result<f64> {
    match set {
        TeachingSet::Pool(pool) => Ok(-omniscient_pool_select(w, w_star, loss, eta, pool)?.objective.combined),
        TeachingSet::Ball { radius } => {
            if !(radius > 0.0) {
                return Err(Error::InvalidArgument("ball radius must be positive".into()));
            }
            let u = sub(w, w_star)?;
            let dist = norm2(&u);
            let zero = Example::new(vec![0.0; w.len()], if loss.kind.is_classification() { -1.0 } else { 0.0 });
            let mut best = -selection_objective(w, w_star, loss, eta, &zero)?.combined;
            if dist > 0.0 {
                let x = scaled(&u, ball_gamma(loss.kind, eta, radius, dist));
                let labels: Vec<f64> = if loss.kind.is_classification() {
                    vec![-1.0, 1.0]
                } else {
                    vec![inner(w_star, &x)]
                };
                for y in labels {
                    let e = Example::new(x.clone(), y);
                    best = best.max(-selection_objective(w, w_star, loss, eta, &e)?.combined);
                }
            }
            Ok(best)
        }
    }
}

/// `‖w − w*‖² − TV(w)`.
pub fn remaining_effort(
    w: &[f64],
    w_star: &[f64],
    loss: &RegularizedLoss,
    eta: f64,
    set: TeachingSet<'_>,
) -> Result<f64> {
    let d2 = norm2_sq(&sub(w, w_star)?);
    Ok(d2 - teaching_volume(w, w_star, loss, eta, set)?)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VolumeMethod {
    /// One-dimensional span, or enumeration of every vertex of the dual
    /// polytope `{c : |⟨p, c⟩| ≤ 1}`.
    Exact,
    Grid,
    Refined,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoolVolumeReport {
    pub value: f64,
    /// Unit direction in the pool span that the pool covers worst.
    pub argmin_direction: Vec<f64>,
    pub method: VolumeMethod,
    pub span_rank: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PoolVolumeOptions {
    pub samples: usize,
    pub refine_iters: usize,
    pub seed: u64,
}

impl Default for PoolVolumeOptions {
    fn default() -> Self {
        Self {
            samples: 1 << 14,
            refine_iters: 100,
            seed: 0,
        }
    }
}

/// Candidate vertex systems above which `pool_volume` samples instead.
pub const VERTEX_LIMIT: u128 = 200_000;

fn binomial(n: usize, k: usize) -> u128 {
    (0..k).fold(1u128, |acc, i| acc.saturating_mul((n - i) as u128) / (i as u128 + 1))
}

/// Solves the square system in place by partial pivoting; `None` when singular.
fn solve_small(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let r = b.len();
    for col in 0..r {
        let piv = (col..r).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-10 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for i in col + 1..r {
            let f = a[i][col] / a[col][col];
            for j in col..r {
                a[i][j] -= f * a[col][j];
            }
            b[i] -= f * b[col];
        }
    }
    let mut x = vec![0.0; r];
    for i in (0..r).rev() {
        let s: f64 = (i + 1..r).map(|j| a[i][j] * x[j]).sum();
        x[i] = (b[i] - s) / a[i][i];
    }
    Some(x)
}

/// Vertex of `{c : |⟨p_i, c⟩| ≤ 1}` with the largest norm, by trying every
/// `r` active constraints and sign pattern (first sign fixed by symmetry).
fn farthest_vertex(proj: &[Vec<f64>], r: usize) -> Option<Vec<f64>> {
    let n = proj.len();
    if n < r || binomial(n, r).saturating_mul(1 << (r - 1)) > VERTEX_LIMIT {
        return None;
    }
    let feasible = |c: &[f64]| proj.iter().all(|p| inner(p, c).abs() <= 1.0 + 1e-9);
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut idx: Vec<usize> = (0..r).collect();
    loop {
        for signs in 0..1usize << (r - 1) {
            let a: Vec<Vec<f64>> = idx.iter().map(|&i| proj[i].clone()).collect();
            let b: Vec<f64> = (0..r).map(|k| if k > 0 && signs >> (k - 1) & 1 == 1 { -1.0 } else { 1.0 }).collect();
            if let Some(c) = solve_small(a, b) {
                let len = norm2(&c);
                if feasible(&c) && best.as_ref().is_none_or(|(l, _)| len > *l) {
                    best = Some((len, c));
                }
            }
        }
        // next combination in lexicographic order
        let Some(k) = (0..r).rev().find(|&k| idx[k] < n - r + k) else {
            break;
        };
        idx[k] += 1;
        for j in k + 1..r {
            idx[j] = idx[j - 1] + 1;
        }
    }
    best.map(|(_, c)| c)
}

/// Worst-case directional coverage of a pool:
/// `min over unit u ∈ span(D) of max over x of |⟨u, x/‖x‖⟩|`.
///
/// The absolute value accounts for a rescalable pool containing `−x` along
/// with `x`. The minimum equals `1 / max ‖c‖` over the vertices of
/// `{c : |⟨p, c⟩| ≤ 1}`, which are enumerated when there are at most
/// `VERTEX_LIMIT` candidate systems. Larger pools fall back to sampling: an
/// even half-circle grid in two dimensions, normalized Gaussian draws above,
/// then polishing by coordinate perturbations with a shrinking step.
pub fn pool_volume(pool: &Pool, opts: &PoolVolumeOptions) -> Result<PoolVolumeReport> {
    pool.check_nonempty()?;
    let dirs: Vec<Vec<f64>> = pool
        .examples()
        .iter()
        .filter_map(|e| {
            let n = norm2(&e.x);
            (n > 0.0).then(|| scaled(&e.x, 1.0 / n))
        })
        .collect();
    if dirs.is_empty() {
        return Err(Error::InvalidArgument("pool volume needs a non-zero example".into()));
    }
    let cols: Vec<&[f64]> = dirs.iter().map(Vec::as_slice).collect();
    let basis = column_space_basis(&Mat::from_columns(&cols)?);
    let r = basis.len();
    // directions in span coordinates
    let proj: Vec<Vec<f64>> = dirs.iter().map(|d| basis.iter().map(|b| inner(b, d)).collect()).collect();
    let coverage = |c: &[f64]| proj.iter().map(|p| inner(p, c).abs()).fold(0.0, f64::max);
    let lift = |c: &[f64]| {
        let mut u = vec![0.0; dirs[0].len()];
        for (ci, b) in c.iter().zip(&basis) {
            crate::numkit::axpy(*ci, b, &mut u);
        }
        u
    };

    if r == 1 {
        return Ok(PoolVolumeReport {
            value: coverage(&[1.0]),
            argmin_direction: basis[0].clone(),
            method: VolumeMethod::Exact,
            span_rank: 1,
        });
    }

    if let Some(c) = farthest_vertex(&proj, r) {
        let n = norm2(&c);
        let c = scaled(&c, 1.0 / n);
        return Ok(PoolVolumeReport {
            value: coverage(&c),
            argmin_direction: lift(&c),
            method: VolumeMethod::Exact,
            span_rank: r,
        });
    }

    let samples = opts.samples.max(1);
    let mut best_c = vec![0.0; r];
    let mut best = f64::INFINITY;
    if r == 2 {
        for k in 0..samples {
            let th = std::f64::consts::PI * k as f64 / samples as f64;
            let c = [th.cos(), th.sin()];
            let v = coverage(&c);
            if v < best {
                best = v;
                best_c = c.to_vec();
            }
        }
    } else {
        let mut rng = Rng::new(opts.seed);
        for _ in 0..samples {
            let mut c = rng.normal_vec(r);
            let n = norm2(&c);
            if n == 0.0 {
                continue;
            }
            c.iter_mut().for_each(|v| *v /= n);
            let v = coverage(&c);
            if v < best {
                best = v;
                best_c = c;
            }
        }
    }

    let mut method = VolumeMethod::Grid;
    if opts.refine_iters > 0 {
        let mut step = if r == 2 {
            std::f64::consts::PI / samples as f64
        } else {
            (samples as f64).powf(-1.0 / (r - 1) as f64)
        };
        for _ in 0..opts.refine_iters {
            let mut improved = false;
            for j in 0..r {
                for sign in [1.0, -1.0] {
                    let mut c = best_c.clone();
                    c[j] += sign * step;
                    let n = norm2(&c);
                    c.iter_mut().for_each(|v| *v /= n);
                    let v = coverage(&c);
                    if v < best {
                        best = v;
                        best_c = c;
                        improved = true;
                    }
                }
            }
            if !improved {
                step *= 0.5;
            }
        }
        method = VolumeMethod::Refined;
    }

    Ok(PoolVolumeReport {
        value: best,
        argmin_direction: lift(&best_c),
        method,
        span_rank: r,
    })
}

/// A step where the observed contraction exceeded the certified one.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub step: u64,
    /// `‖w^{t+1} − w*‖ / ‖w^t − w*‖`.
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TeachabilityCertificate {
    pub gamma: f64,
    pub nu: f64,
    /// Upper intensity bound, rescalable pools only.
    pub mu: Option<f64>,
    /// Certified per-step contraction of `‖w − w*‖`.
    pub rate: f64,
    pub c1: f64,
    pub c2: Option<f64>,
    pub epsilon: f64,
    /// Steps the rate guarantees for reaching `epsilon`; `None` when no
    /// target accuracy was set.
    pub required_steps: Option<u64>,
    pub valid: bool,
    pub violations: Vec<Violation>,
}

/// Relative slack on the contraction check.
const RATIO_SLACK: f64 = 1e-9;
/// Absolute slack; covers rounding once the distance is at machine zero.
const ABS_SLACK: f64 = 1e-12;

fn contraction_violations(dists: &[f64], rate: f64) -> Vec<Violation> {
    dists
        .windows(2)
        .enumerate()
        .filter(|(_, p)| p[1] > rate * p[0] * (1.0 + RATIO_SLACK) + ABS_SLACK)
        .map(|(t, p)| Violation {
            step: t as u64,
            ratio: if p[0] > 0.0 { p[1] / p[0] } else { f64::INFINITY },
        })
        .collect()
}

fn steps_constant(rate: f64) -> f64 {
    if rate == 0.0 {
        0.0
    } else {
        1.0 / (1.0 / rate).ln()
    }
}

fn required_steps(d0: f64, epsilon: f64, rate: f64, per_step: f64) -> Option<u64> {
    if !(epsilon > 0.0) {
        return None;
    }
    if d0 <= epsilon {
        return Some(0);
    }
    if rate == 0.0 {
        return Some(1);
    }
    Some(((per_step * (d0 / epsilon).ln()).ceil() as u64).max(1))
}

/// Checks `‖w^{t+1} − w*‖ ≤ (1 − ην)‖w^t − w*‖` along a distance trace.
pub fn certify_distances(dists: &[f64], eta: f64, nu: f64, gamma: f64, epsilon: f64) -> Result<TeachabilityCertificate> {
    if dists.len() < 2 {
        return Err(Error::InvalidArgument("certification needs at least two trace rows".into()));
    }
    let en = eta * nu;
    // ην = 1 computed in floating point may land an ulp above 1
    if !(en > 0.0 && en <= 1.0 + 1e-12) {
        return Err(Error::InvalidArgument(format!(
            "η·ν must lie in (0, 1] for a contraction, got {en}"
        )));
    }
    let rate = (1.0 - en).max(0.0);
    let c1 = steps_constant(rate);
    let violations = contraction_violations(dists, rate);
    Ok(TeachabilityCertificate {
        gamma,
        nu,
        mu: None,
        rate,
        c1,
        c2: None,
        epsilon,
        required_steps: required_steps(dists[0], epsilon, rate, c1),
        valid: violations.is_empty(),
        violations,
    })
}

/// [`certify_distances`] on a weight trace.
pub fn certify_run(trace: &[Vec<f64>], w_star: &[f64], eta: f64, nu: f64, gamma: f64, epsilon: f64) -> Result<TeachabilityCertificate> {
    let dists: Vec<f64> = trace.iter().map(|w| distance(w, w_star)).collect();
    certify_distances(&dists, eta, nu, gamma, epsilon)
}

/// `r(η, γ, V) = max{1 + η²μ² − 2ημV, 1 + η²ν² − 2ηνV}` for a rescalable
/// pool with intensity bounds `0 < ν ≤ μ < 2V/η`.
pub fn rescalable_rate(eta: f64, nu: f64, mu: f64, volume: f64) -> Result<f64> {
    if !(nu > 0.0 && nu <= mu && mu < 2.0 * volume / eta) || !(volume > 0.0 && volume <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "need 0 < ν ≤ μ < 2V/η with V in (0, 1]; got ν={nu}, μ={mu}, V={volume}, η={eta}"
        )));
    }
    let f = |b: f64| 1.0 + eta * eta * b * b - 2.0 * eta * b * volume;
    Ok(f(mu).max(f(nu)).max(0.0))
}

/// Contraction check at rate `√r` for rescalable-pool teaching.
pub fn certify_rescalable(
    dists: &[f64],
    eta: f64,
    gamma: f64,
    nu: f64,
    mu: f64,
    volume: f64,
    epsilon: f64,
) -> Result<TeachabilityCertificate> {
    if dists.len() < 2 {
        return Err(Error::InvalidArgument("certification needs at least two trace rows".into()));
    }
    let r = rescalable_rate(eta, nu, mu, volume)?;
    let rate = r.sqrt();
    let c2 = if r == 0.0 { 0.0 } else { 2.0 / (1.0 / r).ln() };
    let violations = contraction_violations(dists, rate);
    Ok(TeachabilityCertificate {
        gamma,
        nu,
        mu: Some(mu),
        rate,
        c1: steps_constant(1.0 - eta * nu),
        c2: Some(c2),
        epsilon,
        required_steps: required_steps(dists[0], epsilon, rate, c2),
        valid: violations.is_empty(),
        violations,
    })
}
