//! Householder factorizations: random orthogonal matrices and minimum-norm
//! least squares via a complete orthogonal decomposition.

use super::{check_dims, norm2, norm2_sq, Mat, Rng};
use crate::error::{Error, Result};

/// Columns whose pivot falls below this fraction of the leading pivot count
/// as numerically dependent.
const RANK_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Debug)]
struct Reflector {
    start: usize,
    v: Vec<f64>,
    beta: f64,
}

impl Reflector {
    fn apply(&self, x: &mut [f64]) {
        if self.beta == 0.0 {
            return;
        }
        let tail = &mut x[self.start..];
        let s: f64 = self.v.iter().zip(tail.iter()).map(|(a, b)| a * b).sum::<f64>() * self.beta;
        for (t, v) in tail.iter_mut().zip(&self.v) {
            *t -= s * v;
        }
    }
}

#[derive(Clone, Debug)]
struct HouseholderQr {
    rows: usize,
    r: Mat,
    reflectors: Vec<Reflector>,
    perm: Vec<usize>,
}

fn householder_qr(a: &Mat, pivot: bool) -> HouseholderQr {
    let (m, n) = (a.rows(), a.cols());
    let mut r = a.clone();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut reflectors = Vec::with_capacity(m.min(n));

    for k in 0..m.min(n) {
        if pivot {
            let mut best = k;
            let mut best_norm = -1.0;
            for j in k..n {
                let s: f64 = (k..m).map(|i| r[(i, j)] * r[(i, j)]).sum();
                if s > best_norm {
                    best_norm = s;
                    best = j;
                }
            }
            if best != k {
                for i in 0..m {
                    let tmp = r[(i, k)];
                    r[(i, k)] = r[(i, best)];
                    r[(i, best)] = tmp;
                }
                perm.swap(k, best);
            }
        }

        let x: Vec<f64> = (k..m).map(|i| r[(i, k)]).collect();
        let norm = norm2(&x);
        if norm == 0.0 {
            reflectors.push(Reflector {
                start: k,
                v: vec![0.0; m - k],
                beta: 0.0,
            });
            continue;
        }
        let alpha = if x[0] >= 0.0 { -norm } else { norm };
        let mut v = x;
        v[0] -= alpha;
        let beta = 2.0 / norm2_sq(&v);
        for j in (k + 1)..n {
            let s: f64 = v.iter().enumerate().map(|(i, vi)| vi * r[(k + i, j)]).sum::<f64>() * beta;
            for (i, vi) in v.iter().enumerate() {
                r[(k + i, j)] -= s * vi;
            }
        }
        r[(k, k)] = alpha;
        for i in (k + 1)..m {
            r[(i, k)] = 0.0;
        }
        reflectors.push(Reflector { start: k, v, beta });
    }

    HouseholderQr {
        rows: m,
        r,
        reflectors,
        perm,
    }
}

impl HouseholderQr {
    fn apply_qt(&self, b: &mut [f64]) {
        for h in &self.reflectors {
            h.apply(b);
        }
    }

    fn apply_q(&self, b: &mut [f64]) {
        for h in self.reflectors.iter().rev() {
            h.apply(b);
        }
    }

    fn q(&self) -> Mat {
        let m = self.rows;
        let mut q = Mat::zeros(m, m);
        let mut e = vec![0.0; m];
        for j in 0..m {
            e.iter_mut().for_each(|x| *x = 0.0);
            e[j] = 1.0;
            self.apply_q(&mut e);
            for i in 0..m {
                q[(i, j)] = e[i];
            }
        }
        q
    }
}

/// Haar-distributed orthogonal matrix.
///
/// A `d × d` matrix of standard normal draws is filled in row-major order
/// from `rng`, factored as `QR` by Householder reflections, and the columns
/// of `Q` are sign-flipped so that the diagonal of `R` is positive. Draws
/// with a (numerically) singular factor are discarded and redrawn.
pub fn random_orthogonal(d: usize, rng: &mut Rng) -> Mat {
    assert!(d >= 1, "dimension must be at least 1");
    loop {
        let g = Mat::from_row_major(d, d, rng.normal_vec(d * d)).expect("sized buffer");
        let qr = householder_qr(&g, false);
        let diag: Vec<f64> = (0..d).map(|j| qr.r[(j, j)]).collect();
        let scale = diag.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        if diag.iter().any(|v| v.abs() <= 1e-12 * scale) {
            continue;
        }
        let mut q = qr.q();
        for (j, rjj) in diag.iter().enumerate() {
            if *rjj < 0.0 {
                for i in 0..d {
                    q[(i, j)] = -q[(i, j)];
                }
            }
        }
        return q;
    }
}

/// Orthonormal basis of the column space of `a`, one basis vector per
/// numerically independent column (pivoted QR).
pub fn column_space_basis(a: &Mat) -> Vec<Vec<f64>> {
    if a.rows() == 0 || a.cols() == 0 {
        return Vec::new();
    }
    let qr = householder_qr(a, true);
    let steps = a.rows().min(a.cols());
    let lead = qr.r[(0, 0)].abs();
    let rank = (0..steps)
        .take_while(|&k| lead > 0.0 && qr.r[(k, k)].abs() > RANK_TOLERANCE * lead)
        .count();
    (0..rank)
        .map(|j| {
            let mut e = vec![0.0; a.rows()];
            e[j] = 1.0;
            qr.apply_q(&mut e);
            e
        })
        .collect()
}

/// Output of a minimum-norm least-squares solve.
#[derive(Clone, Debug, PartialEq)]
pub struct LeastSquares {
    pub coeffs: Vec<f64>,
    /// `‖A·coeffs − b‖` at the solution.
    pub residual: f64,
    pub rank: usize,
}

/// Reusable factorization of a fixed matrix `A` for repeated
/// `min ‖coeffs‖ subject to coeffs minimizing ‖A·coeffs − b‖` solves.
///
/// `A·P = Q₁·[T; 0]` by column-pivoted Householder QR, truncated at the
/// numerical rank, then `Tᵀ = Q₂·S` by a second QR, which gives the minimum
/// norm solution `P·Q₂·S⁻ᵀ·(Q₁ᵀ b)[..rank]`.
#[derive(Clone, Debug)]
pub struct MinNormSolver {
    a: Mat,
    outer: HouseholderQr,
    inner: Option<HouseholderQr>,
    rank: usize,
}

impl MinNormSolver {
    pub fn new(a: &Mat) -> Result<Self> {
        if a.cols() == 0 || a.rows() == 0 {
            return Err(Error::InvalidArgument(
                "least squares needs a non-empty matrix".into(),
            ));
        }
        let outer = householder_qr(a, true);
        let steps = a.rows().min(a.cols());
        let lead = outer.r[(0, 0)].abs();
        let rank = (0..steps)
            .take_while(|&k| lead > 0.0 && outer.r[(k, k)].abs() > RANK_TOLERANCE * lead)
            .count();
        let inner = if rank > 0 {
            let mut tt = Mat::zeros(a.cols(), rank);
            for i in 0..rank {
                for j in 0..a.cols() {
                    tt[(j, i)] = outer.r[(i, j)];
                }
            }
            Some(householder_qr(&tt, false))
        } else {
            None
        };
        Ok(Self {
            a: a.clone(),
            outer,
            inner,
            rank,
        })
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn solve(&self, b: &[f64]) -> Result<LeastSquares> {
        check_dims(self.a.rows(), b.len())?;
        let n = self.a.cols();
        let mut coeffs = vec![0.0; n];
        if let Some(inner) = &self.inner {
            let r = self.rank;
            let mut c = b.to_vec();
            self.outer.apply_qt(&mut c);
            // forward substitution with Sᵀ (lower triangular)
            let mut z = vec![0.0; n];
            for i in 0..r {
                let mut s = c[i];
                for k in 0..i {
                    s -= inner.r[(k, i)] * z[k];
                }
                z[i] = s / inner.r[(i, i)];
            }
            inner.apply_q(&mut z);
            for (i, zi) in z.into_iter().enumerate() {
                coeffs[self.outer.perm[i]] = zi;
            }
        }
        let fitted = self.a.mul_vec(&coeffs)?;
        let residual = fitted
            .iter()
            .zip(b)
            .map(|(f, t)| (f - t) * (f - t))
            .sum::<f64>()
            .sqrt();
        Ok(LeastSquares {
            coeffs,
            residual,
            rank: self.rank,
        })
    }
}

/// Minimum-norm solution of `min ‖A·coeffs − b‖`.
pub fn least_squares_min_norm(a: &Mat, b: &[f64]) -> Result<LeastSquares> {
    MinNormSolver::new(a)?.solve(b)
}
