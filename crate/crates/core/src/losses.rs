//! Convex losses of a linear score `z = ⟨w, x⟩` against a label `y`.
//!
//! The square loss is `(z − y)²` without a ½ factor, so its intensity is
//! `2(z − y)`. The synthesis constructions in [`crate::teachers`] are stated
//! for this convention; with the ½ convention every square-loss step would be
//! half as long.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::{check_dims, inner};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    Square,
    Absolute,
    Logistic,
    Hinge,
}

impl LossKind {
    pub const ALL: [LossKind; 4] = [
        LossKind::Square,
        LossKind::Absolute,
        LossKind::Logistic,
        LossKind::Hinge,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LossKind::Square => "square",
            LossKind::Absolute => "absolute",
            LossKind::Logistic => "logistic",
            LossKind::Hinge => "hinge",
        }
    }

    pub fn is_classification(self) -> bool {
        matches!(self, LossKind::Logistic | LossKind::Hinge)
    }

    pub fn check_label(self, y: f64) -> Result<()> {
        if self.is_classification() && y != 1.0 && y != -1.0 {
            return Err(Error::LabelDomain {
                loss: self.name(),
                label: y,
            });
        }
        Ok(())
    }

    pub fn value(self, z: f64, y: f64) -> Result<f64> {
        self.check_label(y)?;
        Ok(self.eval(z, y))
    }

    /// Learning intensity `β = ∂ℓ/∂z`. At the kinks the subgradient chosen is
    /// 0: `sign(0) = 0` for the absolute loss and no update exactly on the
    /// hinge margin.
    pub fn intensity(self, z: f64, y: f64) -> Result<f64> {
        self.check_label(y)?;
        Ok(self.beta(z, y))
    }

    #[inline]
    pub(crate) fn eval(self, z: f64, y: f64) -> f64 {
        match self {
            LossKind::Square => (z - y) * (z - y),
            LossKind::Absolute => (z - y).abs(),
            LossKind::Logistic => softplus(-y * z),
            LossKind::Hinge => (1.0 - y * z).max(0.0),
        }
    }

    #[inline]
    pub(crate) fn beta(self, z: f64, y: f64) -> f64 {
        match self {
            LossKind::Square => 2.0 * (z - y),
            LossKind::Absolute => {
                let r = z - y;
                if r > 0.0 {
                    1.0
                } else if r < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }
            LossKind::Logistic => -y * sigmoid(-y * z),
            LossKind::Hinge => {
                if 1.0 - y * z > 0.0 {
                    -y
                } else {
                    0.0
                }
            }
        }
    }
}

impl std::fmt::Display for LossKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LossKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown loss '{s}'")))
    }
}

/// `log(1 + eᵗ)` without overflow.
#[inline]
fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

/// `1 / (1 + e⁻ᵗ)` without overflow.
#[inline]
fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// Loss plus the `λ/2 ‖w‖²` penalty.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegularizedLoss {
    pub kind: LossKind,
    #[serde(default)]
    pub lambda: f64,
}

impl RegularizedLoss {
    pub fn new(kind: LossKind, lambda: f64) -> Result<Self> {
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "regularization must be finite and non-negative, got {lambda}"
            )));
        }
        Ok(Self { kind, lambda })
    }

    pub fn unregularized(kind: LossKind) -> Self {
        Self { kind, lambda: 0.0 }
    }

    /// `β(⟨w,x⟩, y)·x + λ·w`.
    pub fn grad_w(&self, w: &[f64], x: &[f64], y: f64) -> Result<Vec<f64>> {
        check_dims(w.len(), x.len())?;
        self.kind.check_label(y)?;
        let beta = self.kind.beta(inner(w, x), y);
        Ok(x.iter().zip(w).map(|(xi, wi)| beta * xi + self.lambda * wi).collect())
    }

    /// `ℓ(⟨w,x⟩, y) + λ/2 ‖w‖²`.
    pub fn objective(&self, w: &[f64], x: &[f64], y: f64) -> Result<f64> {
        check_dims(w.len(), x.len())?;
        Ok(self.kind.value(inner(w, x), y)? + 0.5 * self.lambda * inner(w, w))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::Rng;
    use proptest::prelude::*;

    fn label_for(kind: LossKind, rng: &mut Rng) -> f64 {
        if kind.is_classification() {
            if rng.uniform() < 0.5 {
                -1.0
            } else {
                1.0
            }
        } else {
            2.0 * rng.normal()
        }
    }

    #[test]
    fn value_examples() {
        assert_eq!(LossKind::Square.value(3.0, 1.0).unwrap(), 4.0);
        assert!((LossKind::Logistic.value(0.0, 1.0).unwrap() - 2f64.ln()).abs() < 1e-15);
        assert_eq!(LossKind::Hinge.value(2.0, 1.0).unwrap(), 0.0);
        assert_eq!(LossKind::Absolute.value(-1.0, 2.0).unwrap(), 3.0);
    }

    #[test]
    fn intensity_examples() {
        assert_eq!(LossKind::Square.intensity(3.0, 1.0).unwrap(), 4.0);
        assert_eq!(LossKind::Logistic.intensity(0.0, 1.0).unwrap(), -0.5);
        assert_eq!(LossKind::Hinge.intensity(0.0, 1.0).unwrap(), -1.0);
        // kinks
        assert_eq!(LossKind::Hinge.intensity(1.0, 1.0).unwrap(), 0.0);
        assert_eq!(LossKind::Absolute.intensity(2.0, 2.0).unwrap(), 0.0);
    }

    #[test]
    fn classification_rejects_real_labels() {
        for kind in [LossKind::Logistic, LossKind::Hinge] {
            assert!(matches!(kind.value(0.0, 0.5), Err(Error::LabelDomain { .. })));
            assert!(kind.intensity(0.0, 0.0).is_err());
        }
        assert!(LossKind::Square.value(0.0, 0.5).is_ok());
    }

    #[test]
    fn logistic_stable_at_extremes() {
        let v = LossKind::Logistic.value(-800.0, 1.0).unwrap();
        assert!((v - 800.0).abs() < 1e-9);
        assert_eq!(LossKind::Logistic.value(800.0, 1.0).unwrap(), 0.0);
        assert!((LossKind::Logistic.intensity(-800.0, 1.0).unwrap() + 1.0).abs() < 1e-15);
    }

    #[test]
    fn intensity_matches_central_difference() {
        let mut rng = Rng::new(31);
        let h = 1e-6;
        for kind in LossKind::ALL {
            let mut checked = 0;
            while checked < 100 {
                let z = 3.0 * rng.normal();
                let y = label_for(kind, &mut rng);
                // keep away from kinks so the finite difference is meaningful
                let kink_gap = match kind {
                    LossKind::Absolute => (z - y).abs(),
                    LossKind::Hinge => (1.0 - y * z).abs(),
                    _ => 1.0,
                };
                if kink_gap < 1e-3 {
                    continue;
                }
                let fd = (kind.eval(z + h, y) - kind.eval(z - h, y)) / (2.0 * h);
                let an = kind.intensity(z, y).unwrap();
                let rel = (fd - an).abs() / an.abs().max(1e-3);
                assert!(rel < 1e-5, "{kind} z={z} y={y}: fd={fd} an={an}");
                checked += 1;
            }
        }
    }

    #[test]
    fn grad_examples() {
        let sq = RegularizedLoss::unregularized(LossKind::Square);
        assert_eq!(sq.grad_w(&[1.0, 0.0], &[1.0, 0.0], 0.0).unwrap(), vec![2.0, 0.0]);
        for kind in LossKind::ALL {
            let l = RegularizedLoss::unregularized(kind);
            assert_eq!(l.grad_w(&[0.3, -1.2], &[0.0, 0.0], 1.0).unwrap(), vec![0.0, 0.0]);
        }
        assert!(sq.grad_w(&[1.0], &[1.0, 2.0], 0.0).is_err());
    }

    #[test]
    fn regularized_logistic_gradient_matches_finite_difference() {
        let loss = RegularizedLoss::new(LossKind::Logistic, 5e-5).unwrap();
        let mut rng = Rng::new(8);
        let h = 1e-6;
        for _ in 0..100 {
            let w = rng.normal_vec(5);
            let x = rng.normal_vec(5);
            let y = label_for(LossKind::Logistic, &mut rng);
            let g = loss.grad_w(&w, &x, y).unwrap();
            for j in 0..5 {
                let mut wp = w.clone();
                let mut wm = w.clone();
                wp[j] += h;
                wm[j] -= h;
                let fd = (loss.objective(&wp, &x, y).unwrap() - loss.objective(&wm, &x, y).unwrap())
                    / (2.0 * h);
                let rel = (fd - g[j]).abs() / g[j].abs().max(1e-3);
                assert!(rel < 1e-5, "component {j}: fd={fd} an={}", g[j]);
            }
        }
    }

    #[test]
    fn negative_lambda_rejected() {
        assert!(RegularizedLoss::new(LossKind::Square, -1.0).is_err());
    }

    #[test]
    fn parses_config_names() {
        for kind in LossKind::ALL {
            let json = serde_json::to_string(&kind).unwrap();
            assert_eq!(json, format!("\"{}\"", kind.name()));
            assert_eq!(kind.name().parse::<LossKind>().unwrap(), kind);
        }
    }

    fn kind_strategy() -> impl Strategy<Value = LossKind> {
        prop::sample::select(LossKind::ALL.to_vec())
    }

    proptest! {
        #[test]
        fn losses_are_convex(kind in kind_strategy(), z1 in -6.0f64..6.0, z2 in -6.0f64..6.0,
                             t in 0.0f64..=1.0, ypos in any::<bool>(), yreal in -3.0f64..3.0) {
            let y = if kind.is_classification() { if ypos { 1.0 } else { -1.0 } } else { yreal };
            let mid = kind.eval(t * z1 + (1.0 - t) * z2, y);
            let chord = t * kind.eval(z1, y) + (1.0 - t) * kind.eval(z2, y);
            prop_assert!(mid <= chord + 1e-12);
        }

        #[test]
        fn intensity_is_subgradient(kind in kind_strategy(), z1 in -6.0f64..6.0, z2 in -6.0f64..6.0,
                                    ypos in any::<bool>(), yreal in -3.0f64..3.0, on_kink in any::<bool>()) {
            let y = if kind.is_classification() { if ypos { 1.0 } else { -1.0 } } else { yreal };
            // half the cases probe the kink itself
            let z1 = if on_kink {
                match kind { LossKind::Absolute => y, LossKind::Hinge => y, _ => z1 }
            } else { z1 };
            let lower = kind.eval(z1, y) + kind.beta(z1, y) * (z2 - z1);
            prop_assert!(kind.eval(z2, y) >= lower - 1e-12);
        }

        #[test]
        fn unregularized_gradient_is_intensity_times_x(kind in kind_strategy(),
                w in prop::collection::vec(-2.0f64..2.0, 4), x in prop::collection::vec(-2.0f64..2.0, 4),
                ypos in any::<bool>()) {
            let y = if ypos { 1.0 } else { -1.0 };
            let g = RegularizedLoss::unregularized(kind).grad_w(&w, &x, y).unwrap();
            let beta = kind.beta(inner(&w, &x), y);
            for (gi, xi) in g.iter().zip(&x) {
                prop_assert_eq!(*gi, beta * xi);
            }
        }

        #[test]
        fn hinge_difficulty_is_margin_indicator(theta in 0.0f64..std::f64::consts::TAU,
                w in prop::collection::vec(-3.0f64..3.0, 2), ypos in any::<bool>()) {
            let y = if ypos { 1.0 } else { -1.0 };
            let x = [theta.cos(), theta.sin()];
            let g = RegularizedLoss::unregularized(LossKind::Hinge).grad_w(&w, &x, y).unwrap();
            let t1 = inner(&g, &g);
            let indicator = if 1.0 - y * inner(&w, &x) > 0.0 { 1.0 } else { 0.0 };
            prop_assert!((t1 - indicator).abs() < 1e-12);
        }
    }
}
