//! Model parameters and the closed-form quantities attached to them.
//!
//! The diffusion is
//!
//! ```text
//! dX = (alpha - delta X) dt + X^h dB,   1/2 < h < 1,
//! ```
//!
//! whose degenerate noise is measured with the intrinsic metric
//! `rho(s,t) = |t^{1-h} - s^{1-h}| / (1-h)`. Everything here is a pure
//! function of the validated parameter triple: the metric, the intrinsic
//! gradient, the drift-comparison gap, the coupling drift `xi`, and the
//! Harnack / log-Harnack / gradient constants.

use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// Validated parameter triple `(alpha, delta, h)` plus the derived
/// contraction rate `kappa = (1-h)(delta - h/2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    alpha: f64,
    delta: f64,
    h: f64,
    kappa: f64,
}

impl ModelParams {
    /// Validate a raw triple. Bounds: `alpha > 0`, `delta > 0`, `1/2 < h < 1`.
    pub fn new(alpha: f64, delta: f64, h: f64) -> Result<Self> {
        match Self::violations(alpha, delta, h).into_iter().next() {
            Some(err) => Err(err),
            None => Ok(Self {
                alpha,
                delta,
                h,
                kappa: (1.0 - h) * (delta - h / 2.0),
            }),
        }
    }

    /// Every violated bound, one error each. Empty means the triple is valid.
    pub fn violations(alpha: f64, delta: f64, h: f64) -> Vec<Error> {
        let mut errs = Vec::new();
        if !(alpha > 0.0) {
            errs.push(Error::OutOfRange {
                field: "alpha",
                value: alpha,
                requirement: "alpha > 0",
            });
        }
        if !(delta > 0.0) {
            errs.push(Error::OutOfRange {
                field: "delta",
                value: delta,
                requirement: "delta > 0",
            });
        }
        if !(h > 0.5 && h < 1.0) {
            errs.push(Error::OutOfRange {
                field: "h",
                value: h,
                requirement: "1/2 < h < 1",
            });
        }
        errs
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    /// Contraction rate `kappa = (1-h)(delta - h/2)` of the intrinsic metric.
    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    /// Whether the Harnack-type estimates apply: `alpha >= h/2`.
    pub fn harnack_admissible(&self) -> bool {
        self.alpha >= self.h / 2.0
    }

    fn require_admissible(&self) -> Result<()> {
        if self.harnack_admissible() {
            Ok(())
        } else {
            Err(Error::Inadmissible {
                alpha: self.alpha,
                half_h: self.h / 2.0,
            })
        }
    }

    /// The coupling constants divide by `e^{2 kappa T} - 1`, so they are
    /// exposed only in the contractive regime `delta > h/2`.
    fn require_contractive(&self) -> Result<()> {
        if self.kappa > 0.0 {
            Ok(())
        } else {
            Err(Error::NonContractive { kappa: self.kappa })
        }
    }

    /// Intrinsic distance `|t^{1-h} - s^{1-h}| / (1-h)` between two states.
    pub fn intrinsic_distance(&self, s: f64, t: f64) -> Result<f64> {
        for (name, v) in [("s", s), ("t", t)] {
            if !(v >= 0.0) {
                return Err(Error::NegativeInput { name, value: v });
            }
        }
        let e = 1.0 - self.h;
        Ok((t.powf(e) - s.powf(e)).abs() / e)
    }

    /// Intrinsic gradient `x^h f'(x)` given the ordinary derivative at `x`.
    pub fn intrinsic_gradient(&self, x: f64, f_prime: f64) -> Result<f64> {
        if !(x >= 0.0) {
            return Err(Error::NegativeInput { name: "x", value: x });
        }
        Ok(x.powf(self.h) * f_prime)
    }

    /// The drift-comparison gap
    /// `alpha (y^-h - x^-h) + (h/2)(x^{h-1} - y^{h-1} + x^{1-h} - y^{1-h})`
    /// for `0 < x < y`. Nonpositive whenever `alpha >= h/2`. At `x = 0` the
    /// expression diverges to `-inf`, which is returned as a sentinel.
    pub fn drift_gap(&self, x: f64, y: f64) -> Result<f64> {
        for (name, v) in [("x", x), ("y", y)] {
            if !(v >= 0.0) {
                return Err(Error::NegativeInput { name, value: v });
            }
        }
        if x >= y {
            return Err(Error::OrderViolation {
                what: "drift gap needs x < y",
                lo: x,
                hi: y,
            });
        }
        if x == 0.0 {
            return Ok(f64::NEG_INFINITY);
        }
        let h = self.h;
        let e = 1.0 - h;
        Ok(self.alpha * (y.powf(-h) - x.powf(-h))
            + 0.5 * h * (x.powf(-e) - y.powf(-e) + x.powf(e) - y.powf(e)))
    }

    /// Exponential decay factor `e^{-kappa T}` of the intrinsic gradient
    /// estimate. Exceeds 1 when `delta <= h/2`; still returned.
    pub fn gradient_rate(&self, horizon: f64) -> f64 {
        (-self.kappa * horizon).exp()
    }

    /// The coupling drift intensity at time `t`:
    /// `2 (delta - h/2) (y^{1-h} - x^{1-h}) e^{kappa t} / (e^{2 kappa T} - 1)`.
    pub fn coupling_drift(&self, plan: &TransportPlan, t: f64) -> Result<f64> {
        self.require_admissible()?;
        self.require_contractive()?;
        if !(t >= 0.0) {
            return Err(Error::NegativeInput { name: "t", value: t });
        }
        let e = 1.0 - self.h;
        let gap = plan.y().powf(e) - plan.x().powf(e);
        let denom = (2.0 * self.kappa * plan.horizon()).exp_m1();
        Ok(2.0 * (self.delta - self.h / 2.0) * gap * (self.kappa * t).exp() / denom)
    }

    /// Closed form of `int_0^{t_end} e^{kappa t} xi(t) dt`:
    /// `(y^{1-h} - x^{1-h}) (e^{2 kappa t_end} - 1) / ((1-h)(e^{2 kappa T} - 1))`.
    /// At `t_end = T` this telescopes to the intrinsic distance.
    pub fn coupling_drift_weighted_integral(&self, plan: &TransportPlan, t_end: f64) -> Result<f64> {
        self.require_admissible()?;
        self.require_contractive()?;
        if !(t_end >= 0.0 && t_end <= plan.horizon()) {
            return Err(Error::OrderViolation {
                what: "t_end must lie in [0, T]",
                lo: t_end,
                hi: plan.horizon(),
            });
        }
        let e = 1.0 - self.h;
        let gap = plan.y().powf(e) - plan.x().powf(e);
        let num = (2.0 * self.kappa * t_end).exp_m1();
        let denom = e * (2.0 * self.kappa * plan.horizon()).exp_m1();
        Ok(gap * num / denom)
    }

    /// Total quadratic variation `int_0^T xi^2(t) dt` of the coupling drift;
    /// equals twice the log-Harnack constant.
    pub fn coupling_drift_energy(&self, plan: &TransportPlan) -> Result<f64> {
        Ok(2.0 * self.log_harnack_constant(plan)?)
    }

    /// Exponent of the Harnack constant:
    /// `p (delta - h/2) (y^{1-h} - x^{1-h})^2 / ((p-1)(1-h)(e^{2 kappa T} - 1))`.
    ///
    /// Kept separate from [`Self::harnack_constant`] because the constant
    /// overflows for distant starting points; work in log space when you can.
    pub fn harnack_exponent(&self, plan: &TransportPlan) -> Result<f64> {
        self.require_admissible()?;
        self.require_contractive()?;
        let p = plan.p().ok_or(Error::ExponentViolation { p: f64::NAN })?;
        let e = 1.0 - self.h;
        let gap = plan.y().powf(e) - plan.x().powf(e);
        let denom = (p - 1.0) * e * (2.0 * self.kappa * plan.horizon()).exp_m1();
        Ok(p * (self.delta - self.h / 2.0) * gap * gap / denom)
    }

    /// The multiplicative Harnack constant, `exp` of [`Self::harnack_exponent`].
    pub fn harnack_constant(&self, plan: &TransportPlan) -> Result<f64> {
        Ok(self.harnack_exponent(plan)?.exp())
    }

    /// Additive constant of the log-Harnack inequality:
    /// `(delta - h/2) (y^{1-h} - x^{1-h})^2 / ((1-h)(e^{2 kappa T} - 1))`,
    /// the `p -> infinity` limit of the Harnack exponent divided by `p`.
    pub fn log_harnack_constant(&self, plan: &TransportPlan) -> Result<f64> {
        self.require_admissible()?;
        self.require_contractive()?;
        let e = 1.0 - self.h;
        let gap = plan.y().powf(e) - plan.x().powf(e);
        let denom = e * (2.0 * self.kappa * plan.horizon()).exp_m1();
        Ok((self.delta - self.h / 2.0) * gap * gap / denom)
    }
}

/// A pair of starting points with a horizon, canonically ordered `x <= y`,
/// plus the optional Harnack exponent `p > 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransportPlan {
    x: f64,
    y: f64,
    horizon: f64,
    p: Option<f64>,
    swapped: bool,
}

impl TransportPlan {
    /// Build a plan; swaps the endpoints if given in decreasing order and
    /// records the swap.
    pub fn new(x: f64, y: f64, horizon: f64, p: Option<f64>) -> Result<Self> {
        for (name, v) in [("x", x), ("y", y)] {
            if !(v >= 0.0) {
                return Err(Error::NegativeInput { name, value: v });
            }
        }
        if !(horizon > 0.0) {
            return Err(Error::OutOfRange {
                field: "T",
                value: horizon,
                requirement: "T > 0",
            });
        }
        if let Some(p) = p {
            if !(p > 1.0) {
                return Err(Error::ExponentViolation { p });
            }
        }
        let swapped = x > y;
        let (x, y) = if swapped { (y, x) } else { (x, y) };
        Ok(Self {
            x,
            y,
            horizon,
            p,
            swapped,
        })
    }

    /// Lower starting point.
    pub fn x(&self) -> f64 {
        self.x
    }

    /// Upper starting point.
    pub fn y(&self) -> f64 {
        self.y
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Harnack exponent, absent for log-Harnack use.
    pub fn p(&self) -> Option<f64> {
        self.p
    }

    /// Whether the constructor reordered the endpoints.
    pub fn swapped(&self) -> bool {
        self.swapped
    }

    /// Intrinsic separation of the two starting points.
    pub fn separation(&self, params: &ModelParams) -> f64 {
        params
            .intrinsic_distance(self.x, self.y)
            .expect("plan endpoints are nonnegative")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> ModelParams {
        ModelParams::new(0.5, 1.0, 0.75).unwrap()
    }

    #[test]
    fn validation_accepts_and_derives_kappa() {
        let p = params();
        assert_eq!(p.kappa(), 0.25 * 0.625);
        assert_eq!(p.kappa(), (1.0 - p.h()) * (p.delta() - p.h() / 2.0));
        assert!(p.harnack_admissible());
    }

    #[test]
    fn validation_flags_inadmissible_alpha() {
        let p = ModelParams::new(0.3, 1.0, 0.75).unwrap();
        assert!(!p.harnack_admissible());
    }

    #[test]
    fn validation_rejects_each_bound() {
        assert!(matches!(
            ModelParams::new(0.5, 1.0, 0.5),
            Err(Error::OutOfRange { field: "h", .. })
        ));
        assert!(matches!(
            ModelParams::new(0.5, 1.0, 1.0),
            Err(Error::OutOfRange { field: "h", .. })
        ));
        assert!(matches!(
            ModelParams::new(0.0, 1.0, 0.75),
            Err(Error::OutOfRange { field: "alpha", .. })
        ));
        assert!(matches!(
            ModelParams::new(0.5, -1.0, 0.75),
            Err(Error::OutOfRange { field: "delta", .. })
        ));
        let all = ModelParams::violations(-1.0, 0.0, 2.0);
        assert_eq!(all.len(), 3);
        assert!(ModelParams::violations(f64::NAN, 1.0, 0.75).len() == 1);
    }

    #[test]
    fn distance_of_identical_points_is_zero() {
        assert_eq!(params().intrinsic_distance(2.0, 2.0).unwrap(), 0.0);
    }

    #[test]
    fn distance_closed_form_examples() {
        let p = params();
        assert!((p.intrinsic_distance(0.0, 1.0).unwrap() - 4.0).abs() < 1e-15);
        let p6 = ModelParams::new(0.5, 1.0, 0.6).unwrap();
        // (1/0.4) (32^0.4 - 1); 32^0.4 = 2^2
        assert!((p6.intrinsic_distance(1.0, 32.0).unwrap() - 7.5).abs() < 1e-12);
        assert!(matches!(
            p.intrinsic_distance(-0.1, 1.0),
            Err(Error::NegativeInput { name: "s", .. })
        ));
    }

    #[test]
    fn gradient_examples() {
        let p = params();
        assert!((p.intrinsic_gradient(1.0, 1.0).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(p.intrinsic_gradient(3.0, 0.0).unwrap(), 0.0);
        // f(x) = x^2 at x = 4: 4^{3/4} * 8 = 2^{3/2} * 8
        let expect = 8.0 * 8f64.sqrt();
        assert!((p.intrinsic_gradient(4.0, 8.0).unwrap() - expect).abs() < 1e-12);
        assert_eq!(p.intrinsic_gradient(0.0, 123.0).unwrap(), 0.0);
    }

    #[test]
    fn gradient_matches_difference_quotient_limit() {
        // |f(y)-f(x)| / rho(y,x) -> x^h |f'(x)| for f(x) = x^2 at x = 4
        let p = params();
        let f = |x: f64| x * x;
        let x = 4.0f64;
        let grad = p.intrinsic_gradient(x, 2.0 * x).unwrap();
        let mut last_err = f64::INFINITY;
        for k in 1..=4 {
            let dy = 10f64.powi(-k);
            let y = x + dy;
            let quot = (f(y) - f(x)).abs() / p.intrinsic_distance(x, y).unwrap();
            let err = (quot - grad).abs();
            assert!(err < last_err, "quotient must approach the gradient");
            last_err = err;
        }
        assert!(last_err < 1e-3);
    }

    #[test]
    fn drift_gap_vanishes_at_equal_points_limit() {
        let p = ModelParams::new(0.375, 1.0, 0.75).unwrap();
        let mut last = f64::NEG_INFINITY;
        for dy in [1e-2, 1e-4, 1e-6] {
            let g = p.drift_gap(1.0, 1.0 + dy).unwrap();
            assert!(g <= 0.0);
            assert!(g > last);
            last = g;
        }
        assert!(last.abs() < 1e-5);
    }

    #[test]
    fn drift_gap_frozen_value() {
        // high-precision evaluation of the four-term expression
        let p = ModelParams::new(0.375, 1.0, 0.75).unwrap();
        let g = p.drift_gap(0.25, 0.5).unwrap();
        assert!((g - (-0.39578155535083277)).abs() < 1e-14);
        let far = p.drift_gap(2.0, 5.0).unwrap();
        assert!((far - (-0.16106975894937127)).abs() < 1e-14);
        assert!(far <= 0.0);
    }

    #[test]
    fn drift_gap_edges() {
        let p = params();
        assert!(matches!(p.drift_gap(2.0, 2.0), Err(Error::OrderViolation { .. })));
        assert!(matches!(p.drift_gap(3.0, 2.0), Err(Error::OrderViolation { .. })));
        assert_eq!(p.drift_gap(0.0, 1.0).unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn plan_orders_endpoints() {
        let plan = TransportPlan::new(2.0, 0.5, 1.0, Some(2.0)).unwrap();
        assert_eq!((plan.x(), plan.y()), (0.5, 2.0));
        assert!(plan.swapped());
        assert!(matches!(
            TransportPlan::new(0.5, 2.0, 0.0, None),
            Err(Error::OutOfRange { field: "T", .. })
        ));
        assert!(matches!(
            TransportPlan::new(0.5, 2.0, 1.0, Some(1.0)),
            Err(Error::ExponentViolation { .. })
        ));
        assert!(matches!(
            TransportPlan::new(-0.5, 2.0, 1.0, None),
            Err(Error::NegativeInput { .. })
        ));
    }

    #[test]
    fn coupling_drift_frozen_value_and_monotonicity() {
        let p = params();
        let plan = TransportPlan::new(0.0, 1.0, 1.0, None).unwrap();
        let xi0 = p.coupling_drift(&plan, 0.0).unwrap();
        assert!((xi0 - 3.4074992243176641).abs() < 1e-13);
        // strictly increasing in t
        let mut last = 0.0;
        for k in 0..=10 {
            let t = k as f64 * 0.1;
            let v = p.coupling_drift(&plan, t).unwrap();
            assert!(v > last);
            last = v;
        }
        // vanishes for x = y
        let same = TransportPlan::new(1.0, 1.0, 1.0, None).unwrap();
        assert_eq!(p.coupling_drift(&same, 0.3).unwrap(), 0.0);
    }

    #[test]
    fn coupling_drift_requires_admissible_and_contractive() {
        let plan = TransportPlan::new(0.0, 1.0, 1.0, None).unwrap();
        let bad = ModelParams::new(0.3, 1.0, 0.75).unwrap();
        assert!(matches!(
            bad.coupling_drift(&plan, 0.0),
            Err(Error::Inadmissible { .. })
        ));
        let flat = ModelParams::new(0.5, 0.375, 0.75).unwrap(); // kappa = 0
        assert!(matches!(
            flat.coupling_drift(&plan, 0.0),
            Err(Error::NonContractive { .. })
        ));
    }

    #[test]
    fn weighted_integral_edges() {
        let p = params();
        let plan = TransportPlan::new(0.0, 1.0, 1.0, None).unwrap();
        assert_eq!(p.coupling_drift_weighted_integral(&plan, 0.0).unwrap(), 0.0);
        let at_t = p.coupling_drift_weighted_integral(&plan, 1.0).unwrap();
        let rho = p.intrinsic_distance(0.0, 1.0).unwrap();
        assert!((at_t - rho).abs() < 1e-12);
        assert!(matches!(
            p.coupling_drift_weighted_integral(&plan, 1.5),
            Err(Error::OrderViolation { .. })
        ));
    }

    #[test]
    fn harnack_constants_frozen_values() {
        let p = params();
        let plan = TransportPlan::new(0.0, 1.0, 1.0, Some(2.0)).unwrap();
        let expo = p.harnack_exponent(&plan).unwrap();
        assert!((expo - 13.629996897270656).abs() < 1e-12);
        assert!((p.harnack_constant(&plan).unwrap() - expo.exp()).abs() < 1e-6);
        let lhc = p.log_harnack_constant(&plan).unwrap();
        assert!((lhc - 6.8149984486353282).abs() < 1e-12);
        assert!((lhc - expo / 2.0).abs() < 1e-12);
        // degenerate plan
        let same = TransportPlan::new(1.0, 1.0, 1.0, Some(2.0)).unwrap();
        assert_eq!(p.harnack_constant(&same).unwrap(), 1.0);
        assert_eq!(p.log_harnack_constant(&same).unwrap(), 0.0);
    }

    #[test]
    fn harnack_constant_decreasing_in_horizon() {
        let p = params();
        let mut last = f64::INFINITY;
        for t in [0.25, 0.5, 1.0, 2.0, 4.0] {
            let plan = TransportPlan::new(0.0, 1.0, t, Some(2.0)).unwrap();
            let c = p.harnack_exponent(&plan).unwrap();
            assert!(c < last);
            last = c;
        }
    }

    #[test]
    fn harnack_requires_exponent() {
        let p = params();
        let plan = TransportPlan::new(0.0, 1.0, 1.0, None).unwrap();
        assert!(matches!(
            p.harnack_exponent(&plan),
            Err(Error::ExponentViolation { .. })
        ));
    }

    #[test]
    fn gradient_rate_examples() {
        let p = params();
        assert_eq!(p.gradient_rate(0.0), 1.0);
        assert!((p.gradient_rate(1.0) - 0.85534532730742254).abs() < 1e-15);
        let r = p.gradient_rate(0.7) * p.gradient_rate(0.3);
        assert!((r - p.gradient_rate(1.0)).abs() < 1e-15);
        // delta <= h/2 gives a rate >= 1, still returned
        let flat = ModelParams::new(0.5, 0.2, 0.75).unwrap();
        assert!(flat.gradient_rate(1.0) >= 1.0);
    }

    #[test]
    fn log_harnack_is_large_p_limit_of_the_exponent() {
        // (p-1)/p times the Holder exponent equals the log-Harnack constant
        // exactly; the exponent itself converges like p/(p-1) -> 1
        let p = params();
        let lhc = p
            .log_harnack_constant(&TransportPlan::new(0.0, 1.0, 1.0, None).unwrap())
            .unwrap();
        for (pp, tol) in [(1e3, 1.1e-3), (1e6, 1.1e-6)] {
            let plan = TransportPlan::new(0.0, 1.0, 1.0, Some(pp)).unwrap();
            let expo = p.harnack_exponent(&plan).unwrap();
            assert!((expo * (pp - 1.0) / pp - lhc).abs() <= 1e-12 * lhc);
            assert!(((expo - lhc) / lhc).abs() <= tol);
        }
    }
}
