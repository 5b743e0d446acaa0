//! The invariant measure and its isoperimetric profile.
//!
//! The stationary density is
//!
//! ```text
//! eta(x) = Gamma0 x^{-2h} exp(A x^{1-2h} - B x^{2-2h}) / Z,
//! A = 2 alpha / (1 - 2h) < 0,   B = delta / (1 - h) > 0,
//! ```
//!
//! with an essential singularity at 0 and a stretched-exponential tail.
//! Quadrature runs in the substituted coordinate `u = x^{1-h}` (and
//! `v = x^{2-2h}` for the dual tail route), where both ends are tame.
//!
//! On top of the density: masses and quantiles, the boundary measure
//! `x^h eta(x)` of half-lines, the isoperimetric constant
//! `k(r) = inf boundary/mass` over tail sets of mass at most `r`, its
//! inverse, the super Poincare rate functions `beta`, and the split-
//! allocation probe that checks the tail family is the right minimizer.

use crate::model::ModelParams;
use crate::quad;
use crate::roots;
use crate::{Error, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::{self, Write};

/// Quadrature tolerances used throughout a [`MeasureContext`].
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct QuadSettings {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_subdivisions: usize,
}

impl Default for QuadSettings {
    fn default() -> Self {
        Self {
            abs_tol: 0.0,
            rel_tol: 5e-14,
            max_subdivisions: 4000,
        }
    }
}

/// How a [`MeasureContext::k_inverse`] value was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum KInverseClamp {
    /// Bisection converged inside the observable mass range.
    Exact,
    /// `k > v` everywhere in the reduced regime; clamped to its boundary.
    AtRegimeBound,
    /// `v` exceeds every observable `k`; the true preimage underflows f64.
    BelowRange,
}

/// Cached normalization and derived landmarks of the invariant measure.
#[derive(Debug, Clone)]
pub struct MeasureContext {
    params: ModelParams,
    settings: QuadSettings,
    gamma0: f64,
    z: f64,
    x0_mode: f64,
    coef_head: f64, // A
    coef_tail: f64, // B
    u_cut: f64,
    unnorm_total: f64,
    regime_bound: f64,
}

impl MeasureContext {
    /// Compute `Z`, the mode of `x^h eta`, and the small-mass regime bound.
    pub fn normalize(params: &ModelParams, settings: QuadSettings) -> Result<Self> {
        let h = params.h();
        let a = 2.0 * params.alpha() / (1.0 - 2.0 * h);
        let b = params.delta() / (1.0 - h);
        let gamma0 = 2.0 * (-(a - b)).exp();
        let u_cut = (745.0 / b).sqrt();

        let mut ctx = Self {
            params: *params,
            settings,
            gamma0,
            z: f64::NAN,
            x0_mode: f64::NAN,
            coef_head: a,
            coef_tail: b,
            u_cut,
            unnorm_total: f64::NAN,
            regime_bound: f64::NAN,
        };

        ctx.unnorm_total = ctx.unnorm_integral_u(0.0, u_cut)?;
        ctx.z = gamma0 * ctx.unnorm_total;

        // mode of x^h eta: 2 alpha = 2 delta x + h x^{2h-1}, strictly
        // increasing right side, bracketed by (0, alpha/delta]
        let (alpha, delta) = (params.alpha(), params.delta());
        let mode_eq = |x: f64| 2.0 * delta * x + h * x.powf(2.0 * h - 1.0) - 2.0 * alpha;
        ctx.x0_mode = roots::bisect(mode_eq, 0.0, alpha / delta, 1e-300, 1e-13, 400)?;

        ctx.regime_bound = ctx.detect_regime_bound()?;
        Ok(ctx)
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn settings(&self) -> &QuadSettings {
        &self.settings
    }

    /// `Gamma0 = 2 exp(-(A - B))`.
    pub fn gamma0(&self) -> f64 {
        self.gamma0
    }

    /// Normalization constant of the stationary density.
    pub fn z(&self) -> f64 {
        self.z
    }

    /// Argmax of the boundary density `x^h eta(x)`.
    pub fn x0_mode(&self) -> f64 {
        self.x0_mode
    }

    /// Largest mass `r` for which the tail-set reduction of `k(r)` is used.
    pub fn regime_bound(&self) -> f64 {
        self.regime_bound
    }

    // --- density -----------------------------------------------------------

    /// `log(Z eta(x)) = log Gamma0 - 2h log x + A x^{1-2h} - B x^{2-2h}`.
    pub fn log_unnormalized_density(&self, x: f64) -> Result<f64> {
        if !(x > 0.0) {
            return Err(Error::NonPositiveInput { name: "x", value: x });
        }
        let h = self.params.h();
        Ok(self.gamma0.ln() - 2.0 * h * x.ln() + self.coef_head * x.powf(1.0 - 2.0 * h)
            - self.coef_tail * x.powf(2.0 - 2.0 * h))
    }

    /// `log eta(x)`.
    pub fn log_density(&self, x: f64) -> Result<f64> {
        Ok(self.log_unnormalized_density(x)? - self.z.ln())
    }

    /// `eta(x)`, zero at the boundary.
    pub fn density(&self, x: f64) -> f64 {
        if x <= 0.0 {
            0.0
        } else {
            self.log_density(x).map(f64::exp).unwrap_or(0.0)
        }
    }

    /// Analytic `(log eta)'(x) = -2h/x + 2 alpha x^{-2h} - 2 delta x^{1-2h}`.
    pub fn log_density_derivative(&self, x: f64) -> Result<f64> {
        if !(x > 0.0) {
            return Err(Error::NonPositiveInput { name: "x", value: x });
        }
        let h = self.params.h();
        Ok(-2.0 * h / x + 2.0 * self.params.alpha() * x.powf(-2.0 * h)
            - 2.0 * self.params.delta() * x.powf(1.0 - 2.0 * h))
    }

    /// Stationarity defect `(1/2)(x^{2h} eta)' - (alpha - delta x) eta`,
    /// with the derivative expanded through [`Self::log_density_derivative`].
    /// Identically zero for the exact density.
    pub fn stationarity_flux(&self, x: f64) -> Result<f64> {
        let h = self.params.h();
        let eta = self.density(x);
        let log_der = self.log_density_derivative(x)?;
        let flux_derivative = x.powf(2.0 * h) * eta * (2.0 * h / x + log_der);
        Ok(0.5 * flux_derivative - (self.params.alpha() - self.params.delta() * x) * eta)
    }

    // --- substituted quadrature ---------------------------------------------

    fn u_of_x(&self, x: f64) -> f64 {
        x.powf(1.0 - self.params.h())
    }

    fn x_of_u(&self, u: f64) -> f64 {
        u.powf(1.0 / (1.0 - self.params.h()))
    }

    // log of the u-space integrand of the unnormalized mass:
    // (1/(1-h)) u^{-h/(1-h)} exp(A u^{-gamma} - B u^2), gamma = (2h-1)/(1-h)
    fn log_u_integrand(&self, u: f64) -> f64 {
        let h = self.params.h();
        let gamma = (2.0 * h - 1.0) / (1.0 - h);
        self.coef_head * u.powf(-gamma) - self.coef_tail * u * u
            - (h / (1.0 - h)) * u.ln()
            - (1.0 - h).ln()
    }

    fn u_integrand(&self, u: f64) -> f64 {
        if u <= 0.0 {
            0.0
        } else {
            self.log_u_integrand(u).exp()
        }
    }

    fn unnorm_integral_u(&self, u_lo: f64, u_hi: f64) -> Result<f64> {
        let s = &self.settings;
        Ok(quad::integrate(
            |u| self.u_integrand(u),
            u_lo,
            u_hi,
            s.abs_tol,
            s.rel_tol,
            s.max_subdivisions,
        )?
        .value)
    }

    // --- masses and quantiles ------------------------------------------------

    /// `mu((x, inf))`.
    pub fn tail_mass(&self, x: f64) -> Result<f64> {
        if !(x >= 0.0) {
            return Err(Error::NegativeInput { name: "x", value: x });
        }
        let u = self.u_of_x(x);
        if u >= self.u_cut {
            return Ok(0.0);
        }
        Ok(self.unnorm_integral_u(u, self.u_cut)? / self.unnorm_total)
    }

    /// `mu((0, x))`.
    pub fn head_mass(&self, x: f64) -> Result<f64> {
        if !(x >= 0.0) {
            return Err(Error::NegativeInput { name: "x", value: x });
        }
        let u = self.u_of_x(x).min(self.u_cut);
        Ok(self.unnorm_integral_u(0.0, u)? / self.unnorm_total)
    }

    /// `int f dmu`, splitting the quadrature at the given x-space kinks.
    pub fn expectation<F: Fn(f64) -> f64>(&self, f: F, breakpoints: &[f64]) -> Result<f64> {
        let s = &self.settings;
        let cuts: Vec<f64> = breakpoints.iter().map(|&x| self.u_of_x(x)).collect();
        let total = quad::integrate_with_breakpoints(
            |u| self.u_integrand(u) * f(self.x_of_u(u)),
            0.0,
            self.u_cut,
            &cuts,
            s.abs_tol.max(1e-15),
            s.rel_tol.max(1e-12),
            s.max_subdivisions,
        )?
        .value;
        Ok(total / self.unnorm_total)
    }

    /// Dirichlet energy `1/2 int x^{2h} g(x)^2 dmu` of a weak derivative `g`.
    /// The `x^{2h}` weight cancels the density's singular factor, so the
    /// integrand is tame whenever the intrinsic gradient `x^h g` is bounded.
    pub fn dirichlet_energy<G: Fn(f64) -> f64>(&self, g: G, breakpoints: &[f64]) -> Result<f64> {
        let h = self.params.h();
        let s = &self.settings;
        let log_weight = |u: f64| {
            // u-integrand times x^{2h} = u^{2h/(1-h)}
            let gamma = (2.0 * h - 1.0) / (1.0 - h);
            self.coef_head * u.powf(-gamma) - self.coef_tail * u * u
                + (h / (1.0 - h)) * u.ln()
                - (1.0 - h).ln()
        };
        let integrand = |u: f64| {
            if u <= 0.0 {
                return 0.0;
            }
            let w = log_weight(u).exp();
            if w == 0.0 {
                return 0.0;
            }
            let x = self.x_of_u(u);
            let d = g(x);
            w * d * d
        };
        let cuts: Vec<f64> = breakpoints.iter().map(|&x| self.u_of_x(x)).collect();
        let total = quad::integrate_with_breakpoints(
            integrand,
            0.0,
            self.u_cut,
            &cuts,
            s.abs_tol.max(1e-15),
            s.rel_tol.max(1e-12),
            s.max_subdivisions,
        )?;
        // crude tail sentinel: the integrand must have died off at the cut
        let edge = integrand(self.u_cut * 0.999);
        if edge > 1e-6 * (total.value.abs() + 1e-300) && edge > 1e-250 {
            return Err(Error::DivergentForm(format!(
                "integrand still {edge:.3e} at the far cut"
            )));
        }
        Ok(0.5 * total.value / self.unnorm_total)
    }

    /// Boundary measure of the half-lines `(x, inf)` and `(0, x)`; both
    /// equal `x^h eta(x)`.
    pub fn boundary_measure_tail(&self, x: f64) -> Result<f64> {
        if !(x > 0.0) {
            return Err(Error::NonPositiveInput { name: "x", value: x });
        }
        let h = self.params.h();
        Ok((h * x.ln() + self.log_unnormalized_density(x)? - self.z.ln()).exp())
    }

    /// Difference quotient `(mu(D_eps) - mu(D)) / eps` for `D = (x, inf)`,
    /// whose intrinsic eps-neighborhood reaches down to
    /// `(x^{1-h} - (1-h) eps)^{1/(1-h)}`.
    pub fn boundary_measure_fd(&self, x: f64, eps: f64) -> Result<f64> {
        if !(x > 0.0) {
            return Err(Error::NonPositiveInput { name: "x", value: x });
        }
        if !(eps > 0.0) {
            return Err(Error::NonPositiveInput {
                name: "eps",
                value: eps,
            });
        }
        let h = self.params.h();
        let shifted = x.powf(1.0 - h) - (1.0 - h) * eps;
        if shifted <= 0.0 {
            return Err(Error::DegenerateNeighborhood { x, eps });
        }
        let strip = self.unnorm_integral_u(shifted, self.u_of_x(x))? / self.unnorm_total;
        Ok(strip / eps)
    }

    fn mass_bisect<M: Fn(f64) -> Result<f64>>(
        &self,
        mass: M,
        mut lo: f64,
        mut hi: f64,
        r: f64,
        decreasing: bool,
    ) -> Result<f64> {
        // stop on mass tolerance or relative bracket width
        let tol_mass = 1e-12f64.min(0.01 * r);
        for _ in 0..220 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            let m = mass(mid)?;
            let diff = m - r;
            if diff.abs() <= tol_mass {
                return Ok(mid);
            }
            let go_right = if decreasing { diff > 0.0 } else { diff < 0.0 };
            if go_right {
                lo = mid;
            } else {
                hi = mid;
            }
            if (hi - lo) <= 1e-13 * (lo.abs() + hi.abs()) {
                break;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    /// `x` with `tail_mass(x) = r`, for `0 < r < tail_mass(x0_mode)`.
    pub fn tail_quantile(&self, r: f64) -> Result<f64> {
        let at_mode = self.tail_mass(self.x0_mode)?;
        if !(r > 0.0 && r < at_mode) {
            return Err(Error::OutOfRange {
                field: "r",
                value: r,
                requirement: "0 < r < tail_mass(x0_mode)",
            });
        }
        let mut hi = self.x_of_u(self.u_cut);
        // an in-range bracket: tail(x0) > r, tail(hi) = 0 < r
        let lo = self.x0_mode;
        if self.tail_mass(hi)? >= r {
            hi *= 2.0; // unreachable with the 745 cut, kept for safety
        }
        self.mass_bisect(|x| self.tail_mass(x), lo, hi, r, true)
    }

    /// `x` with `head_mass(x) = r`, for `0 < r < head_mass(x0_mode)`.
    pub fn head_quantile(&self, r: f64) -> Result<f64> {
        let at_mode = self.head_mass(self.x0_mode)?;
        if !(r > 0.0 && r < at_mode) {
            return Err(Error::OutOfRange {
                field: "r",
                value: r,
                requirement: "0 < r < head_mass(x0_mode)",
            });
        }
        let mut lo = self.x0_mode;
        while self.head_mass(lo)? >= r {
            lo *= 0.5;
            if lo < 1e-300 {
                return Err(Error::RootFinding(format!(
                    "head quantile underflow at r = {r:.3e}"
                )));
            }
        }
        self.mass_bisect(|x| self.head_mass(x), lo, self.x0_mode, r, false)
    }

    /// Matched-mass quantile pair `(x1, x2)`:
    /// `head_mass(x1) = r = tail_mass(x2)`.
    pub fn quantiles(&self, r: f64) -> Result<(f64, f64)> {
        let head_cap = self.head_mass(self.x0_mode)?;
        let tail_cap = self.tail_mass(self.x0_mode)?;
        if !(r > 0.0 && r < head_cap.min(tail_cap)) {
            return Err(Error::OutOfRange {
                field: "r",
                value: r,
                requirement: "0 < r < min(head, tail) mass at the mode",
            });
        }
        Ok((self.head_quantile(r)?, self.tail_quantile(r)?))
    }

    // --- isoperimetric profile ----------------------------------------------

    // Largest grid mass below which the head-boundary dominance (the
    // comparison behind the tail-set reduction) is numerically confirmed,
    // capped at half the smaller mode mass.
    fn detect_regime_bound(&self) -> Result<f64> {
        let head_cap = self.head_mass(self.x0_mode)?;
        let tail_cap = self.tail_mass(self.x0_mode)?;
        let start = 0.5 * head_cap.min(tail_cap);
        let mut holds_down_to = f64::NAN;
        let mut r = start;
        let mut first_holding: Option<f64> = None;
        while r > 1e-12 {
            let (x1, x2) = self.quantiles(r)?;
            let head_b = self.boundary_measure_tail(x1)?;
            let tail_b = self.boundary_measure_tail(x2)?;
            if head_b > tail_b {
                if first_holding.is_none() {
                    first_holding = Some(r);
                }
                holds_down_to = r;
            } else {
                first_holding = None;
                holds_down_to = f64::NAN;
            }
            r *= 0.25;
        }
        let _ = holds_down_to;
        Ok(first_holding.unwrap_or(1e-12).min(start))
    }

    fn tail_ratio(&self, x: f64) -> Result<f64> {
        let mass = self.tail_mass(x)?;
        // below ~1e-300 the quadrature runs out of mantissa; treat the
        // ratio as unresolvable rather than as a candidate minimum
        if mass < 1e-300 {
            return Ok(f64::INFINITY);
        }
        Ok(self.boundary_measure_tail(x)? / mass)
    }

    /// Isoperimetric constant over tail sets:
    /// `k(r) = inf over tail_mass(x) <= r of x^h eta(x) / tail_mass(x)`,
    /// valid in the small-mass regime `r < regime_bound()`.
    pub fn isoperimetric_k(&self, r: f64) -> Result<f64> {
        if !(r > 0.0 && r < self.regime_bound) {
            return Err(Error::OutOfRange {
                field: "r",
                value: r,
                requirement: "0 < r < regime bound of the tail-set reduction",
            });
        }
        let x_r = self.tail_quantile(r)?;
        Ok(self.minimize_tail_ratio(x_r)?.1)
    }

    // grid scan in u beyond u(x_lo), golden polish around the best cell;
    // the scan stops where tail masses still carry full precision
    // (B u^2 <= 690, i.e. masses above ~1e-300)
    fn minimize_tail_ratio(&self, x_lo: f64) -> Result<(f64, f64)> {
        let u_lo = self.u_of_x(x_lo);
        let u_hi = (u_lo + 4.0).min((690.0 / self.coef_tail).sqrt());
        if u_hi <= u_lo {
            return Ok((x_lo, self.tail_ratio(x_lo)?));
        }
        let n = 48;
        let mut best = (x_lo, self.tail_ratio(x_lo)?);
        let mut best_i = 0usize;
        let mut us = Vec::with_capacity(n + 1);
        us.push(u_lo);
        for i in 1..=n {
            let u = u_lo + (u_hi - u_lo) * i as f64 / n as f64;
            us.push(u);
            let x = self.x_of_u(u);
            let v = self.tail_ratio(x)?;
            if v < best.1 {
                best = (x, v);
                best_i = i;
            }
        }
        let bracket_lo = us[best_i.saturating_sub(1)];
        let bracket_hi = us[(best_i + 1).min(n)];
        if bracket_hi > bracket_lo {
            let (u_min, v) = roots::golden_min(
                |u| {
                    self.tail_ratio(self.x_of_u(u))
                        .unwrap_or(f64::INFINITY)
                },
                bracket_lo,
                bracket_hi,
                1e-10,
            );
            if v < best.1 {
                best = (self.x_of_u(u_min), v);
            }
        }
        Ok(best)
    }

    /// `k(r)` outside the reduced regime: minimum over both single-interval
    /// families (head and tail), reported with the winning side.
    pub fn isoperimetric_k_unreduced(&self, r: f64) -> Result<(f64, &'static str)> {
        let head_cap = self.head_mass(self.x0_mode)?;
        let tail_cap = self.tail_mass(self.x0_mode)?;
        if !(r > 0.0 && r < head_cap.min(tail_cap)) {
            return Err(Error::OutOfRange {
                field: "r",
                value: r,
                requirement: "0 < r < min mode mass",
            });
        }
        let tail = self.minimize_tail_ratio(self.tail_quantile(r)?)?.1;
        // head family: ratio decreasing toward the quantile, so scan below it
        let x1 = self.head_quantile(r)?;
        let mut head_best = f64::INFINITY;
        for i in 0..=32 {
            let x = x1 * (1.0 - i as f64 / 40.0).max(1e-6);
            let mass = self.head_mass(x)?;
            if mass > 0.0 {
                head_best = head_best.min(self.boundary_measure_tail(x)? / mass);
            }
        }
        if tail <= head_best {
            Ok((tail, "tail"))
        } else {
            Ok((head_best, "head"))
        }
    }

    /// `k^{-1}(v) = sup { s : k(s) > v }`, by bisection in log-mass.
    pub fn k_inverse(&self, v: f64) -> Result<(f64, KInverseClamp)> {
        if !(v > 0.0) {
            return Err(Error::NonPositiveInput { name: "v", value: v });
        }
        let s_hi = self.regime_bound * (1.0 - 1e-9);
        if self.isoperimetric_k(s_hi)? > v {
            return Ok((s_hi, KInverseClamp::AtRegimeBound));
        }
        // smallest mass still resolvable by the f64 quadrature; the probe
        // sits at a fixed fraction of the cut so B u^2 stays near 630
        // whatever the parameters (B u_cut^2 = 745 by construction)
        let s_lo = self
            .tail_mass(self.x_of_u(0.92 * self.u_cut))?
            .max(1e-290);
        if self.isoperimetric_k(s_lo)? <= v {
            return Ok((0.0, KInverseClamp::BelowRange));
        }
        let mut m_lo = s_lo.ln();
        let mut m_hi = s_hi.ln();
        for _ in 0..80 {
            let mid = 0.5 * (m_lo + m_hi);
            let k = self.isoperimetric_k(mid.exp())?;
            if (k - v).abs() <= 1e-9 * v {
                return Ok((mid.exp(), KInverseClamp::Exact));
            }
            if k > v {
                m_lo = mid;
            } else {
                m_hi = mid;
            }
            if (m_hi - m_lo).abs() < 1e-12 {
                break;
            }
        }
        Ok(((0.5 * (m_lo + m_hi)).exp(), KInverseClamp::Exact))
    }

    /// Super Poincare rate from the isoperimetric profile:
    /// `beta(r) = 4 / k^{-1}(2 sqrt2 r^{-1/2})`.
    pub fn beta_isoperimetric(&self, r: f64) -> Result<f64> {
        if !(r > 0.0) {
            return Err(Error::NonPositiveInput { name: "r", value: r });
        }
        let v = 2.0 * 2f64.sqrt() / r.sqrt();
        let (s, clamp) = self.k_inverse(v)?;
        if clamp == KInverseClamp::BelowRange || s == 0.0 {
            return Err(Error::Degenerate(format!(
                "k never exceeds {v:.4e} within the resolvable mass range (r = {r:.3e} too small)"
            )));
        }
        Ok(4.0 / s)
    }

    /// Literal tail reference of the far asymptotic,
    /// `(Gamma0/Z) (2 delta)^{-1} x^{-1} e^{-B x^{2-2h}}`.
    pub fn tail_reference(&self, x: f64) -> f64 {
        let h = self.params.h();
        ((self.gamma0 / self.z).ln() - (2.0 * self.params.delta()).ln() - x.ln()
            - self.coef_tail * x.powf(2.0 - 2.0 * h))
        .exp()
    }

    /// Second normalization route: head piece in `u`, tail piece in
    /// `v = x^{2-2h}` split at the mode. Agrees with [`Self::z`] to
    /// quadrature accuracy.
    pub fn z_alternative(&self) -> Result<f64> {
        let h = self.params.h();
        let s = &self.settings;
        let head = self.unnorm_integral_u(0.0, self.u_of_x(self.x0_mode))?;
        let p = 2.0 - 2.0 * h;
        let v_cut = 745.0 / self.coef_tail;
        let log_v_integrand = |v: f64| {
            let gamma = (2.0 * h - 1.0) / p;
            self.coef_head * v.powf(-gamma) - self.coef_tail * v - (1.0 / p) * v.ln() - p.ln()
        };
        let tail = quad::integrate(
            |v| if v <= 0.0 { 0.0 } else { log_v_integrand(v).exp() },
            self.x0_mode.powf(p),
            v_cut,
            s.abs_tol,
            s.rel_tol,
            s.max_subdivisions,
        )?
        .value;
        Ok(self.gamma0 * (head + tail))
    }

    /// Allocation probe behind the tail-set reduction: split mass `r` into a
    /// head set `(0, y1)` of mass `s` and a tail set `(y2, inf)` of mass
    /// `r - s`, and scan `phi(s) = y1^h eta(y1) + y2^h eta(y2)` on a grid.
    pub fn split_minimizer_probe(&self, r: f64, n_grid: usize) -> Result<SplitProbe> {
        if n_grid < 10 {
            return Err(Error::OutOfRange {
                field: "n_grid",
                value: n_grid as f64,
                requirement: "n_grid >= 10",
            });
        }
        if !(r > 0.0 && r < self.regime_bound) {
            return Err(Error::OutOfRange {
                field: "r",
                value: r,
                requirement: "0 < r < regime bound",
            });
        }
        let mut min_phi = f64::INFINITY;
        let mut argmin = 0usize;
        let mut tail_only = f64::NAN;
        let mut head_only = f64::NAN;
        for i in 0..=n_grid {
            let s = r * i as f64 / n_grid as f64;
            let head_part = if i == 0 {
                0.0
            } else {
                self.boundary_measure_tail(self.head_quantile(s)?)?
            };
            let tail_part = if i == n_grid {
                0.0
            } else {
                self.boundary_measure_tail(self.tail_quantile(r - s)?)?
            };
            let phi = head_part + tail_part;
            if i == 0 {
                tail_only = phi;
            }
            if i == n_grid {
                head_only = phi;
            }
            if phi < min_phi {
                min_phi = phi;
                argmin = i;
            }
        }
        Ok(SplitProbe {
            r,
            n_grid,
            min_over_splits: min_phi,
            argmin_index: argmin,
            tail_only_value: tail_only,
            head_only_value: head_only,
        })
    }
}

/// Result of [`MeasureContext::split_minimizer_probe`].
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SplitProbe {
    pub r: f64,
    pub n_grid: usize,
    pub min_over_splits: f64,
    pub argmin_index: usize,
    pub tail_only_value: f64,
    pub head_only_value: f64,
}

/// Exponential super Poincare rate `beta(r) = exp(c (1 + 1/r))`;
/// overflows to infinity for tiny `r`, see [`beta_exponential_log`].
pub fn beta_exponential(c: f64, r: f64) -> Result<f64> {
    Ok(beta_exponential_log(c, r)?.exp())
}

/// `log beta(r) = c (1 + 1/r)`, finite for every positive `r`.
pub fn beta_exponential_log(c: f64, r: f64) -> Result<f64> {
    if !(c > 0.0) {
        return Err(Error::NonPositiveInput { name: "c", value: c });
    }
    if !(r > 0.0) {
        return Err(Error::NonPositiveInput { name: "r", value: r });
    }
    Ok(c * (1.0 + 1.0 / r))
}

/// One row of the sampled rate table.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RateRow {
    pub r: f64,
    pub x_r: f64,
    pub k: f64,
    /// Argument `2 sqrt2 / sqrt r` passed to `k^{-1}` for `beta_iso`.
    pub k_inverse_arg: f64,
    pub beta_iso: f64,
    pub beta_exp_fit: f64,
}

/// Sampled `(r, x_r, k, beta)` table for the super Poincare rate function.
#[derive(Debug, Clone)]
pub struct RateTable {
    rows: Vec<RateRow>,
    fitted_c: f64,
}

impl RateTable {
    /// Evaluate the profile on an `r` grid. Rows outside a quantity's
    /// admissible range carry NaN for that column. The exponential-rate
    /// constant `c` is fitted on the finite `beta_iso` entries and bumped
    /// up to dominate them, then `beta_exp_fit = exp(c (1 + 1/r))`.
    pub fn build(ctx: &MeasureContext, r_values: &[f64]) -> Result<Self> {
        let mut rows: Vec<RateRow> = r_values
            .par_iter()
            .map(|&r| {
                let x_r = ctx.tail_quantile(r).unwrap_or(f64::NAN);
                let k = ctx.isoperimetric_k(r).unwrap_or(f64::NAN);
                let v = 2.0 * 2f64.sqrt() / r.sqrt();
                let beta_iso = ctx.beta_isoperimetric(r).unwrap_or(f64::NAN);
                RateRow {
                    r,
                    x_r,
                    k,
                    k_inverse_arg: v,
                    beta_iso,
                    beta_exp_fit: f64::NAN,
                }
            })
            .collect();
        rows.sort_by(|a, b| a.r.total_cmp(&b.r));

        // least squares through the origin of log beta against (1 + 1/r),
        // then raise c until the fit dominates every finite entry
        let pts: Vec<(f64, f64)> = rows
            .iter()
            .filter(|row| row.beta_iso.is_finite() && row.beta_iso > 0.0)
            .map(|row| (1.0 + 1.0 / row.r, row.beta_iso.ln()))
            .collect();
        let mut c = if pts.is_empty() {
            f64::NAN
        } else {
            let sxy: f64 = pts.iter().map(|(x, y)| x * y).sum();
            let sxx: f64 = pts.iter().map(|(x, _)| x * x).sum();
            sxy / sxx
        };
        if c.is_finite() {
            for (x, y) in &pts {
                c = c.max(y / x);
            }
            for row in &mut rows {
                row.beta_exp_fit = (c * (1.0 + 1.0 / row.r)).exp();
            }
        }
        Ok(Self { rows, fitted_c: c })
    }

    pub fn rows(&self) -> &[RateRow] {
        &self.rows
    }

    /// Fitted (and dominating) exponential-rate constant.
    pub fn fitted_c(&self) -> f64 {
        self.fitted_c
    }

    /// CSV dump with header `r,x_r,k,k_inverse_arg,beta_iso,beta_exp_fit`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "r,x_r,k,k_inverse_arg,beta_iso,beta_exp_fit")?;
        for row in &self.rows {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                row.r, row.x_r, row.k, row.k_inverse_arg, row.beta_iso, row.beta_exp_fit
            )?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ctx() -> MeasureContext {
        let params = ModelParams::new(0.5, 1.0, 0.75).unwrap();
        MeasureContext::normalize(&params, QuadSettings::default()).unwrap()
    }

    #[test]
    fn normalization_against_reference() {
        let c = ctx();
        assert!((c.gamma0() - 806.85758698547025).abs() < 1e-9);
        assert!((c.z() - 8.9325058014074907).abs() < 1e-10, "Z = {}", c.z());
        // density integrates to one
        let total = c.expectation(|_| 1.0, &[]).unwrap();
        assert!((total - 1.0).abs() < 1e-10);
    }

    #[test]
    fn dual_route_normalization_agrees() {
        let c = ctx();
        let z2 = c.z_alternative().unwrap();
        assert!(
            ((z2 - c.z()) / c.z()).abs() < 1e-8,
            "routes differ: {} vs {}",
            z2,
            c.z()
        );
    }

    #[test]
    fn unnormalized_density_is_two_at_one() {
        // the integral in the exponent starts at 1, so Z eta(1) = 2 exactly
        let c = ctx();
        let v = c.log_unnormalized_density(1.0).unwrap().exp();
        assert!((v - 2.0).abs() < 1e-12);
    }

    #[test]
    fn log_density_diverges_at_both_ends() {
        let c = ctx();
        assert!(c.log_density(1e-8).unwrap() < -1e3);
        assert!(c.log_density(1e8).unwrap() < -1e3);
        assert!(matches!(
            c.log_unnormalized_density(0.0),
            Err(Error::NonPositiveInput { .. })
        ));
    }

    #[test]
    fn mode_solves_its_equation() {
        let c = ctx();
        assert!((c.x0_mode() - 0.29598359584250879).abs() < 1e-10);
        let p = c.params();
        let residual = 2.0 * p.delta() * c.x0_mode()
            + p.h() * c.x0_mode().powf(2.0 * p.h() - 1.0)
            - 2.0 * p.alpha();
        assert!(residual.abs() <= 1e-12);
    }

    #[test]
    fn masses_are_complementary_and_monotone() {
        let c = ctx();
        assert_eq!(c.tail_mass(0.0).unwrap(), 1.0);
        let sum = c.head_mass(c.x0_mode()).unwrap() + c.tail_mass(c.x0_mode()).unwrap();
        assert!((sum - 1.0).abs() < 1e-10);
        assert!((c.head_mass(c.x0_mode()).unwrap() - 0.407747684675).abs() < 1e-9);
        let mut last = 1.0;
        for x in [0.1, 0.3, 1.0, 3.0, 10.0] {
            let t = c.tail_mass(x).unwrap();
            assert!(t < last);
            last = t;
        }
    }

    #[test]
    fn stationarity_flux_vanishes() {
        let c = ctx();
        for i in 0..50 {
            let x = 10f64.powf(-2.0 + 4.0 * i as f64 / 49.0);
            let flux = c.stationarity_flux(x).unwrap();
            let eta = c.density(x);
            if eta > 1e-300 {
                assert!(flux.abs() / eta <= 1e-8, "flux/eta = {} at x = {x}", flux / eta);
            }
        }
    }

    #[test]
    fn stationarity_flux_by_finite_difference() {
        // independent check: differentiate x^{2h} eta numerically
        let c = ctx();
        let p = c.params();
        let g = |x: f64| x.powf(2.0 * p.h()) * c.density(x);
        for x in [0.05, 0.2, 0.5, 1.0, 2.0, 5.0] {
            let dx = x * 1e-6;
            let deriv = (g(x + dx) - g(x - dx)) / (2.0 * dx);
            let flux = 0.5 * deriv - (p.alpha() - p.delta() * x) * c.density(x);
            assert!(
                flux.abs() / c.density(x) <= 1e-6,
                "fd flux/eta = {} at x = {x}",
                flux / c.density(x)
            );
        }
    }

    #[test]
    fn boundary_fd_matches_closed_form() {
        let c = ctx();
        let closed = c.boundary_measure_tail(1.0).unwrap();
        let fd = c.boundary_measure_fd(1.0, 1e-4).unwrap();
        assert!(((fd - closed) / closed).abs() <= 1e-2);
        assert!(matches!(
            c.boundary_measure_fd(1e-3, 1.0),
            Err(Error::DegenerateNeighborhood { .. })
        ));
    }

    #[test]
    fn boundary_peaks_at_the_mode() {
        let c = ctx();
        let peak = c.boundary_measure_tail(c.x0_mode()).unwrap();
        let mut grid_best = (0.0, 0.0);
        for i in 1..400 {
            let x = i as f64 * 0.005;
            let b = c.boundary_measure_tail(x).unwrap();
            if b > grid_best.1 {
                grid_best = (x, b);
            }
        }
        assert!(peak >= grid_best.1 * (1.0 - 1e-9));
        assert!((grid_best.0 - c.x0_mode()).abs() <= 0.005 + 1e-12);
    }

    #[test]
    fn quantiles_invert_the_masses() {
        let c = ctx();
        for r in [1e-2, 1e-4, 1e-6] {
            let (x1, x2) = c.quantiles(r).unwrap();
            assert!((c.head_mass(x1).unwrap() - r).abs() <= 1e-12);
            assert!((c.tail_mass(x2).unwrap() - r).abs() <= 1e-12);
        }
        // trend toward the endpoints as r -> 0
        let (a1, a2) = c.quantiles(1e-2).unwrap();
        let (b1, b2) = c.quantiles(1e-8).unwrap();
        assert!(b1 < a1 && b2 > a2);
        assert!(matches!(c.quantiles(0.9), Err(Error::OutOfRange { .. })));
    }

    #[test]
    fn head_boundary_dominates_tail_boundary_at_small_mass() {
        let c = ctx();
        let (x1, x2) = c.quantiles(1e-6).unwrap();
        let head_b = c.boundary_measure_tail(x1).unwrap();
        let tail_b = c.boundary_measure_tail(x2).unwrap();
        assert!(head_b > tail_b, "{head_b} vs {tail_b}");
    }

    #[test]
    fn tail_asymptotic_reference() {
        // the plain reference converges to 1 slowly; the residual factor
        // exp(A x^{1-2h}) explains most of the gap at moderate depth
        let c = ctx();
        let x8 = c.tail_quantile(1e-8).unwrap();
        let plain8 = c.tail_mass(x8).unwrap() / c.tail_reference(x8);
        let with_a8 = plain8
            / (c.coef_head * x8.powf(1.0 - 2.0 * c.params().h())).exp();
        assert!((with_a8 - 1.0).abs() <= 0.12, "ratio {with_a8}");
        let x12 = c.tail_quantile(1e-12).unwrap();
        let plain12 = c.tail_mass(x12).unwrap() / c.tail_reference(x12);
        assert!((plain12 - 1.0).abs() < (plain8 - 1.0).abs());
        // deep in the tail the literal reference itself is within 5%
        let x_deep = c.tail_quantile(1e-250).unwrap();
        let deep = c.tail_mass(x_deep).unwrap() / c.tail_reference(x_deep);
        assert!((deep - 1.0).abs() <= 0.05, "deep ratio {deep}");
    }

    #[test]
    fn isoperimetric_profile_reference_values() {
        let c = ctx();
        assert!(c.regime_bound() > 1e-3);
        let k6 = c.isoperimetric_k(1e-6).unwrap();
        assert!((k6 - 4.163149313).abs() / 4.163149313 < 1e-3, "k(1e-6) = {k6}");
        let k10 = c.isoperimetric_k(1e-10).unwrap();
        assert!((k10 - 5.122606449).abs() / 5.122606449 < 1e-3, "k(1e-10) = {k10}");
        // nonincreasing in r: along a falling r-ladder, k rises
        let mut last = 0.0;
        for r in [1e-3, 1e-4, 1e-6, 1e-8, 1e-10] {
            let k = c.isoperimetric_k(r).unwrap();
            assert!(k > last, "k({r}) = {k} did not rise past {last}");
            last = k;
        }
        assert!(matches!(
            c.isoperimetric_k(0.9),
            Err(Error::OutOfRange { .. })
        ));
    }

    #[test]
    fn corrected_asymptotic_of_k() {
        // k(r) / (2 sqrt(delta (1-h)) sqrt(log 1/r)) approaches 1 from above
        let c = ctx();
        let p = c.params();
        let scale = 2.0 * (p.delta() * (1.0 - p.h())).sqrt();
        let r = 1e-10f64;
        let ratio = c.isoperimetric_k(r).unwrap() / (scale * (1.0 / r).ln().sqrt());
        assert!((ratio - 1.0).abs() <= 0.2, "corrected ratio {ratio}");
    }

    #[test]
    fn k_inverse_round_trip() {
        let c = ctx();
        let v = c.isoperimetric_k(1e-6).unwrap();
        let (s, clamp) = c.k_inverse(v).unwrap();
        assert_eq!(clamp, KInverseClamp::Exact);
        assert!((s - 1e-6).abs() / 1e-6 < 0.05, "s = {s:.3e}");
        assert!(c.isoperimetric_k(s * (1.0 - 1e-6)).unwrap() >= v * (1.0 - 1e-6));
        // monotone in v
        let (s2, _) = c.k_inverse(v * 1.2).unwrap();
        assert!(s2 < s);
        // tiny v clamps at the regime bound
        let (s3, clamp3) = c.k_inverse(1e-6).unwrap();
        assert_eq!(clamp3, KInverseClamp::AtRegimeBound);
        assert!(s3 > 1e-3);
        // huge v falls below the resolvable range
        let (s4, clamp4) = c.k_inverse(1e9).unwrap();
        assert_eq!(clamp4, KInverseClamp::BelowRange);
        assert_eq!(s4, 0.0);
    }

    #[test]
    fn beta_isoperimetric_reference_values() {
        let c = ctx();
        let b05 = c.beta_isoperimetric(0.5).unwrap();
        assert!((b05 - 1.0314e6).abs() / 1.0314e6 < 0.05, "beta(0.5) = {b05:.4e}");
        let b002 = c.beta_isoperimetric(0.02).unwrap();
        assert!(
            (b002.ln() - 8.8654e174f64.ln()).abs() < 0.5,
            "beta(0.02) = {b002:.4e}"
        );
        let mut last = f64::INFINITY;
        for r in [0.02, 0.1, 0.5] {
            let b = c.beta_isoperimetric(r).unwrap();
            assert!(b < last);
            last = b;
        }
    }

    #[test]
    fn beta_exponential_algebra() {
        let b = beta_exponential(2.0, 0.1).unwrap();
        assert!((b.ln() - 2.0 * 11.0).abs() < 1e-12);
        // for small r, r log beta(c, r) -> c; the plain form overflows there
        for r in [1e-3, 1e-5] {
            let v = beta_exponential_log(3.0, r).unwrap() * r;
            assert!((v - 3.0).abs() < 3.0 * 2.0 * r);
        }
        assert!(beta_exponential(3.0, 1e-5).unwrap().is_infinite());
        assert!(beta_exponential(0.0, 0.1).is_err());
    }

    #[test]
    fn split_probe_minimizes_at_pure_tail() {
        let c = ctx();
        let probe = c.split_minimizer_probe(1e-6, 40).unwrap();
        assert_eq!(probe.argmin_index, 0);
        assert!((probe.min_over_splits - probe.tail_only_value).abs()
            <= 1e-10 * probe.tail_only_value);
        assert!(probe.head_only_value > probe.tail_only_value);
        // pure tail reproduces the boundary at the tail quantile
        let expect = c
            .boundary_measure_tail(c.tail_quantile(1e-6).unwrap())
            .unwrap();
        assert!((probe.tail_only_value - expect).abs() <= 1e-12 * expect.max(1.0));
    }

    #[test]
    fn rate_table_columns_and_monotonicity() {
        // the beta columns only resolve for moderate r (the k-inverse mass
        // underflows f64 otherwise); the small-r rows still carry k
        let c = ctx();
        let grid = [1e-5, 1e-3, 0.02, 0.1, 0.5];
        let table = RateTable::build(&c, &grid).unwrap();
        let rows = table.rows();
        assert_eq!(rows.len(), grid.len());
        for w in rows.windows(2) {
            assert!(w[0].r < w[1].r);
            if w[0].k.is_finite() && w[1].k.is_finite() {
                assert!(w[0].k > w[1].k, "k must fall as r grows");
            }
            if w[0].beta_iso.is_finite() && w[1].beta_iso.is_finite() {
                assert!(w[0].beta_iso > w[1].beta_iso);
            }
        }
        assert!(rows.iter().filter(|r| r.k.is_finite()).count() >= 2);
        assert!(rows.iter().filter(|r| r.beta_iso.is_finite()).count() >= 3);
        assert!(table.fitted_c().is_finite() && table.fitted_c() > 0.0);
        for row in rows {
            if row.beta_iso.is_finite() {
                assert!(row.beta_iso <= row.beta_exp_fit * (1.0 + 1e-9));
            }
        }
        let mut buf = Vec::new();
        table.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("r,x_r,k,k_inverse_arg,beta_iso,beta_exp_fit\n"));
        assert_eq!(text.lines().count(), 1 + grid.len());
    }

    #[test]
    fn second_triple_normalization() {
        let params = ModelParams::new(1.0, 2.0, 0.85).unwrap();
        let c = MeasureContext::normalize(&params, QuadSettings::default()).unwrap();
        assert!((c.z() - 9.5312369966917637).abs() / 9.5312369966917637 < 1e-10);
        assert!((c.x0_mode() - 0.39006101629295793).abs() < 1e-10);
        let total = c.expectation(|_| 1.0, &[]).unwrap();
        assert!((total - 1.0).abs() < 1e-10);
    }
}
