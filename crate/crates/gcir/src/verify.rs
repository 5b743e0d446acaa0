//! Verification harnesses.
//!
//! Monte Carlo checks of the Harnack, log-Harnack, and intrinsic-gradient
//! estimates; quadrature checks of the super Poincare inequality with the
//! computed rate functions; and the divergence probe behind the optimality
//! statement for the exponential rate.
//!
//! Monte Carlo comparisons are classified by a z-score against the combined
//! standard error (threshold 4); quadrature comparisons by an absolute
//! slack tolerance. Inequalities with a proven constant should never come
//! out `Violated`; the `constant_scale` knob exists to confirm the harness
//! can detect a broken bound.

use crate::measure::MeasureContext;
use crate::model::{ModelParams, TransportPlan};
use crate::quad;
use crate::sim::{self, MCEstimate, Scheme, SimConfig};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::io::{self, Write};
use std::sync::Arc;

pub const MC_Z_THRESHOLD: f64 = 4.0;

/// Outcome of a single inequality check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    /// Nonnegative slack.
    Holds,
    /// Negative slack within the statistical or numerical tolerance.
    HoldsWithinError,
    Violated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckKind {
    MonteCarlo,
    Quadrature,
}

/// One verified inequality: `lhs <= rhs` expected.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerificationReport {
    pub check_id: String,
    pub kind: CheckKind,
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
    /// `(lhs - rhs) / combined std error`; `None` for quadrature checks.
    pub z_score: Option<f64>,
    pub verdict: Verdict,
}

impl VerificationReport {
    /// Classify `lhs <= rhs` with Monte Carlo standard errors on each side.
    pub fn monte_carlo(check_id: String, lhs: f64, lhs_se: f64, rhs: f64, rhs_se: f64) -> Self {
        let slack = rhs - lhs;
        let se = lhs_se.hypot(rhs_se);
        let z = if slack >= 0.0 {
            (lhs - rhs) / se.max(f64::MIN_POSITIVE)
        } else if se > 0.0 {
            (lhs - rhs) / se
        } else {
            f64::INFINITY
        };
        let verdict = if slack >= 0.0 {
            Verdict::Holds
        } else if z <= MC_Z_THRESHOLD {
            Verdict::HoldsWithinError
        } else {
            Verdict::Violated
        };
        Self {
            check_id,
            kind: CheckKind::MonteCarlo,
            lhs,
            rhs,
            slack,
            z_score: Some(z),
            verdict,
        }
    }

    /// Classify `lhs <= rhs` computed by deterministic quadrature.
    pub fn quadrature(check_id: String, lhs: f64, rhs: f64, abs_tol: f64) -> Self {
        let slack = rhs - lhs;
        let verdict = if slack >= 0.0 {
            Verdict::Holds
        } else if slack >= -abs_tol {
            Verdict::HoldsWithinError
        } else {
            Verdict::Violated
        };
        Self {
            check_id,
            kind: CheckKind::Quadrature,
            lhs,
            rhs,
            slack,
            z_score: None,
            verdict,
        }
    }
}

/// CSV dump with header `check_id,kind,lhs,rhs,slack,z,verdict`.
pub fn write_reports_csv<W: Write>(reports: &[VerificationReport], mut w: W) -> io::Result<()> {
    writeln!(w, "check_id,kind,lhs,rhs,slack,z,verdict")?;
    for r in reports {
        let kind = match r.kind {
            CheckKind::MonteCarlo => "monte-carlo",
            CheckKind::Quadrature => "quadrature",
        };
        let z = r.z_score.map_or(String::new(), |z| z.to_string());
        let verdict = match r.verdict {
            Verdict::Holds => "holds",
            Verdict::HoldsWithinError => "holds-within-error",
            Verdict::Violated => "violated",
        };
        writeln!(
            w,
            "{},{kind},{},{},{},{z},{verdict}",
            r.check_id, r.lhs, r.rhs, r.slack
        )?;
    }
    Ok(())
}

type Evaluator = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A test function with its derivative and honesty flags.
#[derive(Clone)]
pub struct TestFunction {
    pub id: String,
    pub f: Evaluator,
    pub df: Evaluator,
    pub bounded: bool,
    /// `f >= 0` everywhere.
    pub positive: bool,
    /// `inf f > 0` (needed under a logarithm).
    pub strictly_positive: bool,
    /// x-space kinks where quadrature must split.
    pub breakpoints: Vec<f64>,
}

impl std::fmt::Debug for TestFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TestFunction")
            .field("id", &self.id)
            .field("bounded", &self.bounded)
            .field("positive", &self.positive)
            .field("strictly_positive", &self.strictly_positive)
            .finish()
    }
}

impl TestFunction {
    fn new(
        id: &str,
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
        df: impl Fn(f64) -> f64 + Send + Sync + 'static,
        bounded: bool,
        positive: bool,
        strictly_positive: bool,
    ) -> Self {
        Self {
            id: id.to_string(),
            f: Arc::new(f),
            df: Arc::new(df),
            bounded,
            positive,
            strictly_positive,
            breakpoints: Vec::new(),
        }
    }
}

/// Bounded nonnegative family for the Harnack-type Monte Carlo checks.
/// All members are continuously differentiable.
pub fn bounded_positive_family(params: &ModelParams) -> Vec<TestFunction> {
    let h = params.h();
    let rho0 = move |x: f64| x.powf(1.0 - h) / (1.0 - h);
    vec![
        TestFunction::new("unit", |_| 1.0, |_| 0.0, true, true, true),
        TestFunction::new(
            "inv_shift",
            |x| 1.0 / (1.0 + x),
            |x| -1.0 / ((1.0 + x) * (1.0 + x)),
            true,
            true,
            false,
        ),
        TestFunction::new(
            "one_plus_exp",
            |x| 1.0 + (-x).exp(),
            |x| -(-x).exp(),
            true,
            true,
            true,
        ),
        TestFunction::new(
            "saturating",
            |x| x / (1.0 + x),
            |x| 1.0 / ((1.0 + x) * (1.0 + x)),
            true,
            true,
            false,
        ),
        TestFunction::new(
            "rho_gauss",
            move |x| (-rho0(x) * rho0(x)).exp(),
            move |x| {
                let r = rho0(x);
                -2.0 * r * x.powf(-h) * (-r * r).exp()
            },
            true,
            true,
            false,
        ),
    ]
}

/// Finite-energy family for the super Poincare checks: exponentials and a
/// sign-alternating bump in the intrinsic coordinate.
pub fn energy_family(params: &ModelParams) -> Vec<TestFunction> {
    let h = params.h();
    let rho0 = move |x: f64| x.powf(1.0 - h) / (1.0 - h);
    let mut out: Vec<TestFunction> = [1.0, 2.0, 4.0, 8.0]
        .into_iter()
        .map(|n| {
            TestFunction::new(
                &format!("exp_rho_{n}"),
                move |x| (-n * rho0(x)).exp(),
                move |x| -n * x.powf(-h) * (-n * rho0(x)).exp(),
                true,
                true,
                false,
            )
        })
        .collect();
    // centered at rho = rho(0,1), changes sign there
    let center = rho0(1.0);
    let mut bump = TestFunction::new(
        "bump_pair",
        move |x| {
            let t = rho0(x) - center;
            t * (-t * t).exp()
        },
        move |x| {
            let t = rho0(x) - center;
            x.powf(-h) * (1.0 - 2.0 * t * t) * (-t * t).exp()
        },
        true,
        false,
        false,
    );
    bump.breakpoints = vec![1.0];
    out.push(bump);
    out
}

/// Clipped intrinsic distances `min(rho(0, .), n)`; weak derivative
/// `x^{-h}` below the clip and zero beyond.
pub fn clipped_distance_family(params: &ModelParams, levels: &[f64]) -> Vec<TestFunction> {
    let h = params.h();
    levels
        .iter()
        .map(|&n| {
            let clip_x = ((1.0 - h) * n).powf(1.0 / (1.0 - h));
            let rho0 = move |x: f64| x.powf(1.0 - h) / (1.0 - h);
            let mut tf = TestFunction::new(
                &format!("clipped_rho_{n}"),
                move |x| rho0(x).min(n),
                move |x| if x < clip_x { x.powf(-h) } else { 0.0 },
                true,
                true,
                false,
            );
            tf.breakpoints = vec![clip_x];
            tf
        })
        .collect()
}

fn check_horizon(plan_horizon: f64, config: &SimConfig) -> Result<()> {
    config.validate()?;
    if (config.horizon - plan_horizon).abs() > 1e-12 * plan_horizon.max(1.0) {
        return Err(Error::InvalidConfig(format!(
            "config horizon {} must match the plan horizon {plan_horizon}",
            config.horizon
        )));
    }
    Ok(())
}

fn mc_of<F: Fn(f64) -> f64 + Sync>(samples: &[f64], f: F) -> MCEstimate {
    let mapped: Vec<f64> = samples.iter().map(|&x| f(x)).collect();
    MCEstimate::from_samples(&mapped)
}

/// Harnack check: `(P_T f(y))^p <= P_T f^p(x) * C(p, T, x, y) * scale`.
pub fn verify_harnack(
    params: &ModelParams,
    plan: &TransportPlan,
    f: &TestFunction,
    config: &SimConfig,
    constant_scale: f64,
) -> Result<VerificationReport> {
    if !f.positive {
        return Err(Error::NonPositiveFunction(f.id.clone()));
    }
    check_horizon(plan.horizon(), config)?;
    let p = plan.p().ok_or(Error::ExponentViolation { p: f64::NAN })?;
    let constant = params.harnack_constant(plan)? * constant_scale;

    let term_y = sim::terminal_values(params, plan.y(), config)?;
    let term_x = sim::terminal_values(params, plan.x(), config)?;
    let m_y = mc_of(&term_y, |v| (f.f)(v));
    let m_xp = mc_of(&term_x, |v| (f.f)(v).powf(p));

    let lhs = m_y.mean.powf(p);
    let lhs_se = p * m_y.mean.powf(p - 1.0) * m_y.std_error;
    let rhs = m_xp.mean * constant;
    let rhs_se = m_xp.std_error * constant;
    let id = format!(
        "harnack:f={}:x={}:y={}:T={}:p={p}",
        f.id,
        plan.x(),
        plan.y(),
        plan.horizon()
    );
    Ok(VerificationReport::monte_carlo(id, lhs, lhs_se, rhs, rhs_se))
}

/// Log-Harnack check:
/// `P_T log f(y) <= log P_T f(x) + C_log * scale`, `inf f > 0`.
pub fn verify_log_harnack(
    params: &ModelParams,
    plan: &TransportPlan,
    f: &TestFunction,
    config: &SimConfig,
    constant_scale: f64,
) -> Result<VerificationReport> {
    if !f.strictly_positive {
        return Err(Error::NonPositiveFunction(f.id.clone()));
    }
    check_horizon(plan.horizon(), config)?;
    let constant = params.log_harnack_constant(plan)? * constant_scale;

    let term_y = sim::terminal_values(params, plan.y(), config)?;
    let term_x = sim::terminal_values(params, plan.x(), config)?;
    let m_logf = mc_of(&term_y, |v| (f.f)(v).ln());
    let m_x = mc_of(&term_x, |v| (f.f)(v));

    let lhs = m_logf.mean;
    let rhs = m_x.mean.ln() + constant;
    let rhs_se = m_x.std_error / m_x.mean;
    let id = format!(
        "log-harnack:f={}:x={}:y={}:T={}",
        f.id,
        plan.x(),
        plan.y(),
        plan.horizon()
    );
    Ok(VerificationReport::monte_carlo(
        id,
        lhs,
        m_logf.std_error,
        rhs,
        rhs_se,
    ))
}

/// Intrinsic-gradient check at `x`:
/// difference quotient of `P_T f` over an intrinsic step `rho_step`,
/// with common random numbers, against
/// `e^{-kappa T} * scale * P_T |grad^h f|(x)`.
pub fn verify_gradient_estimate(
    params: &ModelParams,
    x: f64,
    f: &TestFunction,
    config: &SimConfig,
    constant_scale: f64,
    rho_step: f64,
) -> Result<VerificationReport> {
    if !(x >= 0.0) {
        return Err(Error::NegativeInput { name: "x", value: x });
    }
    if !(rho_step > 0.0) {
        return Err(Error::NonPositiveInput {
            name: "rho_step",
            value: rho_step,
        });
    }
    config.validate()?;
    let h = params.h();
    let y = (x.powf(1.0 - h) + (1.0 - h) * rho_step).powf(1.0 / (1.0 - h));
    let rate = params.gradient_rate(config.horizon) * constant_scale;

    // identical seeds mean identical increments: the quotient variance
    // collapses to the pathwise difference
    let term_x = sim::terminal_values(params, x, config)?;
    let term_y = sim::terminal_values(params, y, config)?;
    let quotients: Vec<f64> = term_x
        .iter()
        .zip(&term_y)
        .map(|(&a, &b)| ((f.f)(b) - (f.f)(a)) / rho_step)
        .collect();
    let quot = MCEstimate::from_samples(&quotients);
    let grad = mc_of(&term_x, |v| v.powf(h) * (f.df)(v).abs());

    let lhs = quot.mean.abs();
    let rhs = rate * grad.mean;
    let rhs_se = rate * grad.std_error;
    let id = format!("gradient:f={}:x={x}:T={}", f.id, config.horizon);
    Ok(VerificationReport::monte_carlo(
        id,
        lhs,
        quot.std_error,
        rhs,
        rhs_se,
    ))
}

/// Dirichlet form `E(f, f) = 1/2 int x^{2h} f'(x)^2 dmu`.
pub fn dirichlet_form(ctx: &MeasureContext, f: &TestFunction) -> Result<f64> {
    let df = Arc::clone(&f.df);
    ctx.dirichlet_energy(move |x| df(x), &f.breakpoints)
}

/// Super Poincare check at `(r, beta)`:
/// `mu(f^2) <= r E(f,f) + beta mu(|f|)^2`.
pub fn verify_super_poincare(
    ctx: &MeasureContext,
    f: &TestFunction,
    r: f64,
    beta_value: f64,
) -> Result<VerificationReport> {
    if !(r > 0.0) {
        return Err(Error::NonPositiveInput { name: "r", value: r });
    }
    let f2 = Arc::clone(&f.f);
    let lhs = ctx.expectation(move |x| f2(x) * f2(x), &f.breakpoints)?;
    let fabs = Arc::clone(&f.f);
    let m1 = ctx.expectation(move |x| fabs(x).abs(), &f.breakpoints)?;
    let energy = dirichlet_form(ctx, f)?;
    let rhs = r * energy + beta_value * m1 * m1;
    let abs_tol = 1e-9 * (1.0 + lhs.abs().max(rhs.abs()));
    let id = format!("super-poincare:f={}:r={r}", f.id);
    Ok(VerificationReport::quadrature(id, lhs, rhs, abs_tol))
}

/// Log of the truncated tilted integral
/// `log int_0^R exp(eps rho(0,x)^{2 lambda/(2 lambda - 1)}) dmu`
/// for `lambda` in `(1/2, 1)`; finite for every `R`, divergent as
/// `R -> inf` because the tilt exponent `2 lambda (1-h) / (2 lambda - 1)`
/// beats the tail exponent `2 - 2h`.
pub fn truncated_tilted_log_integral(
    ctx: &MeasureContext,
    lambda: f64,
    eps: f64,
    r: f64,
) -> Result<f64> {
    if !(lambda > 0.5 && lambda < 1.0) {
        return Err(Error::ExponentRange { lambda });
    }
    if !(eps > 0.0) {
        return Err(Error::NonPositiveInput {
            name: "eps",
            value: eps,
        });
    }
    let params = *ctx.params();
    let h = params.h();
    let power = 2.0 * lambda / (2.0 * lambda - 1.0);
    let x_power = (1.0 - h) * power;
    debug_assert!(x_power > 2.0 - 2.0 * h);
    let coef = eps * (1.0 - h).powf(-power);
    let log_g = {
        let ctx = ctx.clone();
        move |x: f64| {
            ctx.log_density(x).unwrap_or(f64::NEG_INFINITY) + coef * x.powf(x_power)
        }
    };
    // below x_lo the density has decayed to nothing; the tilt is harmless
    // there because it vanishes with x
    let a = 2.0 * params.alpha() / (1.0 - 2.0 * h);
    let x_lo = (800.0 / a.abs()).powf(-1.0 / (2.0 * h - 1.0)).min(r / 2.0);
    Ok(quad::log_integral_exp(log_g, x_lo, r, 6000))
}

/// Smallest truncation `R*` (doubling bracket, then log-space bisection)
/// at which the truncated exponential moment reaches `bound`, showing the
/// full integral diverges. For `lambda <= 1/2` the probe instead returns
/// the point where the intrinsic distance itself exceeds `bound`,
/// demonstrating an unbounded essential sup.
pub fn optimality_divergence_probe(
    ctx: &MeasureContext,
    lambda: f64,
    eps: f64,
    bound: f64,
) -> Result<f64> {
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(Error::ExponentRange { lambda });
    }
    if !(eps > 0.0) {
        return Err(Error::NonPositiveInput {
            name: "eps",
            value: eps,
        });
    }
    if !(bound >= 0.0) {
        return Err(Error::NegativeInput {
            name: "bound",
            value: bound,
        });
    }
    if bound == 0.0 {
        return Ok(0.0);
    }
    let h = ctx.params().h();
    if lambda <= 0.5 {
        // rho(0, R*) = bound
        return Ok(((1.0 - h) * bound).powf(1.0 / (1.0 - h)));
    }

    let target = bound.ln();
    let mut r_hi = 1.0f64.max(2.0 * ctx.x0_mode());
    let mut r_lo = 0.0;
    loop {
        let v = truncated_tilted_log_integral(ctx, lambda, eps, r_hi)?;
        if v >= target {
            break;
        }
        r_lo = r_hi;
        r_hi *= 2.0;
        if r_hi > 1e300 {
            return Err(Error::Degenerate(format!(
                "no truncation below 1e300 reached bound {bound:.3e}"
            )));
        }
    }
    if r_lo == 0.0 {
        return Ok(r_hi);
    }
    // bisect in log R
    let mut lo = r_lo.ln();
    let mut hi = r_hi.ln();
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if truncated_tilted_log_integral(ctx, lambda, eps, mid.exp())? >= target {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo < 1e-9 {
            break;
        }
    }
    Ok(hi.exp())
}

/// Fixed run shape for a verification sweep.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SuiteConfig {
    pub n_steps: usize,
    pub n_paths: usize,
    pub seed: u64,
    pub scheme: Scheme,
    /// Multiplies every proven constant; 1 checks the proven bound, 0.5
    /// checks the harness.
    pub constant_scale: f64,
    /// Intrinsic step of the gradient difference quotient.
    pub gradient_step: f64,
}

impl SuiteConfig {
    pub fn sim(&self, horizon: f64) -> SimConfig {
        SimConfig::new(horizon, self.n_steps, self.n_paths, self.seed, self.scheme)
    }
}

/// Run the three Monte Carlo checks over `plans x horizons x functions`,
/// sharing terminal ensembles across functions via common random numbers.
pub fn verify_inequality_suite(
    params: &ModelParams,
    plans: &[TransportPlan],
    horizons: &[f64],
    functions: &[TestFunction],
    cfg: &SuiteConfig,
) -> Result<Vec<VerificationReport>> {
    let mut cache: HashMap<(u64, u64), Arc<Vec<f64>>> = HashMap::new();
    let mut terminals = |start: f64, config: &SimConfig| -> Result<Arc<Vec<f64>>> {
        let key = (start.to_bits(), config.horizon.to_bits());
        if let Some(hit) = cache.get(&key) {
            return Ok(Arc::clone(hit));
        }
        let vals = Arc::new(sim::terminal_values(params, start, config)?);
        cache.insert(key, Arc::clone(&vals));
        Ok(vals)
    };

    let mut reports = Vec::new();
    for &horizon in horizons {
        let config = cfg.sim(horizon);
        for plan in plans {
            let plan_t = TransportPlan::new(plan.x(), plan.y(), horizon, plan.p())?;
            let term_x = terminals(plan_t.x(), &config)?;
            let term_y = terminals(plan_t.y(), &config)?;
            let constant = params.harnack_constant(&plan_t)? * cfg.constant_scale;
            let log_constant = params.log_harnack_constant(&plan_t)? * cfg.constant_scale;
            let p = plan_t.p().ok_or(Error::ExponentViolation { p: f64::NAN })?;

            for f in functions {
                if f.positive {
                    let m_y = mc_of(&term_y, |v| (f.f)(v));
                    let m_xp = mc_of(&term_x, |v| (f.f)(v).powf(p));
                    let lhs = m_y.mean.powf(p);
                    let lhs_se = p * m_y.mean.powf(p - 1.0) * m_y.std_error;
                    reports.push(VerificationReport::monte_carlo(
                        format!(
                            "harnack:f={}:x={}:y={}:T={horizon}:p={p}",
                            f.id,
                            plan_t.x(),
                            plan_t.y()
                        ),
                        lhs,
                        lhs_se,
                        m_xp.mean * constant,
                        m_xp.std_error * constant,
                    ));
                }
                if f.strictly_positive {
                    let m_logf = mc_of(&term_y, |v| (f.f)(v).ln());
                    let m_x = mc_of(&term_x, |v| (f.f)(v));
                    reports.push(VerificationReport::monte_carlo(
                        format!(
                            "log-harnack:f={}:x={}:y={}:T={horizon}",
                            f.id,
                            plan_t.x(),
                            plan_t.y()
                        ),
                        m_logf.mean,
                        m_logf.std_error,
                        m_x.mean.ln() + log_constant,
                        m_x.std_error / m_x.mean,
                    ));
                }
            }

            // gradient checks anchored at the lower starting point
            let x = plan_t.x();
            let h = params.h();
            let y_step =
                (x.powf(1.0 - h) + (1.0 - h) * cfg.gradient_step).powf(1.0 / (1.0 - h));
            let term_shift = terminals(y_step, &config)?;
            let rate = params.gradient_rate(horizon) * cfg.constant_scale;
            for f in functions {
                let quotients: Vec<f64> = term_x
                    .iter()
                    .zip(term_shift.iter())
                    .map(|(&a, &b)| ((f.f)(b) - (f.f)(a)) / cfg.gradient_step)
                    .collect();
                let quot = MCEstimate::from_samples(&quotients);
                let grad = mc_of(&term_x, |v| v.powf(h) * (f.df)(v).abs());
                reports.push(VerificationReport::monte_carlo(
                    format!("gradient:f={}:x={x}:T={horizon}", f.id),
                    quot.mean.abs(),
                    quot.std_error,
                    rate * grad.mean,
                    rate * grad.std_error,
                ));
            }
        }
    }
    Ok(reports)
}

/// `true` when no report is violated.
pub fn all_hold(reports: &[VerificationReport]) -> bool {
    reports.iter().all(|r| r.verdict != Verdict::Violated)
}
