//! Experiment execution and artifact emission.

use crate::config::{Experiment, ExperimentConfig};
use anyhow::{Context, Result};
use gcir::coupling;
use gcir::measure::{MeasureContext, QuadSettings, RateTable};
use gcir::model::ModelParams;
use gcir::sim;
use gcir::verify::{self, SuiteConfig, VerificationReport, Verdict};
use serde_json::json;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

pub struct RunOutcome {
    pub reports: Vec<VerificationReport>,
}

impl RunOutcome {
    pub fn n_violated(&self) -> usize {
        self.reports
            .iter()
            .filter(|r| r.verdict == Verdict::Violated)
            .count()
    }
}

fn write_json(dir: &Path, name: &str, value: &serde_json::Value) -> Result<()> {
    let path = dir.join(name);
    let mut w = BufWriter::new(File::create(&path).with_context(|| format!("create {path:?}"))?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    Ok(())
}

fn write_reports(dir: &Path, name: &str, reports: &[VerificationReport]) -> Result<()> {
    let path = dir.join(name);
    let w = BufWriter::new(File::create(&path).with_context(|| format!("create {path:?}"))?);
    verify::write_reports_csv(reports, w)?;
    Ok(())
}

fn measure_ctx(params: &ModelParams) -> Result<MeasureContext> {
    Ok(MeasureContext::normalize(params, QuadSettings::default())?)
}

/// Run one experiment, appending its verification rows to `out.reports`.
pub fn run_experiment(
    experiment: Experiment,
    cfg: &ExperimentConfig,
    params: &ModelParams,
    dir: &Path,
    out: &mut RunOutcome,
) -> Result<()> {
    match experiment {
        Experiment::Simulate => simulate(cfg, params, dir, out),
        Experiment::Coupling => coupling_experiment(cfg, params, dir, out),
        Experiment::Harnack | Experiment::LogHarnack | Experiment::Gradient => {
            harnack_suite(experiment, cfg, params, dir, out)
        }
        Experiment::Measure => measure_experiment(cfg, params, dir, out),
        Experiment::Isoperimetric => isoperimetric(cfg, params, dir, out),
        Experiment::SuperPoincare => super_poincare(cfg, params, dir, out),
        Experiment::Optimality => optimality(cfg, params, dir, out),
        Experiment::All => {
            for e in [
                Experiment::Simulate,
                Experiment::Coupling,
                Experiment::Harnack,
                Experiment::Measure,
                Experiment::Isoperimetric,
                Experiment::SuperPoincare,
                Experiment::Optimality,
            ] {
                run_experiment(e, cfg, params, dir, out)?;
            }
            Ok(())
        }
    }
}

fn simulate(
    cfg: &ExperimentConfig,
    params: &ModelParams,
    dir: &Path,
    out: &mut RunOutcome,
) -> Result<()> {
    let config = cfg.sim_config(cfg.sim.horizon);
    let ensemble = sim::simulate_ensemble(params, cfg.x0, &config)?;
    let terminal = sim::MCEstimate::from_samples(&ensemble.terminal_values());
    // affine drift: the exact mean solves the linear ODE
    let mean_exact = params.alpha() / params.delta()
        + (cfg.x0 - params.alpha() / params.delta()) * (-params.delta() * config.horizon).exp();
    out.reports.push(VerificationReport::monte_carlo(
        format!("simulate:mean-vs-ode:x0={}", cfg.x0),
        (terminal.mean - mean_exact).abs(),
        terminal.std_error,
        terminal.margin(4.0) + 0.5 / config.n_steps as f64,
        0.0,
    ));
    out.reports.push(VerificationReport::quadrature(
        "simulate:positivity".into(),
        0.0,
        ensemble.min_value(),
        0.0,
    ));

    let occupation: Vec<serde_json::Value> = [1e-1, 1e-2, 1e-3, 1e-4]
        .iter()
        .map(|&eps| {
            let occ = sim::occupation_time_below(&ensemble, eps);
            json!({"eps": eps, "mean": occ.mean, "std_error": occ.std_error})
        })
        .collect();
    write_json(
        dir,
        "simulate_summary.json",
        &json!({
            "x0": cfg.x0,
            "terminal_mean": terminal.mean,
            "terminal_std_error": terminal.std_error,
            "terminal_mean_ode": mean_exact,
            "min_value": ensemble.min_value(),
            "occupation_time_below": occupation,
        }),
    )?;
    if cfg.output.write_paths {
        let path = dir.join("paths.csv");
        let w = BufWriter::new(File::create(&path)?);
        ensemble.write_csv(w, Some(cfg.output.max_dump_paths))?;
    }
    Ok(())
}

fn coupling_experiment(
    cfg: &ExperimentConfig,
    params: &ModelParams,
    dir: &Path,
    out: &mut RunOutcome,
) -> Result<()> {
    let plan = cfg.coupling_plan()?;
    let config = cfg.sim_config(plan.horizon());
    let ensemble = coupling::simulate_coupled_ensemble(params, &plan, &config)?;

    let frac = ensemble.fraction_coupled();
    out.reports.push(VerificationReport::quadrature(
        format!("coupling:fraction:x={}:y={}", plan.x(), plan.y()),
        0.95,
        frac,
        0.0,
    ));
    let weight = ensemble.weight_estimate();
    out.reports.push(VerificationReport::monte_carlo(
        "coupling:martingale-mean".into(),
        (weight.mean - 1.0).abs(),
        weight.std_error,
        weight.margin(4.0),
        0.0,
    ));
    let mut moments = Vec::new();
    for p in [2.0, 4.0] {
        let q = p / (p - 1.0);
        let est = ensemble.weight_moment(q);
        let bound = coupling::girsanov_moment_bound(params, &plan, q)?;
        out.reports.push(VerificationReport::monte_carlo(
            format!("coupling:moment:q={q:.4}"),
            est.mean,
            est.std_error,
            bound,
            0.0,
        ));
        moments.push(json!({
            "q": q, "estimate": est.mean, "std_error": est.std_error, "bound": bound,
        }));
    }
    let contraction = coupling::contraction_statistics(params, &plan, &config, 0.02)?;
    out.reports.push(VerificationReport::quadrature(
        "coupling:contraction-fraction".into(),
        0.99,
        contraction.fraction_contracting,
        0.0,
    ));

    let path = dir.join("coupling.csv");
    ensemble.write_csv(BufWriter::new(File::create(&path)?))?;
    write_json(
        dir,
        "coupling_summary.json",
        &json!({
            "plan": {"x": plan.x(), "y": plan.y(), "horizon": plan.horizon()},
            "fraction_coupled": frac,
            "fraction_ordering_ok": ensemble.fraction_ordering_ok(),
            "weight_mean": weight.mean,
            "weight_std_error": weight.std_error,
            "moments": moments,
            "contraction": {
                "fraction": contraction.fraction_contracting,
                "worst_ratio": contraction.worst_ratio,
                "threshold": contraction.threshold,
            },
        }),
    )?;
    Ok(())
}

fn harnack_suite(
    which: Experiment,
    cfg: &ExperimentConfig,
    params: &ModelParams,
    dir: &Path,
    out: &mut RunOutcome,
) -> Result<()> {
    let plans = cfg.verification_plans()?;
    let horizons = cfg.verification_horizons();
    let mut functions = verify::bounded_positive_family(params);
    if let Some(ids) = &cfg.functions {
        functions.retain(|f| ids.iter().any(|id| id == &f.id));
    }
    let suite = SuiteConfig {
        n_steps: cfg.sim.n_steps,
        n_paths: cfg.sim.n_paths,
        seed: cfg.sim.seed,
        scheme: cfg.sim.scheme,
        constant_scale: cfg.scale_constant,
        gradient_step: 1e-2,
    };
    let mut reports = verify::verify_inequality_suite(params, &plans, &horizons, &functions, &suite)?;
    let keep = |id: &str| match which {
        Experiment::Harnack => id.starts_with("harnack:"),
        Experiment::LogHarnack => id.starts_with("log-harnack:"),
        Experiment::Gradient => id.starts_with("gradient:"),
        _ => true,
    };
    reports.retain(|r| keep(&r.check_id));
    write_reports(dir, &format!("{}_reports.csv", which.name()), &reports)?;
    write_json(
        dir,
        &format!("{}_reports.json", which.name()),
        &serde_json::to_value(&reports)?,
    )?;
    out.reports.extend(reports);
    Ok(())
}

fn measure_experiment(
    _cfg: &ExperimentConfig,
    params: &ModelParams,
    dir: &Path,
    out: &mut RunOutcome,
) -> Result<()> {
    let ctx = measure_ctx(params)?;
    let total = ctx.expectation(|_| 1.0, &[])?;
    let z_alt = ctx.z_alternative()?;
    let mut worst_flux: f64 = 0.0;
    for i in 0..50 {
        let x = 10f64.powf(-2.0 + 4.0 * i as f64 / 49.0);
        let eta = ctx.density(x);
        if eta > 0.0 {
            worst_flux = worst_flux.max((ctx.stationarity_flux(x)? / eta).abs());
        }
    }
    out.reports.push(VerificationReport::quadrature(
        "measure:unit-mass".into(),
        (total - 1.0).abs(),
        1e-8,
        0.0,
    ));
    out.reports.push(VerificationReport::quadrature(
        "measure:dual-route-z".into(),
        ((z_alt - ctx.z()) / ctx.z()).abs(),
        1e-8,
        0.0,
    ));
    out.reports.push(VerificationReport::quadrature(
        "measure:stationarity".into(),
        worst_flux,
        1e-8,
        0.0,
    ));
    write_json(
        dir,
        "measure_summary.json",
        &json!({
            "gamma0": ctx.gamma0(),
            "z": ctx.z(),
            "z_alternative": z_alt,
            "x0_mode": ctx.x0_mode(),
            "regime_bound": ctx.regime_bound(),
            "head_mass_at_mode": ctx.head_mass(ctx.x0_mode())?,
            "tail_mass_at_mode": ctx.tail_mass(ctx.x0_mode())?,
            "total_mass": total,
            "worst_relative_flux": worst_flux,
        }),
    )?;
    Ok(())
}

fn isoperimetric(
    cfg: &ExperimentConfig,
    params: &ModelParams,
    dir: &Path,
    out: &mut RunOutcome,
) -> Result<()> {
    let ctx = measure_ctx(params)?;
    let table = RateTable::build(&ctx, &cfg.r_grid)?;
    let path = dir.join("rate_table.csv");
    table.write_csv(BufWriter::new(File::create(&path)?))?;
    // monotonicity of the finite k column along the sorted grid
    let ks: Vec<(f64, f64)> = table
        .rows()
        .iter()
        .filter(|r| r.k.is_finite())
        .map(|r| (r.r, r.k))
        .collect();
    let monotone = ks.windows(2).all(|w| w[0].1 >= w[1].1);
    out.reports.push(VerificationReport::quadrature(
        "isoperimetric:k-monotone".into(),
        if monotone { 0.0 } else { 1.0 },
        0.0,
        0.0,
    ));
    write_json(
        dir,
        "isoperimetric.json",
        &json!({
            "fitted_exponential_constant": table.fitted_c(),
            "rows": table.rows().len(),
            "k_monotone": monotone,
        }),
    )?;
    Ok(())
}

fn super_poincare(
    cfg: &ExperimentConfig,
    params: &ModelParams,
    dir: &Path,
    out: &mut RunOutcome,
) -> Result<()> {
    let ctx = measure_ctx(params)?;
    let mut functions = verify::energy_family(params);
    if let Some(ids) = &cfg.functions {
        functions.retain(|f| ids.iter().any(|id| id == &f.id));
    }
    let mut reports = Vec::new();
    for &r in &cfg.sp_r_values {
        let beta = ctx.beta_isoperimetric(r)? * cfg.scale_constant;
        for f in &functions {
            reports.push(verify::verify_super_poincare(&ctx, f, r, beta)?);
        }
    }
    for f in &verify::clipped_distance_family(params, &[1.0, 2.0, 3.0]) {
        let e = verify::dirichlet_form(&ctx, f)?;
        reports.push(VerificationReport::quadrature(
            format!("dirichlet:clipped:{}", f.id),
            e,
            0.5 + 1e-6,
            0.0,
        ));
    }
    write_reports(dir, "super_poincare_reports.csv", &reports)?;
    out.reports.extend(reports);
    Ok(())
}

fn optimality(
    cfg: &ExperimentConfig,
    params: &ModelParams,
    dir: &Path,
    out: &mut RunOutcome,
) -> Result<()> {
    let ctx = measure_ctx(params)?;
    let mut rows = Vec::new();
    for &lambda in &cfg.optimality.lambdas {
        let eps = cfg.optimality.eps;
        let bound = cfg.optimality.bound;
        let r_star = verify::optimality_divergence_probe(&ctx, lambda, eps, bound)?;
        if lambda > 0.5 {
            let at = verify::truncated_tilted_log_integral(&ctx, lambda, eps, r_star)?;
            let doubled = verify::truncated_tilted_log_integral(&ctx, lambda, eps, 2.0 * r_star)?;
            out.reports.push(VerificationReport::quadrature(
                format!("optimality:bound-reached:lambda={lambda}"),
                bound.ln(),
                at + 1e-6,
                0.0,
            ));
            out.reports.push(VerificationReport::quadrature(
                format!("optimality:doubling-growth:lambda={lambda}"),
                4f64.ln(),
                doubled - at,
                0.0,
            ));
            rows.push(json!({
                "lambda": lambda, "eps": eps, "bound": bound, "r_star": r_star,
                "log_truncated_moment": at, "log_growth_on_doubling": doubled - at,
            }));
        } else {
            rows.push(json!({
                "lambda": lambda, "eps": eps, "bound": bound, "r_star": r_star,
                "kind": "unbounded-intrinsic-distance",
            }));
        }
    }
    write_json(dir, "optimality.json", &json!({ "probes": rows }))?;
    Ok(())
}
