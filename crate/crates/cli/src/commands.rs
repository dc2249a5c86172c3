use std::f64::consts::FRAC_PI_2;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use wentzell_core::bellman::{delta_sweep, ConvexityOptions, HessianMode};
use wentzell_core::ellipticity::{delta_p, theta_p, EllipticityReport, PREDICATE_EPS};
use wentzell_core::flows::{
    bilinear_bound_check, bilinear_constant, hinfty_bound_check, weak_quadratic_check, ContourOptions, FlowOptions,
};
use wentzell_core::hybrid::{koch_prefractal, measure_density_check, upper_ell_check, HybridFunction, HybridMesh};
use wentzell_core::operator::{assemble, contractivity_suite, write_norm_csv, ContractivityOptions, DiscreteOperator};
use wentzell_core::{CoefficientField, Error};

use crate::config::RunConfig;
use crate::error::CliError;
use crate::output::OutDir;

/// Mollifier radius of the Bellman sweep; pointwise Hessians only use it for clearance.
pub const BELLMAN_NU: f64 = 0.01;

/// Offsets of the per-suite seeds from the run seed.
pub mod seeds {
    pub const DATA: u64 = 0;
    pub const CONVEXITY: u64 = 1;
    pub const NITTKA: u64 = 2;
    pub const FLOWS: u64 = 3;
    pub const HINFTY: u64 = 4;
    pub const GEOMETRY: u64 = 5;
    pub const PROJECTION: u64 = 6;
    pub const HOLDER: u64 = 7;
}

pub struct Context {
    pub cfg: RunConfig,
    pub out: OutDir,
}

impl Context {
    pub fn seed(&self, offset: u64) -> u64 {
        self.cfg.seed.wrapping_add(offset)
    }
}

pub(crate) fn module(suite: &'static str) -> impl Fn(Error) -> CliError {
    move |e| CliError::module(suite, e)
}

/// File-name tag of an exponent: `4`, `2.5`, `inf`.
pub fn p_tag(p: f64) -> String {
    if p.is_infinite() {
        "inf".into()
    } else {
        p.to_string()
    }
}

/// Seeded nodal data with real and imaginary parts uniform in `[-1, 1]`.
pub fn random_data(mesh: &HybridMesh, n: usize, seed: u64) -> Vec<HybridFunction> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| HybridFunction {
            values: (0..mesh.n_dofs())
                .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
                .collect(),
        })
        .collect()
}

pub fn is_p_elliptic(field: &CoefficientField, p: f64) -> Result<bool, CliError> {
    Ok(delta_p(field, p).map_err(module("ellipticity"))? > PREDICATE_EPS)
}

pub(crate) fn operators(ctx: &Context) -> Result<(HybridMesh, DiscreteOperator, DiscreteOperator), CliError> {
    let mesh = ctx.cfg.mesh()?;
    let op_a = assemble(&mesh, &ctx.cfg.field_a()?).map_err(module("assembly"))?;
    let op_b = op_a.with_field(&ctx.cfg.field_b()?).map_err(module("assembly"))?;
    Ok((mesh, op_a, op_b))
}

pub(crate) fn contractivity_options(cfg: &RunConfig) -> ContractivityOptions {
    ContractivityOptions {
        dt: cfg.time.dt,
        n_steps: cfg.time.n_steps,
        slack: cfg.tolerances.contractivity_slack,
        theta_margin: cfg.tolerances.theta_margin,
        theta_tol: cfg.tolerances.theta,
        ..Default::default()
    }
}

pub(crate) fn flow_options(cfg: &RunConfig) -> FlowOptions {
    FlowOptions {
        rho: cfg.time.rho,
        span: cfg.time.span,
        delta: cfg.overrides.delta.unwrap_or(FlowOptions::default().delta),
        ..Default::default()
    }
}

/// Contour angle: the override, else halfway between `pi/2 - theta_p` and `pi/2`.
pub(crate) fn contour_angle(cfg: &RunConfig, field: &CoefficientField, p: f64) -> Result<f64, CliError> {
    match cfg.overrides.nu {
        Some(nu) => Ok(nu),
        None => Ok(FRAC_PI_2 - 0.5 * theta_p(field, p, cfg.tolerances.theta).map_err(module("hinfty"))?),
    }
}

pub fn constants(ctx: &Context) -> Result<(), CliError> {
    let field = ctx.cfg.field_a()?;
    let report = EllipticityReport::compute(&field, &ctx.cfg.p, ctx.cfg.tolerances.theta).map_err(module("constants"))?;
    ctx.out.write_json("constants.json", &report)?;
    ctx.out.write_with("constants.csv", |w| report.write_csv(w))?;
    Ok(())
}

#[derive(Serialize)]
struct AngleRow {
    p: f64,
    delta_p: f64,
    theta_p: Option<f64>,
    closed_form_bound: Option<f64>,
    real_coefficient_bound: Option<f64>,
    symmetric_imaginary_bound: Option<f64>,
    omega: f64,
}

pub fn angle(ctx: &Context) -> Result<(), CliError> {
    let field = ctx.cfg.field_a()?;
    let report = EllipticityReport::compute(&field, &ctx.cfg.p, ctx.cfg.tolerances.theta).map_err(module("angle"))?;
    let rows: Vec<AngleRow> = report
        .rows
        .iter()
        .map(|r| AngleRow {
            p: r.p,
            delta_p: r.delta_p,
            theta_p: r.theta_p,
            closed_form_bound: r.bounds.as_ref().map(|b| b.smallness_bound),
            real_coefficient_bound: r.bounds.as_ref().and_then(|b| b.real_coefficient_bound),
            symmetric_imaginary_bound: r.bounds.as_ref().and_then(|b| b.symmetric_imaginary_bound),
            omega: report.omega,
        })
        .collect();
    ctx.out.write_csv("angle.csv", &rows)?;
    Ok(())
}

#[derive(Serialize)]
struct BellmanSummary {
    p: f64,
    status: String,
    chosen_delta: Option<f64>,
}

pub fn bellman(ctx: &Context) -> Result<(), CliError> {
    let (a, b) = (ctx.cfg.field_a()?, ctx.cfg.field_b()?);
    let opts = ConvexityOptions {
        n_samples: ctx.cfg.samples.convexity,
        seed: ctx.seed(seeds::CONVEXITY),
        mode: HessianMode::Pointwise,
        ..Default::default()
    };
    let mut summary = Vec::new();
    for &p in &ctx.cfg.p {
        if !(is_p_elliptic(&a, p)? && is_p_elliptic(&b, p)?) {
            summary.push(BellmanSummary { p, status: "skipped: not p-elliptic".into(), chosen_delta: None });
            continue;
        }
        let sweep = delta_sweep(&a, &b, p, BELLMAN_NU, &opts).map_err(module("bellman"))?;
        ctx.out.write_with(&format!("bellman_p{}.csv", p_tag(p)), |w| sweep.write_csv(w))?;
        summary.push(BellmanSummary { p, status: "ok".into(), chosen_delta: sweep.chosen });
    }
    ctx.out.write_csv("bellman.csv", &summary)?;
    Ok(())
}

pub(crate) fn contractivity_exponents(cfg: &RunConfig) -> Vec<f64> {
    let mut ps = cfg.p.clone();
    if cfg.suites.contractivity_infinity {
        ps.push(f64::INFINITY);
    }
    ps
}

pub fn simulate(ctx: &Context) -> Result<(), CliError> {
    let (mesh, op, _) = operators(ctx)?;
    let data = random_data(&mesh, ctx.cfg.samples.data, ctx.seed(seeds::DATA));
    let ps = contractivity_exponents(&ctx.cfg);
    let report = contractivity_suite(&op, &ps, &data, &contractivity_options(&ctx.cfg)).map_err(module("simulate"))?;
    if !report.acute {
        eprintln!("warning: mesh is not acute; contractivity is reported, not asserted");
    }
    ctx.out.write_with("simulate_norms.csv", |w| write_norm_csv(&report, w))?;
    ctx.out.write_json("simulate.json", &report)?;
    Ok(())
}

#[derive(Serialize)]
struct FlowSummary {
    p: f64,
    pair: usize,
    status: String,
    bilinear_value: Option<f64>,
    bound_constant: Option<f64>,
    ratio: Option<f64>,
    energy_max_increase: Option<f64>,
}

pub fn flows(ctx: &Context) -> Result<(), CliError> {
    let (mesh, op_a, op_b) = operators(ctx)?;
    let opts = flow_options(&ctx.cfg);
    let mut summary = Vec::new();
    for &p in &ctx.cfg.p {
        if let Err(Error::NotPElliptic { .. }) = bilinear_constant(&op_a, &op_b, p) {
            summary.push(FlowSummary {
                p,
                pair: 0,
                status: "skipped: not p-elliptic".into(),
                bilinear_value: None,
                bound_constant: None,
                ratio: None,
                energy_max_increase: None,
            });
            continue;
        }
        let data = random_data(&mesh, 2 * ctx.cfg.samples.flow_pairs, ctx.seed(seeds::FLOWS));
        for (k, fg) in data.chunks(2).enumerate() {
            let r = bilinear_bound_check(&op_a, &op_b, &fg[0], &fg[1], p, &opts).map_err(module("flows"))?;
            ctx.out.write_with(&format!("flow_p{}_pair{k}.csv", p_tag(p)), |w| r.write_csv(w))?;
            summary.push(FlowSummary {
                p,
                pair: k,
                status: "ok".into(),
                bilinear_value: Some(r.bilinear_value),
                bound_constant: r.bound_constant,
                ratio: r.ratio,
                energy_max_increase: Some(r.energy_max_increase),
            });
        }
        if ctx.cfg.suites.quadratic {
            let r = weak_quadratic_check(&op_a, &data[0], &data[1], p, 3, ctx.cfg.tolerances.theta_margin, &opts)
                .map_err(module("quadratic"))?;
            ctx.out.write_csv(&format!("quadratic_p{}.csv", p_tag(p)), &r.rows)?;
        }
        if ctx.cfg.suites.hinfty {
            let nu = contour_angle(&ctx.cfg, op_a.field(), p)?;
            let r = hinfty_bound_check(
                &op_a,
                p,
                &ctx.cfg.samples.hinfty_family,
                nu,
                &ContourOptions::default(),
                ctx.seed(seeds::HINFTY),
            )
            .map_err(module("hinfty"))?;
            ctx.out.write_with(&format!("hinfty_p{}.csv", p_tag(p)), |w| r.write_csv(w))?;
        }
    }
    ctx.out.write_csv("flows.csv", &summary)?;
    Ok(())
}

#[derive(Serialize)]
struct KochRow {
    level: usize,
    segments: usize,
    total_mass: f64,
    mass_error: f64,
    c_estimate: f64,
}

#[derive(Serialize)]
struct DensityRow {
    x: f64,
    y: f64,
    r: f64,
    ratio: f64,
    std_error: f64,
}

#[derive(Serialize)]
struct GeometrySummary {
    c_min: f64,
    koch_levels: Vec<usize>,
}

pub fn geometry(ctx: &Context) -> Result<(), CliError> {
    let g = &ctx.cfg.geometry;
    let koch = g
        .koch_levels
        .iter()
        .map(|&level| {
            let k = koch_prefractal(level, g.koch_base_length).map_err(module("geometry"))?;
            let expected = g.koch_base_length.powf(k.ell);
            Ok(KochRow {
                level,
                segments: k.segments().len(),
                total_mass: k.total_mass(),
                mass_error: (k.total_mass() - expected).abs(),
                c_estimate: upper_ell_check(&k, g.koch_balls, ctx.seed(seeds::GEOMETRY)),
            })
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    ctx.out.write_csv("koch.csv", &koch)?;
    let mesh = ctx.cfg.mesh()?;
    let density = measure_density_check(&mesh, g.density_samples, ctx.seed(seeds::GEOMETRY));
    let rows: Vec<DensityRow> = density
        .samples
        .iter()
        .map(|s| DensityRow { x: s.x[0], y: s.x[1], r: s.r, ratio: s.ratio, std_error: s.std_error })
        .collect();
    ctx.out.write_csv("density.csv", &rows)?;
    ctx.out.write_json("geometry.json", &GeometrySummary { c_min: density.c_min, koch_levels: g.koch_levels.clone() })?;
    Ok(())
}
