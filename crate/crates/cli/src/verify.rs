use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use wentzell_core::ellipticity::{basics_check, conjugate_exponent};
use wentzell_core::bellman::{delta_sweep, ConvexityOptions, HessianMode};
use wentzell_core::flows::{bilinear_bound_check, bilinear_constant, holder_interpolation_check, weak_quadratic_check};
use wentzell_core::hybrid::{hybrid_norm, project_lq_ball, HybridFunction};
use wentzell_core::operator::{contractivity_suite, nittka_form_test, transference_check};
use wentzell_core::Error;

use crate::commands::{
    contractivity_exponents, contractivity_options, flow_options, is_p_elliptic, module, operators, random_data, seeds,
    Context, BELLMAN_NU,
};
use crate::error::CliError;

pub const SKIPPED_NOT_P_ELLIPTIC: &str = "skipped: not p-elliptic";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyRow {
    pub suite: String,
    pub case: String,
    /// Distance to the failure threshold; negative means failure.
    pub margin: f64,
    pub pass: bool,
    /// `asserted`, `report` or a `skipped: ...` reason.
    pub status: String,
}

#[derive(Debug, Default)]
pub struct Rows {
    pub rows: Vec<VerifyRow>,
    pub warnings: Vec<String>,
}

impl Rows {
    fn assert(&mut self, suite: &str, case: String, margin: f64) {
        self.rows.push(VerifyRow { suite: suite.into(), case, margin, pass: margin >= 0.0, status: "asserted".into() });
    }

    fn report(&mut self, suite: &str, case: String, margin: f64) {
        self.rows.push(VerifyRow { suite: suite.into(), case, margin, pass: true, status: "report".into() });
    }

    fn skip(&mut self, suite: &str, case: String, reason: &str) {
        self.rows.push(VerifyRow { suite: suite.into(), case, margin: f64::NAN, pass: true, status: reason.into() });
    }

    pub fn all_pass(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }
}

/// Runs the selected suites; module errors abort with the suite name attached.
pub fn run(ctx: &Context) -> Result<Rows, CliError> {
    let cfg = &ctx.cfg;
    let (mesh, op_a, op_b) = operators(ctx)?;
    let (a, b) = (op_a.field().clone(), op_b.field().clone());
    let tol = &cfg.tolerances;
    let mut rows = Rows::default();

    if cfg.suites.basics {
        let report = basics_check(&a, &cfg.p).map_err(module("basics"))?;
        for item in &report.items {
            rows.rows.push(VerifyRow {
                suite: "basics".into(),
                case: item.name.clone(),
                margin: item.margin,
                pass: item.holds,
                status: "asserted".into(),
            });
        }
    }

    if cfg.suites.convexity {
        let opts = ConvexityOptions {
            n_samples: cfg.samples.convexity,
            seed: ctx.seed(seeds::CONVEXITY),
            mode: HessianMode::Pointwise,
            ..Default::default()
        };
        for &p in &cfg.p {
            let case = format!("p={p}");
            if !(is_p_elliptic(&a, p)? && is_p_elliptic(&b, p)?) {
                rows.skip("convexity", case, SKIPPED_NOT_P_ELLIPTIC);
                continue;
            }
            let sweep = delta_sweep(&a, &b, p, BELLMAN_NU, &opts).map_err(module("convexity"))?;
            let best = sweep.rows.iter().map(|r| r.min_margin).fold(f64::NEG_INFINITY, f64::max);
            let case = format!("{case} delta={}", sweep.chosen.map_or("none".into(), |d| d.to_string()));
            rows.assert("convexity", case, best);
        }
    }

    if cfg.suites.contractivity {
        let data = random_data(&mesh, cfg.samples.data, ctx.seed(seeds::DATA));
        let report = contractivity_suite(&op_a, &contractivity_exponents(cfg), &data, &contractivity_options(cfg))
            .map_err(module("contractivity"))?;
        if !report.acute {
            rows.warnings.push("mesh is not acute: contractivity rows downgraded to reports".into());
        }
        for r in &report.rows {
            let case = format!("{} theta={:.4} p={} datum={}", r.family, r.theta, r.p, r.datum);
            let margin = tol.contractivity_slack - r.max_relative_increase;
            if r.asserted {
                rows.assert("contractivity", case, margin);
            } else if !report.acute {
                rows.report("contractivity", case, margin);
            } else {
                rows.skip("contractivity", case, SKIPPED_NOT_P_ELLIPTIC);
            }
        }
        for d in &report.duality {
            let case = format!("duality p={} datum={}", d.p, d.datum);
            if report.acute {
                rows.rows.push(VerifyRow {
                    suite: "contractivity".into(),
                    case,
                    margin: if d.consistent { 0.0 } else { -1.0 },
                    pass: d.consistent,
                    status: "asserted".into(),
                });
            } else {
                rows.report("contractivity", case, if d.consistent { 0.0 } else { -1.0 });
            }
        }
    }

    if cfg.suites.nittka {
        let data = random_data(&mesh, cfg.samples.nittka, ctx.seed(seeds::NITTKA));
        for &p in &cfg.p {
            let q = p.max(conjugate_exponent(p));
            let case = format!("q={q}");
            if !is_p_elliptic(&a, p)? {
                rows.skip("nittka", case, SKIPPED_NOT_P_ELLIPTIC);
                continue;
            }
            let mut worst = f64::INFINITY;
            for u in &data {
                worst = worst.min(nittka_form_test(&op_a, u, q, 4).map_err(module("nittka"))?);
            }
            rows.assert("nittka", case, worst + tol.nittka);
        }
    }

    if cfg.suites.transference {
        let f = &random_data(&mesh, 1, ctx.seed(seeds::DATA))[0];
        match transference_check(&op_a, f) {
            Err(Error::NoDirichlet) => rows.skip("transference", "inverse".into(), "skipped: no Dirichlet part"),
            Err(e) => return Err(CliError::module("transference", e)),
            Ok(r) => {
                rows.assert("transference", "inverse".into(), tol.transference - r.residual_inverse);
                if mesh.total_sigma_measure() > 0.0 {
                    rows.assert("transference", "resolvent identity fails".into(), r.resolvent_gap - tol.resolvent_gap);
                } else {
                    rows.assert("transference", "resolvent identity holds".into(), tol.transference - r.resolvent_gap);
                }
            }
        }
    }

    if cfg.suites.flows || cfg.suites.quadratic {
        let opts = flow_options(cfg);
        let data = random_data(&mesh, 2 * cfg.samples.flow_pairs.max(1), ctx.seed(seeds::FLOWS));
        for &p in &cfg.p {
            if let Err(Error::NotPElliptic { .. }) = bilinear_constant(&op_a, &op_b, p) {
                rows.skip("flows", format!("p={p}"), SKIPPED_NOT_P_ELLIPTIC);
                continue;
            }
            if cfg.suites.flows {
                for (k, fg) in data.chunks(2).take(cfg.samples.flow_pairs).enumerate() {
                    let r = bilinear_bound_check(&op_a, &op_b, &fg[0], &fg[1], p, &opts).map_err(module("flows"))?;
                    rows.assert("flows", format!("bilinear p={p} pair={k}"), 1.0 - r.ratio.unwrap_or(f64::INFINITY));
                }
            }
            if cfg.suites.quadratic {
                let r = weak_quadratic_check(&op_a, &data[0], &data[1], p, 3, tol.theta_margin, &opts)
                    .map_err(module("quadratic"))?;
                for row in &r.rows {
                    rows.assert("quadratic", format!("p={p} theta={:.4}", row.theta), row.bound - row.value);
                }
            }
        }
    }

    if cfg.suites.hinfty {
        for &p in &cfg.p {
            if !is_p_elliptic(&a, p)? {
                rows.skip("hinfty", format!("p={p}"), SKIPPED_NOT_P_ELLIPTIC);
                continue;
            }
            let nu = crate::commands::contour_angle(cfg, &a, p)?;
            let r = wentzell_core::flows::hinfty_bound_check(
                &op_a,
                p,
                &cfg.samples.hinfty_family,
                nu,
                &Default::default(),
                ctx.seed(seeds::HINFTY),
            )
            .map_err(module("hinfty"))?;
            for row in &r.rows {
                rows.report("hinfty", format!("p={p} s={} nu={:.4}", row.s, row.nu), row.ratio);
            }
        }
    }

    if cfg.suites.holder {
        let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed(seeds::HOLDER));
        for k in 0..cfg.samples.projection {
            let points: Vec<[f64; 2]> = (0..100).map(|_| [rng.random(), rng.random()]).collect();
            let values: Vec<f64> = (0..100).map(|_| rng.random_range(-1.0..1.0)).collect();
            let (mu, theta) = (rng.random_range(0.05..1.0), rng.random_range(0.0..1.0));
            let r = holder_interpolation_check(&points, &values, mu, theta).map_err(module("holder"))?;
            rows.assert("holder", format!("case={k} mu={mu:.3} theta={theta:.3}"), r.rhs - r.lhs);
        }
    }

    if cfg.suites.projection {
        let data = random_data(&mesh, 2 * cfg.samples.projection, ctx.seed(seeds::PROJECTION));
        let mut qs: Vec<f64> = cfg.p.iter().map(|&p| p.max(conjugate_exponent(p))).collect();
        qs.push(f64::INFINITY);
        qs.dedup();
        for q in qs {
            let (mut unit, mut idem, mut expand) = (f64::INFINITY, f64::INFINITY, f64::INFINITY);
            for pair in data.chunks(2) {
                let project = |u: &HybridFunction| project_lq_ball(&mesh, u, q).map(|r| r.0).map_err(module("projection"));
                // nonexpansive and idempotent in the hybrid L^2 norm
                let dist = |x: &HybridFunction, y: &HybridFunction| {
                    let d = HybridFunction { values: x.values.iter().zip(&y.values).map(|(a, b)| a - b).collect() };
                    hybrid_norm(&mesh, &d, 2.0).map_err(module("projection"))
                };
                let big = pair[0].map(|z| z * 5.0);
                let (pu, pv) = (project(&big)?, project(&pair[1])?);
                let norm = hybrid_norm(&mesh, &pu, q).map_err(module("projection"))?;
                unit = unit.min(tol.projection - (norm - 1.0).abs());
                idem = idem.min(tol.projection - dist(&project(&pu)?, &pu)?);
                expand = expand.min(dist(&big, &pair[1])? - dist(&pu, &pv)?);
            }
            rows.assert("projection", format!("unit norm q={q}"), unit);
            rows.assert("projection", format!("idempotent q={q}"), idem);
            rows.assert("projection", format!("nonexpansive q={q}"), expand);
        }
    }

    Ok(rows)
}
