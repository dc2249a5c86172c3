use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::semigroup::ImplicitEulerStepper;
use super::DiscreteOperator;
use crate::coefficients::CoefficientField;
use crate::ellipticity::{conjugate_exponent, delta_p, lambda_lower, theta_p, PREDICATE_EPS};
use crate::error::Result;
use crate::hybrid::{hybrid_norm, HybridFunction};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractivityOptions {
    pub dt: f64,
    pub n_steps: usize,
    /// Allowed relative growth of the norm per step.
    pub slack: f64,
    /// Rotations stay within `theta_p - theta_margin`.
    pub theta_margin: f64,
    /// Rotation angles per sign.
    pub n_theta: usize,
    pub theta_tol: f64,
}

impl Default for ContractivityOptions {
    fn default() -> Self {
        Self { dt: 1e-3, n_steps: 100, slack: 1e-8, theta_margin: 0.05, n_theta: 3, theta_tol: 1e-6 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractivityRow {
    /// `"base"`, `"rotated"` or `"adjoint"`.
    pub family: String,
    pub theta: f64,
    pub p: f64,
    pub datum: usize,
    /// `Delta_p` of the evolved field; `None` for `p = inf`.
    pub delta_p: Option<f64>,
    /// Whether nonincrease is claimed (p-elliptic field on an acute mesh).
    pub asserted: bool,
    /// Largest `(|u_{k+1}| - |u_k|) / |u_k|` along the trajectory.
    pub max_relative_increase: f64,
    pub pass: bool,
    pub norms: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualityRow {
    pub p: f64,
    pub datum: usize,
    pub primal_contractive: bool,
    pub adjoint_contractive: bool,
    pub consistent: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractivityReport {
    pub dt: f64,
    pub acute: bool,
    pub rows: Vec<ContractivityRow>,
    pub duality: Vec<DualityRow>,
}

impl ContractivityReport {
    /// Every asserted row and every duality row holds.
    pub fn all_pass(&self) -> bool {
        self.rows.iter().all(|r| r.pass) && self.duality.iter().all(|d| d.consistent)
    }
}

struct Job {
    family: &'static str,
    theta: f64,
    field: CoefficientField,
    ps: Vec<f64>,
}

fn admissible(field: &CoefficientField, p: f64) -> (Option<f64>, bool) {
    if p.is_infinite() {
        return (None, field.is_real() && lambda_lower(field) > PREDICATE_EPS);
    }
    match delta_p(field, p) {
        Ok(d) => (Some(d), d > PREDICATE_EPS),
        Err(_) => (None, false),
    }
}

fn max_increase(norms: &[f64]) -> f64 {
    norms
        .windows(2)
        .map(|w| if w[0] > 0.0 { (w[1] - w[0]) / w[0] } else if w[1] > 0.0 { f64::INFINITY } else { 0.0 })
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Implicit Euler trajectories with `f = 0`, checked for nonincrease in the hybrid `L^p` norm.
///
/// Covers the field itself for every `p`, rotations `e^{i theta} A` with
/// `|theta| <= theta_p - margin` for finite `p != 2`, and the adjoint at `p'` for the duality rows.
/// Nothing is asserted on non-acute meshes.
pub fn contractivity_suite(
    op: &DiscreteOperator,
    p_list: &[f64],
    data: &[HybridFunction],
    opts: &ContractivityOptions,
) -> Result<ContractivityReport> {
    for u in data {
        super::check_len(op, u)?;
    }
    let field = op.field();
    let mut jobs = vec![Job { family: "base", theta: 0.0, field: field.clone(), ps: p_list.to_vec() }];
    for &p in p_list.iter().filter(|p| p.is_finite() && **p != 2.0) {
        let Ok(tp) = theta_p(field, p, opts.theta_tol) else { continue };
        let top = tp - opts.theta_margin;
        if top <= 0.0 {
            continue;
        }
        for k in 1..=opts.n_theta {
            let th = top * k as f64 / opts.n_theta as f64;
            for theta in [th, -th] {
                jobs.push(Job { family: "rotated", theta, field: field.rotate(theta), ps: vec![p] });
            }
        }
    }
    let duals: Vec<f64> = p_list.iter().copied().filter(|p| p.is_finite()).map(conjugate_exponent).collect();
    if !duals.is_empty() {
        jobs.push(Job { family: "adjoint", theta: 0.0, field: field.adjoint(), ps: duals });
    }
    let acute = op.mesh().acute_flag();
    let tasks: Vec<(usize, usize)> = (0..jobs.len()).flat_map(|j| (0..data.len()).map(move |d| (j, d))).collect();
    let results: Vec<Result<Vec<ContractivityRow>>> = tasks
        .par_iter()
        .map(|&(j, d)| {
            let job = &jobs[j];
            let jop = if job.family == "base" { op.clone() } else { op.with_field(&job.field)? };
            let stepper = ImplicitEulerStepper::new(&jop, opts.dt)?;
            let mut states = vec![data[d].values.clone()];
            for _ in 0..opts.n_steps {
                let next = stepper.step(states.last().unwrap());
                states.push(next);
            }
            job.ps
                .iter()
                .map(|&p| {
                    let norms = states
                        .iter()
                        .map(|s| hybrid_norm(op.mesh(), &HybridFunction { values: s.clone() }, p))
                        .collect::<Result<Vec<f64>>>()?;
                    let (delta, elliptic) = admissible(&job.field, p);
                    let asserted = acute && elliptic;
                    let inc = max_increase(&norms);
                    Ok(ContractivityRow {
                        family: job.family.to_string(),
                        theta: job.theta,
                        p,
                        datum: d,
                        delta_p: delta,
                        asserted,
                        max_relative_increase: inc,
                        pass: !asserted || inc <= opts.slack,
                        norms,
                    })
                })
                .collect()
        })
        .collect();
    let mut rows = Vec::new();
    for r in results {
        rows.extend(r?);
    }
    let duality = p_list
        .iter()
        .filter(|p| p.is_finite())
        .flat_map(|&p| (0..data.len()).map(move |d| (p, d)))
        .filter_map(|(p, d)| {
            let q = conjugate_exponent(p);
            let find = |fam: &str, e: f64| rows.iter().find(|r| r.family == fam && r.p == e && r.datum == d);
            let (a, b) = (find("base", p)?, find("adjoint", q)?);
            let (ca, cb) = (a.max_relative_increase <= opts.slack, b.max_relative_increase <= opts.slack);
            Some(DualityRow { p, datum: d, primal_contractive: ca, adjoint_contractive: cb, consistent: ca == cb })
        })
        .collect();
    Ok(ContractivityReport { dt: opts.dt, acute, rows, duality })
}

/// Norm histories as CSV: `family,theta,datum,t,p,norm`.
pub fn write_norm_csv<W: std::io::Write>(report: &ContractivityReport, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["family", "theta", "datum", "t", "p", "norm"]).map_err(crate::ellipticity::csv_err)?;
    for r in &report.rows {
        for (k, n) in r.norms.iter().enumerate() {
            out.write_record([
                r.family.clone(),
                r.theta.to_string(),
                r.datum.to_string(),
                (k as f64 * report.dt).to_string(),
                r.p.to_string(),
                n.to_string(),
            ])
            .map_err(crate::ellipticity::csv_err)?;
        }
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::ComplexMatrix;
    use crate::linalg::c;
    use crate::operator::assemble;
    use crate::operator::tests::{random_function, top_dynamic};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_sup_norm_bound() {
        let m = top_dynamic(0.125);
        let op = assemble(&m, &CoefficientField::identity(2)).unwrap();
        let mut u = HybridFunction::from_fn(&m, |x| c(x[0] * x[1], 0.0));
        let peak = u.values.iter().map(|z| z.norm()).fold(0.0, f64::max);
        u.values.iter_mut().for_each(|z| *z /= peak);
        let opts = ContractivityOptions { n_steps: 20, ..Default::default() };
        let r = contractivity_suite(&op, &[f64::INFINITY], &[u], &opts).unwrap();
        let row = &r.rows[0];
        assert!(row.asserted && row.pass);
        assert!(row.norms.iter().all(|&n| n <= 1.0 + 1e-10));
    }

    #[test]
    fn nonsymmetric_real_field() {
        let m = top_dynamic(0.125);
        let op = assemble(&m, &CoefficientField::constant(ComplexMatrix::real2(1.0, 1.0, -1.0, 1.0))).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let data: Vec<_> = (0..2).map(|_| random_function(&m, &mut rng)).collect();
        let opts = ContractivityOptions { n_steps: 30, ..Default::default() };
        let r = contractivity_suite(&op, &[2.0, 4.0, f64::INFINITY], &data, &opts).unwrap();
        let bad: Vec<_> = r.rows.iter().filter(|r| !r.pass).map(|r| (&r.family, r.theta, r.p, r.max_relative_increase)).collect();
        assert!(bad.is_empty(), "{bad:?}");
        assert!(r.rows.iter().any(|r| r.family == "rotated" && r.asserted));
        assert!(r.all_pass());
        let mut buf = Vec::new();
        write_norm_csv(&r, &mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("family,theta,datum,t,p,norm\n"));
    }
}
