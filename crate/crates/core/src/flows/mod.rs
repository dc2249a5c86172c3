//! Heat-flow energies, the bilinear embedding integral, weak quadratic estimates,
//! contour-quadrature functional calculus and the Hölder interpolation check.

mod hinfty;
mod holder;
mod quadratic;

pub use hinfty::{
    direct_phi_one, hinfty_apply, hinfty_bound_check, p_norm_estimate, ContourOptions, HinftyReport, HinftyRow,
    PhiS,
};
pub use holder::{holder_interpolation_check, HolderReport};
pub use quadratic::{weak_quadratic_check, weak_quadratic_estimate, WeakQuadraticReport, WeakQuadraticRow};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::bellman::{bellman_eval, BellmanParams};
use crate::ellipticity::{conjugate_exponent, delta_p, lambda_lower, PREDICATE_EPS};
use crate::error::{Error, Result};
use crate::hybrid::{hybrid_norm, HybridFunction};
use crate::linalg::c;
use crate::operator::{DiscreteOperator, ImplicitEulerStepper};

/// Integrands below this fraction of their peak end the time integral.
const TRUNCATION_FRACTION: f64 = 1e-14;
const TAIL_FRACTION: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowOptions {
    /// Geometric ratio of the time grid, in `(1, 2]`.
    pub rho: f64,
    /// Grid span `(t0, t_end)`; `None` uses `[1e-4 / mu_max, 50 / mu_min]`.
    pub span: Option<(f64, f64)>,
    /// Minimum implicit Euler substeps per grid interval.
    pub min_substeps: usize,
    /// Substeps also keep `dt * mu_min` below this.
    pub max_step_rate: f64,
    /// Bellman parameter used for the energy.
    pub delta: f64,
}

impl Default for FlowOptions {
    fn default() -> Self {
        Self { rho: 2f64.powf(0.125), span: None, min_substeps: 8, max_step_rate: 0.01, delta: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowReport {
    pub p: f64,
    /// `0` followed by the geometric grid.
    pub times: Vec<f64>,
    pub energy: Vec<f64>,
    /// Difference-quotient estimate of `-E'`.
    pub derivative_est: Vec<f64>,
    /// `sum_T |T| |grad f_t| |grad g_t|` at each time.
    pub integrand: Vec<f64>,
    pub bilinear_value: f64,
    /// Largest relative growth of `E` between consecutive times.
    pub energy_max_increase: f64,
    /// Largest relative gap between `-E'` and `2 Re(f* S f + g* S g)` (only `p = 2`, `delta = 0`).
    pub derivative_gap: Option<f64>,
    pub bound_constant: Option<f64>,
    /// `bilinear_value / (C |f|_p |g|_p')`.
    pub ratio: Option<f64>,
}

impl FlowReport {
    /// CSV with columns `t,E,dE,integrand`.
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let err = crate::ellipticity::csv_err;
        out.write_record(["t", "E", "dE", "integrand"]).map_err(err)?;
        for k in 0..self.times.len() {
            out.write_record([
                self.times[k].to_string(),
                self.energy[k].to_string(),
                self.derivative_est[k].to_string(),
                self.integrand[k].to_string(),
            ])
            .map_err(err)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Rough `(mu_min, mu_max)` of `|spec(M^{-1} S)|` by inverse and direct power iteration.
pub fn spectral_bounds(op: &DiscreteOperator) -> Result<(f64, f64)> {
    let n = op.n_dofs();
    if n == 0 {
        return Err(Error::InvalidInput("operator without dofs".into()));
    }
    let start: Vec<Complex64> = (0..n).map(|i| c(1.0 + (i as f64 * 0.7).sin(), (i as f64 * 1.3).cos())).collect();
    let m_norm = |u: &[Complex64]| u.iter().zip(&op.mass).map(|(z, w)| w * z.norm_sqr()).sum::<f64>().sqrt();
    let iterate = |apply: &dyn Fn(&[Complex64]) -> Vec<Complex64>| {
        let mut u = start.clone();
        let mut est = 0.0;
        for _ in 0..100 {
            let nu = m_norm(&u);
            u.iter_mut().for_each(|z| *z /= nu);
            let v = apply(&u);
            est = m_norm(&v);
            u = v;
        }
        est
    };
    let mu_max = iterate(&|u| op.stiffness.matvec(u).iter().zip(&op.mass).map(|(z, w)| z / w).collect());
    let lu = op.factor_affine(c(1.0, 0.0), &vec![c(0.0, 0.0); n])?;
    let inv = iterate(&|u| lu.solve(&op.mass_apply(u)));
    if !(inv.is_finite() && inv > 0.0) {
        return Err(Error::SingularSystem);
    }
    Ok((1.0 / inv, mu_max))
}

/// `0, t0, t0 rho, ...` up to the first node at or beyond `t_end`.
pub fn geometric_grid(t0: f64, rho: f64, t_end: f64) -> Result<Vec<f64>> {
    if !(t0 > 0.0 && t_end > t0 && rho > 1.0 && rho <= 2.0) {
        return Err(Error::InvalidInput(format!("geometric grid t0={t0} rho={rho} t_end={t_end}")));
    }
    let mut times = vec![0.0, t0];
    while *times.last().unwrap() < t_end {
        let next = times.last().unwrap() * rho;
        times.push(next);
    }
    Ok(times)
}

pub(crate) fn flow_grid(ops: &[&DiscreteOperator], opts: &FlowOptions) -> Result<(Vec<f64>, f64)> {
    let mut lo = f64::INFINITY;
    let mut hi: f64 = 0.0;
    for op in ops {
        let (a, b) = spectral_bounds(op)?;
        lo = lo.min(a);
        hi = hi.max(b);
    }
    let (t0, t_end) = opts.span.unwrap_or((1e-4 / hi, 50.0 / lo));
    Ok((geometric_grid(t0, opts.rho, t_end)?, lo))
}

/// Implicit Euler states at every grid time, with substeps between grid points.
pub(crate) fn evolve(
    op: &DiscreteOperator,
    u0: &[Complex64],
    times: &[f64],
    mu_min: f64,
    opts: &FlowOptions,
) -> Result<Vec<Vec<Complex64>>> {
    let mut states = vec![u0.to_vec()];
    for w in times.windows(2) {
        let span = w[1] - w[0];
        let n_sub = opts.min_substeps.max((span * mu_min / opts.max_step_rate).ceil() as usize).max(1);
        let stepper = ImplicitEulerStepper::new(op, span / n_sub as f64)?;
        let mut u = states.last().unwrap().clone();
        for _ in 0..n_sub {
            u = stepper.step(&u);
        }
        states.push(u);
    }
    Ok(states)
}

/// Trapezoid rule over `times`, stopping once the integrand falls below `1e-14` of its peak.
///
/// Returns the value and an exponential-extrapolation estimate of the neglected tail.
pub(crate) fn truncated_trapezoid(times: &[f64], values: &[f64]) -> (f64, f64) {
    let peak = values.iter().copied().fold(0.0, f64::max);
    let mut total = 0.0;
    let mut peaked = false;
    for k in 1..times.len() {
        total += 0.5 * (values[k] + values[k - 1]) * (times[k] - times[k - 1]);
        peaked |= values[k] == peak;
        if peaked && values[k] < TRUNCATION_FRACTION * peak {
            return (total, 0.0);
        }
    }
    let k = times.len() - 1;
    if k < 2 || values[k] == 0.0 {
        return (total, 0.0);
    }
    let (a, b) = (values[k - 1], values[k]);
    let tail = if b < a { b * (times[k] - times[k - 1]) / (a / b).ln() } else { f64::INFINITY };
    (total, tail)
}

/// Lumped `int Q(f, g) dmu`; exponents below 2 swap the roles of `f` and `g`.
fn energy(mass: &[f64], f: &[Complex64], g: &[Complex64], params: &BellmanParams, swapped: bool) -> f64 {
    mass.iter()
        .zip(f.iter().zip(g))
        .map(|(w, (&a, &b))| w * if swapped { bellman_eval(params, b, a) } else { bellman_eval(params, a, b) })
        .sum()
}

/// `-E'` by difference quotients; on positive decreasing stretches the quotient is taken in
/// `log E`, which is exact for a single decaying exponential on any step size.
fn central_differences(t: &[f64], e: &[f64]) -> Vec<f64> {
    let n = t.len();
    if n < 2 {
        return vec![0.0; n];
    }
    (0..n)
        .map(|k| {
            let (i, j) = if k == 0 { (0, 1) } else if k + 1 == n { (n - 2, n - 1) } else { (k - 1, k + 1) };
            let dt = t[j] - t[i];
            if e[i] > 0.0 && e[j] > 0.0 && e[k] > 0.0 {
                e[k] * (e[i] / e[j]).ln() / dt
            } else {
                -(e[j] - e[i]) / dt
            }
        })
        .collect()
}

/// Joint `(Delta_p, lambda, Lambda)` of a pair of fields.
pub fn pair_constants(op_a: &DiscreteOperator, op_b: &DiscreteOperator, p: f64) -> Result<(f64, f64, f64)> {
    let d = delta_p(op_a.field(), p)?.min(delta_p(op_b.field(), p)?);
    let lambda = lambda_lower(op_a.field()).min(lambda_lower(op_b.field()));
    let big = op_a.field().sup_operator_norm().max(op_b.field().sup_operator_norm());
    Ok((d, lambda, big))
}

/// Bilinear embedding constant: `1/(2 lambda)` at `p = 2`, otherwise
/// `10 p^{1/p} p'^{1/p'} Lambda / (Delta_p lambda)`.
pub fn bilinear_constant(op_a: &DiscreteOperator, op_b: &DiscreteOperator, p: f64) -> Result<f64> {
    let (d, lambda, big) = pair_constants(op_a, op_b, p)?;
    if d <= PREDICATE_EPS {
        return Err(Error::NotPElliptic { p, delta: d });
    }
    if p == 2.0 {
        return Ok(1.0 / (2.0 * lambda));
    }
    let q = conjugate_exponent(p);
    Ok(10.0 * p.powf(1.0 / p) * q.powf(1.0 / q) * big / (d * lambda))
}

fn compute(
    op_a: &DiscreteOperator,
    op_b: &DiscreteOperator,
    f: &HybridFunction,
    g: &HybridFunction,
    p: f64,
    opts: &FlowOptions,
) -> Result<FlowReport> {
    crate::operator::check_len(op_a, f)?;
    crate::operator::check_len(op_b, g)?;
    if op_a.n_dofs() != op_b.n_dofs() {
        return Err(Error::DimensionMismatch { expected: op_a.n_dofs(), got: op_b.n_dofs() });
    }
    let swapped = p < 2.0;
    let params = BellmanParams::new(if swapped { conjugate_exponent(p) } else { p }, opts.delta, 1.0)?;
    let (times, mu_min) = flow_grid(&[op_a, op_b], opts)?;
    let fs = evolve(op_a, &f.values, &times, mu_min, opts)?;
    let gs = evolve(op_b, &g.values, &times, mu_min, opts)?;
    let energy: Vec<f64> = fs.iter().zip(&gs).map(|(a, b)| energy(&op_a.mass, a, b, &params, swapped)).collect();
    let derivative_est = central_differences(&times, &energy);
    let integrand: Vec<f64> = fs.iter().zip(&gs).map(|(a, b)| op_a.gradient_product(a, b)).collect();
    let (bilinear_value, tail) = truncated_trapezoid(&times, &integrand);
    if tail > TAIL_FRACTION * bilinear_value {
        return Err(Error::TruncationWarning { tail, value: bilinear_value });
    }
    let energy_max_increase = energy
        .windows(2)
        .map(|w| if w[0] > 0.0 { (w[1] - w[0]) / w[0] } else { 0.0 })
        .fold(f64::NEG_INFINITY, f64::max);
    let derivative_gap = (p == 2.0 && opts.delta == 0.0).then(|| {
        let target: Vec<f64> = fs
            .iter()
            .zip(&gs)
            .map(|(a, b)| 2.0 * (op_a.form(a, a).re + op_b.form(b, b).re))
            .collect();
        let scale = target.iter().copied().fold(0.0, f64::max);
        (1..times.len() - 1)
            .filter(|&k| target[k] > 1e-10 * scale)
            .map(|k| (derivative_est[k] - target[k]).abs() / target[k])
            .fold(0.0, f64::max)
    });
    let bound_constant = bilinear_constant(op_a, op_b, p).ok();
    let norms = hybrid_norm(op_a.mesh(), f, p)? * hybrid_norm(op_b.mesh(), g, conjugate_exponent(p))?;
    let ratio = bound_constant.map(|c| if norms > 0.0 { bilinear_value / (c * norms) } else { 0.0 });
    Ok(FlowReport {
        p,
        times,
        energy,
        derivative_est,
        integrand,
        bilinear_value,
        energy_max_increase,
        derivative_gap,
        bound_constant,
        ratio,
    })
}

/// Evolves `f` under `A` and `g` under `B` and records the Bellman energy along the flow.
///
/// For `p = 2` and `delta = 0` the difference quotients are validated against the exact
/// dissipation; a gap above 20% means the grid is too coarse.
pub fn energy_flow(
    op_a: &DiscreteOperator,
    op_b: &DiscreteOperator,
    f: &HybridFunction,
    g: &HybridFunction,
    p: f64,
    opts: &FlowOptions,
) -> Result<FlowReport> {
    let report = compute(op_a, op_b, f, g, p, opts)?;
    if let Some(gap) = report.derivative_gap {
        if gap > 0.2 {
            return Err(Error::GridTooCoarse { relative: gap });
        }
    }
    Ok(report)
}

/// `int_0^inf sum_T |T| |grad e^{-t L_A} f| |grad e^{-t L_B} g| dt`.
pub fn bilinear_integral(
    op_a: &DiscreteOperator,
    op_b: &DiscreteOperator,
    f: &HybridFunction,
    g: &HybridFunction,
    opts: &FlowOptions,
) -> Result<f64> {
    let (times, mu_min) = flow_grid(&[op_a, op_b], opts)?;
    let fs = evolve(op_a, &f.values, &times, mu_min, opts)?;
    let gs = evolve(op_b, &g.values, &times, mu_min, opts)?;
    let integrand: Vec<f64> = fs.iter().zip(&gs).map(|(a, b)| op_a.gradient_product(a, b)).collect();
    let (value, tail) = truncated_trapezoid(&times, &integrand);
    if tail > TAIL_FRACTION * value {
        return Err(Error::TruncationWarning { tail, value });
    }
    Ok(value)
}

/// Flow report with the bilinear bound required to exist.
pub fn bilinear_bound_check(
    op_a: &DiscreteOperator,
    op_b: &DiscreteOperator,
    f: &HybridFunction,
    g: &HybridFunction,
    p: f64,
    opts: &FlowOptions,
) -> Result<FlowReport> {
    bilinear_constant(op_a, op_b, p)?;
    compute(op_a, op_b, f, g, p, opts)
}
