use nalgebra::Matrix4;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{bellman_hessian, generalized_hessian, on_singular_set, to_real, BellmanParams, Mollifier};
use crate::coefficients::{CoefficientField, ComplexMatrix};
use crate::ellipticity::{delta_p, lambda_lower, PREDICATE_EPS};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HessianMode {
    /// Classical Hessian of `Q` off the singular set.
    Pointwise,
    /// Hessian of `Q * phi_nu`; samples keep a `2 nu` clearance from the singular set.
    Mollified,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvexityOptions {
    pub n_samples: usize,
    pub seed: u64,
    pub mode: HessianMode,
    /// Sampled `log2 |zeta|` and `log2 |eta|` range.
    pub log2_range: (f64, f64),
}

impl Default for ConvexityOptions {
    fn default() -> Self {
        Self { n_samples: 100_000, seed: 0, mode: HessianMode::Pointwise, log2_range: (-8.0, 8.0) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HessianSample {
    pub cell: usize,
    pub z1: Complex64,
    pub z2: Complex64,
    pub x1: Vec<Complex64>,
    pub x2: Vec<Complex64>,
    /// Generalized Hessian at the sample.
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvexityReport {
    pub p: f64,
    pub delta: f64,
    pub nu: f64,
    pub n_samples: usize,
    /// `(Delta_p / 5) (lambda / Lambda)` for the pair of fields.
    pub bound_constant: f64,
    pub min_margin: f64,
    /// Margin after minimizing over the rescaling `(s X1, X2 / s)`.
    pub min_balanced_margin: f64,
    pub worst_sample: HessianSample,
}

/// `H - kappa |X1| |X2|` for one sample.
pub fn sample_margin(
    a: &ComplexMatrix,
    b: &ComplexMatrix,
    hess: &Matrix4<f64>,
    x1: &[Complex64],
    x2: &[Complex64],
    kappa: f64,
) -> Result<(f64, f64)> {
    let h = generalized_hessian(a, b, hess, x1, x2)?;
    let norm = |x: &[Complex64]| x.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    Ok((h, h - kappa * norm(x1) * norm(x2)))
}

fn balanced(a: &ComplexMatrix, b: &ComplexMatrix, hess: &Matrix4<f64>, x1: &[Complex64], x2: &[Complex64]) -> f64 {
    let zero = vec![Complex64::new(0.0, 0.0); x1.len()];
    let h = generalized_hessian(a, b, hess, x1, x2).unwrap_or(f64::NAN);
    let h11 = generalized_hessian(a, b, hess, x1, &zero).unwrap_or(f64::NAN);
    let h22 = generalized_hessian(a, b, hess, &zero, x2).unwrap_or(f64::NAN);
    if h11 < 0.0 || h22 < 0.0 {
        return f64::NEG_INFINITY;
    }
    2.0 * (h11 * h22).sqrt() + (h - h11 - h22)
}

fn cell_pairs<'a>(fa: &'a CoefficientField, fb: &'a CoefficientField) -> Result<Vec<(&'a ComplexMatrix, &'a ComplexMatrix)>> {
    let (ma, mb) = (fa.matrices(), fb.matrices());
    match (ma.len(), mb.len()) {
        (1, _) => Ok(mb.iter().map(|b| (&ma[0], b)).collect()),
        (_, 1) => Ok(ma.iter().map(|a| (a, &mb[0])).collect()),
        (n, m) if n == m => Ok(ma.iter().zip(mb.iter()).collect()),
        (n, m) => Err(Error::DimensionMismatch { expected: n, got: m }),
    }
}

fn unit_vector(rng: &mut ChaCha8Rng, d: usize) -> Vec<Complex64> {
    let v: Vec<Complex64> = (0..d).map(|_| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))).collect();
    let n = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    v.into_iter().map(|z| z / n).collect()
}

fn clear_of_singular_set(params: &BellmanParams, z: Complex64, e: Complex64, mode: HessianMode) -> bool {
    if on_singular_set(params, z, e) {
        return false;
    }
    if mode == HessianMode::Pointwise {
        return true;
    }
    let (r, s, nu) = (z.norm(), e.norm(), params.nu);
    if r <= 2.0 * nu || s <= 2.0 * nu {
        return false;
    }
    if params.p == 2.0 {
        return true;
    }
    let (p, q) = (params.p, params.p_prime);
    let g = r.powf(p) - s.powf(q);
    let dg = (p * r.powf(p - 1.0)).hypot(q * s.powf(q - 1.0));
    g.abs() / dg > 2.0 * nu
}

/// Minimum of `H_{Q}[(z1, z2); (X1, X2)] - (Delta_p/5)(lambda/Lambda)|X1||X2|` over random samples.
pub fn convexity_margin(
    field_a: &CoefficientField,
    field_b: &CoefficientField,
    params: &BellmanParams,
    opts: &ConvexityOptions,
) -> Result<ConvexityReport> {
    if opts.n_samples == 0 {
        return Err(Error::InvalidInput("n_samples must be positive".into()));
    }
    let p = params.p;
    let delta_pair = delta_p(field_a, p)?.min(delta_p(field_b, p)?);
    if delta_pair <= PREDICATE_EPS {
        return Err(Error::NotPElliptic { p, delta: delta_pair });
    }
    let lambda = lambda_lower(field_a).min(lambda_lower(field_b));
    let big_lambda = field_a.sup_operator_norm().max(field_b.sup_operator_norm());
    let kappa = delta_pair / 5.0 * lambda / big_lambda;
    let pairs = cell_pairs(field_a, field_b)?;
    let d = pairs[0].0.dim();

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let (lo, hi) = opts.log2_range;
    let mut samples = Vec::with_capacity(opts.n_samples);
    while samples.len() < opts.n_samples {
        let z = Complex64::from_polar(2f64.powf(rng.random_range(lo..hi)), rng.random_range(0.0..std::f64::consts::TAU));
        let e = Complex64::from_polar(2f64.powf(rng.random_range(lo..hi)), rng.random_range(0.0..std::f64::consts::TAU));
        if !clear_of_singular_set(params, z, e, opts.mode) {
            continue;
        }
        let cell = rng.random_range(0..pairs.len());
        samples.push((cell, z, e, unit_vector(&mut rng, d), unit_vector(&mut rng, d)));
    }

    let mollifier = (opts.mode == HessianMode::Mollified).then(|| Mollifier::new(params.nu));
    let evaluated: Vec<(f64, f64, f64)> = samples
        .par_iter()
        .map(|(cell, z, e, x1, x2)| {
            let hess = match &mollifier {
                Some(m) => m.hessian(params, &to_real(*z, *e))?,
                None => bellman_hessian(params, *z, *e)?,
            };
            let (a, b) = pairs[*cell];
            let (h, margin) = sample_margin(a, b, &hess, x1, x2, kappa)?;
            Ok((h, margin, balanced(a, b, &hess, x1, x2) - kappa))
        })
        .collect::<Result<_>>()?;

    let (worst, _) = evaluated
        .iter()
        .enumerate()
        .min_by(|x, y| x.1 .1.total_cmp(&y.1 .1))
        .expect("non-empty sample set");
    let (cell, z1, z2, x1, x2) = samples[worst].clone();
    Ok(ConvexityReport {
        p,
        delta: params.delta,
        nu: params.nu,
        n_samples: opts.n_samples,
        bound_constant: kappa,
        min_margin: evaluated[worst].1,
        min_balanced_margin: evaluated.iter().map(|e| e.2).fold(f64::INFINITY, f64::min),
        worst_sample: HessianSample { cell, z1, z2, x1, x2, value: evaluated[worst].0 },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaSweep {
    pub rows: Vec<ConvexityReport>,
    /// Largest swept `delta` with non-negative sampled margin.
    pub chosen: Option<f64>,
}

/// Sweeps `delta in {1, 1/2, ..., 2^-12}`. Exponents below 2 swap the roles of the fields.
pub fn delta_sweep(
    field_a: &CoefficientField,
    field_b: &CoefficientField,
    p: f64,
    nu: f64,
    opts: &ConvexityOptions,
) -> Result<DeltaSweep> {
    let (fa, fb, p) = if p < 2.0 { (field_b, field_a, p / (p - 1.0)) } else { (field_a, field_b, p) };
    let rows = (0..=12)
        .map(|k| convexity_margin(fa, fb, &BellmanParams::new(p, 0.5f64.powi(k), nu)?, opts))
        .collect::<Result<Vec<_>>>()?;
    let chosen = rows.iter().find(|r| r.min_margin >= 0.0).map(|r| r.delta);
    Ok(DeltaSweep { rows, chosen })
}

impl DeltaSweep {
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let err = crate::ellipticity::csv_err;
        out.write_record([
            "p",
            "delta",
            "nu",
            "n_samples",
            "min_margin",
            "min_balanced_margin",
            "witness_z1_re",
            "witness_z1_im",
            "witness_z2_re",
            "witness_z2_im",
            "witness_value",
        ])
        .map_err(err)?;
        for r in &self.rows {
            let s = &r.worst_sample;
            out.write_record(
                [
                    r.p,
                    r.delta,
                    r.nu,
                    r.n_samples as f64,
                    r.min_margin,
                    r.min_balanced_margin,
                    s.z1.re,
                    s.z1.im,
                    s.z2.re,
                    s.z2.im,
                    s.value,
                ]
                .map(|v| v.to_string()),
            )
            .map_err(err)?;
        }
        out.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn opts(n: usize) -> ConvexityOptions {
        ConvexityOptions { n_samples: n, seed: 4, ..Default::default() }
    }

    #[test]
    fn identity_at_two_has_closed_form_margin() {
        let id = CoefficientField::identity(2);
        for &delta in &[0.0, 0.5, 1.0] {
            let params = BellmanParams::new(2.0, delta, 1e-3).unwrap();
            let r = convexity_margin(&id, &id, &params, &opts(2000)).unwrap();
            assert!((r.bound_constant - 0.2).abs() < 1e-14);
            // H = (1 + delta)|X1|^2 + |X2|^2 on unit spheres
            assert!((r.min_margin - (2.0 + delta - 0.2)).abs() < 1e-12, "{}", r.min_margin);
        }
    }

    #[test]
    fn zero_directions_give_zero_margin() {
        let a = ComplexMatrix::identity(2);
        let zero = [Complex64::new(0.0, 0.0); 2];
        let (h, m) = sample_margin(&a, &a, &(Matrix4::identity() * 3.0), &zero, &zero, 0.7).unwrap();
        assert_eq!((h, m), (0.0, 0.0));
    }

    #[test]
    fn not_p_elliptic_is_rejected() {
        let bad = CoefficientField::constant(ComplexMatrix::from_complex2([
            [Complex64::new(1.0, 0.0), Complex64::new(0.0, 3.0)],
            [Complex64::new(0.0, 3.0), Complex64::new(1.0, 0.0)],
        ]));
        let params = BellmanParams::new(10.0, 1.0, 1e-3).unwrap();
        assert!(matches!(convexity_margin(&bad, &bad, &params, &opts(10)), Err(Error::NotPElliptic { .. })));
    }

    #[test]
    fn sweep_finds_delta_for_rotation_matrix() {
        let a = CoefficientField::constant(ComplexMatrix::real2(1.0, 1.0, -1.0, 1.0));
        let sweep = delta_sweep(&a, &a, 4.0, 1e-4, &opts(5000)).unwrap();
        assert_eq!(sweep.rows.len(), 13);
        assert!(sweep.chosen.is_some(), "{:?}", sweep.rows.iter().map(|r| r.min_margin).collect::<Vec<_>>());
        let mut buf = Vec::new();
        sweep.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 14);
    }
}
