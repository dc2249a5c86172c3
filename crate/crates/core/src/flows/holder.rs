use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hybrid::Point;

pub const MIN_SAMPLES: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HolderReport {
    pub sup_norm: f64,
    /// Discrete `[u]_mu`.
    pub seminorm_mu: f64,
    /// Discrete `[u]_{theta mu}`.
    pub seminorm_theta_mu: f64,
    /// `|u|_{C^{theta mu}}`.
    pub lhs: f64,
    /// `3 |u|_inf^{1 - theta} |u|_{C^mu}^theta`.
    pub rhs: f64,
    pub holds: bool,
}

fn seminorm(points: &[Point], values: &[f64], alpha: f64) -> f64 {
    let mut best: f64 = 0.0;
    for i in 0..points.len() {
        for j in 0..i {
            let d = ((points[i][0] - points[j][0]).powi(2) + (points[i][1] - points[j][1]).powi(2)).sqrt();
            if d > 0.0 {
                best = best.max((values[i] - values[j]).abs() / d.powf(alpha));
            }
        }
    }
    best
}

/// Interpolation inequality `|u|_{C^{theta mu}} <= 3 |u|_inf^{1-theta} |u|_{C^mu}^theta` with
/// `|u|_{C^a} = |u|_inf + [u]_a`, all norms taken over the same sample pairs.
pub fn holder_interpolation_check(points: &[Point], values: &[f64], mu: f64, theta: f64) -> Result<HolderReport> {
    if !(mu > 0.0 && mu <= 1.0) {
        return Err(Error::BadExponent(mu));
    }
    if !(0.0..=1.0).contains(&theta) {
        return Err(Error::BadExponent(theta));
    }
    if points.len() != values.len() {
        return Err(Error::DimensionMismatch { expected: points.len(), got: values.len() });
    }
    if points.len() < MIN_SAMPLES {
        return Err(Error::InvalidInput(format!("{} samples, need at least {MIN_SAMPLES}", points.len())));
    }
    let sup_norm = values.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let seminorm_mu = seminorm(points, values, mu);
    let seminorm_theta_mu = seminorm(points, values, theta * mu);
    let lhs = sup_norm + seminorm_theta_mu;
    let rhs = 3.0 * sup_norm.powf(1.0 - theta) * (sup_norm + seminorm_mu).powf(theta);
    Ok(HolderReport { sup_norm, seminorm_mu, seminorm_theta_mu, lhs, rhs, holds: lhs <= rhs })
}
