use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::mesh::{dist, EdgeLabel, HybridMesh, Point};

pub const POINTS_PER_BALL: usize = 10_000;
const N_RADII: usize = 5;
const R_MIN: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensitySample {
    pub x: Point,
    pub r: f64,
    /// Monte Carlo estimate of `|O ∩ B(x, r)| / r^2`.
    pub ratio: f64,
    /// One standard error of `ratio`.
    pub std_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityReport {
    pub c_min: f64,
    pub samples: Vec<DensitySample>,
}

/// Even-odd test against the boundary edges of the mesh.
pub fn point_in_domain(mesh: &HybridMesh, x: Point) -> bool {
    let v = mesh.vertices();
    let mut inside = false;
    for e in mesh.boundary_edges() {
        let (a, b) = (v[e.v0], v[e.v1]);
        if (a[1] > x[1]) != (b[1] > x[1]) {
            let cross = a[0] + (x[1] - a[1]) * (b[0] - a[0]) / (b[1] - a[1]);
            if x[0] < cross {
                inside = !inside;
            }
        }
    }
    inside
}

/// Monte Carlo estimate of `|O ∩ B(x, r)| / r^2` with its standard error.
pub fn density_ratio(mesh: &HybridMesh, x: Point, r: f64, n_points: usize, rng: &mut ChaCha8Rng) -> (f64, f64) {
    let mut hits = 0usize;
    for _ in 0..n_points {
        // uniform in the disc
        let rho = r * rng.random::<f64>().sqrt();
        let phi = rng.random_range(0.0..std::f64::consts::TAU);
        if point_in_domain(mesh, [x[0] + rho * phi.cos(), x[1] + rho * phi.sin()]) {
            hits += 1;
        }
    }
    let f = hits as f64 / n_points as f64;
    let pi = std::f64::consts::PI;
    (pi * f, pi * (f * (1.0 - f) / n_points as f64).sqrt())
}

fn distance_to_dirichlet(mesh: &HybridMesh, x: Point) -> f64 {
    let v = mesh.vertices();
    mesh.boundary_edges()
        .iter()
        .filter(|e| e.label == EdgeLabel::Dirichlet)
        .map(|e| {
            let (a, b) = (v[e.v0], v[e.v1]);
            let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
            let t = (((x[0] - a[0]) * dx + (x[1] - a[1]) * dy) / (dx * dx + dy * dy)).clamp(0.0, 1.0);
            dist(x, [a[0] + t * dx, a[1] + t * dy])
        })
        .fold(f64::INFINITY, f64::min)
}

/// Lower density constant over points of the non-Dirichlet boundary.
///
/// Centers are every non-Dirichlet boundary vertex followed by `n_samples` random
/// boundary points; radii are log-spaced in `(0.01, min(1, dist(x, D)))`.
pub fn measure_density_check(mesh: &HybridMesh, n_samples: usize, seed: u64) -> DensityReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v = mesh.vertices();
    let free: Vec<_> = mesh.boundary_edges().iter().filter(|e| e.label != EdgeLabel::Dirichlet).collect();
    let mut centers: Vec<Point> = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for e in &free {
        for w in [e.v0, e.v1] {
            if seen.insert(w) && mesh.dof_of_vertex(w).is_some() {
                centers.push(v[w]);
            }
        }
    }
    for _ in 0..if free.is_empty() { 0 } else { n_samples } {
        let e = free[rng.random_range(0..free.len())];
        let t: f64 = rng.random();
        let (a, b) = (v[e.v0], v[e.v1]);
        centers.push([a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]);
    }
    let mut samples = Vec::new();
    for x in centers {
        let r_max = distance_to_dirichlet(mesh, x).min(1.0);
        if r_max <= R_MIN {
            continue;
        }
        for k in 0..N_RADII {
            // open interval (R_MIN, r_max)
            let s = (k as f64 + 0.5) / N_RADII as f64;
            let r = R_MIN * (r_max / R_MIN).powf(s);
            let (ratio, std_error) = density_ratio(mesh, x, r, POINTS_PER_BALL, &mut rng);
            samples.push(DensitySample { x, r, ratio, std_error });
        }
    }
    let c_min = samples.iter().map(|s| s.ratio).fold(f64::INFINITY, f64::min);
    DensityReport { c_min, samples }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hybrid::mesh::{build_mesh, MeshSpec};
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

    fn square() -> HybridMesh {
        build_mesh(&MeshSpec::unit_square(0.25, [EdgeLabel::Dynamic; 4])).unwrap()
    }

    #[test]
    fn inside_test() {
        let m = square();
        assert!(point_in_domain(&m, [0.5, 0.5]));
        assert!(!point_in_domain(&m, [1.5, 0.5]));
        assert!(!point_in_domain(&m, [-0.1, 0.2]));
    }

    #[test]
    fn half_and_quarter_discs() {
        let m = square();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let (mid, se) = density_ratio(&m, [0.5, 0.0], 0.05, POINTS_PER_BALL, &mut rng);
        assert!((mid - FRAC_PI_2).abs() < 3.0 * se.max(1e-3), "{mid}");
        let (corner, se) = density_ratio(&m, [0.0, 0.0], 0.05, POINTS_PER_BALL, &mut rng);
        assert!((corner - FRAC_PI_4).abs() < 3.0 * se, "{corner}");
    }

    #[test]
    fn convex_polygon_constant() {
        let r = measure_density_check(&square(), 10, 1);
        assert!(r.c_min > 0.5 && r.c_min < FRAC_PI_4 + 0.1, "{}", r.c_min);
    }
}
