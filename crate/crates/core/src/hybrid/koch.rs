use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::mesh::{dist, Point};
use crate::error::{Error, Result};

pub const MAX_KOCH_LEVEL: usize = 8;

/// Similarity dimension `log 4 / log 3` of the Koch curve.
pub fn koch_dimension() -> f64 {
    4f64.ln() / 3f64.ln()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KochSegment {
    pub a: Point,
    pub b: Point,
    pub weight: f64,
}

/// Level-`n` Koch polyline over `[(0, 0), (L0, 0)]` with top-down self-similar weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KochPrefractal {
    pub level: usize,
    pub base_length: f64,
    pub ell: f64,
    segments: Vec<KochSegment>,
}

impl KochPrefractal {
    pub fn segments(&self) -> &[KochSegment] {
        &self.segments
    }

    pub fn segment_length(&self) -> f64 {
        self.base_length / 3f64.powi(self.level as i32)
    }

    pub fn total_mass(&self) -> f64 {
        self.segments.iter().map(|s| s.weight).sum()
    }
}

pub fn koch_prefractal(level: usize, base_length: f64) -> Result<KochPrefractal> {
    if level > MAX_KOCH_LEVEL {
        return Err(Error::LevelTooLarge(level));
    }
    if !(base_length.is_finite() && base_length > 0.0) {
        return Err(Error::InvalidInput(format!("base length {base_length}")));
    }
    let ell = koch_dimension();
    let mut segments = vec![KochSegment { a: [0.0, 0.0], b: [base_length, 0.0], weight: base_length.powf(ell) }];
    let (s, c) = (std::f64::consts::FRAC_PI_3.sin(), 0.5);
    for _ in 0..level {
        let mut next = Vec::with_capacity(4 * segments.len());
        for seg in &segments {
            let d = [(seg.b[0] - seg.a[0]) / 3.0, (seg.b[1] - seg.a[1]) / 3.0];
            let p1 = [seg.a[0] + d[0], seg.a[1] + d[1]];
            let p3 = [seg.a[0] + 2.0 * d[0], seg.a[1] + 2.0 * d[1]];
            let p2 = [p1[0] + c * d[0] - s * d[1], p1[1] + s * d[0] + c * d[1]];
            let w = seg.weight / 4.0;
            for (a, b) in [(seg.a, p1), (p1, p2), (p2, p3), (p3, seg.b)] {
                next.push(KochSegment { a, b, weight: w });
            }
        }
        segments = next;
    }
    Ok(KochPrefractal { level, base_length, ell, segments })
}

fn point_segment_distance(x: Point, a: Point, b: Point) -> f64 {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 { 0.0 } else { (((x[0] - a[0]) * dx + (x[1] - a[1]) * dy) / len2).clamp(0.0, 1.0) };
    dist(x, [a[0] + t * dx, a[1] + t * dy])
}

/// Largest observed `m(B(x, r)) / r^ell` over random centers on the prefractal and
/// radii log-spaced between three segment lengths and `min(L0, 1)`.
pub fn upper_ell_check(prefractal: &KochPrefractal, n_balls: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r_max = prefractal.base_length.min(1.0);
    let r_min = (3.0 * prefractal.segment_length()).min(r_max);
    const N_RADII: usize = 8;
    let radii: Vec<f64> = (0..N_RADII)
        .map(|k| r_min * (r_max / r_min).powf(k as f64 / (N_RADII - 1) as f64))
        .collect();
    let segs = prefractal.segments();
    let mut best: f64 = 0.0;
    for _ in 0..n_balls {
        let s = &segs[rng.random_range(0..segs.len())];
        let t: f64 = rng.random();
        let x = [s.a[0] + t * (s.b[0] - s.a[0]), s.a[1] + t * (s.b[1] - s.a[1])];
        let d: Vec<f64> = segs.iter().map(|s| point_segment_distance(x, s.a, s.b)).collect();
        for &r in &radii {
            let mass: f64 = segs.iter().zip(&d).filter(|(_, &d)| d <= r).map(|(s, _)| s.weight).sum();
            best = best.max(mass / r.powf(prefractal.ell));
        }
    }
    best
}
