//! Gauss-Legendre rules and a collapsed rule on the reference triangle.

use nalgebra::{DMatrix, SymmetricEigen};

/// Gauss-Legendre nodes and weights on `[-1, 1]` (Golub-Welsch).
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut jacobi = DMatrix::<f64>::zeros(n, n);
    for k in 1..n {
        let kf = k as f64;
        let beta = kf / (4.0 * kf * kf - 1.0).sqrt();
        jacobi[(k - 1, k)] = beta;
        jacobi[(k, k - 1)] = beta;
    }
    let eig = SymmetricEigen::new(jacobi);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| (eig.eigenvalues[i], 2.0 * eig.eigenvectors[(0, i)].powi(2)))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    // symmetrize against eigen-solver rounding
    for i in 0..n / 2 {
        let (x, w) = (0.5 * (pairs[n - 1 - i].0 - pairs[i].0), 0.5 * (pairs[i].1 + pairs[n - 1 - i].1));
        pairs[i] = (-x, w);
        pairs[n - 1 - i] = (x, w);
    }
    if n % 2 == 1 {
        pairs[n / 2].0 = 0.0;
    }
    pairs.into_iter().unzip()
}

/// Rule on the reference triangle `{x, y >= 0, x + y <= 1}` with weights summing to `1/2`.
///
/// Collapsed tensor Gauss rule with `n x n` points; exact for polynomials of degree `2n - 2`.
pub fn triangle_rule(n: usize) -> Vec<([f64; 2], f64)> {
    let (x, w) = gauss_legendre(n);
    let mut out = Vec::with_capacity(n * n);
    for i in 0..n {
        let s = 0.5 * (x[i] + 1.0);
        for j in 0..n {
            let t = 0.5 * (x[j] + 1.0);
            out.push(([s, t * (1.0 - s)], 0.25 * w[i] * w[j] * (1.0 - s)));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legendre_integrates_polynomials() {
        for n in 1..=10 {
            let (x, w) = gauss_legendre(n);
            for deg in 0..2 * n {
                let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
                let q: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(deg as i32)).sum();
                assert!((q - exact).abs() < 1e-13, "n={n} deg={deg}");
            }
        }
    }

    #[test]
    fn triangle_moments() {
        let rule = triangle_rule(3);
        // int x^a y^b over the triangle = a! b! / (a + b + 2)!
        let fact = |k: u32| (1..=k).product::<u32>().max(1) as f64;
        for a in 0..=2u32 {
            for b in 0..=(4 - a).min(2) {
                let q: f64 = rule.iter().map(|(p, w)| w * p[0].powi(a as i32) * p[1].powi(b as i32)).sum();
                let exact = fact(a) * fact(b) / fact(a + b + 2);
                assert!((q - exact).abs() < 1e-14, "a={a} b={b}");
            }
        }
    }
}
