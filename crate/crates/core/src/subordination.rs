//! `e^{-t√L}` as a weighted average of ordinary heat semigroups.
//!
//! With `τ = t²/(4v²)` the subordination integral becomes
//! `(2/√π) ∫₀^∞ e^{-v²} e^{-τ(v) L} dv`. Substituting `v = e^y` spreads the
//! small-`v` end (large `τ`, which resolves small eigenvalues) over a log
//! scale; the sliver `v < e^{y_lo}` is replaced by one extra node carrying
//! its λ = 0 mass.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

pub const DEFAULT_NODES: usize = 64;

const Y_LO: f64 = -8.0;
const UPPER_PAD: f64 = 6.0;

/// Gauss–Legendre nodes and weights on [-1, 1] by Newton iteration on `P_n`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        if dp == 0.0 {
            dp = legendre(n, x).1;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// `(P_n(x), P_n'(x))`
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let n = n as f64;
    (p1, n * (x * p1 - p0) / (x * x - 1.0))
}

/// Heat times `τ` and weights `w` such that `Σ w e^{-τλ} ≈ e^{-t√λ}` on
/// `[0, lambda_max]`.
pub fn subordination_rule(t: f64, lambda_max: f64, nodes: usize) -> Result<Vec<(f64, f64)>> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::InvalidArgument(format!("subordination needs t > 0, got {t}")));
    }
    if nodes == 0 {
        return Err(Error::InvalidArgument("quadrature needs at least one node".into()));
    }
    let a = lambda_max.max(0.0) * t * t / 4.0;
    let y_hi = (a.powf(0.25) + UPPER_PAD).ln();
    let half = 0.5 * (y_hi - Y_LO);
    let scale = 2.0 / std::f64::consts::PI.sqrt();
    let (x, w) = gauss_legendre(nodes);
    let mut rule: Vec<(f64, f64)> = x
        .iter()
        .zip(&w)
        .map(|(&xi, &wi)| {
            let v = (Y_LO + (xi + 1.0) * half).exp();
            let weight = scale * wi * half * v * (-v * v).exp();
            (t * t / (4.0 * v * v), weight)
        })
        .collect();
    let v0 = Y_LO.exp();
    rule.push((t * t / (4.0 * v0 * v0), scale * v0));
    Ok(rule)
}

/// `e^{-t L^{1/2}} u` from a heat semigroup `heat(τ, u) = e^{-τL} u`.
/// `lambda_max` bounds the spectrum of `L`.
pub fn subordination_apply(
    mut heat: impl FnMut(f64, &DMatrix<f64>) -> Result<DMatrix<f64>>,
    t: f64,
    u: &DMatrix<f64>,
    lambda_max: f64,
    nodes: usize,
) -> Result<DMatrix<f64>> {
    if t == 0.0 {
        return Ok(u.clone());
    }
    let mut out = DMatrix::zeros(u.nrows(), u.ncols());
    for (tau, weight) in subordination_rule(t, lambda_max, nodes)? {
        out += heat(tau, u)? * weight;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn legendre_rule_integrates_polynomials() {
        let (x, w) = gauss_legendre(64);
        assert_abs_diff_eq!(w.iter().sum::<f64>(), 2.0, epsilon = 1e-13);
        // exact up to degree 127
        let p: f64 = x.iter().zip(&w).map(|(xi, wi)| wi * xi.powi(126)).sum();
        assert_abs_diff_eq!(p, 2.0 / 127.0, epsilon = 1e-13);
        let (x, _) = gauss_legendre(5);
        assert_abs_diff_eq!(x[2], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn scalar_identity() {
        for &t in &[0.5, 1.0, 2.0] {
            for &lambda in &[0.0, 1e-3, 0.1, 1.0, 2.0, 7.5, 20.0] {
                let u = DMatrix::from_element(1, 1, 1.0);
                let out = subordination_apply(
                    |tau, m| Ok(m * (-tau * lambda).exp()),
                    t,
                    &u,
                    20.0,
                    DEFAULT_NODES,
                )
                .unwrap();
                assert_abs_diff_eq!(out[(0, 0)], (-t * lambda.sqrt()).exp(), epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn zero_time_is_identity() {
        let u = DMatrix::from_element(3, 2, 0.25);
        let out = subordination_apply(|_, _| unreachable!(), 0.0, &u, 2.0, 8).unwrap();
        assert_eq!(out, u);
    }
}
