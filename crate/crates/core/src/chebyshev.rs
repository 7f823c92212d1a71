//! Shifted Chebyshev series for spectral functions of a sparse Laplacian.
//!
//! A target `f` on `[0, λ_max]` is expanded in `T_k(2x/λ_max - 1)`, and
//! `f(L) M` is then evaluated with the three-term recurrence using only
//! sparse-times-dense products.

use nalgebra::DMatrix;
use nalgebra_sparse::ops::serial::spmm_csr_dense;
use nalgebra_sparse::ops::Op;
use nalgebra_sparse::CsrMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{check_order, check_rows, Error, Result};
use crate::spectral::{frac_power, phi1};

pub const DEFAULT_DEGREE_LOCAL: usize = 30;
pub const DEFAULT_DEGREE_FRACTIONAL: usize = 80;
pub const MAX_AUTO_DEGREE: usize = 2000;

pub fn default_degree(s: f64) -> usize {
    if s == 1.0 {
        DEFAULT_DEGREE_LOCAL
    } else {
        DEFAULT_DEGREE_FRACTIONAL
    }
}

/// Scalar function of the Laplacian eigenvalue being approximated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ChebTarget {
    /// `e^{-t x^s}`
    Heat { s: f64, t: f64 },
    /// `t h(t x^s)`
    Phi { s: f64, t: f64 },
    /// `x^s`
    Power { s: f64 },
}

impl ChebTarget {
    pub fn eval(&self, x: f64) -> f64 {
        let x = x.max(0.0);
        match *self {
            ChebTarget::Heat { s, t } => (-t * frac_power(x, s)).exp(),
            ChebTarget::Phi { s, t } => t * phi1(t * frac_power(x, s)),
            ChebTarget::Power { s } => frac_power(x, s),
        }
    }

    fn order(&self) -> f64 {
        match *self {
            ChebTarget::Heat { s, .. } | ChebTarget::Phi { s, .. } | ChebTarget::Power { s } => s,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChebSeries {
    coefficients: Vec<f64>,
    lambda_max: f64,
    target: ChebTarget,
}

impl ChebSeries {
    /// Degree-`m` expansion of `target` on `[0, lambda_max]`.
    ///
    /// Coefficients come from Gauss–Chebyshev quadrature with
    /// `max(2m + 2, 64)` nodes. The series is then pinned at `x = 0` by adding
    /// a multiple of the degree-`m` Fejér kernel centred there, so the kernel
    /// mode is reproduced even when `x^s` makes the target non-smooth at 0.
    pub fn new(target: ChebTarget, lambda_max: f64, m: usize) -> Result<Self> {
        check_order(target.order())?;
        if !(lambda_max > 0.0 && lambda_max.is_finite()) {
            return Err(Error::InvalidArgument(format!("lambda_max must be positive, got {lambda_max}")));
        }
        if m == 0 {
            return Err(Error::InvalidArgument("Chebyshev degree must be at least 1".into()));
        }
        let nodes = (2 * m + 2).max(64);
        // θ_j = π(2j + 1)/(2N); kθ_j is reduced modulo 2π in integers so the
        // high-order coefficients are not swamped by phase rounding.
        let quarter = std::f64::consts::PI / (2 * nodes) as f64;
        let samples: Vec<f64> = (0..nodes)
            .map(|j| {
                let th = quarter * (2 * j + 1) as f64;
                target.eval(0.5 * lambda_max * (th.cos() + 1.0))
            })
            .collect();
        let mut coefficients: Vec<f64> = (0..=m)
            .map(|k| {
                let sum: f64 = samples
                    .iter()
                    .enumerate()
                    .map(|(j, fx)| fx * (quarter * ((k * (2 * j + 1)) % (4 * nodes)) as f64).cos())
                    .sum();
                2.0 * sum / nodes as f64
            })
            .collect();
        coefficients[0] *= 0.5;

        let mut series = Self { coefficients, lambda_max, target };
        let gap = target.eval(0.0) - series.eval(0.0);
        for (c, k) in series.coefficients.iter_mut().zip(fejer_at_left_end(m)) {
            *c += gap * k;
        }
        Ok(series)
    }

    /// Smallest degree (doubling from 8) whose error estimate is below `tol`.
    pub fn with_tolerance(target: ChebTarget, lambda_max: f64, tol: f64) -> Result<Self> {
        let mut m = 8;
        loop {
            let series = Self::new(target, lambda_max, m)?;
            if series.error_estimate() <= tol || m >= MAX_AUTO_DEGREE {
                if series.error_estimate() > tol {
                    log::warn!(
                        "Chebyshev degree capped at {m}; error estimate {:.2e} above tolerance {tol:.2e}",
                        series.error_estimate()
                    );
                }
                return Ok(series);
            }
            m = (2 * m).min(MAX_AUTO_DEGREE);
        }
    }

    pub fn degree(&self) -> usize {
        self.coefficients.len() - 1
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn lambda_max(&self) -> f64 {
        self.lambda_max
    }

    pub fn target(&self) -> ChebTarget {
        self.target
    }

    /// Heuristic truncation error `max(|c_{m-1}|, |c_m|)`.
    pub fn error_estimate(&self) -> f64 {
        let m = self.degree();
        self.coefficients[m].abs().max(self.coefficients[m - 1].abs())
    }

    /// Scalar evaluation by Clenshaw's recurrence.
    pub fn eval(&self, x: f64) -> f64 {
        let y = 2.0 * x / self.lambda_max - 1.0;
        let (mut b1, mut b2) = (0.0, 0.0);
        for &c in self.coefficients.iter().skip(1).rev() {
            let b0 = 2.0 * y * b1 - b2 + c;
            b2 = b1;
            b1 = b0;
        }
        y * b1 - b2 + self.coefficients[0]
    }

    pub fn apply(&self, l: &CsrMatrix<f64>, m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        Ok(self.apply_counted(l, m)?.0)
    }

    /// `p(L) M` together with the number of sparse products performed
    /// (always the degree).
    pub fn apply_counted(&self, l: &CsrMatrix<f64>, m: &DMatrix<f64>) -> Result<(DMatrix<f64>, usize)> {
        check_rows(l.nrows(), m.nrows())?;
        check_rows(l.ncols(), m.nrows())?;
        let c = &self.coefficients;
        let scale = 2.0 / self.lambda_max;

        let mut prev = m.clone();
        let mut out = m * c[0];
        // T_1 = (2L/λ - I) M
        let mut cur = -m.clone();
        spmm_csr_dense(1.0, &mut cur, scale, Op::NoOp(l), Op::NoOp(&*m));
        add_scaled(&mut out, c[1], &cur);
        let mut products = 1;
        for &ck in &c[2..] {
            // T_{k+1} = 2(2L/λ - I) T_k - T_{k-1}, written over T_{k-1}
            spmm_csr_dense(-1.0, &mut prev, 2.0 * scale, Op::NoOp(l), Op::NoOp(&cur));
            add_scaled(&mut prev, -2.0, &cur);
            std::mem::swap(&mut prev, &mut cur);
            add_scaled(&mut out, ck, &cur);
            products += 1;
        }
        Ok((out, products))
    }
}

/// `y += a x`
fn add_scaled(y: &mut DMatrix<f64>, a: f64, x: &DMatrix<f64>) {
    y.zip_apply(x, |yi, xi| *yi += a * xi);
}

/// Chebyshev coefficients of the degree-`m` Fejér kernel centred at `y = -1`,
/// scaled to equal 1 there.
fn fejer_at_left_end(m: usize) -> Vec<f64> {
    let denom = (m + 1) as f64;
    let raw: Vec<f64> = (0..=m)
        .map(|k| {
            if k == 0 {
                1.0
            } else {
                let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                2.0 * (1.0 - k as f64 / denom) * sign
            }
        })
        .collect();
    // T_k(-1) = (-1)^k, so the value at the left end is Σ |raw_k|.
    let peak: f64 = raw.iter().map(|c| c.abs()).sum();
    raw.into_iter().map(|c| c / peak).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn grid_error(series: &ChebSeries, points: usize) -> f64 {
        (0..points)
            .map(|i| {
                let x = series.lambda_max() * i as f64 / (points - 1) as f64;
                (series.eval(x) - series.target().eval(x)).abs()
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn constant_target() {
        let series = ChebSeries::new(ChebTarget::Heat { s: 1.0, t: 0.0 }, 2.0, 10).unwrap();
        assert_abs_diff_eq!(series.coefficients()[0], 1.0, epsilon = 1e-15);
        for &c in &series.coefficients()[1..] {
            assert_abs_diff_eq!(c, 0.0, epsilon = 1e-15);
        }
        assert_abs_diff_eq!(series.error_estimate(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn exponential_grid() {
        let series = ChebSeries::new(ChebTarget::Heat { s: 1.0, t: 1.0 }, 2.0, 20).unwrap();
        assert!(grid_error(&series, 101) <= 1e-10);
    }

    #[test]
    fn square_root_grid() {
        // Degree 40 cannot reach 1e-3: the best uniform approximation of √x
        // on [0, 2] already errs by about 5e-3 there.
        let target = ChebTarget::Heat { s: 0.5, t: 1.0 };
        let err40 = grid_error(&ChebSeries::new(target, 2.0, 40).unwrap(), 101);
        assert!(err40 <= 2e-3, "{err40}");
        let err60 = grid_error(&ChebSeries::new(target, 2.0, 60).unwrap(), 101);
        assert!(err60 <= 1e-3, "{err60}");
    }

    #[test]
    fn pinned_at_zero() {
        for target in [
            ChebTarget::Heat { s: 0.3, t: 2.0 },
            ChebTarget::Phi { s: 0.75, t: 2.0 },
            ChebTarget::Power { s: 0.5 },
        ] {
            let series = ChebSeries::new(target, 12.0, 80).unwrap();
            assert_abs_diff_eq!(series.eval(0.0), target.eval(0.0), epsilon = 1e-12);
        }
    }

    #[test]
    fn fejer_kernel_peak() {
        let c = fejer_at_left_end(7);
        let at = |y: f64| -> f64 {
            c.iter().enumerate().map(|(k, ck)| ck * (k as f64 * y.acos()).cos()).sum()
        };
        assert_abs_diff_eq!(at(-1.0), 1.0, epsilon = 1e-14);
        assert!(at(0.9).abs() < 0.05);
    }

    #[test]
    fn estimate_decreases_with_degree() {
        let target = ChebTarget::Heat { s: 1.0, t: 1.0 };
        let est: Vec<f64> = [5, 10, 20, 40]
            .iter()
            .map(|&m| ChebSeries::new(target, 2.0, m).unwrap().error_estimate())
            .collect();
        for pair in est.windows(2) {
            assert!(pair[1] < pair[0], "{est:?}");
        }
    }

    #[test]
    fn auto_degree_meets_tolerance() {
        let series = ChebSeries::with_tolerance(ChebTarget::Heat { s: 1.0, t: 3.0 }, 4.0, 1e-10).unwrap();
        assert!(series.error_estimate() <= 1e-10);
        assert!(grid_error(&series, 201) <= 1e-8);
    }

    #[test]
    fn product_count_equals_degree() {
        let l = CsrMatrix::identity(4);
        let m = DMatrix::from_element(4, 2, 1.0);
        let series = ChebSeries::new(ChebTarget::Heat { s: 1.0, t: 1.0 }, 2.0, 17).unwrap();
        let (out, products) = series.apply_counted(&l, &m).unwrap();
        assert_eq!(products, 17);
        assert_abs_diff_eq!(out[(0, 0)], (-1.0f64).exp(), epsilon = 1e-12);
    }
}
