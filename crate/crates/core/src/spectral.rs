//! Dense eigendecomposition of a symmetric Laplacian and exact spectral
//! filters built on it.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use nalgebra_sparse::CsrMatrix;

use crate::error::{check_order, check_rows, Error, Result};

/// Largest order accepted by [`SpectralDecomposition::new`].
pub const DENSE_LIMIT: usize = 4000;

/// Eigenvalues with magnitude below this are treated as exact zeros.
pub const ZERO_EIGENVALUE_TOL: f64 = 1e-10;

/// `λ^s` with the convention `0^s = 0`.
pub fn frac_power(lambda: f64, s: f64) -> f64 {
    if lambda <= 0.0 {
        0.0
    } else if s == 1.0 {
        lambda
    } else {
        lambda.powf(s)
    }
}

/// `h(x) = (1 - e^{-x}) / x` with `h(0) = 1`.
pub fn phi1(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        -(-x).exp_m1() / x
    }
}

#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    eigenvalues: DVector<f64>,
    eigenvectors: DMatrix<f64>,
}

impl SpectralDecomposition {
    pub fn new(l: &DMatrix<f64>) -> Result<Self> {
        Self::with_limit(l, DENSE_LIMIT)
    }

    pub fn from_sparse(l: &CsrMatrix<f64>) -> Result<Self> {
        if l.nrows() > DENSE_LIMIT {
            return Err(Error::DenseLimit { n: l.nrows(), limit: DENSE_LIMIT });
        }
        Self::new(&DMatrix::from(l))
    }

    /// Eigendecomposition with ascending eigenvalues. Eigenvalues in
    /// `(-1e-10, 0)` are clamped to zero; anything more negative is an error.
    pub fn with_limit(l: &DMatrix<f64>, limit: usize) -> Result<Self> {
        let n = l.nrows();
        if l.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: format!("{n}x{n}"),
                found: format!("{}x{}", n, l.ncols()),
            });
        }
        if n > limit {
            return Err(Error::DenseLimit { n, limit });
        }
        let scale = l.amax().max(1.0);
        let asym = (l - l.transpose()).amax();
        if asym > 1e-10 * scale {
            return Err(Error::NotSymmetric(asym));
        }

        let eig = SymmetricEigen::new(l.clone());
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));

        let mut eigenvalues = DVector::zeros(n);
        let mut eigenvectors = DMatrix::zeros(n, n);
        for (k, &src) in order.iter().enumerate() {
            let mut lambda = eig.eigenvalues[src];
            if lambda.abs() < ZERO_EIGENVALUE_TOL {
                lambda = 0.0;
            } else if lambda < 0.0 {
                return Err(Error::NotPositiveSemiDefinite(lambda));
            }
            eigenvalues[k] = lambda;
            let mut col = eig.eigenvectors.column(src).into_owned();
            // Fix the sign so the largest-magnitude entry is positive.
            if col[col.iamax()] < 0.0 {
                col.neg_mut();
            }
            eigenvectors.set_column(k, &col);
        }
        Ok(Self { eigenvalues, eigenvectors })
    }

    pub fn n(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.eigenvalues
    }

    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.eigenvectors
    }

    pub fn lambda_max(&self) -> f64 {
        self.eigenvalues.iter().copied().fold(0.0, f64::max)
    }

    /// Number of zero eigenvalues (connected components of the graph).
    pub fn kernel_dim(&self) -> usize {
        self.eigenvalues.iter().filter(|&&l| l == 0.0).count()
    }

    /// `U diag(g(λ)) Uᵀ M`
    pub fn filter(&self, m: &DMatrix<f64>, g: impl Fn(f64) -> f64) -> Result<DMatrix<f64>> {
        check_rows(self.n(), m.nrows())?;
        let mut coeffs = self.eigenvectors.tr_mul(m);
        for (k, mut row) in coeffs.row_iter_mut().enumerate() {
            row *= g(self.eigenvalues[k]);
        }
        Ok(&self.eigenvectors * coeffs)
    }

    /// Dense filter matrix `U diag(g(λ)) Uᵀ`.
    pub fn filter_matrix(&self, g: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let mut scaled = self.eigenvectors.clone();
        for (k, mut col) in scaled.column_iter_mut().enumerate() {
            col *= g(self.eigenvalues[k]);
        }
        scaled * self.eigenvectors.transpose()
    }

    /// `e^{-t L^s} M`
    pub fn apply_heat(&self, s: f64, t: f64, m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        check_order(s)?;
        check_time(t)?;
        if t == 0.0 {
            check_rows(self.n(), m.nrows())?;
            return Ok(m.clone());
        }
        self.filter(m, |l| (-t * frac_power(l, s)).exp())
    }

    /// `t h(t L^s) F`
    pub fn apply_phi(&self, s: f64, t: f64, f: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        check_order(s)?;
        check_time(t)?;
        self.filter(f, |l| t * phi1(t * frac_power(l, s)))
    }

    /// `L^s M`
    pub fn apply_power(&self, s: f64, m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        check_order(s)?;
        self.filter(m, |l| frac_power(l, s))
    }

    /// `(I + dt L^s)^{-1} B`
    pub fn solve_shifted(&self, s: f64, dt: f64, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        check_order(s)?;
        self.filter(b, |l| 1.0 / (1.0 + dt * frac_power(l, s)))
    }

    /// Moore–Penrose pseudoinverse `(L^s)^† F`.
    pub fn pseudoinverse_apply(&self, s: f64, f: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        check_order(s)?;
        self.filter(f, |l| if l > 0.0 { 1.0 / frac_power(l, s) } else { 0.0 })
    }

    /// Projection onto the kernel (span of zero-eigenvalue modes).
    pub fn kernel_project(&self, m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.filter(m, |l| if l == 0.0 { 1.0 } else { 0.0 })
    }

    /// `Π U₀ + (L^s)^† F`, the `t → ∞` limit of the sourced diffusion.
    pub fn steady_state(&self, s: f64, u0: &DMatrix<f64>, f: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let kernel_part = self.kernel_project(f)?.norm();
        if kernel_part > 1e-8 {
            return Err(Error::UnboundedSource(kernel_part));
        }
        Ok(self.kernel_project(u0)? + self.pseudoinverse_apply(s, f)?)
    }

    /// First `m` modes of `e^{-t L^s} u` together with the a priori bound
    /// `e^{-t λ_{m+1}^s} ‖u‖₂` on the discarded part.
    pub fn apply_truncated(&self, m: usize, s: f64, t: f64, u: &DVector<f64>) -> Result<(DVector<f64>, f64)> {
        check_order(s)?;
        check_time(t)?;
        check_rows(self.n(), u.len())?;
        if m == 0 || m > self.n() {
            return Err(Error::InvalidArgument(format!(
                "truncation rank {m} outside 1..={}",
                self.n()
            )));
        }
        let basis = self.eigenvectors.columns(0, m);
        let mut coeffs = basis.tr_mul(u);
        for k in 0..m {
            coeffs[k] *= (-t * frac_power(self.eigenvalues[k], s)).exp();
        }
        let bound = if m == self.n() {
            0.0
        } else {
            (-t * frac_power(self.eigenvalues[m], s)).exp() * u.norm()
        };
        Ok((basis * coeffs, bound))
    }

    /// Rows are node coordinates `(e^{-tλ₂}φ₂(i), …, e^{-tλ_m}φ_m(i))`.
    pub fn diffusion_map(&self, t: f64, m: usize) -> Result<DMatrix<f64>> {
        if m < 2 || m > self.n() {
            return Err(Error::InvalidArgument(format!(
                "diffusion map dimension {m} outside 2..={}",
                self.n()
            )));
        }
        let mut coords = self.eigenvectors.columns(1, m - 1).into_owned();
        for (k, mut col) in coords.column_iter_mut().enumerate() {
            col *= (-t * self.eigenvalues[k + 1]).exp();
        }
        Ok(coords)
    }

    /// `E_s(u) = ⟨u, L^s u⟩ = Σ λ_k^s ⟨u, φ_k⟩²`
    pub fn dirichlet_energy(&self, s: f64, u: &DVector<f64>) -> Result<f64> {
        check_order(s)?;
        check_rows(self.n(), u.len())?;
        let coeffs = self.eigenvectors.tr_mul(u);
        Ok(coeffs
            .iter()
            .zip(self.eigenvalues.iter())
            .map(|(c, &l)| frac_power(l, s) * c * c)
            .sum())
    }

    /// Dense heat kernel `H_t = e^{-t L^s}`.
    pub fn heat_kernel(&self, s: f64, t: f64) -> Result<DMatrix<f64>> {
        check_order(s)?;
        check_time(t)?;
        Ok(self.filter_matrix(|l| (-t * frac_power(l, s)).exp()))
    }
}

pub(crate) fn check_time(t: f64) -> Result<()> {
    if t.is_finite() && t >= 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("diffusion time {t} must be finite and non-negative")))
    }
}
