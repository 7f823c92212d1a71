//! Strategy objects applying spectral functions of `L^s` to dense blocks.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use nalgebra_sparse::CsrMatrix;
use serde::{Deserialize, Serialize};

use crate::cg::conjugate_gradient;
use crate::chebyshev::{default_degree, ChebSeries, ChebTarget};
use crate::error::{check_order, check_rows, Error, Result};
use crate::graph::{gershgorin_bound, lambda_max, Graph, LaplacianKind};
use crate::spectral::{check_time, frac_power, phi1, SpectralDecomposition};
use crate::subordination::{self, subordination_apply};

pub const CG_TOL: f64 = 1e-10;
const CG_MAX_ITER: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "strategy", rename_all = "snake_case")]
pub enum Strategy {
    SpectralExact,
    /// Keep the `modes` lowest eigenmodes.
    TruncatedSpectral { modes: usize },
    /// Fixed degree, or `None` for the per-order default; with `tolerance`
    /// the degree is chosen by the coefficient-decay estimate instead.
    Chebyshev { degree: Option<usize>, tolerance: Option<f64> },
    /// Heat kernel for `s = 1/2` as a quadrature over `e^{-τL}`.
    Subordination { nodes: usize },
}

impl Strategy {
    pub fn name(&self) -> &'static str {
        match self {
            Strategy::SpectralExact => "spectral",
            Strategy::TruncatedSpectral { .. } => "truncated",
            Strategy::Chebyshev { .. } => "chebyshev",
            Strategy::Subordination { .. } => "subordination",
        }
    }

    fn needs_decomposition(&self) -> bool {
        !matches!(self, Strategy::Chebyshev { .. })
    }
}

/// A Laplacian bundled with whatever the chosen strategy needs to apply
/// `e^{-tL^s}`, `t h(tL^s)`, `L^s` and `(I + dt L^s)^{-1}`.
#[derive(Debug, Clone)]
pub struct KernelOperator {
    kind: LaplacianKind,
    laplacian: Arc<CsrMatrix<f64>>,
    spectral: Option<Arc<SpectralDecomposition>>,
    strategy: Strategy,
    lambda_max: f64,
    cheb_bound: f64,
}

impl KernelOperator {
    pub fn new(graph: &Graph, kind: LaplacianKind, strategy: Strategy) -> Result<Self> {
        let laplacian = Arc::new(graph.laplacian(kind)?);
        let spectral = if strategy.needs_decomposition() {
            Some(Arc::new(SpectralDecomposition::from_sparse(&laplacian)?))
        } else {
            None
        };
        Self::from_parts(graph, kind, laplacian, spectral, strategy)
    }

    /// Spectral operator sharing an existing decomposition of `L`.
    pub fn with_decomposition(
        graph: &Graph,
        kind: LaplacianKind,
        laplacian: Arc<CsrMatrix<f64>>,
        spectral: Arc<SpectralDecomposition>,
        strategy: Strategy,
    ) -> Result<Self> {
        check_rows(laplacian.nrows(), spectral.n())?;
        Self::from_parts(graph, kind, laplacian, Some(spectral), strategy)
    }

    fn from_parts(
        graph: &Graph,
        kind: LaplacianKind,
        laplacian: Arc<CsrMatrix<f64>>,
        spectral: Option<Arc<SpectralDecomposition>>,
        strategy: Strategy,
    ) -> Result<Self> {
        if let Strategy::TruncatedSpectral { modes } = strategy {
            if modes == 0 || modes > laplacian.nrows() {
                return Err(Error::InvalidArgument(format!(
                    "truncation rank {modes} outside 1..={}",
                    laplacian.nrows()
                )));
            }
        }
        let (lambda_max, cheb_bound) = match &spectral {
            Some(spec) => {
                let lm = spec.lambda_max();
                (lm, lm * crate::graph::LAMBDA_MAX_SAFETY)
            }
            None => {
                // I - D^{-1}W is similar to the symmetric normalized Laplacian.
                let symmetric = if kind == LaplacianKind::RandomWalk {
                    graph.laplacian(LaplacianKind::SymNormalized)?
                } else {
                    (*laplacian).clone()
                };
                let est = lambda_max(&symmetric, 1e-8);
                let bound = est.with_safety(gershgorin_bound(&symmetric));
                (est.value, bound)
            }
        };
        Ok(Self {
            kind,
            laplacian,
            spectral,
            strategy,
            lambda_max,
            cheb_bound: cheb_bound.max(f64::MIN_POSITIVE),
        })
    }

    pub fn kind(&self) -> LaplacianKind {
        self.kind
    }

    pub fn strategy(&self) -> Strategy {
        self.strategy
    }

    pub fn n(&self) -> usize {
        self.laplacian.nrows()
    }

    pub fn laplacian(&self) -> &Arc<CsrMatrix<f64>> {
        &self.laplacian
    }

    pub fn spectral(&self) -> Option<&Arc<SpectralDecomposition>> {
        self.spectral.as_ref()
    }

    /// Largest eigenvalue of `L` (exact for decomposed operators, a
    /// power-iteration estimate otherwise).
    pub fn lambda_max(&self) -> f64 {
        self.lambda_max
    }

    /// Upper bound on the spectrum used to map it onto `[-1, 1]`.
    pub fn chebyshev_bound(&self) -> f64 {
        self.cheb_bound
    }

    fn series(&self, target: ChebTarget) -> Result<ChebSeries> {
        let (degree, tolerance, s) = match (self.strategy, target) {
            (
                Strategy::Chebyshev { degree, tolerance },
                ChebTarget::Heat { s, .. } | ChebTarget::Phi { s, .. } | ChebTarget::Power { s },
            ) => (degree, tolerance, s),
            _ => unreachable!("series requested from a non-Chebyshev operator"),
        };
        match tolerance {
            Some(tol) => ChebSeries::with_tolerance(target, self.cheb_bound, tol),
            None => ChebSeries::new(target, self.cheb_bound, degree.unwrap_or_else(|| default_degree(s))),
        }
    }

    fn decomposition(&self, op: &'static str) -> Result<&SpectralDecomposition> {
        self.spectral.as_deref().ok_or(Error::Unsupported { strategy: self.strategy.name(), op })
    }

    /// Applies `g(λ)` through the decomposition, restricted to the lowest
    /// modes for the truncated strategy.
    fn spectral_filter(&self, m: &DMatrix<f64>, op: &'static str, g: impl Fn(f64) -> f64) -> Result<DMatrix<f64>> {
        let spec = self.decomposition(op)?;
        match self.strategy {
            Strategy::TruncatedSpectral { modes } => {
                check_rows(spec.n(), m.nrows())?;
                let basis = spec.eigenvectors().columns(0, modes);
                let mut coeffs = basis.tr_mul(m);
                for (k, mut row) in coeffs.row_iter_mut().enumerate() {
                    row *= g(spec.eigenvalues()[k]);
                }
                Ok(basis * coeffs)
            }
            _ => spec.filter(m, g),
        }
    }

    /// `e^{-t L^s} M`
    pub fn apply_heat(&self, s: f64, t: f64, m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        check_order(s)?;
        check_time(t)?;
        check_rows(self.n(), m.nrows())?;
        if t == 0.0 {
            return Ok(m.clone());
        }
        match self.strategy {
            Strategy::SpectralExact | Strategy::TruncatedSpectral { .. } => {
                self.spectral_filter(m, "heat", |l| (-t * frac_power(l, s)).exp())
            }
            Strategy::Chebyshev { .. } => self.series(ChebTarget::Heat { s, t })?.apply(&self.laplacian, m),
            Strategy::Subordination { nodes } => {
                if s == 1.0 {
                    return self.decomposition("heat")?.apply_heat(1.0, t, m);
                }
                if s != 0.5 {
                    return Err(Error::Unsupported {
                        strategy: "subordination",
                        op: "heat kernel for s other than 1/2",
                    });
                }
                let spec = self.decomposition("heat")?;
                subordination_apply(|tau, u| spec.apply_heat(1.0, tau, u), t, m, self.lambda_max, nodes)
            }
        }
    }

    /// `t h(t L^s) F`
    pub fn apply_phi(&self, s: f64, t: f64, f: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        check_order(s)?;
        check_time(t)?;
        check_rows(self.n(), f.nrows())?;
        match self.strategy {
            Strategy::SpectralExact | Strategy::TruncatedSpectral { .. } => {
                self.spectral_filter(f, "phi", |l| t * phi1(t * frac_power(l, s)))
            }
            Strategy::Chebyshev { .. } => {
                if t == 0.0 {
                    return Ok(DMatrix::zeros(f.nrows(), f.ncols()));
                }
                self.series(ChebTarget::Phi { s, t })?.apply(&self.laplacian, f)
            }
            Strategy::Subordination { .. } => Err(Error::Unsupported { strategy: "subordination", op: "phi" }),
        }
    }

    /// `L^s M`
    pub fn apply_power(&self, s: f64, m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        check_order(s)?;
        check_rows(self.n(), m.nrows())?;
        if s == 1.0 && !matches!(self.strategy, Strategy::TruncatedSpectral { .. }) {
            return Ok(&*self.laplacian * m);
        }
        match self.strategy {
            Strategy::SpectralExact | Strategy::TruncatedSpectral { .. } | Strategy::Subordination { .. } => {
                self.spectral_filter(m, "power", |l| frac_power(l, s))
            }
            Strategy::Chebyshev { .. } => self.series(ChebTarget::Power { s })?.apply(&self.laplacian, m),
        }
    }

    /// `(I + dt L^s)^{-1} B`, by eigen-filter when a decomposition is
    /// available and by conjugate gradient otherwise.
    pub fn solve_shifted(&self, s: f64, dt: f64, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        check_order(s)?;
        check_rows(self.n(), b.nrows())?;
        if self.spectral.is_some() && !matches!(self.strategy, Strategy::TruncatedSpectral { .. }) {
            return self.spectral_filter(b, "solve", |l| 1.0 / (1.0 + dt * frac_power(l, s)));
        }
        if !self.kind.is_symmetric() {
            return Err(Error::Unsupported {
                strategy: self.strategy.name(),
                op: "conjugate gradient on the non-symmetric random-walk Laplacian",
            });
        }
        let series = if s == 1.0 { None } else { Some(self.series(ChebTarget::Power { s })?) };
        let (x, _) = conjugate_gradient(
            |v| {
                let v = DMatrix::from_column_slice(v.len(), 1, v.as_slice());
                let lv = match &series {
                    Some(series) => series.apply(&self.laplacian, &v)?,
                    None => &*self.laplacian * &v,
                };
                Ok(DVector::from_column_slice((v + lv * dt).as_slice()))
            },
            b,
            None,
            CG_TOL,
            CG_MAX_ITER,
        )?;
        Ok(x)
    }

    /// A priori error bound of the truncated strategy for `e^{-tL^s} u`.
    pub fn truncation_bound(&self, s: f64, t: f64, u: &DVector<f64>) -> Option<f64> {
        match (self.strategy, &self.spectral) {
            (Strategy::TruncatedSpectral { modes }, Some(spec)) => {
                if modes == spec.n() {
                    Some(0.0)
                } else {
                    Some((-t * frac_power(spec.eigenvalues()[modes], s)).exp() * u.norm())
                }
            }
            _ => None,
        }
    }

    /// Default subordination node count.
    pub fn default_subordination() -> Strategy {
        Strategy::Subordination { nodes: subordination::DEFAULT_NODES }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn cycle(n: usize) -> Graph {
        let edges: Vec<_> = (0..n).map(|i| (i, (i + 1) % n, 1.0 + 0.1 * i as f64)).collect();
        Graph::from_edges(n, &edges).unwrap()
    }

    fn block(n: usize) -> DMatrix<f64> {
        DMatrix::from_fn(n, 2, |i, j| ((i * 7 + j * 3) % 5) as f64 - 2.0)
    }

    #[test]
    fn strategies_agree_on_cycle() {
        let g = cycle(12);
        let kind = LaplacianKind::Combinatorial;
        let exact = KernelOperator::new(&g, kind, Strategy::SpectralExact).unwrap();
        let cheb = KernelOperator::new(&g, kind, Strategy::Chebyshev { degree: Some(40), tolerance: None }).unwrap();
        let full = KernelOperator::new(&g, kind, Strategy::TruncatedSpectral { modes: 12 }).unwrap();
        let m = block(12);
        let a = exact.apply_heat(1.0, 0.8, &m).unwrap();
        assert_abs_diff_eq!(a, cheb.apply_heat(1.0, 0.8, &m).unwrap(), epsilon = 1e-10);
        assert_abs_diff_eq!(a, full.apply_heat(1.0, 0.8, &m).unwrap(), epsilon = 1e-12);
        let p = exact.apply_phi(1.0, 0.8, &m).unwrap();
        assert_abs_diff_eq!(p, cheb.apply_phi(1.0, 0.8, &m).unwrap(), epsilon = 1e-10);
    }

    #[test]
    fn subordination_matches_spectral() {
        let g = cycle(10);
        let kind = LaplacianKind::Combinatorial;
        let exact = KernelOperator::new(&g, kind, Strategy::SpectralExact).unwrap();
        let sub = KernelOperator::new(&g, kind, KernelOperator::default_subordination()).unwrap();
        let m = block(10);
        for t in [0.5, 1.0, 2.0] {
            let diff = (exact.apply_heat(0.5, t, &m).unwrap() - sub.apply_heat(0.5, t, &m).unwrap()).amax();
            assert!(diff < 1e-8, "t={t}: {diff}");
        }
        assert!(matches!(sub.apply_heat(0.7, 1.0, &m), Err(Error::Unsupported { .. })));
    }

    #[test]
    fn shifted_solve_cg_matches_filter() {
        let g = cycle(9);
        let kind = LaplacianKind::SymNormalized;
        let exact = KernelOperator::new(&g, kind, Strategy::SpectralExact).unwrap();
        let cheb = KernelOperator::new(&g, kind, Strategy::Chebyshev { degree: None, tolerance: None }).unwrap();
        let b = block(9);
        let x = exact.solve_shifted(1.0, 0.7, &b).unwrap();
        assert_abs_diff_eq!(x, cheb.solve_shifted(1.0, 0.7, &b).unwrap(), epsilon = 1e-9);
    }

    #[test]
    fn mass_of_ones_preserved() {
        let g = cycle(8);
        let op = KernelOperator::new(&g, LaplacianKind::Combinatorial, Strategy::Chebyshev { degree: None, tolerance: None })
            .unwrap();
        let ones = DMatrix::from_element(8, 1, 1.0);
        let out = op.apply_heat(0.6, 1.3, &ones).unwrap();
        assert_abs_diff_eq!(out, ones, epsilon = 1e-10);
    }
}
