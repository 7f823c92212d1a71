//! Weighted undirected graphs, their Laplacians and the kernel projector.
//!
//! Weights are stored as a compressed sparse row matrix holding both
//! directions of every edge, so `W` is explicitly symmetric and a sparse
//! product touches each stored entry once.

use std::collections::VecDeque;
use std::io::BufRead;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use nalgebra_sparse::{CooMatrix, CsrMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_rows, Error, Result};

/// Multiplicative margin applied to a λ_max estimate before it is used to
/// map the spectrum onto [-1, 1]. Overestimating is harmless, underestimating
/// makes the Chebyshev recurrence diverge.
pub const LAMBDA_MAX_SAFETY: f64 = 1.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LaplacianKind {
    /// `D - W`
    Combinatorial,
    /// `I - D^{-1/2} W D^{-1/2}`
    SymNormalized,
    /// `I - D̃^{-1/2} (W + I) D̃^{-1/2}` with `D̃ = D + I`
    SymNormalizedSelfLoops,
    /// `I - D^{-1} W` (not symmetric)
    RandomWalk,
}

impl LaplacianKind {
    pub fn is_symmetric(self) -> bool {
        !matches!(self, LaplacianKind::RandomWalk)
    }

    pub fn name(self) -> &'static str {
        match self {
            LaplacianKind::Combinatorial => "combinatorial",
            LaplacianKind::SymNormalized => "sym-normalized",
            LaplacianKind::SymNormalizedSelfLoops => "sym-normalized-self-loops",
            LaplacianKind::RandomWalk => "random-walk",
        }
    }
}

impl std::str::FromStr for LaplacianKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "combinatorial" => Ok(LaplacianKind::Combinatorial),
            "sym-normalized" | "sym" => Ok(LaplacianKind::SymNormalized),
            "sym-normalized-self-loops" | "sym-self-loops" => {
                Ok(LaplacianKind::SymNormalizedSelfLoops)
            }
            "random-walk" | "rw" => Ok(LaplacianKind::RandomWalk),
            other => Err(Error::InvalidArgument(format!(
                "unknown Laplacian kind '{other}'"
            ))),
        }
    }
}

impl std::fmt::Display for LaplacianKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Sparse symmetric weighted graph with cached degrees.
#[derive(Debug, Clone)]
pub struct Graph {
    weights: CsrMatrix<f64>,
    degrees: Vec<f64>,
}

impl Graph {
    /// Builds a graph on `n` nodes. Each `(i, j, w)` adds `w` to both
    /// `W_ij` and `W_ji`; repeated pairs accumulate.
    pub fn from_edges(n: usize, edges: &[(usize, usize, f64)]) -> Result<Self> {
        let mut coo = CooMatrix::new(n, n);
        for &(i, j, w) in edges {
            for index in [i, j] {
                if index >= n {
                    return Err(Error::IndexOutOfRange { index, n });
                }
            }
            if !(w.is_finite() && w > 0.0) {
                return Err(Error::InvalidWeight { i, j, weight: w });
            }
            if i == j {
                return Err(Error::SelfLoop(i));
            }
            coo.push(i, j, w);
            coo.push(j, i, w);
        }
        Ok(Self::from_symmetric_csr(CsrMatrix::from(&coo)))
    }

    /// Wraps an already symmetric, non-negative weight matrix. Explicit
    /// zeros and diagonal entries are dropped.
    pub fn from_weights(weights: &CsrMatrix<f64>) -> Result<Self> {
        let n = weights.nrows();
        if weights.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: format!("{n}x{n}"),
                found: format!("{}x{}", n, weights.ncols()),
            });
        }
        let mut coo = CooMatrix::new(n, n);
        for (i, j, &w) in weights.triplet_iter() {
            if i == j || w == 0.0 {
                continue;
            }
            if !(w.is_finite() && w > 0.0) {
                return Err(Error::InvalidWeight { i, j, weight: w });
            }
            coo.push(i, j, w);
        }
        let csr = CsrMatrix::from(&coo);
        let asym = max_asymmetry(&csr);
        if asym > 1e-12 {
            return Err(Error::NotSymmetric(asym));
        }
        Ok(Self::from_symmetric_csr(csr))
    }

    fn from_symmetric_csr(weights: CsrMatrix<f64>) -> Self {
        let degrees = weights.row_iter().map(|row| row.values().iter().sum()).collect();
        Self { weights, degrees }
    }

    pub fn n(&self) -> usize {
        self.weights.nrows()
    }

    pub fn weights(&self) -> &CsrMatrix<f64> {
        &self.weights
    }

    pub fn degrees(&self) -> &[f64] {
        &self.degrees
    }

    /// `vol(G) = Σ d_i`
    pub fn volume(&self) -> f64 {
        self.degrees.iter().sum()
    }

    /// Number of undirected edges.
    pub fn edge_count(&self) -> usize {
        self.weights.nnz() / 2
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        let row = self.weights.row(i);
        match row.col_indices().binary_search(&j) {
            Ok(pos) => row.values()[pos],
            Err(_) => 0.0,
        }
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.weight(i, j) > 0.0
    }

    /// `(neighbor, weight)` pairs of node `i` in ascending neighbor order.
    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let offsets = self.weights.row_offsets();
        let range = offsets[i]..offsets[i + 1];
        self.weights.col_indices()[range.clone()]
            .iter()
            .copied()
            .zip(self.weights.values()[range].iter().copied())
    }

    /// Edges with `i < j`.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.weights
            .triplet_iter()
            .filter(|(i, j, _)| i < j)
            .map(|(i, j, &w)| (i, j, w))
    }

    /// Component label per node (labels are 0-based, in order of the lowest
    /// node of each component).
    pub fn components(&self) -> (usize, Vec<usize>) {
        let n = self.n();
        let mut label = vec![usize::MAX; n];
        let mut count = 0;
        let mut queue = VecDeque::new();
        for start in 0..n {
            if label[start] != usize::MAX {
                continue;
            }
            label[start] = count;
            queue.push_back(start);
            while let Some(v) = queue.pop_front() {
                for (u, _) in self.neighbors(v) {
                    if label[u] == usize::MAX {
                        label[u] = count;
                        queue.push_back(u);
                    }
                }
            }
            count += 1;
        }
        (count, label)
    }

    pub fn is_connected(&self) -> bool {
        self.n() > 0 && self.components().0 == 1
    }

    /// Unweighted hop distances from `source`; `None` marks unreachable nodes.
    pub fn hop_distances(&self, source: usize) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.n()];
        let mut queue = VecDeque::new();
        dist[source] = Some(0);
        queue.push_back(source);
        while let Some(v) = queue.pop_front() {
            let next = dist[v].map(|d| d + 1);
            for (u, _) in self.neighbors(v) {
                if dist[u].is_none() {
                    dist[u] = next;
                    queue.push_back(u);
                }
            }
        }
        dist
    }

    pub fn laplacian(&self, kind: LaplacianKind) -> Result<CsrMatrix<f64>> {
        let n = self.n();
        let mut coo = CooMatrix::new(n, n);
        match kind {
            LaplacianKind::Combinatorial => {
                for i in 0..n {
                    coo.push(i, i, self.degrees[i]);
                    for (j, w) in self.neighbors(i) {
                        coo.push(i, j, -w);
                    }
                }
            }
            LaplacianKind::SymNormalized => {
                let inv_sqrt = self.inverse_sqrt_degrees(kind, 0.0)?;
                for i in 0..n {
                    coo.push(i, i, 1.0);
                    for (j, w) in self.neighbors(i) {
                        coo.push(i, j, -w * inv_sqrt[i] * inv_sqrt[j]);
                    }
                }
            }
            LaplacianKind::SymNormalizedSelfLoops => {
                let inv_sqrt = self.inverse_sqrt_degrees(kind, 1.0)?;
                for i in 0..n {
                    coo.push(i, i, 1.0 - inv_sqrt[i] * inv_sqrt[i]);
                    for (j, w) in self.neighbors(i) {
                        coo.push(i, j, -w * inv_sqrt[i] * inv_sqrt[j]);
                    }
                }
            }
            LaplacianKind::RandomWalk => {
                for i in 0..n {
                    let d = self.degrees[i];
                    if d <= 0.0 {
                        return Err(Error::ZeroDegree { node: i, kind });
                    }
                    coo.push(i, i, 1.0);
                    for (j, w) in self.neighbors(i) {
                        coo.push(i, j, -w / d);
                    }
                }
            }
        }
        Ok(CsrMatrix::from(&coo))
    }

    fn inverse_sqrt_degrees(&self, kind: LaplacianKind, shift: f64) -> Result<Vec<f64>> {
        self.degrees
            .iter()
            .enumerate()
            .map(|(node, &d)| {
                let d = d + shift;
                if d > 0.0 {
                    Ok(1.0 / d.sqrt())
                } else {
                    Err(Error::ZeroDegree { node, kind })
                }
            })
            .collect()
    }

    /// Orthogonal projector onto the one-dimensional kernel of the chosen
    /// Laplacian. Requires a connected graph.
    pub fn projector(&self, kind: LaplacianKind) -> Result<Projector> {
        let (components, _) = self.components();
        if components != 1 {
            return Err(Error::Disconnected { components });
        }
        let n = self.n();
        let vector = match kind {
            LaplacianKind::Combinatorial | LaplacianKind::RandomWalk => {
                DVector::from_element(n, 1.0 / (n as f64).sqrt())
            }
            LaplacianKind::SymNormalized | LaplacianKind::SymNormalizedSelfLoops => {
                let shift = if kind == LaplacianKind::SymNormalizedSelfLoops { 1.0 } else { 0.0 };
                let v = DVector::from_iterator(n, self.degrees.iter().map(|d| (d + shift).sqrt()));
                let norm = v.norm();
                v / norm
            }
        };
        Ok(Projector { kind, vector })
    }

    /// Reads a whitespace-separated `i j [w]` edge list. Without `n`, the
    /// node count is one past the largest index seen.
    pub fn read_edge_list(path: impl AsRef<Path>, n: Option<usize>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path)?;
        let edges = parse_edge_list(std::io::BufReader::new(file), &path.display().to_string())?;
        let n = n.unwrap_or_else(|| {
            edges.iter().map(|&(i, j, _)| i.max(j) + 1).max().unwrap_or(0)
        });
        Self::from_edges(n, &edges)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        DMatrix::from(&self.weights)
    }
}

/// Parses edge-list text. Blank lines and lines starting with `#` are skipped.
pub fn parse_edge_list(reader: impl BufRead, source: &str) -> Result<Vec<(usize, usize, f64)>> {
    let mut edges = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let parse_err = |msg: String| Error::Parse {
            path: source.to_string(),
            line: lineno + 1,
            msg,
        };
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        if !(2..=3).contains(&fields.len()) {
            return Err(parse_err(format!("expected 'i j [w]', found {} fields", fields.len())));
        }
        let i = fields[0]
            .parse::<usize>()
            .map_err(|e| parse_err(format!("node id '{}': {e}", fields[0])))?;
        let j = fields[1]
            .parse::<usize>()
            .map_err(|e| parse_err(format!("node id '{}': {e}", fields[1])))?;
        let w = match fields.get(2) {
            Some(tok) => tok
                .parse::<f64>()
                .map_err(|e| parse_err(format!("weight '{tok}': {e}")))?,
            None => 1.0,
        };
        edges.push((i, j, w));
    }
    Ok(edges)
}

pub(crate) fn max_asymmetry(m: &CsrMatrix<f64>) -> f64 {
    let mut worst = 0.0f64;
    for (i, j, &v) in m.triplet_iter() {
        let row = m.row(j);
        let mirror = match row.col_indices().binary_search(&i) {
            Ok(pos) => row.values()[pos],
            Err(_) => 0.0,
        };
        worst = worst.max((v - mirror).abs());
    }
    worst
}

/// Rank-one orthogonal projector `Π = v vᵀ` onto the Laplacian kernel.
#[derive(Debug, Clone)]
pub struct Projector {
    kind: LaplacianKind,
    vector: DVector<f64>,
}

impl Projector {
    pub fn kind(&self) -> LaplacianKind {
        self.kind
    }

    /// Unit kernel vector φ₁.
    pub fn vector(&self) -> &DVector<f64> {
        &self.vector
    }

    /// `Π M = v (vᵀ M)`, column by column.
    pub fn apply(&self, m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        check_rows(self.vector.len(), m.nrows())?;
        let coeffs = self.vector.transpose() * m;
        Ok(&self.vector * coeffs)
    }

    /// `(I - Π) M`
    pub fn complement(&self, m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        Ok(m - self.apply(m)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambdaMax {
    /// Power-iteration estimate, or the Gershgorin bound when not converged.
    pub value: f64,
    pub converged: bool,
    pub iterations: usize,
}

impl LambdaMax {
    /// Estimate scaled by [`LAMBDA_MAX_SAFETY`], never above the Gershgorin bound
    /// unless the estimate itself is.
    pub fn with_safety(&self, gershgorin: f64) -> f64 {
        (self.value * LAMBDA_MAX_SAFETY).min(gershgorin.max(self.value))
    }
}

/// Gershgorin upper bound on the spectral radius of `l`.
pub fn gershgorin_bound(l: &CsrMatrix<f64>) -> f64 {
    l.row_iter()
        .map(|row| row.values().iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

const POWER_ITERATION_MAX: usize = 20_000;

/// Largest eigenvalue of a symmetric PSD matrix by power iteration from a
/// fixed pseudo-random start. Stops once successive Rayleigh quotients agree
/// to `tol` relative; falls back to the Gershgorin bound otherwise.
pub fn lambda_max(l: &CsrMatrix<f64>, tol: f64) -> LambdaMax {
    let n = l.nrows();
    if n == 0 {
        return LambdaMax { value: 0.0, converged: true, iterations: 0 };
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x9e37_79b9);
    let mut v = DMatrix::from_fn(n, 1, |_, _| rng.random_range(-1.0..1.0));
    v /= v.norm();
    let mut rho = 0.0;
    for it in 1..=POWER_ITERATION_MAX {
        let w = l * &v;
        let next = v.dot(&w);
        let norm = w.norm();
        if norm == 0.0 {
            return LambdaMax { value: 0.0, converged: true, iterations: it };
        }
        v = w / norm;
        if it > 1 && (next - rho).abs() <= tol * next.abs() {
            // Rayleigh quotients increase toward λ_max; one more step of
            // residual gives a cheap upper correction.
            let residual = (l * &v - &v * v.dot(&(l * &v))).norm();
            let value = next.max(rho) + residual.min(tol * next.abs());
            return LambdaMax { value, converged: true, iterations: it };
        }
        rho = next;
    }
    log::warn!("power iteration did not converge; using the Gershgorin bound");
    LambdaMax {
        value: gershgorin_bound(l),
        converged: false,
        iterations: POWER_ITERATION_MAX,
    }
}

/// λ_max with the safety margin applied, ready for Chebyshev mapping.
pub fn chebyshev_bound(l: &CsrMatrix<f64>) -> f64 {
    lambda_max(l, 1e-8).with_safety(gershgorin_bound(l))
}
