//! Graph refinement from externally supplied node embeddings and attention
//! weights, followed by re-diffusion on the refined graph.

use std::collections::BTreeSet;
use std::io::BufRead;
use std::path::Path;

use nalgebra::DMatrix;
use nalgebra_sparse::{CooMatrix, CsrMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_rows, Error, Result};
use crate::graph::{parse_edge_list, Graph, LaplacianKind};
use crate::kernel::{KernelOperator, Strategy};
use crate::selftrain::{self_train_from, SelfTrainConfig};
use crate::solver::{build_source, one_hot, predict, solve_closed_form, SourceVariant};
use crate::spectral::DENSE_LIMIT;

/// Node embeddings with optional averaged attention weights.
#[derive(Debug, Clone)]
pub struct EmbeddingSet {
    z: DMatrix<f64>,
    attention: Option<CsrMatrix<f64>>,
}

impl EmbeddingSet {
    pub fn new(z: DMatrix<f64>, attention: Option<CsrMatrix<f64>>) -> Result<Self> {
        if let Some(i) = z.row_iter().position(|row| row.amax() == 0.0) {
            return Err(Error::InvalidArgument(format!("embedding row {i} is all zeros")));
        }
        if let Some(a) = &attention {
            check_rows(z.nrows(), a.nrows())?;
            if let Some((i, j, &w)) = a.triplet_iter().find(|(_, _, w)| !(0.0..=1.0).contains(*w)) {
                return Err(Error::InvalidArgument(format!("attention weight {w} on ({i}, {j}) outside [0, 1]")));
            }
        }
        Ok(Self { z, attention })
    }

    /// Reads a comma-separated embedding file (one row per node) and an
    /// optional `i j weight` attention file.
    pub fn load(embeddings: impl AsRef<Path>, attention: Option<&Path>) -> Result<Self> {
        let z = read_embeddings(embeddings)?;
        let attention = match attention {
            Some(path) => Some(read_attention(path, z.nrows())?),
            None => None,
        };
        Self::new(z, attention)
    }

    pub fn z(&self) -> &DMatrix<f64> {
        &self.z
    }

    pub fn attention(&self) -> Option<&CsrMatrix<f64>> {
        self.attention.as_ref()
    }

    pub fn n(&self) -> usize {
        self.z.nrows()
    }
}

pub fn read_embeddings(path: impl AsRef<Path>) -> Result<DMatrix<f64>> {
    let path = path.as_ref();
    let source = path.display().to_string();
    let reader = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let row = trimmed
            .split(',')
            .map(|tok| tok.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Parse { path: source.clone(), line: lineno + 1, msg: e.to_string() })?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::Parse {
                    path: source,
                    line: lineno + 1,
                    msg: format!("expected {} columns, found {}", first.len(), row.len()),
                });
            }
        }
        rows.push(row);
    }
    let d = rows.first().map_or(0, Vec::len);
    Ok(DMatrix::from_row_iterator(rows.len(), d, rows.into_iter().flatten()))
}

/// Attention edges; entries given for both directions are averaged.
pub fn read_attention(path: &Path, n: usize) -> Result<CsrMatrix<f64>> {
    let reader = std::io::BufReader::new(std::fs::File::open(path)?);
    let edges = parse_edge_list(reader, &path.display().to_string())?;
    let mut sums = std::collections::BTreeMap::<(usize, usize), (f64, usize)>::new();
    for (i, j, w) in edges {
        for index in [i, j] {
            if index >= n {
                return Err(Error::IndexOutOfRange { index, n });
            }
        }
        let entry = sums.entry((i.min(j), i.max(j))).or_insert((0.0, 0));
        entry.0 += w;
        entry.1 += 1;
    }
    let mut coo = CooMatrix::new(n, n);
    for ((i, j), (sum, count)) in sums {
        let w = sum / count as f64;
        coo.push(i, j, w);
        if i != j {
            coo.push(j, i, w);
        }
    }
    Ok(CsrMatrix::from(&coo))
}

/// `S_ij = z_iᵀ z_j / (‖z_i‖ ‖z_j‖)`
pub fn cosine_similarity(z: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let mut unit = z.clone();
    for (i, mut row) in unit.row_iter_mut().enumerate() {
        let norm = row.norm();
        if norm == 0.0 {
            return Err(Error::InvalidArgument(format!("embedding row {i} is all zeros")));
        }
        row /= norm;
    }
    let mut s = &unit * unit.transpose();
    for i in 0..s.nrows() {
        s[(i, i)] = 1.0;
        for j in 0..i {
            let v = s[(i, j)].clamp(-1.0, 1.0);
            s[(i, j)] = v;
            s[(j, i)] = v;
        }
    }
    Ok(s)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bandwidth {
    Fixed(f64),
    /// Median distance over 1000 node pairs drawn with this seed.
    Median { seed: u64 },
}

pub const BANDWIDTH_SAMPLES: usize = 1000;

/// Median Euclidean distance over `samples` random pairs of distinct rows.
pub fn median_pairwise_distance(z: &DMatrix<f64>, samples: usize, seed: u64) -> f64 {
    let n = z.nrows();
    if n < 2 {
        return 1.0;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut dists: Vec<f64> = (0..samples)
        .map(|_| {
            let i = rng.random_range(0..n);
            let mut j = rng.random_range(0..n - 1);
            if j >= i {
                j += 1;
            }
            (z.row(i) - z.row(j)).norm()
        })
        .collect();
    dists.sort_by(f64::total_cmp);
    let mid = dists.len() / 2;
    let median = if dists.len() % 2 == 0 { 0.5 * (dists[mid - 1] + dists[mid]) } else { dists[mid] };
    if median > 0.0 {
        median
    } else {
        1.0
    }
}

/// `exp(-‖z_i - z_j‖² / 2σ²)` and the bandwidth used.
pub fn gaussian_embedding_similarity(z: &DMatrix<f64>, bandwidth: Bandwidth) -> Result<(DMatrix<f64>, f64)> {
    let sigma = match bandwidth {
        Bandwidth::Fixed(sigma) if sigma > 0.0 && sigma.is_finite() => sigma,
        Bandwidth::Fixed(sigma) => {
            return Err(Error::InvalidArgument(format!("bandwidth must be positive, got {sigma}")))
        }
        Bandwidth::Median { seed } => median_pairwise_distance(z, BANDWIDTH_SAMPLES, seed),
    };
    let n = z.nrows();
    let mut s = DMatrix::from_element(n, n, 1.0);
    for i in 0..n {
        for j in 0..i {
            let d2 = (z.row(i) - z.row(j)).norm_squared();
            let v = (-d2 / (2.0 * sigma * sigma)).exp();
            s[(i, j)] = v;
            s[(j, i)] = v;
        }
    }
    Ok((s, sigma))
}

/// `exp(-d_G(i, j))` with unweighted hop distance; unreachable pairs are 0.
pub fn structural_similarity(g: &Graph) -> DMatrix<f64> {
    let n = g.n();
    let mut s = DMatrix::zeros(n, n);
    for i in 0..n {
        for (j, d) in g.hop_distances(i).into_iter().enumerate() {
            if let Some(d) = d {
                s[(i, j)] = (-(d as f64)).exp();
            }
        }
    }
    s
}

/// `w₁ S_cos + w₂ S_heat + w₃ S_struct`
pub fn combine_similarities(
    weights: [f64; 3],
    s_cos: &DMatrix<f64>,
    s_heat: &DMatrix<f64>,
    s_struct: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    check_weights(weights)?;
    check_rows(s_cos.nrows(), s_heat.nrows())?;
    check_rows(s_cos.nrows(), s_struct.nrows())?;
    Ok(s_cos * weights[0] + s_heat * weights[1] + s_struct * weights[2])
}

/// `α₁ S_embed + α₂ ᾱ + α₃ W`
pub fn attention_weights(
    alpha: [f64; 3],
    s_embed: &DMatrix<f64>,
    attention: Option<&CsrMatrix<f64>>,
    g: &Graph,
) -> Result<DMatrix<f64>> {
    check_weights(alpha)?;
    check_rows(g.n(), s_embed.nrows())?;
    let mut w = s_embed * alpha[0];
    if let Some(a) = attention {
        check_rows(g.n(), a.nrows())?;
        for (i, j, &v) in a.triplet_iter() {
            w[(i, j)] += alpha[1] * v;
        }
    }
    for (i, j, v) in g.edges() {
        w[(i, j)] += alpha[2] * v;
        w[(j, i)] += alpha[2] * v;
    }
    Ok(w)
}

fn check_weights(w: [f64; 3]) -> Result<()> {
    if w.iter().any(|&x| !(x >= 0.0 && x.is_finite())) {
        return Err(Error::InvalidArgument(format!("combination weights must be non-negative, got {w:?}")));
    }
    Ok(())
}

/// Keeps `M_ij` when it exceeds `epsilon` or `(i, j)` is an edge of `keep`.
/// Non-positive values are never stored.
pub fn threshold_sparsify(m: &DMatrix<f64>, epsilon: f64, keep: Option<&Graph>) -> Result<CsrMatrix<f64>> {
    let n = m.nrows();
    if let Some(g) = keep {
        check_rows(n, g.n())?;
    }
    let mut coo = CooMatrix::new(n, m.ncols());
    for i in 0..n {
        for j in 0..m.ncols() {
            let v = m[(i, j)];
            let edge = keep.is_some_and(|g| i != j && g.has_edge(i, j));
            if v > 0.0 && (v > epsilon || edge) {
                coo.push(i, j, v);
            }
        }
    }
    Ok(CsrMatrix::from(&coo))
}

/// `|N_struct(i) △ N_embed(i)|` with the `k` heaviest graph neighbours and
/// the `k` nearest nodes by cosine similarity (ties by node index).
pub fn anomaly_scores(g: &Graph, z: &DMatrix<f64>, k: usize) -> Result<Vec<usize>> {
    if k == 0 {
        return Err(Error::InvalidArgument("neighbourhood size must be at least 1".into()));
    }
    check_rows(g.n(), z.nrows())?;
    let cos = cosine_similarity(z)?;
    Ok((0..g.n())
        .map(|i| {
            let mut structural: Vec<(usize, f64)> = g.neighbors(i).collect();
            structural.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            let structural: BTreeSet<usize> = structural.into_iter().take(k).map(|(j, _)| j).collect();

            let mut others: Vec<usize> = (0..g.n()).filter(|&j| j != i).collect();
            others.sort_by(|&a, &b| cos[(i, b)].total_cmp(&cos[(i, a)]).then(a.cmp(&b)));
            let embedded: BTreeSet<usize> = others.into_iter().take(k).collect();
            structural.symmetric_difference(&embedded).count()
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "combine", rename_all = "snake_case")]
pub enum Combiner {
    /// `α₁ S_embed + α₂ ᾱ + α₃ W` (weights sum to one).
    Gat { alpha: [f64; 3] },
    /// `w₁ S_cos + w₂ S_heat + w₃ S_struct`, with `S_heat = e^{-t_heat L^s}`
    /// of the original graph.
    Similarity { weights: [f64; 3], heat_time: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RefineConfig {
    pub combiner: Combiner,
    pub tau: f64,
    pub kind: LaplacianKind,
    pub s: f64,
    pub t: f64,
    pub source: SourceVariant,
    /// Self-training after the closed-form diffusion; `None` skips it.
    pub self_train: Option<SelfTrainConfig>,
}

#[derive(Debug, Clone)]
pub struct RefineOutcome {
    pub graph: Graph,
    pub scores: DMatrix<f64>,
    pub predictions: Vec<usize>,
    pub connected: bool,
}

/// Combined weight matrix of the refined graph, before sparsification.
pub fn refined_weights(g: &Graph, emb: &EmbeddingSet, config: &RefineConfig) -> Result<DMatrix<f64>> {
    check_rows(g.n(), emb.n())?;
    match config.combiner {
        Combiner::Gat { alpha } => {
            let sum: f64 = alpha.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidArgument(format!("alpha weights must sum to 1, got {sum}")));
            }
            attention_weights(alpha, &cosine_similarity(emb.z())?, emb.attention(), g)
        }
        Combiner::Similarity { weights, heat_time } => {
            let l = g.laplacian(config.kind)?;
            let spec = crate::spectral::SpectralDecomposition::from_sparse(&l)?;
            let heat = spec.heat_kernel(config.s, heat_time)?;
            combine_similarities(weights, &cosine_similarity(emb.z())?, &heat, &structural_similarity(g))
        }
    }
}

/// Builds the refined graph, diffuses the labeled rows on it in closed form
/// and optionally runs self-training from there.
pub fn refine_and_diffuse(
    g: &Graph,
    emb: &EmbeddingSet,
    config: &RefineConfig,
    labels: &[usize],
    labeled: &[usize],
    classes: usize,
) -> Result<RefineOutcome> {
    check_rows(g.n(), labels.len())?;
    let weights = refined_weights(g, emb, config)?;
    let sparse = threshold_sparsify(&weights, config.tau, Some(g))?;
    let refined = Graph::from_weights(&sparse)?;
    let connected = refined.is_connected();
    if !connected {
        log::warn!("refined graph is disconnected; steady-state checks are skipped");
    }
    let strategy = if refined.n() <= DENSE_LIMIT {
        Strategy::SpectralExact
    } else {
        Strategy::Chebyshev { degree: None, tolerance: None }
    };
    let op = KernelOperator::new(&refined, config.kind, strategy)?;
    let u0 = one_hot(labels, labeled, classes)?;
    let f = build_source(&u0, labeled, config.source, refined.degrees())?;
    let mut scores = solve_closed_form(&op, config.s, &u0, &f, config.t)?;
    if let Some(st) = &config.self_train {
        scores = self_train_from(&op, &scores, &f, labeled, st, None)?.u;
    }
    let predictions = predict(&scores);
    Ok(RefineOutcome { graph: refined, scores, predictions, connected })
}
