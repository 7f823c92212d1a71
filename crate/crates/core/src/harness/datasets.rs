//! Two-Moon generator, kNN graphs, the Cora loader and a planted-partition
//! stand-in for citation graphs.

use std::collections::{BTreeSet, HashMap};
use std::io::BufRead;
use std::path::Path;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;

pub const CORA_NODES: usize = 2708;
pub const CORA_EDGES: usize = 5278;
pub const CORA_CLASSES: usize = 7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TwoMoonConfig {
    pub n: usize,
    pub noise: f64,
    pub seed: u64,
    /// Neighbours per node before symmetrization.
    pub k: usize,
    /// Bandwidth as a multiple of the mean kNN distance.
    pub sigma_scale: f64,
}

impl Default for TwoMoonConfig {
    fn default() -> Self {
        Self { n: 1000, noise: 0.15, seed: 0, k: 10, sigma_scale: 1.0 }
    }
}

#[derive(Debug, Clone)]
pub struct TwoMoon {
    pub points: DMatrix<f64>,
    pub labels: Vec<usize>,
    pub graph: Graph,
    pub sigma: f64,
}

/// Upper arc `(cos θ, sin θ)` labelled 0 and lower arc
/// `(1 - cos θ, 0.5 - sin θ)` labelled 1, with `θ` evenly spaced on
/// `[0, π]`, plus isotropic Gaussian noise.
pub fn two_moon_points(n: usize, noise: f64, seed: u64) -> Result<(DMatrix<f64>, Vec<usize>)> {
    if n < 4 {
        return Err(Error::InvalidArgument(format!("two-moon needs at least 4 points, got {n}")));
    }
    if !(noise >= 0.0 && noise.is_finite()) {
        return Err(Error::InvalidArgument(format!("noise must be non-negative, got {noise}")));
    }
    let upper = n / 2;
    let lower = n - upper;
    let arc = |i: usize, count: usize| std::f64::consts::PI * i as f64 / (count - 1) as f64;
    let mut points = DMatrix::zeros(n, 2);
    let mut labels = vec![0; n];
    for i in 0..upper {
        let th = arc(i, upper);
        points[(i, 0)] = th.cos();
        points[(i, 1)] = th.sin();
    }
    for i in 0..lower {
        let th = arc(i, lower);
        points[(upper + i, 0)] = 1.0 - th.cos();
        points[(upper + i, 1)] = 0.5 - th.sin();
        labels[upper + i] = 1;
    }
    if noise > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, noise).expect("noise validated above");
        for v in points.iter_mut() {
            *v += normal.sample(&mut rng);
        }
    }
    Ok((points, labels))
}

pub fn two_moon(config: &TwoMoonConfig) -> Result<TwoMoon> {
    let (points, labels) = two_moon_points(config.n, config.noise, config.seed)?;
    let (graph, sigma) = knn_graph(&points, config.k, config.sigma_scale)?;
    Ok(TwoMoon { points, labels, graph, sigma })
}

/// Symmetrized kNN graph with weights `exp(-‖x_i - x_j‖² / 2σ²)`, where
/// `σ = sigma_scale ×` mean distance to the `k` nearest neighbours.
/// Distance ties are broken by node index.
pub fn knn_graph(points: &DMatrix<f64>, k: usize, sigma_scale: f64) -> Result<(Graph, f64)> {
    let n = points.nrows();
    if k == 0 || k >= n {
        return Err(Error::InvalidArgument(format!("k = {k} must lie in 1..{n}")));
    }
    if !(sigma_scale > 0.0) {
        return Err(Error::InvalidArgument(format!("bandwidth scale must be positive, got {sigma_scale}")));
    }
    let mut neighbours: Vec<Vec<(usize, f64)>> = Vec::with_capacity(n);
    let mut total = 0.0;
    for i in 0..n {
        let mut dist: Vec<(usize, f64)> = (0..n)
            .filter(|&j| j != i)
            .map(|j| (j, (points.row(i) - points.row(j)).norm()))
            .collect();
        dist.select_nth_unstable_by(k - 1, |a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        dist.truncate(k);
        total += dist.iter().map(|d| d.1).sum::<f64>();
        neighbours.push(dist);
    }
    let sigma = (sigma_scale * total / (n * k) as f64).max(f64::MIN_POSITIVE);
    let mut pairs = BTreeSet::new();
    let mut edges = Vec::new();
    for (i, list) in neighbours.iter().enumerate() {
        for &(j, d) in list {
            if pairs.insert((i.min(j), i.max(j))) {
                // Coincident points still get a positive weight.
                let w = (-d * d / (2.0 * sigma * sigma)).exp().max(f64::MIN_POSITIVE);
                edges.push((i, j, w));
            }
        }
    }
    Ok((Graph::from_edges(n, &edges)?, sigma))
}

/// A citation graph with class labels.
#[derive(Debug, Clone)]
pub struct LabeledGraph {
    pub graph: Graph,
    pub labels: Vec<usize>,
    pub class_names: Vec<String>,
}

impl LabeledGraph {
    pub fn classes(&self) -> usize {
        self.class_names.len()
    }
}

/// Loads `cora.content` (`id features… class`) and `cora.cites`
/// (`cited citing`). Node order follows the content file, class indices the
/// sorted class names. Citations are undirected and deduplicated.
pub fn load_cora(content_path: impl AsRef<Path>, cites_path: impl AsRef<Path>) -> Result<LabeledGraph> {
    let content_path = content_path.as_ref();
    let cites_path = cites_path.as_ref();
    let mut ids = HashMap::new();
    let mut raw_labels = Vec::new();
    let content = std::io::BufReader::new(std::fs::File::open(content_path)?);
    for (lineno, line) in content.lines().enumerate() {
        let line = line?;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if fields.len() < 2 {
            return Err(Error::Parse {
                path: content_path.display().to_string(),
                line: lineno + 1,
                msg: "expected an id and a class label".into(),
            });
        }
        let id = fields[0].to_string();
        if ids.insert(id.clone(), raw_labels.len()).is_some() {
            return Err(Error::Parse {
                path: content_path.display().to_string(),
                line: lineno + 1,
                msg: format!("duplicate paper id {id}"),
            });
        }
        raw_labels.push(fields[fields.len() - 1].to_string());
    }
    let class_names: Vec<String> = raw_labels.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect();
    let labels: Vec<usize> = raw_labels
        .iter()
        .map(|c| class_names.binary_search(c).expect("class collected above"))
        .collect();

    let mut pairs = BTreeSet::new();
    let (mut unknown, mut self_cites) = (0usize, 0usize);
    let cites = std::io::BufReader::new(std::fs::File::open(cites_path)?);
    for (lineno, line) in cites.lines().enumerate() {
        let line = line?;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if fields.len() != 2 {
            return Err(Error::Parse {
                path: cites_path.display().to_string(),
                line: lineno + 1,
                msg: format!("expected 'cited citing', found {} fields", fields.len()),
            });
        }
        match (ids.get(fields[0]), ids.get(fields[1])) {
            (Some(&a), Some(&b)) if a == b => self_cites += 1,
            (Some(&a), Some(&b)) => {
                pairs.insert((a.min(b), a.max(b)));
            }
            _ => unknown += 1,
        }
    }
    if unknown > 0 {
        log::warn!("{unknown} citations reference papers missing from the content file");
    }
    if self_cites > 0 {
        log::warn!("{self_cites} self-citations dropped");
    }
    let n = labels.len();
    let edges: Vec<(usize, usize, f64)> = pairs.iter().map(|&(a, b)| (a, b, 1.0)).collect();
    let graph = Graph::from_edges(n, &edges)?;
    for (what, found, expected) in [
        ("nodes", n, CORA_NODES),
        ("undirected edges", graph.edge_count(), CORA_EDGES),
        ("classes", class_names.len(), CORA_CLASSES),
    ] {
        if found != expected {
            log::warn!("Cora has {found} {what}, expected {expected}");
        }
    }
    Ok(LabeledGraph { graph, labels, class_names })
}

/// Looks for `cora.content` and `cora.cites` in `dir`.
pub fn load_cora_dir(dir: impl AsRef<Path>) -> Result<LabeledGraph> {
    let dir = dir.as_ref();
    load_cora(dir.join("cora.content"), dir.join("cora.cites"))
}

/// Stochastic block model with equal blocks: edges inside a block with
/// probability `p_in`, across blocks with `p_out`. Isolated nodes are
/// attached to a random member of their own block so every node has degree
/// at least one.
pub fn planted_partition(n: usize, classes: usize, p_in: f64, p_out: f64, seed: u64) -> Result<LabeledGraph> {
    if classes == 0 || n < 2 * classes {
        return Err(Error::InvalidArgument(format!("need at least two nodes per class ({n} nodes, {classes} classes)")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels: Vec<usize> = (0..n).map(|i| i * classes / n).collect();
    let mut edges = Vec::new();
    let mut degree = vec![0usize; n];
    for i in 0..n {
        for j in i + 1..n {
            let p = if labels[i] == labels[j] { p_in } else { p_out };
            if rng.random::<f64>() < p {
                edges.push((i, j, 1.0));
                degree[i] += 1;
                degree[j] += 1;
            }
        }
    }
    for i in 0..n {
        if degree[i] == 0 {
            let block: Vec<usize> = (0..n).filter(|&j| j != i && labels[j] == labels[i]).collect();
            let j = block[rng.random_range(0..block.len())];
            edges.push((i, j, 1.0));
            degree[i] += 1;
            degree[j] += 1;
        }
    }
    let graph = Graph::from_edges(n, &edges)?;
    let class_names = (0..classes).map(|c| format!("class_{c}")).collect();
    Ok(LabeledGraph { graph, labels, class_names })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn noiseless_points_lie_on_arcs() {
        let (p, labels) = two_moon_points(4, 0.0, 1).unwrap();
        assert_eq!(labels, vec![0, 0, 1, 1]);
        let expected = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, -1.0, 0.0, 0.0, 0.5, 2.0, 0.5]);
        assert_abs_diff_eq!(p, expected, epsilon = 1e-15);
    }

    #[test]
    fn balanced_and_deterministic() {
        let cfg = TwoMoonConfig { n: 200, seed: 5, ..Default::default() };
        let a = two_moon(&cfg).unwrap();
        let b = two_moon(&cfg).unwrap();
        assert_eq!(a.labels.iter().filter(|&&l| l == 0).count(), 100);
        assert_eq!(a.points, b.points);
        assert_eq!(a.graph.to_dense(), b.graph.to_dense());
    }

    #[test]
    fn knn_graph_is_symmetric_with_min_degree_k() {
        let (p, _) = two_moon_points(60, 0.1, 3).unwrap();
        let (g, sigma) = knn_graph(&p, 5, 1.0).unwrap();
        assert!(sigma > 0.0);
        for i in 0..g.n() {
            assert!(g.neighbors(i).count() >= 5);
        }
        let w = g.to_dense();
        assert_eq!(w, w.transpose());
    }

    #[test]
    fn planted_partition_has_no_isolated_nodes() {
        let data = planted_partition(70, 7, 0.3, 0.01, 9).unwrap();
        assert_eq!(data.classes(), 7);
        assert!(data.graph.degrees().iter().all(|&d| d > 0.0));
    }

    #[test]
    fn cora_loader_dedupes_and_maps_ids() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(
            dir.path().join("cora.content"),
            "31336\t0\t1\tNeural_Networks\n1061127\t1\t0\tRule_Learning\n1106406\t0\t0\tNeural_Networks\n",
        )
        .unwrap();
        std::fs::write(dir.path().join("cora.cites"), "31336\t1061127\n1061127\t31336\n1106406\t31336\n").unwrap();
        let data = load_cora_dir(dir.path()).unwrap();
        assert_eq!(data.graph.n(), 3);
        assert_eq!(data.graph.edge_count(), 2);
        assert_eq!(data.labels, vec![0, 1, 0]);
        assert_eq!(data.class_names, vec!["Neural_Networks", "Rule_Learning"]);

        std::fs::write(dir.path().join("cora.cites"), "31336\n").unwrap();
        assert!(matches!(load_cora_dir(dir.path()), Err(Error::Parse { line: 1, .. })));
    }
}
