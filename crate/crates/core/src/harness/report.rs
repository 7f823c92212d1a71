//! Results document (JSON) and the aligned text table.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::experiment::{CellResult, Comparison, DatasetConfig, ExperimentConfig, ExperimentResults, Method};
use crate::error::Result;

pub const SCHEMA_VERSION: u32 = 1;

/// A published mean (and SE when known) to compare a cell against.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferenceValue {
    pub s: f64,
    pub labels: usize,
    pub method: Method,
    pub mean: f64,
    #[serde(default)]
    pub se: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultsDocument {
    pub schema_version: u32,
    pub generator: String,
    #[serde(default)]
    pub config: Option<ExperimentConfig>,
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
    #[serde(default)]
    pub cells: Vec<CellResult>,
    #[serde(default)]
    pub comparisons: Vec<Comparison>,
    #[serde(default)]
    pub connected_trials: Option<usize>,
    #[serde(default)]
    pub reference: Vec<ReferenceValue>,
}

impl Default for ResultsDocument {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            generator: concat!("fracheat ", env!("CARGO_PKG_VERSION")).into(),
            config: None,
            metadata: BTreeMap::new(),
            cells: Vec::new(),
            comparisons: Vec::new(),
            connected_trials: None,
            reference: Vec::new(),
        }
    }
}

impl ResultsDocument {
    pub fn new(config: &ExperimentConfig, results: ExperimentResults, reference: Vec<ReferenceValue>) -> Self {
        let mut metadata = BTreeMap::new();
        let labels = if config.labels_total { "total labeled nodes" } else { "labeled nodes per class" };
        metadata.insert("labels".into(), labels.into());
        let graph = match &config.dataset {
            DatasetConfig::TwoMoon(m) => format!(
                "two-moon n={} noise={}, symmetrized {}-NN graph, weights exp(-d^2/2 sigma^2), \
                 sigma = {} x mean kNN distance",
                m.n, m.noise, m.k, m.sigma_scale
            ),
            DatasetConfig::Cora { .. } => "Cora citation graph, unweighted, undirected".into(),
            DatasetConfig::Planted { n, classes, p_in, p_out, .. } => {
                format!("planted partition n={n} classes={classes} p_in={p_in} p_out={p_out}")
            }
        };
        metadata.insert("graph".into(), graph);
        if !results.comparisons.is_empty() {
            metadata.insert(
                "post_hoc".into(),
                "Bonferroni-corrected pairwise pooled t-tests (substituted for Tukey HSD)".into(),
            );
        }
        if config.cells.iter().any(|c| c.times.len() > 1) {
            metadata.insert("time_selection".into(), "per trial, the listed time with best validation accuracy".into());
        }
        if config.methods.contains(&Method::SelfTrain) {
            metadata.insert("self_train".into(), "cell time split evenly over t_max exponential steps".into());
        }
        Self {
            config: Some(config.clone()),
            metadata,
            cells: results.cells,
            comparisons: results.comparisons,
            connected_trials: Some(results.connected_trials),
            reference,
            ..Self::default()
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("results document is always serializable")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json() + "\n")?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn reference_for(&self, s: f64, labels: usize, method: Method) -> Option<&ReferenceValue> {
        self.reference.iter().find(|r| r.s == s && r.labels == labels && r.method == method)
    }

    /// One row per (s, labels), one column per method, `mean ± SE`, with the
    /// reference mean in brackets when there is one.
    pub fn text_table(&self) -> String {
        let methods: BTreeSet<Method> = self.cells.iter().map(|c| c.method).collect();
        let mut rows: Vec<(f64, usize)> = Vec::new();
        for c in &self.cells {
            if !rows.contains(&(c.s, c.labels)) {
                rows.push((c.s, c.labels));
            }
        }
        let mut table = vec![
            std::iter::once("s".to_string())
                .chain(std::iter::once("labels".to_string()))
                .chain(methods.iter().map(|m| m.to_string()))
                .collect::<Vec<_>>(),
        ];
        for &(s, labels) in &rows {
            let mut line = vec![format!("{s}"), labels.to_string()];
            for &m in &methods {
                let cell = self.cells.iter().find(|c| c.s == s && c.labels == labels && c.method == m);
                let mut text = match cell {
                    Some(c) if c.stats.se_defined => format!("{:.3} ± {:.3}", c.stats.mean, c.stats.se),
                    Some(c) => format!("{:.3} ± n/a", c.stats.mean),
                    None => "-".into(),
                };
                if let Some(r) = self.reference_for(s, labels, m) {
                    let _ = write!(text, " [{:.3}]", r.mean);
                }
                line.push(text);
            }
            table.push(line);
        }
        let widths: Vec<usize> = (0..table[0].len())
            .map(|j| table.iter().map(|r| r[j].chars().count()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for (k, row) in table.iter().enumerate() {
            let cells: Vec<String> = row
                .iter()
                .zip(&widths)
                .map(|(c, &w)| format!("{c}{}", " ".repeat(w - c.chars().count())))
                .collect();
            out.push_str(cells.join("  ").trim_end());
            out.push('\n');
            if k == 0 {
                out.push_str(&widths.iter().map(|&w| "-".repeat(w)).collect::<Vec<_>>().join("  "));
                out.push('\n');
            }
        }
        for c in &self.comparisons {
            let _ = writeln!(
                out,
                "s={} labels={}: ANOVA F({}, {}) = {:.3}, p = {:.3}",
                c.s, c.labels, c.anova.df_between, c.anova.df_within, c.anova.f, c.anova.p
            );
        }
        out
    }
}
