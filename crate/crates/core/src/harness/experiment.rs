//! Seeded multi-trial runs over (s, labels) cells and propagation methods.

use std::fmt;
use std::path::PathBuf;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::datasets::{load_cora_dir, planted_partition, two_moon, LabeledGraph, TwoMoonConfig};
use super::split::{accuracy, sample_split_counts};
use super::stats::{anova_oneway, pairwise_bonferroni, Anova, PairwiseTest, TrialStats};
use crate::error::{Error, Result};
use crate::graph::LaplacianKind;
use crate::kernel::{KernelOperator, Strategy};
use crate::selftrain::{self_train_from, ConfidenceKind, SelfTrainConfig, ThetaSchedule};
use crate::solver::{build_source, one_hot, predict, run_scheme, Scheme, SourceVariant};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetConfig {
    /// Regenerated every trial from the trial seed; `seed` is ignored.
    TwoMoon(TwoMoonConfig),
    /// Directory holding `cora.content` and `cora.cites`.
    Cora { dir: PathBuf },
    Planted { n: usize, classes: usize, p_in: f64, p_out: f64, seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Scheme1,
    Scheme2,
    Scheme3,
    SelfTrain,
}

impl Method {
    pub fn scheme(self) -> Option<Scheme> {
        match self {
            Method::Scheme1 => Some(Scheme::Diffusion),
            Method::Scheme2 => Some(Scheme::ScaledSource),
            Method::Scheme3 => Some(Scheme::DiffusionWithSource),
            Method::SelfTrain => None,
        }
    }
}

impl From<Scheme> for Method {
    fn from(s: Scheme) -> Self {
        match s {
            Scheme::Diffusion => Method::Scheme1,
            Scheme::ScaledSource => Method::Scheme2,
            Scheme::DiffusionWithSource => Method::Scheme3,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Scheme1 => "scheme 1",
            Method::Scheme2 => "scheme 2",
            Method::Scheme3 => "scheme 3",
            Method::SelfTrain => "self-train",
        })
    }
}

/// One (s, labels) setting. With several `times` the one with the best
/// validation accuracy is used, per trial and method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub s: f64,
    pub labels: usize,
    pub times: Vec<f64>,
}

/// Self-training arm settings. The cell's `t` is split into `t_max`
/// exponential steps, so with no selections the arm equals scheme 3.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelfTrainArm {
    pub theta0: f64,
    pub t_max: usize,
    pub schedule: ThetaSchedule,
    pub confidence: ConfidenceKind,
}

impl Default for SelfTrainArm {
    fn default() -> Self {
        Self { theta0: 0.4, t_max: 10, schedule: ThetaSchedule::Constant, confidence: ConfidenceKind::Base }
    }
}

fn default_strategy() -> Strategy {
    Strategy::SpectralExact
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: String,
    pub dataset: DatasetConfig,
    pub laplacian: LaplacianKind,
    #[serde(default = "default_strategy")]
    pub strategy: Strategy,
    pub methods: Vec<Method>,
    pub cells: Vec<Cell>,
    pub trials: usize,
    pub seed: u64,
    /// Read `labels` as a total budget spread over the classes instead of a
    /// per-class count.
    #[serde(default)]
    pub labels_total: bool,
    #[serde(default)]
    pub validation: usize,
    /// Test set size; `None` uses every node outside the labeled and
    /// validation sets.
    #[serde(default)]
    pub test: Option<usize>,
    #[serde(default)]
    pub self_train: Option<SelfTrainArm>,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if self.methods.is_empty() || self.cells.is_empty() {
            return bad("an experiment needs at least one method and one cell".into());
        }
        if self.methods.contains(&Method::SelfTrain) && self.self_train.is_none() {
            return bad("the self-train method needs a self_train section".into());
        }
        for cell in &self.cells {
            crate::error::check_order(cell.s)?;
            if cell.labels == 0 {
                return bad("labels must be at least 1".into());
            }
            if cell.times.is_empty() || cell.times.iter().any(|t| !(*t >= 0.0 && t.is_finite())) {
                return bad(format!("cell s={} labels={} needs finite non-negative times", cell.s, cell.labels));
            }
            if cell.times.len() > 1 && self.validation == 0 {
                return bad("choosing among several times needs a validation set".into());
            }
        }
        if let DatasetConfig::Cora { dir } = &self.dataset {
            for file in ["cora.content", "cora.cites"] {
                if !dir.join(file).is_file() {
                    return Err(Error::Io(std::io::Error::new(
                        std::io::ErrorKind::NotFound,
                        format!("{} not found", dir.join(file).display()),
                    )));
                }
            }
        }
        Ok(())
    }
}

/// SplitMix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn trial_seed(master: u64, trial: usize) -> u64 {
    splitmix64(master ^ splitmix64(trial as u64))
}

/// Label counts per class for a cell.
fn label_counts(labels: usize, classes: usize, total: bool) -> Vec<usize> {
    if total {
        (0..classes).map(|c| labels / classes + usize::from(c < labels % classes)).collect()
    } else {
        vec![labels; classes]
    }
}

struct Prepared {
    data: LabeledGraph,
    op: KernelOperator,
}

fn prepare(config: &ExperimentConfig, seed: u64) -> Result<Prepared> {
    let data = match &config.dataset {
        DatasetConfig::TwoMoon(moon) => {
            let m = two_moon(&TwoMoonConfig { seed, ..*moon })?;
            LabeledGraph { graph: m.graph, labels: m.labels, class_names: vec!["upper".into(), "lower".into()] }
        }
        DatasetConfig::Cora { dir } => load_cora_dir(dir)?,
        &DatasetConfig::Planted { n, classes, p_in, p_out, seed } => planted_partition(n, classes, p_in, p_out, seed)?,
    };
    let op = KernelOperator::new(&data.graph, config.laplacian, config.strategy)?;
    Ok(Prepared { data, op })
}

/// Accuracies of one trial, indexed `[cell][method]`, with the chosen times.
#[derive(Debug, Clone)]
struct TrialOutput {
    accuracy: Vec<Vec<f64>>,
    chosen: Vec<Vec<f64>>,
    connected: bool,
}

fn run_one(config: &ExperimentConfig, shared: Option<&Prepared>, trial: usize) -> Result<TrialOutput> {
    let seed = trial_seed(config.seed, trial);
    let owned;
    let prep = match shared {
        Some(p) => p,
        None => {
            owned = prepare(config, seed)?;
            &owned
        }
    };
    let LabeledGraph { graph, labels, .. } = &prep.data;
    let classes = prep.data.classes();
    let op = &prep.op;
    let mut out = TrialOutput { accuracy: Vec::new(), chosen: Vec::new(), connected: graph.is_connected() };
    for cell in &config.cells {
        // Every s and method with the same label budget sees the same split.
        let counts = label_counts(cell.labels, classes, config.labels_total);
        let split = sample_split_counts(
            labels,
            &counts,
            config.validation,
            config.test,
            splitmix64(seed ^ (cell.labels as u64).wrapping_mul(0x0100_0000_01b3)),
        )?;
        let u0 = one_hot(labels, &split.labeled, classes)?;
        let mut accs = Vec::with_capacity(config.methods.len());
        let mut chosen = Vec::with_capacity(config.methods.len());
        for &method in &config.methods {
            let mut best: Option<(f64, f64, f64)> = None;
            for &t in &cell.times {
                let pred = match method.scheme() {
                    Some(scheme) => predict(&run_scheme(op, scheme, cell.s, t, &u0, &split.labeled, graph.degrees())?),
                    None => {
                        let arm = config.self_train.expect("validated");
                        let f0 = build_source(&u0, &split.labeled, SourceVariant::DegreeScaled, graph.degrees())?;
                        let st = SelfTrainConfig {
                            s: cell.s,
                            dt: t / arm.t_max as f64,
                            theta0: arm.theta0,
                            t_max: arm.t_max,
                            schedule: arm.schedule,
                            confidence: arm.confidence,
                        };
                        self_train_from(op, &u0, &f0, &split.labeled, &st, None)?.predictions()
                    }
                };
                let val = if split.validation.is_empty() { 0.0 } else { accuracy(&pred, labels, &split.validation)? };
                if best.is_none_or(|(v, _, _)| val > v) {
                    best = Some((val, t, accuracy(&pred, labels, &split.test)?));
                }
            }
            let (_, t, acc) = best.expect("cells have at least one time");
            accs.push(acc);
            chosen.push(t);
        }
        out.accuracy.push(accs);
        out.chosen.push(chosen);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub s: f64,
    pub labels: usize,
    pub method: Method,
    /// Time used in each trial.
    pub times: Vec<f64>,
    pub stats: TrialStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedPairwise {
    #[serde(rename = "method_a")]
    pub a: Method,
    #[serde(rename = "method_b")]
    pub b: Method,
    #[serde(flatten)]
    pub test: PairwiseTest,
}

/// Between-method tests within one (s, labels) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub s: f64,
    pub labels: usize,
    pub anova: Anova,
    pub pairwise: Vec<NamedPairwise>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResults {
    pub cells: Vec<CellResult>,
    pub comparisons: Vec<Comparison>,
    pub connected_trials: usize,
}

impl ExperimentResults {
    pub fn get(&self, s: f64, labels: usize, method: Method) -> Option<&CellResult> {
        self.cells.iter().find(|c| c.s == s && c.labels == labels && c.method == method)
    }
}

/// Runs every trial (on `threads` workers, all cores when `None`) and
/// aggregates per (cell, method). Results do not depend on the worker count.
pub fn run_trials(config: &ExperimentConfig, threads: Option<usize>) -> Result<ExperimentResults> {
    config.validate()?;
    let shared = match config.dataset {
        DatasetConfig::TwoMoon(_) => None,
        _ => Some(Arc::new(prepare(config, config.seed)?)),
    };
    let work = || -> Result<Vec<TrialOutput>> {
        (0..config.trials)
            .into_par_iter()
            .map(|k| run_one(config, shared.as_deref(), k))
            .collect()
    };
    let outputs = match threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::InvalidArgument(e.to_string()))?
            .install(work)?,
        None => work()?,
    };

    let mut cells = Vec::new();
    let mut comparisons = Vec::new();
    for (ci, cell) in config.cells.iter().enumerate() {
        let mut groups = Vec::new();
        for (mi, &method) in config.methods.iter().enumerate() {
            let accs: Vec<f64> = outputs.iter().map(|o| o.accuracy[ci][mi]).collect();
            let times = outputs.iter().map(|o| o.chosen[ci][mi]).collect();
            groups.push(accs.clone());
            cells.push(CellResult { s: cell.s, labels: cell.labels, method, times, stats: TrialStats::new(accs)? });
        }
        if config.methods.len() >= 2 && config.trials >= 2 {
            let refs: Vec<&[f64]> = groups.iter().map(|g| g.as_slice()).collect();
            let pairwise = pairwise_bonferroni(&refs)?
                .into_iter()
                .map(|test| NamedPairwise { a: config.methods[test.a], b: config.methods[test.b], test })
                .collect();
            comparisons.push(Comparison { s: cell.s, labels: cell.labels, anova: anova_oneway(&refs)?, pairwise });
        }
    }
    let connected_trials = outputs.iter().filter(|o| o.connected).count();
    Ok(ExperimentResults { cells, comparisons, connected_trials })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ExperimentConfig {
        ExperimentConfig {
            name: "small".into(),
            dataset: DatasetConfig::TwoMoon(TwoMoonConfig { n: 120, ..Default::default() }),
            laplacian: LaplacianKind::SymNormalized,
            strategy: Strategy::SpectralExact,
            methods: vec![Method::Scheme1, Method::Scheme2, Method::Scheme3],
            cells: vec![Cell { s: 0.5, labels: 2, times: vec![1.0] }],
            trials: 4,
            seed: 7,
            labels_total: false,
            validation: 0,
            test: None,
            self_train: None,
        }
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let cfg = small();
        let a = run_trials(&cfg, Some(1)).unwrap();
        let b = run_trials(&cfg, Some(3)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.cells.len(), 3);
        assert_eq!(a.comparisons.len(), 1);
        assert!(a.cells.iter().all(|c| c.stats.n_trials == 4));
    }

    #[test]
    fn label_budget_spreading() {
        assert_eq!(label_counts(3, 2, false), vec![3, 3]);
        assert_eq!(label_counts(3, 2, true), vec![2, 1]);
        assert_eq!(label_counts(1, 7, true), vec![1, 0, 0, 0, 0, 0, 0]);
    }

    #[test]
    fn validation_errors() {
        let mut cfg = small();
        cfg.cells[0].times = vec![1.0, 2.0];
        assert!(cfg.validate().is_err());
        let mut cfg = small();
        cfg.methods.push(Method::SelfTrain);
        assert!(cfg.validate().is_err());
        let mut cfg = small();
        cfg.dataset = DatasetConfig::Cora { dir: "/nonexistent".into() };
        assert!(matches!(cfg.validate(), Err(Error::Io(_))));
    }

    #[test]
    fn seeds_differ_per_trial() {
        assert_ne!(trial_seed(1, 0), trial_seed(1, 1));
        assert_ne!(trial_seed(1, 0), trial_seed(2, 0));
    }
}
