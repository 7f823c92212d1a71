//! Confidence-driven self-training on top of the exponential stepper.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_order, check_rows, Error, Result};
use crate::kernel::KernelOperator;
use crate::solver::{predict, step, StepOptions, Stepper};

pub const CONVERGENCE_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConfidenceKind {
    /// Row max minus row mean.
    Base,
    /// Base confidence plus `s` times the row entropy.
    Entropy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThetaSchedule {
    Constant,
    /// `θ_k = θ₀ (1 - k / T_max)`
    LinearDecay,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelfTrainConfig {
    pub s: f64,
    pub dt: f64,
    pub theta0: f64,
    pub t_max: usize,
    pub schedule: ThetaSchedule,
    pub confidence: ConfidenceKind,
}

impl SelfTrainConfig {
    pub fn theta(&self, k: usize) -> f64 {
        match self.schedule {
            ThetaSchedule::Constant => self.theta0,
            ThetaSchedule::LinearDecay => self.theta0 * (1.0 - k as f64 / self.t_max as f64),
        }
    }

    fn validate(&self) -> Result<()> {
        check_order(self.s)?;
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidArgument(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.theta0 > 0.0 && self.theta0 < 1.0) {
            return Err(Error::InvalidArgument(format!("theta must lie in (0, 1), got {}", self.theta0)));
        }
        if self.t_max == 0 {
            return Err(Error::InvalidArgument("t_max must be at least 1".into()));
        }
        Ok(())
    }
}

/// One line of the iteration log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub k: usize,
    pub n_labeled: usize,
    pub n_selected: usize,
    pub frobenius_delta: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub accuracy: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct SelfTrainOutcome {
    pub u: DMatrix<f64>,
    pub source: DMatrix<f64>,
    /// Final labeled set, ascending.
    pub labeled: Vec<usize>,
    pub history: Vec<IterationRecord>,
    pub converged: bool,
}

impl SelfTrainOutcome {
    pub fn predictions(&self) -> Vec<usize> {
        predict(&self.u)
    }
}

/// Rows mapped onto the probability simplex: shifted by the row minimum when
/// negative, then divided by the sum. All-zero rows become uniform.
pub fn simplex_rows(u: &DMatrix<f64>) -> DMatrix<f64> {
    let c = u.ncols();
    let mut p = u.clone();
    for mut row in p.row_iter_mut() {
        let min = row.min();
        if min < 0.0 {
            row.add_scalar_mut(-min);
        }
        let sum = row.sum();
        if sum > 0.0 {
            row /= sum;
        } else {
            row.fill(1.0 / c as f64);
        }
    }
    p
}

/// `max_j U_ij - (1/c) Σ_j U_ij` per row.
pub fn confidence(u: &DMatrix<f64>) -> DVector<f64> {
    let c = u.ncols() as f64;
    DVector::from_iterator(u.nrows(), u.row_iter().map(|row| row.max() - row.sum() / c))
}

/// Base confidence of the simplex-normalized rows plus `s` times their
/// Shannon entropy (natural log, `0 log 0 = 0`).
pub fn fractional_confidence(u: &DMatrix<f64>, s: f64) -> DVector<f64> {
    let p = simplex_rows(u);
    let base = confidence(&p);
    DVector::from_iterator(
        p.nrows(),
        p.row_iter().zip(base.iter()).map(|(row, b)| {
            let entropy: f64 = row.iter().filter(|&&x| x > 0.0).map(|&x| -x * x.ln()).sum();
            b + s * entropy
        }),
    )
}

/// Unlabeled nodes with confidence strictly above `theta`, ascending.
pub fn select_confident(conf: &DVector<f64>, theta: f64, labeled: &BTreeSet<usize>) -> Vec<usize> {
    conf.iter()
        .enumerate()
        .filter(|&(i, &c)| c > theta && !labeled.contains(&i))
        .map(|(i, _)| i)
        .collect()
}

/// Next source: labeled rows keep `F_k`, newly selected rows become
/// `U_{k+1}(i,:) - Ū_{k+1}` with the mean taken over `labeled_next`, all
/// other rows are zero.
pub fn update_source(
    f: &DMatrix<f64>,
    u_next: &DMatrix<f64>,
    selected: &[usize],
    labeled_next: &BTreeSet<usize>,
) -> Result<DMatrix<f64>> {
    check_rows(f.nrows(), u_next.nrows())?;
    let mut next = DMatrix::zeros(f.nrows(), f.ncols());
    let fresh: BTreeSet<usize> = selected.iter().copied().collect();
    for &i in labeled_next.iter().filter(|i| !fresh.contains(i)) {
        next.set_row(i, &f.row(i));
    }
    if fresh.is_empty() {
        return Ok(next);
    }
    let mut mean = DMatrix::zeros(1, f.ncols());
    for &i in labeled_next {
        mean += u_next.row(i);
    }
    mean /= labeled_next.len() as f64;
    for &i in &fresh {
        next.set_row(i, &(u_next.row(i) - &mean));
    }
    Ok(next)
}

fn score(u: &DMatrix<f64>, kind: ConfidenceKind, s: f64) -> DVector<f64> {
    match kind {
        ConfidenceKind::Base => {
            let p = simplex_rows(u);
            let ceiling = 1.0 - 1.0 / u.ncols() as f64;
            confidence(&p).map(|c| c.min(ceiling))
        }
        ConfidenceKind::Entropy => fractional_confidence(u, s),
    }
}

/// Iterates diffusion, selection and source updates until `t_max`
/// iterations or until the scores stop moving with nothing selected.
/// With `truth`, the history records accuracy over initially unlabeled nodes.
pub fn self_train(
    op: &KernelOperator,
    u0: &DMatrix<f64>,
    f0: &DMatrix<f64>,
    config: &SelfTrainConfig,
    truth: Option<&[usize]>,
) -> Result<SelfTrainOutcome> {
    let labeled: Vec<usize> = u0
        .row_iter()
        .enumerate()
        .filter(|(_, row)| row.amax() > 0.0)
        .map(|(i, _)| i)
        .collect();
    self_train_from(op, u0, f0, &labeled, config, truth)
}

/// Self-training from an arbitrary starting score matrix with an explicit
/// initial labeled set.
pub fn self_train_from(
    op: &KernelOperator,
    u0: &DMatrix<f64>,
    f0: &DMatrix<f64>,
    labeled: &[usize],
    config: &SelfTrainConfig,
    truth: Option<&[usize]>,
) -> Result<SelfTrainOutcome> {
    config.validate()?;
    check_rows(op.n(), u0.nrows())?;
    check_rows(op.n(), f0.nrows())?;
    if let Some(truth) = truth {
        check_rows(op.n(), truth.len())?;
    }
    if let Some(&i) = labeled.iter().find(|&&i| i >= op.n()) {
        return Err(Error::IndexOutOfRange { index: i, n: op.n() });
    }
    let mut labeled: BTreeSet<usize> = labeled.iter().copied().collect();
    let initial = labeled.clone();

    let mut u = u0.clone();
    let mut f = f0.clone();
    let mut history = Vec::with_capacity(config.t_max);
    let mut converged = false;
    for k in 0..config.t_max {
        let next = step(op, config.s, Stepper::ExponentialPhi, config.dt, &u, &f, StepOptions::default())?;
        let conf = score(&next, config.confidence, config.s);
        let selected = select_confident(&conf, config.theta(k), &labeled);
        labeled.extend(selected.iter().copied());
        if !selected.is_empty() {
            let centred = simplex_rows(&next);
            f = update_source(&f, &centred, &selected, &labeled)?;
        }
        let delta = (&next - &u).norm();
        u = next;
        let accuracy = truth.map(|truth| {
            let pred = predict(&u);
            let (hits, total) = (0..u.nrows())
                .filter(|i| !initial.contains(i))
                .fold((0usize, 0usize), |(h, n), i| (h + usize::from(pred[i] == truth[i]), n + 1));
            if total == 0 { 1.0 } else { hits as f64 / total as f64 }
        });
        history.push(IterationRecord {
            k: k + 1,
            n_labeled: labeled.len(),
            n_selected: selected.len(),
            frobenius_delta: delta,
            accuracy,
        });
        if delta < CONVERGENCE_TOL && selected.is_empty() {
            converged = true;
            break;
        }
    }
    Ok(SelfTrainOutcome { u, source: f, labeled: labeled.into_iter().collect(), history, converged })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn confidence_examples() {
        let u = DMatrix::from_row_slice(3, 3, &[1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0, 1.0, 0.0, 0.0, 0.6, 0.3, 0.1]);
        let c = confidence(&u);
        assert_abs_diff_eq!(c[0], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(c[1], 2.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(c[2], 0.6 - 1.0 / 3.0, epsilon = 1e-15);
        let two = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
        assert_abs_diff_eq!(confidence(&two)[0], 0.5);
    }

    #[test]
    fn fractional_confidence_examples() {
        let u = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.5, 0.5]);
        let c = fractional_confidence(&u, 0.3);
        assert_abs_diff_eq!(c[0], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(c[1], 0.3 * 2f64.ln(), epsilon = 1e-15);
        let base = confidence(&u);
        assert_eq!(fractional_confidence(&u, 0.0), base);
    }

    #[test]
    fn simplex_handles_negatives() {
        let u = DMatrix::from_row_slice(2, 2, &[0.5, -0.5, 0.0, 0.0]);
        let p = simplex_rows(&u);
        assert_eq!(p, DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.5, 0.5]));
    }

    #[test]
    fn selection_rules() {
        let conf = DVector::from_vec(vec![0.95, 0.5]);
        assert_eq!(select_confident(&conf, 0.9, &BTreeSet::new()), vec![0]);
        assert!(select_confident(&conf, 0.96, &BTreeSet::new()).is_empty());
        let labeled: BTreeSet<usize> = [0].into_iter().collect();
        assert!(select_confident(&conf, 0.1, &labeled) == vec![1]);
        // strict comparison
        assert!(select_confident(&conf, 0.95, &BTreeSet::new()).is_empty());
    }

    #[test]
    fn source_update_cases() {
        let f = DMatrix::from_row_slice(4, 2, &[0.5, -0.5, -0.5, 0.5, 0.0, 0.0, 0.0, 0.0]);
        let u = DMatrix::from_row_slice(4, 2, &[0.9, 0.1, 0.2, 0.8, 0.7, 0.3, 0.5, 0.5]);
        let labeled: BTreeSet<usize> = [0, 1].into_iter().collect();
        assert_eq!(update_source(&f, &u, &[], &labeled).unwrap(), f);

        let next_set: BTreeSet<usize> = [0, 1, 2].into_iter().collect();
        let next = update_source(&f, &u, &[2], &next_set).unwrap();
        let mean = [(0.9 + 0.2 + 0.7) / 3.0, (0.1 + 0.8 + 0.3) / 3.0];
        assert_eq!(next.row(0), f.row(0));
        assert_eq!(next.row(1), f.row(1));
        assert_abs_diff_eq!(next[(2, 0)], 0.7 - mean[0], epsilon = 1e-15);
        assert_abs_diff_eq!(next[(2, 1)], 0.3 - mean[1], epsilon = 1e-15);
        assert_eq!(next.row(3).amax(), 0.0);
    }

    #[test]
    fn mean_coincident_row_gets_zero_source() {
        let f = DMatrix::zeros(2, 2);
        let u = DMatrix::from_row_slice(2, 2, &[0.6, 0.4, 0.6, 0.4]);
        let set: BTreeSet<usize> = [0, 1].into_iter().collect();
        let next = update_source(&f, &u, &[1], &set).unwrap();
        assert_abs_diff_eq!(next.row(1).amax(), 0.0, epsilon = 1e-15);
    }
}
