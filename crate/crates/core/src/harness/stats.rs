//! Trial aggregates, one-way ANOVA and pooled two-sample t-tests.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, FisherSnedecor, StudentsT};

use crate::error::{Error, Result};

/// Reported in place of an infinite statistic (zero within-group variance
/// with distinct means) so results stay representable in JSON.
pub const STAT_CAP: f64 = f64::MAX;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialStats {
    pub accuracies: Vec<f64>,
    pub n_trials: usize,
    pub mean: f64,
    /// Sample standard deviation over `√n_trials`; 0 when undefined.
    pub se: f64,
    pub se_defined: bool,
}

impl TrialStats {
    pub fn new(accuracies: Vec<f64>) -> Result<Self> {
        let n = accuracies.len();
        if n == 0 {
            return Err(Error::InvalidArgument("no trials to aggregate".into()));
        }
        let mean = accuracies.iter().sum::<f64>() / n as f64;
        let (se, se_defined) = if n < 2 {
            (0.0, false)
        } else {
            (sample_variance(&accuracies, mean).sqrt() / (n as f64).sqrt(), true)
        };
        Ok(Self { accuracies, n_trials: n, mean, se, se_defined })
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn sample_variance(xs: &[f64], mean: f64) -> f64 {
    xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (xs.len() - 1) as f64
}

fn check_groups(groups: &[&[f64]]) -> Result<()> {
    for (k, g) in groups.iter().enumerate() {
        if g.len() < 2 {
            return Err(Error::InvalidArgument(format!("group {k} has {} samples, need at least 2", g.len())));
        }
        if g.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument(format!("group {k} contains a non-finite value")));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Anova {
    pub f: f64,
    pub p: f64,
    pub df_between: usize,
    pub df_within: usize,
}

pub fn anova_oneway(groups: &[&[f64]]) -> Result<Anova> {
    if groups.len() < 2 {
        return Err(Error::InvalidArgument(format!("ANOVA needs at least 2 groups, got {}", groups.len())));
    }
    check_groups(groups)?;
    let n: usize = groups.iter().map(|g| g.len()).sum();
    let grand = groups.iter().flat_map(|g| g.iter()).sum::<f64>() / n as f64;
    let mut ss_between = 0.0;
    let mut ss_within = 0.0;
    for g in groups {
        let m = mean(g);
        ss_between += g.len() as f64 * (m - grand).powi(2);
        ss_within += g.iter().map(|x| (x - m).powi(2)).sum::<f64>();
    }
    let df_between = groups.len() - 1;
    let df_within = n - groups.len();
    let ms_between = ss_between / df_between as f64;
    let ms_within = ss_within / df_within as f64;
    let (f, p) = if ms_within == 0.0 {
        if ms_between == 0.0 { (0.0, 1.0) } else { (STAT_CAP, 0.0) }
    } else {
        let f = ms_between / ms_within;
        let dist = FisherSnedecor::new(df_between as f64, df_within as f64)
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
        (f, dist.sf(f).clamp(0.0, 1.0))
    };
    Ok(Anova { f, p, df_between, df_within })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTest {
    pub t: f64,
    pub p: f64,
    pub df: usize,
}

/// Pooled-variance two-sided test; `t > 0` when `a` has the larger mean.
pub fn t_test(a: &[f64], b: &[f64]) -> Result<TTest> {
    check_groups(&[a, b])?;
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (ma, mb) = (mean(a), mean(b));
    let df = a.len() + b.len() - 2;
    let pooled = ((na - 1.0) * sample_variance(a, ma) + (nb - 1.0) * sample_variance(b, mb)) / df as f64;
    let diff = ma - mb;
    if pooled == 0.0 {
        return Ok(if diff == 0.0 {
            TTest { t: 0.0, p: 1.0, df }
        } else {
            TTest { t: STAT_CAP.copysign(diff), p: 0.0, df }
        });
    }
    let t = diff / (pooled * (1.0 / na + 1.0 / nb)).sqrt();
    let dist = StudentsT::new(0.0, 1.0, df as f64).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    Ok(TTest { t, p: (2.0 * dist.sf(t.abs())).clamp(0.0, 1.0), df })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairwiseTest {
    pub a: usize,
    pub b: usize,
    pub t: f64,
    pub df: usize,
    pub p: f64,
    /// `p` times the number of comparisons, capped at 1.
    pub p_adjusted: f64,
}

/// Every pair `a < b` of groups with Bonferroni-adjusted p-values. Used as
/// the post-hoc test after a significant ANOVA.
pub fn pairwise_bonferroni(groups: &[&[f64]]) -> Result<Vec<PairwiseTest>> {
    let k = groups.len();
    let m = (k * k.saturating_sub(1) / 2) as f64;
    let mut out = Vec::new();
    for a in 0..k {
        for b in a + 1..k {
            let t = t_test(groups[a], groups[b])?;
            out.push(PairwiseTest { a, b, t: t.t, df: t.df, p: t.p, p_adjusted: (t.p * m).min(1.0) });
        }
    }
    Ok(out)
}
