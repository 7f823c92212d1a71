use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub labeled: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

/// Class-balanced labeled set of `per_class` nodes per class; the remainder
/// is shuffled into `validation` nodes and then `test` nodes (all of the
/// rest when `test` is `None`). Each list is returned in ascending order.
pub fn sample_split(
    labels: &[usize],
    classes: usize,
    per_class: usize,
    validation: usize,
    test: Option<usize>,
    seed: u64,
) -> Result<Split> {
    if per_class == 0 {
        return Err(Error::InvalidArgument("labels per class must be at least 1".into()));
    }
    sample_split_counts(labels, &vec![per_class; classes], validation, test, seed)
}

/// Like [`sample_split`] with `counts[c]` labeled nodes from class `c`.
pub fn sample_split_counts(
    labels: &[usize],
    counts: &[usize],
    validation: usize,
    test: Option<usize>,
    seed: u64,
) -> Result<Split> {
    if counts.iter().sum::<usize>() == 0 {
        return Err(Error::InvalidArgument("at least one node must be labeled".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut labeled = Vec::with_capacity(counts.iter().sum());
    for (c, &want) in counts.iter().enumerate() {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        if members.len() < want {
            return Err(Error::InvalidArgument(format!(
                "class {c} has {} nodes, cannot label {want}",
                members.len()
            )));
        }
        members.shuffle(&mut rng);
        labeled.extend_from_slice(&members[..want]);
    }
    labeled.sort_unstable();

    let mut rest: Vec<usize> = (0..labels.len()).filter(|i| labeled.binary_search(i).is_err()).collect();
    rest.shuffle(&mut rng);
    let test_size = test.unwrap_or(rest.len().saturating_sub(validation));
    if validation + test_size > rest.len() {
        return Err(Error::InvalidArgument(format!(
            "{} unlabeled nodes cannot supply {validation} validation and {test_size} test nodes",
            rest.len()
        )));
    }
    let mut val = rest[..validation].to_vec();
    let mut tst = rest[validation..validation + test_size].to_vec();
    val.sort_unstable();
    tst.sort_unstable();
    Ok(Split { labeled, validation: val, test: tst })
}

/// Fraction of `mask` nodes where `pred` equals `truth`.
pub fn accuracy(pred: &[usize], truth: &[usize], mask: &[usize]) -> Result<f64> {
    if mask.is_empty() {
        return Err(Error::InvalidArgument("accuracy over an empty mask".into()));
    }
    let hits = mask.iter().filter(|&&i| pred[i] == truth[i]).count();
    Ok(hits as f64 / mask.len() as f64)
}
