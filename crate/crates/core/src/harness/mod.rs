//! Datasets, splits, seeded trial runs, statistics and reporting.

pub mod datasets;
pub mod experiment;
pub mod report;
pub mod split;
pub mod stats;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
pub use experiment::{run_trials, Cell, DatasetConfig, ExperimentConfig, ExperimentResults, Method};
pub use report::{ReferenceValue, ResultsDocument};

/// An experiment configuration with the published numbers it targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preset {
    pub config: ExperimentConfig,
    #[serde(default)]
    pub reference: Vec<ReferenceValue>,
}

const PRESETS: [(&str, &str); 4] = [
    ("two-moon-benchmark", include_str!("../../presets/two-moon-benchmark.json")),
    ("cora-label-propagation", include_str!("../../presets/cora-label-propagation.json")),
    ("cora-multi-time-fractional", include_str!("../../presets/cora-multi-time-fractional.json")),
    ("cora-multi-time-baseline", include_str!("../../presets/cora-multi-time-baseline.json")),
];

pub fn preset_names() -> impl Iterator<Item = &'static str> {
    PRESETS.iter().map(|p| p.0)
}

/// A bundled preset by name, or a preset/config file by path.
pub fn load_preset(name_or_path: &str) -> Result<Preset> {
    let text = match PRESETS.iter().find(|p| p.0 == name_or_path) {
        Some(p) => p.1.to_string(),
        None if std::path::Path::new(name_or_path).is_file() => std::fs::read_to_string(name_or_path)?,
        None => {
            let known: Vec<&str> = preset_names().collect();
            return Err(Error::InvalidArgument(format!(
                "no preset or file '{name_or_path}' (bundled: {})",
                known.join(", ")
            )));
        }
    };
    // A bare experiment config is accepted as a preset without references.
    match serde_json::from_str::<Preset>(&text) {
        Ok(p) => Ok(p),
        Err(_) => Ok(Preset { config: serde_json::from_str(&text)?, reference: Vec::new() }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_presets_parse() {
        for name in preset_names() {
            let p = load_preset(name).unwrap();
            assert_eq!(p.config.name, name);
            for cell in &p.config.cells {
                assert!(!cell.times.is_empty());
            }
        }
        assert!(load_preset("nope").is_err());
    }

    #[test]
    fn two_moon_preset_has_full_reference_grid() {
        let p = load_preset("two-moon-benchmark").unwrap();
        assert_eq!(p.reference.len(), 3 * 6 * 3);
        let r = p.reference.iter().find(|r| r.s == 0.2 && r.labels == 3 && r.method == Method::Scheme3).unwrap();
        assert_eq!((r.mean, r.se), (0.950, Some(0.006)));
    }
}
