//! Experiment configuration: the JSON file that fully determines a sweep.

use std::collections::BTreeSet;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

/// Certificate families the harness can emit.
pub const VARIANTS: &[&str] = &[
    "projection-algebra",
    "pythagoras",
    "well-localized",
    "t-para",
    "replacement",
    "para-two-path",
    "para-orthogonal",
    "para-bound",
    "carleson",
    "thm-well-loc-rel",
    "thm-well-loc-est",
    "thm-band-rel",
    "ft-le-norm",
    "block-bound",
    "truncation-gap",
    "nec",
    "test-haar",
    "est-tk",
    "oracle",
];

/// A sweep is the product of these ranges; every (seed, dim, depth,
/// branching, complexity) tuple yields one deterministic instance.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ExperimentConfig {
    pub seeds: Vec<u64>,
    pub dims: Vec<usize>,
    pub depths: Vec<usize>,
    pub branchings: Vec<usize>,
    pub complexities: Vec<usize>,
    #[serde(default = "default_condition_cap")]
    pub condition_cap: f64,
    /// Certificate families to run; an empty list yields an empty report.
    #[serde(default)]
    pub variants: Vec<String>,
    /// Deliberate corruption mode for harness self-tests:
    /// "unscaled-kernel" or "fine-grid".
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sabotage: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
}

fn default_condition_cap() -> f64 {
    1e4
}

impl ExperimentConfig {
    pub fn from_file(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let cfg: ExperimentConfig = serde_json::from_str(&text).context("parsing config JSON")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty()
            || self.dims.is_empty()
            || self.depths.is_empty()
            || self.branchings.is_empty()
            || self.complexities.is_empty()
        {
            bail!("all sweep ranges must be nonempty");
        }
        if self.dims.iter().any(|&d| d == 0) {
            bail!("dimension must be at least 1");
        }
        if self.depths.iter().any(|&d| d == 0) {
            bail!("depth must be at least 1");
        }
        if self.branchings.iter().any(|&b| b < 2) {
            bail!("branching must be at least 2");
        }
        if !(self.condition_cap >= 1.0) {
            bail!("condition_cap must be at least 1");
        }
        for v in &self.variants {
            if !VARIANTS.contains(&v.as_str()) {
                bail!("unknown variant {v:?}; known: {VARIANTS:?}");
            }
        }
        if let Some(s) = &self.sabotage {
            if s != "unscaled-kernel" && s != "fine-grid" {
                bail!("unknown sabotage mode {s:?}");
            }
        }
        Ok(())
    }

    pub fn variant_set(&self) -> BTreeSet<String> {
        self.variants.iter().cloned().collect()
    }
}
