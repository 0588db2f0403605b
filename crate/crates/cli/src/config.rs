//! Effective configuration: defaults, then the `--config` file, then flags.

use std::path::Path;

use anyhow::{Context, Result};
use isn_core::eval::EvalConfig;
use isn_core::fusion::SoftNmsConfig;
use isn_core::pyramid::FpnAssignConfig;
use isn_core::sampling::{Binning, SnipRangeTable};
use isn_core::search::SearchSpace;
use isn_core::sim::{DetectorProfile, SyntheticConfig};
use isn_core::{PyramidSpec, ScaleRange};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HistogramConfig {
    pub lo: f64,
    pub hi: f64,
    pub bins: usize,
}

impl Default for HistogramConfig {
    fn default() -> Self {
        Self {
            lo: 1.0,
            hi: 2560.0,
            bins: 64,
        }
    }
}

impl HistogramConfig {
    pub fn binning(&self) -> Result<Binning> {
        Ok(Binning::log_spaced(self.lo, self.hi, self.bins)?)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub profile: DetectorProfile,
    pub dataset: SyntheticConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AppConfig {
    pub seed: u64,
    pub omegas: PyramidSpec,
    pub isn_range: ScaleRange,
    pub soft_nms: SoftNmsConfig,
    /// Cap on fused detections per image; `null` disables it.
    pub top_k: Option<usize>,
    pub eval: EvalConfig,
    pub search: SearchSpace,
    pub sim: SimConfig,
    pub snip_table: SnipRangeTable,
    pub fpn: FpnAssignConfig,
    pub histogram: HistogramConfig,
}

impl Default for AppConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            omegas: PyramidSpec::default(),
            isn_range: ScaleRange::default(),
            soft_nms: SoftNmsConfig::default(),
            top_k: Some(100),
            eval: EvalConfig::default(),
            search: SearchSpace::default(),
            sim: SimConfig::default(),
            snip_table: SnipRangeTable::two_level_default(),
            fpn: FpnAssignConfig::default(),
            histogram: HistogramConfig::default(),
        }
    }
}

impl AppConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn validate(&self) -> Result<()> {
        self.soft_nms.validate()?;
        self.eval.validate()?;
        self.search.validate()?;
        self.sim.profile.validate()?;
        self.sim.dataset.validate()?;
        self.fpn.validate()?;
        self.histogram.binning()?;
        Ok(())
    }
}

/// Parses `lo,hi`; `hi` may be `inf`.
pub fn parse_range(text: &str) -> Result<ScaleRange, String> {
    let (lo, hi) = text
        .split_once(',')
        .ok_or_else(|| format!("expected LO,HI, got {text:?}"))?;
    let num = |s: &str| -> Result<f64, String> {
        match s.trim() {
            "inf" | "Inf" | "INF" => Ok(f64::INFINITY),
            t => t.parse::<f64>().map_err(|e| format!("{t:?}: {e}")),
        }
    };
    ScaleRange::new(num(lo)?, num(hi)?).map_err(|e| e.to_string())
}

pub fn parse_omegas(text: &str) -> Result<PyramidSpec, String> {
    let omegas = text
        .split(',')
        .map(|s| s.trim().parse::<f64>().map_err(|e| format!("{s:?}: {e}")))
        .collect::<Result<Vec<_>, _>>()?;
    PyramidSpec::new(omegas).map_err(|e| e.to_string())
}

/// Applies `a.b.c=value` to the JSON form of a config. `value` is parsed as
/// JSON when it can be, otherwise taken as a string.
pub fn apply_override(config: &mut serde_json::Value, assignment: &str) -> Result<()> {
    let (path, raw) = assignment
        .split_once('=')
        .with_context(|| format!("--set expects PATH=VALUE, got {assignment:?}"))?;
    let value =
        serde_json::from_str(raw).unwrap_or_else(|_| serde_json::Value::String(raw.to_string()));
    let keys: Vec<&str> = path.split('.').collect();
    let (last, parents) = keys.split_last().expect("split yields at least one item");
    let mut node = config;
    for key in parents {
        node = node
            .get_mut(*key)
            .filter(|n| n.is_object())
            .with_context(|| format!("--set {path}: no config section {key:?}"))?;
    }
    let map = node
        .as_object_mut()
        .with_context(|| format!("--set {path}: not a config section"))?;
    map.insert((*last).to_string(), value);
    Ok(())
}
