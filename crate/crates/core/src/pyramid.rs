//! Feature-pyramid level assignment and per-level sample counts.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::PyramidError;
use crate::geometry::{instance_scale, Instance, PyramidSpec, ScaleRange};

/// `level = clamp(floor(canonical_level + log2(scale / canonical_scale)))`
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FpnAssignConfig {
    pub canonical_scale: f64,
    pub canonical_level: i32,
    pub min_level: i32,
    pub max_level: i32,
}

impl Default for FpnAssignConfig {
    fn default() -> Self {
        Self {
            canonical_scale: 224.0,
            canonical_level: 4,
            min_level: 2,
            max_level: 5,
        }
    }
}

impl FpnAssignConfig {
    pub fn validate(&self) -> Result<(), PyramidError> {
        if !(self.canonical_scale.is_finite() && self.canonical_scale > 0.0) {
            return Err(PyramidError::InvalidConfig(
                "canonical_scale must be positive".into(),
            ));
        }
        if !(self.min_level <= self.canonical_level && self.canonical_level <= self.max_level) {
            return Err(PyramidError::InvalidConfig(format!(
                "need min_level <= canonical_level <= max_level, got {} {} {}",
                self.min_level, self.canonical_level, self.max_level
            )));
        }
        Ok(())
    }

    pub fn levels(&self) -> impl Iterator<Item = i32> {
        self.min_level..=self.max_level
    }
}

pub fn fpn_level(scale: f64, cfg: &FpnAssignConfig) -> i32 {
    let raw = (cfg.canonical_level as f64 + (scale / cfg.canonical_scale).log2()).floor();
    // Saturate before the integer cast so tiny or huge scales stay in range.
    raw.clamp(cfg.min_level as f64, cfg.max_level as f64) as i32
}

/// Count of valid `(instance, resolution)` pairs per pyramid level. Every
/// level of `cfg` appears in the result, zero counts included.
pub fn stage_histogram(
    instances: &[Instance],
    pyramid: &PyramidSpec,
    range: &ScaleRange,
    cfg: &FpnAssignConfig,
) -> BTreeMap<i32, usize> {
    let mut counts: BTreeMap<i32, usize> = cfg.levels().map(|l| (l, 0)).collect();
    for &omega in pyramid.omegas() {
        for inst in instances.iter().filter(|i| !i.iscrowd) {
            let s = instance_scale(&inst.bbox, omega);
            if range.contains(s) {
                *counts.entry(fpn_level(s, cfg)).or_default() += 1;
            }
        }
    }
    counts
}
