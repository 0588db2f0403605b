//! Training-sample selection per resolution.
//!
//! Two policies are modelled. Instance scale normalization keeps an instance
//! at resolution `omega` iff its *resized* scale lies in one shared closed
//! range. The per-resolution policy it replaces keeps an instance iff its
//! *original* scale lies in an open range tuned separately for each
//! resolution. The histogram helpers below measure how much the two label
//! sets overlap once everything is expressed in resized pixels.

use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, ImageInfo};
use crate::error::SamplingError;
use crate::geometry::{instance_scale, Instance, PyramidSpec, ScaleRange};

/// Valid/ignored split of an instance list at one resolution.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Partition {
    pub resolution_index: usize,
    pub valid: Vec<Instance>,
    pub ignored: Vec<Instance>,
}

impl Partition {
    fn split(
        resolution_index: usize,
        instances: &[Instance],
        mut keep: impl FnMut(&Instance) -> bool,
    ) -> Self {
        let (valid, ignored) = instances
            .iter()
            .cloned()
            .partition(|inst| !inst.iscrowd && keep(inst));
        Self {
            resolution_index,
            valid,
            ignored,
        }
    }
}

/// Splits `instances` by their scale after resizing by `omega`. Crowd
/// regions always land in `ignored`.
pub fn isn_partition(
    instances: &[Instance],
    omega: f64,
    range: &ScaleRange,
    resolution_index: usize,
) -> Partition {
    Partition::split(resolution_index, instances, |inst| {
        range.contains(instance_scale(&inst.bbox, omega))
    })
}

/// [`isn_partition`] for every level of `pyramid`.
pub fn isn_partition_pyramid(
    instances: &[Instance],
    pyramid: &PyramidSpec,
    range: &ScaleRange,
) -> Vec<Partition> {
    pyramid
        .omegas()
        .iter()
        .enumerate()
        .map(|(i, &w)| isn_partition(instances, w, range, i))
        .collect()
}

/// Open interval `(lower, upper)` in original-image pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OpenRange {
    pub lower: f64,
    pub upper: f64,
}

impl OpenRange {
    pub fn contains(&self, scale: f64) -> bool {
        self.lower < scale && scale < self.upper
    }
}

impl Serialize for OpenRange {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        (self.lower, self.upper.is_finite().then_some(self.upper)).serialize(s)
    }
}

impl<'de> Deserialize<'de> for OpenRange {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let (lower, upper) = <(f64, Option<f64>)>::deserialize(d)?;
        Ok(OpenRange {
            lower,
            upper: upper.unwrap_or(f64::INFINITY),
        })
    }
}

/// One resolution of a per-resolution range table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnipEntry {
    /// Target `(short side, long side)` of the resized image.
    pub resolution: (u32, u32),
    pub range: OpenRange,
    /// Fixed scaling factor. When absent it is derived per image from
    /// `resolution`: the largest factor that fits both target sides.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega: Option<f64>,
}

impl SnipEntry {
    pub fn omega_for(&self, image: &ImageInfo) -> f64 {
        if let Some(w) = self.omega {
            return w;
        }
        let (short, long) = (image.height.min(image.width), image.height.max(image.width));
        let (target_short, target_long) = (
            self.resolution.0.min(self.resolution.1),
            self.resolution.0.max(self.resolution.1),
        );
        (target_short as f64 / short as f64).min(target_long as f64 / long as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<SnipEntry>", into = "Vec<SnipEntry>")]
pub struct SnipRangeTable {
    entries: Vec<SnipEntry>,
}

impl SnipRangeTable {
    pub fn new(entries: Vec<SnipEntry>) -> Result<Self, SamplingError> {
        for (index, e) in entries.iter().enumerate() {
            let bad = |reason: &str| SamplingError::InvalidTableEntry {
                index,
                reason: reason.to_string(),
            };
            if e.range.lower.is_nan() || e.range.upper.is_nan() || e.range.lower >= e.range.upper {
                return Err(bad("range lower bound must be below upper bound"));
            }
            if e.range.lower < 0.0 {
                return Err(bad("range lower bound must be non-negative"));
            }
            if e.resolution.0 == 0 || e.resolution.1 == 0 {
                return Err(bad("resolution must be positive"));
            }
            if matches!(e.omega, Some(w) if !(w.is_finite() && w > 0.0)) {
                return Err(bad("omega must be positive"));
            }
        }
        Ok(Self { entries })
    }

    /// Two-level table: `(800, 1200)` keeps `(40, 160)`, `(480, 800)` keeps
    /// `(120, inf)`.
    pub fn two_level_default() -> Self {
        Self {
            entries: vec![
                SnipEntry {
                    resolution: (800, 1200),
                    range: OpenRange {
                        lower: 40.0,
                        upper: 160.0,
                    },
                    omega: None,
                },
                SnipEntry {
                    resolution: (480, 800),
                    range: OpenRange {
                        lower: 120.0,
                        upper: f64::INFINITY,
                    },
                    omega: None,
                },
            ],
        }
    }

    pub fn entries(&self) -> &[SnipEntry] {
        &self.entries
    }

    pub fn entry(&self, index: usize) -> Result<&SnipEntry, SamplingError> {
        self.entries
            .get(index)
            .ok_or(SamplingError::UnknownResolution {
                index,
                len: self.entries.len(),
            })
    }
}

impl TryFrom<Vec<SnipEntry>> for SnipRangeTable {
    type Error = SamplingError;
    fn try_from(entries: Vec<SnipEntry>) -> Result<Self, Self::Error> {
        Self::new(entries)
    }
}

impl From<SnipRangeTable> for Vec<SnipEntry> {
    fn from(t: SnipRangeTable) -> Self {
        t.entries
    }
}

/// Splits `instances` by their original-image scale against the range of
/// table entry `resolution_index`.
pub fn snip_partition(
    instances: &[Instance],
    resolution_index: usize,
    table: &SnipRangeTable,
) -> Result<Partition, SamplingError> {
    let entry = table.entry(resolution_index)?;
    Ok(Partition::split(resolution_index, instances, |inst| {
        entry.range.contains(inst.bbox.scale())
    }))
}

/// Bin edges for scale histograms. Bins are half-open `[e_k, e_{k+1})`,
/// plus an underflow bin below the first edge and an overflow bin at or
/// above the last one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Binning {
    edges: Vec<f64>,
}

impl Binning {
    pub fn new(edges: Vec<f64>) -> Result<Self, SamplingError> {
        if edges.is_empty() {
            return Err(SamplingError::InvalidBinning("no edges".into()));
        }
        if edges
            .windows(2)
            .any(|w| w[0].partial_cmp(&w[1]) != Some(std::cmp::Ordering::Less))
        {
            return Err(SamplingError::InvalidBinning(
                "edges must be strictly increasing".into(),
            ));
        }
        Ok(Self { edges })
    }

    /// `bins` log-spaced bins spanning `[lo, hi]`.
    pub fn log_spaced(lo: f64, hi: f64, bins: usize) -> Result<Self, SamplingError> {
        if !(lo > 0.0 && hi > lo && bins > 0 && hi.is_finite()) {
            return Err(SamplingError::InvalidBinning(format!(
                "need 0 < lo < hi and bins > 0, got lo={lo} hi={hi} bins={bins}"
            )));
        }
        let (a, b) = (lo.ln(), hi.ln());
        let mut edges: Vec<f64> = (0..=bins)
            .map(|k| (a + (b - a) * k as f64 / bins as f64).exp())
            .collect();
        edges[0] = lo;
        edges[bins] = hi;
        Self::new(edges)
    }

    /// Adds extra edges, skipping any already present.
    pub fn with_split_points(mut self, points: &[f64]) -> Self {
        for &p in points {
            if p.is_finite() && !self.edges.contains(&p) {
                let at = self.edges.partition_point(|&e| e < p);
                self.edges.insert(at, p);
            }
        }
        self
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    /// Number of bins including underflow and overflow.
    pub fn len(&self) -> usize {
        self.edges.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn bin_of(&self, value: f64) -> usize {
        self.edges.partition_point(|&e| e <= value)
    }
}

impl Default for Binning {
    /// 64 log-spaced bins over `[1, 2560]`.
    fn default() -> Self {
        Self::log_spaced(1.0, 2560.0, 64).expect("static binning is valid")
    }
}

/// Normalized histogram of resized scales.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScaleHistogram {
    binning: Binning,
    mass: Vec<f64>,
    count: usize,
}

impl ScaleHistogram {
    pub fn from_values(binning: Binning, values: impl IntoIterator<Item = f64>) -> Self {
        let mut counts = vec![0usize; binning.len()];
        let mut count = 0;
        for v in values {
            counts[binning.bin_of(v)] += 1;
            count += 1;
        }
        let mass = counts
            .into_iter()
            .map(|c| {
                if count == 0 {
                    0.0
                } else {
                    c as f64 / count as f64
                }
            })
            .collect();
        Self {
            binning,
            mass,
            count,
        }
    }

    /// Histogram with explicit bin masses, used when masses come from
    /// somewhere other than raw samples.
    pub fn from_masses(binning: Binning, mass: Vec<f64>) -> Result<Self, SamplingError> {
        if mass.len() != binning.len() {
            return Err(SamplingError::MismatchedBins);
        }
        let count = mass.iter().filter(|&&m| m > 0.0).count();
        Ok(Self {
            binning,
            mass,
            count,
        })
    }

    pub fn binning(&self) -> &Binning {
        &self.binning
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    /// Number of samples accumulated.
    pub fn count(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }
}

/// Sampling policy whose resized-scale label distributions are compared.
#[derive(Debug, Clone, PartialEq)]
pub enum SamplingPolicy {
    Isn {
        pyramid: PyramidSpec,
        range: ScaleRange,
    },
    Snip {
        table: SnipRangeTable,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScaleDistributions {
    pub trained: ScaleHistogram,
    pub ignored: ScaleHistogram,
}

impl ScaleDistributions {
    pub fn overlap(&self) -> f64 {
        consistency_overlap(&self.trained, &self.ignored).expect("both histograms share a binning")
    }
}

/// Resized scale of every non-crowd `(instance, resolution)` pair, split by
/// the label `policy` assigns.
///
/// Under the ISN policy the binning is refined with the range bounds so no
/// bin straddles the validity boundary. Crowd regions are skipped: they are
/// ignored regardless of scale and would otherwise pollute both histograms.
pub fn resized_scale_distributions(
    dataset: &Dataset,
    policy: &SamplingPolicy,
    binning: &Binning,
) -> ScaleDistributions {
    let mut trained = Vec::new();
    let mut ignored = Vec::new();
    let objects = dataset.instances().iter().filter(|i| !i.iscrowd);
    let binning = match policy {
        SamplingPolicy::Isn { pyramid, range } => {
            for inst in objects {
                for &w in pyramid.omegas() {
                    let s = instance_scale(&inst.bbox, w);
                    if range.contains(s) {
                        trained.push(s);
                    } else {
                        ignored.push(s);
                    }
                }
            }
            let mut splits = vec![range.lower()];
            if range.upper().is_finite() {
                splits.push(range.upper().next_up());
            }
            binning.clone().with_split_points(&splits)
        }
        SamplingPolicy::Snip { table } => {
            for inst in objects {
                let image = dataset
                    .image(inst.image_id)
                    .expect("dataset integrity checked at construction");
                let original = inst.bbox.scale();
                for entry in table.entries() {
                    let s = instance_scale(&inst.bbox, entry.omega_for(image));
                    if entry.range.contains(original) {
                        trained.push(s);
                    } else {
                        ignored.push(s);
                    }
                }
            }
            binning.clone()
        }
    };
    ScaleDistributions {
        trained: ScaleHistogram::from_values(binning.clone(), trained),
        ignored: ScaleHistogram::from_values(binning, ignored),
    }
}

/// Histogram intersection `sum_k min(p_k, q_k)`; 0 when either is empty.
pub fn consistency_overlap(
    trained: &ScaleHistogram,
    ignored: &ScaleHistogram,
) -> Result<f64, SamplingError> {
    if trained.binning != ignored.binning {
        return Err(SamplingError::MismatchedBins);
    }
    let total: f64 = trained
        .mass
        .iter()
        .zip(&ignored.mass)
        .map(|(p, q)| p.min(*q))
        .sum();
    Ok(total.clamp(0.0, 1.0))
}
