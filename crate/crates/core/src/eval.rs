//! COCO-style box evaluation.
//!
//! Matching follows the usual protocol: per image and category, detections
//! are visited by descending score and each claims the unmatched ground
//! truth with the highest IoU at or above the threshold, preferring regular
//! ground truth over ignored ground truth. Detections that land on ignored
//! ground truth (crowd regions, boxes outside the area bucket or outside the
//! scale restriction) drop out of the ranking. Precision is interpolated at
//! evenly spaced recall points and averaged.
//!
//! Metrics that have no ground truth to be measured against report `-1`.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::EvalError;
use crate::geometry::{iou, BBox, Detection, Instance, ScaleRange};

/// Sentinel for undefined metrics.
pub const UNDEFINED: f64 = -1.0;

/// Area boundaries of the small/medium/large buckets, in original-image
/// square pixels. Buckets are `(0, small_max)`, `[small_max, medium_max)`
/// and `[medium_max, inf)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AreaBuckets {
    pub small_max: f64,
    pub medium_max: f64,
}

impl Default for AreaBuckets {
    fn default() -> Self {
        Self {
            small_max: 32.0 * 32.0,
            medium_max: 96.0 * 96.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Area {
    All,
    Small,
    Medium,
    Large,
}

const AREAS: [Area; 4] = [Area::All, Area::Small, Area::Medium, Area::Large];

impl AreaBuckets {
    fn contains(&self, area_kind: Area, area: f64) -> bool {
        match area_kind {
            Area::All => true,
            Area::Small => area < self.small_max,
            Area::Medium => self.small_max <= area && area < self.medium_max,
            Area::Large => self.medium_max <= area,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub iou_thresholds: Vec<f64>,
    pub area_buckets: AreaBuckets,
    pub recall_points: usize,
    /// When set, ground truth outside the range is ignored and detections
    /// outside it are discarded before matching.
    pub scale_restriction: Option<ScaleRange>,
    /// Detections kept per image and category, by score.
    pub max_dets: usize,
    /// Category vocabulary. Defaults to the categories present in the
    /// ground truth.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub category_ids: Option<Vec<u64>>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            iou_thresholds: (0..10).map(|i| f64::from(50 + 5 * i) / 100.0).collect(),
            area_buckets: AreaBuckets::default(),
            recall_points: 101,
            scale_restriction: None,
            max_dets: 100,
            category_ids: None,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<(), EvalError> {
        let bad = |m: &str| Err(EvalError::InvalidConfig(m.to_string()));
        if self.iou_thresholds.is_empty() {
            return bad("at least one IoU threshold is required");
        }
        if self.iou_thresholds.iter().any(|&t| !(t > 0.0 && t <= 1.0)) {
            return bad("IoU thresholds must lie in (0, 1]");
        }
        if self.iou_thresholds.windows(2).any(|w| w[0] >= w[1]) {
            return bad("IoU thresholds must be strictly increasing");
        }
        let b = self.area_buckets;
        if !(b.small_max > 0.0 && b.small_max < b.medium_max && b.medium_max.is_finite()) {
            return bad("area buckets need 0 < small_max < medium_max < inf");
        }
        if self.recall_points < 2 {
            return bad("need at least two recall points");
        }
        if self.max_dets == 0 {
            return bad("max_dets must be positive");
        }
        Ok(())
    }

    fn threshold_index(&self, t: f64) -> Option<usize> {
        self.iou_thresholds
            .iter()
            .position(|&x| (x - t).abs() < 1e-9)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryMetrics {
    pub category_id: u64,
    pub ap: f64,
    pub ap50: f64,
    pub ap75: f64,
    pub ar: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub ap: f64,
    pub ap50: f64,
    pub ap75: f64,
    pub ap_s: f64,
    pub ap_m: f64,
    pub ap_l: f64,
    pub ar: f64,
    pub per_category: Vec<CategoryMetrics>,
}

impl EvalResult {
    /// `(category, metric, value)` rows; summary rows use category `all`.
    pub fn csv_rows(&self) -> Vec<(String, &'static str, f64)> {
        let mut rows = vec![
            ("all".to_string(), "ap", self.ap),
            ("all".to_string(), "ap50", self.ap50),
            ("all".to_string(), "ap75", self.ap75),
            ("all".to_string(), "ap_s", self.ap_s),
            ("all".to_string(), "ap_m", self.ap_m),
            ("all".to_string(), "ap_l", self.ap_l),
            ("all".to_string(), "ar", self.ar),
        ];
        for c in &self.per_category {
            let id = c.category_id.to_string();
            rows.push((id.clone(), "ap", c.ap));
            rows.push((id.clone(), "ap50", c.ap50));
            rows.push((id.clone(), "ap75", c.ap75));
            rows.push((id, "ar", c.ar));
        }
        rows
    }
}

/// Matching outcome of one image for one category and area bucket.
struct ImageEval {
    scores: Vec<f64>,
    /// `[threshold][det]`
    matched: Vec<Vec<bool>>,
    ignored: Vec<Vec<bool>>,
    regular_gt: usize,
}

/// Precision/recall summary for one (category, area, threshold) cell.
#[derive(Clone, Copy)]
struct Cell {
    ap: f64,
    recall: f64,
}

const UNDEFINED_CELL: Cell = Cell {
    ap: UNDEFINED,
    recall: UNDEFINED,
};

/// Overlap used for matching: plain IoU for regular ground truth, and the
/// fraction of the detection covered for crowd regions.
fn match_overlap(det: &BBox, gt: &Instance) -> f64 {
    if gt.iscrowd {
        det.intersection_area(&gt.bbox) / det.area()
    } else {
        iou(det, &gt.bbox)
    }
}

fn evaluate_image(
    gts: &[&Instance],
    dets: &[&Detection],
    overlaps: &[Vec<f64>],
    area: Area,
    cfg: &EvalConfig,
) -> ImageEval {
    let gt_ignored_raw: Vec<bool> = gts
        .iter()
        .map(|g| {
            g.iscrowd
                || !cfg.area_buckets.contains(area, g.bbox.area())
                || cfg
                    .scale_restriction
                    .is_some_and(|r| !r.contains(g.bbox.scale()))
        })
        .collect();
    // Regular ground truth first, ignored after, stable within each group.
    let mut gt_order: Vec<usize> = (0..gts.len()).collect();
    gt_order.sort_by_key(|&g| gt_ignored_raw[g]);
    let regular_gt = gt_ignored_raw.iter().filter(|&&ig| !ig).count();

    let n_thr = cfg.iou_thresholds.len();
    let mut matched = vec![vec![false; dets.len()]; n_thr];
    let mut ignored = vec![vec![false; dets.len()]; n_thr];
    for (t, &thr) in cfg.iou_thresholds.iter().enumerate() {
        let floor = thr.min(1.0 - 1e-10);
        let mut gt_taken = vec![false; gts.len()];
        for (d, det) in dets.iter().enumerate() {
            let mut best: Option<(usize, f64)> = None;
            for &g in &gt_order {
                if gt_taken[g] && !gts[g].iscrowd {
                    continue;
                }
                if let Some((b, _)) = best {
                    if !gt_ignored_raw[b] && gt_ignored_raw[g] {
                        break;
                    }
                }
                let o = overlaps[d][g];
                let beats = match best {
                    None => o >= floor,
                    Some((_, bo)) => o > bo,
                };
                if beats {
                    best = Some((g, o));
                }
            }
            match best {
                Some((g, _)) => {
                    matched[t][d] = true;
                    ignored[t][d] = gt_ignored_raw[g];
                    gt_taken[g] = true;
                }
                None => {
                    ignored[t][d] = !cfg.area_buckets.contains(area, det.bbox.area());
                }
            }
        }
    }
    ImageEval {
        scores: dets.iter().map(|d| d.score()).collect(),
        matched,
        ignored,
        regular_gt,
    }
}

fn accumulate(images: &[ImageEval], t: usize, recall_points: usize) -> Cell {
    let regular_gt: usize = images.iter().map(|e| e.regular_gt).sum();
    if regular_gt == 0 {
        return UNDEFINED_CELL;
    }
    let mut ranked: Vec<(f64, bool)> = images
        .iter()
        .flat_map(|e| {
            (0..e.scores.len())
                .filter(|&d| !e.ignored[t][d])
                .map(move |d| (e.scores[d], e.matched[t][d]))
        })
        .collect();
    // Stable: equal scores keep image order, then per-image rank.
    ranked.sort_by(|a, b| b.0.total_cmp(&a.0));

    let mut recall = Vec::with_capacity(ranked.len());
    let mut precision = Vec::with_capacity(ranked.len());
    let (mut tp, mut fp) = (0usize, 0usize);
    for &(_, is_tp) in &ranked {
        if is_tp {
            tp += 1;
        } else {
            fp += 1;
        }
        recall.push(tp as f64 / regular_gt as f64);
        precision.push(tp as f64 / (tp + fp) as f64);
    }
    for i in (1..precision.len()).rev() {
        if precision[i] > precision[i - 1] {
            precision[i - 1] = precision[i];
        }
    }
    let steps = (recall_points - 1) as f64;
    let sum: f64 = (0..recall_points)
        .map(|j| {
            let r = j as f64 / steps;
            let idx = recall.partition_point(|&x| x < r);
            precision.get(idx).copied().unwrap_or(0.0)
        })
        .sum();
    Cell {
        ap: sum / recall_points as f64,
        recall: recall.last().copied().unwrap_or(0.0),
    }
}

fn mean_defined(values: impl IntoIterator<Item = f64>) -> f64 {
    let (sum, n) = values
        .into_iter()
        .filter(|&v| v > UNDEFINED)
        .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        UNDEFINED
    } else {
        sum / n as f64
    }
}

/// Evaluates `dets` against `gts`.
pub fn evaluate(
    gts: &[Instance],
    dets: &[Detection],
    cfg: &EvalConfig,
) -> Result<EvalResult, EvalError> {
    use rayon::prelude::*;

    cfg.validate()?;
    let vocabulary: Vec<u64> = match &cfg.category_ids {
        Some(ids) => {
            let set: BTreeSet<u64> = ids.iter().copied().collect();
            if let Some(g) = gts.iter().find(|g| !set.contains(&g.category_id)) {
                return Err(EvalError::UnknownCategory {
                    image_id: g.image_id,
                    category_id: g.category_id,
                });
            }
            set.into_iter().collect()
        }
        None => gts
            .iter()
            .map(|g| g.category_id)
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect(),
    };
    if let Some(d) = dets
        .iter()
        .find(|d| vocabulary.binary_search(&d.category_id).is_err())
    {
        return Err(EvalError::UnknownCategory {
            image_id: d.image_id,
            category_id: d.category_id,
        });
    }

    type Cells<'a> = BTreeMap<(u64, u64), (Vec<&'a Instance>, Vec<&'a Detection>)>;
    let mut cells: Cells = BTreeMap::new();
    for g in gts {
        cells
            .entry((g.category_id, g.image_id))
            .or_default()
            .0
            .push(g);
    }
    for d in dets {
        if cfg
            .scale_restriction
            .is_some_and(|r| !r.contains(d.bbox.scale()))
        {
            continue;
        }
        cells
            .entry((d.category_id, d.image_id))
            .or_default()
            .1
            .push(d);
    }

    let n_thr = cfg.iou_thresholds.len();
    // table[k][area][t]
    let table: Vec<Vec<Vec<Cell>>> = vocabulary
        .par_iter()
        .map(|&cat| {
            let mut per_area: Vec<Vec<ImageEval>> = AREAS.iter().map(|_| Vec::new()).collect();
            for (_, (cat_gts, cat_dets)) in cells.range((cat, 0)..=(cat, u64::MAX)) {
                let mut ranked = cat_dets.clone();
                ranked.sort_by(|a, b| b.score().total_cmp(&a.score()));
                ranked.truncate(cfg.max_dets);
                let overlaps: Vec<Vec<f64>> = ranked
                    .iter()
                    .map(|d| cat_gts.iter().map(|g| match_overlap(&d.bbox, g)).collect())
                    .collect();
                for (a, &area) in AREAS.iter().enumerate() {
                    per_area[a].push(evaluate_image(cat_gts, &ranked, &overlaps, area, cfg));
                }
            }
            per_area
                .iter()
                .map(|imgs| {
                    (0..n_thr)
                        .map(|t| accumulate(imgs, t, cfg.recall_points))
                        .collect()
                })
                .collect()
        })
        .collect();

    let all_thresholds = |area: usize, pick: fn(Cell) -> f64| {
        mean_defined(
            table
                .iter()
                .flat_map(|k| k[area].iter().map(move |&c| pick(c))),
        )
    };
    let at_threshold = |t: f64| match cfg.threshold_index(t) {
        Some(i) => mean_defined(table.iter().map(|k| k[0][i].ap)),
        None => UNDEFINED,
    };
    let per_category = vocabulary
        .iter()
        .zip(&table)
        .map(|(&category_id, k)| {
            let single = |t: f64| match cfg.threshold_index(t) {
                Some(i) => k[0][i].ap,
                None => UNDEFINED,
            };
            CategoryMetrics {
                category_id,
                ap: mean_defined(k[0].iter().map(|c| c.ap)),
                ap50: single(0.5),
                ap75: single(0.75),
                ar: mean_defined(k[0].iter().map(|c| c.recall)),
            }
        })
        .collect();

    Ok(EvalResult {
        ap: all_thresholds(0, |c| c.ap),
        ap50: at_threshold(0.5),
        ap75: at_threshold(0.75),
        ap_s: all_thresholds(1, |c| c.ap),
        ap_m: all_thresholds(2, |c| c.ap),
        ap_l: all_thresholds(3, |c| c.ap),
        ar: all_thresholds(0, |c| c.recall),
        per_category,
    })
}

/// Evaluation without and with a scale restriction to `range`.
pub fn ap_by_scale_report(
    gts: &[Instance],
    dets: &[Detection],
    cfg: &EvalConfig,
    range: &ScaleRange,
) -> Result<(EvalResult, EvalResult), EvalError> {
    let unrestricted = EvalConfig {
        scale_restriction: None,
        ..cfg.clone()
    };
    let restricted = EvalConfig {
        scale_restriction: Some(*range),
        ..cfg.clone()
    };
    Ok((
        evaluate(gts, dets, &unrestricted)?,
        evaluate(gts, dets, &restricted)?,
    ))
}
