//! Direct, quadratic-time transcriptions of the Soft-NMS and AP definitions.
//!
//! Boxes are handled as plain `[x, y, w, h]` arrays and overlaps are
//! computed from corner coordinates, so nothing here depends on the
//! geometry helpers of the code under test.

use std::collections::BTreeSet;

use isn_core::eval::EvalConfig;
use isn_core::fusion::{SoftNmsConfig, SoftNmsMethod};
use isn_core::{Detection, Instance};

/// `(image_id, category_id, [x, y, w, h], score)`
pub type Scored = (u64, u64, [f64; 4], f64);

fn corners(b: &[f64; 4]) -> (f64, f64, f64, f64) {
    (b[0], b[1], b[0] + b[2], b[1] + b[3])
}

pub fn intersection(a: &[f64; 4], b: &[f64; 4]) -> f64 {
    let (ax1, ay1, ax2, ay2) = corners(a);
    let (bx1, by1, bx2, by2) = corners(b);
    let w = ax2.min(bx2) - ax1.max(bx1);
    let h = ay2.min(by2) - ay1.max(by1);
    if w <= 0.0 || h <= 0.0 {
        0.0
    } else {
        w * h
    }
}

pub fn box_iou(a: &[f64; 4], b: &[f64; 4]) -> f64 {
    let i = intersection(a, b);
    if i == 0.0 {
        return 0.0;
    }
    i / (a[2] * a[3] + b[2] * b[3] - i)
}

fn by_score_then_box(a: &Scored, b: &Scored) -> std::cmp::Ordering {
    b.3.total_cmp(&a.3).then_with(|| {
        a.2.iter()
            .zip(&b.2)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    })
}

fn scored(d: &Detection) -> Scored {
    (d.image_id, d.category_id, d.bbox.to_array(), d.score())
}

/// Classic NMS: visit by score, keep a box unless a kept box of the same
/// category overlaps it by more than `threshold`.
pub fn classic_nms(dets: &[Detection], threshold: f64, floor: f64) -> Vec<Scored> {
    let mut order: Vec<Scored> = dets.iter().map(scored).filter(|d| d.3 >= floor).collect();
    order.sort_by(by_score_then_box);
    let mut kept: Vec<Scored> = Vec::new();
    for d in order {
        let suppressed = kept
            .iter()
            .any(|k| k.1 == d.1 && box_iou(&k.2, &d.2) > threshold);
        if !suppressed {
            kept.push(d);
        }
    }
    kept
}

/// Soft-NMS by repeated selection: take the highest current score, rescale
/// every remaining box of the same category by the decay of its overlap
/// with the selected one, drop those that fall under the floor, repeat.
pub fn iterative_soft_nms(dets: &[Detection], cfg: &SoftNmsConfig) -> Vec<Scored> {
    if let SoftNmsMethod::Hard { iou_threshold } = cfg.method {
        return classic_nms(dets, iou_threshold, cfg.score_floor);
    }
    let decay = |o: f64| match cfg.method {
        SoftNmsMethod::Gaussian { sigma } => (-(o * o) / sigma).exp(),
        SoftNmsMethod::Linear { iou_threshold } => {
            if o > iou_threshold {
                1.0 - o
            } else {
                1.0
            }
        }
        SoftNmsMethod::Hard { .. } => unreachable!(),
    };
    let mut remaining: Vec<Scored> = dets
        .iter()
        .map(scored)
        .filter(|d| d.3 >= cfg.score_floor)
        .collect();
    let mut out = Vec::new();
    while !remaining.is_empty() {
        let mut best = 0;
        for i in 1..remaining.len() {
            if by_score_then_box(&remaining[i], &remaining[best]).is_lt() {
                best = i;
            }
        }
        let top = remaining.remove(best);
        let mut next = Vec::with_capacity(remaining.len());
        for mut d in remaining {
            if d.1 == top.1 {
                d.3 *= decay(box_iou(&top.2, &d.2));
            }
            if d.3 > 0.0 && d.3 >= cfg.score_floor {
                next.push(d);
            }
        }
        remaining = next;
        out.push(top);
    }
    out
}

/// Sorts for order-insensitive comparison.
pub fn canonical(mut v: Vec<Scored>) -> Vec<Scored> {
    v.sort_by(|a, b| {
        (a.0, a.1)
            .cmp(&(b.0, b.1))
            .then_with(|| by_score_then_box(a, b))
    });
    v
}

/// Reference metrics, laid out like the library's result.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceMetrics {
    pub ap: f64,
    pub ap50: f64,
    pub ap75: f64,
    pub ap_s: f64,
    pub ap_m: f64,
    pub ap_l: f64,
    pub ar: f64,
    /// `(category, ap, ap50, ap75, ar)`
    pub per_category: Vec<(u64, f64, f64, f64, f64)>,
}

#[derive(Clone, Copy)]
enum Bucket {
    All,
    Small,
    Medium,
    Large,
}

struct Curve {
    ap: Option<f64>,
    recall: Option<f64>,
}

fn in_bucket(bucket: Bucket, area: f64, cfg: &EvalConfig) -> bool {
    let (s, m) = (cfg.area_buckets.small_max, cfg.area_buckets.medium_max);
    match bucket {
        Bucket::All => true,
        Bucket::Small => area < s,
        Bucket::Medium => area >= s && area < m,
        Bucket::Large => area >= m,
    }
}

fn scale_of(b: &[f64; 4]) -> f64 {
    (b[2] * b[3]).sqrt()
}

fn outside_restriction(b: &[f64; 4], cfg: &EvalConfig) -> bool {
    cfg.scale_restriction.is_some_and(|r| {
        let s = scale_of(b);
        s < r.lower() || s > r.upper()
    })
}

/// One (category, bucket, threshold) precision/recall curve.
fn curve(
    gts: &[Instance],
    dets: &[Detection],
    images: &BTreeSet<u64>,
    category: u64,
    bucket: Bucket,
    threshold: f64,
    cfg: &EvalConfig,
) -> Curve {
    let floor = threshold.min(1.0 - 1e-10);
    let mut regular = 0usize;
    // (score, true positive) of every ranked detection, image by image.
    let mut ranked: Vec<(f64, bool)> = Vec::new();
    for &image in images {
        let g: Vec<&Instance> = gts
            .iter()
            .filter(|g| g.image_id == image && g.category_id == category)
            .collect();
        let g_box: Vec<[f64; 4]> = g.iter().map(|g| g.bbox.to_array()).collect();
        let g_ignored: Vec<bool> = g
            .iter()
            .zip(&g_box)
            .map(|(g, b)| {
                g.iscrowd || !in_bucket(bucket, b[2] * b[3], cfg) || outside_restriction(b, cfg)
            })
            .collect();
        regular += g_ignored.iter().filter(|&&x| !x).count();

        let mut d: Vec<Scored> = dets
            .iter()
            .filter(|d| d.image_id == image && d.category_id == category)
            .map(scored)
            .filter(|d| !outside_restriction(&d.2, cfg))
            .collect();
        // Stable sort keeps input order among equal scores.
        d.sort_by(|a, b| b.3.total_cmp(&a.3));
        d.truncate(cfg.max_dets);

        let mut taken = vec![false; g.len()];
        for det in &d {
            let overlap = |k: usize| {
                if g[k].iscrowd {
                    intersection(&det.2, &g_box[k]) / (det.2[2] * det.2[3])
                } else {
                    box_iou(&det.2, &g_box[k])
                }
            };
            let pick = |want_ignored: bool| -> Option<usize> {
                let mut best: Option<(usize, f64)> = None;
                for k in 0..g.len() {
                    if g_ignored[k] != want_ignored || (taken[k] && !g[k].iscrowd) {
                        continue;
                    }
                    let o = overlap(k);
                    if o >= floor && best.is_none_or(|(_, bo)| o > bo) {
                        best = Some((k, o));
                    }
                }
                best.map(|(k, _)| k)
            };
            match pick(false).or_else(|| pick(true)) {
                Some(k) => {
                    taken[k] = true;
                    if !g_ignored[k] {
                        ranked.push((det.3, true));
                    }
                }
                None => {
                    if in_bucket(bucket, det.2[2] * det.2[3], cfg) {
                        ranked.push((det.3, false));
                    }
                }
            }
        }
    }
    if regular == 0 {
        return Curve {
            ap: None,
            recall: None,
        };
    }
    ranked.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut points: Vec<(f64, f64)> = Vec::new();
    let mut tp = 0usize;
    for (i, &(_, hit)) in ranked.iter().enumerate() {
        tp += usize::from(hit);
        points.push((tp as f64 / regular as f64, tp as f64 / (i + 1) as f64));
    }
    let n = cfg.recall_points;
    let total: f64 = (0..n)
        .map(|j| {
            let r = j as f64 / (n - 1) as f64;
            points
                .iter()
                .filter(|(rec, _)| *rec >= r)
                .map(|(_, p)| *p)
                .fold(0.0, f64::max)
        })
        .sum();
    Curve {
        ap: Some(total / n as f64),
        recall: Some(points.last().map_or(0.0, |p| p.0)),
    }
}

fn mean(values: impl Iterator<Item = Option<f64>>) -> f64 {
    let defined: Vec<f64> = values.flatten().collect();
    if defined.is_empty() {
        -1.0
    } else {
        defined.iter().sum::<f64>() / defined.len() as f64
    }
}

/// Brute-force COCO-style evaluation.
pub fn brute_force_eval(
    gts: &[Instance],
    dets: &[Detection],
    cfg: &EvalConfig,
) -> ReferenceMetrics {
    let categories: BTreeSet<u64> = match &cfg.category_ids {
        Some(ids) => ids.iter().copied().collect(),
        None => gts.iter().map(|g| g.category_id).collect(),
    };
    let images: BTreeSet<u64> = gts
        .iter()
        .map(|g| g.image_id)
        .chain(dets.iter().map(|d| d.image_id))
        .collect();
    let thresholds = &cfg.iou_thresholds;
    let at = |t: f64| thresholds.iter().position(|&x| (x - t).abs() < 1e-9);
    let grid = |bucket: Bucket| -> Vec<Vec<Curve>> {
        categories
            .iter()
            .map(|&c| {
                thresholds
                    .iter()
                    .map(|&t| curve(gts, dets, &images, c, bucket, t, cfg))
                    .collect()
            })
            .collect()
    };
    let all = grid(Bucket::All);
    let bucket_ap = |bucket: Bucket| mean(grid(bucket).iter().flatten().map(|c| c.ap));
    let single = |curves: &[Curve], t: f64| at(t).and_then(|i| curves[i].ap).unwrap_or(-1.0);
    let across = |t: f64| match at(t) {
        Some(i) => mean(all.iter().map(|k| k[i].ap)),
        None => -1.0,
    };
    ReferenceMetrics {
        ap: mean(all.iter().flatten().map(|c| c.ap)),
        ap50: across(0.5),
        ap75: across(0.75),
        ap_s: bucket_ap(Bucket::Small),
        ap_m: bucket_ap(Bucket::Medium),
        ap_l: bucket_ap(Bucket::Large),
        ar: mean(all.iter().flatten().map(|c| c.recall)),
        per_category: categories
            .iter()
            .zip(&all)
            .map(|(&c, k)| {
                (
                    c,
                    mean(k.iter().map(|x| x.ap)),
                    single(k, 0.5),
                    single(k, 0.75),
                    mean(k.iter().map(|x| x.recall)),
                )
            })
            .collect(),
    }
}
