//! Test-time gathering of pyramid predictions: gate each resolution by the
//! scale range, map boxes back to the original image, then suppress
//! duplicates with Soft-NMS.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::FusionError;
use crate::geometry::{iou, project_box, Detection, ScaleRange};

/// How overlapping detections are rescored.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "lowercase")]
pub enum SoftNmsMethod {
    /// `score *= exp(-iou^2 / sigma)`
    Gaussian { sigma: f64 },
    /// `score *= 1 - iou` when `iou > iou_threshold`
    Linear { iou_threshold: f64 },
    /// Classic NMS: drop when `iou > iou_threshold`.
    Hard { iou_threshold: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SoftNmsConfig {
    #[serde(flatten)]
    pub method: SoftNmsMethod,
    /// Detections whose score falls below this are dropped.
    pub score_floor: f64,
}

impl SoftNmsConfig {
    pub fn validate(&self) -> Result<(), FusionError> {
        let bad = |m: String| Err(FusionError::InvalidConfig(m));
        match self.method {
            SoftNmsMethod::Gaussian { sigma } if !(sigma.is_finite() && sigma > 0.0) => {
                return bad(format!("sigma must be positive, got {sigma}"))
            }
            SoftNmsMethod::Linear { iou_threshold } | SoftNmsMethod::Hard { iou_threshold }
                if !(iou_threshold > 0.0 && iou_threshold < 1.0) =>
            {
                return bad(format!(
                    "iou_threshold must lie in (0, 1), got {iou_threshold}"
                ))
            }
            _ => {}
        }
        if !(0.0..1.0).contains(&self.score_floor) {
            return bad(format!(
                "score_floor must lie in [0, 1), got {}",
                self.score_floor
            ));
        }
        Ok(())
    }

    fn decay_factor(&self, overlap: f64) -> f64 {
        match self.method {
            SoftNmsMethod::Gaussian { sigma } => (-(overlap * overlap) / sigma).exp(),
            SoftNmsMethod::Linear { iou_threshold } if overlap > iou_threshold => 1.0 - overlap,
            SoftNmsMethod::Hard { iou_threshold } if overlap > iou_threshold => 0.0,
            _ => 1.0,
        }
    }
}

impl Default for SoftNmsConfig {
    fn default() -> Self {
        Self {
            method: SoftNmsMethod::Gaussian { sigma: 0.5 },
            score_floor: 0.001,
        }
    }
}

/// Total order used wherever detections must be ranked: score descending,
/// then resolution index ascending (untagged last), then box coordinates.
pub fn rank_order(a: &Detection, b: &Detection) -> Ordering {
    b.score()
        .total_cmp(&a.score())
        .then_with(|| {
            let key = |d: &Detection| d.resolution_index.map_or(usize::MAX, |i| i);
            key(a).cmp(&key(b))
        })
        .then_with(|| a.bbox.lexicographic_cmp(&b.bbox))
        .then_with(|| a.category_id.cmp(&b.category_id))
        .then_with(|| a.image_id.cmp(&b.image_id))
}

/// Keeps detections whose scale in the resized image lies in `range`, and
/// maps the survivors back to original-image coordinates. Input order is
/// preserved.
pub fn gate_predictions(dets: &[Detection], omega: f64, range: &ScaleRange) -> Vec<Detection> {
    dets.iter()
        .filter(|d| range.contains(d.bbox.scale()))
        .map(|d| d.with_bbox(project_box(&d.bbox, 1.0 / omega)))
        .collect()
}

/// Greedy Soft-NMS, run independently per category.
///
/// Output is sorted by final score, ties resolved by [`rank_order`].
pub fn soft_nms(dets: &[Detection], cfg: &SoftNmsConfig) -> Vec<Detection> {
    let mut by_category: BTreeMap<u64, Vec<Detection>> = BTreeMap::new();
    for d in dets.iter().filter(|d| d.score() >= cfg.score_floor) {
        by_category
            .entry(d.category_id)
            .or_default()
            .push(d.clone());
    }
    let mut out = Vec::with_capacity(dets.len());
    for (_, mut pool) in by_category {
        while !pool.is_empty() {
            let best = (1..pool.len()).fold(0, |best, i| {
                if rank_order(&pool[i], &pool[best]).is_lt() {
                    i
                } else {
                    best
                }
            });
            let kept = pool.swap_remove(best);
            pool.retain_mut(|d| {
                let factor = cfg.decay_factor(iou(&kept.bbox, &d.bbox));
                d.decay(factor);
                factor > 0.0 && d.score() >= cfg.score_floor
            });
            out.push(kept);
        }
    }
    out.sort_by(rank_order);
    out
}

/// Gates every resolution, pools the projected survivors and runs
/// [`soft_nms`]. All detections must belong to one image. `top_k` caps the
/// output after suppression.
pub fn fuse_multiscale(
    per_resolution: &[(f64, Vec<Detection>)],
    range: &ScaleRange,
    cfg: &SoftNmsConfig,
    top_k: Option<usize>,
) -> Vec<Detection> {
    let mut pooled: Vec<Detection> = per_resolution
        .iter()
        .flat_map(|(omega, dets)| gate_predictions(dets, *omega, range))
        .collect();
    pooled.sort_by(rank_order);
    let mut fused = soft_nms(&pooled, cfg);
    if let Some(k) = top_k {
        fused.truncate(k);
    }
    fused
}

/// [`fuse_multiscale`] applied image by image; output grouped by image id.
pub fn fuse_dataset(
    per_resolution: &[(f64, Vec<Detection>)],
    range: &ScaleRange,
    cfg: &SoftNmsConfig,
    top_k: Option<usize>,
) -> Vec<Detection> {
    use rayon::prelude::*;

    let mut per_image: BTreeMap<u64, Vec<(f64, Vec<Detection>)>> = BTreeMap::new();
    for (omega, dets) in per_resolution {
        for d in dets {
            let levels = per_image.entry(d.image_id).or_default();
            match levels.iter_mut().find(|(w, _)| w == omega) {
                Some((_, v)) => v.push(d.clone()),
                None => levels.push((*omega, vec![d.clone()])),
            }
        }
    }
    let images: Vec<_> = per_image.into_values().collect();
    images
        .par_iter()
        .map(|levels| fuse_multiscale(levels, range, cfg, top_k))
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::BBox;
    use proptest::prelude::*;

    fn det(x: f64, y: f64, w: f64, h: f64, score: f64, res: usize) -> Detection {
        Detection::new(1, 1, BBox::new(x, y, w, h).unwrap(), score, Some(res)).unwrap()
    }

    #[test]
    fn gate_examples() {
        let r = ScaleRange::default();
        let kept = gate_predictions(&[det(10.0, 20.0, 70.0, 70.0, 0.9, 1)], 2.0, &r);
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].bbox.to_array(), [5.0, 10.0, 35.0, 35.0]);
        assert!(gate_predictions(&[det(0.0, 0.0, 8.0, 8.0, 0.9, 0)], 0.25, &r).is_empty());
        assert!(gate_predictions(&[det(0.0, 0.0, 600.0, 600.0, 0.9, 0)], 4.0, &r).is_empty());
    }

    #[test]
    fn gaussian_decay_of_identical_pair() {
        let out = soft_nms(
            &[
                det(0.0, 0.0, 10.0, 10.0, 0.8, 0),
                det(0.0, 0.0, 10.0, 10.0, 0.9, 1),
            ],
            &SoftNmsConfig::default(),
        );
        assert_eq!(out.len(), 2);
        assert_eq!(out[0].score(), 0.9);
        // 0.8 * exp(-1 / 0.5) = 0.8 * exp(-2)
        let expected = 0.8 * 0.1353352832366127;
        assert!((out[1].score() - expected).abs() < 1e-12);
        assert!((out[1].score() - 0.10827).abs() < 5e-6);
    }

    #[test]
    fn disjoint_and_single_are_untouched() {
        let cfg = SoftNmsConfig::default();
        let a = det(0.0, 0.0, 10.0, 10.0, 0.9, 0);
        let b = det(50.0, 50.0, 10.0, 10.0, 0.7, 0);
        assert_eq!(soft_nms(&[b.clone(), a.clone()], &cfg), vec![a.clone(), b]);
        assert_eq!(soft_nms(std::slice::from_ref(&a), &cfg), vec![a]);
        assert!(soft_nms(&[], &cfg).is_empty());
    }

    #[test]
    fn categories_do_not_suppress_each_other() {
        let a = det(0.0, 0.0, 10.0, 10.0, 0.9, 0);
        let mut b = det(0.0, 0.0, 10.0, 10.0, 0.8, 0);
        b.category_id = 2;
        let out = soft_nms(&[a, b], &SoftNmsConfig::default());
        assert_eq!(out[1].score(), 0.8);
    }

    #[test]
    fn score_floor_drops_decayed() {
        let cfg = SoftNmsConfig {
            method: SoftNmsMethod::Gaussian { sigma: 0.5 },
            score_floor: 0.2,
        };
        let out = soft_nms(
            &[
                det(0.0, 0.0, 10.0, 10.0, 0.9, 0),
                det(0.0, 0.0, 10.0, 10.0, 0.8, 0),
            ],
            &cfg,
        );
        assert_eq!(out.len(), 1);
    }

    #[test]
    fn config_validation() {
        assert!(SoftNmsConfig::default().validate().is_ok());
        let bad = SoftNmsConfig {
            method: SoftNmsMethod::Linear { iou_threshold: 1.0 },
            score_floor: 0.0,
        };
        assert!(bad.validate().is_err());
        let json = serde_json::to_string(&SoftNmsConfig::default()).unwrap();
        assert_eq!(
            json,
            r#"{"method":"gaussian","sigma":0.5,"score_floor":0.001}"#
        );
        let back: SoftNmsConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, SoftNmsConfig::default());
    }

    #[test]
    fn fusion_examples() {
        let cfg = SoftNmsConfig::default();
        // Same object at omega 1 (scale 70) and omega 2 (scale 140).
        let low = vec![det(10.0, 10.0, 70.0, 70.0, 0.9, 2)];
        let high = vec![det(20.0, 20.0, 140.0, 140.0, 0.85, 1)];
        let fused = fuse_multiscale(
            &[(1.0, low), (2.0, high)],
            &ScaleRange::default(),
            &cfg,
            None,
        );
        assert_eq!(fused.len(), 2);
        assert_eq!(fused[0].score(), 0.9);
        assert!((fused[1].score() - 0.85 * (-2.0f64).exp()).abs() < 1e-12);

        // Original scale 8, only visible at omega 4.
        let tiny = vec![det(40.0, 40.0, 32.0, 32.0, 0.7, 0)];
        let fused = fuse_multiscale(&[(4.0, tiny)], &ScaleRange::default(), &cfg, None);
        assert_eq!(fused.len(), 1);
        assert_eq!(fused[0].bbox.to_array(), [10.0, 10.0, 8.0, 8.0]);
    }

    #[test]
    fn single_resolution_unbounded_is_plain_soft_nms() {
        let cfg = SoftNmsConfig::default();
        let dets = vec![
            det(0.0, 0.0, 20.0, 20.0, 0.6, 0),
            det(4.0, 2.0, 20.0, 20.0, 0.9, 0),
            det(3.0, 0.0, 2.0, 2.0, 0.3, 0),
        ];
        let fused = fuse_multiscale(&[(2.0, dets.clone())], &ScaleRange::unbounded(), &cfg, None);
        let projected: Vec<Detection> = dets
            .iter()
            .map(|d| d.with_bbox(project_box(&d.bbox, 0.5)))
            .collect();
        assert_eq!(fused, soft_nms(&projected, &cfg));
    }

    fn any_det(res: usize) -> impl Strategy<Value = Detection> {
        (
            0.0..100.0f64,
            0.0..100.0f64,
            1.0..700.0f64,
            1.0..700.0f64,
            0.0..1.0f64,
            1u64..3,
        )
            .prop_map(move |(x, y, w, h, s, c)| {
                let mut d = det(x, y, w, h, s, res);
                d.category_id = c;
                d
            })
    }

    proptest! {
        #[test]
        fn soft_nms_never_raises_scores_and_keeps_top(
            dets in proptest::collection::vec(any_det(0), 1..30)
        ) {
            let cfg = SoftNmsConfig { score_floor: 0.0, ..SoftNmsConfig::default() };
            let out = soft_nms(&dets, &cfg);
            let top = dets.iter().min_by(|a, b| rank_order(a, b)).unwrap();
            prop_assert_eq!(&out[0], top);
            for o in &out {
                let best_input = dets.iter()
                    .filter(|d| d.bbox == o.bbox && d.category_id == o.category_id)
                    .map(|d| d.score())
                    .fold(0.0, f64::max);
                prop_assert!(o.score() <= best_input);
            }
        }

        #[test]
        fn gating_is_idempotent(dets in proptest::collection::vec(any_det(0), 0..30)) {
            let r = ScaleRange::default();
            let once = gate_predictions(&dets, 1.0, &r);
            prop_assert_eq!(gate_predictions(&once, 1.0, &r), once);
        }

        #[test]
        fn fusion_ignores_resolution_order(
            a in proptest::collection::vec(any_det(0), 0..15),
            b in proptest::collection::vec(any_det(1), 0..15),
            c in proptest::collection::vec(any_det(2), 0..15),
        ) {
            let cfg = SoftNmsConfig::default();
            let r = ScaleRange::default();
            let fwd = fuse_multiscale(&[(2.0, a.clone()), (1.0, b.clone()), (0.5, c.clone())], &r, &cfg, Some(100));
            let rev = fuse_multiscale(&[(0.5, c), (2.0, a), (1.0, b)], &r, &cfg, Some(100));
            prop_assert_eq!(fwd, rev);
        }
    }
}
