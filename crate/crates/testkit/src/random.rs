//! Seeded random problems.

use isn_core::eval::EvalConfig;
use isn_core::fusion::{SoftNmsConfig, SoftNmsMethod};
use isn_core::{BBox, Detection, Instance, ScaleRange};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn log_uniform(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    rng.random_range(lo.ln()..hi.ln()).exp()
}

/// Box of roughly `scale` pixels somewhere in a `size` x `size` image.
pub fn random_box(rng: &mut impl Rng, scale: f64, size: f64) -> BBox {
    let aspect = log_uniform(rng, 0.5, 2.0);
    let w = (scale * aspect.sqrt()).min(size);
    let h = (scale / aspect.sqrt()).min(size);
    let x = rng.random_range(0.0..=size - w);
    let y = rng.random_range(0.0..=size - h);
    BBox::new(x, y, w, h).expect("positive extent")
}

/// `b` with every coordinate moved by up to `frac` of its size.
pub fn jitter(rng: &mut impl Rng, b: &BBox, frac: f64) -> BBox {
    let mut d = |v: f64| rng.random_range(-frac..=frac) * v;
    let x = (b.x() + d(b.w())).max(0.0);
    let y = (b.y() + d(b.h())).max(0.0);
    let w = (b.w() + d(b.w())).max(1.0);
    let h = (b.h() + d(b.h())).max(1.0);
    BBox::new(x, y, w, h).expect("positive extent")
}

pub fn random_soft_nms_config(rng: &mut impl Rng) -> SoftNmsConfig {
    let method = match rng.random_range(0..3) {
        0 => SoftNmsMethod::Gaussian {
            sigma: rng.random_range(0.1..1.0),
        },
        1 => SoftNmsMethod::Linear {
            iou_threshold: rng.random_range(0.1..0.9),
        },
        _ => SoftNmsMethod::Hard {
            iou_threshold: rng.random_range(0.1..0.9),
        },
    };
    SoftNmsConfig {
        method,
        score_floor: *[0.0, 0.001, 0.05].choose(rng).expect("non-empty"),
    }
}

/// Up to `max_n` detections of one image, clustered so that many overlap.
pub fn clustered_detections(rng: &mut impl Rng, max_n: usize) -> Vec<Detection> {
    let n = rng.random_range(1..=max_n);
    let centres: Vec<BBox> = (0..rng.random_range(1..=8))
        .map(|_| {
            let s = log_uniform(rng, 10.0, 200.0);
            random_box(rng, s, 400.0)
        })
        .collect();
    (0..n)
        .map(|_| {
            let c = centres.choose(rng).expect("non-empty");
            let bbox = jitter(rng, c, 0.3);
            let category = rng.random_range(1..=3);
            let score = rng.random_range(0.01..=1.0);
            Detection::new(1, category, bbox, score, None).expect("valid detection")
        })
        .collect()
}

/// A tiny evaluation problem: at most 5 images, 10 ground-truth boxes,
/// 10 detections and 3 categories, with crowd regions, tied scores,
/// detection caps and scale restrictions mixed in at random.
pub fn micro_eval_problem(rng: &mut impl Rng) -> (Vec<Instance>, Vec<Detection>, EvalConfig) {
    const SIZE: f64 = 300.0;
    let n_images = rng.random_range(1..=5u64);
    let n_gt = rng.random_range(0..=10);
    let mut gts: Vec<Instance> = Vec::with_capacity(n_gt);
    for i in 0..n_gt {
        let s = log_uniform(rng, 5.0, 200.0);
        let mut inst = Instance {
            id: i as u64 + 1,
            image_id: rng.random_range(1..=n_images),
            category_id: rng.random_range(1..=3),
            bbox: random_box(rng, s, SIZE),
            iscrowd: rng.random_bool(0.15),
        };
        // Exact copies make detections tie between ground-truth boxes.
        if let Some(prev) = gts.last().filter(|_| rng.random_bool(0.15)) {
            inst.image_id = prev.image_id;
            inst.category_id = prev.category_id;
            inst.bbox = prev.bbox;
        }
        gts.push(inst);
    }

    let fixed_vocabulary = gts.is_empty() || rng.random_bool(0.5);
    let gt_categories: Vec<u64> = gts.iter().map(|g| g.category_id).collect();
    let tied_scores = rng.random_bool(0.3);
    let n_det = rng.random_range(0..=10);
    let mut dets: Vec<Detection> = Vec::with_capacity(n_det);
    while dets.len() < n_det {
        let score = if tied_scores {
            *[0.3, 0.5, 0.9].choose(rng).expect("non-empty")
        } else {
            rng.random_range(0.0..=1.0)
        };
        let det = match gts.choose(rng) {
            Some(g) if rng.random_bool(0.6) => {
                let bbox = if rng.random_bool(0.2) {
                    g.bbox
                } else {
                    jitter(rng, &g.bbox, 0.25)
                };
                let category = if rng.random_bool(0.1) && fixed_vocabulary {
                    rng.random_range(1..=3)
                } else {
                    g.category_id
                };
                Detection::new(g.image_id, category, bbox, score, None)
            }
            _ => {
                let category = if fixed_vocabulary {
                    rng.random_range(1..=3)
                } else {
                    *gt_categories.choose(rng).expect("ground truth present")
                };
                let s = log_uniform(rng, 5.0, 200.0);
                let bbox = random_box(rng, s, SIZE);
                Detection::new(rng.random_range(1..=n_images), category, bbox, score, None)
            }
        };
        dets.push(det.expect("valid detection"));
        if rng.random_bool(0.1) && dets.len() < n_det {
            let copy = dets.last().expect("just pushed").clone();
            dets.push(copy);
        }
    }

    let scale_restriction = rng.random_bool(0.3).then(|| {
        let lo = *[0.0, 8.0, 16.0, 32.0].choose(rng).expect("non-empty");
        let hi = *[48.0, 64.0, 128.0, f64::INFINITY]
            .choose(rng)
            .expect("non-empty");
        ScaleRange::new(lo, hi).expect("ordered")
    });
    let cfg = EvalConfig {
        scale_restriction,
        max_dets: if rng.random_bool(0.3) {
            rng.random_range(1..=3)
        } else {
            100
        },
        category_ids: fixed_vocabulary.then(|| vec![1, 2, 3]),
        ..EvalConfig::default()
    };
    (gts, dets, cfg)
}
