//! Synthetic scale-conditioned detector.
//!
//! Stands in for a trained network: a ground-truth object is found with a
//! probability and a localization error that depend only on its scale in
//! the resized image. Inside the reliable band `[sweet_low, sweet_high]`
//! detection is likely and tight; every octave outside the band multiplies
//! the detection probability by `p_detect_decay` and the box noise by
//! `loc_noise_growth`. Spurious boxes arrive at `fp_rate` per image and
//! resolution.
//!
//! All randomness comes from ChaCha substreams keyed by
//! `(seed, image, instance, resolution)`, so results do not depend on
//! iteration order, thread count or which other resolutions are simulated.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Category, Dataset, ImageInfo};
use crate::error::SimError;
use crate::eval::{evaluate, EvalConfig, EvalResult};
use crate::fusion::{fuse_dataset, gate_predictions, soft_nms, SoftNmsConfig};
use crate::geometry::{
    instance_scale, iou, project_box, resize_plan, BBox, Detection, Instance, PyramidSpec,
    ScaleRange,
};

/// Clamped normal score distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreModel {
    pub mean: f64,
    pub std: f64,
}

impl ScoreModel {
    fn sample(&self, rng: &mut impl Rng) -> f64 {
        let n: f64 = Normal::new(self.mean, self.std)
            .expect("validated score model")
            .sample(rng);
        n.clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorProfile {
    pub sweet_low: f64,
    pub sweet_high: f64,
    pub p_detect_in_band: f64,
    pub p_detect_decay: f64,
    pub loc_noise_frac: f64,
    pub loc_noise_growth: f64,
    pub fp_rate: f64,
    pub tp_score: ScoreModel,
    pub fp_score: ScoreModel,
    pub seed: u64,
}

impl Default for DetectorProfile {
    fn default() -> Self {
        Self {
            sweet_low: 32.0,
            sweet_high: 480.0,
            p_detect_in_band: 0.95,
            p_detect_decay: 0.5,
            loc_noise_frac: 0.02,
            loc_noise_growth: 2.0,
            fp_rate: 0.5,
            tp_score: ScoreModel {
                mean: 0.8,
                std: 0.1,
            },
            fp_score: ScoreModel {
                mean: 0.3,
                std: 0.15,
            },
            seed: 0,
        }
    }
}

impl DetectorProfile {
    /// Detects everything, exactly, at every scale, with a constant score.
    pub fn perfect(seed: u64) -> Self {
        Self {
            p_detect_in_band: 1.0,
            p_detect_decay: 1.0,
            loc_noise_frac: 0.0,
            fp_rate: 0.0,
            tp_score: ScoreModel {
                mean: 0.9,
                std: 0.0,
            },
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::InvalidProfile(m.to_string()));
        let unit = |p: f64| (0.0..=1.0).contains(&p);
        if !unit(self.p_detect_in_band) || !unit(self.p_detect_decay) {
            return bad("probabilities must lie in [0, 1]");
        }
        if !(self.sweet_low > 0.0 && self.sweet_low < self.sweet_high) {
            return bad("need 0 < sweet_low < sweet_high");
        }
        let non_negative = [
            self.loc_noise_frac,
            self.loc_noise_growth,
            self.fp_rate,
            self.tp_score.std,
            self.fp_score.std,
        ];
        if non_negative.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return bad("noise parameters and rates must be finite and non-negative");
        }
        if !self.tp_score.mean.is_finite() || !self.fp_score.mean.is_finite() {
            return bad("score means must be finite");
        }
        Ok(())
    }

    /// Distance in octaves from `scale` to the reliable band; 0 inside.
    pub fn octaves_outside(&self, scale: f64) -> f64 {
        if scale < self.sweet_low {
            (self.sweet_low / scale).log2()
        } else if scale > self.sweet_high {
            (scale / self.sweet_high).log2()
        } else {
            0.0
        }
    }

    pub fn detect_probability(&self, resized_scale: f64) -> f64 {
        self.p_detect_in_band
            * self
                .p_detect_decay
                .powf(self.octaves_outside(resized_scale))
    }

    /// Relative standard deviation of the box jitter.
    pub fn noise_std(&self, resized_scale: f64) -> f64 {
        self.loc_noise_frac
            * self
                .loc_noise_growth
                .powf(self.octaves_outside(resized_scale))
    }
}

/// Shape of a generated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub num_images: usize,
    pub image_height: u32,
    pub image_width: u32,
    pub min_scale: f64,
    pub max_scale: f64,
    pub min_instances: usize,
    pub max_instances: usize,
    pub num_categories: u64,
    /// Aspect ratios `w / h` are drawn log-uniform in `[1/max_aspect, max_aspect]`.
    pub max_aspect: f64,
    /// Keep boxes of one image pairwise disjoint. Placement is retried a
    /// bounded number of times; objects that do not fit are left out.
    pub disjoint: bool,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            num_images: 200,
            image_height: 480,
            image_width: 640,
            min_scale: 4.0,
            max_scale: 640.0,
            min_instances: 1,
            max_instances: 20,
            num_categories: 3,
            max_aspect: 2.0,
            disjoint: false,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::InvalidDataset(m.to_string()));
        if self.image_height == 0 || self.image_width == 0 {
            return bad("image size must be positive");
        }
        if !(self.min_scale > 0.0 && self.min_scale <= self.max_scale && self.max_scale.is_finite())
        {
            return bad("need 0 < min_scale <= max_scale");
        }
        if self.min_instances > self.max_instances {
            return bad("min_instances exceeds max_instances");
        }
        if self.num_categories == 0 {
            return bad("need at least one category");
        }
        if !(self.max_aspect >= 1.0 && self.max_aspect.is_finite()) {
            return bad("max_aspect must be >= 1");
        }
        Ok(())
    }
}

const STREAM_IMAGE: u64 = 1;
const STREAM_OBJECT: u64 = 2;
const STREAM_SPURIOUS: u64 = 3;
const STREAM_POPULATION: u64 = 4;
const PLACEMENT_TRIES: usize = 50;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn substream(seed: u64, key: &[u64]) -> ChaCha8Rng {
    let mixed = key.iter().fold(splitmix(seed), |acc, &k| splitmix(acc ^ k));
    ChaCha8Rng::seed_from_u64(mixed)
}

fn log_uniform(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    if hi <= lo {
        return lo;
    }
    rng.random_range(lo.ln()..hi.ln()).exp()
}

/// Box of the given scale and aspect ratio placed uniformly so it fits the
/// image when it can; larger boxes are anchored at the origin side.
fn place_box(rng: &mut impl Rng, scale: f64, aspect: f64, image_h: f64, image_w: f64) -> BBox {
    let w = scale * aspect.sqrt();
    let h = scale / aspect.sqrt();
    let x = rng.random_range(0.0..=(image_w - w).max(0.0));
    let y = rng.random_range(0.0..=(image_h - h).max(0.0));
    BBox::new(x, y, w, h).expect("positive extent by construction")
}

fn categories(n: u64) -> Vec<Category> {
    (1..=n)
        .map(|id| Category {
            id,
            name: format!("class-{id}"),
        })
        .collect()
}

/// Images with instance scales log-uniform over `[min_scale, max_scale]`.
pub fn generate_dataset(cfg: &SyntheticConfig, seed: u64) -> Result<Dataset, SimError> {
    cfg.validate()?;
    let mut images = Vec::with_capacity(cfg.num_images);
    let mut instances = Vec::new();
    let (ih, iw) = (cfg.image_height as f64, cfg.image_width as f64);
    for image_id in 1..=cfg.num_images as u64 {
        images.push(ImageInfo {
            id: image_id,
            height: cfg.image_height,
            width: cfg.image_width,
        });
        let mut rng = substream(seed, &[STREAM_IMAGE, image_id]);
        let n = rng.random_range(cfg.min_instances..=cfg.max_instances);
        let first = instances.len();
        for _ in 0..n {
            let scale = log_uniform(&mut rng, cfg.min_scale, cfg.max_scale);
            let aspect = log_uniform(&mut rng, 1.0 / cfg.max_aspect, cfg.max_aspect);
            let mut bbox = place_box(&mut rng, scale, aspect, ih, iw);
            let category_id = rng.random_range(1..=cfg.num_categories);
            if cfg.disjoint {
                let clear =
                    |b: &BBox, placed: &[Instance]| placed.iter().all(|o| iou(b, &o.bbox) == 0.0);
                let mut tries = 0;
                while !clear(&bbox, &instances[first..]) && tries < PLACEMENT_TRIES {
                    bbox = place_box(&mut rng, scale, aspect, ih, iw);
                    tries += 1;
                }
                if !clear(&bbox, &instances[first..]) {
                    continue;
                }
            }
            instances.push(Instance {
                id: instances.len() as u64 + 1,
                image_id,
                category_id,
                bbox,
                iscrowd: false,
            });
        }
    }
    Dataset::new(images, categories(cfg.num_categories), instances)
        .map_err(|e| SimError::InvalidDataset(e.to_string()))
}

/// `n` square-ish instances with log-normal scales (`median`, log-space
/// `sigma`), ten per 480x640 image.
pub fn lognormal_population(
    n: usize,
    median: f64,
    sigma: f64,
    seed: u64,
) -> Result<Dataset, SimError> {
    if !(median > 0.0 && sigma >= 0.0 && sigma.is_finite()) {
        return Err(SimError::InvalidDataset(
            "need median > 0 and sigma >= 0".into(),
        ));
    }
    let normal = Normal::new(median.ln(), sigma).expect("checked above");
    let mut rng = substream(seed, &[STREAM_POPULATION]);
    let per_image = 10;
    let n_images = n.div_ceil(per_image).max(1);
    let images = (1..=n_images as u64)
        .map(|id| ImageInfo {
            id,
            height: 480,
            width: 640,
        })
        .collect();
    let instances = (0..n)
        .map(|i| {
            let scale = normal.sample(&mut rng).exp();
            let aspect = log_uniform(&mut rng, 0.5, 2.0);
            Instance {
                id: i as u64 + 1,
                image_id: (i / per_image) as u64 + 1,
                category_id: 1,
                bbox: place_box(&mut rng, scale, aspect, 480.0, 640.0),
                iscrowd: false,
            }
        })
        .collect();
    Dataset::new(images, categories(1), instances)
        .map_err(|e| SimError::InvalidDataset(e.to_string()))
}

fn detect_object(
    inst: &Instance,
    omega: f64,
    resolution_index: usize,
    profile: &DetectorProfile,
) -> Option<Detection> {
    let mut rng = substream(
        profile.seed,
        &[STREAM_OBJECT, inst.image_id, inst.id, omega.to_bits()],
    );
    let resized = instance_scale(&inst.bbox, omega);
    let hit: f64 = rng.random();
    if hit >= profile.detect_probability(resized) {
        return None;
    }
    let b = project_box(&inst.bbox, omega);
    let sigma = profile.noise_std(resized);
    let bbox = if sigma > 0.0 {
        let jitter = Normal::new(0.0, sigma).expect("finite sigma");
        let (dx, dy, sw, sh): (f64, f64, f64, f64) = (
            jitter.sample(&mut rng),
            jitter.sample(&mut rng),
            jitter.sample(&mut rng),
            jitter.sample(&mut rng),
        );
        let (w, h) = (b.w() * sw.exp(), b.h() * sh.exp());
        // Jitter the centre, then rebuild the corner from the new extent.
        let x = b.x() + dx * b.w() + (b.w() - w) / 2.0;
        let y = b.y() + dy * b.h() + (b.h() - h) / 2.0;
        BBox::new(x.max(0.0), y.max(0.0), w, h).ok()?
    } else {
        b
    };
    let score = profile.tp_score.sample(&mut rng);
    Detection::new(
        inst.image_id,
        inst.category_id,
        bbox,
        score,
        Some(resolution_index),
    )
    .ok()
}

fn spurious(
    image: &ImageInfo,
    omega: f64,
    resolution_index: usize,
    category_ids: &[u64],
    profile: &DetectorProfile,
) -> Vec<Detection> {
    if profile.fp_rate <= 0.0 || category_ids.is_empty() {
        return Vec::new();
    }
    let mut rng = substream(profile.seed, &[STREAM_SPURIOUS, image.id, omega.to_bits()]);
    let count = Poisson::new(profile.fp_rate)
        .expect("positive rate")
        .sample(&mut rng) as usize;
    let (rh, rw) = resize_plan(image.height, image.width, omega);
    let max_scale = (rh.min(rw) as f64).max(4.0);
    (0..count)
        .filter_map(|_| {
            let scale = log_uniform(&mut rng, 4.0, max_scale);
            let aspect = log_uniform(&mut rng, 0.5, 2.0);
            let bbox = place_box(&mut rng, scale, aspect, rh as f64, rw as f64);
            let category_id = category_ids[rng.random_range(0..category_ids.len())];
            let score = profile.fp_score.sample(&mut rng);
            Detection::new(image.id, category_id, bbox, score, Some(resolution_index)).ok()
        })
        .collect()
}

/// Per-resolution detections for every image of `dataset`, in resized-image
/// coordinates, tagged with their resolution index.
pub fn simulate_detections(
    dataset: &Dataset,
    pyramid: &PyramidSpec,
    profile: &DetectorProfile,
) -> Result<Vec<(f64, Vec<Detection>)>, SimError> {
    profile.validate()?;
    let by_image = dataset.instances_by_image();
    let category_ids = dataset.category_ids();
    let per_image: Vec<Vec<Vec<Detection>>> = dataset
        .images()
        .par_iter()
        .map(|image| {
            let objects = by_image.get(&image.id).map(Vec::as_slice).unwrap_or(&[]);
            pyramid
                .omegas()
                .iter()
                .enumerate()
                .map(|(i, &omega)| {
                    let mut dets: Vec<Detection> = objects
                        .iter()
                        .filter(|inst| !inst.iscrowd)
                        .filter_map(|inst| detect_object(inst, omega, i, profile))
                        .collect();
                    dets.extend(spurious(image, omega, i, &category_ids, profile));
                    dets
                })
                .collect()
        })
        .collect();
    Ok(pyramid
        .omegas()
        .iter()
        .enumerate()
        .map(|(i, &omega)| {
            (
                omega,
                per_image
                    .iter()
                    .flat_map(|levels| levels[i].clone())
                    .collect(),
            )
        })
        .collect())
}

/// How pyramid predictions are turned into final detections.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "omega")]
pub enum Strategy {
    /// Gate every resolution by the scale range, then fuse.
    Isn,
    /// Fuse every resolution without gating.
    NaiveMultiScale,
    /// Use the single resolution with this scaling factor.
    SingleScale(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub pyramid: PyramidSpec,
    pub range: ScaleRange,
    pub soft_nms: SoftNmsConfig,
    pub eval: EvalConfig,
    /// Cap on fused detections per image.
    pub top_k: Option<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            pyramid: PyramidSpec::default(),
            range: ScaleRange::default(),
            soft_nms: SoftNmsConfig::default(),
            eval: EvalConfig::default(),
            top_k: Some(100),
        }
    }
}

/// Final detections in original-image coordinates for `strategy`.
pub fn apply_strategy(
    per_resolution: &[(f64, Vec<Detection>)],
    range: &ScaleRange,
    strategy: Strategy,
    soft_nms_cfg: &SoftNmsConfig,
    top_k: Option<usize>,
) -> Result<Vec<Detection>, SimError> {
    match strategy {
        Strategy::Isn => Ok(fuse_dataset(per_resolution, range, soft_nms_cfg, top_k)),
        Strategy::NaiveMultiScale => Ok(fuse_dataset(
            per_resolution,
            &ScaleRange::unbounded(),
            soft_nms_cfg,
            top_k,
        )),
        Strategy::SingleScale(omega) => {
            let (_, dets) = per_resolution
                .iter()
                .find(|(w, _)| *w == omega)
                .ok_or_else(|| {
                    SimError::InvalidDataset(format!("no resolution with omega {omega}"))
                })?;
            let projected = gate_predictions(dets, omega, &ScaleRange::unbounded());
            let mut by_image: std::collections::BTreeMap<u64, Vec<Detection>> = Default::default();
            for d in projected {
                by_image.entry(d.image_id).or_default().push(d);
            }
            Ok(by_image
                .into_values()
                .flat_map(|dets| {
                    let mut kept = soft_nms(&dets, soft_nms_cfg);
                    if let Some(k) = top_k {
                        kept.truncate(k);
                    }
                    kept
                })
                .collect())
        }
    }
}

/// Simulates the pyramid, applies `strategy` and evaluates against the
/// dataset's ground truth.
pub fn run_experiment(
    dataset: &Dataset,
    profile: &DetectorProfile,
    strategy: Strategy,
    cfg: &ExperimentConfig,
) -> Result<EvalResult, SimError> {
    let per_resolution = simulate_detections(dataset, &cfg.pyramid, profile)?;
    let dets = apply_strategy(
        &per_resolution,
        &cfg.range,
        strategy,
        &cfg.soft_nms,
        cfg.top_k,
    )?;
    let eval_cfg = EvalConfig {
        category_ids: Some(dataset.category_ids()),
        ..cfg.eval.clone()
    };
    evaluate(dataset.instances(), &dets, &eval_cfg)
        .map_err(|e| SimError::InvalidDataset(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_set(seed: u64) -> Dataset {
        generate_dataset(
            &SyntheticConfig {
                num_images: 20,
                ..SyntheticConfig::default()
            },
            seed,
        )
        .unwrap()
    }

    #[test]
    fn generator_respects_config() {
        let cfg = SyntheticConfig {
            num_images: 50,
            ..SyntheticConfig::default()
        };
        let ds = generate_dataset(&cfg, 3).unwrap();
        assert_eq!(ds.images().len(), 50);
        for (_, insts) in ds.instances_by_image() {
            assert!((1..=20).contains(&insts.len()));
        }
        for inst in ds.instances() {
            let s = inst.bbox.scale();
            assert!((4.0 - 1e-9..=640.0 + 1e-9).contains(&s), "{s}");
        }
        assert_eq!(generate_dataset(&cfg, 3).unwrap(), ds);
        assert_ne!(generate_dataset(&cfg, 4).unwrap(), ds);
    }

    #[test]
    fn decay_formula() {
        let p = DetectorProfile::default();
        assert!((p.detect_probability(8.0) - 0.2375).abs() < 1e-12);
        assert_eq!(p.detect_probability(100.0), 0.95);
        assert!((p.detect_probability(960.0) - 0.475).abs() < 1e-12);
        assert!((p.noise_std(8.0) - 0.08).abs() < 1e-12);
    }

    #[test]
    fn detection_frequency_matches_probability() {
        // Scale-8 object at omega 1 over many independent images.
        let profile = DetectorProfile {
            fp_rate: 0.0,
            ..DetectorProfile::default()
        };
        let trials = 100_000u64;
        let hits = (0..trials)
            .filter(|&i| {
                let inst = Instance {
                    id: i + 1,
                    image_id: i + 1,
                    category_id: 1,
                    bbox: BBox::new(10.0, 10.0, 8.0, 8.0).unwrap(),
                    iscrowd: false,
                };
                detect_object(&inst, 1.0, 0, &profile).is_some()
            })
            .count() as f64;
        let p = 0.2375;
        let freq = hits / trials as f64;
        let sd = (p * (1.0 - p) / trials as f64).sqrt();
        assert!((freq - p).abs() < 3.0 * sd, "freq {freq}");
    }

    #[test]
    fn noiseless_profile_reproduces_ground_truth() {
        let ds = small_set(1);
        let pyramid = PyramidSpec::default();
        let per_res = simulate_detections(&ds, &pyramid, &DetectorProfile::perfect(9)).unwrap();
        for (omega, dets) in &per_res {
            assert_eq!(dets.len(), ds.instances().len());
            for (d, g) in dets.iter().zip(ds.instances()) {
                assert_eq!(d.bbox, project_box(&g.bbox, *omega));
                assert_eq!(d.category_id, g.category_id);
            }
        }
    }

    #[test]
    fn simulation_is_deterministic() {
        let ds = small_set(2);
        let pyramid = PyramidSpec::default();
        let profile = DetectorProfile {
            seed: 11,
            ..DetectorProfile::default()
        };
        let a = simulate_detections(&ds, &pyramid, &profile).unwrap();
        let b = simulate_detections(&ds, &pyramid, &profile).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn adding_resolutions_keeps_existing_draws() {
        let ds = small_set(5);
        let profile = DetectorProfile::default();
        let two =
            simulate_detections(&ds, &PyramidSpec::new(vec![1.0, 0.5]).unwrap(), &profile).unwrap();
        let three = simulate_detections(
            &ds,
            &PyramidSpec::new(vec![2.0, 1.0, 0.5]).unwrap(),
            &profile,
        )
        .unwrap();
        let strip = |v: &[Detection]| -> Vec<(BBox, f64)> {
            v.iter().map(|d| (d.bbox, d.score())).collect()
        };
        assert_eq!(strip(&two[0].1), strip(&three[1].1));
        assert_eq!(strip(&two[1].1), strip(&three[2].1));
    }

    #[test]
    fn disjoint_generation_has_no_overlap() {
        let cfg = SyntheticConfig {
            num_images: 30,
            disjoint: true,
            ..SyntheticConfig::default()
        };
        let ds = generate_dataset(&cfg, 4).unwrap();
        for (_, insts) in ds.instances_by_image() {
            for (i, a) in insts.iter().enumerate() {
                for b in &insts[i + 1..] {
                    assert_eq!(iou(&a.bbox, &b.bbox), 0.0);
                }
            }
        }
    }

    #[test]
    fn perfect_profile_scores_one_for_every_strategy() {
        // Soft-NMS decays overlapping true positives, so the ceiling only
        // holds for disjoint objects.
        let ds = generate_dataset(
            &SyntheticConfig {
                num_images: 20,
                disjoint: true,
                ..SyntheticConfig::default()
            },
            7,
        )
        .unwrap();
        let cfg = ExperimentConfig::default();
        let profile = DetectorProfile::perfect(1);
        for strategy in [
            Strategy::Isn,
            Strategy::NaiveMultiScale,
            Strategy::SingleScale(1.0),
        ] {
            let r = run_experiment(&ds, &profile, strategy, &cfg).unwrap();
            assert_eq!(r.ap, 1.0, "{strategy:?}");
        }
    }

    #[test]
    fn unbounded_isn_equals_naive() {
        let ds = small_set(8);
        let cfg = ExperimentConfig {
            range: ScaleRange::unbounded(),
            ..ExperimentConfig::default()
        };
        let profile = DetectorProfile::default();
        let isn = run_experiment(&ds, &profile, Strategy::Isn, &cfg).unwrap();
        let naive = run_experiment(&ds, &profile, Strategy::NaiveMultiScale, &cfg).unwrap();
        assert_eq!(isn, naive);
    }

    #[test]
    fn missing_single_scale_resolution_is_an_error() {
        let ds = small_set(8);
        let r = run_experiment(
            &ds,
            &DetectorProfile::default(),
            Strategy::SingleScale(3.0),
            &ExperimentConfig::default(),
        );
        assert!(r.is_err());
    }

    #[test]
    fn profile_validation() {
        assert!(DetectorProfile::default().validate().is_ok());
        let bad = DetectorProfile {
            p_detect_in_band: 1.5,
            ..DetectorProfile::default()
        };
        assert!(bad.validate().is_err());
        let bad = DetectorProfile {
            sweet_low: 500.0,
            ..DetectorProfile::default()
        };
        assert!(bad.validate().is_err());
    }
}
