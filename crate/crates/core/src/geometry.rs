//! Boxes, instances, detections and the scale arithmetic shared by every
//! other module.
//!
//! Boxes live in continuous `(x, y, w, h)` pixel coordinates. Nothing here
//! rounds a box; only [`resize_plan`] rounds, and only image dimensions.

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::GeometryError;

/// Axis-aligned box in pixel coordinates of some image resolution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    x: f64,
    y: f64,
    w: f64,
    h: f64,
}

impl BBox {
    /// Builds a box, rejecting non-finite values, negative origins and
    /// degenerate extents.
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Result<Self, GeometryError> {
        if ![x, y, w, h].iter().all(|v| v.is_finite()) {
            return Err(GeometryError::NonFinite { x, y, w, h });
        }
        if w <= 0.0 || h <= 0.0 {
            return Err(GeometryError::Degenerate { w, h });
        }
        if x < 0.0 || y < 0.0 {
            return Err(GeometryError::NegativeOrigin { x, y });
        }
        Ok(Self { x, y, w, h })
    }

    pub fn x(&self) -> f64 {
        self.x
    }

    pub fn y(&self) -> f64 {
        self.y
    }

    pub fn w(&self) -> f64 {
        self.w
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn right(&self) -> f64 {
        self.x + self.w
    }

    pub fn bottom(&self) -> f64 {
        self.y + self.h
    }

    /// Square root of the box area, in the pixels of this box's resolution.
    pub fn scale(&self) -> f64 {
        self.area().sqrt()
    }

    pub fn intersection_area(&self, other: &BBox) -> f64 {
        let iw = (self.right().min(other.right()) - self.x.max(other.x)).max(0.0);
        let ih = (self.bottom().min(other.bottom()) - self.y.max(other.y)).max(0.0);
        iw * ih
    }

    /// `[x, y, w, h]`, the COCO wire layout.
    pub fn to_array(&self) -> [f64; 4] {
        [self.x, self.y, self.w, self.h]
    }

    /// Total order on the four coordinates, used for deterministic tie-breaks.
    pub fn lexicographic_cmp(&self, other: &BBox) -> std::cmp::Ordering {
        self.to_array()
            .iter()
            .zip(other.to_array().iter())
            .map(|(a, b)| a.total_cmp(b))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    }
}

impl TryFrom<[f64; 4]> for BBox {
    type Error = GeometryError;

    fn try_from(v: [f64; 4]) -> Result<Self, Self::Error> {
        BBox::new(v[0], v[1], v[2], v[3])
    }
}

impl Serialize for BBox {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.to_array().serialize(s)
    }
}

impl<'de> Deserialize<'de> for BBox {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = <[f64; 4]>::deserialize(d)?;
        BBox::try_from(raw).map_err(serde::de::Error::custom)
    }
}

/// Ground-truth object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub id: u64,
    pub image_id: u64,
    pub category_id: u64,
    pub bbox: BBox,
    pub iscrowd: bool,
}

/// Predicted object. `resolution_index` names the pyramid level that
/// produced it, or `None` for detections that did not come from a pyramid.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub image_id: u64,
    pub category_id: u64,
    pub bbox: BBox,
    score: f64,
    pub resolution_index: Option<usize>,
}

impl Detection {
    pub fn new(
        image_id: u64,
        category_id: u64,
        bbox: BBox,
        score: f64,
        resolution_index: Option<usize>,
    ) -> Result<Self, GeometryError> {
        if !(0.0..=1.0).contains(&score) {
            return Err(GeometryError::ScoreOutOfRange(score));
        }
        Ok(Self {
            image_id,
            category_id,
            bbox,
            score,
            resolution_index,
        })
    }

    pub fn score(&self) -> f64 {
        self.score
    }

    /// Multiplies the score by `factor` in `[0, 1]`; scores can only decay.
    pub(crate) fn decay(&mut self, factor: f64) {
        debug_assert!((0.0..=1.0).contains(&factor));
        self.score *= factor.clamp(0.0, 1.0);
    }

    /// Same detection with its box replaced.
    pub fn with_bbox(&self, bbox: BBox) -> Self {
        Self {
            bbox,
            ..self.clone()
        }
    }

    /// Same detection with a new score.
    pub fn with_score(mut self, score: f64) -> Result<Self, GeometryError> {
        if !(0.0..=1.0).contains(&score) {
            return Err(GeometryError::ScoreOutOfRange(score));
        }
        self.score = score;
        Ok(self)
    }
}

/// Closed scale interval `[lower, upper]`; `upper` may be `+inf`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaleRange {
    lower: f64,
    upper: f64,
}

impl ScaleRange {
    pub fn new(lower: f64, upper: f64) -> Result<Self, GeometryError> {
        if !lower.is_finite() || lower < 0.0 || upper.is_nan() || lower >= upper {
            return Err(GeometryError::InvalidRange { lower, upper });
        }
        Ok(Self { lower, upper })
    }

    /// `[0, inf)`: admits every scale.
    pub fn unbounded() -> Self {
        Self {
            lower: 0.0,
            upper: f64::INFINITY,
        }
    }

    pub fn lower(&self) -> f64 {
        self.lower
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }

    pub fn contains(&self, scale: f64) -> bool {
        self.lower <= scale && scale <= self.upper
    }

    /// True when `self` lies inside `other`.
    pub fn is_within(&self, other: &ScaleRange) -> bool {
        other.lower <= self.lower && self.upper <= other.upper
    }
}

impl Default for ScaleRange {
    /// The `[16, 560]` range used by the reference ISN models.
    fn default() -> Self {
        Self {
            lower: 16.0,
            upper: 560.0,
        }
    }
}

impl fmt::Display for ScaleRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.upper.is_infinite() {
            write!(f, "[{}, inf]", self.lower)
        } else {
            write!(f, "[{}, {}]", self.lower, self.upper)
        }
    }
}

// Wire form is `[lower, upper]` with `null` standing for an unbounded upper end.
impl Serialize for ScaleRange {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let upper = self.upper.is_finite().then_some(self.upper);
        (self.lower, upper).serialize(s)
    }
}

impl<'de> Deserialize<'de> for ScaleRange {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let (lower, upper) = <(f64, Option<f64>)>::deserialize(d)?;
        ScaleRange::new(lower, upper.unwrap_or(f64::INFINITY)).map_err(serde::de::Error::custom)
    }
}

/// Ordered set of image scaling factors.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct PyramidSpec {
    omegas: Vec<f64>,
}

impl PyramidSpec {
    pub fn new(omegas: Vec<f64>) -> Result<Self, GeometryError> {
        if omegas.is_empty() {
            return Err(GeometryError::EmptyPyramid);
        }
        for (i, &w) in omegas.iter().enumerate() {
            if !(w.is_finite() && w > 0.0) {
                return Err(GeometryError::InvalidOmega(w));
            }
            if omegas[..i].contains(&w) {
                return Err(GeometryError::DuplicateOmega(w));
            }
        }
        Ok(Self { omegas })
    }

    pub fn omegas(&self) -> &[f64] {
        &self.omegas
    }

    pub fn len(&self) -> usize {
        self.omegas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omegas.is_empty()
    }

    /// Resized `(h, w)` for every level of the pyramid.
    pub fn image_sizes(&self, image_h: u32, image_w: u32) -> Vec<(u32, u32)> {
        self.omegas
            .iter()
            .map(|&w| resize_plan(image_h, image_w, w))
            .collect()
    }
}

impl Default for PyramidSpec {
    fn default() -> Self {
        Self {
            omegas: vec![4.0, 2.0, 1.0, 0.5, 0.25],
        }
    }
}

impl<'de> Deserialize<'de> for PyramidSpec {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let omegas = Vec::<f64>::deserialize(d)?;
        PyramidSpec::new(omegas).map_err(serde::de::Error::custom)
    }
}

/// Scale of `b` once its image is resized by `omega`.
pub fn instance_scale(b: &BBox, omega: f64) -> f64 {
    omega * b.scale()
}

/// Resized image dimensions `(round(h * omega), round(w * omega))`, each at
/// least one pixel.
pub fn resize_plan(image_h: u32, image_w: u32, omega: f64) -> (u32, u32) {
    let dim = |v: u32| ((v as f64 * omega).round() as u32).max(1);
    (dim(image_h), dim(image_w))
}

/// Transports a box between an image and its `omega`-resized copy.
pub fn project_box(b: &BBox, omega: f64) -> BBox {
    BBox {
        x: b.x * omega,
        y: b.y * omega,
        w: b.w * omega,
        h: b.h * omega,
    }
}

pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let inter = a.intersection_area(b);
    if inter <= 0.0 {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    (inter / union).clamp(0.0, 1.0)
}
