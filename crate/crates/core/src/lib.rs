//! Instance scale normalization for multi-scale object detection.
//!
//! One scale range `[s_l, s_u]`, measured in the pixels of whichever
//! resized image is being looked at, decides both which ground truth trains
//! at each pyramid level and which predictions survive at test time. This
//! crate provides that selection ([`sampling`]), test-time gathering of
//! pyramid predictions ([`fusion`]), COCO-style scoring ([`eval`]), the
//! greedy search for the range ([`search`]), feature-pyramid sample counts
//! ([`pyramid`]) and a synthetic detector to exercise it all ([`sim`]).

pub mod coco;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod fusion;
pub mod geometry;
pub mod pyramid;
pub mod sampling;
pub mod search;
pub mod sim;

pub use dataset::{Category, Dataset, ImageInfo};
pub use geometry::{
    instance_scale, iou, project_box, resize_plan, BBox, Detection, Instance, PyramidSpec,
    ScaleRange,
};
