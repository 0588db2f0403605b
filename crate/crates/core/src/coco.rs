//! COCO-format interchange: annotation files in, annotation and result
//! files out.
//!
//! Result records carry two optional extra fields, `resolution_index` and
//! `omega`, that tag a detection with the pyramid level that produced it.
//! Tools that only know the plain results format ignore them.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{Category, Dataset, ImageInfo};
use crate::error::CocoError;
use crate::geometry::{BBox, Detection, Instance, PyramidSpec};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CocoImage {
    pub id: u64,
    pub height: u32,
    pub width: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file_name: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CocoAnnotation {
    pub id: u64,
    pub image_id: u64,
    pub category_id: u64,
    pub bbox: Vec<f64>,
    #[serde(default)]
    pub iscrowd: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub area: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CocoCategory {
    pub id: u64,
    #[serde(default)]
    pub name: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CocoFile {
    pub images: Vec<CocoImage>,
    pub annotations: Vec<CocoAnnotation>,
    pub categories: Vec<CocoCategory>,
}

/// One entry of a COCO results file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub image_id: u64,
    pub category_id: u64,
    pub bbox: Vec<f64>,
    pub score: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resolution_index: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega: Option<f64>,
}

/// A parsed detection together with the scaling factor of the image it was
/// predicted on, when the dump recorded one.
#[derive(Debug, Clone, PartialEq)]
pub struct TaggedDetection {
    pub detection: Detection,
    pub omega: Option<f64>,
}

pub fn ingest_str(json: &str) -> Result<Dataset, CocoError> {
    let file: CocoFile = serde_json::from_str(json)?;
    from_coco(file)
}

pub fn ingest_path(path: impl AsRef<Path>) -> Result<Dataset, CocoError> {
    ingest_str(&std::fs::read_to_string(path)?)
}

pub fn from_coco(file: CocoFile) -> Result<Dataset, CocoError> {
    let images = file
        .images
        .into_iter()
        .map(|im| ImageInfo {
            id: im.id,
            height: im.height,
            width: im.width,
        })
        .collect();
    let categories = file
        .categories
        .into_iter()
        .map(|c| Category {
            id: c.id,
            name: c.name,
        })
        .collect();
    let instances = file
        .annotations
        .into_iter()
        .map(|a| {
            let bbox =
                parse_box(&a.bbox).map_err(|reason| CocoError::Annotation { id: a.id, reason })?;
            let iscrowd = match a.iscrowd {
                0 => false,
                1 => true,
                other => {
                    return Err(CocoError::Annotation {
                        id: a.id,
                        reason: format!("iscrowd must be 0 or 1, got {other}"),
                    })
                }
            };
            Ok(Instance {
                id: a.id,
                image_id: a.image_id,
                category_id: a.category_id,
                bbox,
                iscrowd,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    validate(images, categories, instances)
}

pub(crate) fn validate(
    images: Vec<ImageInfo>,
    categories: Vec<Category>,
    instances: Vec<Instance>,
) -> Result<Dataset, CocoError> {
    let mut image_ids = BTreeSet::new();
    for im in &images {
        if !image_ids.insert(im.id) {
            return Err(CocoError::Image {
                id: im.id,
                reason: "duplicate image id".into(),
            });
        }
        if im.height == 0 || im.width == 0 {
            return Err(CocoError::Image {
                id: im.id,
                reason: format!("non-positive size {}x{}", im.height, im.width),
            });
        }
    }
    let mut category_ids = BTreeSet::new();
    for c in &categories {
        if c.id == 0 {
            return Err(CocoError::Category {
                id: c.id,
                reason: "category ids start at 1".into(),
            });
        }
        if !category_ids.insert(c.id) {
            return Err(CocoError::Category {
                id: c.id,
                reason: "duplicate category id".into(),
            });
        }
    }
    let mut ann_ids = BTreeSet::new();
    for inst in &instances {
        let fail = |reason: String| CocoError::Annotation {
            id: inst.id,
            reason,
        };
        if !ann_ids.insert(inst.id) {
            return Err(fail("duplicate annotation id".into()));
        }
        if !image_ids.contains(&inst.image_id) {
            return Err(fail(format!("references missing image {}", inst.image_id)));
        }
        if !category_ids.contains(&inst.category_id) {
            return Err(fail(format!(
                "references missing category {}",
                inst.category_id
            )));
        }
    }
    Ok(Dataset::from_parts_unchecked(images, categories, instances))
}

fn parse_box(raw: &[f64]) -> Result<BBox, String> {
    let arr: [f64; 4] = raw
        .try_into()
        .map_err(|_| format!("bbox must have 4 numbers, got {}", raw.len()))?;
    BBox::try_from(arr).map_err(|e| e.to_string())
}

pub fn to_coco(dataset: &Dataset) -> CocoFile {
    CocoFile {
        images: dataset
            .images()
            .iter()
            .map(|im| CocoImage {
                id: im.id,
                height: im.height,
                width: im.width,
                file_name: None,
            })
            .collect(),
        annotations: dataset
            .instances()
            .iter()
            .map(|inst| CocoAnnotation {
                id: inst.id,
                image_id: inst.image_id,
                category_id: inst.category_id,
                bbox: inst.bbox.to_array().to_vec(),
                iscrowd: inst.iscrowd as u8,
                area: Some(inst.bbox.area()),
            })
            .collect(),
        categories: dataset
            .categories()
            .iter()
            .map(|c| CocoCategory {
                id: c.id,
                name: c.name.clone(),
            })
            .collect(),
    }
}

pub fn parse_results(json: &str) -> Result<Vec<TaggedDetection>, CocoError> {
    let records: Vec<ResultRecord> = serde_json::from_str(json)?;
    records
        .into_iter()
        .enumerate()
        .map(|(index, r)| {
            let fail = |reason: String| CocoError::Detection { index, reason };
            let bbox = parse_box(&r.bbox).map_err(fail)?;
            if let Some(w) = r.omega {
                if !(w.is_finite() && w > 0.0) {
                    return Err(fail(format!("omega must be positive, got {w}")));
                }
            }
            let detection =
                Detection::new(r.image_id, r.category_id, bbox, r.score, r.resolution_index)
                    .map_err(|e| fail(e.to_string()))?;
            Ok(TaggedDetection {
                detection,
                omega: r.omega,
            })
        })
        .collect()
}

/// Result records for `dets`; when `pyramid` is given the records are tagged
/// with the scaling factor of their resolution index.
pub fn to_results(dets: &[Detection], pyramid: Option<&PyramidSpec>) -> Vec<ResultRecord> {
    dets.iter()
        .map(|d| ResultRecord {
            image_id: d.image_id,
            category_id: d.category_id,
            bbox: d.bbox.to_array().to_vec(),
            score: d.score(),
            resolution_index: d.resolution_index,
            omega: pyramid
                .zip(d.resolution_index)
                .and_then(|(p, i)| p.omegas().get(i).copied()),
        })
        .collect()
}

/// Groups tagged detections by scaling factor, ordered by first appearance
/// of each factor in the dump.
pub fn group_by_omega(dets: Vec<TaggedDetection>) -> Result<Vec<(f64, Vec<Detection>)>, CocoError> {
    let mut order: Vec<u64> = Vec::new();
    let mut groups: BTreeMap<u64, (f64, Vec<Detection>)> = BTreeMap::new();
    for (index, t) in dets.into_iter().enumerate() {
        let omega = t.omega.ok_or_else(|| CocoError::Detection {
            index,
            reason: "missing omega tag".into(),
        })?;
        let key = omega.to_bits();
        if !groups.contains_key(&key) {
            order.push(key);
        }
        groups
            .entry(key)
            .or_insert_with(|| (omega, Vec::new()))
            .1
            .push(t.detection);
    }
    Ok(order
        .into_iter()
        .filter_map(|k| groups.remove(&k))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "images": [{"id": 1, "height": 480, "width": 640}],
        "annotations": [{"id": 7, "image_id": 1, "category_id": 1, "bbox": [10, 20, 49, 100], "iscrowd": 0}],
        "categories": [{"id": 1, "name": "person"}]
    }"#;

    #[test]
    fn ingests_minimal_file() {
        let ds = ingest_str(MINIMAL).unwrap();
        assert_eq!(ds.instances().len(), 1);
        assert_eq!(ds.instances()[0].bbox.scale(), 70.0);
        assert_eq!(ds.image(1).unwrap().width, 640);
    }

    #[test]
    fn dangling_image_names_annotation() {
        let json = MINIMAL.replace("\"image_id\": 1", "\"image_id\": 9");
        let err = ingest_str(&json).unwrap_err();
        assert!(matches!(err, CocoError::Annotation { id: 7, .. }), "{err}");
        assert!(err.to_string().contains("missing image 9"));
    }

    #[test]
    fn zero_width_box_names_annotation() {
        let json = MINIMAL.replace("[10, 20, 49, 100]", "[10, 20, 0, 100]");
        let err = ingest_str(&json).unwrap_err();
        assert!(matches!(err, CocoError::Annotation { id: 7, .. }), "{err}");
    }

    #[test]
    fn malformed_json_is_reported() {
        assert!(matches!(
            ingest_str("{\"images\": ["),
            Err(CocoError::Json(_))
        ));
    }

    #[test]
    fn dataset_round_trips_through_json() {
        let ds = ingest_str(MINIMAL).unwrap();
        let json = serde_json::to_string(&to_coco(&ds)).unwrap();
        assert_eq!(ingest_str(&json).unwrap(), ds);
    }

    #[test]
    fn results_round_trip_with_tags() {
        let b = BBox::new(1.0, 2.0, 3.0, 4.0).unwrap();
        let dets = vec![
            Detection::new(1, 1, b, 0.5, Some(1)).unwrap(),
            Detection::new(1, 2, b, 0.25, None).unwrap(),
        ];
        let pyramid = PyramidSpec::new(vec![2.0, 1.0]).unwrap();
        let json = serde_json::to_string(&to_results(&dets, Some(&pyramid))).unwrap();
        let back = parse_results(&json).unwrap();
        assert_eq!(back[0].omega, Some(1.0));
        assert_eq!(back[1].omega, None);
        let dets_back: Vec<Detection> = back.into_iter().map(|t| t.detection).collect();
        assert_eq!(dets_back, dets);
    }

    #[test]
    fn bad_score_names_record_index() {
        let err = parse_results(r#"[{"image_id":1,"category_id":1,"bbox":[0,0,1,1],"score":1.5}]"#)
            .unwrap_err();
        assert!(matches!(err, CocoError::Detection { index: 0, .. }));
    }
}
