//! In-memory annotated dataset: images, categories and ground truth.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::geometry::Instance;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageInfo {
    pub id: u64,
    pub height: u32,
    pub width: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Category {
    pub id: u64,
    pub name: String,
}

/// A validated dataset. Construct through [`crate::coco::ingest_str`] or
/// [`Dataset::new`]; both check referential integrity.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    images: Vec<ImageInfo>,
    categories: Vec<Category>,
    instances: Vec<Instance>,
    image_index: BTreeMap<u64, usize>,
}

impl Dataset {
    pub fn new(
        images: Vec<ImageInfo>,
        categories: Vec<Category>,
        instances: Vec<Instance>,
    ) -> Result<Self, crate::error::CocoError> {
        crate::coco::validate(images, categories, instances)
    }

    pub(crate) fn from_parts_unchecked(
        images: Vec<ImageInfo>,
        categories: Vec<Category>,
        instances: Vec<Instance>,
    ) -> Self {
        let image_index = images
            .iter()
            .enumerate()
            .map(|(i, im)| (im.id, i))
            .collect();
        Self {
            images,
            categories,
            instances,
            image_index,
        }
    }

    pub fn images(&self) -> &[ImageInfo] {
        &self.images
    }

    pub fn categories(&self) -> &[Category] {
        &self.categories
    }

    pub fn category_ids(&self) -> Vec<u64> {
        let mut ids: Vec<u64> = self.categories.iter().map(|c| c.id).collect();
        ids.sort_unstable();
        ids
    }

    pub fn instances(&self) -> &[Instance] {
        &self.instances
    }

    pub fn image(&self, id: u64) -> Option<&ImageInfo> {
        self.image_index.get(&id).map(|&i| &self.images[i])
    }

    /// Ground truth grouped by image, in image-id order.
    pub fn instances_by_image(&self) -> BTreeMap<u64, Vec<&Instance>> {
        let mut out: BTreeMap<u64, Vec<&Instance>> =
            self.images.iter().map(|im| (im.id, Vec::new())).collect();
        for inst in &self.instances {
            out.entry(inst.image_id).or_default().push(inst);
        }
        out
    }
}
