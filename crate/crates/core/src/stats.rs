//! Summary statistics of an annotation file.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::coco_io::AnnotationSet;
use crate::eval::{LARGE_MIN_AREA, MEDIUM_MIN_AREA};
use crate::schema::{part_range, PartKind};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AreaStats {
    /// `area <= 32²`
    pub small: usize,
    /// `32² < area < 96²`
    pub medium: usize,
    /// `area >= 96²`
    pub large: usize,
    pub min: Option<f64>,
    pub max: Option<f64>,
    pub mean: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DatasetStats {
    pub images: usize,
    pub persons: usize,
    /// Persons-per-image count -> number of images with that count.
    pub persons_per_image: BTreeMap<usize, usize>,
    /// Fraction of a part's keypoint slots that are labeled, over persons
    /// whose annotation has slots for that part.
    pub labeled_rate: BTreeMap<PartKind, f64>,
    pub area: AreaStats,
}

pub fn dataset_stats(set: &AnnotationSet) -> DatasetStats {
    let mut persons_per_image = BTreeMap::new();
    for group in set.persons_by_image().values() {
        *persons_per_image.entry(group.len()).or_insert(0) += 1;
    }

    let labeled_rate = PartKind::ALL
        .iter()
        .map(|&kind| {
            let range = part_range(kind);
            let (mut slots, mut labeled) = (0usize, 0usize);
            for a in &set.annotations {
                if let Some(kps) = a.keypoints.get(range.clone()) {
                    slots += kps.len();
                    labeled += kps.iter().filter(|k| k.is_labeled()).count();
                }
            }
            let rate = if slots == 0 {
                0.0
            } else {
                labeled as f64 / slots as f64
            };
            (kind, rate)
        })
        .collect();

    let areas: Vec<f64> = set.annotations.iter().map(|a| a.area).collect();
    let area = AreaStats {
        small: areas.iter().filter(|&&a| a <= MEDIUM_MIN_AREA).count(),
        medium: areas
            .iter()
            .filter(|&&a| a > MEDIUM_MIN_AREA && a < LARGE_MIN_AREA)
            .count(),
        large: areas.iter().filter(|&&a| a >= LARGE_MIN_AREA).count(),
        min: areas.iter().copied().reduce(f64::min),
        max: areas.iter().copied().reduce(f64::max),
        mean: (!areas.is_empty()).then(|| areas.iter().sum::<f64>() / areas.len() as f64),
    };

    DatasetStats {
        images: set.images.len(),
        persons: set.annotations.len(),
        persons_per_image,
        labeled_rate,
        area,
    }
}
