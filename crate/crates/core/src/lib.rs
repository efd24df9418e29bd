//! Tooling for multi-person whole-body (133-keypoint) pose annotations.
//!
//! * [`schema`] fixes the keypoint layout, skeleton and OKS constants.
//! * [`coco_io`] reads, validates and writes COCO-style files.
//! * [`proposal`] turns body keypoints into face, hand and foot boxes.
//! * [`merge`] fuses body ground truth with part detector output.
//! * [`heatmap`] is a Gaussian heatmap codec at 256x192 / 64x48.
//! * [`pose_nms`] suppresses redundant pose estimates.
//! * [`eval`] computes OKS-based AP/AR.
//! * [`render`] and [`stats`] summarise annotation files.

pub mod coco_io;
pub mod eval;
pub mod heatmap;
pub mod merge;
pub mod pose_nms;
pub mod proposal;
pub mod render;
pub mod schema;
pub mod stats;

pub use coco_io::{
    parse_detections, parse_ground_truth, validate, write_annotations, write_detections,
    AnnotationSet, CocoError, DetectionCategory, DetectionRecord, DetectionSet, ImageRecord,
    Keypoint, PersonAnnotation, ValidationReport,
};
pub use eval::{evaluate, per_part_report, EvalParams, EvalReport};
pub use merge::{merge_dataset, FullBodyPose, MergeParams};
pub use pose_nms::{run_nms, NmsParams};
pub use proposal::BBox;
pub use schema::{PartKind, SigmaTable};
