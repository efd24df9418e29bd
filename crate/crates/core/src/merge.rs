//! Fusing body ground truth with per-part detector output into 133-keypoint
//! pseudo labels.
//!
//! Each part detection is associated with at most one person by greedy IoU
//! against that person's proposal box for the part, highest detection score
//! first. Matched detections fill their slot range; detector keypoints become
//! `v = 1` unless their confidence is below the configured floor, in which
//! case they become `(0, 0, 0)`. Body slots are never touched.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::coco_io::{
    count_labeled, AnnotationSet, DetectionRecord, DetectionSet, Keypoint, PersonAnnotation,
};
use crate::proposal::{face_box, foot_box, hand_boxes, BBox, ProposalParams};
use crate::schema::{keypoint_names, part_range, skeleton, PartKind, NUM_BODY, NUM_KEYPOINTS};

/// A pose in the whole-body layout.
///
/// Merged and encoded poses always hold 133 triples. Poses built from
/// body-only results hold 17; suppression and evaluation accept both.
#[derive(Debug, Clone, PartialEq)]
pub struct FullBodyPose {
    pub keypoints: Vec<Keypoint>,
    pub score: f64,
    pub person_id: u64,
    pub image_id: u64,
}

impl FullBodyPose {
    pub fn unlabeled(person_id: u64, image_id: u64) -> Self {
        FullBodyPose {
            keypoints: vec![Keypoint::UNLABELED; NUM_KEYPOINTS],
            score: 1.0,
            person_id,
            image_id,
        }
    }

    pub fn from_detection(d: &DetectionRecord) -> Self {
        FullBodyPose {
            keypoints: d.keypoints.clone(),
            score: d.score,
            person_id: d.id,
            image_id: d.image_id,
        }
    }

    pub fn is_whole_body(&self) -> bool {
        self.keypoints.len() == NUM_KEYPOINTS
    }

    pub fn part(&self, kind: PartKind) -> &[Keypoint] {
        &self.keypoints[part_range(kind)]
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MergeError {
    #[error("{part} keypoints: got {got}, expected {expected}")]
    PartLengthMismatch {
        part: PartKind,
        got: usize,
        expected: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MergeParams {
    /// Minimum IoU between a detection's box and a person's proposal.
    pub iou_threshold: f64,
    /// Detector keypoints below this confidence are dropped.
    pub min_keypoint_confidence: f64,
    pub proposal: ProposalParams,
}

impl Default for MergeParams {
    fn default() -> Self {
        MergeParams {
            iou_threshold: 0.3,
            min_keypoint_confidence: 0.05,
            proposal: ProposalParams::default(),
        }
    }
}

/// Optional detector output for each non-body part of one person.
#[derive(Debug, Clone, Copy, Default)]
pub struct PartDetections<'a> {
    pub foot: Option<&'a DetectionRecord>,
    pub face: Option<&'a DetectionRecord>,
    pub left_hand: Option<&'a DetectionRecord>,
    pub right_hand: Option<&'a DetectionRecord>,
}

impl<'a> PartDetections<'a> {
    fn get(&self, kind: PartKind) -> Option<&'a DetectionRecord> {
        match kind {
            PartKind::Body => None,
            PartKind::Foot => self.foot,
            PartKind::Face => self.face,
            PartKind::LeftHand => self.left_hand,
            PartKind::RightHand => self.right_hand,
        }
    }

    fn set(&mut self, kind: PartKind, d: &'a DetectionRecord) {
        match kind {
            PartKind::Body => {}
            PartKind::Foot => self.foot = Some(d),
            PartKind::Face => self.face = Some(d),
            PartKind::LeftHand => self.left_hand = Some(d),
            PartKind::RightHand => self.right_hand = Some(d),
        }
    }
}

/// Part detection sets for a whole dataset.
#[derive(Debug, Clone, Copy)]
pub struct PartSets<'a> {
    pub foot: &'a DetectionSet,
    pub face: &'a DetectionSet,
    pub left_hand: &'a DetectionSet,
    pub right_hand: &'a DetectionSet,
}

/// Builds one whole-body pose from a 17-keypoint ground-truth person and the
/// detections assigned to it.
pub fn merge_person(
    body_gt: &PersonAnnotation,
    parts: &PartDetections<'_>,
    min_keypoint_confidence: f64,
) -> Result<FullBodyPose, MergeError> {
    if body_gt.keypoints.len() != NUM_BODY {
        return Err(MergeError::PartLengthMismatch {
            part: PartKind::Body,
            got: body_gt.keypoints.len(),
            expected: NUM_BODY,
        });
    }
    let mut pose = FullBodyPose::unlabeled(body_gt.id, body_gt.image_id);
    pose.keypoints[..NUM_BODY].copy_from_slice(&body_gt.keypoints);
    for kind in &PartKind::ALL[1..] {
        let Some(det) = parts.get(*kind) else {
            continue;
        };
        if det.keypoints.len() != kind.len() {
            return Err(MergeError::PartLengthMismatch {
                part: *kind,
                got: det.keypoints.len(),
                expected: kind.len(),
            });
        }
        for (slot, k) in pose.keypoints[part_range(*kind)]
            .iter_mut()
            .zip(&det.keypoints)
        {
            *slot = if k.v >= min_keypoint_confidence && k.v > 0.0 {
                Keypoint::new(k.x, k.y, 1.0)
            } else {
                Keypoint::UNLABELED
            };
        }
    }
    Ok(pose)
}

/// Region a detection of `kind` is expected to occupy for this person.
pub fn part_proposal(
    person: &PersonAnnotation,
    kind: PartKind,
    params: &ProposalParams,
) -> Option<BBox> {
    let kps = &person.keypoints;
    match kind {
        PartKind::Body => Some(person.bbox),
        PartKind::Foot => foot_box(kps, &params.foot),
        PartKind::Face => face_box(kps, &params.face),
        PartKind::LeftHand => hand_boxes(kps, &params.hand).0,
        PartKind::RightHand => hand_boxes(kps, &params.hand).1,
    }
}

/// Greedily associates detections of one image with persons.
///
/// Detections are visited by descending score (ties by id). Each takes the
/// still-free person whose proposal overlaps it most, provided the IoU is at
/// least `iou_threshold`; equal IoUs go to the lower person id. The result is
/// aligned with `persons` and holds indices into `detections`.
pub fn assign_parts(
    persons: &[&PersonAnnotation],
    detections: &[&DetectionRecord],
    kind: PartKind,
    iou_threshold: f64,
    params: &ProposalParams,
) -> Vec<Option<usize>> {
    let proposals: Vec<Option<BBox>> = persons
        .iter()
        .map(|p| part_proposal(p, kind, params))
        .collect();
    let mut person_order: Vec<usize> = (0..persons.len()).collect();
    person_order.sort_by_key(|&i| persons[i].id);
    let mut det_order: Vec<usize> = (0..detections.len()).collect();
    det_order.sort_by(|&a, &b| {
        detections[b]
            .score
            .total_cmp(&detections[a].score)
            .then(detections[a].id.cmp(&detections[b].id))
    });

    let mut assigned = vec![None; persons.len()];
    for d in det_order {
        let region = detections[d].region();
        let mut best: Option<(usize, f64)> = None;
        for &p in &person_order {
            if assigned[p].is_some() {
                continue;
            }
            let Some(proposal) = proposals[p] else {
                continue;
            };
            let iou = proposal.iou(&region);
            if iou >= iou_threshold && best.is_none_or(|(_, b)| iou > b) {
                best = Some((p, iou));
            }
        }
        if let Some((p, _)) = best {
            assigned[p] = Some(d);
        }
    }
    assigned
}

fn merge_image(
    persons: &[&PersonAnnotation],
    part_dets: &[(PartKind, Vec<&DetectionRecord>)],
    params: &MergeParams,
) -> Result<Vec<FullBodyPose>, MergeError> {
    let mut per_person = vec![PartDetections::default(); persons.len()];
    for (kind, dets) in part_dets {
        let assignment = assign_parts(persons, dets, *kind, params.iou_threshold, &params.proposal);
        for (slot, a) in per_person.iter_mut().zip(assignment) {
            if let Some(d) = a {
                slot.set(*kind, dets[d]);
            }
        }
    }
    persons
        .iter()
        .zip(&per_person)
        .map(|(p, parts)| merge_person(p, parts, params.min_keypoint_confidence))
        .collect()
}

/// Keypoint names and 1-based skeleton for the `categories` entries.
fn whole_body_category_fields() -> (Value, Value) {
    let names = Value::from(keypoint_names());
    let edges = Value::Array(
        skeleton()
            .iter()
            .map(|e| Value::from(vec![e.a as u64 + 1, e.b as u64 + 1]))
            .collect(),
    );
    (names, edges)
}

/// Merges every person of `gt` with the part detections of its image.
///
/// Images are processed in parallel; the output keeps the input's person
/// order, ids, boxes and areas, and is identical for any record order of the
/// inputs.
pub fn merge_dataset(
    gt: &AnnotationSet,
    parts: &PartSets<'_>,
    params: &MergeParams,
) -> Result<AnnotationSet, MergeError> {
    let by_image = gt.persons_by_image();
    let part_groups = [
        (PartKind::Foot, parts.foot.by_image()),
        (PartKind::Face, parts.face.by_image()),
        (PartKind::LeftHand, parts.left_hand.by_image()),
        (PartKind::RightHand, parts.right_hand.by_image()),
    ];
    let work: Vec<(&u64, &Vec<&PersonAnnotation>)> = by_image.iter().collect();
    let merged: Vec<Vec<FullBodyPose>> = work
        .par_iter()
        .map(|(image_id, persons)| {
            let part_dets: Vec<(PartKind, Vec<&DetectionRecord>)> = part_groups
                .iter()
                .map(|(kind, groups)| (*kind, groups.get(image_id).cloned().unwrap_or_default()))
                .collect();
            merge_image(persons, &part_dets, params)
        })
        .collect::<Result<_, _>>()?;

    let mut poses: HashMap<u64, FullBodyPose> = merged
        .into_iter()
        .flatten()
        .map(|p| (p.person_id, p))
        .collect();
    let mut out = gt.clone();
    for ann in &mut out.annotations {
        let pose = poses
            .remove(&ann.id)
            .expect("every person belongs to a grouped image");
        ann.keypoints = pose.keypoints;
        ann.num_keypoints = count_labeled(&ann.keypoints);
    }
    let used: Vec<u64> = out.annotations.iter().map(|a| a.category_id).collect();
    let (names, edges) = whole_body_category_fields();
    for cat in out.categories.iter_mut().filter(|c| used.contains(&c.id)) {
        cat.extra.insert("keypoints".into(), names.clone());
        cat.extra.insert("skeleton".into(), edges.clone());
    }
    Ok(out)
}
