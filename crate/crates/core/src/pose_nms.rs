//! Parametric pose non-maximum suppression.
//!
//! Two poses are compared over the keypoints both of them label (positive
//! third value). With `s` the mean of the two pose scales (square root of the
//! area of each pose's labeled-keypoint box), `r = sigma_soft * s`, `d_n` the
//! distance between matching keypoints and `c` the per-keypoint confidences:
//!
//! ```text
//! w_n   = tanh(c_p,n) * tanh(c_q,n)
//! K_sim = sum_n w_n * [d_n <= r] / sum_n w_n
//! H_sim = mean_n exp(-d_n^2 / (2 r^2))
//! dist  = K_sim + lambda * H_sim
//! ```
//!
//! The value lies in `[0, 1 + lambda]`; larger means more alike, and a pose
//! compared with itself scores exactly `1 + lambda`. When `s` is zero both
//! terms fall back to exact coordinate equality. Poses with no jointly
//! labeled keypoint score 0.

use serde::{Deserialize, Serialize};

use crate::coco_io::Keypoint;
use crate::merge::FullBodyPose;
use crate::proposal::BBox;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NmsParams {
    pub lambda: f64,
    /// Match radius as a fraction of pose scale.
    pub sigma_soft: f64,
    /// Poses more similar than this to a kept pose are removed.
    pub eta: f64,
    /// Poses scoring below this are dropped before suppression.
    pub score_floor: f64,
}

impl Default for NmsParams {
    fn default() -> Self {
        NmsParams {
            lambda: 1.0,
            sigma_soft: 0.1,
            eta: 1.2,
            score_floor: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("NMS parameter `{name}` must be positive and finite, got {value}")]
pub struct NmsParamError {
    pub name: &'static str,
    pub value: f64,
}

impl NmsParams {
    pub fn check(&self) -> Result<(), NmsParamError> {
        for (name, value) in [
            ("lambda", self.lambda),
            ("sigma_soft", self.sigma_soft),
            ("eta", self.eta),
            ("score_floor", self.score_floor),
        ] {
            if !(value.is_finite() && value > 0.0) {
                return Err(NmsParamError { name, value });
            }
        }
        Ok(())
    }
}

/// Square root of the area spanned by the labeled keypoints.
pub fn pose_scale(kps: &[Keypoint]) -> f64 {
    BBox::enclosing(kps.iter().filter(|k| k.is_labeled()).map(|k| (k.x, k.y)))
        .map_or(0.0, |b| b.area().sqrt())
}

pub fn pose_distance(p: &FullBodyPose, q: &FullBodyPose, params: &NmsParams) -> f64 {
    let joint: Vec<(&Keypoint, &Keypoint)> = p
        .keypoints
        .iter()
        .zip(&q.keypoints)
        .filter(|(a, b)| a.is_labeled() && b.is_labeled())
        .collect();
    if joint.is_empty() {
        return 0.0;
    }
    let scale = 0.5 * (pose_scale(&p.keypoints) + pose_scale(&q.keypoints));
    let radius = params.sigma_soft * scale;

    let (mut weight, mut matched, mut proximity) = (0.0, 0.0, 0.0);
    for (a, b) in &joint {
        let d = (a.x - b.x).hypot(a.y - b.y);
        let w = a.v.tanh() * b.v.tanh();
        let (hit, near) = if radius > 0.0 {
            (d <= radius, (-d * d / (2.0 * radius * radius)).exp())
        } else {
            let same = d == 0.0;
            (same, if same { 1.0 } else { 0.0 })
        };
        weight += w;
        if hit {
            matched += w;
        }
        proximity += near;
    }
    let k_sim = if weight > 0.0 { matched / weight } else { 0.0 };
    let h_sim = proximity / joint.len() as f64;
    k_sim + params.lambda * h_sim
}

/// Indices of the poses kept by greedy suppression, by descending score
/// (ties by input position).
pub fn nms_indices(poses: &[FullBodyPose], params: &NmsParams) -> Vec<usize> {
    let mut order: Vec<usize> = (0..poses.len())
        .filter(|&i| poses[i].score >= params.score_floor)
        .collect();
    order.sort_by(|&a, &b| poses[b].score.total_cmp(&poses[a].score).then(a.cmp(&b)));

    let mut removed = vec![false; poses.len()];
    let mut kept = Vec::new();
    for (pos, &i) in order.iter().enumerate() {
        if removed[i] {
            continue;
        }
        kept.push(i);
        for &j in &order[pos + 1..] {
            if !removed[j] && pose_distance(&poses[i], &poses[j], params) > params.eta {
                removed[j] = true;
            }
        }
    }
    kept
}

/// Removes redundant poses of one image.
pub fn run_nms(poses: &[FullBodyPose], params: &NmsParams) -> Vec<FullBodyPose> {
    nms_indices(poses, params)
        .into_iter()
        .map(|i| poses[i].clone())
        .collect()
}
