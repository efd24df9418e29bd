//! Face, hand and foot region proposals derived from the 17 body keypoints.
//!
//! Every proposal is a square. Face boxes are centred on the centroid of the
//! visible head keypoints (nose, eyes, ears) with a side proportional to their
//! largest pairwise distance. Hand boxes extrapolate past the wrist along the
//! forearm. Foot boxes are centred between the visible ankles and sized by the
//! ankle spread plus the shank length. All sides are clamped below by a floor.

use serde::{Deserialize, Serialize};

use crate::coco_io::{ImageRecord, Keypoint};
use crate::schema::{
    LEFT_ANKLE, LEFT_EAR, LEFT_ELBOW, LEFT_EYE, LEFT_KNEE, LEFT_WRIST, NOSE, NUM_BODY, RIGHT_ANKLE,
    RIGHT_EAR, RIGHT_ELBOW, RIGHT_EYE, RIGHT_KNEE, RIGHT_WRIST,
};

/// Axis-aligned box in image pixels: top-left corner plus extent.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct BBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl From<[f64; 4]> for BBox {
    fn from([x, y, w, h]: [f64; 4]) -> Self {
        BBox { x, y, w, h }
    }
}

impl From<BBox> for [f64; 4] {
    fn from(b: BBox) -> Self {
        [b.x, b.y, b.w, b.h]
    }
}

impl BBox {
    pub fn square(cx: f64, cy: f64, side: f64) -> Self {
        BBox {
            x: cx - side / 2.0,
            y: cy - side / 2.0,
            w: side,
            h: side,
        }
    }

    pub fn center(&self) -> (f64, f64) {
        (self.x + self.w / 2.0, self.y + self.h / 2.0)
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    /// Tight box around a set of points; `None` for an empty set.
    pub fn enclosing(points: impl IntoIterator<Item = (f64, f64)>) -> Option<Self> {
        let mut it = points.into_iter();
        let (x0, y0) = it.next()?;
        let (mut lx, mut ly, mut hx, mut hy) = (x0, y0, x0, y0);
        for (x, y) in it {
            lx = lx.min(x);
            ly = ly.min(y);
            hx = hx.max(x);
            hy = hy.max(y);
        }
        Some(BBox {
            x: lx,
            y: ly,
            w: hx - lx,
            h: hy - ly,
        })
    }

    pub fn iou(&self, other: &BBox) -> f64 {
        let ix = (self.x + self.w).min(other.x + other.w) - self.x.max(other.x);
        let iy = (self.y + self.h).min(other.y + other.h) - self.y.max(other.y);
        if ix <= 0.0 || iy <= 0.0 {
            return 0.0;
        }
        let inter = ix * iy;
        let union = self.area() + other.area() - inter;
        if union <= 0.0 {
            0.0
        } else {
            inter / union
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FaceParams {
    /// Side length as a multiple of the largest head-keypoint distance.
    pub expansion: f64,
    pub min_side: f64,
}

impl Default for FaceParams {
    fn default() -> Self {
        FaceParams {
            expansion: 1.6,
            min_side: 20.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HandParams {
    /// Centre offset past the wrist, as a fraction of the forearm vector.
    pub alpha: f64,
    /// Side length as a multiple of forearm length.
    pub gamma: f64,
    pub min_side: f64,
}

impl Default for HandParams {
    fn default() -> Self {
        HandParams {
            alpha: 0.15,
            gamma: 1.2,
            min_side: 20.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FootParams {
    /// Multiple of the mean ankle-to-knee length added to the ankle spread.
    pub shank_factor: f64,
    pub min_side: f64,
}

impl Default for FootParams {
    fn default() -> Self {
        FootParams {
            shank_factor: 0.6,
            min_side: 20.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProposalParams {
    pub face: FaceParams,
    pub hand: HandParams,
    pub foot: FootParams,
}

fn visible(kps: &[Keypoint], i: usize) -> Option<(f64, f64)> {
    kps.get(i).filter(|k| k.is_labeled()).map(|k| (k.x, k.y))
}

fn dist(a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - b.0).hypot(a.1 - b.1)
}

fn centroid(points: &[(f64, f64)]) -> (f64, f64) {
    let n = points.len() as f64;
    let (sx, sy) = points
        .iter()
        .fold((0.0, 0.0), |(sx, sy), p| (sx + p.0, sy + p.1));
    (sx / n, sy / n)
}

fn max_pairwise(points: &[(f64, f64)]) -> f64 {
    let mut best = 0.0f64;
    for (i, &a) in points.iter().enumerate() {
        for &b in &points[i + 1..] {
            best = best.max(dist(a, b));
        }
    }
    best
}

fn body_slice(body_kps: &[Keypoint]) -> &[Keypoint] {
    &body_kps[..body_kps.len().min(NUM_BODY)]
}

/// Face proposal from the head keypoints; needs at least two of them visible.
pub fn face_box(body_kps: &[Keypoint], params: &FaceParams) -> Option<BBox> {
    let kps = body_slice(body_kps);
    let head: Vec<_> = [NOSE, LEFT_EYE, RIGHT_EYE, LEFT_EAR, RIGHT_EAR]
        .iter()
        .filter_map(|&i| visible(kps, i))
        .collect();
    if head.len() < 2 {
        return None;
    }
    let (cx, cy) = centroid(&head);
    let side = (params.expansion * max_pairwise(&head)).max(params.min_side);
    Some(BBox::square(cx, cy, side))
}

fn hand_box(kps: &[Keypoint], wrist: usize, elbow: usize, params: &HandParams) -> Option<BBox> {
    let w = visible(kps, wrist)?;
    let e = visible(kps, elbow)?;
    let (dx, dy) = (w.0 - e.0, w.1 - e.1);
    let side = (params.gamma * dx.hypot(dy)).max(params.min_side);
    Some(BBox::square(
        w.0 + params.alpha * dx,
        w.1 + params.alpha * dy,
        side,
    ))
}

/// Left and right hand proposals; each side needs its wrist and elbow visible.
pub fn hand_boxes(body_kps: &[Keypoint], params: &HandParams) -> (Option<BBox>, Option<BBox>) {
    let kps = body_slice(body_kps);
    (
        hand_box(kps, LEFT_WRIST, LEFT_ELBOW, params),
        hand_box(kps, RIGHT_WRIST, RIGHT_ELBOW, params),
    )
}

/// One square covering both feet; needs at least one visible ankle.
pub fn foot_box(body_kps: &[Keypoint], params: &FootParams) -> Option<BBox> {
    let kps = body_slice(body_kps);
    let ankles: Vec<_> = [LEFT_ANKLE, RIGHT_ANKLE]
        .iter()
        .filter_map(|&i| visible(kps, i))
        .collect();
    if ankles.is_empty() {
        return None;
    }
    let shanks: Vec<f64> = [(LEFT_ANKLE, LEFT_KNEE), (RIGHT_ANKLE, RIGHT_KNEE)]
        .iter()
        .filter_map(|&(a, k)| Some(dist(visible(kps, a)?, visible(kps, k)?)))
        .collect();
    let shank = if shanks.is_empty() {
        0.0
    } else {
        shanks.iter().sum::<f64>() / shanks.len() as f64
    };
    let (cx, cy) = centroid(&ankles);
    let side = (max_pairwise(&ankles) + params.shank_factor * shank).max(params.min_side);
    Some(BBox::square(cx, cy, side))
}

/// Intersects `b` with the image frame. A box entirely outside collapses to a
/// zero-area box on the nearest border.
pub fn clip_to_image(b: &BBox, image: &ImageRecord) -> BBox {
    let (w, h) = (image.width as f64, image.height as f64);
    let x0 = b.x.clamp(0.0, w);
    let y0 = b.y.clamp(0.0, h);
    let x1 = (b.x + b.w).clamp(0.0, w);
    let y1 = (b.y + b.h).clamp(0.0, h);
    BBox {
        x: x0,
        y: y0,
        w: (x1 - x0).max(0.0),
        h: (y1 - y0).max(0.0),
    }
}
