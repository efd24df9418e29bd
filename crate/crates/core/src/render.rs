//! SVG skeleton drawings on a blank canvas the size of the image.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::coco_io::AnnotationSet;
use crate::schema::{skeleton, PartKind};

#[derive(Debug, thiserror::Error)]
pub enum RenderError {
    #[error("image id {0} is not in the annotation file")]
    UnknownImageId(u64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PartColors {
    pub body: String,
    pub foot: String,
    pub face: String,
    pub left_hand: String,
    pub right_hand: String,
}

impl Default for PartColors {
    fn default() -> Self {
        PartColors {
            body: "#1f77b4".into(),
            foot: "#2ca02c".into(),
            face: "#d62728".into(),
            left_hand: "#ff7f0e".into(),
            right_hand: "#9467bd".into(),
        }
    }
}

impl PartColors {
    pub fn get(&self, kind: PartKind) -> &str {
        match kind {
            PartKind::Body => &self.body,
            PartKind::Foot => &self.foot,
            PartKind::Face => &self.face,
            PartKind::LeftHand => &self.left_hand,
            PartKind::RightHand => &self.right_hand,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenderStyle {
    pub stroke_width: f64,
    /// Marker radius for body and foot keypoints.
    pub marker_radius: f64,
    /// Marker radius for face and hand keypoints.
    pub detail_radius: f64,
    pub background: String,
    pub colors: PartColors,
}

impl Default for RenderStyle {
    fn default() -> Self {
        RenderStyle {
            stroke_width: 2.0,
            marker_radius: 3.0,
            detail_radius: 1.5,
            background: "#ffffff".into(),
            colors: PartColors::default(),
        }
    }
}

/// Shortest fixed-point form with at most two decimals.
fn num(v: f64) -> String {
    let s = format!("{v:.2}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".to_string()
    } else {
        s.to_string()
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('"', "&quot;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

/// Draws every person of `image_id`: one segment per skeleton edge whose
/// endpoints are both labeled, then one circle per labeled keypoint.
pub fn render_svg(
    set: &AnnotationSet,
    image_id: u64,
    style: &RenderStyle,
) -> Result<String, RenderError> {
    let image = set
        .image(image_id)
        .ok_or(RenderError::UnknownImageId(image_id))?;
    let (w, h) = (image.width, image.height);
    let mut persons: Vec<_> = set
        .annotations
        .iter()
        .filter(|a| a.image_id == image_id)
        .collect();
    persons.sort_by_key(|a| a.id);
    let edges = skeleton();

    let mut out = String::new();
    out.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    let _ = writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">"
    );
    let _ = writeln!(
        out,
        "<rect width=\"{w}\" height=\"{h}\" fill=\"{}\"/>",
        escape(&style.background)
    );
    for p in persons {
        let kps = &p.keypoints;
        let _ = writeln!(out, "<g id=\"person-{}\">", p.id);
        for e in &edges {
            let (Some(a), Some(b)) = (kps.get(e.a), kps.get(e.b)) else {
                continue;
            };
            if !(a.is_labeled() && b.is_labeled()) {
                continue;
            }
            let part = PartKind::of_index(e.b).unwrap_or(PartKind::Body);
            let _ = writeln!(
                out,
                "<line class=\"edge {}\" x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"{}\" stroke-width=\"{}\" stroke-linecap=\"round\"/>",
                part.name(),
                num(a.x),
                num(a.y),
                num(b.x),
                num(b.y),
                escape(style.colors.get(part)),
                num(style.stroke_width)
            );
        }
        for (i, k) in kps.iter().enumerate() {
            if !k.is_labeled() {
                continue;
            }
            let part = PartKind::of_index(i).unwrap_or(PartKind::Body);
            let r = match part {
                PartKind::Body | PartKind::Foot => style.marker_radius,
                _ => style.detail_radius,
            };
            let _ = writeln!(
                out,
                "<circle class=\"kp {}\" cx=\"{}\" cy=\"{}\" r=\"{}\" fill=\"{}\"/>",
                part.name(),
                num(k.x),
                num(k.y),
                num(r),
                escape(style.colors.get(part))
            );
        }
        out.push_str("</g>\n");
    }
    out.push_str("</svg>\n");
    Ok(out)
}
