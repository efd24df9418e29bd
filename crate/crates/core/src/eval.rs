//! OKS-based keypoint evaluation: mAP/AP50/AP75/APM/APL and the matching
//! recall figures.
//!
//! Protocol, per image and per area range:
//!
//! * A ground-truth person is *ignored* if it is a crowd, has no labeled
//!   keypoints, or its area falls outside the range (medium: `32² < a < 96²`,
//!   large: `a > 96²`).
//! * Detections are sorted by descending score (ties by id) and capped at
//!   `max_dets` per image.
//! * At each OKS threshold, every detection in turn takes the still-unmatched
//!   non-ignored person with the highest OKS at or above the threshold
//!   (ties to the lower annotation id). Failing that it may take an ignored
//!   person the same way, which makes the detection ignored too. An unmatched
//!   detection is ignored when its own area (box of its confident keypoints)
//!   is outside the range.
//!
//! Non-ignored detections from all images are then ranked by score (ties by
//! id) into a precision/recall curve. Precision is made monotone from the
//! right and sampled at the 101 recall points `0, 0.01, ..., 1`; AP is their
//! mean and recall is the final recall. Metrics with no non-ignored person
//! are undefined.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coco_io::{
    count_labeled, AnnotationSet, DetectionCategory, DetectionRecord, DetectionSet, Keypoint,
    PersonAnnotation,
};
use crate::proposal::BBox;
use crate::schema::{part_range, PartKind, SigmaTable};

/// OKS thresholds `0.50, 0.55, ..., 0.95`.
pub fn oks_thresholds() -> [f64; 10] {
    std::array::from_fn(|i| (50 + 5 * i) as f64 / 100.0)
}

pub const RECALL_POINTS: usize = 101;
pub const MEDIUM_MIN_AREA: f64 = 32.0 * 32.0;
pub const LARGE_MIN_AREA: f64 = 96.0 * 96.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AreaRange {
    All,
    Medium,
    Large,
}

impl AreaRange {
    pub const ALL: [AreaRange; 3] = [AreaRange::All, AreaRange::Medium, AreaRange::Large];

    pub fn contains(self, area: f64) -> bool {
        match self {
            AreaRange::All => true,
            AreaRange::Medium => area > MEDIUM_MIN_AREA && area < LARGE_MIN_AREA,
            AreaRange::Large => area > LARGE_MIN_AREA,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalParams {
    pub max_dets: usize,
}

impl Default for EvalParams {
    fn default() -> Self {
        EvalParams { max_dets: 20 }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("ground-truth person {id} has {gt} keypoints but results have {results}")]
    KeypointCountMismatch { id: u64, gt: usize, results: usize },
}

/// The ten summary metrics. `None` marks a metric with no ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EvalReport {
    pub map: Option<f64>,
    pub ap50: Option<f64>,
    pub ap75: Option<f64>,
    pub apm: Option<f64>,
    pub apl: Option<f64>,
    pub mar: Option<f64>,
    pub ar50: Option<f64>,
    pub ar75: Option<f64>,
    pub arm: Option<f64>,
    pub arl: Option<f64>,
}

impl EvalReport {
    pub const NAMES: [&'static str; 10] = [
        "mAP", "AP50", "AP75", "APM", "APL", "mAR", "AR50", "AR75", "ARM", "ARL",
    ];

    pub fn values(&self) -> [Option<f64>; 10] {
        [
            self.map, self.ap50, self.ap75, self.apm, self.apl, self.mar, self.ar50, self.ar75,
            self.arm, self.arl,
        ]
    }

    pub fn named(&self) -> impl Iterator<Item = (&'static str, Option<f64>)> {
        Self::NAMES.into_iter().zip(self.values())
    }

    /// Machine form: undefined metrics become `-1`.
    pub fn to_json(&self) -> serde_json::Value {
        let map = self
            .named()
            .map(|(n, v)| (n.to_string(), serde_json::Value::from(v.unwrap_or(-1.0))))
            .collect();
        serde_json::Value::Object(map)
    }
}

/// One matched or unmatched detection of [`MatchResult`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetMatch {
    /// Index into the ground-truth slice.
    pub gt: Option<usize>,
    /// OKS with the matched person, or 0 when unmatched.
    pub oks: f64,
    pub ignored: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult {
    /// In the order the detections were given.
    pub dets: Vec<DetMatch>,
    pub gt_matched: Vec<bool>,
}

/// Object keypoint similarity between predicted keypoints and a labeled
/// person of area `area`. Returns 0 when nothing is labeled.
pub fn oks_keypoints(det: &[Keypoint], gt: &[Keypoint], area: f64, sigmas: &[f64]) -> f64 {
    let mut total = 0.0;
    let mut labeled = 0usize;
    for (i, g) in gt.iter().enumerate() {
        if !g.is_labeled() {
            continue;
        }
        labeled += 1;
        let Some(d) = det.get(i) else {
            continue;
        };
        let k = 2.0 * sigmas[i];
        let d2 = (d.x - g.x).powi(2) + (d.y - g.y).powi(2);
        total += (-d2 / (2.0 * area * k * k)).exp();
    }
    if labeled == 0 {
        0.0
    } else {
        total / labeled as f64
    }
}

pub fn oks(det: &[Keypoint], gt: &PersonAnnotation, sigmas: &[f64]) -> f64 {
    oks_keypoints(det, &gt.keypoints, gt.area, sigmas)
}

/// A ground-truth person reduced to what evaluation needs.
#[derive(Debug, Clone)]
struct GtItem<'a> {
    id: u64,
    keypoints: &'a [Keypoint],
    area: f64,
    crowd: bool,
}

impl GtItem<'_> {
    fn ignored(&self, range: AreaRange) -> bool {
        self.crowd || count_labeled(self.keypoints) == 0 || !range.contains(self.area)
    }
}

#[derive(Debug, Clone)]
struct DetItem<'a> {
    id: u64,
    score: f64,
    keypoints: &'a [Keypoint],
}

impl DetItem<'_> {
    fn area(&self) -> f64 {
        BBox::enclosing(
            self.keypoints
                .iter()
                .filter(|k| k.is_labeled())
                .map(|k| (k.x, k.y)),
        )
        .map_or(0.0, |b| b.area())
    }
}

fn by_score(a: &DetItem, b: &DetItem) -> std::cmp::Ordering {
    b.score.total_cmp(&a.score).then(a.id.cmp(&b.id))
}

/// Greedy matching of detections (already in processing order) at one
/// threshold. `oks[d][g]`.
fn greedy_match(oks: &[Vec<f64>], gt_ignored: &[bool], threshold: f64) -> MatchResult {
    let mut gt_matched = vec![false; gt_ignored.len()];
    let mut dets = Vec::with_capacity(oks.len());
    for row in oks {
        let pick = |want_ignored: bool, taken: &[bool]| {
            let mut best: Option<usize> = None;
            for (g, &v) in row.iter().enumerate() {
                if taken[g] || gt_ignored[g] != want_ignored || v < threshold {
                    continue;
                }
                if best.is_none_or(|b| v > row[b]) {
                    best = Some(g);
                }
            }
            best
        };
        let m = pick(false, &gt_matched).or_else(|| pick(true, &gt_matched));
        match m {
            Some(g) => {
                gt_matched[g] = true;
                dets.push(DetMatch {
                    gt: Some(g),
                    oks: row[g],
                    ignored: gt_ignored[g],
                });
            }
            None => dets.push(DetMatch {
                gt: None,
                oks: 0.0,
                ignored: false,
            }),
        }
    }
    MatchResult { dets, gt_matched }
}

/// Matches one image's detections to its persons at `threshold`, with crowd
/// and unlabeled persons ignored.
pub fn match_image(
    dets: &[&DetectionRecord],
    gts: &[&PersonAnnotation],
    threshold: f64,
    sigmas: &[f64],
) -> MatchResult {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| {
        dets[b]
            .score
            .total_cmp(&dets[a].score)
            .then(dets[a].id.cmp(&dets[b].id))
    });
    let mut gt_order: Vec<usize> = (0..gts.len()).collect();
    gt_order.sort_by_key(|&g| gts[g].id);
    let matrix: Vec<Vec<f64>> = order
        .iter()
        .map(|&d| {
            gt_order
                .iter()
                .map(|&g| oks(&dets[d].keypoints, gts[g], sigmas))
                .collect()
        })
        .collect();
    let ignored: Vec<bool> = gt_order
        .iter()
        .map(|&g| gts[g].iscrowd || gts[g].num_keypoints == 0)
        .collect();
    let sorted = greedy_match(&matrix, &ignored, threshold);

    let mut result = MatchResult {
        dets: vec![
            DetMatch {
                gt: None,
                oks: 0.0,
                ignored: false
            };
            dets.len()
        ],
        gt_matched: vec![false; gts.len()],
    };
    for (pos, &d) in order.iter().enumerate() {
        let mut m = sorted.dets[pos];
        m.gt = m.gt.map(|g| gt_order[g]);
        result.dets[d] = m;
    }
    for (pos, &g) in gt_order.iter().enumerate() {
        result.gt_matched[g] = sorted.gt_matched[pos];
    }
    result
}

/// Per-image outcome for one area range and every threshold.
struct ImageEval {
    /// `(score, id, per-threshold Some(is_tp) or None when ignored)`.
    dets: Vec<(f64, u64, Vec<Option<bool>>)>,
    num_gt: usize,
}

fn evaluate_image(
    gts: &[GtItem],
    dets: &[DetItem],
    sigmas: &[f64],
    range: AreaRange,
    thresholds: &[f64],
    max_dets: usize,
) -> ImageEval {
    let mut gts: Vec<&GtItem> = gts.iter().collect();
    gts.sort_by_key(|g| g.id);
    let mut dets: Vec<&DetItem> = dets.iter().collect();
    dets.sort_by(|a, b| by_score(a, b));
    dets.truncate(max_dets);

    let matrix: Vec<Vec<f64>> = dets
        .iter()
        .map(|d| {
            gts.iter()
                .map(|g| oks_keypoints(d.keypoints, g.keypoints, g.area, sigmas))
                .collect()
        })
        .collect();
    let ignored: Vec<bool> = gts.iter().map(|g| g.ignored(range)).collect();
    let mut flags = vec![Vec::with_capacity(thresholds.len()); dets.len()];
    for &t in thresholds {
        let m = greedy_match(&matrix, &ignored, t);
        for ((flag, dm), det) in flags.iter_mut().zip(&m.dets).zip(&dets) {
            let ignore = dm.ignored || (dm.gt.is_none() && !range.contains(det.area()));
            flag.push(if ignore { None } else { Some(dm.gt.is_some()) });
        }
    }
    ImageEval {
        dets: dets
            .iter()
            .zip(flags)
            .map(|(d, f)| (d.score, d.id, f))
            .collect(),
        num_gt: ignored.iter().filter(|i| !**i).count(),
    }
}

/// AP (101-point interpolated) and final recall for one threshold.
fn precision_recall(ranked_tp: &[bool], num_gt: usize) -> (f64, f64) {
    let mut tp = 0usize;
    let mut precision = Vec::with_capacity(ranked_tp.len());
    let mut recall = Vec::with_capacity(ranked_tp.len());
    for (i, &hit) in ranked_tp.iter().enumerate() {
        if hit {
            tp += 1;
        }
        precision.push(tp as f64 / (i + 1) as f64);
        recall.push(tp as f64 / num_gt as f64);
    }
    for i in (1..precision.len()).rev() {
        if precision[i] > precision[i - 1] {
            precision[i - 1] = precision[i];
        }
    }
    let mut sum = 0.0;
    let mut j = 0;
    for r in 0..RECALL_POINTS {
        let level = r as f64 / (RECALL_POINTS - 1) as f64;
        while j < recall.len() && recall[j] < level {
            j += 1;
        }
        if j < recall.len() {
            sum += precision[j];
        }
    }
    (
        sum / RECALL_POINTS as f64,
        recall.last().copied().unwrap_or(0.0),
    )
}

/// Mean AP and mean recall over thresholds plus the per-threshold values.
fn accumulate(images: &[ImageEval], thresholds: usize) -> Option<(Vec<f64>, Vec<f64>)> {
    let num_gt: usize = images.iter().map(|im| im.num_gt).sum();
    if num_gt == 0 {
        return None;
    }
    let mut all: Vec<&(f64, u64, Vec<Option<bool>>)> =
        images.iter().flat_map(|im| &im.dets).collect();
    all.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut aps = Vec::with_capacity(thresholds);
    let mut recalls = Vec::with_capacity(thresholds);
    for t in 0..thresholds {
        let ranked: Vec<bool> = all.iter().filter_map(|d| d.2[t]).collect();
        let (ap, rc) = precision_recall(&ranked, num_gt);
        aps.push(ap);
        recalls.push(rc);
    }
    Some((aps, recalls))
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn evaluate_items(
    image_ids: &[u64],
    gts: &BTreeMap<u64, Vec<GtItem>>,
    dets: &BTreeMap<u64, Vec<DetItem>>,
    sigmas: &[f64],
    params: &EvalParams,
) -> EvalReport {
    let thresholds = oks_thresholds();
    let empty_g: Vec<GtItem> = Vec::new();
    let empty_d: Vec<DetItem> = Vec::new();
    let per_range: Vec<Option<(Vec<f64>, Vec<f64>)>> = AreaRange::ALL
        .iter()
        .map(|&range| {
            let images: Vec<ImageEval> = image_ids
                .par_iter()
                .map(|id| {
                    evaluate_image(
                        gts.get(id).unwrap_or(&empty_g),
                        dets.get(id).unwrap_or(&empty_d),
                        sigmas,
                        range,
                        &thresholds,
                        params.max_dets,
                    )
                })
                .collect();
            accumulate(&images, thresholds.len())
        })
        .collect();

    let i50 = 0;
    let i75 = 5;
    let all = per_range[0].as_ref();
    let mean_ap = |r: &Option<(Vec<f64>, Vec<f64>)>| r.as_ref().map(|(ap, _)| mean(ap));
    let mean_ar = |r: &Option<(Vec<f64>, Vec<f64>)>| r.as_ref().map(|(_, rc)| mean(rc));
    EvalReport {
        map: mean_ap(&per_range[0]),
        ap50: all.map(|(ap, _)| ap[i50]),
        ap75: all.map(|(ap, _)| ap[i75]),
        apm: mean_ap(&per_range[1]),
        apl: mean_ap(&per_range[2]),
        mar: mean_ar(&per_range[0]),
        ar50: all.map(|(_, rc)| rc[i50]),
        ar75: all.map(|(_, rc)| rc[i75]),
        arm: mean_ar(&per_range[1]),
        arl: mean_ar(&per_range[2]),
    }
}

/// Evaluates `results` against every image of `gt`. Results on images absent
/// from `gt` are skipped.
pub fn evaluate(
    gt: &AnnotationSet,
    results: &DetectionSet,
    sigmas: &SigmaTable,
    params: &EvalParams,
) -> Result<EvalReport, EvalError> {
    let k = results.category.len();
    let sigma_slice = match results.category {
        DetectionCategory::Part(kind) => sigmas.part(kind),
        DetectionCategory::WholeBody => sigmas.as_slice(),
    };
    evaluate_window(gt, results, 0..k, sigma_slice, params)
}

/// Evaluation restricted to keypoint indices `window` of both ground truth
/// and results.
fn evaluate_window(
    gt: &AnnotationSet,
    results: &DetectionSet,
    window: std::ops::Range<usize>,
    sigmas: &[f64],
    params: &EvalParams,
) -> Result<EvalReport, EvalError> {
    let k = results.category.len();
    let sliced = window.len() != k;
    let image_ids: Vec<u64> = gt.images.iter().map(|im| im.id).collect();
    let mut gts: BTreeMap<u64, Vec<GtItem>> = BTreeMap::new();
    for a in &gt.annotations {
        let keypoints = if sliced {
            // Part evaluation: persons without the part's slots contribute nothing.
            match a.keypoints.get(window.clone()) {
                Some(kps) => kps,
                None => continue,
            }
        } else if a.keypoints.len() == k {
            &a.keypoints[..]
        } else {
            return Err(EvalError::KeypointCountMismatch {
                id: a.id,
                gt: a.keypoints.len(),
                results: k,
            });
        };
        gts.entry(a.image_id).or_default().push(GtItem {
            id: a.id,
            keypoints,
            area: a.area,
            crowd: a.iscrowd,
        });
    }
    let mut dets: BTreeMap<u64, Vec<DetItem>> = BTreeMap::new();
    for r in &results.records {
        let Some(keypoints) = r.keypoints.get(window.clone()) else {
            continue;
        };
        if sliced && count_labeled(keypoints) == 0 {
            continue;
        }
        dets.entry(r.image_id).or_default().push(DetItem {
            id: r.id,
            score: r.score,
            keypoints,
        });
    }
    Ok(evaluate_items(&image_ids, &gts, &dets, sigmas, params))
}

/// Runs the protocol separately on each part's keypoint range, with part-only
/// OKS. A result whose part keypoints all have zero confidence makes no
/// prediction for that part.
pub fn per_part_report(
    gt: &AnnotationSet,
    results: &DetectionSet,
    sigmas: &SigmaTable,
    params: &EvalParams,
) -> Result<BTreeMap<PartKind, EvalReport>, EvalError> {
    let parts: &[PartKind] = match results.category {
        DetectionCategory::WholeBody => &PartKind::ALL,
        DetectionCategory::Part(kind) => {
            return Ok(BTreeMap::from([(
                kind,
                evaluate(gt, results, sigmas, params)?,
            )]))
        }
    };
    parts
        .iter()
        .map(|&kind| {
            evaluate_window(gt, results, part_range(kind), sigmas.part(kind), params)
                .map(|r| (kind, r))
        })
        .collect()
}
