//! Test-only oracles and generators. Nothing here calls into the evaluator
//! or the suppression loop under test.

#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde_json::Map;

use wholebody::coco_io::{AnnotationSet, DetectionCategory, DetectionRecord, DetectionSet};
use wholebody::pose_nms::{pose_distance, NmsParams};
use wholebody::{BBox, FullBodyPose, ImageRecord, Keypoint, PersonAnnotation};

pub const METRIC_NAMES: [&str; 10] = [
    "mAP", "AP50", "AP75", "APM", "APL", "mAR", "AR50", "AR75", "ARM", "ARL",
];

#[derive(Clone, Copy, PartialEq, Debug)]
enum Range {
    All,
    Medium,
    Large,
}

fn in_range(range: Range, area: f64) -> bool {
    match range {
        Range::All => true,
        Range::Medium => 1024.0 < area && area < 9216.0,
        Range::Large => 9216.0 < area,
    }
}

fn ref_oks(det: &[Keypoint], gt: &[Keypoint], area: f64, sigmas: &[f64]) -> f64 {
    let labeled: Vec<usize> = (0..gt.len()).filter(|&i| gt[i].v > 0.0).collect();
    if labeled.is_empty() {
        return 0.0;
    }
    let mut s = 0.0;
    for &i in &labeled {
        let dx = det[i].x - gt[i].x;
        let dy = det[i].y - gt[i].y;
        let var = (2.0 * sigmas[i]) * (2.0 * sigmas[i]);
        s += (-(dx * dx + dy * dy) / var / area / 2.0).exp();
    }
    s / labeled.len() as f64
}

#[derive(Clone, Copy, PartialEq, Debug)]
enum Outcome {
    Tp,
    Fp,
    Skip,
}

/// Interpolated AP by definition: at each recall level take the best
/// precision achieved at any rank whose recall reaches that level.
fn ref_ap_and_recall(outcomes: &[bool], npig: usize) -> (f64, f64) {
    let n = outcomes.len();
    let mut prec = vec![0.0; n];
    let mut rec = vec![0.0; n];
    for k in 0..n {
        let tp = outcomes[..=k].iter().filter(|&&b| b).count();
        prec[k] = tp as f64 / (k + 1) as f64;
        rec[k] = tp as f64 / npig as f64;
    }
    let mut total = 0.0;
    for r in 0..=100 {
        let level = r as f64 / 100.0;
        let mut best = 0.0f64;
        for k in 0..n {
            if rec[k] >= level && prec[k] > best {
                best = prec[k];
            }
        }
        total += best;
    }
    (total / 101.0, if n == 0 { 0.0 } else { rec[n - 1] })
}

/// Brute-force evaluator returning the ten metrics (`None` = undefined).
pub fn reference_evaluate(
    gt: &AnnotationSet,
    results: &DetectionSet,
    sigmas: &[f64],
    max_dets: usize,
) -> [Option<f64>; 10] {
    let thresholds: Vec<f64> = (0..10).map(|i| (50 + 5 * i) as f64 / 100.0).collect();
    let mut image_ids: Vec<u64> = gt.images.iter().map(|im| im.id).collect();
    image_ids.sort();

    let run = |range: Range, t: f64| -> Option<(f64, f64)> {
        let mut pool: Vec<(f64, u64, Outcome)> = Vec::new();
        let mut npig = 0;
        for &img in &image_ids {
            let mut gts: Vec<&PersonAnnotation> = gt
                .annotations
                .iter()
                .filter(|a| a.image_id == img)
                .collect();
            gts.sort_by_key(|a| a.id);
            let ign: Vec<bool> = gts
                .iter()
                .map(|g| {
                    g.iscrowd || g.keypoints.iter().all(|k| k.v <= 0.0) || !in_range(range, g.area)
                })
                .collect();
            npig += ign.iter().filter(|&&i| !i).count();
            let mut dets: Vec<&DetectionRecord> = results
                .records
                .iter()
                .filter(|d| d.image_id == img)
                .collect();
            dets.sort_by(|a, b| b.score.partial_cmp(&a.score).unwrap().then(a.id.cmp(&b.id)));
            dets.truncate(max_dets);
            let mut taken = vec![false; gts.len()];
            for d in dets {
                let values: Vec<f64> = gts
                    .iter()
                    .map(|g| ref_oks(&d.keypoints, &g.keypoints, g.area, sigmas))
                    .collect();
                let mut chosen = None;
                for pass_ignored in [false, true] {
                    let mut best = -1.0;
                    for g in 0..gts.len() {
                        if ign[g] == pass_ignored && !taken[g] && values[g] >= t && values[g] > best
                        {
                            best = values[g];
                            chosen = Some(g);
                        }
                    }
                    if chosen.is_some() {
                        break;
                    }
                }
                let outcome = match chosen {
                    Some(g) => {
                        taken[g] = true;
                        if ign[g] {
                            Outcome::Skip
                        } else {
                            Outcome::Tp
                        }
                    }
                    None => {
                        let conf: Vec<&Keypoint> =
                            d.keypoints.iter().filter(|k| k.v > 0.0).collect();
                        let area = if conf.is_empty() {
                            0.0
                        } else {
                            let xs = conf.iter().map(|k| k.x);
                            let ys = conf.iter().map(|k| k.y);
                            let w =
                                xs.clone().fold(f64::MIN, f64::max) - xs.fold(f64::MAX, f64::min);
                            let h =
                                ys.clone().fold(f64::MIN, f64::max) - ys.fold(f64::MAX, f64::min);
                            w * h
                        };
                        if in_range(range, area) {
                            Outcome::Fp
                        } else {
                            Outcome::Skip
                        }
                    }
                };
                pool.push((d.score, d.id, outcome));
            }
        }
        if npig == 0 {
            return None;
        }
        pool.retain(|p| p.2 != Outcome::Skip);
        pool.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
        let outcomes: Vec<bool> = pool.iter().map(|p| p.2 == Outcome::Tp).collect();
        Some(ref_ap_and_recall(&outcomes, npig))
    };

    let summarize = |range: Range| -> Option<(Vec<f64>, Vec<f64>)> {
        let per: Vec<Option<(f64, f64)>> = thresholds.iter().map(|&t| run(range, t)).collect();
        if per.iter().any(|p| p.is_none()) {
            return None;
        }
        let per: Vec<(f64, f64)> = per.into_iter().flatten().collect();
        Some((
            per.iter().map(|p| p.0).collect(),
            per.iter().map(|p| p.1).collect(),
        ))
    };
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let all = summarize(Range::All);
    let med = summarize(Range::Medium);
    let large = summarize(Range::Large);
    [
        all.as_ref().map(|a| mean(&a.0)),
        all.as_ref().map(|a| a.0[0]),
        all.as_ref().map(|a| a.0[5]),
        med.as_ref().map(|a| mean(&a.0)),
        large.as_ref().map(|a| mean(&a.0)),
        all.as_ref().map(|a| mean(&a.1)),
        all.as_ref().map(|a| a.1[0]),
        all.as_ref().map(|a| a.1[5]),
        med.as_ref().map(|a| mean(&a.1)),
        large.as_ref().map(|a| mean(&a.1)),
    ]
}

/// Retained indices by the recursive definition: a pose survives iff no
/// higher-ranked survivor is more similar than `eta`.
pub fn reference_nms(poses: &[FullBodyPose], params: &NmsParams) -> Vec<usize> {
    let mut ranked: Vec<usize> = (0..poses.len())
        .filter(|&i| poses[i].score >= params.score_floor)
        .collect();
    ranked.sort_by(|&a, &b| {
        poses[b]
            .score
            .partial_cmp(&poses[a].score)
            .unwrap()
            .then(a.cmp(&b))
    });
    let mut survivors: Vec<usize> = Vec::new();
    for &i in &ranked {
        if survivors
            .iter()
            .all(|&j| pose_distance(&poses[j], &poses[i], params) <= params.eta)
        {
            survivors.push(i);
        }
    }
    survivors
}

pub fn image(id: u64, w: u32, h: u32) -> ImageRecord {
    ImageRecord::new(id, w, h, &format!("{id:012}.jpg"))
}

pub fn detection(id: u64, image_id: u64, keypoints: Vec<Keypoint>, score: f64) -> DetectionRecord {
    DetectionRecord {
        id,
        image_id,
        category_id: 1,
        keypoints,
        score,
        bbox: None,
        extra: Map::new(),
    }
}

/// Random body-only (17 keypoint) ground truth and results: at most 4 images,
/// 4 persons and 6 detections, mixing crowd, unlabeled, small, medium and
/// large persons, near and far detections, and tied scores.
pub fn random_instance(rng: &mut ChaCha8Rng) -> (AnnotationSet, DetectionSet) {
    let n_images = rng.gen_range(1..=4u64);
    let mut set = AnnotationSet::default();
    for id in 1..=n_images {
        set.images.push(image(id, 640, 480));
    }
    let n_persons = rng.gen_range(0..=4u64);
    for pid in 1..=n_persons {
        let image_id = rng.gen_range(1..=n_images);
        let side: f64 = *[20.0, 25.0, 50.0, 80.0, 97.0, 150.0, 300.0]
            .get(rng.gen_range(0..7))
            .unwrap();
        let side = side * rng.gen_range(0.9..1.1);
        let (ox, oy) = (rng.gen_range(0.0..300.0), rng.gen_range(0.0..200.0));
        let unlabeled = rng.gen_bool(0.1);
        let kps: Vec<Keypoint> = (0..17)
            .map(|_| {
                let v = if unlabeled || rng.gen_bool(0.2) {
                    0.0
                } else if rng.gen_bool(0.5) {
                    1.0
                } else {
                    2.0
                };
                if v == 0.0 {
                    Keypoint::UNLABELED
                } else {
                    Keypoint::new(
                        ox + rng.gen_range(0.0..side),
                        oy + rng.gen_range(0.0..side),
                        v,
                    )
                }
            })
            .collect();
        let mut p = PersonAnnotation::new(
            pid,
            image_id,
            kps,
            BBox::from([ox, oy, side, side]),
            side * side * rng.gen_range(0.5..1.0),
        );
        p.iscrowd = rng.gen_bool(0.08);
        set.annotations.push(p);
    }
    let n_dets = rng.gen_range(0..=6u64);
    let mut records = Vec::new();
    for did in 1..=n_dets {
        let score = rng.gen_range(1..=5) as f64 / 5.0;
        let copy_of = if !set.annotations.is_empty() && rng.gen_bool(0.8) {
            Some(rng.gen_range(0..set.annotations.len()))
        } else {
            None
        };
        let (image_id, kps) = match copy_of {
            Some(g) => {
                let g = &set.annotations[g];
                let noise = [0.0, 0.02, 0.05, 0.1, 0.3][rng.gen_range(0..5)] * g.area.sqrt();
                let base = rng.gen_range(0.0..300.0);
                let kps = g
                    .keypoints
                    .iter()
                    .map(|k| {
                        let (x, y) = if k.v > 0.0 { (k.x, k.y) } else { (base, base) };
                        Keypoint::new(
                            x + noise * rng.gen_range(-1.0..1.0),
                            y + noise * rng.gen_range(-1.0..1.0),
                            if rng.gen_bool(0.1) {
                                0.0
                            } else {
                                rng.gen_range(0.1..1.0)
                            },
                        )
                    })
                    .collect();
                (g.image_id, kps)
            }
            None => {
                let (ox, oy, side) = (
                    rng.gen_range(0.0..400.0),
                    rng.gen_range(0.0..300.0),
                    rng.gen_range(5.0..200.0),
                );
                let kps = (0..17)
                    .map(|_| {
                        Keypoint::new(
                            ox + rng.gen_range(0.0..side),
                            oy + rng.gen_range(0.0..side),
                            rng.gen_range(0.0..1.0),
                        )
                    })
                    .collect();
                (rng.gen_range(1..=n_images), kps)
            }
        };
        records.push(detection(did, image_id, kps, score));
    }
    (
        set,
        DetectionSet::new(DetectionCategory::Part(wholebody::PartKind::Body), records),
    )
}

/// A cluster of poses around a few centres, with jittered near-duplicates.
pub fn random_pose_cloud(rng: &mut ChaCha8Rng) -> Vec<FullBodyPose> {
    let centres = rng.gen_range(1..=4);
    let n = rng.gen_range(1..=12);
    let bases: Vec<Vec<Keypoint>> = (0..centres)
        .map(|_| {
            let (ox, oy) = (rng.gen_range(0.0..500.0), rng.gen_range(0.0..500.0));
            let size = rng.gen_range(20.0..200.0);
            (0..17)
                .map(|_| {
                    if rng.gen_bool(0.15) {
                        Keypoint::UNLABELED
                    } else {
                        Keypoint::new(
                            ox + rng.gen_range(0.0..size),
                            oy + rng.gen_range(0.0..size),
                            rng.gen_range(0.05..1.0),
                        )
                    }
                })
                .collect()
        })
        .collect();
    (0..n)
        .map(|i| {
            let base = &bases[rng.gen_range(0..centres)];
            let jitter = [0.0, 1.0, 3.0, 10.0][rng.gen_range(0..4)];
            let keypoints = base
                .iter()
                .map(|k| {
                    if k.v > 0.0 && rng.gen_bool(0.9) {
                        Keypoint::new(
                            k.x + jitter * rng.gen_range(-1.0..1.0),
                            k.y + jitter * rng.gen_range(-1.0..1.0),
                            (k.v * rng.gen_range(0.5..1.5)).min(1.0),
                        )
                    } else {
                        Keypoint::UNLABELED
                    }
                })
                .collect();
            FullBodyPose {
                keypoints,
                score: rng.gen_range(1..=10) as f64 / 10.0,
                person_id: i as u64,
                image_id: 1,
            }
        })
        .collect()
}

pub fn translate_pose(p: &FullBodyPose, dx: f64, dy: f64) -> FullBodyPose {
    let mut q = p.clone();
    for k in &mut q.keypoints {
        if k.v > 0.0 {
            k.x += dx;
            k.y += dy;
        }
    }
    q
}

pub fn scale_annotations(set: &AnnotationSet, s: f64) -> AnnotationSet {
    let mut out = set.clone();
    for a in &mut out.annotations {
        for k in &mut a.keypoints {
            k.x *= s;
            k.y *= s;
        }
        a.bbox = BBox::from([a.bbox.x * s, a.bbox.y * s, a.bbox.w * s, a.bbox.h * s]);
        a.area *= s * s;
    }
    for im in &mut out.images {
        im.width = (im.width as f64 * s).ceil() as u32;
        im.height = (im.height as f64 * s).ceil() as u32;
    }
    out
}

pub fn scale_results(set: &DetectionSet, s: f64) -> DetectionSet {
    let mut out = set.clone();
    for r in &mut out.records {
        for k in &mut r.keypoints {
            k.x *= s;
            k.y *= s;
        }
    }
    out
}

pub fn metrics_equal(a: &[Option<f64>; 10], b: &[Option<f64>; 10], tol: f64) -> Result<(), String> {
    for i in 0..10 {
        match (a[i], b[i]) {
            (None, None) => {}
            (Some(x), Some(y)) if (x - y).abs() <= tol => {}
            (x, y) => return Err(format!("{}: {:?} vs {:?}", METRIC_NAMES[i], x, y)),
        }
    }
    Ok(())
}

/// Random whole-body instance: persons with some parts unlabeled, results
/// that copy persons with noise and sometimes blank out whole parts.
pub fn random_whole_body_instance(rng: &mut ChaCha8Rng) -> (AnnotationSet, DetectionSet) {
    use wholebody::schema::{part_range, PartKind};
    let n_images = rng.gen_range(1..=3u64);
    let mut set = AnnotationSet::default();
    for id in 1..=n_images {
        set.images.push(image(id, 1280, 960));
    }
    for pid in 1..=rng.gen_range(1..=4u64) {
        let image_id = rng.gen_range(1..=n_images);
        let side = [60.0, 120.0, 400.0][rng.gen_range(0..3)] * rng.gen_range(0.9..1.1);
        let (ox, oy) = (rng.gen_range(0.0..800.0), rng.gen_range(0.0..500.0));
        let mut kps = vec![Keypoint::UNLABELED; 133];
        for kind in PartKind::ALL {
            if kind != PartKind::Body && rng.gen_bool(0.35) {
                continue;
            }
            for i in part_range(kind) {
                if rng.gen_bool(0.85) {
                    kps[i] = Keypoint::new(
                        ox + rng.gen_range(0.0..side),
                        oy + rng.gen_range(0.0..side),
                        if rng.gen_bool(0.5) { 1.0 } else { 2.0 },
                    );
                }
            }
        }
        set.annotations.push(PersonAnnotation::new(
            pid,
            image_id,
            kps,
            BBox::from([ox, oy, side, side]),
            side * side * 0.7,
        ));
    }
    let mut records = Vec::new();
    for did in 1..=rng.gen_range(0..=6u64) {
        let g = &set.annotations[rng.gen_range(0..set.annotations.len())];
        let noise = [0.0, 0.005, 0.01, 0.03, 0.1][rng.gen_range(0..5)] * g.area.sqrt();
        let mut kps: Vec<Keypoint> = g
            .keypoints
            .iter()
            .map(|k| {
                Keypoint::new(
                    k.x + noise * rng.gen_range(-1.0..1.0),
                    k.y + noise * rng.gen_range(-1.0..1.0),
                    if k.v > 0.0 {
                        rng.gen_range(0.2..1.0)
                    } else {
                        0.0
                    },
                )
            })
            .collect();
        for kind in PartKind::ALL {
            if rng.gen_bool(0.2) {
                for k in &mut kps[part_range(kind)] {
                    *k = Keypoint::UNLABELED;
                }
            }
        }
        records.push(detection(
            did,
            g.image_id,
            kps,
            rng.gen_range(1..=5) as f64 / 5.0,
        ));
    }
    (
        set,
        DetectionSet::new(DetectionCategory::WholeBody, records),
    )
}

/// Restricts ground truth and results to one part's keypoint range.
pub fn slice_part(
    gt: &AnnotationSet,
    results: &DetectionSet,
    kind: wholebody::PartKind,
) -> (AnnotationSet, DetectionSet) {
    let range = wholebody::schema::part_range(kind);
    let mut g = gt.clone();
    g.annotations.retain(|a| a.keypoints.len() >= range.end);
    for a in &mut g.annotations {
        a.keypoints = a.keypoints[range.clone()].to_vec();
        a.num_keypoints = a.keypoints.iter().filter(|k| k.v > 0.0).count();
    }
    let records = results
        .records
        .iter()
        .filter_map(|r| {
            let kps = r.keypoints[range.clone()].to_vec();
            kps.iter().any(|k| k.v > 0.0).then(|| {
                let mut r = r.clone();
                r.keypoints = kps;
                r
            })
        })
        .collect();
    (g, DetectionSet::new(DetectionCategory::Part(kind), records))
}
