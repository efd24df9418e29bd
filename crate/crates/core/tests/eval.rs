mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::*;
use wholebody::coco_io::{DetectionCategory, DetectionSet};
use wholebody::eval::{evaluate, match_image, oks, per_part_report, EvalParams, EvalReport};
use wholebody::schema::{PartKind, COCO_BODY_SIGMAS};
use wholebody::{AnnotationSet, BBox, Keypoint, PersonAnnotation, SigmaTable};

fn single_point_gt(id: u64, image_id: u64, x: f64, y: f64, area: f64) -> PersonAnnotation {
    let mut kps = vec![Keypoint::UNLABELED; 17];
    kps[0] = Keypoint::new(x, y, 2.0);
    PersonAnnotation::new(id, image_id, kps, BBox::default(), area)
}

/// Detection whose only confident keypoint sits at OKS `target` from `g`.
fn det_at_oks(
    id: u64,
    g: &PersonAnnotation,
    target: f64,
    score: f64,
) -> wholebody::DetectionRecord {
    let sigma = COCO_BODY_SIGMAS[0];
    let d = (-target.ln() * 2.0 * g.area * (2.0 * sigma) * (2.0 * sigma)).sqrt();
    let mut kps = vec![Keypoint::UNLABELED; 17];
    kps[0] = Keypoint::new(g.keypoints[0].x + d, g.keypoints[0].y, 1.0);
    detection(id, g.image_id, kps, score)
}

fn report_values(r: &EvalReport) -> [Option<f64>; 10] {
    r.values()
}

/// Three images, four persons, six detections with chosen OKS values.
#[test]
fn three_image_fixture_matches_hand_computation() {
    let mut gt = AnnotationSet {
        images: vec![image(1, 640, 480), image(2, 640, 480), image(3, 640, 480)],
        ..Default::default()
    };
    let g1 = single_point_gt(1, 1, 100.0, 100.0, 10000.0);
    let g2 = single_point_gt(2, 2, 100.0, 100.0, 2500.0);
    let g3 = single_point_gt(3, 2, 400.0, 300.0, 40000.0);
    let g4 = single_point_gt(4, 3, 100.0, 100.0, 5000.0);
    let mut far = vec![Keypoint::UNLABELED; 17];
    far[0] = Keypoint::new(500.0, 400.0, 1.0);
    let dets = vec![
        det_at_oks(1, &g1, 0.97, 0.9),
        det_at_oks(2, &g1, 0.80, 0.8),
        det_at_oks(3, &g2, 0.62, 0.7),
        det_at_oks(4, &g3, 0.88, 0.6),
        det_at_oks(5, &g4, 0.72, 0.5),
        detection(6, 3, far, 0.4),
    ];
    gt.annotations = vec![g1, g2, g3, g4];
    let results = DetectionSet::new(DetectionCategory::Part(PartKind::Body), dets);
    let report = evaluate(
        &gt,
        &results,
        &SigmaTable::default(),
        &EvalParams::default(),
    )
    .unwrap();

    // Per-threshold APs worked out from the TP/FP sequences:
    //   t <= .60: T F T T T F -> (26 * 1 + 75 * 0.8) / 101
    //   .65, .70: T F F T T F -> (26 * 1 + 50 * 0.6) / 101
    //   .75-.85:  T F F T F F -> (26 * 1 + 25 * 0.5) / 101
    //   .90, .95: T F F F F F -> 26 / 101
    let expected = [
        Some((3.0 * 86.0 + 2.0 * 56.0 + 3.0 * 38.5 + 2.0 * 26.0) / 1010.0),
        Some(86.0 / 101.0),
        Some(38.5 / 101.0),
        Some((3.0 + 2.0 * 51.0 / 101.0) / 10.0),
        Some((8.0 + 2.0 * 51.0 / 101.0) / 10.0),
        Some(0.65),
        Some(1.0),
        Some(0.5),
        Some(0.4),
        Some(0.9),
    ];
    metrics_equal(&report_values(&report), &expected, 1e-12).unwrap();
    let oracle = reference_evaluate(&gt, &results, &COCO_BODY_SIGMAS, 20);
    metrics_equal(&report_values(&report), &oracle, 1e-12).unwrap();
}

#[test]
fn empty_results_give_zero() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (gt, _) = random_whole_body_instance(&mut rng);
    let empty = DetectionSet::empty(DetectionCategory::WholeBody);
    let r = evaluate(&gt, &empty, &SigmaTable::default(), &EvalParams::default()).unwrap();
    assert_eq!(r.map, Some(0.0));
    assert_eq!(r.mar, Some(0.0));
    for v in r.values().into_iter().flatten() {
        assert_eq!(v, 0.0);
    }
}

#[test]
fn no_ground_truth_is_undefined() {
    let gt = AnnotationSet {
        images: vec![image(1, 100, 100)],
        ..Default::default()
    };
    let r = evaluate(
        &gt,
        &DetectionSet::empty(DetectionCategory::WholeBody),
        &SigmaTable::default(),
        &EvalParams::default(),
    )
    .unwrap();
    assert!(r.values().iter().all(Option::is_none));
    assert_eq!(r.to_json()["mAP"], -1.0);
}

#[test]
fn mismatched_keypoint_counts_are_reported() {
    let mut gt = AnnotationSet {
        images: vec![image(1, 100, 100)],
        ..Default::default()
    };
    gt.annotations = vec![single_point_gt(1, 1, 5.0, 5.0, 100.0)];
    let err = evaluate(
        &gt,
        &DetectionSet::empty(DetectionCategory::WholeBody),
        &SigmaTable::default(),
        &EvalParams::default(),
    )
    .unwrap_err();
    assert!(err.to_string().contains("17"));
}

/// Lexicographically best assignment in score order, found by enumerating
/// every injective partial assignment.
fn brute_force_greedy(oks: &[Vec<f64>], threshold: f64) -> Vec<Option<usize>> {
    let (nd, ng) = (oks.len(), oks.first().map_or(0, Vec::len));
    let mut best: Option<(Vec<f64>, Vec<Option<usize>>)> = None;
    let mut current = vec![None; nd];
    fn rec(
        d: usize,
        oks: &[Vec<f64>],
        threshold: f64,
        ng: usize,
        used: &mut Vec<bool>,
        current: &mut Vec<Option<usize>>,
        best: &mut Option<(Vec<f64>, Vec<Option<usize>>)>,
    ) {
        if d == oks.len() {
            let key: Vec<f64> = current
                .iter()
                .enumerate()
                .map(|(i, m)| m.map_or(-1.0, |g| oks[i][g]))
                .collect();
            let better = match best {
                None => true,
                Some((k, _)) => key.partial_cmp(k) == Some(std::cmp::Ordering::Greater),
            };
            if better {
                *best = Some((key, current.clone()));
            }
            return;
        }
        current[d] = None;
        rec(d + 1, oks, threshold, ng, used, current, best);
        for g in 0..ng {
            if !used[g] && oks[d][g] >= threshold {
                used[g] = true;
                current[d] = Some(g);
                rec(d + 1, oks, threshold, ng, used, current, best);
                used[g] = false;
            }
        }
        current[d] = None;
    }
    rec(
        0,
        oks,
        threshold,
        ng,
        &mut vec![false; ng],
        &mut current,
        &mut best,
    );
    best.map(|b| b.1).unwrap_or_default()
}

#[test]
fn crossed_matrix_matches_exhaustive_oracle() {
    // det 1 (higher score) is closer to both persons; det 2 only to person B.
    let a = single_point_gt(1, 1, 100.0, 100.0, 10000.0);
    let b = single_point_gt(2, 1, 104.0, 100.0, 10000.0);
    let d1 = det_at_oks(1, &a, 0.9, 0.9);
    let d2 = det_at_oks(2, &b, 0.8, 0.5);
    let sig = &COCO_BODY_SIGMAS[..];
    let matrix: Vec<Vec<f64>> = [&d1, &d2]
        .iter()
        .map(|d| [&a, &b].iter().map(|g| oks(&d.keypoints, g, sig)).collect())
        .collect();
    for t in [0.5, 0.75, 0.85] {
        let m = match_image(&[&d1, &d2], &[&a, &b], t, sig);
        let got: Vec<Option<usize>> = m.dets.iter().map(|d| d.gt).collect();
        assert_eq!(
            got,
            brute_force_greedy(&matrix, t),
            "threshold {t}: {matrix:?}"
        );
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn match_image_equals_exhaustive_oracle(seed in any::<u64>(), t in 0.3f64..0.95) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (gt, res) = random_instance(&mut rng);
        for im in &gt.images {
            let gts: Vec<_> = gt.annotations.iter().filter(|a| a.image_id == im.id && !a.iscrowd && a.num_keypoints > 0).collect();
            let mut dets: Vec<_> = res.records.iter().filter(|d| d.image_id == im.id).collect();
            dets.sort_by(|a, b| b.score.partial_cmp(&a.score).unwrap().then(a.id.cmp(&b.id)));
            let mut gts_sorted = gts.clone();
            gts_sorted.sort_by_key(|g| g.id);
            let matrix: Vec<Vec<f64>> = dets.iter()
                .map(|d| gts_sorted.iter().map(|g| oks(&d.keypoints, g, &COCO_BODY_SIGMAS)).collect())
                .collect();
            let expected = brute_force_greedy(&matrix, t);
            let m = match_image(&dets, &gts_sorted, t, &COCO_BODY_SIGMAS);
            let got: Vec<Option<usize>> = m.dets.iter().map(|d| d.gt).collect();
            prop_assert_eq!(got, expected);
            for g in 0..gts_sorted.len() {
                prop_assert!(m.dets.iter().filter(|d| d.gt == Some(g)).count() <= 1);
            }
        }
    }

    #[test]
    fn evaluator_matches_reference(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (gt, res) = random_instance(&mut rng);
        let r = evaluate(&gt, &res, &SigmaTable::default(), &EvalParams::default()).unwrap();
        let oracle = reference_evaluate(&gt, &res, &COCO_BODY_SIGMAS, 20);
        prop_assert!(metrics_equal(&r.values(), &oracle, 1e-12).is_ok(), "{:?} vs {:?}", r.values(), oracle);
        for v in r.values().into_iter().flatten() {
            prop_assert!((0.0..=1.0).contains(&v));
        }
    }

    #[test]
    fn per_part_equals_sliced_reference(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (gt, res) = random_whole_body_instance(&mut rng);
        let sigmas = SigmaTable::default();
        let reports = per_part_report(&gt, &res, &sigmas, &EvalParams::default()).unwrap();
        prop_assert_eq!(reports.len(), 5);
        for (kind, report) in reports {
            let (g, r) = slice_part(&gt, &res, kind);
            let oracle = reference_evaluate(&g, &r, sigmas.part(kind), 20);
            prop_assert!(metrics_equal(&report.values(), &oracle, 1e-12).is_ok(), "{kind}: {:?} vs {:?}", report.values(), oracle);
        }
    }

    #[test]
    fn adding_a_match_for_an_unmatched_person_never_lowers_mar(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (gt, res) = random_instance(&mut rng);
        let before = evaluate(&gt, &res, &SigmaTable::default(), &EvalParams::default()).unwrap();
        for target in gt.annotations.iter().filter(|a| !a.iscrowd && a.num_keypoints > 0) {
            let gts: Vec<_> = gt.annotations.iter().filter(|a| a.image_id == target.image_id).collect();
            let dets: Vec<_> = res.records.iter().filter(|d| d.image_id == target.image_id).collect();
            let pos = gts.iter().position(|g| g.id == target.id).unwrap();
            let ever_matched = wholebody::eval::oks_thresholds().iter().any(|&t| {
                match_image(&dets, &gts, t, &COCO_BODY_SIGMAS).gt_matched[pos]
            });
            if ever_matched {
                continue;
            }
            let mut records = res.records.clone();
            records.push(detection(1000, target.image_id, target.keypoints.clone(), 0.5));
            let after_set = DetectionSet::new(res.category, records);
            let after = evaluate(&gt, &after_set, &SigmaTable::default(), &EvalParams::default()).unwrap();
            prop_assert!(after.mar.unwrap() >= before.mar.unwrap());
        }
    }
}

#[test]
fn evaluation_is_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (gt, res) = random_whole_body_instance(&mut rng);
    let sig = SigmaTable::default();
    let a = evaluate(&gt, &res, &sig, &EvalParams::default()).unwrap();
    let mut shuffled = res.records.clone();
    shuffled.reverse();
    let b = evaluate(
        &gt,
        &DetectionSet::new(res.category, shuffled),
        &sig,
        &EvalParams::default(),
    )
    .unwrap();
    for (x, y) in a.values().iter().zip(b.values()) {
        assert_eq!(x.map(f64::to_bits), y.map(f64::to_bits));
    }
}

#[test]
fn perfect_body_with_garbage_hands() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut gt = AnnotationSet {
        images: vec![image(1, 1280, 960)],
        ..Default::default()
    };
    for pid in 1..=2u64 {
        let ox = 500.0 * (pid - 1) as f64;
        let kps: Vec<Keypoint> = (0..133)
            .map(|_| {
                Keypoint::new(
                    ox + rng_range(&mut rng, 0.0, 300.0),
                    rng_range(&mut rng, 0.0, 300.0),
                    2.0,
                )
            })
            .collect();
        gt.annotations.push(PersonAnnotation::new(
            pid,
            1,
            kps,
            BBox::from([ox, 0.0, 300.0, 300.0]),
            60000.0,
        ));
    }
    let mut results = gt.to_results(DetectionCategory::WholeBody);
    for r in &mut results.records {
        for k in &mut r.keypoints[91..] {
            k.x += 150.0;
            k.y -= 120.0;
        }
    }
    let reports = per_part_report(
        &gt,
        &results,
        &SigmaTable::default(),
        &EvalParams::default(),
    )
    .unwrap();
    assert_eq!(reports[&PartKind::Body].map, Some(1.0));
    assert_eq!(reports[&PartKind::Face].map, Some(1.0));
    assert!(reports[&PartKind::LeftHand].map.unwrap() < 1e-9);
    assert!(reports[&PartKind::RightHand].mar.unwrap() < 1e-9);
}

fn rng_range(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    use rand::Rng;
    rng.gen_range(lo..hi)
}

#[test]
fn unlabeled_face_everywhere_is_undefined() {
    let mut gt = AnnotationSet {
        images: vec![image(1, 640, 480)],
        ..Default::default()
    };
    let mut kps = vec![Keypoint::UNLABELED; 133];
    for (i, k) in kps.iter_mut().enumerate().take(23) {
        *k = Keypoint::new(10.0 + i as f64, 20.0 + 2.0 * i as f64, 2.0);
    }
    gt.annotations
        .push(PersonAnnotation::new(1, 1, kps, BBox::default(), 5000.0));
    let results = gt.to_results(DetectionCategory::WholeBody);
    let reports = per_part_report(
        &gt,
        &results,
        &SigmaTable::default(),
        &EvalParams::default(),
    )
    .unwrap();
    assert!(reports[&PartKind::Face]
        .values()
        .iter()
        .all(Option::is_none));
    assert_eq!(reports[&PartKind::Foot].map, Some(1.0));
}
