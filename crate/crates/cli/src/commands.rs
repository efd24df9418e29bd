use std::fmt::Write as _;
use std::path::Path;
use std::process::ExitCode;

use rayon::prelude::*;
use serde_json::{json, Map, Value};
use wholebody::coco_io::validate_bytes;
use wholebody::merge::PartSets;
use wholebody::pose_nms::nms_indices;
use wholebody::proposal::{clip_to_image, face_box, foot_box, hand_boxes};
use wholebody::render::render_svg;
use wholebody::schema::{SchemaSidecar, NUM_BODY, NUM_KEYPOINTS};
use wholebody::stats::dataset_stats;
use wholebody::{
    evaluate, merge_dataset, parse_detections, parse_ground_truth, per_part_report,
    write_annotations, write_detections, AnnotationSet, DetectionCategory, DetectionSet,
    EvalReport, FullBodyPose, MergeParams, PartKind, SigmaTable,
};

use crate::config::Config;
use crate::failure::{read_file, write_output, CliResult, Failure};
use crate::{
    Cli, Command, EvaluateArgs, Format, MergeArgs, NmsArgs, ProposeArgs, RenderArgs, SchemaArgs,
    StatsArgs, ValidateArgs,
};

pub fn run(cli: Cli) -> CliResult<ExitCode> {
    let config = Config::load(cli.config.as_deref())?;
    match cli.command {
        Command::Propose(a) => propose(a, &config),
        Command::Merge(a) => merge(a, &config),
        Command::Nms(a) => nms(a, &config),
        Command::Evaluate(a) => evaluate_cmd(a, &config),
        Command::Validate(a) => return validate_cmd(a),
        Command::Stats(a) => stats(a),
        Command::Render(a) => render(a, &config),
        Command::Schema(a) => schema(a, &config),
    }
    .map(|_| ExitCode::SUCCESS)
}

fn load_gt(path: &Path) -> CliResult<AnnotationSet> {
    parse_ground_truth(&read_file(path)?).map_err(|e| Failure::invalid("parse", e).at(path))
}

fn keypoint_count_of_first_record(bytes: &[u8]) -> Option<usize> {
    let v: Value = serde_json::from_slice(bytes).ok()?;
    Some(v.get(0)?.get("keypoints")?.as_array()?.len() / 3)
}

/// Reads a results file, inferring its layout unless `category` is given.
fn load_results(path: &Path, category: Option<DetectionCategory>) -> CliResult<DetectionSet> {
    let bytes = read_file(path)?;
    let category = match category {
        Some(c) => c,
        None => match keypoint_count_of_first_record(&bytes) {
            None => DetectionCategory::WholeBody,
            Some(n) => DetectionCategory::infer(n).ok_or_else(|| {
                Failure::usage(format!(
                    "cannot infer the layout of {n}-keypoint records; pass --category"
                ))
                .at(path)
            })?,
        },
    };
    parse_detections(&bytes, category).map_err(|e| Failure::invalid("parse", e).at(path))
}

fn positive(name: &str, v: f64) -> CliResult<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Failure::usage(format!("{name} must be positive, got {v}")))
    }
}

fn unit_interval(name: &str, v: f64) -> CliResult<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Failure::usage(format!(
            "{name} must lie in [0, 1], got {v}"
        )))
    }
}

fn to_json_bytes(v: &impl serde::Serialize) -> Vec<u8> {
    let mut bytes = serde_json::to_vec_pretty(v).expect("JSON values always serialize");
    bytes.push(b'\n');
    bytes
}

fn propose(a: ProposeArgs, config: &Config) -> CliResult<()> {
    let mut p = config.proposal;
    if let Some(v) = a.face_expansion {
        p.face.expansion = v;
    }
    if let Some(v) = a.hand_alpha {
        p.hand.alpha = v;
    }
    if let Some(v) = a.hand_gamma {
        p.hand.gamma = v;
    }
    if let Some(v) = a.foot_shank_factor {
        p.foot.shank_factor = v;
    }
    if let Some(v) = a.min_side {
        p.face.min_side = v;
        p.hand.min_side = v;
        p.foot.min_side = v;
    }
    positive("face expansion", p.face.expansion)?;
    positive("hand gamma", p.hand.gamma)?;

    let gt = load_gt(&a.gt)?;
    let mut persons: Vec<_> = gt.annotations.iter().collect();
    persons.sort_by_key(|p| (p.image_id, p.id));
    let entries: Vec<Value> = persons
        .iter()
        .map(|person| {
            let image = gt
                .image(person.image_id)
                .expect("parsed references resolve");
            let fit = |b: Option<wholebody::BBox>| {
                let b = if a.clip {
                    b.map(|b| clip_to_image(&b, image))
                } else {
                    b
                };
                json!(b)
            };
            let (left, right) = hand_boxes(&person.keypoints, &p.hand);
            json!({
                "image_id": person.image_id,
                "person_id": person.id,
                "face": fit(face_box(&person.keypoints, &p.face)),
                "left_hand": fit(left),
                "right_hand": fit(right),
                "foot": fit(foot_box(&person.keypoints, &p.foot)),
            })
        })
        .collect();
    write_output(a.out.as_deref(), &to_json_bytes(&entries))
}

fn merge(a: MergeArgs, config: &Config) -> CliResult<()> {
    let mut params = MergeParams {
        iou_threshold: config.merge.iou_threshold,
        min_keypoint_confidence: config.merge.min_keypoint_confidence,
        proposal: config.proposal,
    };
    if let Some(v) = a.iou_threshold {
        params.iou_threshold = v;
    }
    if let Some(v) = a.min_confidence {
        params.min_keypoint_confidence = v;
    }
    unit_interval("IoU threshold", params.iou_threshold)?;
    unit_interval("minimum confidence", params.min_keypoint_confidence)?;

    let gt = load_gt(&a.gt)?;
    if let Some(p) = gt
        .annotations
        .iter()
        .find(|p| p.keypoints.len() != NUM_BODY)
    {
        return Err(Failure::invalid(
            "parse",
            format!(
                "person {} has {} keypoints; merge expects {NUM_BODY}",
                p.id,
                p.keypoints.len()
            ),
        )
        .at(&a.gt));
    }
    let part = |path: &Option<std::path::PathBuf>, kind| match path {
        Some(p) => load_results(p, Some(DetectionCategory::Part(kind))),
        None => Ok(DetectionSet::empty(DetectionCategory::Part(kind))),
    };
    let foot = part(&a.foot, PartKind::Foot)?;
    let face = part(&a.face, PartKind::Face)?;
    let left_hand = part(&a.lhand, PartKind::LeftHand)?;
    let right_hand = part(&a.rhand, PartKind::RightHand)?;
    let sets = PartSets {
        foot: &foot,
        face: &face,
        left_hand: &left_hand,
        right_hand: &right_hand,
    };
    let merged = merge_dataset(&gt, &sets, &params).map_err(|e| Failure::invalid("merge", e))?;
    write_output(a.out.as_deref(), &write_annotations(&merged))
}

fn nms(a: NmsArgs, config: &Config) -> CliResult<()> {
    let mut params = config.nms;
    if let Some(v) = a.eta {
        params.eta = v;
    }
    if let Some(v) = a.lambda {
        params.lambda = v;
    }
    if let Some(v) = a.sigma_soft {
        params.sigma_soft = v;
    }
    if let Some(v) = a.score_floor {
        params.score_floor = v;
    }
    params.check().map_err(Failure::usage)?;
    let category = a
        .category
        .as_deref()
        .map(|c| c.parse::<DetectionCategory>().map_err(Failure::usage))
        .transpose()?;

    let results = load_results(&a.input, category)?;
    let groups: Vec<_> = results.by_image().into_values().collect();
    let kept: Vec<_> = groups
        .par_iter()
        .flat_map_iter(|records| {
            let poses: Vec<FullBodyPose> = records
                .iter()
                .map(|r| FullBodyPose::from_detection(r))
                .collect();
            nms_indices(&poses, &params)
                .into_iter()
                .map(|i| records[i].clone())
                .collect::<Vec<_>>()
        })
        .collect();
    let out = DetectionSet::new(results.category, kept);
    write_output(a.out.as_deref(), &write_detections(&out))
}

fn sigma_table(path: Option<&Path>, config: &Config) -> CliResult<SigmaTable> {
    match path {
        Some(p) => {
            SigmaTable::from_json(&read_file(p)?).map_err(|e| Failure::invalid("sigmas", e).at(p))
        }
        None => SigmaTable::from_config(&config.sigmas)
            .map_err(|e| Failure::usage(format!("bad sigmas in config: {e}"))),
    }
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |v| format!("{:.1}", 100.0 * v))
}

/// Percentages with one decimal, one row per report.
fn format_table(rows: &[(String, EvalReport)]) -> String {
    let label = rows.iter().map(|(n, _)| n.len()).max().unwrap_or(0).max(4);
    let mut out = format!("{:<label$}", "Part");
    for name in EvalReport::NAMES {
        let _ = write!(out, " | {name:>5}");
    }
    out.push('\n');
    let _ = writeln!(out, "{}", "-".repeat(out.len() - 1));
    for (name, r) in rows {
        let _ = write!(out, "{name:<label$}");
        for v in r.values() {
            let _ = write!(out, " | {:>5}", cell(v));
        }
        out.push('\n');
    }
    out
}

fn format_csv(rows: &[(String, EvalReport)]) -> String {
    let mut out = format!("part,{}\n", EvalReport::NAMES.join(","));
    for (name, r) in rows {
        let values: Vec<String> = r
            .values()
            .iter()
            .map(|v| v.unwrap_or(-1.0).to_string())
            .collect();
        let _ = writeln!(out, "{name},{}", values.join(","));
    }
    out
}

fn evaluate_cmd(a: EvaluateArgs, config: &Config) -> CliResult<()> {
    let mut params = config.eval;
    if let Some(v) = a.max_dets {
        params.max_dets = v;
    }
    if params.max_dets == 0 {
        return Err(Failure::usage("max_dets must be at least 1"));
    }
    let sigmas = sigma_table(a.sigmas.as_deref(), config)?;
    let gt = load_gt(&a.gt)?;
    let gt_len = gt.annotations.first().map(|p| p.keypoints.len());
    let category = match gt_len {
        Some(NUM_KEYPOINTS) => Some(DetectionCategory::WholeBody),
        Some(NUM_BODY) => Some(DetectionCategory::Part(PartKind::Body)),
        _ => None,
    };
    let results = load_results(&a.results, category)?;
    if a.per_part && gt_len.is_some_and(|n| n != NUM_KEYPOINTS) {
        return Err(Failure::usage("--per-part needs whole-body ground truth").at(&a.gt));
    }

    let overall =
        evaluate(&gt, &results, &sigmas, &params).map_err(|e| Failure::invalid("evaluate", e))?;
    let mut rows = vec![(results.category.name().to_string(), overall)];
    if a.per_part {
        let parts = per_part_report(&gt, &results, &sigmas, &params)
            .map_err(|e| Failure::invalid("evaluate", e))?;
        rows.extend(parts.into_iter().map(|(k, r)| (k.name().to_string(), r)));
    }
    let text = match a.format {
        Format::Table => format_table(&rows),
        Format::Csv => format_csv(&rows),
        Format::Json => {
            let map: Map<String, Value> =
                rows.iter().map(|(n, r)| (n.clone(), r.to_json())).collect();
            String::from_utf8(to_json_bytes(&map)).expect("JSON is UTF-8")
        }
    };
    write_output(a.out.as_deref(), text.as_bytes())
}

fn validate_cmd(a: ValidateArgs) -> CliResult<ExitCode> {
    let report = validate_bytes(&read_file(&a.path)?);
    for v in &report.violations {
        eprintln!(
            "{}",
            json!({
                "level": v.severity,
                "kind": "validation",
                "location": v.location,
                "message": v.message,
                "path": a.path.display().to_string(),
            })
        );
    }
    let errors = report.errors().count();
    let summary = json!({"errors": errors, "warnings": report.warnings().count()});
    write_output(None, format!("{summary}\n").as_bytes())?;
    Ok(if errors > 0 {
        ExitCode::from(crate::failure::Exit::Invalid as u8)
    } else {
        ExitCode::SUCCESS
    })
}

fn stats(a: StatsArgs) -> CliResult<()> {
    let gt = load_gt(&a.path)?;
    write_output(a.out.as_deref(), &to_json_bytes(&dataset_stats(&gt)))
}

fn render(a: RenderArgs, config: &Config) -> CliResult<()> {
    let mut style = config.render.clone();
    if let Some(v) = a.stroke_width {
        style.stroke_width = v;
    }
    if let Some(v) = a.marker_radius {
        style.marker_radius = v;
    }
    if let Some(v) = a.detail_radius {
        style.detail_radius = v;
    }
    positive("stroke width", style.stroke_width)?;
    positive("marker radius", style.marker_radius)?;
    positive("detail radius", style.detail_radius)?;
    let gt = load_gt(&a.path)?;
    let svg = render_svg(&gt, a.image_id, &style)
        .map_err(|e| Failure::invalid("render", e).at(&a.path))?;
    write_output(a.out.as_deref(), svg.as_bytes())
}

fn schema(a: SchemaArgs, config: &Config) -> CliResult<()> {
    let sigmas = sigma_table(a.sigmas.as_deref(), config)?;
    write_output(
        a.out.as_deref(),
        &to_json_bytes(&SchemaSidecar::new(&sigmas)),
    )
}
