//! Reading, checking and writing COCO-style keypoint files.
//!
//! Three shapes are handled:
//!
//! * ground truth: an object with `images`, `annotations` and `categories`
//!   arrays, each person carrying 17 or 133 `(x, y, v)` triples;
//! * results: a flat array of `{image_id, category_id, keypoints, score}`
//!   records, where the third value of each triple is a confidence;
//! * anything else a file carries. Unknown fields on the top level, images,
//!   annotations, categories and result records are kept and written back.
//!
//! Parsing walks a [`serde_json::Value`] by hand so that every problem in a
//! file can be reported by [`validate`], while [`parse_ground_truth`] and
//! [`parse_detections`] stop at the first error.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;
use std::str::FromStr;

use serde_json::{Map, Value};

use crate::proposal::BBox;
use crate::schema::{PartKind, NUM_BODY, NUM_KEYPOINTS};

pub type JsonMap = Map<String, Value>;

/// One `(x, y, v)` triple. For annotations `v` is the visibility flag
/// (0 unlabeled, 1 occluded, 2 visible); for predictions it is a confidence.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Keypoint {
    pub x: f64,
    pub y: f64,
    pub v: f64,
}

impl Keypoint {
    pub const UNLABELED: Keypoint = Keypoint {
        x: 0.0,
        y: 0.0,
        v: 0.0,
    };

    pub const fn new(x: f64, y: f64, v: f64) -> Self {
        Keypoint { x, y, v }
    }

    pub fn is_labeled(&self) -> bool {
        self.v > 0.0
    }
}

pub fn keypoints_from_flat(flat: &[f64]) -> Vec<Keypoint> {
    flat.chunks_exact(3)
        .map(|c| Keypoint::new(c[0], c[1], c[2]))
        .collect()
}

pub fn flatten_keypoints(kps: &[Keypoint]) -> Vec<f64> {
    kps.iter().flat_map(|k| [k.x, k.y, k.v]).collect()
}

pub fn count_labeled(kps: &[Keypoint]) -> usize {
    kps.iter().filter(|k| k.is_labeled()).count()
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CocoError {
    #[error("malformed JSON: {0}")]
    MalformedJson(String),
    #[error("keypoints array has {got} values, expected one of {expected:?}")]
    WrongKeypointCount { got: usize, expected: Vec<usize> },
    #[error("visibility flag {0} is not 0, 1 or 2")]
    BadVisibility(f64),
    #[error("annotation references unknown image id {0}")]
    DanglingImageRef(u64),
    #[error("score {0} is outside [0, 1]")]
    BadScore(f64),
    #[error("image {id} has non-positive size {width}x{height}")]
    BadImageSize { id: u64, width: i64, height: i64 },
    #[error("duplicate image id {0}")]
    DuplicateImageId(u64),
    #[error("duplicate annotation id {0}")]
    DuplicateAnnotationId(u64),
    #[error("num_keypoints is {stored} but {counted} keypoints are labeled")]
    NumKeypointsMismatch { stored: u64, counted: usize },
    #[error("area {0} must be positive when keypoints are labeled")]
    BadArea(f64),
    #[error("bbox {0:?} has a negative extent")]
    BadBox([f64; 4]),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageRecord {
    pub id: u64,
    pub width: u32,
    pub height: u32,
    pub file_name: String,
    pub extra: JsonMap,
}

impl ImageRecord {
    pub fn new(id: u64, width: u32, height: u32, file_name: &str) -> Self {
        ImageRecord {
            id,
            width,
            height,
            file_name: file_name.to_string(),
            extra: JsonMap::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PersonAnnotation {
    pub id: u64,
    pub image_id: u64,
    pub category_id: u64,
    pub keypoints: Vec<Keypoint>,
    pub num_keypoints: usize,
    pub bbox: BBox,
    pub area: f64,
    pub iscrowd: bool,
    pub extra: JsonMap,
}

impl PersonAnnotation {
    /// Builds an annotation with `num_keypoints` filled in.
    pub fn new(id: u64, image_id: u64, keypoints: Vec<Keypoint>, bbox: BBox, area: f64) -> Self {
        PersonAnnotation {
            id,
            image_id,
            category_id: 1,
            num_keypoints: count_labeled(&keypoints),
            keypoints,
            bbox,
            area,
            iscrowd: false,
            extra: JsonMap::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Category {
    pub id: u64,
    pub name: String,
    pub extra: JsonMap,
}

/// A parsed ground-truth file.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AnnotationSet {
    pub images: Vec<ImageRecord>,
    pub annotations: Vec<PersonAnnotation>,
    pub categories: Vec<Category>,
    pub extra: JsonMap,
}

impl AnnotationSet {
    pub fn image(&self, id: u64) -> Option<&ImageRecord> {
        self.images.iter().find(|im| im.id == id)
    }

    /// Persons grouped by image, each group sorted by annotation id.
    pub fn persons_by_image(&self) -> BTreeMap<u64, Vec<&PersonAnnotation>> {
        let mut out: BTreeMap<u64, Vec<&PersonAnnotation>> =
            self.images.iter().map(|im| (im.id, Vec::new())).collect();
        for a in &self.annotations {
            out.entry(a.image_id).or_default().push(a);
        }
        for group in out.values_mut() {
            group.sort_by_key(|a| a.id);
        }
        out
    }

    /// Ground truth turned into score-1 results, one per labeled, non-crowd
    /// person whose keypoint count matches `category`.
    pub fn to_results(&self, category: DetectionCategory) -> DetectionSet {
        let records = self
            .annotations
            .iter()
            .filter(|a| !a.iscrowd && a.num_keypoints > 0 && a.keypoints.len() == category.len())
            .map(|a| DetectionRecord {
                id: a.id,
                image_id: a.image_id,
                category_id: a.category_id,
                keypoints: a.keypoints.clone(),
                score: 1.0,
                bbox: Some(a.bbox),
                extra: JsonMap::new(),
            })
            .collect();
        DetectionSet::new(category, records)
    }
}

/// What a results file holds: one part's keypoints, or all 133.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DetectionCategory {
    Part(PartKind),
    WholeBody,
}

#[allow(clippy::len_without_is_empty)]
impl DetectionCategory {
    pub fn len(self) -> usize {
        match self {
            DetectionCategory::Part(k) => k.len(),
            DetectionCategory::WholeBody => NUM_KEYPOINTS,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            DetectionCategory::Part(k) => k.name(),
            DetectionCategory::WholeBody => "whole_body",
        }
    }

    /// Guess from a keypoint count. Hand records are ambiguous, so 21 maps to
    /// `None`.
    pub fn infer(num_keypoints: usize) -> Option<Self> {
        match num_keypoints {
            NUM_KEYPOINTS => Some(DetectionCategory::WholeBody),
            n if n == NUM_BODY => Some(DetectionCategory::Part(PartKind::Body)),
            n if n == PartKind::Foot.len() => Some(DetectionCategory::Part(PartKind::Foot)),
            n if n == PartKind::Face.len() => Some(DetectionCategory::Part(PartKind::Face)),
            _ => None,
        }
    }
}

impl FromStr for DetectionCategory {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "whole_body" | "wholebody" => Ok(DetectionCategory::WholeBody),
            other => PartKind::from_name(other)
                .map(DetectionCategory::Part)
                .ok_or_else(|| format!("unknown category `{other}`")),
        }
    }
}

impl std::fmt::Display for DetectionCategory {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionRecord {
    /// Taken from the file when present, otherwise the 1-based record position.
    pub id: u64,
    pub image_id: u64,
    pub category_id: u64,
    pub keypoints: Vec<Keypoint>,
    pub score: f64,
    pub bbox: Option<BBox>,
    pub extra: JsonMap,
}

impl DetectionRecord {
    /// The record's box, or the extent of its keypoints with positive
    /// confidence (all keypoints if none are confident).
    pub fn region(&self) -> BBox {
        if let Some(b) = self.bbox {
            return b;
        }
        let confident = BBox::enclosing(
            self.keypoints
                .iter()
                .filter(|k| k.is_labeled())
                .map(|k| (k.x, k.y)),
        );
        confident
            .or_else(|| BBox::enclosing(self.keypoints.iter().map(|k| (k.x, k.y))))
            .unwrap_or_default()
    }
}

/// Results of one category, sorted by image id then descending score, ties by id.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionSet {
    pub category: DetectionCategory,
    pub records: Vec<DetectionRecord>,
}

impl DetectionSet {
    pub fn new(category: DetectionCategory, mut records: Vec<DetectionRecord>) -> Self {
        records.sort_by(|a, b| {
            a.image_id
                .cmp(&b.image_id)
                .then(b.score.total_cmp(&a.score))
                .then(a.id.cmp(&b.id))
        });
        DetectionSet { category, records }
    }

    pub fn empty(category: DetectionCategory) -> Self {
        DetectionSet {
            category,
            records: Vec::new(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn by_image(&self) -> BTreeMap<u64, Vec<&DetectionRecord>> {
        let mut out: BTreeMap<u64, Vec<&DetectionRecord>> = BTreeMap::new();
        for r in &self.records {
            out.entry(r.image_id).or_default().push(r);
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct Violation {
    pub severity: Severity,
    /// Where in the file, e.g. `annotations[3]`.
    pub location: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Default, serde::Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn errors(&self) -> impl Iterator<Item = &Violation> {
        self.violations
            .iter()
            .filter(|v| v.severity == Severity::Error)
    }

    pub fn warnings(&self) -> impl Iterator<Item = &Violation> {
        self.violations
            .iter()
            .filter(|v| v.severity == Severity::Warning)
    }

    pub fn has_errors(&self) -> bool {
        self.errors().next().is_some()
    }
}

#[derive(Debug)]
enum Issue {
    Error { at: String, error: CocoError },
    Warning { at: String, message: String },
}

#[derive(Debug, Default)]
struct Issues(Vec<Issue>);

impl Issues {
    fn error(&mut self, at: impl Into<String>, error: CocoError) {
        self.0.push(Issue::Error {
            at: at.into(),
            error,
        });
    }

    fn warn(&mut self, at: impl Into<String>, message: String) {
        self.0.push(Issue::Warning {
            at: at.into(),
            message,
        });
    }

    fn first_error(self) -> Option<CocoError> {
        self.0.into_iter().find_map(|i| match i {
            Issue::Error { error, .. } => Some(error),
            Issue::Warning { .. } => None,
        })
    }

    fn into_report(self) -> ValidationReport {
        let violations = self
            .0
            .into_iter()
            .map(|i| match i {
                Issue::Error { at, error } => Violation {
                    severity: Severity::Error,
                    location: at,
                    message: error.to_string(),
                },
                Issue::Warning { at, message } => Violation {
                    severity: Severity::Warning,
                    location: at,
                    message,
                },
            })
            .collect();
        ValidationReport { violations }
    }
}

fn malformed(at: &str, what: impl std::fmt::Display) -> CocoError {
    CocoError::MalformedJson(format!("{at}: {what}"))
}

fn as_object<'a>(v: &'a Value, at: &str) -> Result<&'a JsonMap, CocoError> {
    v.as_object()
        .ok_or_else(|| malformed(at, "expected an object"))
}

fn as_integer(v: &Value) -> Option<i64> {
    v.as_i64().or_else(|| {
        v.as_f64()
            .filter(|f| f.fract() == 0.0 && f.abs() < 9.0e15)
            .map(|f| f as i64)
    })
}

fn take_id(obj: &mut JsonMap, key: &str, at: &str) -> Result<Option<u64>, CocoError> {
    match obj.remove(key) {
        None => Ok(None),
        Some(v) => as_integer(&v)
            .and_then(|i| u64::try_from(i).ok())
            .map(Some)
            .ok_or_else(|| malformed(at, format!("`{key}` must be a non-negative integer"))),
    }
}

fn require_id(obj: &mut JsonMap, key: &str, at: &str) -> Result<u64, CocoError> {
    take_id(obj, key, at)?.ok_or_else(|| malformed(at, format!("missing `{key}`")))
}

fn take_f64(obj: &mut JsonMap, key: &str, at: &str) -> Result<Option<f64>, CocoError> {
    match obj.remove(key) {
        None => Ok(None),
        Some(v) => v
            .as_f64()
            .map(Some)
            .ok_or_else(|| malformed(at, format!("`{key}` must be a number"))),
    }
}

fn take_numbers(obj: &mut JsonMap, key: &str, at: &str) -> Result<Option<Vec<f64>>, CocoError> {
    match obj.remove(key) {
        None => Ok(None),
        Some(Value::Array(items)) => items
            .iter()
            .map(|x| {
                x.as_f64()
                    .ok_or_else(|| malformed(at, format!("`{key}` must hold only numbers")))
            })
            .collect::<Result<Vec<_>, _>>()
            .map(Some),
        Some(_) => Err(malformed(at, format!("`{key}` must be an array"))),
    }
}

fn take_bbox(obj: &mut JsonMap, at: &str) -> Result<Option<BBox>, CocoError> {
    match take_numbers(obj, "bbox", at)? {
        None => Ok(None),
        Some(v) if v.len() == 4 => {
            let arr = [v[0], v[1], v[2], v[3]];
            if arr[2] < 0.0 || arr[3] < 0.0 {
                Err(CocoError::BadBox(arr))
            } else {
                Ok(Some(BBox::from(arr)))
            }
        }
        Some(_) => Err(malformed(at, "`bbox` must have 4 numbers")),
    }
}

fn take_array(root: &mut JsonMap, key: &str) -> Result<Vec<Value>, CocoError> {
    match root.remove(key) {
        None => Ok(Vec::new()),
        Some(Value::Array(items)) => Ok(items),
        Some(_) => Err(malformed(key, "expected an array")),
    }
}

fn parse_image(v: &Value, at: &str) -> Result<ImageRecord, CocoError> {
    let mut obj = as_object(v, at)?.clone();
    let id = require_id(&mut obj, "id", at)?;
    let mut dim = |key: &str| -> Result<i64, CocoError> {
        obj.remove(key)
            .as_ref()
            .and_then(as_integer)
            .ok_or_else(|| malformed(at, format!("`{key}` must be an integer")))
    };
    let width = dim("width")?;
    let height = dim("height")?;
    if width <= 0 || height <= 0 || width > u32::MAX as i64 || height > u32::MAX as i64 {
        return Err(CocoError::BadImageSize { id, width, height });
    }
    let file_name = match obj.remove("file_name") {
        None => String::new(),
        Some(Value::String(s)) => s,
        Some(_) => return Err(malformed(at, "`file_name` must be a string")),
    };
    Ok(ImageRecord {
        id,
        width: width as u32,
        height: height as u32,
        file_name,
        extra: obj,
    })
}

fn parse_category(v: &Value, at: &str) -> Result<Category, CocoError> {
    let mut obj = as_object(v, at)?.clone();
    let id = require_id(&mut obj, "id", at)?;
    let name = match obj.remove("name") {
        None => String::new(),
        Some(Value::String(s)) => s,
        Some(_) => return Err(malformed(at, "`name` must be a string")),
    };
    Ok(Category {
        id,
        name,
        extra: obj,
    })
}

fn check_length(flat: &[f64], allowed: &[usize]) -> Result<(), CocoError> {
    let expected: Vec<usize> = allowed.iter().map(|k| 3 * k).collect();
    if expected.contains(&flat.len()) {
        Ok(())
    } else {
        Err(CocoError::WrongKeypointCount {
            got: flat.len(),
            expected,
        })
    }
}

fn parse_person(v: &Value, at: &str) -> Result<PersonAnnotation, CocoError> {
    let mut obj = as_object(v, at)?.clone();
    let id = require_id(&mut obj, "id", at)?;
    let image_id = require_id(&mut obj, "image_id", at)?;
    let category_id = take_id(&mut obj, "category_id", at)?.unwrap_or(1);
    let flat = take_numbers(&mut obj, "keypoints", at)?
        .ok_or_else(|| malformed(at, "missing `keypoints`"))?;
    check_length(&flat, &[NUM_BODY, NUM_KEYPOINTS])?;
    let keypoints = keypoints_from_flat(&flat);
    if let Some(k) = keypoints
        .iter()
        .find(|k| !matches!(k.v, v if v == 0.0 || v == 1.0 || v == 2.0))
    {
        return Err(CocoError::BadVisibility(k.v));
    }
    let counted = count_labeled(&keypoints);
    if let Some(stored) = take_id(&mut obj, "num_keypoints", at)? {
        if stored != counted as u64 {
            return Err(CocoError::NumKeypointsMismatch { stored, counted });
        }
    }
    let bbox = match take_bbox(&mut obj, at)? {
        Some(b) => b,
        None => BBox::enclosing(
            keypoints
                .iter()
                .filter(|k| k.is_labeled())
                .map(|k| (k.x, k.y)),
        )
        .unwrap_or_default(),
    };
    let area = take_f64(&mut obj, "area", at)?.unwrap_or_else(|| bbox.area());
    if counted > 0 && (area.is_nan() || area <= 0.0) {
        return Err(CocoError::BadArea(area));
    }
    let iscrowd = match obj.remove("iscrowd") {
        None => false,
        Some(Value::Bool(b)) => b,
        Some(v) => match as_integer(&v) {
            Some(0) => false,
            Some(1) => true,
            _ => return Err(malformed(at, "`iscrowd` must be 0, 1 or a boolean")),
        },
    };
    Ok(PersonAnnotation {
        id,
        image_id,
        category_id,
        keypoints,
        num_keypoints: counted,
        bbox,
        area,
        iscrowd,
        extra: obj,
    })
}

fn scan_ground_truth(root: Value, issues: &mut Issues) -> Option<AnnotationSet> {
    let mut root = match root {
        Value::Object(m) => m,
        _ => {
            issues.error("$", malformed("$", "expected an object"));
            return None;
        }
    };
    let mut arrays = Vec::new();
    for key in ["images", "annotations", "categories"] {
        match take_array(&mut root, key) {
            Ok(a) => arrays.push(a),
            Err(e) => {
                issues.error(key, e);
                arrays.push(Vec::new());
            }
        }
    }
    let categories_raw = arrays.pop().unwrap_or_default();
    let annotations_raw = arrays.pop().unwrap_or_default();
    let images_raw = arrays.pop().unwrap_or_default();

    let mut set = AnnotationSet {
        extra: root,
        ..Default::default()
    };
    let mut image_ids = HashSet::new();
    for (i, v) in images_raw.iter().enumerate() {
        let at = format!("images[{i}]");
        match parse_image(v, &at) {
            Ok(im) if !image_ids.insert(im.id) => {
                issues.error(at, CocoError::DuplicateImageId(im.id))
            }
            Ok(im) => set.images.push(im),
            Err(e) => {
                // Keep the id reachable so persons on it are not reported twice.
                if let Some(id) = v.get("id").and_then(as_integer) {
                    image_ids.insert(id as u64);
                }
                issues.error(at, e)
            }
        }
    }
    for (i, v) in categories_raw.iter().enumerate() {
        let at = format!("categories[{i}]");
        match parse_category(v, &at) {
            Ok(c) => set.categories.push(c),
            Err(e) => issues.error(at, e),
        }
    }
    let frames: BTreeMap<u64, (f64, f64)> = set
        .images
        .iter()
        .map(|im| (im.id, (im.width as f64, im.height as f64)))
        .collect();
    let mut ann_ids = HashSet::new();
    for (i, v) in annotations_raw.iter().enumerate() {
        let at = format!("annotations[{i}]");
        let person = match parse_person(v, &at) {
            Ok(p) => p,
            Err(e) => {
                issues.error(at, e);
                continue;
            }
        };
        if !ann_ids.insert(person.id) {
            issues.error(at, CocoError::DuplicateAnnotationId(person.id));
            continue;
        }
        if !image_ids.contains(&person.image_id) {
            issues.error(at, CocoError::DanglingImageRef(person.image_id));
            continue;
        }
        if let Some(&(w, h)) = frames.get(&person.image_id) {
            let outside = person
                .keypoints
                .iter()
                .filter(|k| k.is_labeled() && (k.x < 0.0 || k.y < 0.0 || k.x > w || k.y > h))
                .count();
            if outside > 0 {
                issues.warn(
                    at,
                    format!("{outside} labeled keypoints lie outside the {w}x{h} image frame"),
                );
            }
        }
        set.annotations.push(person);
    }
    Some(set)
}

fn read_json(bytes: &[u8]) -> Result<Value, CocoError> {
    serde_json::from_slice(bytes).map_err(|e| CocoError::MalformedJson(e.to_string()))
}

/// Parses a ground-truth file, failing on the first invariant violation.
/// Out-of-frame keypoints are tolerated.
pub fn parse_ground_truth(bytes: &[u8]) -> Result<AnnotationSet, CocoError> {
    let root = read_json(bytes)?;
    let mut issues = Issues::default();
    let set = scan_ground_truth(root, &mut issues);
    match issues.first_error() {
        Some(e) => Err(e),
        None => Ok(set.expect("a set is produced whenever there are no errors")),
    }
}

fn parse_detection(
    v: &Value,
    at: &str,
    position: usize,
    category: DetectionCategory,
) -> Result<DetectionRecord, CocoError> {
    let mut obj = as_object(v, at)?.clone();
    let id = take_id(&mut obj, "id", at)?.unwrap_or(position as u64 + 1);
    let image_id = require_id(&mut obj, "image_id", at)?;
    let category_id = take_id(&mut obj, "category_id", at)?.unwrap_or(1);
    let flat = take_numbers(&mut obj, "keypoints", at)?
        .ok_or_else(|| malformed(at, "missing `keypoints`"))?;
    check_length(&flat, &[category.len()])?;
    let score = take_f64(&mut obj, "score", at)?.ok_or_else(|| malformed(at, "missing `score`"))?;
    if !(score.is_finite() && (0.0..=1.0).contains(&score)) {
        return Err(CocoError::BadScore(score));
    }
    let bbox = take_bbox(&mut obj, at)?;
    Ok(DetectionRecord {
        id,
        image_id,
        category_id,
        keypoints: keypoints_from_flat(&flat),
        score,
        bbox,
        extra: obj,
    })
}

fn scan_detections(
    root: Value,
    category: DetectionCategory,
    issues: &mut Issues,
) -> Option<DetectionSet> {
    let items = match root {
        Value::Array(items) => items,
        _ => {
            issues.error("$", malformed("$", "expected an array of results"));
            return None;
        }
    };
    let mut records = Vec::with_capacity(items.len());
    let mut ids = HashSet::new();
    for (i, v) in items.iter().enumerate() {
        let at = format!("[{i}]");
        match parse_detection(v, &at, i, category) {
            Ok(r) if !ids.insert(r.id) => issues.error(at, CocoError::DuplicateAnnotationId(r.id)),
            Ok(r) => records.push(r),
            Err(e) => issues.error(at, e),
        }
    }
    Some(DetectionSet::new(category, records))
}

/// Parses a results file whose records all belong to `category`.
pub fn parse_detections(
    bytes: &[u8],
    category: DetectionCategory,
) -> Result<DetectionSet, CocoError> {
    let root = read_json(bytes)?;
    let mut issues = Issues::default();
    let set = scan_detections(root, category, &mut issues);
    match issues.first_error() {
        Some(e) => Err(e),
        None => Ok(set.expect("a set is produced whenever there are no errors")),
    }
}

/// Emits integral values as JSON integers so files stay COCO-looking.
fn number(x: f64) -> Value {
    if x.fract() == 0.0 && x.abs() < 9.0e15 {
        Value::from(x as i64)
    } else {
        Value::from(x)
    }
}

fn numbers(xs: impl IntoIterator<Item = f64>) -> Value {
    Value::Array(xs.into_iter().map(number).collect())
}

fn bbox_value(b: &BBox) -> Value {
    numbers([b.x, b.y, b.w, b.h])
}

fn image_value(im: &ImageRecord) -> Value {
    let mut obj = im.extra.clone();
    obj.insert("id".into(), im.id.into());
    obj.insert("width".into(), im.width.into());
    obj.insert("height".into(), im.height.into());
    obj.insert("file_name".into(), im.file_name.clone().into());
    Value::Object(obj)
}

fn person_value(p: &PersonAnnotation) -> Value {
    let mut obj = p.extra.clone();
    obj.insert("id".into(), p.id.into());
    obj.insert("image_id".into(), p.image_id.into());
    obj.insert("category_id".into(), p.category_id.into());
    obj.insert("keypoints".into(), numbers(flatten_keypoints(&p.keypoints)));
    obj.insert("num_keypoints".into(), count_labeled(&p.keypoints).into());
    obj.insert("bbox".into(), bbox_value(&p.bbox));
    obj.insert("area".into(), number(p.area));
    obj.insert("iscrowd".into(), u8::from(p.iscrowd).into());
    Value::Object(obj)
}

fn category_value(c: &Category) -> Value {
    let mut obj = c.extra.clone();
    obj.insert("id".into(), c.id.into());
    obj.insert("name".into(), c.name.clone().into());
    Value::Object(obj)
}

/// Serializes a ground-truth set. `num_keypoints` is recomputed from the
/// visibility flags.
pub fn write_annotations(set: &AnnotationSet) -> Vec<u8> {
    let mut root = set.extra.clone();
    root.insert(
        "images".into(),
        Value::Array(set.images.iter().map(image_value).collect()),
    );
    root.insert(
        "annotations".into(),
        Value::Array(set.annotations.iter().map(person_value).collect()),
    );
    root.insert(
        "categories".into(),
        Value::Array(set.categories.iter().map(category_value).collect()),
    );
    serde_json::to_vec(&Value::Object(root)).expect("JSON values always serialize")
}

pub fn detection_value(r: &DetectionRecord) -> Value {
    let mut obj = r.extra.clone();
    obj.insert("id".into(), r.id.into());
    obj.insert("image_id".into(), r.image_id.into());
    obj.insert("category_id".into(), r.category_id.into());
    obj.insert("keypoints".into(), numbers(flatten_keypoints(&r.keypoints)));
    obj.insert("score".into(), number(r.score));
    if let Some(b) = &r.bbox {
        obj.insert("bbox".into(), bbox_value(b));
    }
    Value::Object(obj)
}

pub fn write_detections(set: &DetectionSet) -> Vec<u8> {
    let items = set.records.iter().map(detection_value).collect();
    serde_json::to_vec(&Value::Array(items)).expect("JSON values always serialize")
}

/// Checks a ground-truth or results file without stopping at the first
/// problem. Results files are recognised by a top-level array; their
/// category is inferred from the first record's keypoint count.
pub fn validate_bytes(bytes: &[u8]) -> ValidationReport {
    let mut issues = Issues::default();
    match read_json(bytes) {
        Err(e) => issues.error("$", e),
        Ok(root @ Value::Object(_)) => {
            scan_ground_truth(root, &mut issues);
        }
        Ok(root @ Value::Array(_)) => {
            let first_len = root
                .get(0)
                .and_then(|r| r.get("keypoints"))
                .and_then(Value::as_array)
                .map(|a| a.len() / 3);
            let category = match first_len {
                Some(n) if n == PartKind::LeftHand.len() => {
                    DetectionCategory::Part(PartKind::LeftHand)
                }
                Some(n) => DetectionCategory::infer(n).unwrap_or(DetectionCategory::WholeBody),
                None => DetectionCategory::WholeBody,
            };
            scan_detections(root, category, &mut issues);
        }
        Ok(_) => issues.error("$", malformed("$", "expected an object or an array")),
    }
    issues.into_report()
}

pub fn validate(path: impl AsRef<Path>) -> std::io::Result<ValidationReport> {
    let bytes = std::fs::read(path)?;
    Ok(validate_bytes(&bytes))
}
