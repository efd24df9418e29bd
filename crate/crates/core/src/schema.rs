//! The 133-keypoint whole-body layout.
//!
//! Keypoints are stored in one flat list, part after part:
//!
//! | part        | range       | count | convention                                  |
//! |-------------|-------------|-------|---------------------------------------------|
//! | body        | `[0, 17)`   | 17    | COCO person keypoints                       |
//! | foot        | `[17, 23)`  | 6     | big toe, small toe, heel; left then right   |
//! | face        | `[23, 91)`  | 68    | 68-point landmark layout (jaw, brows, ...)  |
//! | left hand   | `[91, 112)` | 21    | wrist, then four joints per finger          |
//! | right hand  | `[112,133)` | 21    | same as the left hand                       |
//!
//! Intra-face and intra-hand order follows the landmark conventions of the
//! upstream part detectors; left hand precedes right hand.
//!
//! The skeleton has [`SKELETON_EDGE_COUNT`] edges: 19 body, 6 ankle-to-foot,
//! 63 face contour, 2 body-wrist-to-hand-wrist and 20 per hand.

use std::ops::Range;

use serde::{Deserialize, Serialize};

pub const NUM_KEYPOINTS: usize = 133;
pub const NUM_BODY: usize = 17;
pub const NUM_FOOT: usize = 6;
pub const NUM_FACE: usize = 68;
pub const NUM_HAND: usize = 21;

/// Number of edges returned by [`skeleton`].
pub const SKELETON_EDGE_COUNT: usize = 130;

pub const NOSE: usize = 0;
pub const LEFT_EYE: usize = 1;
pub const RIGHT_EYE: usize = 2;
pub const LEFT_EAR: usize = 3;
pub const RIGHT_EAR: usize = 4;
pub const LEFT_ELBOW: usize = 7;
pub const RIGHT_ELBOW: usize = 8;
pub const LEFT_WRIST: usize = 9;
pub const RIGHT_WRIST: usize = 10;
pub const LEFT_KNEE: usize = 13;
pub const RIGHT_KNEE: usize = 14;
pub const LEFT_ANKLE: usize = 15;
pub const RIGHT_ANKLE: usize = 16;
pub const LEFT_BIG_TOE: usize = 17;
pub const LEFT_SMALL_TOE: usize = 18;
pub const LEFT_HEEL: usize = 19;
pub const RIGHT_BIG_TOE: usize = 20;
pub const RIGHT_SMALL_TOE: usize = 21;
pub const RIGHT_HEEL: usize = 22;

/// Standard COCO falloff constants for the 17 body keypoints.
pub const COCO_BODY_SIGMAS: [f64; NUM_BODY] = [
    0.026, 0.025, 0.025, 0.035, 0.035, 0.079, 0.079, 0.072, 0.072, 0.062, 0.062, 0.107, 0.107,
    0.087, 0.087, 0.089, 0.089,
];

pub const DEFAULT_FOOT_SIGMA: f64 = 0.035;
pub const DEFAULT_FACE_SIGMA: f64 = 0.012;
pub const DEFAULT_HAND_SIGMA: f64 = 0.018;

const BODY_NAMES: [&str; NUM_BODY] = [
    "nose",
    "left_eye",
    "right_eye",
    "left_ear",
    "right_ear",
    "left_shoulder",
    "right_shoulder",
    "left_elbow",
    "right_elbow",
    "left_wrist",
    "right_wrist",
    "left_hip",
    "right_hip",
    "left_knee",
    "right_knee",
    "left_ankle",
    "right_ankle",
];

const FOOT_NAMES: [&str; NUM_FOOT] = [
    "left_big_toe",
    "left_small_toe",
    "left_heel",
    "right_big_toe",
    "right_small_toe",
    "right_heel",
];

const HAND_NAMES: [&str; NUM_HAND] = [
    "wrist",
    "thumb1",
    "thumb2",
    "thumb3",
    "thumb4",
    "forefinger1",
    "forefinger2",
    "forefinger3",
    "forefinger4",
    "middle_finger1",
    "middle_finger2",
    "middle_finger3",
    "middle_finger4",
    "ring_finger1",
    "ring_finger2",
    "ring_finger3",
    "ring_finger4",
    "pinky_finger1",
    "pinky_finger2",
    "pinky_finger3",
    "pinky_finger4",
];

// 0-based version of the COCO person skeleton.
const BODY_EDGES: [(usize, usize); 19] = [
    (15, 13),
    (13, 11),
    (16, 14),
    (14, 12),
    (11, 12),
    (5, 11),
    (6, 12),
    (5, 6),
    (5, 7),
    (6, 8),
    (7, 9),
    (8, 10),
    (1, 2),
    (0, 1),
    (0, 2),
    (1, 3),
    (2, 4),
    (3, 5),
    (4, 6),
];

/// One of the five keypoint groups of the whole-body layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartKind {
    Body,
    Foot,
    Face,
    LeftHand,
    RightHand,
}

#[allow(clippy::len_without_is_empty)]
impl PartKind {
    pub const ALL: [PartKind; 5] = [
        PartKind::Body,
        PartKind::Foot,
        PartKind::Face,
        PartKind::LeftHand,
        PartKind::RightHand,
    ];

    pub fn len(self) -> usize {
        match self {
            PartKind::Body => NUM_BODY,
            PartKind::Foot => NUM_FOOT,
            PartKind::Face => NUM_FACE,
            PartKind::LeftHand | PartKind::RightHand => NUM_HAND,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            PartKind::Body => "body",
            PartKind::Foot => "foot",
            PartKind::Face => "face",
            PartKind::LeftHand => "left_hand",
            PartKind::RightHand => "right_hand",
        }
    }

    pub fn from_name(name: &str) -> Option<PartKind> {
        PartKind::ALL.into_iter().find(|k| k.name() == name)
    }

    /// The part owning keypoint `index`, if `index < 133`.
    pub fn of_index(index: usize) -> Option<PartKind> {
        PartKind::ALL
            .into_iter()
            .find(|k| part_range(*k).contains(&index))
    }
}

impl std::fmt::Display for PartKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Half-open index range occupied by `kind` in the 133-keypoint list.
pub fn part_range(kind: PartKind) -> Range<usize> {
    let start = match kind {
        PartKind::Body => 0,
        PartKind::Foot => NUM_BODY,
        PartKind::Face => NUM_BODY + NUM_FOOT,
        PartKind::LeftHand => NUM_BODY + NUM_FOOT + NUM_FACE,
        PartKind::RightHand => NUM_BODY + NUM_FOOT + NUM_FACE + NUM_HAND,
    };
    start..start + kind.len()
}

pub fn total_keypoints() -> usize {
    NUM_KEYPOINTS
}

/// An undirected connection between two keypoint indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SkeletonEdge {
    pub a: usize,
    pub b: usize,
}

impl SkeletonEdge {
    const fn new(a: usize, b: usize) -> Self {
        SkeletonEdge { a, b }
    }
}

fn face_edges(base: usize, out: &mut Vec<SkeletonEdge>) {
    let mut chain = |start: usize, end: usize, closed: bool| {
        for i in start..end {
            out.push(SkeletonEdge::new(base + i, base + i + 1));
        }
        if closed {
            out.push(SkeletonEdge::new(base + end, base + start));
        }
    };
    chain(0, 16, false); // jaw
    chain(17, 21, false); // right brow
    chain(22, 26, false); // left brow
    chain(27, 30, false); // nose bridge
    chain(31, 35, false); // nostrils
    chain(36, 41, true); // right eye
    chain(42, 47, true); // left eye
    chain(48, 59, true); // outer lip
    chain(60, 67, true); // inner lip
}

fn hand_edges(base: usize, out: &mut Vec<SkeletonEdge>) {
    for finger in 0..5 {
        let first = base + 1 + finger * 4;
        out.push(SkeletonEdge::new(base, first));
        for j in 0..3 {
            out.push(SkeletonEdge::new(first + j, first + j + 1));
        }
    }
}

/// The fixed whole-body skeleton.
pub fn skeleton() -> Vec<SkeletonEdge> {
    let mut edges = Vec::with_capacity(SKELETON_EDGE_COUNT);
    edges.extend(BODY_EDGES.iter().map(|&(a, b)| SkeletonEdge::new(a, b)));
    for (ankle, toes) in [
        (LEFT_ANKLE, [LEFT_BIG_TOE, LEFT_SMALL_TOE, LEFT_HEEL]),
        (RIGHT_ANKLE, [RIGHT_BIG_TOE, RIGHT_SMALL_TOE, RIGHT_HEEL]),
    ] {
        edges.extend(toes.iter().map(|&t| SkeletonEdge::new(ankle, t)));
    }
    face_edges(part_range(PartKind::Face).start, &mut edges);
    let left = part_range(PartKind::LeftHand).start;
    let right = part_range(PartKind::RightHand).start;
    edges.push(SkeletonEdge::new(LEFT_WRIST, left));
    hand_edges(left, &mut edges);
    edges.push(SkeletonEdge::new(RIGHT_WRIST, right));
    hand_edges(right, &mut edges);
    debug_assert_eq!(edges.len(), SKELETON_EDGE_COUNT);
    edges
}

/// Human-readable name of every keypoint, in layout order.
pub fn keypoint_names() -> Vec<String> {
    let mut names = Vec::with_capacity(NUM_KEYPOINTS);
    names.extend(BODY_NAMES.iter().map(|s| s.to_string()));
    names.extend(FOOT_NAMES.iter().map(|s| s.to_string()));
    names.extend((0..NUM_FACE).map(|i| format!("face_{i}")));
    for side in ["left_hand", "right_hand"] {
        names.extend(HAND_NAMES.iter().map(|n| format!("{side}_{n}")));
    }
    names
}

#[derive(Debug, thiserror::Error)]
pub enum SigmaError {
    #[error("malformed sigma config: {0}")]
    Malformed(String),
    #[error("{part} sigma table has {got} entries, expected {expected}")]
    WrongLength {
        part: PartKind,
        got: usize,
        expected: usize,
    },
    #[error("sigma {value} for {part} is not a positive finite number")]
    NotPositive { part: PartKind, value: f64 },
}

/// Either one constant for the whole part or one value per keypoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PartSigmas {
    Uniform(f64),
    PerKeypoint(Vec<f64>),
}

/// Sigma overrides for the non-body parts. Body constants are always COCO's.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SigmaConfig {
    #[serde(default = "default_foot")]
    pub foot: PartSigmas,
    #[serde(default = "default_face")]
    pub face: PartSigmas,
    #[serde(default = "default_hand")]
    pub hand: PartSigmas,
}

fn default_foot() -> PartSigmas {
    PartSigmas::Uniform(DEFAULT_FOOT_SIGMA)
}
fn default_face() -> PartSigmas {
    PartSigmas::Uniform(DEFAULT_FACE_SIGMA)
}
fn default_hand() -> PartSigmas {
    PartSigmas::Uniform(DEFAULT_HAND_SIGMA)
}

impl Default for SigmaConfig {
    fn default() -> Self {
        SigmaConfig {
            foot: default_foot(),
            face: default_face(),
            hand: default_hand(),
        }
    }
}

/// Per-keypoint OKS falloff constants for all 133 keypoints.
#[derive(Debug, Clone, PartialEq)]
pub struct SigmaTable {
    sigmas: Vec<f64>,
}

impl Default for SigmaTable {
    fn default() -> Self {
        SigmaTable::from_config(&SigmaConfig::default()).expect("default sigmas are valid")
    }
}

impl SigmaTable {
    pub fn from_config(config: &SigmaConfig) -> Result<Self, SigmaError> {
        let mut sigmas = COCO_BODY_SIGMAS.to_vec();
        for (kind, given) in [
            (PartKind::Foot, &config.foot),
            (PartKind::Face, &config.face),
            (PartKind::LeftHand, &config.hand),
            (PartKind::RightHand, &config.hand),
        ] {
            let values = match given {
                PartSigmas::Uniform(v) => vec![*v; kind.len()],
                PartSigmas::PerKeypoint(v) if v.len() == kind.len() => v.clone(),
                PartSigmas::PerKeypoint(v) => {
                    return Err(SigmaError::WrongLength {
                        part: kind,
                        got: v.len(),
                        expected: kind.len(),
                    })
                }
            };
            if let Some(&bad) = values.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
                return Err(SigmaError::NotPositive {
                    part: kind,
                    value: bad,
                });
            }
            sigmas.extend(values);
        }
        Ok(SigmaTable { sigmas })
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self, SigmaError> {
        let config: SigmaConfig =
            serde_json::from_slice(bytes).map_err(|e| SigmaError::Malformed(e.to_string()))?;
        SigmaTable::from_config(&config)
    }

    /// Falloff constant for keypoint `index`; `None` past the end of the layout.
    pub fn get(&self, index: usize) -> Option<f64> {
        self.sigmas.get(index).copied()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.sigmas
    }

    pub fn part(&self, kind: PartKind) -> &[f64] {
        &self.sigmas[part_range(kind)]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartEntry {
    pub name: String,
    pub start: usize,
    pub end: usize,
}

/// Self-describing JSON form of the layout, skeleton and sigma table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemaSidecar {
    pub num_keypoints: usize,
    pub parts: Vec<PartEntry>,
    pub keypoints: Vec<String>,
    pub skeleton: Vec<[usize; 2]>,
    pub sigmas: Vec<f64>,
}

impl SchemaSidecar {
    pub fn new(sigmas: &SigmaTable) -> Self {
        SchemaSidecar {
            num_keypoints: NUM_KEYPOINTS,
            parts: PartKind::ALL
                .iter()
                .map(|&k| {
                    let r = part_range(k);
                    PartEntry {
                        name: k.name().to_string(),
                        start: r.start,
                        end: r.end,
                    }
                })
                .collect(),
            keypoints: keypoint_names(),
            skeleton: skeleton().iter().map(|e| [e.a, e.b]).collect(),
            sigmas: sigmas.as_slice().to_vec(),
        }
    }
}
