//! Optional JSON configuration shared by all subcommands. Every section and
//! field may be omitted; command-line flags override file values.
//!
//! ```json
//! {
//!   "proposal": {"face": {"expansion": 1.6, "min_side": 20},
//!                "hand": {"alpha": 0.15, "gamma": 1.2, "min_side": 20},
//!                "foot": {"shank_factor": 0.6, "min_side": 20}},
//!   "merge": {"iou_threshold": 0.3, "min_keypoint_confidence": 0.05},
//!   "nms": {"lambda": 1.0, "sigma_soft": 0.1, "eta": 1.2, "score_floor": 0.05},
//!   "eval": {"max_dets": 20},
//!   "sigmas": {"foot": 0.035, "face": 0.012, "hand": 0.018},
//!   "render": {"stroke_width": 2, "colors": {"face": "#d62728"}}
//! }
//! ```

use std::path::Path;

use serde::Deserialize;
use wholebody::eval::EvalParams;
use wholebody::proposal::ProposalParams;
use wholebody::render::RenderStyle;
use wholebody::schema::SigmaConfig;
use wholebody::NmsParams;

use crate::failure::{read_file, CliResult, Failure};

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MergeSection {
    pub iou_threshold: f64,
    pub min_keypoint_confidence: f64,
}

impl Default for MergeSection {
    fn default() -> Self {
        let d = wholebody::MergeParams::default();
        MergeSection {
            iou_threshold: d.iou_threshold,
            min_keypoint_confidence: d.min_keypoint_confidence,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub proposal: ProposalParams,
    pub merge: MergeSection,
    pub nms: NmsParams,
    pub eval: EvalParams,
    pub sigmas: SigmaConfig,
    pub render: RenderStyle,
}

impl Config {
    pub fn load(path: Option<&Path>) -> CliResult<Config> {
        let Some(path) = path else {
            return Ok(Config::default());
        };
        let bytes = read_file(path)?;
        serde_json::from_slice(&bytes)
            .map_err(|e| Failure::usage(format!("bad config file: {e}")).at(path))
    }
}
