//! Gaussian heatmap codec for 256x192 inputs and 64x48 output maps.
//!
//! A labeled keypoint at input pixel `(x, y)` becomes an unnormalized Gaussian
//! of unit height centred at `(x / 4, y / 4)` on its plane. Decoding takes the
//! plane argmax, nudges it a quarter pixel towards the larger horizontal and
//! vertical neighbour, and scales back by the stride.
//!
//! Binary dump layout (little endian):
//!
//! ```text
//! magic   b"WBHM"
//! version u32 = 1
//! planes  u32
//! height  u32
//! width   u32
//! data    planes * height * width f32, plane-major then row-major
//! ```

use std::io::{self, Read, Write};

use crate::coco_io::Keypoint;
use crate::merge::FullBodyPose;

pub const INPUT_HEIGHT: usize = 256;
pub const INPUT_WIDTH: usize = 192;
pub const HEATMAP_HEIGHT: usize = 64;
pub const HEATMAP_WIDTH: usize = 48;
pub const STRIDE: f64 = 4.0;
pub const DEFAULT_SIGMA: f64 = 2.0;

const MAGIC: &[u8; 4] = b"WBHM";
const VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum HeatmapError {
    #[error("keypoint {index} at ({x}, {y}) lies outside the {INPUT_WIDTH}x{INPUT_HEIGHT} input")]
    OutOfBounds { index: usize, x: f64, y: f64 },
    #[error("bad heatmap dump: {0}")]
    BadDump(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// One `height x width` plane per keypoint.
#[derive(Debug, Clone, PartialEq)]
pub struct HeatmapStack {
    planes: usize,
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl HeatmapStack {
    pub fn zeros(planes: usize) -> Self {
        HeatmapStack {
            planes,
            height: HEATMAP_HEIGHT,
            width: HEATMAP_WIDTH,
            data: vec![0.0; planes * HEATMAP_HEIGHT * HEATMAP_WIDTH],
        }
    }

    pub fn planes(&self) -> usize {
        self.planes
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn plane(&self, k: usize) -> &[f32] {
        let n = self.height * self.width;
        &self.data[k * n..(k + 1) * n]
    }

    pub fn plane_mut(&mut self, k: usize) -> &mut [f32] {
        let n = self.height * self.width;
        &mut self.data[k * n..(k + 1) * n]
    }

    pub fn get(&self, k: usize, row: usize, col: usize) -> f32 {
        self.plane(k)[row * self.width + col]
    }

    pub fn write_to(&self, mut w: impl Write) -> io::Result<()> {
        w.write_all(MAGIC)?;
        for v in [
            VERSION,
            self.planes as u32,
            self.height as u32,
            self.width as u32,
        ] {
            w.write_all(&v.to_le_bytes())?;
        }
        for v in &self.data {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self, HeatmapError> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(HeatmapError::BadDump("wrong magic".into()));
        }
        let mut header = [0u32; 4];
        for h in &mut header {
            let mut b = [0u8; 4];
            r.read_exact(&mut b)?;
            *h = u32::from_le_bytes(b);
        }
        let [version, planes, height, width] = header.map(|v| v as usize);
        if version != VERSION as usize {
            return Err(HeatmapError::BadDump(format!(
                "unsupported version {version}"
            )));
        }
        let n = planes
            .checked_mul(height)
            .and_then(|v| v.checked_mul(width))
            .ok_or_else(|| HeatmapError::BadDump("dimensions overflow".into()))?;
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        if bytes.len() != n * 4 {
            return Err(HeatmapError::BadDump(format!(
                "expected {} data bytes, found {}",
                n * 4,
                bytes.len()
            )));
        }
        let data = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Ok(HeatmapStack {
            planes,
            height,
            width,
            data,
        })
    }
}

fn in_frame(k: &Keypoint) -> bool {
    (0.0..INPUT_WIDTH as f64).contains(&k.x) && (0.0..INPUT_HEIGHT as f64).contains(&k.y)
}

/// Encodes every labeled keypoint of `pose` (input-pixel coordinates) as a
/// Gaussian of standard deviation `sigma` heatmap pixels.
pub fn encode(pose: &FullBodyPose, sigma: f64) -> Result<HeatmapStack, HeatmapError> {
    let mut stack = HeatmapStack::zeros(pose.keypoints.len());
    let inv = 1.0 / (2.0 * sigma * sigma);
    for (k, kp) in pose.keypoints.iter().enumerate() {
        if !kp.is_labeled() {
            continue;
        }
        if !in_frame(kp) {
            return Err(HeatmapError::OutOfBounds {
                index: k,
                x: kp.x,
                y: kp.y,
            });
        }
        let (cx, cy) = (kp.x / STRIDE, kp.y / STRIDE);
        let width = stack.width;
        for (i, cell) in stack.plane_mut(k).iter_mut().enumerate() {
            let (row, col) = ((i / width) as f64, (i % width) as f64);
            let d2 = (col - cx).powi(2) + (row - cy).powi(2);
            *cell = (-d2 * inv).exp() as f32;
        }
    }
    Ok(stack)
}

fn quarter_offset(lower: Option<f32>, upper: Option<f32>) -> f64 {
    match (lower, upper) {
        (Some(l), Some(u)) if u > l => 0.25,
        (Some(l), Some(u)) if l > u => -0.25,
        _ => 0.0,
    }
}

/// Decodes each plane to its refined argmax in input-pixel coordinates. The
/// third value of each keypoint is the plane's peak; all-zero planes give
/// `(0, 0, 0)`. The pose score is the mean peak over non-empty planes.
pub fn decode(stack: &HeatmapStack) -> FullBodyPose {
    let (h, w) = (stack.height, stack.width);
    let mut keypoints = Vec::with_capacity(stack.planes);
    let mut peaks = Vec::new();
    for k in 0..stack.planes {
        let plane = stack.plane(k);
        let (best, peak) = plane
            .iter()
            .enumerate()
            .fold(
                (0, f32::NEG_INFINITY),
                |acc, (i, &v)| {
                    if v > acc.1 {
                        (i, v)
                    } else {
                        acc
                    }
                },
            );
        if peak.is_nan() || peak <= 0.0 {
            keypoints.push(Keypoint::UNLABELED);
            continue;
        }
        let (row, col) = (best / w, best % w);
        let at = |r: usize, c: usize| plane[r * w + c];
        let dx = quarter_offset(
            col.checked_sub(1).map(|c| at(row, c)),
            (col + 1 < w).then(|| at(row, col + 1)),
        );
        let dy = quarter_offset(
            row.checked_sub(1).map(|r| at(r, col)),
            (row + 1 < h).then(|| at(row + 1, col)),
        );
        keypoints.push(Keypoint::new(
            (col as f64 + dx) * STRIDE,
            (row as f64 + dy) * STRIDE,
            peak as f64,
        ));
        peaks.push(peak as f64);
    }
    let score = if peaks.is_empty() {
        0.0
    } else {
        peaks.iter().sum::<f64>() / peaks.len() as f64
    };
    FullBodyPose {
        keypoints,
        score,
        person_id: 0,
        image_id: 0,
    }
}

/// Lower bound on an encoded plane's maximum: the continuous centre is at most
/// half a pixel from the nearest lattice point along each axis.
pub fn min_peak(sigma: f64) -> f64 {
    let r = std::f64::consts::SQRT_2 * 0.5 / sigma;
    (-0.5 * r * r).exp()
}
