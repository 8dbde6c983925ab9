//! Mapping egocentric detections (bounding box + depth image) onto a
//! top-down plane.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ProjectionError {
    #[error("invalid bounding box {0:?}")]
    InvalidBox([u32; 4]),
    #[error("invalid depth image: {0}")]
    InvalidDepth(String),
    #[error("no valid depth reading around pixel ({x}, {y})")]
    NoValidDepth { x: f64, y: f64 },
    #[error("point ({x}, {y}) lies outside the {width}x{height} image")]
    OutOfBounds {
        x: f64,
        y: f64,
        width: u32,
        height: u32,
    },
    #[error("window must be an odd integer >= 1, got {0}")]
    InvalidWindow(u32),
    #[error("failed to read depth image {path}: {message}")]
    Read { path: String, message: String },
}

/// Pixel-space box with `x0 < x1`, `y0 < y1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "[u32; 4]", into = "[u32; 4]")]
pub struct BoundingBox {
    x0: u32,
    y0: u32,
    x1: u32,
    y1: u32,
}

impl BoundingBox {
    pub fn new(x0: u32, y0: u32, x1: u32, y1: u32) -> Result<Self, ProjectionError> {
        if x0 >= x1 || y0 >= y1 {
            return Err(ProjectionError::InvalidBox([x0, y0, x1, y1]));
        }
        Ok(BoundingBox { x0, y0, x1, y1 })
    }

    pub fn corners(&self) -> [u32; 4] {
        [self.x0, self.y0, self.x1, self.y1]
    }

    pub fn fits_within(&self, width: u32, height: u32) -> bool {
        self.x1 <= width && self.y1 <= height
    }
}

impl TryFrom<[u32; 4]> for BoundingBox {
    type Error = ProjectionError;
    fn try_from(v: [u32; 4]) -> Result<Self, Self::Error> {
        BoundingBox::new(v[0], v[1], v[2], v[3])
    }
}

impl From<BoundingBox> for [u32; 4] {
    fn from(b: BoundingBox) -> Self {
        b.corners()
    }
}

/// Row-major depth map in millimeters; 0 marks a missing reading.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthImage {
    width: u32,
    height: u32,
    values: Vec<u16>,
    max_range_mm: u16,
}

impl DepthImage {
    pub fn new(
        width: u32,
        height: u32,
        values: Vec<u16>,
        max_range_mm: u16,
    ) -> Result<Self, ProjectionError> {
        if values.len() != (width as usize) * (height as usize) {
            return Err(ProjectionError::InvalidDepth(format!(
                "{} values for a {width}x{height} image",
                values.len()
            )));
        }
        if max_range_mm == 0 {
            return Err(ProjectionError::InvalidDepth(
                "max range must be positive".into(),
            ));
        }
        if let Some(v) = values.iter().find(|&&v| v > max_range_mm) {
            return Err(ProjectionError::InvalidDepth(format!(
                "reading {v} mm exceeds max range {max_range_mm} mm"
            )));
        }
        Ok(DepthImage {
            width,
            height,
            values,
            max_range_mm,
        })
    }

    pub fn uniform(
        width: u32,
        height: u32,
        depth_mm: u16,
        max_range_mm: u16,
    ) -> Result<Self, ProjectionError> {
        Self::new(
            width,
            height,
            vec![depth_mm; (width * height) as usize],
            max_range_mm,
        )
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn max_range_mm(&self) -> u16 {
        self.max_range_mm
    }

    pub fn values(&self) -> &[u16] {
        &self.values
    }

    pub fn get(&self, x: u32, y: u32) -> u16 {
        self.values[(y * self.width + x) as usize]
    }

    /// Reads a 16-bit binary PGM (P5, maxval 65535, values in millimeters).
    /// Readings above `max_range_mm` are treated as invalid.
    pub fn read_pgm(path: &Path, max_range_mm: u16) -> Result<Self, ProjectionError> {
        let read_err = |message: String| ProjectionError::Read {
            path: path.display().to_string(),
            message,
        };
        let img = image::ImageReader::open(path)
            .map_err(|e| read_err(e.to_string()))?
            .with_guessed_format()
            .map_err(|e| read_err(e.to_string()))?
            .decode()
            .map_err(|e| read_err(e.to_string()))?;
        let luma = match img {
            image::DynamicImage::ImageLuma16(buf) => buf,
            other => {
                return Err(read_err(format!(
                    "expected 16-bit grayscale, got {:?}",
                    other.color()
                )))
            }
        };
        let (w, h) = luma.dimensions();
        let values = luma
            .into_raw()
            .into_iter()
            .map(|v| if v > max_range_mm { 0 } else { v })
            .collect();
        Self::new(w, h, values, max_range_mm)
    }

    /// Writes a binary 16-bit PGM (P5, maxval 65535, big-endian samples).
    pub fn write_pgm(&self, path: &Path) -> Result<(), ProjectionError> {
        let mut bytes = format!("P5\n{} {}\n65535\n", self.width, self.height).into_bytes();
        bytes.extend(self.values.iter().flat_map(|v| v.to_be_bytes()));
        crate::io::write_atomic(path, &bytes).map_err(|e| ProjectionError::Read {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EgocentricDetection {
    pub id: String,
    pub bbox: BoundingBox,
    /// Precomputed body orientation, if an external estimator supplied one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ProjectionMode {
    /// x = centroid_x / image width, y = depth / max range.
    #[default]
    Normalized,
    /// Metric lateral offset from a pinhole camera with the given horizontal FOV.
    Pinhole { hfov_rad: f64 },
}

pub fn centroid(b: &BoundingBox) -> (f64, f64) {
    (
        (b.x0 as f64 + b.x1 as f64) / 2.0,
        (b.y0 as f64 + b.y1 as f64) / 2.0,
    )
}

fn median(values: &mut [u16]) -> f64 {
    values.sort_unstable();
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2] as f64
    } else {
        (values[n / 2 - 1] as f64 + values[n / 2] as f64) / 2.0
    }
}

/// Median of the nonzero readings in a `window`×`window` patch centered on
/// the rounded point. The patch is clipped at the image border.
pub fn depth_at_centroid(
    d: &DepthImage,
    c: (f64, f64),
    window: u32,
) -> Result<f64, ProjectionError> {
    if window == 0 || window.is_multiple_of(2) {
        return Err(ProjectionError::InvalidWindow(window));
    }
    let (cx, cy) = c;
    if !(cx >= 0.0 && cy >= 0.0 && cx <= d.width as f64 && cy <= d.height as f64) {
        return Err(ProjectionError::OutOfBounds {
            x: cx,
            y: cy,
            width: d.width,
            height: d.height,
        });
    }
    // a centroid on the far edge rounds onto the last pixel
    let px = (cx.round() as i64).min(d.width as i64 - 1);
    let py = (cy.round() as i64).min(d.height as i64 - 1);
    let half = (window / 2) as i64;
    let mut readings = Vec::with_capacity((window * window) as usize);
    for y in (py - half)..=(py + half) {
        for x in (px - half)..=(px + half) {
            if x < 0 || y < 0 || x >= d.width as i64 || y >= d.height as i64 {
                continue;
            }
            let v = d.get(x as u32, y as u32);
            if v != 0 {
                readings.push(v);
            }
        }
    }
    if readings.is_empty() {
        return Err(ProjectionError::NoValidDepth { x: cx, y: cy });
    }
    Ok(median(&mut readings))
}

/// Top-down position of one detection.
pub fn project_topdown(
    det: &EgocentricDetection,
    d: &DepthImage,
    img_width: u32,
    mode: ProjectionMode,
    window: u32,
) -> Result<(f64, f64), ProjectionError> {
    let c = centroid(&det.bbox);
    let depth_mm = depth_at_centroid(d, c, window)?;
    Ok(project_point(
        c.0,
        depth_mm,
        img_width,
        d.max_range_mm,
        mode,
    ))
}

/// The projection formula on a centroid column and a depth reading.
pub fn project_point(
    centroid_x: f64,
    depth_mm: f64,
    img_width: u32,
    max_range_mm: u16,
    mode: ProjectionMode,
) -> (f64, f64) {
    let u = centroid_x / img_width as f64;
    match mode {
        ProjectionMode::Normalized => (u, depth_mm / max_range_mm as f64),
        ProjectionMode::Pinhole { hfov_rad } => {
            let depth_m = depth_mm / 1000.0;
            ((u - 0.5) * 2.0 * depth_m * (hfov_rad / 2.0).tan(), depth_m)
        }
    }
}

/// Per-frame detection sidecar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionFrame {
    pub frame_id: String,
    pub img_width: u32,
    pub img_height: u32,
    pub max_range_mm: u16,
    pub detections: Vec<EgocentricDetection>,
    /// Optional ground-truth groups carried through to the projected scene.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub groups: Option<Vec<Vec<String>>>,
}
