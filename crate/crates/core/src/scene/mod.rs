//! Per-image domain types and dataset ingestion.
//!
//! All radiance-like maps are stored as `H×W×3` arrays of linear values in
//! row-major order (row 0 is the top of the image). Pixel masks are `H×W`
//! boolean arrays where `true` marks pixels with defined geometry.

mod analytic;
pub mod codec;
mod judgments;
mod manifest;

use ndarray::{Array2, Array3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::render::DirectionGrid;

pub use analytic::{
    analytic_fixture_set, generate_analytic_scene, indoor_environment, synthesize_judgments,
    FixtureOptions, SceneSpec, ShadowSpec, Shape,
};
pub use judgments::{
    judgments_to_json, load_judgments, parse_judgments, patch_luminance, patch_pixels, LUMA,
};
pub use manifest::{
    load_dataset_manifest, load_sample, load_sample_with, parse_manifest, DatasetIndex,
    DatasetRecord, Split,
};

/// Network-facing image height.
pub const NETWORK_HEIGHT: usize = 240;
/// Network-facing image width.
pub const NETWORK_WIDTH: usize = 320;
/// Environment map rows (polar bands).
pub const ENV_ROWS: usize = 18;
/// Environment map columns (azimuth bands).
pub const ENV_COLS: usize = 36;

/// Tolerance on `|n| - 1` for valid normals.
pub const UNIT_NORM_TOLERANCE: f64 = 1e-5;

fn check_finite(what: &str, data: &Array3<f64>) -> Result<()> {
    if data.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Validation(format!("{what} contains non-finite values")))
    }
}

fn check_hw3(what: &str, data: &Array3<f64>) -> Result<()> {
    if data.dim().2 != 3 {
        return Err(Error::Shape(format!(
            "{what} must have 3 channels, got {}",
            data.dim().2
        )));
    }
    Ok(())
}

/// Linear radiance image, nonnegative.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageMap {
    pixels: Array3<f64>,
}

impl ImageMap {
    pub fn new(pixels: Array3<f64>) -> Result<Self> {
        check_hw3("image", &pixels)?;
        check_finite("image", &pixels)?;
        if pixels.iter().any(|&v| v < 0.0) {
            return Err(Error::Validation("image has negative radiance".into()));
        }
        Ok(Self { pixels })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self {
            pixels: Array3::zeros((height, width, 3)),
        }
    }

    pub fn height(&self) -> usize {
        self.pixels.dim().0
    }

    pub fn width(&self) -> usize {
        self.pixels.dim().1
    }

    pub fn pixels(&self) -> &Array3<f64> {
        &self.pixels
    }

    pub fn into_pixels(self) -> Array3<f64> {
        self.pixels
    }
}

/// Signed image, used for the learned residual appearance.
#[derive(Clone, Debug, PartialEq)]
pub struct ResidualImage {
    pixels: Array3<f64>,
}

impl ResidualImage {
    pub fn new(pixels: Array3<f64>) -> Result<Self> {
        check_hw3("residual", &pixels)?;
        check_finite("residual", &pixels)?;
        Ok(Self { pixels })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self {
            pixels: Array3::zeros((height, width, 3)),
        }
    }

    pub fn pixels(&self) -> &Array3<f64> {
        &self.pixels
    }
}

/// Diffuse reflectance in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct AlbedoMap {
    pixels: Array3<f64>,
}

impl AlbedoMap {
    pub fn new(pixels: Array3<f64>) -> Result<Self> {
        check_hw3("albedo", &pixels)?;
        check_finite("albedo", &pixels)?;
        if pixels.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
            return Err(Error::Validation("albedo outside [0, 1]".into()));
        }
        Ok(Self { pixels })
    }

    /// Clamps into `[0, 1]` instead of rejecting.
    pub fn clamped(mut pixels: Array3<f64>) -> Result<Self> {
        check_hw3("albedo", &pixels)?;
        check_finite("albedo", &pixels)?;
        pixels.mapv_inplace(|v| v.clamp(0.0, 1.0));
        Ok(Self { pixels })
    }

    pub fn constant(height: usize, width: usize, rgb: [f64; 3]) -> Result<Self> {
        let pixels = Array3::from_shape_fn((height, width, 3), |(_, _, c)| rgb[c]);
        Self::new(pixels)
    }

    pub fn height(&self) -> usize {
        self.pixels.dim().0
    }

    pub fn width(&self) -> usize {
        self.pixels.dim().1
    }

    pub fn pixels(&self) -> &Array3<f64> {
        &self.pixels
    }
}

/// Unit surface normals with a per-pixel validity mask.
///
/// Camera frame: `+x` right, `+y` up, `+z` toward the viewer.
#[derive(Clone, Debug, PartialEq)]
pub struct NormalMap {
    vectors: Array3<f64>,
    valid: Array2<bool>,
}

impl NormalMap {
    /// Builds a map, checking that every valid vector is unit length.
    pub fn new(vectors: Array3<f64>, valid: Array2<bool>) -> Result<Self> {
        check_hw3("normal", &vectors)?;
        let (h, w, _) = vectors.dim();
        if valid.dim() != (h, w) {
            return Err(Error::Shape(format!(
                "normal mask {:?} does not match {h}x{w}",
                valid.dim()
            )));
        }
        for ((y, x), &ok) in valid.indexed_iter() {
            if !ok {
                continue;
            }
            let n = [vectors[[y, x, 0]], vectors[[y, x, 1]], vectors[[y, x, 2]]];
            let norm = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
            if !norm.is_finite() || (norm - 1.0).abs() > UNIT_NORM_TOLERANCE {
                return Err(Error::Validation(format!(
                    "normal at ({y}, {x}) has norm {norm}"
                )));
            }
        }
        Ok(Self { vectors, valid })
    }

    /// Skips the unit-norm check. Consumers that require unit normals
    /// (the renderer, metrics) re-check on entry.
    pub fn from_raw_unchecked(vectors: Array3<f64>, valid: Array2<bool>) -> Result<Self> {
        check_hw3("normal", &vectors)?;
        let (h, w, _) = vectors.dim();
        if valid.dim() != (h, w) {
            return Err(Error::Shape("normal mask does not match vectors".into()));
        }
        Ok(Self { vectors, valid })
    }

    /// Normalizes every vector; pixels with (near) zero length become invalid.
    pub fn normalized(mut vectors: Array3<f64>, mut valid: Array2<bool>) -> Result<Self> {
        check_hw3("normal", &vectors)?;
        let (h, w, _) = vectors.dim();
        if valid.dim() != (h, w) {
            return Err(Error::Shape("normal mask does not match vectors".into()));
        }
        for y in 0..h {
            for x in 0..w {
                let norm = (0..3)
                    .map(|c| vectors[[y, x, c]].powi(2))
                    .sum::<f64>()
                    .sqrt();
                if norm > 1e-8 && norm.is_finite() {
                    for c in 0..3 {
                        vectors[[y, x, c]] /= norm;
                    }
                } else {
                    valid[[y, x]] = false;
                    for c in 0..3 {
                        vectors[[y, x, c]] = 0.0;
                    }
                }
            }
        }
        Ok(Self { vectors, valid })
    }

    pub fn height(&self) -> usize {
        self.vectors.dim().0
    }

    pub fn width(&self) -> usize {
        self.vectors.dim().1
    }

    pub fn vectors(&self) -> &Array3<f64> {
        &self.vectors
    }

    pub fn valid(&self) -> &Array2<bool> {
        &self.valid
    }

    pub fn at(&self, y: usize, x: usize) -> [f64; 3] {
        [
            self.vectors[[y, x, 0]],
            self.vectors[[y, x, 1]],
            self.vectors[[y, x, 2]],
        ]
    }
}

/// Equirectangular HDR radiance, `rows×cols×3`, nonnegative.
#[derive(Clone, Debug, PartialEq)]
pub struct EnvironmentMap {
    radiance: Array3<f64>,
}

impl EnvironmentMap {
    pub fn new(radiance: Array3<f64>) -> Result<Self> {
        check_hw3("environment", &radiance)?;
        check_finite("environment", &radiance)?;
        let (rows, cols, _) = radiance.dim();
        if rows == 0 || cols == 0 {
            return Err(Error::Argument("environment map has no cells".into()));
        }
        if radiance.iter().any(|&v| v < 0.0) {
            return Err(Error::Validation("environment has negative radiance".into()));
        }
        Ok(Self { radiance })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            radiance: Array3::zeros((rows, cols, 3)),
        }
    }

    pub fn constant(rows: usize, cols: usize, rgb: [f64; 3]) -> Self {
        Self {
            radiance: Array3::from_shape_fn((rows, cols, 3), |(_, _, c)| rgb[c].max(0.0)),
        }
    }

    pub fn rows(&self) -> usize {
        self.radiance.dim().0
    }

    pub fn cols(&self) -> usize {
        self.radiance.dim().1
    }

    pub fn cells(&self) -> usize {
        self.rows() * self.cols()
    }

    pub fn radiance(&self) -> &Array3<f64> {
        &self.radiance
    }

    pub fn radiance_mut(&mut self) -> &mut Array3<f64> {
        &mut self.radiance
    }

    /// Direction and solid-angle grid matching this map's resolution.
    pub fn grid(&self) -> DirectionGrid {
        DirectionGrid::new(self.rows(), self.cols()).expect("nonzero dimensions")
    }

    /// Radiance of flat cell `i` (row-major), channel `c`.
    pub fn cell(&self, i: usize, c: usize) -> f64 {
        let cols = self.cols();
        self.radiance[[i / cols, i % cols, c]]
    }
}

/// Relative reflectance relation between two points.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Relation {
    Point1Darker,
    Point2Darker,
    Equal,
}

/// One pairwise relative-reflectance human judgment.
#[derive(Clone, Debug, PartialEq)]
pub struct ReflectanceJudgment {
    /// Normalized `(x, y)` in `[0, 1]²`, `y` pointing down.
    pub point1: [f64; 2],
    pub point2: [f64; 2],
    pub relation: Relation,
    /// Human confidence, `w_t ≥ 0`.
    pub weight: f64,
}

impl ReflectanceJudgment {
    pub fn validate(&self) -> Result<()> {
        let inside = |p: &[f64; 2]| p.iter().all(|v| (0.0..=1.0).contains(v));
        if !inside(&self.point1) || !inside(&self.point2) {
            return Err(Error::Validation(
                "judgment coordinates outside [0, 1]".into(),
            ));
        }
        if !self.weight.is_finite() || self.weight < 0.0 {
            return Err(Error::Validation(format!(
                "judgment weight {} is negative or non-finite",
                self.weight
            )));
        }
        Ok(())
    }

    /// Pixel `(row, col)` addressed by a normalized point.
    pub fn pixel(point: [f64; 2], height: usize, width: usize) -> (usize, usize) {
        let col = ((point[0] * width as f64).floor() as usize).min(width - 1);
        let row = ((point[1] * height as f64).floor() as usize).min(height - 1);
        (row, col)
    }
}

/// One image with whatever ground truth is available.
#[derive(Clone, Debug)]
pub struct SceneSample {
    pub id: String,
    pub image: ImageMap,
    pub albedo_gt: Option<AlbedoMap>,
    pub normal_gt: Option<NormalMap>,
    pub env_gt: Option<EnvironmentMap>,
    pub judgments: Option<Vec<ReflectanceJudgment>>,
    pub mask: Array2<bool>,
    /// Non-fatal issues found while loading.
    pub warnings: Vec<String>,
}

impl SceneSample {
    pub fn height(&self) -> usize {
        self.image.height()
    }

    pub fn width(&self) -> usize {
        self.image.width()
    }

    pub fn valid_pixels(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// Re-checks every type invariant and that all maps share `H×W`.
    pub fn validate(&self) -> Result<()> {
        let (h, w) = (self.height(), self.width());
        ImageMap::new(self.image.pixels().clone())?;
        if self.mask.dim() != (h, w) {
            return Err(Error::Shape(format!("{}: mask size", self.id)));
        }
        if let Some(a) = &self.albedo_gt {
            if (a.height(), a.width()) != (h, w) {
                return Err(Error::Shape(format!("{}: albedo size", self.id)));
            }
            AlbedoMap::new(a.pixels().clone())?;
        }
        if let Some(n) = &self.normal_gt {
            if (n.height(), n.width()) != (h, w) {
                return Err(Error::Shape(format!("{}: normal size", self.id)));
            }
            NormalMap::new(n.vectors().clone(), n.valid().clone())?;
        }
        if let Some(e) = &self.env_gt {
            EnvironmentMap::new(e.radiance().clone())?;
        }
        if let Some(js) = &self.judgments {
            for j in js {
                j.validate()?;
            }
        }
        Ok(())
    }
}
