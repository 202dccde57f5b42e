use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::scene::{ENV_COLS, ENV_ROWS, NETWORK_HEIGHT, NETWORK_WIDTH};

/// Width of the residual renderer's image code.
pub const LATENT_DIM: usize = 300;

/// Layer hyperparameters shared by the three networks.
///
/// `width_divisor` scales every channel count down (1 gives the full-size
/// networks); the image code stays [`LATENT_DIM`] wide regardless.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub height: usize,
    pub width: usize,
    pub width_divisor: usize,
    pub irn_res_blocks: usize,
    pub env_res_blocks: usize,
    pub env_rows: usize,
    pub env_cols: usize,
    /// How many of the lighting head's three 3×3 convolutions use stride 2
    /// (the first ones); the rest use stride 1. Small inputs need fewer so
    /// the head's output grid is not collapsed before upsampling.
    pub light_downsamples: usize,
    /// Multiplies the softplus that ends each lighting head, so that a zero
    /// pre-activation gives a plausible radiance level for the grid size.
    pub env_scale: f64,
}

impl ModelConfig {
    /// Full-size networks at 240×320.
    pub fn full() -> Self {
        Self {
            height: NETWORK_HEIGHT,
            width: NETWORK_WIDTH,
            width_divisor: 1,
            irn_res_blocks: 9,
            env_res_blocks: 4,
            env_rows: ENV_ROWS,
            env_cols: ENV_COLS,
            light_downsamples: 3,
            env_scale: 4.0 / (ENV_ROWS * ENV_COLS) as f64,
        }
    }

    /// Narrow, shallow networks at 32×48 for CPU smoke runs.
    pub fn small() -> Self {
        Self {
            height: 32,
            width: 48,
            width_divisor: 8,
            irn_res_blocks: 2,
            env_res_blocks: 1,
            light_downsamples: 0,
            ..Self::full()
        }
    }

    /// Channel count for a full-size width of `n`.
    pub fn ch(&self, n: usize) -> usize {
        (n / self.width_divisor).max(1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.height == 0 || self.width == 0 || !self.height.is_multiple_of(16) || !self.width.is_multiple_of(16) {
            return Err(Error::Validation(format!(
                "network input {}x{} must be a nonzero multiple of 16",
                self.height, self.width
            )));
        }
        if self.width_divisor == 0 {
            return Err(Error::Validation("width_divisor must be positive".into()));
        }
        if self.env_rows == 0 || self.env_cols == 0 {
            return Err(Error::Validation("environment grid must be nonempty".into()));
        }
        if self.light_downsamples > 3 {
            return Err(Error::Validation("light_downsamples is at most 3".into()));
        }
        if !self.env_scale.is_finite() || self.env_scale <= 0.0 {
            return Err(Error::Validation("env_scale must be positive".into()));
        }
        Ok(())
    }

    /// Hex sha256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::full()
    }
}
