//! The three networks, their building blocks, optimizer and checkpoints.

mod adam;
mod checkpoint;
mod config;
mod im2col;
pub mod layers;
mod nets;

pub use adam::{Adam, AdamConfig};
pub use checkpoint::{load_store, read_sidecar, save_store, sidecar_path, store_hash, Sidecar};
pub use config::{ModelConfig, LATENT_DIM};
pub use layers::{Mode, ParamStore};
pub use nets::{Decomposition, EnvEstimator, Irn, IrnOutput, Rar, RESIDUAL_OUT_GAIN};
