//! The closed-form direct renderer and everything built on it.

mod fit;
mod grid;
mod probe;
mod shade;
mod tensor;

pub use fit::{fit_env_least_squares, fit_env_least_squares_grid, nnls_gram, EnvFit};
pub use grid::{direction_grid, DirectionGrid};
pub use probe::{render_probe, sphere_normals, Probe};
pub use shade::{shade_direct, shading, Weighting, RENDER_NORM_TOLERANCE};
pub use tensor::TensorRenderer;
