//! Single-image inverse rendering.
//!
//! An image is decomposed into albedo, surface normals and an 18×36 HDR
//! environment map. A closed-form direct renderer re-shades the
//! decomposition, and a learned residual renderer accounts for whatever the
//! direct renderer cannot express (shadows, inter-reflection).

pub mod convert;
pub mod error;
pub mod loss;
pub mod metrics;
pub mod nn;
pub mod render;
pub mod scene;
pub mod train;

pub use error::{Error, Result};
pub use render::{direction_grid, render_probe, shade_direct, DirectionGrid, Weighting};
pub use scene::{
    AlbedoMap, EnvironmentMap, ImageMap, NormalMap, ReflectanceJudgment, Relation, SceneSample,
};
