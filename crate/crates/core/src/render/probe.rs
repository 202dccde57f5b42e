use ndarray::{Array2, Array3};

use super::{shade_direct, Weighting};
use crate::error::{Error, Result};
use crate::scene::{AlbedoMap, EnvironmentMap, ImageMap, NormalMap};

/// Orthographic view of a unit sphere filling a `resolution²` frame.
///
/// Pixel centers map to `x, y ∈ (-1, 1)` with `+y` up; pixels whose
/// center lies outside the unit disk are invalid.
pub fn sphere_normals(resolution: usize) -> NormalMap {
    let mut vectors = Array3::zeros((resolution, resolution, 3));
    let mut valid = Array2::from_elem((resolution, resolution), false);
    for row in 0..resolution {
        for col in 0..resolution {
            let x = (col as f64 + 0.5) / resolution as f64 * 2.0 - 1.0;
            let y = 1.0 - (row as f64 + 0.5) / resolution as f64 * 2.0;
            let r2 = x * x + y * y;
            if r2 < 1.0 {
                let z = (1.0 - r2).sqrt();
                let len = (r2 + z * z).sqrt();
                vectors[[row, col, 0]] = x / len;
                vectors[[row, col, 1]] = y / len;
                vectors[[row, col, 2]] = z / len;
                valid[[row, col]] = true;
            }
        }
    }
    NormalMap::new(vectors, valid).expect("sphere normals are unit")
}

/// A rendered diffuse probe and its disk mask.
#[derive(Clone, Debug)]
pub struct Probe {
    pub image: ImageMap,
    pub mask: Array2<bool>,
}

/// Renders a white (albedo 1) diffuse sphere lit by `env`.
pub fn render_probe(env: &EnvironmentMap, resolution: usize, weighting: Weighting) -> Result<Probe> {
    if resolution < 8 {
        return Err(Error::Argument(format!(
            "probe resolution must be at least 8, got {resolution}"
        )));
    }
    let normals = sphere_normals(resolution);
    let albedo = AlbedoMap::constant(resolution, resolution, [1.0; 3])?;
    let image = shade_direct(&albedo, &normals, env, weighting)?;
    Ok(Probe {
        image,
        mask: normals.valid().clone(),
    })
}
