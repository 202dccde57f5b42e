use ndarray::Array3;
use serde::{Deserialize, Serialize};

use super::DirectionGrid;
use crate::error::{Error, Result};
use crate::scene::{AlbedoMap, EnvironmentMap, ImageMap, NormalMap};

/// Per-cell weight applied inside the shading sum.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    /// `w_i = 1`: the plain sum over environment pixels.
    #[default]
    LiteralSum,
    /// `w_i = ω_i`: radiance integrated over cell solid angle.
    SolidAngle,
}

impl Weighting {
    pub fn cell_weights(self, grid: &DirectionGrid) -> Vec<f64> {
        match self {
            Weighting::LiteralSum => vec![1.0; grid.len()],
            Weighting::SolidAngle => grid.solid_angles().to_vec(),
        }
    }
}

impl std::str::FromStr for Weighting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "literal_sum" | "literal" => Ok(Weighting::LiteralSum),
            "solid_angle" => Ok(Weighting::SolidAngle),
            other => Err(Error::Argument(format!("unknown weighting `{other}`"))),
        }
    }
}

/// Tolerance on `|n| - 1` accepted by the renderer before renormalizing.
pub const RENDER_NORM_TOLERANCE: f64 = 1e-3;

pub(crate) fn unit(n: [f64; 3]) -> [f64; 3] {
    let len = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
    [n[0] / len, n[1] / len, n[2] / len]
}

/// Precomputed `(d_i, w_i · L_i)` pairs for a given environment.
pub(crate) struct WeightedCells {
    pub dirs: Vec<[f64; 3]>,
    pub radiance: Vec<[f64; 3]>,
}

impl WeightedCells {
    pub fn new(env: &EnvironmentMap, weighting: Weighting) -> Self {
        let grid = env.grid();
        let weights = weighting.cell_weights(&grid);
        let radiance = (0..grid.len())
            .map(|i| {
                [
                    weights[i] * env.cell(i, 0),
                    weights[i] * env.cell(i, 1),
                    weights[i] * env.cell(i, 2),
                ]
            })
            .collect();
        Self {
            dirs: grid.directions().to_vec(),
            radiance,
        }
    }

    /// `Σ_i max(0, n·d_i) w_i L_i` for a unit normal.
    pub fn shading(&self, n: [f64; 3]) -> [f64; 3] {
        let mut s = [0.0; 3];
        for (d, l) in self.dirs.iter().zip(&self.radiance) {
            let cos = n[0] * d[0] + n[1] * d[1] + n[2] * d[2];
            if cos > 0.0 {
                s[0] += cos * l[0];
                s[1] += cos * l[1];
                s[2] += cos * l[2];
            }
        }
        s
    }
}

fn check_normals(normal: &NormalMap) -> Result<()> {
    for ((y, x), &ok) in normal.valid().indexed_iter() {
        if !ok {
            continue;
        }
        let n = normal.at(y, x);
        let len = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
        if !len.is_finite() || (len - 1.0).abs() > RENDER_NORM_TOLERANCE {
            return Err(Error::Validation(format!(
                "normal at ({y}, {x}) has norm {len}"
            )));
        }
    }
    Ok(())
}

/// Clamped-cosine shading `S[p] = Σ_i w_i max(0, N[p]·d_i) L_i` without albedo.
///
/// Pixels outside the normal map's validity mask are zero.
pub fn shading(normal: &NormalMap, env: &EnvironmentMap, weighting: Weighting) -> Result<Array3<f64>> {
    check_normals(normal)?;
    let cells = WeightedCells::new(env, weighting);
    let (h, w) = (normal.height(), normal.width());
    let mut out = Array3::zeros((h, w, 3));
    for y in 0..h {
        for x in 0..w {
            if !normal.valid()[[y, x]] {
                continue;
            }
            let s = cells.shading(unit(normal.at(y, x)));
            for c in 0..3 {
                out[[y, x, c]] = s[c];
            }
        }
    }
    Ok(out)
}

/// The direct renderer: `out[p,k] = A[p,k] · Σ_i w_i max(0, N[p]·d_i) L[i,k]`.
///
/// Normals are renormalized before the dot product. Pixels outside the
/// normal map's validity mask render as zero.
pub fn shade_direct(
    albedo: &AlbedoMap,
    normal: &NormalMap,
    env: &EnvironmentMap,
    weighting: Weighting,
) -> Result<ImageMap> {
    if (albedo.height(), albedo.width()) != (normal.height(), normal.width()) {
        return Err(Error::Argument(format!(
            "albedo {}x{} and normal {}x{} differ",
            albedo.height(),
            albedo.width(),
            normal.height(),
            normal.width()
        )));
    }
    let mut out = shading(normal, env, weighting)?;
    out.zip_mut_with(albedo.pixels(), |o, &a| *o *= a);
    ImageMap::new(out)
}
