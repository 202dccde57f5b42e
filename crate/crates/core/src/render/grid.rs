use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Cell directions and solid angles of an equirectangular environment map.
///
/// Row `r` spans polar angle `θ ∈ [πr/R, π(r+1)/R]` measured from `+y`
/// (up); column `c` spans azimuth `φ ∈ [2πc/C, 2π(c+1)/C]`. A cell's
/// direction is evaluated at its center:
/// `d = (sin θ cos φ, cos θ, sin θ sin φ)`.
#[derive(Clone, Debug, PartialEq)]
pub struct DirectionGrid {
    rows: usize,
    cols: usize,
    directions: Vec<[f64; 3]>,
    solid_angles: Vec<f64>,
}

impl DirectionGrid {
    pub fn new(rows: usize, cols: usize) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Argument(format!(
                "direction grid needs positive dimensions, got {rows}x{cols}"
            )));
        }
        let d_theta = PI / rows as f64;
        let d_phi = 2.0 * PI / cols as f64;
        let mut directions = Vec::with_capacity(rows * cols);
        let mut solid_angles = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            let theta = (r as f64 + 0.5) * d_theta;
            let band = (r as f64 * d_theta).cos() - ((r + 1) as f64 * d_theta).cos();
            for c in 0..cols {
                let phi = (c as f64 + 0.5) * d_phi;
                directions.push([
                    theta.sin() * phi.cos(),
                    theta.cos(),
                    theta.sin() * phi.sin(),
                ]);
                solid_angles.push(band * d_phi);
            }
        }
        Ok(Self {
            rows,
            cols,
            directions,
            solid_angles,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn len(&self) -> usize {
        self.directions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.directions.is_empty()
    }

    /// Directions in row-major cell order.
    pub fn directions(&self) -> &[[f64; 3]] {
        &self.directions
    }

    /// Steradians per cell, row-major.
    pub fn solid_angles(&self) -> &[f64] {
        &self.solid_angles
    }

    pub fn direction(&self, row: usize, col: usize) -> [f64; 3] {
        self.directions[row * self.cols + col]
    }

    pub fn solid_angle(&self, row: usize, col: usize) -> f64 {
        self.solid_angles[row * self.cols + col]
    }

    /// Cell containing direction `d` (need not be normalized).
    pub fn cell_of(&self, d: [f64; 3]) -> (usize, usize) {
        let norm = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
        let theta = (d[1] / norm).clamp(-1.0, 1.0).acos();
        let mut phi = d[2].atan2(d[0]);
        if phi < 0.0 {
            phi += 2.0 * PI;
        }
        let r = ((theta / PI * self.rows as f64) as usize).min(self.rows - 1);
        let c = ((phi / (2.0 * PI) * self.cols as f64) as usize).min(self.cols - 1);
        (r, c)
    }
}

/// `direction_grid(rows, cols)`.
pub fn direction_grid(rows: usize, cols: usize) -> Result<DirectionGrid> {
    DirectionGrid::new(rows, cols)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_empty_grid() {
        assert!(matches!(DirectionGrid::new(0, 36), Err(Error::Argument(_))));
        assert!(matches!(DirectionGrid::new(18, 0), Err(Error::Argument(_))));
    }

    #[test]
    fn single_cell_covers_sphere() {
        let g = DirectionGrid::new(1, 1).unwrap();
        assert_eq!(g.len(), 1);
        assert!((g.solid_angles()[0] - 4.0 * PI).abs() < 1e-12);
    }

    #[test]
    fn first_cell_direction() {
        let g = DirectionGrid::new(18, 36).unwrap();
        let (t, p) = (PI / 36.0, PI / 36.0);
        let expected = [t.sin() * p.cos(), t.cos(), t.sin() * p.sin()];
        let d = g.direction(0, 0);
        for k in 0..3 {
            assert!((d[k] - expected[k]).abs() < 1e-15);
        }
    }

    #[test]
    fn cell_of_inverts_direction() {
        let g = DirectionGrid::new(18, 36).unwrap();
        for r in 0..18 {
            for c in 0..36 {
                assert_eq!(g.cell_of(g.direction(r, c)), (r, c));
            }
        }
    }
}
