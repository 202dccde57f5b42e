//! Per-image nonnegative least-squares environment fit.

use nalgebra::{DMatrix, DVector};

use super::shade::{unit, Weighting};
use super::{shade_direct, DirectionGrid};
use crate::error::{Error, Result};
use crate::scene::{AlbedoMap, EnvironmentMap, ImageMap, NormalMap, ENV_COLS, ENV_ROWS};

/// Result of [`fit_env_least_squares`].
#[derive(Clone, Debug)]
pub struct EnvFit {
    pub env: EnvironmentMap,
    /// Row-major flags for cells no valid normal's hemisphere reaches.
    /// Their radiance is unconstrained and left at zero.
    pub uncovered: Vec<bool>,
    /// Root-mean-square reconstruction residual over valid pixels and channels.
    pub residual_rms: f64,
    /// Mean absolute reconstruction residual over valid pixels and channels.
    pub residual_mad: f64,
    /// Residuals of the zero environment, for comparison.
    pub zero_env_rms: f64,
}

impl EnvFit {
    pub fn uncovered_count(&self) -> usize {
        self.uncovered.iter().filter(|&&u| u).count()
    }
}

/// Lawson–Hanson active-set NNLS on the normal equations `G x = b`,
/// `G = AᵀA`, `b = Aᵀy`. Returns `argmin_{x ≥ 0} ‖Ax − y‖²`.
pub fn nnls_gram(gram: &DMatrix<f64>, rhs: &DVector<f64>, tolerance: f64) -> DVector<f64> {
    let n = rhs.len();
    let mut x = DVector::zeros(n);
    let mut passive = vec![false; n];
    let mut excluded = vec![false; n];
    let scale = rhs.amax().max(f64::MIN_POSITIVE);
    let tol = tolerance * scale;
    let max_iter = 3 * n + 10;
    let mut iterations = 0;

    loop {
        let grad = rhs - gram * &x;
        let candidate = (0..n)
            .filter(|&j| !passive[j] && !excluded[j] && grad[j] > tol)
            .max_by(|&a, &b| grad[a].total_cmp(&grad[b]));
        let Some(j) = candidate else { break };
        passive[j] = true;

        let mut first = true;
        loop {
            iterations += 1;
            let idx: Vec<usize> = (0..n).filter(|&i| passive[i]).collect();
            let z_p = solve_subsystem(gram, rhs, &idx);
            let mut z = DVector::zeros(n);
            for (k, &i) in idx.iter().enumerate() {
                z[i] = z_p[k];
            }
            if idx.iter().all(|&i| z[i] > 0.0) {
                x = z;
                break;
            }
            if first && z[j] <= 0.0 {
                // Numerically dependent column: it cannot enter the passive set.
                passive[j] = false;
                excluded[j] = true;
                break;
            }
            first = false;
            if iterations > max_iter {
                break;
            }
            let mut alpha = f64::INFINITY;
            let mut hit = None;
            for &i in &idx {
                if z[i] <= 0.0 {
                    let step = x[i] / (x[i] - z[i]);
                    if step < alpha {
                        alpha = step;
                        hit = Some(i);
                    }
                }
            }
            x += (&z - &x) * alpha;
            if let Some(i) = hit {
                x[i] = 0.0;
                passive[i] = false;
            }
            for &i in &idx {
                if x[i] <= 0.0 {
                    x[i] = 0.0;
                    passive[i] = false;
                }
            }
        }
        if iterations > max_iter {
            break;
        }
    }
    x
}

fn solve_subsystem(gram: &DMatrix<f64>, rhs: &DVector<f64>, idx: &[usize]) -> DVector<f64> {
    let k = idx.len();
    let sub = DMatrix::from_fn(k, k, |a, b| gram[(idx[a], idx[b])]);
    let b = DVector::from_fn(k, |a, _| rhs[idx[a]]);
    if let Some(chol) = sub.clone().cholesky() {
        return chol.solve(&b);
    }
    if let Some(sol) = sub.clone().lu().solve(&b) {
        if sol.iter().all(|v| v.is_finite()) {
            return sol;
        }
    }
    sub.svd(true, true)
        .solve(&b, 1e-12)
        .unwrap_or_else(|_| DVector::zeros(k))
}

/// Fits the nonnegative environment minimizing
/// `Σ_p ‖I[p] − shade_direct(A, N, L)[p]‖²` over pixels valid in `normal`.
///
/// The three color channels decouple and are solved independently.
pub fn fit_env_least_squares(
    image: &ImageMap,
    albedo: &AlbedoMap,
    normal: &NormalMap,
    weighting: Weighting,
) -> Result<EnvFit> {
    fit_env_least_squares_grid(image, albedo, normal, weighting, ENV_ROWS, ENV_COLS)
}

pub fn fit_env_least_squares_grid(
    image: &ImageMap,
    albedo: &AlbedoMap,
    normal: &NormalMap,
    weighting: Weighting,
    rows: usize,
    cols: usize,
) -> Result<EnvFit> {
    let (h, w) = (image.height(), image.width());
    if (albedo.height(), albedo.width()) != (h, w) || (normal.height(), normal.width()) != (h, w) {
        return Err(Error::Argument("image, albedo and normal sizes differ".into()));
    }
    let grid = DirectionGrid::new(rows, cols)?;
    let weights = weighting.cell_weights(&grid);
    let cells = grid.len();

    let pixels: Vec<(usize, usize)> = normal
        .valid()
        .indexed_iter()
        .filter(|(_, &v)| v)
        .map(|(p, _)| p)
        .collect();
    if pixels.is_empty() {
        return Err(Error::Argument("no valid pixels to fit".into()));
    }

    // Clamped-cosine design matrix, one row per valid pixel.
    let mut design = DMatrix::zeros(pixels.len(), cells);
    let mut covered = vec![false; cells];
    for (row, &(y, x)) in pixels.iter().enumerate() {
        let n = unit(normal.at(y, x));
        for (i, d) in grid.directions().iter().enumerate() {
            let cos = n[0] * d[0] + n[1] * d[1] + n[2] * d[2];
            if cos > 0.0 {
                design[(row, i)] = cos * weights[i];
                covered[i] = true;
            }
        }
    }

    let mut radiance = ndarray::Array3::zeros((rows, cols, 3));
    for c in 0..3 {
        let mut scaled = design.clone();
        let mut target = DVector::zeros(pixels.len());
        for (row, &(y, x)) in pixels.iter().enumerate() {
            let a = albedo.pixels()[[y, x, c]];
            scaled.row_mut(row).scale_mut(a);
            target[row] = image.pixels()[[y, x, c]];
        }
        let gram = scaled.tr_mul(&scaled);
        let rhs = scaled.tr_mul(&target);
        let sol = nnls_gram(&gram, &rhs, 1e-12);
        for i in 0..cells {
            radiance[[i / cols, i % cols, c]] = if covered[i] { sol[i].max(0.0) } else { 0.0 };
        }
    }
    let env = EnvironmentMap::new(radiance)?;

    let recon = shade_direct(albedo, normal, &env, weighting)?;
    let (mut sq, mut abs, mut zero_sq) = (0.0, 0.0, 0.0);
    for &(y, x) in &pixels {
        for c in 0..3 {
            let target = image.pixels()[[y, x, c]];
            let r = target - recon.pixels()[[y, x, c]];
            sq += r * r;
            abs += r.abs();
            zero_sq += target * target;
        }
    }
    let count = (pixels.len() * 3) as f64;
    Ok(EnvFit {
        env,
        uncovered: covered.iter().map(|c| !c).collect(),
        residual_rms: (sq / count).sqrt(),
        residual_mad: abs / count,
        zero_env_rms: (zero_sq / count).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{Array2, Array3};

    #[test]
    fn nnls_matches_unconstrained_when_interior() {
        // A = I, y = (1, 2) → x = (1, 2).
        let g = DMatrix::identity(2, 2);
        let b = DVector::from_vec(vec![1.0, 2.0]);
        let x = nnls_gram(&g, &b, 1e-12);
        assert!((x[0] - 1.0).abs() < 1e-12 && (x[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn nnls_clamps_negative_direction() {
        // A = I, y = (1, -2) → x = (1, 0).
        let g = DMatrix::identity(2, 2);
        let b = DVector::from_vec(vec![1.0, -2.0]);
        let x = nnls_gram(&g, &b, 1e-12);
        assert_eq!(x[1], 0.0);
        assert!((x[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn nnls_brute_force_two_variables() {
        // Correlated columns; compare against enumeration of active sets.
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 0.9, 0.2, 1.0, 0.5, 0.1]);
        let y = DVector::from_vec(vec![1.0, -0.5, 0.3]);
        let g = a.tr_mul(&a);
        let b = a.tr_mul(&y);
        let x = nnls_gram(&g, &b, 1e-14);
        let obj = |x: &DVector<f64>| (&a * x - &y).norm_squared();
        let mut best = obj(&DVector::zeros(2));
        for j in 0..2 {
            let col = a.column(j);
            let t = (col.dot(&y) / col.norm_squared()).max(0.0);
            let mut v = DVector::zeros(2);
            v[j] = t;
            best = best.min(obj(&v));
        }
        if let Some(full) = g.clone().cholesky().map(|c| c.solve(&b)) {
            if full.iter().all(|&v| v >= 0.0) {
                best = best.min(obj(&full));
            }
        }
        assert!((obj(&x) - best).abs() < 1e-12);
    }

    #[test]
    fn black_image_fits_zero_env() {
        let (h, w) = (6, 6);
        let v = Array3::from_shape_fn((h, w, 3), |(_, _, c)| if c == 2 { 1.0 } else { 0.0 });
        let n = NormalMap::new(v, Array2::from_elem((h, w), true)).unwrap();
        let a = AlbedoMap::constant(h, w, [0.5; 3]).unwrap();
        let fit = fit_env_least_squares(&ImageMap::zeros(h, w), &a, &n, Weighting::LiteralSum)
            .unwrap();
        assert!(fit.env.radiance().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn plane_flags_opposite_hemisphere() {
        let (h, w) = (4, 4);
        let v = Array3::from_shape_fn((h, w, 3), |(_, _, c)| if c == 2 { 1.0 } else { 0.0 });
        let n = NormalMap::new(v, Array2::from_elem((h, w), true)).unwrap();
        let a = AlbedoMap::constant(h, w, [0.8; 3]).unwrap();
        let env = EnvironmentMap::constant(18, 36, [0.01, 0.02, 0.03]);
        let img = shade_direct(&a, &n, &env, Weighting::LiteralSum).unwrap();
        let fit = fit_env_least_squares(&img, &a, &n, Weighting::LiteralSum).unwrap();
        let grid = env.grid();
        for (i, d) in grid.directions().iter().enumerate() {
            assert_eq!(fit.uncovered[i], d[2] <= 0.0, "cell {i}");
        }
        assert_eq!(fit.uncovered_count(), 18 * 18);
        assert!(fit.residual_mad < 1e-9);
    }
}
