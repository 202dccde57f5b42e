//! Procedural scenes with exact ground truth, rendered by the direct renderer.
//!
//! The camera is orthographic and looks down `-z`. Image-plane coordinates
//! span `x ∈ [-W/H, W/H]` (left to right) and `y ∈ [-1, 1]` (bottom to top).

use ndarray::{Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    patch_luminance, patch_pixels, AlbedoMap, EnvironmentMap, ImageMap, NormalMap,
    ReflectanceJudgment, Relation, SceneSample, LUMA,
};
use crate::error::{Error, Result};
use crate::render::{shade_direct, shading, Weighting};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Shape {
    Sphere {
        center: [f64; 3],
        radius: f64,
        albedo: [f64; 3],
    },
    /// Infinite plane through `point`. Must not be viewed edge-on.
    Plane {
        point: [f64; 3],
        normal: [f64; 3],
        albedo: [f64; 3],
    },
}

impl Shape {
    fn albedo(&self) -> [f64; 3] {
        match self {
            Shape::Sphere { albedo, .. } | Shape::Plane { albedo, .. } => *albedo,
        }
    }

    /// Depth and camera-facing unit normal where the ray at `(x, y)` hits.
    fn intersect(&self, x: f64, y: f64) -> Option<(f64, [f64; 3])> {
        match *self {
            Shape::Sphere { center, radius, .. } => {
                let (dx, dy) = (x - center[0], y - center[1]);
                let h2 = radius * radius - dx * dx - dy * dy;
                if h2 <= 0.0 {
                    return None;
                }
                let dz = h2.sqrt();
                let n = [dx / radius, dy / radius, dz / radius];
                let len = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
                Some((center[2] + dz, [n[0] / len, n[1] / len, n[2] / len]))
            }
            Shape::Plane { point, normal, .. } => {
                let len = (normal[0].powi(2) + normal[1].powi(2) + normal[2].powi(2)).sqrt();
                let mut n = [normal[0] / len, normal[1] / len, normal[2] / len];
                if n[2].abs() < 1e-6 {
                    return None;
                }
                if n[2] < 0.0 {
                    n = [-n[0], -n[1], -n[2]];
                }
                let z = point[2] - (n[0] * (x - point[0]) + n[1] * (y - point[1])) / n[2];
                Some((z, n))
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let a = self.albedo();
        if a.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Validation("shape albedo outside [0, 1]".into()));
        }
        match self {
            Shape::Sphere { radius, .. } if radius.is_nan() || *radius <= 0.0 => {
                Err(Error::Validation("sphere radius must be positive".into()))
            }
            Shape::Plane { normal, .. } if normal.iter().all(|v| *v == 0.0) => {
                Err(Error::Validation("plane normal is zero".into()))
            }
            _ => Ok(()),
        }
    }
}

/// A soft disk that darkens the rendered image, standing in for a cast
/// shadow the direct renderer cannot produce.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShadowSpec {
    /// Normalized `(x, y)` image position, `y` down.
    pub center: [f64; 2],
    /// Radius as a fraction of the image height.
    pub radius: f64,
    /// Fraction of light removed at the core, in `[0, 1]`.
    pub strength: f64,
}

impl ShadowSpec {
    fn factor(&self, u: f64, v: f64, aspect: f64) -> f64 {
        let dx = (u - self.center[0]) * aspect;
        let dy = v - self.center[1];
        let d = (dx * dx + dy * dy).sqrt() / self.radius.max(1e-9);
        // Flat core, smooth falloff to the rim.
        let t = ((d - 0.7) / 0.3).clamp(0.0, 1.0);
        let core = 1.0 - t * t * (3.0 - 2.0 * t);
        1.0 - self.strength * core
    }
}

#[derive(Clone, Debug)]
pub struct SceneSpec {
    pub height: usize,
    pub width: usize,
    /// Nearest hit wins.
    pub shapes: Vec<Shape>,
    pub env: EnvironmentMap,
    pub weighting: Weighting,
    pub shadows: Vec<ShadowSpec>,
    /// Additional shadows placed at seeded random positions.
    pub random_shadows: usize,
}

impl SceneSpec {
    pub fn new(height: usize, width: usize, shapes: Vec<Shape>, env: EnvironmentMap) -> Self {
        Self {
            height,
            width,
            shapes,
            env,
            weighting: Weighting::LiteralSum,
            shadows: Vec::new(),
            random_shadows: 0,
        }
    }
}

fn random_shadow(rng: &mut ChaCha8Rng) -> ShadowSpec {
    ShadowSpec {
        center: [rng.gen_range(0.2..0.8), rng.gen_range(0.3..0.8)],
        radius: rng.gen_range(0.15..0.3),
        strength: rng.gen_range(0.4..0.7),
    }
}

/// Rasterizes the shapes and renders the image with the direct renderer,
/// then multiplies in any shadows. Without shadows the image equals
/// `shade_direct(albedo_gt, normal_gt, env_gt)` exactly.
pub fn generate_analytic_scene(spec: &SceneSpec, seed: u64) -> Result<SceneSample> {
    let (h, w) = (spec.height, spec.width);
    if h == 0 || w == 0 {
        return Err(Error::Argument("scene size must be nonzero".into()));
    }
    if spec.shapes.is_empty() {
        return Err(Error::Argument("scene needs at least one shape".into()));
    }
    for s in &spec.shapes {
        s.validate()?;
    }
    let aspect = w as f64 / h as f64;
    let mut vectors = Array3::zeros((h, w, 3));
    let mut albedo = Array3::zeros((h, w, 3));
    let mut mask = Array2::from_elem((h, w), false);
    for row in 0..h {
        let y = 1.0 - (row as f64 + 0.5) / h as f64 * 2.0;
        for col in 0..w {
            let x = ((col as f64 + 0.5) / w as f64 * 2.0 - 1.0) * aspect;
            let mut best: Option<(f64, [f64; 3], [f64; 3])> = None;
            for s in &spec.shapes {
                if let Some((z, n)) = s.intersect(x, y) {
                    if best.is_none_or(|(bz, _, _)| z > bz) {
                        best = Some((z, n, s.albedo()));
                    }
                }
            }
            if let Some((_, n, a)) = best {
                mask[[row, col]] = true;
                for c in 0..3 {
                    vectors[[row, col, c]] = n[c];
                    albedo[[row, col, c]] = a[c];
                }
            }
        }
    }
    if !mask.iter().any(|&m| m) {
        return Err(Error::Validation(
            "no shape is visible: the scene mask is empty".into(),
        ));
    }

    let albedo = AlbedoMap::new(albedo)?;
    let normal = NormalMap::new(vectors, mask.clone())?;
    let mut image = shade_direct(&albedo, &normal, &spec.env, spec.weighting)?.into_pixels();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut shadows = spec.shadows.clone();
    shadows.extend((0..spec.random_shadows).map(|_| random_shadow(&mut rng)));
    if !shadows.is_empty() {
        for row in 0..h {
            let v = (row as f64 + 0.5) / h as f64;
            for col in 0..w {
                let u = (col as f64 + 0.5) / w as f64;
                let f: f64 = shadows.iter().map(|s| s.factor(u, v, aspect)).product();
                for c in 0..3 {
                    image[[row, col, c]] *= f;
                }
            }
        }
    }

    let sample = SceneSample {
        id: format!("analytic-{seed}"),
        image: ImageMap::new(image)?,
        albedo_gt: Some(albedo),
        normal_gt: Some(normal),
        env_gt: Some(spec.env.clone()),
        judgments: None,
        mask,
        warnings: Vec::new(),
    };
    sample.validate()?;
    Ok(sample)
}

/// A seeded indoor-like lighting environment: a dim ambient term that is
/// brighter overhead, a few ceiling lights, and a window on the horizon.
///
/// Scaled so the brightest axis-aligned surface has shading luminance 1
/// under literal-sum weighting.
pub fn indoor_environment(rows: usize, cols: usize, seed: u64) -> Result<EnvironmentMap> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base = EnvironmentMap::zeros(rows, cols);
    let grid = base.grid();

    let tint = |rng: &mut ChaCha8Rng, spread: f64| -> [f64; 3] {
        [
            1.0 + rng.gen_range(-spread..spread),
            1.0,
            1.0 + rng.gen_range(-spread..spread),
        ]
    };
    let ambient = tint(&mut rng, 0.1);
    let n_lights = rng.gen_range(1..=3);
    let mut lobes = Vec::new();
    for _ in 0..n_lights {
        // Upper hemisphere, away from the pole.
        let theta: f64 = rng.gen_range(0.15..0.9);
        let phi: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
        let d = [theta.sin() * phi.cos(), theta.cos(), theta.sin() * phi.sin()];
        lobes.push((d, rng.gen_range(4.0..10.0), rng.gen_range(3.0..8.0), tint(&mut rng, 0.15)));
    }
    {
        let theta: f64 = rng.gen_range(1.3..1.7);
        let phi: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
        let d = [theta.sin() * phi.cos(), theta.cos(), theta.sin() * phi.sin()];
        lobes.push((d, rng.gen_range(3.0..6.0), rng.gen_range(1.0..4.0), tint(&mut rng, 0.2)));
    }

    let mut radiance = Array3::zeros((rows, cols, 3));
    for r in 0..rows {
        for c in 0..cols {
            let d = grid.direction(r, c);
            let sky = 0.05 + 0.1 * (0.5 + 0.5 * d[1]);
            for k in 0..3 {
                let mut v = sky * ambient[k];
                for (ld, sharpness, power, color) in &lobes {
                    let cos = d[0] * ld[0] + d[1] * ld[1] + d[2] * ld[2];
                    v += power * color[k] * (sharpness * (cos - 1.0)).exp();
                }
                radiance[[r, c, k]] = v;
            }
        }
    }
    let env = EnvironmentMap::new(radiance)?;

    let axes = [
        [1.0, 0.0, 0.0],
        [-1.0, 0.0, 0.0],
        [0.0, 1.0, 0.0],
        [0.0, -1.0, 0.0],
        [0.0, 0.0, 1.0],
        [0.0, 0.0, -1.0],
    ];
    let vectors = Array3::from_shape_fn((1, 6, 3), |(_, i, k)| axes[i][k]);
    let normals = NormalMap::new(vectors, Array2::from_elem((1, 6), true))?;
    let s = shading(&normals, &env, Weighting::LiteralSum)?;
    let peak = (0..6)
        .map(|i| (0..3).map(|k| LUMA[k] * s[[0, i, k]]).sum::<f64>())
        .fold(0.0, f64::max);
    let mut env = env;
    env.radiance_mut().mapv_inplace(|v| v / peak);
    Ok(env)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FixtureOptions {
    pub height: usize,
    pub width: usize,
    pub env_rows: usize,
    pub env_cols: usize,
    /// Cast shadows on every fixture with an odd index.
    pub shadows: bool,
    /// Reflectance judgments per fixture; 0 disables them.
    pub judgments: usize,
    pub delta: f64,
}

impl Default for FixtureOptions {
    fn default() -> Self {
        Self {
            height: super::NETWORK_HEIGHT,
            width: super::NETWORK_WIDTH,
            env_rows: super::ENV_ROWS,
            env_cols: super::ENV_COLS,
            shadows: false,
            judgments: 0,
            delta: 0.1,
        }
    }
}

fn random_albedo(rng: &mut ChaCha8Rng) -> [f64; 3] {
    let base: f64 = rng.gen_range(0.2..0.85);
    [
        (base * rng.gen_range(0.7..1.2)).clamp(0.05, 0.95),
        (base * rng.gen_range(0.7..1.2)).clamp(0.05, 0.95),
        (base * rng.gen_range(0.7..1.2)).clamp(0.05, 0.95),
    ]
}

/// A corner of a room (back wall, floor, side wall) with one or two spheres.
fn room_shapes(rng: &mut ChaCha8Rng, aspect: f64) -> Vec<Shape> {
    let tilt = |rng: &mut ChaCha8Rng| rng.gen_range(-0.15..0.15);
    let mut shapes = vec![
        Shape::Plane {
            point: [0.0, 0.0, -3.0],
            normal: [tilt(rng), tilt(rng), 1.0],
            albedo: random_albedo(rng),
        },
        Shape::Plane {
            point: [0.0, rng.gen_range(-0.6..-0.2), -3.0],
            normal: [tilt(rng), 1.0, rng.gen_range(0.5..0.9)],
            albedo: random_albedo(rng),
        },
    ];
    let side = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
    shapes.push(Shape::Plane {
        point: [side * aspect * rng.gen_range(0.5..0.8), 0.0, -3.0],
        normal: [-side, tilt(rng), rng.gen_range(0.6..1.0)],
        albedo: random_albedo(rng),
    });
    for _ in 0..rng.gen_range(1..=2) {
        shapes.push(Shape::Sphere {
            center: [
                rng.gen_range(-0.6..0.6) * aspect,
                rng.gen_range(-0.4..0.4),
                rng.gen_range(-1.0..0.0),
            ],
            radius: rng.gen_range(0.25..0.5),
            albedo: random_albedo(rng),
        });
    }
    shapes
}

/// `n` seeded room fixtures, each with its own indoor environment.
pub fn analytic_fixture_set(n: usize, seed: u64, options: &FixtureOptions) -> Result<Vec<SceneSample>> {
    let mut out = Vec::with_capacity(n);
    let aspect = options.width as f64 / options.height as f64;
    for i in 0..n {
        let scene_seed = seed.wrapping_mul(1_000_003).wrapping_add(i as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(scene_seed);
        let env = indoor_environment(options.env_rows, options.env_cols, rng.gen())?;
        let mut spec = SceneSpec::new(options.height, options.width, room_shapes(&mut rng, aspect), env);
        if options.shadows && i % 2 == 1 {
            spec.random_shadows = rng.gen_range(1..=2);
        }
        let mut sample = generate_analytic_scene(&spec, rng.gen())?;
        sample.id = format!("fixture-{i:03}");
        if options.judgments > 0 {
            let albedo = sample.albedo_gt.as_ref().expect("analytic albedo");
            sample.judgments = Some(synthesize_judgments(
                albedo,
                &sample.mask,
                options.judgments,
                options.delta,
                rng.gen(),
            ));
        }
        out.push(sample);
    }
    Ok(out)
}

/// Draws pairwise judgments from a known albedo, keeping only pairs whose
/// ratio is clearly on one side of the `1 + δ` threshold.
pub fn synthesize_judgments(
    albedo: &AlbedoMap,
    mask: &Array2<bool>,
    count: usize,
    delta: f64,
    seed: u64,
) -> Vec<ReflectanceJudgment> {
    let (h, w) = (albedo.height(), albedo.width());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    let draw = |rng: &mut ChaCha8Rng| -> [f64; 2] {
        let col = rng.gen_range(0..w);
        let row = rng.gen_range(0..h);
        [(col as f64 + 0.5) / w as f64, (row as f64 + 0.5) / h as f64]
    };
    let inside = |p: [f64; 2]| patch_pixels(p, 1, h, w).iter().all(|&(y, x)| mask[[y, x]]);
    for _ in 0..count * 50 {
        if out.len() == count {
            break;
        }
        let (p1, p2) = (draw(&mut rng), draw(&mut rng));
        if !inside(p1) || !inside(p2) {
            continue;
        }
        let r1 = patch_luminance(albedo, p1, 1).max(1e-4);
        let r2 = patch_luminance(albedo, p2, 1).max(1e-4);
        let clear = (1.0 + delta) * 1.1;
        let relation = if r2 / r1 > clear {
            Relation::Point1Darker
        } else if r1 / r2 > clear {
            Relation::Point2Darker
        } else if (r2 / r1).max(r1 / r2) < 1.0 + delta / 2.0 {
            Relation::Equal
        } else {
            continue;
        };
        out.push(ReflectanceJudgment {
            point1: p1,
            point2: p2,
            relation,
            weight: rng.gen_range(0.5..1.5),
        });
    }
    out
}
