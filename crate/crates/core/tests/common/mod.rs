#![allow(dead_code)]

use std::f64::consts::PI;

use candle_core::{DType, Device, Tensor, Var};
use ndarray::{Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use invrender::{AlbedoMap, EnvironmentMap, NormalMap, Weighting};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn unit(v: [f64; 3]) -> [f64; 3] {
    let l = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    [v[0] / l, v[1] / l, v[2] / l]
}

pub fn random_unit(rng: &mut impl Rng) -> [f64; 3] {
    loop {
        let v = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        let l2: f64 = v.iter().map(|x| x * x).sum();
        if l2 > 0.01 && l2 <= 1.0 {
            return unit(v);
        }
    }
}

pub fn random_albedo(rng: &mut impl Rng, h: usize, w: usize) -> AlbedoMap {
    AlbedoMap::new(Array3::from_shape_fn((h, w, 3), |_| rng.gen_range(0.0..1.0))).unwrap()
}

/// Unit normals with roughly `invalid_fraction` of pixels masked out.
pub fn random_normals(rng: &mut impl Rng, h: usize, w: usize, invalid_fraction: f64) -> NormalMap {
    let mut v = Array3::zeros((h, w, 3));
    let mut valid = Array2::from_elem((h, w), true);
    for y in 0..h {
        for x in 0..w {
            let n = random_unit(rng);
            for c in 0..3 {
                v[[y, x, c]] = n[c];
            }
            if rng.gen_bool(invalid_fraction) {
                valid[[y, x]] = false;
            }
        }
    }
    NormalMap::new(v, valid).unwrap()
}

pub fn random_env(rng: &mut impl Rng, rows: usize, cols: usize) -> EnvironmentMap {
    EnvironmentMap::new(Array3::from_shape_fn((rows, cols, 3), |_| rng.gen_range(0.0..0.02))).unwrap()
}

/// Scalar triple loop over pixels, cells and channels. Cell directions and
/// solid angles are recomputed here from the equirectangular layout (polar
/// angle from +y, cell centers) rather than taken from the library.
pub fn oracle_shade(albedo: &AlbedoMap, normal: &NormalMap, env: &EnvironmentMap, weighting: Weighting) -> Array3<f64> {
    let (h, w) = (albedo.height(), albedo.width());
    let (rows, cols) = (env.rows(), env.cols());
    let mut out = Array3::zeros((h, w, 3));
    for y in 0..h {
        for x in 0..w {
            if !normal.valid()[[y, x]] {
                continue;
            }
            let n = unit(normal.at(y, x));
            for r in 0..rows {
                let t0 = PI * r as f64 / rows as f64;
                let t1 = PI * (r + 1) as f64 / rows as f64;
                let theta = 0.5 * (t0 + t1);
                for c in 0..cols {
                    let phi = 2.0 * PI * (c as f64 + 0.5) / cols as f64;
                    let d = [theta.sin() * phi.cos(), theta.cos(), theta.sin() * phi.sin()];
                    let cos = (n[0] * d[0] + n[1] * d[1] + n[2] * d[2]).max(0.0);
                    let wgt = match weighting {
                        Weighting::LiteralSum => 1.0,
                        Weighting::SolidAngle => (t0.cos() - t1.cos()) * 2.0 * PI / cols as f64,
                    };
                    for k in 0..3 {
                        out[[y, x, k]] += albedo.pixels()[[y, x, k]] * wgt * cos * env.radiance()[[r, c, k]];
                    }
                }
            }
        }
    }
    out
}

pub fn max_abs_diff(a: &Array3<f64>, b: &Array3<f64>) -> f64 {
    assert_eq!(a.dim(), b.dim());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn f64_tensor(a: &Array3<f64>) -> Tensor {
    invrender::convert::array_to_tensor(a, DType::F64, &Device::Cpu).unwrap()
}

pub fn mask_tensor(m: &Array2<bool>) -> Tensor {
    invrender::convert::mask_to_tensor(m, DType::F64, &Device::Cpu).unwrap()
}

pub fn uniform_tensor(rng: &mut impl Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n: usize = shape.iter().product();
    let v: Vec<f64> = (0..n).map(|_| rng.gen_range(lo..hi)).collect();
    Tensor::from_vec(v, shape, &Device::Cpu).unwrap()
}

/// Outcome of [`check_gradients`].
#[derive(Debug, Default)]
pub struct GradCheck {
    pub checked: usize,
    /// Coordinates within one step of a kink, detected from disagreeing
    /// one-sided differences, and left out.
    pub kinks: usize,
    pub worst_relative: f64,
    pub failures: Vec<String>,
}

pub const FD_STEP: f64 = 1e-4;
pub const FD_RTOL: f64 = 1e-3;
/// Below this magnitude both derivatives count as zero.
const GRAD_FLOOR: f64 = 1e-9;

/// Compares autodiff gradients of the scalar `f(inputs)` with central
/// differences at `coords` randomly drawn coordinates where at least one of
/// the two derivatives is nonzero.
pub fn check_gradients(
    inputs: &[Tensor],
    f: impl Fn(&[Tensor]) -> Tensor,
    coords: usize,
    rng: &mut impl Rng,
) -> GradCheck {
    let vars: Vec<Var> = inputs.iter().map(|t| Var::from_tensor(t).unwrap()).collect();
    let tensors: Vec<Tensor> = vars.iter().map(|v| v.as_tensor().clone()).collect();
    let loss = f(&tensors);
    let grads = loss.backward().unwrap();
    let analytic: Vec<Vec<f64>> = vars
        .iter()
        .map(|v| match grads.get(v.as_tensor()) {
            Some(g) => g.flatten_all().unwrap().to_vec1::<f64>().unwrap(),
            None => vec![0.0; v.elem_count()],
        })
        .collect();
    let base: Vec<Vec<f64>> = inputs.iter().map(|t| t.flatten_all().unwrap().to_vec1::<f64>().unwrap()).collect();
    let eval = |k: usize, i: usize, delta: f64| -> f64 {
        let mut xs: Vec<Tensor> = inputs.to_vec();
        let mut v = base[k].clone();
        v[i] += delta;
        xs[k] = Tensor::from_vec(v, inputs[k].dims(), &Device::Cpu).unwrap();
        f(&xs).to_scalar::<f64>().unwrap()
    };
    let f0 = loss.to_scalar::<f64>().unwrap();
    let mut out = GradCheck::default();
    let mut attempts = 0;
    while out.checked < coords && attempts < coords * 200 {
        attempts += 1;
        let k = rng.gen_range(0..inputs.len());
        let i = rng.gen_range(0..base[k].len());
        let (fp, fm) = (eval(k, i, FD_STEP), eval(k, i, -FD_STEP));
        let central = (fp - fm) / (2.0 * FD_STEP);
        let forward = (fp - f0) / FD_STEP;
        let backward = (f0 - fm) / FD_STEP;
        let g = analytic[k][i];
        if g.abs().max(central.abs()) < GRAD_FLOOR {
            continue;
        }
        if (forward - backward).abs() > FD_RTOL * forward.abs().max(backward.abs()) + GRAD_FLOOR {
            out.kinks += 1;
            continue;
        }
        let rel = (g - central).abs() / g.abs().max(central.abs());
        out.worst_relative = out.worst_relative.max(rel);
        if (g - central).abs() > FD_RTOL * g.abs().max(central.abs()) {
            out.failures.push(format!("input {k} element {i}: analytic {g:.6e} vs central {central:.6e}"));
        }
        out.checked += 1;
    }
    out
}

fn random_judgments(rng: &mut impl Rng, count: usize) -> Vec<invrender::ReflectanceJudgment> {
    use invrender::Relation;
    (0..count)
        .map(|_| invrender::ReflectanceJudgment {
            point1: [rng.gen_range(0.05..0.95), rng.gen_range(0.05..0.95)],
            point2: [rng.gen_range(0.05..0.95), rng.gen_range(0.05..0.95)],
            relation: [Relation::Point1Darker, Relation::Point2Darker, Relation::Equal][rng.gen_range(0..3)],
            weight: rng.gen_range(0.2..1.0),
        })
        .collect()
}

fn scalar_of(t: Tensor) -> Tensor {
    t.to_dtype(DType::F64).unwrap()
}

/// Every differentiable operation of the renderer and loss suite, each
/// checked against central differences at `coords` coordinates.
pub fn gradient_suite(coords: usize, seed: u64) -> Vec<(String, GradCheck)> {
    use invrender::loss::*;
    use invrender::render::TensorRenderer;
    use std::collections::BTreeMap;

    let mut r = rng(seed);
    let (b, h, w, rows, cols) = (2, 8, 8, 18, 36);
    let dev = Device::Cpu;
    let mut out = Vec::new();

    let mask_arr: Vec<Array2<bool>> = (0..b)
        .map(|_| Array2::from_shape_fn((h, w), |_| r.gen_bool(0.85)))
        .collect();
    let masks = Tensor::stack(
        &mask_arr.iter().map(|m| mask_tensor(m).squeeze(0).unwrap()).collect::<Vec<_>>(),
        0,
    )
    .unwrap();
    let albedo = uniform_tensor(&mut r, &[b, 3, h, w], 0.05, 1.0);
    let normal = uniform_tensor(&mut r, &[b, 3, h, w], -1.0, 1.0);
    let env = uniform_tensor(&mut r, &[b, 3, rows, cols], 0.0, 0.02);
    let weights = uniform_tensor(&mut r, &[b, 3, h, w], -1.0, 1.0);

    for weighting in [Weighting::LiteralSum, Weighting::SolidAngle] {
        let renderer = TensorRenderer::new(rows, cols, weighting, DType::F64, &dev).unwrap();
        let c = check_gradients(
            &[albedo.clone(), normal.clone(), env.clone()],
            |x| (renderer.shade(&x[0], &x[1], &x[2]).unwrap() * &weights).unwrap().sum_all().unwrap(),
            coords,
            &mut r,
        );
        out.push((format!("direct render ({weighting:?})"), c));
    }
    let renderer = TensorRenderer::new(rows, cols, Weighting::LiteralSum, DType::F64, &dev).unwrap();

    let target = uniform_tensor(&mut r, &[b, 3, h, w], -1.0, 1.0);
    out.push((
        "masked L1".into(),
        check_gradients(&[normal.clone(), target.clone()], |x| masked_l1(&x[0], &x[1], &masks).unwrap(), coords, &mut r),
    ));
    let env_target = uniform_tensor(&mut r, &[b, 3, rows, cols], 0.0, 0.02);
    out.push((
        "environment L1".into(),
        check_gradients(&[env.clone(), env_target.clone()], |x| mean_l1(&x[0], &x[1]).unwrap(), coords, &mut r),
    ));

    let gt_albedo = uniform_tensor(&mut r, &[b, 3, h, w], 0.05, 1.0);
    let gt_normal = normalize(&uniform_tensor(&mut r, &[b, 3, h, w], -1.0, 1.0));
    let cfg = LossConfig::default();
    out.push((
        "supervised loss".into(),
        check_gradients(
            &[albedo.clone(), normal.clone(), env.clone()],
            |x| {
                supervised_loss_t(
                    MapsRef { albedo: &x[0], normal: &x[1], env: &x[2] },
                    MapsRef { albedo: &gt_albedo, normal: &gt_normal, env: &env_target },
                    &masks,
                    &renderer,
                    &cfg,
                )
                .unwrap()
                .total
            },
            coords,
            &mut r,
        ),
    ));

    let image = uniform_tensor(&mut r, &[b, 3, h, w], 0.0, 1.0);
    let residual = uniform_tensor(&mut r, &[b, 3, h, w], -0.2, 0.2);
    out.push((
        "reconstruction loss".into(),
        check_gradients(
            &[albedo.clone(), normal.clone(), env.clone(), residual.clone()],
            |x| {
                let direct = renderer.shade(&x[0], &x[1], &x[2]).unwrap().broadcast_mul(&masks).unwrap();
                reconstruction_loss_t(&image, &direct, Some(&x[3]), &masks).unwrap()
            },
            coords,
            &mut r,
        ),
    ));

    let judgments: Vec<_> = (0..b).map(|_| random_judgments(&mut r, 40)).collect();
    out.push((
        "reflectance hinge".into(),
        check_gradients(
            std::slice::from_ref(&albedo),
            |x| whdr_hinge_loss_t(&x[0], &judgments, &mask_arr, &cfg).unwrap().0,
            coords,
            &mut r,
        ),
    ));
    out.push((
        "normal supervision".into(),
        check_gradients(
            std::slice::from_ref(&normal),
            |x| normal_supervision_loss_t(&x[0], &gt_normal, &masks).unwrap(),
            coords,
            &mut r,
        ),
    ));
    let pseudo_env = uniform_tensor(&mut r, &[b, 3, rows, cols], 0.0, 0.02);
    out.push((
        "pseudo supervision".into(),
        check_gradients(
            &[albedo.clone(), normal.clone(), env.clone()],
            |x| {
                let t = pseudo_supervision_loss_t(
                    MapsRef { albedo: &x[0], normal: &x[1], env: &x[2] },
                    MapsRef { albedo: &gt_albedo, normal: &gt_normal, env: &pseudo_env },
                    &masks,
                )
                .unwrap();
                ((t.albedo + t.normal).unwrap() + t.lighting).unwrap()
            },
            coords,
            &mut r,
        ),
    ));

    for mode in [RealMode::Iiw, RealMode::Nyu] {
        let c = check_gradients(
            &[albedo.clone(), normal.clone(), env.clone(), residual.clone()],
            |x| {
                let pseudo = pseudo_supervision_loss_t(
                    MapsRef { albedo: &x[0], normal: &x[1], env: &x[2] },
                    MapsRef { albedo: &gt_albedo, normal: &gt_normal, env: &pseudo_env },
                    &masks,
                )
                .unwrap();
                let direct = renderer.shade(&x[0], &x[1], &x[2]).unwrap().broadcast_mul(&masks).unwrap();
                let recon = reconstruction_loss_t(&image, &direct, Some(&x[3]), &masks).unwrap();
                let weak = match mode {
                    RealMode::Iiw => whdr_hinge_loss_t(&x[0], &judgments, &mask_arr, &cfg).unwrap().0,
                    RealMode::Nyu => normal_supervision_loss_t(&x[1], &gt_normal, &masks).unwrap(),
                };
                let terms = BTreeMap::from([
                    (Term::Albedo, pseudo.albedo),
                    (Term::Normal, pseudo.normal),
                    (Term::Lighting, pseudo.lighting),
                    (Term::Recon, recon),
                    (Term::Weak, weak),
                ]);
                scalar_of(composite_real_loss_t(&terms, mode, &cfg).unwrap())
            },
            coords,
            &mut r,
        );
        out.push((format!("composite real loss ({mode:?})"), c));
    }
    out
}

fn normalize(t: &Tensor) -> Tensor {
    let n = t.sqr().unwrap().sum_keepdim(1).unwrap().sqrt().unwrap();
    t.broadcast_div(&n).unwrap()
}
