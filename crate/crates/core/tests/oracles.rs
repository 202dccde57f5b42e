mod common;

use std::f64::consts::PI;

use candle_core::{DType, Device};
use invrender::render::{fit_env_least_squares, fit_env_least_squares_grid, sphere_normals, TensorRenderer};
use invrender::scene::indoor_environment;
use invrender::{direction_grid, render_probe, shade_direct, AlbedoMap, EnvironmentMap, Weighting};

use common::*;

#[test]
fn direct_render_matches_scalar_loop() {
    let mut r = rng(20);
    for i in 0..10 {
        let weighting = [Weighting::LiteralSum, Weighting::SolidAngle][i % 2];
        let (h, w) = (5 + i % 3, 6);
        let albedo = random_albedo(&mut r, h, w);
        let normal = random_normals(&mut r, h, w, 0.2);
        let env = random_env(&mut r, 9, 18);
        let got = shade_direct(&albedo, &normal, &env, weighting).unwrap();
        assert!(max_abs_diff(got.pixels(), &oracle_shade(&albedo, &normal, &env, weighting)) < 1e-9);
    }
}

#[test]
fn tensor_renderer_matches_scalar_loop_per_batch_item() {
    let mut r = rng(21);
    let renderer = TensorRenderer::new(18, 36, Weighting::SolidAngle, DType::F64, &Device::Cpu).unwrap();
    let a: Vec<_> = (0..3).map(|_| random_albedo(&mut r, 4, 5)).collect();
    let n: Vec<_> = (0..3).map(|_| random_normals(&mut r, 4, 5, 0.0)).collect();
    let e: Vec<_> = (0..3).map(|_| random_env(&mut r, 18, 36)).collect();
    let stack = |ts: Vec<candle_core::Tensor>| candle_core::Tensor::cat(&ts, 0).unwrap();
    let out = renderer
        .shade(
            &stack(a.iter().map(|x| f64_tensor(x.pixels())).collect()),
            &stack(n.iter().map(|x| f64_tensor(x.vectors())).collect()),
            &stack(e.iter().map(|x| f64_tensor(x.radiance())).collect()),
        )
        .unwrap();
    for i in 0..3 {
        let got = invrender::convert::tensor_to_array(&out.get(i).unwrap()).unwrap();
        let want = oracle_shade(&a[i], &n[i], &e[i], Weighting::SolidAngle);
        assert!(max_abs_diff(&got, &want) < 1e-10, "batch item {i}");
    }
}

#[test]
fn grid_cells_match_equirectangular_layout() {
    for (rows, cols) in [(18, 36), (4, 7), (1, 1)] {
        let g = direction_grid(rows, cols).unwrap();
        for row in 0..rows {
            let (t0, t1) = (PI * row as f64 / rows as f64, PI * (row + 1) as f64 / rows as f64);
            for col in 0..cols {
                let theta = 0.5 * (t0 + t1);
                let phi = 2.0 * PI * (col as f64 + 0.5) / cols as f64;
                let want = [theta.sin() * phi.cos(), theta.cos(), theta.sin() * phi.sin()];
                let d = g.direction(row, col);
                assert!((0..3).all(|k| (d[k] - want[k]).abs() < 1e-12));
                let omega = (t0.cos() - t1.cos()) * 2.0 * PI / cols as f64;
                assert!((g.solid_angle(row, col) - omega).abs() < 1e-12);
            }
        }
        assert!((g.solid_angles().iter().sum::<f64>() - 4.0 * PI).abs() < 1e-9);
    }
}

#[test]
fn fit_recovers_a_rendered_sphere_image() {
    let normal = sphere_normals(48);
    let albedo = AlbedoMap::constant(48, 48, [0.7, 0.5, 0.3]).unwrap();
    let env = indoor_environment(18, 36, 9).unwrap();
    let image = shade_direct(&albedo, &normal, &env, Weighting::LiteralSum).unwrap();
    let fit = fit_env_least_squares(&image, &albedo, &normal, Weighting::LiteralSum).unwrap();
    assert!(fit.residual_mad < 1e-8, "{}", fit.residual_mad);
    assert!(fit.env.radiance().iter().all(|&v| v >= 0.0));
    let again = shade_direct(&albedo, &normal, &fit.env, Weighting::LiteralSum).unwrap();
    assert!(max_abs_diff(again.pixels(), image.pixels()) < 1e-6);
}

#[test]
fn fit_on_a_coarser_grid_is_no_worse_than_zero_lighting() {
    let normal = sphere_normals(32);
    let albedo = AlbedoMap::constant(32, 32, [0.6; 3]).unwrap();
    let env = indoor_environment(18, 36, 3).unwrap();
    let image = shade_direct(&albedo, &normal, &env, Weighting::SolidAngle).unwrap();
    let fit = fit_env_least_squares_grid(&image, &albedo, &normal, Weighting::SolidAngle, 6, 12).unwrap();
    assert_eq!((fit.env.rows(), fit.env.cols()), (6, 12));
    assert!(fit.residual_rms <= fit.zero_env_rms);
    assert!(fit.residual_rms > 0.0);
}

#[test]
fn probe_under_zero_lighting_is_black_and_disk_shaped() {
    let probe = render_probe(&EnvironmentMap::zeros(18, 36), 32, Weighting::LiteralSum).unwrap();
    assert!(probe.image.pixels().iter().all(|&v| v == 0.0));
    let inside = probe.mask.iter().filter(|&&m| m).count() as f64;
    assert!((inside / (32.0 * 32.0) - PI / 4.0).abs() < 0.02);
}

#[test]
fn probe_matches_direct_render_of_sphere_normals() {
    let mut r = rng(22);
    let env = random_env(&mut r, 18, 36);
    let probe = render_probe(&env, 24, Weighting::SolidAngle).unwrap();
    let white = AlbedoMap::constant(24, 24, [1.0; 3]).unwrap();
    let want = oracle_shade(&white, &sphere_normals(24), &env, Weighting::SolidAngle);
    assert!(max_abs_diff(probe.image.pixels(), &want) < 1e-12);
}
