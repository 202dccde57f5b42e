//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any fails.

mod common;

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::time::Instant;

use candle_core::{DType, Device, Tensor};
use ndarray::{Array2, Array3};
use rand::Rng;

use invrender::loss::{composite_real_loss, LossConfig, RealMode, Term};
use invrender::metrics::{env_map_error, median_angular_error, rmse_mad, whdr};
use invrender::nn::{store_hash, Irn, Mode, ModelConfig, Rar, LATENT_DIM};
use invrender::render::{fit_env_least_squares, sphere_normals, TensorRenderer};
use invrender::scene::indoor_environment;
use invrender::train::{file_hash, latest_checkpoint, load_rar, load_samples, run_stage, Stage, StageReport, TrainConfig};
use invrender::{
    direction_grid, shade_direct, AlbedoMap, NormalMap, ReflectanceJudgment, Relation, Weighting,
};

use common::*;

type Verdict = Result<String, String>;

fn ensure(ok: bool, detail: String) -> Verdict {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn shading_oracle() -> Verdict {
    let t = Instant::now();
    let mut r = rng(1);
    let (mut worst, mut worst_tensor) = (0.0f64, 0.0f64);
    for i in 0..50 {
        let weighting = if i % 2 == 0 { Weighting::LiteralSum } else { Weighting::SolidAngle };
        let albedo = random_albedo(&mut r, 8, 8);
        let normal = random_normals(&mut r, 8, 8, 0.1);
        let env = random_env(&mut r, 18, 36);
        let expected = oracle_shade(&albedo, &normal, &env, weighting);
        let got = shade_direct(&albedo, &normal, &env, weighting).map_err(|e| e.to_string())?;
        worst = worst.max(max_abs_diff(got.pixels(), &expected));

        // The differentiable renderer used in training must agree as well.
        let renderer = TensorRenderer::new(18, 36, weighting, DType::F64, &Device::Cpu).unwrap();
        let mut masked = normal.vectors().clone();
        for ((y, x), &v) in normal.valid().indexed_iter() {
            if !v {
                masked.slice_mut(ndarray::s![y, x, ..]).fill(0.0);
            }
        }
        let out = renderer
            .shade(
                &f64_tensor(albedo.pixels()),
                &f64_tensor(&masked),
                &f64_tensor(env.radiance()),
            )
            .unwrap();
        let out = invrender::convert::tensor_to_array(&out.squeeze(0).unwrap()).unwrap();
        worst_tensor = worst_tensor.max(max_abs_diff(&out, &expected));
    }
    let secs = t.elapsed().as_secs_f64();
    ensure(
        worst <= 1e-6 && worst_tensor <= 1e-6 && secs < 10.0,
        format!("max |diff| {worst:.2e} (tensor renderer {worst_tensor:.2e}) over 50 instances, {secs:.2}s"),
    )
}

fn gradient_suite() -> Verdict {
    let t = Instant::now();
    let results = common::gradient_suite(100, 2);
    let secs = t.elapsed().as_secs_f64();
    let mut bad = Vec::new();
    let mut worst = 0.0f64;
    let mut kinks = 0;
    for (name, c) in &results {
        worst = worst.max(c.worst_relative);
        kinks += c.kinks;
        if c.checked < 100 || !c.failures.is_empty() {
            bad.push(format!("{name}: {} checked, {} failures {:?}", c.checked, c.failures.len(), c.failures.first()));
        }
    }
    let detail = format!(
        "{} operations x 100 coordinates, worst relative error {worst:.2e}, {kinks} kink coordinates skipped, {secs:.1}s",
        results.len()
    );
    if bad.is_empty() && secs < 60.0 {
        Ok(detail)
    } else {
        Err(format!("{detail}; {}", bad.join("; ")))
    }
}

fn grid_correctness() -> Verdict {
    let grid = direction_grid(18, 36).map_err(|e| e.to_string())?;
    let total: f64 = grid.solid_angles().iter().sum();
    let sum_err = (total - 4.0 * PI).abs();
    let unit_err = grid
        .directions()
        .iter()
        .map(|d| ((d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt() - 1.0).abs())
        .fold(0.0, f64::max);
    ensure(
        grid.len() == 648 && sum_err <= 1e-9 && unit_err <= 1e-12,
        format!("|Σω − 4π| = {sum_err:.2e}, max ||d| − 1| = {unit_err:.2e}"),
    )
}

fn env_fit_round_trip() -> Verdict {
    let t = Instant::now();
    let mut worst = 0.0f64;
    for (seed, weighting) in [(3, Weighting::LiteralSum), (4, Weighting::SolidAngle)] {
        let normal = sphere_normals(64);
        let mut r = rng(seed);
        let tint = [r.gen_range(0.3..0.9), r.gen_range(0.3..0.9), r.gen_range(0.3..0.9)];
        let albedo = AlbedoMap::constant(64, 64, tint).unwrap();
        let env = indoor_environment(18, 36, seed).map_err(|e| e.to_string())?;
        let image = shade_direct(&albedo, &normal, &env, weighting).map_err(|e| e.to_string())?;
        let fit = fit_env_least_squares(&image, &albedo, &normal, weighting).map_err(|e| e.to_string())?;
        let again = shade_direct(&albedo, &normal, &fit.env, weighting).map_err(|e| e.to_string())?;
        let (mut sum, mut n) = (0.0, 0);
        for ((y, x), &v) in normal.valid().indexed_iter() {
            if v {
                for k in 0..3 {
                    sum += (again.pixels()[[y, x, k]] - image.pixels()[[y, x, k]]).abs();
                    n += 1;
                }
            }
        }
        worst = worst.max(sum / n as f64);
    }
    let secs = t.elapsed().as_secs_f64();
    ensure(worst < 1e-5 && secs < 30.0, format!("masked MAD {worst:.2e} (both weightings), {secs:.2}s"))
}

fn brute_whdr(albedo: &AlbedoMap, judgments: &[ReflectanceJudgment], delta: f64, radius: usize, floor: f64) -> f64 {
    let (h, w) = (albedo.height(), albedo.width());
    let refl = |p: [f64; 2]| {
        let cx = ((p[0] * w as f64) as usize).min(w - 1) as isize;
        let cy = ((p[1] * h as f64) as usize).min(h - 1) as isize;
        let (mut s, mut n) = (0.0, 0);
        for y in cy - radius as isize..=cy + radius as isize {
            for x in cx - radius as isize..=cx + radius as isize {
                if y >= 0 && x >= 0 && y < h as isize && x < w as isize {
                    let px = albedo.pixels();
                    s += 0.299 * px[[y as usize, x as usize, 0]]
                        + 0.587 * px[[y as usize, x as usize, 1]]
                        + 0.114 * px[[y as usize, x as usize, 2]];
                    n += 1;
                }
            }
        }
        f64::max(s / n as f64, floor)
    };
    let (mut wrong, mut total) = (0.0, 0.0);
    for j in judgments {
        let (r1, r2) = (refl(j.point1), refl(j.point2));
        let predicted = if r2 / r1 > 1.0 + delta {
            Relation::Point1Darker
        } else if r1 / r2 > 1.0 + delta {
            Relation::Point2Darker
        } else {
            Relation::Equal
        };
        total += j.weight;
        if predicted != j.relation {
            wrong += j.weight;
        }
    }
    100.0 * wrong / total
}

fn rotate_about_perpendicular(n: [f64; 3], degrees: f64, rng: &mut impl Rng) -> [f64; 3] {
    // Any unit axis perpendicular to n; rotating n about it turns n by exactly the angle.
    let a = random_unit(rng);
    let d = a[0] * n[0] + a[1] * n[1] + a[2] * n[2];
    let k = unit([a[0] - d * n[0], a[1] - d * n[1], a[2] - d * n[2]]);
    let kxn = [k[1] * n[2] - k[2] * n[1], k[2] * n[0] - k[0] * n[2], k[0] * n[1] - k[1] * n[0]];
    let (s, c) = degrees.to_radians().sin_cos();
    [c * n[0] + s * kxn[0], c * n[1] + s * kxn[1], c * n[2] + s * kxn[2]]
}

fn metric_oracles() -> Verdict {
    let mut r = rng(5);
    let mut notes = Vec::new();
    let mut worst = 0.0f64;
    let mut track = |name: &str, got: f64, want: f64| {
        let e = (got - want).abs();
        worst = worst.max(e);
        if e > 1e-6 {
            notes.push(format!("{name}: {got} vs {want}"));
        }
    };

    // Four gray quadrants; LUMA sums to one so luminance equals the gray level.
    let quad = Array3::from_shape_fn((16, 16, 3), |(y, x, _)| [[0.2, 0.8], [0.5, 0.52]][y / 8][x / 8]);
    let albedo = AlbedoMap::new(quad).unwrap();
    let j = |p1: [f64; 2], p2: [f64; 2], relation, weight| ReflectanceJudgment { point1: p1, point2: p2, relation, weight };
    let (tl, tr, bl, br) = ([0.25, 0.25], [0.75, 0.25], [0.25, 0.75], [0.75, 0.75]);
    // Two agreeing judgments (weights 0.3 + 0.7) and two disagreeing (0.6 + 0.4).
    let half = vec![
        j(tl, tr, Relation::Point1Darker, 0.3),
        j(bl, br, Relation::Equal, 0.7),
        j(tr, bl, Relation::Point1Darker, 0.6),
        j(tl, br, Relation::Equal, 0.4),
    ];
    let got = whdr(&albedo, &half, 0.1, 1, 1e-4).map_err(|e| e.to_string())?;
    track("whdr 50% case", got, 50.0);
    track("whdr 50% case (enumeration)", got, brute_whdr(&albedo, &half, 0.1, 1, 1e-4));
    for radius in [0, 1, 2] {
        let a = random_albedo(&mut r, 12, 10);
        let js: Vec<_> = (0..60)
            .map(|_| {
                j(
                    [r.gen_range(0.0..=1.0), r.gen_range(0.0..=1.0)],
                    [r.gen_range(0.0..=1.0), r.gen_range(0.0..=1.0)],
                    [Relation::Point1Darker, Relation::Point2Darker, Relation::Equal][r.gen_range(0..3)],
                    r.gen_range(0.0..1.0),
                )
            })
            .collect();
        let got = whdr(&a, &js, 0.1, radius, 1e-4).map_err(|e| e.to_string())?;
        track("whdr random", got, brute_whdr(&a, &js, 0.1, radius, 1e-4));
    }

    // Every normal turned by exactly 10 degrees.
    let gt = random_normals(&mut r, 20, 20, 0.0);
    let mut rotated = Array3::zeros((20, 20, 3));
    for y in 0..20 {
        for x in 0..20 {
            let v = rotate_about_perpendicular(gt.at(y, x), 10.0, &mut r);
            for c in 0..3 {
                rotated[[y, x, c]] = v[c];
            }
        }
    }
    let pred = NormalMap::new(rotated, Array2::from_elem((20, 20), true)).unwrap();
    track("angular 10° rotation", median_angular_error(&pred, &gt).map_err(|e| e.to_string())?, 10.0);
    for (h, w) in [(9, 7), (8, 8)] {
        let a = random_normals(&mut r, h, w, 0.2);
        let b = random_normals(&mut r, h, w, 0.2);
        let mut angles = Vec::new();
        for y in 0..h {
            for x in 0..w {
                if a.valid()[[y, x]] && b.valid()[[y, x]] {
                    let (p, q) = (a.at(y, x), b.at(y, x));
                    let dot = p[0] * q[0] + p[1] * q[1] + p[2] * q[2];
                    angles.push(dot.clamp(-1.0, 1.0).acos() * 180.0 / PI);
                }
            }
        }
        angles.sort_by(|x, y| x.partial_cmp(y).unwrap());
        let m = angles.len();
        let want = if m % 2 == 1 { angles[m / 2] } else { (angles[m / 2 - 1] + angles[m / 2]) / 2.0 };
        track("angular random", median_angular_error(&a, &b).map_err(|e| e.to_string())?, want);
    }

    let p = Array3::from_shape_fn((7, 9, 3), |_| r.gen_range(-1.0f64..1.0));
    let g = Array3::from_shape_fn((7, 9, 3), |_| r.gen_range(-1.0f64..1.0));
    let mask = Array2::from_shape_fn((7, 9), |_| r.gen_bool(0.6));
    let (mut sq, mut ab, mut n) = (0.0, 0.0, 0.0);
    for y in 0..7 {
        for x in 0..9 {
            if mask[[y, x]] {
                for k in 0..3 {
                    let d = p[[y, x, k]] - g[[y, x, k]];
                    sq += d * d;
                    ab += d.abs();
                    n += 1.0;
                }
            }
        }
    }
    let (rmse, mad) = rmse_mad(&p, &g, &mask).map_err(|e| e.to_string())?;
    track("rmse", rmse, (sq / n).sqrt());
    track("mad", mad, ab / n);

    let (rows, cols) = (18, 36);
    let e1 = random_env(&mut r, rows, cols);
    let e2 = random_env(&mut r, rows, cols);
    let (mut num, mut den) = (0.0, 0.0);
    for row in 0..rows {
        let omega = ((PI * row as f64 / rows as f64).cos() - (PI * (row + 1) as f64 / rows as f64).cos()) * 2.0 * PI
            / cols as f64;
        for col in 0..cols {
            for k in 0..3 {
                num += omega * (e1.radiance()[[row, col, k]] - e2.radiance()[[row, col, k]]).abs();
            }
            den += 3.0 * omega;
        }
    }
    track("env map error", env_map_error(&e1, &e2).map_err(|e| e.to_string())?, num / den);

    ensure(notes.is_empty(), if notes.is_empty() { format!("max deviation {worst:.2e}") } else { notes.join("; ") })
}

fn loss_constants() -> Verdict {
    let cfg = LossConfig::default();
    let ones: BTreeMap<Term, f64> =
        [Term::Albedo, Term::Normal, Term::Lighting, Term::Recon, Term::Weak].into_iter().map(|t| (t, 1.0)).collect();
    let iiw = composite_real_loss(&ones, RealMode::Iiw, &cfg).map_err(|e| e.to_string())?;
    let nyu = composite_real_loss(&ones, RealMode::Nyu, &cfg).map_err(|e| e.to_string())?;
    ensure(iiw == 32.1 && nyu == 21.25, format!("IIW {iiw:?}, NYU {nyu:?}"))
}

fn architecture_contracts() -> Verdict {
    let cfg = ModelConfig::full();
    let dev = Device::Cpu;
    let irn = Irn::new(&cfg, 7, DType::F32, &dev).map_err(|e| e.to_string())?;
    let image = Tensor::rand(0f32, 1f32, (1, 3, 240, 320), &dev).unwrap();
    let out = irn.forward(&image, Mode::Eval).map_err(|e| e.to_string())?;
    let norms = out.normal.sqr().unwrap().sum(1).unwrap().sqrt().unwrap();
    let norms: Vec<f32> = norms.flatten_all().unwrap().to_vec1().unwrap();
    let unit_err = norms.iter().map(|v| (v - 1.0).abs()).fold(0.0f32, f32::max);
    let rar = Rar::new(&cfg, 7, DType::F32, &dev).map_err(|e| e.to_string())?;
    let code = rar.code(&image, Mode::Eval).map_err(|e| e.to_string())?;
    let f = out.features.dims().to_vec();
    let detail = format!(
        "albedo {:?}, normal {:?} (max ||n| − 1| {unit_err:.1e}), env {:?}, latent {:?}, features {:?}",
        out.albedo.dims(),
        out.normal.dims(),
        out.env.dims(),
        code.dims(),
        f
    );
    ensure(
        out.albedo.dims() == [1, 3, 240, 320]
            && out.normal.dims() == [1, 3, 240, 320]
            && unit_err < 1e-4
            && out.env.dims() == [1, 3, 18, 36]
            && code.dims() == [1, 300]
            && LATENT_DIM == 300
            && f.len() == 4
            && f[2..] == [60, 80],
        detail,
    )
}

const SMOKE_STAGES: [&str; 5] = ["env_a", "env_b", "irn_syn", "rar_syn", "irn_real_iiw"];

fn smoke_config(name: &str, run_dir: &Path) -> TrainConfig {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/smoke").join(format!("{name}.toml"));
    let mut cfg = TrainConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    cfg.stage.run_dir = run_dir.to_path_buf();
    cfg
}

struct Smoke {
    run_dir: PathBuf,
    reports: Vec<StageReport>,
    rar_hash_before: String,
    rar_hash_after: String,
    rar_params_before: String,
    rar_params_after: String,
    secs: f64,
}

fn smoke_training(run_dir: &Path) -> Result<Smoke, String> {
    let t = Instant::now();
    let mut reports = Vec::new();
    let mut hashes = Vec::new();
    for name in SMOKE_STAGES {
        let cfg = smoke_config(name, run_dir);
        if cfg.stage.name.real_mode().is_some() {
            hashes.push(rar_fingerprint(run_dir)?);
        }
        let rep = run_stage(&cfg).map_err(|e| format!("{name}: {e}"))?;
        eprintln!(
            "  {name}: {} steps, loss {:.5} -> {:.5} ({:.1}% reduction) in {:.0}s",
            rep.steps,
            rep.initial_loss,
            rep.final_loss,
            100.0 * rep.reduction,
            rep.elapsed_secs
        );
        reports.push(rep);
    }
    let secs = t.elapsed().as_secs_f64();
    hashes.push(rar_fingerprint(run_dir)?);
    let [(fb, pb), (fa, pa)] = <[(String, String); 2]>::try_from(hashes).unwrap();
    Ok(Smoke {
        run_dir: run_dir.to_path_buf(),
        reports,
        rar_hash_before: fb,
        rar_hash_after: fa,
        rar_params_before: pb,
        rar_params_after: pa,
        secs,
    })
}

/// File hash and parameter hash of the newest residual renderer checkpoint.
fn rar_fingerprint(run_dir: &Path) -> Result<(String, String), String> {
    let ckpt = latest_checkpoint(&run_dir.join(Stage::RarSyn.name())).ok_or("no residual renderer checkpoint")?;
    let file = file_hash(&ckpt).map_err(|e| e.to_string())?;
    let rar = load_rar(&ckpt).map_err(|e| e.to_string())?;
    Ok((file, store_hash(rar.store()).map_err(|e| e.to_string())?))
}

fn smoke_verdict(s: &Smoke) -> Verdict {
    let parts: Vec<String> =
        s.reports.iter().map(|r| format!("{} {:.1}%/{} steps", r.stage, 100.0 * r.reduction, r.steps)).collect();
    ensure(
        s.reports.len() == 5 && s.reports.iter().all(|r| r.reduction >= 0.9) && s.secs < 1800.0,
        format!("{}; total {:.0}s", parts.join(", "), s.secs),
    )
}

fn rar_ablation(s: &Smoke) -> Verdict {
    let rep = s.reports.iter().find(|r| r.stage == Stage::RarSyn).ok_or("no residual renderer stage")?;
    let per = |name: &str| -> Result<Vec<f64>, String> {
        rep.metric(name).and_then(|m| m.per_sample.clone()).ok_or(format!("missing metric {name}"))
    };
    let (with, without, magnitude) = (per("recon_with_rar")?, per("recon_direct_only")?, per("residual_magnitude")?);

    // Classify fixtures by whether the image is exactly the direct render of
    // its ground truth.
    let samples = load_samples(&smoke_config("rar_syn", &s.run_dir)).map_err(|e| e.to_string())?;
    let (mut shadowed, mut clean) = (Vec::new(), Vec::new());
    for (i, id) in rep.sample_ids.iter().enumerate() {
        let s = samples.iter().find(|s| &s.id == id).ok_or(format!("unknown sample {id}"))?;
        let direct = shade_direct(
            s.albedo_gt.as_ref().unwrap(),
            s.normal_gt.as_ref().unwrap(),
            s.env_gt.as_ref().unwrap(),
            Weighting::LiteralSum,
        )
        .map_err(|e| e.to_string())?;
        if max_abs_diff(direct.pixels(), s.image.pixels()) < 1e-12 {
            clean.push(i);
        } else {
            shadowed.push(i);
        }
    }
    if shadowed.is_empty() || clean.is_empty() {
        return Err(format!("{} shadowed and {} clean fixtures", shadowed.len(), clean.len()));
    }
    let mean = |v: &[f64], idx: &[usize]| idx.iter().map(|&i| v[i]).sum::<f64>() / idx.len() as f64;
    let (w, d, m) = (mean(&with, &shadowed), mean(&without, &shadowed), mean(&magnitude, &clean));
    ensure(
        w < d && m < 0.02,
        format!(
            "shadowed fixtures ({}): L1 {w:.5} with residual vs {d:.5} direct only; clean fixtures ({}): mean |residual| {m:.5}",
            shadowed.len(),
            clean.len()
        ),
    )
}

fn copy_dir(from: &Path, to: &Path) -> std::io::Result<()> {
    std::fs::create_dir_all(to)?;
    for e in std::fs::read_dir(from)? {
        let e = e?;
        let target = to.join(e.file_name());
        if e.file_type()?.is_dir() {
            copy_dir(&e.path(), &target)?;
        } else {
            std::fs::copy(e.path(), target)?;
        }
    }
    Ok(())
}

/// Runs `name` for 101 steps twice, each from a copy of the finished smoke
/// run without the stage's own output, and returns both step-100 losses.
fn rerun_step_100(s: &Smoke, name: &str, scratch: &Path) -> Result<(f64, f64), String> {
    let mut out = Vec::new();
    for attempt in 0..2 {
        let dir = scratch.join(format!("{name}-{attempt}"));
        copy_dir(&s.run_dir, &dir).map_err(|e| e.to_string())?;
        let mut cfg = smoke_config(name, &dir);
        std::fs::remove_dir_all(cfg.stage_dir(cfg.stage.name)).map_err(|e| e.to_string())?;
        cfg.stage.steps = 101;
        let rep = run_stage(&cfg).map_err(|e| format!("{name}: {e}"))?;
        out.push(rep.losses[100]);
        std::fs::remove_dir_all(&dir).ok();
    }
    Ok((out[0], out[1]))
}

fn freeze_and_reproducibility(s: &Smoke, scratch: &Path) -> Verdict {
    let frozen = s.rar_hash_before == s.rar_hash_after && s.rar_params_before == s.rar_params_after;
    let mut notes = vec![format!(
        "residual renderer {} across fine-tuning",
        if frozen { "unchanged" } else { "CHANGED" }
    )];
    let mut ok = frozen;
    for name in SMOKE_STAGES {
        let (a, b) = rerun_step_100(s, name, scratch)?;
        let same = a.to_bits() == b.to_bits();
        ok &= same;
        notes.push(format!("{name} step-100 {a:.6e}{}", if same { "" } else { " MISMATCH" }));
    }
    ensure(ok, notes.join("; "))
}

fn main() {
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let mut failed = 0;
    let mut report = |label: &str, v: Verdict| {
        match &v {
            Ok(d) => println!("PASS {label}: {d}"),
            Err(d) => {
                failed += 1;
                println!("FAIL {label}: {d}")
            }
        }
    };
    let guarded = |f: &dyn Fn() -> Verdict| -> Verdict {
        std::panic::catch_unwind(std::panic::AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or(p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
        })
    };

    report("1 shading oracle", guarded(&shading_oracle));
    report("2 gradient suite", guarded(&gradient_suite));
    report("3 direction grid", guarded(&grid_correctness));
    report("4 lighting fit round trip", guarded(&env_fit_round_trip));
    report("5 metric oracles", guarded(&metric_oracles));
    report("6 loss constants", guarded(&loss_constants));
    report("7 architecture contracts", guarded(&architecture_contracts));

    let run = tempfile::tempdir().expect("temp dir");
    let smoke = std::panic::catch_unwind(|| smoke_training(&run.path().join("smoke")))
        .unwrap_or_else(|_| Err("smoke training panicked".into()));
    match smoke {
        Ok(s) => {
            report("8 smoke training", smoke_verdict(&s));
            report("9 residual renderer ablation", guarded(&|| rar_ablation(&s)));
            let scratch = run.path().join("reruns");
            report("10 freeze and reproducibility", guarded(&|| freeze_and_reproducibility(&s, &scratch)));
        }
        Err(e) => {
            for label in ["8 smoke training", "9 residual renderer ablation", "10 freeze and reproducibility"] {
                report(label, Err(e.clone()));
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
