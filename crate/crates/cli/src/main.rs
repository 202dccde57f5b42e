use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::{info, warn};
use ndarray::{Array2, Array3};

use invrender::metrics::MetricReport;
use invrender::render::{fit_env_least_squares_grid, render_probe, shade_direct, Weighting};
use invrender::scene::codec::{
    read_encoded_normals, read_linear, read_mask, resize_bilinear, write_hdr, write_linear_png16,
    write_mask_png, write_normals_png16, write_srgb_png,
};
use invrender::scene::{
    analytic_fixture_set, judgments_to_json, load_dataset_manifest, load_sample_with,
    DatasetRecord, FixtureOptions, Split,
};
use invrender::train::{
    eval_report_json, evaluate, latest_checkpoint, load_irn, load_rar, run_stage, Metric, Stage,
    TrainConfig,
};
use invrender::{AlbedoMap, EnvironmentMap, Error, ImageMap, NormalMap, Result};

/// Single-image inverse rendering: decomposition, direct rendering,
/// lighting fits, staged training and evaluation.
#[derive(Parser, Debug)]
#[command(name = "invrender", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Seed for every random choice the command makes.
    #[arg(long)]
    seed: Option<u64>,
    /// Training configuration (TOML, or JSON by extension).
    #[arg(long)]
    config: Option<PathBuf>,
}

impl Common {
    fn load(&self) -> Result<TrainConfig> {
        match &self.config {
            Some(p) => TrainConfig::load(p),
            None => Ok(TrainConfig::default()),
        }
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Decompose an image into albedo, normals, lighting and residual.
    ///
    /// Writes albedo.png, normal.png (16-bit, (n+1)/2), env.hdr, direct.png,
    /// residual.png (16-bit, (r+1)/2) and recon.png (direct plus residual,
    /// clipped). Color PNGs are 8-bit with gamma 2.2.
    Decompose {
        #[arg(long)]
        image: PathBuf,
        /// Decomposition checkpoint (irn_syn or a real-data stage).
        #[arg(long)]
        checkpoint: PathBuf,
        /// Residual renderer checkpoint; defaults to the newest one in the
        /// run's rar_syn directory.
        #[arg(long)]
        rar: Option<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long)]
        weighting: Option<Weighting>,
        #[command(flatten)]
        common: Common,
    },
    /// Direct-render albedo and normals under an environment map.
    Render {
        #[arg(long)]
        albedo: PathBuf,
        #[arg(long)]
        normal: PathBuf,
        #[arg(long)]
        env: PathBuf,
        /// Valid-pixel mask; other pixels render black.
        #[arg(long)]
        mask: Option<PathBuf>,
        /// Output; `.hdr` keeps linear radiance, otherwise 8-bit gamma 2.2.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        weighting: Option<Weighting>,
        #[command(flatten)]
        common: Common,
    },
    /// Render a white diffuse sphere under an environment map.
    Probe {
        #[arg(long)]
        env: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 64)]
        resolution: usize,
        #[arg(long)]
        weighting: Option<Weighting>,
        #[command(flatten)]
        common: Common,
    },
    /// Nonnegative least-squares environment fit for known albedo and normals.
    ///
    /// Prints the fit residuals as JSON.
    FitEnv {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        albedo: PathBuf,
        #[arg(long)]
        normal: PathBuf,
        #[arg(long)]
        mask: Option<PathBuf>,
        /// Output environment map (`.hdr`).
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 18)]
        rows: usize,
        #[arg(long, default_value_t = 36)]
        cols: usize,
        #[arg(long)]
        weighting: Option<Weighting>,
        #[command(flatten)]
        common: Common,
    },
    /// Run one training stage.
    Train {
        #[arg(long)]
        stage: Stage,
        /// Override the configured step count.
        #[arg(long)]
        steps: Option<usize>,
        /// Override the configured run directory.
        #[arg(long)]
        run_dir: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Evaluate a decomposition checkpoint on a dataset split.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// JSON-lines dataset manifest.
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, default_value = "test")]
        split: Split,
        /// Comma-separated: whdr, angular, albedo, env, recon.
        #[arg(long, value_delimiter = ',', required = true)]
        metrics: Vec<Metric>,
        /// Report file; the report is printed either way.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Per-sample CSV.
        #[arg(long)]
        per_sample: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Write seeded analytic room scenes as a dataset with a manifest.
    GenAnalytic {
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 8)]
        count: usize,
        #[arg(long)]
        height: Option<usize>,
        #[arg(long)]
        width: Option<usize>,
        /// Cast shadows into every other scene.
        #[arg(long)]
        shadows: bool,
        /// Reflectance judgments per scene.
        #[arg(long, default_value_t = 0)]
        judgments: usize,
        #[arg(long, default_value = "train")]
        split: Split,
        #[command(flatten)]
        common: Common,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Decompose { image, checkpoint, rar, out_dir, weighting, common } => {
            let cfg = common.load()?;
            decompose(&image, &checkpoint, rar.as_deref(), &out_dir, weighting.unwrap_or(cfg.data.weighting))
        }
        Command::Render { albedo, normal, env, mask, out, weighting, common } => {
            let cfg = common.load()?;
            let maps = Maps::load(&albedo, &normal, &env, mask.as_deref())?;
            write_color(&out, maps.render(weighting.unwrap_or(cfg.data.weighting))?.pixels())
        }
        Command::Probe { env, out, resolution, weighting, common } => {
            let cfg = common.load()?;
            let env = read_env(&env)?;
            let probe = render_probe(&env, resolution, weighting.unwrap_or(cfg.data.weighting))?;
            write_color(&out, probe.image.pixels())
        }
        Command::FitEnv { image, albedo, normal, mask, out, rows, cols, weighting, common } => {
            let cfg = common.load()?;
            let image = ImageMap::new(read_linear(&image)?)?;
            let albedo = AlbedoMap::clamped(read_linear(&albedo)?)?;
            let normal = read_normals(&normal, mask.as_deref())?;
            let fit = fit_env_least_squares_grid(
                &image,
                &albedo,
                &normal,
                weighting.unwrap_or(cfg.data.weighting),
                rows,
                cols,
            )?;
            write_hdr(&out, fit.env.radiance())?;
            println!(
                "{}",
                serde_json::json!({
                    "residual_rms": fit.residual_rms,
                    "residual_mad": fit.residual_mad,
                    "zero_env_rms": fit.zero_env_rms,
                    "uncovered_cells": fit.uncovered_count(),
                })
            );
            Ok(())
        }
        Command::Train { stage, steps, run_dir, common } => {
            let mut cfg = common.load()?;
            cfg.stage.name = stage;
            if let Some(s) = common.seed {
                cfg.stage.seed = s;
            }
            if let Some(s) = steps {
                cfg.stage.steps = s;
            }
            if let Some(d) = run_dir {
                cfg.stage.run_dir = d;
            }
            let report = run_stage(&cfg)?;
            println!(
                "{}",
                serde_json::json!({
                    "stage": report.stage,
                    "steps": report.steps,
                    "initial_loss": report.initial_loss,
                    "final_loss": report.final_loss,
                    "reduction": report.reduction,
                    "checkpoint": report.checkpoint,
                    "metrics": report.metrics.iter().map(|m| (m.name.clone(), m.value)).collect::<std::collections::BTreeMap<_, _>>(),
                })
            );
            Ok(())
        }
        Command::Eval { checkpoint, dataset, split, metrics, out, per_sample, common } => {
            let cfg = common.load()?;
            eval(&cfg, &checkpoint, &dataset, split, &metrics, out.as_deref(), per_sample.as_deref())
        }
        Command::GenAnalytic { out_dir, count, height, width, shadows, judgments, split, common } => {
            let cfg = common.load()?;
            let options = FixtureOptions {
                height: height.unwrap_or(cfg.model.height),
                width: width.unwrap_or(cfg.model.width),
                env_rows: cfg.model.env_rows,
                env_cols: cfg.model.env_cols,
                shadows,
                judgments,
                delta: cfg.loss.delta,
            };
            gen_analytic(&out_dir, count, common.seed.unwrap_or(0), &options, split, cfg.data.weighting)
        }
    }
}

/// Albedo, normals and lighting as read from disk.
struct Maps {
    albedo: AlbedoMap,
    normal: NormalMap,
    env: EnvironmentMap,
}

impl Maps {
    fn load(albedo: &Path, normal: &Path, env: &Path, mask: Option<&Path>) -> Result<Self> {
        Ok(Self {
            albedo: AlbedoMap::clamped(read_linear(albedo)?)?,
            normal: read_normals(normal, mask)?,
            env: read_env(env)?,
        })
    }

    fn render(&self, weighting: Weighting) -> Result<ImageMap> {
        shade_direct(&self.albedo, &self.normal, &self.env, weighting)
    }
}

fn read_normals(path: &Path, mask: Option<&Path>) -> Result<NormalMap> {
    let vectors = read_encoded_normals(path)?;
    let (h, w, _) = vectors.dim();
    let valid = match mask {
        Some(m) => {
            let m = read_mask(m)?;
            if m.dim() != (h, w) {
                return Err(Error::Shape(format!(
                    "mask is {:?}, normals are {:?}",
                    m.dim(),
                    (h, w)
                )));
            }
            m
        }
        None => Array2::from_elem((h, w), true),
    };
    NormalMap::normalized(vectors, valid)
}

fn read_env(path: &Path) -> Result<EnvironmentMap> {
    EnvironmentMap::new(read_linear(path)?.mapv(|v| v.max(0.0)))
}

/// `.hdr` keeps linear values; anything else is 8-bit with gamma 2.2.
fn write_color(path: &Path, data: &Array3<f64>) -> Result<()> {
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("hdr")) {
        write_hdr(path, data)
    } else {
        write_srgb_png(path, data)
    }
}

fn decompose(image: &Path, checkpoint: &Path, rar: Option<&Path>, out_dir: &Path, weighting: Weighting) -> Result<()> {
    let irn = load_irn(checkpoint)?;
    let model = irn.config().clone();
    let input = ImageMap::new(resize_bilinear(&read_linear(image)?, model.height, model.width))?;
    let d = irn.decompose(&input)?;
    let direct = shade_direct(&d.albedo, &d.normal, &d.env, weighting)?;

    let rar_path = match rar {
        Some(p) => Some(p.to_path_buf()),
        None => checkpoint
            .parent()
            .and_then(Path::parent)
            .and_then(|run| latest_checkpoint(&run.join(Stage::RarSyn.name()))),
    };
    let residual = match rar_path {
        Some(p) => {
            info!("residual renderer {}", p.display());
            load_rar(&p)?.residual(&input, &d.albedo, &d.normal)?.pixels().clone()
        }
        None => {
            warn!("no residual renderer checkpoint found; residual is zero");
            Array3::zeros(direct.pixels().dim())
        }
    };
    let recon = (direct.pixels() + &residual).mapv(|v| v.clamp(0.0, 1.0));

    std::fs::create_dir_all(out_dir).map_err(|e| Error::Io {
        path: out_dir.into(),
        source: e,
    })?;
    write_srgb_png(&out_dir.join("albedo.png"), d.albedo.pixels())?;
    write_normals_png16(&out_dir.join("normal.png"), d.normal.vectors(), d.normal.valid())?;
    write_hdr(&out_dir.join("env.hdr"), d.env.radiance())?;
    write_srgb_png(&out_dir.join("direct.png"), direct.pixels())?;
    write_linear_png16(&out_dir.join("residual.png"), &residual.mapv(|r| (r + 1.0) / 2.0))?;
    write_srgb_png(&out_dir.join("recon.png"), &recon)?;
    Ok(())
}

fn eval(
    cfg: &TrainConfig,
    checkpoint: &Path,
    dataset: &Path,
    split: Split,
    metrics: &[Metric],
    out: Option<&Path>,
    per_sample: Option<&Path>,
) -> Result<()> {
    // Reads the sidecar first so a missing checkpoint is reported before data.
    let model = load_irn(checkpoint)?.config().clone();
    let index = load_dataset_manifest(dataset)?;
    let samples = index
        .split(split)
        .map(|r| load_sample_with(&index, &r.id, (model.height, model.width)))
        .collect::<Result<Vec<_>>>()?;
    if samples.is_empty() {
        return Err(Error::Validation(format!("{}: split {split:?} is empty", dataset.display())));
    }
    let reports = evaluate(checkpoint, &samples, metrics, &cfg.loss, cfg.data.weighting)?;
    let json = eval_report_json(&reports, samples.len(), &cfg.hash());
    let text = serde_json::to_string_pretty(&json)?;
    println!("{text}");
    if let Some(p) = out {
        std::fs::write(p, format!("{text}\n")).map_err(|e| Error::Io { path: p.into(), source: e })?;
    }
    if let Some(p) = per_sample {
        std::fs::write(p, per_sample_csv(&reports)).map_err(|e| Error::Io { path: p.into(), source: e })?;
    }
    Ok(())
}

/// One row per metric and sample index that contributed to it.
fn per_sample_csv(reports: &[MetricReport]) -> String {
    let mut s = String::from("metric,index,value\n");
    for r in reports {
        for (i, v) in r.per_sample.iter().flatten().enumerate() {
            s.push_str(&format!("{},{i},{v}\n", r.name));
        }
    }
    s
}

/// Writes each scene to `<out>/<id>/` and a `manifest.jsonl` indexing them.
/// Shadow-free images are re-rendered from the maps as stored, so `render`
/// on those files reproduces them exactly.
fn gen_analytic(out: &Path, count: usize, seed: u64, options: &FixtureOptions, split: Split, weighting: Weighting) -> Result<()> {
    let samples = analytic_fixture_set(count, seed, options)?;
    let mut manifest = String::new();
    for (i, s) in samples.iter().enumerate() {
        let dir = out.join(&s.id);
        let (a, n, e) = (s.albedo_gt.as_ref(), s.normal_gt.as_ref(), s.env_gt.as_ref());
        let (Some(a), Some(n), Some(e)) = (a, n, e) else {
            return Err(Error::Validation(format!("{}: analytic scene lacks ground truth", s.id)));
        };
        let file = |name: &str| dir.join(name);
        write_srgb_png(&file("albedo.png"), a.pixels())?;
        write_normals_png16(&file("normal.png"), n.vectors(), n.valid())?;
        write_hdr(&file("env.hdr"), e.radiance())?;
        write_mask_png(&file("mask.png"), &s.mask)?;
        let shadowed = options.shadows && i % 2 == 1;
        let image = if shadowed {
            s.image.clone()
        } else {
            Maps::load(&file("albedo.png"), &file("normal.png"), &file("env.hdr"), Some(&file("mask.png")))?
                .render(weighting)?
        };
        write_srgb_png(&file("image.png"), image.pixels())?;
        let judgments = match &s.judgments {
            Some(j) => {
                let p = file("judgments.json");
                std::fs::write(&p, judgments_to_json(j)).map_err(|e| Error::Io { path: p.clone(), source: e })?;
                Some(p)
            }
            None => None,
        };
        let record = DatasetRecord {
            id: s.id.clone(),
            split,
            image: file("image.png"),
            albedo: Some(file("albedo.png")),
            normal: Some(file("normal.png")),
            env: Some(file("env.hdr")),
            mask: Some(file("mask.png")),
            judgments,
            missing: Vec::new(),
        };
        manifest.push_str(&record.to_line(out));
        manifest.push('\n');
    }
    let p = out.join("manifest.jsonl");
    std::fs::write(&p, manifest).map_err(|e| Error::Io { path: p.clone(), source: e })?;
    info!("wrote {count} scenes to {}", out.display());
    Ok(())
}
