use std::collections::{BTreeMap, HashMap};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use candle_core::{Device, Tensor};
use log::{info, warn};
use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{Stage, TrainConfig};
use super::data::{env_tensor, load_env_bank, load_samples, Batch, Item, Schedule, DTYPE};
use super::eval::{evaluate_irn, Metric};
use crate::convert::tensor_to_array;
use crate::error::{Error, Result};
use crate::loss::{
    composite_real_loss_t, masked_l1, mean_l1, normal_supervision_loss_t, pseudo_supervision_loss_t,
    reconstruction_loss_t, scalar, supervised_loss_t, whdr_hinge_loss_t, MapsRef, RealMode, Term,
};
use crate::metrics::{fit_baseline_mad, MetricReport};
use crate::nn::{
    load_store, save_store, store_hash, Adam, EnvEstimator, Irn, Mode, ParamStore, Rar, Sidecar,
};
use crate::render::TensorRenderer;
use crate::scene::{EnvironmentMap, SceneSample};

/// Outcome of one stage run, also written to `<stage dir>/report.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub stage: Stage,
    pub steps: usize,
    /// Loss of the first minibatch, before any update.
    pub initial_loss: f64,
    /// Mean loss of the last 20 steps.
    pub final_loss: f64,
    /// `1 - final / initial`.
    pub reduction: f64,
    pub losses: Vec<f64>,
    pub checkpoint: PathBuf,
    pub config_hash: String,
    pub elapsed_secs: f64,
    /// Samples left out for missing inputs.
    pub skipped: Vec<String>,
    /// Ids in the order of every metric's per-sample values.
    pub sample_ids: Vec<String>,
    pub metrics: Vec<MetricReport>,
}

impl StageReport {
    pub fn metric(&self, name: &str) -> Option<&MetricReport> {
        self.metrics.iter().find(|m| m.name == name)
    }
}

const FINAL_WINDOW: usize = 20;
const ENV_CACHE: &str = "env_cache.safetensors";
const PSEUDO_CACHE: &str = "pseudo.safetensors";

pub fn checkpoint_path(dir: &Path, step: usize) -> PathBuf {
    dir.join(format!("step-{step:06}.safetensors"))
}

/// `(step, path)` of every checkpoint in `dir`, ascending.
pub fn list_checkpoints(dir: &Path) -> Vec<(usize, PathBuf)> {
    let Ok(entries) = std::fs::read_dir(dir) else {
        return Vec::new();
    };
    let mut out: Vec<_> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter_map(|p| {
            let name = p.file_name()?.to_str()?;
            let step = name.strip_prefix("step-")?.strip_suffix(".safetensors")?.parse().ok()?;
            Some((step, p))
        })
        .collect();
    out.sort();
    out
}

pub fn latest_checkpoint(dir: &Path) -> Option<PathBuf> {
    list_checkpoints(dir).pop().map(|(_, p)| p)
}

fn require_checkpoint(cfg: &TrainConfig, stage: Stage) -> Result<PathBuf> {
    let dir = cfg.stage_dir(stage);
    latest_checkpoint(&dir).ok_or_else(|| {
        Error::Prerequisite(format!(
            "stage {} needs a {stage} checkpoint, none found in {}",
            cfg.stage.name,
            dir.display()
        ))
    })
}

pub fn env_cache_path(cfg: &TrainConfig) -> PathBuf {
    cfg.stage_dir(Stage::EnvB).join(ENV_CACHE)
}

pub fn pseudo_cache_path(cfg: &TrainConfig) -> PathBuf {
    cfg.stage_dir(cfg.stage.name).join(PSEUDO_CACHE)
}

fn meta_path(cache: &Path) -> PathBuf {
    cache.with_extension("json")
}

#[derive(Debug, Serialize, Deserialize)]
struct CacheMeta {
    config_hash: String,
    source: PathBuf,
    ids: Vec<String>,
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_meta(path: &Path) -> Result<CacheMeta> {
    let p = meta_path(path);
    let text = std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Sha256 of a file's bytes.
pub fn file_hash(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Per-sample lighting targets written by the estimator fine-tuning stage.
pub fn load_env_cache(cfg: &TrainConfig) -> Result<HashMap<String, EnvironmentMap>> {
    let path = env_cache_path(cfg);
    if !path.exists() {
        return Err(Error::Prerequisite(format!(
            "stage {} needs the lighting cache {}",
            cfg.stage.name,
            path.display()
        )));
    }
    let tensors = candle_core::safetensors::load(&path, &Device::Cpu)?;
    tensors
        .into_iter()
        .map(|(id, t)| Ok((id, EnvironmentMap::new(tensor_to_array(&t)?)?)))
        .collect()
}

fn sidecar(cfg: &TrainConfig, step: usize) -> Sidecar {
    Sidecar {
        stage: cfg.stage.name.name().into(),
        config_hash: cfg.model.hash(),
        seed: cfg.stage.seed,
        step: step as u64,
        model: Some(cfg.model.clone()),
    }
}

struct LoopOutput {
    losses: Vec<f64>,
    checkpoint: PathBuf,
}

type StepResult = Result<(Tensor, Vec<(String, f64)>)>;

/// Runs `steps` optimizer updates of every trainable tensor in `store`,
/// logging each step as a JSON line and checkpointing on the configured
/// cadence. A non-finite loss saves the current (still finite) parameters
/// and aborts with a numeric error.
fn run_loop(cfg: &TrainConfig, store: &ParamStore, mut step_fn: impl FnMut(usize) -> StepResult) -> Result<LoopOutput> {
    let dir = cfg.stage_dir(cfg.stage.name);
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    for (_, old) in list_checkpoints(&dir) {
        remove_checkpoint(&old)?;
    }
    let log_path = dir.join("log.jsonl");
    let file = std::fs::File::create(&log_path).map_err(|e| Error::io(&log_path, e))?;
    let mut log = std::io::BufWriter::new(file);
    let mut opt = Adam::new(store.trainable(), cfg.optimizer.clone())?;
    let mut losses = Vec::with_capacity(cfg.stage.steps);
    let mut checkpoint = None;
    let save = |step: usize| -> Result<PathBuf> {
        let path = checkpoint_path(&dir, step);
        save_store(store, &path, &sidecar(cfg, step))?;
        let all = list_checkpoints(&dir);
        if all.len() > cfg.stage.keep {
            for (_, old) in &all[..all.len() - cfg.stage.keep] {
                remove_checkpoint(old)?;
            }
        }
        Ok(path)
    };
    for step in 0..cfg.stage.steps {
        opt.set_lr(cfg.optimizer.lr_at(step, cfg.stage.steps));
        let (loss, terms) = step_fn(step)?;
        let value = scalar(&loss)?;
        if !value.is_finite() {
            let saved = save(step)?;
            log.flush().map_err(|e| Error::io(&log_path, e))?;
            return Err(Error::Numeric(format!(
                "{}: loss is {value} at step {step}; last good parameters saved to {}",
                cfg.stage.name,
                saved.display()
            )));
        }
        let grads = loss.backward()?;
        opt.step(&grads)?;
        let line = serde_json::json!({
            "step": step,
            "loss": value,
            "terms": terms.into_iter().collect::<BTreeMap<_, _>>(),
        });
        writeln!(log, "{line}").map_err(|e| Error::io(&log_path, e))?;
        losses.push(value);
        if (step + 1) % cfg.stage.checkpoint_every == 0 || step + 1 == cfg.stage.steps {
            checkpoint = Some(save(step + 1)?);
        }
    }
    log.flush().map_err(|e| Error::io(&log_path, e))?;
    Ok(LoopOutput {
        losses,
        checkpoint: checkpoint.expect("at least one step"),
    })
}

fn remove_checkpoint(path: &Path) -> Result<()> {
    std::fs::remove_file(path).map_err(|e| Error::io(path, e))?;
    let side = crate::nn::sidecar_path(path);
    if side.exists() {
        std::fs::remove_file(&side).map_err(|e| Error::io(&side, e))?;
    }
    Ok(())
}

/// Keeps the samples `keep` accepts; the others are logged and listed.
fn select(samples: &[SceneSample], what: &str, keep: impl Fn(&SceneSample) -> bool) -> (Vec<SceneSample>, Vec<String>) {
    let mut kept = Vec::new();
    let mut skipped = Vec::new();
    for s in samples {
        if keep(s) {
            kept.push(s.clone());
        } else {
            warn!("{}: skipped, missing {what}", s.id);
            skipped.push(s.id.clone());
        }
    }
    (kept, skipped)
}

fn to_items(samples: &[SceneSample], device: &Device) -> Result<Vec<Item>> {
    samples.iter().map(|s| Item::new(s, device)).collect()
}

fn pick<'a>(items: &'a [Item], idx: &[usize]) -> Vec<&'a Item> {
    idx.iter().map(|&i| &items[i]).collect()
}

fn nonempty(samples: &[SceneSample], stage: Stage) -> Result<()> {
    if samples.is_empty() {
        return Err(Error::Validation(format!("{stage}: no usable training sample")));
    }
    Ok(())
}

/// Runs the configured stage end to end. Prerequisite checkpoints and
/// caches are checked before any data is read.
pub fn run_stage(cfg: &TrainConfig) -> Result<StageReport> {
    cfg.validate()?;
    if cfg.stage.steps == 0 {
        return Err(Error::Validation("steps must be positive".into()));
    }
    let stage = cfg.stage.name;
    let mut prereq = BTreeMap::new();
    for &p in stage.prerequisites() {
        prereq.insert(p, require_checkpoint(cfg, p)?);
    }
    if matches!(stage, Stage::IrnSyn | Stage::RarSyn) && !env_cache_path(cfg).exists() {
        return Err(Error::Prerequisite(format!(
            "stage {stage} needs the lighting cache {}",
            env_cache_path(cfg).display()
        )));
    }
    let start = Instant::now();
    let samples = load_samples(cfg)?;
    let device = Device::Cpu;
    let ctx = Ctx {
        cfg,
        device: &device,
        renderer: TensorRenderer::new(
            cfg.model.env_rows,
            cfg.model.env_cols,
            cfg.data.weighting,
            DTYPE,
            &device,
        )?,
    };
    info!("{stage}: {} samples, {} steps", samples.len(), cfg.stage.steps);
    let partial = match stage {
        Stage::EnvA => ctx.env_a(&samples)?,
        Stage::EnvB => ctx.env_b(&samples, &prereq[&Stage::EnvA])?,
        Stage::IrnSyn => ctx.irn_syn(&samples)?,
        Stage::RarSyn => ctx.rar_syn(&samples)?,
        Stage::IrnRealIiw | Stage::IrnRealNyu => {
            ctx.irn_real(&samples, &prereq[&Stage::IrnSyn], &prereq[&Stage::RarSyn])?
        }
    };
    let losses = partial.out.losses;
    let initial = losses[0];
    let tail = &losses[losses.len().saturating_sub(FINAL_WINDOW)..];
    let final_loss = tail.iter().sum::<f64>() / tail.len() as f64;
    let report = StageReport {
        stage,
        steps: cfg.stage.steps,
        initial_loss: initial,
        final_loss,
        reduction: 1.0 - final_loss / initial,
        losses,
        checkpoint: partial.out.checkpoint,
        config_hash: cfg.hash(),
        elapsed_secs: start.elapsed().as_secs_f64(),
        skipped: partial.skipped,
        sample_ids: partial.ids,
        metrics: partial.metrics,
    };
    write_json(&cfg.stage_dir(stage).join("report.json"), &report)?;
    info!(
        "{stage}: loss {:.6} -> {:.6} ({:.1}% lower) in {:.1}s",
        report.initial_loss,
        report.final_loss,
        100.0 * report.reduction,
        report.elapsed_secs
    );
    Ok(report)
}

struct Partial {
    out: LoopOutput,
    skipped: Vec<String>,
    ids: Vec<String>,
    metrics: Vec<MetricReport>,
}

struct Ctx<'a> {
    cfg: &'a TrainConfig,
    device: &'a Device,
    renderer: TensorRenderer,
}

fn has_maps(s: &SceneSample) -> bool {
    s.albedo_gt.is_some() && s.normal_gt.is_some()
}

/// Masked mean of `|t|` for one `(1, C, H, W)` item.
fn masked_abs(t: &Tensor, mask: &Tensor) -> Result<f64> {
    scalar(&masked_l1(t, &t.zeros_like()?, mask)?)
}

impl Ctx<'_> {
    fn seed(&self) -> u64 {
        self.cfg.stage.seed
    }

    fn schedule(&self, len: usize) -> Schedule {
        Schedule::new(len, self.cfg.data.batch_size, self.seed().wrapping_add(0x5eed))
    }

    /// Direct render with invalid pixels zeroed.
    fn direct(&self, albedo: &Tensor, normal: &Tensor, env: &Tensor, mask: &Tensor) -> Result<Tensor> {
        Ok(self.renderer.shade(albedo, normal, env)?.broadcast_mul(mask)?)
    }

    fn env_a(&self, samples: &[SceneSample]) -> Result<Partial> {
        let cfg = self.cfg;
        let envs = load_env_bank(&cfg.data, cfg.model.env_rows, cfg.model.env_cols)?;
        let env_t = envs
            .iter()
            .map(|e| env_tensor(e, self.device))
            .collect::<Result<Vec<_>>>()?;
        let (samples, skipped) = select(samples, "albedo or normals", has_maps);
        nonempty(&samples, Stage::EnvA)?;
        let items = to_items(&samples, self.device)?;
        let est = EnvEstimator::new(&cfg.model, self.seed(), DTYPE, self.device)?;
        let mut sched = self.schedule(items.len());
        let out = run_loop(cfg, est.store(), |_| {
            let idx = sched.next_batch();
            let picks: Vec<usize> = idx.iter().map(|_| sched.rng().gen_range(0..env_t.len())).collect();
            let batch = Batch::new(&pick(&items, &idx))?;
            let (a, n) = (Batch::require("albedo", &batch.albedo)?, Batch::require("normals", &batch.normal)?);
            let env = Tensor::cat(&picks.iter().map(|&j| &env_t[j]).collect::<Vec<_>>(), 0)?;
            let image = self.direct(a, n, &env, &batch.mask)?;
            let pred = est.forward(&image, a, n, Mode::Train)?;
            let loss = mean_l1(&pred, &env)?;
            let v = scalar(&loss)?;
            Ok((loss, vec![("env_l1".into(), v)]))
        })?;
        Ok(Partial {
            out,
            skipped,
            ids: samples.iter().map(|s| s.id.clone()).collect(),
            metrics: Vec::new(),
        })
    }

    /// Per-sample masked MAD of `I - f_d(A*, N*, h_e(I, A*, N*))` in
    /// evaluation mode, with the estimates.
    fn estimator_recon(&self, est: &EnvEstimator, items: &[Item]) -> Result<(Vec<f64>, Vec<Tensor>)> {
        let mut errs = Vec::new();
        let mut envs = Vec::new();
        for it in items {
            let (a, n) = (Batch::require("albedo", &it.albedo)?, Batch::require("normals", &it.normal)?);
            let env = est.forward(&it.image, a, n, Mode::Eval)?;
            let direct = self.direct(a, n, &env, &it.mask)?;
            errs.push(scalar(&masked_l1(&direct, &it.image, &it.mask)?)?);
            envs.push(env);
        }
        Ok((errs, envs))
    }

    fn env_b(&self, samples: &[SceneSample], env_a: &Path) -> Result<Partial> {
        let cfg = self.cfg;
        let (samples, skipped) = select(samples, "albedo or normals", has_maps);
        nonempty(&samples, Stage::EnvB)?;
        let items = to_items(&samples, self.device)?;
        let est = EnvEstimator::new(&cfg.model, self.seed(), DTYPE, self.device)?;
        load_store(est.store(), env_a)?;
        let (before, _) = self.estimator_recon(&est, &items)?;
        let mut sched = self.schedule(items.len());
        let out = run_loop(cfg, est.store(), |_| {
            let batch = Batch::new(&pick(&items, &sched.next_batch()))?;
            let (a, n) = (Batch::require("albedo", &batch.albedo)?, Batch::require("normals", &batch.normal)?);
            let env = est.forward(&batch.image, a, n, Mode::Train)?;
            let direct = self.direct(a, n, &env, &batch.mask)?;
            let loss = masked_l1(&direct, &batch.image, &batch.mask)?;
            let v = scalar(&loss)?;
            Ok((loss, vec![("recon".into(), v)]))
        })?;
        let (after, envs) = self.estimator_recon(&est, &items)?;

        let mut cache = HashMap::new();
        for (it, env) in items.iter().zip(&envs) {
            // Validates the lighting invariants before anything is written.
            let map = EnvironmentMap::new(tensor_to_array(env)?.mapv(|v| v.max(0.0)))?;
            let t = crate::convert::array_to_tensor(map.radiance(), DTYPE, self.device)?.squeeze(0)?;
            cache.insert(it.id.clone(), t);
        }
        let path = env_cache_path(cfg);
        candle_core::safetensors::save(&cache, &path)?;
        write_json(
            &meta_path(&path),
            &CacheMeta {
                config_hash: cfg.hash(),
                source: out.checkpoint.clone(),
                ids: items.iter().map(|i| i.id.clone()).collect(),
            },
        )?;

        let baseline = samples
            .iter()
            .map(|s| fit_baseline_mad(s, cfg.data.weighting))
            .collect::<Result<Vec<_>>>()?;
        Ok(Partial {
            out,
            skipped,
            ids: samples.iter().map(|s| s.id.clone()).collect(),
            metrics: vec![
                MetricReport::mean_of("recon_before", "radiance", before)?,
                MetricReport::mean_of("recon_after", "radiance", after)?,
                MetricReport::mean_of("recon_least_squares", "radiance", baseline)?,
            ],
        })
    }

    /// Samples with albedo, normals and a cached lighting target; the cached
    /// lighting replaces any ground-truth lighting.
    fn with_cached_env(&self, samples: &[SceneSample]) -> Result<(Vec<SceneSample>, Vec<String>)> {
        let cache = load_env_cache(self.cfg)?;
        let (mut kept, skipped) = select(samples, "albedo, normals or cached lighting", |s| {
            has_maps(s) && cache.contains_key(&s.id)
        });
        for s in &mut kept {
            s.env_gt = Some(cache[&s.id].clone());
        }
        nonempty(&kept, self.cfg.stage.name)?;
        Ok((kept, skipped))
    }

    fn irn_syn(&self, samples: &[SceneSample]) -> Result<Partial> {
        let cfg = self.cfg;
        let (samples, skipped) = self.with_cached_env(samples)?;
        let items = to_items(&samples, self.device)?;
        let irn = Irn::new(&cfg.model, self.seed(), DTYPE, self.device)?;
        let mut sched = self.schedule(items.len());
        let out = run_loop(cfg, irn.store(), |_| {
            let batch = Batch::new(&pick(&items, &sched.next_batch()))?;
            let pred = irn.forward(&batch.image, Mode::Train)?;
            let gt = MapsRef {
                albedo: Batch::require("albedo", &batch.albedo)?,
                normal: Batch::require("normals", &batch.normal)?,
                env: Batch::require("lighting", &batch.env)?,
            };
            let p = MapsRef {
                albedo: &pred.albedo,
                normal: &pred.normal,
                env: &pred.env,
            };
            let terms = supervised_loss_t(p, gt, &batch.mask, &self.renderer, &cfg.loss)?;
            let values = terms.values()?;
            Ok((terms.total, values))
        })?;
        let metrics = evaluate_irn(
            &irn,
            &samples,
            &[Metric::Angular, Metric::Albedo, Metric::Env],
            &cfg.loss,
            cfg.data.weighting,
        )?;
        Ok(Partial {
            out,
            skipped,
            ids: samples.iter().map(|s| s.id.clone()).collect(),
            metrics,
        })
    }

    fn rar_syn(&self, samples: &[SceneSample]) -> Result<Partial> {
        let cfg = self.cfg;
        let (samples, skipped) = self.with_cached_env(samples)?;
        let items = to_items(&samples, self.device)?;
        let rar = Rar::new(&cfg.model, self.seed(), DTYPE, self.device)?;
        let mut sched = self.schedule(items.len());
        let out = run_loop(cfg, rar.store(), |_| {
            let batch = Batch::new(&pick(&items, &sched.next_batch()))?;
            let (a, n) = (Batch::require("albedo", &batch.albedo)?, Batch::require("normals", &batch.normal)?);
            let env = Batch::require("lighting", &batch.env)?;
            let direct = self.direct(a, n, env, &batch.mask)?;
            let residual = rar.forward(&batch.image, a, n, Mode::Train)?;
            let loss = reconstruction_loss_t(&batch.image, &direct, Some(&residual), &batch.mask)?;
            let v = scalar(&loss)?;
            Ok((loss, vec![("recon".into(), v)]))
        })?;

        let (mut with, mut without, mut magnitude) = (Vec::new(), Vec::new(), Vec::new());
        for it in &items {
            let (a, n) = (Batch::require("albedo", &it.albedo)?, Batch::require("normals", &it.normal)?);
            let env = Batch::require("lighting", &it.env)?;
            let direct = self.direct(a, n, env, &it.mask)?;
            let residual = rar.forward(&it.image, a, n, Mode::Eval)?;
            with.push(scalar(&reconstruction_loss_t(&it.image, &direct, Some(&residual), &it.mask)?)?);
            without.push(scalar(&reconstruction_loss_t(&it.image, &direct, None, &it.mask)?)?);
            magnitude.push(masked_abs(&residual, &it.mask)?);
        }
        Ok(Partial {
            out,
            skipped,
            ids: samples.iter().map(|s| s.id.clone()).collect(),
            metrics: vec![
                MetricReport::mean_of("recon_with_rar", "radiance", with)?,
                MetricReport::mean_of("recon_direct_only", "radiance", without)?,
                MetricReport::mean_of("residual_magnitude", "radiance", magnitude)?,
            ],
        })
    }

    /// Outputs of the frozen synthetic network on every item, computed once
    /// and cached under a hash of the network and the inputs.
    fn pseudo_targets(&self, irn: &Irn, items: &[Item]) -> Result<Vec<[Tensor; 3]>> {
        let mut h = Sha256::new();
        h.update(store_hash(irn.store())?.as_bytes());
        h.update(self.cfg.model.hash().as_bytes());
        for it in items {
            h.update(it.id.as_bytes());
            for v in it.image.flatten_all()?.to_vec1::<f32>()? {
                h.update(v.to_le_bytes());
            }
        }
        let key = hex::encode(h.finalize());
        let path = pseudo_cache_path(self.cfg);
        let names = |id: &str| [format!("{id}/albedo"), format!("{id}/normal"), format!("{id}/env")];
        if path.exists() {
            let meta = read_meta(&path)?;
            if meta.config_hash != key {
                return Err(Error::Validation(format!(
                    "stale pseudo targets in {}: built for {}, expected {key}; delete the cache to rebuild",
                    path.display(),
                    meta.config_hash
                )));
            }
            let mut stored = candle_core::safetensors::load(&path, self.device)?;
            return items
                .iter()
                .map(|it| {
                    let [a, n, e] = names(&it.id);
                    let mut take = |k: &str| {
                        stored
                            .remove(k)
                            .ok_or_else(|| Error::Validation(format!("{}: missing `{k}`", path.display())))
                    };
                    Ok([take(&a)?, take(&n)?, take(&e)?])
                })
                .collect();
        }
        let mut targets = Vec::new();
        let mut stored = HashMap::new();
        for it in items {
            let out = irn.forward(&it.image, Mode::Eval)?;
            let [a, n, e] = names(&it.id);
            stored.insert(a, out.albedo.clone());
            stored.insert(n, out.normal.clone());
            stored.insert(e, out.env.clone());
            targets.push([out.albedo, out.normal, out.env]);
        }
        std::fs::create_dir_all(path.parent().expect("stage dir")).map_err(|e| Error::io(&path, e))?;
        candle_core::safetensors::save(&stored, &path)?;
        write_json(
            &meta_path(&path),
            &CacheMeta {
                config_hash: key,
                source: PathBuf::from("irn_syn"),
                ids: items.iter().map(|i| i.id.clone()).collect(),
            },
        )?;
        Ok(targets)
    }

    fn irn_real(&self, samples: &[SceneSample], irn_ckpt: &Path, rar_ckpt: &Path) -> Result<Partial> {
        let cfg = self.cfg;
        let stage = cfg.stage.name;
        let mode = stage.real_mode().expect("real stage");
        let (samples, skipped) = match mode {
            RealMode::Iiw => select(samples, "reflectance judgments", |s| {
                s.judgments.as_ref().is_some_and(|j| !j.is_empty())
            }),
            RealMode::Nyu => select(samples, "sensor normals", |s| s.normal_gt.is_some()),
        };
        nonempty(&samples, stage)?;
        let items = to_items(&samples, self.device)?;
        let irn = Irn::new(&cfg.model, self.seed(), DTYPE, self.device)?;
        load_store(irn.store(), irn_ckpt)?;
        let rar = Rar::new(&cfg.model, self.seed(), DTYPE, self.device)?;
        load_store(rar.store(), rar_ckpt)?;
        let rar_hash = store_hash(rar.store())?;
        let metric = match mode {
            RealMode::Iiw => Metric::Whdr,
            RealMode::Nyu => Metric::Angular,
        };
        let before = evaluate_irn(&irn, &samples, &[metric], &cfg.loss, cfg.data.weighting)?;

        let pseudo = self.pseudo_targets(&irn, &items)?;
        let pseudo_path = pseudo_cache_path(cfg);
        let pseudo_hash = file_hash(&pseudo_path)?;

        let mut sched = self.schedule(items.len());
        let out = run_loop(cfg, irn.store(), |_| {
            let idx = sched.next_batch();
            let batch = Batch::new(&pick(&items, &idx))?;
            let cat = |k: usize| -> Result<Tensor> {
                Ok(Tensor::cat(&idx.iter().map(|&i| &pseudo[i][k]).collect::<Vec<_>>(), 0)?)
            };
            let (pa, pn, pe) = (cat(0)?, cat(1)?, cat(2)?);
            let pred = irn.forward(&batch.image, Mode::Train)?;
            let p = MapsRef {
                albedo: &pred.albedo,
                normal: &pred.normal,
                env: &pred.env,
            };
            let pt = pseudo_supervision_loss_t(
                p,
                MapsRef {
                    albedo: &pa,
                    normal: &pn,
                    env: &pe,
                },
                &batch.mask,
            )?;
            let direct = self.direct(&pred.albedo, &pred.normal, &pred.env, &batch.mask)?;
            let residual = if cfg.stage.use_rar {
                Some(rar.forward(&batch.image, &pred.albedo, &pred.normal, Mode::Eval)?)
            } else {
                None
            };
            let recon = reconstruction_loss_t(&batch.image, &direct, residual.as_ref(), &batch.mask)?;
            let weak = match mode {
                RealMode::Iiw => whdr_hinge_loss_t(&pred.albedo, &batch.judgments, &batch.masks, &cfg.loss)?.0,
                RealMode::Nyu => normal_supervision_loss_t(
                    &pred.normal,
                    Batch::require("normals", &batch.normal)?,
                    &batch.mask,
                )?,
            };
            let mut terms = BTreeMap::new();
            terms.insert(Term::Albedo, pt.albedo);
            if mode == RealMode::Iiw {
                terms.insert(Term::Normal, pt.normal);
            }
            terms.insert(Term::Lighting, pt.lighting);
            terms.insert(Term::Recon, recon);
            terms.insert(Term::Weak, weak);
            let values = terms
                .iter()
                .map(|(k, v)| Ok((k.name().to_string(), scalar(v)?)))
                .collect::<Result<Vec<_>>>()?;
            Ok((composite_real_loss_t(&terms, mode, &cfg.loss)?, values))
        })?;

        if store_hash(rar.store())? != rar_hash {
            return Err(Error::Validation(
                "residual renderer parameters changed during fine-tuning".into(),
            ));
        }
        if file_hash(&pseudo_path)? != pseudo_hash {
            return Err(Error::Validation("pseudo-target cache changed during fine-tuning".into()));
        }
        let after = evaluate_irn(&irn, &samples, &[metric], &cfg.loss, cfg.data.weighting)?;
        let rename = |mut r: MetricReport, suffix: &str| {
            r.name = format!("{}_{suffix}", r.name);
            r
        };
        let mut metrics: Vec<MetricReport> = before.into_iter().map(|r| rename(r, "before")).collect();
        metrics.extend(after.into_iter().map(|r| rename(r, "after")));
        Ok(Partial {
            out,
            skipped,
            ids: samples.iter().map(|s| s.id.clone()).collect(),
            metrics,
        })
    }
}
