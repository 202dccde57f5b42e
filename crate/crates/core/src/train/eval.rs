use std::path::Path;

use candle_core::Device;
use serde::{Deserialize, Serialize};

use super::config::Stage;
use super::data::DTYPE;
use crate::error::{Error, Result};
use crate::loss::LossConfig;
use crate::metrics::{
    env_map_error, image_recon_error, median_angular_error, rmse_mad, whdr, MetricReport,
};
use crate::nn::{load_store, read_sidecar, Decomposition, Irn, ModelConfig, Rar};
use crate::render::Weighting;
use crate::scene::SceneSample;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    /// Weighted disagreement with reflectance judgments, percent.
    Whdr,
    /// Median per-pixel normal angle, degrees.
    Angular,
    /// Albedo RMSE and MAD.
    Albedo,
    /// Solid-angle weighted lighting MAD.
    Env,
    /// Direct-render MAD of ground-truth albedo and normals under the
    /// predicted lighting.
    Recon,
}

impl std::str::FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "whdr" => Ok(Metric::Whdr),
            "angular" | "normal" => Ok(Metric::Angular),
            "albedo" | "rmse_mad" => Ok(Metric::Albedo),
            "env" => Ok(Metric::Env),
            "recon" => Ok(Metric::Recon),
            other => Err(Error::Argument(format!("unknown metric `{other}`"))),
        }
    }
}

impl Metric {
    fn requirement(self) -> &'static str {
        match self {
            Metric::Whdr => "reflectance judgments",
            Metric::Angular => "ground-truth normals",
            Metric::Albedo => "ground-truth albedo",
            Metric::Env => "ground-truth lighting",
            Metric::Recon => "ground-truth albedo and normals",
        }
    }
}

/// Per-sample metric values over the samples that carry the needed ground
/// truth; the report value is their mean.
pub fn evaluate_decompositions(
    samples: &[SceneSample],
    decomps: &[Decomposition],
    metrics: &[Metric],
    loss: &LossConfig,
    weighting: Weighting,
) -> Result<Vec<MetricReport>> {
    let mut reports = Vec::new();
    for &m in metrics {
        let mut values: Vec<Vec<f64>> = Vec::new();
        for (s, d) in samples.iter().zip(decomps) {
            let v: Option<Vec<f64>> = match m {
                Metric::Whdr => match &s.judgments {
                    Some(j) if !j.is_empty() => Some(vec![whdr(
                        &d.albedo,
                        j,
                        loss.delta,
                        loss.patch_radius,
                        loss.albedo_floor,
                    )?]),
                    _ => None,
                },
                Metric::Angular => s
                    .normal_gt
                    .as_ref()
                    .map(|n| median_angular_error(&d.normal, n).map(|v| vec![v]))
                    .transpose()?,
                Metric::Albedo => s
                    .albedo_gt
                    .as_ref()
                    .map(|a| {
                        rmse_mad(d.albedo.pixels(), a.pixels(), &s.mask).map(|(r, m)| vec![r, m])
                    })
                    .transpose()?,
                Metric::Env => s
                    .env_gt
                    .as_ref()
                    .map(|e| env_map_error(&d.env, e).map(|v| vec![v]))
                    .transpose()?,
                Metric::Recon => match (&s.albedo_gt, &s.normal_gt) {
                    (Some(a), Some(n)) => Some(vec![image_recon_error(
                        &s.image, a, n, &d.env, &s.mask, weighting,
                    )?]),
                    _ => None,
                },
            };
            if let Some(v) = v {
                values.push(v);
            }
        }
        if values.is_empty() {
            return Err(Error::Validation(format!(
                "metric {m:?} needs {} but no sample has them",
                m.requirement()
            )));
        }
        let column = |k: usize| values.iter().map(|v| v[k]).collect::<Vec<_>>();
        match m {
            Metric::Whdr => reports.push(MetricReport::mean_of("whdr", "percent", column(0))?),
            Metric::Angular => {
                reports.push(MetricReport::mean_of("angular_median", "degrees", column(0))?)
            }
            Metric::Albedo => {
                reports.push(MetricReport::mean_of("albedo_rmse", "reflectance", column(0))?);
                reports.push(MetricReport::mean_of("albedo_mad", "reflectance", column(1))?);
            }
            Metric::Env => reports.push(MetricReport::mean_of("env_mad", "radiance", column(0))?),
            Metric::Recon => reports.push(MetricReport::mean_of("recon_mad", "radiance", column(0))?),
        }
    }
    Ok(reports)
}

pub fn evaluate_irn(
    irn: &Irn,
    samples: &[SceneSample],
    metrics: &[Metric],
    loss: &LossConfig,
    weighting: Weighting,
) -> Result<Vec<MetricReport>> {
    let decomps = samples
        .iter()
        .map(|s| irn.decompose(&s.image))
        .collect::<Result<Vec<_>>>()?;
    evaluate_decompositions(samples, &decomps, metrics, loss, weighting)
}

fn checkpoint_model(checkpoint: &Path, accept: fn(Stage) -> bool, what: &str) -> Result<(ModelConfig, u64)> {
    let side = read_sidecar(checkpoint)?;
    let stage: Stage = side.stage.parse()?;
    if !accept(stage) {
        return Err(Error::Validation(format!(
            "{}: a {stage} checkpoint holds no {what}",
            checkpoint.display()
        )));
    }
    let model = side.model.ok_or_else(|| {
        Error::Validation(format!("{}: sidecar lacks the model config", checkpoint.display()))
    })?;
    Ok((model, side.seed))
}

/// Rebuilds the decomposition network stored at `checkpoint`.
pub fn load_irn(checkpoint: &Path) -> Result<Irn> {
    let (model, seed) = checkpoint_model(checkpoint, Stage::holds_irn, "decomposition network")?;
    let irn = Irn::new(&model, seed, DTYPE, &Device::Cpu)?;
    load_store(irn.store(), checkpoint)?;
    Ok(irn)
}

/// Rebuilds the residual renderer stored at `checkpoint`.
pub fn load_rar(checkpoint: &Path) -> Result<Rar> {
    let (model, seed) = checkpoint_model(checkpoint, |s| s == Stage::RarSyn, "residual renderer")?;
    let rar = Rar::new(&model, seed, DTYPE, &Device::Cpu)?;
    load_store(rar.store(), checkpoint)?;
    Ok(rar)
}

/// Evaluates a decomposition checkpoint. Samples must already be at the
/// checkpoint's input resolution.
pub fn evaluate(
    checkpoint: &Path,
    samples: &[SceneSample],
    metrics: &[Metric],
    loss: &LossConfig,
    weighting: Weighting,
) -> Result<Vec<MetricReport>> {
    let irn = load_irn(checkpoint)?;
    evaluate_irn(&irn, samples, metrics, loss, weighting)
}

/// `{"<metric>": value, ..., "n": samples, "config": hash, "reports": [...]}`.
pub fn eval_report_json(reports: &[MetricReport], sample_count: usize, config_hash: &str) -> serde_json::Value {
    let mut obj = serde_json::Map::new();
    for r in reports {
        obj.insert(r.name.clone(), serde_json::json!(r.value));
    }
    obj.insert("n".into(), serde_json::json!(sample_count));
    obj.insert("config".into(), serde_json::json!(config_hash));
    obj.insert("reports".into(), serde_json::to_value(reports).expect("reports serialize"));
    serde_json::Value::Object(obj)
}
