use candle_core::{DType, Device, Tensor};
use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{DataSection, TrainConfig};
use crate::convert::{array_to_tensor, mask_to_tensor};
use crate::error::{Error, Result};
use crate::scene::codec::{read_linear, resample_panorama};
use crate::scene::{
    analytic_fixture_set, load_dataset_manifest, load_sample_with, EnvironmentMap, FixtureOptions,
    ReflectanceJudgment, SceneSample,
};

pub(crate) const DTYPE: DType = DType::F32;

/// Loads the configured samples at the model resolution.
pub fn load_samples(cfg: &TrainConfig) -> Result<Vec<SceneSample>> {
    let (h, w) = (cfg.model.height, cfg.model.width);
    let samples = match (&cfg.data.dataset, &cfg.data.fixtures) {
        (Some(path), _) => {
            let index = load_dataset_manifest(path)?;
            index
                .split(cfg.data.split)
                .map(|r| load_sample_with(&index, &r.id, (h, w)))
                .collect::<Result<Vec<_>>>()?
        }
        (None, Some(f)) => analytic_fixture_set(
            f.count,
            f.seed,
            &FixtureOptions {
                height: h,
                width: w,
                env_rows: cfg.model.env_rows,
                env_cols: cfg.model.env_cols,
                shadows: f.shadows,
                judgments: f.judgments,
                delta: cfg.loss.delta,
            },
        )?,
        (None, None) => {
            return Err(Error::Argument(
                "config names neither a dataset nor fixtures".into(),
            ))
        }
    };
    if samples.is_empty() {
        return Err(Error::Validation("training set is empty".into()));
    }
    Ok(samples)
}

/// Lighting environments for estimator pretraining.
pub fn load_env_bank(data: &DataSection, rows: usize, cols: usize) -> Result<Vec<EnvironmentMap>> {
    let envs = match &data.env_dir {
        Some(dir) => {
            let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
            let mut paths: Vec<_> = entries
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| {
                    p.extension()
                        .and_then(|e| e.to_str())
                        .is_some_and(|e| matches!(e.to_ascii_lowercase().as_str(), "hdr" | "png"))
                })
                .collect();
            paths.sort();
            paths
                .iter()
                .map(|p| {
                    EnvironmentMap::new(
                        resample_panorama(&read_linear(p)?, rows, cols).mapv(|v| v.max(0.0)),
                    )
                })
                .collect::<Result<Vec<_>>>()?
        }
        None => (0..data.env_bank)
            .map(|i| {
                crate::scene::indoor_environment(rows, cols, data.env_seed.wrapping_add(7919 * i as u64))
            })
            .collect::<Result<Vec<_>>>()?,
    };
    if envs.is_empty() {
        return Err(Error::Validation("environment set is empty".into()));
    }
    Ok(envs)
}

/// One sample as `(1, C, H, W)` tensors.
pub struct Item {
    pub id: String,
    pub image: Tensor,
    pub albedo: Option<Tensor>,
    pub normal: Option<Tensor>,
    /// `(1, 1, H, W)`, ones on valid pixels.
    pub mask: Tensor,
    pub mask_array: Array2<bool>,
    /// `(1, 3, rows, cols)`.
    pub env: Option<Tensor>,
    pub judgments: Option<Vec<ReflectanceJudgment>>,
}

pub fn env_tensor(env: &EnvironmentMap, device: &Device) -> Result<Tensor> {
    array_to_tensor(env.radiance(), DTYPE, device)
}

impl Item {
    pub fn new(sample: &SceneSample, device: &Device) -> Result<Self> {
        let map = |a: &ndarray::Array3<f64>| array_to_tensor(a, DTYPE, device);
        Ok(Self {
            id: sample.id.clone(),
            image: map(sample.image.pixels())?,
            albedo: sample.albedo_gt.as_ref().map(|a| map(a.pixels())).transpose()?,
            normal: sample.normal_gt.as_ref().map(|n| map(n.vectors())).transpose()?,
            mask: mask_to_tensor(&sample.mask, DTYPE, device)?,
            mask_array: sample.mask.clone(),
            env: sample.env_gt.as_ref().map(|e| env_tensor(e, device)).transpose()?,
            judgments: sample.judgments.clone(),
        })
    }
}

fn cat<'a>(items: impl Iterator<Item = &'a Tensor>) -> Result<Tensor> {
    let v: Vec<&Tensor> = items.collect();
    Ok(Tensor::cat(&v, 0)?)
}

/// A stacked minibatch. Optional maps are present only when every member
/// has them.
pub struct Batch {
    pub image: Tensor,
    pub albedo: Option<Tensor>,
    pub normal: Option<Tensor>,
    pub mask: Tensor,
    pub masks: Vec<Array2<bool>>,
    pub env: Option<Tensor>,
    pub judgments: Vec<Vec<ReflectanceJudgment>>,
}

impl Batch {
    pub fn new(items: &[&Item]) -> Result<Self> {
        let all = |f: fn(&Item) -> Option<&Tensor>| -> Result<Option<Tensor>> {
            if items.iter().all(|i| f(i).is_some()) {
                Ok(Some(cat(items.iter().map(|i| f(i).unwrap()))?))
            } else {
                Ok(None)
            }
        };
        Ok(Self {
            image: cat(items.iter().map(|i| &i.image))?,
            albedo: all(|i| i.albedo.as_ref())?,
            normal: all(|i| i.normal.as_ref())?,
            mask: cat(items.iter().map(|i| &i.mask))?,
            masks: items.iter().map(|i| i.mask_array.clone()).collect(),
            env: all(|i| i.env.as_ref())?,
            judgments: items
                .iter()
                .map(|i| i.judgments.clone().unwrap_or_default())
                .collect(),
        })
    }

    pub fn require<'a>(what: &str, t: &'a Option<Tensor>) -> Result<&'a Tensor> {
        t.as_ref()
            .ok_or_else(|| Error::Validation(format!("batch is missing {what}")))
    }
}

/// Seeded epoch-shuffled minibatch indices. Batches wrap across epoch
/// boundaries, so any batch size works with any set size.
pub struct Schedule {
    rng: ChaCha8Rng,
    order: Vec<usize>,
    pos: usize,
    batch: usize,
}

impl Schedule {
    pub fn new(len: usize, batch: usize, seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            order: (0..len).collect(),
            pos: len,
            batch,
        }
    }

    pub fn next_batch(&mut self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.batch);
        while out.len() < self.batch {
            if self.pos == self.order.len() {
                self.order.shuffle(&mut self.rng);
                self.pos = 0;
            }
            out.push(self.order[self.pos]);
            self.pos += 1;
        }
        out
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }
}
