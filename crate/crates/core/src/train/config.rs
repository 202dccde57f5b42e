use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::loss::{LossConfig, RealMode};
use crate::nn::{AdamConfig, ModelConfig};
use crate::render::Weighting;
use crate::scene::Split;

/// Training stages in protocol order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    /// Lighting estimator pretraining on re-rendered images.
    EnvA,
    /// Lighting estimator fine-tuning on reconstruction; writes the lighting cache.
    EnvB,
    /// Supervised decomposition network training.
    IrnSyn,
    /// Residual renderer training.
    RarSyn,
    /// Real-data fine-tuning with reflectance judgments.
    IrnRealIiw,
    /// Real-data fine-tuning with sensor normals.
    IrnRealNyu,
}

impl Stage {
    pub const ALL: [Stage; 6] = [
        Stage::EnvA,
        Stage::EnvB,
        Stage::IrnSyn,
        Stage::RarSyn,
        Stage::IrnRealIiw,
        Stage::IrnRealNyu,
    ];

    /// Directory name under the run directory, also the sidecar stage tag.
    pub fn name(self) -> &'static str {
        match self {
            Stage::EnvA => "env_a",
            Stage::EnvB => "env_b",
            Stage::IrnSyn => "irn_syn",
            Stage::RarSyn => "rar_syn",
            Stage::IrnRealIiw => "irn_real_iiw",
            Stage::IrnRealNyu => "irn_real_nyu",
        }
    }

    /// Stages whose checkpoints must exist first.
    pub fn prerequisites(self) -> &'static [Stage] {
        match self {
            Stage::EnvA => &[],
            Stage::EnvB => &[Stage::EnvA],
            Stage::IrnSyn => &[Stage::EnvB],
            Stage::RarSyn => &[Stage::EnvB, Stage::IrnSyn],
            Stage::IrnRealIiw | Stage::IrnRealNyu => &[Stage::IrnSyn, Stage::RarSyn],
        }
    }

    pub fn real_mode(self) -> Option<RealMode> {
        match self {
            Stage::IrnRealIiw => Some(RealMode::Iiw),
            Stage::IrnRealNyu => Some(RealMode::Nyu),
            _ => None,
        }
    }

    /// Whether checkpoints of this stage hold a decomposition network.
    pub fn holds_irn(self) -> bool {
        matches!(self, Stage::IrnSyn | Stage::IrnRealIiw | Stage::IrnRealNyu)
    }
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Stage {
    type Err = Error;

    /// Case-insensitive; `-` and `_` are interchangeable.
    fn from_str(s: &str) -> Result<Self> {
        let key = s.to_ascii_lowercase().replace('-', "_");
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == key)
            .ok_or_else(|| Error::Argument(format!("unknown stage `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StageSection {
    pub name: Stage,
    pub steps: usize,
    pub checkpoint_every: usize,
    /// Checkpoints retained per stage.
    pub keep: usize,
    pub seed: u64,
    pub run_dir: PathBuf,
    /// Real-data stages: include the residual renderer in the reconstruction.
    pub use_rar: bool,
}

impl Default for StageSection {
    fn default() -> Self {
        Self {
            name: Stage::EnvA,
            steps: 2000,
            checkpoint_every: 500,
            keep: 2,
            seed: 0,
            run_dir: PathBuf::from("runs"),
            use_rar: true,
        }
    }
}

/// Seeded analytic room scenes used in place of a dataset manifest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FixtureSource {
    pub count: usize,
    pub seed: u64,
    pub shadows: bool,
    pub judgments: usize,
}

impl Default for FixtureSource {
    fn default() -> Self {
        Self {
            count: 8,
            seed: 0,
            shadows: false,
            judgments: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub batch_size: usize,
    /// JSON-lines manifest; takes precedence over `fixtures`.
    pub dataset: Option<PathBuf>,
    pub split: Split,
    pub fixtures: Option<FixtureSource>,
    /// Directory of panoramas for estimator pretraining.
    pub env_dir: Option<PathBuf>,
    /// Without `env_dir`: number of generated indoor environments.
    pub env_bank: usize,
    pub env_seed: u64,
    pub weighting: Weighting,
}

impl Default for DataSection {
    fn default() -> Self {
        Self {
            batch_size: 4,
            dataset: None,
            split: Split::Train,
            fixtures: None,
            env_dir: None,
            env_bank: 8,
            env_seed: 1_000_000,
            weighting: Weighting::LiteralSum,
        }
    }
}

/// Everything one stage run needs.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub stage: StageSection,
    pub loss: LossConfig,
    pub optimizer: AdamConfig,
    pub data: DataSection,
    pub model: ModelConfig,
}

impl TrainConfig {
    /// Reads TOML, or JSON when the extension is `.json`.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: Self = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(|e| Error::Parse {
                path: path.into(),
                line: e.line(),
                message: e.to_string(),
            })?
        } else {
            toml::from_str(&text).map_err(|e| Error::Parse {
                path: path.into(),
                line: e
                    .span()
                    .map(|s| text[..s.start].lines().count().max(1))
                    .unwrap_or(0),
                message: e.message().to_string(),
            })?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Argument(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.loss.validate()?;
        if self.data.batch_size == 0 {
            return Err(Error::Validation("batch_size must be positive".into()));
        }
        if self.stage.checkpoint_every == 0 || self.stage.keep == 0 {
            return Err(Error::Validation(
                "checkpoint_every and keep must be positive".into(),
            ));
        }
        if self.optimizer.lr.is_nan() || self.optimizer.lr <= 0.0 {
            return Err(Error::Validation("learning rate must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.optimizer.final_lr_fraction) {
            return Err(Error::Validation("final_lr_fraction must lie in [0, 1]".into()));
        }
        Ok(())
    }

    /// Hex sha256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    pub fn stage_dir(&self, stage: Stage) -> PathBuf {
        self.stage.run_dir.join(stage.name())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stage_names_round_trip() {
        for s in Stage::ALL {
            assert_eq!(s.name().parse::<Stage>().unwrap(), s);
            assert_eq!(s.name().to_uppercase().parse::<Stage>().unwrap(), s);
        }
        assert!("env_c".parse::<Stage>().is_err());
    }

    #[test]
    fn toml_sections_and_defaults() {
        let cfg: TrainConfig = toml::from_str(
            r#"
            [stage]
            name = "irn_syn"
            steps = 10
            [optimizer]
            lr = 0.001
            [loss]
            delta = 0.2
            "#,
        )
        .unwrap();
        assert_eq!(cfg.stage.name, Stage::IrnSyn);
        assert_eq!(cfg.stage.steps, 10);
        assert_eq!(cfg.optimizer.lr, 1e-3);
        assert_eq!(cfg.optimizer.beta1, 0.9);
        assert_eq!(cfg.loss.delta, 0.2);
        assert_eq!(cfg.loss.lambda, [1.0, 1.0, 0.5]);
        assert_eq!(cfg.data.batch_size, 4);
        let back: TrainConfig = toml::from_str(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(back, cfg);
        assert!(toml::from_str::<TrainConfig>("[stage]\nbogus = 1\n").is_err());
    }
}
