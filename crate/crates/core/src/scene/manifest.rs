use std::collections::HashSet;
use std::path::{Path, PathBuf};

use ndarray::{Array2, Array3};
use serde::{Deserialize, Serialize};

use super::codec::{
    read_encoded_normals, read_linear, read_mask, resample_panorama, resize_bilinear,
    resize_mask, resize_nearest,
};
use super::{
    load_judgments, AlbedoMap, EnvironmentMap, ImageMap, NormalMap, SceneSample, ENV_COLS,
    ENV_ROWS, NETWORK_HEIGHT, NETWORK_WIDTH,
};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::Argument(format!("unknown split `{other}`"))),
        }
    }
}

/// One manifest line as written on disk.
#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct ManifestLine {
    id: String,
    split: Split,
    image: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    albedo: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    normal: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    env: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mask: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    judgments: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetRecord {
    pub id: String,
    pub split: Split,
    pub image: PathBuf,
    pub albedo: Option<PathBuf>,
    pub normal: Option<PathBuf>,
    pub env: Option<PathBuf>,
    pub mask: Option<PathBuf>,
    pub judgments: Option<PathBuf>,
    /// Referenced files that did not exist when the manifest was read.
    pub missing: Vec<PathBuf>,
}

impl DatasetRecord {
    fn files(&self) -> impl Iterator<Item = &PathBuf> {
        std::iter::once(&self.image)
            .chain(self.albedo.iter())
            .chain(self.normal.iter())
            .chain(self.env.iter())
            .chain(self.mask.iter())
            .chain(self.judgments.iter())
    }

    pub fn is_complete(&self) -> bool {
        self.missing.is_empty()
    }

    /// Serializes back to one manifest line with paths relative to `base`.
    pub fn to_line(&self, base: &Path) -> String {
        let rel = |p: &PathBuf| {
            p.strip_prefix(base)
                .unwrap_or(p)
                .to_string_lossy()
                .into_owned()
        };
        let line = ManifestLine {
            id: self.id.clone(),
            split: self.split,
            image: rel(&self.image),
            albedo: self.albedo.as_ref().map(rel),
            normal: self.normal.as_ref().map(rel),
            env: self.env.as_ref().map(rel),
            mask: self.mask.as_ref().map(rel),
            judgments: self.judgments.as_ref().map(rel),
        };
        serde_json::to_string(&line).expect("manifest line serializes")
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct DatasetIndex {
    pub records: Vec<DatasetRecord>,
}

impl DatasetIndex {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&DatasetRecord> {
        self.records.iter().find(|r| r.id == id)
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &DatasetRecord> {
        self.records.iter().filter(move |r| r.split == split)
    }
}

/// Parses JSON-lines manifest text; relative paths resolve against `base`.
pub fn parse_manifest(text: &str, base: &Path, source: &Path) -> Result<DatasetIndex> {
    let mut records = Vec::new();
    let mut seen = HashSet::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let line: ManifestLine = serde_json::from_str(raw).map_err(|e| Error::Parse {
            path: source.to_path_buf(),
            line: line_no,
            message: e.to_string(),
        })?;
        if !seen.insert(line.id.clone()) {
            return Err(Error::Validation(format!(
                "{}: line {line_no}: duplicate id `{}`",
                source.display(),
                line.id
            )));
        }
        let resolve = |p: &str| base.join(p);
        let mut record = DatasetRecord {
            id: line.id,
            split: line.split,
            image: resolve(&line.image),
            albedo: line.albedo.as_deref().map(resolve),
            normal: line.normal.as_deref().map(resolve),
            env: line.env.as_deref().map(resolve),
            mask: line.mask.as_deref().map(resolve),
            judgments: line.judgments.as_deref().map(resolve),
            missing: Vec::new(),
        };
        record.missing = record.files().filter(|p| !p.exists()).cloned().collect();
        if !record.missing.is_empty() {
            log::warn!(
                "{}: record `{}` references missing files {:?}",
                source.display(),
                record.id,
                record.missing
            );
        }
        records.push(record);
    }
    Ok(DatasetIndex { records })
}

/// Reads a JSON-lines dataset manifest.
pub fn load_dataset_manifest(path: &Path) -> Result<DatasetIndex> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse_manifest(&text, base, path)
}

/// Loads a record at the network resolution (240×320).
pub fn load_sample(index: &DatasetIndex, id: &str) -> Result<SceneSample> {
    load_sample_with(index, id, (NETWORK_HEIGHT, NETWORK_WIDTH))
}

/// Loads a record, resizing every map to `(height, width)`.
pub fn load_sample_with(
    index: &DatasetIndex,
    id: &str,
    (height, width): (usize, usize),
) -> Result<SceneSample> {
    let record = index
        .get(id)
        .ok_or_else(|| Error::Argument(format!("id `{id}` not in index")))?;
    let mut warnings = Vec::new();

    let image = read_linear(&record.image)?;
    let image = ImageMap::new(resize_bilinear(&image, height, width))?;

    let mut mask = match &record.mask {
        Some(p) => resize_mask(&read_mask(p)?, height, width),
        None => Array2::from_elem((height, width), true),
    };

    let albedo_gt = match &record.albedo {
        Some(p) => Some(AlbedoMap::clamped(resize_bilinear(&read_linear(p)?, height, width))?),
        None => None,
    };

    let normal_gt = match &record.normal {
        Some(p) => {
            let (normal, w) = decode_normals(read_encoded_normals(p)?, height, width);
            if w > 0 {
                warnings.push(format!(
                    "{w} decoded normals deviate from unit length by more than 0.1"
                ));
            }
            for ((y, x), ok) in normal.valid().indexed_iter() {
                if !ok {
                    mask[[y, x]] = false;
                }
            }
            Some(normal)
        }
        None => None,
    };

    let env_gt = match &record.env {
        Some(p) => Some(EnvironmentMap::new(
            resample_panorama(&read_linear(p)?, ENV_ROWS, ENV_COLS).mapv(|v| v.max(0.0)),
        )?),
        None => None,
    };

    let judgments = match &record.judgments {
        Some(p) => Some(load_judgments(p)?),
        None => None,
    };

    let sample = SceneSample {
        id: record.id.clone(),
        image,
        albedo_gt,
        normal_gt,
        env_gt,
        judgments,
        mask,
        warnings,
    };
    sample.validate()?;
    Ok(sample)
}

/// Nearest-resizes decoded normals and renormalizes. Returns the map and the
/// number of valid pixels whose pre-normalization length was off by > 0.1.
fn decode_normals(decoded: Array3<f64>, height: usize, width: usize) -> (NormalMap, usize) {
    let resized = resize_nearest(&decoded, height, width);
    let mut valid = Array2::from_elem((height, width), true);
    let mut deviating = 0;
    for y in 0..height {
        for x in 0..width {
            let len = (0..3).map(|c| resized[[y, x, c]].powi(2)).sum::<f64>().sqrt();
            // Encoded mid-gray (zero vector) marks undefined geometry.
            if len < 0.5 {
                valid[[y, x]] = false;
            } else if (len - 1.0).abs() > 0.1 {
                deviating += 1;
            }
        }
    }
    let map = NormalMap::normalized(resized, valid).expect("shapes agree");
    (map, deviating)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decodes_axis_normal() {
        let encoded = Array3::from_shape_fn((1, 1, 3), |(_, _, c)| [1.0, 0.5, 0.5][c]);
        let (n, dev) = decode_normals(encoded.mapv(|v| 2.0 * v - 1.0), 1, 1);
        assert_eq!(dev, 0);
        assert_eq!(n.at(0, 0), [1.0, 0.0, 0.0]);
    }

    #[test]
    fn gray_normal_is_invalid() {
        let encoded = Array3::from_elem((1, 1, 3), 0.5);
        let (n, _) = decode_normals(encoded.mapv(|v| 2.0 * v - 1.0), 1, 1);
        assert!(!n.valid()[[0, 0]]);
    }

    #[test]
    fn parse_errors_name_the_line() {
        let text = "{\"id\":\"a\",\"split\":\"train\",\"image\":\"a.png\"}\nnot json\n";
        match parse_manifest(text, Path::new("."), Path::new("m.jsonl")) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_ids_rejected() {
        let l = "{\"id\":\"a\",\"split\":\"train\",\"image\":\"a.png\"}";
        let text = format!("{l}\n{l}\n");
        assert!(matches!(
            parse_manifest(&text, Path::new("."), Path::new("m.jsonl")),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn unknown_split_is_parse_error() {
        let text = "{\"id\":\"a\",\"split\":\"dev\",\"image\":\"a.png\"}";
        assert!(matches!(
            parse_manifest(text, Path::new("."), Path::new("m.jsonl")),
            Err(Error::Parse { line: 1, .. })
        ));
    }
}
