//! Evaluation metrics over decomposition outputs.

use ndarray::{Array2, Array3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::render::{fit_env_least_squares_grid, render_probe, shade_direct, Weighting};
use crate::scene::{
    patch_luminance, AlbedoMap, EnvironmentMap, ImageMap, NormalMap, ReflectanceJudgment, Relation,
    SceneSample,
};

/// One evaluated quantity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub name: String,
    pub value: f64,
    pub units: String,
    pub sample_count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_sample: Option<Vec<f64>>,
}

impl MetricReport {
    pub fn new(name: &str, value: f64, units: &str, sample_count: usize) -> Result<Self> {
        if !value.is_finite() {
            return Err(Error::Numeric(format!("metric {name} is not finite")));
        }
        if sample_count == 0 {
            return Err(Error::Validation(format!("metric {name} has no samples")));
        }
        Ok(Self {
            name: name.into(),
            value,
            units: units.into(),
            sample_count,
            per_sample: None,
        })
    }

    /// Mean of per-sample values, keeping them in the report.
    pub fn mean_of(name: &str, units: &str, values: Vec<f64>) -> Result<Self> {
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n.max(1) as f64;
        let mut r = Self::new(name, mean, units, n)?;
        r.per_sample = Some(values);
        Ok(r)
    }
}

/// Relation implied by two reflectances under threshold `delta`.
pub fn predicted_relation(r1: f64, r2: f64, delta: f64) -> Relation {
    if r2 / r1 > 1.0 + delta {
        Relation::Point1Darker
    } else if r1 / r2 > 1.0 + delta {
        Relation::Point2Darker
    } else {
        Relation::Equal
    }
}

/// Weighted disagreement rate, in percent, between the albedo's implied
/// relations and the judgments. Reflectance at a point is the mean luminance
/// over a `(2r+1)²` patch, floored at `albedo_floor`.
pub fn whdr(
    albedo: &AlbedoMap,
    judgments: &[ReflectanceJudgment],
    delta: f64,
    patch_radius: usize,
    albedo_floor: f64,
) -> Result<f64> {
    let mut total = 0.0;
    let mut wrong = 0.0;
    for j in judgments {
        j.validate()?;
        let r1 = patch_luminance(albedo, j.point1, patch_radius).max(albedo_floor);
        let r2 = patch_luminance(albedo, j.point2, patch_radius).max(albedo_floor);
        total += j.weight;
        if predicted_relation(r1, r2, delta) != j.relation {
            wrong += j.weight;
        }
    }
    if total <= 0.0 {
        return Err(Error::Validation("judgments have zero total weight".into()));
    }
    Ok(100.0 * wrong / total)
}

/// Median of a nonempty list; even counts average the two middle values.
pub fn median(values: &mut [f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Validation("median of an empty set".into()));
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Ok(if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    })
}

/// Per-pixel angles in degrees over the pixels valid in both maps.
pub fn angular_errors(pred: &NormalMap, gt: &NormalMap) -> Result<Vec<f64>> {
    if (pred.height(), pred.width()) != (gt.height(), gt.width()) {
        return Err(Error::Shape("normal maps differ in size".into()));
    }
    let mut out = Vec::new();
    for ((y, x), &v) in pred.valid().indexed_iter() {
        if !v || !gt.valid()[[y, x]] {
            continue;
        }
        let (a, b) = (pred.at(y, x), gt.at(y, x));
        let la = (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt();
        let lb = (b[0] * b[0] + b[1] * b[1] + b[2] * b[2]).sqrt();
        let cos = (a[0] * b[0] + a[1] * b[1] + a[2] * b[2]) / (la * lb);
        out.push(cos.clamp(-1.0, 1.0).acos().to_degrees());
    }
    Ok(out)
}

/// Median angle in degrees between the normals, over the shared valid mask.
pub fn median_angular_error(pred: &NormalMap, gt: &NormalMap) -> Result<f64> {
    let mut e = angular_errors(pred, gt)?;
    if e.is_empty() {
        return Err(Error::Validation("normal maps share no valid pixel".into()));
    }
    median(&mut e)
}

/// `(rmse, mad)` over all channels of masked pixels.
pub fn rmse_mad(pred: &Array3<f64>, gt: &Array3<f64>, mask: &Array2<bool>) -> Result<(f64, f64)> {
    let (h, w, c) = pred.dim();
    if gt.dim() != (h, w, c) || mask.dim() != (h, w) {
        return Err(Error::Shape(format!(
            "rmse_mad: {:?} vs {:?} with mask {:?}",
            pred.dim(),
            gt.dim(),
            mask.dim()
        )));
    }
    let (mut sq, mut abs, mut n) = (0.0, 0.0, 0usize);
    for ((y, x), &m) in mask.indexed_iter() {
        if !m {
            continue;
        }
        for k in 0..c {
            let d = pred[[y, x, k]] - gt[[y, x, k]];
            sq += d * d;
            abs += d.abs();
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::Validation("rmse_mad: empty mask".into()));
    }
    Ok(((sq / n as f64).sqrt(), abs / n as f64))
}

/// Solid-angle weighted mean absolute difference, averaged over channels.
pub fn env_map_error(pred: &EnvironmentMap, gt: &EnvironmentMap) -> Result<f64> {
    if (pred.rows(), pred.cols()) != (gt.rows(), gt.cols()) {
        return Err(Error::Shape(format!(
            "environment grids differ: {}x{} vs {}x{}",
            pred.rows(),
            pred.cols(),
            gt.rows(),
            gt.cols()
        )));
    }
    let grid = gt.grid();
    let omega = grid.solid_angles();
    let mut num = 0.0;
    for (i, w) in omega.iter().enumerate() {
        for k in 0..3 {
            num += w * (pred.cell(i, k) - gt.cell(i, k)).abs();
        }
    }
    Ok(num / (3.0 * omega.iter().sum::<f64>()))
}

/// Masked MAD between an image and the direct render of a decomposition.
pub fn image_recon_error(
    image: &ImageMap,
    albedo: &AlbedoMap,
    normal: &NormalMap,
    env: &EnvironmentMap,
    mask: &Array2<bool>,
    weighting: Weighting,
) -> Result<f64> {
    let render = shade_direct(albedo, normal, env, weighting)?;
    let mut m = mask.clone();
    m.zip_mut_with(normal.valid(), |a, &b| *a = *a && b);
    Ok(rmse_mad(render.pixels(), image.pixels(), &m)?.1)
}

/// Reconstruction MAD of the per-image least-squares lighting fit, a
/// reference for learned lighting estimates. Uses the ground-truth albedo
/// and normals and the sample's lighting grid size.
pub fn fit_baseline_mad(sample: &SceneSample, weighting: Weighting) -> Result<f64> {
    let (Some(a), Some(n)) = (&sample.albedo_gt, &sample.normal_gt) else {
        return Err(Error::Validation(format!("{}: needs albedo and normals", sample.id)));
    };
    let (rows, cols) = sample
        .env_gt
        .as_ref()
        .map_or((crate::scene::ENV_ROWS, crate::scene::ENV_COLS), |e| (e.rows(), e.cols()));
    let fit = fit_env_least_squares_grid(&sample.image, a, n, weighting, rows, cols)?;
    image_recon_error(&sample.image, a, n, &fit.env, &sample.mask, weighting)
}

/// Renders a diffuse probe under `env`, scales it so its median over the
/// shared disk matches the reference's median, and compares with
/// [`rmse_mad`].
pub fn probe_error(
    env: &EnvironmentMap,
    reference: &ImageMap,
    reference_mask: &Array2<bool>,
    weighting: Weighting,
) -> Result<(f64, f64)> {
    if reference.height() != reference.width() {
        return Err(Error::Shape("probe reference must be square".into()));
    }
    let probe = render_probe(env, reference.height(), weighting)?;
    let mut mask = probe.mask.clone();
    mask.zip_mut_with(reference_mask, |a, &b| *a = *a && b);
    let collect = |img: &ImageMap| -> Vec<f64> {
        let mut v = Vec::new();
        for ((y, x), &m) in mask.indexed_iter() {
            if m {
                v.extend((0..3).map(|k| img.pixels()[[y, x, k]]));
            }
        }
        v
    };
    let med_pred = median(&mut collect(&probe.image))?;
    let med_ref = median(&mut collect(reference))?;
    let scale = if med_pred > 0.0 { med_ref / med_pred } else { 0.0 };
    let aligned = probe.image.pixels() * scale;
    rmse_mad(&aligned, reference.pixels(), &mask)
}
