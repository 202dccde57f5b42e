//! Training objectives.
//!
//! Tensor versions operate on `(B, C, H, W)` batches with a `(B, 1, H, W)`
//! validity mask and are what training differentiates. The map-level
//! functions wrap them for single images in `f64`.

use std::collections::BTreeMap;

use candle_core::{DType, Device, Tensor};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::convert::{array_to_tensor, mask_to_tensor};
use crate::error::{Error, Result};
use crate::render::{TensorRenderer, Weighting};
use crate::scene::{
    patch_pixels, AlbedoMap, EnvironmentMap, ImageMap, NormalMap, ReflectanceJudgment, Relation,
    ResidualImage, LUMA,
};

/// Weights of the real-data composite objective.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompositeWeights {
    pub albedo: f64,
    pub normal: f64,
    pub lighting: f64,
    pub recon: f64,
    pub weak: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossConfig {
    /// Supervised weights `[normal, albedo, lighting]`.
    pub lambda: [f64; 3],
    /// Margin of the reflectance hinge and of the WHDR decision rule.
    pub delta: f64,
    pub patch_radius: usize,
    pub albedo_floor: f64,
    pub iiw: CompositeWeights,
    pub nyu: CompositeWeights,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            lambda: [1.0, 1.0, 0.5],
            delta: 0.1,
            patch_radius: 1,
            albedo_floor: 1e-4,
            iiw: CompositeWeights {
                albedo: 0.5,
                normal: 0.5,
                lighting: 0.1,
                recon: 1.0,
                weak: 30.0,
            },
            nyu: CompositeWeights {
                albedo: 0.2,
                normal: 0.0,
                lighting: 0.05,
                recon: 1.0,
                weak: 20.0,
            },
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        let all = self.lambda.iter().chain([
            &self.iiw.albedo,
            &self.iiw.normal,
            &self.iiw.lighting,
            &self.iiw.recon,
            &self.iiw.weak,
            &self.nyu.albedo,
            &self.nyu.normal,
            &self.nyu.lighting,
            &self.nyu.recon,
            &self.nyu.weak,
        ]);
        for w in all {
            if !w.is_finite() || *w < 0.0 {
                return Err(Error::Validation(format!("loss weight {w} must be >= 0")));
            }
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::Validation(format!("delta {} outside (0, 1)", self.delta)));
        }
        if self.albedo_floor.is_nan() || self.albedo_floor <= 0.0 {
            return Err(Error::Validation("albedo_floor must be positive".into()));
        }
        Ok(())
    }
}

/// Which real-data objective is being optimized.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RealMode {
    /// Pairwise reflectance judgments as weak supervision.
    Iiw,
    /// Depth-sensor normals as weak supervision; no normal pseudo term.
    Nyu,
}

impl std::str::FromStr for RealMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "iiw" => Ok(RealMode::Iiw),
            "nyu" => Ok(RealMode::Nyu),
            other => Err(Error::Argument(format!("unknown dataset mode `{other}`"))),
        }
    }
}

/// Terms of the real-data objective.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Term {
    Albedo,
    Normal,
    Lighting,
    Recon,
    Weak,
}

impl Term {
    pub fn name(self) -> &'static str {
        match self {
            Term::Albedo => "albedo",
            Term::Normal => "normal",
            Term::Lighting => "lighting",
            Term::Recon => "recon",
            Term::Weak => "weak",
        }
    }
}

/// `(term, weight)` pairs the given mode sums, in summation order.
pub fn composite_weights(mode: RealMode, cfg: &LossConfig) -> Vec<(Term, f64)> {
    match mode {
        RealMode::Iiw => vec![
            (Term::Albedo, cfg.iiw.albedo),
            (Term::Normal, cfg.iiw.normal),
            (Term::Lighting, cfg.iiw.lighting),
            (Term::Recon, cfg.iiw.recon),
            (Term::Weak, cfg.iiw.weak),
        ],
        RealMode::Nyu => vec![
            (Term::Albedo, cfg.nyu.albedo),
            (Term::Lighting, cfg.nyu.lighting),
            (Term::Recon, cfg.nyu.recon),
            (Term::Weak, cfg.nyu.weak),
        ],
    }
}

/// Weighted sum of the real-data terms for `mode`.
pub fn composite_real_loss(terms: &BTreeMap<Term, f64>, mode: RealMode, cfg: &LossConfig) -> Result<f64> {
    let mut total = 0.0;
    for (term, w) in composite_weights(mode, cfg) {
        let v = terms
            .get(&term)
            .ok_or_else(|| Error::Argument(format!("missing `{}` term", term.name())))?;
        total += w * v;
    }
    Ok(total)
}

/// Tensor form of [`composite_real_loss`].
pub fn composite_real_loss_t(terms: &BTreeMap<Term, Tensor>, mode: RealMode, cfg: &LossConfig) -> Result<Tensor> {
    let mut total: Option<Tensor> = None;
    for (term, w) in composite_weights(mode, cfg) {
        let v = terms
            .get(&term)
            .ok_or_else(|| Error::Argument(format!("missing `{}` term", term.name())))?;
        let wv = (v * w)?;
        total = Some(match total {
            Some(t) => (t + wv)?,
            None => wv,
        });
    }
    Ok(total.expect("every mode has terms"))
}

/// Mean of `|pred - target|` over valid pixels and all channels.
pub fn masked_l1(pred: &Tensor, target: &Tensor, mask: &Tensor) -> Result<Tensor> {
    if pred.dims() != target.dims() {
        return Err(Error::Argument(format!(
            "L1 operands differ: {:?} vs {:?}",
            pred.dims(),
            target.dims()
        )));
    }
    let (_, c, _, _) = pred.dims4()?;
    let count = mask.sum_all()?.to_dtype(DType::F64)?.to_scalar::<f64>()?;
    if count <= 0.0 {
        return Err(Error::Argument("loss mask is empty".into()));
    }
    let diff = (pred - target)?.abs()?.broadcast_mul(mask)?;
    Ok((diff.sum_all()? / (count * c as f64))?)
}

/// Plain mean absolute difference (used for environment maps).
pub fn mean_l1(pred: &Tensor, target: &Tensor) -> Result<Tensor> {
    if pred.dims() != target.dims() {
        return Err(Error::Argument(format!(
            "L1 operands differ: {:?} vs {:?}",
            pred.dims(),
            target.dims()
        )));
    }
    Ok((pred - target)?.abs()?.mean_all()?)
}

pub struct SupervisedTerms {
    pub normal: Tensor,
    pub albedo: Tensor,
    pub lighting: Tensor,
    pub total: Tensor,
}

impl SupervisedTerms {
    /// `[(name, value)]` for logging, in `normal, albedo, lighting` order.
    pub fn values(&self) -> Result<Vec<(String, f64)>> {
        Ok(vec![
            ("normal".into(), scalar(&self.normal)?),
            ("albedo".into(), scalar(&self.albedo)?),
            ("lighting".into(), scalar(&self.lighting)?),
        ])
    }
}

pub fn scalar(t: &Tensor) -> Result<f64> {
    Ok(t.to_dtype(DType::F64)?.to_scalar::<f64>()?)
}

/// Tensor maps of one batch: albedo and normals `(B, 3, H, W)`, lighting
/// `(B, 3, rows, cols)`.
#[derive(Clone, Copy)]
pub struct MapsRef<'a> {
    pub albedo: &'a Tensor,
    pub normal: &'a Tensor,
    pub env: &'a Tensor,
}

/// Supervised synthetic loss: weighted masked L1 on normals and albedo,
/// plus L1 between renders of the ground-truth albedo and normals under the
/// predicted and the target lighting.
pub fn supervised_loss_t(
    pred: MapsRef,
    gt: MapsRef,
    mask: &Tensor,
    renderer: &TensorRenderer,
    cfg: &LossConfig,
) -> Result<SupervisedTerms> {
    let normal = masked_l1(pred.normal, gt.normal, mask)?;
    let albedo = masked_l1(pred.albedo, gt.albedo, mask)?;
    let lit_pred = renderer.shade(gt.albedo, gt.normal, pred.env)?;
    let lit_gt = renderer.shade(gt.albedo, gt.normal, gt.env)?;
    let lighting = masked_l1(&lit_pred, &lit_gt, mask)?;
    let [l1, l2, l3] = cfg.lambda;
    let total = (((&normal * l1)? + (&albedo * l2)?)? + (&lighting * l3)?)?;
    Ok(SupervisedTerms {
        normal,
        albedo,
        lighting,
        total,
    })
}

/// `|I - (direct + residual)|` averaged over valid pixels.
pub fn reconstruction_loss_t(
    image: &Tensor,
    direct: &Tensor,
    residual: Option<&Tensor>,
    mask: &Tensor,
) -> Result<Tensor> {
    let recon = match residual {
        Some(r) => {
            if r.dims() != direct.dims() {
                return Err(Error::Argument("residual and direct differ in shape".into()));
            }
            (direct + r)?
        }
        None => direct.clone(),
    };
    masked_l1(&recon, image, mask)
}

/// Index plan for sampling judgment patches from a flattened luminance map.
struct PatchPlan {
    indices: Vec<u32>,
    /// Row `2t` averages point 1 of usable judgment `t`, row `2t+1` point 2.
    averaging: Vec<f64>,
    cols: usize,
    relations: Vec<Relation>,
    weights: Vec<f64>,
    skipped: usize,
}

fn plan_patches(
    judgments: &[Vec<ReflectanceJudgment>],
    masks: &[Array2<bool>],
    height: usize,
    width: usize,
    radius: usize,
) -> PatchPlan {
    let mut indices = Vec::new();
    let mut rows: Vec<(usize, usize)> = Vec::new();
    let mut relations = Vec::new();
    let mut weights = Vec::new();
    let mut skipped = 0;
    for (b, js) in judgments.iter().enumerate() {
        let mask = &masks[b];
        for j in js {
            let (r1, c1) = ReflectanceJudgment::pixel(j.point1, height, width);
            let (r2, c2) = ReflectanceJudgment::pixel(j.point2, height, width);
            if !mask[[r1, c1]] || !mask[[r2, c2]] {
                skipped += 1;
                continue;
            }
            for p in [j.point1, j.point2] {
                let px: Vec<_> = patch_pixels(p, radius, height, width)
                    .into_iter()
                    .filter(|&(y, x)| mask[[y, x]])
                    .collect();
                let start = indices.len();
                indices.extend(px.iter().map(|&(y, x)| (b * height * width + y * width + x) as u32));
                rows.push((start, px.len()));
            }
            relations.push(j.relation);
            weights.push(j.weight);
        }
    }
    let cols = indices.len();
    let mut averaging = vec![0.0; rows.len() * cols];
    for (r, (start, len)) in rows.into_iter().enumerate() {
        for k in start..start + len {
            averaging[r * cols + k] = 1.0 / len as f64;
        }
    }
    PatchPlan {
        indices,
        averaging,
        cols,
        relations,
        weights,
        skipped,
    }
}

/// Pairwise reflectance hinge, averaged over usable judgments.
///
/// `R` is the mean albedo luminance over a `(2r+1)²` patch (valid pixels
/// only), floored at `albedo_floor`. For "1 darker":
/// `w · max(1 + δ − R2/R1, 0)`; "2 darker" swaps the points; "equal":
/// `w · [max(R1/R2 − 1 − δ, 0) + max(R2/R1 − 1 − δ, 0)]`.
///
/// Judgments whose points fall outside the mask are skipped; their count is
/// returned alongside the loss. With no usable judgment the loss is 0.
pub fn whdr_hinge_loss_t(
    albedo: &Tensor,
    judgments: &[Vec<ReflectanceJudgment>],
    masks: &[Array2<bool>],
    cfg: &LossConfig,
) -> Result<(Tensor, usize)> {
    let (b, c, h, w) = albedo.dims4()?;
    if c != 3 || judgments.len() != b || masks.len() != b {
        return Err(Error::Argument(format!(
            "hinge needs 3-channel albedo and one judgment list and mask per image; got {c} channels, {} lists, {} masks for batch {b}",
            judgments.len(),
            masks.len()
        )));
    }
    let plan = plan_patches(judgments, masks, h, w, cfg.patch_radius);
    let (dtype, dev) = (albedo.dtype(), albedo.device());
    let t = plan.relations.len();
    if t == 0 {
        return Ok((Tensor::zeros((), dtype, dev)?, plan.skipped));
    }
    let luma = Tensor::new(&LUMA, dev)?.to_dtype(dtype)?.reshape((1, 3, 1, 1))?;
    let lum = albedo.broadcast_mul(&luma)?.sum(1)?.flatten_all()?;
    let idx = Tensor::from_vec(plan.indices, plan.cols, dev)?;
    let picked = lum.index_select(&idx, 0)?.reshape((plan.cols, 1))?;
    let avg = Tensor::from_vec(plan.averaging, (2 * t, plan.cols), dev)?.to_dtype(dtype)?;
    let r = avg.matmul(&picked)?.reshape((t, 2))?;
    let r = r.maximum(cfg.albedo_floor)?;
    let r1 = r.narrow(1, 0, 1)?.flatten_all()?;
    let r2 = r.narrow(1, 1, 1)?.flatten_all()?;
    let q21 = (&r2 / &r1)?;
    let q12 = (&r1 / &r2)?;
    let d = cfg.delta;
    let first = q21.affine(-1.0, 1.0 + d)?.relu()?;
    let second = q12.affine(-1.0, 1.0 + d)?.relu()?;
    let equal = (q12.affine(1.0, -1.0 - d)?.relu()? + q21.affine(1.0, -1.0 - d)?.relu()?)?;
    let sel = |rel: Relation| -> Vec<f64> {
        plan.relations
            .iter()
            .zip(&plan.weights)
            .map(|(r, w)| if *r == rel { *w / t as f64 } else { 0.0 })
            .collect()
    };
    let coef = |rel| -> Result<Tensor> { Ok(Tensor::from_vec(sel(rel), t, dev)?.to_dtype(dtype)?) };
    let loss = ((first * coef(Relation::Point1Darker)?)?.sum_all()?
        + (second * coef(Relation::Point2Darker)?)?.sum_all()?)?;
    let loss = (loss + (equal * coef(Relation::Equal)?)?.sum_all()?)?;
    Ok((loss, plan.skipped))
}

/// Masked L1 over normal components (the mask is the intersection of both
/// maps' validity).
pub fn normal_supervision_loss_t(pred: &Tensor, gt: &Tensor, mask: &Tensor) -> Result<Tensor> {
    masked_l1(pred, gt, mask)
}

pub struct PseudoTerms {
    pub albedo: Tensor,
    pub normal: Tensor,
    pub lighting: Tensor,
}

/// L1 toward a frozen model's outputs: masked on the image maps, plain on
/// the environment radiance.
pub fn pseudo_supervision_loss_t(pred: MapsRef, pseudo: MapsRef, mask: &Tensor) -> Result<PseudoTerms> {
    Ok(PseudoTerms {
        albedo: masked_l1(pred.albedo, pseudo.albedo, mask)?,
        normal: masked_l1(pred.normal, pseudo.normal, mask)?,
        lighting: mean_l1(pred.env, pseudo.env)?,
    })
}

// ---- single-image wrappers -------------------------------------------------

/// A loss value with its named components.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    pub terms: Vec<(String, f64)>,
}

fn f64_map(a: &ndarray::Array3<f64>) -> Result<Tensor> {
    array_to_tensor(a, DType::F64, &Device::Cpu)
}

fn f64_mask(m: &Array2<bool>) -> Result<Tensor> {
    mask_to_tensor(m, DType::F64, &Device::Cpu)
}

fn check_size(what: &str, (h, w): (usize, usize), mask: &Array2<bool>) -> Result<()> {
    if mask.dim() != (h, w) {
        return Err(Error::Argument(format!(
            "{what} is {h}x{w} but the mask is {:?}",
            mask.dim()
        )));
    }
    Ok(())
}

/// Map-level view of a decomposition for the wrappers.
#[derive(Clone, Copy)]
pub struct Maps<'a> {
    pub albedo: &'a AlbedoMap,
    pub normal: &'a NormalMap,
    pub env: &'a EnvironmentMap,
}

fn and_masks(mask: &Array2<bool>, n: &NormalMap) -> Array2<bool> {
    let mut m = mask.clone();
    m.zip_mut_with(n.valid(), |a, &b| *a = *a && b);
    m
}

pub fn supervised_loss(
    pred: Maps,
    gt: Maps,
    mask: &Array2<bool>,
    weighting: Weighting,
    cfg: &LossConfig,
) -> Result<LossBreakdown> {
    check_size("albedo", (pred.albedo.height(), pred.albedo.width()), mask)?;
    check_size("target albedo", (gt.albedo.height(), gt.albedo.width()), mask)?;
    let mask = and_masks(mask, gt.normal);
    let renderer = TensorRenderer::new(gt.env.rows(), gt.env.cols(), weighting, DType::F64, &Device::Cpu)?;
    let (pa, pn, pe) = (
        f64_map(pred.albedo.pixels())?,
        f64_map(pred.normal.vectors())?,
        f64_map(pred.env.radiance())?,
    );
    let (ga, gn, ge) = (
        f64_map(gt.albedo.pixels())?,
        f64_map(gt.normal.vectors())?,
        f64_map(gt.env.radiance())?,
    );
    let terms = supervised_loss_t(
        MapsRef { albedo: &pa, normal: &pn, env: &pe },
        MapsRef { albedo: &ga, normal: &gn, env: &ge },
        &f64_mask(&mask)?,
        &renderer,
        cfg,
    )?;
    Ok(LossBreakdown {
        total: scalar(&terms.total)?,
        terms: terms.values()?,
    })
}

pub fn reconstruction_loss(
    image: &ImageMap,
    direct: &ImageMap,
    residual: Option<&ResidualImage>,
    mask: &Array2<bool>,
) -> Result<f64> {
    check_size("image", (image.height(), image.width()), mask)?;
    check_size("direct render", (direct.height(), direct.width()), mask)?;
    let r = residual.map(|r| f64_map(r.pixels())).transpose()?;
    let loss = reconstruction_loss_t(
        &f64_map(image.pixels())?,
        &f64_map(direct.pixels())?,
        r.as_ref(),
        &f64_mask(mask)?,
    )?;
    scalar(&loss)
}

/// Returns the hinge loss and the number of skipped judgments.
pub fn whdr_hinge_loss(
    albedo: &AlbedoMap,
    judgments: &[ReflectanceJudgment],
    mask: &Array2<bool>,
    cfg: &LossConfig,
) -> Result<(f64, usize)> {
    check_size("albedo", (albedo.height(), albedo.width()), mask)?;
    let (loss, skipped) = whdr_hinge_loss_t(
        &f64_map(albedo.pixels())?,
        &[judgments.to_vec()],
        std::slice::from_ref(mask),
        cfg,
    )?;
    Ok((scalar(&loss)?, skipped))
}

pub fn normal_supervision_loss(pred: &NormalMap, gt: &NormalMap) -> Result<f64> {
    let mask = and_masks(pred.valid(), gt);
    let loss = normal_supervision_loss_t(
        &f64_map(pred.vectors())?,
        &f64_map(gt.vectors())?,
        &f64_mask(&mask)?,
    )?;
    scalar(&loss)
}

/// `(L_a, L_n, L_e)`.
pub fn pseudo_supervision_loss(pred: Maps, pseudo: Maps, mask: &Array2<bool>) -> Result<(f64, f64, f64)> {
    check_size("albedo", (pred.albedo.height(), pred.albedo.width()), mask)?;
    let mask = and_masks(mask, pseudo.normal);
    let (pa, pn, pe) = (
        f64_map(pred.albedo.pixels())?,
        f64_map(pred.normal.vectors())?,
        f64_map(pred.env.radiance())?,
    );
    let (qa, qn, qe) = (
        f64_map(pseudo.albedo.pixels())?,
        f64_map(pseudo.normal.vectors())?,
        f64_map(pseudo.env.radiance())?,
    );
    let t = pseudo_supervision_loss_t(
        MapsRef { albedo: &pa, normal: &pn, env: &pe },
        MapsRef { albedo: &qa, normal: &qn, env: &qe },
        &f64_mask(&mask)?,
    )?;
    Ok((scalar(&t.albedo)?, scalar(&t.normal)?, scalar(&t.lighting)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array3;

    #[test]
    fn composite_constants() {
        let cfg = LossConfig::default();
        let ones: BTreeMap<Term, f64> = [Term::Albedo, Term::Normal, Term::Lighting, Term::Recon, Term::Weak]
            .into_iter()
            .map(|t| (t, 1.0))
            .collect();
        assert_eq!(composite_real_loss(&ones, RealMode::Iiw, &cfg).unwrap(), 32.1);
        assert_eq!(composite_real_loss(&ones, RealMode::Nyu, &cfg).unwrap(), 21.25);
        let mut partial = ones.clone();
        partial.remove(&Term::Normal);
        assert!(composite_real_loss(&partial, RealMode::Nyu, &cfg).is_ok());
        assert!(matches!(
            composite_real_loss(&partial, RealMode::Iiw, &cfg),
            Err(Error::Argument(_))
        ));
    }

    fn judgment(relation: Relation, weight: f64) -> ReflectanceJudgment {
        ReflectanceJudgment {
            point1: [0.1, 0.5],
            point2: [0.9, 0.5],
            relation,
            weight,
        }
    }

    /// Left half luminance `a`, right half `b`.
    fn halves(a: f64, b: f64) -> AlbedoMap {
        AlbedoMap::new(Array3::from_shape_fn((6, 10, 3), |(_, x, _)| if x < 5 { a } else { b })).unwrap()
    }

    #[test]
    fn hinge_closed_forms() {
        let cfg = LossConfig::default();
        let mask = Array2::from_elem((6, 10), true);
        let l = |albedo: &AlbedoMap, j| whdr_hinge_loss(albedo, &[j], &mask, &cfg).unwrap().0;
        assert!(l(&halves(0.2, 0.4), judgment(Relation::Point1Darker, 1.0)).abs() < 1e-12);
        assert!((l(&halves(0.3, 0.3), judgment(Relation::Point1Darker, 1.0)) - 0.1).abs() < 1e-12);
        assert!((l(&halves(0.39, 0.3), judgment(Relation::Equal, 2.0)) - 0.4).abs() < 1e-12);
        assert!((l(&halves(0.3, 0.3), judgment(Relation::Point2Darker, 1.0)) - 0.1).abs() < 1e-12);
    }

    #[test]
    fn hinge_skips_masked_points() {
        let cfg = LossConfig::default();
        let mut mask = Array2::from_elem((6, 10), true);
        mask[[3, 1]] = false;
        let (loss, skipped) =
            whdr_hinge_loss(&halves(0.3, 0.3), &[judgment(Relation::Point1Darker, 1.0)], &mask, &cfg).unwrap();
        assert_eq!((loss, skipped), (0.0, 1));
    }

    #[test]
    fn reconstruction_closed_form() {
        let img = ImageMap::new(Array3::from_elem((2, 3, 3), 0.5)).unwrap();
        let direct = ImageMap::new(Array3::from_elem((2, 3, 3), 0.3)).unwrap();
        let mask = Array2::from_elem((2, 3), true);
        assert!((reconstruction_loss(&img, &direct, None, &mask).unwrap() - 0.2).abs() < 1e-12);
        let r = ResidualImage::new(Array3::from_elem((2, 3, 3), 0.2)).unwrap();
        assert!(reconstruction_loss(&img, &direct, Some(&r), &mask).unwrap().abs() < 1e-12);
    }

    #[test]
    fn empty_mask_is_an_error() {
        let n = NormalMap::new(Array3::zeros((2, 2, 3)), Array2::from_elem((2, 2), false)).unwrap();
        assert!(normal_supervision_loss(&n, &n).is_err());
    }
}
