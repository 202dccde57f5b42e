use std::sync::Arc;

use candle_core::{CpuStorage, CustomOp2, CustomOp3, DType, Device, Layout, Shape, Tensor};

use super::{DirectionGrid, Weighting};
use crate::error::Result;

/// Batched, differentiable counterpart of [`super::shade_direct`].
///
/// Maps are `(B, 3, H, W)` tensors; environments are `(B, 3, R, C)`.
#[derive(Clone, Debug)]
pub struct TensorRenderer {
    /// Cell directions, row-major `(R·C, 3)`.
    dirs: Arc<Vec<[f64; 3]>>,
    /// `(1, R·C, 1)` per-cell weights.
    weights: Tensor,
    rows: usize,
    cols: usize,
}

impl TensorRenderer {
    pub fn new(
        rows: usize,
        cols: usize,
        weighting: Weighting,
        dtype: DType,
        device: &Device,
    ) -> Result<Self> {
        let grid = DirectionGrid::new(rows, cols)?;
        let n = grid.len();
        let dirs = Arc::new(grid.directions().to_vec());
        let weights = Tensor::from_vec(weighting.cell_weights(&grid), (1, n, 1), device)?
            .to_dtype(dtype)?;
        Ok(Self {
            dirs,
            weights,
            rows,
            cols,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// `Σ_i w_i max(0, n̂·d_i) L_i`, with `n̂ = n / |n|`.
    pub fn shading(&self, normal: &Tensor, env: &Tensor) -> Result<Tensor> {
        let (b, _, h, w) = normal.dims4()?;
        let norm = (normal.sqr()?.sum_keepdim(1)? + 1e-12)?.sqrt()?;
        let unit = normal.broadcast_div(&norm)?;
        let flat = unit.permute((0, 2, 3, 1))?.reshape((b, h * w, 3))?.contiguous()?;
        let cells = self.rows * self.cols;
        let radiance = env
            .reshape((b, 3, cells))?
            .transpose(1, 2)?
            .broadcast_mul(&self.weights)?
            .contiguous()?;
        let s = flat.apply_op2(&radiance, ShadingOp(self.dirs.clone()))?;
        Ok(s.reshape((b, h, w, 3))?.permute((0, 3, 1, 2))?.contiguous()?)
    }

    /// Direct render `A ⊙ shading(N, L)`.
    pub fn shade(&self, albedo: &Tensor, normal: &Tensor, env: &Tensor) -> Result<Tensor> {
        Ok((albedo * self.shading(normal, env)?)?)
    }
}

fn to_f64_vec(storage: &CpuStorage, layout: &Layout) -> candle_core::Result<Vec<f64>> {
    let (start, end) = layout
        .contiguous_offsets()
        .ok_or_else(|| candle_core::Error::Msg("shading op expects contiguous tensors".into()))?;
    Ok(match storage {
        CpuStorage::F32(d) => d[start..end].iter().map(|&v| v as f64).collect(),
        CpuStorage::F64(d) => d[start..end].to_vec(),
        _ => candle_core::bail!("shading op supports f32 and f64 only"),
    })
}

fn from_f64_vec(like: &CpuStorage, v: Vec<f64>) -> CpuStorage {
    match like {
        CpuStorage::F32(_) => CpuStorage::F32(v.into_iter().map(|x| x as f32).collect()),
        _ => CpuStorage::F64(v),
    }
}

/// Clamped-cosine shading of unit normals `(B, P, 3)` under weighted cell
/// radiance `(B, R·C, 3)`. Fused so the `(B, P, R·C)` cosine table is never
/// materialized, in either direction.
struct ShadingOp(Arc<Vec<[f64; 3]>>);

/// Gradients of [`ShadingOp`] given the upstream gradient; returns the normal
/// gradient `(B, P, 3)` followed by the radiance gradient `(B, R·C, 3)` along
/// dimension 1.
struct ShadingGradOp(Arc<Vec<[f64; 3]>>);

fn shading_dims(ln: &Layout, lr: &Layout, dirs: usize) -> candle_core::Result<(usize, usize)> {
    let (b, p, k) = ln.shape().dims3()?;
    let (b2, c, k2) = lr.shape().dims3()?;
    if b != b2 || k != 3 || k2 != 3 || c != dirs {
        candle_core::bail!("shading op shape mismatch {:?} {:?}", ln.shape(), lr.shape());
    }
    Ok((b, p))
}

impl CustomOp2 for ShadingOp {
    fn name(&self) -> &'static str {
        "shading"
    }

    fn cpu_fwd(
        &self,
        sn: &CpuStorage,
        ln: &Layout,
        sr: &CpuStorage,
        lr: &Layout,
    ) -> candle_core::Result<(CpuStorage, Shape)> {
        let dirs = &self.0;
        let (b, p) = shading_dims(ln, lr, dirs.len())?;
        let normals = to_f64_vec(sn, ln)?;
        let radiance = to_f64_vec(sr, lr)?;
        let cells = dirs.len();
        let mut out = vec![0.0; b * p * 3];
        for bi in 0..b {
            let rad = &radiance[bi * cells * 3..(bi + 1) * cells * 3];
            for pi in 0..p {
                let o = (bi * p + pi) * 3;
                let n = &normals[o..o + 3];
                let mut acc = [0.0; 3];
                for (d, r) in dirs.iter().zip(rad.chunks_exact(3)) {
                    let c = n[0] * d[0] + n[1] * d[1] + n[2] * d[2];
                    if c > 0.0 {
                        acc[0] += c * r[0];
                        acc[1] += c * r[1];
                        acc[2] += c * r[2];
                    }
                }
                out[o..o + 3].copy_from_slice(&acc);
            }
        }
        Ok((from_f64_vec(sn, out), Shape::from((b, p, 3))))
    }

    fn bwd(
        &self,
        normals: &Tensor,
        radiance: &Tensor,
        _res: &Tensor,
        grad: &Tensor,
    ) -> candle_core::Result<(Option<Tensor>, Option<Tensor>)> {
        let p = normals.dim(1)?;
        let both = normals.apply_op3_no_bwd(
            &radiance.contiguous()?,
            &grad.contiguous()?,
            &ShadingGradOp(self.0.clone()),
        )?;
        let gn = both.narrow(1, 0, p)?;
        let gr = both.narrow(1, p, self.0.len())?;
        Ok((Some(gn), Some(gr)))
    }
}

impl CustomOp3 for ShadingGradOp {
    fn name(&self) -> &'static str {
        "shading-grad"
    }

    fn cpu_fwd(
        &self,
        sn: &CpuStorage,
        ln: &Layout,
        sr: &CpuStorage,
        lr: &Layout,
        sg: &CpuStorage,
        lg: &Layout,
    ) -> candle_core::Result<(CpuStorage, Shape)> {
        let dirs = &self.0;
        let (b, p) = shading_dims(ln, lr, dirs.len())?;
        let cells = dirs.len();
        let normals = to_f64_vec(sn, ln)?;
        let radiance = to_f64_vec(sr, lr)?;
        let grad = to_f64_vec(sg, lg)?;
        let mut out = vec![0.0; b * (p + cells) * 3];
        for bi in 0..b {
            let rad = &radiance[bi * cells * 3..(bi + 1) * cells * 3];
            let (gn_all, gr_all) = out[bi * (p + cells) * 3..(bi + 1) * (p + cells) * 3].split_at_mut(p * 3);
            for pi in 0..p {
                let o = (bi * p + pi) * 3;
                let n = &normals[o..o + 3];
                let g = &grad[o..o + 3];
                let mut gn = [0.0; 3];
                for (i, (d, r)) in dirs.iter().zip(rad.chunks_exact(3)).enumerate() {
                    let c = n[0] * d[0] + n[1] * d[1] + n[2] * d[2];
                    if c > 0.0 {
                        let lg = r[0] * g[0] + r[1] * g[1] + r[2] * g[2];
                        gn[0] += lg * d[0];
                        gn[1] += lg * d[1];
                        gn[2] += lg * d[2];
                        let gr = &mut gr_all[i * 3..i * 3 + 3];
                        gr[0] += c * g[0];
                        gr[1] += c * g[1];
                        gr[2] += c * g[2];
                    }
                }
                gn_all[pi * 3..pi * 3 + 3].copy_from_slice(&gn);
            }
        }
        Ok((from_f64_vec(sn, out), Shape::from((b, p + cells, 3))))
    }
}
