//! Patch extraction (`im2col`) and its adjoint (`col2im`) as differentiable
//! custom ops, so convolutions become a single matmul with a cheap backward.

use candle_core::{CpuStorage, CustomOp1, Layout, Shape, Tensor, WithDType};

/// Geometry of a square-kernel convolution over `(B, C, H, W)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PatchGeometry {
    pub batch: usize,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

impl PatchGeometry {
    pub fn out_height(&self) -> usize {
        (self.height + 2 * self.padding - self.kernel) / self.stride + 1
    }

    pub fn out_width(&self) -> usize {
        (self.width + 2 * self.padding - self.kernel) / self.stride + 1
    }

    /// `(C·k², B·Ho·Wo)`.
    pub fn cols_shape(&self) -> (usize, usize) {
        (
            self.channels * self.kernel * self.kernel,
            self.batch * self.out_height() * self.out_width(),
        )
    }

    /// Output columns `ox` whose tap at kernel column `b` lands inside the
    /// input, as a half-open range.
    fn valid_cols(&self, b: usize) -> std::ops::Range<usize> {
        let (s, p) = (self.stride, self.padding);
        let lo = if b >= p { 0 } else { (p - b).div_ceil(s) };
        let hi = if self.width + p <= b {
            0
        } else {
            ((self.width + p - b - 1) / s + 1).min(self.out_width())
        };
        lo..hi.max(lo)
    }

    /// Calls `f(cols_offset, input_offset, len, input_step)` for every
    /// in-bounds run of taps; consecutive output columns in a run read the
    /// input `input_step` apart.
    fn for_each_run(&self, mut f: impl FnMut(usize, usize, usize, usize)) {
        let (ho, wo) = (self.out_height(), self.out_width());
        let k = self.kernel;
        let ncols = self.batch * ho * wo;
        for c in 0..self.channels {
            for a in 0..k {
                for b in 0..k {
                    let row = (c * k + a) * k + b;
                    let xs = self.valid_cols(b);
                    if xs.is_empty() {
                        continue;
                    }
                    let x0 = xs.start * self.stride + b - self.padding;
                    for n in 0..self.batch {
                        let base = (n * self.channels + c) * self.height * self.width;
                        for oy in 0..ho {
                            let y = oy * self.stride + a;
                            if y < self.padding || y - self.padding >= self.height {
                                continue;
                            }
                            let y = y - self.padding;
                            let col = (n * ho + oy) * wo + xs.start;
                            f(row * ncols + col, base + y * self.width + x0, xs.len(), self.stride);
                        }
                    }
                }
            }
        }
    }
}

fn contiguous_slice<'a, T: WithDType>(data: &'a [T], layout: &Layout) -> candle_core::Result<&'a [T]> {
    match layout.contiguous_offsets() {
        Some((start, end)) => Ok(&data[start..end]),
        None => candle_core::bail!("patch op expects a contiguous tensor"),
    }
}

fn dispatch(
    storage: &CpuStorage,
    layout: &Layout,
    f32_op: impl Fn(&[f32]) -> Vec<f32>,
    f64_op: impl Fn(&[f64]) -> Vec<f64>,
) -> candle_core::Result<CpuStorage> {
    match storage {
        CpuStorage::F32(d) => Ok(CpuStorage::F32(f32_op(contiguous_slice(d, layout)?))),
        CpuStorage::F64(d) => Ok(CpuStorage::F64(f64_op(contiguous_slice(d, layout)?))),
        _ => candle_core::bail!("patch ops support f32 and f64 only"),
    }
}

fn im2col_slice<T: WithDType>(g: &PatchGeometry, src: &[T]) -> Vec<T> {
    let (_, ncols) = g.cols_shape();
    let mut out = vec![T::zero(); g.cols_shape().0 * ncols];
    g.for_each_run(|o, i, len, step| {
        if step == 1 {
            out[o..o + len].copy_from_slice(&src[i..i + len]);
        } else {
            for (j, v) in out[o..o + len].iter_mut().enumerate() {
                *v = src[i + j * step];
            }
        }
    });
    out
}

fn col2im_slice<T: WithDType>(g: &PatchGeometry, src: &[T]) -> Vec<T> {
    let mut out = vec![T::zero(); g.batch * g.channels * g.height * g.width];
    g.for_each_run(|o, i, len, step| {
        for (j, v) in src[o..o + len].iter().enumerate() {
            out[i + j * step] += *v;
        }
    });
    out
}

pub struct Im2Col(pub PatchGeometry);
pub struct Col2Im(pub PatchGeometry);

impl CustomOp1 for Im2Col {
    fn name(&self) -> &'static str {
        "im2col"
    }

    fn cpu_fwd(&self, storage: &CpuStorage, layout: &Layout) -> candle_core::Result<(CpuStorage, Shape)> {
        let g = &self.0;
        let out = dispatch(storage, layout, |s| im2col_slice(g, s), |s| im2col_slice(g, s))?;
        Ok((out, Shape::from(g.cols_shape())))
    }

    fn bwd(&self, _arg: &Tensor, _res: &Tensor, grad: &Tensor) -> candle_core::Result<Option<Tensor>> {
        Ok(Some(grad.contiguous()?.apply_op1(Col2Im(self.0))?))
    }
}

impl CustomOp1 for Col2Im {
    fn name(&self) -> &'static str {
        "col2im"
    }

    fn cpu_fwd(&self, storage: &CpuStorage, layout: &Layout) -> candle_core::Result<(CpuStorage, Shape)> {
        let g = &self.0;
        let out = dispatch(storage, layout, |s| col2im_slice(g, s), |s| col2im_slice(g, s))?;
        Ok((out, Shape::from((g.batch, g.channels, g.height, g.width))))
    }

    fn bwd(&self, _arg: &Tensor, _res: &Tensor, grad: &Tensor) -> candle_core::Result<Option<Tensor>> {
        Ok(Some(grad.contiguous()?.apply_op1(Im2Col(self.0))?))
    }
}

/// Spreads `(B, C, H, W)` onto a `(B, C, 2H, 2W)` grid at even positions,
/// zeros elsewhere.
pub struct ZeroInsert;

fn zero_insert_slice<T: WithDType>(dims: (usize, usize, usize), src: &[T]) -> Vec<T> {
    let (bc, h, w) = dims;
    let mut out = vec![T::zero(); bc * 4 * h * w];
    for p in 0..bc {
        for y in 0..h {
            for x in 0..w {
                out[(p * 2 * h + 2 * y) * 2 * w + 2 * x] = src[(p * h + y) * w + x];
            }
        }
    }
    out
}

impl CustomOp1 for ZeroInsert {
    fn name(&self) -> &'static str {
        "zero-insert"
    }

    fn cpu_fwd(&self, storage: &CpuStorage, layout: &Layout) -> candle_core::Result<(CpuStorage, Shape)> {
        let (b, c, h, w) = layout.shape().dims4()?;
        let d = (b * c, h, w);
        let out = dispatch(storage, layout, |s| zero_insert_slice(d, s), |s| zero_insert_slice(d, s))?;
        Ok((out, Shape::from((b, c, 2 * h, 2 * w))))
    }

    fn bwd(&self, arg: &Tensor, _res: &Tensor, grad: &Tensor) -> candle_core::Result<Option<Tensor>> {
        let (b, c, h, w) = arg.dims4()?;
        let g = grad
            .reshape((b, c, h, 2, w, 2))?
            .narrow(3, 0, 1)?
            .narrow(5, 0, 1)?
            .reshape((b, c, h, w))?;
        Ok(Some(g))
    }
}
