//! Conversions between the `H×W×C` domain arrays and `NCHW` tensors.

use candle_core::{DType, Device, Tensor};
use ndarray::{Array2, Array3};

use crate::error::{Error, Result};

/// `H×W×C` array → `(1, C, H, W)` tensor.
pub fn array_to_tensor(a: &Array3<f64>, dtype: DType, device: &Device) -> Result<Tensor> {
    let (h, w, c) = a.dim();
    let mut flat = Vec::with_capacity(h * w * c);
    for k in 0..c {
        for y in 0..h {
            for x in 0..w {
                flat.push(a[[y, x, k]]);
            }
        }
    }
    Ok(Tensor::from_vec(flat, (1, c, h, w), device)?.to_dtype(dtype)?)
}

/// `H×W` mask → `(1, 1, H, W)` tensor of zeros and ones.
pub fn mask_to_tensor(m: &Array2<bool>, dtype: DType, device: &Device) -> Result<Tensor> {
    let (h, w) = m.dim();
    let flat: Vec<f64> = m.iter().map(|&v| if v { 1.0 } else { 0.0 }).collect();
    Ok(Tensor::from_vec(flat, (1, 1, h, w), device)?.to_dtype(dtype)?)
}

/// `(C, H, W)` or `(1, C, H, W)` tensor → `H×W×C` array.
pub fn tensor_to_array(t: &Tensor) -> Result<Array3<f64>> {
    let t = match t.rank() {
        4 => {
            if t.dim(0)? != 1 {
                return Err(Error::Shape(format!("expected a single item, got {:?}", t.dims())));
            }
            t.squeeze(0)?
        }
        3 => t.clone(),
        _ => return Err(Error::Shape(format!("cannot convert {:?} to a map", t.dims()))),
    };
    let (c, h, w) = t.dims3()?;
    let flat = t.to_dtype(DType::F64)?.flatten_all()?.to_vec1::<f64>()?;
    Ok(Array3::from_shape_fn((h, w, c), |(y, x, k)| flat[k * h * w + y * w + x]))
}

/// Stacks `(1, C, H, W)` tensors along the batch axis.
pub fn batch(items: &[Tensor]) -> Result<Tensor> {
    Ok(Tensor::cat(items, 0)?)
}
