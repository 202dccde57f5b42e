use candle_core::{DType, Device, Tensor, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::im2col::{Im2Col, PatchGeometry, ZeroInsert};
use crate::error::{Error, Result};
use crate::scene::codec::bilinear_taps;

/// Whether batch normalization uses batch statistics (and updates its
/// running averages) or the stored running averages.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Parameters as seen by a forward pass. Evaluation detaches them so no
/// autodiff graph is kept over the weights; gradients still reach the inputs.
fn param(t: &Tensor, mode: Mode) -> Tensor {
    match mode {
        Mode::Train => t.clone(),
        Mode::Eval => t.detach(),
    }
}

/// Named trainable parameters and non-trainable buffers of one network.
///
/// Initialization draws from a seeded ChaCha stream in creation order, so a
/// network built twice with the same seed is bitwise identical.
pub struct ParamStore {
    params: Vec<(String, Var)>,
    buffers: Vec<(String, Var)>,
    rng: ChaCha8Rng,
    dtype: DType,
    device: Device,
}

impl ParamStore {
    pub fn new(seed: u64, dtype: DType, device: &Device) -> Self {
        Self {
            params: Vec::new(),
            buffers: Vec::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
            dtype,
            device: device.clone(),
        }
    }

    pub fn dtype(&self) -> DType {
        self.dtype
    }

    pub fn device(&self) -> &Device {
        &self.device
    }

    fn check_name(&self, name: &str) -> Result<()> {
        if self.params.iter().chain(&self.buffers).any(|(n, _)| n == name) {
            return Err(Error::Argument(format!("duplicate parameter `{name}`")));
        }
        Ok(())
    }

    /// Zero-mean normal initialization with standard deviation `std`.
    pub fn normal(&mut self, name: &str, shape: &[usize], std: f64) -> Result<Tensor> {
        self.check_name(name)?;
        let dist = Normal::new(0.0, std).map_err(|e| Error::Argument(e.to_string()))?;
        let n: usize = shape.iter().product();
        let data: Vec<f64> = (0..n).map(|_| dist.sample(&mut self.rng)).collect();
        let t = Tensor::from_vec(data, shape, &self.device)?.to_dtype(self.dtype)?;
        let var = Var::from_tensor(&t)?;
        let out = var.as_tensor().clone();
        self.params.push((name.to_string(), var));
        Ok(out)
    }

    pub fn constant(&mut self, name: &str, shape: &[usize], value: f64) -> Result<Tensor> {
        self.check_name(name)?;
        let t = (Tensor::ones(shape, self.dtype, &self.device)? * value)?;
        let var = Var::from_tensor(&t)?;
        let out = var.as_tensor().clone();
        self.params.push((name.to_string(), var));
        Ok(out)
    }

    fn buffer(&mut self, name: &str, shape: &[usize], value: f64) -> Result<Var> {
        self.check_name(name)?;
        let t = (Tensor::ones(shape, self.dtype, &self.device)? * value)?;
        let var = Var::from_tensor(&t)?;
        self.buffers.push((name.to_string(), var.clone()));
        Ok(var)
    }

    pub fn params(&self) -> &[(String, Var)] {
        &self.params
    }

    pub fn buffers(&self) -> &[(String, Var)] {
        &self.buffers
    }

    pub fn trainable(&self) -> Vec<Var> {
        self.params.iter().map(|(_, v)| v.clone()).collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.params.iter().map(|(_, v)| v.elem_count()).sum()
    }

    /// Every parameter and buffer, by name.
    pub fn named_tensors(&self) -> impl Iterator<Item = (&str, &Var)> {
        self.params
            .iter()
            .chain(&self.buffers)
            .map(|(n, v)| (n.as_str(), v))
    }
}

pub fn kaiming_std(fan_in: usize) -> f64 {
    (2.0 / fan_in as f64).sqrt()
}

/// Cross-correlation of `(B, C, H, W)` with `(O, C, k, k)` as one matmul
/// over extracted patches.
///
/// candle's own CPU convolution differentiates the input through a slow
/// direct transposed convolution; the patch ops here have linear-time
/// adjoints.
pub fn conv2d(x: &Tensor, weight: &Tensor, padding: usize, stride: usize) -> Result<Tensor> {
    let (b, c, h, w) = x.dims4()?;
    let (o, wc, k, k2) = weight.dims4()?;
    if wc != c || k != k2 || h + 2 * padding < k || w + 2 * padding < k {
        return Err(Error::Shape(format!(
            "conv kernel {:?} does not fit input {:?}",
            weight.dims(),
            x.dims()
        )));
    }
    let g = PatchGeometry {
        batch: b,
        channels: c,
        height: h,
        width: w,
        kernel: k,
        stride,
        padding,
    };
    let cols = x.contiguous()?.apply_op1(Im2Col(g))?;
    let y = weight.reshape((o, c * k * k))?.matmul(&cols)?;
    Ok(y.reshape((o, b, g.out_height(), g.out_width()))?
        .transpose(0, 1)?
        .contiguous()?)
}

#[derive(Clone, Debug)]
pub struct Conv2d {
    weight: Tensor,
    bias: Option<Tensor>,
    stride: usize,
    padding: usize,
}

impl Conv2d {
    /// Square kernel with "same"-style padding `k / 2`.
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        c_in: usize,
        c_out: usize,
        kernel: usize,
        stride: usize,
        bias: bool,
    ) -> Result<Self> {
        Self::with_std(store, name, c_in, c_out, kernel, stride, bias, kaiming_std(c_in * kernel * kernel))
    }

    #[allow(clippy::too_many_arguments)]
    pub fn with_std(
        store: &mut ParamStore,
        name: &str,
        c_in: usize,
        c_out: usize,
        kernel: usize,
        stride: usize,
        bias: bool,
        std: f64,
    ) -> Result<Self> {
        let weight = store.normal(&format!("{name}.weight"), &[c_out, c_in, kernel, kernel], std)?;
        let bias = if bias {
            Some(store.constant(&format!("{name}.bias"), &[c_out], 0.0)?)
        } else {
            None
        };
        Ok(Self {
            weight,
            bias,
            stride,
            padding: kernel / 2,
        })
    }

    pub fn weight(&self) -> &Tensor {
        &self.weight
    }

    pub fn forward(&self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        let y = conv2d(x, &param(&self.weight, mode), self.padding, self.stride)?;
        match &self.bias {
            Some(b) => Ok(y.broadcast_add(&param(b, mode).reshape((1, (), 1, 1))?)?),
            None => Ok(y),
        }
    }
}

/// 3×3 transposed convolution (stride 2, padding 1, output padding 1) that
/// exactly doubles the spatial size.
///
/// Evaluated as zero insertion followed by an ordinary convolution, which is
/// much faster than the CPU transposed-conv kernel. The stored weight is the
/// equivalent `(c_out, c_in, 3, 3)` convolution kernel, i.e. the transposed
/// kernel with in/out swapped and flipped spatially.
#[derive(Clone, Debug)]
pub struct ConvTranspose2d {
    weight: Tensor,
}

impl ConvTranspose2d {
    pub fn new(store: &mut ParamStore, name: &str, c_in: usize, c_out: usize) -> Result<Self> {
        let weight = store.normal(
            &format!("{name}.weight"),
            &[c_out, c_in, 3, 3],
            kaiming_std(c_in * 9 / 4),
        )?;
        Ok(Self { weight })
    }

    pub fn weight(&self) -> &Tensor {
        &self.weight
    }

    pub fn forward(&self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        let up = x.contiguous()?.apply_op1(ZeroInsert)?;
        conv2d(&up, &param(&self.weight, mode), 1, 1)
    }
}

#[derive(Clone, Debug)]
pub struct BatchNorm2d {
    gamma: Tensor,
    beta: Tensor,
    running_mean: Var,
    running_var: Var,
    momentum: f64,
    eps: f64,
}

impl BatchNorm2d {
    pub fn new(store: &mut ParamStore, name: &str, channels: usize) -> Result<Self> {
        Ok(Self {
            gamma: store.constant(&format!("{name}.gamma"), &[channels], 1.0)?,
            beta: store.constant(&format!("{name}.beta"), &[channels], 0.0)?,
            running_mean: store.buffer(&format!("{name}.running_mean"), &[channels], 0.0)?,
            running_var: store.buffer(&format!("{name}.running_var"), &[channels], 1.0)?,
            momentum: 0.1,
            eps: 1e-5,
        })
    }

    pub fn forward(&self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        let (b, c, h, w) = x.dims4()?;
        let (mean, var) = match mode {
            Mode::Train => {
                let flat = x.transpose(0, 1)?.contiguous()?.reshape((c, b * h * w))?;
                let mean = flat.mean_keepdim(1)?;
                let var = flat.broadcast_sub(&mean)?.sqr()?.mean_keepdim(1)?;
                let n = (b * h * w) as f64;
                let unbiased = if n > 1.0 { n / (n - 1.0) } else { 1.0 };
                let m = self.momentum;
                let new_mean = ((self.running_mean.as_tensor() * (1.0 - m))?
                    + (mean.flatten_all()?.detach() * m)?)?;
                let new_var = ((self.running_var.as_tensor() * (1.0 - m))?
                    + (var.flatten_all()?.detach() * (m * unbiased))?)?;
                self.running_mean.set(&new_mean)?;
                self.running_var.set(&new_var)?;
                (mean.reshape((1, c, 1, 1))?, var.reshape((1, c, 1, 1))?)
            }
            Mode::Eval => (
                self.running_mean.as_tensor().detach().reshape((1, c, 1, 1))?,
                self.running_var.as_tensor().detach().reshape((1, c, 1, 1))?,
            ),
        };
        let xhat = x
            .broadcast_sub(&mean)?
            .broadcast_div(&(var + self.eps)?.sqrt()?)?;
        Ok(xhat
            .broadcast_mul(&param(&self.gamma, mode).reshape((1, c, 1, 1))?)?
            .broadcast_add(&param(&self.beta, mode).reshape((1, c, 1, 1))?)?)
    }
}

/// Convolution, batch normalization and ReLU.
#[derive(Clone, Debug)]
pub struct ConvBnRelu {
    conv: Conv2d,
    bn: BatchNorm2d,
}

impl ConvBnRelu {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        c_in: usize,
        c_out: usize,
        kernel: usize,
        stride: usize,
    ) -> Result<Self> {
        Ok(Self {
            conv: Conv2d::new(store, &format!("{name}.conv"), c_in, c_out, kernel, stride, false)?,
            bn: BatchNorm2d::new(store, &format!("{name}.bn"), c_out)?,
        })
    }

    pub fn forward(&self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        Ok(self.bn.forward(&self.conv.forward(x, mode)?, mode)?.relu()?)
    }
}

/// Transposed convolution (×2), batch normalization and ReLU.
#[derive(Clone, Debug)]
pub struct DeconvBnRelu {
    deconv: ConvTranspose2d,
    bn: BatchNorm2d,
}

impl DeconvBnRelu {
    pub fn new(store: &mut ParamStore, name: &str, c_in: usize, c_out: usize) -> Result<Self> {
        Ok(Self {
            deconv: ConvTranspose2d::new(store, &format!("{name}.deconv"), c_in, c_out)?,
            bn: BatchNorm2d::new(store, &format!("{name}.bn"), c_out)?,
        })
    }

    pub fn forward(&self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        Ok(self.bn.forward(&self.deconv.forward(x, mode)?, mode)?.relu()?)
    }
}

/// `x + BN(conv(ReLU(BN(conv(x)))))`.
#[derive(Clone, Debug)]
pub struct ResBlock {
    a: ConvBnRelu,
    conv: Conv2d,
    bn: BatchNorm2d,
}

impl ResBlock {
    pub fn new(store: &mut ParamStore, name: &str, channels: usize) -> Result<Self> {
        Ok(Self {
            a: ConvBnRelu::new(store, &format!("{name}.a"), channels, channels, 3, 1)?,
            conv: Conv2d::new(store, &format!("{name}.b.conv"), channels, channels, 3, 1, false)?,
            bn: BatchNorm2d::new(store, &format!("{name}.b.bn"), channels)?,
        })
    }

    pub fn forward(&self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        let y = self.a.forward(x, mode)?;
        let y = self.bn.forward(&self.conv.forward(&y, mode)?, mode)?;
        Ok((x + y)?)
    }
}

/// Fully connected layer on `(B, N)` inputs.
#[derive(Clone, Debug)]
pub struct Linear {
    weight: Tensor,
    bias: Tensor,
}

impl Linear {
    pub fn new(store: &mut ParamStore, name: &str, n_in: usize, n_out: usize) -> Result<Self> {
        Ok(Self {
            weight: store.normal(&format!("{name}.weight"), &[n_out, n_in], kaiming_std(n_in))?,
            bias: store.constant(&format!("{name}.bias"), &[n_out], 0.0)?,
        })
    }

    pub fn forward(&self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        Ok(x.matmul(&param(&self.weight, mode).t()?)?.broadcast_add(&param(&self.bias, mode))?)
    }
}

fn interpolation_matrix(dst: usize, src: usize, dtype: DType, device: &Device) -> Result<Tensor> {
    let mut m = vec![0.0f64; dst * src];
    for (i, taps) in bilinear_taps(dst, src).into_iter().enumerate() {
        for (j, w) in taps {
            m[i * src + j] += w;
        }
    }
    Ok(Tensor::from_vec(m, (dst, src), device)?.to_dtype(dtype)?)
}

/// Differentiable bilinear resize of `(B, C, H, W)` with half-pixel centers.
pub fn resize_bilinear(x: &Tensor, height: usize, width: usize) -> Result<Tensor> {
    let (_, _, h, w) = x.dims4()?;
    if (h, w) == (height, width) {
        return Ok(x.clone());
    }
    let ry = interpolation_matrix(height, h, x.dtype(), x.device())?;
    let rx_t = interpolation_matrix(width, w, x.dtype(), x.device())?.t()?;
    let y = x.broadcast_matmul(&rx_t)?;
    Ok(ry.broadcast_matmul(&y)?)
}

/// `ln(1 + e^x)`, evaluated stably as `max(x, 0) + ln(1 + e^{-|x|})`.
pub fn softplus(x: &Tensor) -> Result<Tensor> {
    let tail = (x.abs()?.neg()?.exp()? + 1.0)?.log()?;
    Ok((x.relu()? + tail)?)
}

/// Unit-normalizes `(B, 3, H, W)` along the channel axis.
pub fn normalize_channels(x: &Tensor) -> Result<Tensor> {
    let norm = (x.sqr()?.sum_keepdim(1)? + 1e-12)?.sqrt()?;
    Ok(x.broadcast_div(&norm)?)
}

/// Fails with a numeric error naming `layer` if `x` has non-finite entries.
pub fn check_finite(layer: &str, x: &Tensor) -> Result<()> {
    let s = x.abs()?.sum_all()?.to_dtype(DType::F64)?.to_scalar::<f64>()?;
    if s.is_finite() {
        Ok(())
    } else {
        Err(Error::Numeric(format!("non-finite activations after `{layer}`")))
    }
}

/// Broadcasts a `(B, N)` code over a `(B, _, H, W)` grid as `(B, N, H, W)`.
pub fn tile_code(code: &Tensor, height: usize, width: usize) -> Result<Tensor> {
    let (b, n) = code.dims2()?;
    Ok(code
        .reshape((b, n, 1, 1))?
        .broadcast_as((b, n, height, width))?
        .contiguous()?)
}
