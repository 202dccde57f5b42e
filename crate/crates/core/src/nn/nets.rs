use candle_core::{DType, Device, Tensor};

use super::config::{ModelConfig, LATENT_DIM};
use super::layers::{
    kaiming_std,
    check_finite, normalize_channels, resize_bilinear, softplus, tile_code, Conv2d, ConvBnRelu,
    DeconvBnRelu, Linear, Mode, ParamStore, ResBlock,
};
use crate::convert::{array_to_tensor, tensor_to_array};
use crate::error::{Error, Result};
use crate::scene::{AlbedoMap, EnvironmentMap, ImageMap, NormalMap, ResidualImage};

fn expect_input(what: &str, x: &Tensor, channels: usize, cfg: &ModelConfig) -> Result<usize> {
    let (b, c, h, w) = x.dims4().map_err(|_| {
        Error::Shape(format!("{what}: expected a (B, {channels}, H, W) tensor, got {:?}", x.dims()))
    })?;
    if (c, h, w) != (channels, cfg.height, cfg.width) {
        return Err(Error::Shape(format!(
            "{what}: expected ({channels}, {}, {}), got ({c}, {h}, {w})",
            cfg.height, cfg.width
        )));
    }
    Ok(b)
}

fn map_tensor(a: &ndarray::Array3<f64>, store: &ParamStore) -> Result<Tensor> {
    array_to_tensor(a, store.dtype(), store.device())
}

/// Strided conv stack ending in a nonnegative `rows×cols` environment map.
struct LightHead {
    reduce: ConvBnRelu,
    down1: ConvBnRelu,
    down2: ConvBnRelu,
    out: Conv2d,
    rows: usize,
    cols: usize,
    scale: f64,
}

impl LightHead {
    fn new(store: &mut ParamStore, name: &str, c_in: usize, cfg: &ModelConfig) -> Result<Self> {
        let (c256, c128) = (cfg.ch(256), cfg.ch(128));
        let stride = |i: usize| if i < cfg.light_downsamples { 2 } else { 1 };
        Ok(Self {
            reduce: ConvBnRelu::new(store, &format!("{name}.reduce"), c_in, c256, 1, 1)?,
            down1: ConvBnRelu::new(store, &format!("{name}.down1"), c256, c256, 3, stride(0))?,
            down2: ConvBnRelu::new(store, &format!("{name}.down2"), c256, c128, 3, stride(1))?,
            out: Conv2d::new(store, &format!("{name}.out"), c128, 3, 3, stride(2), true)?,
            rows: cfg.env_rows,
            cols: cfg.env_cols,
            scale: cfg.env_scale,
        })
    }

    fn forward(&self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        let y = self.reduce.forward(x, mode)?;
        let y = self.down1.forward(&y, mode)?;
        let y = self.down2.forward(&y, mode)?;
        let y = self.out.forward(&y, mode)?;
        let y = resize_bilinear(&y, self.rows, self.cols)?;
        Ok((softplus(&y)? * self.scale)?)
    }
}

/// Two ×2 transposed convs then a 7×7 conv and tanh, giving `[-1, 1]`.
struct MapDecoder {
    up1: DeconvBnRelu,
    up2: DeconvBnRelu,
    out: Conv2d,
}

impl MapDecoder {
    fn new(store: &mut ParamStore, name: &str, cfg: &ModelConfig) -> Result<Self> {
        Ok(Self {
            up1: DeconvBnRelu::new(store, &format!("{name}.up1"), cfg.ch(256), cfg.ch(128))?,
            up2: DeconvBnRelu::new(store, &format!("{name}.up2"), cfg.ch(128), cfg.ch(64))?,
            out: Conv2d::new(store, &format!("{name}.out"), cfg.ch(64), 3, 7, 1, true)?,
        })
    }

    fn forward(&self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        let y = self.up1.forward(x, mode)?;
        let y = self.up2.forward(&y, mode)?;
        Ok(self.out.forward(&y, mode)?.tanh()?)
    }
}

/// Tensor outputs of the decomposition network, all `(B, C, ·, ·)`.
pub struct IrnOutput {
    /// In `[0, 1]`.
    pub albedo: Tensor,
    /// Unit length along the channel axis.
    pub normal: Tensor,
    pub env: Tensor,
    /// Shared encoder features, `(B, 256/d, H/4, W/4)`.
    pub features: Tensor,
}

/// One image decomposed into domain maps.
#[derive(Clone, Debug)]
pub struct Decomposition {
    pub albedo: AlbedoMap,
    pub normal: NormalMap,
    pub env: EnvironmentMap,
}

/// Inverse rendering network: image to albedo, normals and lighting.
pub struct Irn {
    cfg: ModelConfig,
    store: ParamStore,
    encoder: [ConvBnRelu; 3],
    normal_blocks: Vec<ResBlock>,
    albedo_blocks: Vec<ResBlock>,
    normal_decoder: MapDecoder,
    albedo_decoder: MapDecoder,
    light: LightHead,
}

impl Irn {
    pub fn new(cfg: &ModelConfig, seed: u64, dtype: DType, device: &Device) -> Result<Self> {
        cfg.validate()?;
        let mut s = ParamStore::new(seed, dtype, device);
        let (c64, c128, c256) = (cfg.ch(64), cfg.ch(128), cfg.ch(256));
        let encoder = [
            ConvBnRelu::new(&mut s, "enc.0", 3, c64, 7, 1)?,
            ConvBnRelu::new(&mut s, "enc.1", c64, c128, 3, 2)?,
            ConvBnRelu::new(&mut s, "enc.2", c128, c256, 3, 2)?,
        ];
        let normal_blocks = (0..cfg.irn_res_blocks)
            .map(|i| ResBlock::new(&mut s, &format!("normal.res{i}"), c256))
            .collect::<Result<_>>()?;
        let albedo_blocks = (0..cfg.irn_res_blocks)
            .map(|i| ResBlock::new(&mut s, &format!("albedo.res{i}"), c256))
            .collect::<Result<_>>()?;
        let normal_decoder = MapDecoder::new(&mut s, "normal.dec", cfg)?;
        let albedo_decoder = MapDecoder::new(&mut s, "albedo.dec", cfg)?;
        let light = LightHead::new(&mut s, "light", 3 * c256, cfg)?;
        Ok(Self {
            cfg: cfg.clone(),
            store: s,
            encoder,
            normal_blocks,
            albedo_blocks,
            normal_decoder,
            albedo_decoder,
            light,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    /// `image` is `(B, 3, H, W)` linear radiance.
    pub fn forward(&self, image: &Tensor, mode: Mode) -> Result<IrnOutput> {
        expect_input("irn image", image, 3, &self.cfg)?;
        let mut f = image.clone();
        for layer in &self.encoder {
            f = layer.forward(&f, mode)?;
        }
        check_finite("irn encoder", &f)?;
        let mut n = f.clone();
        for b in &self.normal_blocks {
            n = b.forward(&n, mode)?;
        }
        let mut a = f.clone();
        for b in &self.albedo_blocks {
            a = b.forward(&a, mode)?;
        }
        check_finite("irn residual branches", &(&n + &a)?)?;
        let normal = normalize_channels(&self.normal_decoder.forward(&n, mode)?)?;
        let albedo = ((self.albedo_decoder.forward(&a, mode)? + 1.0)? * 0.5)?;
        let env = self.light.forward(&Tensor::cat(&[&f, &n, &a], 1)?, mode)?;
        check_finite("irn normal decoder", &normal)?;
        check_finite("irn albedo decoder", &albedo)?;
        check_finite("irn light head", &env)?;
        Ok(IrnOutput {
            albedo,
            normal,
            env,
            features: f,
        })
    }

    /// Evaluation-mode decomposition of one image.
    pub fn decompose(&self, image: &ImageMap) -> Result<Decomposition> {
        let x = map_tensor(image.pixels(), &self.store)?;
        let out = self.forward(&x, Mode::Eval)?;
        let albedo = AlbedoMap::clamped(tensor_to_array(&out.albedo)?)?;
        let (h, w) = (albedo.height(), albedo.width());
        let normal = NormalMap::normalized(
            tensor_to_array(&out.normal)?,
            ndarray::Array2::from_elem((h, w), true),
        )?;
        let env = EnvironmentMap::new(tensor_to_array(&out.env)?.mapv(|v| v.max(0.0)))?;
        Ok(Decomposition { albedo, normal, env })
    }
}

/// Scales the initial weights of the residual renderer's output layer so the
/// residual starts small. At full He scale the random initial residual takes
/// far longer to unlearn than the actual residual takes to learn.
pub const RESIDUAL_OUT_GAIN: f64 = 0.1;

/// Residual appearance renderer: a U-Net over (normal, albedo) whose
/// bottleneck is joined by a code summarizing the input image.
pub struct Rar {
    cfg: ModelConfig,
    store: ParamStore,
    unet_down: [ConvBnRelu; 5],
    image_encoder: [ConvBnRelu; 7],
    to_code: Linear,
    unet_up: [ConvBnRelu; 4],
    out: Conv2d,
}

impl Rar {
    pub fn new(cfg: &ModelConfig, seed: u64, dtype: DType, device: &Device) -> Result<Self> {
        cfg.validate()?;
        let mut s = ParamStore::new(seed, dtype, device);
        let c = |n| cfg.ch(n);
        let unet_down = [
            ConvBnRelu::new(&mut s, "down.0", 6, c(64), 3, 1)?,
            ConvBnRelu::new(&mut s, "down.1", c(64), c(64), 3, 2)?,
            ConvBnRelu::new(&mut s, "down.2", c(64), c(128), 3, 2)?,
            ConvBnRelu::new(&mut s, "down.3", c(128), c(256), 3, 2)?,
            ConvBnRelu::new(&mut s, "down.4", c(256), c(512), 3, 2)?,
        ];
        let image_encoder = [
            ConvBnRelu::new(&mut s, "img.0", 3, c(64), 7, 1)?,
            ConvBnRelu::new(&mut s, "img.1", c(64), c(128), 3, 2)?,
            ConvBnRelu::new(&mut s, "img.2", c(128), c(256), 3, 2)?,
            ConvBnRelu::new(&mut s, "img.3", c(256), c(128), 1, 1)?,
            ConvBnRelu::new(&mut s, "img.4", c(128), c(64), 3, 1)?,
            ConvBnRelu::new(&mut s, "img.5", c(64), c(32), 3, 2)?,
            ConvBnRelu::new(&mut s, "img.6", c(32), c(16), 3, 2)?,
        ];
        let flat = c(16) * (cfg.height / 16) * (cfg.width / 16);
        let to_code = Linear::new(&mut s, "img.fc", flat, LATENT_DIM)?;
        let unet_up = [
            ConvBnRelu::new(&mut s, "up.0", c(512) + LATENT_DIM, c(512), 3, 1)?,
            ConvBnRelu::new(&mut s, "up.1", c(512) + c(256), c(256), 3, 1)?,
            ConvBnRelu::new(&mut s, "up.2", c(256) + c(128), c(128), 3, 1)?,
            ConvBnRelu::new(&mut s, "up.3", c(128) + c(64), c(64), 3, 1)?,
        ];
        let out_std = RESIDUAL_OUT_GAIN * kaiming_std(c(64) + c(64));
        let out = Conv2d::with_std(&mut s, "out", c(64) + c(64), 3, 1, 1, true, out_std)?;
        Ok(Self {
            cfg: cfg.clone(),
            store: s,
            unet_down,
            image_encoder,
            to_code,
            unet_up,
            out,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    /// The `(B, 300)` image code.
    pub fn code(&self, image: &Tensor, mode: Mode) -> Result<Tensor> {
        let b = expect_input("rar image", image, 3, &self.cfg)?;
        let mut x = image.clone();
        for layer in &self.image_encoder {
            x = layer.forward(&x, mode)?;
        }
        let code = self.to_code.forward(&x.reshape((b, ()))?, mode)?;
        check_finite("rar image encoder", &code)?;
        Ok(code)
    }

    /// Signed residual image `(B, 3, H, W)`.
    pub fn forward(&self, image: &Tensor, albedo: &Tensor, normal: &Tensor, mode: Mode) -> Result<Tensor> {
        expect_input("rar albedo", albedo, 3, &self.cfg)?;
        expect_input("rar normal", normal, 3, &self.cfg)?;
        let code = self.code(image, mode)?;
        let mut skips = Vec::with_capacity(5);
        let mut x = Tensor::cat(&[normal, albedo], 1)?;
        for layer in &self.unet_down {
            x = layer.forward(&x, mode)?;
            skips.push(x.clone());
        }
        let (_, _, bh, bw) = x.dims4()?;
        x = Tensor::cat(&[&x, &tile_code(&code, bh, bw)?], 1)?;
        for (i, layer) in self.unet_up.iter().enumerate() {
            let (_, _, h, w) = x.dims4()?;
            x = layer.forward(&resize_bilinear(&x, 2 * h, 2 * w)?, mode)?;
            x = Tensor::cat(&[&x, &skips[3 - i]], 1)?;
        }
        let out = self.out.forward(&x, mode)?;
        check_finite("rar decoder", &out)?;
        Ok(out)
    }

    /// Evaluation-mode residual for one image.
    pub fn residual(&self, image: &ImageMap, albedo: &AlbedoMap, normal: &NormalMap) -> Result<ResidualImage> {
        let out = self.forward(
            &map_tensor(image.pixels(), &self.store)?,
            &map_tensor(albedo.pixels(), &self.store)?,
            &map_tensor(normal.vectors(), &self.store)?,
            Mode::Eval,
        )?;
        ResidualImage::new(tensor_to_array(&out)?)
    }
}

/// Lighting estimator from (image, albedo, normal).
pub struct EnvEstimator {
    cfg: ModelConfig,
    store: ParamStore,
    encoder: [ConvBnRelu; 3],
    blocks: Vec<ResBlock>,
    light: LightHead,
}

impl EnvEstimator {
    pub fn new(cfg: &ModelConfig, seed: u64, dtype: DType, device: &Device) -> Result<Self> {
        cfg.validate()?;
        let mut s = ParamStore::new(seed, dtype, device);
        let (c64, c128, c256) = (cfg.ch(64), cfg.ch(128), cfg.ch(256));
        let encoder = [
            ConvBnRelu::new(&mut s, "enc.0", 9, c64, 7, 1)?,
            ConvBnRelu::new(&mut s, "enc.1", c64, c128, 3, 2)?,
            ConvBnRelu::new(&mut s, "enc.2", c128, c256, 3, 2)?,
        ];
        let blocks = (0..cfg.env_res_blocks)
            .map(|i| ResBlock::new(&mut s, &format!("res{i}"), c256))
            .collect::<Result<_>>()?;
        let light = LightHead::new(&mut s, "light", c256, cfg)?;
        Ok(Self {
            cfg: cfg.clone(),
            store: s,
            encoder,
            blocks,
            light,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    /// `(B, 3, rows, cols)` nonnegative radiance.
    pub fn forward(&self, image: &Tensor, albedo: &Tensor, normal: &Tensor, mode: Mode) -> Result<Tensor> {
        expect_input("estimator image", image, 3, &self.cfg)?;
        expect_input("estimator albedo", albedo, 3, &self.cfg)?;
        expect_input("estimator normal", normal, 3, &self.cfg)?;
        let mut x = Tensor::cat(&[image, albedo, normal], 1)?;
        for layer in &self.encoder {
            x = layer.forward(&x, mode)?;
        }
        for b in &self.blocks {
            x = b.forward(&x, mode)?;
        }
        check_finite("estimator encoder", &x)?;
        let env = self.light.forward(&x, mode)?;
        check_finite("estimator light head", &env)?;
        Ok(env)
    }

    pub fn estimate(&self, image: &ImageMap, albedo: &AlbedoMap, normal: &NormalMap) -> Result<EnvironmentMap> {
        let out = self.forward(
            &map_tensor(image.pixels(), &self.store)?,
            &map_tensor(albedo.pixels(), &self.store)?,
            &map_tensor(normal.vectors(), &self.store)?,
            Mode::Eval,
        )?;
        EnvironmentMap::new(tensor_to_array(&out)?.mapv(|v| v.max(0.0)))
    }
}
