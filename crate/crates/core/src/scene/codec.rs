//! Image file formats.
//!
//! * 8-bit PNG holds sRGB-encoded values and is gamma-decoded (exponent 2.2).
//! * 16-bit PNG and float containers (Radiance `.hdr`) hold linear values.
//! * Normal maps store `(n + 1) / 2` in any of the above, decoded linearly.

use std::path::Path;

use image::{DynamicImage, ImageBuffer, Luma, Rgb};
use ndarray::{Array2, Array3};

use crate::error::{Error, Result};

/// Display gamma used for 8-bit files.
pub const GAMMA: f64 = 2.2;

pub fn srgb_to_linear(v: f64) -> f64 {
    v.max(0.0).powf(GAMMA)
}

pub fn linear_to_srgb(v: f64) -> f64 {
    v.clamp(0.0, 1.0).powf(1.0 / GAMMA)
}

/// Bit depth class of a decoded file.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Depth {
    Eight,
    Sixteen,
    Float,
}

/// Reads three channels as stored, scaled to `[0, 1]` for integer formats.
pub fn read_raw(path: &Path) -> Result<(Array3<f64>, Depth)> {
    let img = image::open(path).map_err(|e| match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::image(path, other),
    })?;
    let depth = match &img {
        DynamicImage::ImageLuma8(_)
        | DynamicImage::ImageLumaA8(_)
        | DynamicImage::ImageRgb8(_)
        | DynamicImage::ImageRgba8(_) => Depth::Eight,
        DynamicImage::ImageLuma16(_)
        | DynamicImage::ImageLumaA16(_)
        | DynamicImage::ImageRgb16(_)
        | DynamicImage::ImageRgba16(_) => Depth::Sixteen,
        _ => Depth::Float,
    };
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data = match depth {
        Depth::Eight => {
            let buf = img.to_rgb8();
            Array3::from_shape_fn((h, w, 3), |(y, x, c)| {
                buf.get_pixel(x as u32, y as u32)[c] as f64 / 255.0
            })
        }
        Depth::Sixteen => {
            let buf = img.to_rgb16();
            Array3::from_shape_fn((h, w, 3), |(y, x, c)| {
                buf.get_pixel(x as u32, y as u32)[c] as f64 / 65535.0
            })
        }
        Depth::Float => {
            let buf = img.to_rgb32f();
            Array3::from_shape_fn((h, w, 3), |(y, x, c)| {
                buf.get_pixel(x as u32, y as u32)[c] as f64
            })
        }
    };
    Ok((data, depth))
}

/// Reads a color file as linear values.
pub fn read_linear(path: &Path) -> Result<Array3<f64>> {
    let (mut data, depth) = read_raw(path)?;
    if depth == Depth::Eight {
        data.mapv_inplace(srgb_to_linear);
    }
    Ok(data)
}

/// Reads `(n + 1) / 2`-encoded normals, returning the un-normalized decode.
pub fn read_encoded_normals(path: &Path) -> Result<Array3<f64>> {
    let (data, _) = read_raw(path)?;
    Ok(data.mapv(|v| 2.0 * v - 1.0))
}

/// Reads a mask: mean channel value above one half is valid.
pub fn read_mask(path: &Path) -> Result<Array2<bool>> {
    let (data, _) = read_raw(path)?;
    let (h, w, _) = data.dim();
    Ok(Array2::from_shape_fn((h, w), |(y, x)| {
        (data[[y, x, 0]] + data[[y, x, 1]] + data[[y, x, 2]]) / 3.0 > 0.5
    }))
}

fn save<P, C>(path: &Path, buf: ImageBuffer<P, C>) -> Result<()>
where
    P: image::Pixel + image::PixelWithColorType,
    [P::Subpixel]: image::EncodableLayout,
    C: std::ops::Deref<Target = [P::Subpixel]>,
{
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    buf.save(path).map_err(|e| match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::image(path, other),
    })
}

/// Quantizes `v ∈ [0, 1]` to 8 bits after clipping.
pub fn quantize8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Quantizes `v ∈ [0, 1]` to 16 bits after clipping.
pub fn quantize16(v: f64) -> u16 {
    (v.clamp(0.0, 1.0) * 65535.0).round() as u16
}

/// Writes linear values as an 8-bit sRGB PNG (clipped to `[0, 1]`).
pub fn write_srgb_png(path: &Path, data: &Array3<f64>) -> Result<()> {
    let (h, w, _) = data.dim();
    let buf = ImageBuffer::from_fn(w as u32, h as u32, |x, y| {
        let (x, y) = (x as usize, y as usize);
        Rgb([0, 1, 2].map(|c| quantize8(linear_to_srgb(data[[y, x, c]]))))
    });
    save(path, buf)
}

/// Writes values in `[0, 1]` linearly to a 16-bit PNG.
pub fn write_linear_png16(path: &Path, data: &Array3<f64>) -> Result<()> {
    let (h, w, _) = data.dim();
    let buf: ImageBuffer<Rgb<u16>, Vec<u16>> = ImageBuffer::from_fn(w as u32, h as u32, |x, y| {
        let (x, y) = (x as usize, y as usize);
        Rgb([0, 1, 2].map(|c| quantize16(data[[y, x, c]])))
    });
    save(path, buf)
}

/// Writes unit normals as `(n + 1) / 2` in a 16-bit PNG; invalid pixels as 0.5 gray.
pub fn write_normals_png16(path: &Path, vectors: &Array3<f64>, valid: &Array2<bool>) -> Result<()> {
    let encoded = Array3::from_shape_fn(vectors.dim(), |(y, x, c)| {
        if valid[[y, x]] {
            (vectors[[y, x, c]] + 1.0) / 2.0
        } else {
            0.5
        }
    });
    write_linear_png16(path, &encoded)
}

pub fn write_mask_png(path: &Path, mask: &Array2<bool>) -> Result<()> {
    let (h, w) = mask.dim();
    let buf = ImageBuffer::from_fn(w as u32, h as u32, |x, y| {
        Luma([if mask[[y as usize, x as usize]] { 255u8 } else { 0 }])
    });
    save(path, buf)
}

/// Writes nonnegative radiance to a Radiance `.hdr` file.
pub fn write_hdr(path: &Path, data: &Array3<f64>) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let (h, w, _) = data.dim();
    let pixels: Vec<Rgb<f32>> = (0..h)
        .flat_map(|y| (0..w).map(move |x| (y, x)))
        .map(|(y, x)| Rgb([0, 1, 2].map(|c| data[[y, x, c]].max(0.0) as f32)))
        .collect();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    image::codecs::hdr::HdrEncoder::new(std::io::BufWriter::new(file))
        .encode(&pixels, w, h)
        .map_err(|e| Error::image(path, e))
}

fn source_coord(dst: usize, dst_len: usize, src_len: usize) -> f64 {
    ((dst as f64 + 0.5) * src_len as f64 / dst_len as f64 - 0.5).clamp(0.0, (src_len - 1) as f64)
}

/// For each destination index, the source indices and weights of a
/// half-pixel-center linear interpolation.
pub fn bilinear_taps(dst_len: usize, src_len: usize) -> Vec<[(usize, f64); 2]> {
    (0..dst_len)
        .map(|d| {
            let f = source_coord(d, dst_len, src_len);
            let i0 = f.floor() as usize;
            let i1 = (i0 + 1).min(src_len - 1);
            let t = f - i0 as f64;
            [(i0, 1.0 - t), (i1, t)]
        })
        .collect()
}

/// Bilinear resize with half-pixel-center alignment.
pub fn resize_bilinear(src: &Array3<f64>, height: usize, width: usize) -> Array3<f64> {
    let (sh, sw, c) = src.dim();
    if (sh, sw) == (height, width) {
        return src.clone();
    }
    let ty = bilinear_taps(height, sh);
    let tx = bilinear_taps(width, sw);
    Array3::from_shape_fn((height, width, c), |(y, x, k)| {
        let [(y0, wy0), (y1, wy1)] = ty[y];
        let [(x0, wx0), (x1, wx1)] = tx[x];
        let top = src[[y0, x0, k]] * wx0 + src[[y0, x1, k]] * wx1;
        let bottom = src[[y1, x0, k]] * wx0 + src[[y1, x1, k]] * wx1;
        top * wy0 + bottom * wy1
    })
}

fn nearest_index(dst: usize, dst_len: usize, src_len: usize) -> usize {
    (((dst as f64 + 0.5) * src_len as f64 / dst_len as f64) as usize).min(src_len - 1)
}

/// Nearest-neighbour resize.
pub fn resize_nearest(src: &Array3<f64>, height: usize, width: usize) -> Array3<f64> {
    let (sh, sw, c) = src.dim();
    Array3::from_shape_fn((height, width, c), |(y, x, k)| {
        src[[nearest_index(y, height, sh), nearest_index(x, width, sw), k]]
    })
}

pub fn resize_mask(src: &Array2<bool>, height: usize, width: usize) -> Array2<bool> {
    let (sh, sw) = src.dim();
    Array2::from_shape_fn((height, width), |(y, x)| {
        src[[nearest_index(y, height, sh), nearest_index(x, width, sw)]]
    })
}

/// Resamples an equirectangular panorama to `rows×cols` by area averaging
/// (or bilinear sampling when upsampling).
pub fn resample_panorama(src: &Array3<f64>, rows: usize, cols: usize) -> Array3<f64> {
    let (sh, sw, c) = src.dim();
    if sh < rows || sw < cols {
        return resize_bilinear(src, rows, cols);
    }
    let mut out = Array3::zeros((rows, cols, c));
    let mut counts = Array2::<f64>::zeros((rows, cols));
    for y in 0..sh {
        let r = y * rows / sh;
        for x in 0..sw {
            let col = x * cols / sw;
            counts[[r, col]] += 1.0;
            for k in 0..c {
                out[[r, col, k]] += src[[y, x, k]];
            }
        }
    }
    for r in 0..rows {
        for col in 0..cols {
            for k in 0..c {
                out[[r, col, k]] /= counts[[r, col]];
            }
        }
    }
    out
}
