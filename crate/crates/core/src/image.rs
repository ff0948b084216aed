//! Image rasters, PNG/JPEG codecs and color-to-luminance conversion.
//!
//! All samples are `f64` in `[0, 1]`. 8-bit channels map through `v / 255`,
//! 16-bit channels through `v / 65535`.

use std::io::Cursor;

use image::{DynamicImage, ImageFormat};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Single-channel luminance raster, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Domain(format!(
                "image dimensions must be positive, got {width}x{height}"
            )));
        }
        if data.len() != width * height {
            return Err(Error::Domain(format!(
                "expected {} samples for {width}x{height}, got {}",
                width * height,
                data.len()
            )));
        }
        if let Some(bad) = data
            .iter()
            .find(|v| !(v.is_finite() && (0.0..=1.0).contains(*v)))
        {
            return Err(Error::Domain(format!("sample {bad} outside [0, 1]")));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    /// Builds an image from `f(x, y)`; results are clamped to `[0, 1]`.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y).clamp(0.0, 1.0));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn constant(width: usize, height: usize, value: f64) -> Self {
        Self::from_fn(width, height, |_, _| value)
    }

    /// Caller guarantees every sample is finite and in range.
    pub(crate) fn from_raw(width: usize, height: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), width * height);
        Self {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn row(&self, y: usize) -> &[f64] {
        &self.data[y * self.width..(y + 1) * self.width]
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    /// Maps every sample through `f`, clamping the result to `[0, 1]`.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self::from_raw(
            self.width,
            self.height,
            self.data.iter().map(|&v| f(v).clamp(0.0, 1.0)).collect(),
        )
    }

    /// `v -> 1 - v`.
    pub fn inverted(&self) -> Self {
        self.map(|v| 1.0 - v)
    }

    /// Rectangular sub-image with top-left corner `(x0, y0)`.
    pub fn crop(&self, x0: usize, y0: usize, width: usize, height: usize) -> Result<Self> {
        if width == 0 || height == 0 || x0 + width > self.width || y0 + height > self.height {
            return Err(Error::Domain(format!(
                "crop {width}x{height}+{x0}+{y0} outside {}x{} image",
                self.width, self.height
            )));
        }
        let mut data = Vec::with_capacity(width * height);
        for y in y0..y0 + height {
            data.extend_from_slice(&self.data[y * self.width + x0..y * self.width + x0 + width]);
        }
        Ok(Self::from_raw(width, height, data))
    }
}

/// Swaps rows and columns: `out(x, y) = in(y, x)`.
pub fn transpose(img: &GrayImage) -> GrayImage {
    let (w, h) = (img.width, img.height);
    let mut data = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            data[x * h + y] = img.data[y * w + x];
        }
    }
    GrayImage::from_raw(h, w, data)
}

/// Three-channel raster, row-major interleaved `R, G, B`.
#[derive(Clone, Debug, PartialEq)]
pub struct RgbImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Domain(format!(
                "image dimensions must be positive, got {width}x{height}"
            )));
        }
        if data.len() != 3 * width * height {
            return Err(Error::Domain(format!(
                "expected {} samples for {width}x{height} RGB, got {}",
                3 * width * height,
                data.len()
            )));
        }
        if let Some(bad) = data
            .iter()
            .find(|v| !(v.is_finite() && (0.0..=1.0).contains(*v)))
        {
            return Err(Error::Domain(format!("sample {bad} outside [0, 1]")));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub(crate) fn from_raw(width: usize, height: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), 3 * width * height);
        Self {
            width,
            height,
            data,
        }
    }

    /// Replicates a gray image into all three channels.
    pub fn from_gray(gray: &GrayImage) -> Self {
        let data = gray.data.iter().flat_map(|&v| [v, v, v]).collect();
        Self::from_raw(gray.width, gray.height, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn pixel(&self, x: usize, y: usize) -> [f64; 3] {
        let i = 3 * (y * self.width + x);
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    /// Splits into three gray planes.
    pub fn channels(&self) -> [GrayImage; 3] {
        let n = self.width * self.height;
        let mut planes = [
            Vec::with_capacity(n),
            Vec::with_capacity(n),
            Vec::with_capacity(n),
        ];
        for px in self.data.chunks_exact(3) {
            for (plane, &v) in planes.iter_mut().zip(px) {
                plane.push(v);
            }
        }
        planes.map(|p| GrayImage::from_raw(self.width, self.height, p))
    }

    pub fn from_channels(planes: &[GrayImage; 3]) -> Result<Self> {
        let (w, h) = (planes[0].width, planes[0].height);
        if planes.iter().any(|p| p.width != w || p.height != h) {
            return Err(Error::Domain("channel planes differ in size".into()));
        }
        let mut data = Vec::with_capacity(3 * w * h);
        for i in 0..w * h {
            data.extend(planes.iter().map(|p| p.data[i]));
        }
        Ok(Self::from_raw(w, h, data))
    }
}

/// Linear color-to-luminance weights.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LumaWeights {
    pub wr: f64,
    pub wg: f64,
    pub wb: f64,
}

impl LumaWeights {
    pub const REC709: LumaWeights = LumaWeights {
        wr: 0.2126,
        wg: 0.7152,
        wb: 0.0722,
    };

    pub fn new(wr: f64, wg: f64, wb: f64) -> Result<Self> {
        let w = LumaWeights { wr, wg, wb };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        let ws = [self.wr, self.wg, self.wb];
        if ws.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::Domain(format!(
                "luma weights must be finite and non-negative, got {ws:?}"
            )));
        }
        if (ws.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Domain(format!(
                "luma weights must sum to 1, got {ws:?}"
            )));
        }
        Ok(())
    }
}

impl Default for LumaWeights {
    fn default() -> Self {
        Self::REC709
    }
}

/// `out = wr*R + wg*G + wb*B`, clamped to `[0, 1]`.
pub fn to_luma(img: &RgbImage, w: &LumaWeights) -> Result<GrayImage> {
    w.validate()?;
    let data = img
        .data
        .chunks_exact(3)
        .map(|px| {
            // R=G=B must come back unchanged, so skip the weighted sum.
            if px[0] == px[1] && px[1] == px[2] {
                px[0]
            } else {
                (w.wr * px[0] + w.wg * px[1] + w.wb * px[2]).clamp(0.0, 1.0)
            }
        })
        .collect();
    Ok(GrayImage::from_raw(img.width, img.height, data))
}

/// Optional power-law linearization `v -> v^gamma`.
pub fn apply_gamma(img: &GrayImage, gamma: f64) -> Result<GrayImage> {
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(Error::Domain(format!("gamma must be > 0, got {gamma}")));
    }
    if gamma == 1.0 {
        return Ok(img.clone());
    }
    Ok(img.map(|v| v.powf(gamma)))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FileFormat {
    Png,
    Jpeg,
}

impl FileFormat {
    pub fn from_extension(ext: &str) -> Option<Self> {
        match ext.to_ascii_lowercase().as_str() {
            "png" => Some(FileFormat::Png),
            "jpg" | "jpeg" => Some(FileFormat::Jpeg),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BitDepth {
    Eight,
    Sixteen,
}

/// A decoded file plus what is needed to write it back in kind.
#[derive(Clone, Debug)]
pub struct DecodedImage {
    pub image: RgbImage,
    pub format: FileFormat,
    pub depth: BitDepth,
    /// Source had a single luminance channel.
    pub grayscale: bool,
}

pub fn decode_image(bytes: &[u8]) -> Result<RgbImage> {
    decode_with_info(bytes).map(|d| d.image)
}

pub fn decode_with_info(bytes: &[u8]) -> Result<DecodedImage> {
    let format = match image::guess_format(bytes) {
        Ok(ImageFormat::Png) => FileFormat::Png,
        Ok(ImageFormat::Jpeg) => FileFormat::Jpeg,
        Ok(other) => return Err(Error::Decode(format!("unsupported format {other:?}"))),
        Err(e) => return Err(Error::Decode(e.to_string())),
    };
    let img_format = match format {
        FileFormat::Png => ImageFormat::Png,
        FileFormat::Jpeg => ImageFormat::Jpeg,
    };
    let dynamic = image::load_from_memory_with_format(bytes, img_format)
        .map_err(|e| Error::Decode(e.to_string()))?;
    let (w, h) = (dynamic.width() as usize, dynamic.height() as usize);
    let scale8 = |v: u8| f64::from(v) / 255.0;
    let scale16 = |v: u16| f64::from(v) / 65535.0;
    let (data, depth, grayscale): (Vec<f64>, _, _) = match &dynamic {
        DynamicImage::ImageLuma8(b) => (
            b.as_raw().iter().flat_map(|&v| [scale8(v); 3]).collect(),
            BitDepth::Eight,
            true,
        ),
        DynamicImage::ImageLumaA8(b) => (
            b.as_raw()
                .chunks_exact(2)
                .flat_map(|p| [scale8(p[0]); 3])
                .collect(),
            BitDepth::Eight,
            true,
        ),
        DynamicImage::ImageRgb8(b) => (
            b.as_raw().iter().map(|&v| scale8(v)).collect(),
            BitDepth::Eight,
            false,
        ),
        DynamicImage::ImageRgba8(b) => (
            b.as_raw()
                .chunks_exact(4)
                .flat_map(|p| [scale8(p[0]), scale8(p[1]), scale8(p[2])])
                .collect(),
            BitDepth::Eight,
            false,
        ),
        DynamicImage::ImageLuma16(b) => (
            b.as_raw().iter().flat_map(|&v| [scale16(v); 3]).collect(),
            BitDepth::Sixteen,
            true,
        ),
        DynamicImage::ImageLumaA16(b) => (
            b.as_raw()
                .chunks_exact(2)
                .flat_map(|p| [scale16(p[0]); 3])
                .collect(),
            BitDepth::Sixteen,
            true,
        ),
        DynamicImage::ImageRgb16(b) => (
            b.as_raw().iter().map(|&v| scale16(v)).collect(),
            BitDepth::Sixteen,
            false,
        ),
        DynamicImage::ImageRgba16(b) => (
            b.as_raw()
                .chunks_exact(4)
                .flat_map(|p| [scale16(p[0]), scale16(p[1]), scale16(p[2])])
                .collect(),
            BitDepth::Sixteen,
            false,
        ),
        other => {
            return Err(Error::Decode(format!(
                "unsupported color type {:?}",
                other.color()
            )))
        }
    };
    Ok(DecodedImage {
        image: RgbImage::from_raw(w, h, data),
        format,
        depth,
        grayscale,
    })
}

fn quantize8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn quantize16(v: f64) -> u16 {
    (v.clamp(0.0, 1.0) * 65535.0).round() as u16
}

/// Encodes a gray image as a single-channel PNG.
pub fn encode_gray_png(img: &GrayImage, depth: BitDepth) -> Result<Vec<u8>> {
    let (w, h) = (img.width as u32, img.height as u32);
    let dynamic = match depth {
        BitDepth::Eight => DynamicImage::ImageLuma8(
            image::GrayImage::from_raw(w, h, img.data.iter().map(|&v| quantize8(v)).collect())
                .expect("buffer size matches dimensions"),
        ),
        BitDepth::Sixteen => DynamicImage::ImageLuma16(
            image::ImageBuffer::from_raw(w, h, img.data.iter().map(|&v| quantize16(v)).collect())
                .expect("buffer size matches dimensions"),
        ),
    };
    write_dynamic(&dynamic, FileFormat::Png)
}

/// Encodes an RGB image; `grayscale` writes channel R as a single luminance plane.
pub fn encode_rgb(
    img: &RgbImage,
    format: FileFormat,
    depth: BitDepth,
    grayscale: bool,
) -> Result<Vec<u8>> {
    let (w, h) = (img.width as u32, img.height as u32);
    // JPEG has no 16-bit mode.
    let depth = if format == FileFormat::Jpeg {
        BitDepth::Eight
    } else {
        depth
    };
    let dynamic = match (grayscale, depth) {
        (true, BitDepth::Eight) => DynamicImage::ImageLuma8(
            image::GrayImage::from_raw(
                w,
                h,
                img.data.chunks_exact(3).map(|p| quantize8(p[0])).collect(),
            )
            .expect("buffer size matches dimensions"),
        ),
        (true, BitDepth::Sixteen) => DynamicImage::ImageLuma16(
            image::ImageBuffer::from_raw(
                w,
                h,
                img.data.chunks_exact(3).map(|p| quantize16(p[0])).collect(),
            )
            .expect("buffer size matches dimensions"),
        ),
        (false, BitDepth::Eight) => DynamicImage::ImageRgb8(
            image::RgbImage::from_raw(w, h, img.data.iter().map(|&v| quantize8(v)).collect())
                .expect("buffer size matches dimensions"),
        ),
        (false, BitDepth::Sixteen) => DynamicImage::ImageRgb16(
            image::ImageBuffer::from_raw(w, h, img.data.iter().map(|&v| quantize16(v)).collect())
                .expect("buffer size matches dimensions"),
        ),
    };
    write_dynamic(&dynamic, format)
}

fn write_dynamic(img: &DynamicImage, format: FileFormat) -> Result<Vec<u8>> {
    let mut buf = Cursor::new(Vec::new());
    let res = match format {
        FileFormat::Png => img.write_to(&mut buf, ImageFormat::Png),
        FileFormat::Jpeg => {
            let enc = image::codecs::jpeg::JpegEncoder::new_with_quality(&mut buf, 95);
            img.write_with_encoder(enc)
        }
    };
    res.map_err(|e| Error::Domain(format!("encode failed: {e}")))?;
    Ok(buf.into_inner())
}
