//! Gaussian-blur degradation of single images and image directories.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{list_images, relative_name};
use crate::error::{Error, Result};
use crate::image::{decode_with_info, encode_rgb, GrayImage, RgbImage};

/// How samples outside the image are synthesized during convolution.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, Default)]
pub enum Border {
    /// Mirror without repeating the edge sample: `... c b | a b c ...`.
    #[default]
    Reflect101,
    /// Repeat the edge sample.
    Replicate,
    /// Fixed value outside the image.
    Constant(f64),
}

impl fmt::Display for Border {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Border::Reflect101 => write!(f, "reflect101"),
            Border::Replicate => write!(f, "replicate"),
            Border::Constant(v) => write!(f, "constant:{v}"),
        }
    }
}

impl FromStr for Border {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "reflect101" => Ok(Border::Reflect101),
            "replicate" => Ok(Border::Replicate),
            _ => {
                let v = s.strip_prefix("constant:").ok_or_else(|| {
                    format!("unknown border `{s}` (reflect101|replicate|constant:<v>)")
                })?;
                let v: f64 = v
                    .parse()
                    .map_err(|_| format!("bad constant border value `{v}`"))?;
                if !(0.0..=1.0).contains(&v) {
                    return Err(format!("constant border value {v} outside [0, 1]"));
                }
                Ok(Border::Constant(v))
            }
        }
    }
}

/// Odd kernel size covering the Gaussian support.
///
/// Integer sigma gives `6*sigma + 1` (7, 13, 19 for 1, 2, 3). Other values
/// give `2*ceil(3*sigma) + 1`, which stays odd.
pub fn kernel_size(sigma: f64) -> Result<usize> {
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::Domain(format!("sigma must be > 0, got {sigma}")));
    }
    if sigma.fract() == 0.0 {
        Ok(6 * sigma as usize + 1)
    } else {
        Ok(2 * (3.0 * sigma).ceil() as usize + 1)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianSpec {
    pub sigma: f64,
    pub kernel_size: usize,
    pub border: Border,
}

impl GaussianSpec {
    /// Default sizing rule and Reflect101 border.
    pub fn new(sigma: f64) -> Result<Self> {
        Ok(Self {
            sigma,
            kernel_size: kernel_size(sigma)?,
            border: Border::default(),
        })
    }

    pub fn with_kernel_size(mut self, k: usize) -> Result<Self> {
        self.kernel_size = k;
        self.validate()?;
        Ok(self)
    }

    pub fn with_border(mut self, border: Border) -> Self {
        self.border = border;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return Err(Error::Domain(format!(
                "sigma must be > 0, got {}",
                self.sigma
            )));
        }
        if self.kernel_size < 3 || self.kernel_size.is_multiple_of(2) {
            return Err(Error::Domain(format!(
                "kernel size must be odd and >= 3, got {}",
                self.kernel_size
            )));
        }
        if let Border::Constant(v) = self.border {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Domain(format!("constant border {v} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

/// Normalized, symmetric 1-D Gaussian taps.
#[derive(Clone, Debug, PartialEq)]
pub struct Kernel1D {
    taps: Vec<f64>,
}

impl Kernel1D {
    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    pub fn radius(&self) -> usize {
        self.taps.len() / 2
    }

    /// Magnitude of the discrete-time Fourier transform at `f` cycles/sample.
    pub fn dtft_magnitude(&self, f: f64) -> f64 {
        let r = self.radius() as f64;
        let (re, im) = self
            .taps
            .iter()
            .enumerate()
            .fold((0.0, 0.0), |(re, im), (i, &t)| {
                let phase = -2.0 * std::f64::consts::PI * f * (i as f64 - r);
                (re + t * phase.cos(), im + t * phase.sin())
            });
        re.hypot(im)
    }
}

/// Point-samples `exp(-x^2 / (2 sigma^2))` at integer offsets and normalizes.
///
/// The outer product of the taps with themselves is the normalized sampling
/// of the 2-D Gaussian `exp(-(x^2 + y^2) / (2 sigma^2)) / (2 pi sigma^2)`.
pub fn gaussian_kernel_1d(spec: &GaussianSpec) -> Result<Kernel1D> {
    spec.validate()?;
    let c = (spec.kernel_size / 2) as f64;
    let two_s2 = 2.0 * spec.sigma * spec.sigma;
    let raw: Vec<f64> = (0..spec.kernel_size)
        .map(|i| {
            let x = i as f64 - c;
            (-(x * x) / two_s2).exp()
        })
        .collect();
    let sum: f64 = raw.iter().sum();
    let taps = raw.iter().map(|v| v / sum).collect();
    Ok(Kernel1D { taps })
}

/// Maps an out-of-range index onto the image, or `None` for constant borders.
#[inline]
pub(crate) fn border_index(i: isize, n: usize, border: Border) -> Option<usize> {
    let n = n as isize;
    if (0..n).contains(&i) {
        return Some(i as usize);
    }
    match border {
        Border::Replicate => Some(i.clamp(0, n - 1) as usize),
        Border::Constant(_) => None,
        Border::Reflect101 => {
            if n == 1 {
                return Some(0);
            }
            let period = 2 * (n - 1);
            let mut j = i.rem_euclid(period);
            if j >= n {
                j = period - j;
            }
            Some(j as usize)
        }
    }
}

fn convolve_rows(src: &[f64], w: usize, h: usize, taps: &[f64], border: Border) -> Vec<f64> {
    let r = (taps.len() / 2) as isize;
    let fill = match border {
        Border::Constant(v) => v,
        _ => 0.0,
    };
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        for x in 0..w {
            let mut acc = 0.0;
            for (t, &k) in taps.iter().enumerate() {
                let xi = x as isize + t as isize - r;
                let v = border_index(xi, w, border).map_or(fill, |j| row[j]);
                acc += k * v;
            }
            out[y * w + x] = acc.clamp(0.0, 1.0);
        }
    }
    out
}

fn convolve_cols(src: &[f64], w: usize, h: usize, taps: &[f64], border: Border) -> Vec<f64> {
    let r = (taps.len() / 2) as isize;
    let fill = match border {
        Border::Constant(v) => v,
        _ => 0.0,
    };
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (t, &k) in taps.iter().enumerate() {
                let yi = y as isize + t as isize - r;
                let v = border_index(yi, h, border).map_or(fill, |j| src[j * w + x]);
                acc += k * v;
            }
            out[y * w + x] = acc.clamp(0.0, 1.0);
        }
    }
    out
}

/// Types that can be Gaussian-blurred.
pub trait Blur: Sized {
    fn blur(&self, spec: &GaussianSpec) -> Result<Self>;
}

fn check_size(w: usize, h: usize, k: usize) -> Result<()> {
    if w < k || h < k {
        return Err(Error::Domain(format!(
            "image {w}x{h} is smaller than the {k}x{k} kernel"
        )));
    }
    Ok(())
}

impl Blur for GrayImage {
    /// Horizontal pass then vertical pass, each clamped to `[0, 1]`.
    fn blur(&self, spec: &GaussianSpec) -> Result<Self> {
        let kernel = gaussian_kernel_1d(spec)?;
        let (w, h) = (self.width(), self.height());
        check_size(w, h, spec.kernel_size)?;
        let tmp = convolve_rows(self.data(), w, h, kernel.taps(), spec.border);
        let out = convolve_cols(&tmp, w, h, kernel.taps(), spec.border);
        Ok(GrayImage::from_raw(w, h, out))
    }
}

impl Blur for RgbImage {
    fn blur(&self, spec: &GaussianSpec) -> Result<Self> {
        let planes = self.channels();
        let blurred = [
            planes[0].blur(spec)?,
            planes[1].blur(spec)?,
            planes[2].blur(spec)?,
        ];
        RgbImage::from_channels(&blurred)
    }
}

pub fn blur<T: Blur>(img: &T, spec: &GaussianSpec) -> Result<T> {
    img.blur(spec)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileFailure {
    pub file: String,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DegradationReport {
    pub sigma: f64,
    pub kernel_size: usize,
    pub border: String,
    pub processed: usize,
    pub failed: usize,
    /// Relative paths written, sorted.
    pub outputs: Vec<String>,
    pub failures: Vec<FileFailure>,
}

fn degrade_file(src: &Path, dst: &Path, spec: &GaussianSpec) -> Result<()> {
    let bytes = fs::read(src).map_err(|e| Error::io(src, e))?;
    let decoded = decode_with_info(&bytes)?;
    let blurred = decoded.image.blur(spec)?;
    let out = encode_rgb(&blurred, decoded.format, decoded.depth, decoded.grayscale)?;
    if let Some(parent) = dst.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(dst, out).map_err(|e| Error::io(dst, e))
}

/// Blurs every image under `src_dir` into the same relative path under `dst_dir`.
///
/// Per-file failures are collected in the report; only an unreadable source
/// directory is an error.
pub fn degrade_dataset(
    src_dir: &Path,
    dst_dir: &Path,
    spec: &GaussianSpec,
) -> Result<DegradationReport> {
    spec.validate()?;
    let files = list_images(src_dir)?;
    fs::create_dir_all(dst_dir).map_err(|e| Error::io(dst_dir, e))?;
    let results: Vec<(String, Result<()>)> = files
        .par_iter()
        .map(|path| {
            let rel = relative_name(src_dir, path);
            let dst: PathBuf = dst_dir.join(&rel);
            (rel, degrade_file(path, &dst, spec))
        })
        .collect();

    let mut outputs = Vec::new();
    let mut failures = Vec::new();
    for (rel, res) in results {
        match res {
            Ok(()) => outputs.push(rel),
            Err(e) => failures.push(FileFailure {
                file: rel,
                reason: e.to_string(),
            }),
        }
    }
    Ok(DegradationReport {
        sigma: spec.sigma,
        kernel_size: spec.kernel_size,
        border: spec.border.to_string(),
        processed: outputs.len(),
        failed: failures.len(),
        outputs,
        failures,
    })
}
