//! Synthetic slanted-edge charts with closed-form SFR.
//!
//! The edge passes through the image center. Pixel centers sit at integer
//! coordinates, so the center is `((w - 1) / 2, (h - 1) / 2)`. The signed
//! distance of a point to the edge is
//! `d = (x - cx) cos(theta) - (y - cy) sin(theta)` with `theta` measured from
//! vertical; the `high` level lies on the `d > 0` side.

use std::f64::consts::{LN_2, PI, SQRT_2};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::GrayImage;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum EdgeProfile {
    /// Hard step, area-sampled over each pixel.
    IdealStep,
    /// Step convolved with a Gaussian of the given sigma, point-sampled.
    GaussianEdge(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChartSpec {
    pub width: usize,
    pub height: usize,
    /// Degrees from vertical.
    pub edge_angle: f64,
    pub edge_profile: EdgeProfile,
    pub low: f64,
    pub high: f64,
    /// Subsamples per axis for area sampling of `IdealStep`.
    pub supersample: usize,
}

impl Default for ChartSpec {
    fn default() -> Self {
        Self {
            width: 200,
            height: 200,
            edge_angle: 5.0,
            edge_profile: EdgeProfile::IdealStep,
            low: 0.15,
            high: 0.85,
            supersample: 16,
        }
    }
}

impl ChartSpec {
    pub fn gaussian(sigma_e: f64, angle: f64) -> Self {
        Self {
            edge_angle: angle,
            edge_profile: EdgeProfile::GaussianEdge(sigma_e),
            ..Self::default()
        }
    }

    pub fn step(angle: f64) -> Self {
        Self {
            edge_angle: angle,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::Domain("chart dimensions must be positive".into()));
        }
        if !(0.0 <= self.low && self.low < self.high && self.high <= 1.0) {
            return Err(Error::Domain(format!(
                "chart levels must satisfy 0 <= low < high <= 1, got {} / {}",
                self.low, self.high
            )));
        }
        if !self.edge_angle.is_finite() {
            return Err(Error::Domain("edge angle must be finite".into()));
        }
        if self.supersample == 0 {
            return Err(Error::Domain("supersample must be >= 1".into()));
        }
        if let EdgeProfile::GaussianEdge(s) = self.edge_profile {
            if !(s.is_finite() && s > 0.0) {
                return Err(Error::Domain(format!("edge sigma must be > 0, got {s}")));
            }
        }
        Ok(())
    }

    fn center(&self) -> (f64, f64) {
        (
            (self.width as f64 - 1.0) / 2.0,
            (self.height as f64 - 1.0) / 2.0,
        )
    }

    /// Signed perpendicular distance from `(x, y)` to the edge line.
    pub fn signed_distance(&self, x: f64, y: f64) -> f64 {
        let (cx, cy) = self.center();
        let t = self.edge_angle.to_radians();
        (x - cx) * t.cos() - (y - cy) * t.sin()
    }
}

/// Standard normal CDF.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / SQRT_2)
}

pub fn render_chart(spec: &ChartSpec) -> Result<GrayImage> {
    spec.validate()?;
    let span = spec.high - spec.low;
    let img = match spec.edge_profile {
        EdgeProfile::GaussianEdge(sigma_e) => {
            GrayImage::from_fn(spec.width, spec.height, |x, y| {
                let d = spec.signed_distance(x as f64, y as f64);
                spec.low + span * normal_cdf(d / sigma_e)
            })
        }
        EdgeProfile::IdealStep => {
            let s = spec.supersample;
            let offsets: Vec<f64> = (0..s).map(|i| (i as f64 + 0.5) / s as f64 - 0.5).collect();
            let total = (s * s) as f64;
            GrayImage::from_fn(spec.width, spec.height, |x, y| {
                let mut covered = 0.0;
                for &oy in &offsets {
                    for &ox in &offsets {
                        let d = spec.signed_distance(x as f64 + ox, y as f64 + oy);
                        if d > 0.0 {
                            covered += 1.0;
                        } else if d == 0.0 {
                            covered += 0.5;
                        }
                    }
                }
                spec.low + span * covered / total
            })
        }
    };
    Ok(img)
}

/// Closed-form SFR of a chart.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AnalyticSfr {
    profile: EdgeProfile,
    mtf50: f64,
}

impl AnalyticSfr {
    /// Modulation at `f` cycles/pixel.
    pub fn modulation(&self, f: f64) -> f64 {
        match self.profile {
            EdgeProfile::GaussianEdge(s) => (-2.0 * PI * PI * s * s * f * f).exp(),
            EdgeProfile::IdealStep => sinc(f).abs(),
        }
    }

    pub fn mtf50(&self) -> f64 {
        self.mtf50
    }
}

/// `sin(pi f) / (pi f)`, 1 at 0.
pub fn sinc(f: f64) -> f64 {
    if f == 0.0 {
        1.0
    } else {
        let x = PI * f;
        x.sin() / x
    }
}

pub fn analytic_sfr(spec: &ChartSpec) -> Result<AnalyticSfr> {
    spec.validate()?;
    let mtf50 = match spec.edge_profile {
        EdgeProfile::GaussianEdge(s) => (LN_2 / (2.0 * PI * PI * s * s)).sqrt(),
        EdgeProfile::IdealStep => {
            // sinc is decreasing on [0, 1]; bisect sinc(f) = 0.5.
            let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if sinc(mid) > 0.5 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            0.5 * (lo + hi)
        }
    };
    Ok(AnalyticSfr {
        profile: spec.edge_profile,
        mtf50,
    })
}
