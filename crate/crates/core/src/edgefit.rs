//! Per-line gradient centroids and the least-squares edge line through them.
//!
//! Operates on an ROI whose edge runs roughly top to bottom, so each row
//! (scan line) crosses the edge once. Horizontal edges are transposed by the
//! caller first.

use crate::error::{Error, Result};
use crate::image::GrayImage;

/// Rows whose summed derivative falls below this fraction of the strongest
/// row are treated as not crossing the edge.
const LINE_ENERGY_FRACTION: f64 = 0.2;

pub const MIN_FIT_LINES: usize = 10;

/// Edge position model `x = intercept + slope * y`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LineFit {
    pub intercept: f64,
    /// Pixels of horizontal shift per scan line.
    pub slope: f64,
    pub r2: f64,
    pub lines_used: usize,
}

impl LineFit {
    /// Degrees from vertical, signed.
    pub fn angle_deg(&self) -> f64 {
        self.slope.atan().to_degrees()
    }

    /// Perpendicular signed distance of pixel `(x, y)` to the fitted line.
    #[inline]
    pub fn distance(&self, x: f64, y: f64) -> f64 {
        (x - (self.intercept + self.slope * y)) / (1.0 + self.slope * self.slope).sqrt()
    }
}

/// Centroid of the `(-0.5, 0, +0.5)` derivative along each row, with the
/// row's total derivative.
pub fn line_centroids(roi: &GrayImage) -> Vec<Option<(f64, f64)>> {
    let w = roi.width();
    (0..roi.height())
        .map(|y| {
            if w < 3 {
                return None;
            }
            let row = roi.row(y);
            let (mut sum, mut moment) = (0.0, 0.0);
            for x in 1..w - 1 {
                let d = 0.5 * (row[x + 1] - row[x - 1]);
                sum += d;
                moment += x as f64 * d;
            }
            if sum.abs() < 1e-12 {
                None
            } else {
                Some((moment / sum, sum))
            }
        })
        .collect()
}

/// Fits the edge line to per-row gradient centroids.
///
/// Fails with `EdgeFitError` when fewer than [`MIN_FIT_LINES`] rows carry the edge.
pub fn fit_edge(roi: &GrayImage) -> Result<LineFit> {
    let cents = line_centroids(roi);
    let peak = cents
        .iter()
        .flatten()
        .map(|(_, s)| s.abs())
        .fold(0.0, f64::max);
    let upper = (roi.width() as f64) - 2.0;
    let pts: Vec<(f64, f64)> = cents
        .iter()
        .enumerate()
        .filter_map(|(y, c)| {
            let (cx, s) = (*c)?;
            (s.abs() >= LINE_ENERGY_FRACTION * peak && (1.0..=upper).contains(&cx))
                .then_some((y as f64, cx))
        })
        .collect();
    if pts.len() < MIN_FIT_LINES {
        return Err(Error::EdgeFit(format!(
            "only {} scan lines cross the edge (need {MIN_FIT_LINES})",
            pts.len()
        )));
    }
    let n = pts.len() as f64;
    let my = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let mx = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut syy, mut syx, mut sxx) = (0.0, 0.0, 0.0);
    for &(y, x) in &pts {
        syy += (y - my) * (y - my);
        syx += (y - my) * (x - mx);
        sxx += (x - mx) * (x - mx);
    }
    let slope = syx / syy;
    let intercept = mx - slope * my;
    let ss_res: f64 = pts
        .iter()
        .map(|&(y, x)| {
            let r = x - (intercept + slope * y);
            r * r
        })
        .sum();
    // A perfectly constant centroid track is a perfect fit.
    let r2 = if sxx <= 1e-18 * n {
        1.0
    } else {
        1.0 - ss_res / sxx
    };
    Ok(LineFit {
        intercept,
        slope,
        r2,
        lines_used: pts.len(),
    })
}
