//! Slanted-edge SFR: edge spread function, line spread function, and MTF50.
//!
//! Defaults: 4x oversampling, `(-0.5, 0, +0.5)` derivative taps, a Hamming
//! window centered on the LSF centroid, and a first-order (linear) edge fit.

use std::f64::consts::PI;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::edgefit::{fit_edge, MIN_FIT_LINES};
use crate::error::{Error, Result};
use crate::harvest::{EdgeRegion, Orientation};
use crate::image::GrayImage;

pub const DEFAULT_OVERSAMPLE: usize = 4;
/// Upper bound on the derivative-filter correction factor.
pub const DERIVATIVE_CORRECTION_CAP: f64 = 10.0;
/// Highest reported frequency, cycles/pixel.
pub const MAX_REPORTED_FREQUENCY: f64 = 1.0;
pub const MIN_EDGE_FIT_R2: f64 = 0.9;
pub const MIN_EDGE_ANGLE_DEG: f64 = 1.0;
/// Regions with more empty ESF bins than this fraction are rejected.
pub const MAX_EMPTY_BIN_FRACTION: f64 = 0.2;

/// Supersampled edge profile across the edge.
#[derive(Clone, Debug, PartialEq)]
pub struct EsfProfile {
    /// Bin `i` covers distances `[(i - n/2) / os, (i + 1 - n/2) / os)` pixels.
    pub bins: Vec<f64>,
    pub oversample: usize,
    pub fitted_angle: f64,
    pub edge_offset_per_line: f64,
    pub empty_bins: usize,
}

impl EsfProfile {
    /// Distance of bin `i`'s center from the edge, in pixels.
    pub fn bin_center(&self, i: usize) -> f64 {
        (i as f64 + 0.5 - (self.bins.len() / 2) as f64) / self.oversample as f64
    }
}

/// Sampled SFR; `freqs` in cycles/pixel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SfrCurve {
    pub freqs: Vec<f64>,
    pub values: Vec<f64>,
    pub mtf50: Option<f64>,
}

impl SfrCurve {
    /// Lowest frequency where the curve drops below 0.5, linearly interpolated.
    pub fn find_mtf50(freqs: &[f64], values: &[f64]) -> Option<f64> {
        if values.first().is_none_or(|&v| v < 0.5) {
            return None;
        }
        values.windows(2).zip(freqs.windows(2)).find_map(|(v, f)| {
            (v[1] < 0.5).then(|| f[0] + (v[0] - 0.5) / (v[0] - v[1]) * (f[1] - f[0]))
        })
    }

    pub fn value_at(&self, f: f64) -> Option<f64> {
        self.freqs
            .iter()
            .position(|&x| (x - f).abs() < 1e-12)
            .map(|i| self.values[i])
    }
}

/// ESF of an ROI whose edge runs top to bottom.
pub fn esf_from_roi(roi: &GrayImage, oversample: usize) -> Result<EsfProfile> {
    if !matches!(oversample, 4 | 8) {
        return Err(Error::Domain(format!(
            "oversample must be 4 or 8, got {oversample}"
        )));
    }
    let fit = fit_edge(roi)?;
    if fit.lines_used < MIN_FIT_LINES {
        return Err(Error::EdgeFit(format!("{} lines", fit.lines_used)));
    }
    if fit.r2 < MIN_EDGE_FIT_R2 {
        return Err(Error::EdgeFit(format!(
            "centroid fit r2 {:.4} below {MIN_EDGE_FIT_R2}",
            fit.r2
        )));
    }
    let angle = fit.angle_deg();
    if angle.abs() < MIN_EDGE_ANGLE_DEG {
        return Err(Error::DegenerateEdge(format!(
            "fitted angle {angle:.3} deg is below {MIN_EDGE_ANGLE_DEG} deg"
        )));
    }

    let n = roi.width() * oversample;
    let half = (n / 2) as f64;
    let os = oversample as f64;
    let mut sums = vec![0.0; n];
    let mut counts = vec![0usize; n];
    for y in 0..roi.height() {
        for (x, &v) in roi.row(y).iter().enumerate() {
            let idx = (fit.distance(x as f64, y as f64) * os + half).floor();
            if idx >= 0.0 && idx < n as f64 {
                sums[idx as usize] += v;
                counts[idx as usize] += 1;
            }
        }
    }

    let empty = counts.iter().filter(|&&c| c == 0).count();
    if empty as f64 > MAX_EMPTY_BIN_FRACTION * n as f64 {
        return Err(Error::EdgeFit(format!("{empty} of {n} ESF bins are empty")));
    }
    let filled: Vec<Option<f64>> = sums
        .iter()
        .zip(&counts)
        .map(|(&s, &c)| (c > 0).then(|| s / c as f64))
        .collect();
    Ok(EsfProfile {
        bins: fill_gaps(&filled),
        oversample,
        fitted_angle: angle,
        edge_offset_per_line: fit.slope,
        empty_bins: empty,
    })
}

/// Linear interpolation between the nearest non-empty neighbours; the ends
/// copy the nearest value.
fn fill_gaps(vals: &[Option<f64>]) -> Vec<f64> {
    let known: Vec<(usize, f64)> = vals
        .iter()
        .enumerate()
        .filter_map(|(i, v)| v.map(|v| (i, v)))
        .collect();
    let mut out = Vec::with_capacity(vals.len());
    let mut k = 0;
    for i in 0..vals.len() {
        while k + 1 < known.len() && known[k + 1].0 <= i {
            k += 1;
        }
        let (i0, v0) = known[k];
        let v = if i <= i0 || k + 1 == known.len() {
            v0
        } else {
            let (i1, v1) = known[k + 1];
            v0 + (v1 - v0) * (i - i0) as f64 / (i1 - i0) as f64
        };
        out.push(v);
    }
    out
}

pub fn compute_esf(region: &EdgeRegion, oversample: usize) -> Result<EsfProfile> {
    esf_from_roi(&region.normalized_roi(), oversample)
}

/// `0.54 + 0.46 cos(2 pi (i - c) / n)`, floored at the window's end value.
fn hamming(i: usize, center: f64, n: usize) -> f64 {
    let off = i as f64 - center;
    if off.abs() > n as f64 / 2.0 {
        0.08
    } else {
        0.54 + 0.46 * (2.0 * PI * off / n as f64).cos()
    }
}

/// Response of the `(-0.5, 0, +0.5)` derivative over bins of pitch `step`.
fn derivative_response(f: f64, step: f64) -> f64 {
    let x = 2.0 * PI * f * step;
    if x == 0.0 {
        1.0
    } else {
        x.sin() / x
    }
}

pub fn compute_sfr(esf: &EsfProfile) -> Result<SfrCurve> {
    let n = esf.bins.len();
    let os = esf.oversample;
    if n < 3 || !n.is_multiple_of(os) {
        return Err(Error::Domain(format!("ESF of {n} bins at oversample {os}")));
    }
    let b = &esf.bins;
    let mut lsf = vec![0.0; n];
    for i in 1..n - 1 {
        lsf[i] = 0.5 * (b[i + 1] - b[i - 1]);
    }
    let total: f64 = lsf.iter().sum();
    if lsf.iter().map(|v| v.abs()).sum::<f64>() < 1e-12 || total.abs() < 1e-12 {
        return Err(Error::Normalization("line spread function is flat".into()));
    }
    let centroid = lsf
        .iter()
        .enumerate()
        .map(|(i, v)| i as f64 * v)
        .sum::<f64>()
        / total;

    let mut buf: Vec<Complex<f64>> = lsf
        .iter()
        .enumerate()
        .map(|(i, &v)| Complex::new(v * hamming(i, centroid, n), 0.0))
        .collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);

    let dc = buf[0].norm();
    if !(dc.is_finite() && dc > 1e-12) {
        return Err(Error::Normalization("zero DC response".into()));
    }
    // DFT bin k sits at k * os / n cycles/pixel; report up to 1 cy/px.
    let pixels = n / os;
    let last = ((MAX_REPORTED_FREQUENCY * pixels as f64).round() as usize).min(n / 2);
    let step = 1.0 / os as f64;
    let mut freqs = Vec::with_capacity(last + 1);
    let mut values = Vec::with_capacity(last + 1);
    for (k, c) in buf.iter().enumerate().take(last + 1) {
        let f = k as f64 / pixels as f64;
        let correction = (1.0 / derivative_response(f, step)).min(DERIVATIVE_CORRECTION_CAP);
        freqs.push(f);
        values.push(if k == 0 {
            1.0
        } else {
            c.norm() / dc * correction
        });
    }
    let mtf50 = SfrCurve::find_mtf50(&freqs, &values);
    Ok(SfrCurve {
        freqs,
        values,
        mtf50,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrequencySample {
    pub f: f64,
    pub m: f64,
}

/// One entry of `measurements.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionMeasurement {
    pub source: String,
    pub origin: [usize; 2],
    pub orientation: Orientation,
    pub angle_deg: f64,
    pub mtf50: Option<f64>,
    pub sfr: Vec<FrequencySample>,
    /// `"ok"` or the error kind, e.g. `"EdgeFitError"`.
    pub status: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

impl RegionMeasurement {
    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }
}

/// ESF then SFR; horizontal regions are transposed so both share one path.
/// Failures are recorded in `status`, not returned.
pub fn measure_region(region: &EdgeRegion, oversample: usize) -> RegionMeasurement {
    let result =
        compute_esf(region, oversample).and_then(|esf| Ok((esf.fitted_angle, compute_sfr(&esf)?)));
    let base = RegionMeasurement {
        source: region.source.clone(),
        origin: [region.origin.0, region.origin.1],
        orientation: region.orientation,
        angle_deg: region.angle,
        mtf50: None,
        sfr: Vec::new(),
        status: "ok".into(),
        reason: None,
    };
    match result {
        Ok((angle, curve)) => RegionMeasurement {
            angle_deg: angle,
            mtf50: curve.mtf50,
            sfr: curve
                .freqs
                .iter()
                .zip(&curve.values)
                .map(|(&f, &m)| FrequencySample { f, m })
                .collect(),
            ..base
        },
        Err(e) => RegionMeasurement {
            status: e.kind().to_string(),
            reason: Some(e.to_string()),
            ..base
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chart::{normal_cdf, render_chart, ChartSpec};
    use crate::degrade::{Blur, GaussianSpec};
    use crate::harvest::{harvest_edges, HarvestCriteria};
    use crate::image::transpose;

    fn chart_region(spec: &ChartSpec) -> EdgeRegion {
        let img = render_chart(spec).unwrap();
        let mut regions = harvest_edges(&img, &HarvestCriteria::default());
        assert_eq!(regions.len(), 1);
        regions.remove(0)
    }

    #[test]
    fn mtf50_interpolation() {
        let f = [0.0, 0.1, 0.2, 0.3];
        let m = SfrCurve::find_mtf50(&f, &[1.0, 0.8, 0.4, 0.2]).unwrap();
        assert!((m - 0.175).abs() < 1e-15);
        assert_eq!(SfrCurve::find_mtf50(&f, &[1.0, 0.9, 0.8, 0.7]), None);
        assert_eq!(SfrCurve::find_mtf50(&f, &[0.4, 0.3, 0.2, 0.1]), None);
    }

    #[test]
    fn gap_filling() {
        let v = fill_gaps(&[None, Some(1.0), None, None, Some(4.0), None]);
        assert_eq!(v, vec![1.0, 1.0, 2.0, 3.0, 4.0, 4.0]);
    }

    #[test]
    fn gaussian_esf_matches_erf_profile() {
        let spec = ChartSpec::gaussian(1.0, 5.0);
        let esf = compute_esf(&chart_region(&spec), 4).unwrap();
        assert_eq!(esf.bins.len(), 128);
        let sq: f64 = (0..esf.bins.len())
            .map(|i| {
                let expect = spec.low + (spec.high - spec.low) * normal_cdf(esf.bin_center(i));
                (esf.bins[i] - expect).powi(2)
            })
            .sum();
        let rms = (sq / esf.bins.len() as f64).sqrt();
        assert!(rms < 0.01, "rms {rms}");
        assert!((esf.fitted_angle - 5.0).abs() < 0.5);
    }

    #[test]
    fn step_esf_transition_width() {
        let spec = ChartSpec::step(5.0);
        let esf = compute_esf(&chart_region(&spec), 4).unwrap();
        let (lo, hi) = (spec.low, spec.high);
        let level = |p: f64| lo + p * (hi - lo);
        let cross = |t: f64| {
            let i = esf.bins.iter().position(|&v| v >= t).unwrap();
            let (a, b) = (esf.bins[i - 1], esf.bins[i]);
            esf.bin_center(i - 1) + (t - a) / (b - a) / esf.oversample as f64
        };
        let width = cross(level(0.9)) - cross(level(0.1));
        // Box-aperture prediction, tolerance four oversampled bins.
        assert!(
            (width - 1.28).abs() <= 4.0 / esf.oversample as f64,
            "width {width}"
        );
    }

    #[test]
    fn horizontal_region_matches_transposed_vertical() {
        let spec = ChartSpec::gaussian(1.2, 6.0);
        let v = chart_region(&spec);
        let h_img = transpose(&render_chart(&spec).unwrap());
        let h = harvest_edges(&h_img, &HarvestCriteria::default()).remove(0);
        assert_eq!(h.orientation, Orientation::Horizontal);
        assert_eq!(compute_esf(&h, 4).unwrap(), compute_esf(&v, 4).unwrap());
        let mv = measure_region(&v, 4);
        let mh = measure_region(&h, 4);
        assert_eq!(mv.sfr, mh.sfr);
        assert_eq!(mv.mtf50, mh.mtf50);
    }

    #[test]
    fn curve_invariants() {
        let curve =
            compute_sfr(&compute_esf(&chart_region(&ChartSpec::gaussian(1.0, 5.0)), 4).unwrap())
                .unwrap();
        assert_eq!(curve.values[0], 1.0);
        assert_eq!(curve.freqs.len(), 33);
        assert_eq!(*curve.freqs.last().unwrap(), 1.0);
        assert!(curve.freqs.windows(2).all(|p| p[1] > p[0]));
        assert!(curve.values.iter().all(|v| v.is_finite() && *v >= 0.0));
        let m = curve.mtf50.unwrap();
        assert!(m > 0.0 && m <= 1.0);
    }

    #[test]
    fn oversample_eight_supported() {
        let region = chart_region(&ChartSpec::gaussian(1.0, 5.0));
        let esf = compute_esf(&region, 8).unwrap();
        assert_eq!(esf.bins.len(), 256);
        let curve = compute_sfr(&esf).unwrap();
        assert_eq!(curve.freqs.len(), 33);
        assert!(compute_esf(&region, 3).is_err());
    }

    #[test]
    fn flat_roi_reports_fit_error() {
        let region = EdgeRegion {
            source: "flat.png".into(),
            orientation: Orientation::Vertical,
            roi: GrayImage::constant(32, 64, 0.5),
            origin: (0, 0),
            angle: 5.0,
            contrast: 0.5,
            linefit_r2: 1.0,
        };
        let m = measure_region(&region, 4);
        assert_eq!(m.status, "EdgeFitError");
        assert!(m.mtf50.is_none());
        assert!(m.reason.is_some());
    }

    #[test]
    fn flat_esf_is_normalization_error() {
        let esf = EsfProfile {
            bins: vec![0.3; 128],
            oversample: 4,
            fitted_angle: 5.0,
            edge_offset_per_line: 0.1,
            empty_bins: 0,
        };
        assert!(matches!(compute_sfr(&esf), Err(Error::Normalization(_))));
    }

    #[test]
    fn vertical_chart_edge_is_degenerate() {
        let roi = render_chart(&ChartSpec {
            width: 32,
            height: 64,
            ..ChartSpec::step(0.3)
        })
        .unwrap();
        assert!(matches!(
            esf_from_roi(&roi, 4),
            Err(Error::DegenerateEdge(_))
        ));
    }

    #[test]
    fn blur_lowers_mtf50() {
        let spec = ChartSpec::step(5.0);
        let sharp = measure_region(&chart_region(&spec), 4).mtf50.unwrap();
        let img = render_chart(&spec)
            .unwrap()
            .blur(&GaussianSpec::new(2.0).unwrap())
            .unwrap();
        let region = harvest_edges(&img, &HarvestCriteria::default()).remove(0);
        let soft = measure_region(&region, 4).mtf50.unwrap();
        assert!(soft < sharp, "{soft} !< {sharp}");
    }
}
