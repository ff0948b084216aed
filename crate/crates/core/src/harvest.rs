//! Harvesting of slanted step-edge regions from arbitrary scene images.
//!
//! Pipeline per image:
//! 1. central-difference gradients on interior pixels;
//! 2. 8-connected grouping of strong-gradient pixels that share the same
//!    dominant axis and sign;
//! 3. one `roi_width x roi_length` window per sufficiently long group,
//!    centered on it with the long side along the edge;
//! 4. centroid line fit inside the window;
//! 5. overlap resolution (greedy by contrast), then the acceptance criteria.
//!
//! A near-vertical edge is [`Orientation::Vertical`]. It is measured across
//! the horizontal axis and feeds HMTF50; near-horizontal edges feed VMTF50.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{list_images, relative_name};
use crate::degrade::FileFailure;
use crate::edgefit::{fit_edge, LineFit};
use crate::error::{Error, Result};
use crate::image::{apply_gamma, decode_image, to_luma, transpose, GrayImage, LumaWeights};

/// Minimum gradient magnitude (luminance per pixel) for an edge pixel.
pub const GRADIENT_THRESHOLD: f64 = 0.02;
/// Pixels closer than this to the fitted edge belong to neither flank.
pub const FLANK_MARGIN: f64 = 2.0;
/// Flank standard deviation limit as a fraction of the step height.
pub const FLANK_STD_FRACTION: f64 = 0.25;
/// Windows overlapping a kept window by more than this area fraction are dropped.
pub const MAX_OVERLAP: f64 = 0.25;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HarvestCriteria {
    /// Degrees from the nearest image axis.
    pub min_angle: f64,
    pub max_angle: f64,
    /// Pixels across the edge.
    pub roi_width: usize,
    /// Pixels along the edge.
    pub roi_length: usize,
    /// Michelson contrast `(high - low) / (high + low)`.
    pub min_contrast: f64,
    pub min_linefit_r2: f64,
    pub max_regions_per_image: usize,
}

impl Default for HarvestCriteria {
    fn default() -> Self {
        Self {
            min_angle: 2.0,
            max_angle: 43.0,
            roi_width: 32,
            roi_length: 64,
            min_contrast: 0.20,
            min_linefit_r2: 0.95,
            max_regions_per_image: 50,
        }
    }
}

impl HarvestCriteria {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.min_angle && self.min_angle < self.max_angle && self.max_angle < 45.0) {
            return Err(Error::Domain(format!(
                "angle band must satisfy 0 < min < max < 45, got {} .. {}",
                self.min_angle, self.max_angle
            )));
        }
        if self.roi_width < 16 || self.roi_length < 16 {
            return Err(Error::Domain(format!(
                "ROI must be at least 16x16, got {}x{}",
                self.roi_width, self.roi_length
            )));
        }
        for (name, v) in [
            ("min_contrast", self.min_contrast),
            ("min_linefit_r2", self.min_linefit_r2),
        ] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::Domain(format!("{name} must be in (0, 1], got {v}")));
            }
        }
        if self.max_regions_per_image == 0 {
            return Err(Error::Domain("max_regions_per_image must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Orientation {
    /// Edge nearest the vertical axis; yields horizontal-direction SFR (HMTF50).
    Vertical,
    /// Edge nearest the horizontal axis; yields vertical-direction SFR (VMTF50).
    Horizontal,
}

impl Orientation {
    pub fn swapped(self) -> Self {
        match self {
            Orientation::Vertical => Orientation::Horizontal,
            Orientation::Horizontal => Orientation::Vertical,
        }
    }

    /// ROI `(width, height)` in source-image pixels.
    pub fn roi_dims(self, roi_width: usize, roi_length: usize) -> (usize, usize) {
        match self {
            Orientation::Vertical => (roi_width, roi_length),
            Orientation::Horizontal => (roi_length, roi_width),
        }
    }
}

impl fmt::Display for Orientation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Orientation::Vertical => "Vertical",
            Orientation::Horizontal => "Horizontal",
        })
    }
}

/// A validated slanted-edge ROI.
#[derive(Clone, Debug, PartialEq)]
pub struct EdgeRegion {
    pub source: String,
    pub orientation: Orientation,
    /// Crop as it appears in the source image.
    pub roi: GrayImage,
    /// Top-left corner of the crop in the source.
    pub origin: (usize, usize),
    pub angle: f64,
    pub contrast: f64,
    pub linefit_r2: f64,
}

impl EdgeRegion {
    /// The ROI rotated so the edge runs top to bottom.
    pub fn normalized_roi(&self) -> GrayImage {
        match self.orientation {
            Orientation::Vertical => self.roi.clone(),
            Orientation::Horizontal => transpose(&self.roi),
        }
    }
}

/// Serialized form of an [`EdgeRegion`] (one entry of `regions.json`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionRecord {
    pub source: String,
    pub origin: [usize; 2],
    pub orientation: Orientation,
    pub angle_deg: f64,
    pub contrast: f64,
    pub r2: f64,
    pub roi_width: usize,
    pub roi_length: usize,
}

impl RegionRecord {
    pub fn from_region(r: &EdgeRegion) -> Self {
        let n = r.normalized_roi();
        Self {
            source: r.source.clone(),
            origin: [r.origin.0, r.origin.1],
            orientation: r.orientation,
            angle_deg: r.angle,
            contrast: r.contrast,
            r2: r.linefit_r2,
            roi_width: n.width(),
            roi_length: n.height(),
        }
    }

    /// Re-crops the region from its (already luminance-converted) source image.
    pub fn to_region(&self, source_image: &GrayImage) -> Result<EdgeRegion> {
        let (w, h) = self.orientation.roi_dims(self.roi_width, self.roi_length);
        let roi = source_image.crop(self.origin[0], self.origin[1], w, h)?;
        Ok(EdgeRegion {
            source: self.source.clone(),
            orientation: self.orientation,
            roi,
            origin: (self.origin[0], self.origin[1]),
            angle: self.angle_deg,
            contrast: self.contrast,
            linefit_r2: self.r2,
        })
    }
}

/// Why candidate windows were not kept.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RejectionTally {
    pub edge_fit: usize,
    pub overlap: usize,
    pub angle: usize,
    pub contrast: usize,
    pub linefit: usize,
    pub flank: usize,
    pub truncated: usize,
}

impl RejectionTally {
    fn add(&mut self, other: &RejectionTally) {
        self.edge_fit += other.edge_fit;
        self.overlap += other.overlap;
        self.angle += other.angle;
        self.contrast += other.contrast;
        self.linefit += other.linefit;
        self.flank += other.flank;
        self.truncated += other.truncated;
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum EdgeClass {
    Vertical(bool),
    Horizontal(bool),
}

struct Component {
    class: EdgeClass,
    count: u64,
    sum_x: u64,
    sum_y: u64,
    min: (usize, usize),
    max: (usize, usize),
}

fn classify(img: &GrayImage) -> Vec<Option<EdgeClass>> {
    let (w, h) = (img.width(), img.height());
    let mut classes = vec![None; w * h];
    if w < 3 || h < 3 {
        return classes;
    }
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let gx = 0.5 * (img.get(x + 1, y) - img.get(x - 1, y));
            let gy = 0.5 * (img.get(x, y + 1) - img.get(x, y - 1));
            if gx.hypot(gy) < GRADIENT_THRESHOLD {
                continue;
            }
            classes[y * w + x] = if gx.abs() > gy.abs() {
                Some(EdgeClass::Vertical(gx > 0.0))
            } else if gy.abs() > gx.abs() {
                Some(EdgeClass::Horizontal(gy > 0.0))
            } else {
                None
            };
        }
    }
    classes
}

fn components(classes: &[Option<EdgeClass>], w: usize, h: usize) -> Vec<Component> {
    let mut seen = vec![false; w * h];
    let mut out = Vec::new();
    let mut stack = Vec::new();
    for start in 0..w * h {
        let Some(class) = classes[start] else {
            continue;
        };
        if seen[start] {
            continue;
        }
        seen[start] = true;
        stack.push(start);
        let mut comp = Component {
            class,
            count: 0,
            sum_x: 0,
            sum_y: 0,
            min: (usize::MAX, usize::MAX),
            max: (0, 0),
        };
        while let Some(i) = stack.pop() {
            let (x, y) = (i % w, i / w);
            comp.count += 1;
            comp.sum_x += x as u64;
            comp.sum_y += y as u64;
            comp.min = (comp.min.0.min(x), comp.min.1.min(y));
            comp.max = (comp.max.0.max(x), comp.max.1.max(y));
            for dy in -1isize..=1 {
                for dx in -1isize..=1 {
                    let (nx, ny) = (x as isize + dx, y as isize + dy);
                    if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                        continue;
                    }
                    let j = ny as usize * w + nx as usize;
                    if !seen[j] && classes[j] == Some(class) {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
        }
        out.push(comp);
    }
    out
}

/// Integer mean rounded half up.
fn rounded_mean(sum: u64, n: u64) -> usize {
    ((2 * sum + n) / (2 * n)) as usize
}

fn window_start(center: usize, size: usize, limit: usize) -> usize {
    center.saturating_sub(size / 2).min(limit - size)
}

#[derive(Clone, Debug)]
struct Candidate {
    orientation: Orientation,
    origin: (usize, usize),
    /// Origin in the edge-normalized frame; transpose-invariant ordering key.
    key: (usize, usize),
    roi: GrayImage,
    fit: Option<LineFit>,
    contrast: f64,
    flanks_uniform: bool,
}

struct FlankStats {
    contrast: f64,
    uniform: bool,
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n;
    (m, var.sqrt())
}

fn flank_stats(roi: &GrayImage, fit: &LineFit) -> FlankStats {
    let (mut left, mut right) = (Vec::new(), Vec::new());
    for y in 0..roi.height() {
        for x in 0..roi.width() {
            let d = fit.distance(x as f64, y as f64);
            if d <= -FLANK_MARGIN {
                left.push(roi.get(x, y));
            } else if d >= FLANK_MARGIN {
                right.push(roi.get(x, y));
            }
        }
    }
    let min_count = roi.height().max(1);
    if left.len() < min_count || right.len() < min_count {
        return FlankStats {
            contrast: 0.0,
            uniform: false,
        };
    }
    let (ml, sl) = mean_std(&left);
    let (mr, sr) = mean_std(&right);
    let (low, high) = (ml.min(mr), ml.max(mr));
    let step = high - low;
    let contrast = if high + low > 0.0 {
        step / (high + low)
    } else {
        0.0
    };
    let limit = FLANK_STD_FRACTION * step;
    FlankStats {
        contrast,
        uniform: step > 0.0 && sl < limit && sr < limit,
    }
}

fn overlap_area(a: &Candidate, b: &Candidate, c: &HarvestCriteria) -> usize {
    let (aw, ah) = a.orientation.roi_dims(c.roi_width, c.roi_length);
    let (bw, bh) = b.orientation.roi_dims(c.roi_width, c.roi_length);
    let ix = (a.origin.0 + aw)
        .min(b.origin.0 + bw)
        .saturating_sub(a.origin.0.max(b.origin.0));
    let iy = (a.origin.1 + ah)
        .min(b.origin.1 + bh)
        .saturating_sub(a.origin.1.max(b.origin.1));
    ix * iy
}

fn candidates(img: &GrayImage, c: &HarvestCriteria) -> Vec<Candidate> {
    let (w, h) = (img.width(), img.height());
    let classes = classify(img);
    let min_extent = c.roi_length / 2;
    let mut out = Vec::new();
    for comp in components(&classes, w, h) {
        if comp.count < min_extent as u64 {
            continue;
        }
        let cx = rounded_mean(comp.sum_x, comp.count);
        let cy = rounded_mean(comp.sum_y, comp.count);
        let (orientation, along_extent) = match comp.class {
            EdgeClass::Vertical(_) => (Orientation::Vertical, comp.max.1 - comp.min.1 + 1),
            EdgeClass::Horizontal(_) => (Orientation::Horizontal, comp.max.0 - comp.min.0 + 1),
        };
        if along_extent < min_extent {
            continue;
        }
        let (rw, rh) = orientation.roi_dims(c.roi_width, c.roi_length);
        if rw > w || rh > h {
            continue;
        }
        let origin = (window_start(cx, rw, w), window_start(cy, rh, h));
        let roi = img
            .crop(origin.0, origin.1, rw, rh)
            .expect("window inside image");
        let (key, norm) = match orientation {
            Orientation::Vertical => (origin, roi.clone()),
            Orientation::Horizontal => ((origin.1, origin.0), transpose(&roi)),
        };
        let fit = fit_edge(&norm).ok();
        let stats = fit.as_ref().map(|f| flank_stats(&norm, f));
        out.push(Candidate {
            orientation,
            origin,
            key,
            roi,
            fit,
            contrast: stats.as_ref().map_or(0.0, |s| s.contrast),
            flanks_uniform: stats.as_ref().is_some_and(|s| s.uniform),
        });
    }
    out
}

fn by_contrast(a: &Candidate, b: &Candidate) -> std::cmp::Ordering {
    b.contrast.total_cmp(&a.contrast).then(a.key.cmp(&b.key))
}

/// Harvests regions from one image, also reporting why candidates were dropped.
pub fn harvest_edges_with_tally(
    img: &GrayImage,
    c: &HarvestCriteria,
    source: &str,
) -> (Vec<EdgeRegion>, RejectionTally) {
    let mut tally = RejectionTally::default();
    let mut cands = candidates(img, c);
    cands.sort_by(by_contrast);

    let area = (c.roi_width * c.roi_length) as f64;
    let mut kept: Vec<Candidate> = Vec::new();
    for cand in cands {
        let clash = kept
            .iter()
            .any(|k| overlap_area(k, &cand, c) as f64 > MAX_OVERLAP * area);
        if clash {
            tally.overlap += 1;
        } else {
            kept.push(cand);
        }
    }

    let mut accepted = Vec::new();
    for cand in kept {
        let Some(fit) = cand.fit else {
            tally.edge_fit += 1;
            continue;
        };
        let angle = fit.angle_deg();
        if !(c.min_angle..=c.max_angle).contains(&angle.abs()) {
            tally.angle += 1;
        } else if cand.contrast < c.min_contrast {
            tally.contrast += 1;
        } else if fit.r2 < c.min_linefit_r2 {
            tally.linefit += 1;
        } else if !cand.flanks_uniform {
            tally.flank += 1;
        } else {
            accepted.push(EdgeRegion {
                source: source.to_string(),
                orientation: cand.orientation,
                roi: cand.roi,
                origin: cand.origin,
                angle,
                contrast: cand.contrast,
                linefit_r2: fit.r2,
            });
        }
    }
    if accepted.len() > c.max_regions_per_image {
        tally.truncated += accepted.len() - c.max_regions_per_image;
        accepted.truncate(c.max_regions_per_image);
    }
    (accepted, tally)
}

/// Regions sorted by descending contrast; empty when nothing qualifies.
pub fn harvest_edges(img: &GrayImage, c: &HarvestCriteria) -> Vec<EdgeRegion> {
    harvest_edges_with_tally(img, c, "").0
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct HarvestStats {
    pub images_processed: usize,
    pub decode_failures: Vec<FileFailure>,
    pub regions_per_image: BTreeMap<String, usize>,
    pub rejections: RejectionTally,
}

#[derive(Clone, Debug)]
pub struct HarvestOutput {
    pub regions: Vec<EdgeRegion>,
    pub stats: HarvestStats,
}

/// Options shared by every stage that turns files into luminance.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LumaOptions {
    pub weights: LumaWeights,
    pub gamma: Option<f64>,
}

impl Default for LumaOptions {
    fn default() -> Self {
        Self {
            weights: LumaWeights::REC709,
            gamma: None,
        }
    }
}

pub fn load_luma(path: &Path, opts: &LumaOptions) -> Result<GrayImage> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let gray = to_luma(&decode_image(&bytes)?, &opts.weights)?;
    match opts.gamma {
        Some(g) => apply_gamma(&gray, g),
        None => Ok(gray),
    }
}

type FileHarvest = (Vec<EdgeRegion>, RejectionTally);

/// Harvests every image under `dir`. Sources are recorded relative to `dir`.
pub fn harvest_dataset(
    dir: &Path,
    c: &HarvestCriteria,
    opts: &LumaOptions,
) -> Result<HarvestOutput> {
    c.validate()?;
    let files = list_images(dir)?;
    let per_file: Vec<(String, Result<FileHarvest>)> = files
        .par_iter()
        .map(|path| {
            let rel = relative_name(dir, path);
            let res = load_luma(path, opts).map(|img| harvest_edges_with_tally(&img, c, &rel));
            (rel, res)
        })
        .collect();

    let mut stats = HarvestStats::default();
    let mut regions = Vec::new();
    for (rel, res) in per_file {
        match res {
            Ok((found, tally)) => {
                stats.images_processed += 1;
                stats.regions_per_image.insert(rel, found.len());
                stats.rejections.add(&tally);
                regions.extend(found);
            }
            Err(e) => stats.decode_failures.push(FileFailure {
                file: rel,
                reason: e.to_string(),
            }),
        }
    }
    Ok(HarvestOutput { regions, stats })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chart::{render_chart, ChartSpec};

    fn assert_send_sync<T: Send + Sync>() {}

    #[test]
    fn types_are_shareable() {
        assert_send_sync::<EdgeRegion>();
        assert_send_sync::<HarvestCriteria>();
    }

    #[test]
    fn blank_image_has_no_regions() {
        let img = GrayImage::constant(128, 128, 0.5);
        assert!(harvest_edges(&img, &HarvestCriteria::default()).is_empty());
    }

    #[test]
    fn single_vertical_region_from_step_chart() {
        let img = render_chart(&ChartSpec::step(5.0)).unwrap();
        let regions = harvest_edges(&img, &HarvestCriteria::default());
        assert_eq!(regions.len(), 1);
        let r = &regions[0];
        assert_eq!(r.orientation, Orientation::Vertical);
        assert!((r.angle - 5.0).abs() < 0.5, "angle {}", r.angle);
        assert_eq!((r.roi.width(), r.roi.height()), (32, 64));
        assert!((r.contrast - 0.7).abs() < 0.02, "contrast {}", r.contrast);
    }

    #[test]
    fn transposed_chart_gives_horizontal_region() {
        let img = transpose(&render_chart(&ChartSpec::step(5.0)).unwrap());
        let regions = harvest_edges(&img, &HarvestCriteria::default());
        assert_eq!(regions.len(), 1);
        assert_eq!(regions[0].orientation, Orientation::Horizontal);
        assert_eq!((regions[0].roi.width(), regions[0].roi.height()), (64, 32));
    }

    #[test]
    fn steep_edge_rejected() {
        let img = render_chart(&ChartSpec::step(45.0)).unwrap();
        assert!(harvest_edges(&img, &HarvestCriteria::default()).is_empty());
    }

    #[test]
    fn near_axis_edge_rejected_by_min_angle() {
        let img = render_chart(&ChartSpec::step(0.5)).unwrap();
        let (regions, tally) = harvest_edges_with_tally(&img, &HarvestCriteria::default(), "");
        assert!(regions.is_empty());
        assert_eq!(tally.angle, 1);
    }

    #[test]
    fn low_contrast_rejected() {
        let img = render_chart(&ChartSpec {
            low: 0.45,
            high: 0.55,
            ..ChartSpec::step(5.0)
        })
        .unwrap();
        let (regions, tally) = harvest_edges_with_tally(&img, &HarvestCriteria::default(), "");
        assert!(regions.is_empty());
        assert_eq!(tally.contrast, 1);
    }

    #[test]
    fn truncation_respects_max_regions() {
        // Two separated edges side by side.
        let left = render_chart(&ChartSpec {
            width: 100,
            ..ChartSpec::step(6.0)
        })
        .unwrap();
        let img = GrayImage::from_fn(200, 200, |x, y| {
            if x < 100 {
                left.get(x, y)
            } else {
                1.0 - left.get(x - 100, y)
            }
        });
        let c = HarvestCriteria::default();
        assert_eq!(harvest_edges(&img, &c).len(), 2);
        let one = HarvestCriteria {
            max_regions_per_image: 1,
            ..c
        };
        let (regions, tally) = harvest_edges_with_tally(&img, &one, "");
        assert_eq!(regions.len(), 1);
        assert_eq!(tally.truncated, 1);
    }

    #[test]
    fn criteria_validation() {
        assert!(HarvestCriteria::default().validate().is_ok());
        let bad = HarvestCriteria {
            min_angle: 10.0,
            max_angle: 5.0,
            ..HarvestCriteria::default()
        };
        assert!(bad.validate().is_err());
        let small = HarvestCriteria {
            roi_width: 8,
            ..HarvestCriteria::default()
        };
        assert!(small.validate().is_err());
    }

    #[test]
    fn record_round_trip_recrops_same_roi() {
        let img = transpose(&render_chart(&ChartSpec::step(7.0)).unwrap());
        let region = harvest_edges(&img, &HarvestCriteria::default()).remove(0);
        let rec = RegionRecord::from_region(&region);
        assert_eq!((rec.roi_width, rec.roi_length), (32, 64));
        assert_eq!(rec.to_region(&img).unwrap(), region);
    }
}
