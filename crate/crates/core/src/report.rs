//! Dataset-level MTF50 statistics, percent changes against a baseline,
//! detection-metric ingestion, and the CSV/JSON/SVG report artifacts.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::degrade::kernel_size;
use crate::error::{Error, Result};
use crate::harvest::Orientation;
use crate::sfr::RegionMeasurement;

pub const TABLE1_COLUMNS: [&str; 8] = [
    "sigma",
    "kernel",
    "HMTF50",
    "H%",
    "VMTF50",
    "V%",
    "MTF50mean",
    "mean%",
];

/// Rounds cycles/pixel values for display (3 decimals).
///
/// Rounds the exact binary value, as `{:.3}` does, so JSON, CSV and SVG
/// agree; `(v * 1000).round()` can disagree when the product rounds to a tie.
pub fn round_cypx(v: f64) -> f64 {
    round_decimal(v, 3)
}

/// Rounds percentages for display (2 decimals).
pub fn round_pct(v: f64) -> f64 {
    round_decimal(v, 2)
}

fn round_decimal(v: f64, decimals: usize) -> f64 {
    format!("{v:.decimals$}").parse().unwrap_or(v)
}

/// How regions are weighted when averaging MTF50.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Weighting {
    /// Every region counts once.
    #[default]
    PerRegion,
    /// Each image's regions are averaged first; every image counts once.
    PerImage,
}

/// One `table1.csv` row: mean MTF50 per edge orientation for a dataset variant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub variant: String,
    /// Blur sigma of the variant; `None` for the baseline.
    pub sigma: Option<f64>,
    /// Mean over vertical-edge regions (horizontal spatial frequencies).
    pub hmtf50_mean: Option<f64>,
    /// Mean over horizontal-edge regions.
    pub vmtf50_mean: Option<f64>,
    /// Mean of the two orientation means (or the one that is present).
    pub mtf50_mean: f64,
    pub n_h: usize,
    pub n_v: usize,
    /// Measured regions whose curve never crossed 0.5.
    pub n_absent: usize,
    /// Regions whose measurement failed.
    pub n_failed: usize,
}

impl DatasetSummary {
    /// Builds a summary from orientation means.
    pub fn from_means(variant: &str, hmtf50: Option<f64>, vmtf50: Option<f64>) -> Result<Self> {
        let mtf50_mean = match (hmtf50, vmtf50) {
            (Some(h), Some(v)) => (h + v) / 2.0,
            (Some(m), None) | (None, Some(m)) => m,
            (None, None) => {
                return Err(Error::EmptyInput(format!(
                    "variant `{variant}` has no MTF50 values"
                )))
            }
        };
        for m in [hmtf50, vmtf50].into_iter().flatten() {
            if !(m > 0.0 && m <= 1.0) {
                return Err(Error::Domain(format!("MTF50 mean {m} outside (0, 1]")));
            }
        }
        Ok(Self {
            variant: variant.to_string(),
            sigma: variant_sigma(variant),
            hmtf50_mean: hmtf50,
            vmtf50_mean: vmtf50,
            mtf50_mean,
            n_h: 0,
            n_v: 0,
            n_absent: 0,
            n_failed: 0,
        })
    }

    pub fn kernel_size(&self) -> Option<usize> {
        self.sigma.and_then(|s| kernel_size(s).ok())
    }
}

/// `sigma<k>` labels carry their blur sigma; anything else is a baseline.
pub fn variant_sigma(label: &str) -> Option<f64> {
    label
        .strip_prefix("sigma")
        .and_then(|s| s.parse::<f64>().ok())
        .filter(|s| *s > 0.0)
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Averages per-region MTF50 into a [`DatasetSummary`].
///
/// Vertical regions feed `hmtf50_mean`, horizontal ones `vmtf50_mean`.
/// Regions without an MTF50 are excluded and counted. Measurements are
/// sorted by `(source, origin, orientation)` first, so the result does not
/// depend on input order.
pub fn aggregate(
    measurements: &[RegionMeasurement],
    variant: &str,
    weighting: Weighting,
) -> Result<DatasetSummary> {
    let mut sorted: Vec<&RegionMeasurement> = measurements.iter().collect();
    sorted.sort_by(|a, b| {
        (&a.source, a.origin, a.orientation)
            .cmp(&(&b.source, b.origin, b.orientation))
            .then(
                a.mtf50
                    .partial_cmp(&b.mtf50)
                    .unwrap_or(std::cmp::Ordering::Equal),
            )
    });

    let n_failed = sorted.iter().filter(|m| !m.is_ok()).count();
    let n_absent = sorted
        .iter()
        .filter(|m| m.is_ok() && m.mtf50.is_none())
        .count();

    let orientation_mean = |o: Orientation| -> (Option<f64>, usize) {
        let vals: Vec<(&str, f64)> = sorted
            .iter()
            .filter(|m| m.orientation == o)
            .filter_map(|m| m.mtf50.map(|v| (m.source.as_str(), v)))
            .collect();
        let n = vals.len();
        let avg = match weighting {
            Weighting::PerRegion => mean(&vals.iter().map(|v| v.1).collect::<Vec<_>>()),
            Weighting::PerImage => {
                let mut per_image: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
                for (src, v) in vals {
                    per_image.entry(src).or_default().push(v);
                }
                let image_means: Vec<f64> = per_image.values().filter_map(|v| mean(v)).collect();
                mean(&image_means)
            }
        };
        (avg, n)
    };
    let (h, n_h) = orientation_mean(Orientation::Vertical);
    let (v, n_v) = orientation_mean(Orientation::Horizontal);
    if h.is_none() && v.is_none() {
        return Err(Error::EmptyInput(format!(
            "no region in variant `{variant}` has an MTF50 ({} measured, {n_absent} without a 0.5 crossing, {n_failed} failed)",
            measurements.len()
        )));
    }
    let mut summary = DatasetSummary::from_means(variant, h, v)?;
    summary.n_h = n_h;
    summary.n_v = n_v;
    summary.n_absent = n_absent;
    summary.n_failed = n_failed;
    Ok(summary)
}

/// Percent change of each column against the baseline; negative is a loss.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PercentDelta {
    pub variant: String,
    pub h_pct: Option<f64>,
    pub v_pct: Option<f64>,
    pub mean_pct: f64,
}

fn pct(base: f64, value: f64) -> Result<f64> {
    if base.is_nan() || base <= 0.0 {
        return Err(Error::Domain(format!("baseline value {base} must be > 0")));
    }
    Ok(100.0 * (value - base) / base)
}

pub fn percent_delta(baseline: &DatasetSummary, variant: &DatasetSummary) -> Result<PercentDelta> {
    let col = |b: Option<f64>, v: Option<f64>| -> Result<Option<f64>> {
        match (b, v) {
            (Some(b), Some(v)) => pct(b, v).map(Some),
            _ => Ok(None),
        }
    };
    Ok(PercentDelta {
        variant: variant.variant.clone(),
        h_pct: col(baseline.hmtf50_mean, variant.hmtf50_mean)?,
        v_pct: col(baseline.vmtf50_mean, variant.vmtf50_mean)?,
        mean_pct: pct(baseline.mtf50_mean, variant.mtf50_mean)?,
    })
}

/// Detection accuracy of one model on one dataset variant, in percent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionRecord {
    pub model: String,
    pub variant: String,
    pub map_50_95: f64,
    pub map_50: f64,
    pub map_75: f64,
    pub map_s: f64,
    pub map_m: f64,
    pub map_l: f64,
}

impl DetectionRecord {
    pub fn validate(&self) -> Result<()> {
        let vals = [
            self.map_50_95,
            self.map_50,
            self.map_75,
            self.map_s,
            self.map_m,
            self.map_l,
        ];
        if vals.iter().any(|v| !(0.0..=100.0).contains(v)) {
            return Err(Error::Domain(format!(
                "{} / {}: mAP values must lie in [0, 100]",
                self.model, self.variant
            )));
        }
        if self.map_50 < self.map_50_95 {
            return Err(Error::Domain(format!(
                "{} / {}: mAP@0.5 ({}) below mAP@0.5:0.95 ({})",
                self.model, self.variant, self.map_50, self.map_50_95
            )));
        }
        Ok(())
    }
}

pub fn load_detections(path: &Path) -> Result<Vec<DetectionRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let records: Vec<DetectionRecord> = serde_json::from_str(&text).map_err(|e| Error::Format {
        what: path.display().to_string(),
        message: e.to_string(),
    })?;
    for r in &records {
        r.validate()?;
    }
    Ok(records)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RobustnessDelta {
    pub model: String,
    /// `100 * (max - min) / max` over the model's mAP@0.5:0.95.
    pub delta_pct: f64,
    pub n_variants: usize,
}

/// Spread of mAP@0.5:0.95 across variants, per model, in first-seen order.
pub fn robustness_deltas(records: &[DetectionRecord]) -> Result<Vec<RobustnessDelta>> {
    let mut order: Vec<&str> = Vec::new();
    let mut by_model: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for r in records {
        if !by_model.contains_key(r.model.as_str()) {
            order.push(&r.model);
        }
        by_model.entry(&r.model).or_default().push(r.map_50_95);
    }
    order
        .into_iter()
        .map(|model| {
            let vals = &by_model[model];
            if vals.len() < 2 {
                return Err(Error::Domain(format!(
                    "model `{model}` has {} variant(s); need at least 2",
                    vals.len()
                )));
            }
            let max = vals.iter().copied().fold(f64::MIN, f64::max);
            let min = vals.iter().copied().fold(f64::MAX, f64::min);
            let delta_pct = if max > 0.0 {
                100.0 * (max - min) / max
            } else {
                0.0
            };
            Ok(RobustnessDelta {
                model: model.to_string(),
                delta_pct,
                n_variants: vals.len(),
            })
        })
        .collect()
}

/// Paths of the files written by [`render_reports`].
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ReportFiles {
    pub table1_csv: PathBuf,
    pub summary_json: PathBuf,
    pub svgs: Vec<PathBuf>,
}

#[derive(Serialize)]
struct SummaryRow<'a> {
    variant: &'a str,
    sigma: Option<f64>,
    kernel_size: Option<usize>,
    hmtf50_mean: Option<f64>,
    h_pct: Option<f64>,
    vmtf50_mean: Option<f64>,
    v_pct: Option<f64>,
    mtf50_mean: f64,
    mean_pct: Option<f64>,
    n_h: usize,
    n_v: usize,
    n_absent: usize,
    n_failed: usize,
    full_precision: FullPrecision,
}

#[derive(Serialize)]
struct FullPrecision {
    hmtf50_mean: Option<f64>,
    vmtf50_mean: Option<f64>,
    mtf50_mean: f64,
    h_pct: Option<f64>,
    v_pct: Option<f64>,
    mean_pct: Option<f64>,
}

#[derive(Serialize)]
struct RobustnessRow<'a> {
    model: &'a str,
    delta_pct: f64,
    n_variants: usize,
    full_precision: f64,
}

#[derive(Serialize)]
struct SummaryDocument<'a> {
    summaries: Vec<SummaryRow<'a>>,
    detections: &'a [DetectionRecord],
    robustness: Vec<RobustnessRow<'a>>,
}

fn baseline_of(summaries: &[DatasetSummary]) -> &DatasetSummary {
    summaries
        .iter()
        .find(|s| s.sigma.is_none())
        .unwrap_or(&summaries[0])
}

fn fmt_opt(v: Option<f64>, decimals: usize) -> String {
    v.map_or_else(String::new, |v| format!("{v:.decimals$}"))
}

fn slug(s: &str) -> String {
    s.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() {
                c.to_ascii_lowercase()
            } else {
                '_'
            }
        })
        .collect()
}

/// Writes `table1.csv`, `summary.json` and, with detection records, one SVG
/// plot per model into `out_dir`.
pub fn render_reports(
    summaries: &[DatasetSummary],
    records: Option<&[DetectionRecord]>,
    out_dir: &Path,
) -> Result<ReportFiles> {
    if summaries.is_empty() {
        return Err(Error::EmptyInput("no dataset summaries to report".into()));
    }
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let baseline = baseline_of(summaries);
    let deltas: Vec<Option<PercentDelta>> = summaries
        .iter()
        .map(|s| {
            if std::ptr::eq(s, baseline) {
                Ok(None)
            } else {
                percent_delta(baseline, s).map(Some)
            }
        })
        .collect::<Result<_>>()?;

    let table1_csv = out_dir.join("table1.csv");
    let mut wtr = csv::Writer::from_writer(Vec::new());
    let write_err = |e: csv::Error| Error::Format {
        what: "table1.csv".into(),
        message: e.to_string(),
    };
    wtr.write_record(TABLE1_COLUMNS).map_err(write_err)?;
    for (s, d) in summaries.iter().zip(&deltas) {
        let (sigma, kernel) = match (s.sigma, s.kernel_size()) {
            (Some(sg), Some(k)) => (format!("{sg}"), format!("({k},{k})")),
            _ => ("baseline".to_string(), "baseline".to_string()),
        };
        let pct_cell = |v: Option<f64>| match d {
            None => "-".to_string(),
            Some(_) => fmt_opt(v, 2),
        };
        wtr.write_record([
            sigma,
            kernel,
            fmt_opt(s.hmtf50_mean, 3),
            pct_cell(d.as_ref().and_then(|d| d.h_pct)),
            fmt_opt(s.vmtf50_mean, 3),
            pct_cell(d.as_ref().and_then(|d| d.v_pct)),
            format!("{:.3}", s.mtf50_mean),
            pct_cell(d.as_ref().map(|d| d.mean_pct)),
        ])
        .map_err(write_err)?;
    }
    let csv_bytes = wtr.into_inner().map_err(|e| Error::Format {
        what: "table1.csv".into(),
        message: e.to_string(),
    })?;
    fs::write(&table1_csv, csv_bytes).map_err(|e| Error::io(&table1_csv, e))?;

    let robustness = match records {
        Some(r) if !r.is_empty() => robustness_deltas(r)?,
        _ => Vec::new(),
    };
    let doc = SummaryDocument {
        summaries: summaries
            .iter()
            .zip(&deltas)
            .map(|(s, d)| SummaryRow {
                variant: &s.variant,
                sigma: s.sigma,
                kernel_size: s.kernel_size(),
                hmtf50_mean: s.hmtf50_mean.map(round_cypx),
                h_pct: d.as_ref().and_then(|d| d.h_pct).map(round_pct),
                vmtf50_mean: s.vmtf50_mean.map(round_cypx),
                v_pct: d.as_ref().and_then(|d| d.v_pct).map(round_pct),
                mtf50_mean: round_cypx(s.mtf50_mean),
                mean_pct: d.as_ref().map(|d| round_pct(d.mean_pct)),
                n_h: s.n_h,
                n_v: s.n_v,
                n_absent: s.n_absent,
                n_failed: s.n_failed,
                full_precision: FullPrecision {
                    hmtf50_mean: s.hmtf50_mean,
                    vmtf50_mean: s.vmtf50_mean,
                    mtf50_mean: s.mtf50_mean,
                    h_pct: d.as_ref().and_then(|d| d.h_pct),
                    v_pct: d.as_ref().and_then(|d| d.v_pct),
                    mean_pct: d.as_ref().map(|d| d.mean_pct),
                },
            })
            .collect(),
        detections: records.unwrap_or(&[]),
        robustness: robustness
            .iter()
            .map(|r| RobustnessRow {
                model: &r.model,
                delta_pct: round_pct(r.delta_pct),
                n_variants: r.n_variants,
                full_precision: r.delta_pct,
            })
            .collect(),
    };
    let summary_json = out_dir.join("summary.json");
    let mut json = serde_json::to_string_pretty(&doc).map_err(|e| Error::Format {
        what: "summary.json".into(),
        message: e.to_string(),
    })?;
    json.push('\n');
    fs::write(&summary_json, json).map_err(|e| Error::io(&summary_json, e))?;

    let mut svgs = Vec::new();
    if let Some(records) = records {
        let mut models: Vec<&str> = Vec::new();
        for r in records {
            if !models.contains(&r.model.as_str()) {
                models.push(&r.model);
            }
        }
        for model in models {
            let points: Vec<PlotPoint> = records
                .iter()
                .filter(|r| r.model == model)
                .filter_map(|r| {
                    summaries
                        .iter()
                        .find(|s| s.variant == r.variant)
                        .map(|s| PlotPoint {
                            variant: r.variant.clone(),
                            mtf50: s.mtf50_mean,
                            map: r.map_50_95,
                        })
                })
                .collect();
            let path = out_dir.join(format!("map_vs_mtf50_{}.svg", slug(model)));
            fs::write(&path, render_svg(model, &points)).map_err(|e| Error::io(&path, e))?;
            svgs.push(path);
        }
    }
    Ok(ReportFiles {
        table1_csv,
        summary_json,
        svgs,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlotPoint {
    pub variant: String,
    /// Mean MTF50, cycles/pixel.
    pub mtf50: f64,
    /// mAP@0.5:0.95, percent.
    pub map: f64,
}

const SVG_W: f64 = 640.0;
const SVG_H: f64 = 480.0;
const MARGIN_L: f64 = 80.0;
const MARGIN_R: f64 = 30.0;
const MARGIN_T: f64 = 50.0;
const MARGIN_B: f64 = 70.0;

/// Self-contained 640x480 scatter/line plot of mAP against mean MTF50,
/// points ordered by ascending MTF50.
pub fn render_svg(model: &str, points: &[PlotPoint]) -> String {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.mtf50.total_cmp(&b.mtf50).then(a.variant.cmp(&b.variant)));

    let x_max = pts.iter().map(|p| p.mtf50).fold(0.0, f64::max).max(1e-3) * 1.1;
    let (mut y_lo, mut y_hi) = pts.iter().fold((f64::MAX, f64::MIN), |(lo, hi), p| {
        (lo.min(p.map), hi.max(p.map))
    });
    if pts.is_empty() {
        (y_lo, y_hi) = (0.0, 100.0);
    }
    let pad = ((y_hi - y_lo) * 0.25).max(0.5);
    let (y_lo, y_hi) = ((y_lo - pad).max(0.0), (y_hi + pad).min(100.0));
    let plot_w = SVG_W - MARGIN_L - MARGIN_R;
    let plot_h = SVG_H - MARGIN_T - MARGIN_B;
    let sx = |x: f64| MARGIN_L + x / x_max * plot_w;
    let sy = |y: f64| MARGIN_T + (1.0 - (y - y_lo) / (y_hi - y_lo)) * plot_h;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="640" height="480" viewBox="0 0 640 480" font-family="sans-serif">"#
    );
    let _ = writeln!(
        s,
        r#"<rect x="0" y="0" width="640" height="480" fill="white"/>"#
    );
    let _ = writeln!(
        s,
        r#"<text x="320" y="28" text-anchor="middle" font-size="16">{}: mAP0.5:0.95 vs mean MTF50</text>"#,
        xml_escape(model)
    );
    // Axes.
    let (x0, y0) = (MARGIN_L, SVG_H - MARGIN_B);
    let _ = writeln!(
        s,
        r#"<line class="axis" x1="{x0}" y1="{y0}" x2="{:.2}" y2="{y0}" stroke="black"/>"#,
        SVG_W - MARGIN_R
    );
    let _ = writeln!(
        s,
        r#"<line class="axis" x1="{x0}" y1="{y0}" x2="{x0}" y2="{MARGIN_T}" stroke="black"/>"#
    );
    for i in 0..=5 {
        let xv = x_max * i as f64 / 5.0;
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-size="11">{xv:.3}</text>"#,
            sx(xv),
            y0 + 18.0
        );
        let yv = y_lo + (y_hi - y_lo) * i as f64 / 5.0;
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end" font-size="11">{yv:.2}</text>"#,
            x0 - 8.0,
            sy(yv) + 4.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-size="13">Mean MTF50 (cy/px)</text>"#,
        MARGIN_L + plot_w / 2.0,
        SVG_H - 20.0
    );
    let _ = writeln!(
        s,
        r#"<text x="20" y="{:.2}" text-anchor="middle" font-size="13" transform="rotate(-90 20 {:.2})">mAP0.5:0.95 (%)</text>"#,
        MARGIN_T + plot_h / 2.0,
        MARGIN_T + plot_h / 2.0
    );
    if pts.len() > 1 {
        let path: Vec<String> = pts
            .iter()
            .map(|p| format!("{:.2},{:.2}", sx(p.mtf50), sy(p.map)))
            .collect();
        let _ = writeln!(
            s,
            r##"<polyline fill="none" stroke="#1f77b4" stroke-width="1.5" points="{}"/>"##,
            path.join(" ")
        );
    }
    for p in &pts {
        let _ = writeln!(
            s,
            r##"<circle class="point" cx="{:.2}" cy="{:.2}" r="4" fill="#1f77b4" data-variant="{}" data-mtf50="{:.3}" data-map="{:.2}"/>"##,
            sx(p.mtf50),
            sy(p.map),
            xml_escape(&p.variant),
            p.mtf50,
            p.map
        );
    }
    s.push_str("</svg>\n");
    s
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sfr::RegionMeasurement;
    use proptest::prelude::*;

    fn meas(source: &str, x: usize, o: Orientation, mtf50: Option<f64>) -> RegionMeasurement {
        RegionMeasurement {
            source: source.into(),
            origin: [x, 0],
            orientation: o,
            angle_deg: 5.0,
            mtf50,
            sfr: Vec::new(),
            status: "ok".into(),
            reason: None,
        }
    }

    #[test]
    fn single_region_lands_in_its_slot() {
        let s = aggregate(
            &[meas("a.png", 0, Orientation::Vertical, Some(0.2))],
            "baseline",
            Weighting::PerRegion,
        )
        .unwrap();
        assert_eq!(s.hmtf50_mean, Some(0.2));
        assert_eq!(s.vmtf50_mean, None);
        assert_eq!(s.mtf50_mean, 0.2);
        assert_eq!((s.n_h, s.n_v), (1, 0));
    }

    #[test]
    fn absent_and_failed_are_counted_not_averaged() {
        let mut failed = meas("b.png", 0, Orientation::Vertical, None);
        failed.status = "EdgeFitError".into();
        let ms = vec![
            meas("a.png", 0, Orientation::Vertical, Some(0.3)),
            meas("a.png", 40, Orientation::Vertical, None),
            failed,
            meas("c.png", 0, Orientation::Horizontal, Some(0.1)),
        ];
        let s = aggregate(&ms, "sigma1", Weighting::PerRegion).unwrap();
        assert_eq!(s.hmtf50_mean, Some(0.3));
        assert_eq!(s.vmtf50_mean, Some(0.1));
        assert!((s.mtf50_mean - 0.2).abs() < 1e-12);
        assert_eq!((s.n_absent, s.n_failed), (1, 1));
        assert_eq!(s.sigma, Some(1.0));
        assert_eq!(s.kernel_size(), Some(7));
    }

    #[test]
    fn empty_input_is_error() {
        let err = aggregate(
            &[meas("a.png", 0, Orientation::Vertical, None)],
            "x",
            Weighting::PerRegion,
        )
        .unwrap_err();
        assert_eq!(err.kind(), "EmptyInputError");
        assert!(aggregate(&[], "x", Weighting::PerRegion).is_err());
    }

    #[test]
    fn per_image_weighting() {
        let ms = vec![
            meas("a.png", 0, Orientation::Vertical, Some(0.1)),
            meas("a.png", 40, Orientation::Vertical, Some(0.1)),
            meas("a.png", 80, Orientation::Vertical, Some(0.1)),
            meas("b.png", 0, Orientation::Vertical, Some(0.5)),
        ];
        let region = aggregate(&ms, "v", Weighting::PerRegion).unwrap();
        let image = aggregate(&ms, "v", Weighting::PerImage).unwrap();
        assert!((region.hmtf50_mean.unwrap() - 0.2).abs() < 1e-12);
        assert!((image.hmtf50_mean.unwrap() - 0.3).abs() < 1e-12);
    }

    #[test]
    fn display_rounding_matches_csv_formatting() {
        let m = (0.119 + 0.122) / 2.0;
        assert_eq!(format!("{m:.3}"), "0.120");
        assert_eq!(round_cypx(m), 0.120);
        assert_eq!(round_cypx((0.160 + 0.159) / 2.0), 0.160);
        assert_eq!(round_pct(-31.623931), -31.62);
    }

    #[test]
    fn table1_baseline_mean() {
        let s = DatasetSummary::from_means("baseline", Some(0.234), Some(0.256)).unwrap();
        assert_eq!(s.mtf50_mean, 0.245);
        assert_eq!(s.sigma, None);
    }

    #[test]
    fn table1_percent_columns() {
        let base = DatasetSummary::from_means("baseline", Some(0.234), Some(0.256)).unwrap();
        let s1 = DatasetSummary::from_means("sigma1", Some(0.160), Some(0.159)).unwrap();
        let s3 = DatasetSummary::from_means("sigma3", Some(0.119), Some(0.119)).unwrap();
        assert!((percent_delta(&base, &s1).unwrap().h_pct.unwrap() + 31.62).abs() < 0.01);
        assert!((percent_delta(&base, &s3).unwrap().v_pct.unwrap() + 53.52).abs() < 0.01);
        let same = percent_delta(&base, &base).unwrap();
        assert_eq!(
            (same.h_pct, same.v_pct, same.mean_pct),
            (Some(0.0), Some(0.0), 0.0)
        );
    }

    #[test]
    fn zero_baseline_rejected() {
        let mut base = DatasetSummary::from_means("baseline", Some(0.2), None).unwrap();
        base.mtf50_mean = 0.0;
        base.hmtf50_mean = Some(0.0);
        let v = DatasetSummary::from_means("sigma1", Some(0.1), None).unwrap();
        assert!(matches!(percent_delta(&base, &v), Err(Error::Domain(_))));
    }

    fn rec(model: &str, variant: &str, map: f64) -> DetectionRecord {
        DetectionRecord {
            model: model.into(),
            variant: variant.into(),
            map_50_95: map,
            map_50: 90.0,
            map_75: 70.0,
            map_s: 40.0,
            map_m: 70.0,
            map_l: 90.0,
        }
    }

    #[test]
    fn robustness_examples() {
        let recs: Vec<_> = [69.45, 69.05, 69.06, 69.17]
            .iter()
            .zip(["baseline", "sigma1", "sigma2", "sigma3"])
            .map(|(&m, v)| rec("Faster RCNN", v, m))
            .collect();
        let d = robustness_deltas(&recs).unwrap();
        assert!((d[0].delta_pct - 0.576).abs() < 1e-3);
        let flat = vec![rec("m", "a", 50.0), rec("m", "b", 50.0)];
        assert_eq!(robustness_deltas(&flat).unwrap()[0].delta_pct, 0.0);
        assert!(robustness_deltas(&[rec("m", "a", 50.0)]).is_err());
    }

    #[test]
    fn detection_validation() {
        assert!(rec("m", "a", 50.0).validate().is_ok());
        assert!(rec("m", "a", 95.0).validate().is_err());
        let mut bad = rec("m", "a", 50.0);
        bad.map_s = 101.0;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn summaries_only_writes_csv_and_json() {
        let dir = tempfile::tempdir().unwrap();
        let sums = vec![
            DatasetSummary::from_means("baseline", Some(0.234), Some(0.256)).unwrap(),
            DatasetSummary::from_means("sigma1", Some(0.160), Some(0.159)).unwrap(),
        ];
        let files = render_reports(&sums, None, dir.path()).unwrap();
        assert!(files.svgs.is_empty());
        let csv = fs::read_to_string(&files.table1_csv).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "sigma,kernel,HMTF50,H%,VMTF50,V%,MTF50mean,mean%");
        assert_eq!(lines[1], "baseline,baseline,0.234,-,0.256,-,0.245,-");
        assert_eq!(
            lines[2],
            "1,\"(7,7)\",0.160,-31.62,0.159,-37.89,0.160,-34.90"
        );
        let json: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(&files.summary_json).unwrap()).unwrap();
        assert_eq!(json["summaries"][1]["h_pct"], -31.62);
        assert!(
            json["summaries"][1]["full_precision"]["h_pct"]
                .as_f64()
                .unwrap()
                < -31.623
        );
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 2);
    }

    #[test]
    fn svg_is_self_contained_with_sorted_points() {
        let pts = vec![
            PlotPoint {
                variant: "b".into(),
                mtf50: 0.245,
                map: 61.0,
            },
            PlotPoint {
                variant: "a".into(),
                mtf50: 0.119,
                map: 60.0,
            },
        ];
        let svg = render_svg("M&M", &pts);
        assert!(svg.starts_with("<svg"));
        assert!(svg.contains(r#"viewBox="0 0 640 480""#));
        assert!(svg.contains("M&amp;M"));
        assert!(!svg.contains("href"));
        let first = svg.find(r#"data-mtf50="0.119""#).unwrap();
        let second = svg.find(r#"data-mtf50="0.245""#).unwrap();
        assert!(first < second);
    }

    proptest! {
        #[test]
        fn aggregate_is_permutation_invariant(
            vals in proptest::collection::vec((0.01f64..1.0, any::<bool>()), 1..30),
            seed in any::<u64>(),
        ) {
            let ms: Vec<_> = vals
                .iter()
                .enumerate()
                .map(|(i, &(v, vert))| {
                    let o = if vert { Orientation::Vertical } else { Orientation::Horizontal };
                    meas(&format!("img{}.png", i % 4), i, o, Some(v))
                })
                .collect();
            let mut shuffled = ms.clone();
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            prop_assert_eq!(
                aggregate(&ms, "v", Weighting::PerRegion).unwrap(),
                aggregate(&shuffled, "v", Weighting::PerRegion).unwrap()
            );
        }

        #[test]
        fn robustness_delta_is_scale_free(
            maps in proptest::collection::vec(1.0f64..50.0, 2..6),
            k in 0.5f64..2.0,
        ) {
            let a: Vec<_> = maps.iter().enumerate().map(|(i, &m)| rec("m", &i.to_string(), m)).collect();
            let b: Vec<_> = maps.iter().enumerate().map(|(i, &m)| rec("m", &i.to_string(), m * k)).collect();
            let da = robustness_deltas(&a).unwrap()[0].delta_pct;
            let db = robustness_deltas(&b).unwrap()[0].delta_pct;
            prop_assert!((da - db).abs() < 1e-9);
        }

        #[test]
        fn percent_delta_of_self_is_zero(h in 0.01f64..1.0, v in 0.01f64..1.0) {
            let s = DatasetSummary::from_means("x", Some(h), Some(v)).unwrap();
            let d = percent_delta(&s, &s).unwrap();
            prop_assert_eq!((d.h_pct, d.v_pct, d.mean_pct), (Some(0.0), Some(0.0), 0.0));
        }
    }
}
