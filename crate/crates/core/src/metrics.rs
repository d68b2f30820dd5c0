//! Plane-detection error measures and report aggregation.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::transform::{geodesic_angle, RigidTransform, Vec3};
use crate::volume::{extract_plane, PlaneImage, Volume, VolumeError};

/// PSNR reported for (near-)identical images.
pub const PSNR_CAP_DB: f64 = 100.0;
const MSE_FLOOR: f64 = 1e-10;

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_C1: f64 = 0.01 * 0.01;
const SSIM_C2: f64 = 0.03 * 0.03;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("image sizes differ: {0} vs {1}")]
    SizeMismatch(usize, usize),
    #[error("cannot aggregate an empty result list")]
    Empty,
    #[error(transparent)]
    Volume(#[from] VolumeError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlaneEvalResult {
    /// Centre distance, voxels.
    pub dx: f64,
    /// Geodesic rotation angle, degrees.
    pub dtheta: f64,
    /// Angle between plane normals, degrees.
    pub normal_angle: f64,
    pub psnr: f64,
    pub ssim: f64,
}

fn angle_between(a: Vec3, b: Vec3) -> f64 {
    a.cross(b).norm().atan2(a.dot(b)).to_degrees()
}

pub fn evaluate_plane(
    pred: &RigidTransform,
    gt: &RigidTransform,
    volume: &Volume,
    s: usize,
) -> Result<PlaneEvalResult, MetricsError> {
    let z = Vec3::new(0.0, 0.0, 1.0);
    let a = extract_plane(volume, pred, s)?;
    let b = extract_plane(volume, gt, s)?;
    let (psnr, ssim) = compare_images(&a, &b)?;
    Ok(PlaneEvalResult {
        dx: (pred.translation - gt.translation).norm(),
        dtheta: geodesic_angle(&pred.rotation, &gt.rotation),
        normal_angle: angle_between(pred.rotation.rotate(z), gt.rotation.rotate(z)),
        psnr,
        ssim,
    })
}

/// Min-max normalizes both images with one shared range onto `[0, 1]`.
/// Constant pairs map to all zeros.
pub fn normalize_jointly(a: &PlaneImage, b: &PlaneImage) -> Result<(PlaneImage, PlaneImage), MetricsError> {
    check_sizes(a, b)?;
    let all = a.pixels().iter().chain(b.pixels());
    let lo = all.clone().copied().fold(f64::INFINITY, f64::min);
    let hi = all.copied().fold(f64::NEG_INFINITY, f64::max);
    let range = hi - lo;
    let f = |im: &PlaneImage| {
        let px = im.pixels().iter().map(|&v| if range > 0.0 { (v - lo) / range } else { 0.0 }).collect();
        PlaneImage::new(im.size(), px).expect("same size as input")
    };
    Ok((f(a), f(b)))
}

/// PSNR and SSIM after joint normalization.
pub fn compare_images(a: &PlaneImage, b: &PlaneImage) -> Result<(f64, f64), MetricsError> {
    let (a, b) = normalize_jointly(a, b)?;
    Ok((psnr(&a, &b)?, ssim(&a, &b)?))
}

fn check_sizes(a: &PlaneImage, b: &PlaneImage) -> Result<(), MetricsError> {
    if a.size() != b.size() {
        return Err(MetricsError::SizeMismatch(a.size(), b.size()));
    }
    Ok(())
}

/// `10·log10(1/MSE)` for images with unit dynamic range, capped at 100 dB.
pub fn psnr(a: &PlaneImage, b: &PlaneImage) -> Result<f64, MetricsError> {
    check_sizes(a, b)?;
    let n = a.pixels().len() as f64;
    let mse = a.pixels().iter().zip(b.pixels()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / n;
    Ok(if mse < MSE_FLOOR { PSNR_CAP_DB } else { (10.0 * (1.0 / mse).log10()).min(PSNR_CAP_DB) })
}

fn gaussian_window(size: usize) -> Vec<f64> {
    let c = (size as f64 - 1.0) / 2.0;
    let mut w = Vec::with_capacity(size * size);
    for i in 0..size {
        for j in 0..size {
            let r2 = (i as f64 - c).powi(2) + (j as f64 - c).powi(2);
            w.push((-r2 / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp());
        }
    }
    let sum: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= sum);
    w
}

/// Mean structural similarity over every position where an 11×11 Gaussian
/// window (σ = 1.5) fits; smaller images use the largest odd window that fits.
/// Assumes unit dynamic range.
pub fn ssim(a: &PlaneImage, b: &PlaneImage) -> Result<f64, MetricsError> {
    check_sizes(a, b)?;
    let n = a.size();
    let win = if n >= SSIM_WINDOW { SSIM_WINDOW } else if n % 2 == 1 { n } else { n - 1 };
    let w = gaussian_window(win);
    let (pa, pb) = (a.pixels(), b.pixels());
    let positions = n - win + 1;
    let mut total = 0.0;
    for r in 0..positions {
        for c in 0..positions {
            let (mut ma, mut mb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for i in 0..win {
                for j in 0..win {
                    let k = w[i * win + j];
                    let x = pa[(r + i) * n + c + j];
                    let y = pb[(r + i) * n + c + j];
                    ma += k * x;
                    mb += k * y;
                    saa += k * x * x;
                    sbb += k * y * y;
                    sab += k * x * y;
                }
            }
            let va = saa - ma * ma;
            let vb = sbb - mb * mb;
            let cov = sab - ma * mb;
            total += ((2.0 * ma * mb + SSIM_C1) * (2.0 * cov + SSIM_C2))
                / ((ma * ma + mb * mb + SSIM_C1) * (va + vb + SSIM_C2));
        }
    }
    Ok(total / (positions * positions) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
}

impl MeanStd {
    /// Order-independent: values are summed in sorted order.
    pub fn of(values: &[f64]) -> Result<Self, MetricsError> {
        if values.is_empty() {
            return Err(MetricsError::Empty);
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let mut dev: Vec<f64> = v.iter().map(|x| (x - mean) * (x - mean)).collect();
        dev.sort_by(f64::total_cmp);
        Ok(Self { mean, std: (dev.iter().sum::<f64>() / n).sqrt() })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub n: usize,
    pub dx: MeanStd,
    pub dtheta: MeanStd,
    pub psnr: MeanStd,
    pub ssim: MeanStd,
}

pub fn aggregate(results: &[PlaneEvalResult]) -> Result<Aggregate, MetricsError> {
    let col = |f: fn(&PlaneEvalResult) -> f64| MeanStd::of(&results.iter().map(f).collect::<Vec<_>>());
    Ok(Aggregate {
        n: results.len(),
        dx: col(|r| r.dx)?,
        dtheta: col(|r| r.dtheta)?,
        psnr: col(|r| r.psnr)?,
        ssim: col(|r| r.ssim)?,
    })
}

/// One line of a comparison report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub model_id: String,
    pub plane_class: String,
    pub n: usize,
    pub dx_mean: f64,
    pub dx_std: f64,
    pub dtheta_mean: f64,
    pub dtheta_std: f64,
    pub psnr_mean: f64,
    pub psnr_std: f64,
    pub ssim_mean: f64,
    pub ssim_std: f64,
}

pub const REPORT_COLUMNS: [&str; 11] = [
    "model_id",
    "plane_class",
    "n",
    "dx_mean",
    "dx_std",
    "dtheta_mean",
    "dtheta_std",
    "psnr_mean",
    "psnr_std",
    "ssim_mean",
    "ssim_std",
];

impl ReportRow {
    pub fn new(model_id: impl Into<String>, plane_class: impl Into<String>, a: &Aggregate) -> Self {
        Self {
            model_id: model_id.into(),
            plane_class: plane_class.into(),
            n: a.n,
            dx_mean: a.dx.mean,
            dx_std: a.dx.std,
            dtheta_mean: a.dtheta.mean,
            dtheta_std: a.dtheta.std,
            psnr_mean: a.psnr.mean,
            psnr_std: a.psnr.std,
            ssim_mean: a.ssim.mean,
            ssim_std: a.ssim.std,
        }
    }
}

pub fn write_report_csv<W: Write>(rows: &[ReportRow], w: W) -> io::Result<()> {
    let mut wr = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    wr.write_record(REPORT_COLUMNS)?;
    for r in rows {
        wr.serialize(r)?;
    }
    wr.flush()
}

pub fn read_report_csv<R: io::Read>(r: R) -> Result<Vec<ReportRow>, csv::Error> {
    csv::Reader::from_reader(r).deserialize().collect()
}
