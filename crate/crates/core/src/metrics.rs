//! Image-quality and segmentation metrics.
//!
//! All ratios follow a `0 / 0 -> 0` convention so that empty predictions and
//! empty ground truth are scored rather than rejected.

use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::image::ImageBuffer;

/// Side of the square SSIM window.
pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

/// PSNR and SSIM of one image pair. A PSNR of `f64::INFINITY` means the
/// images are identical; it serializes as the string `"inf"`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    #[serde(serialize_with = "ser_db", deserialize_with = "de_db")]
    pub psnr_db: f64,
    pub ssim: f64,
}

pub(crate) fn ser_db<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_infinite() && *v > 0.0 {
        s.serialize_str("inf")
    } else {
        s.serialize_f64(*v)
    }
}

pub(crate) fn de_db<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Db {
        Num(f64),
        Text(String),
    }
    match Db::deserialize(d)? {
        Db::Num(v) => Ok(v),
        Db::Text(t) if t == "inf" => Ok(f64::INFINITY),
        Db::Text(t) => Err(serde::de::Error::custom(format!("bad PSNR value {t:?}"))),
    }
}

/// Formats a PSNR for tables.
pub fn format_db(v: f64) -> String {
    if v.is_infinite() {
        "inf".to_string()
    } else {
        format!("{v:.4}")
    }
}

fn check_shape(a: &ImageBuffer, b: &ImageBuffer) -> Result<()> {
    if !a.same_shape(b) {
        return Err(Error::Dimensions(format!(
            "{}x{}x{} vs {}x{}x{}",
            a.width(),
            a.height(),
            a.channels(),
            b.width(),
            b.height(),
            b.channels()
        )));
    }
    Ok(())
}

pub fn mse(a: &ImageBuffer, b: &ImageBuffer) -> Result<f64> {
    check_shape(a, b)?;
    let sum: f64 = a
        .as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum();
    Ok(sum / a.as_slice().len() as f64)
}

/// `10 log10(peak^2 / MSE)` over all samples; infinite for identical images.
pub fn psnr(a: &ImageBuffer, b: &ImageBuffer, peak: f64) -> Result<f64> {
    if !(peak > 0.0) {
        return Err(Error::param("peak", "must be positive"));
    }
    let m = mse(a, b)?;
    if m == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak * peak / m).log10())
}

/// Normalized 11-tap Gaussian, sigma 1.5.
pub fn ssim_window() -> [f64; SSIM_WINDOW] {
    let c = (SSIM_WINDOW / 2) as f64;
    let mut w = [0.0; SSIM_WINDOW];
    for (i, t) in w.iter_mut().enumerate() {
        let d = i as f64 - c;
        *t = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|t| *t /= total);
    w
}

/// Mean structural similarity over every full 11x11 window (no padding).
/// Three-channel images are compared on Rec. 601 luma; intensities are
/// taken to span `[0, 1]`.
pub fn ssim(a: &ImageBuffer, b: &ImageBuffer) -> Result<f64> {
    check_shape(a, b)?;
    if a.width() < SSIM_WINDOW || a.height() < SSIM_WINDOW {
        return Err(Error::param(
            "dims",
            format!("{}x{} is smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} SSIM window", a.width(), a.height()),
        ));
    }
    Ok(ssim_plane(&a.luma(), &b.luma(), a.width(), a.height()))
}

/// Windowed SSIM over two luma planes, via separable filtering of the five
/// moment images.
pub fn ssim_plane(x: &[f64], y: &[f64], width: usize, height: usize) -> f64 {
    let c1 = (SSIM_K1 * 1.0f64).powi(2);
    let c2 = (SSIM_K2 * 1.0f64).powi(2);
    let win = ssim_window();
    let ow = width - SSIM_WINDOW + 1;
    let oh = height - SSIM_WINDOW + 1;

    // Horizontal pass: five moments per (row, output column).
    let mut horiz = vec![[0.0f64; 5]; height * ow];
    for r in 0..height {
        let xr = &x[r * width..(r + 1) * width];
        let yr = &y[r * width..(r + 1) * width];
        for c in 0..ow {
            let mut m = [0.0; 5];
            for (k, &t) in win.iter().enumerate() {
                let (p, q) = (xr[c + k], yr[c + k]);
                m[0] += t * p;
                m[1] += t * q;
                m[2] += t * p * p;
                m[3] += t * q * q;
                m[4] += t * p * q;
            }
            horiz[r * ow + c] = m;
        }
    }

    let mut total = 0.0;
    for r in 0..oh {
        for c in 0..ow {
            let mut m = [0.0; 5];
            for (k, &t) in win.iter().enumerate() {
                let h = &horiz[(r + k) * ow + c];
                for j in 0..5 {
                    m[j] += t * h[j];
                }
            }
            let [mx, my, exx, eyy, exy] = m;
            let vx = exx - mx * mx;
            let vy = eyy - my * my;
            let cov = exy - mx * my;
            total += ((2.0 * mx * my + c1) * (2.0 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
        }
    }
    total / (ow * oh) as f64
}

pub fn report(a: &ImageBuffer, b: &ImageBuffer) -> Result<MetricsReport> {
    Ok(MetricsReport { psnr_db: psnr(a, b, 1.0)?, ssim: ssim(a, b)? })
}

/// Row-major boolean mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    pub width: usize,
    pub height: usize,
    pub data: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize, data: Vec<bool>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::Dimensions(format!("{} values for a {width}x{height} mask", data.len())));
        }
        Ok(BinaryMask { width, height, data })
    }

    /// Pixels at or above one half (on the first channel) are positive.
    pub fn from_image(img: &ImageBuffer) -> Self {
        let data = img.as_slice().chunks_exact(img.channels()).map(|p| p[0] >= 0.5).collect();
        BinaryMask { width: img.width(), height: img.height(), data }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(Self::from_image(&ImageBuffer::load(path)?))
    }
}

/// Row-major class labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u32>,
}

impl LabelMap {
    pub fn new(width: usize, height: usize, data: Vec<u32>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::Dimensions(format!("{} labels for a {width}x{height} map", data.len())));
        }
        Ok(LabelMap { width, height, data })
    }

    /// Reads an 8-bit single-channel PNG whose byte values are class ids.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let img = image::open(path).map_err(|source| Error::Image { path: path.into(), source })?;
        if img.color() != image::ColorType::L8 {
            return Err(Error::format(path, format!("label maps must be 8-bit gray, found {:?}", img.color())));
        }
        let img = img.into_luma8();
        let (w, h) = (img.width() as usize, img.height() as usize);
        Ok(LabelMap { width: w, height: h, data: img.into_raw().into_iter().map(u32::from).collect() })
    }
}

/// Confusion counts and derived ratios of a binary segmentation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegStats {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub iou: f64,
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

impl SegStats {
    pub fn from_counts(tp: u64, fp: u64, fn_: u64, tn: u64) -> Self {
        let (t, p, n) = (tp as f64, fp as f64, fn_ as f64);
        let precision = ratio(t, t + p);
        let recall = ratio(t, t + n);
        // 2PR / (P + R) simplifies to 2tp / (2tp + fp + fn), which keeps the
        // F1 = 2 IOU / (1 + IOU) identity exact in floating point.
        let f1 = ratio(2.0 * t, 2.0 * t + p + n);
        let iou = ratio(t, t + p + n);
        SegStats { tp, fp, fn_, tn, precision, recall, f1, iou }
    }
}

pub fn binary_seg_stats(pred: &BinaryMask, gt: &BinaryMask) -> Result<SegStats> {
    if (pred.width, pred.height) != (gt.width, gt.height) {
        return Err(Error::Dimensions(format!(
            "prediction {}x{} vs ground truth {}x{}",
            pred.width, pred.height, gt.width, gt.height
        )));
    }
    let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
    for (&p, &g) in pred.data.iter().zip(&gt.data) {
        match (p, g) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => tn += 1,
        }
    }
    Ok(SegStats::from_counts(tp, fp, fn_, tn))
}

/// `n x n` confusion matrix, `m[gt][pred]`. Pixels whose ground truth is
/// `ignore_label` are skipped. A predicted `ignore_label` on a labelled pixel
/// counts only as a miss for the true class.
pub fn confusion_matrix(pred: &LabelMap, gt: &LabelMap, n_classes: usize, ignore_label: Option<u32>) -> Result<Vec<Vec<u64>>> {
    if (pred.width, pred.height) != (gt.width, gt.height) {
        return Err(Error::Dimensions(format!(
            "prediction {}x{} vs ground truth {}x{}",
            pred.width, pred.height, gt.width, gt.height
        )));
    }
    let mut m = vec![vec![0u64; n_classes + 1]; n_classes];
    for (&p, &g) in pred.data.iter().zip(&gt.data) {
        for l in [p, g] {
            if (l as usize) >= n_classes && Some(l) != ignore_label {
                return Err(Error::param("labels", format!("label {l} outside 0..{n_classes}")));
            }
        }
        if Some(g) == ignore_label {
            continue;
        }
        let col = if Some(p) == ignore_label { n_classes } else { p as usize };
        m[g as usize][col] += 1;
    }
    Ok(m)
}

/// Per-class IOU for every class present in the ground truth.
pub fn per_class_iou(pred: &LabelMap, gt: &LabelMap, n_classes: usize, ignore_label: Option<u32>) -> Result<Vec<(u32, f64)>> {
    let m = confusion_matrix(pred, gt, n_classes, ignore_label)?;
    let mut out = Vec::new();
    for c in 0..n_classes {
        let gt_total: u64 = m[c].iter().sum();
        if gt_total == 0 {
            continue;
        }
        let tp = m[c][c];
        let predicted: u64 = m.iter().map(|row| row[c]).sum();
        let union = gt_total + predicted - tp;
        out.push((c as u32, ratio(tp as f64, union as f64)));
    }
    Ok(out)
}

/// Mean IOU over the classes present in the ground truth; 0 if none are.
pub fn multiclass_miou(pred: &LabelMap, gt: &LabelMap, n_classes: usize, ignore_label: Option<u32>) -> Result<f64> {
    let ious = per_class_iou(pred, gt, n_classes, ignore_label)?;
    Ok(ratio(ious.iter().map(|(_, v)| v).sum(), ious.len() as f64))
}
