//! The canonical proto-droplet lookup texture.
//!
//! A single droplet is modelled as a spherical cap resting on the pane: a
//! circular footprint of radius `a` with apex height `h0 = cap_ratio * a`.
//! The sphere radius follows from the chord relation
//! `R_s = (a^2 + h0^2) / (2 h0)` and the height field is
//!
//! ```text
//! h(rho) = sqrt(R_s^2 - rho^2) - (R_s - h0)
//! ```
//!
//! The surface normal `normalize(-dh/dx, -dh/dy, 1)` has slopes
//! `n_x / n_z = x / sqrt(R_s^2 - rho^2)` (same for y), which scaled by the
//! refraction gain become the red and green offsets. Blue carries the
//! thickness `h / h_max`, alpha the footprint coverage.
//!
//! Textures are stored as 16-bit RGBA PNGs. Offsets use a midpoint-as-zero
//! encoding (`32768` is no displacement) scaled by the largest absolute
//! offset, which is recorded with the generation parameters in a JSON
//! sidecar next to the image.

use std::path::{Path, PathBuf};

use image::{ImageBuffer as RawImage, Rgba, RgbaImage};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const SIDECAR_FORMAT: &str = "droplens-protodrop";
const SIDECAR_VERSION: u32 = 1;
const OFFSET_ZERO: f64 = 32768.0;
const OFFSET_SPAN: f64 = 32767.0;
const UNIT_SPAN: f64 = 65535.0;

/// Generation parameters for a proto-droplet.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProtoParams {
    /// Footprint radius in texture pixels.
    pub radius_px: f64,
    /// Apex height over footprint radius; 1 is a hemisphere.
    pub cap_ratio: f64,
    /// Offset in pixels per unit of normal slope.
    pub refraction_gain: f64,
    /// Side length of the square texture.
    pub resolution: usize,
}

impl Default for ProtoParams {
    fn default() -> Self {
        ProtoParams { radius_px: 48.0, cap_ratio: 0.6, refraction_gain: -120.0, resolution: 97 }
    }
}

impl ProtoParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.radius_px > 0.0) || !self.radius_px.is_finite() {
            return Err(Error::param("radius_px", format!("must be positive, got {}", self.radius_px)));
        }
        if !(self.cap_ratio > 0.0 && self.cap_ratio <= 1.0) {
            return Err(Error::param("cap_ratio", format!("must lie in (0, 1], got {}", self.cap_ratio)));
        }
        if !self.refraction_gain.is_finite() {
            return Err(Error::param("refraction_gain", "must be finite"));
        }
        if (self.resolution as f64) < 2.0 * self.radius_px {
            return Err(Error::param(
                "resolution",
                format!("{} px cannot hold a droplet of radius {} px", self.resolution, self.radius_px),
            ));
        }
        Ok(())
    }

    /// Radius of the sphere the cap is cut from.
    pub fn sphere_radius(&self) -> f64 {
        let h0 = self.apex_height();
        (self.radius_px * self.radius_px + h0 * h0) / (2.0 * h0)
    }

    pub fn apex_height(&self) -> f64 {
        self.cap_ratio * self.radius_px
    }
}

/// Four-channel droplet texture, row-major, `width * height` samples per
/// channel.
#[derive(Debug, Clone, PartialEq)]
pub struct ProtoDropTexture {
    width: usize,
    height: usize,
    r: Vec<f64>,
    g: Vec<f64>,
    b: Vec<f64>,
    alpha: Vec<f64>,
    params: ProtoParams,
}

/// Builds the spherical-cap texture described in the module docs.
pub fn generate_protodrop(params: ProtoParams) -> Result<ProtoDropTexture> {
    params.validate()?;
    let n = params.resolution;
    let center = (n as f64 - 1.0) / 2.0;
    let a = params.radius_px;
    let rs = params.sphere_radius();
    let lift = rs - params.apex_height();

    let mut tex = ProtoDropTexture::empty(n, n, params);
    let mut h_max = 0.0f64;
    for y in 0..n {
        let dy = y as f64 - center;
        for x in 0..n {
            let dx = x as f64 - center;
            let rho2 = dx * dx + dy * dy;
            if rho2 >= a * a {
                continue;
            }
            let s = (rs * rs - rho2).sqrt();
            let i = y * n + x;
            tex.r[i] = params.refraction_gain * dx / s;
            tex.g[i] = params.refraction_gain * dy / s;
            tex.b[i] = s - lift;
            tex.alpha[i] = 1.0;
            h_max = h_max.max(s - lift);
        }
    }
    if h_max > 0.0 {
        tex.b.iter_mut().for_each(|v| *v /= h_max);
    }
    Ok(tex)
}

#[derive(Debug, Serialize, Deserialize)]
struct Sidecar {
    format: String,
    version: u32,
    radius_px: f64,
    cap_ratio: f64,
    refraction_gain: f64,
    resolution: usize,
    offset_scale: f64,
}

impl ProtoDropTexture {
    fn empty(width: usize, height: usize, params: ProtoParams) -> Self {
        let n = width * height;
        ProtoDropTexture {
            width,
            height,
            r: vec![0.0; n],
            g: vec![0.0; n],
            b: vec![0.0; n],
            alpha: vec![0.0; n],
            params,
        }
    }

    /// Assembles a texture from raw channels. Used by tests and tools that
    /// produce custom droplet profiles.
    pub fn from_channels(
        width: usize,
        height: usize,
        channels: [Vec<f64>; 4],
        params: ProtoParams,
    ) -> Result<Self> {
        let n = width * height;
        if n == 0 || channels.iter().any(|c| c.len() != n) {
            return Err(Error::Dimensions(format!("channels do not match a {width}x{height} texture")));
        }
        let [r, g, b, alpha] = channels;
        Ok(ProtoDropTexture { width, height, r, g, b, alpha, params })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn params(&self) -> &ProtoParams {
        &self.params
    }

    pub fn r(&self) -> &[f64] {
        &self.r
    }

    pub fn g(&self) -> &[f64] {
        &self.g
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    /// `(r, g, b, alpha)` at a texel.
    pub fn texel(&self, x: usize, y: usize) -> [f64; 4] {
        let i = y * self.width + x;
        [self.r[i], self.g[i], self.b[i], self.alpha[i]]
    }

    /// Texel-space position of the droplet apex.
    pub fn center(&self) -> (f64, f64) {
        ((self.width as f64 - 1.0) / 2.0, (self.height as f64 - 1.0) / 2.0)
    }

    /// Bilinear lookup of all four channels. Outside the texture everything
    /// is zero, i.e. no droplet.
    #[inline]
    pub fn sample(&self, tx: f64, ty: f64) -> [f64; 4] {
        let (w, h) = (self.width as isize, self.height as isize);
        if !(tx > -1.0 && ty > -1.0 && tx < w as f64 && ty < h as f64) {
            return [0.0; 4];
        }
        let fx0 = tx.floor();
        let fy0 = ty.floor();
        let (x0, y0) = (fx0 as isize, fy0 as isize);
        let fx = tx - fx0;
        let fy = ty - fy0;
        let mut out = [0.0; 4];
        let corners = [(x0, y0, (1.0 - fx) * (1.0 - fy)), (x0 + 1, y0, fx * (1.0 - fy)), (x0, y0 + 1, (1.0 - fx) * fy), (x0 + 1, y0 + 1, fx * fy)];
        for (x, y, wgt) in corners {
            if wgt == 0.0 || x < 0 || y < 0 || x >= w || y >= h {
                continue;
            }
            let i = y as usize * self.width + x as usize;
            out[0] += wgt * self.r[i];
            out[1] += wgt * self.g[i];
            out[2] += wgt * self.b[i];
            out[3] += wgt * self.alpha[i];
        }
        out
    }

    /// Largest absolute red/green offset; the 16-bit offset encoding is
    /// normalized by it. An all-zero texture uses 1.
    pub fn offset_scale(&self) -> f64 {
        let m = self.r.iter().chain(&self.g).fold(0.0f64, |m, v| m.max(v.abs()));
        if m > 0.0 {
            m
        } else {
            1.0
        }
    }

    /// The texture as it survives a save/load cycle.
    pub fn quantized(&self) -> Self {
        let scale = self.offset_scale();
        let mut out = self.clone();
        for i in 0..self.r.len() {
            out.r[i] = decode_offset(encode_offset(self.r[i], scale), scale);
            out.g[i] = decode_offset(encode_offset(self.g[i], scale), scale);
            out.b[i] = decode_unit(encode_unit(self.b[i]));
            out.alpha[i] = decode_unit(encode_unit(self.alpha[i]));
        }
        out
    }

    /// Path of the JSON sidecar that accompanies a texture image.
    pub fn sidecar_path(path: &Path) -> PathBuf {
        path.with_extension("json")
    }

    /// Writes the 16-bit RGBA PNG and its sidecar.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let scale = self.offset_scale();
        let mut raw = Vec::with_capacity(self.r.len() * 4);
        for i in 0..self.r.len() {
            raw.extend_from_slice(&[
                encode_offset(self.r[i], scale),
                encode_offset(self.g[i], scale),
                encode_unit(self.b[i]),
                encode_unit(self.alpha[i]),
            ]);
        }
        let img: RawImage<Rgba<u16>, Vec<u16>> =
            RawImage::from_raw(self.width as u32, self.height as u32, raw).expect("sized buffer");
        img.save_with_format(path, image::ImageFormat::Png)
            .map_err(|source| Error::Image { path: path.into(), source })?;

        let sidecar = Sidecar {
            format: SIDECAR_FORMAT.into(),
            version: SIDECAR_VERSION,
            radius_px: self.params.radius_px,
            cap_ratio: self.params.cap_ratio,
            refraction_gain: self.params.refraction_gain,
            resolution: self.params.resolution,
            offset_scale: scale,
        };
        let meta_path = Self::sidecar_path(path);
        let text = serde_json::to_string_pretty(&sidecar)
            .map_err(|source| Error::Json { path: meta_path.clone(), source })?;
        std::fs::write(&meta_path, text).map_err(|e| Error::io(&meta_path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let meta_path = Self::sidecar_path(path);
        let text = std::fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
        let meta: Sidecar =
            serde_json::from_str(&text).map_err(|source| Error::Json { path: meta_path.clone(), source })?;
        if meta.format != SIDECAR_FORMAT || meta.version != SIDECAR_VERSION {
            return Err(Error::format(
                &meta_path,
                format!("unsupported sidecar {} v{}", meta.format, meta.version),
            ));
        }
        if !(meta.offset_scale > 0.0) {
            return Err(Error::format(&meta_path, "offset_scale must be positive"));
        }

        let img = image::open(path).map_err(|source| Error::Image { path: path.into(), source })?;
        let color = img.color();
        if color.channel_count() != 4 {
            return Err(Error::format(
                path,
                format!("expected 4 channels, found {}", color.channel_count()),
            ));
        }
        if color.bytes_per_pixel() != 8 {
            return Err(Error::format(path, format!("expected 16-bit samples, found {color:?}")));
        }
        let img = img.into_rgba16();
        let (w, h) = (img.width() as usize, img.height() as usize);
        let params = ProtoParams {
            radius_px: meta.radius_px,
            cap_ratio: meta.cap_ratio,
            refraction_gain: meta.refraction_gain,
            resolution: meta.resolution,
        };
        let mut tex = ProtoDropTexture::empty(w, h, params);
        for (i, px) in img.pixels().enumerate() {
            tex.r[i] = decode_offset(px[0], meta.offset_scale);
            tex.g[i] = decode_offset(px[1], meta.offset_scale);
            tex.b[i] = decode_unit(px[2]);
            tex.alpha[i] = decode_unit(px[3]);
        }
        Ok(tex)
    }

    /// An 8-bit view of the channels for eyeballing: offsets map to
    /// `127.5 + 127.5 * value / offset_scale`, thickness and coverage to
    /// `255 * value`.
    pub fn visualize(&self) -> RgbaImage {
        let scale = self.offset_scale();
        let off = |v: f64| (127.5 + 127.5 * v / scale).round().clamp(0.0, 255.0) as u8;
        let unit = |v: f64| (255.0 * v).round().clamp(0.0, 255.0) as u8;
        let mut raw = Vec::with_capacity(self.r.len() * 4);
        for i in 0..self.r.len() {
            raw.extend_from_slice(&[off(self.r[i]), off(self.g[i]), unit(self.b[i]), unit(self.alpha[i])]);
        }
        RgbaImage::from_raw(self.width as u32, self.height as u32, raw).expect("sized buffer")
    }

    /// Writes [`visualize`](Self::visualize) as an 8-bit RGBA PNG.
    pub fn save_visualization(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        self.visualize()
            .save_with_format(path, image::ImageFormat::Png)
            .map_err(|source| Error::Image { path: path.into(), source })
    }
}

fn encode_offset(v: f64, scale: f64) -> u16 {
    (OFFSET_ZERO + v / scale * OFFSET_SPAN).round().clamp(1.0, UNIT_SPAN) as u16
}

fn decode_offset(q: u16, scale: f64) -> f64 {
    (q as f64 - OFFSET_ZERO) / OFFSET_SPAN * scale
}

fn encode_unit(v: f64) -> u16 {
    (v * UNIT_SPAN).round().clamp(0.0, UNIT_SPAN) as u16
}

fn decode_unit(q: u16) -> f64 {
    q as f64 / UNIT_SPAN
}
