//! Normalized raster images and their 8-bit file representation.
//!
//! Intensities are stored as `f32` in `[0, 1]`. Loading maps byte `b` to
//! `b / 255`; saving maps `v` back to `round(v * 255)`, so an image that was
//! loaded and never modified re-encodes to the same bytes.

use std::path::Path;

use image::{DynamicImage, GrayImage, RgbImage};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ImageBuffer {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f32>,
}

impl ImageBuffer {
    /// A black image. `channels` must be 1 or 3.
    pub fn new(width: usize, height: usize, channels: usize) -> Result<Self> {
        Self::from_vec(width, height, channels, vec![0.0; width * height * channels])
    }

    pub fn from_vec(width: usize, height: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::param("channels", format!("expected 1 or 3, got {channels}")));
        }
        if width == 0 || height == 0 {
            return Err(Error::param("dims", format!("{width}x{height} image is empty")));
        }
        if data.len() != width * height * channels {
            return Err(Error::Dimensions(format!(
                "{} samples for a {width}x{height}x{channels} image",
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::param("values", format!("intensity {v} outside [0, 1]")));
        }
        Ok(ImageBuffer { width, height, channels, data })
    }

    /// Interleaved 8-bit samples, `value = byte / 255`.
    pub fn from_bytes(width: usize, height: usize, channels: usize, bytes: &[u8]) -> Result<Self> {
        let data = bytes.iter().map(|&b| b as f32 / 255.0).collect();
        Self::from_vec(width, height, channels, data)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        self.data.iter().map(|&v| quantize_u8(v)).collect()
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    /// Mutable samples. Callers are responsible for keeping values in `[0, 1]`.
    pub fn as_mut_slice(&mut self) -> &mut [f32] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f32 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, v: f32) {
        self.data[(y * self.width + x) * self.channels + c] = v;
    }

    /// Makes `self` a copy of `other`, reusing the existing allocation.
    pub fn copy_from(&mut self, other: &ImageBuffer) {
        self.width = other.width;
        self.height = other.height;
        self.channels = other.channels;
        self.data.clear();
        self.data.extend_from_slice(&other.data);
    }

    pub fn same_shape(&self, other: &ImageBuffer) -> bool {
        self.width == other.width && self.height == other.height && self.channels == other.channels
    }

    /// Rec. 601 luma (0.299, 0.587, 0.114) as one value per pixel, in `f64`.
    /// Single-channel images are returned as-is.
    pub fn luma(&self) -> Vec<f64> {
        match self.channels {
            1 => self.data.iter().map(|&v| v as f64).collect(),
            _ => self
                .data
                .chunks_exact(3)
                .map(|p| 0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64)
                .collect(),
        }
    }

    /// Bilinear sample of channel `c` at a sub-pixel position. Pixel centers
    /// sit at integer coordinates; positions outside the image clamp to the
    /// nearest edge pixel.
    #[inline]
    pub fn sample_bilinear(&self, x: f64, y: f64, c: usize) -> f32 {
        let mut px = [0.0; 3];
        self.sample_pixel(x, y, &mut px[..self.channels]);
        px[c]
    }

    /// [`sample_bilinear`](Self::sample_bilinear) for all channels at once.
    /// `out` must hold `channels` values.
    #[inline]
    pub fn sample_pixel(&self, x: f64, y: f64, out: &mut [f32]) {
        let x = x.clamp(0.0, (self.width - 1) as f64);
        let y = y.clamp(0.0, (self.height - 1) as f64);
        let x0 = x.floor() as usize;
        let y0 = y.floor() as usize;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let fx = (x - x0 as f64) as f32;
        let fy = (y - y0 as f64) as f32;
        let ch = self.channels;
        let (r0, r1) = (y0 * self.width, y1 * self.width);
        let (a, b) = ((r0 + x0) * ch, (r0 + x1) * ch);
        let (c, d) = ((r1 + x0) * ch, (r1 + x1) * ch);
        for (k, o) in out.iter_mut().enumerate() {
            let top = self.data[a + k] * (1.0 - fx) + self.data[b + k] * fx;
            let bottom = self.data[c + k] * (1.0 - fx) + self.data[d + k] * fx;
            *o = top * (1.0 - fy) + bottom * fy;
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let img = image::open(path).map_err(|source| Error::Image { path: path.into(), source })?;
        Ok(Self::from_dynamic(img))
    }

    /// Decodes an in-memory image. Gray and gray+alpha inputs become one
    /// channel; everything else becomes RGB. Alpha is dropped.
    pub fn from_dynamic(img: DynamicImage) -> Self {
        let (w, h) = (img.width() as usize, img.height() as usize);
        let (channels, bytes) = if img.color().has_color() {
            (3, img.into_rgb8().into_raw())
        } else {
            (1, img.into_luma8().into_raw())
        };
        Self::from_bytes(w, h, channels, &bytes).expect("decoded image has a consistent shape")
    }

    pub fn to_dynamic(&self) -> DynamicImage {
        let (w, h) = (self.width as u32, self.height as u32);
        let bytes = self.to_bytes();
        match self.channels {
            1 => DynamicImage::ImageLuma8(GrayImage::from_raw(w, h, bytes).expect("sized buffer")),
            _ => DynamicImage::ImageRgb8(RgbImage::from_raw(w, h, bytes).expect("sized buffer")),
        }
    }

    /// Writes an 8-bit PNG.
    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        self.to_dynamic()
            .save_with_format(path, image::ImageFormat::Png)
            .map_err(|source| Error::Image { path: path.into(), source })
    }

    /// Encodes as an 8-bit PNG in memory.
    pub fn encode_png(&self) -> Vec<u8> {
        let mut out = std::io::Cursor::new(Vec::new());
        self.to_dynamic()
            .write_to(&mut out, image::ImageFormat::Png)
            .expect("PNG encoding into memory cannot fail");
        out.into_inner()
    }
}

#[inline]
pub fn quantize_u8(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Normalized 1-D Gaussian taps, radius `ceil(3 sigma)`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil().max(0.0) as isize;
    let taps: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = taps.iter().sum();
    taps.into_iter().map(|t| t / total).collect()
}

/// Separable Gaussian blur with clamp-to-edge borders. `sigma <= 0` is a copy.
pub fn gaussian_blur(img: &ImageBuffer, sigma: f64) -> ImageBuffer {
    if sigma <= 0.0 {
        return img.clone();
    }
    let taps: Vec<f32> = gaussian_kernel(sigma).into_iter().map(|t| t as f32).collect();
    let radius = (taps.len() / 2) as isize;
    let (w, h, ch) = (img.width as isize, img.height as isize, img.channels);
    let src = &img.data;
    let mut tmp = vec![0.0f32; src.len()];
    for y in 0..h {
        let row = (y * w) as usize * ch;
        for x in 0..w {
            for c in 0..ch {
                let mut acc = 0.0;
                for (k, t) in taps.iter().enumerate() {
                    let sx = (x + k as isize - radius).clamp(0, w - 1) as usize;
                    acc += t * src[row + sx * ch + c];
                }
                tmp[row + x as usize * ch + c] = acc;
            }
        }
    }
    let mut out = vec![0.0f32; src.len()];
    for y in 0..h {
        for x in 0..w {
            for c in 0..ch {
                let mut acc = 0.0;
                for (k, t) in taps.iter().enumerate() {
                    let sy = (y + k as isize - radius).clamp(0, h - 1) as usize;
                    acc += t * tmp[(sy * w as usize + x as usize) * ch + c];
                }
                out[(y * w + x) as usize * ch + c] = acc.clamp(0.0, 1.0);
            }
        }
    }
    ImageBuffer { width: img.width, height: img.height, channels: ch, data: out }
}
