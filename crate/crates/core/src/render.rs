//! Compositing droplets into a full-frame refraction map and warping images
//! with it.
//!
//! Every droplet stamps a copy of the proto texture, stretched to its
//! footprint, and adds its metaball kernel to a shared field. Pixels where
//! the field reaches the threshold are water. There the offsets are the
//! average of the stamped offsets weighted by each droplet's kernel and
//! coverage, and thickness is the stamped thickness summed and clamped to 1.
//! Everywhere else the map is zero: the background normal faces the camera
//! and the image passes through untouched.
//!
//! A water pixel `(u, v)` shows the image at
//!
//! ```text
//! x_r = u + R * B,    y_r = v + G * B
//! ```
//!
//! sampled bilinearly with clamp-to-edge, blended over the original by the
//! map's coverage.

use serde::{Deserialize, Serialize};

use crate::dropfield::{DropField, KERNEL_REACH};
use crate::error::{Error, Result};
use crate::image::{gaussian_kernel, ImageBuffer};
use crate::protodrop::ProtoDropTexture;

/// Width of the darkened rim, as a fraction of the footprint radius.
pub const DARK_BAND_WIDTH: f64 = 0.1;
/// Intensity multiplier inside the darkened rim.
pub const DARK_BAND_GAIN: f32 = 0.6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenderParams {
    /// Gaussian blur applied to the refracted layer, in pixels.
    pub defocus_sigma: f64,
    /// Darken a thin band along the inside of each droplet outline.
    pub dark_band: bool,
}

impl Default for RenderParams {
    fn default() -> Self {
        RenderParams { defocus_sigma: 0.0, dark_band: false }
    }
}

impl RenderParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.defocus_sigma >= 0.0 && self.defocus_sigma.is_finite()) {
            return Err(Error::param("defocus_sigma", "must be finite and non-negative"));
        }
        Ok(())
    }
}

/// Full-frame texture: per-pixel offsets, thickness and coverage.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CompositeMap {
    width: usize,
    height: usize,
    pub r: Vec<f64>,
    pub g: Vec<f64>,
    pub b: Vec<f64>,
    pub alpha: Vec<f64>,
    /// Estimated distance inside the water outline over the local footprint
    /// radius. Only meaningful where `alpha > 0`.
    pub rim: Vec<f32>,
}

impl CompositeMap {
    pub fn zeros(width: usize, height: usize) -> Self {
        let n = width * height;
        CompositeMap {
            width,
            height,
            r: vec![0.0; n],
            g: vec![0.0; n],
            b: vec![0.0; n],
            alpha: vec![0.0; n],
            rim: vec![0.0; n],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn is_empty(&self) -> bool {
        self.alpha.iter().all(|&a| a == 0.0)
    }

    /// Number of pixels with nonzero coverage.
    pub fn coverage(&self) -> usize {
        self.alpha.iter().filter(|&&a| a > 0.0).count()
    }
}

/// Source position for a water pixel.
#[inline]
pub fn refraction_source(u: f64, v: f64, r: f64, g: f64, b: f64) -> (f64, f64) {
    (u + r * b, v + g * b)
}

#[inline]
fn smoothstep(x: f64) -> f64 {
    let x = x.clamp(0.0, 1.0);
    x * x * (3.0 - 2.0 * x)
}

/// Coverage from the metaball field. Zero below the threshold; above it a
/// smoothstep over the first pixel inside the outline, using the field
/// gradient to turn field excess into distance.
#[inline]
pub fn edge_alpha(depth_px: f64) -> f64 {
    smoothstep(0.5 + depth_px)
}

/// Frame rows composited together, so the accumulators stay in cache.
const STRIP_ROWS: usize = 16;

#[derive(Debug, Clone, Copy, Default)]
struct Cell {
    field: f64,
    grad_x: f64,
    grad_y: f64,
    weight: f64,
    radius: f64,
    r: f64,
    g: f64,
    b: f64,
}

/// A droplet's footprint on the frame, precomputed once per composite.
#[derive(Debug, Clone, Copy)]
struct Stamp {
    u: f64,
    v: f64,
    kx: f64,
    ky: f64,
    to_tex: (f64, f64),
    off: (f64, f64),
    mean_radius: f64,
    cols: (usize, usize),
    rows: (usize, usize),
}

/// Working memory reused between frames.
#[derive(Debug, Default)]
struct Scratch {
    cells: Vec<Cell>,
    stamps: Vec<Stamp>,
    horiz: Vec<f32>,
    vrow: Vec<f32>,
    counts: Vec<u32>,
}

/// Renders a stream of frames without reallocating per frame.
///
/// The free functions [`composite`] and [`apply_rain`] produce the same
/// results; this type keeps their buffers alive, which matters for video
/// sized frames.
#[derive(Debug, Default)]
pub struct Renderer {
    comp: CompositeMap,
    scratch: Scratch,
}

impl Renderer {
    pub fn new() -> Self {
        Self::default()
    }

    /// Assembles the composite map of `field` over a `width x height` frame.
    pub fn composite(&mut self, field: &DropField, proto: &ProtoDropTexture, width: usize, height: usize) -> Result<&CompositeMap> {
        composite_into(field, proto, width, height, &mut self.comp, &mut self.scratch)?;
        Ok(&self.comp)
    }

    /// Composites `field` and renders it over `img` into `out`, which is
    /// resized as needed. Returns the composite map.
    pub fn render(
        &mut self,
        field: &DropField,
        proto: &ProtoDropTexture,
        img: &ImageBuffer,
        params: &RenderParams,
        out: &mut ImageBuffer,
    ) -> Result<&CompositeMap> {
        params.validate()?;
        composite_into(field, proto, img.width(), img.height(), &mut self.comp, &mut self.scratch)?;
        apply_into(img, &self.comp, params, out, &mut self.scratch)?;
        Ok(&self.comp)
    }

    /// The map from the last call.
    pub fn composite_map(&self) -> &CompositeMap {
        &self.comp
    }
}

/// Assembles the composite map of `field` over a `width x height` frame.
pub fn composite(field: &DropField, proto: &ProtoDropTexture, width: usize, height: usize) -> Result<CompositeMap> {
    let mut comp = CompositeMap::default();
    composite_into(field, proto, width, height, &mut comp, &mut Scratch::default())?;
    Ok(comp)
}

fn composite_into(
    field: &DropField,
    proto: &ProtoDropTexture,
    width: usize,
    height: usize,
    out: &mut CompositeMap,
    scratch: &mut Scratch,
) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(Error::param("dims", format!("{width}x{height} frame is empty")));
    }
    if (out.width, out.height) != (width, height) {
        *out = CompositeMap::zeros(width, height);
    }

    let ppm = field.config().pixels_per_mm;
    let threshold = field.config().metaball_threshold;
    let tex_radius = proto.params().radius_px;
    let (tcx, tcy) = proto.center();

    let stamps = &mut scratch.stamps;
    stamps.clear();
    for d in field.droplets() {
        let (rx, ry) = d.footprint(ppm);
        let (kx, ky) = (KERNEL_REACH * rx, KERNEL_REACH * ry);
        let (Some(cols), Some(rows)) = (span(d.u, kx, width), span(d.v, ky, height)) else {
            continue;
        };
        stamps.push(Stamp {
            u: d.u,
            v: d.v,
            kx,
            ky,
            to_tex: (tex_radius / rx, tex_radius / ry),
            off: (rx / tex_radius, ry / tex_radius),
            mean_radius: 0.5 * (rx + ry),
            cols,
            rows,
        });
    }

    scratch.cells.resize(STRIP_ROWS * width, Cell::default());
    for sy0 in (0..height).step_by(STRIP_ROWS) {
        let sy1 = (sy0 + STRIP_ROWS).min(height);
        let strip = sy0 * width..sy1 * width;
        let active = || stamps.iter().filter(|s| s.rows.0 < sy1 && s.rows.1 >= sy0);
        if active().next().is_none() {
            out.r[strip.clone()].fill(0.0);
            out.g[strip.clone()].fill(0.0);
            out.b[strip.clone()].fill(0.0);
            out.alpha[strip.clone()].fill(0.0);
            out.rim[strip].fill(0.0);
            continue;
        }
        let cells = &mut scratch.cells[..(sy1 - sy0) * width];
        cells.fill(Cell::default());
        for s in active() {
            let (inv_kx2, inv_ky2) = (1.0 / (s.kx * s.kx), 1.0 / (s.ky * s.ky));
            for y in s.rows.0.max(sy0)..=s.rows.1.min(sy1 - 1) {
                let dy = y as f64 - s.v;
                let qy = dy / s.ky;
                let rest = 1.0 - qy * qy;
                if rest <= 0.0 {
                    continue;
                }
                // Columns inside the ellipse, widened by one for rounding;
                // the exact test below decides.
                let half = s.kx * rest.sqrt();
                let x0 = ((s.u - half).floor().max(s.cols.0 as f64) as usize).max(s.cols.0);
                let x1 = ((s.u + half).ceil().min(s.cols.1 as f64) as usize).min(s.cols.1);
                let row = &mut cells[(y - sy0) * width..(y - sy0 + 1) * width];
                let ty = tcy + dy * s.to_tex.1;
                for x in x0..=x1 {
                    let dx = x as f64 - s.u;
                    let qx = dx / s.kx;
                    let q2 = qx * qx + qy * qy;
                    if q2 >= 1.0 {
                        continue;
                    }
                    let t = 1.0 - q2;
                    let k = t * t;
                    let c = &mut row[x];
                    c.field += k;
                    c.grad_x -= 4.0 * t * dx * inv_kx2;
                    c.grad_y -= 4.0 * t * dy * inv_ky2;
                    c.radius += k * s.mean_radius;

                    let [tr, tg, tb, ta] = proto.sample(tcx + dx * s.to_tex.0, ty);
                    if ta > 0.0 {
                        let w = k * ta;
                        c.weight += w;
                        c.r += w * tr * s.off.0;
                        c.g += w * tg * s.off.1;
                    }
                    c.b += tb;
                }
            }
        }

        for (j, c) in cells.iter().enumerate() {
            let i = sy0 * width + j;
            let f = c.field;
            if f < threshold {
                out.r[i] = 0.0;
                out.g[i] = 0.0;
                out.b[i] = 0.0;
                out.alpha[i] = 0.0;
                out.rim[i] = 0.0;
                continue;
            }
            let grad = (c.grad_x * c.grad_x + c.grad_y * c.grad_y).sqrt();
            let depth = if grad > 0.0 { (f - threshold) / grad } else { f64::INFINITY };
            out.alpha[i] = edge_alpha(depth);
            out.rim[i] = (depth / (c.radius / f)) as f32;
            if c.weight > 0.0 {
                out.r[i] = c.r / c.weight;
                out.g[i] = c.g / c.weight;
            } else {
                out.r[i] = 0.0;
                out.g[i] = 0.0;
            }
            out.b[i] = c.b.min(1.0);
        }
    }
    Ok(())
}

/// Inclusive pixel range within `[0, len)` covered by `center +- reach`.
fn span(center: f64, reach: f64, len: usize) -> Option<(usize, usize)> {
    let lo = (center - reach).ceil().max(0.0);
    let hi = (center + reach).floor().min(len as f64 - 1.0);
    (lo <= hi).then(|| (lo as usize, hi as usize))
}

/// Renders the droplets described by `comp` over `img`.
///
/// Pixels without coverage are copied bit for bit. With a positive
/// `defocus_sigma` the refracted layer is blurred before blending; the
/// unrefracted background stays sharp.
pub fn apply_rain(img: &ImageBuffer, comp: &CompositeMap, params: &RenderParams) -> Result<ImageBuffer> {
    let mut out = img.clone();
    apply_into(img, comp, params, &mut out, &mut Scratch::default())?;
    Ok(out)
}

fn apply_into(
    img: &ImageBuffer,
    comp: &CompositeMap,
    params: &RenderParams,
    out: &mut ImageBuffer,
    scratch: &mut Scratch,
) -> Result<()> {
    params.validate()?;
    if img.dims() != (comp.width, comp.height) {
        return Err(Error::Dimensions(format!(
            "image is {}x{}, composite is {}x{}",
            img.width(),
            img.height(),
            comp.width,
            comp.height
        )));
    }
    out.copy_from(img);
    let Some((bx0, by0, bx1, by1)) = coverage_bounds(comp) else {
        return Ok(());
    };
    let (w, h, ch) = (img.width(), img.height(), img.channels());
    let src = img.as_slice();
    let alpha = &comp.alpha;

    // `out` doubles as the refracted layer: refracted samples on water, the
    // image elsewhere. Water pixels are overwritten by the blend at the end,
    // after both blur passes have read the layer.
    let layer = out.as_mut_slice();
    for y in by0..=by1 {
        for x in bx0..=bx1 {
            let i = y * w + x;
            if alpha[i] > 0.0 {
                let (sx, sy) = refraction_source(x as f64, y as f64, comp.r[i], comp.g[i], comp.b[i]);
                img.sample_pixel(sx, sy, &mut layer[i * ch..(i + 1) * ch]);
            }
        }
    }

    // Separable blur with clamp-to-edge at the border of the region blurring
    // can carry onto water. Both passes work on runs of columns so every tap
    // is one multiply-add over contiguous samples: the vertical pass on water
    // only, the horizontal pass where water lies within `pad` rows.
    let taps: Vec<f32> = if params.defocus_sigma > 0.0 {
        gaussian_kernel(params.defocus_sigma).into_iter().map(|t| t as f32).collect()
    } else {
        vec![1.0]
    };
    let pad = taps.len() / 2;
    let (rx0, ry0) = (bx0.saturating_sub(pad), by0.saturating_sub(pad));
    let (rx1, ry1) = ((bx1 + pad).min(w - 1), (by1 + pad).min(h - 1));
    let (rw, rh) = (rx1 - rx0 + 1, ry1 - ry0 + 1);
    let stride = rw * ch;
    let (cx0, cw) = (bx0 - rx0, bx1 - bx0 + 1);
    let water = |y: usize, x: usize| alpha[y * w + x] > 0.0;

    let counts = &mut scratch.counts;
    counts.clear();
    counts.resize(cw, 0);
    let tally = |counts: &mut [u32], r: usize, add: bool| {
        let y = ry0 + r;
        if y < by0 || y > by1 {
            return;
        }
        for (j, c) in counts.iter_mut().enumerate() {
            if water(y, bx0 + j) {
                if add {
                    *c += 1;
                } else {
                    *c -= 1;
                }
            }
        }
    };
    for r in 0..pad.min(rh) {
        tally(counts, r, true);
    }
    let horiz = &mut scratch.horiz;
    horiz.resize(rh * stride, 0.0);
    for r in 0..rh {
        if r + pad < rh {
            tally(counts, r + pad, true);
        }
        if r > pad {
            tally(counts, r - pad - 1, false);
        }
        let from = ((ry0 + r) * w + rx0) * ch;
        let line = &layer[from..from + stride];
        let dst = &mut horiz[r * stride..(r + 1) * stride];
        for (j0, j1) in runs(counts, |&c| c > 0) {
            let (x0, x1) = (cx0 + j0, cx0 + j1);
            // Columns whose taps all fall inside the region.
            let (i0, i1) = (x0.max(pad), x1.min(rw.saturating_sub(pad)));
            if i0 < i1 {
                let inner = &mut dst[i0 * ch..i1 * ch];
                let n = inner.len();
                inner.fill(0.0);
                for (k, &t) in taps.iter().enumerate() {
                    let from = (i0 + k - pad) * ch;
                    for (acc, &v) in inner.iter_mut().zip(&line[from..from + n]) {
                        *acc += t * v;
                    }
                }
            }
            for x in (x0..x1).filter(|&x| x < i0 || x >= i1.max(i0)) {
                for c in 0..ch {
                    let mut acc = 0.0;
                    for (k, t) in taps.iter().enumerate() {
                        let sx = (x + k).saturating_sub(pad).min(rw - 1);
                        acc += t * line[sx * ch + c];
                    }
                    dst[x * ch + c] = acc;
                }
            }
        }
    }

    let vrow = &mut scratch.vrow;
    vrow.resize(cw * ch, 0.0);
    for y in by0..=by1 {
        let r = y - ry0;
        let row_alpha = &alpha[y * w + bx0..y * w + bx1 + 1];
        for (j0, j1) in runs(row_alpha, |&a| a > 0.0) {
            let span = (cx0 + j0) * ch..(cx0 + j1) * ch;
            let acc = &mut vrow[j0 * ch..j1 * ch];
            acc.fill(0.0);
            for (k, &t) in taps.iter().enumerate() {
                let sr = (r + k).saturating_sub(pad).min(rh - 1);
                for (a, &v) in acc.iter_mut().zip(&horiz[sr * stride..][span.clone()]) {
                    *a += t * v;
                }
            }
            if pad > 0 {
                acc.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
            }
            for j in j0..j1 {
                let i = y * w + bx0 + j;
                let a = alpha[i] as f32;
                let shade = if params.dark_band && (comp.rim[i] as f64) < DARK_BAND_WIDTH { DARK_BAND_GAIN } else { 1.0 };
                for c in 0..ch {
                    let v = a * (vrow[j * ch + c] * shade) + (1.0 - a) * src[i * ch + c];
                    layer[i * ch + c] = v.clamp(0.0, 1.0);
                }
            }
        }
    }
    Ok(())
}

/// Maximal half-open index ranges of `items` where `keep` holds.
fn runs<'a, T>(items: &'a [T], keep: impl Fn(&T) -> bool + 'a) -> impl Iterator<Item = (usize, usize)> + 'a {
    let mut i = 0;
    std::iter::from_fn(move || {
        while i < items.len() && !keep(&items[i]) {
            i += 1;
        }
        if i == items.len() {
            return None;
        }
        let start = i;
        while i < items.len() && keep(&items[i]) {
            i += 1;
        }
        Some((start, i))
    })
}

fn coverage_bounds(comp: &CompositeMap) -> Option<(usize, usize, usize, usize)> {
    let mut bounds: Option<(usize, usize, usize, usize)> = None;
    for y in 0..comp.height {
        let row = &comp.alpha[y * comp.width..(y + 1) * comp.width];
        let Some(first) = row.iter().position(|&a| a > 0.0) else { continue };
        let last = row.iter().rposition(|&a| a > 0.0).expect("row has coverage");
        bounds = Some(match bounds {
            None => (first, y, last, y),
            Some((x0, y0, x1, _)) => (x0.min(first), y0, x1.max(last), y),
        });
    }
    bounds
}

/// Binary single-channel mask: 1 where the composite has coverage.
pub fn droplet_mask(comp: &CompositeMap) -> ImageBuffer {
    let data = comp.alpha.iter().map(|&a| if a > 0.0 { 1.0 } else { 0.0 }).collect();
    ImageBuffer::from_vec(comp.width, comp.height, 1, data).expect("composite has nonzero dims")
}

/// Convenience: composite, render, and mask in one call.
pub fn render_frame(
    field: &DropField,
    proto: &ProtoDropTexture,
    img: &ImageBuffer,
    params: &RenderParams,
) -> Result<(ImageBuffer, ImageBuffer, CompositeMap)> {
    let comp = composite(field, proto, img.width(), img.height())?;
    let rainy = apply_rain(img, &comp, params)?;
    let mask = droplet_mask(&comp);
    Ok((rainy, mask, comp))
}
