//! Deterministic synthetic street scenes.
//!
//! The bundled clean corpus (`data/corpus/scene_XX.png`) is produced by
//! [`street_scene`]; `cargo run -p droplens --example make_corpus` rewrites
//! it. The scenes are crude, but they have what matters for calibrating
//! rain: a bright sky, a dark road with lane markings, and mid-frequency
//! clutter from facades, windows, trees and cars.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::image::ImageBuffer;

pub const CORPUS_WIDTH: usize = 320;
pub const CORPUS_HEIGHT: usize = 240;
pub const CORPUS_SIZE: usize = 20;

type Rgb = [f32; 3];

struct Canvas {
    w: usize,
    h: usize,
    px: Vec<Rgb>,
}

impl Canvas {
    fn fill_rect(&mut self, x0: f32, y0: f32, x1: f32, y1: f32, c: Rgb) {
        let xs = x0.max(0.0) as usize..(x1.min(self.w as f32)).max(0.0) as usize;
        let ys = y0.max(0.0) as usize..(y1.min(self.h as f32)).max(0.0) as usize;
        for y in ys {
            for x in xs.clone() {
                self.px[y * self.w + x] = c;
            }
        }
    }

    fn fill_disc(&mut self, cx: f32, cy: f32, r: f32, c: Rgb) {
        let (x0, x1) = ((cx - r).floor().max(0.0) as usize, ((cx + r).ceil() as usize).min(self.w));
        let (y0, y1) = ((cy - r).floor().max(0.0) as usize, ((cy + r).ceil() as usize).min(self.h));
        for y in y0..y1 {
            for x in x0..x1 {
                let (dx, dy) = (x as f32 - cx, y as f32 - cy);
                if dx * dx + dy * dy <= r * r {
                    self.px[y * self.w + x] = c;
                }
            }
        }
    }
}

fn jitter(rng: &mut ChaCha8Rng, c: Rgb, amount: f32) -> Rgb {
    let d = rng.random_range(-amount..=amount);
    c.map(|v| (v + d).clamp(0.0, 1.0))
}

/// The `index`-th scene of the corpus, `CORPUS_WIDTH x CORPUS_HEIGHT` RGB.
pub fn street_scene(index: usize) -> ImageBuffer {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0000 + index as u64);
    let (w, h) = (CORPUS_WIDTH, CORPUS_HEIGHT);
    let mut cv = Canvas { w, h, px: vec![[0.0; 3]; w * h] };
    let horizon = rng.random_range(0.38..0.5) * h as f32;
    let vanish_x = rng.random_range(0.35..0.65) * w as f32;

    // Sky.
    let overcast = rng.random_bool(0.5);
    let (top, bottom): (Rgb, Rgb) =
        if overcast { ([0.62, 0.65, 0.7], [0.85, 0.86, 0.88]) } else { ([0.35, 0.55, 0.85], [0.78, 0.86, 0.95]) };
    for y in 0..horizon.ceil() as usize {
        let t = y as f32 / horizon;
        let c = [0, 1, 2].map(|k| top[k] + (bottom[k] - top[k]) * t);
        cv.fill_rect(0.0, y as f32, w as f32, y as f32 + 1.0, c);
    }

    // Facades along the horizon.
    let mut x = -10.0f32;
    while x < w as f32 {
        let bw = rng.random_range(25.0..70.0);
        let bh = rng.random_range(0.2..0.8) * horizon;
        let base = jitter(&mut rng, [0.55, 0.5, 0.45], 0.2);
        cv.fill_rect(x, horizon - bh, x + bw, horizon, base);
        let window = if rng.random_bool(0.5) { [0.2, 0.22, 0.28] } else { [0.85, 0.82, 0.6] };
        let mut wy = horizon - bh + 4.0;
        while wy < horizon - 8.0 {
            let mut wx = x + 4.0;
            while wx < x + bw - 6.0 {
                cv.fill_rect(wx, wy, wx + 4.0, wy + 5.0, window);
                wx += 9.0;
            }
            wy += 10.0;
        }
        x += bw + rng.random_range(0.0..6.0);
    }

    // Ground: verge, then the road as a trapezoid towards the vanishing point.
    let verge = jitter(&mut rng, [0.35, 0.42, 0.25], 0.06);
    cv.fill_rect(0.0, horizon, w as f32, h as f32, verge);
    let asphalt = jitter(&mut rng, [0.3, 0.3, 0.32], 0.06);
    let half_bottom = rng.random_range(0.55..0.9) * w as f32;
    for y in horizon as usize..h {
        let t = (y as f32 - horizon) / (h as f32 - horizon);
        let half = 3.0 + t * half_bottom;
        cv.fill_rect(vanish_x - half, y as f32, vanish_x + half, y as f32 + 1.0, asphalt);
        // Edge lines and a dashed center line.
        let line = [0.92, 0.92, 0.9];
        let lw = 0.5 + 3.0 * t;
        cv.fill_rect(vanish_x - half, y as f32, vanish_x - half + lw, y as f32 + 1.0, line);
        cv.fill_rect(vanish_x + half - lw, y as f32, vanish_x + half, y as f32 + 1.0, line);
        let phase = (1.0 / (t + 0.05)).fract();
        if phase < 0.5 {
            cv.fill_rect(vanish_x - lw / 2.0, y as f32, vanish_x + lw / 2.0, y as f32 + 1.0, line);
        }
    }

    // Trees on the verge.
    for _ in 0..rng.random_range(2..6) {
        let side = if rng.random_bool(0.5) { -1.0 } else { 1.0 };
        let t = rng.random_range(0.1..0.6f32);
        let cy = horizon + t * (h as f32 - horizon);
        let cx = vanish_x + side * (20.0 + t * half_bottom + rng.random_range(5.0..40.0));
        let r = 6.0 + 30.0 * t;
        cv.fill_rect(cx - r * 0.12, cy - r * 0.2, cx + r * 0.12, cy + r * 0.8, [0.3, 0.2, 0.12]);
        cv.fill_disc(cx, cy - r * 0.6, r, jitter(&mut rng, [0.18, 0.38, 0.16], 0.08));
    }

    // Cars on the road.
    for _ in 0..rng.random_range(1..4) {
        let t = rng.random_range(0.15..0.8f32);
        let cy = horizon + t * (h as f32 - horizon);
        let half = 3.0 + t * half_bottom;
        let cx = vanish_x + rng.random_range(-0.6..0.6) * half;
        let cw = 8.0 + 70.0 * t;
        let ch = cw * 0.55;
        let body = [rng.random(), rng.random(), rng.random()].map(|v: f32| 0.15 + 0.7 * v);
        cv.fill_rect(cx - cw / 2.0, cy - ch, cx + cw / 2.0, cy, body);
        cv.fill_rect(cx - cw * 0.35, cy - ch * 0.95, cx + cw * 0.35, cy - ch * 0.55, [0.15, 0.18, 0.22]);
        cv.fill_rect(cx - cw / 2.0, cy - ch * 0.15, cx + cw / 2.0, cy, [0.08, 0.08, 0.08]);
    }

    // Fine grain so flat regions are not perfectly flat.
    let mut data = Vec::with_capacity(w * h * 3);
    for p in &cv.px {
        let n = rng.random_range(-0.015..0.015f32);
        data.extend(p.iter().map(|v| ((v + n).clamp(0.0, 1.0) * 255.0).round() / 255.0));
    }
    ImageBuffer::from_vec(w, h, 3, data).expect("scene buffer is well formed")
}
