//! Times composite and warp on video-sized frames.

use std::time::Instant;

use droplens::dropfield::{DropField, FieldConfig};
use droplens::image::ImageBuffer;
use droplens::protodrop::generate_protodrop;
use droplens::render::{apply_rain, Renderer};
use droplens::Config;

fn main() {
    let (w, h) = (1280, 960);
    let cfg = Config::default();
    let proto = generate_protodrop(cfg.proto).unwrap();
    let mut field = DropField::new(FieldConfig { spawn_every_frame: true, seed: 11, ..cfg.field.clone() }).unwrap();
    field.spawn(w, h).unwrap();
    let img = ImageBuffer::from_vec(w, h, 3, (0..w * h * 3).map(|i| (i % 251) as f32 / 251.0).collect()).unwrap();
    let mut renderer = Renderer::new();
    let mut out = img.clone();
    let (mut tc, mut ta, mut tf) = (0.0, 0.0, 0.0);
    let frames = 30;
    let mut covered = 0;
    for _ in 0..frames {
        let t = Instant::now();
        let comp = renderer.composite(&field, &proto, w, h).unwrap();
        tc += t.elapsed().as_secs_f64();
        covered += comp.coverage();
        let t = Instant::now();
        std::hint::black_box(apply_rain(&img, comp, &cfg.render).unwrap());
        ta += t.elapsed().as_secs_f64();
        let t = Instant::now();
        renderer.render(&field, &proto, &img, &cfg.render, &mut out).unwrap();
        tf += t.elapsed().as_secs_f64();
        field.step();
    }
    let ms = |t: f64| 1e3 * t / frames as f64;
    println!(
        "drops {} coverage {:.2} composite {:.1} ms apply {:.1} ms reused frame {:.1} ms",
        field.len(),
        covered as f64 / (frames * w * h) as f64,
        ms(tc),
        ms(ta),
        ms(tf)
    );
}
