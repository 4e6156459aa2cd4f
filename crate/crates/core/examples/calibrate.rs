//! Prints mean PSNR/SSIM of the default (or overridden) rain config over the
//! bundled corpus.
//!
//! ```text
//! cargo run --release -p droplens --example calibrate -- field.p_r=0.0005
//! ```

use droplens::corpus::{street_scene, CORPUS_SIZE};
use droplens::pipeline::derive_seed;
use droplens::protodrop::generate_protodrop;
use droplens::render::render_frame;
use droplens::{metrics, Config, DropField, FieldConfig};

fn main() -> droplens::Result<()> {
    let overrides: Vec<String> = std::env::args().skip(1).collect();
    let cfg = Config::load(None, &overrides)?;
    let proto = generate_protodrop(cfg.proto)?;
    let (mut psnr, mut ssim, mut cover) = (0.0, 0.0, 0.0);
    for i in 0..CORPUS_SIZE {
        let clean = street_scene(i);
        let mut field = DropField::new(FieldConfig { seed: derive_seed(cfg.field.seed, i), ..cfg.field.clone() })?;
        field.spawn(clean.width(), clean.height())?;
        let (rainy, _, comp) = render_frame(&field, &proto, &clean, &cfg.render)?;
        let r = metrics::report(&clean, &rainy)?;
        let c = comp.coverage() as f64 / (clean.width() * clean.height()) as f64;
        println!("{i:2}  drops {:3}  cover {c:.3}  psnr {:.2}  ssim {:.4}", field.len(), r.psnr_db, r.ssim);
        psnr += r.psnr_db;
        ssim += r.ssim;
        cover += c;
    }
    let n = CORPUS_SIZE as f64;
    println!("mean psnr {:.3}  ssim {:.4}  cover {:.3}", psnr / n, ssim / n, cover / n);
    Ok(())
}
