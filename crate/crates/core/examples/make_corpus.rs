//! Regenerates the bundled clean corpus under `data/corpus/`.

use std::path::Path;

use droplens::corpus::{street_scene, CORPUS_SIZE};

fn main() -> droplens::Result<()> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/corpus");
    std::fs::create_dir_all(&dir).expect("create corpus directory");
    for i in 0..CORPUS_SIZE {
        let path = dir.join(format!("scene_{i:02}.png"));
        street_scene(i).save_png(&path)?;
        println!("{}", path.display());
    }
    Ok(())
}
