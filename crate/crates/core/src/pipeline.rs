//! Batch augmentation with replayable manifests, and dataset comparison.
//!
//! `augment_dataset` mirrors an input tree under an output root:
//!
//! ```text
//! out_root/
//!   rainy/<relative path>.png    rendered image
//!   mask/<relative path>.png     droplet mask, {0, 255}
//!   labels/<relative path>       ground truth, copied byte for byte
//!   manifest.json
//! ```
//!
//! Outside sequence mode every image gets its own field, seeded from the
//! master seed and the image's index in sorted order, so images can be
//! processed in any order or in parallel. In sequence mode one field is
//! stepped from frame to frame.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use image::{DynamicImage, ImageFormat};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::Config;
use crate::dropfield::{DropField, FieldConfig, FieldSnapshot};
use crate::error::{Error, Result};
use crate::image::ImageBuffer;
use crate::metrics::{self, BinaryMask, LabelMap, SegStats};
use crate::protodrop::{generate_protodrop, ProtoDropTexture};
use crate::render::{apply_rain, composite, droplet_mask};

pub const TOOLKIT_VERSION: &str = env!("CARGO_PKG_VERSION");
pub const MANIFEST_FORMAT: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

const IMAGE_EXTENSIONS: [&str; 3] = ["png", "jpg", "jpeg"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetLayout {
    pub root: PathBuf,
    /// Glob relative to `root` selecting the images, e.g. `**/*.png`.
    pub image_glob: String,
    /// Glob relative to `root` selecting ground-truth files, paired with
    /// images by file stem.
    #[serde(default)]
    pub label_glob: Option<String>,
    /// Frames form one sequence sharing an evolving droplet field.
    #[serde(default)]
    pub sequence: bool,
}

impl DatasetLayout {
    pub fn new(root: impl Into<PathBuf>, image_glob: impl Into<String>) -> Self {
        DatasetLayout { root: root.into(), image_glob: image_glob.into(), label_glob: None, sequence: false }
    }

    pub fn with_labels(mut self, label_glob: impl Into<String>) -> Self {
        self.label_glob = Some(label_glob.into());
        self
    }

    pub fn sequence(mut self, sequence: bool) -> Self {
        self.sequence = sequence;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub index: usize,
    /// Image path relative to the layout root.
    pub input: String,
    /// Output paths relative to the output root.
    pub output: String,
    pub mask: String,
    #[serde(default)]
    pub label: Option<LabelRecord>,
    pub state: FieldSnapshot,
    #[serde(default)]
    pub rainy_sha256: Option<String>,
    #[serde(default)]
    pub mask_sha256: Option<String>,
    /// Set when the frame could not be produced; other frames are unaffected.
    #[serde(default)]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelRecord {
    pub input: String,
    pub output: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: u32,
    pub toolkit_version: String,
    pub config_hash: String,
    pub config: Config,
    pub layout: DatasetLayout,
    pub frames: Vec<FrameRecord>,
}

impl Manifest {
    pub fn failures(&self) -> impl Iterator<Item = &FrameRecord> {
        self.frames.iter().filter(|f| f.error.is_some())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|source| Error::Json { path: path.into(), source })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut text = serde_json::to_string_pretty(self).map_err(|source| Error::Json { path: path.into(), source })?;
        text.push('\n');
        write_file(path, text.as_bytes())
    }
}

/// Per-image seed for independent (non-sequence) fields.
pub fn derive_seed(master: u64, index: usize) -> u64 {
    let mut h = Sha256::new();
    h.update(b"droplens-frame-seed");
    h.update(master.to_le_bytes());
    h.update((index as u64).to_le_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes")) & i64::MAX as u64
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn rel_string(path: &Path) -> String {
    path.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/")
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Files under `root` matching `pattern`, as sorted relative paths.
fn find_files(root: &Path, pattern: &str) -> Result<Vec<PathBuf>> {
    let full = root.join(pattern);
    let full = full.to_str().ok_or_else(|| Error::Layout(format!("non UTF-8 path {}", full.display())))?;
    let entries = glob::glob(full).map_err(|e| Error::Layout(format!("bad glob {pattern:?}: {e}")))?;
    let mut out = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::Layout(e.to_string()))?;
        if path.is_file() {
            let rel = path.strip_prefix(root).expect("glob results live under the root").to_path_buf();
            out.push(rel);
        }
    }
    out.sort();
    Ok(out)
}

fn stem_of(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

fn index_by_stem(paths: &[PathBuf], what: &str) -> Result<BTreeMap<String, PathBuf>> {
    let mut map = BTreeMap::new();
    for p in paths {
        if let Some(prev) = map.insert(stem_of(p), p.clone()) {
            return Err(Error::Layout(format!("{what} {} and {} share a stem", prev.display(), p.display())));
        }
    }
    Ok(map)
}

struct Plan {
    images: Vec<PathBuf>,
    labels: Vec<Option<PathBuf>>,
}

fn plan(layout: &DatasetLayout) -> Result<Plan> {
    let images = find_files(&layout.root, &layout.image_glob)?;
    let Some(label_glob) = &layout.label_glob else {
        let labels = vec![None; images.len()];
        return Ok(Plan { images, labels });
    };
    let label_files = find_files(&layout.root, label_glob)?;
    let by_stem = index_by_stem(&label_files, "labels")?;
    let image_stems = index_by_stem(&images, "images")?;
    let missing: Vec<_> = image_stems.keys().filter(|s| !by_stem.contains_key(*s)).cloned().collect();
    let orphans: Vec<_> = by_stem.keys().filter(|s| !image_stems.contains_key(*s)).cloned().collect();
    if !missing.is_empty() || !orphans.is_empty() {
        return Err(Error::Layout(format!(
            "labels do not pair with images; images without labels: {missing:?}; labels without images: {orphans:?}"
        )));
    }
    let labels = images.iter().map(|p| Some(by_stem[&stem_of(p)].clone())).collect();
    Ok(Plan { images, labels })
}

fn output_paths(rel: &Path) -> (String, String) {
    let png = rel.with_extension("png");
    (format!("rainy/{}", rel_string(&png)), format!("mask/{}", rel_string(&png)))
}

/// Decoded input plus what is needed to pass it through untouched.
struct Source {
    image: ImageBuffer,
    /// Original file bytes, when re-encoding them would not change a pixel.
    verbatim_png: Option<Vec<u8>>,
}

fn read_source(path: &Path) -> Result<Source> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let format = image::guess_format(&bytes).map_err(|source| Error::Image { path: path.into(), source })?;
    let decoded: DynamicImage =
        image::load_from_memory_with_format(&bytes, format).map_err(|source| Error::Image { path: path.into(), source })?;
    let exact = matches!(decoded.color(), image::ColorType::L8 | image::ColorType::Rgb8);
    let verbatim_png = (format == ImageFormat::Png && exact).then_some(bytes);
    Ok(Source { image: ImageBuffer::from_dynamic(decoded), verbatim_png })
}

struct Rendered {
    rainy: Vec<u8>,
    mask: Vec<u8>,
}

fn render_source(src: &Source, field: &DropField, proto: &ProtoDropTexture, cfg: &Config) -> Result<Rendered> {
    let img = &src.image;
    let comp = composite(field, proto, img.width(), img.height())?;
    let rainy = match (&src.verbatim_png, comp.is_empty()) {
        (Some(bytes), true) => bytes.clone(),
        _ => apply_rain(img, &comp, &cfg.render)?.encode_png(),
    };
    let mask = droplet_mask(&comp).encode_png();
    Ok(Rendered { rainy, mask })
}

/// Encoded outputs for a single image.
#[derive(Debug, Clone)]
pub struct PreviewOutput {
    /// PNG bytes of the rendered image.
    pub rainy: Vec<u8>,
    /// PNG bytes of the droplet mask.
    pub mask: Vec<u8>,
    pub state: FieldSnapshot,
}

/// Renders one image file with a field seeded directly by `cfg.field.seed`.
/// With no droplet coverage, PNG inputs come back byte for byte.
pub fn preview_file(input: &Path, cfg: &Config) -> Result<PreviewOutput> {
    cfg.validate()?;
    let proto = generate_protodrop(cfg.proto)?;
    let src = read_source(input)?;
    let mut field = DropField::new(cfg.field.clone())?;
    let (w, h) = src.image.dims();
    field.spawn(w, h)?;
    let out = render_source(&src, &field, &proto, cfg)?;
    Ok(PreviewOutput { rainy: out.rainy, mask: out.mask, state: field.snapshot() })
}

fn frame_config(cfg: &FieldConfig, seed: u64) -> FieldConfig {
    FieldConfig { seed, ..cfg.clone() }
}

/// Produces droplet states frame by frame, either independently seeded or
/// as one evolving sequence.
enum Simulator {
    Independent(FieldConfig),
    Sequence(Option<DropField>, FieldConfig),
}

impl Simulator {
    fn new(cfg: &FieldConfig, sequence: bool) -> Self {
        if sequence {
            Simulator::Sequence(None, cfg.clone())
        } else {
            Simulator::Independent(cfg.clone())
        }
    }

    /// Field for frame `index` of a `w x h` image. Sequence mode must be
    /// called for every frame in order, including failed ones (`dims` None).
    fn field(&mut self, index: usize, dims: Option<(usize, usize)>) -> Result<Option<DropField>> {
        match self {
            Simulator::Independent(cfg) => {
                let Some((w, h)) = dims else { return Ok(None) };
                let mut f = DropField::new(frame_config(cfg, derive_seed(cfg.seed, index)))?;
                f.spawn(w, h)?;
                Ok(Some(f))
            }
            Simulator::Sequence(state, cfg) => {
                match state {
                    Some(f) => f.step(),
                    None => {
                        let Some((w, h)) = dims else { return Ok(None) };
                        let mut f = DropField::new(cfg.clone())?;
                        f.spawn(w, h)?;
                        *state = Some(f);
                    }
                }
                Ok(state.clone())
            }
        }
    }
}

struct FrameJob<'a> {
    index: usize,
    rel: &'a Path,
    label: Option<&'a Path>,
}

fn run_frame(
    job: &FrameJob<'_>,
    layout: &DatasetLayout,
    out_root: &Path,
    source: Result<Source>,
    field: Option<DropField>,
    proto: &ProtoDropTexture,
    cfg: &Config,
) -> FrameRecord {
    let (output, mask) = output_paths(job.rel);
    let mut record = FrameRecord {
        index: job.index,
        input: rel_string(job.rel),
        output,
        mask,
        label: None,
        state: field.as_ref().map(|f| f.snapshot()).unwrap_or(FieldSnapshot {
            frame: job.index as u64,
            seed: cfg.field.seed,
            droplets: Vec::new(),
        }),
        rainy_sha256: None,
        mask_sha256: None,
        error: None,
    };
    let result = (|| -> Result<()> {
        let src = source?;
        let field = field.expect("a field exists whenever the source decoded");
        let out = render_source(&src, &field, proto, cfg)?;
        write_file(&out_root.join(&record.output), &out.rainy)?;
        write_file(&out_root.join(&record.mask), &out.mask)?;
        record.rainy_sha256 = Some(sha256_hex(&out.rainy));
        record.mask_sha256 = Some(sha256_hex(&out.mask));
        if let Some(label) = job.label {
            let from = layout.root.join(label);
            let bytes = fs::read(&from).map_err(|e| Error::io(&from, e))?;
            let output = format!("labels/{}", rel_string(label));
            write_file(&out_root.join(&output), &bytes)?;
            record.label = Some(LabelRecord { input: rel_string(label), output, sha256: sha256_hex(&bytes) });
        }
        Ok(())
    })();
    if let Err(e) = result {
        record.error = Some(e.to_string());
    }
    record
}

/// Renders rain over every image in `layout` and writes the output tree and
/// manifest under `out_root`.
///
/// Unreadable images are recorded in their frame's `error` and skipped.
/// Unpaired labels abort the run before anything is written.
pub fn augment_dataset(layout: &DatasetLayout, cfg: &Config, out_root: &Path) -> Result<Manifest> {
    cfg.validate()?;
    let plan = plan(layout)?;
    let proto = generate_protodrop(cfg.proto)?;
    fs::create_dir_all(out_root).map_err(|e| Error::io(out_root, e))?;

    let jobs: Vec<FrameJob<'_>> = plan
        .images
        .iter()
        .zip(&plan.labels)
        .enumerate()
        .map(|(index, (rel, label))| FrameJob { index, rel, label: label.as_deref() })
        .collect();

    let frames: Vec<FrameRecord> = if layout.sequence {
        let mut sim = Simulator::new(&cfg.field, true);
        jobs.iter()
            .map(|job| {
                let src = read_source(&layout.root.join(job.rel));
                let dims = src.as_ref().ok().map(|s| s.image.dims());
                match sim.field(job.index, dims) {
                    Ok(field) => run_frame(job, layout, out_root, src, field, &proto, cfg),
                    Err(e) => run_frame(job, layout, out_root, Err(e), None, &proto, cfg),
                }
            })
            .collect()
    } else {
        jobs.par_iter()
            .map(|job| {
                let src = read_source(&layout.root.join(job.rel));
                let dims = src.as_ref().ok().map(|s| s.image.dims());
                let mut sim = Simulator::new(&cfg.field, false);
                match sim.field(job.index, dims) {
                    Ok(field) => run_frame(job, layout, out_root, src, field, &proto, cfg),
                    Err(e) => run_frame(job, layout, out_root, Err(e), None, &proto, cfg),
                }
            })
            .collect()
    };

    let manifest = Manifest {
        format: MANIFEST_FORMAT,
        toolkit_version: TOOLKIT_VERSION.to_string(),
        config_hash: cfg.hash(),
        config: cfg.clone(),
        layout: layout.clone(),
        frames,
    };
    manifest.save(out_root.join(MANIFEST_FILE))?;
    Ok(manifest)
}

/// Outcome of a replay.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReplayReport {
    pub frames: usize,
    /// The stored config no longer hashes to the stored hash. Droplets were
    /// re-simulated from the config instead of taken from the manifest.
    pub hash_mismatch: bool,
    /// Output files whose checksum differs from the manifest.
    pub mismatches: Vec<String>,
}

impl ReplayReport {
    pub fn is_exact(&self) -> bool {
        !self.hash_mismatch && self.mismatches.is_empty()
    }
}

fn version_compatible(found: &str) -> bool {
    let major_minor = |v: &str| v.split('.').take(2).map(str::to_owned).collect::<Vec<_>>();
    major_minor(found) == major_minor(TOOLKIT_VERSION)
}

/// Regenerates the outputs recorded in `manifest` under `out_root` and
/// checks them against the recorded checksums.
///
/// Rendering uses the droplet states stored in the manifest, so it does not
/// depend on the random number generators. If the stored config has been
/// edited (its hash no longer matches) the states are stale; the droplets
/// are then re-simulated from the edited config and the report flags the
/// mismatch.
pub fn replay(manifest: &Manifest, out_root: &Path) -> Result<ReplayReport> {
    if manifest.format != MANIFEST_FORMAT || !version_compatible(&manifest.toolkit_version) {
        return Err(Error::Incompatible {
            found: format!("{} (format {})", manifest.toolkit_version, manifest.format),
            expected: format!("{TOOLKIT_VERSION} (format {MANIFEST_FORMAT})"),
        });
    }
    let cfg = &manifest.config;
    cfg.validate()?;
    let hash_mismatch = cfg.hash() != manifest.config_hash;
    let proto = generate_protodrop(cfg.proto)?;
    let root = &manifest.layout.root;
    let mut sim = Simulator::new(&cfg.field, manifest.layout.sequence);

    let mut report = ReplayReport { frames: 0, hash_mismatch, mismatches: Vec::new() };
    for frame in &manifest.frames {
        let input = root.join(&frame.input);
        let src = if frame.error.is_none() || hash_mismatch { Some(read_source(&input)) } else { None };
        if hash_mismatch {
            let dims = src.as_ref().and_then(|s| s.as_ref().ok()).map(|s| s.image.dims());
            let field = sim.field(frame.index, dims)?;
            if frame.error.is_some() {
                continue;
            }
            let src = src.expect("read above")?;
            let field = field.expect("decoded source yields a field");
            let out = render_source(&src, &field, &proto, cfg)?;
            write_file(&out_root.join(&frame.output), &out.rainy)?;
            write_file(&out_root.join(&frame.mask), &out.mask)?;
            check(&mut report, &frame.output, &out.rainy, frame.rainy_sha256.as_deref());
            check(&mut report, &frame.mask, &out.mask, frame.mask_sha256.as_deref());
        } else {
            let Some(src) = src else { continue };
            let src = src?;
            let field = DropField::from_snapshot(frame_config(&cfg.field, frame.state.seed), &frame.state)?;
            let out = render_source(&src, &field, &proto, cfg)?;
            write_file(&out_root.join(&frame.output), &out.rainy)?;
            write_file(&out_root.join(&frame.mask), &out.mask)?;
            check(&mut report, &frame.output, &out.rainy, frame.rainy_sha256.as_deref());
            check(&mut report, &frame.mask, &out.mask, frame.mask_sha256.as_deref());
        }
        if let Some(label) = &frame.label {
            let from = root.join(&label.input);
            let bytes = fs::read(&from).map_err(|e| Error::io(&from, e))?;
            write_file(&out_root.join(&label.output), &bytes)?;
            check(&mut report, &label.output, &bytes, Some(&label.sha256));
        }
        report.frames += 1;
    }
    Ok(report)
}

fn check(report: &mut ReplayReport, name: &str, bytes: &[u8], expected: Option<&str>) {
    if expected != Some(sha256_hex(bytes).as_str()) {
        report.mismatches.push(name.to_string());
    }
}

/// Extra pairings for `compare_datasets`.
#[derive(Debug, Clone, Default)]
pub struct CompareOptions {
    /// Predicted and ground-truth binary mask directories.
    pub masks: Option<(PathBuf, PathBuf)>,
    /// Predicted and ground-truth label-map directories, class count and
    /// ignore label.
    pub labels: Option<(PathBuf, PathBuf, usize, Option<u32>)>,
}

/// One row of a comparison table. Absent measurements are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub name: String,
    #[serde(serialize_with = "ser_opt_db", deserialize_with = "de_opt_db")]
    pub psnr: Option<f64>,
    pub ssim: Option<f64>,
    pub seg: Option<SegStats>,
    pub miou: Option<f64>,
}

fn ser_opt_db<S: serde::Serializer>(v: &Option<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    match v {
        Some(v) => metrics::ser_db(v, s),
        None => s.serialize_none(),
    }
}

fn de_opt_db<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Option<f64>, D::Error> {
    #[derive(Deserialize)]
    struct Wrap(#[serde(deserialize_with = "metrics::de_db")] f64);
    Ok(Option::<Wrap>::deserialize(d)?.map(|w| w.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub rows: Vec<CompareRow>,
    /// Column means over the rows that have the column.
    pub mean: CompareRow,
    /// Files present on only one side, as `a/<path>` or `b/<path>`.
    pub unpaired: Vec<String>,
    /// Pairs that could not be scored, with the reason.
    pub errors: Vec<(String, String)>,
}

impl CompareReport {
    pub fn is_clean(&self) -> bool {
        self.unpaired.is_empty() && self.errors.is_empty()
    }

    pub fn to_csv(&self) -> String {
        let cell = |v: Option<f64>| v.map(|v| format!("{v:.6}")).unwrap_or_default();
        let mut out = String::from("name,PSNR,SSIM,Prec,Rec,F1,IOU,mIOU\n");
        for row in self.rows.iter().chain(std::iter::once(&self.mean)) {
            let seg = row.seg.as_ref();
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                row.name,
                row.psnr.map(metrics::format_db).unwrap_or_default(),
                cell(row.ssim),
                cell(seg.map(|s| s.precision)),
                cell(seg.map(|s| s.recall)),
                cell(seg.map(|s| s.f1)),
                cell(seg.map(|s| s.iou)),
                cell(row.miou),
            ));
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report is plain data")
    }
}

fn image_files(dir: &Path) -> Result<BTreeMap<String, PathBuf>> {
    let mut files = Vec::new();
    for ext in IMAGE_EXTENSIONS {
        files.extend(find_files(dir, &format!("**/*.{ext}"))?);
    }
    files.sort();
    index_by_stem(&files, "files")
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (n, sum) = values.fold((0usize, 0.0), |(n, s), v| (n + 1, s + v));
    (n > 0).then(|| sum / n as f64)
}

/// Scores every image in `dir_b` against the same-stem image in `dir_a`.
pub fn compare_datasets(dir_a: &Path, dir_b: &Path, opts: &CompareOptions) -> Result<CompareReport> {
    let a = image_files(dir_a)?;
    let b = image_files(dir_b)?;
    let mut unpaired: Vec<String> = a.iter().filter(|(s, _)| !b.contains_key(*s)).map(|(_, p)| format!("a/{}", rel_string(p))).collect();
    unpaired.extend(b.iter().filter(|(s, _)| !a.contains_key(*s)).map(|(_, p)| format!("b/{}", rel_string(p))));

    let masks = match &opts.masks {
        Some((pred, gt)) => Some((image_files(pred)?, image_files(gt)?, pred, gt)),
        None => None,
    };
    let labels = match &opts.labels {
        Some((pred, gt, n, ignore)) => Some((image_files(pred)?, image_files(gt)?, pred, gt, *n, *ignore)),
        None => None,
    };

    let stems: Vec<&String> = a.keys().filter(|s| b.contains_key(*s)).collect();
    let scored: Vec<std::result::Result<CompareRow, (String, String)>> = stems
        .par_iter()
        .map(|stem| {
            let score = || -> Result<CompareRow> {
                let ia = ImageBuffer::load(dir_a.join(&a[*stem]))?;
                let ib = ImageBuffer::load(dir_b.join(&b[*stem]))?;
                let r = metrics::report(&ia, &ib)?;
                let seg = match &masks {
                    Some((pm, gm, pd, gd)) => match (pm.get(*stem), gm.get(*stem)) {
                        (Some(p), Some(g)) => Some(metrics::binary_seg_stats(
                            &BinaryMask::load(pd.join(p))?,
                            &BinaryMask::load(gd.join(g))?,
                        )?),
                        _ => return Err(Error::Layout(format!("no mask pair for {stem}"))),
                    },
                    None => None,
                };
                let miou = match &labels {
                    Some((pm, gm, pd, gd, n, ignore)) => match (pm.get(*stem), gm.get(*stem)) {
                        (Some(p), Some(g)) => Some(metrics::multiclass_miou(
                            &LabelMap::load(pd.join(p))?,
                            &LabelMap::load(gd.join(g))?,
                            *n,
                            *ignore,
                        )?),
                        _ => return Err(Error::Layout(format!("no label pair for {stem}"))),
                    },
                    None => None,
                };
                Ok(CompareRow { name: (*stem).clone(), psnr: Some(r.psnr_db), ssim: Some(r.ssim), seg, miou })
            };
            score().map_err(|e| ((*stem).clone(), e.to_string()))
        })
        .collect();

    let mut rows = Vec::new();
    let mut errors = Vec::new();
    for s in scored {
        match s {
            Ok(r) => rows.push(r),
            Err(e) => errors.push(e),
        }
    }

    let seg_mean = |f: fn(&SegStats) -> f64| mean(rows.iter().filter_map(|r| r.seg.as_ref().map(f)));
    let seg = rows.iter().any(|r| r.seg.is_some()).then(|| {
        let (tp, fp, fn_, tn) = rows.iter().filter_map(|r| r.seg).fold((0, 0, 0, 0), |acc, s| {
            (acc.0 + s.tp, acc.1 + s.fp, acc.2 + s.fn_, acc.3 + s.tn)
        });
        SegStats {
            tp,
            fp,
            fn_,
            tn,
            precision: seg_mean(|s| s.precision).unwrap_or(0.0),
            recall: seg_mean(|s| s.recall).unwrap_or(0.0),
            f1: seg_mean(|s| s.f1).unwrap_or(0.0),
            iou: seg_mean(|s| s.iou).unwrap_or(0.0),
        }
    });
    let mean_row = CompareRow {
        name: "mean".to_string(),
        psnr: mean(rows.iter().filter_map(|r| r.psnr)),
        ssim: mean(rows.iter().filter_map(|r| r.ssim)),
        seg,
        miou: mean(rows.iter().filter_map(|r| r.miou)),
    };
    Ok(CompareReport { rows, mean: mean_row, unpaired, errors })
}
