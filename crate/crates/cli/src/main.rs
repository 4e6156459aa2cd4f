//! `droplens` command-line front end.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use droplens::metrics::format_db;
use droplens::pipeline::{self, CompareOptions, DatasetLayout, Manifest, MANIFEST_FILE};
use droplens::protodrop::generate_protodrop;
use droplens::{Config, Error};

const EXIT_RUNTIME: u8 = 1;
const EXIT_USAGE: u8 = 2;

#[derive(Debug, Parser)]
#[command(name = "droplens", version, about = "Synthesize adherent raindrops on images and score image restoration")]
struct Cli {
    /// Print progress details.
    #[arg(short, long, global = true, conflicts_with = "quiet")]
    verbose: bool,

    /// Print only errors.
    #[arg(short, long, global = true)]
    quiet: bool,

    /// Worker threads for batch commands (default: all cores).
    #[arg(long, global = true, env = "DROPLENS_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct ConfigArgs {
    /// TOML config with [field], [proto] and [render] tables.
    #[arg(short, long, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Override a config key, e.g. `--set field.p_r=0.0005`. Repeatable;
    /// applied after the config file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,

    /// Shorthand for `--set field.seed=N`.
    #[arg(long)]
    seed: Option<u64>,
}

impl ConfigArgs {
    fn resolve(&self) -> droplens::Result<Config> {
        let mut overrides = self.overrides.clone();
        if let Some(seed) = self.seed {
            overrides.push(format!("field.seed={seed}"));
        }
        Config::load(self.config.as_deref(), &overrides)
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate the proto-droplet texture, its sidecar and a channel preview.
    Protodrop {
        #[command(flatten)]
        config: ConfigArgs,
        /// Output texture (16-bit RGBA PNG); the sidecar goes next to it as .json.
        #[arg(short, long, default_value = "protodrop.png")]
        out: PathBuf,
        /// 8-bit channel visualization (default: <out stem>_viz.png).
        #[arg(long)]
        viz: Option<PathBuf>,
        /// Footprint radius in texture pixels (overrides proto.radius_px).
        #[arg(long)]
        radius: Option<f64>,
        /// Apex height over radius, (0, 1] (overrides proto.cap_ratio).
        #[arg(long)]
        cap_ratio: Option<f64>,
        /// Offset pixels per unit slope (overrides proto.refraction_gain).
        #[arg(long, allow_hyphen_values = true)]
        gain: Option<f64>,
        /// Texture side length (overrides proto.resolution).
        #[arg(long)]
        resolution: Option<usize>,
    },
    /// Render rain over one image.
    Preview {
        #[command(flatten)]
        config: ConfigArgs,
        /// Clean input image.
        #[arg(short, long)]
        input: PathBuf,
        /// Rainy output (PNG).
        #[arg(short, long)]
        output: PathBuf,
        /// Droplet mask output (PNG, values 0/255).
        #[arg(short, long)]
        mask: Option<PathBuf>,
    },
    /// Augment a dataset tree and write a replayable manifest.
    Augment {
        #[command(flatten)]
        config: ConfigArgs,
        /// Dataset root.
        #[arg(long)]
        root: PathBuf,
        /// Image glob relative to the root.
        #[arg(long, default_value = "**/*.png")]
        images: String,
        /// Ground-truth glob relative to the root; paired with images by stem.
        #[arg(long)]
        labels: Option<String>,
        /// Treat the images, in sorted order, as one video sequence.
        #[arg(long)]
        sequence: bool,
        /// Output root.
        #[arg(short, long)]
        out: PathBuf,
        /// Exit 0 even if some images failed.
        #[arg(long)]
        keep_going: bool,
    },
    /// Regenerate the outputs of a manifest and verify their checksums.
    Replay {
        /// Manifest file, or the output root that contains manifest.json.
        #[arg(short, long)]
        manifest: PathBuf,
        /// Where to write the regenerated tree.
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Compare two image trees paired by file stem (PSNR, SSIM, optional
    /// segmentation statistics).
    Metrics {
        /// Reference images (e.g. clean).
        #[arg(long)]
        a: PathBuf,
        /// Images to score (e.g. rainy or restored).
        #[arg(long)]
        b: PathBuf,
        /// Predicted binary masks.
        #[arg(long, requires = "masks_gt")]
        masks_pred: Option<PathBuf>,
        /// Ground-truth binary masks.
        #[arg(long, requires = "masks_pred")]
        masks_gt: Option<PathBuf>,
        /// Predicted label maps (8-bit gray class ids).
        #[arg(long, requires_all = ["labels_gt", "classes"])]
        labels_pred: Option<PathBuf>,
        /// Ground-truth label maps.
        #[arg(long, requires = "labels_pred")]
        labels_gt: Option<PathBuf>,
        /// Number of classes in the label maps.
        #[arg(long)]
        classes: Option<usize>,
        /// Label excluded from mIOU.
        #[arg(long)]
        ignore: Option<u32>,
        /// Write the table as CSV here (default: stdout).
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Write the table as JSON here.
        #[arg(long)]
        json: Option<PathBuf>,
    },
}

struct Ui {
    verbose: bool,
    quiet: bool,
}

impl Ui {
    fn info(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            eprintln!("{}", msg.as_ref());
        }
    }

    fn detail(&self, msg: impl AsRef<str>) {
        if self.verbose {
            eprintln!("{}", msg.as_ref());
        }
    }

    fn run_header(&self, cfg: &Config) {
        self.info(format!("seed {} config {}", cfg.field.seed, cfg.hash()));
    }
}

/// A failure and the exit code it maps to.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Param { .. } | Error::Config(_) => EXIT_USAGE,
            _ => EXIT_RUNTIME,
        };
        Failure { code, message: e.to_string() }
    }
}

fn runtime(message: impl Into<String>) -> Failure {
    Failure { code: EXIT_RUNTIME, message: message.into() }
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| runtime(format!("{}: {e}", parent.display())))?;
    }
    std::fs::write(path, bytes).map_err(|e| runtime(format!("{}: {e}", path.display())))
}

fn cmd_protodrop(
    ui: &Ui,
    config: &ConfigArgs,
    out: &Path,
    viz: Option<&Path>,
    proto_flags: [(&str, Option<String>); 4],
) -> Result<(), Failure> {
    let mut args = ConfigArgs { config: config.config.clone(), overrides: config.overrides.clone(), seed: config.seed };
    for (key, value) in proto_flags {
        if let Some(v) = value {
            args.overrides.push(format!("proto.{key}={v}"));
        }
    }
    let cfg = args.resolve()?;
    let tex = generate_protodrop(cfg.proto)?;
    tex.save(out)?;
    let viz = viz.map(Path::to_path_buf).unwrap_or_else(|| {
        let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        out.with_file_name(format!("{stem}_viz.png"))
    });
    tex.save_visualization(&viz)?;
    ui.info(format!(
        "wrote {} ({}x{}, offset scale {:.4}), sidecar {}, preview {}",
        out.display(),
        tex.width(),
        tex.height(),
        tex.offset_scale(),
        droplens::ProtoDropTexture::sidecar_path(out).display(),
        viz.display()
    ));
    Ok(())
}

fn cmd_preview(ui: &Ui, config: &ConfigArgs, input: &Path, output: &Path, mask: Option<&Path>) -> Result<(), Failure> {
    let cfg = config.resolve()?;
    ui.run_header(&cfg);
    let out = pipeline::preview_file(input, &cfg)?;
    write(output, &out.rainy)?;
    if let Some(mask) = mask {
        write(mask, &out.mask)?;
    }
    ui.info(format!("{} droplets -> {}", out.state.droplets.len(), output.display()));
    Ok(())
}

fn cmd_augment(ui: &Ui, config: &ConfigArgs, layout: DatasetLayout, out: &Path, keep_going: bool) -> Result<(), Failure> {
    let cfg = config.resolve()?;
    ui.run_header(&cfg);
    let manifest = pipeline::augment_dataset(&layout, &cfg, out)?;
    for f in &manifest.frames {
        ui.detail(format!("{} -> {} ({} droplets)", f.input, f.output, f.state.droplets.len()));
    }
    let failures: Vec<_> = manifest.failures().collect();
    for f in &failures {
        eprintln!("error: {}: {}", f.input, f.error.as_deref().unwrap_or_default());
    }
    ui.info(format!(
        "{} frames, {} failed, manifest {}",
        manifest.frames.len(),
        failures.len(),
        out.join(MANIFEST_FILE).display()
    ));
    if !failures.is_empty() && !keep_going {
        return Err(runtime(format!("{} of {} images failed", failures.len(), manifest.frames.len())));
    }
    Ok(())
}

fn cmd_replay(ui: &Ui, manifest: &Path, out: &Path) -> Result<(), Failure> {
    let path = if manifest.is_dir() { manifest.join(MANIFEST_FILE) } else { manifest.to_path_buf() };
    let m = Manifest::load(&path)?;
    ui.run_header(&m.config);
    let report = pipeline::replay(&m, out)?;
    if report.hash_mismatch {
        eprintln!(
            "warning: config hash {} does not match the manifest ({}); droplets were re-simulated",
            m.config.hash(),
            m.config_hash
        );
    }
    for name in &report.mismatches {
        eprintln!("mismatch: {name}");
    }
    ui.info(format!("{} frames replayed, {} checksum mismatches", report.frames, report.mismatches.len()));
    if !report.mismatches.is_empty() {
        return Err(runtime("replay did not reproduce the recorded outputs"));
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_metrics(
    ui: &Ui,
    a: &Path,
    b: &Path,
    masks: Option<(PathBuf, PathBuf)>,
    labels: Option<(PathBuf, PathBuf, usize, Option<u32>)>,
    csv: Option<&Path>,
    json: Option<&Path>,
) -> Result<(), Failure> {
    let report = pipeline::compare_datasets(a, b, &CompareOptions { masks, labels })?;
    let table = report.to_csv();
    match csv {
        Some(p) => write(p, table.as_bytes())?,
        None => print!("{table}"),
    }
    if let Some(p) = json {
        write(p, report.to_json().as_bytes())?;
    }
    ui.info(format!(
        "{} pairs, mean PSNR {} dB, mean SSIM {}",
        report.rows.len(),
        report.mean.psnr.map(format_db).unwrap_or_else(|| "-".into()),
        report.mean.ssim.map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".into()),
    ));
    for u in &report.unpaired {
        eprintln!("unpaired: {u}");
    }
    for (name, e) in &report.errors {
        eprintln!("error: {name}: {e}");
    }
    if !report.is_clean() {
        return Err(runtime(format!(
            "{} unpaired files, {} failed pairs",
            report.unpaired.len(),
            report.errors.len()
        )));
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    let ui = Ui { verbose: cli.verbose, quiet: cli.quiet };
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Failure { code: EXIT_USAGE, message: "--threads must be at least 1".into() });
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| runtime(e.to_string()))?;
    }
    match cli.command {
        Command::Protodrop { config, out, viz, radius, cap_ratio, gain, resolution } => cmd_protodrop(
            &ui,
            &config,
            &out,
            viz.as_deref(),
            [
                ("radius_px", radius.map(|v| format!("{v:?}"))),
                ("cap_ratio", cap_ratio.map(|v| format!("{v:?}"))),
                ("refraction_gain", gain.map(|v| format!("{v:?}"))),
                ("resolution", resolution.map(|v| v.to_string())),
            ],
        ),
        Command::Preview { config, input, output, mask } => {
            cmd_preview(&ui, &config, &input, &output, mask.as_deref())
        }
        Command::Augment { config, root, images, labels, sequence, out, keep_going } => {
            let layout = DatasetLayout { root, image_glob: images, label_glob: labels, sequence };
            cmd_augment(&ui, &config, layout, &out, keep_going)
        }
        Command::Replay { manifest, out } => cmd_replay(&ui, &manifest, &out),
        Command::Metrics { a, b, masks_pred, masks_gt, labels_pred, labels_gt, classes, ignore, csv, json } => {
            let masks = masks_pred.zip(masks_gt);
            let labels = match (labels_pred, labels_gt, classes) {
                (Some(p), Some(g), Some(n)) => Some((p, g, n, ignore)),
                _ => None,
            };
            cmd_metrics(&ui, &a, &b, masks, labels, csv.as_deref(), json.as_deref())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
