//! Command-line front end.
//!
//! Every flag can also come from a TOML config file (`--config`), using the
//! flag's long name with underscores. Precedence is flag, then config file,
//! then built-in default. The default worker count can also be set with the
//! `NIGHTSEG_PARALLELISM` environment variable.

use std::ffi::OsString;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::colorspace::ChannelId;
use crate::dataset::{self, image_files, load_dataset};
use crate::error::{Error, Result};
use crate::evaluation::{self, evaluate_dataset, rank_channels};
use crate::imaging::{load_image, load_mask, save_mask, CloudMask, RgbImage};
use crate::segmentation::{segment_fixed_gray, segment_otsu_rb, segment_weighted, Weighting};
use crate::superpixel::SlicParams;
use crate::undistort::{undistort, FisheyeModel, Projection, VirtualCamera};

pub const PARALLELISM_ENV: &str = "NIGHTSEG_PARALLELISM";
pub const DEFAULT_GRAY_THRESHOLD: f64 = 25.0;

pub const EXIT_OK: i32 = 0;
pub const EXIT_PARTIAL: i32 = 1;
pub const EXIT_FATAL: i32 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Superpixel quantization + 2-means
    #[default]
    Proposed,
    /// Otsu threshold on R-B
    OtsuRb,
    /// Fixed luminance threshold
    FixedGray,
}

#[derive(Debug, Parser)]
#[command(name = "nightseg", version, about = "Nighttime sky/cloud segmentation toolkit")]
pub struct Cli {
    /// TOML file supplying defaults for any flag
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

fn parse_channel(s: &str) -> std::result::Result<ChannelId, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_center(s: &str) -> std::result::Result<[f64; 2], String> {
    let parts: Vec<&str> = s.split(',').collect();
    match parts.as_slice() {
        [x, y] => Ok([
            x.trim().parse().map_err(|_| format!("bad x in '{s}'"))?,
            y.trim().parse().map_err(|_| format!("bad y in '{s}'"))?,
        ]),
        _ => Err(format!("expected 'cx,cy', got '{s}'")),
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct SegmentFlags {
    /// Channel token (r, g, b, h, s, v, y, i, q, lstar, astar, bstar,
    /// r-over-b, r-minus-b, norm-bry, chroma, gray) or c1..c16
    #[arg(long, value_parser = parse_channel)]
    pub channel: Option<ChannelId>,
    /// Number of superpixels P
    #[arg(long)]
    pub superpixels: Option<usize>,
    /// SLIC compactness m
    #[arg(long)]
    pub compactness: Option<f64>,
    #[arg(long)]
    pub max_iterations: Option<usize>,
    #[arg(long, value_enum)]
    pub method: Option<Method>,
    /// Gray threshold for the fixed-gray method (0-255)
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Cluster superpixel means with unit weights instead of pixel counts
    #[arg(long)]
    pub unweighted_kmeans: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Segment one image into a sky/cloud mask
    Segment {
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        flags: SegmentFlags,
    },
    /// Segment every PNG/JPEG in a directory
    BatchSegment {
        #[arg(long)]
        input: Option<PathBuf>,
        /// Output directory for masks, summary.csv and manifest.json
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        flags: SegmentFlags,
        #[arg(long)]
        parallelism: Option<usize>,
    },
    /// Score predicted masks against ground truth
    Evaluate {
        #[arg(long)]
        pred: Option<PathBuf>,
        #[arg(long)]
        gt: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        parallelism: Option<usize>,
    },
    /// Rank the sixteen candidate channels by mean ROC area
    RankChannels {
        #[arg(long)]
        images: Option<PathBuf>,
        #[arg(long)]
        gt: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        parallelism: Option<usize>,
    },
    /// Rectify a fisheye capture into a planar view
    Undistort {
        #[arg(long)]
        input: Option<PathBuf>,
        /// Projection center as cx,cy
        #[arg(long, value_parser = parse_center)]
        center: Option<[f64; 2]>,
        /// Radius of the 90 degree circle in pixels
        #[arg(long)]
        radius: Option<f64>,
        #[arg(long)]
        model: Option<Projection>,
        /// Degrees clockwise from north
        #[arg(long, allow_hyphen_values = true)]
        azimuth: Option<f64>,
        /// Degrees above the horizon
        #[arg(long, allow_hyphen_values = true)]
        elevation: Option<f64>,
        #[arg(long)]
        size: Option<usize>,
        #[arg(long)]
        altitude: Option<f64>,
        #[arg(long)]
        half_extent: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Pair images with masks and report cloud-coverage statistics
    DatasetReport {
        #[arg(long)]
        images: Option<PathBuf>,
        #[arg(long)]
        masks: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Contents of a `--config` file. Every key is optional.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub channel: Option<ChannelId>,
    pub superpixels: Option<usize>,
    pub compactness: Option<f64>,
    pub max_iterations: Option<usize>,
    pub method: Option<Method>,
    pub threshold: Option<f64>,
    pub unweighted_kmeans: Option<bool>,
    pub parallelism: Option<usize>,
    pub input: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub pred: Option<PathBuf>,
    pub gt: Option<PathBuf>,
    pub images: Option<PathBuf>,
    pub masks: Option<PathBuf>,
    pub center: Option<[f64; 2]>,
    pub radius: Option<f64>,
    pub model: Option<Projection>,
    pub azimuth: Option<f64>,
    pub elevation: Option<f64>,
    pub size: Option<usize>,
    pub altitude: Option<f64>,
    pub half_extent: Option<f64>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::InvalidParams(format!("{}: {e}", path.display())))
    }
}

/// Effective segmentation settings after precedence resolution.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub channel: ChannelId,
    pub superpixels: usize,
    pub compactness: f64,
    pub max_iterations: usize,
    pub method: Method,
    pub threshold: f64,
    pub weighting: Weighting,
    pub parallelism: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let slic = SlicParams::default();
        Self {
            channel: ChannelId::RMinusB,
            superpixels: slic.target_count,
            compactness: slic.compactness,
            max_iterations: slic.max_iterations,
            method: Method::Proposed,
            threshold: DEFAULT_GRAY_THRESHOLD,
            weighting: Weighting::PixelCount,
            parallelism: default_parallelism(),
        }
    }
}

impl RunConfig {
    pub fn resolve(flags: &SegmentFlags, parallelism: Option<usize>, file: &ConfigFile) -> Self {
        let d = Self::default();
        let unweighted = flags.unweighted_kmeans || file.unweighted_kmeans.unwrap_or(false);
        Self {
            channel: flags.channel.or(file.channel).unwrap_or(d.channel),
            superpixels: flags.superpixels.or(file.superpixels).unwrap_or(d.superpixels),
            compactness: flags.compactness.or(file.compactness).unwrap_or(d.compactness),
            max_iterations: flags.max_iterations.or(file.max_iterations).unwrap_or(d.max_iterations),
            method: flags.method.or(file.method).unwrap_or(d.method),
            threshold: flags.threshold.or(file.threshold).unwrap_or(d.threshold),
            weighting: if unweighted { Weighting::Uniform } else { d.weighting },
            parallelism: parallelism.or(file.parallelism).unwrap_or(d.parallelism),
        }
    }

    pub fn slic(&self) -> SlicParams {
        SlicParams {
            target_count: self.superpixels,
            compactness: self.compactness,
            max_iterations: self.max_iterations,
            value_scale: None,
        }
    }

    /// Runs the configured method on one image.
    pub fn segment(&self, img: &RgbImage) -> Result<CloudMask> {
        match self.method {
            Method::Proposed => segment_weighted(img, self.channel, &self.slic(), self.weighting),
            Method::OtsuRb => segment_otsu_rb(img),
            Method::FixedGray => segment_fixed_gray(img, self.threshold),
        }
    }
}

/// Worker count: `NIGHTSEG_PARALLELISM` if set and valid, else the number of
/// available CPUs.
pub fn default_parallelism() -> usize {
    std::env::var(PARALLELISM_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

#[derive(Debug, Serialize)]
struct Failure {
    input: String,
    error: String,
}

#[derive(Debug, Serialize)]
struct Manifest<'a, C: Serialize> {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    config_file: Option<String>,
    config: &'a C,
    inputs: Vec<String>,
    outputs: Vec<String>,
    failures: Vec<Failure>,
    created_unix: u64,
}

impl<'a, C: Serialize> Manifest<'a, C> {
    fn new(command: &'static str, config_file: Option<&Path>, config: &'a C) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command,
            config_file: config_file.map(|p| p.display().to_string()),
            config,
            inputs: Vec::new(),
            outputs: Vec::new(),
            failures: Vec::new(),
            created_unix: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
        }
    }

    fn write(&self, path: &Path) -> Result<()> {
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        serde_json::to_writer_pretty(BufWriter::new(f), self).map_err(|e| Error::io(path, std::io::Error::other(e)))
    }
}

/// `report.csv` -> `report.manifest.json`
pub fn manifest_path(report: &Path) -> PathBuf {
    report.with_extension("manifest.json")
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn required<T>(value: Option<T>, name: &str) -> Result<T> {
    value.ok_or_else(|| Error::InvalidParams(format!("missing required option --{name}")))
}

fn pool(threads: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::InvalidParams(format!("thread pool: {e}")))
}

fn display(p: &Path) -> String {
    p.display().to_string()
}

fn exit_for(failures: usize) -> i32 {
    if failures == 0 {
        EXIT_OK
    } else {
        EXIT_PARTIAL
    }
}

/// Parses `argv` (including the program name) and runs the subcommand.
/// Returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_FATAL } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_FATAL
        }
    }
}

fn dispatch(cli: Cli) -> Result<i32> {
    let file = match &cli.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    let config_path = cli.config.as_deref();
    match cli.command {
        Command::Segment { input, out, flags } => {
            let cfg = RunConfig::resolve(&flags, None, &file);
            warn_default_threshold(&cfg, &flags, &file);
            let input = required(input.or(file.input.clone()), "input")?;
            let out = required(out.or(file.out.clone()), "out")?;
            let mask = cfg.segment(&load_image(&input)?)?;
            save_mask(&mask, &out)?;
            log::info!(
                "{} -> {} ({} cloud px)",
                input.display(),
                out.display(),
                mask.cloud_count()
            );
            Ok(EXIT_OK)
        }
        Command::BatchSegment {
            input,
            out,
            flags,
            parallelism,
        } => {
            let cfg = RunConfig::resolve(&flags, parallelism, &file);
            warn_default_threshold(&cfg, &flags, &file);
            let input = required(input.or(file.input.clone()), "input")?;
            let out = required(out.or(file.out.clone()), "out")?;
            batch_segment(&input, &out, &cfg, config_path)
        }
        Command::Evaluate {
            pred,
            gt,
            out,
            parallelism,
        } => {
            let pred = required(pred.or(file.pred.clone()), "pred")?;
            let gt = required(gt.or(file.gt.clone()), "gt")?;
            let out = required(out.or(file.out.clone()), "out")?;
            let threads = parallelism.or(file.parallelism).unwrap_or_else(default_parallelism);
            let eval = pool(threads)?.install(|| evaluate_dataset(&pred, &gt))?;
            evaluation::write_metrics_csv(create(&out)?, &eval)?;

            let settings = serde_json::json!({ "pred": display(&pred), "gt": display(&gt), "parallelism": threads });
            let mut m = Manifest::new("evaluate", config_path, &settings);
            m.inputs = eval.rows.iter().map(|(k, _)| k.clone()).collect();
            m.outputs = vec![display(&out)];
            m.failures = eval
                .problems
                .iter()
                .map(|(k, e)| Failure {
                    input: k.clone(),
                    error: e.clone(),
                })
                .collect();
            m.write(&manifest_path(&out))?;
            let a = &eval.aggregate;
            println!(
                "images={} precision={:.4} recall={:.4} fscore={:.4} error={:.4}",
                a.images, a.precision, a.recall, a.fscore, a.error_rate
            );
            Ok(exit_for(eval.problems.len()))
        }
        Command::RankChannels {
            images,
            gt,
            out,
            parallelism,
        } => {
            let images = required(images.or(file.images.clone()), "images")?;
            let gt = required(gt.or(file.gt.clone()), "gt")?;
            let out = required(out.or(file.out.clone()), "out")?;
            let threads = parallelism.or(file.parallelism).unwrap_or_else(default_parallelism);
            let Ranked {
                ranking,
                used,
                failures,
            } = pool(threads)?.install(|| rank_directory(&images, &gt))?;
            evaluation::write_ranking_csv(create(&out)?, &ranking)?;

            let settings =
                serde_json::json!({ "images": display(&images), "gt": display(&gt), "parallelism": threads });
            let mut m = Manifest::new("rank-channels", config_path, &settings);
            m.inputs = used;
            m.outputs = vec![display(&out)];
            let n_fail = failures.len();
            m.failures = failures;
            m.write(&manifest_path(&out))?;
            for (i, (c, area)) in ranking.iter().take(3).enumerate() {
                println!("{}. {} (c{}) {:.4}", i + 1, c, c.index().unwrap_or(0), area);
            }
            Ok(exit_for(n_fail))
        }
        Command::Undistort {
            input,
            center,
            radius,
            model,
            azimuth,
            elevation,
            size,
            altitude,
            half_extent,
            out,
        } => {
            let input = required(input.or(file.input.clone()), "input")?;
            let out = required(out.or(file.out.clone()), "out")?;
            let [cx, cy] = required(center.or(file.center), "center")?;
            let radius = required(radius.or(file.radius), "radius")?;
            let projection = model.or(file.model).unwrap_or_default();
            let defaults = VirtualCamera::default();
            let cam = VirtualCamera {
                plane_altitude: altitude.or(file.altitude).unwrap_or(defaults.plane_altitude),
                out_size: size.or(file.size).unwrap_or(defaults.out_size),
                half_extent: half_extent.or(file.half_extent).unwrap_or(defaults.half_extent),
                ..VirtualCamera::from_angles(
                    azimuth.or(file.azimuth).unwrap_or(0.0),
                    elevation.or(file.elevation).unwrap_or(90.0),
                )
            };
            let fisheye = FisheyeModel::new((cx, cy), radius, projection);
            let rect = undistort(&load_image(&input)?, &fisheye, &cam)?;
            rect.image.save_png(&out)?;
            if rect.out_of_field > 0.0 {
                log::warn!(
                    "{:.2}% of the view lies outside the lens field",
                    100.0 * rect.out_of_field
                );
            }
            Ok(EXIT_OK)
        }
        Command::DatasetReport { images, masks, out } => {
            let images = required(images.or(file.images.clone()), "images")?;
            let masks = required(masks.or(file.masks.clone()), "masks")?;
            let out = required(out.or(file.out.clone()), "out")?;
            let ds = load_dataset(&images, &masks)?;
            let hist = dataset::entry_histogram(&ds.entries)?;
            dataset::write_histogram_csv(create(&out)?, &hist)?;
            let entries_path = out.with_extension("entries.csv");
            dataset::write_entries_csv(create(&entries_path)?, &ds.entries)?;

            let settings = serde_json::json!({ "images": display(&images), "masks": display(&masks) });
            let mut m = Manifest::new("dataset-report", config_path, &settings);
            m.inputs = ds.entries.iter().map(|e| e.key.clone()).collect();
            m.outputs = vec![display(&out), display(&entries_path)];
            m.failures = ds
                .issues
                .iter()
                .map(|i| Failure {
                    input: i.key.clone(),
                    error: i.problem.clone(),
                })
                .collect();
            m.write(&manifest_path(&out))?;
            println!("{} images, {} issues", hist.total, ds.issues.len());
            Ok(exit_for(ds.issues.len()))
        }
    }
}

fn warn_default_threshold(cfg: &RunConfig, flags: &SegmentFlags, file: &ConfigFile) {
    if cfg.method == Method::FixedGray && flags.threshold.is_none() && file.threshold.is_none() {
        log::warn!("fixed-gray without --threshold; using the non-authoritative default {DEFAULT_GRAY_THRESHOLD}");
    }
}

fn batch_segment(input: &Path, out: &Path, cfg: &RunConfig, config_path: Option<&Path>) -> Result<i32> {
    let files = image_files(input)?;
    if files.is_empty() {
        return Err(Error::NoValidImages);
    }
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let results: Vec<(PathBuf, Result<(PathBuf, f64)>)> = pool(cfg.parallelism)?.install(|| {
        files
            .par_iter()
            .map(|f| {
                let r = (|| {
                    let stem = f
                        .file_stem()
                        .and_then(|s| s.to_str())
                        .ok_or_else(|| Error::InvalidParams(format!("bad file name {}", f.display())))?;
                    let mask = cfg.segment(&load_image(f)?)?;
                    let dest = out.join(format!("{stem}.png"));
                    save_mask(&mask, &dest)?;
                    Ok((dest, mask.cloud_count() as f64 / mask.len() as f64))
                })();
                (f.clone(), r)
            })
            .collect()
    });

    let summary_path = out.join("summary.csv");
    let mut w = csv::Writer::from_writer(create(&summary_path)?);
    let csv_err = |e: csv::Error| Error::io(&summary_path, std::io::Error::other(e.to_string()));
    w.write_record(["image", "mask", "cloud_fraction", "status"])
        .map_err(csv_err)?;
    let mut manifest = Manifest::new("batch-segment", config_path, cfg);
    for (src, r) in &results {
        manifest.inputs.push(display(src));
        match r {
            Ok((dest, frac)) => {
                w.write_record([display(src), display(dest), format!("{frac:.6}"), "ok".into()])
                    .map_err(csv_err)?;
                manifest.outputs.push(display(dest));
            }
            Err(e) => {
                log::error!("{}: {e}", src.display());
                w.write_record([display(src), String::new(), String::new(), e.to_string()])
                    .map_err(csv_err)?;
                manifest.failures.push(Failure {
                    input: display(src),
                    error: e.to_string(),
                });
            }
        }
    }
    w.flush().map_err(|e| Error::io(&summary_path, e))?;
    manifest.outputs.push(display(&summary_path));
    manifest.write(&out.join("manifest.json"))?;

    let failed = manifest.failures.len();
    println!("{} of {} images segmented", results.len() - failed, results.len());
    Ok(if failed == results.len() {
        EXIT_FATAL
    } else {
        exit_for(failed)
    })
}

struct Ranked {
    ranking: Vec<(ChannelId, f64)>,
    used: Vec<String>,
    failures: Vec<Failure>,
}

/// Loads every paired image/mask and ranks the candidate channels.
fn rank_directory(images: &Path, gt: &Path) -> Result<Ranked> {
    let ds = load_dataset(images, gt)?;
    let mut failures: Vec<Failure> = ds
        .issues
        .iter()
        .map(|i| Failure {
            input: i.key.clone(),
            error: i.problem.clone(),
        })
        .collect();
    let loaded: Vec<(String, Result<(RgbImage, CloudMask)>)> = ds
        .entries
        .par_iter()
        .map(|e| {
            let pair = load_image(&e.image_path).and_then(|img| Ok((img, load_mask(&e.mask_path)?)));
            (e.key.clone(), pair)
        })
        .collect();
    let mut pairs = Vec::new();
    let mut used = Vec::new();
    for (key, r) in loaded {
        match r {
            Ok(p) => {
                used.push(key);
                pairs.push(p);
            }
            Err(e) => failures.push(Failure {
                input: key,
                error: e.to_string(),
            }),
        }
    }
    Ok(Ranked {
        ranking: rank_channels(&pairs)?,
        used,
        failures,
    })
}
