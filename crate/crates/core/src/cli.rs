//! `tppo` command line: `train`, `eval`, `density` and `synth`.
//!
//! Exit codes: 0 on success, 2 for usage errors, 3 for runtime failures.

use std::ffi::OsString;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};

use crate::checkpoint::{ensure_horizons, load_checkpoint, save_checkpoint};
use crate::config::{FlatConfig, TrainConfig};
use crate::data::{
    leave_one_out_split, load_dataset_with, make_windows, resample_interpolate, save_scene, synth_generate, DataSet,
    LoadOptions, ObservationWindow, Scenario, SceneFormat, SplitSpec,
};
use crate::error::Error;
use crate::eval::{density_map, sampling_sweep, write_metrics_csv, DensityGrid};
use crate::kinematics::AttentionKind;
use crate::model::{LvpMode, Sampling};
use crate::training::Trainer;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

pub const CHECKPOINT_FILE: &str = "checkpoint.tppo";
pub const CONFIG_FILE: &str = "config.txt";
pub const TRAIN_LOG_FILE: &str = "train_log.csv";

/// One of the five real sets, or the synthetic scenes written by `tppo synth`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SetName {
    Real(DataSet),
    Synth,
}

impl FromStr for SetName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        if s.eq_ignore_ascii_case("synth") {
            Ok(SetName::Synth)
        } else {
            s.parse().map(SetName::Real)
        }
    }
}

impl fmt::Display for SetName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SetName::Real(d) => f.write_str(d.name()),
            SetName::Synth => f.write_str("synth"),
        }
    }
}

fn parse_pred_len(s: &str) -> Result<usize, String> {
    match s {
        "8" => Ok(8),
        "12" => Ok(12),
        _ => Err(format!("prediction length must be 8 or 12, got '{s}'")),
    }
}

fn parse_positive_count(s: &str) -> Result<usize, String> {
    match s.trim().parse::<usize>() {
        Ok(0) => Err("must be >= 1".into()),
        Ok(n) => Ok(n),
        Err(_) => Err(format!("'{s}' is not a count")),
    }
}

fn parse_positive_f64(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(x) if x > 0.0 && x.is_finite() => Ok(x),
        _ => Err(format!("'{s}' must be a positive number")),
    }
}

#[derive(Debug, Parser)]
#[command(name = "tppo", version, about = "Generative pedestrian trajectory forecasting")]
pub struct Cli {
    /// Worker threads for evaluation; 1 keeps every computation in reference order.
    #[arg(long, global = true, default_value_t = 1, value_parser = parse_positive_count)]
    pub threads: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model on all sets except the held-out one.
    Train(TrainArgs),
    /// Best-of-K ADE/FDE of a checkpoint on one set.
    Eval(EvalArgs),
    /// Histogram of sampled futures for one window.
    Density(DensityArgs),
    /// Write synthetic scenes in the dataset text format.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Directory with one subdirectory per set (eth, hotel, univ, zara1, zara2).
    #[arg(long, env = "TPPO_DATA_DIR")]
    pub data_dir: Option<PathBuf>,
    /// Held-out set, or `synth` to train on the scene files directly inside --data-dir.
    #[arg(long)]
    pub leave_out: Option<SetName>,
    #[arg(long, value_parser = parse_pred_len)]
    pub pred_len: Option<usize>,
    #[arg(long)]
    pub attention: Option<AttentionKind>,
    #[arg(long)]
    pub lvp: Option<LvpMode>,
    #[arg(long, value_parser = parse_positive_count)]
    pub epochs: Option<usize>,
    #[arg(long, value_parser = parse_positive_count)]
    pub batch_size: Option<usize>,
    #[arg(long, value_parser = parse_positive_f64)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Flat `key = value` file, such as the config echo of an earlier run. Flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, env = "TPPO_DATA_DIR")]
    pub data_dir: PathBuf,
    #[arg(long)]
    pub set: SetName,
    /// One count, or a comma list for a sweep such as `1,2,5,10,20`.
    #[arg(long, default_value = "20", value_delimiter = ',', value_parser = parse_positive_count)]
    pub samples: Vec<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Prediction length of the evaluation windows; defaults to the checkpoint's.
    #[arg(long, value_parser = parse_pred_len)]
    pub pred_len: Option<usize>,
    /// Metric CSV path; defaults to `metrics.csv` next to the checkpoint.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DensityArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, env = "TPPO_DATA_DIR")]
    pub data_dir: PathBuf,
    #[arg(long)]
    pub set: SetName,
    /// Window index in load order, or `<scene_id>@<start_frame>`.
    #[arg(long)]
    pub window_id: String,
    #[arg(long, default_value_t = 300, value_parser = parse_positive_count)]
    pub samples: usize,
    /// Grid cell size in meters.
    #[arg(long, default_value_t = 0.1, value_parser = parse_positive_f64)]
    pub cell: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Use latent means and zero noise, so every sample is the same.
    #[arg(long)]
    pub mean: bool,
    #[arg(long)]
    pub out: PathBuf,
    /// Optional PNG rendering of the grid.
    #[arg(long)]
    pub png: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub scenario: Scenario,
    #[arg(long, value_parser = parse_positive_count)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Runtime(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Runtime(e)
    }
}

type CmdResult = Result<(), Failure>;

/// Parses `args` (program name first) and runs the command, returning the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_RUNTIME;
        }
    };
    let result = pool.install(|| match cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Density(a) => cmd_density(a),
        Command::Synth(a) => cmd_synth(a),
    });
    match result {
        Ok(()) => EXIT_OK,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            eprintln!("run with --help for usage");
            EXIT_USAGE
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            EXIT_RUNTIME
        }
    }
}

/// Windows of every scene file in `dir`, resampled to `dt` when the file grid differs.
pub fn load_windows(dir: &Path, obs_len: usize, pred_len: usize, dt: f64) -> Result<Vec<ObservationWindow>, Error> {
    let scenes = load_dataset_with(dir, SceneFormat::TsvFramePedXy, &LoadOptions::default())?;
    let mut out = Vec::new();
    for scene in scenes {
        let scene = if (scene.dt - dt).abs() > 1e-12 {
            resample_interpolate(&scene, dt)?.scene
        } else {
            scene
        };
        out.extend(make_windows(&scene, obs_len, pred_len, 1)?);
    }
    Ok(out)
}

fn set_dir(data_dir: &Path, set: SetName) -> PathBuf {
    match set {
        SetName::Real(d) => data_dir.join(d.dir_name()),
        SetName::Synth => data_dir.to_path_buf(),
    }
}

fn require_dir(dir: &Path) -> CmdResult {
    if dir.is_dir() {
        Ok(())
    } else {
        Err(Failure::Usage(format!("data directory {} does not exist", dir.display())))
    }
}

/// Run settings that live outside [`TrainConfig`].
const RUN_DATA_DIR: &str = "run.data_dir";
const RUN_LEAVE_OUT: &str = "run.leave_out";
const RUN_OUT_DIR: &str = "run.out_dir";

fn cmd_train(a: TrainArgs) -> CmdResult {
    let file = match &a.config {
        Some(p) => FlatConfig::load(p).map_err(|e| Failure::Usage(e.to_string()))?,
        None => FlatConfig::new(),
    };
    let mut cfg = TrainConfig::from_flat(&file).map_err(|e| Failure::Usage(e.to_string()))?;
    let data_dir = a
        .data_dir
        .or_else(|| file.get(RUN_DATA_DIR).map(PathBuf::from))
        .ok_or_else(|| Failure::Usage("--data-dir (or TPPO_DATA_DIR) is required".into()))?;
    let leave_out = match a.leave_out {
        Some(s) => s,
        None => file
            .get(RUN_LEAVE_OUT)
            .ok_or_else(|| Failure::Usage("--leave-out is required".into()))?
            .parse()
            .map_err(|e: Error| Failure::Usage(e.to_string()))?,
    };
    let out_dir = a
        .out_dir
        .or_else(|| file.get(RUN_OUT_DIR).map(PathBuf::from))
        .ok_or_else(|| Failure::Usage("--out-dir is required".into()))?;
    if let Some(v) = a.pred_len {
        cfg.model.pred_len = v;
    }
    if let Some(v) = a.attention {
        cfg.model.attention = v;
    }
    if let Some(v) = a.lvp {
        cfg.model.lvp = v;
    }
    if let Some(v) = a.epochs {
        cfg.epochs = v;
    }
    if let Some(v) = a.batch_size {
        cfg.batch_size = v;
    }
    if let Some(v) = a.lr {
        cfg.adam.lr = v;
    }
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    cfg.split = match leave_out {
        SetName::Real(d) => Some(leave_one_out_split(d.name())?),
        SetName::Synth => None,
    };
    cfg.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    require_dir(&data_dir)?;

    let (obs, pred, dt) = (cfg.model.obs_len, cfg.model.pred_len, cfg.model.dt);
    let windows = match &cfg.split {
        Some(SplitSpec { train_sets, .. }) => {
            let mut ws = Vec::new();
            for set in train_sets {
                let dir = data_dir.join(set.dir_name());
                require_dir(&dir)?;
                ws.extend(load_windows(&dir, obs, pred, dt)?);
            }
            ws
        }
        None => load_windows(&data_dir, obs, pred, dt)?,
    };
    if windows.is_empty() {
        return Err(Failure::Runtime(Error::InvalidArgument(format!(
            "no windows of {} steps found under {}",
            obs + pred,
            data_dir.display()
        ))));
    }

    std::fs::create_dir_all(&out_dir).map_err(|e| Error::io(&out_dir, e))?;
    let mut echo = cfg.to_flat();
    echo.set(RUN_DATA_DIR, data_dir.display());
    echo.set(RUN_LEAVE_OUT, leave_out);
    echo.set(RUN_OUT_DIR, out_dir.display());
    echo.save(&out_dir.join(CONFIG_FILE))?;

    eprintln!("training on {} windows for {} epochs", windows.len(), cfg.epochs);
    let mut trainer = Trainer::new(&windows, &cfg)?;
    for _ in 0..cfg.epochs {
        let r = trainer.run_epoch()?;
        log::info!(
            "epoch {}: d {:.4} g {:.4} variety {:.4} kl {:.4}",
            r.epoch,
            r.d_loss,
            r.g_loss,
            r.variety,
            r.kl
        );
    }
    let (params, log) = trainer.into_parts();
    save_checkpoint(&params, &cfg, &out_dir.join(CHECKPOINT_FILE))?;
    log.save_csv(&out_dir.join(TRAIN_LOG_FILE))?;
    eprintln!("wrote {}", out_dir.display());
    Ok(())
}

fn load_model(path: &Path) -> Result<(crate::model::ModelParams, TrainConfig), Failure> {
    if !path.is_file() {
        return Err(Failure::Usage(format!("checkpoint {} does not exist", path.display())));
    }
    Ok(load_checkpoint(path)?)
}

fn cmd_eval(a: EvalArgs) -> CmdResult {
    let (params, _) = load_model(&a.checkpoint)?;
    let dir = set_dir(&a.data_dir, a.set);
    require_dir(&dir)?;
    let m = &params.config;
    let pred = a.pred_len.unwrap_or(m.pred_len);
    ensure_horizons(m, m.obs_len, pred)?;
    let windows = load_windows(&dir, m.obs_len, pred, m.dt)?;
    let reports = sampling_sweep(&params, &windows, &a.samples, a.seed)?;
    let mut buf = Vec::new();
    let set = a.set.to_string();
    write_metrics_csv(&set, &reports, &mut buf).expect("in-memory write");
    print!("{}", String::from_utf8_lossy(&buf));
    let out = a
        .out
        .unwrap_or_else(|| a.checkpoint.parent().unwrap_or(Path::new(".")).join("metrics.csv"));
    std::fs::write(&out, buf).map_err(|e| Error::io(&out, e))?;
    Ok(())
}

fn find_window(windows: &[ObservationWindow], id: &str) -> Option<usize> {
    if let Ok(i) = id.parse::<usize>() {
        return (i < windows.len()).then_some(i);
    }
    let (scene, frame) = id.rsplit_once('@')?;
    let frame: i64 = frame.parse().ok()?;
    windows.iter().position(|w| w.scene_id == scene && w.start_frame == frame)
}

fn cmd_density(a: DensityArgs) -> CmdResult {
    let (params, _) = load_model(&a.checkpoint)?;
    let dir = set_dir(&a.data_dir, a.set);
    require_dir(&dir)?;
    let m = &params.config;
    let windows = load_windows(&dir, m.obs_len, m.pred_len, m.dt)?;
    let idx = find_window(&windows, &a.window_id)
        .ok_or_else(|| Failure::Usage(format!("unknown window id '{}' ({} windows)", a.window_id, windows.len())))?;
    let sampling = if a.mean { Sampling::Mean } else { Sampling::Random };
    let grid = density_map(&params, &windows[idx], a.samples, a.cell, a.seed, sampling)?;
    grid.save(&a.out)?;
    if let Some(png) = &a.png {
        render_png(&grid, &windows[idx], png)?;
    }
    Ok(())
}

const PIXELS_PER_CELL: u32 = 4;

/// Per-pedestrian heat overlay (one hue per pedestrian, log-scaled intensity) with the
/// ground-truth future in white and the observed segment in grey. North is up.
fn render_png(grid: &DensityGrid, window: &ObservationWindow, path: &Path) -> Result<(), Error> {
    let (n, h, w) = grid.counts.dim();
    let (pw, ph) = (w as u32 * PIXELS_PER_CELL, h as u32 * PIXELS_PER_CELL);
    let mut img = image::RgbImage::new(pw, ph);
    let hue = |p: usize| -> [f64; 3] {
        let a = p as f64 / n.max(1) as f64 * std::f64::consts::TAU;
        [
            0.5 + 0.5 * a.cos(),
            0.5 + 0.5 * (a + 2.094).cos(),
            0.5 + 0.5 * (a + 4.189).cos(),
        ]
    };
    let max = grid.counts.iter().copied().max().unwrap_or(0).max(1) as f64;
    for r in 0..h {
        for c in 0..w {
            let mut rgb = [0.0f64; 3];
            for p in 0..n {
                let v = grid.counts[[p, r, c]] as f64;
                if v > 0.0 {
                    let k = (1.0 + v).ln() / (1.0 + max).ln();
                    let col = hue(p);
                    for d in 0..3 {
                        rgb[d] = (rgb[d] + k * col[d]).min(1.0);
                    }
                }
            }
            let px = image::Rgb(rgb.map(|x| (x * 255.0).round() as u8));
            fill_cell(&mut img, r, c, h, px);
        }
    }
    let mut mark = |traj: ndarray::ArrayView2<f64>, px: image::Rgb<u8>| {
        for q in traj.outer_iter() {
            if let Some((r, c)) = grid.cell_of([q[0], q[1]]) {
                fill_cell(&mut img, r, c, h, px);
            }
        }
    };
    for i in 0..window.num_peds() {
        mark(window.observed.index_axis(ndarray::Axis(0), i), image::Rgb([128, 128, 128]));
        mark(window.future.index_axis(ndarray::Axis(0), i), image::Rgb([255, 255, 255]));
    }
    img.save(path)
        .map_err(|e| Error::io(path, std::io::Error::other(e.to_string())))
}

fn fill_cell(img: &mut image::RgbImage, r: usize, c: usize, h: usize, px: image::Rgb<u8>) {
    let y0 = (h - 1 - r) as u32 * PIXELS_PER_CELL;
    let x0 = c as u32 * PIXELS_PER_CELL;
    for dy in 0..PIXELS_PER_CELL {
        for dx in 0..PIXELS_PER_CELL {
            img.put_pixel(x0 + dx, y0 + dy, px);
        }
    }
}

fn cmd_synth(a: SynthArgs) -> CmdResult {
    let scenes = synth_generate(a.scenario, a.n, a.seed)?;
    std::fs::create_dir_all(&a.out_dir).map_err(|e| Error::io(&a.out_dir, e))?;
    for s in &scenes {
        save_scene(s, &a.out_dir.join(format!("{}.txt", s.scene_id)))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn set_names() {
        assert_eq!("synth".parse::<SetName>().unwrap(), SetName::Synth);
        assert_eq!("zara1".parse::<SetName>().unwrap(), SetName::Real(DataSet::Zara1));
        assert!("FOO".parse::<SetName>().is_err());
    }

    #[test]
    fn sample_lists_parse_through_clap() {
        let parse = |samples: &str| {
            let cli = Cli::try_parse_from(["tppo", "eval", "--checkpoint", "c", "--data-dir", "d", "--set", "synth", "--samples", samples])?;
            match cli.command {
                Command::Eval(a) => Ok::<_, clap::Error>(a.samples),
                _ => unreachable!(),
            }
        };
        assert_eq!(parse("1,2, 5").unwrap(), vec![1, 2, 5]);
        assert_eq!(parse("20").unwrap(), vec![20]);
        assert!(parse("1,0").is_err());
        assert!(parse("x").is_err());
    }

    #[test]
    fn flag_parsers() {
        assert!(parse_pred_len("10").is_err());
        assert!(parse_positive_count("0").is_err());
        assert!(parse_positive_f64("-0.1").is_err());
    }

    #[test]
    fn usage_errors_exit_2() {
        assert_eq!(run(["tppo", "train", "--leave-out", "FOO"]), EXIT_USAGE);
        assert_eq!(run(["tppo", "synth", "--scenario", "warp", "--n", "1", "--out-dir", "x"]), EXIT_USAGE);
        assert_eq!(run(["tppo", "frobnicate"]), EXIT_USAGE);
    }

    #[test]
    fn help_exits_0() {
        assert_eq!(run(["tppo", "--help"]), EXIT_OK);
    }
}
