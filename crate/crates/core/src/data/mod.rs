//! Trajectory scenes on disk and in memory, and the observation windows cut from them.

mod synth;

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ndarray::Array3;

use crate::error::{Error, Result};

pub use synth::{synth_generate, Scenario, SYNTH_FRAMES};

pub type PedId = u64;

/// Seconds between consecutive annotated frames in the ETH/UCY sets.
pub const DEFAULT_DT: f64 = 0.4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackPoint {
    pub frame: i64,
    pub pos: [f64; 2],
}

/// Time-indexed pedestrian positions of one scene, in world meters.
///
/// The time of a point is `frame * dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryScene {
    pub scene_id: String,
    pub dt: f64,
    pub tracks: BTreeMap<PedId, Vec<TrackPoint>>,
}

impl TrajectoryScene {
    pub fn new(scene_id: impl Into<String>, dt: f64) -> Self {
        Self {
            scene_id: scene_id.into(),
            dt,
            tracks: BTreeMap::new(),
        }
    }

    pub fn num_points(&self) -> usize {
        self.tracks.values().map(Vec::len).sum()
    }

    /// Checks ordering within tracks, a positive `dt` and finite positions.
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidArgument(format!("scene {}: dt must be > 0", self.scene_id)));
        }
        for (ped, track) in &self.tracks {
            if track.windows(2).any(|w| w[1].frame <= w[0].frame) {
                return Err(Error::InvalidArgument(format!(
                    "scene {}: frames of pedestrian {ped} are not strictly increasing",
                    self.scene_id
                )));
            }
            if track.iter().any(|p| !p.pos.iter().all(|x| x.is_finite())) {
                return Err(Error::NonFinite(format!("scene {} pedestrian {ped}", self.scene_id)));
            }
        }
        Ok(())
    }
}

/// One instance: co-present pedestrians with observed and future segments.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationWindow {
    pub scene_id: String,
    pub start_frame: i64,
    pub obs_len: usize,
    pub pred_len: usize,
    pub pedestrians: Vec<PedId>,
    /// `[n_peds x obs_len x 2]`
    pub observed: Array3<f64>,
    /// `[n_peds x pred_len x 2]`
    pub future: Array3<f64>,
}

impl ObservationWindow {
    pub fn num_peds(&self) -> usize {
        self.pedestrians.len()
    }

    pub fn has_future(&self) -> bool {
        self.future.dim() == (self.num_peds(), self.pred_len, 2) && self.pred_len > 0
    }

    /// Observed followed by future positions, `[n x (obs_len + pred_len) x 2]`.
    pub fn full_trajectory(&self) -> Array3<f64> {
        ndarray::concatenate(ndarray::Axis(1), &[self.observed.view(), self.future.view()])
            .expect("observed/future pedestrian counts agree")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SceneFormat {
    /// Whitespace separated `frame ped_id x y` rows.
    #[default]
    TsvFramePedXy,
}

#[derive(Debug, Clone)]
pub struct LoadOptions {
    /// Seconds per step of the frame grid found in the file.
    pub dt: f64,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self { dt: DEFAULT_DT }
    }
}

/// Loads every scene under `path`: a single file, or every regular file of a directory
/// (sorted by name, not recursive).
pub fn load_dataset(path: &Path, fmt: SceneFormat) -> Result<Vec<TrajectoryScene>> {
    load_dataset_with(path, fmt, &LoadOptions::default())
}

pub fn load_dataset_with(path: &Path, fmt: SceneFormat, opts: &LoadOptions) -> Result<Vec<TrajectoryScene>> {
    let files = scene_files(path)?;
    let mut scenes = Vec::new();
    for file in files {
        let text = fs::read_to_string(&file).map_err(|e| Error::io(&file, e))?;
        let id = file
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        if let Some(scene) = parse_scene(&text, &id, &file, fmt, opts)? {
            scenes.push(scene);
        }
    }
    Ok(scenes)
}

fn scene_files(path: &Path) -> Result<Vec<PathBuf>> {
    let meta = fs::metadata(path).map_err(|e| Error::io(path, e))?;
    if meta.is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    let mut files = Vec::new();
    for entry in fs::read_dir(path).map_err(|e| Error::io(path, e))? {
        let entry = entry.map_err(|e| Error::io(path, e))?;
        let p = entry.path();
        if p.is_file() && !p.file_name().is_some_and(|n| n.to_string_lossy().starts_with('.')) {
            files.push(p);
        }
    }
    files.sort();
    Ok(files)
}

fn parse_integral(field: &str) -> Option<i64> {
    let v: f64 = field.parse().ok()?;
    (v.is_finite() && v.fract() == 0.0).then_some(v as i64)
}

/// Parses one scene file. Frame numbers are rebased to start at zero and divided by
/// their common step, so a file annotated every 10 frames maps onto a unit grid.
pub fn parse_scene(
    text: &str,
    scene_id: &str,
    origin: &Path,
    _fmt: SceneFormat,
    opts: &LoadOptions,
) -> Result<Option<TrajectoryScene>> {
    let perr = |line: usize, msg: String| Error::Parse {
        path: origin.to_path_buf(),
        line,
        msg,
    };
    let mut rows: Vec<(usize, i64, PedId, [f64; 2])> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 4 {
            return Err(perr(lineno, format!("expected 4 fields (frame ped_id x y), found {}", fields.len())));
        }
        let frame = parse_integral(fields[0]).ok_or_else(|| perr(lineno, format!("bad frame '{}'", fields[0])))?;
        let ped = parse_integral(fields[1])
            .filter(|p| *p >= 0)
            .ok_or_else(|| perr(lineno, format!("bad pedestrian id '{}'", fields[1])))?;
        let mut pos = [0.0; 2];
        for (k, f) in fields[2..].iter().enumerate() {
            pos[k] = f
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| perr(lineno, format!("bad coordinate '{f}'")))?;
        }
        rows.push((lineno, frame, ped as PedId, pos));
    }
    if rows.is_empty() {
        return Ok(None);
    }

    let min_frame = rows.iter().map(|r| r.1).min().unwrap_or(0);
    let step = rows.iter().fold(0i64, |g, r| gcd(g, r.1 - min_frame)).max(1);

    let mut scene = TrajectoryScene::new(scene_id, opts.dt);
    for &(_, frame, ped, pos) in &rows {
        scene.tracks.entry(ped).or_default().push(TrackPoint {
            frame: (frame - min_frame) / step,
            pos,
        });
    }
    for (ped, track) in scene.tracks.iter_mut() {
        track.sort_by_key(|p| p.frame);
        if let Some(w) = track.windows(2).find(|w| w[0].frame == w[1].frame) {
            let raw = w[0].frame * step + min_frame;
            let line = rows.iter().filter(|r| r.2 == *ped && r.1 == raw).map(|r| r.0).nth(1).unwrap_or(0);
            return Err(perr(line, format!("duplicate observation of pedestrian {ped} at frame {raw}")));
        }
    }
    Ok(Some(scene))
}

fn gcd(a: i64, b: i64) -> i64 {
    let (mut a, mut b) = (a.abs(), b.abs());
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Writes a scene as `frame ped_id x y` rows ordered by frame, then pedestrian.
pub fn write_scene(scene: &TrajectoryScene, out: &mut impl std::io::Write) -> std::io::Result<()> {
    let mut rows: Vec<(i64, PedId, [f64; 2])> = scene
        .tracks
        .iter()
        .flat_map(|(ped, t)| t.iter().map(move |p| (p.frame, *ped, p.pos)))
        .collect();
    rows.sort_by_key(|r| (r.0, r.1));
    for (frame, ped, [x, y]) in rows {
        writeln!(out, "{frame}\t{ped}\t{x}\t{y}")?;
    }
    Ok(())
}

pub fn save_scene(scene: &TrajectoryScene, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    write_scene(scene, &mut buf).map_err(|e| Error::io(path, e))?;
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&buf).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Resampled {
    pub scene: TrajectoryScene,
    /// Tracks with fewer than two samples, removed from the output.
    pub dropped_tracks: usize,
}

const GRID_EPS: f64 = 1e-9;

/// Linearly interpolates every track onto a uniform `dt` grid, without extrapolating
/// past a track's first or last sample. Tracks are never mixed.
pub fn resample_interpolate(scene: &TrajectoryScene, dt: f64) -> Result<Resampled> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidArgument(format!("resample dt must be > 0, got {dt}")));
    }
    scene.validate()?;
    let mut out = TrajectoryScene::new(scene.scene_id.clone(), dt);
    let mut dropped = 0;
    for (ped, track) in &scene.tracks {
        if track.len() < 2 {
            dropped += 1;
            continue;
        }
        let times: Vec<f64> = track.iter().map(|p| p.frame as f64 * scene.dt).collect();
        let first = (times[0] / dt - GRID_EPS).ceil() as i64;
        let last = (times[times.len() - 1] / dt + GRID_EPS).floor() as i64;
        let mut seg = 0;
        let mut points = Vec::with_capacity((last - first + 1).max(0) as usize);
        for f in first..=last {
            let t = f as f64 * dt;
            while seg + 2 < times.len() && times[seg + 1] < t - GRID_EPS * dt {
                seg += 1;
            }
            let (t0, t1) = (times[seg], times[seg + 1]);
            let (p0, p1) = (track[seg].pos, track[seg + 1].pos);
            let pos = if (t - t0).abs() <= GRID_EPS * dt.max(1.0) {
                p0
            } else if (t - t1).abs() <= GRID_EPS * dt.max(1.0) {
                p1
            } else {
                let a = ((t - t0) / (t1 - t0)).clamp(0.0, 1.0);
                [p0[0] + a * (p1[0] - p0[0]), p0[1] + a * (p1[1] - p0[1])]
            };
            points.push(TrackPoint { frame: f, pos });
        }
        if points.is_empty() {
            dropped += 1;
            continue;
        }
        out.tracks.insert(*ped, points);
    }
    if dropped > 0 {
        log::warn!("scene {}: dropped {dropped} track(s) with fewer than two samples", scene.scene_id);
    }
    Ok(Resampled {
        scene: out,
        dropped_tracks: dropped,
    })
}

/// Cuts every `stride`-th window of `obs_len + pred_len` frames. A pedestrian is kept only
/// when present at every frame of the window; empty windows are dropped.
pub fn make_windows(
    scene: &TrajectoryScene,
    obs_len: usize,
    pred_len: usize,
    stride: usize,
) -> Result<Vec<ObservationWindow>> {
    if obs_len < 2 {
        return Err(Error::InvalidArgument(format!("obs_len must be >= 2, got {obs_len}")));
    }
    if pred_len < 1 || stride < 1 {
        return Err(Error::InvalidArgument("pred_len and stride must be >= 1".into()));
    }
    let total = (obs_len + pred_len) as i64;
    let lookup: BTreeMap<PedId, BTreeMap<i64, [f64; 2]>> = scene
        .tracks
        .iter()
        .map(|(p, t)| (*p, t.iter().map(|q| (q.frame, q.pos)).collect()))
        .collect();
    let (Some(lo), Some(hi)) = (
        scene.tracks.values().filter_map(|t| t.first()).map(|p| p.frame).min(),
        scene.tracks.values().filter_map(|t| t.last()).map(|p| p.frame).max(),
    ) else {
        return Ok(Vec::new());
    };

    let mut windows = Vec::new();
    let mut start = lo;
    while start + total - 1 <= hi {
        let frames = start..start + total;
        let present: Vec<(PedId, Vec<[f64; 2]>)> = lookup
            .iter()
            .filter_map(|(ped, pts)| {
                let seq: Vec<[f64; 2]> = pts.range(frames.clone()).map(|(_, p)| *p).collect();
                (seq.len() == total as usize).then_some((*ped, seq))
            })
            .collect();
        if !present.is_empty() {
            let n = present.len();
            let mut observed = Array3::zeros((n, obs_len, 2));
            let mut future = Array3::zeros((n, pred_len, 2));
            for (i, (_, seq)) in present.iter().enumerate() {
                for (t, p) in seq.iter().enumerate() {
                    let (arr, tt) = if t < obs_len { (&mut observed, t) } else { (&mut future, t - obs_len) };
                    arr[[i, tt, 0]] = p[0];
                    arr[[i, tt, 1]] = p[1];
                }
            }
            windows.push(ObservationWindow {
                scene_id: scene.scene_id.clone(),
                start_frame: start,
                obs_len,
                pred_len,
                pedestrians: present.iter().map(|(p, _)| *p).collect(),
                observed,
                future,
            });
        }
        start += stride as i64;
    }
    Ok(windows)
}

/// The five ETH/UCY sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DataSet {
    Eth,
    Hotel,
    Univ,
    Zara1,
    Zara2,
}

impl DataSet {
    pub const ALL: [DataSet; 5] = [DataSet::Eth, DataSet::Hotel, DataSet::Univ, DataSet::Zara1, DataSet::Zara2];

    pub fn name(self) -> &'static str {
        match self {
            DataSet::Eth => "ETH",
            DataSet::Hotel => "HOTEL",
            DataSet::Univ => "UNIV",
            DataSet::Zara1 => "ZARA1",
            DataSet::Zara2 => "ZARA2",
        }
    }

    /// Subdirectory of a data directory holding this set's scene files.
    pub fn dir_name(self) -> String {
        self.name().to_lowercase()
    }
}

impl fmt::Display for DataSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DataSet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        DataSet::ALL
            .into_iter()
            .find(|d| d.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::UnknownSet {
                name: s.to_string(),
                valid: DataSet::ALL.map(DataSet::name).join(", "),
            })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitSpec {
    pub train_sets: Vec<DataSet>,
    pub test_set: DataSet,
}

/// Train on the four sets other than `test_set`.
pub fn leave_one_out_split(test_set: &str) -> Result<SplitSpec> {
    let test: DataSet = test_set.parse()?;
    Ok(SplitSpec {
        train_sets: DataSet::ALL.into_iter().filter(|d| *d != test).collect(),
        test_set: test,
    })
}
