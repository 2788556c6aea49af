//! Displacement metrics, best-of-K evaluation, sample-count sweeps, density maps and the
//! constant-velocity baseline.

use std::io::Write;
use std::path::Path;

use ndarray::{s, Array2, Array3, ArrayView3, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::data::ObservationWindow;
use crate::error::{Error, Result};
use crate::model::{sample_futures, LatentSource, ModelParams, PredictionSample, Sampling};

fn check_pair(pred: &ArrayView3<f64>, gt: &ArrayView3<f64>) -> Result<()> {
    if pred.dim() != gt.dim() {
        return Err(Error::Shape(format!("prediction {:?} vs ground truth {:?}", pred.dim(), gt.dim())));
    }
    let (n, t, d) = pred.dim();
    if n == 0 || t == 0 || d != 2 {
        return Err(Error::Shape(format!("expected [n x T x 2] with n, T >= 1, got {:?}", pred.dim())));
    }
    Ok(())
}

/// `[n x T]` Euclidean distances.
fn step_errors(pred: &ArrayView3<f64>, gt: &ArrayView3<f64>) -> Array2<f64> {
    let (n, t, _) = pred.dim();
    Array2::from_shape_fn((n, t), |(i, k)| {
        (pred[[i, k, 0]] - gt[[i, k, 0]]).hypot(pred[[i, k, 1]] - gt[[i, k, 1]])
    })
}

/// Average displacement error over pedestrians and steps.
pub fn ade(pred: ArrayView3<f64>, gt: ArrayView3<f64>) -> Result<f64> {
    check_pair(&pred, &gt)?;
    Ok(step_errors(&pred, &gt).mean().expect("non-empty"))
}

/// Final displacement error averaged over pedestrians.
pub fn fde(pred: ArrayView3<f64>, gt: ArrayView3<f64>) -> Result<f64> {
    check_pair(&pred, &gt)?;
    Ok(step_errors(&pred, &gt).column(pred.dim().1 - 1).mean().expect("non-empty"))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricReport {
    pub ade: f64,
    pub fde: f64,
    pub k: usize,
    pub pred_len: usize,
    pub n_pedestrians: usize,
}

pub const METRIC_HEADER: &str = "set,k,pred_len,ade,fde,n_peds";

pub fn write_metrics_csv(set: &str, reports: &[MetricReport], out: &mut impl Write) -> std::io::Result<()> {
    writeln!(out, "{METRIC_HEADER}")?;
    for r in reports {
        writeln!(out, "{set},{},{},{:.6},{:.6},{}", r.k, r.pred_len, r.ade, r.fde, r.n_pedestrians)?;
    }
    Ok(())
}

/// Independent generator stream for one sample of one window. Streams for different
/// `(seed, window, sample)` triples never overlap, so prefixes of a sample set are nested.
pub fn sample_rng(seed: u64, window: u64, sample: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&window.to_le_bytes());
    key[16..24].copy_from_slice(&sample.to_le_bytes());
    key[24..].copy_from_slice(b"tppo.smp");
    ChaCha8Rng::from_seed(key)
}

/// Per-pedestrian ADE and FDE of each sample: `[m x n]` each.
fn per_sample_errors(gt: ArrayView3<f64>, samples: &[Array3<f64>]) -> Result<(Array2<f64>, Array2<f64>)> {
    let (n, t, _) = gt.dim();
    let mut a = Array2::zeros((samples.len(), n));
    let mut f = Array2::zeros((samples.len(), n));
    for (s, p) in samples.iter().enumerate() {
        check_pair(&p.view(), &gt)?;
        let e = step_errors(&p.view(), &gt);
        a.row_mut(s).assign(&e.mean_axis(Axis(1)).expect("T >= 1"));
        f.row_mut(s).assign(&e.column(t - 1));
    }
    Ok((a, f))
}

/// Sums over pedestrians of the best-of-`k` ADE and the FDE of the ADE-selected sample,
/// for each `k` in `ks`, using the first `k` samples. Ties keep the earliest sample.
pub fn best_of_k_sums(gt: ArrayView3<f64>, samples: &[Array3<f64>], ks: &[usize]) -> Result<Vec<(f64, f64)>> {
    let kmax = ks.iter().copied().max().unwrap_or(0);
    if ks.iter().any(|&k| k == 0) || kmax > samples.len() {
        return Err(Error::InvalidArgument(format!(
            "k values must be in 1..={}, got {ks:?}",
            samples.len()
        )));
    }
    let (a, f) = per_sample_errors(gt, samples)?;
    let n = gt.dim().0;
    Ok(ks
        .iter()
        .map(|&k| {
            let (mut sa, mut sf) = (0.0, 0.0);
            for i in 0..n {
                let mut best = 0;
                for s in 1..k {
                    if a[[s, i]] < a[[best, i]] {
                        best = s;
                    }
                }
                sa += a[[best, i]];
                sf += f[[best, i]];
            }
            (sa, sf)
        })
        .collect())
}

fn check_eval_windows(params: &ModelParams, windows: &[ObservationWindow]) -> Result<()> {
    if windows.is_empty() {
        return Err(Error::InvalidArgument("no evaluation windows".into()));
    }
    let c = &params.config;
    for w in windows {
        if w.obs_len != c.obs_len || w.pred_len != c.pred_len || !w.has_future() {
            return Err(Error::Config(format!(
                "window {}@{} has obs_len={} pred_len={}, model expects {} and {}",
                w.scene_id, w.start_frame, w.obs_len, w.pred_len, c.obs_len, c.pred_len
            )));
        }
    }
    Ok(())
}

/// Best-of-`k` metrics for every `k` in `ks`, drawing `max(ks)` samples per window with
/// the observed-branch latent. Sample `s` of window `w` always uses `sample_rng(seed, w, s)`,
/// so each report reuses the first `k` samples of the largest run.
pub fn sampling_sweep(params: &ModelParams, windows: &[ObservationWindow], ks: &[usize], seed: u64) -> Result<Vec<MetricReport>> {
    if ks.is_empty() || ks.contains(&0) {
        return Err(Error::InvalidArgument("sample counts must be a nonempty list of values >= 1".into()));
    }
    check_eval_windows(params, windows)?;
    let kmax = *ks.iter().max().expect("nonempty");
    let per_window: Vec<Result<Vec<(f64, f64)>>> = windows
        .par_iter()
        .enumerate()
        .map(|(w, win)| {
            let mut rngs: Vec<ChaCha8Rng> = (0..kmax).map(|s| sample_rng(seed, w as u64, s as u64)).collect();
            let samples = sample_futures(win, params, LatentSource::Observed, Sampling::Random, &mut rngs)?;
            let abs: Vec<Array3<f64>> = samples.into_iter().map(|p| p.absolute_positions).collect();
            best_of_k_sums(win.future.view(), &abs, ks)
        })
        .collect();
    let mut totals = vec![(0.0, 0.0); ks.len()];
    for r in per_window {
        for (t, (a, f)) in totals.iter_mut().zip(r?) {
            t.0 += a;
            t.1 += f;
        }
    }
    let n: usize = windows.iter().map(|w| w.num_peds()).sum();
    Ok(ks
        .iter()
        .zip(totals)
        .map(|(&k, (a, f))| MetricReport {
            ade: a / n as f64,
            fde: f / n as f64,
            k,
            pred_len: params.config.pred_len,
            n_pedestrians: n,
        })
        .collect())
}

pub fn best_of_k_eval(params: &ModelParams, windows: &[ObservationWindow], k: usize, seed: u64) -> Result<MetricReport> {
    Ok(sampling_sweep(params, windows, &[k], seed)?.remove(0))
}

/// Extrapolation with each pedestrian's mean observed velocity.
pub fn constant_velocity_baseline(window: &ObservationWindow) -> Result<PredictionSample> {
    let (n, obs, _) = window.observed.dim();
    if obs < 2 {
        return Err(Error::InvalidArgument("constant-velocity baseline needs obs_len >= 2".into()));
    }
    let last = window.observed.slice(s![.., -1, ..]).to_owned();
    let step = (&last - &window.observed.slice(s![.., 0, ..])) / (obs - 1) as f64;
    let disp = Array3::from_shape_fn((n, window.pred_len, 2), |(i, _, d)| step[[i, d]]);
    Ok(PredictionSample::from_displacements(&last, disp))
}

/// Constant-velocity ADE and FDE pooled over all pedestrians of `windows`.
pub fn constant_velocity_report(windows: &[ObservationWindow]) -> Result<MetricReport> {
    if windows.is_empty() {
        return Err(Error::InvalidArgument("no evaluation windows".into()));
    }
    let (mut sa, mut sf, mut n) = (0.0, 0.0, 0);
    let pred_len = windows[0].pred_len;
    for w in windows {
        if !w.has_future() || w.pred_len != pred_len {
            return Err(Error::Shape("windows need futures of equal length".into()));
        }
        let p = constant_velocity_baseline(w)?;
        let k = w.num_peds() as f64;
        sa += ade(p.absolute_positions.view(), w.future.view())? * k;
        sf += fde(p.absolute_positions.view(), w.future.view())? * k;
        n += w.num_peds();
    }
    Ok(MetricReport {
        ade: sa / n as f64,
        fde: sf / n as f64,
        k: 1,
        pred_len,
        n_pedestrians: n,
    })
}

/// Per-pedestrian histograms of predicted positions on a shared grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityGrid {
    /// World coordinates of the lower-left corner of cell `(0, 0)`.
    pub origin: [f64; 2],
    pub cell: f64,
    /// `[n_peds x H x W]`, row index along y and column index along x.
    pub counts: Array3<u64>,
    pub n_samples: usize,
}

impl DensityGrid {
    pub fn channels(&self) -> usize {
        self.counts.dim().0
    }

    /// Cell `(row, col)` containing a point, if it lies on the grid.
    pub fn cell_of(&self, p: [f64; 2]) -> Option<(usize, usize)> {
        let (_, h, w) = self.counts.dim();
        let c = ((p[0] - self.origin[0]) / self.cell).floor();
        let r = ((p[1] - self.origin[1]) / self.cell).floor();
        (c >= 0.0 && r >= 0.0 && (c as usize) < w && (r as usize) < h).then_some((r as usize, c as usize))
    }

    pub fn channel_total(&self, ped: usize) -> u64 {
        self.counts.index_axis(Axis(0), ped).sum()
    }

    /// Four header lines, then one block per pedestrian: a `# pedestrian` line followed
    /// by `H` rows of `W` counts.
    pub fn write_text(&self, out: &mut impl Write) -> std::io::Result<()> {
        writeln!(out, "origin_x {}", self.origin[0])?;
        writeln!(out, "origin_y {}", self.origin[1])?;
        writeln!(out, "cell {}", self.cell)?;
        writeln!(out, "n_samples {}", self.n_samples)?;
        for (p, ch) in self.counts.outer_iter().enumerate() {
            writeln!(out, "# pedestrian {p}")?;
            for row in ch.outer_iter() {
                let cells: Vec<String> = row.iter().map(u64::to_string).collect();
                writeln!(out, "{}", cells.join(" "))?;
            }
        }
        Ok(())
    }

    pub fn parse_text(text: &str) -> Result<Self> {
        let bad = |msg: &str| Error::Parse {
            path: "<density grid>".into(),
            line: 0,
            msg: msg.into(),
        };
        let mut lines = text.lines();
        let mut header = |key: &str| -> Result<f64> {
            let line = lines.next().ok_or_else(|| bad("missing header"))?;
            let (k, v) = line.split_once(' ').ok_or_else(|| bad("malformed header"))?;
            if k != key {
                return Err(bad(&format!("expected header '{key}', found '{k}'")));
            }
            v.trim().parse().map_err(|_| bad(&format!("bad value for {key}")))
        };
        let origin = [header("origin_x")?, header("origin_y")?];
        let cell = header("cell")?;
        let n_samples = header("n_samples")? as usize;
        let mut blocks: Vec<Vec<Vec<u64>>> = Vec::new();
        for line in lines {
            if line.starts_with('#') {
                blocks.push(Vec::new());
                continue;
            }
            let row = line
                .split_whitespace()
                .map(|v| v.parse::<u64>().map_err(|_| bad("non-integer count")))
                .collect::<Result<Vec<_>>>()?;
            blocks.last_mut().ok_or_else(|| bad("counts before first block"))?.push(row);
        }
        let h = blocks.first().map_or(0, Vec::len);
        let w = blocks.first().and_then(|b| b.first()).map_or(0, Vec::len);
        if blocks.iter().any(|b| b.len() != h || b.iter().any(|r| r.len() != w)) {
            return Err(bad("ragged grid"));
        }
        let flat: Vec<u64> = blocks.into_iter().flatten().flatten().collect();
        let counts = Array3::from_shape_vec((flat.len() / (h * w).max(1), h, w), flat).map_err(|e| bad(&e.to_string()))?;
        Ok(Self {
            origin,
            cell,
            counts,
            n_samples,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write_text(&mut buf).map_err(|e| Error::io(path, e))?;
        std::fs::write(path, buf).map_err(|e| Error::io(path, e))
    }
}

/// Histogram of `n_samples` futures drawn with the observed-branch latent. The grid is
/// fitted to all predicted positions with a margin of one cell on every side.
pub fn density_map(
    params: &ModelParams,
    window: &ObservationWindow,
    n_samples: usize,
    cell: f64,
    seed: u64,
    sampling: Sampling,
) -> Result<DensityGrid> {
    if !(cell > 0.0 && cell.is_finite()) {
        return Err(Error::InvalidArgument("grid cell must be > 0".into()));
    }
    if n_samples == 0 {
        return Err(Error::InvalidArgument("n_samples must be >= 1".into()));
    }
    let mut rngs: Vec<ChaCha8Rng> = (0..n_samples).map(|s| sample_rng(seed, 0, s as u64)).collect();
    let samples = sample_futures(window, params, LatentSource::Observed, sampling, &mut rngs)?;
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for p in samples.iter().flat_map(|s| s.absolute_positions.outer_iter().flat_map(|a| a.outer_iter().map(|q| [q[0], q[1]]).collect::<Vec<_>>())) {
        for d in 0..2 {
            lo[d] = lo[d].min(p[d]);
            hi[d] = hi[d].max(p[d]);
        }
    }
    let origin = [lo[0] - cell, lo[1] - cell];
    let w = ((hi[0] - origin[0]) / cell).floor() as usize + 2;
    let h = ((hi[1] - origin[1]) / cell).floor() as usize + 2;
    let n = window.num_peds();
    let mut grid = DensityGrid {
        origin,
        cell,
        counts: Array3::zeros((n, h, w)),
        n_samples,
    };
    for s in &samples {
        for (i, traj) in s.absolute_positions.outer_iter().enumerate() {
            for q in traj.outer_iter() {
                let (r, c) = grid.cell_of([q[0], q[1]]).expect("grid covers every sample");
                grid.counts[[i, r, c]] += 1;
            }
        }
    }
    Ok(grid)
}
