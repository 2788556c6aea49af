//! Python bindings. Arrays cross the boundary as nested lists (`[n][T][2]` for
//! trajectories) so callers can pass plain lists or `numpy` arrays converted with `.tolist()`.

use ndarray::{Array2, Array3};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use rand_chacha::ChaCha8Rng;

use tppo_core::checkpoint::{load_checkpoint, save_checkpoint};
use tppo_core::config::TrainConfig;
use tppo_core::data::{make_windows, synth_generate, ObservationWindow as CoreWindow, Scenario};
use tppo_core::error::Error;
use tppo_core::eval::{self, sample_rng};
use tppo_core::kinematics::{self, AttentionKind};
use tppo_core::model::{sample_futures, LatentSource, LvpMode, ModelConfig, ModelParams, Sampling};

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Diverged { .. } | Error::Io { .. } => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

pub fn array3(data: &[Vec<Vec<f64>>], what: &str) -> Result<Array3<f64>, Error> {
    let n = data.len();
    let t = data.first().map_or(0, Vec::len);
    let mut out = Array3::zeros((n, t, 2));
    for (i, rows) in data.iter().enumerate() {
        if rows.len() != t {
            return Err(Error::Shape(format!("{what}: ragged time axis")));
        }
        for (k, p) in rows.iter().enumerate() {
            if p.len() != 2 {
                return Err(Error::Shape(format!("{what}: points must have two coordinates")));
            }
            out[[i, k, 0]] = p[0];
            out[[i, k, 1]] = p[1];
        }
    }
    Ok(out)
}

pub fn array2(data: &[Vec<f64>], cols: usize, what: &str) -> Result<Array2<f64>, Error> {
    let mut out = Array2::zeros((data.len(), cols));
    for (i, row) in data.iter().enumerate() {
        if row.len() != cols {
            return Err(Error::Shape(format!("{what}: rows must have {cols} entries")));
        }
        for (j, v) in row.iter().enumerate() {
            out[[i, j]] = *v;
        }
    }
    Ok(out)
}

pub fn nested3(a: &Array3<f64>) -> Vec<Vec<Vec<f64>>> {
    a.outer_iter()
        .map(|m| m.outer_iter().map(|r| r.to_vec()).collect())
        .collect()
}

pub fn nested2(a: &Array2<f64>) -> Vec<Vec<f64>> {
    a.outer_iter().map(|r| r.to_vec()).collect()
}

/// Co-present pedestrians with observed and future positions.
#[pyclass(name = "Window", module = "tppo", from_py_object)]
#[derive(Clone)]
pub struct PyWindow {
    inner: CoreWindow,
}

#[pymethods]
impl PyWindow {
    #[new]
    #[pyo3(signature = (observed, future, scene_id = "python".to_string()))]
    fn new(observed: Vec<Vec<Vec<f64>>>, future: Vec<Vec<Vec<f64>>>, scene_id: String) -> PyResult<Self> {
        let observed = array3(&observed, "observed").map_err(to_py)?;
        let future = array3(&future, "future").map_err(to_py)?;
        let (n, obs_len, _) = observed.dim();
        let pred_len = future.dim().1;
        if n == 0 || future.dim().0 != n {
            return Err(PyValueError::new_err("observed and future need the same, nonzero pedestrian count"));
        }
        Ok(Self {
            inner: CoreWindow {
                scene_id,
                start_frame: 0,
                obs_len,
                pred_len,
                pedestrians: (0..n as u64).collect(),
                observed,
                future,
            },
        })
    }

    #[getter]
    fn observed(&self) -> Vec<Vec<Vec<f64>>> {
        nested3(&self.inner.observed)
    }

    #[getter]
    fn future(&self) -> Vec<Vec<Vec<f64>>> {
        nested3(&self.inner.future)
    }

    #[getter]
    fn num_peds(&self) -> usize {
        self.inner.num_peds()
    }

    #[getter]
    fn scene_id(&self) -> String {
        self.inner.scene_id.clone()
    }

    fn __repr__(&self) -> String {
        format!(
            "Window(scene_id={:?}, peds={}, obs_len={}, pred_len={})",
            self.inner.scene_id,
            self.inner.num_peds(),
            self.inner.obs_len,
            self.inner.pred_len
        )
    }
}

/// Generator and discriminator weights with their configuration.
#[pyclass(name = "Model", module = "tppo")]
pub struct PyModel {
    params: ModelParams,
    cfg: TrainConfig,
}

fn model_config(attention: &str, lvp: &str, pred_len: usize) -> Result<ModelConfig, Error> {
    let cfg = ModelConfig {
        attention: attention.parse::<AttentionKind>()?,
        lvp: lvp.parse::<LvpMode>()?,
        pred_len,
        ..Default::default()
    };
    cfg.validate()?;
    Ok(cfg)
}

#[pymethods]
impl PyModel {
    #[new]
    #[pyo3(signature = (attention = "hard", lvp = "multi", pred_len = 12, seed = 0))]
    fn new(attention: &str, lvp: &str, pred_len: usize, seed: u64) -> PyResult<Self> {
        let model = model_config(attention, lvp, pred_len).map_err(to_py)?;
        let cfg = TrainConfig {
            model,
            seed,
            ..Default::default()
        };
        let params = ModelParams::new(&cfg.model, seed).map_err(to_py)?;
        Ok(Self { params, cfg })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        let (params, cfg) = load_checkpoint(path.as_ref()).map_err(to_py)?;
        Ok(Self { params, cfg })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        save_checkpoint(&self.params, &self.cfg, path.as_ref()).map_err(to_py)
    }

    /// Resolved configuration as `key -> value` strings.
    fn config<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let d = PyDict::new(py);
        let flat = self.cfg.to_flat();
        for k in flat.keys() {
            d.set_item(k, flat.get(k))?;
        }
        Ok(d)
    }

    #[getter]
    fn num_parameters(&self) -> usize {
        self.params.store.num_scalars()
    }

    /// `n_samples` futures `[n][pred_len][2]` drawn with the observed-branch latent.
    #[pyo3(signature = (window, n_samples = 1, seed = 0, mean = false))]
    fn predict(&self, window: &PyWindow, n_samples: usize, seed: u64, mean: bool) -> PyResult<Vec<Vec<Vec<Vec<f64>>>>> {
        let mut rngs: Vec<ChaCha8Rng> = (0..n_samples as u64).map(|s| sample_rng(seed, 0, s)).collect();
        let sampling = if mean { Sampling::Mean } else { Sampling::Random };
        let out = sample_futures(&window.inner, &self.params, LatentSource::Observed, sampling, &mut rngs).map_err(to_py)?;
        Ok(out.iter().map(|s| nested3(&s.absolute_positions)).collect())
    }

    /// Best-of-k ADE/FDE for each `k`, as a list of dicts.
    #[pyo3(signature = (windows, ks = vec![20], seed = 0))]
    fn evaluate<'py>(&self, py: Python<'py>, windows: Vec<PyWindow>, ks: Vec<usize>, seed: u64) -> PyResult<Vec<Bound<'py, PyDict>>> {
        let ws: Vec<CoreWindow> = windows.into_iter().map(|w| w.inner).collect();
        let reports = py.detach(|| eval::sampling_sweep(&self.params, &ws, &ks, seed)).map_err(to_py)?;
        reports
            .iter()
            .map(|r| {
                let d = PyDict::new(py);
                d.set_item("k", r.k)?;
                d.set_item("ade", r.ade)?;
                d.set_item("fde", r.fde)?;
                d.set_item("pred_len", r.pred_len)?;
                d.set_item("n_pedestrians", r.n_pedestrians)?;
                Ok(d)
            })
            .collect()
    }

    /// Per-pedestrian histograms `[n][H][W]` plus the grid origin and cell size.
    #[pyo3(signature = (window, n_samples = 300, cell = 0.1, seed = 0, mean = false))]
    fn density<'py>(
        &self,
        py: Python<'py>,
        window: &PyWindow,
        n_samples: usize,
        cell: f64,
        seed: u64,
        mean: bool,
    ) -> PyResult<Bound<'py, PyDict>> {
        let sampling = if mean { Sampling::Mean } else { Sampling::Random };
        let g = eval::density_map(&self.params, &window.inner, n_samples, cell, seed, sampling).map_err(to_py)?;
        let counts: Vec<Vec<Vec<u64>>> = g
            .counts
            .outer_iter()
            .map(|c| c.outer_iter().map(|r| r.to_vec()).collect())
            .collect();
        let d = PyDict::new(py);
        d.set_item("origin", (g.origin[0], g.origin[1]))?;
        d.set_item("cell", g.cell)?;
        d.set_item("n_samples", g.n_samples)?;
        d.set_item("counts", counts)?;
        Ok(d)
    }

    fn __repr__(&self) -> String {
        let m = &self.params.config;
        format!(
            "Model(attention={:?}, lvp={:?}, obs_len={}, pred_len={})",
            m.attention.name(),
            m.lvp.name(),
            m.obs_len,
            m.pred_len
        )
    }
}

#[pyfunction]
fn ade(pred: Vec<Vec<Vec<f64>>>, gt: Vec<Vec<Vec<f64>>>) -> PyResult<f64> {
    let (p, g) = (array3(&pred, "pred").map_err(to_py)?, array3(&gt, "gt").map_err(to_py)?);
    eval::ade(p.view(), g.view()).map_err(to_py)
}

#[pyfunction]
fn fde(pred: Vec<Vec<Vec<f64>>>, gt: Vec<Vec<Vec<f64>>>) -> PyResult<f64> {
    let (p, g) = (array3(&pred, "pred").map_err(to_py)?, array3(&gt, "gt").map_err(to_py)?);
    eval::fde(p.view(), g.view()).map_err(to_py)
}

#[pyfunction]
fn bearing_cosines(positions: Vec<Vec<f64>>, velocities: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
    let p = array2(&positions, 2, "positions").map_err(to_py)?;
    let v = array2(&velocities, 2, "velocities").map_err(to_py)?;
    if p.nrows() != v.nrows() {
        return Err(PyValueError::new_err("positions and velocities need the same row count"));
    }
    Ok(nested2(&kinematics::bearing_cosines(p.view(), v.view()).cosines))
}

#[pyfunction]
#[pyo3(signature = (positions, velocities, threshold = kinematics::HARD_THRESHOLD))]
fn hard_attention(positions: Vec<Vec<f64>>, velocities: Vec<Vec<f64>>, threshold: f64) -> PyResult<Vec<Vec<f64>>> {
    let p = array2(&positions, 2, "positions").map_err(to_py)?;
    let v = array2(&velocities, 2, "velocities").map_err(to_py)?;
    if p.nrows() != v.nrows() {
        return Err(PyValueError::new_err("positions and velocities need the same row count"));
    }
    let b = kinematics::bearing_cosines(p.view(), v.view());
    Ok(nested2(&kinematics::hard_attention(&b, threshold).map_err(to_py)?.weights))
}

/// Windows cut from `n_scenes` synthetic scenes of one scenario.
#[pyfunction]
#[pyo3(signature = (scenario, n_scenes, seed = 0, obs_len = 8, pred_len = 12))]
fn synth_windows(scenario: &str, n_scenes: usize, seed: u64, obs_len: usize, pred_len: usize) -> PyResult<Vec<PyWindow>> {
    let scenario: Scenario = scenario.parse().map_err(to_py)?;
    let mut out = Vec::new();
    for scene in synth_generate(scenario, n_scenes, seed).map_err(to_py)? {
        for w in make_windows(&scene, obs_len, pred_len, 1).map_err(to_py)? {
            out.push(PyWindow { inner: w });
        }
    }
    Ok(out)
}

#[pyfunction]
fn constant_velocity(window: &PyWindow) -> PyResult<Vec<Vec<Vec<f64>>>> {
    let p = eval::constant_velocity_baseline(&window.inner).map_err(to_py)?;
    Ok(nested3(&p.absolute_positions))
}

/// Trains a fresh model and returns it with the per-epoch log as a list of dicts.
#[pyfunction]
#[pyo3(signature = (windows, attention = "hard", lvp = "multi", epochs = 10, batch_size = 64, lr = 1e-3, seed = 0))]
#[allow(clippy::too_many_arguments)]
fn train<'py>(
    py: Python<'py>,
    windows: Vec<PyWindow>,
    attention: &str,
    lvp: &str,
    epochs: usize,
    batch_size: usize,
    lr: f64,
    seed: u64,
) -> PyResult<(PyModel, Vec<Bound<'py, PyDict>>)> {
    let ws: Vec<CoreWindow> = windows.into_iter().map(|w| w.inner).collect();
    let pred_len = ws.first().map_or(12, |w| w.pred_len);
    let mut cfg = TrainConfig {
        model: model_config(attention, lvp, pred_len).map_err(to_py)?,
        epochs,
        batch_size,
        seed,
        ..Default::default()
    };
    cfg.adam.lr = lr;
    let (params, log) = py.detach(|| tppo_core::training::train(&ws, &cfg)).map_err(to_py)?;
    let rows = log
        .epochs
        .iter()
        .map(|r| {
            let d = PyDict::new(py);
            d.set_item("epoch", r.epoch)?;
            d.set_item("d_loss", r.d_loss)?;
            d.set_item("g_loss", r.g_loss)?;
            d.set_item("variety", r.variety)?;
            d.set_item("kl", r.kl)?;
            d.set_item("wall_seconds", r.wall_seconds)?;
            Ok(d)
        })
        .collect::<PyResult<Vec<_>>>()?;
    Ok((PyModel { params, cfg }, rows))
}

#[pymodule]
fn tppo(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyWindow>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(ade, m)?)?;
    m.add_function(wrap_pyfunction!(fde, m)?)?;
    m.add_function(wrap_pyfunction!(bearing_cosines, m)?)?;
    m.add_function(wrap_pyfunction!(hard_attention, m)?)?;
    m.add_function(wrap_pyfunction!(synth_windows, m)?)?;
    m.add_function(wrap_pyfunction!(constant_velocity, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    Ok(())
}
