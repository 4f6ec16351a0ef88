//! Python bindings for `dapnet`.

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use dapnet::checkpoint::Checkpoint;
use dapnet::data::{load_dataset, load_sequence, Layout, RGBTSequence};
use dapnet::evaluation;
use dapnet::geometry::{self, TargetState};
use dapnet::model::{Init, ModelParams, NetConfig};
use dapnet::pruning::{self, PruningConfig};
use dapnet::synth::{synth_sequence, SuiteConfig, SynthConfig};
use dapnet::tracking::{Tracker, TrackerConfig};
use dapnet::training::{train_offline, TrainConfig, Variant};
use dapnet::DapError;

fn err(e: DapError) -> PyErr {
    match e {
        DapError::Io { .. } | DapError::Parse { .. } | DapError::Image { .. } => PyIOError::new_err(e.to_string()),
        DapError::Config(_) | DapError::InvalidBox { .. } => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

/// Axis-aligned box `(x, y, w, h)` with top-left origin.
#[pyclass(name = "BBox", from_py_object)]
#[derive(Clone, Copy)]
struct PyBBox {
    inner: geometry::BBox,
}

#[pymethods]
impl PyBBox {
    #[new]
    fn new(x: f64, y: f64, w: f64, h: f64) -> PyResult<Self> {
        Ok(PyBBox {
            inner: geometry::BBox::new(x, y, w, h).map_err(err)?,
        })
    }

    #[getter]
    fn x(&self) -> f64 {
        self.inner.x
    }
    #[getter]
    fn y(&self) -> f64 {
        self.inner.y
    }
    #[getter]
    fn w(&self) -> f64 {
        self.inner.w
    }
    #[getter]
    fn h(&self) -> f64 {
        self.inner.h
    }

    fn center(&self) -> (f64, f64) {
        self.inner.center()
    }

    fn as_tuple(&self) -> (f64, f64, f64, f64) {
        let [x, y, w, h] = self.inner.as_array();
        (x, y, w, h)
    }

    fn __repr__(&self) -> String {
        let b = self.inner;
        format!("BBox({}, {}, {}, {})", b.x, b.y, b.w, b.h)
    }
}

#[pyfunction]
fn iou(a: &PyBBox, b: &PyBBox) -> f64 {
    geometry::iou(&a.inner, &b.inner)
}

#[pyfunction]
fn center_distance(a: &PyBBox, b: &PyBBox) -> f64 {
    geometry::center_distance(&a.inner, &b.inner)
}

#[pyfunction]
#[pyo3(signature = (a, b, s, ref_w, ref_h, gamma = geometry::DEFAULT_SCALE_STEP))]
fn state_to_box(a: f64, b: f64, s: f64, ref_w: f64, ref_h: f64, gamma: f64) -> PyBBox {
    PyBBox {
        inner: geometry::state_to_box(&TargetState::new(a, b, s), ref_w, ref_h, gamma),
    }
}

/// Surviving channel indices of one weighted random selection.
#[pyfunction]
fn wrs_select(scores: Vec<f64>, wrs_ratio: f64, seed: u64) -> PyResult<Vec<usize>> {
    let cfg = PruningConfig::new(wrs_ratio).map_err(err)?;
    let sel = pruning::wrs_select(&scores, &cfg, &mut ChaCha8Rng::seed_from_u64(seed)).map_err(err)?;
    Ok(sel.selected)
}

/// Precision at `threshold` pixels from per-frame center errors.
#[pyfunction]
fn precision_rate(center_errors: Vec<f64>, threshold: f64) -> f64 {
    evaluation::representative_pr(&center_errors, threshold)
}

/// Mean success over the 21 overlap thresholds 0, 0.05, ..., 1.
#[pyfunction]
fn success_rate(overlaps: Vec<f64>) -> f64 {
    evaluation::representative_sr(&overlaps, &evaluation::success_thresholds())
}

/// RGB-thermal sequence (frames loaded on demand).
#[pyclass(name = "Sequence")]
struct PySequence {
    inner: RGBTSequence,
}

#[pymethods]
impl PySequence {
    #[staticmethod]
    #[pyo3(signature = (dir, layout = None))]
    fn load(dir: PathBuf, layout: Option<&str>) -> PyResult<Self> {
        let layout = match layout {
            Some(l) => l.parse().map_err(err)?,
            None => Layout::detect(&dir).ok_or_else(|| PyIOError::new_err(format!("{} is not a sequence directory", dir.display())))?,
        };
        Ok(PySequence {
            inner: load_sequence(&dir, layout).map_err(err)?,
        })
    }

    /// Synthetic sequence; `rgb_failure` is an inclusive frame window.
    #[staticmethod]
    #[pyo3(signature = (name, frames = 60, seed = 0, rgb_failure = None))]
    fn synthetic(name: &str, frames: usize, seed: u64, rgb_failure: Option<(usize, usize)>) -> PyResult<Self> {
        let cfg = SynthConfig {
            frames,
            seed,
            rgb_failures: rgb_failure.into_iter().collect(),
            ..SynthConfig::default()
        };
        cfg.validate().map_err(err)?;
        Ok(PySequence {
            inner: synth_sequence(name, &cfg).map_err(err)?,
        })
    }

    #[getter]
    fn name(&self) -> String {
        self.inner.name.clone()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn ground_truth(&self) -> Vec<PyBBox> {
        self.inner.gt.iter().map(|&b| PyBBox { inner: b }).collect()
    }

    fn attributes(&self) -> Vec<String> {
        self.inner.attributes.iter().map(|a| a.tag().to_string()).collect()
    }

    fn save(&self, dir: PathBuf, layout: &str) -> PyResult<()> {
        self.inner.save(&dir, layout.parse().map_err(err)?).map_err(err)
    }
}

/// Network parameters (f32).
#[pyclass(name = "Model")]
struct PyModel {
    inner: ModelParams<f32>,
}

#[pymethods]
impl PyModel {
    /// Freshly initialized network; `net` is "toy" or "full".
    #[staticmethod]
    #[pyo3(signature = (net = "toy", branches = 1, variant = "full", seed = 0))]
    fn init(net: &str, branches: usize, variant: &str, seed: u64) -> PyResult<Self> {
        let base = match net {
            "toy" => NetConfig::toy(),
            "full" => NetConfig::full(),
            other => return Err(PyValueError::new_err(format!("unknown net {other:?}"))),
        };
        let v: Variant = variant.parse().map_err(err)?;
        let cfg = NetConfig {
            fusion: v.fusion(),
            ..base
        };
        let m = ModelParams::init(&cfg, branches, Init::He, &mut ChaCha8Rng::seed_from_u64(seed)).map_err(err)?;
        Ok(PyModel { inner: m })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(PyModel {
            inner: Checkpoint::<f32>::load(&path).map_err(err)?.model,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        Checkpoint::new(self.inner.clone()).save(&path).map_err(err)
    }

    #[getter]
    fn branches(&self) -> usize {
        self.inner.head.branches()
    }

    /// (channels, height, width) of the fused features.
    fn feature_shape(&self) -> PyResult<(usize, usize, usize)> {
        self.inner.config.feature_shape().map_err(err)
    }

    /// Offline training on `sequences`, one fc6 branch each (replaces the
    /// current branches). Returns the per-iteration losses.
    #[pyo3(signature = (sequences, iterations, seed, wrs_ratio = 0.7, pruning = true))]
    fn train(&mut self, sequences: Vec<PyRef<PySequence>>, iterations: usize, seed: u64, wrs_ratio: f64, pruning: bool) -> PyResult<Vec<f64>> {
        let domains: Vec<RGBTSequence> = sequences.iter().map(|s| s.inner.clone()).collect();
        if domains.is_empty() {
            return Err(PyValueError::new_err("no training sequences"));
        }
        let cfg = TrainConfig {
            epochs: iterations.div_ceil(domains.len()),
            frames_per_batch: 2,
            pos_per_frame: 8,
            neg_per_frame: 24,
            lr_conv: 1e-3,
            lr_fc: 1e-2,
            wrs_ratio,
            pruning,
            seed,
            ..TrainConfig::default()
        };
        let mut model = self.inner.clone();
        model.reset_branches(domains.len(), &mut ChaCha8Rng::seed_from_u64(seed));
        let mut losses = Vec::new();
        self.inner = train_offline(&domains, model, &cfg, |l| losses.push(l.loss)).map_err(err)?;
        Ok(losses)
    }

    /// Tracks `sequence` from its first ground-truth box.
    #[pyo3(signature = (sequence, seed, n_cand = 64, zero_thermal = false))]
    fn track(&self, sequence: &PySequence, seed: u64, n_cand: usize, zero_thermal: bool) -> PyResult<Vec<PyBBox>> {
        let cfg = TrackerConfig {
            n_cand,
            init_pos: 100,
            init_neg: 400,
            harvest_pos: 20,
            harvest_neg: 60,
            zero_thermal,
            seed,
            ..TrackerConfig::default()
        };
        let reports = Tracker::run(&self.inner, &sequence.inner, cfg).map_err(err)?;
        Ok(reports.into_iter().map(|r| PyBBox { inner: r.bbox }).collect())
    }
}

/// Train and test sequences of the default synthetic suite.
#[pyfunction]
fn synthetic_suite(seed: u64) -> PyResult<(Vec<PySequence>, Vec<PySequence>)> {
    let suite = SuiteConfig {
        seed,
        ..SuiteConfig::default()
    };
    let wrap = |v: Vec<RGBTSequence>| v.into_iter().map(|inner| PySequence { inner }).collect();
    Ok((wrap(suite.train().map_err(err)?), wrap(suite.test().map_err(err)?)))
}

#[pyfunction]
fn load_sequences(root: PathBuf) -> PyResult<Vec<PySequence>> {
    Ok(load_dataset(&root).map_err(err)?.into_iter().map(|inner| PySequence { inner }).collect())
}

#[pymodule]
fn dapnet_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyBBox>()?;
    m.add_class::<PySequence>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(iou, m)?)?;
    m.add_function(wrap_pyfunction!(center_distance, m)?)?;
    m.add_function(wrap_pyfunction!(state_to_box, m)?)?;
    m.add_function(wrap_pyfunction!(wrs_select, m)?)?;
    m.add_function(wrap_pyfunction!(precision_rate, m)?)?;
    m.add_function(wrap_pyfunction!(success_rate, m)?)?;
    m.add_function(wrap_pyfunction!(synthetic_suite, m)?)?;
    m.add_function(wrap_pyfunction!(load_sequences, m)?)?;
    Ok(())
}
