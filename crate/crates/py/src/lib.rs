//! Python module `swimtrack`.
//!
//! Tracks cross the boundary as `{track_id: [(frame, x, y, w, h), ...]}`
//! dictionaries and reports as plain dictionaries keyed by field name.

use std::collections::BTreeMap;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyBool, PyDict, PyFloat, PyInt, PyList, PyString, PyTuple};
use serde_json::Value;

use swimtrack_core::assoc::{self, CostMatrix};
use swimtrack_core::geometry::{self, Detection, SValueSample, SValueSeries, Track, TrackSource};
use swimtrack_core::metrics;
use swimtrack_core::simgen::{self, SimConfig};
use swimtrack_core::stroke::{self, FilterSpec};
use swimtrack_core::tracker::{self as core_tracker, TrackerConfig};

fn value_error(err: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(err.to_string())
}

fn json_to_py<'py>(py: Python<'py>, value: &Value) -> PyResult<Bound<'py, PyAny>> {
    Ok(match value {
        Value::Null => py.None().into_bound(py),
        Value::Bool(b) => PyBool::new(py, *b).to_owned().into_any(),
        Value::Number(n) => match (n.as_i64(), n.as_u64()) {
            (Some(i), _) => i.into_pyobject(py)?.into_any(),
            (None, Some(u)) => u.into_pyobject(py)?.into_any(),
            _ => PyFloat::new(py, n.as_f64().unwrap_or(f64::NAN)).into_any(),
        },
        Value::String(s) => PyString::new(py, s).into_any(),
        Value::Array(items) => {
            let items = items
                .iter()
                .map(|v| json_to_py(py, v))
                .collect::<PyResult<Vec<_>>>()?;
            PyList::new(py, items)?.into_any()
        }
        Value::Object(map) => {
            let dict = PyDict::new(py);
            for (k, v) in map {
                dict.set_item(k, json_to_py(py, v)?)?;
            }
            dict.into_any()
        }
    })
}

fn py_to_json(obj: &Bound<'_, PyAny>) -> PyResult<Value> {
    if obj.is_none() {
        Ok(Value::Null)
    } else if obj.is_instance_of::<PyBool>() {
        Ok(Value::Bool(obj.extract()?))
    } else if obj.is_instance_of::<PyInt>() {
        Ok(Value::from(obj.extract::<i64>()?))
    } else if obj.is_instance_of::<PyFloat>() {
        Ok(Value::from(obj.extract::<f64>()?))
    } else if obj.is_instance_of::<PyString>() {
        Ok(Value::String(obj.extract()?))
    } else if let Ok(dict) = obj.cast::<PyDict>() {
        let mut map = serde_json::Map::new();
        for (k, v) in dict.iter() {
            map.insert(k.extract::<String>()?, py_to_json(&v)?);
        }
        Ok(Value::Object(map))
    } else if obj.is_instance_of::<PyList>() || obj.is_instance_of::<PyTuple>() {
        obj.try_iter()?
            .map(|item| py_to_json(&item?))
            .collect::<PyResult<Vec<_>>>()
            .map(Value::Array)
    } else {
        Err(value_error(format!("unsupported value {obj}")))
    }
}

fn to_py_dict<'py, T: serde::Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    json_to_py(py, &serde_json::to_value(value).map_err(value_error)?)
}

#[pyclass(name = "BoundingBox", module = "swimtrack", frozen, eq, from_py_object)]
#[derive(Clone, Copy, PartialEq)]
pub struct PyBoundingBox {
    inner: geometry::BoundingBox,
}

#[pymethods]
impl PyBoundingBox {
    #[new]
    fn new(x: f64, y: f64, w: f64, h: f64) -> PyResult<Self> {
        geometry::BoundingBox::new(x, y, w, h)
            .map(|inner| Self { inner })
            .map_err(value_error)
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

    fn area(&self) -> f64 {
        self.inner.area()
    }

    fn center(&self) -> (f64, f64) {
        self.inner.center()
    }

    fn iou(&self, other: &Self) -> f64 {
        self.inner.iou(&other.inner)
    }

    /// `(u, v, s, r)`: center, area and aspect ratio.
    fn state_form(&self) -> (f64, f64, f64, f64) {
        let s = self.inner.to_state_form();
        (s.u, s.v, s.s, s.r)
    }

    fn as_tuple(&self) -> (f64, f64, f64, f64) {
        (self.inner.x, self.inner.y, self.inner.w, self.inner.h)
    }

    fn __repr__(&self) -> String {
        let b = self.inner;
        format!("BoundingBox(x={}, y={}, w={}, h={})", b.x, b.y, b.w, b.h)
    }
}

impl From<geometry::BoundingBox> for PyBoundingBox {
    fn from(inner: geometry::BoundingBox) -> Self {
        Self { inner }
    }
}

type TrackRows = Vec<(u32, f64, f64, f64, f64)>;
type TrackMap = BTreeMap<u32, TrackRows>;
type LaneMap = BTreeMap<u32, Option<i32>>;

fn tracks_from_py(tracks: BTreeMap<u32, TrackRows>, source: TrackSource) -> PyResult<Vec<Track>> {
    tracks
        .into_iter()
        .map(|(id, rows)| {
            let mut track = Track::new(id, source);
            for (frame, x, y, w, h) in rows {
                let bbox = geometry::BoundingBox::new(x, y, w, h).map_err(value_error)?;
                track.push(frame, bbox).map_err(value_error)?;
            }
            Ok(track)
        })
        .collect()
}

fn tracks_to_py(tracks: &[Track]) -> BTreeMap<u32, TrackRows> {
    tracks
        .iter()
        .map(|t| {
            let rows = t
                .entries
                .iter()
                .map(|&(f, b)| (f, b.x, b.y, b.w, b.h))
                .collect();
            (t.track_id, rows)
        })
        .collect()
}

fn lanes_of(tracks: &[Track]) -> BTreeMap<u32, Option<i32>> {
    tracks.iter().map(|t| (t.track_id, t.lane)).collect()
}

#[pyfunction]
fn iou(a: PyBoundingBox, b: PyBoundingBox) -> f64 {
    geometry::iou(&a.inner, &b.inner)
}

/// Minimum-cost assignment of a rectangular cost matrix as `(row, col)` pairs.
#[pyfunction]
fn hungarian(cost: Vec<Vec<f64>>) -> PyResult<Vec<(usize, usize)>> {
    let matrix = CostMatrix::from_rows(&cost).map_err(value_error)?;
    Ok(assoc::hungarian(&matrix))
}

/// Returns `(matches, unmatched_tracks, unmatched_detections)`.
#[pyfunction]
#[pyo3(signature = (predicted, detected, iou_min = assoc::DEFAULT_IOU_MIN))]
fn associate(
    predicted: Vec<PyBoundingBox>,
    detected: Vec<PyBoundingBox>,
    iou_min: f64,
) -> (Vec<(usize, usize)>, Vec<usize>, Vec<usize>) {
    let p: Vec<_> = predicted.iter().map(|b| b.inner).collect();
    let d: Vec<_> = detected.iter().map(|b| b.inner).collect();
    let r = assoc::associate(&p, &d, iou_min);
    (r.matches, r.unmatched_tracks, r.unmatched_detections)
}

/// Frame-by-frame tracker. `finalize` ends the session.
#[pyclass(module = "swimtrack", unsendable)]
pub struct Tracker {
    inner: Option<core_tracker::Tracker>,
}

impl Tracker {
    fn live(&mut self) -> PyResult<&mut core_tracker::Tracker> {
        self.inner
            .as_mut()
            .ok_or_else(|| PyRuntimeError::new_err("tracker already finalized"))
    }
}

#[pymethods]
impl Tracker {
    #[new]
    #[pyo3(signature = (iou_min = 0.3, max_age = 10, min_hits = 3))]
    fn new(iou_min: f64, max_age: u32, min_hits: u32) -> PyResult<Self> {
        let config = TrackerConfig {
            iou_min,
            max_age,
            min_hits,
            ..TrackerConfig::default()
        };
        let inner = core_tracker::Tracker::new(config).map_err(value_error)?;
        Ok(Self { inner: Some(inner) })
    }

    /// Feed one frame; returns `(track_id, box)` for tracks reported this frame.
    #[pyo3(signature = (frame, boxes, lanes = None))]
    fn step(
        &mut self,
        frame: u32,
        boxes: Vec<PyBoundingBox>,
        lanes: Option<Vec<Option<i32>>>,
    ) -> PyResult<Vec<(u32, PyBoundingBox)>> {
        if let Some(l) = &lanes {
            if l.len() != boxes.len() {
                return Err(value_error(format!(
                    "{} lanes for {} boxes",
                    l.len(),
                    boxes.len()
                )));
            }
        }
        let detections: Vec<Detection> = boxes
            .iter()
            .enumerate()
            .map(|(i, b)| {
                let mut d = Detection::new(frame, b.inner);
                d.lane = lanes.as_ref().and_then(|l| l[i]);
                d
            })
            .collect();
        let reported = self.live()?.step(frame, &detections).map_err(value_error)?;
        Ok(reported.into_iter().map(|(id, b)| (id, b.into())).collect())
    }

    /// Close the session; returns `(tracks, lanes)`.
    fn finalize(&mut self) -> PyResult<(TrackMap, LaneMap)> {
        let tracker = self
            .inner
            .take()
            .ok_or_else(|| PyRuntimeError::new_err("tracker already finalized"))?;
        let tracks = tracker.finalize();
        Ok((tracks_to_py(&tracks), lanes_of(&tracks)))
    }
}

fn filter_spec(fps: f64, cutoff_hz: f64, order: usize) -> PyResult<FilterSpec> {
    let spec = FilterSpec {
        order,
        cutoff_hz,
        fps,
    };
    spec.validate().map_err(value_error)?;
    Ok(spec)
}

/// Zero-phase Butterworth low-pass.
#[pyfunction]
#[pyo3(signature = (signal, fps = 30.0, cutoff_hz = 3.0, order = 8))]
fn butterworth_lowpass(
    signal: Vec<f64>,
    fps: f64,
    cutoff_hz: f64,
    order: usize,
) -> PyResult<Vec<f64>> {
    stroke::butterworth_lowpass(&signal, &filter_spec(fps, cutoff_hz, order)?).map_err(value_error)
}

#[pyfunction]
fn extract_peaks(smoothed: Vec<f64>, swimming: Vec<bool>) -> PyResult<Vec<f64>> {
    stroke::extract_peaks(&smoothed, &swimming).map_err(value_error)
}

/// `(frame, strokes_per_minute)` between neighbouring peaks.
#[pyfunction]
fn stroke_rates(peaks: Vec<f64>, fps: f64) -> PyResult<Vec<(f64, f64)>> {
    let rates = stroke::stroke_rates(&peaks, fps).map_err(value_error)?;
    Ok(rates.into_iter().map(|r| (r.frame, r.spm)).collect())
}

/// Returns `{"peaks": [...], "rates": [{"frame", "spm"}], "mean_spm"}`.
#[pyfunction]
#[pyo3(signature = (svalues, swimming, fps = 30.0, frames = None, cutoff_hz = 3.0, order = 8))]
fn process_series<'py>(
    py: Python<'py>,
    svalues: Vec<f64>,
    swimming: Vec<bool>,
    fps: f64,
    frames: Option<Vec<u32>>,
    cutoff_hz: f64,
    order: usize,
) -> PyResult<Bound<'py, PyAny>> {
    let frames = frames.unwrap_or_else(|| (0..svalues.len() as u32).collect());
    if frames.len() != svalues.len() || swimming.len() != svalues.len() {
        return Err(value_error("svalues, swimming and frames differ in length"));
    }
    let samples = frames
        .into_iter()
        .zip(svalues)
        .zip(swimming)
        .map(|((frame, s_value), swimming)| SValueSample {
            frame,
            s_value,
            swimming,
        })
        .collect();
    let series = SValueSeries::new(0, fps, samples).map_err(value_error)?;
    let strokes = stroke::process_series(&series, &filter_spec(fps, cutoff_hz, order)?)
        .map_err(value_error)?;
    let out = serde_json::json!({
        "peaks": strokes.peak_positions,
        "rates": strokes.rates,
        "mean_spm": strokes.mean_rate(),
    });
    json_to_py(py, &out)
}

/// Returns `(pairs, unmatched_pred, unmatched_truth)` with index pairs.
#[pyfunction]
#[pyo3(signature = (pred, truth, tol = metrics::DEFAULT_PEAK_TOLERANCE))]
fn match_peaks(
    pred: Vec<f64>,
    truth: Vec<f64>,
    tol: f64,
) -> (Vec<(usize, usize)>, Vec<usize>, Vec<usize>) {
    let m = metrics::match_peaks(&pred, &truth, tol);
    (m.pairs, m.unmatched_pred, m.unmatched_truth)
}

#[pyfunction]
#[pyo3(signature = (pred_peaks, truth_peaks, pred_svalues, truth_svalues, tol = metrics::DEFAULT_PEAK_TOLERANCE))]
fn stroke_report<'py>(
    py: Python<'py>,
    pred_peaks: Vec<f64>,
    truth_peaks: Vec<f64>,
    pred_svalues: Vec<f64>,
    truth_svalues: Vec<f64>,
    tol: f64,
) -> PyResult<Bound<'py, PyAny>> {
    let report = metrics::stroke_report_with_tolerance(
        &pred_peaks,
        &truth_peaks,
        &pred_svalues,
        &truth_svalues,
        tol,
    )
    .map_err(value_error)?;
    to_py_dict(py, &report)
}

#[pyfunction]
#[pyo3(signature = (hypotheses, ground_truth, iou_match = metrics::DEFAULT_IOU_MATCH))]
fn mot_report<'py>(
    py: Python<'py>,
    hypotheses: BTreeMap<u32, TrackRows>,
    ground_truth: BTreeMap<u32, TrackRows>,
    iou_match: f64,
) -> PyResult<Bound<'py, PyAny>> {
    let hyp = tracks_from_py(hypotheses, TrackSource::Tracker)?;
    let gt = tracks_from_py(ground_truth, TrackSource::GroundTruth)?;
    let report = metrics::mot_report(&hyp, &gt, iou_match).map_err(value_error)?;
    to_py_dict(py, &report)
}

/// Generate a synthetic race. Keyword arguments override `SimConfig` fields.
///
/// Returns a dict with `detections` as `(frame, x, y, w, h, confidence,
/// class_id, lane)` rows, `ground_truth` tracks, per-lane `svalues`,
/// `truth_svalues` and `swimming` lists, `true_peaks` and the effective
/// `config`.
#[pyfunction]
#[pyo3(signature = (**overrides))]
fn simulate<'py>(
    py: Python<'py>,
    overrides: Option<&Bound<'py, PyDict>>,
) -> PyResult<Bound<'py, PyAny>> {
    let config: SimConfig = match overrides {
        Some(kw) => serde_json::from_value(py_to_json(kw.as_any())?).map_err(value_error)?,
        None => SimConfig::default(),
    };
    let sim = simgen::generate(&config).map_err(value_error)?;
    let out = PyDict::new(py);
    let detections: Vec<_> = sim
        .detections
        .iter()
        .map(|d| {
            let b = d.bbox;
            (
                d.frame,
                b.x,
                b.y,
                b.w,
                b.h,
                d.confidence,
                d.class_label.id(),
                d.lane.unwrap_or(-1),
            )
        })
        .collect();
    out.set_item("detections", detections)?;
    out.set_item("ground_truth", tracks_to_py(&sim.ground_truth))?;
    let lanes: Vec<i32> = sim.true_peaks.iter().map(|p| p.lane).collect();
    out.set_item("lanes", lanes)?;
    out.set_item(
        "svalues",
        sim.svalues.iter().map(|s| s.values()).collect::<Vec<_>>(),
    )?;
    out.set_item(
        "truth_svalues",
        sim.truth_svalues
            .iter()
            .map(|s| s.values())
            .collect::<Vec<_>>(),
    )?;
    out.set_item(
        "swimming",
        sim.svalues.iter().map(|s| s.swimming()).collect::<Vec<_>>(),
    )?;
    out.set_item("true_peaks", to_py_dict(py, &sim.true_peaks)?)?;
    out.set_item("config", to_py_dict(py, &config)?)?;
    Ok(out.into_any())
}

#[pymodule]
fn swimtrack(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyBoundingBox>()?;
    m.add_class::<Tracker>()?;
    m.add_function(wrap_pyfunction!(iou, m)?)?;
    m.add_function(wrap_pyfunction!(hungarian, m)?)?;
    m.add_function(wrap_pyfunction!(associate, m)?)?;
    m.add_function(wrap_pyfunction!(butterworth_lowpass, m)?)?;
    m.add_function(wrap_pyfunction!(extract_peaks, m)?)?;
    m.add_function(wrap_pyfunction!(stroke_rates, m)?)?;
    m.add_function(wrap_pyfunction!(process_series, m)?)?;
    m.add_function(wrap_pyfunction!(match_peaks, m)?)?;
    m.add_function(wrap_pyfunction!(stroke_report, m)?)?;
    m.add_function(wrap_pyfunction!(mot_report, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    Ok(())
}
