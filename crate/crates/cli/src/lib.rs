//! The `swimtrack` command line.
//!
//! Exit codes:
//!
//! | code | meaning |
//! |------|---------|
//! | 0 | success |
//! | 1 | file system error |
//! | 2 | bad configuration or filter specification |
//! | 3 | malformed input rows, schema mismatch, out-of-order frames |
//! | 4 | signal too short, no swimming frames, too few peaks |

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::Serialize;

use swimtrack_core::error::{
    AssignError, Error, GeometryError, IoError, KalmanError, MetricsError, SimError, StrokeError,
    TrackerError,
};
use swimtrack_core::geometry::{SValueSeries, Track, TrackSource};
use swimtrack_core::io::{self, StrokesFile};
use swimtrack_core::metrics::{
    interpolate_ground_truth, mot_report, stroke_report_with_tolerance, DEFAULT_IOU_MATCH,
    DEFAULT_PEAK_TOLERANCE,
};
use swimtrack_core::simgen::{generate, SimConfig};
use swimtrack_core::stroke::{process_series, FilterSpec};
use swimtrack_core::tracker::{track_detections, TrackerConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_SIGNAL: i32 = 4;

/// Environment variable that replaces the seed of a simulation config.
pub const SEED_ENV: &str = "SWIMTRACK_SEED";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn new(code: i32, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }

    fn context(mut self, what: impl fmt::Display) -> Self {
        self.message = format!("{what}: {}", self.message);
        self
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

/// Stable exit code for a library error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Geometry(GeometryError::InvalidFps(_)) => EXIT_CONFIG,
        Error::Geometry(_) | Error::Assign(_) => EXIT_DATA,
        Error::Kalman(k) | Error::Tracker(TrackerError::Kalman(k)) => kalman_code(k),
        Error::Tracker(TrackerError::InvalidConfig(_)) => EXIT_CONFIG,
        Error::Tracker(TrackerError::OutOfOrderFrame { .. }) => EXIT_DATA,
        Error::Stroke(StrokeError::InvalidSpec(_)) => EXIT_CONFIG,
        Error::Stroke(StrokeError::LengthMismatch(..)) => EXIT_DATA,
        Error::Stroke(_) => EXIT_SIGNAL,
        Error::Metrics(MetricsError::EmptyPeaks) => EXIT_SIGNAL,
        Error::Metrics(_) => EXIT_DATA,
        Error::Sim(_) => EXIT_CONFIG,
        Error::Io(IoError::Io(_)) => EXIT_IO,
        Error::Io(_) => EXIT_DATA,
    }
}

fn kalman_code(err: &KalmanError) -> i32 {
    match err {
        KalmanError::InvalidConfig(_) => EXIT_CONFIG,
        KalmanError::SingularMatrix => EXIT_DATA,
    }
}

impl From<Error> for CliError {
    fn from(err: Error) -> Self {
        Self::new(exit_code(&err), err.to_string())
    }
}

macro_rules! via_library_error {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(err: $t) -> Self {
                Error::from(err).into()
            }
        }
    )*};
}

via_library_error!(
    GeometryError,
    KalmanError,
    AssignError,
    TrackerError,
    StrokeError,
    MetricsError,
    SimError,
    IoError
);

impl From<std::io::Error> for CliError {
    fn from(err: std::io::Error) -> Self {
        IoError::from(err).into()
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "swimtrack",
    version,
    about = "Swimmer tracking and stroke-rate analysis"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic race: detections, ground truth, s-values, true peaks.
    Simulate {
        /// Simulation config (JSON); defaults are used when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Link per-frame detections into tracks.
    Track {
        #[arg(long)]
        detections: PathBuf,
        /// Tracker config (JSON).
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Smooth an s-value series and extract stroke tops and rates.
    Strokes {
        #[arg(long)]
        svalues: PathBuf,
        #[arg(long)]
        fps: f64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 8)]
        order: usize,
        #[arg(long, default_value_t = 3.0)]
        cutoff: f64,
    },
    /// Score tracks against ground truth.
    EvalMot {
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        hyp: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = DEFAULT_IOU_MATCH)]
        iou: f64,
        /// Treat the ground truth as sparse per-lane annotations and fill the
        /// frames between them.
        #[arg(long)]
        interpolate_gt: bool,
    },
    /// Score stroke tops and s-values against ground truth.
    EvalStroke {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        svalues_pred: PathBuf,
        #[arg(long)]
        svalues_truth: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Lane entry to score when the truth file holds several.
        #[arg(long)]
        track_id: Option<u32>,
        #[arg(long, default_value_t = DEFAULT_PEAK_TOLERANCE)]
        tolerance: f64,
    },
    /// Track, then extract strokes for every track with an s-value file.
    Pipeline {
        #[arg(long)]
        detections: PathBuf,
        #[arg(long)]
        svalues_dir: PathBuf,
        #[arg(long)]
        fps: f64,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate { config, out_dir } => simulate(config.as_deref(), &out_dir),
        Command::Track {
            detections,
            config,
            out,
        } => track(&detections, config.as_deref(), &out),
        Command::Strokes {
            svalues,
            fps,
            out,
            order,
            cutoff,
        } => strokes(
            &svalues,
            FilterSpec {
                order,
                cutoff_hz: cutoff,
                fps,
            },
            &out,
        ),
        Command::EvalMot {
            gt,
            hyp,
            out,
            iou,
            interpolate_gt,
        } => eval_mot(&gt, &hyp, &out, iou, interpolate_gt),
        Command::EvalStroke {
            pred,
            truth,
            svalues_pred,
            svalues_truth,
            out,
            track_id,
            tolerance,
        } => eval_stroke(
            &pred,
            &truth,
            &svalues_pred,
            &svalues_truth,
            &out,
            track_id,
            tolerance,
        ),
        Command::Pipeline {
            detections,
            svalues_dir,
            fps,
            out_dir,
            config,
        } => pipeline(&detections, &svalues_dir, fps, &out_dir, config.as_deref()),
    }
}

/// Every failure while loading a config maps to the configuration exit code,
/// including a missing file.
fn load_config<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T, CliError> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = fs::read_to_string(path).map_err(|e| {
        CliError::new(
            EXIT_CONFIG,
            format!("cannot read config {}: {e}", path.display()),
        )
    })?;
    serde_json::from_str(&text).map_err(|e| {
        CliError::new(
            EXIT_CONFIG,
            format!("invalid config {}: {e}", path.display()),
        )
    })
}

fn open(path: &Path) -> Result<fs::File, CliError> {
    fs::File::open(path).map_err(|e| CliError::from(e).context(path.display()))
}

fn ensure_parent(path: &Path) -> Result<(), CliError> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => fs::create_dir_all(dir).map_err(CliError::from),
        _ => Ok(()),
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    ensure_parent(path)?;
    io::write_json_atomic(path, value).map_err(|e| CliError::from(e).context(path.display()))
}

fn write_csv(
    path: &Path,
    fill: impl FnOnce(&mut Vec<u8>) -> Result<(), IoError>,
) -> Result<(), CliError> {
    ensure_parent(path)?;
    let mut buf = Vec::new();
    fill(&mut buf)?;
    io::write_atomic(path, &buf).map_err(|e| CliError::from(e).context(path.display()))
}

fn read_tracks(path: &Path, source: TrackSource) -> Result<Vec<Track>, CliError> {
    io::read_tracks(open(path)?, source).map_err(|e| CliError::from(e).context(path.display()))
}

fn read_svalues(path: &Path, track_id: u32, fps: f64) -> Result<SValueSeries, CliError> {
    let series = io::read_svalues(open(path)?, track_id, fps)
        .map_err(|e| CliError::from(e).context(path.display()))?;
    series
        .validate()
        .map_err(|e| CliError::from(e).context(path.display()))?;
    Ok(series)
}

fn read_peaks(path: &Path, track_id: Option<u32>) -> Result<Vec<f64>, CliError> {
    let value: serde_json::Value = io::read_json(path).map_err(CliError::from)?;
    io::peaks_from_json(&value, track_id).map_err(|e| CliError::from(e).context(path.display()))
}

pub fn simulation_config(path: Option<&Path>) -> Result<SimConfig, CliError> {
    let mut config: SimConfig = load_config(path)?;
    if let Ok(raw) = std::env::var(SEED_ENV) {
        config.seed = raw.trim().parse().map_err(|_| {
            CliError::new(
                EXIT_CONFIG,
                format!("{SEED_ENV}={raw:?} is not an unsigned integer"),
            )
        })?;
    }
    config.validate()?;
    Ok(config)
}

pub fn svalues_lane_file(lane: i32) -> String {
    format!("svalues_lane{lane}.csv")
}

pub fn svalues_truth_lane_file(lane: i32) -> String {
    format!("svalues_truth_lane{lane}.csv")
}

pub fn svalues_track_file(track_id: u32) -> String {
    format!("svalues_track{track_id}.csv")
}

#[derive(Serialize)]
struct TruthPeaksFile<'a> {
    lanes: &'a [swimtrack_core::simgen::LanePeaks],
}

/// Writes `detections.csv`, `gt_tracks.csv`, `svalues_lane{N}.csv`,
/// `svalues_truth_lane{N}.csv`, `truth_peaks.json` and the effective
/// `config.json`.
pub fn simulate(config: Option<&Path>, out_dir: &Path) -> Result<(), CliError> {
    let config = simulation_config(config)?;
    let sim = generate(&config)?;
    fs::create_dir_all(out_dir)?;
    write_csv(&out_dir.join("detections.csv"), |w| {
        io::write_detections(w, &sim.detections)
    })?;
    write_csv(&out_dir.join("gt_tracks.csv"), |w| {
        io::write_tracks(w, &sim.ground_truth)
    })?;
    for (lane, (observed, truth)) in sim
        .true_peaks
        .iter()
        .map(|p| p.lane)
        .zip(sim.svalues.iter().zip(&sim.truth_svalues))
    {
        write_csv(&out_dir.join(svalues_lane_file(lane)), |w| {
            io::write_svalues(w, observed)
        })?;
        write_csv(&out_dir.join(svalues_truth_lane_file(lane)), |w| {
            io::write_svalues(w, truth)
        })?;
    }
    write_json(
        &out_dir.join("truth_peaks.json"),
        &TruthPeaksFile {
            lanes: &sim.true_peaks,
        },
    )?;
    write_json(&out_dir.join("config.json"), &config)
}

fn run_tracker(detections: &Path, config: Option<&Path>) -> Result<Vec<Track>, CliError> {
    let config: TrackerConfig = load_config(config)?;
    config.validate()?;
    let detections = io::read_detections_in_order(open(detections)?)
        .map_err(|e| CliError::from(e).context(detections.display()))?;
    Ok(track_detections(config, &detections)?)
}

pub fn track(detections: &Path, config: Option<&Path>, out: &Path) -> Result<(), CliError> {
    let tracks = run_tracker(detections, config)?;
    write_csv(out, |w| io::write_tracks(w, &tracks))
}

pub fn strokes(svalues: &Path, spec: FilterSpec, out: &Path) -> Result<(), CliError> {
    spec.validate()?;
    let series = read_svalues(svalues, 0, spec.fps)?;
    let strokes = process_series(&series, &spec)?;
    write_json(out, &StrokesFile::from(&strokes))
}

pub fn eval_mot(
    gt: &Path,
    hyp: &Path,
    out: &Path,
    iou: f64,
    interpolate_gt: bool,
) -> Result<(), CliError> {
    if !(iou > 0.0 && iou <= 1.0) {
        return Err(CliError::new(
            EXIT_CONFIG,
            format!("iou threshold {iou} outside (0, 1]"),
        ));
    }
    let gt_tracks = if interpolate_gt {
        let rows = io::read_detection_rows(open(gt)?)
            .map_err(|e| CliError::from(e).context(gt.display()))?;
        let sparse = rows
            .iter()
            .map(|r| {
                (r.lane >= 0)
                    .then_some((r.frame, r.lane, r.bbox))
                    .ok_or_else(|| {
                        CliError::new(
                            EXIT_DATA,
                            format!(
                                "{}: sparse annotations need a lane on every row",
                                gt.display()
                            ),
                        )
                    })
            })
            .collect::<Result<Vec<_>, _>>()?;
        interpolate_ground_truth(&sparse)?
    } else {
        read_tracks(gt, TrackSource::GroundTruth)?
    };
    let hyp_tracks = read_tracks(hyp, TrackSource::Tracker)?;
    let report = mot_report(&hyp_tracks, &gt_tracks, iou)?;
    write_json(out, &report)
}

#[allow(clippy::too_many_arguments)]
pub fn eval_stroke(
    pred: &Path,
    truth: &Path,
    svalues_pred: &Path,
    svalues_truth: &Path,
    out: &Path,
    track_id: Option<u32>,
    tolerance: f64,
) -> Result<(), CliError> {
    if !(tolerance.is_finite() && tolerance >= 0.0) {
        return Err(CliError::new(
            EXIT_CONFIG,
            format!("tolerance {tolerance} must be non-negative"),
        ));
    }
    let pred_peaks = read_peaks(pred, None)?;
    let truth_peaks = read_peaks(truth, track_id)?;
    // The frame rate plays no part in the comparison.
    let pred_s = read_svalues(svalues_pred, 0, 1.0)?;
    let truth_s = read_svalues(svalues_truth, 0, 1.0)?;
    let frames = |s: &SValueSeries| s.samples.iter().map(|x| x.frame).collect::<Vec<_>>();
    if frames(&pred_s) != frames(&truth_s) {
        return Err(CliError::new(
            EXIT_DATA,
            "s-value files cover different frames",
        ));
    }
    let report = stroke_report_with_tolerance(
        &pred_peaks,
        &truth_peaks,
        &pred_s.values(),
        &truth_s.values(),
        tolerance,
    )?;
    write_json(out, &report)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineTrack {
    pub track_id: u32,
    pub lane: Option<i32>,
    pub first_frame: Option<u32>,
    pub last_frame: Option<u32>,
    pub frames: usize,
    pub svalues: Option<String>,
    /// `ok`, `no-svalues`, `too-short`, `no-swimming` or `too-few-peaks`.
    pub status: String,
    pub n_peaks: usize,
    pub mean_spm: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineSummary {
    pub fps: f64,
    pub n_tracks: usize,
    pub n_with_strokes: usize,
    pub tracks: Vec<PipelineTrack>,
}

fn svalue_file_for(dir: &Path, track: &Track) -> Option<String> {
    let by_lane = track.lane.map(svalues_lane_file);
    by_lane
        .into_iter()
        .chain(std::iter::once(svalues_track_file(track.track_id)))
        .find(|name| dir.join(name).is_file())
}

/// Writes `tracks.csv`, `strokes_track{id}.json` per track with s-values and
/// `summary.json`. A track whose series is too short or holds no strokes is
/// reported in the summary; any other failure stops the run.
pub fn pipeline(
    detections: &Path,
    svalues_dir: &Path,
    fps: f64,
    out_dir: &Path,
    config: Option<&Path>,
) -> Result<(), CliError> {
    let spec = FilterSpec::with_fps(fps);
    spec.validate()?;
    let tracks = run_tracker(detections, config)?;
    fs::create_dir_all(out_dir)?;
    write_csv(&out_dir.join("tracks.csv"), |w| {
        io::write_tracks(w, &tracks)
    })?;

    let mut rows = Vec::with_capacity(tracks.len());
    for track in &tracks {
        let mut row = PipelineTrack {
            track_id: track.track_id,
            lane: track.lane,
            first_frame: track.first_frame(),
            last_frame: track.last_frame(),
            frames: track.len(),
            svalues: svalue_file_for(svalues_dir, track),
            status: "no-svalues".into(),
            n_peaks: 0,
            mean_spm: None,
        };
        if let Some(name) = &row.svalues {
            let series = read_svalues(&svalues_dir.join(name), track.track_id, fps)?;
            match process_series(&series, &spec) {
                Ok(strokes) => {
                    row.n_peaks = strokes.peak_positions.len();
                    row.mean_spm = strokes.mean_rate();
                    row.status = if row.mean_spm.is_some() {
                        "ok"
                    } else {
                        "too-few-peaks"
                    }
                    .into();
                    write_json(
                        &out_dir.join(format!("strokes_track{}.json", track.track_id)),
                        &StrokesFile::from(&strokes),
                    )?;
                }
                Err(StrokeError::SignalTooShort { .. }) => row.status = "too-short".into(),
                Err(StrokeError::EmptySwimmingRegion) => row.status = "no-swimming".into(),
                Err(StrokeError::InsufficientPeaks(_)) => row.status = "too-few-peaks".into(),
                Err(e) => return Err(CliError::from(e).context(name)),
            }
        }
        rows.push(row);
    }
    let summary = PipelineSummary {
        fps,
        n_tracks: rows.len(),
        n_with_strokes: rows.iter().filter(|r| r.status == "ok").count(),
        tracks: rows,
    };
    write_json(&out_dir.join("summary.json"), &summary)
}
