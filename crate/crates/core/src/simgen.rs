//! Synthetic race generator with known ground truth.
//!
//! Each lane holds one swimmer moving at constant horizontal speed. Its
//! stroke phase is `0.5 + 0.5 sin(2π f t + φ)`, neutral (0.5) inside turn
//! windows. Detections are the true boxes with Gaussian center jitter,
//! Bernoulli drops and Poisson clutter.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, TAU};

use crate::error::SimError;
use crate::geometry::{
    BoundingBox, ClassLabel, Detection, SValueSample, SValueSeries, Track, TrackSource,
};

/// Stroke frequencies must stay below this physical ceiling (Hz).
pub const MAX_STROKE_FREQ_HZ: f64 = 3.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub n_lanes: u32,
    pub duration_s: f64,
    pub fps: f64,
    /// Pixels per frame, positive to the right.
    pub swimmer_speed: f64,
    /// One frequency per lane, or a single value for every lane.
    pub stroke_freq_hz: Vec<f64>,
    /// Standard deviation of detection center jitter, pixels.
    pub det_noise_px: f64,
    pub miss_rate: f64,
    /// Expected false detections per frame.
    pub fp_rate: f64,
    /// Standard deviation of additive s-value noise on swimming frames.
    pub s_noise: f64,
    /// Non-swimming `[start_s, end_s)` intervals, shared by all lanes.
    pub turn_windows: Vec<(f64, f64)>,
    pub seed: u64,
    /// Per-lane phase offsets in radians; spread evenly when absent.
    pub phases: Option<Vec<f64>>,
    pub frame_width: f64,
    pub frame_height: f64,
    pub box_width: f64,
    pub box_height: f64,
    pub start_x: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n_lanes: 8,
            duration_s: 60.0,
            fps: 30.0,
            swimmer_speed: 1.0,
            stroke_freq_hz: (0..8).map(|i| 0.5 + i as f64 / 7.0).collect(),
            det_noise_px: 0.0,
            miss_rate: 0.0,
            fp_rate: 0.0,
            s_noise: 0.0,
            turn_windows: Vec::new(),
            seed: 0,
            phases: None,
            frame_width: 1920.0,
            frame_height: 1080.0,
            box_width: 80.0,
            box_height: 36.0,
            start_x: 40.0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |msg: String| Err(SimError::InvalidConfig(msg));
        if self.n_lanes == 0 {
            return bad("n_lanes must be at least 1".into());
        }
        for (name, v) in [
            ("duration_s", self.duration_s),
            ("fps", self.fps),
            ("frame_width", self.frame_width),
            ("frame_height", self.frame_height),
            ("box_width", self.box_width),
            ("box_height", self.box_height),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if !self.swimmer_speed.is_finite() || !self.start_x.is_finite() {
            return bad("swimmer_speed and start_x must be finite".into());
        }
        let n = self.n_lanes as usize;
        if self.stroke_freq_hz.len() != 1 && self.stroke_freq_hz.len() != n {
            return bad(format!(
                "stroke_freq_hz needs 1 or {n} values, got {}",
                self.stroke_freq_hz.len()
            ));
        }
        if let Some(f) = self
            .stroke_freq_hz
            .iter()
            .find(|f| !(**f > 0.0 && **f < MAX_STROKE_FREQ_HZ))
        {
            return bad(format!(
                "stroke frequency {f} Hz outside (0, {MAX_STROKE_FREQ_HZ})"
            ));
        }
        for (name, p) in [("miss_rate", self.miss_rate)] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} must lie in [0, 1], got {p}"));
            }
        }
        for (name, v) in [
            ("fp_rate", self.fp_rate),
            ("det_noise_px", self.det_noise_px),
            ("s_noise", self.s_noise),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!("{name} must be non-negative, got {v}"));
            }
        }
        if let Some(&(a, b)) = self
            .turn_windows
            .iter()
            .find(|(a, b)| a.partial_cmp(b) != Some(std::cmp::Ordering::Less))
        {
            return bad(format!("turn window ({a}, {b}) is empty"));
        }
        if let Some(phases) = &self.phases {
            if phases.len() != n || phases.iter().any(|p| !p.is_finite()) {
                return bad(format!("phases needs {n} finite values"));
            }
        }
        if self.box_height > self.lane_height() {
            return bad(format!(
                "box_height {} exceeds lane height {}",
                self.box_height,
                self.lane_height()
            ));
        }
        if self.box_width > self.frame_width {
            return bad("box_width exceeds frame_width".into());
        }
        Ok(())
    }

    pub fn n_frames(&self) -> u32 {
        (self.duration_s * self.fps).round() as u32
    }

    pub fn lane_height(&self) -> f64 {
        self.frame_height / self.n_lanes as f64
    }

    /// Frequency of lane index `i` (0-based).
    pub fn frequency(&self, i: usize) -> f64 {
        if self.stroke_freq_hz.len() == 1 {
            self.stroke_freq_hz[0]
        } else {
            self.stroke_freq_hz[i]
        }
    }

    pub fn phase(&self, i: usize) -> f64 {
        match &self.phases {
            Some(p) => p[i],
            None => (TAU * i as f64 / self.n_lanes as f64 + 0.3).rem_euclid(TAU),
        }
    }

    pub fn is_swimming(&self, t: f64) -> bool {
        !self.turn_windows.iter().any(|&(a, b)| t >= a && t < b)
    }

    /// Ground-truth box of lane index `i` at `frame`.
    pub fn lane_box(&self, i: usize, frame: u32) -> BoundingBox {
        let center_y = (i as f64 + 0.5) * self.lane_height();
        BoundingBox {
            x: self.start_x + self.swimmer_speed * frame as f64,
            y: center_y - 0.5 * self.box_height,
            w: self.box_width,
            h: self.box_height,
        }
    }

    /// Clean stroke phase of lane index `i` at time `t`.
    pub fn s_value(&self, i: usize, t: f64) -> f64 {
        if !self.is_swimming(t) {
            return SValueSeries::NEUTRAL;
        }
        (0.5 + 0.5 * (TAU * self.frequency(i) * t + self.phase(i)).sin()).clamp(0.0, 1.0)
    }

    /// Analytic stroke tops of lane index `i`, in fractional frames, that fall
    /// in swimming time.
    pub fn true_peaks(&self, i: usize) -> Vec<f64> {
        let f = self.frequency(i);
        let offset = (PI / 2.0 - self.phase(i)) / TAU;
        let duration = self.n_frames() as f64 / self.fps;
        let mut k = (-offset).ceil() as i64;
        let mut peaks = Vec::new();
        loop {
            let t = (offset + k as f64) / f;
            if t >= duration {
                break;
            }
            if t >= 0.0 && self.is_swimming(t) {
                peaks.push(t * self.fps);
            }
            k += 1;
        }
        peaks
    }
}

/// Stroke tops of one simulated swimmer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LanePeaks {
    pub track_id: u32,
    pub lane: i32,
    pub stroke_freq_hz: f64,
    pub peaks: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimOutput {
    pub ground_truth: Vec<Track>,
    pub detections: Vec<Detection>,
    /// Observed s-values: clean phase plus noise.
    pub svalues: Vec<SValueSeries>,
    /// Clean s-values.
    pub truth_svalues: Vec<SValueSeries>,
    pub true_peaks: Vec<LanePeaks>,
}

/// Generate a race. Lanes are numbered from 1; a lane's ground-truth track id
/// equals its lane number.
pub fn generate(config: &SimConfig) -> Result<SimOutput, SimError> {
    config.validate()?;
    let n_lanes = config.n_lanes as usize;
    let n_frames = config.n_frames();
    // Separate streams so changing one noise source leaves the others intact.
    let mut det_rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut s_rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed_5eed_5eed_5eed);
    let jitter = Normal::new(0.0, config.det_noise_px)
        .map_err(|e| SimError::InvalidConfig(e.to_string()))?;
    let s_jitter =
        Normal::new(0.0, config.s_noise).map_err(|e| SimError::InvalidConfig(e.to_string()))?;
    let clutter = if config.fp_rate > 0.0 {
        Some(Poisson::new(config.fp_rate).map_err(|e| SimError::InvalidConfig(e.to_string()))?)
    } else {
        None
    };

    let mut ground_truth: Vec<Track> = (0..n_lanes)
        .map(|i| {
            let mut t = Track::new(i as u32 + 1, TrackSource::GroundTruth);
            t.lane = Some(i as i32 + 1);
            t
        })
        .collect();
    let mut detections = Vec::new();
    for frame in 0..n_frames {
        let t = frame as f64 / config.fps;
        let class_label = if config.is_swimming(t) {
            ClassLabel::Swimming
        } else {
            ClassLabel::Turning
        };
        for (i, track) in ground_truth.iter_mut().enumerate() {
            let truth = config.lane_box(i, frame);
            track.entries.push((frame, truth));
            if det_rng.random::<f64>() < config.miss_rate {
                continue;
            }
            let (dx, dy) = if config.det_noise_px > 0.0 {
                (jitter.sample(&mut det_rng), jitter.sample(&mut det_rng))
            } else {
                (0.0, 0.0)
            };
            detections.push(Detection {
                frame,
                bbox: BoundingBox {
                    x: truth.x + dx,
                    y: truth.y + dy,
                    ..truth
                },
                confidence: 0.9,
                class_label,
                lane: Some(i as i32 + 1),
            });
        }
        if let Some(clutter) = &clutter {
            let count = clutter.sample(&mut det_rng) as u64;
            for _ in 0..count {
                let x = det_rng.random::<f64>() * (config.frame_width - config.box_width);
                let y = det_rng.random::<f64>() * (config.frame_height - config.box_height);
                detections.push(Detection {
                    frame,
                    bbox: BoundingBox {
                        x,
                        y,
                        w: config.box_width,
                        h: config.box_height,
                    },
                    confidence: det_rng.random_range(0.3..0.6),
                    class_label: ClassLabel::Swimming,
                    lane: None,
                });
            }
        }
    }

    let mut svalues = Vec::with_capacity(n_lanes);
    let mut truth_svalues = Vec::with_capacity(n_lanes);
    for i in 0..n_lanes {
        let mut observed = Vec::with_capacity(n_frames as usize);
        let mut clean = Vec::with_capacity(n_frames as usize);
        for frame in 0..n_frames {
            let t = frame as f64 / config.fps;
            let swimming = config.is_swimming(t);
            let s = config.s_value(i, t);
            clean.push(SValueSample {
                frame,
                s_value: s,
                swimming,
            });
            let noisy = if swimming && config.s_noise > 0.0 {
                (s + s_jitter.sample(&mut s_rng)).clamp(0.0, 1.0)
            } else {
                s
            };
            observed.push(SValueSample {
                frame,
                s_value: noisy,
                swimming,
            });
        }
        let id = i as u32 + 1;
        svalues.push(SValueSeries {
            track_id: id,
            fps: config.fps,
            samples: observed,
        });
        truth_svalues.push(SValueSeries {
            track_id: id,
            fps: config.fps,
            samples: clean,
        });
    }

    let true_peaks = (0..n_lanes)
        .map(|i| LanePeaks {
            track_id: i as u32 + 1,
            lane: i as i32 + 1,
            stroke_freq_hz: config.frequency(i),
            peaks: config.true_peaks(i),
        })
        .collect();

    Ok(SimOutput {
        ground_truth,
        detections,
        svalues,
        truth_svalues,
        true_peaks,
    })
}
