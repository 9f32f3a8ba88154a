//! Stroke-phase smoothing, stroke-top extraction and stroke rates.
//!
//! A per-frame s-value series is low-passed with a zero-phase Butterworth
//! filter, thresholded at its mean into a square wave, and each run of ones
//! is reduced to its mean position: the top of one stroke.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::StrokeError;
use crate::geometry::SValueSeries;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterSpec {
    pub order: usize,
    pub cutoff_hz: f64,
    pub fps: f64,
}

impl Default for FilterSpec {
    fn default() -> Self {
        Self {
            order: 8,
            cutoff_hz: 3.0,
            fps: 30.0,
        }
    }
}

impl FilterSpec {
    pub fn with_fps(fps: f64) -> Self {
        Self {
            fps,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), StrokeError> {
        if self.order < 2 || !self.order.is_multiple_of(2) {
            return Err(StrokeError::InvalidSpec(format!(
                "order must be even and at least 2, got {}",
                self.order
            )));
        }
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return Err(StrokeError::InvalidSpec(format!(
                "fps must be positive, got {}",
                self.fps
            )));
        }
        if !(self.cutoff_hz > 0.0 && self.cutoff_hz < 0.5 * self.fps) {
            return Err(StrokeError::InvalidSpec(format!(
                "cutoff {} Hz must lie in (0, {}) for {} fps",
                self.cutoff_hz,
                0.5 * self.fps,
                self.fps
            )));
        }
        Ok(())
    }

    /// Shortest signal the zero-phase filter accepts.
    pub fn min_len(&self) -> usize {
        3 * self.order
    }

    /// Minimum spacing of stroke tops in frames: one period of the cutoff.
    pub fn min_peak_gap(&self) -> f64 {
        self.fps / self.cutoff_hz
    }
}

/// Second-order section `(b0 + b1 z⁻¹ + b2 z⁻²) / (1 + a1 z⁻¹ + a2 z⁻²)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 2],
}

impl Biquad {
    fn response(&self, z_inv: Complex64) -> Complex64 {
        let num = self.b[0] + z_inv * (self.b[1] + z_inv * self.b[2]);
        let den = 1.0 + z_inv * (self.a[0] + z_inv * self.a[1]);
        num / den
    }

    /// Transposed direct form II state that yields a constant output equal to
    /// a constant input (each section has unit DC gain).
    fn steady_state(&self, level: f64) -> [f64; 2] {
        [(1.0 - self.b[0]) * level, (self.b[2] - self.a[1]) * level]
    }
}

/// Digital Butterworth low-pass as cascaded biquads.
#[derive(Debug, Clone, PartialEq)]
pub struct ButterworthDesign {
    pub sections: Vec<Biquad>,
    pub fps: f64,
}

impl ButterworthDesign {
    /// Bilinear transform of the analog prototype with the cutoff pre-warped,
    /// so the single-pass response is exactly -3 dB at `cutoff_hz`.
    pub fn new(spec: &FilterSpec) -> Result<Self, StrokeError> {
        spec.validate()?;
        let n = spec.order;
        let fs2 = 2.0 * spec.fps;
        let warped = fs2 * (PI * spec.cutoff_hz / spec.fps).tan();
        let sections = (0..n / 2)
            .map(|k| {
                let theta = PI * (2 * k + n + 1) as f64 / (2 * n) as f64;
                let analog = Complex64::from_polar(warped, theta);
                let pole = (fs2 + analog) / (fs2 - analog);
                let a1 = -2.0 * pole.re;
                let a2 = pole.norm_sqr();
                // double zero at z = -1, gain set for unit DC response
                let g = (1.0 + a1 + a2) / 4.0;
                Biquad {
                    b: [g, 2.0 * g, g],
                    a: [a1, a2],
                }
            })
            .collect();
        Ok(Self {
            sections,
            fps: spec.fps,
        })
    }

    pub fn response(&self, freq_hz: f64) -> Complex64 {
        let z_inv = Complex64::from_polar(1.0, -2.0 * PI * freq_hz / self.fps);
        self.sections
            .iter()
            .map(|s| s.response(z_inv))
            .fold(Complex64::new(1.0, 0.0), |acc, h| acc * h)
    }

    /// Single-pass magnitude response at `freq_hz`.
    pub fn magnitude(&self, freq_hz: f64) -> f64 {
        self.response(freq_hz).norm()
    }

    pub fn dc_gain(&self) -> f64 {
        self.sections
            .iter()
            .map(|s| (s.b[0] + s.b[1] + s.b[2]) / (1.0 + s.a[0] + s.a[1]))
            .product()
    }

    /// Causal single pass; the state starts at the steady state for
    /// `signal[0]`.
    pub fn filter(&self, signal: &[f64]) -> Vec<f64> {
        let mut out = signal.to_vec();
        let Some(&first) = signal.first() else {
            return out;
        };
        for section in &self.sections {
            let [b0, b1, b2] = section.b;
            let [a1, a2] = section.a;
            let [mut s1, mut s2] = section.steady_state(first);
            for v in out.iter_mut() {
                let x = *v;
                let y = b0 * x + s1;
                s1 = b1 * x - a1 * y + s2;
                s2 = b2 * x - a2 * y;
                *v = y;
            }
        }
        out
    }

    /// Forward-backward pass over an odd-reflected extension of the signal.
    pub fn filtfilt(&self, signal: &[f64], pad: usize) -> Vec<f64> {
        let n = signal.len();
        if n == 0 {
            return Vec::new();
        }
        let pad = pad.min(n - 1);
        let mut ext = Vec::with_capacity(n + 2 * pad);
        ext.extend((1..=pad).rev().map(|i| 2.0 * signal[0] - signal[i]));
        ext.extend_from_slice(signal);
        ext.extend((1..=pad).map(|i| 2.0 * signal[n - 1] - signal[n - 1 - i]));
        let mut y = self.filter(&ext);
        y.reverse();
        let mut y = self.filter(&y);
        y.reverse();
        y[pad..pad + n].to_vec()
    }
}

/// Zero-phase Butterworth smoothing with reflection padding of `3 * order`.
pub fn butterworth_lowpass(signal: &[f64], spec: &FilterSpec) -> Result<Vec<f64>, StrokeError> {
    let design = ButterworthDesign::new(spec)?;
    if signal.len() < spec.min_len() {
        return Err(StrokeError::SignalTooShort {
            len: signal.len(),
            min: spec.min_len(),
        });
    }
    Ok(design.filtfilt(signal, spec.min_len()))
}

/// Inclusive index range of one run of ones in the square wave.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Run {
    start: usize,
    end: usize,
}

impl Run {
    fn len(&self) -> usize {
        self.end - self.start + 1
    }

    fn center(&self) -> f64 {
        0.5 * (self.start + self.end) as f64
    }
}

fn square_wave_runs(smoothed: &[f64], swimming: &[bool]) -> Result<Vec<Run>, StrokeError> {
    if smoothed.len() != swimming.len() {
        return Err(StrokeError::LengthMismatch(smoothed.len(), swimming.len()));
    }
    let (sum, count) = smoothed
        .iter()
        .zip(swimming)
        .filter(|(_, &s)| s)
        .fold((0.0, 0usize), |(acc, n), (v, _)| (acc + v, n + 1));
    if count == 0 {
        return Err(StrokeError::EmptySwimmingRegion);
    }
    let threshold = sum / count as f64;
    let mut runs = Vec::new();
    let mut open: Option<usize> = None;
    for (i, (&v, &swim)) in smoothed.iter().zip(swimming).enumerate() {
        let high = swim && v >= threshold;
        match (high, open) {
            (true, None) => open = Some(i),
            (false, Some(start)) => {
                runs.push(Run { start, end: i - 1 });
                open = None;
            }
            _ => {}
        }
    }
    if let Some(start) = open {
        runs.push(Run {
            start,
            end: smoothed.len() - 1,
        });
    }
    Ok(runs)
}

/// Stroke tops as fractional indices: the mean index of every run where the
/// smoothed signal is at or above its mean over swimming frames.
pub fn extract_peaks(smoothed: &[f64], swimming: &[bool]) -> Result<Vec<f64>, StrokeError> {
    Ok(square_wave_runs(smoothed, swimming)?
        .iter()
        .map(Run::center)
        .collect())
}

/// Merge consecutive runs whose centers are closer than `min_gap`; a merged
/// group's position is the mean of all its member indices.
fn merge_close_runs(runs: &[Run], min_gap: f64) -> Vec<f64> {
    let mut peaks: Vec<(f64, usize)> = Vec::new();
    for run in runs {
        let (center, len) = (run.center(), run.len());
        match peaks.last_mut() {
            Some((pos, weight)) if center - *pos < min_gap => {
                let total = *weight + len;
                *pos = (*pos * *weight as f64 + center * len as f64) / total as f64;
                *weight = total;
            }
            _ => peaks.push((center, len)),
        }
    }
    peaks.into_iter().map(|p| p.0).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StrokeRate {
    /// Midpoint between the two stroke tops, in frames.
    pub frame: f64,
    /// Strokes per minute.
    pub spm: f64,
}

/// `60 · fps / gap` for each pair of neighbouring peaks.
pub fn stroke_rates(peaks: &[f64], fps: f64) -> Result<Vec<StrokeRate>, StrokeError> {
    if peaks.len() < 2 {
        return Err(StrokeError::InsufficientPeaks(peaks.len()));
    }
    Ok(peaks
        .windows(2)
        .map(|w| StrokeRate {
            frame: 0.5 * (w[0] + w[1]),
            spm: 60.0 * fps / (w[1] - w[0]),
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrokeSeries {
    pub track_id: u32,
    pub peak_positions: Vec<f64>,
    pub rates: Vec<StrokeRate>,
}

impl StrokeSeries {
    /// Overall rate: number of stroke intervals over their total duration,
    /// i.e. the harmonic mean of the per-interval rates.
    pub fn mean_rate(&self) -> Option<f64> {
        if self.rates.is_empty() {
            return None;
        }
        let inverse: f64 = self.rates.iter().map(|r| 1.0 / r.spm).sum();
        Some(self.rates.len() as f64 / inverse)
    }
}

/// Maximal index ranges `[start, end)` of consecutive swimming samples.
fn swimming_segments(swimming: &[bool]) -> Vec<(usize, usize)> {
    let mut segments = Vec::new();
    let mut start = None;
    for (i, &s) in swimming.iter().enumerate() {
        match (s, start) {
            (true, None) => start = Some(i),
            (false, Some(st)) => {
                segments.push((st, i));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(st) = start {
        segments.push((st, swimming.len()));
    }
    segments
}

/// Smooth, threshold and extract stroke tops and rates for one swimmer.
///
/// Each swimming segment is processed on its own: its own smoothing, its own
/// threshold, and no rate across a non-swimming gap. Segments shorter than
/// the filter's minimum length are skipped. Runs that touch a segment boundary
/// are cut short and do not mark a stroke top, so they are dropped.
pub fn process_series(
    series: &SValueSeries,
    spec: &FilterSpec,
) -> Result<StrokeSeries, StrokeError> {
    let design = ButterworthDesign::new(spec)?;
    if series.len() < spec.min_len() {
        return Err(StrokeError::SignalTooShort {
            len: series.len(),
            min: spec.min_len(),
        });
    }
    let values = series.values();
    let swimming = series.swimming();
    let segments = swimming_segments(&swimming);
    if segments.is_empty() {
        return Err(StrokeError::EmptySwimmingRegion);
    }

    let frame_at = |idx: f64| -> f64 {
        let lo = idx.floor() as usize;
        let frac = idx - lo as f64;
        let f0 = series.samples[lo].frame as f64;
        match series.samples.get(lo + 1) {
            Some(next) if frac > 0.0 => f0 + frac * (next.frame as f64 - f0),
            _ => f0,
        }
    };

    let mut peak_positions = Vec::new();
    let mut rates = Vec::new();
    for (start, end) in segments {
        if end - start < spec.min_len() {
            continue;
        }
        let smoothed = design.filtfilt(&values[start..end], spec.min_len());
        let flags = vec![true; smoothed.len()];
        let runs: Vec<Run> = square_wave_runs(&smoothed, &flags)?
            .into_iter()
            .filter(|r| r.start > 0 && r.end + 1 < smoothed.len())
            .collect();
        let peaks: Vec<f64> = merge_close_runs(&runs, spec.min_peak_gap())
            .into_iter()
            .map(|p| frame_at(start as f64 + p))
            .collect();
        if peaks.len() >= 2 {
            rates.extend(stroke_rates(&peaks, spec.fps)?);
        }
        peak_positions.extend(peaks);
    }
    Ok(StrokeSeries {
        track_id: series.track_id,
        peak_positions,
        rates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::SValueSample;

    fn sine(freq: f64, fps: f64, n: usize, phase: f64) -> Vec<f64> {
        (0..n)
            .map(|i| 0.5 + 0.5 * (2.0 * PI * freq * i as f64 / fps + phase).sin())
            .collect()
    }

    /// Least-squares amplitude and phase of a sinusoid of known frequency.
    fn fit_sine(signal: &[f64], freq: f64, fps: f64, range: std::ops::Range<usize>) -> (f64, f64) {
        let (mut ss, mut sc, mut cc, mut ys, mut yc) = (0.0, 0.0, 0.0, 0.0, 0.0);
        let mean: f64 = signal[range.clone()].iter().sum::<f64>() / range.len() as f64;
        for i in range {
            let w = 2.0 * PI * freq * i as f64 / fps;
            let (s, c) = w.sin_cos();
            let y = signal[i] - mean;
            ss += s * s;
            sc += s * c;
            cc += c * c;
            ys += y * s;
            yc += y * c;
        }
        let det = ss * cc - sc * sc;
        let a = (ys * cc - yc * sc) / det;
        let b = (yc * ss - ys * sc) / det;
        ((a * a + b * b).sqrt(), b.atan2(a))
    }

    /// Analytic squared magnitude of a bilinear Butterworth low-pass.
    fn analytic_magnitude(order: usize, cutoff: f64, fps: f64, f: f64) -> f64 {
        let ratio = (PI * f / fps).tan() / (PI * cutoff / fps).tan();
        (1.0 / (1.0 + ratio.powi(2 * order as i32))).sqrt()
    }

    #[test]
    fn design_matches_analytic_response() {
        let spec = FilterSpec::default();
        let d = ButterworthDesign::new(&spec).unwrap();
        assert_eq!(d.sections.len(), 4);
        assert!((d.magnitude(3.0) - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
        assert!((d.dc_gain() - 1.0).abs() < 1e-12);
        for f in [0.25, 0.5, 1.0, 2.0, 2.9, 3.5, 5.0, 10.0, 14.0] {
            let want = analytic_magnitude(8, 3.0, 30.0, f);
            assert!((d.magnitude(f) - want).abs() < 1e-9, "{f} Hz");
        }
    }

    #[test]
    fn design_matches_reference_phase() {
        // Reference response of an 8th-order, 3 Hz, 30 fps design computed
        // with an independent signal-processing library.
        let reference = [
            (0.5, 0.9999999999998959, -0.8293129887141691),
            (1.0, 0.9999999928141725, -1.6793104079004295),
            (2.0, 0.9994379442676196, 2.72130881436774),
            (4.0, 0.08019406097125903, -2.2298039904663542),
            (6.0, 0.001599997952003931, 2.3509317244876176),
        ];
        let d = ButterworthDesign::new(&FilterSpec::default()).unwrap();
        for (f, mag, phase) in reference {
            let h = d.response(f);
            assert!((h.norm() - mag).abs() < 1e-9, "{f} Hz magnitude");
            let dphi = (h.arg() - phase + PI).rem_euclid(2.0 * PI) - PI;
            assert!(dphi.abs() < 1e-7, "{f} Hz phase {}", h.arg());
        }
    }

    #[test]
    fn invalid_specs_rejected() {
        for spec in [
            FilterSpec {
                cutoff_hz: 15.0,
                ..FilterSpec::default()
            },
            FilterSpec {
                fps: 5.0,
                ..FilterSpec::default()
            },
            FilterSpec {
                order: 7,
                ..FilterSpec::default()
            },
            FilterSpec {
                order: 0,
                ..FilterSpec::default()
            },
        ] {
            assert!(matches!(
                butterworth_lowpass(&[0.0; 100], &spec),
                Err(StrokeError::InvalidSpec(_))
            ));
        }
    }

    #[test]
    fn short_signal_rejected() {
        assert_eq!(
            butterworth_lowpass(&[0.0; 23], &FilterSpec::default()),
            Err(StrokeError::SignalTooShort { len: 23, min: 24 })
        );
        assert_eq!(
            butterworth_lowpass(&[0.3; 24], &FilterSpec::default())
                .unwrap()
                .len(),
            24
        );
    }

    #[test]
    fn constant_signal_is_unchanged() {
        let out = butterworth_lowpass(&[0.37; 200], &FilterSpec::default()).unwrap();
        assert_eq!(out.len(), 200);
        assert!(out.iter().all(|v| (v - 0.37).abs() < 1e-12));
    }

    #[test]
    fn one_hz_sine_keeps_amplitude_and_phase() {
        let x = sine(1.0, 30.0, 600, 0.4);
        let y = butterworth_lowpass(&x, &FilterSpec::default()).unwrap();
        let (ax, px) = fit_sine(&x, 1.0, 30.0, 60..540);
        let (ay, py) = fit_sine(&y, 1.0, 30.0, 60..540);
        assert!((ay / ax - 1.0).abs() < 0.01, "gain {}", ay / ax);
        assert!((py - px).abs() < 1e-3, "phase {px} -> {py}");
    }

    #[test]
    fn forward_backward_has_no_lag() {
        let spec = FilterSpec::default();
        for freq in [0.5, 0.8, 1.0, 1.5, 2.0] {
            let x = sine(freq, 30.0, 900, 0.0);
            let y = butterworth_lowpass(&x, &spec).unwrap();
            let corr = |lag: i32| -> f64 {
                (100..800)
                    .map(|i| (x[i] - 0.5) * (y[(i as i32 + lag) as usize] - 0.5))
                    .sum()
            };
            let best = (-5..=5)
                .max_by(|&a, &b| corr(a).total_cmp(&corr(b)))
                .unwrap();
            let (l, c, r) = (corr(best - 1), corr(best), corr(best + 1));
            let lag = best as f64 + 0.5 * (l - r) / (l - 2.0 * c + r);
            assert!(lag.abs() <= 0.5, "{freq} Hz lag {lag}");
        }
    }

    #[test]
    fn square_wave_example() {
        let q = [0.0, 0.0, 1.0, 1.0, 1.0, 0.0, 0.0, 1.0, 1.0, 0.0];
        assert_eq!(extract_peaks(&q, &[true; 10]).unwrap(), vec![3.0, 7.5]);
    }

    #[test]
    fn flat_signal_gives_single_midpoint_peak() {
        assert_eq!(extract_peaks(&[0.4; 11], &[true; 11]).unwrap(), vec![5.0]);
    }

    #[test]
    fn peaks_ignore_non_swimming_frames() {
        let v = [0.9, 0.9, 0.1, 0.9, 0.9, 0.9];
        let s = [true, true, true, false, true, true];
        // mean over swimming frames = 0.72; the idle frame breaks the run
        assert_eq!(extract_peaks(&v, &s).unwrap(), vec![0.5, 4.5]);
        assert_eq!(
            extract_peaks(&v, &[false; 6]),
            Err(StrokeError::EmptySwimmingRegion)
        );
        assert!(matches!(
            extract_peaks(&v, &[true; 5]),
            Err(StrokeError::LengthMismatch(6, 5))
        ));
    }

    #[test]
    fn sinusoid_peaks_land_on_maxima() {
        let spec = FilterSpec::default();
        let x = sine(0.75, 30.0, 600, 0.0);
        let y = butterworth_lowpass(&x, &spec).unwrap();
        let peaks = extract_peaks(&y, &[true; 600]).unwrap();
        assert_eq!(peaks.len(), 15);
        for (k, p) in peaks.iter().enumerate() {
            let truth = 10.0 + 40.0 * k as f64;
            assert!((p - truth).abs() <= 1.0, "{p} vs {truth}");
        }
    }

    #[test]
    fn rate_examples() {
        let r = stroke_rates(&[0.0, 30.0], 30.0).unwrap();
        assert_eq!(
            r,
            vec![StrokeRate {
                frame: 15.0,
                spm: 60.0
            }]
        );
        let r = stroke_rates(&[0.0, 20.0, 40.0], 30.0).unwrap();
        assert_eq!(
            r.iter().map(|r| r.spm).collect::<Vec<_>>(),
            vec![90.0, 90.0]
        );
        assert_eq!(
            stroke_rates(&[4.0], 30.0),
            Err(StrokeError::InsufficientPeaks(1))
        );
    }

    #[test]
    fn close_runs_merge() {
        let runs = [
            Run { start: 0, end: 9 },
            Run { start: 12, end: 12 },
            Run { start: 30, end: 39 },
        ];
        let merged = merge_close_runs(&runs, 10.0);
        assert_eq!(merged.len(), 2);
        assert!((merged[0] - (4.5 * 10.0 + 12.0) / 11.0).abs() < 1e-12);
        assert_eq!(merged[1], 34.5);
    }

    fn series(values: &[f64], swimming: &[bool]) -> SValueSeries {
        let samples = values
            .iter()
            .zip(swimming)
            .enumerate()
            .map(|(i, (&v, &s))| SValueSample {
                frame: i as u32,
                s_value: if s { v } else { 0.5 },
                swimming: s,
            })
            .collect();
        SValueSeries::new(3, 30.0, samples).unwrap()
    }

    #[test]
    fn clean_sinusoid_rates() {
        let x = sine(0.8, 30.0, 900, 0.3);
        let out = process_series(&series(&x, &[true; 900]), &FilterSpec::default()).unwrap();
        assert_eq!(out.track_id, 3);
        assert!(out.rates.len() >= 20);
        for r in &out.rates {
            assert!((r.spm / 48.0 - 1.0).abs() < 0.02, "{}", r.spm);
        }
        assert!((out.mean_rate().unwrap() / 48.0 - 1.0).abs() < 0.005);
    }

    #[test]
    fn turning_gap_splits_segments() {
        let n = 900;
        let x = sine(1.0, 30.0, n, 0.0);
        let swim: Vec<bool> = (0..n).map(|i| !(400..500).contains(&i)).collect();
        let out = process_series(&series(&x, &swim), &FilterSpec::default()).unwrap();
        assert!(out
            .peak_positions
            .iter()
            .all(|p| !(400.0..500.0).contains(p)));
        for r in &out.rates {
            assert!((r.spm - 60.0).abs() < 1.2, "{r:?}");
        }
        // no interval spans the gap
        assert!(out
            .rates
            .iter()
            .all(|r| !(r.frame > 399.0 && r.frame < 500.0 && r.spm < 50.0)));
        assert!(out.peak_positions.iter().any(|&p| p < 400.0));
        assert!(out.peak_positions.iter().any(|&p| p > 500.0));
    }

    #[test]
    fn process_series_errors() {
        let spec = FilterSpec::default();
        let short = series(&[0.5; 20], &[true; 20]);
        assert!(matches!(
            process_series(&short, &spec),
            Err(StrokeError::SignalTooShort { .. })
        ));
        let idle = series(&[0.5; 100], &[false; 100]);
        assert_eq!(
            process_series(&idle, &spec),
            Err(StrokeError::EmptySwimmingRegion)
        );
    }

    #[test]
    fn rates_respect_ceiling() {
        // 2.5 Hz strokes with a 3 Hz ceiling
        let spec = FilterSpec::default();
        let x = sine(2.5, 30.0, 600, 0.0);
        let out = process_series(&series(&x, &[true; 600]), &spec).unwrap();
        let ceiling = 60.0 * spec.fps / spec.min_peak_gap();
        assert!((ceiling - 180.0).abs() < 1e-12);
        assert!(out.rates.iter().all(|r| r.spm <= ceiling));
    }
}
