//! SORT-style track lifecycle: predict, associate, update, spawn, retire.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::assoc::{associate, DEFAULT_IOU_MIN};
use crate::error::TrackerError;
use crate::geometry::{BoundingBox, Detection, Track, TrackSource};
use crate::kalman::{KalmanConfig, KalmanFilter, KalmanTrackState};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrackerConfig {
    /// IoU gate for prediction/detection matches.
    pub iou_min: f64,
    /// Frames a track survives without a matched detection.
    pub max_age: u32,
    /// Consecutive matches before a track is reported.
    pub min_hits: u32,
    pub kalman: KalmanConfig,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            iou_min: DEFAULT_IOU_MIN,
            max_age: 10,
            min_hits: 3,
            kalman: KalmanConfig::default(),
        }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<(), TrackerError> {
        if !(0.0..=1.0).contains(&self.iou_min) {
            return Err(TrackerError::InvalidConfig(format!(
                "iou_min must lie in [0, 1], got {}",
                self.iou_min
            )));
        }
        if self.max_age < 1 || self.min_hits < 1 {
            return Err(TrackerError::InvalidConfig(
                "max_age and min_hits must be at least 1".into(),
            ));
        }
        self.kalman.validate()?;
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct LiveTrack {
    pub track_id: u32,
    pub kalman_state: KalmanTrackState,
    pub hit_streak: u32,
    pub frames_since_update: u32,
    /// Set once the track has been reported; it then stays reportable.
    pub confirmed: bool,
    pub history: Vec<(u32, BoundingBox)>,
    lane_votes: BTreeMap<i32, u32>,
}

impl LiveTrack {
    fn vote(&mut self, lane: Option<i32>) {
        if let Some(lane) = lane {
            *self.lane_votes.entry(lane).or_default() += 1;
        }
    }

    /// Most frequent lane among matched detections, lowest lane on ties.
    pub fn majority_lane(&self) -> Option<i32> {
        majority(&self.lane_votes)
    }
}

fn majority(votes: &BTreeMap<i32, u32>) -> Option<i32> {
    let mut best: Option<(i32, u32)> = None;
    for (&lane, &n) in votes {
        if best.is_none_or(|(_, m)| n > m) {
            best = Some((lane, n));
        }
    }
    best.map(|b| b.0)
}

/// Multi-swimmer tracker over one video sequence.
#[derive(Debug, Clone)]
pub struct Tracker {
    config: TrackerConfig,
    filter: KalmanFilter,
    live: Vec<LiveTrack>,
    retired: Vec<LiveTrack>,
    next_id: u32,
    last_frame: Option<u32>,
    frames_seen: u32,
}

impl Tracker {
    pub fn new(config: TrackerConfig) -> Result<Self, TrackerError> {
        config.validate()?;
        Ok(Self {
            filter: KalmanFilter::new(config.kalman)?,
            config,
            live: Vec::new(),
            retired: Vec::new(),
            next_id: 1,
            last_frame: None,
            frames_seen: 0,
        })
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.config
    }

    pub fn live_tracks(&self) -> &[LiveTrack] {
        &self.live
    }

    /// Advance to `frame` with its detections and return the reported
    /// `(track_id, box)` pairs, ordered by id. Reported boxes are the updated
    /// filter estimates.
    pub fn step(
        &mut self,
        frame: u32,
        detections: &[Detection],
    ) -> Result<Vec<(u32, BoundingBox)>, TrackerError> {
        let elapsed = match self.last_frame {
            Some(previous) if frame <= previous => {
                return Err(TrackerError::OutOfOrderFrame { frame, previous })
            }
            Some(previous) => frame - previous,
            None => 1,
        };
        self.last_frame = Some(frame);
        self.frames_seen += 1;

        for track in &mut self.live {
            for _ in 0..elapsed {
                track.kalman_state = self.filter.predict(&track.kalman_state);
            }
            track.kalman_state.frame = frame;
            track.frames_since_update += elapsed;
        }

        let predicted: Vec<BoundingBox> =
            self.live.iter().map(|t| t.kalman_state.to_box()).collect();
        let detected: Vec<BoundingBox> = detections.iter().map(|d| d.bbox).collect();
        let assignment = associate(&predicted, &detected, self.config.iou_min);

        for &(t, d) in &assignment.matches {
            let track = &mut self.live[t];
            track.kalman_state = self
                .filter
                .update(&track.kalman_state, &detections[d].bbox)?;
            track.hit_streak += 1;
            track.frames_since_update = 0;
            track.vote(detections[d].lane);
        }
        for &t in &assignment.unmatched_tracks {
            self.live[t].hit_streak = 0;
        }
        for &d in &assignment.unmatched_detections {
            let det = &detections[d];
            let mut track = LiveTrack {
                track_id: self.next_id,
                kalman_state: self.filter.init(&det.bbox, frame),
                hit_streak: 1,
                frames_since_update: 0,
                confirmed: false,
                history: Vec::new(),
                lane_votes: BTreeMap::new(),
            };
            track.vote(det.lane);
            self.next_id += 1;
            self.live.push(track);
        }

        let warm_up = self.frames_seen <= self.config.min_hits;
        let mut reported = Vec::new();
        for track in &mut self.live {
            if track.frames_since_update != 0 {
                continue;
            }
            if track.hit_streak >= self.config.min_hits || warm_up {
                track.confirmed = true;
            }
            if track.confirmed {
                let bbox = track.kalman_state.to_box();
                track.history.push((frame, bbox));
                reported.push((track.track_id, bbox));
            }
        }

        let max_age = self.config.max_age;
        let (keep, expired): (Vec<_>, Vec<_>) = std::mem::take(&mut self.live)
            .into_iter()
            .partition(|t| t.frames_since_update <= max_age);
        self.live = keep;
        self.retired
            .extend(expired.into_iter().filter(|t| !t.history.is_empty()));

        reported.sort_by_key(|r| r.0);
        Ok(reported)
    }

    /// Every track that was ever reported, with its reported boxes.
    pub fn finalize(self) -> Vec<Track> {
        let mut tracks: Vec<Track> = self
            .retired
            .into_iter()
            .chain(self.live)
            .filter(|t| !t.history.is_empty())
            .map(|t| {
                let lane = t.majority_lane();
                Track {
                    track_id: t.track_id,
                    entries: t.history,
                    source: TrackSource::Tracker,
                    lane,
                }
            })
            .collect();
        tracks.sort_by_key(|t| t.track_id);
        tracks
    }
}

/// Run a tracker over detections grouped by frame. Frames are visited in
/// ascending order, including frames between the first and last that have
/// no detections.
pub fn track_detections(
    config: TrackerConfig,
    detections: &[Detection],
) -> Result<Vec<Track>, TrackerError> {
    let mut tracker = Tracker::new(config)?;
    let mut by_frame: BTreeMap<u32, Vec<Detection>> = BTreeMap::new();
    for d in detections {
        by_frame.entry(d.frame).or_default().push(*d);
    }
    if let (Some(&first), Some(&last)) = (by_frame.keys().next(), by_frame.keys().next_back()) {
        for frame in first..=last {
            let dets = by_frame.get(&frame).map(Vec::as_slice).unwrap_or(&[]);
            tracker.step(frame, dets)?;
        }
    }
    Ok(tracker.finalize())
}

/// Per-frame crop rectangles for cutting a swimmer's sub-video: each box grown
/// by `pad` and clamped to the image (`bounds = (width, height)` when known,
/// otherwise only to non-negative coordinates). Frames whose crop leaves the
/// image entirely are dropped.
pub fn crop_rects(track: &Track, pad: f64, bounds: Option<(f64, f64)>) -> Vec<(u32, BoundingBox)> {
    let pad = pad.max(0.0);
    track
        .entries
        .iter()
        .filter_map(|&(frame, bbox)| {
            let grown = bbox.expand(pad);
            let x0 = grown.x.max(0.0);
            let y0 = grown.y.max(0.0);
            let (mut x1, mut y1) = (grown.right(), grown.bottom());
            if let Some((w, h)) = bounds {
                x1 = x1.min(w);
                y1 = y1.min(h);
            }
            BoundingBox::new(x0, y0, x1 - x0, y1 - y0)
                .ok()
                .map(|b| (frame, b))
        })
        .collect()
}
