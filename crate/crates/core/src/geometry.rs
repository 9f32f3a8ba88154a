//! Boxes, detections, tracks and stroke-value series shared by every stage
//! of the pipeline.

use serde::{Deserialize, Serialize};
use std::fmt;

use crate::error::GeometryError;

/// Axis-aligned box in top-left + size form, pixel units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

/// Center form of a box: centroid `(u, v)`, area `s` and aspect ratio `r = w / h`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateForm {
    pub u: f64,
    pub v: f64,
    pub s: f64,
    pub r: f64,
}

impl BoundingBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Result<Self, GeometryError> {
        if !(x.is_finite() && y.is_finite() && w.is_finite() && h.is_finite()) {
            return Err(GeometryError::NonFinite);
        }
        if w <= 0.0 || h <= 0.0 {
            return Err(GeometryError::NonPositiveSize { w, h });
        }
        Ok(Self { x, y, w, h })
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn right(&self) -> f64 {
        self.x + self.w
    }

    pub fn bottom(&self) -> f64 {
        self.y + self.h
    }

    pub fn center(&self) -> (f64, f64) {
        (self.x + 0.5 * self.w, self.y + 0.5 * self.h)
    }

    pub fn to_state_form(&self) -> StateForm {
        StateForm {
            u: self.x + 0.5 * self.w,
            v: self.y + 0.5 * self.h,
            s: self.w * self.h,
            r: self.w / self.h,
        }
    }

    /// Inverse of [`BoundingBox::to_state_form`]: `w = sqrt(s * r)`, `h = sqrt(s / r)`.
    pub fn from_state_form(state: StateForm) -> Result<Self, GeometryError> {
        if state.s <= 0.0 || state.r <= 0.0 {
            return Err(GeometryError::NonPositiveSize {
                w: state.s,
                h: state.r,
            });
        }
        let w = (state.s * state.r).sqrt();
        let h = (state.s / state.r).sqrt();
        Self::new(state.u - 0.5 * w, state.v - 0.5 * h, w, h)
    }

    /// Grow the box by `pad` on every side.
    pub fn expand(&self, pad: f64) -> Self {
        Self {
            x: self.x - pad,
            y: self.y - pad,
            w: self.w + 2.0 * pad,
            h: self.h + 2.0 * pad,
        }
    }

    pub fn intersection_area(&self, other: &Self) -> f64 {
        let iw = self.right().min(other.right()) - self.x.max(other.x);
        let ih = self.bottom().min(other.bottom()) - self.y.max(other.y);
        if iw <= 0.0 || ih <= 0.0 {
            0.0
        } else {
            iw * ih
        }
    }

    pub fn iou(&self, other: &Self) -> f64 {
        iou(self, other)
    }
}

/// Intersection over union of two boxes, in `[0, 1]`.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let inter = a.intersection_area(b);
    if inter <= 0.0 {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    (inter / union).clamp(0.0, 1.0)
}

/// Detection classes, in the order used for numeric class ids 0..=5.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassLabel {
    OnBlocks,
    Diving,
    Swimming,
    Underwater,
    Turning,
    Finishing,
}

impl ClassLabel {
    pub const ALL: [ClassLabel; 6] = [
        ClassLabel::OnBlocks,
        ClassLabel::Diving,
        ClassLabel::Swimming,
        ClassLabel::Underwater,
        ClassLabel::Turning,
        ClassLabel::Finishing,
    ];

    pub fn id(self) -> u8 {
        self as u8
    }

    pub fn from_id(id: i64) -> Option<Self> {
        usize::try_from(id)
            .ok()
            .and_then(|i| Self::ALL.get(i).copied())
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ClassLabel::OnBlocks => "on_blocks",
            ClassLabel::Diving => "diving",
            ClassLabel::Swimming => "swimming",
            ClassLabel::Underwater => "underwater",
            ClassLabel::Turning => "turning",
            ClassLabel::Finishing => "finishing",
        }
    }
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One detector output for one frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub frame: u32,
    pub bbox: BoundingBox,
    pub confidence: f64,
    pub class_label: ClassLabel,
    pub lane: Option<i32>,
}

impl Detection {
    pub fn new(frame: u32, bbox: BoundingBox) -> Self {
        Self {
            frame,
            bbox,
            confidence: 1.0,
            class_label: ClassLabel::Swimming,
            lane: None,
        }
    }

    pub fn with_lane(mut self, lane: i32) -> Self {
        self.lane = Some(lane);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrackSource {
    Tracker,
    GroundTruth,
}

/// Identity-stamped box sequence, strictly increasing in frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Track {
    pub track_id: u32,
    pub entries: Vec<(u32, BoundingBox)>,
    pub source: TrackSource,
    pub lane: Option<i32>,
}

impl Track {
    pub fn new(track_id: u32, source: TrackSource) -> Self {
        Self {
            track_id,
            entries: Vec::new(),
            source,
            lane: None,
        }
    }

    /// Append an entry; the frame must be later than the last one.
    pub fn push(&mut self, frame: u32, bbox: BoundingBox) -> Result<(), GeometryError> {
        if let Some(&(last, _)) = self.entries.last() {
            if frame <= last {
                return Err(GeometryError::NonIncreasingFrame {
                    track_id: self.track_id,
                    frame,
                    previous: last,
                });
            }
        }
        self.entries.push((frame, bbox));
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn first_frame(&self) -> Option<u32> {
        self.entries.first().map(|e| e.0)
    }

    pub fn last_frame(&self) -> Option<u32> {
        self.entries.last().map(|e| e.0)
    }

    pub fn box_at(&self, frame: u32) -> Option<BoundingBox> {
        self.entries
            .binary_search_by_key(&frame, |e| e.0)
            .ok()
            .map(|i| self.entries[i].1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SValueSample {
    pub frame: u32,
    pub s_value: f64,
    pub swimming: bool,
}

/// Per-frame stroke phase values for one swimmer sub-video.
///
/// `1` marks the top of a stroke, `0` the bottom; frames where the swimmer is
/// not swimming carry exactly `0.5`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SValueSeries {
    pub track_id: u32,
    pub fps: f64,
    pub samples: Vec<SValueSample>,
}

impl SValueSeries {
    pub const NEUTRAL: f64 = 0.5;

    pub fn new(track_id: u32, fps: f64, samples: Vec<SValueSample>) -> Result<Self, GeometryError> {
        let series = Self {
            track_id,
            fps,
            samples,
        };
        series.validate()?;
        Ok(series)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return Err(GeometryError::InvalidFps(self.fps));
        }
        let mut previous: Option<u32> = None;
        for sample in &self.samples {
            if !(0.0..=1.0).contains(&sample.s_value) {
                return Err(GeometryError::SValueOutOfRange {
                    frame: sample.frame,
                    value: sample.s_value,
                });
            }
            if !sample.swimming && sample.s_value != Self::NEUTRAL {
                return Err(GeometryError::NonNeutralIdle {
                    frame: sample.frame,
                    value: sample.s_value,
                });
            }
            if let Some(prev) = previous {
                if sample.frame <= prev {
                    return Err(GeometryError::NonIncreasingFrame {
                        track_id: self.track_id,
                        frame: sample.frame,
                        previous: prev,
                    });
                }
            }
            previous = Some(sample.frame);
        }
        Ok(())
    }

    pub fn values(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.s_value).collect()
    }

    pub fn swimming(&self) -> Vec<bool> {
        self.samples.iter().map(|s| s.swimming).collect()
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}
