//! File formats.
//!
//! Detection and track files share one CSV layout:
//! `frame,track_id,x,y,w,h,confidence,class_id,lane` with `track_id = -1`
//! for raw detections and `lane = -1` when unknown. S-value files are
//! `frame,s_value,swimming`. Reports and configs are JSON. Floating-point
//! output carries six significant digits.

use std::collections::BTreeMap;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::IoError;
use crate::geometry::{
    BoundingBox, ClassLabel, Detection, SValueSample, SValueSeries, Track, TrackSource,
};
use crate::stroke::{StrokeRate, StrokeSeries};

pub const DETECTION_HEADER: [&str; 9] = [
    "frame",
    "track_id",
    "x",
    "y",
    "w",
    "h",
    "confidence",
    "class_id",
    "lane",
];
pub const SVALUE_HEADER: [&str; 3] = ["frame", "s_value", "swimming"];

/// Round to six significant digits.
pub fn round_sig(v: f64) -> f64 {
    if !v.is_finite() || v == 0.0 {
        return v;
    }
    format!("{v:.5e}").parse().unwrap_or(v)
}

/// Six-significant-digit text form, without trailing zeros.
pub fn fmt_sig(v: f64) -> String {
    let r = round_sig(v);
    if r == 0.0 {
        "0".to_string()
    } else {
        format!("{r}")
    }
}

/// One line of a detection or track file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionFileRow {
    pub frame: u32,
    pub track_id: i64,
    pub bbox: BoundingBox,
    pub confidence: f64,
    pub class_id: u8,
    pub lane: i32,
}

impl DetectionFileRow {
    pub fn from_detection(d: &Detection) -> Self {
        Self {
            frame: d.frame,
            track_id: -1,
            bbox: d.bbox,
            confidence: d.confidence,
            class_id: d.class_label.id(),
            lane: d.lane.unwrap_or(-1),
        }
    }

    pub fn to_detection(&self) -> Detection {
        Detection {
            frame: self.frame,
            bbox: self.bbox,
            confidence: self.confidence,
            class_label: ClassLabel::from_id(self.class_id as i64).unwrap_or(ClassLabel::Swimming),
            lane: (self.lane >= 0).then_some(self.lane),
        }
    }

    fn fields(&self) -> [String; 9] {
        [
            self.frame.to_string(),
            self.track_id.to_string(),
            fmt_sig(self.bbox.x),
            fmt_sig(self.bbox.y),
            fmt_sig(self.bbox.w),
            fmt_sig(self.bbox.h),
            fmt_sig(self.confidence),
            self.class_id.to_string(),
            self.lane.to_string(),
        ]
    }
}

fn malformed(line: u64, message: impl Into<String>) -> IoError {
    IoError::MalformedRow {
        line,
        message: message.into(),
    }
}

fn parse_field<T: std::str::FromStr>(
    record: &csv::StringRecord,
    idx: usize,
    name: &str,
    line: u64,
) -> Result<T, IoError> {
    let raw = record.get(idx).unwrap_or("").trim();
    raw.parse()
        .map_err(|_| malformed(line, format!("{name}: cannot parse {raw:?}")))
}

/// Numeric-looking first field means there is no header line.
fn is_header(record: &csv::StringRecord) -> bool {
    record
        .get(0)
        .is_some_and(|f| f.trim().parse::<f64>().is_err())
}

fn csv_records(
    reader: impl Read,
    columns: usize,
) -> Result<Vec<(u64, csv::StringRecord)>, IoError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut out = Vec::new();
    for (i, result) in rdr.records().enumerate() {
        let record = result.map_err(|e| {
            let line = e.position().map_or(i as u64 + 1, |p| p.line());
            malformed(line, e.to_string())
        })?;
        let line = record.position().map_or(i as u64 + 1, |p| p.line());
        if i == 0 && is_header(&record) {
            continue;
        }
        if record.len() == 1 && record.get(0) == Some("") {
            continue;
        }
        if record.len() != columns {
            return Err(malformed(
                line,
                format!("expected {columns} columns, found {}", record.len()),
            ));
        }
        out.push((line, record));
    }
    Ok(out)
}

pub fn read_detection_rows(reader: impl Read) -> Result<Vec<DetectionFileRow>, IoError> {
    Ok(read_numbered_detection_rows(reader)?
        .into_iter()
        .map(|(_, row)| row)
        .collect())
}

/// Rows paired with their 1-based line number in the file.
pub fn read_numbered_detection_rows(
    reader: impl Read,
) -> Result<Vec<(u64, DetectionFileRow)>, IoError> {
    csv_records(reader, DETECTION_HEADER.len())?
        .into_iter()
        .map(|(line, r)| {
            let frame: i64 = parse_field(&r, 0, "frame", line)?;
            let frame = u32::try_from(frame)
                .map_err(|_| malformed(line, format!("frame {frame} out of range")))?;
            let x: f64 = parse_field(&r, 2, "x", line)?;
            let y: f64 = parse_field(&r, 3, "y", line)?;
            let w: f64 = parse_field(&r, 4, "w", line)?;
            let h: f64 = parse_field(&r, 5, "h", line)?;
            let bbox = BoundingBox::new(x, y, w, h).map_err(|e| malformed(line, e.to_string()))?;
            let confidence: f64 = parse_field(&r, 6, "confidence", line)?;
            if !(0.0..=1.0).contains(&confidence) {
                return Err(malformed(
                    line,
                    format!("confidence {confidence} outside [0, 1]"),
                ));
            }
            let class_id: i64 = parse_field(&r, 7, "class_id", line)?;
            if ClassLabel::from_id(class_id).is_none() {
                return Err(malformed(line, format!("class_id {class_id} not in 0..=5")));
            }
            Ok((
                line,
                DetectionFileRow {
                    frame,
                    track_id: parse_field(&r, 1, "track_id", line)?,
                    bbox,
                    confidence,
                    class_id: class_id as u8,
                    lane: parse_field(&r, 8, "lane", line)?,
                },
            ))
        })
        .collect()
}

/// Detections from a file whose frames never decrease.
pub fn read_detections_in_order(reader: impl Read) -> Result<Vec<Detection>, IoError> {
    let rows = read_numbered_detection_rows(reader)?;
    if let Some(w) = rows.windows(2).find(|w| w[1].1.frame < w[0].1.frame) {
        return Err(malformed(
            w[1].0,
            format!("frame {} after frame {}", w[1].1.frame, w[0].1.frame),
        ));
    }
    Ok(rows.iter().map(|(_, row)| row.to_detection()).collect())
}

pub fn write_detection_rows(
    mut writer: impl Write,
    rows: &[DetectionFileRow],
) -> Result<(), IoError> {
    writeln!(writer, "{}", DETECTION_HEADER.join(","))?;
    for row in rows {
        writeln!(writer, "{}", row.fields().join(","))?;
    }
    Ok(())
}

pub fn read_detections(reader: impl Read) -> Result<Vec<Detection>, IoError> {
    Ok(read_detection_rows(reader)?
        .iter()
        .map(DetectionFileRow::to_detection)
        .collect())
}

pub fn write_detections(writer: impl Write, detections: &[Detection]) -> Result<(), IoError> {
    let rows: Vec<_> = detections
        .iter()
        .map(DetectionFileRow::from_detection)
        .collect();
    write_detection_rows(writer, &rows)
}

/// Group rows by `track_id` (negative ids are rejected) into tracks. A track's
/// lane is the most frequent known lane among its rows.
pub fn rows_to_tracks(
    rows: &[DetectionFileRow],
    source: TrackSource,
) -> Result<Vec<Track>, IoError> {
    let mut grouped: BTreeMap<u32, (Track, BTreeMap<i32, usize>)> = BTreeMap::new();
    for (i, row) in rows.iter().enumerate() {
        let id = u32::try_from(row.track_id)
            .ok()
            .filter(|&id| id > 0)
            .ok_or_else(|| {
                IoError::Schema(format!(
                    "row {}: track_id {} is not a positive id",
                    i + 1,
                    row.track_id
                ))
            })?;
        let (track, votes) = grouped
            .entry(id)
            .or_insert_with(|| (Track::new(id, source), BTreeMap::new()));
        track
            .push(row.frame, row.bbox)
            .map_err(|e| IoError::Schema(format!("row {}: {e}", i + 1)))?;
        if row.lane >= 0 {
            *votes.entry(row.lane).or_default() += 1;
        }
    }
    Ok(grouped
        .into_values()
        .map(|(mut t, votes)| {
            let mut best: Option<(i32, usize)> = None;
            for (lane, n) in votes {
                if best.is_none_or(|(_, m)| n > m) {
                    best = Some((lane, n));
                }
            }
            t.lane = best.map(|b| b.0);
            t
        })
        .collect())
}

/// Rows for every track entry, ordered by frame then track id.
pub fn tracks_to_rows(tracks: &[Track]) -> Vec<DetectionFileRow> {
    let mut rows: Vec<DetectionFileRow> = tracks
        .iter()
        .flat_map(|t| {
            t.entries
                .iter()
                .map(move |&(frame, bbox)| DetectionFileRow {
                    frame,
                    track_id: t.track_id as i64,
                    bbox,
                    confidence: 1.0,
                    class_id: ClassLabel::Swimming.id(),
                    lane: t.lane.unwrap_or(-1),
                })
        })
        .collect();
    rows.sort_by_key(|r| (r.frame, r.track_id));
    rows
}

pub fn read_tracks(reader: impl Read, source: TrackSource) -> Result<Vec<Track>, IoError> {
    rows_to_tracks(&read_detection_rows(reader)?, source)
}

pub fn write_tracks(writer: impl Write, tracks: &[Track]) -> Result<(), IoError> {
    write_detection_rows(writer, &tracks_to_rows(tracks))
}

pub fn read_svalues(reader: impl Read, track_id: u32, fps: f64) -> Result<SValueSeries, IoError> {
    let mut samples = Vec::new();
    for (line, r) in csv_records(reader, SVALUE_HEADER.len())? {
        let frame: i64 = parse_field(&r, 0, "frame", line)?;
        let frame = u32::try_from(frame)
            .map_err(|_| malformed(line, format!("frame {frame} out of range")))?;
        let s_value: f64 = parse_field(&r, 1, "s_value", line)?;
        if !(0.0..=1.0).contains(&s_value) {
            return Err(malformed(line, format!("s_value {s_value} outside [0, 1]")));
        }
        let swimming = match r.get(2).unwrap_or("") {
            "1" => true,
            "0" => false,
            other => {
                return Err(malformed(
                    line,
                    format!("swimming must be 0 or 1, got {other:?}"),
                ))
            }
        };
        if let Some(prev) = samples.last().map(|s: &SValueSample| s.frame) {
            if frame <= prev {
                return Err(malformed(
                    line,
                    format!("frame {frame} does not follow {prev}"),
                ));
            }
        }
        samples.push(SValueSample {
            frame,
            s_value,
            swimming,
        });
    }
    Ok(SValueSeries {
        track_id,
        fps,
        samples,
    })
}

pub fn write_svalues(mut writer: impl Write, series: &SValueSeries) -> Result<(), IoError> {
    writeln!(writer, "{}", SVALUE_HEADER.join(","))?;
    for s in &series.samples {
        writeln!(
            writer,
            "{},{},{}",
            s.frame,
            fmt_sig(s.s_value),
            u8::from(s.swimming)
        )?;
    }
    Ok(())
}

/// Output of stroke extraction for one sub-video.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrokesFile {
    pub peaks: Vec<f64>,
    pub rates: Vec<StrokeRate>,
}

impl From<&StrokeSeries> for StrokesFile {
    fn from(s: &StrokeSeries) -> Self {
        Self {
            peaks: s.peak_positions.clone(),
            rates: s.rates.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct LanePeaksEntry {
    track_id: u32,
    peaks: Vec<f64>,
}

/// Read a list of peaks from either `{"peaks": [...]}` or a multi-lane
/// `{"lanes": [{"track_id": .., "peaks": [...]}, ..]}` file, in which case
/// `track_id` selects the lane entry.
pub fn peaks_from_json(value: &Value, track_id: Option<u32>) -> Result<Vec<f64>, IoError> {
    if let Some(peaks) = value.get("peaks") {
        return serde_json::from_value(peaks.clone())
            .map_err(|e| IoError::Schema(format!("peaks: {e}")));
    }
    if let Some(lanes) = value.get("lanes") {
        let lanes: Vec<LanePeaksEntry> = serde_json::from_value(lanes.clone())
            .map_err(|e| IoError::Schema(format!("lanes: {e}")))?;
        let wanted = match (track_id, lanes.len()) {
            (Some(id), _) => id,
            (None, 1) => lanes[0].track_id,
            (None, n) => {
                return Err(IoError::Schema(format!(
                    "file holds {n} lanes; select one by track id"
                )))
            }
        };
        return lanes
            .into_iter()
            .find(|l| l.track_id == wanted)
            .map(|l| l.peaks)
            .ok_or_else(|| IoError::Schema(format!("no lane with track_id {wanted}")));
    }
    Err(IoError::Schema(
        "expected a \"peaks\" or \"lanes\" field".into(),
    ))
}

/// Recursively round every float in a JSON value to six significant digits.
pub fn round_json(value: &mut Value) {
    match value {
        Value::Number(n) if n.is_f64() => {
            if let Some(r) = n
                .as_f64()
                .map(round_sig)
                .and_then(serde_json::Number::from_f64)
            {
                *n = r;
            }
        }
        Value::Array(items) => items.iter_mut().for_each(round_json),
        Value::Object(map) => map.values_mut().for_each(round_json),
        _ => {}
    }
}

pub fn to_json_string<T: Serialize>(value: &T) -> Result<String, IoError> {
    let mut v = serde_json::to_value(value)?;
    round_json(&mut v);
    let mut s = serde_json::to_string_pretty(&v)?;
    s.push('\n');
    Ok(s)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, IoError> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| IoError::Schema(format!("{}: {e}", path.display())))
}

/// Write via a temporary file in the target directory, then rename.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), IoError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents)?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| IoError::Io(e.error))?;
    Ok(())
}

pub fn write_json_atomic<T: Serialize>(path: &Path, value: &T) -> Result<(), IoError> {
    write_atomic(path, to_json_string(value)?.as_bytes())
}
