//! Stroke-position metrics (F1 within a frame tolerance, ASD, SDSTD, Δ),
//! CLEAR-MOT and identity tracking metrics, and ground-truth interpolation.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::assoc::{hungarian, CostMatrix};
use crate::error::MetricsError;
use crate::geometry::{iou, BoundingBox, Track, TrackSource};

/// A predicted stroke top counts when it lies within this many frames of a
/// ground-truth top.
pub const DEFAULT_PEAK_TOLERANCE: f64 = 3.0;
pub const DEFAULT_IOU_MATCH: f64 = 0.5;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PeakMatching {
    /// `(predicted index, truth index)` pairs.
    pub pairs: Vec<(usize, usize)>,
    pub unmatched_pred: Vec<usize>,
    pub unmatched_truth: Vec<usize>,
}

/// One-to-one matching of predicted and true peaks within `tol` frames that
/// maximises the number of matches, then minimises total distance.
pub fn match_peaks(predicted: &[f64], truth: &[f64], tol: f64) -> PeakMatching {
    let k = predicted.len().min(truth.len());
    let within = |d: f64| d <= tol + 1e-9;
    // Every allowed pair is cheaper than any set of fewer allowed pairs.
    let bonus = k as f64 * tol.max(0.0) + 1.0;
    let cost = CostMatrix::from_fn(predicted.len(), truth.len(), |i, j| {
        let d = (predicted[i] - truth[j]).abs();
        if within(d) {
            d - bonus
        } else {
            0.0
        }
    });
    let pairs: Vec<(usize, usize)> = match cost {
        Ok(cost) => hungarian(&cost)
            .into_iter()
            .filter(|&(i, j)| within((predicted[i] - truth[j]).abs()))
            .collect(),
        Err(_) => Vec::new(),
    };
    let mut pred_used = vec![false; predicted.len()];
    let mut truth_used = vec![false; truth.len()];
    for &(i, j) in &pairs {
        pred_used[i] = true;
        truth_used[j] = true;
    }
    PeakMatching {
        pairs,
        unmatched_pred: (0..predicted.len()).filter(|&i| !pred_used[i]).collect(),
        unmatched_truth: (0..truth.len()).filter(|&j| !truth_used[j]).collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StrokeReport {
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
    /// Mean distance in frames from each predicted peak to its nearest true peak.
    pub asd: f64,
    /// Population standard deviation of those distances.
    pub sdstd: f64,
    /// Mean absolute difference of the s-value sequences.
    pub delta: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

fn ratio(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

/// Distance from `p` to the nearest of `truth`; ties keep the earlier peak.
fn nearest_distance(p: f64, truth: &[f64]) -> f64 {
    truth
        .iter()
        .map(|t| (p - t).abs())
        .fold(f64::INFINITY, f64::min)
}

pub fn stroke_report(
    predicted_peaks: &[f64],
    truth_peaks: &[f64],
    predicted_svalues: &[f64],
    truth_svalues: &[f64],
) -> Result<StrokeReport, MetricsError> {
    stroke_report_with_tolerance(
        predicted_peaks,
        truth_peaks,
        predicted_svalues,
        truth_svalues,
        DEFAULT_PEAK_TOLERANCE,
    )
}

pub fn stroke_report_with_tolerance(
    predicted_peaks: &[f64],
    truth_peaks: &[f64],
    predicted_svalues: &[f64],
    truth_svalues: &[f64],
    tol: f64,
) -> Result<StrokeReport, MetricsError> {
    if predicted_peaks.is_empty() || truth_peaks.is_empty() {
        return Err(MetricsError::EmptyPeaks);
    }
    if predicted_svalues.len() != truth_svalues.len() {
        return Err(MetricsError::LengthMismatch(
            predicted_svalues.len(),
            truth_svalues.len(),
        ));
    }
    let m = match_peaks(predicted_peaks, truth_peaks, tol);
    let tp = m.pairs.len();
    let fp = m.unmatched_pred.len();
    let fn_ = m.unmatched_truth.len();
    let precision = ratio(tp as f64, (tp + fp) as f64);
    let recall = ratio(tp as f64, (tp + fn_) as f64);
    let f1 = ratio(2.0 * precision * recall, precision + recall);

    let distances: Vec<f64> = predicted_peaks
        .iter()
        .map(|&p| nearest_distance(p, truth_peaks))
        .collect();
    let n = distances.len() as f64;
    let asd = distances.iter().sum::<f64>() / n;
    let sdstd = (distances.iter().map(|d| (d - asd).powi(2)).sum::<f64>() / n).sqrt();

    let delta = if truth_svalues.is_empty() {
        0.0
    } else {
        predicted_svalues
            .iter()
            .zip(truth_svalues)
            .map(|(p, t)| (p - t).abs())
            .sum::<f64>()
            / truth_svalues.len() as f64
    };

    Ok(StrokeReport {
        f1,
        precision,
        recall,
        asd,
        sdstd,
        delta,
        tp,
        fp,
        fn_,
    })
}

/// Build one ground-truth track per lane from sparse `(frame, lane, box)`
/// annotations, filling every frame between consecutive annotations by
/// component-wise linear interpolation. Tracks are numbered from 1 in
/// ascending lane order.
pub fn interpolate_ground_truth(
    sparse: &[(u32, i32, BoundingBox)],
) -> Result<Vec<Track>, MetricsError> {
    let mut by_lane: BTreeMap<i32, Vec<(u32, BoundingBox)>> = BTreeMap::new();
    for &(frame, lane, bbox) in sparse {
        by_lane.entry(lane).or_default().push((frame, bbox));
    }
    let mut tracks = Vec::with_capacity(by_lane.len());
    for (idx, (lane, mut annotations)) in by_lane.into_iter().enumerate() {
        annotations.sort_by_key(|a| a.0);
        if let Some(w) = annotations.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(MetricsError::DuplicateFrame {
                lane,
                frame: w[0].0,
            });
        }
        let mut track = Track::new(idx as u32 + 1, TrackSource::GroundTruth);
        track.lane = Some(lane);
        for w in annotations.windows(2) {
            let ((f0, a), (f1, b)) = (w[0], w[1]);
            let span = (f1 - f0) as f64;
            for f in f0..f1 {
                let t = (f - f0) as f64 / span;
                let lerp = |p: f64, q: f64| p + (q - p) * t;
                track.entries.push((
                    f,
                    BoundingBox {
                        x: lerp(a.x, b.x),
                        y: lerp(a.y, b.y),
                        w: lerp(a.w, b.w),
                        h: lerp(a.h, b.h),
                    },
                ));
            }
        }
        if let Some(&last) = annotations.last() {
            track.entries.push(last);
        }
        tracks.push(track);
    }
    Ok(tracks)
}

/// One ground-truth/hypothesis correspondence from CLEAR-MOT matching.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameMatch {
    pub frame: u32,
    pub gt_id: u32,
    pub hyp_id: u32,
    pub iou: f64,
    /// The ground-truth object was last matched to a different hypothesis.
    pub switch: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ClearMatching {
    pub matches: Vec<FrameMatch>,
    pub false_positives: usize,
    pub misses: usize,
    pub num_gt_boxes: usize,
    pub num_hyp_boxes: usize,
}

impl ClearMatching {
    pub fn id_switches(&self) -> usize {
        self.matches.iter().filter(|m| m.switch).count()
    }

    /// Ground-truth ids each hypothesis was matched to.
    pub fn gt_ids_per_hypothesis(&self) -> BTreeMap<u32, BTreeSet<u32>> {
        let mut out: BTreeMap<u32, BTreeSet<u32>> = BTreeMap::new();
        for m in &self.matches {
            out.entry(m.hyp_id).or_default().insert(m.gt_id);
        }
        out
    }
}

type FrameIndex = BTreeMap<u32, Vec<(u32, BoundingBox)>>;

fn index_by_frame(tracks: &[Track]) -> FrameIndex {
    let mut by_frame: FrameIndex = BTreeMap::new();
    for t in tracks {
        for &(frame, bbox) in &t.entries {
            by_frame.entry(frame).or_default().push((t.track_id, bbox));
        }
    }
    for objects in by_frame.values_mut() {
        objects.sort_by_key(|o| o.0);
    }
    by_frame
}

fn frame_span(tracks: &[Track]) -> Option<(u32, u32)> {
    let first = tracks.iter().filter_map(Track::first_frame).min()?;
    let last = tracks.iter().filter_map(Track::last_frame).max()?;
    Some((first, last))
}

/// Per-frame CLEAR-MOT correspondence. Matches from the previous frame are
/// kept while their IoU stays at or above `iou_match`; the remaining objects
/// are assigned by maximum match count, then minimum `1 - IoU`.
pub fn clear_match(
    hypotheses: &[Track],
    ground_truth: &[Track],
    iou_match: f64,
) -> Result<ClearMatching, MetricsError> {
    if let (Some((gt_first, gt_last)), Some((hyp_first, hyp_last))) =
        (frame_span(ground_truth), frame_span(hypotheses))
    {
        if hyp_first < gt_first || hyp_last > gt_last {
            return Err(MetricsError::FrameRangeMismatch {
                gt_first,
                gt_last,
                hyp_first,
                hyp_last,
            });
        }
    }
    let gt_frames = index_by_frame(ground_truth);
    let hyp_frames = index_by_frame(hypotheses);
    let frames: BTreeSet<u32> = gt_frames.keys().chain(hyp_frames.keys()).copied().collect();

    let mut out = ClearMatching::default();
    let mut previous: HashMap<u32, u32> = HashMap::new();
    let mut last_hyp: HashMap<u32, u32> = HashMap::new();
    let empty = Vec::new();
    for frame in frames {
        let gts = gt_frames.get(&frame).unwrap_or(&empty);
        let hyps = hyp_frames.get(&frame).unwrap_or(&empty);
        out.num_gt_boxes += gts.len();
        out.num_hyp_boxes += hyps.len();

        let mut gt_done = vec![false; gts.len()];
        let mut hyp_done = vec![false; hyps.len()];
        let mut current: HashMap<u32, u32> = HashMap::new();
        let mut record = |out: &mut ClearMatching, g: usize, h: usize, v: f64, carried: bool| {
            let (gt_id, hyp_id) = (gts[g].0, hyps[h].0);
            let switch = !carried && last_hyp.get(&gt_id).is_some_and(|&prev| prev != hyp_id);
            last_hyp.insert(gt_id, hyp_id);
            current.insert(gt_id, hyp_id);
            out.matches.push(FrameMatch {
                frame,
                gt_id,
                hyp_id,
                iou: v,
                switch,
            });
        };

        for (g, &(gt_id, gt_box)) in gts.iter().enumerate() {
            let Some(&hyp_id) = previous.get(&gt_id) else {
                continue;
            };
            if let Some(h) = hyps.iter().position(|o| o.0 == hyp_id) {
                let v = iou(&gt_box, &hyps[h].1);
                if v >= iou_match && !hyp_done[h] {
                    gt_done[g] = true;
                    hyp_done[h] = true;
                    record(&mut out, g, h, v, true);
                }
            }
        }

        let free_gt: Vec<usize> = (0..gts.len()).filter(|&g| !gt_done[g]).collect();
        let free_hyp: Vec<usize> = (0..hyps.len()).filter(|&h| !hyp_done[h]).collect();
        if !free_gt.is_empty() && !free_hyp.is_empty() {
            let ious: Vec<Vec<f64>> = free_gt
                .iter()
                .map(|&g| {
                    free_hyp
                        .iter()
                        .map(|&h| iou(&gts[g].1, &hyps[h].1))
                        .collect()
                })
                .collect();
            let forbidden = free_gt.len().min(free_hyp.len()) as f64 + 1.0;
            let cost = CostMatrix::from_fn(free_gt.len(), free_hyp.len(), |i, j| {
                if ious[i][j] >= iou_match {
                    1.0 - ious[i][j]
                } else {
                    forbidden
                }
            })
            .expect("iou costs are finite");
            for (i, j) in hungarian(&cost) {
                if ious[i][j] >= iou_match {
                    gt_done[free_gt[i]] = true;
                    hyp_done[free_hyp[j]] = true;
                    record(&mut out, free_gt[i], free_hyp[j], ious[i][j], false);
                }
            }
        }
        out.misses += gt_done.iter().filter(|d| !**d).count();
        out.false_positives += hyp_done.iter().filter(|d| !**d).count();
        previous = current;
    }
    Ok(out)
}

/// Tracking metrics; rates are percentages.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotReport {
    /// MOTA floored at 0.
    pub mota: f64,
    /// Signed MOTA before flooring.
    pub mota_raw: f64,
    /// Mean IoU of matched pairs.
    pub motp: f64,
    pub idf1: f64,
    pub idp: f64,
    pub idr: f64,
    pub gt: usize,
    pub mt: usize,
    pub pt: usize,
    pub ml: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub idsw: usize,
    pub num_gt_boxes: usize,
    pub num_matches: usize,
}

/// Fraction of its own length a trajectory must be matched to count as
/// mostly tracked.
pub const MOSTLY_TRACKED: f64 = 0.8;
/// At or below this matched fraction a trajectory is mostly lost.
pub const MOSTLY_LOST: f64 = 0.2;

pub fn mot_report(
    hypotheses: &[Track],
    ground_truth: &[Track],
    iou_match: f64,
) -> Result<MotReport, MetricsError> {
    let matching = clear_match(hypotheses, ground_truth, iou_match)?;
    let idsw = matching.id_switches();
    let total_gt = matching.num_gt_boxes;
    let mota_raw = if total_gt > 0 {
        100.0 * (1.0 - (matching.misses + matching.false_positives + idsw) as f64 / total_gt as f64)
    } else {
        0.0
    };
    let motp = if matching.matches.is_empty() {
        0.0
    } else {
        100.0 * matching.matches.iter().map(|m| m.iou).sum::<f64>() / matching.matches.len() as f64
    };

    let mut covered: HashMap<u32, usize> = HashMap::new();
    for m in &matching.matches {
        *covered.entry(m.gt_id).or_default() += 1;
    }
    let (mut mt, mut pt, mut ml) = (0, 0, 0);
    for t in ground_truth.iter().filter(|t| !t.is_empty()) {
        let frac = covered.get(&t.track_id).copied().unwrap_or(0) as f64 / t.len() as f64;
        if frac >= MOSTLY_TRACKED {
            mt += 1;
        } else if frac <= MOSTLY_LOST {
            ml += 1;
        } else {
            pt += 1;
        }
    }

    let (idtp, idfp, idfn) = identity_counts(hypotheses, ground_truth, iou_match);
    Ok(MotReport {
        mota: mota_raw.max(0.0),
        mota_raw,
        motp,
        idf1: 100.0 * ratio(2.0 * idtp, 2.0 * idtp + idfp + idfn),
        idp: 100.0 * ratio(idtp, idtp + idfp),
        idr: 100.0 * ratio(idtp, idtp + idfn),
        gt: mt + pt + ml,
        mt,
        pt,
        ml,
        fp: matching.false_positives,
        fn_: matching.misses,
        idsw,
        num_gt_boxes: total_gt,
        num_matches: matching.matches.len(),
    })
}

/// Identity true positives, false positives and false negatives under the
/// single truth-to-hypothesis mapping that maximises co-located frames.
fn identity_counts(
    hypotheses: &[Track],
    ground_truth: &[Track],
    iou_match: f64,
) -> (f64, f64, f64) {
    let total_gt: usize = ground_truth.iter().map(Track::len).sum();
    let total_hyp: usize = hypotheses.iter().map(Track::len).sum();
    let overlap: Vec<Vec<f64>> = ground_truth
        .iter()
        .map(|g| {
            hypotheses
                .iter()
                .map(|h| {
                    g.entries
                        .iter()
                        .filter(|(frame, gb)| {
                            h.box_at(*frame).is_some_and(|hb| iou(gb, &hb) >= iou_match)
                        })
                        .count() as f64
                })
                .collect()
        })
        .collect();
    let most = overlap.iter().flatten().copied().fold(0.0, f64::max);
    let idtp = CostMatrix::from_fn(ground_truth.len(), hypotheses.len(), |i, j| {
        most - overlap[i][j]
    })
    .map(|cost| {
        hungarian(&cost)
            .into_iter()
            .map(|(i, j)| overlap[i][j])
            .sum::<f64>()
    })
    .unwrap_or(0.0);
    (idtp, total_hyp as f64 - idtp, total_gt as f64 - idtp)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bb(x: f64, y: f64, w: f64, h: f64) -> BoundingBox {
        BoundingBox::new(x, y, w, h).unwrap()
    }

    fn track(id: u32, frames: std::ops::Range<u32>, y: f64) -> Track {
        let mut t = Track::new(id, TrackSource::Tracker);
        for f in frames {
            t.push(f, bb(10.0 + 2.0 * f as f64, y, 60.0, 30.0)).unwrap();
        }
        t
    }

    /// Maximum number of disjoint pairs within `tol`, by exhaustive search.
    fn brute_max_matching(p: &[f64], t: &[f64], tol: f64) -> usize {
        fn rec(i: usize, p: &[f64], t: &[f64], used: &mut Vec<bool>, tol: f64) -> usize {
            if i == p.len() {
                return 0;
            }
            let mut best = rec(i + 1, p, t, used, tol);
            for j in 0..t.len() {
                if !used[j] && (p[i] - t[j]).abs() <= tol {
                    used[j] = true;
                    best = best.max(1 + rec(i + 1, p, t, used, tol));
                    used[j] = false;
                }
            }
            best
        }
        rec(0, p, t, &mut vec![false; t.len()], tol)
    }

    #[test]
    fn peak_tolerance_fixture() {
        let m = match_peaks(&[10.0, 40.0], &[12.0, 80.0], 3.0);
        assert_eq!(m.pairs, vec![(0, 0)]);
        assert_eq!(m.unmatched_pred, vec![1]);
        assert_eq!(m.unmatched_truth, vec![1]);
        let r = stroke_report(&[10.0, 40.0], &[12.0, 80.0], &[], &[]).unwrap();
        assert_eq!((r.precision, r.recall, r.f1), (0.5, 0.5, 0.5));
    }

    #[test]
    fn peak_just_outside_tolerance() {
        assert!(match_peaks(&[10.0], &[14.0], 3.0).pairs.is_empty());
        assert_eq!(match_peaks(&[10.0], &[13.0], 3.0).pairs, vec![(0, 0)]);
    }

    #[test]
    fn matching_prefers_count_then_distance() {
        // greedy nearest would pair 10-11 and strand 8
        let m = match_peaks(&[8.0, 10.0], &[11.0, 12.5], 3.0);
        assert_eq!(m.pairs, vec![(0, 0), (1, 1)]);
        let m = match_peaks(&[10.0, 20.0], &[10.5, 19.0, 21.0], 3.0);
        assert_eq!(m.pairs, vec![(0, 0), (1, 1)]);
    }

    #[test]
    fn stroke_report_identity_and_shift() {
        let x = [5.0, 35.0, 66.0];
        let r = stroke_report(&x, &x, &[0.1, 0.9], &[0.1, 0.9]).unwrap();
        assert_eq!((r.f1, r.asd, r.sdstd, r.delta), (1.0, 0.0, 0.0, 0.0));
        let shifted: Vec<f64> = x.iter().map(|v| v + 2.0).collect();
        let r = stroke_report(&shifted, &x, &[], &[]).unwrap();
        assert_eq!((r.f1, r.asd, r.sdstd), (1.0, 2.0, 0.0));
    }

    #[test]
    fn delta_is_mean_absolute_difference() {
        let r = stroke_report(&[1.0], &[1.0], &[0.5, 0.5], &[0.4, 0.6]).unwrap();
        assert!((r.delta - 0.1).abs() < 1e-12);
        assert!(matches!(
            stroke_report(&[1.0], &[1.0], &[0.5], &[0.4, 0.6]),
            Err(MetricsError::LengthMismatch(1, 2))
        ));
        assert_eq!(
            stroke_report(&[], &[1.0], &[], &[]),
            Err(MetricsError::EmptyPeaks)
        );
        assert_eq!(
            stroke_report(&[1.0], &[], &[], &[]),
            Err(MetricsError::EmptyPeaks)
        );
    }

    #[test]
    fn asd_uses_nearest_truth() {
        let r = stroke_report(&[0.0, 10.0, 31.0], &[1.0, 30.0], &[], &[]).unwrap();
        // distances 1, 9, 1
        assert!((r.asd - 11.0 / 3.0).abs() < 1e-12);
        let var = ((1.0f64 - 11.0 / 3.0).powi(2) * 2.0 + (9.0f64 - 11.0 / 3.0).powi(2)) / 3.0;
        assert!((r.sdstd - var.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn interpolation_fills_gaps() {
        let a = bb(0.0, 5.0, 10.0, 10.0);
        let b = bb(9.0, 5.0, 10.0, 13.0);
        let tracks = interpolate_ground_truth(&[(3, 2, b), (0, 2, a)]).unwrap();
        assert_eq!(tracks.len(), 1);
        let xs: Vec<f64> = tracks[0].entries.iter().map(|e| e.1.x).collect();
        assert_eq!(xs, vec![0.0, 3.0, 6.0, 9.0]);
        assert_eq!(tracks[0].entries[1].1.h, 11.0);
        assert_eq!(tracks[0].lane, Some(2));
        assert_eq!(tracks[0].source, TrackSource::GroundTruth);
    }

    #[test]
    fn interpolation_single_and_duplicates() {
        let a = bb(0.0, 0.0, 4.0, 4.0);
        let tracks = interpolate_ground_truth(&[(7, 1, a), (2, 5, a)]).unwrap();
        assert_eq!(tracks.len(), 2);
        assert_eq!(tracks[0].entries, vec![(7, a)]);
        assert_eq!(tracks[1].track_id, 2);
        assert_eq!(
            interpolate_ground_truth(&[(3, 1, a), (3, 1, a)]),
            Err(MetricsError::DuplicateFrame { lane: 1, frame: 3 })
        );
    }

    #[test]
    fn every_third_frame_gives_full_track() {
        let sparse: Vec<_> = (0..30)
            .step_by(3)
            .chain([29])
            .map(|f| (f, 0, bb(f as f64, 0.0, 5.0, 5.0)))
            .collect();
        let t = &interpolate_ground_truth(&sparse).unwrap()[0];
        assert_eq!(t.len(), 30);
        for (f, b) in &t.entries {
            assert!((b.x - *f as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn perfect_tracker_report() {
        let gt = vec![track(1, 0..50, 0.0), track(2, 5..60, 100.0)];
        let r = mot_report(&gt, &gt, 0.5).unwrap();
        assert_eq!(
            (r.mota, r.idf1, r.idp, r.idr, r.motp),
            (100.0, 100.0, 100.0, 100.0, 100.0)
        );
        assert_eq!((r.fp, r.fn_, r.idsw, r.mt, r.gt), (0, 0, 0, 2, 2));
    }

    #[test]
    fn empty_hypotheses_miss_everything() {
        let gt = vec![track(1, 0..50, 0.0)];
        let r = mot_report(&[], &gt, 0.5).unwrap();
        assert_eq!(r.fn_, 50);
        assert_eq!(r.mota, 0.0);
        assert_eq!((r.ml, r.mt, r.idf1), (1, 0, 0.0));
    }

    #[test]
    fn negative_mota_is_floored() {
        let gt = vec![track(1, 0..10, 0.0)];
        let hyp = vec![track(1, 0..10, 500.0), track(2, 0..10, 900.0)];
        let r = mot_report(&hyp, &gt, 0.5).unwrap();
        assert_eq!(r.mota, 0.0);
        assert!((r.mota_raw - (-200.0)).abs() < 1e-9);
    }

    #[test]
    fn split_identity_fixture() {
        let gt = vec![track(1, 0..100, 0.0)];
        let mut hyp = vec![track(7, 0..50, 0.0), track(9, 50..100, 0.0)];
        hyp[0].source = TrackSource::Tracker;
        let r = mot_report(&hyp, &gt, 0.5).unwrap();
        assert_eq!(r.idsw, 1);
        assert_eq!((r.mt, r.pt, r.ml), (1, 0, 0));
        assert!((r.idf1 - 50.0).abs() < 1e-9);
        assert!((r.mota - 99.0).abs() < 1e-9);
    }

    #[test]
    fn continuity_keeps_existing_match() {
        // hypothesis 2 fits slightly better but 1 is still above threshold
        let gt = vec![track(1, 0..10, 0.0)];
        let mut h1 = track(1, 0..10, 3.0);
        h1.track_id = 1;
        let mut h2 = Track::new(2, TrackSource::Tracker);
        for f in 5..10 {
            h2.push(f, bb(10.0 + 2.0 * f as f64, 0.5, 60.0, 30.0))
                .unwrap();
        }
        let m = clear_match(&[h1, h2], &gt, 0.5).unwrap();
        assert_eq!(m.id_switches(), 0);
        assert!(m.matches.iter().all(|x| x.hyp_id == 1));
        assert_eq!(m.false_positives, 5);
    }

    #[test]
    fn hypotheses_outside_range_rejected() {
        let gt = vec![track(1, 10..20, 0.0)];
        let hyp = vec![track(1, 5..20, 0.0)];
        assert!(matches!(
            mot_report(&hyp, &gt, 0.5),
            Err(MetricsError::FrameRangeMismatch { .. })
        ));
    }

    proptest! {
        #[test]
        fn match_count_is_maximal(
            p in proptest::collection::vec(0.0..40.0f64, 0..=6),
            t in proptest::collection::vec(0.0..40.0f64, 0..=6),
        ) {
            let m = match_peaks(&p, &t, 3.0);
            prop_assert_eq!(m.pairs.len(), brute_max_matching(&p, &t, 3.0));
            for &(i, j) in &m.pairs {
                prop_assert!((p[i] - t[j]).abs() <= 3.0 + 1e-9);
            }
        }

        #[test]
        fn stroke_report_identity(
            mut x in proptest::collection::vec(0.0..1000.0f64, 1..30),
            s in proptest::collection::vec(0.0..1.0f64, 0..50),
        ) {
            x.sort_by(f64::total_cmp);
            let r = stroke_report(&x, &x, &s, &s).unwrap();
            prop_assert_eq!((r.f1, r.asd, r.sdstd, r.delta), (1.0, 0.0, 0.0, 0.0));
        }

        #[test]
        fn mot_report_ignores_hypothesis_labels(
            seed in any::<u64>(),
            ids in Just((1u32..=6).collect::<Vec<_>>()).prop_shuffle(),
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let gt: Vec<Track> = (0..4).map(|k| track(k + 1, 0..40, 80.0 * k as f64)).collect();
            let mut hyp = Vec::new();
            for (k, g) in gt.iter().enumerate() {
                let cut = rng.random_range(5..35);
                for (part, range) in [(0, 0..cut), (1, cut..40)] {
                    let mut h = Track::new((2 * k + part + 1) as u32, TrackSource::Tracker);
                    for f in range {
                        if rng.random::<f64>() < 0.1 { continue; }
                        let b = g.box_at(f).unwrap();
                        h.push(f, bb(b.x + rng.random_range(-6.0..6.0), b.y + rng.random_range(-4.0..4.0), b.w, b.h)).unwrap();
                    }
                    hyp.push(h);
                }
            }
            let base = mot_report(&hyp, &gt, 0.5).unwrap();
            prop_assert!(base.gt == base.mt + base.pt + base.ml);
            for v in [base.mota, base.idf1, base.idp, base.idr, base.motp] {
                prop_assert!((0.0..=100.0).contains(&v));
            }
            let relabeled: Vec<Track> = hyp.iter().map(|h| {
                let mut h = h.clone();
                h.track_id = 100 + ids[(h.track_id as usize - 1) % 6] + 10 * ((h.track_id - 1) / 6);
                h
            }).collect();
            let other = mot_report(&relabeled, &gt, 0.5).unwrap();
            prop_assert_eq!(base, other);
        }
    }
}
