//! Kinematic classification into motion primitives.
//!
//! Each interior sample gets one of five labels ordered by attention load,
//! runs of equal labels become segments, and runs shorter than
//! `min_duration` are absorbed into their longer neighbour.

use crate::ingest::KinematicProfile;
use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

/// Slack for comparing durations built from `count * dt` against a
/// threshold.
const DURATION_EPS: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum PrimitiveError {
    #[error("invalid primitive library: {0}")]
    BadLibrary(String),
}

/// Motion primitives in increasing attention-load order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Primitive {
    Dwell,
    StraightUniform,
    StraightAccel,
    CurvedUniform,
    CurvedAccel,
}

impl Primitive {
    pub const ALL: [Primitive; 5] = [
        Primitive::Dwell,
        Primitive::StraightUniform,
        Primitive::StraightAccel,
        Primitive::CurvedUniform,
        Primitive::CurvedAccel,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Primitive::Dwell => "Dwell",
            Primitive::StraightUniform => "StraightUniform",
            Primitive::StraightAccel => "StraightAccel",
            Primitive::CurvedUniform => "CurvedUniform",
            Primitive::CurvedAccel => "CurvedAccel",
        }
    }

    pub fn is_accelerated(self) -> bool {
        matches!(self, Primitive::StraightAccel | Primitive::CurvedAccel)
    }
}

impl fmt::Display for Primitive {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrimitiveLibrary {
    /// Dwell threshold (mm/s).
    pub v_min: f64,
    /// Rectilinear/curved threshold (1/mm).
    pub kappa_thresh: f64,
    /// Uniform/accelerated threshold on |a_t| (mm/s^2).
    pub a_thresh: f64,
    /// Shortest segment kept after merging (s).
    pub min_duration: f64,
}

impl Default for PrimitiveLibrary {
    fn default() -> Self {
        Self { v_min: 2.0, kappa_thresh: 0.05, a_thresh: 20.0, min_duration: 0.2 }
    }
}

impl PrimitiveLibrary {
    pub fn validate(&self, dt: f64) -> Result<(), PrimitiveError> {
        let positive = [self.v_min, self.kappa_thresh, self.a_thresh, self.min_duration]
            .iter()
            .all(|v| v.is_finite() && *v > 0.0);
        if !positive {
            return Err(PrimitiveError::BadLibrary("thresholds must be positive".into()));
        }
        if self.min_duration < dt - DURATION_EPS {
            return Err(PrimitiveError::BadLibrary(format!(
                "min_duration {} shorter than one sample ({dt})",
                self.min_duration
            )));
        }
        Ok(())
    }

    pub fn label(&self, v: f64, kappa: f64, a_t: f64) -> Primitive {
        if v <= self.v_min {
            return Primitive::Dwell;
        }
        let uniform = a_t.abs() <= self.a_thresh;
        match (kappa <= self.kappa_thresh, uniform) {
            (true, true) => Primitive::StraightUniform,
            (true, false) => Primitive::StraightAccel,
            (false, true) => Primitive::CurvedUniform,
            (false, false) => Primitive::CurvedAccel,
        }
    }
}

/// Labels for the interior samples of `profile`, in order.
pub fn classify_samples(profile: &KinematicProfile, lib: &PrimitiveLibrary) -> Vec<Primitive> {
    profile
        .interior()
        .map(|i| lib.label(profile.v[i], profile.kappa[i], profile.a_t[i]))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub label: Primitive,
    pub start: usize,
    /// Inclusive.
    pub end: usize,
    pub duration: f64,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segmentation {
    pub dt: f64,
    /// Index of the first labelled sample; segment indices are absolute.
    pub offset: usize,
    pub segments: Vec<Segment>,
}

impl Segmentation {
    pub fn total_duration(&self) -> f64 {
        self.segments.iter().map(|s| s.duration).sum()
    }

    /// Expands back to one label per sample.
    pub fn labels(&self) -> Vec<Primitive> {
        self.segments.iter().flat_map(|s| std::iter::repeat_n(s.label, s.len())).collect()
    }
}

#[derive(Debug, Clone, Copy)]
struct Run {
    label: Primitive,
    len: usize,
}

fn run_length(labels: &[Primitive]) -> Vec<Run> {
    let mut runs: Vec<Run> = Vec::new();
    for &l in labels {
        match runs.last_mut() {
            Some(r) if r.label == l => r.len += 1,
            _ => runs.push(Run { label: l, len: 1 }),
        }
    }
    runs
}

fn coalesce(runs: Vec<Run>) -> Vec<Run> {
    let mut out: Vec<Run> = Vec::with_capacity(runs.len());
    for r in runs {
        match out.last_mut() {
            Some(last) if last.label == r.label => last.len += r.len,
            _ => out.push(r),
        }
    }
    out
}

/// Run-length segmentation with short-run absorption.
///
/// While some run lasts less than `min_duration`, the shortest such run
/// (earliest on ties) is relabelled to whichever neighbour lasts longer,
/// preferring the preceding one on ties, and equal neighbours coalesce. A
/// single run is kept as is even when short. `offset` is the absolute index
/// of `labels[0]`.
pub fn segment(labels: &[Primitive], dt: f64, min_duration: f64, offset: usize) -> Segmentation {
    let is_short = |r: &Run| (r.len as f64) * dt < min_duration - DURATION_EPS;
    let mut runs = run_length(labels);
    while runs.len() > 1 {
        let victim = runs
            .iter()
            .enumerate()
            .filter(|(_, r)| is_short(r))
            .min_by_key(|(i, r)| (r.len, *i))
            .map(|(i, _)| i);
        let Some(i) = victim else { break };
        let target = match (i.checked_sub(1), runs.get(i + 1)) {
            (Some(p), Some(next)) => {
                if next.len > runs[p].len {
                    i + 1
                } else {
                    p
                }
            }
            (Some(p), None) => p,
            (None, _) => i + 1,
        };
        runs[i].label = runs[target].label;
        runs = coalesce(runs);
    }

    let mut segments = Vec::with_capacity(runs.len());
    let mut start = offset;
    for r in runs {
        segments.push(Segment {
            label: r.label,
            start,
            end: start + r.len - 1,
            duration: r.len as f64 * dt,
        });
        start += r.len;
    }
    Segmentation { dt, offset, segments }
}

/// Classifies and segments the interior of a profile.
pub fn segment_profile(
    profile: &KinematicProfile,
    lib: &PrimitiveLibrary,
) -> Result<Segmentation, PrimitiveError> {
    lib.validate(profile.dt)?;
    let labels = classify_samples(profile, lib);
    Ok(segment(&labels, profile.dt, lib.min_duration, profile.interior_start))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrimitiveStats {
    pub label: Primitive,
    /// Number of segments.
    pub frequency: usize,
    /// Share of the total segmented time.
    pub time_fraction: f64,
    /// Mean segment duration in seconds; 0 when the label never occurs.
    pub mean_duration: f64,
}

/// Frequency, time fraction and mean duration for every primitive, in
/// attention-load order.
pub fn primitive_metrics(seg: &Segmentation) -> Vec<PrimitiveStats> {
    let total = seg.total_duration();
    Primitive::ALL
        .iter()
        .map(|&label| {
            let (count, time) = seg
                .segments
                .iter()
                .filter(|s| s.label == label)
                .fold((0usize, 0.0), |(c, t), s| (c + 1, t + s.duration));
            PrimitiveStats {
                label,
                frequency: count,
                time_fraction: if total > 0.0 { time / total } else { 0.0 },
                mean_duration: if count > 0 { time / count as f64 } else { 0.0 },
            }
        })
        .collect()
}

/// Writes segments as CSV `start_t,end_t,label` with times measured from the
/// first sample of the profile.
pub fn write_segments_csv<W: std::io::Write>(seg: &Segmentation, out: &mut W) -> std::io::Result<()> {
    writeln!(out, "start_t,end_t,label")?;
    for s in &seg.segments {
        writeln!(out, "{},{},{}", s.start as f64 * seg.dt, (s.end + 1) as f64 * seg.dt, s.label)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use Primitive::*;

    const DT: f64 = 1.0 / 30.0;

    #[test]
    fn label_definitions() {
        let lib = PrimitiveLibrary::default();
        assert_eq!(lib.label(10.0, 0.0, 0.0), StraightUniform);
        assert_eq!(lib.label(1.0, 3.0, 100.0), Dwell);
        assert_eq!(lib.label(10.0, 0.5, 0.0), CurvedUniform);
        assert_eq!(lib.label(10.0, 0.5, -25.0), CurvedAccel);
        assert_eq!(lib.label(10.0, 0.01, 25.0), StraightAccel);
    }

    #[test]
    fn uniform_labels_single_segment() {
        let seg = segment(&[CurvedUniform; 40], DT, 0.2, 5);
        assert_eq!(seg.segments.len(), 1);
        assert_eq!(seg.segments[0].start, 5);
        assert_eq!(seg.segments[0].end, 44);
    }

    #[test]
    fn short_run_absorbed() {
        let mut labels = vec![StraightUniform; 30];
        labels.extend([Dwell; 2]);
        labels.extend([StraightUniform; 30]);
        let seg = segment(&labels, DT, 0.2, 0);
        assert_eq!(seg.segments.len(), 1);
        assert_eq!(seg.segments[0].len(), 62);
    }

    #[test]
    fn six_samples_at_thirty_hz_is_not_short() {
        let mut labels = vec![Dwell; 10];
        labels.extend([StraightAccel; 6]);
        labels.extend([Dwell; 10]);
        assert_eq!(segment(&labels, DT, 0.2, 0).segments.len(), 3);
    }

    #[test]
    fn merge_prefers_longer_then_preceding() {
        let mut labels = vec![Dwell; 10];
        labels.extend([StraightAccel; 2]);
        labels.extend([CurvedUniform; 20]);
        let seg = segment(&labels, DT, 0.2, 0);
        assert_eq!(seg.segments[0].len(), 10);
        assert_eq!(seg.segments[1].label, CurvedUniform);
        assert_eq!(seg.segments[1].len(), 22);

        let mut labels = vec![Dwell; 10];
        labels.extend([StraightAccel; 2]);
        labels.extend([CurvedUniform; 10]);
        let seg = segment(&labels, DT, 0.2, 0);
        assert_eq!(seg.segments[0].len(), 12);
    }

    #[test]
    fn metrics_single_segment() {
        let seg = segment(&[StraightUniform; 60], DT, 0.2, 0);
        let m = primitive_metrics(&seg);
        let su = m[StraightUniform.index()];
        assert_eq!(su.frequency, 1);
        assert!((su.time_fraction - 1.0).abs() < 1e-12);
        assert!((su.mean_duration - 2.0).abs() < 1e-12);
        assert_eq!(m[Dwell.index()].mean_duration, 0.0);
    }

    #[test]
    fn metrics_two_segments_same_label() {
        let mut labels = vec![StraightUniform; 30];
        labels.extend([Dwell; 30]);
        labels.extend([StraightUniform; 90]);
        let m = primitive_metrics(&segment(&labels, DT, 0.2, 0));
        let su = m[StraightUniform.index()];
        assert_eq!(su.frequency, 2);
        assert!((su.mean_duration - 2.0).abs() < 1e-12);
        assert!((su.time_fraction - 0.8).abs() < 1e-12);
        let total: f64 = m.iter().map(|s| s.time_fraction).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn segments_csv() {
        let mut labels = vec![Dwell; 30];
        labels.extend([StraightUniform; 60]);
        let mut buf = Vec::new();
        write_segments_csv(&segment(&labels, 0.5, 0.2, 0), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "start_t,end_t,label\n0,15,Dwell\n15,45,StraightUniform\n");
    }

    /// Brute-force check: a segmentation is a fixed point if relabelling any
    /// one run changes nothing and no short run survives among several.
    fn is_fixed_point(seg: &Segmentation, min_duration: f64) -> bool {
        let again = segment(&seg.labels(), seg.dt, min_duration, seg.offset);
        again == *seg
    }

    fn arb_labels() -> impl Strategy<Value = Vec<Primitive>> {
        prop::collection::vec((0usize..5, 1usize..12), 1..40).prop_map(|runs| {
            runs.into_iter()
                .flat_map(|(l, n)| std::iter::repeat_n(Primitive::ALL[l], n))
                .collect()
        })
    }

    proptest! {
        #[test]
        fn segmentation_tiles_and_is_stable(labels in arb_labels(), offset in 0usize..10) {
            let seg = segment(&labels, DT, 0.2, offset);
            // tiling
            let mut next = offset;
            for s in &seg.segments {
                prop_assert_eq!(s.start, next);
                prop_assert!(s.end >= s.start);
                next = s.end + 1;
            }
            prop_assert_eq!(next, offset + labels.len());
            // adjacent labels differ
            for w in seg.segments.windows(2) {
                prop_assert_ne!(w[0].label, w[1].label);
            }
            // durations
            if seg.segments.len() > 1 {
                for s in &seg.segments {
                    prop_assert!(s.duration >= 0.2 - 1e-9);
                }
            }
            prop_assert!((seg.total_duration() - labels.len() as f64 * DT).abs() < DT);
            prop_assert!(is_fixed_point(&seg, 0.2));
        }

        #[test]
        fn raising_accel_threshold_never_adds_accel_time(
            samples in prop::collection::vec((0.0f64..80.0, 0.0f64..0.2, -60.0f64..60.0), 1..200),
            lo in 1.0f64..40.0,
            bump in 0.0f64..40.0,
        ) {
            let low = PrimitiveLibrary { a_thresh: lo, ..PrimitiveLibrary::default() };
            let high = PrimitiveLibrary { a_thresh: lo + bump, ..PrimitiveLibrary::default() };
            let count = |lib: &PrimitiveLibrary| samples
                .iter()
                .filter(|(v, k, a)| lib.label(*v, *k, *a).is_accelerated())
                .count();
            prop_assert!(count(&high) <= count(&low));
        }
    }
}
