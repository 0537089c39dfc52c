//! Trajectory ingestion: CSV parsing, sampling validation, uniform
//! resampling and Savitzky-Golay differentiation into kinematic profiles.
//!
//! Files follow the schema `t,x,y[,z][,grasp_angle][,grasp_force]` with an
//! optional metadata line `# id=<string> hand=<L|R> group=<label>`. Only the
//! planar `(x, y)` channels feed the analyses; `z` and the grasp channels are
//! carried through untouched.

mod kinematics;
mod savgol;

pub use kinematics::{compute_curvature, differentiate, DiffOptions, KinematicProfile};
pub use savgol::SavGolKernel;

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use thiserror::Error;

/// Nominal sampling interval of the recording hardware (30 Hz).
pub const DEFAULT_DT: f64 = 1.0 / 30.0;

/// Auxiliary columns recognised after `t,x,y`.
const AUX_COLUMNS: [&str; 3] = ["z", "grasp_angle", "grasp_force"];

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: malformed row: {reason}")]
    MalformedRow { line: u64, reason: String },
    #[error("bad header: {0}")]
    BadHeader(String),
    #[error("timestamps not strictly increasing at sample {index} (t={t})")]
    NonMonotonicTime { index: usize, t: f64 },
    #[error("non-finite coordinate at sample {index}")]
    NonFinite { index: usize },
    #[error("trajectory too short: {got} samples, need at least {need}")]
    TooShort { got: usize, need: usize },
    #[error("invalid smoothing window {window} for polynomial order {order}")]
    BadWindow { window: usize, order: usize },
    #[error("sampling not uniform: step deviates from dt by {max_rel_dev:.3} of dt")]
    NonUniform { max_rel_dev: f64 },
    #[error("invalid resampling rate {0}")]
    BadRate(f64),
    #[error("bad metadata line: {0}")]
    BadMetadata(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Hand {
    Left,
    Right,
}

/// Skill group of a subject. The declaration order is the tie-break order
/// used by the classifiers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum GroupLabel {
    Expert,
    Intermediate,
    Novice,
    Unknown,
}

impl GroupLabel {
    pub const SKILLED: [GroupLabel; 3] =
        [GroupLabel::Expert, GroupLabel::Intermediate, GroupLabel::Novice];

    pub fn as_str(self) -> &'static str {
        match self {
            GroupLabel::Expert => "Expert",
            GroupLabel::Intermediate => "Intermediate",
            GroupLabel::Novice => "Novice",
            GroupLabel::Unknown => "Unknown",
        }
    }
}

impl fmt::Display for GroupLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for GroupLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "expert" => Ok(GroupLabel::Expert),
            "intermediate" => Ok(GroupLabel::Intermediate),
            "novice" => Ok(GroupLabel::Novice),
            "unknown" => Ok(GroupLabel::Unknown),
            other => Err(format!("unknown group label '{other}'")),
        }
    }
}

/// One planar tool-tip sample: seconds, millimetres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t: f64,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub id: String,
    pub hand: Hand,
    pub group: Option<GroupLabel>,
    /// Sampling interval in seconds.
    pub dt: f64,
    pub samples: Vec<Sample>,
    /// Auxiliary channels (`z`, `grasp_angle`, `grasp_force`), aligned with
    /// `samples`. Carried but not analysed.
    pub aux: BTreeMap<String, Vec<f64>>,
}

impl Trajectory {
    /// Builds a trajectory, inferring `dt` from the median timestamp step.
    /// Requires at least two samples, strictly increasing time and finite
    /// coordinates.
    pub fn from_samples(id: impl Into<String>, samples: Vec<Sample>) -> Result<Self, IngestError> {
        validate_samples(&samples)?;
        let dt = median_step(&samples);
        Ok(Self {
            id: id.into(),
            hand: Hand::Right,
            group: None,
            dt,
            samples,
            aux: BTreeMap::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration(&self) -> f64 {
        match (self.samples.first(), self.samples.last()) {
            (Some(a), Some(b)) => b.t - a.t,
            _ => 0.0,
        }
    }

    /// Largest deviation of successive timestamp differences from `dt`, as a
    /// fraction of `dt`.
    pub fn max_step_deviation(&self) -> f64 {
        self.samples
            .windows(2)
            .map(|w| ((w[1].t - w[0].t) - self.dt).abs() / self.dt)
            .fold(0.0, f64::max)
    }

    pub fn xs(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.x).collect()
    }

    pub fn ys(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.y).collect()
    }

    /// Total polyline length in millimetres.
    pub fn path_length(&self) -> f64 {
        self.samples
            .windows(2)
            .map(|w| (w[1].x - w[0].x).hypot(w[1].y - w[0].y))
            .sum()
    }
}

fn validate_samples(samples: &[Sample]) -> Result<(), IngestError> {
    if samples.len() < 2 {
        return Err(IngestError::TooShort { got: samples.len(), need: 2 });
    }
    for (i, s) in samples.iter().enumerate() {
        if !(s.t.is_finite() && s.x.is_finite() && s.y.is_finite()) {
            return Err(IngestError::NonFinite { index: i });
        }
        if i > 0 && s.t <= samples[i - 1].t {
            return Err(IngestError::NonMonotonicTime { index: i, t: s.t });
        }
    }
    Ok(())
}

fn median_step(samples: &[Sample]) -> f64 {
    let mut steps: Vec<f64> = samples.windows(2).map(|w| w[1].t - w[0].t).collect();
    steps.sort_by(f64::total_cmp);
    let n = steps.len();
    if n % 2 == 1 {
        steps[n / 2]
    } else {
        0.5 * (steps[n / 2 - 1] + steps[n / 2])
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoadOptions {
    /// Minimum accepted sample count. The default, `2 * 11 + 1`, is what the
    /// default differentiation window needs.
    pub min_samples: usize,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self { min_samples: 2 * DiffOptions::default().window + 1 }
    }
}

#[derive(Debug, Default, Clone, PartialEq)]
struct Metadata {
    id: Option<String>,
    hand: Option<Hand>,
    group: Option<GroupLabel>,
}

fn parse_metadata(line: &str) -> Result<Metadata, IngestError> {
    let mut meta = Metadata::default();
    let body = line.trim_start_matches('#');
    for token in body.split_whitespace() {
        let Some((key, value)) = token.split_once('=') else {
            continue;
        };
        match key {
            "id" => meta.id = Some(value.to_string()),
            "hand" => {
                meta.hand = Some(match value {
                    "L" | "l" | "Left" | "left" => Hand::Left,
                    "R" | "r" | "Right" | "right" => Hand::Right,
                    _ => return Err(IngestError::BadMetadata(format!("hand={value}"))),
                })
            }
            "group" => {
                meta.group = Some(value.parse().map_err(IngestError::BadMetadata)?);
            }
            _ => {}
        }
    }
    Ok(meta)
}

/// Reads a trajectory CSV with the default [`LoadOptions`].
pub fn load_trajectory(path: impl AsRef<Path>) -> Result<Trajectory, IngestError> {
    load_trajectory_with(path, &LoadOptions::default())
}

pub fn load_trajectory_with(
    path: impl AsRef<Path>,
    opts: &LoadOptions,
) -> Result<Trajectory, IngestError> {
    let path = path.as_ref();
    let io_err = |source| IngestError::Io { path: path.to_path_buf(), source };
    let file = File::open(path).map_err(io_err)?;

    // Metadata lines are comments to the CSV reader; collect them first.
    let mut meta = Metadata::default();
    for line in BufReader::new(&file).lines() {
        let line = line.map_err(io_err)?;
        let trimmed = line.trim_start();
        if let Some(rest) = trimmed.strip_prefix('#') {
            if rest.contains('=') {
                let m = parse_metadata(trimmed)?;
                meta.id = m.id.or(meta.id);
                meta.hand = m.hand.or(meta.hand);
                meta.group = m.group.or(meta.group);
            }
        } else if !trimmed.is_empty() {
            break;
        }
    }

    let file = File::open(path).map_err(io_err)?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(file);

    let headers = reader
        .headers()
        .map_err(|e| IngestError::BadHeader(e.to_string()))?
        .clone();
    let names: Vec<&str> = headers.iter().collect();
    if names.len() < 3 || names[..3] != ["t", "x", "y"] {
        return Err(IngestError::BadHeader(format!(
            "expected leading columns t,x,y, got {}",
            names.join(",")
        )));
    }
    for (i, name) in names.iter().enumerate().skip(3) {
        if !AUX_COLUMNS.contains(name) || names[3..i].contains(name) {
            return Err(IngestError::BadHeader(format!("unexpected column '{name}'")));
        }
    }

    let mut samples = Vec::new();
    let mut aux: Vec<Vec<f64>> = vec![Vec::new(); names.len() - 3];
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            IngestError::MalformedRow { line, reason: e.to_string() }
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let mut values = Vec::with_capacity(record.len());
        for field in record.iter() {
            let v: f64 = field.parse().map_err(|_| IngestError::MalformedRow {
                line,
                reason: format!("cannot parse '{field}' as a number"),
            })?;
            values.push(v);
        }
        samples.push(Sample { t: values[0], x: values[1], y: values[2] });
        for (channel, v) in aux.iter_mut().zip(&values[3..]) {
            channel.push(*v);
        }
    }

    if samples.len() < opts.min_samples.max(2) {
        return Err(IngestError::TooShort { got: samples.len(), need: opts.min_samples.max(2) });
    }
    let id = meta.id.clone().unwrap_or_else(|| {
        path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
    });
    let mut traj = Trajectory::from_samples(id, samples)?;
    traj.hand = meta.hand.unwrap_or(Hand::Right);
    traj.group = meta.group;
    traj.aux = names[3..].iter().map(|n| n.to_string()).zip(aux).collect();
    Ok(traj)
}

/// Writes a trajectory in the ingest CSV schema. Values use the shortest
/// representation that parses back to the same `f64`, so a save/load cycle
/// is bit-exact.
pub fn save_trajectory(traj: &Trajectory, path: impl AsRef<Path>) -> Result<(), IngestError> {
    let path = path.as_ref();
    let io_err = |source| IngestError::Io { path: path.to_path_buf(), source };
    let mut out = BufWriter::new(File::create(path).map_err(io_err)?);
    write_trajectory(traj, &mut out).map_err(io_err)?;
    out.flush().map_err(io_err)
}

pub fn write_trajectory<W: Write>(traj: &Trajectory, out: &mut W) -> std::io::Result<()> {
    let hand = match traj.hand {
        Hand::Left => "L",
        Hand::Right => "R",
    };
    write!(out, "# id={} hand={hand}", traj.id)?;
    if let Some(g) = traj.group {
        write!(out, " group={g}")?;
    }
    writeln!(out)?;
    // Keep the canonical column order regardless of map order.
    let channels: Vec<(&str, &Vec<f64>)> = AUX_COLUMNS
        .iter()
        .filter_map(|name| traj.aux.get(*name).map(|v| (*name, v)))
        .collect();
    write!(out, "t,x,y")?;
    for (name, _) in &channels {
        write!(out, ",{name}")?;
    }
    writeln!(out)?;
    for (i, s) in traj.samples.iter().enumerate() {
        write!(out, "{},{},{}", s.t, s.x, s.y)?;
        for (_, values) in &channels {
            write!(out, ",{}", values[i])?;
        }
        writeln!(out)?;
    }
    Ok(())
}

/// Linearly interpolates the trajectory (and every auxiliary channel) onto a
/// uniform grid `t0 + k / rate` spanning the original time range.
pub fn resample_uniform(traj: &Trajectory, rate: f64) -> Result<Trajectory, IngestError> {
    if !(rate.is_finite() && rate > 0.0) {
        return Err(IngestError::BadRate(rate));
    }
    let src = &traj.samples;
    if src.len() < 2 {
        return Err(IngestError::TooShort { got: src.len(), need: 2 });
    }
    let t0 = src[0].t;
    let t_end = src[src.len() - 1].t;
    let count = ((t_end - t0) * rate + 1e-9).floor() as usize + 1;

    let mut samples = Vec::with_capacity(count);
    let mut aux: BTreeMap<String, Vec<f64>> =
        traj.aux.keys().map(|k| (k.clone(), Vec::with_capacity(count))).collect();
    let mut seg = 0;
    for k in 0..count {
        let t = (t0 + k as f64 / rate).min(t_end);
        while seg + 2 < src.len() && src[seg + 1].t < t {
            seg += 1;
        }
        let (a, b) = (&src[seg], &src[seg + 1]);
        let w = ((t - a.t) / (b.t - a.t)).clamp(0.0, 1.0);
        let lerp = |p: f64, q: f64| if w == 0.0 { p } else if w == 1.0 { q } else { p + w * (q - p) };
        samples.push(Sample { t, x: lerp(a.x, b.x), y: lerp(a.y, b.y) });
        for (name, out) in aux.iter_mut() {
            let values = &traj.aux[name];
            out.push(lerp(values[seg], values[seg + 1]));
        }
    }

    Ok(Trajectory {
        id: traj.id.clone(),
        hand: traj.hand,
        group: traj.group,
        dt: 1.0 / rate,
        samples,
        aux,
    })
}
