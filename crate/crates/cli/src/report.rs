//! Report schema and the text rendering used by `skilltrace report`.

use crate::config::Config;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use skilltrace::ingest::{GroupLabel, Hand};
use skilltrace::planning::{LooScore, SpatialOrganizationScore};
use skilltrace::primitives::PrimitiveStats;
use skilltrace::pwarx::{ModeSummary, Phase, PwarxMode};
use skilltrace::stats::{Binning, ConfusionMatrix, DivergenceTable};
use std::fmt::Write as _;

pub const SCHEMA_VERSION: u32 = 1;

/// A result, or the reason it could not be computed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Section<T> {
    Available(T),
    Unavailable { unavailable: String },
}

impl<T> Section<T> {
    pub fn unavailable(reason: impl ToString) -> Self {
        Section::Unavailable { unavailable: reason.to_string() }
    }

    pub fn available(&self) -> Option<&T> {
        match self {
            Section::Available(v) => Some(v),
            Section::Unavailable { .. } => None,
        }
    }
}

impl<T, E: std::fmt::Display> From<Result<T, E>> for Section<T> {
    fn from(r: Result<T, E>) -> Self {
        match r {
            Ok(v) => Section::Available(v),
            Err(e) => Section::unavailable(e),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkillReport {
    pub schema_version: u32,
    pub command: String,
    /// Every setting used, including command-line overrides.
    pub config: Config,
    /// Speed-curvature binning with the fitted speed range.
    pub binning: Binning,
    pub trajectories: Vec<TrajectoryReport>,
    /// One identification over every input trajectory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pooled_modes: Option<Section<ModesReport>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub groups: Option<GroupsReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryReport {
    pub id: String,
    pub path: String,
    pub hand: Hand,
    pub group: Option<GroupLabel>,
    pub n_samples: usize,
    pub dt: f64,
    pub duration: f64,
    pub path_length: f64,
    pub histogram: HistogramSummary,
    pub primitives: Vec<PrimitiveStats>,
    pub n_segments: usize,
    pub modes: Section<ModesReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramSummary {
    pub n_samples: u64,
    /// `(speed_bin, kappa_bin)` pairs; kappa bin 0 is the underflow bin.
    pub dominant_states: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModesReport {
    pub requested_k: usize,
    pub k: usize,
    /// Sum of squared velocity-row residuals (mm^2/s^2).
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    pub monotone: bool,
    pub warnings: Vec<String>,
    pub n_transitions: usize,
    pub modes: Vec<ModeReport>,
    /// Task phase of each mode, in mode order.
    pub phases: Section<Vec<Phase>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeReport {
    pub parameters: PwarxMode,
    pub summary: ModeSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupsReport {
    pub groups: Vec<GroupReport>,
    /// Symmetric KL in nats; standard deviations are population form.
    pub divergence_table: Section<DivergenceTable>,
    pub classification: Section<ClassificationReport>,
    /// Inputs left out of group statistics (no skill label).
    pub ignored: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupReport {
    pub label: GroupLabel,
    pub subjects: Vec<String>,
    pub n_trajectories: usize,
    pub histogram: HistogramSummary,
    /// One identification pooled over the group; its tags feed the planning
    /// scores.
    pub modes: Section<ModesReport>,
    pub spatial_organization: Section<SpatialOrganizationScore>,
    pub loo_spatial_organization: Section<LooScore>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub confusion: ConfusionMatrix,
    pub subjects: Vec<SubjectClassification>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectClassification {
    pub subject: String,
    pub group: GroupLabel,
    pub predicted: GroupLabel,
    pub divergences: Vec<(GroupLabel, f64)>,
}

/// Serialised form written to disk; a trailing newline keeps files diffable.
pub fn to_json(report: &SkillReport) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("report serialises");
    s.push('\n');
    s
}

fn num(v: &Value) -> String {
    v.as_f64().map(|x| format!("{x:.4}")).unwrap_or_else(|| "-".into())
}

fn unavailable(v: &Value) -> Option<&str> {
    v.get("unavailable").and_then(Value::as_str)
}

fn render_modes(out: &mut String, v: &Value, indent: &str) {
    if let Some(why) = unavailable(v) {
        let _ = writeln!(out, "{indent}modes: unavailable ({why})");
        return;
    }
    let phases: Vec<String> = match v.get("phases") {
        Some(Value::Array(p)) => p.iter().map(|x| x.as_str().unwrap_or("?").to_string()).collect(),
        _ => Vec::new(),
    };
    let _ = writeln!(
        out,
        "{indent}modes: k={} objective={} iterations={} converged={}",
        v["k"], num(&v["objective"]), v["iterations"], v["converged"]
    );
    if let Some(modes) = v["modes"].as_array() {
        for (i, m) in modes.iter().enumerate() {
            let p = &m["parameters"];
            let s = &m["summary"];
            let _ = writeln!(
                out,
                "{indent}  [{i}] {:<12} occ={} v={} a31={} a33={} b3={} a42={} a44={} b4={}",
                phases.get(i).map(String::as_str).unwrap_or("-"),
                num(&s["occupancy"]),
                num(&s["mean"][0]),
                num(&p["a31"]),
                num(&p["a33"]),
                num(&p["b3"]),
                num(&p["a42"]),
                num(&p["a44"]),
                num(&p["b4"]),
            );
        }
    }
}

fn render_matrix(out: &mut String, labels: &[Value], rows: &Value, fmt: impl Fn(&Value) -> String) {
    let names: Vec<&str> = labels.iter().map(|l| l.as_str().unwrap_or("?")).collect();
    let _ = write!(out, "    {:<14}", "");
    for n in &names {
        let _ = write!(out, "{n:>14}");
    }
    let _ = writeln!(out);
    for (i, n) in names.iter().enumerate() {
        let _ = write!(out, "    {n:<14}");
        for j in 0..names.len() {
            let _ = write!(out, "{:>14}", fmt(&rows[i][j]));
        }
        let _ = writeln!(out);
    }
}

/// Human-readable summary of a JSON report.
pub fn render(report: &Value) -> Result<String, String> {
    let version = report["schema_version"].as_u64().ok_or("not a skill report: missing schema_version")?;
    let mut out = String::new();
    let _ = writeln!(out, "skill report (schema {version}, {})", report["command"].as_str().unwrap_or("?"));
    let c = &report["config"];
    let _ = writeln!(
        out,
        "config: seed={} k_modes={} bins={}x{} sg={}/{}",
        c["seed"], c["k_modes"], c["speed_bins"], c["kappa_bins"], c["sg_window"], c["sg_order"]
    );
    for t in report["trajectories"].as_array().into_iter().flatten() {
        let _ = writeln!(
            out,
            "\ntrajectory {} ({}, {} samples, {} s, path {} mm)",
            t["id"].as_str().unwrap_or("?"),
            t["group"].as_str().unwrap_or("unlabelled"),
            t["n_samples"],
            num(&t["duration"]),
            num(&t["path_length"]),
        );
        for p in t["primitives"].as_array().into_iter().flatten() {
            let _ = writeln!(
                out,
                "  {:<16} n={:<4} fraction={} mean={} s",
                p["label"].as_str().unwrap_or("?"),
                p["frequency"],
                num(&p["time_fraction"]),
                num(&p["mean_duration"]),
            );
        }
        render_modes(&mut out, &t["modes"], "  ");
    }
    if let Some(pooled) = report.get("pooled_modes") {
        let _ = writeln!(out, "\npooled over all inputs:");
        render_modes(&mut out, pooled, "  ");
    }
    if let Some(g) = report.get("groups") {
        for grp in g["groups"].as_array().into_iter().flatten() {
            let _ = writeln!(
                out,
                "\ngroup {} ({} subjects, {} trajectories)",
                grp["label"].as_str().unwrap_or("?"),
                grp["subjects"].as_array().map_or(0, Vec::len),
                grp["n_trajectories"],
            );
            render_modes(&mut out, &grp["modes"], "  ");
            let so = &grp["spatial_organization"];
            match unavailable(so) {
                Some(why) => {
                    let _ = writeln!(out, "  spatial organization: unavailable ({why})");
                }
                None => {
                    let _ = writeln!(out, "  spatial organization: {}", num(&so["ratio"]));
                }
            }
            let loo = &grp["loo_spatial_organization"];
            match unavailable(loo) {
                Some(why) => {
                    let _ = writeln!(out, "  leave-one-out: unavailable ({why})");
                }
                None => {
                    let _ = writeln!(out, "  leave-one-out: {} ({})", num(&loo["mean"]), num(&loo["std"]));
                }
            }
        }
        let table = &g["divergence_table"];
        match unavailable(table) {
            Some(why) => {
                let _ = writeln!(out, "\ndivergence table: unavailable ({why})");
            }
            None => {
                let _ = writeln!(out, "\ndivergence table, mean (std) in nats:");
                let labels = table["groups"].as_array().cloned().unwrap_or_default();
                let cells: Vec<Vec<Value>> = (0..labels.len())
                    .map(|i| {
                        (0..labels.len())
                            .map(|j| Value::String(format!("{} ({})", fmt2(&table["mean"][i][j]), fmt2(&table["std"][i][j]))))
                            .collect()
                    })
                    .collect();
                render_matrix(&mut out, &labels, &serde_json::json!(cells), |v| v.as_str().unwrap_or("").to_string());
            }
        }
        let cls = &g["classification"];
        match unavailable(cls) {
            Some(why) => {
                let _ = writeln!(out, "\nclassification: unavailable ({why})");
            }
            None => {
                let cm = &cls["confusion"];
                let _ = writeln!(out, "\nconfusion matrix (row = true, column = predicted):");
                let labels = cm["labels"].as_array().cloned().unwrap_or_default();
                render_matrix(&mut out, &labels, &cm["counts"], |v| v.to_string());
            }
        }
    }
    Ok(out)
}

fn fmt2(v: &Value) -> String {
    v.as_f64().map(|x| format!("{x:.2}")).unwrap_or_else(|| "-".into())
}
