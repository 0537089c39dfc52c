//! Batch front-end for skilltrace: analyses over trajectory files, skill
//! group comparisons from a manifest, synthetic corpora and report
//! rendering.

pub mod config;
pub mod report;

use config::Config;
use rayon::prelude::*;
use report::{
    ClassificationReport, GroupReport, GroupsReport, HistogramSummary, ModeReport, ModesReport, Section, SkillReport,
    SubjectClassification, TrajectoryReport, SCHEMA_VERSION,
};
use skilltrace::ingest::{differentiate, load_trajectory_with, save_trajectory, GroupLabel, KinematicProfile, Trajectory};
use skilltrace::planning::{loo_spatial_organization, spatial_organization, Point, TaggedPoints};
use skilltrace::primitives::{primitive_metrics, segment_profile, write_segments_csv, Segmentation};
use skilltrace::pwarx::{
    identify_pwarx_pooled, mode_kinematic_summary_pooled, phase_correspondence, ModeSet, RegressionPair,
};
use skilltrace::stats::{
    build_histogram, classify_subject, confusion_matrix, dominant_states, loo_permutation_table, Binning, Group,
    SpeedCurvatureHistogram, Subject,
};
use skilltrace::synth::{generate_peg_transfer, generate_pwa_sequence, write_labels_csv, PegLayout, PwaScenario, SkillParams};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::ops::RangeInclusive;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad invocation, configuration or empty input.
    #[error("{0}")]
    Usage(String),
    /// Input or computation failure.
    #[error("{0}")]
    Analysis(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Analysis(_) => 1,
        }
    }
}

fn io_error(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Analysis(format!("{}: {e}", path.display()))
}

/// Execution settings that do not affect results.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Worker threads; 0 uses every core.
    pub jobs: usize,
    /// Report destination; `None` skips writing.
    pub out: Option<PathBuf>,
    /// Directory for per-trajectory plot data (histogram grid, segments,
    /// mode assignments).
    pub plot_dir: Option<PathBuf>,
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool, CliError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start {jobs} workers: {e}")))
}

struct Loaded {
    path: PathBuf,
    traj: Trajectory,
    profile: KinematicProfile,
}

fn load(path: &Path, config: &Config) -> Result<Loaded, CliError> {
    let traj = load_trajectory_with(path, &config.load_options()).map_err(|e| io_error(path, e))?;
    let profile = differentiate(&traj, &config.diff_options()).map_err(|e| io_error(path, e))?;
    Ok(Loaded { path: path.to_path_buf(), traj, profile })
}

fn histogram_summary(h: &SpeedCurvatureHistogram, config: &Config) -> HistogramSummary {
    HistogramSummary { n_samples: h.n_samples, dominant_states: dominant_states(h, config.dominant_mass) }
}

/// Identification over one or more profiles, packaged for the report.
fn identify(profiles: &[&KinematicProfile], config: &Config) -> Result<(ModesReport, ModeSet, Vec<RegressionPair>), String> {
    let (ms, pairs) = identify_pwarx_pooled(profiles, config.k_modes, &config.ident_options()).map_err(|e| e.to_string())?;
    let summaries = mode_kinematic_summary_pooled(&ms, profiles);
    let phases = phase_correspondence(&summaries).into();
    let report = ModesReport {
        requested_k: config.k_modes,
        k: ms.k(),
        objective: ms.objective,
        iterations: ms.iterations,
        converged: ms.converged,
        monotone: ms.is_monotone(),
        warnings: ms.warnings.clone(),
        n_transitions: pairs.len(),
        modes: ms
            .modes
            .iter()
            .zip(summaries)
            .map(|(&parameters, summary)| ModeReport { parameters, summary })
            .collect(),
        phases,
    };
    Ok((report, ms, pairs))
}

struct Analysed {
    report: TrajectoryReport,
    segmentation: Option<Segmentation>,
    modes: Option<(ModeSet, Vec<RegressionPair>)>,
}

fn analyse_one(item: &Loaded, binning: &Binning, config: &Config) -> Result<Analysed, CliError> {
    let lib = config.primitive_library();
    let seg = segment_profile(&item.profile, &lib).map_err(|e| io_error(&item.path, e))?;
    let hist = build_histogram([&item.profile], binning).map_err(|e| io_error(&item.path, e))?;
    let (modes, detail) = match identify(&[&item.profile], config) {
        Ok((r, ms, pairs)) => (Section::Available(r), Some((ms, pairs))),
        Err(e) => (Section::unavailable(e), None),
    };
    let t = &item.traj;
    Ok(Analysed {
        report: TrajectoryReport {
            id: t.id.clone(),
            path: item.path.display().to_string(),
            hand: t.hand,
            group: t.group,
            n_samples: t.len(),
            dt: t.dt,
            duration: t.duration(),
            path_length: t.path_length(),
            histogram: histogram_summary(&hist, config),
            primitives: primitive_metrics(&seg),
            n_segments: seg.segments.len(),
            modes,
        },
        segmentation: Some(seg),
        modes: detail,
    })
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| io_error(path, e))
}

fn with_writer(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<(), CliError> {
    let mut w = BufWriter::new(File::create(path).map_err(|e| io_error(path, e))?);
    f(&mut w).and_then(|_| w.flush()).map_err(|e| io_error(path, e))
}

fn write_plot_data(dir: &Path, index: usize, item: &Loaded, a: &Analysed, binning: &Binning) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
    let stem = format!("{index:03}-{}", item.traj.id);
    let hist = build_histogram([&item.profile], binning).map_err(|e| io_error(&item.path, e))?;
    with_writer(&dir.join(format!("{stem}.histogram.csv")), |w| {
        writeln!(w, "speed_lo,speed_hi,kappa_lo,kappa_hi,p")?;
        for si in 0..hist.speed_bins {
            for ki in 0..hist.kappa_len {
                writeln!(
                    w,
                    "{},{},{},{},{}",
                    hist.speed_edges[si],
                    hist.speed_edges[si + 1],
                    hist.kappa_edges[ki],
                    hist.kappa_edges[ki + 1],
                    hist.get(si, ki)
                )?;
            }
        }
        Ok(())
    })?;
    if let Some(seg) = &a.segmentation {
        with_writer(&dir.join(format!("{stem}.segments.csv")), |w| write_segments_csv(seg, w))?;
    }
    if let Some((ms, pairs)) = &a.modes {
        with_writer(&dir.join(format!("{stem}.modes.csv")), |w| {
            writeln!(w, "t,mode")?;
            for (p, m) in pairs.iter().zip(&ms.assignments) {
                writeln!(w, "{},{m}", item.traj.samples[p.sample].t)?;
            }
            Ok(())
        })?;
    }
    Ok(())
}

/// Per-trajectory analysis: primitives, histogram summary and modes for
/// every input, plus one identification pooled over all inputs.
pub fn cmd_analyze(inputs: &[PathBuf], config: &Config, opts: &RunOptions) -> Result<SkillReport, CliError> {
    if inputs.is_empty() {
        return Err(CliError::Usage("no input files".into()));
    }
    config.validate().map_err(CliError::Usage)?;
    let pool = pool(opts.jobs)?;
    let loaded: Vec<Loaded> =
        pool.install(|| inputs.par_iter().map(|p| load(p, config)).collect::<Result<_, _>>())?;
    let binning = config.binning_template().fit_speed_range(loaded.iter().map(|l| &l.profile));
    let analysed: Vec<Analysed> =
        pool.install(|| loaded.par_iter().map(|l| analyse_one(l, &binning, config)).collect::<Result<_, _>>())?;

    if let Some(dir) = &opts.plot_dir {
        for (i, (item, a)) in loaded.iter().zip(&analysed).enumerate() {
            write_plot_data(dir, i, item, a, &binning)?;
        }
    }
    let pooled_modes = (loaded.len() > 1).then(|| {
        let profiles: Vec<&KinematicProfile> = loaded.iter().map(|l| &l.profile).collect();
        identify(&profiles, config).map(|(r, _, _)| r).into()
    });

    let report = SkillReport {
        schema_version: SCHEMA_VERSION,
        command: "analyze".into(),
        config: config.clone(),
        binning,
        trajectories: analysed.into_iter().map(|a| a.report).collect(),
        pooled_modes,
        groups: None,
    };
    if let Some(out) = &opts.out {
        write_text(out, &report::to_json(&report))?;
    }
    Ok(report)
}

/// One manifest row.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub subject: String,
    pub group: GroupLabel,
}

/// Reads a `path,subject,group` manifest. Relative paths are resolved
/// against the manifest's directory.
pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>, CliError> {
    let base = path.parent().unwrap_or(Path::new("."));
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| io_error(path, e))?;
    let headers = reader.headers().map_err(|e| io_error(path, e))?.clone();
    if headers.iter().collect::<Vec<_>>() != ["path", "subject", "group"] {
        return Err(CliError::Usage(format!("{}: manifest header must be path,subject,group", path.display())));
    }
    let mut entries = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| io_error(path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        let group = record[2]
            .parse::<GroupLabel>()
            .map_err(|e| CliError::Usage(format!("{} line {line}: {e}", path.display())))?;
        let file = PathBuf::from(&record[0]);
        let file = if file.is_absolute() { file } else { base.join(file) };
        if !file.is_file() {
            return Err(CliError::Analysis(format!(
                "{} line {line}: missing trajectory file {}",
                path.display(),
                file.display()
            )));
        }
        entries.push(ManifestEntry { path: file, subject: record[1].to_string(), group });
    }
    Ok(entries)
}

/// Collected per-group data for the group report.
struct GroupData {
    group: Group,
    /// Manifest row index of every profile, in subject order.
    rows: Vec<usize>,
}

fn group_planning(data: &GroupData, config: &Config) -> (Section<ModesReport>, Section<skilltrace::planning::SpatialOrganizationScore>, Section<skilltrace::planning::LooScore>) {
    let profiles: Vec<&KinematicProfile> = data.group.subjects.iter().flat_map(|s| &s.profiles).collect();
    let (report, ms, pairs) = match identify(&profiles, config) {
        Ok(v) => v,
        Err(e) => {
            let why = format!("identification failed: {e}");
            return (Section::unavailable(&why), Section::unavailable(&why), Section::unavailable(why));
        }
    };
    let points: Vec<Point> = pairs.iter().map(|p| [p.state[0], p.state[1]]).collect();
    let complete = spatial_organization(&points, &ms.assignments).into();

    // Run index -> subject index.
    let mut owner = Vec::new();
    for (si, s) in data.group.subjects.iter().enumerate() {
        owner.extend(std::iter::repeat_n(si, s.profiles.len()));
    }
    let loo = if data.group.subjects.len() < 2 {
        Section::unavailable(format!("need at least 2 subjects, got {}", data.group.subjects.len()))
    } else {
        let mut per: Vec<TaggedPoints> =
            vec![TaggedPoints { points: Vec::new(), tags: Vec::new() }; data.group.subjects.len()];
        for ((p, &tag), tr) in points.iter().zip(&ms.assignments).zip(&ms.transitions) {
            let s = &mut per[owner[tr.run]];
            s.points.push(*p);
            s.tags.push(tag);
        }
        loo_spatial_organization(&per).into()
    };
    (Section::Available(report), complete, loo)
}

/// Group comparison from a manifest: divergence table, leave-one-out
/// classification and planning scores per skill group.
pub fn cmd_group(manifest: &Path, config: &Config, opts: &RunOptions) -> Result<SkillReport, CliError> {
    config.validate().map_err(CliError::Usage)?;
    let entries = read_manifest(manifest)?;
    if entries.is_empty() {
        return Err(CliError::Usage(format!("{}: manifest lists no trajectories", manifest.display())));
    }
    let pool = pool(opts.jobs)?;
    let loaded: Vec<Loaded> =
        pool.install(|| entries.par_iter().map(|e| load(&e.path, config)).collect::<Result<_, _>>())?;
    let binning = config.binning_template().fit_speed_range(loaded.iter().map(|l| &l.profile));
    let analysed: Vec<Analysed> =
        pool.install(|| loaded.par_iter().map(|l| analyse_one(l, &binning, config)).collect::<Result<_, _>>())?;

    // Groups in label order; subjects in order of first appearance.
    let mut ignored = Vec::new();
    let mut data: Vec<GroupData> = Vec::new();
    for label in GroupLabel::SKILLED {
        let mut group = Group { label, subjects: Vec::new() };
        let mut rows = Vec::new();
        let mut subject_rows: Vec<Vec<usize>> = Vec::new();
        for (i, e) in entries.iter().enumerate().filter(|(_, e)| e.group == label) {
            match group.subjects.iter().position(|s| s.id == e.subject) {
                Some(si) => {
                    group.subjects[si].profiles.push(loaded[i].profile.clone());
                    subject_rows[si].push(i);
                }
                None => {
                    group.subjects.push(Subject { id: e.subject.clone(), profiles: vec![loaded[i].profile.clone()] });
                    subject_rows.push(vec![i]);
                }
            }
        }
        rows.extend(subject_rows.into_iter().flatten());
        if !group.subjects.is_empty() {
            data.push(GroupData { group, rows });
        }
    }
    for e in entries.iter().filter(|e| e.group == GroupLabel::Unknown) {
        ignored.push(e.path.display().to_string());
    }
    if data.is_empty() {
        return Err(CliError::Usage("manifest has no Expert, Intermediate or Novice entries".into()));
    }

    let planning: Vec<_> = pool.install(|| data.par_iter().map(|d| group_planning(d, config)).collect());
    let mut groups = Vec::new();
    for (d, (modes, complete, loo)) in data.iter().zip(planning) {
        let hist = build_histogram(d.group.subjects.iter().flat_map(|s| &s.profiles), &binning)
            .map_err(|e| CliError::Analysis(format!("{} histogram: {e}", d.group.label)))?;
        groups.push(GroupReport {
            label: d.group.label,
            subjects: d.group.subjects.iter().map(|s| s.id.clone()).collect(),
            n_trajectories: d.rows.len(),
            histogram: histogram_summary(&hist, config),
            modes,
            spatial_organization: complete,
            loo_spatial_organization: loo,
        });
    }

    // Leave-one-out statistics use only groups with at least two subjects.
    let eligible: Vec<Group> = data.iter().filter(|d| d.group.subjects.len() >= 2).map(|d| d.group.clone()).collect();
    let short: Vec<String> = data
        .iter()
        .filter(|d| d.group.subjects.len() < 2)
        .map(|d| format!("{} has {} subject", d.group.label, d.group.subjects.len()))
        .collect();
    let (divergence_table, classification) = if eligible.is_empty() {
        let why = format!("no group has at least 2 subjects ({})", short.join(", "));
        (Section::unavailable(&why), Section::unavailable(why))
    } else {
        let table = loo_permutation_table(&eligible, &binning).into();
        let classification = (|| {
            let confusion = confusion_matrix(&eligible, &binning)?;
            let mut subjects = Vec::new();
            for g in &eligible {
                for s in &g.subjects {
                    let c = classify_subject(s, &eligible, &binning)?;
                    subjects.push(SubjectClassification {
                        subject: s.id.clone(),
                        group: g.label,
                        predicted: c.predicted,
                        divergences: c.divergences,
                    });
                }
            }
            Ok::<_, skilltrace::stats::StatsError>(ClassificationReport { confusion, subjects })
        })()
        .into();
        (table, classification)
    };
    if !short.is_empty() {
        for g in groups.iter_mut().filter(|g| g.subjects.len() < 2) {
            if g.loo_spatial_organization.available().is_some() {
                g.loo_spatial_organization = Section::unavailable("need at least 2 subjects");
            }
        }
    }

    let report = SkillReport {
        schema_version: SCHEMA_VERSION,
        command: "group".into(),
        config: config.clone(),
        binning,
        trajectories: analysed.into_iter().map(|a| a.report).collect(),
        pooled_modes: None,
        groups: Some(GroupsReport { groups, divergence_table, classification, ignored }),
    };
    if let Some(out) = &opts.out {
        write_text(out, &report::to_json(&report))?;
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum SynthKind {
    /// Peg-transfer runs with phase labels.
    Peg,
    /// Piecewise affine runs with mode labels.
    Pwa,
}

/// Parses `A..B` (both ends included) or a single seed.
pub fn parse_seeds(s: &str) -> Result<RangeInclusive<u64>, String> {
    let bad = || format!("invalid seed range '{s}', expected A..B or N");
    match s.split_once("..") {
        Some((a, b)) => {
            let a: u64 = a.trim().parse().map_err(|_| bad())?;
            let b: u64 = b.trim().trim_start_matches('=').parse().map_err(|_| bad())?;
            if a > b {
                return Err(bad());
            }
            Ok(a..=b)
        }
        None => {
            let n: u64 = s.trim().parse().map_err(|_| bad())?;
            Ok(n..=n)
        }
    }
}

fn synth_one(kind: SynthKind, config: &Config, seed: u64, out_dir: &Path) -> Result<PathBuf, CliError> {
    let (stem, traj, column, labels): (String, Trajectory, &str, Vec<String>) = match kind {
        SynthKind::Peg => {
            let skill = config.synth_skill;
            let params = SkillParams::for_group(skill);
            let run = generate_peg_transfer(&params, &PegLayout::default(), seed)
                .map_err(|e| CliError::Analysis(format!("seed {seed}: {e}")))?;
            let stem = format!("peg-{}-{seed:04}", skill.as_str().to_ascii_lowercase());
            let mut traj = run.trajectory;
            traj.id = stem.clone();
            traj.group = Some(skill);
            (stem, traj, "phase", run.phases.iter().map(|p| p.to_string()).collect())
        }
        SynthKind::Pwa => {
            let scenario = PwaScenario::three_bands(config.pwa_noise, config.pwa_horizon);
            let (mut traj, modes) = generate_pwa_sequence(&scenario, seed)
                .map_err(|e| CliError::Analysis(format!("seed {seed}: {e}")))?;
            let stem = format!("pwa-{seed:04}");
            traj.id = stem.clone();
            (stem, traj, "mode", modes.iter().map(|m| m.to_string()).collect())
        }
    };
    let path = out_dir.join(format!("{stem}.csv"));
    save_trajectory(&traj, &path).map_err(|e| io_error(&path, e))?;
    let sidecar = out_dir.join(format!("{stem}.{column}s.csv"));
    with_writer(&sidecar, |w| write_labels_csv(w, column, traj.dt, &labels))?;
    Ok(path)
}

/// Writes one trajectory CSV and one label sidecar per seed, generating
/// seeds concurrently; returns the trajectory paths in seed order.
pub fn cmd_synth(
    kind: SynthKind,
    config: &Config,
    seeds: RangeInclusive<u64>,
    out_dir: &Path,
    jobs: usize,
) -> Result<Vec<PathBuf>, CliError> {
    config.validate().map_err(CliError::Usage)?;
    std::fs::create_dir_all(out_dir).map_err(|e| io_error(out_dir, e))?;
    let seeds: Vec<u64> = seeds.collect();
    pool(jobs)?.install(|| seeds.par_iter().map(|&seed| synth_one(kind, config, seed, out_dir)).collect())
}

/// Renders a JSON report file as text.
pub fn cmd_report(path: &Path) -> Result<String, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| io_error(path, e))?;
    report::render(&value).map_err(|e| io_error(path, e))
}
