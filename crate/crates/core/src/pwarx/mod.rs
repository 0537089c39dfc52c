//! Piecewise affine (PWARX) dynamic-mode identification.
//!
//! Each mode is the planar constant-structure model
//!
//! ```text
//! x'  = x + dt vx                 y'  = y + dt vy
//! vx' = a31 x + a33 vx + b3       vy' = a42 y + a44 vy + b4
//! ```
//!
//! Only the velocity rows carry parameters. Identification follows the
//! clustering procedure: local least-squares fits over short temporal
//! windows, k-means on the standardised local parameter vectors, then
//! alternating residual-based reassignment and refitting.
//!
//! The regression state uses forward-difference velocities,
//! `vx_k = (x_{k+1} - x_k) / dt`, so the position rows hold exactly on the
//! data as well as in every model.

mod kmeans;

pub use kmeans::{kmeans, KMeansResult};

use crate::ingest::KinematicProfile;
use nalgebra::{DMatrix, DVector, Matrix3, SymmetricEigen};
use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

/// Relative singular-value cutoff for the least-squares solves.
const RANK_TOL: f64 = 1e-10;

/// `[x, y, vx, vy]`.
pub type State = [f64; 4];

#[derive(Debug, Error, PartialEq)]
pub enum PwarxError {
    #[error("not enough transitions: {got}, need at least {need}")]
    TooShort { got: usize, need: usize },
    #[error("regressors are rank deficient on the {axis} axis (rank {rank})")]
    RankDeficient { axis: char, rank: usize },
    #[error("every cluster fell below {min} transitions")]
    DegenerateCluster { min: usize },
    #[error("phase correspondence needs exactly 3 modes, got {0}")]
    WrongModeCount(usize),
    #[error("invalid identification options: {0}")]
    BadOptions(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PwarxMode {
    pub a31: f64,
    pub a33: f64,
    pub a42: f64,
    pub a44: f64,
    pub b3: f64,
    pub b4: f64,
    pub dt: f64,
    pub index: usize,
}

impl PwarxMode {
    /// `[a31, a33, b3, a42, a44, b4]`.
    pub fn coefficients(&self) -> [f64; 6] {
        [self.a31, self.a33, self.b3, self.a42, self.a44, self.b4]
    }

    pub fn from_coefficients(c: [f64; 6], dt: f64, index: usize) -> Self {
        Self { a31: c[0], a33: c[1], b3: c[2], a42: c[3], a44: c[4], b4: c[5], dt, index }
    }

    /// Velocity part of the one-step prediction.
    pub fn predict_velocity(&self, s: &State) -> (f64, f64) {
        (
            self.a31 * s[0] + self.a33 * s[2] + self.b3,
            self.a42 * s[1] + self.a44 * s[3] + self.b4,
        )
    }

    /// Squared velocity-row residual for one transition.
    pub fn residual(&self, pair: &RegressionPair) -> f64 {
        let (vx, vy) = self.predict_velocity(&pair.state);
        let ex = pair.next[2] - vx;
        let ey = pair.next[3] - vy;
        ex * ex + ey * ey
    }

    /// Rest point of the mode, `v = 0` and `x = -b3 / a31`,
    /// `y = -b4 / a42`, when both stiffness terms are nonzero.
    pub fn fixed_point(&self) -> Option<(f64, f64)> {
        (self.a31 != 0.0 && self.a42 != 0.0).then(|| (-self.b3 / self.a31, -self.b4 / self.a42))
    }
}

/// Applies the full mode matrix and affine term to a state.
pub fn one_step_predict(mode: &PwarxMode, state: &State) -> State {
    let (vx, vy) = mode.predict_velocity(state);
    [state[0] + mode.dt * state[2], state[1] + mode.dt * state[3], vx, vy]
}

/// One transition `state_k -> state_{k+1}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegressionPair {
    pub state: State,
    pub next: State,
    /// Profile sample index of `state`.
    pub sample: usize,
}

/// Which positions feed the regression state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum StateSource {
    /// Recorded positions.
    #[default]
    Raw,
    /// Savitzky-Golay smoothed positions.
    Smoothed,
}

/// Consecutive interior transitions of a profile.
pub fn build_regression_dataset(
    profile: &KinematicProfile,
    source: StateSource,
) -> Result<Vec<RegressionPair>, PwarxError> {
    let (px, py) = match source {
        StateSource::Raw => (&profile.x, &profile.y),
        StateSource::Smoothed => (&profile.xs, &profile.ys),
    };
    let dt = profile.dt;
    let n = px.len();
    let start = profile.interior_start;
    // state_k needs position k+1; next needs k+2.
    let end = profile.interior_end.min(n.saturating_sub(1));
    if end < start + 2 {
        return Err(PwarxError::TooShort { got: end.saturating_sub(start + 1), need: 1 });
    }
    let state = |k: usize| -> State {
        [px[k], py[k], (px[k + 1] - px[k]) / dt, (py[k + 1] - py[k]) / dt]
    };
    Ok((start..end - 1)
        .map(|k| RegressionPair { state: state(k), next: state(k + 1), sample: k })
        .collect())
}

#[derive(Debug, Clone, Copy)]
struct AxisFit {
    /// `[stiffness, damping, offset]`.
    coef: [f64; 3],
    rank: usize,
    rss: f64,
}

/// Least squares `v' ~ c0 p + c1 v + c2` through an SVD of the
/// column-normalised regressor matrix; minimum-norm when rank deficient.
fn solve_axis(pairs: &[&RegressionPair], pos: usize, vel: usize) -> AxisFit {
    let n = pairs.len();
    let mut a = DMatrix::from_fn(n, 3, |r, c| match c {
        0 => pairs[r].state[pos],
        1 => pairs[r].state[vel],
        _ => 1.0,
    });
    let b = DVector::from_fn(n, |r, _| pairs[r].next[vel]);
    let mut scale = [1.0; 3];
    for (c, s) in scale.iter_mut().enumerate() {
        let norm = a.column(c).norm();
        if norm > 0.0 {
            *s = norm;
            a.column_mut(c).scale_mut(1.0 / norm);
        }
    }
    let svd = a.svd(true, true);
    let smax = svd.singular_values.max();
    let cutoff = smax * RANK_TOL;
    let rank = svd.singular_values.iter().filter(|&&s| s > cutoff).count();
    let sol = if smax > 0.0 {
        svd.solve(&b, cutoff).expect("u and v were computed")
    } else {
        DVector::zeros(3)
    };
    let coef = [sol[0] / scale[0], sol[1] / scale[1], sol[2] / scale[2]];
    let rss = pairs
        .iter()
        .map(|p| {
            let e = p.next[vel] - (coef[0] * p.state[pos] + coef[1] * p.state[vel] + coef[2]);
            e * e
        })
        .sum();
    AxisFit { coef, rank, rss }
}

fn fit_unchecked(pairs: &[&RegressionPair], dt: f64, index: usize) -> (PwarxMode, f64, usize) {
    let fx = solve_axis(pairs, 0, 2);
    let fy = solve_axis(pairs, 1, 3);
    let mode = PwarxMode {
        a31: fx.coef[0],
        a33: fx.coef[1],
        b3: fx.coef[2],
        a42: fy.coef[0],
        a44: fy.coef[1],
        b4: fy.coef[2],
        dt,
        index,
    };
    (mode, fx.rss + fy.rss, fx.rank.min(fy.rank))
}

/// Fits one mode to a set of transitions by two independent least-squares
/// problems, returning the mode and its velocity-row residual sum.
///
/// Regressors spanning fewer than two directions on either axis (e.g. a
/// tool at rest) are reported as [`PwarxError::RankDeficient`]; a rank-2
/// problem such as constant velocity gets the minimum-norm solution.
pub fn fit_mode_ls(pairs: &[RegressionPair], dt: f64) -> Result<(PwarxMode, f64), PwarxError> {
    if pairs.len() < 3 {
        return Err(PwarxError::TooShort { got: pairs.len(), need: 3 });
    }
    let refs: Vec<&RegressionPair> = pairs.iter().collect();
    for (axis, pos, vel) in [('x', 0, 2), ('y', 1, 3)] {
        let f = solve_axis(&refs, pos, vel);
        if f.rank < 2 {
            return Err(PwarxError::RankDeficient { axis, rank: f.rank });
        }
    }
    let (mode, rss, _) = fit_unchecked(&refs, dt, 0);
    Ok((mode, rss))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdentOptions {
    /// Transitions per local fit.
    pub local_window: usize,
    pub seed: u64,
    pub kmeans_restarts: usize,
    pub kmeans_max_iter: usize,
    pub max_iter: usize,
    /// Smallest cluster kept as a mode.
    pub min_cluster: usize,
    pub state_source: StateSource,
}

impl Default for IdentOptions {
    fn default() -> Self {
        Self {
            local_window: 15,
            seed: 0,
            kmeans_restarts: 20,
            kmeans_max_iter: 100,
            max_iter: 100,
            min_cluster: 3,
            state_source: StateSource::Raw,
        }
    }
}

/// Where a transition came from when several profiles are pooled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransitionRef {
    pub run: usize,
    pub sample: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModeSet {
    pub modes: Vec<PwarxMode>,
    /// Mode index per transition.
    pub assignments: Vec<usize>,
    pub transitions: Vec<TransitionRef>,
    /// Sum of squared velocity-row residuals under the assignment.
    pub objective: f64,
    /// Objective after initial clustering and after every refinement pass.
    pub history: Vec<f64>,
    /// Positions in `history` where a degenerate mode was dropped; the
    /// objective may rise across such a boundary.
    pub drops: Vec<usize>,
    pub iterations: usize,
    pub converged: bool,
    pub warnings: Vec<String>,
    pub seed: u64,
    pub dt: f64,
}

impl ModeSet {
    pub fn k(&self) -> usize {
        self.modes.len()
    }

    /// Recomputes the objective from the assignment.
    pub fn evaluate(&self, pairs: &[RegressionPair]) -> f64 {
        pairs.iter().zip(&self.assignments).map(|(p, &m)| self.modes[m].residual(p)).sum()
    }

    /// Whether the objective never rose between consecutive refinement
    /// passes, ignoring mode-drop boundaries.
    pub fn is_monotone(&self) -> bool {
        self.history
            .windows(2)
            .enumerate()
            .all(|(i, w)| w[1] <= w[0] || self.drops.contains(&(i + 1)))
    }

    /// Transitions per mode.
    pub fn counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.modes.len()];
        self.assignments.iter().for_each(|&m| c[m] += 1);
        c
    }
}

/// Identifies `k` modes from one profile.
pub fn identify_pwarx(
    profile: &KinematicProfile,
    k: usize,
    opts: &IdentOptions,
) -> Result<(ModeSet, Vec<RegressionPair>), PwarxError> {
    identify_pwarx_pooled(&[profile], k, opts)
}

/// Identifies one shared set of `k` modes from several profiles (e.g. all
/// trials of a skill group). Local fits never straddle two profiles.
pub fn identify_pwarx_pooled(
    profiles: &[&KinematicProfile],
    k: usize,
    opts: &IdentOptions,
) -> Result<(ModeSet, Vec<RegressionPair>), PwarxError> {
    if k == 0 || opts.local_window < 3 || opts.min_cluster < 3 {
        return Err(PwarxError::BadOptions(
            "need k >= 1, local_window >= 3 and min_cluster >= 3".into(),
        ));
    }
    let dt = profiles.first().map(|p| p.dt).unwrap_or(0.0);
    let mut runs = Vec::new();
    for p in profiles {
        if (p.dt - dt).abs() > 1e-12 * dt.abs() {
            return Err(PwarxError::BadOptions("pooled profiles must share dt".into()));
        }
        runs.push(build_regression_dataset(p, opts.state_source)?);
    }
    let total: usize = runs.iter().map(Vec::len).sum();
    if total < 10 * k {
        return Err(PwarxError::TooShort { got: total, need: 10 * k });
    }

    // Local fits over temporal windows inside each run.
    let mut features = Vec::with_capacity(total);
    for run in &runs {
        let len = run.len();
        let w = opts.local_window.min(len);
        for t in 0..len {
            let start = t.saturating_sub(w / 2).min(len - w);
            let window: Vec<&RegressionPair> = run[start..start + w].iter().collect();
            let (mode, _, _) = fit_unchecked(&window, dt, 0);
            features.push(mode.coefficients().to_vec());
        }
    }
    standardise(&mut features);
    let clusters = kmeans(&features, k, opts.kmeans_restarts, opts.kmeans_max_iter, opts.seed);

    let pairs: Vec<RegressionPair> = runs.iter().flatten().copied().collect();
    let transitions: Vec<TransitionRef> = runs
        .iter()
        .enumerate()
        .flat_map(|(r, run)| run.iter().map(move |p| TransitionRef { run: r, sample: p.sample }))
        .collect();

    let mut warnings = Vec::new();
    let mut assignments = clusters.labels;
    let mut modes = Vec::new();
    let mut kept = Vec::new();
    for c in 0..k {
        let members: Vec<&RegressionPair> =
            pairs.iter().zip(&assignments).filter(|(_, &a)| a == c).map(|(p, _)| p).collect();
        if members.len() < opts.min_cluster {
            if !members.is_empty() || c < clusters.centroids.len() {
                warnings.push(format!(
                    "cluster {c} has {} transitions; mode dropped",
                    members.len()
                ));
            }
            continue;
        }
        let (mode, _, _) = fit_unchecked(&members, dt, modes.len());
        kept.push(c);
        modes.push(mode);
    }
    if modes.is_empty() {
        return Err(PwarxError::DegenerateCluster { min: opts.min_cluster });
    }
    // Renumber surviving clusters; orphans go to their best mode.
    for (a, p) in assignments.iter_mut().zip(&pairs) {
        *a = match kept.iter().position(|&c| c == *a) {
            Some(i) => i,
            None => best_mode(&modes, p),
        };
    }

    let mut set = ModeSet {
        modes,
        assignments,
        transitions,
        objective: 0.0,
        history: Vec::new(),
        drops: Vec::new(),
        iterations: 0,
        converged: false,
        warnings,
        seed: opts.seed,
        dt,
    };
    set.objective = set.evaluate(&pairs);
    set.history.push(set.objective);
    refine(&mut set, &pairs, opts);
    Ok((set, pairs))
}

fn standardise(features: &mut [Vec<f64>]) {
    let n = features.len() as f64;
    let dim = features[0].len();
    for d in 0..dim {
        let mean = features.iter().map(|f| f[d]).sum::<f64>() / n;
        let var = features.iter().map(|f| (f[d] - mean).powi(2)).sum::<f64>() / n;
        let sd = var.sqrt();
        for f in features.iter_mut() {
            f[d] -= mean;
            if sd > 0.0 {
                f[d] /= sd;
            }
        }
    }
}

/// Mode with the smallest residual; ties go to the lower index.
fn best_mode(modes: &[PwarxMode], pair: &RegressionPair) -> usize {
    let mut best = (0, f64::INFINITY);
    for (i, m) in modes.iter().enumerate() {
        let r = m.residual(pair);
        if r < best.1 {
            best = (i, r);
        }
    }
    best.0
}

/// Alternating reassignment/refit. A refit replaces a mode only when it
/// does not raise that mode's residual sum, so the objective is
/// non-increasing pass to pass.
fn refine(set: &mut ModeSet, pairs: &[RegressionPair], opts: &IdentOptions) {
    loop {
        let mut stable = false;
        while set.iterations < opts.max_iter {
            set.iterations += 1;
            let mut changed = false;
            for (a, p) in set.assignments.iter_mut().zip(pairs) {
                let b = best_mode(&set.modes, p);
                if b != *a && set.modes[b].residual(p) < set.modes[*a].residual(p) {
                    *a = b;
                    changed = true;
                }
            }
            for m in 0..set.modes.len() {
                let members: Vec<&RegressionPair> = pairs
                    .iter()
                    .zip(&set.assignments)
                    .filter(|(_, &a)| a == m)
                    .map(|(p, _)| p)
                    .collect();
                if members.len() < opts.min_cluster {
                    continue;
                }
                let current: f64 = members.iter().map(|p| set.modes[m].residual(p)).sum();
                let (cand, _, _) = fit_unchecked(&members, set.dt, m);
                let refit: f64 = members.iter().map(|p| cand.residual(p)).sum();
                if refit <= current {
                    set.modes[m] = cand;
                }
            }
            set.objective = set.evaluate(pairs);
            set.history.push(set.objective);
            if !changed {
                stable = true;
                break;
            }
        }
        set.converged = stable;

        // Drop modes that ended up with too few transitions and continue.
        let counts = set.counts();
        let small: Vec<usize> = (0..set.modes.len()).filter(|&m| counts[m] < opts.min_cluster).collect();
        if small.is_empty() || small.len() == set.modes.len() {
            break;
        }
        for &m in &small {
            set.warnings.push(format!("mode {m} kept {} transitions; dropped", counts[m]));
        }
        let keep: Vec<usize> = (0..set.modes.len()).filter(|m| !small.contains(m)).collect();
        set.modes = keep.iter().map(|&m| set.modes[m]).collect();
        for (i, m) in set.modes.iter_mut().enumerate() {
            m.index = i;
        }
        for (a, p) in set.assignments.iter_mut().zip(pairs) {
            *a = match keep.iter().position(|&m| m == *a) {
                Some(i) => i,
                None => best_mode(&set.modes, p),
            };
        }
        set.objective = set.evaluate(pairs);
        set.history.push(set.objective);
        set.drops.push(set.history.len() - 1);
        if set.iterations >= opts.max_iter {
            break;
        }
    }
    if !set.converged {
        set.warnings.push(format!("refinement stopped after {} passes", set.iterations));
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeSummary {
    pub mode: usize,
    pub count: usize,
    pub occupancy: f64,
    /// Mean of (v, a_t, a_n).
    pub mean: [f64; 3],
    /// Population covariance of (v, a_t, a_n).
    pub cov: [[f64; 3]; 3],
    /// Eigenvalues of `cov`, descending.
    pub eigenvalues: [f64; 3],
    /// Ellipsoid semi-axes: unit eigenvectors scaled by sqrt(eigenvalue),
    /// matching `eigenvalues`.
    pub axes: [[f64; 3]; 3],
    pub fixed_point: Option<(f64, f64)>,
}

/// Per-mode kinematic statistics of the transitions' source samples.
pub fn mode_kinematic_summary(ms: &ModeSet, profile: &KinematicProfile) -> Vec<ModeSummary> {
    mode_kinematic_summary_pooled(ms, &[profile])
}

pub fn mode_kinematic_summary_pooled(ms: &ModeSet, profiles: &[&KinematicProfile]) -> Vec<ModeSummary> {
    let total = ms.assignments.len();
    (0..ms.modes.len())
        .map(|m| {
            let rows: Vec<[f64; 3]> = ms
                .assignments
                .iter()
                .zip(&ms.transitions)
                .filter(|(&a, _)| a == m)
                .map(|(_, t)| {
                    let p = profiles[t.run];
                    [p.v[t.sample], p.a_t[t.sample], p.a_n[t.sample]]
                })
                .collect();
            let count = rows.len();
            let mut mean = [0.0; 3];
            let mut cov = [[0.0; 3]; 3];
            if count > 0 {
                let n = count as f64;
                for r in &rows {
                    for d in 0..3 {
                        mean[d] += r[d] / n;
                    }
                }
                for r in &rows {
                    for i in 0..3 {
                        for j in 0..3 {
                            cov[i][j] += (r[i] - mean[i]) * (r[j] - mean[j]) / n;
                        }
                    }
                }
            }
            let (eigenvalues, axes) = ellipsoid(&cov);
            ModeSummary {
                mode: m,
                count,
                occupancy: if total > 0 { count as f64 / total as f64 } else { 0.0 },
                mean,
                cov,
                eigenvalues,
                axes,
                fixed_point: ms.modes[m].fixed_point(),
            }
        })
        .collect()
}

fn ellipsoid(cov: &[[f64; 3]; 3]) -> ([f64; 3], [[f64; 3]; 3]) {
    let m = Matrix3::from_fn(|i, j| cov[i][j]);
    let eig = SymmetricEigen::new(m);
    let mut order = [0, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut values = [0.0; 3];
    let mut axes = [[0.0; 3]; 3];
    for (slot, &i) in order.iter().enumerate() {
        let lambda = eig.eigenvalues[i].max(0.0);
        values[slot] = lambda;
        let v = eig.eigenvectors.column(i);
        for d in 0..3 {
            axes[slot][d] = v[d] * lambda.sqrt();
        }
    }
    (values, axes)
}

/// Peg-transfer task phases.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Phase {
    Starting,
    Maneuvering,
    Interception,
}

impl Phase {
    pub const ALL: [Phase; 3] = [Phase::Starting, Phase::Maneuvering, Phase::Interception];

    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Starting => "Starting",
            Phase::Maneuvering => "Maneuvering",
            Phase::Interception => "Interception",
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Maps three modes onto task phases: the fastest mode is Maneuvering, of
/// the other two the one with larger mean normal acceleration is
/// Interception. Ties go to the lower mode index. Returned in mode order.
pub fn phase_correspondence(summaries: &[ModeSummary]) -> Result<Vec<Phase>, PwarxError> {
    if summaries.len() != 3 {
        return Err(PwarxError::WrongModeCount(summaries.len()));
    }
    let argmax = |idx: &[usize], key: usize| -> usize {
        let mut best = idx[0];
        for &i in &idx[1..] {
            if summaries[i].mean[key] > summaries[best].mean[key] {
                best = i;
            }
        }
        best
    };
    let fast = argmax(&[0, 1, 2], 0);
    let rest: Vec<usize> = (0..3).filter(|&i| i != fast).collect();
    let intercept = argmax(&rest, 2);
    Ok((0..3)
        .map(|i| {
            if i == fast {
                Phase::Maneuvering
            } else if i == intercept {
                Phase::Interception
            } else {
                Phase::Starting
            }
        })
        .collect())
}
