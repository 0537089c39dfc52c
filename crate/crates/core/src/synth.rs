//! Synthetic trajectories with ground truth.
//!
//! Two generators:
//!
//! - a peg-transfer simulator built as a small hierarchy: a subgoal sequence
//!   (pick, transport, mid-air transfer, place per block) drives a
//!   constant-speed straight-line reference, which a discrete PD loop tracks
//!   under Gaussian motor noise. Skill is encoded in gains, noise, setpoint
//!   consistency, overshoot, pick retries and transport slowdowns. Every
//!   sample carries its task phase.
//! - a piecewise affine sequence that iterates the mode equations with the
//!   mode selected by the region containing the current position. This is the
//!   identification oracle.

use crate::ingest::{GroupLabel, Hand, Sample, Trajectory};
use crate::pwarx::{one_step_predict, Phase, PwarxMode, State};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Point = [f64; 2];

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("tracking loop for {phase} is unstable (spectral radius {radius:.4})")]
    UnstableGains { phase: Phase, radius: f64 },
    #[error("state left the bounding box at step {step}")]
    Divergence { step: usize },
    #[error("position at step {step} lies in no region")]
    Uncovered { step: usize },
    #[error("invalid layout: {0}")]
    InvalidLayout(String),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackingGains {
    /// Position gain (1/s^2).
    pub kp: f64,
    /// Velocity gain (1/s).
    pub kd: f64,
}

impl TrackingGains {
    /// Spectral radius of the discrete tracking-error dynamics
    /// `e' = e + dt e_dot`, `e_dot' = e_dot - dt (kp e + kd e_dot)`.
    pub fn spectral_radius(&self, dt: f64) -> f64 {
        let trace = 2.0 - dt * self.kd;
        let det = 1.0 - dt * self.kd + dt * dt * self.kp;
        let disc = trace * trace - 4.0 * det;
        if disc >= 0.0 {
            let r = disc.sqrt();
            ((trace + r) / 2.0).abs().max(((trace - r) / 2.0).abs())
        } else {
            det.sqrt()
        }
    }
}

/// Skill parameterisation of the peg-transfer generator. Per-phase arrays
/// are indexed Starting, Maneuvering, Interception.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkillParams {
    pub gains: [TrackingGains; 3],
    /// Per-step velocity noise (mm/s).
    pub noise_sigma: f64,
    /// Reference speed per phase (mm/s).
    pub speed: [f64; 3],
    /// Relative standard deviation of each leg's speed setpoint.
    pub speed_variability: f64,
    /// Standard deviation of subgoal placement (mm).
    pub subgoal_jitter: f64,
    /// Reference overshoot past transport targets, as a fraction of the leg.
    pub overshoot: f64,
    pub retry_prob: f64,
    /// Probability that a transport leg contains a slow stretch.
    pub slowdown_prob: f64,
    /// Hold times (s) after grasping, transferring and releasing.
    pub grasp_dwell: f64,
    pub transfer_dwell: f64,
    pub release_dwell: f64,
    pub dt: f64,
}

impl SkillParams {
    pub fn expert() -> Self {
        Self {
            gains: [
                TrackingGains { kp: 400.0, kd: 40.0 },
                TrackingGains { kp: 300.0, kd: 35.0 },
                TrackingGains { kp: 600.0, kd: 50.0 },
            ],
            noise_sigma: 1.0,
            speed: [18.0, 28.0, 6.0],
            speed_variability: 0.05,
            subgoal_jitter: 0.5,
            overshoot: 0.0,
            retry_prob: 0.0,
            slowdown_prob: 0.0,
            grasp_dwell: 0.4,
            transfer_dwell: 0.4,
            release_dwell: 0.3,
            dt: 1.0 / 30.0,
        }
    }

    pub fn intermediate() -> Self {
        Self {
            gains: [
                TrackingGains { kp: 300.0, kd: 34.0 },
                TrackingGains { kp: 220.0, kd: 30.0 },
                TrackingGains { kp: 450.0, kd: 44.0 },
            ],
            noise_sigma: 2.5,
            speed: [15.0, 22.0, 5.0],
            speed_variability: 0.2,
            subgoal_jitter: 2.0,
            overshoot: 0.08,
            retry_prob: 0.15,
            slowdown_prob: 0.25,
            grasp_dwell: 0.5,
            transfer_dwell: 0.6,
            release_dwell: 0.4,
            dt: 1.0 / 30.0,
        }
    }

    pub fn novice() -> Self {
        Self {
            gains: [
                TrackingGains { kp: 100.0, kd: 20.0 },
                TrackingGains { kp: 80.0, kd: 18.0 },
                TrackingGains { kp: 150.0, kd: 25.0 },
            ],
            noise_sigma: 8.0,
            speed: [13.0, 17.0, 4.5],
            speed_variability: 0.35,
            subgoal_jitter: 4.0,
            overshoot: 0.15,
            retry_prob: 0.3,
            slowdown_prob: 0.5,
            grasp_dwell: 0.6,
            transfer_dwell: 0.8,
            release_dwell: 0.5,
            dt: 1.0 / 30.0,
        }
    }

    pub fn for_group(group: GroupLabel) -> Self {
        match group {
            GroupLabel::Expert => Self::expert(),
            GroupLabel::Intermediate => Self::intermediate(),
            GroupLabel::Novice | GroupLabel::Unknown => Self::novice(),
        }
    }

    /// Rejects unstable tracking loops and out-of-range values.
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |why: &str| Err(SynthError::InvalidParams(why.to_string()));
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad("dt must be positive");
        }
        if !(self.noise_sigma >= 0.0 && self.subgoal_jitter >= 0.0 && self.overshoot >= 0.0) {
            return bad("noise, jitter and overshoot must be non-negative");
        }
        if !(0.0..=1.0).contains(&self.retry_prob) || !(0.0..=1.0).contains(&self.slowdown_prob) {
            return bad("probabilities must lie in [0, 1]");
        }
        if self.speed.iter().any(|s| !(*s > 0.0)) || self.speed_variability < 0.0 {
            return bad("speed setpoints must be positive");
        }
        if [self.grasp_dwell, self.transfer_dwell, self.release_dwell].iter().any(|d| !(*d >= 0.0)) {
            return bad("dwell times must be non-negative");
        }
        for (g, phase) in self.gains.iter().zip(Phase::ALL) {
            let radius = g.spectral_radius(self.dt);
            if !(radius < 1.0) {
                return Err(SynthError::UnstableGains { phase, radius });
            }
        }
        Ok(())
    }
}

/// Board geometry (mm).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PegLayout {
    pub pick: Vec<Point>,
    pub place: Vec<Point>,
    /// Mid-air transfer point.
    pub center: Point,
    /// Tool position at the start.
    pub home: Point,
}

impl Default for PegLayout {
    fn default() -> Self {
        let rows = [-30.0, 0.0, 30.0];
        let pick = [-110.0, -90.0]
            .iter()
            .flat_map(|&x| rows.iter().map(move |&y| [x, y]))
            .collect();
        let place = [90.0, 110.0]
            .iter()
            .flat_map(|&x| rows.iter().map(move |&y| [x, y]))
            .collect();
        Self { pick, place, center: [0.0, 15.0], home: [-60.0, -60.0] }
    }
}

impl PegLayout {
    pub fn blocks(&self) -> usize {
        self.pick.len().min(self.place.len())
    }
}

#[derive(Debug, Clone, Copy)]
struct Leg {
    target: Point,
    speed: f64,
    phase: Phase,
    /// Hold after the reference arrives (s).
    dwell: f64,
}

/// Output of [`generate_peg_transfer`].
#[derive(Debug, Clone, PartialEq)]
pub struct PegTransferRun {
    pub trajectory: Trajectory,
    /// Phase of every sample.
    pub phases: Vec<Phase>,
    /// Subgoals in visiting order with their phase.
    pub subgoals: Vec<(Point, Phase)>,
}

struct LegPlanner<'a> {
    params: &'a SkillParams,
    rng: ChaCha8Rng,
    legs: Vec<Leg>,
    from: Point,
}

impl LegPlanner<'_> {
    fn gauss(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }

    fn jitter(&mut self, p: Point) -> Point {
        let s = self.params.subgoal_jitter;
        [p[0] + s * self.gauss(), p[1] + s * self.gauss()]
    }

    fn setpoint(&mut self, phase: Phase) -> f64 {
        let base = self.params.speed[phase as usize];
        base * (1.0 + self.params.speed_variability * self.gauss()).max(0.3)
    }

    fn push(&mut self, target: Point, speed: f64, phase: Phase, dwell: f64) {
        self.legs.push(Leg { target, speed, phase, dwell });
        self.from = target;
    }

    /// Straight move with optional overshoot and slowdown.
    fn transport(&mut self, target: Point, phase: Phase, dwell: f64) {
        let speed = self.setpoint(phase);
        let from = self.from;
        let d = [target[0] - from[0], target[1] - from[1]];
        if self.params.slowdown_prob > 0.0 && self.rng.random::<f64>() < self.params.slowdown_prob {
            let a = self.rng.random_range(0.3..0.6);
            let b = a + 0.2;
            self.push([from[0] + a * d[0], from[1] + a * d[1]], speed, phase, 0.0);
            self.push([from[0] + b * d[0], from[1] + b * d[1]], speed * 0.3, phase, 0.0);
        }
        if self.params.overshoot > 0.0 {
            let f = self.params.overshoot * (1.0 + 0.5 * self.gauss()).max(0.0);
            let past = [target[0] + f * d[0], target[1] + f * d[1]];
            self.push(past, speed, phase, 0.0);
            self.push(target, speed * 0.5, phase, dwell);
        } else {
            self.push(target, speed, phase, dwell);
        }
    }
}

/// Simulates one peg-transfer run.
pub fn generate_peg_transfer(
    params: &SkillParams,
    layout: &PegLayout,
    seed: u64,
) -> Result<PegTransferRun, SynthError> {
    params.validate()?;
    if layout.pick.len() + layout.place.len() < 2 || layout.blocks() == 0 {
        return Err(SynthError::InvalidLayout("need at least one pick and one place peg".into()));
    }
    let mut planner = LegPlanner { params, rng: ChaCha8Rng::seed_from_u64(seed), legs: Vec::new(), from: layout.home };
    let mut subgoals = Vec::new();

    for block in 0..layout.blocks() {
        // Starting: approach and grasp, with failed-grasp retries.
        let pick = planner.jitter(layout.pick[block]);
        let speed = planner.setpoint(Phase::Starting);
        planner.push(pick, speed, Phase::Starting, params.grasp_dwell);
        subgoals.push((pick, Phase::Starting));
        let mut retries = 0;
        while retries < 4 && planner.rng.random::<f64>() < params.retry_prob {
            let angle = planner.rng.random_range(0.0..std::f64::consts::TAU);
            let lift = [pick[0] + 8.0 * angle.cos(), pick[1] + 8.0 * angle.sin()];
            let speed = planner.setpoint(Phase::Starting);
            planner.push(lift, speed, Phase::Starting, 0.1);
            planner.push(pick, speed, Phase::Starting, params.grasp_dwell);
            retries += 1;
        }

        // Maneuvering: carry the block to the transfer point.
        let center = planner.jitter(layout.center);
        planner.transport(center, Phase::Maneuvering, 0.0);
        subgoals.push((center, Phase::Maneuvering));

        // Interception: small coordinated hand-off motions around the centre.
        for offset in [[0.0, 6.0], [4.0, -3.0]] {
            let p = planner.jitter([center[0] + offset[0], center[1] + offset[1]]);
            let speed = planner.setpoint(Phase::Interception);
            planner.push(p, speed, Phase::Interception, 0.0);
        }
        let speed = planner.setpoint(Phase::Interception);
        planner.push(center, speed, Phase::Interception, params.transfer_dwell);
        subgoals.push((center, Phase::Interception));

        // Place.
        let place = planner.jitter(layout.place[block]);
        planner.transport(place, Phase::Maneuvering, params.release_dwell);
        subgoals.push((place, Phase::Maneuvering));
    }

    let legs = planner.legs;
    let mut rng = planner.rng;
    let dt = params.dt;
    let noise = Normal::new(0.0, params.noise_sigma).expect("sigma validated");

    let mut pos = layout.home;
    let mut vel = [0.0, 0.0];
    let mut reference = layout.home;
    let mut samples = Vec::new();
    let mut phases = Vec::new();
    let mut k = 0usize;
    let mut step = |pos: &mut Point, vel: &mut Point, r: Point, r_dot: Point, phase: Phase, rng: &mut ChaCha8Rng| {
        samples.push(Sample { t: k as f64 * dt, x: pos[0], y: pos[1] });
        phases.push(phase);
        k += 1;
        let g = params.gains[phase as usize];
        for d in 0..2 {
            let acc = g.kp * (r[d] - pos[d]) + g.kd * (r_dot[d] - vel[d]);
            pos[d] += dt * vel[d];
            vel[d] += dt * acc + if params.noise_sigma > 0.0 { noise.sample(rng) } else { 0.0 };
        }
    };

    for leg in &legs {
        let d = [leg.target[0] - reference[0], leg.target[1] - reference[1]];
        let dist = d[0].hypot(d[1]);
        if dist > 0.0 {
            let dir = [d[0] / dist, d[1] / dist];
            let moving = (dist / (leg.speed * dt)).ceil() as usize;
            for i in 1..=moving {
                let s = (i as f64 * leg.speed * dt).min(dist);
                let r = [reference[0] + s * dir[0], reference[1] + s * dir[1]];
                let r_dot = if i < moving { [leg.speed * dir[0], leg.speed * dir[1]] } else { [0.0, 0.0] };
                step(&mut pos, &mut vel, r, r_dot, leg.phase, &mut rng);
            }
        }
        reference = leg.target;
        for _ in 0..(leg.dwell / dt).round() as usize {
            step(&mut pos, &mut vel, reference, [0.0, 0.0], leg.phase, &mut rng);
        }
    }
    // Final settle at the last subgoal.
    let last = legs.last().map(|l| l.phase).unwrap_or(Phase::Starting);
    for _ in 0..(0.5 / dt).round() as usize {
        step(&mut pos, &mut vel, reference, [0.0, 0.0], last, &mut rng);
    }

    let mut trajectory = Trajectory::from_samples(format!("peg-{seed}"), samples)
        .map_err(|e| SynthError::InvalidParams(e.to_string()))?;
    trajectory.hand = Hand::Right;
    Ok(PegTransferRun { trajectory, phases, subgoals })
}

/// Axis-aligned half-open rectangle `[x_min, x_max) x [y_min, y_max)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Rect {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x_min && x < self.x_max && y >= self.y_min && y < self.y_max
    }

    fn overlaps(&self, o: &Rect) -> bool {
        self.x_min < o.x_max && o.x_min < self.x_max && self.y_min < o.y_max && o.y_min < self.y_max
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PwaScenario {
    /// Ground-truth modes; `modes[i].index == i`.
    pub modes: Vec<PwarxMode>,
    /// Region and the mode active inside it.
    pub partition: Vec<(Rect, usize)>,
    /// Velocity-row noise (mm/s per step).
    pub noise_sigma: f64,
    pub initial: State,
    pub horizon: usize,
    /// Leaving this box aborts the run.
    pub bounds: Rect,
}

impl PwaScenario {
    /// Three modes in three vertical bands. Each outer band pulls the tool
    /// toward the far side; the middle band pushes outward with slight
    /// negative damping, so the switching keeps a sustained oscillation that
    /// visits every band.
    pub fn three_bands(noise_sigma: f64, horizon: usize) -> Self {
        let dt = 1.0 / 30.0;
        // (stiffness w^2, damping c, rest point) for x then y; the mode
        // coefficients follow as a31 = -dt w^2, a33 = 1 - dt c, b3 = dt w^2 x*.
        let physical: [[f64; 6]; 3] = [
            [16.0, 2.6, 30.0, 17.0, 2.0, 48.0],
            [-22.0, -0.4, 18.0, 29.0, 3.5, -36.0],
            [17.0, 2.0, -36.0, 32.0, 3.4, 55.0],
        ];
        let modes = physical
            .iter()
            .enumerate()
            .map(|(i, s)| {
                PwarxMode::from_coefficients(
                    [-dt * s[0], 1.0 - dt * s[1], dt * s[0] * s[2], -dt * s[3], 1.0 - dt * s[4], dt * s[3] * s[5]],
                    dt,
                    i,
                )
            })
            .collect();
        let band = |x_min: f64, x_max: f64| Rect { x_min, x_max, y_min: -1e3, y_max: 1e3 };
        Self {
            modes,
            partition: vec![(band(-1e3, -14.0), 0), (band(-14.0, 14.0), 1), (band(14.0, 1e3), 2)],
            noise_sigma,
            initial: [-30.0, 0.0, 0.0, 0.0],
            horizon,
            bounds: Rect { x_min: -500.0, x_max: 500.0, y_min: -500.0, y_max: 500.0 },
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        if self.modes.is_empty() || self.horizon < 2 {
            return Err(SynthError::InvalidParams("need modes and a horizon of at least 2".into()));
        }
        if !(self.noise_sigma >= 0.0) {
            return Err(SynthError::InvalidParams("noise must be non-negative".into()));
        }
        for (i, (r, m)) in self.partition.iter().enumerate() {
            if *m >= self.modes.len() {
                return Err(SynthError::InvalidParams(format!("region {i} names mode {m}")));
            }
            if self.partition[..i].iter().any(|(o, _)| o.overlaps(r)) {
                return Err(SynthError::InvalidParams(format!("region {i} overlaps another")));
            }
        }
        Ok(())
    }

    pub fn mode_at(&self, x: f64, y: f64) -> Option<usize> {
        self.partition.iter().find(|(r, _)| r.contains(x, y)).map(|(_, m)| *m)
    }

    /// Largest speed reached by the noiseless run from the initial state.
    pub fn noiseless_peak_speed(&self) -> Result<f64, SynthError> {
        let quiet = PwaScenario { noise_sigma: 0.0, ..self.clone() };
        let (traj, _) = generate_pwa_sequence(&quiet, 0)?;
        Ok(traj
            .samples
            .windows(2)
            .map(|w| (w[1].x - w[0].x).hypot(w[1].y - w[0].y) / quiet.modes[0].dt)
            .fold(0.0, f64::max))
    }
}

/// Iterates the scenario for `horizon` steps. Returns `horizon + 1`
/// positions and, for every step `k`, the mode that produced state `k + 1`.
pub fn generate_pwa_sequence(scenario: &PwaScenario, seed: u64) -> Result<(Trajectory, Vec<usize>), SynthError> {
    scenario.validate()?;
    let dt = scenario.modes[0].dt;
    let noise = Normal::new(0.0, scenario.noise_sigma).expect("sigma validated");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = scenario.initial;
    let mut samples = Vec::with_capacity(scenario.horizon + 1);
    let mut labels = Vec::with_capacity(scenario.horizon);
    for k in 0..=scenario.horizon {
        if !scenario.bounds.contains(state[0], state[1]) || state.iter().any(|v| !v.is_finite()) {
            return Err(SynthError::Divergence { step: k });
        }
        samples.push(Sample { t: k as f64 * dt, x: state[0], y: state[1] });
        if k == scenario.horizon {
            break;
        }
        let m = scenario.mode_at(state[0], state[1]).ok_or(SynthError::Uncovered { step: k })?;
        labels.push(m);
        state = one_step_predict(&scenario.modes[m], &state);
        if scenario.noise_sigma > 0.0 {
            state[2] += noise.sample(&mut rng);
            state[3] += noise.sample(&mut rng);
        }
    }
    let traj = Trajectory::from_samples(format!("pwa-{seed}"), samples)
        .map_err(|e| SynthError::InvalidParams(e.to_string()))?;
    Ok((traj, labels))
}

/// Writes a `t,<column>` label sidecar.
pub fn write_labels_csv<W: std::io::Write, L: std::fmt::Display>(
    out: &mut W,
    column: &str,
    dt: f64,
    labels: &[L],
) -> std::io::Result<()> {
    writeln!(out, "t,{column}")?;
    for (k, l) in labels.iter().enumerate() {
        writeln!(out, "{},{l}", k as f64 * dt)?;
    }
    Ok(())
}
