use super::{IngestError, SavGolKernel, Trajectory};
use serde::{Deserialize, Serialize};
use std::ops::Range;

/// Uniform-sampling tolerance: successive steps may deviate from `dt` by
/// less than this fraction.
const MAX_STEP_DEVIATION: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiffOptions {
    /// Savitzky-Golay window length (odd).
    pub window: usize,
    /// Savitzky-Golay polynomial order.
    pub order: usize,
    /// Speeds at or below this (mm/s) zero out curvature and the
    /// tangential/normal split.
    pub v_floor: f64,
}

impl Default for DiffOptions {
    fn default() -> Self {
        Self { window: 11, order: 3, v_floor: 1.0 }
    }
}

/// Per-sample kinematics aligned with the source trajectory.
///
/// Every array has the trajectory's length. The first and last
/// `(window - 1) / 2` samples come from off-centre fits and are excluded from
/// all statistics; [`KinematicProfile::interior`] gives the usable range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KinematicProfile {
    pub source: String,
    pub dt: f64,
    /// Raw positions (mm).
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    /// Smoothed positions (mm).
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    pub vx: Vec<f64>,
    pub vy: Vec<f64>,
    pub v: Vec<f64>,
    pub ax: Vec<f64>,
    pub ay: Vec<f64>,
    pub a_t: Vec<f64>,
    pub a_n: Vec<f64>,
    pub kappa: Vec<f64>,
    pub v_floor: f64,
    pub interior_start: usize,
    pub interior_end: usize,
}

impl KinematicProfile {
    pub fn len(&self) -> usize {
        self.v.len()
    }

    pub fn is_empty(&self) -> bool {
        self.v.is_empty()
    }

    pub fn interior(&self) -> Range<usize> {
        self.interior_start..self.interior_end
    }

    pub fn interior_len(&self) -> usize {
        self.interior_end - self.interior_start
    }

    /// Keeps only samples in `range` (indices into this profile), marking all
    /// of them interior.
    pub fn slice(&self, range: Range<usize>) -> KinematicProfile {
        let cut = |v: &Vec<f64>| v[range.clone()].to_vec();
        KinematicProfile {
            source: self.source.clone(),
            dt: self.dt,
            x: cut(&self.x),
            y: cut(&self.y),
            xs: cut(&self.xs),
            ys: cut(&self.ys),
            vx: cut(&self.vx),
            vy: cut(&self.vy),
            v: cut(&self.v),
            ax: cut(&self.ax),
            ay: cut(&self.ay),
            a_t: cut(&self.a_t),
            a_n: cut(&self.a_n),
            kappa: cut(&self.kappa),
            v_floor: self.v_floor,
            interior_start: 0,
            interior_end: range.len(),
        }
    }
}

/// Smooths and differentiates a uniformly sampled trajectory.
pub fn differentiate(traj: &Trajectory, opts: &DiffOptions) -> Result<KinematicProfile, IngestError> {
    let kernel = SavGolKernel::new(opts.window, opts.order)
        .ok_or(IngestError::BadWindow { window: opts.window, order: opts.order })?;
    let need = 2 * opts.window + 1;
    if traj.len() < need {
        return Err(IngestError::TooShort { got: traj.len(), need });
    }
    let dev = traj.max_step_deviation();
    if dev >= MAX_STEP_DEVIATION {
        return Err(IngestError::NonUniform { max_rel_dev: dev });
    }

    let dt = traj.dt;
    let x = traj.xs();
    let y = traj.ys();
    let xs = kernel.apply(&x, 0, dt);
    let ys = kernel.apply(&y, 0, dt);
    let vx = kernel.apply(&x, 1, dt);
    let vy = kernel.apply(&y, 1, dt);
    let ax = kernel.apply(&x, 2, dt);
    let ay = kernel.apply(&y, 2, dt);

    let n = x.len();
    let mut v = Vec::with_capacity(n);
    let mut a_t = Vec::with_capacity(n);
    let mut a_n = Vec::with_capacity(n);
    for i in 0..n {
        let speed = vx[i].hypot(vy[i]);
        v.push(speed);
        if speed > opts.v_floor {
            a_t.push((vx[i] * ax[i] + vy[i] * ay[i]) / speed);
            a_n.push((vx[i] * ay[i] - vy[i] * ax[i]).abs() / speed);
        } else {
            a_t.push(0.0);
            a_n.push(0.0);
        }
    }
    let kappa = compute_curvature(&vx, &vy, &ax, &ay, opts.v_floor);
    let half = kernel.half();

    Ok(KinematicProfile {
        source: traj.id.clone(),
        dt,
        x,
        y,
        xs,
        ys,
        vx,
        vy,
        v,
        ax,
        ay,
        a_t,
        a_n,
        kappa,
        v_floor: opts.v_floor,
        interior_start: half,
        interior_end: n - half,
    })
}

/// Planar curvature `|vx ay - vy ax| / |v|^3`, zero wherever the speed is at
/// or below `v_floor`.
pub fn compute_curvature(vx: &[f64], vy: &[f64], ax: &[f64], ay: &[f64], v_floor: f64) -> Vec<f64> {
    assert!(
        vx.len() == vy.len() && vx.len() == ax.len() && vx.len() == ay.len(),
        "kinematic arrays must have equal length"
    );
    (0..vx.len())
        .map(|i| {
            let speed2 = vx[i] * vx[i] + vy[i] * vy[i];
            if speed2.sqrt() > v_floor {
                (vx[i] * ay[i] - vy[i] * ax[i]).abs() / (speed2 * speed2.sqrt())
            } else {
                0.0
            }
        })
        .collect()
}
