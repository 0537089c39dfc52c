//! Spatial organization of dynamic modes.
//!
//! Tool positions are classified against their PWA mode tags with a
//! multiclass Fisher discriminant; the resubstitution misclassification
//! ratio measures how cleanly the modes occupy distinct regions of the
//! workspace. Lower is better organised.

use crate::stats::mean_std;
use nalgebra::{Matrix2, SymmetricEigen, Vector2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Ridge added to the pooled covariance, relative to its mean variance.
const RIDGE: f64 = 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum PlanningError {
    #[error("need at least 2 distinct tags, got {0}")]
    InsufficientClasses(usize),
    #[error("tag {tag} has {count} points, need at least 3")]
    SmallClass { tag: usize, count: usize },
    #[error("within-class scatter is singular (all points coincide)")]
    SingularScatter,
    #[error("{points} points but {tags} tags")]
    LengthMismatch { points: usize, tags: usize },
    #[error("need at least 2 subjects, got {0}")]
    InsufficientSubjects(usize),
}

pub type Point = [f64; 2];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FisherModel {
    /// Distinct tags, ascending; class `c` below refers to `classes[c]`.
    pub classes: Vec<usize>,
    pub means: Vec<Point>,
    pub priors: Vec<f64>,
    /// Pooled within-class covariance including the ridge (mm^2).
    pub pooled_cov: [[f64; 2]; 2],
    /// Discriminant directions, unit Euclidean norm, ordered by decreasing
    /// between/within ratio. Mutually orthogonal in the within-class metric.
    pub basis: Vec<Point>,
    pub eigenvalues: Vec<f64>,
    /// Per-direction factor turning a unit basis vector into one with unit
    /// within-class variance.
    scales: Vec<f64>,
}

impl FisherModel {
    fn project(&self, p: &Point) -> Vec<f64> {
        self.basis
            .iter()
            .zip(&self.scales)
            .map(|(w, s)| s * (w[0] * p[0] + w[1] * p[1]))
            .collect()
    }

    /// Shared-covariance Gaussian score of each class in discriminant space.
    pub fn scores(&self, p: &Point) -> Vec<f64> {
        let z = self.project(p);
        self.means
            .iter()
            .zip(&self.priors)
            .map(|(m, prior)| {
                let zm = self.project(m);
                let d2: f64 = z.iter().zip(&zm).map(|(a, b)| (a - b) * (a - b)).sum();
                -0.5 * d2 + prior.ln()
            })
            .collect()
    }

    /// Predicted tag; ties go to the smaller tag.
    pub fn predict(&self, p: &Point) -> usize {
        let scores = self.scores(p);
        let mut best = 0;
        for (c, &s) in scores.iter().enumerate() {
            if s > scores[best] {
                best = c;
            }
        }
        self.classes[best]
    }
}

/// Fits a multiclass Fisher discriminant to tagged positions.
pub fn fit_fisher(points: &[Point], tags: &[usize]) -> Result<FisherModel, PlanningError> {
    if points.len() != tags.len() {
        return Err(PlanningError::LengthMismatch { points: points.len(), tags: tags.len() });
    }
    let mut classes: Vec<usize> = tags.to_vec();
    classes.sort_unstable();
    classes.dedup();
    if classes.len() < 2 {
        return Err(PlanningError::InsufficientClasses(classes.len()));
    }
    let n = points.len() as f64;
    let k = classes.len();
    let class_of = |t: usize| classes.binary_search(&t).expect("tag listed");

    let mut counts = vec![0usize; k];
    let mut sums = vec![Vector2::zeros(); k];
    for (p, &t) in points.iter().zip(tags) {
        let c = class_of(t);
        counts[c] += 1;
        sums[c] += Vector2::new(p[0], p[1]);
    }
    for (c, &count) in counts.iter().enumerate() {
        if count < 3 {
            return Err(PlanningError::SmallClass { tag: classes[c], count });
        }
    }
    let means: Vec<Vector2<f64>> = sums.iter().zip(&counts).map(|(s, &c)| s / c as f64).collect();
    let grand = points.iter().fold(Vector2::zeros(), |acc, p| acc + Vector2::new(p[0], p[1])) / n;

    let mut within = Matrix2::zeros();
    for (p, &t) in points.iter().zip(tags) {
        let d = Vector2::new(p[0], p[1]) - means[class_of(t)];
        within += d * d.transpose();
    }
    let mut pooled = within / (n - k as f64);
    let trace = pooled.trace();
    if !(trace > 0.0) {
        return Err(PlanningError::SingularScatter);
    }
    pooled += Matrix2::identity() * (RIDGE * trace / 2.0);

    let mut between = Matrix2::zeros();
    for (m, &c) in means.iter().zip(&counts) {
        let d = m - grand;
        between += d * d.transpose() * c as f64;
    }

    // Sb w = l Sw w via the Cholesky whitening of Sw.
    let chol = pooled.cholesky().ok_or(PlanningError::SingularScatter)?;
    let l_inv = chol.l().try_inverse().ok_or(PlanningError::SingularScatter)?;
    let whitened = l_inv * between * l_inv.transpose();
    let whitened = (whitened + whitened.transpose()) * 0.5;
    let eig = SymmetricEigen::new(whitened);
    let mut order = [0usize, 1];
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let dims = (k - 1).min(2);

    let mut basis = Vec::with_capacity(dims);
    let mut scales = Vec::with_capacity(dims);
    let mut eigenvalues = Vec::with_capacity(dims);
    for &i in order.iter().take(dims) {
        // w has unit within-class variance: w^T Sw w = 1.
        let w = l_inv.transpose() * eig.eigenvectors.column(i);
        let norm = w.norm();
        let mut unit = w / norm;
        // Deterministic sign: first non-negligible component positive.
        if unit[0] < 0.0 || (unit[0] == 0.0 && unit[1] < 0.0) {
            unit = -unit;
        }
        basis.push([unit[0], unit[1]]);
        scales.push(norm);
        eigenvalues.push(eig.eigenvalues[i].max(0.0));
    }

    Ok(FisherModel {
        classes,
        means: means.iter().map(|m| [m[0], m[1]]).collect(),
        priors: counts.iter().map(|&c| c as f64 / n).collect(),
        pooled_cov: [[pooled[(0, 0)], pooled[(0, 1)]], [pooled[(1, 0)], pooled[(1, 1)]]],
        basis,
        eigenvalues,
        scales,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeError {
    pub tag: usize,
    pub count: usize,
    pub errors: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpatialOrganizationScore {
    /// Misclassified / total.
    pub ratio: f64,
    pub errors: usize,
    pub n_points: usize,
    pub per_mode: Vec<ModeError>,
}

/// Fits on all points and reclassifies the same points.
pub fn spatial_organization(points: &[Point], tags: &[usize]) -> Result<SpatialOrganizationScore, PlanningError> {
    let model = fit_fisher(points, tags)?;
    let mut per_mode: Vec<ModeError> =
        model.classes.iter().map(|&tag| ModeError { tag, count: 0, errors: 0 }).collect();
    let mut errors = 0;
    for (p, &t) in points.iter().zip(tags) {
        let slot = model.classes.binary_search(&t).expect("tag listed");
        per_mode[slot].count += 1;
        if model.predict(p) != t {
            per_mode[slot].errors += 1;
            errors += 1;
        }
    }
    Ok(SpatialOrganizationScore {
        ratio: errors as f64 / points.len() as f64,
        errors,
        n_points: points.len(),
        per_mode,
    })
}

/// One subject's tagged positions. Tags must share a labelling across
/// subjects (e.g. from a pooled identification).
#[derive(Debug, Clone, PartialEq)]
pub struct TaggedPoints {
    pub points: Vec<Point>,
    pub tags: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LooScore {
    pub mean: f64,
    /// Population standard deviation over folds.
    pub std: f64,
    /// Ratio with each subject held out, in subject order.
    pub folds: Vec<f64>,
}

/// Spatial organization recomputed on the pooled remainder with each subject
/// held out in turn.
pub fn loo_spatial_organization(subjects: &[TaggedPoints]) -> Result<LooScore, PlanningError> {
    if subjects.len() < 2 {
        return Err(PlanningError::InsufficientSubjects(subjects.len()));
    }
    let folds = (0..subjects.len())
        .map(|held| {
            let (mut points, mut tags) = (Vec::new(), Vec::new());
            for (i, s) in subjects.iter().enumerate() {
                if i != held {
                    points.extend_from_slice(&s.points);
                    tags.extend_from_slice(&s.tags);
                }
            }
            spatial_organization(&points, &tags).map(|s| s.ratio)
        })
        .collect::<Result<Vec<f64>, _>>()?;
    let (mean, std) = mean_std(&folds);
    Ok(LooScore { mean, std, folds })
}
