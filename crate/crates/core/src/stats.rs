//! Task-level statistics in the speed-curvature plane.
//!
//! Samples are binned into a 2D histogram (linear speed, logarithmic
//! curvature with an underflow bin), floored so no bin is empty, and
//! compared with the symmetric KL divergence
//! `D(p||q) = [KL(p||q) + KL(q||p)] / 2` in nats. Group-level tables are
//! built with leave-one-subject-out pooling.

use crate::ingest::{GroupLabel, KinematicProfile};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("no interior samples to bin")]
    EmptyInput,
    #[error("histograms use different binning")]
    BinningMismatch,
    #[error("group {group} has {got} subjects, need at least 2")]
    InsufficientSubjects { group: GroupLabel, got: usize },
    #[error("invalid binning: {0}")]
    BadBinning(String),
}

/// Speed-curvature bin layout.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Binning {
    pub speed_bins: usize,
    /// Upper edge of the speed axis (mm/s); faster samples land in the last bin.
    pub v_max: f64,
    /// Logarithmic curvature bins, not counting the underflow bin.
    pub kappa_bins: usize,
    pub kappa_min: f64,
    pub kappa_max: f64,
    /// Additive probability floor applied before renormalising.
    pub alpha: f64,
}

impl Default for Binning {
    fn default() -> Self {
        Self {
            speed_bins: 50,
            v_max: 1.0,
            kappa_bins: 50,
            kappa_min: 1e-3,
            kappa_max: 10.0,
            alpha: 1e-6,
        }
    }
}

impl Binning {
    /// Sets `v_max` to the largest interior speed across `profiles`.
    pub fn fit_speed_range<'a>(mut self, profiles: impl IntoIterator<Item = &'a KinematicProfile>) -> Self {
        let v_max = profiles
            .into_iter()
            .flat_map(|p| p.interior().map(move |i| p.v[i]))
            .fold(0.0, f64::max);
        self.v_max = if v_max > 0.0 { v_max } else { 1.0 };
        self
    }

    pub fn validate(&self) -> Result<(), StatsError> {
        let bad = |why: &str| Err(StatsError::BadBinning(why.to_string()));
        if self.speed_bins == 0 || self.kappa_bins == 0 {
            return bad("bin counts must be positive");
        }
        if !(self.v_max.is_finite() && self.v_max > 0.0) {
            return bad("v_max must be positive");
        }
        if !(self.kappa_min > 0.0 && self.kappa_max > self.kappa_min && self.kappa_max.is_finite()) {
            return bad("need 0 < kappa_min < kappa_max");
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return bad("alpha must be positive");
        }
        Ok(())
    }

    /// Curvature axis length including the underflow bin.
    pub fn kappa_len(&self) -> usize {
        self.kappa_bins + 1
    }

    pub fn n_bins(&self) -> usize {
        self.speed_bins * self.kappa_len()
    }

    pub fn speed_edges(&self) -> Vec<f64> {
        (0..=self.speed_bins)
            .map(|i| self.v_max * i as f64 / self.speed_bins as f64)
            .collect()
    }

    /// `[0, kappa_min, ..., kappa_max]`; the first interval is the underflow bin.
    pub fn kappa_edges(&self) -> Vec<f64> {
        let (lo, hi) = (self.kappa_min.ln(), self.kappa_max.ln());
        let mut edges = vec![0.0];
        edges.extend((0..=self.kappa_bins).map(|i| {
            if i == 0 {
                self.kappa_min
            } else if i == self.kappa_bins {
                self.kappa_max
            } else {
                (lo + (hi - lo) * i as f64 / self.kappa_bins as f64).exp()
            }
        }));
        edges
    }

    /// Flat bin index (speed-major) of one sample.
    pub fn locate(&self, v: f64, kappa: f64) -> usize {
        let last_v = self.speed_bins - 1;
        let si = ((v / self.v_max) * self.speed_bins as f64).floor();
        let si = if si.is_nan() || si < 0.0 { 0 } else { (si as usize).min(last_v) };
        let ki = if !(kappa >= self.kappa_min) {
            0
        } else {
            let (lo, hi) = (self.kappa_min.ln(), self.kappa_max.ln());
            let f = ((kappa.ln() - lo) / (hi - lo) * self.kappa_bins as f64).floor();
            1 + (f.max(0.0) as usize).min(self.kappa_bins - 1)
        };
        si * self.kappa_len() + ki
    }
}

/// Raw pooled bin counts; the additive building block for leave-one-out
/// histograms.
#[derive(Debug, Clone, PartialEq)]
pub struct BinCounts {
    pub binning: Binning,
    pub counts: Vec<u64>,
    pub total: u64,
}

impl BinCounts {
    pub fn zeros(binning: Binning) -> Self {
        Self { binning, counts: vec![0; binning.n_bins()], total: 0 }
    }

    pub fn from_profiles<'a>(
        profiles: impl IntoIterator<Item = &'a KinematicProfile>,
        binning: Binning,
    ) -> Self {
        let mut c = Self::zeros(binning);
        for p in profiles {
            for i in p.interior() {
                c.counts[binning.locate(p.v[i], p.kappa[i])] += 1;
                c.total += 1;
            }
        }
        c
    }

    pub fn add(&mut self, other: &BinCounts) {
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.total += other.total;
    }

    pub fn sub(&mut self, other: &BinCounts) {
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a -= b;
        }
        self.total -= other.total;
    }

    /// Normalises, adds the probability floor and renormalises.
    pub fn to_histogram(&self) -> Result<SpeedCurvatureHistogram, StatsError> {
        if self.total == 0 {
            return Err(StatsError::EmptyInput);
        }
        let b = &self.binning;
        let total = self.total as f64;
        let norm = 1.0 + b.alpha * b.n_bins() as f64;
        let mut p: Vec<f64> = self.counts.iter().map(|&c| (c as f64 / total + b.alpha) / norm).collect();
        // Absorb rounding so the mass is 1 to the last bit we can manage.
        let s: f64 = p.iter().sum();
        p.iter_mut().for_each(|v| *v /= s);
        Ok(SpeedCurvatureHistogram {
            speed_edges: b.speed_edges(),
            kappa_edges: b.kappa_edges(),
            speed_bins: b.speed_bins,
            kappa_len: b.kappa_len(),
            p,
            n_samples: self.total,
        })
    }
}

/// Floored, normalised distribution over the speed-curvature grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedCurvatureHistogram {
    pub speed_edges: Vec<f64>,
    pub kappa_edges: Vec<f64>,
    pub speed_bins: usize,
    /// Curvature axis length, underflow bin included.
    pub kappa_len: usize,
    /// Speed-major probabilities.
    pub p: Vec<f64>,
    pub n_samples: u64,
}

impl SpeedCurvatureHistogram {
    pub fn get(&self, speed_idx: usize, kappa_idx: usize) -> f64 {
        self.p[speed_idx * self.kappa_len + kappa_idx]
    }

    pub fn same_binning(&self, other: &Self) -> bool {
        self.speed_edges == other.speed_edges && self.kappa_edges == other.kappa_edges
    }
}

/// Pools the interior samples of all `profiles` into one histogram.
pub fn build_histogram<'a>(
    profiles: impl IntoIterator<Item = &'a KinematicProfile>,
    binning: &Binning,
) -> Result<SpeedCurvatureHistogram, StatsError> {
    binning.validate()?;
    BinCounts::from_profiles(profiles, *binning).to_histogram()
}

/// Smallest set of bins, taken by descending probability, whose mass
/// reaches `mass`. Equal probabilities are taken in (speed, curvature)
/// index order. Returned as `(speed_idx, kappa_idx)`.
pub fn dominant_states(h: &SpeedCurvatureHistogram, mass: f64) -> Vec<(usize, usize)> {
    let mut order: Vec<usize> = (0..h.p.len()).collect();
    order.sort_by(|&a, &b| h.p[b].total_cmp(&h.p[a]).then(a.cmp(&b)));
    let mut acc = 0.0;
    let mut out = Vec::new();
    for idx in order {
        if acc >= mass - 1e-12 {
            break;
        }
        acc += h.p[idx];
        out.push((idx / h.kappa_len, idx % h.kappa_len));
    }
    out
}

/// Symmetric KL divergence in nats.
///
/// Summed as `(p - q)(ln p - ln q) / 2`, which equals
/// `[KL(p||q) + KL(q||p)] / 2` term by term and keeps every term
/// non-negative.
pub fn symmetric_kl(p: &SpeedCurvatureHistogram, q: &SpeedCurvatureHistogram) -> Result<f64, StatsError> {
    if !p.same_binning(q) || p.p.len() != q.p.len() {
        return Err(StatsError::BinningMismatch);
    }
    Ok(symmetric_kl_raw(&p.p, &q.p))
}

pub(crate) fn symmetric_kl_raw(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(&a, &b)| (a - b) * (a.ln() - b.ln())).sum::<f64>()
}

/// One subject's recordings.
#[derive(Debug, Clone)]
pub struct Subject {
    pub id: String,
    pub profiles: Vec<KinematicProfile>,
}

#[derive(Debug, Clone)]
pub struct Group {
    pub label: GroupLabel,
    pub subjects: Vec<Subject>,
}

/// Global binning for a set of groups: default layout with the speed axis
/// spanning every interior sample.
pub fn binning_for_groups(groups: &[Group], template: Binning) -> Binning {
    template.fit_speed_range(
        groups.iter().flat_map(|g| g.subjects.iter()).flat_map(|s| s.profiles.iter()),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DivergenceTable {
    pub groups: Vec<GroupLabel>,
    /// `mean[m][n]`: mean over subject pairs of D(group m minus i || group n minus j), nats.
    pub mean: Vec<Vec<f64>>,
    /// Population standard deviation of the same.
    pub std: Vec<Vec<f64>>,
    /// Number of subject pairs per cell.
    pub pairs: Vec<Vec<usize>>,
}

/// Leave-one-subject-out permutation table.
///
/// Cell `(m, n)` collects D(P_{m \ i} || P_{n \ j}) over subject indices
/// `i` of group `m` and `j` of group `n` with `i != j`.
pub fn loo_permutation_table(groups: &[Group], binning: &Binning) -> Result<DivergenceTable, StatsError> {
    binning.validate()?;
    for g in groups {
        if g.subjects.len() < 2 {
            return Err(StatsError::InsufficientSubjects { group: g.label, got: g.subjects.len() });
        }
    }
    // loo[g][i]: histogram of group g without subject i
    let mut loo: Vec<Vec<SpeedCurvatureHistogram>> = Vec::with_capacity(groups.len());
    for g in groups {
        let per_subject: Vec<BinCounts> = g
            .subjects
            .iter()
            .map(|s| BinCounts::from_profiles(&s.profiles, *binning))
            .collect();
        let mut all = BinCounts::zeros(*binning);
        per_subject.iter().for_each(|c| all.add(c));
        let hists = per_subject
            .iter()
            .map(|c| {
                let mut rest = all.clone();
                rest.sub(c);
                rest.to_histogram()
            })
            .collect::<Result<Vec<_>, _>>()?;
        loo.push(hists);
    }

    let k = groups.len();
    let mut mean = vec![vec![0.0; k]; k];
    let mut std = vec![vec![0.0; k]; k];
    let mut pairs = vec![vec![0; k]; k];
    for m in 0..k {
        for n in 0..k {
            let mut values = Vec::new();
            for (i, hm) in loo[m].iter().enumerate() {
                for (j, hn) in loo[n].iter().enumerate() {
                    if i != j {
                        values.push(symmetric_kl_raw(&hm.p, &hn.p));
                    }
                }
            }
            let (mu, sd) = mean_std(&values);
            mean[m][n] = mu;
            std[m][n] = sd;
            pairs[m][n] = values.len();
        }
    }
    Ok(DivergenceTable { groups: groups.iter().map(|g| g.label).collect(), mean, std, pairs })
}

/// Mean and population standard deviation; `(0, 0)` for an empty slice.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mu = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / n;
    (mu, var.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub predicted: GroupLabel,
    /// Divergence to every group with a non-empty reference, in group order.
    pub divergences: Vec<(GroupLabel, f64)>,
}

/// Assigns a subject to the group whose pooled histogram is closest in
/// symmetric KL. A subject whose id appears in a group is left out of that
/// group's reference. Ties go to the earlier label in
/// Expert < Intermediate < Novice order.
pub fn classify_subject(
    subject: &Subject,
    groups: &[Group],
    binning: &Binning,
) -> Result<Classification, StatsError> {
    binning.validate()?;
    let mine = build_histogram(&subject.profiles, binning)?;
    let mut order: Vec<&Group> = groups.iter().collect();
    order.sort_by_key(|g| g.label);

    let mut divergences = Vec::new();
    for g in order {
        let reference = BinCounts::from_profiles(
            g.subjects.iter().filter(|s| s.id != subject.id).flat_map(|s| s.profiles.iter()),
            *binning,
        );
        if reference.total == 0 {
            continue;
        }
        let h = reference.to_histogram()?;
        divergences.push((g.label, symmetric_kl_raw(&mine.p, &h.p)));
    }
    let mut best: Option<(GroupLabel, f64)> = None;
    for &(label, d) in &divergences {
        if best.is_none_or(|(_, bd)| d < bd) {
            best = Some((label, d));
        }
    }
    let (predicted, _) = best.ok_or(StatsError::EmptyInput)?;
    Ok(Classification { predicted, divergences })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub labels: Vec<GroupLabel>,
    /// `counts[true][predicted]`.
    pub counts: Vec<Vec<usize>>,
}

impl ConfusionMatrix {
    pub fn correct(&self) -> usize {
        (0..self.labels.len()).map(|i| self.counts[i][i]).sum()
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }
}

/// Leave-one-out classification of every subject of every group.
pub fn confusion_matrix(groups: &[Group], binning: &Binning) -> Result<ConfusionMatrix, StatsError> {
    let mut sorted: Vec<&Group> = groups.iter().collect();
    sorted.sort_by_key(|g| g.label);
    let labels: Vec<GroupLabel> = sorted.iter().map(|g| g.label).collect();
    let mut counts = vec![vec![0; labels.len()]; labels.len()];
    for (row, g) in sorted.iter().enumerate() {
        for s in &g.subjects {
            let c = classify_subject(s, groups, binning)?;
            let col = labels.iter().position(|&l| l == c.predicted).expect("label from groups");
            counts[row][col] += 1;
        }
    }
    Ok(ConfusionMatrix { labels, counts })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn profile(v: Vec<f64>, kappa: Vec<f64>) -> KinematicProfile {
        let n = v.len();
        let z = vec![0.0; n];
        KinematicProfile {
            source: "p".into(),
            dt: 1.0 / 30.0,
            x: z.clone(),
            y: z.clone(),
            xs: z.clone(),
            ys: z.clone(),
            vx: v.clone(),
            vy: z.clone(),
            v,
            ax: z.clone(),
            ay: z.clone(),
            a_t: z.clone(),
            a_n: z,
            kappa,
            v_floor: 1.0,
            interior_start: 0,
            interior_end: n,
        }
    }

    fn small_binning() -> Binning {
        Binning { speed_bins: 4, v_max: 40.0, kappa_bins: 3, ..Binning::default() }
    }

    #[test]
    fn edges_are_strictly_increasing() {
        let b = Binning { v_max: 123.0, ..Binning::default() };
        for edges in [b.speed_edges(), b.kappa_edges()] {
            assert!(edges.windows(2).all(|w| w[0] < w[1]));
        }
        assert_eq!(b.kappa_edges().len(), 52);
        assert_eq!(b.kappa_edges()[1], 1e-3);
        assert_eq!(*b.kappa_edges().last().unwrap(), 10.0);
    }

    #[test]
    fn locate_handles_extremes() {
        let b = small_binning();
        assert_eq!(b.locate(0.0, 0.0), 0);
        assert_eq!(b.locate(1e9, 1e9), 3 * 4 + 3);
        assert_eq!(b.locate(10.0, 5e-4), 4);
        assert_eq!(b.locate(10.0, 1e-3), 5);
    }

    #[test]
    fn single_bin_mass() {
        let b = small_binning();
        let p = profile(vec![5.0; 40], vec![0.0; 40]);
        let h = build_histogram([&p], &b).unwrap();
        let bins = b.n_bins() as f64;
        let alpha_prime = b.alpha / (1.0 + bins * b.alpha);
        assert!((h.p[0] - (1.0 - (bins - 1.0) * alpha_prime)).abs() < 1e-15);
        for &v in &h.p[1..] {
            assert!((v - alpha_prime).abs() < 1e-18);
        }
        assert!((h.p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pooling_equals_union() {
        let b = small_binning();
        let p1 = profile(vec![1.0, 12.0, 25.0], vec![0.0, 0.01, 0.5]);
        let p2 = profile(vec![33.0, 12.0], vec![2.0, 0.01]);
        let union = profile(vec![1.0, 12.0, 25.0, 33.0, 12.0], vec![0.0, 0.01, 0.5, 2.0, 0.01]);
        let pooled = build_histogram([&p1, &p2], &b).unwrap();
        let whole = build_histogram([&union], &b).unwrap();
        assert_eq!(pooled, whole);
        let reversed = build_histogram([&p2, &p1], &b).unwrap();
        assert_eq!(pooled, reversed);
    }

    #[test]
    fn empty_input() {
        let p = profile(vec![], vec![]);
        assert_eq!(build_histogram([&p], &small_binning()), Err(StatsError::EmptyInput));
    }

    #[test]
    fn dominant_single_peak_and_uniform() {
        let b = small_binning();
        let p = profile(vec![5.0; 40], vec![0.0; 40]);
        let h = build_histogram([&p], &b).unwrap();
        assert_eq!(dominant_states(&h, 0.5), vec![(0, 0)]);

        let n = b.n_bins();
        let uniform = SpeedCurvatureHistogram {
            speed_edges: b.speed_edges(),
            kappa_edges: b.kappa_edges(),
            speed_bins: b.speed_bins,
            kappa_len: b.kappa_len(),
            p: vec![1.0 / n as f64; n],
            n_samples: 0,
        };
        let states = dominant_states(&uniform, 0.5);
        assert_eq!(states.len(), n.div_ceil(2));
        // ties resolved in index order
        assert_eq!(states[0], (0, 0));
        assert_eq!(states[1], (0, 1));
    }

    #[test]
    fn two_bin_divergence() {
        // 0.5 * [0.5 ln(0.5/0.25) + 0.5 ln(0.5/0.75) + 0.25 ln(0.25/0.5) + 0.75 ln(0.75/0.5)]
        let oracle = 0.5
            * (0.5 * (0.5f64 / 0.25).ln()
                + 0.5 * (0.5f64 / 0.75).ln()
                + 0.25 * (0.25f64 / 0.5).ln()
                + 0.75 * (0.75f64 / 0.5).ln());
        let d = symmetric_kl_raw(&[0.5, 0.5], &[0.25, 0.75]);
        assert!((d - oracle).abs() < 1e-15);
        assert!((d - 0.1373).abs() < 5e-5);
    }

    #[test]
    fn mismatched_binning() {
        let p = profile(vec![5.0; 10], vec![0.0; 10]);
        let a = build_histogram([&p], &small_binning()).unwrap();
        let b = build_histogram([&p], &Binning { v_max: 50.0, ..small_binning() }).unwrap();
        assert_eq!(symmetric_kl(&a, &b), Err(StatsError::BinningMismatch));
        assert_eq!(symmetric_kl(&a, &a), Ok(0.0));
    }

    fn subject(id: &str, v: f64, kappa: f64) -> Subject {
        Subject { id: id.into(), profiles: vec![profile(vec![v; 20], vec![kappa; 20])] }
    }

    #[test]
    fn identical_subjects_give_zero_table() {
        let b = small_binning();
        let groups = vec![
            Group { label: GroupLabel::Expert, subjects: vec![subject("a", 5.0, 0.0), subject("b", 5.0, 0.0)] },
            Group { label: GroupLabel::Novice, subjects: vec![subject("c", 5.0, 0.0), subject("d", 5.0, 0.0)] },
        ];
        let t = loo_permutation_table(&groups, &b).unwrap();
        for row in &t.mean {
            for &v in row {
                assert_eq!(v, 0.0);
            }
        }
        assert_eq!(t.pairs, vec![vec![2, 2], vec![2, 2]]);
    }

    #[test]
    fn insufficient_subjects() {
        let groups = vec![Group { label: GroupLabel::Expert, subjects: vec![subject("a", 5.0, 0.0)] }];
        assert_eq!(
            loo_permutation_table(&groups, &small_binning()),
            Err(StatsError::InsufficientSubjects { group: GroupLabel::Expert, got: 1 })
        );
    }

    #[test]
    fn zero_divergence_wins_classification() {
        let b = small_binning();
        let probe = subject("probe", 5.0, 0.0);
        let groups = vec![
            Group { label: GroupLabel::Expert, subjects: vec![subject("e", 35.0, 5.0)] },
            Group { label: GroupLabel::Intermediate, subjects: vec![subject("i", 5.0, 0.0)] },
            Group { label: GroupLabel::Novice, subjects: vec![subject("n", 25.0, 0.5)] },
        ];
        let c = classify_subject(&probe, &groups, &b).unwrap();
        assert_eq!(c.predicted, GroupLabel::Intermediate);
        assert_eq!(c.divergences[1].1, 0.0);
    }

    #[test]
    fn classification_ties_prefer_expert() {
        let b = small_binning();
        let probe = subject("probe", 5.0, 0.0);
        let groups = vec![
            Group { label: GroupLabel::Novice, subjects: vec![subject("n", 5.0, 0.0)] },
            Group { label: GroupLabel::Expert, subjects: vec![subject("e", 5.0, 0.0)] },
        ];
        assert_eq!(classify_subject(&probe, &groups, &b).unwrap().predicted, GroupLabel::Expert);
    }

    #[test]
    fn mean_std_population_form() {
        let (m, s) = mean_std(&[1.0, 3.0]);
        assert_eq!(m, 2.0);
        assert_eq!(s, 1.0);
    }
}
