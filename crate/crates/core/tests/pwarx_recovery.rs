use skilltrace::ingest::{differentiate, DiffOptions};
use skilltrace::pwarx::{
    fit_mode_ls, identify_pwarx, one_step_predict, IdentOptions, ModeSet, PwarxMode, RegressionPair,
};
use skilltrace::synth::{generate_pwa_sequence, PwaScenario, Rect};

/// All permutations of `0..n` (n is tiny here).
fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for i in 0..=p.len() {
            let mut q = p.clone();
            q.insert(i, n - 1);
            out.push(q);
        }
    }
    out
}

/// Best label agreement over relabelings; returns (accuracy, true mode of
/// each identified mode).
fn match_labels(ms: &ModeSet, pairs: &[RegressionPair], truth: &[usize], k: usize) -> (f64, Vec<usize>) {
    let mut best = (0usize, vec![]);
    for perm in permutations(k) {
        let hits = pairs
            .iter()
            .zip(&ms.assignments)
            .filter(|(p, &m)| perm.get(m) == Some(&truth[p.sample]))
            .count();
        if hits > best.0 {
            best = (hits, perm);
        }
    }
    (best.0 as f64 / pairs.len() as f64, best.1)
}

fn rel_error(est: &PwarxMode, truth: &PwarxMode) -> f64 {
    est.coefficients()
        .iter()
        .zip(truth.coefficients())
        .map(|(e, t)| (e - t).abs() / t.abs())
        .fold(0.0, f64::max)
}

fn run(noise_sigma: f64, seed: u64) -> (f64, f64) {
    let scenario = PwaScenario { noise_sigma, ..PwaScenario::three_bands(0.0, 10_000) };
    let (traj, truth) = generate_pwa_sequence(&scenario, seed).unwrap();
    let profile = differentiate(&traj, &DiffOptions::default()).unwrap();
    let (ms, pairs) = identify_pwarx(&profile, 3, &IdentOptions { seed, ..Default::default() }).unwrap();
    assert_eq!(ms.k(), 3);
    assert!(ms.is_monotone());
    let (acc, map) = match_labels(&ms, &pairs, &truth, 3);
    let err = ms
        .modes
        .iter()
        .zip(&map)
        .map(|(m, &t)| rel_error(m, &scenario.modes[t]))
        .fold(0.0, f64::max);
    (acc, err)
}

#[test]
fn noiseless_recovery_is_exact() {
    let (acc, err) = run(0.0, 0);
    assert_eq!(acc, 1.0);
    assert!(err < 1e-6, "relative error {err}");
}

#[test]
fn noisy_recovery() {
    let peak = PwaScenario::three_bands(0.0, 10_000).noiseless_peak_speed().unwrap();
    for seed in 0..5 {
        let (acc, err) = run(0.01 * peak, seed);
        eprintln!("seed {seed}: accuracy {acc:.4}, max relative error {err:.4}");
        assert!(acc >= 0.9 && err < 0.05);
    }
}

fn noisy_three_band() -> (skilltrace::ingest::KinematicProfile, Vec<usize>) {
    let (traj, truth) = generate_pwa_sequence(&PwaScenario::three_bands(2.0, 4_000), 9).unwrap();
    (differentiate(&traj, &DiffOptions::default()).unwrap(), truth)
}

#[test]
fn single_mode_reduces_to_least_squares() {
    let (profile, _) = noisy_three_band();
    let (ms, pairs) = identify_pwarx(&profile, 1, &IdentOptions::default()).unwrap();
    let (direct, rss) = fit_mode_ls(&pairs, profile.dt).unwrap();
    for (a, b) in ms.modes[0].coefficients().iter().zip(direct.coefficients()) {
        assert!((a - b).abs() <= 1e-9 * b.abs().max(1.0));
    }
    assert!((ms.objective - rss).abs() <= 1e-9 * rss);
}

#[test]
fn identified_mode_reproduces_single_mode_data() {
    let mode = PwarxMode::from_coefficients([-0.2, 0.95, 3.0, -0.3, 0.93, -1.5], 1.0 / 30.0, 0);
    let scenario = PwaScenario {
        modes: vec![mode],
        partition: vec![(Rect { x_min: -1e3, x_max: 1e3, y_min: -1e3, y_max: 1e3 }, 0)],
        noise_sigma: 0.0,
        initial: [-10.0, 8.0, 30.0, -20.0],
        horizon: 400,
        bounds: Rect { x_min: -1e3, x_max: 1e3, y_min: -1e3, y_max: 1e3 },
    };
    let (traj, _) = generate_pwa_sequence(&scenario, 0).unwrap();
    let profile = differentiate(&traj, &DiffOptions::default()).unwrap();
    let (ms, pairs) = identify_pwarx(&profile, 1, &IdentOptions::default()).unwrap();
    let mut state = pairs[0].state;
    for pair in pairs.iter().take(100) {
        for (a, b) in state.iter().zip(pair.state) {
            assert!((a - b).abs() < 1e-6 * b.abs().max(1.0));
        }
        state = one_step_predict(&ms.modes[0], &state);
    }
}

#[test]
fn converged_assignment_is_locally_optimal() {
    let (profile, _) = noisy_three_band();
    let (ms, pairs) = identify_pwarx(&profile, 3, &IdentOptions::default()).unwrap();
    assert!(ms.converged);
    for (p, &m) in pairs.iter().zip(&ms.assignments) {
        let own = ms.modes[m].residual(p);
        assert!(ms.modes.iter().all(|other| own <= other.residual(p)));
    }
}

#[test]
fn objective_is_consistent_and_label_invariant() {
    let (profile, _) = noisy_three_band();
    let (ms, pairs) = identify_pwarx(&profile, 3, &IdentOptions::default()).unwrap();
    assert!((ms.objective - ms.evaluate(&pairs)).abs() <= 1e-9 * ms.objective);
    assert!(ms.is_monotone());
    // Relabel modes by a cyclic shift.
    let mut relabelled = ms.clone();
    let k = ms.k();
    relabelled.modes = (0..k).map(|i| ms.modes[(i + 1) % k]).collect();
    relabelled.assignments = ms.assignments.iter().map(|&m| (m + k - 1) % k).collect();
    assert!((relabelled.evaluate(&pairs) - ms.evaluate(&pairs)).abs() <= 1e-9 * ms.objective);
}

#[test]
fn identification_is_deterministic() {
    let (profile, _) = noisy_three_band();
    let opts = IdentOptions { seed: 5, ..Default::default() };
    let (a, _) = identify_pwarx(&profile, 3, &opts).unwrap();
    let (b, _) = identify_pwarx(&profile, 3, &opts).unwrap();
    assert_eq!(a, b);
}

#[test]
fn position_rows_are_structural() {
    let (profile, _) = noisy_three_band();
    let (ms, pairs) = identify_pwarx(&profile, 3, &IdentOptions::default()).unwrap();
    for p in &pairs {
        for mode in &ms.modes {
            let next = one_step_predict(mode, &p.state);
            assert_eq!(next[0], p.state[0] + mode.dt * p.state[2]);
            assert_eq!(next[1], p.state[1] + mode.dt * p.state[3]);
        }
    }
}
