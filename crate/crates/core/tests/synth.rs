use skilltrace::ingest::{differentiate, load_trajectory, save_trajectory, DiffOptions};
use skilltrace::primitives::{classify_samples, primitive_metrics, segment_profile, Primitive, PrimitiveLibrary};
use skilltrace::pwarx::{
    build_regression_dataset, identify_pwarx, mode_kinematic_summary, one_step_predict, phase_correspondence,
    IdentOptions, Phase, PwarxMode, StateSource,
};
use skilltrace::synth::{generate_peg_transfer, generate_pwa_sequence, PegLayout, PwaScenario, Rect, SkillParams};

fn one_block() -> PegLayout {
    let full = PegLayout::default();
    PegLayout { pick: vec![full.pick[0]], place: vec![full.place[0]], ..full }
}

fn quiet(mut p: SkillParams) -> SkillParams {
    p.noise_sigma = 0.0;
    p.subgoal_jitter = 0.0;
    p
}

#[test]
fn noiseless_run_visits_every_subgoal() {
    for params in [SkillParams::expert(), SkillParams::intermediate(), SkillParams::novice()] {
        let run = generate_peg_transfer(&quiet(params), &one_block(), 3).unwrap();
        assert_eq!(run.subgoals.len(), 4);
        for (goal, _) in &run.subgoals {
            let closest = run
                .trajectory
                .samples
                .iter()
                .map(|s| (s.x - goal[0]).hypot(s.y - goal[1]))
                .fold(f64::INFINITY, f64::min);
            assert!(closest < 1.0, "closest approach {closest} to {goal:?}");
        }
    }
}

#[test]
fn peg_transfer_is_deterministic_per_seed() {
    let a = generate_peg_transfer(&SkillParams::novice(), &PegLayout::default(), 11).unwrap();
    let b = generate_peg_transfer(&SkillParams::novice(), &PegLayout::default(), 11).unwrap();
    let c = generate_peg_transfer(&SkillParams::novice(), &PegLayout::default(), 12).unwrap();
    assert_eq!(a, b);
    assert_ne!(a.trajectory.samples, c.trajectory.samples);
}

#[test]
fn novice_paths_are_longer_and_slower() {
    for seed in 0..20 {
        let e = generate_peg_transfer(&SkillParams::expert(), &PegLayout::default(), seed).unwrap();
        let n = generate_peg_transfer(&SkillParams::novice(), &PegLayout::default(), seed).unwrap();
        assert!(n.trajectory.path_length() > e.trajectory.path_length());
        assert!(n.trajectory.duration() > e.trajectory.duration());
    }
}

#[test]
fn generated_trajectories_satisfy_ingest_invariants() {
    let run = generate_peg_transfer(&SkillParams::novice(), &PegLayout::default(), 5).unwrap();
    let t = &run.trajectory;
    assert_eq!(run.phases.len(), t.len());
    assert!(t.max_step_deviation() < 1e-9);
    assert!(t.samples.iter().all(|s| s.x.is_finite() && s.y.is_finite()));
    assert!(t.samples.windows(2).all(|w| w[1].t > w[0].t));
}

#[test]
fn noiseless_expert_transport_is_mostly_straight_uniform() {
    let lib = PrimitiveLibrary::default();
    for seed in 0..5 {
        let run = generate_peg_transfer(&quiet(SkillParams::expert()), &PegLayout::default(), seed).unwrap();
        let profile = differentiate(&run.trajectory, &DiffOptions::default()).unwrap();
        let labels = classify_samples(&profile, &lib);
        // Transport samples: moving samples of the Maneuvering phase.
        let transport: Vec<Primitive> = profile
            .interior()
            .zip(labels)
            .filter(|&(i, l)| run.phases[i] == Phase::Maneuvering && l != Primitive::Dwell)
            .map(|(_, l)| l)
            .collect();
        let share = transport.iter().filter(|&&l| l == Primitive::StraightUniform).count() as f64
            / transport.len() as f64;
        assert!(share >= 0.8, "seed {seed}: share {share}");
    }
}

#[test]
fn expert_spends_more_time_in_low_attention_primitives() {
    let lib = PrimitiveLibrary::default();
    let calm = |params: &SkillParams, seed| {
        let run = generate_peg_transfer(params, &PegLayout::default(), seed).unwrap();
        let profile = differentiate(&run.trajectory, &DiffOptions::default()).unwrap();
        let metrics = primitive_metrics(&segment_profile(&profile, &lib).unwrap());
        metrics[Primitive::Dwell.index()].time_fraction + metrics[Primitive::StraightUniform.index()].time_fraction
    };
    for seed in 0..10 {
        assert!(calm(&SkillParams::expert(), seed) > calm(&SkillParams::novice(), seed));
    }
}

#[test]
fn peg_transfer_modes_map_to_generating_phases() {
    let mut good = 0;
    for seed in 0..20 {
        let run = generate_peg_transfer(&SkillParams::expert(), &PegLayout::default(), seed).unwrap();
        let profile = differentiate(&run.trajectory, &DiffOptions::default()).unwrap();
        let (ms, pairs) = identify_pwarx(&profile, 3, &IdentOptions { seed, ..Default::default() }).unwrap();
        let mapped = phase_correspondence(&mode_kinematic_summary(&ms, &profile)).unwrap();
        let mut hits = 0;
        for (m, phase) in mapped.iter().enumerate() {
            let mut votes = [0usize; 3];
            for (p, _) in pairs.iter().zip(&ms.assignments).filter(|(_, &a)| a == m) {
                votes[run.phases[p.sample] as usize] += 1;
            }
            let majority = (0..3).max_by_key(|&i| (votes[i], std::cmp::Reverse(i))).unwrap();
            hits += usize::from(Phase::ALL[majority] == *phase);
        }
        good += usize::from(hits >= 2);
    }
    assert!(good >= 16, "{good} of 20 runs");
}

#[test]
fn single_mode_sequence_is_reproduced_by_prediction() {
    let mode = PwarxMode::from_coefficients([-0.5, 0.9, 1.0, -0.4, 0.92, -2.0], 1.0 / 30.0, 0);
    let scenario = PwaScenario {
        modes: vec![mode],
        partition: vec![(Rect { x_min: -1e3, x_max: 1e3, y_min: -1e3, y_max: 1e3 }, 0)],
        noise_sigma: 0.0,
        initial: [5.0, -3.0, 10.0, 4.0],
        horizon: 300,
        bounds: Rect { x_min: -1e3, x_max: 1e3, y_min: -1e3, y_max: 1e3 },
    };
    let (traj, labels) = generate_pwa_sequence(&scenario, 0).unwrap();
    assert!(labels.iter().all(|&m| m == 0));
    let mut state = scenario.initial;
    for s in &traj.samples {
        assert_eq!((s.x, s.y), (state[0], state[1]));
        state = one_step_predict(&mode, &state);
    }
}

#[test]
fn labels_change_exactly_at_band_crossings() {
    let scenario = PwaScenario::three_bands(2.0, 3000);
    let (traj, labels) = generate_pwa_sequence(&scenario, 4).unwrap();
    let band = |x: f64| if x < -14.0 { 0 } else if x < 14.0 { 1 } else { 2 };
    for (k, &m) in labels.iter().enumerate() {
        assert_eq!(m, band(traj.samples[k].x));
    }
    let changes = labels.windows(2).filter(|w| w[0] != w[1]).count();
    let crossings = traj.samples[..labels.len()].windows(2).filter(|w| band(w[0].x) != band(w[1].x)).count();
    assert_eq!(changes, crossings);
    assert!(changes > 10);
}

#[test]
fn distinct_seeds_give_distinct_noise() {
    let scenario = PwaScenario::three_bands(1.0, 200);
    let a = generate_pwa_sequence(&scenario, 1).unwrap();
    let b = generate_pwa_sequence(&scenario, 1).unwrap();
    let c = generate_pwa_sequence(&scenario, 2).unwrap();
    assert_eq!(a, b);
    assert_ne!(a.0.samples, c.0.samples);
}

#[test]
fn pwa_export_round_trips_bit_exact() {
    let (traj, _) = generate_pwa_sequence(&PwaScenario::three_bands(3.0, 9_999), 7).unwrap();
    assert_eq!(traj.len(), 10_000);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("pwa.csv");
    save_trajectory(&traj, &path).unwrap();
    let back = load_trajectory(&path).unwrap();
    assert_eq!(back, traj);
}

#[test]
fn pair_count_follows_interior() {
    let (traj, _) = generate_pwa_sequence(&PwaScenario::three_bands(0.0, 10_000), 0).unwrap();
    let profile = differentiate(&traj, &DiffOptions::default()).unwrap();
    let pairs = build_regression_dataset(&profile, StateSource::Raw).unwrap();
    // 10,001 samples; 5 excluded at each end; one more for the next state.
    assert_eq!(profile.interior_len(), 10_001 - 10);
    assert_eq!(pairs.len(), profile.interior_len() - 1);
}

#[test]
fn mode_speeds_recover_generator_regimes() {
    let scenario = PwaScenario::three_bands(1.0, 10_000);
    let (traj, truth) = generate_pwa_sequence(&scenario, 2).unwrap();
    let profile = differentiate(&traj, &DiffOptions::default()).unwrap();
    let (ms, pairs) = identify_pwarx(&profile, 3, &IdentOptions::default()).unwrap();
    let summaries = mode_kinematic_summary(&ms, &profile);
    // Generator regime: mean speed over the transitions each true mode drove.
    let mut regime = [(0.0, 0usize); 3];
    for p in &pairs {
        let r = &mut regime[truth[p.sample]];
        r.0 += profile.v[p.sample];
        r.1 += 1;
    }
    let mut regimes: Vec<f64> = regime.iter().map(|(s, n)| s / *n as f64).collect();
    let mut found: Vec<f64> = summaries.iter().map(|s| s.mean[0]).collect();
    regimes.sort_by(f64::total_cmp);
    found.sort_by(f64::total_cmp);
    for (f, r) in found.iter().zip(&regimes) {
        assert!((f - r).abs() / r < 0.05, "{f} vs {r}");
    }
}
