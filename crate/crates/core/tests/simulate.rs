use dpm_core::datagen::{Bounds, Dataset};
use dpm_core::engine::{CountNoise, DpmConfig};
use dpm_core::halting::ThresholdMode;
use dpm_core::simulate::{self, BoundKind, DatasetSpec, SweepGrid, Target, TrialPlan};
use dpm_core::splitting::ScoreParams;
use rand::Rng;

fn config() -> DpmConfig {
    DpmConfig {
        score: ScoreParams {
            alpha: 1.0,
            t: 0.5,
            q: 0.25,
            beta: 0.2,
        },
        tau_e: 4,
        tau_s: 3,
        eps_count: 1.0,
        eps_select: 1.0,
        eps_avg: 1.0,
        delta: 1.0,
        clip_bound: 10.0,
        sensitivity: Default::default(),
        convention: Default::default(),
        count_noise: CountNoise::NoiseFree,
    }
}

fn plan(target: Target) -> TrialPlan {
    TrialPlan {
        dataset: DatasetSpec::Uniform {
            dim: 2,
            n: 300,
            low: 0.0,
            high: 1.0,
            seed: 11,
        },
        config: DpmConfig {
            tau_e: 40,
            delta: 0.1,
            count_noise: CountNoise::Laplace,
            ..config()
        },
        trials: 2000,
        master_seed: 5,
        target,
    }
}

#[test]
fn exact_enumeration_matches_simulation() {
    let mut rng = dpm_core::rng::rng_from_seed(3);
    for (k, levels) in [1u32, 2, 2].into_iter().enumerate() {
        let pts: Vec<Vec<f64>> = (0..18 + 4 * k).map(|_| vec![rng.random::<f64>()]).collect();
        let d = Dataset::new(pts, vec![Bounds::new(0.0, 1.0).unwrap()]).unwrap();
        let exact = simulate::exact_halt_probability(&d, &config(), levels).unwrap();
        let mc = simulate::monte_carlo_halt(&d, &config(), levels, 20_000, 40 + k as u64).unwrap();
        let sd = (exact.probability * (1.0 - exact.probability) / 20_000.0).sqrt();
        assert!(
            (mc.frequency - exact.probability).abs() <= 5.0 * sd + 1e-3,
            "instance {k}: exact {} vs {}",
            exact.probability,
            mc.frequency
        );
        assert!(exact.nodes >= 1);
    }
}

#[test]
fn monte_carlo_is_seeded() {
    let coin = |rng: &mut dpm_core::rng::DpmRng| Ok(rng.random::<f64>() < 0.3);
    let a = simulate::monte_carlo(5000, 1, coin).unwrap();
    let b = simulate::monte_carlo(5000, 1, coin).unwrap();
    let c = simulate::monte_carlo(5000, 2, coin).unwrap();
    assert_eq!(a, b);
    assert_ne!(a.successes, c.successes);
    assert!(a.ci99.low <= a.ci95.low && a.ci95.high <= a.ci99.high);
    assert!(a.ci99.contains(0.3));
    assert_ne!(simulate::trial_seed(1, 0), simulate::trial_seed(1, 1));
    assert_eq!(simulate::trial_seed(9, 4), simulate::trial_seed(9, 4));
}

#[test]
fn noisy_count_tail_matches_analytic_value() {
    let r = simulate::run_plan(&plan(Target::NoisyCountTail)).unwrap();
    assert_eq!(r.kind, BoundKind::Exact);
    assert!(r.holds, "{r:?}");
    assert!(r.alternative.is_some());
}

#[test]
fn root_targets_report_lower_bounds() {
    for target in [Target::ImmediateHalt, Target::NotHalt, Target::CentralSplit { t_prime: 0.3 }] {
        let r = simulate::run_plan(&plan(target)).unwrap();
        assert_eq!(r.kind, BoundKind::Lower);
        assert!(r.bound <= r.ci99.high || r.loose, "{r:?}");
        assert_eq!(r.trials, 2000);
        assert_eq!(r.master_seed, 5);
    }
}

#[test]
fn halt_within_uses_engine_runs() {
    let mut p = plan(Target::HaltWithin {
        levels: 1,
        mode: ThresholdMode::General,
        t_prime: None,
    });
    p.trials = 300;
    let r = simulate::run_plan(&p).unwrap();
    assert!((0.0..=1.0).contains(&r.bound));
    assert!(r.holds);
}

#[test]
fn plan_json_round_trip() {
    let p = plan(Target::HaltWithin {
        levels: 2,
        mode: ThresholdMode::Tprime,
        t_prime: Some(0.3),
    });
    let json = serde_json::to_string_pretty(&p).unwrap();
    let back: TrialPlan = serde_json::from_str(&json).unwrap();
    assert_eq!(back, p);

    let mut v: serde_json::Value = serde_json::from_str(&json).unwrap();
    v.as_object_mut().unwrap().remove("trials");
    let defaulted: TrialPlan = serde_json::from_value(v).unwrap();
    assert_eq!(defaulted.trials, 10_000);
}

#[test]
fn sweep_follows_grid_order_and_writes_csv() {
    let mut p = plan(Target::ImmediateHalt);
    p.trials = 200;
    let grid = SweepGrid {
        alpha: Some(vec![0.5, 2.0]),
        eps_select: Some(vec![0.5, 1.0, 4.0]),
        ..Default::default()
    };
    let reports = simulate::sweep(&grid, &p).unwrap();
    assert_eq!(reports.len(), 6);
    assert_eq!(reports[0].config.score.alpha, 0.5);
    assert_eq!(reports[5].config.score.alpha, 2.0);
    assert_eq!(reports[1].config.eps_select, 1.0);

    let mut buf = Vec::new();
    simulate::write_reports_csv(&reports, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().count(), 7);
    assert!(simulate::sweep(&SweepGrid::default(), &p).unwrap().is_empty());
}

#[test]
fn invalid_plans_are_rejected() {
    let mut p = plan(Target::ImmediateHalt);
    p.trials = 0;
    assert!(simulate::run_plan(&p).is_err());
    let mut p = plan(Target::ImmediateHalt);
    p.config.score.q = 0.6;
    assert!(simulate::run_plan(&p).is_err());
}
