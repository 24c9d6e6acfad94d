use ddcc::bench::{
    assemble_problem, evaluate, reference_value, run_experiment, run_sequential, sample_batch, solve_reference,
    true_moments, write_trials_csv, BenchMethod, BettingConfig, ExperimentConfig, Instance, ReferenceKind, TestSet,
    ThresholdMode,
};
use ddcc_core::conic::{check, solve, Status, ToleranceSettings};
use nalgebra::DMatrix;

fn default_cfg() -> BettingConfig {
    BettingConfig::default()
}

#[test]
fn nested_wins_within_a_game() {
    let cfg = default_cfg();
    for row in sample_batch(&cfg, 1, 100_000) {
        if row[1] > 0.0 {
            assert!(row[0] > 0.0);
        }
        // wager 3 (ρ = 0.7) and wager 4 (ρ = 0.4) share u₂
        if row[3] > 0.0 {
            assert!(row[2] > 0.0);
        }
    }
}

#[test]
fn win_rates_and_cross_game_independence() {
    let cfg = default_cfg();
    let rows = sample_batch(&cfg, 2, 1_000_000);
    let n = rows.len() as f64;
    for k in 0..4 {
        let rate = rows.iter().filter(|r| r[k] > 0.0).count() as f64 / n;
        assert!((rate - cfg.rho[k]).abs() <= 0.002, "wager {k}: {rate}");
    }
    let (m1, m3) = (rows.iter().map(|r| r[0]).sum::<f64>() / n, rows.iter().map(|r| r[2]).sum::<f64>() / n);
    let cov: f64 = rows.iter().map(|r| (r[0] - m1) * (r[2] - m3)).sum::<f64>() / n;
    let s1 = (rows.iter().map(|r| (r[0] - m1).powi(2)).sum::<f64>() / n).sqrt();
    let s3 = (rows.iter().map(|r| (r[2] - m3).powi(2)).sum::<f64>() / n).sqrt();
    assert!((cov / (s1 * s3)).abs() <= 0.005);
}

#[test]
fn exact_moments_match_monte_carlo() {
    let cfg = default_cfg();
    let (mu, sigma) = true_moments(&cfg).unwrap();
    let (mut sum, mut sum2) = (vec![0.0; 4], DMatrix::<f64>::zeros(4, 4));
    let chunks = 100;
    let per = 100_000;
    for c in 0..chunks {
        for r in sample_batch(&cfg, 1000 + c, per) {
            for i in 0..4 {
                sum[i] += r[i];
                for j in 0..4 {
                    sum2[(i, j)] += r[i] * r[j];
                }
            }
        }
    }
    let n = (chunks * per as u64) as f64;
    for i in 0..4 {
        let mean = sum[i] / n;
        assert!((mean - mu[i]).abs() <= 3.0 * (sigma[(i, i)] / n).sqrt(), "mean {i}");
    }
    // within-game covariance of wagers 1 and 2: a₁a₂ takes three values, bound its spread
    let e12 = sum2[(0, 1)] / n;
    let cov12 = e12 - (sum[0] / n) * (sum[1] / n);
    let spread = (1.0f64 + cfg.abar[0]) * (1.0 + cfg.abar[1]);
    assert!((cov12 - sigma[(0, 1)]).abs() <= 3.0 * spread / n.sqrt());
}

#[test]
fn evaluation_of_simple_bets() {
    let cfg = default_cfg();
    let samples = sample_batch(&cfg, 3, 1_000_000);
    assert_eq!(evaluate(&[0.0; 4], &samples, &cfg), (0.0, 0.0));
    let (reward, violation) = evaluate(&[0.0, 0.0, 0.0, 1.0], &samples, &cfg);
    let sd4 = (3.1f64.powi(2) * 0.4 * 0.6).sqrt();
    assert!((reward - 0.24).abs() <= 3.0 * sd4 / 1e3);
    assert!((violation - 0.6).abs() <= 3.0 * (0.24f64).sqrt() / 1e3);
}

#[test]
fn oracle_feasibility_matches_displayed_form_on_grid() {
    let cfg = default_cfg();
    let inst = Instance::new(&cfg).unwrap();
    let blocks = inst.blocks(BenchMethod::Oracle, None).unwrap();
    let step = 0.05;
    let k = 20;
    for i in 0..=k {
        for j in 0..=k - i {
            for l in 0..=k - i - j {
                for m in 0..=k - i - j - l {
                    let x = [i, j, l, m].map(|v| v as f64 * step);
                    let a = blocks.scalar_value(&x).unwrap();
                    let b = reference_value(&cfg, ReferenceKind::Known, inst.mu.as_slice(), &inst.sigma, &x);
                    assert!((a - b).abs() <= 1e-9, "{x:?}");
                }
            }
        }
    }
}

#[test]
fn oracle_solution_is_feasible_and_safe_for_zero_bet() {
    let cfg = default_cfg();
    let inst = Instance::new(&cfg).unwrap();
    let blocks = inst.blocks(BenchMethod::Oracle, None).unwrap();
    let prog = assemble_problem(&blocks, inst.mu.as_slice()).unwrap();
    let sol = solve(&prog, &ToleranceSettings::default()).unwrap();
    assert_eq!(sol.status, Status::Optimal);
    assert!(check(&prog, &sol.x, 1e-7).unwrap().feasible);
    assert!(sol.x[..4].iter().all(|v| *v >= -1e-8));
    assert!(sol.x[..4].iter().sum::<f64>() <= 1.0 + 1e-8);
    assert!(blocks.scalar_value(&[0.0; 4]).unwrap() < 0.0);
}

#[test]
fn reference_grid_converges() {
    let cfg = default_cfg();
    let (mu, sigma) = true_moments(&cfg).unwrap();
    let coarse = solve_reference(&cfg, ReferenceKind::Known, mu.as_slice(), &sigma, 0.01).unwrap();
    let fine = solve_reference(&cfg, ReferenceKind::Known, mu.as_slice(), &sigma, 0.005).unwrap();
    assert!(coarse.feasible && fine.feasible);
    assert!(fine.objective >= coarse.objective);
    assert!(fine.objective - coarse.objective < 5e-3);
}

#[test]
fn literal_threshold_with_tiny_alpha_has_no_feasible_grid_point() {
    let cfg = BettingConfig { alpha: 1e-4, mode: ThresholdMode::LiteralPaper, ..default_cfg() };
    let (mu, sigma) = true_moments(&cfg).unwrap();
    let r = solve_reference(&cfg, ReferenceKind::Known, mu.as_slice(), &sigma, 0.05).unwrap();
    assert!(!r.feasible);
    assert_eq!(r.x, vec![0.0; 4]);
    assert!(solve_reference(&cfg, ReferenceKind::Known, mu.as_slice(), &sigma, 0.3).is_err());
}

fn small_experiment(seed: u64) -> ExperimentConfig {
    ExperimentConfig {
        methods: vec![BenchMethod::Plugin, BenchMethod::Cor1, BenchMethod::Oracle],
        n_grid: vec![30, 200],
        trials_per_n: 5,
        test_size: 20_000,
        master_seed: seed,
    }
}

#[test]
fn experiments_are_reproducible() {
    let cfg = default_cfg();
    let csv = |seed| {
        let mut buf = Vec::new();
        write_trials_csv(&mut buf, &run_experiment(&cfg, &small_experiment(seed)).unwrap().trials, false).unwrap();
        buf
    };
    assert_eq!(csv(9), csv(9));
    assert_ne!(csv(9), csv(10));
}

#[test]
fn oracle_decision_ignores_training_draws() {
    let exp = run_experiment(&default_cfg(), &small_experiment(4)).unwrap();
    let oracle: Vec<_> = exp.trials.iter().filter(|t| t.method == "oracle").collect();
    assert!(oracle.windows(2).all(|w| w[0].x == w[1].x && w[0].reward == w[1].reward));
    for t in &exp.trials {
        assert!((0.0..=1.0).contains(&t.violation));
        if !t.flagged() {
            assert!(t.x.iter().all(|v| *v >= -1e-8) && t.x.iter().sum::<f64>() <= 1.0 + 1e-8);
        }
    }
}

#[test]
fn too_few_samples_fall_back_to_zero_bet() {
    let exp = ExperimentConfig { methods: vec![BenchMethod::Cor1], n_grid: vec![5], ..small_experiment(1) };
    let result = run_experiment(&default_cfg(), &exp).unwrap();
    for t in &result.trials {
        assert!(t.flagged());
        assert_eq!(t.x, vec![0.0; 4]);
        assert_eq!((t.reward, t.violation), (0.0, 0.0));
    }
    assert_eq!(result.aggregates[0].feasible_fraction, 0.0);
}

#[test]
fn sequential_state_grows_by_batch() {
    let steps = run_sequential(&default_cfg(), BenchMethod::Cor1, 6, 40, 3, 1).unwrap();
    assert_eq!(steps.len(), 6);
    for s in &steps {
        assert_eq!(s.count, 40 * s.step as u64);
        assert!(s.time_ms >= 0.0);
    }
    assert!(run_sequential(&default_cfg(), BenchMethod::Cor1, 1, 40, 3, 1).is_err());
    assert!(run_sequential(&default_cfg(), BenchMethod::Oracle, 5, 40, 3, 1).is_err());
}

#[test]
fn test_set_size_is_kept() {
    let cfg = default_cfg();
    let t = TestSet::new(&sample_batch(&cfg, 5, 1234));
    assert_eq!(t.size(), 1234);
}
