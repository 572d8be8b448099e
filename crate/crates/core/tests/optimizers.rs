//! Optimizer traces: reductions, query accounting and convergence.

use zoh_core::{
    zo_hgd, zo_scd, zo_sgd, AlphaPolicy, CgeConfig, CoordBudget, CoordinateSampling, HgdConfig,
    Objective, OutputRule, Quadratic, RgeConfig, RunTrace, StepSchedule,
};

fn quadratic() -> Quadratic {
    Quadratic::new((0..10).map(|i| 0.2 + 0.1 * i as f64).collect(), 0.3).unwrap()
}

/// Everything except wall time.
fn same_trace(a: &RunTrace, b: &RunTrace) -> bool {
    let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    a.records == b.records
        && bits(&a.output) == bits(&b.output)
        && bits(&a.final_iterate) == bits(&b.final_iterate)
        && a.output_index == b.output_index
        && a.totals == b.totals
}

#[test]
fn hgd_without_coordinates_is_sgd() {
    let q = quadratic();
    for seed in 0..5 {
        let mut cfg = HgdConfig::new(
            200,
            StepSchedule::Constant(0.05),
            RgeConfig::new(3, 1e-3, 2).unwrap(),
            CgeConfig::uniform(10, 1e-3, 2).unwrap(),
            0,
            seed,
        );
        cfg.alpha = AlphaPolicy::Constant(1.0);
        cfg.cge = None;
        let a = zo_hgd(&q, &[1.0; 10], &cfg).unwrap();
        let b = zo_sgd(&q, &[1.0; 10], &cfg).unwrap();
        assert!(same_trace(&a, &b), "seed {seed}");
    }
}

#[test]
fn hgd_without_directions_is_scd() {
    let q = quadratic();
    for seed in 0..5 {
        let cfg = HgdConfig {
            rge: None,
            sampling: CoordinateSampling::Uniform,
            alpha: AlphaPolicy::Constant(0.0),
            ..HgdConfig::new(
                200,
                StepSchedule::Constant(0.05),
                RgeConfig::new(1, 1e-3, 1).unwrap(),
                CgeConfig::uniform(10, 1e-3, 2).unwrap(),
                3,
                seed,
            )
        };
        let a = zo_hgd(&q, &[1.0; 10], &cfg).unwrap();
        let b = zo_scd(&q, &[1.0; 10], &cfg).unwrap();
        assert!(same_trace(&a, &b), "seed {seed}");
    }
}

#[test]
fn query_counts_follow_the_formulas() {
    let q = quadratic();
    for (n_r, b_r, n_c, b_c) in [(1, 1, 1, 1), (3, 2, 4, 3), (5, 4, 10, 1), (2, 3, 0, 2)] {
        let mut cfg = HgdConfig::new(
            50,
            StepSchedule::Constant(0.01),
            RgeConfig::new(n_r, 1e-3, b_r).unwrap(),
            CgeConfig::uniform(10, 1e-3, b_c).unwrap(),
            n_c,
            7,
        );
        if n_c == 0 {
            cfg.alpha = AlphaPolicy::Constant(1.0);
        }
        let trace = zo_hgd(&q, &[1.0; 10], &cfg).unwrap();
        let (mut prev_actual, mut prev_nominal) = (0, 0);
        for r in &trace.records {
            let nominal = (2 * n_r * b_r + 2 * n_c * b_c) as u64;
            assert_eq!(r.nominal_fqc - prev_nominal, nominal);
            // one shared base point per RGE sample, two evaluations per selected coordinate and CGE sample
            let actual = (b_r * (n_r + 1) + 2 * r.realized_i_size * b_c) as u64;
            assert_eq!(r.actual_queries - prev_actual, actual);
            prev_actual = r.actual_queries;
            prev_nominal = r.nominal_fqc;
        }
        assert_eq!(trace.totals.nominal_fqc, prev_nominal);
        assert_eq!(trace.totals.actual_evaluations, prev_actual);
    }
}

#[test]
fn coordinate_schedule_changes_the_budget_per_step() {
    let q = quadratic();
    let schedule: Vec<usize> = (0..20).map(|t| 1 + t % 4).collect();
    let cfg = HgdConfig {
        coord_budget: CoordBudget::Schedule(schedule.clone()),
        ..HgdConfig::new(
            20,
            StepSchedule::Constant(0.01),
            RgeConfig::new(2, 1e-3, 1).unwrap(),
            CgeConfig::uniform(10, 1e-3, 1).unwrap(),
            0,
            3,
        )
    };
    let trace = zo_hgd(&q, &[1.0; 10], &cfg).unwrap();
    let mut prev = 0;
    for (r, n_c) in trace.records.iter().zip(&schedule) {
        assert_eq!(r.nominal_fqc - prev, (4 + 2 * n_c) as u64);
        prev = r.nominal_fqc;
    }
}

#[test]
fn strongly_convex_schedule_converges() {
    let q = Quadratic::new((0..8).map(|i| 0.5 + 0.5 * i as f64 / 7.0).collect(), 0.5).unwrap();
    let f = q.exact().unwrap();
    let run = |t: usize, seed: u64| {
        let cfg = HgdConfig {
            output: OutputRule::WeightedAverage { a: 16.0 },
            min_probability: 0.05,
            ..HgdConfig::new(
                t,
                StepSchedule::ScDecay {
                    a: 16.0,
                    sigma_bar: 1.0,
                },
                RgeConfig::new(4, 1e-3, 1).unwrap(),
                CgeConfig::uniform(8, 1e-3, 1).unwrap(),
                4,
                seed,
            )
        };
        f.value(&zo_hgd(&q, &[1.0; 8], &cfg).unwrap().output)
    };
    let start = f.value(&[1.0; 8]);
    let mean = |t| (0..5).map(|s| run(t, s)).sum::<f64>() / 5.0;
    let (short, long) = (mean(200), mean(1600));
    assert!(short < 0.05 * start, "{short} vs start {start}");
    assert!(long < 0.5 * short, "T=1600 {long} vs T=200 {short}");
}

#[test]
fn noiseless_runs_drive_the_gradient_down() {
    let q = Quadratic::isotropic(12, 1.0, 0.0).unwrap();
    let cfg = HgdConfig {
        min_probability: 0.05,
        ..HgdConfig::new(
            2000,
            StepSchedule::NonconvexBound,
            RgeConfig::new(6, 1e-4, 1).unwrap(),
            CgeConfig::uniform(12, 1e-4, 1).unwrap(),
            6,
            1,
        )
    };
    let trace = zo_hgd(&q, &[1.0; 12], &cfg).unwrap();
    let first = trace.records[0].grad_norm_sq.unwrap();
    assert!(trace.min_grad_norm_sq().unwrap() < 1e-3 * first);
    assert_eq!(q.dimension(), trace.final_iterate.len());
}
