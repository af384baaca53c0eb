mod common;

use common::*;
use gcov_core::pipeline::{compare_starts, estimate_pipeline_traced, PipelineConfig};
use gcov_core::{
    classify_estimate, estimate_pipeline, objective, simulate_mixed, AnnealSchedule, Error, ErrorDistribution,
    ErrorSpec, OptimizerChoice, SimConfig, StartStrategy,
};
use nalgebra::DMatrix;

fn data(theta: &gcov_core::VarParams, t: usize, seed: u64) -> DMatrix<f64> {
    let spec = ErrorSpec {
        distribution: ErrorDistribution::StudentT { dof: 4.0 },
        n: 2,
        seed,
    };
    simulate_mixed(&SimConfig::new(t, theta.clone()), &spec).unwrap()
}

fn annealed(seed: u64) -> PipelineConfig {
    PipelineConfig {
        optimizer: OptimizerChoice::SaThenPolish(AnnealSchedule {
            seed,
            ..AnnealSchedule::default()
        }),
        ..PipelineConfig::new(1, StartStrategy::Annealed)
    }
}

#[test]
fn reported_values_match_recomputation() {
    let y = gcov_core::demean(&data(&case2(0.4, 2.0), 500, 1));
    for cfg in [PipelineConfig::new(1, StartStrategy::Ols), annealed(3)] {
        let res = estimate_pipeline(&y, &cfg).unwrap();
        let again = objective(&y, &res.theta_hat, &cfg.objective).unwrap();
        assert!((res.objective_value - again).abs() <= 1e-10, "{} vs {again}", res.objective_value);
        assert_eq!(res.order, classify_estimate(&res.theta_hat).unwrap());
        assert!(res.objective_value <= res.objective_start);
    }
}

#[test]
fn annealing_trace_is_returned() {
    let y = gcov_core::demean(&data(&case2(0.4, 2.0), 300, 2));
    let (res, trace) = estimate_pipeline_traced(&y, &annealed(4)).unwrap();
    let trace = trace.unwrap();
    assert_eq!(trace.len(), 60);
    assert!(res.sa_objective.unwrap() >= res.objective_value);
    assert_eq!(trace.last().unwrap().f_best, res.sa_objective.unwrap());
}

#[test]
fn demeaning_is_enforced() {
    let y = gcov_core::demean(&data(&diag(0.5, 2.0), 400, 5));
    let shifted = y.map(|v| v + 3.0);
    let cfg = PipelineConfig::new(1, StartStrategy::Ols);
    let a = estimate_pipeline(&y, &cfg).unwrap();
    let b = estimate_pipeline(&shifted, &cfg).unwrap();
    assert_eq!(a.order, b.order);
    assert!((a.theta_hat.lag(1) - b.theta_hat.lag(1)).amax() < 1e-6);
    assert!((a.objective_value - b.objective_value).abs() < 1e-9);
}

#[test]
fn counterpart_of_a_complex_ols_fit_is_rejected() {
    // OLS on this design estimates a near-repeated root, here a complex pair.
    let y = gcov_core::demean(&data(&diag(0.5, 2.0), 1000, 8));
    let ols = gcov_core::ols_var(&y, 1).unwrap();
    assert!(ols.eigenvalues().unwrap().iter().any(|z| z.im != 0.0));
    let err = estimate_pipeline(&y, &PipelineConfig::new(1, StartStrategy::CausalCounterpart)).unwrap_err();
    assert!(matches!(err, Error::Stage { stage: "start", .. }), "{err}");
}

#[test]
fn errors_carry_stage_labels() {
    let y = DMatrix::from_fn(12, 2, |t, c| (t * (c + 1)) as f64);
    let err = estimate_pipeline(&y, &PipelineConfig::new(1, StartStrategy::Ols)).unwrap_err();
    assert!(matches!(err, Error::Stage { stage: "objective", .. }), "{err}");
    let y = gcov_core::demean(&data(&diag(0.5, 2.0), 200, 6));
    let err = estimate_pipeline(&y, &PipelineConfig::new(1, StartStrategy::Annealed)).unwrap_err();
    assert!(matches!(err, Error::Unsupported(_)), "{err}");
}

#[test]
fn start_invariance_is_flagged() {
    // Near-unit design: the causal and mixed starts reach the same optimum.
    let y = gcov_core::demean(&data(&case2(0.85, 1.2), 1000, 7));
    let same = compare_starts(
        &y,
        &[
            PipelineConfig::new(1, StartStrategy::Ols),
            PipelineConfig::new(1, StartStrategy::CausalCounterpart),
        ],
    )
    .unwrap();
    assert!(same.start_invariant, "{:?}", same.results.iter().map(|r| r.theta_hat.to_vec()).collect::<Vec<_>>());

    // Far-from-unit design: counterpart starts stay in different basins.
    let y = gcov_core::demean(&data(&diag(0.5, 2.0), 1000, 8));
    let different = compare_starts(
        &y,
        &[
            PipelineConfig::new(1, StartStrategy::Explicit(diag(0.5, 0.5))),
            PipelineConfig::new(1, StartStrategy::Explicit(diag(2.0, 2.0))),
        ],
    )
    .unwrap();
    assert!(!different.start_invariant);
}

#[test]
fn annealing_does_not_lose_to_the_ols_start() {
    let theta = case2(0.4, 2.0);
    let seeds = 20;
    let mut wins = 0;
    for seed in 0..seeds {
        let y = gcov_core::demean(&data(&theta, 1000, 100 + seed));
        let ols = estimate_pipeline(&y, &PipelineConfig::new(1, StartStrategy::Ols)).unwrap();
        let sa = estimate_pipeline(&y, &annealed(seed)).unwrap();
        if sa.objective_value <= ols.objective_value + 1e-9 {
            wins += 1;
        }
    }
    println!("annealing at or below the OLS-start objective in {wins}/{seeds} datasets");
    assert!(wins as f64 >= 0.95 * seeds as f64, "{wins}/{seeds}");
}
