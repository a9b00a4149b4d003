//! Solver invariants on small problems.

use reparam_denoise::noise::{self, NoiseModel, Seed};
use reparam_denoise::optim::{denoise, solve, solve_baseline, tv_norm, SolverConfig, Termination};
use reparam_denoise::{scale_to, shepp_logan, DataFit, Image, ReparamFamily, ScaleMode};

fn poisson_problem(side: usize, mean: f64) -> (Image, Image) {
    let truth = scale_to(&shepp_logan(side, side).unwrap(), ScaleMode::Mean(mean)).unwrap();
    let y = noise::sample(NoiseModel::Poisson, &truth, Seed(7)).unwrap();
    (truth, y)
}

fn config(tau: f64) -> SolverConfig {
    SolverConfig {
        tau,
        ..SolverConfig::default()
    }
}

fn assert_nonmonotone_descent(trace: &[f64], memory: usize) {
    for t in 1..trace.len() {
        let window = &trace[t.saturating_sub(memory)..t];
        let reference = window.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        assert!(
            trace[t] < reference,
            "step {t}: {} not below window max {reference}",
            trace[t]
        );
    }
    let maxima: Vec<f64> = trace
        .windows(memory)
        .map(|w| w.iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .collect();
    assert!(maxima.windows(2).all(|w| w[1] <= w[0]));
}

#[test]
fn accepted_steps_decrease_the_window_maximum() {
    let (_, y) = poisson_problem(32, 10.0);
    let family = ReparamFamily::PoissonLogExpK(4.0);
    let fit = DataFit::for_model(NoiseModel::Poisson, family, y.clone()).unwrap();
    let cfg = config(0.5);
    let r = denoise(&fit, &cfg, None).unwrap();
    assert!(r.iterations > 5);
    assert_nonmonotone_descent(&r.objective_trace, cfg.memory);

    let truth = scale_to(&shepp_logan(32, 32).unwrap(), ScaleMode::Mean(3.0)).unwrap();
    let y = noise::sample(NoiseModel::Speckle { looks: 3 }, &truth, Seed(8)).unwrap();
    let fit =
        DataFit::for_model(NoiseModel::Speckle { looks: 3 }, ReparamFamily::Identity, y).unwrap();
    let r = denoise(&fit, &cfg, None).unwrap();
    assert_nonmonotone_descent(&r.objective_trace, cfg.memory);
}

#[test]
fn minimizer_is_a_fixed_point() {
    let truth = Image::from_fn(8, 8, |i, j| 1.0 + (i * 8 + j) as f64 * 0.25).unwrap();
    let family = ReparamFamily::PoissonLogExpK(2.0);
    let fit = DataFit::for_model(NoiseModel::Poisson, family, truth.clone()).unwrap();
    let theta0 = family.inverse(&truth).unwrap();
    let cfg = config(0.0);
    let r = solve(&fit, family, &cfg, &theta0).unwrap();
    assert!(r.iterations <= 2, "{} iterations", r.iterations);
    assert!(r.converged);
    let diff = r
        .theta_hat
        .data()
        .iter()
        .zip(theta0.data())
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt();
    assert!(diff <= cfg.rel_tol * theta0.norm().max(1.0));

    let base = DataFit::poisson_baseline(truth.clone()).unwrap();
    let r = solve_baseline(&base, &cfg, &truth).unwrap();
    assert!(r.iterations <= 2);
    assert_eq!(r.x_hat, truth);
}

#[test]
fn unregularized_poisson_baseline_recovers_observations() {
    let y = Image::from_fn(10, 10, |i, j| 1.0 + ((3 * i + 7 * j) % 11) as f64).unwrap();
    let fit = DataFit::poisson_baseline(y.clone()).unwrap();
    let cfg = SolverConfig {
        rel_tol: 1e-12,
        max_outer_iters: 2000,
        ..config(0.0)
    };
    let start = Image::filled(10, 10, y.mean()).unwrap();
    let r = solve_baseline(&fit, &cfg, &start).unwrap();
    let err = r
        .x_hat
        .data()
        .iter()
        .zip(y.data())
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt();
    assert!(err <= 1e-6 * y.norm(), "error {err}");
}

#[test]
fn identity_family_matches_baseline_solver() {
    let (_, y) = poisson_problem(16, 10.0);
    let y = y.map(|v| v + 1.0).unwrap();
    let fit = DataFit::poisson_baseline(y.clone()).unwrap();
    let cfg = SolverConfig {
        rel_tol: 1e-10,
        max_outer_iters: 5000,
        inner_iters: 200,
        ..config(0.3)
    };
    let a = solve(&fit, ReparamFamily::Identity, &cfg, &y).unwrap();
    let b = solve_baseline(&fit, &cfg, &y).unwrap();
    let (fa, fb) = (
        *a.objective_trace.last().unwrap(),
        *b.objective_trace.last().unwrap(),
    );
    assert!((fa - fb).abs() <= 1e-6 * fa.abs().max(1.0), "{fa} vs {fb}");
}

#[test]
fn huge_tau_flattens_the_estimate() {
    let (_, y) = poisson_problem(24, 10.0);
    let family = ReparamFamily::PoissonLogExpK(4.0);
    let fit = DataFit::for_model(NoiseModel::Poisson, family, y.clone()).unwrap();
    let theta0 = family.initial_theta(&y).unwrap();
    let r = solve(&fit, family, &config(1e6), &theta0).unwrap();
    assert!(tv_norm(&r.theta_hat) < 1e-3 * tv_norm(&theta0));
}

#[test]
fn denoising_beats_the_observation() {
    let (truth, y) = poisson_problem(48, 5.0);
    let fit = DataFit::for_model(
        NoiseModel::Poisson,
        ReparamFamily::PoissonLogExpK(2.0),
        y.clone(),
    )
    .unwrap();
    let before = reparam_denoise::rmse_relative(&y, &truth).unwrap();
    let after = [0.05, 0.1, 0.2, 0.5]
        .iter()
        .map(|&tau| {
            let r = denoise(&fit, &config(tau), None).unwrap();
            reparam_denoise::rmse_relative(&r.x_hat, &truth).unwrap()
        })
        .fold(f64::INFINITY, f64::min);
    assert!(after < before, "{after} vs {before}");
}

#[test]
fn solves_are_bitwise_reproducible() {
    let (_, y) = poisson_problem(32, 10.0);
    let fit =
        DataFit::for_model(NoiseModel::Poisson, ReparamFamily::PoissonLogExpK(4.0), y).unwrap();
    let a = denoise(&fit, &config(0.7), None).unwrap();
    let b = denoise(&fit, &config(0.7), None).unwrap();
    assert_eq!(a.x_hat, b.x_hat);
    assert_eq!(a.objective_trace, b.objective_trace);
}

#[test]
fn iteration_budget_is_reported() {
    let (_, y) = poisson_problem(32, 10.0);
    let fit =
        DataFit::for_model(NoiseModel::Poisson, ReparamFamily::PoissonLogExpK(4.0), y).unwrap();
    let cfg = SolverConfig {
        max_outer_iters: 3,
        ..config(0.5)
    };
    let r = denoise(&fit, &cfg, None).unwrap();
    assert_eq!(r.iterations, 3);
    assert_eq!(r.termination, Termination::MaxIterations);
    assert!(!r.converged);
}
