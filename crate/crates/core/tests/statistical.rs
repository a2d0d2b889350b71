//! Simulation oracles that need many replicates.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};

use survsel::cox::cox_mle;
use survsel::data::{ModelId, SurvivalDataset};
use survsel::posterior::{map_estimate, score_model, NegLogPosterior};
use survsel::priors::PriorSpec;
use survsel::search::{conditional_utility, neighborhoods};
use survsel::simgen::{gen_design, simulate, Correlation, Scenario};

fn exp_dataset(seed: u64, n: usize, beta: &[f64], censor_scale: f64) -> SurvivalDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = beta.len();
    let x = DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal));
    let mut times = Vec::with_capacity(n);
    let mut status = Vec::with_capacity(n);
    for i in 0..n {
        let lp: f64 = (0..p).map(|j| x[(i, j)] * beta[j]).sum();
        let t = rng.sample::<f64, _>(Exp1) / lp.exp();
        let c = rng.sample::<f64, _>(Exp1) * censor_scale;
        times.push(t.min(c));
        status.push(t <= c);
    }
    let names = (0..p).map(|j| format!("v{j}")).collect();
    SurvivalDataset::new(times, status, x, names, vec![]).unwrap()
}

#[test]
fn noise_covariate_is_penalised_in_nested_comparison() {
    let prior = PriorSpec::pimom(1.0, 0.25);
    let reps = 50;
    let smaller_wins = (0..reps)
        .filter(|&rep| {
            let data = exp_dataset(100 + rep, 150, &[0.8, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0], 2.0);
            let small = score_model(&data, &ModelId::new([0]), &prior).unwrap();
            let large = score_model(&data, &ModelId::new([0, 1 + (rep as usize % 9)]), &prior).unwrap();
            small.log_score > large.log_score
        })
        .count();
    assert!(smaller_wins * 100 >= 80 * reps as usize, "smaller model preferred in {smaller_wins}/{reps}");
}

#[test]
fn map_is_confirmed_by_grid_search() {
    let prior = PriorSpec::pimom(1.0, 0.25);
    for seed in 0..5 {
        let data = exp_dataset(300 + seed, 300, &[1.0], 3.0);
        let xk = data.submatrix(&ModelId::new([0])).unwrap();
        let fit = map_estimate(&xk, data.status(), &prior, None).unwrap();
        assert!(fit.converged && fit.grad_norm < 1e-5);
        let obj = NegLogPosterior::new(&xk, data.status(), &prior);
        let mut best = (f64::INFINITY, 0.0);
        let mut b = -3.0;
        while b <= 3.0 {
            if b != 0.0 {
                let v = obj.value(&[b]).unwrap();
                if v < best.0 {
                    best = (v, b);
                }
            }
            b += 1e-3;
        }
        let map = fit.beta[0];
        assert!((best.1 - map).abs() <= 1e-3, "grid {} vs map {map}", best.1);
        // the prior pulls a strong effect slightly but keeps its sign
        let mle = cox_mle(&xk, data.status(), None).unwrap().beta[0];
        assert!(map.signum() == mle.signum());
    }
}

#[test]
fn cox_mle_recovers_sign_pattern() {
    let beta = [1.2, -0.9, 0.7, -1.5];
    for seed in 0..5 {
        let data = exp_dataset(400 + seed, 400, &beta, 3.0);
        let fit = cox_mle(data.design(), data.status(), None).unwrap();
        assert!(fit.converged);
        for (b, t) in fit.beta.iter().zip(&beta) {
            assert_eq!(b.signum(), t.signum());
        }
    }
}

#[test]
fn null_mle_shrinks_with_n() {
    let spread = |n: usize| {
        (0..20)
            .map(|seed| {
                let data = exp_dataset(500 + seed, n, &[0.0], 2.0);
                cox_mle(data.design(), data.status(), None).unwrap().beta[0].abs()
            })
            .sum::<f64>()
    };
    assert!(spread(800) < spread(100));
}

#[test]
fn omitted_strong_covariate_has_top_utility() {
    let scenario = Scenario::case(2).unwrap();
    let strongest = scenario
        .coefficients
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
        .unwrap()
        .0;
    let reps = 20;
    let mut top = 0;
    for rep in 0..reps {
        let sim = simulate(&scenario, 300, 100, 77, rep).unwrap();
        let current = ModelId::new((0..scenario.coefficients.len()).filter(|&j| j != strongest));
        let xk = sim.dataset.submatrix(&current).unwrap();
        let beta: Vec<f64> = cox_mle(&xk, sim.dataset.status(), None).unwrap().beta.iter().copied().collect();
        let hood = neighborhoods(&sim.dataset, &current, &beta, 1).unwrap();
        if hood.plus[0] == current.with(strongest) {
            top += 1;
        }
        let u = conditional_utility(&sim.dataset, &current, &beta, strongest).unwrap();
        assert!(u.converged);
    }
    assert!(top * 10 >= 9 * reps, "top-1 in {top}/{reps}");
}

#[test]
fn large_design_has_unit_variances() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for corr in [Correlation::Equicorrelated(0.5), Correlation::Case1] {
        let x = gen_design(10_000, 8, corr, &mut rng).unwrap();
        for j in 0..8 {
            let col = x.column(j);
            let mean = col.mean();
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 9_999.0;
            assert!((var - 1.0).abs() < 0.05, "column {j} variance {var}");
        }
    }
}
