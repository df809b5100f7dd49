use nalgebra::{DMatrix, DVector};
use nftport_core::model::{MomentEstimate, PriceSeries, TokenRef};
use nftport_core::optimize::{
    estimate_moments, grid_sharpe_oracle, max_sharpe_weights, resample_to_grid, OptimizerConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn assets(n: usize) -> Vec<TokenRef> {
    (0..n).map(|i| TokenRef::new("S", format!("T{i}"))).collect()
}

fn random_psd(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-0.2..0.2));
    &a * a.transpose() + DMatrix::identity(n, n) * 1e-4
}

fn sharpe(w: &[f64], mu: &DVector<f64>, cov: &DMatrix<f64>) -> f64 {
    let w = DVector::from_column_slice(w);
    w.dot(mu) / w.dot(&(cov * &w)).sqrt()
}

#[test]
fn diagonal_instances_match_closed_form() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..100 {
        let n = rng.random_range(2..=8);
        let mu = DVector::from_fn(n, |_, _| rng.random_range(0.001..0.3));
        let var = DVector::from_fn(n, |_, _| rng.random_range(0.0005..0.2));
        let raw: Vec<f64> = (0..n).map(|i| mu[i] / var[i]).collect();
        let total: f64 = raw.iter().sum();
        let m = MomentEstimate::from_moments(assets(n), mu, DMatrix::from_diagonal(&var));
        let got = max_sharpe_weights(&m, &OptimizerConfig::default()).unwrap();
        for (g, r) in got.weights.iter().zip(&raw) {
            assert!((g - r / total).abs() < 1e-6, "{g} vs {}", r / total);
        }
    }
}

#[test]
fn dense_instances_with_positive_tangency_match_closed_form() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut checked = 0;
    while checked < 50 {
        let n = rng.random_range(2..=5);
        let cov = random_psd(&mut rng, n);
        let mu = DVector::from_fn(n, |_, _| rng.random_range(0.01..0.2));
        let raw = cov.clone().cholesky().unwrap().solve(&mu);
        if raw.iter().any(|&x| x < 0.0) {
            continue;
        }
        let expected = &raw / raw.sum();
        let m = MomentEstimate::from_moments(assets(n), mu, cov);
        let got = max_sharpe_weights(&m, &OptimizerConfig::default()).unwrap();
        for (g, e) in got.weights.iter().zip(expected.iter()) {
            assert!((g - e).abs() < 1e-6);
        }
        checked += 1;
    }
}

#[test]
fn never_worse_than_grid_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..30 {
        let cov = random_psd(&mut rng, 3);
        let mu = DVector::from_fn(3, |_, _| rng.random_range(-0.05..0.2));
        if mu.iter().all(|&m| m <= 0.0) {
            continue;
        }
        let m = MomentEstimate::from_moments(assets(3), mu.clone(), cov.clone());
        let got = max_sharpe_weights(&m, &OptimizerConfig::default()).unwrap();
        let (_, grid_best) = grid_sharpe_oracle(&m, 0.01, 0.0).unwrap();
        assert!(got.sharpe >= grid_best - 1e-6, "{} < {}", got.sharpe, grid_best);
        assert!((sharpe(&got.weights, &mu, &cov) - got.sharpe).abs() < 1e-12);
    }
}

#[test]
fn argmax_is_scale_invariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..40 {
        let n = rng.random_range(2..=6);
        let cov = random_psd(&mut rng, n);
        let mu = DVector::from_fn(n, |_, _| rng.random_range(-0.1..0.2));
        if mu.iter().all(|&m| m <= 0.0) {
            continue;
        }
        let cfg = OptimizerConfig::default();
        let base = max_sharpe_weights(&MomentEstimate::from_moments(assets(n), mu.clone(), cov.clone()), &cfg).unwrap();
        for c in [1e-3, 0.5, 7.0, 1e4] {
            let scaled = max_sharpe_weights(&MomentEstimate::from_moments(assets(n), &mu * c, cov.clone()), &cfg).unwrap();
            for (a, b) in base.weights.iter().zip(&scaled.weights) {
                assert!((a - b).abs() < 1e-8);
            }
        }
    }
}

#[test]
fn risk_free_rate_shifts_excess() {
    let mu = DVector::from_column_slice(&[0.12, 0.22]);
    let cov = DMatrix::from_diagonal(&DVector::from_column_slice(&[0.01, 0.04]));
    let cfg = OptimizerConfig {
        risk_free_rate: 0.02,
        ..Default::default()
    };
    let got = max_sharpe_weights(&MomentEstimate::from_moments(assets(2), mu, cov), &cfg).unwrap();
    // Σ⁻¹(μ - R_f) = (10, 5)
    assert!((got.weights[0] - 2.0 / 3.0).abs() < 1e-9);
    assert_eq!(got.risk_free_rate, 0.02);
}

fn textbook_covariance(columns: &[Vec<f64>]) -> DMatrix<f64> {
    let n = columns.len();
    let len = columns[0].len() as f64;
    let means: Vec<f64> = columns.iter().map(|c| c.iter().sum::<f64>() / len).collect();
    DMatrix::from_fn(n, n, |i, j| {
        columns[i]
            .iter()
            .zip(&columns[j])
            .map(|(a, b)| (a - means[i]) * (b - means[j]))
            .sum::<f64>()
            / (len - 1.0)
    })
}

#[test]
fn covariance_matches_two_pass_estimate() {
    let day = 86_400;
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let walk = |rng: &mut ChaCha8Rng, name: &str| {
        let mut t = 0;
        let mut p = 10.0;
        let (mut ts, mut ps) = (vec![t], vec![p]);
        for _ in 0..80 {
            t += rng.random_range(3_600..3 * day);
            p *= (rng.random_range(-0.1f64..0.1)).exp();
            ts.push(t);
            ps.push(p);
        }
        PriceSeries::new(TokenRef::new("S", name), ts, ps)
    };
    let a = walk(&mut rng, "A");
    let b = walk(&mut rng, "B");
    let cfg = OptimizerConfig::default();
    let m = estimate_moments(&[a.clone(), b.clone()], &cfg).unwrap();
    let (start, end) = m.window;
    let returns: Vec<Vec<f64>> = [&a, &b]
        .iter()
        .map(|s| {
            let g = resample_to_grid(s, day, start, end).unwrap();
            g.windows(2).map(|w| w[1] / w[0] - 1.0).collect()
        })
        .collect();
    let expected = textbook_covariance(&returns);
    assert!(!m.ridge_applied);
    for i in 0..2 {
        for j in 0..2 {
            assert!((m.covariance[(i, j)] - expected[(i, j)]).abs() < 1e-12);
        }
        let mean = returns[i].iter().sum::<f64>() / returns[i].len() as f64;
        assert!((m.mean_returns[i] - mean).abs() < 1e-12);
    }
}
