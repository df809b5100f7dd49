//! Moment estimation and long-only maximum Sharpe portfolios.
//!
//! Trade series are irregular, so each asset is resampled onto a common
//! calendar grid (last observation carried forward) before per-period
//! returns, their sample mean and sample covariance are taken.
//!
//! The solver minimizes the negative Sharpe ratio
//! `-(wᵀμ - R_f) / sqrt(wᵀΣw)` over the simplex `Σw = 1, w ≥ 0`.
//! Because the ratio is invariant to positive scaling of `w`, its maximizer
//! on the simplex is the normalization of the solution `y` of the convex
//! problem `min yᵀΣy` subject to `(μ - R_f)ᵀy = 1, y ≥ 0`. A primal
//! active-set method works on that problem: starting from equal weights,
//! each iteration moves toward the optimum of the current face (the
//! tangency portfolio restricted to the free assets), stopping at the first
//! asset that would go negative, and an asset is released back into the
//! face when its multiplier shows the objective would improve. The method
//! terminates at the exact optimum in finitely many steps.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::model::{MomentEstimate, PortfolioAllocation, PriceSeries};
use crate::returns::clean_series;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum OptimizeError {
    #[error("invalid optimizer config: {0}")]
    InvalidConfig(String),
    #[error("insufficient data: {found} usable asset(s), at least {needed} required")]
    InsufficientAssets { found: usize, needed: usize },
    #[error("insufficient data: series for `{token}` is empty")]
    EmptySeries { token: String },
    #[error("invalid window [{start}, {end}]")]
    InvalidWindow { start: i64, end: i64 },
    #[error("insufficient data: window yields {points} grid point(s), at least 3 required")]
    WindowTooShort { points: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("degenerate portfolio: zero volatility")]
    DegeneratePortfolio,
    #[error("no feasible tangency: no asset has expected return above the risk-free rate")]
    NoFeasibleTangency,
    #[error("covariance restricted to the active assets is not positive definite")]
    SingularCovariance,
    #[error("grid oracle supports at most 4 assets, got {0}")]
    TooManyAssets(usize),
    #[error("grid resolution {0} does not divide 1")]
    InvalidResolution(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub risk_free_rate: f64,
    pub top_k: usize,
    pub grid_period_seconds: i64,
    pub ridge_epsilon: f64,
    pub max_iterations: usize,
    pub objective_tolerance: f64,
    /// End of the resampling window; defaults to the latest trade among assets.
    pub window_end: Option<i64>,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            risk_free_rate: 0.0,
            top_k: 10,
            grid_period_seconds: 86_400,
            ridge_epsilon: 1e-10,
            max_iterations: 1000,
            objective_tolerance: 1e-10,
            window_end: None,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<(), OptimizeError> {
        let bad = |m: &str| Err(OptimizeError::InvalidConfig(m.to_string()));
        if self.top_k < 1 {
            return bad("top_k must be at least 1");
        }
        if self.grid_period_seconds < 1 {
            return bad("grid_period_seconds must be at least 1");
        }
        if !(self.ridge_epsilon >= 0.0) {
            return bad("ridge_epsilon must be non-negative");
        }
        if !self.risk_free_rate.is_finite() {
            return bad("risk_free_rate must be finite");
        }
        if !(self.objective_tolerance >= 0.0) {
            return bad("objective_tolerance must be non-negative");
        }
        Ok(())
    }
}

/// The `k` most traded series; ties go to the smaller token string.
pub fn select_assets(series_list: &[PriceSeries], k: usize) -> Vec<PriceSeries> {
    let mut ranked: Vec<&PriceSeries> = series_list.iter().collect();
    ranked.sort_by(|a, b| b.len().cmp(&a.len()).then_with(|| a.token.token.cmp(&b.token.token)));
    ranked.into_iter().take(k).cloned().collect()
}

/// Prices at `start, start + period, …  ≤ end`, carrying the last trade
/// at or before each point forward. Points before the first trade take the
/// first trade's price.
pub fn resample_to_grid(series: &PriceSeries, period: i64, start: i64, end: i64) -> Result<Vec<f64>, OptimizeError> {
    if series.is_empty() {
        return Err(OptimizeError::EmptySeries {
            token: series.token.token.clone(),
        });
    }
    if period < 1 || end < start {
        return Err(OptimizeError::InvalidWindow { start, end });
    }
    let points = ((end - start) / period + 1) as usize;
    let obs: Vec<(i64, f64)> = series.observations().collect();
    let mut cursor = 0;
    let mut current = obs[0].1;
    let mut out = Vec::with_capacity(points);
    for k in 0..points {
        let at = start + k as i64 * period;
        while cursor < obs.len() && obs[cursor].0 <= at {
            current = obs[cursor].1;
            cursor += 1;
        }
        out.push(current);
    }
    Ok(out)
}

/// Mean and sample covariance of per-period grid returns over the window
/// `[latest first trade, window_end]`.
pub fn estimate_moments(assets: &[PriceSeries], config: &OptimizerConfig) -> Result<MomentEstimate, OptimizeError> {
    config.validate()?;
    if assets.len() < 2 {
        return Err(OptimizeError::InsufficientAssets {
            found: assets.len(),
            needed: 2,
        });
    }
    if let Some(empty) = assets.iter().find(|s| s.is_empty()) {
        return Err(OptimizeError::EmptySeries {
            token: empty.token.token.clone(),
        });
    }
    let start = assets.iter().filter_map(PriceSeries::first_timestamp).max().unwrap_or(0);
    let end = config
        .window_end
        .unwrap_or_else(|| assets.iter().filter_map(PriceSeries::last_timestamp).max().unwrap_or(0));
    let period = config.grid_period_seconds;
    let points = if end >= start { ((end - start) / period + 1) as usize } else { 0 };
    if points < 3 {
        return Err(OptimizeError::WindowTooShort { points });
    }

    let grids = assets
        .iter()
        .map(|s| resample_to_grid(s, period, start, end))
        .collect::<Result<Vec<_>, _>>()?;
    let n = assets.len();
    let periods = points - 1;

    // Streaming co-moment update; the upper triangle is mirrored afterwards.
    let mut mean = DVector::<f64>::zeros(n);
    let mut comoment = DMatrix::<f64>::zeros(n, n);
    let mut delta = DVector::<f64>::zeros(n);
    let mut x = DVector::<f64>::zeros(n);
    for k in 0..periods {
        for (i, g) in grids.iter().enumerate() {
            x[i] = g[k + 1] / g[k] - 1.0;
        }
        let count = (k + 1) as f64;
        delta.copy_from(&(&x - &mean));
        mean += &delta / count;
        for i in 0..n {
            for j in i..n {
                comoment[(i, j)] += delta[i] * (x[j] - mean[j]);
            }
        }
    }
    let mut covariance = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let c = comoment[(i, j)] / (periods as f64 - 1.0);
            covariance[(i, j)] = c;
            covariance[(j, i)] = c;
        }
    }

    let ridge_applied = !is_positive_definite(&covariance);
    if ridge_applied {
        for i in 0..n {
            covariance[(i, i)] += config.ridge_epsilon;
        }
    }
    let degenerate_assets = (0..n)
        .filter(|&i| comoment[(i, i)] == 0.0 && mean[i] - config.risk_free_rate == 0.0)
        .collect();

    Ok(MomentEstimate {
        assets: assets.iter().map(|s| s.token.clone()).collect(),
        mean_returns: mean,
        covariance,
        grid_period_seconds: period,
        window: (start, end),
        ridge_applied,
        degenerate_assets,
    })
}

fn is_positive_definite(m: &DMatrix<f64>) -> bool {
    let eig = SymmetricEigen::new(m.clone());
    let max = eig.eigenvalues.amax();
    let min = eig.eigenvalues.min();
    min > f64::EPSILON * m.nrows() as f64 * max
}

/// `-(wᵀμ - R_f) / sqrt(wᵀΣw)`.
pub fn neg_sharpe(
    weights: &DVector<f64>,
    mean_returns: &DVector<f64>,
    covariance: &DMatrix<f64>,
    risk_free_rate: f64,
) -> Result<f64, OptimizeError> {
    let n = weights.len();
    if mean_returns.len() != n || covariance.shape() != (n, n) {
        return Err(OptimizeError::DimensionMismatch(format!(
            "{} weights, {} means, {}x{} covariance",
            n,
            mean_returns.len(),
            covariance.nrows(),
            covariance.ncols()
        )));
    }
    let portfolio_return = weights.dot(mean_returns);
    let variance = weights.dot(&(covariance * weights));
    let volatility = variance.sqrt();
    if !(volatility > 0.0) {
        return Err(OptimizeError::DegeneratePortfolio);
    }
    Ok(-(portfolio_return - risk_free_rate) / volatility)
}

fn check_moments(moments: &MomentEstimate) -> Result<usize, OptimizeError> {
    let n = moments.asset_count();
    if moments.covariance.shape() != (n, n) || moments.assets.len() != n {
        return Err(OptimizeError::DimensionMismatch(format!(
            "{} assets, {} means, {}x{} covariance",
            moments.assets.len(),
            n,
            moments.covariance.nrows(),
            moments.covariance.ncols()
        )));
    }
    if n == 0 {
        return Err(OptimizeError::InsufficientAssets { found: 0, needed: 1 });
    }
    Ok(n)
}

/// Long-only weights maximizing the Sharpe ratio.
pub fn max_sharpe_weights(moments: &MomentEstimate, config: &OptimizerConfig) -> Result<PortfolioAllocation, OptimizeError> {
    config.validate()?;
    let n = check_moments(moments)?;
    let rf = config.risk_free_rate;
    let excess = moments.mean_returns.map(|m| m - rf);
    if !excess.iter().any(|&e| e > 0.0) {
        return Err(OptimizeError::NoFeasibleTangency);
    }

    let weights = if n == 1 {
        DVector::from_element(1, 1.0)
    } else {
        let y = active_set_tangency(&moments.covariance, &excess, config)?;
        let mut w = y.map(|v| v.max(0.0));
        let total = w.sum();
        w /= total;
        w
    };
    let sharpe = -neg_sharpe(&weights, &moments.mean_returns, &moments.covariance, rf)?;
    Ok(PortfolioAllocation {
        assets: moments.assets.clone(),
        weights: weights.iter().copied().collect(),
        sharpe,
        risk_free_rate: rf,
    })
}

/// Solves `min yᵀΣy  s.t.  excessᵀy = 1, y ≥ 0`.
fn active_set_tangency(
    sigma: &DMatrix<f64>,
    excess: &DVector<f64>,
    config: &OptimizerConfig,
) -> Result<DVector<f64>, OptimizeError> {
    let n = excess.len();
    let mut y = DVector::from_element(n, 1.0 / n as f64);
    if excess.dot(&y) <= 0.0 {
        let winners = excess.iter().filter(|&&e| e > 0.0).count() as f64;
        y = excess.map(|e| if e > 0.0 { 1.0 / winners } else { 0.0 });
    }
    y /= excess.dot(&y);
    let mut free: Vec<bool> = y.iter().map(|&v| v > 0.0).collect();

    for _ in 0..config.max_iterations {
        let idx: Vec<usize> = (0..n).filter(|&i| free[i]).collect();
        let target = face_optimum(sigma, excess, &idx)?;

        let mut step = DVector::<f64>::zeros(n);
        for (k, &i) in idx.iter().enumerate() {
            step[i] = target[k] - y[i];
        }
        let scale = y.amax().max(target.amax());

        if step.amax() <= 1e-14 * scale {
            for (k, &i) in idx.iter().enumerate() {
                y[i] = target[k];
            }
            // Multipliers of the y_j ≥ 0 bounds, up to a positive factor.
            let sy = sigma * &y;
            let quad = y.dot(&sy);
            let tol = config.objective_tolerance * (sy.amax() + quad * excess.amax());
            let release = (0..n)
                .filter(|&j| !free[j])
                .map(|j| (j, sy[j] - quad * excess[j]))
                .filter(|&(_, nu)| nu < -tol)
                .min_by(|a, b| a.1.total_cmp(&b.1));
            match release {
                Some((j, _)) => free[j] = true,
                None => return Ok(y),
            }
            continue;
        }

        let mut alpha = 1.0;
        let mut blocking = None;
        for &i in &idx {
            if step[i] < 0.0 {
                let limit = -y[i] / step[i];
                if limit < alpha {
                    alpha = limit;
                    blocking = Some(i);
                }
            }
        }
        y.axpy(alpha, &step, 1.0);
        for &i in &idx {
            if y[i] < 0.0 {
                y[i] = 0.0;
            }
        }
        if let Some(b) = blocking {
            y[b] = 0.0;
            free[b] = false;
        }
    }
    Ok(y)
}

/// Tangency portfolio on the face spanned by `idx`, scaled so `excessᵀy = 1`.
fn face_optimum(sigma: &DMatrix<f64>, excess: &DVector<f64>, idx: &[usize]) -> Result<DVector<f64>, OptimizeError> {
    let sub = sigma.select_rows(idx).select_columns(idx);
    let a = excess.select_rows(idx);
    let chol = sub.cholesky().ok_or(OptimizeError::SingularCovariance)?;
    let z = chol.solve(&a);
    let d = a.dot(&z);
    if !(d > 0.0) {
        return Err(OptimizeError::SingularCovariance);
    }
    Ok(z / d)
}

/// Exhaustive search over simplex lattice points spaced `resolution` apart.
///
/// Ties keep the lexicographically smallest weight vector. Points with zero
/// variance are skipped.
pub fn grid_sharpe_oracle(
    moments: &MomentEstimate,
    resolution: f64,
    risk_free_rate: f64,
) -> Result<(Vec<f64>, f64), OptimizeError> {
    let n = check_moments(moments)?;
    if n > 4 {
        return Err(OptimizeError::TooManyAssets(n));
    }
    let steps = (1.0 / resolution).round();
    if !(resolution > 0.0) || (steps * resolution - 1.0).abs() > 1e-9 {
        return Err(OptimizeError::InvalidResolution(resolution));
    }
    let steps = steps as usize;

    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut counts = vec![0usize; n];
    let mut visit = |counts: &[usize]| {
        let w = DVector::from_iterator(n, counts.iter().map(|&c| c as f64 / steps as f64));
        if let Ok(ns) = neg_sharpe(&w, &moments.mean_returns, &moments.covariance, risk_free_rate) {
            let s = -ns;
            if best.as_ref().is_none_or(|(_, b)| s > *b) {
                best = Some((w.iter().copied().collect(), s));
            }
        }
    };
    enumerate_compositions(&mut counts, 0, steps, &mut visit);
    best.ok_or(OptimizeError::DegeneratePortfolio)
}

fn enumerate_compositions(counts: &mut [usize], pos: usize, remaining: usize, visit: &mut impl FnMut(&[usize])) {
    if pos + 1 == counts.len() {
        counts[pos] = remaining;
        visit(counts);
        return;
    }
    for c in 0..=remaining {
        counts[pos] = c;
        enumerate_compositions(counts, pos + 1, remaining - c, visit);
    }
}

/// Clean, select the top-k most traded tokens, estimate moments and solve.
pub fn optimize_series(tokens: &[PriceSeries], config: &OptimizerConfig) -> Result<PortfolioAllocation, OptimizeError> {
    let cleaned: Vec<PriceSeries> = tokens.iter().map(clean_series).filter(|s| !s.is_empty()).collect();
    let selected = select_assets(&cleaned, config.top_k);
    let moments = estimate_moments(&selected, config)?;
    max_sharpe_weights(&moments, config)
}
