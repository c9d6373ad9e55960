//! Exogenous processes of the dividend economy on a uniform time grid.
//!
//! The latent growth rate is an Ornstein-Uhlenbeck process advanced with its
//! exact Gaussian transition. The log-dividend integrates it with the
//! trapezoidal rule, and the standard-of-living index solves
//! `dx = lambda (log D - x) dt` exactly with `log D` frozen at its step average.

use std::io::Write;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::path_rng;

pub const DEFAULT_DT: f64 = 1e-3;

/// True-model constants of the economy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EconomyParams {
    /// Mean-reversion speed of the growth rate.
    pub xi: f64,
    /// Long-run average growth rate.
    pub mu_bar: f64,
    /// Initial growth rate.
    pub mu0: f64,
    /// Dividend volatility.
    pub sigma_d: f64,
    /// Growth-rate volatility.
    pub sigma_mu: f64,
    /// True correlation of the public signal with the growth-rate shock.
    pub phi: f64,
    /// Mean-reversion speed of the standard-of-living index.
    pub lambda: f64,
    /// Initial standard-of-living index.
    #[serde(default)]
    pub x0: f64,
}

impl Default for EconomyParams {
    fn default() -> Self {
        Self {
            xi: 0.6,
            mu_bar: 0.05,
            mu0: 0.05,
            sigma_d: 0.2,
            sigma_mu: 0.16,
            phi: 0.5,
            lambda: 1.0,
            x0: 0.0,
        }
    }
}

impl EconomyParams {
    pub fn validate(&self) -> Result<()> {
        let finite = [
            ("economy.xi", self.xi),
            ("economy.mu_bar", self.mu_bar),
            ("economy.mu0", self.mu0),
            ("economy.sigma_d", self.sigma_d),
            ("economy.sigma_mu", self.sigma_mu),
            ("economy.phi", self.phi),
            ("economy.lambda", self.lambda),
            ("economy.x0", self.x0),
        ];
        for (field, v) in finite {
            if !v.is_finite() {
                return Err(Error::config(field, "must be finite"));
            }
        }
        if self.xi <= 0.0 {
            return Err(Error::config("economy.xi", "must be > 0"));
        }
        if self.sigma_d <= 0.0 {
            return Err(Error::config("economy.sigma_d", "must be > 0"));
        }
        if !(0.0..1.0).contains(&self.phi) {
            return Err(Error::config("economy.phi", "must lie in [0, 1)"));
        }
        if self.lambda < 0.0 {
            return Err(Error::config("economy.lambda", "must be >= 0"));
        }
        Ok(())
    }

    /// Squared signal-to-noise ratio `(sigma_mu / sigma_d)^2`.
    pub fn snr2(&self) -> f64 {
        (self.sigma_mu / self.sigma_d).powi(2)
    }

    /// Deterministic long-run growth of `log D`, `mu_bar - sigma_d^2 / 2`.
    pub fn log_growth(&self) -> f64 {
        self.mu_bar - 0.5 * self.sigma_d * self.sigma_d
    }
}

/// Uniform time grid plus the key of its random stream.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathGrid {
    pub dt: f64,
    pub n_steps: usize,
    pub seed: u64,
    pub path_index: u64,
}

impl PathGrid {
    pub fn new(dt: f64, n_steps: usize, seed: u64, path_index: u64) -> Self {
        Self {
            dt,
            n_steps,
            seed,
            path_index,
        }
    }

    /// Grid covering `[0, horizon]` with step `dt` (the last step is rounded to the nearest count).
    pub fn with_horizon(dt: f64, horizon: f64, seed: u64, path_index: u64) -> Self {
        let n_steps = (horizon / dt).round().max(1.0) as usize;
        Self::new(dt, n_steps, seed, path_index)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::config("grid.dt", "must be finite and > 0"));
        }
        if self.n_steps == 0 {
            return Err(Error::config("grid.n_steps", "must be >= 1"));
        }
        Ok(())
    }

    pub fn horizon(&self) -> f64 {
        self.dt * self.n_steps as f64
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.n_steps).map(|k| k as f64 * self.dt).collect()
    }

    pub fn for_path(&self, path_index: u64) -> Self {
        Self {
            path_index,
            ..*self
        }
    }
}

/// Increments of the three independent Wiener processes, one entry per grid step.
#[derive(Debug, Clone, PartialEq)]
pub struct WienerIncrements {
    pub dw1: Vec<f64>,
    pub dw2: Vec<f64>,
    pub dw3: Vec<f64>,
}

impl WienerIncrements {
    pub fn len(&self) -> usize {
        self.dw1.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dw1.is_empty()
    }

    /// Sums consecutive blocks of `factor` increments, giving the same Brownian
    /// paths sampled on a grid `factor` times coarser.
    pub fn coarsen(&self, factor: usize) -> WienerIncrements {
        let agg = |v: &[f64]| -> Vec<f64> { v.chunks(factor).map(|c| c.iter().sum()).collect() };
        WienerIncrements {
            dw1: agg(&self.dw1),
            dw2: agg(&self.dw2),
            dw3: agg(&self.dw3),
        }
    }
}

/// Draws the increments of `W1, W2, W3`. Each step consumes three normals in
/// the order `(dW1, dW2, dW3)` from the `(seed, path_index)` stream.
pub fn generate_wiener(grid: &PathGrid) -> Result<WienerIncrements> {
    grid.validate()?;
    let mut rng = path_rng(grid.seed, grid.path_index);
    let sd = grid.dt.sqrt();
    let n = grid.n_steps;
    let mut dw1 = Vec::with_capacity(n);
    let mut dw2 = Vec::with_capacity(n);
    let mut dw3 = Vec::with_capacity(n);
    for _ in 0..n {
        let z1: f64 = StandardNormal.sample(&mut rng);
        let z2: f64 = StandardNormal.sample(&mut rng);
        let z3: f64 = StandardNormal.sample(&mut rng);
        dw1.push(sd * z1);
        dw2.push(sd * z2);
        dw3.push(sd * z3);
    }
    Ok(WienerIncrements { dw1, dw2, dw3 })
}

/// Exact OU transition. The per-step shock is `dW2[k]` rescaled from variance
/// `dt` to the exact conditional variance `sigma_mu^2 (1 - e^{-2 xi dt}) / (2 xi)`.
pub fn simulate_growth_rate(params: &EconomyParams, dt: f64, dw2: &[f64]) -> Vec<f64> {
    let decay = (-params.xi * dt).exp();
    let noise_scale =
        params.sigma_mu * ((-(-2.0 * params.xi * dt).exp_m1()) / (2.0 * params.xi * dt)).sqrt();
    let mut mu = Vec::with_capacity(dw2.len() + 1);
    let mut m = params.mu0;
    mu.push(m);
    for &dw in dw2 {
        m = params.mu_bar + (m - params.mu_bar) * decay + noise_scale * dw;
        mu.push(m);
    }
    mu
}

/// Returns `(D, log D)`; `log D` is the stored source of truth and `D = exp(log D)`.
pub fn simulate_dividend(
    params: &EconomyParams,
    dt: f64,
    mu_d: &[f64],
    dw1: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    if mu_d.len() != dw1.len() + 1 {
        return Err(Error::Input(format!(
            "growth-rate path has {} points but {} increments were given",
            mu_d.len(),
            dw1.len()
        )));
    }
    let ito = 0.5 * params.sigma_d * params.sigma_d * dt;
    let mut log_d = Vec::with_capacity(mu_d.len());
    let mut l = 0.0;
    log_d.push(l);
    for k in 0..dw1.len() {
        l += 0.5 * (mu_d[k] + mu_d[k + 1]) * dt - ito + params.sigma_d * dw1[k];
        log_d.push(l);
    }
    let d = log_d.iter().map(|v| v.exp()).collect();
    Ok((d, log_d))
}

pub fn compute_living_index(params: &EconomyParams, dt: f64, log_d: &[f64]) -> Vec<f64> {
    let decay = (-params.lambda * dt).exp();
    let gain = -(-params.lambda * dt).exp_m1();
    let mut x = Vec::with_capacity(log_d.len());
    let mut cur = params.x0;
    x.push(cur);
    for w in log_d.windows(2) {
        let avg = 0.5 * (w[0] + w[1]);
        cur = cur * decay + gain * avg;
        x.push(cur);
    }
    x
}

/// Public signal levels `s`, built from `ds = phi dW2 + sqrt(1 - phi^2) dW3`.
pub fn compute_signal(phi: f64, dw2: &[f64], dw3: &[f64]) -> Result<Vec<f64>> {
    if !(0.0..1.0).contains(&phi) {
        return Err(Error::config("economy.phi", "must lie in [0, 1)"));
    }
    if dw2.len() != dw3.len() {
        return Err(Error::Input("dW2 and dW3 lengths differ".into()));
    }
    let orth = (1.0 - phi * phi).sqrt();
    let mut s = Vec::with_capacity(dw2.len() + 1);
    let mut cur = 0.0;
    s.push(cur);
    for (a, b) in dw2.iter().zip(dw3) {
        cur += phi * a + orth * b;
        s.push(cur);
    }
    Ok(s)
}

/// One realized path of every exogenous process.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketPath {
    pub dt: f64,
    pub times: Vec<f64>,
    pub dw1: Vec<f64>,
    pub dw2: Vec<f64>,
    pub dw3: Vec<f64>,
    pub mu_d: Vec<f64>,
    pub d: Vec<f64>,
    pub log_d: Vec<f64>,
    pub x: Vec<f64>,
    pub s: Vec<f64>,
}

impl MarketPath {
    pub fn n_steps(&self) -> usize {
        self.dw1.len()
    }

    pub fn horizon(&self) -> f64 {
        *self.times.last().unwrap_or(&0.0)
    }

    /// Signal increment over step `k`.
    pub fn ds(&self, k: usize) -> f64 {
        self.s[k + 1] - self.s[k]
    }

    /// Log-dividend increment over step `k`.
    pub fn dlog_d(&self, k: usize) -> f64 {
        self.log_d[k + 1] - self.log_d[k]
    }
}

pub fn simulate_market_path(params: &EconomyParams, grid: &PathGrid) -> Result<MarketPath> {
    params.validate()?;
    let inc = generate_wiener(grid)?;
    market_path_from_increments(params, grid.dt, inc)
}

/// Builds a path from given increments (used for coupled refinement studies).
pub fn market_path_from_increments(
    params: &EconomyParams,
    dt: f64,
    inc: WienerIncrements,
) -> Result<MarketPath> {
    params.validate()?;
    if inc.is_empty() || inc.dw2.len() != inc.len() || inc.dw3.len() != inc.len() {
        return Err(Error::Input("increment sequences empty or of unequal length".into()));
    }
    let n = inc.len();
    let mu_d = simulate_growth_rate(params, dt, &inc.dw2);
    let (d, log_d) = simulate_dividend(params, dt, &mu_d, &inc.dw1)?;
    let x = compute_living_index(params, dt, &log_d);
    let s = compute_signal(params.phi, &inc.dw2, &inc.dw3)?;
    let times = (0..=n).map(|k| k as f64 * dt).collect();
    Ok(MarketPath {
        dt,
        times,
        dw1: inc.dw1,
        dw2: inc.dw2,
        dw3: inc.dw3,
        mu_d,
        d,
        log_d,
        x,
        s,
    })
}

/// Writes one row per grid point, decimated by `stride` (the final point is always kept).
/// Increment columns on row `k` hold the increment over `[t_{k-1}, t_k]`; row 0 carries zeros.
pub fn write_path_csv<W: Write>(path: &MarketPath, stride: usize, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["time", "dW1", "dW2", "dW3", "mu_D", "log_D", "x", "s"])?;
    for k in crate::report::decimated_indices(path.times.len(), stride) {
        let inc = |v: &[f64]| if k == 0 { 0.0 } else { v[k - 1] };
        w.write_record([
            fmt(path.times[k]),
            fmt(inc(&path.dw1)),
            fmt(inc(&path.dw2)),
            fmt(inc(&path.dw3)),
            fmt(path.mu_d[k]),
            fmt(path.log_d[k]),
            fmt(path.x[k]),
            fmt(path.s[k]),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub(crate) fn fmt(v: f64) -> String {
    // `Display` for f64 prints the shortest string that parses back to the same bits.
    format!("{v}")
}
