//! Equilibrium state price density by market clearing.
//!
//! Each agent type `i` has a homogeneous-economy pricing kernel
//! `M_i = e^{-rho_i t} D^{-gamma_i} Z_i H_i^{gamma_i - 1}` with `H_i = e^{beta_i x}`.
//! The heterogeneous kernel `M` is the unique root of
//! `g(M) = sum_i c_i0 (M_i / M)^{1/gamma_i} - 1`, solved in `log M`.
//! Everything SPD-related is carried in log space.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filtering::{run_filters, AgentBeliefs, FilterPath, FilterSet};
use crate::paths::{fmt, simulate_market_path, EconomyParams, MarketPath, PathGrid};

pub const CLEARING_MAX_ITER: usize = 200;

/// `ln(1e-300)`: clearing terms below this are treated as exact zeros.
const NEGLIGIBLE_LOG_TERM: f64 = -690.775_527_898_213_7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentPrefs {
    /// Relative risk aversion.
    pub gamma: f64,
    /// Time-preference rate.
    pub rho: f64,
    /// Habit strength.
    #[serde(default)]
    pub beta: f64,
    /// Initial consumption share.
    pub c0: f64,
}

impl AgentPrefs {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma.is_finite() && self.gamma > 0.0) {
            return Err(Error::config("prefs.gamma", "must be finite and > 0"));
        }
        if !self.rho.is_finite() {
            return Err(Error::config("prefs.rho", "must be finite"));
        }
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return Err(Error::config("prefs.beta", "must be finite and >= 0"));
        }
        if !(self.c0.is_finite() && self.c0 > 0.0) {
            return Err(Error::config("prefs.c0", "must be finite and > 0"));
        }
        Ok(())
    }
}

/// One agent type: preferences plus beliefs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentSpec {
    pub prefs: AgentPrefs,
    pub beliefs: AgentBeliefs,
}

impl AgentSpec {
    /// A CRRA agent with correct beliefs.
    pub fn rational(params: &EconomyParams, gamma: f64, rho: f64, c0: f64) -> Self {
        Self {
            prefs: AgentPrefs { gamma, rho, beta: 0.0, c0 },
            beliefs: AgentBeliefs::rational(params),
        }
    }
}

/// Validates every agent and the normalization `sum c0 = 1`.
pub fn validate_agents(agents: &[AgentSpec]) -> Result<()> {
    if agents.is_empty() {
        return Err(Error::config("agents", "at least one agent is required"));
    }
    for (i, a) in agents.iter().enumerate() {
        a.prefs.validate().map_err(|e| prefix(e, i))?;
        a.beliefs.validate().map_err(|e| prefix(e, i))?;
    }
    let total: f64 = agents.iter().map(|a| a.prefs.c0).sum();
    if (total - 1.0).abs() > 1e-12 {
        return Err(Error::config("agents.c0", format!("initial shares must sum to 1 (got {total})")));
    }
    Ok(())
}

fn prefix(e: Error, i: usize) -> Error {
    match e {
        Error::Config { field, reason } => Error::Config {
            field: format!("agents[{i}].{field}"),
            reason,
        },
        other => other,
    }
}

/// `log M_i` along the path.
pub fn homogeneous_spd(prefs: &AgentPrefs, path: &MarketPath, filter: &FilterPath) -> Result<Vec<f64>> {
    if filter.log_z.len() != path.times.len() {
        return Err(Error::Input("filter and path lengths differ".into()));
    }
    let habit = (prefs.gamma - 1.0) * prefs.beta;
    Ok((0..path.times.len())
        .map(|k| -prefs.rho * path.times[k] - prefs.gamma * path.log_d[k] + filter.log_z[k] + habit * path.x[k])
        .collect())
}

/// Interest rate and market price of risk of a one-type economy at a single time.
///
/// The rate is the negative drift of `M_i`:
/// `r = rho + gamma mu_i - sD^2 gamma (gamma + 1) / 2 + lambda beta (gamma - 1)(x - log D)`,
/// and `theta = gamma sD - delta`.
#[allow(clippy::too_many_arguments)]
pub fn homogeneous_rates(
    prefs: &AgentPrefs,
    params: &EconomyParams,
    mu_i: f64,
    delta: f64,
    x: f64,
    log_d: f64,
) -> (f64, f64) {
    let g = prefs.gamma;
    let s = params.sigma_d;
    let r = prefs.rho + g * mu_i - 0.5 * s * s * g * (g + 1.0)
        + params.lambda * prefs.beta * (g - 1.0) * (x - log_d);
    let theta = g * s - delta;
    (r, theta)
}

/// Result of one clearing solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Clearing {
    pub log_m: f64,
    pub residual: f64,
    pub iterations: usize,
    /// Agents whose clearing term fell below `1e-300` and was dropped.
    pub dropped: usize,
}

/// Evaluates `g(m)` and `-g'(m)` in log M, dropping negligible terms.
fn clearing_terms(prefs: &[AgentPrefs], log_m_homog: &[f64], log_m: f64) -> (f64, f64, usize) {
    let mut g = -1.0;
    let mut slope = 0.0;
    let mut dropped = 0;
    for (p, &lm) in prefs.iter().zip(log_m_homog) {
        let e = p.c0.ln() + (lm - log_m) / p.gamma;
        if e < NEGLIGIBLE_LOG_TERM {
            dropped += 1;
            continue;
        }
        let term = e.exp();
        g += term;
        slope += term / p.gamma;
    }
    (g, slope, dropped)
}

/// Solves `sum_i c_i0 (M_i / M)^{1/gamma_i} = 1` for `log M` by safeguarded Newton on a bisection bracket.
pub fn clear_market(prefs: &[AgentPrefs], log_m_homog: &[f64]) -> Result<Clearing> {
    if prefs.len() != log_m_homog.len() || prefs.is_empty() {
        return Err(Error::Input("clearing needs one homogeneous SPD per agent".into()));
    }
    if log_m_homog.iter().any(|v| !v.is_finite()) {
        return Err(Error::Input("homogeneous SPD values must be finite and positive".into()));
    }
    if prefs.len() == 1 {
        let p = prefs[0];
        let log_m = log_m_homog[0] + p.gamma * p.c0.ln();
        let (g, _, _) = clearing_terms(prefs, log_m_homog, log_m);
        return Ok(Clearing { log_m, residual: g, iterations: 0, dropped: 0 });
    }
    // g(lo) >= 0 because one term alone reaches 1 there; g(hi) <= 0 because every ratio is <= 1.
    let mut lo = f64::NEG_INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for (p, &lm) in prefs.iter().zip(log_m_homog) {
        lo = lo.max(lm + p.gamma * p.c0.ln());
        hi = hi.max(lm);
    }
    let mut m = 0.5 * (lo + hi);
    for it in 1..=CLEARING_MAX_ITER {
        let (g, slope, dropped) = clearing_terms(prefs, log_m_homog, m);
        if g == 0.0 {
            return Ok(Clearing { log_m: m, residual: g, iterations: it, dropped });
        }
        if g > 0.0 {
            lo = m;
        } else {
            hi = m;
        }
        let newton = m + g / slope;
        let next = if slope > 0.0 && newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        let step = (next - m).abs();
        m = next;
        if step <= 4.0 * f64::EPSILON * m.abs().max(1.0) || hi - lo <= 4.0 * f64::EPSILON * m.abs().max(1.0) {
            let (g, _, dropped) = clearing_terms(prefs, log_m_homog, m);
            if dropped > 0 {
                log::warn!("{dropped} negligible clearing term(s) dropped");
            }
            return Ok(Clearing { log_m: m, residual: g, iterations: it, dropped });
        }
    }
    Err(Error::Convergence { iterations: CLEARING_MAX_ITER, lo, hi })
}

/// `log(c_i / D) = log c_i0 + (log M_i - log M) / gamma_i`.
pub fn log_consumption_shares(prefs: &[AgentPrefs], log_m_homog: &[f64], log_m: f64) -> Vec<f64> {
    prefs
        .iter()
        .zip(log_m_homog)
        .map(|(p, lm)| p.c0.ln() + (lm - log_m) / p.gamma)
        .collect()
}

pub fn consumption_shares(prefs: &[AgentPrefs], log_m_homog: &[f64], log_m: f64) -> Vec<f64> {
    log_consumption_shares(prefs, log_m_homog, log_m).into_iter().map(f64::exp).collect()
}

/// Relative absolute risk tolerance `omega_i = (share_i / gamma_i) / sum_j (share_j / gamma_j)`.
pub fn risk_tolerance_weights(gammas: &[f64], shares: &[f64]) -> Vec<f64> {
    let raw: Vec<f64> = shares.iter().zip(gammas).map(|(s, g)| s / g).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / total).collect()
}

/// Aggregates the one-type rates into the equilibrium `(r, theta)`.
pub fn heterogeneous_rates(omega: &[f64], r_homog: &[f64], theta_homog: &[f64], gammas: &[f64]) -> (f64, f64) {
    let theta: f64 = omega.iter().zip(theta_homog).map(|(w, t)| w * t).sum();
    let mean_r: f64 = omega.iter().zip(r_homog).map(|(w, r)| w * r).sum();
    let correction: f64 = omega
        .iter()
        .zip(theta_homog)
        .zip(gammas)
        .map(|((w, t), g)| (1.0 - 1.0 / g) * w * (t - theta).powi(2))
        .sum();
    (mean_r + 0.5 * correction, theta)
}

/// Equilibrium quantities at one grid time.
#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumPoint {
    pub time: f64,
    pub log_m: f64,
    pub log_m_homog: Vec<f64>,
    pub shares: Vec<f64>,
    pub omega: Vec<f64>,
    pub r: f64,
    pub theta: f64,
    pub r_homog: Vec<f64>,
    pub theta_homog: Vec<f64>,
    pub residual: f64,
}

impl EquilibriumPoint {
    pub fn m(&self) -> f64 {
        self.log_m.exp()
    }
}

/// Equilibrium along one path, stored column-wise (`[agent][step]` for per-agent series).
#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumPath {
    pub times: Vec<f64>,
    pub log_m: Vec<f64>,
    pub log_m_homog: Vec<Vec<f64>>,
    pub log_shares: Vec<Vec<f64>>,
    pub omega: Vec<Vec<f64>>,
    pub r: Vec<f64>,
    pub theta: Vec<f64>,
    pub r_homog: Vec<Vec<f64>>,
    pub theta_homog: Vec<Vec<f64>>,
    pub residual: Vec<f64>,
}

impl EquilibriumPath {
    pub fn n_agents(&self) -> usize {
        self.log_shares.len()
    }

    pub fn share(&self, agent: usize, k: usize) -> f64 {
        self.log_shares[agent][k].exp()
    }

    pub fn point(&self, k: usize) -> EquilibriumPoint {
        let col = |v: &Vec<Vec<f64>>| v.iter().map(|s| s[k]).collect::<Vec<_>>();
        EquilibriumPoint {
            time: self.times[k],
            log_m: self.log_m[k],
            log_m_homog: col(&self.log_m_homog),
            shares: self.log_shares.iter().map(|s| s[k].exp()).collect(),
            omega: col(&self.omega),
            r: self.r[k],
            theta: self.theta[k],
            r_homog: col(&self.r_homog),
            theta_homog: col(&self.theta_homog),
            residual: self.residual[k],
        }
    }

    /// Largest `|sum shares - 1|` over the path.
    pub fn max_share_defect(&self) -> f64 {
        (0..self.times.len())
            .map(|k| ((0..self.n_agents()).map(|i| self.share(i, k)).sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    pub fn max_abs_residual(&self) -> f64 {
        self.residual.iter().fold(0.0, |a, r| a.max(r.abs()))
    }
}

/// Clears the market at every grid time of an already-filtered path.
pub fn solve_equilibrium(
    params: &EconomyParams,
    agents: &[AgentSpec],
    path: &MarketPath,
    filters: &FilterSet,
) -> Result<EquilibriumPath> {
    let n_pts = path.times.len();
    let prefs: Vec<AgentPrefs> = agents.iter().map(|a| a.prefs).collect();
    let gammas: Vec<f64> = prefs.iter().map(|p| p.gamma).collect();
    let log_m_homog = agents
        .iter()
        .zip(&filters.agents)
        .map(|(a, f)| homogeneous_spd(&a.prefs, path, f))
        .collect::<Result<Vec<_>>>()?;
    let n = agents.len();
    let mut out = EquilibriumPath {
        times: path.times.clone(),
        log_m: Vec::with_capacity(n_pts),
        log_m_homog,
        log_shares: vec![Vec::with_capacity(n_pts); n],
        omega: vec![Vec::with_capacity(n_pts); n],
        r: Vec::with_capacity(n_pts),
        theta: Vec::with_capacity(n_pts),
        r_homog: vec![Vec::with_capacity(n_pts); n],
        theta_homog: vec![Vec::with_capacity(n_pts); n],
        residual: Vec::with_capacity(n_pts),
    };
    let mut lm = vec![0.0; n];
    let mut rh = vec![0.0; n];
    let mut th = vec![0.0; n];
    for k in 0..n_pts {
        for i in 0..n {
            lm[i] = out.log_m_homog[i][k];
            let f = &filters.agents[i];
            let (r, t) = homogeneous_rates(&prefs[i], params, f.mu[k], f.delta[k], path.x[k], path.log_d[k]);
            rh[i] = r;
            th[i] = t;
        }
        let c = clear_market(&prefs, &lm).map_err(|e| Error::AtStep { step: k, source: Box::new(e) })?;
        let ls = log_consumption_shares(&prefs, &lm, c.log_m);
        let shares: Vec<f64> = ls.iter().map(|v| v.exp()).collect();
        let omega = risk_tolerance_weights(&gammas, &shares);
        let (r, theta) = heterogeneous_rates(&omega, &rh, &th, &gammas);
        out.log_m.push(c.log_m);
        out.residual.push(c.residual);
        out.r.push(r);
        out.theta.push(theta);
        for i in 0..n {
            out.log_shares[i].push(ls[i]);
            out.omega[i].push(omega[i]);
            out.r_homog[i].push(rh[i]);
            out.theta_homog[i].push(th[i]);
        }
    }
    Ok(out)
}

/// Everything produced for one simulated path.
#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumRun {
    pub path_index: u64,
    pub path: MarketPath,
    pub filters: FilterSet,
    pub equilibrium: EquilibriumPath,
}

pub fn simulate_equilibrium_path(
    params: &EconomyParams,
    agents: &[AgentSpec],
    grid: &PathGrid,
) -> Result<EquilibriumRun> {
    params.validate()?;
    validate_agents(agents)?;
    let path = simulate_market_path(params, grid)?;
    let beliefs: Vec<AgentBeliefs> = agents.iter().map(|a| a.beliefs).collect();
    let filters = run_filters(params, &beliefs, &path)?;
    let equilibrium = solve_equilibrium(params, agents, &path, &filters)?;
    Ok(EquilibriumRun {
        path_index: grid.path_index,
        path,
        filters,
        equilibrium,
    })
}

/// Runs paths `0..n_paths` of the grid's seed in parallel; output is ordered by path index.
pub fn simulate_equilibrium(
    params: &EconomyParams,
    agents: &[AgentSpec],
    grid: &PathGrid,
    n_paths: u64,
) -> Result<Vec<EquilibriumRun>> {
    (0..n_paths)
        .into_par_iter()
        .map(|i| simulate_equilibrium_path(params, agents, &grid.for_path(i)))
        .collect()
}

pub fn write_equilibrium_csv<W: Write>(eq: &EquilibriumPath, stride: usize, out: W) -> Result<()> {
    let n = eq.n_agents();
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["time".to_string(), "log_M".to_string()];
    for prefix in ["share", "omega"] {
        header.extend((0..n).map(|i| format!("{prefix}_{i}")));
    }
    header.push("r".into());
    header.push("theta".into());
    for prefix in ["r_homog", "theta_homog"] {
        header.extend((0..n).map(|i| format!("{prefix}_{i}")));
    }
    w.write_record(&header)?;
    for k in crate::report::decimated_indices(eq.times.len(), stride) {
        let mut row = vec![fmt(eq.times[k]), fmt(eq.log_m[k])];
        row.extend((0..n).map(|i| fmt(eq.share(i, k))));
        row.extend((0..n).map(|i| fmt(eq.omega[i][k])));
        row.push(fmt(eq.r[k]));
        row.push(fmt(eq.theta[k]));
        row.extend((0..n).map(|i| fmt(eq.r_homog[i][k])));
        row.extend((0..n).map(|i| fmt(eq.theta_homog[i][k])));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
