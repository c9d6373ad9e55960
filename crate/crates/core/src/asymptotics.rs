//! Monte Carlo checks of the long-run limits behind the selection results.
//!
//! The limit functionals are built from three families of Gaussian processes driven by
//! a Brownian motion `W` (and an independent `B` where noted):
//!
//! - `X^a_t = int_0^t e^{-a(t-u)} dW_u`
//! - `U^{a,b}_t = int_0^t e^{-(a+b)(t-u)} X^b_u du`
//! - `P^a_t = int_0^t e^{-a(t-u)} X^xi_u du`
//!
//! On the grid each is advanced by its exact left-point recursion,
//! e.g. `X_{k+1} = e^{-a dt} (X_k + dW_k)`, and outer integrals are left-point sums.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::equilibrium::{AgentSpec, EquilibriumPath};
use crate::error::{Error, Result};
use crate::filtering::{alphas, log_y_factor, log_y_offset_limit, variance, FilterSet, NuIntegral};
use crate::paths::{fmt as fmt_f64, EconomyParams, MarketPath, PathGrid};
use crate::report::{mean_and_se, median, ols_slope};
use crate::rng::path_rng;
use crate::selection::confidence_term;

/// Horizons shorter than this many multiples of the slowest time scale are flagged.
pub const MIN_HORIZON_MULTIPLE: f64 = 50.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Functional {
    /// `(1/t) int X^a dB -> 0`
    #[serde(rename = "x_dB")]
    XdB,
    /// `(1/t) int U^{a,b} dB -> 0`
    #[serde(rename = "u_dB")]
    UdB,
    /// `(1/t) int X^a dW -> 0`
    #[serde(rename = "x_dW")]
    XdW,
    /// `(1/t) int U^{a,b} dW -> 0`
    #[serde(rename = "u_dW")]
    UdW,
    /// `(1/t) int X^a_W X^b_B du -> 0`
    #[serde(rename = "x_xB")]
    XCrossDriver,
    /// `(1/t) int (X^a)^2 du -> 1/(2a)`
    #[serde(rename = "x_sq")]
    XSquare,
    /// `(1/t) int X^a X^b du -> 1/(a+b)`
    #[serde(rename = "x_x")]
    XProduct,
    /// `(1/t) int (U^{a,b})^2 du -> 1/(2b(a+b)(a+2b))`
    #[serde(rename = "u_sq")]
    USquare,
    /// `(1/t) int X^a U^{b,a} du -> 1/(2a(2a+b))`
    #[serde(rename = "x_u")]
    XU,
    /// `(1/t) int P^a P^b du`
    #[serde(rename = "p_p")]
    PProduct,
    /// `(1/t) int U^{a,b} X^{a+b}_W du -> 1/(2(a+b)(a+2b))`
    #[serde(rename = "u_xW")]
    USameDriver,
    /// `(1/t) int U^{a,b} X^{a+b}_B du -> 0`
    #[serde(rename = "u_xB")]
    UCrossDriver,
}

impl Functional {
    pub const ALL: [Functional; 12] = [
        Functional::XdB,
        Functional::UdB,
        Functional::XdW,
        Functional::UdW,
        Functional::XCrossDriver,
        Functional::XSquare,
        Functional::XProduct,
        Functional::USquare,
        Functional::XU,
        Functional::PProduct,
        Functional::USameDriver,
        Functional::UCrossDriver,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Functional::XdB => "x_dB",
            Functional::UdB => "u_dB",
            Functional::XdW => "x_dW",
            Functional::UdW => "u_dW",
            Functional::XCrossDriver => "x_xB",
            Functional::XSquare => "x_sq",
            Functional::XProduct => "x_x",
            Functional::USquare => "u_sq",
            Functional::XU => "x_u",
            Functional::PProduct => "p_p",
            Functional::USameDriver => "u_xW",
            Functional::UCrossDriver => "u_xB",
        }
    }

    fn uses_b(self) -> bool {
        !matches!(self, Functional::XdB | Functional::XdW | Functional::XSquare)
    }

    fn uses_a(self) -> bool {
        true
    }

    fn uses_xi(self) -> bool {
        self == Functional::PProduct
    }
}

impl fmt::Display for Functional {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Functional {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Functional::ALL
            .into_iter()
            .find(|l| l.label() == s)
            .ok_or_else(|| Error::config("verify.functionals", format!("unknown functional `{s}`")))
    }
}

/// A limit functional with its rate parameters; unused parameters are ignored.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FunctionalId {
    pub kind: Functional,
    #[serde(default = "one")]
    pub a: f64,
    #[serde(default = "two")]
    pub b: f64,
    #[serde(default = "half")]
    pub xi: f64,
}

fn one() -> f64 {
    1.0
}
fn two() -> f64 {
    2.0
}
fn half() -> f64 {
    0.5
}

impl FunctionalId {
    pub fn new(kind: Functional, a: f64, b: f64, xi: f64) -> Self {
        Self { kind, a, b, xi }
    }

    /// The catalog entry with default parameters `a = 1, b = 2, xi = 0.5`.
    pub fn default_for(kind: Functional) -> Self {
        Self::new(kind, one(), two(), half())
    }

    pub fn validate(&self) -> Result<()> {
        let l = self.kind;
        for (name, used, v) in [("a", l.uses_a(), self.a), ("b", l.uses_b(), self.b), ("xi", l.uses_xi(), self.xi)] {
            if used && !(v.is_finite() && v > 0.0) {
                return Err(Error::config(format!("{}.{name}", l.label()), "must be finite and > 0"));
            }
        }
        if l == Functional::PProduct && (self.a == self.xi || self.b == self.xi) {
            return Err(Error::config(format!("{}.xi", l.label()), "a and b must differ from xi"));
        }
        Ok(())
    }

    /// Slowest mean-reversion rate among the parameters the functional uses.
    pub fn slowest_rate(&self) -> f64 {
        let l = self.kind;
        let mut m = self.a;
        if l.uses_b() {
            m = m.min(self.b);
        }
        if l.uses_xi() {
            m = m.min(self.xi);
        }
        m
    }

    /// Parameters as `a=..;b=..;xi=..`, listing only those the functional uses.
    pub fn params_label(&self) -> String {
        let l = self.kind;
        let mut parts = vec![format!("a={}", self.a)];
        if l.uses_b() {
            parts.push(format!("b={}", self.b));
        }
        if l.uses_xi() {
            parts.push(format!("xi={}", self.xi));
        }
        parts.join(";")
    }
}

pub fn closed_form_limit(id: &FunctionalId) -> Result<f64> {
    id.validate()?;
    let (a, b, xi) = (id.a, id.b, id.xi);
    Ok(match id.kind {
        Functional::XdB | Functional::UdB | Functional::XdW | Functional::UdW | Functional::XCrossDriver | Functional::UCrossDriver => 0.0,
        Functional::XSquare => 1.0 / (2.0 * a),
        Functional::XProduct => 1.0 / (a + b),
        Functional::USquare => 1.0 / (2.0 * b * (a + b) * (a + 2.0 * b)),
        Functional::XU => 1.0 / (2.0 * a * (2.0 * a + b)),
        Functional::PProduct => {
            (1.0 / ((a - xi) * (b - xi)))
                * (1.0 / (a + b) + 1.0 / (2.0 * xi) - 1.0 / (a + xi) - 1.0 / (b + xi))
        }
        Functional::USameDriver => 1.0 / (2.0 * (a + b) * (a + 2.0 * b)),
    })
}

/// Exact left-point recursion `y <- e^{-k dt} (y + input)`.
#[derive(Debug, Clone, Copy)]
struct Decay {
    factor: f64,
    value: f64,
}

impl Decay {
    fn new(rate: f64, dt: f64) -> Self {
        Self { factor: (-rate * dt).exp(), value: 0.0 }
    }

    fn push(&mut self, input: f64) {
        self.value = self.factor * (self.value + input);
    }
}

/// Time average `(1/T) * integral` of the functional along one simulated path.
fn functional_time_average(id: &FunctionalId, grid: &PathGrid) -> f64 {
    let dt = grid.dt;
    let sq = dt.sqrt();
    let (a, b, xi) = (id.a, id.b, id.xi);
    let mut rng = path_rng(grid.seed, grid.path_index);
    let mut xa = Decay::new(a, dt);
    let mut xb = Decay::new(b, dt);
    let mut xab_w = Decay::new(a + b, dt);
    let mut xab_b = Decay::new(a + b, dt);
    let mut xb_b = Decay::new(b, dt);
    let mut xxi = Decay::new(xi, dt);
    let mut u_ab = Decay::new(a + b, dt);
    let mut u_ba = Decay::new(a + b, dt);
    let mut pa = Decay::new(a, dt);
    let mut pb = Decay::new(b, dt);
    let mut sum = 0.0;
    for _ in 0..grid.n_steps {
        let z1: f64 = StandardNormal.sample(&mut rng);
        let z2: f64 = StandardNormal.sample(&mut rng);
        let (dw, db) = (z1 * sq, z2 * sq);
        sum += match id.kind {
            Functional::XdB => xa.value * db,
            Functional::UdB => u_ab.value * db,
            Functional::XdW => xa.value * dw,
            Functional::UdW => u_ab.value * dw,
            Functional::XCrossDriver => xa.value * xb_b.value * dt,
            Functional::XSquare => xa.value * xa.value * dt,
            Functional::XProduct => xa.value * xb.value * dt,
            Functional::USquare => u_ab.value * u_ab.value * dt,
            Functional::XU => xa.value * u_ba.value * dt,
            Functional::PProduct => pa.value * pb.value * dt,
            Functional::USameDriver => u_ab.value * xab_w.value * dt,
            Functional::UCrossDriver => u_ab.value * xab_b.value * dt,
        };
        u_ab.push(xb.value * dt);
        u_ba.push(xa.value * dt);
        pa.push(xxi.value * dt);
        pb.push(xxi.value * dt);
        xa.push(dw);
        xb.push(dw);
        xab_w.push(dw);
        xxi.push(dw);
        xb_b.push(db);
        xab_b.push(db);
    }
    sum / grid.horizon()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitEstimate {
    pub id: FunctionalId,
    /// Cross-seed mean of the time average at the horizon.
    pub estimate: f64,
    pub closed_form: f64,
    pub horizon: f64,
    pub n_seeds: u64,
    /// Cross-seed standard error of `estimate`.
    pub stderr: f64,
    /// Horizon shorter than `MIN_HORIZON_MULTIPLE` times the slowest time scale.
    pub short_horizon: bool,
}

impl LimitEstimate {
    pub fn abs_error(&self) -> f64 {
        (self.estimate - self.closed_form).abs()
    }

    pub fn rel_error(&self) -> f64 {
        self.abs_error() / self.closed_form.abs()
    }
}

/// Runs seeds `0..n_seeds` (random streams of `grid.seed`) in parallel.
pub fn estimate_limit(id: &FunctionalId, grid: &PathGrid, n_seeds: u64) -> Result<LimitEstimate> {
    grid.validate()?;
    let closed_form = closed_form_limit(id)?;
    if n_seeds == 0 {
        return Err(Error::config("n_seeds", "must be >= 1"));
    }
    let values: Vec<f64> = (0..n_seeds)
        .into_par_iter()
        .map(|i| functional_time_average(id, &grid.for_path(i)))
        .collect();
    let (estimate, se) = mean_and_se(&values);
    let horizon = grid.horizon();
    let short_horizon = horizon < MIN_HORIZON_MULTIPLE / id.slowest_rate();
    if short_horizon {
        log::warn!("{}: horizon {horizon} is short for rate {}", id.kind, id.slowest_rate());
    }
    Ok(LimitEstimate {
        id: *id,
        estimate,
        closed_form,
        horizon,
        n_seeds,
        stderr: if se.is_finite() { se } else { 0.0 },
        short_horizon,
    })
}

/// Discretized quadratic variation `sum (X^a_k dB_k)^2` of `int X^a dB` at each horizon.
pub fn quadratic_variation_growth(a: f64, grid: &PathGrid, horizons: &[f64]) -> Result<Vec<(f64, f64)>> {
    grid.validate()?;
    if !(a.is_finite() && a > 0.0) {
        return Err(Error::config("a", "must be finite and > 0"));
    }
    let mut marks: Vec<usize> = horizons.iter().map(|h| (h / grid.dt).round() as usize).collect();
    if marks.windows(2).any(|w| w[0] >= w[1]) || marks.last().is_some_and(|&m| m > grid.n_steps) {
        return Err(Error::config("horizons", "must increase and fit in the grid"));
    }
    let sq = grid.dt.sqrt();
    let mut rng = path_rng(grid.seed, grid.path_index);
    let mut xa = Decay::new(a, grid.dt);
    let mut qv = 0.0;
    let mut out = Vec::with_capacity(marks.len());
    marks.reverse();
    for k in 1..=grid.n_steps {
        let z1: f64 = StandardNormal.sample(&mut rng);
        let z2: f64 = StandardNormal.sample(&mut rng);
        let inc = xa.value * z2 * sq;
        qv += inc * inc;
        xa.push(z1 * sq);
        if marks.last() == Some(&k) {
            marks.pop();
            out.push((k as f64 * grid.dt, qv));
            if marks.is_empty() {
                break;
            }
        }
    }
    Ok(out)
}

/// Least-squares slope of `log|e(t)|` over `t` in `[window.0, window.1]`.
///
/// The window is cut at the first non-positive or non-finite value.
pub fn fit_decay_rate(times: &[f64], errors: &[f64], window: (f64, f64)) -> Result<f64> {
    if times.len() != errors.len() {
        return Err(Error::Input("times and errors differ in length".into()));
    }
    let mut t = Vec::new();
    let mut y = Vec::new();
    for (&ti, &e) in times.iter().zip(errors) {
        if ti < window.0 {
            continue;
        }
        if ti > window.1 {
            break;
        }
        let v = e.abs();
        if !(v > 0.0 && v.is_finite()) {
            break;
        }
        t.push(ti);
        y.push(v.ln());
    }
    if t.len() < 2 {
        return Err(Error::EmptyWindow);
    }
    ols_slope(&t, &y)
}

/// Fitted decay exponents of the filter-variance error and the `log y` error for one correlation belief.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayFit {
    pub phi_i: f64,
    /// `-(alpha2 - alpha1) = -2 (alpha2 + xi)`.
    pub theoretical: f64,
    /// Exponent of `|nu(t) - nu_limit|`; `None` when the error vanishes identically.
    pub variance_rate: Option<f64>,
    /// Exponent of `|log y(t) - (alpha2 + xi) t - offset|`.
    pub log_y_rate: Option<f64>,
}

/// Fits both error series over `t` in `[1/r, 12/r]`, `r = alpha2 - alpha1`.
pub fn filter_decay_fit(params: &EconomyParams, phi_i: f64) -> Result<DecayFit> {
    let c = alphas(params, phi_i)?;
    let r = c.spread();
    let theoretical = -r;
    if c.alpha2 == 0.0 {
        return Ok(DecayFit { phi_i, theoretical, variance_rate: None, log_y_rate: None });
    }
    let (t0, t1) = (1.0 / r, 12.0 / r);
    let times: Vec<f64> = (0..=400).map(|k| t0 + (t1 - t0) * k as f64 / 400.0).collect();
    let nu_err: Vec<f64> = times.iter().map(|&t| variance(&c, params, t) - c.nu_limit).collect();
    let offset = log_y_offset_limit(&c);
    let y_err: Vec<f64> = times
        .iter()
        .map(|&t| log_y_factor(&c, params, t, NuIntegral::ClosedForm) - (c.alpha2 + params.xi) * t - offset)
        .collect();
    Ok(DecayFit {
        phi_i,
        theoretical,
        variance_rate: Some(fit_decay_rate(&times, &nu_err, (t0, t1))?),
        log_y_rate: Some(fit_decay_rate(&times, &y_err, (t0, t1))?),
    })
}

/// Long-run mean of `delta_i^2 / 2` implied by the stationary filters.
///
/// The belief-bias part is `((xi / s_i) (mu_bar_i - mu_bar) / sigma_d)^2 / 2` with
/// `s_i = sqrt(xi^2 + q (1 - phi_i^2))`: the filter shrinks a biased long-run mean by `xi / s_i`.
pub fn half_delta_sq_limit(params: &EconomyParams, spec: &AgentSpec) -> Result<f64> {
    let c = alphas(params, spec.beliefs.phi)?;
    let shrink = params.xi / (c.alpha2 + params.xi);
    let bias = shrink * (spec.beliefs.mu_bar - params.mu_bar) / params.sigma_d;
    Ok(0.5 * bias * bias + confidence_gap(params, spec.beliefs.phi))
}

/// Same limit with the unshrunk bias term `((mu_bar_i - mu_bar) / sigma_d)^2 / 2`,
/// as it appears in the survival index. Equal to the stationary limit when `sigma_mu = 0`.
pub fn half_delta_sq_limit_unshrunk(params: &EconomyParams, spec: &AgentSpec) -> f64 {
    let bias = (spec.beliefs.mu_bar - params.mu_bar) / params.sigma_d;
    0.5 * bias * bias + confidence_gap(params, spec.beliefs.phi)
}

fn confidence_gap(params: &EconomyParams, phi_i: f64) -> f64 {
    confidence_term(params, phi_i) - confidence_term(params, params.phi)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeltaLimit {
    pub agent: usize,
    /// `(1/2T) int delta_i^2 dt`.
    pub estimate: f64,
    pub stationary_limit: f64,
    pub unshrunk_limit: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DriftLimits {
    pub horizon: f64,
    /// `x(T) / T` against `mu_bar - sigma_d^2 / 2`.
    pub x_rate: f64,
    pub x_rate_limit: f64,
    /// `(1/T) int mu^D dt` against `mu_bar`.
    pub mu_average: f64,
    pub mu_average_limit: f64,
    pub delta: Vec<DeltaLimit>,
}

pub fn drift_limits_check(
    params: &EconomyParams,
    agents: &[AgentSpec],
    path: &MarketPath,
    filters: &FilterSet,
) -> Result<DriftLimits> {
    if agents.len() != filters.agents.len() {
        return Err(Error::Input("one filter per agent required".into()));
    }
    let n = path.n_steps();
    let horizon = path.horizon();
    let mu_average = path.mu_d[..n].iter().sum::<f64>() * path.dt / horizon;
    let delta = agents
        .iter()
        .zip(&filters.agents)
        .enumerate()
        .map(|(i, (spec, f))| {
            let sum: f64 = f.delta[..n].iter().map(|d| d * d).sum();
            Ok(DeltaLimit {
                agent: i,
                estimate: 0.5 * sum * path.dt / horizon,
                stationary_limit: half_delta_sq_limit(params, spec)?,
                unshrunk_limit: half_delta_sq_limit_unshrunk(params, spec),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DriftLimits {
        horizon,
        x_rate: path.x[n] / horizon,
        x_rate_limit: params.log_growth(),
        mu_average,
        mu_average_limit: params.mu_bar,
        delta,
    })
}

/// Limit of `theta_winner - theta_i` for agents with the same correlation belief.
pub fn theta_gap_limit(params: &EconomyParams, winner: &AgentSpec, other: &AgentSpec) -> Result<f64> {
    let c = alphas(params, winner.beliefs.phi)?;
    let shrink = params.xi / (c.alpha2 + params.xi);
    Ok(params.sigma_d * (winner.prefs.gamma - other.prefs.gamma)
        - shrink * (winner.beliefs.mu_bar - other.beliefs.mu_bar) / params.sigma_d)
}

/// The same limit without the filter shrinkage of the long-run mean difference.
pub fn theta_gap_limit_unshrunk(params: &EconomyParams, winner: &AgentSpec, other: &AgentSpec) -> f64 {
    params.sigma_d * (winner.prefs.gamma - other.prefs.gamma)
        - (winner.beliefs.mu_bar - other.beliefs.mu_bar) / params.sigma_d
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateGaps {
    /// `|theta_t - theta_{winner,t}|`.
    pub theta_gap: Vec<f64>,
    /// `|r_t - r_{winner,t}|`.
    pub r_gap: Vec<f64>,
    pub theta_first_decile_median: f64,
    pub theta_last_decile_median: f64,
    pub r_first_decile_median: f64,
    pub r_last_decile_median: f64,
}

impl RateGaps {
    /// Both trailing-decile medians below `fraction` of their first-decile medians.
    pub fn decayed(&self, fraction: f64) -> bool {
        self.theta_last_decile_median < fraction * self.theta_first_decile_median
            && self.r_last_decile_median < fraction * self.r_first_decile_median
    }
}

pub fn rate_gap_series(eq: &EquilibriumPath, winner: usize) -> Result<RateGaps> {
    if winner >= eq.n_agents() {
        return Err(Error::Input(format!("winner {winner} out of range")));
    }
    let theta_gap: Vec<f64> = eq.theta.iter().zip(&eq.theta_homog[winner]).map(|(a, b)| (a - b).abs()).collect();
    let r_gap: Vec<f64> = eq.r.iter().zip(&eq.r_homog[winner]).map(|(a, b)| (a - b).abs()).collect();
    let len = theta_gap.len();
    let d = (len / 10).max(1);
    Ok(RateGaps {
        theta_first_decile_median: median(&theta_gap[..d])?,
        theta_last_decile_median: median(&theta_gap[len - d..])?,
        r_first_decile_median: median(&r_gap[..d])?,
        r_last_decile_median: median(&r_gap[len - d..])?,
        theta_gap,
        r_gap,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DivergenceProbe {
    /// Running maximum of `|theta_t - theta_{i,t}|`.
    pub running_max: Vec<f64>,
    /// `running_max / sqrt(2 t ln ln t)` for `t > e`, NaN before.
    pub lil_scaled: Vec<f64>,
    /// Running maximum at `T/4`, `T/2` and `T`.
    pub doubling_max: [f64; 3],
}

impl DivergenceProbe {
    /// Strict growth across the final doubling windows.
    pub fn growing(&self) -> bool {
        self.doubling_max[0] < self.doubling_max[1] && self.doubling_max[1] < self.doubling_max[2]
    }
}

pub fn divergence_probe(eq: &EquilibriumPath, agent: usize) -> Result<DivergenceProbe> {
    if agent >= eq.n_agents() {
        return Err(Error::Input(format!("agent {agent} out of range")));
    }
    let mut m: f64 = 0.0;
    let running_max: Vec<f64> = eq
        .theta
        .iter()
        .zip(&eq.theta_homog[agent])
        .map(|(a, b)| {
            m = m.max((a - b).abs());
            m
        })
        .collect();
    let lil_scaled = eq
        .times
        .iter()
        .zip(&running_max)
        .map(|(&t, &v)| if t > std::f64::consts::E { v / (2.0 * t * t.ln().ln()).sqrt() } else { f64::NAN })
        .collect();
    let last = running_max.len() - 1;
    let doubling_max = [running_max[last / 4], running_max[last / 2], running_max[last]];
    Ok(DivergenceProbe { running_max, lil_scaled, doubling_max })
}

pub fn write_verification_csv<W: Write>(estimates: &[LimitEstimate], pass: &[bool], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["functional", "params", "closed_form", "estimate", "stderr", "horizon", "flag"])?;
    for (e, ok) in estimates.iter().zip(pass) {
        let flag = if e.short_horizon || !ok { "warn" } else { "pass" };
        w.write_record([
            e.id.kind.label().to_string(),
            e.id.params_label(),
            fmt_f64(e.closed_form),
            fmt_f64(e.estimate),
            fmt_f64(e.stderr),
            fmt_f64(e.horizon),
            flag.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
