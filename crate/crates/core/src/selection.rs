//! Survival indices and long-run selection diagnostics.
//!
//! The agent with the smallest survival index `kappa` ends up with all of aggregate
//! consumption. Every other agent's share decays at rate `(kappa_w - kappa_i) / gamma_i`.

use std::fmt;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::equilibrium::{AgentSpec, EquilibriumPath};
use crate::error::{Error, Result};
use crate::filtering::AgentBeliefs;
use crate::paths::{fmt as fmt_f64, EconomyParams};

/// Default absolute tolerance below which two survival indices count as tied.
pub const KAPPA_TIE_TOLERANCE: f64 = 1e-10;
/// Closed-form region classifications within this distance of a boundary are flagged.
pub const REGION_BOUNDARY_TOLERANCE: f64 = 1e-12;
/// Half-width of the band around the region boundary excluded from mismatch counts.
pub const REGION_BAND: f64 = 1e-3;

/// `gamma + (1 - gamma) beta`.
pub fn effective_risk_aversion(gamma: f64, beta: f64) -> f64 {
    gamma + (1.0 - gamma) * beta
}

/// The confidence term `(xi^2 + q (1 - phi phi_i)) / (2 sqrt(xi^2 + q (1 - phi_i^2)))`, `q = (sigma_mu / sigma_d)^2`.
pub fn confidence_term(params: &EconomyParams, phi_i: f64) -> f64 {
    let q = params.snr2();
    let xi2 = params.xi * params.xi;
    (xi2 + q * (1.0 - params.phi * phi_i)) / (2.0 * (xi2 + q * (1.0 - phi_i * phi_i)).sqrt())
}

pub fn survival_index(params: &EconomyParams, spec: &AgentSpec) -> Result<f64> {
    params.validate()?;
    spec.prefs.validate()?;
    spec.beliefs.validate()?;
    let p = &spec.prefs;
    let bias = (spec.beliefs.mu_bar - params.mu_bar) / params.sigma_d;
    Ok(p.rho
        + params.log_growth() * effective_risk_aversion(p.gamma, p.beta)
        + 0.5 * bias * bias
        + confidence_term(params, spec.beliefs.phi))
}

/// Index of the strict minimizer and the gap to the runner-up (`+inf` for one agent).
pub fn dominant_agent(kappas: &[f64], tolerance: f64) -> Result<(usize, f64)> {
    if kappas.is_empty() {
        return Err(Error::Input("no survival indices given".into()));
    }
    if kappas.iter().any(|k| !k.is_finite()) {
        return Err(Error::Input("survival indices must be finite".into()));
    }
    let winner = (0..kappas.len())
        .min_by(|&i, &j| kappas[i].total_cmp(&kappas[j]))
        .unwrap();
    let mut gap = f64::INFINITY;
    for (j, &k) in kappas.iter().enumerate() {
        if j == winner {
            continue;
        }
        let d = k - kappas[winner];
        if d <= tolerance {
            return Err(Error::Ambiguous {
                first: winner.min(j),
                second: winner.max(j),
                tolerance,
            });
        }
        gap = gap.min(d);
    }
    Ok((winner, gap))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalReport {
    pub kappa: Vec<f64>,
    pub winner: usize,
    pub gap: f64,
    pub effective_gamma: Vec<f64>,
}

impl SurvivalReport {
    pub fn new(params: &EconomyParams, agents: &[AgentSpec], tolerance: f64) -> Result<Self> {
        let kappa = agents
            .iter()
            .map(|a| survival_index(params, a))
            .collect::<Result<Vec<_>>>()?;
        let (winner, gap) = dominant_agent(&kappa, tolerance)?;
        let effective_gamma = agents
            .iter()
            .map(|a| effective_risk_aversion(a.prefs.gamma, a.prefs.beta))
            .collect();
        Ok(Self {
            kappa,
            winner,
            gap,
            effective_gamma,
        })
    }
}

impl fmt::Display for SurvivalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "agent,kappa,effective_gamma")?;
        for (i, (k, g)) in self.kappa.iter().zip(&self.effective_gamma).enumerate() {
            writeln!(f, "{i},{},{}", fmt_f64(*k), fmt_f64(*g))?;
        }
        writeln!(f, "winner = {}", self.winner)?;
        write!(f, "gap = {}", fmt_f64(self.gap))
    }
}

/// Long-run winner of a two-agent economy differing only in signal correlation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    Agent1,
    Agent2,
    Boundary,
}

impl Region {
    pub fn label(self) -> &'static str {
        match self {
            Region::Agent1 => "agent1",
            Region::Agent2 => "agent2",
            Region::Boundary => "boundary",
        }
    }
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

fn check_region_inputs(a: f64, phi: f64) -> Result<()> {
    if !(a.is_finite() && a > 0.0) {
        return Err(Error::config("region.a", "must be finite and > 0"));
    }
    if !(0.0..1.0).contains(&phi) {
        return Err(Error::config("region.phi", "must lie in [0, 1)"));
    }
    Ok(())
}

/// Below this `phi1` the over-confident agent 2 wins for every `phi2` in `[phi, 1)`.
pub fn region_phi1_threshold(a: f64, phi: f64) -> f64 {
    2.0 * a * phi * (1.0 + a) / (a * phi * phi + (a + 1.0 - phi).powi(2)) - 1.0
}

/// The `phi2` at which both agents tie, for `phi1` above the threshold.
pub fn region_phi2_boundary(a: f64, phi: f64, phi1: f64) -> f64 {
    let b = a + 1.0 + phi * phi;
    (2.0 * (a + 1.0) * phi - b * phi1) / (b - 2.0 * phi * phi1)
}

/// Closed-form winner for agents with correlations `phi1 <= phi <= phi2`,
/// where `a = (xi sigma_d / sigma_mu)^2`. Agents on the same side of `phi`
/// are ranked by `|phi_i - phi|`.
pub fn two_agent_correlation_region(a: f64, phi: f64, phi1: f64, phi2: f64) -> Result<Region> {
    check_region_inputs(a, phi)?;
    for (field, v) in [("region.phi1", phi1), ("region.phi2", phi2)] {
        if !(-1.0..1.0).contains(&v) {
            return Err(Error::config(field, "must lie in [-1, 1)"));
        }
    }
    let tol = REGION_BOUNDARY_TOLERANCE;
    if !(phi1 <= phi && phi <= phi2) {
        let (d1, d2) = ((phi1 - phi).abs(), (phi2 - phi).abs());
        return Ok(if (d1 - d2).abs() <= tol {
            Region::Boundary
        } else if d2 < d1 {
            Region::Agent2
        } else {
            Region::Agent1
        });
    }
    let t1 = region_phi1_threshold(a, phi);
    if (phi1 - t1).abs() <= tol {
        return Ok(Region::Boundary);
    }
    if phi1 < t1 {
        return Ok(Region::Agent2);
    }
    let t2 = region_phi2_boundary(a, phi, phi1);
    Ok(if (phi2 - t2).abs() <= tol {
        Region::Boundary
    } else if phi2 < t2 {
        Region::Agent2
    } else {
        Region::Agent1
    })
}

/// Rectangle of `(phi1, phi2)` sampled at `n1 x n2` cell centers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegionGridSpec {
    pub a: f64,
    pub phi: f64,
    pub phi1_range: (f64, f64),
    pub phi2_range: (f64, f64),
    pub n1: usize,
    pub n2: usize,
}

impl Default for RegionGridSpec {
    fn default() -> Self {
        Self {
            a: 1.0,
            phi: 0.5,
            phi1_range: (-1.0, 0.5),
            phi2_range: (0.5, 1.0),
            n1: 21,
            n2: 21,
        }
    }
}

impl RegionGridSpec {
    pub fn validate(&self) -> Result<()> {
        check_region_inputs(self.a, self.phi)?;
        if self.n1 == 0 || self.n2 == 0 {
            return Err(Error::config("region.n", "grid needs at least one cell per axis"));
        }
        let (l1, h1) = self.phi1_range;
        let (l2, h2) = self.phi2_range;
        if !(l1 < h1 && -1.0 <= l1 && h1 <= self.phi) {
            return Err(Error::config("region.phi1_range", "need -1 <= lo < hi <= phi"));
        }
        if !(l2 < h2 && self.phi <= l2 && h2 <= 1.0) {
            return Err(Error::config("region.phi2_range", "need phi <= lo < hi <= 1"));
        }
        Ok(())
    }

    /// Economy whose signal-to-noise ratio realizes `a`; other values only shift every `kappa` equally.
    pub fn economy(&self) -> EconomyParams {
        let base = EconomyParams::default();
        EconomyParams {
            phi: self.phi,
            sigma_mu: base.xi * base.sigma_d / self.a.sqrt(),
            ..base
        }
    }

    fn centers(range: (f64, f64), n: usize) -> Vec<f64> {
        let h = (range.1 - range.0) / n as f64;
        (0..n).map(|j| range.0 + (j as f64 + 0.5) * h).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegionCell {
    pub phi1: f64,
    pub phi2: f64,
    pub closed_form: Region,
    pub argmin: Region,
    pub kappa1: f64,
    pub kappa2: f64,
    /// Within the excluded band around the boundary.
    pub near_boundary: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegionTable {
    pub cells: Vec<RegionCell>,
    /// Disagreements outside the boundary band.
    pub mismatches: usize,
    /// Cells excluded from the comparison.
    pub excluded: usize,
}

fn argmin_region(k1: f64, k2: f64) -> Region {
    if (k1 - k2).abs() <= KAPPA_TIE_TOLERANCE {
        Region::Boundary
    } else if k2 < k1 {
        Region::Agent2
    } else {
        Region::Agent1
    }
}

/// Classifies each cell both by the closed form and by the survival-index argmin.
pub fn region_grid(spec: &RegionGridSpec) -> Result<RegionTable> {
    spec.validate()?;
    let params = spec.economy();
    let agent = |phi_i: f64| AgentSpec {
        prefs: crate::equilibrium::AgentPrefs { gamma: 2.0, rho: 0.02, beta: 0.0, c0: 0.5 },
        beliefs: AgentBeliefs { phi: phi_i, ..AgentBeliefs::rational(&params) },
    };
    let p1 = RegionGridSpec::centers(spec.phi1_range, spec.n1);
    let p2 = RegionGridSpec::centers(spec.phi2_range, spec.n2);
    let pairs: Vec<(f64, f64)> = p1.iter().flat_map(|&a| p2.iter().map(move |&b| (a, b))).collect();
    let cells = pairs
        .par_iter()
        .map(|&(phi1, phi2)| -> Result<RegionCell> {
            let closed_form = two_agent_correlation_region(spec.a, spec.phi, phi1, phi2)?;
            let kappa1 = survival_index(&params, &agent(phi1))?;
            let kappa2 = survival_index(&params, &agent(phi2))?;
            let mut near_boundary = closed_form == Region::Boundary || (phi1 == spec.phi && phi2 == spec.phi);
            for (d1, d2) in [(-1.0, -1.0), (-1.0, 0.0), (-1.0, 1.0), (0.0, -1.0), (0.0, 1.0), (1.0, -1.0), (1.0, 0.0), (1.0, 1.0)] {
                let q1 = (phi1 + d1 * REGION_BAND).clamp(-1.0, spec.phi);
                let q2 = (phi2 + d2 * REGION_BAND).clamp(spec.phi, 1.0 - f64::EPSILON);
                if two_agent_correlation_region(spec.a, spec.phi, q1, q2)? != closed_form {
                    near_boundary = true;
                }
            }
            Ok(RegionCell {
                phi1,
                phi2,
                closed_form,
                argmin: argmin_region(kappa1, kappa2),
                kappa1,
                kappa2,
                near_boundary,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let excluded = cells.iter().filter(|c| c.near_boundary).count();
    let mismatches = cells
        .iter()
        .filter(|c| !c.near_boundary && c.closed_form != c.argmin)
        .count();
    Ok(RegionTable { cells, mismatches, excluded })
}

pub fn write_region_csv<W: Write>(table: &RegionTable, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["phi1", "phi2", "winner_closed_form", "winner_argmin", "kappa1", "kappa2", "near_boundary"])?;
    for c in &table.cells {
        w.write_record([
            fmt_f64(c.phi1),
            fmt_f64(c.phi2),
            c.closed_form.label().to_string(),
            c.argmin.label().to_string(),
            fmt_f64(c.kappa1),
            fmt_f64(c.kappa2),
            c.near_boundary.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Empirical against theoretical decay rate of one agent's share relative to the winner.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtinctionSlope {
    pub agent: usize,
    pub empirical: f64,
    pub theoretical: f64,
    /// First and last time of the fitted window.
    pub window: (f64, f64),
    /// The window was cut short by an underflowed share.
    pub truncated: bool,
}

/// Least-squares slopes of `log(share_i / share_winner)` against `t` over the trailing
/// `window_fraction` of the run; theory is `(kappa_winner - kappa_i) / gamma_i`.
/// The winner is the first agent with the smallest `kappa`.
pub fn extinction_slope(
    eq: &EquilibriumPath,
    kappas: &[f64],
    gammas: &[f64],
    window_fraction: f64,
) -> Result<Vec<ExtinctionSlope>> {
    let n = eq.n_agents();
    if n < 2 || kappas.len() != n || gammas.len() != n {
        return Err(Error::Input("extinction slopes need >= 2 agents with one kappa and gamma each".into()));
    }
    if !(window_fraction > 0.0 && window_fraction <= 1.0) {
        return Err(Error::config("window_fraction", "must lie in (0, 1]"));
    }
    if kappas.iter().any(|k| !k.is_finite()) {
        return Err(Error::Input("survival indices must be finite".into()));
    }
    let winner = (0..n).min_by(|&i, &j| kappas[i].total_cmp(&kappas[j])).unwrap();
    let len = eq.times.len();
    let start = ((1.0 - window_fraction) * (len - 1) as f64).floor() as usize;
    let mut out = Vec::with_capacity(n - 1);
    for i in (0..n).filter(|&i| i != winner) {
        let mut end = len;
        for k in start..len {
            if !(eq.log_shares[i][k].is_finite() && eq.share(i, k) > 0.0) {
                end = k;
                break;
            }
        }
        let truncated = end < len;
        if truncated {
            log::warn!("share of agent {i} underflowed at t = {}; slope window truncated", eq.times[end]);
        }
        let t = &eq.times[start..end];
        let y: Vec<f64> = (start..end).map(|k| eq.log_shares[i][k] - eq.log_shares[winner][k]).collect();
        let empirical = crate::report::ols_slope(t, &y)?;
        out.push(ExtinctionSlope {
            agent: i,
            empirical,
            theoretical: (kappas[winner] - kappas[i]) / gammas[i],
            window: (t[0], t[t.len() - 1]),
            truncated,
        });
    }
    Ok(out)
}

/// One row per `(path index, slope)`.
pub fn write_extinction_csv<W: Write>(rows: &[(u64, ExtinctionSlope)], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["path", "agent", "empirical_slope", "theoretical_slope", "window_start", "window_end", "truncated"])?;
    for (path, s) in rows {
        w.write_record([
            path.to_string(),
            s.agent.to_string(),
            fmt_f64(s.empirical),
            fmt_f64(s.theoretical),
            fmt_f64(s.window.0),
            fmt_f64(s.window.1),
            s.truncated.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Risk-tolerance weights over the trailing part of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrailingWeights {
    pub winner: usize,
    /// `omega_i` at the final time.
    pub final_omega: Vec<f64>,
    /// Smallest winner weight over the trailing window.
    pub winner_min: f64,
}

pub fn tolerance_weights_limit(eq: &EquilibriumPath, winner: usize, window_fraction: f64) -> Result<TrailingWeights> {
    if winner >= eq.n_agents() {
        return Err(Error::Input(format!("winner {winner} out of range")));
    }
    let len = eq.times.len();
    let start = ((1.0 - window_fraction.clamp(0.0, 1.0)) * (len - 1) as f64).floor() as usize;
    Ok(TrailingWeights {
        winner,
        final_omega: eq.omega.iter().map(|w| w[len - 1]).collect(),
        winner_min: eq.omega[winner][start..].iter().copied().fold(f64::INFINITY, f64::min),
    })
}
