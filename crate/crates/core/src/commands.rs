//! The four command pipelines behind the CLI. Each echoes its effective
//! configuration and writes its tables into `outputs.dir`.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::asymptotics::{
    drift_limits_check, estimate_limit, filter_decay_fit, write_verification_csv, DecayFit, DriftLimits,
    LimitEstimate,
};
use crate::config::RunConfig;
use crate::equilibrium::{simulate_equilibrium_path, write_equilibrium_csv, AgentSpec};
use crate::error::{Error, Result};
use crate::filtering::{run_filters, write_filter_csv, AgentBeliefs};
use crate::paths::{fmt, simulate_market_path, write_path_csv};
use crate::selection::{
    effective_risk_aversion, extinction_slope, region_grid, survival_index, tolerance_weights_limit,
    write_extinction_csv, write_region_csv, ExtinctionSlope, RegionTable, SurvivalReport,
};

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

/// End-of-run diagnostics for one simulated path.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSummary {
    pub path_index: u64,
    pub final_shares: Vec<f64>,
    pub final_omega: Vec<f64>,
    pub extinction: Vec<ExtinctionSlope>,
    pub max_clearing_residual: f64,
    pub max_share_defect: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulateOutcome {
    pub report: SurvivalReport,
    pub paths: Vec<PathSummary>,
}

/// Simulates `n_paths` equilibrium paths and writes
/// `path_<i>.csv`, `filters_<i>.csv`, `equilibrium_<i>.csv`, `summary.csv`,
/// `extinction.csv` (two or more agents) and `survival.txt`.
pub fn cmd_simulate(cfg: &RunConfig) -> Result<SimulateOutcome> {
    cfg.validate_common()?;
    cfg.require_agents()?;
    let grid = cfg.path_grid()?;
    let report = SurvivalReport::new(&cfg.economy, &cfg.agents, cfg.survival.tolerance)?;
    let dir = cfg.outputs.dir.clone();
    cfg.echo()?;
    let kappas = report.kappa.clone();
    let gammas: Vec<f64> = cfg.agents.iter().map(|a| a.prefs.gamma).collect();
    let paths = (0..cfg.n_paths)
        .into_par_iter()
        .map(|i| -> Result<PathSummary> {
            let run = simulate_equilibrium_path(&cfg.economy, &cfg.agents, &grid.for_path(i))?;
            let stride = cfg.outputs.stride;
            if cfg.outputs.paths {
                write_path_csv(&run.path, stride, create(&dir, &format!("path_{i}.csv"))?)?;
            }
            if cfg.outputs.filters {
                write_filter_csv(&run.path, &run.filters, stride, create(&dir, &format!("filters_{i}.csv"))?)?;
            }
            if cfg.outputs.equilibrium {
                write_equilibrium_csv(&run.equilibrium, stride, create(&dir, &format!("equilibrium_{i}.csv"))?)?;
            }
            let eq = &run.equilibrium;
            let last = eq.times.len() - 1;
            let extinction = if eq.n_agents() >= 2 {
                extinction_slope(eq, &kappas, &gammas, cfg.survival.extinction_window)?
            } else {
                Vec::new()
            };
            Ok(PathSummary {
                path_index: i,
                final_shares: (0..eq.n_agents()).map(|a| eq.share(a, last)).collect(),
                final_omega: tolerance_weights_limit(eq, report.winner, 1.0)?.final_omega,
                extinction,
                max_clearing_residual: eq.max_abs_residual(),
                max_share_defect: eq.max_share_defect(),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut f = create(&dir, "survival.txt")?;
    writeln!(f, "{report}")?;
    f.flush()?;
    write_summary_csv(&paths, create(&dir, "summary.csv")?)?;
    if cfg.agents.len() >= 2 {
        let rows: Vec<(u64, ExtinctionSlope)> = paths
            .iter()
            .flat_map(|p| p.extinction.iter().map(move |s| (p.path_index, s.clone())))
            .collect();
        write_extinction_csv(&rows, create(&dir, "extinction.csv")?)?;
    }
    Ok(SimulateOutcome { report, paths })
}

fn write_summary_csv<W: Write>(paths: &[PathSummary], out: W) -> Result<()> {
    let n = paths.first().map_or(0, |p| p.final_shares.len());
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["path".to_string()];
    header.extend((0..n).map(|i| format!("share_{i}")));
    header.extend((0..n).map(|i| format!("omega_{i}")));
    header.push("max_clearing_residual".into());
    header.push("max_share_defect".into());
    w.write_record(&header)?;
    for p in paths {
        let mut row = vec![p.path_index.to_string()];
        row.extend(p.final_shares.iter().map(|v| fmt(*v)));
        row.extend(p.final_omega.iter().map(|v| fmt(*v)));
        row.push(fmt(p.max_clearing_residual));
        row.push(fmt(p.max_share_defect));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// One row of a habit-strength sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub agent: usize,
    pub beta: f64,
    pub effective_gamma: f64,
    pub kappa: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalOutcome {
    pub report: SurvivalReport,
    /// Sorted by effective risk aversion, then agent, then habit strength.
    pub sweep: Vec<SweepRow>,
}

/// Writes `survival.txt` and, with a habit sweep, `survival_sweep.csv`.
pub fn cmd_survival(cfg: &RunConfig) -> Result<SurvivalOutcome> {
    cfg.validate_common()?;
    cfg.require_agents()?;
    let report = SurvivalReport::new(&cfg.economy, &cfg.agents, cfg.survival.tolerance)?;
    let mut sweep = Vec::new();
    for (i, a) in cfg.agents.iter().enumerate() {
        for &beta in &cfg.survival.beta_sweep {
            let spec = AgentSpec {
                prefs: crate::equilibrium::AgentPrefs { beta, ..a.prefs },
                beliefs: a.beliefs,
            };
            sweep.push(SweepRow {
                agent: i,
                beta,
                effective_gamma: effective_risk_aversion(a.prefs.gamma, beta),
                kappa: survival_index(&cfg.economy, &spec)?,
            });
        }
    }
    sweep.sort_by(|x, y| {
        x.effective_gamma
            .total_cmp(&y.effective_gamma)
            .then(x.agent.cmp(&y.agent))
            .then(x.beta.total_cmp(&y.beta))
    });
    let dir = cfg.outputs.dir.clone();
    cfg.echo()?;
    let mut f = create(&dir, "survival.txt")?;
    writeln!(f, "{report}")?;
    f.flush()?;
    if !sweep.is_empty() {
        let mut w = csv::Writer::from_writer(create(&dir, "survival_sweep.csv")?);
        w.write_record(["agent", "beta", "effective_gamma", "kappa"])?;
        for r in &sweep {
            w.write_record([r.agent.to_string(), fmt(r.beta), fmt(r.effective_gamma), fmt(r.kappa)])?;
        }
        w.flush()?;
    }
    Ok(SurvivalOutcome { report, sweep })
}

/// Writes `region.csv`.
pub fn cmd_region(cfg: &RunConfig) -> Result<RegionTable> {
    cfg.validate_common()?;
    let table = region_grid(&cfg.region)?;
    cfg.echo()?;
    write_region_csv(&table, create(&cfg.outputs.dir, "region.csv")?)?;
    Ok(table)
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyOutcome {
    pub estimates: Vec<LimitEstimate>,
    pub pass: Vec<bool>,
    pub decay: Vec<DecayFit>,
    /// Present when the configuration lists agents.
    pub drift: Option<DriftLimits>,
}

impl VerifyOutcome {
    pub fn warnings(&self) -> usize {
        self.estimates
            .iter()
            .zip(&self.pass)
            .filter(|(e, ok)| e.short_horizon || !**ok)
            .count()
    }
}

/// Limit estimates pass when within three standard errors plus a 2% discretization allowance.
pub fn limit_within_tolerance(e: &LimitEstimate) -> bool {
    e.abs_error() <= 3.0 * e.stderr + 0.02 * e.closed_form.abs()
}

/// Writes `verification.csv`, `decay_rates.csv` and, with agents, `drift_limits.csv`.
pub fn cmd_verify_limits(cfg: &RunConfig) -> Result<VerifyOutcome> {
    cfg.validate_common()?;
    let grid = cfg.verify.grid(cfg.seed)?;
    let estimates = cfg
        .verify
        .functionals
        .iter()
        .map(|id| estimate_limit(id, &grid, cfg.verify.n_seeds))
        .collect::<Result<Vec<_>>>()?;
    let pass: Vec<bool> = estimates.iter().map(limit_within_tolerance).collect();

    let mut phis: Vec<f64> = cfg.agents.iter().map(|a| a.beliefs.phi).collect();
    phis.push(cfg.economy.phi);
    phis.sort_by(f64::total_cmp);
    phis.dedup();
    let decay = phis
        .iter()
        .map(|&p| filter_decay_fit(&cfg.economy, p))
        .collect::<Result<Vec<_>>>()?;

    let drift = if cfg.agents.is_empty() {
        None
    } else {
        let path = simulate_market_path(&cfg.economy, &cfg.path_grid()?)?;
        let beliefs: Vec<AgentBeliefs> = cfg.agents.iter().map(|a| a.beliefs).collect();
        let filters = run_filters(&cfg.economy, &beliefs, &path)?;
        Some(drift_limits_check(&cfg.economy, &cfg.agents, &path, &filters)?)
    };

    let dir = cfg.outputs.dir.clone();
    cfg.echo()?;
    write_verification_csv(&estimates, &pass, create(&dir, "verification.csv")?)?;
    write_decay_csv(&decay, create(&dir, "decay_rates.csv")?)?;
    if let Some(d) = &drift {
        write_drift_csv(d, create(&dir, "drift_limits.csv")?)?;
    }
    Ok(VerifyOutcome { estimates, pass, decay, drift })
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt).unwrap_or_default()
}

fn write_decay_csv<W: Write>(fits: &[DecayFit], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["phi_i", "theoretical", "variance_fit", "log_y_fit"])?;
    for f in fits {
        w.write_record([fmt(f.phi_i), fmt(f.theoretical), opt(f.variance_rate), opt(f.log_y_rate)])?;
    }
    w.flush()?;
    Ok(())
}

fn write_drift_csv<W: Write>(d: &DriftLimits, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["quantity", "agent", "estimate", "limit", "unshrunk_limit", "horizon"])?;
    let h = fmt(d.horizon);
    w.write_record(["x_rate", "", &fmt(d.x_rate), &fmt(d.x_rate_limit), "", &h])?;
    w.write_record(["mu_average", "", &fmt(d.mu_average), &fmt(d.mu_average_limit), "", &h])?;
    for r in &d.delta {
        w.write_record([
            "half_delta_sq",
            &r.agent.to_string(),
            &fmt(r.estimate),
            &fmt(r.stationary_limit),
            &fmt(r.unshrunk_limit),
            &h,
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Lists the regular files of an output directory in name order.
pub fn output_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file())
        .collect();
    files.sort();
    Ok(files)
}

/// Maps an error to the process exit code: 2 for configuration problems, 3 otherwise.
pub fn exit_code(e: &Error) -> i32 {
    if e.is_config() {
        2
    } else {
        3
    }
}
