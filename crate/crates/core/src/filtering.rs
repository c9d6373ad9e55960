//! Kalman-Bucy learning of the latent growth rate under subjective beliefs.
//!
//! Each agent filters `mu^D` from the dividend and the public signal while
//! believing its own long-run mean, starting value and signal correlation.
//! The posterior variance solves a scalar Riccati equation with closed form
//!
//! ```text
//! nu(t) = alpha2 sD^2 (1 - e^{-(alpha2 - alpha1) t}) / (1 - (alpha2 / alpha1) e^{-(alpha2 - alpha1) t})
//! ```
//!
//! written here in the decaying-exponential form so it saturates instead of overflowing.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::paths::{fmt, EconomyParams, MarketPath};

/// One agent's beliefs about the growth-rate model and the signal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentBeliefs {
    /// Believed long-run average growth rate.
    pub mu_bar: f64,
    /// Believed initial growth rate.
    pub mu0: f64,
    /// Believed correlation of the signal with the growth-rate shock, in `[-1, 1)`.
    pub phi: f64,
}

impl AgentBeliefs {
    /// The beliefs of the fictitious agent who knows the true model.
    pub fn rational(params: &EconomyParams) -> Self {
        Self {
            mu_bar: params.mu_bar,
            mu0: params.mu0,
            phi: params.phi,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_phi_i(self.phi)?;
        if !(self.mu_bar.is_finite() && self.mu0.is_finite()) {
            return Err(Error::config("beliefs", "mu_bar and mu0 must be finite"));
        }
        Ok(())
    }
}

fn check_phi_i(phi_i: f64) -> Result<()> {
    if !(-1.0..1.0).contains(&phi_i) {
        return Err(Error::config("beliefs.phi", "must lie in [-1, 1)"));
    }
    Ok(())
}

/// Roots of the Riccati characteristic polynomial `a^2 + 2 xi a - (sigma_mu/sigma_d)^2 (1 - phi_i^2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterCoeffs {
    pub alpha1: f64,
    pub alpha2: f64,
    /// Asymptotic posterior variance `alpha2 sigma_d^2`.
    pub nu_limit: f64,
}

impl FilterCoeffs {
    /// `alpha2 - alpha1`, the exponential rate at which the variance settles.
    pub fn spread(&self) -> f64 {
        self.alpha2 - self.alpha1
    }

    /// `alpha2 / alpha1`, which is `<= 0`.
    fn ratio(&self) -> f64 {
        self.alpha2 / self.alpha1
    }
}

pub fn alphas(params: &EconomyParams, phi_i: f64) -> Result<FilterCoeffs> {
    check_phi_i(phi_i)?;
    let root = (params.xi * params.xi + params.snr2() * (1.0 - phi_i * phi_i)).sqrt();
    let alpha2 = root - params.xi;
    let alpha1 = -root - params.xi;
    Ok(FilterCoeffs {
        alpha1,
        alpha2,
        nu_limit: alpha2 * params.sigma_d * params.sigma_d,
    })
}

/// Posterior variance `nu(t)` of the growth rate.
pub fn variance(coeffs: &FilterCoeffs, _params: &EconomyParams, t: f64) -> f64 {
    if coeffs.alpha2 == 0.0 || t <= 0.0 {
        return 0.0;
    }
    let e = (-coeffs.spread() * t).exp();
    if e == 0.0 {
        return coeffs.nu_limit;
    }
    coeffs.nu_limit * (-(-coeffs.spread() * t).exp_m1()) / (1.0 - coeffs.ratio() * e)
}

/// How `int_0^t nu(s) ds` is evaluated inside the y-factor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NuIntegral {
    /// Exact antiderivative of the rational-exponential variance.
    #[default]
    ClosedForm,
    /// Adaptive Simpson quadrature to relative tolerance `1e-10`.
    Quadrature,
}

/// `int_0^t nu(s) ds`.
pub fn integrated_variance(
    coeffs: &FilterCoeffs,
    params: &EconomyParams,
    t: f64,
    method: NuIntegral,
) -> f64 {
    if coeffs.alpha2 == 0.0 || t <= 0.0 {
        return 0.0;
    }
    match method {
        NuIntegral::ClosedForm => {
            // (1-E)/(1-cE) = 1 + (c-1) E/(1-cE), and int_0^t E/(1-cE) = (1/r) f(c, E(t))
            // with f(c, E) = (ln(1-cE) - ln(1-c)) / c = sum_n c^{n-1} (1-E^n)/n.
            let r = coeffs.spread();
            let c = coeffs.ratio();
            let e = (-r * t).exp();
            let f = log_ratio_over_c(c, e, (-r * t).exp_m1());
            coeffs.nu_limit * (t + (c - 1.0) / r * f)
        }
        NuIntegral::Quadrature => {
            let g = |s: f64| variance(coeffs, params, s);
            adaptive_simpson(&g, 0.0, t, 1e-10)
        }
    }
}

/// `(ln(1 - c e) - ln(1 - c)) / c` for `c <= 0`, stable as `c -> 0`.
/// `e_m1` is `e - 1` computed without cancellation.
fn log_ratio_over_c(c: f64, e: f64, e_m1: f64) -> f64 {
    if c.abs() < 1e-3 {
        let mut sum = -e_m1;
        let mut cp = 1.0;
        let mut ep = e;
        for n in 2..60 {
            cp *= c;
            ep *= e;
            let term = cp * (1.0 - ep) / n as f64;
            sum += term;
            if term.abs() < 1e-18 * sum.abs() {
                break;
            }
        }
        sum
    } else {
        ((-c * e).ln_1p() - (-c).ln_1p()) / c
    }
}

fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, rel_tol: f64) -> f64 {
    fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
        let m = 0.5 * (a + b);
        let fm = f(m);
        (m, fm, (b - a) / 6.0 * (fa + 4.0 * fm + fb))
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse<F: Fn(f64) -> f64>(
        f: &F,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        m: f64,
        fm: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let (lm, flm, left) = simpson(f, a, fa, m, fm);
        let (rm, frm, right) = simpson(f, m, fm, b, fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        recurse(f, a, fa, m, fm, lm, flm, left, 0.5 * tol, depth - 1)
            + recurse(f, m, fm, b, fb, rm, frm, right, 0.5 * tol, depth - 1)
    }
    let fa = f(a);
    let fb = f(b);
    let (m, fm, whole) = simpson(f, a, fa, b, fb);
    // scale the absolute tolerance by a crude magnitude estimate of the integral
    let scale = whole.abs().max(f64::MIN_POSITIVE);
    recurse(f, a, fa, b, fb, m, fm, whole, rel_tol * scale, 50)
}

/// `log y(t) = xi t + sigma_d^{-2} int_0^t nu`.
pub fn log_y_factor(coeffs: &FilterCoeffs, params: &EconomyParams, t: f64, method: NuIntegral) -> f64 {
    params.xi * t + integrated_variance(coeffs, params, t, method) / (params.sigma_d * params.sigma_d)
}

pub fn y_factor(coeffs: &FilterCoeffs, params: &EconomyParams, t: f64) -> f64 {
    log_y_factor(coeffs, params, t, NuIntegral::ClosedForm).exp()
}

/// `lim_{t -> inf} (log y(t) - (alpha2 + xi) t)` implied by the defining integral of `y`.
pub fn log_y_offset_limit(coeffs: &FilterCoeffs) -> f64 {
    if coeffs.alpha2 == 0.0 {
        return 0.0;
    }
    let r = coeffs.spread();
    let c = coeffs.ratio();
    let f = log_ratio_over_c(c, 0.0, -1.0);
    coeffs.alpha2 * (c - 1.0) / r * f
}

/// The same offset in the closed form quoted alongside the exponential estimates,
/// `-(alpha2/alpha1) e^{-alpha2/alpha1}`. Kept for comparison with [`log_y_offset_limit`].
pub fn log_y_offset_quoted(coeffs: &FilterCoeffs) -> f64 {
    let c = coeffs.ratio();
    -c * (-c).exp()
}

/// Euler scheme for the subjective growth-rate SDE
/// `dmu_i = -xi (mu_i - mu_bar_i) dt + (nu_i / sD^2)(dD/D - mu_i dt) + sigma_mu phi_i ds`,
/// with `dD/D` fed as the realized log-increment plus `sD^2 dt / 2`.
pub fn run_filter(params: &EconomyParams, beliefs: &AgentBeliefs, path: &MarketPath) -> Result<Vec<f64>> {
    beliefs.validate()?;
    check_path(path)?;
    let coeffs = alphas(params, beliefs.phi)?;
    let dt = path.dt;
    let s2 = params.sigma_d * params.sigma_d;
    let ito = 0.5 * s2 * dt;
    let signal_gain = params.sigma_mu * beliefs.phi;
    let mut mu = Vec::with_capacity(path.times.len());
    let mut m = beliefs.mu0;
    mu.push(m);
    for k in 0..path.n_steps() {
        let gain = variance(&coeffs, params, path.times[k]) / s2;
        let dd_over_d = path.dlog_d(k) + ito;
        m += -params.xi * (m - beliefs.mu_bar) * dt + gain * (dd_over_d - m * dt) + signal_gain * path.ds(k);
        mu.push(m);
    }
    Ok(mu)
}

fn check_path(path: &MarketPath) -> Result<()> {
    let n = path.n_steps();
    let ok = n >= 1
        && path.times.len() == n + 1
        && path.log_d.len() == n + 1
        && path.s.len() == n + 1
        && path.mu_d.len() == n + 1
        && path.dt > 0.0;
    if ok {
        Ok(())
    } else {
        Err(Error::Input("market path sequences do not match its grid".into()))
    }
}

/// `dW0[k] = dW1[k] - ((mu_0[k] - mu^D[k]) / sigma_d) dt`, the innovation of the rational filter.
pub fn rational_innovations(params: &EconomyParams, path: &MarketPath, mu_rational: &[f64]) -> Result<Vec<f64>> {
    if mu_rational.len() != path.times.len() {
        return Err(Error::Input("rational filter length does not match the path".into()));
    }
    Ok((0..path.n_steps())
        .map(|k| path.dw1[k] - (mu_rational[k] - path.mu_d[k]) / params.sigma_d * path.dt)
        .collect())
}

/// Estimation error `delta` against the rational agent and the belief density `Z`,
/// accumulated in log space as `sum delta dW0 - 1/2 sum delta^2 dt`.
pub fn error_and_density(
    sigma_d: f64,
    dt: f64,
    mu_i: &[f64],
    mu_rational: &[f64],
    dw0: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    if mu_i.len() != mu_rational.len() || dw0.len() + 1 != mu_i.len() {
        return Err(Error::Input("filter sequences are not on a common grid".into()));
    }
    let delta: Vec<f64> = mu_i.iter().zip(mu_rational).map(|(a, b)| (a - b) / sigma_d).collect();
    let mut log_z = Vec::with_capacity(delta.len());
    let mut lz = 0.0;
    log_z.push(lz);
    for (d, w) in delta.iter().zip(dw0) {
        lz += d * w - 0.5 * d * d * dt;
        log_z.push(lz);
    }
    Ok((delta, log_z))
}

/// One agent's filter output on a path.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterPath {
    pub beliefs: AgentBeliefs,
    /// Subjective growth-rate levels.
    pub mu: Vec<f64>,
    /// Estimation error relative to the rational agent.
    pub delta: Vec<f64>,
    /// `log Z`, the log belief density.
    pub log_z: Vec<f64>,
    /// Innovation increments; present only on the rational agent's record.
    pub dw0: Option<Vec<f64>>,
}

impl FilterPath {
    pub fn z(&self, k: usize) -> f64 {
        self.log_z[k].exp()
    }
}

/// Filters of the rational agent and every listed agent on one path.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterSet {
    pub rational: FilterPath,
    pub agents: Vec<FilterPath>,
}

impl FilterSet {
    pub fn dw0(&self) -> &[f64] {
        self.rational.dw0.as_deref().unwrap_or(&[])
    }
}

pub fn run_filters(params: &EconomyParams, beliefs: &[AgentBeliefs], path: &MarketPath) -> Result<FilterSet> {
    let rb = AgentBeliefs::rational(params);
    let mu0 = run_filter(params, &rb, path)?;
    let dw0 = rational_innovations(params, path, &mu0)?;
    let n = mu0.len();
    let rational = FilterPath {
        beliefs: rb,
        delta: vec![0.0; n],
        log_z: vec![0.0; n],
        mu: mu0,
        dw0: Some(dw0),
    };
    let agents = beliefs
        .iter()
        .map(|b| {
            // an agent holding the true beliefs reproduces the rational filter bit for bit
            let mu = if *b == rb { rational.mu.clone() } else { run_filter(params, b, path)? };
            let (delta, log_z) =
                error_and_density(params.sigma_d, path.dt, &mu, &rational.mu, rational.dw0.as_deref().unwrap())?;
            Ok(FilterPath {
                beliefs: *b,
                mu,
                delta,
                log_z,
                dw0: None,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FilterSet { rational, agents })
}

pub fn write_filter_csv<W: Write>(path: &MarketPath, filters: &FilterSet, stride: usize, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["time".to_string(), "mu_rational".to_string()];
    for i in 0..filters.agents.len() {
        header.push(format!("mu_{i}"));
    }
    for i in 0..filters.agents.len() {
        header.push(format!("delta_{i}"));
    }
    for i in 0..filters.agents.len() {
        header.push(format!("Z_{i}"));
    }
    w.write_record(&header)?;
    for k in crate::report::decimated_indices(path.times.len(), stride) {
        let mut row = vec![fmt(path.times[k]), fmt(filters.rational.mu[k])];
        row.extend(filters.agents.iter().map(|f| fmt(f.mu[k])));
        row.extend(filters.agents.iter().map(|f| fmt(f.delta[k])));
        row.extend(filters.agents.iter().map(|f| fmt(f.z(k))));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::paths::{simulate_market_path, PathGrid};
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn params() -> EconomyParams {
        // sigma_mu / sigma_d = 0.8
        EconomyParams {
            xi: 0.6,
            sigma_d: 0.2,
            sigma_mu: 0.16,
            ..EconomyParams::default()
        }
    }

    /// Classical RK4 on the Riccati ODE, independent of the closed form.
    fn riccati_rk4(p: &EconomyParams, phi_i: f64, t_end: f64, h: f64) -> Vec<(f64, f64)> {
        let q = p.sigma_mu * p.sigma_mu * (1.0 - phi_i * phi_i);
        let s2 = p.sigma_d * p.sigma_d;
        let f = |v: f64| -2.0 * p.xi * v + q - v * v / s2;
        let n = (t_end / h).round() as usize;
        let mut out = vec![(0.0, 0.0)];
        let mut v = 0.0;
        for k in 0..n {
            let k1 = f(v);
            let k2 = f(v + 0.5 * h * k1);
            let k3 = f(v + 0.5 * h * k2);
            let k4 = f(v + h * k3);
            v += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            out.push(((k + 1) as f64 * h, v));
        }
        out
    }

    #[test]
    fn alpha_hand_values() {
        let c = alphas(&params(), 0.0).unwrap();
        assert_relative_eq!(c.alpha2, 0.4, epsilon = 1e-14);
        assert_relative_eq!(c.alpha1, -1.6, epsilon = 1e-14);
        let c = alphas(&params(), -1.0).unwrap();
        assert_eq!(c.alpha2, 0.0);
        assert_relative_eq!(c.alpha1, -1.2, epsilon = 1e-15);
        let quiet = EconomyParams {
            sigma_mu: 0.0,
            ..params()
        };
        for phi in [-1.0, -0.3, 0.0, 0.7] {
            assert_eq!(alphas(&quiet, phi).unwrap().alpha2, 0.0);
        }
        assert!(alphas(&params(), 1.0).is_err());
        assert!(alphas(&params(), -1.01).is_err());
    }

    #[test]
    fn coefficient_invariants() {
        for phi in [-1.0, -0.5, 0.0, 0.5, 0.9] {
            let c = alphas(&params(), phi).unwrap();
            assert!(c.alpha2 >= 0.0 && c.alpha1 < 0.0);
            assert_abs_diff_eq!(c.spread(), 2.0 * (c.alpha2 + 0.6), epsilon = 1e-14);
        }
    }

    #[test]
    fn variance_endpoints() {
        let p = params();
        let c = alphas(&p, 0.0).unwrap();
        assert_eq!(variance(&c, &p, 0.0), 0.0);
        assert_relative_eq!(variance(&c, &p, 200.0), 0.016, epsilon = 1e-14);
        assert_eq!(variance(&c, &p, 1e6), c.nu_limit);
    }

    #[test]
    fn variance_matches_riccati_integration() {
        let p = params();
        for phi in [-1.0, -0.5, 0.0, 0.5, 0.9] {
            let c = alphas(&p, phi).unwrap();
            for (t, v) in riccati_rk4(&p, phi, 10.0, 1e-3) {
                assert_abs_diff_eq!(variance(&c, &p, t), v, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn variance_monotone_and_bounded() {
        let p = params();
        let c = alphas(&p, 0.3).unwrap();
        let mut prev = 0.0;
        for k in 0..2000 {
            let v = variance(&c, &p, k as f64 * 0.01);
            assert!(v >= prev && v <= c.nu_limit);
            prev = v;
        }
    }

    #[test]
    fn y_factor_basics() {
        let p = params();
        let c = alphas(&p, 0.2).unwrap();
        assert_eq!(y_factor(&c, &p, 0.0), 1.0);
        let quiet = EconomyParams {
            sigma_mu: 0.0,
            ..p
        };
        let cq = alphas(&quiet, 0.2).unwrap();
        for t in [0.5, 1.0, 7.0] {
            assert_relative_eq!(y_factor(&cq, &quiet, t), (0.6 * t).exp(), max_relative = 1e-15);
        }
    }

    #[test]
    fn closed_form_integral_matches_quadrature() {
        let p = params();
        for phi in [-0.999_999, -0.5, 0.0, 0.5, 0.9] {
            let c = alphas(&p, phi).unwrap();
            for t in [0.01, 0.3, 2.0, 10.0, 40.0] {
                let a = integrated_variance(&c, &p, t, NuIntegral::ClosedForm);
                let b = integrated_variance(&c, &p, t, NuIntegral::Quadrature);
                assert_relative_eq!(a, b, max_relative = 1e-9);
            }
        }
    }

    #[test]
    fn log_y_offset_converges() {
        let p = params();
        let c = alphas(&p, 0.0).unwrap();
        let lim = log_y_offset_limit(&c);
        let resid = |t: f64| log_y_factor(&c, &p, t, NuIntegral::ClosedForm) - (c.alpha2 + p.xi) * t - lim;
        assert!(resid(30.0).abs() < 1e-12);
        // the residual decays like e^{-2 (alpha2 + xi) t}
        let rate = -(resid(3.0).abs().ln() - resid(2.0).abs().ln());
        assert_relative_eq!(rate, 2.0 * (c.alpha2 + p.xi), max_relative = 0.05);
    }

    #[test]
    fn filter_stays_at_mean_without_noise() {
        let p = EconomyParams {
            sigma_mu: 0.0,
            mu0: 0.04,
            mu_bar: 0.04,
            ..params()
        };
        let path = simulate_market_path(&p, &PathGrid::new(0.01, 1000, 2, 0)).unwrap();
        let mu = run_filter(&p, &AgentBeliefs::rational(&p), &path).unwrap();
        assert!(mu.iter().all(|&m| m == 0.04));
        let dw0 = rational_innovations(&p, &path, &mu).unwrap();
        assert_eq!(dw0, path.dw1);
    }

    #[test]
    fn filter_is_affine_in_priors() {
        let p = params();
        let path = simulate_market_path(&p, &PathGrid::new(0.01, 500, 8, 0)).unwrap();
        let b1 = AgentBeliefs { mu_bar: 0.01, mu0: 0.2, phi: 0.3 };
        let b2 = AgentBeliefs { mu_bar: 0.09, mu0: -0.1, phi: 0.3 };
        let bm = AgentBeliefs {
            mu_bar: 0.5 * (b1.mu_bar + b2.mu_bar),
            mu0: 0.5 * (b1.mu0 + b2.mu0),
            phi: 0.3,
        };
        let m1 = run_filter(&p, &b1, &path).unwrap();
        let m2 = run_filter(&p, &b2, &path).unwrap();
        let mm = run_filter(&p, &bm, &path).unwrap();
        for k in 0..mm.len() {
            assert_abs_diff_eq!(mm[k], 0.5 * (m1[k] + m2[k]), epsilon = 1e-12);
        }
    }

    #[test]
    fn self_comparison_has_unit_density() {
        let p = params();
        let path = simulate_market_path(&p, &PathGrid::new(0.01, 300, 4, 0)).unwrap();
        let set = run_filters(&p, &[AgentBeliefs::rational(&p)], &path).unwrap();
        assert!(set.agents[0].delta.iter().all(|&d| d == 0.0));
        assert!(set.agents[0].log_z.iter().all(|&z| z == 0.0));
    }

    #[test]
    fn density_starts_at_one_and_stays_positive() {
        let p = params();
        let path = simulate_market_path(&p, &PathGrid::new(0.01, 2000, 4, 0)).unwrap();
        let b = AgentBeliefs { mu_bar: 0.3, mu0: -0.5, phi: -0.9 };
        let set = run_filters(&p, &[b], &path).unwrap();
        let f = &set.agents[0];
        assert_eq!(f.z(0), 1.0);
        assert_eq!(f.mu[0], -0.5);
        assert!((0..f.log_z.len()).all(|k| f.z(k) > 0.0));
    }

    #[test]
    fn rejects_mismatched_inputs() {
        assert!(error_and_density(0.2, 0.01, &[0.0, 1.0], &[0.0], &[0.1]).is_err());
        let p = params();
        let path = simulate_market_path(&p, &PathGrid::new(0.01, 10, 4, 0)).unwrap();
        assert!(rational_innovations(&p, &path, &[0.0; 3]).is_err());
        let mut bad = path.clone();
        bad.s.pop();
        assert!(run_filter(&p, &AgentBeliefs::rational(&p), &bad).is_err());
    }

    /// Left-point quadrature of the integral representation of the subjective growth rate.
    fn integral_representation(p: &EconomyParams, b: &AgentBeliefs, path: &MarketPath) -> Vec<f64> {
        let c = alphas(p, b.phi).unwrap();
        let s2 = p.sigma_d * p.sigma_d;
        let y = |t: f64| y_factor(&c, p, t);
        let mut i_y = 0.0;
        let mut i_d = 0.0;
        let mut i_s = 0.0;
        let mut out = vec![b.mu0];
        for k in 0..path.n_steps() {
            let t = path.times[k];
            let yk = y(t);
            i_y += yk * path.dt;
            let dd_over_d = path.d[k + 1] / path.d[k] - 1.0;
            i_d += variance(&c, p, t) * yk * dd_over_d;
            i_s += yk * path.ds(k);
            let yn = y(path.times[k + 1]);
            out.push((b.mu0 + p.xi * b.mu_bar * i_y + i_d / s2 + p.sigma_mu * b.phi * i_s) / yn);
        }
        out
    }

    #[test]
    fn sde_agrees_with_integral_representation() {
        let p = params();
        let b = AgentBeliefs { mu_bar: 0.03, mu0: 0.1, phi: 0.2 };
        let err = |dt: f64| {
            let path = simulate_market_path(&p, &PathGrid::with_horizon(dt, 5.0, 21, 0)).unwrap();
            let sde = run_filter(&p, &b, &path).unwrap();
            let rep = integral_representation(&p, &b, &path);
            sde.iter().zip(&rep).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
        };
        let coarse = err(0.01);
        let fine = err(0.001);
        assert!(coarse < 0.05, "coarse {coarse}");
        // dD/D and dlog D + sD^2 dt / 2 differ by sD^2 (dW^2 - dt) / 2 per step: half-order agreement
        assert!(fine < coarse / 2.0, "fine {fine} coarse {coarse}");
    }
}
