use market_selection::asymptotics::{drift_limits_check, half_delta_sq_limit, half_delta_sq_limit_unshrunk};
use market_selection::equilibrium::AgentSpec;
use market_selection::filtering::{alphas, rational_innovations, run_filter, run_filters, variance, AgentBeliefs};
use market_selection::paths::simulate_market_path;
use market_selection::report::mean_and_se;
use market_selection::{EconomyParams, PathGrid};

fn params() -> EconomyParams {
    EconomyParams::default()
}

#[test]
fn rational_filter_error_variance_matches_riccati_solution() {
    let p = params();
    let rational = AgentBeliefs::rational(&p);
    let c = alphas(&p, p.phi).unwrap();
    let (dt, n) = (0.01, 200);
    let mut sq = [Vec::new(), Vec::new()];
    for i in 0..1500 {
        let path = simulate_market_path(&p, &PathGrid::new(dt, n, 31, i)).unwrap();
        let mu = run_filter(&p, &rational, &path).unwrap();
        for (slot, k) in [(0, 50), (1, n)] {
            sq[slot].push((mu[k] - path.mu_d[k]).powi(2));
        }
    }
    for (slot, t) in [(0, 0.5), (1, 2.0)] {
        let (m, _) = mean_and_se(&sq[slot]);
        let nu = variance(&c, &p, t);
        assert!((m / nu - 1.0).abs() < 0.1, "t = {t}: mean squared error {m} vs variance {nu}");
    }
}

#[test]
fn innovations_are_brownian() {
    let p = params();
    let rational = AgentBeliefs::rational(&p);
    let (dt, n) = (0.01, 500);
    let horizon = dt * n as f64;
    let mut endpoints = Vec::new();
    for i in 0..1000 {
        let path = simulate_market_path(&p, &PathGrid::new(dt, n, 5, i)).unwrap();
        let mu = run_filter(&p, &rational, &path).unwrap();
        let dw0 = rational_innovations(&p, &path, &mu).unwrap();
        if i == 0 {
            let long = simulate_market_path(&p, &PathGrid::new(1e-3, 10_000, 5, 9999)).unwrap();
            let mu = run_filter(&p, &rational, &long).unwrap();
            let qv: f64 = rational_innovations(&p, &long, &mu).unwrap().iter().map(|d| d * d).sum();
            assert!((qv / long.horizon() - 1.0).abs() < 0.05, "quadratic variation {qv}");
        }
        endpoints.push(dw0.iter().sum::<f64>());
    }
    let (m, se) = mean_and_se(&endpoints);
    assert!(m.abs() < 3.0 * se, "mean W0(T) {m} with standard error {se}");
    let var = endpoints.iter().map(|v| v * v).sum::<f64>() / endpoints.len() as f64;
    assert!((var / horizon - 1.0).abs() < 0.15, "variance of W0(T) {var}");
}

#[test]
fn density_is_a_martingale() {
    let p = params();
    let beliefs = [AgentBeliefs { mu_bar: p.mu_bar + 0.02, mu0: p.mu0, phi: 0.3 }];
    let z: Vec<f64> = (0..3000)
        .map(|i| {
            let path = simulate_market_path(&p, &PathGrid::new(0.01, 100, 77, i)).unwrap();
            let f = run_filters(&p, &beliefs, &path).unwrap();
            f.agents[0].z(100)
        })
        .collect();
    let (m, se) = mean_and_se(&z);
    assert!((m - 1.0).abs() < 3.0 * se, "mean Z(1) {m} with standard error {se}");
}

/// The time average of `delta^2 / 2` for a biased agent follows the stationary filter mean,
/// which shrinks the bias by `xi / (xi + alpha2)`.
#[test]
fn biased_agent_delta_average() {
    let p = params();
    let spec = AgentSpec {
        beliefs: AgentBeliefs { mu_bar: p.mu_bar + 0.02, ..AgentBeliefs::rational(&p) },
        ..AgentSpec::rational(&p, 2.0, 0.02, 1.0)
    };
    let stationary = half_delta_sq_limit(&p, &spec).unwrap();
    let unshrunk = half_delta_sq_limit_unshrunk(&p, &spec);
    assert!((unshrunk - 0.005).abs() < 1e-15);
    let estimates: Vec<f64> = (0..20)
        .map(|seed| {
            let path = simulate_market_path(&p, &PathGrid::with_horizon(0.01, 2000.0, 400 + seed, 0)).unwrap();
            let filters = run_filters(&p, &[spec.beliefs], &path).unwrap();
            drift_limits_check(&p, &[spec], &path, &filters).unwrap().delta[0].estimate
        })
        .collect();
    let (m, _) = mean_and_se(&estimates);
    assert!((m / stationary - 1.0).abs() < 0.15, "estimate {m} vs stationary {stationary}");
    assert!((m / unshrunk - 1.0).abs() > 0.15, "estimate {m} unexpectedly near {unshrunk}");
}

#[test]
fn biased_agent_without_growth_noise_hits_unshrunk_limit() {
    let p = EconomyParams { sigma_mu: 0.0, ..params() };
    let spec = AgentSpec {
        beliefs: AgentBeliefs { mu_bar: p.mu_bar + 0.02, ..AgentBeliefs::rational(&p) },
        ..AgentSpec::rational(&p, 2.0, 0.02, 1.0)
    };
    let path = simulate_market_path(&p, &PathGrid::with_horizon(0.01, 2000.0, 3, 0)).unwrap();
    let filters = run_filters(&p, &[spec.beliefs], &path).unwrap();
    let d = drift_limits_check(&p, &[spec], &path, &filters).unwrap();
    assert!((d.delta[0].estimate / 0.005 - 1.0).abs() < 0.01, "{}", d.delta[0].estimate);
}

#[test]
fn rational_agent_reports_zero_discrepancy() {
    let p = params();
    let spec = AgentSpec::rational(&p, 3.0, 0.01, 1.0);
    let path = simulate_market_path(&p, &PathGrid::with_horizon(0.01, 50.0, 8, 0)).unwrap();
    let filters = run_filters(&p, &[spec.beliefs], &path).unwrap();
    let d = drift_limits_check(&p, &[spec], &path, &filters).unwrap();
    assert_eq!(d.delta[0].estimate, 0.0);
    assert_eq!(d.delta[0].stationary_limit, 0.0);
}

#[test]
fn long_run_averages_of_growth() {
    let p = EconomyParams { sigma_d: 0.2, mu_bar: 0.05, ..params() };
    let runs: Vec<(f64, f64)> = (0..400)
        .map(|i| {
            let path = simulate_market_path(&p, &PathGrid::with_horizon(0.01, 500.0, 61, i)).unwrap();
            let filters = run_filters(&p, &[], &path).unwrap();
            let d = drift_limits_check(&p, &[], &path, &filters).unwrap();
            (d.x_rate, d.mu_average)
        })
        .collect();
    let x: Vec<f64> = runs.iter().map(|r| r.0).collect();
    let mu: Vec<f64> = runs.iter().map(|r| r.1).collect();
    let (mx, sx) = mean_and_se(&x);
    let (mm, sm) = mean_and_se(&mu);
    assert!((mx / p.log_growth() - 1.0).abs() < 0.05, "x(T)/T mean {mx} (se {sx})");
    assert!((mm - p.mu_bar).abs() < 3.0 * sm, "growth average {mm} (se {sm})");
}
