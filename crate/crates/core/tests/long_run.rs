use market_selection::asymptotics::{
    closed_form_limit, divergence_probe, estimate_limit, rate_gap_series, theta_gap_limit, theta_gap_limit_unshrunk,
    FunctionalId, Functional,
};
use market_selection::equilibrium::{simulate_equilibrium_path, AgentPrefs, AgentSpec};
use market_selection::filtering::AgentBeliefs;
use market_selection::report::mean_and_se;
use market_selection::selection::{
    extinction_slope, survival_index, tolerance_weights_limit, two_agent_correlation_region, Region,
    SurvivalReport, KAPPA_TIE_TOLERANCE,
};
use market_selection::{EconomyParams, PathGrid};

fn agent(gamma: f64, rho: f64, c0: f64, beliefs: AgentBeliefs) -> AgentSpec {
    AgentSpec { prefs: AgentPrefs { gamma, rho, beta: 0.0, c0 }, beliefs }
}

#[test]
fn identical_agents_have_flat_share_ratios() {
    let p = EconomyParams::default();
    let a = agent(2.0, 0.02, 0.5, AgentBeliefs::rational(&p));
    let run = simulate_equilibrium_path(&p, &[a, a], &PathGrid::new(0.01, 2000, 1, 0)).unwrap();
    let k = survival_index(&p, &a).unwrap();
    let s = extinction_slope(&run.equilibrium, &[k, k], &[2.0, 2.0], 0.5).unwrap();
    assert_eq!(s.len(), 1);
    assert_eq!(s[0].empirical, 0.0);
    assert_eq!(s[0].theoretical, 0.0);
}

#[test]
fn patience_gap_sets_extinction_rate() {
    let p = EconomyParams::default();
    let b = AgentBeliefs::rational(&p);
    let agents = [agent(2.0, 0.02, 0.5, b), agent(2.0, 0.07, 0.5, b)];
    let kappas: Vec<f64> = agents.iter().map(|a| survival_index(&p, a).unwrap()).collect();
    let slopes: Vec<f64> = (0..20)
        .map(|seed| {
            let run = simulate_equilibrium_path(&p, &agents, &PathGrid::with_horizon(0.01, 100.0, seed, 0)).unwrap();
            let eq = &run.equilibrium;
            let last = eq.times.len() - 1;
            // the winner's share tends to one, so its log share grows sublinearly
            assert!((eq.log_shares[0][last] / eq.times[last]).abs() < 0.01);
            extinction_slope(eq, &kappas, &[2.0, 2.0], 0.5).unwrap()[0].empirical
        })
        .collect();
    let (m, _) = mean_and_se(&slopes);
    assert!((m / -0.025 - 1.0).abs() < 0.15, "mean slope {m}");
}

#[test]
fn weights_follow_shares() {
    let p = EconomyParams::default();
    let b = AgentBeliefs::rational(&p);
    let single = simulate_equilibrium_path(&p, &[agent(3.0, 0.02, 1.0, b)], &PathGrid::new(0.01, 100, 0, 0)).unwrap();
    let w = tolerance_weights_limit(&single.equilibrium, 0, 1.0).unwrap();
    assert_eq!(w.final_omega, vec![1.0]);
    assert_eq!(w.winner_min, 1.0);

    let agents = [agent(1.0, 0.02, 0.5, b), agent(5.0, 0.02, 0.5, b)];
    let run = simulate_equilibrium_path(&p, &agents, &PathGrid::with_horizon(0.01, 400.0, 2, 0)).unwrap();
    let eq = &run.equilibrium;
    let bound = 0.01 * (1.0 / 5.0);
    let mut checked = 0;
    for k in 0..eq.times.len() {
        for i in 0..2 {
            if eq.share(i, k) < bound {
                assert!(eq.omega[i][k] < 0.01);
                checked += 1;
            }
        }
    }
    assert!(checked > 0);
}

#[test]
fn rate_gaps_vanish_for_single_and_identical_agents() {
    let p = EconomyParams::default();
    let a = agent(2.0, 0.02, 1.0, AgentBeliefs { mu_bar: 0.07, mu0: 0.0, phi: 0.1 });
    let run = simulate_equilibrium_path(&p, &[a], &PathGrid::new(0.01, 500, 3, 0)).unwrap();
    let g = rate_gap_series(&run.equilibrium, 0).unwrap();
    assert!(g.theta_gap.iter().chain(&g.r_gap).all(|v| *v == 0.0));
    let d = divergence_probe(&run.equilibrium, 0).unwrap();
    assert!(d.running_max.iter().all(|v| *v == 0.0));

    let half = AgentSpec { prefs: AgentPrefs { c0: 0.5, ..a.prefs }, ..a };
    let run = simulate_equilibrium_path(&p, &[half, half], &PathGrid::new(0.01, 500, 3, 0)).unwrap();
    let g = rate_gap_series(&run.equilibrium, 0).unwrap();
    assert!(g.theta_gap.iter().chain(&g.r_gap).all(|v| *v < 1e-14));
}

#[test]
fn rate_gaps_decay_with_selection() {
    let p = EconomyParams::default();
    let b = AgentBeliefs::rational(&p);
    let agents = [agent(2.0, 0.02, 0.5, b), agent(4.0, 0.08, 0.5, b)];
    let report = SurvivalReport::new(&p, &agents, KAPPA_TIE_TOLERANCE).unwrap();
    assert!(report.gap >= 0.05);
    let run = simulate_equilibrium_path(&p, &agents, &PathGrid::with_horizon(0.01, 300.0, 4, 0)).unwrap();
    let g = rate_gap_series(&run.equilibrium, report.winner).unwrap();
    assert!(report.winner == 0 && g.decayed(0.1), "{:?}", (g.theta_first_decile_median, g.theta_last_decile_median, g.r_first_decile_median, g.r_last_decile_median));
}

/// With equal correlation beliefs the two filters differ by a deterministic term that
/// relaxes at rate `xi + alpha2` to `xi (mu_bar_w - mu_bar_i) / (xi + alpha2)`.
#[test]
fn price_of_risk_gap_limit_with_equal_correlations() {
    let p = EconomyParams::default();
    let w = agent(2.0, 0.02, 0.5, AgentBeliefs { mu_bar: 0.06, ..AgentBeliefs::rational(&p) });
    let i = agent(3.0, 0.02, 0.5, AgentBeliefs { mu_bar: 0.03, ..AgentBeliefs::rational(&p) });
    let run = simulate_equilibrium_path(&p, &[w, i], &PathGrid::with_horizon(0.01, 60.0, 5, 0)).unwrap();
    let eq = &run.equilibrium;
    let last = eq.times.len() - 1;
    let gap = eq.theta_homog[0][last] - eq.theta_homog[1][last];
    let limit = theta_gap_limit(&p, &w, &i).unwrap();
    let unshrunk = theta_gap_limit_unshrunk(&p, &w, &i);
    assert!((gap - limit).abs() < 1e-6, "gap {gap} vs {limit}");
    assert!((gap - unshrunk).abs() > 0.05, "gap {gap} vs {unshrunk}");
}

#[test]
fn running_max_grows_when_confidence_differs() {
    let p = EconomyParams::default();
    let b = AgentBeliefs::rational(&p);
    let agents = [agent(2.0, 0.02, 0.5, b), agent(2.0, 0.02, 0.5, AgentBeliefs { phi: -0.5, ..b })];
    let report = SurvivalReport::new(&p, &agents, KAPPA_TIE_TOLERANCE).unwrap();
    assert_eq!(report.winner, 0);
    let mut grew = 0;
    for seed in 0..20 {
        let run = simulate_equilibrium_path(&p, &agents, &PathGrid::with_horizon(0.02, 4000.0, seed, 0)).unwrap();
        let d = divergence_probe(&run.equilibrium, 1).unwrap();
        let at = |t: f64| d.running_max[(t / 0.02).round() as usize];
        if at(4000.0) > at(1000.0) {
            grew += 1;
        }
        assert!(d.lil_scaled.last().unwrap().is_finite());
    }
    // a new record in [1000, 4000] has probability about 3/4 for a stationary gap
    assert!(grew >= 10, "running max grew in {grew} of 20 seeds");
}

#[test]
fn ergodic_averages_match_closed_forms() {
    let grid = PathGrid::new(0.01, 200_000, 42, 0);
    for (id, tol) in [
        (FunctionalId::new(Functional::XU, 1.0, 1.0, 0.5), 0.1),
        (FunctionalId::new(Functional::PProduct, 1.5, 2.0, 0.8), 0.1),
        (FunctionalId::new(Functional::USameDriver, 1.0, 0.5, 0.5), 0.1),
    ] {
        let e = estimate_limit(&id, &grid, 8).unwrap();
        assert!(e.rel_error() < tol, "{}: {} vs {}", id.kind, e.estimate, e.closed_form);
    }
    for kind in [Functional::XdB, Functional::UdB, Functional::UdW] {
        let e = estimate_limit(&FunctionalId::default_for(kind), &grid, 8).unwrap();
        assert!(e.abs_error() < 0.05, "{kind}: {}", e.estimate);
    }
}

#[test]
fn longer_horizons_move_estimates_toward_limits() {
    let configs = [
        FunctionalId::new(Functional::XSquare, 0.2, 1.0, 0.5),
        FunctionalId::new(Functional::XProduct, 0.2, 0.3, 0.5),
        FunctionalId::new(Functional::USquare, 0.3, 0.2, 0.5),
    ];
    let mut closer = 0;
    for id in configs {
        let cf = closed_form_limit(&id).unwrap();
        let short = estimate_limit(&id, &PathGrid::with_horizon(0.01, 25.0, 3, 0), 400).unwrap();
        let long = estimate_limit(&id, &PathGrid::with_horizon(0.01, 50.0, 3, 0), 400).unwrap();
        assert!(short.short_horizon && long.short_horizon);
        if (long.estimate - cf).abs() < (short.estimate - cf).abs() {
            closer += 1;
        }
    }
    assert!(closer >= 2, "{closer} of 3 moved toward the limit");
}

#[test]
fn region_winner_agrees_with_survival_ranking() {
    let a = 1.0;
    let phi = 0.5;
    let sigma_d = 0.2;
    let xi = 0.6;
    let p = EconomyParams { phi, xi, sigma_d, sigma_mu: xi * sigma_d / f64::sqrt(a), ..Default::default() };
    for (phi1, phi2) in [(-0.5, 0.7), (0.0, 0.95), (0.0, 0.8), (0.3, 0.9)] {
        let b = AgentBeliefs::rational(&p);
        let agents = [agent(2.0, 0.02, 0.5, AgentBeliefs { phi: phi1, ..b }), agent(2.0, 0.02, 0.5, AgentBeliefs { phi: phi2, ..b })];
        let report = SurvivalReport::new(&p, &agents, KAPPA_TIE_TOLERANCE).unwrap();
        let expected = match two_agent_correlation_region(a, phi, phi1, phi2).unwrap() {
            Region::Agent1 => 0,
            Region::Agent2 => 1,
            Region::Boundary => unreachable!(),
        };
        assert_eq!(report.winner, expected, "({phi1}, {phi2})");
    }
}
