use super::*;
use crate::feeder::load_network;
use crate::rng::substream;

fn params() -> HurricaneParams {
    HurricaneParams {
        delta_p_hpa: 50.0,
        r_m_km: 40.0,
        b_shape: 1.5,
        rho_air: 1.15,
        v_bg: 5.0,
        p_env_hpa: None,
        p_c_hpa: None,
    }
}

#[test]
fn wind_speed_at_radius_of_maximum_winds() {
    // At r = R_m the shape term is exp(-1):
    // sqrt(1.5 * 5000 / 1.15 * e^-1) + 5 = 53.9818...
    let v = wind_speed_at(&params(), 40.0).unwrap();
    assert!((v - 53.9818).abs() < 1e-3, "v = {v}");
}

#[test]
fn wind_speed_decays_to_background() {
    let v = wind_speed_at(&params(), 1.0e12).unwrap();
    assert!((v - 5.0).abs() < 1e-5);
}

#[test]
fn wind_speed_monotone_beyond_peak() {
    let p = params();
    let mut prev = wind_speed_at(&p, p.r_m_km).unwrap();
    let mut r = p.r_m_km;
    for _ in 0..200 {
        r += 2.0;
        let v = wind_speed_at(&p, r).unwrap();
        assert!(v <= prev + 1e-12, "wind must decay past R_m");
        prev = v;
    }
}

#[test]
fn wind_speed_rejects_bad_domain() {
    assert!(wind_speed_at(&params(), 0.0).is_err());
    assert!(wind_speed_at(&params(), -3.0).is_err());
    let mut bad = params();
    bad.b_shape = 5.0;
    assert!(wind_speed_at(&bad, 10.0).is_err());
}

#[test]
fn holland_b_formula_and_clamp() {
    assert!((holland_b_estimate(1008.0, 960.0).unwrap() - 1.7).abs() < 1e-12);
    assert!((holland_b_estimate(1120.0, 960.0).unwrap() - 1.0).abs() < 1e-12);
    // raw value 0.5 clamps to 1.0
    assert!((holland_b_estimate(1200.0, 960.0).unwrap() - 1.0).abs() < 1e-12);
    assert!(holland_b_estimate(950.0, 960.0).is_err());
}

#[test]
fn fragility_reference_points() {
    let curve = FragilityCurve::new("pole", 50.0, 0.3).unwrap();
    assert!((fragility_exceedance(50.0, &curve) - 0.5).abs() < 1e-12);
    // intensity = median * e^beta puts the argument at exactly 1 sigma.
    let p = fragility_exceedance(50.0 * (0.3f64).exp(), &curve);
    assert!((p - 0.841_344_746_068_542_9).abs() < 1e-9);
    assert_eq!(fragility_exceedance(0.0, &curve), 0.0);
}

#[test]
fn fragility_strictly_increasing() {
    let curve = FragilityCurve::new("pole", 40.0, 0.25).unwrap();
    let mut prev = fragility_exceedance(1.0, &curve);
    let mut v = 1.0;
    for _ in 0..100 {
        v += 1.7;
        let p = fragility_exceedance(v, &curve);
        assert!(p > prev);
        prev = p;
    }
}

#[test]
fn combine_hazards_examples_and_bounds() {
    assert!((combine_hazards(0.3, 0.2) - 0.44).abs() < 1e-15);
    assert_eq!(combine_hazards(0.37, 0.0), 0.37);
    assert_eq!(combine_hazards(1.0, 0.62), 1.0);
    for i in 0..=10 {
        for j in 0..=10 {
            let (p, q) = (i as f64 / 10.0, j as f64 / 10.0);
            let u = combine_hazards(p, q);
            assert!(u >= p.max(q) - 1e-15);
            assert!(u <= p + q + 1e-15);
        }
    }
}

fn site(id: &str, x: f64, y: f64) -> AssetSite {
    AssetSite {
        id: id.into(),
        x_km: x,
        y_km: y,
        component_class: "pole".into(),
        branch_id: id.into(),
    }
}

#[test]
fn flood_zero_variance_is_baseline() {
    let p = FloodFieldParams {
        baseline_m: 0.4,
        overrides: [("a".to_string(), 0.9)].into_iter().collect(),
        variance: 0.0,
        range_km: 5.0,
        jitter: 1e-10,
    };
    let sites = vec![site("a", 0.0, 0.0), site("b", 3.0, 1.0)];
    let mut rng = substream(1, 99);
    let d = sample_flood_depths(&p, &sites, &mut rng).unwrap();
    assert_eq!(d, vec![0.9, 0.4]);
}

#[test]
fn flood_colocated_sites_share_perturbation() {
    let p = FloodFieldParams {
        baseline_m: 0.4,
        overrides: BTreeMap::new(),
        variance: 0.3,
        range_km: 5.0,
        jitter: 1e-10,
    };
    let sites = vec![site("a", 2.0, 2.0), site("b", 2.0, 2.0), site("c", 9.0, 1.0)];
    let mut rng = substream(3, 99);
    for _ in 0..50 {
        let d = sample_flood_depths(&p, &sites, &mut rng).unwrap();
        assert_eq!(d[0], d[1], "identical locations, identical draw");
    }
}

#[test]
fn flood_single_site_variance_oracle() {
    // Monte Carlo: Var(D - baseline) should match sigma^2 within 5%.
    let p = FloodFieldParams {
        baseline_m: 5.0, // high enough that the zero floor never binds
        overrides: BTreeMap::new(),
        variance: 0.25,
        range_km: 5.0,
        jitter: 1e-10,
    };
    let sites = vec![site("a", 1.0, 1.0)];
    let mut rng = substream(11, 99);
    let n = 100_000;
    let mut sum = 0.0;
    let mut sumsq = 0.0;
    for _ in 0..n {
        let d = sample_flood_depths(&p, &sites, &mut rng).unwrap()[0] - 5.0;
        sum += d;
        sumsq += d * d;
    }
    let mean = sum / n as f64;
    let var = sumsq / n as f64 - mean * mean;
    assert!(
        (var - 0.25).abs() < 0.05 * 0.25,
        "sample variance {var} vs 0.25"
    );
}

#[test]
fn copula_degenerate_probabilities() {
    let locs = vec![(0.0, 0.0), (5.0, 5.0), (9.0, 0.0)];
    let mut rng = substream(5, 99);
    for _ in 0..200 {
        let all_zero = sample_correlated_failures(&[(0.0, 0.0); 3], &locs, 4.0, &mut rng).unwrap();
        assert!(all_zero.iter().all(|d| !d.failed));
        let all_one = sample_correlated_failures(&[(1.0, 0.0); 3], &locs, 4.0, &mut rng).unwrap();
        assert!(all_one.iter().all(|d| d.failed));
    }
}

#[test]
fn copula_combined_probability_invariant() {
    let locs = vec![(0.0, 0.0), (2.0, 1.0)];
    let mut rng = substream(6, 99);
    let draws =
        sample_correlated_failures(&[(0.3, 0.2), (0.7, 0.5)], &locs, 4.0, &mut rng).unwrap();
    for d in &draws {
        let expect = 1.0 - (1.0 - d.p_wind) * (1.0 - d.p_flood);
        assert!((d.p_combined - expect).abs() < 1e-12);
        assert_eq!(d.failed, d.u_uniform < d.p_combined);
    }
}

#[test]
fn copula_extremes_joint_failure_oracle() {
    // Co-located sites are comonotone: joint failure frequency ~ p.
    // Distant sites at vanishing range are nearly independent: ~ p^2.
    let n = 100_000;
    let p = [(0.5, 0.0), (0.5, 0.0)];
    let mut rng = substream(7, 99);
    let mut joint_close = 0usize;
    let mut joint_far = 0usize;
    let close = vec![(1.0, 1.0), (1.0, 1.0)];
    let far = vec![(0.0, 0.0), (500.0, 0.0)];
    for _ in 0..n {
        let d = sample_correlated_failures(&p, &close, 4.0, &mut rng).unwrap();
        if d[0].failed && d[1].failed {
            joint_close += 1;
        }
        let d = sample_correlated_failures(&p, &far, 1e-3, &mut rng).unwrap();
        if d[0].failed && d[1].failed {
            joint_far += 1;
        }
    }
    let f_close = joint_close as f64 / n as f64;
    let f_far = joint_far as f64 / n as f64;
    assert!((f_close - 0.5).abs() < 0.01, "comonotone joint {f_close}");
    assert!((f_far - 0.25).abs() < 0.01, "independent joint {f_far}");
}

#[test]
fn copula_marginals_preserved() {
    // Regardless of correlation length, per-site frequency matches p_i.
    let n = 100_000;
    let probs = [(0.15, 0.0), (0.0, 0.6), (0.3, 0.3)];
    let locs = vec![(0.0, 0.0), (1.0, 0.0), (0.5, 0.5)];
    let mut rng = substream(8, 99);
    let mut counts = [0usize; 3];
    for _ in 0..n {
        let d = sample_correlated_failures(&probs, &locs, 50.0, &mut rng).unwrap();
        for (c, di) in counts.iter_mut().zip(&d) {
            *c += di.failed as usize;
        }
    }
    let expect = [0.15, 0.6, 1.0 - 0.7 * 0.7];
    for (c, e) in counts.iter().zip(expect) {
        let f = *c as f64 / n as f64;
        assert!((f - e).abs() < 0.01, "marginal {f} vs {e}");
    }
}

fn discovery(breakpoints: Vec<(f64, f64)>) -> DiscoveryProcess {
    DiscoveryProcess {
        breakpoints,
        horizon_h: 72.0,
    }
}

#[test]
fn arrivals_zero_rate_zero_counts() {
    let proc = discovery(vec![(0.0, 0.0)]);
    let mut rng = substream(9, 99);
    for _ in 0..1000 {
        assert_eq!(sample_arrival_counts(&proc, 3.0, 0.5, &mut rng).unwrap(), 0);
    }
}

#[test]
fn arrivals_poisson_mean_oracle() {
    // lambda = 4/h over dt = 0.5 h: mean 2.0 within 2%.
    let proc = discovery(vec![(0.0, 4.0)]);
    let mut rng = substream(10, 99);
    let n = 100_000;
    let total: u64 = (0..n)
        .map(|_| sample_arrival_counts(&proc, 1.0, 0.5, &mut rng).unwrap())
        .sum();
    let mean = total as f64 / n as f64;
    assert!((mean - 2.0).abs() < 0.04, "sample mean {mean}");
}

#[test]
fn arrivals_cumulative_constant_rate() {
    // N(T) for constant lambda: mean lambda*T.
    let proc = discovery(vec![(0.0, 0.6)]);
    let mut rng = substream(12, 99);
    let n = 20_000;
    let mut total = 0usize;
    for _ in 0..n {
        total += proc.sample_event_times(&mut rng).len();
    }
    let mean = total as f64 / n as f64;
    let expect = 0.6 * 72.0;
    assert!(
        (mean - expect).abs() < 0.02 * expect,
        "mean {mean} vs {expect}"
    );
}

#[test]
fn arrivals_rejects_bad_intervals() {
    let proc = discovery(vec![(0.0, 1.0), (6.0, 2.0)]);
    let mut rng = substream(13, 99);
    assert!(sample_arrival_counts(&proc, 1.0, 0.0, &mut rng).is_err());
    assert!(sample_arrival_counts(&proc, 1.0, -0.5, &mut rng).is_err());
    // interval straddling the breakpoint at t=6
    assert!(sample_arrival_counts(&proc, 5.5, 1.0, &mut rng).is_err());
}

#[test]
fn nhpp_rate_lookup() {
    let proc = discovery(vec![(0.0, 1.5), (6.0, 0.8), (12.0, 0.2)]);
    assert_eq!(proc.rate_at(0.0), 1.5);
    assert_eq!(proc.rate_at(5.999), 1.5);
    assert_eq!(proc.rate_at(6.0), 0.8);
    assert_eq!(proc.rate_at(40.0), 0.2);
}

#[test]
fn repair_lognormal_median_oracle() {
    let prior = RepairPrior {
        component_class: "pole".into(),
        mu: (2.0f64).ln(),
        sigma: 0.5,
        truncation_h: f64::INFINITY,
    };
    let mut rng = substream(14, 99);
    let n = 100_000;
    let mut draws: Vec<f64> = (0..n)
        .map(|_| sample_repair_time(&prior, &mut rng).unwrap())
        .collect();
    draws.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let med = draws[n / 2];
    assert!((med - 2.0).abs() < 0.06, "sample median {med}");
}

#[test]
fn repair_degenerate_sigma() {
    let prior = RepairPrior {
        component_class: "pole".into(),
        mu: (2.0f64).ln(),
        sigma: 1e-9,
        truncation_h: f64::INFINITY,
    };
    let mut rng = substream(15, 99);
    let tau = sample_repair_time(&prior, &mut rng).unwrap();
    assert!((tau - 2.0).abs() < 1e-6);
}

#[test]
fn repair_truncation_respected() {
    let prior = RepairPrior {
        component_class: "pole".into(),
        mu: (2.0f64).ln(),
        sigma: 0.5,
        truncation_h: 12.0,
    };
    let mut rng = substream(16, 99);
    for _ in 0..100_000 {
        assert!(sample_repair_time(&prior, &mut rng).unwrap() <= 12.0);
    }
}

#[test]
fn repair_unsatisfiable_truncation_rejected() {
    let prior = RepairPrior {
        component_class: "pole".into(),
        mu: (2.0f64).ln(),
        sigma: 0.5,
        // 0.1% quantile is exp(ln 2 - 3.09*0.5) ~ 0.43 h
        truncation_h: 0.2,
    };
    match prior.validate() {
        Err(crate::Error::Config(_)) => {}
        other => panic!("expected Config error, got {other:?}"),
    }
}

// ---------------------------------------------------------------- scenarios

#[test]
fn scenario_seeded_determinism() {
    let (feeder, roads) = load_network("13bus").unwrap();
    let config = HazardConfig::load("13bus").unwrap();
    let a = generate_scenario(&config, &feeder, &roads, 42).unwrap();
    let b = generate_scenario(&config, &feeder, &roads, 42).unwrap();
    assert_eq!(a.to_json(), b.to_json(), "same seed, byte-identical");
    let c = generate_scenario(&config, &feeder, &roads, 43).unwrap();
    assert_ne!(a.to_json(), c.to_json(), "different seeds differ");
}

#[test]
fn scenario_null_when_fragility_unreachable() {
    let (feeder, roads) = load_network("13bus").unwrap();
    let mut text = String::from(include_str!("../../data/hazard13.toml"));
    // Medians far above any achievable intensity: nothing fails.
    for m in [
        "wind_median = 48.0",
        "wind_median = 52.0",
        "wind_median = 55.0",
        "wind_median = 85.0",
    ] {
        text = text.replace(m, "wind_median = 1e9");
    }
    for m in [
        "flood_median = 1.1",
        "flood_median = 1.0",
        "flood_median = 0.7",
        "flood_median = 0.9",
    ] {
        text = text.replace(m, "flood_median = 1e9");
    }
    let config = HazardConfig::from_toml(&text).unwrap();
    let s = generate_scenario(&config, &feeder, &roads, 7).unwrap();
    assert!(s.initial_damage.is_empty());
    assert!(s.arrivals.is_empty());
    assert!(s.repair_times.is_empty());
}

#[test]
fn scenario_initial_confirmation_split_oracle() {
    // With p_i = 1 everywhere, the damaged set is every site and the
    // initial-confirmation share should approach confirm_p = 0.4.
    let (feeder, roads) = load_network("13bus").unwrap();
    let mut text = String::from(include_str!("../../data/hazard13.toml"));
    for m in [
        "wind_median = 48.0",
        "wind_median = 52.0",
        "wind_median = 55.0",
    ] {
        text = text.replace(m, "wind_median = 1e-6");
    }
    let config = HazardConfig::from_toml(&text).unwrap();
    let sites = feeder.asset_sites().len() as f64;
    let mut share = 0.0;
    let seeds = 400;
    for seed in 0..seeds {
        let s = generate_scenario(&config, &feeder, &roads, seed).unwrap();
        assert_eq!(s.repair_times.len(), sites as usize, "every site damaged");
        share += s.initial_damage.len() as f64 / sites;
    }
    share /= seeds as f64;
    assert!((share - 0.4).abs() < 0.05, "confirmation share {share}");
}

#[test]
fn scenario_roundtrips_and_validates() {
    let (feeder, roads) = load_network("13bus").unwrap();
    let config = HazardConfig::load("13bus").unwrap();
    let s = generate_scenario(&config, &feeder, &roads, 99).unwrap();
    let back = HazardScenario::from_json(&s.to_json()).unwrap();
    assert_eq!(s.to_json(), back.to_json());
    for w in s.arrivals.windows(2) {
        assert!(w[0].0 <= w[1].0);
    }
    for (t, _) in &s.arrivals {
        assert!(*t <= s.horizon_h);
    }
    for rho in &s.congestion.factors {
        assert!(*rho >= 1.2 && *rho <= 2.0);
    }
}
