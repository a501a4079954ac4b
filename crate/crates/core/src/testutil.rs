//! Shared fixtures for unit tests: a 3-bus chain feeder on a straight road,
//! hand-built scenarios, and always-on crews.

use std::collections::BTreeMap;

use crate::feeder::{parse_feeder, parse_roads, Crew, FeederModel, RoadGraph};
use crate::hazard::{CongestionProfile, HazardScenario, SCENARIO_VERSION};

/// a(root) - b(100 kW) - c(200 kW, critical); sites sit 7 and 14 km down a
/// straight road from the depot.
pub fn tiny_network() -> (FeederModel, RoadGraph) {
    let feeder = parse_feeder(
        "# stormcrew feeder v1\n\
         name tiny\n\
         root a\n\
         [buses]\n\
         a 0 0\n\
         b 100 0\n\
         c 200 1\n\
         [branches]\n\
         ab a b 1000 1 pole 7.0 0.0 pab\n\
         bc b c 500 1 pole 14.0 0.0 pbc\n\
         [switches]\n\
         [depots]\n\
         d1 q0\n",
        "tiny.grid",
    )
    .unwrap();
    let roads = parse_roads(
        "# stormcrew roads v1\n\
         [nodes]\n\
         q0 0.0 0.0\n\
         pab 7.0 0.0\n\
         pbc 14.0 0.0\n\
         [segments]\n\
         s0 q0 pab 7.0\n\
         s1 pab pbc 7.0\n",
        "tiny.road",
    )
    .unwrap();
    feeder.validate_road_refs(&roads).unwrap();
    (feeder, roads)
}

pub struct ScenarioSpec<'a> {
    pub initial: &'a [(&'a str, f64)],
    pub arrivals: &'a [(f64, &'a str, f64)],
    pub horizon_h: f64,
    pub rho: f64,
    pub closures: &'a [&'a str],
}

impl Default for ScenarioSpec<'_> {
    fn default() -> Self {
        ScenarioSpec {
            initial: &[],
            arrivals: &[],
            horizon_h: 72.0,
            rho: 1.0,
            closures: &[],
        }
    }
}

pub fn scenario_for(feeder: &FeederModel, spec: ScenarioSpec) -> HazardScenario {
    let mut repair_times = BTreeMap::new();
    let mut initial: Vec<String> = Vec::new();
    for (site, tau) in spec.initial {
        repair_times.insert(site.to_string(), *tau);
        initial.push(site.to_string());
    }
    initial.sort();
    let mut arrivals: Vec<(f64, String)> = Vec::new();
    for (t, site, tau) in spec.arrivals {
        repair_times.insert(site.to_string(), *tau);
        arrivals.push((*t, site.to_string()));
    }
    arrivals.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let s = HazardScenario {
        version: SCENARIO_VERSION,
        seed: 0,
        feeder: feeder.fingerprint(),
        config_hash: "test".into(),
        horizon_h: spec.horizon_h,
        initial_damage: initial,
        arrivals,
        repair_times,
        road_closures: spec.closures.iter().map(|s| s.to_string()).collect(),
        congestion: CongestionProfile {
            block_h: spec.horizon_h,
            lo: spec.rho.min(1.0),
            hi: spec.rho.max(2.0),
            factors: vec![spec.rho],
        },
    };
    s.validate().unwrap();
    s
}

/// A crew that never goes off duty within any test horizon.
pub fn always_on_crew(id: usize, speed_kmh: f64) -> Crew {
    Crew {
        id,
        home_depot: 0,
        speed_kmh,
        skills: None,
        shift_start_h: 0.0,
        shift_len_h: 100_000.0,
        break_len_h: 0.0,
    }
}
