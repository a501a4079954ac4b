//! Observed dispatcher state: per-component, per-crew, and global feature
//! blocks. Component-level quantities (marginal value, screens) are
//! computed on the dispatcher's knowledge grid (confirmed, unrepaired
//! damage); the global unserved figures are the measured truth.

use super::RestorationEnv;
use crate::feeder::{capacity_screen, energized_set, is_radial, travel_time, unserved_power};

#[derive(Debug, Clone)]
pub struct ComponentView {
    /// Branch index in the feeder.
    pub branch: usize,
    pub site_id: String,
    pub class: String,
    /// Known (remaining) repair duration, h.
    pub repair_h: f64,
    /// Access-aware travel time from each crew, h; infinite = unreachable.
    pub travel_h: Vec<f64>,
    /// Marginal restoration value: kW restored if repaired alone, divided
    /// by repair plus minimum travel time.
    pub value_kw_per_h: f64,
    /// kW restored if this component alone were repaired now.
    pub restored_kw: f64,
    /// Repairing it would re-energize a currently dark critical bus.
    pub restores_critical: bool,
    pub claimed_by: Option<usize>,
    pub repair_started: bool,
    /// Post-repair screens under normal switching.
    pub capacity_ok: bool,
    pub radial_ok: bool,
}

#[derive(Debug, Clone)]
pub struct CrewView {
    pub crew: usize,
    pub available: bool,
    pub on_duty: bool,
    pub x_km: f64,
    pub y_km: f64,
    pub node: usize,
    /// Time to reach `node` when mid-segment, else 0.
    pub node_offset_h: f64,
    pub remaining_shift_h: f64,
    pub speed_kmh: f64,
    pub current_target: Option<usize>,
    pub depot_reachable: bool,
}

#[derive(Debug, Clone)]
pub struct DispatchState {
    pub clock_h: f64,
    pub horizon_h: f64,
    pub time_of_day_h: f64,
    pub total_load_kw: f64,
    /// Measured unserved load (includes unconfirmed damage).
    pub total_unserved_kw: f64,
    pub critical_unserved_kw: f64,
    /// Confirmed-and-unrepaired branches, ascending branch index.
    pub components: Vec<ComponentView>,
    pub crews: Vec<CrewView>,
    /// Dispatcher's knowledge grid, per branch.
    pub damaged_known: Vec<bool>,
    pub rho_now: f64,
}

pub(super) fn build(env: &RestorationEnv) -> DispatchState {
    let feeder = &env.feeder;
    let switch = feeder.normal_switch_states();
    let damaged_known = env.known_damage();
    let known_energized = energized_set(feeder, &damaged_known, &switch);
    let (known_unserved, _) = unserved_power(feeder, &known_energized);
    let baseline_violations = capacity_screen(feeder, &damaged_known, &switch);
    let rho = env.rho_now();

    // One single-source shortest-path pass per crew from its virtual node.
    let crew_info: Vec<(usize, f64, Vec<f64>)> = (0..env.crews.len())
        .map(|k| {
            let (node, offset) = env.crew_position(k);
            let dist = env.roads.open_distances_from(node);
            (node, offset, dist)
        })
        .collect();

    let sites = env.confirmed_open_sites();
    let mut components = Vec::with_capacity(sites.len());
    for site in sites {
        let branch = &feeder.branches[site];
        let travel_h: Vec<f64> = crew_info
            .iter()
            .enumerate()
            .map(|(k, (_, offset, dist))| match env.site_road_node(site) {
                Some(n) if dist[n].is_finite() => {
                    offset + travel_time(dist[n], env.crews[k].speed_kmh, rho)
                }
                _ => f64::INFINITY,
            })
            .collect();

        // Hypothetical lone repair on the knowledge grid.
        let mut hypo = damaged_known.clone();
        hypo[site] = false;
        let hypo_energized = energized_set(feeder, &hypo, &switch);
        let (hypo_unserved, _) = unserved_power(feeder, &hypo_energized);
        let restored_kw = (known_unserved - hypo_unserved).max(0.0);
        let restores_critical = feeder
            .buses
            .iter()
            .enumerate()
            .any(|(b, bus)| bus.critical && !known_energized[b] && hypo_energized[b]);
        let hypo_violations = capacity_screen(feeder, &hypo, &switch);
        let capacity_ok = hypo_violations
            .iter()
            .all(|v| baseline_violations.contains(v));
        let radial_ok = is_radial(feeder, &hypo, &switch);

        let repair_h = env.remaining_repair_h(site);
        let min_travel = travel_h.iter().fold(f64::INFINITY, |a, b| a.min(*b));
        let denom = repair_h + if min_travel.is_finite() { min_travel } else { 1e6 };
        components.push(ComponentView {
            branch: site,
            site_id: branch.id.clone(),
            class: branch.class.clone(),
            repair_h,
            travel_h,
            value_kw_per_h: restored_kw / denom.max(1e-9),
            restored_kw,
            restores_critical,
            claimed_by: env.claims()[site],
            repair_started: env.repair_started(site),
            capacity_ok,
            radial_ok,
        });
    }

    let crews = (0..env.crews.len())
        .map(|k| {
            let (node, offset, dist) = &crew_info[k];
            let profile = &env.crews[k];
            let depot = env.depot_road_node(profile.home_depot);
            CrewView {
                crew: k,
                available: env.crew_available(k),
                on_duty: profile.on_shift(env.clock_h()) && !profile.on_break(env.clock_h()),
                x_km: env.roads.nodes[*node].x_km,
                y_km: env.roads.nodes[*node].y_km,
                node: *node,
                node_offset_h: *offset,
                remaining_shift_h: profile.remaining_shift_h(env.clock_h()),
                speed_kmh: profile.speed_kmh,
                current_target: env.current_target(k),
                depot_reachable: dist[depot].is_finite(),
            }
        })
        .collect();

    let (total_unserved_kw, critical_unserved_kw) = env.unserved_now();
    DispatchState {
        clock_h: env.clock_h(),
        horizon_h: env.horizon(),
        time_of_day_h: env.clock_h().rem_euclid(24.0),
        total_load_kw: feeder.total_load_kw(),
        total_unserved_kw,
        critical_unserved_kw,
        components,
        crews,
        damaged_known,
        rho_now: rho,
    }
}
