use super::*;
use crate::feeder::mask::BlockReason;
use crate::testutil::{always_on_crew, scenario_for, tiny_network, ScenarioSpec};

fn hold_all(state: &DispatchState) -> JointAction {
    JointAction {
        entries: state
            .crews
            .iter()
            .filter(|c| c.available)
            .map(|c| (c.crew, CrewAction::Hold))
            .collect(),
    }
}

#[test]
fn reset_empty_scenario() {
    let (feeder, roads) = tiny_network();
    let scenario = scenario_for(&feeder, ScenarioSpec::default());
    let crews = vec![always_on_crew(0, 14.0)];
    let (env, state) = RestorationEnv::reset(
        &scenario,
        &feeder,
        &roads,
        crews,
        RewardWeights::default(),
        EnvConfig::default(),
        1,
    )
    .unwrap();
    assert!(state.components.is_empty());
    assert_eq!(state.total_unserved_kw, 0.0);
    assert!(env.is_done(), "nothing unserved means nothing to do");
}

#[test]
fn reset_counts_initial_damage() {
    let (feeder, roads) = tiny_network();
    let scenario = scenario_for(
        &feeder,
        ScenarioSpec {
            initial: &[("ab", 2.0), ("bc", 1.0)],
            ..Default::default()
        },
    );
    let crews = vec![always_on_crew(0, 14.0)];
    let (_, state) = RestorationEnv::reset(
        &scenario,
        &feeder,
        &roads,
        crews,
        RewardWeights::default(),
        EnvConfig::default(),
        1,
    )
    .unwrap();
    assert_eq!(state.components.len(), 2);
    assert_eq!(state.total_unserved_kw, 300.0);
    assert_eq!(state.critical_unserved_kw, 200.0);
}

#[test]
fn reset_is_deterministic() {
    let (feeder, roads) = tiny_network();
    let scenario = scenario_for(
        &feeder,
        ScenarioSpec {
            initial: &[("ab", 2.0)],
            arrivals: &[(3.0, "bc", 1.5)],
            ..Default::default()
        },
    );
    let mk = || {
        let (_, s) = RestorationEnv::reset(
            &scenario,
            &feeder,
            &roads,
            vec![always_on_crew(0, 14.0)],
            RewardWeights::default(),
            EnvConfig::default(),
            7,
        )
        .unwrap();
        format!("{s:?}")
    };
    assert_eq!(mk(), mk());
}

#[test]
fn reset_rejects_feeder_mismatch() {
    let (feeder, roads) = tiny_network();
    let mut scenario = scenario_for(&feeder, ScenarioSpec::default());
    scenario.feeder = "someother:99b".into();
    let err = RestorationEnv::reset(
        &scenario,
        &feeder,
        &roads,
        vec![always_on_crew(0, 14.0)],
        RewardWeights::default(),
        EnvConfig::default(),
        1,
    );
    assert!(matches!(err, Err(crate::Error::Config(_))));
}

#[test]
fn hold_until_horizon_integrates_constant_ens() {
    let (feeder, roads) = tiny_network();
    // bc damaged and unconfirmed forever: 200 kW dark for 72 h = 14.4 MWh.
    let scenario = scenario_for(
        &feeder,
        ScenarioSpec {
            initial: &[("bc", 1.0)],
            ..Default::default()
        },
    );
    let (mut env, mut state) = RestorationEnv::reset(
        &scenario,
        &feeder,
        &roads,
        vec![always_on_crew(0, 14.0)],
        RewardWeights::default(),
        EnvConfig::default(),
        1,
    )
    .unwrap();
    let mut steps = 0;
    loop {
        // Ignore the damage: hold only.
        let (s, _r, done, _info) = env.step(&hold_all(&state)).unwrap();
        state = s;
        steps += 1;
        if done {
            break;
        }
        assert!(steps < 100, "episode must end at the horizon");
    }
    let m = env.finish_metrics();
    assert!((m.ens_mwh - 200.0 * 72.0 / 1000.0).abs() < 1e-9);
    assert_eq!(m.crit_censored, 1, "critical bus c never restored");
}

#[test]
fn single_repair_hand_traced_timeline() {
    let (feeder, roads) = tiny_network();
    // Crew speed 14 km/h, site 7 km away, rho=1: travel 0.5 h; repair 1 h.
    let scenario = scenario_for(
        &feeder,
        ScenarioSpec {
            initial: &[("ab", 1.0)],
            ..Default::default()
        },
    );
    let (mut env, state) = RestorationEnv::reset(
        &scenario,
        &feeder,
        &roads,
        vec![always_on_crew(0, 14.0)],
        RewardWeights::default(),
        EnvConfig {
            replan_period_h: 10.0,
            audit_mode: false,
        },
        1,
    )
    .unwrap();
    assert_eq!(state.total_unserved_kw, 300.0);
    let site = state.components[0].branch;
    assert!((state.components[0].travel_h[0] - 0.5).abs() < 1e-12);
    let action = JointAction {
        entries: vec![(0, CrewAction::Assign(site))],
    };
    let (state2, reward, done, info) = env.step(&action).unwrap();
    // Restoration at 0.5 + 1.0 = 1.5 h; the RepairEnd fires the replan.
    assert!((env.clock_h() - 1.5).abs() < 1e-12);
    assert!(done, "full feeder re-energized");
    assert_eq!(state2.total_unserved_kw, 0.0);
    assert_eq!(info.trigger, ReplanTrigger::RepairEnd);
    let m = env.finish_metrics();
    assert!((m.ens_mwh - 300.0 * 1.5 / 1000.0).abs() < 1e-9);
    assert!((m.travel_km - 7.0).abs() < 1e-9);
    // Reward: -alpha*ENS - beta*travel + kappa*crit (c restored at 1.5).
    let expect = -1.0 * 0.45 - 0.01 * 7.0 + 5.0 * 1.0;
    assert!((reward - expect).abs() < 1e-9, "reward {reward} vs {expect}");
}

#[test]
fn compute_reward_examples() {
    let w = RewardWeights {
        alpha: 1.0,
        beta: 0.0,
        gamma_idle: 0.0,
        eta: 0.0,
        kappa: 5.0,
    };
    let m = IntervalMetrics {
        ens_mwh: 2.0,
        crit_restored: 1,
        ..Default::default()
    };
    assert!((compute_reward(&m, &w) - 3.0).abs() < 1e-12);
    assert_eq!(compute_reward(&IntervalMetrics::default(), &w), 0.0);
    let zero = RewardWeights {
        alpha: 0.0,
        beta: 0.0,
        gamma_idle: 0.0,
        eta: 0.0,
        kappa: 0.0,
    };
    let busy = IntervalMetrics {
        ens_mwh: 9.0,
        travel_km: 4.0,
        idle_crew_h: 2.0,
        violations: 3,
        crit_restored: 2,
        elapsed_h: 1.0,
    };
    assert_eq!(compute_reward(&busy, &zero), 0.0);
}

#[test]
fn ticket_arrival_triggers_replan() {
    let (feeder, roads) = tiny_network();
    let scenario = scenario_for(
        &feeder,
        ScenarioSpec {
            initial: &[("ab", 5.0)],
            arrivals: &[(0.25, "bc", 1.0)],
            ..Default::default()
        },
    );
    let (mut env, state) = RestorationEnv::reset(
        &scenario,
        &feeder,
        &roads,
        vec![always_on_crew(0, 14.0)],
        RewardWeights::default(),
        EnvConfig::default(),
        1,
    )
    .unwrap();
    assert_eq!(state.components.len(), 1, "bc unconfirmed at reset");
    let (state2, _, _, info) = env.step(&hold_all(&state)).unwrap();
    assert_eq!(info.trigger, ReplanTrigger::Ticket);
    assert!((env.clock_h() - 0.25).abs() < 1e-12);
    assert_eq!(state2.components.len(), 2, "ticket joins the slate");
}

#[test]
fn travel_end_does_not_trigger_replan() {
    let (feeder, roads) = tiny_network();
    let scenario = scenario_for(
        &feeder,
        ScenarioSpec {
            initial: &[("ab", 3.0)],
            ..Default::default()
        },
    );
    let (mut env, state) = RestorationEnv::reset(
        &scenario,
        &feeder,
        &roads,
        vec![always_on_crew(0, 14.0)],
        RewardWeights::default(),
        EnvConfig {
            replan_period_h: 1.0,
            audit_mode: false,
        },
        1,
    )
    .unwrap();
    let site = state.components[0].branch;
    let (_, _, _, info) = env
        .step(&JointAction {
            entries: vec![(0, CrewAction::Assign(site))],
        })
        .unwrap();
    // Travel ends at 0.5 h silently; the periodic timer fires at 1.0 h.
    assert_eq!(info.trigger, ReplanTrigger::Periodic);
    assert!((env.clock_h() - 1.0).abs() < 1e-12);
}

#[test]
fn unserved_is_monotone_nonincreasing() {
    let (feeder, roads) = tiny_network();
    let scenario = scenario_for(
        &feeder,
        ScenarioSpec {
            initial: &[("ab", 2.0)],
            arrivals: &[(1.0, "bc", 1.5)],
            ..Default::default()
        },
    );
    let (mut env, mut state) = RestorationEnv::reset(
        &scenario,
        &feeder,
        &roads,
        vec![always_on_crew(0, 14.0), always_on_crew(1, 20.0)],
        RewardWeights::default(),
        EnvConfig::default(),
        1,
    )
    .unwrap();
    let mut prev = state.total_unserved_kw;
    for _ in 0..200 {
        // Greedy-ish: first available crew takes the first unclaimed target.
        let mask = env.build_mask(&state);
        let mut entries = Vec::new();
        let mut claimed: Vec<usize> = Vec::new();
        for crew in state.crews.iter().filter(|c| c.available) {
            let pick = mask
                .feasible_targets(crew.crew)
                .find(|slot| !claimed.contains(slot));
            match pick {
                Some(slot) => {
                    claimed.push(slot);
                    entries.push((crew.crew, CrewAction::Assign(state.components[slot].branch)));
                }
                None => entries.push((crew.crew, CrewAction::Hold)),
            }
        }
        let (s, _, done, _) = env.step(&JointAction { entries }).unwrap();
        assert!(s.total_unserved_kw <= prev + 1e-9);
        prev = s.total_unserved_kw;
        state = s;
        if done {
            break;
        }
    }
    assert!(env.is_done());
    assert_eq!(env.metrics().violation_count, 0);
}

#[test]
fn redirect_en_route_charges_partial_distance() {
    let (feeder, roads) = tiny_network();
    let scenario = scenario_for(
        &feeder,
        ScenarioSpec {
            initial: &[("ab", 1.0), ("bc", 1.0)],
            ..Default::default()
        },
    );
    let (mut env, state) = RestorationEnv::reset(
        &scenario,
        &feeder,
        &roads,
        vec![always_on_crew(0, 14.0)],
        RewardWeights::default(),
        EnvConfig::default(),
        1,
    )
    .unwrap();
    // Send the crew to the far site bc (14 km, 1 h).
    let bc = state
        .components
        .iter()
        .find(|c| c.site_id == "bc")
        .unwrap()
        .branch;
    let ab = state
        .components
        .iter()
        .find(|c| c.site_id == "ab")
        .unwrap()
        .branch;
    let (state2, _, _, _) = env
        .step(&JointAction {
            entries: vec![(0, CrewAction::Assign(bc))],
        })
        .unwrap();
    // Periodic replan at 1.0 h: crew happens to be arriving; but with
    // period 1.0 and travel 1.0 the event processes first. Use the state
    // as-is: redirect to ab.
    let (_, _, _, _) = env
        .step(&JointAction {
            entries: if state2.crews[0].available {
                vec![(0, CrewAction::Assign(ab))]
            } else {
                vec![]
            },
        })
        .unwrap();
    let mut state = env.build_state();
    let mut guard = 0;
    while !env.is_done() {
        let mask = env.build_mask(&state);
        let mut entries = Vec::new();
        let mut claimed = Vec::new();
        for crew in state.crews.iter().filter(|c| c.available) {
            match mask
                .feasible_targets(crew.crew)
                .find(|s| !claimed.contains(s))
            {
                Some(slot) => {
                    claimed.push(slot);
                    entries.push((crew.crew, CrewAction::Assign(state.components[slot].branch)));
                }
                None => entries.push((crew.crew, CrewAction::Hold)),
            }
        }
        let (s, _, _, _) = env.step(&JointAction { entries }).unwrap();
        state = s;
        guard += 1;
        assert!(guard < 300);
    }
    // Both sites repaired in the end; travel bounded by the road length
    // plus one backtrack.
    let m = env.finish_metrics();
    assert!(m.ens_mwh > 0.0);
    assert!(m.travel_km <= 14.0 + 14.0 + 1e-9, "travel {}", m.travel_km);
}

#[test]
fn duty_change_pauses_and_resumes_repair() {
    let (feeder, roads) = tiny_network();
    let scenario = scenario_for(
        &feeder,
        ScenarioSpec {
            initial: &[("ab", 4.0)],
            horizon_h: 72.0,
            ..Default::default()
        },
    );
    // 12-h shift starting at 0 with a half-hour break at hour 6: the
    // repair begun at 3.5 h pauses during [6.0, 6.5] and ends at 8.0.
    let crew = Crew {
        id: 0,
        home_depot: 0,
        speed_kmh: 2.0, // 3.5 h to the 7 km site
        skills: None,
        shift_start_h: 0.0,
        shift_len_h: 12.0,
        break_len_h: 0.5,
    };
    let (mut env, state) = RestorationEnv::reset(
        &scenario,
        &feeder,
        &roads,
        vec![crew],
        RewardWeights::default(),
        EnvConfig {
            replan_period_h: 100.0,
            audit_mode: false,
        },
        1,
    )
    .unwrap();
    let site = state.components[0].branch;
    let mut state = state;
    let mut restored_at = None;
    for _ in 0..50 {
        let entries = if state.crews[0].available {
            vec![(0, CrewAction::Assign(site))]
        } else {
            vec![]
        };
        let (s, _, done, _) = env.step(&JointAction { entries }).unwrap();
        state = s;
        if done {
            restored_at = Some(env.clock_h());
            break;
        }
    }
    let t = restored_at.expect("repair completes");
    assert!(
        (t - 8.0).abs() < 1e-9,
        "3.5 travel + 2.5 work + 0.5 break + 1.5 work = 8.0, got {t}"
    );
}

#[test]
fn infeasible_entry_rejected_by_default() {
    let (feeder, roads) = tiny_network();
    let scenario = scenario_for(
        &feeder,
        ScenarioSpec {
            initial: &[("ab", 2.0), ("bc", 2.0)],
            ..Default::default()
        },
    );
    let (mut env, state) = RestorationEnv::reset(
        &scenario,
        &feeder,
        &roads,
        vec![always_on_crew(0, 14.0), always_on_crew(1, 14.0)],
        RewardWeights::default(),
        EnvConfig::default(),
        1,
    )
    .unwrap();
    let ab = state.components[0].branch;
    // Crew 0 claims ab.
    env.step(&JointAction {
        entries: vec![(0, CrewAction::Assign(ab)), (1, CrewAction::Hold)],
    })
    .unwrap();
    // Crew 1 tries to grab the same claim: contract violation.
    let err = env.step(&JointAction {
        entries: vec![(1, CrewAction::Assign(ab))],
    });
    assert!(matches!(err, Err(crate::Error::Contract(_))), "{err:?}");
}

#[test]
fn audit_mode_counts_instead_of_erroring() {
    let (feeder, roads) = tiny_network();
    let scenario = scenario_for(
        &feeder,
        ScenarioSpec {
            initial: &[("ab", 2.0), ("bc", 2.0)],
            ..Default::default()
        },
    );
    let (mut env, state) = RestorationEnv::reset(
        &scenario,
        &feeder,
        &roads,
        vec![always_on_crew(0, 14.0), always_on_crew(1, 14.0)],
        RewardWeights::default(),
        EnvConfig {
            replan_period_h: 1.0,
            audit_mode: true,
        },
        1,
    )
    .unwrap();
    let ab = state.components[0].branch;
    env.step(&JointAction {
        entries: vec![(0, CrewAction::Assign(ab)), (1, CrewAction::Hold)],
    })
    .unwrap();
    let (_, reward, _, info) = env
        .step(&JointAction {
            entries: vec![(1, CrewAction::Assign(ab))],
        })
        .unwrap();
    assert_eq!(info.interval.violations, 1);
    assert_eq!(env.metrics().violation_count, 1);
    // eta = 100 dominates the gap reward.
    assert!(reward < -90.0);
}

#[test]
fn collision_within_joint_action_degrades_to_hold() {
    let (feeder, roads) = tiny_network();
    let scenario = scenario_for(
        &feeder,
        ScenarioSpec {
            initial: &[("ab", 2.0)],
            ..Default::default()
        },
    );
    let (mut env, state) = RestorationEnv::reset(
        &scenario,
        &feeder,
        &roads,
        vec![always_on_crew(0, 14.0), always_on_crew(1, 14.0)],
        RewardWeights::default(),
        EnvConfig::default(),
        1,
    )
    .unwrap();
    let ab = state.components[0].branch;
    let (_, _, _, info) = env
        .step(&JointAction {
            entries: vec![(0, CrewAction::Assign(ab)), (1, CrewAction::Assign(ab))],
        })
        .unwrap();
    assert_eq!(info.collisions, 1);
    assert_eq!(env.metrics().violation_count, 0, "collision is not a violation");
}

#[test]
fn trace_replay_matches_reported_ens() {
    let (feeder, roads) = tiny_network();
    let scenario = scenario_for(
        &feeder,
        ScenarioSpec {
            initial: &[("ab", 2.0)],
            arrivals: &[(2.0, "bc", 1.0)],
            ..Default::default()
        },
    );
    let (mut env, mut state) = RestorationEnv::reset(
        &scenario,
        &feeder,
        &roads,
        vec![always_on_crew(0, 14.0)],
        RewardWeights::default(),
        EnvConfig::default(),
        1,
    )
    .unwrap();
    env.enable_trace();
    let mut guard = 0;
    while !env.is_done() {
        let mask = env.build_mask(&state);
        let mut entries = Vec::new();
        for crew in state.crews.iter().filter(|c| c.available) {
            match mask.feasible_targets(crew.crew).next() {
                Some(slot) => {
                    entries.push((crew.crew, CrewAction::Assign(state.components[slot].branch)))
                }
                None => entries.push((crew.crew, CrewAction::Hold)),
            }
        }
        let (s, _, _, _) = env.step(&JointAction { entries }).unwrap();
        state = s;
        guard += 1;
        assert!(guard < 300);
    }
    let text = render_trace(&env.take_trace());
    let (integrated, reported) = parse_trace_ens(&text).unwrap();
    let rel = (integrated - reported).abs() / reported.max(1e-12);
    assert!(rel < 1e-9, "replay {integrated} vs reported {reported}");
    assert!((reported - env.metrics().ens_mwh).abs() < 1e-12);
}

#[test]
fn shift_rule_masks_far_targets() {
    let (feeder, roads) = tiny_network();
    let scenario = scenario_for(
        &feeder,
        ScenarioSpec {
            initial: &[("ab", 2.0)],
            ..Default::default()
        },
    );
    // 1 h of shift left at t=0 (shift began 11.5 h "ago" is impossible, so
    // use a short shift instead: 1.5 h with a 0.5 h break => 1 h of work).
    let crew = Crew {
        id: 0,
        home_depot: 0,
        speed_kmh: 14.0,
        skills: None,
        shift_start_h: 0.0,
        shift_len_h: 1.5,
        break_len_h: 0.5,
    };
    let (env, state) = RestorationEnv::reset(
        &scenario,
        &feeder,
        &roads,
        vec![crew],
        RewardWeights::default(),
        EnvConfig::default(),
        1,
    )
    .unwrap();
    // 0.5 h travel + 2 h repair > 1 h remaining: blocked with Shift.
    let mask = env.build_mask(&state);
    assert!(!mask.rows[0].allow[0]);
    assert_eq!(mask.rows[0].reasons[0], Some(BlockReason::Shift));
    assert!(mask.rows[0].allow[mask.hold_index()], "hold stays open");
}

#[test]
fn no_damage_means_hold_and_return_only() {
    let (feeder, roads) = tiny_network();
    let scenario = scenario_for(
        &feeder,
        ScenarioSpec {
            initial: &[("ab", 2.0)],
            arrivals: &[(5.0, "bc", 1.0)],
            ..Default::default()
        },
    );
    let (env, _) = RestorationEnv::reset(
        &scenario,
        &feeder,
        &roads,
        vec![always_on_crew(0, 14.0)],
        RewardWeights::default(),
        EnvConfig::default(),
        1,
    )
    .unwrap();
    // Manufacture a state with no confirmed components by repairing ab
    // conceptually: build from a fresh env with only the arrival pending.
    let scenario2 = scenario_for(
        &feeder,
        ScenarioSpec {
            arrivals: &[(5.0, "bc", 1.0)],
            ..Default::default()
        },
    );
    let (env2, state2) = RestorationEnv::reset(
        &scenario2,
        &feeder,
        &roads,
        vec![always_on_crew(0, 14.0)],
        RewardWeights::default(),
        EnvConfig::default(),
        1,
    )
    .unwrap();
    let mask = env2.build_mask(&state2);
    assert_eq!(mask.n_targets, 0);
    assert!(mask.rows[0].allow[mask.hold_index()]);
    assert!(mask.rows[0].allow[mask.return_index()]);
    drop(env);
}

#[test]
fn unreachable_site_is_masked() {
    let (feeder, roads) = tiny_network();
    // Close both road segments to pbc: bc unreachable.
    let scenario = scenario_for(
        &feeder,
        ScenarioSpec {
            initial: &[("bc", 1.0)],
            closures: &["s1"],
            ..Default::default()
        },
    );
    let (env, state) = RestorationEnv::reset(
        &scenario,
        &feeder,
        &roads,
        vec![always_on_crew(0, 14.0)],
        RewardWeights::default(),
        EnvConfig::default(),
        1,
    )
    .unwrap();
    let mask = env.build_mask(&state);
    assert!(!mask.rows[0].allow[0]);
    assert_eq!(mask.rows[0].reasons[0], Some(BlockReason::Unreachable));
    assert!(state.components[0].travel_h[0].is_infinite());
}
