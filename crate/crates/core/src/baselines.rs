//! Heuristic dispatchers and a short-horizon exact-search oracle. All of
//! them act through the same state/mask interfaces as the learned policy
//! and are deterministic given the state.

use crate::env::{CrewAction, DispatchState, JointAction, RestorationEnv};
use crate::error::{Error, Result};
use crate::feeder::mask::FeasibilityMask;

/// Tunables for the heuristic family.
#[derive(Debug, Clone)]
pub struct HeuristicConfig {
    /// Max repairs the exact oracle plans ahead.
    pub exact_depth: usize,
}

impl Default for HeuristicConfig {
    fn default() -> Self {
        HeuristicConfig { exact_depth: 4 }
    }
}

pub const ORACLE_MAX_TARGETS: usize = 6;
pub const ORACLE_MAX_CREWS: usize = 3;
pub const ORACLE_MAX_DEPTH: usize = 4;

/// Feasible for this crew and not claimed by another crew already.
fn pickable(state: &DispatchState, mask: &FeasibilityMask, crew: usize, slot: usize) -> bool {
    mask.rows[crew].allow[slot] && {
        let c = &state.components[slot];
        c.claimed_by.is_none() || c.claimed_by == Some(crew)
    }
}

/// Marginal value-per-time greedy: crews in ascending id each take the
/// feasible unclaimed component with the highest v_i; ties break toward
/// the lower branch index; holds when nothing is pickable.
pub fn greedy_value(state: &DispatchState, mask: &FeasibilityMask) -> JointAction {
    let mut entries = Vec::new();
    let mut claimed: Vec<usize> = Vec::new();
    for crew in state.crews.iter().filter(|c| c.available) {
        let k = crew.crew;
        let mut best: Option<(f64, usize)> = None;
        for (slot, comp) in state.components.iter().enumerate() {
            if claimed.contains(&slot) || !pickable(state, mask, k, slot) {
                continue;
            }
            let better = match best {
                None => true,
                Some((bv, bslot)) => {
                    comp.value_kw_per_h > bv
                        || (comp.value_kw_per_h == bv
                            && comp.branch < state.components[bslot].branch)
                }
            };
            if better {
                best = Some((comp.value_kw_per_h, slot));
            }
        }
        match best {
            Some((_, slot)) => {
                claimed.push(slot);
                entries.push((k, CrewAction::Assign(state.components[slot].branch)));
            }
            None => entries.push((k, CrewAction::Hold)),
        }
    }
    JointAction { entries }
}

/// Travel-aware variant: scores v_i / (1 + tau_{k->i}) per (crew, target)
/// pair and matches greedily by descending score.
pub fn travel_aware(state: &DispatchState, mask: &FeasibilityMask) -> JointAction {
    let avail: Vec<usize> = state
        .crews
        .iter()
        .filter(|c| c.available)
        .map(|c| c.crew)
        .collect();
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for &k in &avail {
        for (slot, comp) in state.components.iter().enumerate() {
            if !pickable(state, mask, k, slot) {
                continue;
            }
            let tau = comp.travel_h[k];
            if !tau.is_finite() {
                continue;
            }
            pairs.push((comp.value_kw_per_h / (1.0 + tau), k, slot));
        }
    }
    // Descending score; ties by crew id then branch index.
    pairs.sort_by(|a, b| {
        b.0.total_cmp(&a.0)
            .then(a.1.cmp(&b.1))
            .then(state.components[a.2].branch.cmp(&state.components[b.2].branch))
    });
    let mut chosen: Vec<(usize, CrewAction)> = Vec::new();
    let mut used_crew: Vec<usize> = Vec::new();
    let mut used_slot: Vec<usize> = Vec::new();
    for (_, k, slot) in pairs {
        if used_crew.contains(&k) || used_slot.contains(&slot) {
            continue;
        }
        used_crew.push(k);
        used_slot.push(slot);
        chosen.push((k, CrewAction::Assign(state.components[slot].branch)));
    }
    let mut entries = Vec::new();
    for &k in &avail {
        match chosen.iter().find(|(c, _)| *c == k) {
            Some((_, a)) => entries.push((k, *a)),
            None => entries.push((k, CrewAction::Hold)),
        }
    }
    JointAction { entries }
}

/// A candidate plan: (crew, branch) pairs executed as-soon-as-possible,
/// each crew taking its pairs in plan order.
type Plan = Vec<(usize, usize)>;

/// Exhaustive certainty-equivalent lookahead: enumerates every assignment
/// sequence of up to `depth` distinct repairs across the crews, simulates
/// each on an arrival-stripped clone, and returns the first joint action
/// of the ENS-minimizing plan (ties: travel, then lexicographic plan
/// order) along with its lookahead ENS.
pub fn exact_short_horizon(
    env: &RestorationEnv,
    state: &DispatchState,
    depth: usize,
) -> Result<(JointAction, f64)> {
    let targets: Vec<usize> = state.components.iter().map(|c| c.branch).collect();
    if targets.len() > ORACLE_MAX_TARGETS {
        return Err(Error::Contract(format!(
            "oracle refuses {} targets (cap {ORACLE_MAX_TARGETS})",
            targets.len()
        )));
    }
    if state.crews.len() > ORACLE_MAX_CREWS {
        return Err(Error::Contract(format!(
            "oracle refuses {} crews (cap {ORACLE_MAX_CREWS})",
            state.crews.len()
        )));
    }
    if depth > ORACLE_MAX_DEPTH {
        return Err(Error::Contract(format!(
            "oracle depth {depth} exceeds cap {ORACLE_MAX_DEPTH}"
        )));
    }
    let crews: Vec<usize> = state.crews.iter().map(|c| c.crew).collect();
    let m = depth.min(targets.len());
    let mut best: Option<(f64, f64, Plan, JointAction)> = None;
    if m == 0 {
        let (ens, travel, first) = simulate_plan(env, &Vec::new())?;
        best = Some((ens, travel, Vec::new(), first));
    } else {
        let mut seq: Vec<usize> = Vec::new();
        let mut used = vec![false; targets.len()];
        enumerate_orders(&targets, m, &mut seq, &mut used, &mut |order| {
            let mut crew_choice = vec![0usize; order.len()];
            assign_crews(env, &crews, order, &mut crew_choice, 0, &mut best);
        });
    }
    match best {
        Some((ens, _, _, action)) => Ok((action, ens)),
        None => Err(Error::Contract("oracle found no feasible plan".into())),
    }
}

fn enumerate_orders(
    targets: &[usize],
    m: usize,
    seq: &mut Vec<usize>,
    used: &mut [bool],
    f: &mut impl FnMut(&[usize]),
) {
    if seq.len() == m {
        f(seq);
        return;
    }
    for i in 0..targets.len() {
        if used[i] {
            continue;
        }
        used[i] = true;
        seq.push(targets[i]);
        enumerate_orders(targets, m, seq, used, f);
        seq.pop();
        used[i] = false;
    }
}

fn assign_crews(
    env: &RestorationEnv,
    crews: &[usize],
    order: &[usize],
    choice: &mut [usize],
    pos: usize,
    best: &mut Option<(f64, f64, Plan, JointAction)>,
) {
    if pos == order.len() {
        let plan: Plan = choice
            .iter()
            .zip(order)
            .map(|(k, t)| (crews[*k], *t))
            .collect();
        if let Ok((ens, travel, first)) = simulate_plan(env, &plan) {
            let better = match best {
                None => true,
                Some((be, bt, bp, _)) => {
                    ens < *be - 1e-12
                        || ((ens - *be).abs() <= 1e-12 && travel < *bt - 1e-12)
                        || ((ens - *be).abs() <= 1e-12
                            && (travel - *bt).abs() <= 1e-12
                            && plan < *bp)
                }
            };
            if better {
                *best = Some((ens, travel, plan, first));
            }
        }
        return;
    }
    for k in 0..crews.len() {
        choice[pos] = k;
        assign_crews(env, crews, order, choice, pos + 1, best);
    }
}

/// Runs a plan to completion on a cloned, arrival-stripped environment.
/// Returns (ENS, travel, the joint action committed at the first epoch).
fn simulate_plan(env: &RestorationEnv, plan: &Plan) -> Result<(f64, f64, JointAction)> {
    let mut sim = env.clone();
    sim.strip_future_arrivals();
    let mut queues: Vec<Vec<usize>> = vec![Vec::new(); sim.crews.len()];
    for (crew, site) in plan {
        queues[*crew].push(*site);
    }
    let mut first_action: Option<JointAction> = None;
    let mut state = sim.build_state();
    let mut guard = 0usize;
    while !sim.is_done() {
        guard += 1;
        if guard > 10_000 {
            return Err(Error::Numerical(
                "oracle simulation did not terminate".into(),
            ));
        }
        let mask = sim.build_mask(&state);
        let mut entries = Vec::new();
        let mut claimed_now: Vec<usize> = Vec::new();
        for crew in state.crews.iter().filter(|c| c.available) {
            let k = crew.crew;
            // Drop queued sites that are no longer on the slate (repaired).
            while let Some(site) = queues[k].first().copied() {
                if state.components.iter().any(|c| c.branch == site) {
                    break;
                }
                queues[k].remove(0);
            }
            let act = match queues[k].first().copied() {
                Some(site) => {
                    let slot = state.components.iter().position(|c| c.branch == site);
                    match slot {
                        Some(s)
                            if mask.rows[k].allow[s]
                                && !claimed_now.contains(&site)
                                && (state.components[s].claimed_by.is_none()
                                    || state.components[s].claimed_by == Some(k)) =>
                        {
                            claimed_now.push(site);
                            CrewAction::Assign(site)
                        }
                        _ => CrewAction::Hold, // retry at a later epoch
                    }
                }
                None => CrewAction::Hold,
            };
            entries.push((k, act));
        }
        let action = JointAction { entries };
        if first_action.is_none() {
            first_action = Some(action.clone());
        }
        let (s, _, done, _) = sim.step(&action)?;
        state = s;
        // Pop queue heads once the crew is actually committed to the site.
        for crew in 0..sim.crews.len() {
            if let Some(site) = sim.current_target(crew) {
                if queues[crew].first() == Some(&site) {
                    queues[crew].remove(0);
                }
            }
        }
        if done {
            break;
        }
    }
    let m = sim.metrics();
    Ok((m.ens_mwh, m.travel_km, first_action.unwrap_or_default()))
}
