//! Event-driven restoration environment.
//!
//! Physical damage exists from t=0; tickets only reveal it. The clock jumps
//! between events (ticket arrival, travel end, repair end, duty change) and
//! the dispatcher acts at replan epochs: after damage-revealing or
//! crew-freeing events, or on a periodic timer. Between events the unserved
//! load is constant, so ENS integrates exactly.
//!
//! Crews follow idle -> traveling -> repairing -> idle, with duty-change
//! events pausing work for breaks and shift ends. Travel legs freeze the
//! congestion factor at dispatch; en-route crews may be redirected at any
//! replan and resume from the next road node on their path.

mod state;
mod trace;

pub use state::{ComponentView, CrewView, DispatchState};
pub use trace::{parse_trace_ens, render_trace, TraceRow, TRACE_HEADER};

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feeder::mask::{build_mask, BlockReason, FeasibilityMask};
use crate::feeder::{
    energized_set, travel_time, unserved_power, Crew, FeederModel, RoadGraph,
};
use crate::hazard::{CongestionProfile, HazardScenario};

/// Discrete event kinds. Site/crew references are indices into the feeder's
/// branch list and the crew roster.
#[derive(Debug, Clone, PartialEq)]
pub enum EventKind {
    TicketArrival { site: usize },
    TravelEnd { crew: usize, gen: u64 },
    RepairEnd { crew: usize, site: usize, gen: u64 },
    DutyChange { crew: usize },
}

#[derive(Debug, Clone)]
pub struct Event {
    pub time: f64,
    pub seq: u64,
    pub kind: EventKind,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.time == other.time && self.seq == other.seq
    }
}
impl Eq for Event {}
impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Event {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.time
            .total_cmp(&other.time)
            .then(self.seq.cmp(&other.seq))
    }
}

/// Per-crew decision: a repair target, hold in place, or return to depot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CrewAction {
    Assign(usize),
    Hold,
    Return,
}

/// Joint action: one entry per available crew.
#[derive(Debug, Clone, Default)]
pub struct JointAction {
    pub entries: Vec<(usize, CrewAction)>,
}

/// Dense reward coefficients.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardWeights {
    /// per MWh of energy not supplied
    pub alpha: f64,
    /// per km of crew travel
    pub beta: f64,
    /// per crew-idle-hour
    pub gamma_idle: f64,
    /// per feasibility violation (audit mode only)
    pub eta: f64,
    /// per critical load restored
    pub kappa: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        RewardWeights {
            alpha: 1.0,
            beta: 0.01,
            gamma_idle: 0.05,
            eta: 100.0,
            kappa: 5.0,
        }
    }
}

impl RewardWeights {
    pub fn validate(&self) -> Result<()> {
        if self.alpha < 0.0
            || self.beta < 0.0
            || self.gamma_idle < 0.0
            || self.eta < 0.0
            || self.kappa < 0.0
        {
            return Err(Error::Config("reward weights must be >= 0".into()));
        }
        Ok(())
    }
}

/// Accumulated quantities over one decision gap.
#[derive(Debug, Clone, Default)]
pub struct IntervalMetrics {
    pub elapsed_h: f64,
    pub ens_mwh: f64,
    pub travel_km: f64,
    pub idle_crew_h: f64,
    pub violations: usize,
    pub crit_restored: usize,
}

/// Signed sum of the dense reward for one decision gap.
pub fn compute_reward(m: &IntervalMetrics, w: &RewardWeights) -> f64 {
    -w.alpha * m.ens_mwh - w.beta * m.travel_km - w.gamma_idle * m.idle_crew_h
        - w.eta * m.violations as f64
        + w.kappa * m.crit_restored as f64
}

#[derive(Debug, Clone)]
pub struct StepInfo {
    pub interval: IntervalMetrics,
    pub events_processed: usize,
    pub trigger: ReplanTrigger,
    pub collisions: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReplanTrigger {
    Ticket,
    RepairEnd,
    DutyChange,
    Periodic,
    Done,
}

/// End-of-episode aggregates.
#[derive(Debug, Clone, Default)]
pub struct EpisodeMetrics {
    pub ens_mwh: f64,
    /// (bus id, minutes to first restoration) for critical buses dark at t=0;
    /// buses never restored are censored at the horizon.
    pub crit_restoration_min: Vec<(String, f64)>,
    pub crit_censored: usize,
    pub travel_km: f64,
    pub replan_count: usize,
    pub violation_count: usize,
    /// wall-clock per replan decision (ms), filled by the caller
    pub decision_ms: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvConfig {
    pub replan_period_h: f64,
    /// When set, infeasible action entries execute (or degrade to hold)
    /// and count toward Viol_t instead of erroring.
    pub audit_mode: bool,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            replan_period_h: 1.0,
            audit_mode: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TravelTarget {
    Site(usize),
    Depot(usize),
    /// Abort point: finish the current road segment, then idle.
    Halt,
}

#[derive(Debug, Clone)]
pub struct TravelLeg {
    pub target: TravelTarget,
    /// Road nodes from origin to destination inclusive.
    path: Vec<usize>,
    /// Cumulative km along `path`.
    cum: Vec<f64>,
    depart: f64,
    pub arrive: f64,
    /// km/h after congestion inflation (frozen at dispatch).
    v_eff: f64,
    gen: u64,
}

impl TravelLeg {
    /// (next node index in path, node id, time offset to reach it, km covered)
    fn position(&self, t: f64) -> (usize, usize, f64, f64) {
        let total = *self.cum.last().unwrap();
        let covered = ((t - self.depart) * self.v_eff).clamp(0.0, total);
        // First path index whose cumulative distance is >= covered.
        let mut i = 0;
        while i + 1 < self.cum.len() && self.cum[i] < covered {
            i += 1;
        }
        // Arrival instant at path[i]; covers queries before departure too.
        let arrival_at_i = self.depart + self.cum[i] / self.v_eff;
        ((i), self.path[i], (arrival_at_i - t).max(0.0), covered)
    }
}

#[derive(Debug, Clone)]
enum CrewActivity {
    Idle,
    Traveling(TravelLeg),
    Repairing { site: usize, end: f64, gen: u64 },
}

#[derive(Debug, Clone)]
struct CrewState {
    activity: CrewActivity,
    /// Road node where the crew is (or last was before traveling).
    node: usize,
    gen: u64,
}

/// The simulator. Cloneable so search baselines can roll out hypotheticals.
#[derive(Clone)]
pub struct RestorationEnv {
    pub feeder: FeederModel,
    pub roads: RoadGraph,
    pub crews: Vec<Crew>,
    pub weights: RewardWeights,
    pub cfg: EnvConfig,
    horizon_h: f64,
    congestion: CongestionProfile,
    seed: u64,

    clock: f64,
    damaged_physical: Vec<bool>,
    confirmed: Vec<bool>,
    repaired: Vec<bool>,
    /// site -> crew holding the (exclusive) assignment
    claims: Vec<Option<usize>>,
    remaining_repair: Vec<f64>,
    crew_states: Vec<CrewState>,
    queue: BinaryHeap<Reverse<Event>>,
    seq: u64,
    last_replan: f64,
    energized: Vec<bool>,
    unserved_kw: f64,
    crit_unserved_kw: f64,
    crit_restored_at: Vec<Option<f64>>,
    crit_dark_from_start: Vec<bool>,
    metrics: EpisodeMetrics,
    done: bool,
    trace: Option<Vec<TraceRow>>,
    site_node: Vec<Option<usize>>,
    depot_node: Vec<usize>,
}

impl RestorationEnv {
    /// Builds the episode state from a scenario: closures applied to the
    /// road graph, crews idle at depots, event queue seeded with every
    /// ticket arrival and each crew's first duty change.
    pub fn reset(
        scenario: &HazardScenario,
        feeder: &FeederModel,
        roads: &RoadGraph,
        crews: Vec<Crew>,
        weights: RewardWeights,
        cfg: EnvConfig,
        seed: u64,
    ) -> Result<(Self, DispatchState)> {
        weights.validate()?;
        if scenario.feeder != feeder.fingerprint() {
            return Err(Error::Config(format!(
                "scenario built for {:?} but feeder is {:?}",
                scenario.feeder,
                feeder.fingerprint()
            )));
        }
        if crews.is_empty() {
            return Err(Error::Config("need at least one crew".into()));
        }
        if cfg.replan_period_h <= 0.0 {
            return Err(Error::Config("replan period must be > 0".into()));
        }
        feeder.validate_road_refs(roads)?;
        let roads = roads.with_closures(&scenario.road_closures)?;

        let nb = feeder.branches.len();
        let mut damaged_physical = vec![false; nb];
        let mut confirmed = vec![false; nb];
        let mut remaining_repair = vec![0.0; nb];
        let resolve = |site: &str| -> Result<usize> {
            feeder
                .branch_idx(site)
                .ok_or_else(|| Error::Config(format!("scenario site {site} not in feeder")))
        };
        for (site, tau) in &scenario.repair_times {
            let b = resolve(site)?;
            if !feeder.branches[b].repairable {
                return Err(Error::Config(format!("site {site} is not repairable")));
            }
            damaged_physical[b] = true;
            remaining_repair[b] = *tau;
        }
        for site in &scenario.initial_damage {
            confirmed[resolve(site)?] = true;
        }

        let site_node: Vec<Option<usize>> = feeder
            .branches
            .iter()
            .map(|br| {
                if br.repairable {
                    roads.node_idx(&br.road_node)
                } else {
                    None
                }
            })
            .collect();
        let depot_node: Vec<usize> = feeder
            .depots
            .iter()
            .map(|d| roads.node_idx(&d.road_node).expect("validated road ref"))
            .collect();

        let crew_states: Vec<CrewState> = crews
            .iter()
            .map(|c| CrewState {
                activity: CrewActivity::Idle,
                node: depot_node[c.home_depot],
                gen: 0,
            })
            .collect();

        let switch = feeder.normal_switch_states();
        let energized = energized_set(feeder, &damaged_physical, &switch);
        let (unserved_kw, crit_unserved_kw) = unserved_power(feeder, &energized);
        let crit_dark_from_start: Vec<bool> = feeder
            .buses
            .iter()
            .zip(&energized)
            .map(|(b, e)| b.critical && !e)
            .collect();

        let mut env = RestorationEnv {
            feeder: feeder.clone(),
            roads,
            crews,
            weights,
            cfg,
            horizon_h: scenario.horizon_h,
            congestion: scenario.congestion.clone(),
            seed,
            clock: 0.0,
            damaged_physical,
            confirmed,
            repaired: vec![false; nb],
            claims: vec![None; nb],
            remaining_repair,
            crew_states,
            queue: BinaryHeap::new(),
            seq: 0,
            last_replan: 0.0,
            energized,
            unserved_kw,
            crit_unserved_kw,
            crit_restored_at: vec![None; feeder.buses.len()],
            crit_dark_from_start,
            metrics: EpisodeMetrics::default(),
            done: false,
            trace: None,
            site_node,
            depot_node,
        };
        for (t, site) in &scenario.arrivals {
            let b = resolve(site)?;
            env.schedule(*t, EventKind::TicketArrival { site: b });
        }
        for k in 0..env.crews.len() {
            env.schedule_next_duty(k);
        }
        if env.unserved_kw <= 0.0 {
            env.done = true;
        }
        let state = env.build_state();
        Ok((env, state))
    }

    pub fn enable_trace(&mut self) {
        self.trace = Some(vec![TraceRow::Header {
            seed: self.seed,
            feeder: self.feeder.fingerprint(),
            horizon_h: self.horizon_h,
        }]);
    }

    pub fn take_trace(&mut self) -> Vec<TraceRow> {
        self.trace.take().unwrap_or_default()
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn clock_h(&self) -> f64 {
        self.clock
    }

    pub fn metrics(&self) -> &EpisodeMetrics {
        &self.metrics
    }

    pub fn metrics_mut(&mut self) -> &mut EpisodeMetrics {
        &mut self.metrics
    }

    pub fn rho_now(&self) -> f64 {
        self.congestion.rho_at(self.clock)
    }

    /// Finalizes censored critical restorations into the metrics.
    pub fn finish_metrics(&mut self) -> EpisodeMetrics {
        let mut m = self.metrics.clone();
        for (bus, dark) in self.crit_dark_from_start.iter().enumerate() {
            if !dark {
                continue;
            }
            match self.crit_restored_at[bus] {
                Some(t) => m
                    .crit_restoration_min
                    .push((self.feeder.buses[bus].id.clone(), t * 60.0)),
                None => {
                    m.crit_restoration_min
                        .push((self.feeder.buses[bus].id.clone(), self.horizon_h * 60.0));
                    m.crit_censored += 1;
                }
            }
        }
        m.crit_restoration_min
            .sort_by(|a, b| a.0.cmp(&b.0));
        m
    }

    fn schedule(&mut self, time: f64, kind: EventKind) {
        self.seq += 1;
        self.queue.push(Reverse(Event {
            time,
            seq: self.seq,
            kind,
        }));
    }

    fn schedule_next_duty(&mut self, crew: usize) {
        let t = self.crews[crew].next_duty_change(self.clock);
        if t <= self.horizon_h {
            self.schedule(t, EventKind::DutyChange { crew });
        }
    }

    /// Crew may receive assignments now: on duty, not on break, not mid-repair.
    pub fn crew_available(&self, crew: usize) -> bool {
        let profile = &self.crews[crew];
        if !profile.on_shift(self.clock) || profile.on_break(self.clock) {
            return false;
        }
        !matches!(self.crew_states[crew].activity, CrewActivity::Repairing { .. })
    }

    /// Virtual road position: the node the crew is at, or the next node on
    /// its travel path plus the time needed to reach it.
    pub fn crew_position(&self, crew: usize) -> (usize, f64) {
        match &self.crew_states[crew].activity {
            CrewActivity::Traveling(leg) => {
                let (_, node, offset, _) = leg.position(self.clock);
                (node, offset)
            }
            _ => (self.crew_states[crew].node, 0.0),
        }
    }

    pub fn current_target(&self, crew: usize) -> Option<usize> {
        match &self.crew_states[crew].activity {
            CrewActivity::Traveling(TravelLeg {
                target: TravelTarget::Site(s),
                ..
            }) => Some(*s),
            CrewActivity::Repairing { site, .. } => Some(*site),
            _ => self.paused_site(crew),
        }
    }

    /// Site this crew has claimed but is not actively repairing (arrived
    /// off-duty or paused by a duty change).
    fn paused_site(&self, crew: usize) -> Option<usize> {
        self.claims.iter().position(|c| *c == Some(crew)).filter(|&s| {
            !matches!(
                self.crew_states[crew].activity,
                CrewActivity::Traveling(_) | CrewActivity::Repairing { .. }
            ) && self.crew_states[crew].node == self.site_node[s].unwrap_or(usize::MAX)
        })
    }

    pub fn build_state(&self) -> DispatchState {
        state::build(self)
    }

    pub fn build_mask(&self, state: &DispatchState) -> FeasibilityMask {
        build_mask(state, &self.feeder, &self.crews)
    }

    // -- internals used by state construction ------------------------------

    pub(crate) fn confirmed_open_sites(&self) -> Vec<usize> {
        (0..self.feeder.branches.len())
            .filter(|&b| self.confirmed[b] && !self.repaired[b])
            .collect()
    }

    pub(crate) fn known_damage(&self) -> Vec<bool> {
        (0..self.feeder.branches.len())
            .map(|b| self.confirmed[b] && !self.repaired[b])
            .collect()
    }

    pub(crate) fn claims(&self) -> &[Option<usize>] {
        &self.claims
    }

    pub(crate) fn remaining_repair_h(&self, site: usize) -> f64 {
        match self
            .crew_states
            .iter()
            .find_map(|cs| match &cs.activity {
                CrewActivity::Repairing { site: s, end, .. } if *s == site => Some(*end),
                _ => None,
            }) {
            Some(end) => (end - self.clock).max(0.0),
            None => self.remaining_repair[site],
        }
    }

    pub(crate) fn repair_started(&self, site: usize) -> bool {
        self.crew_states.iter().any(|cs| {
            matches!(&cs.activity, CrewActivity::Repairing { site: s, .. } if *s == site)
        })
    }

    pub(crate) fn unserved_now(&self) -> (f64, f64) {
        (self.unserved_kw, self.crit_unserved_kw)
    }

    pub(crate) fn horizon(&self) -> f64 {
        self.horizon_h
    }

    pub(crate) fn site_road_node(&self, site: usize) -> Option<usize> {
        self.site_node[site]
    }

    pub(crate) fn depot_road_node(&self, depot: usize) -> usize {
        self.depot_node[depot]
    }

    // -- action commitment --------------------------------------------------

    fn release_claim_of(&mut self, crew: usize) {
        for c in self.claims.iter_mut() {
            if *c == Some(crew) {
                *c = None;
            }
        }
    }

    /// Starts (or resumes) the repair if the crew stands at its claimed site
    /// and is on duty.
    fn maybe_start_repair(&mut self, crew: usize) {
        let profile = &self.crews[crew];
        if !profile.on_shift(self.clock) || profile.on_break(self.clock) {
            return;
        }
        let Some(site) = self.claims.iter().position(|c| *c == Some(crew)) else {
            return;
        };
        if !matches!(self.crew_states[crew].activity, CrewActivity::Idle) {
            return;
        }
        if self.crew_states[crew].node != self.site_node[site].unwrap_or(usize::MAX) {
            return;
        }
        if self.repaired[site] {
            self.claims[site] = None;
            return;
        }
        let end = self.clock + self.remaining_repair[site];
        self.crew_states[crew].gen += 1;
        let gen = self.crew_states[crew].gen;
        self.crew_states[crew].activity = CrewActivity::Repairing { site, end, gen };
        self.schedule(end, EventKind::RepairEnd { crew, site, gen });
        self.log(TraceRow::Event {
            t: self.clock,
            what: format!("repair_start crew={crew} site={}", self.feeder.branches[site].id),
        });
    }

    /// Dispatches a crew toward a road node. Zero-length legs arrive via an
    /// immediate TravelEnd event so ordering stays uniform.
    fn dispatch_to(&mut self, crew: usize, dest: usize, target: TravelTarget) -> Result<()> {
        let (from, offset) = self.crew_position(crew);
        self.abort_travel(crew);
        let (dist, path) = self
            .roads
            .open_route(from, dest)
            .ok_or_else(|| Error::Contract(format!("crew {crew} cannot reach node {dest}")))?;
        let rho = self.rho_now();
        let v_eff = self.crews[crew].speed_kmh / rho;
        let depart = self.clock + offset;
        let tau = offset + travel_time(dist, self.crews[crew].speed_kmh, rho);
        let arrive = self.clock + tau;
        let mut cum = Vec::with_capacity(path.len());
        let mut acc = 0.0;
        cum.push(0.0);
        for w in path.windows(2) {
            let seg = self
                .roads
                .segment_between(w[0], w[1])
                .expect("route follows existing segments");
            acc += self.roads.segments[seg].length_km;
            cum.push(acc);
        }
        self.crew_states[crew].gen += 1;
        let gen = self.crew_states[crew].gen;
        self.crew_states[crew].activity = CrewActivity::Traveling(TravelLeg {
            target,
            path,
            cum,
            depart,
            arrive,
            v_eff,
            gen,
        });
        self.schedule(arrive, EventKind::TravelEnd { crew, gen });
        Ok(())
    }

    /// Cancels an in-flight leg, placing the crew at its current virtual
    /// node (already-covered distance was charged continuously).
    fn abort_travel(&mut self, crew: usize) {
        if let CrewActivity::Traveling(leg) = &self.crew_states[crew].activity {
            let (_, node, _, _) = leg.position(self.clock);
            self.crew_states[crew].node = node;
            self.crew_states[crew].activity = CrewActivity::Idle;
        }
    }

    fn commit_entry(&mut self, crew: usize, action: CrewAction) -> Result<()> {
        match action {
            CrewAction::Assign(site) => {
                if self.current_target(crew) == Some(site) {
                    if let CrewActivity::Idle = self.crew_states[crew].activity {
                        self.maybe_start_repair(crew);
                    }
                    return Ok(()); // continue current plan
                }
                self.release_claim_of(crew);
                self.claims[site] = Some(crew);
                let dest = self.site_node[site].ok_or_else(|| {
                    Error::Contract(format!("site {site} has no road access"))
                })?;
                self.dispatch_to(crew, dest, TravelTarget::Site(site))?;
                // Already standing there: the immediate TravelEnd will start it.
                Ok(())
            }
            CrewAction::Hold => {
                self.release_claim_of(crew);
                if matches!(self.crew_states[crew].activity, CrewActivity::Traveling(_)) {
                    // Finish the current segment, then stop.
                    let (node, offset) = self.crew_position(crew);
                    self.abort_travel(crew);
                    if offset > 0.0 {
                        self.dispatch_to(crew, node, TravelTarget::Halt).ok();
                    }
                }
                Ok(())
            }
            CrewAction::Return => {
                self.release_claim_of(crew);
                let depot = self.depot_node[self.crews[crew].home_depot];
                self.dispatch_to(crew, depot, TravelTarget::Depot(self.crews[crew].home_depot))
            }
        }
    }

    /// Audits entries against a freshly built mask; in audit mode counts
    /// violations (degrading impossible entries to hold), otherwise errors.
    fn audit_action(
        &mut self,
        action: &JointAction,
        interval: &mut IntervalMetrics,
    ) -> Result<(Vec<(usize, CrewAction)>, usize)> {
        let state = self.build_state();
        let mask = self.build_mask(&state);
        let slot_of_site = |site: usize| state.components.iter().position(|c| c.branch == site);
        let mut cleaned = Vec::new();
        let mut collisions = 0usize;
        let mut claimed_now: Vec<usize> = Vec::new();
        for &(crew, act) in &action.entries {
            if crew >= self.crews.len() {
                return Err(Error::Contract(format!("unknown crew {crew}")));
            }
            if !self.crew_available(crew) {
                return Err(Error::Contract(format!(
                    "crew {crew} is not available at t={}",
                    self.clock
                )));
            }
            let row = &mask.rows[crew];
            let (idx, feasible) = match act {
                CrewAction::Assign(site) => match slot_of_site(site) {
                    Some(slot) => (slot, row.allow[slot]),
                    None => (usize::MAX, false),
                },
                CrewAction::Hold => (mask.hold_index(), true),
                CrewAction::Return => {
                    let i = mask.return_index();
                    (i, row.allow[i])
                }
            };
            let _ = idx;
            if let CrewAction::Assign(site) = act {
                if claimed_now.contains(&site) {
                    // Two entries in one joint action aimed at the same
                    // target: later crew holds instead.
                    collisions += 1;
                    cleaned.push((crew, CrewAction::Hold));
                    continue;
                }
            }
            if feasible {
                if let CrewAction::Assign(site) = act {
                    claimed_now.push(site);
                }
                cleaned.push((crew, act));
            } else if self.cfg.audit_mode {
                interval.violations += 1;
                self.metrics.violation_count += 1;
                // Execute when physically possible, otherwise hold.
                let executable = match act {
                    CrewAction::Assign(site) => {
                        slot_of_site(site).is_some()
                            && self.claims[site].is_none()
                            && matches!(
                                slot_of_site(site).and_then(|s| mask.rows[crew].reasons[s]),
                                Some(BlockReason::Shift)
                                    | Some(BlockReason::Skill)
                                    | Some(BlockReason::Capacity)
                                    | Some(BlockReason::Radiality)
                            )
                    }
                    _ => false,
                };
                if executable {
                    if let CrewAction::Assign(site) = act {
                        claimed_now.push(site);
                    }
                    cleaned.push((crew, act));
                } else {
                    cleaned.push((crew, CrewAction::Hold));
                }
            } else {
                let reason = match act {
                    CrewAction::Assign(site) => slot_of_site(site)
                        .and_then(|s| mask.rows[crew].reasons[s])
                        .map(|r| format!("{r:?}"))
                        .unwrap_or_else(|| "NotATarget".into()),
                    _ => "NoRoute".into(),
                };
                return Err(Error::Contract(format!(
                    "infeasible entry: crew {crew} -> {act:?} ({reason})"
                )));
            }
        }
        Ok((cleaned, collisions))
    }

    // -- the event loop ------------------------------------------------------

    /// Commits the joint action, then advances through events until a
    /// replan trigger fires or the episode ends. Returns the next state,
    /// the dense reward integrated over the gap, the done flag, and gap
    /// diagnostics.
    pub fn step(&mut self, action: &JointAction) -> Result<(DispatchState, f64, bool, StepInfo)> {
        if self.done {
            return Err(Error::Contract("step called on a finished episode".into()));
        }
        let mut interval = IntervalMetrics::default();
        let (entries, collisions) = self.audit_action(action, &mut interval)?;
        for (crew, act) in &entries {
            self.commit_entry(*crew, *act)?;
        }
        self.metrics.replan_count += 1;
        self.log(TraceRow::Decision {
            t: self.clock,
            entries: entries
                .iter()
                .map(|(k, a)| {
                    let what = match a {
                        CrewAction::Assign(s) => format!("{}", self.feeder.branches[*s].id),
                        CrewAction::Hold => "hold".into(),
                        CrewAction::Return => "return".into(),
                    };
                    format!("{k}:{what}")
                })
                .collect(),
        });
        self.last_replan = self.clock;
        let t_start = self.clock;

        let mut events_processed = 0usize;
        let trigger;
        loop {
            if self.unserved_kw <= 1e-9 {
                self.done = true;
                trigger = ReplanTrigger::Done;
                break;
            }
            let next_periodic = self.last_replan + self.cfg.replan_period_h;
            let next_event_t = self.peek_event_time();
            let t_next = next_event_t
                .unwrap_or(f64::INFINITY)
                .min(next_periodic)
                .min(self.horizon_h);
            self.accumulate(t_next, &mut interval);
            if t_next >= self.horizon_h {
                self.clock = self.horizon_h;
                self.done = true;
                trigger = ReplanTrigger::Done;
                break;
            }
            self.clock = t_next;
            if next_event_t == Some(t_next) {
                let ev = self.pop_event().expect("peeked event exists");
                events_processed += 1;
                if let Some(tr) = self.process_event(ev, &mut interval) {
                    trigger = tr;
                    break;
                }
            } else {
                // Periodic timer epoch; the next step() records the decision.
                trigger = ReplanTrigger::Periodic;
                break;
            }
        }

        if self.unserved_kw <= 1e-9 {
            self.done = true;
        }
        interval.elapsed_h = self.clock - t_start;
        let reward = compute_reward(&interval, &self.weights);
        self.log(TraceRow::Gap {
            t0: t_start,
            t1: self.clock,
            reward,
        });
        if self.done {
            self.log(TraceRow::End {
                t: self.clock,
                ens_mwh: self.metrics.ens_mwh,
            });
        }
        let state = self.build_state();
        let info = StepInfo {
            interval,
            events_processed,
            trigger,
            collisions,
        };
        Ok((state, reward, self.done, info))
    }

    /// Next valid (non-stale) event time without removing it.
    fn peek_event_time(&mut self) -> Option<f64> {
        while let Some(Reverse(ev)) = self.queue.peek() {
            if self.event_is_stale(ev) {
                self.queue.pop();
                continue;
            }
            return Some(ev.time);
        }
        None
    }

    fn pop_event(&mut self) -> Option<Event> {
        while let Some(Reverse(ev)) = self.queue.pop() {
            if !self.event_is_stale(&ev) {
                return Some(ev);
            }
        }
        None
    }

    fn event_is_stale(&self, ev: &Event) -> bool {
        match &ev.kind {
            EventKind::TravelEnd { crew, gen } => match &self.crew_states[*crew].activity {
                CrewActivity::Traveling(leg) => leg.gen != *gen,
                _ => true,
            },
            EventKind::RepairEnd { crew, gen, .. } => match &self.crew_states[*crew].activity {
                CrewActivity::Repairing { gen: g, .. } => g != gen,
                _ => true,
            },
            _ => false,
        }
    }

    /// Integrates ENS, travel, and idle from `clock` to `t` (exclusive of
    /// event effects at `t`).
    fn accumulate(&mut self, t: f64, interval: &mut IntervalMetrics) {
        let dt = (t.min(self.horizon_h) - self.clock).max(0.0);
        if dt == 0.0 {
            return;
        }
        let ens = self.unserved_kw * dt / 1000.0;
        interval.ens_mwh += ens;
        self.metrics.ens_mwh += ens;
        for (k, cs) in self.crew_states.iter().enumerate() {
            match &cs.activity {
                CrewActivity::Traveling(leg) => {
                    // Distance actually covered in this window.
                    let a = (self.clock - leg.depart).max(0.0);
                    let b = ((t.min(leg.arrive)) - leg.depart).max(0.0);
                    let km = ((b - a) * leg.v_eff).max(0.0);
                    interval.travel_km += km;
                    self.metrics.travel_km += km;
                }
                CrewActivity::Idle => {
                    let profile = &self.crews[k];
                    // Approximate duty windows as constant over the gap;
                    // duty changes are events, so this holds exactly.
                    if profile.on_shift(self.clock) && !profile.on_break(self.clock) {
                        interval.idle_crew_h += dt;
                    }
                }
                CrewActivity::Repairing { .. } => {}
            }
        }
        if let Some(trace) = &mut self.trace {
            trace.push(TraceRow::Interval {
                t0: self.clock,
                t1: t.min(self.horizon_h),
                unserved_kw: self.unserved_kw,
            });
        }
    }

    /// Applies one event. Returns a trigger when the dispatcher should act.
    fn process_event(
        &mut self,
        ev: Event,
        interval: &mut IntervalMetrics,
    ) -> Option<ReplanTrigger> {
        match ev.kind {
            EventKind::TicketArrival { site } => {
                if self.damaged_physical[site] && !self.repaired[site] {
                    self.confirmed[site] = true;
                    self.log(TraceRow::Event {
                        t: self.clock,
                        what: format!("ticket site={}", self.feeder.branches[site].id),
                    });
                    Some(ReplanTrigger::Ticket)
                } else {
                    None // stale ticket for an already-repaired branch
                }
            }
            EventKind::TravelEnd { crew, .. } => {
                let leg = match &self.crew_states[crew].activity {
                    CrewActivity::Traveling(l) => l.clone(),
                    _ => unreachable!("stale events were filtered"),
                };
                self.crew_states[crew].node = *leg.path.last().unwrap();
                self.crew_states[crew].activity = CrewActivity::Idle;
                self.log(TraceRow::Event {
                    t: self.clock,
                    what: format!("travel_end crew={crew} node={}", self.roads.nodes[self.crew_states[crew].node].id),
                });
                if matches!(leg.target, TravelTarget::Site(_)) {
                    self.maybe_start_repair(crew);
                }
                None
            }
            EventKind::RepairEnd { crew, site, .. } => {
                self.repaired[site] = true;
                self.damaged_physical[site] = false;
                self.confirmed[site] = false;
                self.remaining_repair[site] = 0.0;
                self.claims[site] = None;
                self.crew_states[crew].activity = CrewActivity::Idle;
                self.reenergize(interval);
                self.log(TraceRow::Event {
                    t: self.clock,
                    what: format!(
                        "repair_end crew={crew} site={} unserved_kw={}",
                        self.feeder.branches[site].id, self.unserved_kw
                    ),
                });
                Some(ReplanTrigger::RepairEnd)
            }
            EventKind::DutyChange { crew } => {
                self.apply_duty_change(crew);
                self.schedule_next_duty(crew);
                Some(ReplanTrigger::DutyChange)
            }
        }
    }

    /// Recomputes the energized set after a repair and records critical
    /// restorations.
    fn reenergize(&mut self, interval: &mut IntervalMetrics) {
        let switch = self.feeder.normal_switch_states();
        let now = energized_set(&self.feeder, &self.damaged_physical, &switch);
        for (bus, on) in now.iter().enumerate() {
            if *on && !self.energized[bus] && self.crit_dark_from_start[bus] {
                if self.crit_restored_at[bus].is_none() {
                    self.crit_restored_at[bus] = Some(self.clock);
                    interval.crit_restored += 1;
                }
            }
        }
        self.energized = now;
        let (u, c) = unserved_power(&self.feeder, &self.energized);
        self.unserved_kw = u;
        self.crit_unserved_kw = c;
    }

    /// Duty boundary: pause an active repair at break/shift-end, resume or
    /// start pending work when back on duty. Travel continues regardless.
    fn apply_duty_change(&mut self, crew: usize) {
        let profile = &self.crews[crew];
        let working_now = profile.on_shift(self.clock) && !profile.on_break(self.clock);
        if working_now {
            self.log(TraceRow::Event {
                t: self.clock,
                what: format!("duty_on crew={crew}"),
            });
            self.maybe_start_repair(crew);
        } else {
            self.log(TraceRow::Event {
                t: self.clock,
                what: format!("duty_off crew={crew}"),
            });
            if let CrewActivity::Repairing { site, end, .. } = self.crew_states[crew].activity {
                self.remaining_repair[site] = (end - self.clock).max(0.0);
                self.crew_states[crew].gen += 1; // invalidates the RepairEnd
                self.crew_states[crew].activity = CrewActivity::Idle;
            }
        }
    }

    fn log(&mut self, row: TraceRow) {
        if let Some(trace) = &mut self.trace {
            trace.push(row);
        }
    }

    /// Certainty-equivalent freeze for lookahead search: drops every ticket
    /// that has not arrived yet.
    pub fn strip_future_arrivals(&mut self) {
        let retained: Vec<Reverse<Event>> = self
            .queue
            .drain()
            .filter(|Reverse(ev)| !matches!(ev.kind, EventKind::TicketArrival { .. }))
            .collect();
        self.queue = retained.into_iter().collect();
    }
}

#[cfg(test)]
mod tests;
