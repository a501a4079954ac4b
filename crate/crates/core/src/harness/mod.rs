//! Experiment orchestration: scenario batch generation, dispatcher
//! evaluation with per-decision wall-clock measurement, per-episode rows,
//! and median/IQR aggregation in the paper's table style.

pub mod scenarios;
pub mod traincmd;

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use crate::baselines::{exact_short_horizon, greedy_value, travel_aware};
use crate::env::{
    render_trace, DispatchState, EnvConfig, JointAction, RestorationEnv, RewardWeights,
};
use crate::error::{Error, Result};
use crate::feeder::{default_crews, load_network, FeederModel, RoadGraph};
use crate::hazard::HazardScenario;
use crate::policy::{
    encode_state, forward, select_action, MemoryState, PolicyParams, SelectMode,
};
use crate::rng::{stream, substream};
use crate::stats::percentile;
use crate::trainer::collect_episode;

pub use scenarios::{gen_scenarios, read_scenario_dir, Manifest, MANIFEST_FILE};
pub use traincmd::{train_run, TrainRunConfig};

/// Which decision engine drives the crews.
pub enum DispatcherKind {
    GreedyValue,
    TravelAware,
    Oracle { depth: usize },
    Drl { params: Box<PolicyParams>, mode: SelectMode },
}

impl DispatcherKind {
    pub fn name(&self) -> &'static str {
        match self {
            DispatcherKind::GreedyValue => "greedy_value",
            DispatcherKind::TravelAware => "travel_aware",
            DispatcherKind::Oracle { .. } => "oracle",
            DispatcherKind::Drl { .. } => "drl",
        }
    }

    /// Parses the CLI flag: greedy_value | travel_aware | oracle[:depth] |
    /// drl (checkpoint loaded separately).
    pub fn parse(spec: &str, checkpoint: Option<&Path>, mode: SelectMode) -> Result<Self> {
        match spec {
            "greedy_value" => Ok(DispatcherKind::GreedyValue),
            "travel_aware" => Ok(DispatcherKind::TravelAware),
            "oracle" => Ok(DispatcherKind::Oracle { depth: 4 }),
            s if s.starts_with("oracle:") => {
                let depth = s["oracle:".len()..]
                    .parse()
                    .map_err(|_| Error::Config(format!("bad oracle depth in {s:?}")))?;
                Ok(DispatcherKind::Oracle { depth })
            }
            "drl" => {
                let path = checkpoint.ok_or_else(|| {
                    Error::Config("dispatcher drl needs --checkpoint".into())
                })?;
                Ok(DispatcherKind::Drl {
                    params: Box::new(PolicyParams::load(path)?),
                    mode,
                })
            }
            other => Err(Error::Config(format!(
                "unknown dispatcher {other:?} (greedy_value|travel_aware|oracle|drl)"
            ))),
        }
    }
}

/// Per-episode dispatch state for one run of one scenario.
struct Engine<'a> {
    kind: &'a DispatcherKind,
    memory: MemoryState,
    rng: rand_chacha::ChaCha20Rng,
}

impl<'a> Engine<'a> {
    fn new(kind: &'a DispatcherKind, seed: u64) -> Self {
        let hidden = match kind {
            DispatcherKind::Drl { params, .. } => params.slate.hidden,
            _ => 1,
        };
        Engine {
            kind,
            memory: MemoryState::zeros(hidden),
            rng: substream(seed, stream::ROLLOUT),
        }
    }

    /// One decision: mask construction, scoring, and selection. This is
    /// the span the per-replan runtime metric measures.
    fn decide(&mut self, env: &RestorationEnv, state: &DispatchState) -> Result<JointAction> {
        let mask = env.build_mask(state);
        match self.kind {
            DispatcherKind::GreedyValue => Ok(greedy_value(state, &mask)),
            DispatcherKind::TravelAware => Ok(travel_aware(state, &mask)),
            DispatcherKind::Oracle { depth } => {
                let (action, _) = exact_short_horizon(env, state, *depth)?;
                Ok(action)
            }
            DispatcherKind::Drl { params, mode } => {
                let encoded = encode_state(state, &params.slate)?;
                let (logits, _, next_memory) = forward(params, &encoded, &self.memory)?;
                let (action, _) = select_action(
                    &logits,
                    &mask,
                    &encoded,
                    &params.slate,
                    *mode,
                    &mut self.rng,
                )?;
                self.memory = next_memory;
                Ok(action)
            }
        }
    }
}

/// One line of the per-episode results table.
#[derive(Debug, Clone, Serialize)]
pub struct EpisodeRow {
    pub seed: u64,
    pub dispatcher: String,
    pub ens_mwh: f64,
    /// 95th percentile of critical first-restoration times (min); absent
    /// when no critical load went dark.
    pub crit_t95_min: Option<f64>,
    pub travel_km: f64,
    pub replans: usize,
    pub violations: usize,
    pub reward: f64,
    pub decision_ms_median: f64,
    pub wall_s: f64,
}

pub const EPISODE_HEADER: &str =
    "seed\tdispatcher\tens_mwh\tcrit_t95_min\ttravel_km\treplans\tviolations\treward\tdecision_ms_median\twall_s";

pub fn render_rows(rows: &[EpisodeRow]) -> String {
    let mut s = String::from(EPISODE_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
            r.seed,
            r.dispatcher,
            r.ens_mwh,
            r.crit_t95_min.map_or("-".to_string(), |v| v.to_string()),
            r.travel_km,
            r.replans,
            r.violations,
            r.reward,
            r.decision_ms_median,
            r.wall_s,
        ));
    }
    s
}

pub fn parse_rows(text: &str) -> Result<Vec<EpisodeRow>> {
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 {
            if line != EPISODE_HEADER {
                return Err(Error::Config("unexpected episode table header".into()));
            }
            continue;
        }
        let t: Vec<&str> = line.split('\t').collect();
        if t.len() != 10 {
            return Err(Error::Config(format!("episode row {} malformed", i + 1)));
        }
        let f = |s: &str, what: &str| -> Result<f64> {
            s.parse()
                .map_err(|_| Error::Config(format!("row {}: bad {what}", i + 1)))
        };
        rows.push(EpisodeRow {
            seed: t[0]
                .parse()
                .map_err(|_| Error::Config(format!("row {}: bad seed", i + 1)))?,
            dispatcher: t[1].to_string(),
            ens_mwh: f(t[2], "ens")?,
            crit_t95_min: if t[3] == "-" { None } else { Some(f(t[3], "t95")?) },
            travel_km: f(t[4], "travel")?,
            replans: t[5]
                .parse()
                .map_err(|_| Error::Config(format!("row {}: bad replans", i + 1)))?,
            violations: t[6]
                .parse()
                .map_err(|_| Error::Config(format!("row {}: bad violations", i + 1)))?,
            reward: f(t[7], "reward")?,
            decision_ms_median: f(t[8], "decision_ms")?,
            wall_s: f(t[9], "wall_s")?,
        });
    }
    Ok(rows)
}

/// Inputs for one evaluation batch.
pub struct EvalRequest {
    pub scenarios: Vec<(u64, HazardScenario)>,
    pub feeder: FeederModel,
    pub roads: RoadGraph,
    pub dispatcher: DispatcherKind,
    pub crews: usize,
    pub crew_speed_kmh: f64,
    pub env: EnvConfig,
    pub weights: RewardWeights,
    /// Per-episode trace files land here when set (ENS replay audits).
    pub trace_dir: Option<PathBuf>,
}

/// Runs one scenario to completion under the dispatcher, timing each
/// decision (mask + forward + select), and returns the filled row.
pub fn run_episode(
    kind: &DispatcherKind,
    scenario: &HazardScenario,
    feeder: &FeederModel,
    roads: &RoadGraph,
    crews: usize,
    crew_speed: f64,
    env_cfg: &EnvConfig,
    weights: &RewardWeights,
    trace_path: Option<&Path>,
) -> Result<EpisodeRow> {
    let roster = default_crews(feeder, crews, crew_speed);
    let (mut env, mut state) = RestorationEnv::reset(
        scenario,
        feeder,
        roads,
        roster,
        weights.clone(),
        env_cfg.clone(),
        scenario.seed,
    )?;
    if trace_path.is_some() {
        env.enable_trace();
    }
    let wall_start = Instant::now();
    let mut engine = Engine::new(kind, scenario.seed);
    let mut decision_ms = Vec::new();
    let mut reward_total = 0.0;
    let mut guard = 0usize;
    while !env.is_done() {
        guard += 1;
        if guard > 100_000 {
            return Err(Error::Numerical(format!(
                "episode {} did not terminate",
                scenario.seed
            )));
        }
        let t0 = Instant::now();
        let action = engine.decide(&env, &state)?;
        decision_ms.push(t0.elapsed().as_secs_f64() * 1e3);
        let (next, reward, done, _info) = env.step(&action)?;
        reward_total += reward;
        state = next;
        if done {
            break;
        }
    }
    let wall_s = wall_start.elapsed().as_secs_f64();
    env.metrics_mut().decision_ms = decision_ms.clone();
    let metrics = env.finish_metrics();
    if let Some(path) = trace_path {
        std::fs::write(path, render_trace(&env.take_trace()))?;
    }
    let t95 = if metrics.crit_restoration_min.is_empty() {
        None
    } else {
        let times: Vec<f64> = metrics
            .crit_restoration_min
            .iter()
            .map(|(_, m)| *m)
            .collect();
        Some(percentile(&times, 0.95))
    };
    Ok(EpisodeRow {
        seed: scenario.seed,
        dispatcher: kind.name().to_string(),
        ens_mwh: metrics.ens_mwh,
        crit_t95_min: t95,
        travel_km: metrics.travel_km,
        replans: metrics.replan_count,
        violations: metrics.violation_count,
        reward: reward_total,
        decision_ms_median: if decision_ms.is_empty() {
            0.0
        } else {
            percentile(&decision_ms, 0.5)
        },
        wall_s,
    })
}

/// Evaluates every scenario in the request, ordered by seed.
pub fn evaluate(req: &EvalRequest) -> Result<Vec<EpisodeRow>> {
    let mut rows = Vec::with_capacity(req.scenarios.len());
    for (seed, scenario) in &req.scenarios {
        let trace_path = req
            .trace_dir
            .as_ref()
            .map(|d| d.join(format!("trace_{seed}.log")));
        rows.push(run_episode(
            &req.dispatcher,
            scenario,
            &req.feeder,
            &req.roads,
            req.crews,
            req.crew_speed_kmh,
            &req.env,
            &req.weights,
            trace_path.as_deref(),
        )?);
    }
    Ok(rows)
}

/// Convenience: run a learned policy episode through the trainer's rollout
/// path (used by training evaluation; shares the greedy decision code).
pub fn policy_episode_reward(
    params: &PolicyParams,
    scenario: &HazardScenario,
    feeder: &FeederModel,
    roads: &RoadGraph,
    crews: usize,
    crew_speed: f64,
    env_cfg: &EnvConfig,
    weights: &RewardWeights,
) -> Result<f64> {
    let roster = default_crews(feeder, crews, crew_speed);
    let (mut env, state) = RestorationEnv::reset(
        scenario,
        feeder,
        roads,
        roster,
        weights.clone(),
        env_cfg.clone(),
        scenario.seed,
    )?;
    let traj = collect_episode(params, &mut env, state, scenario.seed, SelectMode::Greedy)?;
    Ok(traj.episode_return)
}

// ---------------------------------------------------------------------------
// Aggregation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct Quartiles {
    pub median: f64,
    pub q25: f64,
    pub q75: f64,
}

impl Quartiles {
    pub fn from_values(values: &[f64]) -> Self {
        Quartiles {
            median: percentile(values, 0.5),
            q25: percentile(values, 0.25),
            q75: percentile(values, 0.75),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MethodSummary {
    pub dispatcher: String,
    pub scenarios: usize,
    pub ens_mwh: Quartiles,
    pub crit_t95_min: Option<Quartiles>,
    pub travel_km: Quartiles,
    pub replans: Quartiles,
    pub decision_ms: Quartiles,
    pub violations: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct MetricsReport {
    /// Percentile convention used throughout the table.
    pub percentile_method: String,
    pub methods: Vec<MethodSummary>,
}

/// Medians and interquartile ranges per dispatcher, percentiles by linear
/// interpolation between order statistics.
pub fn aggregate(rows: &[EpisodeRow]) -> MetricsReport {
    let mut names: Vec<String> = rows.iter().map(|r| r.dispatcher.clone()).collect();
    names.sort();
    names.dedup();
    let mut methods = Vec::new();
    for name in names {
        let group: Vec<&EpisodeRow> = rows.iter().filter(|r| r.dispatcher == name).collect();
        let col = |f: fn(&EpisodeRow) -> f64| -> Vec<f64> { group.iter().map(|r| f(r)).collect() };
        let t95: Vec<f64> = group.iter().filter_map(|r| r.crit_t95_min).collect();
        methods.push(MethodSummary {
            dispatcher: name,
            scenarios: group.len(),
            ens_mwh: Quartiles::from_values(&col(|r| r.ens_mwh)),
            crit_t95_min: if t95.is_empty() {
                None
            } else {
                Some(Quartiles::from_values(&t95))
            },
            travel_km: Quartiles::from_values(&col(|r| r.travel_km)),
            replans: Quartiles::from_values(&col(|r| r.replans as f64)),
            decision_ms: Quartiles::from_values(&col(|r| r.decision_ms_median)),
            violations: group.iter().map(|r| r.violations).sum(),
        });
    }
    MetricsReport {
        percentile_method: "linear interpolation between order statistics".into(),
        methods,
    }
}

/// Rounds to three significant digits for table rendering.
fn sig3(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    let mag = x.abs().log10().floor();
    let scale = 10f64.powf(2.0 - mag);
    (x * scale).round() / scale
}

fn cell(q: &Quartiles) -> String {
    format!("{} [{}-{}]", sig3(q.median), sig3(q.q25), sig3(q.q75))
}

/// Human-readable table, one row per dispatcher, median [25th-75th pct].
pub fn render_report(report: &MetricsReport) -> String {
    let mut s = String::new();
    s.push_str(&format!(
        "# median [25th-75th pct]; percentiles: {}\n",
        report.percentile_method
    ));
    s.push_str(
        "method        n    ENS (MWh)            crit t95 (min)       travel (km)          decision (ms)        replans              viol\n",
    );
    for m in &report.methods {
        s.push_str(&format!(
            "{:<13} {:<4} {:<20} {:<20} {:<20} {:<20} {:<20} {}\n",
            m.dispatcher,
            m.scenarios,
            cell(&m.ens_mwh),
            m.crit_t95_min.as_ref().map_or("-".to_string(), cell),
            cell(&m.travel_km),
            cell(&m.decision_ms),
            cell(&m.replans),
            m.violations,
        ));
    }
    s
}

/// Loads scenario files plus the network named in the batch manifest.
pub fn load_eval_inputs(
    scenario_dir: &Path,
    feeder_override: Option<&str>,
) -> Result<(Vec<(u64, HazardScenario)>, FeederModel, RoadGraph)> {
    let (manifest, scenarios) = read_scenario_dir(scenario_dir)?;
    let spec = feeder_override.unwrap_or(&manifest.feeder_spec);
    let (feeder, roads) = load_network(spec)?;
    for (_, s) in &scenarios {
        if s.feeder != feeder.fingerprint() {
            return Err(Error::Config(format!(
                "scenario built for {:?}, loaded feeder is {:?}",
                s.feeder,
                feeder.fingerprint()
            )));
        }
    }
    Ok((scenarios, feeder, roads))
}
