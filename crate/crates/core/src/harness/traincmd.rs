//! Training-run orchestration: TOML run config, scenario factories over
//! disjoint seed ranges, per-epoch log/checkpoint writing, and resume.

use std::io::Write as _;
use std::path::Path;

use serde::Deserialize;

use crate::env::{EnvConfig, RestorationEnv, RewardWeights};
use crate::error::{Error, Result};
use crate::feeder::{default_crews, load_network};
use crate::hazard::{generate_scenario, HazardConfig};
use crate::nn::Tensor;
use crate::policy::checkpoint;
use crate::policy::{PolicyParams, SlateConfig};
use crate::trainer::{self, Adam, PPOConfig, ResumeState, TrainOutcome, TRAIN_LOG_HEADER};

#[derive(Debug, Clone, Deserialize)]
pub struct TrainRunConfig {
    /// Hazard preset name or config path.
    pub hazard: String,
    pub crews: usize,
    #[serde(default = "default_speed")]
    pub crew_speed_kmh: f64,
    #[serde(default = "default_train_seed")]
    pub train_seed_start: u64,
    #[serde(default = "default_eval_seed")]
    pub eval_seed_start: u64,
    /// Slate size; defaults to 32 for small feeders, 96 for large ones.
    pub max_components: Option<usize>,
    #[serde(default)]
    pub env: EnvConfig,
    #[serde(default)]
    pub weights: RewardWeights,
    #[serde(default)]
    pub ppo: PPOConfig,
}

fn default_speed() -> f64 {
    40.0
}
fn default_train_seed() -> u64 {
    1000
}
fn default_eval_seed() -> u64 {
    900_000
}

impl TrainRunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("train config: {e}")))
    }
}

pub const LAST_CHECKPOINT: &str = "last.ckpt";
pub const BEST_CHECKPOINT: &str = "best.ckpt";
pub const TRAIN_LOG: &str = "train_log.tsv";

fn write_full_checkpoint(
    path: &Path,
    params: &PolicyParams,
    optimizer: &Adam,
    epoch: usize,
    best_eval: f64,
    best_epoch: usize,
) -> Result<()> {
    let extras = optimizer.state_tensors(params);
    let extra_refs: Vec<(String, &Tensor)> = extras.iter().map(|(n, t)| (n.clone(), t)).collect();
    let mut meta = params.meta();
    meta.push(("epoch".into(), epoch.to_string()));
    meta.push(("opt_step".into(), optimizer.step.to_string()));
    meta.push(("best_eval".into(), format!("{:e}", best_eval)));
    meta.push(("best_epoch".into(), best_epoch.to_string()));
    let tensors: Vec<(String, &Tensor)> = params
        .tensors()
        .into_iter()
        .map(|(n, t)| (n.to_string(), t))
        .chain(extra_refs)
        .collect();
    std::fs::write(path, checkpoint::render(&meta, &tensors))?;
    Ok(())
}

/// Runs (or resumes) a full training job in `out_dir`: writes
/// `train_log.tsv`, `last.ckpt` (with optimizer state) every epoch, and
/// `best.ckpt` at every new best evaluation reward.
pub fn train_run(cfg: &TrainRunConfig, out_dir: &Path, resume: bool) -> Result<TrainOutcome> {
    cfg.ppo.validate()?;
    std::fs::create_dir_all(out_dir)?;
    let hazard = HazardConfig::load(&cfg.hazard)?;
    let (feeder, roads) = load_network(&hazard.feeder)?;
    if feeder.depots.is_empty() || cfg.crews == 0 {
        return Err(Error::Config("need at least one crew and depot".into()));
    }
    let n_sites = feeder.asset_sites().len();
    let max_components = cfg
        .max_components
        .unwrap_or(if n_sites <= 32 { 32 } else { 96 });
    let slate = SlateConfig::new(max_components, cfg.crews);

    let factory = |seed: u64| -> Result<(RestorationEnv, crate::env::DispatchState)> {
        let scenario = generate_scenario(&hazard, &feeder, &roads, seed)?;
        RestorationEnv::reset(
            &scenario,
            &feeder,
            &roads,
            default_crews(&feeder, cfg.crews, cfg.crew_speed_kmh),
            cfg.weights.clone(),
            cfg.env.clone(),
            seed,
        )
    };
    let eval_seeds: Vec<u64> = (0..cfg.ppo.eval_scenarios as u64)
        .map(|i| cfg.eval_seed_start + i)
        .collect();

    let log_path = out_dir.join(TRAIN_LOG);
    let (params, resume_state) = if resume && out_dir.join(LAST_CHECKPOINT).exists() {
        let archive = checkpoint::parse(&std::fs::read_to_string(out_dir.join(LAST_CHECKPOINT))?)?;
        let params = PolicyParams::from_archive(&archive)?;
        let optimizer = Adam::from_archive(&archive, &params)?;
        let completed: usize = archive.meta_parse("epoch")?;
        let best_eval: f64 = archive.meta_parse("best_eval")?;
        let best_epoch: usize = archive.meta_parse("best_epoch")?;
        let best_params = if out_dir.join(BEST_CHECKPOINT).exists() {
            PolicyParams::load(&out_dir.join(BEST_CHECKPOINT))?
        } else {
            params.clone()
        };
        (
            params,
            Some(ResumeState {
                optimizer,
                completed_epochs: completed,
                best_eval_reward: best_eval,
                best_epoch,
                best_params,
            }),
        )
    } else {
        if !log_path.exists() {
            std::fs::write(&log_path, format!("{TRAIN_LOG_HEADER}\n"))?;
        }
        (PolicyParams::init(slate.clone(), cfg.ppo.seed), None)
    };

    let mut best_seen = resume_state
        .as_ref()
        .map(|r| r.best_eval_reward)
        .unwrap_or(f64::NEG_INFINITY);
    let mut best_epoch_seen = resume_state.as_ref().map(|r| r.best_epoch).unwrap_or(0);
    let outcome = trainer::train(
        params,
        &cfg.ppo,
        &factory,
        &factory,
        cfg.train_seed_start,
        &eval_seeds,
        resume_state,
        |row, params_now, optimizer_now| {
            // Log row flushed immediately so failures keep history.
            if let Ok(mut f) = std::fs::OpenOptions::new().append(true).open(&log_path) {
                let _ = writeln!(
                    f,
                    "{}\t{}\t{}\t{}\t{}",
                    row.epoch, row.policy_loss, row.value_loss, row.entropy, row.eval_reward
                );
                let _ = f.flush();
            }
            if row.eval_reward > best_seen {
                best_seen = row.eval_reward;
                best_epoch_seen = row.epoch;
                let _ = params_now.save(&out_dir.join(BEST_CHECKPOINT));
            }
            let _ = write_full_checkpoint(
                &out_dir.join(LAST_CHECKPOINT),
                params_now,
                optimizer_now,
                row.epoch,
                best_seen,
                best_epoch_seen,
            );
        },
    )?;
    write_full_checkpoint(
        &out_dir.join(LAST_CHECKPOINT),
        &outcome.params,
        &outcome.optimizer,
        cfg.ppo.epochs,
        outcome.best_eval_reward,
        outcome.best_epoch,
    )?;
    // The best checkpoint is written from the epoch callback; make sure it
    // exists even when every epoch regressed.
    if !out_dir.join(BEST_CHECKPOINT).exists() {
        outcome.best_params.save(&out_dir.join(BEST_CHECKPOINT))?;
    }
    Ok(outcome)
}
