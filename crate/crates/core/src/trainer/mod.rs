//! Masked PPO: rollout collection with the recurrent policy, generalized
//! advantage estimation, the clipped surrogate with value and entropy
//! terms, full-sequence backpropagation through each episode, global-norm
//! gradient clipping, and a first-order adaptive-moment update. Double
//! precision throughout.

mod adam;

pub use adam::Adam;

use rand::Rng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::env::{DispatchState, EpisodeMetrics, RestorationEnv};
use crate::error::{Error, Result};
use crate::nn::{Tape, Tensor};
use crate::policy::{
    encode_state, forward, forward_on_tape, select_action, EncodedState, MemoryState,
    PolicyParams, SelectMode, SlateConfig, TapeParams,
};
use crate::rng::{stream, substream};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct PPOConfig {
    pub gamma: f64,
    pub lambda: f64,
    pub clip: f64,
    pub value_coef: f64,
    pub entropy_coef: f64,
    pub learning_rate: f64,
    pub rollouts_per_epoch: usize,
    pub update_iters: usize,
    pub epochs: usize,
    pub grad_clip: f64,
    pub minibatch_episodes: usize,
    pub eval_scenarios: usize,
    pub seed: u64,
    #[serde(default = "default_true")]
    pub advantage_norm: bool,
    /// Discount per elapsed hour (gamma^dt) instead of per decision step.
    #[serde(default)]
    pub per_hour_discount: bool,
}

fn default_true() -> bool {
    true
}

impl Default for PPOConfig {
    fn default() -> Self {
        PPOConfig {
            gamma: 0.99,
            lambda: 0.95,
            clip: 0.2,
            value_coef: 0.5,
            entropy_coef: 0.01,
            learning_rate: 3e-4,
            rollouts_per_epoch: 16,
            update_iters: 4,
            epochs: 40,
            grad_clip: 0.5,
            minibatch_episodes: 4,
            eval_scenarios: 10,
            seed: 0,
            advantage_norm: true,
            per_hour_discount: false,
        }
    }
}

impl PPOConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::Config("gamma must lie in (0,1]".into()));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::Config("lambda must lie in [0,1]".into()));
        }
        if self.clip <= 0.0 {
            return Err(Error::Config("clip must be > 0".into()));
        }
        if self.value_coef < 0.0 || self.entropy_coef < 0.0 {
            return Err(Error::Config("loss coefficients must be >= 0".into()));
        }
        if self.rollouts_per_epoch == 0 || self.epochs == 0 || self.update_iters == 0 {
            return Err(Error::Config("epochs/rollouts/iters must be >= 1".into()));
        }
        Ok(())
    }
}

/// One decision step as stored in the rollout buffer.
#[derive(Debug, Clone)]
pub struct TrajStep {
    pub encoded: EncodedState,
    /// Index into `encoded.crews` for each crew that acted, in order.
    pub crew_rows: Vec<usize>,
    /// Effective per-crew masks at selection time (slate indexing).
    pub masks: Vec<Vec<bool>>,
    pub chosen: Vec<usize>,
    pub reward: f64,
    pub elapsed_h: f64,
    pub done: bool,
    pub behavior_log_prob: f64,
    pub value: f64,
    /// Memory entering this step.
    pub memory: MemoryState,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub seed: u64,
    pub steps: Vec<TrajStep>,
    pub episode_return: f64,
    pub metrics: EpisodeMetrics,
}

/// Per-step advantage and return target.
#[derive(Debug, Clone)]
pub struct AdvantageEstimate {
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
    pub mean: f64,
    pub std: f64,
}

/// Backward GAE recursion: delta_t = r_t + g V(s_{t+1}) - V(s_t),
/// A_t = delta_t + g*lambda*A_{t+1}; values carries one bootstrap entry
/// past the horizon (zero at true termination).
pub fn compute_gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    discounts: &[f64],
    lambda: f64,
) -> Result<AdvantageEstimate> {
    let n = rewards.len();
    if values.len() != n + 1 || dones.len() != n || discounts.len() != n {
        return Err(Error::Contract(format!(
            "gae length mismatch: {n} rewards, {} values, {} dones",
            values.len(),
            dones.len()
        )));
    }
    let mut advantages = vec![0.0; n];
    let mut acc = 0.0;
    for t in (0..n).rev() {
        let next_value = if dones[t] { 0.0 } else { values[t + 1] };
        let delta = rewards[t] + discounts[t] * next_value - values[t];
        acc = delta
            + if dones[t] {
                0.0
            } else {
                discounts[t] * lambda * acc
            };
        advantages[t] = acc;
    }
    let returns: Vec<f64> = advantages
        .iter()
        .zip(values)
        .map(|(a, v)| a + v)
        .collect();
    let mean = advantages.iter().sum::<f64>() / n.max(1) as f64;
    let var = advantages
        .iter()
        .map(|a| (a - mean) * (a - mean))
        .sum::<f64>()
        / n.max(1) as f64;
    Ok(AdvantageEstimate {
        advantages,
        returns,
        mean,
        std: var.sqrt(),
    })
}

fn step_discount(config: &PPOConfig, elapsed_h: f64) -> f64 {
    if config.per_hour_discount {
        config.gamma.powf(elapsed_h)
    } else {
        config.gamma
    }
}

/// Plays one seeded episode with masked sampling, recording everything PPO
/// needs. The memory threads through the recurrent cell; selection uses an
/// episode-specific random stream.
pub fn collect_episode(
    params: &PolicyParams,
    env: &mut RestorationEnv,
    mut state: DispatchState,
    seed: u64,
    mode: SelectMode,
) -> Result<Trajectory> {
    let slate = params.slate.clone();
    let mut rng = substream(seed, stream::ROLLOUT);
    let mut memory = MemoryState::zeros(slate.hidden);
    let mut steps = Vec::new();
    let mut episode_return = 0.0;
    let mut guard = 0usize;
    while !env.is_done() {
        guard += 1;
        if guard > 100_000 {
            return Err(Error::Numerical(format!(
                "episode {seed} did not terminate"
            )));
        }
        let mask = env.build_mask(&state);
        let encoded = encode_state(&state, &slate)?;
        let (logits, value, next_memory) = forward(params, &encoded, &memory)?;
        let (action, dist) = select_action(&logits, &mask, &encoded, &slate, mode, &mut rng)?;
        let crew_rows: Vec<usize> = dist
            .crews
            .iter()
            .map(|id| encoded.crews.iter().position(|c| c == id).unwrap())
            .collect();
        let (next_state, reward, done, info) = env.step(&action)?;
        steps.push(TrajStep {
            encoded,
            crew_rows,
            masks: dist.masks.clone(),
            chosen: dist.chosen.clone(),
            reward,
            elapsed_h: info.interval.elapsed_h,
            done,
            behavior_log_prob: dist.joint_log_prob,
            value,
            memory: memory.clone(),
        });
        episode_return += reward;
        memory = next_memory;
        state = next_state;
        if done {
            break;
        }
    }
    Ok(Trajectory {
        seed,
        steps,
        episode_return,
        metrics: env.finish_metrics(),
    })
}

/// Environment factory: fresh seeded episode instances.
pub type EnvFactory<'a> = dyn Fn(u64) -> Result<(RestorationEnv, DispatchState)> + 'a;

/// Collects `count` full episodes with sampling selection.
pub fn collect_rollouts(
    params: &PolicyParams,
    factory: &EnvFactory,
    seed_start: u64,
    count: usize,
) -> Result<Vec<Trajectory>> {
    let mut out = Vec::with_capacity(count);
    for i in 0..count {
        let seed = seed_start + i as u64;
        let (mut env, state) = factory(seed)?;
        out.push(collect_episode(
            params,
            &mut env,
            state,
            seed,
            SelectMode::Sample,
        )?);
    }
    Ok(out)
}

/// Loss diagnostics averaged over the steps they were computed on.
#[derive(Debug, Clone, Default)]
pub struct LossStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub grad_norm: f64,
    pub steps: usize,
}

pub(crate) struct EpisodeAdvantages {
    pub(crate) advantages: Vec<f64>,
    pub(crate) returns: Vec<f64>,
}

pub(crate) fn episode_advantages(config: &PPOConfig, traj: &Trajectory) -> Result<EpisodeAdvantages> {
    let rewards: Vec<f64> = traj.steps.iter().map(|s| s.reward).collect();
    let mut values: Vec<f64> = traj.steps.iter().map(|s| s.value).collect();
    values.push(0.0); // bootstrap at termination
    let dones: Vec<bool> = traj.steps.iter().map(|s| s.done).collect();
    let discounts: Vec<f64> = traj
        .steps
        .iter()
        .map(|s| step_discount(config, s.elapsed_h))
        .collect();
    let est = compute_gae(&rewards, &values, &dones, &discounts, config.lambda)?;
    Ok(EpisodeAdvantages {
        advantages: est.advantages,
        returns: est.returns,
    })
}

/// Builds the total PPO loss for a set of episodes on one tape and returns
/// (loss node, per-part sums, step count). Advantages arrive precomputed
/// (and normalized by the caller).
pub(crate) fn build_loss(
    tape: &mut Tape,
    tp: &TapeParams,
    slate: &SlateConfig,
    episodes: &[(&Trajectory, &[f64], &[f64])],
    config: &PPOConfig,
) -> (crate::nn::NodeId, f64, f64, f64, usize) {
    let mut policy_terms = Vec::new();
    let mut value_terms = Vec::new();
    let mut entropy_terms = Vec::new();
    let mut n_steps = 0usize;
    for (traj, advantages, returns) in episodes {
        let mut mem = tape.leaf(Tensor::from_vec(
            1,
            slate.hidden,
            traj.steps[0].memory.h.clone(),
        ));
        for (t, step) in traj.steps.iter().enumerate() {
            let out = forward_on_tape(tape, tp, slate, &step.encoded, mem);
            mem = out.memory;
            n_steps += 1;
            // Joint log-prob and entropy over the crews that acted.
            let mut logp_parts = Vec::new();
            let mut entropy_parts = Vec::new();
            for (j, &row) in step.crew_rows.iter().enumerate() {
                let lsm = tape.masked_log_softmax(out.crew_logits[row], step.masks[j].clone());
                logp_parts.push(tape.gather(lsm, step.chosen[j]));
                // H = -sum p log p over feasible entries.
                let p = tape.exp(lsm);
                let plogp = tape.mul(p, lsm);
                let h = tape.sum_all(plogp);
                entropy_parts.push(tape.scale(h, -1.0));
            }
            let logp_new = sum_scalars(tape, &logp_parts);
            let entropy = sum_scalars(tape, &entropy_parts);
            let adv = advantages[t];
            // ratio = exp(logp_new - logp_old); surrogate min with clip.
            let logp_old = tape.scalar(step.behavior_log_prob);
            let diff = tape.sub(logp_new, logp_old);
            let ratio = tape.exp(diff);
            let unclipped = tape.scale(ratio, adv);
            let clipped_ratio = tape.clamp(ratio, 1.0 - config.clip, 1.0 + config.clip);
            let clipped = tape.scale(clipped_ratio, adv);
            let surrogate = tape.min_elem(unclipped, clipped);
            policy_terms.push(tape.scale(surrogate, -1.0));
            // Value regression to the return target.
            let target = tape.scalar(returns[t]);
            let err = tape.sub(out.value, target);
            let sq = tape.mul(err, err);
            value_terms.push(sq);
            entropy_terms_push(&mut entropy_terms, entropy);
        }
    }
    let policy_sum = sum_scalars(tape, &policy_terms);
    let value_sum = sum_scalars(tape, &value_terms);
    let entropy_sum = sum_scalars(tape, &entropy_terms);
    let inv_n = 1.0 / n_steps.max(1) as f64;
    let policy_mean = tape.scale(policy_sum, inv_n);
    let value_mean = tape.scale(value_sum, inv_n * config.value_coef);
    let entropy_mean = tape.scale(entropy_sum, -inv_n * config.entropy_coef);
    let partial = tape.add(policy_mean, value_mean);
    let loss = tape.add(partial, entropy_mean);
    (
        loss,
        tape.value(policy_sum).item() * inv_n,
        tape.value(value_sum).item() * inv_n,
        tape.value(entropy_sum).item() * inv_n,
        n_steps,
    )
}

fn entropy_terms_push(terms: &mut Vec<crate::nn::NodeId>, node: crate::nn::NodeId) {
    terms.push(node);
}

fn sum_scalars(tape: &mut Tape, parts: &[crate::nn::NodeId]) -> crate::nn::NodeId {
    match parts.len() {
        0 => tape.scalar(0.0),
        1 => parts[0],
        _ => {
            let row = tape.concat_cols(parts);
            tape.sum_all(row)
        }
    }
}

/// Normalized advantages and raw returns for a batch of trajectories.
fn batch_advantages(
    config: &PPOConfig,
    trajectories: &[Trajectory],
) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    let mut advs = Vec::with_capacity(trajectories.len());
    let mut rets = Vec::with_capacity(trajectories.len());
    for traj in trajectories {
        let e = episode_advantages(config, traj)?;
        advs.push(e.advantages);
        rets.push(e.returns);
    }
    if config.advantage_norm {
        let all: Vec<f64> = advs.iter().flatten().copied().collect();
        let n = all.len().max(1) as f64;
        let mean = all.iter().sum::<f64>() / n;
        let std = (all.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n)
            .sqrt()
            .max(1e-8);
        for ep in advs.iter_mut() {
            for a in ep.iter_mut() {
                *a = (*a - mean) / std;
            }
        }
    }
    Ok((advs, rets))
}

/// One PPO update over the collected trajectories: U passes of
/// whole-episode minibatches, gradient clipping, Adam. Returns averaged
/// diagnostics. Errors on non-finite loss with a diagnostic snapshot.
pub fn ppo_update(
    params: &mut PolicyParams,
    optimizer: &mut Adam,
    trajectories: &[Trajectory],
    config: &PPOConfig,
    rng: &mut ChaCha20Rng,
) -> Result<LossStats> {
    config.validate()?;
    let nonempty: Vec<&Trajectory> = trajectories.iter().filter(|t| !t.steps.is_empty()).collect();
    if nonempty.is_empty() {
        return Err(Error::Contract("ppo_update needs non-empty trajectories".into()));
    }
    let owned: Vec<Trajectory> = nonempty.iter().map(|t| (*t).clone()).collect();
    let (advs, rets) = batch_advantages(config, &owned)?;
    let slate = params.slate.clone();
    let mut stats = LossStats::default();
    let mut stat_batches = 0usize;
    for _iter in 0..config.update_iters {
        let mut order: Vec<usize> = (0..owned.len()).collect();
        for i in (1..order.len()).rev() {
            let j = rng.gen_range(0..=i);
            order.swap(i, j);
        }
        for chunk in order.chunks(config.minibatch_episodes.max(1)) {
            let episodes: Vec<(&Trajectory, &[f64], &[f64])> = chunk
                .iter()
                .map(|&i| (&owned[i], advs[i].as_slice(), rets[i].as_slice()))
                .collect();
            let mut tape = Tape::new();
            let tp = TapeParams::insert(&mut tape, params);
            let (loss, pl, vl, ent, _n) = build_loss(&mut tape, &tp, &slate, &episodes, config);
            let loss_val = tape.value(loss).item();
            if !loss_val.is_finite() {
                return Err(Error::Numerical(format!(
                    "non-finite loss {loss_val} (policy {pl:.4e}, value {vl:.4e}, entropy {ent:.4e}, minibatch {chunk:?})"
                )));
            }
            tape.backward(loss);
            let mut grads: Vec<Vec<f64>> = tp
                .ids
                .iter()
                .map(|id| tape.grad(*id).to_vec())
                .collect();
            let norm = global_norm(&grads);
            if config.grad_clip > 0.0 && norm > config.grad_clip {
                let scale = config.grad_clip / norm;
                for g in grads.iter_mut() {
                    for x in g.iter_mut() {
                        *x *= scale;
                    }
                }
            }
            optimizer.apply(params, &grads, config.learning_rate)?;
            stats.policy_loss += pl;
            stats.value_loss += vl;
            stats.entropy += ent;
            stats.grad_norm += norm;
            stat_batches += 1;
        }
    }
    if !params.all_finite() {
        return Err(Error::Numerical("parameters became non-finite".into()));
    }
    let d = stat_batches.max(1) as f64;
    stats.policy_loss /= d;
    stats.value_loss /= d;
    stats.entropy /= d;
    stats.grad_norm /= d;
    stats.steps = owned.iter().map(|t| t.steps.len()).sum();
    Ok(stats)
}

fn global_norm(grads: &[Vec<f64>]) -> f64 {
    grads
        .iter()
        .flat_map(|g| g.iter())
        .map(|x| x * x)
        .sum::<f64>()
        .sqrt()
}

/// Total loss at the given parameters (no update), used by grad_check.
fn batch_loss(
    params: &PolicyParams,
    trajectories: &[Trajectory],
    advs: &[Vec<f64>],
    rets: &[Vec<f64>],
    config: &PPOConfig,
) -> (f64, Vec<Vec<f64>>) {
    let slate = params.slate.clone();
    let episodes: Vec<(&Trajectory, &[f64], &[f64])> = trajectories
        .iter()
        .enumerate()
        .map(|(i, t)| (t, advs[i].as_slice(), rets[i].as_slice()))
        .collect();
    let mut tape = Tape::new();
    let tp = TapeParams::insert(&mut tape, params);
    let (loss, ..) = build_loss(&mut tape, &tp, &slate, &episodes, config);
    let v = tape.value(loss).item();
    tape.backward(loss);
    let grads = tp.ids.iter().map(|id| tape.grad(*id).to_vec()).collect();
    (v, grads)
}

/// Reverse-mode gradients versus central finite differences over a random
/// subset of at least `min_weights` coordinates. Returns the max relative
/// error, defined as |g - fd| / max(|g|, |fd|, 1e-5); the floor turns the
/// comparison into an absolute one (threshold 1e-9 at tolerance 1e-4) for
/// coordinates whose gradient sits at finite-difference noise level.
pub fn grad_check(
    params: &PolicyParams,
    trajectories: &[Trajectory],
    config: &PPOConfig,
    min_weights: usize,
    seed: u64,
) -> Result<f64> {
    let usable: Vec<Trajectory> = trajectories
        .iter()
        .filter(|t| !t.steps.is_empty())
        .cloned()
        .collect();
    if usable.is_empty() {
        return Err(Error::Contract("grad_check needs non-empty trajectories".into()));
    }
    let (advs, rets) = batch_advantages(config, &usable)?;
    let (_, grads) = batch_loss(params, &usable, &advs, &rets, config);
    let mut rng = substream(seed, stream::GRAD_CHECK);
    let names = PolicyParams::tensor_names();
    let sizes: Vec<usize> = params.tensors().iter().map(|(_, t)| t.len()).collect();
    let total: usize = sizes.iter().sum();
    let count = min_weights.min(total);
    let h = 1e-5;
    let mut max_rel: f64 = 0.0;
    let mut worst = (0usize, 0usize, 0.0, 0.0);
    for _ in 0..count {
        let flat = rng.gen_range(0..total);
        let (mut ti, mut off) = (0usize, flat);
        while off >= sizes[ti] {
            off -= sizes[ti];
            ti += 1;
        }
        let mut plus = params.clone();
        plus.tensors_mut()[ti].1.data[off] += h;
        let (lp, _) = batch_loss_value_only(&plus, &usable, &advs, &rets, config);
        let mut minus = params.clone();
        minus.tensors_mut()[ti].1.data[off] -= h;
        let (lm, _) = batch_loss_value_only(&minus, &usable, &advs, &rets, config);
        let fd = (lp - lm) / (2.0 * h);
        let g = grads[ti][off];
        let rel = (g - fd).abs() / fd.abs().max(g.abs()).max(1e-5);
        if rel > max_rel {
            max_rel = rel;
            worst = (ti, off, g, fd);
        }
    }
    if max_rel > 1e-3 {
        // Keep the diagnostic close to the failure.
        eprintln!(
            "grad_check worst: {}[{}] analytic {:.6e} vs fd {:.6e}",
            names[worst.0], worst.1, worst.2, worst.3
        );
    }
    Ok(max_rel)
}

fn batch_loss_value_only(
    params: &PolicyParams,
    trajectories: &[Trajectory],
    advs: &[Vec<f64>],
    rets: &[Vec<f64>],
    config: &PPOConfig,
) -> (f64, usize) {
    let slate = params.slate.clone();
    let episodes: Vec<(&Trajectory, &[f64], &[f64])> = trajectories
        .iter()
        .enumerate()
        .map(|(i, t)| (t, advs[i].as_slice(), rets[i].as_slice()))
        .collect();
    let mut tape = Tape::new();
    let tp = TapeParams::insert(&mut tape, params);
    let (loss, _, _, _, n) = build_loss(&mut tape, &tp, &slate, &episodes, config);
    (tape.value(loss).item(), n)
}

/// Greedy (or low-temperature) evaluation over fixed scenario seeds.
/// Returns per-episode metrics and undiscounted episode rewards.
pub fn evaluate_policy(
    params: &PolicyParams,
    factory: &EnvFactory,
    seeds: &[u64],
    mode: SelectMode,
) -> Result<Vec<(EpisodeMetrics, f64)>> {
    let mut out = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let (mut env, state) = factory(seed)?;
        let traj = collect_episode(params, &mut env, state, seed, mode)?;
        out.push((traj.metrics, traj.episode_return));
    }
    Ok(out)
}

/// One row per epoch of the training log.
#[derive(Debug, Clone)]
pub struct EpochRow {
    pub epoch: usize,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub eval_reward: f64,
}

pub struct TrainOutcome {
    pub params: PolicyParams,
    pub optimizer: Adam,
    pub best_params: PolicyParams,
    pub best_epoch: usize,
    pub best_eval_reward: f64,
    pub log: Vec<EpochRow>,
}

/// Optimizer state plus progress markers for resuming a run.
pub struct ResumeState {
    pub optimizer: Adam,
    pub completed_epochs: usize,
    pub best_eval_reward: f64,
    pub best_epoch: usize,
    pub best_params: PolicyParams,
}

pub const TRAIN_LOG_HEADER: &str = "epoch\tpolicy_loss\tvalue_loss\tentropy\teval_reward";

pub fn render_train_log(rows: &[EpochRow]) -> String {
    let mut s = String::from(TRAIN_LOG_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\n",
            r.epoch, r.policy_loss, r.value_loss, r.entropy, r.eval_reward
        ));
    }
    s
}

/// Full training loop: per epoch, collect rollouts on training seeds,
/// update, then evaluate greedily on held-out seeds; the best-evaluation
/// parameters are retained. Train and eval seed ranges must not overlap.
/// Passing a `resume` state continues the epoch numbering (and minibatch
/// stream) where the previous run stopped.
#[allow(clippy::too_many_arguments)]
pub fn train(
    mut params: PolicyParams,
    config: &PPOConfig,
    train_factory: &EnvFactory,
    eval_factory: &EnvFactory,
    train_seed_start: u64,
    eval_seeds: &[u64],
    resume: Option<ResumeState>,
    mut on_epoch: impl FnMut(&EpochRow, &PolicyParams, &Adam),
) -> Result<TrainOutcome> {
    config.validate()?;
    let train_end = train_seed_start + (config.epochs * config.rollouts_per_epoch) as u64;
    if eval_seeds
        .iter()
        .any(|s| (train_seed_start..train_end).contains(s))
    {
        return Err(Error::Config(
            "train and eval seed ranges overlap".into(),
        ));
    }
    let (mut optimizer, start_epoch, mut best_eval, mut best_epoch, mut best_params) =
        match resume {
            Some(r) => (
                r.optimizer,
                r.completed_epochs,
                r.best_eval_reward,
                r.best_epoch,
                r.best_params,
            ),
            None => (
                Adam::new(&params),
                0,
                f64::NEG_INFINITY,
                0,
                params.clone(),
            ),
        };
    let mut rng = substream(config.seed, stream::MINIBATCH);
    // Replays the minibatch shuffles of completed epochs so a resumed run
    // continues the same stream.
    for _ in 0..start_epoch * config.update_iters {
        let mut order: Vec<usize> = (0..config.rollouts_per_epoch).collect();
        for i in (1..order.len()).rev() {
            let j = rng.gen_range(0..=i);
            order.swap(i, j);
        }
    }
    let mut log = Vec::with_capacity(config.epochs);
    for epoch in (start_epoch + 1)..=config.epochs {
        let seed0 = train_seed_start + ((epoch - 1) * config.rollouts_per_epoch) as u64;
        let trajectories =
            collect_rollouts(&params, train_factory, seed0, config.rollouts_per_epoch)?;
        let stats = ppo_update(&mut params, &mut optimizer, &trajectories, config, &mut rng)?;
        let evals = evaluate_policy(&params, eval_factory, eval_seeds, SelectMode::Greedy)?;
        let eval_reward = if evals.is_empty() {
            0.0
        } else {
            evals.iter().map(|(_, r)| r).sum::<f64>() / evals.len() as f64
        };
        let row = EpochRow {
            epoch,
            policy_loss: stats.policy_loss,
            value_loss: stats.value_loss,
            entropy: stats.entropy,
            eval_reward,
        };
        if eval_reward > best_eval {
            best_eval = eval_reward;
            best_params = params.clone();
            best_epoch = epoch;
        }
        on_epoch(&row, &params, &optimizer);
        log.push(row);
    }
    Ok(TrainOutcome {
        params,
        optimizer,
        best_params,
        best_epoch,
        best_eval_reward: best_eval,
        log,
    })
}
