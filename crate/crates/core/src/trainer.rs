//! The interaction-level training loop for one seed, evaluation of frozen
//! policies, and per-interaction metrics.
//!
//! Interaction `j` is rolled out with `z^j` encoded from `tau^{j-1}`, stored,
//! handed to the environment's strategy dynamics, and then followed by the
//! representation and RL updates for that interaction.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::agents::{
    smirl_reward, ActorCritic, AgentKind, Conditioning, LossRecord, SacBatch, SacConfig, SmirlDensity,
};
use crate::envs::{AnyEnv, HiPMDPEnv};
use crate::latent::{train_representation, LatentMode, LatentModel, LatentModelConfig};
use crate::linalg::Matrix;
use crate::replay::{ReplayBuffer, DEFAULT_CAPACITY};
use crate::rng::{substream, SeedRng};
use crate::stability::{beta_at, flag_reward, stability_reward, total_reward, StabilityConfig, StabilityMetric};
use crate::types::{euclidean, InteractionTrajectory, LatentStrategy, Transition};
use crate::{Error, Result};

pub const DEFAULT_WARMUP: u64 = 20;

const STREAM_INIT: u64 = 0;
const STREAM_ACT: u64 = 1;
const STREAM_REPR: u64 = 2;
const STREAM_RL: u64 = 3;
const STREAM_ENV: u64 = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainerConfig {
    pub agent: AgentKind,
    pub latent: LatentModelConfig,
    pub stability: StabilityConfig,
    pub sac: SacConfig,
    /// Interactions of uniform random actions before any update.
    pub warmup_interactions: u64,
    /// Representation updates per interaction; `None` means one per step.
    pub representation_updates: Option<usize>,
    pub representation_batch: usize,
    /// RL updates per interaction; `None` means one per step.
    pub rl_updates: Option<usize>,
    /// Stored interactions.
    pub replay_capacity: usize,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        TrainerConfig {
            agent: AgentKind::Sili,
            latent: LatentModelConfig::default(),
            stability: StabilityConfig { beta: crate::stability::DEFAULT_BETA, metric: StabilityMetric::Discrete, anneal: None },
            sac: SacConfig::default(),
            warmup_interactions: DEFAULT_WARMUP,
            representation_updates: None,
            representation_batch: 64,
            rl_updates: None,
            replay_capacity: DEFAULT_CAPACITY,
        }
    }
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<()> {
        self.stability.validate()?;
        self.sac.validate()?;
        if self.representation_batch == 0 || self.replay_capacity < 2 {
            return Err(Error::invalid("representation batch must be positive and replay must hold two interactions"));
        }
        let cond = self.agent.conditioning(self.stability.metric);
        if cond.uses_latents() {
            let expected = match self.stability.metric {
                StabilityMetric::Euclidean => Some(LatentMode::Continuous),
                StabilityMetric::Discrete => Some(LatentMode::Discrete),
                StabilityMetric::Partial => None,
            };
            if let Some(mode) = expected {
                if mode != self.latent.mode {
                    return Err(Error::invalid(format!(
                        "{:?} stability needs {:?} latents, config has {:?}",
                        self.stability.metric, mode, self.latent.mode
                    )));
                }
            }
        }
        Ok(())
    }
}

/// One row per (seed, interaction). Stability and change fields come from the
/// ground-truth strategy and are for analysis only.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub seed: u64,
    pub interaction: u64,
    pub task_reward: f64,
    pub stability_reward: f64,
    pub beta: f64,
    pub strategy_changed: bool,
}

/// Ground-truth stability of one interaction: did the opponent's strategy
/// change between the start of this interaction and the start of the next?
/// Returns the summed per-step stability reward and the change indicator.
pub fn ground_truth_stability(
    before: &LatentStrategy,
    after: &LatentStrategy,
    flags: usize,
    metric: StabilityMetric,
    horizon: usize,
) -> (f64, bool) {
    let moved = before != after;
    let changed = moved || flags > 0;
    let h = horizon as f64;
    let reward = match metric {
        StabilityMetric::Partial => -(flags as f64),
        StabilityMetric::Discrete => {
            if moved {
                -h
            } else {
                0.0
            }
        }
        StabilityMetric::Euclidean => -h * euclidean(&before.to_vec(), &after.to_vec()),
    };
    (reward, changed)
}

/// Anything that can act in an environment for evaluation.
pub trait Policy {
    /// Only the Oracle agent sees ground truth.
    fn wants_oracle(&self) -> bool {
        false
    }

    /// Called before each interaction with the previous one, if any.
    fn begin_interaction(&mut self, _prev: Option<&InteractionTrajectory>) -> Result<()> {
        Ok(())
    }

    fn act(&mut self, state: &[f64], oracle: Option<&[f64]>) -> Result<Vec<f64>>;
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mean_task: f64,
    pub mean_stability: f64,
    pub task_returns: Vec<f64>,
    pub stability_returns: Vec<f64>,
    pub strategy_changed: Vec<bool>,
}

/// Runs `episodes` interactions without learning, continuing the
/// environment's current strategy state.
pub fn evaluate<P: Policy + ?Sized, E: HiPMDPEnv + ?Sized>(
    policy: &mut P,
    env: &mut E,
    episodes: usize,
) -> Result<EvalReport> {
    let mut report = EvalReport::default();
    let mut prev: Option<InteractionTrajectory> = None;
    let h = env.horizon();
    for e in 0..episodes {
        policy.begin_interaction(prev.as_ref())?;
        let mut s = env.reset_interaction()?;
        let before = env.true_strategy();
        let mut transitions = Vec::with_capacity(h);
        let mut flags = 0;
        for _ in 0..h {
            let oracle = if policy.wants_oracle() { Some(env.oracle_observation()) } else { None };
            let a = policy.act(&s, oracle.as_deref())?;
            let out = env.step(&a)?;
            flags += usize::from(out.change_flag == Some(true));
            transitions.push(Transition {
                state: s,
                action: a,
                task_reward: out.reward,
                next_state: out.next_state.clone(),
                change_flag: out.change_flag,
            });
            s = out.next_state;
        }
        let traj = InteractionTrajectory::new(e as u64 + 1, transitions)?;
        env.end_interaction(&traj)?;
        let (stab, changed) = ground_truth_stability(&before, &env.true_strategy(), flags, env.strategy_metric(), h);
        report.task_returns.push(traj.task_return());
        report.stability_returns.push(stab);
        report.strategy_changed.push(changed);
        prev = Some(traj);
    }
    if episodes > 0 {
        report.mean_task = report.task_returns.iter().sum::<f64>() / episodes as f64;
        report.mean_stability = report.stability_returns.iter().sum::<f64>() / episodes as f64;
    }
    Ok(report)
}

/// A frozen agent: networks plus the latent state needed to keep acting.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AgentSnapshot {
    pub kind: AgentKind,
    pub metric: StabilityMetric,
    pub actor_critic: ActorCritic,
    pub latent: Option<LatentModel>,
    /// Latent of the most recent interaction, used as `z^{j-1}` next.
    pub last_latent: Option<LatentStrategy>,
    pub last_trajectory: Option<InteractionTrajectory>,
    #[serde(skip)]
    current: Option<LatentStrategy>,
    #[serde(skip)]
    started: bool,
}

impl AgentSnapshot {
    pub fn conditioning(&self) -> Conditioning {
        self.kind.conditioning(self.metric)
    }

    fn placeholder(&self) -> LatentStrategy {
        match &self.latent {
            Some(m) => m.sentinel(),
            None => LatentStrategy::ChangeFlag(false),
        }
    }
}

impl Policy for AgentSnapshot {
    fn wants_oracle(&self) -> bool {
        self.conditioning() == Conditioning::Oracle
    }

    fn begin_interaction(&mut self, prev: Option<&InteractionTrajectory>) -> Result<()> {
        // The first evaluated interaction continues from training's last one.
        let prev = match (prev, self.started) {
            (Some(p), _) => Some(p.clone()),
            (None, false) => self.last_trajectory.clone(),
            (None, true) => None,
        };
        if self.started {
            self.last_latent = self.current.take();
        }
        self.started = true;
        let z = match (&self.latent, &prev) {
            (Some(m), Some(p)) => m.encode_mode(p)?,
            _ => self.placeholder(),
        };
        self.current = Some(z);
        Ok(())
    }

    fn act(&mut self, state: &[f64], oracle: Option<&[f64]>) -> Result<Vec<f64>> {
        let placeholder = self.placeholder();
        let z = self.current.clone().unwrap_or_else(|| placeholder.clone());
        let z_prev = self.last_latent.clone().unwrap_or(placeholder);
        let mut input = Vec::with_capacity(self.actor_critic.obs_dim());
        self.conditioning().policy_input(state, &z, &z_prev, oracle.unwrap_or(&[]), &mut input);
        // Deterministic acting draws no randomness.
        let mut unused = substream(0, 0);
        self.actor_critic.act(&input, true, &mut unused)
    }
}

/// Per-interaction side data kept alongside the replay buffer.
#[derive(Debug, Clone)]
struct Cached {
    z: LatentStrategy,
    z_prev: LatentStrategy,
    /// Oracle observation before each step (empty unless the agent is Oracle).
    oracle: Vec<Vec<f64>>,
    /// SMiRL density reward of each step's next state.
    smirl: Vec<f64>,
}

/// Training state for one seed.
pub struct Trainer {
    seed: u64,
    env: AnyEnv,
    kind: AgentKind,
    cond: Conditioning,
    stability: StabilityConfig,
    ac: ActorCritic,
    latent: Option<LatentModel>,
    smirl: Option<SmirlDensity>,
    buffer: ReplayBuffer,
    cache: BTreeMap<u64, Cached>,
    next_index: u64,
    warmup: u64,
    repr_updates: usize,
    repr_batch: usize,
    rl_updates: usize,
    rl_batch: usize,
    act_rng: SeedRng,
    repr_rng: SeedRng,
    rl_rng: SeedRng,
    last_losses: Option<LossRecord>,
    last_repr_loss: Option<f64>,
}

impl Trainer {
    pub fn new(mut env: AnyEnv, cfg: &TrainerConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        env.reseed(substream(seed, STREAM_ENV).gen());
        let kind = cfg.agent;
        let cond = kind.conditioning(cfg.stability.metric);
        let stability = kind.effective_stability(&cfg.stability);
        let h = env.horizon();
        let (sd, ad) = (env.obs_dim(), env.action_dim());
        let mut init = substream(seed, STREAM_INIT);
        let latent = if cond.uses_latents() {
            Some(LatentModel::new(sd, ad, h, &cfg.latent, &mut init)?)
        } else {
            None
        };
        let input = sd + cond.extra_dim(cfg.latent.latent_dim, env.oracle_dim());
        let ac = ActorCritic::new(input, ad, env.action_bound(), &cfg.sac, &mut init)?;
        let smirl = (kind == AgentKind::Smirl).then(|| SmirlDensity::new(sd));
        Ok(Trainer {
            seed,
            kind,
            cond,
            stability,
            ac,
            latent,
            smirl,
            buffer: ReplayBuffer::new(cfg.replay_capacity, seed)?,
            cache: BTreeMap::new(),
            next_index: 1,
            warmup: cfg.warmup_interactions,
            repr_updates: cfg.representation_updates.unwrap_or(h),
            repr_batch: cfg.representation_batch,
            rl_updates: cfg.rl_updates.unwrap_or(h),
            rl_batch: cfg.sac.batch_size,
            act_rng: substream(seed, STREAM_ACT),
            repr_rng: substream(seed, STREAM_REPR),
            rl_rng: substream(seed, STREAM_RL),
            last_losses: None,
            last_repr_loss: None,
            env,
        })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn env(&self) -> &AnyEnv {
        &self.env
    }

    pub fn buffer(&self) -> &ReplayBuffer {
        &self.buffer
    }

    pub fn interactions_done(&self) -> u64 {
        self.next_index - 1
    }

    pub fn stored_transitions(&self) -> usize {
        self.buffer.iter().map(|t| t.len()).sum()
    }

    pub fn last_losses(&self) -> Option<LossRecord> {
        self.last_losses
    }

    pub fn last_representation_loss(&self) -> Option<f64> {
        self.last_repr_loss
    }

    fn placeholder(&self) -> LatentStrategy {
        match &self.latent {
            Some(m) => m.sentinel(),
            None => LatentStrategy::ChangeFlag(false),
        }
    }

    /// Plays, stores and learns from one interaction.
    pub fn run_interaction(&mut self) -> Result<MetricRow> {
        let j = self.next_index;
        let h = self.env.horizon();
        let z = match (&self.latent, self.buffer.latest()) {
            (Some(m), Some(prev)) if prev.index + 1 == j => m.encode_mode(prev)?,
            _ => self.placeholder(),
        };
        let z_prev = self.cache.get(&(j - 1)).map(|c| c.z.clone()).unwrap_or_else(|| self.placeholder());

        let mut s = self.env.reset_interaction()?;
        let before = self.env.true_strategy();
        if let Some(d) = &mut self.smirl {
            if d.count() == 0 {
                d.observe(&s)?;
            }
        }
        let bound = self.env.action_bound();
        let ad = self.env.action_dim();
        let mut transitions = Vec::with_capacity(h);
        let mut oracle = Vec::new();
        let mut smirl = Vec::new();
        let mut flags = 0;
        let mut input = Vec::with_capacity(self.ac.obs_dim());
        for _ in 0..h {
            let o = if self.cond == Conditioning::Oracle { self.env.oracle_observation() } else { Vec::new() };
            let a = if j <= self.warmup {
                (0..ad).map(|_| self.act_rng.gen_range(-bound..=bound)).collect()
            } else {
                input.clear();
                self.cond.policy_input(&s, &z, &z_prev, &o, &mut input);
                self.ac.act(&input, false, &mut self.act_rng)?
            };
            let out = self.env.step(&a)?;
            if let Some(d) = &mut self.smirl {
                smirl.push(smirl_reward(d, &out.next_state)?);
                d.observe(&out.next_state)?;
            }
            flags += usize::from(out.change_flag == Some(true));
            oracle.push(o);
            transitions.push(Transition {
                state: s,
                action: a,
                task_reward: out.reward,
                next_state: out.next_state.clone(),
                change_flag: out.change_flag,
            });
            s = out.next_state;
        }
        let traj = InteractionTrajectory::new(j, transitions)?;
        self.env.end_interaction(&traj)?;
        let after = self.env.true_strategy();
        let (stab, changed) = ground_truth_stability(&before, &after, flags, self.env.strategy_metric(), h);
        let row = MetricRow {
            seed: self.seed,
            interaction: j,
            task_reward: traj.task_return(),
            stability_reward: stab,
            beta: beta_at(&self.stability, j),
            strategy_changed: changed,
        };

        self.buffer.push(traj)?;
        self.cache.insert(j, Cached { z, z_prev, oracle, smirl });
        if let Some(oldest) = self.buffer.oldest_index() {
            // Keep the predecessor of the oldest stored interaction for z_prev.
            while let Some((&k, _)) = self.cache.first_key_value() {
                if k + 1 >= oldest {
                    break;
                }
                self.cache.remove(&k);
            }
        }
        self.next_index += 1;

        if j > self.warmup {
            self.update()?;
        }
        Ok(row)
    }

    pub fn run(&mut self, interactions: u64) -> Result<Vec<MetricRow>> {
        (0..interactions).map(|_| self.run_interaction()).collect()
    }

    fn update(&mut self) -> Result<()> {
        if let Some(model) = &mut self.latent {
            if self.repr_updates > 0 && !self.buffer.pair_positions().is_empty() {
                let hist =
                    train_representation(model, &self.buffer, self.repr_updates, self.repr_batch, &mut self.repr_rng)?;
                self.last_repr_loss = hist.last().copied();
            }
            self.refresh_latents()?;
        }
        if self.buffer.len() < 2 {
            return Ok(());
        }
        for _ in 0..self.rl_updates {
            let batch = self.sample_batch()?;
            self.last_losses = Some(self.ac.rl_update(&batch, &mut self.rl_rng)?);
        }
        Ok(())
    }

    /// Re-encodes every stored interaction's latent with the current encoder.
    fn refresh_latents(&mut self) -> Result<()> {
        let Some(model) = &self.latent else { return Ok(()) };
        let mut targets = Vec::new();
        let mut prevs = Vec::new();
        for p in self.buffer.pair_positions() {
            targets.push(self.buffer.at(p).index);
            prevs.push(self.buffer.at(p - 1));
        }
        let latents = model.encode_mode_batch(&prevs)?;
        for (idx, z) in targets.into_iter().zip(latents) {
            if let Some(c) = self.cache.get_mut(&idx) {
                c.z = z;
            }
        }
        let keys: Vec<u64> = self.cache.keys().copied().collect();
        for k in keys {
            if let Some(prev) = self.cache.get(&(k - 1)).map(|c| c.z.clone()) {
                self.cache.get_mut(&k).expect("key exists").z_prev = prev;
            }
        }
        Ok(())
    }

    fn stable_term(&self, c: &Cached, tr: &Transition, t: usize) -> Result<f64> {
        if self.kind == AgentKind::Smirl {
            return Ok(c.smirl[t]);
        }
        if !self.kind.uses_stability_reward() {
            return Ok(0.0);
        }
        match self.stability.metric {
            StabilityMetric::Partial => Ok(flag_reward(tr.change_flag == Some(true))),
            _ => stability_reward(&c.z, &c.z_prev, &self.stability),
        }
    }

    fn sample_batch(&mut self) -> Result<SacBatch> {
        let n = self.rl_batch;
        let h = self.env.horizon();
        let width = self.ac.obs_dim();
        let mut obs = Vec::with_capacity(n * width);
        let mut next = Vec::with_capacity(n * width);
        let mut actions = Vec::with_capacity(n * self.ac.action_dim());
        let mut rewards = Vec::with_capacity(n);
        let last = self.buffer.len() - 1;
        for _ in 0..n {
            // Only interactions with a stored successor, so the final step can bootstrap.
            let p = self.rl_rng.gen_range(0..last);
            let t = self.rl_rng.gen_range(0..h);
            let tau = self.buffer.at(p);
            let succ = self.buffer.at(p + 1);
            if succ.index != tau.index + 1 {
                return Err(Error::invalid("replay buffer lost interaction ordering"));
            }
            let c = self.cached(tau.index)?;
            let tr = &tau.transitions[t];
            self.cond.policy_input(&tr.state, &c.z, &c.z_prev, oracle_at(c, t), &mut obs);
            actions.extend_from_slice(&tr.action);
            let r_stable = self.stable_term(c, tr, t)?;
            rewards.push(total_reward(tr.task_reward, r_stable, beta_at(&self.stability, tau.index))?);
            if t + 1 < h {
                self.cond.policy_input(&tr.next_state, &c.z, &c.z_prev, oracle_at(c, t + 1), &mut next);
            } else {
                let cn = self.cached(succ.index)?;
                self.cond.policy_input(&succ.transitions[0].state, &cn.z, &cn.z_prev, oracle_at(cn, 0), &mut next);
            }
        }
        Ok(SacBatch {
            obs: Matrix::from_vec(n, width, obs),
            actions: Matrix::from_vec(n, self.ac.action_dim(), actions),
            rewards,
            next_obs: Matrix::from_vec(n, width, next),
        })
    }

    fn cached(&self, index: u64) -> Result<&Cached> {
        self.cache.get(&index).ok_or_else(|| Error::invalid(format!("no cached latents for interaction {index}")))
    }

    /// Frozen copy of the current agent for evaluation or checkpointing.
    pub fn snapshot(&self) -> AgentSnapshot {
        let last = self.buffer.latest();
        AgentSnapshot {
            kind: self.kind,
            metric: self.stability.metric,
            actor_critic: self.ac.clone(),
            latent: self.latent.clone(),
            last_latent: last.and_then(|t| self.cache.get(&t.index)).map(|c| c.z.clone()),
            last_trajectory: last.cloned(),
            current: None,
            started: false,
        }
    }

    /// Deterministic evaluation on a copy of the environment, so training's
    /// strategy state is shared but not advanced.
    pub fn evaluate(&self, episodes: usize) -> Result<EvalReport> {
        let mut env = self.env.clone();
        evaluate(&mut self.snapshot(), &mut env, episodes)
    }
}

fn oracle_at(c: &Cached, t: usize) -> &[f64] {
    c.oracle.get(t).map(|v| v.as_slice()).unwrap_or(&[])
}

/// A scripted policy from a closure, for fixtures and evaluation oracles.
pub struct FnPolicy<F>(pub F);

impl<F: FnMut(&[f64]) -> Vec<f64>> Policy for FnPolicy<F> {
    fn act(&mut self, state: &[f64], _oracle: Option<&[f64]>) -> Result<Vec<f64>> {
        Ok((self.0)(state))
    }
}
