//! Soft actor-critic with a tanh-squashed diagonal Gaussian policy, twin
//! critics with Polyak-averaged targets and a learned entropy temperature.
//!
//! Critics see the action normalized to `[-1, 1]` (`a / bound`).

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::linalg::Matrix;
use crate::nn::{Adam, DenseNet};
use crate::rng::standard_normal;
use crate::{Error, Result};

pub const LOG_STD_MIN: f64 = -20.0;
pub const LOG_STD_MAX: f64 = 2.0;

const HALF_LN_TAU: f64 = 0.918_938_533_204_672_8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SacConfig {
    pub hidden: Vec<usize>,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub alpha_lr: f64,
    pub gamma: f64,
    pub tau: f64,
    pub batch_size: usize,
    pub initial_alpha: f64,
    pub learn_alpha: bool,
}

impl Default for SacConfig {
    fn default() -> Self {
        SacConfig {
            hidden: vec![256, 256],
            actor_lr: 3e-4,
            critic_lr: 3e-4,
            alpha_lr: 3e-4,
            gamma: 0.99,
            tau: 0.005,
            batch_size: 256,
            initial_alpha: 0.2,
            learn_alpha: true,
        }
    }
}

impl SacConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) || !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(Error::invalid("gamma and tau must lie in (0, 1)"));
        }
        if !(self.initial_alpha > 0.0) || self.batch_size == 0 {
            return Err(Error::invalid("initial alpha and batch size must be positive"));
        }
        if [self.actor_lr, self.critic_lr, self.alpha_lr].iter().any(|lr| !(*lr > 0.0)) {
            return Err(Error::invalid("learning rates must be positive"));
        }
        Ok(())
    }
}

/// A minibatch of policy inputs. Actions are in environment units.
#[derive(Debug, Clone, PartialEq)]
pub struct SacBatch {
    pub obs: Matrix,
    pub actions: Matrix,
    pub rewards: Vec<f64>,
    pub next_obs: Matrix,
}

impl SacBatch {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub q1_loss: f64,
    pub q2_loss: f64,
    pub actor_loss: f64,
    pub alpha_loss: f64,
    pub alpha: f64,
    /// Mean of `-log pi` over the actor batch.
    pub entropy: f64,
}

/// Squashed-Gaussian samples for a batch of actor head outputs.
struct Squashed {
    action: Matrix,
    log_prob: Vec<f64>,
    tanh: Matrix,
    std: Matrix,
    clamped: Vec<bool>,
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + libm::log1p(libm::exp(-x.abs()))
}

/// `ln(1 - tanh(u)^2)` without cancellation for large `|u|`.
fn log_one_minus_tanh_sq(u: f64) -> f64 {
    2.0 * (core::f64::consts::LN_2 - u - softplus(-2.0 * u))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ActorCritic {
    pub actor: DenseNet,
    pub q1: DenseNet,
    pub q2: DenseNet,
    pub q1_target: DenseNet,
    pub q2_target: DenseNet,
    log_alpha: f64,
    gamma: f64,
    tau: f64,
    learn_alpha: bool,
    target_entropy: f64,
    obs_dim: usize,
    action_dim: usize,
    action_bound: f64,
    actor_opt: Adam,
    q1_opt: Adam,
    q2_opt: Adam,
    alpha_opt: Adam,
}

impl ActorCritic {
    pub fn new<R: Rng + ?Sized>(
        obs_dim: usize,
        action_dim: usize,
        action_bound: f64,
        cfg: &SacConfig,
        rng: &mut R,
    ) -> Result<Self> {
        cfg.validate()?;
        if obs_dim == 0 || action_dim == 0 || !(action_bound > 0.0) {
            return Err(Error::invalid("actor-critic needs positive dimensions and action bound"));
        }
        let actor = DenseNet::mlp(obs_dim, &cfg.hidden, 2 * action_dim, rng)?;
        let q1 = DenseNet::mlp(obs_dim + action_dim, &cfg.hidden, 1, rng)?;
        let q2 = DenseNet::mlp(obs_dim + action_dim, &cfg.hidden, 1, rng)?;
        Ok(ActorCritic {
            actor_opt: Adam::new(actor.num_params(), cfg.actor_lr),
            q1_opt: Adam::new(q1.num_params(), cfg.critic_lr),
            q2_opt: Adam::new(q2.num_params(), cfg.critic_lr),
            alpha_opt: Adam::new(1, cfg.alpha_lr),
            q1_target: q1.clone(),
            q2_target: q2.clone(),
            actor,
            q1,
            q2,
            log_alpha: libm::log(cfg.initial_alpha),
            gamma: cfg.gamma,
            tau: cfg.tau,
            learn_alpha: cfg.learn_alpha,
            target_entropy: -(action_dim as f64),
            obs_dim,
            action_dim,
            action_bound,
        })
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    pub fn action_bound(&self) -> f64 {
        self.action_bound
    }

    pub fn alpha(&self) -> f64 {
        libm::exp(self.log_alpha)
    }

    pub fn target_entropy(&self) -> f64 {
        self.target_entropy
    }

    fn check_obs(&self, obs: &[f64]) -> Result<()> {
        if obs.len() != self.obs_dim {
            return Err(Error::invalid(format!("policy expects {}-dim input, got {}", self.obs_dim, obs.len())));
        }
        Ok(())
    }

    /// Tanh-squashed mean when `deterministic`, otherwise a squashed sample.
    pub fn act<R: Rng + ?Sized>(&self, obs: &[f64], deterministic: bool, rng: &mut R) -> Result<Vec<f64>> {
        self.check_obs(obs)?;
        let head = self.actor.forward(obs)?;
        let ad = self.action_dim;
        if deterministic {
            return Ok(head[..ad].iter().map(|m| self.action_bound * libm::tanh(*m)).collect());
        }
        let eps: Vec<f64> = (0..ad).map(|_| standard_normal(rng)).collect();
        let sq = self.squash(&Matrix::row_vector(&head), &Matrix::row_vector(&eps));
        Ok(sq.action.into_vec())
    }

    /// Log-density of the squashed policy at reparameterization noise `eps`.
    pub fn log_prob_with_noise(&self, obs: &[f64], eps: &[f64]) -> Result<(Vec<f64>, f64)> {
        self.check_obs(obs)?;
        let head = self.actor.forward(obs)?;
        let sq = self.squash(&Matrix::row_vector(&head), &Matrix::row_vector(eps));
        Ok((sq.action.into_vec(), sq.log_prob[0]))
    }

    fn squash(&self, head: &Matrix, eps: &Matrix) -> Squashed {
        let (n, ad, bound) = (head.rows(), self.action_dim, self.action_bound);
        let mut action = Matrix::zeros(n, ad);
        let mut tanh = Matrix::zeros(n, ad);
        let mut std = Matrix::zeros(n, ad);
        let mut log_prob = vec![0.0; n];
        let mut clamped = vec![false; n * ad];
        let ln_bound = libm::log(bound);
        for r in 0..n {
            let (h, e) = (head.row(r), eps.row(r));
            let mut lp = 0.0;
            for i in 0..ad {
                let raw = h[ad + i];
                let ls = raw.clamp(LOG_STD_MIN, LOG_STD_MAX);
                clamped[r * ad + i] = ls != raw;
                let sigma = libm::exp(ls);
                let u = h[i] + sigma * e[i];
                let t = libm::tanh(u);
                lp += -0.5 * e[i] * e[i] - ls - HALF_LN_TAU - ln_bound - log_one_minus_tanh_sq(u);
                action.set(r, i, bound * t);
                tanh.set(r, i, t);
                std.set(r, i, sigma);
            }
            log_prob[r] = lp;
        }
        Squashed { action, log_prob, tanh, std, clamped }
    }

    fn critic_input(&self, obs: &Matrix, actions: &Matrix) -> Matrix {
        let mut norm = actions.clone();
        for v in norm.as_mut_slice() {
            *v /= self.action_bound;
        }
        Matrix::hcat(&[obs, &norm])
    }

    fn check_batch(&self, batch: &SacBatch) -> Result<()> {
        let n = batch.len();
        if n == 0 {
            return Err(Error::invalid("empty RL batch"));
        }
        let ok = batch.obs.rows() == n
            && batch.next_obs.rows() == n
            && batch.actions.rows() == n
            && batch.obs.cols() == self.obs_dim
            && batch.next_obs.cols() == self.obs_dim
            && batch.actions.cols() == self.action_dim;
        if !ok {
            return Err(Error::invalid("RL batch shapes do not match the actor-critic"));
        }
        Ok(())
    }

    fn noise<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Matrix {
        let data = (0..n * self.action_dim).map(|_| standard_normal(rng)).collect();
        Matrix::from_vec(n, self.action_dim, data)
    }

    /// Soft Bellman targets `r + gamma * (min Q_target(s', a') - alpha * log pi(a'|s'))`
    /// with `a'` drawn at noise `eps`.
    pub fn critic_targets_with_noise(&self, batch: &SacBatch, eps: &Matrix) -> Result<Vec<f64>> {
        self.check_batch(batch)?;
        let head = self.actor.forward_batch(&batch.next_obs)?;
        let sq = self.squash(&head, eps);
        let input = self.critic_input(&batch.next_obs, &sq.action);
        let t1 = self.q1_target.forward_batch(&input)?;
        let t2 = self.q2_target.forward_batch(&input)?;
        let alpha = self.alpha();
        Ok((0..batch.len())
            .map(|r| {
                let q = t1.get(r, 0).min(t2.get(r, 0));
                batch.rewards[r] + self.gamma * (q - alpha * sq.log_prob[r])
            })
            .collect())
    }

    /// Mean squared error of critic `which` (1 or 2) against fixed targets.
    pub fn critic_loss_and_grads(
        &self,
        which: usize,
        obs: &Matrix,
        actions: &Matrix,
        targets: &[f64],
    ) -> Result<(f64, Vec<f64>)> {
        let net = match which {
            1 => &self.q1,
            2 => &self.q2,
            _ => return Err(Error::invalid("critic index must be 1 or 2")),
        };
        let n = targets.len();
        let tape = net.forward_tape(self.critic_input(obs, actions))?;
        let q = tape.output();
        let mut dq = Matrix::zeros(n, 1);
        let mut loss = 0.0;
        for r in 0..n {
            let d = q.get(r, 0) - targets[r];
            loss += d * d / n as f64;
            dq.set(r, 0, 2.0 * d / n as f64);
        }
        let mut grads = vec![0.0; net.num_params()];
        net.backward(&tape, &dq, &mut grads)?;
        Ok((loss, grads))
    }

    /// `mean(alpha * log pi(a|s) - min Q(s, a))` with `a` reparameterized at
    /// noise `eps`. Returns `(loss, actor grads, per-row log pi)`.
    pub fn actor_loss_and_grads(&self, obs: &Matrix, eps: &Matrix) -> Result<(f64, Vec<f64>, Vec<f64>)> {
        let n = obs.rows();
        let ad = self.action_dim;
        let tape = self.actor.forward_tape(obs.clone())?;
        let sq = self.squash(tape.output(), eps);
        let input = self.critic_input(obs, &sq.action);
        let tape1 = self.q1.forward_tape(input.clone())?;
        let tape2 = self.q2.forward_tape(input)?;
        let alpha = self.alpha();
        let inv_n = 1.0 / n as f64;

        let mut loss = 0.0;
        let mut g1 = Matrix::zeros(n, 1);
        let mut g2 = Matrix::zeros(n, 1);
        for r in 0..n {
            let (a, b) = (tape1.output().get(r, 0), tape2.output().get(r, 0));
            loss += (alpha * sq.log_prob[r] - a.min(b)) * inv_n;
            if a <= b {
                g1.set(r, 0, -inv_n);
            } else {
                g2.set(r, 0, -inv_n);
            }
        }
        let mut scratch = vec![0.0; self.q1.num_params()];
        let dx1 = self.q1.backward(&tape1, &g1, &mut scratch)?;
        let mut scratch = vec![0.0; self.q2.num_params()];
        let dx2 = self.q2.backward(&tape2, &g2, &mut scratch)?;

        let mut dhead = Matrix::zeros(n, 2 * ad);
        for r in 0..n {
            for i in 0..ad {
                let t = sq.tanh.get(r, i);
                let col = self.obs_dim + i;
                // dLoss/d(a/B) from the critic, then through tanh.
                let dq = (dx1.get(r, col) + dx2.get(r, col)) * (1.0 - t * t);
                let du = dq + alpha * inv_n * 2.0 * t;
                dhead.set(r, i, du);
                if !sq.clamped[r * ad + i] {
                    let sigma_eps = sq.std.get(r, i) * eps.get(r, i);
                    dhead.set(r, ad + i, du * sigma_eps - alpha * inv_n);
                }
            }
        }
        let mut grads = vec![0.0; self.actor.num_params()];
        self.actor.backward(&tape, &dhead, &mut grads)?;
        Ok((loss, grads, sq.log_prob))
    }

    /// One critic step, one actor step, one temperature step, then target smoothing.
    pub fn rl_update<R: Rng + ?Sized>(&mut self, batch: &SacBatch, rng: &mut R) -> Result<LossRecord> {
        self.check_batch(batch)?;
        let n = batch.len();
        let eps_next = self.noise(n, rng);
        let targets = self.critic_targets_with_noise(batch, &eps_next)?;

        let (q1_loss, g) = self.critic_loss_and_grads(1, &batch.obs, &batch.actions, &targets)?;
        poison_check("critic 1", q1_loss)?;
        self.q1_opt.step(self.q1.params_mut(), &g)?;
        let (q2_loss, g) = self.critic_loss_and_grads(2, &batch.obs, &batch.actions, &targets)?;
        poison_check("critic 2", q2_loss)?;
        self.q2_opt.step(self.q2.params_mut(), &g)?;

        let eps = self.noise(n, rng);
        let (actor_loss, g, log_prob) = self.actor_loss_and_grads(&batch.obs, &eps)?;
        poison_check("actor", actor_loss)?;
        self.actor_opt.step(self.actor.params_mut(), &g)?;

        let mean_lp = log_prob.iter().sum::<f64>() / n as f64;
        let alpha_loss = -self.log_alpha * (mean_lp + self.target_entropy);
        poison_check("temperature", alpha_loss)?;
        if self.learn_alpha {
            let mut la = [self.log_alpha];
            self.alpha_opt.step(&mut la, &[-(mean_lp + self.target_entropy)])?;
            self.log_alpha = la[0];
        }

        self.q1_target.soft_update_from(&self.q1, self.tau);
        self.q2_target.soft_update_from(&self.q2, self.tau);
        Ok(LossRecord { q1_loss, q2_loss, actor_loss, alpha_loss, alpha: self.alpha(), entropy: -mean_lp })
    }
}

fn poison_check(what: &str, loss: f64) -> Result<()> {
    if loss.is_finite() {
        Ok(())
    } else {
        Err(Error::PoisonedUpdate(format!("{what} loss is {loss}")))
    }
}
