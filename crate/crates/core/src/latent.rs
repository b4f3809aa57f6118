//! Opponent-strategy representation learning.
//!
//! The encoder maps the previous interaction `tau^{j-1}` to a latent `z^j`;
//! the decoder predicts each step's next state and task reward of `tau^j`
//! from `(s, a, z^j)`. Both are trained jointly by maximum likelihood under
//! unit-variance Gaussian heads, i.e. squared error. Discrete latents use the
//! straight-through Gumbel-Softmax estimator.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::linalg::Matrix;
use crate::nn::{Adam, DenseNet};
use crate::replay::ReplayBuffer;
use crate::rng::gumbel;
use crate::types::{InteractionTrajectory, LatentStrategy};
use crate::{Error, Result};

pub const DEFAULT_LATENT_DIM: usize = 10;
pub const DEFAULT_TEMPERATURE: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LatentMode {
    Continuous,
    Discrete,
}

/// Output of [`gumbel_st`]: the one-hot forward value and its relaxation.
#[derive(Debug, Clone, PartialEq)]
pub struct GumbelSample {
    pub hard: Vec<f64>,
    pub soft: Vec<f64>,
}

/// Straight-through Gumbel-Softmax sample from unnormalized log-probabilities.
pub fn gumbel_st<R: Rng + ?Sized>(logits: &[f64], temperature: f64, rng: &mut R) -> Result<GumbelSample> {
    let noise: Vec<f64> = logits.iter().map(|_| gumbel(rng)).collect();
    gumbel_st_with_noise(logits, &noise, temperature)
}

/// [`gumbel_st`] with the Gumbel perturbation supplied explicitly.
pub fn gumbel_st_with_noise(logits: &[f64], noise: &[f64], temperature: f64) -> Result<GumbelSample> {
    if !(temperature > 0.0) {
        return Err(Error::invalid("temperature must be positive"));
    }
    if logits.is_empty() || noise.len() != logits.len() {
        return Err(Error::invalid("logits and noise must be non-empty and equally long"));
    }
    if logits.iter().any(|l| !l.is_finite()) {
        return Err(Error::invalid("non-finite logits"));
    }
    let perturbed: Vec<f64> = logits.iter().zip(noise).map(|(l, g)| (l + g) / temperature).collect();
    let soft = softmax(&perturbed);
    let mut hard = vec![0.0; logits.len()];
    hard[argmax(&perturbed)] = 1.0;
    Ok(GumbelSample { hard, soft })
}

/// Backward rule of the straight-through estimator: the gradient reaching
/// the hard sample is routed through the tempered softmax. Returns the
/// gradient with respect to the logits.
pub fn straight_through_grad(soft: &[f64], temperature: f64, upstream: &[f64]) -> Vec<f64> {
    let dot: f64 = soft.iter().zip(upstream).map(|(p, g)| p * g).sum();
    soft.iter().zip(upstream).map(|(p, g)| p * (g - dot) / temperature).collect()
}

pub(crate) fn softmax(x: &[f64]) -> Vec<f64> {
    let m = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = x.iter().map(|v| libm::exp(v - m)).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// Lowest index among ties.
pub(crate) fn argmax(x: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in x.iter().enumerate() {
        if *v > x[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LatentModelConfig {
    pub mode: LatentMode,
    pub latent_dim: usize,
    pub temperature: f64,
    pub hidden: Vec<usize>,
    pub lr: f64,
}

impl Default for LatentModelConfig {
    fn default() -> Self {
        LatentModelConfig {
            mode: LatentMode::Discrete,
            latent_dim: DEFAULT_LATENT_DIM,
            temperature: DEFAULT_TEMPERATURE,
            hidden: vec![256, 256],
            lr: 3e-4,
        }
    }
}

/// Encoder, decoder and their optimizers.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LatentModel {
    pub encoder: DenseNet,
    pub decoder: DenseNet,
    mode: LatentMode,
    temperature: f64,
    latent_dim: usize,
    state_dim: usize,
    action_dim: usize,
    horizon: usize,
    enc_opt: Adam,
    dec_opt: Adam,
    #[serde(default)]
    normalizer: Option<Normalizer>,
}

/// Fixed per-feature standardization of network inputs and decoder targets,
/// fitted once from the first data the model trains on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    /// Per-step features `(s, a, r, s')`.
    pub step_mean: Vec<f64>,
    pub step_std: Vec<f64>,
    /// Decoder targets `(s' - s, r)`.
    pub target_mean: Vec<f64>,
    pub target_std: Vec<f64>,
}

const MIN_STD: f64 = 0.1;

fn mean_std(rows: &[Vec<f64>], width: usize) -> (Vec<f64>, Vec<f64>) {
    let n = rows.len().max(1) as f64;
    let mut mean = vec![0.0; width];
    for r in rows {
        for (m, v) in mean.iter_mut().zip(r) {
            *m += v / n;
        }
    }
    let mut var = vec![0.0; width];
    for r in rows {
        for ((q, v), m) in var.iter_mut().zip(r).zip(&mean) {
            *q += (v - m) * (v - m) / n;
        }
    }
    (mean, var.into_iter().map(|v| libm::sqrt(v).max(MIN_STD)).collect())
}

impl Normalizer {
    pub fn fit<'a>(trajectories: impl Iterator<Item = &'a InteractionTrajectory>) -> Result<Self> {
        let mut steps = Vec::new();
        let mut targets = Vec::new();
        for tau in trajectories {
            for tr in &tau.transitions {
                let mut row = tr.state.clone();
                row.extend_from_slice(&tr.action);
                row.push(tr.task_reward);
                row.extend_from_slice(&tr.next_state);
                steps.push(row);
                let mut t: Vec<f64> = tr.next_state.iter().zip(&tr.state).map(|(n, s)| n - s).collect();
                t.push(tr.task_reward);
                targets.push(t);
            }
        }
        if steps.is_empty() {
            return Err(Error::EmptyBuffer);
        }
        let (step_mean, step_std) = mean_std(&steps, steps[0].len());
        let (target_mean, target_std) = mean_std(&targets, targets[0].len());
        Ok(Normalizer { step_mean, step_std, target_mean, target_std })
    }

    fn apply(x: &mut [f64], mean: &[f64], std: &[f64]) {
        for ((v, m), s) in x.iter_mut().zip(mean.iter().cycle()).zip(std.iter().cycle()) {
            *v = (*v - m) / s;
        }
    }
}

/// A latent plus, in discrete mode, the encoder logits it was sampled from.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoded {
    pub latent: LatentStrategy,
    pub logits: Option<Vec<f64>>,
}

impl LatentModel {
    pub fn new<R: Rng + ?Sized>(
        state_dim: usize,
        action_dim: usize,
        horizon: usize,
        cfg: &LatentModelConfig,
        rng: &mut R,
    ) -> Result<Self> {
        if cfg.latent_dim == 0 || horizon == 0 {
            return Err(Error::invalid("latent dim and horizon must be positive"));
        }
        if !(cfg.temperature > 0.0) {
            return Err(Error::invalid("temperature must be positive"));
        }
        let enc_in = horizon * InteractionTrajectory::step_width(state_dim, action_dim);
        let encoder = DenseNet::mlp(enc_in, &cfg.hidden, cfg.latent_dim, rng)?;
        let decoder = DenseNet::mlp(state_dim + action_dim + cfg.latent_dim, &cfg.hidden, state_dim + 1, rng)?;
        Ok(LatentModel {
            enc_opt: Adam::new(encoder.num_params(), cfg.lr),
            dec_opt: Adam::new(decoder.num_params(), cfg.lr),
            encoder,
            decoder,
            mode: cfg.mode,
            temperature: cfg.temperature,
            latent_dim: cfg.latent_dim,
            state_dim,
            action_dim,
            horizon,
            normalizer: None,
        })
    }

    pub fn normalizer(&self) -> Option<&Normalizer> {
        self.normalizer.as_ref()
    }

    /// Fixes the input/target standardization. Only allowed before training.
    pub fn set_normalizer(&mut self, normalizer: Normalizer) -> Result<()> {
        let w = InteractionTrajectory::step_width(self.state_dim, self.action_dim);
        if normalizer.step_mean.len() != w || normalizer.target_mean.len() != self.state_dim + 1 {
            return Err(Error::invalid("normalizer dimensions do not match the model"));
        }
        if self.enc_opt.steps() > 0 {
            return Err(Error::invalid("normalizer must be set before the first update"));
        }
        self.normalizer = Some(normalizer);
        Ok(())
    }

    pub fn mode(&self) -> LatentMode {
        self.mode
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    /// Latent used before any previous interaction exists.
    pub fn sentinel(&self) -> LatentStrategy {
        match self.mode {
            LatentMode::Continuous => LatentStrategy::Continuous(vec![0.0; self.latent_dim]),
            LatentMode::Discrete => LatentStrategy::one_hot(0, self.latent_dim).expect("k > 0"),
        }
    }

    fn encoder_input(&self, tau: &InteractionTrajectory, out: &mut Vec<f64>) -> Result<()> {
        tau.validate(self.horizon, self.state_dim, self.action_dim)?;
        let start = out.len();
        tau.flatten_into(out);
        if let Some(n) = &self.normalizer {
            Normalizer::apply(&mut out[start..], &n.step_mean, &n.step_std);
        }
        Ok(())
    }

    fn encoder_batch(&self, taus: &[&InteractionTrajectory]) -> Result<Matrix> {
        let width = self.encoder.input_dim();
        let mut data = Vec::with_capacity(taus.len() * width);
        for tau in taus {
            self.encoder_input(tau, &mut data)?;
        }
        Ok(Matrix::from_vec(taus.len(), width, data))
    }

    /// Continuous: the head output. Discrete: a straight-through sample.
    pub fn encode<R: Rng + ?Sized>(&self, tau_prev: &InteractionTrajectory, rng: &mut R) -> Result<Encoded> {
        let mut x = Vec::new();
        self.encoder_input(tau_prev, &mut x)?;
        let out = self.encoder.forward(&x)?;
        match self.mode {
            LatentMode::Continuous => Ok(Encoded { latent: LatentStrategy::continuous(out)?, logits: None }),
            LatentMode::Discrete => {
                let sample = gumbel_st(&out, self.temperature, rng)?;
                Ok(Encoded { latent: LatentStrategy::Discrete(sample.hard), logits: Some(out) })
            }
        }
    }

    /// Noise-free latents: the head output, or the one-hot argmax of the logits.
    pub fn encode_mode_batch(&self, taus: &[&InteractionTrajectory]) -> Result<Vec<LatentStrategy>> {
        if taus.is_empty() {
            return Ok(Vec::new());
        }
        let out = self.encoder.forward_batch(&self.encoder_batch(taus)?)?;
        (0..taus.len())
            .map(|r| {
                let row = out.row(r);
                match self.mode {
                    LatentMode::Continuous => LatentStrategy::continuous(row.to_vec()),
                    LatentMode::Discrete => LatentStrategy::one_hot(argmax(row), self.latent_dim),
                }
            })
            .collect()
    }

    pub fn encode_mode(&self, tau_prev: &InteractionTrajectory) -> Result<LatentStrategy> {
        Ok(self.encode_mode_batch(&[tau_prev])?.pop().expect("one latent"))
    }

    fn decoder_row(&self, s: &[f64], a: &[f64], z: &[f64], out: &mut Vec<f64>) -> Result<()> {
        if s.len() != self.state_dim || a.len() != self.action_dim || z.len() != self.latent_dim {
            return Err(Error::invalid(format!(
                "decoder expects ({}, {}, {}) inputs, got ({}, {}, {})",
                self.state_dim,
                self.action_dim,
                self.latent_dim,
                s.len(),
                a.len(),
                z.len()
            )));
        }
        let start = out.len();
        out.extend_from_slice(s);
        out.extend_from_slice(a);
        if let Some(n) = &self.normalizer {
            let sa = self.state_dim + self.action_dim;
            Normalizer::apply(&mut out[start..], &n.step_mean[..sa], &n.step_std[..sa]);
        }
        out.extend_from_slice(z);
        Ok(())
    }

    /// Maps a raw decoder output to `(delta, reward)` in data units.
    fn denormalize(&self, out: &mut [f64]) {
        if let Some(n) = &self.normalizer {
            for ((v, m), s) in out.iter_mut().zip(&n.target_mean).zip(&n.target_std) {
                *v = *v * s + m;
            }
        }
    }

    /// Predicted next state and task reward. The decoder head outputs a state
    /// displacement, so the prediction is `s + delta`.
    pub fn decode(&self, s: &[f64], a: &[f64], z: &LatentStrategy) -> Result<(Vec<f64>, f64)> {
        let mut x = Vec::with_capacity(self.decoder.input_dim());
        self.decoder_row(s, a, &z.to_vec(), &mut x)?;
        let mut out = self.decoder.forward(&x)?;
        self.denormalize(&mut out);
        let next: Vec<f64> = s.iter().zip(&out).map(|(si, d)| si + d).collect();
        Ok((next, out[self.state_dim]))
    }

    /// Mean per-step squared error over the batch (in standardized units once
    /// a normalizer is set), with parameter gradients.
    /// Returns `(loss, encoder grads, decoder grads)`.
    pub fn loss_and_grads<R: Rng + ?Sized>(
        &self,
        pairs: &[(&InteractionTrajectory, &InteractionTrajectory)],
        rng: &mut R,
    ) -> Result<(f64, Vec<f64>, Vec<f64>)> {
        if pairs.is_empty() {
            return Err(Error::invalid("empty representation batch"));
        }
        let k = self.latent_dim;
        let prevs: Vec<&InteractionTrajectory> = pairs.iter().map(|p| p.0).collect();
        let enc_tape = self.encoder.forward_tape(self.encoder_batch(&prevs)?)?;
        let head = enc_tape.output();

        let mut latents = Matrix::zeros(pairs.len(), k);
        let mut softs: Vec<Vec<f64>> = Vec::new();
        for b in 0..pairs.len() {
            match self.mode {
                LatentMode::Continuous => latents.row_mut(b).copy_from_slice(head.row(b)),
                LatentMode::Discrete => {
                    let sample = gumbel_st(head.row(b), self.temperature, rng)?;
                    latents.row_mut(b).copy_from_slice(&sample.hard);
                    softs.push(sample.soft);
                }
            }
        }

        let currents: Vec<&InteractionTrajectory> = pairs.iter().map(|p| p.1).collect();
        let (loss, dec_grads, mut dz) = self.decoder_loss(&latents, &currents)?;
        if self.mode == LatentMode::Discrete {
            for (b, soft) in softs.iter().enumerate() {
                let g = straight_through_grad(soft, self.temperature, dz.row(b));
                dz.row_mut(b).copy_from_slice(&g);
            }
        }
        let mut enc_grads = vec![0.0; self.encoder.num_params()];
        self.encoder.backward(&enc_tape, &dz, &mut enc_grads)?;
        Ok((loss, enc_grads, dec_grads))
    }

    /// Decoder half of the loss for given latents (one row per trajectory).
    /// Returns `(loss, decoder grads, loss gradient w.r.t. the latents)`.
    fn decoder_loss(&self, latents: &Matrix, currents: &[&InteractionTrajectory]) -> Result<(f64, Vec<f64>, Matrix)> {
        let k = self.latent_dim;
        let rows = currents.iter().map(|c| c.len()).sum::<usize>();
        let mut x = Vec::with_capacity(rows * self.decoder.input_dim());
        let mut targets = Vec::with_capacity(rows * (self.state_dim + 1));
        let mut owner = Vec::with_capacity(rows);
        for (b, cur) in currents.iter().enumerate() {
            cur.validate(self.horizon, self.state_dim, self.action_dim)?;
            for tr in &cur.transitions {
                self.decoder_row(&tr.state, &tr.action, latents.row(b), &mut x)?;
                let start = targets.len();
                targets.extend(tr.next_state.iter().zip(&tr.state).map(|(n, s)| n - s));
                targets.push(tr.task_reward);
                if let Some(n) = &self.normalizer {
                    Normalizer::apply(&mut targets[start..], &n.target_mean, &n.target_std);
                }
                owner.push(b);
            }
        }
        let dec_tape = self.decoder.forward_tape(Matrix::from_vec(rows, self.decoder.input_dim(), x))?;
        let pred = dec_tape.output();
        let mut loss = 0.0;
        let scale = 1.0 / rows as f64;
        let mut dout = Matrix::zeros(rows, self.state_dim + 1);
        for (i, (p, t)) in pred.as_slice().iter().zip(&targets).enumerate() {
            let e = p - t;
            loss += e * e;
            dout.as_mut_slice()[i] = 2.0 * e * scale;
        }
        loss *= scale;

        let mut dec_grads = vec![0.0; self.decoder.num_params()];
        let dx = self.decoder.backward(&dec_tape, &dout, &mut dec_grads)?;
        let z_off = self.state_dim + self.action_dim;
        let mut dz = Matrix::zeros(currents.len(), k);
        for (r, &b) in owner.iter().enumerate() {
            for (g, d) in dz.row_mut(b).iter_mut().zip(&dx.row(r)[z_off..]) {
                *g += d;
            }
        }
        Ok((loss, dec_grads, dz))
    }

    /// One decoder-only update with supplied latents, e.g. ground truth.
    /// Returns the pre-update loss.
    pub fn train_decoder_step(&mut self, items: &[(&LatentStrategy, &InteractionTrajectory)]) -> Result<f64> {
        if items.is_empty() {
            return Err(Error::invalid("empty decoder batch"));
        }
        let mut latents = Matrix::zeros(items.len(), self.latent_dim);
        for (b, (z, _)) in items.iter().enumerate() {
            let v = z.to_vec();
            if v.len() != self.latent_dim {
                return Err(Error::invalid(format!("latent has dim {}, expected {}", v.len(), self.latent_dim)));
            }
            latents.row_mut(b).copy_from_slice(&v);
        }
        let currents: Vec<&InteractionTrajectory> = items.iter().map(|i| i.1).collect();
        let (loss, gd, _) = self.decoder_loss(&latents, &currents)?;
        if !loss.is_finite() {
            return Err(Error::PoisonedUpdate(format!("decoder loss is {loss}")));
        }
        self.dec_opt.step(self.decoder.params_mut(), &gd)?;
        Ok(loss)
    }

    pub fn representation_loss<R: Rng + ?Sized>(
        &self,
        pairs: &[(&InteractionTrajectory, &InteractionTrajectory)],
        rng: &mut R,
    ) -> Result<f64> {
        Ok(self.loss_and_grads(pairs, rng)?.0)
    }

    /// One joint optimizer step; returns the pre-update loss.
    pub fn train_step<R: Rng + ?Sized>(
        &mut self,
        pairs: &[(&InteractionTrajectory, &InteractionTrajectory)],
        rng: &mut R,
    ) -> Result<f64> {
        let (loss, ge, gd) = self.loss_and_grads(pairs, rng)?;
        if !loss.is_finite() {
            return Err(Error::PoisonedUpdate(format!("representation loss is {loss}")));
        }
        self.enc_opt.step(self.encoder.params_mut(), &ge)?;
        self.dec_opt.step(self.decoder.params_mut(), &gd)?;
        Ok(loss)
    }
}

/// `steps` joint updates on consecutive pairs drawn from `buffer`.
pub fn train_representation<R: Rng + ?Sized>(
    model: &mut LatentModel,
    buffer: &ReplayBuffer,
    steps: usize,
    batch_size: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if buffer.pair_positions().is_empty() {
        return Err(Error::EmptyBuffer);
    }
    if model.normalizer.is_none() && steps > 0 {
        model.set_normalizer(Normalizer::fit(buffer.iter())?)?;
    }
    let mut history = Vec::with_capacity(steps);
    for _ in 0..steps {
        let pairs = buffer.sample_consecutive_pairs(batch_size, rng)?;
        history.push(model.train_step(&pairs, rng)?);
    }
    Ok(history)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use crate::types::Transition;

    fn random_traj<R: Rng>(index: u64, h: usize, rng: &mut R) -> InteractionTrajectory {
        let mut s: Vec<f64> = (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut trs = Vec::new();
        for _ in 0..h {
            let a: Vec<f64> = (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let s2: Vec<f64> = s.iter().zip(&a).map(|(x, d)| x + 0.5 * d).collect();
            trs.push(Transition {
                state: s.clone(),
                action: a,
                task_reward: rng.gen_range(-2.0..0.0),
                next_state: s2.clone(),
                change_flag: None,
            });
            s = s2;
        }
        InteractionTrajectory::new(index, trs).unwrap()
    }

    fn small_model(mode: LatentMode, rng: &mut crate::rng::SeedRng) -> LatentModel {
        let cfg = LatentModelConfig { mode, latent_dim: 3, temperature: 1.0, hidden: vec![8, 8], lr: 1e-3 };
        LatentModel::new(2, 2, 4, &cfg, rng).unwrap()
    }

    #[test]
    fn gumbel_soft_is_distribution_and_hard_is_its_argmax() {
        let mut rng = seeded(1);
        for _ in 0..100 {
            let logits: Vec<f64> = (0..6).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let s = gumbel_st(&logits, 0.7, &mut rng).unwrap();
            assert!((s.soft.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(s.soft.iter().all(|&p| p > 0.0));
            assert_eq!(s.hard.iter().filter(|&&h| h == 1.0).count(), 1);
            assert_eq!(s.hard[argmax(&s.soft)], 1.0);
        }
    }

    #[test]
    fn gumbel_equal_logits_zero_noise() {
        let s = gumbel_st_with_noise(&[0.3; 4], &[0.0; 4], 1.0).unwrap();
        assert!(s.soft.iter().all(|&p| (p - 0.25).abs() < 1e-15));
        assert_eq!(s.hard, vec![1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn gumbel_rejects_bad_temperature() {
        assert!(gumbel_st(&[0.0, 1.0], 0.0, &mut seeded(0)).is_err());
        assert!(gumbel_st(&[0.0, 1.0], -1.0, &mut seeded(0)).is_err());
    }

    #[test]
    fn straight_through_matches_softmax_jacobian() {
        // Finite differences of <upstream, softmax((l + g)/lambda)> in the logits.
        let logits = [0.2, -0.4, 1.1];
        let noise = [0.3, 0.1, -0.2];
        let up = [1.0, -2.0, 0.5];
        let lambda = 0.8;
        let s = gumbel_st_with_noise(&logits, &noise, lambda).unwrap();
        let g = straight_through_grad(&s.soft, lambda, &up);
        let f = |l: &[f64]| -> f64 {
            let s = gumbel_st_with_noise(l, &noise, lambda).unwrap();
            s.soft.iter().zip(&up).map(|(p, u)| p * u).sum()
        };
        for i in 0..3 {
            let mut lp = logits;
            let mut lm = logits;
            lp[i] += 1e-6;
            lm[i] -= 1e-6;
            let fd = (f(&lp) - f(&lm)) / 2e-6;
            assert!((fd - g[i]).abs() < 1e-8, "{i}: {fd} vs {}", g[i]);
        }
    }

    #[test]
    fn encode_is_deterministic_in_continuous_mode_and_one_hot_in_discrete() {
        let mut rng = seeded(3);
        let t = random_traj(1, 4, &mut rng);
        let m = small_model(LatentMode::Continuous, &mut rng);
        let a = m.encode(&t, &mut seeded(1)).unwrap();
        let b = m.encode(&t.clone(), &mut seeded(2)).unwrap();
        assert_eq!(a, b);
        let d = small_model(LatentMode::Discrete, &mut rng);
        for s in 0..20 {
            let e = d.encode(&t, &mut seeded(s)).unwrap();
            assert!(LatentStrategy::discrete(e.latent.to_vec()).is_ok());
            assert_eq!(e.logits.unwrap().len(), 3);
        }
        let short = random_traj(1, 3, &mut rng);
        assert!(m.encode(&short, &mut rng).is_err());
    }

    #[test]
    fn zero_decoder_predicts_no_motion_and_zero_reward() {
        let mut rng = seeded(4);
        let mut m = small_model(LatentMode::Continuous, &mut rng);
        m.decoder = DenseNet::zeros(m.decoder.sizes()).unwrap();
        let z = LatentStrategy::continuous(vec![0.5, -0.5, 1.0]).unwrap();
        let (next, r) = m.decode(&[1.0, 2.0], &[0.3, 0.3], &z).unwrap();
        assert_eq!(next, vec![1.0, 2.0]);
        assert_eq!(r, 0.0);
        assert_eq!(m.decode(&[1.0, 2.0], &[0.3, 0.3], &z).unwrap(), (next, r));
        assert!(m.decode(&[1.0], &[0.3, 0.3], &z).is_err());
    }

    #[test]
    fn perfect_predictor_has_zero_loss() {
        // Dynamics s' = s, reward 0; a zero decoder is exact.
        let mut rng = seeded(5);
        let mut m = small_model(LatentMode::Continuous, &mut rng);
        m.decoder = DenseNet::zeros(m.decoder.sizes()).unwrap();
        let tr = Transition { state: vec![0.5, 0.5], action: vec![0.0, 0.0], task_reward: 0.0, next_state: vec![0.5, 0.5], change_flag: None };
        let t1 = InteractionTrajectory::new(1, vec![tr.clone(); 4]).unwrap();
        let t2 = InteractionTrajectory::new(2, vec![tr; 4]).unwrap();
        assert_eq!(m.representation_loss(&[(&t1, &t2)], &mut rng).unwrap(), 0.0);
    }

    #[test]
    fn continuous_gradients_match_finite_differences() {
        let mut rng = seeded(6);
        let m = small_model(LatentMode::Continuous, &mut rng);
        let trajs: Vec<_> = (1..=3).map(|j| random_traj(j, 4, &mut rng)).collect();
        let pairs = [(&trajs[0], &trajs[1]), (&trajs[1], &trajs[2])];
        let (loss, ge, gd) = m.loss_and_grads(&pairs, &mut rng).unwrap();
        assert!(loss >= 0.0);
        let h = 1e-5;
        let mut probe = m.clone();
        for i in 0..ge.len() {
            let p0 = probe.encoder.params()[i];
            probe.encoder.params_mut()[i] = p0 + h;
            let fp = probe.representation_loss(&pairs, &mut rng).unwrap();
            probe.encoder.params_mut()[i] = p0 - h;
            let fm = probe.representation_loss(&pairs, &mut rng).unwrap();
            probe.encoder.params_mut()[i] = p0;
            let fd = (fp - fm) / (2.0 * h);
            let scale = fd.abs().max(ge[i].abs());
            assert!(scale < 1e-8 || (fd - ge[i]).abs() / scale < 1e-3, "enc {i}: {fd} vs {}", ge[i]);
        }
        for i in (0..gd.len()).step_by(3) {
            let p0 = probe.decoder.params()[i];
            probe.decoder.params_mut()[i] = p0 + h;
            let fp = probe.representation_loss(&pairs, &mut rng).unwrap();
            probe.decoder.params_mut()[i] = p0 - h;
            let fm = probe.representation_loss(&pairs, &mut rng).unwrap();
            probe.decoder.params_mut()[i] = p0;
            let fd = (fp - fm) / (2.0 * h);
            let scale = fd.abs().max(gd[i].abs());
            assert!(scale < 1e-8 || (fd - gd[i]).abs() / scale < 1e-3, "dec {i}: {fd} vs {}", gd[i]);
        }
    }

    #[test]
    fn zero_steps_leave_model_untouched() {
        let mut rng = seeded(7);
        let mut m = small_model(LatentMode::Discrete, &mut rng);
        let before = m.clone();
        let mut buf = ReplayBuffer::new(10, 0).unwrap();
        buf.push(random_traj(1, 4, &mut rng)).unwrap();
        buf.push(random_traj(2, 4, &mut rng)).unwrap();
        let hist = train_representation(&mut m, &buf, 0, 8, &mut rng).unwrap();
        assert!(hist.is_empty());
        assert_eq!(m.encoder, before.encoder);
        assert_eq!(m.decoder, before.decoder);
    }

    #[test]
    fn training_requires_a_pair() {
        let mut rng = seeded(8);
        let mut m = small_model(LatentMode::Discrete, &mut rng);
        let mut buf = ReplayBuffer::new(10, 0).unwrap();
        buf.push(random_traj(1, 4, &mut rng)).unwrap();
        assert_eq!(train_representation(&mut m, &buf, 1, 8, &mut rng).unwrap_err(), Error::EmptyBuffer);
    }

    #[test]
    fn training_is_seed_deterministic() {
        let mut rng = seeded(9);
        let mut buf = ReplayBuffer::new(10, 0).unwrap();
        for j in 1..=5 {
            buf.push(random_traj(j, 4, &mut rng)).unwrap();
        }
        let run = || {
            let mut r = seeded(10);
            let mut m = small_model(LatentMode::Discrete, &mut r);
            train_representation(&mut m, &buf, 25, 4, &mut r).unwrap()
        };
        let (a, b) = (run(), run());
        assert_eq!(a, b);
        assert!(a.last().unwrap() < a.first().unwrap());
    }
}
