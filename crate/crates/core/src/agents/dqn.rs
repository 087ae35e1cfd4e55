use ndarray::{Array2, ArrayD, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::explore::{argmax, epsilon_greedy, EpsilonSchedule};
use super::{mlp, states_batch, Transition};
use crate::config::{AgentConfig, TdLoss};
use crate::env::Action;
use crate::error::{Error, Result};
use crate::nn::{clip_grad_norm, Adam, AdamConfig, Sequential};

/// `r` if terminal, else `r + γ·max_next_q`.
pub fn dqn_td_target(reward: f64, gamma: f64, max_next_q: f64, terminal: bool) -> f64 {
    if terminal {
        reward
    } else {
        reward + gamma * max_next_q
    }
}

/// Deep Q-learner with a hard-synced target network.
#[derive(Clone, Debug)]
pub struct DqnAgent {
    pub policy: Sequential<f32>,
    pub target: Sequential<f32>,
    pub optimizer: Adam<f32>,
    pub schedule: EpsilonSchedule,
    pub gamma: f64,
    pub loss: TdLoss,
    pub grad_clip: Option<f64>,
    pub actions: usize,
    pub rng: ChaCha8Rng,
}

impl DqnAgent {
    pub fn new(cfg: &AgentConfig, state_dim: usize, actions: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let policy = mlp(&mut rng, state_dim, &cfg.hidden, actions, None, None);
        let target = policy.clone();
        Self {
            policy,
            target,
            optimizer: Adam::new(AdamConfig::with_learning_rate(cfg.learning_rate)),
            schedule: EpsilonSchedule {
                start: cfg.epsilon_start,
                end: cfg.epsilon_end,
                decay_frames: (cfg.epsilon_decay_fraction * cfg.max_frames as f64).round() as usize,
            },
            gamma: cfg.gamma,
            loss: cfg.loss,
            grad_clip: cfg.grad_clip,
            actions,
            rng,
        }
    }

    pub fn q_values(&self, state: &[f32]) -> Vec<f32> {
        let x = ArrayD::from_shape_vec(vec![1, state.len()], state.to_vec()).expect("row vector");
        self.policy.infer(&x).iter().copied().collect()
    }

    pub fn greedy(&self, state: &[f32]) -> usize {
        argmax(&self.q_values(state))
    }

    pub fn explore(&mut self, state: &[f32], frame: usize) -> usize {
        let q = self.q_values(state);
        epsilon_greedy(&q, self.schedule.value(frame), &mut self.rng)
    }

    pub fn sync_target(&mut self) -> Result<()> {
        self.target.copy_from(&self.policy)
    }

    /// One gradient step on the mean TD error of `batch`; returns the loss.
    pub fn update(&mut self, batch: &[&Transition]) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::EmptyBuffer);
        }
        let n = batch.len();
        let next = states_batch(batch.iter().map(|t| &t.next_state))?;
        let next_q = self.target.infer(&next);
        let next_q = next_q.view().into_dimensionality::<ndarray::Ix2>().expect("q table");
        let targets: Vec<f64> = batch
            .iter()
            .zip(next_q.axis_iter(Axis(0)))
            .map(|(t, row)| {
                let best = row.iter().copied().fold(f32::NEG_INFINITY, f32::max) as f64;
                dqn_td_target(t.reward, self.gamma, best, t.terminal)
            })
            .collect();

        let states = states_batch(batch.iter().map(|t| &t.state))?;
        let q = self.policy.forward_train(&states);
        let mut grad = Array2::<f32>::zeros((n, self.actions));
        let mut loss = 0.0;
        for (i, t) in batch.iter().enumerate() {
            let a = match t.action {
                Action::Discrete(a) if a < self.actions => a,
                _ => return Err(Error::Config("dqn transition needs a discrete action".into())),
            };
            let delta = q[[i, a]] as f64 - targets[i];
            let (l, g) = match self.loss {
                TdLoss::Mse => (delta * delta, 2.0 * delta),
                TdLoss::Huber if delta.abs() <= 1.0 => (0.5 * delta * delta, delta),
                TdLoss::Huber => (delta.abs() - 0.5, delta.signum()),
            };
            loss += l;
            grad[[i, a]] = (g / n as f64) as f32;
        }
        self.policy.backward(&grad.into_dyn());
        if let Some(c) = self.grad_clip {
            clip_grad_norm(&mut [&mut self.policy], c);
        }
        self.optimizer.step(&mut [&mut self.policy]);
        self.policy.zero_grad();
        Ok(loss / n as f64)
    }
}
