use ndarray::{s, Array2, ArrayD, Ix2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::explore::OuProcess;
use super::{mlp, states_batch, Transition};
use crate::config::AgentConfig;
use crate::env::Action;
use crate::error::{Error, Result};
use crate::nn::{clip_grad_norm, soft_update, Activation, Adam, AdamConfig, Sequential};

const FINAL_LAYER_BOUND: f64 = 3e-3;

/// Deterministic actor-critic for a one-dimensional action in `[−bound, bound]`.
#[derive(Clone, Debug)]
pub struct DdpgAgent {
    pub actor: Sequential<f32>,
    pub critic: Sequential<f32>,
    pub actor_target: Sequential<f32>,
    pub critic_target: Sequential<f32>,
    pub actor_optimizer: Adam<f32>,
    pub critic_optimizer: Adam<f32>,
    pub noise: OuProcess,
    pub gamma: f64,
    pub tau: f64,
    pub grad_clip: Option<f64>,
    pub action_bound: f64,
    pub rng: ChaCha8Rng,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DdpgLosses {
    pub critic: f64,
    /// Mean `Q(s, μ(s))` before the actor step.
    pub actor_objective: f64,
}

impl DdpgAgent {
    pub fn new(cfg: &AgentConfig, state_dim: usize, action_bound: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let actor = mlp(
            &mut rng,
            state_dim,
            &cfg.hidden,
            1,
            Some(FINAL_LAYER_BOUND),
            Some(Activation::Tanh),
        );
        let critic = mlp(&mut rng, state_dim + 1, &cfg.hidden, 1, Some(FINAL_LAYER_BOUND), None);
        Self {
            actor_target: actor.clone(),
            critic_target: critic.clone(),
            actor,
            critic,
            actor_optimizer: Adam::new(AdamConfig::with_learning_rate(cfg.actor_learning_rate)),
            critic_optimizer: Adam::new(AdamConfig::with_learning_rate(cfg.critic_learning_rate)),
            noise: OuProcess::new(1, cfg.ou_theta, cfg.ou_sigma),
            gamma: cfg.gamma,
            tau: cfg.tau,
            grad_clip: cfg.grad_clip,
            action_bound,
            rng,
        }
    }

    fn scaled_actions(&self, raw: &ArrayD<f32>) -> Array2<f32> {
        let b = self.action_bound as f32;
        raw.view().into_dimensionality::<Ix2>().expect("action column").mapv(|a| a * b)
    }

    fn critic_input(states: &ArrayD<f32>, actions: &Array2<f32>) -> ArrayD<f32> {
        let s = states.view().into_dimensionality::<Ix2>().expect("state rows");
        let d = s.ncols();
        let mut x = Array2::zeros((s.nrows(), d + 1));
        x.slice_mut(s![.., ..d]).assign(&s);
        x.slice_mut(s![.., d..]).assign(actions);
        x.into_dyn()
    }

    pub fn greedy(&self, state: &[f32]) -> f64 {
        let x = ArrayD::from_shape_vec(vec![1, state.len()], state.to_vec()).expect("row vector");
        self.actor.infer(&x).iter().next().copied().unwrap_or(0.0) as f64 * self.action_bound
    }

    pub fn explore(&mut self, state: &[f32]) -> f64 {
        let a = self.greedy(state);
        let n = self.noise.sample(&mut self.rng)[0];
        (a + n * self.action_bound).clamp(-self.action_bound, self.action_bound)
    }

    pub fn critic_value(&self, state: &[f32], action: f64) -> f64 {
        let x = ArrayD::from_shape_vec(vec![1, state.len()], state.to_vec()).expect("row vector");
        let a = Array2::from_elem((1, 1), action as f32);
        self.critic.infer(&Self::critic_input(&x, &a)).iter().next().copied().unwrap_or(0.0) as f64
    }

    /// Critic targets `r + γ(1 − terminal)·Q'(s', μ'(s'))`.
    pub fn critic_targets(&self, batch: &[&Transition]) -> Result<Vec<f64>> {
        let next = states_batch(batch.iter().map(|t| &t.next_state))?;
        let next_a = self.scaled_actions(&self.actor_target.infer(&next));
        let next_q = self.critic_target.infer(&Self::critic_input(&next, &next_a));
        Ok(batch
            .iter()
            .zip(next_q.iter())
            .map(|(t, &q)| if t.terminal { t.reward } else { t.reward + self.gamma * q as f64 })
            .collect())
    }

    pub fn update(&mut self, batch: &[&Transition]) -> Result<DdpgLosses> {
        if batch.is_empty() {
            return Err(Error::EmptyBuffer);
        }
        let n = batch.len();
        let targets = self.critic_targets(batch)?;
        let states = states_batch(batch.iter().map(|t| &t.state))?;
        let actions = batch
            .iter()
            .map(|t| match t.action {
                Action::Continuous(a) => Ok(a as f32),
                Action::Discrete(_) => Err(Error::Config("ddpg transition needs a continuous action".into())),
            })
            .collect::<Result<Vec<f32>>>()?;
        let actions = Array2::from_shape_vec((n, 1), actions).expect("action column");

        let q = self.critic.forward_train(&Self::critic_input(&states, &actions));
        let mut critic_loss = 0.0;
        let grad: Vec<f32> = q
            .iter()
            .zip(&targets)
            .map(|(&q, &y)| {
                let d = q as f64 - y;
                critic_loss += d * d;
                (2.0 * d / n as f64) as f32
            })
            .collect();
        self.critic
            .backward(&ArrayD::from_shape_vec(vec![n, 1], grad).expect("grad column"));
        if let Some(c) = self.grad_clip {
            clip_grad_norm(&mut [&mut self.critic], c);
        }
        self.critic_optimizer.step(&mut [&mut self.critic]);
        self.critic.zero_grad();

        let raw = self.actor.forward_train(&states);
        let mu = self.scaled_actions(&raw);
        let q = self.critic.forward_train(&Self::critic_input(&states, &mu));
        let objective = q.iter().map(|&v| v as f64).sum::<f64>() / n as f64;
        let ascend = ArrayD::from_elem(vec![n, 1], -1.0 / n as f32);
        let dx = self.critic.backward(&ascend);
        self.critic.zero_grad();
        let d = states.shape()[1];
        let dx = dx.into_dimensionality::<Ix2>().expect("critic input grad");
        let da = dx.slice(s![.., d..]).mapv(|g| g * self.action_bound as f32);
        self.actor.backward(&da.into_dyn());
        if let Some(c) = self.grad_clip {
            clip_grad_norm(&mut [&mut self.actor], c);
        }
        self.actor_optimizer.step(&mut [&mut self.actor]);
        self.actor.zero_grad();

        soft_update(&mut self.critic_target, &self.critic, self.tau)?;
        soft_update(&mut self.actor_target, &self.actor, self.tau)?;
        Ok(DdpgLosses {
            critic: critic_loss / n as f64,
            actor_objective: objective,
        })
    }
}
