//! DQN and DDPG learners acting on state vectors (latent codes or raw
//! features), with replay, exploration, and target networks.

mod checkpoint;
mod ddpg;
mod dqn;
mod explore;
mod log;
mod replay;

use ndarray::ArrayD;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub use checkpoint::{load_agent, save_agent, AGENT_KIND};
pub use ddpg::{DdpgAgent, DdpgLosses};
pub use dqn::{dqn_td_target, DqnAgent};
pub use explore::{argmax, epsilon_greedy, EpsilonSchedule, OuProcess};
pub use log::{parse_training_log, EpisodeRecord, TRAINING_LOG_HEADER};
pub use replay::{ReplayBuffer, Transition};

use crate::config::{AgentConfig, Algorithm};
use crate::env::{Action, ActionSpace};
use crate::error::{Error, Result};
use crate::nn::{Activation, Layer, Linear, NetCounters, Sequential};

/// `Linear → ReLU` per hidden width, then a linear head.
pub fn mlp(
    rng: &mut ChaCha8Rng,
    input: usize,
    hidden: &[usize],
    output: usize,
    final_bound: Option<f64>,
    output_activation: Option<Activation>,
) -> Sequential<f32> {
    let mut layers = Vec::new();
    let mut width = input;
    for &h in hidden {
        layers.push(Layer::Linear(Linear::new(rng, width, h)));
        layers.push(Layer::activation(Activation::Relu));
        width = h;
    }
    layers.push(Layer::Linear(match final_bound {
        Some(b) => Linear::with_bound(rng, width, output, b),
        None => Linear::new(rng, width, output),
    }));
    if let Some(a) = output_activation {
        layers.push(Layer::activation(a));
    }
    Sequential::new(layers)
}

pub(crate) fn states_batch<'a>(rows: impl Iterator<Item = &'a Vec<f32>>) -> Result<ArrayD<f32>> {
    let mut data = Vec::new();
    let mut n = 0;
    let mut dim = None;
    for r in rows {
        match dim {
            None => dim = Some(r.len()),
            Some(d) if d != r.len() => {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    actual: r.len(),
                })
            }
            _ => {}
        }
        data.extend_from_slice(r);
        n += 1;
    }
    ArrayD::from_shape_vec(vec![n, dim.unwrap_or(0)], data).map_err(|_| Error::EmptyBuffer)
}

/// Losses from one gradient step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UpdateStats {
    pub loss: f64,
    pub actor_objective: Option<f64>,
}

#[derive(Clone, Debug)]
pub enum Learner {
    Dqn(DqnAgent),
    Ddpg(DdpgAgent),
}

/// A learner plus its replay buffer and training schedule.
#[derive(Clone, Debug)]
pub struct Agent {
    pub config: AgentConfig,
    pub state_dim: usize,
    pub learner: Learner,
    pub replay: ReplayBuffer,
    /// Environment transitions observed so far.
    pub frames: usize,
    pub updates: u64,
}

impl Agent {
    pub fn new(config: &AgentConfig, state_dim: usize, space: ActionSpace, seed: u64) -> Result<Self> {
        let learner = match (config.algorithm, space) {
            (Algorithm::Dqn, ActionSpace::Discrete(n)) => Learner::Dqn(DqnAgent::new(config, state_dim, n, seed)),
            (Algorithm::Ddpg, ActionSpace::Continuous { low, high }) => {
                if (low + high).abs() > 1e-12 {
                    return Err(Error::Config("ddpg expects a symmetric action range".into()));
                }
                Learner::Ddpg(DdpgAgent::new(config, state_dim, high, seed))
            }
            (a, s) => return Err(Error::Config(format!("{a:?} cannot act in {s:?}"))),
        };
        Ok(Self {
            config: config.clone(),
            state_dim,
            learner,
            replay: ReplayBuffer::new(config.replay_capacity, seed ^ 0x7e91_a5c3_0b1d_22f4),
            frames: 0,
            updates: 0,
        })
    }

    fn check(&self, state: &[f32]) -> Result<()> {
        if state.len() != self.state_dim {
            return Err(Error::DimensionMismatch {
                expected: self.state_dim,
                actual: state.len(),
            });
        }
        Ok(())
    }

    /// Deterministic action, no exploration, no state change.
    pub fn greedy_action(&self, state: &[f32]) -> Result<Action> {
        self.check(state)?;
        Ok(match &self.learner {
            Learner::Dqn(a) => Action::Discrete(a.greedy(state)),
            Learner::Ddpg(a) => Action::Continuous(a.greedy(state)),
        })
    }

    /// Exploratory action for the current frame.
    pub fn explore_action(&mut self, state: &[f32]) -> Result<Action> {
        self.check(state)?;
        let frame = self.frames;
        Ok(match &mut self.learner {
            Learner::Dqn(a) => Action::Discrete(a.explore(state, frame)),
            Learner::Ddpg(a) => Action::Continuous(a.explore(state)),
        })
    }

    /// Resets per-episode exploration state.
    pub fn begin_episode(&mut self) {
        if let Learner::Ddpg(a) = &mut self.learner {
            a.noise.reset();
        }
    }

    /// Current exploration level: ε for DQN, OU σ for DDPG.
    pub fn exploration(&self) -> f64 {
        match &self.learner {
            Learner::Dqn(a) => a.schedule.value(self.frames),
            Learner::Ddpg(a) => a.noise.sigma,
        }
    }

    /// Stores `t`, then trains and syncs targets when the schedule says so.
    pub fn observe(&mut self, t: Transition) -> Result<Option<UpdateStats>> {
        self.check(&t.state)?;
        self.check(&t.next_state)?;
        self.replay.push(t);
        self.frames += 1;
        let cfg = &self.config;
        let ready = self.replay.len() >= cfg.warmup.max(cfg.batch_size);
        let mut stats = None;
        if ready && self.frames.is_multiple_of(cfg.train_every.max(1)) {
            let batch = self.replay.sample(cfg.batch_size)?;
            stats = Some(match &mut self.learner {
                Learner::Dqn(a) => UpdateStats {
                    loss: a.update(&batch)?,
                    actor_objective: None,
                },
                Learner::Ddpg(a) => {
                    let l = a.update(&batch)?;
                    UpdateStats {
                        loss: l.critic,
                        actor_objective: Some(l.actor_objective),
                    }
                }
            });
            self.updates += 1;
        }
        if let Learner::Dqn(a) = &mut self.learner {
            if self.frames.is_multiple_of(cfg.target_sync_every.max(1)) {
                a.sync_target()?;
            }
        }
        Ok(stats)
    }

    pub fn nets(&self) -> Vec<&Sequential<f32>> {
        match &self.learner {
            Learner::Dqn(a) => vec![&a.policy, &a.target],
            Learner::Ddpg(a) => vec![&a.actor, &a.critic, &a.actor_target, &a.critic_target],
        }
    }

    pub fn nets_mut(&mut self) -> Vec<&mut Sequential<f32>> {
        match &mut self.learner {
            Learner::Dqn(a) => vec![&mut a.policy, &mut a.target],
            Learner::Ddpg(a) => vec![&mut a.actor, &mut a.critic, &mut a.actor_target, &mut a.critic_target],
        }
    }

    pub fn counters(&self) -> NetCounters {
        self.nets().iter().fold(NetCounters::default(), |acc, n| {
            let c = n.counters();
            NetCounters {
                train_forwards: acc.train_forwards + c.train_forwards,
                backward_passes: acc.backward_passes + c.backward_passes,
                param_writes: acc.param_writes + c.param_writes,
            }
        })
    }

    /// SHA-256 over every network's parameters.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for n in self.nets() {
            n.hash_into(&mut h);
        }
        hex::encode(h.finalize())
    }

    pub(crate) fn rng_mut(&mut self) -> &mut ChaCha8Rng {
        match &mut self.learner {
            Learner::Dqn(a) => &mut a.rng,
            Learner::Ddpg(a) => &mut a.rng,
        }
    }

    /// A uniformly random action, used to pre-fill replay for DQN.
    pub fn random_action(&mut self, space: ActionSpace) -> Action {
        let rng = self.rng_mut();
        match space {
            ActionSpace::Discrete(n) => Action::Discrete(rng.random_range(0..n)),
            ActionSpace::Continuous { low, high } => Action::Continuous(rng.random_range(low..=high)),
        }
    }
}
