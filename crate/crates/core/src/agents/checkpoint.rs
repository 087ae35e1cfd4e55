use std::path::Path;

use rand_chacha::ChaCha8Rng;
use serde_json::json;

use super::{Agent, Learner};
use crate::archive::{Archive, ArchiveWriter};
use crate::config::AgentConfig;
use crate::env::ActionSpace;
use crate::error::{Error, Result};
use crate::nn::Adam;

pub const AGENT_KIND: &str = "agent";

fn optimizers(agent: &Agent) -> Vec<&Adam<f32>> {
    match &agent.learner {
        Learner::Dqn(a) => vec![&a.optimizer],
        Learner::Ddpg(a) => vec![&a.actor_optimizer, &a.critic_optimizer],
    }
}

fn optimizers_mut(agent: &mut Agent) -> Vec<&mut Adam<f32>> {
    match &mut agent.learner {
        Learner::Dqn(a) => vec![&mut a.optimizer],
        Learner::Ddpg(a) => vec![&mut a.actor_optimizer, &mut a.critic_optimizer],
    }
}

fn action_space(agent: &Agent) -> ActionSpace {
    match &agent.learner {
        Learner::Dqn(a) => ActionSpace::Discrete(a.actions),
        Learner::Ddpg(a) => ActionSpace::Continuous {
            low: -a.action_bound,
            high: a.action_bound,
        },
    }
}

/// Saves networks, optimizer moments, counters and RNG states. The replay
/// contents are not stored. Returns the file's SHA-256.
pub fn save_agent(agent: &Agent, path: &Path) -> Result<String> {
    let (actions, bound) = match action_space(agent) {
        ActionSpace::Discrete(n) => (n, 0.0),
        ActionSpace::Continuous { high, .. } => (0, high),
    };
    let opt_steps: Vec<u64> = optimizers(agent).iter().map(|o| o.steps()).collect();
    let noise = match &agent.learner {
        Learner::Ddpg(a) => Some(a.noise.clone()),
        Learner::Dqn(_) => None,
    };
    let learner_rng = match &agent.learner {
        Learner::Dqn(a) => &a.rng,
        Learner::Ddpg(a) => &a.rng,
    };
    let mut w = ArchiveWriter::new(
        AGENT_KIND,
        json!({
            "config": agent.config,
            "state_dim": agent.state_dim,
            "actions": actions,
            "action_bound": bound,
            "frames": agent.frames,
            "updates": agent.updates,
            "optimizer_steps": opt_steps,
            "rng": learner_rng,
            "replay_rng": agent.replay.rng(),
            "noise": noise,
            "digest": agent.digest(),
        }),
    );
    for (i, net) in agent.nets().iter().enumerate() {
        for (j, (shape, data)) in net.tensors().iter().enumerate() {
            w.add_f32(&format!("net{i}.{j}"), shape, data);
        }
    }
    for (i, opt) in optimizers(agent).iter().enumerate() {
        for (j, (shape, data)) in opt.state().1.iter().enumerate() {
            w.add_f32(&format!("opt{i}.{j}"), shape, data);
        }
    }
    w.write(path)
}

pub fn load_agent(path: &Path) -> Result<Agent> {
    let a = Archive::read(path)?;
    a.expect_kind(AGENT_KIND)?;
    let config: AgentConfig = a.meta_field("config")?;
    let state_dim: usize = a.meta_field("state_dim")?;
    let actions: usize = a.meta_field("actions")?;
    let bound: f64 = a.meta_field("action_bound")?;
    let space = if actions > 0 {
        ActionSpace::Discrete(actions)
    } else {
        ActionSpace::Continuous { low: -bound, high: bound }
    };
    let mut agent = Agent::new(&config, state_dim, space, 0)?;
    agent.frames = a.meta_field("frames")?;
    agent.updates = a.meta_field("updates")?;
    agent.replay.set_rng(a.meta_field("replay_rng")?);
    let rng: ChaCha8Rng = a.meta_field("rng")?;
    match &mut agent.learner {
        Learner::Dqn(l) => l.rng = rng,
        Learner::Ddpg(l) => {
            l.rng = rng;
            l.noise = a.meta_field("noise")?;
        }
    }
    for (i, net) in agent.nets_mut().into_iter().enumerate() {
        let tensors = (0..net.tensors().len())
            .map(|j| a.f32(&format!("net{i}.{j}")))
            .collect::<Result<Vec<_>>>()?;
        net.load_tensors(&tensors)?;
    }
    let steps: Vec<u64> = a.meta_field("optimizer_steps")?;
    for (i, opt) in optimizers_mut(&mut agent).into_iter().enumerate() {
        let prefix = format!("opt{i}.");
        let tensors = (0..)
            .map(|j| format!("{prefix}{j}"))
            .take_while(|name| a.entries().iter().any(|e| &e.name == name))
            .map(|name| a.f32(&name))
            .collect::<Result<Vec<_>>>()?;
        opt.load_state(steps.get(i).copied().unwrap_or(0), &tensors)?;
    }
    let digest: String = a.meta_field("digest")?;
    if agent.digest() != digest {
        return Err(Error::Format {
            path: path.to_path_buf(),
            message: "agent digest does not match its parameters".into(),
        });
    }
    Ok(agent)
}
