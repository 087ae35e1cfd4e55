use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{
    collect_dataset, derive_seed, EpisodeOutcome, LatentStateEncoder, PairedDataset, RawStateEncoder, SeedDomain,
    StateEncoder,
};
use crate::agents::{Agent, EpisodeRecord, Transition};
use crate::config::{AgentConfig, ExperimentConfig};
use crate::env::{EndCause, MultimodalEnv};
use crate::error::{Error, Result};
use crate::generative::{train_avae, AvaeArchitecture, AvaeModel, EpochLoss, LossHistory, LossWeights, TrainOptions};
use crate::modality::ModalitySubset;

/// Stage 1: fits the AVAE on a paired dataset.
pub fn stage1_train_perception(
    dataset: &PairedDataset,
    cfg: &ExperimentConfig,
    seed: u64,
    on_epoch: impl FnMut(&EpochLoss),
) -> Result<(AvaeModel<f32>, LossHistory)> {
    let normalizer = dataset
        .normalizer
        .clone()
        .ok_or_else(|| Error::Config("perception training needs a non-empty dataset".into()))?;
    let arch = AvaeArchitecture::for_config(cfg);
    let mut model = AvaeModel::new(arch, LossWeights::from(&cfg.avae), normalizer, seed)?;
    let history = train_avae(&mut model, &dataset.training_set(), &TrainOptions::from_config(&cfg.avae, seed), on_epoch)?;
    Ok((model, history))
}

/// A trained agent and its per-episode learning curve.
#[derive(Clone, Debug)]
pub struct PolicyRun {
    pub agent: Agent,
    pub log: Vec<EpisodeRecord>,
}

/// Trains a fresh agent for `cfg.max_frames` environment frames on states
/// produced by `encoder`.
pub fn train_policy(
    env: &mut dyn MultimodalEnv,
    encoder: &dyn StateEncoder,
    cfg: &AgentConfig,
    seed: u64,
    mut on_episode: impl FnMut(&EpisodeRecord),
) -> Result<PolicyRun> {
    let mut agent = Agent::new(
        cfg,
        encoder.state_dim(),
        env.action_space(),
        derive_seed(seed, SeedDomain::AgentInit, 0),
    )?;
    let mut log = Vec::new();
    let mut episode = 0usize;
    while agent.frames < cfg.max_frames {
        let obs = env.reset(derive_seed(seed, SeedDomain::TrainingEpisodes, episode as u64))?;
        agent.begin_episode();
        let mut state = encoder.encode(&obs)?;
        let (mut ret, mut disc, mut discount) = (0.0, 0.0, 1.0);
        let (mut loss, mut objective, mut updates) = (0.0, 0.0, 0usize);
        loop {
            let action = agent.explore_action(&state)?;
            let step = env.step(action)?;
            let next = encoder.encode(&step.observation)?;
            ret += step.reward;
            disc += discount * step.reward;
            discount *= cfg.gamma;
            if let Some(s) = agent.observe(Transition {
                state: std::mem::take(&mut state),
                action,
                reward: step.reward,
                next_state: next.clone(),
                terminal: step.terminal && !step.info.truncated,
            })? {
                loss += s.loss;
                objective += s.actor_objective.unwrap_or(f64::NAN);
                updates += 1;
            }
            state = next;
            if step.terminal || agent.frames >= cfg.max_frames {
                break;
            }
        }
        let mean = |x: f64| if updates > 0 { x / updates as f64 } else { f64::NAN };
        let record = EpisodeRecord {
            episode,
            frames: agent.frames,
            episode_return: ret,
            discounted_return: disc,
            mean_loss: mean(loss),
            mean_actor_objective: mean(objective),
            exploration: agent.exploration(),
        };
        on_episode(&record);
        log.push(record);
        episode += 1;
    }
    Ok(PolicyRun { agent, log })
}

/// Stage 2: learns a policy over the `train` modality's latent codes while
/// the perception model stays frozen.
pub fn stage2_train_policy(
    env: &mut dyn MultimodalEnv,
    model: &AvaeModel<f32>,
    train: &ModalitySubset,
    cfg: &AgentConfig,
    seed: u64,
    on_episode: impl FnMut(&EpisodeRecord),
) -> Result<PolicyRun> {
    let before = model.digest();
    let encoder = LatentStateEncoder::new(model, train)?;
    encoder.check_env(env)?;
    let run = train_policy(env, &encoder, cfg, seed, on_episode)?;
    let after = model.digest();
    if after != before {
        return Err(Error::FrozenModelViolation { before, after });
    }
    Ok(run)
}

/// How actions are chosen during evaluation.
#[derive(Clone, Copy, Debug)]
pub enum EvalPolicy<'a> {
    /// Deterministic, noiseless agent actions.
    Greedy(&'a Agent),
    /// Uniform random actions; no encoding takes place.
    Random,
}

/// Runs `episodes` evaluation episodes for run `seed`. Episode seeds come
/// from a stream disjoint from training.
pub fn evaluate(
    env: &mut dyn MultimodalEnv,
    encoder: Option<&dyn StateEncoder>,
    policy: EvalPolicy,
    episodes: usize,
    seed: u64,
    gamma: f64,
) -> Result<Vec<EpisodeOutcome>> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, SeedDomain::RandomPolicy, 0));
    let has_wins = env.name() == "hyperhot";
    let mut out = Vec::with_capacity(episodes);
    for ep in 0..episodes {
        let mut obs = env.reset(derive_seed(seed, SeedDomain::EvaluationEpisodes, ep as u64))?;
        let (mut ret, mut disc, mut discount, mut steps) = (0.0, 0.0, 1.0, 0usize);
        let win = loop {
            let action = match policy {
                EvalPolicy::Greedy(agent) => {
                    let enc = encoder.ok_or_else(|| Error::Config("greedy evaluation needs an encoder".into()))?;
                    agent.greedy_action(&enc.encode(&obs)?)?
                }
                EvalPolicy::Random => env.random_action(&mut rng),
            };
            let step = env.step(action)?;
            ret += step.reward;
            disc += discount * step.reward;
            discount *= gamma;
            steps += 1;
            if step.terminal {
                break step.info.cause == Some(EndCause::Win);
            }
            obs = step.observation;
        };
        out.push(EpisodeOutcome {
            seed,
            episode: ep,
            steps,
            undiscounted: ret,
            discounted: disc,
            per_step: ret / steps as f64,
            win: has_wins.then_some(win),
        });
    }
    Ok(out)
}

/// Stage 3: zero-shot evaluation of `agent` through the `test` modality's
/// encoder. Fails if anything was trained or modified along the way.
pub fn stage3_evaluate_transfer(
    env: &mut dyn MultimodalEnv,
    model: &AvaeModel<f32>,
    agent: &Agent,
    test: &ModalitySubset,
    episodes: usize,
    seed: u64,
    gamma: f64,
) -> Result<Vec<EpisodeOutcome>> {
    if agent.state_dim != model.latent_dim() {
        return Err(Error::DimensionMismatch {
            expected: model.latent_dim(),
            actual: agent.state_dim,
        });
    }
    let encoder = LatentStateEncoder::new(model, test)?;
    encoder.check_env(env)?;
    let (model_digest, model_counters) = (model.digest(), model.counters());
    let (agent_digest, agent_counters) = (agent.digest(), agent.counters());
    let out = evaluate(env, Some(&encoder), EvalPolicy::Greedy(agent), episodes, seed, gamma)?;
    let updates = model.counters().total() - model_counters.total() + agent.counters().total() - agent_counters.total();
    if updates != 0 {
        return Err(Error::PurityViolation(updates));
    }
    for (before, after) in [(model_digest, model.digest()), (agent_digest, agent.digest())] {
        if before != after {
            return Err(Error::FrozenModelViolation { before, after });
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Baseline {
    Random,
    NativeSound,
    NativeImage,
}

impl std::str::FromStr for Baseline {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(Self::Random),
            "native-sound" | "native_sound" | "sound" => Ok(Self::NativeSound),
            "native-image" | "native_image" | "image" => Ok(Self::NativeImage),
            _ => Err(Error::Config(format!("unknown baseline {s:?}"))),
        }
    }
}

impl std::fmt::Display for Baseline {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Random => "random",
            Self::NativeSound => "native-sound",
            Self::NativeImage => "native-image",
        })
    }
}

/// State encoder of a native baseline: raw images, or raw sounds scaled
/// with statistics from `dataset` or, if absent, from a fresh random
/// rollout seeded by `seed`. `None` for the random baseline.
pub fn baseline_encoder(
    kind: Baseline,
    env: &mut dyn MultimodalEnv,
    cfg: &ExperimentConfig,
    dataset: Option<&PairedDataset>,
    seed: u64,
) -> Result<Option<Box<dyn StateEncoder>>> {
    Ok(match kind {
        Baseline::Random => None,
        Baseline::NativeImage => Some(Box::new(RawStateEncoder::image(env))),
        Baseline::NativeSound => {
            let normalizer = match dataset.and_then(|d| d.normalizer.clone()) {
                Some(n) => n,
                None => {
                    let fit_seed = derive_seed(seed, SeedDomain::Normalizer, 0);
                    collect_dataset(env, cfg.avae.dataset_size.min(5000), fit_seed, None)?
                        .normalizer
                        .ok_or_else(|| Error::Config("cannot fit sound statistics on zero samples".into()))?
                }
            };
            Some(Box::new(RawStateEncoder::sound(normalizer)))
        }
    })
}

/// Greedy evaluation of a trained native agent; fails if anything updates.
pub fn evaluate_native(
    env: &mut dyn MultimodalEnv,
    encoder: &dyn StateEncoder,
    agent: &Agent,
    episodes: usize,
    seed: u64,
    gamma: f64,
) -> Result<Vec<EpisodeOutcome>> {
    if agent.state_dim != encoder.state_dim() {
        return Err(Error::DimensionMismatch {
            expected: encoder.state_dim(),
            actual: agent.state_dim,
        });
    }
    let (digest, counters) = (agent.digest(), agent.counters());
    let outcomes = evaluate(env, Some(encoder), EvalPolicy::Greedy(agent), episodes, seed, gamma)?;
    let updates = agent.counters().total() - counters.total();
    if updates != 0 {
        return Err(Error::PurityViolation(updates));
    }
    let after = agent.digest();
    if after != digest {
        return Err(Error::FrozenModelViolation { before: digest, after });
    }
    Ok(outcomes)
}

/// Baselines that bypass the latent space: trains a native agent (unless
/// `kind` is random) and evaluates it.
pub fn run_baseline(
    kind: Baseline,
    env: &mut dyn MultimodalEnv,
    cfg: &ExperimentConfig,
    dataset: Option<&PairedDataset>,
    seed: u64,
    on_episode: impl FnMut(&EpisodeRecord),
) -> Result<(Option<PolicyRun>, Vec<EpisodeOutcome>)> {
    let episodes = cfg.pipeline.eval_episodes;
    let gamma = cfg.agent.gamma;
    let Some(encoder) = baseline_encoder(kind, env, cfg, dataset, seed)? else {
        return Ok((None, evaluate(env, None, EvalPolicy::Random, episodes, seed, gamma)?));
    };
    let run = train_policy(env, encoder.as_ref(), &cfg.agent, seed, on_episode)?;
    let outcomes = evaluate_native(env, encoder.as_ref(), &run.agent, episodes, seed, gamma)?;
    Ok((Some(run), outcomes))
}
