//! Experiment configuration: scenario constants, perception model,
//! agent, and pipeline settings, stored as TOML text.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::acoustics::{AcousticsConfig, Displacement};
use crate::error::{Error, Result};
use crate::modality::ModalitySubset;

pub const PRESETS: [(&str, &str); 4] = [
    ("pendulum", include_str!("../presets/pendulum.cfg")),
    ("pendulum-desk", include_str!("../presets/pendulum-desk.cfg")),
    ("hyperhot", include_str!("../presets/hyperhot.cfg")),
    ("hyperhot-desk", include_str!("../presets/hyperhot-desk.cfg")),
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: ScenarioConfig,
    pub avae: AvaeConfig,
    pub agent: AgentConfig,
    pub pipeline: PipelineConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScenarioConfig {
    Pendulum(PendulumScenario),
    Hyperhot(HyperHotScenario),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReceiverSpec {
    pub id: String,
    pub position: [f64; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PendulumScenario {
    pub f0: f64,
    pub inverse_square_k: f64,
    pub speed_of_sound: f64,
    pub frame_stack: usize,
    pub max_episode_length: usize,
    pub image_size: usize,
    #[serde(default)]
    pub displacement: Displacement,
    pub receivers: Vec<ReceiverSpec>,
}

impl Default for PendulumScenario {
    fn default() -> Self {
        ExperimentConfig::preset("pendulum")
            .map(|c| match c.scenario {
                ScenarioConfig::Pendulum(p) => p,
                ScenarioConfig::Hyperhot(_) => unreachable!(),
            })
            .expect("pendulum preset")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HyperHotScenario {
    /// Left enemies, right enemies, enemy bullets, player bullets.
    pub frequencies: [f64; 4],
    pub amplitudes: [f64; 4],
    pub max_amplitude: f64,
    pub decay: f64,
    pub speed_of_sound: f64,
    #[serde(default)]
    pub doppler: bool,
    pub receivers: Vec<String>,
    pub frame_stack: usize,
    pub max_episode_length: usize,
    pub image_size: usize,
    pub sample_rate: f64,
    pub samples_per_frame: usize,
    /// Acoustic units per playfield unit (the playfield spans [-1, 1]²).
    pub acoustic_scale: f64,
}

impl Default for HyperHotScenario {
    fn default() -> Self {
        ExperimentConfig::preset("hyperhot")
            .map(|c| match c.scenario {
                ScenarioConfig::Hyperhot(h) => h,
                ScenarioConfig::Pendulum(_) => unreachable!(),
            })
            .expect("hyperhot preset")
    }
}

impl HyperHotScenario {
    pub fn acoustics(&self) -> AcousticsConfig {
        AcousticsConfig {
            speed_of_sound: self.speed_of_sound,
            inverse_square_k: 1.0,
            decay: self.decay,
            sample_rate: self.sample_rate,
            samples_per_frame: self.samples_per_frame,
            max_amplitude: self.max_amplitude,
            pcm_bit_depth: 16,
            displacement: Displacement::Raw,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AvaeConfig {
    pub latent_dim: usize,
    pub lambda_image: f64,
    pub lambda_sound: f64,
    pub beta: f64,
    pub alpha: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub dataset_size: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Ddpg,
    Dqn,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TdLoss {
    #[default]
    Mse,
    Huber,
}

fn default_lr() -> f64 {
    1e-3
}
fn default_actor_lr() -> f64 {
    1e-4
}
fn default_tau() -> f64 {
    1e-3
}
fn default_warmup() -> usize {
    1000
}
fn default_one() -> usize {
    1
}
fn default_sync() -> usize {
    1000
}
fn default_eps_start() -> f64 {
    1.0
}
fn default_eps_end() -> f64 {
    0.05
}
fn default_eps_fraction() -> f64 {
    0.1
}
fn default_ou_theta() -> f64 {
    0.15
}
fn default_ou_sigma() -> f64 {
    0.2
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentConfig {
    pub algorithm: Algorithm,
    pub batch_size: usize,
    pub gamma: f64,
    pub replay_capacity: usize,
    pub max_frames: usize,
    pub hidden: Vec<usize>,
    #[serde(default = "default_tau")]
    pub tau: f64,
    /// DQN learning rate.
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_actor_lr")]
    pub actor_learning_rate: f64,
    #[serde(default = "default_lr")]
    pub critic_learning_rate: f64,
    /// Transitions collected before the first gradient step.
    #[serde(default = "default_warmup")]
    pub warmup: usize,
    /// Environment frames per gradient step.
    #[serde(default = "default_one")]
    pub train_every: usize,
    #[serde(default = "default_sync")]
    pub target_sync_every: usize,
    #[serde(default = "default_eps_start")]
    pub epsilon_start: f64,
    #[serde(default = "default_eps_end")]
    pub epsilon_end: f64,
    #[serde(default = "default_eps_fraction")]
    pub epsilon_decay_fraction: f64,
    #[serde(default = "default_ou_theta")]
    pub ou_theta: f64,
    #[serde(default = "default_ou_sigma")]
    pub ou_sigma: f64,
    #[serde(default)]
    pub loss: TdLoss,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grad_clip: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub train_modality: ModalitySubset,
    pub test_modality: ModalitySubset,
    pub eval_episodes: usize,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub dataset_seed: u64,
}

impl ExperimentConfig {
    pub fn preset(name: &str) -> Result<Self> {
        let text = PRESETS
            .iter()
            .find(|(n, _)| *n == name.trim_end_matches(".cfg"))
            .map(|(_, t)| *t)
            .ok_or_else(|| Error::Config(format!("unknown preset {name:?}")))?;
        Self::from_toml(text)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| {
            let line = e
                .span()
                .map(|s| text[..s.start.min(text.len())].lines().count().max(1))
                .unwrap_or(0);
            Error::Parse {
                line,
                message: e.message().to_string(),
            }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads a file path, or a preset name when no such file exists.
    pub fn load(path_or_preset: &str) -> Result<Self> {
        let path = Path::new(path_or_preset);
        if path.exists() {
            Self::from_toml(&std::fs::read_to_string(path)?)
        } else if PRESETS.iter().any(|(n, _)| *n == path_or_preset.trim_end_matches(".cfg")) {
            Self::preset(path_or_preset)
        } else {
            Err(Error::MissingArtifact(path.to_path_buf()))
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// SHA-256 of the canonical serialization.
    pub fn digest(&self) -> String {
        let text = self.to_toml().expect("config serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }

    pub fn scenario_name(&self) -> &'static str {
        match self.scenario {
            ScenarioConfig::Pendulum(_) => "pendulum",
            ScenarioConfig::Hyperhot(_) => "hyperhot",
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        match &self.scenario {
            ScenarioConfig::Pendulum(p) => {
                if self.agent.algorithm != Algorithm::Ddpg {
                    return bad("pendulum has a continuous action space; use algorithm = \"ddpg\"".into());
                }
                if p.receivers.is_empty() {
                    return bad("pendulum needs at least one receiver".into());
                }
                if !(p.f0 > 0.0 && p.speed_of_sound > 0.0) {
                    return bad("pendulum f0 and speed_of_sound must be positive".into());
                }
                check_common(p.frame_stack, p.max_episode_length, p.image_size)?;
            }
            ScenarioConfig::Hyperhot(h) => {
                if self.agent.algorithm != Algorithm::Dqn {
                    return bad("hyperhot has a discrete action space; use algorithm = \"dqn\"".into());
                }
                for r in &h.receivers {
                    if !["lb", "rb", "pl", "pr"].contains(&r.as_str()) {
                        return bad(format!("unknown hyperhot receiver {r:?}"));
                    }
                }
                if h.receivers.is_empty() {
                    return bad("hyperhot needs at least one receiver".into());
                }
                if h.frequencies.iter().any(|f| !(*f > 0.0)) || h.amplitudes.iter().any(|a| !(*a >= 0.0)) {
                    return bad("hyperhot frequencies must be > 0 and amplitudes >= 0".into());
                }
                if !(h.acoustic_scale > 0.0) {
                    return bad("acoustic_scale must be > 0".into());
                }
                h.acoustics().validate()?;
                check_common(h.frame_stack, h.max_episode_length, h.image_size)?;
            }
        }
        let a = &self.avae;
        if a.latent_dim == 0 || a.batch_size == 0 {
            return bad("avae latent_dim and batch_size must be positive".into());
        }
        if [a.lambda_image, a.lambda_sound, a.beta, a.alpha].iter().any(|w| !(*w >= 0.0)) {
            return bad("avae loss weights must be >= 0".into());
        }
        if !(a.learning_rate > 0.0) {
            return bad("avae learning_rate must be > 0".into());
        }
        let g = &self.agent;
        if !(0.0..1.0).contains(&g.gamma) {
            return bad(format!("gamma {} outside [0, 1)", g.gamma));
        }
        if !(g.tau > 0.0 && g.tau <= 1.0) {
            return bad(format!("tau {} outside (0, 1]", g.tau));
        }
        if g.batch_size == 0 || g.replay_capacity == 0 || g.train_every == 0 || g.target_sync_every == 0 {
            return bad("agent batch_size, replay_capacity, train_every, target_sync_every must be positive".into());
        }
        if g.hidden.is_empty() {
            return bad("agent hidden layers must not be empty".into());
        }
        if !(g.epsilon_end >= 0.0 && g.epsilon_end <= g.epsilon_start && g.epsilon_start <= 1.0) {
            return bad("epsilon schedule must satisfy 0 <= end <= start <= 1".into());
        }
        if self.pipeline.seeds.is_empty() {
            return bad("pipeline seeds must not be empty".into());
        }
        Ok(())
    }
}

fn check_common(frame_stack: usize, max_episode_length: usize, image_size: usize) -> Result<()> {
    if frame_stack == 0 || max_episode_length == 0 || image_size < 8 {
        return Err(Error::Config(
            "frame_stack and max_episode_length must be positive; image_size >= 8".into(),
        ));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_load_with_reference_values() {
        let p = ExperimentConfig::preset("pendulum").unwrap();
        assert_eq!(p.avae.latent_dim, 10);
        assert_eq!(p.avae.dataset_size, 20000);
        assert_eq!(p.agent.replay_capacity, 25000);
        assert_eq!(p.agent.max_frames, 150_000);
        assert_eq!((p.agent.actor_learning_rate, p.agent.critic_learning_rate), (1e-4, 1e-3));
        assert_eq!((p.avae.lambda_image, p.avae.lambda_sound, p.avae.beta, p.avae.alpha), (1.0, 1.0, 1.0, 1.0));

        let h = ExperimentConfig::preset("hyperhot").unwrap();
        assert_eq!(h.avae.latent_dim, 40);
        assert_eq!((h.avae.lambda_image, h.avae.lambda_sound), (0.02, 0.015));
        assert_eq!((h.avae.beta, h.avae.alpha), (1e-5, 0.05));
        assert_eq!(h.agent.max_frames, 1_750_000);
        let ScenarioConfig::Hyperhot(s) = &h.scenario else { panic!() };
        assert_eq!(s.frequencies, [261.0, 329.0, 392.0, 466.0]);
        assert_eq!((s.sample_rate, s.samples_per_frame), (31400.0, 1047));

        let d = ExperimentConfig::preset("hyperhot-desk").unwrap();
        assert_eq!((d.agent.max_frames, d.agent.replay_capacity), (200_000, 50_000));
        assert_eq!((d.avae.dataset_size, d.avae.epochs), (8000, 60));
    }

    #[test]
    fn round_trip_is_identity() {
        for (name, _) in PRESETS {
            let cfg = ExperimentConfig::preset(name).unwrap();
            let again = ExperimentConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
            assert_eq!(cfg, again);
            assert_eq!(cfg.digest(), again.digest());
        }
    }

    #[test]
    fn cross_field_checks() {
        let mut cfg = ExperimentConfig::preset("pendulum").unwrap();
        cfg.agent.algorithm = Algorithm::Dqn;
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));

        let mut cfg = ExperimentConfig::preset("hyperhot").unwrap();
        cfg.agent.gamma = 1.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let text = "[scenario]\nkind = \"pendulum\"\nf0 = \"loud\"\n";
        match ExperimentConfig::from_toml(text) {
            Err(Error::Parse { line, .. }) => assert!(line >= 1),
            other => panic!("unexpected {other:?}"),
        }
    }
}
