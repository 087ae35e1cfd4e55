//! Game environments emitting paired image and sound observations.

mod dump;
mod hyperhot;
mod pendulum;
mod raster;

use ndarray::{Array3, ArrayD, Axis, IxDyn};
use serde::{Deserialize, Serialize};

pub use dump::{write_png_gray, write_wav_mono16};
pub use hyperhot::{HyperHot, HyperHotAction, HyperHotMechanics, HyperHotState};
pub use pendulum::{Pendulum, PendulumState};
pub use raster::Canvas;

use crate::config::{ExperimentConfig, ScenarioConfig};
use crate::error::Result;

/// Sound part of an observation.
#[derive(Clone, Debug, PartialEq)]
pub enum SoundPayload {
    /// `(stack, receivers, 2)` of (frequency, amplitude).
    Tones(Array3<f64>),
    /// `(stack, receivers, samples_per_frame)` of 16-bit PCM.
    Pcm(Array3<i16>),
}

impl SoundPayload {
    pub fn shape(&self) -> &[usize] {
        match self {
            SoundPayload::Tones(a) => a.shape(),
            SoundPayload::Pcm(a) => a.shape(),
        }
    }

    /// Flattened raw values as `f32`, the input to sound normalization.
    pub fn to_f32(&self) -> Vec<f32> {
        match self {
            SoundPayload::Tones(a) => a.iter().map(|&v| v as f32).collect(),
            SoundPayload::Pcm(a) => a.iter().map(|&v| v as f32).collect(),
        }
    }
}

/// One timestep of stacked frames: `image` is `(stack, H, W)` with
/// intensities `k / 255`.
#[derive(Clone, Debug, PartialEq)]
pub struct MultimodalObservation {
    pub image: Array3<u8>,
    pub sound: SoundPayload,
}

impl MultimodalObservation {
    /// Image scaled to `[0, 1]`.
    pub fn image_f32(&self) -> Array3<f32> {
        self.image.mapv(|p| p as f32 / 255.0)
    }

    /// `(1, stack, H, W)` batch of one.
    pub fn image_batch(&self) -> ArrayD<f32> {
        self.image_f32().insert_axis(Axis(0)).into_dyn()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EndCause {
    Win,
    PlayerHit,
    TimeUp,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StepInfo {
    pub cause: Option<EndCause>,
    /// The episode ended on a time limit rather than a task outcome.
    pub truncated: bool,
    pub frame: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepResult {
    pub observation: MultimodalObservation,
    pub reward: f64,
    pub terminal: bool,
    pub info: StepInfo,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ActionSpace {
    Continuous { low: f64, high: f64 },
    Discrete(usize),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Action {
    Continuous(f64),
    Discrete(usize),
}

/// Episodic environment with paired image/sound observations.
pub trait MultimodalEnv {
    fn name(&self) -> &'static str;
    fn reset(&mut self, seed: u64) -> Result<MultimodalObservation>;
    fn step(&mut self, action: Action) -> Result<StepResult>;
    fn action_space(&self) -> ActionSpace;
    fn image_shape(&self) -> [usize; 3];
    fn sound_shape(&self) -> [usize; 3];
    fn max_episode_length(&self) -> usize;
    /// Draws a uniformly random action from `rng`.
    fn random_action(&self, rng: &mut dyn rand::RngCore) -> Action {
        use rand::Rng;
        match self.action_space() {
            ActionSpace::Continuous { low, high } => Action::Continuous(rng.random_range(low..=high)),
            ActionSpace::Discrete(n) => Action::Discrete(rng.random_range(0..n)),
        }
    }
}

/// Builds the environment described by `cfg`.
pub fn make_env(cfg: &ExperimentConfig) -> Result<Box<dyn MultimodalEnv>> {
    Ok(match &cfg.scenario {
        ScenarioConfig::Pendulum(p) => Box::new(Pendulum::new(p.clone())?),
        ScenarioConfig::Hyperhot(h) => Box::new(HyperHot::new(h.clone(), HyperHotMechanics::default())?),
    })
}

/// Fixed-depth history of frames; the newest frame is the last slot.
#[derive(Clone, Debug)]
pub(crate) struct FrameStack<T> {
    frames: Vec<ArrayD<T>>,
}

impl<T: Clone + Default> FrameStack<T> {
    pub fn filled(depth: usize, frame: ArrayD<T>) -> Self {
        Self {
            frames: vec![frame; depth],
        }
    }

    pub fn push(&mut self, frame: ArrayD<T>) {
        self.frames.remove(0);
        self.frames.push(frame);
    }

    pub fn stacked(&self) -> ArrayD<T> {
        let mut shape = vec![self.frames.len()];
        shape.extend_from_slice(self.frames[0].shape());
        let data: Vec<T> = self.frames.iter().flat_map(|f| f.iter().cloned()).collect();
        ArrayD::from_shape_vec(IxDyn(&shape), data).expect("consistent frame shapes")
    }
}

pub(crate) fn to3<T>(a: ArrayD<T>) -> Array3<T> {
    a.into_dimensionality().expect("3-d stack")
}
