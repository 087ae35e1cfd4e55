//! Torque-controlled pendulum whose tip emits a constant tone heard by a
//! set of fixed microphones.

use std::f64::consts::PI;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::raster::Canvas;
use super::{to3, Action, ActionSpace, FrameStack, MultimodalEnv, MultimodalObservation, SoundPayload, StepInfo, StepResult};
use crate::acoustics::{doppler_frequency, inverse_square_amplitude, SoundEmitter, SoundReceiver};
use crate::config::PendulumScenario;
use crate::error::{Error, Result};

pub const GRAVITY: f64 = 10.0;
pub const MASS: f64 = 1.0;
pub const LENGTH: f64 = 1.0;
pub const DT: f64 = 0.05;
pub const MAX_SPEED: f64 = 8.0;
pub const MAX_TORQUE: f64 = 2.0;

const VIEW: f64 = 1.2;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PendulumState {
    /// Angle from upright, in `[−π, π]`.
    pub theta: f64,
    pub theta_dot: f64,
}

impl PendulumState {
    pub fn tip(&self) -> [f64; 2] {
        [LENGTH * self.theta.sin(), LENGTH * self.theta.cos()]
    }

    pub fn tip_velocity(&self) -> [f64; 2] {
        let v = self.theta_dot * LENGTH;
        [v * self.theta.cos(), -v * self.theta.sin()]
    }
}

/// Wraps an angle into `[−π, π)`.
pub fn angle_normalize(x: f64) -> f64 {
    (x + PI).rem_euclid(2.0 * PI) - PI
}

/// `−(θ² + 0.1 θ̇² + 0.001 u²)` on the pre-step state.
pub fn pendulum_reward(s: &PendulumState, torque: f64) -> f64 {
    let th = angle_normalize(s.theta);
    -(th * th + 0.1 * s.theta_dot * s.theta_dot + 0.001 * torque * torque)
}

/// One semi-implicit Euler step.
pub fn pendulum_dynamics(s: &PendulumState, torque: f64) -> PendulumState {
    let u = torque.clamp(-MAX_TORQUE, MAX_TORQUE);
    let acc = 3.0 * GRAVITY / (2.0 * LENGTH) * s.theta.sin() + 3.0 / (MASS * LENGTH * LENGTH) * u;
    let theta_dot = (s.theta_dot + acc * DT).clamp(-MAX_SPEED, MAX_SPEED);
    PendulumState {
        theta: angle_normalize(s.theta + theta_dot * DT),
        theta_dot,
    }
}

#[derive(Debug)]
pub struct Pendulum {
    cfg: PendulumScenario,
    receivers: Vec<SoundReceiver>,
    state: PendulumState,
    frame: usize,
    done: bool,
    images: Option<FrameStack<u8>>,
    sounds: Option<FrameStack<f64>>,
}

impl Pendulum {
    pub fn new(cfg: PendulumScenario) -> Result<Self> {
        if cfg.receivers.is_empty() || cfg.frame_stack == 0 {
            return Err(Error::Config("pendulum needs receivers and a frame stack".into()));
        }
        let receivers = cfg
            .receivers
            .iter()
            .map(|r| SoundReceiver::stationary(r.id.clone(), r.position))
            .collect();
        Ok(Self {
            cfg,
            receivers,
            state: PendulumState {
                theta: 0.0,
                theta_dot: 0.0,
            },
            frame: 0,
            done: true,
            images: None,
            sounds: None,
        })
    }

    pub fn state(&self) -> PendulumState {
        self.state
    }

    pub fn receivers(&self) -> &[SoundReceiver] {
        &self.receivers
    }

    /// Places the pendulum in `state` and restarts the episode from it.
    pub fn reset_to(&mut self, state: PendulumState) -> Result<MultimodalObservation> {
        self.state = PendulumState {
            theta: angle_normalize(state.theta),
            theta_dot: state.theta_dot.clamp(-MAX_SPEED, MAX_SPEED),
        };
        self.frame = 0;
        self.done = false;
        let (img, snd) = self.observe_state(&self.state)?;
        self.images = Some(FrameStack::filled(self.cfg.frame_stack, img.into_dyn()));
        self.sounds = Some(FrameStack::filled(self.cfg.frame_stack, snd.into_dyn()));
        Ok(self.observation())
    }

    /// `(receivers, 2)` of (Doppler frequency, inverse-square amplitude).
    pub fn tones(&self, s: &PendulumState) -> Result<Array2<f64>> {
        let emitter = SoundEmitter {
            id: "tip".into(),
            position: s.tip(),
            velocity: s.tip_velocity(),
            base_frequency: self.cfg.f0,
            base_amplitude: 1.0,
        };
        let mut out = Array2::zeros((self.receivers.len(), 2));
        for (i, r) in self.receivers.iter().enumerate() {
            out[[i, 0]] = doppler_frequency(&emitter, r, self.cfg.speed_of_sound, self.cfg.displacement)?;
            out[[i, 1]] = inverse_square_amplitude(emitter.position, r.position, self.cfg.inverse_square_k)?;
        }
        Ok(out)
    }

    pub fn render(&self, s: &PendulumState) -> Array2<u8> {
        let n = self.cfg.image_size;
        let mut c = Canvas::new(n, n, [-VIEW, VIEW, -VIEW, VIEW]);
        let tip = s.tip();
        c.segment([0.0, 0.0], tip, 0.08, 0.7);
        c.disc(tip[0], tip[1], 0.14, 1.0);
        c.disc(0.0, 0.0, 0.05, 0.35);
        c.to_u8()
    }

    fn observe_state(&self, s: &PendulumState) -> Result<(Array2<u8>, Array2<f64>)> {
        Ok((self.render(s), self.tones(s)?))
    }

    fn observation(&self) -> MultimodalObservation {
        let images = self.images.as_ref().expect("reset before observing");
        let sounds = self.sounds.as_ref().expect("reset before observing");
        MultimodalObservation {
            image: to3(images.stacked()),
            sound: SoundPayload::Tones(to3(sounds.stacked())),
        }
    }
}

impl MultimodalEnv for Pendulum {
    fn name(&self) -> &'static str {
        "pendulum"
    }

    fn reset(&mut self, seed: u64) -> Result<MultimodalObservation> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let theta = rng.random_range(-PI..=PI);
        let theta_dot = rng.random_range(-1.0..=1.0);
        self.reset_to(PendulumState { theta, theta_dot })
    }

    fn step(&mut self, action: Action) -> Result<StepResult> {
        if self.done {
            return Err(Error::EpisodeFinished);
        }
        let torque = match action {
            Action::Continuous(u) => u.clamp(-MAX_TORQUE, MAX_TORQUE),
            Action::Discrete(_) => return Err(Error::Config("pendulum takes a continuous torque".into())),
        };
        let reward = pendulum_reward(&self.state, torque);
        self.state = pendulum_dynamics(&self.state, torque);
        self.frame += 1;
        let terminal = self.frame >= self.cfg.max_episode_length;
        self.done = terminal;
        let (img, snd) = self.observe_state(&self.state)?;
        self.images.as_mut().expect("reset before step").push(img.into_dyn());
        self.sounds.as_mut().expect("reset before step").push(snd.into_dyn());
        Ok(StepResult {
            observation: self.observation(),
            reward,
            terminal,
            info: StepInfo {
                cause: None,
                truncated: terminal,
                frame: self.frame,
            },
        })
    }

    fn action_space(&self) -> ActionSpace {
        ActionSpace::Continuous {
            low: -MAX_TORQUE,
            high: MAX_TORQUE,
        }
    }

    fn image_shape(&self) -> [usize; 3] {
        [self.cfg.frame_stack, self.cfg.image_size, self.cfg.image_size]
    }

    fn sound_shape(&self) -> [usize; 3] {
        [self.cfg.frame_stack, self.receivers.len(), 2]
    }

    fn max_episode_length(&self) -> usize {
        self.cfg.max_episode_length
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn env() -> Pendulum {
        Pendulum::new(PendulumScenario::default()).unwrap()
    }

    #[test]
    fn reward_examples() {
        let up = PendulumState { theta: 0.0, theta_dot: 0.0 };
        assert_eq!(pendulum_reward(&up, 0.0), 0.0);
        let down = PendulumState { theta: PI, theta_dot: 0.0 };
        assert!((pendulum_reward(&down, 0.0) + PI * PI).abs() < 1e-12);
    }

    #[test]
    fn reset_shapes_and_determinism() {
        let mut e = env();
        let a = e.reset(7).unwrap();
        let b = e.reset(7).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.image.shape(), &[2, 60, 60]);
        assert_eq!(a.sound.shape(), &[2, 3, 2]);
        assert_eq!(a.image.index_axis(ndarray::Axis(0), 0), a.image.index_axis(ndarray::Axis(0), 1));
        assert_ne!(e.reset(8).unwrap(), a);
    }

    #[test]
    fn episode_ends_at_limit() {
        let mut e = env();
        e.reset(0).unwrap();
        for t in 1..=300 {
            let r = e.step(Action::Continuous(0.5)).unwrap();
            assert_eq!(r.terminal, t == 300);
        }
        assert!(matches!(e.step(Action::Continuous(0.0)), Err(Error::EpisodeFinished)));
    }

    #[test]
    fn stationary_tip_is_heard_at_base_frequency() {
        let e = env();
        let t = e.tones(&PendulumState { theta: 0.7, theta_dot: 0.0 }).unwrap();
        assert!(t.column(0).iter().all(|&f| f == 440.0));
    }

    #[test]
    fn symmetric_tip_gives_equal_bottom_amplitudes() {
        let e = env();
        let t = e.tones(&PendulumState { theta: PI, theta_dot: 0.0 }).unwrap();
        assert!((t[[0, 1]] - t[[1, 1]]).abs() < 1e-12);
    }

    #[test]
    fn stack_shifts_by_one_frame() {
        let mut e = env();
        let mut prev = e.reset(3).unwrap();
        for _ in 0..5 {
            let r = e.step(Action::Continuous(1.0)).unwrap();
            let o = r.observation;
            assert_eq!(o.image.index_axis(ndarray::Axis(0), 0), prev.image.index_axis(ndarray::Axis(0), 1));
            prev = o;
        }
    }

    proptest! {
        #[test]
        fn state_stays_in_bounds(theta in -PI..PI, theta_dot in -8.0..8.0f64, torques in proptest::collection::vec(-5.0..5.0f64, 1..50)) {
            let mut s = PendulumState { theta, theta_dot };
            for u in torques {
                s = pendulum_dynamics(&s, u);
                prop_assert!((-PI..=PI).contains(&s.theta));
                prop_assert!(s.theta_dot.abs() <= MAX_SPEED);
            }
        }

        #[test]
        fn doppler_denominator_stays_clear(theta in -PI..PI, theta_dot in -8.0..8.0f64) {
            let e = env();
            let t = e.tones(&PendulumState { theta, theta_dot }).unwrap();
            prop_assert!(t.column(0).iter().all(|f| f.is_finite() && *f > 0.0));
        }
    }
}
