//! HyperHot: a small vertical shooter. Every live entity emits a tone whose
//! frequency identifies its class; four microphones hear the mix.
//!
//! Game coordinates span `[−1, 1]²` with y pointing up. Speeds are per
//! frame at 30 frames per second.

use ndarray::{Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::raster::Canvas;
use super::{
    to3, Action, ActionSpace, EndCause, FrameStack, MultimodalEnv, MultimodalObservation, SoundPayload, StepInfo,
    StepResult,
};
use crate::acoustics::{doppler_frequency, received_tones, Displacement, SineBank, SoundEmitter, SoundReceiver, Vec2};
use crate::config::HyperHotScenario;
use crate::error::{Error, Result};

pub const FPS: f64 = 30.0;
pub const WIN_REWARD: f64 = 10.0;
pub const LOSE_REWARD: f64 = -1.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum HyperHotAction {
    Noop,
    Left,
    Right,
    Fire,
}

impl HyperHotAction {
    pub const ALL: [HyperHotAction; 4] = [Self::Noop, Self::Left, Self::Right, Self::Fire];

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }
}

/// Tunable game mechanics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HyperHotMechanics {
    pub player_y: f64,
    pub player_half_width: f64,
    pub player_half_height: f64,
    pub player_speed: f64,
    pub player_limit: f64,
    pub fire_cooldown: u32,
    pub player_bullet_speed: f64,
    pub enemy_bullet_speed: f64,
    pub bullet_half_size: [f64; 2],
    pub enemy_half_size: f64,
    pub enemy_rows: Vec<f64>,
    /// Horizontal centre of the left and right groups.
    pub group_centers: [f64; 2],
    /// Column offsets within a group.
    pub group_columns: Vec<f64>,
    pub enemy_speed: f64,
    pub enemy_limit: f64,
    pub enemy_fire_period: u32,
    pub enemy_fire_jitter: u32,
}

impl Default for HyperHotMechanics {
    fn default() -> Self {
        Self {
            player_y: -0.85,
            player_half_width: 0.08,
            player_half_height: 0.04,
            player_speed: 0.05,
            player_limit: 0.92,
            fire_cooldown: 10,
            player_bullet_speed: 0.1,
            enemy_bullet_speed: 0.05,
            bullet_half_size: [0.025, 0.04],
            enemy_half_size: 0.13,
            enemy_rows: vec![0.75, 0.47],
            group_centers: [-0.45, 0.45],
            group_columns: vec![-0.14, 0.14],
            enemy_speed: 0.01,
            enemy_limit: 0.93,
            enemy_fire_period: 10,
            enemy_fire_jitter: 10,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    Left,
    Right,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Enemy {
    pub position: Vec2,
    pub side: Side,
    pub alive: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bullet {
    pub position: Vec2,
    /// Per frame.
    pub velocity: Vec2,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HyperHotState {
    pub player_x: f64,
    /// Player movement this frame, for Doppler on the paddle microphones.
    pub player_dx: f64,
    pub player_cooldown: u32,
    pub enemies: Vec<Enemy>,
    /// +1 or −1.
    pub enemy_direction: f64,
    pub player_bullets: Vec<Bullet>,
    pub enemy_bullets: Vec<Bullet>,
    pub elapsed_frames: usize,
    pub next_enemy_fire: usize,
}

impl HyperHotState {
    pub fn alive_enemies(&self) -> usize {
        self.enemies.iter().filter(|e| e.alive).count()
    }
}

fn overlaps(a: Vec2, a_half: [f64; 2], b: Vec2, b_half: [f64; 2]) -> bool {
    (a[0] - b[0]).abs() <= a_half[0] + b_half[0] && (a[1] - b[1]).abs() <= a_half[1] + b_half[1]
}

fn inside_field(p: Vec2) -> bool {
    p[0].abs() <= 1.0 && p[1].abs() <= 1.0
}

#[derive(Debug)]
pub struct HyperHot {
    cfg: HyperHotScenario,
    mech: HyperHotMechanics,
    state: HyperHotState,
    rng: ChaCha8Rng,
    done: bool,
    bank: SineBank,
    images: Option<FrameStack<u8>>,
    sounds: Option<FrameStack<i16>>,
}

impl HyperHot {
    pub fn new(cfg: HyperHotScenario, mech: HyperHotMechanics) -> Result<Self> {
        cfg.acoustics().validate()?;
        for r in &cfg.receivers {
            if !["lb", "rb", "pl", "pr"].contains(&r.as_str()) {
                return Err(Error::Config(format!("unknown hyperhot receiver {r:?}")));
            }
        }
        let state = Self::initial_state(&mech, 0);
        Ok(Self {
            cfg,
            mech,
            state,
            rng: ChaCha8Rng::seed_from_u64(0),
            done: true,
            bank: SineBank::default(),
            images: None,
            sounds: None,
        })
    }

    fn initial_state(mech: &HyperHotMechanics, first_fire: usize) -> HyperHotState {
        let mut enemies = Vec::new();
        for (g, side) in [Side::Left, Side::Right].into_iter().enumerate() {
            for &y in &mech.enemy_rows {
                for &dx in &mech.group_columns {
                    enemies.push(Enemy {
                        position: [mech.group_centers[g] + dx, y],
                        side,
                        alive: true,
                    });
                }
            }
        }
        HyperHotState {
            player_x: 0.0,
            player_dx: 0.0,
            player_cooldown: 0,
            enemies,
            enemy_direction: 1.0,
            player_bullets: Vec::new(),
            enemy_bullets: Vec::new(),
            elapsed_frames: 0,
            next_enemy_fire: first_fire,
        }
    }

    pub fn mechanics(&self) -> &HyperHotMechanics {
        &self.mech
    }

    pub fn state(&self) -> &HyperHotState {
        &self.state
    }

    /// Restarts the episode from an arbitrary state, seeding enemy fire with `seed`.
    pub fn reset_to(&mut self, state: HyperHotState, seed: u64) -> Result<MultimodalObservation> {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        self.state = state;
        self.done = false;
        let (img, snd) = self.observe_state(&self.state.clone())?;
        self.images = Some(FrameStack::filled(self.cfg.frame_stack, img.into_dyn()));
        self.sounds = Some(FrameStack::filled(self.cfg.frame_stack, snd.into_dyn()));
        Ok(self.observation())
    }

    fn fire_delay(&mut self) -> usize {
        let j = self.mech.enemy_fire_jitter as i64;
        let jitter = if j > 0 { self.rng.random_range(-j..=j) } else { 0 };
        (self.mech.enemy_fire_period as i64 + jitter).max(1) as usize
    }

    /// Receiver positions in game coordinates, in configured order.
    pub fn receiver_positions(&self, s: &HyperHotState) -> Vec<Vec2> {
        let m = &self.mech;
        self.cfg
            .receivers
            .iter()
            .map(|id| match id.as_str() {
                "lb" => [-1.0, -1.0],
                "rb" => [1.0, -1.0],
                "pl" => [s.player_x - m.player_half_width, m.player_y],
                _ => [s.player_x + m.player_half_width, m.player_y],
            })
            .collect()
    }

    /// Every sounding entity: live enemies, enemy bullets, player bullets.
    pub fn emitters(&self, s: &HyperHotState) -> Vec<SoundEmitter> {
        let f = &self.cfg.frequencies;
        let a = &self.cfg.amplitudes;
        let mut out = Vec::new();
        let dir = s.enemy_direction * self.mech.enemy_speed;
        for (i, e) in s.enemies.iter().enumerate().filter(|(_, e)| e.alive) {
            let class = match e.side {
                Side::Left => 0,
                Side::Right => 1,
            };
            out.push(SoundEmitter {
                id: format!("enemy{i}"),
                position: e.position,
                velocity: [dir, 0.0],
                base_frequency: f[class],
                base_amplitude: a[class],
            });
        }
        for (class, bullets) in [(2, &s.enemy_bullets), (3, &s.player_bullets)] {
            for b in bullets {
                out.push(SoundEmitter {
                    id: format!("bullet{class}"),
                    position: b.position,
                    velocity: b.velocity,
                    base_frequency: f[class],
                    base_amplitude: a[class],
                });
            }
        }
        out
    }

    fn sound(&mut self, s: &HyperHotState) -> Result<Array2<i16>> {
        let emitters = self.emitters(s);
        let positions = self.receiver_positions(s);
        let scale = self.cfg.acoustic_scale;
        let receivers: Vec<SoundReceiver> = self
            .cfg
            .receivers
            .iter()
            .zip(&positions)
            .map(|(id, p)| {
                let moving = id == "pl" || id == "pr";
                SoundReceiver {
                    id: id.clone(),
                    position: *p,
                    velocity: if moving { [s.player_dx, 0.0] } else { [0.0, 0.0] },
                }
            })
            .collect();
        let mut tones = received_tones(&emitters, &receivers, self.cfg.decay, scale);
        if self.cfg.doppler {
            // Per-frame velocities become acoustic units per second.
            let k = scale * FPS;
            let to_acoustic = |p: Vec2, v: Vec2| ([p[0] * scale, p[1] * scale], [v[0] * k, v[1] * k]);
            for (r, row) in receivers.iter().zip(tones.iter_mut()) {
                let (rp, rv) = to_acoustic(r.position, r.velocity);
                let rr = SoundReceiver {
                    position: rp,
                    velocity: rv,
                    ..r.clone()
                };
                for (e, tone) in emitters.iter().zip(row.iter_mut()) {
                    let (ep, ev) = to_acoustic(e.position, e.velocity);
                    let ee = SoundEmitter {
                        position: ep,
                        velocity: ev,
                        ..e.clone()
                    };
                    tone.frequency = doppler_frequency(&ee, &rr, self.cfg.speed_of_sound, Displacement::Raw)?;
                }
            }
        }
        let pcm = self.bank.synthesize(&tones, &self.cfg.acoustics())?;
        let n = self.cfg.samples_per_frame;
        Ok(Array2::from_shape_vec((pcm.len(), n), pcm.concat()).expect("one block per receiver"))
    }

    pub fn render(&self, s: &HyperHotState) -> Array2<u8> {
        let m = &self.mech;
        let n = self.cfg.image_size;
        let mut c = Canvas::new(n, n, [-1.0, 1.0, -1.0, 1.0]);
        for e in s.enemies.iter().filter(|e| e.alive) {
            c.rect(e.position[0], e.position[1], m.enemy_half_size, m.enemy_half_size, 0.75);
        }
        let [bw, bh] = m.bullet_half_size;
        for b in &s.enemy_bullets {
            c.rect(b.position[0], b.position[1], bw, bh, 0.5);
        }
        for b in &s.player_bullets {
            c.rect(b.position[0], b.position[1], bw, bh, 1.0);
        }
        c.rect(s.player_x, m.player_y, m.player_half_width, m.player_half_height, 1.0);
        c.to_u8()
    }

    fn observe_state(&mut self, s: &HyperHotState) -> Result<(Array2<u8>, Array2<i16>)> {
        Ok((self.render(s), self.sound(s)?))
    }

    fn observation(&self) -> MultimodalObservation {
        let images = self.images.as_ref().expect("reset before observing");
        let sounds = self.sounds.as_ref().expect("reset before observing");
        let pcm: Array3<i16> = to3(sounds.stacked());
        MultimodalObservation {
            image: to3(images.stacked()),
            sound: SoundPayload::Pcm(pcm),
        }
    }

    /// Advances the game one frame and returns `(reward, cause)`.
    fn advance(&mut self, action: HyperHotAction) -> (f64, Option<EndCause>) {
        let m = self.mech.clone();
        let s = &mut self.state;

        let before = s.player_x;
        match action {
            HyperHotAction::Left => s.player_x -= m.player_speed,
            HyperHotAction::Right => s.player_x += m.player_speed,
            _ => {}
        }
        s.player_x = s.player_x.clamp(-m.player_limit, m.player_limit);
        s.player_dx = s.player_x - before;
        if action == HyperHotAction::Fire && s.player_cooldown == 0 {
            s.player_bullets.push(Bullet {
                position: [s.player_x, m.player_y + m.player_half_height],
                velocity: [0.0, m.player_bullet_speed],
            });
            s.player_cooldown = m.fire_cooldown;
        } else {
            s.player_cooldown = s.player_cooldown.saturating_sub(1);
        }

        let step = s.enemy_direction * m.enemy_speed;
        let blocked = s
            .enemies
            .iter()
            .filter(|e| e.alive)
            .any(|e| (e.position[0] + step).abs() + m.enemy_half_size > m.enemy_limit);
        if blocked {
            s.enemy_direction = -s.enemy_direction;
        }
        let step = s.enemy_direction * m.enemy_speed;
        for e in &mut s.enemies {
            e.position[0] += step;
        }

        for b in s.player_bullets.iter_mut().chain(s.enemy_bullets.iter_mut()) {
            b.position[0] += b.velocity[0];
            b.position[1] += b.velocity[1];
        }
        s.player_bullets.retain(|b| inside_field(b.position));
        s.enemy_bullets.retain(|b| inside_field(b.position));

        let eh = [m.enemy_half_size; 2];
        s.player_bullets.retain(|b| {
            let target = s
                .enemies
                .iter_mut()
                .filter(|e| e.alive)
                .find(|e| overlaps(b.position, m.bullet_half_size, e.position, eh));
            match target {
                Some(e) => {
                    e.alive = false;
                    false
                }
                None => true,
            }
        });

        if s.elapsed_frames >= s.next_enemy_fire {
            let alive: Vec<usize> = (0..s.enemies.len()).filter(|&i| s.enemies[i].alive).collect();
            if !alive.is_empty() {
                let shooter = alive[self.rng.random_range(0..alive.len())];
                let p = s.enemies[shooter].position;
                s.enemy_bullets.push(Bullet {
                    position: [p[0], p[1] - m.enemy_half_size],
                    velocity: [0.0, -m.enemy_bullet_speed],
                });
            }
            let delay = {
                let j = m.enemy_fire_jitter as i64;
                let jitter = if j > 0 { self.rng.random_range(-j..=j) } else { 0 };
                (m.enemy_fire_period as i64 + jitter).max(1) as usize
            };
            s.next_enemy_fire = s.elapsed_frames + delay;
        }

        let ph = [m.player_half_width, m.player_half_height];
        let pp = [s.player_x, m.player_y];
        let hit = s
            .enemy_bullets
            .iter()
            .any(|b| overlaps(b.position, m.bullet_half_size, pp, ph));
        s.elapsed_frames += 1;

        if s.alive_enemies() == 0 {
            (WIN_REWARD, Some(EndCause::Win))
        } else if hit {
            (LOSE_REWARD, Some(EndCause::PlayerHit))
        } else if s.elapsed_frames >= self.cfg.max_episode_length {
            (LOSE_REWARD, Some(EndCause::TimeUp))
        } else {
            (0.0, None)
        }
    }
}

impl MultimodalEnv for HyperHot {
    fn name(&self) -> &'static str {
        "hyperhot"
    }

    fn reset(&mut self, seed: u64) -> Result<MultimodalObservation> {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        let first = self.fire_delay();
        let state = Self::initial_state(&self.mech, first);
        self.reset_to(state, seed ^ 0x5eed_f12e)
    }

    fn step(&mut self, action: Action) -> Result<StepResult> {
        if self.done {
            return Err(Error::EpisodeFinished);
        }
        let a = match action {
            Action::Discrete(i) => HyperHotAction::from_index(i)
                .ok_or_else(|| Error::Config(format!("hyperhot action {i} outside 0..4")))?,
            Action::Continuous(_) => return Err(Error::Config("hyperhot takes a discrete action".into())),
        };
        let (reward, cause) = self.advance(a);
        let terminal = reward != 0.0;
        self.done = terminal;
        let state = self.state.clone();
        let (img, snd) = self.observe_state(&state)?;
        self.images.as_mut().expect("reset before step").push(img.into_dyn());
        self.sounds.as_mut().expect("reset before step").push(snd.into_dyn());
        Ok(StepResult {
            observation: self.observation(),
            reward,
            terminal,
            info: StepInfo {
                cause,
                truncated: false,
                frame: state.elapsed_frames,
            },
        })
    }

    fn action_space(&self) -> ActionSpace {
        ActionSpace::Discrete(HyperHotAction::ALL.len())
    }

    fn image_shape(&self) -> [usize; 3] {
        [self.cfg.frame_stack, self.cfg.image_size, self.cfg.image_size]
    }

    fn sound_shape(&self) -> [usize; 3] {
        [self.cfg.frame_stack, self.cfg.receivers.len(), self.cfg.samples_per_frame]
    }

    fn max_episode_length(&self) -> usize {
        self.cfg.max_episode_length
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Axis;

    fn env() -> HyperHot {
        HyperHot::new(HyperHotScenario::default(), HyperHotMechanics::default()).unwrap()
    }

    fn empty_state(e: &HyperHot) -> HyperHotState {
        let mut s = HyperHot::initial_state(e.mechanics(), 1000);
        for en in &mut s.enemies {
            en.alive = false;
        }
        s
    }

    #[test]
    fn shapes_and_determinism() {
        let mut e = env();
        let a = e.reset(3).unwrap();
        assert_eq!(a.image.shape(), &[2, 80, 80]);
        assert_eq!(a.sound.shape(), &[2, 4, 1047]);
        let mut trace = Vec::new();
        for t in 0..40 {
            let r = e.step(Action::Discrete(t % 4)).unwrap();
            trace.push((r.reward, r.observation.sound.clone()));
            if r.terminal {
                break;
            }
        }
        e.reset(3).unwrap();
        for (t, (reward, sound)) in trace.into_iter().enumerate() {
            let r = e.step(Action::Discrete(t % 4)).unwrap();
            assert_eq!(r.reward, reward);
            assert_eq!(r.observation.sound, sound);
        }
    }

    #[test]
    fn silent_field_gives_zero_pcm() {
        let mut e = env();
        let s = empty_state(&e);
        let o = e.reset_to(s, 0).unwrap();
        match o.sound {
            SoundPayload::Pcm(p) => assert!(p.iter().all(|&v| v == 0)),
            _ => panic!("expected pcm"),
        }
    }

    #[test]
    fn lone_left_enemy_sounds_at_its_frequency() {
        let mut e = env();
        let mut s = empty_state(&e);
        s.enemies[0].alive = true;
        let o = e.reset_to(s, 0).unwrap();
        let SoundPayload::Pcm(p) = o.sound else { panic!() };
        let power = |row: ndarray::ArrayView1<i16>, f: f64| {
            let n = row.len() as f64;
            let (mut re, mut im) = (0.0, 0.0);
            for (k, &v) in row.iter().enumerate() {
                let hann = 0.5 - 0.5 * (2.0 * std::f64::consts::PI * k as f64 / n).cos();
                let w = 2.0 * std::f64::consts::PI * f * k as f64 / 31400.0;
                re += hann * v as f64 * w.cos();
                im += hann * v as f64 * w.sin();
            }
            re * re + im * im
        };
        for r in 0..4 {
            let frame = p.index_axis(Axis(0), 1);
            let row = frame.row(r);
            let target = power(row, 261.0);
            assert!(target > 0.0, "receiver {r} silent");
            for other in [329.0, 392.0, 466.0] {
                assert!(target > 100.0 * power(row, other), "receiver {r} leaks {other}");
            }
        }
    }

    #[test]
    fn closer_paddle_end_hears_louder() {
        let mut e = env();
        let mut s = empty_state(&e);
        s.player_x = 0.0;
        s.enemy_bullets.push(Bullet {
            position: [-0.3, -0.6],
            velocity: [0.0, 0.0],
        });
        let o = e.reset_to(s, 0).unwrap();
        let SoundPayload::Pcm(p) = o.sound else { panic!() };
        let peak = |r: usize| p.index_axis(Axis(0), 1).row(r).iter().map(|v| v.abs()).max().unwrap();
        assert!(peak(2) > peak(3));
    }

    #[test]
    fn destroying_last_enemy_wins() {
        let mut e = env();
        let mut s = empty_state(&e);
        let target = s.enemies[0].position;
        s.enemies[0].alive = true;
        s.player_bullets.push(Bullet {
            position: [target[0] + s.enemy_direction * 0.01, target[1] - 0.15],
            velocity: [0.0, 0.1],
        });
        e.reset_to(s, 0).unwrap();
        let r = e.step(Action::Discrete(0)).unwrap();
        assert_eq!((r.reward, r.terminal, r.info.cause), (10.0, true, Some(EndCause::Win)));
        assert!(matches!(e.step(Action::Discrete(0)), Err(Error::EpisodeFinished)));
    }

    #[test]
    fn enemy_bullet_on_player_loses() {
        let mut e = env();
        let mut s = HyperHot::initial_state(e.mechanics(), 1000);
        s.enemy_bullets.push(Bullet {
            position: [0.0, -0.75],
            velocity: [0.0, -0.05],
        });
        e.reset_to(s, 0).unwrap();
        let r = e.step(Action::Discrete(0)).unwrap();
        assert_eq!((r.reward, r.terminal, r.info.cause), (-1.0, true, Some(EndCause::PlayerHit)));
    }

    #[test]
    fn quiet_frame_is_neutral_and_time_runs_out() {
        let mut e = env();
        let mut s = HyperHot::initial_state(e.mechanics(), 100_000);
        s.elapsed_frames = 448;
        e.reset_to(s, 0).unwrap();
        let r = e.step(Action::Discrete(0)).unwrap();
        assert_eq!((r.reward, r.terminal), (0.0, false));
        let r = e.step(Action::Discrete(0)).unwrap();
        assert_eq!((r.reward, r.terminal, r.info.cause), (-1.0, true, Some(EndCause::TimeUp)));
    }

    #[test]
    fn reward_partition_holds_for_random_play() {
        let mut e = env();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for ep in 0..5 {
            e.reset(ep).unwrap();
            loop {
                let r = e.step(Action::Discrete(rng.random_range(0..4))).unwrap();
                assert!([0.0, -1.0, 10.0].contains(&r.reward));
                assert_eq!(r.terminal, r.reward != 0.0);
                assert!(r.info.frame <= 450);
                if r.terminal {
                    break;
                }
            }
        }
    }
}
