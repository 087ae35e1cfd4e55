//! Sound propagation and per-frame audio synthesis.
//!
//! Everything here is a pure function of its inputs. Sines go through
//! `libm` so PCM blocks are bit-identical across platforms.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest admissible Doppler denominator or squared distance.
pub const GEOMETRY_EPSILON: f64 = 1e-6;

/// Largest magnitude produced by [`encode_pcm16`]; `i16::MIN` is never used.
pub const PCM_FULL_SCALE: i16 = 32767;

pub type Vec2 = [f64; 2];

fn sub(a: Vec2, b: Vec2) -> Vec2 {
    [a[0] - b[0], a[1] - b[1]]
}

fn dot(a: Vec2, b: Vec2) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

fn norm_sq(a: Vec2) -> f64 {
    dot(a, a)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SoundReceiver {
    pub id: String,
    pub position: Vec2,
    pub velocity: Vec2,
}

impl SoundReceiver {
    pub fn stationary(id: impl Into<String>, position: Vec2) -> Self {
        Self {
            id: id.into(),
            position,
            velocity: [0.0, 0.0],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SoundEmitter {
    pub id: String,
    pub position: Vec2,
    pub velocity: Vec2,
    pub base_frequency: f64,
    pub base_amplitude: f64,
}

/// How displacement vectors enter the Doppler ratio.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Displacement {
    /// Raw emitter/receiver offsets.
    #[default]
    Raw,
    /// Offsets replaced by unit vectors (physically consistent form).
    Unit,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AcousticsConfig {
    pub speed_of_sound: f64,
    pub inverse_square_k: f64,
    pub decay: f64,
    pub sample_rate: f64,
    pub samples_per_frame: usize,
    pub max_amplitude: f64,
    pub pcm_bit_depth: u32,
    #[serde(default)]
    pub displacement: Displacement,
}

impl Default for AcousticsConfig {
    fn default() -> Self {
        Self {
            speed_of_sound: 20.0,
            inverse_square_k: 1.0,
            decay: 0.025,
            sample_rate: 31400.0,
            samples_per_frame: 1047,
            max_amplitude: 1.0,
            pcm_bit_depth: 16,
            displacement: Displacement::Raw,
        }
    }
}

impl AcousticsConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Config(format!("acoustics: {what}")));
        if !(self.speed_of_sound > 0.0) {
            return bad("speed_of_sound must be > 0");
        }
        if !(self.sample_rate > 0.0) {
            return bad("sample_rate must be > 0");
        }
        if self.samples_per_frame == 0 {
            return bad("samples_per_frame must be >= 1");
        }
        if !(self.max_amplitude > 0.0) {
            return bad("max_amplitude must be > 0");
        }
        if !(self.decay >= 0.0) {
            return bad("decay must be >= 0");
        }
        if self.pcm_bit_depth != 16 {
            return bad("pcm_bit_depth must be 16");
        }
        Ok(())
    }
}

/// Frequency heard by `receiver`:
/// `f0 * (c + v_r·(e − r)) / (c − v_e·(r − e))`.
pub fn doppler_frequency(
    emitter: &SoundEmitter,
    receiver: &SoundReceiver,
    speed_of_sound: f64,
    displacement: Displacement,
) -> Result<f64> {
    let mut to_emitter = sub(emitter.position, receiver.position);
    if displacement == Displacement::Unit {
        let d = norm_sq(to_emitter).sqrt();
        if d * d <= GEOMETRY_EPSILON {
            return Err(Error::DegenerateGeometry(format!(
                "emitter {} coincides with receiver {}",
                emitter.id, receiver.id
            )));
        }
        to_emitter = [to_emitter[0] / d, to_emitter[1] / d];
    }
    let to_receiver = [-to_emitter[0], -to_emitter[1]];
    let numerator = speed_of_sound + dot(receiver.velocity, to_emitter);
    let denominator = speed_of_sound - dot(emitter.velocity, to_receiver);
    if !(denominator > GEOMETRY_EPSILON) {
        return Err(Error::DegenerateGeometry(format!(
            "Doppler denominator {denominator} for emitter {} and receiver {}",
            emitter.id, receiver.id
        )));
    }
    Ok(emitter.base_frequency * (numerator / denominator))
}

/// `K / ‖e − r‖²`.
pub fn inverse_square_amplitude(emitter: Vec2, receiver: Vec2, k: f64) -> Result<f64> {
    let d2 = norm_sq(sub(emitter, receiver));
    if !(d2 > GEOMETRY_EPSILON) {
        return Err(Error::DegenerateGeometry(format!(
            "squared distance {d2} between emitter and receiver"
        )));
    }
    Ok(k / d2)
}

/// `a0 · exp(−δ‖e − r‖²)`.
pub fn gaussian_decay_amplitude(emitter: &SoundEmitter, receiver: Vec2, decay: f64) -> f64 {
    let d2 = norm_sq(sub(emitter.position, receiver));
    emitter.base_amplitude * libm::exp(-decay * d2)
}

/// A sinusoid as heard at one receiver.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tone {
    pub frequency: f64,
    pub amplitude: f64,
}

/// Tones heard by each receiver, amplitudes via Gaussian decay.
/// `scale` converts emitter/receiver coordinates into acoustic units.
pub fn received_tones(
    emitters: &[SoundEmitter],
    receivers: &[SoundReceiver],
    decay: f64,
    scale: f64,
) -> Vec<Vec<Tone>> {
    receivers
        .iter()
        .map(|r| {
            let rp = [r.position[0] * scale, r.position[1] * scale];
            emitters
                .iter()
                .map(|e| {
                    let scaled = SoundEmitter {
                        position: [e.position[0] * scale, e.position[1] * scale],
                        ..e.clone()
                    };
                    Tone {
                        frequency: e.base_frequency,
                        amplitude: gaussian_decay_amplitude(&scaled, rp, decay),
                    }
                })
                .collect()
        })
        .collect()
}

/// Unclipped float wave of one frame: `Σ a·sin(2π f k / sr)`, phase 0 at k = 0.
pub fn frame_wave(tones: &[Tone], cfg: &AcousticsConfig) -> Vec<f64> {
    let mut wave = vec![0.0; cfg.samples_per_frame];
    for tone in tones {
        let step = 2.0 * std::f64::consts::PI * tone.frequency / cfg.sample_rate;
        for (k, w) in wave.iter_mut().enumerate() {
            *w += tone.amplitude * libm::sin(step * k as f64);
        }
    }
    wave
}

pub fn clip_wave(wave: &mut [f64], max_amplitude: f64) {
    for w in wave {
        *w = w.clamp(-max_amplitude, max_amplitude);
    }
}

/// Symmetric 16-bit quantization `round(x / a_M · 32767)`.
pub fn encode_pcm16(wave: &[f64], max_amplitude: f64) -> Result<Vec<i16>> {
    wave.iter()
        .map(|&x| {
            if !(x.abs() <= max_amplitude) {
                return Err(Error::Range {
                    value: x,
                    limit: max_amplitude,
                });
            }
            Ok((x / max_amplitude * PCM_FULL_SCALE as f64).round() as i16)
        })
        .collect()
}

/// One PCM block per receiver.
pub fn synthesize_frame_audio(
    tones_per_receiver: &[Vec<Tone>],
    cfg: &AcousticsConfig,
) -> Result<Vec<Vec<i16>>> {
    tones_per_receiver
        .iter()
        .map(|tones| {
            let mut wave = frame_wave(tones, cfg);
            clip_wave(&mut wave, cfg.max_amplitude);
            encode_pcm16(&wave, cfg.max_amplitude)
        })
        .collect()
}

/// Caches per-frequency sine tables so repeated frames skip the `sin`
/// calls. Produces exactly the samples of [`synthesize_frame_audio`].
#[derive(Clone, Debug, Default)]
pub struct SineBank {
    tables: Vec<(u64, Vec<f64>)>,
}

impl SineBank {
    fn table(&mut self, frequency: f64, cfg: &AcousticsConfig) -> usize {
        let key = frequency.to_bits();
        if let Some(i) = self.tables.iter().position(|(k, t)| *k == key && t.len() == cfg.samples_per_frame) {
            return i;
        }
        let step = 2.0 * std::f64::consts::PI * frequency / cfg.sample_rate;
        let t = (0..cfg.samples_per_frame).map(|k| libm::sin(step * k as f64)).collect();
        self.tables.push((key, t));
        self.tables.len() - 1
    }

    pub fn synthesize(&mut self, tones_per_receiver: &[Vec<Tone>], cfg: &AcousticsConfig) -> Result<Vec<Vec<i16>>> {
        tones_per_receiver
            .iter()
            .map(|tones| {
                let mut wave = vec![0.0; cfg.samples_per_frame];
                for tone in tones {
                    let i = self.table(tone.frequency, cfg);
                    for (w, s) in wave.iter_mut().zip(&self.tables[i].1) {
                        *w += tone.amplitude * s;
                    }
                }
                clip_wave(&mut wave, cfg.max_amplitude);
                encode_pcm16(&wave, cfg.max_amplitude)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn emitter(pos: Vec2, vel: Vec2) -> SoundEmitter {
        SoundEmitter {
            id: "e".into(),
            position: pos,
            velocity: vel,
            base_frequency: 440.0,
            base_amplitude: 1.0,
        }
    }

    #[test]
    fn doppler_examples() {
        let r = SoundReceiver::stationary("r", [0.0, 0.0]);
        let still = doppler_frequency(&emitter([3.0, -2.0], [0.0, 0.0]), &r, 20.0, Displacement::Raw);
        assert_eq!(still.unwrap(), 440.0);

        let approaching = doppler_frequency(&emitter([1.0, 0.0], [-1.0, 0.0]), &r, 20.0, Displacement::Raw);
        assert!((approaching.unwrap() - 440.0 * 20.0 / 19.0).abs() < 1e-12);

        let receding = doppler_frequency(&emitter([1.0, 0.0], [1.0, 0.0]), &r, 20.0, Displacement::Raw);
        assert!((receding.unwrap() - 440.0 * 20.0 / 21.0).abs() < 1e-12);
    }

    #[test]
    fn doppler_degenerate_denominator() {
        let r = SoundReceiver::stationary("r", [0.0, 0.0]);
        // v_e·(r − e) = (-20)(-1) = 20 = c
        let e = emitter([1.0, 0.0], [-20.0, 0.0]);
        assert!(matches!(
            doppler_frequency(&e, &r, 20.0, Displacement::Raw),
            Err(Error::DegenerateGeometry(_))
        ));
    }

    #[test]
    fn unit_displacement_ignores_distance() {
        let r = SoundReceiver::stationary("r", [0.0, 0.0]);
        let near = doppler_frequency(&emitter([1.0, 0.0], [-1.0, 0.0]), &r, 20.0, Displacement::Unit).unwrap();
        let far = doppler_frequency(&emitter([7.0, 0.0], [-1.0, 0.0]), &r, 20.0, Displacement::Unit).unwrap();
        assert!((near - far).abs() < 1e-12);
        assert!(doppler_frequency(&emitter([0.0, 0.0], [0.0, 0.0]), &r, 20.0, Displacement::Unit).is_err());
    }

    #[test]
    fn inverse_square_examples() {
        assert_eq!(inverse_square_amplitude([1.0, 0.0], [0.0, 0.0], 1.0).unwrap(), 1.0);
        assert_eq!(inverse_square_amplitude([0.0, 2.0], [0.0, 0.0], 1.0).unwrap(), 0.25);
        assert!((inverse_square_amplitude([1.0, 1.0], [0.0, 0.0], 2.0).unwrap() - 1.0).abs() < 1e-15);
        assert!(inverse_square_amplitude([0.5, 0.5], [0.5, 0.5], 1.0).is_err());
    }

    #[test]
    fn gaussian_decay_examples() {
        let mut e = emitter([0.0, 0.0], [0.0, 0.0]);
        assert_eq!(gaussian_decay_amplitude(&e, [0.0, 0.0], 0.7), 1.0);
        e.position = [2.0, 0.0];
        assert!((gaussian_decay_amplitude(&e, [0.0, 0.0], 0.025) - 0.904_837_418_035_959_6).abs() < 1e-12);
        e.position = [6.0, 2.0];
        assert!((gaussian_decay_amplitude(&e, [0.0, 0.0], 0.025) - (-1.0f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn pcm_examples() {
        assert_eq!(encode_pcm16(&[0.0, 1.0, -1.0], 1.0).unwrap(), vec![0, 32767, -32767]);
        assert_eq!(encode_pcm16(&[2.5, -2.5], 2.5).unwrap(), vec![32767, -32767]);
        assert!(matches!(encode_pcm16(&[1.0001], 1.0), Err(Error::Range { .. })));
        assert!(encode_pcm16(&[f64::NAN], 1.0).is_err());
    }

    #[test]
    fn synthesis_examples() {
        let cfg = AcousticsConfig::default();
        let silent = synthesize_frame_audio(&[vec![]], &cfg).unwrap();
        assert_eq!(silent[0], vec![0i16; 1047]);

        let tone = Tone { frequency: 261.0, amplitude: 1.0 };
        let block = &synthesize_frame_audio(&[vec![tone]], &cfg).unwrap()[0];
        assert_eq!(block[0], 0);
        let x = (2.0 * std::f64::consts::PI * 261.0 * 10.0 / 31400.0).sin();
        assert!((x - 0.49876).abs() < 1e-4);
        assert_eq!(block[10], (x * 32767.0).round() as i16);
    }

    #[test]
    fn synthesis_clips_loud_sums() {
        let cfg = AcousticsConfig::default();
        let tones = vec![Tone { frequency: 261.0, amplitude: 3.0 }];
        let block = &synthesize_frame_audio(&[tones], &cfg).unwrap()[0];
        assert_eq!(*block.iter().max().unwrap(), 32767);
        assert_eq!(*block.iter().min().unwrap(), -32767);
    }

    proptest! {
        #[test]
        fn stationary_doppler_is_identity(
            ex in -10.0f64..10.0, ey in -10.0f64..10.0,
            rx in -10.0f64..10.0, ry in -10.0f64..10.0,
            f0 in 1.0f64..2000.0, c in 1.0f64..400.0,
        ) {
            let e = SoundEmitter { base_frequency: f0, ..emitter([ex, ey], [0.0, 0.0]) };
            let r = SoundReceiver::stationary("r", [rx, ry]);
            prop_assert_eq!(doppler_frequency(&e, &r, c, Displacement::Raw).unwrap(), f0);
        }

        #[test]
        fn amplitudes_decrease_with_distance(d in 0.01f64..20.0, extra in 0.001f64..5.0, k in 0.1f64..5.0) {
            let near = inverse_square_amplitude([d, 0.0], [0.0, 0.0], k).unwrap();
            let far = inverse_square_amplitude([d + extra, 0.0], [0.0, 0.0], k).unwrap();
            prop_assert!(far < near);
            let e_near = emitter([d, 0.0], [0.0, 0.0]);
            let e_far = emitter([d + extra, 0.0], [0.0, 0.0]);
            prop_assert!(gaussian_decay_amplitude(&e_far, [0.0, 0.0], 0.025)
                < gaussian_decay_amplitude(&e_near, [0.0, 0.0], 0.025));
        }

        #[test]
        fn pcm_is_odd(x in -1.0f64..=1.0) {
            let q = encode_pcm16(&[x, -x], 1.0).unwrap();
            prop_assert_eq!(q[0], -q[1]);
        }

        #[test]
        fn wave_is_linear_in_tones(
            tones in prop::collection::vec((50.0f64..2000.0, 0.0f64..1.0), 0..6),
            split in 0usize..6,
        ) {
            let cfg = AcousticsConfig::default();
            let tones: Vec<Tone> = tones.into_iter()
                .map(|(frequency, amplitude)| Tone { frequency, amplitude })
                .collect();
            let split = split.min(tones.len());
            let (a, b) = tones.split_at(split);
            let whole = frame_wave(&tones, &cfg);
            let wa = frame_wave(a, &cfg);
            let wb = frame_wave(b, &cfg);
            for k in 0..whole.len() {
                prop_assert!((whole[k] - (wa[k] + wb[k])).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn sine_bank_matches_direct_synthesis() {
        let cfg = AcousticsConfig::default();
        let tones = vec![
            vec![Tone { frequency: 261.0, amplitude: 0.4 }, Tone { frequency: 466.0, amplitude: 0.7 }],
            vec![Tone { frequency: 392.0, amplitude: 0.9 }, Tone { frequency: 261.0, amplitude: 0.3 }],
        ];
        let mut bank = SineBank::default();
        for _ in 0..2 {
            assert_eq!(bank.synthesize(&tones, &cfg).unwrap(), synthesize_frame_audio(&tones, &cfg).unwrap());
        }
    }
}
