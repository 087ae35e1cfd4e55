use ndarray::ArrayD;

use crate::env::{MultimodalEnv, MultimodalObservation};
use crate::error::{Error, Result};
use crate::generative::{AvaeModel, SoundNormalizer};
use crate::modality::{Modality, ModalitySubset};

/// Maps an observation to the state vector an agent sees.
pub trait StateEncoder {
    fn modality(&self) -> Modality;
    fn state_dim(&self) -> usize;
    fn encode(&self, obs: &MultimodalObservation) -> Result<Vec<f32>>;
}

fn single(subset: &ModalitySubset) -> Result<Modality> {
    subset.as_single().ok_or_else(|| {
        Error::ModalityUnavailable(format!(
            "{subset} has no single-modality encoder; choose image or sound"
        ))
    })
}

fn sound_row(obs: &MultimodalObservation, normalizer: &SoundNormalizer) -> Result<Vec<f32>> {
    let raw = obs.sound.to_f32();
    if raw.len() != normalizer.dim() {
        return Err(Error::DimensionMismatch {
            expected: normalizer.dim(),
            actual: raw.len(),
        });
    }
    Ok(normalizer.normalize(&raw))
}

/// Posterior mean of the frozen AVAE encoder for one modality.
#[derive(Clone, Copy, Debug)]
pub struct LatentStateEncoder<'a> {
    model: &'a AvaeModel<f32>,
    modality: Modality,
}

impl<'a> LatentStateEncoder<'a> {
    pub fn new(model: &'a AvaeModel<f32>, subset: &ModalitySubset) -> Result<Self> {
        Ok(Self {
            model,
            modality: single(subset)?,
        })
    }

    /// Checks that `env` produces payloads this encoder accepts.
    pub fn check_env(&self, env: &dyn MultimodalEnv) -> Result<()> {
        let expected = self.model.payload_shape(self.modality);
        let (actual, matches) = match self.modality {
            Modality::Image => {
                let s = env.image_shape().to_vec();
                let ok = s == expected;
                (s, ok)
            }
            Modality::Sound => {
                let s = env.sound_shape().to_vec();
                let ok = s.iter().product::<usize>() == expected[0];
                (s, ok)
            }
        };
        if matches {
            Ok(())
        } else {
            Err(Error::shape(&expected, &actual))
        }
    }
}

impl StateEncoder for LatentStateEncoder<'_> {
    fn modality(&self) -> Modality {
        self.modality
    }

    fn state_dim(&self) -> usize {
        self.model.latent_dim()
    }

    fn encode(&self, obs: &MultimodalObservation) -> Result<Vec<f32>> {
        let x = match self.modality {
            Modality::Image => obs.image_batch(),
            Modality::Sound => {
                let row = sound_row(obs, &self.model.normalizer)?;
                ArrayD::from_shape_vec(vec![1, row.len()], row).expect("row vector")
            }
        };
        Ok(self.model.encode(self.modality, &x)?.mean.iter().copied().collect())
    }
}

/// Raw normalized observation, flattened: the input of native baselines.
#[derive(Clone, Debug)]
pub struct RawStateEncoder {
    modality: Modality,
    dim: usize,
    normalizer: Option<SoundNormalizer>,
}

impl RawStateEncoder {
    pub fn image(env: &dyn MultimodalEnv) -> Self {
        Self {
            modality: Modality::Image,
            dim: env.image_shape().iter().product(),
            normalizer: None,
        }
    }

    pub fn sound(normalizer: SoundNormalizer) -> Self {
        Self {
            modality: Modality::Sound,
            dim: normalizer.dim(),
            normalizer: Some(normalizer),
        }
    }
}

impl StateEncoder for RawStateEncoder {
    fn modality(&self) -> Modality {
        self.modality
    }

    fn state_dim(&self) -> usize {
        self.dim
    }

    fn encode(&self, obs: &MultimodalObservation) -> Result<Vec<f32>> {
        match (&self.normalizer, self.modality) {
            (Some(n), Modality::Sound) => sound_row(obs, n),
            _ => {
                let v: Vec<f32> = obs.image.iter().map(|&p| p as f32 / 255.0).collect();
                if v.len() != self.dim {
                    return Err(Error::DimensionMismatch {
                        expected: self.dim,
                        actual: v.len(),
                    });
                }
                Ok(v)
            }
        }
    }
}
