use std::path::Path;

use ndarray::{Array2, Array4, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;
use sha2::{Digest, Sha256};

use super::{derive_seed, SeedDomain};
use crate::archive::{Archive, ArchiveWriter, FORMAT_VERSION};
use crate::env::MultimodalEnv;
use crate::error::{Error, Result};
use crate::generative::{SoundNormalizer, TrainingSet};

pub const DATASET_KIND: &str = "paired-dataset";

/// Simultaneously captured image/sound pairs from a random controller.
#[derive(Clone, Debug, PartialEq)]
pub struct PairedDataset {
    pub env: String,
    pub seed: u64,
    pub controller: String,
    /// `(M, stack, H, W)`.
    pub images: Array4<u8>,
    /// Per-sample sound shape before flattening.
    pub sound_shape: Vec<usize>,
    /// `(M, D)`, normalized into `[0, 1]`.
    pub sounds: Array2<f32>,
    /// `None` when the dataset is empty and no statistics exist.
    pub normalizer: Option<SoundNormalizer>,
}

/// Rolls a uniform-random controller through `env`, resetting on episode
/// end, until `m` observations are recorded. Sounds are scaled with
/// `normalizer`, or with statistics fitted on the collected data.
pub fn collect_dataset(
    env: &mut dyn MultimodalEnv,
    m: usize,
    seed: u64,
    normalizer: Option<&SoundNormalizer>,
) -> Result<PairedDataset> {
    let [c, h, w] = env.image_shape();
    let sound_shape = env.sound_shape().to_vec();
    let d: usize = sound_shape.iter().product();
    let mut images = Vec::with_capacity(m * c * h * w);
    let mut sounds = Vec::with_capacity(m * d);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut episode = 0u64;
    let mut obs = None;
    for _ in 0..m {
        let o = match obs.take() {
            Some(o) => o,
            None => {
                episode += 1;
                env.reset(derive_seed(seed, SeedDomain::DatasetEpisodes, episode - 1))?
            }
        };
        images.extend(o.image.iter().copied());
        sounds.extend(o.sound.to_f32());
        let step = env.step(env.random_action(&mut rng))?;
        if !step.terminal {
            obs = Some(step.observation);
        }
    }
    let mut sounds = Array2::from_shape_vec((m, d), sounds).expect("rows of one sound each");
    let normalizer = match normalizer {
        Some(n) => Some(n.clone()),
        None => SoundNormalizer::fit(d, sounds.rows().into_iter().map(|r| r.to_slice().expect("row")))?,
    };
    if let Some(n) = &normalizer {
        if n.dim() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                actual: n.dim(),
            });
        }
        for mut row in sounds.rows_mut() {
            let raw = row.to_vec();
            n.normalize_into(&raw, row.as_slice_mut().expect("row"));
        }
    }
    Ok(PairedDataset {
        env: env.name().to_string(),
        seed,
        controller: "uniform-random".into(),
        images: Array4::from_shape_vec((m, c, h, w), images).expect("stacked frames"),
        sound_shape,
        sounds,
        normalizer,
    })
}

impl PairedDataset {
    pub fn len(&self) -> usize {
        self.images.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn training_set(&self) -> TrainingSet<'_> {
        TrainingSet {
            images: self.images.view(),
            sounds: self.sounds.view(),
        }
    }

    /// First `n` samples and the rest.
    pub fn split(&self, n: usize) -> (PairedDataset, PairedDataset) {
        let n = n.min(self.len());
        let part = |lo: usize, hi: usize| PairedDataset {
            images: self.images.slice_axis(Axis(0), (lo..hi).into()).to_owned(),
            sounds: self.sounds.slice_axis(Axis(0), (lo..hi).into()).to_owned(),
            ..self.clone_meta()
        };
        (part(0, n), part(n, self.len()))
    }

    fn clone_meta(&self) -> PairedDataset {
        PairedDataset {
            env: self.env.clone(),
            seed: self.seed,
            controller: self.controller.clone(),
            images: Array4::zeros((0, 0, 0, 0)),
            sound_shape: self.sound_shape.clone(),
            sounds: Array2::zeros((0, 0)),
            normalizer: self.normalizer.clone(),
        }
    }

    /// SHA-256 over metadata and both arrays.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.meta().to_string().as_bytes());
        h.update(self.images.as_standard_layout().as_slice().expect("contiguous"));
        for v in self.sounds.iter() {
            h.update(v.to_le_bytes());
        }
        hex::encode(h.finalize())
    }

    fn meta(&self) -> serde_json::Value {
        json!({
            "env": self.env,
            "seed": self.seed,
            "controller": self.controller,
            "m": self.len(),
            "image_shape": self.images.shape()[1..],
            "sound_shape": self.sound_shape,
            "normalizer": self.normalizer,
            "format_version": FORMAT_VERSION,
        })
    }

    /// Writes the archive and returns the file's SHA-256.
    pub fn save(&self, path: &Path) -> Result<String> {
        let mut w = ArchiveWriter::new(DATASET_KIND, self.meta());
        let images = self.images.as_standard_layout();
        w.add_u8("images", self.images.shape(), images.as_slice().expect("contiguous"));
        let sounds = self.sounds.as_standard_layout();
        w.add_f32("sounds", self.sounds.shape(), sounds.as_slice().expect("contiguous"));
        w.write(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let a = Archive::read(path)?;
        a.expect_kind(DATASET_KIND)?;
        let bad = |message: String| Error::Format {
            path: path.to_path_buf(),
            message,
        };
        let (ishape, idata) = a.u8("images")?;
        let (sshape, sdata) = a.f32("sounds")?;
        let images: Array4<u8> = ndarray::ArrayD::from_shape_vec(ishape.clone(), idata)
            .map_err(|e| bad(e.to_string()))?
            .into_dimensionality()
            .map_err(|_| bad(format!("images must be 4-d, found {ishape:?}")))?;
        let sounds: Array2<f32> = ndarray::ArrayD::from_shape_vec(sshape.clone(), sdata)
            .map_err(|e| bad(e.to_string()))?
            .into_dimensionality()
            .map_err(|_| bad(format!("sounds must be 2-d, found {sshape:?}")))?;
        if images.shape()[0] != sounds.nrows() {
            return Err(bad("images and sounds are not index-aligned".into()));
        }
        Ok(Self {
            env: a.meta_field("env")?,
            seed: a.meta_field("seed")?,
            controller: a.meta_field("controller")?,
            images,
            sound_shape: a.meta_field("sound_shape")?,
            sounds,
            normalizer: a.meta_field("normalizer")?,
        })
    }
}
