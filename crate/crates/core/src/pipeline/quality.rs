use ndarray::{Array2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::PairedDataset;
use crate::error::{Error, Result};
use crate::generative::AvaeModel;
use crate::modality::Modality;

/// Held-out sound reconstruction error in normalized units.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerceptionQuality {
    /// Image posterior mean decoded as sound.
    pub cross_modal_mse: f64,
    /// Standard-normal prior sample decoded as sound.
    pub prior_sample_mse: f64,
    pub samples: usize,
}

pub fn evaluate_perception(model: &AvaeModel<f32>, held_out: &PairedDataset, seed: u64) -> Result<PerceptionQuality> {
    let n = held_out.len();
    if n == 0 {
        return Err(Error::Config("perception quality needs held-out samples".into()));
    }
    let set = held_out.training_set();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut cross, mut prior, mut count) = (0.0f64, 0.0f64, 0usize);
    let idx: Vec<usize> = (0..n).collect();
    for chunk in idx.chunks(256) {
        let (xi, xs) = set.batch(chunk);
        let truth = xs.into_dimensionality::<ndarray::Ix2>().expect("sound rows");
        let recon = model.cross_modal_infer(Modality::Image, &xi, Modality::Sound)?;
        let z = Array2::from_shape_simple_fn((chunk.len(), model.latent_dim()), || {
            StandardNormal.sample(&mut rng)
        });
        let dream = model.decode(Modality::Sound, &z)?;
        let sq = |a: &ndarray::ArrayD<f32>| -> f64 {
            a.view()
                .into_dimensionality::<ndarray::Ix2>()
                .expect("sound rows")
                .axis_iter(Axis(0))
                .zip(truth.axis_iter(Axis(0)))
                .map(|(p, t)| p.iter().zip(t).map(|(&p, &t)| ((p - t) as f64).powi(2)).sum::<f64>())
                .sum()
        };
        cross += sq(&recon);
        prior += sq(&dream);
        count += truth.len();
    }
    Ok(PerceptionQuality {
        cross_modal_mse: cross / count as f64,
        prior_sample_mse: prior / count as f64,
        samples: n,
    })
}
