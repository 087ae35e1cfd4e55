//! AVAE checkpoints: parameters, architecture, loss weights, and sound
//! normalization statistics in one archive, guarded by the model digest.

use std::path::Path;

use serde_json::json;

use super::arch::AvaeArchitecture;
use super::avae::{AvaeModel, SoundNormalizer};
use super::loss::LossWeights;
use crate::archive::{Archive, ArchiveWriter};
use crate::error::{Error, Result};

pub const AVAE_KIND: &str = "avae";

/// Writes `model` and returns the SHA-256 of the file.
pub fn save_avae(model: &AvaeModel<f32>, path: &Path) -> Result<String> {
    let mut w = ArchiveWriter::new(
        AVAE_KIND,
        json!({
            "architecture": model.arch,
            "weights": model.weights,
            "digest": model.digest(),
        }),
    );
    let n = model.normalizer.dim();
    w.add_f32("normalizer.min", &[n], &model.normalizer.min);
    w.add_f32("normalizer.max", &[n], &model.normalizer.max);
    for (i, net) in model.nets().iter().enumerate() {
        for (j, (shape, data)) in net.tensors().iter().enumerate() {
            w.add_f32(&format!("net{i}.{j}"), shape, data);
        }
    }
    w.write(path)
}

pub fn load_avae(path: &Path) -> Result<AvaeModel<f32>> {
    let a = Archive::read(path)?;
    a.expect_kind(AVAE_KIND)?;
    let arch: AvaeArchitecture = a.meta_field("architecture")?;
    let weights: LossWeights = a.meta_field("weights")?;
    let digest: String = a.meta_field("digest")?;
    let normalizer = SoundNormalizer {
        min: a.f32("normalizer.min")?.1,
        max: a.f32("normalizer.max")?.1,
    };
    let mut model = AvaeModel::<f32>::new(arch, weights, normalizer, 0)?;
    for (i, net) in model.nets_mut().into_iter().enumerate() {
        let count = net.tensors().len();
        let tensors = (0..count)
            .map(|j| a.f32(&format!("net{i}.{j}")))
            .collect::<Result<Vec<_>>>()?;
        net.load_tensors(&tensors)?;
    }
    if model.digest() != digest {
        return Err(Error::Format {
            path: path.to_path_buf(),
            message: "model digest does not match its parameters".into(),
        });
    }
    Ok(model)
}
