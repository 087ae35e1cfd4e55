use std::fmt::Write as _;
use std::path::Path;

use ndarray::{Array2, ArrayD, ArrayView2, ArrayView4, Axis, IxDyn};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::avae::AvaeModel;
use super::loss::{LossTerms, LossWeights};
use crate::config::AvaeConfig;
use crate::error::{Error, Result};
use crate::nn::{Adam, AdamConfig};

/// Paired training data: `u8` frames `(M, stack, H, W)` and normalized
/// sounds `(M, D)`.
#[derive(Clone, Copy, Debug)]
pub struct TrainingSet<'a> {
    pub images: ArrayView4<'a, u8>,
    pub sounds: ArrayView2<'a, f32>,
}

impl TrainingSet<'_> {
    pub fn len(&self) -> usize {
        self.images.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Images scaled to `[0, 1]` and sounds for the given sample indices.
    pub fn batch(&self, idx: &[usize]) -> (ArrayD<f32>, ArrayD<f32>) {
        let (_, c, h, w) = self.images.dim();
        let mut img = Vec::with_capacity(idx.len() * c * h * w);
        for &i in idx {
            img.extend(self.images.index_axis(Axis(0), i).iter().map(|&p| p as f32 / 255.0));
        }
        let snd = self.sounds.select(Axis(0), idx);
        (
            ArrayD::from_shape_vec(IxDyn(&[idx.len(), c, h, w]), img).expect("batch shape"),
            snd.into_dyn(),
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl TrainOptions {
    pub fn from_config(cfg: &AvaeConfig, seed: u64) -> Self {
        Self {
            batch_size: cfg.batch_size,
            epochs: cfg.epochs,
            learning_rate: cfg.learning_rate,
            seed,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    /// Unweighted per-sample means over the epoch.
    pub terms: LossTerms,
    pub total: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossHistory {
    pub weights: LossWeights,
    pub epochs: Vec<EpochLoss>,
}

pub const LOSS_CSV_HEADER: &str = "epoch,recon_img,recon_snd,kl_img,kl_snd,sym_kl,total";

/// One row of a loss CSV: the epoch and its weighted contributions, whose
/// sum is the total.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossRow {
    pub epoch: usize,
    pub parts: [f64; 5],
    pub total: f64,
}

impl LossHistory {
    pub fn rows(&self) -> Vec<LossRow> {
        self.epochs
            .iter()
            .map(|e| LossRow {
                epoch: e.epoch,
                parts: e.terms.weighted(&self.weights),
                total: e.total,
            })
            .collect()
    }

    /// CSV of weighted loss contributions per epoch.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(LOSS_CSV_HEADER);
        out.push('\n');
        for r in self.rows() {
            let _ = write!(out, "{}", r.epoch);
            for v in r.parts {
                let _ = write!(out, ",{v:e}");
            }
            let _ = writeln!(out, ",{:e}", r.total);
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }
}

pub fn parse_loss_csv(text: &str) -> Result<Vec<LossRow>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == LOSS_CSV_HEADER => {}
        _ => {
            return Err(Error::Parse {
                line: 1,
                message: format!("expected header {LOSS_CSV_HEADER:?}"),
            })
        }
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |message: String| Error::Parse { line: i + 1, message };
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 7 {
            return Err(bad(format!("expected 7 fields, found {}", fields.len())));
        }
        let epoch = fields[0].trim().parse().map_err(|e| bad(format!("epoch: {e}")))?;
        let mut vals = [0.0; 6];
        for (v, f) in vals.iter_mut().zip(&fields[1..]) {
            *v = f.trim().parse().map_err(|e| bad(format!("{f:?}: {e}")))?;
        }
        rows.push(LossRow {
            epoch,
            parts: [vals[0], vals[1], vals[2], vals[3], vals[4]],
            total: vals[5],
        });
    }
    Ok(rows)
}

/// Minibatch Adam on the AVAE loss. Epoch `e` records the mean of each term
/// over all samples seen during that epoch.
pub fn train_avae(
    model: &mut AvaeModel<f32>,
    data: &TrainingSet,
    opts: &TrainOptions,
    mut on_epoch: impl FnMut(&EpochLoss),
) -> Result<LossHistory> {
    let weights = model.weights;
    let mut history = LossHistory {
        weights,
        epochs: Vec::with_capacity(opts.epochs),
    };
    if opts.epochs == 0 {
        return Ok(history);
    }
    let n = data.len();
    if n < 2 || data.sounds.nrows() != n {
        return Err(Error::Config(format!(
            "training needs at least two paired samples (images {n}, sounds {})",
            data.sounds.nrows()
        )));
    }
    if opts.batch_size < 2 {
        return Err(Error::Config("batch_size must be at least 2 for batch normalization".into()));
    }
    let l = model.latent_dim();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut opt = Adam::new(AdamConfig::with_learning_rate(opts.learning_rate));
    let mut order: Vec<usize> = (0..n).collect();
    for epoch in 0..opts.epochs {
        order.shuffle(&mut rng);
        let mut sum = LossTerms::default();
        let mut seen = 0usize;
        for idx in order.chunks(opts.batch_size).filter(|c| c.len() >= 2) {
            let (xi, xs) = data.batch(idx);
            let b = idx.len();
            let ei = Array2::from_shape_simple_fn((b, l), || StandardNormal.sample(&mut rng));
            let es = Array2::from_shape_simple_fn((b, l), || StandardNormal.sample(&mut rng));
            model.zero_grad();
            let terms = model.forward_backward(&xi, &xs, &ei, &es)?;
            opt.step(&mut model.nets_mut());
            sum.add(&terms.scaled(b as f64));
            seen += b;
        }
        let terms = sum.scaled(1.0 / seen as f64);
        let rec = EpochLoss {
            epoch,
            terms,
            total: terms.total(&weights),
        };
        if !rec.total.is_finite() {
            return Err(Error::Config(format!("AVAE loss diverged at epoch {epoch}")));
        }
        on_epoch(&rec);
        history.epochs.push(rec);
    }
    model.zero_grad();
    Ok(history)
}
