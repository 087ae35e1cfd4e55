use std::sync::atomic::{AtomicU64, Ordering};

use ndarray::{concatenate, s, Array2, ArrayD, Axis, Ix2, IxDyn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::arch::AvaeArchitecture;
use super::loss::{bce_logits_batch, kl_prior_batch, mse_batch, sym_kl_batch, DiagonalGaussian, LossTerms, LossWeights};
use crate::error::{Error, Result};
use crate::modality::Modality;
use crate::nn::{sigmoid, NetCounters, Real, Sequential};

/// Per-dimension min/max scaling of raw sound features into `[0, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SoundNormalizer {
    pub min: Vec<f32>,
    pub max: Vec<f32>,
}

impl SoundNormalizer {
    pub fn identity(dim: usize) -> Self {
        Self {
            min: vec![0.0; dim],
            max: vec![1.0; dim],
        }
    }

    /// `None` when there are no rows to fit.
    pub fn fit<'a>(dim: usize, rows: impl IntoIterator<Item = &'a [f32]>) -> Result<Option<Self>> {
        let mut min = vec![f32::INFINITY; dim];
        let mut max = vec![f32::NEG_INFINITY; dim];
        let mut seen = false;
        for row in rows {
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: row.len(),
                });
            }
            seen = true;
            for ((lo, hi), &v) in min.iter_mut().zip(max.iter_mut()).zip(row) {
                *lo = lo.min(v);
                *hi = hi.max(v);
            }
        }
        Ok(seen.then_some(Self { min, max }))
    }

    pub fn dim(&self) -> usize {
        self.min.len()
    }

    /// Values outside the fitted range are clamped; constant dimensions map to 0.
    pub fn normalize_into(&self, raw: &[f32], out: &mut [f32]) {
        for (((o, &v), &lo), &hi) in out.iter_mut().zip(raw).zip(&self.min).zip(&self.max) {
            let range = hi - lo;
            *o = if range > 0.0 { ((v - lo) / range).clamp(0.0, 1.0) } else { 0.0 };
        }
    }

    pub fn normalize(&self, raw: &[f32]) -> Vec<f32> {
        let mut out = vec![0.0; raw.len()];
        self.normalize_into(raw, &mut out);
        out
    }

    pub fn denormalize(&self, norm: &[f32]) -> Vec<f32> {
        norm.iter()
            .zip(&self.min)
            .zip(&self.max)
            .map(|((&v, &lo), &hi)| lo + v * (hi - lo))
            .collect()
    }
}

/// Batch of diagonal Gaussians, one row per sample.
#[derive(Clone, Debug)]
pub struct GaussianBatch<T> {
    pub mean: Array2<T>,
    pub log_var: Array2<T>,
}

impl<T: Real> GaussianBatch<T> {
    fn split(out: &ArrayD<T>, latent: usize) -> Self {
        let out = out.view().into_dimensionality::<Ix2>().expect("encoder output is 2-d");
        Self {
            mean: out.slice(s![.., ..latent]).to_owned(),
            log_var: out.slice(s![.., latent..]).to_owned(),
        }
    }

    pub fn len(&self) -> usize {
        self.mean.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn row(&self, i: usize) -> DiagonalGaussian {
        DiagonalGaussian {
            mean: self.mean.row(i).iter().map(|v| v.as_f64()).collect(),
            log_var: self.log_var.row(i).iter().map(|v| v.as_f64()).collect(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct EncoderDecoderPair<T> {
    pub modality: Modality,
    pub encoder: Sequential<T>,
    pub decoder: Sequential<T>,
}

#[derive(Debug, Default)]
struct EncodeTrace([AtomicU64; 2]);

impl Clone for EncodeTrace {
    fn clone(&self) -> Self {
        let t = Self::default();
        for (a, b) in t.0.iter().zip(&self.0) {
            a.store(b.load(Ordering::Relaxed), Ordering::Relaxed);
        }
        t
    }
}

/// Two single-modality VAEs whose posteriors are pulled together by a
/// symmetric-KL term, giving a shared latent space.
#[derive(Clone, Debug)]
pub struct AvaeModel<T = f32> {
    pub arch: AvaeArchitecture,
    pub weights: LossWeights,
    pub image: EncoderDecoderPair<T>,
    pub sound: EncoderDecoderPair<T>,
    pub normalizer: SoundNormalizer,
    trace: EncodeTrace,
}

impl<T: Real> AvaeModel<T> {
    pub fn new(arch: AvaeArchitecture, weights: LossWeights, normalizer: SoundNormalizer, seed: u64) -> Result<Self> {
        arch.validate()?;
        weights.validate()?;
        if normalizer.dim() != arch.sound.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: arch.sound.input_dim(),
                actual: normalizer.dim(),
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let l = arch.latent_dim;
        let image = EncoderDecoderPair {
            modality: Modality::Image,
            encoder: arch.image.build_encoder(&mut rng, l)?,
            decoder: arch.image.build_decoder(&mut rng, l)?,
        };
        let sound = EncoderDecoderPair {
            modality: Modality::Sound,
            encoder: arch.sound.build_encoder(&mut rng, l),
            decoder: arch.sound.build_decoder(&mut rng, l),
        };
        Ok(Self {
            arch,
            weights,
            image,
            sound,
            normalizer,
            trace: EncodeTrace::default(),
        })
    }

    pub fn latent_dim(&self) -> usize {
        self.arch.latent_dim
    }

    pub fn pair(&self, m: Modality) -> &EncoderDecoderPair<T> {
        match m {
            Modality::Image => &self.image,
            Modality::Sound => &self.sound,
        }
    }

    /// Per-sample payload shape the model expects for `m`.
    pub fn payload_shape(&self, m: Modality) -> Vec<usize> {
        match m {
            Modality::Image => self.arch.image_shape().to_vec(),
            Modality::Sound => vec![self.arch.sound.input_dim()],
        }
    }

    /// Accepts `(B, C, H, W)` images and `(B, D)` or `(B, stack, S, n)` sounds.
    fn prepare(&self, m: Modality, x: &ArrayD<T>) -> Result<ArrayD<T>> {
        let shape = self.payload_shape(m);
        let b = x.shape().first().copied().unwrap_or(0);
        let per: usize = x.shape().iter().skip(1).product();
        let matches = match m {
            Modality::Image => x.ndim() == 4 && x.shape()[1..] == shape[..],
            Modality::Sound => x.ndim() >= 2 && per == shape[0],
        };
        if !matches {
            let mut expected = vec![b];
            expected.extend(&shape);
            return Err(Error::shape(&expected, x.shape()));
        }
        if m == Modality::Sound && x.ndim() != 2 {
            return Ok(x
                .as_standard_layout()
                .into_owned()
                .into_shape_with_order(IxDyn(&[b, per]))
                .expect("contiguous reshape"));
        }
        Ok(x.clone())
    }

    pub fn encode(&self, m: Modality, x: &ArrayD<T>) -> Result<GaussianBatch<T>> {
        let x = self.prepare(m, x)?;
        self.trace.0[m.index()].fetch_add(1, Ordering::Relaxed);
        let out = self.pair(m).encoder.infer(&x);
        Ok(GaussianBatch::split(&out, self.latent_dim()))
    }

    /// Number of `encode` calls routed to each modality's encoder.
    pub fn encode_calls(&self, m: Modality) -> u64 {
        self.trace.0[m.index()].load(Ordering::Relaxed)
    }

    /// Reconstruction in the modality's normalized `[0, 1]` space.
    pub fn decode(&self, m: Modality, z: &Array2<T>) -> Result<ArrayD<T>> {
        if z.ncols() != self.latent_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.latent_dim(),
                actual: z.ncols(),
            });
        }
        let out = self.pair(m).decoder.infer(&z.clone().into_dyn());
        Ok(match m {
            Modality::Image => out.mapv(sigmoid),
            Modality::Sound => out,
        })
    }

    /// Decodes the posterior mean of `source` into `target`.
    pub fn cross_modal_infer(&self, source: Modality, x: &ArrayD<T>, target: Modality) -> Result<ArrayD<T>> {
        let q = self.encode(source, x)?;
        self.decode(target, &q.mean)
    }

    fn run(
        &mut self,
        x_image: &ArrayD<T>,
        x_sound: &ArrayD<T>,
        eps_image: &Array2<T>,
        eps_sound: &Array2<T>,
        backward: bool,
    ) -> Result<LossTerms> {
        let x_image = self.prepare(Modality::Image, x_image)?;
        let x_sound = self.prepare(Modality::Sound, x_sound)?;
        let b = x_image.shape()[0];
        if x_sound.shape()[0] != b || eps_image.nrows() != b || eps_sound.nrows() != b {
            return Err(Error::DimensionMismatch {
                expected: b,
                actual: x_sound.shape()[0],
            });
        }
        let l = self.latent_dim();
        if eps_image.ncols() != l || eps_sound.ncols() != l {
            return Err(Error::DimensionMismatch {
                expected: l,
                actual: eps_image.ncols().min(eps_sound.ncols()),
            });
        }
        let w = self.weights;
        let half = T::lit(0.5);

        let qi = GaussianBatch::split(&self.image.encoder.forward_train(&x_image), l);
        let qs = GaussianBatch::split(&self.sound.encoder.forward_train(&x_sound), l);
        let std_i = qi.log_var.mapv(|v| (half * v).exp());
        let std_s = qs.log_var.mapv(|v| (half * v).exp());
        let zi = &qi.mean + &(&std_i * eps_image);
        let zs = &qs.mean + &(&std_s * eps_sound);
        let logits = self.image.decoder.forward_train(&zi.into_dyn());
        let y_sound = self.sound.decoder.forward_train(&zs.into_dyn());

        let (bce, d_logits) = bce_logits_batch(&logits, &x_image);
        let (mse, d_ysound) = mse_batch(&y_sound, &x_sound);
        let (kl_i, dmu_i_kl, dlv_i_kl) = kl_prior_batch(&qi.mean, &qi.log_var);
        let (kl_s, dmu_s_kl, dlv_s_kl) = kl_prior_batch(&qs.mean, &qs.log_var);
        let sk = sym_kl_batch(&qi.mean, &qi.log_var, &qs.mean, &qs.log_var);

        let inv_b = 1.0 / b as f64;
        let terms = LossTerms {
            recon_image: bce,
            recon_sound: mse,
            kl_image: kl_i,
            kl_sound: kl_s,
            sym_kl: sk.sum,
        }
        .scaled(inv_b);
        if !backward {
            return Ok(terms);
        }

        let sc = |x: f64| T::lit(x * inv_b);
        let dz_i = self.image.decoder.backward(&(d_logits * sc(w.lambda_image)));
        let dz_s = self.sound.decoder.backward(&(d_ysound * sc(w.lambda_sound)));
        let dz_i = dz_i.into_dimensionality::<Ix2>().expect("2-d latent gradient");
        let dz_s = dz_s.into_dimensionality::<Ix2>().expect("2-d latent gradient");

        let (beta, alpha) = (sc(w.beta), sc(w.alpha));
        let dmu_i = &dz_i + &(dmu_i_kl * beta) + &(sk.d_mu1 * alpha);
        let dmu_s = &dz_s + &(dmu_s_kl * beta) + &(sk.d_mu2 * alpha);
        let dlv_i = &(&dz_i * &std_i * eps_image * half) + &(dlv_i_kl * beta) + &(sk.d_lv1 * alpha);
        let dlv_s = &(&dz_s * &std_s * eps_sound * half) + &(dlv_s_kl * beta) + &(sk.d_lv2 * alpha);

        let gi = concatenate(Axis(1), &[dmu_i.view(), dlv_i.view()]).expect("same rows");
        let gs = concatenate(Axis(1), &[dmu_s.view(), dlv_s.view()]).expect("same rows");
        self.image.encoder.backward(&gi.into_dyn());
        self.sound.encoder.backward(&gs.into_dyn());
        Ok(terms)
    }

    /// Training-mode forward pass with explicit reparameterization noise;
    /// returns batch-mean loss terms without touching gradients.
    pub fn loss_terms(
        &mut self,
        x_image: &ArrayD<T>,
        x_sound: &ArrayD<T>,
        eps_image: &Array2<T>,
        eps_sound: &Array2<T>,
    ) -> Result<LossTerms> {
        self.run(x_image, x_sound, eps_image, eps_sound, false)
    }

    /// Like [`Self::loss_terms`], and accumulates gradients of the batch-mean
    /// total loss into every parameter.
    pub fn forward_backward(
        &mut self,
        x_image: &ArrayD<T>,
        x_sound: &ArrayD<T>,
        eps_image: &Array2<T>,
        eps_sound: &Array2<T>,
    ) -> Result<LossTerms> {
        self.run(x_image, x_sound, eps_image, eps_sound, true)
    }

    pub fn nets(&self) -> [&Sequential<T>; 4] {
        [&self.image.encoder, &self.image.decoder, &self.sound.encoder, &self.sound.decoder]
    }

    pub fn nets_mut(&mut self) -> [&mut Sequential<T>; 4] {
        [
            &mut self.image.encoder,
            &mut self.image.decoder,
            &mut self.sound.encoder,
            &mut self.sound.decoder,
        ]
    }

    pub fn zero_grad(&mut self) {
        for n in self.nets_mut() {
            n.zero_grad();
        }
    }

    pub fn counters(&self) -> NetCounters {
        self.nets().iter().fold(NetCounters::default(), |acc, n| {
            let c = n.counters();
            NetCounters {
                train_forwards: acc.train_forwards + c.train_forwards,
                backward_passes: acc.backward_passes + c.backward_passes,
                param_writes: acc.param_writes + c.param_writes,
            }
        })
    }

    /// SHA-256 over the architecture, loss weights, normalization statistics,
    /// and every parameter and buffer.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        h.update(serde_json::to_vec(&self.arch).expect("architecture serializes"));
        h.update(serde_json::to_vec(&self.weights).expect("weights serialize"));
        for v in self.normalizer.min.iter().chain(&self.normalizer.max) {
            h.update(v.to_le_bytes());
        }
        for n in self.nets() {
            n.hash_into(&mut h);
        }
        hex::encode(h.finalize())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Adam, AdamConfig};
    use rand::Rng;

    fn weights() -> LossWeights {
        LossWeights {
            lambda_image: 1.0,
            lambda_sound: 1.0,
            beta: 1.0,
            alpha: 1.0,
        }
    }

    fn tiny(seed: u64) -> AvaeModel<f64> {
        AvaeModel::new(AvaeArchitecture::tiny(), weights(), SoundNormalizer::identity(6), seed).unwrap()
    }

    fn batch(rng: &mut ChaCha8Rng, b: usize) -> (ArrayD<f64>, ArrayD<f64>, Array2<f64>, Array2<f64>) {
        let xi = ArrayD::from_shape_fn(IxDyn(&[b, 1, 8, 8]), |_| rng.random::<f64>());
        let xs = ArrayD::from_shape_fn(IxDyn(&[b, 6]), |_| rng.random::<f64>());
        let ei = Array2::from_shape_fn((b, 4), |_| rng.random_range(-1.0..1.0));
        let es = Array2::from_shape_fn((b, 4), |_| rng.random_range(-1.0..1.0));
        (xi, xs, ei, es)
    }

    #[test]
    fn shape_contracts() {
        let m = tiny(0);
        let x = ArrayD::zeros(IxDyn(&[3, 1, 8, 8]));
        let q = m.encode(Modality::Image, &x).unwrap();
        assert_eq!(q.mean.dim(), (3, 4));
        let img = m.decode(Modality::Image, &q.mean).unwrap();
        assert_eq!(img.shape(), &[3, 1, 8, 8]);
        assert!(img.iter().all(|v| (0.0..=1.0).contains(v)));
        let snd = m.cross_modal_infer(Modality::Image, &x, Modality::Sound).unwrap();
        assert_eq!(snd.shape(), &[3, 6]);
        assert!(m.encode(Modality::Image, &ArrayD::zeros(IxDyn(&[3, 1, 8, 7]))).is_err());
        assert!(m.encode(Modality::Sound, &ArrayD::zeros(IxDyn(&[3, 2, 3]))).is_ok());
        assert_eq!(m.encode_calls(Modality::Image), 2);
        assert_eq!(m.encode_calls(Modality::Sound), 1);
    }

    #[test]
    fn zero_alpha_drops_alignment_from_total() {
        let mut m = tiny(1);
        m.weights.alpha = 0.0;
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (xi, xs, ei, es) = batch(&mut rng, 4);
        let t = m.loss_terms(&xi, &xs, &ei, &es).unwrap();
        assert!(t.sym_kl > 0.0);
        let w = m.weights;
        let expected = w.lambda_image * t.recon_image
            + w.beta * t.kl_image
            + w.lambda_sound * t.recon_sound
            + w.beta * t.kl_sound;
        assert_eq!(t.total(&w), expected);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut m = tiny(3);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (xi, xs, ei, es) = batch(&mut rng, 5);
        m.zero_grad();
        m.forward_backward(&xi, &xs, &ei, &es).unwrap();
        let w = m.weights;
        let analytic: Vec<Vec<f64>> = m
            .nets()
            .iter()
            .flat_map(|n| n.params())
            .map(|p| p.grad.iter().copied().collect())
            .collect();
        let h = 1e-5;
        let mut checked = 0;
        for (pi, grads) in analytic.iter().enumerate() {
            for k in (0..grads.len()).step_by(7) {
                let set = |delta: f64, m: &mut AvaeModel<f64>| {
                    let mut i = 0;
                    for n in m.nets_mut() {
                        for p in n.params_mut() {
                            if i == pi {
                                let v = p.value.as_slice_mut().unwrap();
                                v[k] += delta;
                            }
                            i += 1;
                        }
                    }
                };
                set(h, &mut m);
                let up = m.loss_terms(&xi, &xs, &ei, &es).unwrap().total(&w);
                set(-2.0 * h, &mut m);
                let down = m.loss_terms(&xi, &xs, &ei, &es).unwrap().total(&w);
                set(h, &mut m);
                let num = (up - down) / (2.0 * h);
                let a = grads[k];
                let rel = (a - num).abs() / a.abs().max(num.abs()).max(1e-6);
                assert!(rel < 1e-3, "param {pi}[{k}]: analytic {a} numeric {num}");
                checked += 1;
            }
        }
        assert!(checked > 20);
    }

    #[test]
    fn training_reduces_loss_on_a_fixed_batch() {
        let mut m = tiny(5);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let (xi, xs, ei, es) = batch(&mut rng, 8);
        let w = m.weights;
        let first = m.loss_terms(&xi, &xs, &ei, &es).unwrap().total(&w);
        let mut opt = Adam::new(AdamConfig::with_learning_rate(1e-2));
        for _ in 0..100 {
            m.zero_grad();
            m.forward_backward(&xi, &xs, &ei, &es).unwrap();
            opt.step(&mut m.nets_mut());
        }
        let last = m.loss_terms(&xi, &xs, &ei, &es).unwrap().total(&w);
        assert!(last < first, "{last} !< {first}");
    }

    #[test]
    fn normalizer_fits_per_dimension() {
        let rows = [vec![1.0f32, 5.0, 3.0], vec![3.0, 5.0, -1.0]];
        let n = SoundNormalizer::fit(3, rows.iter().map(|r| r.as_slice())).unwrap().unwrap();
        assert_eq!(n.min, vec![1.0, 5.0, -1.0]);
        assert_eq!(n.normalize(&[2.0, 5.0, 7.0]), vec![0.5, 0.0, 1.0]);
        assert_eq!(n.denormalize(&[0.5, 0.0, 0.25]), vec![2.0, 5.0, 0.0]);
        assert!(SoundNormalizer::fit(3, std::iter::empty()).unwrap().is_none());
    }

    #[test]
    fn digest_is_stable_and_sensitive() {
        let a = tiny(9);
        let b = tiny(9);
        assert_eq!(a.digest(), b.digest());
        let mut c = b.clone();
        c.normalizer.max[0] = 2.0;
        assert_ne!(a.digest(), c.digest());
    }
}
