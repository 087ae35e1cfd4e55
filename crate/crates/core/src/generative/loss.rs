//! Variational loss terms: closed-form KL divergences, reconstruction
//! losses, and their batched forms with analytic gradients.

use ndarray::{Array2, ArrayD, Zip};
use serde::{Deserialize, Serialize};

use crate::config::AvaeConfig;
use crate::error::{Error, Result};
use crate::nn::{sigmoid, softplus, Real};

/// Diagonal Gaussian given by mean and log-variance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagonalGaussian {
    pub mean: Vec<f64>,
    pub log_var: Vec<f64>,
}

impl DiagonalGaussian {
    pub fn new(mean: Vec<f64>, log_var: Vec<f64>) -> Result<Self> {
        if mean.len() != log_var.len() {
            return Err(Error::DimensionMismatch {
                expected: mean.len(),
                actual: log_var.len(),
            });
        }
        if mean.iter().chain(&log_var).any(|v| !v.is_finite()) {
            return Err(Error::Config("gaussian parameters must be finite".into()));
        }
        Ok(Self { mean, log_var })
    }

    pub fn standard(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            log_var: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// KL(q ‖ N(0, I)) = ½ Σ (μ² + σ² − 1 − log σ²).
pub fn kl_to_standard_prior(q: &DiagonalGaussian) -> f64 {
    q.mean
        .iter()
        .zip(&q.log_var)
        .map(|(m, lv)| 0.5 * (m * m + lv.exp() - 1.0 - lv))
        .sum()
}

/// KL(p ‖ q) + KL(q ‖ p).
pub fn symmetric_kl(p: &DiagonalGaussian, q: &DiagonalGaussian) -> Result<f64> {
    if p.dim() != q.dim() {
        return Err(Error::DimensionMismatch {
            expected: p.dim(),
            actual: q.dim(),
        });
    }
    Ok((0..p.dim())
        .map(|d| sym_kl_scalar(p.mean[d], p.log_var[d], q.mean[d], q.log_var[d]))
        .sum())
}

fn sym_kl_scalar(m1: f64, lv1: f64, m2: f64, lv2: f64) -> f64 {
    let d2 = (m1 - m2) * (m1 - m2);
    0.5 * ((lv1.exp() + d2) * (-lv2).exp() + (lv2.exp() + d2) * (-lv1).exp() - 2.0)
}

/// z = μ + exp(½ log σ²) ⊙ ε.
pub fn reparameterized_sample(q: &DiagonalGaussian, noise: &[f64]) -> Result<Vec<f64>> {
    if noise.len() != q.dim() {
        return Err(Error::DimensionMismatch {
            expected: q.dim(),
            actual: noise.len(),
        });
    }
    Ok(q.mean
        .iter()
        .zip(&q.log_var)
        .zip(noise)
        .map(|((m, lv), n)| m + (0.5 * lv).exp() * n)
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReconKind {
    Bce,
    Mse,
}

const BCE_FLOOR: f64 = 1e-12;

/// Reconstruction loss summed over elements. `recon` holds probabilities
/// for `Bce`.
pub fn reconstruction_loss(x: &[f64], recon: &[f64], kind: ReconKind) -> Result<f64> {
    if x.len() != recon.len() {
        return Err(Error::shape(&[x.len()], &[recon.len()]));
    }
    Ok(match kind {
        ReconKind::Mse => x.iter().zip(recon).map(|(a, b)| (a - b) * (a - b)).sum(),
        ReconKind::Bce => x
            .iter()
            .zip(recon)
            .map(|(t, p)| {
                let p = p.clamp(BCE_FLOOR, 1.0 - BCE_FLOOR);
                -(t * p.ln() + (1.0 - t) * (1.0 - p).ln())
            })
            .sum(),
    })
}

/// λ · reconstruction + β · KL(q ‖ prior).
pub fn vae_loss(
    x: &[f64],
    recon: &[f64],
    q: &DiagonalGaussian,
    lambda: f64,
    beta: f64,
    kind: ReconKind,
) -> Result<f64> {
    Ok(lambda * reconstruction_loss(x, recon, kind)? + beta * kl_to_standard_prior(q))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda_image: f64,
    pub lambda_sound: f64,
    pub beta: f64,
    pub alpha: f64,
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if [self.lambda_image, self.lambda_sound, self.beta, self.alpha]
            .iter()
            .any(|w| !(*w >= 0.0))
        {
            return Err(Error::Config("loss weights must be >= 0".into()));
        }
        Ok(())
    }
}

impl From<&AvaeConfig> for LossWeights {
    fn from(c: &AvaeConfig) -> Self {
        Self {
            lambda_image: c.lambda_image,
            lambda_sound: c.lambda_sound,
            beta: c.beta,
            alpha: c.alpha,
        }
    }
}

/// Unweighted loss terms, per sample.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossTerms {
    pub recon_image: f64,
    pub recon_sound: f64,
    pub kl_image: f64,
    pub kl_sound: f64,
    pub sym_kl: f64,
}

impl LossTerms {
    /// Contributions to the total in the order
    /// `[recon_image, recon_sound, kl_image, kl_sound, sym_kl]`.
    pub fn weighted(&self, w: &LossWeights) -> [f64; 5] {
        [
            w.lambda_image * self.recon_image,
            w.lambda_sound * self.recon_sound,
            w.beta * self.kl_image,
            w.beta * self.kl_sound,
            w.alpha * self.sym_kl,
        ]
    }

    pub fn total(&self, w: &LossWeights) -> f64 {
        self.weighted(w).iter().sum()
    }

    pub(crate) fn scaled(&self, s: f64) -> Self {
        Self {
            recon_image: self.recon_image * s,
            recon_sound: self.recon_sound * s,
            kl_image: self.kl_image * s,
            kl_sound: self.kl_sound * s,
            sym_kl: self.sym_kl * s,
        }
    }

    pub(crate) fn add(&mut self, o: &Self) {
        self.recon_image += o.recon_image;
        self.recon_sound += o.recon_sound;
        self.kl_image += o.kl_image;
        self.kl_sound += o.kl_sound;
        self.sym_kl += o.sym_kl;
    }
}

/// Single-sample AVAE loss: both VAE losses plus α · symmetric KL between
/// the two posteriors.
pub fn avae_loss(
    x_image: &[f64],
    recon_image: &[f64],
    q_image: &DiagonalGaussian,
    x_sound: &[f64],
    recon_sound: &[f64],
    q_sound: &DiagonalGaussian,
    w: &LossWeights,
) -> Result<(f64, LossTerms)> {
    let terms = LossTerms {
        recon_image: reconstruction_loss(x_image, recon_image, ReconKind::Bce)?,
        recon_sound: reconstruction_loss(x_sound, recon_sound, ReconKind::Mse)?,
        kl_image: kl_to_standard_prior(q_image),
        kl_sound: kl_to_standard_prior(q_sound),
        sym_kl: symmetric_kl(q_image, q_sound)?,
    };
    Ok((terms.total(w), terms))
}

// Batched forms. Each returns the summed loss over the batch and the
// gradient of that sum.

pub(crate) fn bce_logits_batch<T: Real>(logits: &ArrayD<T>, x: &ArrayD<T>) -> (f64, ArrayD<T>) {
    let mut sum = 0.0;
    let mut grad = logits.clone();
    Zip::from(&mut grad).and(logits).and(x).for_each(|g, &l, &t| {
        sum += (softplus(l) - t * l).as_f64();
        *g = sigmoid(l) - t;
    });
    (sum, grad)
}

pub(crate) fn mse_batch<T: Real>(y: &ArrayD<T>, x: &ArrayD<T>) -> (f64, ArrayD<T>) {
    let mut sum = 0.0;
    let mut grad = y.clone();
    let two = T::lit(2.0);
    Zip::from(&mut grad).and(y).and(x).for_each(|g, &y, &t| {
        let d = y - t;
        sum += (d * d).as_f64();
        *g = two * d;
    });
    (sum, grad)
}

pub(crate) fn kl_prior_batch<T: Real>(mu: &Array2<T>, lv: &Array2<T>) -> (f64, Array2<T>, Array2<T>) {
    let half = T::lit(0.5);
    let mut sum = 0.0;
    let mut d_lv = lv.clone();
    Zip::from(&mut d_lv).and(mu).and(lv).for_each(|g, &m, &l| {
        let e = l.exp();
        sum += (half * (m * m + e - T::one() - l)).as_f64();
        *g = half * (e - T::one());
    });
    (sum, mu.clone(), d_lv)
}

pub(crate) struct SymKlGrad<T> {
    pub sum: f64,
    pub d_mu1: Array2<T>,
    pub d_lv1: Array2<T>,
    pub d_mu2: Array2<T>,
    pub d_lv2: Array2<T>,
}

pub(crate) fn sym_kl_batch<T: Real>(
    mu1: &Array2<T>,
    lv1: &Array2<T>,
    mu2: &Array2<T>,
    lv2: &Array2<T>,
) -> SymKlGrad<T> {
    let half = T::lit(0.5);
    let mut sum = 0.0;
    let mut d_mu1 = mu1.clone();
    let mut d_lv1 = lv1.clone();
    let mut d_lv2 = lv2.clone();
    for (i, ((&m1, &l1), (&m2, &l2))) in mu1.iter().zip(lv1).zip(mu2.iter().zip(lv2)).enumerate() {
        let delta = m1 - m2;
        let d2 = delta * delta;
        let (e1, e2) = (l1.exp(), l2.exp());
        let (ie1, ie2) = ((-l1).exp(), (-l2).exp());
        sum += (half * ((e1 + d2) * ie2 + (e2 + d2) * ie1) - T::one()).as_f64();
        let (r, c) = (i / mu1.ncols(), i % mu1.ncols());
        d_mu1[[r, c]] = delta * (ie1 + ie2);
        d_lv1[[r, c]] = half * (e1 * ie2 - (e2 + d2) * ie1);
        d_lv2[[r, c]] = half * (e2 * ie1 - (e1 + d2) * ie2);
    }
    let d_mu2 = d_mu1.mapv(|v| -v);
    SymKlGrad {
        sum,
        d_mu1,
        d_lv1,
        d_mu2,
        d_lv2,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn g1(m: f64, var: f64) -> DiagonalGaussian {
        DiagonalGaussian::new(vec![m], vec![var.ln()]).unwrap()
    }

    /// Monte-Carlo estimate of KL(p ‖ q) for 1-d Gaussians from log-density
    /// differences.
    fn kl_mc(p: (f64, f64), q: (f64, f64), n: usize, seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let logpdf = |x: f64, (m, v): (f64, f64)| -0.5 * ((x - m) * (x - m) / v + v.ln());
        (0..n)
            .map(|_| {
                let e: f64 = StandardNormal.sample(&mut rng);
                let x = p.0 + p.1.sqrt() * e;
                logpdf(x, p) - logpdf(x, q)
            })
            .sum::<f64>()
            / n as f64
    }

    #[test]
    fn kl_prior_examples() {
        assert_eq!(kl_to_standard_prior(&DiagonalGaussian::standard(5)), 0.0);
        assert!((kl_to_standard_prior(&g1(1.0, 1.0)) - 0.5).abs() < 1e-12);
        let e = std::f64::consts::E;
        assert!((kl_to_standard_prior(&g1(0.0, e)) - 0.359141).abs() < 1e-6);
        assert!((kl_mc((1.0, 1.0), (0.0, 1.0), 1_000_000, 1) - 0.5).abs() < 1e-2);
        assert!((kl_mc((0.0, e), (0.0, 1.0), 1_000_000, 2) - 0.359141).abs() < 1e-2);
    }

    #[test]
    fn symmetric_kl_examples() {
        assert!((symmetric_kl(&g1(0.0, 1.0), &g1(1.0, 1.0)).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(symmetric_kl(&g1(0.3, 2.0), &g1(0.3, 2.0)).unwrap(), 0.0);
        assert!(matches!(
            symmetric_kl(&g1(0.0, 1.0), &DiagonalGaussian::standard(2)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn reparameterization_examples() {
        let q = DiagonalGaussian::new(vec![0.5, -1.0], vec![0.3, 0.0]).unwrap();
        assert_eq!(reparameterized_sample(&q, &[0.0, 0.0]).unwrap(), q.mean);
        assert_eq!(reparameterized_sample(&q, &[0.0, 2.0]).unwrap()[1], 1.0);
        let z = reparameterized_sample(&g1(0.0, 4.0), &[1.0]).unwrap();
        assert!((z[0] - 2.0).abs() < 1e-12);
        assert!(reparameterized_sample(&q, &[1.0]).is_err());
    }

    #[test]
    fn vae_and_avae_combinations() {
        let q = DiagonalGaussian::standard(3);
        let x = [0.2, 0.4, 0.9];
        assert_eq!(vae_loss(&x, &x, &q, 1.0, 1.0, ReconKind::Mse).unwrap(), 0.0);
        let recon = [0.1, 0.4, 0.8];
        let q2 = g1(0.5, 1.5);
        let pure = vae_loss(&x, &recon, &q2, 0.7, 0.0, ReconKind::Bce).unwrap();
        assert_eq!(pure, 0.7 * reconstruction_loss(&x, &recon, ReconKind::Bce).unwrap());
        assert!(vae_loss(&x, &recon[..2], &q, 1.0, 1.0, ReconKind::Mse).is_err());

        let terms = LossTerms {
            recon_image: 1.0,
            recon_sound: 2.0,
            sym_kl: 0.5,
            ..LossTerms::default()
        };
        let w = LossWeights {
            lambda_image: 1.0,
            lambda_sound: 1.0,
            beta: 1.0,
            alpha: 0.05,
        };
        assert!((terms.total(&w) - 3.025).abs() < 1e-12);
    }

    #[test]
    fn avae_without_alignment_is_sum_of_vaes() {
        let (xi, ri) = ([0.0, 1.0, 0.5], [0.2, 0.7, 0.5]);
        let (xs, rs) = ([0.3, 0.1], [0.25, 0.4]);
        let qi = DiagonalGaussian::new(vec![0.1, -0.4], vec![0.2, -0.3]).unwrap();
        let qs = DiagonalGaussian::new(vec![1.1, 0.4], vec![-0.2, 0.5]).unwrap();
        let w = LossWeights {
            lambda_image: 0.02,
            lambda_sound: 0.015,
            beta: 1e-5,
            alpha: 0.0,
        };
        let (total, terms) = avae_loss(&xi, &ri, &qi, &xs, &rs, &qs, &w).unwrap();
        let sum = vae_loss(&xi, &ri, &qi, w.lambda_image, w.beta, ReconKind::Bce).unwrap()
            + vae_loss(&xs, &rs, &qs, w.lambda_sound, w.beta, ReconKind::Mse).unwrap();
        assert_eq!(total, sum);
        assert!(terms.sym_kl > 0.0);
        let (_, same) = avae_loss(&xi, &ri, &qi, &xs, &rs, &qi, &w).unwrap();
        assert_eq!(same.sym_kl, 0.0);
    }

    #[test]
    fn batched_terms_agree_with_scalar_forms() {
        let mu1 = array![[0.3, -1.2], [0.0, 0.7]];
        let lv1 = array![[0.1, -0.5], [1.0, 0.0]];
        let mu2 = array![[-0.4, 0.2], [0.5, 0.7]];
        let lv2 = array![[0.0, 0.3], [-0.6, 0.2]];
        let (kl, _, _) = kl_prior_batch(&mu1, &lv1);
        let sk = sym_kl_batch(&mu1, &lv1, &mu2, &lv2).sum;
        let mut kl_ref = 0.0;
        let mut sk_ref = 0.0;
        for b in 0..2 {
            let p = DiagonalGaussian::new(mu1.row(b).to_vec(), lv1.row(b).to_vec()).unwrap();
            let q = DiagonalGaussian::new(mu2.row(b).to_vec(), lv2.row(b).to_vec()).unwrap();
            kl_ref += kl_to_standard_prior(&p);
            sk_ref += symmetric_kl(&p, &q).unwrap();
        }
        assert!((kl - kl_ref).abs() < 1e-12);
        assert!((sk - sk_ref).abs() < 1e-12);

        let logits = array![[-2.0, 0.0, 3.5]].into_dyn();
        let x = array![[0.0, 0.5, 1.0]].into_dyn();
        let (bce, _) = bce_logits_batch(&logits, &x);
        let probs: Vec<f64> = logits.iter().map(|&l| sigmoid(l)).collect();
        let bce_ref = reconstruction_loss(&x.iter().copied().collect::<Vec<_>>(), &probs, ReconKind::Bce).unwrap();
        assert!((bce - bce_ref).abs() < 1e-9);
    }

    #[test]
    fn batched_gradients_match_finite_differences() {
        let h = 1e-6;
        let mu1 = array![[0.3, -1.2]];
        let lv1 = array![[0.1, -0.5]];
        let mu2 = array![[-0.4, 0.2]];
        let lv2 = array![[0.0, 0.3]];
        let g = sym_kl_batch(&mu1, &lv1, &mu2, &lv2);
        let f = |m1: &Array2<f64>, l1: &Array2<f64>, m2: &Array2<f64>, l2: &Array2<f64>| {
            sym_kl_batch(m1, l1, m2, l2).sum
        };
        for j in 0..2 {
            let mut a = mu1.clone();
            a[[0, j]] += h;
            let mut b = mu1.clone();
            b[[0, j]] -= h;
            let num = (f(&a, &lv1, &mu2, &lv2) - f(&b, &lv1, &mu2, &lv2)) / (2.0 * h);
            assert!((num - g.d_mu1[[0, j]]).abs() < 1e-6);
            let mut a = lv2.clone();
            a[[0, j]] += h;
            let mut b = lv2.clone();
            b[[0, j]] -= h;
            let num = (f(&mu1, &lv1, &mu2, &a) - f(&mu1, &lv1, &mu2, &b)) / (2.0 * h);
            assert!((num - g.d_lv2[[0, j]]).abs() < 1e-6);
        }
        let (_, _, d_lv) = kl_prior_batch(&mu1, &lv1);
        let mut a = lv1.clone();
        a[[0, 1]] += h;
        let mut b = lv1.clone();
        b[[0, 1]] -= h;
        let num = (kl_prior_batch(&mu1, &a).0 - kl_prior_batch(&mu1, &b).0) / (2.0 * h);
        assert!((num - d_lv[[0, 1]]).abs() < 1e-6);
    }

    fn gaussian(dim: usize) -> impl Strategy<Value = DiagonalGaussian> {
        (
            proptest::collection::vec(-3.0..3.0f64, dim),
            proptest::collection::vec(-2.0..2.0f64, dim),
        )
            .prop_map(|(m, lv)| DiagonalGaussian::new(m, lv).unwrap())
    }

    proptest! {
        #[test]
        fn divergences_are_nonnegative_and_symmetric(p in gaussian(6), q in gaussian(6)) {
            prop_assert!(kl_to_standard_prior(&p) >= 0.0);
            let a = symmetric_kl(&p, &q).unwrap();
            let b = symmetric_kl(&q, &p).unwrap();
            prop_assert!(a >= 0.0);
            prop_assert!((a - b).abs() <= 1e-12 * a.max(1.0));
            prop_assert!(symmetric_kl(&p, &p).unwrap().abs() < 1e-9);
        }
    }
}
