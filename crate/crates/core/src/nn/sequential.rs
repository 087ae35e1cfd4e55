use ndarray::{ArrayD, IxDyn, Zip};
use sha2::{Digest, Sha256};

use super::{Layer, Param, Real, Tensors};
use crate::error::{Error, Result};

/// Instrumentation for purity checks: every training-mode forward, backward
/// pass, and optimizer write is counted.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct NetCounters {
    pub train_forwards: u64,
    pub backward_passes: u64,
    pub param_writes: u64,
}

impl NetCounters {
    pub fn total(&self) -> u64 {
        self.train_forwards + self.backward_passes + self.param_writes
    }
}

#[derive(Clone, Debug)]
pub struct Sequential<T> {
    pub layers: Vec<Layer<T>>,
    counters: NetCounters,
}

impl<T: Real> Sequential<T> {
    pub fn new(layers: Vec<Layer<T>>) -> Self {
        Self {
            layers,
            counters: NetCounters::default(),
        }
    }

    pub fn counters(&self) -> NetCounters {
        self.counters
    }

    pub fn infer(&self, x: &ArrayD<T>) -> ArrayD<T> {
        let mut out = None;
        for layer in &self.layers {
            out = Some(layer.infer(out.as_ref().unwrap_or(x)));
        }
        out.unwrap_or_else(|| x.clone())
    }

    pub fn forward_train(&mut self, x: &ArrayD<T>) -> ArrayD<T> {
        self.counters.train_forwards += 1;
        let mut out = x.clone();
        for layer in &mut self.layers {
            out = layer.forward_train(&out);
        }
        out
    }

    /// Backpropagates `grad` (gradient w.r.t. the output of the last
    /// `forward_train`), accumulating parameter gradients. Returns the
    /// gradient w.r.t. the input.
    pub fn backward(&mut self, grad: &ArrayD<T>) -> ArrayD<T> {
        self.counters.backward_passes += 1;
        let mut g = grad.clone();
        for layer in self.layers.iter_mut().rev() {
            g = layer.backward(&g);
        }
        g
    }

    pub fn params(&self) -> Vec<&Param<T>> {
        self.layers.iter().flat_map(|l| l.params()).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        self.layers.iter_mut().flat_map(|l| l.params_mut()).collect()
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    pub fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    pub fn grads_are_zero(&self) -> bool {
        self.params()
            .iter()
            .all(|p| p.grad.iter().all(|g| *g == T::zero()))
    }

    pub(crate) fn note_param_write(&mut self) {
        self.counters.param_writes += 1;
    }

    /// All trainable parameters followed by all buffers, in layer order.
    pub fn tensors(&self) -> Tensors<T> {
        let mut out = Vec::new();
        for layer in &self.layers {
            for p in layer.params() {
                out.push((p.value.shape().to_vec(), p.value.iter().copied().collect()));
            }
            for b in layer.buffers() {
                out.push((vec![b.len()], b.to_vec()));
            }
        }
        out
    }

    pub fn load_tensors(&mut self, tensors: &[(Vec<usize>, Vec<T>)]) -> Result<()> {
        let mut it = tensors.iter();
        for layer in &mut self.layers {
            for p in layer.params_mut() {
                let (shape, data) = it.next().ok_or(Error::DimensionMismatch {
                    expected: 1,
                    actual: 0,
                })?;
                if shape.as_slice() != p.value.shape() {
                    return Err(Error::shape(p.value.shape(), shape));
                }
                p.value = ArrayD::from_shape_vec(IxDyn(shape), data.clone())
                    .map_err(|_| Error::shape(shape, &[data.len()]))?;
                p.zero_grad();
            }
            for b in layer.buffers_mut() {
                let (shape, data) = it.next().ok_or(Error::DimensionMismatch {
                    expected: 1,
                    actual: 0,
                })?;
                if shape.as_slice() != [b.len()] {
                    return Err(Error::shape(&[b.len()], shape));
                }
                b.assign(&ndarray::ArrayView1::from(data.as_slice()));
            }
        }
        if it.next().is_some() {
            return Err(Error::Config("checkpoint has more tensors than the network".into()));
        }
        Ok(())
    }

    pub fn hash_into(&self, hasher: &mut Sha256) {
        let mut buf = Vec::new();
        for (shape, data) in self.tensors() {
            buf.clear();
            for d in shape {
                buf.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for v in data {
                v.write_le(&mut buf);
            }
            hasher.update(&buf);
        }
    }

    /// SHA-256 over every parameter and buffer.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        self.hash_into(&mut h);
        hex::encode(h.finalize())
    }

    /// Hard copy of parameters and buffers from `source`.
    pub fn copy_from(&mut self, source: &Sequential<T>) -> Result<()> {
        self.load_tensors(&source.tensors())?;
        self.note_param_write();
        Ok(())
    }
}

/// `target ← τ·source + (1 − τ)·target`, elementwise.
pub fn soft_update<T: Real>(target: &mut Sequential<T>, source: &Sequential<T>, tau: f64) -> Result<()> {
    let src = source.params();
    let mut dst = target.params_mut();
    if src.len() != dst.len() {
        return Err(Error::DimensionMismatch {
            expected: dst.len(),
            actual: src.len(),
        });
    }
    for (d, s) in dst.iter().zip(&src) {
        if d.value.shape() != s.value.shape() {
            return Err(Error::shape(d.value.shape(), s.value.shape()));
        }
    }
    let tau = T::lit(tau);
    let keep = T::one() - tau;
    for (d, s) in dst.iter_mut().zip(src) {
        Zip::from(&mut d.value)
            .and(&s.value)
            .for_each(|t, &v| *t = tau * v + keep * *t);
    }
    target.note_param_write();
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, Linear};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn net(seed: u64) -> Sequential<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Sequential::new(vec![
            Layer::Linear(Linear::new(&mut rng, 3, 4)),
            Layer::activation(Activation::Tanh),
            Layer::Linear(Linear::new(&mut rng, 4, 2)),
        ])
    }

    #[test]
    fn soft_update_extremes() {
        let source = net(1);
        let mut target = net(2);
        let before = target.tensors();
        soft_update(&mut target, &source, 0.0).unwrap();
        assert_eq!(target.tensors(), before);
        soft_update(&mut target, &source, 1.0).unwrap();
        assert_eq!(target.tensors(), source.tensors());
    }

    #[test]
    fn soft_update_arithmetic() {
        let mut source = net(1);
        let mut target = net(2);
        for p in source.params_mut() {
            p.value.fill(1.0);
        }
        for p in target.params_mut() {
            p.value.fill(0.0);
        }
        soft_update(&mut target, &source, 1e-3).unwrap();
        assert!(target.params().iter().all(|p| p.value.iter().all(|&v| v == 0.001)));
    }

    #[test]
    fn soft_update_rejects_mismatched_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let other = Sequential::<f64>::new(vec![Layer::Linear(Linear::new(&mut rng, 2, 2))]);
        let mut target = net(0);
        assert!(soft_update(&mut target, &other, 0.5).is_err());
    }

    #[test]
    fn digest_tracks_parameters() {
        let mut a = net(7);
        let b = net(7);
        assert_eq!(a.digest(), b.digest());
        a.params_mut()[0].value[[0, 0]] += 1e-6;
        assert_ne!(a.digest(), b.digest());
    }

    #[test]
    fn tensors_round_trip() {
        let a = net(3);
        let mut b = net(4);
        b.load_tensors(&a.tensors()).unwrap();
        assert_eq!(a.digest(), b.digest());
    }
}
