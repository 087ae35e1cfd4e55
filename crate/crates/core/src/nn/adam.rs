use ndarray::{ArrayD, IxDyn, Zip};
use serde::{Deserialize, Serialize};

use super::{Real, Sequential, Tensors};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_learning_rate(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            ..Self::default()
        }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Bias-corrected Adam without weight decay. Moment buffers are created on
/// the first step and follow the parameter order of the networks passed in.
#[derive(Clone, Debug)]
pub struct Adam<T> {
    pub config: AdamConfig,
    steps: u64,
    moments: Vec<(ArrayD<T>, ArrayD<T>)>,
}

impl<T: Real> Adam<T> {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            steps: 0,
            moments: Vec::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn step(&mut self, nets: &mut [&mut Sequential<T>]) {
        self.steps += 1;
        let c = self.config;
        let t = self.steps as i32;
        let bc1 = 1.0 - c.beta1.powi(t);
        let bc2 = 1.0 - c.beta2.powi(t);
        let step_size = T::lit(c.learning_rate / bc1);
        let bc2_sqrt = T::lit(bc2.sqrt());
        let (b1, b2, eps) = (T::lit(c.beta1), T::lit(c.beta2), T::lit(c.eps));
        let (one_b1, one_b2) = (T::one() - b1, T::one() - b2);

        let mut idx = 0;
        for net in nets.iter_mut() {
            for p in net.params_mut() {
                if idx == self.moments.len() {
                    let z = ArrayD::zeros(p.value.raw_dim());
                    self.moments.push((z.clone(), z));
                }
                let (m, v) = &mut self.moments[idx];
                Zip::from(&mut p.value)
                    .and(&p.grad)
                    .and(m)
                    .and(v)
                    .for_each(|w, &g, m, v| {
                        *m = b1 * *m + one_b1 * g;
                        *v = b2 * *v + one_b2 * g * g;
                        let denom = v.sqrt() / bc2_sqrt + eps;
                        *w -= step_size * *m / denom;
                    });
                idx += 1;
            }
            net.note_param_write();
        }
    }

    /// `(step, [(shape, m), (shape, v), ...])` for checkpoints.
    pub fn state(&self) -> (u64, Tensors<T>) {
        let mut out = Vec::with_capacity(self.moments.len() * 2);
        for (m, v) in &self.moments {
            out.push((m.shape().to_vec(), m.iter().copied().collect()));
            out.push((v.shape().to_vec(), v.iter().copied().collect()));
        }
        (self.steps, out)
    }

    pub fn load_state(&mut self, steps: u64, tensors: &[(Vec<usize>, Vec<T>)]) -> Result<()> {
        if !tensors.len().is_multiple_of(2) {
            return Err(Error::Config("optimizer state must hold moment pairs".into()));
        }
        let to_array = |(shape, data): &(Vec<usize>, Vec<T>)| {
            ArrayD::from_shape_vec(IxDyn(shape), data.clone())
                .map_err(|_| Error::shape(shape, &[data.len()]))
        };
        self.moments = tensors
            .chunks(2)
            .map(|pair| Ok((to_array(&pair[0])?, to_array(&pair[1])?)))
            .collect::<Result<_>>()?;
        self.steps = steps;
        Ok(())
    }
}

/// Rescales gradients so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_grad_norm<T: Real>(nets: &mut [&mut Sequential<T>], max_norm: f64) -> f64 {
    let total: f64 = nets
        .iter()
        .flat_map(|n| n.params())
        .flat_map(|p| p.grad.iter().map(|g| g.as_f64() * g.as_f64()))
        .sum::<f64>()
        .sqrt();
    if total > max_norm && total > 0.0 {
        let scale = T::lit(max_norm / total);
        for net in nets.iter_mut() {
            for p in net.params_mut() {
                p.grad.mapv_inplace(|g| g * scale);
            }
        }
    }
    total
}
