use ndarray::{Array1, Array2, ArrayD, ArrayView2, Axis, Ix2, IxDyn, Zip};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::conv::uniform_param;
use super::{sigmoid, Conv2d, ConvTranspose2d, Param, Real};

fn as2<T: Real>(x: &ArrayD<T>) -> ArrayView2<'_, T> {
    x.view()
        .into_dimensionality::<Ix2>()
        .unwrap_or_else(|_| panic!("expected a 2-d tensor, got shape {:?}", x.shape()))
}

#[derive(Clone, Debug)]
pub struct Linear<T> {
    /// `(in, out)`
    pub weight: Param<T>,
    pub bias: Param<T>,
    cache: Option<Array2<T>>,
}

impl<T: Real> Linear<T> {
    pub fn new<R: Rng + ?Sized>(rng: &mut R, inputs: usize, outputs: usize) -> Self {
        Self {
            weight: uniform_param(rng, &[inputs, outputs], inputs),
            bias: uniform_param(rng, &[outputs], inputs),
            cache: None,
        }
    }

    /// Weights and biases drawn from `U(-bound, bound)`.
    pub fn with_bound<R: Rng + ?Sized>(rng: &mut R, inputs: usize, outputs: usize, bound: f64) -> Self {
        let draw = |rng: &mut R, n: usize| -> Vec<T> {
            (0..n).map(|_| T::lit(rng.random_range(-bound..bound))).collect()
        };
        let w = draw(rng, inputs * outputs);
        let b = draw(rng, outputs);
        Self {
            weight: Param::new(ArrayD::from_shape_vec(IxDyn(&[inputs, outputs]), w).unwrap()),
            bias: Param::new(ArrayD::from_shape_vec(IxDyn(&[outputs]), b).unwrap()),
            cache: None,
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.value.shape()[0]
    }

    pub fn outputs(&self) -> usize {
        self.weight.value.shape()[1]
    }

    pub fn infer(&self, x: &ArrayD<T>) -> ArrayD<T> {
        let w = as2(&self.weight.value);
        let mut y = as2(x).dot(&w);
        let b = self.bias.value.view().into_dimensionality::<ndarray::Ix1>().unwrap();
        y += &b;
        y.into_dyn()
    }

    pub fn forward_train(&mut self, x: &ArrayD<T>) -> ArrayD<T> {
        let y = self.infer(x);
        self.cache = Some(as2(x).to_owned());
        y
    }

    pub fn backward(&mut self, grad: &ArrayD<T>) -> ArrayD<T> {
        let x = self.cache.take().expect("linear backward without forward");
        let g = as2(grad);
        self.weight.grad += &x.t().dot(&g).into_dyn();
        self.bias.grad += &g.sum_axis(Axis(0)).into_dyn();
        g.dot(&as2(&self.weight.value).t()).into_dyn()
    }
}

#[derive(Clone, Debug)]
pub struct BatchNorm1d<T> {
    pub gamma: Param<T>,
    pub beta: Param<T>,
    pub running_mean: Array1<T>,
    pub running_var: Array1<T>,
    pub momentum: f64,
    pub eps: f64,
    cache: Option<(Array2<T>, Array1<T>)>,
}

impl<T: Real> BatchNorm1d<T> {
    pub fn new(features: usize) -> Self {
        Self {
            gamma: Param::new(ArrayD::from_elem(IxDyn(&[features]), T::one())),
            beta: Param::new(ArrayD::zeros(IxDyn(&[features]))),
            running_mean: Array1::zeros(features),
            running_var: Array1::ones(features),
            momentum: 0.1,
            eps: 1e-5,
            cache: None,
        }
    }

    fn affine(&self, mut xhat: Array2<T>) -> ArrayD<T> {
        let g = self.gamma.value.view().into_dimensionality::<ndarray::Ix1>().unwrap();
        let b = self.beta.value.view().into_dimensionality::<ndarray::Ix1>().unwrap();
        xhat *= &g;
        xhat += &b;
        xhat.into_dyn()
    }

    /// Uses running statistics.
    pub fn infer(&self, x: &ArrayD<T>) -> ArrayD<T> {
        let eps = T::lit(self.eps);
        let inv_std = self.running_var.mapv(|v| T::one() / (v + eps).sqrt());
        let xhat = (&as2(x) - &self.running_mean) * &inv_std;
        self.affine(xhat)
    }

    /// Uses batch statistics and updates the running estimates.
    pub fn forward_train(&mut self, x: &ArrayD<T>) -> ArrayD<T> {
        let x = as2(x);
        let n = x.nrows();
        let nf = T::lit(n as f64);
        let mean = x.sum_axis(Axis(0)) / nf;
        let centered = &x - &mean;
        let var = centered.mapv(|v| v * v).sum_axis(Axis(0)) / nf;
        let eps = T::lit(self.eps);
        let inv_std = var.mapv(|v| T::one() / (v + eps).sqrt());
        let xhat = centered * &inv_std;

        let m = T::lit(self.momentum);
        let unbias = if n > 1 { T::lit(n as f64 / (n as f64 - 1.0)) } else { T::one() };
        Zip::from(&mut self.running_mean)
            .and(&mean)
            .for_each(|r, &b| *r = (T::one() - m) * *r + m * b);
        Zip::from(&mut self.running_var)
            .and(&var)
            .for_each(|r, &b| *r = (T::one() - m) * *r + m * b * unbias);

        self.cache = Some((xhat.clone(), inv_std));
        self.affine(xhat)
    }

    pub fn backward(&mut self, grad: &ArrayD<T>) -> ArrayD<T> {
        let (xhat, inv_std) = self.cache.take().expect("batch norm backward without forward");
        let g = as2(grad);
        let n = T::lit(g.nrows() as f64);
        let sum_g = g.sum_axis(Axis(0));
        let sum_gx = (&g * &xhat).sum_axis(Axis(0));
        self.beta.grad += &sum_g.clone().into_dyn();
        self.gamma.grad += &sum_gx.clone().into_dyn();

        let gamma = self.gamma.value.view().into_dimensionality::<ndarray::Ix1>().unwrap();
        let scale = &gamma * &inv_std / n;
        let mut dx = &g * n - &sum_g - &(&xhat * &sum_gx);
        dx *= &scale;
        dx.into_dyn()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Swish,
    Sigmoid,
    Tanh,
}

impl Activation {
    pub fn apply<T: Real>(self, x: T) -> T {
        match self {
            Activation::Relu => x.max(T::zero()),
            Activation::Swish => x * sigmoid(x),
            Activation::Sigmoid => sigmoid(x),
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative from the cached auxiliary value and the output `y`. The
    /// auxiliary value is the input, except for swish where it is `σ(x)`.
    fn derivative<T: Real>(self, aux: T, y: T) -> T {
        match self {
            Activation::Relu => {
                if aux > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Activation::Swish => aux + y * (T::one() - aux),
            Activation::Sigmoid => y * (T::one() - y),
            Activation::Tanh => T::one() - y * y,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ActivationLayer<T> {
    pub kind: Activation,
    cache: Option<(ArrayD<T>, ArrayD<T>)>,
}

impl<T: Real> ActivationLayer<T> {
    pub fn new(kind: Activation) -> Self {
        Self { kind, cache: None }
    }

    pub fn infer(&self, x: &ArrayD<T>) -> ArrayD<T> {
        let kind = self.kind;
        x.mapv(|v| kind.apply(v))
    }

    pub fn forward_train(&mut self, x: &ArrayD<T>) -> ArrayD<T> {
        let (aux, y) = match self.kind {
            Activation::Swish => {
                let s = x.mapv(sigmoid);
                let y = &s * x;
                (s, y)
            }
            Activation::Relu => (x.clone(), self.infer(x)),
            _ => {
                let y = self.infer(x);
                (ArrayD::zeros(IxDyn(&[0])), y)
            }
        };
        self.cache = Some((aux, y.clone()));
        y
    }

    pub fn backward(&mut self, grad: &ArrayD<T>) -> ArrayD<T> {
        let (aux, y) = self.cache.take().expect("activation backward without forward");
        let kind = self.kind;
        let mut out = grad.clone();
        if aux.len() == y.len() {
            Zip::from(&mut out)
                .and(&aux)
                .and(&y)
                .for_each(|g, &a, &y| *g *= kind.derivative(a, y));
        } else {
            Zip::from(&mut out)
                .and(&y)
                .for_each(|g, &y| *g *= kind.derivative(T::zero(), y));
        }
        out
    }
}

/// Reshapes each sample to `shape`, keeping the batch axis.
#[derive(Clone, Debug)]
pub struct Reshape {
    pub shape: Vec<usize>,
    cache: Option<Vec<usize>>,
}

impl Reshape {
    pub fn new(shape: Vec<usize>) -> Self {
        Self { shape, cache: None }
    }

    fn run<T: Real>(&self, x: &ArrayD<T>) -> ArrayD<T> {
        let mut dims = vec![x.shape()[0]];
        dims.extend_from_slice(&self.shape);
        x.as_standard_layout()
            .into_owned()
            .into_shape_with_order(IxDyn(&dims))
            .unwrap_or_else(|_| panic!("cannot reshape {:?} into {:?}", x.shape(), dims))
    }

    pub fn infer<T: Real>(&self, x: &ArrayD<T>) -> ArrayD<T> {
        self.run(x)
    }

    pub fn forward_train<T: Real>(&mut self, x: &ArrayD<T>) -> ArrayD<T> {
        self.cache = Some(x.shape().to_vec());
        self.run(x)
    }

    pub fn backward<T: Real>(&mut self, grad: &ArrayD<T>) -> ArrayD<T> {
        let shape = self.cache.take().expect("reshape backward without forward");
        grad.as_standard_layout()
            .into_owned()
            .into_shape_with_order(IxDyn(&shape))
            .unwrap()
    }
}

#[derive(Clone, Debug)]
pub enum Layer<T> {
    Linear(Linear<T>),
    Conv2d(Conv2d<T>),
    ConvTranspose2d(ConvTranspose2d<T>),
    BatchNorm1d(BatchNorm1d<T>),
    Activation(ActivationLayer<T>),
    Reshape(Reshape),
}

impl<T: Real> Layer<T> {
    pub fn activation(kind: Activation) -> Self {
        Layer::Activation(ActivationLayer::new(kind))
    }

    pub fn infer(&self, x: &ArrayD<T>) -> ArrayD<T> {
        match self {
            Layer::Linear(l) => l.infer(x),
            Layer::Conv2d(l) => l.infer(x),
            Layer::ConvTranspose2d(l) => l.infer(x),
            Layer::BatchNorm1d(l) => l.infer(x),
            Layer::Activation(l) => l.infer(x),
            Layer::Reshape(l) => l.infer(x),
        }
    }

    pub fn forward_train(&mut self, x: &ArrayD<T>) -> ArrayD<T> {
        match self {
            Layer::Linear(l) => l.forward_train(x),
            Layer::Conv2d(l) => l.forward_train(x),
            Layer::ConvTranspose2d(l) => l.forward_train(x),
            Layer::BatchNorm1d(l) => l.forward_train(x),
            Layer::Activation(l) => l.forward_train(x),
            Layer::Reshape(l) => l.forward_train(x),
        }
    }

    pub fn backward(&mut self, grad: &ArrayD<T>) -> ArrayD<T> {
        match self {
            Layer::Linear(l) => l.backward(grad),
            Layer::Conv2d(l) => l.backward(grad),
            Layer::ConvTranspose2d(l) => l.backward(grad),
            Layer::BatchNorm1d(l) => l.backward(grad),
            Layer::Activation(l) => l.backward(grad),
            Layer::Reshape(l) => l.backward(grad),
        }
    }

    pub fn params(&self) -> Vec<&Param<T>> {
        match self {
            Layer::Linear(l) => vec![&l.weight, &l.bias],
            Layer::Conv2d(l) => l.params().to_vec(),
            Layer::ConvTranspose2d(l) => l.params().to_vec(),
            Layer::BatchNorm1d(l) => vec![&l.gamma, &l.beta],
            Layer::Activation(_) | Layer::Reshape(_) => Vec::new(),
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        match self {
            Layer::Linear(l) => vec![&mut l.weight, &mut l.bias],
            Layer::Conv2d(l) => l.params_mut().into_iter().collect(),
            Layer::ConvTranspose2d(l) => l.params_mut().into_iter().collect(),
            Layer::BatchNorm1d(l) => vec![&mut l.gamma, &mut l.beta],
            Layer::Activation(_) | Layer::Reshape(_) => Vec::new(),
        }
    }

    /// Non-trainable state (batch-norm running statistics).
    pub fn buffers(&self) -> Vec<&Array1<T>> {
        match self {
            Layer::BatchNorm1d(l) => vec![&l.running_mean, &l.running_var],
            _ => Vec::new(),
        }
    }

    pub fn buffers_mut(&mut self) -> Vec<&mut Array1<T>> {
        match self {
            Layer::BatchNorm1d(l) => vec![&mut l.running_mean, &mut l.running_var],
            _ => Vec::new(),
        }
    }
}
