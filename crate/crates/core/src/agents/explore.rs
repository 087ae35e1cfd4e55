use rand::{Rng, RngCore};
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// Ornstein-Uhlenbeck noise: `x ← x + θ(μ − x)dt + σ√dt·n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OuProcess {
    pub theta: f64,
    pub mu: f64,
    pub sigma: f64,
    pub dt: f64,
    pub state: Vec<f64>,
}

impl OuProcess {
    pub fn new(dim: usize, theta: f64, sigma: f64) -> Self {
        Self {
            theta,
            mu: 0.0,
            sigma,
            dt: 1.0,
            state: vec![0.0; dim],
        }
    }

    pub fn reset(&mut self) {
        self.state.fill(self.mu);
    }

    /// Advances with the given standard-normal draws.
    pub fn step_with(&mut self, normals: &[f64]) -> &[f64] {
        let diffusion = self.sigma * self.dt.sqrt();
        for (x, n) in self.state.iter_mut().zip(normals) {
            *x += self.theta * (self.mu - *x) * self.dt + diffusion * n;
        }
        &self.state
    }

    pub fn sample(&mut self, rng: &mut dyn RngCore) -> &[f64] {
        let normals: Vec<f64> = (0..self.state.len()).map(|_| rng.sample(StandardNormal)).collect();
        self.step_with(&normals)
    }
}

/// Linear decay from `start` to `end` over `decay_frames`, then constant.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub end: f64,
    pub decay_frames: usize,
}

impl EpsilonSchedule {
    pub fn value(&self, frame: usize) -> f64 {
        if self.decay_frames == 0 || frame >= self.decay_frames {
            return self.end;
        }
        let f = frame as f64 / self.decay_frames as f64;
        self.start + (self.end - self.start) * f
    }
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f32]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

pub fn epsilon_greedy(q: &[f32], eps: f64, rng: &mut dyn RngCore) -> usize {
    if eps > 0.0 && rng.random::<f64>() < eps {
        rng.random_range(0..q.len())
    } else {
        argmax(q)
    }
}
