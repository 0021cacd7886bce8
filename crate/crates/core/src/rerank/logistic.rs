use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogisticConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for LogisticConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1.0,
            epochs: 1000,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceScorer {
    pub weights: Vec<f64>,
    pub bias: f64,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl ReferenceScorer {
    /// Duplicate probability for one feature vector.
    pub fn score(&self, features: &[f64]) -> f64 {
        let z = self.bias + self.weights.iter().zip(features).map(|(w, x)| w * x).sum::<f64>();
        sigmoid(z)
    }
}

/// Full-batch gradient descent on mean log-loss for a fixed number of epochs.
/// Weights start from small seeded noise; the bias starts at zero.
pub fn fit_logistic(features: &[Vec<f64>], labels: &[bool], config: &LogisticConfig) -> Result<(Vec<f64>, f64)> {
    if features.is_empty() {
        return Err(Error::InsufficientData("no training examples".to_string()));
    }
    if features.len() != labels.len() {
        return Err(Error::InvalidInput(format!(
            "{} feature rows but {} labels",
            features.len(),
            labels.len()
        )));
    }
    let dim = features[0].len();
    if features.iter().any(|row| row.len() != dim) {
        return Err(Error::InvalidInput("ragged feature rows".to_string()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut weights: Vec<f64> = (0..dim).map(|_| rng.gen_range(-0.01..0.01)).collect();
    let mut bias = 0.0;
    let n = features.len() as f64;
    let mut grad = vec![0.0; dim];
    for _ in 0..config.epochs {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut grad_bias = 0.0;
        for (row, &label) in features.iter().zip(labels) {
            let z = bias + weights.iter().zip(row).map(|(w, x)| w * x).sum::<f64>();
            let err = sigmoid(z) - if label { 1.0 } else { 0.0 };
            for (g, x) in grad.iter_mut().zip(row) {
                *g += err * x;
            }
            grad_bias += err;
        }
        for (w, g) in weights.iter_mut().zip(&grad) {
            *w -= config.learning_rate * g / n;
        }
        bias -= config.learning_rate * grad_bias / n;
    }
    Ok((weights, bias))
}
