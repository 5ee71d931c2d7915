//! Analytically differentiable stand-ins for a language model. They only
//! serve refine-eval and are the gradient oracles for the refinement loop.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    Backend, BackendCapabilities, BackendError, CapturePhase, GenerationOutcome, RefineEvalOutcome,
};
use crate::imageops::RasterImage;
use crate::refine::ThoughtVectors;

/// Word list the softmax toy decodes into.
pub const TOY_VOCAB: [&str; 8] = [
    "gray", "camera", "icon", "button", "blue", "toolbar", "menu", "label",
];

fn no_generation() -> BackendError {
    BackendError::Capability("toy backends do not generate grounding attention".into())
}

fn check_dims(v: &ThoughtVectors, n: Option<usize>, d: usize) -> Result<(), BackendError> {
    let expected_n = n.unwrap_or(v.count());
    if v.dim() != d || v.count() != expected_n {
        return Err(BackendError::Shape {
            expected: vec![expected_n, d],
            actual: vec![v.count(), v.dim()],
        });
    }
    Ok(())
}

/// A length-`L` "model" whose step-t logits are `W_t · mean(v) + b_t`, with
/// every step independent of the previously decoded tokens.
#[derive(Debug, Clone)]
pub struct ToySoftmaxBackend {
    dim: usize,
    /// `[step][token][dim]`
    weights: Vec<Vec<Vec<f64>>>,
    /// `[step][token]`
    biases: Vec<Vec<f64>>,
}

impl ToySoftmaxBackend {
    pub const SEQUENCE_LEN: usize = 4;

    /// Weights and biases drawn uniformly from [-1, 1] with a seeded ChaCha8.
    pub fn new(seed: u64, dim: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let weights = (0..Self::SEQUENCE_LEN)
            .map(|_| {
                (0..TOY_VOCAB.len())
                    .map(|_| (0..dim).map(|_| rng.random_range(-1.0..=1.0)).collect())
                    .collect()
            })
            .collect();
        let biases = (0..Self::SEQUENCE_LEN)
            .map(|_| {
                (0..TOY_VOCAB.len())
                    .map(|_| rng.random_range(-1.0..=1.0))
                    .collect()
            })
            .collect();
        Self {
            dim,
            weights,
            biases,
        }
    }

    pub fn with_zero_bias(mut self) -> Self {
        for b in &mut self.biases {
            b.iter_mut().for_each(|x| *x = 0.0);
        }
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn weights(&self) -> &[Vec<Vec<f64>>] {
        &self.weights
    }

    pub fn biases(&self) -> &[Vec<f64>] {
        &self.biases
    }

    fn mean(&self, v: &ThoughtVectors) -> Vec<f64> {
        let mut mean = vec![0.0; self.dim];
        for i in 0..v.count() {
            for (m, x) in mean.iter_mut().zip(v.row(i)) {
                *m += x;
            }
        }
        let n = v.count() as f64;
        mean.iter_mut().for_each(|m| *m /= n);
        mean
    }

    fn probabilities(&self, step: usize, mean: &[f64]) -> Vec<f64> {
        let logits: Vec<f64> = self.weights[step]
            .iter()
            .zip(&self.biases[step])
            .map(|(row, b)| row.iter().zip(mean).map(|(w, m)| w * m).sum::<f64>() + b)
            .collect();
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
        let z: f64 = exps.iter().sum();
        exps.into_iter().map(|e| e / z).collect()
    }

    /// Greedy decode: token ids and their probability rows.
    pub fn decode(&self, v: &ThoughtVectors, max_tokens: usize) -> Vec<usize> {
        let mean = self.mean(v);
        (0..Self::SEQUENCE_LEN.min(max_tokens))
            .map(|t| {
                let p = self.probabilities(t, &mean);
                let mut best = 0;
                for (w, &pw) in p.iter().enumerate() {
                    if pw > p[best] {
                        best = w;
                    }
                }
                best
            })
            .collect()
    }
}

impl Backend for ToySoftmaxBackend {
    fn capabilities(&self) -> Result<BackendCapabilities, BackendError> {
        Ok(BackendCapabilities {
            supports_refine: true,
            supports_generation_attention: false,
            supports_prefill_attention: false,
            concurrent_capacity: 64,
            embedding_dim: self.dim,
            layer_count: 1,
        })
    }

    fn initial_thoughts(&self, n_vectors: usize) -> Result<ThoughtVectors, BackendError> {
        ThoughtVectors::zeros(n_vectors, self.dim)
            .map_err(|e| BackendError::Contract(e.to_string()))
    }

    fn generate_grounding(
        &self,
        _image: &RasterImage,
        _instruction: &str,
        _layer_fraction: f64,
        _phase: CapturePhase,
    ) -> Result<GenerationOutcome, BackendError> {
        Err(no_generation())
    }

    fn refine_eval(
        &self,
        _image: &RasterImage,
        _instruction: &str,
        v: &ThoughtVectors,
        max_tokens: usize,
    ) -> Result<RefineEvalOutcome, BackendError> {
        check_dims(v, None, self.dim)?;
        let tokens = self.decode(v, max_tokens.max(1));
        let mean = self.mean(v);
        let m = tokens.len() as f64;

        let mut objective = 0.0;
        // d objective / d mean
        let mut grad_mean = vec![0.0; self.dim];
        for (t, &tok) in tokens.iter().enumerate() {
            let p = self.probabilities(t, &mean);
            objective += p[tok].ln();
            for (w, pw) in p.iter().enumerate() {
                let coeff = (if w == tok { 1.0 } else { 0.0 } - pw) / m;
                for (g, wk) in grad_mean.iter_mut().zip(&self.weights[t][w]) {
                    *g += coeff * wk;
                }
            }
        }
        objective /= m;

        let n = v.count();
        let gradient = (0..n)
            .flat_map(|_| grad_mean.iter().map(move |g| g / n as f64))
            .collect();
        let description = tokens
            .iter()
            .map(|&t| TOY_VOCAB[t])
            .collect::<Vec<_>>()
            .join(" ");
        Ok(RefineEvalOutcome {
            description,
            objective,
            gradient,
            gradient_dims: v.dims(),
        })
    }
}

/// Objective `-||v - target||^2`, maximized at `target`. Not a true
/// log-probability, but its gradient `2 (target - v)` makes the ascent
/// trajectory available in closed form.
#[derive(Debug, Clone)]
pub struct ToyQuadraticBackend {
    target: ThoughtVectors,
}

impl ToyQuadraticBackend {
    pub fn new(target: ThoughtVectors) -> Self {
        Self { target }
    }

    pub fn target(&self) -> &ThoughtVectors {
        &self.target
    }

    pub fn objective(&self, v: &ThoughtVectors) -> f64 {
        -v.distance(&self.target).powi(2)
    }
}

impl Backend for ToyQuadraticBackend {
    fn capabilities(&self) -> Result<BackendCapabilities, BackendError> {
        Ok(BackendCapabilities {
            supports_refine: true,
            supports_generation_attention: false,
            supports_prefill_attention: false,
            concurrent_capacity: 64,
            embedding_dim: self.target.dim(),
            layer_count: 1,
        })
    }

    fn initial_thoughts(&self, n_vectors: usize) -> Result<ThoughtVectors, BackendError> {
        ThoughtVectors::zeros(n_vectors, self.target.dim())
            .map_err(|e| BackendError::Contract(e.to_string()))
    }

    fn generate_grounding(
        &self,
        _image: &RasterImage,
        _instruction: &str,
        _layer_fraction: f64,
        _phase: CapturePhase,
    ) -> Result<GenerationOutcome, BackendError> {
        Err(no_generation())
    }

    fn refine_eval(
        &self,
        _image: &RasterImage,
        instruction: &str,
        v: &ThoughtVectors,
        _max_tokens: usize,
    ) -> Result<RefineEvalOutcome, BackendError> {
        check_dims(v, Some(self.target.count()), self.target.dim())?;
        let gradient = self
            .target
            .values()
            .iter()
            .zip(v.values())
            .map(|(t, x)| 2.0 * (t - x))
            .collect();
        let distance = v.distance(&self.target);
        Ok(RefineEvalOutcome {
            description: format!("{instruction} (distance {distance:.4})"),
            objective: self.objective(v),
            gradient,
            gradient_dims: v.dims(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blank() -> RasterImage {
        RasterImage::filled(1, 1, [0, 0, 0]).unwrap()
    }

    #[test]
    fn zero_vectors_zero_bias_give_uniform_objective() {
        let toy = ToySoftmaxBackend::new(42, 8).with_zero_bias();
        let v = ThoughtVectors::zeros(6, 8).unwrap();
        let out = toy.refine_eval(&blank(), "x", &v, 64).unwrap();
        assert!((out.objective - (1.0f64 / 8.0).ln()).abs() < 1e-12);
        assert!((out.objective + 2.0794).abs() < 1e-4);
        assert_eq!(out.description.split(' ').count(), 4);
    }

    #[test]
    fn quadratic_optimum_has_zero_gradient() {
        let target = ThoughtVectors::new(2, 2, vec![1.0, -2.0, 0.5, 3.0]).unwrap();
        let toy = ToyQuadraticBackend::new(target.clone());
        let out = toy.refine_eval(&blank(), "x", &target, 64).unwrap();
        assert_eq!(out.objective, 0.0);
        assert!(out.gradient.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn dim_mismatch_is_shape_error() {
        let toy = ToySoftmaxBackend::new(42, 8);
        let v = ThoughtVectors::zeros(6, 4).unwrap();
        assert!(matches!(
            toy.refine_eval(&blank(), "x", &v, 64),
            Err(BackendError::Shape { .. })
        ));
        let quad = ToyQuadraticBackend::new(ThoughtVectors::zeros(2, 4).unwrap());
        assert!(matches!(
            quad.refine_eval(&blank(), "x", &v, 64),
            Err(BackendError::Shape { .. })
        ));
    }

    #[test]
    fn token_cap_truncates_description() {
        let toy = ToySoftmaxBackend::new(42, 8);
        let v = ThoughtVectors::zeros(6, 8).unwrap();
        let out = toy.refine_eval(&blank(), "x", &v, 2).unwrap();
        assert_eq!(out.description.split(' ').count(), 2);
    }

    #[test]
    fn no_generation_support() {
        let toy = ToySoftmaxBackend::new(42, 8);
        assert!(!toy.capabilities().unwrap().supports_generation_attention);
        assert!(matches!(
            toy.generate_grounding(&blank(), "x", 0.7, CapturePhase::Generation),
            Err(BackendError::Capability(_))
        ));
    }
}
