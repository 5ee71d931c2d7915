//! Instruction refinement by gradient ascent on latent thought vectors.
//!
//! The backend decodes a description with the thought vectors appended to
//! its input and reports the mean token log-probability of that description
//! together with the gradient with respect to the vectors. This module owns
//! the update rule and the bookkeeping.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{Backend, BackendError};
use crate::imageops::RasterImage;

#[derive(Debug, Error)]
pub enum RefineError {
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("shape mismatch: expected {expected:?}, got {actual:?}")]
    Shape {
        expected: (usize, usize),
        actual: (usize, usize),
    },
    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },
    #[error("invalid refine config: {0}")]
    Config(String),
    #[error("backend failed at refinement step {step}: {source}")]
    Backend {
        step: usize,
        #[source]
        source: BackendError,
    },
}

/// `n` learnable vectors of embedding dimension `d`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ThoughtVectors {
    n: usize,
    d: usize,
    values: Vec<f64>,
}

impl ThoughtVectors {
    pub fn new(n: usize, d: usize, values: Vec<f64>) -> Result<Self, RefineError> {
        if n == 0 || d == 0 {
            return Err(RefineError::Empty("thought vectors need n >= 1 and d >= 1"));
        }
        if values.len() != n * d {
            return Err(RefineError::Shape {
                expected: (n, d),
                actual: (values.len() / d.max(1), d),
            });
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(RefineError::NonFinite { index });
        }
        Ok(Self { n, d, values })
    }

    pub fn zeros(n: usize, d: usize) -> Result<Self, RefineError> {
        Self::new(n, d, vec![0.0; n * d])
    }

    pub fn count(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.n, self.d)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.d..(i + 1) * self.d]
    }

    /// Euclidean distance to `other` (same shape assumed).
    pub fn distance(&self, other: &ThoughtVectors) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefineConfig {
    pub n_vectors: usize,
    pub steps: usize,
    pub learning_rate: f64,
    pub max_description_tokens: usize,
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self {
            n_vectors: 6,
            steps: 5,
            learning_rate: 0.1,
            max_description_tokens: 64,
        }
    }
}

impl RefineConfig {
    pub fn validate(&self) -> Result<(), RefineError> {
        if self.n_vectors == 0 {
            return Err(RefineError::Config("n_vectors must be >= 1".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(RefineError::Config(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.max_description_tokens == 0 {
            return Err(RefineError::Config(
                "max_description_tokens must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub step: usize,
    pub objective: f64,
    pub description: String,
}

/// Objective value and description at every step, initial one included.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceTrace {
    pub steps: Vec<TraceStep>,
}

impl ConfidenceTrace {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn objectives(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.objective).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RefinementMode {
    /// Raw instruction passed through untouched.
    Disabled,
    /// One description decode with the initial vectors, no optimization.
    NoThink,
    /// Full gradient-ascent refinement.
    Optimized,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinedInstruction {
    pub original: String,
    /// Text handed to grounding. Equals `original` when refinement is off.
    pub visual_description: String,
    pub mode: RefinementMode,
    pub trace: ConfidenceTrace,
}

impl RefinedInstruction {
    pub fn passthrough(instruction: &str) -> Self {
        Self {
            original: instruction.to_string(),
            visual_description: instruction.to_string(),
            mode: RefinementMode::Disabled,
            trace: ConfidenceTrace::default(),
        }
    }
}

/// Mean of per-token log-probabilities.
pub fn sequence_confidence(logprobs: &[f64]) -> Result<f64, RefineError> {
    if logprobs.is_empty() {
        return Err(RefineError::Empty("no token log-probabilities"));
    }
    Ok(logprobs.iter().sum::<f64>() / logprobs.len() as f64)
}

/// One gradient-ascent step: `v + eta * grad`.
pub fn ascend(
    v: &ThoughtVectors,
    grad: &[f64],
    grad_dims: (usize, usize),
    eta: f64,
) -> Result<ThoughtVectors, RefineError> {
    if grad_dims != v.dims() || grad.len() != v.values.len() {
        return Err(RefineError::Shape {
            expected: v.dims(),
            actual: grad_dims,
        });
    }
    if let Some(index) = grad.iter().position(|g| !g.is_finite()) {
        return Err(RefineError::NonFinite { index });
    }
    if !(eta.is_finite() && eta > 0.0) {
        return Err(RefineError::Config(format!(
            "learning rate must be positive, got {eta}"
        )));
    }
    let values = v
        .values
        .iter()
        .zip(grad)
        .map(|(x, g)| x + eta * g)
        .collect();
    ThoughtVectors::new(v.n, v.d, values)
}

/// Runs `cfg.steps` rounds of gradient ascent on the thought vectors and
/// returns the final description with the full objective trace.
pub fn refine_instruction<B: Backend + ?Sized>(
    backend: &B,
    image: &RasterImage,
    instruction: &str,
    cfg: &RefineConfig,
) -> Result<RefinedInstruction, RefineError> {
    cfg.validate()?;
    if instruction.trim().is_empty() {
        return Err(RefineError::Empty("instruction"));
    }
    let mut v = backend
        .initial_thoughts(cfg.n_vectors)
        .map_err(|source| RefineError::Backend { step: 0, source })?;
    if v.count() != cfg.n_vectors {
        return Err(RefineError::Shape {
            expected: (cfg.n_vectors, v.dim()),
            actual: v.dims(),
        });
    }

    let mut trace = ConfidenceTrace::default();
    let mut step = 0;
    loop {
        let outcome = backend
            .refine_eval(image, instruction, &v, cfg.max_description_tokens)
            .map_err(|source| RefineError::Backend { step, source })?;
        trace.steps.push(TraceStep {
            step,
            objective: outcome.objective,
            description: outcome.description.clone(),
        });
        if step == cfg.steps {
            let mode = if cfg.steps == 0 {
                RefinementMode::NoThink
            } else {
                RefinementMode::Optimized
            };
            return Ok(RefinedInstruction {
                original: instruction.to_string(),
                visual_description: outcome.description,
                mode,
                trace,
            });
        }
        v = ascend(
            &v,
            &outcome.gradient,
            outcome.gradient_dims,
            cfg.learning_rate,
        )?;
        step += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tv(rows: &[&[f64]]) -> ThoughtVectors {
        let d = rows[0].len();
        ThoughtVectors::new(
            rows.len(),
            d,
            rows.iter().flat_map(|r| r.iter().copied()).collect(),
        )
        .unwrap()
    }

    #[test]
    fn confidence_examples() {
        let uniform = [0.25f64.ln(); 4];
        assert!((sequence_confidence(&uniform).unwrap() - (-1.386294)).abs() < 1e-6);
        assert_eq!(sequence_confidence(&[0.0]).unwrap(), 0.0);
        assert!((sequence_confidence(&[-0.1, -0.3, -0.5]).unwrap() + 0.3).abs() < 1e-15);
        assert!(matches!(
            sequence_confidence(&[]),
            Err(RefineError::Empty(_))
        ));
    }

    #[test]
    fn ascend_examples() {
        let v = tv(&[&[1.0, 2.0]]);
        assert_eq!(ascend(&v, &[0.0, 0.0], (1, 2), 0.1).unwrap(), v);
        let next = ascend(&v, &[0.5, -1.0], (1, 2), 0.1).unwrap();
        assert!((next.values()[0] - 1.05).abs() < 1e-15);
        assert!((next.values()[1] - 1.9).abs() < 1e-15);
        assert!(matches!(
            ascend(&v, &[f64::NAN, 0.0], (1, 2), 0.1),
            Err(RefineError::NonFinite { index: 0 })
        ));
        assert!(matches!(
            ascend(&v, &[0.0; 4], (2, 2), 0.1),
            Err(RefineError::Shape { .. })
        ));
    }

    #[test]
    fn thought_vector_invariants() {
        assert!(ThoughtVectors::new(0, 3, vec![]).is_err());
        assert!(ThoughtVectors::new(1, 2, vec![1.0]).is_err());
        assert!(matches!(
            ThoughtVectors::new(1, 2, vec![1.0, f64::INFINITY]),
            Err(RefineError::NonFinite { index: 1 })
        ));
    }

    #[test]
    fn config_defaults_and_validation() {
        let cfg = RefineConfig::default();
        assert_eq!((cfg.n_vectors, cfg.steps, cfg.learning_rate), (6, 5, 0.1));
        assert!(cfg.validate().is_ok());
        assert!(RefineConfig {
            learning_rate: 0.0,
            ..cfg.clone()
        }
        .validate()
        .is_err());
        assert!(RefineConfig {
            n_vectors: 0,
            ..cfg
        }
        .validate()
        .is_err());
    }
}
