//! The model-backend contract, plus the built-in deterministic backends and
//! the HTTP wire protocol for remote ones.
//!
//! A backend is a pure sensor: it generates text and reports raw attention
//! for every head at the hooked layer. Fusion and window scoring happen in
//! [`crate::focus`].

pub mod mock;
pub mod remote;
pub mod toy;
pub mod wire;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::focus::{AttentionSlice, FocusError, VisualGrid};
use crate::imageops::{ImageError, RasterImage};
use crate::refine::ThoughtVectors;

pub use mock::{MockBackend, MockConfig, MockTarget};
pub use remote::RemoteBackend;
pub use toy::{ToyQuadraticBackend, ToySoftmaxBackend};

/// Maximum number of probing steps: the opening bracket and three commas.
pub const MAX_PROBING_STEPS: usize = 4;

/// Upper bound on the visual-token mass of a single attention slice.
pub const SLICE_MASS_TOLERANCE: f64 = 1.0 + 1e-4;

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("capability error: {0}")]
    Capability(String),
    #[error("generation produced no probing step and no fallback step")]
    EmptyAttention,
    #[error("shape mismatch: expected {expected:?}, got {actual:?}")]
    Shape {
        expected: Vec<usize>,
        actual: Vec<usize>,
    },
    #[error("backend broke its contract: {0}")]
    Contract(String),
    #[error("protocol version mismatch: server speaks {server}, client speaks {client}")]
    VersionMismatch { server: u32, client: u32 },
    #[error("malformed frame: {0}")]
    MalformedFrame(String),
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("server error {status} ({code}): {message}")]
    Server {
        status: u16,
        code: String,
        message: String,
    },
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error(transparent)]
    Focus(#[from] FocusError),
}

/// Which forward pass attention is read from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum CapturePhase {
    /// Decoding steps that emit the probing tokens of the box literal.
    #[default]
    Generation,
    /// The last prompt position, before any token is generated.
    Prefill,
}

impl std::fmt::Display for CapturePhase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            CapturePhase::Generation => "generation",
            CapturePhase::Prefill => "prefill",
        })
    }
}

impl std::str::FromStr for CapturePhase {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "generation" => Ok(CapturePhase::Generation),
            "prefill" => Ok(CapturePhase::Prefill),
            other => Err(format!(
                "unknown capture phase {other:?} (expected generation|prefill)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackendCapabilities {
    pub supports_refine: bool,
    pub supports_generation_attention: bool,
    pub supports_prefill_attention: bool,
    pub concurrent_capacity: usize,
    pub embedding_dim: usize,
    pub layer_count: usize,
}

impl BackendCapabilities {
    pub fn supports_phase(&self, phase: CapturePhase) -> bool {
        match phase {
            CapturePhase::Generation => self.supports_generation_attention,
            CapturePhase::Prefill => self.supports_prefill_attention,
        }
    }
}

/// Raw output of one grounding generation.
#[derive(Debug, Clone, PartialEq)]
pub struct GenerationOutcome {
    pub text: String,
    pub grid: VisualGrid,
    /// One slice per head per probing step, restricted to visual tokens.
    pub probing_slices: Vec<AttentionSlice>,
    pub probing_steps_found: usize,
    pub capture_phase: CapturePhase,
}

impl GenerationOutcome {
    /// Enforces the slice invariants at the contract boundary.
    pub fn validate(&self) -> Result<(), BackendError> {
        self.grid.validate()?;
        if self.probing_steps_found > MAX_PROBING_STEPS {
            return Err(BackendError::Contract(format!(
                "{} probing steps reported, at most {MAX_PROBING_STEPS} exist",
                self.probing_steps_found
            )));
        }
        if self.probing_steps_found > 0 && self.probing_slices.is_empty() {
            return Err(BackendError::Contract(
                "probing steps reported but no attention slices returned".into(),
            ));
        }
        for s in &self.probing_slices {
            if s.map.rows() != self.grid.rows || s.map.cols() != self.grid.cols {
                return Err(BackendError::Contract(format!(
                    "slice (step {}, head {}) is {}x{}, grid is {}x{}",
                    s.step_id,
                    s.head_id,
                    s.map.rows(),
                    s.map.cols(),
                    self.grid.rows,
                    self.grid.cols
                )));
            }
            s.map.check_values()?;
            let mass = s.map.sum();
            if mass > SLICE_MASS_TOLERANCE {
                return Err(BackendError::Contract(format!(
                    "slice (step {}, head {}) has visual mass {mass}, exceeding 1",
                    s.step_id, s.head_id
                )));
            }
        }
        Ok(())
    }

    pub fn used_fallback(&self) -> bool {
        self.probing_steps_found == 0 && !self.probing_slices.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefineEvalOutcome {
    pub description: String,
    /// Mean log-probability of `description` with the submitted vectors.
    pub objective: f64,
    /// Gradient of the objective with respect to the submitted vectors,
    /// row-major `n x d`.
    pub gradient: Vec<f64>,
    pub gradient_dims: (usize, usize),
}

pub trait Backend: Send + Sync {
    fn capabilities(&self) -> Result<BackendCapabilities, BackendError>;

    /// Starting thought vectors. The backend owns the embedding table, so it
    /// decides what the semantic starting point is.
    fn initial_thoughts(&self, n_vectors: usize) -> Result<ThoughtVectors, BackendError>;

    fn generate_grounding(
        &self,
        image: &RasterImage,
        instruction: &str,
        layer_fraction: f64,
        phase: CapturePhase,
    ) -> Result<GenerationOutcome, BackendError>;

    /// Greedy-decodes a description with `v` in place, then re-scores that
    /// fixed sequence to obtain the objective and its exact gradient.
    fn refine_eval(
        &self,
        image: &RasterImage,
        instruction: &str,
        v: &ThoughtVectors,
        max_tokens: usize,
    ) -> Result<RefineEvalOutcome, BackendError>;
}

impl<B: Backend + ?Sized> Backend for &B {
    fn capabilities(&self) -> Result<BackendCapabilities, BackendError> {
        (**self).capabilities()
    }
    fn initial_thoughts(&self, n_vectors: usize) -> Result<ThoughtVectors, BackendError> {
        (**self).initial_thoughts(n_vectors)
    }
    fn generate_grounding(
        &self,
        image: &RasterImage,
        instruction: &str,
        layer_fraction: f64,
        phase: CapturePhase,
    ) -> Result<GenerationOutcome, BackendError> {
        (**self).generate_grounding(image, instruction, layer_fraction, phase)
    }
    fn refine_eval(
        &self,
        image: &RasterImage,
        instruction: &str,
        v: &ThoughtVectors,
        max_tokens: usize,
    ) -> Result<RefineEvalOutcome, BackendError> {
        (**self).refine_eval(image, instruction, v, max_tokens)
    }
}

/// Zero-based decoder layer at `fraction` of the stack depth:
/// `floor(fraction * layers)`, kept below `layers`.
pub fn select_layer(fraction: f64, layer_count: usize) -> Result<usize, BackendError> {
    if !(fraction.is_finite() && fraction > 0.0 && fraction <= 1.0) {
        return Err(BackendError::Capability(format!(
            "layer fraction must lie in (0, 1], got {fraction}"
        )));
    }
    if layer_count == 0 {
        return Err(BackendError::Capability(
            "backend declares zero layers".into(),
        ));
    }
    let idx = (fraction * layer_count as f64).floor() as usize;
    Ok(idx.min(layer_count - 1))
}

/// Probing positions found in a decoded token sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProbeScan {
    /// Token indices of the first `[` and up to three following commas.
    pub steps: Vec<usize>,
    /// Last token index, used when no bracket was emitted.
    pub fallback: Option<usize>,
}

impl ProbeScan {
    /// Steps at which attention should be captured.
    pub fn capture_steps(&self) -> Vec<usize> {
        if self.steps.is_empty() {
            self.fallback.into_iter().collect()
        } else {
            self.steps.clone()
        }
    }
}

/// Scans decoded token texts for the opening bracket of the box literal and
/// the three commas after it.
pub fn scan_probing_tokens<S: AsRef<str>>(tokens: &[S]) -> ProbeScan {
    let mut steps = Vec::new();
    if let Some(open) = tokens.iter().position(|t| t.as_ref().contains('[')) {
        steps.push(open);
        steps.extend(
            tokens
                .iter()
                .enumerate()
                .skip(open + 1)
                .filter(|(_, t)| t.as_ref().contains(','))
                .map(|(i, _)| i)
                .take(MAX_PROBING_STEPS - 1),
        );
    }
    let fallback = if steps.is_empty() {
        tokens.len().checked_sub(1)
    } else {
        None
    };
    ProbeScan { steps, fallback }
}
