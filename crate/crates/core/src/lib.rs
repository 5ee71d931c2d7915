//! Training-free GUI grounding.
//!
//! Given a screenshot and a natural-language instruction, [`ground`] first
//! rewrites the instruction into a visual description by gradient ascent on
//! a handful of latent thought vectors, then repeatedly crops toward the
//! region the model attends to while writing box coordinates, and finally
//! maps the last predicted box back to original-image pixels.
//!
//! The model itself sits behind the [`Backend`] trait. This crate ships a
//! deterministic [`MockBackend`], two analytic toy backends for the
//! refinement loop, and [`RemoteBackend`], an HTTP client for a model
//! server speaking the protocol in [`backend::wire`].

pub mod backend;
pub mod bench;
pub mod focus;
pub mod geometry;
pub mod imageops;
pub mod pipeline;
pub mod refine;
pub mod synth;

pub use backend::{
    Backend, BackendCapabilities, BackendError, CapturePhase, GenerationOutcome, MockBackend,
    MockConfig, MockTarget, RefineEvalOutcome, RemoteBackend, ToyQuadraticBackend,
    ToySoftmaxBackend,
};
pub use geometry::{BoundingBox, Dims, PixelPoint, ViewportStack};
pub use imageops::RasterImage;
pub use pipeline::{ground, Ablations, GroundingConfig, GroundingResult, PipelineError};
pub use refine::{RefineConfig, RefinedInstruction, ThoughtVectors};
