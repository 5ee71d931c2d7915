//! The full grounding method: optional instruction refinement, then the
//! attention-guided zoom loop, then box parsing and back-projection.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{Backend, BackendCapabilities, BackendError, CapturePhase, GenerationOutcome};
use crate::focus::{self, FocusError, FusedMap, GridCell, VisualGrid, WindowDims};
use crate::geometry::{BoundingBox, Dims, GeometryError, ViewportStack};
use crate::imageops::{self, ImageError, RasterImage};
use crate::refine::{self, RefineConfig, RefineError, RefinedInstruction};

/// Values at or below this in all four coordinates mark a normalized box.
pub const NORMALIZED_COORD_LIMIT: f64 = 1.5;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("backend cannot run this configuration: {0}")]
    Capability(String),
    #[error("refinement failed: {0}")]
    Refine(#[from] RefineError),
    #[error("generation failed in zoom round {round}: {source}")]
    Generate {
        round: usize,
        #[source]
        source: BackendError,
    },
    #[error("focus analysis failed in zoom round {round}: {source}")]
    Focus {
        round: usize,
        #[source]
        source: FocusError,
    },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error("no box in final generation {text:?} and no attention peak to fall back on")]
    Unparsable { text: String },
}

impl PipelineError {
    /// True for errors raised before any model call because the request
    /// itself can never succeed.
    pub fn is_configuration(&self) -> bool {
        matches!(
            self,
            PipelineError::Config(_) | PipelineError::Capability(_)
        )
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("no bracketed group of four numbers in {text:?}")]
pub struct ParseError {
    pub text: String,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ablations {
    /// Ground the raw instruction.
    pub no_refinement: bool,
    /// Describe the target without optimizing the thought vectors.
    pub no_think: bool,
    /// Single generation on the full screenshot, no zooming.
    pub no_visual_focus: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundingConfig {
    /// Generation rounds; every round but the last is followed by a zoom.
    pub iterations: usize,
    pub layer_fraction: f64,
    /// Crop size as a fraction of the current view, per axis.
    pub crop_fraction: f64,
    pub upscale: f64,
    /// Scoring window `(height, width)` in view pixels.
    pub zoom_window_px: (f64, f64),
    pub capture_phase: CapturePhase,
    pub refine: Option<RefineConfig>,
    pub ablations: Ablations,
    /// Require `crop_fraction * upscale == 1` so every view has the same size.
    pub constant_view: bool,
}

impl Default for GroundingConfig {
    fn default() -> Self {
        Self {
            iterations: 3,
            layer_fraction: 0.7,
            crop_fraction: 0.5,
            upscale: 2.0,
            zoom_window_px: (784.0, 784.0),
            capture_phase: CapturePhase::Generation,
            refine: Some(RefineConfig::default()),
            ablations: Ablations::default(),
            constant_view: true,
        }
    }
}

impl GroundingConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |msg: String| Err(PipelineError::Config(msg));
        if self.iterations == 0 {
            return bad("iterations must be >= 1".into());
        }
        if !(self.layer_fraction > 0.0 && self.layer_fraction <= 1.0) {
            return bad(format!(
                "layer fraction must lie in (0, 1], got {}",
                self.layer_fraction
            ));
        }
        if !(self.crop_fraction > 0.0 && self.crop_fraction <= 1.0) {
            return bad(format!(
                "crop fraction must lie in (0, 1], got {}",
                self.crop_fraction
            ));
        }
        if !(self.upscale.is_finite() && self.upscale >= 1.0) {
            return bad(format!("upscale must be >= 1, got {}", self.upscale));
        }
        let (hz, wz) = self.zoom_window_px;
        if !(hz.is_finite() && hz > 0.0 && wz.is_finite() && wz > 0.0) {
            return bad(format!("zoom window must be positive, got {hz}x{wz}"));
        }
        if self.constant_view && (self.crop_fraction * self.upscale - 1.0).abs() > 1e-9 {
            return bad(format!(
                "crop fraction {} x upscale {} != 1 breaks the constant view size",
                self.crop_fraction, self.upscale
            ));
        }
        if let Some(r) = &self.refine {
            r.validate()
                .map_err(|e| PipelineError::Config(e.to_string()))?;
        }
        Ok(())
    }

    fn wants_refinement(&self) -> bool {
        !self.ablations.no_refinement && self.refine.is_some()
    }

    fn rounds(&self) -> usize {
        if self.ablations.no_visual_focus {
            1
        } else {
            self.iterations
        }
    }

    pub fn check_capabilities(&self, caps: &BackendCapabilities) -> Result<(), PipelineError> {
        if self.wants_refinement() && !caps.supports_refine {
            return Err(PipelineError::Capability(
                "instruction refinement needs refine-eval support (or --no-refinement)".into(),
            ));
        }
        if !caps.supports_generation_attention && !caps.supports_prefill_attention {
            return Err(PipelineError::Capability(
                "backend cannot generate grounding output".into(),
            ));
        }
        if self.rounds() > 1 && !caps.supports_phase(self.capture_phase) {
            return Err(PipelineError::Capability(format!(
                "zooming needs {} attention capture",
                self.capture_phase
            )));
        }
        if caps.concurrent_capacity == 0 {
            return Err(PipelineError::Capability(
                "backend declares zero capacity".into(),
            ));
        }
        Ok(())
    }
}

/// One crop-and-upscale step of the zoom loop.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ZoomStep {
    pub round: usize,
    /// Part of the original screenshot the analysed view showed.
    pub view_region: BoundingBox,
    pub grid: VisualGrid,
    pub window: WindowDims,
    pub peak: GridCell,
    /// The chosen crop in the analysed view's own pixels.
    pub crop_in_view: BoundingBox,
    pub crop_in_original: BoundingBox,
    /// Upscale applied to the crop to form the next view.
    pub scale: f64,
    pub generated_text: String,
    #[serde(skip)]
    pub fused: FusedMap,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct Diagnostics {
    pub generations: usize,
    /// Rounds whose attention came from the last-step fallback.
    pub probing_fallback_rounds: Vec<usize>,
    /// Set when the final box came from the attention peak instead of text.
    pub parse_fallback: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroundingResult {
    pub image_dims: Dims,
    /// In original screenshot pixels, clamped to the image.
    pub predicted_box: BoundingBox,
    pub refined: RefinedInstruction,
    pub zoom_trail: Vec<ZoomStep>,
    pub final_text: String,
    pub diagnostics: Diagnostics,
}

/// First `[a, b, c, d]` group of four numbers in `text`, in frame pixels.
/// Groups whose values are all <= 1.5 are read as normalized coordinates.
pub fn parse_box(text: &str, frame: Dims) -> Result<BoundingBox, ParseError> {
    let mut rest = text;
    while let Some(open) = rest.find('[') {
        let after = &rest[open + 1..];
        let Some(close) = after.find(']') else { break };
        let nums: Vec<f64> = after[..close]
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .unwrap_or_default();
        if nums.len() == 4 && nums.iter().all(|v| v.is_finite()) {
            let mut v = [nums[0], nums[1], nums[2], nums[3]];
            if v.iter().all(|&x| x <= NORMALIZED_COORD_LIMIT) {
                let (w, h) = (f64::from(frame.width), f64::from(frame.height));
                v = [v[0] * w, v[1] * h, v[2] * w, v[3] * h];
            }
            let b = BoundingBox::new(
                v[0].min(v[2]),
                v[1].min(v[3]),
                v[0].max(v[2]),
                v[1].max(v[3]),
            )
            .expect("finite and ordered");
            return Ok(b.clamp_to(frame));
        }
        rest = after;
    }
    Err(ParseError {
        text: text.to_string(),
    })
}

struct Peak {
    grid: VisualGrid,
    window: WindowDims,
    cell: GridCell,
    fused: FusedMap,
}

fn locate_peak(
    outcome: &GenerationOutcome,
    zoom_window_px: (f64, f64),
) -> Result<Peak, FocusError> {
    let fused = focus::fuse_max(&outcome.probing_slices)?;
    let window = focus::grid_window(&outcome.grid, zoom_window_px);
    let field = focus::window_scores(&fused, window)?;
    Ok(Peak {
        grid: outcome.grid,
        window,
        cell: focus::peak(&field),
        fused,
    })
}

/// Shifts `rect` onto whole pixels without changing its (integer) size.
fn snap_to_pixels(rect: &BoundingBox, frame: Dims) -> BoundingBox {
    let w = rect.width().round();
    let h = rect.height().round();
    let x1 = rect.x1().round().clamp(0.0, f64::from(frame.width) - w);
    let y1 = rect.y1().round().clamp(0.0, f64::from(frame.height) - h);
    BoundingBox::new(x1, y1, x1 + w, y1 + h).expect("non-negative size")
}

fn refine_stage<B: Backend + ?Sized>(
    backend: &B,
    image: &RasterImage,
    instruction: &str,
    cfg: &GroundingConfig,
) -> Result<RefinedInstruction, PipelineError> {
    match &cfg.refine {
        Some(rc) if !cfg.ablations.no_refinement => {
            let rc = if cfg.ablations.no_think {
                RefineConfig {
                    steps: 0,
                    ..rc.clone()
                }
            } else {
                rc.clone()
            };
            Ok(refine::refine_instruction(
                backend,
                image,
                instruction,
                &rc,
            )?)
        }
        _ => Ok(RefinedInstruction::passthrough(instruction)),
    }
}

/// Grounds `instruction` in `image` and returns the predicted box in
/// original-image pixels.
pub fn ground<B: Backend + ?Sized>(
    backend: &B,
    image: &RasterImage,
    instruction: &str,
    cfg: &GroundingConfig,
) -> Result<GroundingResult, PipelineError> {
    cfg.validate()?;
    if instruction.trim().is_empty() {
        return Err(PipelineError::Config("instruction is empty".into()));
    }
    let caps = backend
        .capabilities()
        .map_err(|e| PipelineError::Capability(e.to_string()))?;
    cfg.check_capabilities(&caps)?;

    let refined = refine_stage(backend, image, instruction, cfg)?;
    let prompt = refined.visual_description.as_str();

    let rounds = cfg.rounds();
    let mut diagnostics = Diagnostics::default();
    let mut stack = ViewportStack::new(image.dims());
    let mut zoomed: Option<RasterImage> = None;
    let mut trail: Vec<ZoomStep> = Vec::new();
    let mut last_peak: Option<(Peak, ViewportStack)> = None;

    for round in 0..rounds {
        let view = zoomed.as_ref().unwrap_or(image);
        let gen_err = |source| PipelineError::Generate { round, source };
        let outcome = backend
            .generate_grounding(view, prompt, cfg.layer_fraction, cfg.capture_phase)
            .map_err(gen_err)?;
        diagnostics.generations += 1;
        outcome.validate().map_err(gen_err)?;
        if outcome.grid.image_dims != view.dims() {
            return Err(gen_err(BackendError::Contract(format!(
                "grid covers {}, view is {}",
                outcome.grid.image_dims,
                view.dims()
            ))));
        }
        if outcome.used_fallback() {
            diagnostics.probing_fallback_rounds.push(round);
        }

        if round + 1 == rounds {
            let predicted = match parse_box(&outcome.text, view.dims()) {
                Ok(b) => stack.box_to_original(&b),
                Err(parse_err) => {
                    // Prefer this round's attention, else the previous zoom's peak.
                    let current = if outcome.probing_slices.is_empty() {
                        None
                    } else {
                        Some(
                            locate_peak(&outcome, cfg.zoom_window_px)
                                .map_err(|source| PipelineError::Focus { round, source })?,
                        )
                    };
                    let fallback = current.map(|p| (p, stack.clone())).or(last_peak.take());
                    let Some((p, at)) = fallback else {
                        return Err(PipelineError::Unparsable { text: outcome.text });
                    };
                    diagnostics.parse_fallback = Some(parse_err.to_string());
                    at.box_to_original(&focus::window_rect(p.cell, &p.grid, p.window))
                }
            };
            return Ok(GroundingResult {
                image_dims: image.dims(),
                predicted_box: predicted.clamp_to(image.dims()),
                refined,
                zoom_trail: trail,
                final_text: outcome.text,
                diagnostics,
            });
        }

        if outcome.probing_slices.is_empty() {
            return Err(gen_err(BackendError::EmptyAttention));
        }
        let peak = locate_peak(&outcome, cfg.zoom_window_px)
            .map_err(|source| PipelineError::Focus { round, source })?;
        let dims = view.dims();
        let crop_dims = (
            (cfg.crop_fraction * f64::from(dims.width)).round().max(1.0),
            (cfg.crop_fraction * f64::from(dims.height))
                .round()
                .max(1.0),
        );
        let planned = focus::plan_crop(peak.cell, &peak.grid, peak.window, crop_dims)
            .map_err(|source| PipelineError::Focus { round, source })?;
        let crop_rect = snap_to_pixels(&planned, dims);

        let next_stack = stack.push_crop(&crop_rect, cfg.upscale)?;
        let next_view = imageops::upscale_bicubic(&imageops::crop(view, &crop_rect)?, cfg.upscale)?;
        debug_assert_eq!(next_view.dims(), next_stack.current_dims());

        trail.push(ZoomStep {
            round,
            view_region: stack.visible_region(),
            grid: peak.grid,
            window: peak.window,
            peak: peak.cell,
            crop_in_view: crop_rect,
            crop_in_original: stack.box_to_original(&crop_rect),
            scale: cfg.upscale,
            generated_text: outcome.text.clone(),
            fused: peak.fused.clone(),
        });
        last_peak = Some((peak, stack));
        stack = next_stack;
        zoomed = Some(next_view);
    }
    unreachable!("the final round always returns")
}
