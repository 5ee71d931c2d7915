//! Scripted backend with synthetic attention.
//!
//! The mock "sees" its target either as a fixed box in view coordinates or
//! by locating a marker colour in whatever view it is handed, so the target
//! stays visible to it across crops and upscales. In the generation phase
//! every probing step and head gets a discretized Gaussian bump centered on
//! the target's grid cell; in the prefill phase a single slice carries the
//! bump at the top-left cell instead.

use std::hash::{DefaultHasher, Hash, Hasher};
use std::sync::atomic::{AtomicUsize, Ordering};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    scan_probing_tokens, select_layer, Backend, BackendCapabilities, BackendError, CapturePhase,
    GenerationOutcome, RefineEvalOutcome,
};
use crate::focus::{AttentionMap, AttentionSlice, GridCell, VisualGrid};
use crate::geometry::{BoundingBox, Dims, PixelPoint};
use crate::imageops::RasterImage;
use crate::refine::ThoughtVectors;

pub const DEFAULT_MARKER: [u8; 3] = [230, 20, 20];

#[derive(Debug, Clone, PartialEq)]
pub enum MockTarget {
    /// A box in the coordinates of every view the mock is shown.
    Fixed(BoundingBox),
    /// Pixels within `tolerance` (per channel) of `color`.
    Marker { color: [u8; 3], tolerance: u8 },
}

impl Default for MockTarget {
    fn default() -> Self {
        MockTarget::Marker {
            color: DEFAULT_MARKER,
            tolerance: 60,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MockConfig {
    pub target: MockTarget,
    pub patch_px: f64,
    pub heads: usize,
    pub sigma_cells: f64,
    /// Attention mass of the bump in head 0; later heads carry less.
    pub peak_mass: f64,
    /// Expected mass of the uniform background noise per slice.
    pub noise_mass: f64,
    pub seed: u64,
    pub layer_count: usize,
    pub embedding_dim: usize,
    pub concurrent_capacity: usize,
    /// Size of the guessed box when the target is not in view.
    pub miss_box: (f64, f64),
}

impl Default for MockConfig {
    fn default() -> Self {
        Self {
            target: MockTarget::default(),
            patch_px: 28.0,
            heads: 4,
            sigma_cells: 1.5,
            peak_mass: 0.6,
            noise_mass: 0.05,
            seed: 0,
            layer_count: 28,
            embedding_dim: 16,
            concurrent_capacity: 8,
            miss_box: (40.0, 30.0),
        }
    }
}

#[derive(Debug, Default)]
pub struct MockBackend {
    cfg: MockConfig,
    generate_calls: AtomicUsize,
    refine_calls: AtomicUsize,
}

impl MockBackend {
    pub fn new(cfg: MockConfig) -> Self {
        Self {
            cfg,
            generate_calls: AtomicUsize::new(0),
            refine_calls: AtomicUsize::new(0),
        }
    }

    pub fn config(&self) -> &MockConfig {
        &self.cfg
    }

    pub fn generate_calls(&self) -> usize {
        self.generate_calls.load(Ordering::SeqCst)
    }

    pub fn refine_calls(&self) -> usize {
        self.refine_calls.load(Ordering::SeqCst)
    }

    /// Where the mock believes the target is in `image`, if it is visible.
    pub fn locate(&self, image: &RasterImage) -> Option<BoundingBox> {
        match &self.cfg.target {
            MockTarget::Fixed(b) => {
                let c = b.clamp_to(image.dims());
                (c.width() > 0.0 && c.height() > 0.0).then_some(c)
            }
            MockTarget::Marker { color, tolerance } => find_marker(image, *color, *tolerance),
        }
    }

    /// Attention mass of head `h`'s bump.
    pub fn head_mass(&self, head: usize) -> f64 {
        self.cfg.peak_mass * (1.0 - head as f64 / (2.0 * self.cfg.heads as f64))
    }

    /// Bump centered on `center` with total mass `mass`, plus seeded noise.
    fn bump(
        &self,
        grid: &VisualGrid,
        center: GridCell,
        mass: f64,
        rng: &mut ChaCha8Rng,
    ) -> AttentionMap {
        let g = gaussian(grid, center, self.cfg.sigma_cells);
        let total: f64 = g.iter().sum();
        let noise_scale = 2.0 * self.cfg.noise_mass / grid.len() as f64;
        let values = g
            .iter()
            .map(|&x| {
                let noise = if noise_scale > 0.0 {
                    rng.random::<f64>() * noise_scale
                } else {
                    0.0
                };
                (mass * x / total + noise) as f32
            })
            .collect();
        AttentionMap::new(grid.rows, grid.cols, values).expect("grid-sized buffer")
    }

    fn rng_for(&self, parts: impl Hash) -> ChaCha8Rng {
        let mut h = DefaultHasher::new();
        self.cfg.seed.hash(&mut h);
        parts.hash(&mut h);
        ChaCha8Rng::seed_from_u64(h.finish())
    }

    fn refine_target(&self, n: usize) -> Vec<f64> {
        let mut rng = self.rng_for(("refine-target", n));
        (0..n * self.cfg.embedding_dim)
            .map(|_| rng.random_range(-0.5..0.5))
            .collect()
    }
}

/// Unnormalized Gaussian `exp(-d^2 / 2 sigma^2)` over grid cells, row-major.
pub fn gaussian(grid: &VisualGrid, center: GridCell, sigma: f64) -> Vec<f64> {
    let denom = 2.0 * sigma * sigma;
    let mut out = Vec::with_capacity(grid.len());
    for r in 0..grid.rows {
        for c in 0..grid.cols {
            let dr = r as f64 - center.row as f64;
            let dc = c as f64 - center.col as f64;
            out.push((-(dr * dr + dc * dc) / denom).exp());
        }
    }
    out
}

/// Bounding box of all pixels within `tolerance` of `color` on every channel.
pub fn find_marker(image: &RasterImage, color: [u8; 3], tolerance: u8) -> Option<BoundingBox> {
    let (w, h) = (image.width() as usize, image.height() as usize);
    let px = image.pixels();
    let mut lo = (usize::MAX, usize::MAX);
    let mut hi = (0usize, 0usize);
    let mut found = false;
    for y in 0..h {
        let row = &px[y * w * 3..(y + 1) * w * 3];
        for (x, p) in row.chunks_exact(3).enumerate() {
            if p.iter()
                .zip(color)
                .all(|(&a, b)| a.abs_diff(b) <= tolerance)
            {
                found = true;
                lo = (lo.0.min(x), lo.1.min(y));
                hi = (hi.0.max(x), hi.1.max(y));
            }
        }
    }
    found.then(|| {
        BoundingBox::new(
            lo.0 as f64,
            lo.1 as f64,
            (hi.0 + 1) as f64,
            (hi.1 + 1) as f64,
        )
        .expect("ordered by construction")
    })
}

/// Splits generated text the way a BPE tokenizer typically splits a box
/// literal: punctuation alone, numbers with their leading space.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut cur = String::new();
    for ch in text.chars() {
        match ch {
            '[' | ']' | ',' | '(' | ')' => {
                if !cur.is_empty() {
                    tokens.push(std::mem::take(&mut cur));
                }
                tokens.push(ch.to_string());
            }
            ' ' if !cur.is_empty() => {
                tokens.push(std::mem::take(&mut cur));
                cur.push(ch);
            }
            _ => cur.push(ch),
        }
    }
    if !cur.is_empty() {
        tokens.push(cur);
    }
    tokens
}

fn format_box(b: &BoundingBox) -> String {
    format!(
        "[{}, {}, {}, {}]",
        b.x1().round(),
        b.y1().round(),
        b.x2().round(),
        b.y2().round()
    )
}

impl Backend for MockBackend {
    fn capabilities(&self) -> Result<BackendCapabilities, BackendError> {
        Ok(BackendCapabilities {
            supports_refine: true,
            supports_generation_attention: true,
            supports_prefill_attention: true,
            concurrent_capacity: self.cfg.concurrent_capacity,
            embedding_dim: self.cfg.embedding_dim,
            layer_count: self.cfg.layer_count,
        })
    }

    fn initial_thoughts(&self, n_vectors: usize) -> Result<ThoughtVectors, BackendError> {
        ThoughtVectors::zeros(n_vectors, self.cfg.embedding_dim)
            .map_err(|e| BackendError::Contract(e.to_string()))
    }

    fn generate_grounding(
        &self,
        image: &RasterImage,
        instruction: &str,
        layer_fraction: f64,
        phase: CapturePhase,
    ) -> Result<GenerationOutcome, BackendError> {
        self.generate_calls.fetch_add(1, Ordering::SeqCst);
        let layer = select_layer(layer_fraction, self.cfg.layer_count)?;
        let dims: Dims = image.dims();
        let grid = VisualGrid::covering(dims, self.cfg.patch_px);

        let predicted = self.locate(image).unwrap_or_else(|| {
            let (mw, mh) = self.cfg.miss_box;
            let center = PixelPoint::new(f64::from(dims.width) / 2.0, f64::from(dims.height) / 2.0);
            BoundingBox::centered(center, mw, mh)
                .expect("positive miss box")
                .clamp_to(dims)
        });
        let text = format_box(&predicted);
        let tokens = tokenize(&text);
        let scan = scan_probing_tokens(&tokens);
        let key = (
            instruction,
            phase,
            dims,
            layer,
            predicted.to_array().map(f64::to_bits),
        );

        let (probing_slices, probing_steps_found) = match phase {
            CapturePhase::Generation => {
                let cell = grid.cell_at(predicted.centroid());
                let mut slices = Vec::new();
                for step in scan.capture_steps() {
                    for head in 0..self.cfg.heads {
                        let mut rng = self.rng_for((&key, step, head));
                        slices.push(AttentionSlice {
                            step_id: step,
                            head_id: head,
                            map: self.bump(&grid, cell, self.head_mass(head), &mut rng),
                        });
                    }
                }
                (slices, scan.steps.len())
            }
            CapturePhase::Prefill => {
                let mut rng = self.rng_for((&key, "prefill"));
                let map = self.bump(
                    &grid,
                    GridCell { row: 0, col: 0 },
                    self.head_mass(0),
                    &mut rng,
                );
                (
                    vec![AttentionSlice {
                        step_id: 0,
                        head_id: 0,
                        map,
                    }],
                    0,
                )
            }
        };
        if probing_slices.is_empty() {
            return Err(BackendError::EmptyAttention);
        }

        Ok(GenerationOutcome {
            text,
            grid,
            probing_slices,
            probing_steps_found,
            capture_phase: phase,
        })
    }

    fn refine_eval(
        &self,
        _image: &RasterImage,
        instruction: &str,
        v: &ThoughtVectors,
        _max_tokens: usize,
    ) -> Result<RefineEvalOutcome, BackendError> {
        self.refine_calls.fetch_add(1, Ordering::SeqCst);
        if v.dim() != self.cfg.embedding_dim {
            return Err(BackendError::Shape {
                expected: vec![v.count(), self.cfg.embedding_dim],
                actual: vec![v.count(), v.dim()],
            });
        }
        // Quadratic surrogate: the objective peaks at a seeded target.
        let target = self.refine_target(v.count());
        let gradient: Vec<f64> = target
            .iter()
            .zip(v.values())
            .map(|(t, x)| 2.0 * (t - x))
            .collect();
        let objective = -target
            .iter()
            .zip(v.values())
            .map(|(t, x)| (t - x) * (t - x))
            .sum::<f64>();
        Ok(RefineEvalOutcome {
            description: format!("the red highlighted element for: {instruction}"),
            objective,
            gradient,
            gradient_dims: v.dims(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenizer_splits_box_literal() {
        assert_eq!(
            tokenize("[380, 285, 420, 315]"),
            vec!["[", "380", ",", " 285", ",", " 420", ",", " 315", "]"]
        );
        assert_eq!(
            tokenize("click at (40, 50)"),
            vec!["click", " at", " ", "(", "40", ",", " 50", ")"]
        );
    }

    #[test]
    fn marker_detection() {
        let mut img = RasterImage::filled(50, 40, [200, 200, 200]).unwrap();
        assert_eq!(find_marker(&img, DEFAULT_MARKER, 60), None);
        img.fill_rect(10, 5, 20, 9, DEFAULT_MARKER);
        let b = find_marker(&img, DEFAULT_MARKER, 60).unwrap();
        assert_eq!(b.to_array(), [10.0, 5.0, 20.0, 9.0]);
    }

    #[test]
    fn counters_track_calls() {
        let mock = MockBackend::new(MockConfig::default());
        let img = RasterImage::filled(56, 56, [0, 0, 0]).unwrap();
        mock.generate_grounding(&img, "x", 0.7, CapturePhase::Generation)
            .unwrap();
        mock.refine_eval(&img, "x", &ThoughtVectors::zeros(2, 16).unwrap(), 8)
            .unwrap();
        assert_eq!((mock.generate_calls(), mock.refine_calls()), (1, 1));
    }

    #[test]
    fn miss_guesses_view_center() {
        let mock = MockBackend::new(MockConfig::default());
        let img = RasterImage::filled(100, 60, [0, 0, 0]).unwrap();
        let out = mock
            .generate_grounding(&img, "x", 0.7, CapturePhase::Generation)
            .unwrap();
        assert_eq!(out.text, "[30, 15, 70, 45]");
    }

    #[test]
    fn zero_layer_fraction_rejected() {
        let mock = MockBackend::new(MockConfig::default());
        let img = RasterImage::filled(28, 28, [0, 0, 0]).unwrap();
        assert!(matches!(
            mock.generate_grounding(&img, "x", 0.0, CapturePhase::Generation),
            Err(BackendError::Capability(_))
        ));
    }
}
