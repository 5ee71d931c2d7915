//! Synthetic screenshots: a flat desktop with toolbar-like clutter and one
//! target element painted in the mock backend's marker colour.

use rand::Rng;

use crate::backend::mock::DEFAULT_MARKER;
use crate::geometry::{BoundingBox, Dims};
use crate::imageops::RasterImage;

const BACKGROUND: [u8; 3] = [236, 238, 241];

/// Colours that stay well outside the default marker tolerance.
const DISTRACTORS: [[u8; 3]; 5] = [
    [90, 110, 140],
    [200, 205, 210],
    [40, 120, 200],
    [120, 170, 90],
    [60, 60, 70],
];

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub dims: Dims,
    /// Inclusive ranges for the target width and height.
    pub target_width: (u32, u32),
    pub target_height: (u32, u32),
    pub distractors: usize,
    pub marker: [u8; 3],
}

impl SceneSpec {
    pub fn new(dims: Dims) -> Self {
        Self {
            dims,
            target_width: (24, 96),
            target_height: (16, 48),
            distractors: 40,
            marker: DEFAULT_MARKER,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Scene {
    pub image: RasterImage,
    pub target: BoundingBox,
}

/// Draws a scene. Distractors are painted first so the target is never
/// covered.
pub fn render_scene<R: Rng + ?Sized>(spec: &SceneSpec, rng: &mut R) -> Scene {
    let Dims { width, height } = spec.dims;
    let mut image = RasterImage::filled(width, height, BACKGROUND).expect("non-empty scene");
    for _ in 0..spec.distractors {
        let w = rng.random_range(8..=(width / 6).max(8));
        let h = rng.random_range(8..=(height / 10).max(8));
        let x = rng.random_range(0..=width.saturating_sub(w));
        let y = rng.random_range(0..=height.saturating_sub(h));
        let colour = DISTRACTORS[rng.random_range(0..DISTRACTORS.len())];
        image.fill_rect(x, y, (x + w).min(width), (y + h).min(height), colour);
    }

    let tw = rng
        .random_range(spec.target_width.0..=spec.target_width.1)
        .min(width);
    let th = rng
        .random_range(spec.target_height.0..=spec.target_height.1)
        .min(height);
    let x = rng.random_range(0..=width - tw);
    let y = rng.random_range(0..=height - th);
    image.fill_rect(x, y, x + tw, y + th, spec.marker);
    let target = BoundingBox::new(
        f64::from(x),
        f64::from(y),
        f64::from(x + tw),
        f64::from(y + th),
    )
    .expect("ordered by construction");
    Scene { image, target }
}
