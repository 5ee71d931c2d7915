//! Pixel-space geometry: points, boxes, and the crop/upscale viewport stack
//! that maps coordinates in a zoomed view back to the original screenshot.
//!
//! All coordinates are continuous `f64` pixels. Rounding to whole pixels
//! only happens where an image is actually sampled.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error(
        "invalid box [{x1}, {y1}, {x2}, {y2}]: corners must be finite with x1 <= x2 and y1 <= y2"
    )]
    InvalidBox { x1: f64, y1: f64, x2: f64, y2: f64 },
    #[error("crop [{x1}, {y1}, {x2}, {y2}] lies outside the {width}x{height} frame")]
    FrameViolation {
        x1: f64,
        y1: f64,
        x2: f64,
        y2: f64,
        width: u32,
        height: u32,
    },
    #[error("scale must be finite and positive, got {0}")]
    InvalidScale(f64),
    #[error("crop of size {width}x{height} at scale {scale} produces an empty frame")]
    EmptyFrame { width: f64, height: f64, scale: f64 },
}

/// Integer image dimensions in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Dims {
    pub width: u32,
    pub height: u32,
}

impl Dims {
    pub const fn new(width: u32, height: u32) -> Self {
        Self { width, height }
    }

    /// The whole frame as a box anchored at the origin.
    pub fn frame(self) -> BoundingBox {
        BoundingBox {
            x1: 0.0,
            y1: 0.0,
            x2: f64::from(self.width),
            y2: f64::from(self.height),
        }
    }
}

impl std::fmt::Display for Dims {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}", self.width, self.height)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PixelPoint {
    pub x: f64,
    pub y: f64,
}

impl PixelPoint {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }
}

/// Axis-aligned box `[x1, y1, x2, y2]` with `x1 <= x2` and `y1 <= y2`.
///
/// Fields are private so that every box in circulation satisfies the
/// ordering invariant; use [`BoundingBox::new`] or
/// [`BoundingBox::from_corners`] to build one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundingBox {
    x1: f64,
    y1: f64,
    x2: f64,
    y2: f64,
}

impl BoundingBox {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self, GeometryError> {
        let finite = [x1, y1, x2, y2].iter().all(|v| v.is_finite());
        if !finite || x1 > x2 || y1 > y2 {
            return Err(GeometryError::InvalidBox { x1, y1, x2, y2 });
        }
        Ok(Self { x1, y1, x2, y2 })
    }

    /// Builds a box from two arbitrary corners, reordering them as needed.
    pub fn from_corners(a: PixelPoint, b: PixelPoint) -> Result<Self, GeometryError> {
        Self::new(a.x.min(b.x), a.y.min(b.y), a.x.max(b.x), a.y.max(b.y))
    }

    /// A `width` x `height` box centered on `center`.
    pub fn centered(center: PixelPoint, width: f64, height: f64) -> Result<Self, GeometryError> {
        Self::new(
            center.x - width / 2.0,
            center.y - height / 2.0,
            center.x + width / 2.0,
            center.y + height / 2.0,
        )
    }

    pub fn x1(&self) -> f64 {
        self.x1
    }
    pub fn y1(&self) -> f64 {
        self.y1
    }
    pub fn x2(&self) -> f64 {
        self.x2
    }
    pub fn y2(&self) -> f64 {
        self.y2
    }

    pub fn width(&self) -> f64 {
        self.x2 - self.x1
    }

    pub fn height(&self) -> f64 {
        self.y2 - self.y1
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.x1, self.y1, self.x2, self.y2]
    }

    pub fn top_left(&self) -> PixelPoint {
        PixelPoint::new(self.x1, self.y1)
    }

    pub fn bottom_right(&self) -> PixelPoint {
        PixelPoint::new(self.x2, self.y2)
    }

    pub fn centroid(&self) -> PixelPoint {
        centroid(self)
    }

    pub fn contains_point(&self, p: PixelPoint) -> bool {
        point_in_box(p, self)
    }

    /// True if `other` lies entirely inside `self` (closed intervals).
    pub fn contains_box(&self, other: &BoundingBox) -> bool {
        self.x1 <= other.x1 && self.y1 <= other.y1 && other.x2 <= self.x2 && other.y2 <= self.y2
    }

    /// Clips the box to `frame`, collapsing it onto the frame edge when it
    /// lies completely outside.
    pub fn clamp_to(&self, frame: Dims) -> BoundingBox {
        let w = f64::from(frame.width);
        let h = f64::from(frame.height);
        BoundingBox {
            x1: self.x1.clamp(0.0, w),
            y1: self.y1.clamp(0.0, h),
            x2: self.x2.clamp(0.0, w),
            y2: self.y2.clamp(0.0, h),
        }
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    /// Intersection over union; zero when either box has no area.
    pub fn iou(&self, other: &BoundingBox) -> f64 {
        let ix = (self.x2.min(other.x2) - self.x1.max(other.x1)).max(0.0);
        let iy = (self.y2.min(other.y2) - self.y1.max(other.y1)).max(0.0);
        let inter = ix * iy;
        let union = self.area() + other.area() - inter;
        if union > 0.0 {
            inter / union
        } else {
            0.0
        }
    }

    pub fn translate(&self, dx: f64, dy: f64) -> BoundingBox {
        BoundingBox {
            x1: self.x1 + dx,
            y1: self.y1 + dy,
            x2: self.x2 + dx,
            y2: self.y2 + dy,
        }
    }
}

impl<'de> Deserialize<'de> for BoundingBox {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            x1: f64,
            y1: f64,
            x2: f64,
            y2: f64,
        }
        let r = Raw::deserialize(de)?;
        BoundingBox::new(r.x1, r.y1, r.x2, r.y2).map_err(serde::de::Error::custom)
    }
}

impl std::fmt::Display for BoundingBox {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "[{}, {}, {}, {}]", self.x1, self.y1, self.x2, self.y2)
    }
}

pub fn centroid(b: &BoundingBox) -> PixelPoint {
    PixelPoint::new((b.x1 + b.x2) / 2.0, (b.y1 + b.y2) / 2.0)
}

/// Closed-interval containment: points on the edge count as inside.
pub fn point_in_box(p: PixelPoint, b: &BoundingBox) -> bool {
    b.x1 <= p.x && p.x <= b.x2 && b.y1 <= p.y && p.y <= b.y2
}

/// One crop-then-upscale step. `origin` is the crop's top-left corner in the
/// parent frame; a parent point `q` lands at `(q - origin) * scale` in the
/// child frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CropTransform {
    pub origin: PixelPoint,
    pub scale: f64,
    pub parent_dims: Dims,
    pub child_dims: Dims,
}

impl CropTransform {
    pub fn to_parent(&self, p: PixelPoint) -> PixelPoint {
        PixelPoint::new(
            self.origin.x + p.x / self.scale,
            self.origin.y + p.y / self.scale,
        )
    }

    pub fn to_child(&self, p: PixelPoint) -> PixelPoint {
        PixelPoint::new(
            (p.x - self.origin.x) * self.scale,
            (p.y - self.origin.y) * self.scale,
        )
    }

    /// The cropped rectangle in parent coordinates.
    pub fn crop_rect(&self) -> BoundingBox {
        BoundingBox {
            x1: self.origin.x,
            y1: self.origin.y,
            x2: self.origin.x + f64::from(self.child_dims.width) / self.scale,
            y2: self.origin.y + f64::from(self.child_dims.height) / self.scale,
        }
    }
}

/// Ordered crop transforms, outermost first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewportStack {
    base_dims: Dims,
    transforms: Vec<CropTransform>,
}

impl ViewportStack {
    pub fn new(base_dims: Dims) -> Self {
        Self {
            base_dims,
            transforms: Vec::new(),
        }
    }

    pub fn base_dims(&self) -> Dims {
        self.base_dims
    }

    pub fn transforms(&self) -> &[CropTransform] {
        &self.transforms
    }

    pub fn depth(&self) -> usize {
        self.transforms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transforms.is_empty()
    }

    /// Dimensions of the innermost view.
    pub fn current_dims(&self) -> Dims {
        self.transforms
            .last()
            .map(|t| t.child_dims)
            .unwrap_or(self.base_dims)
    }

    /// Returns a new stack with `crop_rect` (in the innermost frame) cropped
    /// and upscaled by `scale`.
    pub fn push_crop(
        &self,
        crop_rect: &BoundingBox,
        scale: f64,
    ) -> Result<ViewportStack, GeometryError> {
        if !(scale.is_finite() && scale > 0.0) {
            return Err(GeometryError::InvalidScale(scale));
        }
        let frame = self.current_dims();
        if !frame.frame().contains_box(crop_rect) {
            return Err(GeometryError::FrameViolation {
                x1: crop_rect.x1,
                y1: crop_rect.y1,
                x2: crop_rect.x2,
                y2: crop_rect.y2,
                width: frame.width,
                height: frame.height,
            });
        }
        let cw = (crop_rect.width() * scale).round();
        let ch = (crop_rect.height() * scale).round();
        if cw < 1.0 || ch < 1.0 {
            return Err(GeometryError::EmptyFrame {
                width: crop_rect.width(),
                height: crop_rect.height(),
                scale,
            });
        }
        let mut next = self.clone();
        next.transforms.push(CropTransform {
            origin: crop_rect.top_left(),
            scale,
            parent_dims: frame,
            child_dims: Dims::new(cw as u32, ch as u32),
        });
        Ok(next)
    }

    /// Maps a point in the innermost view to the original screenshot.
    pub fn to_original(&self, p: PixelPoint) -> PixelPoint {
        self.transforms.iter().rev().fold(p, |q, t| t.to_parent(q))
    }

    /// Maps a point in the original screenshot into the innermost view.
    pub fn from_original(&self, p: PixelPoint) -> PixelPoint {
        self.transforms.iter().fold(p, |q, t| t.to_child(q))
    }

    pub fn box_to_original(&self, b: &BoundingBox) -> BoundingBox {
        let a = self.to_original(b.top_left());
        let c = self.to_original(b.bottom_right());
        // Scales are positive, so corner order is preserved.
        BoundingBox {
            x1: a.x,
            y1: a.y,
            x2: c.x,
            y2: c.y,
        }
    }

    /// The region of the original screenshot visible in the innermost view.
    pub fn visible_region(&self) -> BoundingBox {
        self.box_to_original(&self.current_dims().frame())
    }
}
