//! Attention-guided localization: max-fuse attention slices, score sliding
//! windows over the fused map, take the peak, and plan the next crop.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{BoundingBox, Dims, PixelPoint};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FocusError {
    #[error("attention row has {actual} values, grid {rows}x{cols} needs {expected}")]
    RowLength {
        rows: usize,
        cols: usize,
        expected: usize,
        actual: usize,
    },
    #[error("map is {actual_rows}x{actual_cols}, expected {rows}x{cols}")]
    DimMismatch {
        rows: usize,
        cols: usize,
        actual_rows: usize,
        actual_cols: usize,
    },
    #[error("no attention slices to fuse")]
    Empty,
    #[error("window {window_rows}x{window_cols} does not fit a {rows}x{cols} map")]
    WindowTooLarge {
        window_rows: usize,
        window_cols: usize,
        rows: usize,
        cols: usize,
    },
    #[error("crop {width}x{height} does not fit the {frame} frame")]
    CropTooLarge {
        width: f64,
        height: f64,
        frame: Dims,
    },
    #[error("invalid visual grid: {0}")]
    InvalidGrid(String),
    #[error("attention value {value} at ({row}, {col}) is negative or not finite")]
    BadValue { row: usize, col: usize, value: f32 },
}

/// Pixel extent of one grid cell along each axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PatchSize {
    pub x: f64,
    pub y: f64,
}

/// The `rows x cols` tiling of a view into visual-token patches.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VisualGrid {
    pub rows: usize,
    pub cols: usize,
    pub patch: PatchSize,
    pub image_dims: Dims,
}

impl VisualGrid {
    pub fn new(
        rows: usize,
        cols: usize,
        patch: PatchSize,
        image_dims: Dims,
    ) -> Result<Self, FocusError> {
        let grid = Self {
            rows,
            cols,
            patch,
            image_dims,
        };
        grid.validate()?;
        Ok(grid)
    }

    /// Tiles `dims` with square patches of nominal size `patch_px`, rounding
    /// the cell count up and stretching the per-axis patch size so the grid
    /// covers the frame exactly.
    pub fn covering(dims: Dims, patch_px: f64) -> Self {
        let cols = (f64::from(dims.width) / patch_px).ceil().max(1.0) as usize;
        let rows = (f64::from(dims.height) / patch_px).ceil().max(1.0) as usize;
        Self {
            rows,
            cols,
            patch: PatchSize {
                x: f64::from(dims.width) / cols as f64,
                y: f64::from(dims.height) / rows as f64,
            },
            image_dims: dims,
        }
    }

    pub fn validate(&self) -> Result<(), FocusError> {
        if self.rows == 0 || self.cols == 0 {
            return Err(FocusError::InvalidGrid(format!(
                "{}x{} grid",
                self.rows, self.cols
            )));
        }
        let PatchSize { x, y } = self.patch;
        if !(x.is_finite() && x > 0.0 && y.is_finite() && y > 0.0) {
            return Err(FocusError::InvalidGrid(format!("patch size {x}x{y}")));
        }
        let dw = (self.cols as f64 * x - f64::from(self.image_dims.width)).abs();
        let dh = (self.rows as f64 * y - f64::from(self.image_dims.height)).abs();
        if dw > x + 1e-9 || dh > y + 1e-9 {
            return Err(FocusError::InvalidGrid(format!(
                "{}x{} cells of {x}x{y} px do not tile a {} frame",
                self.rows, self.cols, self.image_dims
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Grid cell containing pixel `p`, clamped to the grid.
    pub fn cell_at(&self, p: PixelPoint) -> GridCell {
        let col = (p.x / self.patch.x)
            .floor()
            .clamp(0.0, (self.cols - 1) as f64) as usize;
        let row = (p.y / self.patch.y)
            .floor()
            .clamp(0.0, (self.rows - 1) as f64) as usize;
        GridCell { row, col }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridCell {
    pub row: usize,
    pub col: usize,
}

/// Window extent in grid cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowDims {
    pub rows: usize,
    pub cols: usize,
}

/// Row-major 2-D map of attention values over the visual grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionMap {
    rows: usize,
    cols: usize,
    values: Vec<f32>,
}

impl AttentionMap {
    pub fn new(rows: usize, cols: usize, values: Vec<f32>) -> Result<Self, FocusError> {
        if values.len() != rows * cols {
            return Err(FocusError::RowLength {
                rows,
                cols,
                expected: rows * cols,
                actual: values.len(),
            });
        }
        Ok(Self { rows, cols, values })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            values: vec![0.0; rows * cols],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.values[row * self.cols + col]
    }

    pub fn row(&self, row: usize) -> &[f32] {
        &self.values[row * self.cols..(row + 1) * self.cols]
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().map(|&v| f64::from(v)).sum()
    }

    pub fn max_value(&self) -> f32 {
        self.values.iter().copied().fold(0.0, f32::max)
    }

    /// Checks the non-negative, finite value invariant.
    pub fn check_values(&self) -> Result<(), FocusError> {
        match self
            .values
            .iter()
            .position(|v| !(v.is_finite() && *v >= 0.0))
        {
            Some(i) => Err(FocusError::BadValue {
                row: i / self.cols,
                col: i % self.cols,
                value: self.values[i],
            }),
            None => Ok(()),
        }
    }

    pub fn scaled(&self, factor: f32) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            values: self.values.iter().map(|v| v * factor).collect(),
        }
    }
}

/// Attention from one probing step and one head at the hooked layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionSlice {
    pub step_id: usize,
    pub head_id: usize,
    pub map: AttentionMap,
}

/// Element-wise maximum over all slices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusedMap(pub AttentionMap);

impl FusedMap {
    pub fn map(&self) -> &AttentionMap {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowScoreField {
    rows: usize,
    cols: usize,
    window: WindowDims,
    values: Vec<f64>,
}

impl WindowScoreField {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn window(&self) -> WindowDims {
        self.window
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.cols + col]
    }
}

/// Row-major reshape of a flat visual-token attention row.
pub fn reshape_attention(row: &[f32], grid: &VisualGrid) -> Result<AttentionMap, FocusError> {
    AttentionMap::new(grid.rows, grid.cols, row.to_vec())
}

pub fn fuse_max(slices: &[AttentionSlice]) -> Result<FusedMap, FocusError> {
    let first = slices.first().ok_or(FocusError::Empty)?;
    let (rows, cols) = (first.map.rows, first.map.cols);
    let mut fused = first.map.values.clone();
    for s in &slices[1..] {
        if s.map.rows != rows || s.map.cols != cols {
            return Err(FocusError::DimMismatch {
                rows,
                cols,
                actual_rows: s.map.rows,
                actual_cols: s.map.cols,
            });
        }
        for (f, &v) in fused.iter_mut().zip(&s.map.values) {
            *f = f.max(v);
        }
    }
    Ok(FusedMap(AttentionMap {
        rows,
        cols,
        values: fused,
    }))
}

/// Unevaluated sum `hi + lo` carrying roughly twice the precision of f64.
#[derive(Debug, Clone, Copy, Default)]
struct Compensated {
    hi: f64,
    lo: f64,
}

impl Compensated {
    fn two_sum(a: f64, b: f64) -> (f64, f64) {
        let s = a + b;
        let bb = s - a;
        let err = (a - (s - bb)) + (b - bb);
        (s, err)
    }

    fn add(self, other: Compensated) -> Compensated {
        let (s, e) = Self::two_sum(self.hi, other.hi);
        let e = e + (self.lo + other.lo);
        let hi = s + e;
        Compensated {
            hi,
            lo: e - (hi - s),
        }
    }

    fn neg(self) -> Compensated {
        Compensated {
            hi: -self.hi,
            lo: -self.lo,
        }
    }

    fn sub(self, other: Compensated) -> Compensated {
        self.add(other.neg())
    }

    fn value(self) -> f64 {
        self.hi + self.lo
    }
}

/// Summed-area table with one row and column of zero padding, so that
/// `at(r, c)` is the sum of all cells strictly above and left of `(r, c)`.
struct IntegralImage {
    cols: usize,
    table: Vec<Compensated>,
}

impl IntegralImage {
    fn new(map: &AttentionMap) -> Self {
        let stride = map.cols + 1;
        let mut table = vec![Compensated::default(); (map.rows + 1) * stride];
        for r in 0..map.rows {
            let mut running = Compensated::default();
            for c in 0..map.cols {
                running = running.add(Compensated {
                    hi: f64::from(map.get(r, c)),
                    lo: 0.0,
                });
                table[(r + 1) * stride + c + 1] = table[r * stride + c + 1].add(running);
            }
        }
        Self {
            cols: map.cols,
            table,
        }
    }

    fn at(&self, r: usize, c: usize) -> Compensated {
        self.table[r * (self.cols + 1) + c]
    }

    fn block_sum(&self, top: usize, left: usize, rows: usize, cols: usize) -> f64 {
        let bottom = top + rows;
        let right = left + cols;
        let lower = self.at(bottom, right).sub(self.at(bottom, left));
        let upper = self.at(top, right).sub(self.at(top, left));
        lower.sub(upper).value()
    }
}

/// Sum of the fused map under every placement of a `window`-sized block.
pub fn window_scores(m: &FusedMap, window: WindowDims) -> Result<WindowScoreField, FocusError> {
    let map = &m.0;
    if window.rows == 0 || window.cols == 0 || window.rows > map.rows || window.cols > map.cols {
        return Err(FocusError::WindowTooLarge {
            window_rows: window.rows,
            window_cols: window.cols,
            rows: map.rows,
            cols: map.cols,
        });
    }
    let integral = IntegralImage::new(map);
    let rows = map.rows - window.rows + 1;
    let cols = map.cols - window.cols + 1;
    let mut values = Vec::with_capacity(rows * cols);
    for u in 0..rows {
        for v in 0..cols {
            values.push(integral.block_sum(u, v, window.rows, window.cols));
        }
    }
    Ok(WindowScoreField {
        rows,
        cols,
        window,
        values,
    })
}

/// Arg-max of the score field; ties go to the first cell in row-major order.
pub fn peak(s: &WindowScoreField) -> GridCell {
    let mut best = 0;
    for (i, &v) in s.values.iter().enumerate() {
        if v > s.values[best] {
            best = i;
        }
    }
    GridCell {
        row: best / s.cols,
        col: best % s.cols,
    }
}

/// Converts a pixel zoom window into grid cells: floor per axis, clamped
/// to `[1, grid extent]`.
pub fn grid_window(grid: &VisualGrid, zoom_window_px: (f64, f64)) -> WindowDims {
    let (hz, wz) = zoom_window_px;
    let rows = (hz / grid.patch.y).floor().max(1.0) as usize;
    let cols = (wz / grid.patch.x).floor().max(1.0) as usize;
    WindowDims {
        rows: rows.min(grid.rows),
        cols: cols.min(grid.cols),
    }
}

/// Pixel center of the window whose top-left cell is `peak`.
pub fn window_center(peak: GridCell, grid: &VisualGrid, window: WindowDims) -> PixelPoint {
    let center_row = peak.row as f64 + window.rows as f64 / 2.0;
    let center_col = peak.col as f64 + window.cols as f64 / 2.0;
    PixelPoint::new(center_col * grid.patch.x, center_row * grid.patch.y)
}

/// The scoring window at `peak` as a pixel rectangle in the view.
pub fn window_rect(peak: GridCell, grid: &VisualGrid, window: WindowDims) -> BoundingBox {
    let x1 = peak.col as f64 * grid.patch.x;
    let y1 = peak.row as f64 * grid.patch.y;
    BoundingBox::new(
        x1,
        y1,
        x1 + window.cols as f64 * grid.patch.x,
        y1 + window.rows as f64 * grid.patch.y,
    )
    .expect("positive patch sizes give an ordered box")
}

/// A `crop_dims` (width, height) rectangle centered on the peak window,
/// shifted (never shrunk) to lie inside the frame.
pub fn plan_crop(
    peak: GridCell,
    grid: &VisualGrid,
    window: WindowDims,
    crop_dims: (f64, f64),
) -> Result<BoundingBox, FocusError> {
    let (cw, ch) = crop_dims;
    let frame_w = f64::from(grid.image_dims.width);
    let frame_h = f64::from(grid.image_dims.height);
    if !(cw > 0.0 && ch > 0.0 && cw <= frame_w && ch <= frame_h) {
        return Err(FocusError::CropTooLarge {
            width: cw,
            height: ch,
            frame: grid.image_dims,
        });
    }
    let c = window_center(peak, grid, window);
    let x1 = (c.x - cw / 2.0).clamp(0.0, frame_w - cw);
    let y1 = (c.y - ch / 2.0).clamp(0.0, frame_h - ch);
    Ok(BoundingBox::new(x1, y1, x1 + cw, y1 + ch).expect("positive crop dims"))
}
