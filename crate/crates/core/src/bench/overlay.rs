use std::io::Write;
use std::path::{Path, PathBuf};

use tempfile::NamedTempFile;

use super::BenchError;
use crate::focus::{self, FusedMap, VisualGrid};
use crate::geometry::BoundingBox;
use crate::imageops::{self, RasterImage};
use crate::pipeline::GroundingResult;

const HEAT: [u8; 3] = [255, 214, 0];
const WINDOW_EDGE: [u8; 3] = [255, 140, 0];
const PREDICTED_EDGE: [u8; 3] = [0, 190, 60];
const TRUTH_EDGE: [u8; 3] = [220, 0, 200];
const EDGE_PX: u32 = 2;

/// Keeps ids usable as file names.
fn file_stem(id: &str) -> String {
    id.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') {
                c
            } else {
                '_'
            }
        })
        .collect()
}

/// Names `emit_overlays` writes for `result`, in order.
pub fn overlay_file_names(id: &str, result: &GroundingResult) -> Vec<String> {
    let stem = file_stem(id);
    let mut names: Vec<String> = (0..result.zoom_trail.len())
        .map(|k| format!("{stem}_zoom{k}.png"))
        .collect();
    names.push(format!("{stem}_final.png"));
    names
}

fn blend(p: [u8; 3], q: [u8; 3], alpha: f64) -> [u8; 3] {
    let mix = |a: u8, b: u8| (f64::from(a) * (1.0 - alpha) + f64::from(b) * alpha).round() as u8;
    [mix(p[0], q[0]), mix(p[1], q[1]), mix(p[2], q[2])]
}

fn heat_overlay(view: &mut RasterImage, fused: &FusedMap, grid: &VisualGrid) {
    let map = fused.map();
    let peak = f64::from(map.max_value());
    if peak <= 0.0 {
        return;
    }
    for y in 0..view.height() {
        for x in 0..view.width() {
            let cell = grid.cell_at(crate::geometry::PixelPoint::new(
                f64::from(x) + 0.5,
                f64::from(y) + 0.5,
            ));
            let t = f64::from(map.get(cell.row, cell.col)) / peak;
            let p = view.pixel(x, y);
            view.put_pixel(x, y, blend(p, HEAT, 0.7 * t));
        }
    }
}

fn outline(img: &mut RasterImage, b: &BoundingBox, colour: [u8; 3]) {
    let c = b.clamp_to(img.dims());
    let x1 = c.x1().floor() as u32;
    let y1 = c.y1().floor() as u32;
    let x2 = (c.x2().ceil() as u32).max(x1 + 1);
    let y2 = (c.y2().ceil() as u32).max(y1 + 1);
    img.fill_rect(x1, y1, x2, y1 + EDGE_PX, colour);
    img.fill_rect(x1, y2.saturating_sub(EDGE_PX), x2, y2, colour);
    img.fill_rect(x1, y1, x1 + EDGE_PX, y2, colour);
    img.fill_rect(x2.saturating_sub(EDGE_PX), y1, x2, y2, colour);
}

fn render(
    result: &GroundingResult,
    image: &RasterImage,
    gt: Option<&BoundingBox>,
) -> Result<Vec<Vec<u8>>, BenchError> {
    let err = |e: imageops::ImageError| BenchError::Overlay(e.to_string());
    let mut pngs = Vec::with_capacity(result.zoom_trail.len() + 1);
    let mut view = image.clone();
    for step in &result.zoom_trail {
        let mut canvas = view.clone();
        heat_overlay(&mut canvas, &step.fused, &step.grid);
        outline(
            &mut canvas,
            &focus::window_rect(step.peak, &step.grid, step.window),
            WINDOW_EDGE,
        );
        pngs.push(canvas.encode_png().map_err(err)?);
        view = imageops::upscale_bicubic(
            &imageops::crop(&view, &step.crop_in_view).map_err(err)?,
            step.scale,
        )
        .map_err(err)?;
    }
    let mut last = image.clone();
    if let Some(gt) = gt {
        outline(&mut last, gt, TRUTH_EDGE);
    }
    outline(&mut last, &result.predicted_box, PREDICTED_EDGE);
    pngs.push(last.encode_png().map_err(err)?);
    Ok(pngs)
}

/// Writes one heat-map PNG per zoom step plus a final PNG with the
/// predicted (green) and ground-truth (magenta) boxes. Each file goes
/// through a temporary in `out_dir`; on any failure the files already
/// placed are removed again.
pub fn emit_overlays(
    id: &str,
    result: &GroundingResult,
    image: &RasterImage,
    gt: Option<&BoundingBox>,
    out_dir: &Path,
) -> Result<Vec<PathBuf>, BenchError> {
    let pngs = render(result, image, gt)?;
    let names = overlay_file_names(id, result);
    let mut written: Vec<PathBuf> = Vec::with_capacity(pngs.len());
    let io_err = |path: &Path, source| BenchError::Io {
        path: path.to_path_buf(),
        source,
    };
    for (name, bytes) in names.iter().zip(&pngs) {
        let target = out_dir.join(name);
        let placed = NamedTempFile::new_in(out_dir)
            .map_err(|e| io_err(out_dir, e))
            .and_then(|mut tmp| {
                tmp.write_all(bytes).map_err(|e| io_err(tmp.path(), e))?;
                tmp.persist(&target).map_err(|e| io_err(&target, e.error))
            });
        if let Err(e) = placed {
            for p in &written {
                let _ = std::fs::remove_file(p);
            }
            return Err(e);
        }
        written.push(target);
    }
    Ok(written)
}
