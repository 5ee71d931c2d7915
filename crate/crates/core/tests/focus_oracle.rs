mod common;

use proptest::prelude::*;
use zoomground::focus::{
    fuse_max, grid_window, peak, plan_crop, window_scores, AttentionMap, AttentionSlice, FusedMap,
    GridCell, PatchSize, VisualGrid, WindowDims,
};
use zoomground::Dims;

fn map_strategy() -> impl Strategy<Value = (usize, usize, Vec<f32>)> {
    (1usize..=24, 1usize..=24).prop_flat_map(|(r, c)| {
        // Small integer levels make exact ties common.
        let cell = prop_oneof![(0u8..4).prop_map(|k| f32::from(k) * 0.25), 0.0f32..1.0];
        prop::collection::vec(cell, r * c).prop_map(move |v| (r, c, v))
    })
}

fn rel_close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

proptest! {
    #[test]
    fn window_sums_and_peak_match_naive((rows, cols, values) in map_strategy(), hz in 1usize..=24, wz in 1usize..=24) {
        let hz = hz.min(rows);
        let wz = wz.min(cols);
        let fused = FusedMap(AttentionMap::new(rows, cols, values.clone()).unwrap());
        let field = window_scores(&fused, WindowDims { rows: hz, cols: wz }).unwrap();
        let naive = common::window_sums_naive(&values, rows, cols, hz, wz);
        prop_assert_eq!(field.values().len(), naive.len());
        for (a, b) in field.values().iter().zip(&naive) {
            prop_assert!(rel_close(*a, *b), "{} vs {}", a, b);
        }
        let (r, c) = common::argmax_naive(&naive, cols - wz + 1);
        prop_assert_eq!(peak(&field), GridCell { row: r, col: c });
    }

    #[test]
    fn fusion_is_elementwise_max(maps in prop::collection::vec(prop::collection::vec(0.0f32..0.2, 12), 1..6)) {
        let slices: Vec<AttentionSlice> = maps
            .iter()
            .enumerate()
            .map(|(i, v)| AttentionSlice { step_id: i, head_id: 0, map: AttentionMap::new(3, 4, v.clone()).unwrap() })
            .collect();
        let fused = fuse_max(&slices).unwrap();
        for k in 0..12 {
            let want = maps.iter().map(|m| m[k]).fold(f32::MIN, f32::max);
            prop_assert_eq!(fused.map().values()[k], want);
        }
    }

    #[test]
    fn crops_stay_inside_the_frame(row in 0usize..52, col in 0usize..92, cw in 1.0f64..2560.0, ch in 1.0f64..1440.0) {
        let grid = VisualGrid::covering(Dims::new(2560, 1440), 28.0);
        let window = grid_window(&grid, (784.0, 784.0));
        let row = row.min(grid.rows - window.rows);
        let col = col.min(grid.cols - window.cols);
        let rect = plan_crop(GridCell { row, col }, &grid, window, (cw, ch)).unwrap();
        prop_assert!(Dims::new(2560, 1440).frame().contains_box(&rect));
        prop_assert!((rect.width() - cw).abs() < 1e-9 && (rect.height() - ch).abs() < 1e-9);
    }
}

#[test]
fn uniform_map_ties_resolve_to_origin() {
    let fused = FusedMap(AttentionMap::new(6, 7, vec![0.5; 42]).unwrap());
    let field = window_scores(&fused, WindowDims { rows: 2, cols: 3 }).unwrap();
    assert_eq!(peak(&field), GridCell { row: 0, col: 0 });
}

#[test]
fn non_square_patches_give_per_axis_windows() {
    let grid =
        VisualGrid::new(10, 20, PatchSize { x: 14.0, y: 28.0 }, Dims::new(280, 280)).unwrap();
    let w = grid_window(&grid, (112.0, 112.0));
    assert_eq!(w, WindowDims { rows: 4, cols: 8 });
}
