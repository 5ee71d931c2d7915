use proptest::prelude::*;
use zoomground::geometry::{centroid, point_in_box};
use zoomground::{BoundingBox, Dims, PixelPoint, ViewportStack};

/// Every prefix of a stack of up to five random crops, each 10-100 % of
/// its parent.
fn prefixes_strategy() -> impl Strategy<Value = Vec<ViewportStack>> {
    let step = (
        0.1f64..1.0,
        0.1f64..1.0,
        0.0f64..1.0,
        0.0f64..1.0,
        1.0f64..4.0,
    );
    (
        (64u32..4000, 64u32..3000),
        prop::collection::vec(step, 0..=5),
    )
        .prop_map(|((w, h), steps)| {
            let mut stack = ViewportStack::new(Dims::new(w, h));
            let mut all = vec![stack.clone()];
            for (fw, fh, ox, oy, scale) in steps {
                let d = stack.current_dims();
                let (pw, ph) = (f64::from(d.width), f64::from(d.height));
                let (cw, ch) = ((fw * pw).max(1.0), (fh * ph).max(1.0));
                let x1 = ox * (pw - cw);
                let y1 = oy * (ph - ch);
                let rect = BoundingBox::new(x1, y1, x1 + cw, y1 + ch).unwrap();
                stack = stack.push_crop(&rect, scale).unwrap();
                all.push(stack.clone());
            }
            all
        })
}

/// Crops the way the pipeline makes them: whole-pixel rectangles whose
/// scaled size is also whole.
fn integer_prefixes_strategy() -> impl Strategy<Value = Vec<ViewportStack>> {
    let step = (0.1f64..1.0, 0.0f64..1.0, 0.0f64..1.0, 1u32..=4);
    (
        (64u32..4000, 64u32..3000),
        prop::collection::vec(step, 0..=5),
    )
        .prop_map(|((w, h), steps)| {
            let mut stack = ViewportStack::new(Dims::new(w, h));
            let mut all = vec![stack.clone()];
            for (f, ox, oy, scale) in steps {
                let d = stack.current_dims();
                let cw = ((f * f64::from(d.width)).floor() as u32).max(1);
                let ch = ((f * f64::from(d.height)).floor() as u32).max(1);
                let x1 = (ox * f64::from(d.width - cw)).floor();
                let y1 = (oy * f64::from(d.height - ch)).floor();
                let rect =
                    BoundingBox::new(x1, y1, x1 + f64::from(cw), y1 + f64::from(ch)).unwrap();
                stack = stack.push_crop(&rect, f64::from(scale)).unwrap();
                all.push(stack.clone());
            }
            all
        })
}

fn stack_strategy() -> impl Strategy<Value = ViewportStack> {
    prefixes_strategy().prop_map(|mut v| v.pop().unwrap())
}

proptest! {
    #[test]
    fn points_round_trip(stack in stack_strategy(), fx in 0.0f64..1.0, fy in 0.0f64..1.0) {
        let d = stack.current_dims();
        let p = PixelPoint::new(fx * f64::from(d.width), fy * f64::from(d.height));
        let back = stack.from_original(stack.to_original(p));
        prop_assert!((back.x - p.x).abs() < 1e-6 && (back.y - p.y).abs() < 1e-6);
    }

    #[test]
    fn centroid_commutes_with_back_projection(stack in stack_strategy(), a in 0.0f64..1.0, b in 0.0f64..1.0, c in 0.0f64..1.0, e in 0.0f64..1.0) {
        let d = stack.current_dims();
        let (w, h) = (f64::from(d.width), f64::from(d.height));
        let bx = BoundingBox::from_corners(PixelPoint::new(a * w, b * h), PixelPoint::new(c * w, e * h)).unwrap();
        let lhs = centroid(&stack.box_to_original(&bx));
        let rhs = stack.to_original(centroid(&bx));
        prop_assert!((lhs.x - rhs.x).abs() < 1e-6 && (lhs.y - rhs.y).abs() < 1e-6);
    }

    #[test]
    fn visible_regions_nest(prefixes in prefixes_strategy()) {
        for pair in prefixes.windows(2) {
            let (outer, inner) = (pair[0].visible_region(), pair[1].visible_region());
            // Child dims are rounded to whole pixels, so the far edge may
            // overshoot the requested crop by half a child pixel.
            let zoom: f64 = pair[1].transforms().iter().map(|t| t.scale).product();
            let slack = 0.5 / zoom + 1e-6;
            prop_assert!(inner.x1() >= outer.x1() - 1e-6 && inner.y1() >= outer.y1() - 1e-6);
            prop_assert!(inner.x2() <= outer.x2() + slack && inner.y2() <= outer.y2() + slack);
        }
    }

    #[test]
    fn integer_crops_nest_exactly(prefixes in integer_prefixes_strategy()) {
        for pair in prefixes.windows(2) {
            let (outer, inner) = (pair[0].visible_region(), pair[1].visible_region());
            prop_assert!(inner.x1() >= outer.x1() - 1e-6 && inner.y1() >= outer.y1() - 1e-6);
            prop_assert!(inner.x2() <= outer.x2() + 1e-6 && inner.y2() <= outer.y2() + 1e-6);
        }
    }

    #[test]
    fn box_centroid_is_inside(x1 in -1e4f64..1e4, y1 in -1e4f64..1e4, w in 0.0f64..1e4, h in 0.0f64..1e4) {
        let b = BoundingBox::new(x1, y1, x1 + w, y1 + h).unwrap();
        prop_assert!(point_in_box(b.centroid(), &b));
    }
}
