mod common;

use proptest::prelude::*;
use zoomground::imageops::{crop, upscale_bicubic, RasterImage};
use zoomground::BoundingBox;

fn image_strategy(max: u32) -> impl Strategy<Value = RasterImage> {
    (1..=max, 1..=max).prop_flat_map(|(w, h)| {
        prop::collection::vec(any::<u8>(), (w * h * 3) as usize)
            .prop_map(move |px| RasterImage::new(w, h, px).unwrap())
    })
}

proptest! {
    #[test]
    fn factor_two_matches_reference(img in image_strategy(12)) {
        let out = upscale_bicubic(&img, 2.0).unwrap();
        let (want, ow, oh) = common::bicubic_reference(img.pixels(), img.width() as usize, img.height() as usize, 2.0);
        prop_assert_eq!((out.width() as usize, out.height() as usize), (ow, oh));
        prop_assert_eq!(out.pixels(), &want[..]);
    }

    #[test]
    fn factor_one_is_identity(img in image_strategy(12)) {
        let out = upscale_bicubic(&img, 1.0).unwrap();
        prop_assert_eq!(out, img);
    }

    #[test]
    fn fractional_factor_is_within_one_level(img in image_strategy(9), factor in 1.0f64..3.5) {
        let out = upscale_bicubic(&img, factor).unwrap();
        let (want, ow, oh) = common::bicubic_reference(img.pixels(), img.width() as usize, img.height() as usize, factor);
        prop_assert_eq!((out.width() as usize, out.height() as usize), (ow, oh));
        for (a, b) in out.pixels().iter().zip(&want) {
            prop_assert!(a.abs_diff(*b) <= 1);
        }
    }
}

#[test]
fn crop_then_upscale_keeps_constant_view_size() {
    let img = RasterImage::filled(2560, 1440, [10, 20, 30]).unwrap();
    let rect = BoundingBox::new(640.0, 360.0, 1920.0, 1080.0).unwrap();
    let view = upscale_bicubic(&crop(&img, &rect).unwrap(), 2.0).unwrap();
    assert_eq!((view.width(), view.height()), (2560, 1440));
    assert!(view.pixels().chunks(3).all(|p| p == [10, 20, 30]));
}

#[test]
fn upscale_below_one_is_rejected() {
    let img = RasterImage::filled(4, 4, [0, 0, 0]).unwrap();
    assert!(upscale_bicubic(&img, 0.5).is_err());
    assert!(upscale_bicubic(&img, f64::NAN).is_err());
}
