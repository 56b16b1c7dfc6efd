use chrono::{Duration, TimeZone, Utc};
use pgs_core::imaging::{
    binarize, capture_window, render_price_captcha, BinarizeMethod, CaptureWindow, GrayscaleImage, ImagingError,
};
use pgs_core::money::{Currency, Money};
use pgs_core::pnm::{decode_any, decode_pbm, decode_pgm, encode_pbm, encode_pbm_ascii, encode_pgm, AnyImage};
use pgs_core::vc::{BinaryImage, Pixel};
use proptest::prelude::*;

fn arb_gray() -> impl Strategy<Value = GrayscaleImage> {
    (1usize..30, 1usize..20).prop_flat_map(|(w, h)| {
        proptest::collection::vec(any::<u8>(), w * h).prop_map(move |s| GrayscaleImage::new(w, h, s).unwrap())
    })
}

fn arb_binary() -> impl Strategy<Value = BinaryImage> {
    (1usize..40, 1usize..20).prop_flat_map(|(w, h)| {
        proptest::collection::vec(any::<bool>(), w * h).prop_map(move |b| BinaryImage::from_bits(w, h, &b).unwrap())
    })
}

proptest! {
    #[test]
    fn pgm_round_trip(img in arb_gray()) {
        prop_assert_eq!(decode_pgm(&encode_pgm(&img)).unwrap(), img);
    }

    #[test]
    fn raw_and_plain_pbm_agree(img in arb_binary()) {
        prop_assert_eq!(decode_pbm(&encode_pbm(&img)).unwrap(), img.clone());
        prop_assert_eq!(decode_pbm(&encode_pbm_ascii(&img)).unwrap(), img.clone());
        match decode_any(&encode_pbm(&img)).unwrap() {
            AnyImage::Binary(b) => prop_assert_eq!(b, img),
            AnyImage::Gray(_) => prop_assert!(false, "PBM decoded as gray"),
        }
    }

    /// Pure black and white input carries no quantization error, so error
    /// diffusion must reproduce it exactly.
    #[test]
    fn error_diffusion_keeps_two_level_images(img in arb_binary()) {
        let gray = GrayscaleImage::from_fn(img.width(), img.height(), |x, y| {
            if img.get(x, y).is_black() { 0 } else { 255 }
        })
        .unwrap();
        prop_assert_eq!(binarize(&gray, BinarizeMethod::ErrorDiffusion), img);
    }

    /// Mean darkness is preserved to within a small tolerance.
    #[test]
    fn error_diffusion_preserves_tone(level in 0u8..=255) {
        let gray = GrayscaleImage::uniform(64, 64, level).unwrap();
        let out = binarize(&gray, BinarizeMethod::ErrorDiffusion);
        let black = out.black_count() as f64 / (64.0 * 64.0);
        let want = 1.0 - level as f64 / 255.0;
        prop_assert!((black - want).abs() < 0.02, "level {} gave {} black", level, black);
    }

    #[test]
    fn capture_window_is_inclusive(delay in -30i64..200, window in 1u32..120) {
        let issued = Utc.with_ymd_and_hms(2016, 9, 8, 11, 0, 0).unwrap();
        let got = capture_window(issued, window, issued + Duration::seconds(delay));
        match got {
            Err(ImagingError::ClockSkew { .. }) => prop_assert!(delay < 0),
            Ok(CaptureWindow::WithinWindow) => prop_assert!((0..=window as i64).contains(&delay)),
            Ok(CaptureWindow::Expired) => prop_assert!(delay > window as i64),
            Err(e) => prop_assert!(false, "{}", e),
        }
    }

    #[test]
    fn captcha_is_a_pure_function_of_its_inputs(amount in 1i64..10_000_000, seed in any::<u64>()) {
        let at = Utc.with_ymd_and_hms(2016, 9, 8, 11, 0, 0).unwrap();
        let a = render_price_captcha(Money(amount), &Currency::xof(), seed, at).unwrap();
        let b = render_price_captcha(Money(amount), &Currency::xof(), seed, at).unwrap();
        prop_assert_eq!(a.rendered_image(), b.rendered_image());
        prop_assert_eq!(a.nonce(), b.nonce());
        prop_assert_eq!(a.text(), format!("{} XOF", amount));
        prop_assert!(a.rendered_image().black_count() > 0);
    }
}

#[test]
fn captcha_noise_differs_between_seeds() {
    let at = Utc.with_ymd_and_hms(2016, 9, 8, 11, 0, 0).unwrap();
    let a = render_price_captcha(Money(1500), &Currency::xof(), 1, at).unwrap();
    let b = render_price_captcha(Money(1500), &Currency::xof(), 2, at).unwrap();
    assert_ne!(a.rendered_image(), b.rendered_image());
    assert_ne!(a.nonce(), b.nonce());
    assert!(render_price_captcha(Money(0), &Currency::xof(), 1, at).is_err());
}

#[test]
fn plain_pbm_from_a_text_editor() {
    let img = decode_pbm(b"P1\n# a 3x2 glyph\n3 2\n1 0 1\n0 1 0\n").unwrap();
    let want = BinaryImage::from_fn(3, 2, |x, y| Pixel::from_black((x + y) % 2 == 0)).unwrap();
    assert_eq!(img, want);
}
