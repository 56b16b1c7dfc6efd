//! Simulated phones: a stand-in camera photo, the price captcha overlay and
//! share generation, as the seller's app would do them.

use anyhow::Result;
use chrono::{DateTime, Utc};
use pgs_core::imaging::{
    binarize, compose_selfie, render_price_captcha, Anchor, BinarizeMethod, GrayscaleImage, PriceCaptcha,
};
use pgs_core::money::{Currency, Money};
use pgs_core::vc::{generate_shares, BinaryImage, Share, ShareSeed};

pub const PHOTO_WIDTH: usize = 320;
pub const PHOTO_HEIGHT: usize = 160;

/// Two faces on a graded backdrop. The seed shifts them a little so
/// different purchases do not produce identical pictures.
pub fn synthetic_photo(width: usize, height: usize, seed: u64) -> GrayscaleImage {
    let shift = (seed % 9) as f64 - 4.0;
    let faces = [
        (width as f64 * 0.28 + shift, height as f64 * 0.42),
        (width as f64 * 0.58 - shift, height as f64 * 0.45),
    ];
    let (rx, ry) = (height as f64 * 0.18, height as f64 * 0.26);
    GrayscaleImage::from_fn(width, height, |x, y| {
        let (fx, fy) = (x as f64, y as f64);
        let mut level = 210.0 - 90.0 * fy / height as f64;
        for &(cx, cy) in &faces {
            let (dx, dy) = ((fx - cx) / rx, (fy - cy) / ry);
            let d = dx * dx + dy * dy;
            if d <= 1.0 {
                level = 150.0 + 40.0 * (1.0 - d);
                let eye = |ex: f64| {
                    let (ax, ay) = ((fx - ex) / (rx * 0.18), (fy - (cy - ry * 0.25)) / (ry * 0.1));
                    ax * ax + ay * ay <= 1.0
                };
                if eye(cx - rx * 0.4) || eye(cx + rx * 0.4) {
                    level = 30.0;
                }
                let my = cy + ry * 0.45 - 6.0 * (1.0 - (dx / 0.5).powi(2)).max(0.0);
                if dx.abs() < 0.5 && (fy - my).abs() < 1.5 {
                    level = 50.0;
                }
            }
        }
        level.clamp(0.0, 255.0) as u8
    })
    .expect("photo dimensions are nonzero")
}

pub struct Selfie {
    pub image: BinaryImage,
    pub captcha: PriceCaptcha,
    pub seller_share: Share,
    pub buyer_share: Share,
}

/// Binarizes `photo`, stamps the captcha in the bottom-right corner and
/// splits the result.
pub fn take_selfie(
    photo: &GrayscaleImage,
    amount: Money,
    currency: &Currency,
    seed: u64,
    issued_at: DateTime<Utc>,
) -> Result<Selfie> {
    let captcha = render_price_captcha(amount, currency, seed, issued_at)?;
    let image = compose_selfie(
        &binarize(photo, BinarizeMethod::ErrorDiffusion),
        &captcha,
        Anchor::default(),
    )?;
    let (seller_share, buyer_share) = generate_shares(&image, ShareSeed::from_u64(seed))?;
    Ok(Selfie {
        image,
        captcha,
        seller_share,
        buyer_share,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;
    use pgs_core::vc::{decode, stack};

    #[test]
    fn selfie_round_trips_and_fits_long_prices() {
        let photo = synthetic_photo(PHOTO_WIDTH, PHOTO_HEIGHT, 3);
        let at = Utc.with_ymd_and_hms(2016, 9, 8, 11, 0, 0).unwrap();
        let s = take_selfie(&photo, Money(9_999_999_999), &Currency::xof(), 3, at).unwrap();
        let decoded = decode(&stack(&[&s.seller_share, &s.buyer_share]).unwrap()).unwrap();
        assert_eq!(decoded, s.image);
        assert_eq!(s.seller_share.width(), 2 * PHOTO_WIDTH);
    }

    #[test]
    fn photo_is_not_flat() {
        let p = synthetic_photo(PHOTO_WIDTH, PHOTO_HEIGHT, 0);
        let dark = p.samples().iter().filter(|&&v| v < 60).count();
        assert!(dark > 20);
        assert!(p.mean() > 100.0);
    }
}
