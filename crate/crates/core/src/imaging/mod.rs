//! Seller-side image pipeline: grayscale selfie to black-and-white, price
//! captcha overlay, and the capture-window check on share generation.

mod captcha;
mod dither;
mod font;

pub use captcha::{price_text, render_price_captcha, CaptchaTicket, PriceCaptcha, DEFAULT_CAPTCHA_WINDOW_SECS};
pub use dither::{binarize, BinarizeMethod};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::money::InvalidCurrency;
use crate::vc::{BinaryImage, VcError};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ImagingError {
    #[error("amount must be positive, got {0}")]
    NonPositiveAmount(i64),
    #[error(transparent)]
    Currency(#[from] InvalidCurrency),
    #[error("captcha window must be positive")]
    ZeroWindow,
    #[error(
        "captcha {captcha_width}x{captcha_height} does not fit in {selfie_width}x{selfie_height} at margin {margin}"
    )]
    DoesNotFit {
        captcha_width: usize,
        captcha_height: usize,
        selfie_width: usize,
        selfie_height: usize,
        margin: usize,
    },
    #[error("share generated at {generated_at} precedes captcha issue time {issued_at}")]
    ClockSkew {
        issued_at: DateTime<Utc>,
        generated_at: DateTime<Utc>,
    },
    #[error(transparent)]
    Image(#[from] VcError),
}

/// 8-bit luminance image, row-major. 0 is black, 255 is white.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayscaleImage {
    width: usize,
    height: usize,
    samples: Vec<u8>,
}

impl GrayscaleImage {
    pub fn new(width: usize, height: usize, samples: Vec<u8>) -> Result<Self, VcError> {
        if width == 0 || height == 0 {
            return Err(VcError::Empty { width, height });
        }
        if samples.len() != width * height {
            return Err(VcError::BufferLength {
                expected: width * height,
                actual: samples.len(),
            });
        }
        Ok(Self { width, height, samples })
    }

    pub fn uniform(width: usize, height: usize, level: u8) -> Result<Self, VcError> {
        Self::new(width, height, vec![level; width * height])
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> u8) -> Result<Self, VcError> {
        let mut samples = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                samples.push(f(x, y));
            }
        }
        Self::new(width, height, samples)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn samples(&self) -> &[u8] {
        &self.samples
    }

    pub fn mean(&self) -> f64 {
        self.samples.iter().map(|&s| s as f64).sum::<f64>() / self.samples.len() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Corner {
    TopLeft,
    TopRight,
    BottomLeft,
    BottomRight,
}

/// Where the captcha goes inside the selfie.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Anchor {
    pub corner: Corner,
    /// Distance in pixels from both edges meeting at the corner.
    pub margin: usize,
}

impl Anchor {
    pub fn new(corner: Corner, margin: usize) -> Self {
        Self { corner, margin }
    }

    /// Top-left position of a `w`x`h` overlay inside a `sw`x`sh` image.
    pub fn origin(&self, w: usize, h: usize, sw: usize, sh: usize) -> Result<(usize, usize), ImagingError> {
        let m = self.margin;
        if w + m > sw || h + m > sh {
            return Err(ImagingError::DoesNotFit {
                captcha_width: w,
                captcha_height: h,
                selfie_width: sw,
                selfie_height: sh,
                margin: m,
            });
        }
        Ok(match self.corner {
            Corner::TopLeft => (m, m),
            Corner::TopRight => (sw - w - m, m),
            Corner::BottomLeft => (m, sh - h - m),
            Corner::BottomRight => (sw - w - m, sh - h - m),
        })
    }
}

impl Default for Anchor {
    fn default() -> Self {
        Self::new(Corner::BottomRight, 0)
    }
}

/// Overwrites the anchored region of `selfie` with the captcha bitmap. This
/// stands in for the buyer's phone screen being visible in the photo.
pub fn compose_selfie(
    selfie: &BinaryImage,
    captcha: &PriceCaptcha,
    anchor: Anchor,
) -> Result<BinaryImage, ImagingError> {
    let overlay = captcha.rendered_image();
    let (ox, oy) = anchor.origin(overlay.width(), overlay.height(), selfie.width(), selfie.height())?;
    let mut out = selfie.clone();
    for y in 0..overlay.height() {
        for x in 0..overlay.width() {
            out.set(ox + x, oy + y, overlay.get(x, y));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum CaptureWindow {
    WithinWindow,
    Expired,
}

/// Window check on raw timestamps; the upper bound is inclusive.
pub fn capture_window(
    issued_at: DateTime<Utc>,
    valid_for_seconds: u32,
    generated_at: DateTime<Utc>,
) -> Result<CaptureWindow, ImagingError> {
    if generated_at < issued_at {
        return Err(ImagingError::ClockSkew {
            issued_at,
            generated_at,
        });
    }
    let elapsed = generated_at - issued_at;
    if elapsed <= chrono::Duration::seconds(valid_for_seconds as i64) {
        Ok(CaptureWindow::WithinWindow)
    } else {
        Ok(CaptureWindow::Expired)
    }
}

/// Were the shares generated while the captcha was still valid?
pub fn check_capture_window(
    captcha: &PriceCaptcha,
    share_generated_at: DateTime<Utc>,
) -> Result<CaptureWindow, ImagingError> {
    capture_window(captcha.issued_at(), captcha.valid_for_seconds(), share_generated_at)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::money::{Currency, Money};
    use crate::vc::Pixel;
    use chrono::TimeZone;

    fn t0() -> DateTime<Utc> {
        Utc.with_ymd_and_hms(2016, 9, 8, 11, 2, 45).unwrap()
    }

    fn captcha(seed: u64) -> PriceCaptcha {
        render_price_captcha(Money(1500), &Currency::xof(), seed, t0()).unwrap()
    }

    #[test]
    fn compose_then_crop_gives_captcha() {
        let c = captcha(3);
        let selfie = BinaryImage::from_fn(200, 120, |x, y| Pixel::from_black((x + y) % 3 == 0)).unwrap();
        for corner in [
            Corner::TopLeft,
            Corner::TopRight,
            Corner::BottomLeft,
            Corner::BottomRight,
        ] {
            let anchor = Anchor::new(corner, 4);
            let out = compose_selfie(&selfie, &c, anchor).unwrap();
            assert_eq!((out.width(), out.height()), (200, 120));
            let img = c.rendered_image();
            let (ox, oy) = anchor.origin(img.width(), img.height(), 200, 120).unwrap();
            assert_eq!(&out.crop(ox, oy, img.width(), img.height()).unwrap(), img);
        }
    }

    #[test]
    fn compose_on_white_counts_captcha_pixels() {
        let c = captcha(5);
        let selfie = BinaryImage::filled(300, 100, Pixel::White).unwrap();
        let out = compose_selfie(&selfie, &c, Anchor::new(Corner::TopLeft, 0)).unwrap();
        assert_eq!(out.black_count(), c.rendered_image().black_count());
    }

    #[test]
    fn compose_rejects_small_selfie() {
        let c = captcha(1);
        let selfie = BinaryImage::filled(10, 10, Pixel::White).unwrap();
        assert!(matches!(
            compose_selfie(&selfie, &c, Anchor::default()),
            Err(ImagingError::DoesNotFit { .. })
        ));
        let w = c.rendered_image().width();
        let h = c.rendered_image().height();
        let exact = BinaryImage::filled(w, h, Pixel::White).unwrap();
        assert!(compose_selfie(&exact, &c, Anchor::new(Corner::TopRight, 0)).is_ok());
        assert!(compose_selfie(&exact, &c, Anchor::new(Corner::TopRight, 1)).is_err());
    }

    #[test]
    fn capture_window_boundaries() {
        let c = captcha(2);
        assert_eq!(c.valid_for_seconds(), 60);
        let at = |s| t0() + chrono::Duration::seconds(s);
        assert_eq!(check_capture_window(&c, at(10)).unwrap(), CaptureWindow::WithinWindow);
        assert_eq!(check_capture_window(&c, at(60)).unwrap(), CaptureWindow::WithinWindow);
        assert_eq!(check_capture_window(&c, at(61)).unwrap(), CaptureWindow::Expired);
        assert_eq!(check_capture_window(&c, at(0)).unwrap(), CaptureWindow::WithinWindow);
        assert!(matches!(
            check_capture_window(&c, at(-1)),
            Err(ImagingError::ClockSkew { .. })
        ));
    }
}
