use std::f64::consts::PI;

use chrono::{DateTime, Utc};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use super::font::{ink, GLYPH_HEIGHT, GLYPH_WIDTH};
use super::ImagingError;
use crate::money::{Currency, Money};
use crate::vc::{BinaryImage, Pixel};

pub const DEFAULT_CAPTCHA_WINDOW_SECS: u32 = 60;

const SCALE: usize = 3;
const MAX_ROTATION_DEG: f64 = 15.0;
const MAX_WAVE_AMPLITUDE: f64 = 3.0;
const NOISE_RATE: f64 = 0.02;
const CELL_WIDTH: usize = 24;
const CELL_HEIGHT: usize = 28;
const ADVANCE: usize = 19;
const MARGIN: usize = 4;

/// A price rendered so that it is easy for a person and awkward for a program
/// to read, plus the bookkeeping to bound how long it stays usable.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PriceCaptcha {
    amount: Money,
    currency: Currency,
    rendered_image: BinaryImage,
    issued_at: DateTime<Utc>,
    nonce: String,
    valid_for_seconds: u32,
}

/// Serializable view without the bitmap.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CaptchaTicket {
    pub amount: Money,
    pub currency: Currency,
    pub issued_at: DateTime<Utc>,
    pub nonce: String,
    pub valid_for_seconds: u32,
}

impl PriceCaptcha {
    pub fn amount(&self) -> Money {
        self.amount
    }

    pub fn currency(&self) -> &Currency {
        &self.currency
    }

    pub fn rendered_image(&self) -> &BinaryImage {
        &self.rendered_image
    }

    pub fn issued_at(&self) -> DateTime<Utc> {
        self.issued_at
    }

    pub fn nonce(&self) -> &str {
        &self.nonce
    }

    pub fn valid_for_seconds(&self) -> u32 {
        self.valid_for_seconds
    }

    pub fn with_window(mut self, seconds: u32) -> Result<Self, ImagingError> {
        if seconds == 0 {
            return Err(ImagingError::ZeroWindow);
        }
        self.valid_for_seconds = seconds;
        Ok(self)
    }

    pub fn ticket(&self) -> CaptchaTicket {
        CaptchaTicket {
            amount: self.amount,
            currency: self.currency.clone(),
            issued_at: self.issued_at,
            nonce: self.nonce.clone(),
            valid_for_seconds: self.valid_for_seconds,
        }
    }

    pub fn text(&self) -> String {
        price_text(self.amount, &self.currency)
    }
}

/// Price as shown to the buyer, e.g. `1500 XOF` or `12.50 USD`.
pub fn price_text(amount: Money, currency: &Currency) -> String {
    format!(
        "{} {}",
        amount.to_decimal_string(currency, currency.exponent()),
        currency.code()
    )
}

/// Renders the price with per-glyph rotation, a sinusoidal baseline and
/// salt-and-pepper noise. All randomness comes from `seed`.
pub fn render_price_captcha(
    amount: Money,
    currency: &Currency,
    seed: u64,
    issued_at: DateTime<Utc>,
) -> Result<PriceCaptcha, ImagingError> {
    if !amount.is_positive() {
        return Err(ImagingError::NonPositiveAmount(amount.minor_units()));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut nonce = [0u8; 16];
    rng.fill_bytes(&mut nonce);

    let text: Vec<char> = price_text(amount, currency).chars().collect();
    let width = 2 * MARGIN + (text.len() - 1) * ADVANCE + CELL_WIDTH;
    let height = 2 * MARGIN + CELL_HEIGHT + 2 * MAX_WAVE_AMPLITUDE.ceil() as usize;
    let mut canvas = vec![false; width * height];

    for (i, &c) in text.iter().enumerate() {
        let angle = rng.random_range(-MAX_ROTATION_DEG..=MAX_ROTATION_DEG).to_radians();
        draw_glyph(
            &mut canvas,
            width,
            c,
            MARGIN + i * ADVANCE,
            MARGIN + MAX_WAVE_AMPLITUDE as usize,
            angle,
        );
    }

    let amplitude = rng.random_range(1.5..=MAX_WAVE_AMPLITUDE);
    let period = rng.random_range(30.0..60.0);
    let phase = rng.random_range(0.0..2.0 * PI);
    let mut warped = vec![false; width * height];
    for x in 0..width {
        let shift = (amplitude * (2.0 * PI * x as f64 / period + phase).sin()).round() as isize;
        for y in 0..height {
            let sy = y as isize - shift;
            if sy >= 0 && (sy as usize) < height {
                warped[y * width + x] = canvas[sy as usize * width + x];
            }
        }
    }

    for px in warped.iter_mut() {
        if rng.random_bool(NOISE_RATE) {
            *px = !*px;
        }
    }

    let rendered_image = BinaryImage::new(width, height, warped.into_iter().map(Pixel::from_black).collect())?;
    Ok(PriceCaptcha {
        amount,
        currency: currency.clone(),
        rendered_image,
        issued_at,
        nonce: hex::encode(nonce),
        valid_for_seconds: DEFAULT_CAPTCHA_WINDOW_SECS,
    })
}

// Inverse-maps every cell pixel through the rotation to sample the scaled glyph.
fn draw_glyph(canvas: &mut [bool], width: usize, c: char, left: usize, top: usize, angle: f64) {
    let (sin, cos) = angle.sin_cos();
    let gw = (GLYPH_WIDTH * SCALE) as f64;
    let gh = (GLYPH_HEIGHT * SCALE) as f64;
    let cx = CELL_WIDTH as f64 / 2.0;
    let cy = CELL_HEIGHT as f64 / 2.0;
    for y in 0..CELL_HEIGHT {
        for x in 0..CELL_WIDTH {
            let dx = x as f64 + 0.5 - cx;
            let dy = y as f64 + 0.5 - cy;
            let sx = cos * dx + sin * dy + gw / 2.0;
            let sy = -sin * dx + cos * dy + gh / 2.0;
            if sx < 0.0 || sy < 0.0 || sx >= gw || sy >= gh {
                continue;
            }
            if ink(c, sx as usize / SCALE, sy as usize / SCALE) {
                canvas[(top + y) * width + left + x] = true;
            }
        }
    }
}
