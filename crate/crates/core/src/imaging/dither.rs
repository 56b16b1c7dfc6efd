use serde::{Deserialize, Serialize};

use super::GrayscaleImage;
use crate::vc::{BinaryImage, Pixel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", tag = "method", content = "level")]
pub enum BinarizeMethod {
    /// Floyd–Steinberg error diffusion, serpentine scan.
    #[default]
    ErrorDiffusion,
    /// Samples strictly below the level become black.
    FixedThreshold(u8),
}

/// Converts a grayscale image to black and white.
pub fn binarize(img: &GrayscaleImage, method: BinarizeMethod) -> BinaryImage {
    let (w, h) = (img.width(), img.height());
    let pixels = match method {
        BinarizeMethod::FixedThreshold(level) => img.samples().iter().map(|&s| Pixel::from_black(s < level)).collect(),
        BinarizeMethod::ErrorDiffusion => floyd_steinberg(img),
    };
    BinaryImage::new(w, h, pixels).expect("same dimensions as a valid grayscale image")
}

// Even rows run left to right, odd rows right to left. Error that would land
// outside the image is dropped.
fn floyd_steinberg(img: &GrayscaleImage) -> Vec<Pixel> {
    let (w, h) = (img.width(), img.height());
    let mut buf: Vec<f32> = img.samples().iter().map(|&s| s as f32).collect();
    let mut out = vec![Pixel::White; w * h];

    let spread = |buf: &mut [f32], x: isize, y: usize, amount: f32| {
        if x >= 0 && (x as usize) < w && y < h {
            buf[y * w + x as usize] += amount;
        }
    };

    for y in 0..h {
        let forward = y % 2 == 0;
        let dir: isize = if forward { 1 } else { -1 };
        for i in 0..w {
            let x = if forward { i } else { w - 1 - i };
            let old = buf[y * w + x];
            let black = old < 128.0;
            let new = if black { 0.0 } else { 255.0 };
            out[y * w + x] = Pixel::from_black(black);
            let err = old - new;
            let xi = x as isize;
            spread(&mut buf, xi + dir, y, err * 7.0 / 16.0);
            spread(&mut buf, xi - dir, y + 1, err * 3.0 / 16.0);
            spread(&mut buf, xi, y + 1, err * 5.0 / 16.0);
            spread(&mut buf, xi + dir, y + 1, err * 1.0 / 16.0);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn black_ratio(img: &BinaryImage) -> f64 {
        img.black_count() as f64 / (img.width() * img.height()) as f64
    }

    #[test]
    fn extremes() {
        let black = GrayscaleImage::uniform(8, 8, 0).unwrap();
        assert_eq!(black_ratio(&binarize(&black, BinarizeMethod::FixedThreshold(128))), 1.0);
        let white = GrayscaleImage::uniform(8, 8, 255).unwrap();
        for m in [BinarizeMethod::ErrorDiffusion, BinarizeMethod::FixedThreshold(128)] {
            assert_eq!(binarize(&white, m).black_count(), 0);
        }
    }

    #[test]
    fn threshold_is_strict() {
        let img = GrayscaleImage::new(3, 1, vec![99, 100, 101]).unwrap();
        let out = binarize(&img, BinarizeMethod::FixedThreshold(100));
        assert_eq!(out.pixels(), &[Pixel::Black, Pixel::White, Pixel::White]);
    }

    #[test]
    fn mid_gray_diffuses_to_half() {
        for level in [127u8, 128] {
            let img = GrayscaleImage::uniform(64, 64, level).unwrap();
            let r = black_ratio(&binarize(&img, BinarizeMethod::ErrorDiffusion));
            assert!((0.48..=0.52).contains(&r), "level {level}: {r}");
        }
    }

    #[test]
    fn diffusion_preserves_mean() {
        for level in (0..=255).step_by(15) {
            let img = GrayscaleImage::uniform(64, 64, level as u8).unwrap();
            let r = black_ratio(&binarize(&img, BinarizeMethod::ErrorDiffusion));
            let expected = 1.0 - level as f64 / 255.0;
            assert!((r - expected).abs() <= 0.02, "level {level}: {r} vs {expected}");
        }
    }

    #[test]
    fn dimensions_preserved() {
        let img = GrayscaleImage::from_fn(7, 3, |x, y| (x * 30 + y * 10) as u8).unwrap();
        for m in [BinarizeMethod::ErrorDiffusion, BinarizeMethod::FixedThreshold(77)] {
            let out = binarize(&img, m);
            assert_eq!((out.width(), out.height()), (7, 3));
        }
    }
}
