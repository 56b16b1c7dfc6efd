//! (2,2) visual cryptography over binary images.
//!
//! Every secret pixel is expanded into a horizontal pair of subpixels in each
//! share. A white pixel gets the same pair in both shares, a black pixel gets
//! complementary pairs, and which of the two candidate pairs is used is decided
//! by a fair coin. Stacking (OR-ing) the shares gives one black subpixel per
//! white pixel and two per black pixel.

use std::fmt;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Subpixels per secret pixel.
pub const PIXEL_EXPANSION: usize = 2;

/// Largest accepted secret, per side.
pub const MAX_SECRET_DIM: usize = 4096;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum VcError {
    #[error("image must be at least 1x1, got {width}x{height}")]
    Empty { width: usize, height: usize },
    #[error("image {width}x{height} exceeds the {max}x{max} limit")]
    TooLarge { width: usize, height: usize, max: usize },
    #[error("pixel buffer holds {actual} values, expected {expected}")]
    BufferLength { expected: usize, actual: usize },
    #[error("dimension mismatch: {left_width}x{left_height} vs {right_width}x{right_height}")]
    DimensionMismatch {
        left_width: usize,
        left_height: usize,
        right_width: usize,
        right_height: usize,
    },
    #[error("share width {width} is not a multiple of the pixel expansion {expansion}")]
    UnalignedShare { width: usize, expansion: usize },
    #[error("unsupported pixel expansion {0}")]
    UnsupportedExpansion(usize),
    #[error("no shares to stack")]
    NoShares,
    #[error(
        "tamper detected: {} empty block(s), {} malformed share block(s)",
        empty_blocks.len(),
        malformed_blocks.len()
    )]
    TamperDetected {
        /// Secret-pixel indices whose stacked block has no black subpixel.
        empty_blocks: Vec<usize>,
        /// Secret-pixel indices where some input share block did not hold
        /// exactly one black subpixel.
        malformed_blocks: Vec<usize>,
    },
}

pub type Result<T, E = VcError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Pixel {
    White,
    Black,
}

impl Pixel {
    pub fn is_black(self) -> bool {
        self == Pixel::Black
    }

    pub fn from_black(black: bool) -> Self {
        if black {
            Pixel::Black
        } else {
            Pixel::White
        }
    }
}

/// Rectangular black-and-white image, row-major.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct BinaryImage {
    width: usize,
    height: usize,
    pixels: Vec<Pixel>,
}

impl fmt::Debug for BinaryImage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "BinaryImage {}x{}", self.width, self.height)?;
        for row in self.pixels.chunks(self.width).take(32) {
            let line: String = row
                .iter()
                .take(80)
                .map(|p| if p.is_black() { '#' } else { '.' })
                .collect();
            writeln!(f, "  {line}")?;
        }
        Ok(())
    }
}

fn check_dims(width: usize, height: usize) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(VcError::Empty { width, height });
    }
    Ok(())
}

impl BinaryImage {
    pub fn new(width: usize, height: usize, pixels: Vec<Pixel>) -> Result<Self> {
        check_dims(width, height)?;
        let expected = width.checked_mul(height).ok_or(VcError::TooLarge {
            width,
            height,
            max: MAX_SECRET_DIM,
        })?;
        if pixels.len() != expected {
            return Err(VcError::BufferLength {
                expected,
                actual: pixels.len(),
            });
        }
        Ok(Self { width, height, pixels })
    }

    pub fn filled(width: usize, height: usize, pixel: Pixel) -> Result<Self> {
        check_dims(width, height)?;
        Self::new(width, height, vec![pixel; width * height])
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> Pixel) -> Result<Self> {
        check_dims(width, height)?;
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        Self::new(width, height, pixels)
    }

    /// Builds an image from booleans where `true` is black.
    pub fn from_bits(width: usize, height: usize, bits: &[bool]) -> Result<Self> {
        Self::new(width, height, bits.iter().map(|&b| Pixel::from_black(b)).collect())
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[Pixel] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> Pixel {
        self.pixels[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, pixel: Pixel) {
        self.pixels[y * self.width + x] = pixel;
    }

    pub fn black_count(&self) -> usize {
        self.pixels.iter().filter(|p| p.is_black()).count()
    }

    /// Copies out a rectangle. Panics if the rectangle leaves the image.
    pub fn crop(&self, x: usize, y: usize, width: usize, height: usize) -> Result<Self> {
        assert!(x + width <= self.width && y + height <= self.height);
        Self::from_fn(width, height, |cx, cy| self.get(x + cx, y + cy))
    }
}

/// One row-pair of a distribution matrix: the subpixel pattern given to
/// share 1 and share 2 for one secret pixel. `true` is a black subpixel.
pub type RowPair = ([bool; PIXEL_EXPANSION], [bool; PIXEL_EXPANSION]);

/// Candidate encodings of the (2,2) scheme with horizontal subpixel pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DistributionTables {
    pub white_rows: [RowPair; 2],
    pub black_rows: [RowPair; 2],
}

impl DistributionTables {
    pub const PARTICIPANTS: usize = 2;
    pub const THRESHOLD: usize = 2;
    pub const EXPANSION: usize = PIXEL_EXPANSION;

    pub const STANDARD: DistributionTables = DistributionTables {
        white_rows: [([true, false], [true, false]), ([false, true], [false, true])],
        black_rows: [([true, false], [false, true]), ([false, true], [true, false])],
    };

    pub fn rows_for(&self, pixel: Pixel) -> &[RowPair; 2] {
        match pixel {
            Pixel::White => &self.white_rows,
            Pixel::Black => &self.black_rows,
        }
    }
}

/// Encodes a single secret pixel with the given coin.
pub fn encode_pixel(pixel: Pixel, coin: bool) -> RowPair {
    DistributionTables::STANDARD.rows_for(pixel)[coin as usize]
}

/// Seed for the share generator. 32 bytes of key material for ChaCha20.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct ShareSeed([u8; 32]);

impl fmt::Debug for ShareSeed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("ShareSeed(..)")
    }
}

impl ShareSeed {
    pub fn from_bytes(bytes: [u8; 32]) -> Self {
        Self(bytes)
    }

    /// Expands a small integer seed. Only for reproducible tests and demos.
    pub fn from_u64(seed: u64) -> Self {
        let mut bytes = [0u8; 32];
        ChaCha20Rng::seed_from_u64(seed).fill_bytes(&mut bytes);
        Self(bytes)
    }

    /// Fresh seed from the operating system.
    pub fn from_entropy() -> Self {
        let mut bytes = [0u8; 32];
        rand::rng().fill_bytes(&mut bytes);
        Self(bytes)
    }
}

impl From<u64> for ShareSeed {
    fn from(seed: u64) -> Self {
        Self::from_u64(seed)
    }
}

/// Fair coins drawn from ChaCha20, 32 per word, least significant bit first.
pub struct CoinSource {
    rng: ChaCha20Rng,
    word: u32,
    left: u32,
}

impl CoinSource {
    pub fn new(seed: ShareSeed) -> Self {
        Self {
            rng: ChaCha20Rng::from_seed(seed.0),
            word: 0,
            left: 0,
        }
    }
}

impl Iterator for CoinSource {
    type Item = bool;

    fn next(&mut self) -> Option<bool> {
        if self.left == 0 {
            self.word = self.rng.next_u32();
            self.left = 32;
        }
        let coin = self.word & 1 == 1;
        self.word >>= 1;
        self.left -= 1;
        Some(coin)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ShareLayout {
    HorizontalPair,
}

/// One party's half of the secret: a subpixel grid `expansion` times wider
/// than the secret.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Share {
    width: usize,
    height: usize,
    pixels: Vec<bool>,
    expansion: usize,
    layout: ShareLayout,
}

impl fmt::Debug for Share {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Share")
            .field("width", &self.width)
            .field("height", &self.height)
            .field("expansion", &self.expansion)
            .finish_non_exhaustive()
    }
}

impl Share {
    /// Wraps a subpixel image. The block structure is not validated here so
    /// that damaged shares can still be stacked and reported on.
    pub fn from_image(image: &BinaryImage) -> Result<Self> {
        if !image.width().is_multiple_of(PIXEL_EXPANSION) {
            return Err(VcError::UnalignedShare {
                width: image.width(),
                expansion: PIXEL_EXPANSION,
            });
        }
        Ok(Self {
            width: image.width(),
            height: image.height(),
            pixels: image.pixels().iter().map(|p| p.is_black()).collect(),
            expansion: PIXEL_EXPANSION,
            layout: ShareLayout::HorizontalPair,
        })
    }

    pub fn to_image(&self) -> BinaryImage {
        BinaryImage::from_bits(self.width, self.height, &self.pixels).expect("share dimensions are valid")
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn expansion(&self) -> usize {
        self.expansion
    }

    pub fn layout(&self) -> ShareLayout {
        self.layout
    }

    pub fn secret_width(&self) -> usize {
        self.width / self.expansion
    }

    pub fn subpixels(&self) -> &[bool] {
        &self.pixels
    }

    /// Subpixel blocks in secret-pixel order.
    pub fn blocks(&self) -> std::slice::ChunksExact<'_, bool> {
        self.pixels.chunks_exact(self.expansion)
    }

    /// Flips one subpixel. Used to model tampering.
    pub fn flip(&mut self, index: usize) {
        self.pixels[index] = !self.pixels[index];
    }

    pub fn set_subpixel(&mut self, index: usize, black: bool) {
        self.pixels[index] = black;
    }

    /// Indices of blocks that do not hold exactly one black subpixel.
    pub fn malformed_blocks(&self) -> Vec<usize> {
        self.blocks()
            .enumerate()
            .filter(|(_, b)| b.iter().filter(|&&s| s).count() != 1)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn is_well_formed(&self) -> bool {
        self.blocks().all(|b| b.iter().filter(|&&s| s).count() == 1)
    }
}

fn check_secret(secret: &BinaryImage) -> Result<()> {
    if secret.width() > MAX_SECRET_DIM || secret.height() > MAX_SECRET_DIM {
        return Err(VcError::TooLarge {
            width: secret.width(),
            height: secret.height(),
            max: MAX_SECRET_DIM,
        });
    }
    Ok(())
}

/// Splits `secret` into two shares, one coin per pixel in row-major order.
pub fn generate_shares(secret: &BinaryImage, seed: ShareSeed) -> Result<(Share, Share)> {
    generate_shares_with_coins(secret, CoinSource::new(seed))
}

/// Same as [`generate_shares`] with an explicit coin sequence. Panics if the
/// sequence runs out before every pixel is encoded.
pub fn generate_shares_with_coins(
    secret: &BinaryImage,
    mut coins: impl Iterator<Item = bool>,
) -> Result<(Share, Share)> {
    check_secret(secret)?;
    let width = secret.width() * PIXEL_EXPANSION;
    let len = width * secret.height();
    let mut first = Vec::with_capacity(len);
    let mut second = Vec::with_capacity(len);
    for &pixel in secret.pixels() {
        let coin = coins.next().expect("coin sequence exhausted");
        let (a, b) = encode_pixel(pixel, coin);
        first.extend_from_slice(&a);
        second.extend_from_slice(&b);
    }
    let make = |pixels| Share {
        width,
        height: secret.height(),
        pixels,
        expansion: PIXEL_EXPANSION,
        layout: ShareLayout::HorizontalPair,
    };
    Ok((make(first), make(second)))
}

/// Result of superimposing shares.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StackedImage {
    width: usize,
    height: usize,
    pixels: Vec<bool>,
    expansion: usize,
    block_weights: Vec<u8>,
    malformed_blocks: Vec<usize>,
}

impl StackedImage {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn subpixels(&self) -> &[bool] {
        &self.pixels
    }

    /// Hamming weight of every block, in secret-pixel order.
    pub fn block_weights(&self) -> &[u8] {
        &self.block_weights
    }

    /// Blocks where at least one input share was not a valid share block.
    pub fn malformed_blocks(&self) -> &[usize] {
        &self.malformed_blocks
    }

    /// Count of blocks per weight, index = weight.
    pub fn weight_histogram(&self) -> Vec<usize> {
        let mut hist = vec![0; self.expansion + 1];
        for &w in &self.block_weights {
            hist[w as usize] += 1;
        }
        hist
    }

    pub fn to_image(&self) -> BinaryImage {
        BinaryImage::from_bits(self.width, self.height, &self.pixels).expect("stacked dimensions are valid")
    }

    /// Zeroes a whole block. Only useful for exercising tamper paths.
    pub fn clear_block(&mut self, block: usize) {
        let start = block * self.expansion;
        self.pixels[start..start + self.expansion].fill(false);
        self.block_weights[block] = 0;
    }
}

/// Pixelwise OR of the shares.
pub fn stack(shares: &[&Share]) -> Result<StackedImage> {
    let (first, rest) = shares.split_first().ok_or(VcError::NoShares)?;
    for other in rest {
        if other.width != first.width || other.height != first.height {
            return Err(VcError::DimensionMismatch {
                left_width: first.width,
                left_height: first.height,
                right_width: other.width,
                right_height: other.height,
            });
        }
        if other.expansion != first.expansion {
            return Err(VcError::UnsupportedExpansion(other.expansion));
        }
    }
    let mut pixels = first.pixels.clone();
    for other in rest {
        for (acc, &s) in pixels.iter_mut().zip(&other.pixels) {
            *acc |= s;
        }
    }
    let block_weights = pixels
        .chunks_exact(first.expansion)
        .map(|b| b.iter().filter(|&&s| s).count() as u8)
        .collect::<Vec<_>>();
    let mut malformed = vec![false; block_weights.len()];
    for share in shares {
        for i in share.malformed_blocks() {
            malformed[i] = true;
        }
    }
    Ok(StackedImage {
        width: first.width,
        height: first.height,
        pixels,
        expansion: first.expansion,
        block_weights,
        malformed_blocks: malformed
            .iter()
            .enumerate()
            .filter(|(_, &m)| m)
            .map(|(i, _)| i)
            .collect(),
    })
}

/// Recovers the secret: weight 2 is black, weight 1 is white.
///
/// Any empty block, or any block where an input share was not a valid share
/// block, is reported as tampering instead of being decoded.
pub fn decode(stacked: &StackedImage) -> Result<BinaryImage> {
    if stacked.expansion != PIXEL_EXPANSION {
        return Err(VcError::UnsupportedExpansion(stacked.expansion));
    }
    let empty_blocks: Vec<usize> = stacked
        .block_weights
        .iter()
        .enumerate()
        .filter(|(_, &w)| w == 0)
        .map(|(i, _)| i)
        .collect();
    if !empty_blocks.is_empty() || !stacked.malformed_blocks.is_empty() {
        return Err(VcError::TamperDetected {
            empty_blocks,
            malformed_blocks: stacked.malformed_blocks.clone(),
        });
    }
    let pixels = stacked
        .block_weights
        .iter()
        .map(|&w| Pixel::from_black(w as usize == PIXEL_EXPANSION))
        .collect();
    BinaryImage::new(stacked.width / stacked.expansion, stacked.height, pixels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn weight(block: &[bool]) -> usize {
        block.iter().filter(|&&b| b).count()
    }

    #[test]
    fn white_pixel_gives_identical_blocks() {
        for coin in [false, true] {
            let (a, b) = encode_pixel(Pixel::White, coin);
            assert_eq!(a, b);
            let or: Vec<bool> = a.iter().zip(&b).map(|(x, y)| x | y).collect();
            assert_eq!(weight(&or), 1);
        }
    }

    #[test]
    fn black_pixel_gives_complementary_blocks() {
        for coin in [false, true] {
            let (a, b) = encode_pixel(Pixel::Black, coin);
            assert_eq!([!a[0], !a[1]], b);
            let or: Vec<bool> = a.iter().zip(&b).map(|(x, y)| x | y).collect();
            assert_eq!(weight(&or), 2);
        }
    }

    #[test]
    fn candidate_rows_are_column_permutations() {
        let t = DistributionTables::STANDARD;
        for rows in [t.white_rows, t.black_rows] {
            let (a0, b0) = rows[0];
            let (a1, b1) = rows[1];
            assert_ne!(rows[0], rows[1]);
            // swapping the two columns maps one candidate onto the other
            assert_eq!([a0[1], a0[0]], a1);
            assert_eq!([b0[1], b0[0]], b1);
        }
    }

    #[test]
    fn one_by_one_white_and_black() {
        let white = BinaryImage::filled(1, 1, Pixel::White).unwrap();
        let (s1, s2) = generate_shares(&white, 7.into()).unwrap();
        assert_eq!((s1.width(), s1.height()), (2, 1));
        assert_eq!(s1, s2);
        assert_eq!(weight(s1.subpixels()), 1);

        let black = BinaryImage::filled(1, 1, Pixel::Black).unwrap();
        let (s1, s2) = generate_shares(&black, 7.into()).unwrap();
        assert!(s1.subpixels().iter().zip(s2.subpixels()).all(|(a, b)| a != b));
    }

    #[test]
    fn oversized_secret_rejected() {
        let img = BinaryImage::filled(MAX_SECRET_DIM + 1, 1, Pixel::White).unwrap();
        assert!(matches!(generate_shares(&img, 1.into()), Err(VcError::TooLarge { .. })));
    }

    #[test]
    fn empty_image_rejected() {
        assert!(matches!(BinaryImage::new(0, 3, vec![]), Err(VcError::Empty { .. })));
    }

    #[test]
    fn stack_with_itself_is_identity() {
        let img = BinaryImage::from_fn(5, 3, |x, y| Pixel::from_black((x * y) % 2 == 1)).unwrap();
        let (s1, _) = generate_shares(&img, 3.into()).unwrap();
        let stacked = stack(&[&s1, &s1]).unwrap();
        assert_eq!(stacked.subpixels(), s1.subpixels());
        assert!(stacked.block_weights().iter().all(|&w| w == 1));
    }

    #[test]
    fn stack_reports_mismatched_dimensions() {
        let a = BinaryImage::filled(2, 2, Pixel::White).unwrap();
        let b = BinaryImage::filled(3, 2, Pixel::White).unwrap();
        let (sa, _) = generate_shares(&a, 1.into()).unwrap();
        let (sb, _) = generate_shares(&b, 1.into()).unwrap();
        let err = stack(&[&sa, &sb]).unwrap_err();
        assert_eq!(
            err,
            VcError::DimensionMismatch {
                left_width: 4,
                left_height: 2,
                right_width: 6,
                right_height: 2
            }
        );
        assert!(err.to_string().contains("4x2") && err.to_string().contains("6x2"));
        assert_eq!(stack(&[]).unwrap_err(), VcError::NoShares);
    }

    #[test]
    fn cleared_block_is_tamper() {
        let img = BinaryImage::filled(2, 1, Pixel::Black).unwrap();
        let (mut s1, mut s2) = generate_shares(&img, 9.into()).unwrap();
        for i in 0..2 {
            s1.set_subpixel(i, false);
            s2.set_subpixel(i, false);
        }
        let stacked = stack(&[&s1, &s2]).unwrap();
        assert_eq!(stacked.block_weights()[0], 0);
        match decode(&stacked) {
            Err(VcError::TamperDetected { empty_blocks, .. }) => assert_eq!(empty_blocks, vec![0]),
            other => panic!("expected tamper, got {other:?}"),
        }
    }

    #[test]
    fn cleared_stacked_block_is_tamper() {
        let img = BinaryImage::filled(3, 1, Pixel::White).unwrap();
        let (s1, s2) = generate_shares(&img, 2.into()).unwrap();
        let mut stacked = stack(&[&s1, &s2]).unwrap();
        stacked.clear_block(1);
        assert!(matches!(decode(&stacked), Err(VcError::TamperDetected { .. })));
    }

    #[test]
    fn every_single_flip_of_one_pixel_secret_is_caught() {
        // brute force over secret value, coin, share and subpixel
        for pixel in [Pixel::White, Pixel::Black] {
            let secret = BinaryImage::filled(1, 1, pixel).unwrap();
            for coin in [false, true] {
                for which in 0..2 {
                    for idx in 0..PIXEL_EXPANSION {
                        let (mut s1, mut s2) = generate_shares_with_coins(&secret, std::iter::once(coin)).unwrap();
                        if which == 0 {
                            s1.flip(idx)
                        } else {
                            s2.flip(idx)
                        }
                        let stacked = stack(&[&s1, &s2]).unwrap();
                        match decode(&stacked) {
                            Ok(img) => assert_ne!(img, secret),
                            Err(VcError::TamperDetected { .. }) => {}
                            Err(e) => panic!("unexpected {e}"),
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn deterministic_for_seed() {
        let img = BinaryImage::from_fn(9, 4, |x, _| Pixel::from_black(x % 3 == 0)).unwrap();
        let a = generate_shares(&img, 11.into()).unwrap();
        let b = generate_shares(&img, 11.into()).unwrap();
        let c = generate_shares(&img, 12.into()).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.0, c.0);
    }

    #[test]
    fn pattern_frequencies_independent_of_content() {
        // direct tabulation of first-share block patterns over a 64x64 secret
        let mut state = 0x2545_f491_4f6c_dd1du64;
        let secret = BinaryImage::from_fn(64, 64, |_, _| {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            Pixel::from_black(state & 1 == 1)
        })
        .unwrap();
        let (s1, s2) = generate_shares(&secret, 2024.into()).unwrap();
        for share in [&s1, &s2] {
            let left = share.blocks().filter(|b| b[0]).count() as f64 / 4096.0;
            assert!((left - 0.5).abs() <= 0.05, "left-pattern frequency {left}");
            assert!(share.is_well_formed());
        }
    }

    fn arb_image() -> impl Strategy<Value = BinaryImage> {
        (1usize..24, 1usize..24).prop_flat_map(|(w, h)| {
            proptest::collection::vec(any::<bool>(), w * h)
                .prop_map(move |bits| BinaryImage::from_bits(w, h, &bits).unwrap())
        })
    }

    proptest! {
        #[test]
        fn round_trip(img in arb_image(), seed in any::<u64>()) {
            let (s1, s2) = generate_shares(&img, seed.into()).unwrap();
            prop_assert_eq!(s1.width(), 2 * img.width());
            prop_assert_eq!(s1.height(), img.height());
            prop_assert!(s1.is_well_formed() && s2.is_well_formed());
            let stacked = stack(&[&s1, &s2]).unwrap();
            prop_assert_eq!(decode(&stacked).unwrap(), img);
        }

        #[test]
        fn stacking_commutes(img in arb_image(), seed in any::<u64>()) {
            let (s1, s2) = generate_shares(&img, seed.into()).unwrap();
            prop_assert_eq!(stack(&[&s1, &s2]).unwrap(), stack(&[&s2, &s1]).unwrap());
        }
    }
}
