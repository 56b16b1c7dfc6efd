//! Netpbm codecs for the two formats the system exchanges: PBM for binary
//! images and shares, PGM for grayscale input.
//!
//! Writers always emit the raw variants (`P4`, `P5`) with a minimal header:
//! magic, newline, `width height`, newline (plus `maxval` and a newline for
//! PGM). Readers also accept the ASCII variants and `#` comments.

use std::path::Path;

use thiserror::Error;

use crate::imaging::GrayscaleImage;
use crate::vc::{BinaryImage, Pixel, VcError};

#[derive(Debug, Error)]
pub enum PnmError {
    #[error("unsupported magic number {0:?}")]
    BadMagic(String),
    #[error("truncated header")]
    TruncatedHeader,
    #[error("invalid header value {0:?}")]
    BadHeaderValue(String),
    #[error("maxval {0} is not supported (1..=255 only)")]
    BadMaxval(u32),
    #[error("pixel data truncated: expected {expected} bytes, found {actual}")]
    TruncatedData { expected: usize, actual: usize },
    #[error("invalid ASCII sample {0:?}")]
    BadSample(String),
    #[error(transparent)]
    Image(#[from] VcError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = PnmError> = std::result::Result<T, E>;

struct Header<'a> {
    magic: &'a str,
    width: usize,
    height: usize,
    maxval: Option<u32>,
    /// Offset of the first byte after the single whitespace ending the header.
    data_start: usize,
}

fn skip_ws_and_comments(bytes: &[u8], mut pos: usize) -> usize {
    loop {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' && bytes[pos] != b'\r' {
                pos += 1;
            }
        } else {
            return pos;
        }
    }
}

fn read_token(bytes: &[u8], pos: usize) -> Result<(&str, usize)> {
    let start = skip_ws_and_comments(bytes, pos);
    let mut end = start;
    while end < bytes.len() && !bytes[end].is_ascii_whitespace() && bytes[end] != b'#' {
        end += 1;
    }
    if start == end {
        return Err(PnmError::TruncatedHeader);
    }
    let tok = std::str::from_utf8(&bytes[start..end])
        .map_err(|_| PnmError::BadHeaderValue(String::from_utf8_lossy(&bytes[start..end]).into()))?;
    Ok((tok, end))
}

fn read_number(bytes: &[u8], pos: usize) -> Result<(usize, usize)> {
    let (tok, end) = read_token(bytes, pos)?;
    let n = tok
        .parse::<usize>()
        .map_err(|_| PnmError::BadHeaderValue(tok.to_string()))?;
    Ok((n, end))
}

fn parse_header(bytes: &[u8]) -> Result<Header<'_>> {
    if bytes.len() < 2 {
        return Err(PnmError::TruncatedHeader);
    }
    let magic = std::str::from_utf8(&bytes[..2]).map_err(|_| PnmError::BadMagic("??".into()))?;
    if !matches!(magic, "P1" | "P2" | "P4" | "P5") {
        return Err(PnmError::BadMagic(magic.to_string()));
    }
    let (width, pos) = read_number(bytes, 2)?;
    let (height, mut pos) = read_number(bytes, pos)?;
    let mut maxval = None;
    if matches!(magic, "P2" | "P5") {
        let (m, p) = read_number(bytes, pos)?;
        if m == 0 || m > 255 {
            return Err(PnmError::BadMaxval(m as u32));
        }
        maxval = Some(m as u32);
        pos = p;
    }
    // exactly one whitespace byte separates the header from raster data
    if pos >= bytes.len() && width * height > 0 {
        return Err(PnmError::TruncatedHeader);
    }
    Ok(Header {
        magic,
        width,
        height,
        maxval,
        data_start: (pos + 1).min(bytes.len()),
    })
}

/// Reads a PBM image (`P4` or `P1`).
pub fn decode_pbm(bytes: &[u8]) -> Result<BinaryImage> {
    let header = parse_header(bytes)?;
    let (w, h) = (header.width, header.height);
    match header.magic {
        "P4" => {
            let row_bytes = w.div_ceil(8);
            let expected = row_bytes * h;
            let data = &bytes[header.data_start..];
            if data.len() < expected {
                return Err(PnmError::TruncatedData {
                    expected,
                    actual: data.len(),
                });
            }
            let mut pixels = Vec::with_capacity(w * h);
            for row in data[..expected].chunks_exact(row_bytes.max(1)).take(h) {
                for x in 0..w {
                    let bit = row[x / 8] >> (7 - (x % 8)) & 1;
                    pixels.push(Pixel::from_black(bit == 1));
                }
            }
            Ok(BinaryImage::new(w, h, pixels)?)
        }
        "P1" => {
            // ASCII bits may be packed without separators
            let mut pixels = Vec::with_capacity(w * h);
            let mut pos = header.data_start.saturating_sub(1);
            while pixels.len() < w * h {
                pos = skip_ws_and_comments(bytes, pos);
                match bytes.get(pos) {
                    Some(b'0') => pixels.push(Pixel::White),
                    Some(b'1') => pixels.push(Pixel::Black),
                    Some(&c) => return Err(PnmError::BadSample((c as char).to_string())),
                    None => {
                        return Err(PnmError::TruncatedData {
                            expected: w * h,
                            actual: pixels.len(),
                        })
                    }
                }
                pos += 1;
            }
            Ok(BinaryImage::new(w, h, pixels)?)
        }
        other => Err(PnmError::BadMagic(other.to_string())),
    }
}

/// Writes a raw `P4` PBM. Black is 1; row padding bits are zero.
pub fn encode_pbm(image: &BinaryImage) -> Vec<u8> {
    let (w, h) = (image.width(), image.height());
    let row_bytes = w.div_ceil(8);
    let mut out = format!("P4\n{w} {h}\n").into_bytes();
    out.reserve(row_bytes * h);
    for row in image.pixels().chunks_exact(w) {
        let mut packed = vec![0u8; row_bytes];
        for (x, p) in row.iter().enumerate() {
            if p.is_black() {
                packed[x / 8] |= 0x80 >> (x % 8);
            }
        }
        out.extend_from_slice(&packed);
    }
    out
}

/// Writes an ASCII `P1` PBM, 70 characters max per line.
pub fn encode_pbm_ascii(image: &BinaryImage) -> Vec<u8> {
    let mut out = format!("P1\n{} {}\n", image.width(), image.height());
    for row in image.pixels().chunks_exact(image.width()) {
        for line in row.chunks(70) {
            out.extend(line.iter().map(|p| if p.is_black() { '1' } else { '0' }));
            out.push('\n');
        }
    }
    out.into_bytes()
}

fn scale_sample(v: u32, maxval: u32) -> u8 {
    if maxval == 255 {
        v as u8
    } else {
        ((v * 255 + maxval / 2) / maxval) as u8
    }
}

/// Reads a PGM image (`P5` or `P2`), rescaling samples to 0..=255.
pub fn decode_pgm(bytes: &[u8]) -> Result<GrayscaleImage> {
    let header = parse_header(bytes)?;
    let (w, h) = (header.width, header.height);
    let maxval = match header.maxval {
        Some(m) => m,
        None => return Err(PnmError::BadMagic(header.magic.to_string())),
    };
    let samples = match header.magic {
        "P5" => {
            let data = &bytes[header.data_start..];
            if data.len() < w * h {
                return Err(PnmError::TruncatedData {
                    expected: w * h,
                    actual: data.len(),
                });
            }
            data[..w * h]
                .iter()
                .map(|&v| {
                    if v as u32 > maxval {
                        Err(PnmError::BadSample(v.to_string()))
                    } else {
                        Ok(scale_sample(v as u32, maxval))
                    }
                })
                .collect::<Result<Vec<_>>>()?
        }
        _ => {
            let mut samples = Vec::with_capacity(w * h);
            let mut pos = header.data_start.saturating_sub(1);
            while samples.len() < w * h {
                let (tok, next) = read_token(bytes, pos).map_err(|_| PnmError::TruncatedData {
                    expected: w * h,
                    actual: samples.len(),
                })?;
                let v: u32 = tok.parse().map_err(|_| PnmError::BadSample(tok.to_string()))?;
                if v > maxval {
                    return Err(PnmError::BadSample(tok.to_string()));
                }
                samples.push(scale_sample(v, maxval));
                pos = next;
            }
            samples
        }
    };
    Ok(GrayscaleImage::new(w, h, samples)?)
}

/// Writes a raw `P5` PGM with maxval 255.
pub fn encode_pgm(image: &GrayscaleImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", image.width(), image.height()).into_bytes();
    out.extend_from_slice(image.samples());
    out
}

/// A decoded Netpbm file of either supported kind.
#[derive(Debug, Clone)]
pub enum AnyImage {
    Binary(BinaryImage),
    Gray(GrayscaleImage),
}

/// Sniffs the magic number and decodes PBM or PGM.
pub fn decode_any(bytes: &[u8]) -> Result<AnyImage> {
    match bytes.get(..2) {
        Some(b"P1") | Some(b"P4") => decode_pbm(bytes).map(AnyImage::Binary),
        Some(b"P2") | Some(b"P5") => decode_pgm(bytes).map(AnyImage::Gray),
        Some(m) => Err(PnmError::BadMagic(String::from_utf8_lossy(m).into())),
        None => Err(PnmError::TruncatedHeader),
    }
}

pub fn read_pbm(path: impl AsRef<Path>) -> Result<BinaryImage> {
    decode_pbm(&std::fs::read(path)?)
}

pub fn write_pbm(path: impl AsRef<Path>, image: &BinaryImage) -> Result<()> {
    std::fs::write(path, encode_pbm(image))?;
    Ok(())
}

pub fn read_any(path: impl AsRef<Path>) -> Result<AnyImage> {
    decode_any(&std::fs::read(path)?)
}
