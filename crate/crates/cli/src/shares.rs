//! `split` and `stack`: file-level wrappers around the share scheme.

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use pgs_core::broker::checksum_hex;
use pgs_core::imaging::{binarize, BinarizeMethod};
use pgs_core::pnm::{self, AnyImage};
use pgs_core::vc::{self, BinaryImage, Share, ShareSeed, VcError};
use serde::{Deserialize, Serialize};

pub const SHARE1_FILE: &str = "share1.pbm";
pub const SHARE2_FILE: &str = "share2.pbm";
pub const SPLIT_META_FILE: &str = "meta.json";
pub const STACKED_FILE: &str = "stacked.pbm";
pub const DECODED_FILE: &str = "decoded.pbm";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SplitMeta {
    pub source: String,
    /// Absent when the coins came from OS entropy.
    pub seed: Option<u64>,
    /// True when the input was grayscale and went through error diffusion.
    pub binarized: bool,
    pub secret_width: usize,
    pub secret_height: usize,
    pub share_width: usize,
    pub shares: Vec<ShareFile>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShareFile {
    pub file: String,
    pub sha256: String,
}

/// Reads a PBM as-is, or a PGM through error diffusion.
pub fn load_secret(path: &Path) -> Result<(BinaryImage, bool)> {
    let img = pnm::read_any(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(match img {
        AnyImage::Binary(b) => (b, false),
        AnyImage::Gray(g) => (binarize(&g, BinarizeMethod::ErrorDiffusion), true),
    })
}

pub fn split(input: &Path, seed: Option<u64>, out: &Path) -> Result<SplitMeta> {
    let (secret, binarized) = load_secret(input)?;
    let share_seed = seed.map_or_else(ShareSeed::from_entropy, ShareSeed::from_u64);
    let (a, b) = vc::generate_shares(&secret, share_seed)?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let mut shares = Vec::new();
    for (name, share) in [(SHARE1_FILE, &a), (SHARE2_FILE, &b)] {
        let bytes = pnm::encode_pbm(&share.to_image());
        fs::write(out.join(name), &bytes)?;
        shares.push(ShareFile {
            file: name.into(),
            sha256: checksum_hex(&bytes),
        });
    }
    let meta = SplitMeta {
        source: input.display().to_string(),
        seed,
        binarized,
        secret_width: secret.width(),
        secret_height: secret.height(),
        share_width: a.width(),
        shares,
    };
    fs::write(out.join(SPLIT_META_FILE), serde_json::to_vec_pretty(&meta)?)?;
    Ok(meta)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StackVerdict {
    Clean {
        width: usize,
        height: usize,
        black: usize,
    },
    Tampered {
        empty_blocks: usize,
        malformed_blocks: usize,
    },
    DimensionMismatch(String),
}

/// Writes `stacked.pbm` whenever the shares line up, and `decoded.pbm`
/// only for a clean stack.
pub fn stack(paths: &[impl AsRef<Path>], out: &Path) -> Result<StackVerdict> {
    let mut shares = Vec::with_capacity(paths.len());
    for p in paths {
        let p = p.as_ref();
        let img = pnm::read_pbm(p).with_context(|| format!("reading {}", p.display()))?;
        shares.push(Share::from_image(&img).with_context(|| format!("loading {}", p.display()))?);
    }
    let refs: Vec<&Share> = shares.iter().collect();
    let stacked = match vc::stack(&refs) {
        Ok(s) => s,
        Err(e @ VcError::DimensionMismatch { .. }) => return Ok(StackVerdict::DimensionMismatch(e.to_string())),
        Err(e) => return Err(e.into()),
    };
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    pnm::write_pbm(out.join(STACKED_FILE), &stacked.to_image())?;
    match vc::decode(&stacked) {
        Ok(img) => {
            pnm::write_pbm(out.join(DECODED_FILE), &img)?;
            Ok(StackVerdict::Clean {
                width: img.width(),
                height: img.height(),
                black: img.black_count(),
            })
        }
        Err(VcError::TamperDetected {
            empty_blocks,
            malformed_blocks,
        }) => Ok(StackVerdict::Tampered {
            empty_blocks: empty_blocks.len(),
            malformed_blocks: malformed_blocks.len(),
        }),
        Err(e) => Err(e.into()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use pgs_core::imaging::GrayscaleImage;
    use pgs_core::vc::Pixel;

    fn checker(w: usize, h: usize) -> BinaryImage {
        BinaryImage::from_fn(w, h, |x, y| Pixel::from_black((x + y) % 2 == 0)).unwrap()
    }

    #[test]
    fn two_by_two_gives_four_by_two_shares() {
        let dir = tempfile::tempdir().unwrap();
        let input = dir.path().join("in.pbm");
        pnm::write_pbm(&input, &checker(2, 2)).unwrap();
        let meta = split(&input, Some(9), &dir.path().join("out")).unwrap();
        assert_eq!(meta.share_width, 4);
        for f in [SHARE1_FILE, SHARE2_FILE] {
            let img = pnm::read_pbm(dir.path().join("out").join(f)).unwrap();
            assert_eq!((img.width(), img.height()), (4, 2));
        }
    }

    #[test]
    fn same_seed_same_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let input = dir.path().join("in.pbm");
        pnm::write_pbm(&input, &checker(13, 7)).unwrap();
        split(&input, Some(4), &dir.path().join("a")).unwrap();
        split(&input, Some(4), &dir.path().join("b")).unwrap();
        for f in [SHARE1_FILE, SHARE2_FILE, SPLIT_META_FILE] {
            let a = fs::read(dir.path().join("a").join(f)).unwrap();
            let b = fs::read(dir.path().join("b").join(f)).unwrap();
            assert_eq!(a, b, "{f}");
        }
    }

    #[test]
    fn gray_input_matches_explicit_pipeline() {
        let dir = tempfile::tempdir().unwrap();
        let gray = GrayscaleImage::from_fn(21, 9, |x, y| (x * 11 + y * 17) as u8).unwrap();
        let input = dir.path().join("in.pgm");
        fs::write(&input, pnm::encode_pgm(&gray)).unwrap();
        let meta = split(&input, Some(5), &dir.path().join("out")).unwrap();
        assert!(meta.binarized);

        let secret = binarize(&gray, BinarizeMethod::ErrorDiffusion);
        let (a, b) = vc::generate_shares(&secret, ShareSeed::from_u64(5)).unwrap();
        assert_eq!(
            fs::read(dir.path().join("out").join(SHARE1_FILE)).unwrap(),
            pnm::encode_pbm(&a.to_image())
        );
        assert_eq!(
            fs::read(dir.path().join("out").join(SHARE2_FILE)).unwrap(),
            pnm::encode_pbm(&b.to_image())
        );
    }

    #[test]
    fn stack_verdicts() {
        let dir = tempfile::tempdir().unwrap();
        let secret = checker(6, 3);
        let input = dir.path().join("in.pbm");
        pnm::write_pbm(&input, &secret).unwrap();
        let s = dir.path().join("s");
        split(&input, Some(1), &s).unwrap();
        let (one, two) = (s.join(SHARE1_FILE), s.join(SHARE2_FILE));

        let out = dir.path().join("clean");
        let v = stack(&[&one, &two], &out).unwrap();
        assert_eq!(
            v,
            StackVerdict::Clean {
                width: 6,
                height: 3,
                black: secret.black_count()
            }
        );
        assert_eq!(pnm::read_pbm(out.join(DECODED_FILE)).unwrap(), secret);

        let mut bad = Share::from_image(&pnm::read_pbm(&one).unwrap()).unwrap();
        bad.flip(0);
        let bad_path = dir.path().join("bad.pbm");
        pnm::write_pbm(&bad_path, &bad.to_image()).unwrap();
        let out = dir.path().join("tampered");
        assert!(matches!(
            stack(&[&bad_path, &two], &out).unwrap(),
            StackVerdict::Tampered { .. }
        ));
        assert!(!out.join(DECODED_FILE).exists());

        let small = dir.path().join("small.pbm");
        pnm::write_pbm(&small, &checker(4, 3)).unwrap();
        let v = stack(&[&one, &small], &dir.path().join("mm")).unwrap();
        assert!(matches!(v, StackVerdict::DimensionMismatch(_)));
    }
}
