//! Small synthetic datasets for tests, examples and smoke runs.
//!
//! * Images: 28×28 bytes, class `k` is a bright horizontal bar on rows
//!   `2k+3 ..= 2k+5` over low-level noise.
//! * Tokens: the marker-parity task. Each sequence holds filler tokens and
//!   exactly one marker id from `1..=8` placed near its end; the label is the
//!   marker's parity (`marker % 2`). Sequence lengths straddle the usual
//!   `maxlen`, so both padding and truncation are exercised.

use std::path::{Path, PathBuf};

use crate::data::idx::{serialize_idx_images, serialize_idx_labels};
use crate::data::images::{MNIST_CLASSES, MNIST_SIDE};
use crate::data::tokens::TokenSet;
use crate::error::{Error, Result};
use crate::linalg::Rng;

pub const IMAGES_FILE: &str = "images-idx3-ubyte";
pub const LABELS_FILE: &str = "labels-idx1-ubyte";
pub const TOKENS_TRAIN_FILE: &str = "tokens-train.txt";
pub const TOKENS_TEST_FILE: &str = "tokens-test.txt";

pub const MARKER_VOCAB: usize = 32;
const MARKERS: std::ops::RangeInclusive<usize> = 1..=8;
const FILLER_START: usize = 9;

/// Raw pixel bytes and labels for `count` bar images.
pub fn synthetic_images(count: usize, seed: u64) -> (Vec<u8>, Vec<u8>) {
    let mut rng = Rng::new(seed);
    let side = MNIST_SIDE;
    let mut pixels = vec![0u8; count * side * side];
    let mut labels = Vec::with_capacity(count);
    for (i, img) in pixels.chunks_exact_mut(side * side).enumerate() {
        let label = (i + rng.below(MNIST_CLASSES)) % MNIST_CLASSES;
        labels.push(label as u8);
        for (p, px) in img.iter_mut().enumerate() {
            let (r, c) = (p / side, p % side);
            let on_bar = (2 * label + 3..=2 * label + 5).contains(&r) && (4..24).contains(&c);
            *px = if on_bar {
                200 + rng.below(56) as u8
            } else {
                rng.below(40) as u8
            };
        }
    }
    (pixels, labels)
}

pub fn marker_tokens(count: usize, seed: u64) -> TokenSet {
    let mut rng = Rng::new(seed);
    let mut sequences = Vec::with_capacity(count);
    let mut labels = Vec::with_capacity(count);
    for _ in 0..count {
        let len = 6 + rng.below(25);
        let mut seq: Vec<usize> = (0..len)
            .map(|_| FILLER_START + rng.below(MARKER_VOCAB - FILLER_START))
            .collect();
        let marker = MARKERS.start() + rng.below(MARKERS.end() - MARKERS.start() + 1);
        let window = len.min(8);
        seq[len - 1 - rng.below(window)] = marker;
        sequences.push(seq);
        labels.push(marker % 2);
    }
    TokenSet {
        sequences,
        labels,
        vocab_size: MARKER_VOCAB,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FixtureSpec {
    pub images: usize,
    pub train_tokens: usize,
    pub test_tokens: usize,
    pub seed: u64,
}

impl Default for FixtureSpec {
    fn default() -> Self {
        FixtureSpec {
            images: 64,
            train_tokens: 256,
            test_tokens: 128,
            seed: 1,
        }
    }
}

/// Writes the four fixture files into `dir` (created if needed) and returns
/// their paths. Output depends only on `spec`.
pub fn write_fixtures(dir: &Path, spec: &FixtureSpec) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let (pixels, labels) = synthetic_images(spec.images, spec.seed);
    let files = [
        (
            IMAGES_FILE,
            serialize_idx_images(spec.images, MNIST_SIDE, MNIST_SIDE, &pixels),
        ),
        (LABELS_FILE, serialize_idx_labels(&labels)),
        (
            TOKENS_TRAIN_FILE,
            marker_tokens(spec.train_tokens, spec.seed.wrapping_add(1))
                .to_text()
                .into_bytes(),
        ),
        (
            TOKENS_TEST_FILE,
            marker_tokens(spec.test_tokens, spec.seed.wrapping_add(2))
                .to_text()
                .into_bytes(),
        ),
    ];
    files
        .into_iter()
        .map(|(name, bytes)| {
            let path = dir.join(name);
            std::fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
            Ok(path)
        })
        .collect()
}
