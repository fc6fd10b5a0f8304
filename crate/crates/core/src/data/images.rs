use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::idx::{parse_idx, IdxData};
use crate::error::{Error, Result};

pub const MNIST_SIDE: usize = 28;
pub const MNIST_CLASSES: usize = 10;

/// Labelled grey-scale images, pixels stored image-major and row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageSet {
    pub height: usize,
    pub width: usize,
    pub pixels: Vec<f64>,
    pub labels: Vec<usize>,
}

impl ImageSet {
    pub fn from_idx(images: IdxData, labels: IdxData) -> Result<Self> {
        let (count, height, width, pixels) = match images {
            IdxData::Images {
                count,
                rows,
                cols,
                pixels,
            } => (count, rows, cols, pixels),
            IdxData::Labels(_) => {
                return Err(Error::Argument(
                    "expected an IDX image file, got labels".into(),
                ))
            }
        };
        let labels = match labels {
            IdxData::Labels(l) => l,
            IdxData::Images { .. } => {
                return Err(Error::Argument(
                    "expected an IDX label file, got images".into(),
                ))
            }
        };
        if labels.len() != count {
            return Err(Error::Argument(format!(
                "{count} images but {} labels",
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| usize::from(l) >= MNIST_CLASSES) {
            return Err(Error::Label {
                label: bad.into(),
                classes: MNIST_CLASSES,
            });
        }
        Ok(ImageSet {
            height,
            width,
            pixels,
            labels: labels.into_iter().map(usize::from).collect(),
        })
    }

    pub fn load(images: &Path, labels: &Path) -> Result<Self> {
        let read = |p: &Path| std::fs::read(p).map_err(|e| Error::io(p, e));
        ImageSet::from_idx(parse_idx(&read(images)?)?, parse_idx(&read(labels)?)?)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn image(&self, i: usize) -> &[f64] {
        let sz = self.height * self.width;
        &self.pixels[i * sz..(i + 1) * sz]
    }

    /// The first `n` images (or all, if fewer).
    pub fn truncated(mut self, n: usize) -> Self {
        let n = n.min(self.len());
        self.labels.truncate(n);
        self.pixels.truncate(n * self.height * self.width);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StandardizeScope {
    /// One scalar mean and standard deviation over every training pixel.
    #[default]
    Global,
    /// One mean and standard deviation per pixel position.
    PerPixel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Standardization {
    /// Length 1 for global scope, `height·width` per pixel.
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

pub const STD_FLOOR: f64 = 1e-8;

impl Standardization {
    pub fn fit(train: &ImageSet, scope: StandardizeScope) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::Argument(
                "cannot standardize an empty training set".into(),
            ));
        }
        let size = train.height * train.width;
        let n = train.len() as f64;
        let (mean, var) = match scope {
            StandardizeScope::Global => {
                let total = train.pixels.len() as f64;
                let mut mean = train.pixels.iter().sum::<f64>() / total;
                mean += train.pixels.iter().map(|p| p - mean).sum::<f64>() / total;
                let var = train
                    .pixels
                    .iter()
                    .map(|p| (p - mean) * (p - mean))
                    .sum::<f64>()
                    / total;
                (vec![mean], vec![var])
            }
            StandardizeScope::PerPixel => {
                let mut mean = vec![0.0; size];
                for img in train.pixels.chunks_exact(size) {
                    mean.iter_mut().zip(img).for_each(|(m, p)| *m += p);
                }
                mean.iter_mut().for_each(|m| *m /= n);
                // second pass removes the rounding left by the first
                let mut fix = vec![0.0; size];
                for img in train.pixels.chunks_exact(size) {
                    fix.iter_mut()
                        .zip(img)
                        .zip(&mean)
                        .for_each(|((f, p), m)| *f += p - m);
                }
                mean.iter_mut().zip(&fix).for_each(|(m, f)| *m += f / n);
                let mut var = vec![0.0; size];
                for img in train.pixels.chunks_exact(size) {
                    for ((v, m), p) in var.iter_mut().zip(&mean).zip(img) {
                        *v += (p - m) * (p - m);
                    }
                }
                var.iter_mut().for_each(|v| *v /= n);
                (mean, var)
            }
        };
        Ok(Standardization {
            mean,
            std: var.into_iter().map(|v| v.sqrt().max(STD_FLOOR)).collect(),
        })
    }

    pub fn apply(&self, set: &mut ImageSet) {
        let size = set.height * set.width;
        if self.mean.len() == 1 {
            let (m, s) = (self.mean[0], self.std[0]);
            set.pixels.iter_mut().for_each(|p| *p = (*p - m) / s);
        } else {
            assert_eq!(
                self.mean.len(),
                size,
                "per-pixel statistics for a different image size"
            );
            for img in set.pixels.chunks_exact_mut(size) {
                for ((p, m), s) in img.iter_mut().zip(&self.mean).zip(&self.std) {
                    *p = (*p - m) / s;
                }
            }
        }
    }
}

/// Fits statistics on `train` only and applies them to both sets.
pub fn standardize(
    mut train: ImageSet,
    mut test: ImageSet,
    scope: StandardizeScope,
) -> Result<(ImageSet, ImageSet, Standardization)> {
    let stats = Standardization::fit(&train, scope)?;
    stats.apply(&mut train);
    stats.apply(&mut test);
    Ok((train, test, stats))
}

/// Fixed-length real-valued sequences, stored example-major: example `e`,
/// step `t` occupies `features[(e·T + t)·m ..][..m]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseSet {
    pub seq_len: usize,
    pub dim: usize,
    pub features: Vec<f64>,
    pub labels: Vec<usize>,
}

impl DenseSet {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn step(&self, example: usize, t: usize) -> &[f64] {
        let off = (example * self.seq_len + t) * self.dim;
        &self.features[off..off + self.dim]
    }
}

/// One pixel per step, scanned row by row from the top-left corner:
/// step `t` is pixel `(t / width, t % width)`.
pub fn to_pixel_sequence(images: &ImageSet) -> DenseSet {
    DenseSet {
        seq_len: images.height * images.width,
        dim: 1,
        features: images.pixels.clone(),
        labels: images.labels.clone(),
    }
}

/// One image row per step.
pub fn to_row_sequence(images: &ImageSet) -> DenseSet {
    DenseSet {
        seq_len: images.height,
        dim: images.width,
        features: images.pixels.clone(),
        labels: images.labels.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Rng;

    fn random_set(n: usize, seed: u64) -> ImageSet {
        let mut rng = Rng::new(seed);
        ImageSet {
            height: 28,
            width: 28,
            pixels: (0..n * 784)
                .map(|_| (rng.below(256) as f64) / 255.0)
                .collect(),
            labels: (0..n).map(|i| i % 10).collect(),
        }
    }

    fn single_pixel(r: usize, c: usize) -> ImageSet {
        let mut s = ImageSet {
            height: 28,
            width: 28,
            pixels: vec![0.0; 784],
            labels: vec![3],
        };
        s.pixels[r * 28 + c] = 1.0;
        s
    }

    #[test]
    fn standardized_train_moments() {
        for scope in [StandardizeScope::Global, StandardizeScope::PerPixel] {
            let (train, _, _) = standardize(random_set(20, 1), random_set(5, 2), scope).unwrap();
            let n = train.pixels.len() as f64;
            let mean = train.pixels.iter().sum::<f64>() / n;
            let var = train
                .pixels
                .iter()
                .map(|p| (p - mean) * (p - mean))
                .sum::<f64>()
                / n;
            assert!(mean.abs() < 1e-10, "{scope:?} mean {mean}");
            assert!((var - 1.0).abs() < 1e-6, "{scope:?} var {var}");
        }
    }

    #[test]
    fn constant_train_maps_to_zero() {
        let mut train = random_set(3, 1);
        train.pixels.fill(0.4);
        for scope in [StandardizeScope::Global, StandardizeScope::PerPixel] {
            let (t, _, stats) = standardize(train.clone(), random_set(1, 2), scope).unwrap();
            assert!(stats.std.iter().all(|&s| s == STD_FLOOR));
            assert!(t.pixels.iter().all(|&p| p == 0.0), "{scope:?}");
        }
    }

    #[test]
    fn test_set_uses_train_statistics() {
        let train = random_set(10, 1);
        let test = random_set(4, 9);
        let stats = Standardization::fit(&train, StandardizeScope::Global).unwrap();
        let (_, t2, _) = standardize(train, test.clone(), StandardizeScope::Global).unwrap();
        for (a, b) in t2.pixels.iter().zip(&test.pixels) {
            assert_eq!(*a, (b - stats.mean[0]) / stats.std[0]);
        }
    }

    #[test]
    fn empty_train_rejected() {
        let empty = random_set(0, 1);
        assert!(standardize(empty, random_set(1, 1), StandardizeScope::Global).is_err());
    }

    #[test]
    fn pixel_sequence_indexing() {
        let seq = to_pixel_sequence(&single_pixel(0, 27));
        assert_eq!((seq.seq_len, seq.dim), (784, 1));
        let lit: Vec<usize> = (0..784).filter(|&t| seq.step(0, t)[0] == 1.0).collect();
        assert_eq!(lit, vec![27]);
        let seq = to_pixel_sequence(&single_pixel(27, 0));
        assert_eq!((0..784).find(|&t| seq.step(0, t)[0] == 1.0), Some(756));
    }

    #[test]
    fn row_sequence_partition() {
        let set = random_set(2, 5);
        let seq = to_row_sequence(&set);
        assert_eq!((seq.seq_len, seq.dim, seq.len()), (28, 28, 2));
        assert_eq!(seq.step(1, 5), &set.image(1)[5 * 28..6 * 28]);
        let joined: Vec<f64> = (0..28).flat_map(|t| seq.step(0, t).to_vec()).collect();
        assert_eq!(joined, set.image(0));
    }
}
