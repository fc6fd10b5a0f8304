use crate::data::images::DenseSet;
use crate::data::tokens::TokenSet;
use crate::linalg::{Matrix, Rng};

/// A dataset ready for batching: real-valued sequences or token ids
/// (already padded to a common length).
#[derive(Debug, Clone, PartialEq)]
pub enum Dataset {
    Dense(DenseSet),
    Tokens(TokenSet),
}

#[derive(Debug, Clone, PartialEq)]
pub enum BatchInputs {
    /// `T` matrices of shape `B × m`.
    Dense(Vec<Matrix>),
    /// `B` id sequences of length `T`.
    Tokens(Vec<Vec<usize>>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceBatch {
    pub inputs: BatchInputs,
    pub labels: Vec<usize>,
    /// Dataset positions of the examples in this batch.
    pub indices: Vec<usize>,
}

impl SequenceBatch {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn seq_len(&self) -> usize {
        match &self.inputs {
            BatchInputs::Dense(xs) => xs.len(),
            BatchInputs::Tokens(ids) => ids.first().map_or(0, Vec::len),
        }
    }
}

impl Dataset {
    pub fn len(&self) -> usize {
        match self {
            Dataset::Dense(d) => d.len(),
            Dataset::Tokens(t) => t.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn labels(&self) -> &[usize] {
        match self {
            Dataset::Dense(d) => &d.labels,
            Dataset::Tokens(t) => &t.labels,
        }
    }

    pub fn seq_len(&self) -> usize {
        match self {
            Dataset::Dense(d) => d.seq_len,
            Dataset::Tokens(t) => t.sequences.first().map_or(0, Vec::len),
        }
    }

    /// Assembles the examples at `indices` into one batch.
    pub fn gather(&self, indices: &[usize]) -> SequenceBatch {
        let inputs = match self {
            Dataset::Dense(d) => BatchInputs::Dense(
                (0..d.seq_len)
                    .map(|t| {
                        let mut x = Matrix::zeros(indices.len(), d.dim);
                        for (b, &e) in indices.iter().enumerate() {
                            x.row_mut(b).copy_from_slice(d.step(e, t));
                        }
                        x
                    })
                    .collect(),
            ),
            Dataset::Tokens(t) => {
                BatchInputs::Tokens(indices.iter().map(|&e| t.sequences[e].clone()).collect())
            }
        };
        SequenceBatch {
            inputs,
            labels: indices.iter().map(|&e| self.labels()[e]).collect(),
            indices: indices.to_vec(),
        }
    }

    /// Yields consecutive batches of `batch_size` (the last one may be
    /// short). With `shuffle`, the order is a permutation drawn from `rng`.
    pub fn batches<'a>(&'a self, batch_size: usize, rng: &mut Rng, shuffle: bool) -> Batches<'a> {
        assert!(batch_size > 0, "batch_size must be positive");
        let mut order: Vec<usize> = (0..self.len()).collect();
        if shuffle {
            rng.shuffle(&mut order);
        }
        Batches {
            data: self,
            order,
            batch_size,
            pos: 0,
        }
    }
}

pub struct Batches<'a> {
    data: &'a Dataset,
    order: Vec<usize>,
    batch_size: usize,
    pos: usize,
}

impl Iterator for Batches<'_> {
    type Item = SequenceBatch;

    fn next(&mut self) -> Option<SequenceBatch> {
        if self.pos >= self.order.len() {
            return None;
        }
        let end = (self.pos + self.batch_size).min(self.order.len());
        let batch = self.data.gather(&self.order[self.pos..end]);
        self.pos = end;
        Some(batch)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = (self.order.len() - self.pos).div_ceil(self.batch_size);
        (left, Some(left))
    }
}

impl ExactSizeIterator for Batches<'_> {}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense(n: usize) -> Dataset {
        Dataset::Dense(DenseSet {
            seq_len: 3,
            dim: 2,
            features: (0..n * 6).map(|v| v as f64).collect(),
            labels: (0..n).map(|i| i % 10).collect(),
        })
    }

    #[test]
    fn batch_sizes() {
        let d = dense(100);
        let sizes: Vec<usize> = d
            .batches(32, &mut Rng::new(0), true)
            .map(|b| b.len())
            .collect();
        assert_eq!(sizes, vec![32, 32, 32, 4]);
    }

    #[test]
    fn unshuffled_keeps_order() {
        let d = dense(10);
        let idx: Vec<usize> = d
            .batches(4, &mut Rng::new(0), false)
            .flat_map(|b| b.indices)
            .collect();
        assert_eq!(idx, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn same_seed_same_batches() {
        let d = dense(50);
        let a: Vec<_> = d.batches(8, &mut Rng::new(3), true).collect();
        let b: Vec<_> = d.batches(8, &mut Rng::new(3), true).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn every_value_appears_once_per_epoch() {
        let d = dense(37);
        let mut seen: Vec<f64> = Vec::new();
        for b in d.batches(5, &mut Rng::new(1), true) {
            let BatchInputs::Dense(xs) = b.inputs else {
                unreachable!()
            };
            assert_eq!(xs.len(), 3);
            for x in xs {
                seen.extend_from_slice(x.as_slice());
            }
        }
        seen.sort_by(f64::total_cmp);
        assert_eq!(seen, (0..37 * 6).map(|v| v as f64).collect::<Vec<_>>());
    }

    #[test]
    fn dense_layout_is_time_major() {
        let d = dense(4);
        let b = d.gather(&[2, 0]);
        let BatchInputs::Dense(xs) = b.inputs else {
            unreachable!()
        };
        assert_eq!(xs[1].row(0), &[14.0, 15.0]);
        assert_eq!(xs[1].row(1), &[2.0, 3.0]);
        assert_eq!(b.labels, vec![2, 0]);
    }
}
