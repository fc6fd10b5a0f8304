//! Layers around the recurrent cell: embedding lookup, dense softmax head,
//! cross-entropy, and the two dropout flavours (per element on embeddings,
//! per row on the cell's weight matrices).

use serde::{Deserialize, Serialize};

use crate::cells::{Block, LstmParams};
use crate::error::{Error, Result};
use crate::linalg::{matmul_acc, matmul_tn_acc, Matrix, Rng, Vector};
use crate::optim::ParamSet;

/// Token id reserved for padding.
pub const PAD_ID: usize = 0;

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    /// `V × d`; row `i` embeds token `i`.
    pub table: Matrix,
}

impl EmbeddingTable {
    pub fn new(vocab: usize, dim: usize, rng: &mut Rng) -> Result<Self> {
        if vocab == 0 || dim == 0 {
            return Err(Error::Argument(
                "embedding needs vocab ≥ 1 and dim ≥ 1".into(),
            ));
        }
        Ok(EmbeddingTable {
            table: rng.uniform_matrix(-0.05, 0.05, vocab, dim)?,
        })
    }

    pub fn zeros(vocab: usize, dim: usize) -> Self {
        EmbeddingTable {
            table: Matrix::zeros(vocab, dim),
        }
    }

    pub fn vocab(&self) -> usize {
        self.table.rows()
    }

    pub fn dim(&self) -> usize {
        self.table.cols()
    }

    /// Gathers rows for `ids` (`B` sequences of equal length `T`) into `T`
    /// matrices of shape `B × d`.
    pub fn forward(&self, ids: &[Vec<usize>]) -> Result<Vec<Matrix>> {
        let t_len = check_rectangular(ids)?;
        let (vocab, d) = (self.vocab(), self.dim());
        let mut out = vec![Matrix::zeros(ids.len(), d); t_len];
        for (b, seq) in ids.iter().enumerate() {
            for (t, &id) in seq.iter().enumerate() {
                if id >= vocab {
                    return Err(Error::OutOfVocab { id, vocab });
                }
                out[t].row_mut(b).copy_from_slice(self.table.row(id));
            }
        }
        Ok(out)
    }

    /// Adjoint of [`forward`](Self::forward): scatter-adds `dout` rows into a
    /// zero table at the ids that produced them.
    pub fn backward(&self, ids: &[Vec<usize>], dout: &[Matrix]) -> Result<EmbeddingTable> {
        let t_len = check_rectangular(ids)?;
        let (vocab, d) = (self.vocab(), self.dim());
        if dout.len() != t_len || dout.iter().any(|m| m.shape() != (ids.len(), d)) {
            return Err(Error::Shape {
                op: "embed_backward",
                left: (t_len, ids.len()),
                right: (dout.len(), dout.first().map_or(0, Matrix::rows)),
            });
        }
        let mut grad = EmbeddingTable::zeros(vocab, d);
        for (b, seq) in ids.iter().enumerate() {
            for (t, &id) in seq.iter().enumerate() {
                if id >= vocab {
                    return Err(Error::OutOfVocab { id, vocab });
                }
                for (acc, v) in grad.table.row_mut(id).iter_mut().zip(dout[t].row(b)) {
                    *acc += v;
                }
            }
        }
        Ok(grad)
    }
}

fn check_rectangular(ids: &[Vec<usize>]) -> Result<usize> {
    let t_len = ids.first().map_or(0, Vec::len);
    if let Some((b, s)) = ids.iter().enumerate().find(|(_, s)| s.len() != t_len) {
        return Err(Error::Shape {
            op: "token batch",
            left: (0, t_len),
            right: (b, s.len()),
        });
    }
    Ok(t_len)
}

impl ParamSet for EmbeddingTable {
    fn tensors(&self) -> Vec<(&'static str, &[f64])> {
        vec![("embedding", self.table.as_slice())]
    }

    fn tensors_mut(&mut self) -> Vec<(&'static str, &mut [f64])> {
        vec![("embedding", self.table.as_mut_slice())]
    }
}

/// Affine classifier `logits = h·Wᵀ + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseHead {
    /// `K × n`.
    pub w: Matrix,
    pub b: Vector,
}

impl DenseHead {
    pub fn new(classes: usize, hidden: usize, rng: &mut Rng) -> Result<Self> {
        if classes == 0 || hidden == 0 {
            return Err(Error::Argument("dense head needs K ≥ 1 and n ≥ 1".into()));
        }
        let limit = (6.0 / (classes + hidden) as f64).sqrt();
        Ok(DenseHead {
            w: rng.uniform_matrix(-limit, limit, classes, hidden)?,
            b: Vector::zeros(classes),
        })
    }

    pub fn zeros(classes: usize, hidden: usize) -> Self {
        DenseHead {
            w: Matrix::zeros(classes, hidden),
            b: Vector::zeros(classes),
        }
    }

    pub fn classes(&self) -> usize {
        self.w.rows()
    }

    pub fn hidden(&self) -> usize {
        self.w.cols()
    }

    pub fn forward(&self, h: &Matrix) -> Result<Matrix> {
        if h.cols() != self.hidden() {
            return Err(Error::Shape {
                op: "head_forward",
                left: h.shape(),
                right: self.w.shape(),
            });
        }
        let mut logits = Matrix::zeros(h.rows(), self.classes());
        for r in 0..h.rows() {
            logits.row_mut(r).copy_from_slice(self.b.as_slice());
        }
        matmul_acc(h, &self.w.transpose(), &mut logits)?;
        Ok(logits)
    }

    /// Returns `(dhead, dh)` for upstream `dlogits: B×K`.
    pub fn backward(&self, h: &Matrix, dlogits: &Matrix) -> Result<(DenseHead, Matrix)> {
        if dlogits.shape() != (h.rows(), self.classes()) || h.cols() != self.hidden() {
            return Err(Error::Shape {
                op: "head_backward",
                left: h.shape(),
                right: dlogits.shape(),
            });
        }
        let mut grad = DenseHead::zeros(self.classes(), self.hidden());
        matmul_tn_acc(dlogits, h, &mut grad.w)?;
        let gb = grad.b.as_mut_slice();
        for r in 0..dlogits.rows() {
            for (acc, v) in gb.iter_mut().zip(dlogits.row(r)) {
                *acc += v;
            }
        }
        let mut dh = Matrix::zeros(h.rows(), self.hidden());
        matmul_acc(dlogits, &self.w, &mut dh)?;
        Ok((grad, dh))
    }
}

impl ParamSet for DenseHead {
    fn tensors(&self) -> Vec<(&'static str, &[f64])> {
        vec![("head.W", self.w.as_slice()), ("head.b", self.b.as_slice())]
    }

    fn tensors_mut(&mut self) -> Vec<(&'static str, &mut [f64])> {
        vec![
            ("head.W", self.w.as_mut_slice()),
            ("head.b", self.b.as_mut_slice()),
        ]
    }
}

/// Row-wise softmax with the row max subtracted first.
pub fn softmax(logits: &Matrix) -> Matrix {
    let mut p = logits.clone();
    for r in 0..p.rows() {
        let row = p.row_mut(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        row.iter_mut().for_each(|v| *v /= total);
    }
    p
}

/// Mean cross-entropy in nats and its gradient `(softmax − onehot)/B`.
pub fn softmax_xent(logits: &Matrix, labels: &[usize]) -> Result<(f64, Matrix)> {
    let (batch, classes) = logits.shape();
    if labels.len() != batch {
        return Err(Error::Shape {
            op: "softmax_xent labels",
            left: logits.shape(),
            right: (labels.len(), 1),
        });
    }
    if let Some(&label) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::Label { label, classes });
    }
    let mut loss = 0.0;
    let mut d = Matrix::zeros(batch, classes);
    for (r, &label) in labels.iter().enumerate() {
        let row = logits.row(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let log_z = row.iter().map(|v| (v - max).exp()).sum::<f64>().ln() + max;
        loss += log_z - row[label];
        for (c, g) in d.row_mut(r).iter_mut().enumerate() {
            *g = (row[c] - log_z).exp();
        }
        d.row_mut(r)[label] -= 1.0;
    }
    let inv_b = 1.0 / batch as f64;
    d.scale(inv_b);
    Ok((loss * inv_b, d))
}

fn check_rate(rate: f64) -> Result<()> {
    if (0.0..1.0).contains(&rate) {
        Ok(())
    } else {
        Err(Error::Argument(format!(
            "dropout rate must lie in [0, 1), got {rate}"
        )))
    }
}

/// Inverted element dropout. The returned mask holds `0` or `1/(1−rate)` per
/// element; at inference (or `rate == 0`) `y` is `x` exactly and the mask is
/// all ones.
pub fn dropout_elems(
    x: &Matrix,
    rate: f64,
    rng: &mut Rng,
    training: bool,
) -> Result<(Matrix, Matrix)> {
    check_rate(rate)?;
    if !training || rate == 0.0 {
        return Ok((x.clone(), Matrix::filled(x.rows(), x.cols(), 1.0)));
    }
    let keep = 1.0 / (1.0 - rate);
    let mut mask = Matrix::zeros(x.rows(), x.cols());
    mask.as_mut_slice()
        .iter_mut()
        .for_each(|m| *m = if rng.next_f64() < rate { 0.0 } else { keep });
    let mut y = x.clone();
    y.as_mut_slice()
        .iter_mut()
        .zip(mask.as_slice())
        .for_each(|(v, m)| *v *= m);
    Ok((y, mask))
}

/// Inverted row dropout: whole rows of `m` are zeroed with probability
/// `rate`; survivors are scaled by `1/(1−rate)`. Returns the per-row factor.
pub fn dropout_rows(
    m: &Matrix,
    rate: f64,
    rng: &mut Rng,
    training: bool,
) -> Result<(Matrix, Vec<f64>)> {
    check_rate(rate)?;
    if !training || rate == 0.0 {
        return Ok((m.clone(), vec![1.0; m.rows()]));
    }
    let keep = 1.0 / (1.0 - rate);
    let mask: Vec<f64> = (0..m.rows())
        .map(|_| if rng.next_f64() < rate { 0.0 } else { keep })
        .collect();
    let mut out = m.clone();
    scale_rows(&mut out, &mask);
    Ok((out, mask))
}

fn scale_rows(m: &mut Matrix, factors: &[f64]) {
    for (r, &k) in factors.iter().enumerate() {
        m.row_mut(r).iter_mut().for_each(|v| *v *= k);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DropoutSpec {
    pub embed_rate: f64,
    pub row_rate: f64,
}

impl Default for DropoutSpec {
    fn default() -> Self {
        DropoutSpec {
            embed_rate: 0.0,
            row_rate: 0.0,
        }
    }
}

impl DropoutSpec {
    pub fn validate(&self) -> Result<()> {
        check_rate(self.embed_rate)?;
        check_rate(self.row_rate)
    }

    pub fn is_active(&self) -> bool {
        self.embed_rate > 0.0 || self.row_rate > 0.0
    }
}

/// Row masks for every present `W_*` and `U_*` of a cell, sampled once per
/// mini-batch and reused for that batch's forward and backward passes.
#[derive(Debug, Clone, PartialEq)]
pub struct RowMasks {
    w: [Option<Vec<f64>>; 4],
    u: [Option<Vec<f64>>; 4],
}

impl RowMasks {
    pub fn sample(params: &LstmParams, rate: f64, rng: &mut Rng) -> Result<Self> {
        check_rate(rate)?;
        let mut draw = |m: &Option<Matrix>| -> Result<Option<Vec<f64>>> {
            m.as_ref()
                .map(|m| dropout_rows(m, rate, rng, true).map(|(_, mask)| mask))
                .transpose()
        };
        let mut w: [Option<Vec<f64>>; 4] = Default::default();
        let mut u: [Option<Vec<f64>>; 4] = Default::default();
        for blk in Block::ALL {
            let p = params.block(blk);
            w[blk.index()] = draw(&p.w)?;
            u[blk.index()] = draw(&p.u)?;
        }
        Ok(RowMasks { w, u })
    }

    /// Cell parameters with the masks applied; biases are left alone.
    pub fn apply(&self, params: &LstmParams) -> LstmParams {
        let mut out = params.clone();
        self.scale(&mut out);
        out
    }

    /// Maps gradients w.r.t. the dropped weights back to the raw weights
    /// (row-wise chain rule through `diag(mask)·W`).
    pub fn scale(&self, target: &mut LstmParams) {
        for blk in Block::ALL {
            let k = blk.index();
            let b = target.block_mut(blk);
            if let (Some(m), Some(mask)) = (b.w.as_mut(), &self.w[k]) {
                scale_rows(m, mask);
            }
            if let (Some(m), Some(mask)) = (b.u.as_mut(), &self.u[k]) {
                scale_rows(m, mask);
            }
        }
    }
}
