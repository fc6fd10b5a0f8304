use crate::cells::{bptt, forward_sequence, init_params, GateVariant, InitMetadata, LstmParams};
use crate::data::{BatchInputs, SequenceBatch};
use crate::error::{Error, Result};
use crate::layers::{
    dropout_elems, softmax_xent, DenseHead, DropoutSpec, EmbeddingTable, RowMasks,
};
use crate::linalg::{Matrix, Rng};
use crate::optim::ParamSet;

/// What feeds the recurrent layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelInput {
    /// Real-valued vectors of dimension `dim` per step.
    Dense { dim: usize },
    /// Token ids looked up in a `vocab × dim` embedding.
    Tokens { vocab: usize, dim: usize },
}

/// Optional embedding, one LSTM layer, softmax head. Also used as the
/// gradient container for itself.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub embedding: Option<EmbeddingTable>,
    pub lstm: LstmParams,
    pub head: DenseHead,
}

/// Per-batch stochastic regularisation: the rates plus the batch's own
/// generator substream.
#[derive(Debug, Clone)]
pub struct DropoutCtx {
    pub spec: DropoutSpec,
    pub rng: Rng,
}

const INIT_EMBED: u64 = 1;
const INIT_CELL: u64 = 2;
const INIT_HEAD: u64 = 3;
const DROP_EMBED: u64 = 1;
const DROP_ROWS: u64 = 2;

impl Model {
    pub fn new(
        variant: GateVariant,
        input: ModelInput,
        hidden: usize,
        classes: usize,
        forget_bias: f64,
        rng: &Rng,
    ) -> Result<(Model, InitMetadata)> {
        let (embedding, m) = match input {
            ModelInput::Dense { dim } => (None, dim),
            ModelInput::Tokens { vocab, dim } => (
                Some(EmbeddingTable::new(vocab, dim, &mut rng.fork(INIT_EMBED))?),
                dim,
            ),
        };
        let (lstm, meta) = init_params(variant, m, hidden, &mut rng.fork(INIT_CELL), forget_bias)?;
        let head = DenseHead::new(classes, hidden, &mut rng.fork(INIT_HEAD))?;
        Ok((
            Model {
                embedding,
                lstm,
                head,
            },
            meta,
        ))
    }

    pub fn zeros_like(&self) -> Model {
        Model {
            embedding: self
                .embedding
                .as_ref()
                .map(|e| EmbeddingTable::zeros(e.vocab(), e.dim())),
            lstm: self.lstm.zeros_like(),
            head: DenseHead::zeros(self.head.classes(), self.head.hidden()),
        }
    }

    pub fn variant(&self) -> GateVariant {
        self.lstm.variant()
    }

    /// Checks the dimension chain embed/raw input → cell → head.
    pub fn validate(&self) -> Result<()> {
        if let Some(e) = &self.embedding {
            if e.dim() != self.lstm.input_dim() {
                return Err(Error::Contract(format!(
                    "embedding dim {} does not match cell input dim {}",
                    e.dim(),
                    self.lstm.input_dim()
                )));
            }
        }
        if self.head.hidden() != self.lstm.hidden() {
            return Err(Error::Contract(format!(
                "head expects {} hidden units, cell has {}",
                self.head.hidden(),
                self.lstm.hidden()
            )));
        }
        Ok(())
    }

    fn inputs(&self, batch: &SequenceBatch) -> Result<Vec<Matrix>> {
        match (&batch.inputs, &self.embedding) {
            (BatchInputs::Dense(xs), None) => Ok(xs.clone()),
            (BatchInputs::Tokens(ids), Some(e)) => e.forward(ids),
            (BatchInputs::Dense(_), Some(_)) => Err(Error::Contract(
                "model expects token ids, batch holds dense inputs".into(),
            )),
            (BatchInputs::Tokens(_), None) => Err(Error::Contract(
                "model expects dense inputs, batch holds token ids".into(),
            )),
        }
    }

    /// Inference-mode logits (`B × K`); dropout never applies here.
    pub fn logits(&self, batch: &SequenceBatch) -> Result<Matrix> {
        let xs = self.inputs(batch)?;
        let n = self.lstm.hidden();
        let zeros = Matrix::zeros(batch.len(), n);
        let (h, _) = forward_sequence(&self.lstm, &xs, &zeros, &zeros)?;
        self.head.forward(&h)
    }

    /// Mean cross-entropy of `batch` in inference mode.
    pub fn loss(&self, batch: &SequenceBatch) -> Result<f64> {
        softmax_xent(&self.logits(batch)?, &batch.labels).map(|(l, _)| l)
    }

    /// Mean cross-entropy and its exact gradient. With `dropout`, element
    /// dropout hits the embedded inputs and row dropout hits the cell's
    /// `W`/`U` matrices, with the same masks in the forward and backward pass.
    pub fn loss_and_grads(
        &self,
        batch: &SequenceBatch,
        dropout: Option<&DropoutCtx>,
    ) -> Result<(f64, Model)> {
        let mut xs = self.inputs(batch)?;
        let mut embed_masks = Vec::new();
        if let (Some(ctx), Some(_)) = (dropout, &self.embedding) {
            if ctx.spec.embed_rate > 0.0 {
                let mut rng = ctx.rng.fork(DROP_EMBED);
                for x in xs.iter_mut() {
                    let (y, mask) = dropout_elems(x, ctx.spec.embed_rate, &mut rng, true)?;
                    *x = y;
                    embed_masks.push(mask);
                }
            }
        }
        let row_masks = match dropout {
            Some(ctx) if ctx.spec.row_rate > 0.0 => Some(RowMasks::sample(
                &self.lstm,
                ctx.spec.row_rate,
                &mut ctx.rng.fork(DROP_ROWS),
            )?),
            _ => None,
        };
        let dropped;
        let cell = match &row_masks {
            Some(masks) => {
                dropped = masks.apply(&self.lstm);
                &dropped
            }
            None => &self.lstm,
        };

        let n = cell.hidden();
        let zeros = Matrix::zeros(batch.len(), n);
        let (h, caches) = forward_sequence(cell, &xs, &zeros, &zeros)?;
        let logits = self.head.forward(&h)?;
        let (loss, dlogits) = softmax_xent(&logits, &batch.labels)?;
        let (dhead, dh) = self.head.backward(&h, &dlogits)?;
        let (mut dlstm, mut dxs) = bptt(cell, &caches, &dh, self.embedding.is_some())?;
        if let Some(masks) = &row_masks {
            masks.scale(&mut dlstm);
        }
        let dembed = match (&self.embedding, &batch.inputs) {
            (Some(e), BatchInputs::Tokens(ids)) => {
                for (dx, mask) in dxs.iter_mut().zip(&embed_masks) {
                    dx.as_mut_slice()
                        .iter_mut()
                        .zip(mask.as_slice())
                        .for_each(|(g, m)| *g *= m);
                }
                Some(e.backward(ids, &dxs)?)
            }
            _ => None,
        };
        Ok((
            loss,
            Model {
                embedding: dembed,
                lstm: dlstm,
                head: dhead,
            },
        ))
    }

    /// Predicted class per example: index of the largest logit, first on ties.
    pub fn predict(&self, batch: &SequenceBatch) -> Result<Vec<usize>> {
        let logits = self.logits(batch)?;
        Ok((0..logits.rows()).map(|r| argmax(logits.row(r))).collect())
    }
}

pub(crate) fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (k, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = k;
        }
    }
    best
}

impl ParamSet for Model {
    fn tensors(&self) -> Vec<(&'static str, &[f64])> {
        let mut out = self
            .embedding
            .as_ref()
            .map(|e| e.tensors())
            .unwrap_or_default();
        out.extend(self.lstm.tensors());
        out.extend(self.head.tensors());
        out
    }

    fn tensors_mut(&mut self) -> Vec<(&'static str, &mut [f64])> {
        let mut out = self
            .embedding
            .as_mut()
            .map(|e| e.tensors_mut())
            .unwrap_or_default();
        out.extend(self.lstm.tensors_mut());
        out.extend(self.head.tensors_mut());
        out
    }
}
