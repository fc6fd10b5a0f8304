//! The four LSTM cell formulations.
//!
//! | variant         | CLI name  | gate pre-activation (i, f, o)  |
//! |-----------------|-----------|--------------------------------|
//! | `Vanilla`       | `vanilla` | `U·h_{t-1} + W·x_t + b`        |
//! | `NoInput`       | `lstm1`   | `U·h_{t-1} + b`                |
//! | `NoInputNoBias` | `lstm2`   | `U·h_{t-1}`                    |
//! | `BiasOnly`      | `lstm3`   | `b`                            |
//!
//! The cell candidate `g_t = tanh(U_c·h_{t-1} + W_c·x_t + b_c)` keeps all
//! three terms in every variant. Pruned blocks are *absent* (`None`), both in
//! parameters and in gradients, so nothing downstream can update them.

mod sequence;
mod step;

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::linalg::{Matrix, Rng, Vector};
use crate::optim::ParamSet;

pub(crate) use sequence::bptt;
pub use sequence::{backward_sequence, backward_through_time, forward_sequence};
pub use step::{cell_backward, cell_step, gate_forward, CellState, Gates, StepCache};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum GateVariant {
    Vanilla,
    /// LSTM1: gates drop the input signal.
    NoInput,
    /// LSTM2: gates drop the input signal and the bias.
    NoInputNoBias,
    /// LSTM3: gates keep only the bias.
    BiasOnly,
}

impl GateVariant {
    pub const ALL: [GateVariant; 4] = [
        GateVariant::Vanilla,
        GateVariant::NoInput,
        GateVariant::NoInputNoBias,
        GateVariant::BiasOnly,
    ];

    pub fn name(self) -> &'static str {
        match self {
            GateVariant::Vanilla => "vanilla",
            GateVariant::NoInput => "lstm1",
            GateVariant::NoInputNoBias => "lstm2",
            GateVariant::BiasOnly => "lstm3",
        }
    }

    /// Tag stored in checkpoint headers.
    pub fn tag(self) -> u32 {
        match self {
            GateVariant::Vanilla => 0,
            GateVariant::NoInput => 1,
            GateVariant::NoInputNoBias => 2,
            GateVariant::BiasOnly => 3,
        }
    }

    pub fn from_tag(tag: u32) -> Option<Self> {
        GateVariant::ALL.get(tag as usize).copied()
    }

    pub fn gate_has_input(self) -> bool {
        self == GateVariant::Vanilla
    }

    pub fn gate_has_recurrent(self) -> bool {
        self != GateVariant::BiasOnly
    }

    pub fn gate_has_bias(self) -> bool {
        self != GateVariant::NoInputNoBias
    }
}

impl fmt::Display for GateVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for GateVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "vanilla" => Ok(GateVariant::Vanilla),
            "lstm1" => Ok(GateVariant::NoInput),
            "lstm2" => Ok(GateVariant::NoInputNoBias),
            "lstm3" => Ok(GateVariant::BiasOnly),
            _ => Err(Error::Argument(format!(
                "unknown variant {s:?}; valid names: vanilla, lstm1, lstm2, lstm3"
            ))),
        }
    }
}

impl serde::Serialize for GateVariant {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> serde::Deserialize<'de> for GateVariant {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// The four weight blocks, in checkpoint order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Block {
    Input,
    Forget,
    Output,
    Candidate,
}

impl Block {
    pub const ALL: [Block; 4] = [Block::Input, Block::Forget, Block::Output, Block::Candidate];

    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn is_gate(self) -> bool {
        self != Block::Candidate
    }

    fn names(self) -> [&'static str; 3] {
        match self {
            Block::Input => ["W_i", "U_i", "b_i"],
            Block::Forget => ["W_f", "U_f", "b_f"],
            Block::Output => ["W_o", "U_o", "b_o"],
            Block::Candidate => ["W_c", "U_c", "b_c"],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockParams {
    /// Input weights, `n × m`.
    pub w: Option<Matrix>,
    /// Recurrent weights, `n × n`.
    pub u: Option<Matrix>,
    pub b: Option<Vector>,
}

/// Parameters of one LSTM layer. The same type doubles as the gradient
/// container, so gradients always share the presence pattern of the
/// parameters they belong to.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    variant: GateVariant,
    input_dim: usize,
    hidden: usize,
    blocks: [BlockParams; 4],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InitMetadata {
    /// False when the variant has no forget-gate bias to fill.
    pub forget_bias_applied: bool,
}

/// Total scalar count for a variant with input dimension `m` and `n` hidden
/// units. The vanilla cell has `4(mn + n² + n)`.
pub fn param_count(variant: GateVariant, m: usize, n: usize) -> Result<usize> {
    if m == 0 || n == 0 {
        return Err(Error::Argument(format!(
            "param_count needs m ≥ 1 and n ≥ 1, got m = {m}, n = {n}"
        )));
    }
    let vanilla = 4 * (m * n + n * n + n);
    Ok(match variant {
        GateVariant::Vanilla => vanilla,
        GateVariant::NoInput => vanilla - 3 * m * n,
        GateVariant::NoInputNoBias => vanilla - 3 * (m * n + n),
        GateVariant::BiasOnly => vanilla - 3 * (m * n + n * n),
    })
}

fn glorot(rng: &mut Rng, rows: usize, cols: usize) -> Result<Matrix> {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    rng.uniform_matrix(-limit, limit, rows, cols)
}

/// Glorot-uniform weights, zero biases, `b_f` set to `forget_bias` where the
/// variant has one. Draw order is block-major (i, f, o, c), `W` before `U`.
pub fn init_params(
    variant: GateVariant,
    m: usize,
    n: usize,
    rng: &mut Rng,
    forget_bias: f64,
) -> Result<(LstmParams, InitMetadata)> {
    param_count(variant, m, n)?;
    let mut params = LstmParams::zeros(variant, m, n);
    for blk in params.blocks.iter_mut() {
        if let Some(w) = blk.w.as_mut() {
            *w = glorot(rng, n, m)?;
        }
        if let Some(u) = blk.u.as_mut() {
            *u = glorot(rng, n, n)?;
        }
    }
    let forget_bias_applied = match params.blocks[Block::Forget.index()].b.as_mut() {
        Some(b) => {
            b.as_mut_slice().iter_mut().for_each(|v| *v = forget_bias);
            true
        }
        None => false,
    };
    Ok((
        params,
        InitMetadata {
            forget_bias_applied,
        },
    ))
}

impl LstmParams {
    /// All-zero parameters with the presence pattern of `variant`.
    pub fn zeros(variant: GateVariant, m: usize, n: usize) -> Self {
        let make = |blk: Block| {
            let gate = blk.is_gate();
            BlockParams {
                w: (!gate || variant.gate_has_input()).then(|| Matrix::zeros(n, m)),
                u: (!gate || variant.gate_has_recurrent()).then(|| Matrix::zeros(n, n)),
                b: (!gate || variant.gate_has_bias()).then(|| Vector::zeros(n)),
            }
        };
        LstmParams {
            variant,
            input_dim: m,
            hidden: n,
            blocks: Block::ALL.map(make),
        }
    }

    pub fn zeros_like(&self) -> Self {
        LstmParams::zeros(self.variant, self.input_dim, self.hidden)
    }

    pub fn variant(&self) -> GateVariant {
        self.variant
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn block(&self, blk: Block) -> &BlockParams {
        &self.blocks[blk.index()]
    }

    pub fn block_mut(&mut self, blk: Block) -> &mut BlockParams {
        &mut self.blocks[blk.index()]
    }

    pub fn blocks(&self) -> &[BlockParams; 4] {
        &self.blocks
    }

    /// Number of scalars actually held.
    pub fn scalar_count(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn same_layout(&self, other: &LstmParams) -> bool {
        self.variant == other.variant
            && self.input_dim == other.input_dim
            && self.hidden == other.hidden
    }

    pub fn scale(&mut self, k: f64) {
        for (_, t) in self.tensors_mut() {
            t.iter_mut().for_each(|v| *v *= k);
        }
    }
}

impl ParamSet for LstmParams {
    fn tensors(&self) -> Vec<(&'static str, &[f64])> {
        let mut out = Vec::with_capacity(12);
        for (blk, p) in Block::ALL.iter().zip(&self.blocks) {
            let [wn, un, bn] = blk.names();
            if let Some(w) = &p.w {
                out.push((wn, w.as_slice()));
            }
            if let Some(u) = &p.u {
                out.push((un, u.as_slice()));
            }
            if let Some(b) = &p.b {
                out.push((bn, b.as_slice()));
            }
        }
        out
    }

    fn tensors_mut(&mut self) -> Vec<(&'static str, &mut [f64])> {
        let mut out = Vec::with_capacity(12);
        for (blk, p) in Block::ALL.iter().zip(self.blocks.iter_mut()) {
            let [wn, un, bn] = blk.names();
            if let Some(w) = p.w.as_mut() {
                out.push((wn, w.as_mut_slice()));
            }
            if let Some(u) = p.u.as_mut() {
                out.push((un, u.as_mut_slice()));
            }
            if let Some(b) = p.b.as_mut() {
                out.push((bn, b.as_mut_slice()));
            }
        }
        out
    }
}
