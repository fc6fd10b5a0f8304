use crate::cells::{Block, LstmParams};
use crate::error::{Error, Result};
use crate::linalg::{matmul_acc, matmul_tn_acc, sigmoid, Matrix};

/// Hidden signal and cell state for a batch, each `B × n`.
#[derive(Debug, Clone, PartialEq)]
pub struct CellState {
    pub h: Matrix,
    pub c: Matrix,
}

impl CellState {
    pub fn zeros(batch: usize, n: usize) -> Self {
        CellState {
            h: Matrix::zeros(batch, n),
            c: Matrix::zeros(batch, n),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gates {
    pub i: Matrix,
    pub f: Matrix,
    pub o: Matrix,
}

/// Everything the backward pass needs from one timestep, for the whole batch.
#[derive(Debug, Clone, PartialEq)]
pub struct StepCache {
    pub x: Matrix,
    pub h_prev: Matrix,
    pub c_prev: Matrix,
    pub i: Matrix,
    pub f: Matrix,
    pub o: Matrix,
    /// Candidate `tanh(U_c h + W_c x + b_c)`.
    pub g: Matrix,
    pub c: Matrix,
    pub tanh_c: Matrix,
}

/// Parameters plus transposed weight copies, so the forward products run in
/// the vectorisable `x · Wᵀ` orientation. Built once per sequence.
pub(crate) struct PackedParams<'a> {
    pub params: &'a LstmParams,
    wt: [Option<Matrix>; 4],
    ut: [Option<Matrix>; 4],
}

impl<'a> PackedParams<'a> {
    pub fn new(params: &'a LstmParams) -> Self {
        let blocks = params.blocks();
        PackedParams {
            params,
            wt: std::array::from_fn(|k| blocks[k].w.as_ref().map(Matrix::transpose)),
            ut: std::array::from_fn(|k| blocks[k].u.as_ref().map(Matrix::transpose)),
        }
    }

    fn check_inputs(&self, x: &Matrix, h_prev: &Matrix) -> Result<()> {
        let (m, n) = (self.params.input_dim(), self.params.hidden());
        if x.cols() != m {
            return Err(Error::Shape {
                op: "cell input",
                left: x.shape(),
                right: (x.rows(), m),
            });
        }
        if h_prev.shape() != (x.rows(), n) {
            return Err(Error::Shape {
                op: "cell hidden state",
                left: h_prev.shape(),
                right: (x.rows(), n),
            });
        }
        Ok(())
    }

    /// `b + x·Wᵀ + h·Uᵀ` for one block, with absent terms skipped.
    fn preactivation(&self, blk: Block, x: &Matrix, h_prev: &Matrix) -> Matrix {
        let k = blk.index();
        let n = self.params.hidden();
        let mut z = Matrix::zeros(x.rows(), n);
        if let Some(b) = &self.params.blocks()[k].b {
            for r in 0..z.rows() {
                z.row_mut(r).copy_from_slice(b.as_slice());
            }
        }
        // Shapes were validated by check_inputs.
        if let Some(wt) = &self.wt[k] {
            matmul_acc(x, wt, &mut z).expect("validated shape");
        }
        if let Some(ut) = &self.ut[k] {
            matmul_acc(h_prev, ut, &mut z).expect("validated shape");
        }
        z
    }

    fn activate(&self, blk: Block, x: &Matrix, h_prev: &Matrix) -> Matrix {
        let mut z = self.preactivation(blk, x, h_prev);
        let act: fn(f64) -> f64 = if blk.is_gate() { sigmoid } else { f64::tanh };
        z.as_mut_slice().iter_mut().for_each(|v| *v = act(*v));
        z
    }

    pub fn gates(&self, x: &Matrix, h_prev: &Matrix) -> Result<Gates> {
        self.check_inputs(x, h_prev)?;
        Ok(Gates {
            i: self.activate(Block::Input, x, h_prev),
            f: self.activate(Block::Forget, x, h_prev),
            o: self.activate(Block::Output, x, h_prev),
        })
    }

    pub fn step(&self, x: &Matrix, state: &CellState) -> Result<(CellState, StepCache)> {
        if state.c.shape() != state.h.shape() {
            return Err(Error::Shape {
                op: "cell state",
                left: state.c.shape(),
                right: state.h.shape(),
            });
        }
        let Gates { i, f, o } = self.gates(x, &state.h)?;
        let g = self.activate(Block::Candidate, x, &state.h);

        let mut c = Matrix::zeros(x.rows(), self.params.hidden());
        let mut tanh_c = c.clone();
        let mut h = c.clone();
        let cs = c.as_mut_slice();
        let ts = tanh_c.as_mut_slice();
        let hs = h.as_mut_slice();
        let cp = state.c.as_slice();
        let (is, fs, os, gs) = (i.as_slice(), f.as_slice(), o.as_slice(), g.as_slice());
        for e in 0..cs.len() {
            cs[e] = fs[e] * cp[e] + is[e] * gs[e];
            ts[e] = cs[e].tanh();
            hs[e] = os[e] * ts[e];
        }

        let cache = StepCache {
            x: x.clone(),
            h_prev: state.h.clone(),
            c_prev: state.c.clone(),
            i,
            f,
            o,
            g,
            c: c.clone(),
            tanh_c,
        };
        Ok((CellState { h, c }, cache))
    }

    /// Backward through one step, accumulating parameter gradients into
    /// `grads`. Returns `(dx, dh_prev, dc_prev)`; `dx` is left `0 × 0` when
    /// `want_dx` is false.
    pub fn backward_into(
        &self,
        cache: &StepCache,
        dh: &Matrix,
        dc: &Matrix,
        grads: &mut LstmParams,
        want_dx: bool,
    ) -> Result<(Matrix, Matrix, Matrix)> {
        let params = self.params;
        let (m, n) = (params.input_dim(), params.hidden());
        let batch = cache.x.rows();
        if cache.x.cols() != m
            || cache.h_prev.shape() != (batch, n)
            || cache.c.shape() != (batch, n)
        {
            return Err(Error::Contract(format!(
                "step cache (x {:?}, h {:?}) does not belong to params with m = {m}, n = {n}",
                cache.x.shape(),
                cache.h_prev.shape()
            )));
        }
        if !grads.same_layout(params) {
            return Err(Error::Contract(
                "gradient container layout differs from params".into(),
            ));
        }
        for (name, d) in [("dh", dh), ("dc", dc)] {
            if d.shape() != (batch, n) {
                return Err(Error::Shape {
                    op: if name == "dh" {
                        "upstream dh"
                    } else {
                        "upstream dc"
                    },
                    left: d.shape(),
                    right: (batch, n),
                });
            }
        }

        let mut dz = [
            Matrix::zeros(batch, n),
            Matrix::zeros(batch, n),
            Matrix::zeros(batch, n),
            Matrix::zeros(batch, n),
        ];
        let mut dc_prev = Matrix::zeros(batch, n);
        {
            let [dzi, dzf, dzo, dzg] = &mut dz;
            let (dzi, dzf, dzo, dzg) = (
                dzi.as_mut_slice(),
                dzf.as_mut_slice(),
                dzo.as_mut_slice(),
                dzg.as_mut_slice(),
            );
            let dcp = dc_prev.as_mut_slice();
            let (i, f, o, g) = (
                cache.i.as_slice(),
                cache.f.as_slice(),
                cache.o.as_slice(),
                cache.g.as_slice(),
            );
            let (tc, cp) = (cache.tanh_c.as_slice(), cache.c_prev.as_slice());
            let (dh, dc) = (dh.as_slice(), dc.as_slice());
            for e in 0..dcp.len() {
                let d_o = dh[e] * tc[e];
                let dct = dc[e] + dh[e] * o[e] * (1.0 - tc[e] * tc[e]);
                let d_i = dct * g[e];
                let d_g = dct * i[e];
                let d_f = dct * cp[e];
                dcp[e] = dct * f[e];
                dzi[e] = d_i * i[e] * (1.0 - i[e]);
                dzf[e] = d_f * f[e] * (1.0 - f[e]);
                dzo[e] = d_o * o[e] * (1.0 - o[e]);
                dzg[e] = d_g * (1.0 - g[e] * g[e]);
            }
        }

        let mut dx = if want_dx {
            Matrix::zeros(batch, m)
        } else {
            Matrix::zeros(0, 0)
        };
        let mut dh_prev = Matrix::zeros(batch, n);
        for (k, dzk) in dz.iter().enumerate() {
            let p = &params.blocks()[k];
            let gb = grads.block_mut(Block::ALL[k]);
            if let (Some(w), Some(gw)) = (&p.w, gb.w.as_mut()) {
                if want_dx {
                    matmul_acc(dzk, w, &mut dx)?;
                }
                matmul_tn_acc(dzk, &cache.x, gw)?;
            }
            if let (Some(u), Some(gu)) = (&p.u, gb.u.as_mut()) {
                matmul_acc(dzk, u, &mut dh_prev)?;
                matmul_tn_acc(dzk, &cache.h_prev, gu)?;
            }
            if let Some(gbias) = gb.b.as_mut() {
                let gs = gbias.as_mut_slice();
                for r in 0..batch {
                    for (acc, v) in gs.iter_mut().zip(dzk.row(r)) {
                        *acc += v;
                    }
                }
            }
        }
        Ok((dx, dh_prev, dc_prev))
    }
}

/// Gate activations `(i, f, o)` for a batch of inputs `x: B×m` and previous
/// hidden signals `h_prev: B×n`.
pub fn gate_forward(params: &LstmParams, x: &Matrix, h_prev: &Matrix) -> Result<Gates> {
    PackedParams::new(params).gates(x, h_prev)
}

/// One recurrence step:
/// `c_t = f ⊙ c_{t-1} + i ⊙ g`, `h_t = o ⊙ tanh(c_t)`.
pub fn cell_step(
    params: &LstmParams,
    x: &Matrix,
    state: &CellState,
) -> Result<(CellState, StepCache)> {
    PackedParams::new(params).step(x, state)
}

/// Gradients of a scalar loss through one step, given the upstream `dh_t`
/// and `dc_t`. Returns `(dparams, dx, dh_prev, dc_prev)`; `dparams` has the
/// presence pattern of `params`.
pub fn cell_backward(
    params: &LstmParams,
    cache: &StepCache,
    dh: &Matrix,
    dc: &Matrix,
) -> Result<(LstmParams, Matrix, Matrix, Matrix)> {
    let mut grads = params.zeros_like();
    let (dx, dh_prev, dc_prev) =
        PackedParams::new(params).backward_into(cache, dh, dc, &mut grads, true)?;
    Ok((grads, dx, dh_prev, dc_prev))
}
