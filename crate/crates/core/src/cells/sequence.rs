use crate::cells::step::{CellState, PackedParams, StepCache};
use crate::cells::LstmParams;
use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Unrolls the cell over `xs` (one `B × m` matrix per timestep) from the
/// initial state `(h0, c0)`. Returns the final hidden signal and one cache
/// per step.
pub fn forward_sequence(
    params: &LstmParams,
    xs: &[Matrix],
    h0: &Matrix,
    c0: &Matrix,
) -> Result<(Matrix, Vec<StepCache>)> {
    let first = xs
        .first()
        .ok_or_else(|| Error::Argument("empty input sequence".into()))?;
    if let Some(bad) = xs.iter().find(|x| x.shape() != first.shape()) {
        return Err(Error::Shape {
            op: "ragged sequence batch",
            left: first.shape(),
            right: bad.shape(),
        });
    }
    let packed = PackedParams::new(params);
    let mut state = CellState {
        h: h0.clone(),
        c: c0.clone(),
    };
    let mut caches = Vec::with_capacity(xs.len());
    for x in xs {
        let (next, cache) = packed.step(x, &state)?;
        caches.push(cache);
        state = next;
    }
    Ok((state.h, caches))
}

/// Right-to-left BPTT from an upstream gradient on the final hidden signal.
/// Pure chain rule, no batch normalisation: parameter gradients are summed
/// over time and batch. Also returns `dx_t` for every step so callers can
/// push gradients further down (e.g. into an embedding).
pub fn backward_through_time(
    params: &LstmParams,
    caches: &[StepCache],
    dh_last: &Matrix,
) -> Result<(LstmParams, Vec<Matrix>)> {
    bptt(params, caches, dh_last, true)
}

pub(crate) fn bptt(
    params: &LstmParams,
    caches: &[StepCache],
    dh_last: &Matrix,
    want_dx: bool,
) -> Result<(LstmParams, Vec<Matrix>)> {
    let last = caches
        .last()
        .ok_or_else(|| Error::Contract("no step caches to backpropagate through".into()))?;
    let n = params.hidden();
    let batch = last.h_prev.rows();
    if dh_last.shape() != (batch, n) {
        return Err(Error::Shape {
            op: "upstream dh_T",
            left: dh_last.shape(),
            right: (batch, n),
        });
    }
    if let Some(bad) = caches.iter().find(|c| c.h_prev.rows() != batch) {
        return Err(Error::Contract(format!(
            "cache batch size {} differs from {batch}",
            bad.h_prev.rows()
        )));
    }

    let packed = PackedParams::new(params);
    let mut grads = params.zeros_like();
    let mut dxs = if want_dx {
        vec![Matrix::zeros(0, 0); caches.len()]
    } else {
        Vec::new()
    };
    let mut dh = dh_last.clone();
    let mut dc = Matrix::zeros(batch, n);
    for (t, cache) in caches.iter().enumerate().rev() {
        let (dx, dh_prev, dc_prev) = packed.backward_into(cache, &dh, &dc, &mut grads, want_dx)?;
        if want_dx {
            dxs[t] = dx;
        }
        dh = dh_prev;
        dc = dc_prev;
    }
    Ok((grads, dxs))
}

/// BPTT under the mean-over-batch convention: each row of `dh_last` is the
/// gradient of its own example's loss, and the returned gradients belong to
/// the batch mean of those losses.
pub fn backward_sequence(
    params: &LstmParams,
    caches: &[StepCache],
    dh_last: &Matrix,
) -> Result<LstmParams> {
    let (mut grads, _) = bptt(params, caches, dh_last, false)?;
    grads.scale(1.0 / dh_last.rows() as f64);
    Ok(grads)
}
