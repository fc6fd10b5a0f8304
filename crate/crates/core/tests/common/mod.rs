//! Independent oracles shared by the integration tests: a per-scalar LSTM
//! evaluation that shares no code with the batched kernels, and central
//! finite differences.
#![allow(dead_code, clippy::needless_range_loop)]

use std::path::Path;

use gatecell::cells::{Block, LstmParams};
use gatecell::data::fixtures::{write_fixtures, FixtureSpec};
use gatecell::data::{BatchInputs, SequenceBatch};
use gatecell::linalg::{Matrix, Rng};

fn sig(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// `W x + U h + b` for one block and one example, summing only the terms the
/// block actually has.
fn pre(params: &LstmParams, blk: Block, x: &[f64], h: &[f64], r: usize) -> f64 {
    let p = params.block(blk);
    let mut z = 0.0;
    if let Some(w) = &p.w {
        for (k, xk) in x.iter().enumerate() {
            z += w.get(r, k) * xk;
        }
    }
    if let Some(u) = &p.u {
        for (k, hk) in h.iter().enumerate() {
            z += u.get(r, k) * hk;
        }
    }
    if let Some(b) = &p.b {
        z += b.as_slice()[r];
    }
    z
}

pub struct ScalarStep {
    pub i: Vec<f64>,
    pub f: Vec<f64>,
    pub o: Vec<f64>,
    pub g: Vec<f64>,
    pub c: Vec<f64>,
    pub h: Vec<f64>,
}

/// One step for a single example, unit by unit.
pub fn scalar_step(params: &LstmParams, x: &[f64], h: &[f64], c: &[f64]) -> ScalarStep {
    let n = params.hidden();
    let mut s = ScalarStep {
        i: vec![0.0; n],
        f: vec![0.0; n],
        o: vec![0.0; n],
        g: vec![0.0; n],
        c: vec![0.0; n],
        h: vec![0.0; n],
    };
    for r in 0..n {
        s.i[r] = sig(pre(params, Block::Input, x, h, r));
        s.f[r] = sig(pre(params, Block::Forget, x, h, r));
        s.o[r] = sig(pre(params, Block::Output, x, h, r));
        s.g[r] = pre(params, Block::Candidate, x, h, r).tanh();
        s.c[r] = s.f[r] * c[r] + s.i[r] * s.g[r];
        s.h[r] = s.o[r] * s.c[r].tanh();
    }
    s
}

/// Final hidden signal for every example, computed one example at a time.
pub fn scalar_sequence(params: &LstmParams, xs: &[Matrix], h0: &Matrix, c0: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(h0.rows(), h0.cols());
    for e in 0..h0.rows() {
        let mut h = h0.row(e).to_vec();
        let mut c = c0.row(e).to_vec();
        for x in xs {
            let s = scalar_step(params, x.row(e), &h, &c);
            h = s.h;
            c = s.c;
        }
        out.row_mut(e).copy_from_slice(&h);
    }
    out
}

pub fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-12)
}

/// `(f(θ+ε) − f(θ−ε)) / 2ε` at coordinate `i` of `theta`, restoring it after.
pub fn central_diff(
    theta: &mut [f64],
    i: usize,
    eps: f64,
    mut f: impl FnMut(&[f64]) -> f64,
) -> f64 {
    let orig = theta[i];
    theta[i] = orig + eps;
    let plus = f(theta);
    theta[i] = orig - eps;
    let minus = f(theta);
    theta[i] = orig;
    (plus - minus) / (2.0 * eps)
}

pub fn random_seq(rng: &mut Rng, t: usize, b: usize, m: usize) -> Vec<Matrix> {
    (0..t)
        .map(|_| rng.uniform_matrix(-1.0, 1.0, b, m).unwrap())
        .collect()
}

pub fn dense_batch(rng: &mut Rng, t: usize, b: usize, m: usize, classes: usize) -> SequenceBatch {
    SequenceBatch {
        inputs: BatchInputs::Dense(random_seq(rng, t, b, m)),
        labels: (0..b).map(|_| rng.below(classes)).collect(),
        indices: (0..b).collect(),
    }
}

pub fn token_batch(
    rng: &mut Rng,
    t: usize,
    b: usize,
    vocab: usize,
    classes: usize,
) -> SequenceBatch {
    SequenceBatch {
        inputs: BatchInputs::Tokens(
            (0..b)
                .map(|_| (0..t).map(|_| rng.below(vocab)).collect())
                .collect(),
        ),
        labels: (0..b).map(|_| rng.below(classes)).collect(),
        indices: (0..b).collect(),
    }
}

pub fn fixtures(dir: &Path) {
    write_fixtures(dir, &FixtureSpec::default()).unwrap();
}
