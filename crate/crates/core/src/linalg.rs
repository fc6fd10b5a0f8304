//! Dense row-major matrices and vectors in double precision, plus the seeded
//! generator every stochastic consumer draws from.
//!
//! All products accumulate over the inner index in ascending order, starting
//! from zero, so a product computed here is bit-identical to the obvious
//! scalar triple loop. The kernels are written in `i-k-j` order: the
//! innermost loop runs over independent output columns, which keeps the
//! per-entry summation order fixed while still letting the compiler
//! vectorise across columns.

use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Vector {
    data: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElementOp {
    Add,
    Sub,
    Hadamard,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Sigmoid,
    Tanh,
    Exp,
}

/// Logistic sigmoid, evaluated on the branch that never exponentiates a
/// positive argument.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Sigmoid => sigmoid(x),
            Activation::Tanh => x.tanh(),
            Activation::Exp => x.exp(),
        }
    }
}

impl ElementOp {
    #[inline]
    fn apply(self, a: f64, b: f64) -> f64 {
        match self {
            ElementOp::Add => a + b,
            ElementOp::Sub => a - b,
            ElementOp::Hadamard => a * b,
        }
    }
}

fn ensure_finite(data: &[f64]) -> Result<()> {
    match data.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(Error::Argument(format!(
            "non-finite entry {} at index {i}",
            data[i]
        ))),
        None => Ok(()),
    }
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    /// Builds a matrix from row-major data. Rejects wrong lengths and
    /// non-finite entries.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape {
                op: "from_vec",
                left: (rows, cols),
                right: (data.len(), 1),
            });
        }
        ensure_finite(&data)?;
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != cols {
                return Err(Error::Shape {
                    op: "from_rows",
                    left: (i, r.len()),
                    right: (0, cols),
                });
            }
            data.extend_from_slice(r);
        }
        Matrix::from_vec(rows.len(), cols, data)
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        t
    }

    pub fn scale(&mut self, k: f64) {
        self.data.iter_mut().for_each(|v| *v *= k);
    }

    pub fn fill(&mut self, v: f64) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    pub fn map(&self, f: Activation) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f.apply(v)).collect(),
        }
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }
}

/// Standard matrix product `a · b`.
pub fn matmul(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    let mut out = Matrix::zeros(a.rows, b.cols);
    matmul_acc(a, b, &mut out)?;
    Ok(out)
}

/// `out += a · b`, each output entry accumulating over the inner index in
/// ascending order.
pub fn matmul_acc(a: &Matrix, b: &Matrix, out: &mut Matrix) -> Result<()> {
    if a.cols != b.rows {
        return Err(Error::Shape {
            op: "matmul",
            left: a.shape(),
            right: b.shape(),
        });
    }
    if out.shape() != (a.rows, b.cols) {
        return Err(Error::Shape {
            op: "matmul output",
            left: out.shape(),
            right: (a.rows, b.cols),
        });
    }
    let r = b.cols;
    for i in 0..a.rows {
        let arow = &a.data[i * a.cols..(i + 1) * a.cols];
        let orow = &mut out.data[i * r..(i + 1) * r];
        for (k, &aik) in arow.iter().enumerate() {
            let brow = &b.data[k * r..(k + 1) * r];
            for (o, &bkj) in orow.iter_mut().zip(brow) {
                *o += aik * bkj;
            }
        }
    }
    Ok(())
}

/// `out += aᵀ · b` for `a: p×q`, `b: p×r`, `out: q×r`; accumulation runs
/// over the shared row index in ascending order.
pub fn matmul_tn_acc(a: &Matrix, b: &Matrix, out: &mut Matrix) -> Result<()> {
    if a.rows != b.rows || out.shape() != (a.cols, b.cols) {
        return Err(Error::Shape {
            op: "matmul_tn",
            left: a.shape(),
            right: b.shape(),
        });
    }
    let r = b.cols;
    for p in 0..a.rows {
        let arow = &a.data[p * a.cols..(p + 1) * a.cols];
        let brow = &b.data[p * r..(p + 1) * r];
        for (i, &api) in arow.iter().enumerate() {
            let orow = &mut out.data[i * r..(i + 1) * r];
            for (o, &bpj) in orow.iter_mut().zip(brow) {
                *o += api * bpj;
            }
        }
    }
    Ok(())
}

pub fn elementwise(op: ElementOp, a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.shape() != b.shape() {
        return Err(Error::Shape {
            op: "elementwise",
            left: a.shape(),
            right: b.shape(),
        });
    }
    Ok(Matrix {
        rows: a.rows,
        cols: a.cols,
        data: a
            .data
            .iter()
            .zip(&b.data)
            .map(|(&x, &y)| op.apply(x, y))
            .collect(),
    })
}

impl Vector {
    pub fn zeros(len: usize) -> Self {
        Vector {
            data: vec![0.0; len],
        }
    }

    pub fn filled(len: usize, value: f64) -> Self {
        Vector {
            data: vec![value; len],
        }
    }

    pub fn from_vec(data: Vec<f64>) -> Result<Self> {
        ensure_finite(&data)?;
        Ok(Vector { data })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn map(&self, f: Activation) -> Vector {
        Vector {
            data: self.data.iter().map(|&v| f.apply(v)).collect(),
        }
    }

    pub fn elementwise(&self, op: ElementOp, other: &Vector) -> Result<Vector> {
        if self.len() != other.len() {
            return Err(Error::Shape {
                op: "elementwise",
                left: (self.len(), 1),
                right: (other.len(), 1),
            });
        }
        Ok(Vector {
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&x, &y)| op.apply(x, y))
                .collect(),
        })
    }

    /// `A · x` for `A: p×q`, `x` of length `q`.
    pub fn mul_matrix(a: &Matrix, x: &Vector) -> Result<Vector> {
        if a.cols != x.len() {
            return Err(Error::Shape {
                op: "matvec",
                left: a.shape(),
                right: (x.len(), 1),
            });
        }
        let data = (0..a.rows)
            .map(|i| {
                let mut acc = 0.0;
                for (w, v) in a.row(i).iter().zip(&x.data) {
                    acc += w * v;
                }
                acc
            })
            .collect();
        Ok(Vector { data })
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seeded ChaCha8 generator.
///
/// `fork` derives an independent child stream from this generator's *seed*,
/// not from its consumed state, so the order in which consumers draw never
/// perturbs one another. Substreams are addressed by tag paths, e.g.
/// `root.fork(DROPOUT).fork(epoch).fork(batch)`.
#[derive(Debug, Clone)]
pub struct Rng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn fork(&self, tag: u64) -> Rng {
        Rng::new(splitmix64(self.seed ^ splitmix64(tag.wrapping_add(0x5EED))))
    }

    /// One draw from `[0, 1)`.
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        self.inner.gen::<f64>()
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> Result<f64> {
        if !(lo < hi) {
            return Err(Error::Argument(format!(
                "uniform bounds need lo < hi, got [{lo}, {hi})"
            )));
        }
        Ok((lo + (hi - lo) * self.next_f64()).min(hi.next_down()))
    }

    pub fn uniform_matrix(&mut self, lo: f64, hi: f64, rows: usize, cols: usize) -> Result<Matrix> {
        if !(lo < hi) {
            return Err(Error::Argument(format!(
                "uniform bounds need lo < hi, got [{lo}, {hi})"
            )));
        }
        let data = (0..rows * cols)
            .map(|_| (lo + (hi - lo) * self.next_f64()).min(hi.next_down()))
            .collect();
        Ok(Matrix { rows, cols, data })
    }

    pub fn uniform_vector(&mut self, lo: f64, hi: f64, len: usize) -> Result<Vector> {
        let m = self.uniform_matrix(lo, hi, 1, len)?;
        Ok(Vector { data: m.data })
    }

    #[inline]
    pub fn below(&mut self, n: usize) -> usize {
        self.inner.gen_range(0..n)
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.inner.gen_range(0..=i);
            items.swap(i, j);
        }
    }
}
