//! Central-difference verification of the analytic gradients of the full
//! model (embedding, cell and head), with dropout off.

use crate::cells::GateVariant;
use crate::data::SequenceBatch;
use crate::error::Result;
use crate::harness::{Model, ModelInput};
use crate::linalg::Rng;
use crate::optim::ParamSet;

pub const DEFAULT_EPS: f64 = 1e-5;
pub const PASS_THRESHOLD: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct Coordinate {
    pub tensor: &'static str,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub checked: usize,
    pub worst: Option<Coordinate>,
}

impl GradCheckReport {
    pub fn passed(&self, threshold: f64) -> bool {
        self.max_rel_error <= threshold
    }
}

/// `|a − n| / max(|a|, |n|, 1e-12)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-12)
}

/// Compares `analytic` (gradient-shaped like `model`) against
/// `(L(θ+ε) − L(θ−ε)) / 2ε` for every scalar of `model`.
pub fn compare_gradients(
    model: &Model,
    batch: &SequenceBatch,
    analytic: &Model,
    eps: f64,
) -> Result<GradCheckReport> {
    let mut probe = model.clone();
    let shapes: Vec<(&'static str, usize)> =
        model.tensors().iter().map(|(n, t)| (*n, t.len())).collect();
    let grads = analytic.tensors();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        checked: 0,
        worst: None,
    };
    for (k, &(name, len)) in shapes.iter().enumerate() {
        for i in 0..len {
            let original = probe.tensors()[k].1[i];
            probe.tensors_mut()[k].1[i] = original + eps;
            let plus = probe.loss(batch)?;
            probe.tensors_mut()[k].1[i] = original - eps;
            let minus = probe.loss(batch)?;
            probe.tensors_mut()[k].1[i] = original;

            let numeric = (plus - minus) / (2.0 * eps);
            let a = grads[k].1[i];
            let rel = relative_error(a, numeric);
            report.checked += 1;
            if report.worst.is_none() || rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.worst = Some(Coordinate {
                    tensor: name,
                    index: i,
                    analytic: a,
                    numeric,
                    rel_error: rel,
                });
            }
        }
    }
    Ok(report)
}

/// A model whose every parameter is drawn uniformly from `[-scale, scale]`.
/// Production initialisation keeps embeddings near zero, which leaves many
/// gradients close to the finite-difference noise floor; a wider draw gives
/// the check a point where relative errors are meaningful.
pub fn probe_model(
    variant: GateVariant,
    input: ModelInput,
    hidden: usize,
    classes: usize,
    scale: f64,
    rng: &Rng,
) -> Result<Model> {
    let (mut model, _) = Model::new(variant, input, hidden, classes, 0.0, rng)?;
    let mut draw = rng.fork(4);
    for (_, t) in model.tensors_mut() {
        for v in t.iter_mut() {
            *v = draw.uniform(-scale, scale)?;
        }
    }
    Ok(model)
}

pub fn gradient_check_model(
    model: &Model,
    batch: &SequenceBatch,
    eps: f64,
) -> Result<GradCheckReport> {
    let (_, grads) = model.loss_and_grads(batch, None)?;
    compare_gradients(model, batch, &grads, eps)
}
