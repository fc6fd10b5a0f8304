//! RMSprop, the loss-coupled learning-rate schedule `η = η₀·exp(C)`, and
//! patience-based early stopping.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Anything made of named flat parameter tensors. Gradients use the same
/// type as the parameters they belong to, so two values of one type with the
/// same layout list their tensors in the same order.
pub trait ParamSet {
    fn tensors(&self) -> Vec<(&'static str, &[f64])>;
    fn tensors_mut(&mut self) -> Vec<(&'static str, &mut [f64])>;

    fn scalar_total(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }
}

fn check_mirror(
    params: &[(&'static str, &mut [f64])],
    grads: &[(&'static str, &[f64])],
) -> Result<()> {
    if params.len() != grads.len() {
        return Err(Error::Contract(format!(
            "gradients have {} tensors, parameters have {}",
            grads.len(),
            params.len()
        )));
    }
    for ((pn, p), (gn, g)) in params.iter().zip(grads) {
        if pn != gn || p.len() != g.len() {
            return Err(Error::Contract(format!(
                "gradient tensor {gn} ({}) does not mirror parameter {pn} ({})",
                g.len(),
                p.len()
            )));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RmspropConfig {
    pub rho: f64,
    pub epsilon: f64,
}

impl Default for RmspropConfig {
    fn default() -> Self {
        RmspropConfig {
            rho: 0.9,
            epsilon: 1e-8,
        }
    }
}

/// Running mean of squared gradients, one accumulator per present scalar.
#[derive(Debug, Clone, PartialEq)]
pub struct RmspropState {
    pub config: RmspropConfig,
    accum: Vec<Vec<f64>>,
}

impl RmspropState {
    pub fn new<P: ParamSet + ?Sized>(params: &P, config: RmspropConfig) -> Self {
        RmspropState {
            config,
            accum: params
                .tensors()
                .iter()
                .map(|(_, t)| vec![0.0; t.len()])
                .collect(),
        }
    }

    pub fn accumulators(&self) -> &[Vec<f64>] {
        &self.accum
    }
}

/// `s ← ρs + (1−ρ)g²; θ ← θ − lr·g/(√s + ε)`, in place.
pub fn rmsprop_step<P: ParamSet + ?Sized>(
    params: &mut P,
    grads: &P,
    state: &mut RmspropState,
    lr: f64,
) -> Result<()> {
    let mut ps = params.tensors_mut();
    let gs = grads.tensors();
    check_mirror(&ps, &gs)?;
    if state.accum.len() != ps.len()
        || state
            .accum
            .iter()
            .zip(&ps)
            .any(|(s, (_, p))| s.len() != p.len())
    {
        return Err(Error::Contract(
            "optimizer state does not mirror parameters".into(),
        ));
    }
    let RmspropConfig { rho, epsilon } = state.config;
    for (((_, p), (_, g)), s) in ps.iter_mut().zip(&gs).zip(state.accum.iter_mut()) {
        for ((theta, &grad), acc) in p.iter_mut().zip(g.iter()).zip(s.iter_mut()) {
            *acc = rho * *acc + (1.0 - rho) * grad * grad;
            *theta -= lr * grad / (acc.sqrt() + epsilon);
        }
    }
    Ok(())
}

/// Rescales `grads` so their global L2 norm is at most `max_norm`. Returns
/// the norm before clipping.
pub fn clip_global_norm<P: ParamSet + ?Sized>(grads: &mut P, max_norm: f64) -> f64 {
    let norm = grads
        .tensors()
        .iter()
        .flat_map(|(_, t)| t.iter())
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt();
    if norm > max_norm && norm > 0.0 {
        let k = max_norm / norm;
        for (_, t) in grads.tensors_mut() {
            t.iter_mut().for_each(|v| *v *= k);
        }
    }
    norm
}

/// `η₀ · exp(loss)`, with the loss in nats.
pub fn dynamic_lr(eta0: f64, loss: f64) -> Result<f64> {
    if !(eta0 > 0.0) || !eta0.is_finite() {
        return Err(Error::Schedule(format!("eta0 must be > 0, got {eta0}")));
    }
    if !loss.is_finite() {
        return Err(Error::Schedule(format!(
            "training loss is not finite ({loss})"
        )));
    }
    let lr = eta0 * loss.exp();
    if !lr.is_finite() {
        return Err(Error::Schedule(format!(
            "learning rate overflowed: eta0 {eta0} · exp({loss})"
        )));
    }
    Ok(lr)
}

/// Holds the coefficient and the loss that drives the next rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LrSchedule {
    pub eta0: f64,
    pub current_loss: f64,
}

impl LrSchedule {
    pub fn new(eta0: f64, initial_loss: f64) -> Self {
        LrSchedule {
            eta0,
            current_loss: initial_loss,
        }
    }

    pub fn rate(&self) -> Result<f64> {
        dynamic_lr(self.eta0, self.current_loss)
    }

    pub fn observe(&mut self, epoch_loss: f64) {
        self.current_loss = epoch_loss;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopDecision {
    Continue,
    Stop,
}

/// Tracks the best metric seen so far. Only strict improvements count.
#[derive(Debug, Clone)]
pub struct EarlyStopper<C> {
    pub patience: usize,
    best_metric: f64,
    best_epoch: usize,
    best_checkpoint: Option<C>,
}

impl<C> EarlyStopper<C> {
    pub fn new(patience: usize) -> Self {
        EarlyStopper {
            patience,
            best_metric: f64::NEG_INFINITY,
            best_epoch: 0,
            best_checkpoint: None,
        }
    }

    /// Records `metric` for `epoch` (1-based). `snapshot` is only called on a
    /// strict improvement.
    pub fn update(
        &mut self,
        epoch: usize,
        metric: f64,
        snapshot: impl FnOnce() -> C,
    ) -> StopDecision {
        if metric > self.best_metric {
            self.best_metric = metric;
            self.best_epoch = epoch;
            self.best_checkpoint = Some(snapshot());
        }
        if epoch.saturating_sub(self.best_epoch) >= self.patience {
            StopDecision::Stop
        } else {
            StopDecision::Continue
        }
    }

    pub fn best_metric(&self) -> f64 {
        self.best_metric
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }

    pub fn best_checkpoint(&self) -> Option<&C> {
        self.best_checkpoint.as_ref()
    }

    pub fn into_best_checkpoint(self) -> Option<C> {
        self.best_checkpoint
    }
}
