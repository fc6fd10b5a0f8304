use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::data::{BatchInputs, Dataset, SequenceBatch};
use crate::error::{Error, Result};
use crate::harness::model::{argmax, DropoutCtx, Model};
use crate::harness::RunConfig;
use crate::linalg::Rng;
use crate::optim::{clip_global_norm, rmsprop_step, LrSchedule, RmspropState};

/// One row of `metrics.csv`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub epoch: usize,
    /// Example-weighted mean cross-entropy over the epoch, in nats.
    pub train_loss: f64,
    pub test_accuracy: f64,
    pub lr: f64,
    pub wall_time_s: f64,
}

const STREAM_SHUFFLE: u64 = 2;
const STREAM_DROPOUT: u64 = 3;

/// Optimizer and schedule state carried across epochs.
#[derive(Debug, Clone)]
pub struct TrainState {
    pub rmsprop: RmspropState,
    /// Unset until the first epoch measures its starting loss.
    pub schedule: Option<LrSchedule>,
    /// Replaces the dynamic rate when set.
    pub lr_override: Option<f64>,
    pub epoch: usize,
    rng: Rng,
}

impl TrainState {
    pub fn new(model: &Model, config: &RunConfig) -> Self {
        TrainState {
            rmsprop: RmspropState::new(model, config.rmsprop()),
            schedule: None,
            lr_override: None,
            epoch: 0,
            rng: Rng::new(config.seed),
        }
    }
}

/// Sequence-length and input-width checks for a task batch.
fn check_batch(batch: &SequenceBatch, expect_t: usize, expect_m: Option<usize>) -> Result<()> {
    if batch.seq_len() != expect_t {
        return Err(Error::Contract(format!(
            "batch has {} timesteps, expected {expect_t}",
            batch.seq_len()
        )));
    }
    match &batch.inputs {
        BatchInputs::Dense(xs) => {
            if let Some(m) = expect_m {
                if let Some(x) = xs.iter().find(|x| x.cols() != m) {
                    return Err(Error::Contract(format!(
                        "batch step width {} differs from {m}",
                        x.cols()
                    )));
                }
            }
        }
        BatchInputs::Tokens(ids) => {
            if let Some(s) = ids.iter().find(|s| s.len() != expect_t) {
                return Err(Error::Contract(format!(
                    "token sequence of length {} in a batch of length {expect_t}",
                    s.len()
                )));
            }
        }
    }
    Ok(())
}

fn expected_width(model: &Model) -> Option<usize> {
    model.embedding.is_none().then(|| model.lstm.input_dim())
}

/// One shuffled pass over `train` with RMSprop at the epoch's fixed dynamic
/// rate, followed by evaluation on `test`.
pub fn train_epoch(
    model: &mut Model,
    train: &Dataset,
    test: &Dataset,
    config: &RunConfig,
    state: &mut TrainState,
) -> Result<MetricsRecord> {
    let started = Instant::now();
    if train.is_empty() {
        return Err(Error::Argument("empty training set".into()));
    }
    model.validate()?;
    let epoch = state.epoch + 1;
    let expect_t = train.seq_len();
    let expect_m = expected_width(model);

    if state.schedule.is_none() {
        let first: Vec<usize> = (0..config.batch_size.min(train.len())).collect();
        let loss = model.loss(&train.gather(&first))?;
        if !loss.is_finite() {
            return Err(Error::Diverged {
                epoch,
                batch: 0,
                lr: f64::NAN,
                loss,
            });
        }
        state.schedule = Some(LrSchedule::new(config.eta0, loss));
    }
    let schedule = state.schedule.expect("schedule initialised above");
    let lr = match state.lr_override {
        Some(lr) => lr,
        None => schedule.rate().map_err(|_| Error::Diverged {
            epoch,
            batch: 0,
            lr: f64::INFINITY,
            loss: schedule.current_loss,
        })?,
    };

    let dropout = config.dropout();
    let mut shuffle_rng = state.rng.fork(STREAM_SHUFFLE).fork(epoch as u64);
    let dropout_root = state.rng.fork(STREAM_DROPOUT).fork(epoch as u64);
    let mut total = 0.0;
    for (k, batch) in train
        .batches(config.batch_size, &mut shuffle_rng, true)
        .enumerate()
    {
        check_batch(&batch, expect_t, expect_m)?;
        let ctx = dropout.is_active().then(|| DropoutCtx {
            spec: dropout,
            rng: dropout_root.fork(k as u64),
        });
        let (loss, mut grads) = model.loss_and_grads(&batch, ctx.as_ref())?;
        if !loss.is_finite() {
            return Err(Error::Diverged {
                epoch,
                batch: k,
                lr,
                loss,
            });
        }
        if let Some(c) = config.clip_norm {
            clip_global_norm(&mut grads, c);
        }
        rmsprop_step(model, &grads, &mut state.rmsprop, lr)?;
        total += loss * batch.len() as f64;
    }
    let train_loss = total / train.len() as f64;
    if let Some(s) = state.schedule.as_mut() {
        s.observe(train_loss);
    }
    state.epoch = epoch;

    let test_accuracy = evaluate(model, test, config.batch_size)?;
    let wall_time_s = if config.record_wall_time {
        started.elapsed().as_secs_f64()
    } else {
        0.0
    };
    Ok(MetricsRecord {
        epoch,
        train_loss,
        test_accuracy,
        lr,
        wall_time_s,
    })
}

/// Fraction of examples whose argmax logit equals the label. Inference mode,
/// fixed order, so repeated calls agree exactly.
pub fn evaluate(model: &Model, data: &Dataset, batch_size: usize) -> Result<f64> {
    if data.is_empty() {
        return Ok(0.0);
    }
    let mut correct = 0usize;
    let mut unused = Rng::new(0);
    for batch in data.batches(batch_size.max(1), &mut unused, false) {
        let logits = model.logits(&batch)?;
        correct += (0..logits.rows())
            .filter(|&r| argmax(logits.row(r)) == batch.labels[r])
            .count();
    }
    Ok(correct as f64 / data.len() as f64)
}
