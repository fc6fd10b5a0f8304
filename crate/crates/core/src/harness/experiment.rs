use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cells::{param_count, GateVariant};
use crate::checkpoint::save_model;
use crate::data::{
    load_tokens, standardize, to_pixel_sequence, to_row_sequence, Dataset, ImageSet, MNIST_CLASSES,
};
use crate::error::{Error, Result};
use crate::harness::model::{Model, ModelInput};
use crate::harness::train::{train_epoch, MetricsRecord, TrainState};
use crate::harness::{RunConfig, Task};
use crate::linalg::Rng;
use crate::optim::{EarlyStopper, ParamSet, StopDecision};

pub const METRICS_FILE: &str = "metrics.csv";
pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const SUMMARY_FILE: &str = "summary.toml";
pub const CONFIG_FILE: &str = "config.toml";
pub const METRICS_HEADER: &str = "epoch,train_loss,test_accuracy,lr,wall_time_s";

/// Train and test sets shaped for a task, plus what the model needs to
/// consume them.
#[derive(Debug, Clone)]
pub struct TaskData {
    pub train: Dataset,
    pub test: Dataset,
    pub input: ModelInput,
    pub classes: usize,
}

pub fn load_data(config: &RunConfig) -> Result<TaskData> {
    match config.task {
        Task::MnistPixel | Task::MnistRow => {
            let [train_images, train_labels, test_images, test_labels] = config.image_paths()?;
            let mut train = ImageSet::load(&train_images, &train_labels)?;
            let mut test = ImageSet::load(&test_images, &test_labels)?;
            if let Some(n) = config.train_limit {
                train = train.truncated(n);
            }
            if let Some(n) = config.test_limit {
                test = test.truncated(n);
            }
            if (train.height, train.width) != (test.height, test.width) {
                return Err(Error::Config(format!(
                    "train images are {}×{}, test images {}×{}",
                    train.height, train.width, test.height, test.width
                )));
            }
            let (train, test, _) = standardize(train, test, config.standardize)?;
            let shape = if config.task == Task::MnistPixel {
                to_pixel_sequence
            } else {
                to_row_sequence
            };
            let (train, test) = (shape(&train), shape(&test));
            let dim = train.dim;
            Ok(TaskData {
                train: Dataset::Dense(train),
                test: Dataset::Dense(test),
                input: ModelInput::Dense { dim },
                classes: MNIST_CLASSES,
            })
        }
        Task::Tokens => {
            let load = |p: &Path| -> Result<Dataset> {
                let set = load_tokens(p, config.vocab_size)?;
                Ok(Dataset::Tokens(
                    set.fixed_length(config.maxlen, config.truncation)?,
                ))
            };
            let [train, test] = config.token_paths()?;
            Ok(TaskData {
                train: load(&train)?,
                test: load(&test)?,
                input: ModelInput::Tokens {
                    vocab: config.vocab_size,
                    dim: config.embed_dim,
                },
                classes: 2,
            })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunStatus {
    Completed,
    EarlyStopped,
    Diverged,
}

impl fmt::Display for RunStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RunStatus::Completed => "completed",
            RunStatus::EarlyStopped => "early-stopped",
            RunStatus::Diverged => "diverged",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub variant: GateVariant,
    pub task: Task,
    pub eta0: f64,
    pub seed: u64,
    pub m: usize,
    pub n: usize,
    /// Scalars in the recurrent cell alone.
    pub param_count: usize,
    /// Scalars in the whole model, embedding and head included.
    pub total_params: usize,
    pub best_accuracy: f64,
    /// 0 when no epoch finished.
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub status: RunStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

impl RunSummary {
    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(SUMMARY_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}

pub fn metrics_row(r: &MetricsRecord) -> String {
    format!(
        "{},{},{},{},{}",
        r.epoch, r.train_loss, r.test_accuracy, r.lr, r.wall_time_s
    )
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Trains until the epoch budget is spent, patience runs out, or the loss
/// stops being finite. Writes `metrics.csv`, `checkpoint.bin` (best test
/// accuracy), `summary.toml` and the effective `config.toml` into `out`.
/// `on_epoch` sees every record as it is appended.
pub fn run_experiment(
    config: &RunConfig,
    out: &Path,
    on_epoch: &mut dyn FnMut(&MetricsRecord),
) -> Result<RunSummary> {
    config.validate()?;
    let data = load_data(config)?;
    run_with_data(config, &data, out, on_epoch)
}

pub fn run_with_data(
    config: &RunConfig,
    data: &TaskData,
    out: &Path,
    on_epoch: &mut dyn FnMut(&MetricsRecord),
) -> Result<RunSummary> {
    config.validate()?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    write_text(&out.join(CONFIG_FILE), &config.to_toml())?;

    let (mut model, _) = Model::new(
        config.variant,
        data.input,
        config.hidden,
        data.classes,
        config.forget_bias_init,
        &Rng::new(config.seed).fork(1),
    )?;
    let m = model.lstm.input_dim();
    let mut summary = RunSummary {
        variant: config.variant,
        task: config.task,
        eta0: config.eta0,
        seed: config.seed,
        m,
        n: config.hidden,
        param_count: param_count(config.variant, m, config.hidden)?,
        total_params: model.scalar_total(),
        best_accuracy: 0.0,
        best_epoch: 0,
        epochs_run: 0,
        status: RunStatus::Completed,
        message: None,
    };

    let metrics_path = out.join(METRICS_FILE);
    let file = File::create(&metrics_path).map_err(|e| Error::io(&metrics_path, e))?;
    let mut csv = BufWriter::new(file);
    let io = |e| Error::io(&metrics_path, e);
    writeln!(csv, "{METRICS_HEADER}").map_err(io)?;

    let mut state = TrainState::new(&model, config);
    let mut stopper: EarlyStopper<Model> = EarlyStopper::new(config.patience);
    for _ in 0..config.epochs {
        let record = match train_epoch(&mut model, &data.train, &data.test, config, &mut state) {
            Ok(r) => r,
            Err(e @ Error::Diverged { .. }) => {
                summary.status = RunStatus::Diverged;
                summary.message = Some(e.to_string());
                break;
            }
            Err(e) => return Err(e),
        };
        writeln!(csv, "{}", metrics_row(&record)).map_err(io)?;
        csv.flush().map_err(io)?;
        on_epoch(&record);
        summary.epochs_run = record.epoch;
        if stopper.update(record.epoch, record.test_accuracy, || model.clone())
            == StopDecision::Stop
        {
            if record.epoch < config.epochs {
                summary.status = RunStatus::EarlyStopped;
            }
            break;
        }
    }
    drop(csv);

    if stopper.best_epoch() > 0 {
        summary.best_accuracy = stopper.best_metric();
        summary.best_epoch = stopper.best_epoch();
    }
    if let Some(best) = stopper.into_best_checkpoint() {
        save_model(&out.join(CHECKPOINT_FILE), &best)?;
    }
    write_text(
        &out.join(SUMMARY_FILE),
        &toml::to_string(&summary).expect("summary serialises"),
    )?;
    Ok(summary)
}

/// A base configuration crossed with a grid of variants, coefficients and
/// seeds. Empty grid axes fall back to the base value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    #[serde(default)]
    pub base: RunConfig,
    #[serde(default)]
    pub grid: SweepGrid,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepGrid {
    pub variants: Vec<GateVariant>,
    pub eta0: Vec<f64>,
    pub seeds: Vec<u64>,
}

impl SweepSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        SweepSpec::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Variant-major expansion.
    pub fn configs(&self) -> Vec<RunConfig> {
        let variants = if self.grid.variants.is_empty() {
            vec![self.base.variant]
        } else {
            self.grid.variants.clone()
        };
        let etas: Vec<f64> = if self.grid.eta0.is_empty() {
            vec![self.base.eta0]
        } else {
            self.grid.eta0.clone()
        };
        let seeds: Vec<u64> = if self.grid.seeds.is_empty() {
            vec![self.base.seed]
        } else {
            self.grid.seeds.clone()
        };
        let mut out = Vec::new();
        for &variant in &variants {
            for &eta0 in &etas {
                for &seed in &seeds {
                    out.push(RunConfig {
                        variant,
                        eta0,
                        seed,
                        ..self.base.clone()
                    });
                }
            }
        }
        out
    }
}

pub fn run_dir_name(config: &RunConfig) -> String {
    format!(
        "{}_eta{:e}_seed{}",
        config.variant, config.eta0, config.seed
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub variant: GateVariant,
    pub eta0: f64,
    pub seed: u64,
    pub param_count: Option<usize>,
    pub best_accuracy: Option<f64>,
    pub best_epoch: usize,
    /// Run status, or `failed: <reason>` when the run could not proceed.
    pub status: String,
    pub dir: PathBuf,
}

/// Runs every configuration in its own directory under `root`. A run that
/// fails is recorded and the sweep moves on.
pub fn sweep(
    configs: &[RunConfig],
    root: &Path,
    on_epoch: &mut dyn FnMut(&RunConfig, &MetricsRecord),
) -> Vec<SweepRow> {
    let mut rows = Vec::with_capacity(configs.len());
    for config in configs {
        let dir = root.join(run_dir_name(config));
        let result = run_experiment(config, &dir, &mut |r| on_epoch(config, r));
        let pc = config
            .task_input_dim()
            .and_then(|m| param_count(config.variant, m, config.hidden).ok());
        rows.push(match result {
            Ok(s) => SweepRow {
                variant: s.variant,
                eta0: s.eta0,
                seed: s.seed,
                param_count: Some(s.param_count),
                best_accuracy: (s.best_epoch > 0).then_some(s.best_accuracy),
                best_epoch: s.best_epoch,
                status: s.status.to_string(),
                dir,
            },
            Err(e) => SweepRow {
                variant: config.variant,
                eta0: config.eta0,
                seed: config.seed,
                param_count: pc,
                best_accuracy: None,
                best_epoch: 0,
                status: format!("failed: {e}"),
                dir,
            },
        });
    }
    rows
}

pub fn format_sweep_table(rows: &[SweepRow]) -> String {
    let mut out = String::from("variant  eta0      seed  params   best_acc  best_epoch  status\n");
    for r in rows {
        let acc = r
            .best_accuracy
            .map_or("-".to_string(), |a| format!("{a:.4}"));
        let pc = r.param_count.map_or("-".to_string(), |p| p.to_string());
        out.push_str(&format!(
            "{:<8} {:<9e} {:<5} {:<8} {:<9} {:<11} {}\n",
            r.variant.name(),
            r.eta0,
            r.seed,
            pc,
            acc,
            r.best_epoch,
            r.status
        ));
    }
    out
}

impl RunConfig {
    /// Cell input width implied by the task, when it is known without
    /// reading data.
    pub fn task_input_dim(&self) -> Option<usize> {
        match self.task {
            Task::MnistPixel => Some(1),
            Task::MnistRow => Some(crate::data::MNIST_SIDE),
            Task::Tokens => Some(self.embed_dim),
        }
    }
}
