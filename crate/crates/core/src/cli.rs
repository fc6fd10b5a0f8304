//! `gatecell` command line. Exit codes: 0 success, 1 usage or I/O error,
//! 2 training diverged.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::de::{DeserializeOwned, IntoDeserializer};

use crate::cells::{param_count, GateVariant};
use crate::data::fixtures::{write_fixtures, FixtureSpec};
use crate::data::{BatchInputs, SequenceBatch, StandardizeScope, Truncation};
use crate::error::{Error, Result};
use crate::harness::gradcheck::{gradient_check_model, probe_model, DEFAULT_EPS, PASS_THRESHOLD};
use crate::harness::{
    format_sweep_table, metrics_row, run_dir_name, run_experiment, sweep, ModelInput, RunConfig,
    RunStatus, SweepSpec, Task, METRICS_HEADER,
};
use crate::linalg::Rng;
use crate::report::write_report;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DIVERGED: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "gatecell",
    version,
    about = "Vanilla and gate-simplified LSTM training harness"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
#[allow(clippy::large_enum_variant)]
enum Command {
    /// Train one model and write metrics, best checkpoint and summary.
    Train(TrainArgs),
    /// Run a grid of configurations from a sweep file.
    Sweep(SweepArgs),
    /// Compare analytic gradients with central finite differences.
    Gradcheck(GradcheckArgs),
    /// Print the cell parameter count and its difference from the vanilla cell.
    Params(ParamsArgs),
    /// Write miniature synthetic image and token datasets.
    Fixtures(FixturesArgs),
    /// Build a comparison table and accuracy curves from run directories.
    Report(ReportArgs),
}

fn parse_variant(s: &str) -> std::result::Result<GateVariant, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_task(s: &str) -> std::result::Result<Task, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_serde<T: DeserializeOwned>(s: &str) -> std::result::Result<T, String> {
    T::deserialize(IntoDeserializer::<serde::de::value::Error>::into_deserializer(s))
        .map_err(|e| e.to_string())
}

/// Every flag mirrors the config key of the same name (dashes for
/// underscores) and wins over the file.
#[derive(Debug, Args)]
struct TrainArgs {
    /// TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Run directory [default: runs/<variant>_eta<eta0>_seed<seed>].
    #[arg(long)]
    out: Option<PathBuf>,
    /// mnist-pixel | mnist-row | tokens
    #[arg(long, value_parser = parse_task)]
    task: Option<Task>,
    /// vanilla | lstm1 | lstm2 | lstm3
    #[arg(long, value_parser = parse_variant)]
    variant: Option<GateVariant>,
    /// Hidden units n.
    #[arg(long)]
    hidden: Option<usize>,
    /// Learning-rate coefficient; the rate is eta0·exp(previous epoch loss).
    #[arg(long, allow_hyphen_values = true)]
    eta0: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Epochs without a strict test-accuracy improvement before stopping.
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, allow_hyphen_values = true)]
    forget_bias_init: Option<f64>,
    /// RMSprop decay.
    #[arg(long)]
    rho: Option<f64>,
    /// RMSprop denominator offset.
    #[arg(long)]
    epsilon: Option<f64>,
    /// Global-norm gradient clipping threshold.
    #[arg(long)]
    clip_norm: Option<f64>,
    /// Element dropout rate on embedded inputs.
    #[arg(long)]
    embed_dropout: Option<f64>,
    /// Row dropout rate on the cell's W and U matrices.
    #[arg(long)]
    row_dropout: Option<f64>,
    /// global | per-pixel
    #[arg(long, value_parser = parse_serde::<StandardizeScope>)]
    standardize: Option<StandardizeScope>,
    /// Directory holding MNIST files, fixture files or token files.
    #[arg(long)]
    data_dir: Option<PathBuf>,
    #[arg(long)]
    train_images: Option<PathBuf>,
    #[arg(long)]
    train_labels: Option<PathBuf>,
    #[arg(long)]
    test_images: Option<PathBuf>,
    #[arg(long)]
    test_labels: Option<PathBuf>,
    /// Use only the first N training images.
    #[arg(long)]
    train_limit: Option<usize>,
    /// Use only the first N test images.
    #[arg(long)]
    test_limit: Option<usize>,
    #[arg(long)]
    train_tokens: Option<PathBuf>,
    #[arg(long)]
    test_tokens: Option<PathBuf>,
    #[arg(long)]
    vocab_size: Option<usize>,
    /// Token sequence length after padding or truncation.
    #[arg(long)]
    maxlen: Option<usize>,
    #[arg(long)]
    embed_dim: Option<usize>,
    /// keep-last | keep-first
    #[arg(long, value_parser = parse_serde::<Truncation>)]
    truncation: Option<Truncation>,
    /// Record measured seconds per epoch (false writes 0 for reproducible files).
    #[arg(long)]
    record_wall_time: Option<bool>,
}

macro_rules! override_fields {
    ($args:expr, $cfg:expr; $($f:ident),*) => {
        $( if let Some(v) = $args.$f.clone() { $cfg.$f = v; } )*
    };
}

impl TrainArgs {
    fn config(&self) -> Result<RunConfig> {
        let mut c = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        override_fields!(self, c; task, variant, hidden, eta0, epochs, batch_size, patience, seed,
            forget_bias_init, rho, epsilon, embed_dropout, row_dropout, standardize, vocab_size,
            maxlen, embed_dim, truncation, record_wall_time);
        if self.clip_norm.is_some() {
            c.clip_norm = self.clip_norm;
        }
        for (dst, src) in [
            (&mut c.data_dir, &self.data_dir),
            (&mut c.train_images, &self.train_images),
            (&mut c.train_labels, &self.train_labels),
            (&mut c.test_images, &self.test_images),
            (&mut c.test_labels, &self.test_labels),
            (&mut c.train_tokens, &self.train_tokens),
            (&mut c.test_tokens, &self.test_tokens),
        ] {
            if src.is_some() {
                dst.clone_from(src);
            }
        }
        if self.train_limit.is_some() {
            c.train_limit = self.train_limit;
        }
        if self.test_limit.is_some() {
            c.test_limit = self.test_limit;
        }
        Ok(c)
    }
}

#[derive(Debug, Args)]
struct SweepArgs {
    /// TOML file with a `[base]` run config and a `[grid]` of variants, eta0, seeds.
    #[arg(long)]
    spec: PathBuf,
    /// Parent directory for the per-run directories.
    #[arg(long, default_value = "runs")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct GradcheckArgs {
    /// Check one variant (default: all four).
    #[arg(long, value_parser = parse_variant)]
    variant: Option<GateVariant>,
    /// Input width (embedding dim when --vocab is given).
    #[arg(long, default_value_t = 3)]
    m: usize,
    #[arg(long, default_value_t = 5)]
    n: usize,
    /// Sequence length T.
    #[arg(long, default_value_t = 4)]
    steps: usize,
    /// Batch size B.
    #[arg(long, default_value_t = 2)]
    batch: usize,
    /// Classes K.
    #[arg(long, default_value_t = 3)]
    classes: usize,
    /// Put an embedding of this vocabulary size in front of the cell.
    #[arg(long)]
    vocab: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Finite-difference step.
    #[arg(long, default_value_t = DEFAULT_EPS)]
    eps: f64,
    /// Parameters are drawn uniformly from [-scale, scale].
    #[arg(long, default_value_t = 1.0)]
    scale: f64,
}

#[derive(Debug, Args)]
struct ParamsArgs {
    #[arg(long, value_parser = parse_variant)]
    variant: GateVariant,
    /// Input dimension.
    #[arg(long)]
    m: usize,
    /// Hidden units.
    #[arg(long)]
    n: usize,
}

#[derive(Debug, Args)]
struct FixturesArgs {
    #[arg(long, default_value = "fixtures")]
    out: PathBuf,
    /// Number of synthetic 28×28 images.
    #[arg(long, default_value_t = FixtureSpec::default().images)]
    images: usize,
    /// Training token sequences.
    #[arg(long, default_value_t = FixtureSpec::default().train_tokens)]
    train_tokens: usize,
    /// Test token sequences.
    #[arg(long, default_value_t = FixtureSpec::default().test_tokens)]
    test_tokens: usize,
    #[arg(long, default_value_t = FixtureSpec::default().seed)]
    seed: u64,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// Run directories, each holding metrics.csv and summary.toml.
    #[arg(required = true)]
    runs: Vec<PathBuf>,
    #[arg(long, default_value = "report")]
    out: PathBuf,
}

/// Parses `args` (program name first) and runs the command. Returns the
/// process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            if e.use_stderr() {
                let _ = write!(err, "{text}");
            } else {
                let _ = write!(out, "{text}");
            }
            return code;
        }
    };
    let result = match cli.command {
        Command::Train(a) => cmd_train(&a, out, err),
        Command::Sweep(a) => cmd_sweep(&a, out, err),
        Command::Gradcheck(a) => cmd_gradcheck(&a, out),
        Command::Params(a) => cmd_params(&a, out),
        Command::Fixtures(a) => cmd_fixtures(&a, out),
        Command::Report(a) => cmd_report(&a, out, err),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_USAGE
        }
    }
}

fn cmd_train(a: &TrainArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    let config = a.config()?;
    config.validate()?;
    let dir = a
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from("runs").join(run_dir_name(&config)));
    let _ = writeln!(out, "{METRICS_HEADER}");
    let summary = run_experiment(&config, &dir, &mut |r| {
        let _ = writeln!(out, "{}", metrics_row(r));
        let _ = out.flush();
    })?;
    let _ = writeln!(
        err,
        "{}: best accuracy {} at epoch {} ({} cell parameters), run dir {}",
        summary.status,
        summary.best_accuracy,
        summary.best_epoch,
        summary.param_count,
        dir.display()
    );
    if let Some(m) = &summary.message {
        let _ = writeln!(err, "{m}");
    }
    Ok(if summary.status == RunStatus::Diverged {
        EXIT_DIVERGED
    } else {
        EXIT_OK
    })
}

fn cmd_sweep(a: &SweepArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    let spec = SweepSpec::load(&a.spec)?;
    let configs = spec.configs();
    for c in &configs {
        c.validate()?;
    }
    let rows = sweep(&configs, &a.out, &mut |c, r| {
        let _ = writeln!(err, "{} {}", run_dir_name(c), metrics_row(r));
    });
    let _ = write!(out, "{}", format_sweep_table(&rows));
    Ok(EXIT_OK)
}

fn gradcheck_batch(a: &GradcheckArgs, rng: &mut Rng) -> Result<SequenceBatch> {
    let inputs = match a.vocab {
        Some(v) => BatchInputs::Tokens(
            (0..a.batch)
                .map(|_| (0..a.steps).map(|_| rng.below(v)).collect())
                .collect(),
        ),
        None => BatchInputs::Dense(
            (0..a.steps)
                .map(|_| rng.uniform_matrix(-1.0, 1.0, a.batch, a.m))
                .collect::<Result<_>>()?,
        ),
    };
    Ok(SequenceBatch {
        inputs,
        labels: (0..a.batch).map(|_| rng.below(a.classes)).collect(),
        indices: (0..a.batch).collect(),
    })
}

fn cmd_gradcheck(a: &GradcheckArgs, out: &mut dyn Write) -> Result<i32> {
    if a.m == 0 || a.n == 0 || a.steps == 0 || a.batch == 0 || a.classes == 0 || a.vocab == Some(0)
    {
        return Err(Error::Argument("all dimensions must be positive".into()));
    }
    if !(a.eps > 0.0) || !(a.scale > 0.0) {
        return Err(Error::Argument(format!(
            "eps and scale must be > 0, got {} and {}",
            a.eps, a.scale
        )));
    }
    let variants = a.variant.map_or(GateVariant::ALL.to_vec(), |v| vec![v]);
    let input = match a.vocab {
        Some(vocab) => ModelInput::Tokens { vocab, dim: a.m },
        None => ModelInput::Dense { dim: a.m },
    };
    let mut all_ok = true;
    for v in variants {
        let root = Rng::new(a.seed);
        let model = probe_model(v, input, a.n, a.classes, a.scale, &root.fork(1))?;
        let batch = gradcheck_batch(a, &mut root.fork(2))?;
        let report = gradient_check_model(&model, &batch, a.eps)?;
        let ok = report.passed(PASS_THRESHOLD);
        all_ok &= ok;
        let worst = report.worst.as_ref().map_or("-".to_string(), |w| {
            format!(
                "{}[{}] analytic {:e} numeric {:e}",
                w.tensor, w.index, w.analytic, w.numeric
            )
        });
        let _ = writeln!(
            out,
            "{:<8} {} max_rel_error {:e} over {} params; worst {}",
            v.name(),
            if ok { "ok  " } else { "FAIL" },
            report.max_rel_error,
            report.checked,
            worst
        );
    }
    Ok(if all_ok { EXIT_OK } else { EXIT_USAGE })
}

fn cmd_params(a: &ParamsArgs, out: &mut dyn Write) -> Result<i32> {
    let count = param_count(a.variant, a.m, a.n)?;
    let vanilla = param_count(GateVariant::Vanilla, a.m, a.n)?;
    let delta = count as i64 - vanilla as i64;
    let _ = writeln!(
        out,
        "{} m={} n={}: {} parameters, delta vs vanilla {}",
        a.variant, a.m, a.n, count, delta
    );
    Ok(EXIT_OK)
}

fn cmd_fixtures(a: &FixturesArgs, out: &mut dyn Write) -> Result<i32> {
    let spec = FixtureSpec {
        images: a.images,
        train_tokens: a.train_tokens,
        test_tokens: a.test_tokens,
        seed: a.seed,
    };
    for p in write_fixtures(&a.out, &spec)? {
        let _ = writeln!(out, "{}", p.display());
    }
    Ok(EXIT_OK)
}

fn cmd_report(a: &ReportArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    let report = write_report(&a.runs, &a.out)?;
    for w in &report.warnings {
        let _ = writeln!(err, "warning: {w}");
    }
    let _ = write!(out, "{}", report.table);
    for f in &report.files {
        let _ = writeln!(out, "wrote {}", f.display());
    }
    Ok(EXIT_OK)
}
