//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.
//!
//! The row-wise MNIST criterion reads the four standard IDX files from
//! `$GATECELL_MNIST_DIR`, falling back to `<workspace>/data/mnist`.

mod common;

use std::path::{Path, PathBuf};
use std::time::Instant;

use common::scalar_sequence;
use gatecell::cells::{forward_sequence, gate_forward, init_params, param_count, GateVariant};
use gatecell::data::fixtures::{write_fixtures, FixtureSpec, TOKENS_TRAIN_FILE};
use gatecell::data::load_tokens;
use gatecell::harness::gradcheck::{
    gradient_check_model, probe_model, DEFAULT_EPS, PASS_THRESHOLD,
};
use gatecell::harness::{
    load_data, run_experiment, train_epoch, Model, ModelInput, RunConfig, RunStatus, Task,
    TaskData, TrainState, METRICS_FILE,
};
use gatecell::linalg::{Matrix, Rng};
use gatecell::optim::{dynamic_lr, EarlyStopper, ParamSet, StopDecision};

type Outcome = Result<String, String>;
type Criterion<'a> = (&'static str, Box<dyn Fn() -> Outcome + 'a>);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn mnist_dir() -> Option<PathBuf> {
    let dir = std::env::var_os("GATECELL_MNIST_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist"));
    dir.join("train-images-idx3-ubyte").exists().then_some(dir)
}

fn published_counts() -> Outcome {
    let table: [(usize, usize, [usize; 4]); 3] = [
        (1, 100, [40_800, 40_500, 40_200, 10_500]),
        (28, 50, [15_800, 11_600, 11_450, 4_100]),
        (128, 128, [131_584, 82_432, 82_048, 33_280]),
    ];
    let mut wrong = Vec::new();
    for (m, n, want) in table {
        for (v, w) in GateVariant::ALL.into_iter().zip(want) {
            let got = param_count(v, m, n).map_err(|e| e.to_string())?;
            if got != w {
                wrong.push(format!("{v} m={m} n={n}: {got} != {w}"));
            }
        }
    }
    check(
        wrong.is_empty(),
        format!("12 published counts, mismatches: {wrong:?}"),
    )
}

fn reduction_identities() -> Outcome {
    let mut bad = 0;
    for m in 1..=12 {
        for n in 1..=12 {
            let count = |v| param_count(v, m, n).unwrap();
            let vanilla = count(GateVariant::Vanilla);
            bad += usize::from(vanilla - count(GateVariant::NoInput) != 3 * m * n);
            bad += usize::from(vanilla - count(GateVariant::NoInputNoBias) != 3 * (m * n + n));
            bad += usize::from(vanilla - count(GateVariant::BiasOnly) != 3 * (m * n + n * n));
        }
    }
    check(bad == 0, format!("144 (m, n) pairs, {bad} violations"))
}

fn full_model_gradients() -> Outcome {
    let mut worst = 0.0f64;
    for v in GateVariant::ALL {
        for seed in 0..3 {
            let root = Rng::new(seed);
            let model = probe_model(
                v,
                ModelInput::Tokens { vocab: 7, dim: 3 },
                5,
                3,
                1.0,
                &root.fork(1),
            )
            .map_err(|e| e.to_string())?;
            let batch = common::token_batch(&mut root.fork(2), 4, 2, 7, 3);
            let r = gradient_check_model(&model, &batch, DEFAULT_EPS).map_err(|e| e.to_string())?;
            if r.checked != model.scalar_total() {
                return Err(format!(
                    "{v} seed {seed}: checked {} of {}",
                    r.checked,
                    model.scalar_total()
                ));
            }
            worst = worst.max(r.max_rel_error);
        }
    }
    check(
        worst <= PASS_THRESHOLD,
        format!("m=3 n=5 T=4 B=2 K=3, 4 variants x 3 seeds, max rel error {worst:.3e}"),
    )
}

fn forward_oracle() -> Outcome {
    let mut worst = 0.0f64;
    for v in GateVariant::ALL {
        for seed in 0..5u64 {
            let mut rng = Rng::new(500 + seed);
            let (m, n, t, b) = (
                1 + rng.below(6),
                1 + rng.below(7),
                1 + rng.below(9),
                1 + rng.below(4),
            );
            let (p, _) = init_params(v, m, n, &mut rng, 1.0).unwrap();
            let xs = common::random_seq(&mut rng, t, b, m);
            let h0 = rng.uniform_matrix(-0.5, 0.5, b, n).unwrap();
            let c0 = rng.uniform_matrix(-0.5, 0.5, b, n).unwrap();
            let (h, _) = forward_sequence(&p, &xs, &h0, &c0).map_err(|e| e.to_string())?;
            let want = scalar_sequence(&p, &xs, &h0, &c0);
            for (a, b) in h.as_slice().iter().zip(want.as_slice()) {
                worst = worst.max((a - b).abs());
            }
        }
    }
    check(
        worst <= 1e-12,
        format!("20 random instances, max abs diff {worst:.3e}"),
    )
}

/// Trains one variant until it reaches `threshold` or runs out of epochs.
fn train_to_threshold(
    config: &RunConfig,
    data: &TaskData,
    threshold: f64,
) -> Result<(f64, usize, f64), String> {
    let (mut model, _) = Model::new(
        config.variant,
        data.input,
        config.hidden,
        data.classes,
        config.forget_bias_init,
        &Rng::new(config.seed).fork(1),
    )
    .map_err(|e| e.to_string())?;
    let mut state = TrainState::new(&model, config);
    let start = Instant::now();
    let mut best = (0.0, 0);
    for epoch in 1..=config.epochs {
        let rec = train_epoch(&mut model, &data.train, &data.test, config, &mut state)
            .map_err(|e| e.to_string())?;
        if rec.test_accuracy > best.0 {
            best = (rec.test_accuracy, epoch);
        }
        if rec.test_accuracy >= threshold {
            break;
        }
    }
    Ok((best.0, best.1, start.elapsed().as_secs_f64()))
}

fn mnist_config(dir: &Path) -> RunConfig {
    RunConfig {
        task: Task::MnistRow,
        data_dir: Some(dir.to_path_buf()),
        hidden: 50,
        eta0: 1e-3,
        batch_size: 32,
        epochs: 30,
        seed: 0,
        train_limit: Some(10_000),
        test_limit: Some(2_000),
        record_wall_time: false,
        ..RunConfig::default()
    }
}

fn mnist_row_wise() -> Outcome {
    let Some(dir) = mnist_dir() else {
        return Err(
            "MNIST IDX files not found; set GATECELL_MNIST_DIR or place them in data/mnist".into(),
        );
    };
    let base = mnist_config(&dir);
    let data = load_data(&base).map_err(|e| e.to_string())?;
    let mut parts = Vec::new();
    let mut ok = true;
    for v in GateVariant::ALL {
        let threshold = if v == GateVariant::BiasOnly {
            0.85
        } else {
            0.90
        };
        let config = RunConfig {
            variant: v,
            ..base.clone()
        };
        match train_to_threshold(&config, &data, threshold) {
            Ok((acc, epoch, secs)) => {
                ok &= acc >= threshold;
                parts.push(format!(
                    "{v} {acc:.4}@{epoch} ({secs:.0}s, need {threshold})"
                ));
            }
            Err(e) => {
                ok = false;
                parts.push(format!("{v} error: {e}"));
            }
        }
    }
    check(ok, format!("10k/2k, n=50, eta0=1e-3: {}", parts.join(", ")))
}

fn schedule_and_stopping() -> Outcome {
    let eta0 = 1e-3;
    let lr = dynamic_lr(eta0, std::f64::consts::LN_2).map_err(|e| e.to_string())?;
    if lr != 2.0 * eta0 {
        return Err(format!("dynamic_lr(1e-3, ln 2) = {lr:e}"));
    }
    let k = 10;
    let plateau = 0.75;
    let mut stopper = EarlyStopper::<()>::new(25);
    let mut stopped = None;
    for epoch in 1..=200 {
        let metric = if epoch < k {
            plateau * epoch as f64 / k as f64
        } else {
            plateau
        };
        if stopper.update(epoch, metric, || ()) == StopDecision::Stop {
            stopped = Some(epoch);
            break;
        }
    }
    check(
        stopped == Some(k + 25) && stopper.best_metric() == plateau && stopper.best_epoch() == k,
        format!(
            "lr exact; plateau at epoch {k} stopped at {stopped:?}, best {} at epoch {}",
            stopper.best_metric(),
            stopper.best_epoch()
        ),
    )
}

fn determinism(fixture_dir: &Path) -> Outcome {
    let config = match mnist_dir() {
        Some(dir) => RunConfig {
            epochs: 2,
            ..mnist_config(&dir)
        },
        None => RunConfig {
            task: Task::MnistRow,
            data_dir: Some(fixture_dir.to_path_buf()),
            epochs: 3,
            record_wall_time: false,
            ..RunConfig::default()
        },
    };
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut csvs = Vec::new();
    for name in ["a", "b"] {
        let out = tmp.path().join(name);
        run_experiment(&config, &out, &mut |_| {}).map_err(|e| e.to_string())?;
        csvs.push(std::fs::read(out.join(METRICS_FILE)).map_err(|e| e.to_string())?);
    }
    check(
        csvs[0] == csvs[1],
        format!(
            "{} epochs of {}, {} bytes each",
            config.epochs,
            config.task,
            csvs[0].len()
        ),
    )
}

fn bias_only_constancy() -> Outcome {
    let mut rng = Rng::new(77);
    let (p, _) = init_params(GateVariant::BiasOnly, 5, 7, &mut rng, 1.0).unwrap();
    let first = gate_forward(&p, &Matrix::zeros(1, 5), &Matrix::zeros(1, 7)).unwrap();
    let mut differing = 0;
    for _ in 0..100 {
        let x = rng.uniform_matrix(-10.0, 10.0, 1, 5).unwrap();
        let h = rng.uniform_matrix(-1.0, 1.0, 1, 7).unwrap();
        differing += usize::from(gate_forward(&p, &x, &h).unwrap() != first);
    }
    check(
        differing == 0,
        format!("100 random (x, h) pairs, {differing} differ"),
    )
}

fn desk_scale_substitutes(fixture_dir: &Path) -> Outcome {
    let (pixel_dir, source) = match mnist_dir() {
        Some(dir) => (dir, "MNIST"),
        None => {
            let dir = fixture_dir.join("pixel");
            let spec = FixtureSpec {
                images: 500,
                ..FixtureSpec::default()
            };
            write_fixtures(&dir, &spec).map_err(|e| e.to_string())?;
            (dir, "synthetic")
        }
    };
    let pixel = RunConfig {
        task: Task::MnistPixel,
        data_dir: Some(pixel_dir),
        hidden: 100,
        eta0: 1e-4,
        epochs: 1,
        train_limit: Some(500),
        test_limit: Some(500),
        record_wall_time: false,
        ..RunConfig::default()
    };
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let start = Instant::now();
    let s = run_experiment(&pixel, tmp.path(), &mut |_| {}).map_err(|e| e.to_string())?;
    let pixel_secs = start.elapsed().as_secs_f64();
    let pixel_ok = s.status != RunStatus::Diverged && s.epochs_run == 1;

    let maxlen = 20;
    let tokens = RunConfig {
        task: Task::Tokens,
        data_dir: Some(fixture_dir.to_path_buf()),
        vocab_size: 32,
        maxlen,
        embed_dim: 16,
        hidden: 16,
        eta0: 1e-3,
        epochs: 20,
        embed_dropout: 0.1,
        row_dropout: 0.1,
        record_wall_time: false,
        ..RunConfig::default()
    };
    let raw = load_tokens(&fixture_dir.join(TOKENS_TRAIN_FILE), 32).map_err(|e| e.to_string())?;
    let truncated = raw.sequences.iter().filter(|s| s.len() > maxlen).count();
    let padded = raw.sequences.iter().filter(|s| s.len() < maxlen).count();
    let data = load_data(&tokens).map_err(|e| e.to_string())?;
    let (acc, epoch, _) = train_to_threshold(&tokens, &data, 0.95)?;
    check(
        pixel_ok && acc >= 0.95 && truncated > 0 && padded > 0,
        format!(
            "pixel-wise 500 {source} images T=784 n=100 eta0=1e-4: {:?} in {pixel_secs:.0}s; \
             marker parity: {acc:.4} at epoch {epoch} ({truncated} truncated, {padded} padded)",
            s.status
        ),
    )
}

fn main() {
    let fixtures = tempfile::tempdir().expect("temp dir");
    write_fixtures(fixtures.path(), &FixtureSpec::default()).expect("fixtures");
    let criteria: Vec<Criterion> = vec![
        ("parameter counts", Box::new(published_counts)),
        ("reduction identities", Box::new(reduction_identities)),
        ("full-model gradients", Box::new(full_model_gradients)),
        ("forward vs scalar oracle", Box::new(forward_oracle)),
        ("row-wise MNIST", Box::new(mnist_row_wise)),
        (
            "schedule and early stopping",
            Box::new(schedule_and_stopping),
        ),
        ("determinism", Box::new(|| determinism(fixtures.path()))),
        ("bias-only gate constancy", Box::new(bias_only_constancy)),
        (
            "pixel smoke and token task",
            Box::new(|| desk_scale_substitutes(fixtures.path())),
        ),
    ];
    let mut failed = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = run();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS criterion {}: {name}: {detail} [{secs:.1}s]", k + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL criterion {}: {name}: {detail} [{secs:.1}s]", k + 1);
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
