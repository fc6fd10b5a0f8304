use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::cells::GateVariant;
use crate::data::fixtures::{IMAGES_FILE, LABELS_FILE, TOKENS_TEST_FILE, TOKENS_TRAIN_FILE};
use crate::data::{StandardizeScope, Truncation};
use crate::error::{Error, Result};
use crate::layers::DropoutSpec;
use crate::optim::RmspropConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    /// MNIST, 784 steps of one pixel.
    MnistPixel,
    /// MNIST, 28 steps of one 28-pixel row.
    MnistRow,
    /// Binary classification of pre-tokenised id sequences.
    Tokens,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::MnistPixel => "mnist-pixel",
            Task::MnistRow => "mnist-row",
            Task::Tokens => "tokens",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mnist-pixel" => Ok(Task::MnistPixel),
            "mnist-row" => Ok(Task::MnistRow),
            "tokens" => Ok(Task::Tokens),
            _ => Err(Error::Argument(format!(
                "unknown task {s:?}; valid tasks: mnist-pixel, mnist-row, tokens"
            ))),
        }
    }
}

/// Everything that determines a training run. Serialised as a flat TOML
/// table; every key has a CLI flag of the same name (with dashes).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub task: Task,
    pub variant: GateVariant,
    pub hidden: usize,
    pub eta0: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub patience: usize,
    pub seed: u64,
    pub forget_bias_init: f64,
    pub rho: f64,
    pub epsilon: f64,
    /// Global-norm gradient clip; absent means no clipping.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub clip_norm: Option<f64>,
    pub embed_dropout: f64,
    pub row_dropout: f64,

    pub standardize: StandardizeScope,
    /// Directory searched for data files not given explicitly: MNIST names
    /// (`train-images-idx3-ubyte`, `t10k-…`), else the fixture names (one
    /// image set used for both train and test), and `tokens-{train,test}.txt`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data_dir: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub train_images: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub train_labels: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub test_images: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub test_labels: Option<PathBuf>,
    /// Use only the first N training examples.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub train_limit: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub test_limit: Option<usize>,

    #[serde(skip_serializing_if = "Option::is_none")]
    pub train_tokens: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub test_tokens: Option<PathBuf>,
    pub vocab_size: usize,
    pub maxlen: usize,
    pub embed_dim: usize,
    pub truncation: Truncation,

    /// Write measured seconds in the `wall_time_s` column; when false the
    /// column holds 0 and the metrics file depends only on config and seed.
    pub record_wall_time: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            task: Task::MnistRow,
            variant: GateVariant::Vanilla,
            hidden: 50,
            eta0: 1e-3,
            epochs: 200,
            batch_size: 32,
            patience: 25,
            seed: 0,
            forget_bias_init: 0.0,
            rho: RmspropConfig::default().rho,
            epsilon: RmspropConfig::default().epsilon,
            clip_norm: None,
            embed_dropout: 0.0,
            row_dropout: 0.0,
            standardize: StandardizeScope::Global,
            data_dir: None,
            train_images: None,
            train_labels: None,
            test_images: None,
            test_labels: None,
            train_limit: None,
            test_limit: None,
            train_tokens: None,
            test_tokens: None,
            vocab_size: 20_000,
            maxlen: 80,
            embed_dim: 128,
            truncation: Truncation::KeepLast,
            record_wall_time: true,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        RunConfig::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("RunConfig serialises to TOML")
    }

    pub fn dropout(&self) -> DropoutSpec {
        DropoutSpec {
            embed_rate: self.embed_dropout,
            row_rate: self.row_dropout,
        }
    }

    pub fn rmsprop(&self) -> RmspropConfig {
        RmspropConfig {
            rho: self.rho,
            epsilon: self.epsilon,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.eta0 > 0.0) || !self.eta0.is_finite() {
            return bad(format!("eta0 must be > 0, got {}", self.eta0));
        }
        for (name, v) in [
            ("hidden", self.hidden),
            ("epochs", self.epochs),
            ("batch_size", self.batch_size),
            ("patience", self.patience),
        ] {
            if v == 0 {
                return bad(format!("{name} must be positive"));
            }
        }
        if !(0.0..1.0).contains(&self.rho) || !(self.epsilon > 0.0) {
            return bad(format!(
                "rmsprop needs 0 ≤ rho < 1 and epsilon > 0, got {} / {}",
                self.rho, self.epsilon
            ));
        }
        if let Some(c) = self.clip_norm {
            if !(c > 0.0) {
                return bad(format!("clip_norm must be > 0, got {c}"));
            }
        }
        self.dropout()
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        if self.task == Task::Tokens {
            if self.vocab_size < 2 || self.maxlen == 0 || self.embed_dim == 0 {
                return bad("tokens task needs vocab_size ≥ 2, maxlen ≥ 1, embed_dim ≥ 1".into());
            }
            self.token_paths()?;
        } else {
            self.image_paths()?;
        }
        Ok(())
    }

    /// `[train_images, train_labels, test_images, test_labels]`.
    pub fn image_paths(&self) -> Result<[PathBuf; 4]> {
        let dir_default = |mnist: &str, fixture: &str| {
            self.data_dir.as_ref().map(|d| {
                if d.join("train-images-idx3-ubyte").exists() {
                    d.join(mnist)
                } else {
                    d.join(fixture)
                }
            })
        };
        let pick = |explicit: &Option<PathBuf>, key: &str, mnist: &str, fixture: &str| {
            explicit
                .clone()
                .or_else(|| dir_default(mnist, fixture))
                .ok_or_else(|| Error::Config(format!("{} needs `{key}` or `data_dir`", self.task)))
        };
        Ok([
            pick(
                &self.train_images,
                "train_images",
                "train-images-idx3-ubyte",
                IMAGES_FILE,
            )?,
            pick(
                &self.train_labels,
                "train_labels",
                "train-labels-idx1-ubyte",
                LABELS_FILE,
            )?,
            pick(
                &self.test_images,
                "test_images",
                "t10k-images-idx3-ubyte",
                IMAGES_FILE,
            )?,
            pick(
                &self.test_labels,
                "test_labels",
                "t10k-labels-idx1-ubyte",
                LABELS_FILE,
            )?,
        ])
    }

    /// `[train_tokens, test_tokens]`.
    pub fn token_paths(&self) -> Result<[PathBuf; 2]> {
        let pick = |explicit: &Option<PathBuf>, key: &str, file: &str| {
            explicit
                .clone()
                .or_else(|| self.data_dir.as_ref().map(|d| d.join(file)))
                .ok_or_else(|| Error::Config(format!("tokens task needs `{key}` or `data_dir`")))
        };
        Ok([
            pick(&self.train_tokens, "train_tokens", TOKENS_TRAIN_FILE)?,
            pick(&self.test_tokens, "test_tokens", TOKENS_TEST_FILE)?,
        ])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_round_trip() {
        let c = RunConfig {
            variant: GateVariant::BiasOnly,
            clip_norm: Some(5.0),
            train_images: Some("a/b".into()),
            ..RunConfig::default()
        };
        assert_eq!(RunConfig::from_toml(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(RunConfig::from_toml("hiden = 3\n").is_err());
        let c = RunConfig::from_toml("variant = \"lstm2\"\ntask = \"tokens\"\n").unwrap();
        assert_eq!(
            (c.variant, c.task),
            (GateVariant::NoInputNoBias, Task::Tokens)
        );
        assert!(RunConfig::from_toml("variant = \"lstm9\"\n").is_err());
    }

    #[test]
    fn validation() {
        let mut c = RunConfig {
            train_images: Some("x".into()),
            train_labels: Some("x".into()),
            test_images: Some("x".into()),
            test_labels: Some("x".into()),
            ..RunConfig::default()
        };
        c.validate().unwrap();
        c.eta0 = 0.0;
        assert!(c
            .validate()
            .unwrap_err()
            .to_string()
            .contains("eta0 must be > 0"));
        c.eta0 = 1e-3;
        c.row_dropout = 1.0;
        assert!(c.validate().is_err());
        c.row_dropout = 0.0;
        c.task = Task::Tokens;
        assert!(c.validate().is_err());
    }
}
