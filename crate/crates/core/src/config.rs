//! Run configuration: one TOML file plus command-line overrides.
//!
//! ```toml
//! seed = 0
//! out = "runs/demo"
//! protocols = ["zsl", "gzsl"]
//!
//! [synthetic]            # or a [data] table with file paths
//! n_classes_unseen = 10
//!
//! [model]
//! feature_widths = [128, 128, 128]
//!
//! [train]
//! epochs = 60
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, SyntheticConfig};
use crate::error::{Error, Result};
use crate::eval::Protocol;
use crate::losses::LossConfig;
use crate::model::{task_depth_for, ModelConfig};
use crate::train::TrainConfig;

/// Where task descriptions come from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Descriptions {
    /// The vectors of the task file.
    #[default]
    Table,
    /// Mean training feature per base class (few-shot setting).
    Exemplar,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataPaths {
    pub features: PathBuf,
    pub tasks: PathBuf,
    pub split: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub feature_widths: Vec<usize>,
    pub task_hidden: usize,
    /// Depth of the task network; chosen from the number of training tasks when absent.
    pub task_depth: Option<usize>,
    pub descriptions: Descriptions,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            feature_widths: vec![128; 3],
            task_hidden: 128,
            task_depth: None,
            descriptions: Descriptions::Table,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    /// Exemplars per novel class in few-shot episodes.
    pub fewshot_n: usize,
    pub fewshot_trials: u64,
    pub shuffle_repeats: usize,
    /// Task names to export with `embed`; every class when empty.
    pub embed_tasks: Vec<String>,
    /// Number of test samples to export with `embed`.
    pub embed_samples: usize,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            fewshot_n: 1,
            fewshot_trials: 5,
            shuffle_repeats: 20,
            embed_tasks: Vec::new(),
            embed_samples: 50,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Required; there is no clock-based fallback.
    pub seed: Option<u64>,
    pub out: PathBuf,
    pub protocols: Vec<Protocol>,
    pub normalize_features: bool,
    /// Forces single-threaded evaluation.
    pub deterministic: bool,
    pub threads: usize,
    pub data: Option<DataPaths>,
    pub synthetic: Option<SyntheticConfig>,
    pub model: ModelSection,
    pub loss: LossConfig,
    pub train: TrainConfig,
    pub eval: EvalSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: None,
            out: PathBuf::from("runs/default"),
            protocols: vec![Protocol::Zsl, Protocol::Gzsl],
            normalize_features: false,
            deterministic: false,
            threads: 1,
            data: None,
            synthetic: None,
            model: ModelSection::default(),
            loss: LossConfig::default(),
            train: TrainConfig::default(),
            eval: EvalSection::default(),
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub protocols: Vec<Protocol>,
    pub deterministic: bool,
    pub threads: Option<usize>,
}

impl RunConfig {
    pub fn from_toml(text: &str, origin: &Path) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse {
            path: origin.to_path_buf(),
            msg: e.to_string(),
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        Self::from_toml(&text, path)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("serializable")
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.seed = Some(s);
        }
        if let Some(out) = &o.out {
            self.out = out.clone();
        }
        if !o.protocols.is_empty() {
            self.protocols = o.protocols.clone();
        }
        if o.deterministic {
            self.deterministic = true;
        }
        if let Some(t) = o.threads {
            self.threads = t;
        }
    }

    pub fn seed(&self) -> Result<u64> {
        self.seed
            .ok_or_else(|| Error::config("seed", "required (set it in the config or pass --seed)"))
    }

    /// Worker threads for evaluation.
    pub fn eval_threads(&self) -> usize {
        if self.deterministic {
            1
        } else {
            self.threads
        }
    }

    /// Checks every field and referenced path without touching the data.
    pub fn validate(&self) -> Result<()> {
        self.seed()?;
        if self.threads == 0 {
            return Err(Error::config("threads", "must be at least 1"));
        }
        match (&self.data, &self.synthetic) {
            (Some(_), Some(_)) => return Err(Error::config("data", "give either [data] or [synthetic], not both")),
            (None, None) => return Err(Error::config("data", "missing [data] or [synthetic] section")),
            (Some(d), None) => {
                for (field, p) in [
                    ("data.features", &d.features),
                    ("data.tasks", &d.tasks),
                    ("data.split", &d.split),
                ] {
                    if !p.is_file() {
                        return Err(Error::config(field, format!("{} does not exist", p.display())));
                    }
                }
            }
            (None, Some(s)) => s.validate()?,
        }
        let m = &self.model;
        if m.feature_widths.is_empty() || m.feature_widths.contains(&0) {
            return Err(Error::config(
                "model.feature_widths",
                "needs at least one positive width",
            ));
        }
        if m.task_hidden == 0 || m.task_depth == Some(0) {
            return Err(Error::config("model", "task network sizes must be positive"));
        }
        self.loss.validate()?;
        self.train.validate()?;
        if self.eval.fewshot_n == 0 || self.eval.fewshot_trials == 0 || self.eval.shuffle_repeats == 0 {
            return Err(Error::config(
                "eval",
                "few-shot n, trials and shuffle repeats must be positive",
            ));
        }
        if self.protocols.contains(&Protocol::FewShot) && m.descriptions != Descriptions::Exemplar {
            return Err(Error::config(
                "model.descriptions",
                "few-shot evaluation needs exemplar descriptions",
            ));
        }
        Ok(())
    }

    /// Loads or generates the dataset described by the config.
    pub fn dataset(&self) -> Result<Dataset> {
        let ds = match (&self.data, &self.synthetic) {
            (Some(d), _) => Dataset::load(&d.features, &d.tasks, &d.split)?,
            (None, Some(s)) => Dataset::from_synthetic(crate::data::generate_synthetic(s)?)?,
            (None, None) => return Err(Error::config("data", "missing [data] or [synthetic] section")),
        };
        let ds = if self.normalize_features { ds.normalized() } else { ds };
        match self.model.descriptions {
            Descriptions::Table => Ok(ds),
            Descriptions::Exemplar => crate::eval::exemplar_dataset(&ds),
        }
    }

    pub fn model_config(&self, dataset: &Dataset) -> ModelConfig {
        let n_train_tasks = dataset.fewshot().map_or(dataset.seen().len(), |(b, _)| b.len());
        ModelConfig {
            d_in: dataset.store.dim(),
            d_task: dataset.tasks.dim(),
            task_hidden: self.model.task_hidden,
            task_depth: self.model.task_depth.unwrap_or_else(|| task_depth_for(n_train_tasks)),
            feature_widths: self.model.feature_widths.clone(),
        }
    }
}
