//! Feature, task and split files, and the synthetic dataset generator.

mod features;
mod split;
mod synthetic;
mod tasks;

pub use features::{load_features, FeatureStore, Precision, FEATURE_MAGIC, FEATURE_VERSION};
pub use split::{import_index_split, load_split, FewShotPartition, SplitSpec, SPLIT_VERSION};
pub use synthetic::{generate_synthetic, SyntheticConfig, SyntheticData};
pub use tasks::{encode_exemplars, encode_task, load_tasks, TaskTable};

use std::collections::HashMap;
use std::path::Path;

use crate::error::{Error, Result};

/// A store, task table and split checked against each other, with names and
/// sample ids resolved to class ids and row indices.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub store: FeatureStore,
    pub tasks: TaskTable,
    pub split: SplitSpec,
    seen: Vec<usize>,
    unseen: Vec<usize>,
    train: Vec<usize>,
    test: Vec<usize>,
    fewshot: Option<(Vec<usize>, Vec<usize>)>,
}

impl Dataset {
    pub fn new(store: FeatureStore, tasks: TaskTable, split: SplitSpec) -> Result<Self> {
        split.validate()?;
        let resolve = |names: &[String]| -> Result<Vec<usize>> { names.iter().map(|n| tasks.index_of(n)).collect() };
        let seen = resolve(&split.seen)?;
        let unseen = resolve(&split.unseen)?;
        let fewshot = match &split.fewshot {
            Some(fs) => Some((resolve(&fs.base)?, resolve(&fs.novel)?)),
            None => None,
        };
        if let Some(&bad) = store.labels().iter().find(|&&l| l >= tasks.len()) {
            return Err(Error::Unknown {
                kind: "class id",
                id: bad.to_string(),
            });
        }
        let rows: HashMap<u64, usize> = store.sample_ids().iter().enumerate().map(|(i, &id)| (id, i)).collect();
        if rows.len() != store.len() {
            return Err(Error::invalid("dataset", "duplicate sample ids in feature store"));
        }
        let lookup = |ids: &[u64]| -> Result<Vec<usize>> {
            ids.iter()
                .map(|id| {
                    rows.get(id).copied().ok_or_else(|| Error::Unknown {
                        kind: "sample",
                        id: id.to_string(),
                    })
                })
                .collect()
        };
        let train = lookup(&split.train)?;
        let test = lookup(&split.test)?;
        let mut role = vec![None; tasks.len()];
        seen.iter().for_each(|&c| role[c] = Some(true));
        unseen.iter().for_each(|&c| role[c] = Some(false));
        for &i in &train {
            let c = store.labels()[i];
            if role[c] != Some(true) {
                return Err(Error::Split(format!(
                    "training sample {} belongs to `{}`, which is not a seen class",
                    store.sample_ids()[i],
                    tasks.name(c)
                )));
            }
        }
        for &i in &test {
            let c = store.labels()[i];
            if role[c].is_none() {
                return Err(Error::Split(format!(
                    "test sample {} belongs to `{}`, which is neither seen nor unseen",
                    store.sample_ids()[i],
                    tasks.name(c)
                )));
            }
        }
        Ok(Dataset {
            store,
            tasks,
            split,
            seen,
            unseen,
            train,
            test,
            fewshot,
        })
    }

    pub fn load(features: impl AsRef<Path>, tasks: impl AsRef<Path>, split: impl AsRef<Path>) -> Result<Self> {
        Dataset::new(load_features(features)?, load_tasks(tasks)?, load_split(split)?)
    }

    pub fn from_synthetic(data: SyntheticData) -> Result<Self> {
        Dataset::new(data.store, data.tasks, data.split)
    }

    /// Copy with ℓ2-normalized features.
    pub fn normalized(&self) -> Dataset {
        Dataset {
            store: self.store.l2_normalized(),
            ..self.clone()
        }
    }

    pub fn seen(&self) -> &[usize] {
        &self.seen
    }

    pub fn unseen(&self) -> &[usize] {
        &self.unseen
    }

    pub fn train_rows(&self) -> &[usize] {
        &self.train
    }

    pub fn test_rows(&self) -> &[usize] {
        &self.test
    }

    /// Test rows whose class is in `classes`.
    pub fn test_rows_of(&self, classes: &[usize]) -> Vec<usize> {
        self.test
            .iter()
            .copied()
            .filter(|&i| classes.contains(&self.store.labels()[i]))
            .collect()
    }

    /// Base and novel class ids, when the split declares them.
    pub fn fewshot(&self) -> Option<(&[usize], &[usize])> {
        self.fewshot.as_ref().map(|(b, n)| (b.as_slice(), n.as_slice()))
    }
}
