//! Split files.
//!
//! ```json
//! {"version": 1,
//!  "seen": ["owl", "cat"], "unseen": ["bat"],
//!  "train": [0, 1, 2], "test": [3, 4, 5],
//!  "fewshot": {"base": ["owl", "cat"], "novel": ["bat"]}}
//! ```
//!
//! Classes are referenced by name and samples by sample id. `fewshot` is
//! optional.

use std::collections::HashSet;
use std::fs;
use std::hash::Hash;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SPLIT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FewShotPartition {
    pub base: Vec<String>,
    pub novel: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    #[serde(default = "default_version")]
    pub version: u32,
    pub seen: Vec<String>,
    #[serde(default)]
    pub unseen: Vec<String>,
    pub train: Vec<u64>,
    pub test: Vec<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fewshot: Option<FewShotPartition>,
}

fn default_version() -> u32 {
    SPLIT_VERSION
}

fn first_repeat<'a, T: Eq + Hash + 'a>(items: impl IntoIterator<Item = &'a T>) -> Option<&'a T> {
    let mut seen = HashSet::new();
    items.into_iter().find(|&x| !seen.insert(x))
}

impl SplitSpec {
    /// Checks the split on its own; references are checked by [`super::Dataset`].
    pub fn validate(&self) -> Result<()> {
        if self.version != SPLIT_VERSION {
            return Err(Error::Split(format!("unsupported version {}", self.version)));
        }
        if self.seen.is_empty() {
            return Err(Error::Split("no seen classes".into()));
        }
        if let Some(c) = first_repeat(self.seen.iter().chain(&self.unseen)) {
            return Err(Error::Split(format!("class `{c}` listed twice across seen/unseen")));
        }
        if let Some(s) = first_repeat(self.train.iter().chain(&self.test)) {
            return Err(Error::Split(format!("sample {s} listed twice across train/test")));
        }
        if let Some(fs) = &self.fewshot {
            if fs.base.is_empty() || fs.novel.is_empty() {
                return Err(Error::Split("few-shot partition needs base and novel classes".into()));
            }
            if let Some(c) = first_repeat(fs.base.iter().chain(&fs.novel)) {
                return Err(Error::Split(format!("class `{c}` listed twice across base/novel")));
            }
        }
        Ok(())
    }

    /// Zero-shot evaluation needs at least one unseen class.
    pub fn zsl_enabled(&self) -> bool {
        !self.unseen.is_empty()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self).expect("serializable");
        fs::write(path, text).map_err(|e| Error::io(format!("writing {}", path.display()), e))
    }
}

pub fn load_split(path: impl AsRef<Path>) -> Result<SplitSpec> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    let split: SplitSpec = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })?;
    split.validate()?;
    Ok(split)
}

/// One-shot import of a benchmark split given as 1-based row indices.
///
/// `labels` and `names` describe the feature rows (sample id = row index);
/// `trainval`, `test_seen` and `test_unseen` are the index lists shipped with
/// the benchmark. Seen classes are those present in `trainval`.
pub fn import_index_split(
    labels: &[usize],
    names: &[String],
    trainval: &[usize],
    test_seen: &[usize],
    test_unseen: &[usize],
) -> Result<SplitSpec> {
    let to_row = |i: usize| -> Result<usize> {
        if i == 0 || i > labels.len() {
            Err(Error::Split(format!("row index {i} outside 1..={}", labels.len())))
        } else {
            Ok(i - 1)
        }
    };
    let class_names = |rows: &[usize]| -> Result<Vec<String>> {
        let mut out: Vec<usize> = Vec::new();
        for &r in rows {
            let c = labels[to_row(r)?];
            if !out.contains(&c) {
                out.push(c);
            }
        }
        out.sort_unstable();
        out.into_iter()
            .map(|c| {
                names.get(c).cloned().ok_or_else(|| Error::Unknown {
                    kind: "class",
                    id: c.to_string(),
                })
            })
            .collect()
    };
    let ids = |rows: &[usize]| -> Result<Vec<u64>> { rows.iter().map(|&r| to_row(r).map(|r| r as u64)).collect() };
    let test: Vec<usize> = test_seen.iter().chain(test_unseen).copied().collect();
    let split = SplitSpec {
        version: SPLIT_VERSION,
        seen: class_names(trainval)?,
        unseen: class_names(test_unseen)?,
        train: ids(trainval)?,
        test: ids(&test)?,
        fewshot: None,
    };
    split.validate()?;
    Ok(split)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn names(prefix: &str, n: usize) -> Vec<String> {
        (0..n).map(|i| format!("{prefix}{i}")).collect()
    }

    fn spec(seen: Vec<String>, unseen: Vec<String>) -> SplitSpec {
        SplitSpec {
            version: SPLIT_VERSION,
            seen,
            unseen,
            train: vec![0, 1],
            test: vec![2, 3],
            fewshot: None,
        }
    }

    #[test]
    fn twenty_seen_twelve_unseen_accepted() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.json");
        let s = spec(names("s", 20), names("u", 12));
        s.save(&p).unwrap();
        let back = load_split(&p).unwrap();
        assert_eq!(back, s);
        assert_eq!((back.seen.len(), back.unseen.len()), (20, 12));
    }

    #[test]
    fn overlap_rejected() {
        let s = spec(vec!["a".into(), "b".into()], vec!["b".into()]);
        assert!(matches!(s.validate(), Err(Error::Split(m)) if m.contains("`b`")));
        let mut s = spec(vec!["a".into()], vec![]);
        s.test.push(1);
        assert!(s.validate().is_err());
    }

    #[test]
    fn empty_unseen_disables_zsl() {
        let s = spec(vec!["a".into()], vec![]);
        s.validate().unwrap();
        assert!(!s.zsl_enabled());
    }

    #[test]
    fn index_import() {
        let labels = vec![0, 0, 1, 1, 2, 2];
        let n = names("c", 3);
        let s = import_index_split(&labels, &n, &[1, 3], &[2, 4], &[5, 6]).unwrap();
        assert_eq!(s.seen, vec!["c0", "c1"]);
        assert_eq!(s.unseen, vec!["c2"]);
        assert_eq!(s.train, vec![0, 2]);
        assert_eq!(s.test, vec![1, 3, 4, 5]);
        assert!(import_index_split(&labels, &n, &[0], &[], &[5]).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn loaded_splits_are_disjoint(
            seen in prop::collection::vec(0u8..12, 1..8),
            unseen in prop::collection::vec(0u8..12, 0..8),
            train in prop::collection::vec(0u64..30, 0..10),
            test in prop::collection::vec(0u64..30, 0..10),
        ) {
            let s = SplitSpec {
                version: SPLIT_VERSION,
                seen: seen.iter().map(|c| format!("c{c}")).collect(),
                unseen: unseen.iter().map(|c| format!("c{c}")).collect(),
                train,
                test,
                fewshot: None,
            };
            let dir = tempfile::tempdir().unwrap();
            let p = dir.path().join("s.json");
            fs::write(&p, serde_json::to_string(&s).unwrap()).unwrap();
            if let Ok(loaded) = load_split(&p) {
                let seen: HashSet<_> = loaded.seen.iter().collect();
                prop_assert!(loaded.unseen.iter().all(|c| !seen.contains(c)));
                let train: HashSet<_> = loaded.train.iter().collect();
                prop_assert!(loaded.test.iter().all(|s| !train.contains(s)));
            }
        }
    }
}
