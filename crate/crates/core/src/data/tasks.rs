//! Task description tables.
//!
//! A task file is JSON. Most kinds list one entry per class:
//!
//! ```json
//! {"kind": "attribute", "classes": [{"name": "owl", "vector": [1, 0, 1], "group": 0}]}
//! ```
//!
//! One-hot tables may omit the vectors. Compositional tables instead give
//! per-primitive vectors and the pairs to build, each pair's description being
//! the attribute vector followed by the object vector:
//!
//! ```json
//! {"kind": "word-embedding",
//!  "attributes": {"red": [0.1, 0.2]},
//!  "objects": {"car": [0.3, 0.4]},
//!  "pairs": [["red", "car"]]}
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{TaskDescription, TaskKind};
use crate::tensor::Tensor;

use super::FeatureStore;

#[derive(Serialize, Deserialize)]
struct ClassEntry {
    name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    vector: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    group: Option<usize>,
}

#[derive(Serialize, Deserialize)]
struct TaskFile {
    kind: TaskKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    classes: Option<Vec<ClassEntry>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    attributes: Option<BTreeMap<String, Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    objects: Option<BTreeMap<String, Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pairs: Option<Vec<(String, String)>>,
}

/// One description vector per class, indexed by class id.
#[derive(Clone, Debug, PartialEq)]
pub struct TaskTable {
    kind: TaskKind,
    names: Vec<String>,
    vectors: Tensor,
    groups: Option<Vec<usize>>,
}

impl TaskTable {
    pub fn new(kind: TaskKind, names: Vec<String>, vectors: Tensor, groups: Option<Vec<usize>>) -> Result<Self> {
        if vectors.shape().len() != 2 || vectors.rows() != names.len() {
            return Err(Error::invalid(
                "task_table",
                format!("{} names for vectors of shape {:?}", names.len(), vectors.shape()),
            ));
        }
        if groups.as_ref().is_some_and(|g| g.len() != names.len()) {
            return Err(Error::invalid("task_table", "one group per class required"));
        }
        let mut seen = std::collections::HashSet::new();
        for name in &names {
            if !seen.insert(name.as_str()) {
                return Err(Error::invalid("task_table", format!("duplicate class name `{name}`")));
            }
        }
        for (i, name) in names.iter().enumerate() {
            TaskDescription::new(kind, vectors.row_slice(i).to_vec())
                .map_err(|e| Error::invalid("task_table", format!("class `{name}`: {e}")))?;
        }
        Ok(TaskTable {
            kind,
            names,
            vectors,
            groups,
        })
    }

    pub fn one_hot(names: Vec<String>) -> Result<Self> {
        let n = names.len();
        TaskTable::new(TaskKind::OneHot, names, Tensor::eye(n), None)
    }

    /// Exemplar descriptions: the mean feature of the given samples, per class.
    pub fn from_exemplars(store: &FeatureStore, classes: &[(String, Vec<usize>)]) -> Result<Self> {
        let mut data = Vec::with_capacity(classes.len() * store.dim());
        for (name, samples) in classes {
            let rows: Vec<&[f64]> = samples.iter().map(|&i| store.feature(i)).collect();
            let mean = encode_exemplars(&rows)
                .map_err(|_| Error::invalid("task_table", format!("class `{name}` has no exemplars")))?;
            data.extend(mean.values());
        }
        let names = classes.iter().map(|(n, _)| n.clone()).collect();
        TaskTable::new(
            TaskKind::Exemplar,
            names,
            Tensor::new(&[classes.len(), store.dim()], data)?,
            None,
        )
    }

    pub fn kind(&self) -> TaskKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.vectors.cols()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, class: usize) -> &str {
        &self.names[class]
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.names.iter().position(|n| n == name).ok_or_else(|| Error::Unknown {
            kind: "class",
            id: name.to_string(),
        })
    }

    pub fn vectors(&self) -> &Tensor {
        &self.vectors
    }

    pub fn vector(&self, class: usize) -> &[f64] {
        self.vectors.row_slice(class)
    }

    pub fn groups(&self) -> Option<&[usize]> {
        self.groups.as_deref()
    }

    pub fn description(&self, class: usize) -> TaskDescription {
        TaskDescription::new(self.kind, self.vector(class).to_vec()).expect("validated on construction")
    }

    /// Description vectors of `classes` stacked as a `len x d_task` matrix.
    pub fn gather(&self, classes: &[usize]) -> Tensor {
        let d = self.dim();
        let mut data = Vec::with_capacity(classes.len() * d);
        for &c in classes {
            data.extend_from_slice(self.vector(c));
        }
        Tensor::new(&[classes.len(), d], data).expect("non-empty gather")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let classes = (0..self.len())
            .map(|i| ClassEntry {
                name: self.names[i].clone(),
                vector: Some(self.vector(i).to_vec()),
                group: self.groups.as_ref().map(|g| g[i]),
            })
            .collect();
        let file = TaskFile {
            kind: self.kind,
            classes: Some(classes),
            attributes: None,
            objects: None,
            pairs: None,
        };
        let text = serde_json::to_string_pretty(&file).expect("serializable");
        fs::write(path, text).map_err(|e| Error::io(format!("writing {}", path.display()), e))
    }
}

/// Mean of exemplar features, used as an exemplar task description.
pub fn encode_exemplars(exemplars: &[&[f64]]) -> Result<TaskDescription> {
    let Some(first) = exemplars.first() else {
        return Err(Error::invalid("encode_exemplars", "no exemplars"));
    };
    let mut mean = vec![0.0; first.len()];
    for row in exemplars {
        if row.len() != mean.len() {
            return Err(Error::shape("encode_exemplars", &[first.len()], &[row.len()]));
        }
        mean.iter_mut().zip(row.iter()).for_each(|(m, v)| *m += v);
    }
    let n = exemplars.len() as f64;
    mean.iter_mut().for_each(|m| *m /= n);
    TaskDescription::new(TaskKind::Exemplar, mean)
}

/// Description for one class of a loaded table.
pub fn encode_task(table: &TaskTable, class: &str) -> Result<TaskDescription> {
    Ok(table.description(table.index_of(class)?))
}

pub fn load_tasks(path: impl AsRef<Path>) -> Result<TaskTable> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    let parse_err = |msg: String| Error::Parse {
        path: path.to_path_buf(),
        msg,
    };
    let file: TaskFile = serde_json::from_str(&text).map_err(|e| parse_err(e.to_string()))?;
    let (names, rows, groups) = match (&file.classes, &file.pairs) {
        (Some(_), Some(_)) => return Err(parse_err("give either `classes` or `pairs`, not both".into())),
        (Some(classes), None) => class_rows(file.kind, classes).map_err(&parse_err)?,
        (None, Some(pairs)) => {
            let empty = BTreeMap::new();
            let attrs = file.attributes.as_ref().unwrap_or(&empty);
            let objs = file.objects.as_ref().unwrap_or(&empty);
            let mut names = Vec::with_capacity(pairs.len());
            let mut rows = Vec::with_capacity(pairs.len());
            for (a, o) in pairs {
                let av = attrs.get(a).ok_or_else(|| Error::Unknown {
                    kind: "attribute",
                    id: a.clone(),
                })?;
                let ov = objs.get(o).ok_or_else(|| Error::Unknown {
                    kind: "object",
                    id: o.clone(),
                })?;
                names.push(format!("{a} {o}"));
                rows.push(av.iter().chain(ov).copied().collect::<Vec<f64>>());
            }
            (names, rows, None)
        }
        (None, None) => return Err(parse_err("missing `classes` or `pairs`".into())),
    };
    if rows.is_empty() {
        return Err(parse_err("no classes".into()));
    }
    let d = rows[0].len();
    if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != d) {
        return Err(parse_err(format!(
            "class `{}` has {} values, expected {d}",
            names[i],
            r.len()
        )));
    }
    let vectors = Tensor::new(&[rows.len(), d], rows.concat()).map_err(|e| parse_err(e.to_string()))?;
    TaskTable::new(file.kind, names, vectors, groups).map_err(|e| parse_err(e.to_string()))
}

type Rows = (Vec<String>, Vec<Vec<f64>>, Option<Vec<usize>>);

fn class_rows(kind: TaskKind, classes: &[ClassEntry]) -> std::result::Result<Rows, String> {
    let n = classes.len();
    let names = classes.iter().map(|c| c.name.clone()).collect();
    let mut rows = Vec::with_capacity(n);
    for (i, c) in classes.iter().enumerate() {
        match (&c.vector, kind) {
            (Some(v), _) => rows.push(v.clone()),
            (None, TaskKind::OneHot) => rows.push((0..n).map(|j| if j == i { 1.0 } else { 0.0 }).collect()),
            (None, _) => return Err(format!("class `{}` has no vector", c.name)),
        }
    }
    let groups = match classes.iter().filter(|c| c.group.is_some()).count() {
        0 => None,
        k if k == n => Some(classes.iter().map(|c| c.group.unwrap()).collect()),
        _ => return Err("either every class or none has a group".into()),
    };
    Ok((names, rows, groups))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
        let p = dir.join(name);
        fs::write(&p, text).unwrap();
        p
    }

    #[test]
    fn attribute_table_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let table = TaskTable::new(
            TaskKind::Attribute,
            vec!["a".into(), "b".into()],
            Tensor::from_rows(&[vec![1.0, 0.0, 1.0], vec![0.0, 1.0, 1.0]]).unwrap(),
            Some(vec![0, 1]),
        )
        .unwrap();
        let p = dir.path().join("t.json");
        table.save(&p).unwrap();
        assert_eq!(load_tasks(&p).unwrap(), table);
    }

    #[test]
    fn one_hot_vectors_are_implied() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "t.json",
            r#"{"kind":"one-hot","classes":[{"name":"x"},{"name":"y"},{"name":"z"}]}"#,
        );
        let t = load_tasks(&p).unwrap();
        assert_eq!(t.vectors(), &Tensor::eye(3));
        assert_eq!(encode_task(&t, "y").unwrap().values(), &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn composition_concatenates_attribute_then_object() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "t.json",
            r#"{"kind":"word-embedding","attributes":{"red":[1,2]},"objects":{"car":[3,4,5]},"pairs":[["red","car"]]}"#,
        );
        let t = load_tasks(&p).unwrap();
        assert_eq!(t.name(0), "red car");
        assert_eq!(t.vector(0), &[1.0, 2.0, 3.0, 4.0, 5.0]);
    }

    #[test]
    fn unknown_primitive_is_named() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "t.json",
            r#"{"kind":"word-embedding","attributes":{"red":[1]},"objects":{"car":[3]},"pairs":[["blue","car"]]}"#,
        );
        match load_tasks(&p) {
            Err(Error::Unknown { kind, id }) => assert_eq!((kind, id.as_str()), ("attribute", "blue")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn malformed_tables_rejected() {
        let dir = tempfile::tempdir().unwrap();
        for text in [
            r#"{"kind":"attribute","classes":[{"name":"a","vector":[1,2]},{"name":"b","vector":[1]}]}"#,
            r#"{"kind":"attribute","classes":[{"name":"a"}]}"#,
            r#"{"kind":"attribute","classes":[{"name":"a","vector":[1]},{"name":"a","vector":[2]}]}"#,
            r#"{"kind":"one-hot","classes":[{"name":"a","vector":[2,0]}]}"#,
            r#"{"kind":"attribute","classes":[]}"#,
            r#"{"kind":"wat","classes":[]}"#,
        ] {
            let p = write(dir.path(), "t.json", text);
            assert!(matches!(load_tasks(&p), Err(Error::Parse { .. })), "{text}");
        }
    }

    #[test]
    fn exemplar_mean() {
        let d = encode_exemplars(&[&[1.0, 2.0], &[3.0, 6.0]]).unwrap();
        assert_eq!(d.values(), &[2.0, 4.0]);
        assert_eq!(d.kind(), TaskKind::Exemplar);
        assert!(encode_exemplars(&[]).is_err());
    }
}
