//! Export of TAFEs and task embeddings for external projection tools.
//!
//! Tab-separated text, one vector per line after a `#` header:
//!
//! ```text
//! tafe <sample_id> <task name> <0|1> v0 v1 ...
//! task - <task name> - v0 v1 ...
//! ```
//!
//! Fields are separated by single tabs. The `0|1` column says whether the sample belongs to the task's class.
//! Values are written in shortest round-trip form.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::TafeNet;
use crate::tensor::Graph;

const HEADER: &str = "# kind\tsample_id\ttask\tlabel\tvalues...";
const SAMPLE_CHUNK: usize = 256;

#[derive(Clone, Debug, PartialEq)]
pub struct TafeRow {
    pub sample_id: u64,
    pub task: String,
    pub label: bool,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct EmbeddingDump {
    pub tafes: Vec<TafeRow>,
    /// `(task name, e_t)`
    pub tasks: Vec<(String, Vec<f64>)>,
}

impl EmbeddingDump {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(HEADER);
        out.push('\n');
        let push_values = |out: &mut String, values: &[f64]| {
            for v in values {
                write!(out, "\t{v:?}").unwrap();
            }
            out.push('\n');
        };
        for r in &self.tafes {
            write!(out, "tafe\t{}\t{}\t{}", r.sample_id, r.task, u8::from(r.label)).unwrap();
            push_values(&mut out, &r.values);
        }
        for (name, e) in &self.tasks {
            write!(out, "task\t-\t{name}\t-").unwrap();
            push_values(&mut out, e);
        }
        out
    }
}

/// Computes the TAFE of every `(row, class)` pair and the embedding of every
/// class, writes them to `path` and returns them.
pub fn dump_embeddings(
    net: &TafeNet,
    dataset: &Dataset,
    rows: &[usize],
    classes: &[usize],
    path: impl AsRef<Path>,
) -> Result<EmbeddingDump> {
    if rows.is_empty() || classes.is_empty() {
        return Err(Error::invalid(
            "dump_embeddings",
            "need at least one sample and one task",
        ));
    }
    let tasks = dataset.tasks.gather(classes);
    let labels = dataset.store.labels();
    let mut dump = EmbeddingDump::default();
    for (chunk_i, chunk) in rows.chunks(SAMPLE_CHUNK).enumerate() {
        let mut g = Graph::new();
        let bound = net.bind(&mut g, false);
        let x = g.constant(dataset.store.gather(chunk));
        let t = g.constant(tasks.clone());
        let out = bound.pair_forward(&mut g, x, t)?;
        let tafes = g.value(out.tafes);
        for (i, &row) in chunk.iter().enumerate() {
            for (j, &c) in classes.iter().enumerate() {
                dump.tafes.push(TafeRow {
                    sample_id: dataset.store.sample_ids()[row],
                    task: dataset.tasks.name(c).to_string(),
                    label: labels[row] == c,
                    values: tafes.row_slice(i * classes.len() + j).to_vec(),
                });
            }
        }
        if chunk_i == 0 {
            let e = g.value(out.embeddings);
            dump.tasks = classes
                .iter()
                .enumerate()
                .map(|(j, &c)| (dataset.tasks.name(c).to_string(), e.row_slice(j).to_vec()))
                .collect();
        }
    }
    let path = path.as_ref();
    fs::write(path, dump.to_text()).map_err(|e| Error::io(format!("writing {}", path.display()), e))?;
    Ok(dump)
}

pub fn parse_dump(path: impl AsRef<Path>) -> Result<EmbeddingDump> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    let bad = |line: usize, msg: &str| Error::Parse {
        path: path.to_path_buf(),
        msg: format!("line {}: {msg}", line + 1),
    };
    let mut dump = EmbeddingDump::default();
    for (n, line) in text.lines().enumerate() {
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() < 5 {
            return Err(bad(n, "too few fields"));
        }
        let values = fields[4..]
            .iter()
            .map(|f| f.parse::<f64>())
            .collect::<std::result::Result<Vec<f64>, _>>()
            .map_err(|_| bad(n, "unparsable value"))?;
        match fields[0] {
            "tafe" => dump.tafes.push(TafeRow {
                sample_id: fields[1].parse().map_err(|_| bad(n, "unparsable sample id"))?,
                task: fields[2].to_string(),
                label: match fields[3] {
                    "1" => true,
                    "0" => false,
                    _ => return Err(bad(n, "label must be 0 or 1")),
                },
                values,
            }),
            "task" => dump.tasks.push((fields[2].to_string(), values)),
            _ => return Err(bad(n, "unknown row kind")),
        }
    }
    Ok(dump)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::tests::fixture;
    use crate::model::{GenericFeature, TaskEmbedding};

    #[test]
    fn counts_round_trip_and_match_single_pair_path() {
        let (net, ds) = fixture();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.tsv");
        let rows = &ds.test_rows()[..2];
        let dump = dump_embeddings(&net, &ds, rows, &[0, 9], &path).unwrap();
        assert_eq!(dump.tafes.len(), 4);
        assert_eq!(dump.tasks.len(), 2);
        assert_eq!(parse_dump(&path).unwrap(), dump);

        let r = &dump.tafes[1];
        let x = GenericFeature(ds.store.feature(rows[0]).to_vec());
        let tafe = net.compute_tafe(&x, &ds.tasks.description(9)).unwrap();
        for (a, b) in tafe.0.iter().zip(&r.values) {
            assert!((a - b).abs() < 1e-12);
        }
        let TaskEmbedding(e) = net.embed_task(&ds.tasks.description(0)).unwrap();
        for (a, b) in e.iter().zip(&dump.tasks[0].1) {
            assert!((a - b).abs() < 1e-12);
        }
        let again = dump_embeddings(&net, &ds, rows, &[0, 9], dir.path().join("f.tsv")).unwrap();
        assert_eq!(fs::read(&path).unwrap(), fs::read(dir.path().join("f.tsv")).unwrap());
        assert_eq!(again, dump);
    }

    #[test]
    fn malformed_dump_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.tsv");
        fs::write(&path, "tafe\t1\tx\t2\t0.5\n").unwrap();
        assert!(parse_dump(&path).is_err());
    }
}
