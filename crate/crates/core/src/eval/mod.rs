//! Evaluation protocols and reports.

mod dump;
mod fewshot;
mod metrics;
mod shuffle;

pub use dump::{dump_embeddings, parse_dump, EmbeddingDump, TafeRow};
pub use fewshot::{build_fewshot_episode, exemplar_dataset, fewshot_eval, Episode, FewShotTrial};
pub use metrics::{
    argmax, average_precision, gzsl_metrics, harmonic_mean, mean_average_precision, per_class_top1, predict, ranking,
    topk_accuracy, GzslMetrics, MapResult,
};
pub use shuffle::{shuffled_task_eval, ShuffleMode};

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::TafeNet;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Protocol {
    Zsl,
    Gzsl,
    Composition,
    FewShot,
    Shuffle,
}

impl Protocol {
    pub fn name(self) -> &'static str {
        match self {
            Protocol::Zsl => "zsl",
            Protocol::Gzsl => "gzsl",
            Protocol::Composition => "composition",
            Protocol::FewShot => "few-shot",
            Protocol::Shuffle => "shuffle",
        }
    }
}

impl std::str::FromStr for Protocol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "zsl" => Ok(Protocol::Zsl),
            "gzsl" => Ok(Protocol::Gzsl),
            "composition" => Ok(Protocol::Composition),
            "few-shot" | "fewshot" => Ok(Protocol::FewShot),
            "shuffle" => Ok(Protocol::Shuffle),
            other => Err(Error::Unknown {
                kind: "protocol",
                id: other.to_string(),
            }),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FewShotSummary {
    pub n: usize,
    pub trials: Vec<FewShotTrial>,
    pub top5_novel: f64,
    pub top5_all: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShuffleSummary {
    pub repeats: usize,
    /// Mean over classes of in-group shuffled accuracy.
    pub in_group: f64,
    /// Mean over classes of out-of-group shuffled accuracy.
    pub out_of_group: f64,
    /// `(class, in-group, out-of-group)` per evaluated class.
    pub per_class: Vec<(String, f64, f64)>,
}

/// Result of one protocol. Fields that a protocol does not produce are absent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub protocol: Protocol,
    pub samples: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub top1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub acc_u: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub acc_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub map: Option<f64>,
    /// Unseen pairs left out of mAP for lack of positive samples.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub map_excluded: Vec<String>,
    /// `(k, accuracy)` rows.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub topk: Vec<(usize, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fewshot: Option<FewShotSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shuffle: Option<ShuffleSummary>,
}

impl EvalReport {
    fn empty(protocol: Protocol, samples: usize) -> Self {
        EvalReport {
            protocol,
            samples,
            top1: None,
            acc_u: None,
            acc_s: None,
            h: None,
            map: None,
            map_excluded: Vec::new(),
            topk: Vec::new(),
            fewshot: None,
            shuffle: None,
        }
    }

    fn rates(&self) -> Vec<(String, f64)> {
        let mut out = Vec::new();
        let named = [
            ("top1", self.top1),
            ("acc_u", self.acc_u),
            ("acc_s", self.acc_s),
            ("H", self.h),
            ("mAP", self.map),
        ];
        out.extend(named.iter().filter_map(|(n, v)| v.map(|v| (n.to_string(), v))));
        out.extend(self.topk.iter().map(|(k, v)| (format!("top{k}"), *v)));
        if let Some(fs) = &self.fewshot {
            out.push(("top5_novel".into(), fs.top5_novel));
            out.push(("top5_all".into(), fs.top5_all));
            for (i, t) in fs.trials.iter().enumerate() {
                out.push((format!("trial{i}.top5_novel"), t.top5_novel));
                out.push((format!("trial{i}.top5_all"), t.top5_all));
            }
        }
        if let Some(sh) = &self.shuffle {
            out.push(("in_group".into(), sh.in_group));
            out.push(("out_of_group".into(), sh.out_of_group));
        }
        out
    }

    /// Every rate lies in `[0, 1]` and `H` agrees with `acc_u` and `acc_s`.
    pub fn validate(&self) -> Result<()> {
        for (name, v) in self.rates() {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::invalid("eval_report", format!("{name} = {v} outside [0, 1]")));
            }
        }
        if let (Some(u), Some(s), Some(h)) = (self.acc_u, self.acc_s, self.h) {
            if (harmonic_mean(u, s) - h).abs() > 1e-12 {
                return Err(Error::invalid("eval_report", "H inconsistent with acc_u and acc_s"));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(format!("writing {}", path.display()), e))
    }

    /// Aligned `metric value` table.
    pub fn to_table(&self) -> String {
        let rows = self.rates();
        let width = rows
            .iter()
            .map(|(n, _)| n.len())
            .max()
            .unwrap_or(0)
            .max("protocol".len());
        let mut out = String::new();
        writeln!(out, "{:<width$}  {}", "protocol", self.protocol.name()).unwrap();
        writeln!(out, "{:<width$}  {}", "samples", self.samples).unwrap();
        for (name, v) in rows {
            writeln!(out, "{name:<width$}  {v:.4}").unwrap();
        }
        if !self.map_excluded.is_empty() {
            writeln!(out, "{:<width$}  {}", "excluded", self.map_excluded.join(", ")).unwrap();
        }
        out
    }
}

/// Scores of `rows` against the task vectors of `classes`.
pub fn score_rows(net: &TafeNet, dataset: &Dataset, rows: &[usize], classes: &[usize]) -> Result<Tensor> {
    net.score_matrix(&dataset.store.gather(rows), &dataset.tasks.gather(classes))
}

fn require_unseen(dataset: &Dataset, protocol: Protocol) -> Result<Vec<usize>> {
    let rows = dataset.test_rows_of(dataset.unseen());
    if rows.is_empty() {
        return Err(Error::Split(format!(
            "{} evaluation needs unseen test samples",
            protocol.name()
        )));
    }
    Ok(rows)
}

/// Per-class top-1 over unseen test samples, choosing among unseen classes only.
pub fn zsl_eval(net: &TafeNet, dataset: &Dataset) -> Result<EvalReport> {
    let rows = require_unseen(dataset, Protocol::Zsl)?;
    let scores = score_rows(net, dataset, &rows, dataset.unseen())?;
    let predicted = predict(&scores, dataset.unseen())?;
    let truth: Vec<usize> = rows.iter().map(|&i| dataset.store.labels()[i]).collect();
    let mut report = EvalReport::empty(Protocol::Zsl, rows.len());
    report.top1 = Some(per_class_top1(&predicted, &truth, dataset.unseen())?);
    Ok(report)
}

/// Every test sample against the joint seen and unseen label space.
pub fn gzsl_eval(net: &TafeNet, dataset: &Dataset) -> Result<EvalReport> {
    require_unseen(dataset, Protocol::Gzsl)?;
    let rows = dataset.test_rows().to_vec();
    let classes: Vec<usize> = dataset.seen().iter().chain(dataset.unseen()).copied().collect();
    let scores = score_rows(net, dataset, &rows, &classes)?;
    let truth: Vec<usize> = rows.iter().map(|&i| dataset.store.labels()[i]).collect();
    let m = gzsl_metrics(&scores, &truth, dataset.seen(), dataset.unseen())?;
    let mut report = EvalReport::empty(Protocol::Gzsl, rows.len());
    report.acc_u = Some(m.acc_u);
    report.acc_s = Some(m.acc_s);
    report.h = Some(m.h);
    Ok(report)
}

/// Unseen classes read as unseen attribute-object pairs: top-1/2/3 accuracy of
/// unseen test samples among the unseen pairs, and mAP of each unseen pair's
/// ranking over every test sample.
pub fn composition_eval(net: &TafeNet, dataset: &Dataset) -> Result<EvalReport> {
    let unseen = dataset.unseen();
    let rows = require_unseen(dataset, Protocol::Composition)?;
    let labels = dataset.store.labels();
    let column = |c: usize| unseen.iter().position(|&u| u == c);
    let scores = score_rows(net, dataset, &rows, unseen)?;
    let truth: Vec<usize> = rows.iter().map(|&i| column(labels[i]).expect("unseen row")).collect();
    let mut report = EvalReport::empty(Protocol::Composition, rows.len());
    for k in 1..=3.min(unseen.len()) {
        report.topk.push((k, topk_accuracy(&scores, &truth, k)?));
    }
    let all = dataset.test_rows().to_vec();
    let all_scores = score_rows(net, dataset, &all, unseen)?;
    // samples of seen classes get a column index no pair uses
    let all_truth: Vec<usize> = all.iter().map(|&i| column(labels[i]).unwrap_or(usize::MAX)).collect();
    let cols: Vec<usize> = (0..unseen.len()).collect();
    let m = mean_average_precision(&all_scores, &all_truth, &cols)?;
    report.map = Some(m.map);
    report.map_excluded = m
        .excluded
        .iter()
        .map(|&c| dataset.tasks.name(unseen[c]).to_string())
        .collect();
    Ok(report)
}

/// Shuffled-task accuracy in both modes for every class with test samples
/// and at least one in-group donor.
pub fn shuffle_eval(net: &TafeNet, dataset: &Dataset, repeats: usize, seed: u64) -> Result<EvalReport> {
    let groups = dataset
        .tasks
        .groups()
        .ok_or_else(|| Error::invalid("shuffle_eval", "task table has no class hierarchy"))?;
    let mut per_class = Vec::new();
    let mut samples = 0;
    for c in 0..dataset.tasks.len() {
        let rows = dataset.test_rows_of(&[c]).len();
        let siblings = groups.iter().filter(|&&g| g == groups[c]).count();
        if rows == 0 || siblings < 2 || siblings == groups.len() {
            continue;
        }
        let class_seed = seed.wrapping_add(c as u64);
        let in_group = shuffled_task_eval(net, dataset, c, ShuffleMode::InGroup, repeats, class_seed)?;
        let out_group = shuffled_task_eval(net, dataset, c, ShuffleMode::OutOfGroup, repeats, class_seed)?;
        per_class.push((dataset.tasks.name(c).to_string(), in_group, out_group));
        samples += rows;
    }
    if per_class.is_empty() {
        return Err(Error::invalid(
            "shuffle_eval",
            "no class has both in-group and out-of-group donors",
        ));
    }
    let n = per_class.len() as f64;
    let mut report = EvalReport::empty(Protocol::Shuffle, samples);
    report.shuffle = Some(ShuffleSummary {
        repeats,
        in_group: per_class.iter().map(|c| c.1).sum::<f64>() / n,
        out_of_group: per_class.iter().map(|c| c.2).sum::<f64>() / n,
        per_class,
    });
    Ok(report)
}
