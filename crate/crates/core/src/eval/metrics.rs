//! Scoring metrics over `N x C` score matrices.
//!
//! Ties in argmax and top-k go to the lower label id.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Index of the row maximum, lowest index on ties.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (j, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = j;
        }
    }
    best
}

/// Row-wise argmax of a score matrix, mapped through `labels` (column → class id).
pub fn predict(scores: &Tensor, labels: &[usize]) -> Result<Vec<usize>> {
    if scores.cols() != labels.len() {
        return Err(Error::shape("predict", scores.shape(), &[scores.rows(), labels.len()]));
    }
    Ok((0..scores.rows())
        .map(|i| labels[argmax(scores.row_slice(i))])
        .collect())
}

/// Mean over classes of within-class accuracy; classes without samples are skipped.
pub fn per_class_top1(predicted: &[usize], truth: &[usize], class_set: &[usize]) -> Result<f64> {
    if class_set.is_empty() {
        return Err(Error::invalid("per_class_top1", "empty class set"));
    }
    if predicted.len() != truth.len() {
        return Err(Error::shape("per_class_top1", &[predicted.len()], &[truth.len()]));
    }
    let mut counts: BTreeMap<usize, (usize, usize)> = class_set.iter().map(|&c| (c, (0, 0))).collect();
    for (&p, &t) in predicted.iter().zip(truth) {
        let entry = counts.get_mut(&t).ok_or_else(|| Error::Unknown {
            kind: "truth label",
            id: t.to_string(),
        })?;
        entry.1 += 1;
        if p == t {
            entry.0 += 1;
        }
    }
    let rates: Vec<f64> = counts
        .values()
        .filter(|(_, n)| *n > 0)
        .map(|&(k, n)| k as f64 / n as f64)
        .collect();
    if rates.is_empty() {
        return Err(Error::invalid("per_class_top1", "no samples"));
    }
    Ok(rates.iter().sum::<f64>() / rates.len() as f64)
}

/// `2ab / (a + b)`, zero when both are zero.
pub fn harmonic_mean(acc_u: f64, acc_s: f64) -> f64 {
    if acc_u + acc_s == 0.0 {
        0.0
    } else {
        2.0 * acc_u * acc_s / (acc_u + acc_s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GzslMetrics {
    pub acc_u: f64,
    pub acc_s: f64,
    pub h: f64,
}

/// Argmax over the joint label space `seen ∪ unseen`, whose order gives the
/// score columns (`seen` first).
pub fn gzsl_metrics(scores: &Tensor, truth: &[usize], seen: &[usize], unseen: &[usize]) -> Result<GzslMetrics> {
    let labels: Vec<usize> = seen.iter().chain(unseen).copied().collect();
    let predicted = predict(scores, &labels)?;
    if truth.len() != predicted.len() {
        return Err(Error::shape("gzsl_metrics", &[truth.len()], &[predicted.len()]));
    }
    if let Some(t) = truth.iter().find(|t| !labels.contains(t)) {
        return Err(Error::Unknown {
            kind: "truth label",
            id: t.to_string(),
        });
    }
    let subset = |classes: &[usize]| -> Result<f64> {
        let (p, t): (Vec<usize>, Vec<usize>) = predicted
            .iter()
            .zip(truth)
            .filter(|(_, t)| classes.contains(t))
            .map(|(&p, &t)| (p, t))
            .unzip();
        if t.is_empty() {
            Ok(0.0)
        } else {
            per_class_top1(&p, &t, classes)
        }
    };
    let acc_u = subset(unseen)?;
    let acc_s = subset(seen)?;
    Ok(GzslMetrics {
        acc_u,
        acc_s,
        h: harmonic_mean(acc_u, acc_s),
    })
}

/// Columns of `row` ordered by descending score, ascending index on ties.
pub fn ranking(row: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..row.len()).collect();
    idx.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
    idx
}

/// Fraction of samples whose truth column is among the `k` best.
pub fn topk_accuracy(scores: &Tensor, truth: &[usize], k: usize) -> Result<f64> {
    let c = scores.cols();
    if k == 0 || k > c {
        return Err(Error::invalid("topk_accuracy", format!("k = {k} outside 1..={c}")));
    }
    if truth.len() != scores.rows() {
        return Err(Error::shape("topk_accuracy", &[truth.len()], &[scores.rows()]));
    }
    let mut hits = 0usize;
    for (i, &t) in truth.iter().enumerate() {
        if t >= c {
            return Err(Error::Unknown {
                kind: "truth column",
                id: t.to_string(),
            });
        }
        let row = scores.row_slice(i);
        // t is in the top k iff fewer than k columns outrank it
        let ahead = row
            .iter()
            .enumerate()
            .filter(|&(j, &v)| v > row[t] || (v == row[t] && j < t))
            .count();
        if ahead < k {
            hits += 1;
        }
    }
    Ok(hits as f64 / truth.len() as f64)
}

#[derive(Clone, Debug, PartialEq)]
pub struct MapResult {
    pub map: f64,
    /// Average precision per evaluated column.
    pub per_pair: Vec<(usize, f64)>,
    /// Requested columns without any positive sample.
    pub excluded: Vec<usize>,
}

/// Average precision of one ranking given which items are positive.
pub fn average_precision(scores: &[f64], positive: &[bool]) -> Option<f64> {
    let order = ranking(scores);
    let total = positive.iter().filter(|&&p| p).count();
    if total == 0 {
        return None;
    }
    let mut found = 0usize;
    let mut sum = 0.0;
    for (rank, &i) in order.iter().enumerate() {
        if positive[i] {
            found += 1;
            sum += found as f64 / (rank + 1) as f64;
        }
    }
    Some(sum / total as f64)
}

/// For each column in `pairs`, rank the images by that column's score and
/// average precision over the images whose truth is that column.
pub fn mean_average_precision(scores: &Tensor, truth: &[usize], pairs: &[usize]) -> Result<MapResult> {
    if pairs.is_empty() {
        return Err(Error::invalid("mean_average_precision", "no pairs to evaluate"));
    }
    if truth.len() != scores.rows() {
        return Err(Error::shape("mean_average_precision", &[truth.len()], &[scores.rows()]));
    }
    let mut per_pair = Vec::new();
    let mut excluded = Vec::new();
    for &p in pairs {
        if p >= scores.cols() {
            return Err(Error::Unknown {
                kind: "pair column",
                id: p.to_string(),
            });
        }
        let column: Vec<f64> = (0..scores.rows()).map(|i| scores.at(i, p)).collect();
        let positive: Vec<bool> = truth.iter().map(|&t| t == p).collect();
        match average_precision(&column, &positive) {
            Some(ap) => per_pair.push((p, ap)),
            None => excluded.push(p),
        }
    }
    if per_pair.is_empty() {
        return Err(Error::invalid(
            "mean_average_precision",
            "no pair has a positive sample",
        ));
    }
    let map = per_pair.iter().map(|(_, ap)| ap).sum::<f64>() / per_pair.len() as f64;
    Ok(MapResult {
        map,
        per_pair,
        excluded,
    })
}
