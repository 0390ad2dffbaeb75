//! Calibrated multi-class cross-entropy over per-task logits, the hinged
//! cosine embedding loss, and their weighted sum.
//!
//! Each loss exists in a plain form over tensors and a graph form used
//! during training; both compute the same quantity.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{cosine_similarity, Graph, Tensor, Var};

/// One-hot task assignments `y ∈ {0,1}^{N x T}` with exactly one positive per row.
#[derive(Clone, Debug, PartialEq)]
pub struct LabelMatrix {
    num_tasks: usize,
    positives: Vec<usize>,
}

impl LabelMatrix {
    pub fn from_indices(num_tasks: usize, positives: Vec<usize>) -> Result<Self> {
        if num_tasks == 0 || positives.is_empty() {
            return Err(Error::invalid("label_matrix", "needs at least one row and one task"));
        }
        if let Some((row, &t)) = positives.iter().enumerate().find(|(_, &t)| t >= num_tasks) {
            return Err(Error::invalid(
                "label_matrix",
                format!("row {row}: task {t} out of range for {num_tasks} tasks"),
            ));
        }
        Ok(LabelMatrix { num_tasks, positives })
    }

    /// From a dense 0/1 matrix; every row must hold exactly one 1.
    pub fn from_dense(y: &Tensor) -> Result<Self> {
        let (n, t) = (y.rows(), y.cols());
        let mut positives = Vec::with_capacity(n);
        for r in 0..n {
            let row = y.row_slice(r);
            if row.iter().any(|&v| v != 0.0 && v != 1.0) {
                return Err(Error::invalid(
                    "label_matrix",
                    format!("row {r} has entries outside {{0, 1}}"),
                ));
            }
            let ones: Vec<usize> = row
                .iter()
                .enumerate()
                .filter(|(_, &v)| v == 1.0)
                .map(|(i, _)| i)
                .collect();
            match ones.as_slice() {
                [one] => positives.push(*one),
                [] => return Err(Error::invalid("label_matrix", format!("row {r} has no positive task"))),
                _ => {
                    return Err(Error::invalid(
                        "label_matrix",
                        format!("row {r} has several positive tasks"),
                    ))
                }
            }
        }
        Self::from_indices(t, positives)
    }

    pub fn rows(&self) -> usize {
        self.positives.len()
    }

    pub fn num_tasks(&self) -> usize {
        self.num_tasks
    }

    pub fn positive(&self, row: usize) -> usize {
        self.positives[row]
    }

    pub fn get(&self, row: usize, task: usize) -> f64 {
        if self.positives[row] == task {
            1.0
        } else {
            0.0
        }
    }

    pub fn to_dense(&self) -> Tensor {
        let mut y = Tensor::zeros(&[self.rows(), self.num_tasks]);
        for (r, &t) in self.positives.iter().enumerate() {
            y.data_mut()[r * self.num_tasks + t] = 1.0;
        }
        y
    }

    /// The labels flattened in pair order (`i·T + t`) as an `(N·T) x 1` column.
    pub fn pair_column(&self) -> Tensor {
        let n = self.rows() * self.num_tasks;
        self.to_dense().reshape(&[n, 1]).expect("same length")
    }
}

/// Which tasks enter the softmax of the classification loss.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskScope {
    WholeDataset,
    #[default]
    Minibatch,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossConfig {
    pub beta: f64,
    pub task_scope: TaskScope,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            beta: 0.1,
            task_scope: TaskScope::Minibatch,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.beta.is_finite() || self.beta < 0.0 {
            return Err(Error::config(
                "loss.beta",
                format!("must be finite and >= 0, got {}", self.beta),
            ));
        }
        Ok(())
    }
}

fn check_logits(logits: &[usize], labels: &LabelMatrix) -> Result<()> {
    if logits.len() != 2 || logits[0] != labels.rows() || logits[1] != labels.num_tasks() {
        return Err(Error::shape(
            "classification_loss",
            logits,
            &[labels.rows(), labels.num_tasks()],
        ));
    }
    Ok(())
}

/// `-(1/N) Σ_i log softmax(logits_i)[true task]`.
pub fn classification_loss(logits: &Tensor, labels: &LabelMatrix) -> Result<f64> {
    check_logits(logits.shape(), labels)?;
    let ls = logits.log_softmax_rows()?;
    let total: f64 = (0..labels.rows()).map(|i| ls.at(i, labels.positive(i))).sum();
    Ok(-total / labels.rows() as f64)
}

pub fn classification_loss_graph(g: &mut Graph, logits: Var, labels: &LabelMatrix) -> Result<Var> {
    check_logits(g.shape(logits), labels)?;
    let ls = g.log_softmax_rows(logits)?;
    let y = g.constant(labels.to_dense());
    let picked = g.mul(ls, y)?;
    let s = g.sum(picked);
    Ok(g.scale(s, -1.0 / labels.rows() as f64))
}

/// `max(cos(p, q), 0)`.
pub fn hinged_cosine(p: &[f64], q: &[f64]) -> Result<f64> {
    Ok(cosine_similarity(p, q)?.max(0.0))
}

fn check_embedding_shapes(tafes: &[usize], embeddings: &[usize], labels: &LabelMatrix) -> Result<()> {
    let (n, t) = (labels.rows(), labels.num_tasks());
    if tafes.len() != 2 || embeddings.len() != 2 || tafes[0] != n * t || embeddings[0] != t || tafes[1] != embeddings[1]
    {
        return Err(Error::shape("embedding_loss", tafes, embeddings));
    }
    Ok(())
}

/// `(1/NT) Σ_i Σ_t (φ(TAFE(x_i; θ_t), e_t) - y_it)²` with `φ` the hinged cosine.
///
/// `tafes` is `(N·T) x d` in pair order `i·T + t`; `embeddings` is `T x d`.
pub fn embedding_loss(tafes: &Tensor, embeddings: &Tensor, labels: &LabelMatrix) -> Result<f64> {
    check_embedding_shapes(tafes.shape(), embeddings.shape(), labels)?;
    let (n, t) = (labels.rows(), labels.num_tasks());
    let mut total = 0.0;
    for i in 0..n {
        for task in 0..t {
            let phi = hinged_cosine(tafes.row_slice(i * t + task), embeddings.row_slice(task))?;
            total += (phi - labels.get(i, task)).powi(2);
        }
    }
    Ok(total / (n * t) as f64)
}

pub fn embedding_loss_graph(g: &mut Graph, tafes: Var, embeddings: Var, labels: &LabelMatrix) -> Result<Var> {
    check_embedding_shapes(g.shape(tafes), g.shape(embeddings), labels)?;
    let (n, t) = (labels.rows(), labels.num_tasks());
    let task_idx: Vec<usize> = (0..n).flat_map(|_| 0..t).collect();
    let e = g.gather_rows(embeddings, &task_idx)?;
    let cos = g.row_cosine(tafes, e)?;
    let phi = g.relu(cos);
    let y = g.constant(labels.pair_column());
    let gap = g.sub(phi, y)?;
    let sq = g.square(gap);
    Ok(g.mean(sq))
}

/// `cls + β · emb`.
pub fn total_loss(cls: f64, emb: f64, cfg: &LossConfig) -> Result<f64> {
    if !cls.is_finite() {
        return Err(Error::NonFinite("classification loss".into()));
    }
    if !emb.is_finite() {
        return Err(Error::NonFinite("embedding loss".into()));
    }
    cfg.validate()?;
    Ok(cls + cfg.beta * emb)
}

pub fn total_loss_graph(g: &mut Graph, cls: Var, emb: Var, cfg: &LossConfig) -> Result<Var> {
    cfg.validate()?;
    let weighted = g.scale(emb, cfg.beta);
    g.add(cls, weighted)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::grad_check;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn uniform_logits_give_ln_t() {
        let logits = Tensor::full(&[3, 4], 0.7);
        let labels = LabelMatrix::from_indices(4, vec![0, 3, 1]).unwrap();
        let l = classification_loss(&logits, &labels).unwrap();
        assert!((l - 4f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn confident_true_task_gives_near_zero() {
        let logits = Tensor::from_rows(&[vec![50.0, 0.0, 0.0]]).unwrap();
        let labels = LabelMatrix::from_indices(3, vec![0]).unwrap();
        assert!(classification_loss(&logits, &labels).unwrap() < 1e-12);
    }

    #[test]
    fn two_by_two_hand_case() {
        let logits = Tensor::eye(2);
        let labels = LabelMatrix::from_dense(&Tensor::eye(2)).unwrap();
        let expected = (1.0 + (-1f64).exp()).ln();
        assert!((classification_loss(&logits, &labels).unwrap() - expected).abs() < 1e-12);
        assert!((expected - 0.31326).abs() < 1e-5);
    }

    #[test]
    fn label_rows_validated() {
        let y = Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 0.0]]).unwrap();
        assert!(LabelMatrix::from_dense(&y).is_err());
        let y = Tensor::from_rows(&[vec![1.0, 1.0]]).unwrap();
        assert!(LabelMatrix::from_dense(&y).is_err());
        assert!(LabelMatrix::from_indices(2, vec![2]).is_err());
    }

    #[test]
    fn hinge_cases() {
        assert!((hinged_cosine(&[0.3, 2.0], &[0.3, 2.0]).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(hinged_cosine(&[1.0, 0.0], &[-1.0, 0.0]).unwrap(), 0.0);
        assert!((hinged_cosine(&[1.0, 0.0], &[1.0, 1.0]).unwrap() - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn perfect_embedding_has_zero_loss() {
        // positives coincide with their task embedding, negatives are orthogonal
        let e = Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let tafes = Tensor::from_rows(&[vec![2.0, 0.0], vec![3.0, 0.0], vec![0.0, 1.0], vec![0.0, 5.0]]).unwrap();
        let labels = LabelMatrix::from_indices(2, vec![0, 1]).unwrap();
        assert_eq!(embedding_loss(&tafes, &e, &labels).unwrap(), 0.0);
    }

    #[test]
    fn collapsed_embedding_gives_one_over_t() {
        let t = 3;
        let e = Tensor::full(&[t, 2], 1.0);
        let tafes = Tensor::full(&[2 * t, 2], -1.0);
        let labels = LabelMatrix::from_indices(t, vec![0, 2]).unwrap();
        let l = embedding_loss(&tafes, &e, &labels).unwrap();
        assert!((l - 1.0 / t as f64).abs() < 1e-15);
    }

    #[test]
    fn embedding_loss_matches_direct_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (n, t, d) = (2, 2, 3);
        let tafes = Tensor::uniform(&[n * t, d], 1.0, &mut rng);
        let e = Tensor::uniform(&[t, d], 1.0, &mut rng);
        let labels = LabelMatrix::from_indices(t, vec![1, 0]).unwrap();
        let mut direct = 0.0;
        for i in 0..n {
            for k in 0..t {
                let p = tafes.row_slice(i * t + k);
                let q = e.row_slice(k);
                let dotp: f64 = p.iter().zip(q).map(|(a, b)| a * b).sum();
                let np = p.iter().map(|a| a * a).sum::<f64>().sqrt();
                let nq = q.iter().map(|a| a * a).sum::<f64>().sqrt();
                let phi = (dotp / (np * nq)).max(0.0);
                let y = if labels.positive(i) == k { 1.0 } else { 0.0 };
                direct += (phi - y) * (phi - y);
            }
        }
        direct /= (n * t) as f64;
        assert!((embedding_loss(&tafes, &e, &labels).unwrap() - direct).abs() < 1e-15);

        let mut g = Graph::new();
        let tv = g.constant(tafes.clone());
        let ev = g.constant(e.clone());
        let out = embedding_loss_graph(&mut g, tv, ev, &labels).unwrap();
        assert!((g.value(out).item() - direct).abs() < 1e-15);
    }

    #[test]
    fn embedding_shape_mismatch_rejected() {
        let labels = LabelMatrix::from_indices(2, vec![0]).unwrap();
        let r = embedding_loss(&Tensor::zeros(&[2, 3]), &Tensor::zeros(&[2, 4]), &labels);
        assert!(r.is_err());
    }

    #[test]
    fn total_loss_cases() {
        let cfg = LossConfig::default();
        assert!((total_loss(1.0, 0.5, &cfg).unwrap() - 1.05).abs() < 1e-15);
        assert_eq!(total_loss(0.8, 0.0, &cfg).unwrap(), 0.8);
        let ablation = LossConfig { beta: 0.0, ..cfg };
        assert_eq!(total_loss(0.8, 0.3, &ablation).unwrap(), 0.8);
        match total_loss(f64::NAN, 0.0, &cfg) {
            Err(Error::NonFinite(what)) => assert!(what.contains("classification")),
            other => panic!("{other:?}"),
        }
        match total_loss(0.0, f64::INFINITY, &cfg) {
            Err(Error::NonFinite(what)) => assert!(what.contains("embedding")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn graph_forms_match_plain_forms() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let logits = Tensor::uniform(&[4, 3], 2.0, &mut rng);
        let labels = LabelMatrix::from_indices(3, vec![0, 2, 1, 1]).unwrap();
        let mut g = Graph::new();
        let lv = g.constant(logits.clone());
        let out = classification_loss_graph(&mut g, lv, &labels).unwrap();
        let plain = classification_loss(&logits, &labels).unwrap();
        assert!((g.value(out).item() - plain).abs() < 1e-14);
    }

    #[test]
    fn classification_gradient_checks() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let logits = Tensor::uniform(&[4, 3], 2.0, &mut rng);
        let labels = LabelMatrix::from_indices(3, vec![2, 0, 1, 0]).unwrap();
        let report = grad_check(|g, p| classification_loss_graph(g, p[0], &labels), &[logits], 1e-5).unwrap();
        assert!(report.max_rel_error < 1e-6, "{report:?}");
    }
}
