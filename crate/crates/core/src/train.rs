//! Minibatch training of a [`TafeNet`] on the seen classes of a dataset.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::losses::{
    classification_loss_graph, embedding_loss_graph, total_loss_graph, LabelMatrix, LossConfig, TaskScope,
};
use crate::model::{ParamGroup, TafeNet};
use crate::optim::{Hyper, OptimizerKind, OptimizerState, ParamSpec, Schedule};
use crate::tensor::{Graph, Tensor};

/// RNG stream for minibatch order and the validation slice, kept apart from
/// the stream that initializes the model.
const SHUFFLE_STREAM: u64 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: u64,
    pub batch_size: usize,
    pub optimizer: OptimizerKind,
    pub hyper: Hyper,
    pub lr_task_embedding: f64,
    pub lr_generators: f64,
    pub lr_prediction: f64,
    /// Milestones counted in epochs.
    pub schedule: Schedule,
    /// Share of training samples held out for checkpoint selection.
    pub val_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 60,
            batch_size: 32,
            optimizer: OptimizerKind::Adam,
            hyper: Hyper::default(),
            lr_task_embedding: 1e-5,
            lr_generators: 1e-4,
            lr_prediction: 1e-4,
            schedule: Schedule::default(),
            val_fraction: 0.1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::config("train.epochs", "must be positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("train.batch_size", "must be positive"));
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return Err(Error::config("train.val_fraction", "must lie in [0, 1)"));
        }
        for (field, lr) in [
            ("train.lr_task_embedding", self.lr_task_embedding),
            ("train.lr_generators", self.lr_generators),
            ("train.lr_prediction", self.lr_prediction),
        ] {
            if !(lr.is_finite() && lr >= 0.0) {
                return Err(Error::config(field, "must be finite and >= 0"));
            }
        }
        self.schedule.validate()
    }

    pub fn group_lrs(&self) -> Vec<f64> {
        ParamGroup::ALL
            .iter()
            .map(|g| match g {
                ParamGroup::TaskEmbedding => self.lr_task_embedding,
                ParamGroup::Generators => self.lr_generators,
                ParamGroup::Prediction => self.lr_prediction,
            })
            .collect()
    }
}

/// One row of the training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: u64,
    pub cls_loss: f64,
    pub emb_loss: f64,
    pub total_loss: f64,
    /// Total loss on the validation slice, when there is one.
    pub val_loss: Option<f64>,
    /// Learning rate per parameter group during this epoch.
    pub lr: BTreeMap<String, f64>,
}

pub struct TrainOutcome {
    /// Parameters after the last completed step.
    pub net: TafeNet,
    /// Parameters with the lowest validation loss (the final ones when there
    /// is no validation slice).
    pub best: TafeNet,
    pub best_epoch: Option<u64>,
    pub optimizer: OptimizerState,
    pub log: Vec<EpochRecord>,
    /// Set when training stopped on a non-finite loss.
    pub aborted: Option<String>,
}

pub fn new_optimizer(net: &TafeNet, cfg: &TrainConfig) -> Result<OptimizerState> {
    let specs = net
        .params()
        .into_iter()
        .map(|(name, group, t)| ParamSpec {
            name,
            group: ParamGroup::ALL.iter().position(|&g| g == group).expect("listed group"),
            shape: t.shape().to_vec(),
        })
        .collect();
    OptimizerState::new(cfg.optimizer, cfg.hyper, cfg.schedule.clone(), cfg.group_lrs(), specs)
}

/// Splits training rows into (fit, validation) deterministically.
pub fn validation_split(rows: &[usize], fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(SHUFFLE_STREAM);
    let mut shuffled = rows.to_vec();
    shuffled.shuffle(&mut rng);
    let n_val = ((rows.len() as f64) * fraction).round() as usize;
    let n_val = n_val.min(rows.len().saturating_sub(1));
    let (val, fit) = shuffled.split_at(n_val);
    let (mut val, mut fit) = (val.to_vec(), fit.to_vec());
    val.sort_unstable();
    fit.sort_unstable();
    (fit, val)
}

/// Losses of one batch.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BatchLoss {
    pub cls: f64,
    pub emb: f64,
    pub total: f64,
    /// Tasks in the softmax.
    pub tasks: usize,
}

/// Tasks entering the batch softmax and each sample's positive among them.
fn batch_tasks(dataset: &Dataset, rows: &[usize], scope: TaskScope) -> Result<(Vec<usize>, LabelMatrix)> {
    let labels = dataset.store.labels();
    let tasks: Vec<usize> = match scope {
        TaskScope::WholeDataset => dataset.seen().to_vec(),
        TaskScope::Minibatch => {
            let mut t: Vec<usize> = rows.iter().map(|&i| labels[i]).collect();
            t.sort_unstable();
            t.dedup();
            t
        }
    };
    let positives = rows
        .iter()
        .map(|&i| {
            tasks.iter().position(|&c| c == labels[i]).ok_or_else(|| {
                Error::Split(format!(
                    "training sample of `{}` is not in a seen class",
                    dataset.tasks.name(labels[i])
                ))
            })
        })
        .collect::<Result<Vec<usize>>>()?;
    let labels = LabelMatrix::from_indices(tasks.len(), positives)?;
    Ok((tasks, labels))
}

/// Forward (and optionally backward) over one batch.
fn run_batch(
    net: &TafeNet,
    dataset: &Dataset,
    rows: &[usize],
    loss_cfg: &LossConfig,
    with_grads: bool,
) -> Result<(BatchLoss, Option<Vec<Tensor>>)> {
    let (tasks, labels) = batch_tasks(dataset, rows, loss_cfg.task_scope)?;
    let mut g = Graph::new();
    let bound = net.bind(&mut g, with_grads);
    let x = g.constant(dataset.store.gather(rows));
    let t = g.constant(dataset.tasks.gather(&tasks));
    let out = bound.pair_forward(&mut g, x, t)?;
    let cls = classification_loss_graph(&mut g, out.logits, &labels)?;
    let emb = embedding_loss_graph(&mut g, out.tafes, out.embeddings, &labels)?;
    let total = total_loss_graph(&mut g, cls, emb, loss_cfg)?;
    let loss = BatchLoss {
        cls: g.value(cls).item(),
        emb: g.value(emb).item(),
        total: g.value(total).item(),
        tasks: tasks.len(),
    };
    if !with_grads || !loss.total.is_finite() {
        return Ok((loss, None));
    }
    let mut grads = g.backward(total)?;
    let grads = bound
        .vars()
        .iter()
        .map(|&v| grads.take(v).unwrap_or_else(|| Tensor::zeros(g.shape(v))))
        .collect();
    Ok((loss, Some(grads)))
}

/// Losses of `rows` as a single batch, without gradients.
pub fn batch_loss(net: &TafeNet, dataset: &Dataset, rows: &[usize], loss_cfg: &LossConfig) -> Result<BatchLoss> {
    Ok(run_batch(net, dataset, rows, loss_cfg, false)?.0)
}

/// Total loss over `rows`, evaluated in batches with the training task scope.
pub fn evaluate_loss(
    net: &TafeNet,
    dataset: &Dataset,
    rows: &[usize],
    loss_cfg: &LossConfig,
    batch_size: usize,
) -> Result<f64> {
    let mut sum = 0.0;
    for chunk in rows.chunks(batch_size.max(1)) {
        let (loss, _) = run_batch(net, dataset, chunk, loss_cfg, false)?;
        sum += loss.total * chunk.len() as f64;
    }
    Ok(sum / rows.len() as f64)
}

/// Trains from `net` (and optionally a resumed optimizer) for `cfg.epochs`.
///
/// `on_epoch` sees each log row as soon as its epoch ends. A non-finite batch
/// loss stops training before the offending update is applied.
pub fn train(
    mut net: TafeNet,
    dataset: &Dataset,
    cfg: &TrainConfig,
    loss_cfg: &LossConfig,
    seed: u64,
    resume: Option<OptimizerState>,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    loss_cfg.validate()?;
    let mut opt = match resume {
        Some(o) => o,
        None => new_optimizer(&net, cfg)?,
    };
    let (fit, val) = validation_split(dataset.train_rows(), cfg.val_fraction, seed);
    if fit.is_empty() {
        return Err(Error::Split("no training samples".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(SHUFFLE_STREAM + 1);

    let mut log = Vec::with_capacity(cfg.epochs as usize);
    let mut best: Option<(f64, u64, TafeNet)> = None;
    let mut aborted = None;
    let first_epoch = opt.step_count() / fit.len().div_ceil(cfg.batch_size) as u64;
    'epochs: for epoch in first_epoch..first_epoch + cfg.epochs {
        opt.apply_schedule(epoch)?;
        let mut order = fit.clone();
        order.shuffle(&mut rng);
        let (mut cls, mut emb, mut total) = (0.0, 0.0, 0.0);
        for batch in order.chunks(cfg.batch_size) {
            let (loss, grads) = run_batch(&net, dataset, batch, loss_cfg, true)?;
            let Some(grads) = grads else {
                aborted = Some(format!(
                    "non-finite loss in epoch {epoch} (cls {}, emb {})",
                    loss.cls, loss.emb
                ));
                break 'epochs;
            };
            let w = batch.len() as f64;
            cls += loss.cls * w;
            emb += loss.emb * w;
            total += loss.total * w;
            // the optimizer checks every gradient before touching any parameter
            if let Err(e) = opt.step(&mut net.params_mut(), &grads) {
                aborted = Some(e.to_string());
                break 'epochs;
            }
        }
        let n = fit.len() as f64;
        let val_loss = if val.is_empty() {
            None
        } else {
            Some(evaluate_loss(&net, dataset, &val, loss_cfg, cfg.batch_size)?)
        };
        let lr = ParamGroup::ALL
            .iter()
            .enumerate()
            .map(|(i, g)| (g.name().to_string(), opt.lr(i)))
            .collect();
        let record = EpochRecord {
            epoch,
            cls_loss: cls / n,
            emb_loss: emb / n,
            total_loss: total / n,
            val_loss,
            lr,
        };
        on_epoch(&record);
        log.push(record);
        if let Some(v) = val_loss.filter(|v| v.is_finite()) {
            if best.as_ref().is_none_or(|b| v < b.0) {
                best = Some((v, epoch, net.clone()));
            }
        }
    }
    let (best_epoch, best) = match best {
        Some((_, epoch, b)) => (Some(epoch), b),
        None => (None, net.clone()),
    };
    Ok(TrainOutcome {
        best,
        net,
        best_epoch,
        optimizer: opt,
        log,
        aborted,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, SyntheticConfig};
    use crate::model::ModelConfig;

    fn dataset() -> Dataset {
        Dataset::from_synthetic(
            generate_synthetic(&SyntheticConfig {
                n_classes_seen: 6,
                n_classes_unseen: 2,
                samples_per_class: 12,
                d_in: 8,
                n_groups: 2,
                ..SyntheticConfig::default()
            })
            .unwrap(),
        )
        .unwrap()
    }

    fn net(ds: &Dataset, seed: u64) -> TafeNet {
        let cfg = ModelConfig::with_width(8, ds.tasks.dim(), ds.seen().len(), 12);
        TafeNet::new(cfg, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
    }

    fn quick() -> TrainConfig {
        TrainConfig {
            epochs: 4,
            batch_size: 8,
            lr_task_embedding: 1e-3,
            lr_generators: 1e-2,
            lr_prediction: 1e-2,
            schedule: Schedule::constant(),
            ..TrainConfig::default()
        }
    }

    #[test]
    fn loss_decreases_and_log_is_complete() {
        let ds = dataset();
        let mut seen = 0;
        let out = train(net(&ds, 3), &ds, &quick(), &LossConfig::default(), 3, None, |_| {
            seen += 1
        })
        .unwrap();
        assert_eq!(seen, 4);
        assert_eq!(out.log.len(), 4);
        assert!(out.aborted.is_none());
        assert!(out.log[3].total_loss < out.log[0].total_loss, "{:?}", out.log);
        assert_eq!(out.log[0].lr["generators"], 1e-2);
        assert!(out.best_epoch.is_some());
    }

    #[test]
    fn deterministic_given_seed() {
        let ds = dataset();
        let a = train(net(&ds, 5), &ds, &quick(), &LossConfig::default(), 5, None, |_| {}).unwrap();
        let b = train(net(&ds, 5), &ds, &quick(), &LossConfig::default(), 5, None, |_| {}).unwrap();
        assert_eq!(a.net, b.net);
        assert_eq!(a.log, b.log);
    }

    #[test]
    fn non_finite_loss_keeps_last_good_parameters() {
        let ds = dataset();
        let mut bad = net(&ds, 1);
        bad.classifier_mut().bias.data_mut()[0] = f64::NAN;
        let before = bad.clone();
        let out = train(bad, &ds, &quick(), &LossConfig::default(), 1, None, |_| {}).unwrap();
        assert!(out.aborted.is_some());
        assert!(out.log.is_empty());
        assert_eq!(out.net.params().len(), before.params().len());
        assert!(out.net.classifier().bias.data()[0].is_nan());
    }

    #[test]
    fn whole_dataset_scope_uses_every_seen_class() {
        let ds = dataset();
        let rows = &ds.train_rows()[..3];
        let (tasks, labels) = batch_tasks(&ds, rows, TaskScope::WholeDataset).unwrap();
        assert_eq!(tasks, ds.seen());
        assert_eq!(labels.num_tasks(), 6);
        let (tasks, _) = batch_tasks(&ds, rows, TaskScope::Minibatch).unwrap();
        assert!(tasks.len() <= 3);
    }

    #[test]
    fn validation_split_is_seeded_and_disjoint() {
        let rows: Vec<usize> = (0..50).collect();
        let (fit, val) = validation_split(&rows, 0.1, 9);
        assert_eq!(val.len(), 5);
        assert!(val.iter().all(|v| !fit.contains(v)));
        assert_eq!(validation_split(&rows, 0.1, 9), (fit, val));
    }
}
