//! Few-shot episodes: `n` exemplars per novel class become that class's task
//! description, and the model scores the remaining samples against base and
//! novel classes together.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{encode_exemplars, Dataset};
use crate::error::{Error, Result};
use crate::model::{TafeNet, TaskKind};
use crate::tensor::Tensor;

use super::{topk_accuracy, EvalReport, FewShotSummary, Protocol};

const TOP_K: usize = 5;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Episode {
    pub n: usize,
    pub trial_seed: u64,
    pub base: Vec<usize>,
    pub novel: Vec<usize>,
    /// Exemplar rows per novel class, in `novel` order.
    pub exemplars: Vec<Vec<usize>>,
    /// Rows to classify: the non-exemplar novel samples and the base test samples.
    pub pool: Vec<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FewShotTrial {
    pub trial_seed: u64,
    pub top5_novel: f64,
    pub top5_all: f64,
}

/// Base and novel classes come from the split's few-shot partition, or else
/// from its seen and unseen lists.
pub fn build_fewshot_episode(dataset: &Dataset, n: usize, trial_seed: u64) -> Result<Episode> {
    if n == 0 {
        return Err(Error::invalid("build_fewshot_episode", "n must be positive"));
    }
    let (base, novel) = match dataset.fewshot() {
        Some((b, nv)) => (b.to_vec(), nv.to_vec()),
        None => (dataset.seen().to_vec(), dataset.unseen().to_vec()),
    };
    if novel.is_empty() {
        return Err(Error::Split("few-shot evaluation needs novel classes".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(trial_seed);
    let labels = dataset.store.labels();
    let mut exemplars = Vec::with_capacity(novel.len());
    let mut pool = Vec::new();
    for &c in &novel {
        let mut rows: Vec<usize> = dataset
            .test_rows()
            .iter()
            .copied()
            .filter(|&i| labels[i] == c)
            .collect();
        if rows.len() <= n {
            return Err(Error::invalid(
                "build_fewshot_episode",
                format!(
                    "class `{}` has {} samples, needs more than {n}",
                    dataset.tasks.name(c),
                    rows.len()
                ),
            ));
        }
        rows.shuffle(&mut rng);
        let (ex, rest) = rows.split_at(n);
        let mut ex = ex.to_vec();
        ex.sort_unstable();
        exemplars.push(ex);
        pool.extend_from_slice(rest);
    }
    pool.extend(dataset.test_rows_of(&base));
    pool.sort_unstable();
    Ok(Episode {
        n,
        trial_seed,
        base,
        novel,
        exemplars,
        pool,
    })
}

/// Description matrix for an episode: stored base descriptions, then the
/// exemplar mean of each novel class.
fn episode_tasks(dataset: &Dataset, episode: &Episode) -> Result<Tensor> {
    if dataset.tasks.kind() != TaskKind::Exemplar {
        return Err(Error::invalid(
            "fewshot_eval",
            "task table must hold exemplar descriptions",
        ));
    }
    let d = dataset.tasks.dim();
    let mut data = dataset.tasks.gather(&episode.base).into_data();
    for ex in &episode.exemplars {
        let rows: Vec<&[f64]> = ex.iter().map(|&i| dataset.store.feature(i)).collect();
        data.extend(encode_exemplars(&rows)?.values());
    }
    Tensor::new(&[episode.base.len() + episode.novel.len(), d], data)
}

/// Top-5 accuracy over novel-truth samples and over the whole pool, per
/// episode and averaged.
pub fn fewshot_eval(net: &TafeNet, dataset: &Dataset, episodes: &[Episode]) -> Result<EvalReport> {
    let Some(first) = episodes.first() else {
        return Err(Error::invalid("fewshot_eval", "no episodes"));
    };
    if episodes.iter().any(|e| e.n != first.n) {
        return Err(Error::invalid("fewshot_eval", "episodes differ in n"));
    }
    let labels = dataset.store.labels();
    let mut trials = Vec::with_capacity(episodes.len());
    let mut samples = 0;
    for ep in episodes {
        let classes: Vec<usize> = ep.base.iter().chain(&ep.novel).copied().collect();
        let tasks = episode_tasks(dataset, ep)?;
        let scores = net.score_matrix(&dataset.store.gather(&ep.pool), &tasks)?;
        let truth: Vec<usize> = ep
            .pool
            .iter()
            .map(|&i| {
                classes
                    .iter()
                    .position(|&c| c == labels[i])
                    .expect("pool rows are base or novel")
            })
            .collect();
        let k = TOP_K.min(classes.len());
        let novel_rows: Vec<usize> = (0..truth.len()).filter(|&r| truth[r] >= ep.base.len()).collect();
        let novel_scores = Tensor::new(
            &[novel_rows.len(), classes.len()],
            novel_rows.iter().flat_map(|&r| scores.row_slice(r).to_vec()).collect(),
        )?;
        let novel_truth: Vec<usize> = novel_rows.iter().map(|&r| truth[r]).collect();
        trials.push(FewShotTrial {
            trial_seed: ep.trial_seed,
            top5_novel: topk_accuracy(&novel_scores, &novel_truth, k)?,
            top5_all: topk_accuracy(&scores, &truth, k)?,
        });
        samples += ep.pool.len();
    }
    let mean = |f: fn(&FewShotTrial) -> f64| trials.iter().map(f).sum::<f64>() / trials.len() as f64;
    let mut report = EvalReport::empty(Protocol::FewShot, samples);
    report.fewshot = Some(FewShotSummary {
        n: first.n,
        top5_novel: mean(|t| t.top5_novel),
        top5_all: mean(|t| t.top5_all),
        trials,
    });
    Ok(report)
}

/// Rebuilds a dataset's task table from exemplars: each base class is
/// described by the mean of its training features. Novel classes get a zero
/// placeholder, since their descriptions only exist per episode.
pub fn exemplar_dataset(dataset: &Dataset) -> Result<Dataset> {
    let (base, _) = match dataset.fewshot() {
        Some((b, nv)) => (b.to_vec(), nv.to_vec()),
        None => (dataset.seen().to_vec(), dataset.unseen().to_vec()),
    };
    let labels = dataset.store.labels();
    let d = dataset.store.dim();
    let mut data = Vec::with_capacity(dataset.tasks.len() * d);
    for c in 0..dataset.tasks.len() {
        if base.contains(&c) {
            let rows: Vec<&[f64]> = dataset
                .train_rows()
                .iter()
                .filter(|&&i| labels[i] == c)
                .map(|&i| dataset.store.feature(i))
                .collect();
            let mean = encode_exemplars(&rows).map_err(|_| {
                Error::invalid(
                    "exemplar_dataset",
                    format!("base class `{}` has no training samples", dataset.tasks.name(c)),
                )
            })?;
            data.extend(mean.values());
        } else {
            data.extend(std::iter::repeat_n(0.0, d));
        }
    }
    let tasks = crate::data::TaskTable::new(
        TaskKind::Exemplar,
        dataset.tasks.names().to_vec(),
        Tensor::new(&[dataset.tasks.len(), d], data)?,
        dataset.tasks.groups().map(<[usize]>::to_vec),
    )?;
    Dataset::new(dataset.store.clone(), tasks, dataset.split.clone())
}
