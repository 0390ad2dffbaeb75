//! The work behind each command-line subcommand.
//!
//! Output directory layout:
//!
//! - `train`: `config.toml` (resolved), `train_log.jsonl` (one [`EpochRecord`]
//!   per line), `last.ckpt`, `best.ckpt`
//! - `eval`: `eval_<protocol>.json` per protocol
//! - `embed`: `embeddings.tsv`
//! - `gen-synth`: `features.bin`, `tasks.json`, `split.json`

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
use crate::config::RunConfig;
use crate::data::{generate_synthetic, Dataset, Precision, SyntheticConfig};
use crate::error::{Error, Result};
use crate::eval::{
    build_fewshot_episode, composition_eval, dump_embeddings, fewshot_eval, gzsl_eval, shuffle_eval, zsl_eval,
    EmbeddingDump, EvalReport, Protocol,
};
use crate::model::TafeNet;
use crate::train::{train, EpochRecord};

pub const TRAIN_LOG: &str = "train_log.jsonl";
pub const LAST_CHECKPOINT: &str = "last.ckpt";
pub const BEST_CHECKPOINT: &str = "best.ckpt";
pub const EMBEDDINGS: &str = "embeddings.tsv";

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))
}

#[derive(Debug)]
pub struct TrainSummary {
    pub log: Vec<EpochRecord>,
    pub best_epoch: Option<u64>,
    pub last: PathBuf,
    pub best: PathBuf,
}

/// Trains from scratch and writes the log and checkpoints under `cfg.out`.
///
/// On a non-finite loss the parameters from the last good step are saved as
/// both checkpoints and the error is returned.
pub fn cmd_train(cfg: &RunConfig) -> Result<TrainSummary> {
    cfg.validate()?;
    let seed = cfg.seed()?;
    let dataset = cfg.dataset()?;
    let model_cfg = cfg.model_config(&dataset);
    model_cfg.validate()?;
    create_dir(&cfg.out)?;
    fs::write(cfg.out.join("config.toml"), cfg.to_toml()).map_err(|e| Error::io("writing config.toml", e))?;

    let net = TafeNet::new(model_cfg, &mut ChaCha8Rng::seed_from_u64(seed))?;
    let log_path = cfg.out.join(TRAIN_LOG);
    let mut log_file =
        fs::File::create(&log_path).map_err(|e| Error::io(format!("creating {}", log_path.display()), e))?;
    let mut write_err = None;
    let outcome = train(net, &dataset, &cfg.train, &cfg.loss, seed, None, |r| {
        let line = serde_json::to_string(r).expect("serializable");
        if let Err(e) = writeln!(log_file, "{line}") {
            write_err.get_or_insert(e);
        }
    })?;
    if let Some(e) = write_err {
        return Err(Error::io(format!("writing {}", log_path.display()), e));
    }
    let last_epoch = outcome.log.last().map(|r| r.epoch);
    let last = cfg.out.join(LAST_CHECKPOINT);
    let best = cfg.out.join(BEST_CHECKPOINT);
    save_checkpoint(&last, &outcome.net, Some(&outcome.optimizer), last_epoch, seed)?;
    save_checkpoint(&best, &outcome.best, None, outcome.best_epoch.or(last_epoch), seed)?;
    if let Some(reason) = outcome.aborted {
        return Err(Error::NonFinite(format!(
            "training stopped: {reason}; last good parameters saved to {}",
            last.display()
        )));
    }
    Ok(TrainSummary {
        log: outcome.log,
        best_epoch: outcome.best_epoch,
        last,
        best,
    })
}

/// Reads a training log written by [`cmd_train`].
pub fn read_train_log(path: impl AsRef<Path>) -> Result<Vec<EpochRecord>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            serde_json::from_str(l).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                msg: e.to_string(),
            })
        })
        .collect()
}

/// Loads the dataset and a checkpoint whose architecture matches the config.
pub fn load_for_eval(cfg: &RunConfig, checkpoint: &Path) -> Result<(Dataset, Checkpoint)> {
    cfg.validate()?;
    let dataset = cfg.dataset()?;
    let ckpt = load_checkpoint(checkpoint)?;
    let expected = cfg.model_config(&dataset);
    if ckpt.manifest.model != expected {
        return Err(Error::ArchitectureMismatch {
            checkpoint: serde_json::to_string_pretty(&ckpt.manifest.model).expect("serializable"),
            config: serde_json::to_string_pretty(&expected).expect("serializable"),
        });
    }
    Ok((dataset, ckpt))
}

pub fn run_protocol(net: &TafeNet, dataset: &Dataset, protocol: Protocol, cfg: &RunConfig) -> Result<EvalReport> {
    let seed = cfg.seed()?;
    let report = match protocol {
        Protocol::Zsl => zsl_eval(net, dataset)?,
        Protocol::Gzsl => gzsl_eval(net, dataset)?,
        Protocol::Composition => composition_eval(net, dataset)?,
        Protocol::FewShot => {
            let episodes = (0..cfg.eval.fewshot_trials)
                .map(|t| build_fewshot_episode(dataset, cfg.eval.fewshot_n, seed.wrapping_add(t)))
                .collect::<Result<Vec<_>>>()?;
            fewshot_eval(net, dataset, &episodes)?
        }
        Protocol::Shuffle => shuffle_eval(net, dataset, cfg.eval.shuffle_repeats, seed)?,
    };
    report.validate()?;
    Ok(report)
}

/// Runs every configured protocol and writes one report file per protocol.
pub fn cmd_eval(cfg: &RunConfig, checkpoint: &Path) -> Result<Vec<EvalReport>> {
    let (dataset, ckpt) = load_for_eval(cfg, checkpoint)?;
    if cfg.protocols.is_empty() {
        return Err(Error::config("protocols", "nothing to evaluate"));
    }
    create_dir(&cfg.out)?;
    let mut reports = Vec::with_capacity(cfg.protocols.len());
    for &p in &cfg.protocols {
        let report = run_protocol(&ckpt.net, &dataset, p, cfg)?;
        report.save(cfg.out.join(format!("eval_{}.json", p.name())))?;
        reports.push(report);
    }
    Ok(reports)
}

/// Exports TAFEs of the first `eval.embed_samples` test samples under the
/// requested tasks, plus the task embeddings.
pub fn cmd_embed(cfg: &RunConfig, checkpoint: &Path) -> Result<(PathBuf, EmbeddingDump)> {
    let (dataset, ckpt) = load_for_eval(cfg, checkpoint)?;
    let classes = if cfg.eval.embed_tasks.is_empty() {
        (0..dataset.tasks.len()).collect()
    } else {
        cfg.eval
            .embed_tasks
            .iter()
            .map(|name| {
                dataset.tasks.index_of(name).map_err(|_| Error::Unknown {
                    kind: "task",
                    id: name.clone(),
                })
            })
            .collect::<Result<Vec<usize>>>()?
    };
    if cfg.eval.embed_samples == 0 {
        return Err(Error::config("eval.embed_samples", "must be positive"));
    }
    let rows: Vec<usize> = dataset
        .test_rows()
        .iter()
        .copied()
        .take(cfg.eval.embed_samples)
        .collect();
    create_dir(&cfg.out)?;
    let path = cfg.out.join(EMBEDDINGS);
    let dump = dump_embeddings(&ckpt.net, &dataset, &rows, &classes, &path)?;
    Ok((path, dump))
}

pub struct SyntheticFiles {
    pub features: PathBuf,
    pub tasks: PathBuf,
    pub split: PathBuf,
}

/// Writes a generated dataset as a 32-bit feature file, task file and split file.
pub fn cmd_gensynth(cfg: &SyntheticConfig, out: &Path) -> Result<SyntheticFiles> {
    let data = generate_synthetic(cfg)?;
    create_dir(out)?;
    let files = SyntheticFiles {
        features: out.join("features.bin"),
        tasks: out.join("tasks.json"),
        split: out.join("split.json"),
    };
    data.store.save(&files.features, Precision::F32)?;
    data.tasks.save(&files.tasks)?;
    data.split.save(&files.split)?;
    Ok(files)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Dataset;

    fn tiny(out: &Path) -> RunConfig {
        let mut cfg = RunConfig {
            seed: Some(4),
            out: out.to_path_buf(),
            synthetic: Some(SyntheticConfig {
                n_classes_seen: 6,
                n_classes_unseen: 3,
                samples_per_class: 10,
                d_in: 8,
                n_groups: 3,
                ..SyntheticConfig::default()
            }),
            ..RunConfig::default()
        };
        cfg.model.feature_widths = vec![10, 10];
        cfg.model.task_hidden = 10;
        cfg.train.epochs = 2;
        cfg
    }

    #[test]
    fn train_eval_embed_pipeline() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = tiny(dir.path());
        let summary = cmd_train(&cfg).unwrap();
        assert_eq!(read_train_log(dir.path().join(TRAIN_LOG)).unwrap(), summary.log);
        cfg.protocols = vec![Protocol::Zsl, Protocol::Gzsl];
        let reports = cmd_eval(&cfg, &summary.best).unwrap();
        assert_eq!(reports.len(), 2);
        assert!(dir.path().join("eval_gzsl.json").is_file());
        cfg.eval.embed_tasks = vec!["class-00".into(), "class-07".into()];
        cfg.eval.embed_samples = 3;
        let (_, dump) = cmd_embed(&cfg, &summary.best).unwrap();
        assert_eq!((dump.tafes.len(), dump.tasks.len()), (6, 2));
        cfg.eval.embed_tasks = vec!["nope".into()];
        assert!(matches!(cmd_embed(&cfg, &summary.best), Err(Error::Unknown { id, .. }) if id == "nope"));
    }

    #[test]
    fn architecture_mismatch_shows_both_manifests() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = tiny(dir.path());
        let summary = cmd_train(&cfg).unwrap();
        cfg.model.feature_widths = vec![12, 12];
        match cmd_eval(&cfg, &summary.best) {
            Err(Error::ArchitectureMismatch { checkpoint, config }) => {
                assert!(checkpoint.contains("10") && config.contains("12"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn gensynth_files_load_and_repeat_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = SyntheticConfig {
            samples_per_class: 5,
            ..SyntheticConfig::default()
        };
        let a = cmd_gensynth(&cfg, &dir.path().join("a")).unwrap();
        let b = cmd_gensynth(&cfg, &dir.path().join("b")).unwrap();
        for (x, y) in [(&a.features, &b.features), (&a.tasks, &b.tasks), (&a.split, &b.split)] {
            assert_eq!(fs::read(x).unwrap(), fs::read(y).unwrap());
        }
        let ds = Dataset::load(&a.features, &a.tasks, &a.split).unwrap();
        assert_eq!(ds.store, generate_synthetic(&cfg).unwrap().store);
    }

    #[test]
    fn invalid_config_fails_before_writing() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = tiny(&dir.path().join("never"));
        cfg.seed = None;
        assert!(cmd_train(&cfg).is_err());
        assert!(!dir.path().join("never").exists());
    }
}
