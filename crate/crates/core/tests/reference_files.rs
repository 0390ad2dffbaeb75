//! The checked-in reference files under `data/reference` load as documented.

use std::path::PathBuf;

use tafenet::data::{load_features, load_split, load_tasks, Dataset};
use tafenet::model::TaskKind;

fn reference(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("data/reference")
        .join(name)
}

#[test]
fn binary_and_text_features_agree() {
    let bin = load_features(reference("features.bin")).unwrap();
    let csv = load_features(reference("features.csv")).unwrap();
    assert_eq!(bin, csv);
    assert_eq!((bin.len(), bin.dim()), (8, 4));
    assert_eq!(bin.sample_ids()[0], 10);
    assert_eq!(bin.feature(1), &[0.75, 0.25, -0.5, 0.125]);
}

#[test]
fn dataset_resolves_names_and_ids() {
    let ds = Dataset::load(
        reference("features.bin"),
        reference("tasks.json"),
        reference("split.json"),
    )
    .unwrap();
    let name = |c: usize| ds.tasks.name(c).to_string();
    assert_eq!(ds.seen().iter().map(|&c| name(c)).collect::<Vec<_>>(), ["owl", "cat"]);
    assert_eq!(ds.unseen().iter().map(|&c| name(c)).collect::<Vec<_>>(), ["bat", "eel"]);
    assert_eq!(ds.train_rows(), &[0, 2]);
    assert_eq!(ds.test_rows().len(), 6);
    assert_eq!(ds.tasks.groups(), Some(&[0, 1, 0, 1][..]));
    assert!(ds.fewshot().is_some());
}

#[test]
fn composition_pairs_concatenate_primitives() {
    let table = load_tasks(reference("composition_tasks.json")).unwrap();
    assert_eq!(table.kind(), TaskKind::WordEmbedding);
    assert_eq!(table.names(), ["red car", "wet dog", "red dog", "wet car"]);
    assert_eq!(table.vector(2), &[0.5, -0.25, 0.0, 1.0]);
}

#[test]
fn split_round_trips_through_json() {
    let split = load_split(reference("split.json")).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("split.json");
    split.save(&path).unwrap();
    assert_eq!(load_split(&path).unwrap(), split);
}
