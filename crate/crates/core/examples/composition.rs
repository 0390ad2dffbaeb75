//! Unseen attribute-object compositions: every pair is described by the
//! attribute vector followed by the object vector, some pairs are never
//! seen in training, and test samples are ranked against the unseen pairs.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use tafenet::data::{load_tasks, Dataset, FeatureStore, Precision, SplitSpec, SPLIT_VERSION};
use tafenet::eval::composition_eval;
use tafenet::losses::LossConfig;
use tafenet::model::{ModelConfig, TafeNet};
use tafenet::tensor::Tensor;
use tafenet::train::{train, TrainConfig};

const ATTRIBUTES: [&str; 4] = ["red", "wet", "old", "tiny"];
const OBJECTS: [&str; 5] = ["car", "dog", "cup", "hat", "log"];
const DIM: usize = 6;

fn vectors(names: &[&str], rng: &mut ChaCha8Rng) -> serde_json::Map<String, serde_json::Value> {
    names
        .iter()
        .map(|n| {
            let v: Vec<f64> = (0..DIM).map(|_| rng.sample(StandardNormal)).collect();
            (n.to_string(), serde_json::json!(v))
        })
        .collect()
}

fn main() -> tafenet::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let dir = std::env::temp_dir().join("tafenet-composition-example");
    std::fs::create_dir_all(&dir).map_err(|e| tafenet::Error::io("creating output directory", e))?;

    let pairs: Vec<[&str; 2]> = ATTRIBUTES
        .iter()
        .flat_map(|&a| OBJECTS.iter().map(move |&o| [a, o]))
        .collect();
    let file = serde_json::json!({
        "kind": "word-embedding",
        "attributes": vectors(&ATTRIBUTES, &mut rng),
        "objects": vectors(&OBJECTS, &mut rng),
        "pairs": pairs,
    });
    let tasks_path = dir.join("tasks.json");
    std::fs::write(&tasks_path, file.to_string()).map_err(|e| tafenet::Error::io("writing tasks", e))?;
    let tasks = load_tasks(&tasks_path)?;

    // features: a fixed linear map of the pair description plus noise
    let d_in = 24;
    let mixing = Tensor::uniform(&[2 * DIM, d_in], 0.5, &mut rng);
    let (mut values, mut labels) = (Vec::new(), Vec::new());
    for c in 0..tasks.len() {
        for _ in 0..30 {
            let clean = Tensor::row(tasks.vector(c)).matmul(&mixing)?;
            values.extend(
                clean
                    .data()
                    .iter()
                    .map(|v| v + 0.2 * rng.sample::<f64, _>(StandardNormal)),
            );
            labels.push(c);
        }
    }
    let n = labels.len();
    let store = FeatureStore::new(
        Tensor::new(&[n, d_in], values)?,
        labels.clone(),
        (0..n as u64).collect(),
    )?;
    store.save(dir.join("features.bin"), Precision::F32)?;

    let mut order: Vec<usize> = (0..tasks.len()).collect();
    order.shuffle(&mut rng);
    let (unseen, seen) = order.split_at(6);
    let name = |c: &usize| tasks.name(*c).to_string();
    let (mut train_ids, mut test_ids) = (Vec::new(), Vec::new());
    for (i, &c) in labels.iter().enumerate() {
        if seen.contains(&c) && i % 5 != 0 {
            train_ids.push(i as u64);
        } else {
            test_ids.push(i as u64);
        }
    }
    let split = SplitSpec {
        version: SPLIT_VERSION,
        seen: seen.iter().map(name).collect(),
        unseen: unseen.iter().map(name).collect(),
        train: train_ids,
        test: test_ids,
        fewshot: None,
    };
    split.save(dir.join("split.json"))?;

    let ds = Dataset::load(dir.join("features.bin"), &tasks_path, dir.join("split.json"))?;
    let model = ModelConfig::with_width(d_in, tasks.dim(), ds.seen().len(), 64);
    let net = TafeNet::new(model, &mut rng)?;
    let cfg = TrainConfig {
        epochs: 20,
        ..TrainConfig::default()
    };
    let net = train(net, &ds, &cfg, &LossConfig::default(), 11, None, |_| {})?.best;
    println!("unseen pairs: {:?}", split.unseen);
    println!("{}", composition_eval(&net, &ds)?.to_table());
    Ok(())
}
