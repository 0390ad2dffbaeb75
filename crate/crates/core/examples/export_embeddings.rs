//! Export TAFEs and task embeddings as tab-separated vectors for an external
//! projection tool, then read the file back.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use tafenet::config::RunConfig;
use tafenet::data::{generate_synthetic, Dataset, SyntheticConfig};
use tafenet::eval::{dump_embeddings, parse_dump};
use tafenet::losses::LossConfig;
use tafenet::model::TafeNet;
use tafenet::train::{train, TrainConfig};

fn main() -> tafenet::Result<()> {
    let synth = SyntheticConfig::default();
    let ds = Dataset::from_synthetic(generate_synthetic(&synth)?)?;
    let run = RunConfig {
        seed: Some(0),
        synthetic: Some(synth),
        ..RunConfig::default()
    };
    let net = TafeNet::new(run.model_config(&ds), &mut ChaCha8Rng::seed_from_u64(0))?;
    let cfg = TrainConfig {
        epochs: 10,
        ..TrainConfig::default()
    };
    let net = train(net, &ds, &cfg, &LossConfig::default(), 0, None, |_| {})?.best;

    let classes: Vec<usize> = ds.unseen()[..2].to_vec();
    let rows = ds.test_rows_of(&classes);
    let dir = std::env::temp_dir().join("tafenet-export-example");
    std::fs::create_dir_all(&dir).map_err(|e| tafenet::Error::io("creating output directory", e))?;
    let path = dir.join("embeddings.tsv");
    let dump = dump_embeddings(&net, &ds, &rows, &classes, &path)?;
    assert_eq!(parse_dump(&path)?, dump);
    println!(
        "{} TAFE rows, {} task rows written to {}",
        dump.tafes.len(),
        dump.tasks.len(),
        path.display()
    );
    Ok(())
}
