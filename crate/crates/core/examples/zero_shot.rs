//! Zero-shot classification on synthetic attribute data: train on seen
//! classes, then classify unseen-class samples among the unseen classes only.
//!
//! `cargo run --release --example zero_shot`

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use tafenet::config::RunConfig;
use tafenet::data::{generate_synthetic, Dataset, SyntheticConfig};
use tafenet::eval::zsl_eval;
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
    println!("untrained top-1: {:.3}", zsl_eval(&net, &ds)?.top1.unwrap_or(0.0));

    let cfg = TrainConfig {
        epochs: 20,
        ..TrainConfig::default()
    };
    let outcome = train(net, &ds, &cfg, &LossConfig::default(), 0, None, |r| {
        if r.epoch % 5 == 4 {
            println!("epoch {:>2}  cls {:.4}  emb {:.4}", r.epoch, r.cls_loss, r.emb_loss);
        }
    })?;
    let report = zsl_eval(&outcome.best, &ds)?;
    println!("{}", report.to_table());
    Ok(())
}
