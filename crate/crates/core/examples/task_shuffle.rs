//! Task-embedding shuffle diagnostic: replace a class's description with one
//! from the same group or from another group and see how often the class is
//! still predicted. Related descriptions should transfer better.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use tafenet::config::RunConfig;
use tafenet::data::{generate_synthetic, Dataset, SyntheticConfig};
use tafenet::eval::shuffle_eval;
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
        epochs: 20,
        ..TrainConfig::default()
    };
    let net = train(net, &ds, &cfg, &LossConfig::default(), 0, None, |_| {})?.best;

    let report = shuffle_eval(&net, &ds, 20, 0)?;
    let summary = report.shuffle.as_ref().expect("shuffle summary");
    for (class, in_group, out_group) in summary.per_class.iter().take(8) {
        println!("{class}: in-group {in_group:.3}  out-of-group {out_group:.3}");
    }
    println!(
        "mean in-group {:.3}, out-of-group {:.3}",
        summary.in_group, summary.out_of_group
    );
    Ok(())
}
