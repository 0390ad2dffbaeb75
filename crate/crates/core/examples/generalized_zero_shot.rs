//! Generalized zero-shot evaluation: test samples of seen and unseen classes
//! are classified over the joint label space, and the harmonic mean of the
//! two per-class accuracies summarizes the trade-off.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use tafenet::config::RunConfig;
use tafenet::data::{generate_synthetic, Dataset, SyntheticConfig};
use tafenet::eval::{gzsl_eval, gzsl_metrics, score_rows};
use tafenet::losses::LossConfig;
use tafenet::model::TafeNet;
use tafenet::train::{train, TrainConfig};

fn main() -> tafenet::Result<()> {
    let synth = SyntheticConfig::default();
    let ds = Dataset::from_synthetic(generate_synthetic(&synth)?)?;
    let run = RunConfig {
        seed: Some(1),
        synthetic: Some(synth),
        ..RunConfig::default()
    };
    let net = TafeNet::new(run.model_config(&ds), &mut ChaCha8Rng::seed_from_u64(1))?;
    let cfg = TrainConfig {
        epochs: 20,
        ..TrainConfig::default()
    };
    let net = train(net, &ds, &cfg, &LossConfig::default(), 1, None, |_| {})?.best;

    println!("{}", gzsl_eval(&net, &ds)?.to_table());

    // the same numbers from the raw score matrix
    let classes: Vec<usize> = ds.seen().iter().chain(ds.unseen()).copied().collect();
    let scores = score_rows(&net, &ds, ds.test_rows(), &classes)?;
    let truth: Vec<usize> = ds.test_rows().iter().map(|&i| ds.store.labels()[i]).collect();
    let m = gzsl_metrics(&scores, &truth, ds.seen(), ds.unseen())?;
    println!("u = {:.3}, s = {:.3}, H = {:.3}", m.acc_u, m.acc_s, m.h);
    Ok(())
}
