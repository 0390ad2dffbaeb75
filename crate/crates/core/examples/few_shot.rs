//! Few-shot recognition with exemplar descriptions: each base class is
//! described by its mean training feature, and each novel class by the mean
//! of `n` exemplars drawn per episode. Reports top-5 accuracy.

use tafenet::checkpoint::load_checkpoint;
use tafenet::commands::{cmd_train, run_protocol};
use tafenet::config::{Descriptions, RunConfig};
use tafenet::data::SyntheticConfig;
use tafenet::eval::Protocol;

fn main() -> tafenet::Result<()> {
    let out = std::env::temp_dir().join("tafenet-few-shot-example");
    let mut cfg = RunConfig {
        seed: Some(0),
        out,
        protocols: vec![Protocol::FewShot],
        synthetic: Some(SyntheticConfig::default()),
        ..RunConfig::default()
    };
    cfg.model.descriptions = Descriptions::Exemplar;
    cfg.train.epochs = 15;

    let summary = cmd_train(&cfg)?;
    let net = load_checkpoint(&summary.best)?.net;
    let ds = cfg.dataset()?;
    for n in [1, 2, 5] {
        cfg.eval.fewshot_n = n;
        let report = run_protocol(&net, &ds, Protocol::FewShot, &cfg)?;
        let fs = report.fewshot.as_ref().expect("few-shot summary");
        println!(
            "n = {n}: top-5 novel {:.3}, top-5 all {:.3} over {} trials",
            fs.top5_novel,
            fs.top5_all,
            fs.trials.len()
        );
    }
    Ok(())
}
