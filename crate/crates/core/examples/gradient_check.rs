//! Finite-difference check of the full training objective with respect to
//! every parameter of a small network.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tafenet::losses::{classification_loss_graph, embedding_loss_graph, total_loss_graph, LabelMatrix, LossConfig};
use tafenet::model::{ModelConfig, TafeNet};
use tafenet::tensor::{grad_check, Tensor};

fn main() -> tafenet::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let config = ModelConfig {
        d_in: 6,
        d_task: 4,
        task_hidden: 8,
        task_depth: 2,
        feature_widths: vec![8, 5],
    };
    let mut net = TafeNet::new(config, &mut rng)?;
    // move generators away from their near-constant start so tasks differ
    for p in net.params_mut() {
        for v in p.data_mut() {
            *v += rng.gen_range(-0.3..0.3);
        }
    }
    let x = Tensor::uniform(&[5, 6], 1.0, &mut rng);
    let tasks = Tensor::uniform(&[3, 4], 1.0, &mut rng);
    let labels = LabelMatrix::from_indices(3, vec![0, 1, 2, 2, 0])?;
    let params: Vec<Tensor> = net.params().into_iter().map(|(_, _, p)| p.clone()).collect();

    let report = grad_check(
        |g, vars| {
            let bound = net.bind_to(g, vars)?;
            let xv = g.constant(x.clone());
            let tv = g.constant(tasks.clone());
            let out = bound.pair_forward(g, xv, tv)?;
            let cls = classification_loss_graph(g, out.logits, &labels)?;
            let emb = embedding_loss_graph(g, out.tafes, out.embeddings, &labels)?;
            total_loss_graph(g, cls, emb, &LossConfig::default())
        },
        &params,
        1e-5,
    )?;
    let names: Vec<String> = net.params().into_iter().map(|(n, _, _)| n).collect();
    println!(
        "{} coordinates, max relative error {:.2e} at {} [{}]",
        report.coordinates, report.max_rel_error, names[report.worst.0], report.worst.1
    );
    Ok(())
}
