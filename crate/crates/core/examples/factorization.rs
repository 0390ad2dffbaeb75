//! Weight factorization: a dynamic layer only needs one gain per output unit
//! (or output channel), yet it behaves exactly like a layer whose full weight
//! was generated for the task.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tafenet::model::{FactorizedConvLayer, FactorizedFcLayer};
use tafenet::tensor::{conv2d_same, Tensor};

fn main() -> tafenet::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);

    let mut fc = FactorizedFcLayer::fan_in(32, 16, &mut rng);
    let gains: Vec<f64> = (0..fc.generated_len()).map(|_| rng.gen_range(0.5..1.5)).collect();
    fc.install_gains(gains.clone())?;
    let x: Vec<f64> = (0..32).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let modulated = fc.forward(&x)?;
    let full = Tensor::row(&x)
        .matmul(&fc.materialized_weight(&gains)?)?
        .add(&fc.bias)?;
    let gap = modulated
        .iter()
        .zip(full.data())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    println!(
        "fc: {} generated values instead of {}, max gap {gap:.1e}",
        fc.generated_len(),
        32 * 16
    );

    let filters = Tensor::uniform(&[3, 3, 4, 8], 0.5, &mut rng);
    let mut conv = FactorizedConvLayer::new(filters.clone())?;
    let gains: Vec<f64> = (0..conv.generated_len()).map(|_| rng.gen_range(0.5..1.5)).collect();
    conv.install_gains(gains.clone())?;
    let image = Tensor::uniform(&[6, 6, 4], 1.0, &mut rng);
    let y = conv.forward(&image)?;

    // scale each output channel of the filter bank instead
    let mut scaled = filters;
    for (i, v) in scaled.data_mut().iter_mut().enumerate() {
        *v *= gains[i % 8];
    }
    let gap = y.max_abs_diff(&conv2d_same(&image, &scaled)?);
    println!(
        "conv: {} generated values instead of {}, max gap {gap:.1e}",
        conv.generated_len(),
        conv.full_generation_len()
    );
    Ok(())
}
