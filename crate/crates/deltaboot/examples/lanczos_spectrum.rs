//! Decompose the regularized curvature of a trained classifier without ever
//! forming it, and print how quickly its spectrum falls toward the floor.

use deltaboot::delta::{lanczos_topk, GradMatrix, OpgOperator};
use deltaboot::io::synthetic::gen_synthetic;
use deltaboot::net::NetworkSpec;
use deltaboot::train::{train, TrainConfig};

fn main() -> deltaboot::Result<()> {
    let lambda = 0.01;
    let data = gen_synthetic(4, 100, 10, 2.0, 5)?;
    let spec = NetworkSpec::dense_classifier(10, &[24], 4, lambda)?;
    let cfg = TrainConfig {
        batch_size: 50,
        schedule: vec![(0, 2e-3)],
        total_steps: 1000,
        ..TrainConfig::default()
    };
    let (params, _) = train(&spec, &cfg, data.view(), None, 3)?;

    // G = mean of per-example gradient outer products + lambda I, applied
    // matrix-free: each matvec costs two passes over the gradient rows.
    let grads = GradMatrix::compute(&spec, &params, data.view());
    let op = OpgOperator::new(&grads, lambda)?;
    let k = 12;
    let pairs = lanczos_topk(&op, k, 1234, 1e-8, 4 * spec.param_count())?;

    println!(
        "top {k} of {} eigenvalues, floor lambda = {lambda}",
        spec.param_count()
    );
    for (i, residual) in pairs.residuals().iter().enumerate() {
        println!(
            "  {i:>2}  value {:>12.6}  residual {residual:.2e}",
            pairs.value(i)
        );
    }
    Ok(())
}
