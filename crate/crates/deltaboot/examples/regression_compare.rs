//! Estimate uncertainty for the same test set twice, by bootstrap ensemble
//! and by the low-rank delta method, and fit the line relating the two.

use deltaboot::bootstrap::{ensemble_sigma_first, make_resamples, predict_all, train_ensemble};
use deltaboot::compare::ols;
use deltaboot::delta::{lanczos_topk, sigma_delta, GradMatrix, OpgOperator};
use deltaboot::io::synthetic::gen_synthetic;
use deltaboot::net::NetworkSpec;
use deltaboot::train::{train, SeedPolicy, TrainConfig};

fn main() -> deltaboot::Result<()> {
    let lambda = 0.01;
    let data = gen_synthetic(3, 150, 8, 2.0, 41)?;
    let test = gen_synthetic(3, 40, 8, 2.0, 42)?;
    let spec = NetworkSpec::dense_classifier(8, &[20], 3, lambda)?;
    let cfg = TrainConfig {
        batch_size: 50,
        schedule: vec![(0, 2e-3), (900, 2e-4)],
        total_steps: 1200,
        ..TrainConfig::default()
    };

    let b = 16;
    let idx = make_resamples(data.len(), b, 7)?;
    let ensemble = train_ensemble(&spec, &cfg, &data, None, &idx, SeedPolicy::drwi(8))?;
    let per_replicate: Vec<Vec<f64>> = ensemble
        .iter()
        .map(|(params, _)| predict_all(&spec, params, test.view()))
        .collect();
    let (_, boot) = ensemble_sigma_first(&per_replicate, b, spec.num_classes())?;

    let (params, _) = train(&spec, &cfg, data.view(), None, 9)?;
    let grads = GradMatrix::compute(&spec, &params, data.view());
    let op = OpgOperator::new(&grads, lambda)?;
    let pairs = lanczos_topk(&op, 60, 11, 1e-8, 4 * spec.param_count())?;
    let delta = sigma_delta(&spec, &params, &pairs, lambda, data.len(), test.view())?;

    // One point per (example, class) pair: delta on the x axis, bootstrap on
    // the y axis, like the tables a full run writes.
    let points: Vec<(f64, f64)> = delta.sigma.iter().copied().zip(boot).collect();
    let fit = ols(&points)?;
    println!("{} paired uncertainties", fit.n_points);
    println!("slope      {:.4}", fit.beta);
    println!("intercept  {:+.5}", fit.alpha);
    println!("R^2        {:.4}", fit.r_squared);
    Ok(())
}
