//! Train one dense classifier on Gaussian blobs and print the convergence
//! numbers a full run records per network.

use deltaboot::io::synthetic::gen_synthetic;
use deltaboot::net::NetworkSpec;
use deltaboot::train::{train, TrainConfig};

fn main() -> deltaboot::Result<()> {
    let train_data = gen_synthetic(3, 200, 8, 2.5, 11)?;
    let test_data = gen_synthetic(3, 50, 8, 2.5, 12)?;
    let spec = NetworkSpec::dense_classifier(8, &[32], 3, 0.01)?;
    println!(
        "{} parameters, {} train / {} test examples",
        spec.param_count(),
        train_data.len(),
        test_data.len()
    );

    let cfg = TrainConfig {
        batch_size: 50,
        schedule: vec![(0, 1e-3), (1200, 1e-4)],
        total_steps: 1600,
        ..TrainConfig::default()
    };
    let (_, stats) = train(&spec, &cfg, train_data.view(), Some(test_data.view()), 7)?;

    println!("steps           {}", stats.steps);
    println!("train cost      {:.4}", stats.train_cost);
    println!("train accuracy  {:.4}", stats.train_accuracy);
    if let (Some(cost), Some(acc)) = (stats.test_cost, stats.test_accuracy) {
        println!("test cost       {cost:.4}");
        println!("test accuracy   {acc:.4}");
    }
    println!("gradient norm   {:.6}", stats.grad_norm);
    println!("converged       {}", stats.converged);
    Ok(())
}
