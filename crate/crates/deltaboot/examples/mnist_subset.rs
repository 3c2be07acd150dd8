//! Train a small convolutional net on a slice of MNIST, if the IDX files are
//! present under data/mnist. Exits quietly with a hint when they are not, so
//! the example is safe to run in a fresh checkout.

use std::path::Path;

use deltaboot::io::idx::load_idx;
use deltaboot::net::NetworkSpec;
use deltaboot::train::{train, TrainConfig};

fn main() -> deltaboot::Result<()> {
    let dir = Path::new("data/mnist");
    let train_images = dir.join("train-images-idx3-ubyte");
    let train_labels = dir.join("train-labels-idx1-ubyte");
    let test_images = dir.join("t10k-images-idx3-ubyte");
    let test_labels = dir.join("t10k-labels-idx1-ubyte");
    if !train_images.is_file() {
        println!("no MNIST files under {}, nothing to do", dir.display());
        println!("expected the four standard IDX files, e.g. train-images-idx3-ubyte");
        return Ok(());
    }

    let full_train = load_idx(&train_images, &train_labels)?;
    let full_test = load_idx(&test_images, &test_labels)?;
    let data = full_train.truncated(2000)?;
    let test = full_test.truncated(500)?;
    println!(
        "training on {} of {} images, testing on {}",
        data.len(),
        full_train.len(),
        test.len()
    );

    let spec = NetworkSpec::lenet(data.shape(), [8, 8, 16], 32, 10, 0.01)?;
    println!("{} parameters", spec.param_count());
    let cfg = TrainConfig {
        batch_size: 100,
        schedule: vec![(0, 1e-3), (800, 1e-4)],
        total_steps: 1200,
        ..TrainConfig::default()
    };
    let (_, stats) = train(&spec, &cfg, data.view(), Some(test.view()), 5)?;
    println!("steps            {}", stats.steps);
    println!("train accuracy   {:.4}", stats.train_accuracy);
    println!("test accuracy    {:.4}", stats.test_accuracy);
    println!("train cost       {:.4}", stats.train_cost);
    println!("gradient norm    {:.3e}", stats.grad_norm);
    Ok(())
}
