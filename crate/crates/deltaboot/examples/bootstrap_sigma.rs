//! Train a bootstrap ensemble on resampled data and read the spread of its
//! predictions as an uncertainty estimate for a few test inputs.

use deltaboot::bootstrap::{ensemble_sigma_first, make_resamples, predict_all, train_ensemble};
use deltaboot::io::synthetic::gen_synthetic;
use deltaboot::net::NetworkSpec;
use deltaboot::train::{SeedPolicy, TrainConfig};

fn main() -> deltaboot::Result<()> {
    let data = gen_synthetic(3, 120, 6, 2.0, 31)?;
    let test = gen_synthetic(3, 5, 6, 2.0, 32)?;
    let spec = NetworkSpec::dense_classifier(6, &[16], 3, 0.01)?;
    let cfg = TrainConfig {
        batch_size: 40,
        schedule: vec![(0, 2e-3)],
        total_steps: 800,
        ..TrainConfig::default()
    };

    // Each replicate trains on its own resample-with-replacement of the
    // training set, from its own initial weights under DRWI.
    let b = 12;
    let idx = make_resamples(data.len(), b, 77)?;
    let ensemble = train_ensemble(&spec, &cfg, &data, None, &idx, SeedPolicy::drwi(99))?;
    let per_replicate: Vec<Vec<f64>> = ensemble
        .iter()
        .map(|(params, _)| predict_all(&spec, params, test.view()))
        .collect();
    let classes = spec.num_classes();
    let (mean, sigma) = ensemble_sigma_first(&per_replicate, b, classes)?;

    println!("B = {b} replicates over {} test inputs", test.len());
    for i in 0..test.len() {
        let m = &mean[i * classes..(i + 1) * classes];
        let s = &sigma[i * classes..(i + 1) * classes];
        print!("x{i}:  mean");
        for v in m {
            print!(" {v:.3}");
        }
        print!("   sigma");
        for v in s {
            print!(" {v:.3}");
        }
        println!();
    }
    Ok(())
}
