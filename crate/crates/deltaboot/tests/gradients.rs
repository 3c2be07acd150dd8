//! Hand-rolled backpropagation against central finite differences of an
//! independent forward pass, across randomly drawn architectures from the
//! full layer vocabulary.

mod common;

use common::{
    assert_grads_close, fd_grad, naive_forward, random_input, random_label, random_net,
    random_params,
};
use deltaboot::net::{forward, per_example_grad, sensitivity};
use deltaboot::seed::rng_from_seed;

#[test]
fn forward_matches_independent_evaluation() {
    for seed in 0..40u64 {
        let mut rng = rng_from_seed(1000 + seed);
        let spec = random_net(&mut rng);
        let params = random_params(&spec, &mut rng, 0.4);
        let input = random_input(&spec, &mut rng);
        let ours = forward(&spec, &params, &input);
        let naive = naive_forward(&spec, &params, &input);
        assert_eq!(ours.len(), naive.len());
        for (a, b) in ours.iter().zip(&naive) {
            assert!((a - b).abs() <= 1e-12, "forward mismatch: {a} vs {b}");
        }
    }
}

#[test]
fn per_example_gradient_matches_finite_differences() {
    let mut checked = 0;
    for seed in 0..25u64 {
        let mut rng = rng_from_seed(seed);
        let spec = random_net(&mut rng);
        let params = random_params(&spec, &mut rng, 0.4);
        let input = random_input(&spec, &mut rng);
        let label = random_label(&spec, &mut rng);
        let analytic = per_example_grad(&spec, &params, &input, &label);
        let numeric = fd_grad(&spec, &params, &input, &label);
        assert_grads_close(&analytic, &numeric, 1e-4, 1e-8);
        checked += 1;
    }
    assert_eq!(checked, 25);
}

#[test]
fn sensitivity_rows_match_probability_finite_differences() {
    for seed in 0..8u64 {
        let mut rng = rng_from_seed(500 + seed);
        let spec = random_net(&mut rng);
        let params = random_params(&spec, &mut rng, 0.4);
        let input = random_input(&spec, &mut rng);
        let sens = sensitivity(&spec, &params, &input);
        let base = params.values().to_vec();
        for class in 0..spec.num_classes() {
            let mut numeric = Vec::with_capacity(base.len());
            for j in 0..base.len() {
                let h = 1e-5 * (1.0 + base[j].abs());
                let mut plus = base.clone();
                plus[j] += h;
                let mut minus = base.clone();
                minus[j] -= h;
                let pp = naive_forward(
                    &spec,
                    &deltaboot::net::ParamVector::from_values(&spec, plus).unwrap(),
                    &input,
                )[class];
                let pm = naive_forward(
                    &spec,
                    &deltaboot::net::ParamVector::from_values(&spec, minus).unwrap(),
                    &input,
                )[class];
                numeric.push((pp - pm) / (2.0 * h));
            }
            assert_grads_close(sens.row(class), &numeric, 1e-4, 1e-7);
        }
    }
}
