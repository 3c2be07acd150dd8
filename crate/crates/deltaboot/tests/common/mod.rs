//! Oracles shared by the integration tests: independent, deliberately naive
//! reimplementations of the quantities under test. Dense algebra goes through
//! nalgebra, network evaluation through straightforward loops that track
//! their own shapes, so agreement with the library is evidence rather than
//! tautology.
#![allow(dead_code)]

use deltaboot::net::{ActShape, Layer, NetworkSpec, ParamVector, PROB_FLOOR};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Forward pass written from the layer definitions alone.
pub fn naive_forward(spec: &NetworkSpec, params: &ParamVector, input: &[f64]) -> Vec<f64> {
    let mut shape = spec.input_shape();
    assert_eq!(input.len(), shape.len());
    let mut act = input.to_vec();
    for (l, layer) in spec.layers().iter().enumerate().skip(1) {
        match *layer {
            Layer::Input(_) => panic!("input layer after the first position"),
            Layer::Relu => {
                for v in &mut act {
                    if *v < 0.0 {
                        *v = 0.0;
                    }
                }
            }
            Layer::Softmax => {
                let m = act.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let mut sum = 0.0;
                for v in &mut act {
                    *v = (*v - m).exp();
                    sum += *v;
                }
                for v in &mut act {
                    *v /= sum;
                }
            }
            Layer::Dense { inputs, outputs } => {
                let seg = spec.layout().segment_for_layer(l).unwrap();
                let w = DMatrix::from_row_slice(inputs, outputs, params.weights(seg));
                let x = DVector::from_column_slice(&act);
                let y = w.transpose() * x + DVector::from_column_slice(params.biases(seg));
                act = y.iter().cloned().collect();
                shape = ActShape::Flat { len: outputs };
            }
            Layer::MaxPool2x2 => {
                let (h, w, c) = match shape {
                    ActShape::Map { h, w, c } => (h, w, c),
                    ActShape::Flat { .. } => panic!("pooling a flat activation"),
                };
                let (oh, ow) = (h / 2, w / 2);
                let mut out = vec![0.0; oh * ow * c];
                for y in 0..oh {
                    for x in 0..ow {
                        for ch in 0..c {
                            let mut m = f64::NEG_INFINITY;
                            for dy in 0..2 {
                                for dx in 0..2 {
                                    let v = act[((2 * y + dy) * w + (2 * x + dx)) * c + ch];
                                    m = m.max(v);
                                }
                            }
                            out[(y * ow + x) * c + ch] = m;
                        }
                    }
                }
                act = out;
                shape = ActShape::Map { h: oh, w: ow, c };
            }
            Layer::Conv3x3 { in_ch, out_ch } => {
                let (h, w) = match shape {
                    ActShape::Map { h, w, c } => {
                        assert_eq!(c, in_ch);
                        (h, w)
                    }
                    ActShape::Flat { .. } => panic!("convolving a flat activation"),
                };
                let seg = spec.layout().segment_for_layer(l).unwrap();
                let weights = params.weights(seg);
                let biases = params.biases(seg);
                let (oh, ow) = (h - 2, w - 2);
                let mut out = vec![0.0; oh * ow * out_ch];
                for oc in 0..out_ch {
                    for y in 0..oh {
                        for x in 0..ow {
                            let mut s = biases[oc];
                            for ky in 0..3 {
                                for kx in 0..3 {
                                    for ic in 0..in_ch {
                                        let xv = act[((y + ky) * w + (x + kx)) * in_ch + ic];
                                        let wv =
                                            weights[((ky * 3 + kx) * in_ch + ic) * out_ch + oc];
                                        s += xv * wv;
                                    }
                                }
                            }
                            out[(y * ow + x) * out_ch + oc] = s;
                        }
                    }
                }
                act = out;
                shape = ActShape::Map {
                    h: oh,
                    w: ow,
                    c: out_ch,
                };
            }
        }
    }
    act
}

/// One example's training cost through the naive forward pass: clamped
/// cross-entropy plus the L2 penalty over every parameter.
pub fn naive_cost(spec: &NetworkSpec, params: &ParamVector, input: &[f64], label: &[f64]) -> f64 {
    let p = naive_forward(spec, params, input);
    let p_true: f64 = p.iter().zip(label).map(|(pi, yi)| pi * yi).sum();
    let penalty = 0.5 * spec.reg_rate() * params.l2_norm_squared();
    -(p_true.max(PROB_FLOOR)).ln() + penalty
}

/// Central-difference gradient of `naive_cost`, step scaled per coordinate.
pub fn fd_grad(spec: &NetworkSpec, params: &ParamVector, input: &[f64], label: &[f64]) -> Vec<f64> {
    let base = params.values().to_vec();
    let mut g = Vec::with_capacity(base.len());
    for j in 0..base.len() {
        let h = 1e-5 * (1.0 + base[j].abs());
        let mut plus = base.clone();
        plus[j] += h;
        let mut minus = base.clone();
        minus[j] -= h;
        let cp = naive_cost(spec, &ParamVector::from_values(spec, plus).unwrap(), input, label);
        let cm = naive_cost(spec, &ParamVector::from_values(spec, minus).unwrap(), input, label);
        g.push((cp - cm) / (2.0 * h));
    }
    g
}

/// Agreement check for gradients: relative to the larger magnitude, with an
/// absolute floor for entries near zero.
pub fn assert_grads_close(analytic: &[f64], numeric: &[f64], rel: f64, floor: f64) {
    assert_eq!(analytic.len(), numeric.len());
    for (j, (&a, &n)) in analytic.iter().zip(numeric).enumerate() {
        let scale = a.abs().max(n.abs()).max(floor / rel);
        assert!(
            (a - n).abs() <= rel * scale,
            "gradient component {j}: analytic {a}, numeric {n}"
        );
    }
}

/// The curvature matrix formed explicitly: the mean outer product of the
/// per-example gradient rows plus `lambda` on the diagonal.
pub fn dense_curvature(rows: &[f64], n: usize, p: usize, lambda: f64) -> DMatrix<f64> {
    assert_eq!(rows.len(), n * p);
    let mut g = DMatrix::zeros(p, p);
    for i in 0..n {
        let r = DVector::from_column_slice(&rows[i * p..(i + 1) * p]);
        g += &r * r.transpose() / n as f64;
    }
    for d in 0..p {
        g[(d, d)] += lambda;
    }
    g
}

/// All eigenpairs of a symmetric matrix, sorted descending by eigenvalue.
/// Returned vectors are unit columns.
pub fn dense_eigs(g: &DMatrix<f64>) -> (Vec<f64>, Vec<Vec<f64>>) {
    let eig = g.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .expect("finite eigenvalues")
    });
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = order
        .iter()
        .map(|&i| eig.eigenvectors.column(i).iter().cloned().collect())
        .collect();
    (values, vectors)
}

/// Textbook Adam trajectory: runs the published update rule over a fixed
/// gradient sequence and returns the final parameters.
pub fn adam_reference(
    start: &[f64],
    grads: &[Vec<f64>],
    rates: &[f64],
    beta1: f64,
    beta2: f64,
    eps: f64,
) -> Vec<f64> {
    assert_eq!(grads.len(), rates.len());
    let dim = start.len();
    let mut theta = start.to_vec();
    let mut m = vec![0.0; dim];
    let mut v = vec![0.0; dim];
    for (t, (g, &rate)) in grads.iter().zip(rates).enumerate() {
        assert_eq!(g.len(), dim);
        let step = (t + 1) as i32;
        for j in 0..dim {
            m[j] = beta1 * m[j] + (1.0 - beta1) * g[j];
            v[j] = beta2 * v[j] + (1.0 - beta2) * g[j] * g[j];
            let m_hat = m[j] / (1.0 - beta1.powi(step));
            let v_hat = v[j] / (1.0 - beta2.powi(step));
            theta[j] -= rate * m_hat / (v_hat.sqrt() + eps);
        }
    }
    theta
}

/// Random architecture from the closed layer vocabulary, biased toward small
/// dense stacks with the occasional convolutional front end. Parameter count
/// stays modest so dense oracles remain affordable.
pub fn random_net(rng: &mut ChaCha8Rng) -> NetworkSpec {
    let classes = rng.random_range(2..=4usize);
    let reg = [0.0, 0.01, 0.1][rng.random_range(0..3usize)];
    if rng.random_range(0..4u32) == 0 {
        let side = rng.random_range(5..=6usize);
        let ch = rng.random_range(1..=2usize);
        let mut layers = vec![
            Layer::Input(ActShape::Map {
                h: side,
                w: side,
                c: 1,
            }),
            Layer::Conv3x3 {
                in_ch: 1,
                out_ch: ch,
            },
            Layer::Relu,
        ];
        let mut len = (side - 2) * (side - 2) * ch;
        if rng.random_range(0..2u32) == 0 {
            layers.push(Layer::MaxPool2x2);
            len = ((side - 2) / 2) * ((side - 2) / 2) * ch;
        }
        layers.push(Layer::Dense {
            inputs: len,
            outputs: classes,
        });
        layers.push(Layer::Softmax);
        NetworkSpec::new(layers, reg).unwrap()
    } else {
        let inputs = rng.random_range(2..=5usize);
        let depth = rng.random_range(0..=2usize);
        let hidden: Vec<usize> = (0..depth).map(|_| rng.random_range(2..=6usize)).collect();
        NetworkSpec::dense_classifier(inputs, &hidden, classes, reg).unwrap()
    }
}

/// Normal random parameters for a network, spread enough to keep the softmax
/// away from saturation on unit-scale inputs.
pub fn random_params(spec: &NetworkSpec, rng: &mut ChaCha8Rng, stddev: f64) -> ParamVector {
    let values = (0..spec.param_count())
        .map(|_| stddev * rng.sample::<f64, _>(StandardNormal))
        .collect();
    ParamVector::from_values(spec, values).unwrap()
}

/// Normal random input of the length the network expects.
pub fn random_input(spec: &NetworkSpec, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..spec.input_shape().len())
        .map(|_| rng.sample::<f64, _>(StandardNormal))
        .collect()
}

/// One-hot label for a uniformly drawn class.
pub fn random_label(spec: &NetworkSpec, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut label = vec![0.0; spec.num_classes()];
    label[rng.random_range(0..spec.num_classes())] = 1.0;
    label
}

/// A complete experiment small enough that a full pipeline pass takes a
/// couple of seconds, for tests that exercise runs end to end.
pub fn tiny_config() -> deltaboot::io::ExperimentConfig {
    use deltaboot::io::{DatasetConfig, ExperimentConfig, NetworkConfig};
    use deltaboot::train::{SeedMode, TrainConfig};
    ExperimentConfig {
        dataset: DatasetConfig::Synthetic {
            classes: 3,
            dim: 6,
            n_train: 60,
            n_test: 21,
            separation: 2.0,
        },
        network: NetworkConfig::Dense { hidden: vec![8] },
        reg_rate: 0.01,
        train: TrainConfig {
            batch_size: 10,
            schedule: vec![(0, 3e-3)],
            total_steps: 120,
            ..TrainConfig::default()
        },
        base_seed: 4242,
        seed_policy: SeedMode::Drwi,
        ensemble_size: 4,
        k_values: vec![4, 8, 16],
        b_values: None,
        repetitions: 2,
        lanczos_tol: 1e-8,
        out_dir: std::path::PathBuf::from("out"),
        threads: 1,
    }
}
