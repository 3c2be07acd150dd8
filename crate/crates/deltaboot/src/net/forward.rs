//! Forward evaluation. `forward` computes class probabilities for one input;
//! `forward_trace` additionally keeps every intermediate activation so the
//! backward pass can reuse them.

use super::{ActShape, Layer, NetworkSpec, ParamVector};

/// All activations of one forward pass: `acts[l]` is the output of layer `l`
/// (so `acts[0]` is the input and the last entry holds the probabilities).
#[derive(Debug, Clone)]
pub struct Trace {
    pub acts: Vec<Vec<f64>>,
}

impl Trace {
    pub fn probabilities(&self) -> &[f64] {
        self.acts.last().expect("trace is never empty")
    }

    /// Logits feeding the final softmax.
    pub fn logits(&self) -> &[f64] {
        &self.acts[self.acts.len() - 2]
    }
}

/// Class probabilities for a single input.
pub fn forward(spec: &NetworkSpec, params: &ParamVector, input: &[f64]) -> Vec<f64> {
    forward_trace(spec, params, input).acts.pop().unwrap()
}

/// Forward pass keeping all intermediate activations.
pub fn forward_trace(spec: &NetworkSpec, params: &ParamVector, input: &[f64]) -> Trace {
    assert_eq!(
        input.len(),
        spec.input_shape().len(),
        "input length must match the network input shape"
    );
    let mut acts = Vec::with_capacity(spec.layers().len());
    acts.push(input.to_vec());

    for (l, layer) in spec.layers().iter().enumerate().skip(1) {
        let prev = &acts[l - 1];
        let out = match *layer {
            Layer::Input(_) => unreachable!("validated: Input only appears first"),
            Layer::Conv3x3 { in_ch, out_ch } => {
                let (h, w) = match spec.shape_after(l - 1) {
                    ActShape::Map { h, w, .. } => (h, w),
                    ActShape::Flat { .. } => unreachable!("validated conv input"),
                };
                let seg = spec.layout().segment_for_layer(l).unwrap();
                conv3x3(
                    prev,
                    h,
                    w,
                    in_ch,
                    out_ch,
                    params.weights(seg),
                    params.biases(seg),
                )
            }
            Layer::MaxPool2x2 => {
                let (h, w, c) = match spec.shape_after(l - 1) {
                    ActShape::Map { h, w, c } => (h, w, c),
                    ActShape::Flat { .. } => unreachable!("validated pool input"),
                };
                max_pool(prev, h, w, c)
            }
            Layer::Relu => prev.iter().map(|&v| v.max(0.0)).collect(),
            Layer::Dense { inputs, outputs } => {
                let seg = spec.layout().segment_for_layer(l).unwrap();
                dense(prev, inputs, outputs, params.weights(seg), params.biases(seg))
            }
            Layer::Softmax => softmax(prev),
        };
        acts.push(out);
    }
    Trace { acts }
}

fn conv3x3(
    input: &[f64],
    h: usize,
    w: usize,
    in_ch: usize,
    out_ch: usize,
    weights: &[f64],
    biases: &[f64],
) -> Vec<f64> {
    let oh = h - 2;
    let ow = w - 2;
    let mut out = vec![0.0; oh * ow * out_ch];
    for oy in 0..oh {
        for ox in 0..ow {
            let base = (oy * ow + ox) * out_ch;
            out[base..base + out_ch].copy_from_slice(biases);
            for ky in 0..3 {
                for kx in 0..3 {
                    let in_base = ((oy + ky) * w + (ox + kx)) * in_ch;
                    for ic in 0..in_ch {
                        let x = input[in_base + ic];
                        if x == 0.0 {
                            continue;
                        }
                        let w_base = ((ky * 3 + kx) * in_ch + ic) * out_ch;
                        for oc in 0..out_ch {
                            out[base + oc] += x * weights[w_base + oc];
                        }
                    }
                }
            }
        }
    }
    out
}

fn max_pool(input: &[f64], h: usize, w: usize, c: usize) -> Vec<f64> {
    let oh = h / 2;
    let ow = w / 2;
    let mut out = vec![0.0; oh * ow * c];
    for oy in 0..oh {
        for ox in 0..ow {
            for ch in 0..c {
                let mut best = f64::NEG_INFINITY;
                for dy in 0..2 {
                    for dx in 0..2 {
                        let v = input[((2 * oy + dy) * w + (2 * ox + dx)) * c + ch];
                        if v > best {
                            best = v;
                        }
                    }
                }
                out[(oy * ow + ox) * c + ch] = best;
            }
        }
    }
    out
}

fn dense(input: &[f64], inputs: usize, outputs: usize, weights: &[f64], biases: &[f64]) -> Vec<f64> {
    let mut out = biases.to_vec();
    for i in 0..inputs {
        let x = input[i];
        if x == 0.0 {
            continue;
        }
        let row = &weights[i * outputs..(i + 1) * outputs];
        for (o, wv) in row.iter().enumerate() {
            out[o] += x * wv;
        }
    }
    out
}

/// Numerically stable softmax: shift by the max logit before exponentiating.
fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::NetworkSpec;
    use approx::assert_relative_eq;

    #[test]
    fn softmax_sums_to_one_and_orders() {
        let p = softmax(&[1.0, 3.0, 2.0]);
        assert_relative_eq!(p.iter().sum::<f64>(), 1.0, epsilon = 1e-14);
        assert!(p[1] > p[2] && p[2] > p[0]);
    }

    #[test]
    fn softmax_survives_large_logits() {
        let p = softmax(&[1000.0, 1001.0]);
        assert!(p.iter().all(|v| v.is_finite()));
        assert_relative_eq!(p.iter().sum::<f64>(), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn dense_matches_hand_computation() {
        // y = W^T x + b with W indexed [i * outputs + o].
        let out = dense(&[1.0, 2.0], 2, 2, &[1.0, 2.0, 3.0, 4.0], &[0.5, -0.5]);
        assert_relative_eq!(out[0], 1.0 * 1.0 + 2.0 * 3.0 + 0.5);
        assert_relative_eq!(out[1], 1.0 * 2.0 + 2.0 * 4.0 - 0.5);
    }

    #[test]
    fn conv_valid_padding_hand_case() {
        // 3x3 single-channel input, one 3x3 filter -> single output pixel.
        let input: Vec<f64> = (1..=9).map(f64::from).collect();
        let weights = vec![1.0; 9];
        let out = conv3x3(&input, 3, 3, 1, 1, &weights, &[0.25]);
        assert_eq!(out.len(), 1);
        assert_relative_eq!(out[0], 45.25);
    }

    #[test]
    fn pool_takes_block_maxima_and_drops_odd_edge() {
        // 3x3 input pools down to 1x1, dropping the last row and column.
        let input = vec![1.0, 5.0, 9.0, 2.0, 3.0, 8.0, 7.0, 6.0, 4.0];
        let out = max_pool(&input, 3, 3, 1);
        assert_eq!(out, vec![5.0]);
    }

    #[test]
    fn trace_records_every_layer() {
        let spec = NetworkSpec::dense_classifier(3, &[4], 2, 0.0).unwrap();
        let params = ParamVector::zeros(&spec);
        let trace = forward_trace(&spec, &params, &[0.1, 0.2, 0.3]);
        assert_eq!(trace.acts.len(), spec.layers().len());
        assert_eq!(trace.probabilities().len(), 2);
        assert_relative_eq!(trace.probabilities().iter().sum::<f64>(), 1.0);
    }

    #[test]
    fn conv_map_layout_indexes_channels_last() {
        // Two output channels: filter 0 passes the center pixel, filter 1
        // doubles it. Channel values must interleave per pixel.
        let input = vec![0.0, 0.0, 0.0, 0.0, 3.0, 0.0, 0.0, 0.0, 0.0];
        let mut weights = vec![0.0; 9 * 1 * 2];
        let center = (1 * 3 + 1) * 1; // ky=1, kx=1, ic=0
        weights[center * 2] = 1.0;
        weights[center * 2 + 1] = 2.0;
        let out = conv3x3(&input, 3, 3, 1, 2, &weights, &[0.0, 0.0]);
        assert_eq!(out, vec![3.0, 6.0]);
    }
}
