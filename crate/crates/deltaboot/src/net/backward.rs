//! Reverse-mode differentiation, derived by hand for the closed layer
//! vocabulary. Two consumers share the same backward walk:
//!
//! * the training cost gradient, seeded at the logits with `p - y`, and
//! * output sensitivities, seeded per class `i` with `p_i (delta_ij - p_j)`.
//!
//! Seeding below the softmax keeps both numerically stable; the softmax
//! itself is never differentiated in isolation.

use super::forward::{forward_trace, Trace};
use super::{ActShape, DataView, Layer, NetworkSpec, ParamVector, PROB_FLOOR};

/// Average cost over a data view: mean clamped cross-entropy plus the
/// L2 penalty `(reg/2) * |w|^2`.
pub fn cost(spec: &NetworkSpec, params: &ParamVector, data: DataView<'_>) -> f64 {
    cost_with_diagnostics(spec, params, data).cost
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostDiagnostics {
    pub cost: f64,
    /// Examples whose true-class probability fell below the clamp floor.
    pub clamped: usize,
}

pub fn cost_with_diagnostics(
    spec: &NetworkSpec,
    params: &ParamVector,
    data: DataView<'_>,
) -> CostDiagnostics {
    let n = data.len();
    let mut sum = 0.0;
    let mut clamped = 0;
    for i in 0..n {
        let p = super::forward(spec, params, data.input(i));
        let p_true = p[data.label_index(i)];
        if p_true < PROB_FLOOR {
            clamped += 1;
        }
        sum += -(p_true.max(PROB_FLOOR)).ln();
    }
    let cost = sum / n as f64 + 0.5 * spec.reg_rate() * params.l2_norm_squared();
    CostDiagnostics { cost, clamped }
}

/// Gradient of the average cost: the mean of the per-example cross-entropy
/// gradients plus `reg * w`.
pub fn grad_cost(spec: &NetworkSpec, params: &ParamVector, data: DataView<'_>) -> Vec<f64> {
    let n = data.len();
    let mut acc = vec![0.0; spec.param_count()];
    for i in 0..n {
        ce_grad_accumulate(spec, params, data.input(i), data.label(i), &mut acc);
    }
    let inv_n = 1.0 / n as f64;
    let reg = spec.reg_rate();
    for (g, w) in acc.iter_mut().zip(params.values()) {
        *g = *g * inv_n + reg * w;
    }
    acc
}

/// Gradient of one example's cost, regularizer included:
/// `grad(-log p_true + (reg/2) |w|^2)`.
pub fn per_example_grad(
    spec: &NetworkSpec,
    params: &ParamVector,
    input: &[f64],
    label: &[f64],
) -> Vec<f64> {
    let mut out = vec![0.0; spec.param_count()];
    per_example_grad_into(spec, params, input, label, &mut out);
    out
}

/// As `per_example_grad`, writing into a caller-provided buffer
/// (overwritten, not accumulated).
pub fn per_example_grad_into(
    spec: &NetworkSpec,
    params: &ParamVector,
    input: &[f64],
    label: &[f64],
    out: &mut [f64],
) {
    assert_eq!(out.len(), spec.param_count());
    out.fill(0.0);
    ce_grad_accumulate(spec, params, input, label, out);
    let reg = spec.reg_rate();
    for (g, w) in out.iter_mut().zip(params.values()) {
        *g += reg * w;
    }
}

/// Accumulate the cross-entropy part of one example's gradient. When the
/// true-class probability sits below the clamp floor the clamped loss is
/// locally constant, so nothing is added.
fn ce_grad_accumulate(
    spec: &NetworkSpec,
    params: &ParamVector,
    input: &[f64],
    label: &[f64],
    acc: &mut [f64],
) {
    let trace = forward_trace(spec, params, input);
    let p = trace.probabilities();
    let p_true: f64 = p.iter().zip(label).map(|(pi, yi)| pi * yi).sum();
    if p_true < PROB_FLOOR {
        return;
    }
    let g_logits: Vec<f64> = p.iter().zip(label).map(|(pi, yi)| pi - yi).collect();
    backprop_from_logits(spec, params, &trace, g_logits, acc);
}

/// Rows of the output Jacobian for one input: row `i` is the gradient of
/// class probability `p_i` with respect to every parameter.
#[derive(Debug, Clone)]
pub struct SensitivityMatrix {
    rows: Vec<f64>,
    classes: usize,
    params: usize,
}

impl SensitivityMatrix {
    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn params(&self) -> usize {
        self.params
    }

    pub fn row(&self, class: usize) -> &[f64] {
        &self.rows[class * self.params..(class + 1) * self.params]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.rows.chunks_exact(self.params)
    }
}

/// Jacobian of the class probabilities with respect to the parameters,
/// one backward pass per class seeded with `p_i (delta_ij - p_j)`.
pub fn sensitivity(spec: &NetworkSpec, params: &ParamVector, input: &[f64]) -> SensitivityMatrix {
    let trace = forward_trace(spec, params, input);
    let p = trace.probabilities().to_vec();
    let classes = spec.num_classes();
    let np = spec.param_count();
    let mut rows = vec![0.0; classes * np];
    for i in 0..classes {
        let g_logits: Vec<f64> = (0..classes)
            .map(|j| {
                let delta = if i == j { 1.0 } else { 0.0 };
                p[i] * (delta - p[j])
            })
            .collect();
        backprop_from_logits(
            spec,
            params,
            &trace,
            g_logits,
            &mut rows[i * np..(i + 1) * np],
        );
    }
    SensitivityMatrix {
        rows,
        classes,
        params: np,
    }
}

/// Shared backward walk. `g` starts as a gradient with respect to the
/// logits (the activation feeding the final softmax); parameter gradients
/// are accumulated into `acc`.
fn backprop_from_logits(
    spec: &NetworkSpec,
    params: &ParamVector,
    trace: &Trace,
    mut g: Vec<f64>,
    acc: &mut [f64],
) {
    // Softmax is the last layer; the walk starts at the layer below it.
    let last = spec.layers().len() - 1;
    for l in (1..last).rev() {
        let below = &trace.acts[l - 1];
        g = match spec.layers()[l] {
            Layer::Input(_) | Layer::Softmax => unreachable!("validated layer order"),
            Layer::Relu => g
                .iter()
                .zip(&trace.acts[l])
                .map(|(&gi, &a)| if a > 0.0 { gi } else { 0.0 })
                .collect(),
            Layer::MaxPool2x2 => {
                let (h, w, c) = match spec.shape_after(l - 1) {
                    ActShape::Map { h, w, c } => (h, w, c),
                    ActShape::Flat { .. } => unreachable!("validated pool input"),
                };
                pool_backward(&g, below, h, w, c)
            }
            Layer::Dense { inputs, outputs } => {
                let seg = spec.layout().segment_for_layer(l).unwrap();
                let (dw, rest) = acc[seg.weights.start..seg.biases.end()]
                    .split_at_mut(seg.weights.len);
                dense_backward(&g, below, inputs, outputs, params.weights(seg), dw, rest)
            }
            Layer::Conv3x3 { in_ch, out_ch } => {
                let (h, w) = match spec.shape_after(l - 1) {
                    ActShape::Map { h, w, .. } => (h, w),
                    ActShape::Flat { .. } => unreachable!("validated conv input"),
                };
                let seg = spec.layout().segment_for_layer(l).unwrap();
                let (dw, rest) = acc[seg.weights.start..seg.biases.end()]
                    .split_at_mut(seg.weights.len);
                conv_backward(
                    &g,
                    below,
                    h,
                    w,
                    in_ch,
                    out_ch,
                    params.weights(seg),
                    dw,
                    rest,
                )
            }
        };
    }
}

fn dense_backward(
    g: &[f64],
    input: &[f64],
    inputs: usize,
    outputs: usize,
    weights: &[f64],
    dw: &mut [f64],
    db: &mut [f64],
) -> Vec<f64> {
    for (o, &go) in g.iter().enumerate() {
        db[o] += go;
    }
    let mut dx = vec![0.0; inputs];
    for i in 0..inputs {
        let x = input[i];
        let row = &weights[i * outputs..(i + 1) * outputs];
        let drow = &mut dw[i * outputs..(i + 1) * outputs];
        let mut s = 0.0;
        for o in 0..outputs {
            drow[o] += x * g[o];
            s += row[o] * g[o];
        }
        dx[i] = s;
    }
    dx
}

fn conv_backward(
    g: &[f64],
    input: &[f64],
    h: usize,
    w: usize,
    in_ch: usize,
    out_ch: usize,
    weights: &[f64],
    dw: &mut [f64],
    db: &mut [f64],
) -> Vec<f64> {
    let oh = h - 2;
    let ow = w - 2;
    let mut dx = vec![0.0; h * w * in_ch];
    for oy in 0..oh {
        for ox in 0..ow {
            let gbase = (oy * ow + ox) * out_ch;
            for oc in 0..out_ch {
                db[oc] += g[gbase + oc];
            }
            for ky in 0..3 {
                for kx in 0..3 {
                    let in_base = ((oy + ky) * w + (ox + kx)) * in_ch;
                    for ic in 0..in_ch {
                        let x = input[in_base + ic];
                        let w_base = ((ky * 3 + kx) * in_ch + ic) * out_ch;
                        let mut s = 0.0;
                        for oc in 0..out_ch {
                            let go = g[gbase + oc];
                            dw[w_base + oc] += x * go;
                            s += weights[w_base + oc] * go;
                        }
                        dx[in_base + ic] += s;
                    }
                }
            }
        }
    }
    dx
}

/// Route each pooled gradient to the first maximal entry of its 2x2 block,
/// matching the strict-greater scan the forward pass uses.
fn pool_backward(g: &[f64], input: &[f64], h: usize, w: usize, c: usize) -> Vec<f64> {
    let oh = h / 2;
    let ow = w / 2;
    let mut dx = vec![0.0; h * w * c];
    for oy in 0..oh {
        for ox in 0..ow {
            for ch in 0..c {
                let mut best = f64::NEG_INFINITY;
                let mut best_at = 0;
                for dy in 0..2 {
                    for dx_ in 0..2 {
                        let at = ((2 * oy + dy) * w + (2 * ox + dx_)) * c + ch;
                        if input[at] > best {
                            best = input[at];
                            best_at = at;
                        }
                    }
                }
                dx[best_at] += g[(oy * ow + ox) * c + ch];
            }
        }
    }
    dx
}
