//! Classifier architecture family: a closed layer vocabulary with shape
//! inference, a flat parameter vector with a per-layer offset map, and the
//! dataset container shared by every other module.
//!
//! The vocabulary is deliberately small (input, 3x3 valid convolution,
//! 2x2/stride-2 max pooling, ReLU, dense, softmax), which keeps every
//! gradient hand-derivable and testable against finite differences.

mod backward;
mod forward;

pub use backward::{
    cost, cost_with_diagnostics, grad_cost, per_example_grad, per_example_grad_into, sensitivity,
    CostDiagnostics, SensitivityMatrix,
};
pub use forward::{forward, forward_trace, Trace};

use crate::error::{Error, Result};

/// Probabilities below this are clamped before taking logs.
pub const PROB_FLOOR: f64 = 1e-12;

/// Shape of an activation tensor between layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActShape {
    /// Feature map laid out row-major as `[(y * w + x) * c + ch]`.
    Map { h: usize, w: usize, c: usize },
    /// Flat vector.
    Flat { len: usize },
}

impl ActShape {
    pub fn len(&self) -> usize {
        match *self {
            ActShape::Map { h, w, c } => h * w * c,
            ActShape::Flat { len } => len,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl std::fmt::Display for ActShape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match *self {
            ActShape::Map { h, w, c } => write!(f, "{h}x{w}x{c}"),
            ActShape::Flat { len } => write!(f, "flat({len})"),
        }
    }
}

/// One layer from the closed vocabulary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layer {
    Input(ActShape),
    /// 3x3 convolution, valid padding, unit stride.
    /// Weights are indexed `[(ky * 3 + kx) * in_ch + ic] * out_ch + oc`.
    Conv3x3 { in_ch: usize, out_ch: usize },
    /// 2x2 max pooling with stride 2; odd trailing rows/columns are dropped.
    MaxPool2x2,
    Relu,
    /// Dense layer; weights indexed `[i * outputs + o]`.
    Dense { inputs: usize, outputs: usize },
    Softmax,
}

impl Layer {
    /// Weight and bias counts for this layer.
    pub fn param_counts(&self) -> (usize, usize) {
        match *self {
            Layer::Conv3x3 { in_ch, out_ch } => (9 * in_ch * out_ch, out_ch),
            Layer::Dense { inputs, outputs } => (inputs * outputs, outputs),
            _ => (0, 0),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Layer::Input(_) => "Input",
            Layer::Conv3x3 { .. } => "Conv3x3",
            Layer::MaxPool2x2 => "MaxPool2x2",
            Layer::Relu => "Relu",
            Layer::Dense { .. } => "Dense",
            Layer::Softmax => "Softmax",
        }
    }
}

/// Half-open `[start, start + len)` slice of the flat parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamRange {
    pub start: usize,
    pub len: usize,
}

impl ParamRange {
    pub fn end(&self) -> usize {
        self.start + self.len
    }
}

/// Parameter slices owned by one parameterized layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamSegment {
    /// Index into `NetworkSpec::layers`.
    pub layer: usize,
    pub weights: ParamRange,
    pub biases: ParamRange,
}

/// Offset map partitioning `[0, P)` across the parameterized layers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamLayout {
    segments: Vec<ParamSegment>,
    total: usize,
}

impl ParamLayout {
    pub fn segments(&self) -> &[ParamSegment] {
        &self.segments
    }

    pub fn total(&self) -> usize {
        self.total
    }

    /// Segment for a given layer index, if that layer has parameters.
    pub fn segment_for_layer(&self, layer: usize) -> Option<&ParamSegment> {
        self.segments.iter().find(|s| s.layer == layer)
    }
}

/// Validated network architecture: layers, inferred shapes, parameter layout,
/// class count and the L2 regularization rate.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSpec {
    layers: Vec<Layer>,
    /// `shapes[l]` is the output shape of layer `l`.
    shapes: Vec<ActShape>,
    layout: ParamLayout,
    num_classes: usize,
    reg_rate: f64,
}

impl NetworkSpec {
    /// Validate the layer list and infer all activation shapes.
    ///
    /// The parameter count is computed here from shapes alone; no parameters
    /// are instantiated.
    pub fn new(layers: Vec<Layer>, reg_rate: f64) -> Result<Self> {
        if !(reg_rate >= 0.0) {
            return Err(Error::InvalidSpec(format!(
                "reg_rate must be >= 0, got {reg_rate}"
            )));
        }
        let first = layers
            .first()
            .ok_or_else(|| Error::InvalidSpec("empty layer list".into()))?;
        let mut shape = match first {
            Layer::Input(s) if s.len() > 0 => *s,
            Layer::Input(s) => {
                return Err(Error::InvalidSpec(format!("input shape {s} is empty")));
            }
            other => {
                return Err(Error::InvalidSpec(format!(
                    "first layer must be Input, got {}",
                    other.name()
                )));
            }
        };

        let mut shapes = vec![shape];
        let mut segments = Vec::new();
        let mut cursor = 0usize;

        for (l, layer) in layers.iter().enumerate().skip(1) {
            let mismatch = |expected: String| Error::ShapeMismatch {
                layer: format!("layer {l} ({})", layer.name()),
                expected,
                found: shape.to_string(),
            };
            shape = match *layer {
                Layer::Input(_) => {
                    return Err(Error::InvalidSpec(format!(
                        "Input may only appear first (found at position {l})"
                    )));
                }
                Layer::Conv3x3 { in_ch, out_ch } => match shape {
                    ActShape::Map { h, w, c } if c == in_ch && h >= 3 && w >= 3 => {
                        ActShape::Map {
                            h: h - 2,
                            w: w - 2,
                            c: out_ch,
                        }
                    }
                    _ => {
                        return Err(mismatch(format!("map >=3x>=3 with {in_ch} channels")));
                    }
                },
                Layer::MaxPool2x2 => match shape {
                    ActShape::Map { h, w, c } if h >= 2 && w >= 2 => ActShape::Map {
                        h: h / 2,
                        w: w / 2,
                        c,
                    },
                    _ => return Err(mismatch("map >=2x>=2".into())),
                },
                Layer::Relu => shape,
                Layer::Dense { inputs, outputs } => {
                    if shape.len() != inputs {
                        return Err(mismatch(format!("{inputs} inputs (any layout)")));
                    }
                    ActShape::Flat { len: outputs }
                }
                Layer::Softmax => {
                    if l != layers.len() - 1 {
                        return Err(Error::InvalidSpec(
                            "Softmax must be the final layer".into(),
                        ));
                    }
                    match shape {
                        ActShape::Flat { len } if len >= 2 => ActShape::Flat { len },
                        _ => return Err(mismatch("flat vector of width >= 2".into())),
                    }
                }
            };
            shapes.push(shape);

            let (nw, nb) = layer.param_counts();
            if nw > 0 {
                let weights = ParamRange {
                    start: cursor,
                    len: nw,
                };
                let biases = ParamRange {
                    start: cursor + nw,
                    len: nb,
                };
                cursor += nw + nb;
                segments.push(ParamSegment {
                    layer: l,
                    weights,
                    biases,
                });
            }
        }

        let num_classes = match layers.last() {
            Some(Layer::Softmax) => shape.len(),
            _ => {
                return Err(Error::InvalidSpec(
                    "final layer must be Softmax".into(),
                ));
            }
        };

        Ok(NetworkSpec {
            layers,
            shapes,
            layout: ParamLayout {
                segments,
                total: cursor,
            },
            num_classes,
            reg_rate,
        })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    /// Output shape of layer `l`.
    pub fn shape_after(&self, l: usize) -> ActShape {
        self.shapes[l]
    }

    pub fn input_shape(&self) -> ActShape {
        self.shapes[0]
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn reg_rate(&self) -> f64 {
        self.reg_rate
    }

    /// Total parameter count P.
    pub fn param_count(&self) -> usize {
        self.layout.total
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    /// Plain dense classifier: Input -> (Dense -> ReLU)* -> Dense -> Softmax.
    pub fn dense_classifier(
        input_dim: usize,
        hidden: &[usize],
        classes: usize,
        reg_rate: f64,
    ) -> Result<Self> {
        let mut layers = vec![Layer::Input(ActShape::Flat { len: input_dim })];
        let mut width = input_dim;
        for &h in hidden {
            layers.push(Layer::Dense {
                inputs: width,
                outputs: h,
            });
            layers.push(Layer::Relu);
            width = h;
        }
        layers.push(Layer::Dense {
            inputs: width,
            outputs: classes,
        });
        layers.push(Layer::Softmax);
        NetworkSpec::new(layers, reg_rate)
    }

    /// LeNet-style stack over an image input:
    /// three 3x3 convolutions (the first two followed by pooling), each with
    /// ReLU, then a dense hidden layer and a dense softmax head.
    pub fn lenet(
        input: ActShape,
        channels: [usize; 3],
        dense_width: usize,
        classes: usize,
        reg_rate: f64,
    ) -> Result<Self> {
        let in_ch = match input {
            ActShape::Map { c, .. } => c,
            ActShape::Flat { .. } => {
                return Err(Error::InvalidSpec(
                    "lenet requires a map-shaped input".into(),
                ));
            }
        };
        let mut layers = vec![
            Layer::Input(input),
            Layer::Conv3x3 {
                in_ch,
                out_ch: channels[0],
            },
            Layer::MaxPool2x2,
            Layer::Relu,
            Layer::Conv3x3 {
                in_ch: channels[0],
                out_ch: channels[1],
            },
            Layer::MaxPool2x2,
            Layer::Relu,
            Layer::Conv3x3 {
                in_ch: channels[1],
                out_ch: channels[2],
            },
            Layer::Relu,
        ];
        // Flattened width of the last feature map feeds the dense stack.
        let flat = NetworkSpec::probe_shape(&layers)?.len();
        layers.push(Layer::Dense {
            inputs: flat,
            outputs: dense_width,
        });
        layers.push(Layer::Relu);
        layers.push(Layer::Dense {
            inputs: dense_width,
            outputs: classes,
        });
        layers.push(Layer::Softmax);
        NetworkSpec::new(layers, reg_rate)
    }

    /// Shape produced by a conv/pool/relu prefix (no Softmax requirement).
    fn probe_shape(layers: &[Layer]) -> Result<ActShape> {
        let mut shape = match layers.first() {
            Some(Layer::Input(s)) => *s,
            _ => return Err(Error::InvalidSpec("first layer must be Input".into())),
        };
        for layer in &layers[1..] {
            shape = match (*layer, shape) {
                (Layer::Conv3x3 { out_ch, .. }, ActShape::Map { h, w, .. })
                    if h >= 3 && w >= 3 =>
                {
                    ActShape::Map {
                        h: h - 2,
                        w: w - 2,
                        c: out_ch,
                    }
                }
                (Layer::MaxPool2x2, ActShape::Map { h, w, c }) if h >= 2 && w >= 2 => {
                    ActShape::Map {
                        h: h / 2,
                        w: w / 2,
                        c,
                    }
                }
                (Layer::Relu, s) => s,
                _ => {
                    return Err(Error::InvalidSpec(format!(
                        "input too small for the convolutional stack (reached {shape})"
                    )))
                }
            };
        }
        Ok(shape)
    }

    /// Reference 28x28x1 architecture: conv 32/64/64, dense 576->64->10.
    pub fn mnist_reference(reg_rate: f64) -> NetworkSpec {
        NetworkSpec::lenet(
            ActShape::Map { h: 28, w: 28, c: 1 },
            [32, 64, 64],
            64,
            10,
            reg_rate,
        )
        .expect("reference architecture is valid")
    }

    /// Reference 32x32x3 architecture: conv 32/64/64, dense 1024->64->10.
    pub fn cifar_reference(reg_rate: f64) -> NetworkSpec {
        NetworkSpec::lenet(
            ActShape::Map { h: 32, w: 32, c: 3 },
            [32, 64, 64],
            64,
            10,
            reg_rate,
        )
        .expect("reference architecture is valid")
    }
}

/// Flat parameter vector of length P with its layer offset map.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    values: Vec<f64>,
    layout: ParamLayout,
}

impl ParamVector {
    pub fn zeros(spec: &NetworkSpec) -> Self {
        ParamVector {
            values: vec![0.0; spec.param_count()],
            layout: spec.layout().clone(),
        }
    }

    pub fn from_values(spec: &NetworkSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != spec.param_count() {
            return Err(Error::CountMismatch(format!(
                "parameter vector has {} values, spec needs {}",
                values.len(),
                spec.param_count()
            )));
        }
        Ok(ParamVector {
            values,
            layout: spec.layout().clone(),
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    /// Weight slice of the segment covering `layer`.
    pub fn weights(&self, seg: &ParamSegment) -> &[f64] {
        &self.values[seg.weights.start..seg.weights.end()]
    }

    pub fn biases(&self, seg: &ParamSegment) -> &[f64] {
        &self.values[seg.biases.start..seg.biases.end()]
    }

    pub fn l2_norm_squared(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }
}

/// Training or test data: N inputs of one shape plus one-hot labels.
#[derive(Debug, Clone)]
pub struct Dataset {
    inputs: Vec<Vec<f64>>,
    labels: Vec<Vec<f64>>,
    shape: ActShape,
}

impl Dataset {
    pub fn new(inputs: Vec<Vec<f64>>, labels: Vec<Vec<f64>>, shape: ActShape) -> Result<Self> {
        if inputs.is_empty() {
            return Err(Error::InvalidData("dataset must hold at least one example".into()));
        }
        if inputs.len() != labels.len() {
            return Err(Error::CountMismatch(format!(
                "{} inputs vs {} labels",
                inputs.len(),
                labels.len()
            )));
        }
        for (i, x) in inputs.iter().enumerate() {
            if x.len() != shape.len() {
                return Err(Error::InvalidData(format!(
                    "input {i} has {} entries, shape {shape} needs {}",
                    x.len(),
                    shape.len()
                )));
            }
        }
        for (i, y) in labels.iter().enumerate() {
            let ones = y.iter().filter(|&&v| v == 1.0).count();
            let zeros = y.iter().filter(|&&v| v == 0.0).count();
            if ones != 1 || ones + zeros != y.len() {
                return Err(Error::InvalidData(format!(
                    "label {i} is not one-hot"
                )));
            }
        }
        Ok(Dataset {
            inputs,
            labels,
            shape,
        })
    }

    /// Build from class indices instead of prebuilt one-hot vectors.
    pub fn from_class_indices(
        inputs: Vec<Vec<f64>>,
        classes: &[usize],
        num_classes: usize,
        shape: ActShape,
    ) -> Result<Self> {
        if classes.iter().any(|&c| c >= num_classes) {
            return Err(Error::InvalidData("class index out of range".into()));
        }
        let labels = classes
            .iter()
            .map(|&c| {
                let mut y = vec![0.0; num_classes];
                y[c] = 1.0;
                y
            })
            .collect();
        Dataset::new(inputs, labels, shape)
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn shape(&self) -> ActShape {
        self.shape
    }

    pub fn num_classes(&self) -> usize {
        self.labels[0].len()
    }

    pub fn input(&self, i: usize) -> &[f64] {
        &self.inputs[i]
    }

    pub fn label(&self, i: usize) -> &[f64] {
        &self.labels[i]
    }

    pub fn label_index(&self, i: usize) -> usize {
        self.labels[i]
            .iter()
            .position(|&v| v == 1.0)
            .expect("labels are one-hot by construction")
    }

    pub fn view(&self) -> DataView<'_> {
        DataView {
            base: self,
            indices: None,
            start: 0,
            len: self.len(),
        }
    }

    /// Zero-copy resampled view selecting `indices` (with repetition allowed).
    pub fn select<'a>(&'a self, indices: &'a [usize]) -> DataView<'a> {
        DataView {
            base: self,
            indices: Some(indices),
            start: 0,
            len: indices.len(),
        }
    }

    /// Owned copy of the first `n` examples.
    pub fn truncated(&self, n: usize) -> Result<Dataset> {
        if n == 0 || n > self.len() {
            return Err(Error::InsufficientData {
                need: n.max(1),
                got: self.len(),
            });
        }
        Ok(Dataset {
            inputs: self.inputs[..n].to_vec(),
            labels: self.labels[..n].to_vec(),
            shape: self.shape,
        })
    }
}

/// Borrowed view of a dataset, optionally reindexed (used for bootstrap
/// resamples; stores indices only, never copies examples) and optionally
/// narrowed to a contiguous run (used for minibatches).
#[derive(Debug, Clone, Copy)]
pub struct DataView<'a> {
    base: &'a Dataset,
    indices: Option<&'a [usize]>,
    start: usize,
    len: usize,
}

impl<'a> DataView<'a> {
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Contiguous sub-view covering `start..start + len` of this view.
    pub fn narrow(&self, start: usize, len: usize) -> DataView<'a> {
        assert!(start + len <= self.len, "narrow out of range");
        DataView {
            base: self.base,
            indices: self.indices,
            start: self.start + start,
            len,
        }
    }

    fn resolve(&self, i: usize) -> usize {
        assert!(i < self.len, "view index out of range");
        let at = self.start + i;
        self.indices.map_or(at, |idx| idx[at])
    }

    pub fn input(&self, i: usize) -> &'a [f64] {
        self.base.input(self.resolve(i))
    }

    pub fn label(&self, i: usize) -> &'a [f64] {
        self.base.label(self.resolve(i))
    }

    pub fn label_index(&self, i: usize) -> usize {
        self.base.label_index(self.resolve(i))
    }

    pub fn shape(&self) -> ActShape {
        self.base.shape()
    }

    pub fn num_classes(&self) -> usize {
        self.base.num_classes()
    }
}

/// Fraction of examples whose highest-probability class matches the label
/// (ties resolve to the lowest class index).
pub fn accuracy(spec: &NetworkSpec, params: &ParamVector, data: DataView<'_>) -> f64 {
    let mut correct = 0usize;
    for i in 0..data.len() {
        let p = forward(spec, params, data.input(i));
        let mut arg = 0;
        for (j, &pj) in p.iter().enumerate().skip(1) {
            if pj > p[arg] {
                arg = j;
            }
        }
        if arg == data.label_index(i) {
            correct += 1;
        }
    }
    correct as f64 / data.len() as f64
}
