//! Layered feedforward networks with smooth rectified activations.
//!
//! Hidden nodes compute `o = σ(W o_prev + b)`; the output layer is affine.
//!
//! # Parameter layout
//!
//! The flat parameter vector is layer-major. Within a layer of shape
//! `out x in` the `out * in` weights come first, row-major (`W[o][i]` at
//! `o * in + i`), followed by the `out` biases. Layers are ordered from the
//! first hidden layer to the output layer.

use std::fmt;
use std::ops::Deref;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::dot;

/// Activation functions that vanish on `(-∞, 0]` and increase on `(0, ∞)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Activation {
    /// `x exp(-1/x)` for `x > 0`, else `0`. Smooth, with every derivative
    /// vanishing at the origin.
    SmooLu,
    /// ReLU with the corner replaced by a quadratic on `(0, knee)`:
    /// `x² / (2 knee)` there, `x - knee/2` beyond. The quadratic is the unique
    /// cubic Hermite piece through `(0, 0)` with slope 0 and `(knee, knee/2)`
    /// with slope 1, so the function is C¹ and monotone.
    SmoothedRelu { knee: f64 },
}

impl Activation {
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            Activation::SmooLu => {
                if x <= 0.0 {
                    0.0
                } else {
                    // exp(-1/x) underflows to 0 below ~1.3e-3 anyway; the guard keeps
                    // 1/x finite for subnormal x.
                    if x < 1e-300 {
                        0.0
                    } else {
                        x * (-1.0 / x).exp()
                    }
                }
            }
            Activation::SmoothedRelu { knee } => {
                if x <= 0.0 {
                    0.0
                } else if x < knee {
                    x * x / (2.0 * knee)
                } else {
                    x - 0.5 * knee
                }
            }
        }
    }

    pub fn deriv(&self, x: f64) -> f64 {
        match *self {
            Activation::SmooLu => {
                if x <= 1e-300 {
                    0.0
                } else {
                    let inv = 1.0 / x;
                    (-inv).exp() * (1.0 + inv)
                }
            }
            Activation::SmoothedRelu { knee } => {
                if x <= 0.0 {
                    0.0
                } else if x < knee {
                    x / knee
                } else {
                    1.0
                }
            }
        }
    }

    pub fn is_rectified(&self) -> bool {
        is_rectified_fn(|x| self.eval(x))
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Activation::SmooLu => Ok(()),
            Activation::SmoothedRelu { knee } if knee > 0.0 && knee.is_finite() => Ok(()),
            Activation::SmoothedRelu { knee } => {
                Err(Error::contract(format!("smoothed ReLU knee must be positive, got {knee}")))
            }
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Activation::SmooLu => write!(f, "smoolu"),
            Activation::SmoothedRelu { knee } => write!(f, "smoothed-relu:{knee}"),
        }
    }
}

impl FromStr for Activation {
    type Err = Error;

    /// Accepts `smoolu` or `smoothed-relu:<knee>`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        let act = if s == "smoolu" {
            Activation::SmooLu
        } else if let Some(k) = s.strip_prefix("smoothed-relu:") {
            let knee = k.parse::<f64>().map_err(|_| Error::contract(format!("bad knee width {k:?}")))?;
            Activation::SmoothedRelu { knee }
        } else {
            return Err(Error::contract(format!("unknown activation {s:?}")));
        };
        act.validate()?;
        Ok(act)
    }
}

/// Numerical rectification test on a fixed grid.
///
/// The grid is 512 points log-spaced on `[1e-6, 1e3]`, their negatives and
/// zero. The function must be exactly zero on the nonpositive points and
/// strictly increasing on the positive ones. Leading positive points where
/// the value underflows to exactly 0 are tolerated, as long as the function
/// becomes positive somewhere on the grid.
pub fn is_rectified_fn(f: impl Fn(f64) -> f64) -> bool {
    const POINTS: usize = 512;
    let grid: Vec<f64> = (0..POINTS).map(|k| 10f64.powf(-6.0 + 9.0 * k as f64 / (POINTS - 1) as f64)).collect();
    if f(0.0) != 0.0 || grid.iter().any(|&x| f(-x) != 0.0) {
        return false;
    }
    let values: Vec<f64> = grid.iter().map(|&x| f(x)).collect();
    if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return false;
    }
    let Some(first_positive) = values.iter().position(|&v| v > 0.0) else {
        return false;
    };
    values[first_positive..].windows(2).all(|w| w[1] > w[0])
}

/// Architecture of a layered MLP.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub hidden_widths: Vec<usize>,
    pub output_dim: usize,
    pub activation: Activation,
}

/// Position of one dense layer inside the flat parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerLayout {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weight_offset: usize,
    pub bias_offset: usize,
}

impl LayerLayout {
    #[inline]
    pub fn weight(&self, out: usize, inp: usize) -> usize {
        self.weight_offset + out * self.in_dim + inp
    }

    #[inline]
    pub fn bias(&self, out: usize) -> usize {
        self.bias_offset + out
    }

    pub fn end(&self) -> usize {
        self.bias_offset + self.out_dim
    }
}

impl MlpSpec {
    pub fn new(input_dim: usize, hidden_widths: Vec<usize>, output_dim: usize, activation: Activation) -> Result<Self> {
        let spec = Self { input_dim, hidden_widths, output_dim, activation };
        spec.validate()?;
        Ok(spec)
    }

    /// One hidden layer of width `width`.
    pub fn shallow(input_dim: usize, width: usize, output_dim: usize, activation: Activation) -> Result<Self> {
        Self::new(input_dim, vec![width], output_dim, activation)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 {
            return Err(Error::contract("input and output dimensions must be >= 1"));
        }
        if self.hidden_widths.is_empty() {
            return Err(Error::contract("at least one hidden layer is required"));
        }
        if self.hidden_widths.contains(&0) {
            return Err(Error::contract("hidden widths must be >= 1"));
        }
        self.activation.validate()
    }

    pub fn depth(&self) -> usize {
        self.hidden_widths.len()
    }

    /// Layouts of all layers, hidden ones first, the output layer last.
    pub fn layers(&self) -> Vec<LayerLayout> {
        let mut out = Vec::with_capacity(self.hidden_widths.len() + 1);
        let mut offset = 0;
        let mut in_dim = self.input_dim;
        for &w in self.hidden_widths.iter().chain(std::iter::once(&self.output_dim)) {
            let layer = LayerLayout { in_dim, out_dim: w, weight_offset: offset, bias_offset: offset + w * in_dim };
            offset = layer.end();
            in_dim = w;
            out.push(layer);
        }
        out
    }

    /// `Σ_t (h_{t-1} h_t + h_t) + h_T ℓ + ℓ` with `h_0 = p`.
    pub fn param_count(&self) -> usize {
        let mut n = 0;
        let mut prev = self.input_dim;
        for &w in self.hidden_widths.iter().chain(std::iter::once(&self.output_dim)) {
            n += prev * w + w;
            prev = w;
        }
        n
    }

    pub fn forward(&self, theta: &ParamVector, x: &[f64]) -> Result<Vec<f64>> {
        self.check_params(theta)?;
        if x.len() != self.input_dim {
            return Err(Error::DimensionMismatch { context: "forward input", expected: self.input_dim, got: x.len() });
        }
        Ok(self.forward_unchecked(theta, x))
    }

    pub(crate) fn check_params(&self, theta: &[f64]) -> Result<()> {
        let n = self.param_count();
        if theta.len() != n {
            return Err(Error::DimensionMismatch { context: "parameter vector", expected: n, got: theta.len() });
        }
        Ok(())
    }

    pub(crate) fn check_dataset(&self, data: &Dataset) -> Result<()> {
        if data.input_dim() != self.input_dim {
            return Err(Error::DimensionMismatch {
                context: "dataset input dimension",
                expected: self.input_dim,
                got: data.input_dim(),
            });
        }
        if data.output_dim() != self.output_dim {
            return Err(Error::DimensionMismatch {
                context: "dataset output dimension",
                expected: self.output_dim,
                got: data.output_dim(),
            });
        }
        Ok(())
    }

    pub(crate) fn forward_unchecked(&self, theta: &[f64], x: &[f64]) -> Vec<f64> {
        let layers = self.layers();
        let last = layers.len() - 1;
        let mut cur = x.to_vec();
        for (t, layer) in layers.iter().enumerate() {
            let mut next = affine(theta, layer, &cur);
            if t != last {
                next.iter_mut().for_each(|z| *z = self.activation.eval(*z));
            }
            cur = next;
        }
        cur
    }

    /// Forward pass keeping every layer's pre-activations and outputs.
    pub(crate) fn forward_trace(&self, theta: &[f64], x: &[f64]) -> Trace {
        let layers = self.layers();
        let last = layers.len() - 1;
        let mut outputs = Vec::with_capacity(layers.len() + 1);
        let mut pre = Vec::with_capacity(layers.len());
        outputs.push(x.to_vec());
        for (t, layer) in layers.iter().enumerate() {
            let z = affine(theta, layer, &outputs[t]);
            let o = if t == last { z.clone() } else { z.iter().map(|&v| self.activation.eval(v)).collect() };
            pre.push(z);
            outputs.push(o);
        }
        Trace { pre, outputs }
    }
}

fn affine(theta: &[f64], layer: &LayerLayout, input: &[f64]) -> Vec<f64> {
    (0..layer.out_dim)
        .map(|o| {
            let row = &theta[layer.weight(o, 0)..layer.weight(o, 0) + layer.in_dim];
            dot(row, input) + theta[layer.bias(o)]
        })
        .collect()
}

/// Per-layer record of one forward pass: `pre[t]` are the affine outputs of
/// layer `t`, `outputs[t]` the inputs to layer `t` (`outputs[0] = x`).
#[derive(Debug, Clone)]
pub(crate) struct Trace {
    pub pre: Vec<Vec<f64>>,
    pub outputs: Vec<Vec<f64>>,
}

/// Flat parameter point `θ ∈ ℝⁿ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParamVector(Vec<f64>);

impl ParamVector {
    pub fn new(spec: &MlpSpec, values: Vec<f64>) -> Result<Self> {
        spec.check_params(&values)?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::contract("parameters must be finite"));
        }
        Ok(Self(values))
    }

    pub fn zeros(spec: &MlpSpec) -> Self {
        Self(vec![0.0; spec.param_count()])
    }

    pub(crate) fn from_raw(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for ParamVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// `scale / sqrt(fan_in)`-scaled Gaussian initialization.
///
/// Biases share their layer's fan-in. Deterministic for a given seed.
pub fn init_params(spec: &MlpSpec, seed: u64, scale: f64) -> Result<ParamVector> {
    if !(scale > 0.0) {
        return Err(Error::contract("init scale must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut theta = vec![0.0; spec.param_count()];
    for layer in spec.layers() {
        let std = scale / (layer.in_dim as f64).sqrt();
        let normal = Normal::new(0.0, std).expect("std is positive");
        for v in &mut theta[layer.weight_offset..layer.end()] {
            *v = normal.sample(&mut rng);
        }
    }
    Ok(ParamVector(theta))
}

/// `d` input/label pairs stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DatasetRepr")]
pub struct Dataset {
    input_dim: usize,
    output_dim: usize,
    inputs: Vec<f64>,
    labels: Vec<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DatasetRepr {
    input_dim: usize,
    output_dim: usize,
    inputs: Vec<f64>,
    labels: Vec<f64>,
}

impl TryFrom<DatasetRepr> for Dataset {
    type Error = Error;

    fn try_from(r: DatasetRepr) -> Result<Self> {
        if r.input_dim == 0
            || r.output_dim == 0
            || !r.inputs.len().is_multiple_of(r.input_dim)
            || !r.labels.len().is_multiple_of(r.output_dim)
        {
            return Err(Error::contract("malformed dataset dimensions"));
        }
        let inputs = r.inputs.chunks(r.input_dim).map(<[f64]>::to_vec).collect();
        let labels = r.labels.chunks(r.output_dim).map(<[f64]>::to_vec).collect();
        Dataset::new(inputs, labels)
    }
}

impl Dataset {
    /// Builds a dataset from per-point vectors. Inputs are not required to be
    /// distinct here; constructions check that themselves.
    pub fn new(inputs: Vec<Vec<f64>>, labels: Vec<Vec<f64>>) -> Result<Self> {
        if inputs.is_empty() {
            return Err(Error::contract("dataset needs at least one point"));
        }
        if inputs.len() != labels.len() {
            return Err(Error::DimensionMismatch {
                context: "dataset labels",
                expected: inputs.len(),
                got: labels.len(),
            });
        }
        let p = inputs[0].len();
        let l = labels[0].len();
        if p == 0 || l == 0 {
            return Err(Error::contract("input and label dimensions must be >= 1"));
        }
        let mut flat_x = Vec::with_capacity(p * inputs.len());
        let mut flat_y = Vec::with_capacity(l * labels.len());
        for (x, y) in inputs.iter().zip(&labels) {
            if x.len() != p {
                return Err(Error::DimensionMismatch { context: "dataset input", expected: p, got: x.len() });
            }
            if y.len() != l {
                return Err(Error::DimensionMismatch { context: "dataset label", expected: l, got: y.len() });
            }
            flat_x.extend_from_slice(x);
            flat_y.extend_from_slice(y);
        }
        if flat_x.iter().chain(&flat_y).any(|v| !v.is_finite()) {
            return Err(Error::contract("dataset values must be finite"));
        }
        Ok(Self { input_dim: p, output_dim: l, inputs: flat_x, labels: flat_y })
    }

    /// Scalar-input, scalar-label dataset.
    pub fn scalar(xs: &[f64], ys: &[f64]) -> Result<Self> {
        Self::new(xs.iter().map(|&x| vec![x]).collect(), ys.iter().map(|&y| vec![y]).collect())
    }

    pub fn len(&self) -> usize {
        self.inputs.len() / self.input_dim
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn input(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.input_dim..(i + 1) * self.input_dim]
    }

    pub fn label(&self, i: usize) -> &[f64] {
        &self.labels[i * self.output_dim..(i + 1) * self.output_dim]
    }

    pub fn labels_flat(&self) -> &[f64] {
        &self.labels
    }

    pub fn with_labels_flat(&self, labels: Vec<f64>) -> Result<Self> {
        if labels.len() != self.labels.len() {
            return Err(Error::DimensionMismatch {
                context: "replacement labels",
                expected: self.labels.len(),
                got: labels.len(),
            });
        }
        Ok(Self { labels, ..self.clone() })
    }

    /// Reorders points; `order[k]` is the index of the point placed at `k`.
    pub fn permuted(&self, order: &[usize]) -> Self {
        let inputs = order.iter().flat_map(|&i| self.input(i).to_vec()).collect();
        let labels = order.iter().flat_map(|&i| self.label(i).to_vec()).collect();
        Self { inputs, labels, ..self.clone() }
    }

    /// Index pairs `(i, j)`, `i < j`, with exactly equal inputs.
    pub fn duplicate_inputs(&self) -> Vec<(usize, usize)> {
        let d = self.len();
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&a, &b| {
            self.input(a)
                .iter()
                .zip(self.input(b))
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        let mut dups = Vec::new();
        for w in order.windows(2) {
            if self.input(w[0]) == self.input(w[1]) {
                dups.push((w[0].min(w[1]), w[0].max(w[1])));
            }
        }
        dups
    }

    pub fn ensure_distinct_inputs(&self) -> Result<()> {
        match self.duplicate_inputs().first() {
            None => Ok(()),
            Some((i, j)) => Err(Error::contract(format!("inputs {i} and {j} coincide"))),
        }
    }
}

/// How labels are produced for synthetic data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LabelGenerator {
    /// Independent uniform draws from `[-1, 1]`.
    #[default]
    Uniform,
    /// Outputs of a randomly initialised network with the given architecture.
    Teacher,
}

impl FromStr for LabelGenerator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(LabelGenerator::Uniform),
            "teacher" => Ok(LabelGenerator::Teacher),
            other => Err(Error::contract(format!("unknown label generator {other:?}"))),
        }
    }
}

impl Dataset {
    /// `points` inputs drawn i.i.d. standard normal in `ℝᵖ` (redrawn on the
    /// off chance two coincide), labels per `generator`. `spec` fixes the
    /// dimensions and, for the teacher, the architecture.
    pub fn synthetic(spec: &MlpSpec, points: usize, generator: LabelGenerator, seed: u64) -> Result<Self> {
        spec.validate()?;
        if points == 0 {
            return Err(Error::contract("dataset needs at least one point"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, 1.0).expect("unit normal");
        let p = spec.input_dim;
        let mut inputs: Vec<Vec<f64>> = Vec::with_capacity(points);
        while inputs.len() < points {
            let x: Vec<f64> = (0..p).map(|_| normal.sample(&mut rng)).collect();
            if !inputs.contains(&x) {
                inputs.push(x);
            }
        }
        let labels: Vec<Vec<f64>> = match generator {
            LabelGenerator::Uniform => {
                (0..points).map(|_| (0..spec.output_dim).map(|_| rng.random_range(-1.0..=1.0)).collect()).collect()
            }
            LabelGenerator::Teacher => {
                let teacher = init_params(spec, rng.random(), 1.0)?;
                inputs.iter().map(|x| spec.forward_unchecked(&teacher, x)).collect()
            }
        };
        Dataset::new(inputs, labels)
    }
}
