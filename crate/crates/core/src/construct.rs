//! Explicit zero-loss constructions: exact memorization by one hidden layer,
//! embedding into deeper networks, and small label perturbations.
//!
//! The shallow construction ties every hidden row to one direction `a`,
//! sorts the data by `a·x`, and places hidden biases at the midpoints
//! between consecutive projections. With a rectified activation the
//! activation matrix `A[i][j] = σ(a·x_i − b_j)` (rows in sorted order) is
//! lower triangular with positive diagonal, so the output weights follow
//! from forward substitution.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::calculus::residuals_unchecked;
use crate::error::{Error, Result};
use crate::linalg::{dot, norm2, solve_lower_triangular, DenseMatrix};
use crate::network::{Activation, Dataset, MlpSpec, ParamVector};

pub const DEFAULT_FIT_TOLERANCE: f64 = 1e-8;
pub const DEFAULT_MAX_ATTEMPTS: usize = 64;

/// A projection direction together with the sorted projected data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionChoice {
    /// Already scaled so that the smallest consecutive gap equals `gap`.
    pub direction: Vec<f64>,
    /// `order[k]` is the data index with the `k`-th smallest projection.
    pub order: Vec<usize>,
    /// `direction · x_{order[k]}`, ascending.
    pub sorted: Vec<f64>,
    /// Virtual point one gap below the smallest projection.
    pub anchor: f64,
    pub gap: f64,
}

impl ProjectionChoice {
    /// Projects onto `direction` and rescales it so the minimum consecutive
    /// gap becomes `gap`. Fails if two projections coincide.
    pub fn with_direction(data: &Dataset, direction: &[f64], gap: f64) -> Result<Self> {
        if direction.len() != data.input_dim() {
            return Err(Error::DimensionMismatch {
                context: "projection direction",
                expected: data.input_dim(),
                got: direction.len(),
            });
        }
        if !(gap > 0.0) || !gap.is_finite() {
            return Err(Error::contract("projection gap must be positive and finite"));
        }
        let raw = project(data, direction);
        let order = sorted_order(&raw);
        let min_gap = min_consecutive_gap(&raw, &order);
        if min_gap.is_some_and(|g| !(g > 0.0)) {
            return Err(Error::contract("projection does not separate the inputs"));
        }
        let scale = match min_gap {
            Some(g) => gap / g,
            // A single point has no gap; keep the direction at unit length.
            None => gap / norm2(direction).max(f64::MIN_POSITIVE),
        };
        let direction: Vec<f64> = direction.iter().map(|v| v * scale).collect();
        if direction.iter().any(|v| !v.is_finite()) {
            return Err(Error::contract("projection gap is too small to rescale"));
        }
        let values = project(data, &direction);
        let order = sorted_order(&values);
        let sorted: Vec<f64> = order.iter().map(|&i| values[i]).collect();
        if sorted.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::contract("projection does not separate the inputs"));
        }
        Ok(Self { anchor: sorted[0] - gap, direction, order, sorted, gap })
    }

    /// Hidden biases in network convention (`-b_j`, with `b_j` the midpoint
    /// between projections `j-1` and `j`).
    pub fn hidden_biases(&self) -> Vec<f64> {
        let mut prev = self.anchor;
        self.sorted
            .iter()
            .map(|&z| {
                let mid = 0.5 * (prev + z);
                prev = z;
                -mid
            })
            .collect()
    }
}

fn project(data: &Dataset, direction: &[f64]) -> Vec<f64> {
    (0..data.len()).map(|i| dot(direction, data.input(i))).collect()
}

fn sorted_order(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    order
}

fn min_consecutive_gap(values: &[f64], order: &[usize]) -> Option<f64> {
    order.windows(2).map(|w| values[w[1]] - values[w[0]]).reduce(f64::min)
}

fn random_unit(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let n = norm2(&v);
        if n > 1e-12 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// Draws random unit directions until the projections are pairwise
/// distinct, then rescales so the minimum gap is 1.
pub fn choose_projection(data: &Dataset, seed: u64, max_attempts: usize) -> Result<ProjectionChoice> {
    data.ensure_distinct_inputs()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    draw_projection(data, &mut rng, max_attempts, 1.0)
}

fn draw_projection(data: &Dataset, rng: &mut ChaCha8Rng, max_attempts: usize, gap: f64) -> Result<ProjectionChoice> {
    for _ in 0..max_attempts {
        let a = random_unit(rng, data.input_dim());
        if let Ok(choice) = ProjectionChoice::with_direction(data, &a, gap) {
            return Ok(choice);
        }
    }
    Err(Error::ProjectionFailure { attempts: max_attempts })
}

/// How [`exact_fit_shallow`] searches over projections.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub seed: u64,
    /// Random directions tried; each is combined with every entry of `gaps`.
    pub directions: usize,
    /// Candidate minimum gaps after rescaling.
    pub gaps: Vec<f64>,
    pub tolerance: f64,
    pub max_attempts: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            directions: 8,
            gaps: vec![2.0, 3.0, 4.0, 6.0, 8.0, 12.0, 16.0, 24.0, 32.0],
            tolerance: DEFAULT_FIT_TOLERANCE,
            max_attempts: DEFAULT_MAX_ATTEMPTS,
        }
    }
}

impl FitOptions {
    pub fn with_seed(seed: u64) -> Self {
        Self { seed, ..Self::default() }
    }

    /// One direction with minimum gap 1: the textbook construction, no search.
    pub fn single(seed: u64) -> Self {
        Self { seed, directions: 1, gaps: vec![1.0], ..Self::default() }
    }

    fn validate(&self) -> Result<()> {
        if self.directions == 0 || self.gaps.is_empty() || self.max_attempts == 0 {
            return Err(Error::contract("fit options need at least one direction, gap and attempt"));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::contract("fit tolerance must be positive"));
        }
        Ok(())
    }
}

/// Parameters of an exact fit plus the evidence that they are one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExactFitCertificate {
    pub spec: MlpSpec,
    pub params: ParamVector,
    pub projection: ProjectionChoice,
    /// `A[k][j] = σ(a·x_{order[k]} − b_j)`; shared by all output coordinates.
    pub triangular: DenseMatrix,
    pub diagonal: Vec<f64>,
    pub min_diagonal: f64,
    pub max_entry: f64,
    /// `max_k |f(x_i)_k − y_{ik}|` in original data order.
    pub residuals: Vec<f64>,
    pub max_residual: f64,
    pub tolerance: f64,
}

/// Builds a zero-loss point of a one-hidden-layer network of width `width`.
///
/// Output coordinate `k` uses hidden units `k·d .. (k+1)·d`; all of them share
/// the same projection, so `width >= ℓ·d` is required. Remaining hidden units
/// and the output biases are zero. Among all (direction, gap) candidates that
/// reproduce the labels within `opts.tolerance`, the one with the smallest
/// largest parameter magnitude is returned.
pub fn exact_fit_shallow(
    data: &Dataset,
    width: usize,
    activation: Activation,
    opts: &FitOptions,
) -> Result<ExactFitCertificate> {
    opts.validate()?;
    activation.validate()?;
    if !activation.is_rectified() {
        return Err(Error::contract(format!("activation {activation} is not rectified")));
    }
    let d = data.len();
    let l = data.output_dim();
    if width < l * d {
        return Err(Error::contract(format!("width {width} is below outputs x points = {}", l * d)));
    }
    data.ensure_distinct_inputs()?;
    let spec = MlpSpec::shallow(data.input_dim(), width, l, activation)?;

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut best: Option<(f64, ExactFitCertificate)> = None;
    let mut closest: Option<ExactFitCertificate> = None;
    for _ in 0..opts.directions {
        let unit = draw_projection(data, &mut rng, opts.max_attempts, 1.0)?.direction;
        for &gap in &opts.gaps {
            let Ok(projection) = ProjectionChoice::with_direction(data, &unit, gap) else {
                continue;
            };
            let cert = build_candidate(data, &spec, projection, opts.tolerance)?;
            if cert.max_residual <= opts.tolerance {
                let size = cert.params.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                if best.as_ref().is_none_or(|(s, _)| size < *s) {
                    best = Some((size, cert));
                }
            } else if closest.as_ref().is_none_or(|c| !(c.max_residual <= cert.max_residual)) {
                closest = Some(cert);
            }
        }
    }
    match (best, closest) {
        (Some((_, cert)), _) => Ok(cert),
        (None, Some(c)) => Err(Error::Certificate {
            max_residual: c.max_residual,
            tolerance: opts.tolerance,
            min_diagonal: c.min_diagonal,
        }),
        (None, None) => Err(Error::ProjectionFailure { attempts: opts.max_attempts }),
    }
}

/// The construction for one fixed projection; the certificate is returned
/// even when its residual exceeds `tolerance`.
pub fn exact_fit_with_projection(
    data: &Dataset,
    width: usize,
    activation: Activation,
    projection: ProjectionChoice,
    tolerance: f64,
) -> Result<ExactFitCertificate> {
    if !activation.is_rectified() {
        return Err(Error::contract(format!("activation {activation} is not rectified")));
    }
    let l = data.output_dim();
    if width < l * data.len() {
        return Err(Error::contract("width is below outputs x points"));
    }
    if projection.order.len() != data.len() || projection.direction.len() != data.input_dim() {
        return Err(Error::contract("projection does not belong to this dataset"));
    }
    let spec = MlpSpec::shallow(data.input_dim(), width, l, activation)?;
    build_candidate(data, &spec, projection, tolerance)
}

fn build_candidate(
    data: &Dataset,
    spec: &MlpSpec,
    projection: ProjectionChoice,
    tolerance: f64,
) -> Result<ExactFitCertificate> {
    let d = data.len();
    let l = data.output_dim();
    let act = spec.activation;
    let biases = projection.hidden_biases();
    let a = &projection.direction;

    // Same floating-point expression as the forward pass, so the exact zeros
    // above the diagonal are the ones the network will see.
    let mut tri = DenseMatrix::zeros(d, d);
    for (k, &i) in projection.order.iter().enumerate() {
        let z = dot(a, data.input(i));
        for (j, &c) in biases.iter().enumerate() {
            tri.row_mut(k)[j] = act.eval(z + c);
        }
    }

    let layers = spec.layers();
    let (hidden, output) = (layers[0], layers[1]);
    let mut theta = vec![0.0; spec.param_count()];
    for k in 0..l {
        let rhs: Vec<f64> = projection.order.iter().map(|&i| data.label(i)[k]).collect();
        let m = solve_lower_triangular(&tri, &rhs)?;
        for j in 0..d {
            let unit = k * d + j;
            theta[hidden.weight(unit, 0)..hidden.weight(unit, 0) + a.len()].copy_from_slice(a);
            theta[hidden.bias(unit)] = biases[j];
            theta[output.weight(k, unit)] = m[j];
        }
    }

    let diagonal: Vec<f64> = (0..d).map(|j| tri[(j, j)]).collect();
    let min_diagonal = diagonal.iter().copied().fold(f64::INFINITY, f64::min);
    let max_entry = tri.max_abs();
    let r = residuals_unchecked(spec, &theta, data);
    let residuals: Vec<f64> = r.chunks(l).map(|c| c.iter().fold(0.0f64, |m, v| m.max(v.abs()))).collect();
    let mut max_residual = residuals.iter().copied().fold(0.0f64, f64::max);
    if theta.iter().any(|v| !v.is_finite()) {
        max_residual = f64::INFINITY;
        theta.iter_mut().for_each(|v| {
            if !v.is_finite() {
                *v = 0.0
            }
        });
    }
    Ok(ExactFitCertificate {
        spec: spec.clone(),
        params: ParamVector::from_raw(theta),
        projection,
        triangular: tri,
        diagonal,
        min_diagonal,
        max_entry,
        residuals,
        max_residual,
        tolerance,
    })
}

/// A deep zero-loss point built from a shallow one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeepEmbedding {
    pub spec: MlpSpec,
    pub params: ParamVector,
    /// `layer_values[t][i]`: output of unit 0 of hidden layer `t+1` at `x_i`,
    /// for every hidden layer except the last.
    pub layer_values: Vec<Vec<f64>>,
    /// Fit of the last hidden layer against the scalar features that reach it.
    pub last_layer: ExactFitCertificate,
    pub max_residual: f64,
}

/// Embeds an exact fit into a network with hidden widths `widths`.
///
/// Hidden layer 1 computes `σ(a·x + c)` in unit 0, with `a` the certificate's
/// direction and `c` chosen so every pre-activation is positive. Layers
/// `2..T−1` pass unit 0 through with weight 1 and bias 0. Since σ is
/// strictly increasing on positives the scalar features stay distinct, and the
/// last hidden layer plus output layer are an exact shallow fit on them.
/// With `T = 1` this is the shallow fit itself at width `widths[0]`.
pub fn embed_deep(
    cert: &ExactFitCertificate,
    data: &Dataset,
    widths: &[usize],
    opts: &FitOptions,
) -> Result<DeepEmbedding> {
    let d = data.len();
    let l = data.output_dim();
    let Some(&last_width) = widths.last() else {
        return Err(Error::contract("at least one hidden layer is required"));
    };
    if last_width < l * d {
        return Err(Error::contract(format!("last hidden width {last_width} is below outputs x points = {}", l * d)));
    }
    if cert.projection.direction.len() != data.input_dim() || cert.projection.order.len() != d {
        return Err(Error::contract("certificate does not belong to this dataset"));
    }
    let act = cert.spec.activation;
    let spec = MlpSpec::new(data.input_dim(), widths.to_vec(), l, act)?;
    let t_count = widths.len();

    if t_count == 1 {
        let last = exact_fit_shallow(data, last_width, act, opts)?;
        return Ok(DeepEmbedding {
            spec,
            params: last.params.clone(),
            layer_values: Vec::new(),
            max_residual: last.max_residual,
            last_layer: last,
        });
    }

    let layers = spec.layers();
    let mut theta = vec![0.0; spec.param_count()];
    let a = &cert.projection.direction;
    let projected = project(data, a);
    let lowest = projected.iter().copied().fold(f64::INFINITY, f64::min);
    // Each smooth pass-through lowers large values by roughly one, so start
    // high enough that the smallest feature stays well inside (0, ∞).
    let shift = (t_count + 2) as f64 - lowest;
    let first = layers[0];
    theta[first.weight(0, 0)..first.weight(0, 0) + a.len()].copy_from_slice(a);
    theta[first.bias(0)] = shift;

    let mut values: Vec<f64> = projected.iter().map(|z| act.eval(z + shift)).collect();
    let mut layer_values = vec![values.clone()];
    for layer in &layers[1..t_count - 1] {
        theta[layer.weight(0, 0)] = 1.0;
        values = values.iter().map(|&v| act.eval(v)).collect();
        layer_values.push(values.clone());
    }
    for (t, vals) in layer_values.iter().enumerate() {
        if vals.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::contract(format!("feature of hidden layer {} is not positive", t + 1)));
        }
        let order = sorted_order(vals);
        if order.windows(2).any(|w| !(vals[w[1]] > vals[w[0]])) {
            return Err(Error::contract(format!("features of hidden layer {} coincide", t + 1)));
        }
    }

    let features =
        Dataset::new(values.iter().map(|&v| vec![v]).collect(), (0..d).map(|i| data.label(i).to_vec()).collect())?;
    let last = exact_fit_shallow(&features, last_width, act, opts)?;
    let shallow_layers = last.spec.layers();
    let (src_hidden, src_out) = (shallow_layers[0], shallow_layers[1]);
    let (dst_hidden, dst_out) = (layers[t_count - 1], layers[t_count]);
    for u in 0..last_width {
        theta[dst_hidden.weight(u, 0)] = last.params[src_hidden.weight(u, 0)];
        theta[dst_hidden.bias(u)] = last.params[src_hidden.bias(u)];
    }
    theta[dst_out.weight_offset..dst_out.end()].copy_from_slice(&last.params[src_out.weight_offset..src_out.end()]);

    let r = residuals_unchecked(&spec, &theta, data);
    let max_residual = r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if !(max_residual <= opts.tolerance) {
        return Err(Error::Certificate { max_residual, tolerance: opts.tolerance, min_diagonal: last.min_diagonal });
    }
    Ok(DeepEmbedding { spec, params: ParamVector::from_raw(theta), layer_values, last_layer: last, max_residual })
}

/// Adds a perturbation drawn uniformly from the open ball of radius `eps` in
/// label space (dimension `ℓ·d`) to all labels. Inputs are untouched.
pub fn perturb_labels(data: &Dataset, eps: f64, seed: u64) -> Result<Dataset> {
    if !(eps >= 0.0) || !eps.is_finite() {
        return Err(Error::contract("perturbation radius must be finite and nonnegative"));
    }
    if eps == 0.0 {
        return Ok(data.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = data.labels_flat().len();
    let dir = random_unit(&mut rng, dim);
    let u: f64 = rng.random();
    let radius = eps * u.powf(1.0 / dim as f64);
    let labels = data.labels_flat().iter().zip(&dir).map(|(y, v)| y + radius * v).collect();
    data.with_labels_flat(labels)
}

/// Moves every repeated input (all but the first copy) by a random vector of
/// norm `eps`, so that all inputs become distinct. Labels are untouched.
pub fn separate_duplicates(data: &Dataset, eps: f64, seed: u64) -> Result<Dataset> {
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(Error::contract("separation distance must be positive and finite"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut inputs: Vec<Vec<f64>> = (0..data.len()).map(|i| data.input(i).to_vec()).collect();
    let labels: Vec<Vec<f64>> = (0..data.len()).map(|i| data.label(i).to_vec()).collect();
    for _ in 0..16 {
        let current = Dataset::new(inputs.clone(), labels.clone())?;
        let dups = current.duplicate_inputs();
        if dups.is_empty() {
            return Ok(current);
        }
        for (_, j) in dups {
            let v = random_unit(&mut rng, data.input_dim());
            for (x, dv) in inputs[j].iter_mut().zip(&v) {
                *x += eps * dv;
            }
        }
    }
    Err(Error::contract("could not separate duplicate inputs"))
}
