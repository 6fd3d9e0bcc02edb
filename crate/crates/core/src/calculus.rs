//! Residuals, losses and their derivatives.
//!
//! Residual entry `(i, k)` (stored at `i * ℓ + k`) is `f_θ(x_i)_k - (y_i)_k`.
//! Gradients and Jacobian rows come from reverse sweeps over the recorded
//! forward pass; the Hessian is a central difference of the analytic gradient.
//! All reductions run in a fixed left-to-right order so repeated runs are
//! bit-identical.

use crate::dd::Dd;
use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;
use crate::network::{Activation, Dataset, MlpSpec, ParamVector, Trace};

/// Losses at or above this value (or non-finite) stop training as diverged.
pub const DIVERGENCE_LOSS: f64 = 1e12;

const HESSIAN_STEP: f64 = 6e-6;
const GRAD_CHECK_STEP: f64 = 1e-6;

fn check(spec: &MlpSpec, theta: &[f64], data: &Dataset) -> Result<()> {
    spec.check_params(theta)?;
    spec.check_dataset(data)
}

pub fn residuals(spec: &MlpSpec, theta: &ParamVector, data: &Dataset) -> Result<Vec<f64>> {
    check(spec, theta, data)?;
    Ok(residuals_unchecked(spec, theta, data))
}

pub(crate) fn residuals_unchecked(spec: &MlpSpec, theta: &[f64], data: &Dataset) -> Vec<f64> {
    let mut out = Vec::with_capacity(data.len() * spec.output_dim);
    for i in 0..data.len() {
        let f = spec.forward_unchecked(theta, data.input(i));
        out.extend(f.iter().zip(data.label(i)).map(|(a, b)| a - b));
    }
    out
}

/// `Σ |r|^a` over residual entries in storage order.
pub fn loss_of_residuals(r: &[f64], exponent: f64) -> f64 {
    if exponent == 2.0 {
        r.iter().map(|v| v * v).sum()
    } else if exponent == 1.0 {
        r.iter().map(|v| v.abs()).sum()
    } else {
        r.iter().map(|v| v.abs().powf(exponent)).sum()
    }
}

/// `Σ_i Σ_k |f_θ(x_i)_k - (y_i)_k|^a` for `a >= 1`.
pub fn loss(spec: &MlpSpec, theta: &ParamVector, data: &Dataset, exponent: f64) -> Result<f64> {
    if !(exponent >= 1.0) {
        return Err(Error::contract(format!("loss exponent must be >= 1, got {exponent}")));
    }
    check(spec, theta, data)?;
    Ok(loss_of_residuals(&residuals_unchecked(spec, theta, data), exponent))
}

pub(crate) fn squared_loss_unchecked(spec: &MlpSpec, theta: &[f64], data: &Dataset) -> f64 {
    loss_of_residuals(&residuals_unchecked(spec, theta, data), 2.0)
}

/// Accumulates `seedᵀ ∂f(x)/∂θ` into `grad`.
fn backward(spec: &MlpSpec, theta: &[f64], trace: &Trace, seed: &[f64], grad: &mut [f64]) {
    let layers = spec.layers();
    let mut delta = seed.to_vec();
    for t in (0..layers.len()).rev() {
        let layer = &layers[t];
        let input = &trace.outputs[t];
        for (o, &d) in delta.iter().enumerate() {
            if d == 0.0 {
                continue;
            }
            let w0 = layer.weight(o, 0);
            for (g, &x) in grad[w0..w0 + layer.in_dim].iter_mut().zip(input) {
                *g += d * x;
            }
            grad[layer.bias(o)] += d;
        }
        if t == 0 {
            break;
        }
        let mut prev = vec![0.0; layer.in_dim];
        for (o, &d) in delta.iter().enumerate() {
            if d == 0.0 {
                continue;
            }
            let w0 = layer.weight(o, 0);
            for (p, &w) in prev.iter_mut().zip(&theta[w0..w0 + layer.in_dim]) {
                *p += d * w;
            }
        }
        for (p, &z) in prev.iter_mut().zip(&trace.pre[t - 1]) {
            *p *= spec.activation.deriv(z);
        }
        delta = prev;
    }
}

/// Analytic gradient of the squared loss.
pub fn grad_loss(spec: &MlpSpec, theta: &ParamVector, data: &Dataset) -> Result<Vec<f64>> {
    check(spec, theta, data)?;
    Ok(grad_unchecked(spec, theta, data))
}

pub(crate) fn grad_unchecked(spec: &MlpSpec, theta: &[f64], data: &Dataset) -> Vec<f64> {
    let mut grad = vec![0.0; theta.len()];
    for i in 0..data.len() {
        let trace = spec.forward_trace(theta, data.input(i));
        let out = trace.outputs.last().expect("trace has an output layer");
        let seed: Vec<f64> = out.iter().zip(data.label(i)).map(|(f, y)| 2.0 * (f - y)).collect();
        backward(spec, theta, &trace, &seed, &mut grad);
    }
    grad
}

/// `ℓd x n` derivative of the residual map, one reverse sweep per row.
pub fn jacobian_residuals(spec: &MlpSpec, theta: &ParamVector, data: &Dataset) -> Result<DenseMatrix> {
    check(spec, theta, data)?;
    Ok(jacobian_unchecked(spec, theta, data))
}

pub(crate) fn jacobian_unchecked(spec: &MlpSpec, theta: &[f64], data: &Dataset) -> DenseMatrix {
    let l = spec.output_dim;
    let mut jac = DenseMatrix::zeros(data.len() * l, theta.len());
    let mut seed = vec![0.0; l];
    for i in 0..data.len() {
        let trace = spec.forward_trace(theta, data.input(i));
        for k in 0..l {
            seed.iter_mut().for_each(|s| *s = 0.0);
            seed[k] = 1.0;
            backward(spec, theta, &trace, &seed, jac.row_mut(i * l + k));
        }
    }
    jac
}

/// `2 Jᵀ J`, the exact Hessian of the squared loss wherever all residuals vanish.
pub fn gauss_newton_hessian(jacobian: &DenseMatrix) -> DenseMatrix {
    let mut g = jacobian.gram();
    g.scale(2.0);
    g
}

/// Central differences of the analytic gradient with step
/// `6e-6 (1 + |θ_i|)`, symmetrized.
pub fn hessian_loss(spec: &MlpSpec, theta: &ParamVector, data: &Dataset) -> Result<DenseMatrix> {
    check(spec, theta, data)?;
    let n = theta.len();
    let mut hess = DenseMatrix::zeros(n, n);
    let mut probe = theta.to_vec();
    for i in 0..n {
        let t = theta[i];
        let h = HESSIAN_STEP * (1.0 + t.abs());
        let (up, dn) = (t + h, t - h);
        probe[i] = up;
        let g_up = grad_unchecked(spec, &probe, data);
        probe[i] = dn;
        let g_dn = grad_unchecked(spec, &probe, data);
        probe[i] = t;
        let width = up - dn;
        for j in 0..n {
            hess[(j, i)] = (g_up[j] - g_dn[j]) / width;
        }
    }
    Ok(hess.symmetrized())
}

/// Largest coordinate-wise relative error between `analytic` and central
/// differences of the squared loss (step `1e-6 (1 + |θ_i|)`), using
/// `max(|fd|, |analytic|, 1e-8)` as the denominator.
///
/// The two loss values are computed in double-double arithmetic, so the
/// difference quotient carries only truncation error, not f64 cancellation.
pub fn grad_check_against(spec: &MlpSpec, theta: &ParamVector, data: &Dataset, analytic: &[f64]) -> Result<f64> {
    check(spec, theta, data)?;
    if analytic.len() != theta.len() {
        return Err(Error::DimensionMismatch {
            context: "analytic gradient",
            expected: theta.len(),
            got: analytic.len(),
        });
    }
    let mut probe = theta.to_vec();
    let mut worst = 0.0f64;
    for (i, &g_an) in analytic.iter().enumerate() {
        let t = theta[i];
        let h = GRAD_CHECK_STEP * (1.0 + t.abs());
        let (up, dn) = (t + h, t - h);
        probe[i] = up;
        let l_up = squared_loss_dd(spec, &probe, data);
        probe[i] = dn;
        let l_dn = squared_loss_dd(spec, &probe, data);
        probe[i] = t;
        let g_fd = (l_up - l_dn).to_f64() / (up - dn);
        let denom = g_fd.abs().max(g_an.abs()).max(1e-8);
        worst = worst.max((g_fd - g_an).abs() / denom);
    }
    Ok(worst)
}

fn activation_dd(act: Activation, z: Dd) -> Dd {
    if z.hi <= 0.0 {
        return Dd::ZERO;
    }
    match act {
        Activation::SmooLu => {
            if z.hi < 1e-300 {
                Dd::ZERO
            } else {
                z * (-(Dd::from_f64(1.0) / z)).exp()
            }
        }
        Activation::SmoothedRelu { knee } => {
            let k = Dd::from_f64(knee);
            if z.hi < knee {
                z * z / (k + k)
            } else {
                z - k * Dd::from_f64(0.5)
            }
        }
    }
}

/// Squared loss evaluated in double-double arithmetic; `theta` itself is exact.
fn squared_loss_dd(spec: &MlpSpec, theta: &[f64], data: &Dataset) -> Dd {
    let layers = spec.layers();
    let last = layers.len() - 1;
    let mut total = Dd::ZERO;
    for s in 0..data.len() {
        let mut cur: Vec<Dd> = data.input(s).iter().map(|&v| Dd::from_f64(v)).collect();
        for (t, layer) in layers.iter().enumerate() {
            cur = (0..layer.out_dim)
                .map(|o| {
                    let mut z = Dd::from_f64(theta[layer.bias(o)]);
                    for (i, &c) in cur.iter().enumerate() {
                        z = z + Dd::from_f64(theta[layer.weight(o, i)]) * c;
                    }
                    if t == last {
                        z
                    } else {
                        activation_dd(spec.activation, z)
                    }
                })
                .collect();
        }
        for (f, &y) in cur.iter().zip(data.label(s)) {
            let r = *f - Dd::from_f64(y);
            total = total + r * r;
        }
    }
    total
}

/// [`grad_check_against`] applied to [`grad_loss`].
pub fn grad_check(spec: &MlpSpec, theta: &ParamVector, data: &Dataset) -> Result<f64> {
    let g = grad_loss(spec, theta, data)?;
    grad_check_against(spec, theta, data, &g)
}

/// Knobs for [`train_gd`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainOptions {
    pub lr: f64,
    pub max_iters: usize,
    pub target_loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub theta: ParamVector,
    /// Loss before every update plus the final loss; at most `max_iters + 1` entries.
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl TrainOutcome {
    pub fn final_loss(&self) -> f64 {
        *self.trace.last().expect("trace is never empty")
    }
}

/// Plain full-batch gradient descent on the squared loss.
pub fn train_gd(spec: &MlpSpec, theta0: &ParamVector, data: &Dataset, opts: TrainOptions) -> Result<TrainOutcome> {
    check(spec, theta0, data)?;
    if !(opts.lr >= 0.0) || !opts.lr.is_finite() {
        return Err(Error::contract("learning rate must be finite and nonnegative"));
    }
    let mut theta = theta0.to_vec();
    let mut trace = Vec::with_capacity(opts.max_iters.min(1 << 20) + 1);
    let mut iterations = 0;
    loop {
        let l = squared_loss_unchecked(spec, &theta, data);
        if !l.is_finite() || l > DIVERGENCE_LOSS {
            return Err(Error::Divergence { iteration: iterations, loss: l });
        }
        trace.push(l);
        if l <= opts.target_loss {
            return Ok(TrainOutcome { theta: ParamVector::from_raw(theta), trace, iterations, converged: true });
        }
        if iterations == opts.max_iters {
            return Ok(TrainOutcome { theta: ParamVector::from_raw(theta), trace, iterations, converged: false });
        }
        let g = grad_unchecked(spec, &theta, data);
        for (t, gi) in theta.iter_mut().zip(&g) {
            *t -= opts.lr * gi;
        }
        iterations += 1;
    }
}

/// The squared-loss gradient `2 Jᵀ r` assembled from the Jacobian.
pub fn gradient_from_jacobian(jacobian: &DenseMatrix, residuals: &[f64]) -> Result<Vec<f64>> {
    let mut g = jacobian.tr_matvec(residuals)?;
    g.iter_mut().for_each(|v| *v *= 2.0);
    Ok(g)
}

/// Max over coordinates of `|a - b| / max(|a|, |b|, floor)`.
pub fn max_relative_error(a: &[f64], b: &[f64], floor: f64) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(floor)).fold(0.0, f64::max)
}

/// Directional derivative of the residual map along `v`, by central differences.
pub fn residual_directional_fd(
    spec: &MlpSpec,
    theta: &ParamVector,
    data: &Dataset,
    v: &[f64],
    step: f64,
) -> Result<Vec<f64>> {
    check(spec, theta, data)?;
    let up: Vec<f64> = theta.iter().zip(v).map(|(t, d)| t + step * d).collect();
    let dn: Vec<f64> = theta.iter().zip(v).map(|(t, d)| t - step * d).collect();
    let ru = residuals_unchecked(spec, &up, data);
    let rd = residuals_unchecked(spec, &dn, data);
    Ok(ru.iter().zip(&rd).map(|(a, b)| (a - b) / (2.0 * step)).collect())
}
