//! Geometry of the zero-loss set: spectrum classification, dimension and
//! tangent space estimates, and predictor–corrector walks along the set.

use serde::{Deserialize, Serialize};

use crate::calculus::{
    gauss_newton_hessian, hessian_loss, jacobian_unchecked, residuals_unchecked, squared_loss_unchecked,
};
use crate::error::{Error, Result};
use crate::linalg::{dot, eig_sym, norm2, norm_inf, numerical_rank, svd, DenseMatrix};
use crate::network::{Dataset, MlpSpec, ParamVector};

/// Squared loss at or below which a point counts as lying on the zero set.
pub const ZERO_LOSS_GATE: f64 = 1e-16;
/// Relative zero threshold for finite-difference Hessian spectra.
pub const FD_ZERO_TOL: f64 = 1e-6;
/// Relative zero threshold for Gauss–Newton spectra.
pub const GN_ZERO_TOL: f64 = 1e-10;
/// Relative singular-value cutoff in the corrector's pseudo-inverse.
pub const PINV_CUTOFF: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpectrumCounts {
    pub negative: usize,
    pub zero: usize,
    pub positive: usize,
}

impl SpectrumCounts {
    /// What the zero set predicts at a regular point: `codim` positive
    /// eigenvalues, the rest zero.
    pub fn expected(n: usize, codim: usize) -> Self {
        Self { negative: 0, zero: n.saturating_sub(codim), positive: codim.min(n) }
    }

    pub fn total(&self) -> usize {
        self.negative + self.zero + self.positive
    }
}

/// Counts eigenvalues below `-tol_zero`, within `±tol_zero`, and above it.
pub fn classify_spectrum(eigenvalues: &[f64], tol_zero: f64) -> Result<SpectrumCounts> {
    if !(tol_zero > 0.0) {
        return Err(Error::contract("tol_zero must be positive"));
    }
    if eigenvalues.windows(2).any(|w| !(w[0] <= w[1])) {
        return Err(Error::contract("eigenvalues must be sorted ascending"));
    }
    let negative = eigenvalues.iter().filter(|&&l| l < -tol_zero).count();
    let positive = eigenvalues.iter().filter(|&&l| l > tol_zero).count();
    Ok(SpectrumCounts { negative, zero: eigenvalues.len() - negative - positive, positive })
}

/// One classified spectrum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifiedSpectrum {
    pub eigenvalues: Vec<f64>,
    /// Absolute threshold actually used.
    pub tol_zero: f64,
    /// Threshold relative to the largest |eigenvalue|.
    pub rel_tol: f64,
    pub counts: SpectrumCounts,
}

impl ClassifiedSpectrum {
    pub fn new(eigenvalues: Vec<f64>, rel_tol: f64) -> Result<Self> {
        let scale = eigenvalues.iter().fold(0.0f64, |m, l| m.max(l.abs()));
        // An all-zero spectrum still needs a positive threshold.
        let tol_zero = (rel_tol * scale).max(f64::MIN_POSITIVE);
        let counts = classify_spectrum(&eigenvalues, tol_zero)?;
        Ok(Self { eigenvalues, tol_zero, rel_tol, counts })
    }

    pub fn max_eigenvalue(&self) -> f64 {
        self.eigenvalues.last().copied().unwrap_or(0.0)
    }
}

/// Hessian spectra at a point: finite-difference and Gauss–Newton.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumReport {
    pub n: usize,
    pub d: usize,
    pub outputs: usize,
    pub loss: f64,
    pub finite_difference: ClassifiedSpectrum,
    pub gauss_newton: ClassifiedSpectrum,
    /// `max_k |λ_k(FD) − λ_k(GN)|` over the sorted spectra.
    pub max_deviation: f64,
}

impl SpectrumReport {
    pub fn expected(&self) -> SpectrumCounts {
        SpectrumCounts::expected(self.n, self.outputs * self.d)
    }

    pub fn on_manifold(&self) -> bool {
        self.loss <= ZERO_LOSS_GATE
    }
}

/// Both Hessian spectra at `theta`; meaningful off the zero set too, where
/// the Gauss–Newton matrix is no longer the Hessian.
pub fn hessian_spectrum_at(spec: &MlpSpec, theta: &ParamVector, data: &Dataset) -> Result<SpectrumReport> {
    let hess = hessian_loss(spec, theta, data)?;
    let fd = eig_sym(&hess)?;
    let jac = jacobian_unchecked(spec, theta, data);
    let gn = eig_sym(&gauss_newton_hessian(&jac))?;
    let max_deviation = fd.eigenvalues.iter().zip(&gn.eigenvalues).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    Ok(SpectrumReport {
        n: spec.param_count(),
        d: data.len(),
        outputs: data.output_dim(),
        loss: squared_loss_unchecked(spec, theta, data),
        finite_difference: ClassifiedSpectrum::new(fd.eigenvalues, FD_ZERO_TOL)?,
        gauss_newton: ClassifiedSpectrum::new(gn.eigenvalues, GN_ZERO_TOL)?,
        max_deviation,
    })
}

fn on_manifold_gate(spec: &MlpSpec, theta: &ParamVector, data: &Dataset, gate: f64) -> Result<()> {
    spec.check_params(theta)?;
    spec.check_dataset(data)?;
    let loss = squared_loss_unchecked(spec, theta, data);
    if !(loss <= gate) {
        return Err(Error::NotOnManifold { loss, gate });
    }
    Ok(())
}

/// Numerical rank of the residual Jacobian, at any point.
pub fn jacobian_rank(spec: &MlpSpec, theta: &ParamVector, data: &Dataset, rel_tol: f64) -> Result<usize> {
    spec.check_params(theta)?;
    spec.check_dataset(data)?;
    let s = svd(&jacobian_unchecked(spec, theta, data))?;
    numerical_rank(&s.singular_values, rel_tol)
}

/// `n − rank(J)` at a point of the zero set.
pub fn manifold_dimension(spec: &MlpSpec, theta: &ParamVector, data: &Dataset, rel_tol: f64) -> Result<usize> {
    on_manifold_gate(spec, theta, data, ZERO_LOSS_GATE)?;
    Ok(spec.param_count() - jacobian_rank(spec, theta, data, rel_tol)?)
}

/// Orthonormal basis (columns) of the kernel of `J` at a point of the zero set.
pub fn tangent_basis(spec: &MlpSpec, theta: &ParamVector, data: &Dataset, rel_tol: f64) -> Result<DenseMatrix> {
    on_manifold_gate(spec, theta, data, ZERO_LOSS_GATE)?;
    kernel(&jacobian_unchecked(spec, theta, data), rel_tol)
}

fn kernel(jac: &DenseMatrix, rel_tol: f64) -> Result<DenseMatrix> {
    let s = svd(jac)?;
    let rank = numerical_rank(&s.singular_values, rel_tol)?;
    let n = jac.cols();
    let mut basis = DenseMatrix::zeros(n, n - rank);
    for k in rank..n {
        for i in 0..n {
            basis[(i, k - rank)] = s.v[(i, k)];
        }
    }
    Ok(basis)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrectorOptions {
    /// Target for `‖H(θ)‖∞`.
    pub tol: f64,
    pub max_iters: usize,
    pub cutoff: f64,
}

impl Default for CorrectorOptions {
    fn default() -> Self {
        Self { tol: 1e-12, max_iters: 20, cutoff: PINV_CUTOFF }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Correction {
    pub theta: ParamVector,
    pub iterations: usize,
    /// Final `‖H(θ)‖∞`.
    pub residual: f64,
    /// Smallest number of singular values kept by the pseudo-inverse.
    pub min_rank: usize,
}

/// Gauss–Newton minimum-norm iteration `θ ← θ − J⁺ H(θ)` until
/// `‖H(θ)‖∞ ≤ tol`. Singular values below `cutoff · s₁` are dropped.
pub fn correct_to_manifold(
    spec: &MlpSpec,
    theta: &ParamVector,
    data: &Dataset,
    opts: CorrectorOptions,
) -> Result<Correction> {
    spec.check_params(theta)?;
    spec.check_dataset(data)?;
    if !(opts.tol > 0.0) || !(opts.cutoff > 0.0) {
        return Err(Error::contract("corrector tolerances must be positive"));
    }
    let mut th = theta.to_vec();
    let mut min_rank = usize::MAX;
    let mut iterations = 0;
    loop {
        let r = residuals_unchecked(spec, &th, data);
        let res = norm_inf(&r);
        if !res.is_finite() {
            return Err(Error::Corrector { iterations, residual: res, reason: "residual is not finite".into() });
        }
        if res <= opts.tol {
            return Ok(Correction {
                theta: ParamVector::from_raw(th),
                iterations,
                residual: res,
                min_rank: if min_rank == usize::MAX { r.len() } else { min_rank },
            });
        }
        if iterations == opts.max_iters {
            return Err(Error::Corrector { iterations, residual: res, reason: "iteration limit reached".into() });
        }
        let jac = jacobian_unchecked(spec, &th, data);
        let dec = svd(&jac)?;
        if dec.largest() == 0.0 {
            return Err(Error::Corrector { iterations, residual: res, reason: "Jacobian vanishes".into() });
        }
        min_rank = min_rank.min(numerical_rank(&dec.singular_values, opts.cutoff)?);
        let step = dec.pseudo_solve(&r, opts.cutoff)?;
        for (t, s) in th.iter_mut().zip(&step) {
            *t -= s;
        }
        iterations += 1;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WalkOptions {
    pub steps: usize,
    pub step_size: f64,
    /// Loss bound every accepted point must meet.
    pub loss_tol: f64,
    /// Relative rank tolerance for the tangent space.
    pub rank_tol: f64,
    pub corrector: CorrectorOptions,
}

impl Default for WalkOptions {
    fn default() -> Self {
        Self {
            steps: 100,
            step_size: 1e-2,
            loss_tol: ZERO_LOSS_GATE,
            rank_tol: crate::linalg::DEFAULT_RANK_TOL,
            corrector: CorrectorOptions::default(),
        }
    }
}

/// Points visited by [`walk_manifold`], starting with the base point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifoldPath {
    pub points: Vec<ParamVector>,
    pub losses: Vec<f64>,
    /// `‖θ_k − θ_{k−1}‖` for each accepted step.
    pub step_lengths: Vec<f64>,
    pub corrector_iterations: Vec<usize>,
    /// Why the walk stopped early, if it did.
    pub failure: Option<String>,
}

impl ManifoldPath {
    pub fn base(&self) -> &ParamVector {
        &self.points[0]
    }

    pub fn last(&self) -> &ParamVector {
        self.points.last().expect("a path always holds its base point")
    }

    pub fn arc_length(&self) -> f64 {
        self.step_lengths.iter().sum()
    }

    pub fn displacement(&self) -> f64 {
        distance(self.base(), self.last())
    }

    pub fn max_loss(&self) -> f64 {
        self.losses.iter().copied().fold(0.0, f64::max)
    }

    pub fn completed(&self) -> bool {
        self.failure.is_none()
    }
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Predictor–corrector walk on the zero set.
///
/// Each step moves `step_size` along a unit tangent vector and corrects back
/// with [`correct_to_manifold`]. The first direction is the first kernel basis
/// vector; later ones are the previous direction projected onto the current
/// tangent space, which keeps the walk heading the same way even when the
/// kernel basis itself rotates between points. If that projection is short
/// (norm below 1/2) the first basis vector is used instead, its sign aligned
/// with the previous direction.
///
/// `theta0` must have loss at most `loss_tol`. A corrector failure, a step
/// that ends above `loss_tol`, or a step that moves less than `step_size / 2`
/// ends the walk; the path so far is returned with `failure` set.
pub fn walk_manifold(spec: &MlpSpec, theta0: &ParamVector, data: &Dataset, opts: WalkOptions) -> Result<ManifoldPath> {
    if !(opts.step_size > 0.0) || !opts.step_size.is_finite() {
        return Err(Error::contract("step size must be positive and finite"));
    }
    if !(opts.loss_tol > 0.0) {
        return Err(Error::contract("loss tolerance must be positive"));
    }
    on_manifold_gate(spec, theta0, data, opts.loss_tol)?;
    let mut path = ManifoldPath {
        points: vec![theta0.clone()],
        losses: vec![squared_loss_unchecked(spec, theta0, data)],
        step_lengths: Vec::new(),
        corrector_iterations: Vec::new(),
        failure: None,
    };
    let mut prev_dir: Option<Vec<f64>> = None;
    for _ in 0..opts.steps {
        let here = path.last().clone();
        let basis = kernel(&jacobian_unchecked(spec, &here, data), opts.rank_tol)?;
        if basis.cols() == 0 {
            path.failure = Some("tangent space is trivial".into());
            break;
        }
        let dir = next_direction(&basis, prev_dir.as_deref());
        let predicted: Vec<f64> = here.iter().zip(&dir).map(|(t, v)| t + opts.step_size * v).collect();
        let corrected = match correct_to_manifold(spec, &ParamVector::from_raw(predicted), data, opts.corrector) {
            Ok(c) => c,
            Err(e) => {
                path.failure = Some(e.to_string());
                break;
            }
        };
        let loss = squared_loss_unchecked(spec, &corrected.theta, data);
        if !(loss <= opts.loss_tol) {
            path.failure = Some(format!("loss {loss:e} above walk tolerance {:e}", opts.loss_tol));
            break;
        }
        let moved = distance(&here, &corrected.theta);
        if !(moved >= 0.5 * opts.step_size) {
            path.failure = Some(format!("step moved only {moved:e}"));
            break;
        }
        let actual: Vec<f64> = corrected.theta.iter().zip(here.iter()).map(|(a, b)| (a - b) / moved).collect();
        prev_dir = Some(actual);
        path.points.push(corrected.theta);
        path.losses.push(loss);
        path.step_lengths.push(moved);
        path.corrector_iterations.push(corrected.iterations);
    }
    Ok(path)
}

fn next_direction(basis: &DenseMatrix, prev: Option<&[f64]>) -> Vec<f64> {
    let first = basis.column(0);
    let Some(prev) = prev else {
        return first;
    };
    let coeffs = basis.tr_matvec(prev).expect("basis and direction share a dimension");
    let proj = basis.matvec(&coeffs).expect("coefficient count matches basis");
    let len = norm2(&proj);
    if len >= 0.5 {
        return proj.into_iter().map(|v| v / len).collect();
    }
    if dot(&first, prev) < 0.0 {
        first.into_iter().map(|v| -v).collect()
    } else {
        first
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calculus::{jacobian_residuals, loss, residual_directional_fd};
    use crate::construct::{exact_fit_shallow, FitOptions};
    use crate::linalg::singular_values;
    use crate::network::{init_params, Activation};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn fixture() -> (MlpSpec, ParamVector, Dataset) {
        let data = Dataset::scalar(&[0.0, 1.0], &[1.0, 2.0]).unwrap();
        let cert = exact_fit_shallow(&data, 2, Activation::SmooLu, &FitOptions::default()).unwrap();
        (cert.spec, cert.params, data)
    }

    #[test]
    fn classify_examples() {
        assert_eq!(
            classify_spectrum(&[-1.0, 0.0, 1.0], 1e-8).unwrap(),
            SpectrumCounts { negative: 1, zero: 1, positive: 1 }
        );
        assert_eq!(classify_spectrum(&[0.0; 4], 1e-8).unwrap(), SpectrumCounts::expected(4, 0));
        assert!(classify_spectrum(&[1.0, 0.0], 1e-8).is_err());
        assert!(classify_spectrum(&[0.0, 1.0], 0.0).is_err());
    }

    #[test]
    fn fixture_spectrum_and_dimension() {
        let (spec, theta, data) = fixture();
        assert_eq!(spec.param_count(), 7);
        let rep = hessian_spectrum_at(&spec, &theta, &data).unwrap();
        let want = SpectrumCounts { negative: 0, zero: 5, positive: 2 };
        assert_eq!(rep.finite_difference.counts, want);
        assert_eq!(rep.gauss_newton.counts, want);
        assert_eq!(manifold_dimension(&spec, &theta, &data, 1e-8).unwrap(), 5);
        let basis = tangent_basis(&spec, &theta, &data, 1e-8).unwrap();
        assert_eq!(basis.cols(), 5);
        let jac = jacobian_residuals(&spec, &theta, &data).unwrap();
        let (s, _) = singular_values(&jac).unwrap();
        for k in 0..5 {
            let v = basis.column(k);
            assert!(norm_inf(&jac.matvec(&v).unwrap()) <= 1e-8 * (1.0 + s[0]));
            let fd = residual_directional_fd(&spec, &theta, &data, &v, 1e-5).unwrap();
            assert!(norm_inf(&fd) <= 1e-6, "{fd:?}");
        }
    }

    #[test]
    fn off_manifold_is_rejected() {
        let (spec, _, data) = fixture();
        let theta = init_params(&spec, 1, 1.0).unwrap();
        assert!(matches!(manifold_dimension(&spec, &theta, &data, 1e-8), Err(Error::NotOnManifold { .. })));
        // the spectrum is still available, flagged by its loss
        let rep = hessian_spectrum_at(&spec, &theta, &data).unwrap();
        assert!(!rep.on_manifold());
    }

    #[test]
    fn duplicated_point_drops_rank() {
        let base = Dataset::scalar(&[0.0, 1.0], &[1.0, 2.0]).unwrap();
        let cert = exact_fit_shallow(&base, 3, Activation::SmooLu, &FitOptions::default()).unwrap();
        let dup = Dataset::scalar(&[0.0, 1.0, 1.0], &[1.0, 2.0, 2.0]).unwrap();
        let n = cert.spec.param_count();
        assert_eq!(manifold_dimension(&cert.spec, &cert.params, &dup, 1e-8).unwrap(), n - 2);
        // the corrector copes with the repeated row
        let mut off = cert.params.clone();
        off.as_mut_slice()[0] += 1e-4;
        let c = correct_to_manifold(&cert.spec, &off, &dup, CorrectorOptions::default()).unwrap();
        assert!(c.residual <= 1e-12);
        assert_eq!(c.min_rank, 2);
    }

    #[test]
    fn corrector_examples() {
        let (spec, theta, data) = fixture();
        let c = correct_to_manifold(&spec, &theta, &data, CorrectorOptions::default()).unwrap();
        assert_eq!(c.iterations, 0);
        assert_eq!(c.theta, theta);

        // push off along the first row of J
        let jac = jacobian_residuals(&spec, &theta, &data).unwrap();
        let row = jac.row(0).to_vec();
        let len = norm2(&row);
        let off: Vec<f64> = theta.iter().zip(&row).map(|(t, v)| t + 1e-3 * v / len).collect();
        let off = ParamVector::new(&spec, off).unwrap();
        assert!(loss(&spec, &off, &data, 2.0).unwrap() > 1e-10);
        let c = correct_to_manifold(&spec, &off, &data, CorrectorOptions::default()).unwrap();
        assert!(c.residual <= 1e-12);
        assert!(c.iterations <= 10);

        let opts = CorrectorOptions { max_iters: 0, ..CorrectorOptions::default() };
        assert!(matches!(correct_to_manifold(&spec, &off, &data, opts), Err(Error::Corrector { .. })));
    }

    #[test]
    fn walk_examples() {
        let (spec, theta, data) = fixture();
        let opts = WalkOptions { steps: 0, ..WalkOptions::default() };
        let path = walk_manifold(&spec, &theta, &data, opts).unwrap();
        assert_eq!(path.points.len(), 1);
        assert_eq!(path.displacement(), 0.0);

        let path = walk_manifold(&spec, &theta, &data, WalkOptions::default()).unwrap();
        assert!(path.completed(), "{:?}", path.failure);
        assert_eq!(path.points.len(), 101);
        assert!(path.max_loss() <= 1e-16);
        assert!(path.displacement() >= 0.3);
        assert!(path.arc_length() >= 0.5 * 100.0 * 1e-2);
        for w in path.points.windows(2) {
            assert!(distance(&w[0], &w[1]) >= 0.5e-2);
        }
        for p in &path.points {
            for i in 0..data.len() {
                let f = spec.forward(p, data.input(i)).unwrap()[0];
                assert!((f - data.label(i)[0]).abs() <= 1e-7);
            }
        }
        let probe = [-0.7, 0.5, 2.0];
        let drift = probe
            .iter()
            .map(|&x| {
                let a = spec.forward(path.base(), &[x]).unwrap()[0];
                let b = spec.forward(path.last(), &[x]).unwrap()[0];
                (a - b).abs()
            })
            .fold(0.0, f64::max);
        assert!(drift >= 1e-4, "drift {drift}");
        assert!(walk_manifold(&spec, &theta, &data, WalkOptions { step_size: 0.0, ..WalkOptions::default() }).is_err());
    }

    fn random_fit(seed: u64, d: usize, p: usize, l: usize) -> (MlpSpec, ParamVector, Dataset) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let xs = (0..d).map(|_| (0..p).map(|_| rng.random_range(-10.0..10.0)).collect()).collect();
        let ys = (0..d).map(|_| (0..l).map(|_| rng.random_range(-10.0..10.0)).collect()).collect();
        let data = Dataset::new(xs, ys).unwrap();
        let cert = exact_fit_shallow(&data, l * d + 1, Activation::SmooLu, &FitOptions::with_seed(seed)).unwrap();
        (cert.spec, cert.params, data)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn exact_fit_points_are_regular(seed in 0u64..1_000_000, d in 1usize..=12, p in 1usize..=4, l in 1usize..=2) {
            let (spec, theta, data) = random_fit(seed, d, p, l);
            let n = spec.param_count();
            let rep = hessian_spectrum_at(&spec, &theta, &data).unwrap();
            prop_assert!(rep.on_manifold());
            prop_assert_eq!(rep.gauss_newton.counts, SpectrumCounts::expected(n, l * d));
            prop_assert_eq!(rep.gauss_newton.counts.total(), n);
            // no clearly negative curvature
            prop_assert!(rep.finite_difference.eigenvalues[0] >= -1e-6 * rep.finite_difference.max_eigenvalue());
            prop_assert_eq!(manifold_dimension(&spec, &theta, &data, 1e-8).unwrap(), n - l * d);
        }

        #[test]
        fn tangent_and_normal_growth(seed in 0u64..1_000_000, d in 1usize..=6, p in 1usize..=3) {
            let (spec, theta, data) = random_fit(seed, d, p, 1);
            let basis = tangent_basis(&spec, &theta, &data, 1e-8).unwrap();
            let at = |v: &[f64], t: f64| {
                let th: Vec<f64> = theta.iter().zip(v).map(|(a, b)| a + t * b).collect();
                squared_loss_unchecked(&spec, &th, &data)
            };
            // along the tangent space the loss is o(t²)
            // (once the loss reaches the rounding floor at θ itself, there is
            // nothing left to resolve)
            let floor = (100.0 * at(&vec![0.0; theta.len()], 0.0)).max(1e-26);
            let v = basis.column(0);
            let ts = [1e-2, 1e-3, 1e-4];
            let losses: Vec<f64> = ts.iter().map(|&t| at(&v, t)).collect();
            for k in 1..ts.len() {
                if losses[k] <= floor {
                    continue;
                }
                let (prev, cur) = (losses[k - 1] / (ts[k - 1] * ts[k - 1]), losses[k] / (ts[k] * ts[k]));
                prop_assert!(cur <= prev / 10.0, "{losses:?}");
            }
            // along a right-singular vector the loss is s² t²
            let dec = svd(&jacobian_unchecked(&spec, &theta, &data)).unwrap();
            let s = dec.singular_values[0];
            let u = dec.right_vector(0);
            let t = 1e-4;
            let want = s * s * t * t;
            prop_assert!((at(&u, t) - want).abs() <= 0.2 * want);
        }
    }
}
