//! Shared fixtures for the benchmarks: a synthetic dataset and an exact fit
//! of it, so every kernel runs on matrices that occur in real analyses.

use lossmanifold::{exact_fit_shallow, Activation, Dataset, FitOptions, LabelGenerator, MlpSpec, ParamVector};

pub struct Fixture {
    pub spec: MlpSpec,
    pub params: ParamVector,
    pub data: Dataset,
}

/// `points` scalar-label points in `ℝ^input_dim`, fitted exactly by a shallow
/// smooLU network of the given width.
pub fn fixture(input_dim: usize, points: usize, width: usize, seed: u64) -> Fixture {
    let spec = MlpSpec::shallow(input_dim, width, 1, Activation::SmooLu).expect("valid architecture");
    let data = Dataset::synthetic(&spec, points, LabelGenerator::Uniform, seed).expect("synthetic data");
    let cert = exact_fit_shallow(&data, width, Activation::SmooLu, &FitOptions::with_seed(seed)).expect("exact fit");
    Fixture { spec: cert.spec, params: cert.params, data }
}
