//! Numerical tools for the zero-loss set `M = L⁻¹(0)` of small
//! overparameterized multilayer perceptrons.
//!
//! With `d` data points, `ℓ` outputs and `n > ℓd` parameters, `M` is
//! generically a smooth manifold of dimension `n − ℓd`, and at each of its
//! points the Hessian of the squared loss has `ℓd` positive eigenvalues and
//! `n − ℓd` zero ones. This crate builds points of `M` explicitly, measures
//! its dimension and the Hessian spectrum there, and walks along it.
//!
//! ```
//! use lossmanifold::{exact_fit_shallow, manifold_dimension, Activation, Dataset, FitOptions};
//!
//! let data = Dataset::scalar(&[0.0, 1.0], &[1.0, 2.0]).unwrap();
//! let cert = exact_fit_shallow(&data, 2, Activation::SmooLu, &FitOptions::default()).unwrap();
//! assert!(cert.max_residual <= 1e-10);
//! let dim = manifold_dimension(&cert.spec, &cert.params, &data, 1e-8).unwrap();
//! assert_eq!(dim, 7 - 2);
//! ```

// Negated comparisons reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calculus;
pub mod construct;
mod dd;
pub mod error;
pub mod format;
pub mod linalg;
pub mod manifold;
pub mod network;

pub use calculus::{
    grad_check, grad_loss, gradient_from_jacobian, hessian_loss, jacobian_residuals, loss, residuals, train_gd,
    TrainOptions, TrainOutcome,
};
pub use construct::{
    choose_projection, embed_deep, exact_fit_shallow, perturb_labels, separate_duplicates, DeepEmbedding,
    ExactFitCertificate, FitOptions, ProjectionChoice,
};
pub use error::{Error, Result};
pub use format::{DatasetFile, ExperimentConfig, ParamsFile, Payload, Report, FORMAT_VERSION};
pub use linalg::{DenseMatrix, Spectrum};
pub use manifold::{
    classify_spectrum, correct_to_manifold, hessian_spectrum_at, jacobian_rank, manifold_dimension, tangent_basis,
    walk_manifold, CorrectorOptions, ManifoldPath, SpectrumCounts, SpectrumReport, WalkOptions,
};
pub use network::{init_params, Activation, Dataset, LabelGenerator, MlpSpec, ParamVector};
