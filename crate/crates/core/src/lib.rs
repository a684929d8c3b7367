//! Nuclear-norm penalized matrix completion over a finite alphabet.
//!
//! Each entry of an `m₁ × m₂` matrix carries one of `p` labels. The model
//! stores `p − 1` low-rank parameter matrices as nonnegative sums of rank-one
//! atoms and maps them to per-entry label probabilities through the
//! multinomial logit link. Fitting minimizes the normalized negative
//! log-likelihood plus `λ` times the sum of nuclear norms, using lifted
//! coordinate gradient descent. A Gaussian squared-loss baseline, metrics,
//! simulation helpers and file formats complete the toolkit.
//!
//! The numerical core is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases at the crate root fix it to `f64`, with `F32` variants alongside.
//!
//! ```
//! use fam_core::{fit, FitConfig, ObservationSet, Sample};
//!
//! let obs = ObservationSet::new(2, 2, 2, vec![
//!     Sample::new(0, 0, 1),
//!     Sample::new(1, 1, 2),
//! ]).unwrap();
//! let (model, report) = fit(&obs, &FitConfig::new(1e-2)).unwrap();
//! assert!(report.converged);
//! assert_eq!(model.classes(), 2);
//! ```

pub mod dense;
pub mod error;
pub mod experiment;
pub mod gaussian;
pub mod io;
pub mod link;
pub mod metrics;
pub mod model;
pub mod objective;
pub mod scalar;
pub mod simulate;
pub mod solver;
pub mod svd;

pub use error::{FamError, Result};
pub use gaussian::{fit_gaussian, fit_gaussian_encoded, fit_gaussian_from, gaussian_class_probs, LabelEncoding, SIGMA_FLOOR};
pub use link::{link_constants, logit_probs, negative_log_likelihood, sparse_gradient, LinkConstants};
pub use metrics::{frobenius_error, hellinger_sq, kl_divergence, prediction_error, theorem2_bound, EvalReport};
pub use model::{ObservationSet, Sample};
pub use scalar::Scalar;
pub use solver::{fit, fit_from, objective, reference_fit, FitReport, StopReason};
pub use svd::{top_singular_pair, SingularTriple};

pub type Atom = model::Atom<f64>;
pub type AtomicModel = model::AtomicModel<f64>;
pub type ProbabilityField = model::ProbabilityField<f64>;
pub type FitConfig = model::FitConfig<f64>;
pub type DenseMatrix = dense::DenseMatrix<f64>;
pub type SparseMatrix = svd::SparseMatrix<f64>;
pub type GaussianModel = gaussian::GaussianModel<f64>;

pub type AtomF32 = model::Atom<f32>;
pub type AtomicModelF32 = model::AtomicModel<f32>;
pub type ProbabilityFieldF32 = model::ProbabilityField<f32>;
pub type FitConfigF32 = model::FitConfig<f32>;
pub type DenseMatrixF32 = dense::DenseMatrix<f32>;
pub type SparseMatrixF32 = svd::SparseMatrix<f32>;
pub type GaussianModelF32 = gaussian::GaussianModel<f32>;
