//! Temporal ordering of noisy samples from a one-dimensional trajectory via
//! the low-lying eigenvectors of a kernel graph Laplacian.
//!
//! Typical flow: [`synth::generate`] or [`io::read_points`], optional
//! [`denoise`], then [`recover::recover`], scored with [`metrics`].

pub mod denoise;
pub mod eigen;
pub mod error;
pub mod io;
pub mod kernel;
pub mod metrics;
pub mod recover;
pub mod synth;
pub mod types;

pub use denoise::{denoise_auto, denoise_fixed_rank, DenoiseResult};
pub use eigen::{smallest_eigenpairs, SpectralResult, SymmetricOperator};
pub use error::{Error, Result};
pub use kernel::{build_kernel, build_laplacian, gaussian_kernel, KernelMatrix, LaplacianMatrix};
pub use metrics::{
    err_closed_rank, err_closed_time, err_open_rank, err_open_time, relative_error, relative_error_cyclic, relative_error_interior, snr,
    AlignmentReport,
};
pub use recover::{recover, recover_closed, recover_open, select_bandwidth, RecoveryOutput, SpectralRecovery};
pub use synth::{add_noise, comparison_matrix, generate, noise_for_snr, serialrank_baseline, ComparisonMatrix, CurveSpec};
pub use types::{ranking_from_labels, CurveKind, DataMatrix, KernelParams, Ranking, TimeLabels};
