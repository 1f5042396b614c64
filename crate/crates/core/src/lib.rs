//! Compressive Fourier collocation for the periodic diffusion equation
//!
//! ```text
//! −∇·(a(x)∇u(x)) = f(x),  x ∈ T^d,   ∫ u = 0
//! ```
//!
//! The solution is expanded in the rescaled Fourier basis
//! `Ψ_ν = F_ν / (4π²‖ν‖²)` over a hyperbolic cross `Λ`, the equation is
//! collocated at `m` Monte Carlo points, and the (usually underdetermined)
//! system is solved by OMP, QCBP or least squares.
//!
//! ```no_run
//! use fourier_collocation::prelude::*;
//!
//! let set = IndexSet::hyperbolic_cross(2, 39)?;
//! let a = builtin_coefficient("a2", 2)?;
//! let u = make_sparse_solution(&set, 10, 7, FrequencyRegime::Box { max: 5 })?;
//! let points = sample_collocation_points(2, 128, 11);
//! let system = assemble_from_solution(&a, &u, &set, points, ForcingMode::Analytic)?;
//! let result = omp(&system, 64)?;
//! let coeffs = result.coefficients.as_slice().expect("contiguous");
//! let err = relative_l2_error(&u, coeffs, &set, 2 * set.len(), 13)?;
//! println!("relative L2 error {err:.3e}");
//! # Ok::<(), fourier_collocation::Error>(())
//! ```

pub mod assembly;
pub mod error;
pub mod evaluation;
pub mod experiment;
pub mod index_set;
pub mod problem;
pub mod recovery;
pub mod riesz;
pub mod rng;
pub mod spectral;

pub use error::{Error, Result};

/// Complex scalar used throughout.
pub type C64 = num_complex::Complex64;

pub mod prelude {
    pub use crate::assembly::{
        assemble, assemble_from_solution, sample_collocation_points, truncation_error_vector,
        CollocationSystem,
    };
    pub use crate::evaluation::{
        best_s_term_error, geometric_stats, mc_l2_norm, relative_l2_error, success_rate,
        GeometricStats,
    };
    pub use crate::index_set::{
        cardinality_upper_bound, largest_order_within_budget, CardinalityBound, IndexSet,
        MultiIndex,
    };
    pub use crate::problem::{
        builtin_coefficient, forcing_term, make_nonsparse_solution, make_sparse_solution,
        DiffusionCoefficient, ForcingMode, FrequencyRegime, ManufacturedSolution,
    };
    pub use crate::recovery::{least_squares, omp, oracle_eta, qcbp, QcbpParams, RecoveryResult};
    pub use crate::spectral::{
        convert_coefficients, eval_fourier, eval_phi, eval_spectral_basis, synthesize, Basis,
        CoefficientVector, Conversion, TorusPoint,
    };
    pub use crate::{Error, Result, C64};
}
