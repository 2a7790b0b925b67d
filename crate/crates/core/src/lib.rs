//! Orthogonally invariant shrinkage estimation of a normal mean matrix.
//!
//! Given one observation `X ~ N(M, I_n ⊗ I_p)` with `n >= p`, the crate
//! provides:
//!
//! * canonical spectral decompositions of `X` ([`spectral`]),
//! * closed-form matrix gradients and matrix Laplacians of functions
//!   `h(X) = H(λ(XᵀX))`, with finite-difference oracles ([`calculus`]),
//! * the singular-value shrinkage family and its named members
//!   (Efron–Morris, Stein, positive-part variants) ([`estimators`]),
//! * unbiased per-sample estimates of the matrix quadratic risk
//!   `E (M̂ − M)ᵀ(M̂ − M)` ([`risk`]),
//! * a deterministic parallel Monte Carlo harness ([`montecarlo`]),
//! * the identity / finite-difference verification suite ([`verify`]) and
//!   the command-line front end ([`cli`]).

pub mod calculus;
pub mod cli;
pub mod error;
pub mod estimators;
pub mod montecarlo;
pub mod output;
pub mod risk;
pub mod spectral;
pub mod verify;

pub use error::{Error, Result};

/// Dense real matrix used for observations, estimates and risk matrices.
pub type Mat = nalgebra::DMatrix<f64>;
/// Dense real vector.
pub type Vector = nalgebra::DVector<f64>;

pub use calculus::{InvariantObjective, LogObjective, PolynomialObjective, SumObjective, ZeroObjective};
pub use estimators::{EstimatorKind, EstimatorSpec, ShrinkageCoefficients};
pub use montecarlo::{MatrixRiskEstimate, MeanSpec, SweepSpec};
pub use risk::{RiskDiagonal, SureMatrix};
pub use spectral::{ProblemDims, SpectralPair, SvdTriple};
