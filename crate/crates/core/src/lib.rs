//! Symmetry analysis and numerics for scalar Ito equations and their
//! Fokker–Planck equations.
//!
//! The crate is organised bottom-up:
//!
//! - [`expr`]: expression trees with exact differentiation and numeric
//!   identity tests.
//! - [`ito`]: the equation model, noise normalisation and the determining
//!   equations for standard symmetries.
//! - [`symmetry_ito`]: classification into the integrable types A, B and C.
//! - [`kozlov`]: the rectifying change of variables and pathwise integration.
//! - [`fokker_planck`]: the forward equation and a conservative
//!   Crank–Nicolson solver.
//! - [`fp_symmetry`]: the three-way classification of Fokker–Planck
//!   symmetry algebras and explicit generators.
//! - [`weber`]: drifts with maximal Fokker–Planck symmetry from solutions of
//!   `u'' = p(x) u`.
//! - [`montecarlo`]: reproducible Euler–Maruyama ensembles and
//!   cross-validation against the density solver.

pub mod expr;
pub mod fokker_planck;
pub mod fp_symmetry;
pub mod ito;
pub mod kozlov;
pub mod montecarlo;
pub mod numeric;
pub mod symmetry_ito;
pub mod weber;

use thiserror::Error;

pub use expr::{parse, Bindings, EvalError, Expr, IdentityError, ParseError, Var};
pub use fokker_planck::{build_fp, solve_fp, DensityGrid, FpEquation, Grid1d};
pub use fp_symmetry::{classify_fp, gamma, FpCase, FpClass, VectorField};
pub use ito::{normalize_noise, Domain, EquationFile, ItoEquation, Transform};
pub use kozlov::{kozlov_map, transform_equation, GeneralizedItoEquation, WienerPath};
pub use montecarlo::{crossval, exact_sampler, simulate_ensemble, PathEnsemble};
pub use numeric::NumericError;
pub use symmetry_ito::{classify_autonomous, classify_time_dependent, SymmetryClass, SymmetryKind};
pub use weber::{generate_max_symmetry_drift, riccati_to_weber, WeberProblem};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Identity(#[from] IdentityError),
    #[error(transparent)]
    Numeric(#[from] NumericError),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("numerical instability: {0}")]
    Unstable(String),
    #[error("verification failed: {0}")]
    Verification(String),
}

impl Error {
    /// Short machine-readable category.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Parse(_) => "parse",
            Error::Eval(_) => "eval",
            Error::Identity(_) => "indeterminate",
            Error::Numeric(_) => "numeric",
            Error::Invalid(_) => "invalid",
            Error::Domain(_) => "domain",
            Error::Unsupported(_) => "unsupported",
            Error::Unstable(_) => "unstable",
            Error::Verification(_) => "verification",
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
