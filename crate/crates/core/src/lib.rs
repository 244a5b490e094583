//! Sharp Markov-Bernstein constants for real exponential polynomials on the
//! half-line, and the certified Euler discretization steps they yield for
//! linear switching systems.

pub mod error;
pub mod laguerre;
pub mod oracle;
pub mod quasipoly;
pub mod remez;
pub mod switching;

pub use error::{Error, Result};
pub use laguerre::{laguerre_chebyshev, m_uniform, LaguerreChebyshev};
pub use oracle::{lp_markov_constant, refine_until, step_value, RefineTarget, StepProblemValue};
pub use quasipoly::{ExpSpectrum, Exponent, QuasiPolynomial, SupNorm, SupNormOptions};
pub use remez::{
    chebyshev_polynomial, markov_constant, verify_alternance, ChebyshevCertificate, MarkovConstant,
    Method, RemezOptions,
};
pub use switching::{MatrixFamily, SpectrumInfo, StepEstimate};
