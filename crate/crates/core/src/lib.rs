//! Matrix-information metrics over embedding grams.
//!
//! [`matinfo`] holds the spectral quantities (matrix entropy, matrix mutual
//! information, MIR, HDR and the entropy gradient); [`nctheory`] holds the
//! exact Neural Collapse constructions and the regression-bound checkers
//! that serve as oracles for them.

pub mod error;
pub mod linalg;
pub mod matinfo;
pub mod nctheory;
pub mod seed;

pub use error::{MatInfoError, NcError};
pub use linalg::{sym_eigendecompose, Spectrum};
pub use matinfo::{FeatureMatrix, GramMatrix, InfoMetrics};
pub use seed::SeedStream;
