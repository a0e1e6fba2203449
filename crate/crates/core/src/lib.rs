//! Toeplitz operators on five reproducing-kernel settings (torus, finite
//! abelian groups, weighted Bergman, Fock, Paley-Wiener), their finite
//! truncations, and numerical Szegő-type limit experiments.
//!
//! The numerical core is generic over `T: Real` (`f32` or `f64`); the
//! `*F64` aliases below fix the scalar for everyday use.

pub mod berezin;
pub mod error;
pub mod linalg;
pub mod operators;
pub mod quadrature;
pub mod scalar;
pub mod settings;
pub mod spectral;
pub mod symbols;
pub mod szego;
pub mod verify;

pub use error::{Error, Result};
pub use operators::{assemble, AssemblyOptions, TruncatedOperator};
pub use scalar::Real;
pub use settings::{Domain, Family, FrameSetting, Point};
pub use spectral::{eigen_decompose, Spectrum};
pub use symbols::{parse_symbol, PsiFunction, PsiKind, Symbol};
pub use szego::{run_limit_sweep, LimitReport, SweepSpec, Variant};

pub type FrameSettingF64 = FrameSetting<f64>;
pub type SymbolF64 = Symbol<f64>;
pub type AssemblyOptionsF64 = AssemblyOptions<f64>;
pub type TruncatedOperatorF64 = TruncatedOperator<f64>;
pub type SpectrumF64 = Spectrum<f64>;
pub type SweepSpecF64 = SweepSpec<f64>;
pub type BerezinFieldF64 = berezin::BerezinField<f64>;
