//! Numerical laboratory for spectral asymptotics of Laplace and
//! Schrödinger operators on planar domains: Weyl counting remainders,
//! heat kernels, mollified spectral projectors and the Duhamel identity.
//!
//! Grid and spectral types are generic over the scalar; `f64` and `f32`
//! aliases are provided below. Scalar profiles and multipliers are `f64`.

pub mod acceptance;
pub mod bessel;
pub mod config;
pub mod duhamel;
pub mod error;
pub mod geometry;
pub mod heat;
pub mod linalg;
pub mod multipliers;
pub mod operator;
pub mod potentials;
pub mod quadrature;
pub(crate) mod region;
pub mod report;
pub mod scalar;
pub mod spectral;
pub mod weyl;

pub use error::{Error, Result};
pub use geometry::{BoundaryCondition, DomainSpec, Grid, Point};
pub use operator::AssembledOperator;
pub use potentials::PotentialSpec;
pub use scalar::Real;
pub use spectral::{ExactSpectrum, SpectralData};

pub type Grid64 = Grid<f64>;
pub type Grid32 = Grid<f32>;
pub type Operator64 = AssembledOperator<f64>;
pub type Operator32 = AssembledOperator<f32>;
pub type SpectralData64 = SpectralData<f64>;
pub type SpectralData32 = SpectralData<f32>;
pub type Potential64 = PotentialSpec<f64>;
pub type Potential32 = PotentialSpec<f32>;
