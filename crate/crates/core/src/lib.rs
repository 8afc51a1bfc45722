//! Numerical lab for blow-up of a perturbed semilinear heat equation in
//! similarity variables.

pub mod analysis;
pub mod grid;
pub mod params;
pub mod pde;
pub mod profile;
pub mod scalar;
pub mod shooting;
pub mod shrinking;
pub mod spectral;

pub use scalar::Real;

pub type RawParametersF64 = params::RawParameters<f64>;
pub type ParametersF64 = params::Parameters<f64>;
pub type GridF64 = grid::Grid<f64>;
pub type FieldF64 = grid::Field<f64>;
pub type ProfileF64 = profile::Profile<f64>;
pub type HermiteBasisF64 = spectral::HermiteBasis<f64>;
pub type ModeDecompositionF64 = spectral::ModeDecomposition<f64>;
pub type SolverF64 = pde::Solver<f64>;
pub type SolverStateF64 = pde::SolverState<f64>;
pub type MembershipReportF64 = shrinking::MembershipReport<f64>;
pub type SimulationF64 = shooting::Simulation<f64>;
