//! Exact and asymptotic free energies of radially symmetric two-dimensional
//! Coulomb gases, with spectral gaps, a conical point at the origin and outposts.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod droplet;
pub mod error;
pub mod fluctuations;
pub mod free_energy;
pub mod functionals;
pub mod heine;
pub mod identities;
pub mod potential;
pub mod qspecial;
pub mod quad;
pub mod scalar;
pub mod sum;

pub use error::{Error, Result};
pub use scalar::Real;

pub type RadialPotential64 = potential::RadialPotential<f64>;
pub type DropletGeometry64 = droplet::DropletGeometry<f64>;
pub type NormTable64 = free_energy::NormTable<f64>;
pub type NormContext64<'a> = free_energy::NormContext<'a, f64>;
pub type ExpansionInputs64<'a> = free_energy::ExpansionInputs<'a, f64>;
pub type ExpansionBreakdown64 = free_energy::ExpansionBreakdown<f64>;
pub type HeineDist64 = heine::HeineDist<f64>;
pub type GapConstants64 = functionals::GapConstants<f64>;
