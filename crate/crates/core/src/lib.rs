//! Billiard chain and stochastic energy exchange simulation, with the
//! estimators used to compare the two.
//!
//! The kernels are generic over [`scalar::Real`]; the aliases below fix the
//! scalar to `f64`, which every experiment uses.

pub mod billiard;
pub mod chain;
pub mod estimators;
pub mod experiments;
pub mod harness;
pub mod scalar;

pub type ModelParams = chain::ModelParams<f64>;
pub type EnergyChain = chain::EnergyChain<f64>;
pub type JumpEvent = chain::JumpEvent<f64>;
pub type ExchangeDraw = chain::ExchangeDraw<f64>;
pub type SsaSimulator = chain::SsaSimulator<f64>;
pub type CellGeometry = billiard::CellGeometry<f64>;
pub type BilliardState = billiard::BilliardState<f64>;
pub type DiskState = billiard::DiskState<f64>;
pub type BilliardSim<'g> = billiard::BilliardSim<'g, f64>;
pub type Vec2 = billiard::Vec2<f64>;
