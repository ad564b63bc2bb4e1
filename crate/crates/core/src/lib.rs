//! Limit-cycle model predictive control.
//!
//! A nonlinear MPC whose cost penalises deviation of the predicted states
//! from a supercritical Neimark–Sacker map, driving a second-order plant onto
//! a circular limit cycle of chosen radius and frequency. The crate also
//! carries the grid model, closed-loop simulator and harmonic analysis used to
//! exercise it on an active-power-filter compensation problem.

pub mod analysis;
pub mod controller;
pub mod error;
pub mod fourier_param;
pub mod grid_model;
pub mod kernel_cost;
pub mod linear_plant;
pub mod normal_forms;
pub mod optimizer;
pub mod simulator;

pub use analysis::{HarmonicSpectrum, ThdReport};
pub use controller::{ControlPlan, LcmpcConfig, LcmpcController};
pub use error::{Error, Result};
pub use fourier_param::{FourierBasis, FourierCoeffs};
pub use grid_model::{GridCircuitParams, HarmonicComponent, NormalFormScaling};
pub use kernel_cost::{CostBreakdown, GradientMode, KernelCostMatrices, StackedStates};
pub use linear_plant::{ContinuousStateSpace, DiscreteStateSpace, PredictionOperator};
pub use normal_forms::{HopfParams, LimitCycleParams, RadiusClassification, State2};
pub use optimizer::{OptimizerResult, OptimizerSettings, Termination};
pub use simulator::{Bootstrap, InitialState, Mode, SimulationConfig, SimulationLog};
