//! Strapdown navigation in ECEF with SE2(3) invariant error-state filters.
//!
//! The numerical core is generic over the scalar type; the simulator works in
//! `f64`. Aliases ending in `64` fix the scalar for convenience.

pub mod earth;
pub mod error_models;
pub mod filter;
pub mod liegroup;
pub mod mechanization;
pub mod scalar;
pub mod simulator;

pub use earth::{EarthModel, FixedGravitation, Geodetic, GravityField};
pub use error_models::{ErrorDefinition, ErrorState15, NoiseSpec, Observation, ProcessModel};
pub use filter::{Filter, FilterConfig, FilterError, FilterState, Hygiene, Navigation};
pub use liegroup::{ExtendedPose, Rotation, RotationLog, Twist};
pub use mechanization::{ImuSample, Integrator, NavState, TransformedNavState};
pub use scalar::Real;

pub type ExtendedPose64 = ExtendedPose<f64>;
pub type Twist64 = Twist<f64>;
pub type NavState64 = NavState<f64>;
pub type TransformedNavState64 = TransformedNavState<f64>;
pub type ImuSample64 = ImuSample<f64>;
pub type EarthModel64 = EarthModel<f64>;
pub type Geodetic64 = Geodetic<f64>;
pub type FilterConfig64 = FilterConfig<f64>;
pub type Filter64 = Filter<f64, EarthModel<f64>>;
