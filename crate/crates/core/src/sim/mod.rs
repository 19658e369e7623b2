//! Quadrotor flight simulation with wind and propeller faults.
//!
//! Frames: world is east-north-up, body is forward-left-up. Rotors sit on an
//! X frame and are numbered counter-clockwise seen from above:
//!
//! ```text
//!        front (+x)
//!     2 (CW)   1 (CCW)
//!          \   /
//!           [ ]        +y to the left
//!          /   \
//!     3 (CCW)  4 (CW)
//! ```
//!
//! A counter-clockwise rotor exerts a reaction torque of `-k_t * w^2` about
//! body z. Each rotor produces thrust `k_f * w^2` along body z, scaled by the
//! propeller's efficiency when it is faulted.

mod airframe;
mod controller;
mod dynamics;
mod fault;
mod log;
mod mission;
mod scenario;
mod state;
mod wind;

pub use airframe::{Airframe, SensorModel};
pub use controller::{mix, CascadedController, ControllerGains};
pub use dynamics::{derivatives, drag_force, step_dynamics, wind_contribution, StateDerivative};
pub use fault::FaultConfig;
pub use log::{Domain, FlightLog, FlightRole, LogRow, SIGNAL_NAMES};
pub use mission::{fly_mission, MissionConfig};
pub use scenario::{
    generate_domain_pair, square_waypoints, DomainPair, FlightSpec, ScenarioConfig,
    TargetPerturbation, TargetWind,
};
pub use state::QuadState;
pub use wind::{WindField, WindParams};
