use nalgebra::{UnitQuaternion, Vector3};

use super::Airframe;

/// Rigid-body and rotor state. Position and velocity are in the world frame,
/// body rates (p, q, r) in the body frame.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadState {
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    /// Body-to-world rotation.
    pub attitude: UnitQuaternion<f64>,
    pub body_rates: Vector3<f64>,
    /// rad/s, non-negative and at most the airframe's maximum.
    pub rotor_speeds: [f64; 4],
}

impl QuadState {
    /// Level, motionless, with all rotors at the healthy hover speed.
    pub fn hover(position: Vector3<f64>, airframe: &Airframe) -> Self {
        Self {
            position,
            velocity: Vector3::zeros(),
            attitude: UnitQuaternion::identity(),
            body_rates: Vector3::zeros(),
            rotor_speeds: [airframe.hover_rotor_speed(); 4],
        }
    }

    pub(crate) fn first_non_finite(&self) -> Option<&'static str> {
        if !self.position.iter().all(|v| v.is_finite()) {
            Some("position")
        } else if !self.velocity.iter().all(|v| v.is_finite()) {
            Some("velocity")
        } else if !self.attitude.coords.iter().all(|v| v.is_finite()) {
            Some("attitude")
        } else if !self.body_rates.iter().all(|v| v.is_finite()) {
            Some("body rates")
        } else if !self.rotor_speeds.iter().all(|v| v.is_finite()) {
            Some("rotor speeds")
        } else {
            None
        }
    }
}
