use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Physical parameters of the X-frame quadrotor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Airframe {
    /// kg
    pub mass: f64,
    /// m/s^2
    pub gravity: f64,
    /// Distance from the centre of mass to each rotor hub, m.
    pub arm_length: f64,
    /// Principal moments of inertia (Ixx, Iyy, Izz), kg m^2.
    pub inertia: [f64; 3],
    /// Thrust per squared rotor speed, N s^2.
    pub thrust_coefficient: f64,
    /// Reaction torque per squared rotor speed, N m s^2.
    pub torque_coefficient: f64,
    /// Quadratic body drag, N per (m/s)^2 of relative air speed.
    pub drag_coefficient: f64,
    /// First-order motor lag, s.
    pub motor_time_constant: f64,
    /// rad/s
    pub max_rotor_speed: f64,
    /// Per-rotor multiplier on thrust and torque coefficients, modelling
    /// installation mismatch between nominally identical motors.
    pub rotor_scale: [f64; 4],
}

impl Default for Airframe {
    fn default() -> Self {
        Self {
            mass: 1.0,
            gravity: 9.81,
            arm_length: 0.2,
            inertia: [0.01, 0.01, 0.02],
            thrust_coefficient: 1.0e-5,
            torque_coefficient: 1.0e-7,
            drag_coefficient: 0.02,
            motor_time_constant: 0.02,
            max_rotor_speed: 1000.0,
            rotor_scale: [1.0; 4],
        }
    }
}

/// Body-frame (x, y) rotor positions in units of `arm_length / sqrt(2)`.
const ROTOR_LAYOUT: [(f64, f64); 4] = [(1.0, -1.0), (1.0, 1.0), (-1.0, 1.0), (-1.0, -1.0)];

/// Sign of each rotor's reaction torque about body z.
pub(crate) const ROTOR_YAW_SIGN: [f64; 4] = [-1.0, 1.0, -1.0, 1.0];

impl Airframe {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("mass", self.mass),
            ("gravity", self.gravity),
            ("arm_length", self.arm_length),
            ("inertia[0]", self.inertia[0]),
            ("inertia[1]", self.inertia[1]),
            ("inertia[2]", self.inertia[2]),
            ("thrust_coefficient", self.thrust_coefficient),
            ("torque_coefficient", self.torque_coefficient),
            ("motor_time_constant", self.motor_time_constant),
            ("max_rotor_speed", self.max_rotor_speed),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::InvalidConfig(alloc::format!(
                    "airframe {name} must be positive, got {value}"
                )));
            }
        }
        if !(self.drag_coefficient.is_finite() && self.drag_coefficient >= 0.0) {
            return Err(Error::InvalidConfig(
                "airframe drag_coefficient must be non-negative".into(),
            ));
        }
        if self
            .rotor_scale
            .iter()
            .any(|s| !(s.is_finite() && *s > 0.0))
        {
            return Err(Error::InvalidConfig(
                "airframe rotor_scale entries must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Body-frame (x, y) position of rotor `i` (zero-based), m.
    pub fn rotor_position(&self, i: usize) -> (f64, f64) {
        let d = self.arm_length / core::f64::consts::SQRT_2;
        let (sx, sy) = ROTOR_LAYOUT[i];
        (sx * d, sy * d)
    }

    /// Rotor speed at which four identical healthy rotors carry the weight.
    pub fn hover_rotor_speed(&self) -> f64 {
        libm::sqrt(self.mass * self.gravity / (4.0 * self.thrust_coefficient))
    }
}

/// Gyroscope error model. Position, velocity and attitude are observed
/// exactly; body rates carry a constant bias plus white noise.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SensorModel {
    /// rad/s, per body axis
    pub gyro_bias: [f64; 3],
    /// rad/s, standard deviation
    pub gyro_noise_std: f64,
}

impl SensorModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.gyro_noise_std.is_finite() && self.gyro_noise_std >= 0.0)
            || self.gyro_bias.iter().any(|b| !b.is_finite())
        {
            return Err(Error::InvalidConfig("invalid gyro sensor model".into()));
        }
        Ok(())
    }
}
