use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use super::Airframe;

/// Gains of the cascaded position, attitude and rate loops.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ControllerGains {
    /// Position error to velocity setpoint, 1/s.
    pub position_p: f64,
    /// m/s
    pub max_speed: f64,
    pub velocity_p: f64,
    pub velocity_i: f64,
    /// Clamp on each component of the velocity integrator, m.
    pub velocity_integral_limit: f64,
    /// rad
    pub max_tilt: f64,
    pub attitude_p: [f64; 3],
    /// rad/s, per axis
    pub max_rate: f64,
    pub rate_p: [f64; 3],
    pub rate_i: [f64; 3],
    pub rate_d: [f64; 3],
    /// Clamp on each component of the rate integrator, rad.
    pub rate_integral_limit: f64,
}

impl Default for ControllerGains {
    fn default() -> Self {
        Self {
            position_p: 1.0,
            max_speed: 2.0,
            velocity_p: 3.0,
            velocity_i: 1.0,
            velocity_integral_limit: 5.0,
            max_tilt: 0.5,
            attitude_p: [8.0, 8.0, 4.0],
            max_rate: 4.0,
            rate_p: [25.0, 25.0, 12.0],
            rate_i: [15.0, 15.0, 8.0],
            rate_d: [0.3, 0.3, 0.0],
            rate_integral_limit: 2.0,
        }
    }
}

/// Converts collective thrust (N) and body torques (N m) into rotor speed
/// commands using the airframe's nominal coefficients. Squared speeds are
/// clipped at zero and speeds at the airframe maximum.
pub fn mix(airframe: &Airframe, thrust: f64, torque: &Vector3<f64>) -> [f64; 4] {
    let d = airframe.arm_length / core::f64::consts::SQRT_2;
    let kf = airframe.thrust_coefficient;
    let a = thrust / kf;
    let b = torque.x / (d * kf);
    let c = -torque.y / (d * kf);
    let e = torque.z / airframe.torque_coefficient;
    let squared = [
        (a - b + c - e) / 4.0,
        (a + b + c + e) / 4.0,
        (a + b - c - e) / 4.0,
        (a - b - c + e) / 4.0,
    ];
    squared.map(|u| libm::sqrt(u.max(0.0)).min(airframe.max_rotor_speed))
}

/// Position -> velocity -> attitude -> body rate -> mixer controller holding
/// zero yaw. Works from the nominal airframe, not the true one.
#[derive(Debug, Clone)]
pub struct CascadedController {
    gains: ControllerGains,
    nominal: Airframe,
    velocity_integral: Vector3<f64>,
    rate_integral: Vector3<f64>,
    previous_rates: Option<Vector3<f64>>,
}

impl CascadedController {
    pub fn new(gains: ControllerGains, nominal: Airframe) -> Self {
        Self {
            gains,
            nominal,
            velocity_integral: Vector3::zeros(),
            rate_integral: Vector3::zeros(),
            previous_rates: None,
        }
    }

    /// Rotor speed commands steering towards `target`.
    pub fn update(
        &mut self,
        position: &Vector3<f64>,
        velocity: &Vector3<f64>,
        attitude: &UnitQuaternion<f64>,
        measured_rates: &Vector3<f64>,
        target: &Vector3<f64>,
        dt: f64,
    ) -> [f64; 4] {
        let g = &self.gains;
        let gravity = self.nominal.gravity;

        let mut velocity_setpoint = (target - position) * g.position_p;
        let speed = velocity_setpoint.norm();
        if speed > g.max_speed {
            velocity_setpoint *= g.max_speed / speed;
        }
        let velocity_error = velocity_setpoint - velocity;
        self.velocity_integral = (self.velocity_integral + velocity_error * dt)
            .map(|v| v.clamp(-g.velocity_integral_limit, g.velocity_integral_limit));
        let mut accel = velocity_error * g.velocity_p + self.velocity_integral * g.velocity_i;
        accel.z += gravity;
        accel.z = accel.z.max(0.2 * gravity);
        let horizontal = libm::hypot(accel.x, accel.y);
        let max_horizontal = accel.z * libm::tan(g.max_tilt);
        if horizontal > max_horizontal {
            let s = max_horizontal / horizontal;
            accel.x *= s;
            accel.y *= s;
        }
        let force = accel * self.nominal.mass;

        let z_body = force.normalize();
        let y_body = z_body.cross(&Vector3::x()).normalize();
        let x_body = y_body.cross(&z_body);
        let desired = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(
            Matrix3::from_columns(&[x_body, y_body, z_body]),
        ));
        let thrust = force.dot(&(attitude * Vector3::z())).max(0.0);

        let error = desired.inverse() * attitude;
        let sign = if error.w < 0.0 { -1.0 } else { 1.0 };
        let error_vector = error.imag() * (2.0 * sign);
        let rate_setpoint = Vector3::from_fn(|i, _| {
            (-g.attitude_p[i] * error_vector[i]).clamp(-g.max_rate, g.max_rate)
        });

        let rate_error = rate_setpoint - measured_rates;
        self.rate_integral = (self.rate_integral + rate_error * dt)
            .map(|v| v.clamp(-g.rate_integral_limit, g.rate_integral_limit));
        let rate_change = match self.previous_rates {
            Some(previous) => (measured_rates - previous) / dt,
            None => Vector3::zeros(),
        };
        self.previous_rates = Some(*measured_rates);
        let torque = Vector3::from_fn(|i, _| {
            self.nominal.inertia[i]
                * (g.rate_p[i] * rate_error[i] + g.rate_i[i] * self.rate_integral[i]
                    - g.rate_d[i] * rate_change[i])
        });

        mix(&self.nominal, thrust, &torque)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{derivatives, FaultConfig};

    #[test]
    fn mixer_hover_is_balanced() {
        let airframe = Airframe::default();
        let w = mix(
            &airframe,
            airframe.mass * airframe.gravity,
            &Vector3::zeros(),
        );
        assert!(w.iter().all(|x| *x == w[0]));
        assert!((w[0] - airframe.hover_rotor_speed()).abs() < 1e-9);
    }

    #[test]
    fn mixer_reproduces_requested_torque() {
        let airframe = Airframe::default();
        let torque = Vector3::new(0.02, -0.03, 0.004);
        let thrust = 11.0;
        let w = mix(&airframe, thrust, &torque);
        let mut state = crate::sim::QuadState::hover(Vector3::zeros(), &airframe);
        state.rotor_speeds = w;
        let d = derivatives(
            &airframe,
            &state,
            &w,
            &Vector3::zeros(),
            &FaultConfig::healthy(),
        );
        let achieved = d
            .angular_acceleration
            .component_mul(&Vector3::from(airframe.inertia));
        assert!((achieved - torque).norm() < 1e-12);
        let total = d.acceleration.z + airframe.gravity;
        assert!((total * airframe.mass - thrust).abs() < 1e-9);
    }

    #[test]
    fn hover_commands_are_exact_at_rest() {
        let airframe = Airframe::default();
        let mut ctl = CascadedController::new(ControllerGains::default(), airframe.clone());
        let p = Vector3::new(0.0, 0.0, 2.0);
        let w = ctl.update(
            &p,
            &Vector3::zeros(),
            &UnitQuaternion::identity(),
            &Vector3::zeros(),
            &p,
            0.01,
        );
        assert!(w.iter().all(|x| *x == w[0]));
    }
}
