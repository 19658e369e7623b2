use nalgebra::{Quaternion, UnitQuaternion, Vector3};

use super::airframe::ROTOR_YAW_SIGN;
use super::{Airframe, FaultConfig, QuadState, WindField};
use crate::{Error, Result};

/// Time derivative of a [`QuadState`].
#[derive(Debug, Clone, PartialEq)]
pub struct StateDerivative {
    pub velocity: Vector3<f64>,
    pub acceleration: Vector3<f64>,
    /// Derivative of the attitude quaternion's raw coordinates.
    pub attitude_rate: Quaternion<f64>,
    /// (p-dot, q-dot, r-dot), rad/s^2
    pub angular_acceleration: Vector3<f64>,
    pub rotor_acceleration: [f64; 4],
}

/// Aerodynamic body drag for a craft moving at `air_relative_velocity`
/// through the air mass.
pub fn drag_force(airframe: &Airframe, air_relative_velocity: &Vector3<f64>) -> Vector3<f64> {
    -airframe.drag_coefficient * air_relative_velocity.norm() * air_relative_velocity
}

/// Part of the drag force attributable to wind: drag relative to the moving
/// air minus drag relative to still air. Exactly zero for zero wind.
pub fn wind_contribution(
    airframe: &Airframe,
    velocity: &Vector3<f64>,
    wind_velocity: &Vector3<f64>,
) -> Vector3<f64> {
    drag_force(airframe, &(velocity - wind_velocity)) - drag_force(airframe, velocity)
}

#[derive(Debug, Clone)]
struct RawState {
    position: Vector3<f64>,
    velocity: Vector3<f64>,
    attitude: Quaternion<f64>,
    body_rates: Vector3<f64>,
    rotor_speeds: [f64; 4],
}

impl RawState {
    fn from_state(s: &QuadState) -> Self {
        Self {
            position: s.position,
            velocity: s.velocity,
            attitude: *s.attitude.quaternion(),
            body_rates: s.body_rates,
            rotor_speeds: s.rotor_speeds,
        }
    }

    fn advanced(&self, d: &StateDerivative, h: f64) -> Self {
        Self {
            position: self.position + d.velocity * h,
            velocity: self.velocity + d.acceleration * h,
            attitude: self.attitude + d.attitude_rate * h,
            body_rates: self.body_rates + d.angular_acceleration * h,
            rotor_speeds: core::array::from_fn(|i| {
                self.rotor_speeds[i] + d.rotor_acceleration[i] * h
            }),
        }
    }
}

fn raw_derivatives(
    airframe: &Airframe,
    s: &RawState,
    commands: &[f64; 4],
    wind_velocity: &Vector3<f64>,
    fault: &FaultConfig,
) -> StateDerivative {
    let attitude = UnitQuaternion::new_normalize(s.attitude);

    let mut thrust = 0.0;
    let mut torque = Vector3::zeros();
    for (i, w) in s.rotor_speeds.iter().enumerate() {
        let w2 = w * w;
        let scale = airframe.rotor_scale[i] * fault.efficiency(i);
        let force = airframe.thrust_coefficient * scale * w2;
        let (x, y) = airframe.rotor_position(i);
        thrust += force;
        torque.x += y * force;
        torque.y -= x * force;
        torque.z += ROTOR_YAW_SIGN[i] * airframe.torque_coefficient * scale * w2;
    }

    let thrust_world = attitude * Vector3::new(0.0, 0.0, thrust);
    let drag = drag_force(airframe, &(s.velocity - wind_velocity));
    let acceleration =
        (thrust_world + drag) / airframe.mass - Vector3::new(0.0, 0.0, airframe.gravity);

    let inertia = Vector3::from(airframe.inertia);
    let w = &s.body_rates;
    let gyroscopic = w.cross(&inertia.component_mul(w));
    let angular_acceleration = (torque - gyroscopic).component_div(&inertia);

    let attitude_rate = s.attitude * Quaternion::from_parts(0.0, *w) * 0.5;

    let rotor_acceleration = core::array::from_fn(|i| {
        let cmd = commands[i].clamp(0.0, airframe.max_rotor_speed);
        (cmd - s.rotor_speeds[i]) / airframe.motor_time_constant
    });

    StateDerivative {
        velocity: s.velocity,
        acceleration,
        attitude_rate,
        angular_acceleration,
        rotor_acceleration,
    }
}

/// Instantaneous state derivative for the given rotor speed commands and
/// world-frame wind velocity. Commands are clamped to `[0, max_rotor_speed]`.
pub fn derivatives(
    airframe: &Airframe,
    state: &QuadState,
    commands: &[f64; 4],
    wind_velocity: &Vector3<f64>,
    fault: &FaultConfig,
) -> StateDerivative {
    raw_derivatives(
        airframe,
        &RawState::from_state(state),
        commands,
        wind_velocity,
        fault,
    )
}

/// One classical Runge-Kutta step. Also returns how far the quaternion norm
/// drifted from one before renormalization.
pub(crate) fn rk4_step(
    airframe: &Airframe,
    state: &QuadState,
    commands: &[f64; 4],
    wind: &WindField,
    fault: &FaultConfig,
    t: f64,
    dt: f64,
) -> (QuadState, f64) {
    let s0 = RawState::from_state(state);
    let w0 = wind.velocity_at(t);
    let wh = wind.velocity_at(t + 0.5 * dt);
    let w1 = wind.velocity_at(t + dt);

    let k1 = raw_derivatives(airframe, &s0, commands, &w0, fault);
    let k2 = raw_derivatives(airframe, &s0.advanced(&k1, 0.5 * dt), commands, &wh, fault);
    let k3 = raw_derivatives(airframe, &s0.advanced(&k2, 0.5 * dt), commands, &wh, fault);
    let k4 = raw_derivatives(airframe, &s0.advanced(&k3, dt), commands, &w1, fault);

    let h = dt / 6.0;
    let position =
        s0.position + (k1.velocity + k2.velocity * 2.0 + k3.velocity * 2.0 + k4.velocity) * h;
    let velocity = s0.velocity
        + (k1.acceleration + k2.acceleration * 2.0 + k3.acceleration * 2.0 + k4.acceleration) * h;
    let attitude = s0.attitude
        + (k1.attitude_rate + k2.attitude_rate * 2.0 + k3.attitude_rate * 2.0 + k4.attitude_rate)
            * h;
    let body_rates = s0.body_rates
        + (k1.angular_acceleration
            + k2.angular_acceleration * 2.0
            + k3.angular_acceleration * 2.0
            + k4.angular_acceleration)
            * h;
    let rotor_speeds = core::array::from_fn(|i| {
        let w = s0.rotor_speeds[i]
            + (k1.rotor_acceleration[i]
                + 2.0 * k2.rotor_acceleration[i]
                + 2.0 * k3.rotor_acceleration[i]
                + k4.rotor_acceleration[i])
                * h;
        w.clamp(0.0, airframe.max_rotor_speed)
    });

    let drift = (attitude.norm() - 1.0).abs();
    let next = QuadState {
        position,
        velocity,
        attitude: UnitQuaternion::new_normalize(attitude),
        body_rates,
        rotor_speeds,
    };
    (next, drift)
}

/// Advances `state` by `dt` under constant rotor commands.
///
/// The faulty propeller's thrust and torque coefficients are scaled by
/// `1 - efficiency_loss`; wind acts through quadratic drag on the velocity
/// relative to the air.
pub fn step_dynamics(
    airframe: &Airframe,
    state: &QuadState,
    commands: &[f64; 4],
    wind: &WindField,
    fault: &FaultConfig,
    t: f64,
    dt: f64,
) -> Result<QuadState> {
    let step = if dt > 0.0 {
        libm::round(t / dt) as usize
    } else {
        0
    };
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::InvalidConfig(alloc::format!(
            "time step must be positive, got {dt}"
        )));
    }
    let diverged = |quantity| Error::SimulationDiverged {
        step,
        time: t,
        quantity,
    };
    if let Some(quantity) = state.first_non_finite() {
        return Err(diverged(quantity));
    }
    if commands.iter().any(|c| !c.is_finite()) {
        return Err(diverged("rotor commands"));
    }
    let (next, _) = rk4_step(airframe, state, commands, wind, fault, t, dt);
    match next.first_non_finite() {
        Some(quantity) => Err(diverged(quantity)),
        None => Ok(next),
    }
}
