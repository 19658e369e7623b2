use alloc::format;
use alloc::vec::Vec;

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::dynamics::rk4_step;
use super::{
    Airframe, CascadedController, ControllerGains, Domain, FaultConfig, FlightLog, FlightRole,
    LogRow, QuadState, SensorModel, WindField,
};
use crate::{Error, Result};

/// Everything about a flight except where it goes and what breaks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MissionConfig {
    /// The plant actually flown.
    pub airframe: Airframe,
    /// The airframe the controller believes it is flying.
    pub nominal: Airframe,
    pub gains: ControllerGains,
    pub sensors: SensorModel,
    /// Integration and control step, s.
    pub sim_dt: f64,
    /// Distance at which a waypoint counts as reached, m.
    pub acceptance_radius: f64,
}

impl Default for MissionConfig {
    fn default() -> Self {
        Self {
            airframe: Airframe::default(),
            nominal: Airframe::default(),
            gains: ControllerGains::default(),
            sensors: SensorModel::default(),
            sim_dt: 0.01,
            acceptance_radius: 0.3,
        }
    }
}

impl MissionConfig {
    pub fn validate(&self) -> Result<()> {
        self.airframe.validate()?;
        self.nominal.validate()?;
        self.sensors.validate()?;
        if !(self.sim_dt.is_finite() && self.sim_dt > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "sim_dt must be positive, got {}",
                self.sim_dt
            )));
        }
        Ok(())
    }
}

struct Gyro {
    bias: Vector3<f64>,
    noise: Option<Normal<f64>>,
    rng: ChaCha8Rng,
}

impl Gyro {
    fn new(model: &SensorModel, seed: u64) -> Self {
        let noise = (model.gyro_noise_std > 0.0)
            .then(|| Normal::new(0.0, model.gyro_noise_std).expect("validated std"));
        Self {
            bias: Vector3::from(model.gyro_bias),
            noise,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    fn read(&mut self, true_rates: &Vector3<f64>) -> Vector3<f64> {
        let mut rates = true_rates + self.bias;
        if let Some(noise) = &self.noise {
            for v in rates.iter_mut() {
                *v += noise.sample(&mut self.rng);
            }
        }
        rates
    }
}

/// Flies the waypoint list cyclically, starting in hover at the first
/// waypoint, and logs one row every `dt` seconds for `duration` seconds.
///
/// Angular accelerations are finite differences of consecutive logged gyro
/// readings. Gyro noise is drawn from a generator seeded with `seed`, so the
/// log is a deterministic function of the arguments. Waypoints never reached
/// are reported in the log's warnings.
pub fn fly_mission(
    config: &MissionConfig,
    waypoints: &[[f64; 3]],
    wind: &WindField,
    fault: &FaultConfig,
    duration: f64,
    dt: f64,
    seed: u64,
) -> Result<FlightLog> {
    config.validate()?;
    if waypoints.is_empty() {
        return Err(Error::InvalidConfig(
            "mission needs at least one waypoint".into(),
        ));
    }
    if !(dt.is_finite() && dt > 0.0 && duration.is_finite() && duration >= dt) {
        return Err(Error::InvalidConfig(format!(
            "need 0 < dt <= duration, got dt = {dt}, duration = {duration}"
        )));
    }
    let substeps = libm::round(dt / config.sim_dt) as usize;
    if substeps == 0 || (substeps as f64 * config.sim_dt - dt).abs() > 1e-9 {
        return Err(Error::InvalidConfig(format!(
            "log interval {dt} s is not a multiple of the integration step {} s",
            config.sim_dt
        )));
    }
    let rows = libm::round(duration / dt) as usize;

    let targets: Vec<Vector3<f64>> = waypoints.iter().map(|w| Vector3::from(*w)).collect();
    let mut reached = alloc::vec![false; targets.len()];
    reached[0] = true;
    let mut current = if targets.len() > 1 { 1 } else { 0 };

    let mut state = QuadState::hover(targets[0], &config.airframe);
    let mut controller = CascadedController::new(config.gains.clone(), config.nominal.clone());
    let mut gyro = Gyro::new(&config.sensors, seed);

    let mut log_rows = Vec::with_capacity(rows);
    let mut positions = Vec::with_capacity(rows);
    let mut previous_rates = gyro.read(&state.body_rates);
    let mut step = 0usize;

    for row in 1..=rows {
        let mut speed_sq_sum = [0.0; 4];
        for _ in 0..substeps {
            let t = step as f64 * config.sim_dt;
            if (state.position - targets[current]).norm() < config.acceptance_radius {
                reached[current] = true;
                current = (current + 1) % targets.len();
            }
            let rates = gyro.read(&state.body_rates);
            let commands = controller.update(
                &state.position,
                &state.velocity,
                &state.attitude,
                &rates,
                &targets[current],
                config.sim_dt,
            );
            if commands.iter().any(|c| !c.is_finite()) {
                return Err(Error::SimulationDiverged {
                    step,
                    time: t,
                    quantity: "rotor commands",
                });
            }
            let (next, _) = rk4_step(
                &config.airframe,
                &state,
                &commands,
                wind,
                fault,
                t,
                config.sim_dt,
            );
            if let Some(quantity) = next.first_non_finite() {
                return Err(Error::SimulationDiverged {
                    step,
                    time: t,
                    quantity,
                });
            }
            state = next;
            step += 1;
            speed_sq_sum
                .iter_mut()
                .zip(state.rotor_speeds)
                .for_each(|(acc, w)| *acc += w * w);
        }

        let rates = gyro.read(&state.body_rates);
        let accel = (rates - previous_rates) / dt;
        previous_rates = rates;
        log_rows.push(LogRow {
            time: row as f64 * dt,
            angular_acceleration: [accel.x, accel.y, accel.z],
            rotor_speed_sq: speed_sq_sum.map(|s| s / substeps as f64),
        });
        positions.push([state.position.x, state.position.y, state.position.z]);
    }

    let warnings = reached
        .iter()
        .enumerate()
        .filter(|(_, r)| !**r)
        .map(|(i, _)| format!("waypoint {i} not reached within {duration} s"))
        .collect();

    Ok(FlightLog {
        id: 0,
        dt,
        rows: log_rows,
        positions,
        label: fault.label,
        domain: Domain::Source,
        role: FlightRole::Training,
        waypoints: waypoints.to_vec(),
        seed,
        wind: wind.params().clone(),
        fault: *fault,
        warnings,
    })
}
