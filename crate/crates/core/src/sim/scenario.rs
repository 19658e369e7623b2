use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    fly_mission, Domain, FaultConfig, FlightLog, FlightRole, MissionConfig, WindField, WindParams,
};
use crate::{Error, Label, Result, NUM_CLASSES};

/// Closed square patrol at constant altitude, starting at the origin corner.
pub fn square_waypoints(side: f64, altitude: f64) -> Vec<[f64; 3]> {
    alloc::vec![
        [0.0, 0.0, altitude],
        [side, 0.0, altitude],
        [side, side, altitude],
        [0.0, side, altitude],
    ]
}

/// Wind seen in the target domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetWind {
    /// m/s, horizontal, random heading per flight
    pub mean_speed: f64,
    /// m/s
    pub gust_amplitude: f64,
    /// s; the source gust period when unset
    #[serde(default)]
    pub gust_period: Option<f64>,
}

/// How the pseudo-real target domain differs from simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TargetPerturbation {
    pub mass_scale: f64,
    pub inertia_scale: f64,
    /// rad/s, added to every gyro axis
    pub gyro_bias: f64,
    /// Per-rotor thrust and torque multipliers (installation error).
    pub rotor_scale: [f64; 4],
    /// Half-width of a uniform per-flight factor on each rotor, on top of
    /// `rotor_scale` (propellers swapped between flights).
    pub rotor_jitter: f64,
    /// Replaces the source wind when set.
    pub wind: Option<TargetWind>,
    /// Efficiency losses of the damaged propellers flown in the target
    /// domain, for labels 2 to 5. Falls back to the source losses.
    pub fault_losses: Option<[f64; 4]>,
    /// All-healthy calibration flights per label. Only label 1 may be
    /// non-zero.
    pub calibration_flights: [usize; NUM_CLASSES],
    /// Evaluation flights per label.
    pub evaluation_flights: usize,
}

impl Default for TargetPerturbation {
    fn default() -> Self {
        Self {
            mass_scale: 1.05,
            inertia_scale: 1.03,
            gyro_bias: 0.01,
            rotor_scale: [1.0; 4],
            rotor_jitter: 0.06,
            wind: Some(TargetWind {
                mean_speed: 3.0,
                gust_amplitude: 3.0,
                gust_period: None,
            }),
            fault_losses: None,
            calibration_flights: [6, 0, 0, 0, 0],
            evaluation_flights: 4,
        }
    }
}

impl TargetPerturbation {
    /// A target domain produced by exactly the source generator.
    pub fn none() -> Self {
        Self {
            mass_scale: 1.0,
            inertia_scale: 1.0,
            gyro_bias: 0.0,
            rotor_scale: [1.0; 4],
            rotor_jitter: 0.0,
            wind: None,
            fault_losses: None,
            ..Self::default()
        }
    }

    fn apply(&self, mission: &MissionConfig) -> MissionConfig {
        let mut m = mission.clone();
        m.airframe.mass *= self.mass_scale;
        for i in m.airframe.inertia.iter_mut() {
            *i *= self.inertia_scale;
        }
        for (s, p) in m.airframe.rotor_scale.iter_mut().zip(self.rotor_scale) {
            *s *= p;
        }
        for b in m.sensors.gyro_bias.iter_mut() {
            *b += self.gyro_bias;
        }
        m
    }
}

/// Scenario for generating a source/target pair of flight collections.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub mission: MissionConfig,
    /// s per flight
    pub duration: f64,
    /// Log interval, s.
    pub log_dt: f64,
    pub waypoints: Vec<[f64; 3]>,
    /// Mean wind speeds of the source domain, m/s.
    pub source_wind_speeds: Vec<f64>,
    /// Source gust amplitude as a fraction of the mean wind speed.
    pub source_gust_ratio: f64,
    /// s
    pub gust_period: f64,
    /// Efficiency losses for labels 2 to 5.
    pub fault_losses: [f64; 4],
    /// Source training flights per label and wind speed.
    pub training_flights: usize,
    /// Held-out source flights per label and wind speed.
    pub evaluation_flights: usize,
    pub target: TargetPerturbation,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        let mut mission = MissionConfig::default();
        mission.sensors.gyro_noise_std = 0.005;
        Self {
            seed: 2024,
            mission,
            duration: 60.0,
            log_dt: 0.5,
            waypoints: square_waypoints(4.0, 2.0),
            source_wind_speeds: alloc::vec![0.0, 5.0, 10.0],
            source_gust_ratio: 0.3,
            gust_period: 4.0,
            fault_losses: [0.15, 0.20, 0.30, 0.25],
            training_flights: 8,
            evaluation_flights: 1,
            target: TargetPerturbation::default(),
        }
    }
}

/// Fully resolved description of one flight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlightSpec {
    pub id: u32,
    pub domain: Domain,
    pub role: FlightRole,
    pub fault: FaultConfig,
    pub wind: WindParams,
    pub seed: u64,
    pub mission: MissionConfig,
    pub waypoints: Vec<[f64; 3]>,
    pub duration: f64,
    pub log_dt: f64,
}

impl FlightSpec {
    pub fn fly(&self) -> Result<FlightLog> {
        let wind = WindField::new(self.wind.clone())?;
        let mut log = fly_mission(
            &self.mission,
            &self.waypoints,
            &wind,
            &self.fault,
            self.duration,
            self.log_dt,
            self.seed,
        )?;
        log.id = self.id;
        log.domain = self.domain;
        log.role = self.role;
        Ok(log)
    }
}

/// Source and target flights of one scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainPair {
    pub source: Vec<FlightLog>,
    pub target: Vec<FlightLog>,
}

impl DomainPair {
    pub fn source_with_role(&self, role: FlightRole) -> impl Iterator<Item = &FlightLog> {
        self.source.iter().filter(move |l| l.role == role)
    }

    pub fn target_with_role(&self, role: FlightRole) -> impl Iterator<Item = &FlightLog> {
        self.target.iter().filter(move |l| l.role == role)
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        self.mission.validate()?;
        let bad = |msg: alloc::string::String| Err(Error::InvalidConfig(msg));
        if self.waypoints.is_empty() {
            return bad("scenario needs at least one waypoint".into());
        }
        if self.source_wind_speeds.is_empty()
            || self
                .source_wind_speeds
                .iter()
                .any(|s| !(s.is_finite() && *s >= 0.0))
        {
            return bad(
                "source wind speeds must be a non-empty list of non-negative values".into(),
            );
        }
        if self.training_flights == 0 {
            return bad("training_flights must be at least 1".into());
        }
        if !(self.source_gust_ratio >= 0.0 && self.gust_period > 0.0) {
            return bad("gust ratio must be non-negative and gust period positive".into());
        }
        let target_losses = self.target.fault_losses.unwrap_or(self.fault_losses);
        for loss in self.fault_losses.iter().chain(target_losses.iter()) {
            if !(0.0..=1.0).contains(loss) {
                return bad(format!("efficiency loss {loss} outside [0, 1]"));
            }
        }
        if let Some((index, _)) = self
            .target
            .calibration_flights
            .iter()
            .enumerate()
            .skip(1)
            .find(|(_, n)| **n > 0)
        {
            return bad(format!(
                "calibration flights must be all-healthy, but {} flights of label {} were requested",
                self.target.calibration_flights[index],
                index + 1
            ));
        }
        if self.target.calibration_flights[0] == 0 {
            return bad("at least one all-healthy calibration flight is required".into());
        }
        let t = &self.target;
        if !(t.mass_scale > 0.0 && t.inertia_scale > 0.0 && t.gyro_bias.is_finite())
            || t.rotor_scale.iter().any(|s| s.is_nan() || *s <= 0.0)
            || !(0.0..1.0).contains(&t.rotor_jitter)
        {
            return bad("invalid target perturbation".into());
        }
        if let Some(w) = &t.wind {
            if !(w.mean_speed >= 0.0 && w.gust_amplitude >= 0.0) {
                return bad("target wind must be non-negative".into());
            }
        }
        Ok(())
    }

    fn fault_for(&self, label: Label, losses: &[f64; 4]) -> FaultConfig {
        let loss = label.faulty_propeller().map_or(0.0, |p| losses[p]);
        FaultConfig {
            label,
            efficiency_loss: loss,
        }
    }

    /// Every flight of the scenario, in a fixed order: source training,
    /// source evaluation, target calibration, target evaluation. Seeds and
    /// wind headings come from one generator seeded with `self.seed`.
    pub fn flight_specs(&self) -> Result<Vec<FlightSpec>> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut specs = Vec::new();

        let mut push = |specs: &mut Vec<FlightSpec>,
                        domain: Domain,
                        role: FlightRole,
                        fault: FaultConfig,
                        speed: f64,
                        gust: f64,
                        gust_period: f64,
                        mission: &MissionConfig,
                        rotor_jitter: f64| {
            let heading: f64 = rng.random_range(0.0..TAU);
            let wind_seed: u64 = rng.random();
            let seed: u64 = rng.random();
            let mut mission = mission.clone();
            if rotor_jitter > 0.0 {
                for s in mission.airframe.rotor_scale.iter_mut() {
                    *s *= 1.0 + rng.random_range(-rotor_jitter..=rotor_jitter);
                }
            }
            specs.push(FlightSpec {
                id: specs.len() as u32,
                domain,
                role,
                fault,
                wind: WindParams {
                    mean: [speed * libm::cos(heading), speed * libm::sin(heading), 0.0],
                    gust_amplitude: gust,
                    gust_period,
                    seed: wind_seed,
                },
                seed,
                mission,
                waypoints: self.waypoints.clone(),
                duration: self.duration,
                log_dt: self.log_dt,
            });
        };

        for (role, count) in [
            (FlightRole::Training, self.training_flights),
            (FlightRole::Evaluation, self.evaluation_flights),
        ] {
            for label in Label::all() {
                let fault = self.fault_for(label, &self.fault_losses);
                for &speed in &self.source_wind_speeds {
                    for _ in 0..count {
                        let gust = speed * self.source_gust_ratio;
                        push(
                            &mut specs,
                            Domain::Source,
                            role,
                            fault,
                            speed,
                            gust,
                            self.gust_period,
                            &self.mission,
                            0.0,
                        );
                    }
                }
            }
        }

        let target = &self.target;
        let target_mission = target.apply(&self.mission);
        let target_losses = target.fault_losses.unwrap_or(self.fault_losses);
        let levels = &self.source_wind_speeds;
        let mut target_flight = 0usize;
        let wind_for = |n: usize| match &target.wind {
            Some(w) => (
                w.mean_speed,
                w.gust_amplitude,
                w.gust_period.unwrap_or(self.gust_period),
            ),
            None => {
                let speed = levels[n % levels.len()];
                (speed, speed * self.source_gust_ratio, self.gust_period)
            }
        };
        for (role, counts) in [
            (FlightRole::Calibration, target.calibration_flights),
            (
                FlightRole::Evaluation,
                [target.evaluation_flights; NUM_CLASSES],
            ),
        ] {
            for label in Label::all() {
                let fault = self.fault_for(label, &target_losses);
                for _ in 0..counts[label.index()] {
                    let (speed, gust, period) = wind_for(target_flight);
                    target_flight += 1;
                    push(
                        &mut specs,
                        Domain::Target,
                        role,
                        fault,
                        speed,
                        gust,
                        period,
                        &target_mission,
                        target.rotor_jitter,
                    );
                }
            }
        }
        Ok(specs)
    }
}

/// Flies every flight of the scenario sequentially.
pub fn generate_domain_pair(config: &ScenarioConfig) -> Result<DomainPair> {
    let mut pair = DomainPair {
        source: Vec::new(),
        target: Vec::new(),
    };
    for spec in config.flight_specs()? {
        let log = spec.fly()?;
        match log.domain {
            Domain::Source => pair.source.push(log),
            Domain::Target => pair.target.push(log),
        }
    }
    Ok(pair)
}
