use core::f64::consts::TAU;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Serializable wind description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindParams {
    /// World-frame mean wind velocity, m/s.
    pub mean: [f64; 3],
    /// Peak gust speed added on top of the mean, m/s.
    pub gust_amplitude: f64,
    /// Dominant gust period, s.
    pub gust_period: f64,
    pub seed: u64,
}

impl WindParams {
    pub fn calm() -> Self {
        Self {
            mean: [0.0; 3],
            gust_amplitude: 0.0,
            gust_period: 1.0,
            seed: 0,
        }
    }
}

/// Number of sinusoids summed into each axis' phase noise.
const PHASE_TERMS: usize = 3;
/// Relative gust strength on the world x, y and z axes.
const AXIS_WEIGHT: [f64; 3] = [1.0, 1.0, 0.3];

#[derive(Debug, Clone, Copy, PartialEq)]
struct PhaseTerm {
    amplitude: f64,
    frequency: f64,
    offset: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct GustAxis {
    offset: f64,
    terms: [PhaseTerm; PHASE_TERMS],
}

/// Mean wind plus sinusoidal gusts whose phase wanders by a seeded sum of
/// slower sinusoids. The wind velocity is a pure function of time, so equal
/// parameters give bit-identical samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "WindParams", into = "WindParams")]
pub struct WindField {
    params: WindParams,
    axes: [GustAxis; 3],
}

impl WindField {
    pub fn new(params: WindParams) -> Result<Self> {
        if !(params.gust_amplitude.is_finite() && params.gust_amplitude >= 0.0) {
            return Err(Error::InvalidConfig(alloc::format!(
                "gust amplitude must be non-negative, got {}",
                params.gust_amplitude
            )));
        }
        if !(params.gust_period.is_finite() && params.gust_period > 0.0) {
            return Err(Error::InvalidConfig(alloc::format!(
                "gust period must be positive, got {}",
                params.gust_period
            )));
        }
        if params.mean.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("mean wind must be finite".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        let base = 1.0 / params.gust_period;
        let axes = core::array::from_fn(|_| GustAxis {
            offset: rng.random_range(0.0..TAU),
            terms: core::array::from_fn(|_| PhaseTerm {
                amplitude: rng.random_range(0.0..0.5),
                frequency: base * rng.random_range(0.3..1.5),
                offset: rng.random_range(0.0..TAU),
            }),
        });
        Ok(Self { params, axes })
    }

    pub fn calm() -> Self {
        Self::new(WindParams::calm()).expect("calm wind is valid")
    }

    pub fn params(&self) -> &WindParams {
        &self.params
    }

    pub fn is_calm(&self) -> bool {
        self.params.gust_amplitude == 0.0 && self.params.mean.iter().all(|v| *v == 0.0)
    }

    /// World-frame wind velocity at time `t`, m/s.
    pub fn velocity_at(&self, t: f64) -> Vector3<f64> {
        let p = &self.params;
        let omega = TAU / p.gust_period;
        let gust = |axis: usize| {
            let a = &self.axes[axis];
            let wander: f64 = a
                .terms
                .iter()
                .map(|term| term.amplitude * libm::sin(TAU * term.frequency * t + term.offset))
                .sum();
            p.gust_amplitude * AXIS_WEIGHT[axis] * libm::sin(omega * t + a.offset + wander)
        };
        Vector3::new(
            p.mean[0] + gust(0),
            p.mean[1] + gust(1),
            p.mean[2] + gust(2),
        )
    }
}

impl TryFrom<WindParams> for WindField {
    type Error = Error;

    fn try_from(params: WindParams) -> Result<Self> {
        WindField::new(params)
    }
}

impl From<WindField> for WindParams {
    fn from(field: WindField) -> Self {
        field.params
    }
}
