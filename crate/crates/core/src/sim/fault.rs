use serde::{Deserialize, Serialize};

use crate::{Error, Label, Result};

/// Propeller fault injected into a flight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FaultConfig {
    pub label: Label,
    /// Fraction of thrust and torque lost by the faulty propeller. Ignored
    /// for the all-healthy label.
    pub efficiency_loss: f64,
}

impl FaultConfig {
    pub fn healthy() -> Self {
        Self {
            label: Label::HEALTHY,
            efficiency_loss: 0.0,
        }
    }

    pub fn new(label: Label, efficiency_loss: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&efficiency_loss) {
            return Err(Error::InvalidConfig(alloc::format!(
                "efficiency loss must lie in [0, 1], got {efficiency_loss}"
            )));
        }
        Ok(Self {
            label,
            efficiency_loss,
        })
    }

    /// Multiplier on rotor `i`'s thrust and torque coefficients.
    pub fn efficiency(&self, rotor: usize) -> f64 {
        match self.label.faulty_propeller() {
            Some(faulty) if faulty == rotor => 1.0 - self.efficiency_loss,
            _ => 1.0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn healthy_ignores_loss() {
        let fault = FaultConfig::new(Label::HEALTHY, 0.5).unwrap();
        assert!((0..4).all(|i| fault.efficiency(i) == 1.0));
    }

    #[test]
    fn exactly_one_propeller_degraded() {
        for k in 2..=5u8 {
            let fault = FaultConfig::new(Label::new(k).unwrap(), 0.3).unwrap();
            let degraded: alloc::vec::Vec<usize> =
                (0..4).filter(|&i| fault.efficiency(i) != 1.0).collect();
            assert_eq!(degraded, [usize::from(k) - 2]);
            assert_eq!(fault.efficiency(usize::from(k) - 2), 0.7);
        }
    }

    #[test]
    fn loss_out_of_range() {
        assert!(FaultConfig::new(Label::HEALTHY, 1.5).is_err());
        assert!(FaultConfig::new(Label::HEALTHY, -0.1).is_err());
    }
}
