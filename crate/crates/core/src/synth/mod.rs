//! Synthetic homodyne ensembles with known ground truth.
//!
//! Two independent backends: Gaussian processes drawn from an exactly known
//! kernel (validates the second-moment mode extraction), and mode injection,
//! which writes an arbitrary single-mode quadrature law into chosen temporal
//! modes of white vacuum noise (validates tomography).

mod css;
mod detection;
mod gaussian;
mod inject;
mod kernel;
mod law;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use css::{css_state_coefficients, css_state_law, squeezing_parameter};
pub use detection::{apply_detection, apply_detection_with, detection_matrix, DetectionModel};
pub use gaussian::{sample_gaussian_process, sample_gaussian_process_with};
pub use inject::{sample_mode_injected, sample_mode_injected_with, InjectionOptions};
pub use kernel::analytic_kernel;
pub use law::{sample_quadrature, LawKind, PhasePolicy, QuadratureLaw, QuadratureSampler};

/// Heralding source: OPO cavity bandwidth and optional thermal background.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpoModel {
    /// Cavity bandwidth in Hz.
    pub gamma: f64,
    /// Weight of the unconditioned thermal term; 0 in the low-pump limit.
    #[serde(default)]
    pub thermal_amplitude: f64,
    #[serde(default)]
    pub pump_regime_note: String,
}

impl OpoModel {
    pub fn new(gamma: f64) -> Self {
        OpoModel {
            gamma,
            thermal_amplitude: 0.0,
            pump_regime_note: "low pump, thermal term negligible".into(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma.is_finite() && self.gamma > 0.0) {
            return Err(Error::InvalidInput(format!(
                "gamma must be positive, got {}",
                self.gamma
            )));
        }
        if !(self.thermal_amplitude.is_finite() && self.thermal_amplitude >= 0.0) {
            return Err(Error::InvalidInput(
                "thermal amplitude must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeraldKind {
    Vacuum,
    SinglePhoton,
    TwoPhoton,
    CssPhotonSubtracted,
    Custom,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HeraldScenario {
    pub kind: HeraldKind,
    /// Separation of the two heralds in seconds (two-photon only).
    pub delta_t: f64,
    pub efficiency: f64,
    /// Fraction of heralds that are background clicks.
    pub dark_fraction: f64,
    pub squeezing_db: f64,
    /// RMS herald timing jitter in seconds.
    pub jitter_rms: f64,
}

impl Default for HeraldScenario {
    fn default() -> Self {
        HeraldScenario {
            kind: HeraldKind::Vacuum,
            delta_t: 0.0,
            efficiency: 1.0,
            dark_fraction: 0.0,
            squeezing_db: 3.0,
            jitter_rms: 0.0,
        }
    }
}

impl HeraldScenario {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.efficiency) {
            return Err(Error::InvalidInput(format!(
                "efficiency {} outside [0, 1]",
                self.efficiency
            )));
        }
        if !(0.0..1.0).contains(&self.dark_fraction) {
            return Err(Error::InvalidInput(format!(
                "dark fraction {} outside [0, 1)",
                self.dark_fraction
            )));
        }
        if !(self.delta_t.is_finite() && self.delta_t >= 0.0) {
            return Err(Error::InvalidInput("delay must be non-negative".into()));
        }
        if !(self.jitter_rms.is_finite() && self.jitter_rms >= 0.0) {
            return Err(Error::InvalidInput("jitter must be non-negative".into()));
        }
        Ok(())
    }
}
