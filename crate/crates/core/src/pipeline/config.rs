use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::acf::DEFAULT_Z_THRESHOLD;
use crate::error::{Error, Result};
use crate::signal::SampleGrid;
use crate::synth::{DetectionModel, HeraldKind, HeraldScenario, OpoModel};
use crate::tomography::{Binning, WignerGridSpec, DEFAULT_CSS_CUTOFF, DEFAULT_CUTOFF};

/// Everything needed to reproduce a run. Every field has a default, so a
/// config file only lists what it changes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub scenario: ScenarioConfig,
    pub grid: GridConfig,
    pub n_segments: usize,
    /// Segments in the vacuum reference; defaults to `n_segments`.
    pub vacuum_segments: Option<usize>,
    pub seed: u64,
    pub analysis: AnalysisConfig,
    pub output: OutputConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            scenario: ScenarioConfig::default(),
            grid: GridConfig::default(),
            n_segments: 50_000,
            vacuum_segments: None,
            seed: 1,
            analysis: AnalysisConfig::default(),
            output: OutputConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub kind: HeraldKind,
    pub gamma_hz: f64,
    pub delta_t_s: f64,
    /// Delays for `sweep`; empty means 0, 10, 20 and 40 ns.
    pub delta_t_sweep_s: Vec<f64>,
    pub efficiency: f64,
    pub dark_fraction: f64,
    pub squeezing_db: f64,
    /// Detector low-pass corner; absent means ideal.
    pub lowpass_hz: Option<f64>,
    pub highpass_hz: f64,
    pub jitter_s: f64,
    pub thermal_amplitude: f64,
    /// Electronic gain applied to written traces; `analyze` removes it by
    /// shot-noise calibration against the vacuum file.
    pub raw_gain: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            kind: HeraldKind::SinglePhoton,
            gamma_hz: 60e6,
            delta_t_s: 0.0,
            delta_t_sweep_s: Vec::new(),
            efficiency: 1.0,
            dark_fraction: 0.0,
            squeezing_db: 3.0,
            lowpass_hz: None,
            highpass_hz: 0.0,
            jitter_s: 0.0,
            thermal_amplitude: 0.0,
            raw_gain: 1.0,
        }
    }
}

impl ScenarioConfig {
    pub fn model(&self) -> OpoModel {
        let mut m = OpoModel::new(self.gamma_hz);
        m.thermal_amplitude = self.thermal_amplitude;
        m
    }

    pub fn herald(&self) -> HeraldScenario {
        HeraldScenario {
            kind: self.kind,
            delta_t: self.delta_t_s,
            efficiency: self.efficiency,
            dark_fraction: self.dark_fraction,
            squeezing_db: self.squeezing_db,
            jitter_rms: self.jitter_s,
        }
    }

    pub fn detection(&self) -> DetectionModel {
        DetectionModel {
            lowpass_bandwidth: self.lowpass_hz,
            highpass_cutoff: self.highpass_hz,
        }
    }
}

/// Sampling grid; `t0_s` defaults to a window centered on the herald.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub dt_s: f64,
    pub n_samples: usize,
    pub t0_s: Option<f64>,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            dt_s: 0.2e-9,
            n_samples: 1000,
            t0_s: None,
        }
    }
}

impl GridConfig {
    pub fn build(&self) -> Result<SampleGrid> {
        match self.t0_s {
            Some(t0) => SampleGrid::new(self.dt_s, self.n_samples, t0),
            None => SampleGrid::centered(self.dt_s, self.n_samples),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeSource {
    /// Top eigenmode of the measured autocorrelation.
    Extracted,
    /// Closed-form mode for the configured scenario.
    Analytic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    pub z_threshold: f64,
    /// Fock cutoff; defaults by scenario kind.
    pub cutoff: Option<usize>,
    pub binning: Binning,
    pub subtract_mean: bool,
    /// Number of leading mode profiles exported.
    pub export_modes: usize,
    pub mode_source: ModeSource,
    /// Known detection efficiency for loss correction of the populations.
    pub loss_efficiency: Option<f64>,
    pub wigner: WignerGridSpec,
    pub max_iterations: usize,
    pub tolerance: f64,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            z_threshold: DEFAULT_Z_THRESHOLD,
            cutoff: None,
            binning: Binning::default(),
            subtract_mean: false,
            export_modes: 4,
            mode_source: ModeSource::Extracted,
            loss_efficiency: None,
            wigner: WignerGridSpec::default(),
            max_iterations: 2000,
            tolerance: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmentFormat {
    Binary,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub directory: PathBuf,
    pub segment_format: SegmentFormat,
    /// Also emit CSV next to the JSON plot data.
    pub csv: bool,
    /// Save kernel and mode basis containers from `analyze`.
    pub save_kernels: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            directory: PathBuf::from("tempmode-out"),
            segment_format: SegmentFormat::Binary,
            csv: false,
            save_kernels: false,
        }
    }
}

impl PipelineConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn vacuum_segments(&self) -> usize {
        self.vacuum_segments.unwrap_or(self.n_segments)
    }

    pub fn cutoff(&self) -> usize {
        self.analysis.cutoff.unwrap_or(match self.scenario.kind {
            HeraldKind::CssPhotonSubtracted => DEFAULT_CSS_CUTOFF,
            _ => DEFAULT_CUTOFF,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.build()?;
        self.scenario.model().validate()?;
        self.scenario.herald().validate()?;
        self.scenario.detection().validate()?;
        if self.n_segments < 2 || self.vacuum_segments() < 100 {
            return Err(Error::Config(
                "need at least 2 state segments and 100 vacuum segments".into(),
            ));
        }
        if !(self.scenario.raw_gain.is_finite() && self.scenario.raw_gain > 0.0) {
            return Err(Error::Config("raw_gain must be positive".into()));
        }
        if self
            .scenario
            .delta_t_sweep_s
            .iter()
            .any(|d| !(d.is_finite() && *d >= 0.0))
        {
            return Err(Error::Config("sweep delays must be non-negative".into()));
        }
        if !(self.analysis.z_threshold.is_finite() && self.analysis.z_threshold > 0.0) {
            return Err(Error::Config("z_threshold must be positive".into()));
        }
        if let Some(eta) = self.analysis.loss_efficiency {
            if !(eta > 0.0 && eta <= 1.0) {
                return Err(Error::Config(format!(
                    "loss_efficiency {eta} outside (0, 1]"
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_roundtrip_through_toml() {
        let c = PipelineConfig::default();
        let s = c.to_toml_string().unwrap();
        assert_eq!(PipelineConfig::from_toml_str(&s).unwrap(), c);
        c.validate().unwrap();
        assert_eq!(c.grid.build().unwrap(), SampleGrid::paper_window());
    }

    #[test]
    fn partial_files_override_defaults() {
        let c = PipelineConfig::from_toml_str(
            "n_segments = 1000\n[scenario]\nkind = \"two_photon\"\ndelta_t_s = 2e-8\n",
        )
        .unwrap();
        assert_eq!(c.n_segments, 1000);
        assert_eq!(c.scenario.kind, HeraldKind::TwoPhoton);
        assert_eq!(c.scenario.gamma_hz, 60e6);
        assert_eq!(c.cutoff(), DEFAULT_CUTOFF);
    }

    #[test]
    fn unknown_keys_and_bad_values_are_rejected() {
        assert!(PipelineConfig::from_toml_str("n_segmnts = 3").is_err());
        let mut c = PipelineConfig::default();
        c.scenario.efficiency = 1.5;
        assert!(c.validate().is_err());
        c = PipelineConfig::default();
        c.vacuum_segments = Some(10);
        assert!(c.validate().is_err());
    }
}
