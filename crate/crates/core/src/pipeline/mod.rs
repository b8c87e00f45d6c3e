//! End-to-end runs: synthesis, calibration, mode extraction, projection and
//! state reconstruction, driven by one serializable config.

mod commands;
mod config;

use serde::Serialize;

use crate::acf::{
    eigendecompose, eigenvalue_delay_sweep, estimate_acf_with, mode_significance, AcfOptions,
    ModeBasis, ModeSignificance, SweepRow, SweepSource,
};
use crate::analytic::{self, mode_overlap};
use crate::error::{Error, Result};
use crate::exec::ExecPolicy;
use crate::signal::{calibrate_shot_noise, SampleGrid, SegmentSet, TemporalMode};
use crate::synth::{
    analytic_kernel, apply_detection, css_state_law, sample_gaussian_process,
    sample_mode_injected_with, HeraldKind, InjectionOptions, LawKind, QuadratureLaw,
};
use crate::tomography::{
    loss_correct_diagonal, maxlik_reconstruct, photon_distribution, project_ensemble, wigner,
    LossCorrection, MaxLikConfig, MaxLikResult, WignerGrid,
};

pub use commands::{
    cmd_analyze, cmd_simulate, cmd_sweep, cmd_tomography, delay_stem, load_segment_file,
    verify_manifest, FileEntry, Manifest, OUTPUT_DIR_ENV,
};
pub use config::{
    AnalysisConfig, GridConfig, ModeSource, OutputConfig, PipelineConfig, ScenarioConfig,
    SegmentFormat,
};

/// Seed offset for the vacuum reference, so it never shares draws with the state.
const VACUUM_SEED_OFFSET: u64 = 0x9e37_79b9_7f4a_7c15;
/// Sweep delays used when the config lists none.
pub const DEFAULT_SWEEP: [f64; 4] = [0.0, 10e-9, 20e-9, 40e-9];

/// A synthetic state ensemble and its vacuum reference, as raw traces.
#[derive(Debug, Clone)]
pub struct Simulated {
    pub state: SegmentSet,
    pub vacuum: SegmentSet,
}

/// Synthesizes the configured scenario at herald delay `delta_t`.
///
/// Single photons, coincident photon pairs and photon-subtracted squeezed
/// states are injected as non-Gaussian single-mode laws; separated photon
/// pairs are drawn as a Gaussian process with the two-herald kernel, which
/// fixes their second moments but not a joint state.
pub fn synthesize(config: &PipelineConfig, delta_t: f64) -> Result<Simulated> {
    config.validate()?;
    let sc = &config.scenario;
    let grid = config.grid.build()?;
    let gamma = sc.gamma_hz;
    let eta = sc.efficiency;
    let opts = InjectionOptions {
        dark_fraction: sc.dark_fraction,
        policy: ExecPolicy::default(),
    };
    let inject = |law: QuadratureLaw| -> Result<SegmentSet> {
        let phi = analytic::phi(gamma, &grid)?;
        sample_mode_injected_with(grid, &[(phi, law)], config.n_segments, config.seed, opts)
    };
    let state = match sc.kind {
        HeraldKind::Vacuum => {
            sample_mode_injected_with(grid, &[], config.n_segments, config.seed, opts)?
        }
        HeraldKind::SinglePhoton => inject(QuadratureLaw::fixed(LawKind::LossyFock { n: 1, eta }))?,
        HeraldKind::TwoPhoton if delta_t == 0.0 => {
            inject(QuadratureLaw::fixed(LawKind::LossyFock { n: 2, eta }))?
        }
        HeraldKind::TwoPhoton => {
            let mut herald = sc.herald();
            herald.delta_t = delta_t;
            let k = analytic_kernel(&sc.model(), &herald, &grid)?;
            sample_gaussian_process(&k, config.n_segments, config.seed)?
        }
        HeraldKind::CssPhotonSubtracted => {
            if eta != 1.0 {
                return Err(Error::UnsupportedScenario(
                    "photon-subtracted squeezed states are synthesized loss-free only".into(),
                ));
            }
            inject(css_state_law(sc.squeezing_db, config.cutoff())?)?
        }
        HeraldKind::Custom => {
            return Err(Error::UnsupportedScenario(
                "custom scenarios are built through the library API".into(),
            ))
        }
    };
    let vacuum_seed = config.seed.wrapping_add(VACUUM_SEED_OFFSET);
    let vacuum = sample_mode_injected_with(grid, &[], config.vacuum_segments(), vacuum_seed, opts)?;

    let det = sc.detection();
    let state = apply_detection(state, &det, sc.jitter_s, config.seed)?;
    let vacuum = apply_detection(vacuum, &det, 0.0, vacuum_seed)?;
    Ok(Simulated {
        state: state.with_raw_gain(sc.raw_gain),
        vacuum: vacuum.with_raw_gain(sc.raw_gain),
    })
}

/// Overlap of an extracted mode with a closed-form reference.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReferenceOverlap {
    pub reference: String,
    pub mode_index: usize,
    pub overlap: f64,
}

#[derive(Debug, Clone)]
pub struct Analysis {
    pub grid: SampleGrid,
    pub state: ModeBasis,
    pub vacuum: ModeBasis,
    pub significance: ModeSignificance,
    pub references: Vec<ReferenceOverlap>,
    /// Closed-form modes used for the overlaps, for plotting.
    pub reference_modes: Vec<(String, TemporalMode)>,
}

/// Calibrates both ensembles against the vacuum and returns the calibrated pair.
pub fn calibrate_pair(state: SegmentSet, vacuum: SegmentSet) -> Result<(SegmentSet, SegmentSet)> {
    let state = calibrate_shot_noise(state, &vacuum)?;
    let vac = calibrate_shot_noise(vacuum.clone(), &vacuum)?;
    Ok((state, vac))
}

/// Closed-form reference modes for the configured scenario at `delta_t`.
pub fn reference_modes(
    config: &PipelineConfig,
    grid: &SampleGrid,
    delta_t: f64,
) -> Result<Vec<(String, TemporalMode)>> {
    let gamma = config.scenario.gamma_hz;
    Ok(match config.scenario.kind {
        HeraldKind::Vacuum | HeraldKind::Custom => vec![],
        HeraldKind::TwoPhoton if delta_t > 0.0 => {
            let (plus, minus) = analytic::psi_pm(gamma, delta_t, grid)?;
            let mut v = vec![("psi_plus".to_string(), plus)];
            if let Some(m) = minus {
                v.push(("psi_minus".to_string(), m));
            }
            v
        }
        _ => vec![("phi".to_string(), analytic::phi(gamma, grid)?)],
    })
}

/// Second-moment analysis of a calibrated state ensemble against a
/// calibrated vacuum ensemble.
pub fn analyze_sets(
    config: &PipelineConfig,
    state: &SegmentSet,
    vacuum: &SegmentSet,
    delta_t: f64,
) -> Result<Analysis> {
    let opts = AcfOptions {
        subtract_mean: config.analysis.subtract_mean,
    };
    let policy = ExecPolicy::default();
    let state_basis = eigendecompose(&estimate_acf_with(state, opts, policy)?)?;
    let vacuum_basis = eigendecompose(&estimate_acf_with(vacuum, opts, policy)?)?;
    let significance = mode_significance(&state_basis, &vacuum_basis, config.analysis.z_threshold)?;
    let grid = *state.grid();
    let reference_modes = reference_modes(config, &grid, delta_t)?;
    let references = reference_modes
        .iter()
        .enumerate()
        .map(|(k, (name, mode))| {
            Ok(ReferenceOverlap {
                reference: name.clone(),
                mode_index: k,
                overlap: mode_overlap(state_basis.mode(k), mode)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Analysis {
        grid,
        state: state_basis,
        vacuum: vacuum_basis,
        significance,
        references,
        reference_modes,
    })
}

#[derive(Debug, Clone)]
pub struct StateReport {
    pub mode_source: ModeSource,
    /// Overlap of the projection mode with the closed-form reference, if any.
    pub reference_overlap: Option<f64>,
    pub maxlik: MaxLikResult,
    pub photon_distribution: Vec<f64>,
    pub loss_corrected: Option<LossCorrection>,
    pub wigner: WignerGrid,
}

/// Projects a calibrated ensemble onto the chosen mode and reconstructs the state.
pub fn tomography_set(
    config: &PipelineConfig,
    state: &SegmentSet,
    delta_t: f64,
) -> Result<StateReport> {
    let refs = reference_modes(config, state.grid(), delta_t)?;
    let reference = refs.first().map(|(_, m)| m.clone());
    let mode = match config.analysis.mode_source {
        ModeSource::Analytic => reference.clone().ok_or_else(|| {
            Error::UnsupportedScenario("no closed-form mode for this scenario".into())
        })?,
        ModeSource::Extracted => {
            let opts = AcfOptions {
                subtract_mean: config.analysis.subtract_mean,
            };
            let basis = eigendecompose(&estimate_acf_with(state, opts, ExecPolicy::default())?)?;
            basis.mode(0).clone()
        }
    };
    let reference_overlap = reference
        .as_ref()
        .map(|r| mode_overlap(&mode, r))
        .transpose()?;
    let samples = project_ensemble(state, &mode)?;
    let ml_config = MaxLikConfig {
        binning: config.analysis.binning,
        tolerance: config.analysis.tolerance,
        max_iterations: config.analysis.max_iterations,
        strict: false,
    };
    let maxlik = maxlik_reconstruct(&samples, config.cutoff(), &ml_config)?;
    let p = photon_distribution(&maxlik.rho);
    let loss_corrected = config
        .analysis
        .loss_efficiency
        .map(|eta| loss_correct_diagonal(&p, eta))
        .transpose()?;
    let w = wigner(&maxlik.rho, &config.analysis.wigner)?;
    Ok(StateReport {
        mode_source: config.analysis.mode_source,
        reference_overlap,
        maxlik,
        photon_distribution: p,
        loss_corrected,
        wigner: w,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    pub delta_t_s: f64,
    pub kappa0: f64,
    pub kappa1: f64,
    pub predicted_plus: f64,
    pub predicted_minus: f64,
    /// `kappa sqrt(2/N)` for the measured eigenvalues.
    pub kappa0_se: f64,
    pub kappa1_se: f64,
    pub n_significant: usize,
    pub overlaps: Vec<ReferenceOverlap>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepTable {
    pub measured: Vec<SweepPoint>,
    /// Eigenvalues of the discretized two-herald kernel on the same grid.
    pub analytic: Vec<SweepRow>,
}

/// Full statistical pipeline at every delay, alongside the analytic branch.
pub fn sweep(config: &PipelineConfig) -> Result<SweepTable> {
    if config.scenario.kind != HeraldKind::TwoPhoton {
        return Err(Error::Config("sweep needs a two_photon scenario".into()));
    }
    let delays = sweep_delays(config);
    let grid = config.grid.build()?;
    let analytic = eigenvalue_delay_sweep(
        &config.scenario.model(),
        &delays,
        SweepSource::Analytic(grid),
    )?;
    let mut measured = Vec::with_capacity(delays.len());
    for (i, &d) in delays.iter().enumerate() {
        let mut c = config.clone();
        c.seed = config.seed.wrapping_add(i as u64);
        let sim = synthesize(&c, d)?;
        let (state, vac) = calibrate_pair(sim.state, sim.vacuum)?;
        let a = analyze_sets(&c, &state, &vac, d)?;
        let (pp, pm) = analytic::predicted_kappas(config.scenario.gamma_hz, d)?;
        let rel = (2.0 / state.n_segments() as f64).sqrt();
        let ev = a.state.eigenvalues();
        measured.push(SweepPoint {
            delta_t_s: d,
            kappa0: ev[0],
            kappa1: ev[1],
            predicted_plus: pp,
            predicted_minus: pm,
            kappa0_se: ev[0] * rel,
            kappa1_se: ev[1] * rel,
            n_significant: a.significance.n_significant,
            overlaps: a.references,
        });
    }
    Ok(SweepTable { measured, analytic })
}

pub fn sweep_delays(config: &PipelineConfig) -> Vec<f64> {
    if config.scenario.delta_t_sweep_s.is_empty() {
        DEFAULT_SWEEP.to_vec()
    } else {
        config.scenario.delta_t_sweep_s.clone()
    }
}
