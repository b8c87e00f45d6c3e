//! Single-mode state reconstruction from projected quadratures.

mod density;
mod maxlik;
mod povm;
mod wigner;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::exec::{map_blocks, ExecPolicy, BLOCK};
use crate::signal::{dot, SegmentSet, TemporalMode};

pub use density::{loss_correct_diagonal, photon_distribution, DensityMatrix, LossCorrection};
pub use maxlik::{maxlik_reconstruct, Binning, MaxLikConfig, MaxLikResult};
pub use wigner::{wigner, wigner_point, WignerGrid, WignerGridSpec};

/// Default Fock cutoff for single- and two-photon states.
pub const DEFAULT_CUTOFF: usize = 10;
/// Default Fock cutoff for photon-subtracted squeezed states.
pub const DEFAULT_CSS_CUTOFF: usize = 16;

/// Quadrature outcomes of one mode, with LO phases when known.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuadratureSampleSet {
    values: Vec<f64>,
    phases: Option<Vec<f64>>,
    #[serde(skip)]
    source_mode: Option<TemporalMode>,
}

impl QuadratureSampleSet {
    pub fn new(values: Vec<f64>, phases: Option<Vec<f64>>) -> Result<Self> {
        if let Some(p) = &phases {
            if p.len() != values.len() {
                return Err(Error::InvalidInput(format!(
                    "{} phases for {} samples",
                    p.len(),
                    values.len()
                )));
            }
        }
        if values
            .iter()
            .chain(phases.iter().flatten())
            .any(|x| !x.is_finite())
        {
            return Err(Error::InvalidInput("non-finite quadrature sample".into()));
        }
        Ok(QuadratureSampleSet {
            values,
            phases,
            source_mode: None,
        })
    }

    pub fn with_source(mut self, mode: TemporalMode) -> Self {
        self.source_mode = Some(mode);
        self
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn phases(&self) -> Option<&[f64]> {
        self.phases.as_deref()
    }

    pub fn source_mode(&self) -> Option<&TemporalMode> {
        self.source_mode.as_ref()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Unbiased sample variance about zero-mean is `mean(x^2)`; this is that.
    pub fn mean_square(&self) -> f64 {
        self.values.iter().map(|x| x * x).sum::<f64>() / self.values.len().max(1) as f64
    }
}

/// Projects every segment of `set` onto `mode`.
pub fn project_ensemble(set: &SegmentSet, mode: &TemporalMode) -> Result<QuadratureSampleSet> {
    project_ensemble_with(set, mode, ExecPolicy::default())
}

pub fn project_ensemble_with(
    set: &SegmentSet,
    mode: &TemporalMode,
    policy: ExecPolicy,
) -> Result<QuadratureSampleSet> {
    if !set.is_calibrated() {
        return Err(Error::Uncalibrated);
    }
    set.grid().ensure_matches(mode.grid(), "projection mode")?;
    let n = set.grid().n_samples();
    let m = set.n_segments();
    let data = set.flat();
    let w = mode.weights();
    let values: Vec<f64> = map_blocks(policy, m.div_ceil(BLOCK), |b| {
        let hi = ((b + 1) * BLOCK).min(m);
        (b * BLOCK..hi)
            .map(|k| dot(&data[k * n..(k + 1) * n], w))
            .collect::<Vec<_>>()
    })
    .into_iter()
    .flatten()
    .collect();
    Ok(QuadratureSampleSet {
        values,
        phases: set.phases().map(<[f64]>::to_vec),
        source_mode: Some(mode.clone()),
    })
}
