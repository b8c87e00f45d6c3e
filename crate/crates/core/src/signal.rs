//! Discrete-time signal model and shot-noise units.
//!
//! Samples are dimensionless quadratures in shot-noise units (vacuum variance
//! 1 per sample). Mode weights carry the `sqrt(dt)` factor, `f_i ~ f(t_i) sqrt(dt)`,
//! so that a normalized mode has `sum f_i^2 = 1` and the vacuum kernel is the
//! identity matrix.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform time grid. `t0` is the time of the first sample relative to the herald.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleGrid {
    dt: f64,
    n_samples: usize,
    t0: f64,
}

impl SampleGrid {
    pub fn new(dt: f64, n_samples: usize, t0: f64) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::InvalidGrid(format!("dt must be positive, got {dt}")));
        }
        if n_samples < 2 {
            return Err(Error::InvalidGrid(format!(
                "need at least 2 samples, got {n_samples}"
            )));
        }
        if !t0.is_finite() {
            return Err(Error::InvalidGrid("t0 must be finite".into()));
        }
        let duration = dt * (n_samples - 1) as f64;
        if !duration.is_finite() {
            return Err(Error::InvalidGrid("duration overflows".into()));
        }
        Ok(SampleGrid { dt, n_samples, t0 })
    }

    /// Grid of `n_samples` points spaced `dt` whose first sample sits at `t0`
    /// and whose window is centered on the herald when `t0 = -duration/2`.
    pub fn centered(dt: f64, n_samples: usize) -> Result<Self> {
        let half = dt * (n_samples.saturating_sub(1)) as f64 / 2.0;
        Self::new(dt, n_samples, -half)
    }

    /// The recording window used in the experiments: 200 ns at 5 GS/s,
    /// herald in the middle.
    pub fn paper_window() -> Self {
        Self::centered(0.2e-9, 1000).expect("static grid")
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn duration(&self) -> f64 {
        self.dt * (self.n_samples - 1) as f64
    }

    pub fn time(&self, i: usize) -> f64 {
        self.t0 + self.dt * i as f64
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_samples).map(move |i| self.time(i))
    }

    /// Grids compare equal up to a relative tolerance on the floating fields.
    pub fn matches(&self, other: &SampleGrid) -> bool {
        let close = |a: f64, b: f64, scale: f64| (a - b).abs() <= 1e-9 * scale;
        self.n_samples == other.n_samples
            && close(self.dt, other.dt, self.dt)
            && close(self.t0, other.t0, self.dt)
    }

    pub(crate) fn ensure_matches(&self, other: &SampleGrid, what: &str) -> Result<()> {
        if self.matches(other) {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!(
                "{what}: (dt={}, n={}, t0={}) vs (dt={}, n={}, t0={})",
                self.dt, self.n_samples, self.t0, other.dt, other.n_samples, other.t0
            )))
        }
    }
}

/// A single homodyne trace.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureSegment {
    grid: SampleGrid,
    samples: Vec<f64>,
    lo_phase: Option<f64>,
}

impl QuadratureSegment {
    pub fn new(grid: SampleGrid, samples: Vec<f64>, lo_phase: Option<f64>) -> Result<Self> {
        if samples.len() != grid.n_samples() {
            return Err(Error::InvalidInput(format!(
                "segment has {} samples, grid expects {}",
                samples.len(),
                grid.n_samples()
            )));
        }
        if let Some(i) = samples.iter().position(|x| !x.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "non-finite sample at index {i}"
            )));
        }
        Ok(QuadratureSegment {
            grid,
            samples,
            lo_phase,
        })
    }

    pub fn grid(&self) -> &SampleGrid {
        &self.grid
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn lo_phase(&self) -> Option<f64> {
        self.lo_phase
    }
}

/// Ensemble of segments on one grid, stored as a row-major
/// `n_segments x n_samples` block.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentSet {
    grid: SampleGrid,
    data: Vec<f64>,
    phases: Option<Vec<f64>>,
    calibrated: bool,
}

impl SegmentSet {
    pub fn from_flat(
        grid: SampleGrid,
        data: Vec<f64>,
        phases: Option<Vec<f64>>,
        calibrated: bool,
    ) -> Result<Self> {
        let n = grid.n_samples();
        if data.is_empty() || !data.len().is_multiple_of(n) {
            return Err(Error::InvalidInput(format!(
                "flat data length {} is not a positive multiple of {n}",
                data.len()
            )));
        }
        let n_segments = data.len() / n;
        if let Some(p) = &phases {
            if p.len() != n_segments {
                return Err(Error::InvalidInput(format!(
                    "{} phases for {n_segments} segments",
                    p.len()
                )));
            }
        }
        if let Some(i) = data.iter().position(|x| !x.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "non-finite sample in segment {}",
                i / n
            )));
        }
        Ok(SegmentSet {
            grid,
            data,
            phases,
            calibrated,
        })
    }

    /// Phases are recorded for every segment or for none.
    pub fn from_segments(segments: Vec<QuadratureSegment>, calibrated: bool) -> Result<Self> {
        let first = segments
            .first()
            .ok_or_else(|| Error::InvalidInput("segment set must not be empty".into()))?;
        let grid = *first.grid();
        let with_phase = first.lo_phase().is_some();
        let mut data = Vec::with_capacity(segments.len() * grid.n_samples());
        let mut phases = Vec::new();
        for (k, s) in segments.iter().enumerate() {
            grid.ensure_matches(s.grid(), &format!("segment {k}"))?;
            if s.lo_phase().is_some() != with_phase {
                return Err(Error::InvalidInput(
                    "LO phase must be present on all segments or none".into(),
                ));
            }
            data.extend_from_slice(s.samples());
            phases.extend(s.lo_phase());
        }
        Self::from_flat(grid, data, with_phase.then_some(phases), calibrated)
    }

    pub fn grid(&self) -> &SampleGrid {
        &self.grid
    }

    pub fn n_segments(&self) -> usize {
        self.data.len() / self.grid.n_samples()
    }

    pub fn is_calibrated(&self) -> bool {
        self.calibrated
    }

    pub fn phases(&self) -> Option<&[f64]> {
        self.phases.as_deref()
    }

    pub fn flat(&self) -> &[f64] {
        &self.data
    }

    pub fn segment_samples(&self, k: usize) -> &[f64] {
        let n = self.grid.n_samples();
        &self.data[k * n..(k + 1) * n]
    }

    pub fn segment(&self, k: usize) -> QuadratureSegment {
        QuadratureSegment {
            grid: self.grid,
            samples: self.segment_samples(k).to_vec(),
            lo_phase: self.phases.as_ref().map(|p| p[k]),
        }
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> {
        self.data.chunks_exact(self.grid.n_samples())
    }

    pub(crate) fn into_parts(self) -> (SampleGrid, Vec<f64>, Option<Vec<f64>>, bool) {
        (self.grid, self.data, self.phases, self.calibrated)
    }

    /// Mean of `x^2` over every sample of every segment.
    pub fn mean_square(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>() / self.data.len() as f64
    }

    /// Per-time-index variance across segments, averaged over time indices.
    pub fn pooled_variance(&self) -> f64 {
        let n = self.grid.n_samples();
        let m = self.n_segments();
        if m < 2 {
            return self.mean_square();
        }
        let mut sum = vec![0.0; n];
        let mut sum_sq = vec![0.0; n];
        for row in self.rows() {
            for ((s, q), x) in sum.iter_mut().zip(sum_sq.iter_mut()).zip(row) {
                *s += x;
                *q += x * x;
            }
        }
        let mf = m as f64;
        let total: f64 = sum
            .iter()
            .zip(&sum_sq)
            .map(|(s, q)| (q - s * s / mf) / (mf - 1.0))
            .sum();
        total / n as f64
    }

    /// Applies an electronic gain and drops the shot-noise calibration, as a
    /// detector would deliver the traces.
    pub fn with_raw_gain(self, gain: f64) -> Self {
        let mut out = self.scaled(gain);
        out.calibrated = false;
        out
    }

    pub(crate) fn scaled(mut self, factor: f64) -> Self {
        self.data.iter_mut().for_each(|x| *x *= factor);
        self
    }
}

/// Unit-norm discrete mode on a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemporalMode {
    grid: SampleGrid,
    weights: Vec<f64>,
}

const MODE_NORM_TOL: f64 = 1e-9;

impl TemporalMode {
    /// Accepts weights that are already normalized to within 1e-9.
    pub fn new(grid: SampleGrid, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != grid.n_samples() {
            return Err(Error::InvalidInput(format!(
                "mode has {} weights, grid expects {}",
                weights.len(),
                grid.n_samples()
            )));
        }
        let norm_sq: f64 = weights.iter().map(|w| w * w).sum();
        if !norm_sq.is_finite() || (norm_sq - 1.0).abs() > MODE_NORM_TOL {
            return Err(Error::InvalidInput(format!(
                "mode is not normalized: sum f^2 = {norm_sq}"
            )));
        }
        Ok(TemporalMode { grid, weights })
    }

    /// Rescales arbitrary non-zero weights to unit norm.
    pub fn normalized(grid: SampleGrid, mut weights: Vec<f64>) -> Result<Self> {
        let norm = weights.iter().map(|w| w * w).sum::<f64>().sqrt();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(Error::InvalidInput("cannot normalize a zero mode".into()));
        }
        weights.iter_mut().for_each(|w| *w /= norm);
        Self::new(grid, weights)
    }

    /// Samples a continuous profile `f(t)` on the grid and normalizes.
    pub fn from_fn(grid: SampleGrid, f: impl Fn(f64) -> f64) -> Result<Self> {
        let w = grid.times().map(|t| f(t) * grid.dt().sqrt()).collect();
        Self::normalized(grid, w)
    }

    pub fn grid(&self) -> &SampleGrid {
        &self.grid
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Continuous-time profile value `f(t_i) = f_i / sqrt(dt)`.
    pub fn profile(&self) -> Vec<f64> {
        let s = self.grid.dt().sqrt();
        self.weights.iter().map(|w| w / s).collect()
    }

    pub fn dot(&self, other: &TemporalMode) -> Result<f64> {
        self.grid
            .ensure_matches(&other.grid, "mode inner product")?;
        Ok(dot(&self.weights, &other.weights))
    }

    pub fn negated(&self) -> TemporalMode {
        TemporalMode {
            grid: self.grid,
            weights: self.weights.iter().map(|w| -w).collect(),
        }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Rescales `raw` by the single factor `g` that brings the pooled per-sample
/// variance of `vacuum_reference` to 1.
pub fn calibrate_shot_noise(raw: SegmentSet, vacuum_reference: &SegmentSet) -> Result<SegmentSet> {
    raw.grid()
        .ensure_matches(vacuum_reference.grid(), "vacuum reference")?;
    if vacuum_reference.n_segments() < 100 {
        return Err(Error::InvalidInput(format!(
            "vacuum reference needs at least 100 segments, got {}",
            vacuum_reference.n_segments()
        )));
    }
    let var = vacuum_reference.pooled_variance();
    if !(var.is_finite() && var > 0.0) {
        return Err(Error::DegenerateReference(var));
    }
    let g = var.sqrt().recip();
    let mut out = raw.scaled(g);
    out.calibrated = true;
    Ok(out)
}

/// Quadrature outcome `x_f = sum_i f_i x_i` of one segment in one mode.
pub fn project(segment: &QuadratureSegment, mode: &TemporalMode) -> Result<f64> {
    segment.grid().ensure_matches(mode.grid(), "projection")?;
    Ok(dot(segment.samples(), mode.weights()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;
    use rand_distr::{Distribution, StandardNormal};

    fn grid(n: usize) -> SampleGrid {
        SampleGrid::new(1e-9, n, 0.0).unwrap()
    }

    fn gaussian_set(n: usize, m: usize, sigma: f64, seed: u64) -> SegmentSet {
        let mut rng = substream(seed, 0);
        let data = (0..n * m)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                sigma * z
            })
            .collect::<Vec<f64>>();
        SegmentSet::from_flat(grid(n), data, None, false).unwrap()
    }

    #[test]
    fn grid_validation() {
        assert!(SampleGrid::new(0.0, 10, 0.0).is_err());
        assert!(SampleGrid::new(1.0, 1, 0.0).is_err());
        assert!(SampleGrid::new(f64::NAN, 10, 0.0).is_err());
        let g = SampleGrid::centered(0.5, 5).unwrap();
        assert_eq!(g.time(2), 0.0);
        assert_eq!(g.duration(), 2.0);
    }

    #[test]
    fn paper_window_shape() {
        let g = SampleGrid::paper_window();
        assert_eq!(g.n_samples(), 1000);
        assert!((g.duration() - 199.8e-9).abs() < 1e-15);
    }

    #[test]
    fn segment_rejects_bad_samples() {
        assert!(QuadratureSegment::new(grid(3), vec![1.0, 2.0], None).is_err());
        assert!(QuadratureSegment::new(grid(2), vec![1.0, f64::INFINITY], None).is_err());
    }

    #[test]
    fn calibration_with_variance_four_halves_samples() {
        let vac = gaussian_set(4, 200, 1.0, 5);
        let vac = vac.clone().scaled((4.0 / vac.pooled_variance()).sqrt());
        assert!((vac.pooled_variance() - 4.0).abs() < 1e-12);
        let raw = SegmentSet::from_flat(grid(4), vec![2.0; 4], None, false).unwrap();
        let cal = calibrate_shot_noise(raw, &vac).unwrap();
        assert!(cal.is_calibrated());
        for x in cal.flat() {
            assert!((x - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn calibration_identity_for_unit_reference() {
        let vac = gaussian_set(8, 500, 1.0, 3);
        let var = vac.pooled_variance();
        let vac = vac.scaled(var.sqrt().recip());
        let raw = SegmentSet::from_flat(grid(8), vec![0.3; 8], None, false).unwrap();
        let cal = calibrate_shot_noise(raw, &vac).unwrap();
        for x in cal.flat() {
            assert!((x - 0.3).abs() < 1e-12);
        }
    }

    #[test]
    fn calibration_recovers_gain() {
        let vac = gaussian_set(100, 10_000, 2.5f64.sqrt(), 11);
        let raw = SegmentSet::from_flat(grid(100), vec![1.0; 100], None, false).unwrap();
        let cal = calibrate_shot_noise(raw, &vac).unwrap();
        let g = cal.flat()[0];
        let expected = 1.0 / 2.5f64.sqrt();
        assert!((g / expected - 1.0).abs() < 0.02, "g = {g}");
    }

    #[test]
    fn calibration_errors() {
        let vac = gaussian_set(8, 50, 1.0, 1);
        let raw = gaussian_set(8, 2, 1.0, 2);
        assert!(calibrate_shot_noise(raw.clone(), &vac).is_err());
        let zero = SegmentSet::from_flat(grid(8), vec![0.0; 8 * 200], None, false).unwrap();
        assert!(matches!(
            calibrate_shot_noise(raw.clone(), &zero),
            Err(Error::DegenerateReference(_))
        ));
        let other = gaussian_set(9, 200, 1.0, 4);
        assert!(matches!(
            calibrate_shot_noise(raw, &other),
            Err(Error::GridMismatch(_))
        ));
    }

    #[test]
    fn projection_of_mode_on_itself_is_one() {
        let g = grid(16);
        let mode = TemporalMode::from_fn(g, |t| (t * 1e8).sin() + 0.5).unwrap();
        let seg = QuadratureSegment::new(g, mode.weights().to_vec(), None).unwrap();
        assert!((project(&seg, &mode).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn projection_orthogonal_is_zero() {
        let g = grid(4);
        let mode = TemporalMode::new(g, vec![0.5, 0.5, 0.5, 0.5]).unwrap();
        let seg = QuadratureSegment::new(g, vec![1.0, -1.0, 2.0, -2.0], None).unwrap();
        assert_eq!(project(&seg, &mode).unwrap(), 0.0);
    }

    #[test]
    fn vacuum_projection_has_unit_variance() {
        let n = 32;
        let m = 20_000;
        let set = gaussian_set(n, m, 1.0, 99);
        let mode = TemporalMode::from_fn(*set.grid(), |t| (-t * 1e8).exp()).unwrap();
        let xs: Vec<f64> = set.rows().map(|r| dot(r, mode.weights())).collect();
        let var = xs.iter().map(|x| x * x).sum::<f64>() / m as f64;
        let se = (2.0 / m as f64).sqrt();
        assert!((var - 1.0).abs() < 3.0 * se, "var = {var}");
    }

    #[test]
    fn projection_grid_mismatch() {
        let mode = TemporalMode::new(grid(2), vec![1.0, 0.0]).unwrap();
        let seg =
            QuadratureSegment::new(SampleGrid::new(2e-9, 2, 0.0).unwrap(), vec![1.0, 0.0], None)
                .unwrap();
        assert!(project(&seg, &mode).is_err());
    }

    #[test]
    fn mode_requires_unit_norm() {
        assert!(TemporalMode::new(grid(2), vec![1.0, 1.0]).is_err());
        assert!(TemporalMode::normalized(grid(2), vec![0.0, 0.0]).is_err());
    }

    #[test]
    fn from_segments_roundtrip() {
        let g = grid(3);
        let segs = vec![
            QuadratureSegment::new(g, vec![1.0, 2.0, 3.0], Some(0.1)).unwrap(),
            QuadratureSegment::new(g, vec![4.0, 5.0, 6.0], Some(0.2)).unwrap(),
        ];
        let set = SegmentSet::from_segments(segs.clone(), true).unwrap();
        assert_eq!(set.n_segments(), 2);
        assert_eq!(set.segment(1), segs[1]);
        let mixed = vec![
            segs[0].clone(),
            QuadratureSegment::new(g, vec![0.0; 3], None).unwrap(),
        ];
        assert!(SegmentSet::from_segments(mixed, true).is_err());
    }
}
