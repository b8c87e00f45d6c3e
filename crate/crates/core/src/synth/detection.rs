use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{for_each_chunk_mut, ExecPolicy, BLOCK};
use crate::rng::{streams, substream};
use crate::signal::{SampleGrid, SegmentSet};

/// Homodyne detector response.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectionModel {
    /// Single-pole low-pass corner in Hz; `None` (or infinity) is ideal.
    pub lowpass_bandwidth: Option<f64>,
    /// Single-pole AC-coupling corner in Hz; 0 disables it.
    pub highpass_cutoff: f64,
}

impl DetectionModel {
    pub fn ideal() -> Self {
        DetectionModel::default()
    }

    pub fn lowpass(bandwidth: f64) -> Self {
        DetectionModel {
            lowpass_bandwidth: Some(bandwidth),
            highpass_cutoff: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(b) = self.lowpass_bandwidth {
            if b.is_nan() || b <= 0.0 {
                return Err(Error::InvalidInput(format!(
                    "low-pass bandwidth must be positive, got {b}"
                )));
            }
        }
        if !(self.highpass_cutoff.is_finite() && self.highpass_cutoff >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "high-pass cutoff must be non-negative, got {}",
                self.highpass_cutoff
            )));
        }
        Ok(())
    }

    pub fn is_ideal(&self) -> bool {
        self.lowpass_bandwidth.is_none_or(f64::is_infinite) && self.highpass_cutoff == 0.0
    }

    /// Causal impulse response on `grid`, before renormalization.
    fn impulse_response(&self, grid: &SampleGrid) -> Vec<f64> {
        let n = grid.n_samples();
        let dt = grid.dt();
        let mut h = vec![0.0; n];
        h[0] = 1.0;
        if let Some(b) = self.lowpass_bandwidth.filter(|b| b.is_finite()) {
            let alpha = 1.0 - (-2.0 * PI * b * dt).exp();
            let mut y = 0.0;
            for v in h.iter_mut() {
                y += alpha * (*v - y);
                *v = y;
            }
        }
        if self.highpass_cutoff > 0.0 {
            let rc = 1.0 / (2.0 * PI * self.highpass_cutoff);
            let beta = rc / (rc + dt);
            let (mut y, mut prev) = (0.0, 0.0);
            for v in h.iter_mut() {
                y = beta * (y + *v - prev);
                prev = *v;
                *v = y;
            }
        }
        h
    }
}

/// Lower-triangular Toeplitz matrix `D` of the filter chain, scaled so that
/// `tr(D D^T) = n`: white unit noise keeps pooled variance 1.
pub fn detection_matrix(det: &DetectionModel, grid: &SampleGrid) -> Result<DMatrix<f64>> {
    det.validate()?;
    let n = grid.n_samples();
    let h = det.impulse_response(grid);
    let energy: f64 = h
        .iter()
        .enumerate()
        .map(|(k, x)| (n - k) as f64 * x * x)
        .sum();
    if energy <= 0.0 {
        return Err(Error::InvalidInput(
            "filter chain has zero response on this grid".into(),
        ));
    }
    let g = (n as f64 / energy).sqrt();
    Ok(DMatrix::from_fn(n, n, |i, j| {
        if i >= j {
            g * h[i - j]
        } else {
            0.0
        }
    }))
}

/// Passes every segment through herald jitter, the low-pass and the optional
/// high-pass. Jitter shifts a segment by a whole number of samples drawn
/// from `N(0, jitter_rms / dt)`; samples shifted in from outside the window
/// are fresh vacuum.
pub fn apply_detection(
    set: SegmentSet,
    det: &DetectionModel,
    jitter_rms: f64,
    seed: u64,
) -> Result<SegmentSet> {
    apply_detection_with(set, det, jitter_rms, seed, ExecPolicy::default())
}

pub fn apply_detection_with(
    set: SegmentSet,
    det: &DetectionModel,
    jitter_rms: f64,
    seed: u64,
    policy: ExecPolicy,
) -> Result<SegmentSet> {
    if !set.is_calibrated() {
        return Err(Error::Uncalibrated);
    }
    det.validate()?;
    if !(jitter_rms.is_finite() && jitter_rms >= 0.0) {
        return Err(Error::InvalidInput("jitter must be non-negative".into()));
    }
    if det.is_ideal() && jitter_rms == 0.0 {
        return Ok(set);
    }
    let (grid, mut data, phases, calibrated) = set.into_parts();
    let n = grid.n_samples();
    let sigma = jitter_rms / grid.dt();
    let filter = (!det.is_ideal())
        .then(|| detection_matrix(det, &grid))
        .transpose()?;

    for_each_chunk_mut(policy, &mut data, BLOCK * n, |block, chunk| {
        if sigma > 0.0 {
            let mut rng = substream(seed, streams::JITTER + block as u64);
            for row in chunk.chunks_mut(n) {
                let z: f64 = StandardNormal.sample(&mut rng);
                shift_with_fill(row, (sigma * z).round() as i64, &mut rng);
            }
        }
        if let Some(d) = &filter {
            let rows = chunk.len() / n;
            let input = chunk.to_vec();
            // out = X D^T; D is column-major so D^T reads with row stride n.
            // SAFETY: dimensions match the buffers: input/chunk are rows x n
            // row-major, D is n x n column-major.
            unsafe {
                matrixmultiply::dgemm(
                    rows,
                    n,
                    n,
                    1.0,
                    input.as_ptr(),
                    n as isize,
                    1,
                    d.as_ptr(),
                    n as isize,
                    1,
                    0.0,
                    chunk.as_mut_ptr(),
                    n as isize,
                    1,
                );
            }
        }
    });
    SegmentSet::from_flat(grid, data, phases, calibrated)
}

/// `row[i] <- row[i - shift]`, with vacated samples drawn fresh.
fn shift_with_fill(row: &mut [f64], shift: i64, rng: &mut impl rand::Rng) {
    let n = row.len();
    let s = shift.unsigned_abs().min(n as u64) as usize;
    if s == 0 {
        return;
    }
    if shift > 0 {
        row.copy_within(0..n - s, s);
        row[..s]
            .iter_mut()
            .for_each(|x| *x = StandardNormal.sample(rng));
    } else {
        row.copy_within(s..n, 0);
        row[n - s..]
            .iter_mut()
            .for_each(|x| *x = StandardNormal.sample(rng));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::acf::{eigendecompose, estimate_acf, KernelMatrix};
    use crate::analytic;
    use crate::synth::{
        analytic_kernel, sample_gaussian_process, HeraldKind, HeraldScenario, OpoModel,
    };

    const GAMMA: f64 = 60e6;

    fn vacuum(grid: SampleGrid, m: usize, seed: u64) -> SegmentSet {
        let k = KernelMatrix::new(
            grid,
            DMatrix::identity(grid.n_samples(), grid.n_samples()),
            0,
        )
        .unwrap();
        sample_gaussian_process(&k, m, seed).unwrap()
    }

    #[test]
    fn ideal_detection_is_identity() {
        let grid = SampleGrid::centered(1e-9, 30).unwrap();
        let set = vacuum(grid, 50, 1);
        let out = apply_detection(set.clone(), &DetectionModel::ideal(), 0.0, 9).unwrap();
        assert_eq!(out, set);
        let inf = DetectionModel::lowpass(f64::INFINITY);
        assert_eq!(apply_detection(set.clone(), &inf, 0.0, 9).unwrap(), set);
    }

    #[test]
    fn matrix_preserves_white_noise_power() {
        let grid = SampleGrid::centered(0.2e-9, 300).unwrap();
        for det in [
            DetectionModel::lowpass(2.0 * GAMMA),
            DetectionModel {
                lowpass_bandwidth: Some(1e9),
                highpass_cutoff: 5e6,
            },
        ] {
            let d = detection_matrix(&det, &grid).unwrap();
            let tr = (&d * d.transpose()).trace();
            assert!((tr - 300.0).abs() < 1e-9);
            assert_eq!(d[(0, 1)], 0.0);
        }
    }

    #[test]
    fn filtered_vacuum_has_rolloff() {
        let grid = SampleGrid::centered(0.5e-9, 120).unwrap();
        let det = DetectionModel::lowpass(2.0 * GAMMA);
        let out = apply_detection(vacuum(grid, 20_000, 2), &det, 0.0, 0).unwrap();
        let tol = 5.0 * (2.0 / (20_000.0 * 120.0f64)).sqrt() * 10.0;
        assert!((out.pooled_variance() - 1.0).abs() < tol);
        let ev = eigendecompose(&estimate_acf(&out).unwrap()).unwrap();
        let ev = ev.eigenvalues();
        assert!(ev[0] > 2.0);
        assert!(ev[ev.len() / 2..].iter().all(|x| *x < 0.5));
    }

    #[test]
    fn lowpass_smooths_the_cusp() {
        let grid = SampleGrid::centered(0.5e-9, 200).unwrap();
        let scenario = HeraldScenario {
            kind: HeraldKind::SinglePhoton,
            ..HeraldScenario::default()
        };
        let k = analytic_kernel(&OpoModel::new(GAMMA), &scenario, &grid).unwrap();
        let raw = sample_gaussian_process(&k, 20_000, 3).unwrap();
        let out = apply_detection(raw, &DetectionModel::lowpass(2.0 * GAMMA), 0.0, 0).unwrap();
        let d = detection_matrix(&DetectionModel::lowpass(2.0 * GAMMA), &grid).unwrap();
        // expected filtered kernel D K D^T; its top mode should be smoother than phi
        let kf = &d * k.entries() * d.transpose();
        let basis = eigendecompose(&KernelMatrix::new(grid, kf, 0).unwrap()).unwrap();
        let emp = eigendecompose(&estimate_acf(&out).unwrap()).unwrap();
        let peak_curv = |w: &[f64]| {
            let i = w
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .unwrap()
                .0;
            (w[i - 1] + w[i + 1] - 2.0 * w[i]).abs()
        };
        let phi = analytic::phi(GAMMA, &grid).unwrap();
        assert!(peak_curv(basis.mode(0).weights()) < 0.5 * peak_curv(phi.weights()));
        let overlap = analytic::mode_overlap(basis.mode(0), emp.mode(0)).unwrap();
        assert!(overlap > 0.95, "{overlap}");
    }

    #[test]
    fn jitter_shifts_with_fresh_vacuum() {
        let grid = SampleGrid::centered(1e-9, 40).unwrap();
        let set = vacuum(grid, 300, 4);
        let out = apply_detection(set.clone(), &DetectionModel::ideal(), 3e-9, 5).unwrap();
        assert_ne!(out, set);
        // a shifted row reappears inside its original
        let shifted = (0..300).any(|k| {
            let a = set.segment_samples(k);
            let b = out.segment_samples(k);
            (1..10).any(|s| a[..40 - s] == b[s..] || a[s..] == b[..40 - s])
        });
        assert!(shifted);
        let again = apply_detection(set, &DetectionModel::ideal(), 3e-9, 5).unwrap();
        assert_eq!(out, again);
    }

    #[test]
    fn rejects_bad_models() {
        let grid = SampleGrid::centered(1e-9, 10).unwrap();
        assert!(detection_matrix(&DetectionModel::lowpass(0.0), &grid).is_err());
        let raw = SegmentSet::from_flat(grid, vec![0.0; 10], None, false).unwrap();
        assert!(matches!(
            apply_detection(raw, &DetectionModel::ideal(), 0.0, 0),
            Err(Error::Uncalibrated)
        ));
    }
}
