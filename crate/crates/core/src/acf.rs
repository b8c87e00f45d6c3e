//! Autocorrelation kernel estimation and its eigen-expansion.
//!
//! `K_ij = <x(t_i) x(t_j)>` over the ensemble is a symmetric positive matrix;
//! its eigenvectors are mutually uncorrelated temporal modes and the
//! eigenvector with the largest eigenvalue maximizes the quadrature variance.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::analytic;
use crate::error::{Error, Result};
use crate::exec::{map_blocks, ExecPolicy};
use crate::signal::{SampleGrid, SegmentSet, TemporalMode};
use crate::synth::{self, HeraldKind, HeraldScenario, OpoModel};

/// Sampled autocorrelation kernel in shot-noise units.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix {
    grid: SampleGrid,
    entries: DMatrix<f64>,
    n_segments_used: usize,
}

impl KernelMatrix {
    /// Symmetrizes `entries` as `(K + K^T) / 2`. `n_segments_used` is 0 for
    /// analytic kernels.
    pub fn new(grid: SampleGrid, entries: DMatrix<f64>, n_segments_used: usize) -> Result<Self> {
        let n = grid.n_samples();
        if entries.nrows() != n || entries.ncols() != n {
            return Err(Error::InvalidInput(format!(
                "kernel is {}x{}, grid has {n} samples",
                entries.nrows(),
                entries.ncols()
            )));
        }
        if entries.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput("kernel has non-finite entries".into()));
        }
        let entries = (&entries + entries.transpose()) * 0.5;
        Ok(KernelMatrix {
            grid,
            entries,
            n_segments_used,
        })
    }

    pub fn grid(&self) -> &SampleGrid {
        &self.grid
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn n_segments_used(&self) -> usize {
        self.n_segments_used
    }

    pub fn trace(&self) -> f64 {
        self.entries.trace()
    }

    /// Variance `f^T K f` of the quadrature in mode `f`.
    pub fn quadratic_form(&self, mode: &TemporalMode) -> Result<f64> {
        self.grid.ensure_matches(mode.grid(), "quadratic form")?;
        let f = nalgebra::DVector::from_column_slice(mode.weights());
        Ok((f.transpose() * &self.entries * &f)[(0, 0)])
    }

    pub fn max_abs_diff(&self, other: &KernelMatrix) -> f64 {
        (&self.entries - &other.entries).amax()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct AcfOptions {
    /// Subtract the ensemble mean before correlating.
    pub subtract_mean: bool,
}

/// Segments per gemm block.
const ACF_BLOCK: usize = 1024;
/// Blocks reduced together; bounds the number of live partial kernels.
const ACF_GROUP: usize = 8;

/// Ensemble autocorrelation `K = (1/N) sum_n x_n x_n^T`.
pub fn estimate_acf(set: &SegmentSet) -> Result<KernelMatrix> {
    estimate_acf_with(set, AcfOptions::default(), ExecPolicy::default())
}

pub fn estimate_acf_with(
    set: &SegmentSet,
    options: AcfOptions,
    policy: ExecPolicy,
) -> Result<KernelMatrix> {
    if !set.is_calibrated() {
        return Err(Error::Uncalibrated);
    }
    let m = set.n_segments();
    if m < 2 {
        return Err(Error::InvalidInput(format!(
            "need at least 2 segments for an ACF, got {m}"
        )));
    }
    let n = set.grid().n_samples();
    let data = set.flat();
    let n_blocks = m.div_ceil(ACF_BLOCK);

    let mut total = vec![0.0; n * n];
    for group in (0..n_blocks).step_by(ACF_GROUP) {
        let last = (group + ACF_GROUP).min(n_blocks);
        let partials = map_blocks(policy, last - group, |b| {
            let block = group + b;
            let lo = block * ACF_BLOCK;
            let hi = ((block + 1) * ACF_BLOCK).min(m);
            gram_rows(&data[lo * n..hi * n], hi - lo, n)
        });
        for p in partials {
            total.iter_mut().zip(&p).for_each(|(t, x)| *t += x);
        }
    }

    let inv = 1.0 / m as f64;
    let mut k = DMatrix::from_row_slice(n, n, &total) * inv;
    if options.subtract_mean {
        let mut mean = vec![0.0; n];
        for row in set.rows() {
            mean.iter_mut().zip(row).for_each(|(a, x)| *a += x);
        }
        let mean = nalgebra::DVector::from_iterator(n, mean.into_iter().map(|s| s * inv));
        k -= &mean * mean.transpose();
    }
    KernelMatrix::new(*set.grid(), k, m)
}

/// `A^T A` for a row-major `rows x n` block, returned row-major.
fn gram_rows(a: &[f64], rows: usize, n: usize) -> Vec<f64> {
    let mut c = vec![0.0; n * n];
    // SAFETY: strides describe `a` (rows x n, row-major) read as its
    // transpose and `c` (n x n, row-major); both slices are large enough.
    unsafe {
        matrixmultiply::dgemm(
            n,
            rows,
            n,
            1.0,
            a.as_ptr(),
            1,
            n as isize,
            a.as_ptr(),
            n as isize,
            1,
            0.0,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
    c
}

/// Eigenvalues in descending order with their orthonormal modes.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeBasis {
    grid: SampleGrid,
    eigenvalues: Vec<f64>,
    modes: Vec<TemporalMode>,
    n_segments_used: usize,
}

impl ModeBasis {
    pub fn from_parts(
        grid: SampleGrid,
        eigenvalues: Vec<f64>,
        modes: Vec<TemporalMode>,
        n_segments_used: usize,
    ) -> Result<Self> {
        if eigenvalues.len() != modes.len() {
            return Err(Error::InvalidInput(
                "eigenvalue and mode counts differ".into(),
            ));
        }
        if eigenvalues.windows(2).any(|w| w[0] < w[1]) {
            return Err(Error::InvalidInput("eigenvalues not descending".into()));
        }
        for m in &modes {
            grid.ensure_matches(m.grid(), "mode basis")?;
        }
        Ok(ModeBasis {
            grid,
            eigenvalues,
            modes,
            n_segments_used,
        })
    }

    pub fn grid(&self) -> &SampleGrid {
        &self.grid
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn modes(&self) -> &[TemporalMode] {
        &self.modes
    }

    pub fn mode(&self, k: usize) -> &TemporalMode {
        &self.modes[k]
    }

    pub fn n_segments_used(&self) -> usize {
        self.n_segments_used
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// `sum_k kappa_k f_k f_k^T`.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let n = self.grid.n_samples();
        let f = DMatrix::from_fn(n, self.len(), |i, k| self.modes[k].weights()[i]);
        let scaled = DMatrix::from_fn(n, self.len(), |i, k| f[(i, k)] * self.eigenvalues[k]);
        scaled * f.transpose()
    }

    /// `true` at index `k` when `kappa_k` and `kappa_(k+1)` are closer than
    /// their combined standard error; such pairs span a subspace whose basis
    /// is not unique.
    pub fn degeneracy_flags(&self) -> Vec<bool> {
        let rel = if self.n_segments_used > 0 {
            (2.0 / self.n_segments_used as f64).sqrt()
        } else {
            1e-9
        };
        self.eigenvalues
            .windows(2)
            .map(|w| (w[0] - w[1]).abs() < rel * (w[0].abs() + w[1].abs()))
            .collect()
    }
}

/// Full dense symmetric eigendecomposition. Each eigenvector is signed so its
/// largest-magnitude entry is positive.
pub fn eigendecompose(kernel: &KernelMatrix) -> Result<ModeBasis> {
    let k = kernel.entries();
    if k.iter().any(|x| !x.is_finite()) {
        return Err(Error::Eigensolver("kernel has non-finite entries".into()));
    }
    let eig = k.clone().symmetric_eigen();
    if eig.eigenvalues.iter().any(|x| !x.is_finite()) {
        return Err(Error::Eigensolver("non-finite eigenvalue".into()));
    }
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    // stable: ties keep solver order
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

    let grid = *kernel.grid();
    let mut eigenvalues = Vec::with_capacity(order.len());
    let mut modes = Vec::with_capacity(order.len());
    for idx in order {
        let col = eig.eigenvectors.column(idx);
        let mut w: Vec<f64> = col.iter().copied().collect();
        let pivot = w
            .iter()
            .copied()
            .max_by(|a, b| a.abs().total_cmp(&b.abs()))
            .unwrap_or(0.0);
        if pivot < 0.0 {
            w.iter_mut().for_each(|x| *x = -*x);
        }
        eigenvalues.push(eig.eigenvalues[idx]);
        modes.push(TemporalMode::normalized(grid, w)?);
    }
    ModeBasis::from_parts(grid, eigenvalues, modes, kernel.n_segments_used())
}

pub const DEFAULT_Z_THRESHOLD: f64 = 5.0;

/// Per-index comparison of a state's spectrum with a vacuum baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeSignificance {
    pub baseline: Vec<f64>,
    pub baseline_se: Vec<f64>,
    pub z_scores: Vec<f64>,
    pub z_threshold: f64,
    pub n_significant: usize,
}

impl ModeSignificance {
    pub fn significant_indices(&self) -> Vec<usize> {
        self.z_scores
            .iter()
            .enumerate()
            .filter(|(_, z)| **z > self.z_threshold)
            .map(|(k, _)| k)
            .collect()
    }
}

fn rel_se(n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        (2.0 / n as f64).sqrt()
    }
}

/// `z_k = (kappa_k - kappa_k^vac) / se` with
/// `se = kappa_k^vac sqrt(2/N_vac) + kappa_k sqrt(2/N_state)`.
pub fn mode_significance(
    state: &ModeBasis,
    vacuum: &ModeBasis,
    z_threshold: f64,
) -> Result<ModeSignificance> {
    state
        .grid()
        .ensure_matches(vacuum.grid(), "significance baseline")?;
    let rv = rel_se(vacuum.n_segments_used());
    let rs = rel_se(state.n_segments_used());
    let mut baseline_se = Vec::with_capacity(state.len());
    let mut z_scores = Vec::with_capacity(state.len());
    for (k, v) in state.eigenvalues().iter().zip(vacuum.eigenvalues()) {
        let se = (v.abs() * rv + k.abs() * rs).max(1e-12);
        baseline_se.push(v.abs() * rv);
        z_scores.push((k - v) / se);
    }
    let n_significant = z_scores.iter().filter(|z| **z > z_threshold).count();
    Ok(ModeSignificance {
        baseline: vacuum.eigenvalues().to_vec(),
        baseline_se,
        z_scores,
        z_threshold,
        n_significant,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub delta_t: f64,
    pub kappa0: f64,
    pub kappa1: f64,
    /// Analytic `kappa+-` for reference.
    pub predicted_plus: f64,
    pub predicted_minus: f64,
}

pub enum SweepSource<'a> {
    /// Eigendecompose the analytic two-herald kernel on this grid.
    Analytic(SampleGrid),
    /// One measured or synthesized ensemble per delay, in order.
    Measured(&'a [SegmentSet]),
}

/// Top two eigenvalues as a function of the herald delay.
pub fn eigenvalue_delay_sweep(
    model: &OpoModel,
    delays: &[f64],
    source: SweepSource<'_>,
) -> Result<Vec<SweepRow>> {
    if let Some(d) = delays.iter().find(|d| !(d.is_finite() && **d >= 0.0)) {
        return Err(Error::InvalidInput(format!("negative delay {d}")));
    }
    if let SweepSource::Measured(sets) = &source {
        if sets.len() != delays.len() {
            return Err(Error::InvalidInput(format!(
                "{} ensembles for {} delays",
                sets.len(),
                delays.len()
            )));
        }
    }
    let mut rows = Vec::with_capacity(delays.len());
    for (i, &delta_t) in delays.iter().enumerate() {
        let basis = match &source {
            SweepSource::Analytic(grid) => {
                let scenario = HeraldScenario {
                    kind: HeraldKind::TwoPhoton,
                    delta_t,
                    ..HeraldScenario::default()
                };
                eigendecompose(&synth::analytic_kernel(model, &scenario, grid)?)?
            }
            SweepSource::Measured(sets) => eigendecompose(&estimate_acf(&sets[i])?)?,
        };
        let (pp, pm) = analytic::predicted_kappas(model.gamma, delta_t)?;
        rows.push(SweepRow {
            delta_t,
            kappa0: basis.eigenvalues()[0],
            kappa1: basis.eigenvalues()[1],
            predicted_plus: pp,
            predicted_minus: pm,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::{mode_overlap, phi, psi_pm};
    use crate::rng::substream;
    use rand_distr::{Distribution, StandardNormal};

    const GAMMA: f64 = 60e6;

    fn white(grid: SampleGrid, m: usize, seed: u64) -> SegmentSet {
        let mut rng = substream(seed, 0);
        let data = (0..m * grid.n_samples())
            .map(|_| StandardNormal.sample(&mut rng))
            .collect();
        SegmentSet::from_flat(grid, data, None, true).unwrap()
    }

    fn single_photon_kernel(grid: &SampleGrid) -> KernelMatrix {
        let model = OpoModel::new(GAMMA);
        let scenario = HeraldScenario {
            kind: HeraldKind::SinglePhoton,
            ..HeraldScenario::default()
        };
        synth::analytic_kernel(&model, &scenario, grid).unwrap()
    }

    #[test]
    fn identical_copies_give_outer_product() {
        let grid = SampleGrid::new(1.0, 5, 0.0).unwrap();
        let s = [0.5, -1.0, 2.0, 0.0, 3.0];
        let data: Vec<f64> = (0..7).flat_map(|_| s).collect();
        let set = SegmentSet::from_flat(grid, data, None, true).unwrap();
        let k = estimate_acf(&set).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                assert!((k.entries()[(i, j)] - s[i] * s[j]).abs() < 1e-14);
            }
        }
        assert_eq!(k.n_segments_used(), 7);
    }

    #[test]
    fn acf_refuses_uncalibrated_or_tiny_sets() {
        let grid = SampleGrid::new(1.0, 3, 0.0).unwrap();
        let raw = SegmentSet::from_flat(grid, vec![1.0; 6], None, false).unwrap();
        assert!(matches!(estimate_acf(&raw), Err(Error::Uncalibrated)));
        let one = SegmentSet::from_flat(grid, vec![1.0; 3], None, true).unwrap();
        assert!(estimate_acf(&one).is_err());
    }

    #[test]
    fn acf_vacuum_approaches_identity() {
        let grid = SampleGrid::new(1.0, 20, 0.0).unwrap();
        let m = 40_000;
        let k = estimate_acf(&white(grid, m, 1)).unwrap();
        let eye = DMatrix::<f64>::identity(20, 20);
        let dev = (k.entries() - eye).amax();
        // entry standard error is at most sqrt(2/m)
        assert!(dev < 5.0 * (2.0 / m as f64).sqrt(), "{dev}");
    }

    #[test]
    fn acf_policies_agree_bitwise() {
        let grid = SampleGrid::new(1.0, 30, 0.0).unwrap();
        let set = white(grid, 5000, 2);
        let a = estimate_acf_with(&set, AcfOptions::default(), ExecPolicy::Sequential).unwrap();
        let b = estimate_acf_with(&set, AcfOptions::default(), ExecPolicy::Parallel).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn mean_subtraction_removes_dc_offset() {
        let grid = SampleGrid::new(1.0, 4, 0.0).unwrap();
        let mut data = Vec::new();
        for k in 0..1000 {
            let s = if k % 2 == 0 { 1.0 } else { -1.0 };
            data.extend([3.0 + s, 3.0 - s, 3.0 + s, 3.0]);
        }
        let set = SegmentSet::from_flat(grid, data, None, true).unwrap();
        let opts = AcfOptions {
            subtract_mean: true,
        };
        let k = estimate_acf_with(&set, opts, ExecPolicy::Sequential).unwrap();
        let want = [
            [1.0, -1.0, 1.0, 0.0],
            [-1.0, 1.0, -1.0, 0.0],
            [1.0, -1.0, 1.0, 0.0],
            [0.0; 4],
        ];
        for i in 0..4 {
            for j in 0..4 {
                assert!((k.entries()[(i, j)] - want[i][j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn identity_kernel_spectrum() {
        let grid = SampleGrid::new(1.0, 12, 0.0).unwrap();
        let k = KernelMatrix::new(grid, DMatrix::identity(12, 12), 0).unwrap();
        let b = eigendecompose(&k).unwrap();
        assert!(b.eigenvalues().iter().all(|x| (x - 1.0).abs() < 1e-12));
        assert!(b.degeneracy_flags().iter().all(|d| *d));
    }

    #[test]
    fn single_photon_kernel_recovers_phi() {
        let grid = SampleGrid::paper_window();
        let k = single_photon_kernel(&grid);
        let b = eigendecompose(&k).unwrap();
        assert!((b.eigenvalues()[0] - 3.0).abs() < 1e-9);
        assert!((b.eigenvalues()[1] - 1.0).abs() < 1e-9);
        assert!((b.eigenvalues()[999] - 1.0).abs() < 1e-9);
        let ov = mode_overlap(b.mode(0), &phi(GAMMA, &grid).unwrap()).unwrap();
        assert!(ov >= 1.0 - 1e-9, "{ov}");
        // sign convention: peak of a positive bump is positive
        assert!(b.mode(0).weights()[500] > 0.0);
    }

    #[test]
    fn two_photon_kernel_recovers_psi_pm() {
        let grid = SampleGrid::paper_window();
        let model = OpoModel::new(GAMMA);
        let scenario = HeraldScenario {
            kind: HeraldKind::TwoPhoton,
            delta_t: 20e-9,
            ..HeraldScenario::default()
        };
        let k = synth::analytic_kernel(&model, &scenario, &grid).unwrap();
        let b = eigendecompose(&k).unwrap();
        let (p, m) = psi_pm(GAMMA, 20e-9, &grid).unwrap();
        assert!(mode_overlap(b.mode(0), &p).unwrap() >= 1.0 - 1e-6);
        assert!(mode_overlap(b.mode(1), &m.unwrap()).unwrap() >= 1.0 - 1e-6);
    }

    #[test]
    fn basis_reconstructs_kernel_and_is_complete() {
        let grid = SampleGrid::new(1e-9, 60, -30e-9).unwrap();
        let set = white(grid, 500, 5);
        let k = estimate_acf(&set).unwrap();
        let b = eigendecompose(&k).unwrap();
        assert!((b.reconstruct() - k.entries()).amax() < 1e-10);
        let ones = ModeBasis::from_parts(grid, vec![1.0; 60], b.modes().to_vec(), 0).unwrap();
        assert!((ones.reconstruct() - DMatrix::<f64>::identity(60, 60)).amax() < 1e-10);
        let trace: f64 = b.eigenvalues().iter().sum();
        assert!((trace - k.trace()).abs() < 1e-9 * k.trace());
    }

    #[test]
    fn vacuum_vs_vacuum_has_no_significant_modes() {
        let grid = SampleGrid::new(1e-9, 50, 0.0).unwrap();
        let a = eigendecompose(&estimate_acf(&white(grid, 5000, 7)).unwrap()).unwrap();
        let b = eigendecompose(&estimate_acf(&white(grid, 5000, 8)).unwrap()).unwrap();
        let s = mode_significance(&a, &b, DEFAULT_Z_THRESHOLD).unwrap();
        assert_eq!(s.n_significant, 0);
    }

    #[test]
    fn significance_formula() {
        let grid = SampleGrid::new(1.0, 2, 0.0).unwrap();
        let modes = vec![
            TemporalMode::new(grid, vec![1.0, 0.0]).unwrap(),
            TemporalMode::new(grid, vec![0.0, 1.0]).unwrap(),
        ];
        let state = ModeBasis::from_parts(grid, vec![3.0, 1.0], modes.clone(), 200).unwrap();
        let vac = ModeBasis::from_parts(grid, vec![1.0, 1.0], modes, 800).unwrap();
        let s = mode_significance(&state, &vac, 5.0).unwrap();
        let se = 1.0 * (2.0f64 / 800.0).sqrt() + 3.0 * (2.0f64 / 200.0).sqrt();
        assert!((s.z_scores[0] - 2.0 / se).abs() < 1e-12);
        assert_eq!(s.z_scores[1], 0.0);
        assert_eq!(s.n_significant, 1);
        assert_eq!(s.significant_indices(), vec![0]);
    }

    #[test]
    fn analytic_sweep_limits() {
        let grid = SampleGrid::paper_window();
        let model = OpoModel::new(GAMMA);
        let rows =
            eigenvalue_delay_sweep(&model, &[0.0, 90e-9], SweepSource::Analytic(grid)).unwrap();
        assert!((rows[0].kappa0 - 5.0).abs() < 1e-9);
        assert!((rows[0].kappa1 - 1.0).abs() < 1e-9);
        // far-separated heralds: two independent photons
        assert!((rows[1].kappa0 - 3.0).abs() < 1e-3);
        assert!((rows[1].kappa1 - 3.0).abs() < 1e-3);
        assert!(eigenvalue_delay_sweep(&model, &[-1.0], SweepSource::Analytic(grid)).is_err());
    }

    #[test]
    fn sweep_at_half_overlap() {
        // s(x) = e^-x (1 + x) = 0.5 at x = 1.678346990...
        let x = 1.678_346_990_016_661_f64;
        let delta_t = x / (std::f64::consts::PI * GAMMA);
        let s = analytic::herald_overlap_s(GAMMA, delta_t).unwrap();
        assert!((s - 0.5).abs() < 1e-12);
        let (p, m) = analytic::predicted_kappas(GAMMA, delta_t).unwrap();
        assert!((p - 4.0).abs() < 1e-11 && (m - 2.0).abs() < 1e-11);
    }
}
