use nalgebra::{Cholesky, DMatrix};
use rand_distr::{Distribution, StandardNormal};

use crate::acf::KernelMatrix;
use crate::error::{Error, Result};
use crate::exec::{for_each_chunk_mut, ExecPolicy, BLOCK};
use crate::rng::{streams, substream};
use crate::signal::SegmentSet;

const JITTER: f64 = 1e-10;

/// Zero-mean Gaussian segments with covariance `kernel`, drawn as `L z` for
/// the Cholesky factor `L` and white `z`. Block `b` of segments uses RNG
/// substream `b`, so output is independent of the worker count.
pub fn sample_gaussian_process(
    kernel: &KernelMatrix,
    n_segments: usize,
    seed: u64,
) -> Result<SegmentSet> {
    sample_gaussian_process_with(kernel, n_segments, seed, ExecPolicy::default())
}

pub fn sample_gaussian_process_with(
    kernel: &KernelMatrix,
    n_segments: usize,
    seed: u64,
    policy: ExecPolicy,
) -> Result<SegmentSet> {
    if n_segments == 0 {
        return Err(Error::InvalidInput("n_segments must be at least 1".into()));
    }
    let n = kernel.grid().n_samples();
    let factor = cholesky_with_jitter(kernel.entries())?;
    // column-major L, so L[(j, l)] sits at j + l n
    let l = factor.as_slice();

    let mut data = vec![0.0; n_segments * n];
    for_each_chunk_mut(policy, &mut data, BLOCK * n, |block, out| {
        let rows = out.len() / n;
        let mut rng = substream(seed, streams::GAUSSIAN_PROCESS + block as u64);
        let z: Vec<f64> = (0..rows * n)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect();
        // out = Z L^T, row-major
        // SAFETY: `z` is rows x n row-major, `l` is n x n column-major read as
        // L^T, `out` is rows x n row-major.
        unsafe {
            matrixmultiply::dgemm(
                rows,
                n,
                n,
                1.0,
                z.as_ptr(),
                n as isize,
                1,
                l.as_ptr(),
                n as isize,
                1,
                0.0,
                out.as_mut_ptr(),
                n as isize,
                1,
            );
        }
    });
    SegmentSet::from_flat(*kernel.grid(), data, None, true)
}

fn cholesky_with_jitter(k: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if let Some(c) = Cholesky::new(k.clone()) {
        return Ok(c.unpack());
    }
    let n = k.nrows();
    let jittered = k + DMatrix::<f64>::identity(n, n) * JITTER;
    Cholesky::new(jittered).map(|c| c.unpack()).ok_or_else(|| {
        Error::NotPositiveSemidefinite(format!(
            "Cholesky failed even with {JITTER:e} diagonal jitter"
        ))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::acf::estimate_acf;
    use crate::signal::SampleGrid;
    use crate::synth::{analytic_kernel, HeraldKind, HeraldScenario, OpoModel};

    fn single_photon(grid: &SampleGrid) -> KernelMatrix {
        let scenario = HeraldScenario {
            kind: HeraldKind::SinglePhoton,
            ..HeraldScenario::default()
        };
        analytic_kernel(&OpoModel::new(60e6), &scenario, grid).unwrap()
    }

    #[test]
    fn white_noise_has_unit_variance() {
        let grid = SampleGrid::centered(1e-9, 50).unwrap();
        let k = KernelMatrix::new(grid, DMatrix::identity(50, 50), 0).unwrap();
        let m = 10_000;
        let set = sample_gaussian_process(&k, m, 4).unwrap();
        let var = set.mean_square();
        let tol = 3.0 * (2.0 / (m as f64 * 50.0)).sqrt();
        assert!((var - 1.0).abs() < tol, "{var}");
        assert!(set.is_calibrated());
    }

    #[test]
    fn deterministic_for_seed_and_policy() {
        let grid = SampleGrid::centered(1e-9, 40).unwrap();
        let k = single_photon(&grid);
        let a = sample_gaussian_process_with(&k, 700, 9, ExecPolicy::Sequential).unwrap();
        let b = sample_gaussian_process_with(&k, 700, 9, ExecPolicy::Parallel).unwrap();
        let c = sample_gaussian_process(&k, 700, 10).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn empirical_acf_converges_like_inverse_sqrt_n() {
        let grid = SampleGrid::centered(1e-9, 60).unwrap();
        let k = single_photon(&grid);
        let err = |m: usize| {
            let set = sample_gaussian_process(&k, m, 21).unwrap();
            estimate_acf(&set).unwrap().max_abs_diff(&k)
        };
        let (e1, e2) = (err(2_000), err(32_000));
        // sqrt(16) = 4x smaller in expectation; allow generous slack
        assert!(e2 < e1 / 2.0, "{e1} -> {e2}");
        // entry variance <= K_ii K_jj + K_ij^2 <= 2 max(K)^2
        let kmax = k.entries().amax();
        assert!(e2 < 5.0 * kmax * (2.0 / 32_000.0f64).sqrt(), "{e2}");
    }

    #[test]
    fn rejects_indefinite_kernels() {
        let grid = SampleGrid::centered(1.0, 3).unwrap();
        let mut m = DMatrix::identity(3, 3);
        m[(0, 0)] = -1.0;
        let k = KernelMatrix::new(grid, m, 0).unwrap();
        assert!(matches!(
            sample_gaussian_process(&k, 10, 0),
            Err(Error::NotPositiveSemidefinite(_))
        ));
        let zero = KernelMatrix::new(grid, DMatrix::zeros(3, 3), 0).unwrap();
        // zero kernel is PSD; jitter rescues the factorization
        assert!(sample_gaussian_process(&zero, 10, 0).is_ok());
        assert!(sample_gaussian_process(&zero, 0, 0).is_err());
    }
}
