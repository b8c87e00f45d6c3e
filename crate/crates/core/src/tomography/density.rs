use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fock::{binomial_pmf, MAX_CUTOFF};

const HERMITIAN_TOL: f64 = 1e-12;
const TRACE_TOL: f64 = 1e-10;
const PSD_TOL: f64 = 1e-9;
/// Entries of a loss-corrected distribution below `-NEGATIVE_TOL` mark the
/// correction as ill-conditioned.
const NEGATIVE_TOL: f64 = 1e-3;

/// Hermitian, unit-trace, positive semidefinite Fock-basis density matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    entries: DMatrix<Complex64>,
}

impl DensityMatrix {
    pub fn new(entries: DMatrix<Complex64>) -> Result<Self> {
        let dim = entries.nrows();
        if dim == 0 || entries.ncols() != dim {
            return Err(Error::InvalidInput("density matrix must be square".into()));
        }
        if dim > MAX_CUTOFF + 1 {
            return Err(Error::CutoffOverflow {
                requested: dim - 1,
                max: MAX_CUTOFF,
            });
        }
        if entries
            .iter()
            .any(|z| !(z.re.is_finite() && z.im.is_finite()))
        {
            return Err(Error::InvalidInput(
                "non-finite density matrix entry".into(),
            ));
        }
        let herm = (&entries - entries.adjoint())
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max);
        if herm > HERMITIAN_TOL {
            return Err(Error::InvalidInput(format!(
                "not Hermitian (deviation {herm:e})"
            )));
        }
        let tr = entries.trace();
        if (tr.re - 1.0).abs() > TRACE_TOL || tr.im.abs() > TRACE_TOL {
            return Err(Error::InvalidInput(format!("trace {tr} differs from 1")));
        }
        let min = entries
            .clone()
            .symmetric_eigenvalues()
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        if min < -PSD_TOL {
            return Err(Error::NotPositiveSemidefinite(format!(
                "density matrix eigenvalue {min:e}"
            )));
        }
        Ok(DensityMatrix { entries })
    }

    /// Hermitian part rescaled to unit trace, without the PSD check.
    pub(crate) fn project(m: DMatrix<Complex64>) -> Self {
        let h = (&m + m.adjoint()) * Complex64::new(0.5, 0.0);
        let tr = h.trace().re;
        DensityMatrix {
            entries: h / Complex64::new(tr, 0.0),
        }
    }

    pub fn fock(n: usize, dim: usize) -> Result<Self> {
        if n >= dim {
            return Err(Error::InvalidInput(format!(
                "|{n}> outside dimension {dim}"
            )));
        }
        let mut p = vec![0.0; dim];
        p[n] = 1.0;
        Self::diagonal(&p)
    }

    /// Phase-symmetric state with the given photon-number populations.
    pub fn diagonal(populations: &[f64]) -> Result<Self> {
        let dim = populations.len();
        Self::new(DMatrix::from_fn(dim, dim, |i, j| {
            if i == j {
                Complex64::new(populations[i], 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        }))
    }

    /// `|c><c|` for a real coefficient vector of unit norm.
    pub fn pure(coefficients: &[f64]) -> Result<Self> {
        let dim = coefficients.len();
        Self::new(DMatrix::from_fn(dim, dim, |i, j| {
            Complex64::new(coefficients[i] * coefficients[j], 0.0)
        }))
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn cutoff(&self) -> usize {
        self.dim() - 1
    }

    pub fn entries(&self) -> &DMatrix<Complex64> {
        &self.entries
    }

    pub fn element(&self, m: usize, n: usize) -> Complex64 {
        self.entries[(m, n)]
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.entries
            .clone()
            .symmetric_eigenvalues()
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    pub fn purity(&self) -> f64 {
        (&self.entries * &self.entries).trace().re
    }

    /// Mean photon number.
    pub fn mean_photon_number(&self) -> f64 {
        (0..self.dim())
            .map(|n| n as f64 * self.entries[(n, n)].re)
            .sum()
    }
}

/// `diag(rho)` as a probability vector.
pub fn photon_distribution(rho: &DensityMatrix) -> Vec<f64> {
    let p: Vec<f64> = (0..rho.dim())
        .map(|n| rho.entries[(n, n)].re.max(0.0))
        .collect();
    let total: f64 = p.iter().sum();
    p.into_iter().map(|x| x / total).collect()
}

/// Photon-number distribution before a loss channel of known efficiency.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LossCorrection {
    /// `L(eta)^-1 p`, always reported.
    pub exact: Vec<f64>,
    /// Set when some exact entry falls below `-1e-3`.
    pub ill_conditioned: bool,
    /// Negative entries clipped to zero and renormalized; only present when
    /// the correction is ill-conditioned.
    pub clipped: Option<Vec<f64>>,
}

/// Inverts the binomial loss map on a photon-number distribution.
pub fn loss_correct_diagonal(p: &[f64], eta: f64) -> Result<LossCorrection> {
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(Error::InvalidInput(format!(
            "efficiency must lie in (0, 1], got {eta}"
        )));
    }
    if p.is_empty() || p.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidInput("invalid photon distribution".into()));
    }
    // L is upper triangular (k survivors <= n photons): back-substitute.
    let dim = p.len();
    let mut q = vec![0.0; dim];
    for k in (0..dim).rev() {
        let upper: f64 = (k + 1..dim).map(|n| binomial_pmf(n, k, eta) * q[n]).sum();
        q[k] = (p[k] - upper) / binomial_pmf(k, k, eta);
    }
    let ill = q.iter().any(|x| *x < -NEGATIVE_TOL);
    let clipped = ill.then(|| {
        let c: Vec<f64> = q.iter().map(|x| x.max(0.0)).collect();
        let s: f64 = c.iter().sum();
        c.into_iter().map(|x| x / s).collect()
    });
    if ill {
        log::warn!("loss correction at eta = {eta} produced negative populations");
    }
    Ok(LossCorrection {
        exact: q,
        ill_conditioned: ill,
        clipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::apply_loss;

    #[test]
    fn distributions_of_simple_states() {
        assert_eq!(
            photon_distribution(&DensityMatrix::fock(1, 4).unwrap()),
            vec![0.0, 1.0, 0.0, 0.0]
        );
        let mixed = DensityMatrix::diagonal(&[0.5, 0.5]).unwrap();
        assert_eq!(photon_distribution(&mixed), vec![0.5, 0.5]);
        let eta = 0.7;
        let lossy = DensityMatrix::diagonal(&apply_loss(&[0.0, 0.0, 1.0, 0.0], eta)).unwrap();
        let p = photon_distribution(&lossy);
        let want = [
            (1.0 - eta) * (1.0 - eta),
            2.0 * eta * (1.0 - eta),
            eta * eta,
            0.0,
        ];
        for (a, b) in p.iter().zip(want) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn invariants_are_enforced() {
        let not_unit = DMatrix::from_element(2, 2, Complex64::new(0.0, 0.0));
        assert!(DensityMatrix::new(not_unit).is_err());
        let mut nh = DMatrix::identity(2, 2) * Complex64::new(0.5, 0.0);
        nh[(0, 1)] = Complex64::new(0.0, 0.1);
        assert!(DensityMatrix::new(nh.clone()).is_err());
        nh[(1, 0)] = Complex64::new(0.0, -0.1);
        assert!(DensityMatrix::new(nh).is_ok());
        assert!(matches!(
            DensityMatrix::diagonal(&[1.5, -0.5]),
            Err(Error::NotPositiveSemidefinite(_))
        ));
        let c = std::f64::consts::FRAC_1_SQRT_2;
        let plus = DensityMatrix::pure(&[c, c]).unwrap();
        assert!((plus.purity() - 1.0).abs() < 1e-12);
        assert!((plus.mean_photon_number() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn unit_efficiency_is_identity() {
        let p = [0.2, 0.5, 0.3];
        let c = loss_correct_diagonal(&p, 1.0).unwrap();
        assert_eq!(c.exact, p.to_vec());
        assert!(!c.ill_conditioned && c.clipped.is_none());
    }

    #[test]
    fn exact_inverse_of_lost_two_photons() {
        let lost = apply_loss(&[0.0, 0.0, 1.0, 0.0, 0.0], 0.8);
        let c = loss_correct_diagonal(&lost, 0.8).unwrap();
        for (k, x) in c.exact.iter().enumerate() {
            let want = if k == 2 { 1.0 } else { 0.0 };
            assert!((x - want).abs() < 1e-9, "{k}: {x}");
        }
    }

    #[test]
    fn overcorrection_is_flagged_and_clipped() {
        // vacuum-free measured data cannot come from eta = 0.5
        let c = loss_correct_diagonal(&[0.0, 1.0, 0.0], 0.5).unwrap();
        assert!(c.ill_conditioned);
        let clipped = c.clipped.unwrap();
        assert!(clipped.iter().all(|x| *x >= 0.0));
        assert!((clipped.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(loss_correct_diagonal(&[1.0], 0.0).is_err());
    }
}
