use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::density::DensityMatrix;
use crate::error::{Error, Result};
use crate::fock::{laguerre_all, ln_factorial};

/// Coarsest accepted grid spacing.
const MAX_STEP: f64 = 0.25;
/// Smallest accepted half-width of the phase-space window.
const MIN_HALF_WIDTH: f64 = 4.0;

/// Square phase-space window `[-half_width, half_width]^2` sampled every `step`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WignerGridSpec {
    pub half_width: f64,
    pub step: f64,
}

impl Default for WignerGridSpec {
    fn default() -> Self {
        WignerGridSpec {
            half_width: 5.0,
            step: 0.05,
        }
    }
}

impl WignerGridSpec {
    fn axis(&self) -> Result<Vec<f64>> {
        if !(self.step.is_finite() && self.step > 0.0 && self.step <= MAX_STEP) {
            return Err(Error::InvalidWignerGrid(format!(
                "spacing {} outside (0, {MAX_STEP}]",
                self.step
            )));
        }
        if !(self.half_width.is_finite() && self.half_width >= MIN_HALF_WIDTH) {
            return Err(Error::InvalidWignerGrid(format!(
                "half-width {} below {MIN_HALF_WIDTH}",
                self.half_width
            )));
        }
        let k = (self.half_width / self.step).round() as i64;
        Ok((-k..=k).map(|i| i as f64 * self.step).collect())
    }
}

/// `values[(i, j)] = W(x_axis[i], p_axis[j])`.
#[derive(Debug, Clone, PartialEq)]
pub struct WignerGrid {
    pub x_axis: Vec<f64>,
    pub p_axis: Vec<f64>,
    pub values: DMatrix<f64>,
}

impl WignerGrid {
    /// Riemann sum of W over the grid.
    pub fn integral(&self) -> f64 {
        let dx = self.x_axis[1] - self.x_axis[0];
        let dp = self.p_axis[1] - self.p_axis[0];
        self.values.sum() * dx * dp
    }

    /// Value at the grid point closest to the origin.
    pub fn at_origin(&self) -> f64 {
        let nearest = |a: &[f64]| {
            a.iter()
                .enumerate()
                .min_by(|x, y| x.1.abs().total_cmp(&y.1.abs()))
                .map(|(i, _)| i)
                .unwrap_or(0)
        };
        self.values[(nearest(&self.x_axis), nearest(&self.p_axis))]
    }

    pub fn min(&self) -> f64 {
        self.values.min()
    }
}

/// Wigner function of `rho` with quadratures `x = a + a^dagger`,
/// `p = -i(a - a^dagger)`, normalized so vacuum is
/// `exp(-(x^2 + p^2) / 2) / (2 pi)`.
pub fn wigner(rho: &DensityMatrix, spec: &WignerGridSpec) -> Result<WignerGrid> {
    let axis = spec.axis()?;
    let n = axis.len();
    let values = DMatrix::from_fn(n, n, |i, j| wigner_point(rho, axis[i], axis[j]));
    Ok(WignerGrid {
        x_axis: axis.clone(),
        p_axis: axis,
        values,
    })
}

/// Single-point evaluation; uses the Fock kernels
/// `W_{mn}(alpha) = (2/pi) (-1)^n sqrt(n!/m!) (2 conj(alpha))^(m-n)
/// exp(-2|alpha|^2) L_n^(m-n)(4|alpha|^2)` for `m >= n`, `alpha = (x + ip)/2`,
/// and `W(x, p) = W(alpha) / 4`.
pub fn wigner_point(rho: &DensityMatrix, x: f64, p: f64) -> f64 {
    let dim = rho.dim();
    let r2 = x * x + p * p;
    let two_conj_alpha = Complex64::new(x, -p);
    let gauss = (-0.5 * r2).exp() / (2.0 * PI);
    let mut lag = Vec::with_capacity(dim);
    let mut power = Complex64::new(1.0, 0.0);
    let mut total = 0.0;
    for k in 0..dim {
        laguerre_all(dim - 1 - k, k as f64, r2, &mut lag);
        for (n, l) in lag.iter().enumerate().take(dim - k) {
            let m = n + k;
            let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
            let norm = (0.5 * (ln_factorial(n) - ln_factorial(m))).exp();
            let kernel = power * (sign * norm * l);
            let term = rho.element(m, n) * kernel;
            // the (n, m) element contributes the complex conjugate
            total += if k == 0 { term.re } else { 2.0 * term.re };
        }
        power *= two_conj_alpha;
    }
    gauss * total
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vacuum_and_single_photon_at_origin() {
        let vac = DensityMatrix::fock(0, 3).unwrap();
        let one = DensityMatrix::fock(1, 3).unwrap();
        assert!((wigner_point(&vac, 0.0, 0.0) - 1.0 / (2.0 * PI)).abs() < 1e-15);
        assert!((wigner_point(&one, 0.0, 0.0) + 1.0 / (2.0 * PI)).abs() < 1e-15);
    }

    #[test]
    fn single_photon_closed_form() {
        // W_1 = (x^2 + p^2 - 1) exp(-(x^2+p^2)/2) / (2 pi)
        let one = DensityMatrix::fock(1, 4).unwrap();
        for (x, p) in [(0.3, -1.2), (2.0, 0.5), (-1.0, -1.0)] {
            let r2: f64 = x * x + p * p;
            let want = (r2 - 1.0) * (-0.5 * r2).exp() / (2.0 * PI);
            assert!((wigner_point(&one, x, p) - want).abs() < 1e-14);
        }
    }

    #[test]
    fn normalization_and_marginal_mean() {
        let c = std::f64::consts::FRAC_1_SQRT_2;
        let rhos = [
            DensityMatrix::fock(2, 6).unwrap(),
            DensityMatrix::pure(&[c, c]).unwrap(),
            DensityMatrix::diagonal(&[0.2, 0.3, 0.5]).unwrap(),
        ];
        for rho in &rhos {
            let w = wigner(rho, &WignerGridSpec::default()).unwrap();
            assert!((w.integral() - 1.0).abs() < 1e-3, "{}", w.integral());
        }
        // higher Fock states need a wider window to hold their mass
        let wide = WignerGridSpec {
            half_width: 8.0,
            step: 0.1,
        };
        let w3 = wigner(&DensityMatrix::fock(3, 6).unwrap(), &wide).unwrap();
        assert!((w3.integral() - 1.0).abs() < 1e-6);
        // (|0> + |1>)/sqrt2 has <x> = 1, <p> = 0
        let w = wigner(&rhos[1], &WignerGridSpec::default()).unwrap();
        let (mut mx, mut mp) = (0.0, 0.0);
        for (i, x) in w.x_axis.iter().enumerate() {
            for (j, p) in w.p_axis.iter().enumerate() {
                mx += x * w.values[(i, j)];
                mp += p * w.values[(i, j)];
            }
        }
        let cell = 0.05 * 0.05;
        assert!((mx * cell - 1.0).abs() < 1e-3);
        assert!((mp * cell).abs() < 1e-3);
    }

    #[test]
    fn imaginary_coherence_shifts_p() {
        // (|0> + i|1>)/sqrt2: rho_10 = i/2 gives <p> = 1
        let mut m = DMatrix::from_element(2, 2, Complex64::new(0.5, 0.0));
        m[(1, 0)] = Complex64::new(0.0, 0.5);
        m[(0, 1)] = Complex64::new(0.0, -0.5);
        let rho = DensityMatrix::new(m).unwrap();
        assert!(wigner_point(&rho, 0.0, 1.0) > wigner_point(&rho, 0.0, -1.0));
    }

    #[test]
    fn rejects_coarse_or_small_grids() {
        let rho = DensityMatrix::fock(0, 2).unwrap();
        for spec in [
            WignerGridSpec {
                half_width: 5.0,
                step: 0.3,
            },
            WignerGridSpec {
                half_width: 3.0,
                step: 0.1,
            },
        ] {
            assert!(matches!(
                wigner(&rho, &spec),
                Err(Error::InvalidWignerGrid(_))
            ));
        }
    }
}
