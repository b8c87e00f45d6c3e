//! Bin-integrated quadrature POVMs in a truncated Fock basis.
//!
//! A cell is an x-bin `b` crossed with a phase bin `j`. Its element is
//! `Pi[m][n] = X_b[m][n] * A_j[m - n]` with `X_b = int_b psi_m psi_n dx` and
//! `A_j[k]` the average of `exp(i k theta)` over the phase bin.

use std::f64::consts::TAU;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::fock::hermite_functions;
use crate::quad::{GL_W, GL_X};

/// Beyond this |x| every psi_n with n <= 64 is below 1e-30.
const FAR: f64 = 40.0;
/// Quadrature panel width; resolves psi_m psi_n oscillations up to n = 64.
const PANEL: f64 = 0.025;

/// Real matrices `X_b` for `n_bins` bins over `[-range, range]`, the first
/// and last bin extended to infinity so they sum to the identity.
pub(crate) fn x_bin_overlaps(dim: usize, n_bins: usize, range: f64) -> Vec<DMatrix<f64>> {
    let width = 2.0 * range / n_bins as f64;
    let mut out = Vec::with_capacity(n_bins);
    for b in 0..n_bins {
        let mut lo = -range + width * b as f64;
        let mut hi = lo + width;
        if b == 0 {
            lo = -FAR;
        }
        if b + 1 == n_bins {
            hi = FAR;
        }
        out.push(integrate_outer(dim, lo, hi));
    }
    out
}

fn integrate_outer(dim: usize, lo: f64, hi: f64) -> DMatrix<f64> {
    let panels = ((hi - lo) / PANEL).ceil().max(1.0) as usize;
    let h = (hi - lo) / panels as f64;
    let mut acc = DMatrix::<f64>::zeros(dim, dim);
    let mut psi = Vec::with_capacity(dim);
    for p in 0..panels {
        let mid = lo + h * (p as f64 + 0.5);
        for (x, w) in GL_X.iter().zip(GL_W) {
            hermite_functions(mid + 0.5 * h * x, dim - 1, &mut psi);
            let wt = 0.5 * h * w;
            for n in 0..dim {
                let s = wt * psi[n];
                for m in n..dim {
                    acc[(m, n)] += s * psi[m];
                }
            }
        }
    }
    acc.fill_upper_triangle_with_lower_triangle();
    acc
}

/// Phase factors `A_j[m][n] = mean over bin j of exp(i (m - n) theta)`.
pub(crate) fn phase_bin_factors(dim: usize, n_bins: usize) -> Vec<DMatrix<Complex64>> {
    let width = TAU / n_bins as f64;
    (0..n_bins)
        .map(|j| {
            let center = width * (j as f64 + 0.5);
            DMatrix::from_fn(dim, dim, |m, n| {
                let k = m as f64 - n as f64;
                let half = 0.5 * k * width;
                let sinc = if half == 0.0 { 1.0 } else { half.sin() / half };
                Complex64::from_polar(sinc, k * center)
            })
        })
        .collect()
}

/// Index of the phase bin containing `theta` (any real angle).
pub(crate) fn phase_bin(theta: f64, n_bins: usize) -> usize {
    let t = theta.rem_euclid(TAU);
    ((t / TAU * n_bins as f64) as usize).min(n_bins - 1)
}

/// Index of the x-bin containing `x`, edge bins unbounded.
pub(crate) fn x_bin(x: f64, n_bins: usize, range: f64) -> usize {
    let width = 2.0 * range / n_bins as f64;
    (((x + range) / width).floor().max(0.0) as usize).min(n_bins - 1)
}
