//! Fock-basis special functions in shot-noise units (`x = a + a^dagger`,
//! vacuum variance 1).

use std::f64::consts::PI;

/// Largest Fock cutoff any routine accepts.
pub const MAX_CUTOFF: usize = 64;

/// Quadrature wavefunctions `psi_0(x) .. psi_n_max(x)`, with
/// `psi_n(x) = 2^(-1/4) h_n(x / sqrt 2)` for the orthonormal Hermite
/// functions `h_n`, so that `|psi_n|^2` has variance `2n + 1`.
pub fn hermite_functions(x: f64, n_max: usize, out: &mut Vec<f64>) {
    out.clear();
    let y = x / std::f64::consts::SQRT_2;
    let scale = 2f64.powf(-0.25);
    let h0 = PI.powf(-0.25) * (-0.5 * y * y).exp();
    out.push(scale * h0);
    if n_max == 0 {
        return;
    }
    let h1 = std::f64::consts::SQRT_2 * y * h0;
    out.push(scale * h1);
    let (mut prev, mut cur) = (h0, h1);
    for n in 1..n_max {
        let nf = n as f64;
        let next = (2.0 / (nf + 1.0)).sqrt() * y * cur - (nf / (nf + 1.0)).sqrt() * prev;
        out.push(scale * next);
        prev = cur;
        cur = next;
    }
}

pub fn hermite_function(n: usize, x: f64) -> f64 {
    let mut v = Vec::with_capacity(n + 1);
    hermite_functions(x, n, &mut v);
    v[n]
}

/// Generalized Laguerre polynomials `L_k^(alpha)(x)` for `k = 0..=n_max`.
pub fn laguerre_all(n_max: usize, alpha: f64, x: f64, out: &mut Vec<f64>) {
    out.clear();
    out.push(1.0);
    if n_max == 0 {
        return;
    }
    out.push(1.0 + alpha - x);
    for k in 1..n_max {
        let kf = k as f64;
        let next = ((2.0 * kf + 1.0 + alpha - x) * out[k] - (kf + alpha) * out[k - 1]) / (kf + 1.0);
        out.push(next);
    }
}

pub fn ln_factorial(n: usize) -> f64 {
    (1..=n).map(|k| (k as f64).ln()).sum()
}

pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    (ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k))
        .exp()
        .round()
}

/// Probability that `k` of `n` photons survive a channel of efficiency `eta`.
pub fn binomial_pmf(n: usize, k: usize, eta: f64) -> f64 {
    if k > n {
        return 0.0;
    }
    let mut p = binomial(n, k);
    p *= eta.powi(k as i32);
    p *= (1.0 - eta).powi((n - k) as i32);
    p
}

/// Column-stochastic loss matrix `L[k][n] = P(k survive | n)` on `0..dim`.
pub fn loss_matrix(dim: usize, eta: f64) -> Vec<Vec<f64>> {
    (0..dim)
        .map(|k| (0..dim).map(|n| binomial_pmf(n, k, eta)).collect())
        .collect()
}

/// Applies the loss map to a photon-number distribution.
pub fn apply_loss(p: &[f64], eta: f64) -> Vec<f64> {
    let l = loss_matrix(p.len(), eta);
    l.iter()
        .map(|row| row.iter().zip(p).map(|(a, b)| a * b).sum())
        .collect()
}
