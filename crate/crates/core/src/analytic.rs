//! Closed-form temporal modes of heralded OPO photons.
//!
//! `Phi(t) = sqrt(pi gamma) exp(-pi gamma |t|)` is the single-photon mode; two
//! heralds separated by `delta_t` give the pair `Psi+-` built from `Phi(t)` and
//! `Phi(t + delta_t)`.
//!
//! Discretization: plain samples `Phi(t_i) sqrt(dt)` reproduce the continuum
//! overlap `s(delta_t) = exp(-x)(1 + x)` only to `O((pi gamma dt)^2)`. Instead the
//! discrete mode is the zero-phase square root of the spectrum of the sampled
//! overlap function `r(m) = s(m dt)`, so that `sum_i phi_i phi_(i+m) = s(m dt)`
//! holds exactly at every integer shift. Its values agree with `Phi(t_i) sqrt(dt)`
//! to the same order, and both converge to the continuum mode as `dt -> 0`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{dot, SampleGrid, TemporalMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModeBranch {
    Phi,
    PsiPlus,
    PsiMinus,
}

/// Parameters of a reference mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalyticModeSpec {
    pub gamma: f64,
    pub delta_t: f64,
    pub branch: ModeBranch,
    /// Position of the herald on the grid's time axis.
    #[serde(default)]
    pub center: f64,
}

impl AnalyticModeSpec {
    pub fn validate(&self) -> Result<()> {
        validate_gamma(self.gamma)?;
        validate_delay(self.delta_t)
    }

    /// `None` for `PsiMinus` at zero delay.
    pub fn build(&self, grid: &SampleGrid) -> Result<Option<TemporalMode>> {
        self.validate()?;
        match self.branch {
            ModeBranch::Phi => phi_centered(self.gamma, grid, self.center).map(Some),
            ModeBranch::PsiPlus => Ok(Some(
                psi_pm_centered(self.gamma, self.delta_t, grid, self.center)?.0,
            )),
            ModeBranch::PsiMinus => {
                Ok(psi_pm_centered(self.gamma, self.delta_t, grid, self.center)?.1)
            }
        }
    }
}

fn validate_gamma(gamma: f64) -> Result<()> {
    if gamma.is_finite() && gamma > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!(
            "gamma must be positive, got {gamma}"
        )))
    }
}

fn validate_delay(delta_t: f64) -> Result<()> {
    if delta_t.is_finite() && delta_t >= 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!(
            "delay must be non-negative, got {delta_t}"
        )))
    }
}

/// Continuum profile `Phi(t)`.
pub fn phi_continuous(gamma: f64, t: f64) -> f64 {
    let a = PI * gamma;
    a.sqrt() * (-a * t.abs()).exp()
}

/// Fraction of `int Phi(t - center)^2 dt` that falls inside the grid window.
pub fn phi_window_fraction(gamma: f64, grid: &SampleGrid, center: f64) -> f64 {
    let a = PI * gamma;
    let lo = grid.t0() - center;
    let hi = grid.t0() + grid.duration() - center;
    // int_lo^hi a exp(-2a|t|) dt
    let cum = |t: f64| {
        if t <= 0.0 {
            0.5 * (2.0 * a * t).exp()
        } else {
            1.0 - 0.5 * (-2.0 * a * t).exp()
        }
    };
    cum(hi) - cum(lo)
}

const TRUNCATION_WARN: f64 = 3e-3;

fn warn_truncation(gamma: f64, grid: &SampleGrid, center: f64) {
    let frac = phi_window_fraction(gamma, grid, center);
    if 1.0 - frac > TRUNCATION_WARN {
        log::warn!(
            "window keeps only {:.4} of the mode norm (herald at {center:e} s); mode is truncated",
            frac
        );
    }
}

/// Sampled overlap spectrum `S(w) = sum_m q^|m| (1 + u|m|) e^(-iwm)`, `q = e^-u`.
fn overlap_spectrum(u: f64, omega: f64) -> f64 {
    let q = (-u).exp();
    let c = omega.cos();
    let d = 1.0 - 2.0 * q * c + q * q;
    let p = (1.0 - q * q) / d;
    let dp_dq = 2.0 * (c * (1.0 + q * q) - 2.0 * q) / (d * d);
    p + u * q * dp_dq
}

const MAX_FFT_LEN: usize = 1 << 24;
/// exp(-36) ~ 2e-16: image spacing needed to make periodization invisible.
const DECAY_LENGTHS: f64 = 36.0;

/// Unnormalized discrete `Phi(t_i - center) sqrt(dt)` on `grid`.
pub(crate) fn discrete_phi(gamma: f64, grid: &SampleGrid, center: f64) -> Vec<f64> {
    let dt = grid.dt();
    let n = grid.n_samples();
    let u = PI * gamma * dt;
    let x0 = (grid.t0() - center) / dt;
    let j0 = x0.floor();
    let frac = x0 - j0;
    let reach = j0.abs().max((j0 + n as f64).abs());
    let needed = reach + DECAY_LENGTHS / u + 2.0;
    if !needed.is_finite() || needed > (MAX_FFT_LEN / 2) as f64 {
        // Extremely fine grids: direct sampling is already accurate to O(u^2).
        return grid
            .times()
            .map(|t| phi_continuous(gamma, t - center) * dt.sqrt())
            .collect();
    }
    let len = (2.0 * needed).ceil() as usize;
    let len = len.next_power_of_two().max(64);

    let mut buf: Vec<Complex64> = (0..len)
        .map(|k| {
            let kk = if k < len / 2 {
                k as f64
            } else {
                k as f64 - len as f64
            };
            let omega = 2.0 * PI * kk / len as f64;
            let amp = overlap_spectrum(u, omega).max(0.0).sqrt();
            Complex64::from_polar(amp, omega * frac)
        })
        .collect();
    FftPlanner::new().plan_fft_inverse(len).process(&mut buf);

    let j0 = j0 as i64;
    (0..n)
        .map(|i| {
            let j = (j0 + i as i64).rem_euclid(len as i64) as usize;
            buf[j].re / len as f64
        })
        .collect()
}

/// Single-photon mode with the herald at `t = 0`.
pub fn phi(gamma: f64, grid: &SampleGrid) -> Result<TemporalMode> {
    phi_centered(gamma, grid, 0.0)
}

pub fn phi_centered(gamma: f64, grid: &SampleGrid, center: f64) -> Result<TemporalMode> {
    validate_gamma(gamma)?;
    warn_truncation(gamma, grid, center);
    TemporalMode::normalized(*grid, discrete_phi(gamma, grid, center))
}

/// Symmetric and antisymmetric two-herald modes for heralds at `0` and
/// `-delta_t`. The antisymmetric mode is `None` at zero delay.
pub fn psi_pm(
    gamma: f64,
    delta_t: f64,
    grid: &SampleGrid,
) -> Result<(TemporalMode, Option<TemporalMode>)> {
    psi_pm_centered(gamma, delta_t, grid, 0.0)
}

pub fn psi_pm_centered(
    gamma: f64,
    delta_t: f64,
    grid: &SampleGrid,
    center: f64,
) -> Result<(TemporalMode, Option<TemporalMode>)> {
    validate_gamma(gamma)?;
    validate_delay(delta_t)?;
    let first = phi_centered(gamma, grid, center)?;
    if delta_t == 0.0 {
        return Ok((first, None));
    }
    let second = phi_centered(gamma, grid, center - delta_t)?;
    let a = first.weights();
    let b = second.weights();
    let plus: Vec<f64> = a.iter().zip(b).map(|(x, y)| x + y).collect();
    let minus: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let plus = TemporalMode::normalized(*grid, plus)?;
    // Sub-sample delays can leave the difference at rounding level.
    let minus_norm = minus.iter().map(|x| x * x).sum::<f64>().sqrt();
    let minus = if minus_norm > 1e-9 {
        Some(TemporalMode::normalized(*grid, minus)?)
    } else {
        None
    };
    Ok((plus, minus))
}

/// Squared inner product `(sum_i f_i g_i)^2`.
pub fn mode_overlap(f: &TemporalMode, g: &TemporalMode) -> Result<f64> {
    f.grid().ensure_matches(g.grid(), "mode overlap")?;
    Ok(dot(f.weights(), g.weights()).powi(2).min(1.0))
}

/// `s = int Phi(t) Phi(t + delta_t) dt = exp(-x)(1 + x)`, `x = pi gamma delta_t`.
pub fn herald_overlap_s(gamma: f64, delta_t: f64) -> Result<f64> {
    validate_gamma(gamma)?;
    validate_delay(delta_t)?;
    let x = PI * gamma * delta_t;
    Ok((-x).exp() * (1.0 + x))
}

/// Eigenvalues `1 + 2(1 +- s)` of the two-herald kernel on the symmetric and
/// antisymmetric modes.
pub fn predicted_kappas(gamma: f64, delta_t: f64) -> Result<(f64, f64)> {
    let s = herald_overlap_s(gamma, delta_t)?;
    Ok((1.0 + 2.0 * (1.0 + s), 1.0 + 2.0 * (1.0 - s)))
}
