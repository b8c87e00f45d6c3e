use super::{LawKind, QuadratureLaw};
use crate::error::{Error, Result};
use crate::fock::{ln_factorial, MAX_CUTOFF};

/// Largest admissible truncated norm.
const TAIL_TOL: f64 = 1e-6;

/// Squeezing parameter `r` for a squeezing level in dB (`10 log10 e^{2r}`).
pub fn squeezing_parameter(squeezing_db: f64) -> f64 {
    squeezing_db * std::f64::consts::LN_10 / 20.0
}

/// Fock amplitudes `c_0..=c_cutoff` of `a S(r)|0>` normalized, with the sign
/// chosen so `c_1 > 0`. Only odd entries are non-zero:
/// `c_{2m+1} = cosh(r)^{-3/2} (-tanh(r)/2)^m sqrt((2m+1)!) / m!`.
pub fn css_state_coefficients(squeezing_db: f64, cutoff: usize) -> Result<Vec<f64>> {
    if !(squeezing_db.is_finite() && squeezing_db > 0.0) {
        return Err(Error::InvalidInput(format!(
            "squeezing must be positive, got {squeezing_db} dB"
        )));
    }
    if cutoff < 8 {
        return Err(Error::InvalidInput(format!("cutoff {cutoff} below 8")));
    }
    if cutoff > MAX_CUTOFF {
        return Err(Error::CutoffOverflow {
            requested: cutoff,
            max: MAX_CUTOFF,
        });
    }
    let r = squeezing_parameter(squeezing_db);
    let t = r.tanh();
    let ln_pref = -1.5 * r.cosh().ln();
    let mut c = vec![0.0; cutoff + 1];
    for m in 0..=(cutoff - 1) / 2 {
        let ln_mag =
            ln_pref + m as f64 * (t / 2.0).ln() + 0.5 * ln_factorial(2 * m + 1) - ln_factorial(m);
        let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
        c[2 * m + 1] = sign * ln_mag.exp();
    }
    let tail = 1.0 - c.iter().map(|x| x * x).sum::<f64>();
    if tail > TAIL_TOL {
        return Err(Error::CutoffTooSmall { cutoff, tail });
    }
    Ok(c)
}

/// Phase-randomized quadrature law of the truncated state, renormalized so
/// the discarded tail (below 1e-6) does not leave a sub-unit norm.
pub fn css_state_law(squeezing_db: f64, cutoff: usize) -> Result<QuadratureLaw> {
    let mut c = css_state_coefficients(squeezing_db, cutoff)?;
    let norm = c.iter().map(|x| x * x).sum::<f64>().sqrt();
    c.iter_mut().for_each(|x| *x /= norm);
    Ok(QuadratureLaw::phase_averaged(LawKind::FockBasisState {
        coefficients: c,
        theta: 0.0,
    }))
}
