use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::density::DensityMatrix;
use super::povm::{phase_bin, phase_bin_factors, x_bin, x_bin_overlaps};
use super::QuadratureSampleSet;
use crate::error::{Error, Result};
use crate::exec::{map_blocks, ExecPolicy};
use crate::fock::MAX_CUTOFF;

/// Below this many samples reconstructions are reported but warned about.
const RECOMMENDED_SAMPLES: usize = 1000;
/// Slack on the log-likelihood comparison for round-off.
const LOGLIK_SLACK: f64 = 1e-12;
const HIST_CHUNK: usize = 8192;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Binning {
    pub n_x_bins: usize,
    /// Interior bins cover `[-x_range, x_range]`; the edge bins are unbounded.
    pub x_range: f64,
    pub n_phase_bins: usize,
}

impl Default for Binning {
    fn default() -> Self {
        Binning {
            n_x_bins: 64,
            x_range: 6.0,
            n_phase_bins: 12,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MaxLikConfig {
    pub binning: Binning,
    /// Stop when no diagonal element moves by more than this.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Turn the non-convergence flag into an error.
    pub strict: bool,
}

impl Default for MaxLikConfig {
    fn default() -> Self {
        MaxLikConfig {
            binning: Binning::default(),
            tolerance: 1e-8,
            max_iterations: 2000,
            strict: false,
        }
    }
}

impl MaxLikConfig {
    fn validate(&self) -> Result<()> {
        let b = &self.binning;
        if b.n_x_bins < 2 || b.n_phase_bins < 1 || !(b.x_range.is_finite() && b.x_range > 0.0) {
            return Err(Error::InvalidInput(format!("invalid binning {b:?}")));
        }
        if self.tolerance.is_nan() || self.tolerance <= 0.0 || self.max_iterations == 0 {
            return Err(Error::InvalidInput(
                "tolerance and iteration cap must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct MaxLikResult {
    pub rho: DensityMatrix,
    pub iterations: usize,
    pub converged: bool,
    /// Log-likelihood before the first and after every accepted step.
    pub log_likelihood: Vec<f64>,
    /// True when the log-likelihood never decreased.
    pub monotone: bool,
    /// Phase-free data: only photon-number populations are identifiable.
    pub diagonal_only: bool,
    /// True when every iterate was Hermitian, unit-trace and PSD.
    pub physical_iterates: bool,
}

/// Tolerances for the per-iterate physicality check.
const ITERATE_TOL: f64 = 1e-9;

fn is_physical(rho: &DMatrix<Complex64>) -> bool {
    let herm = (rho - rho.adjoint()).iter().all(|z| z.norm() < ITERATE_TOL);
    let trace = (rho.trace().re - 1.0).abs() < ITERATE_TOL;
    herm && trace
        && rho
            .clone()
            .symmetric_eigenvalues()
            .iter()
            .all(|&l| l > -ITERATE_TOL)
}

/// Iterative maximum-likelihood state estimate on a binned histogram.
///
/// With LO phases the full density matrix is estimated by the `R rho R`
/// iteration, falling back to the diluted step `(I + eps R) rho (I + eps R)`
/// whenever a full step would lower the likelihood. Without phases the
/// phase-averaged POVM only constrains the diagonal, which is estimated by
/// expectation-maximization; coherences are returned as zero.
pub fn maxlik_reconstruct(
    samples: &QuadratureSampleSet,
    cutoff: usize,
    config: &MaxLikConfig,
) -> Result<MaxLikResult> {
    config.validate()?;
    if samples.is_empty() {
        return Err(Error::InvalidInput("no quadrature samples".into()));
    }
    if cutoff == 0 || cutoff > MAX_CUTOFF {
        return Err(Error::CutoffOverflow {
            requested: cutoff,
            max: MAX_CUTOFF,
        });
    }
    if samples.len() < RECOMMENDED_SAMPLES {
        log::warn!(
            "{} samples is below the recommended {RECOMMENDED_SAMPLES}",
            samples.len()
        );
    }
    let b = config.binning;
    let n_phase = if samples.phases().is_some() {
        b.n_phase_bins
    } else {
        1
    };
    let counts = histogram(samples, &b, n_phase);
    let occupied_x = (0..b.n_x_bins)
        .filter(|&i| (0..n_phase).any(|j| counts[j * b.n_x_bins + i] > 0))
        .count();
    if occupied_x < 2 {
        return Err(Error::IllPosed(
            "all samples fall into a single quadrature bin".into(),
        ));
    }
    let dim = cutoff + 1;
    let xs = x_bin_overlaps(dim, b.n_x_bins, b.x_range);
    let result = if samples.phases().is_some() {
        full_iteration(&counts, &xs, b.n_phase_bins, dim, config)?
    } else {
        diagonal_iteration(&counts, &xs, dim, config)?
    };
    if !result.converged {
        if config.strict {
            return Err(Error::NotConverged(result.iterations));
        }
        log::warn!(
            "maximum likelihood stopped at the {} iteration cap",
            result.iterations
        );
    }
    Ok(result)
}

/// Counts indexed `phase_bin * n_x_bins + x_bin`.
fn histogram(samples: &QuadratureSampleSet, b: &Binning, n_phase: usize) -> Vec<u64> {
    let values = samples.values();
    let phases = samples.phases();
    let n_cells = n_phase * b.n_x_bins;
    let partial = map_blocks(
        ExecPolicy::default(),
        values.len().div_ceil(HIST_CHUNK),
        |c| {
            let mut h = vec![0u64; n_cells];
            let hi = ((c + 1) * HIST_CHUNK).min(values.len());
            for i in c * HIST_CHUNK..hi {
                let j = phases.map_or(0, |p| phase_bin(p[i], n_phase));
                h[j * b.n_x_bins + x_bin(values[i], b.n_x_bins, b.x_range)] += 1;
            }
            h
        },
    );
    partial.into_iter().fold(vec![0u64; n_cells], |mut acc, h| {
        acc.iter_mut().zip(h).for_each(|(a, x)| *a += x);
        acc
    })
}

struct Cell {
    count: f64,
    pi: DMatrix<Complex64>,
}

/// `tr(rho Pi)` for Hermitian `Pi`.
fn prob(rho: &DMatrix<Complex64>, pi: &DMatrix<Complex64>) -> f64 {
    rho.iter()
        .zip(pi.iter())
        .map(|(r, p)| (r * p.conj()).re)
        .sum()
}

fn loglik(rho: &DMatrix<Complex64>, cells: &[Cell]) -> f64 {
    cells
        .iter()
        .map(|c| c.count * prob(rho, &c.pi).max(f64::MIN_POSITIVE).ln())
        .sum()
}

fn full_iteration(
    counts: &[u64],
    xs: &[DMatrix<f64>],
    n_phase: usize,
    dim: usize,
    config: &MaxLikConfig,
) -> Result<MaxLikResult> {
    let n_x = xs.len();
    let phases = phase_bin_factors(dim, n_phase);
    let cells: Vec<Cell> = counts
        .iter()
        .enumerate()
        .filter(|(_, &c)| c > 0)
        .map(|(idx, &c)| {
            let (j, b) = (idx / n_x, idx % n_x);
            Cell {
                count: c as f64,
                pi: xs[b]
                    .map(|x| Complex64::new(x, 0.0))
                    .component_mul(&phases[j]),
            }
        })
        .collect();
    let total: f64 = cells.iter().map(|c| c.count).sum();
    let id = DMatrix::<Complex64>::identity(dim, dim);

    let mut rho = id.clone() / Complex64::new(dim as f64, 0.0);
    let mut ll = loglik(&rho, &cells);
    let mut trace = vec![ll];
    let mut monotone = true;
    let mut physical = true;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < config.max_iterations {
        iterations += 1;
        let mut r = DMatrix::<Complex64>::zeros(dim, dim);
        for c in &cells {
            let w = c.count / (total * prob(&rho, &c.pi));
            r += &c.pi * Complex64::new(w, 0.0);
        }
        let step = |t: &DMatrix<Complex64>| {
            let m = t * &rho * t.adjoint();
            let tr = m.trace().re;
            let m = m / Complex64::new(tr, 0.0);
            (&m + m.adjoint()) * Complex64::new(0.5, 0.0)
        };
        let mut next = step(&r);
        let mut next_ll = loglik(&next, &cells);
        let mut eps = 1.0;
        while next_ll < ll - LOGLIK_SLACK * ll.abs() && eps > 1e-12 {
            let t = (&id + &r * Complex64::new(eps, 0.0)) / Complex64::new(1.0 + eps, 0.0);
            next = step(&t);
            next_ll = loglik(&next, &cells);
            eps *= 0.5;
        }
        if next_ll < ll - LOGLIK_SLACK * ll.abs() {
            // no ascent direction left: at a stationary point
            converged = true;
            break;
        }
        monotone &= next_ll >= ll - LOGLIK_SLACK * ll.abs();
        let change = (0..dim)
            .map(|n| (next[(n, n)].re - rho[(n, n)].re).abs())
            .fold(0.0, f64::max);
        physical &= is_physical(&next);
        rho = next;
        ll = next_ll;
        trace.push(ll);
        if change < config.tolerance {
            converged = true;
            break;
        }
    }
    Ok(MaxLikResult {
        rho: DensityMatrix::project(rho),
        iterations,
        converged,
        log_likelihood: trace,
        monotone,
        diagonal_only: false,
        physical_iterates: physical,
    })
}

fn diagonal_iteration(
    counts: &[u64],
    xs: &[DMatrix<f64>],
    dim: usize,
    config: &MaxLikConfig,
) -> Result<MaxLikResult> {
    let cells: Vec<(f64, Vec<f64>)> = counts
        .iter()
        .zip(xs)
        .filter(|(&c, _)| c > 0)
        .map(|(&c, x)| (c as f64, (0..dim).map(|n| x[(n, n)]).collect()))
        .collect();
    let total: f64 = cells.iter().map(|c| c.0).sum();
    let q = |p: &[f64], d: &[f64]| p.iter().zip(d).map(|(a, b)| a * b).sum::<f64>();
    let ll_of = |p: &[f64]| -> f64 {
        cells
            .iter()
            .map(|(c, d)| c * q(p, d).max(f64::MIN_POSITIVE).ln())
            .sum()
    };

    let mut p = vec![1.0 / dim as f64; dim];
    let mut ll = ll_of(&p);
    let mut trace = vec![ll];
    let mut monotone = true;
    let mut physical = true;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < config.max_iterations {
        iterations += 1;
        let mut r = vec![0.0; dim];
        for (c, d) in &cells {
            let w = c / (total * q(&p, d));
            r.iter_mut().zip(d).for_each(|(a, x)| *a += w * x);
        }
        let mut next: Vec<f64> = p.iter().zip(&r).map(|(a, b)| a * b).collect();
        let s: f64 = next.iter().sum();
        next.iter_mut().for_each(|x| *x /= s);
        physical &=
            next.iter().all(|&x| x >= 0.0) && (next.iter().sum::<f64>() - 1.0).abs() < ITERATE_TOL;
        let next_ll = ll_of(&next);
        monotone &= next_ll >= ll - LOGLIK_SLACK * ll.abs();
        let change = next
            .iter()
            .zip(&p)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        p = next;
        ll = next_ll;
        trace.push(ll);
        if change < config.tolerance {
            converged = true;
            break;
        }
    }
    Ok(MaxLikResult {
        rho: DensityMatrix::diagonal(&p)?,
        iterations,
        converged,
        log_likelihood: trace,
        monotone,
        diagonal_only: true,
        physical_iterates: physical,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;
    use crate::synth::{LawKind, QuadratureLaw, QuadratureSampler};
    use crate::tomography::photon_distribution;

    fn draws(law: &QuadratureLaw, m: usize, seed: u64) -> QuadratureSampleSet {
        let s = QuadratureSampler::new(law).unwrap();
        let mut rng = substream(seed, 0);
        let tagged = matches!(
            law.phase_policy,
            crate::synth::PhasePolicy::UniformPerSegment
        );
        let mut values = Vec::with_capacity(m);
        let mut phases = Vec::with_capacity(m);
        for _ in 0..m {
            let theta = if tagged {
                rand::Rng::random::<f64>(&mut rng) * std::f64::consts::TAU
            } else {
                0.0
            };
            values.push(s.sample(theta, &mut rng));
            phases.push(theta);
        }
        QuadratureSampleSet::new(values, tagged.then_some(phases)).unwrap()
    }

    #[test]
    fn vacuum_roundtrip() {
        let set = draws(&QuadratureLaw::fixed(LawKind::VacuumGaussian), 100_000, 1);
        let r = maxlik_reconstruct(&set, 6, &MaxLikConfig::default()).unwrap();
        assert!(r.diagonal_only && r.monotone);
        assert!(photon_distribution(&r.rho)[0] >= 0.99);
    }

    #[test]
    fn lossy_single_photon_diagonal() {
        let law = QuadratureLaw::fixed(LawKind::LossyFock { n: 1, eta: 0.79 });
        let set = draws(&law, 100_000, 2);
        let r = maxlik_reconstruct(&set, 10, &MaxLikConfig::default()).unwrap();
        let p = photon_distribution(&r.rho);
        assert!((p[1] - 0.79).abs() < 0.02, "{p:?}");
        assert!(r.monotone);
        assert!(r
            .log_likelihood
            .windows(2)
            .all(|w| w[1] >= w[0] - 1e-9 * w[0].abs()));
    }

    #[test]
    fn phase_tagged_coherence_is_recovered() {
        let c = std::f64::consts::FRAC_1_SQRT_2;
        let law = QuadratureLaw::phase_averaged(LawKind::FockBasisState {
            coefficients: vec![c, c],
            theta: 0.0,
        });
        let set = draws(&law, 50_000, 3);
        let r = maxlik_reconstruct(&set, 5, &MaxLikConfig::default()).unwrap();
        assert!(!r.diagonal_only && r.monotone);
        let rho = &r.rho;
        assert!((rho.element(0, 0).re - 0.5).abs() < 0.03);
        assert!(
            (rho.element(1, 0).re - 0.5).abs() < 0.03,
            "{}",
            rho.element(1, 0)
        );
        assert!(rho.element(1, 0).im.abs() < 0.03);
        assert!(rho.min_eigenvalue() > -1e-9);
        assert!((rho.entries().trace().re - 1.0).abs() < 1e-10);
    }

    #[test]
    fn error_paths() {
        let empty = QuadratureSampleSet::new(vec![], None).unwrap();
        assert!(maxlik_reconstruct(&empty, 5, &MaxLikConfig::default()).is_err());
        let one_bin = QuadratureSampleSet::new(vec![0.01; 2000], None).unwrap();
        assert!(matches!(
            maxlik_reconstruct(&one_bin, 5, &MaxLikConfig::default()),
            Err(Error::IllPosed(_))
        ));
        let set = draws(
            &QuadratureLaw::fixed(LawKind::FockMarginal { n: 2 }),
            5_000,
            4,
        );
        let strict = MaxLikConfig {
            max_iterations: 2,
            strict: true,
            ..MaxLikConfig::default()
        };
        assert!(matches!(
            maxlik_reconstruct(&set, 8, &strict),
            Err(Error::NotConverged(2))
        ));
        let lax = MaxLikConfig {
            max_iterations: 2,
            ..MaxLikConfig::default()
        };
        assert!(!maxlik_reconstruct(&set, 8, &lax).unwrap().converged);
    }
}
