use std::f64::consts::{PI, TAU};

use rand::distr::weighted::WeightedIndex;
use rand::{Rng, RngCore};
use rand_distr::{Binomial, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{self, hermite_functions};
use crate::rng::{streams, substream};

/// Single-mode quadrature statistics, in shot-noise units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LawKind {
    VacuumGaussian,
    FockMarginal {
        n: usize,
    },
    /// `|n>` after a loss channel of efficiency `eta`.
    LossyFock {
        n: usize,
        eta: f64,
    },
    /// Phase-invariant mixture with the given photon-number populations.
    FockMixture {
        populations: Vec<f64>,
    },
    /// Gaussian with `V(theta) = v_min cos^2(theta - theta0) + v_max sin^2(theta - theta0)`.
    SqueezedVacuum {
        v_min: f64,
        v_max: f64,
        theta0: f64,
    },
    /// Pure state `sum_n c_n |n>` rotated by `theta`.
    FockBasisState {
        coefficients: Vec<f64>,
        theta: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum PhasePolicy {
    Fixed { theta: f64 },
    UniformPerSegment,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadratureLaw {
    pub kind: LawKind,
    pub phase_policy: PhasePolicy,
}

impl QuadratureLaw {
    pub fn fixed(kind: LawKind) -> Self {
        QuadratureLaw {
            kind,
            phase_policy: PhasePolicy::Fixed { theta: 0.0 },
        }
    }

    pub fn phase_averaged(kind: LawKind) -> Self {
        QuadratureLaw {
            kind,
            phase_policy: PhasePolicy::UniformPerSegment,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidLaw(m));
        match &self.kind {
            LawKind::VacuumGaussian => Ok(()),
            LawKind::FockMarginal { n } => check_cutoff(*n),
            LawKind::LossyFock { n, eta } => {
                check_cutoff(*n)?;
                if !(0.0..=1.0).contains(eta) {
                    return bad(format!("efficiency {eta} outside [0, 1]"));
                }
                Ok(())
            }
            LawKind::FockMixture { populations } => {
                if populations.is_empty() {
                    return bad("empty population vector".into());
                }
                check_cutoff(populations.len() - 1)?;
                if populations.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
                    return bad("populations must be non-negative".into());
                }
                let total: f64 = populations.iter().sum();
                if (total - 1.0).abs() > 1e-9 {
                    return bad(format!("populations sum to {total}"));
                }
                Ok(())
            }
            LawKind::SqueezedVacuum { v_min, v_max, .. } => {
                if !(v_min.is_finite() && v_max.is_finite() && *v_min > 0.0 && *v_max > 0.0) {
                    return bad("variances must be positive".into());
                }
                Ok(())
            }
            LawKind::FockBasisState { coefficients, .. } => {
                if coefficients.is_empty() {
                    return bad("empty coefficient vector".into());
                }
                check_cutoff(coefficients.len() - 1)?;
                let norm: f64 = coefficients.iter().map(|c| c * c).sum();
                if (norm - 1.0).abs() > 1e-9 {
                    return bad(format!("coefficient vector has norm^2 {norm}"));
                }
                Ok(())
            }
        }
    }

    /// `<x^2>` averaged over a uniform LO phase (equal to the fixed-phase
    /// value for phase-invariant laws).
    pub fn mean_variance(&self) -> f64 {
        match &self.kind {
            LawKind::VacuumGaussian => 1.0,
            LawKind::FockMarginal { n } => (2 * n + 1) as f64,
            LawKind::LossyFock { n, eta } => 1.0 + 2.0 * eta * *n as f64,
            LawKind::FockMixture { populations } => populations
                .iter()
                .enumerate()
                .map(|(k, p)| p * (2 * k + 1) as f64)
                .sum(),
            LawKind::SqueezedVacuum { v_min, v_max, .. } => 0.5 * (v_min + v_max),
            LawKind::FockBasisState { coefficients, .. } => coefficients
                .iter()
                .enumerate()
                .map(|(k, c)| c * c * (2 * k + 1) as f64)
                .sum(),
        }
    }

    /// Photon-number populations where defined (everything but squeezed vacuum).
    pub fn photon_distribution(&self) -> Option<Vec<f64>> {
        match &self.kind {
            LawKind::VacuumGaussian => Some(vec![1.0]),
            LawKind::FockMarginal { n } => {
                let mut p = vec![0.0; n + 1];
                p[*n] = 1.0;
                Some(p)
            }
            LawKind::LossyFock { n, eta } => {
                Some((0..=*n).map(|k| fock::binomial_pmf(*n, k, *eta)).collect())
            }
            LawKind::FockMixture { populations } => Some(populations.clone()),
            LawKind::SqueezedVacuum { .. } => None,
            LawKind::FockBasisState { coefficients, .. } => {
                Some(coefficients.iter().map(|c| c * c).collect())
            }
        }
    }
}

fn check_cutoff(n: usize) -> Result<()> {
    if n > fock::MAX_CUTOFF {
        Err(Error::CutoffOverflow {
            requested: n,
            max: fock::MAX_CUTOFF,
        })
    } else {
        Ok(())
    }
}

/// Rejection sampler for a density dominated by `bound(x)` with Gaussian
/// envelope of variance `1.2 (2 n_max + 1)`.
#[derive(Debug, Clone)]
struct Envelope {
    sigma: f64,
    /// sup_x bound(x) / g(x), g the envelope density
    m: f64,
}

impl Envelope {
    fn new(n_max: usize, bound: impl Fn(f64) -> f64) -> Self {
        let sigma = (1.2 * (2 * n_max + 1) as f64).sqrt();
        let reach = 6.0 * sigma + 4.0;
        let steps = 8000;
        let m = (0..=steps)
            .map(|i| {
                let x = -reach + 2.0 * reach * i as f64 / steps as f64;
                bound(x) / gauss_pdf(x, sigma)
            })
            .fold(0.0, f64::max);
        Envelope { sigma, m: 1.05 * m }
    }

    fn sample(&self, rng: &mut dyn RngCore, mut density: impl FnMut(f64) -> f64) -> f64 {
        loop {
            let z: f64 = StandardNormal.sample(rng);
            let x = self.sigma * z;
            let u: f64 = rng.random();
            if u * self.m * gauss_pdf(x, self.sigma) <= density(x) {
                return x;
            }
        }
    }
}

fn gauss_pdf(x: f64, sigma: f64) -> f64 {
    (-0.5 * (x / sigma).powi(2)).exp() / (sigma * TAU.sqrt())
}

#[derive(Debug, Clone)]
enum Strategy {
    Gaussian,
    Fock(Vec<Envelope>),
    Binomial {
        n: usize,
        eta: f64,
        fock: Vec<Envelope>,
    },
    Mixture {
        index: WeightedIndex<f64>,
        fock: Vec<Envelope>,
    },
    Squeezed {
        v_min: f64,
        v_max: f64,
        theta0: f64,
    },
    Pure {
        coefficients: Vec<f64>,
        theta: f64,
        envelope: Envelope,
    },
}

/// A law prepared for repeated draws (envelope bounds precomputed).
#[derive(Debug, Clone)]
pub struct QuadratureSampler {
    strategy: Strategy,
}

fn fock_density(n: usize, x: f64) -> f64 {
    let mut buf = Vec::with_capacity(n + 1);
    hermite_functions(x, n, &mut buf);
    buf[n] * buf[n]
}

fn fock_envelopes(n_max: usize) -> Vec<Envelope> {
    (0..=n_max)
        .map(|n| Envelope::new(n, |x| fock_density(n, x)))
        .collect()
}

impl QuadratureSampler {
    pub fn new(law: &QuadratureLaw) -> Result<Self> {
        law.validate()?;
        let strategy = match &law.kind {
            LawKind::VacuumGaussian => Strategy::Gaussian,
            LawKind::FockMarginal { n } => Strategy::Fock(fock_envelopes(*n)),
            LawKind::LossyFock { n, eta } => Strategy::Binomial {
                n: *n,
                eta: *eta,
                fock: fock_envelopes(*n),
            },
            LawKind::FockMixture { populations } => Strategy::Mixture {
                index: WeightedIndex::new(populations)
                    .map_err(|e| Error::InvalidLaw(e.to_string()))?,
                fock: fock_envelopes(populations.len() - 1),
            },
            LawKind::SqueezedVacuum {
                v_min,
                v_max,
                theta0,
            } => Strategy::Squeezed {
                v_min: *v_min,
                v_max: *v_max,
                theta0: *theta0,
            },
            LawKind::FockBasisState {
                coefficients,
                theta,
            } => {
                let n_max = coefficients.len() - 1;
                let abs: Vec<f64> = coefficients.iter().map(|c| c.abs()).collect();
                let envelope = Envelope::new(n_max, |x| {
                    let mut buf = Vec::with_capacity(n_max + 1);
                    hermite_functions(x, n_max, &mut buf);
                    let s: f64 = buf.iter().zip(&abs).map(|(p, c)| p.abs() * c).sum();
                    s * s
                });
                Strategy::Pure {
                    coefficients: coefficients.clone(),
                    theta: *theta,
                    envelope,
                }
            }
        };
        Ok(QuadratureSampler { strategy })
    }

    /// One draw at LO phase `phase`.
    pub fn sample(&self, phase: f64, rng: &mut dyn RngCore) -> f64 {
        match &self.strategy {
            Strategy::Gaussian => StandardNormal.sample(rng),
            Strategy::Fock(env) => {
                let n = env.len() - 1;
                env[n].sample(rng, |x| fock_density(n, x))
            }
            Strategy::Binomial { n, eta, fock } => {
                let k = Binomial::new(*n as u64, *eta)
                    .expect("validated efficiency")
                    .sample(rng) as usize;
                fock[k].sample(rng, |x| fock_density(k, x))
            }
            Strategy::Mixture { index, fock } => {
                let k = index.sample(rng);
                fock[k].sample(rng, |x| fock_density(k, x))
            }
            Strategy::Squeezed {
                v_min,
                v_max,
                theta0,
            } => {
                let (s, c) = (phase - theta0).sin_cos();
                let v = v_min * c * c + v_max * s * s;
                let z: f64 = StandardNormal.sample(rng);
                v.sqrt() * z
            }
            Strategy::Pure {
                coefficients,
                theta,
                envelope,
            } => {
                let n_max = coefficients.len() - 1;
                let rot = phase - theta;
                let mut buf = Vec::with_capacity(n_max + 1);
                envelope.sample(rng, |x| {
                    hermite_functions(x, n_max, &mut buf);
                    // <x, phase|psi> = sum_n c_n e^{-i n rot} psi_n(x)
                    let (mut re, mut im) = (0.0, 0.0);
                    for (n, (c, p)) in coefficients.iter().zip(&buf).enumerate() {
                        let (s, co) = (n as f64 * rot).sin_cos();
                        re += c * p * co;
                        im -= c * p * s;
                    }
                    re * re + im * im
                })
            }
        }
    }

    /// Per-segment LO phase draw for `UniformPerSegment` policies.
    pub(crate) fn uniform_phase(rng: &mut dyn RngCore) -> f64 {
        rng.random::<f64>() * 2.0 * PI
    }
}

/// One draw from `law` at LO phase `phase`, reproducible from `seed`.
pub fn sample_quadrature(law: &QuadratureLaw, phase: f64, seed: u64) -> Result<f64> {
    let sampler = QuadratureSampler::new(law)?;
    let mut rng = substream(seed, streams::SINGLE_DRAW);
    Ok(sampler.sample(phase, &mut rng))
}
