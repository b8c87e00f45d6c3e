use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::law::{PhasePolicy, QuadratureLaw, QuadratureSampler};
use crate::error::{Error, Result};
use crate::exec::{for_each_chunk_mut, ExecPolicy, BLOCK};
use crate::rng::{streams, substream};
use crate::signal::{dot, SampleGrid, SegmentSet, TemporalMode};

/// Residual norm below which a mode counts as linearly dependent on the
/// preceding ones.
const DEPENDENCE_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InjectionOptions {
    /// Fraction of segments left as pure vacuum (background heralds).
    pub dark_fraction: f64,
    pub policy: ExecPolicy,
}

impl Default for InjectionOptions {
    fn default() -> Self {
        InjectionOptions {
            dark_fraction: 0.0,
            policy: ExecPolicy::default(),
        }
    }
}

/// White vacuum segments whose components along the given modes are
/// replaced by draws from the paired laws. Modes are orthonormalized in the
/// order given.
pub fn sample_mode_injected(
    grid: SampleGrid,
    injections: &[(TemporalMode, QuadratureLaw)],
    n_segments: usize,
    seed: u64,
) -> Result<SegmentSet> {
    sample_mode_injected_with(
        grid,
        injections,
        n_segments,
        seed,
        InjectionOptions::default(),
    )
}

pub fn sample_mode_injected_with(
    grid: SampleGrid,
    injections: &[(TemporalMode, QuadratureLaw)],
    n_segments: usize,
    seed: u64,
    opts: InjectionOptions,
) -> Result<SegmentSet> {
    if n_segments == 0 {
        return Err(Error::InvalidInput("n_segments must be at least 1".into()));
    }
    if !(0.0..1.0).contains(&opts.dark_fraction) {
        return Err(Error::InvalidInput(format!(
            "dark fraction {} outside [0, 1)",
            opts.dark_fraction
        )));
    }
    for (k, (mode, _)) in injections.iter().enumerate() {
        grid.ensure_matches(mode.grid(), &format!("injected mode {k}"))?;
    }
    let basis = gram_schmidt(injections.iter().map(|(m, _)| m.weights()))?;
    let samplers = injections
        .iter()
        .map(|(_, law)| QuadratureSampler::new(law))
        .collect::<Result<Vec<_>>>()?;
    let policies: Vec<PhasePolicy> = injections.iter().map(|(_, l)| l.phase_policy).collect();
    let tag_phase = policies.contains(&PhasePolicy::UniformPerSegment);

    let n = grid.n_samples();
    let mut data = vec![0.0; n_segments * n];
    let mut phases = vec![0.0; if tag_phase { n_segments } else { 0 }];

    // Each block fills its own rows and returns its phases, so the output is
    // independent of how blocks are scheduled.
    let block_phases: Vec<(usize, Vec<f64>)> = {
        let out = std::sync::Mutex::new(Vec::new());
        for_each_chunk_mut(opts.policy, &mut data, BLOCK * n, |block, chunk| {
            let mut rng = substream(seed, streams::INJECTION + block as u64);
            let mut local = Vec::with_capacity(BLOCK);
            for row in chunk.chunks_mut(n) {
                row.iter_mut()
                    .for_each(|x| *x = StandardNormal.sample(&mut rng));
                let phase = if tag_phase {
                    QuadratureSampler::uniform_phase(&mut rng)
                } else {
                    0.0
                };
                local.push(phase);
                if rng.random::<f64>() < opts.dark_fraction {
                    continue;
                }
                for ((f, sampler), policy) in basis.iter().zip(&samplers).zip(&policies) {
                    let theta = match policy {
                        PhasePolicy::Fixed { theta } => *theta,
                        PhasePolicy::UniformPerSegment => phase,
                    };
                    let y = sampler.sample(theta, &mut rng);
                    let delta = y - dot(f, row);
                    row.iter_mut().zip(f).for_each(|(x, w)| *x += delta * w);
                }
            }
            out.lock()
                .expect("phase buffer poisoned")
                .push((block, local));
        });
        out.into_inner().expect("phase buffer poisoned")
    };
    if tag_phase {
        for (block, local) in block_phases {
            let start = block * BLOCK;
            phases[start..start + local.len()].copy_from_slice(&local);
        }
    }
    SegmentSet::from_flat(grid, data, tag_phase.then_some(phases), true)
}

/// Modified Gram-Schmidt; fails when a vector is (numerically) in the span of
/// the previous ones.
fn gram_schmidt<'a>(vectors: impl Iterator<Item = &'a [f64]>) -> Result<Vec<Vec<f64>>> {
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for v in vectors {
        let mut r = v.to_vec();
        for b in &basis {
            let c = dot(b, &r);
            r.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
        }
        let norm = dot(&r, &r).sqrt();
        if norm < DEPENDENCE_TOL {
            return Err(Error::DependentModes(norm));
        }
        r.iter_mut().for_each(|x| *x /= norm);
        basis.push(r);
    }
    Ok(basis)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic;
    use crate::synth::LawKind;

    const GAMMA: f64 = 60e6;

    fn grid() -> SampleGrid {
        SampleGrid::centered(0.5e-9, 200).unwrap()
    }

    fn projection_stats(set: &SegmentSet, f: &TemporalMode) -> (f64, f64) {
        let xs: Vec<f64> = set.rows().map(|r| dot(r, f.weights())).collect();
        let m = xs.len() as f64;
        let m2 = xs.iter().map(|x| x * x).sum::<f64>() / m;
        let m4 = xs.iter().map(|x| x.powi(4)).sum::<f64>() / m;
        (m2, ((m4 - m2 * m2) / m).sqrt())
    }

    #[test]
    fn single_photon_projection_variance() {
        let g = grid();
        let phi = analytic::phi(GAMMA, &g).unwrap();
        let law = QuadratureLaw::fixed(LawKind::FockMarginal { n: 1 });
        let set = sample_mode_injected(g, &[(phi.clone(), law)], 20_000, 1).unwrap();
        let (v, se) = projection_stats(&set, &phi);
        assert!((v - 3.0).abs() < 3.0 * se, "{v} +- {se}");
        assert!(set.phases().is_none());
    }

    #[test]
    fn lossy_photon_projection_variance() {
        let g = grid();
        let phi = analytic::phi(GAMMA, &g).unwrap();
        let law = QuadratureLaw::fixed(LawKind::LossyFock { n: 1, eta: 0.79 });
        let set = sample_mode_injected(g, &[(phi.clone(), law)], 20_000, 2).unwrap();
        let (v, se) = projection_stats(&set, &phi);
        assert!((v - 2.58).abs() < 3.0 * se, "{v} +- {se}");
    }

    #[test]
    fn orthogonal_mode_stays_vacuum() {
        let g = grid();
        let (plus, minus) = analytic::psi_pm(GAMMA, 10e-9, &g).unwrap();
        let law = QuadratureLaw::fixed(LawKind::FockMarginal { n: 1 });
        let set = sample_mode_injected(g, &[(plus, law)], 20_000, 3).unwrap();
        let (v, se) = projection_stats(&set, &minus.unwrap());
        assert!((v - 1.0).abs() < 4.0 * se, "{v}");
    }

    #[test]
    fn empty_injection_is_vacuum() {
        let g = grid();
        let set = sample_mode_injected(g, &[], 2_000, 4).unwrap();
        let tol = 4.0 * (2.0 / (2_000.0 * 200.0f64)).sqrt();
        assert!((set.mean_square() - 1.0).abs() < tol);
    }

    #[test]
    fn dark_segments_dilute_the_state() {
        let g = grid();
        let phi = analytic::phi(GAMMA, &g).unwrap();
        let law = QuadratureLaw::fixed(LawKind::FockMarginal { n: 1 });
        let opts = InjectionOptions {
            dark_fraction: 0.25,
            ..InjectionOptions::default()
        };
        let set = sample_mode_injected_with(g, &[(phi.clone(), law)], 20_000, 5, opts).unwrap();
        let (v, se) = projection_stats(&set, &phi);
        assert!((v - 2.5).abs() < 4.0 * se, "{v}");
    }

    #[test]
    fn uniform_phase_is_recorded() {
        let g = grid();
        let phi = analytic::phi(GAMMA, &g).unwrap();
        let law = QuadratureLaw::phase_averaged(LawKind::VacuumGaussian);
        let set = sample_mode_injected(g, &[(phi, law)], 600, 6).unwrap();
        let p = set.phases().unwrap();
        assert_eq!(p.len(), 600);
        assert!(p.iter().all(|x| (0.0..std::f64::consts::TAU).contains(x)));
        assert!(p.windows(2).any(|w| w[0] != w[1]));
    }

    #[test]
    fn deterministic_across_policies() {
        let g = grid();
        let phi = analytic::phi(GAMMA, &g).unwrap();
        let law = QuadratureLaw::phase_averaged(LawKind::FockMarginal { n: 2 });
        let inj = [(phi, law)];
        let mk = |policy| {
            let opts = InjectionOptions {
                dark_fraction: 0.1,
                policy,
            };
            sample_mode_injected_with(g, &inj, 700, 7, opts).unwrap()
        };
        assert_eq!(mk(ExecPolicy::Sequential), mk(ExecPolicy::Parallel));
    }

    #[test]
    fn rejects_dependent_modes() {
        let g = grid();
        let phi = analytic::phi(GAMMA, &g).unwrap();
        let law = QuadratureLaw::fixed(LawKind::VacuumGaussian);
        let r = sample_mode_injected(
            g,
            &[(phi.clone(), law.clone()), (phi.negated(), law)],
            10,
            0,
        );
        assert!(matches!(r, Err(Error::DependentModes(_))));
    }
}
