//! Invariants checked over randomly generated inputs.

use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::Rng;
use tempmode::acf::{eigendecompose, KernelMatrix};
use tempmode::analytic::{herald_overlap_s, mode_overlap, predicted_kappas};
use tempmode::exec::ExecPolicy;
use tempmode::fock::apply_loss;
use tempmode::io;
use tempmode::rng::substream;
use tempmode::signal::{project, QuadratureSegment, SampleGrid, SegmentSet, TemporalMode};
use tempmode::synth::{
    sample_mode_injected_with, InjectionOptions, LawKind, QuadratureLaw, QuadratureSampler,
};
use tempmode::tomography::{
    loss_correct_diagonal, maxlik_reconstruct, wigner, DensityMatrix, MaxLikConfig,
    QuadratureSampleSet, WignerGridSpec,
};

fn grid(n: usize) -> SampleGrid {
    SampleGrid::centered(1e-9, n).unwrap()
}

fn unit_mode(n: usize) -> impl Strategy<Value = TemporalMode> {
    prop::collection::vec(-1.0f64..1.0, n)
        .prop_filter("non-zero", |w| w.iter().map(|x| x * x).sum::<f64>() > 1e-3)
        .prop_map(move |w| TemporalMode::normalized(grid(n), w).unwrap())
}

fn distribution(dim: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..1.0, dim)
        .prop_filter("non-zero", |p| p.iter().sum::<f64>() > 1e-3)
        .prop_map(|p| {
            let s: f64 = p.iter().sum();
            p.into_iter().map(|x| x / s).collect()
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn projection_is_linear(
        x in prop::collection::vec(-5.0f64..5.0, 24),
        y in prop::collection::vec(-5.0f64..5.0, 24),
        a in -3.0f64..3.0,
        b in -3.0f64..3.0,
        mode in unit_mode(24),
    ) {
        let g = grid(24);
        let combo: Vec<f64> = x.iter().zip(&y).map(|(p, q)| a * p + b * q).collect();
        let seg = |v: Vec<f64>| QuadratureSegment::new(g, v, None).unwrap();
        let lhs = project(&seg(combo), &mode).unwrap();
        let rhs = a * project(&seg(x), &mode).unwrap() + b * project(&seg(y), &mode).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + lhs.abs()));
    }

    #[test]
    fn overlap_is_symmetric_and_bounded(f in unit_mode(16), g in unit_mode(16)) {
        let fg = mode_overlap(&f, &g).unwrap();
        let gf = mode_overlap(&g, &f).unwrap();
        prop_assert!((fg - gf).abs() < 1e-14);
        prop_assert!((0.0..=1.0 + 1e-12).contains(&fg));
        prop_assert!((mode_overlap(&f, &f).unwrap() - 1.0).abs() < 1e-12);
        prop_assert!((mode_overlap(&f, &f.negated()).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn loss_correction_inverts_loss(p in distribution(7)) {
        let lossy = apply_loss(&p, 0.7);
        let back = loss_correct_diagonal(&lossy, 0.7).unwrap();
        let err = back.exact.iter().zip(&p).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        prop_assert!(err <= 1e-9, "max error {err}");
        prop_assert!(!back.ill_conditioned);
    }

    #[test]
    fn eigendecomposition_invariants(entries in prop::collection::vec(-1.0f64..1.0, 12 * 12)) {
        let a = DMatrix::from_vec(12, 12, entries);
        let k = &a * a.transpose() + DMatrix::identity(12, 12);
        let kernel = KernelMatrix::new(grid(12), k.clone(), 100).unwrap();
        let basis = eigendecompose(&kernel).unwrap();
        let ev = basis.eigenvalues();
        prop_assert!(ev.windows(2).all(|w| w[0] >= w[1]));
        prop_assert!((ev.iter().sum::<f64>() - k.trace()).abs() < 1e-9 * k.trace());
        prop_assert!((basis.reconstruct() - &k).abs().max() < 1e-9);
        for (i, f) in basis.modes().iter().enumerate() {
            for (j, g) in basis.modes().iter().enumerate() {
                let want = if i == j { 1.0 } else { 0.0 };
                prop_assert!((f.dot(g).unwrap() - want).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn predicted_kappas_conserve_trace(delta_ns in 0.0f64..200.0) {
        let (plus, minus) = predicted_kappas(60e6, delta_ns * 1e-9).unwrap();
        prop_assert!((plus + minus - 6.0).abs() < 1e-12);
        prop_assert!(plus >= minus && minus >= 1.0);
        let s = herald_overlap_s(60e6, delta_ns * 1e-9).unwrap();
        let s_later = herald_overlap_s(60e6, (delta_ns + 1.0) * 1e-9).unwrap();
        prop_assert!(s_later < s && s <= 1.0);
    }

    #[test]
    fn segment_files_roundtrip(
        values in prop::collection::vec(-8.0f64..8.0, 5 * 20),
        phases in prop::option::of(prop::collection::vec(0.0f64..std::f64::consts::TAU, 5)),
        calibrated: bool,
    ) {
        let set = SegmentSet::from_flat(grid(20), values, phases, calibrated).unwrap();
        let mut buf = Vec::new();
        io::write_segments(&set, &mut buf).unwrap();
        prop_assert_eq!(io::read_segments(buf.as_slice()).unwrap(), set.clone());
        let mut csv = Vec::new();
        io::write_segments_csv(&set, &mut csv).unwrap();
        prop_assert_eq!(io::read_segments_csv(csv.as_slice()).unwrap(), set);
    }

    #[test]
    fn wigner_of_low_photon_mixtures_integrates_to_one(p in distribution(3)) {
        let rho = DensityMatrix::diagonal(&p).unwrap();
        let spec = WignerGridSpec { half_width: 6.0, step: 0.1 };
        let w = wigner(&rho, &spec).unwrap();
        prop_assert!((w.integral() - 1.0).abs() < 1e-4);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn synthesis_is_a_function_of_the_seed(seed: u64, dark in 0.0f64..0.5) {
        let g = grid(32);
        let mode = TemporalMode::from_fn(g, |t| (-(t * 1e8).powi(2)).exp()).unwrap();
        let law = QuadratureLaw::fixed(LawKind::LossyFock { n: 1, eta: 0.8 });
        let run = |policy| {
            let opts = InjectionOptions { dark_fraction: dark, policy };
            sample_mode_injected_with(g, &[(mode.clone(), law.clone())], 600, seed, opts).unwrap()
        };
        let seq = run(ExecPolicy::Sequential);
        prop_assert_eq!(&seq, &run(ExecPolicy::Parallel));
        prop_assert_eq!(&seq, &run(ExecPolicy::Sequential));
    }
}

fn tagged_draws(law: &QuadratureLaw, n: usize, seed: u64) -> QuadratureSampleSet {
    let sampler = QuadratureSampler::new(law).unwrap();
    let mut rng = substream(seed, 0);
    let phases: Vec<f64> = (0..n)
        .map(|_| rng.random::<f64>() * std::f64::consts::TAU)
        .collect();
    let values = phases
        .iter()
        .map(|&t| sampler.sample(t, &mut rng))
        .collect();
    QuadratureSampleSet::new(values, Some(phases)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn maxlik_iterates_stay_physical(
        c in prop::collection::vec(-1.0f64..1.0, 4)
            .prop_filter("non-zero", |c| c.iter().map(|x| x * x).sum::<f64>() > 1e-2),
        seed: u64,
    ) {
        let norm = c.iter().map(|x| x * x).sum::<f64>().sqrt();
        let coefficients: Vec<f64> = c.iter().map(|x| x / norm).collect();
        let law = QuadratureLaw::phase_averaged(LawKind::FockBasisState { coefficients, theta: 0.0 });
        let samples = tagged_draws(&law, 4000, seed);
        let config = MaxLikConfig { max_iterations: 300, ..MaxLikConfig::default() };
        let m = maxlik_reconstruct(&samples, 6, &config).unwrap();
        prop_assert!(m.monotone);
        prop_assert!(m.physical_iterates);
        prop_assert!(m.log_likelihood.windows(2).all(|w| w[1] >= w[0] - 1e-9 * w[0].abs()));
        prop_assert!(m.rho.min_eigenvalue() > -1e-9);
    }
}
