//! Acceptance suite: every check runs on synthetic data at its pinned size
//! and tolerance and reports pass or fail with the measured numbers.

use std::fmt;
use std::time::Instant;

use rand::Rng;
use serde::Serialize;

use crate::acf::{
    eigendecompose, estimate_acf, estimate_acf_with, mode_significance, AcfOptions, ModeBasis,
    DEFAULT_Z_THRESHOLD,
};
use crate::analytic::{self, herald_overlap_s, phi_continuous, predicted_kappas};
use crate::error::Result;
use crate::exec::ExecPolicy;
use crate::fock::apply_loss;
use crate::pipeline::{analyze_sets, calibrate_pair, sweep, synthesize, PipelineConfig};
use crate::quad::gauss_legendre;
use crate::rng::{streams, substream};
use crate::signal::{SampleGrid, SegmentSet, TemporalMode};
use crate::synth::{
    analytic_kernel, css_state_coefficients, css_state_law, detection_matrix, sample_mode_injected,
    DetectionModel, HeraldKind, HeraldScenario, LawKind, OpoModel, QuadratureLaw,
    QuadratureSampler,
};
use crate::tomography::{
    loss_correct_diagonal, maxlik_reconstruct, photon_distribution, project_ensemble,
    project_ensemble_with, wigner_point, MaxLikConfig, MaxLikResult, QuadratureSampleSet,
    DEFAULT_CSS_CUTOFF, DEFAULT_CUTOFF,
};

/// Base seed for every synthetic ensemble in the suite.
const SEED: u64 = 0x7e3a_5c01;
const GAMMA: f64 = 60e6;
const NS: f64 = 1e-9;

/// Identifiers and names of the acceptance criteria, in run order.
pub const CRITERIA: [(u8, &str); 7] = [
    (1, "vacuum baseline"),
    (2, "single-photon mode recovery"),
    (3, "analytic eigenstructure"),
    (4, "two-branch delay sweep"),
    (5, "tomography roundtrips"),
    (6, "detection filter"),
    (7, "property suites"),
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub label: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriterionReport {
    pub id: u8,
    pub name: String,
    pub passed: bool,
    pub checks: Vec<Check>,
    /// Diagnostics that are reported but not judged.
    pub notes: Vec<String>,
    pub elapsed_s: f64,
}

impl fmt::Display for CriterionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        writeln!(
            f,
            "[{tag}] {} {} ({:.1} s)",
            self.id, self.name, self.elapsed_s
        )?;
        for c in &self.checks {
            let mark = if c.passed { "ok" } else { "FAILED" };
            writeln!(f, "    {mark:6} {}: {}", c.label, c.detail)?;
        }
        for n in &self.notes {
            writeln!(f, "    note   {n}")?;
        }
        Ok(())
    }
}

struct Recorder {
    start: Instant,
    checks: Vec<Check>,
    notes: Vec<String>,
}

impl Recorder {
    fn new() -> Self {
        Recorder {
            start: Instant::now(),
            checks: Vec::new(),
            notes: Vec::new(),
        }
    }

    fn check(&mut self, label: impl Into<String>, passed: bool, detail: impl Into<String>) {
        self.checks.push(Check {
            label: label.into(),
            passed,
            detail: detail.into(),
        });
    }

    fn note(&mut self, n: impl Into<String>) {
        self.notes.push(n.into());
    }

    fn finish(self, id: u8) -> CriterionReport {
        let name = CRITERIA
            .iter()
            .find(|(i, _)| *i == id)
            .map_or("unknown", |(_, n)| n);
        CriterionReport {
            id,
            name: name.to_string(),
            passed: !self.checks.is_empty() && self.checks.iter().all(|c| c.passed),
            checks: self.checks,
            notes: self.notes,
            elapsed_s: self.start.elapsed().as_secs_f64(),
        }
    }
}

/// Runs one criterion by id.
pub fn run(id: u8) -> Result<CriterionReport> {
    match id {
        1 => vacuum_baseline(),
        2 => single_photon_recovery(),
        3 => analytic_eigenstructure(),
        4 => delay_sweep(),
        5 => tomography_roundtrips(),
        6 => detection_filter(),
        7 => property_suites(),
        _ => Err(crate::Error::InvalidInput(format!("no criterion {id}"))),
    }
}

/// Runs every criterion in order; an error inside one criterion is reported
/// as its failure and does not stop the rest.
pub fn run_all(mut on_report: impl FnMut(&CriterionReport)) -> Vec<CriterionReport> {
    CRITERIA
        .iter()
        .map(|&(id, name)| {
            let start = Instant::now();
            let report = run(id).unwrap_or_else(|e| CriterionReport {
                id,
                name: name.to_string(),
                passed: false,
                checks: vec![Check {
                    label: "run".into(),
                    passed: false,
                    detail: e.to_string(),
                }],
                notes: vec![],
                elapsed_s: start.elapsed().as_secs_f64(),
            });
            on_report(&report);
            report
        })
        .collect()
}

/// Marchenko-Pastur support of a white-noise sample covariance.
fn mp_edges(n_samples: usize, n_segments: usize) -> (f64, f64) {
    let q = (n_samples as f64 / n_segments as f64).sqrt();
    ((1.0 - q).powi(2), (1.0 + q).powi(2))
}

fn extremes(v: &[f64]) -> (f64, f64) {
    v.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
            (lo.min(x), hi.max(x))
        })
}

fn vacuum_basis(grid: SampleGrid, n: usize, seed: u64) -> Result<ModeBasis> {
    eigendecompose(&estimate_acf(&sample_mode_injected(grid, &[], n, seed)?)?)
}

fn vacuum_baseline() -> Result<CriterionReport> {
    let mut r = Recorder::new();
    let grid = SampleGrid::paper_window();
    let n = 50_000;
    let t = Instant::now();
    let basis = vacuum_basis(grid, n, SEED)?;
    let runtime = t.elapsed().as_secs_f64();
    let reference = vacuum_basis(grid, n, SEED + 1)?;
    let sig = mode_significance(&basis, &reference, DEFAULT_Z_THRESHOLD)?;

    let band = 5.0 * (2.0 / n as f64).sqrt();
    let (lo, hi) = extremes(basis.eigenvalues());
    let outside = basis
        .eigenvalues()
        .iter()
        .filter(|k| (**k - 1.0).abs() > band)
        .count();
    r.check(
        "all eigenvalues within 1 +- 5 sqrt(2/N)",
        outside == 0,
        format!(
            "range [{lo:.4}, {hi:.4}] vs [{:.4}, {:.4}]; {outside} of {} outside",
            1.0 - band,
            1.0 + band,
            basis.len()
        ),
    );
    r.check(
        "no significant modes",
        sig.n_significant == 0,
        format!("n_significant = {}", sig.n_significant),
    );
    r.check(
        "runtime under 2 min",
        runtime < 120.0,
        format!("{runtime:.1} s for synthesis, correlation and eigensolve"),
    );
    let (a, b) = mp_edges(grid.n_samples(), n);
    r.note(format!(
        "finite-ensemble spectrum support for n/N = {}: [{a:.3}, {b:.3}]",
        grid.n_samples() as f64 / n as f64
    ));
    Ok(r.finish(1))
}

fn base_config(kind: HeraldKind, n_segments: usize) -> PipelineConfig {
    let mut c = PipelineConfig::default();
    c.scenario.kind = kind;
    c.scenario.gamma_hz = GAMMA;
    c.n_segments = n_segments;
    c.seed = SEED;
    c
}

fn single_photon_recovery() -> Result<CriterionReport> {
    let mut r = Recorder::new();
    let c = base_config(HeraldKind::SinglePhoton, 50_000);
    let sim = synthesize(&c, 0.0)?;
    let (state, vac) = calibrate_pair(sim.state, sim.vacuum)?;
    let a = analyze_sets(&c, &state, &vac, 0.0)?;
    let k0 = a.state.eigenvalues()[0];
    let overlap = a.references[0].overlap;
    r.check(
        "exactly one significant mode",
        a.significance.n_significant == 1,
        format!("n_significant = {}", a.significance.n_significant),
    );
    r.check(
        "kappa_0 = 3 +- 0.05",
        (k0 - 3.0).abs() <= 0.05,
        format!("kappa_0 = {k0:.4}"),
    );
    r.check(
        "overlap with phi >= 0.99",
        overlap >= 0.99,
        format!("overlap = {overlap:.5}"),
    );
    r.note(format!(
        "kappa_1 = {:.4}; overlap loss from finite-ensemble mixing into {} bulk modes",
        a.state.eigenvalues()[1],
        a.state.len() - 1
    ));
    Ok(r.finish(2))
}

/// Numeric `int phi(t) phi(t + delta_t) dt`, split at the two cusps.
fn overlap_by_quadrature(gamma: f64, delta_t: f64) -> f64 {
    let reach = 60.0 / (std::f64::consts::PI * gamma);
    let mut knots = vec![-delta_t - reach, -delta_t, 0.0, reach];
    knots.dedup();
    let f = |t: f64| phi_continuous(gamma, t) * phi_continuous(gamma, t + delta_t);
    knots
        .windows(2)
        .map(|w| gauss_legendre(f, w[0], w[1], 400))
        .sum()
}

fn analytic_eigenstructure() -> Result<CriterionReport> {
    let mut r = Recorder::new();
    let grid = SampleGrid::paper_window();
    let model = OpoModel::new(GAMMA);
    for d in [0.0, 5.0, 10.0, 20.0, 40.0, 80.0] {
        let delta_t = d * NS;
        let scenario = HeraldScenario {
            kind: HeraldKind::TwoPhoton,
            delta_t,
            ..HeraldScenario::default()
        };
        let basis = eigendecompose(&analytic_kernel(&model, &scenario, &grid)?)?;
        let (pp, pm) = predicted_kappas(GAMMA, delta_t)?;
        let ev = basis.eigenvalues();
        let err = (ev[0] - pp).abs().max((ev[1] - pm).abs());
        r.check(
            format!("kernel eigenvalues at {d} ns"),
            err <= 1e-6,
            format!(
                "({:.8}, {:.8}) vs ({pp:.8}, {pm:.8}); error {err:.2e}",
                ev[0], ev[1]
            ),
        );
        let s = herald_overlap_s(GAMMA, delta_t)?;
        let q = overlap_by_quadrature(GAMMA, delta_t);
        r.check(
            format!("closed-form overlap at {d} ns"),
            (s - q).abs() <= 1e-8,
            format!("s = {s:.10}, quadrature {q:.10}"),
        );
    }
    Ok(r.finish(3))
}

fn delay_sweep() -> Result<CriterionReport> {
    let mut r = Recorder::new();
    let mut c = base_config(HeraldKind::TwoPhoton, 10_000);
    c.scenario.delta_t_sweep_s = vec![0.0, 10.0 * NS, 20.0 * NS, 40.0 * NS];
    let table = sweep(&c)?;
    let (lo, hi) = mp_edges(c.grid.n_samples, c.n_segments);
    for p in &table.measured {
        let d = p.delta_t_s / NS;
        let z0 = (p.kappa0 - p.predicted_plus) / p.kappa0_se;
        let z1 = (p.kappa1 - p.predicted_minus) / p.kappa1_se;
        r.check(
            format!("kappa_0 at {d} ns within 5 se"),
            z0.abs() <= 5.0,
            format!(
                "{:.4} vs {:.4} (se {:.4}, z {z0:+.2})",
                p.kappa0, p.predicted_plus, p.kappa0_se
            ),
        );
        r.check(
            format!("kappa_1 at {d} ns within 5 se"),
            z1.abs() <= 5.0,
            format!(
                "{:.4} vs {:.4} (se {:.4}, z {z1:+.2})",
                p.kappa1, p.predicted_minus, p.kappa1_se
            ),
        );
        for o in &p.overlaps {
            r.check(
                format!("mode {} vs {} at {d} ns", o.mode_index, o.reference),
                o.overlap >= 0.98,
                format!("overlap {:.4}", o.overlap),
            );
        }
        if d == 0.0 || d == 20.0 {
            let want = if d == 0.0 { 1 } else { 2 };
            r.check(
                format!("significant modes at {d} ns"),
                p.n_significant == want,
                format!("n_significant = {} (want {want})", p.n_significant),
            );
        }
    }
    r.note(format!(
        "white-noise eigenvalue spread at n/N = {}: [{lo:.3}, {hi:.3}]",
        c.grid.n_samples as f64 / c.n_segments as f64
    ));
    for a in &table.analytic {
        r.note(format!(
            "kernel eigenvalues at {} ns: ({:.4}, {:.4})",
            a.delta_t / NS,
            a.kappa0,
            a.kappa1
        ));
    }
    Ok(r.finish(4))
}

/// Grid for the tomography roundtrips; covers the single-photon mode to
/// better than 1e-6 while keeping 10^5 segments in memory.
fn tomography_grid() -> Result<SampleGrid> {
    SampleGrid::centered(0.5 * NS, 200)
}

fn inject_and_project(
    law: QuadratureLaw,
    n: usize,
    seed: u64,
) -> Result<(QuadratureSampleSet, SegmentSet)> {
    let grid = tomography_grid()?;
    let phi = analytic::phi(GAMMA, &grid)?;
    let set = sample_mode_injected(grid, &[(phi.clone(), law)], n, seed)?;
    Ok((project_ensemble(&set, &phi)?, set))
}

fn maxlik_note(r: &mut Recorder, what: &str, m: &MaxLikResult) {
    r.note(format!(
        "{what}: {} iterations, converged {}, monotone {}, physical iterates {}",
        m.iterations, m.converged, m.monotone, m.physical_iterates
    ));
}

fn tomography_roundtrips() -> Result<CriterionReport> {
    let mut r = Recorder::new();
    let n = 100_000;
    let ml = MaxLikConfig::default();

    // (a) lossy single photon
    let t = Instant::now();
    let (samples, _) = inject_and_project(
        QuadratureLaw::fixed(LawKind::LossyFock { n: 1, eta: 0.79 }),
        n,
        SEED,
    )?;
    let m = maxlik_reconstruct(&samples, DEFAULT_CUTOFF, &ml)?;
    let p = photon_distribution(&m.rho);
    let w0 = wigner_point(&m.rho, 0.0, 0.0);
    r.check(
        "(a) rho_11 = 0.79 +- 0.02",
        (p[1] - 0.79).abs() <= 0.02,
        format!("rho_11 = {:.4}", p[1]),
    );
    r.check("(a) W(0, 0) < 0", w0 < 0.0, format!("W(0, 0) = {w0:.5}"));
    r.check(
        "(a) under 5 min",
        t.elapsed().as_secs_f64() < 300.0,
        format!("{:.1} s", t.elapsed().as_secs_f64()),
    );
    maxlik_note(&mut r, "(a)", &m);

    // (b) two-photon component seen through a known loss
    let t = Instant::now();
    let intrinsic = [0.0, 0.27, 0.73];
    let eta = (0.49f64 / 0.73).sqrt();
    let measured = apply_loss(&intrinsic, eta);
    let (samples, _) = inject_and_project(
        QuadratureLaw::fixed(LawKind::FockMixture {
            populations: measured.clone(),
        }),
        n,
        SEED + 1,
    )?;
    let m = maxlik_reconstruct(&samples, DEFAULT_CUTOFF, &ml)?;
    let p = photon_distribution(&m.rho);
    let corrected = loss_correct_diagonal(&p, eta)?;
    r.check(
        "(b) rho_22 = 0.49 +- 0.02",
        (p[2] - 0.49).abs() <= 0.02,
        format!("rho_22 = {:.4} (injected {:.4})", p[2], measured[2]),
    );
    r.check(
        "(b) loss-corrected rho_22 = 0.73 +- 0.03",
        (corrected.exact[2] - 0.73).abs() <= 0.03,
        format!(
            "corrected rho_22 = {:.4} at eta = {eta:.4}{}",
            corrected.exact[2],
            if corrected.ill_conditioned {
                " (ill-conditioned)"
            } else {
                ""
            }
        ),
    );
    r.check(
        "(b) under 5 min",
        t.elapsed().as_secs_f64() < 300.0,
        format!("{:.1} s", t.elapsed().as_secs_f64()),
    );
    maxlik_note(&mut r, "(b)", &m);

    // (c) photon-subtracted squeezed vacuum with phase-tagged data
    let t = Instant::now();
    let truth: Vec<f64> = css_state_coefficients(3.0, DEFAULT_CSS_CUTOFF)?
        .iter()
        .map(|c| c * c)
        .collect();
    let (samples, _) = inject_and_project(css_state_law(3.0, DEFAULT_CSS_CUTOFF)?, n, SEED + 2)?;
    let m = maxlik_reconstruct(&samples, DEFAULT_CSS_CUTOFF, &ml)?;
    let p = photon_distribution(&m.rho);
    let odd: f64 = p.iter().skip(1).step_by(2).sum();
    r.check(
        "(c) odd photon numbers dominate",
        odd >= 0.9,
        format!("odd weight {odd:.4}"),
    );
    let nf = n as f64;
    // zero-probability entries have a degenerate multinomial bound; they get
    // the bound of a single count and are reported separately
    let mut worst = [(0usize, 0.0f64); 2];
    for (k, (got, want)) in p.iter().zip(&truth).enumerate() {
        let q = want.max(1.0 / nf);
        let z = (got - want).abs() / (q * (1.0 - q) / nf).sqrt();
        let slot = usize::from(*want < 1.0 / nf);
        if z > worst[slot].1 {
            worst[slot] = (k, z);
        }
    }
    for (slot, label) in ["non-zero", "zero"].iter().enumerate() {
        let (k, z) = worst[slot];
        r.check(
            format!("(c) {label} populations within 5 sigma multinomial bounds"),
            z <= 5.0,
            format!(
                "worst n = {k}: {:.5} vs {:.5} ({z:.1} sigma)",
                p[k], truth[k]
            ),
        );
    }
    r.check(
        "(c) under 5 min",
        t.elapsed().as_secs_f64() < 300.0,
        format!("{:.1} s", t.elapsed().as_secs_f64()),
    );
    r.note(format!(
        "(c) reconstructed p[0..6] = {:?}, target {:?}",
        p.iter()
            .take(6)
            .map(|x| format!("{x:.4}"))
            .collect::<Vec<_>>(),
        truth
            .iter()
            .take(6)
            .map(|x| format!("{x:.4}"))
            .collect::<Vec<_>>()
    ));
    maxlik_note(&mut r, "(c)", &m);
    Ok(r.finish(5))
}

fn detection_filter() -> Result<CriterionReport> {
    let mut r = Recorder::new();
    let lowpass = 2.0 * GAMMA;
    let mut c = base_config(HeraldKind::Vacuum, 50_000);
    c.scenario.lowpass_hz = Some(lowpass);
    let sim = synthesize(&c, 0.0)?;
    let (state, _) = calibrate_pair(sim.state, sim.vacuum)?;
    let basis = eigendecompose(&estimate_acf(&state)?)?;
    let ev = basis.eigenvalues();
    let below = ev.iter().filter(|k| **k < 1.0).count();
    r.check(
        "most eigenvalues roll off below 1",
        below * 2 >= ev.len(),
        format!("{below} of {} below 1", ev.len()),
    );
    let block = 50;
    let means: Vec<f64> = ev
        .chunks(block)
        .map(|b| b.iter().sum::<f64>() / b.len() as f64)
        .collect();
    let tail: Vec<f64> = means.iter().copied().skip_while(|m| *m >= 1.0).collect();
    let strictly = tail.windows(2).all(|w| w[1] < w[0]);
    r.check(
        "tail strictly decreasing in blocks of 50",
        strictly && tail.len() >= 2,
        format!(
            "block means {:?}",
            means.iter().map(|m| format!("{m:.3}")).collect::<Vec<_>>()
        ),
    );
    let last = ev[ev.len() - 1];
    r.check(
        "smallest eigenvalue below 0.1 of the largest",
        last < 0.1 * ev[0],
        format!("kappa_max = {:.4}, kappa_min = {last:.2e}", ev[0]),
    );
    let d = detection_matrix(&DetectionModel::lowpass(lowpass), state.grid())?;
    let exact = (&d * d.transpose()).symmetric_eigenvalues();
    let (lo, hi) = extremes(exact.as_slice());
    r.note(format!(
        "exact filtered-vacuum spectrum range [{lo:.2e}, {hi:.4}]"
    ));

    let mut c = base_config(HeraldKind::SinglePhoton, 50_000);
    c.scenario.lowpass_hz = Some(lowpass);
    let sim = synthesize(&c, 0.0)?;
    let (state, vac) = calibrate_pair(sim.state, sim.vacuum)?;
    let a = analyze_sets(&c, &state, &vac, 0.0)?;
    r.check(
        "filtered single photon has one significant mode",
        a.significance.n_significant == 1,
        format!("n_significant = {}", a.significance.n_significant),
    );
    r.check(
        "filtered single photon overlap with phi >= 0.95",
        a.references[0].overlap >= 0.95,
        format!("overlap = {:.4}", a.references[0].overlap),
    );
    Ok(r.finish(6))
}

fn draws(law: &QuadratureLaw, n: usize, seed: u64, tagged: bool) -> Result<QuadratureSampleSet> {
    let sampler = QuadratureSampler::new(law)?;
    let mut rng = substream(seed, streams::SINGLE_DRAW);
    let mut values = Vec::with_capacity(n);
    let mut phases = Vec::with_capacity(n);
    for _ in 0..n {
        let theta = if tagged {
            rng.random::<f64>() * std::f64::consts::TAU
        } else {
            0.0
        };
        values.push(sampler.sample(theta, &mut rng));
        phases.push(theta);
    }
    QuadratureSampleSet::new(values, tagged.then_some(phases))
}

fn property_suites() -> Result<CriterionReport> {
    let mut r = Recorder::new();
    let ml = MaxLikConfig::default();
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let laws: [(&str, QuadratureLaw, bool, usize); 5] = [
        (
            "vacuum",
            QuadratureLaw::fixed(LawKind::VacuumGaussian),
            false,
            DEFAULT_CUTOFF,
        ),
        (
            "lossy single photon",
            QuadratureLaw::fixed(LawKind::LossyFock { n: 1, eta: 0.79 }),
            false,
            DEFAULT_CUTOFF,
        ),
        (
            "photon-number mixture",
            QuadratureLaw::fixed(LawKind::FockMixture {
                populations: vec![0.2, 0.3, 0.5],
            }),
            false,
            DEFAULT_CUTOFF,
        ),
        (
            "phase-tagged superposition",
            QuadratureLaw::phase_averaged(LawKind::FockBasisState {
                coefficients: vec![h, h],
                theta: 0.0,
            }),
            true,
            DEFAULT_CUTOFF,
        ),
        (
            "phase-tagged squeezed subtraction",
            css_state_law(3.0, DEFAULT_CSS_CUTOFF)?,
            true,
            DEFAULT_CSS_CUTOFF,
        ),
    ];
    for (i, (name, law, tagged, cutoff)) in laws.iter().enumerate() {
        let samples = draws(law, 20_000, SEED + i as u64, *tagged)?;
        let m = maxlik_reconstruct(&samples, *cutoff, &ml)?;
        r.check(
            format!("likelihood monotone: {name}"),
            m.monotone,
            format!("{} iterations", m.iterations),
        );
        r.check(
            format!("iterates physical: {name}"),
            m.physical_iterates,
            "Hermitian, unit trace, PSD",
        );
    }

    let grid = SampleGrid::centered(NS, 100)?;
    let phi = analytic::phi(GAMMA, &grid)?;
    let law = QuadratureLaw::fixed(LawKind::LossyFock { n: 1, eta: 0.9 });
    let n = 20_000;
    let set = sample_mode_injected(grid, &[(phi, law)], n, SEED)?;
    let kernel = estimate_acf(&set)?;
    let basis = eigendecompose(&kernel)?;

    let modes = basis.modes();
    let mut ortho = 0.0f64;
    for (i, a) in modes.iter().enumerate() {
        for (j, b) in modes.iter().enumerate() {
            let want = if i == j { 1.0 } else { 0.0 };
            ortho = ortho.max((a.dot(b)? - want).abs());
        }
    }
    r.check(
        "eigenmodes orthonormal to 1e-6",
        ortho <= 1e-6,
        format!("max deviation {ortho:.2e}"),
    );
    let recon = (basis.reconstruct() - kernel.entries()).abs().max();
    r.check(
        "kernel reconstructed to 1e-6",
        recon <= 1e-6,
        format!("max deviation {recon:.2e}"),
    );
    let sum: f64 = basis.eigenvalues().iter().sum();
    let tr = kernel.trace();
    r.check(
        "eigenvalue sum equals trace",
        (sum - tr).abs() <= 1e-9 * tr,
        format!("sum {sum:.9}, trace {tr:.9}"),
    );

    let top = 5;
    let proj: Vec<Vec<f64>> = (0..top)
        .map(|k| project_ensemble(&set, basis.mode(k)).map(|s| s.values().to_vec()))
        .collect::<Result<_>>()?;
    let bound = 3.0 / (n as f64).sqrt();
    let mut worst = 0.0f64;
    for i in 0..top {
        for j in i + 1..top {
            let sij: f64 = proj[i].iter().zip(&proj[j]).map(|(a, b)| a * b).sum();
            let sii: f64 = proj[i].iter().map(|a| a * a).sum();
            let sjj: f64 = proj[j].iter().map(|a| a * a).sum();
            worst = worst.max((sij / (sii * sjj).sqrt()).abs());
        }
    }
    r.check(
        "projections onto distinct eigenmodes decorrelated",
        worst <= bound,
        format!("max |corr| {worst:.2e} vs {bound:.2e}"),
    );

    let q0 = kernel.quadratic_form(basis.mode(0))?;
    let mut rng = substream(SEED, streams::SINGLE_DRAW + 1);
    let mut best_random = f64::NEG_INFINITY;
    for _ in 0..100 {
        let w: Vec<f64> = (0..grid.n_samples())
            .map(|_| rng.random::<f64>() - 0.5)
            .collect();
        let m = TemporalMode::normalized(grid, w)?;
        best_random = best_random.max(kernel.quadratic_form(&m)?);
    }
    r.check(
        "top mode maximizes variance against 100 random modes",
        q0 >= best_random,
        format!("top {q0:.4}, best random {best_random:.4}"),
    );

    let c = {
        let mut c = base_config(HeraldKind::SinglePhoton, 2_000);
        c.grid.dt_s = NS;
        c.grid.n_samples = 100;
        c
    };
    let a = synthesize(&c, 0.0)?;
    let b = synthesize(&c, 0.0)?;
    r.check(
        "synthesis deterministic under a fixed seed",
        a.state == b.state && a.vacuum == b.vacuum,
        "two runs compared bitwise",
    );
    let opts = AcfOptions::default();
    let ks = estimate_acf_with(&set, opts, ExecPolicy::Sequential)?;
    let kp = estimate_acf_with(&set, opts, ExecPolicy::Parallel)?;
    let ps = project_ensemble_with(&set, basis.mode(0), ExecPolicy::Sequential)?;
    let pp = project_ensemble_with(&set, basis.mode(0), ExecPolicy::Parallel)?;
    r.check(
        "sequential and parallel policies agree bitwise",
        ks == kp && ps == pp,
        "correlation and projection compared",
    );
    Ok(r.finish(7))
}
