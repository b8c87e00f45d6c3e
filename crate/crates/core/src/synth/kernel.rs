use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use super::{HeraldKind, HeraldScenario, OpoModel};
use crate::acf::KernelMatrix;
use crate::analytic;
use crate::error::{Error, Result};
use crate::signal::SampleGrid;

/// Discretized theoretical autocorrelation of the heralded field:
/// identity (vacuum) plus `2 eta' phi phi^T` per herald, plus the optional
/// stationary thermal term. `eta'` is the efficiency times the fraction of
/// true heralds, so the ideal scenario gives exactly `I + 2 phi phi^T`.
///
/// The thermal addend is `A pi gamma dt exp(-pi gamma |t_i - t_j|)`, the
/// sampled form of a continuum term whose integrated weight is `2A`
/// independent of the sampling rate.
pub fn analytic_kernel(
    model: &OpoModel,
    scenario: &HeraldScenario,
    grid: &SampleGrid,
) -> Result<KernelMatrix> {
    model.validate()?;
    scenario.validate()?;
    let n = grid.n_samples();
    let mut k = DMatrix::<f64>::identity(n, n);
    let weight = 2.0 * scenario.efficiency * (1.0 - scenario.dark_fraction);

    match scenario.kind {
        HeraldKind::Vacuum => {}
        HeraldKind::SinglePhoton => {
            let phi = analytic::phi(model.gamma, grid)?;
            let v = DVector::from_column_slice(phi.weights());
            k.ger(weight, &v, &v, 1.0);
        }
        HeraldKind::TwoPhoton => {
            if scenario.delta_t > grid.duration() {
                log::warn!(
                    "herald delay {:e} s exceeds the window {:e} s; second mode is truncated",
                    scenario.delta_t,
                    grid.duration()
                );
            }
            let a = analytic::phi(model.gamma, grid)?;
            let b = analytic::phi_centered(model.gamma, grid, -scenario.delta_t)?;
            for mode in [a, b] {
                let v = DVector::from_column_slice(mode.weights());
                k.ger(weight, &v, &v, 1.0);
            }
        }
        other => {
            return Err(Error::UnsupportedScenario(format!(
                "{other:?} has no closed-form kernel"
            )))
        }
    }

    if model.thermal_amplitude > 0.0 {
        let a = PI * model.gamma;
        let scale = model.thermal_amplitude * a * grid.dt();
        for j in 0..n {
            for i in 0..n {
                let tau = (i as f64 - j as f64).abs() * grid.dt();
                k[(i, j)] += scale * (-a * tau).exp();
            }
        }
    }
    KernelMatrix::new(*grid, k, 0)
}
