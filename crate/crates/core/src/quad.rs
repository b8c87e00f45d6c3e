//! Composite Gauss-Legendre quadrature.

/// 5-point nodes on `[-1, 1]`.
pub(crate) const GL_X: [f64; 5] = [
    0.0,
    -0.538_469_310_105_683_1,
    0.538_469_310_105_683_1,
    -0.906_179_845_938_664,
    0.906_179_845_938_664,
];
pub(crate) const GL_W: [f64; 5] = [
    0.568_888_888_888_888_9,
    0.478_628_670_499_366_5,
    0.478_628_670_499_366_5,
    0.236_926_885_056_189_1,
    0.236_926_885_056_189_1,
];

/// Integral of `f` over `[a, b]` with `panels` equal 5-point panels.
pub(crate) fn gauss_legendre(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    if b <= a {
        return 0.0;
    }
    let h = (b - a) / panels as f64;
    (0..panels)
        .map(|p| {
            let mid = a + h * (p as f64 + 0.5);
            GL_X.iter()
                .zip(GL_W)
                .map(|(x, w)| w * f(mid + 0.5 * h * x))
                .sum::<f64>()
                * 0.5
                * h
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_for_degree_nine() {
        let v = gauss_legendre(|x| x.powi(9) + x.powi(8), -1.0, 2.0, 1);
        let want = (2f64.powi(10) - 1.0) / 10.0 + (2f64.powi(9) + 1.0) / 9.0;
        assert!((v - want).abs() < 1e-11);
    }
}
