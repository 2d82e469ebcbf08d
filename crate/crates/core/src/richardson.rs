//! Richardson extrapolation and convergence-rate fits.

/// Limit estimate from values at h and h/2 assuming error ∝ h^order.
pub fn extrapolate(coarse: f64, fine: f64, order: f64) -> f64 {
    let r = 2f64.powf(order);
    fine + (fine - coarse) / (r - 1.0)
}

/// Componentwise [`extrapolate`].
pub fn extrapolate_all(coarse: &[f64], fine: &[f64], order: f64) -> Vec<f64> {
    coarse.iter().zip(fine).map(|(&c, &f)| extrapolate(c, f, order)).collect()
}

/// Observed order from values at h, h/2, h/4.
pub fn observed_order(v_h: f64, v_h2: f64, v_h4: f64) -> f64 {
    ((v_h - v_h2) / (v_h2 - v_h4)).abs().log2()
}

/// Least-squares slope of log|y| against log x.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.abs().ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn removes_quadratic_error() {
        let f = |h: f64| 3.0 + 0.7 * h * h;
        assert!((extrapolate(f(0.1), f(0.05), 2.0) - 3.0).abs() < 1e-14);
        assert!((observed_order(f(0.2), f(0.1), f(0.05)) - 2.0).abs() < 1e-10);
    }

    #[test]
    fn slope_of_power_law() {
        let x = [0.5, 0.25, 0.125];
        let y: Vec<f64> = x.iter().map(|e: &f64| 2.0 * e.powf(1.25)).collect();
        assert!((loglog_slope(&x, &y) - 1.25).abs() < 1e-12);
    }
}
