//! Bessel functions of the first kind for moderate arguments, and their zeros.

use crate::error::{Error, Result};

/// Largest argument for which the power series keeps ~10 significant digits.
pub const MAX_ARG: f64 = 30.0;

/// J_n(x) by its power series, for 0 ≤ x ≤ [`MAX_ARG`].
pub fn jn(n: u32, x: f64) -> f64 {
    assert!(x.abs() <= MAX_ARG, "Bessel series used outside its range: x = {x}");
    let half = 0.5 * x;
    let mut term = 1.0;
    for k in 1..=n {
        term *= half / k as f64;
    }
    let q = -half * half;
    let mut sum = term;
    let mut k = 0u32;
    loop {
        k += 1;
        term *= q / (k as f64 * (k + n) as f64);
        sum += term;
        if term.abs() <= 1e-17 * sum.abs().max(1e-300) && k > 2 {
            break;
        }
        if k > 500 {
            break;
        }
    }
    sum
}

pub fn j0(x: f64) -> f64 {
    jn(0, x)
}

pub fn j1(x: f64) -> f64 {
    jn(1, x)
}

/// First `count` positive zeros of J_n, bracketed on a 0.05 grid and bisected.
pub fn jn_zeros(n: u32, count: usize) -> Result<Vec<f64>> {
    let mut zeros = Vec::with_capacity(count);
    let step = 0.05;
    let mut a = 1e-3 + if n > 0 { n as f64 } else { 0.0 } * 0.9;
    let mut fa = jn(n, a);
    while zeros.len() < count {
        let b = a + step;
        if b > MAX_ARG {
            return Err(Error::Numerical(format!("zero {} of J_{n} lies beyond the series range", zeros.len() + 1)));
        }
        let fb = jn(n, b);
        if fa * fb < 0.0 {
            zeros.push(bisect(|x| jn(n, x), a, b, 200));
        }
        a = b;
        fa = fb;
    }
    Ok(zeros)
}

/// Root of a continuous function with f(lo)·f(hi) < 0.
pub fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, iterations: usize) -> f64 {
    let flo = f(lo);
    for _ in 0..iterations {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if (f(mid) < 0.0) == (flo < 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_values() {
        assert!((j0(1.0) - 0.7651976865579666).abs() < 1e-15);
        assert!((j1(2.5) - 0.4970941024642741).abs() < 1e-15);
        assert!((jn(3, 7.0) + 0.16755558799533432).abs() < 1e-13);
        assert!((jn(2, 5.1) - 0.012139765876880471).abs() < 1e-13);
    }

    #[test]
    fn zeros() {
        let z0 = jn_zeros(0, 2).unwrap();
        assert!((z0[0] - 2.404825557695773).abs() < 1e-13);
        assert!((z0[1] - 5.520078110286311).abs() < 1e-13);
        let z1 = jn_zeros(1, 1).unwrap();
        assert!((z1[0] - 3.831705970207512).abs() < 1e-13);
    }
}
