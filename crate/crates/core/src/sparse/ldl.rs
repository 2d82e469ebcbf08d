//! Up-looking sparse LDLᵀ without pivoting.
//!
//! Works for the symmetric indefinite shifted operators K − σM that appear in
//! shift-invert iterations; the signs of D give the inertia (Sylvester).

use super::{nested_dissection, CsrMatrix};
use crate::error::{Error, Result};

const NONE: usize = usize::MAX;

#[derive(Debug, Clone)]
pub struct Ldl {
    n: usize,
    perm: Vec<usize>,
    lp: Vec<usize>,
    li: Vec<u32>,
    lx: Vec<f64>,
    d: Vec<f64>,
}

impl Ldl {
    pub fn factor(a: &CsrMatrix) -> Result<Ldl> {
        let perm = nested_dissection(a);
        Self::factor_with_ordering(a, perm)
    }

    pub fn factor_with_ordering(a: &CsrMatrix, perm: Vec<usize>) -> Result<Ldl> {
        let n = a.n_rows();
        assert_eq!(n, a.n_cols(), "LDL needs a square matrix");
        let mut iperm = vec![0usize; n];
        for (k, &p) in perm.iter().enumerate() {
            iperm[p] = k;
        }
        // Lower triangle of the permuted matrix, by rows: row k holds (j, v), j <= k.
        let mut trip = Vec::with_capacity(a.nnz() / 2 + n);
        for i in 0..n {
            for (j, v) in a.row(i) {
                let (pi, pj) = (iperm[i], iperm[j]);
                if pj <= pi {
                    trip.push((pi, pj, v));
                }
            }
        }
        let c = CsrMatrix::from_triplets(n, n, &trip);

        // Elimination tree and column counts.
        let mut parent = vec![NONE; n];
        let mut flag = vec![NONE; n];
        let mut lnz = vec![0usize; n];
        for k in 0..n {
            flag[k] = k;
            for (j, _) in c.row(k) {
                let mut i = j;
                while flag[i] != k {
                    if parent[i] == NONE {
                        parent[i] = k;
                    }
                    lnz[i] += 1;
                    flag[i] = k;
                    i = parent[i];
                }
            }
        }
        let mut lp = vec![0usize; n + 1];
        for k in 0..n {
            lp[k + 1] = lp[k] + lnz[k];
        }
        let total = lp[n];
        let mut li = vec![0u32; total];
        let mut lx = vec![0.0f64; total];
        let mut d = vec![0.0f64; n];

        let mut y = vec![0.0f64; n];
        let mut pattern = vec![0usize; n];
        lnz.iter_mut().for_each(|x| *x = 0);
        flag.iter_mut().for_each(|x| *x = NONE);
        for k in 0..n {
            let mut top = n;
            flag[k] = k;
            for (j, v) in c.row(k) {
                y[j] += v;
                let mut len = 0;
                let mut i = j;
                while flag[i] != k {
                    pattern[len] = i;
                    len += 1;
                    flag[i] = k;
                    i = parent[i];
                }
                while len > 0 {
                    top -= 1;
                    len -= 1;
                    pattern[top] = pattern[len];
                }
            }
            let mut dk = y[k];
            y[k] = 0.0;
            for &i in &pattern[top..n] {
                let yi = y[i];
                y[i] = 0.0;
                let p0 = lp[i];
                let p2 = p0 + lnz[i];
                for p in p0..p2 {
                    y[li[p] as usize] -= lx[p] * yi;
                }
                let l_ki = yi / d[i];
                dk -= l_ki * yi;
                li[p2] = k as u32;
                lx[p2] = l_ki;
                lnz[i] += 1;
            }
            if dk == 0.0 || !dk.is_finite() {
                return Err(Error::Singular { pivot: k });
            }
            d[k] = dk;
        }
        Ok(Ldl { n, perm, lp, li, lx, d })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz_l(&self) -> usize {
        self.lx.len()
    }

    /// (negative, positive) pivot counts: the inertia of the factored matrix.
    pub fn inertia(&self) -> (usize, usize) {
        let neg = self.d.iter().filter(|&&x| x < 0.0).count();
        (neg, self.n - neg)
    }

    /// Smallest |D_kk| relative to the largest, a cheap conditioning indicator.
    pub fn pivot_ratio(&self) -> f64 {
        let max = self.d.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let min = self.d.iter().fold(f64::INFINITY, |m, x| m.min(x.abs()));
        min / max
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        assert_eq!(b.len(), self.n);
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for j in 0..self.n {
            let xj = x[j];
            if xj != 0.0 {
                for p in self.lp[j]..self.lp[j + 1] {
                    x[self.li[p] as usize] -= self.lx[p] * xj;
                }
            }
        }
        for (xj, dj) in x.iter_mut().zip(&self.d) {
            *xj /= dj;
        }
        for j in (0..self.n).rev() {
            let mut s = x[j];
            for p in self.lp[j]..self.lp[j + 1] {
                s -= self.lx[p] * x[self.li[p] as usize];
            }
            x[j] = s;
        }
        let mut out = vec![0.0; self.n];
        for (k, &p) in self.perm.iter().enumerate() {
            out[p] = x[k];
        }
        out
    }

    /// Solve followed by `steps` rounds of iterative refinement against `a`.
    pub fn solve_refined(&self, a: &CsrMatrix, b: &[f64], steps: usize) -> Vec<f64> {
        let mut x = self.solve(b);
        for _ in 0..steps {
            let ax = a.mul_vec(&x);
            let r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
            let dx = self.solve(&r);
            x.iter_mut().zip(&dx).for_each(|(xi, di)| *xi += di);
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparse::norm2;

    fn laplace_1d(n: usize, shift: f64) -> CsrMatrix {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0 - shift));
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
                t.push((i + 1, i, -1.0));
            }
        }
        CsrMatrix::from_triplets(n, n, &t)
    }

    #[test]
    fn solves_spd_system() {
        let a = laplace_1d(500, 0.0);
        let b: Vec<f64> = (0..500).map(|i| (i as f64 * 0.37).sin()).collect();
        let f = Ldl::factor(&a).unwrap();
        let x = f.solve(&b);
        let r: Vec<f64> = a.mul_vec(&x).iter().zip(&b).map(|(u, v)| u - v).collect();
        assert!(norm2(&r) < 1e-10 * norm2(&b));
        assert_eq!(f.inertia(), (0, 500));
    }

    #[test]
    fn inertia_counts_eigenvalues_below_shift() {
        // eigenvalues 2 - 2cos(kπ/(n+1))
        let n = 200;
        let sigma = 1.3;
        let expected = (1..=n)
            .filter(|&k| 2.0 - 2.0 * (k as f64 * std::f64::consts::PI / (n as f64 + 1.0)).cos() < sigma)
            .count();
        let f = Ldl::factor(&laplace_1d(n, sigma)).unwrap();
        assert_eq!(f.inertia().0, expected);
    }

    #[test]
    fn indefinite_solve_with_refinement() {
        let a = laplace_1d(300, 1.7);
        let b = vec![1.0; 300];
        let f = Ldl::factor(&a).unwrap();
        let x = f.solve_refined(&a, &b, 2);
        let r: Vec<f64> = a.mul_vec(&x).iter().zip(&b).map(|(u, v)| u - v).collect();
        assert!(norm2(&r) < 1e-10 * norm2(&b));
    }

    #[test]
    fn zero_pivot_is_reported() {
        let a = CsrMatrix::from_triplets(2, 2, &[(0, 0, 0.0), (1, 1, 1.0)]);
        assert!(matches!(Ldl::factor(&a), Err(Error::Singular { .. })));
    }
}
