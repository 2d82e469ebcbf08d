//! Generalized symmetric eigenproblems K v = λ M v (K ⪰ 0, M ≻ 0).
//!
//! Small problems go to a dense Cholesky-reduced solver. Larger ones use a
//! thick-restart shift-invert Lanczos iteration in the M inner product whose
//! output is checked against Sylvester inertia counts; copies of multiple
//! eigenvalues that the Krylov space missed are recovered by re-running with
//! the found vectors locked.

use nalgebra::DMatrix;
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sparse::{axpy, dot, CsrMatrix, Ldl};
use crate::tolerances::Tolerances;

/// Which part of the spectrum to compute.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Target {
    /// The smallest eigenvalues.
    Lowest,
    /// The smallest eigenvalues strictly above the given value. Values within
    /// the cluster tolerance of it count as equal and are excluded.
    Above(f64),
    /// The eigenvalues closest to the given value.
    Nearest(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    Dense,
    Lanczos,
}

#[derive(Debug, Clone)]
pub struct Spectrum {
    /// Ascending eigenvalues.
    pub values: Vec<f64>,
    /// M-orthonormal eigenvectors, same order.
    pub vectors: Vec<Vec<f64>>,
    /// ‖Kv − λMv‖ / (‖Mv‖ max(1, |λ|)).
    pub residuals: Vec<f64>,
    /// Index groups of numerically equal eigenvalues (singletons included).
    pub clusters: Vec<Vec<usize>>,
    pub backend: Backend,
}

impl Spectrum {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Multiplicity of each eigenvalue.
    pub fn multiplicity(&self, i: usize) -> usize {
        self.clusters.iter().find(|c| c.contains(&i)).map_or(1, |c| c.len())
    }
}

const RITZ_TOL: f64 = 1e-12;
const SEED: u64 = 0x5eed_1a2c_05;

/// Computes `count` eigenpairs selected by `target`.
///
/// When the last selected eigenvalue belongs to a cluster, the whole cluster
/// is returned, so the result can hold more than `count` pairs.
pub fn solve(k: &CsrMatrix, m: &CsrMatrix, count: usize, target: Target, tol: &Tolerances) -> Result<Spectrum> {
    let n = k.n_rows();
    if count == 0 || count > n {
        return Err(Error::InvalidArgument(format!("cannot compute {count} eigenpairs of a problem with {n} unknowns")));
    }
    let (values, vectors, backend) = if n <= tol.dense_max_dofs {
        let (vals, vecs) = dense_all(k, m)?;
        let picked = select(&vals, count, target, tol.cluster_gap);
        (picked.iter().map(|&i| vals[i]).collect(), picked.iter().map(|&i| vecs[i].clone()).collect(), Backend::Dense)
    } else {
        let (v, x) = lanczos_verified(k, m, count, target, tol)?;
        (v, x, Backend::Lanczos)
    };
    finish(k, m, values, vectors, backend, tol)
}

/// Number of eigenvalues of K v = λ M v strictly below `x`, by inertia of K − xM.
pub fn count_below(k: &CsrMatrix, m: &CsrMatrix, x: f64) -> Result<usize> {
    let mut s = x;
    for attempt in 0..4 {
        match Ldl::factor(&k.add_scaled(-s, m)) {
            Ok(f) => return Ok(f.inertia().0),
            Err(Error::Singular { .. }) if attempt < 3 => s = x + 1e-10 * x.abs().max(1.0) * (attempt + 1) as f64,
            Err(e) => return Err(e),
        }
    }
    unreachable!()
}

/// Groups ascending values whose neighbours are within `gap·max(1, |λ|)`.
pub fn clusters(values: &[f64], gap: f64) -> Vec<Vec<usize>> {
    let mut out: Vec<Vec<usize>> = Vec::new();
    for (i, &v) in values.iter().enumerate() {
        match out.last_mut() {
            Some(c) if v - values[*c.last().unwrap()] <= gap * v.abs().max(1.0) => c.push(i),
            _ => out.push(vec![i]),
        }
    }
    out
}

fn finish(
    k: &CsrMatrix,
    m: &CsrMatrix,
    values: Vec<f64>,
    mut vectors: Vec<Vec<f64>>,
    backend: Backend,
    tol: &Tolerances,
) -> Result<Spectrum> {
    let mut residuals = Vec::with_capacity(values.len());
    for (lam, v) in values.iter().zip(vectors.iter_mut()) {
        fix_sign(v);
        let mv = m.mul_vec(v);
        let mut r = k.mul_vec(v);
        axpy(-lam, &mv, &mut r);
        let rel = crate::sparse::norm2(&r) / (crate::sparse::norm2(&mv) * lam.abs().max(1.0));
        if !(rel <= tol.eigen_residual) {
            return Err(Error::EigenNotConverged { converged: residuals.len(), wanted: values.len(), residual: rel });
        }
        residuals.push(rel);
    }
    let clusters = clusters(&values, tol.cluster_gap);
    Ok(Spectrum { values, vectors, residuals, clusters, backend })
}

/// Deterministic sign: the largest-magnitude entry (first on ties) is positive.
fn fix_sign(v: &mut [f64]) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() * (1.0 + 1e-9) {
            best = i;
        }
    }
    if v[best] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// Indices (ascending in value) picked from an ascending list.
fn select(vals: &[f64], count: usize, target: Target, gap: f64) -> Vec<usize> {
    let mut idx: Vec<usize> = match target {
        Target::Lowest => (0..vals.len()).collect(),
        Target::Above(s) => {
            let floor = s + gap * s.abs().max(1.0);
            (0..vals.len()).filter(|&i| vals[i] > floor).collect()
        }
        Target::Nearest(s) => {
            let mut v: Vec<usize> = (0..vals.len()).collect();
            v.sort_by(|&a, &b| (vals[a] - s).abs().total_cmp(&(vals[b] - s).abs()));
            v
        }
    };
    let mut take = count.min(idx.len());
    // complete a cluster cut by the count
    while take > 0 && take < idx.len() {
        let (a, b) = (vals[idx[take - 1]], vals[idx[take]]);
        if (a - b).abs() <= gap * a.abs().max(1.0) {
            take += 1;
        } else {
            break;
        }
    }
    idx.truncate(take);
    idx.sort_unstable();
    idx
}

/// All eigenpairs via M = LLᵀ and the symmetric matrix L⁻¹KL⁻ᵀ.
pub fn dense_all(k: &CsrMatrix, m: &CsrMatrix) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let n = k.n_rows();
    let kd = k.to_dense();
    let md = m.to_dense();
    let chol = md.cholesky().ok_or_else(|| Error::Numerical("mass matrix is not positive definite".into()))?;
    let l = chol.l();
    let x = l.solve_lower_triangular(&kd).ok_or_else(|| Error::Numerical("triangular solve failed".into()))?;
    let c = l
        .solve_lower_triangular(&x.transpose())
        .ok_or_else(|| Error::Numerical("triangular solve failed".into()))?;
    let c = (&c + c.transpose()) * 0.5;
    let eig = c.symmetric_eigen();
    let y = l
        .transpose()
        .solve_upper_triangular(&eig.eigenvectors)
        .ok_or_else(|| Error::Numerical("triangular solve failed".into()))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let vals = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vecs = order.iter().map(|&i| y.column(i).iter().copied().collect()).collect();
    Ok((vals, vecs))
}

struct ShiftInvert<'a> {
    a: CsrMatrix,
    m: &'a CsrMatrix,
    factor: Ldl,
    sigma: f64,
}

impl<'a> ShiftInvert<'a> {
    /// Factors K − σM, nudging σ upward when it sits on (or within roundoff
    /// distance of) an eigenvalue: a nearly singular factor would pollute
    /// every other direction of the operator.
    fn new(k: &CsrMatrix, m: &'a CsrMatrix, sigma: f64, rng: &mut ChaCha8Rng) -> Result<Self> {
        let unit = sigma.abs().max(1.0);
        let mut s = sigma;
        for attempt in 1..=6 {
            let a = k.add_scaled(-s, m);
            match Ldl::factor(&a) {
                Ok(factor) => {
                    let op = ShiftInvert { a, m, factor, sigma: s };
                    let v = random_start(m, &[], rng)?;
                    let x = op.apply(&v);
                    let y = op.apply(&x);
                    let theta = m_norm(m, &y) / m_norm(m, &x);
                    if theta.is_finite() && 1.0 / theta > 1e-6 * unit {
                        return Ok(op);
                    }
                }
                Err(Error::Singular { .. }) => {}
                Err(e) => return Err(e),
            }
            s = sigma + 1e-3 * unit * attempt as f64;
        }
        Err(Error::Numerical(format!("no usable shift near {sigma}")))
    }

    /// (K − σM)⁻¹ M v
    fn apply(&self, v: &[f64]) -> Vec<f64> {
        self.factor.solve_refined(&self.a, &self.m.mul_vec(v), 1)
    }

    fn lambda(&self, theta: f64) -> f64 {
        self.sigma + 1.0 / theta
    }
}

/// M-orthogonalizes `w` against `basis` (two passes); returns the coefficients.
fn orthogonalize(m: &CsrMatrix, basis: &[Vec<f64>], w: &mut [f64]) -> Vec<f64> {
    let mut coef = vec![0.0; basis.len()];
    for _ in 0..2 {
        let mw = m.mul_vec(w);
        for (c, v) in coef.iter_mut().zip(basis) {
            let h = dot(v, &mw);
            axpy(-h, v, w);
            *c += h;
        }
    }
    coef
}

fn m_norm(m: &CsrMatrix, v: &[f64]) -> f64 {
    m.bilinear(v, v).max(0.0).sqrt()
}

/// A pseudo-random unit vector M-orthogonal to `against`.
fn random_start(m: &CsrMatrix, against: &[&[Vec<f64>]], rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    let n = m.n_rows();
    for _ in 0..5 {
        let mut v: Vec<f64> = (0..n).map(|_| (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64 - 0.5).collect();
        let before = m_norm(m, &v);
        for b in against {
            orthogonalize(m, b, &mut v);
        }
        let nv = m_norm(m, &v);
        if nv > 1e-8 * before {
            v.iter_mut().for_each(|x| *x /= nv);
            return Ok(v);
        }
    }
    Err(Error::Numerical("could not extend the Krylov basis".into()))
}

/// Thick-restart Lanczos for the `want` best Ritz values of the shift-invert
/// operator under `score` (None = unwanted). Returns (θ, x) pairs.
///
/// Converged Ritz pairs are locked out of the Krylov space, wanted or not: an
/// unwanted θ near a pole of the shift would otherwise dominate the projected
/// matrix and spoil the accuracy of the rest.
fn lanczos(
    op: &ShiftInvert,
    want: usize,
    score: &dyn Fn(f64) -> Option<f64>,
    locked: &[Vec<f64>],
    max_restarts: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<(f64, Vec<f64>)>> {
    let m = op.m;
    let n = m.n_rows();
    if want + locked.len() > n {
        return Err(Error::InvalidArgument("more eigenpairs requested than unknowns".into()));
    }
    let mut done: Vec<(f64, Vec<f64>)> = Vec::new();
    let mut purged: Vec<Vec<f64>> = locked.to_vec();
    let mut basis: Vec<Vec<f64>> = vec![random_start(m, &[&purged], rng)?];
    let mut start = 0;
    let mut best_residual = f64::INFINITY;
    let mut diag: Vec<f64> = Vec::new();
    for _restart in 0..=max_restarts {
        let free = n - purged.len();
        let p = (2 * want + 20).max(30).min(free);
        let mut t = DMatrix::<f64>::zeros(p, p);
        for (i, &d) in diag.iter().enumerate() {
            t[(i, i)] = d;
        }
        let mut beta = 0.0;
        let mut next: Option<Vec<f64>> = None;
        for j in start..p {
            let mut w = op.apply(&basis[j]);
            let raw = m_norm(m, &w);
            orthogonalize(m, &purged, &mut w);
            let h = orthogonalize(m, &basis, &mut w);
            for (i, &hi) in h.iter().enumerate() {
                t[(i, j)] = hi;
                t[(j, i)] = hi;
            }
            beta = m_norm(m, &w);
            let v = if beta <= 1e-12 * raw {
                // invariant subspace: continue with a fresh direction, no coupling
                beta = 0.0;
                if basis.len() + purged.len() >= n {
                    break;
                }
                random_start(m, &[&purged, &basis], rng)?
            } else {
                w.iter_mut().for_each(|x| *x /= beta);
                w
            };
            if j + 1 < p {
                basis.push(v);
            } else {
                next = Some(v);
            }
        }
        let p = basis.len();
        let t = t.view((0, 0), (p, p)).into_owned();
        let eig = t.symmetric_eigen();
        let theta = |i: usize| eig.eigenvalues[i];
        let resid = |i: usize| (beta * eig.eigenvectors[(p - 1, i)]).abs();
        let conv = |i: usize| resid(i) <= RITZ_TOL * theta(i).abs();
        let combine = |i: usize| -> Vec<f64> {
            let mut x = vec![0.0; n];
            for (j, v) in basis.iter().enumerate() {
                axpy(eig.eigenvectors[(j, i)], v, &mut x);
            }
            x
        };
        let exhausted = next.is_none();
        let mut ranked: Vec<(usize, f64)> = (0..p).filter_map(|i| score(theta(i)).map(|s| (i, s))).collect();
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1));
        let remaining = want.saturating_sub(done.len());
        best_residual = ranked.iter().take(remaining).map(|&(i, _)| resid(i) / theta(i).abs()).fold(0.0f64, f64::max);

        let mut lock = vec![false; p];
        let mut scores: Vec<f64> = done.iter().map(|d| score(d.0).unwrap()).collect();
        for &(i, s) in &ranked {
            scores.sort_by(|a, b| b.total_cmp(a));
            if scores.len() >= want && s <= scores[want - 1] {
                break;
            }
            if exhausted || conv(i) {
                lock[i] = true;
                scores.push(s);
            }
        }
        let best_wanted = ranked.first().map_or(0.0, |&(i, _)| theta(i).abs());
        for i in 0..p {
            if score(theta(i)).is_none() && conv(i) && theta(i).abs() >= best_wanted {
                lock[i] = true;
            }
        }
        for i in 0..p {
            if lock[i] {
                let x = combine(i);
                if score(theta(i)).is_some() {
                    done.push((theta(i), x.clone()));
                }
                purged.push(x);
            }
        }
        if done.len() >= want {
            // a better unconverged candidate would outrank a locked one
            done.sort_by(|a, b| score(b.0).unwrap().total_cmp(&score(a.0).unwrap()));
            let worst = score(done[want - 1].0).unwrap();
            let pending = ranked.iter().any(|&(i, s)| !lock[i] && s > worst * (1.0 + 1e-12));
            if !pending || exhausted {
                done.truncate(want);
                return Ok(done);
            }
        }
        if exhausted {
            return Ok(done);
        }
        // restart: keep the best unlocked Ritz vectors plus the residual direction
        let free = n - purged.len();
        let p_next = (2 * want + 20).max(30).min(free);
        let keep = (want + (p_next.saturating_sub(want)) / 2).min(p_next.saturating_sub(1));
        let mut kept: Vec<usize> = ranked.iter().map(|&(i, _)| i).filter(|&i| !lock[i]).take(keep).collect();
        let floor = kept.iter().map(|&i| theta(i).abs()).fold(f64::INFINITY, f64::min);
        for i in 0..p {
            if kept.len() < keep && !lock[i] && score(theta(i)).is_none() && theta(i).abs() >= floor {
                kept.push(i);
            }
        }
        let mut new_basis: Vec<Vec<f64>> = kept.iter().map(|&i| combine(i)).collect();
        diag = kept.iter().map(|&i| theta(i)).collect();
        let mut nv = next.unwrap();
        // the residual direction is orthogonal to all Ritz vectors but must be
        // cleaned against the newly locked ones
        orthogonalize(m, &purged, &mut nv);
        let nn = m_norm(m, &nv);
        nv.iter_mut().for_each(|x| *x /= nn);
        new_basis.push(nv);
        start = new_basis.len() - 1;
        basis = new_basis;
    }
    Err(Error::EigenNotConverged { converged: done.len(), wanted: want, residual: best_residual })
}

/// Inertia-verified Lanczos: returns ascending values and vectors.
fn lanczos_verified(
    k: &CsrMatrix,
    m: &CsrMatrix,
    count: usize,
    target: Target,
    tol: &Tolerances,
) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let gap = tol.cluster_gap;
    let sigma = match target {
        Target::Lowest => {
            let d = k.diagonal();
            let md = m.diagonal();
            let scale = d.iter().zip(&md).fold(0.0f64, |a, (x, y)| a.max(x / y));
            -1e-5 * scale.max(1.0)
        }
        Target::Above(s) | Target::Nearest(s) => s,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(SEED ^ k.n_rows() as u64);
    let op = ShiftInvert::new(k, m, sigma, &mut rng)?;
    let floor = match target {
        Target::Above(s) => Some(s + gap * s.abs().max(1.0)),
        _ => None,
    };
    let sig = op.sigma;
    let score = move |theta: f64| -> Option<f64> {
        match target {
            Target::Lowest => (theta > 0.0).then_some(theta),
            Target::Above(_) => (theta > 0.0 && sig + 1.0 / theta > floor.unwrap()).then_some(theta),
            Target::Nearest(_) => Some(theta.abs()),
        }
    };
    let mut found: Vec<(f64, Vec<f64>)> = Vec::new();
    let mut want = count;
    for _round in 0..6 {
        let locked: Vec<Vec<f64>> = found.iter().map(|(_, v)| v.clone()).collect();
        let fresh = lanczos(&op, want, &score, &locked, tol.max_restarts, &mut rng)?;
        found.extend(fresh.into_iter().map(|(th, v)| (op.lambda(th), v)));
        found.sort_by(|a, b| a.0.total_cmp(&b.0));
        let vals: Vec<f64> = found.iter().map(|f| f.0).collect();
        let picked = select(&vals, count, target, gap);
        let (lo, hi) = window(&vals, &picked, target, gap);
        let expected = count_below(k, m, hi)? - if lo.is_finite() { count_below(k, m, lo)? } else { 0 };
        let inside = vals.iter().filter(|&&v| v > lo && v < hi).count();
        if expected == inside {
            let block: Vec<Vec<f64>> = picked.iter().map(|&i| found[i].1.clone()).collect();
            return polish(&op, k, m, &block);
        }
        if inside > expected {
            return Err(Error::Numerical(format!(
                "Lanczos returned {inside} eigenvalues in ({lo}, {hi}) but the inertia count is {expected}"
            )));
        }
        want = expected - inside;
    }
    Err(Error::EigenNotConverged { converged: found.len(), wanted: count, residual: f64::NAN })
}

/// One step of subspace inverse iteration followed by Rayleigh–Ritz on the
/// block. The Ritz test bounds the residual of the shift-invert operator;
/// mapped back to K − λM it is amplified by ‖K − σM‖, so high-frequency
/// error can survive on fine meshes. One application damps it by
/// |λ − σ|/|λ_far − σ|.
fn polish(op: &ShiftInvert, k: &CsrMatrix, m: &CsrMatrix, block: &[Vec<f64>]) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let y: Vec<Vec<f64>> = block.iter().map(|x| op.apply(x)).collect();
    let p = y.len();
    let ky: Vec<Vec<f64>> = y.iter().map(|v| k.mul_vec(v)).collect();
    let my: Vec<Vec<f64>> = y.iter().map(|v| m.mul_vec(v)).collect();
    let kp = DMatrix::from_fn(p, p, |i, j| 0.5 * (dot(&y[i], &ky[j]) + dot(&y[j], &ky[i])));
    let mp = DMatrix::from_fn(p, p, |i, j| 0.5 * (dot(&y[i], &my[j]) + dot(&y[j], &my[i])));
    let l = mp
        .cholesky()
        .ok_or_else(|| Error::Numerical("refined eigenvector block is linearly dependent".into()))?
        .l();
    let li = l.clone().try_inverse().ok_or_else(|| Error::Numerical("singular block Gram matrix".into()))?;
    let c = &li * kp * li.transpose();
    let c = 0.5 * (&c + c.transpose());
    let eig = c.symmetric_eigen();
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let coef = li.transpose() * &eig.eigenvectors;
    let n = k.n_rows();
    let mut values = Vec::with_capacity(p);
    let mut vectors = Vec::with_capacity(p);
    for &j in &order {
        let mut x = vec![0.0; n];
        for (i, v) in y.iter().enumerate() {
            axpy(coef[(i, j)], v, &mut x);
        }
        let nx = m_norm(m, &x);
        x.iter_mut().for_each(|t| *t /= nx);
        values.push(eig.eigenvalues[j]);
        vectors.push(x);
    }
    Ok((values, vectors))
}

/// Open interval that must contain exactly the picked eigenvalues (padded so
/// clusters at its ends are counted whole).
fn window(vals: &[f64], picked: &[usize], target: Target, gap: f64) -> (f64, f64) {
    let pad = |x: f64| gap * x.abs().max(1.0);
    let top = picked.iter().map(|&i| vals[i]).fold(f64::NEG_INFINITY, f64::max);
    let bottom = picked.iter().map(|&i| vals[i]).fold(f64::INFINITY, f64::min);
    match target {
        Target::Lowest => (f64::NEG_INFINITY, top + pad(top)),
        Target::Above(s) => (s + pad(s), top + pad(top)),
        Target::Nearest(s) => {
            let r = (top - s).abs().max((s - bottom).abs());
            (s - r - pad(s - r), s + r + pad(s + r))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplace_1d(n: usize) -> (CsrMatrix, CsrMatrix) {
        let h = 1.0 / (n + 1) as f64;
        let mut kt = Vec::new();
        let mut mt = Vec::new();
        for i in 0..n {
            kt.push((i, i, 2.0 / h));
            mt.push((i, i, 4.0 * h / 6.0));
            if i + 1 < n {
                kt.push((i, i + 1, -1.0 / h));
                kt.push((i + 1, i, -1.0 / h));
                mt.push((i, i + 1, h / 6.0));
                mt.push((i + 1, i, h / 6.0));
            }
        }
        (CsrMatrix::from_triplets(n, n, &kt), CsrMatrix::from_triplets(n, n, &mt))
    }

    fn exact_1d(n: usize, j: usize) -> f64 {
        let h = 1.0 / (n + 1) as f64;
        let c = (j as f64 * std::f64::consts::PI * h).cos();
        6.0 / (h * h) * (1.0 - c) / (2.0 + c)
    }

    #[test]
    fn lanczos_matches_closed_form() {
        let n = 900;
        let (k, m) = laplace_1d(n);
        let tol = Tolerances::default();
        let s = solve(&k, &m, 6, Target::Lowest, &tol).unwrap();
        assert_eq!(s.backend, Backend::Lanczos);
        for (j, v) in s.values.iter().enumerate() {
            assert!((v - exact_1d(n, j + 1)).abs() < 1e-9 * v, "{v}");
        }
        let above = solve(&k, &m, 3, Target::Above(exact_1d(n, 4)), &tol).unwrap();
        for (j, v) in above.values.iter().enumerate() {
            assert!((v - exact_1d(n, j + 5)).abs() < 1e-9 * v);
        }
        let near = solve(&k, &m, 2, Target::Nearest(0.5 * (exact_1d(n, 7) + exact_1d(n, 8)) + 1.0), &tol).unwrap();
        assert!((near.values[0] - exact_1d(n, 7)).abs() < 1e-9 * near.values[0]);
        assert!((near.values[1] - exact_1d(n, 8)).abs() < 1e-9 * near.values[1]);
    }

    #[test]
    fn dense_and_lanczos_agree() {
        let (k, m) = laplace_1d(400);
        let dense = solve(&k, &m, 5, Target::Lowest, &Tolerances::default()).unwrap();
        let tol = Tolerances { dense_max_dofs: 10, ..Tolerances::default() };
        let lz = solve(&k, &m, 5, Target::Lowest, &tol).unwrap();
        assert_eq!(dense.backend, Backend::Dense);
        for (a, b) in dense.values.iter().zip(&lz.values) {
            assert!((a - b).abs() < 1e-7 * a.abs().max(1.0));
        }
    }

    #[test]
    fn recovers_all_copies_of_a_double_eigenvalue() {
        // two uncoupled copies of the same chain: every eigenvalue is double
        let n = 350;
        let (k1, m1) = laplace_1d(n);
        let mut kt: Vec<_> = k1.triplets().collect();
        let mut mt: Vec<_> = m1.triplets().collect();
        kt.extend(k1.triplets().map(|(i, j, v)| (i + n, j + n, v)));
        mt.extend(m1.triplets().map(|(i, j, v)| (i + n, j + n, v)));
        let k = CsrMatrix::from_triplets(2 * n, 2 * n, &kt);
        let m = CsrMatrix::from_triplets(2 * n, 2 * n, &mt);
        let tol = Tolerances { dense_max_dofs: 10, ..Tolerances::default() };
        let s = solve(&k, &m, 4, Target::Lowest, &tol).unwrap();
        assert_eq!(s.len(), 4);
        assert_eq!(s.clusters, vec![vec![0, 1], vec![2, 3]]);
        assert!((s.values[3] - exact_1d(n, 2)).abs() < 1e-9 * s.values[3]);
    }

    #[test]
    fn inertia_count() {
        let (k, m) = laplace_1d(300);
        let x = 0.5 * (exact_1d(300, 3) + exact_1d(300, 4));
        assert_eq!(count_below(&k, &m, x).unwrap(), 3);
    }
}
