//! Sparse and dense solvers for `A z ≈ b`.
//!
//! * [`omp`]: orthogonal matching pursuit on the column-normalized matrix,
//!   mapped back to the original column scaling.
//! * [`qcbp`]: `min ‖z‖₁ s.t. ‖Az − b‖₂ ≤ η` by an adaptive primal-dual
//!   (Chambolle–Pock) iteration with a KKT-certified support refinement.
//! * [`least_squares`]: SVD-based minimum-norm least squares.

use std::collections::BTreeMap;

use ndarray::{Array1, Array2};
use ndarray_linalg::{FactorizeC, FactorizeCInto, LeastSquaresSvd, SolveC, UPLO};
use serde::{Deserialize, Serialize};

use crate::assembly::{matvec, matvec_adjoint, CollocationSystem};
use crate::error::{Error, Result};
use crate::spectral::CoefficientVector;
use crate::C64;

const ZERO: C64 = C64::new(0.0, 0.0);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Omp,
    Qcbp,
    Lsq,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Omp => "omp",
            Method::Qcbp => "qcbp",
            Method::Lsq => "lsq",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "omp" => Ok(Method::Omp),
            "qcbp" => Ok(Method::Qcbp),
            "lsq" | "ls" => Ok(Method::Lsq),
            other => Err(Error::Unknown {
                kind: "method",
                name: other.into(),
            }),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Solver-specific flags and numbers.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct Diagnostics {
    pub converged: bool,
    pub flags: Vec<String>,
    pub values: BTreeMap<String, f64>,
    /// OMP: residual norm after each iteration.
    pub residual_history: Vec<f64>,
    /// OMP: selected columns in selection order.
    pub selection_order: Vec<usize>,
}

impl Diagnostics {
    pub fn has_flag(&self, flag: &str) -> bool {
        self.flags.iter().any(|f| f == flag)
    }

    fn flag(&mut self, flag: &str) {
        if !self.has_flag(flag) {
            self.flags.push(flag.into());
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RecoveryResult {
    /// Spectral-basis coefficients in the original column scaling.
    pub coefficients: CoefficientVector,
    /// Indices of nonzero coefficients, ascending.
    pub support: Vec<usize>,
    /// `‖A ĉ − b‖₂`, recomputed from the returned coefficients.
    pub residual_norm: f64,
    pub iterations: usize,
    pub method: Method,
    pub diagnostics: Diagnostics,
}

fn norm(v: &[C64]) -> f64 {
    v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

fn l1(v: &[C64]) -> f64 {
    v.iter().map(|x| x.norm()).sum()
}

fn finish(
    system: &CollocationSystem,
    coefficients: CoefficientVector,
    iterations: usize,
    method: Method,
    diagnostics: Diagnostics,
) -> Result<RecoveryResult> {
    let r = system.residual(coefficients.as_slice().expect("contiguous"))?;
    let support = coefficients
        .iter()
        .enumerate()
        .filter(|(_, c)| **c != ZERO)
        .map(|(j, _)| j)
        .collect();
    Ok(RecoveryResult {
        residual_norm: norm(r.as_slice().expect("contiguous")),
        coefficients,
        support,
        iterations,
        method,
        diagnostics,
    })
}

/// Default OMP iteration count `m / 2` (at least one).
pub fn default_omp_iterations(m: usize) -> usize {
    (m / 2).max(1)
}

/// Orthogonal matching pursuit with `k` iterations.
///
/// Columns are normalized, the next index maximizes `|(A*(b − Az))_j|` over
/// unselected nonzero columns (ties to the lowest index), and the restricted
/// least-squares problem is updated by a reorthogonalized Gram–Schmidt QR.
/// Stops early once the residual vanishes to roundoff.
pub fn omp(system: &CollocationSystem, k: usize) -> Result<RecoveryResult> {
    if k == 0 {
        return Err(Error::InvalidArgument("OMP needs at least one iteration".into()));
    }
    let a = &system.matrix;
    let b = system.rhs.as_slice().expect("contiguous");
    let (m, n) = a.dim();
    let norms = system.column_norms();
    let mut diag = Diagnostics::default();
    let excluded: Vec<bool> = norms.iter().map(|&c| !(c > 0.0)).collect();
    let n_excluded = excluded.iter().filter(|&&e| e).count();
    if n_excluded > 0 {
        diag.flag("zero_columns_excluded");
        diag.values.insert("zero_columns".into(), n_excluded as f64);
    }

    let bnorm = norm(b);
    let mut r = b.to_vec();
    let mut selected = vec![false; n];
    let mut basis: Vec<Vec<C64>> = Vec::new();
    // R is stored by columns over independent selections
    let mut rcols: Vec<Vec<C64>> = Vec::new();
    let mut qtb: Vec<C64> = Vec::new();
    let mut independent: Vec<usize> = Vec::new();
    let mut dependent = false;
    let mut iterations = 0;

    for _ in 0..k {
        let rn = norm(&r);
        if rn == 0.0 || rn <= 1e-13 * bnorm {
            diag.flag("residual_vanished");
            break;
        }
        if basis.len() >= m {
            diag.flag("support_saturated");
            break;
        }
        let corr = matvec_adjoint(a, &r);
        let mut best = None;
        let mut best_score = 0.0;
        for j in 0..n {
            if excluded[j] || selected[j] {
                continue;
            }
            let s = corr[j].norm() / norms[j];
            if s > best_score {
                best_score = s;
                best = Some(j);
            }
        }
        let Some(j) = best else {
            diag.flag("no_admissible_column");
            break;
        };
        selected[j] = true;
        diag.selection_order.push(j);
        iterations += 1;

        let inv = 1.0 / norms[j];
        let mut v: Vec<C64> = a.column(j).iter().map(|x| x * inv).collect();
        let mut h = vec![ZERO; basis.len()];
        for _pass in 0..2 {
            for (q, hk) in basis.iter().zip(h.iter_mut()) {
                let c: C64 = q.iter().zip(&v).map(|(qi, vi)| qi.conj() * vi).sum();
                *hk += c;
                v.iter_mut().zip(q).for_each(|(vi, qi)| *vi -= c * qi);
            }
        }
        let rkk = norm(&v);
        if rkk <= 1e-10 {
            dependent = true;
            diag.flag("rank_deficient");
            diag.residual_history.push(norm(&r));
            continue;
        }
        v.iter_mut().for_each(|x| *x /= rkk);
        let alpha: C64 = v.iter().zip(&r).map(|(qi, ri)| qi.conj() * ri).sum();
        r.iter_mut().zip(&v).for_each(|(ri, qi)| *ri -= alpha * qi);
        h.push(C64::new(rkk, 0.0));
        rcols.push(h);
        qtb.push(alpha);
        basis.push(v);
        independent.push(j);
        diag.residual_history.push(norm(&r));
    }

    let mut coefficients = Array1::zeros(n);
    if dependent {
        // minimum-norm least squares on the full selected support
        let support = diag.selection_order.clone();
        let mut sub = Array2::zeros((m, support.len()));
        for (c, &j) in support.iter().enumerate() {
            let inv = 1.0 / norms[j];
            sub.column_mut(c).iter_mut().zip(a.column(j)).for_each(|(d, s)| *d = s * inv);
        }
        let sol = sub.least_squares(&system.rhs)?;
        for (c, &j) in support.iter().enumerate() {
            coefficients[j] = sol.solution[c] / norms[j];
        }
    } else {
        let s = independent.len();
        let mut z = qtb.clone();
        for i in (0..s).rev() {
            let mut acc = z[i];
            for c in i + 1..s {
                acc -= rcols[c][i] * z[c];
            }
            z[i] = acc / rcols[i][i];
        }
        for (c, &j) in independent.iter().enumerate() {
            coefficients[j] = z[c] / norms[j];
        }
    }
    diag.converged = true;
    diag.values.insert("solver_residual".into(), norm(&r));
    finish(system, coefficients, iterations, Method::Omp, diag)
}

/// Parameters of the QCBP solver.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QcbpParams {
    pub max_iterations: usize,
    /// Relative tolerance for constraint violation and the duality gap.
    pub tolerance: f64,
    /// Attempt the certified support refinement.
    pub polish: bool,
}

impl Default for QcbpParams {
    fn default() -> Self {
        Self {
            max_iterations: 20_000,
            tolerance: 1e-9,
            polish: true,
        }
    }
}

/// Largest singular value of `A` by power iteration on `A^H A`.
pub fn operator_norm(a: &Array2<C64>) -> f64 {
    let n = a.ncols();
    if n == 0 || a.nrows() == 0 {
        return 0.0;
    }
    let mut x: Vec<C64> = (0..n)
        .map(|j| C64::new(1.0 + (j % 7) as f64 * 0.1, (j % 3) as f64 * 0.05))
        .collect();
    let mut lambda = 0.0;
    for _ in 0..200 {
        let nx = norm(&x);
        if nx == 0.0 {
            return 0.0;
        }
        x.iter_mut().for_each(|v| *v /= nx);
        let y = matvec(a, &x);
        let z = matvec_adjoint(a, y.as_slice().expect("contiguous"));
        let next = norm(z.as_slice().expect("contiguous")).sqrt();
        x = z.to_vec();
        if (next - lambda).abs() <= 1e-10 * next {
            lambda = next;
            break;
        }
        lambda = next;
    }
    lambda
}

fn soft_threshold(v: C64, t: f64) -> C64 {
    let r = v.norm();
    if r <= t {
        ZERO
    } else {
        v * ((r - t) / r)
    }
}

/// Quadratically constrained basis pursuit,
/// `min ‖z‖₁ subject to ‖Az − b‖₂ ≤ η`.
///
/// Adaptive primal-dual hybrid gradient iterations, stopped on feasibility and
/// relative duality gap. Whenever the iterate's support settles, the KKT system
/// is solved on it and the result is returned if a dual certificate shows it
/// optimal (flag `certified`).
pub fn qcbp(system: &CollocationSystem, eta: f64, params: &QcbpParams) -> Result<RecoveryResult> {
    if !(eta >= 0.0) {
        return Err(Error::InvalidArgument("eta must be nonnegative".into()));
    }
    let a = &system.matrix;
    let b = system.rhs.as_slice().expect("contiguous");
    let (m, n) = a.dim();
    let bnorm = norm(b);
    let mut diag = Diagnostics::default();
    diag.values.insert("eta".into(), eta);
    if eta >= bnorm {
        diag.converged = true;
        diag.flag("zero_feasible");
        return finish(system, Array1::zeros(n), 0, Method::Qcbp, diag);
    }
    let lip = operator_norm(a) * 1.01;
    if lip == 0.0 {
        return Err(Error::InvalidArgument("matrix is identically zero".into()));
    }
    diag.values.insert("operator_norm".into(), lip / 1.01);
    let mut tau = 0.99 / lip;
    let mut sigma = 0.99 / lip;
    let mut alpha = 0.5;
    let feas_tol = params.tolerance * bnorm.max(1.0);

    let mut z = vec![ZERO; n];
    let mut y = vec![ZERO; m];
    // A z and A z̄, kept by linearity so each step costs one product each way
    let mut az = vec![ZERO; m];
    let mut azbar = vec![ZERO; m];
    let mut last_support: Vec<usize> = Vec::new();
    let mut stable_for = 0usize;
    let mut polish_attempts = 0usize;
    let mut next_polish = 0usize;
    let mut last_polish = 0usize;

    for it in 1..=params.max_iterations {
        // dual: y⁺ = v − σ P_B(v/σ), B = ball(b, η)
        let mut y_new = vec![ZERO; m];
        let mut w = vec![ZERO; m];
        for i in 0..m {
            w[i] = (y[i] + azbar[i] * sigma) / sigma - b[i];
        }
        let wn = norm(&w);
        let shrink = if wn > eta { eta / wn } else { 1.0 };
        for i in 0..m {
            let v = y[i] + azbar[i] * sigma;
            y_new[i] = v - (b[i] + w[i] * shrink) * sigma;
        }
        // primal: z⁺ = soft(z − τ A^H y⁺, τ)
        let aty = matvec_adjoint(a, &y_new);
        let mut z_new = vec![ZERO; n];
        for j in 0..n {
            z_new[j] = soft_threshold(z[j] - aty[j] * tau, tau);
        }
        let az_new = matvec(a, &z_new);

        // residual balancing of the step sizes
        let p_res = z
            .iter()
            .zip(&z_new)
            .map(|(p, q)| ((p - q) / tau).norm_sqr())
            .sum::<f64>()
            .sqrt();
        let d_res = (0..m)
            .map(|i| ((y[i] - y_new[i]) / sigma + azbar[i] - az_new[i]).norm_sqr())
            .sum::<f64>()
            .sqrt();
        if p_res > 2.0 * d_res {
            tau /= 1.0 - alpha;
            sigma *= 1.0 - alpha;
            alpha *= 0.95;
        } else if d_res > 2.0 * p_res {
            tau *= 1.0 - alpha;
            sigma /= 1.0 - alpha;
            alpha *= 0.95;
        }

        for i in 0..m {
            azbar[i] = az_new[i] * 2.0 - az[i];
        }
        z = z_new;
        y = y_new;
        az = az_new.to_vec();

        let objective = l1(&z);
        let resid: f64 = az.iter().zip(b).map(|(p, q)| (p - q).norm_sqr()).sum::<f64>().sqrt();
        let violation = (resid - eta).max(0.0);
        if violation <= feas_tol {
            // weak duality: D(y) = (−Re⟨y, b⟩ − η‖y‖) / max(1, ‖A^H y‖∞) ≤ ‖z*‖₁
            let scale = aty.iter().map(|v| v.norm()).fold(1.0, f64::max);
            let ydotb: f64 = y.iter().zip(b).map(|(p, q)| (p.conj() * q).re).sum();
            let dual = (-ydotb - eta * norm(&y)) / scale;
            let gap = (objective - dual) / objective.max(1e-300);
            if gap <= params.tolerance {
                if params.polish && !support_of(&z).is_empty() {
                    polish_attempts += 1;
                    if let Some(zp) = refine_support(a, b, eta, &z, &polish_seed(&z, m)) {
                        diag.converged = true;
                        diag.flag("certified");
                        diag.values.insert("polish_attempts".into(), polish_attempts as f64);
                        diag.values.insert("pdhg_objective".into(), objective);
                        return finish(system, Array1::from(zp), it, Method::Qcbp, diag);
                    }
                }
                diag.converged = true;
                diag.values.insert("violation".into(), violation);
                diag.values.insert("duality_gap".into(), gap);
                return finish(system, Array1::from(z), it, Method::Qcbp, diag);
            }
        }

        if params.polish {
            let support = support_of(&z);
            if support == last_support {
                stable_for += 1;
            } else {
                stable_for = 0;
                last_support = support;
            }
            let due = stable_for >= 10 || it >= last_polish + 250;
            if due && it >= next_polish && !last_support.is_empty() {
                polish_attempts += 1;
                last_polish = it;
                next_polish = it + (50 << polish_attempts.min(8));
                if let Some(zp) = refine_support(a, b, eta, &z, &polish_seed(&z, m)) {
                    diag.converged = true;
                    diag.flag("certified");
                    diag.values.insert("polish_attempts".into(), polish_attempts as f64);
                    diag.values.insert("pdhg_objective".into(), objective);
                    return finish(system, Array1::from(zp), it, Method::Qcbp, diag);
                }
            }
        }
    }
    diag.flag("max_iterations");
    diag.values.insert("polish_attempts".into(), polish_attempts as f64);
    finish(system, Array1::from(z), params.max_iterations, Method::Qcbp, diag)
}

fn support_of(z: &[C64]) -> Vec<usize> {
    (0..z.len()).filter(|&j| z[j] != ZERO).collect()
}

/// Support of `z`, cut to its largest entries when it cannot be a basic solution.
fn polish_seed(z: &[C64], m: usize) -> Vec<usize> {
    let mut seed = support_of(z);
    if seed.len() >= m {
        seed.sort_by(|&p, &q| z[q].norm().total_cmp(&z[p].norm()).then(p.cmp(&q)));
        seed.truncate(m * 9 / 10);
        seed.sort_unstable();
    }
    seed
}

enum Reduced {
    /// Optimal on the support, with `y` such that `A_S^H y = phase(z_S)`.
    Solved(Array1<C64>, Array1<C64>),
    /// Positions (within the support) whose coefficients cross zero.
    Drop(Vec<usize>),
    Failed,
}

/// Solves the KKT system of QCBP on a guessed support, correcting the support
/// from sign changes and the off-support dual certificate; returns `z` only
/// when the certificate holds.
fn refine_support(a: &Array2<C64>, b: &[C64], eta: f64, z0: &[C64], support0: &[usize]) -> Option<Vec<C64>> {
    let (m, n) = a.dim();
    let mut support: Vec<usize> = support0.to_vec();
    let mut start: Vec<C64> = support.iter().map(|&j| z0[j]).collect();
    let bvec = Array1::from(b.to_vec());
    let cert_tol = 1e-7;
    let seed_size = |start: &[C64]| 1e-2 * start.iter().map(|v| v.norm()).sum::<f64>() / start.len().max(1) as f64;

    let mut visited: Vec<Vec<usize>> = Vec::new();
    for _outer in 0..60 {
        let mut key = support.clone();
        key.sort_unstable();
        if visited.iter().filter(|v| **v == key).count() >= 3 {
            // the add/drop sequence is cycling
            return None;
        }
        visited.push(key);
        let s = support.len();
        if s == 0 || s >= m {
            return None;
        }
        let batch = (s / 20).max(1);
        let mut sub = Array2::<C64>::zeros((m, s));
        for (c, &j) in support.iter().enumerate() {
            sub.column_mut(c).assign(&a.column(j));
        }
        let gram = sub.t().mapv(|v| v.conj()).dot(&sub);
        let chol = gram.factorizec(UPLO::Upper).ok()?;
        let atb = sub.t().mapv(|v| v.conj()).dot(&bvec);
        let z_ls = chol.solvec(&atb).ok()?;
        let r_ls = sub.dot(&z_ls) - &bvec;
        let r_ls_norm = norm(r_ls.as_slice()?);
        if r_ls_norm > eta {
            // support too small: add the most correlated columns
            let corr = matvec_adjoint(a, r_ls.as_slice()?);
            let eps = seed_size(&start);
            for j in top_outside(&corr, &support, batch) {
                support.push(j);
                start.push(-corr[j] / corr[j].norm() * eps);
            }
            continue;
        }
        let outcome = if r_ls_norm >= eta * (1.0 - 1e-12) {
            // the feasible set on S is a single point
            least_squares_certificate(&sub, &chol, &z_ls)
        } else {
            let w0 = Array1::from_shape_fn(s, |c| {
                let v = if start[c] == ZERO { z_ls[c] } else { start[c] };
                if v == ZERO { C64::new(1.0, 0.0) } else { v / v.norm() }
            });
            let rho = (eta * eta - r_ls_norm * r_ls_norm).sqrt();
            match phase_fixed_point(&sub, &chol, &z_ls, &bvec, rho, w0) {
                Ok(solved) => solved,
                // its first step lands on the constraint boundary
                Err(z_init) => newton_on_support(&sub, &gram, &bvec, eta, z_init),
            }
        };
        match outcome {
            Reduced::Drop(cols) => {
                for &c in cols.iter().rev() {
                    support.remove(c);
                    start.remove(c);
                }
            }
            Reduced::Failed => return None,
            Reduced::Solved(zs, yv) => {
                let cert = matvec_adjoint(a, yv.as_slice()?);
                let worst = (0..n)
                    .filter(|j| !support.contains(j))
                    .map(|j| cert[j].norm())
                    .fold(0.0, f64::max);
                if worst <= 1.0 + cert_tol {
                    let mut z = vec![ZERO; n];
                    for (c, &j) in support.iter().enumerate() {
                        z[j] = zs[c];
                    }
                    return Some(z);
                }
                start = zs.to_vec();
                let eps = seed_size(&start);
                let violators: Vec<usize> = top_outside(&cert, &support, batch)
                    .into_iter()
                    .filter(|&j| cert[j].norm() > 1.0 + cert_tol)
                    .collect();
                for j in violators {
                    support.push(j);
                    start.push(cert[j] / cert[j].norm() * eps);
                }
            }
        }
    }
    None
}

/// The `k` columns outside `support` with the largest `|v_j|`.
fn top_outside(v: &Array1<C64>, support: &[usize], k: usize) -> Vec<usize> {
    let mut inside = vec![false; v.len()];
    support.iter().for_each(|&j| inside[j] = true);
    let mut cand: Vec<usize> = (0..v.len()).filter(|&j| !inside[j] && v[j] != ZERO).collect();
    cand.sort_by(|&p, &q| v[q].norm().total_cmp(&v[p].norm()).then(p.cmp(&q)));
    cand.truncate(k);
    cand
}

/// Dual certificate when `‖A_S z − b‖ ≤ η` pins `z` to the least-squares solution.
fn least_squares_certificate(
    sub: &Array2<C64>,
    chol: &ndarray_linalg::CholeskyFactorized<ndarray::OwnedRepr<C64>>,
    z_ls: &Array1<C64>,
) -> Reduced {
    if z_ls.iter().any(|v| *v == ZERO) {
        let zero: Vec<usize> = (0..z_ls.len()).filter(|&c| z_ls[c] == ZERO).collect();
        return Reduced::Drop(zero);
    }
    let w = z_ls.mapv(|v| v / v.norm());
    match chol.solvec(&w) {
        Ok(minv_w) => Reduced::Solved(z_ls.clone(), sub.dot(&minv_w)),
        Err(_) => Reduced::Failed,
    }
}

/// Iterates `z = z_LS − ρ M⁻¹w / √(w^H M⁻¹ w)`, `w = phase(z)`. Returns the
/// solution when the phases settle without a sign change, else the first
/// iterate.
fn phase_fixed_point(
    sub: &Array2<C64>,
    chol: &ndarray_linalg::CholeskyFactorized<ndarray::OwnedRepr<C64>>,
    z_ls: &Array1<C64>,
    b: &Array1<C64>,
    rho: f64,
    mut w: Array1<C64>,
) -> std::result::Result<Reduced, Array1<C64>> {
    let mut first = None;
    for _ in 0..50 {
        let minv_w = chol.solvec(&w).map_err(|_| z_ls.clone())?;
        let wmw: f64 = w.iter().zip(minv_w.iter()).map(|(p, q)| (p.conj() * q).re).sum();
        let scale = rho / wmw.sqrt();
        let z = z_ls - &minv_w.mapv(|v| v * scale);
        if first.is_none() {
            first = Some(z.clone());
        }
        let mut change = 0.0f64;
        for (c, v) in z.iter().enumerate() {
            let mag = v.norm();
            if mag == 0.0 || (v.conj() * w[c]).re <= 0.0 {
                return Err(first.expect("set above"));
            }
            let p = v / mag;
            change = change.max((p - w[c]).norm());
            w[c] = p;
        }
        if change <= 1e-12 {
            let lam = wmw.sqrt() / rho;
            let y = (sub.dot(&z) - b).mapv(|v| -v * lam);
            return Ok(Reduced::Solved(z, y));
        }
    }
    Err(first.expect("at least one step"))
}

/// Newton's method for `μ phase(z) + A^H(Az − b) = 0`, `‖Az − b‖ = η` in real
/// coordinates `(Re z, Im z, μ)`.
fn newton_on_support(sub: &Array2<C64>, gram: &Array2<C64>, b: &Array1<C64>, eta: f64, mut z: Array1<C64>) -> Reduced {
    let s = z.len();
    let residual = |z: &Array1<C64>| {
        let r = sub.dot(z) - b;
        let v = sub.t().mapv(|x| x.conj()).dot(&r);
        (norm(r.as_slice().expect("contiguous")), v)
    };
    let kkt = |z: &Array1<C64>, mu: f64, rn: f64, v: &Array1<C64>| -> f64 {
        let f1: f64 = z
            .iter()
            .zip(v)
            .map(|(zj, vj)| (zj / zj.norm() * mu + vj).norm_sqr())
            .sum();
        (f1 + (0.5 * (rn * rn - eta * eta)).powi(2)).sqrt()
    };
    let (mut rn, mut v) = residual(&z);
    let gg = s as f64;
    let gv: f64 = z.iter().zip(&v).map(|(zj, vj)| (zj.conj() / zj.norm() * vj).re).sum();
    let mut mu = -gv / gg;
    if z.iter().any(|v| *v == ZERO) {
        return Reduced::Failed;
    }
    if !(mu > 0.0) {
        mu = 1e-8 * v.iter().map(|x| x.norm()).fold(0.0, f64::max).max(1e-300);
    }
    for _it in 0..50 {
        let f1_norm = z
            .iter()
            .zip(&v)
            .map(|(zj, vj)| (zj / zj.norm() * mu + vj).norm_sqr())
            .sum::<f64>()
            .sqrt();
        if f1_norm <= 1e-8 * mu * gg.sqrt() && (rn - eta).abs() <= 1e-9 * eta {
            let y = (sub.dot(&z) - b).mapv(|x| -x / mu);
            return Reduced::Solved(z, y);
        }
        // bordered system [[K, g], [vᵀ, 0]] with K = μH + M symmetric positive definite
        let mut k = Array2::<f64>::zeros((2 * s, 2 * s));
        let mut g = Array1::<f64>::zeros(2 * s);
        let mut vr = Array1::<f64>::zeros(2 * s);
        let mut r1 = Array1::<f64>::zeros(2 * s);
        for p in 0..s {
            for q in 0..s {
                let e = gram[[p, q]];
                k[[p, q]] = e.re;
                k[[p, s + q]] = -e.im;
                k[[s + p, q]] = e.im;
                k[[s + p, s + q]] = e.re;
            }
        }
        for j in 0..s {
            let mag = z[j].norm();
            let (pr, pi) = (z[j].re / mag, z[j].im / mag);
            let h = mu / mag;
            k[[j, j]] += h * (1.0 - pr * pr);
            k[[j, s + j]] -= h * pr * pi;
            k[[s + j, j]] -= h * pr * pi;
            k[[s + j, s + j]] += h * (1.0 - pi * pi);
            g[j] = pr;
            g[s + j] = pi;
            vr[j] = v[j].re;
            vr[s + j] = v[j].im;
            r1[j] = -(mu * pr + v[j].re);
            r1[s + j] = -(mu * pi + v[j].im);
        }
        let r2 = -0.5 * (rn * rn - eta * eta);
        let Ok(kf) = k.factorizec_into(UPLO::Lower) else {
            return Reduced::Failed;
        };
        let (Ok(k_r1), Ok(k_g)) = (kf.solvec(&r1), kf.solvec(&g)) else {
            return Reduced::Failed;
        };
        let denom = vr.dot(&k_g);
        if denom == 0.0 || !denom.is_finite() {
            return Reduced::Failed;
        }
        let dmu = (vr.dot(&k_r1) - r2) / denom;
        let dx = k_r1 - &k_g.mapv(|x| x * dmu);
        let mut step = dx.to_vec();
        step.push(dmu);
        let dz = Array1::from_shape_fn(s, |j| C64::new(step[j], step[s + j]));
        let merit = kkt(&z, mu, rn, &v);
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let zn = &z + &dz.mapv(|x| x * t);
            let mun = mu + t * step[2 * s];
            let turns = zn.iter().zip(&z).any(|(p, q)| (p.conj() * q).re <= 0.0);
            if mun > 0.0 && !turns {
                let (rn2, v2) = residual(&zn);
                if kkt(&zn, mun, rn2, &v2) < (1.0 - 1e-4 * t) * merit {
                    z = zn;
                    mu = mun;
                    rn = rn2;
                    v = v2;
                    accepted = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if !accepted && merit <= 1e-6 * mu * gg.sqrt() {
            // stalled at round-off
            let y = (sub.dot(&z) - b).mapv(|x| -x / mu);
            return Reduced::Solved(z, y);
        }
        let reversing = (0..s).any(|j| (z[j].conj() * (z[j] + dz[j])).re < 0.0);
        if !accepted || (t < 1e-3 && reversing) {
            // the coefficient the step shrinks most leaves the support
            let j = (0..s)
                .map(|j| (j, (z[j].conj() * (z[j] + dz[j])).re / z[j].norm_sqr()))
                .filter(|&(_, shrink)| shrink < 1.0)
                .min_by(|p, q| p.1.total_cmp(&q.1))
                .map(|(j, _)| j);
            return match j {
                Some(j) => Reduced::Drop(vec![j]),
                None => Reduced::Failed,
            };
        }
    }
    if kkt(&z, mu, rn, &v) <= 1e-6 * mu * gg.sqrt() {
        let y = (sub.dot(&z) - b).mapv(|x| -x / mu);
        return Reduced::Solved(z, y);
    }
    Reduced::Failed
}

/// Minimum-norm least squares by SVD. Reports rank and conditioning.
pub fn least_squares(system: &CollocationSystem) -> Result<RecoveryResult> {
    let (m, n) = system.matrix.dim();
    let sol = system.matrix.least_squares(&system.rhs)?;
    let mut diag = Diagnostics::default();
    diag.converged = true;
    if m < n {
        diag.flag("underdetermined_min_norm");
    }
    let sv = &sol.singular_values;
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    let smin = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    diag.values.insert("rank".into(), sol.rank as f64);
    diag.values.insert("sigma_max".into(), smax);
    diag.values.insert("sigma_min".into(), smin);
    diag.values.insert("condition_number".into(), if smin > 0.0 { smax / smin } else { f64::INFINITY });
    if (sol.rank as usize) < m.min(n) {
        diag.flag("rank_deficient");
    }
    finish(system, sol.solution, 1, Method::Lsq, diag)
}

/// `η = ‖A c̃ − b‖₂` for reference coefficients `c̃`.
pub fn oracle_eta(system: &CollocationSystem, reference: &[C64]) -> Result<f64> {
    let r = system.residual(reference)?;
    Ok(norm(r.as_slice().expect("contiguous")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::{assemble, sample_collocation_points};
    use crate::index_set::IndexSet;
    use crate::problem::builtin_coefficient;
    use crate::spectral::TorusPoint;
    use rand::{Rng, SeedableRng};

    fn planted(m: usize, s: usize, seed: u64, coeff: &str) -> (CollocationSystem, Vec<C64>) {
        let set = IndexSet::hyperbolic_cross(2, 39).unwrap();
        let a = builtin_coefficient(coeff, 2).unwrap();
        let f = |_: &TorusPoint| Ok(ZERO);
        let mut sys = assemble(&a, &f, &set, sample_collocation_points(2, m, seed)).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
        let idx = rand::seq::index::sample(&mut rng, set.len(), s).into_vec();
        let mut c = vec![ZERO; set.len()];
        for j in idx {
            c[j] = C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5) * 10.0;
        }
        sys.rhs = matvec(&sys.matrix, &c);
        (sys, c)
    }

    fn err(a: &[C64], b: &[C64]) -> f64 {
        a.iter().zip(b).map(|(p, q)| (p - q).norm_sqr()).sum::<f64>().sqrt()
    }

    #[test]
    fn omp_zero_rhs_gives_zero() {
        let (mut sys, _) = planted(64, 5, 1, "a1");
        sys.rhs.fill(ZERO);
        let r = omp(&sys, 10).unwrap();
        assert!(r.coefficients.iter().all(|c| *c == ZERO));
        assert!(r.support.is_empty());
        assert_eq!(r.iterations, 0);
    }

    #[test]
    fn omp_recovers_planted_vector() {
        for seed in 0..5 {
            let (sys, c) = planted(128, 10, seed, "a1");
            let r = omp(&sys, 20).unwrap();
            assert!(err(r.coefficients.as_slice().unwrap(), &c) < 1e-10, "seed {seed}");
        }
    }

    #[test]
    fn omp_invariants() {
        let (sys, _) = planted(96, 30, 3, "a2");
        let r = omp(&sys, 40).unwrap();
        let order = &r.diagnostics.selection_order;
        let mut sorted = order.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), order.len());
        assert!(r.support.len() <= r.iterations);
        for w in r.diagnostics.residual_history.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-12));
        }
        assert!((r.residual_norm - r.diagnostics.values["solver_residual"]).abs() < 1e-8);
    }

    #[test]
    fn omp_normal_equations_each_iteration() {
        let (sys, _) = planted(80, 25, 4, "a2");
        for k in 1..=20 {
            let r = omp(&sys, k).unwrap();
            let res = sys.residual(r.coefficients.as_slice().unwrap()).unwrap();
            let g = matvec_adjoint(&sys.matrix, res.as_slice().unwrap());
            for &j in &r.support {
                assert!(g[j].norm() <= 1e-8, "k={k} j={j} {}", g[j].norm());
            }
        }
    }

    #[test]
    fn omp_excludes_zero_columns() {
        let (mut sys, _) = planted(64, 5, 2, "a1");
        sys.matrix.column_mut(3).fill(ZERO);
        let r = omp(&sys, 10).unwrap();
        assert!(r.diagnostics.has_flag("zero_columns_excluded"));
        assert_eq!(r.coefficients[3], ZERO);
    }

    #[test]
    fn qcbp_zero_when_eta_dominates() {
        let (sys, _) = planted(64, 5, 5, "a1");
        let bn = norm(sys.rhs.as_slice().unwrap());
        let r = qcbp(&sys, bn * 1.01, &QcbpParams::default()).unwrap();
        assert!(l1(r.coefficients.as_slice().unwrap()) <= 1e-8);
    }

    #[test]
    fn qcbp_recovers_planted_vector() {
        for seed in 0..3 {
            let (sys, c) = planted(128, 10, 10 + seed, "a1");
            let r = qcbp(&sys, 1e-10, &QcbpParams::default()).unwrap();
            assert!(err(r.coefficients.as_slice().unwrap(), &c) < 1e-6, "seed {seed}: {:?}", r.diagnostics);
            assert!(r.residual_norm <= 1e-10 + 1e-7);
        }
    }

    #[test]
    fn certified_polish_matches_long_pdhg() {
        // dense compressible target with noise: many active coefficients
        let (mut sys, _) = planted(300, 120, 5, "a2");
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        sys.rhs.iter_mut().for_each(|v| *v += C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5) * 1e-5);
        let eta = 1e-4;
        let fast = qcbp(&sys, eta, &QcbpParams::default()).unwrap();
        let slow = qcbp(
            &sys,
            eta,
            &QcbpParams {
                max_iterations: 20_000,
                tolerance: 1e-12,
                polish: false,
            },
        )
        .unwrap();
        assert!(fast.diagnostics.has_flag("certified"), "{:?}", fast.diagnostics);
        let (lf, ls) = (l1(fast.coefficients.as_slice().unwrap()), l1(slow.coefficients.as_slice().unwrap()));
        // the certified point is optimal, so PDHG can only approach it from above or infeasibly
        let slow_violation = (slow.residual_norm - eta).max(0.0);
        assert!(lf <= ls * (1.0 + 1e-9) || slow_violation > 0.0, "{lf} vs {ls}");
        assert!((lf - ls).abs() <= 1e-5 * ls, "{lf} vs {ls}");
        assert!(fast.residual_norm <= eta * (1.0 + 1e-9));
    }

    #[test]
    fn qcbp_not_worse_than_omp() {
        let (mut sys, _) = planted(100, 20, 21, "a2");
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        sys.rhs.iter_mut().for_each(|v| *v += C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5) * 1e-2);
        let o = omp(&sys, 50).unwrap();
        let eta = o.residual_norm * 1.0000001 + 1e-3;
        let q = qcbp(&sys, eta, &QcbpParams::default()).unwrap();
        let bn = norm(sys.rhs.as_slice().unwrap());
        assert!(q.residual_norm <= eta + 1e-7 * bn.max(1.0));
        assert!(l1(q.coefficients.as_slice().unwrap()) <= l1(o.coefficients.as_slice().unwrap()) + 1e-6);
    }

    #[test]
    fn least_squares_overdetermined_exact() {
        let set = IndexSet::hyperbolic_cross(2, 10).unwrap();
        let a = builtin_coefficient("a3", 2).unwrap();
        let f = |_: &TorusPoint| Ok(ZERO);
        let mut sys = assemble(&a, &f, &set, sample_collocation_points(2, 4 * set.len(), 3)).unwrap();
        let c: Vec<C64> = (0..set.len()).map(|j| C64::new(j as f64, -1.0)).collect();
        sys.rhs = matvec(&sys.matrix, &c);
        let r = least_squares(&sys).unwrap();
        assert!(err(r.coefficients.as_slice().unwrap(), &c) < 1e-10);
        assert!(!r.diagnostics.has_flag("underdetermined_min_norm"));
        let (small, _) = planted(32, 5, 1, "a1");
        let r = least_squares(&small).unwrap();
        assert!(r.diagnostics.has_flag("underdetermined_min_norm"));
    }

    #[test]
    fn operator_norm_matches_svd() {
        let (sys, _) = planted(50, 5, 7, "a2");
        let sv = sys.matrix.least_squares(&sys.rhs).unwrap().singular_values;
        let smax = sv.iter().cloned().fold(0.0, f64::max);
        assert!((operator_norm(&sys.matrix) - smax).abs() < 1e-6 * smax);
    }

    #[test]
    fn method_parsing() {
        assert_eq!("omp".parse::<Method>().unwrap(), Method::Omp);
        assert_eq!("lsq".parse::<Method>().unwrap(), Method::Lsq);
        assert!("foo".parse::<Method>().is_err());
    }
}
