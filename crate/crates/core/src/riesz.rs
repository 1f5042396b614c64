//! Gram matrix of `{Φ_ν}`, spectral bounds and Riesz constants.
//!
//! The closed form follows the Fourier expansion of `a`; the quadrature
//! oracle integrates `Φ_ν conj(Φ_μ)` on a tensor grid and is exact for
//! band-limited coefficients once the grid resolves the product.

use std::collections::BTreeMap;

use ndarray::{Array1, Array2};
use ndarray_linalg::EigValsh;
use ndarray_linalg::UPLO;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::index_set::{IndexSet, MultiIndex};
use crate::problem::{CoefficientForm, DiffusionCoefficient};
use crate::rng::{stream, Purpose};
use crate::spectral::{phi_from_local, ExpTable, FOUR_PI_SQ, TWO_PI};
use crate::C64;

const ZERO: C64 = C64::new(0.0, 0.0);

/// `G_{νμ} = ⟨Φ_ν, Φ_μ⟩ = ∫ Φ_ν conj(Φ_μ)`, rows and columns in the order
/// of `index_set`.
#[derive(Clone, Debug)]
pub struct GramMatrix {
    pub entries: Array2<C64>,
    pub index_set: IndexSet,
    pub coefficient: String,
}

impl GramMatrix {
    pub fn len(&self) -> usize {
        self.entries.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `max |G − G*|`.
    pub fn hermitian_defect(&self) -> f64 {
        let n = self.len();
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in i..n {
                worst = worst.max((self.entries[[i, j]] - self.entries[[j, i]].conj()).norm());
            }
        }
        worst
    }

    /// Eigenvalues in ascending order (dense Hermitian solver on the lower
    /// triangle).
    pub fn eigenvalues(&self) -> Result<Array1<f64>> {
        if self.is_empty() {
            return Err(Error::Empty("gram matrix"));
        }
        Ok(self.entries.eigvalsh(UPLO::Lower)?)
    }

    /// `[λ_min, λ_max]`.
    pub fn spectral_interval(&self) -> Result<[f64; 2]> {
        let ev = self.eigenvalues()?;
        Ok([ev[0], ev[ev.len() - 1]])
    }

    /// `max |G_{νμ} − H_{νμ}|`.
    pub fn max_abs_difference(&self, other: &GramMatrix) -> Result<f64> {
        if self.entries.dim() != other.entries.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                actual: other.len(),
            });
        }
        Ok(self
            .entries
            .iter()
            .zip(other.entries.iter())
            .map(|(p, q)| (p - q).norm())
            .fold(0.0, f64::max))
    }

    /// `conj(z)ᵀ G z` for the conjugate vector, i.e. `‖Σ z_ν Φ_ν‖²`.
    pub fn quadratic_form(&self, z: &[C64]) -> f64 {
        let n = self.len();
        let mut acc = ZERO;
        for i in 0..n {
            let mut row = ZERO;
            for j in 0..n {
                row += self.entries[[i, j]] * z[j].conj();
            }
            acc += z[i] * row;
        }
        acc.re
    }
}

fn weight(tau: &MultiIndex, nu: &MultiIndex) -> f64 {
    1.0 + tau.dot(nu) / nu.norm_sq()
}

fn check_index_set(a: &DiffusionCoefficient, set: &IndexSet) -> Result<()> {
    if set.dim() != a.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            actual: set.dim(),
        });
    }
    if set.iter().any(MultiIndex::is_zero) {
        return Err(Error::ZeroIndex);
    }
    if set.is_empty() {
        return Err(Error::Empty("index set"));
    }
    Ok(())
}

/// Closed-form Gram matrix of a Fourier-sparse coefficient.
///
/// For each row `ν` and each pair `(τ, τ')` of coefficient indices the only
/// column reached is `μ = τ + ν − τ'`.
pub fn gram_closed_form(a: &DiffusionCoefficient, set: &IndexSet) -> Result<GramMatrix> {
    let terms = a
        .fourier_terms()
        .ok_or_else(|| Error::InvalidArgument(format!("`{}` is not Fourier-sparse", a.name())))?;
    check_index_set(a, set)?;
    let n = set.len();
    let rows: Vec<Vec<(usize, C64)>> = set
        .indices()
        .par_iter()
        .map(|nu| {
            let mut row = Vec::new();
            for (tau, e) in terms {
                let w_nu = weight(tau, nu);
                if w_nu == 0.0 {
                    continue;
                }
                let shifted = tau.add(nu);
                for (tau2, e2) in terms {
                    let mu = shifted.sub(tau2);
                    if let Some(j) = set.index_of(&mu) {
                        row.push((j, e * e2.conj() * (w_nu * weight(tau2, &mu))));
                    }
                }
            }
            row
        })
        .collect();
    let mut entries = Array2::from_elem((n, n), ZERO);
    for (i, row) in rows.into_iter().enumerate() {
        for (j, v) in row {
            entries[[i, j]] += v;
        }
    }
    Ok(GramMatrix {
        entries,
        index_set: set.clone(),
        coefficient: a.name().into(),
    })
}

/// Trapezoidal-rule Gram matrix on a `resolution^k` grid over the `k` axes
/// on which `a` depends.
///
/// Along every other axis the integrand is a pure exponential, so those
/// factors contribute `δ(ν_l, μ_l)` exactly.
pub fn gram_quadrature_oracle(
    a: &DiffusionCoefficient,
    set: &IndexSet,
    resolution: usize,
) -> Result<GramMatrix> {
    check_index_set(a, set)?;
    if resolution == 0 || !resolution.is_power_of_two() {
        return Err(Error::InvalidArgument(format!(
            "resolution {resolution} is not a power of two"
        )));
    }
    let active = a.active_dims();
    let lambda_max = active
        .iter()
        .flat_map(|&l| set.iter().map(move |nu| nu.components()[l].abs()))
        .max()
        .unwrap_or(0);
    let required = 2 * (lambda_max + a.max_frequency().unwrap_or(0)) as usize;
    if resolution <= required {
        return Err(Error::ResolutionTooCoarse { resolution, required });
    }
    let k = active.len() as u32;
    let points = resolution
        .checked_pow(k)
        .filter(|&p| p.saturating_mul(set.len()) <= 1 << 28)
        .ok_or_else(|| Error::InvalidArgument("quadrature grid too large".into()))?;
    let dim = a.dim();
    let n = set.len();
    let active_nu: Vec<Vec<(usize, i64)>> = set
        .iter()
        .map(|nu| {
            active
                .iter()
                .enumerate()
                .filter(|(_, &l)| nu.components()[l] != 0)
                .map(|(p, &l)| (p, nu.components()[l]))
                .collect()
        })
        .collect();
    let h = 1.0 / resolution as f64;

    let mut values = Array2::from_elem((points, n), ZERO);
    values
        .as_slice_mut()
        .expect("contiguous")
        .par_chunks_mut(n)
        .enumerate()
        .for_each(|(p, row)| {
            let mut x = vec![0.0; dim];
            let mut local = Vec::with_capacity(active.len());
            let mut rest = p;
            for &l in &active {
                x[l] = (rest % resolution) as f64 * h;
                local.push(x[l]);
                rest /= resolution;
            }
            let table = ExpTable::new(&local, lambda_max);
            let mut grad = vec![ZERO; dim];
            let value = a.value_and_gradient(&x, &mut grad);
            for (j, nu) in set.iter().enumerate() {
                let f = table.fourier(&active_nu[j]);
                row[j] = phi_from_local(value, &grad, nu.components(), nu.norm_sq(), f);
            }
        });

    let conj = values.mapv(|v| v.conj());
    let mut entries = values.t().dot(&conj);
    let scale = 1.0 / points as f64;
    let inactive: Vec<usize> = (0..dim).filter(|l| !active.contains(l)).collect();
    for i in 0..n {
        let nu = set.get(i).expect("in range").components();
        for j in 0..n {
            let mu = set.get(j).expect("in range").components();
            if inactive.iter().all(|&l| nu[l] == mu[l]) {
                entries[[i, j]] *= scale;
            } else {
                entries[[i, j]] = ZERO;
            }
        }
    }
    Ok(GramMatrix {
        entries,
        index_set: set.clone(),
        coefficient: a.name().into(),
    })
}

/// `[min_i (G_ii − R_i), max_i (G_ii + R_i)]` with `R_i = Σ_{j≠i} |G_ij|`.
pub fn gershgorin_interval(g: &Array2<C64>) -> [f64; 2] {
    let mut lower = f64::INFINITY;
    let mut upper = f64::NEG_INFINITY;
    for (i, row) in g.outer_iter().enumerate() {
        let radius: f64 = row
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .map(|(_, v)| v.norm())
            .sum();
        let center = row[i].re;
        lower = lower.min(center - radius);
        upper = upper.max(center + radius);
    }
    [lower, upper]
}

/// Analytic Riesz constants and the hypotheses they rest on.
#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq)]
pub struct RieszReport {
    pub proposition: String,
    pub coefficient: Option<String>,
    pub b_phi: f64,
    #[serde(rename = "B_phi")]
    pub upper_b_phi: f64,
    #[serde(rename = "K_phi")]
    pub k_phi: f64,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub gamma: Option<f64>,
    /// `γ` with the `√N` factor dropped.
    pub gamma_without_sqrt_n: Option<f64>,
    pub conditions: BTreeMap<String, bool>,
    pub conditions_hold: bool,
    pub index_set_size: Option<usize>,
    pub spectral_interval: Option<[f64; 2]>,
    pub gershgorin_interval: Option<[f64; 2]>,
    pub tail_estimation: Option<String>,
}

impl RieszReport {
    /// Attach the numerical spectrum and Gershgorin interval of `g`.
    pub fn with_spectrum(mut self, g: &GramMatrix) -> Result<Self> {
        self.spectral_interval = Some(g.spectral_interval()?);
        self.gershgorin_interval = Some(gershgorin_interval(&g.entries));
        self.index_set_size = Some(g.len());
        Ok(self)
    }

    /// `b_Φ − tol ≤ λ_min` and `λ_max ≤ B_Φ + tol`, when a spectrum is attached.
    pub fn sandwich_holds(&self, tol: f64) -> Option<bool> {
        self.spectral_interval
            .map(|[lo, hi]| self.b_phi - tol <= lo && hi <= self.upper_b_phi + tol)
    }
}

/// Constants for `a = e₀ + e_* F_{ν*}`.
pub fn prop1_constants(e0: C64, e_star: C64, nu_star: &MultiIndex) -> Result<RieszReport> {
    if nu_star.is_zero() {
        return Err(Error::ZeroIndex);
    }
    let e0 = e0.norm();
    let alpha = e_star.norm() * (2.0 * nu_star.norm() + 3.0);
    let hold = alpha < e0;
    let mut conditions = BTreeMap::new();
    conditions.insert("alpha_below_e0".to_string(), hold);
    Ok(RieszReport {
        proposition: "one_term_perturbation".into(),
        b_phi: e0 * e0 - e0 * alpha,
        upper_b_phi: (e0 + alpha / 2.0).powi(2),
        k_phi: e0 + alpha / 2.0,
        alpha: Some(alpha),
        conditions,
        conditions_hold: hold,
        ..Default::default()
    })
}

/// Norms of the remainder `a* = a − a_t`.
#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize, PartialEq)]
pub struct TailNorms {
    /// `|a*|_{H¹} = ‖∇a*‖_{L²}`.
    pub h1_seminorm: f64,
    pub l2: f64,
    pub linf: f64,
    /// `Σ_l ‖∂a*/∂x_l‖_{L∞}`.
    pub grad_linf_sum: f64,
}

impl TailNorms {
    fn is_valid(&self) -> bool {
        [self.h1_seminorm, self.l2, self.linf, self.grad_linf_sum]
            .iter()
            .all(|v| *v >= 0.0 && v.is_finite())
    }
}

/// `‖a_t‖²_{H¹} = Σ_τ (1 + 4π²‖τ‖²)|e_τ|²`.
pub fn h1_norm_sq(terms: &[(MultiIndex, C64)]) -> f64 {
    terms
        .iter()
        .map(|(tau, e)| (1.0 + FOUR_PI_SQ * tau.norm_sq()) * e.norm_sqr())
        .sum()
}

/// Constants for `a = a_t + a*` with `a_t` a `(t+1)`-term expansion and
/// index-set size `n`.
pub fn prop2_constants(
    a_t: &[(MultiIndex, C64)],
    t: usize,
    tail: &TailNorms,
    n: usize,
) -> Result<RieszReport> {
    if !tail.is_valid() {
        return Err(Error::InvalidArgument("tail norms must be nonnegative".into()));
    }
    let e0c = a_t
        .iter()
        .find(|(tau, _)| tau.is_zero())
        .map(|(_, e)| *e)
        .unwrap_or(ZERO);
    if e0c.im.abs() > 1e-12 || e0c.re < 0.0 {
        return Err(Error::InvalidArgument("constant term must be real and nonnegative".into()));
    }
    let nonconstant = a_t.iter().filter(|(tau, e)| !tau.is_zero() && *e != ZERO).count();
    if nonconstant > t {
        return Err(Error::InvalidArgument(format!(
            "a_t has {nonconstant} nonconstant terms but t = {t}"
        )));
    }
    let e0 = e0c.re;
    let h1 = h1_norm_sq(a_t);
    let beta = (t as f64 * (h1 - e0 * e0).max(0.0)).sqrt();
    let gamma = (n as f64).sqrt() / TWO_PI * tail.h1_seminorm + tail.l2;
    let gamma_without = tail.h1_seminorm / TWO_PI + tail.l2;
    let radicand = e0 * e0 - 2.0 * e0 * beta - beta * beta;
    let cond_beta = beta < (2f64.sqrt() - 1.0) * e0;
    let cond_gamma = radicand >= 0.0 && gamma <= radicand.sqrt();
    let lower_root = radicand.max(0.0).sqrt();
    let mut conditions = BTreeMap::new();
    conditions.insert("beta_bound".to_string(), cond_beta);
    conditions.insert("gamma_bound".to_string(), cond_gamma);
    Ok(RieszReport {
        proposition: "sparse_plus_tail".into(),
        b_phi: (lower_root - gamma).powi(2),
        upper_b_phi: ((h1 + 2.0 * e0 * beta + beta * beta).sqrt() + gamma).powi(2),
        k_phi: e0 + beta + tail.linf + tail.grad_linf_sum,
        beta: Some(beta),
        gamma: Some(gamma),
        gamma_without_sqrt_n: Some(gamma_without),
        conditions,
        conditions_hold: cond_beta && cond_gamma,
        index_set_size: Some(n),
        tail_estimation: Some("supplied".into()),
        ..Default::default()
    })
}

/// `c₀ + c_k ∏_l cos(2π k_l x_l)` expanded into `2^{‖k‖₀}` exponentials.
pub fn tensorized_cosine(dim: usize, c0: f64, ck: f64, k: &MultiIndex) -> Result<DiffusionCoefficient> {
    if k.dim() != dim || k.is_zero() || k.components().iter().any(|&v| v < 0) {
        return Err(Error::InvalidArgument("k must be a nonzero nonnegative index".into()));
    }
    let support: Vec<usize> = (0..dim).filter(|&l| k.components()[l] != 0).collect();
    let count = 1usize << support.len();
    let amp = ck / count as f64;
    let mut terms = vec![(MultiIndex::zero(dim), C64::new(c0, 0.0))];
    for mask in 0..count {
        let mut comps = k.components().to_vec();
        for (bit, &l) in support.iter().enumerate() {
            if mask >> bit & 1 == 1 {
                comps[l] = -comps[l];
            }
        }
        terms.push((MultiIndex::new(comps)?, C64::new(amp, 0.0)));
    }
    DiffusionCoefficient::fourier_sparse("tensorized_cosine", dim, terms, Some(c0 - ck.abs()))
}

/// Fourier coefficients of `a` on a `resolution^k` grid over its active axes,
/// embedded in `a.dim()` dimensions, for `|τ_l| < resolution/2`.
pub fn discrete_fourier_coefficients(
    a: &DiffusionCoefficient,
    resolution: usize,
) -> Result<Vec<(MultiIndex, C64)>> {
    if let Some(terms) = a.fourier_terms() {
        return Ok(terms.to_vec());
    }
    if resolution < 2 || !resolution.is_power_of_two() {
        return Err(Error::InvalidArgument(format!(
            "resolution {resolution} is not a power of two"
        )));
    }
    let active = a.active_dims();
    let k = active.len() as u32;
    let points = resolution
        .checked_pow(k)
        .filter(|&p| p <= 1 << 16)
        .ok_or_else(|| Error::InvalidArgument("too many active dimensions for the DFT".into()))?;
    let dim = a.dim();
    let h = 1.0 / resolution as f64;
    let coords = |mut p: usize| {
        let mut out = Vec::with_capacity(active.len());
        for _ in &active {
            out.push(p % resolution);
            p /= resolution;
        }
        out
    };
    let samples: Vec<(Vec<usize>, C64)> = (0..points)
        .map(|p| {
            let c = coords(p);
            let mut x = vec![0.0; dim];
            for (q, &l) in active.iter().enumerate() {
                x[l] = c[q] as f64 * h;
            }
            (c, a.value(&x))
        })
        .collect();
    let half = (resolution / 2) as i64;
    let freq = |c: usize| -> i64 {
        let c = c as i64;
        if c >= half {
            c - resolution as i64
        } else {
            c
        }
    };
    let out: Vec<(MultiIndex, C64)> = (0..points)
        .into_par_iter()
        .filter_map(|p| {
            let kc: Vec<i64> = coords(p).into_iter().map(freq).collect();
            if kc.iter().any(|v| v.abs() == half) {
                return None;
            }
            let mut acc = ZERO;
            for (c, v) in &samples {
                let ph: i64 = kc.iter().zip(c).map(|(kk, cc)| kk * *cc as i64).sum();
                let ph = (ph.rem_euclid(resolution as i64)) as f64 * h;
                acc += v * C64::cis(-TWO_PI * ph);
            }
            let mut comps = vec![0; dim];
            for (q, &l) in active.iter().enumerate() {
                comps[l] = kc[q];
            }
            Some((MultiIndex::new(comps).ok()?, acc / points as f64))
        })
        .collect();
    Ok(out)
}

/// Split `a` into `e₀` plus its `t` largest nonconstant Fourier terms and a
/// remainder, with remainder norms estimated numerically.
///
/// `L²` and `H¹` seminorms come from the discrete coefficients (Parseval);
/// the `L∞`-type norms from `samples` uniform points.
pub fn estimate_tail(
    a: &DiffusionCoefficient,
    t: usize,
    resolution: usize,
    samples: usize,
    seed: u64,
) -> Result<(Vec<(MultiIndex, C64)>, TailNorms, String)> {
    let mut coeffs = discrete_fourier_coefficients(a, resolution)?;
    let dim = a.dim();
    let zero = MultiIndex::zero(dim);
    let e0 = coeffs
        .iter()
        .find(|(tau, _)| tau.is_zero())
        .map(|(_, e)| *e)
        .unwrap_or(ZERO);
    coeffs.retain(|(tau, _)| !tau.is_zero());
    coeffs.sort_by(|p, q| q.1.norm().total_cmp(&p.1.norm()).then_with(|| p.0.cmp(&q.0)));
    let tail: Vec<_> = coeffs.split_off(t.min(coeffs.len()));
    let mut a_t = vec![(zero, C64::new(e0.re, 0.0))];
    a_t.extend(coeffs);
    let l2 = tail.iter().map(|(_, e)| e.norm_sqr()).sum::<f64>().sqrt();
    let h1 = tail
        .iter()
        .map(|(tau, e)| FOUR_PI_SQ * tau.norm_sq() * e.norm_sqr())
        .sum::<f64>()
        .sqrt();
    let mut rng = stream(seed, Purpose::Probe, &[t as u64, resolution as u64]);
    let mut linf = 0.0f64;
    let mut grad_linf = vec![0.0f64; dim];
    let mut grad = vec![ZERO; dim];
    for _ in 0..samples {
        let x: Vec<f64> = (0..dim).map(|_| rng.random::<f64>()).collect();
        let value = a.value_and_gradient(&x, &mut grad);
        let mut approx = ZERO;
        let mut approx_grad = vec![ZERO; dim];
        for (tau, e) in &a_t {
            let f = e * C64::cis(TWO_PI * tau.components().iter().zip(&x).map(|(k, v)| *k as f64 * v).sum::<f64>());
            approx += f;
            for l in 0..dim {
                approx_grad[l] += f * C64::new(0.0, TWO_PI * tau.components()[l] as f64);
            }
        }
        linf = linf.max((value - approx).norm());
        for l in 0..dim {
            grad_linf[l] = grad_linf[l].max((grad[l] - approx_grad[l]).norm());
        }
    }
    let norms = TailNorms {
        h1_seminorm: h1,
        l2,
        linf,
        grad_linf_sum: grad_linf.iter().sum(),
    };
    let method = format!(
        "discrete Fourier coefficients on a {resolution}-point grid per active axis; sup norms from {samples} random points"
    );
    Ok((a_t, norms, method))
}

/// Numerical spectrum of the Gram matrix plus whichever analytic constants
/// apply to `a`: the one-term bound for a single perturbation, otherwise the
/// sparse-plus-tail bound with `t` terms.
pub fn riesz_report(
    a: &DiffusionCoefficient,
    set: &IndexSet,
    t: Option<usize>,
    tail: Option<TailNorms>,
    seed: u64,
) -> Result<RieszReport> {
    let gram = match a.form() {
        CoefficientForm::FourierSparse { .. } => gram_closed_form(a, set)?,
        CoefficientForm::Callable { .. } => {
            let lambda_max = a
                .active_dims()
                .iter()
                .flat_map(|&l| set.iter().map(move |nu| nu.components()[l].abs()))
                .max()
                .unwrap_or(0);
            let resolution = (2 * lambda_max as usize + 32).next_power_of_two();
            gram_quadrature_oracle(a, set, resolution)?
        }
    };
    let report = match a.fourier_terms() {
        Some(terms) if tail.is_none() && t.is_none() => {
            let e0 = terms.iter().find(|(tau, _)| tau.is_zero()).map(|(_, e)| *e);
            let rest: Vec<_> = terms.iter().filter(|(tau, _)| !tau.is_zero()).collect();
            match (e0, rest.as_slice()) {
                (Some(e0), [(nu_star, e_star)]) => prop1_constants(e0, *e_star, nu_star)?,
                (Some(e0), []) => prop1_constants(e0, ZERO, &MultiIndex::axis(a.dim(), 0, 1))?,
                _ => {
                    let real_terms = real_constant(terms);
                    prop2_constants(&real_terms, rest.len(), &TailNorms::default(), set.len())?
                }
            }
        }
        _ => {
            let t = t.unwrap_or(8);
            let (a_t, norms, method) = match tail {
                Some(norms) => {
                    let (a_t, _, _) = estimate_tail(a, t, 32, 0, seed)?;
                    (a_t, norms, "supplied".to_string())
                }
                None => estimate_tail(a, t, 32, 100_000, seed)?,
            };
            let mut r = prop2_constants(&a_t, t, &norms, set.len())?;
            r.tail_estimation = Some(method);
            r
        }
    };
    let mut report = report.with_spectrum(&gram)?;
    report.coefficient = Some(a.name().into());
    Ok(report)
}

fn real_constant(terms: &[(MultiIndex, C64)]) -> Vec<(MultiIndex, C64)> {
    terms
        .iter()
        .map(|(tau, e)| {
            if tau.is_zero() {
                (tau.clone(), C64::new(e.re, 0.0))
            } else {
                (tau.clone(), *e)
            }
        })
        .collect()
}

/// `δ_s` of `A/√B_Φ`, exhaustive over all `s`-column subsets.
pub fn empirical_rip_constant(a: &Array2<C64>, s: usize, b_phi_upper: f64) -> Result<f64> {
    const BUDGET: u128 = 1_000_000;
    let n = a.ncols();
    if s == 0 || s > n {
        return Err(Error::InvalidArgument(format!("sparsity {s} outside 1..={n}")));
    }
    if !(b_phi_upper > 0.0) {
        return Err(Error::InvalidArgument("upper Riesz constant must be positive".into()));
    }
    let subsets = binomial(n as u128, s as u128);
    if subsets > BUDGET {
        return Err(Error::BudgetExceeded { subsets, budget: BUDGET });
    }
    let gram = a.t().mapv(|v| v.conj()).dot(a) / C64::new(b_phi_upper, 0.0);
    let mut combos = Vec::with_capacity(subsets as usize);
    let mut idx: Vec<usize> = (0..s).collect();
    loop {
        combos.push(idx.clone());
        let mut i = s;
        while i > 0 && idx[i - 1] == n - s + i - 1 {
            i -= 1;
        }
        if i == 0 {
            break;
        }
        idx[i - 1] += 1;
        for j in i..s {
            idx[j] = idx[j - 1] + 1;
        }
    }
    combos
        .par_iter()
        .map(|cols| -> Result<f64> {
            let sub = Array2::from_shape_fn((s, s), |(i, j)| gram[[cols[i], cols[j]]]);
            let ev = sub.eigvalsh(UPLO::Lower)?;
            Ok((ev[s - 1] - 1.0).max(1.0 - ev[0]))
        })
        .try_reduce(|| 0.0, |p, q| Ok(p.max(q)))
}

fn binomial(n: u128, k: u128) -> u128 {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.saturating_mul(n - i) / (i + 1);
    }
    acc
}

/// Outcome of [`riesz_sandwich_check`].
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct SandwichReport {
    pub passed: bool,
    pub trials: usize,
    /// Smallest observed `‖Σ z_ν Φ_ν‖² / ‖z‖²`.
    pub min_ratio: f64,
    /// Largest observed ratio.
    pub max_ratio: f64,
}

/// Random complex `z` against `b_Φ‖z‖² ≤ ‖Σ z_ν Φ_ν‖² ≤ B_Φ‖z‖²`, plus all
/// unit vectors.
pub fn riesz_sandwich_check(
    g: &GramMatrix,
    b_phi: f64,
    upper_b_phi: f64,
    trials: usize,
    seed: u64,
) -> SandwichReport {
    const TOL: f64 = 1e-9;
    let n = g.len();
    let mut min_ratio = f64::INFINITY;
    let mut max_ratio = f64::NEG_INFINITY;
    for i in 0..n {
        let d = g.entries[[i, i]].re;
        min_ratio = min_ratio.min(d);
        max_ratio = max_ratio.max(d);
    }
    let ratios: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = stream(seed, Purpose::Probe, &[trial as u64]);
            let z: Vec<C64> = (0..n)
                .map(|_| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
                .collect();
            let norm_sq: f64 = z.iter().map(|v| v.norm_sqr()).sum();
            g.quadratic_form(&z) / norm_sq
        })
        .collect();
    for r in ratios {
        min_ratio = min_ratio.min(r);
        max_ratio = max_ratio.max(r);
    }
    SandwichReport {
        passed: b_phi - TOL <= min_ratio && max_ratio <= upper_b_phi + TOL,
        trials,
        min_ratio,
        max_ratio,
    }
}

/// `max_ν max_x |Φ_ν(x)|` over `samples` uniform points.
pub fn sup_norm_estimate(
    a: &DiffusionCoefficient,
    set: &IndexSet,
    samples: usize,
    seed: u64,
) -> Result<f64> {
    check_index_set(a, set)?;
    let dim = a.dim();
    let sparse = crate::spectral::SparseIndices::new(set);
    let kmax = sparse.max_frequency;
    let best = (0..samples)
        .into_par_iter()
        .map(|p| {
            let mut rng = stream(seed, Purpose::Probe, &[p as u64]);
            let x: Vec<f64> = (0..dim).map(|_| rng.random::<f64>()).collect();
            let table = ExpTable::new(&x, kmax);
            let mut grad = vec![ZERO; dim];
            let value = a.value_and_gradient(&x, &mut grad);
            set.iter()
                .enumerate()
                .map(|(j, nu)| {
                    phi_from_local(value, &grad, nu.components(), sparse.norm_sq[j], table.fourier(&sparse.entries[j]))
                        .norm()
                })
                .fold(0.0, f64::max)
        })
        .reduce(|| 0.0, f64::max);
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::{assemble, sample_collocation_points};
    use crate::problem::builtin_coefficient;
    use crate::spectral::TorusPoint;
    use proptest::prelude::*;

    fn mi(v: &[i64]) -> MultiIndex {
        MultiIndex::from(v)
    }

    fn perturbed(e_star: f64, nu_star: &[i64]) -> DiffusionCoefficient {
        DiffusionCoefficient::fourier_sparse(
            "perturbed",
            2,
            vec![(mi(&[0, 0]), C64::new(1.0, 0.0)), (mi(nu_star), C64::new(e_star, 0.0))],
            None,
        )
        .unwrap()
    }

    #[test]
    fn constant_coefficient_gives_identity() {
        let set = IndexSet::hyperbolic_cross(2, 10).unwrap();
        let a = builtin_coefficient("a1", 2).unwrap();
        let g = gram_closed_form(&a, &set).unwrap();
        let id = Array2::from_shape_fn((set.len(), set.len()), |(i, j)| {
            if i == j {
                C64::new(1.0, 0.0)
            } else {
                ZERO
            }
        });
        assert_eq!(g.entries, id);
        let q = gram_quadrature_oracle(&a, &set, 32).unwrap();
        assert!(q.entries.iter().zip(id.iter()).all(|(p, r)| (p - r).norm() < 1e-12));
    }

    #[test]
    fn one_term_rows_match_hand_entries() {
        let a = perturbed(0.1, &[1, 0]);
        let set = IndexSet::hyperbolic_cross(2, 8).unwrap();
        let g = gram_closed_form(&a, &set).unwrap();
        let ns = mi(&[1, 0]);
        let (e0, es) = (C64::new(1.0, 0.0), C64::new(0.1, 0.0));
        for (i, nu) in set.iter().enumerate() {
            let w = 1.0 + ns.dot(nu) / nu.norm_sq();
            let mut expected = BTreeMap::new();
            expected.insert(i, (e0.norm_sqr() + w * w * es.norm_sqr(), 0.0));
            let down = nu.sub(&ns);
            if let Some(j) = set.index_of(&down) {
                let v = (1.0 + ns.dot(&down) / down.norm_sq()) * e0 * es.conj();
                expected.insert(j, (v.re, v.im));
            }
            if let Some(j) = set.index_of(&nu.add(&ns)) {
                let v = w * e0.conj() * es;
                expected.insert(j, (v.re, v.im));
            }
            for j in 0..set.len() {
                let got = g.entries[[i, j]];
                let want = expected.get(&j).map(|&(r, im)| C64::new(r, im)).unwrap_or(ZERO);
                assert!((got - want).norm() < 1e-14, "row {nu} col {j}: {got} vs {want}");
            }
        }
    }

    #[test]
    fn closed_form_matches_quadrature() {
        let set = IndexSet::hyperbolic_cross(2, 6).unwrap();
        let a = perturbed(0.1, &[1, 0]);
        let g = gram_closed_form(&a, &set).unwrap();
        let q = gram_quadrature_oracle(&a, &set, 16).unwrap();
        assert!(g.max_abs_difference(&q).unwrap() < 1e-10);
        let a2 = builtin_coefficient("a2", 2).unwrap();
        let set = IndexSet::hyperbolic_cross(2, 10).unwrap();
        let g = gram_closed_form(&a2, &set).unwrap();
        let q = gram_quadrature_oracle(&a2, &set, 32).unwrap();
        assert!(g.max_abs_difference(&q).unwrap() < 1e-8);
        assert!(g.hermitian_defect() < 1e-12);
        assert!(g.eigenvalues().unwrap()[0] > -1e-10);
    }

    #[test]
    fn closed_form_agrees_with_quadrature_in_higher_dimension() {
        let a = builtin_coefficient("a2", 4).unwrap();
        let set = IndexSet::hyperbolic_cross(4, 5).unwrap();
        let g = gram_closed_form(&a, &set).unwrap();
        let q = gram_quadrature_oracle(&a, &set, 16).unwrap();
        assert!(g.max_abs_difference(&q).unwrap() < 1e-10);
    }

    #[test]
    fn coarse_grid_is_rejected() {
        let set = IndexSet::hyperbolic_cross(2, 10).unwrap();
        let a = builtin_coefficient("a2", 2).unwrap();
        assert!(matches!(
            gram_quadrature_oracle(&a, &set, 16),
            Err(Error::ResolutionTooCoarse { required: 22, .. })
        ));
        assert!(gram_quadrature_oracle(&a, &set, 48).is_err());
    }

    #[test]
    fn callable_quadrature_converges() {
        let set = IndexSet::hyperbolic_cross(2, 6).unwrap();
        let a = builtin_coefficient("a3", 2).unwrap();
        let coarse = gram_quadrature_oracle(&a, &set, 64).unwrap();
        let fine = gram_quadrature_oracle(&a, &set, 128).unwrap();
        assert!(coarse.max_abs_difference(&fine).unwrap() < 1e-8);
        assert!(coarse.hermitian_defect() < 1e-12);
    }

    #[test]
    fn gershgorin_hand_case() {
        let id = Array2::from_shape_fn((3, 3), |(i, j)| if i == j { C64::new(1.0, 0.0) } else { ZERO });
        assert_eq!(gershgorin_interval(&id), [1.0, 1.0]);
        let m = ndarray::arr2(&[
            [C64::new(2.0, 0.0), C64::new(0.5, 0.0)],
            [C64::new(0.5, 0.0), C64::new(2.0, 0.0)],
        ]);
        assert_eq!(gershgorin_interval(&m), [1.5, 2.5]);
        let ev = m.eigvalsh(UPLO::Lower).unwrap();
        assert!((ev[0] - 1.5).abs() < 1e-14 && (ev[1] - 2.5).abs() < 1e-14);
    }

    #[test]
    fn eigenvalues_inside_gershgorin() {
        let set = IndexSet::hyperbolic_cross(2, 8).unwrap();
        for name in ["a1", "a2"] {
            let g = gram_closed_form(&builtin_coefficient(name, 2).unwrap(), &set).unwrap();
            let [lo, hi] = gershgorin_interval(&g.entries);
            let [l, h] = g.spectral_interval().unwrap();
            assert!(lo - 1e-12 <= l && h <= hi + 1e-12, "{name}");
        }
    }

    #[test]
    fn prop1_hand_values() {
        let r = prop1_constants(C64::new(1.0, 0.0), C64::new(0.1, 0.0), &mi(&[1, 0])).unwrap();
        assert!((r.alpha.unwrap() - 0.5).abs() < 1e-15);
        assert!((r.b_phi - 0.5).abs() < 1e-15);
        assert!((r.upper_b_phi - 1.5625).abs() < 1e-15);
        assert!((r.k_phi - 1.25).abs() < 1e-15);
        assert!(r.conditions_hold);
        let r = prop1_constants(C64::new(2.0, 0.0), ZERO, &mi(&[3, 1])).unwrap();
        assert_eq!((r.alpha.unwrap(), r.b_phi, r.upper_b_phi, r.k_phi), (0.0, 4.0, 4.0, 2.0));
        let r = prop1_constants(C64::new(1.0, 0.0), C64::new(0.3, 0.0), &mi(&[1, 0])).unwrap();
        assert!((r.alpha.unwrap() - 1.5).abs() < 1e-15);
        assert!(!r.conditions_hold);
        assert!(prop1_constants(C64::new(1.0, 0.0), ZERO, &mi(&[0, 0])).is_err());
    }

    #[test]
    fn prop1_sandwich_numerically() {
        let set = IndexSet::hyperbolic_cross(2, 8).unwrap();
        let a = perturbed(0.1, &[1, 0]);
        let g = gram_closed_form(&a, &set).unwrap();
        let r = prop1_constants(C64::new(1.0, 0.0), C64::new(0.1, 0.0), &mi(&[1, 0]))
            .unwrap()
            .with_spectrum(&g)
            .unwrap();
        assert_eq!(r.sandwich_holds(1e-9), Some(true));
        let s = riesz_sandwich_check(&g, r.b_phi, r.upper_b_phi, 10_000, 5);
        assert!(s.passed, "{s:?}");
        let k = sup_norm_estimate(&a, &set, 10_000, 3).unwrap();
        assert!(k <= r.k_phi + 1e-9);
    }

    #[test]
    fn sandwich_for_constant_coefficient_is_tight() {
        let set = IndexSet::hyperbolic_cross(2, 5).unwrap();
        let g = gram_closed_form(&builtin_coefficient("a1", 2).unwrap(), &set).unwrap();
        let s = riesz_sandwich_check(&g, 1.0, 1.0, 100, 1);
        assert!(s.passed);
        assert!((s.min_ratio - 1.0).abs() < 1e-14 && (s.max_ratio - 1.0).abs() < 1e-14);
    }

    #[test]
    fn prop2_small_perturbation() {
        let terms = vec![(mi(&[0, 0]), C64::new(1.0, 0.0)), (mi(&[1, 0]), C64::new(0.01, 0.0))];
        let r = prop2_constants(&terms, 1, &TailNorms::default(), 45).unwrap();
        let beta = 0.01 * (1.0 + FOUR_PI_SQ).sqrt();
        assert!((r.beta.unwrap() - beta).abs() < 1e-15);
        assert!((r.beta.unwrap() - 0.063623).abs() < 1e-6);
        assert!(r.conditions_hold);
        assert!((r.b_phi - (1.0 - 2.0 * beta - beta * beta)).abs() < 1e-14);
        let set = IndexSet::hyperbolic_cross(2, 8).unwrap();
        let a = perturbed(0.01, &[1, 0]);
        let r = r.with_spectrum(&gram_closed_form(&a, &set).unwrap()).unwrap();
        assert_eq!(r.sandwich_holds(1e-9), Some(true));

        let big = vec![(mi(&[0, 0]), C64::new(1.0, 0.0)), (mi(&[1, 0]), C64::new(0.5, 0.0))];
        let r = prop2_constants(&big, 1, &TailNorms::default(), 45).unwrap();
        assert!(!r.conditions_hold);
        assert!(!r.conditions["beta_bound"]);
    }

    #[test]
    fn prop2_records_gamma_both_ways() {
        let terms = vec![(mi(&[0, 0]), C64::new(1.0, 0.0))];
        let tail = TailNorms {
            h1_seminorm: 0.02,
            l2: 0.001,
            linf: 0.003,
            grad_linf_sum: 0.05,
        };
        let r = prop2_constants(&terms, 0, &tail, 100).unwrap();
        assert!((r.gamma.unwrap() - (10.0 * 0.02 / TWO_PI + 0.001)).abs() < 1e-15);
        assert!((r.gamma_without_sqrt_n.unwrap() - (0.02 / TWO_PI + 0.001)).abs() < 1e-15);
        assert!((r.k_phi - 1.053).abs() < 1e-12);
        let bad = TailNorms { l2: -1.0, ..tail };
        assert!(prop2_constants(&terms, 0, &bad, 100).is_err());
    }

    #[test]
    fn tensorized_cosine_family() {
        let k = mi(&[1, 1]);
        let ck = 0.02;
        let bound = (1.0 + FOUR_PI_SQ * 2.0).sqrt() / (2f64.sqrt() - 1.0) * ck;
        let a = tensorized_cosine(2, bound * 1.01, ck, &k).unwrap();
        assert_eq!(a.nnz(), Some(5));
        let x = [0.1, 0.37];
        let direct = bound * 1.01 + ck * (TWO_PI * 0.1).cos() * (TWO_PI * 0.37).cos();
        assert!((a.value(&x).re - direct).abs() < 1e-14);
        let terms = a.fourier_terms().unwrap();
        let r = prop2_constants(terms, 4, &TailNorms::default(), 10).unwrap();
        assert!((r.beta.unwrap() - ck * (1.0 + FOUR_PI_SQ * 2.0).sqrt()).abs() < 1e-14);
        assert!(r.conditions_hold);
        let set = IndexSet::hyperbolic_cross(2, 8).unwrap();
        let r = r.with_spectrum(&gram_closed_form(&a, &set).unwrap()).unwrap();
        assert_eq!(r.sandwich_holds(1e-9), Some(true));
        let tight = tensorized_cosine(2, bound * 0.99, ck, &k).unwrap();
        let r = prop2_constants(tight.fourier_terms().unwrap(), 4, &TailNorms::default(), 10).unwrap();
        assert!(!r.conditions_hold);
    }

    #[test]
    fn discrete_coefficients_of_a_trig_polynomial() {
        let a2 = builtin_coefficient("a2", 2).unwrap();
        let value = {
            let b = a2.clone();
            std::sync::Arc::new(move |x: &[f64]| b.value(x)) as crate::problem::ScalarFn
        };
        let gradient = {
            let b = a2.clone();
            std::sync::Arc::new(move |x: &[f64], g: &mut [C64]| {
                let v = b.gradient(x);
                g.copy_from_slice(&v);
            }) as crate::problem::GradientFn
        };
        let c = DiffusionCoefficient::callable("a2_callable", 2, value, gradient, vec![0, 1], 0.5).unwrap();
        let coeffs = discrete_fourier_coefficients(&c, 8).unwrap();
        for (tau, e) in a2.fourier_terms().unwrap() {
            let got = coeffs.iter().find(|(t, _)| t == tau).unwrap().1;
            assert!((got - e).norm() < 1e-14);
        }
        let (a_t, norms, _) = estimate_tail(&c, 6, 8, 1000, 1).unwrap();
        assert_eq!(a_t.len(), 7);
        assert!(norms.l2 < 1e-14 && norms.h1_seminorm < 1e-13 && norms.linf < 1e-13);
    }

    #[test]
    fn a3_tail_report() {
        let a = builtin_coefficient("a3", 2).unwrap();
        let set = IndexSet::hyperbolic_cross(2, 6).unwrap();
        let r = riesz_report(&a, &set, Some(4), None, 3).unwrap();
        assert!(r.beta.is_some() && r.gamma.unwrap() > 0.0);
        assert!(r.tail_estimation.unwrap().contains("random points"));
        let [lo, hi] = r.spectral_interval.unwrap();
        assert!(lo > 0.0 && hi >= lo);
    }

    #[test]
    fn rip_of_orthonormal_columns_is_zero() {
        let a = Array2::from_shape_fn((6, 4), |(i, j)| if i == j { C64::new(1.0, 0.0) } else { ZERO });
        for s in 1..=3 {
            assert!(empirical_rip_constant(&a, s, 1.0).unwrap() < 1e-15);
        }
        let big = Array2::from_elem((2, 2000), ZERO);
        assert!(matches!(
            empirical_rip_constant(&big, 3, 1.0),
            Err(Error::BudgetExceeded { .. })
        ));
    }

    #[test]
    fn rip_small_scale_fourier() {
        let full = IndexSet::hyperbolic_cross(2, 10).unwrap();
        let set = IndexSet::from_indices(2, full.indices()[..20].to_vec()).unwrap();
        let a = builtin_coefficient("a1", 2).unwrap();
        let zero = |_: &TorusPoint| Ok(ZERO);
        let mut good = 0;
        for seed in 0..25 {
            let sys = assemble(&a, &zero, &set, sample_collocation_points(2, 400, seed)).unwrap();
            let d1 = empirical_rip_constant(&sys.matrix, 1, 1.0).unwrap();
            let d2 = empirical_rip_constant(&sys.matrix, 2, 1.0).unwrap();
            assert!(d1 <= d2 + 1e-15);
            if d2 < 0.5 {
                good += 1;
            }
        }
        assert!(good >= 23, "{good}/25");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn gram_is_hermitian_psd(e in 0.0f64..0.3, k1 in -3i64..=3, k2 in -3i64..=3, order in 3u64..8) {
            prop_assume!(k1 != 0 || k2 != 0);
            let a = perturbed(e, &[k1, k2]);
            let set = IndexSet::hyperbolic_cross(2, order).unwrap();
            let g = gram_closed_form(&a, &set).unwrap();
            prop_assert!(g.hermitian_defect() < 1e-12);
            let ev = g.eigenvalues().unwrap();
            prop_assert!(ev[0] >= -1e-10);
            let [lo, hi] = gershgorin_interval(&g.entries);
            prop_assert!(lo - 1e-12 <= ev[0] && ev[ev.len() - 1] <= hi + 1e-12);
            let r = prop1_constants(C64::new(1.0, 0.0), C64::new(e, 0.0), &mi(&[k1, k2])).unwrap();
            if r.conditions_hold {
                prop_assert!(r.b_phi - 1e-9 <= ev[0] && ev[ev.len() - 1] <= r.upper_b_phi + 1e-9);
            }
        }
    }
}
