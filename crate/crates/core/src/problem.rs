//! Diffusion coefficients, manufactured solutions and forcing terms.
//!
//! Builtin coefficients (embedded in any `d ≥ 2`, only `x₁, x₂` active):
//!
//! ```text
//! a1 = 1
//! a2 = 1 + 0.25 sin(2πx₁) sin(2πx₂) + 0.25 sin(4πx₁)
//! a3 = 1 + 0.2 exp(sin(2πx₁) sin(2πx₂))
//! ```
//!
//! Solutions and coefficients are evaluated as complex numbers; realness of
//! the builtins is a tested property rather than an assumption.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::sync::{Arc, OnceLock};

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::index_set::{IndexSet, MultiIndex};
use crate::spectral::{phase, CoefficientVector, TorusPoint, FOUR_PI_SQ, TWO_PI};
use crate::C64;

const ZERO: C64 = C64::new(0.0, 0.0);

pub type ScalarFn = Arc<dyn Fn(&[f64]) -> C64 + Send + Sync>;
pub type GradientFn = Arc<dyn Fn(&[f64], &mut [C64]) + Send + Sync>;

/// How `a` is represented.
#[derive(Clone)]
pub enum CoefficientForm {
    /// `a = Σ_τ e_τ F_τ` with finitely many terms.
    FourierSparse { terms: Vec<(MultiIndex, C64)> },
    /// Pointwise `a` and `∇a`. `active_dims` lists the coordinates `a`
    /// depends on.
    Callable {
        value: ScalarFn,
        gradient: GradientFn,
        active_dims: Vec<usize>,
    },
}

/// A diffusion coefficient with `Re a(x) ≥ a_min > 0`.
#[derive(Clone)]
pub struct DiffusionCoefficient {
    name: String,
    dim: usize,
    form: CoefficientForm,
    a_min: f64,
}

impl fmt::Debug for DiffusionCoefficient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let form = match &self.form {
            CoefficientForm::FourierSparse { terms } => format!("FourierSparse({} terms)", terms.len()),
            CoefficientForm::Callable { active_dims, .. } => format!("Callable(active {active_dims:?})"),
        };
        f.debug_struct("DiffusionCoefficient")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("form", &form)
            .field("a_min", &self.a_min)
            .finish()
    }
}

impl DiffusionCoefficient {
    /// Fourier-sparse coefficient. When `a_min` is `None` the triangle bound
    /// `Re e_0 − Σ_{τ≠0} |e_τ|` is used.
    pub fn fourier_sparse(
        name: &str,
        dim: usize,
        terms: Vec<(MultiIndex, C64)>,
        a_min: Option<f64>,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("dimension must be >= 1".into()));
        }
        let mut merged: BTreeMap<MultiIndex, C64> = BTreeMap::new();
        for (tau, e) in terms {
            if tau.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: tau.dim(),
                });
            }
            *merged.entry(tau).or_insert(ZERO) += e;
        }
        let terms: Vec<_> = merged.into_iter().filter(|(_, e)| *e != ZERO).collect();
        if terms.is_empty() {
            return Err(Error::InvalidArgument("coefficient has no terms".into()));
        }
        let triangle = terms
            .iter()
            .map(|(tau, e)| if tau.is_zero() { e.re } else { -e.norm() })
            .sum::<f64>();
        let a_min = a_min.unwrap_or(triangle);
        if !(a_min > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "coefficient `{name}` lower bound {a_min} is not positive"
            )));
        }
        Ok(Self {
            name: name.into(),
            dim,
            form: CoefficientForm::FourierSparse { terms },
            a_min,
        })
    }

    pub fn callable(
        name: &str,
        dim: usize,
        value: ScalarFn,
        gradient: GradientFn,
        active_dims: Vec<usize>,
        a_min: f64,
    ) -> Result<Self> {
        if dim == 0 || active_dims.iter().any(|&l| l >= dim) {
            return Err(Error::InvalidArgument("active dimensions out of range".into()));
        }
        if !(a_min > 0.0) {
            return Err(Error::InvalidArgument("a_min must be positive".into()));
        }
        Ok(Self {
            name: name.into(),
            dim,
            form: CoefficientForm::Callable {
                value,
                gradient,
                active_dims,
            },
            a_min,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn form(&self) -> &CoefficientForm {
        &self.form
    }

    pub fn a_min(&self) -> f64 {
        self.a_min
    }

    pub fn fourier_terms(&self) -> Option<&[(MultiIndex, C64)]> {
        match &self.form {
            CoefficientForm::FourierSparse { terms } => Some(terms),
            CoefficientForm::Callable { .. } => None,
        }
    }

    /// Number of Fourier terms, or `None` for callables.
    pub fn nnz(&self) -> Option<usize> {
        self.fourier_terms().map(<[_]>::len)
    }

    /// Largest `|τ_l|` over the Fourier support.
    pub fn max_frequency(&self) -> Option<i64> {
        self.fourier_terms()
            .map(|t| t.iter().map(|(tau, _)| tau.max_abs()).max().unwrap_or(0))
    }

    /// Coordinates the coefficient depends on.
    pub fn active_dims(&self) -> Vec<usize> {
        match &self.form {
            CoefficientForm::FourierSparse { terms } => (0..self.dim)
                .filter(|&l| terms.iter().any(|(tau, _)| tau.components()[l] != 0))
                .collect(),
            CoefficientForm::Callable { active_dims, .. } => active_dims.clone(),
        }
    }

    pub fn value(&self, x: &[f64]) -> C64 {
        match &self.form {
            CoefficientForm::FourierSparse { terms } => terms
                .iter()
                .map(|(tau, e)| e * C64::cis(TWO_PI * phase(tau.components(), x)))
                .sum(),
            CoefficientForm::Callable { value, .. } => value(x),
        }
    }

    /// Writes `∇a(x)` into `grad` and returns `a(x)`.
    pub fn value_and_gradient(&self, x: &[f64], grad: &mut [C64]) -> C64 {
        grad.iter_mut().for_each(|g| *g = ZERO);
        match &self.form {
            CoefficientForm::FourierSparse { terms } => {
                let mut a = ZERO;
                for (tau, e) in terms {
                    let t = e * C64::cis(TWO_PI * phase(tau.components(), x));
                    a += t;
                    for (g, &k) in grad.iter_mut().zip(tau.components()) {
                        if k != 0 {
                            *g += C64::new(0.0, TWO_PI * k as f64) * t;
                        }
                    }
                }
                a
            }
            CoefficientForm::Callable { value, gradient, .. } => {
                gradient(x, grad);
                value(x)
            }
        }
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<C64> {
        let mut g = vec![ZERO; self.dim];
        self.value_and_gradient(x, &mut g);
        g
    }

    /// Minimum of `Re a` over `samples` uniform points. Fails when it drops
    /// below the declared `a_min`.
    pub fn check_ellipticity(&self, samples: usize, seed: u64) -> Result<f64> {
        let mut rng = crate::rng::seeded(seed);
        let mut x = vec![0.0; self.dim];
        let mut lowest = f64::INFINITY;
        for _ in 0..samples {
            x.iter_mut().for_each(|t| *t = rng.random());
            lowest = lowest.min(self.value(&x).re);
        }
        if lowest < self.a_min - 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "coefficient `{}` not elliptic: sampled min {lowest} < a_min {}",
                self.name, self.a_min
            )));
        }
        Ok(lowest)
    }
}

fn embed(dim: usize, v: &[i64]) -> MultiIndex {
    let mut c = vec![0; dim];
    c[..v.len()].copy_from_slice(v);
    MultiIndex::from(c)
}

/// `a1`, `a2` or `a3` embedded in dimension `dim`.
pub fn builtin_coefficient(name: &str, dim: usize) -> Result<DiffusionCoefficient> {
    let need2 = || {
        if dim < 2 {
            Err(Error::InvalidArgument(format!("`{name}` needs dimension >= 2")))
        } else {
            Ok(())
        }
    };
    match name {
        "a1" => {
            if dim == 0 {
                return Err(Error::InvalidArgument("dimension must be >= 1".into()));
            }
            DiffusionCoefficient::fourier_sparse("a1", dim, vec![(MultiIndex::zero(dim), C64::new(1.0, 0.0))], Some(1.0))
        }
        "a2" => {
            need2()?;
            let q = 1.0 / 16.0;
            let terms = vec![
                (embed(dim, &[0, 0]), C64::new(1.0, 0.0)),
                (embed(dim, &[1, 1]), C64::new(-q, 0.0)),
                (embed(dim, &[-1, -1]), C64::new(-q, 0.0)),
                (embed(dim, &[1, -1]), C64::new(q, 0.0)),
                (embed(dim, &[-1, 1]), C64::new(q, 0.0)),
                (embed(dim, &[2, 0]), C64::new(0.0, -0.125)),
                (embed(dim, &[-2, 0]), C64::new(0.0, 0.125)),
            ];
            DiffusionCoefficient::fourier_sparse("a2", dim, terms, Some(0.5))
        }
        "a3" => {
            need2()?;
            let value: ScalarFn = Arc::new(|x: &[f64]| {
                let s = (TWO_PI * x[0]).sin() * (TWO_PI * x[1]).sin();
                C64::new(1.0 + 0.2 * s.exp(), 0.0)
            });
            let gradient: GradientFn = Arc::new(|x: &[f64], g: &mut [C64]| {
                let (s1, c1) = (TWO_PI * x[0]).sin_cos();
                let (s2, c2) = (TWO_PI * x[1]).sin_cos();
                let e = 0.2 * (s1 * s2).exp();
                g[0] = C64::new(e * TWO_PI * c1 * s2, 0.0);
                g[1] = C64::new(e * TWO_PI * s1 * c2, 0.0);
            });
            DiffusionCoefficient::callable("a3", dim, value, gradient, vec![0, 1], 1.0 + 0.2 / std::f64::consts::E)
        }
        other => Err(Error::Unknown {
            kind: "coefficient",
            name: other.into(),
        }),
    }
}

/// Reads rows `ν_1, …, ν_d, Re e_ν, Im e_ν` (no header).
pub fn load_coefficient_csv(path: &Path) -> Result<DiffusionCoefficient> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(path)?;
    let mut terms = Vec::new();
    let mut dim = None;
    for (row, rec) in reader.records().enumerate() {
        let rec = rec?;
        if rec.len() < 3 {
            return Err(Error::Parse(format!("row {row}: expected at least 3 fields")));
        }
        let d = rec.len() - 2;
        if *dim.get_or_insert(d) != d {
            return Err(Error::Parse(format!("row {row}: inconsistent dimension")));
        }
        let nu = rec
            .iter()
            .take(d)
            .map(|s| s.parse::<i64>().map_err(|e| Error::Parse(format!("row {row}: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        let num = |s: &str| s.parse::<f64>().map_err(|e| Error::Parse(format!("row {row}: {e}")));
        terms.push((MultiIndex::from(nu), C64::new(num(&rec[d])?, num(&rec[d + 1])?)));
    }
    let dim = dim.ok_or(Error::Empty("coefficient file"))?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "custom".into());
    DiffusionCoefficient::fourier_sparse(&name, dim, terms, None)
}

/// Builtin name or path to a coefficient CSV, embedded in `dim`.
pub fn resolve_coefficient(spec: &str, dim: usize) -> Result<DiffusionCoefficient> {
    match builtin_coefficient(spec, dim) {
        Err(Error::Unknown { .. }) => {
            let a = load_coefficient_csv(Path::new(spec))?;
            if a.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: a.dim(),
                });
            }
            Ok(a)
        }
        other => other,
    }
}

/// One term `amplitude · ∏_{l: m_l ≠ 0} sin(2π m_l x_l)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SineTerm {
    pub amplitude: f64,
    pub frequencies: Vec<i64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum SolutionKind {
    SineProducts { terms: Vec<SineTerm> },
    /// `exp(sin 2πx₁ + sin 2πx₂) − c`.
    ExpSines { offset: f64 },
    /// `Σ c̃_ν F_ν`, with `c̃_0 = 0`.
    FourierSum { terms: Vec<(MultiIndex, C64)> },
}

/// A zero-mean exact solution with analytic derivatives.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManufacturedSolution {
    pub name: String,
    pub dim: usize,
    pub kind: SolutionKind,
    /// Number of nonzero complex Fourier coefficients, when finite.
    pub sparsity_label: Option<usize>,
}

impl ManufacturedSolution {
    pub fn sine_products(name: &str, dim: usize, terms: Vec<SineTerm>) -> Result<Self> {
        for t in &terms {
            if t.frequencies.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: t.frequencies.len(),
                });
            }
            if t.frequencies.iter().all(|&m| m == 0) {
                return Err(Error::InvalidArgument("sine product needs an active factor".into()));
            }
        }
        let mut u = Self {
            name: name.into(),
            dim,
            kind: SolutionKind::SineProducts { terms },
            sparsity_label: None,
        };
        u.sparsity_label = u.exact_fourier_coefficients().map(|c| c.len());
        Ok(u)
    }

    pub fn fourier_sum(name: &str, dim: usize, terms: Vec<(MultiIndex, C64)>) -> Result<Self> {
        let mut merged: BTreeMap<MultiIndex, C64> = BTreeMap::new();
        for (nu, c) in terms {
            if nu.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: nu.dim(),
                });
            }
            if nu.is_zero() {
                return Err(Error::ZeroIndex);
            }
            *merged.entry(nu).or_insert(ZERO) += c;
        }
        let terms: Vec<_> = merged.into_iter().filter(|(_, c)| *c != ZERO).collect();
        let label = terms.len();
        Ok(Self {
            name: name.into(),
            dim,
            kind: SolutionKind::FourierSum { terms },
            sparsity_label: Some(label),
        })
    }

    /// `Σ_ν c_ν Ψ_ν` from spectral coefficients over `set`.
    pub fn from_spectral_coefficients(name: &str, set: &IndexSet, coeffs: &[C64]) -> Result<Self> {
        if coeffs.len() != set.len() {
            return Err(Error::DimensionMismatch {
                expected: set.len(),
                actual: coeffs.len(),
            });
        }
        let terms = set
            .iter()
            .zip(coeffs)
            .filter(|(_, c)| **c != ZERO)
            .map(|(nu, c)| (nu.clone(), c / (FOUR_PI_SQ * nu.norm_sq())))
            .collect();
        Self::fourier_sum(name, set.dim(), terms)
    }

    pub fn value(&self, x: &[f64]) -> C64 {
        let mut g = vec![ZERO; self.dim];
        self.evaluate(x, &mut g).0
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<C64> {
        let mut g = vec![ZERO; self.dim];
        self.evaluate(x, &mut g);
        g
    }

    pub fn laplacian(&self, x: &[f64]) -> C64 {
        let mut g = vec![ZERO; self.dim];
        self.evaluate(x, &mut g).1
    }

    /// Returns `(u(x), Δu(x))` and writes `∇u(x)` into `grad`.
    pub fn evaluate(&self, x: &[f64], grad: &mut [C64]) -> (C64, C64) {
        grad.iter_mut().for_each(|g| *g = ZERO);
        match &self.kind {
            SolutionKind::SineProducts { terms } => {
                let mut u = 0.0;
                let mut lap = 0.0;
                let mut gr = vec![0.0; self.dim];
                for t in terms {
                    let active: Vec<(usize, f64, f64, f64)> = t
                        .frequencies
                        .iter()
                        .enumerate()
                        .filter(|(_, &m)| m != 0)
                        .map(|(l, &m)| {
                            let w = TWO_PI * m as f64;
                            let (s, c) = (w * x[l]).sin_cos();
                            (l, w, s, c)
                        })
                        .collect();
                    let prod: f64 = active.iter().map(|a| a.2).product();
                    let v = t.amplitude * prod;
                    u += v;
                    lap -= v * active.iter().map(|a| a.1 * a.1).sum::<f64>();
                    for (i, &(l, w, _, c)) in active.iter().enumerate() {
                        let others: f64 = active
                            .iter()
                            .enumerate()
                            .filter(|(j, _)| *j != i)
                            .map(|(_, a)| a.2)
                            .product();
                        gr[l] += t.amplitude * w * c * others;
                    }
                }
                for (g, v) in grad.iter_mut().zip(gr) {
                    *g = C64::new(v, 0.0);
                }
                (C64::new(u, 0.0), C64::new(lap, 0.0))
            }
            SolutionKind::ExpSines { offset } => {
                let (s1, c1) = (TWO_PI * x[0]).sin_cos();
                let (s2, c2) = (TWO_PI * x[1]).sin_cos();
                let g = (s1 + s2).exp();
                grad[0] = C64::new(TWO_PI * c1 * g, 0.0);
                grad[1] = C64::new(TWO_PI * c2 * g, 0.0);
                let w2 = TWO_PI * TWO_PI;
                let lap = w2 * (c1 * c1 - s1 + c2 * c2 - s2) * g;
                (C64::new(g - offset, 0.0), C64::new(lap, 0.0))
            }
            SolutionKind::FourierSum { terms } => {
                let mut u = ZERO;
                let mut lap = ZERO;
                for (nu, c) in terms {
                    let t = c * C64::cis(TWO_PI * phase(nu.components(), x));
                    u += t;
                    lap -= t * (FOUR_PI_SQ * nu.norm_sq());
                    for (g, &k) in grad.iter_mut().zip(nu.components()) {
                        if k != 0 {
                            *g += C64::new(0.0, TWO_PI * k as f64) * t;
                        }
                    }
                }
                (u, lap)
            }
        }
    }

    /// Exact Fourier coefficient `c̃_ν`.
    pub fn fourier_coefficient(&self, nu: &MultiIndex) -> C64 {
        if nu.is_zero() {
            return ZERO;
        }
        match &self.kind {
            SolutionKind::SineProducts { .. } | SolutionKind::FourierSum { .. } => self
                .exact_fourier_coefficients()
                .and_then(|c| c.into_iter().find(|(m, _)| m == nu).map(|(_, v)| v))
                .unwrap_or(ZERO),
            SolutionKind::ExpSines { .. } => {
                let c = nu.components();
                if c.iter().skip(2).any(|&k| k != 0) {
                    return ZERO;
                }
                let (k, l) = (c[0], c[1]);
                neg_i_pow(k + l) * bessel_i(k.unsigned_abs() as u32, 1.0) * bessel_i(l.unsigned_abs() as u32, 1.0)
            }
        }
    }

    /// Finite Fourier expansion, sorted by index, or `None` for `u₂`.
    pub fn exact_fourier_coefficients(&self) -> Option<Vec<(MultiIndex, C64)>> {
        match &self.kind {
            SolutionKind::SineProducts { terms } => {
                let mut map: BTreeMap<MultiIndex, C64> = BTreeMap::new();
                for t in terms {
                    let active: Vec<(usize, i64)> = t
                        .frequencies
                        .iter()
                        .enumerate()
                        .filter(|(_, &m)| m != 0)
                        .map(|(l, &m)| (l, m))
                        .collect();
                    let p = active.len();
                    // ∏ (F_{m} − F_{−m}) / (2i)
                    let scale = C64::new(t.amplitude, 0.0) / C64::new(0.0, 2.0).powi(p as i32);
                    for signs in 0..(1u32 << p) {
                        let mut nu = vec![0i64; self.dim];
                        let mut sign = 1.0;
                        for (b, &(l, m)) in active.iter().enumerate() {
                            if signs >> b & 1 == 1 {
                                nu[l] = -m;
                                sign = -sign;
                            } else {
                                nu[l] = m;
                            }
                        }
                        *map.entry(MultiIndex::from(nu)).or_insert(ZERO) += scale * sign;
                    }
                }
                Some(map.into_iter().filter(|(_, c)| c.norm() > 0.0).collect())
            }
            SolutionKind::FourierSum { terms } => Some(terms.clone()),
            SolutionKind::ExpSines { .. } => None,
        }
    }

    /// Spectral coefficients `c_ν = 4π²‖ν‖² c̃_ν` of the projection onto `set`.
    pub fn spectral_coefficients(&self, set: &IndexSet) -> CoefficientVector {
        let exact = self.exact_fourier_coefficients();
        set.iter()
            .map(|nu| {
                let c = match &exact {
                    Some(list) => list
                        .binary_search_by(|(m, _)| m.cmp(nu))
                        .map(|i| list[i].1)
                        .unwrap_or(ZERO),
                    None => self.fourier_coefficient(nu),
                };
                c * (FOUR_PI_SQ * nu.norm_sq())
            })
            .collect()
    }

    /// True when every nonzero Fourier coefficient lies in `set`.
    pub fn is_supported_in(&self, set: &IndexSet) -> bool {
        match self.exact_fourier_coefficients() {
            Some(list) => list.iter().all(|(nu, _)| set.contains(nu)),
            None => false,
        }
    }

    /// Closed-form `‖u‖_{L²}` when available (Parseval).
    pub fn l2_norm(&self) -> Option<f64> {
        match &self.kind {
            SolutionKind::ExpSines { offset } => {
                // ∫ exp(2 sin)² = I₀(2)² per axis
                let i02 = bessel_i(0, 2.0);
                Some((i02 * i02 - offset * offset).max(0.0).sqrt())
            }
            _ => self
                .exact_fourier_coefficients()
                .map(|c| c.iter().map(|(_, v)| v.norm_sqr()).sum::<f64>().sqrt()),
        }
    }
}

fn neg_i_pow(n: i64) -> C64 {
    match n.rem_euclid(4) {
        0 => C64::new(1.0, 0.0),
        1 => C64::new(0.0, -1.0),
        2 => C64::new(-1.0, 0.0),
        _ => C64::new(0.0, 1.0),
    }
}

/// Modified Bessel function `I_k(x)` by its power series.
pub fn bessel_i(k: u32, x: f64) -> f64 {
    let h = 0.5 * x;
    let mut term = (1..=k).fold(1.0, |acc, j| acc * h / j as f64);
    let mut sum = term;
    let mut j = 0u32;
    loop {
        j += 1;
        term *= h * h / (j as f64 * (j + k) as f64);
        sum += term;
        if term < 1e-18 * sum || j > 500 {
            break;
        }
    }
    sum
}

fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    fn step<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) + step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
    let fa = f(a);
    let fb = f(b);
    let fm = f(0.5 * (a + b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    step(f, a, b, fa, fm, fb, whole, tol, 50)
}

/// `∫_{T²} exp(sin 2πx₁ + sin 2πx₂) dx`, by adaptive quadrature of the 1-D
/// factor, squared.
pub fn nonsparse_offset() -> f64 {
    static OFFSET: OnceLock<f64> = OnceLock::new();
    *OFFSET.get_or_init(|| {
        let one_d = adaptive_simpson(&|t: f64| (TWO_PI * t).sin().exp(), 0.0, 1.0, 1e-13);
        one_d * one_d
    })
}

/// Where the frequencies of a sparse solution come from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrequencyRegime {
    /// Distinct pairs `(m, n) ∈ {1..max}²` on `x₁, x₂`.
    Box { max: i64 },
    /// Distinct members of the index set with exactly two nonzero, positive
    /// components.
    IndexSetPairs,
}

/// `u = Σ_{k≤q} d_k ∏ sin(2π m_{k,l} x_l)` with `d_k ~ U[0, 1)`.
pub fn make_sparse_solution(
    set: &IndexSet,
    q: usize,
    seed: u64,
    regime: FrequencyRegime,
) -> Result<ManufacturedSolution> {
    let dim = set.dim();
    let candidates: Vec<Vec<i64>> = match regime {
        FrequencyRegime::Box { max } => {
            if dim < 2 {
                return Err(Error::InvalidArgument("sparse solutions need dimension >= 2".into()));
            }
            if max < 1 {
                return Err(Error::InvalidArgument("frequency box must be nonempty".into()));
            }
            (1..=max)
                .flat_map(|m| (1..=max).map(move |n| (m, n)))
                .map(|(m, n)| embed(dim, &[m, n]).components().to_vec())
                .collect()
        }
        FrequencyRegime::IndexSetPairs => set
            .iter()
            .filter(|nu| nu.support_size() == 2 && nu.components().iter().all(|&k| k >= 0))
            .map(|nu| nu.components().to_vec())
            .collect(),
    };
    if q > candidates.len() {
        return Err(Error::InvalidArgument(format!(
            "q = {q} exceeds the {} admissible frequency tuples",
            candidates.len()
        )));
    }
    let mut rng = crate::rng::seeded(seed);
    let picks = sample(&mut rng, candidates.len(), q).into_vec();
    let terms: Vec<SineTerm> = picks
        .into_iter()
        .map(|i| SineTerm {
            amplitude: rng.random::<f64>(),
            frequencies: candidates[i].clone(),
        })
        .collect();
    let name = match regime {
        FrequencyRegime::Box { .. } => "sine-pairs",
        FrequencyRegime::IndexSetPairs => "sine-products",
    };
    let u = ManufacturedSolution::sine_products(name, dim, terms)?;
    if !u.is_supported_in(set) {
        return Err(Error::InvalidArgument(
            "drawn frequencies are not contained in the index set".into(),
        ));
    }
    Ok(u)
}

/// `u₂ = exp(sin 2πx₁ + sin 2πx₂) − c`.
pub fn make_nonsparse_solution(dim: usize) -> Result<ManufacturedSolution> {
    if dim < 2 {
        return Err(Error::InvalidArgument("u2 needs dimension >= 2".into()));
    }
    Ok(ManufacturedSolution {
        name: "u2".into(),
        dim,
        kind: SolutionKind::ExpSines {
            offset: nonsparse_offset(),
        },
        sparsity_label: None,
    })
}

/// Right-hand side evaluation strategy.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum ForcingMode {
    Analytic,
    Fd6 { h: f64 },
}

pub const DEFAULT_FD_STEP: f64 = 1e-3;

impl ForcingMode {
    pub fn fd6_default() -> Self {
        ForcingMode::Fd6 { h: DEFAULT_FD_STEP }
    }
}

// sixth-order central first derivative, weights for offsets 1, 2, 3
const FD6: [f64; 3] = [3.0 / 4.0, -3.0 / 20.0, 1.0 / 60.0];

/// `f(x) = −∇·(a∇u)(x)`.
pub fn forcing_term(
    a: &DiffusionCoefficient,
    u: &ManufacturedSolution,
    x: &TorusPoint,
    mode: ForcingMode,
) -> Result<C64> {
    if a.dim() != u.dim || x.dim() != u.dim {
        return Err(Error::DimensionMismatch {
            expected: u.dim,
            actual: if a.dim() != u.dim { a.dim() } else { x.dim() },
        });
    }
    Ok(match mode {
        ForcingMode::Analytic => forcing_analytic(a, u, x.coords()),
        ForcingMode::Fd6 { h } => {
            if !(h > 0.0) {
                return Err(Error::InvalidArgument("finite-difference step must be positive".into()));
            }
            forcing_fd6(a, u, x.coords(), h)
        }
    })
}

pub(crate) fn forcing_analytic(a: &DiffusionCoefficient, u: &ManufacturedSolution, x: &[f64]) -> C64 {
    let d = u.dim;
    let mut ga = vec![ZERO; d];
    let mut gu = vec![ZERO; d];
    let av = a.value_and_gradient(x, &mut ga);
    let (_, lap) = u.evaluate(x, &mut gu);
    let dot: C64 = ga.iter().zip(&gu).map(|(p, q)| p * q).sum();
    -(dot + av * lap)
}

/// Divergence form `−Σ_l D_l[a D_l u]` with `D_l` the 7-point stencil.
pub(crate) fn forcing_fd6(a: &DiffusionCoefficient, u: &ManufacturedSolution, x: &[f64], h: f64) -> C64 {
    let mut total = ZERO;
    let mut p = x.to_vec();
    for l in 0..u.dim {
        let mut uv = [ZERO; 13];
        for (s, slot) in uv.iter_mut().enumerate() {
            p[l] = x[l] + (s as f64 - 6.0) * h;
            *slot = u.value(&p);
        }
        let mut flux = [ZERO; 7];
        for (s, slot) in flux.iter_mut().enumerate() {
            let c = s + 3;
            let mut du = ZERO;
            for (j, w) in FD6.iter().enumerate() {
                du += (uv[c + j + 1] - uv[c - j - 1]) * *w;
            }
            p[l] = x[l] + (s as f64 - 3.0) * h;
            *slot = a.value(&p) * du / h;
        }
        p[l] = x[l];
        let mut div = ZERO;
        for (j, w) in FD6.iter().enumerate() {
            div += (flux[3 + j + 1] - flux[3 - j - 1]) * *w;
        }
        total += div / h;
    }
    -total
}
