//! Fourier system, spectral basis and the operator-transformed system.
//!
//! * `F_ν(x) = exp(2πi ν·x)`
//! * `Ψ_ν = F_ν / (4π²‖ν‖²)`, so that `−ΔΨ_ν = F_ν`
//! * `Φ_ν = −∇·(a∇Ψ_ν)`
//!
//! For a Fourier-sparse coefficient `a = Σ_τ e_τ F_τ`,
//!
//! ```text
//! Φ_ν = Σ_τ (1 + τ·ν/‖ν‖²) e_τ F_{τ+ν}
//! ```
//!
//! and for general `a` the product rule gives
//! `Φ_ν = a F_ν − ∇a·∇Ψ_ν` with `∇Ψ_ν = 2πi ν F_ν / (4π²‖ν‖²)`.

use std::f64::consts::PI;

use ndarray::Array1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::index_set::{IndexSet, MultiIndex};
use crate::problem::{CoefficientForm, DiffusionCoefficient};
use crate::C64;

pub const TWO_PI: f64 = 2.0 * PI;
pub const FOUR_PI_SQ: f64 = 4.0 * PI * PI;

/// Coefficients indexed by an [`IndexSet`] in its order.
pub type CoefficientVector = Array1<C64>;

/// A point of `T^d = [0, 1)^d`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TorusPoint(Vec<f64>);

impl TorusPoint {
    /// Reduces every coordinate modulo 1.
    pub fn new(coords: Vec<f64>) -> Self {
        Self(coords.into_iter().map(reduce).collect())
    }

    pub fn origin(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    /// `x + t e_axis`, reduced.
    pub fn shifted(&self, axis: usize, t: f64) -> TorusPoint {
        let mut c = self.0.clone();
        c[axis] = reduce(c[axis] + t);
        TorusPoint(c)
    }
}

fn reduce(t: f64) -> f64 {
    let r = t.rem_euclid(1.0);
    // rem_euclid of a tiny negative number rounds up to 1.0
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

impl From<Vec<f64>> for TorusPoint {
    fn from(v: Vec<f64>) -> Self {
        Self::new(v)
    }
}

fn check_dim(nu: &MultiIndex, x: &TorusPoint) -> Result<()> {
    if nu.dim() != x.dim() {
        return Err(Error::DimensionMismatch {
            expected: nu.dim(),
            actual: x.dim(),
        });
    }
    Ok(())
}

pub(crate) fn phase(nu: &[i64], x: &[f64]) -> f64 {
    nu.iter().zip(x).map(|(&k, &t)| k as f64 * t).sum()
}

/// `exp(2πi ν·x)`.
pub fn eval_fourier(nu: &MultiIndex, x: &TorusPoint) -> Result<C64> {
    check_dim(nu, x)?;
    Ok(C64::cis(TWO_PI * phase(nu.components(), x.coords())))
}

/// `F_ν(x) / (4π²‖ν‖²)`.
pub fn eval_spectral_basis(nu: &MultiIndex, x: &TorusPoint) -> Result<C64> {
    if nu.is_zero() {
        return Err(Error::ZeroIndex);
    }
    Ok(eval_fourier(nu, x)? / (FOUR_PI_SQ * nu.norm_sq()))
}

/// `Φ_ν(x) = −∇·(a∇Ψ_ν)(x)`.
///
/// Fourier-sparse coefficients use the closed-form sum, callable ones the
/// product rule.
pub fn eval_phi(a: &DiffusionCoefficient, nu: &MultiIndex, x: &TorusPoint) -> Result<C64> {
    if nu.is_zero() {
        return Err(Error::ZeroIndex);
    }
    check_dim(nu, x)?;
    if a.dim() != nu.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            actual: nu.dim(),
        });
    }
    match a.form() {
        CoefficientForm::FourierSparse { terms } => {
            let n2 = nu.norm_sq();
            let mut acc = C64::new(0.0, 0.0);
            for (tau, e) in terms {
                let weight = 1.0 + tau.dot(nu) / n2;
                if weight == 0.0 {
                    continue;
                }
                let f = C64::cis(TWO_PI * (phase(tau.components(), x.coords()) + phase(nu.components(), x.coords())));
                acc += e * weight * f;
            }
            Ok(acc)
        }
        CoefficientForm::Callable { .. } => eval_phi_product_rule(a, nu, x),
    }
}

/// `a F_ν − ∇a·∇Ψ_ν`, valid for any coefficient representation.
pub fn eval_phi_product_rule(
    a: &DiffusionCoefficient,
    nu: &MultiIndex,
    x: &TorusPoint,
) -> Result<C64> {
    if nu.is_zero() {
        return Err(Error::ZeroIndex);
    }
    check_dim(nu, x)?;
    let mut grad = vec![C64::new(0.0, 0.0); a.dim()];
    let value = a.value_and_gradient(x.coords(), &mut grad);
    Ok(phi_from_local(value, &grad, nu.components(), nu.norm_sq(), eval_fourier(nu, x)?))
}

/// `Φ_ν` from `a(x)`, `∇a(x)` and `F_ν(x)`.
#[inline]
pub(crate) fn phi_from_local(a: C64, grad_a: &[C64], nu: &[i64], norm_sq: f64, f: C64) -> C64 {
    let mut g = C64::new(0.0, 0.0);
    for (&k, &da) in nu.iter().zip(grad_a) {
        if k != 0 {
            g += da * k as f64;
        }
    }
    // −∇a·(2πi ν)/(4π²‖ν‖²) = −i (∇a·ν)/(2π‖ν‖²)
    f * (a - C64::i() * g / (TWO_PI * norm_sq))
}

/// Fourier or spectral basis for [`synthesize`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Basis {
    Fourier,
    Spectral,
}

fn check_len(coeffs: &[C64], set: &IndexSet) -> Result<()> {
    if coeffs.len() != set.len() {
        return Err(Error::DimensionMismatch {
            expected: set.len(),
            actual: coeffs.len(),
        });
    }
    Ok(())
}

/// `Σ_ν c_ν B_ν(x)` with `B = F` or `Ψ`.
pub fn synthesize(coeffs: &[C64], set: &IndexSet, x: &TorusPoint, basis: Basis) -> Result<C64> {
    check_len(coeffs, set)?;
    if x.dim() != set.dim() {
        return Err(Error::DimensionMismatch {
            expected: set.dim(),
            actual: x.dim(),
        });
    }
    let mut acc = C64::new(0.0, 0.0);
    for (c, nu) in coeffs.iter().zip(set.iter()) {
        if *c == C64::new(0.0, 0.0) {
            continue;
        }
        let f = C64::cis(TWO_PI * phase(nu.components(), x.coords()));
        acc += match basis {
            Basis::Fourier => c * f,
            Basis::Spectral => c * f / (FOUR_PI_SQ * nu.norm_sq()),
        };
    }
    Ok(acc)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Conversion {
    SpectralToFourier,
    FourierToSpectral,
}

/// Rescales by `4π²‖ν‖²`: `c_ν = 4π²‖ν‖² c̃_ν`, with `c` spectral and `c̃` Fourier.
pub fn convert_coefficients(
    coeffs: &[C64],
    set: &IndexSet,
    direction: Conversion,
) -> Result<CoefficientVector> {
    check_len(coeffs, set)?;
    coeffs
        .iter()
        .zip(set.iter())
        .map(|(c, nu)| {
            if nu.is_zero() {
                return Err(Error::ZeroIndex);
            }
            let s = FOUR_PI_SQ * nu.norm_sq();
            Ok(match direction {
                Conversion::SpectralToFourier => c / s,
                Conversion::FourierToSpectral => c * s,
            })
        })
        .collect()
}

/// Nonzero components `(axis, k)` of each index, plus `‖ν‖²`.
#[derive(Clone, Debug)]
pub struct SparseIndices {
    pub entries: Vec<Vec<(usize, i64)>>,
    pub norm_sq: Vec<f64>,
    pub max_frequency: i64,
}

impl SparseIndices {
    pub fn new(set: &IndexSet) -> Self {
        let entries = set
            .iter()
            .map(|nu| {
                nu.components()
                    .iter()
                    .enumerate()
                    .filter(|(_, &k)| k != 0)
                    .map(|(l, &k)| (l, k))
                    .collect()
            })
            .collect();
        Self {
            entries,
            norm_sq: set.iter().map(MultiIndex::norm_sq).collect(),
            max_frequency: set.max_frequency(),
        }
    }
}

/// `exp(2πi k x_l)` for `|k| ≤ K` at one point; `F_ν(x)` becomes a product of
/// table entries over the nonzero components of `ν`.
#[derive(Clone, Debug)]
pub struct ExpTable {
    kmax: i64,
    width: usize,
    values: Vec<C64>,
}

impl ExpTable {
    pub fn new(x: &[f64], kmax: i64) -> Self {
        let width = (2 * kmax + 1) as usize;
        let mut values = Vec::with_capacity(width * x.len());
        for &t in x {
            for k in -kmax..=kmax {
                values.push(C64::cis(TWO_PI * k as f64 * t));
            }
        }
        Self { kmax, width, values }
    }

    #[inline]
    pub fn get(&self, axis: usize, k: i64) -> C64 {
        self.values[axis * self.width + (k + self.kmax) as usize]
    }

    #[inline]
    pub fn fourier(&self, sparse_nu: &[(usize, i64)]) -> C64 {
        let mut acc = C64::new(1.0, 0.0);
        for &(l, k) in sparse_nu {
            acc *= self.get(l, k);
        }
        acc
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::builtin_coefficient;
    use proptest::prelude::*;
    use rand::Rng;

    fn mi(v: &[i64]) -> MultiIndex {
        MultiIndex::from(v)
    }

    fn close(a: C64, b: C64, tol: f64) -> bool {
        (a - b).norm() <= tol
    }

    #[test]
    fn torus_reduction() {
        let x = TorusPoint::new(vec![1.25, -0.25, -1e-300, 3.0]);
        assert_eq!(x.coords(), &[0.25, 0.75, 0.0, 0.0]);
    }

    #[test]
    fn fourier_values() {
        let x = TorusPoint::new(vec![0.25, 0.7]);
        assert_eq!(eval_fourier(&mi(&[0, 0]), &x).unwrap(), C64::new(1.0, 0.0));
        assert!(close(eval_fourier(&mi(&[1, 0]), &x).unwrap(), C64::i(), 1e-15));
        let y = TorusPoint::new(vec![0.5, 0.5]);
        assert!(close(eval_fourier(&mi(&[2, -1]), &y).unwrap(), C64::new(-1.0, 0.0), 1e-15));
        assert!(eval_fourier(&mi(&[1, 0, 0]), &x).is_err());
    }

    #[test]
    fn spectral_basis_values() {
        let o = TorusPoint::origin(2);
        let pi2 = PI * PI;
        assert!(close(eval_spectral_basis(&mi(&[1, 0]), &o).unwrap(), C64::new(1.0 / (4.0 * pi2), 0.0), 1e-16));
        assert!(close(eval_spectral_basis(&mi(&[1, 1]), &o).unwrap(), C64::new(1.0 / (8.0 * pi2), 0.0), 1e-16));
        assert!(close(eval_spectral_basis(&mi(&[3, 4]), &o).unwrap(), C64::new(1.0 / (100.0 * pi2), 0.0), 1e-16));
        assert!(matches!(eval_spectral_basis(&mi(&[0, 0]), &o), Err(Error::ZeroIndex)));
    }

    #[test]
    fn phi_constant_coefficient_is_fourier() {
        let a = builtin_coefficient("a1", 2).unwrap();
        let x = TorusPoint::new(vec![0.123, 0.456]);
        for nu in [mi(&[1, 0]), mi(&[-3, 2]), mi(&[0, 7])] {
            assert_eq!(eval_phi(&a, &nu, &x).unwrap(), eval_fourier(&nu, &x).unwrap());
        }
    }

    #[test]
    fn phi_single_mode_perturbation() {
        let a = DiffusionCoefficient::fourier_sparse(
            "pert",
            2,
            vec![(mi(&[0, 0]), C64::new(1.0, 0.0)), (mi(&[1, 0]), C64::new(0.1, 0.0))],
            None,
        )
        .unwrap();
        let v = eval_phi(&a, &mi(&[0, 1]), &TorusPoint::origin(2)).unwrap();
        assert!(close(v, C64::new(1.1, 0.0), 1e-15));
    }

    #[test]
    fn phi_closed_form_matches_product_rule_for_a2() {
        let a = builtin_coefficient("a2", 2).unwrap();
        let x = TorusPoint::new(vec![0.3, 0.6]);
        let nu = mi(&[1, 0]);
        let closed = eval_phi(&a, &nu, &x).unwrap();
        let product = eval_phi_product_rule(&a, &nu, &x).unwrap();
        assert!(close(closed, product, 1e-12), "{closed} vs {product}");

        // independent oracle: −∇·(a∇Ψ) by central differences of a∂Ψ
        let h = 1e-4;
        let flux = |p: &TorusPoint, l: usize| {
            let av = a.value(p.coords());
            let dpsi = C64::i() * TWO_PI * nu.components()[l] as f64
                * eval_spectral_basis(&nu, p).unwrap();
            av * dpsi
        };
        let mut div = C64::new(0.0, 0.0);
        for l in 0..2 {
            div += (flux(&x.shifted(l, h), l) - flux(&x.shifted(l, -h), l)) / (2.0 * h);
        }
        assert!(close(-div, closed, 1e-6), "{} vs {closed}", -div);
    }

    #[test]
    fn phi_paths_agree_at_random_points() {
        let mut rng = crate::rng::seeded(5);
        for name in ["a1", "a2"] {
            let a = builtin_coefficient(name, 3).unwrap();
            let set = IndexSet::hyperbolic_cross(3, 8).unwrap();
            for _ in 0..100 {
                let x = TorusPoint::new((0..3).map(|_| rng.random::<f64>()).collect());
                let nu = &set.indices()[rng.random_range(0..set.len())];
                let c = eval_phi(&a, nu, &x).unwrap();
                let p = eval_phi_product_rule(&a, nu, &x).unwrap();
                assert!(close(c, p, 1e-10));
            }
        }
    }

    #[test]
    fn synthesize_basics() {
        let set = IndexSet::hyperbolic_cross(2, 4).unwrap();
        let o = TorusPoint::origin(2);
        let zeros = vec![C64::new(0.0, 0.0); set.len()];
        assert_eq!(synthesize(&zeros, &set, &o, Basis::Fourier).unwrap(), C64::new(0.0, 0.0));
        let mut unit = zeros.clone();
        unit[set.index_of(&mi(&[1, 0])).unwrap()] = C64::new(1.0, 0.0);
        assert!(close(synthesize(&unit, &set, &o, Basis::Fourier).unwrap(), C64::new(1.0, 0.0), 1e-15));
        assert!(synthesize(&unit[1..], &set, &o, Basis::Fourier).is_err());
    }

    #[test]
    fn conversion_values_and_round_trip() {
        let set = IndexSet::hyperbolic_cross(2, 5).unwrap();
        let i10 = set.index_of(&mi(&[1, 0])).unwrap();
        let i11 = set.index_of(&mi(&[1, 1])).unwrap();
        let mut c = vec![C64::new(0.0, 0.0); set.len()];
        c[i10] = C64::new(1.0, 0.0);
        let f = convert_coefficients(&c, &set, Conversion::SpectralToFourier).unwrap();
        assert!((f[i10].re - 1.0 / FOUR_PI_SQ).abs() < 1e-18);
        let mut g = vec![C64::new(0.0, 0.0); set.len()];
        g[i11] = C64::new(1.0, 0.0);
        let s = convert_coefficients(&g, &set, Conversion::FourierToSpectral).unwrap();
        assert!((s[i11].re - 8.0 * PI * PI).abs() < 1e-12);
    }

    #[test]
    fn empirical_fourier_gram_is_near_identity() {
        let set = IndexSet::hyperbolic_cross(2, 10).unwrap();
        let sp = SparseIndices::new(&set);
        let mut rng = crate::rng::seeded(17);
        let n = set.len();
        let m = 100_000;
        let mut g = vec![C64::new(0.0, 0.0); n * n];
        let mut row = vec![C64::new(0.0, 0.0); n];
        for _ in 0..m {
            let x = [rng.random::<f64>(), rng.random::<f64>()];
            let t = ExpTable::new(&x, sp.max_frequency);
            for (j, e) in sp.entries.iter().enumerate() {
                row[j] = t.fourier(e);
            }
            for i in 0..n {
                let ci = row[i].conj();
                for j in 0..n {
                    g[i * n + j] += ci * row[j];
                }
            }
        }
        let mut worst = 0.0f64;
        for i in 0..n {
            assert!((g[i * n + i].re / m as f64 - 1.0).abs() < 1e-12);
            for j in 0..n {
                if i != j {
                    worst = worst.max(g[i * n + j].norm() / m as f64);
                }
            }
        }
        assert!(worst < 0.05, "worst off-diagonal {worst}");
    }

    #[test]
    fn exp_table_matches_direct_evaluation() {
        let set = IndexSet::hyperbolic_cross(3, 12).unwrap();
        let sp = SparseIndices::new(&set);
        let x = TorusPoint::new(vec![0.31, 0.77, 0.05]);
        let t = ExpTable::new(x.coords(), sp.max_frequency);
        for (nu, e) in set.iter().zip(&sp.entries) {
            assert!(close(t.fourier(e), eval_fourier(nu, &x).unwrap(), 1e-13));
        }
    }

    proptest! {
        #[test]
        fn fourier_has_unit_modulus(k1 in -50i64..50, k2 in -50i64..50, x1 in 0.0f64..1.0, x2 in 0.0f64..1.0) {
            let v = eval_fourier(&mi(&[k1, k2]), &TorusPoint::new(vec![x1, x2])).unwrap();
            prop_assert!((v.norm() - 1.0).abs() < 1e-14);
        }

        #[test]
        fn conversion_round_trip(re in proptest::collection::vec(-10.0f64..10.0, 8), im in proptest::collection::vec(-10.0f64..10.0, 8)) {
            let set = IndexSet::hyperbolic_cross(2, 3).unwrap();
            prop_assert_eq!(set.len(), 8);
            let c: Vec<C64> = re.iter().zip(&im).map(|(&a, &b)| C64::new(a, b)).collect();
            let f = convert_coefficients(&c, &set, Conversion::SpectralToFourier).unwrap();
            let back = convert_coefficients(f.as_slice().unwrap(), &set, Conversion::FourierToSpectral).unwrap();
            for (x, y) in c.iter().zip(back.iter()) {
                prop_assert!((x - y).norm() <= 1e-14 * (1.0 + x.norm()));
            }
        }
    }
}
