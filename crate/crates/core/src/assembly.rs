//! Monte Carlo collocation and the system `A z = b`.
//!
//! ```text
//! A_ij = Φ_{ν_j}(y_i) / √m,   b_i = f(y_i) / √m
//! ```
//!
//! Rows are filled from `a(y_i)`, `∇a(y_i)` and a per-row table of
//! `exp(2πi k y_il)`, since `Φ_ν = F_ν (a − i ∇a·ν / (2π‖ν‖²))`.

use std::io::Write;
use std::path::Path;

use ndarray::{Array1, Array2};
use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::index_set::IndexSet;
use crate::problem::{forcing_analytic, forcing_fd6, DiffusionCoefficient, ForcingMode, ManufacturedSolution};
use crate::spectral::{phi_from_local, ExpTable, SparseIndices, TorusPoint};
use crate::C64;

/// The compressive Fourier collocation system.
#[derive(Clone, Debug)]
pub struct CollocationSystem {
    pub matrix: Array2<C64>,
    pub rhs: Array1<C64>,
    pub points: Vec<TorusPoint>,
    pub index_set: IndexSet,
    pub seed: Option<u64>,
}

impl CollocationSystem {
    pub fn rows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn cols(&self) -> usize {
        self.matrix.ncols()
    }

    /// `‖A_{·j}‖₂` for every column.
    pub fn column_norms(&self) -> Vec<f64> {
        let (m, n) = self.matrix.dim();
        let mut s = vec![0.0; n];
        let a = self.matrix.as_slice().expect("standard layout");
        for i in 0..m {
            for (acc, v) in s.iter_mut().zip(&a[i * n..(i + 1) * n]) {
                *acc += v.norm_sqr();
            }
        }
        s.into_iter().map(f64::sqrt).collect()
    }

    /// `A z − b`.
    pub fn residual(&self, z: &[C64]) -> Result<Array1<C64>> {
        if z.len() != self.cols() {
            return Err(Error::DimensionMismatch {
                expected: self.cols(),
                actual: z.len(),
            });
        }
        let mut r = matvec(&self.matrix, z);
        r.iter_mut().zip(self.rhs.iter()).for_each(|(ri, bi)| *ri -= bi);
        Ok(r)
    }

    /// Writes `A` row-major as `re,im` pairs and `b` as one `re,im` row per entry.
    pub fn write_csv(&self, matrix_path: &Path, rhs_path: &Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(matrix_path)?);
        for row in self.matrix.rows() {
            let mut first = true;
            for v in row {
                if !first {
                    w.write_all(b",")?;
                }
                first = false;
                write!(w, "{:e},{:e}", v.re, v.im)?;
            }
            w.write_all(b"\n")?;
        }
        w.flush()?;
        let mut w = std::io::BufWriter::new(std::fs::File::create(rhs_path)?);
        for v in &self.rhs {
            writeln!(w, "{:e},{:e}", v.re, v.im)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `A x` for a row-major dense matrix.
pub fn matvec(a: &Array2<C64>, x: &[C64]) -> Array1<C64> {
    let n = a.ncols();
    match a.as_slice() {
        Some(s) => s
            .chunks_exact(n.max(1))
            .take(a.nrows())
            .map(|row| row.iter().zip(x).map(|(p, q)| p * q).sum())
            .collect(),
        None => a.rows().into_iter().map(|row| row.iter().zip(x).map(|(p, q)| p * q).sum()).collect(),
    }
}

/// `A^H y`.
pub fn matvec_adjoint(a: &Array2<C64>, y: &[C64]) -> Array1<C64> {
    let n = a.ncols();
    let mut out = Array1::zeros(n);
    let o = out.as_slice_mut().expect("contiguous");
    for (row, yi) in a.rows().into_iter().zip(y) {
        for (acc, v) in o.iter_mut().zip(row.iter()) {
            *acc += v.conj() * yi;
        }
    }
    out
}

/// `m` i.i.d. uniform points on `T^d`.
pub fn sample_collocation_points(dim: usize, m: usize, seed: u64) -> Vec<TorusPoint> {
    let mut rng = crate::rng::seeded(seed);
    sample_points_with(&mut rng, dim, m)
}

pub fn sample_points_with<R: Rng>(rng: &mut R, dim: usize, m: usize) -> Vec<TorusPoint> {
    (0..m)
        .map(|_| TorusPoint::new((0..dim).map(|_| rng.random::<f64>()).collect()))
        .collect()
}

type Forcing<'a> = dyn Fn(&TorusPoint) -> Result<C64> + Sync + 'a;

/// Fills `A` and `b` from `a`, a pointwise forcing `f` and the points.
pub fn assemble(
    a: &DiffusionCoefficient,
    f: &Forcing<'_>,
    set: &IndexSet,
    points: Vec<TorusPoint>,
) -> Result<CollocationSystem> {
    if points.is_empty() {
        return Err(Error::Empty("collocation points"));
    }
    if set.is_empty() {
        return Err(Error::Empty("index set"));
    }
    if a.dim() != set.dim() {
        return Err(Error::DimensionMismatch {
            expected: set.dim(),
            actual: a.dim(),
        });
    }
    if let Some(p) = points.iter().find(|p| p.dim() != set.dim()) {
        return Err(Error::DimensionMismatch {
            expected: set.dim(),
            actual: p.dim(),
        });
    }
    let m = points.len();
    let n = set.len();
    let scale = 1.0 / (m as f64).sqrt();
    let sparse = SparseIndices::new(set);
    let mut data = vec![C64::new(0.0, 0.0); m * n];
    let mut rhs = vec![C64::new(0.0, 0.0); m];
    data.par_chunks_mut(n)
        .zip(rhs.par_iter_mut())
        .zip(points.par_iter())
        .enumerate()
        .try_for_each(|(i, ((row, bi), y))| -> Result<()> {
            fill_row(a, &sparse, y.coords(), scale, row).map_err(|column| Error::Evaluation {
                row: i,
                column,
                message: "non-finite matrix entry".into(),
            })?;
            let fv = f(y).map_err(|e| Error::Evaluation {
                row: i,
                column: n,
                message: e.to_string(),
            })?;
            if !fv.is_finite() {
                return Err(Error::Evaluation {
                    row: i,
                    column: n,
                    message: "non-finite forcing value".into(),
                });
            }
            *bi = fv * scale;
            Ok(())
        })?;
    Ok(CollocationSystem {
        matrix: Array2::from_shape_vec((m, n), data).expect("shape"),
        rhs: Array1::from(rhs),
        points,
        index_set: set.clone(),
        seed: None,
    })
}

/// Writes `scale · Φ_ν(y)` for all `ν`; returns the first bad column.
fn fill_row(
    a: &DiffusionCoefficient,
    sparse: &SparseIndices,
    y: &[f64],
    scale: f64,
    row: &mut [C64],
) -> std::result::Result<(), usize> {
    let mut grad = vec![C64::new(0.0, 0.0); y.len()];
    let av = a.value_and_gradient(y, &mut grad) * scale;
    grad.iter_mut().for_each(|g| *g *= scale);
    let table = ExpTable::new(y, sparse.max_frequency);
    let mut nu = vec![0i64; y.len()];
    for (j, (entries, slot)) in sparse.entries.iter().zip(row.iter_mut()).enumerate() {
        for &(l, k) in entries {
            nu[l] = k;
        }
        *slot = phi_from_local(av, &grad, &nu, sparse.norm_sq[j], table.fourier(entries));
        for &(l, _) in entries {
            nu[l] = 0;
        }
        if !slot.is_finite() {
            return Err(j);
        }
    }
    Ok(())
}

/// [`assemble`] with `f = −∇·(a∇u)` from a manufactured solution.
pub fn assemble_from_solution(
    a: &DiffusionCoefficient,
    u: &ManufacturedSolution,
    set: &IndexSet,
    points: Vec<TorusPoint>,
    mode: ForcingMode,
) -> Result<CollocationSystem> {
    if u.dim != set.dim() {
        return Err(Error::DimensionMismatch {
            expected: set.dim(),
            actual: u.dim,
        });
    }
    if let ForcingMode::Fd6 { h } = mode {
        if !(h > 0.0) {
            return Err(Error::InvalidArgument("finite-difference step must be positive".into()));
        }
    }
    let f = move |x: &TorusPoint| -> Result<C64> {
        Ok(match mode {
            ForcingMode::Analytic => forcing_analytic(a, u, x.coords()),
            ForcingMode::Fd6 { h } => forcing_fd6(a, u, x.coords(), h),
        })
    };
    assemble(a, &f, set, points)
}

/// `e = A c_Λ − b` on the given points (analytic forcing).
pub fn truncation_error_vector(
    a: &DiffusionCoefficient,
    u: &ManufacturedSolution,
    coeffs: &[C64],
    set: &IndexSet,
    points: &[TorusPoint],
) -> Result<Array1<C64>> {
    if coeffs.len() != set.len() {
        return Err(Error::DimensionMismatch {
            expected: set.len(),
            actual: coeffs.len(),
        });
    }
    let scale = 1.0 / (points.len() as f64).sqrt();
    Ok(operator_residual(a, u, coeffs, set, points)?.mapv(|v| v * scale))
}

/// `Σ_ν c_ν Φ_ν(x) − f(x)` pointwise, without storing a matrix.
pub fn operator_residual(
    a: &DiffusionCoefficient,
    u: &ManufacturedSolution,
    coeffs: &[C64],
    set: &IndexSet,
    points: &[TorusPoint],
) -> Result<Array1<C64>> {
    if coeffs.len() != set.len() {
        return Err(Error::DimensionMismatch {
            expected: set.len(),
            actual: coeffs.len(),
        });
    }
    let sparse = SparseIndices::new(set);
    let out: Vec<C64> = points
        .par_iter()
        .map_init(
            || vec![C64::new(0.0, 0.0); set.len()],
            |row, y| {
                let _ = fill_row(a, &sparse, y.coords(), 1.0, row);
                let s: C64 = row.iter().zip(coeffs).map(|(p, c)| p * c).sum();
                s - forcing_analytic(a, u, y.coords())
            },
        )
        .collect();
    Ok(Array1::from(out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::index_set::MultiIndex;
    use crate::problem::{builtin_coefficient, make_nonsparse_solution, make_sparse_solution, FrequencyRegime};
    use crate::spectral::{eval_fourier, eval_phi};

    #[test]
    fn points_are_reproducible_and_uniform() {
        let p = sample_collocation_points(3, 100_000, 9);
        assert_eq!(p, sample_collocation_points(3, 100_000, 9));
        let m = p.len() as f64;
        let mut mean = [0.0; 3];
        for x in &p {
            for l in 0..3 {
                mean[l] += x.coords()[l] / m;
            }
        }
        let tol = 3.0 / (12.0 * m).sqrt();
        for v in mean {
            assert!((v - 0.5).abs() < tol);
        }
        // covariance of independent U(0,1): 0 with SE 1/(12√m)
        let cov01: f64 = p.iter().map(|x| (x.coords()[0] - mean[0]) * (x.coords()[1] - mean[1])).sum::<f64>() / m;
        assert!(cov01.abs() < 3.0 / (12.0 * m.sqrt()));
    }

    #[test]
    fn single_row_constant_coefficient() {
        let set = IndexSet::from_indices(2, vec![MultiIndex::from(vec![1, 0])]).unwrap();
        let a = builtin_coefficient("a1", 2).unwrap();
        let f = |_: &TorusPoint| Ok(C64::new(0.0, 0.0));
        let s = assemble(&a, &f, &set, vec![TorusPoint::origin(2)]).unwrap();
        assert_eq!(s.matrix[[0, 0]], C64::new(1.0, 0.0));
    }

    #[test]
    fn constant_coefficient_gives_scaled_vandermonde() {
        let set = IndexSet::hyperbolic_cross(2, 39).unwrap();
        let a = builtin_coefficient("a1", 2).unwrap();
        let pts = sample_collocation_points(2, set.len(), 3);
        let f = |_: &TorusPoint| Ok(C64::new(0.0, 0.0));
        let s = assemble(&a, &f, &set, pts.clone()).unwrap();
        let scale = 1.0 / (pts.len() as f64).sqrt();
        for (i, y) in pts.iter().enumerate().step_by(17) {
            for (j, nu) in set.iter().enumerate() {
                let v = eval_fourier(nu, y).unwrap() * scale;
                assert!((s.matrix[[i, j]] - v).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn entries_match_pointwise_phi() {
        let set = IndexSet::hyperbolic_cross(2, 12).unwrap();
        let pts = sample_collocation_points(2, 20, 4);
        for name in ["a2", "a3"] {
            let a = builtin_coefficient(name, 2).unwrap();
            let f = |_: &TorusPoint| Ok(C64::new(0.0, 0.0));
            let s = assemble(&a, &f, &set, pts.clone()).unwrap();
            let scale = 1.0 / (pts.len() as f64).sqrt();
            for (i, y) in pts.iter().enumerate() {
                for (j, nu) in set.iter().enumerate() {
                    let v = eval_phi(&a, nu, y).unwrap() * scale;
                    assert!((s.matrix[[i, j]] - v).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn exact_representation_has_zero_residual() {
        let set = IndexSet::hyperbolic_cross(2, 39).unwrap();
        let u = make_sparse_solution(&set, 10, 5, FrequencyRegime::Box { max: 5 }).unwrap();
        let c = u.spectral_coefficients(&set);
        for name in ["a1", "a2", "a3"] {
            let a = builtin_coefficient(name, 2).unwrap();
            let s = assemble_from_solution(&a, &u, &set, sample_collocation_points(2, 64, 6), ForcingMode::Analytic).unwrap();
            let r = s.residual(c.as_slice().unwrap()).unwrap();
            let nr = r.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
            assert!(nr < 1e-10, "{name}: {nr:e}");
            let e = truncation_error_vector(&a, &u, c.as_slice().unwrap(), &set, &s.points).unwrap();
            assert!(e.iter().all(|v| v.norm() < 1e-10));
        }
    }

    #[test]
    fn reassembly_is_bitwise_identical() {
        let set = IndexSet::hyperbolic_cross(2, 20).unwrap();
        let u = make_nonsparse_solution(2).unwrap();
        let a = builtin_coefficient("a3", 2).unwrap();
        let s1 = assemble_from_solution(&a, &u, &set, sample_collocation_points(2, 50, 8), ForcingMode::Analytic).unwrap();
        let s2 = assemble_from_solution(&a, &u, &set, sample_collocation_points(2, 50, 8), ForcingMode::Analytic).unwrap();
        assert!(s1.matrix.iter().zip(s2.matrix.iter()).all(|(p, q)| p.re.to_bits() == q.re.to_bits() && p.im.to_bits() == q.im.to_bits()));
        assert!(s1.rhs.iter().zip(s2.rhs.iter()).all(|(p, q)| p.re.to_bits() == q.re.to_bits() && p.im.to_bits() == q.im.to_bits()));
    }

    #[test]
    fn column_norms_average_to_gram_diagonal() {
        let set = IndexSet::hyperbolic_cross(2, 39).unwrap();
        let a = builtin_coefficient("a1", 2).unwrap();
        let f = |_: &TorusPoint| Ok(C64::new(0.0, 0.0));
        let mut mean = vec![0.0; set.len()];
        for r in 0..50 {
            let s = assemble(&a, &f, &set, sample_collocation_points(2, 64, 100 + r)).unwrap();
            for (acc, c) in mean.iter_mut().zip(s.column_norms()) {
                *acc += c * c / 50.0;
            }
        }
        assert!(mean.iter().all(|v| (v - 1.0).abs() < 0.05));
    }

    #[test]
    fn rejects_bad_inputs() {
        let set = IndexSet::hyperbolic_cross(2, 5).unwrap();
        let a = builtin_coefficient("a1", 2).unwrap();
        let f = |_: &TorusPoint| Ok(C64::new(0.0, 0.0));
        assert!(assemble(&a, &f, &set, vec![]).is_err());
        assert!(assemble(&a, &f, &set, vec![TorusPoint::origin(3)]).is_err());
        let bad = |_: &TorusPoint| Ok(C64::new(f64::NAN, 0.0));
        match assemble(&a, &bad, &set, sample_collocation_points(2, 3, 1)) {
            Err(Error::Evaluation { row, column, .. }) => {
                assert_eq!(row, 0);
                assert_eq!(column, set.len());
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn csv_dump_shapes() {
        let set = IndexSet::hyperbolic_cross(2, 4).unwrap();
        let a = builtin_coefficient("a2", 2).unwrap();
        let u = make_nonsparse_solution(2).unwrap();
        let s = assemble_from_solution(&a, &u, &set, sample_collocation_points(2, 5, 1), ForcingMode::Analytic).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let (pa, pb) = (dir.path().join("A.csv"), dir.path().join("b.csv"));
        s.write_csv(&pa, &pb).unwrap();
        let text = std::fs::read_to_string(&pa).unwrap();
        assert_eq!(text.lines().count(), 5);
        assert_eq!(text.lines().next().unwrap().split(',').count(), 2 * set.len());
        let first: f64 = text.lines().next().unwrap().split(',').next().unwrap().parse().unwrap();
        assert!((first - s.matrix[[0, 0]].re).abs() <= 1e-15 * first.abs().max(1.0));
        assert_eq!(std::fs::read_to_string(&pb).unwrap().lines().count(), 5);
    }
}
