//! Error metrics and aggregation.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::index_set::IndexSet;
use crate::problem::ManufacturedSolution;
use crate::recovery::Method;
use crate::spectral::{ExpTable, SparseIndices, FOUR_PI_SQ};
use crate::C64;

/// Value of an approximation at one point.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ErrorSample {
    pub relative_l2: f64,
    pub seed: u64,
    pub m: usize,
    pub method: Method,
}

/// `sqrt(mean |g(x_i)|²)` over `samples` uniform points.
pub fn mc_l2_norm<G>(g: G, dim: usize, samples: usize, seed: u64) -> Result<f64>
where
    G: Fn(&[f64]) -> C64,
{
    if samples == 0 {
        return Err(Error::InvalidArgument("need at least one Monte Carlo sample".into()));
    }
    let mut rng = crate::rng::seeded(seed);
    let mut x = vec![0.0; dim];
    let mut acc = 0.0;
    for _ in 0..samples {
        x.iter_mut().for_each(|t| *t = rng.random());
        acc += g(&x).norm_sqr();
    }
    Ok((acc / samples as f64).sqrt())
}

/// Evaluates `Σ c_ν Ψ_ν` at many points.
pub struct SpectralSynthesizer<'a> {
    sparse: SparseIndices,
    weights: Vec<C64>,
    active: Vec<usize>,
    set: &'a IndexSet,
}

impl<'a> SpectralSynthesizer<'a> {
    pub fn new(set: &'a IndexSet, coeffs: &[C64]) -> Result<Self> {
        if coeffs.len() != set.len() {
            return Err(Error::DimensionMismatch {
                expected: set.len(),
                actual: coeffs.len(),
            });
        }
        let sparse = SparseIndices::new(set);
        let weights: Vec<C64> = coeffs
            .iter()
            .zip(&sparse.norm_sq)
            .map(|(c, n2)| c / (FOUR_PI_SQ * n2))
            .collect();
        let active = (0..set.len()).filter(|&j| weights[j] != C64::new(0.0, 0.0)).collect();
        Ok(Self {
            sparse,
            weights,
            active,
            set,
        })
    }

    pub fn eval(&self, x: &[f64]) -> C64 {
        if self.active.is_empty() {
            return C64::new(0.0, 0.0);
        }
        let t = ExpTable::new(x, self.sparse.max_frequency);
        self.active
            .iter()
            .map(|&j| self.weights[j] * t.fourier(&self.sparse.entries[j]))
            .sum()
    }

    pub fn set(&self) -> &IndexSet {
        self.set
    }
}

/// `‖u − û‖ / ‖u‖` with both norms on the same `samples` Monte Carlo points,
/// `û = Σ ĉ_ν Ψ_ν`.
pub fn relative_l2_error(
    u: &ManufacturedSolution,
    coeffs: &[C64],
    set: &IndexSet,
    samples: usize,
    seed: u64,
) -> Result<f64> {
    let (num, den) = l2_error_parts(u, coeffs, set, samples, seed)?;
    if den == 0.0 {
        return Err(Error::InvalidArgument("reference solution has zero norm".into()));
    }
    Ok(num / den)
}

/// `(‖u − û‖, ‖u‖)` by Monte Carlo.
pub fn l2_error_parts(
    u: &ManufacturedSolution,
    coeffs: &[C64],
    set: &IndexSet,
    samples: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    if samples == 0 {
        return Err(Error::InvalidArgument("need at least one Monte Carlo sample".into()));
    }
    if u.dim != set.dim() {
        return Err(Error::DimensionMismatch {
            expected: set.dim(),
            actual: u.dim,
        });
    }
    let synth = SpectralSynthesizer::new(set, coeffs)?;
    let mut rng = crate::rng::seeded(seed);
    let points: Vec<Vec<f64>> = (0..samples)
        .map(|_| (0..u.dim).map(|_| rng.random::<f64>()).collect())
        .collect();
    let terms: Vec<(f64, f64)> = points
        .par_iter()
        .map(|x| {
            let uv = u.value(x);
            ((uv - synth.eval(x)).norm_sqr(), uv.norm_sqr())
        })
        .collect();
    // sequential sum keeps the result independent of the thread count
    let (num, den) = terms.iter().fold((0.0, 0.0), |p, q| (p.0 + q.0, p.1 + q.1));
    Ok(((num / samples as f64).sqrt(), (den / samples as f64).sqrt()))
}

/// Scale-free relative error between two callables on shared points.
pub fn relative_l2_error_fn<U, V>(u: U, v: V, dim: usize, samples: usize, seed: u64) -> Result<f64>
where
    U: Fn(&[f64]) -> C64,
    V: Fn(&[f64]) -> C64,
{
    if samples == 0 {
        return Err(Error::InvalidArgument("need at least one Monte Carlo sample".into()));
    }
    let mut rng = crate::rng::seeded(seed);
    let mut x = vec![0.0; dim];
    let (mut num, mut den) = (0.0, 0.0);
    for _ in 0..samples {
        x.iter_mut().for_each(|t| *t = rng.random());
        let a = u(&x);
        num += (a - v(&x)).norm_sqr();
        den += a.norm_sqr();
    }
    if den == 0.0 {
        return Err(Error::InvalidArgument("reference function has zero norm".into()));
    }
    Ok((num / den).sqrt())
}

/// `σ_s(c)_p`: ℓ^p norm after zeroing the `s` largest entries (ties by index).
pub fn best_s_term_error(c: &[C64], s: usize, p: u32) -> Result<f64> {
    if p != 1 && p != 2 {
        return Err(Error::InvalidArgument("p must be 1 or 2".into()));
    }
    if s > c.len() {
        return Err(Error::InvalidArgument("s exceeds the vector length".into()));
    }
    let mut order: Vec<usize> = (0..c.len()).collect();
    order.sort_by(|&i, &j| c[j].norm().total_cmp(&c[i].norm()).then(i.cmp(&j)));
    let tail = order[s..].iter().map(|&j| c[j].norm());
    Ok(if p == 1 {
        tail.sum()
    } else {
        tail.map(|v| v * v).sum::<f64>().sqrt()
    })
}

/// Geometric mean and corrected geometric standard-deviation factor.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeometricStats {
    pub mean: f64,
    /// `exp` of the `(n−1)`-normalized standard deviation of `log x`.
    pub std_factor: f64,
    pub count: usize,
    /// Samples at or below zero were clamped to `1e−16`.
    pub clamped: usize,
}

pub const CLAMP_FLOOR: f64 = 1e-16;

pub fn geometric_stats(samples: &[f64]) -> Result<GeometricStats> {
    if samples.is_empty() {
        return Err(Error::Empty("samples"));
    }
    let mut clamped = 0;
    let logs: Vec<f64> = samples
        .iter()
        .map(|&x| {
            if x < CLAMP_FLOOR {
                clamped += 1;
                CLAMP_FLOOR.ln()
            } else {
                x.ln()
            }
        })
        .collect();
    let n = logs.len() as f64;
    let mean = logs.iter().sum::<f64>() / n;
    let var = if logs.len() > 1 {
        logs.iter().map(|l| (l - mean) * (l - mean)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    Ok(GeometricStats {
        mean: mean.exp(),
        std_factor: var.sqrt().exp(),
        count: logs.len(),
        clamped,
    })
}

pub const SUCCESS_THRESHOLD: f64 = 1e-6;

/// Fraction of errors strictly below `threshold`.
pub fn success_rate(errors: &[f64], threshold: f64) -> Result<f64> {
    if errors.is_empty() {
        return Err(Error::Empty("errors"));
    }
    if !(threshold > 0.0) {
        return Err(Error::InvalidArgument("threshold must be positive".into()));
    }
    Ok(errors.iter().filter(|&&e| e < threshold).count() as f64 / errors.len() as f64)
}
