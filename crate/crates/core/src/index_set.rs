//! Hyperbolic-cross multi-index sets.
//!
//! The truncation set is
//!
//! ```text
//! Λ(d, n) = { ν ∈ Z^d : ∏_l (|ν_l| + 1) ≤ n } \ {0}
//! ```
//!
//! stored in lexicographic order of the component tuples (negative values
//! first). The column order of every collocation matrix follows this order.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A frequency vector `ν ∈ Z^d`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MultiIndex(Vec<i64>);

impl MultiIndex {
    pub fn new(components: Vec<i64>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidArgument(
                "multi-index must have at least one component".into(),
            ));
        }
        Ok(Self(components))
    }

    pub fn zero(dim: usize) -> Self {
        Self(vec![0; dim.max(1)])
    }

    /// Unit vector `k · e_axis` in dimension `dim`.
    pub fn axis(dim: usize, axis: usize, k: i64) -> Self {
        let mut v = vec![0; dim];
        v[axis] = k;
        Self(v)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn components(&self) -> &[i64] {
        &self.0
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&c| c == 0)
    }

    pub fn norm_sq(&self) -> f64 {
        self.0.iter().map(|&c| (c * c) as f64).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    /// Number of nonzero components.
    pub fn support_size(&self) -> usize {
        self.0.iter().filter(|&&c| c != 0).count()
    }

    pub fn dot(&self, other: &MultiIndex) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(&a, &b)| (a * b) as f64)
            .sum()
    }

    pub fn max_abs(&self) -> i64 {
        self.0.iter().map(|c| c.abs()).max().unwrap_or(0)
    }

    /// `∏ (|ν_l| + 1)`, saturating.
    pub fn hyperbolic_weight(&self) -> u64 {
        self.0
            .iter()
            .fold(1u64, |acc, &c| acc.saturating_mul(c.unsigned_abs() + 1))
    }

    pub fn add(&self, other: &MultiIndex) -> MultiIndex {
        MultiIndex(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    pub fn sub(&self, other: &MultiIndex) -> MultiIndex {
        MultiIndex(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect())
    }

    pub fn neg(&self) -> MultiIndex {
        MultiIndex(self.0.iter().map(|a| -a).collect())
    }
}

impl From<Vec<i64>> for MultiIndex {
    fn from(v: Vec<i64>) -> Self {
        Self(v)
    }
}

impl From<&[i64]> for MultiIndex {
    fn from(v: &[i64]) -> Self {
        Self(v.to_vec())
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

/// Ordered hyperbolic cross without the zero index.
#[derive(Clone, Debug)]
pub struct IndexSet {
    dim: usize,
    order: u64,
    indices: Vec<MultiIndex>,
    positions: HashMap<MultiIndex, usize>,
}

impl IndexSet {
    /// Builds `Λ(d, n)` by depth-first enumeration bounded by the running
    /// product, so the box `[-n, n]^d` is never materialized.
    pub fn hyperbolic_cross(dim: usize, order: u64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("dimension must be >= 1".into()));
        }
        if order == 0 {
            return Err(Error::InvalidArgument("order must be >= 1".into()));
        }
        let mut indices = Vec::new();
        let mut prefix = Vec::with_capacity(dim);
        enumerate(dim, order, &mut prefix, &mut indices);
        indices.retain(|nu: &MultiIndex| !nu.is_zero());
        Ok(Self::from_sorted(dim, order, indices))
    }

    /// Wraps an arbitrary list of nonzero multi-indices (sorted and
    /// deduplicated). `order` is recorded as the largest hyperbolic weight.
    pub fn from_indices(dim: usize, mut indices: Vec<MultiIndex>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("dimension must be >= 1".into()));
        }
        for nu in &indices {
            if nu.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: nu.dim(),
                });
            }
            if nu.is_zero() {
                return Err(Error::ZeroIndex);
            }
        }
        indices.sort();
        indices.dedup();
        let order = indices
            .iter()
            .map(MultiIndex::hyperbolic_weight)
            .max()
            .unwrap_or(1);
        Ok(Self::from_sorted(dim, order, indices))
    }

    fn from_sorted(dim: usize, order: u64, indices: Vec<MultiIndex>) -> Self {
        let positions = indices
            .iter()
            .enumerate()
            .map(|(i, nu)| (nu.clone(), i))
            .collect();
        Self {
            dim,
            order,
            indices,
            positions,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn order(&self) -> u64 {
        self.order
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn indices(&self) -> &[MultiIndex] {
        &self.indices
    }

    pub fn get(&self, i: usize) -> Option<&MultiIndex> {
        self.indices.get(i)
    }

    pub fn index_of(&self, nu: &MultiIndex) -> Option<usize> {
        self.positions.get(nu).copied()
    }

    pub fn contains(&self, nu: &MultiIndex) -> bool {
        self.positions.contains_key(nu)
    }

    pub fn iter(&self) -> std::slice::Iter<'_, MultiIndex> {
        self.indices.iter()
    }

    /// Largest `|ν_l|` over the set.
    pub fn max_frequency(&self) -> i64 {
        self.indices.iter().map(MultiIndex::max_abs).max().unwrap_or(0)
    }

    /// Writes one multi-index per row as signed integers.
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
        for nu in &self.indices {
            w.write_record(nu.components().iter().map(|c| c.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Membership predicate of the hyperbolic cross (zero excluded).
pub fn in_hyperbolic_cross(nu: &MultiIndex, order: u64) -> bool {
    !nu.is_zero() && nu.hyperbolic_weight() <= order
}

fn enumerate(dim: usize, budget: u64, prefix: &mut Vec<i64>, out: &mut Vec<MultiIndex>) {
    if prefix.len() == dim {
        out.push(MultiIndex(prefix.clone()));
        return;
    }
    // (|k| + 1) <= budget
    let kmax = budget as i64 - 1;
    for k in -kmax..=kmax {
        prefix.push(k);
        enumerate(dim, budget / (k.unsigned_abs() + 1), prefix, out);
        prefix.pop();
    }
}

/// `|Λ(d, n)|` without materializing the set.
pub fn hyperbolic_cross_size(dim: usize, order: u64) -> u64 {
    fn count(dim: usize, budget: u64, memo: &mut HashMap<(usize, u64), u64>) -> u64 {
        if dim == 0 {
            return 1;
        }
        if let Some(&c) = memo.get(&(dim, budget)) {
            return c;
        }
        let mut total = count(dim - 1, budget, memo);
        let mut k = 1u64;
        while k < budget {
            total = total.saturating_add(2u64.saturating_mul(count(dim - 1, budget / (k + 1), memo)));
            k += 1;
        }
        memo.insert((dim, budget), total);
        total
    }
    if dim == 0 || order == 0 {
        return 0;
    }
    count(dim, order, &mut HashMap::new()) - 1
}

/// Upper bound `min{4 n^5 16^d, e^2 n^(2 + log2 d)}` on `|Λ(d, n)|`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CardinalityBound {
    Finite(u64),
    Unbounded,
}

impl CardinalityBound {
    pub fn dominates(&self, size: u64) -> bool {
        match self {
            CardinalityBound::Finite(b) => *b >= size,
            CardinalityBound::Unbounded => true,
        }
    }
}

pub fn cardinality_upper_bound(dim: usize, order: u64) -> Result<CardinalityBound> {
    if dim == 0 || order == 0 {
        return Err(Error::InvalidArgument(
            "dimension and order must be >= 1".into(),
        ));
    }
    let n = order as f64;
    let d = dim as f64;
    // work in log space; 16^d alone overflows u64 near d = 16
    let log_first = 4f64.ln() + 5.0 * n.ln() + d * 16f64.ln();
    let log_second = 2.0 + (2.0 + d.log2()) * n.ln();
    let log_bound = log_first.min(log_second);
    if !log_bound.is_finite() || log_bound >= (u64::MAX as f64).ln() {
        return Ok(CardinalityBound::Unbounded);
    }
    let value = log_bound.exp().ceil();
    if value >= u64::MAX as f64 {
        Ok(CardinalityBound::Unbounded)
    } else {
        Ok(CardinalityBound::Finite(value as u64))
    }
}

/// Largest `n` with `|Λ(d, n)| < budget`, or 0 when no order qualifies.
pub fn largest_order_within_budget(dim: usize, budget: u64) -> Result<u64> {
    if dim == 0 {
        return Err(Error::InvalidArgument("dimension must be >= 1".into()));
    }
    if budget == 0 {
        return Err(Error::InvalidArgument("budget must be >= 1".into()));
    }
    let mut best = 0;
    let mut n = 1u64;
    loop {
        let size = hyperbolic_cross_size(dim, n);
        if size >= budget {
            break;
        }
        best = n;
        // in d = 1 the size grows by two per step, so this always terminates
        n += 1;
    }
    Ok(best)
}
