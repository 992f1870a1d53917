//! Domain types: resource catalogs, type distributions, valuation families,
//! user profiles, allocations, type grids, and discretized mechanisms.
//!
//! Everything here is immutable after construction and safe to share across
//! threads. Indices are 0-based throughout.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Shared closure over a type scalar.
pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

// ---------------------------------------------------------------------------
// ResourceCatalog
// ---------------------------------------------------------------------------

/// Partition of `M` resources into `G` groups of substitutable resources.
///
/// Resources in the same group are substitutable; resources in different
/// groups are complementary. Every resource belongs to exactly one group, so
/// no "triangle" relation among three resources is representable. Flat
/// resource indices are assigned group by group.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResourceCatalog {
    group_sizes: Vec<usize>,
    // offsets[k] = first flat index of group k; offsets[G] = M
    offsets: Vec<usize>,
}

impl ResourceCatalog {
    pub fn new(group_sizes: &[usize]) -> Result<Self> {
        if group_sizes.is_empty() {
            return Err(Error::InvalidCatalog("no groups".into()));
        }
        if let Some(k) = group_sizes.iter().position(|&s| s == 0) {
            return Err(Error::InvalidCatalog(format!("group {k} has size 0")));
        }
        let mut offsets = Vec::with_capacity(group_sizes.len() + 1);
        let mut acc = 0usize;
        for &s in group_sizes {
            offsets.push(acc);
            acc += s;
        }
        offsets.push(acc);
        Ok(Self {
            group_sizes: group_sizes.to_vec(),
            offsets,
        })
    }

    pub fn num_groups(&self) -> usize {
        self.group_sizes.len()
    }

    pub fn num_resources(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    pub fn group_sizes(&self) -> &[usize] {
        &self.group_sizes
    }

    /// Flat index of the `rank`-th resource of `group`.
    pub fn flat_index(&self, group: usize, rank: usize) -> Result<usize> {
        if group >= self.num_groups() {
            return Err(Error::IndexOutOfRange(format!(
                "group {group} of {}",
                self.num_groups()
            )));
        }
        if rank >= self.group_sizes[group] {
            return Err(Error::IndexOutOfRange(format!(
                "rank {rank} in group {group} of size {}",
                self.group_sizes[group]
            )));
        }
        Ok(self.offsets[group] + rank)
    }

    /// Inverse of [`flat_index`](Self::flat_index): `(group, rank)` of resource `j`.
    pub fn locate(&self, j: usize) -> Result<(usize, usize)> {
        if j >= self.num_resources() {
            return Err(Error::IndexOutOfRange(format!(
                "resource {j} of {}",
                self.num_resources()
            )));
        }
        // offsets is sorted; find the group whose range contains j.
        let group = match self.offsets.binary_search(&j) {
            Ok(k) if k < self.num_groups() => k,
            Ok(k) => k - 1,
            Err(k) => k - 1,
        };
        Ok((group, j - self.offsets[group]))
    }

    /// Flat index range of group `k`.
    pub fn group_range(&self, k: usize) -> std::ops::Range<usize> {
        self.offsets[k]..self.offsets[k + 1]
    }
}

/// Convenience constructor matching the catalog-building entry point.
pub fn build_catalog(group_sizes: &[usize]) -> Result<ResourceCatalog> {
    ResourceCatalog::new(group_sizes)
}

// ---------------------------------------------------------------------------
// TypeDistribution
// ---------------------------------------------------------------------------

/// A user's private-type law: CDF `F`, PDF `f`, and bounds.
#[derive(Clone)]
pub enum TypeDistribution {
    /// Uniform on [0, 1]: F(t) = t.
    Uniform01,
    /// F(t) = t^exponent on [0, 1].
    PowerCdf { exponent: f64 },
    /// Degenerate distribution at a fixed type. F is a step function and the
    /// density is undefined; operations needing `f` must not be called.
    PointMass { value: f64 },
    /// User-supplied CDF/PDF pair on [lower, upper].
    Custom {
        lower: f64,
        upper: f64,
        cdf: ScalarFn,
        pdf: ScalarFn,
    },
}

impl TypeDistribution {
    pub fn bounds(&self) -> (f64, f64) {
        match self {
            Self::Uniform01 | Self::PowerCdf { .. } => (0.0, 1.0),
            Self::PointMass { value } => (*value, *value),
            Self::Custom { lower, upper, .. } => (*lower, *upper),
        }
    }

    pub fn cdf(&self, t: f64) -> f64 {
        match self {
            Self::Uniform01 => t.clamp(0.0, 1.0),
            Self::PowerCdf { exponent } => t.clamp(0.0, 1.0).powf(*exponent),
            Self::PointMass { value } => {
                if t < *value {
                    0.0
                } else {
                    1.0
                }
            }
            Self::Custom { cdf, .. } => cdf(t),
        }
    }

    pub fn pdf(&self, t: f64) -> Result<f64> {
        match self {
            Self::Uniform01 => Ok(1.0),
            Self::PowerCdf { exponent } => Ok(exponent * t.powf(exponent - 1.0)),
            Self::PointMass { .. } => Err(Error::PointMassDensity),
            Self::Custom { pdf, .. } => Ok(pdf(t)),
        }
    }

    pub fn is_point_mass(&self) -> bool {
        matches!(self, Self::PointMass { .. })
    }
}

impl fmt::Debug for TypeDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Uniform01 => write!(f, "Uniform01"),
            Self::PowerCdf { exponent } => write!(f, "PowerCdf({exponent})"),
            Self::PointMass { value } => write!(f, "PointMass({value})"),
            Self::Custom { lower, upper, .. } => write!(f, "Custom[{lower}, {upper}]"),
        }
    }
}

// ---------------------------------------------------------------------------
// ValuationFunction
// ---------------------------------------------------------------------------

/// Per-resource valuation as a function of the owner's type.
#[derive(Clone)]
pub enum ValuationFunction {
    /// γ·t
    Linear { slope: f64 },
    /// ln(1 + θ/t); singular and decreasing near t = 0.
    LogInverse { theta: f64 },
    /// γ·√t
    SqrtLinear { slope: f64 },
    /// √t·ln(1 + θ/√t)
    SqrtLog { theta: f64 },
    /// t·ln(1 + θ/t)
    LinLog { theta: f64 },
    /// User-supplied value and derivative.
    Custom {
        value: ScalarFn,
        derivative: ScalarFn,
    },
}

impl fmt::Debug for ValuationFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Linear { slope } => write!(f, "Linear({slope})"),
            Self::LogInverse { theta } => write!(f, "LogInverse({theta})"),
            Self::SqrtLinear { slope } => write!(f, "SqrtLinear({slope})"),
            Self::SqrtLog { theta } => write!(f, "SqrtLog({theta})"),
            Self::LinLog { theta } => write!(f, "LinLog({theta})"),
            Self::Custom { .. } => write!(f, "Custom"),
        }
    }
}

// ---------------------------------------------------------------------------
// Factor (premium / discount coefficients)
// ---------------------------------------------------------------------------

/// A premium or discount coefficient: a constant, or a function of the
/// owner's type.
#[derive(Clone)]
pub enum Factor {
    Constant(f64),
    OfType(ScalarFn),
}

impl Factor {
    pub fn at(&self, t: f64) -> f64 {
        match self {
            Self::Constant(c) => *c,
            Self::OfType(f) => f(t),
        }
    }
}

impl From<f64> for Factor {
    fn from(c: f64) -> Self {
        Self::Constant(c)
    }
}

impl fmt::Debug for Factor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Constant(c) => write!(f, "Constant({c})"),
            Self::OfType(_) => write!(f, "OfType"),
        }
    }
}

// ---------------------------------------------------------------------------
// UserProfile
// ---------------------------------------------------------------------------

/// One buyer: type law, one valuation per flat resource index, and the
/// premium/discount coefficients of the surplus term.
#[derive(Debug, Clone)]
pub struct UserProfile {
    pub type_dist: TypeDistribution,
    pub valuations: Vec<ValuationFunction>,
    pub premium: Factor,
    pub discount: Factor,
}

impl UserProfile {
    pub fn validate(&self, catalog: &ResourceCatalog) -> Result<()> {
        if self.valuations.len() != catalog.num_resources() {
            return Err(Error::InvalidProfile(format!(
                "{} valuations for {} resources",
                self.valuations.len(),
                catalog.num_resources()
            )));
        }
        let (lo, hi) = self.type_dist.bounds();
        for t in [lo, hi] {
            for (name, factor) in [("premium", &self.premium), ("discount", &self.discount)] {
                let v = factor.at(t);
                if !v.is_finite() {
                    return Err(Error::InvalidProfile(format!(
                        "{name} factor is {v} at t={t}"
                    )));
                }
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Allocation
// ---------------------------------------------------------------------------

/// An N×M matrix of allocation proportions in [0, 1], with per-resource
/// supply Σ_i p_ij ≤ 1.
#[derive(Debug, Clone, PartialEq)]
pub struct Allocation {
    users: usize,
    resources: usize,
    values: Vec<f64>, // row-major, user-major
}

impl Allocation {
    pub fn zeros(users: usize, resources: usize) -> Self {
        Self {
            users,
            resources,
            values: vec![0.0; users * resources],
        }
    }

    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let users = rows.len();
        let resources = rows.first().map_or(0, |r| r.len());
        let mut values = Vec::with_capacity(users * resources);
        for r in rows {
            assert_eq!(r.len(), resources);
            values.extend_from_slice(r);
        }
        Self {
            users,
            resources,
            values,
        }
    }

    pub fn num_users(&self) -> usize {
        self.users
    }

    pub fn num_resources(&self) -> usize {
        self.resources
    }

    pub fn get(&self, user: usize, resource: usize) -> f64 {
        self.values[user * self.resources + resource]
    }

    pub fn set(&mut self, user: usize, resource: usize, p: f64) {
        self.values[user * self.resources + resource] = p;
    }

    pub fn row(&self, user: usize) -> &[f64] {
        &self.values[user * self.resources..(user + 1) * self.resources]
    }

    /// Box and supply constraints, within `tol`.
    pub fn validate(&self, tol: f64) -> Result<()> {
        for (idx, &p) in self.values.iter().enumerate() {
            if !(-tol..=1.0 + tol).contains(&p) {
                return Err(Error::InvalidAllocation(format!(
                    "p[{},{}] = {p} outside [0,1]",
                    idx / self.resources,
                    idx % self.resources
                )));
            }
        }
        for j in 0..self.resources {
            let supply: f64 = (0..self.users).map(|i| self.get(i, j)).sum();
            if supply > 1.0 + tol {
                return Err(Error::InvalidAllocation(format!(
                    "resource {j} oversubscribed: {supply}"
                )));
            }
        }
        Ok(())
    }

    /// Aggregate proportion user `i` holds in group `k`.
    pub fn group_sum(&self, catalog: &ResourceCatalog, user: usize, group: usize) -> f64 {
        catalog.group_range(group).map(|j| self.get(user, j)).sum()
    }
}

/// Group aggregate of an arbitrary per-resource row.
pub fn row_group_sum(catalog: &ResourceCatalog, row: &[f64], group: usize) -> f64 {
    catalog.group_range(group).map(|j| row[j]).sum()
}

// ---------------------------------------------------------------------------
// TypeGrid
// ---------------------------------------------------------------------------

/// Discretization of one user's type interval.
///
/// `weights` are plain trapezoid (Lebesgue) weights on [lower, upper].
/// `prob_weights` are CDF increments F(x_a) − F(x_{a−1}); expectations over
/// the type use them, which integrates step-function mechanisms exactly. The
/// first node carries zero probability weight, so singular valuation
/// derivatives at the lower bound never enter an average.
#[derive(Debug, Clone)]
pub struct TypeGrid {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    prob_weights: Vec<f64>,
}

impl TypeGrid {
    pub fn build(dist: &TypeDistribution, resolution: usize) -> Result<Self> {
        if let TypeDistribution::PointMass { value } = dist {
            return Ok(Self {
                nodes: vec![*value],
                weights: vec![1.0],
                prob_weights: vec![1.0],
            });
        }
        if resolution < 2 {
            return Err(Error::InvalidGrid(format!(
                "resolution {resolution} < 2 for a non-degenerate distribution"
            )));
        }
        let (lo, hi) = dist.bounds();
        if !(hi > lo) {
            return Err(Error::InvalidGrid(format!("bounds [{lo}, {hi}]")));
        }
        let step = (hi - lo) / (resolution - 1) as f64;
        let nodes: Vec<f64> = (0..resolution)
            .map(|a| {
                if a == resolution - 1 {
                    hi
                } else {
                    lo + a as f64 * step
                }
            })
            .collect();
        let mut weights = vec![step; resolution];
        weights[0] = step / 2.0;
        weights[resolution - 1] = step / 2.0;
        let mut prob_weights = Vec::with_capacity(resolution);
        prob_weights.push(0.0);
        for a in 1..resolution {
            prob_weights.push(dist.cdf(nodes[a]) - dist.cdf(nodes[a - 1]));
        }
        Ok(Self {
            nodes,
            weights,
            prob_weights,
        })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn node(&self, a: usize) -> f64 {
        self.nodes[a]
    }

    /// Trapezoid (Lebesgue) weights; positive, summing to upper − lower.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// CDF-increment weights; nonnegative, summing to 1.
    pub fn prob_weights(&self) -> &[f64] {
        &self.prob_weights
    }

    /// Index of the node equal to `t`, within absolute tolerance 1e-9.
    pub fn node_index(&self, t: f64) -> Option<usize> {
        let i = self
            .nodes
            .partition_point(|&x| x < t - 1e-9)
            .min(self.nodes.len() - 1);
        [i.saturating_sub(1), i, (i + 1).min(self.nodes.len() - 1)].into_iter().find(|&cand| (self.nodes[cand] - t).abs() <= 1e-9)
    }
}

// ---------------------------------------------------------------------------
// MechanismTable
// ---------------------------------------------------------------------------

/// A discretized mechanism: an allocation at every joint grid point and an
/// expected cost for every user at every own-type node.
///
/// Joint points are flattened row-major with user 0 slowest.
#[derive(Debug, Clone)]
pub struct MechanismTable {
    grids: Vec<TypeGrid>,
    num_resources: usize,
    allocations: Vec<Allocation>,
    costs: Vec<Vec<f64>>,
}

/// Number of joint points of a grid shape.
pub fn joint_len(shape: &[usize]) -> usize {
    shape.iter().product()
}

/// Decode a flat joint index into a multi-index (user 0 slowest).
pub fn unflat_into(mut flat: usize, shape: &[usize], out: &mut [usize]) {
    for i in (0..shape.len()).rev() {
        out[i] = flat % shape[i];
        flat /= shape[i];
    }
}

/// Encode a multi-index into a flat joint index.
pub fn flat_of(idx: &[usize], shape: &[usize]) -> usize {
    let mut flat = 0usize;
    for (i, &a) in idx.iter().enumerate() {
        flat = flat * shape[i] + a;
    }
    flat
}

impl MechanismTable {
    /// All-zero mechanism (nothing allocated, nothing charged).
    pub fn zero(grids: Vec<TypeGrid>, num_resources: usize) -> Self {
        let shape: Vec<usize> = grids.iter().map(|g| g.len()).collect();
        let n = grids.len();
        let allocations = vec![Allocation::zeros(n, num_resources); joint_len(&shape)];
        let costs = shape.iter().map(|&r| vec![0.0; r]).collect();
        Self {
            grids,
            num_resources,
            allocations,
            costs,
        }
    }

    pub fn new(
        grids: Vec<TypeGrid>,
        num_resources: usize,
        allocations: Vec<Allocation>,
        costs: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let shape: Vec<usize> = grids.iter().map(|g| g.len()).collect();
        if allocations.len() != joint_len(&shape) {
            return Err(Error::InvalidGrid(format!(
                "{} allocations for {} joint points",
                allocations.len(),
                joint_len(&shape)
            )));
        }
        if costs.len() != grids.len() || costs.iter().zip(&shape).any(|(c, &r)| c.len() != r) {
            return Err(Error::InvalidGrid("cost table shape mismatch".into()));
        }
        Ok(Self {
            grids,
            num_resources,
            allocations,
            costs,
        })
    }

    pub fn num_users(&self) -> usize {
        self.grids.len()
    }

    pub fn num_resources(&self) -> usize {
        self.num_resources
    }

    pub fn grids(&self) -> &[TypeGrid] {
        &self.grids
    }

    pub fn grid(&self, user: usize) -> &TypeGrid {
        &self.grids[user]
    }

    pub fn shape(&self) -> Vec<usize> {
        self.grids.iter().map(|g| g.len()).collect()
    }

    pub fn allocation_at_flat(&self, flat: usize) -> &Allocation {
        &self.allocations[flat]
    }

    pub fn allocation_at(&self, idx: &[usize]) -> &Allocation {
        &self.allocations[flat_of(idx, &self.shape())]
    }

    pub fn allocations(&self) -> &[Allocation] {
        &self.allocations
    }

    pub fn cost(&self, user: usize, node: usize) -> f64 {
        self.costs[user][node]
    }

    pub fn costs(&self, user: usize) -> &[f64] {
        &self.costs[user]
    }

    pub fn set_cost(&mut self, user: usize, node: usize, c: f64) {
        self.costs[user][node] = c;
    }

    pub fn set_allocation_flat(&mut self, flat: usize, alloc: Allocation) {
        self.allocations[flat] = alloc;
    }
}
