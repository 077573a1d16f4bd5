//! Sensing graph, bearing algebra and the bearing Laplacian.
//!
//! Agents are numbered `0..n` internally with leaders occupying `0..n_leaders`
//! and followers the rest. Each agent also carries an external label (1-based
//! by default) that is used in reports and error messages.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{DMatrix, DVector, LU};

use crate::error::{Error, Result};
use crate::linalg;
use crate::scalar::Real;

/// Default separation below which two points are considered coincident.
pub const DEFAULT_SEPARATION: f64 = 1e-9;
/// Tolerance on `‖g‖ = 1` accepted by [`projector`].
pub const UNIT_TOLERANCE: f64 = 1e-9;
/// Smallest singular value of `B_ff` below which localization is refused.
/// Unit-norm tolerance, widened to a few ulps for single precision.
fn unit_tolerance<T: Real>() -> T {
    T::lit(UNIT_TOLERANCE).max(T::default_epsilon() * T::lit(8.0))
}

pub const LOCALIZABILITY_THRESHOLD: f64 = 1e-10;

/// Undirected sensing graph with a leader/follower partition.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SensingGraph {
    dim: usize,
    n_leaders: usize,
    labels: Vec<u32>,
    neighbors: Vec<BTreeSet<usize>>,
}

impl SensingGraph {
    /// Builds a graph over agents `1..=n` where `1..=n_leaders` are the leaders.
    ///
    /// Edges use the 1-based numbering; each unordered pair may be listed in
    /// either or both directions.
    pub fn new(n: usize, dim: usize, n_leaders: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let labels = (1..=n as u32).collect();
        let zero_based: Vec<_> = edges
            .iter()
            .map(|&(i, j)| (i.wrapping_sub(1), j.wrapping_sub(1)))
            .collect();
        Self::with_labels(labels, dim, n_leaders, &zero_based)
    }

    /// Builds a graph from internal (0-based) edges and explicit agent labels.
    pub fn with_labels(
        labels: Vec<u32>,
        dim: usize,
        n_leaders: usize,
        edges: &[(usize, usize)],
    ) -> Result<Self> {
        let n = labels.len();
        if n < 3 {
            return Err(Error::InvalidGraph(format!("need at least 3 agents, got {n}")));
        }
        if dim < 2 {
            return Err(Error::InvalidGraph(format!("dimension must be at least 2, got {dim}")));
        }
        if n_leaders == 0 || n_leaders >= n {
            return Err(Error::InvalidGraph(format!(
                "leader count {n_leaders} must satisfy 1 <= n_l < n = {n}"
            )));
        }
        let mut neighbors = vec![BTreeSet::new(); n];
        for &(i, j) in edges {
            if i >= n || j >= n {
                return Err(Error::InvalidGraph(format!(
                    "edge ({}, {}) references an unknown agent",
                    i.wrapping_add(1),
                    j.wrapping_add(1)
                )));
            }
            if i == j {
                return Err(Error::InvalidGraph(format!("self-loop on agent {}", labels[i])));
            }
            neighbors[i].insert(j);
            neighbors[j].insert(i);
        }
        Ok(Self { dim, n_leaders, labels, neighbors })
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_leaders(&self) -> usize {
        self.n_leaders
    }

    pub fn n_followers(&self) -> usize {
        self.n() - self.n_leaders
    }

    pub fn is_leader(&self, i: usize) -> bool {
        i < self.n_leaders
    }

    pub fn label(&self, i: usize) -> u32 {
        self.labels[i]
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.neighbors[i].iter().copied()
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbors[i].len()
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.neighbors.get(i).is_some_and(|s| s.contains(&j))
    }

    /// Each undirected edge once, as `(i, j)` with `i < j`.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.neighbors
            .iter()
            .enumerate()
            .flat_map(|(i, s)| s.iter().filter(move |&&j| j > i).map(move |&j| (i, j)))
    }
}

/// Unit vector from `p_j` towards `p_i`.
pub fn unit_bearing<T: Real>(p_i: &DVector<T>, p_j: &DVector<T>, min_separation: T) -> Result<DVector<T>> {
    let diff = p_i - p_j;
    let dist = diff.norm();
    if dist <= min_separation {
        return Err(Error::DegenerateBearing {
            distance: dist.as_f64(),
            threshold: min_separation.as_f64(),
        });
    }
    Ok(diff / dist)
}

/// Orthogonal projector `I - g gᵀ` onto the complement of a unit vector.
pub fn projector<T: Real>(g: &DVector<T>) -> Result<DMatrix<T>> {
    let norm = g.norm();
    if (norm - T::one()).abs() > unit_tolerance::<T>() {
        return Err(Error::NonUnitInput { norm: norm.as_f64() });
    }
    let d = g.len();
    Ok(DMatrix::identity(d, d) - g * g.transpose())
}

/// Desired bearings `g*_ij`, stored for both directions of every edge.
#[derive(Debug, Clone, PartialEq)]
pub struct BearingSet<T: Real> {
    dim: usize,
    bearings: BTreeMap<(usize, usize), DVector<T>>,
}

impl<T: Real> BearingSet<T> {
    pub fn new(dim: usize) -> Self {
        Self { dim, bearings: BTreeMap::new() }
    }

    /// Derives every edge bearing from a concrete configuration.
    pub fn from_positions(graph: &SensingGraph, positions: &[DVector<T>], min_separation: T) -> Result<Self> {
        if positions.len() != graph.n() {
            return Err(Error::DimensionMismatch(format!(
                "{} positions for {} agents",
                positions.len(),
                graph.n()
            )));
        }
        let mut set = Self::new(graph.dim());
        for (i, j) in graph.edges() {
            check_len(&positions[i], graph.dim())?;
            check_len(&positions[j], graph.dim())?;
            let g = unit_bearing(&positions[i], &positions[j], min_separation)?;
            set.insert(i, j, g)?;
        }
        Ok(set)
    }

    /// Stores `g` for `(i, j)` and `-g` for `(j, i)`.
    ///
    /// The vector is renormalized after the unit check so the stored pair is
    /// exactly antisymmetric.
    pub fn insert(&mut self, i: usize, j: usize, g: DVector<T>) -> Result<()> {
        check_len(&g, self.dim)?;
        let norm = g.norm();
        if (norm - T::one()).abs() > unit_tolerance::<T>() {
            return Err(Error::NonUnitInput { norm: norm.as_f64() });
        }
        let g = g / norm;
        self.bearings.insert((j, i), -&g);
        self.bearings.insert((i, j), g);
        Ok(())
    }

    pub fn get(&self, i: usize, j: usize) -> Option<&DVector<T>> {
        self.bearings.get(&(i, j))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.bearings.len() / 2
    }

    pub fn is_empty(&self) -> bool {
        self.bearings.is_empty()
    }
}

fn check_len<T: Real>(v: &DVector<T>, dim: usize) -> Result<()> {
    if v.len() != dim {
        return Err(Error::DimensionMismatch(format!("expected length {dim}, got {}", v.len())));
    }
    Ok(())
}

/// The `nd × nd` bearing Laplacian together with its leader/follower blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct BearingLaplacian<T: Real> {
    pub full: DMatrix<T>,
    pub ll: DMatrix<T>,
    pub lf: DMatrix<T>,
    pub fl: DMatrix<T>,
    pub ff: DMatrix<T>,
    pub n_leaders: usize,
    pub dim: usize,
}

impl<T: Real> BearingLaplacian<T> {
    pub fn n_followers(&self) -> usize {
        self.full.nrows() / self.dim - self.n_leaders
    }

    /// Smallest singular value of `B_ff`.
    pub fn ff_sigma_min(&self) -> T {
        linalg::min_singular_value(&self.ff)
    }

    /// Smallest eigenvalue of the symmetric block `B_ff`.
    pub fn ff_lambda_min(&self) -> T {
        linalg::symmetric_extremes(&self.ff).0
    }
}

/// Assembles `B` block by block: `-P_{g*_ij}` on edges, the neighbor sum of
/// projectors on the diagonal, zero elsewhere.
pub fn build_bearing_laplacian<T: Real>(graph: &SensingGraph, bearings: &BearingSet<T>) -> Result<BearingLaplacian<T>> {
    let (n, d) = (graph.n(), graph.dim());
    if bearings.dim() != d {
        return Err(Error::DimensionMismatch(format!(
            "bearings in R^{} for a graph in R^{d}",
            bearings.dim()
        )));
    }
    let mut full = DMatrix::zeros(n * d, n * d);
    for i in 0..n {
        for j in graph.neighbors(i) {
            let g = bearings
                .get(i, j)
                .ok_or(Error::MissingBearing(graph.label(i), graph.label(j)))?;
            let p = projector(g)?;
            full.view_mut((i * d, j * d), (d, d)).copy_from(&(-&p));
            let mut diag = full.view_mut((i * d, i * d), (d, d));
            diag += &p;
        }
    }
    let split = graph.n_leaders() * d;
    let nf = n * d - split;
    Ok(BearingLaplacian {
        ll: full.view((0, 0), (split, split)).into_owned(),
        lf: full.view((0, split), (split, nf)).into_owned(),
        fl: full.view((split, 0), (nf, split)).into_owned(),
        ff: full.view((split, split), (nf, nf)).into_owned(),
        full,
        n_leaders: graph.n_leaders(),
        dim: d,
    })
}

/// Cached factorization of `B_ff` for repeated target-formation queries.
#[derive(Debug, Clone)]
pub struct Localizer<T: Real> {
    lu: LU<T, nalgebra::Dyn, nalgebra::Dyn>,
    fl: DMatrix<T>,
    n_followers: usize,
    dim: usize,
}

impl<T: Real> Localizer<T> {
    /// Fails with [`Error::NotLocalizable`] when `σ_min(B_ff)` is below
    /// [`LOCALIZABILITY_THRESHOLD`].
    pub fn new(laplacian: &BearingLaplacian<T>) -> Result<Self> {
        let sigma_min = laplacian.ff_sigma_min();
        if sigma_min < T::lit(LOCALIZABILITY_THRESHOLD) {
            return Err(Error::NotLocalizable { sigma_min: sigma_min.as_f64() });
        }
        Ok(Self {
            lu: laplacian.ff.clone().lu(),
            fl: laplacian.fl.clone(),
            n_followers: laplacian.n_followers(),
            dim: laplacian.dim,
        })
    }

    /// `p_f* = -B_ff⁻¹ B_fl p_l*`.
    pub fn follower_positions(&self, leader_positions: &DVector<T>) -> Result<DVector<T>> {
        if leader_positions.len() != self.fl.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "stacked leader positions have length {}, expected {}",
                leader_positions.len(),
                self.fl.ncols()
            )));
        }
        let rhs = -(&self.fl * leader_positions);
        // σ_min was checked at construction, so the factorization is invertible.
        self.lu
            .solve(&rhs)
            .ok_or(Error::NotLocalizable { sigma_min: 0.0 })
    }

    /// `v_f* = 1_{n_f} ⊗ v_c`.
    pub fn follower_velocities(&self, common_velocity: &DVector<T>) -> Result<DVector<T>> {
        check_len(common_velocity, self.dim)?;
        Ok(DVector::from_fn(self.n_followers * self.dim, |k, _| common_velocity[k % self.dim]))
    }
}

/// Target follower positions and velocities for the given leader anchors.
pub fn localize_followers<T: Real>(
    laplacian: &BearingLaplacian<T>,
    leader_positions: &DVector<T>,
    common_velocity: &DVector<T>,
) -> Result<(DVector<T>, DVector<T>)> {
    let loc = Localizer::new(laplacian)?;
    Ok((loc.follower_positions(leader_positions)?, loc.follower_velocities(common_velocity)?))
}

/// Stacks per-agent vectors into `col(x_1, …, x_k)`.
pub fn stack<T: Real>(parts: &[DVector<T>]) -> DVector<T> {
    let len = parts.iter().map(|p| p.len()).sum();
    DVector::from_iterator(len, parts.iter().flat_map(|p| p.iter().copied()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::FRAC_1_SQRT_2;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    fn unit_square() -> (SensingGraph, Vec<DVector<f64>>) {
        let g = SensingGraph::new(4, 2, 2, &[(1, 2), (2, 3), (3, 4), (4, 1), (1, 3), (2, 4)]).unwrap();
        let p = vec![v(&[0.0, 0.0]), v(&[1.0, 0.0]), v(&[1.0, 1.0]), v(&[0.0, 1.0])];
        (g, p)
    }

    #[test]
    fn unit_bearing_examples() {
        let eps = DEFAULT_SEPARATION;
        assert_eq!(unit_bearing(&v(&[1.0, 0.0]), &v(&[0.0, 0.0]), eps).unwrap(), v(&[1.0, 0.0]));
        assert_eq!(unit_bearing(&v(&[0.0, 0.0]), &v(&[0.0, 2.0]), eps).unwrap(), v(&[0.0, -1.0]));
        let g = unit_bearing(&v(&[1.0, 1.0]), &v(&[0.0, 0.0]), eps).unwrap();
        assert_relative_eq!(g, v(&[FRAC_1_SQRT_2, FRAC_1_SQRT_2]), epsilon = 1e-15);
    }

    #[test]
    fn coincident_points_are_degenerate() {
        let err = unit_bearing(&v(&[1.0, 1.0]), &v(&[1.0, 1.0 + 1e-12]), DEFAULT_SEPARATION).unwrap_err();
        assert_eq!(err.name(), "DegenerateBearing");
    }

    #[test]
    fn projector_examples() {
        assert_eq!(projector(&v(&[1.0, 0.0])).unwrap(), DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 1.0]));
        assert_eq!(projector(&v(&[0.0, 1.0])).unwrap(), DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]));
        let s = std::f64::consts::FRAC_1_SQRT_2;
        assert_relative_eq!(
            projector(&v(&[s, s])).unwrap(),
            DMatrix::from_row_slice(2, 2, &[0.5, -0.5, -0.5, 0.5]),
            epsilon = 1e-15
        );
    }

    #[test]
    fn projector_rejects_non_unit() {
        assert!(matches!(projector(&v(&[1.0, 1.0])), Err(Error::NonUnitInput { .. })));
    }

    #[test]
    fn single_edge_laplacian() {
        // n = 2 is below the graph minimum, so pad with an isolated third agent.
        let g = SensingGraph::new(3, 2, 1, &[(1, 2)]).unwrap();
        let mut b = BearingSet::new(2);
        b.insert(0, 1, v(&[1.0, 0.0])).unwrap();
        let lap = build_bearing_laplacian(&g, &b).unwrap();
        let p = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 1.0]);
        assert_eq!(lap.full.view((0, 0), (2, 2)), p);
        assert_eq!(lap.full.view((0, 2), (2, 2)), -&p);
        assert_eq!(lap.full.view((2, 0), (2, 2)), -&p);
        assert_eq!(lap.full.view((2, 2), (2, 2)), p);
        assert!(lap.full.view((4, 0), (2, 6)).iter().all(|&x| x == 0.0));
    }

    #[test]
    fn missing_bearing_is_reported() {
        let g = SensingGraph::new(3, 2, 1, &[(1, 2), (2, 3)]).unwrap();
        let mut b = BearingSet::new(2);
        b.insert(0, 1, v(&[1.0, 0.0])).unwrap();
        assert_eq!(build_bearing_laplacian(&g, &b).unwrap_err(), Error::MissingBearing(2, 3));
    }

    #[test]
    fn unit_square_is_localizable() {
        let (g, p) = unit_square();
        let b = BearingSet::from_positions(&g, &p, DEFAULT_SEPARATION).unwrap();
        let lap = build_bearing_laplacian(&g, &b).unwrap();
        assert!(lap.ff_sigma_min() > 1e-8);
        let (pf, vf) = localize_followers(&lap, &stack(&p[..2]), &v(&[0.5, 0.0])).unwrap();
        assert_relative_eq!(pf, v(&[1.0, 1.0, 0.0, 1.0]), epsilon = 1e-12);
        assert_eq!(vf, v(&[0.5, 0.0, 0.5, 0.0]));
        // row-sum identity
        for dir in [v(&[1.0, 0.0]), v(&[0.0, 1.0])] {
            let ones = stack(&vec![dir; 4]);
            assert!((&lap.full * ones).norm() < 1e-14);
        }
        assert_eq!(lap.fl, lap.lf.transpose());
    }

    #[test]
    fn collinear_follower_is_not_localizable() {
        let g = SensingGraph::new(3, 2, 2, &[(3, 1), (3, 2)]).unwrap();
        let mut b = BearingSet::new(2);
        b.insert(2, 0, v(&[1.0, 0.0])).unwrap();
        b.insert(2, 1, v(&[-1.0, 0.0])).unwrap();
        let lap = build_bearing_laplacian(&g, &b).unwrap();
        assert_eq!(lap.ff, DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 2.0]));
        let err = localize_followers(&lap, &v(&[0.0, 0.0, 2.0, 0.0]), &v(&[0.0, 0.0])).unwrap_err();
        assert_eq!(err.name(), "NotLocalizable");
    }

    #[test]
    fn graph_validation() {
        assert!(SensingGraph::new(3, 2, 1, &[(1, 1)]).is_err());
        assert!(SensingGraph::new(3, 2, 1, &[(1, 4)]).is_err());
        assert!(SensingGraph::new(3, 2, 3, &[]).is_err());
        assert!(SensingGraph::new(2, 2, 1, &[]).is_err());
        let g = SensingGraph::new(3, 2, 1, &[(1, 2), (2, 1)]).unwrap();
        assert_eq!(g.edges().count(), 1);
        assert!(g.has_edge(1, 0));
    }

    #[test]
    fn works_in_single_precision() {
        let g = SensingGraph::new(4, 2, 2, &[(1, 2), (2, 3), (3, 4), (4, 1), (1, 3), (2, 4)]).unwrap();
        let p: Vec<DVector<f32>> = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]
            .iter()
            .map(|x| DVector::from_column_slice(x))
            .collect();
        let b = BearingSet::from_positions(&g, &p, 1e-6).unwrap();
        let lap = build_bearing_laplacian(&g, &b).unwrap();
        let (pf, _) = localize_followers(&lap, &stack(&p[..2]), &DVector::zeros(2)).unwrap();
        assert!((pf - DVector::from_column_slice(&[1.0f32, 1.0, 0.0, 1.0])).norm() < 1e-5);
    }
}
