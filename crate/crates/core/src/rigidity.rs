//! Distance rigidity of frameworks.
//!
//! A [`Framework`] is a graph plus one point per node in 2-D or 3-D. Its
//! normalized rigidity matrix `R` has one row per edge `{i, j}` holding the
//! unit bearing `r_ij` in node `i`'s block and `-r_ij` in node `j`'s block, so
//! `R u` gives the strain every bar sees under the velocity field `u`.
//!
//! Infinitesimal rigidity is decided two ways that must agree:
//! the eigenvalue test (`λ_{f+1}(RᵀR) > tol`) and the rank test
//! (`rank R = dn − f`), with `f = d(d+1)/2` rigid-body degrees of freedom.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{GeodesicTable, Graph};

/// Relative zero-eigenvalue tolerance (fraction of the largest eigenvalue).
pub const DEFAULT_TOL: f64 = 1e-8;

/// Relative gap below which `λ_{f+1}` and `λ_{f+2}` count as one repeated
/// eigenvalue.
pub const MULTIPLICITY_TOL: f64 = 1e-6;

/// Rigid-body degrees of freedom in `dim` dimensions.
#[inline]
pub fn trivial_dof(dim: usize) -> usize {
    dim * (dim + 1) / 2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "FrameworkRepr", into = "FrameworkRepr")]
pub struct Framework {
    graph: Graph,
    dim: usize,
    coords: Vec<f64>,
}

/// Wire form: the graph fields plus `dim` and one coordinate row per node.
#[derive(Serialize, Deserialize)]
struct FrameworkRepr {
    #[serde(flatten)]
    graph: Graph,
    dim: usize,
    positions: Vec<Vec<f64>>,
}

impl TryFrom<FrameworkRepr> for Framework {
    type Error = Error;

    fn try_from(r: FrameworkRepr) -> Result<Self> {
        for p in &r.positions {
            if p.len() != r.dim {
                return Err(Error::DimensionMismatch { expected: r.dim, got: p.len() });
            }
        }
        Framework::new(r.graph, r.dim, r.positions.concat())
    }
}

impl From<Framework> for FrameworkRepr {
    fn from(fw: Framework) -> Self {
        let positions = fw.coords.chunks(fw.dim).map(<[f64]>::to_vec).collect();
        FrameworkRepr { graph: fw.graph, dim: fw.dim, positions }
    }
}

impl Framework {
    /// `coords` holds `dim` consecutive coordinates per node.
    pub fn new(graph: Graph, dim: usize, coords: Vec<f64>) -> Result<Self> {
        if !(2..=3).contains(&dim) {
            return Err(Error::UnsupportedDimension(dim));
        }
        if coords.len() != graph.node_count() * dim {
            return Err(Error::DimensionMismatch {
                expected: graph.node_count() * dim,
                got: coords.len(),
            });
        }
        Ok(Framework { graph, dim, coords })
    }

    #[inline]
    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn node_count(&self) -> usize {
        self.graph.node_count()
    }

    #[inline]
    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    #[inline]
    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    /// Same positions, different topology.
    pub fn with_graph(&self, graph: Graph) -> Result<Self> {
        Framework::new(graph, self.dim, self.coords.clone())
    }

    /// Same topology, different positions.
    pub fn with_coords(&self, coords: Vec<f64>) -> Result<Self> {
        Framework::new(self.graph.clone(), self.dim, coords)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("framework serialization is infallible")
    }

    pub fn from_json(s: &str) -> std::result::Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }
}

/// Unit vector from `b` to `a` and the distance between them.
pub(crate) fn bearing(a: &[f64], b: &[f64]) -> (Vec<f64>, f64) {
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let len = diff.iter().map(|v| v * v).sum::<f64>().sqrt();
    (diff.into_iter().map(|v| v / len).collect(), len)
}

/// Normalized rigidity matrix of an edge list over `dim`-dimensional points.
pub(crate) fn rigidity_matrix_of(
    edges: &[(usize, usize)],
    coords: &[f64],
    dim: usize,
) -> Result<DMatrix<f64>> {
    let n = coords.len() / dim;
    let mut r = DMatrix::zeros(edges.len(), dim * n);
    for (k, &(i, j)) in edges.iter().enumerate() {
        let (dir, len) = bearing(&coords[i * dim..(i + 1) * dim], &coords[j * dim..(j + 1) * dim]);
        if len <= 0.0 || !len.is_finite() {
            return Err(Error::Coincident(i, j));
        }
        for a in 0..dim {
            r[(k, i * dim + a)] = dir[a];
            r[(k, j * dim + a)] = -dir[a];
        }
    }
    Ok(r)
}

/// `m × dn` normalized rigidity matrix, rows in edge order.
pub fn rigidity_matrix(fw: &Framework) -> Result<DMatrix<f64>> {
    rigidity_matrix_of(fw.graph.edges(), &fw.coords, fw.dim)
}

/// Bar strains `σ_k = r_ijᵀ(u_i − u_j)` induced by the stacked velocity `u`.
pub fn strains(fw: &Framework, u: &DVector<f64>) -> Result<DVector<f64>> {
    let dn = fw.dim * fw.node_count();
    if u.len() != dn {
        return Err(Error::DimensionMismatch { expected: dn, got: u.len() });
    }
    Ok(rigidity_matrix(fw)? * u)
}

/// Sum of squared strains.
pub fn energy(fw: &Framework, u: &DVector<f64>) -> Result<f64> {
    Ok(strains(fw, u)?.norm_squared())
}

/// `S = Rᵀ W R` for a diagonal weight vector.
pub fn symmetric_rigidity_matrix(r: &DMatrix<f64>, weights: &[f64]) -> Result<DMatrix<f64>> {
    if weights.len() != r.nrows() {
        return Err(Error::DimensionMismatch { expected: r.nrows(), got: weights.len() });
    }
    if let Some((index, &weight)) = weights.iter().enumerate().find(|(_, w)| !(**w > 0.0)) {
        return Err(Error::NonPositiveWeight { index, weight });
    }
    let mut wr = r.clone();
    for (k, &w) in weights.iter().enumerate() {
        wr.row_mut(k).scale_mut(w);
    }
    let mut s = r.transpose() * wr;
    // exact symmetry for the eigensolver
    let n = s.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (s[(i, j)] + s[(j, i)]);
            s[(i, j)] = v;
            s[(j, i)] = v;
        }
    }
    Ok(s)
}

/// Orthonormal basis of the rigid-body motions of the framework's points,
/// as the columns of a `dn × f` matrix (fewer columns only for degenerate
/// point sets, e.g. all points collinear in 3-D).
pub fn trivial_motion_basis(fw: &Framework) -> DMatrix<f64> {
    trivial_motion_basis_of(&fw.coords, fw.dim)
}

pub(crate) fn trivial_motion_basis_of(coords: &[f64], dim: usize) -> DMatrix<f64> {
    let n = coords.len() / dim;
    let dn = dim * n;
    let mut centroid = vec![0.0; dim];
    for p in coords.chunks(dim) {
        for (c, v) in centroid.iter_mut().zip(p) {
            *c += v / n as f64;
        }
    }
    let mut cols: Vec<DVector<f64>> = Vec::new();
    for a in 0..dim {
        cols.push(DVector::from_fn(dn, |k, _| if k % dim == a { 1.0 } else { 0.0 }));
    }
    // infinitesimal rotations in each coordinate plane (a, b)
    let planes: &[(usize, usize)] = if dim == 2 { &[(0, 1)] } else { &[(0, 1), (1, 2), (0, 2)] };
    for &(a, b) in planes {
        let mut v = DVector::zeros(dn);
        for i in 0..n {
            let pa = coords[i * dim + a] - centroid[a];
            let pb = coords[i * dim + b] - centroid[b];
            v[i * dim + a] = -pb;
            v[i * dim + b] = pa;
        }
        cols.push(v);
    }
    // modified Gram-Schmidt, dropping numerically dependent directions
    let mut basis: Vec<DVector<f64>> = Vec::with_capacity(cols.len());
    for mut v in cols {
        let scale = v.norm();
        for q in &basis {
            let proj = q.dot(&v);
            v.axpy(-proj, q, 1.0);
        }
        let norm = v.norm();
        if scale > 0.0 && norm > 1e-10 * scale {
            basis.push(v / norm);
        }
    }
    DMatrix::from_columns(&basis)
}

/// Eigenvalues in ascending order with matching eigenvector columns.
pub fn sorted_eigen(s: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = s.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = DMatrix::from_columns(
        &order.iter().map(|&k| eig.eigenvectors.column(k).into_owned()).collect::<Vec<_>>(),
    );
    (values, vectors)
}

/// Eigenvalues only, ascending.
pub fn sorted_eigenvalues(s: &DMatrix<f64>) -> Vec<f64> {
    let mut values: Vec<f64> = s.symmetric_eigenvalues().iter().copied().collect();
    values.sort_by(f64::total_cmp);
    values
}

/// The rigidity eigenvalue `ρ = λ_{f+1}(S)` with its unit eigenvector.
#[derive(Debug, Clone, PartialEq)]
pub struct RigidityEigenpair {
    pub rho: f64,
    pub nu: DVector<f64>,
    /// Largest eigenvalue of `S`; the scale the relative tolerance refers to.
    pub lambda_max: f64,
    /// `λ_{f+2} − λ_{f+1}` (infinite when `S` has no further eigenvalue).
    pub gap: f64,
    /// `λ_{f+2}` is within [`MULTIPLICITY_TOL`] of `ρ`, so `nu` is one vector
    /// out of an eigenspace and gradients built on it are subgradients.
    pub degenerate: bool,
}

impl RigidityEigenpair {
    /// `ρ > tol · λ_max`.
    pub fn is_positive(&self, tol: f64) -> bool {
        self.rho > tol * self.lambda_max
    }
}

fn check_size(dn: usize, dim: usize) -> Result<usize> {
    let n = dn / dim;
    if n <= dim {
        return Err(Error::FrameworkTooSmall { n, d: dim });
    }
    Ok(n)
}

pub fn rigidity_eigenpair(s: &DMatrix<f64>, dim: usize) -> Result<RigidityEigenpair> {
    check_size(s.nrows(), dim)?;
    let f = trivial_dof(dim);
    let (values, vectors) = sorted_eigen(s);
    let lambda_max = values.last().copied().unwrap_or(0.0).max(f64::MIN_POSITIVE);
    let rho = values[f];
    let gap = values.get(f + 1).map_or(f64::INFINITY, |next| next - rho);
    Ok(RigidityEigenpair {
        rho,
        nu: vectors.column(f).into_owned(),
        lambda_max,
        gap,
        degenerate: gap <= MULTIPLICITY_TOL * lambda_max,
    })
}

/// Numerical rank of `r`, counting singular values above
/// `sqrt(tol) · σ_max` (the rank threshold matching the eigenvalue test on
/// `RᵀR`).
pub fn numerical_rank(r: &DMatrix<f64>, tol: f64) -> usize {
    if r.nrows() == 0 || r.ncols() == 0 {
        return 0;
    }
    let sv = r.singular_values();
    let max = sv.iter().copied().fold(0.0, f64::max);
    let cut = tol.sqrt() * max;
    sv.iter().filter(|&&s| s > cut).count()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RigidityReport {
    pub dim: usize,
    pub f: usize,
    pub rank_r: usize,
    /// Spectrum of the normalized `S = RᵀR`, ascending.
    pub eigenvalues: Vec<f64>,
    pub rho: f64,
    pub nu: Vec<f64>,
    pub degenerate: bool,
    /// Eigenvalue verdict.
    pub rigid: bool,
    /// Rank verdict; always equal to `rigid`.
    pub rank_rigid: bool,
}

impl RigidityReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization is infallible")
    }
}

/// Full analysis of the normalized (`W = I`) framework.
pub fn rigidity_report(fw: &Framework, tol: f64) -> Result<RigidityReport> {
    let r = rigidity_matrix(fw)?;
    let dn = r.ncols();
    check_size(dn, fw.dim)?;
    let f = trivial_dof(fw.dim);
    let s = symmetric_rigidity_matrix(&r, &vec![1.0; r.nrows()])?;
    let (values, vectors) = sorted_eigen(&s);
    let lambda_max = values.last().copied().unwrap_or(0.0).max(f64::MIN_POSITIVE);
    let rho = values[f];
    let rank_r = numerical_rank(&r, tol);
    Ok(RigidityReport {
        dim: fw.dim,
        f,
        rank_r,
        degenerate: values.get(f + 1).is_some_and(|v| v - rho <= MULTIPLICITY_TOL * lambda_max),
        rigid: rho > tol * lambda_max,
        rank_rigid: rank_r == dn - f,
        nu: vectors.column(f).iter().copied().collect(),
        eigenvalues: values,
        rho,
    })
}

/// Normalized rigidity eigenvalue of an edge list over a point set.
pub(crate) fn normalized_rho_of(edges: &[(usize, usize)], coords: &[f64], dim: usize) -> Result<(f64, f64)> {
    let n = check_size(coords.len(), dim)?;
    let f = trivial_dof(dim);
    if edges.is_empty() {
        return Ok((0.0, f64::MIN_POSITIVE));
    }
    let r = rigidity_matrix_of(edges, coords, dim)?;
    debug_assert_eq!(r.ncols(), dim * n);
    let s = symmetric_rigidity_matrix(&r, &vec![1.0; r.nrows()])?;
    let values = sorted_eigenvalues(&s);
    let lambda_max = values.last().copied().unwrap_or(0.0).max(f64::MIN_POSITIVE);
    Ok((values[f], lambda_max))
}

pub(crate) fn is_rigid_of(edges: &[(usize, usize)], coords: &[f64], dim: usize, tol: f64) -> Result<bool> {
    let (rho, lambda_max) = normalized_rho_of(edges, coords, dim)?;
    let rigid = rho > tol * lambda_max;
    debug_assert!(
        edges.is_empty() || {
            let r = rigidity_matrix_of(edges, coords, dim)?;
            (numerical_rank(&r, tol) == r.ncols() - trivial_dof(dim)) == rigid
        },
        "rank and eigenvalue rigidity tests disagree"
    );
    Ok(rigid)
}

/// Eigenvalue test on the normalized framework; `tol` is relative to the
/// largest eigenvalue. Disconnected frameworks are simply not rigid.
pub fn is_infinitesimally_rigid(fw: &Framework, tol: f64) -> Result<bool> {
    is_rigid_of(fw.graph.edges(), &fw.coords, fw.dim, tol)
}

/// `2m / D²`, the diameter bound on the normalized rigidity eigenvalue of
/// a connected planar framework.
pub fn diameter_eigenvalue_bound(edge_count: usize, diameter: usize) -> f64 {
    assert!(diameter >= 1, "bound requires a diameter of at least one hop");
    2.0 * edge_count as f64 / (diameter * diameter) as f64
}

/// Combinatorial Laplacian `L = D − A`.
pub fn laplacian(g: &Graph) -> DMatrix<f64> {
    let n = g.node_count();
    let mut l = DMatrix::zeros(n, n);
    for &(i, j) in g.edges() {
        l[(i, j)] -= 1.0;
        l[(j, i)] -= 1.0;
        l[(i, i)] += 1.0;
        l[(j, j)] += 1.0;
    }
    l
}

/// Mean-centered hop profile `u_i = g_pi / D` from one end `p` of a
/// diametral pair; its Laplacian Rayleigh quotient is at most `2m / D²`.
pub fn diameter_test_vector(g: &Graph) -> Result<DVector<f64>> {
    let table = GeodesicTable::new(g);
    let diam = table.diameter()?;
    if diam == 0 {
        return Err(Error::InvalidParams("diameter test vector needs at least one edge".into()));
    }
    let n = g.node_count();
    let p = (0..n).find(|&i| table.eccentricity(i) == diam).expect("some node attains D");
    let u = DVector::from_fn(n, |i, _| table.get(p, i).expect("connected") as f64 / diam as f64);
    let mean = u.mean();
    Ok(u.add_scalar(-mean))
}

pub fn rayleigh_quotient(m: &DMatrix<f64>, v: &DVector<f64>) -> f64 {
    v.dot(&(m * v)) / v.norm_squared()
}

/// Whether the inclusive neighborhood of `i` affinely spans `R^d`.
pub fn neighborhood_in_general_position(fw: &Framework, i: usize) -> bool {
    let members: Vec<usize> = std::iter::once(i).chain(fw.graph.neighbors(i).iter().copied()).collect();
    if members.len() < fw.dim + 1 {
        return false;
    }
    let base = fw.point(i);
    let cols: Vec<DVector<f64>> = members[1..]
        .iter()
        .map(|&j| DVector::from_iterator(fw.dim, fw.point(j).iter().zip(base).map(|(a, b)| a - b)))
        .collect();
    let m = DMatrix::from_columns(&cols);
    let sv = m.singular_values();
    let max = sv.iter().copied().fold(0.0, f64::max);
    sv.iter().filter(|&&s| s > 1e-9 * max).count() == fw.dim
}
