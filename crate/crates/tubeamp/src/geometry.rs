//! Polytope representations and LP-based primitives.
//!
//! [`HPolytope`] is the halfspace form `{x : N x ≤ c}`, [`VPolytope`] the
//! vertex form. Support values, containment certificates and Chebyshev
//! centres are computed with LPs through [`crate::conic`]; vertex enumeration
//! and volume are exact combinatorial routines restricted to dimension ≤ 4.
//!
//! All values are immutable after construction and the operations are pure,
//! so they are safe to call from concurrent workers.

use crate::conic::{ConicProgram, LinExpr, SolveStatus};
use nalgebra::{DMatrix, DVector};
use thiserror::Error;

/// Feasibility and deduplication tolerance for vertex enumeration.
pub const TAU_GEOM: f64 = 1e-9;

/// Dimension cap for vertex enumeration and volume.
pub const MAX_ENUM_DIM: usize = 4;

const LP_TOL: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("polytope is empty")]
    Empty,
    #[error("polytope is unbounded (in a queried direction)")]
    Unbounded,
    #[error("dimension {dim} exceeds supported limit {max}")]
    DimensionTooLarge { dim: usize, max: usize },
    #[error("row {0} is redundant (inactive at every vertex)")]
    RedundantRow(usize),
    #[error("operation unsupported: {0}")]
    Unsupported(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

type Result<T> = std::result::Result<T, GeometryError>;

/// Halfspace polytope `{x : normals · x ≤ offsets}`.
#[derive(Debug, Clone, PartialEq)]
pub struct HPolytope {
    normals: DMatrix<f64>,
    offsets: DVector<f64>,
}

/// Vertex polytope `Co{v_1, …, v_m}`; duplicates are permitted.
#[derive(Debug, Clone, PartialEq)]
pub struct VPolytope {
    pub vertices: Vec<DVector<f64>>,
}

impl VPolytope {
    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }
}

/// Support value together with its LP dual certificate
/// (`normalsᵀ·dual = g`, `offsetsᵀ·dual = value`, `dual ≥ 0`).
#[derive(Debug, Clone)]
pub struct SupportCert {
    pub value: f64,
    pub dual: Vec<f64>,
}

/// Result of a polyhedral containment test. When `contained`, row `i` of
/// `multipliers` holds `H_i ≥ 0` with `H_i·inner_normals = outer_row_i` and
/// `H_i·inner_offsets ≤ outer_offset_i`.
#[derive(Debug, Clone)]
pub struct ContainmentCert {
    pub contained: bool,
    pub multipliers: Option<DMatrix<f64>>,
}

impl HPolytope {
    pub fn new(normals: DMatrix<f64>, offsets: DVector<f64>) -> Self {
        assert_eq!(normals.nrows(), offsets.len(), "row/offset count mismatch");
        Self { normals, offsets }
    }

    pub fn normals(&self) -> &DMatrix<f64> {
        &self.normals
    }

    pub fn offsets(&self) -> &DVector<f64> {
        &self.offsets
    }

    pub fn dim(&self) -> usize {
        self.normals.ncols()
    }

    pub fn num_rows(&self) -> usize {
        self.normals.nrows()
    }

    /// Axis-aligned box `{lo ≤ x ≤ hi}` as `[I; -I]`-style rows.
    pub fn from_box(lo: &[f64], hi: &[f64]) -> Self {
        assert_eq!(lo.len(), hi.len());
        let n = lo.len();
        let mut normals = DMatrix::zeros(2 * n, n);
        let mut offsets = DVector::zeros(2 * n);
        for i in 0..n {
            normals[(i, i)] = 1.0;
            offsets[i] = hi[i];
            normals[(n + i, i)] = -1.0;
            offsets[n + i] = -lo[i];
        }
        Self { normals, offsets }
    }

    /// `{‖x‖_∞ ≤ radius}`.
    pub fn inf_ball(dim: usize, radius: f64) -> Self {
        Self::from_box(&vec![-radius; dim], &vec![radius; dim])
    }

    /// The single point `{p}` as a degenerate box.
    pub fn singleton(p: &DVector<f64>) -> Self {
        let s = p.as_slice();
        Self::from_box(s, s)
    }

    /// Scales each row so its normal has unit Euclidean norm. Zero rows are
    /// kept untouched (they encode constant constraints).
    pub fn normalized_rows(&self) -> Self {
        let mut normals = self.normals.clone();
        let mut offsets = self.offsets.clone();
        for i in 0..normals.nrows() {
            let nrm = normals.row(i).norm();
            if nrm > 0.0 {
                for j in 0..normals.ncols() {
                    normals[(i, j)] /= nrm;
                }
                offsets[i] /= nrm;
            }
        }
        Self { normals, offsets }
    }

    /// Stacks the rows of `self` and `other` (set intersection).
    pub fn intersect(&self, other: &HPolytope) -> Self {
        assert_eq!(self.dim(), other.dim());
        let rows = self.num_rows() + other.num_rows();
        let mut normals = DMatrix::zeros(rows, self.dim());
        let mut offsets = DVector::zeros(rows);
        normals.rows_mut(0, self.num_rows()).copy_from(&self.normals);
        normals.rows_mut(self.num_rows(), other.num_rows()).copy_from(&other.normals);
        offsets.rows_mut(0, self.num_rows()).copy_from(&self.offsets);
        offsets.rows_mut(self.num_rows(), other.num_rows()).copy_from(&other.offsets);
        Self { normals, offsets }
    }

    pub fn contains_point(&self, x: &DVector<f64>, tol: f64) -> bool {
        for i in 0..self.num_rows() {
            let scale = self.normals.row(i).norm().max(1.0);
            if self.normals.row(i).transpose().dot(x) > self.offsets[i] + tol * scale {
                return false;
            }
        }
        true
    }

    /// One feasibility LP.
    pub fn is_empty(&self) -> bool {
        let mut p = ConicProgram::new();
        let x = p.add_vars(self.dim());
        let xs: Vec<usize> = x.collect();
        p.add_nonneg_block(self.row_exprs(&xs));
        !matches!(p.solve(LP_TOL).status, SolveStatus::Optimal | SolveStatus::Unbounded)
    }

    /// Support LPs in the ±coordinate directions.
    pub fn is_bounded(&self) -> Result<bool> {
        for i in 0..self.dim() {
            for sign in [1.0, -1.0] {
                let mut g = DVector::zeros(self.dim());
                g[i] = sign;
                match support(self, &g) {
                    Ok(_) => {}
                    Err(GeometryError::Unbounded) => return Ok(false),
                    Err(e) => return Err(e),
                }
            }
        }
        Ok(true)
    }

    fn row_exprs(&self, xs: &[usize]) -> Vec<LinExpr> {
        (0..self.num_rows())
            .map(|i| {
                let mut e = LinExpr::constant(self.offsets[i]);
                for (j, &xv) in xs.iter().enumerate() {
                    e.push(xv, -self.normals[(i, j)]);
                }
                e
            })
            .collect()
    }

    /// `Some((lo, hi))` when every row is axis-aligned, i.e. the set is
    /// exactly a (possibly degenerate) hyperrectangle.
    pub fn as_box(&self) -> Option<(DVector<f64>, DVector<f64>)> {
        let n = self.dim();
        let mut lo = DVector::from_element(n, f64::NEG_INFINITY);
        let mut hi = DVector::from_element(n, f64::INFINITY);
        for i in 0..self.num_rows() {
            let row = self.normals.row(i);
            let mut nz = None;
            for j in 0..n {
                if row[j] != 0.0 {
                    if nz.is_some() {
                        return None;
                    }
                    nz = Some(j);
                }
            }
            let j = nz?;
            let a = row[j];
            if a > 0.0 {
                hi[j] = hi[j].min(self.offsets[i] / a);
            } else {
                lo[j] = lo[j].max(self.offsets[i] / a);
            }
        }
        if lo.iter().any(|v| !v.is_finite()) || hi.iter().any(|v| !v.is_finite()) {
            return None;
        }
        Some((lo, hi))
    }
}

/// `max_{x ∈ p} gᵀx` by one LP, with the dual multipliers as certificate.
pub fn support(p: &HPolytope, g: &DVector<f64>) -> Result<SupportCert> {
    assert_eq!(g.len(), p.dim());
    if p.num_rows() == 0 {
        return if g.iter().all(|&v| v == 0.0) {
            Ok(SupportCert { value: 0.0, dual: Vec::new() })
        } else {
            Err(GeometryError::Unbounded)
        };
    }
    let mut prog = ConicProgram::new();
    let xs: Vec<usize> = prog.add_vars(p.dim()).collect();
    for (j, &xv) in xs.iter().enumerate() {
        prog.add_objective(xv, -g[j]);
    }
    prog.add_nonneg_block(p.row_exprs(&xs));
    let rep = prog.solve(LP_TOL);
    match rep.status {
        SolveStatus::Optimal => Ok(SupportCert {
            value: -rep.objective,
            dual: rep.dual.unwrap_or_default(),
        }),
        SolveStatus::Unbounded => Err(GeometryError::Unbounded),
        SolveStatus::Infeasible => Err(GeometryError::Empty),
        SolveStatus::NumericalFailure => {
            Err(GeometryError::Numerical("support LP failed".into()))
        }
    }
}

/// Support value without the certificate.
pub fn support_value(p: &HPolytope, g: &DVector<f64>) -> Result<f64> {
    support(p, g).map(|s| s.value)
}

/// Tests `inner ⊆ {x : outer_normals x ≤ outer_offsets}` with the linear
/// multiplier conditions for polyhedral inclusion: for every outer row `i`
/// there must exist `H_i ≥ 0` with `H_i·inner_normals = outer_row_i` and
/// `H_i·inner_offsets ≤ outer_offset_i`.
pub fn contains_polytope(
    outer_normals: &DMatrix<f64>,
    outer_offsets: &DVector<f64>,
    inner: &HPolytope,
    tol: f64,
) -> Result<ContainmentCert> {
    assert_eq!(outer_normals.ncols(), inner.dim());
    assert_eq!(outer_normals.nrows(), outer_offsets.len());
    if inner.is_empty() {
        return Err(GeometryError::Empty);
    }
    let m_in = inner.num_rows();
    let mut multipliers = DMatrix::zeros(outer_normals.nrows(), m_in);
    for i in 0..outer_normals.nrows() {
        let mut prog = ConicProgram::new();
        let hs: Vec<usize> = prog.add_vars(m_in).collect();
        for (r, &hv) in hs.iter().enumerate() {
            prog.add_objective(hv, inner.offsets[r]);
            prog.add_nonneg(LinExpr::var(hv));
        }
        for col in 0..inner.dim() {
            let mut eq = LinExpr::constant(-outer_normals[(i, col)]);
            for (r, &hv) in hs.iter().enumerate() {
                eq.push(hv, inner.normals[(r, col)]);
            }
            prog.add_equality(eq);
        }
        let rep = prog.solve(LP_TOL);
        match rep.status {
            SolveStatus::Optimal => {
                if rep.objective > outer_offsets[i] + tol {
                    return Ok(ContainmentCert { contained: false, multipliers: None });
                }
                let h = rep.primal_or("containment multipliers");
                for (r, &hv) in h.iter().enumerate() {
                    multipliers[(i, r)] = hv.max(0.0);
                }
            }
            // No multiplier exists: the inner set is unbounded along this
            // outer normal, so containment fails.
            SolveStatus::Infeasible => {
                return Ok(ContainmentCert { contained: false, multipliers: None })
            }
            _ => return Err(GeometryError::Numerical(format!("multiplier LP row {i}"))),
        }
    }
    Ok(ContainmentCert { contained: true, multipliers: Some(multipliers) })
}

/// Iterator over `k`-subsets of `0..n` in lexicographic order.
pub(crate) fn subsets_lex(n: usize, k: usize) -> impl Iterator<Item = Vec<usize>> {
    let mut current: Option<Vec<usize>> = if k <= n { Some((0..k).collect()) } else { None };
    std::iter::from_fn(move || {
        let result = current.clone()?;
        // advance
        let cur = current.as_mut().unwrap();
        let mut i = k;
        loop {
            if i == 0 {
                current = None;
                break;
            }
            i -= 1;
            if cur[i] < n - (k - i) {
                cur[i] += 1;
                for j in i + 1..k {
                    cur[j] = cur[j - 1] + 1;
                }
                break;
            }
        }
        Some(result)
    })
}

/// Enumerates the vertices of a bounded polytope of dimension ≤ 4 by solving
/// every `dim`-subset of rows, keeping feasible solutions, and deduplicating
/// within [`TAU_GEOM`]. Output order is deterministic (first discovery in
/// lexicographic subset order).
pub fn enumerate_vertices(p: &HPolytope) -> Result<VPolytope> {
    let n = p.dim();
    if n > MAX_ENUM_DIM {
        return Err(GeometryError::DimensionTooLarge { dim: n, max: MAX_ENUM_DIM });
    }
    if p.is_empty() {
        return Err(GeometryError::Empty);
    }
    if !p.is_bounded()? {
        return Err(GeometryError::Unbounded);
    }
    Ok(enumerate_vertices_unchecked(p))
}

/// Subset enumeration without the emptiness/boundedness LPs; callers must
/// guarantee both. Used internally by the volume recursion where facet
/// slices are bounded by construction.
fn enumerate_vertices_unchecked(p: &HPolytope) -> VPolytope {
    let n = p.dim();
    let mut vertices: Vec<DVector<f64>> = Vec::new();
    for subset in subsets_lex(p.num_rows(), n) {
        let mut a = DMatrix::zeros(n, n);
        let mut b = DVector::zeros(n);
        for (r, &row) in subset.iter().enumerate() {
            a.row_mut(r).copy_from(&p.normals.row(row));
            b[r] = p.offsets[row];
        }
        let lu = a.full_piv_lu();
        let scale = p
            .normals
            .row_iter()
            .map(|r| r.norm())
            .fold(1.0_f64, f64::max);
        if lu.determinant().abs() < 1e-12 * scale.powi(n as i32) {
            continue;
        }
        let Some(x) = lu.solve(&b) else { continue };
        let feasible = (0..p.num_rows()).all(|i| {
            let row_scale = p.normals.row(i).norm().max(1.0);
            p.normals.row(i).transpose().dot(&x) <= p.offsets[i] + TAU_GEOM * row_scale
        });
        if !feasible {
            continue;
        }
        let duplicate = vertices.iter().any(|v| (v - &x).amax() <= TAU_GEOM);
        if !duplicate {
            vertices.push(x);
        }
    }
    VPolytope { vertices }
}

/// Exact volume of a bounded polytope of dimension ≤ 4.
///
/// Axis-aligned hyperrectangles use the product of side lengths; otherwise
/// the polytope is decomposed into cones over its facets (the facet measure
/// is obtained by recursing on the facet's halfspace form in hyperplane
/// coordinates, which triangulates the set implicitly).
pub fn volume(p: &HPolytope) -> Result<f64> {
    let n = p.dim();
    if n > MAX_ENUM_DIM {
        return Err(GeometryError::DimensionTooLarge { dim: n, max: MAX_ENUM_DIM });
    }
    if p.is_empty() {
        return Err(GeometryError::Empty);
    }
    if !p.is_bounded()? {
        return Err(GeometryError::Unbounded);
    }
    Ok(volume_rec(p))
}

fn interval_bounds(p: &HPolytope) -> (f64, f64) {
    let mut lo = f64::NEG_INFINITY;
    let mut hi = f64::INFINITY;
    for i in 0..p.num_rows() {
        let a = p.normals[(i, 0)];
        if a > 0.0 {
            hi = hi.min(p.offsets[i] / a);
        } else if a < 0.0 {
            lo = lo.max(p.offsets[i] / a);
        }
    }
    (lo, hi)
}

fn volume_rec(p: &HPolytope) -> f64 {
    let n = p.dim();
    if let Some((lo, hi)) = p.as_box() {
        return (0..n).map(|i| (hi[i] - lo[i]).max(0.0)).product();
    }
    if n == 1 {
        let (lo, hi) = interval_bounds(p);
        return (hi - lo).max(0.0);
    }
    let verts = enumerate_vertices_unchecked(p);
    if verts.vertices.len() <= n {
        return 0.0; // lower-dimensional
    }
    let mut centroid = DVector::zeros(n);
    for v in &verts.vertices {
        centroid += v;
    }
    centroid /= verts.vertices.len() as f64;

    let mut total = 0.0;
    for i in 0..p.num_rows() {
        let a = p.normals.row(i).transpose();
        let norm = a.norm();
        if norm == 0.0 {
            continue;
        }
        let h = (p.offsets[i] - a.dot(&centroid)) / norm;
        if h <= TAU_GEOM {
            continue;
        }
        // Orthonormal basis of the hyperplane a·x = b_i.
        let basis = hyperplane_basis(&a);
        let x0 = &centroid + &a * (h / norm);
        let mut fn_normals = DMatrix::zeros(p.num_rows() - 1, n - 1);
        let mut fn_offsets = DVector::zeros(p.num_rows() - 1);
        let mut r = 0;
        for j in 0..p.num_rows() {
            if j == i {
                continue;
            }
            let aj = p.normals.row(j).transpose();
            for c in 0..n - 1 {
                fn_normals[(r, c)] = aj.dot(&basis.column(c).into_owned());
            }
            fn_offsets[r] = p.offsets[j] - aj.dot(&x0);
            r += 1;
        }
        let facet = HPolytope::new(fn_normals, fn_offsets);
        let area = volume_rec(&facet);
        total += area * h / n as f64;
    }
    total
}

/// Orthonormal basis of the hyperplane orthogonal to `a` (columns).
fn hyperplane_basis(a: &DVector<f64>) -> DMatrix<f64> {
    let n = a.len();
    let mut m = DMatrix::zeros(n, n);
    m.column_mut(0).copy_from(&(a / a.norm()));
    let mut col = 1;
    for i in 0..n {
        if col >= n {
            break;
        }
        let mut e = DVector::zeros(n);
        e[i] = 1.0;
        m.column_mut(col).copy_from(&e);
        col += 1;
    }
    let qr = m.qr();
    let q = qr.q();
    q.columns(1, n - 1).into_owned()
}

/// Centre of the largest inscribed ball via one LP. Non-unique centres are
/// resolved by the solver's deterministic iterate (documented as non-unique).
pub fn chebyshev_center(p: &HPolytope) -> Result<DVector<f64>> {
    let n = p.dim();
    let mut prog = ConicProgram::new();
    let xs: Vec<usize> = prog.add_vars(n).collect();
    let r = prog.add_var();
    prog.add_objective(r, -1.0); // maximize radius
    let mut rows = Vec::with_capacity(p.num_rows());
    for i in 0..p.num_rows() {
        let norm = p.normals.row(i).norm();
        let mut e = LinExpr::constant(p.offsets[i]);
        for (j, &xv) in xs.iter().enumerate() {
            e.push(xv, -p.normals[(i, j)]);
        }
        e.push(r, -norm);
        rows.push(e);
    }
    prog.add_nonneg_block(rows);
    let rep = prog.solve(LP_TOL);
    match rep.status {
        SolveStatus::Optimal => {
            let x = rep.primal_or("chebyshev");
            if x[r] < -TAU_GEOM {
                return Err(GeometryError::Empty);
            }
            Ok(DVector::from_iterator(n, xs.iter().map(|&v| x[v])))
        }
        SolveStatus::Unbounded => Err(GeometryError::Unbounded),
        SolveStatus::Infeasible => Err(GeometryError::Empty),
        SolveStatus::NumericalFailure => {
            Err(GeometryError::Numerical("chebyshev LP failed".into()))
        }
    }
}

/// Halfspace form of `a ⊕ b`. Exact for axis-aligned boxes in any dimension
/// and for arbitrary polytopes in dimension ≤ 2 (where the facet normals of
/// the sum are facet normals of a summand).
pub fn minkowski_sum(a: &HPolytope, b: &HPolytope) -> Result<HPolytope> {
    assert_eq!(a.dim(), b.dim());
    let n = a.dim();
    if let (Some((alo, ahi)), Some((blo, bhi))) = (a.as_box(), b.as_box()) {
        let lo: Vec<f64> = (0..n).map(|i| alo[i] + blo[i]).collect();
        let hi: Vec<f64> = (0..n).map(|i| ahi[i] + bhi[i]).collect();
        return Ok(HPolytope::from_box(&lo, &hi));
    }
    if n > 2 {
        return Err(GeometryError::Unsupported(
            "minkowski sum beyond dim 2 implemented for boxes only".into(),
        ));
    }
    let mut dirs: Vec<DVector<f64>> = Vec::new();
    for src in [a, b] {
        let normalized = src.normalized_rows();
        for i in 0..normalized.num_rows() {
            let row = normalized.normals.row(i).transpose();
            if row.norm() == 0.0 {
                continue;
            }
            if !dirs.iter().any(|d| (d - &row).amax() <= 1e-12) {
                dirs.push(row);
            }
        }
    }
    let mut normals = DMatrix::zeros(dirs.len(), n);
    let mut offsets = DVector::zeros(dirs.len());
    for (i, d) in dirs.iter().enumerate() {
        normals.row_mut(i).copy_from(&d.transpose());
        offsets[i] = support_value(a, d)? + support_value(b, d)?;
    }
    Ok(HPolytope::new(normals, offsets))
}

/// Independent reference routes used by the verification suites. These work
/// from enumerated vertex coordinates only and never share the facet-recursion
/// path of [`volume`].
pub mod oracle {
    use super::*;

    /// `max gᵀv` over enumerated vertices.
    pub fn support_from_vertices(p: &HPolytope, g: &DVector<f64>) -> Result<f64> {
        let verts = enumerate_vertices(p)?;
        verts
            .vertices
            .iter()
            .map(|v| g.dot(v))
            .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.max(v))))
            .ok_or(GeometryError::Empty)
    }

    /// Containment of `inner`'s vertices in the outer rows.
    pub fn contains_by_vertices(
        outer_normals: &DMatrix<f64>,
        outer_offsets: &DVector<f64>,
        inner: &HPolytope,
        tol: f64,
    ) -> Result<bool> {
        let verts = enumerate_vertices(inner)?;
        Ok(verts.vertices.iter().all(|v| {
            (0..outer_normals.nrows())
                .all(|i| outer_normals.row(i).transpose().dot(v) <= outer_offsets[i] + tol)
        }))
    }

    /// Volume from vertex coordinates: cone decomposition over facets with
    /// facet areas computed by shoelace (2-D facets) or edge length (1-D).
    /// Supports dimensions 1–3.
    pub fn volume_from_vertices(p: &HPolytope) -> Result<f64> {
        let n = p.dim();
        let verts = enumerate_vertices(p)?.vertices;
        if verts.len() <= n {
            return Ok(0.0);
        }
        match n {
            1 => {
                let vals: Vec<f64> = verts.iter().map(|v| v[0]).collect();
                let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                Ok(hi - lo)
            }
            2 => Ok(polygon_area(&verts)),
            3 => {
                let mut centroid = DVector::zeros(3);
                for v in &verts {
                    centroid += v;
                }
                centroid /= verts.len() as f64;
                let mut total = 0.0;
                for i in 0..p.num_rows() {
                    let a = p.normals.row(i).transpose();
                    let norm = a.norm();
                    if norm == 0.0 {
                        continue;
                    }
                    let active: Vec<&DVector<f64>> = verts
                        .iter()
                        .filter(|v| (a.dot(v) - p.offsets[i]).abs() <= 1e-7 * norm.max(1.0))
                        .collect();
                    if active.len() < 3 {
                        continue;
                    }
                    let basis = hyperplane_basis(&a);
                    let origin = active[0];
                    let flat: Vec<DVector<f64>> = active
                        .iter()
                        .map(|v| {
                            DVector::from_vec(vec![
                                basis.column(0).dot(&(*v - origin)),
                                basis.column(1).dot(&(*v - origin)),
                            ])
                        })
                        .collect();
                    let area = polygon_area(&flat);
                    let h = (p.offsets[i] - a.dot(&centroid)) / norm;
                    if h > 0.0 {
                        total += area * h / 3.0;
                    }
                }
                Ok(total)
            }
            _ => Err(GeometryError::DimensionTooLarge { dim: n, max: 3 }),
        }
    }

    /// Shoelace area of a convex point set (sorted by angle around the mean).
    pub fn polygon_area(points: &[DVector<f64>]) -> f64 {
        if points.len() < 3 {
            return 0.0;
        }
        let cx = points.iter().map(|p| p[0]).sum::<f64>() / points.len() as f64;
        let cy = points.iter().map(|p| p[1]).sum::<f64>() / points.len() as f64;
        let mut pts: Vec<(f64, f64, f64)> = points
            .iter()
            .map(|p| ((p[1] - cy).atan2(p[0] - cx), p[0], p[1]))
            .collect();
        pts.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let mut area = 0.0;
        for i in 0..pts.len() {
            let (_, x1, y1) = pts[i];
            let (_, x2, y2) = pts[(i + 1) % pts.len()];
            area += x1 * y2 - x2 * y1;
        }
        area.abs() / 2.0
    }
}
