//! The uncertain linear system: affine parameterization `(A(θ), B(θ)) =
//! (A₀, B₀) + Σᵢ (Aᵢ, Bᵢ)[θ]ᵢ`, regressor construction, disturbance and
//! measurement-noise sampling, and truth-model simulation.
//!
//! Models are immutable; samplers own per-worker RNG streams split from a
//! master seed, so independent runs parallelize freely and are
//! bit-reproducible.

use crate::estimator::ParamSet;
use crate::geometry::{self, HPolytope};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SystemError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("true parameter lies outside the initial parameter set")]
    TruthOutsideInitialSet,
    #[error("disturbance tightening violated: {0}")]
    DisturbanceSets(String),
    #[error("rejection sampling budget exceeded")]
    RejectionBudget,
    #[error(transparent)]
    Geometry(#[from] geometry::GeometryError),
}

/// Affine-in-θ system matrices together with the truth parameter and the
/// initial parameter set.
#[derive(Debug, Clone)]
pub struct UncertainModel {
    /// `A_0..A_p`, each `n_x × n_x`.
    a_mats: Vec<DMatrix<f64>>,
    /// `B_0..B_p`, each `n_x × n_u`.
    b_mats: Vec<DMatrix<f64>>,
    theta_star: DVector<f64>,
    theta0: ParamSet,
}

impl UncertainModel {
    pub fn new(
        a_mats: Vec<DMatrix<f64>>,
        b_mats: Vec<DMatrix<f64>>,
        theta_star: DVector<f64>,
        theta0: ParamSet,
    ) -> Result<Self, SystemError> {
        if a_mats.len() != b_mats.len() || a_mats.is_empty() {
            return Err(SystemError::Dimension("need p+1 A and B matrices".into()));
        }
        let p = a_mats.len() - 1;
        let nx = a_mats[0].nrows();
        let nu = b_mats[0].ncols();
        for a in &a_mats {
            if a.nrows() != nx || a.ncols() != nx {
                return Err(SystemError::Dimension("A matrices must be n_x × n_x".into()));
            }
        }
        for b in &b_mats {
            if b.nrows() != nx || b.ncols() != nu {
                return Err(SystemError::Dimension("B matrices must be n_x × n_u".into()));
            }
        }
        if theta_star.len() != p || theta0.dim() != p {
            return Err(SystemError::Dimension("parameter dimension mismatch".into()));
        }
        if !theta0.contains(&theta_star, 1e-12) {
            return Err(SystemError::TruthOutsideInitialSet);
        }
        Ok(Self { a_mats, b_mats, theta_star, theta0 })
    }

    pub fn nx(&self) -> usize {
        self.a_mats[0].nrows()
    }

    pub fn nu(&self) -> usize {
        self.b_mats[0].ncols()
    }

    pub fn p(&self) -> usize {
        self.a_mats.len() - 1
    }

    pub fn theta_star(&self) -> &DVector<f64> {
        &self.theta_star
    }

    pub fn theta0(&self) -> &ParamSet {
        &self.theta0
    }

    pub fn a_mat(&self, i: usize) -> &DMatrix<f64> {
        &self.a_mats[i]
    }

    pub fn b_mat(&self, i: usize) -> &DMatrix<f64> {
        &self.b_mats[i]
    }

    /// `(A(θ), B(θ))`.
    pub fn assemble(&self, theta: &DVector<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
        assert_eq!(theta.len(), self.p(), "theta length");
        let mut a = self.a_mats[0].clone();
        let mut b = self.b_mats[0].clone();
        for i in 0..self.p() {
            a += &self.a_mats[i + 1] * theta[i];
            b += &self.b_mats[i + 1] * theta[i];
        }
        (a, b)
    }

    /// Closed-loop map `Φ(θ) = A(θ) + B(θ)K`.
    pub fn phi(&self, theta: &DVector<f64>, k_gain: &DMatrix<f64>) -> DMatrix<f64> {
        let (a, b) = self.assemble(theta);
        a + b * k_gain
    }

    /// Regressor pair: column `i` of `D` is `A_{i+1} x + B_{i+1} u`, and
    /// `d = A₀x + B₀u`, so that `D(x,u)θ + d(x,u) = A(θ)x + B(θ)u`.
    pub fn regressor(&self, x: &DVector<f64>, u: &DVector<f64>) -> (DMatrix<f64>, DVector<f64>) {
        assert_eq!(x.len(), self.nx());
        assert_eq!(u.len(), self.nu());
        let mut d_mat = DMatrix::zeros(self.nx(), self.p());
        for i in 0..self.p() {
            let col = &self.a_mats[i + 1] * x + &self.b_mats[i + 1] * u;
            d_mat.column_mut(i).copy_from(&col);
        }
        let d_vec = &self.a_mats[0] * x + &self.b_mats[0] * u;
        (d_mat, d_vec)
    }

    /// One exact truth-model step `x⁺ = A(θ*)x + B(θ*)u + w`.
    pub fn step_truth(&self, x: &DVector<f64>, u: &DVector<f64>, w: &DVector<f64>) -> DVector<f64> {
        assert_eq!(w.len(), self.nx());
        let (d_mat, d_vec) = self.regressor(x, u);
        d_mat * &self.theta_star + d_vec + w
    }
}

/// `y = x + s`.
pub fn measure(x: &DVector<f64>, s: &DVector<f64>) -> DVector<f64> {
    x + s
}

/// The plant's operating constraints `F x + G u ≤ 1`.
#[derive(Debug, Clone)]
pub struct Constraints {
    pub f: DMatrix<f64>,
    pub g: DMatrix<f64>,
}

impl Constraints {
    pub fn new(f: DMatrix<f64>, g: DMatrix<f64>) -> Self {
        assert_eq!(f.nrows(), g.nrows(), "F and G row counts differ");
        Self { f, g }
    }

    /// No operating constraints (zero rows).
    pub fn none(nx: usize, nu: usize) -> Self {
        Self { f: DMatrix::zeros(0, nx), g: DMatrix::zeros(0, nu) }
    }

    pub fn num_rows(&self) -> usize {
        self.f.nrows()
    }

    pub fn satisfied(&self, x: &DVector<f64>, u: &DVector<f64>, tol: f64) -> bool {
        let vals = &self.f * x + &self.g * u;
        vals.iter().all(|&v| v <= 1.0 + tol)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerKind {
    /// Uniform over the tight set Ω.
    Uniform,
    /// Mixture: with probability 0.5 uniform over Ω, otherwise uniform on a
    /// facet of Ω, so boundary proximity has nonvanishing frequency.
    BoundaryBiased,
}

/// Disturbance description: the bound `W` the estimator works with, the tight
/// set `Ω ⊆ W` the samples actually come from, and the over-approximation
/// radius `ρ` with `W ⊆ Ω ⊕ ρB`.
#[derive(Debug, Clone)]
pub struct DisturbanceModel {
    pub bound_set: HPolytope,
    pub tight_set: HPolytope,
    pub sampler: SamplerKind,
    pub rho: f64,
}

const REJECTION_BUDGET: usize = 100_000;

impl DisturbanceModel {
    /// Tight case: samples come from `W` itself.
    pub fn exact(w: HPolytope, sampler: SamplerKind) -> Self {
        Self { bound_set: w.clone(), tight_set: w, sampler, rho: 0.0 }
    }

    pub fn with_tight_set(
        w: HPolytope,
        omega: HPolytope,
        sampler: SamplerKind,
        rho: f64,
    ) -> Result<Self, SystemError> {
        let m = Self { bound_set: w, tight_set: omega, sampler, rho };
        m.verify()?;
        Ok(m)
    }

    /// Checks Ω ⊆ W (containment LP) and, when ρ > 0, that every vertex of W
    /// is within ρ of Ω.
    pub fn verify(&self) -> Result<(), SystemError> {
        let cert = geometry::contains_polytope(
            self.bound_set.normals(),
            self.bound_set.offsets(),
            &self.tight_set,
            1e-8,
        )?;
        if !cert.contained {
            return Err(SystemError::DisturbanceSets("Ω ⊄ W".into()));
        }
        if self.rho > 0.0 {
            let verts = geometry::enumerate_vertices(&self.bound_set)?;
            for v in &verts.vertices {
                let dist = distance_to_polytope(&self.tight_set, v)?;
                if dist > self.rho + 1e-8 {
                    return Err(SystemError::DisturbanceSets(format!(
                        "W vertex at distance {dist:.3e} > ρ = {:.3e} from Ω",
                        self.rho
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn sample(&self, rng: &mut ChaCha8Rng) -> Result<DVector<f64>, SystemError> {
        match self.sampler {
            SamplerKind::Uniform => sample_uniform(&self.tight_set, rng),
            SamplerKind::BoundaryBiased => {
                if rng.random::<f64>() < 0.5 {
                    sample_uniform(&self.tight_set, rng)
                } else {
                    sample_on_facet(&self.tight_set, rng)
                }
            }
        }
    }
}

/// Measurement-noise description with the enumerated vertex list `s^(1..h)`.
#[derive(Debug, Clone)]
pub struct NoiseModel {
    pub set: HPolytope,
    pub vertices: Vec<DVector<f64>>,
    pub sampler: SamplerKind,
}

impl NoiseModel {
    pub fn new(set: HPolytope, sampler: SamplerKind) -> Result<Self, SystemError> {
        let vertices = geometry::enumerate_vertices(&set)?.vertices;
        Ok(Self { set, vertices, sampler })
    }

    pub fn h(&self) -> usize {
        self.vertices.len()
    }

    pub fn sample(&self, rng: &mut ChaCha8Rng) -> Result<DVector<f64>, SystemError> {
        match self.sampler {
            SamplerKind::Uniform => sample_uniform(&self.set, rng),
            SamplerKind::BoundaryBiased => {
                if rng.random::<f64>() < 0.5 {
                    sample_uniform(&self.set, rng)
                } else {
                    sample_on_facet(&self.set, rng)
                }
            }
        }
    }
}

/// Euclidean distance from `x` to the polytope (0 when inside), via a small
/// SOC program.
fn distance_to_polytope(p: &HPolytope, x: &DVector<f64>) -> Result<f64, SystemError> {
    use crate::conic::{ConicProgram, LinExpr, SolveStatus};
    let n = p.dim();
    let mut prog = ConicProgram::new();
    let ys: Vec<usize> = prog.add_vars(n).collect();
    let t = prog.add_var();
    prog.add_objective(t, 1.0);
    // rows: y in P
    let mut rows = Vec::new();
    for i in 0..p.num_rows() {
        let mut e = LinExpr::constant(p.offsets()[i]);
        for (j, &yv) in ys.iter().enumerate() {
            e.push(yv, -p.normals()[(i, j)]);
        }
        rows.push(e);
    }
    prog.add_nonneg_block(rows);
    // t >= ||y - x||
    let mut soc = vec![LinExpr::var(t)];
    for (j, &yv) in ys.iter().enumerate() {
        let mut e = LinExpr::constant(-x[j]);
        e.push(yv, 1.0);
        soc.push(e);
    }
    prog.add_soc_block(soc);
    let rep = prog.solve(1e-9);
    match rep.status {
        SolveStatus::Optimal => Ok(rep.objective.max(0.0)),
        _ => Err(SystemError::DisturbanceSets("distance program failed".into())),
    }
}

/// Uniform sample over a bounded polytope: direct for boxes, otherwise
/// rejection from the bounding box.
pub fn sample_uniform(p: &HPolytope, rng: &mut ChaCha8Rng) -> Result<DVector<f64>, SystemError> {
    if let Some((lo, hi)) = p.as_box() {
        let n = p.dim();
        let mut w = DVector::zeros(n);
        for i in 0..n {
            w[i] = if hi[i] > lo[i] { rng.random_range(lo[i]..=hi[i]) } else { lo[i] };
        }
        return Ok(w);
    }
    let (lo, hi) = bounding_box(p)?;
    for _ in 0..REJECTION_BUDGET {
        let n = p.dim();
        let mut w = DVector::zeros(n);
        for i in 0..n {
            w[i] = if hi[i] > lo[i] { rng.random_range(lo[i]..=hi[i]) } else { lo[i] };
        }
        if p.contains_point(&w, 0.0) {
            return Ok(w);
        }
    }
    Err(SystemError::RejectionBudget)
}

/// Uniform sample on the boundary: pick a facet with probability proportional
/// to its measure, then sample uniformly within it (by rejection in facet
/// coordinates). Supported for dimensions ≤ 3.
fn sample_on_facet(p: &HPolytope, rng: &mut ChaCha8Rng) -> Result<DVector<f64>, SystemError> {
    let n = p.dim();
    let verts = geometry::enumerate_vertices(p)?.vertices;
    // facet list: (row, vertices on it)
    let mut facets: Vec<(usize, Vec<usize>)> = Vec::new();
    for i in 0..p.num_rows() {
        let a = p.normals().row(i).transpose();
        let norm = a.norm();
        if norm == 0.0 {
            continue;
        }
        let active: Vec<usize> = (0..verts.len())
            .filter(|&v| (a.dot(&verts[v]) - p.offsets()[i]).abs() <= 1e-9 * norm.max(1.0))
            .collect();
        if active.len() >= n {
            facets.push((i, active));
        }
    }
    if facets.is_empty() {
        // zero-dimensional set (e.g. W = {0}); its boundary is itself
        return sample_uniform(p, rng);
    }
    let measures: Vec<f64> = facets
        .iter()
        .map(|(_, act)| facet_measure(n, &act.iter().map(|&v| verts[v].clone()).collect::<Vec<_>>()))
        .collect();
    let total: f64 = measures.iter().sum();
    let mut pick = rng.random_range(0.0..total.max(f64::MIN_POSITIVE));
    let mut chosen = facets.len() - 1;
    for (idx, m) in measures.iter().enumerate() {
        if pick < *m {
            chosen = idx;
            break;
        }
        pick -= m;
    }
    let (row, active) = &facets[chosen];
    let pts: Vec<DVector<f64>> = active.iter().map(|&v| verts[v].clone()).collect();
    match n {
        1 => Ok(pts[0].clone()),
        2 => {
            // segment between the two extreme active vertices
            let (a, b) = extreme_pair(&pts);
            let t: f64 = rng.random_range(0.0..=1.0);
            Ok(&pts[a] + (&pts[b] - &pts[a]) * t)
        }
        3 => {
            // rejection sampling inside the facet polygon in 2-D coordinates
            let normal = p.normals().row(*row).transpose();
            let basis = facet_basis(&normal);
            let origin = pts[0].clone();
            let flat: Vec<(f64, f64)> = pts
                .iter()
                .map(|v| {
                    let d = v - &origin;
                    (basis.column(0).dot(&d), basis.column(1).dot(&d))
                })
                .collect();
            let (xmin, xmax) = flat.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &(x, _)| (lo.min(x), hi.max(x)));
            let (ymin, ymax) = flat.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &(_, y)| (lo.min(y), hi.max(y)));
            for _ in 0..REJECTION_BUDGET {
                let x = rng.random_range(xmin..=xmax);
                let y = rng.random_range(ymin..=ymax);
                let candidate = &origin + basis.column(0) * x + basis.column(1) * y;
                if p.contains_point(&candidate, 1e-9) {
                    return Ok(candidate);
                }
            }
            Err(SystemError::RejectionBudget)
        }
        _ => Err(SystemError::Dimension("facet sampling limited to dim <= 3".into())),
    }
}

fn extreme_pair(pts: &[DVector<f64>]) -> (usize, usize) {
    let mut best = (0, 0, 0.0);
    for i in 0..pts.len() {
        for j in i + 1..pts.len() {
            let d = (&pts[i] - &pts[j]).norm();
            if d > best.2 {
                best = (i, j, d);
            }
        }
    }
    (best.0, best.1)
}

fn facet_measure(n: usize, pts: &[DVector<f64>]) -> f64 {
    match n {
        1 => 1.0,
        2 => {
            let (a, b) = extreme_pair(pts);
            (&pts[a] - &pts[b]).norm()
        }
        _ => {
            if pts.len() < 3 {
                return 0.0;
            }
            // area of the (planar, convex) point set
            let mut centroid = DVector::zeros(pts[0].len());
            for v in pts {
                centroid += v;
            }
            centroid /= pts.len() as f64;
            let e1 = (&pts[0] - &centroid).normalize();
            let mut e2 = DVector::zeros(pts[0].len());
            for v in pts.iter().skip(1) {
                let d = v - &centroid;
                let orth = &d - &e1 * e1.dot(&d);
                if orth.norm() > 1e-12 {
                    e2 = orth.normalize();
                    break;
                }
            }
            let flat: Vec<DVector<f64>> = pts
                .iter()
                .map(|v| {
                    let d = v - &centroid;
                    DVector::from_vec(vec![e1.dot(&d), e2.dot(&d)])
                })
                .collect();
            geometry::oracle::polygon_area(&flat)
        }
    }
}

fn facet_basis(normal: &DVector<f64>) -> DMatrix<f64> {
    let n = normal.len();
    let mut m = DMatrix::zeros(n, n);
    m.column_mut(0).copy_from(&(normal / normal.norm()));
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
    let q = m.qr().q();
    q.columns(1, n - 1).into_owned()
}

fn bounding_box(p: &HPolytope) -> Result<(DVector<f64>, DVector<f64>), SystemError> {
    let n = p.dim();
    let mut lo = DVector::zeros(n);
    let mut hi = DVector::zeros(n);
    for i in 0..n {
        let mut g = DVector::zeros(n);
        g[i] = 1.0;
        hi[i] = geometry::support_value(p, &g)?;
        g[i] = -1.0;
        lo[i] = -geometry::support_value(p, &g)?;
    }
    Ok((lo, hi))
}

/// Serialized model description (`configs/*.json`). Matrices are row-major.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelFile {
    pub n_x: usize,
    pub n_u: usize,
    pub p: usize,
    /// `A_0..A_p`, row-major `n_x × n_x` each.
    pub a: Vec<Vec<f64>>,
    /// `B_0..B_p`, row-major `n_x × n_u` each.
    pub b: Vec<Vec<f64>>,
    pub theta_star: Vec<f64>,
    pub theta0_directions: Vec<Vec<f64>>,
    pub theta0_offsets: Vec<f64>,
    pub w_normals: Vec<Vec<f64>>,
    pub w_offsets: Vec<f64>,
    /// Tight disturbance set Ω; defaults to W.
    #[serde(default)]
    pub omega_normals: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub omega_offsets: Option<Vec<f64>>,
    #[serde(default)]
    pub rho: f64,
    /// Measurement-noise polytope S (absent for exact state measurement).
    #[serde(default)]
    pub s_normals: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub s_offsets: Option<Vec<f64>>,
}

fn to_matrix(rows: usize, cols: usize, data: &[f64]) -> Result<DMatrix<f64>, SystemError> {
    if data.len() != rows * cols {
        return Err(SystemError::Dimension(format!(
            "expected {rows}×{cols} = {} entries, got {}",
            rows * cols,
            data.len()
        )));
    }
    Ok(DMatrix::from_row_slice(rows, cols, data))
}

fn to_polytope(normals: &[Vec<f64>], offsets: &[f64], dim: usize) -> Result<HPolytope, SystemError> {
    if normals.len() != offsets.len() {
        return Err(SystemError::Dimension("normals/offsets count mismatch".into()));
    }
    let mut m = DMatrix::zeros(normals.len(), dim);
    for (i, row) in normals.iter().enumerate() {
        if row.len() != dim {
            return Err(SystemError::Dimension("normal row length mismatch".into()));
        }
        for (j, v) in row.iter().enumerate() {
            m[(i, j)] = *v;
        }
    }
    Ok(HPolytope::new(m, DVector::from_row_slice(offsets)))
}

impl ModelFile {
    pub fn build_model(&self) -> Result<UncertainModel, SystemError> {
        if self.a.len() != self.p + 1 || self.b.len() != self.p + 1 {
            return Err(SystemError::Dimension("need p+1 A and B matrices".into()));
        }
        let a_mats = self
            .a
            .iter()
            .map(|m| to_matrix(self.n_x, self.n_x, m))
            .collect::<Result<Vec<_>, _>>()?;
        let b_mats = self
            .b
            .iter()
            .map(|m| to_matrix(self.n_x, self.n_u, m))
            .collect::<Result<Vec<_>, _>>()?;
        let theta0 = ParamSet::new(
            to_polytope(&self.theta0_directions, &self.theta0_offsets, self.p)?.normals().clone(),
            DVector::from_row_slice(&self.theta0_offsets),
        )
        .map_err(|e| SystemError::Dimension(e.to_string()))?;
        UncertainModel::new(a_mats, b_mats, DVector::from_row_slice(&self.theta_star), theta0)
    }

    pub fn build_disturbance(&self, sampler: SamplerKind) -> Result<DisturbanceModel, SystemError> {
        let w = to_polytope(&self.w_normals, &self.w_offsets, self.n_x)?;
        match (&self.omega_normals, &self.omega_offsets) {
            (Some(n), Some(o)) => {
                let omega = to_polytope(n, o, self.n_x)?;
                DisturbanceModel::with_tight_set(w, omega, sampler, self.rho)
            }
            _ => Ok(DisturbanceModel::exact(w, sampler)),
        }
    }

    pub fn build_noise(&self, sampler: SamplerKind) -> Result<Option<NoiseModel>, SystemError> {
        match (&self.s_normals, &self.s_offsets) {
            (Some(n), Some(o)) => Ok(Some(NoiseModel::new(to_polytope(n, o, self.n_x)?, sampler)?)),
            _ => Ok(None),
        }
    }
}

/// The second-order benchmark system used throughout the closed-loop studies.
pub fn second_order_model_file() -> ModelFile {
    ModelFile {
        n_x: 2,
        n_u: 1,
        p: 3,
        a: vec![
            vec![0.5, 0.2, -0.1, 0.6],
            vec![0.042, 0.0, 0.072, 0.03],
            vec![0.015, 0.019, 0.009, 0.035],
            vec![0.0, 0.0, 0.0, 0.0],
        ],
        b: vec![vec![0.0, 0.5], vec![0.0, 0.0], vec![0.0, 0.0], vec![0.0397, 0.059]],
        theta_star: vec![0.8, 0.2, -0.5],
        theta0_directions: vec![
            vec![1.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.0, 1.0],
            vec![-1.0, 0.0, 0.0],
            vec![0.0, -1.0, 0.0],
            vec![0.0, 0.0, -1.0],
        ],
        theta0_offsets: vec![1.0; 6],
        w_normals: vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![-1.0, 0.0], vec![0.0, -1.0]],
        w_offsets: vec![0.05; 4],
        omega_normals: None,
        omega_offsets: None,
        rho: 0.0,
        s_normals: None,
        s_offsets: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;

    fn model() -> UncertainModel {
        second_order_model_file().build_model().unwrap()
    }

    #[test]
    fn assemble_base_point_and_truth() {
        let m = model();
        let (a, b) = m.assemble(&DVector::zeros(3));
        assert_eq!(a, *m.a_mat(0));
        assert_eq!(b, *m.b_mat(0));

        let (a_star, _) = m.assemble(m.theta_star());
        assert_abs_diff_eq!(a_star[(0, 0)], 0.5366, epsilon = 1e-12);

        let e3 = DVector::from_vec(vec![0.0, 0.0, 1.0]);
        let (_, b3) = m.assemble(&e3);
        assert_abs_diff_eq!(b3[(0, 0)], 0.0397, epsilon = 1e-15);
        assert_abs_diff_eq!(b3[(1, 0)], 0.559, epsilon = 1e-15);
    }

    #[test]
    fn regressor_values_and_identity() {
        let m = model();
        let x = DVector::from_vec(vec![1.0, 0.0]);
        let u = DVector::zeros(1);
        let (d_mat, d_vec) = m.regressor(&x, &u);
        let want = DMatrix::from_row_slice(2, 3, &[0.042, 0.015, 0.0, 0.072, 0.009, 0.0]);
        assert_abs_diff_eq!((d_mat.clone() - want).amax(), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(d_vec[0], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(d_vec[1], -0.1, epsilon = 1e-15);

        let (dz, dzv) = m.regressor(&DVector::zeros(2), &DVector::zeros(1));
        assert_eq!(dz.amax(), 0.0);
        assert_eq!(dzv.amax(), 0.0);

        // identity D(x,u)θ + d(x,u) = A(θ)x + B(θ)u on randomized triples
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let x = DVector::from_fn(2, |_, _| rng.random_range(-5.0..5.0));
            let u = DVector::from_fn(1, |_, _| rng.random_range(-5.0..5.0));
            let th = DVector::from_fn(3, |_, _| rng.random_range(-1.0..1.0));
            let (dm, dv) = m.regressor(&x, &u);
            let (a, b) = m.assemble(&th);
            let lhs = dm * &th + dv;
            let rhs = a * &x + b * &u;
            assert!((lhs - rhs).amax() <= 1e-12);
        }
    }

    #[test]
    fn step_truth_values() {
        let m = model();
        let zero2 = DVector::zeros(2);
        let zero1 = DVector::zeros(1);
        assert_eq!(m.step_truth(&zero2, &zero1, &zero2).amax(), 0.0);

        let x = DVector::from_vec(vec![1.0, 0.0]);
        let w = DVector::from_vec(vec![0.05, -0.05]);
        let next = m.step_truth(&x, &zero1, &w);
        // d + Dθ* + w with d = (0.5, -0.1), Dθ* = (0.0366, 0.0594)
        assert_abs_diff_eq!(next[0], 0.5866, epsilon = 1e-12);
        assert_abs_diff_eq!(next[1], -0.0906, epsilon = 1e-12);
    }

    #[test]
    fn step_truth_superposition() {
        let m = model();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let x1 = DVector::from_fn(2, |_, _| rng.random_range(-2.0..2.0));
            let x2 = DVector::from_fn(2, |_, _| rng.random_range(-2.0..2.0));
            let u1 = DVector::from_fn(1, |_, _| rng.random_range(-2.0..2.0));
            let u2 = DVector::from_fn(1, |_, _| rng.random_range(-2.0..2.0));
            let w1 = DVector::from_fn(2, |_, _| rng.random_range(-0.05..0.05));
            let w2 = DVector::from_fn(2, |_, _| rng.random_range(-0.05..0.05));
            let lhs = m.step_truth(&(&x1 + &x2), &(&u1 + &u2), &(&w1 + &w2));
            let rhs = m.step_truth(&x1, &u1, &w1) + m.step_truth(&x2, &u2, &w2);
            assert!((lhs - rhs).amax() <= 1e-12); // affine offset d is linear in (x,u) here
        }
    }

    #[test]
    fn uniform_sampler_stays_inside_and_centers() {
        let w = HPolytope::inf_ball(2, 0.05);
        let dm = DisturbanceModel::exact(w.clone(), SamplerKind::Uniform);
        let mut rng = ChaCha8Rng::seed_from_u64(123);
        let n = 100_000;
        let mut mean = DVector::zeros(2);
        for _ in 0..n {
            let s = dm.sample(&mut rng).unwrap();
            assert!(s.amax() <= 0.05 + 1e-15);
            mean += &s;
        }
        mean /= n as f64;
        assert!(mean.amax() < 0.002, "empirical mean {mean:?}");
    }

    #[test]
    fn boundary_biased_hits_boundary() {
        let w = HPolytope::inf_ball(2, 0.05);
        let dm = DisturbanceModel::exact(w, SamplerKind::BoundaryBiased);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 4000;
        let mut on_boundary = 0;
        for _ in 0..n {
            let s = dm.sample(&mut rng).unwrap();
            if (s.amax() - 0.05).abs() <= 1e-9 {
                on_boundary += 1;
            }
        }
        assert!(on_boundary as f64 >= 0.4 * n as f64, "boundary fraction {on_boundary}/{n}");
    }

    #[test]
    fn seeded_runs_are_bit_reproducible() {
        let w = HPolytope::inf_ball(2, 0.05);
        let dm = DisturbanceModel::exact(w, SamplerKind::BoundaryBiased);
        let draw = |seed: u64, stream: u64| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(stream);
            (0..100).map(|_| dm.sample(&mut rng).unwrap()).collect::<Vec<_>>()
        };
        assert_eq!(draw(9, 1), draw(9, 1));
        assert_ne!(draw(9, 1), draw(9, 2));
    }

    #[test]
    fn inexact_bounds_construction_verifies() {
        // Ω half-width a, W half-width a + ρ/√n_x satisfies W ⊆ Ω ⊕ ρB.
        let a = 0.05;
        let rho = 0.02;
        let nx = 2.0_f64;
        let w = HPolytope::inf_ball(2, a + rho / nx.sqrt());
        let omega = HPolytope::inf_ball(2, a);
        let dm =
            DisturbanceModel::with_tight_set(w, omega, SamplerKind::BoundaryBiased, rho).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let s = dm.sample(&mut rng).unwrap();
            assert!(s.amax() <= a + 1e-12); // samples come from Ω
        }
        // Ω ⊄ W fails verification
        let bad = DisturbanceModel::with_tight_set(
            HPolytope::inf_ball(2, 0.01),
            HPolytope::inf_ball(2, 0.05),
            SamplerKind::Uniform,
            0.0,
        );
        assert!(bad.is_err());
    }

    #[test]
    fn model_file_round_trip() {
        let mf = second_order_model_file();
        let text = serde_json::to_string_pretty(&mf).unwrap();
        let back: ModelFile = serde_json::from_str(&text).unwrap();
        let m = back.build_model().unwrap();
        assert_eq!(m.nx(), 2);
        assert_eq!(m.nu(), 1);
        assert_eq!(m.p(), 3);
        assert!(m.theta0().contains(m.theta_star(), 0.0));
    }

    #[test]
    fn measurement_noise_model() {
        let s = NoiseModel::new(HPolytope::inf_ball(2, 0.01), SamplerKind::Uniform).unwrap();
        assert_eq!(s.h(), 4);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = DVector::from_vec(vec![1.0, 2.0]);
        let noise = s.sample(&mut rng).unwrap();
        let y = measure(&x, &noise);
        assert!((y - x).amax() <= 0.01 + 1e-12);
    }
}
