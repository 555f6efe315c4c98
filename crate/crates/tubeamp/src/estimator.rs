//! Set-membership parameter identification.
//!
//! One observed transition falsifies all parameters for which the implied
//! disturbance leaves its bound; the surviving set is a polytope
//! `{θ : P θ ≤ q}`. The online estimate keeps fixed facet directions `M_Θ`
//! and tightens only the offsets `μ_t`, using one support LP per direction
//! over the stacked halfspaces of a window of unfalsified sets intersected
//! with the previous estimate. Measurement noise turns unfalsified sets into
//! convex hulls of per-noise-vertex polytopes; those are outer-approximated
//! in the `M_Θ` directions before stacking (the support of a hull is the max
//! of member supports), which preserves the outer-approximation property the
//! soundness argument rests on.

use crate::conic::{ConicProgram, LinExpr, SolveStatus};
use crate::geometry::{self, GeometryError, HPolytope};
use crate::system::{NoiseModel, UncertainModel};
use nalgebra::{DMatrix, DVector};
use std::collections::VecDeque;
use thiserror::Error;

/// Outward slack added to computed support offsets so that LP rounding can
/// never exclude the true parameter.
const SUPPORT_PAD: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum EstimatorError {
    #[error("window intersection is empty: observed data is inconsistent with the model")]
    EmptyIntersection,
    #[error("parameter set is empty")]
    EmptySet,
    #[error("direction matrix has a zero row")]
    ZeroDirection,
    #[error("parameter set is unbounded under the given directions")]
    UnboundedSet,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

type Result<T> = std::result::Result<T, EstimatorError>;

/// Fixed-complexity parameter set `Θ(μ) = {θ : M θ ≤ μ}` with unit rows of
/// `M` and online-tightened offsets `μ`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet {
    m: DMatrix<f64>,
    mu: DVector<f64>,
}

impl ParamSet {
    /// Normalizes rows to unit norm (scaling offsets accordingly) and checks
    /// that a nonempty set with these directions is bounded.
    pub fn new(m: DMatrix<f64>, mu: DVector<f64>) -> Result<Self> {
        assert_eq!(m.nrows(), mu.len(), "direction/offset count mismatch");
        let mut m = m;
        let mut mu = mu;
        for i in 0..m.nrows() {
            let norm = m.row(i).norm();
            if norm == 0.0 {
                return Err(EstimatorError::ZeroDirection);
            }
            for j in 0..m.ncols() {
                m[(i, j)] /= norm;
            }
            mu[i] /= norm;
        }
        let set = Self { m, mu };
        if !set.as_polytope().is_empty() && !set.as_polytope().is_bounded()? {
            return Err(EstimatorError::UnboundedSet);
        }
        Ok(set)
    }

    /// Box `{‖θ‖_∞ ≤ radius}` with directions `[I; -I]`.
    pub fn inf_ball(p: usize, radius: f64) -> Self {
        let poly = HPolytope::inf_ball(p, radius);
        Self { m: poly.normals().clone(), mu: poly.offsets().clone() }
    }

    /// Degenerate set `{θ0}`.
    pub fn singleton(theta: &DVector<f64>) -> Self {
        let poly = HPolytope::singleton(theta);
        Self { m: poly.normals().clone(), mu: poly.offsets().clone() }
    }

    pub fn dim(&self) -> usize {
        self.m.ncols()
    }

    pub fn num_rows(&self) -> usize {
        self.m.nrows()
    }

    pub fn directions(&self) -> &DMatrix<f64> {
        &self.m
    }

    pub fn offsets(&self) -> &DVector<f64> {
        &self.mu
    }

    pub fn as_polytope(&self) -> HPolytope {
        HPolytope::new(self.m.clone(), self.mu.clone())
    }

    pub fn contains(&self, theta: &DVector<f64>, tol: f64) -> bool {
        self.as_polytope().contains_point(theta, tol)
    }

    pub fn volume(&self) -> Result<f64> {
        Ok(geometry::volume(&self.as_polytope())?)
    }

    /// Largest pairwise vertex distance.
    pub fn vertex_diameter(&self) -> Result<f64> {
        let verts = geometry::enumerate_vertices(&self.as_polytope())?.vertices;
        let mut best = 0.0_f64;
        for i in 0..verts.len() {
            for j in i + 1..verts.len() {
                best = best.max((&verts[i] - &verts[j]).norm());
            }
        }
        Ok(best)
    }

    /// Extents along each coordinate axis (`2p` support LPs).
    pub fn side_lengths(&self) -> Result<Vec<f64>> {
        let poly = self.as_polytope();
        let mut sides = Vec::with_capacity(self.dim());
        for i in 0..self.dim() {
            let mut g = DVector::zeros(self.dim());
            g[i] = 1.0;
            let hi = geometry::support_value(&poly, &g)?;
            g[i] = -1.0;
            let lo = -geometry::support_value(&poly, &g)?;
            sides.push((hi - lo).max(0.0));
        }
        Ok(sides)
    }
}

/// Parameters consistent with one observed transition. The exact case is a
/// single halfspace system `P θ ≤ q`; the noisy case keeps one system per
/// noise vertex and exposes the hull through its support function.
#[derive(Debug, Clone)]
pub struct UnfalsifiedSet {
    components: Vec<(DMatrix<f64>, DVector<f64>)>,
}

impl UnfalsifiedSet {
    pub fn num_components(&self) -> usize {
        self.components.len()
    }

    /// The halfspace form when the set is a plain polytope (exact case).
    pub fn halfspace(&self) -> Option<(&DMatrix<f64>, &DVector<f64>)> {
        match self.components.as_slice() {
            [(p, q)] => Some((p, q)),
            _ => None,
        }
    }

    pub fn components(&self) -> &[(DMatrix<f64>, DVector<f64>)] {
        &self.components
    }

    /// Support of the set in direction `g`; for a hull this is the maximum of
    /// the member supports.
    pub fn support(&self, g: &DVector<f64>) -> Result<f64> {
        let mut best = f64::NEG_INFINITY;
        for (p, q) in &self.components {
            let poly = HPolytope::new(p.clone(), q.clone());
            match geometry::support_value(&poly, g) {
                Ok(v) => best = best.max(v),
                Err(GeometryError::Empty) => continue,
                Err(e) => return Err(e.into()),
            }
        }
        if best == f64::NEG_INFINITY {
            return Err(EstimatorError::EmptyIntersection);
        }
        Ok(best)
    }

    /// Whether `theta` satisfies some component's halfspace system (exact for
    /// single-component sets; sufficient for hulls).
    pub fn contains(&self, theta: &DVector<f64>, tol: f64) -> bool {
        self.components
            .iter()
            .any(|(p, q)| HPolytope::new(p.clone(), q.clone()).contains_point(theta, tol))
    }
}

/// Unfalsified set from an exact state transition:
/// `Δ = {θ : x_now − A(θ)x_prev − B(θ)u_prev ∈ W}`, i.e.
/// `P = −Π_w D(x_prev, u_prev)` and `q = π_w + Π_w (d(x_prev, u_prev) − x_now)`.
pub fn unfalsified(
    model: &UncertainModel,
    w: &HPolytope,
    x_prev: &DVector<f64>,
    u_prev: &DVector<f64>,
    x_now: &DVector<f64>,
) -> UnfalsifiedSet {
    let (d_mat, d_vec) = model.regressor(x_prev, u_prev);
    let p = -(w.normals() * d_mat);
    let q = w.offsets() + w.normals() * (d_vec - x_now);
    UnfalsifiedSet { components: vec![(p, q)] }
}

/// Noisy-measurement unfalsified set: one component per noise vertex
/// `s^(j)`, each bounding the residual in `W ⊕ S`; the set itself is the
/// convex hull of the components.
pub fn unfalsified_noisy(
    model: &UncertainModel,
    w: &HPolytope,
    s: &NoiseModel,
    y_prev: &DVector<f64>,
    u_prev: &DVector<f64>,
    y_now: &DVector<f64>,
) -> Result<UnfalsifiedSet> {
    let ws = geometry::minkowski_sum(w, &s.set)?;
    let mut components = Vec::with_capacity(s.vertices.len());
    for sv in &s.vertices {
        let x_tilde = y_prev - sv;
        let (d_mat, d_vec) = model.regressor(&x_tilde, u_prev);
        let p = -(ws.normals() * d_mat);
        let q = ws.offsets() + ws.normals() * (d_vec - y_now);
        components.push((p, q));
    }
    Ok(UnfalsifiedSet { components })
}

/// One fixed-complexity update step: per direction `i`,
/// `[μ⁺]_i = support(∩_j Δ_j ∩ Θ(μ), [M]_i)`, computed by a direct support LP
/// over the stacked halfspaces. Hull-valued Δ's are first replaced by their
/// `M`-direction outer approximations. Offsets never increase.
pub fn update(theta_set: &ParamSet, window: &[UnfalsifiedSet], n_u: usize) -> Result<ParamSet> {
    assert!(window.len() <= n_u, "window length exceeds N_u");
    let p = theta_set.dim();
    let mut rows: Vec<(DMatrix<f64>, DVector<f64>)> =
        vec![(theta_set.m.clone(), theta_set.mu.clone())];
    for delta in window {
        if let Some((pm, qv)) = delta.halfspace() {
            rows.push((pm.clone(), qv.clone()));
        } else {
            let mut offsets = DVector::zeros(theta_set.num_rows());
            for i in 0..theta_set.num_rows() {
                let dir = theta_set.m.row(i).transpose();
                offsets[i] = delta.support(&dir)?;
            }
            rows.push((theta_set.m.clone(), offsets));
        }
    }
    let total: usize = rows.iter().map(|(m, _)| m.nrows()).sum();
    let mut normals = DMatrix::zeros(total, p);
    let mut offsets = DVector::zeros(total);
    let mut at = 0;
    for (m, q) in &rows {
        normals.rows_mut(at, m.nrows()).copy_from(m);
        offsets.rows_mut(at, m.nrows()).copy_from(q);
        at += m.nrows();
    }
    let stacked = HPolytope::new(normals, offsets);

    let mut mu_next = theta_set.mu.clone();
    for i in 0..theta_set.num_rows() {
        let dir = theta_set.m.row(i).transpose();
        match geometry::support_value(&stacked, &dir) {
            Ok(v) => mu_next[i] = (v + SUPPORT_PAD).min(theta_set.mu[i]),
            Err(GeometryError::Empty) => return Err(EstimatorError::EmptyIntersection),
            Err(e) => return Err(e.into()),
        }
    }
    Ok(ParamSet { m: theta_set.m.clone(), mu: mu_next })
}

/// The paper's per-direction multiplier LP (`min H·offsets` over `H ≥ 0` with
/// `H·normals = direction`); same optimum as the direct support LP, kept as a
/// cross-check.
pub fn support_via_multipliers(stacked: &HPolytope, dir: &DVector<f64>) -> Result<f64> {
    let mut prog = ConicProgram::new();
    let hs: Vec<usize> = prog.add_vars(stacked.num_rows()).collect();
    let mut block = Vec::with_capacity(hs.len());
    for (r, &hv) in hs.iter().enumerate() {
        prog.add_objective(hv, stacked.offsets()[r]);
        block.push(LinExpr::var(hv));
    }
    prog.add_nonneg_block(block);
    for col in 0..stacked.dim() {
        let mut eq = LinExpr::constant(-dir[col]);
        for (r, &hv) in hs.iter().enumerate() {
            eq.push(hv, stacked.normals()[(r, col)]);
        }
        prog.add_equality(eq);
    }
    let rep = prog.solve(1e-9);
    match rep.status {
        SolveStatus::Optimal => Ok(rep.objective),
        SolveStatus::Infeasible => Err(EstimatorError::Numerical(
            "multiplier LP infeasible (stacked set unbounded in direction)".into(),
        )),
        SolveStatus::Unbounded => Err(EstimatorError::EmptyIntersection),
        SolveStatus::NumericalFailure => {
            Err(EstimatorError::Numerical("multiplier LP failed".into()))
        }
    }
}

/// Sequential identification state: window buffer plus the current set,
/// updated either every step or once per `N_u` steps.
#[derive(Debug, Clone)]
pub struct EstimatorState {
    set: ParamSet,
    window: VecDeque<UnfalsifiedSet>,
    n_u: usize,
    /// 1 = update every step; `N_u` = the periodic schedule.
    period: usize,
    t: usize,
}

impl EstimatorState {
    pub fn new(theta0: ParamSet, n_u: usize, period: usize) -> Self {
        assert!(n_u >= 1 && period >= 1);
        Self { set: theta0, window: VecDeque::with_capacity(n_u), n_u, period, t: 0 }
    }

    pub fn set(&self) -> &ParamSet {
        &self.set
    }

    pub fn time(&self) -> usize {
        self.t
    }

    /// Ingests the unfalsified set observed at the next time step and applies
    /// the update schedule. Returns the (possibly unchanged) current set.
    pub fn observe(&mut self, delta: UnfalsifiedSet) -> Result<&ParamSet> {
        if self.window.len() == self.n_u {
            self.window.pop_front();
        }
        self.window.push_back(delta);
        self.t += 1;
        if self.t % self.period == 0 {
            let window: Vec<UnfalsifiedSet> = self.window.iter().cloned().collect();
            self.set = update(&self.set, &window, self.n_u)?;
        }
        Ok(&self.set)
    }
}

/// Euclidean projection of `theta_prev` onto the parameter set; returns the
/// input unchanged when it is already a member.
pub fn project_nominal(theta_prev: &DVector<f64>, theta_set: &ParamSet) -> Result<DVector<f64>> {
    if theta_set.contains(theta_prev, 0.0) {
        return Ok(theta_prev.clone());
    }
    let p = theta_set.dim();
    let mut prog = ConicProgram::new();
    let ths: Vec<usize> = prog.add_vars(p).collect();
    let t = prog.add_var();
    prog.add_objective(t, 1.0);
    let mut soc = vec![LinExpr::var(t)];
    for (j, &tv) in ths.iter().enumerate() {
        let mut e = LinExpr::constant(-theta_prev[j]);
        e.push(tv, 1.0);
        soc.push(e);
    }
    prog.add_soc_block(soc);
    let mut rows = Vec::with_capacity(theta_set.num_rows());
    for i in 0..theta_set.num_rows() {
        let mut e = LinExpr::constant(theta_set.mu[i]);
        for (j, &tv) in ths.iter().enumerate() {
            e.push(tv, -theta_set.m[(i, j)]);
        }
        rows.push(e);
    }
    prog.add_nonneg_block(rows);
    let rep = prog.solve(1e-9);
    match rep.status {
        SolveStatus::Optimal => {
            let x = rep.primal_or("nominal projection");
            Ok(DVector::from_iterator(p, ths.iter().map(|&v| x[v])))
        }
        SolveStatus::Infeasible => Err(EstimatorError::EmptySet),
        _ => Err(EstimatorError::Numerical("projection failed".into())),
    }
}

/// Persistence-of-excitation witness over a window of regressors.
#[derive(Debug, Clone, Copy)]
pub struct PEWitness {
    /// `λ_min(Σ DᵀD)` over the window.
    pub beta1: f64,
    /// Largest spectral norm `‖D‖` in the window.
    pub tau: f64,
    pub window: usize,
}

pub fn pe_coefficient(d_list: &[DMatrix<f64>]) -> PEWitness {
    assert!(!d_list.is_empty(), "pe_coefficient needs at least one regressor");
    let p = d_list[0].ncols();
    let mut gram = DMatrix::zeros(p, p);
    let mut tau: f64 = 0.0;
    for d in d_list {
        gram += d.transpose() * d;
        let spectral = nalgebra::SymmetricEigen::new(d.transpose() * d)
            .eigenvalues
            .iter()
            .fold(0.0_f64, |m, &v| m.max(v))
            .max(0.0)
            .sqrt();
        tau = tau.max(spectral);
    }
    let beta1 = nalgebra::SymmetricEigen::new(gram)
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
        .max(0.0);
    PEWitness { beta1, tau, window: d_list.len() }
}

/// Test oracle: the minimal (unbounded-complexity) parameter set
/// `Θ₀ ∩ Δ₁ ∩ … ∩ Δ_t` as a pruned halfspace system. Rows are removed by an
/// LP redundancy test as sets are added, and the returned system is certified
/// by a vertex check (every surviving row active at some enumerated vertex).
pub struct ExactIntersection {
    poly: HPolytope,
}

impl ExactIntersection {
    pub fn new(theta0: &HPolytope) -> Self {
        Self { poly: theta0.clone() }
    }

    pub fn add(&mut self, delta: &UnfalsifiedSet) -> Result<()> {
        let (pm, qv) = delta
            .halfspace()
            .ok_or_else(|| EstimatorError::Numerical("oracle needs exact Δ sets".into()))?;
        self.poly = self.poly.intersect(&HPolytope::new(pm.clone(), qv.clone()));
        self.prune()?;
        Ok(())
    }

    fn prune(&mut self) -> Result<()> {
        let mut keep: Vec<usize> = Vec::new();
        let rows = self.poly.num_rows();
        for i in 0..rows {
            // maximize row i over the others (with row i relaxed by 1 to keep
            // the LP bounded); redundant iff the optimum stays at/below b_i.
            let mut normals = self.poly.normals().clone();
            let mut offsets = self.poly.offsets().clone();
            offsets[i] += 1.0;
            let dir = normals.row(i).transpose();
            let relaxed = HPolytope::new(std::mem::take(&mut normals), offsets);
            let opt = match geometry::support_value(&relaxed, &dir) {
                Ok(v) => v,
                Err(GeometryError::Empty) => return Err(EstimatorError::EmptyIntersection),
                Err(e) => return Err(e.into()),
            };
            if opt > self.poly.offsets()[i] + 1e-12 {
                keep.push(i);
            }
        }
        if keep.len() < rows {
            let mut normals = DMatrix::zeros(keep.len(), self.poly.dim());
            let mut offsets = DVector::zeros(keep.len());
            for (r, &i) in keep.iter().enumerate() {
                normals.row_mut(r).copy_from(&self.poly.normals().row(i));
                offsets[r] = self.poly.offsets()[i];
            }
            self.poly = HPolytope::new(normals, offsets);
        }
        Ok(())
    }

    /// Certified minimal form: kept rows must be active at a vertex.
    pub fn polytope(&self) -> Result<HPolytope> {
        let verts = geometry::enumerate_vertices(&self.poly)?.vertices;
        let mut keep = Vec::new();
        for i in 0..self.poly.num_rows() {
            let a = self.poly.normals().row(i).transpose();
            let scale = a.norm().max(1.0);
            if verts.iter().any(|v| (a.dot(v) - self.poly.offsets()[i]).abs() <= 1e-7 * scale) {
                keep.push(i);
            }
        }
        let mut normals = DMatrix::zeros(keep.len(), self.poly.dim());
        let mut offsets = DVector::zeros(keep.len());
        for (r, &i) in keep.iter().enumerate() {
            normals.row_mut(r).copy_from(&self.poly.normals().row(i));
            offsets[r] = self.poly.offsets()[i];
        }
        Ok(HPolytope::new(normals, offsets))
    }
}

/// Convenience wrapper over [`ExactIntersection`] for a full Δ history.
pub fn exact_intersection_oracle(
    theta0: &HPolytope,
    deltas: &[UnfalsifiedSet],
) -> Result<HPolytope> {
    let mut acc = ExactIntersection::new(theta0);
    for d in deltas {
        acc.add(d)?;
    }
    acc.polytope()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::{second_order_model_file, SamplerKind};
    use approx::assert_abs_diff_eq;

    /// Scalar system x⁺ = θx + u + w (A₀ = 0, A₁ = 1, B₀ = 1).
    fn scalar_model(theta_star: f64, theta0_radius: f64) -> UncertainModel {
        UncertainModel::new(
            vec![DMatrix::zeros(1, 1), DMatrix::identity(1, 1)],
            vec![DMatrix::identity(1, 1), DMatrix::zeros(1, 1)],
            DVector::from_vec(vec![theta_star]),
            ParamSet::inf_ball(1, theta0_radius),
        )
        .unwrap()
    }

    #[test]
    fn unfalsified_zero_regressor() {
        let m = scalar_model(0.5, 1.0);
        let w = HPolytope::inf_ball(1, 0.1);
        // x_prev = 0, u_prev = 0 so D = 0: set is whole space iff x_now ∈ W
        let inside = unfalsified(&m, &w, &DVector::zeros(1), &DVector::zeros(1), &DVector::from_vec(vec![0.05]));
        let (pm, qv) = inside.halfspace().unwrap();
        assert_eq!(pm.amax(), 0.0);
        assert!(qv.min() >= 0.0, "whole space: all constant rows satisfied");
        let outside = unfalsified(&m, &w, &DVector::zeros(1), &DVector::zeros(1), &DVector::from_vec(vec![0.2]));
        let (_, qv) = outside.halfspace().unwrap();
        assert!(qv.min() < 0.0, "empty: some constant row violated");
    }

    #[test]
    fn unfalsified_interval_arithmetic() {
        // x⁺ = θx + w, W = [-0.1, 0.1], x_prev = 1 (u absent → drive B₀ = 0)
        let m = UncertainModel::new(
            vec![DMatrix::zeros(1, 1), DMatrix::identity(1, 1)],
            vec![DMatrix::zeros(1, 1), DMatrix::zeros(1, 1)],
            DVector::from_vec(vec![0.85]),
            ParamSet::inf_ball(1, 1.0),
        )
        .unwrap();
        let w = HPolytope::inf_ball(1, 0.1);
        let delta = unfalsified(
            &m,
            &w,
            &DVector::from_vec(vec![1.0]),
            &DVector::zeros(1),
            &DVector::from_vec(vec![0.85]),
        );
        let poly = {
            let (pm, qv) = delta.halfspace().unwrap();
            HPolytope::new(pm.clone(), qv.clone())
        };
        let hi = geometry::support_value(&poly, &DVector::from_vec(vec![1.0])).unwrap();
        let lo = -geometry::support_value(&poly, &DVector::from_vec(vec![-1.0])).unwrap();
        assert_abs_diff_eq!(lo, 0.75, epsilon = 1e-9);
        assert_abs_diff_eq!(hi, 0.95, epsilon = 1e-9);
        assert!(delta.contains(m.theta_star(), 1e-12));
    }

    #[test]
    fn noisy_unfalsified_hull_supports() {
        // 1-D: W = [-0.1, 0.1], S = [-0.05, 0.05], y_prev = 1, y_now = 0.85
        let m = UncertainModel::new(
            vec![DMatrix::zeros(1, 1), DMatrix::identity(1, 1)],
            vec![DMatrix::zeros(1, 1), DMatrix::zeros(1, 1)],
            DVector::from_vec(vec![0.85]),
            ParamSet::inf_ball(1, 2.0),
        )
        .unwrap();
        let w = HPolytope::inf_ball(1, 0.1);
        let s = NoiseModel::new(HPolytope::inf_ball(1, 0.05), SamplerKind::Uniform).unwrap();
        let delta = unfalsified_noisy(
            &m,
            &w,
            &s,
            &DVector::from_vec(vec![1.0]),
            &DVector::zeros(1),
            &DVector::from_vec(vec![0.85]),
        )
        .unwrap();
        assert_eq!(delta.num_components(), 2);
        let hi = delta.support(&DVector::from_vec(vec![1.0])).unwrap();
        let lo = -delta.support(&DVector::from_vec(vec![-1.0])).unwrap();
        assert_abs_diff_eq!(lo, 2.0 / 3.0, epsilon = 1e-7);
        assert_abs_diff_eq!(hi, 1.0526315789473684, epsilon = 1e-7);

        // S = {0} reduces to the exact set with W ⊕ {0}
        let s0 = NoiseModel::new(HPolytope::singleton(&DVector::zeros(1)), SamplerKind::Uniform)
            .unwrap();
        let delta0 = unfalsified_noisy(
            &m,
            &w,
            &s0,
            &DVector::from_vec(vec![1.0]),
            &DVector::zeros(1),
            &DVector::from_vec(vec![0.85]),
        )
        .unwrap();
        let hi0 = delta0.support(&DVector::from_vec(vec![1.0])).unwrap();
        assert_abs_diff_eq!(hi0, 0.95, epsilon = 1e-7);
    }

    #[test]
    fn update_interval_and_no_information() {
        let theta = ParamSet::inf_ball(1, 1.0);
        // Δ = {θ ≤ 0.3}
        let delta = UnfalsifiedSet {
            components: vec![(
                DMatrix::from_row_slice(1, 1, &[1.0]),
                DVector::from_vec(vec![0.3]),
            )],
        };
        let updated = update(&theta, &[delta], 2).unwrap();
        assert_abs_diff_eq!(updated.offsets()[0], 0.3, epsilon = 1e-8);
        assert_abs_diff_eq!(updated.offsets()[1], 1.0, epsilon = 1e-12);

        // Δ ⊇ Θ: offsets unchanged
        let loose = UnfalsifiedSet {
            components: vec![(
                DMatrix::from_row_slice(1, 1, &[1.0]),
                DVector::from_vec(vec![5.0]),
            )],
        };
        let same = update(&theta, &[loose], 2).unwrap();
        assert_eq!(same.offsets(), theta.offsets());
    }

    #[test]
    fn update_2d_halfplane_keeps_box() {
        // Θ₀ unit box, Δ = {θ₁ + θ₂ ≤ 0}: supports in +e₁, +e₂ still 1.
        let theta = ParamSet::inf_ball(2, 1.0);
        let delta = UnfalsifiedSet {
            components: vec![(
                DMatrix::from_row_slice(1, 2, &[1.0, 1.0]),
                DVector::from_vec(vec![0.0]),
            )],
        };
        let updated = update(&theta, &[delta], 1).unwrap();
        for i in 0..4 {
            assert_abs_diff_eq!(updated.offsets()[i], 1.0, epsilon = 1e-7);
        }
    }

    #[test]
    fn update_direct_matches_multiplier_form() {
        let theta = ParamSet::inf_ball(2, 1.0);
        let delta_poly = HPolytope::new(
            DMatrix::from_row_slice(2, 2, &[1.0, 0.4, -0.3, 1.0]),
            DVector::from_vec(vec![0.5, 0.8]),
        );
        let stacked = theta.as_polytope().intersect(&delta_poly);
        for i in 0..theta.num_rows() {
            let dir = theta.directions().row(i).transpose();
            let direct = geometry::support_value(&stacked, &dir).unwrap();
            let multiplier = support_via_multipliers(&stacked, &dir).unwrap();
            assert_abs_diff_eq!(direct, multiplier, epsilon = 1e-7);
        }
    }

    #[test]
    fn update_is_order_independent() {
        let theta = ParamSet::inf_ball(2, 1.0);
        let d1 = UnfalsifiedSet {
            components: vec![(
                DMatrix::from_row_slice(1, 2, &[1.0, 0.2]),
                DVector::from_vec(vec![0.4]),
            )],
        };
        let d2 = UnfalsifiedSet {
            components: vec![(
                DMatrix::from_row_slice(1, 2, &[-0.5, 1.0]),
                DVector::from_vec(vec![0.6]),
            )],
        };
        let a = update(&theta, &[d1.clone(), d2.clone()], 2).unwrap();
        let b = update(&theta, &[d2, d1], 2).unwrap();
        assert_abs_diff_eq!((a.offsets() - b.offsets()).amax(), 0.0, epsilon = 1e-9);
    }

    #[test]
    fn empty_intersection_is_an_error() {
        let theta = ParamSet::inf_ball(1, 1.0);
        let impossible = UnfalsifiedSet {
            components: vec![(
                DMatrix::from_row_slice(2, 1, &[1.0, -1.0]),
                DVector::from_vec(vec![-2.0, -2.0]),
            )],
        };
        assert!(matches!(
            update(&theta, &[impossible], 1),
            Err(EstimatorError::EmptyIntersection)
        ));
    }

    #[test]
    fn periodic_update_schedule() {
        let theta = ParamSet::inf_ball(1, 1.0);
        let delta = |hi: f64| UnfalsifiedSet {
            components: vec![(
                DMatrix::from_row_slice(1, 1, &[1.0]),
                DVector::from_vec(vec![hi]),
            )],
        };
        let mut periodic = EstimatorState::new(theta.clone(), 2, 2);
        periodic.observe(delta(0.5)).unwrap();
        assert_eq!(periodic.set().offsets()[0], 1.0, "t=1, N_u=2: unchanged");
        periodic.observe(delta(0.4)).unwrap();
        assert_abs_diff_eq!(periodic.set().offsets()[0], 0.4, epsilon = 1e-8);

        // every-step updates are at least as tight at common times
        let mut every = EstimatorState::new(theta, 2, 1);
        every.observe(delta(0.5)).unwrap();
        every.observe(delta(0.4)).unwrap();
        assert!(every.set().offsets()[0] <= periodic.set().offsets()[0] + 1e-9);
    }

    #[test]
    fn projection_cases() {
        let theta = ParamSet::inf_ball(2, 1.0);
        let inside = DVector::from_vec(vec![0.3, -0.2]);
        assert_eq!(project_nominal(&inside, &theta).unwrap(), inside);

        let outside = DVector::from_vec(vec![2.0, 0.0]);
        let proj = project_nominal(&outside, &theta).unwrap();
        assert_abs_diff_eq!(proj[0], 1.0, epsilon = 1e-6);
        assert_abs_diff_eq!(proj[1], 0.0, epsilon = 1e-6);

        // Θ = {θ₁+θ₂ ≤ 0} ∩ unit box, θ̄ = (1,1) → (0,0)
        let mut m = DMatrix::zeros(5, 2);
        m.rows_mut(0, 4).copy_from(theta.directions());
        m[(4, 0)] = 1.0;
        m[(4, 1)] = 1.0;
        let mut mu = DVector::zeros(5);
        mu.rows_mut(0, 4).copy_from(theta.offsets());
        let cut = ParamSet::new(m, mu).unwrap();
        let proj = project_nominal(&DVector::from_vec(vec![1.0, 1.0]), &cut).unwrap();
        assert_abs_diff_eq!(proj.amax(), 0.0, epsilon = 1e-6);
    }

    #[test]
    fn pe_witness_examples() {
        let id = DMatrix::<f64>::identity(2, 2);
        let w = pe_coefficient(&[id.clone()]);
        assert_abs_diff_eq!(w.beta1, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(w.tau, 1.0, epsilon = 1e-12);

        let e1 = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        let e2 = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 1.0]);
        let w = pe_coefficient(&[e1, e2]);
        assert_abs_diff_eq!(w.beta1, 1.0, epsilon = 1e-12);

        let z = DMatrix::zeros(2, 2);
        assert_eq!(pe_coefficient(&[z.clone(), z]).beta1, 0.0);
    }

    #[test]
    fn pe_beta1_matches_rayleigh_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(77);
        let ds: Vec<DMatrix<f64>> = (0..4)
            .map(|_| DMatrix::from_fn(2, 3, |_, _| rng.random_range(-1.0..1.0)))
            .collect();
        let w = pe_coefficient(&ds);
        let mut gram = DMatrix::zeros(3, 3);
        for d in &ds {
            gram += d.transpose() * d;
        }
        let mut best = f64::INFINITY;
        for _ in 0..10_000 {
            let v = DVector::from_fn(3, |_, _| rng.random_range(-1.0_f64..1.0)).normalize();
            best = best.min((v.transpose() * &gram * &v)[(0, 0)]);
        }
        assert!(w.beta1 <= best + 1e-6, "beta1 {} vs rayleigh {}", w.beta1, best);
        assert!(best - w.beta1 <= 0.05, "random directions should approach λ_min");
    }

    #[test]
    fn oracle_intersection_and_containment() {
        let theta0 = HPolytope::inf_ball(1, 1.0);
        assert_eq!(
            exact_intersection_oracle(&theta0, &[]).unwrap().num_rows(),
            2,
            "Δ-free call returns Θ₀"
        );

        // 1-D: fixed-complexity and oracle coincide when M = (1; -1)
        let m = scalar_model(0.5, 1.0);
        let w = HPolytope::inf_ball(1, 0.1);
        let x0 = DVector::from_vec(vec![1.0]);
        let u = DVector::zeros(1);
        let x1 = m.step_truth(&x0, &u, &DVector::from_vec(vec![0.08]));
        let delta = unfalsified(&m, &w, &x0, &u, &x1);
        let theta = ParamSet::inf_ball(1, 1.0);
        let updated = update(&theta, &[delta.clone()], 1).unwrap();
        let oracle_poly = exact_intersection_oracle(&theta0, &[delta]).unwrap();
        let cert = geometry::contains_polytope(
            updated.directions(),
            updated.offsets(),
            &oracle_poly,
            1e-8,
        )
        .unwrap();
        assert!(cert.contained);
        let hi = geometry::support_value(&oracle_poly, &DVector::from_vec(vec![1.0])).unwrap();
        assert_abs_diff_eq!(hi, updated.offsets()[0], epsilon = 1e-7);
    }

    #[test]
    fn closed_loop_lemma_one_soundness() {
        // uncontrolled second-order model: θ* stays in Θ_t, offsets monotone,
        // and Θ_t contains the exact-intersection oracle.
        use rand::SeedableRng;
        let mf = second_order_model_file();
        let model = mf.build_model().unwrap();
        let dm = mf.build_disturbance(SamplerKind::Uniform).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(31);
        let mut est = EstimatorState::new(model.theta0().clone(), 2, 1);
        let mut oracle = ExactIntersection::new(&model.theta0().as_polytope());
        let mut x = DVector::from_vec(vec![1.0, -0.5]);
        let mut prev_mu = est.set().offsets().clone();
        for t in 0..40 {
            let u = DVector::from_vec(vec![(0.3 * t as f64).sin()]);
            let w = dm.sample(&mut rng).unwrap();
            let x_next = model.step_truth(&x, &u, &w);
            let delta = unfalsified(&model, &dm.bound_set, &x, &u, &x_next);
            oracle.add(&delta).unwrap();
            est.observe(delta).unwrap();
            assert!(est.set().contains(model.theta_star(), 1e-9), "t={t}");
            assert!(est.set().offsets().iter().zip(prev_mu.iter()).all(|(n, p)| n <= p));
            prev_mu = est.set().offsets().clone();
            x = x_next;
        }
        let oracle_poly = oracle.polytope().unwrap();
        let cert = geometry::contains_polytope(
            est.set().directions(),
            est.set().offsets(),
            &oracle_poly,
            1e-8,
        )
        .unwrap();
        assert!(cert.contained);
        assert!(oracle_poly.contains_point(model.theta_star(), 1e-9));
    }
}
