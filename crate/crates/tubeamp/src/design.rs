//! Offline synthesis: the tube shape matrix `T`, the stabilizing gain `K`
//! with its contraction factor `λ`, the vertex maps `U_j`, the disturbance
//! support vector `w̄`, and the terminal-set existence check.
//!
//! The tube cross-section template `{x : Tx ≤ 1}` is built from tangent
//! hyperplanes of an ellipsoid `{x : xᵀP̃x ≤ 1}` whose shape comes from a
//! small SDP enforcing contraction at every vertex of the initial parameter
//! set. `K` then minimizes the contraction factor over the tube and parameter
//! vertices in a single LP.

use crate::conic::{ConicProgram, LinExpr, SolveStatus, SolverOptions};
use crate::estimator::ParamSet;
use crate::geometry::{self, GeometryError, HPolytope};
use crate::system::{Constraints, UncertainModel};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DesignError {
    #[error("no stabilizing gain: closed loop unstable at a parameter vertex (ρ = {0:.4})")]
    NoStabilizingGain(f64),
    #[error("shape SDP infeasible or failed")]
    SdpInfeasible,
    #[error("design is not contractive (λ = {0:.4} ≥ 1)")]
    NotContractive(f64),
    #[error("vertex {0} has no invertible active-row subset")]
    DegenerateVertex(usize),
    #[error("terminal conditions infeasible for this design")]
    TerminalInfeasible,
    #[error("tube row {0} inactive at every vertex (T not minimal)")]
    RedundantTubeRow(usize),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

type Result<T> = std::result::Result<T, DesignError>;

/// Tube cross-section template and its offline-computed vertex machinery.
#[derive(Debug, Clone)]
pub struct TubeShape {
    /// `n_α × n_x`, scaled so the template set is `{x : Tx ≤ 1}`.
    pub t: DMatrix<f64>,
    /// Vertex count of the template.
    pub m: usize,
    /// `U_j`: maps the offset vector α to vertex `j` of `{x : Tx ≤ α}`.
    pub u_maps: Vec<DMatrix<f64>>,
    /// Active-row index sets `R_j` (size `n_x`, ascending).
    pub active_sets: Vec<Vec<usize>>,
    /// `[w̄]_i = max_{w∈W} [Tw]_i`.
    pub wbar: DVector<f64>,
}

impl TubeShape {
    pub fn n_alpha(&self) -> usize {
        self.t.nrows()
    }

    pub fn nx(&self) -> usize {
        self.t.ncols()
    }

    /// The template polytope `{x : Tx ≤ 1}`.
    pub fn template(&self) -> HPolytope {
        HPolytope::new(self.t.clone(), DVector::from_element(self.t.nrows(), 1.0))
    }

    /// Cross-section `{x : Tx ≤ α}`.
    pub fn cross_section(&self, alpha: &DVector<f64>) -> HPolytope {
        HPolytope::new(self.t.clone(), alpha.clone())
    }

    /// Vertices `U_j α` of the cross-section with offsets `α`.
    pub fn vertices_for(&self, alpha: &DVector<f64>) -> Vec<DVector<f64>> {
        self.u_maps.iter().map(|u| u * alpha).collect()
    }
}

/// Feedback gain with its verified contraction factor.
#[derive(Debug, Clone)]
pub struct FeedbackDesign {
    pub k_gain: DMatrix<f64>,
    pub lambda: f64,
}

/// Discrete-time LQR gain by Riccati fixed-point iteration; `u = Kx`.
pub fn lqr_gain(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let mut p = q.clone();
    for _ in 0..20_000 {
        let rb = r + b.transpose() * &p * b;
        let rb_inv = rb
            .clone()
            .try_inverse()
            .ok_or_else(|| DesignError::Numerical("R + BᵀPB singular".into()))?;
        let next = q + a.transpose() * &p * a
            - a.transpose() * &p * b * &rb_inv * b.transpose() * &p * a;
        let diff = (&next - &p).amax();
        p = next;
        if diff <= 1e-13 * p.amax().max(1.0) {
            let rb = r + b.transpose() * &p * b;
            let rb_inv = rb
                .try_inverse()
                .ok_or_else(|| DesignError::Numerical("R + BᵀPB singular".into()))?;
            return Ok(-(rb_inv * b.transpose() * &p * a));
        }
    }
    Err(DesignError::Numerical("Riccati iteration did not converge".into()))
}

fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    m.complex_eigenvalues().iter().fold(0.0_f64, |r, e| r.max(e.norm()))
}

fn theta0_vertices(model: &UncertainModel) -> Result<Vec<DVector<f64>>> {
    Ok(geometry::enumerate_vertices(&model.theta0().as_polytope())?.vertices)
}

/// Symmetric matrix of decision variables stored by upper triangle.
struct SymVar {
    d: usize,
    vars: Vec<usize>,
}

impl SymVar {
    fn new(prog: &mut ConicProgram, d: usize) -> Self {
        let vars = prog.add_vars(d * (d + 1) / 2).collect();
        Self { d, vars }
    }

    fn var(&self, i: usize, j: usize) -> usize {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        self.vars[j * (j + 1) / 2 + i]
    }

    fn value(&self, x: &[f64]) -> DMatrix<f64> {
        DMatrix::from_fn(self.d, self.d, |i, j| x[self.var(i, j)])
    }
}

/// Tangent directions: equally spaced angles in 2-D, a Fibonacci sphere in
/// 3-D, `±1` in 1-D.
fn direction_set(nx: usize, n_dirs: usize) -> Result<Vec<DVector<f64>>> {
    match nx {
        1 => Ok(vec![DVector::from_vec(vec![1.0]), DVector::from_vec(vec![-1.0])]),
        2 => Ok((0..n_dirs)
            .map(|i| {
                let phi = 2.0 * std::f64::consts::PI * i as f64 / n_dirs as f64;
                DVector::from_vec(vec![phi.cos(), phi.sin()])
            })
            .collect()),
        3 => {
            let golden = std::f64::consts::PI * (3.0 - 5.0_f64.sqrt());
            Ok((0..n_dirs)
                .map(|i| {
                    let z = 1.0 - 2.0 * (i as f64 + 0.5) / n_dirs as f64;
                    let rad = (1.0 - z * z).sqrt();
                    let phi = golden * i as f64;
                    DVector::from_vec(vec![rad * phi.cos(), rad * phi.sin(), z])
                })
                .collect())
        }
        _ => Err(DesignError::Unsupported(format!("tube synthesis for n_x = {nx}"))),
    }
}

/// Synthesizes the tube template `T` so that `{x : Tx ≤ 1}` collects tangent
/// hyperplanes of a contractive ellipsoid `{x : xᵀP̃x ≤ 1}`. The ellipsoid
/// shape solves `min tr(P̃)` subject to `P̃ ⪰ I` and strict decrease of
/// `xᵀP̃x` under every parameter-vertex closed loop.
pub fn synthesize_t(
    model: &UncertainModel,
    w: &HPolytope,
    k_init: Option<&DMatrix<f64>>,
    n_dirs: usize,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> Result<TubeShape> {
    let nx = model.nx();
    let k_tilde = match k_init {
        Some(k) => k.clone(),
        None => {
            let center = geometry::chebyshev_center(&model.theta0().as_polytope())?;
            let (a, b) = model.assemble(&center);
            lqr_gain(&a, &b, q, r)?
        }
    };

    let vertices = theta0_vertices(model)?;
    let mut worst_rho = 0.0_f64;
    for th in &vertices {
        worst_rho = worst_rho.max(spectral_radius(&model.phi(th, &k_tilde)));
    }
    if worst_rho >= 1.0 - 1e-9 {
        return Err(DesignError::NoStabilizingGain(worst_rho));
    }

    // Shape SDP.
    let mut prog = ConicProgram::new();
    let p_tilde = SymVar::new(&mut prog, nx);
    for i in 0..nx {
        prog.add_objective(p_tilde.var(i, i), 1.0);
    }
    // P̃ - I ⪰ 0
    let mut tri = Vec::new();
    for j in 0..nx {
        for i in 0..=j {
            let mut e = LinExpr::var(p_tilde.var(i, j));
            if i == j {
                e.offset(-1.0);
            }
            tri.push(e);
        }
    }
    prog.add_psd_block_from_triangle(nx, tri).expect("triangle count");
    // P̃ - Φᵀ P̃ Φ - δI ⪰ 0 at every parameter vertex
    const DELTA: f64 = 1e-3;
    for th in &vertices {
        let phi = model.phi(th, &k_tilde);
        let mut tri = Vec::new();
        for j in 0..nx {
            for i in 0..=j {
                let mut e = LinExpr::var(p_tilde.var(i, j));
                if i == j {
                    e.offset(-DELTA);
                }
                // subtract (Φᵀ P̃ Φ)_{ij} = Σ_{a,b} Φ_{a,i} P̃_{a,b} Φ_{b,j}
                for a in 0..nx {
                    for b in 0..nx {
                        e.push(p_tilde.var(a, b), -phi[(a, i)] * phi[(b, j)]);
                    }
                }
                tri.push(e);
            }
        }
        prog.add_psd_block_from_triangle(nx, tri).expect("triangle count");
    }
    let rep = prog.solve_with(&SolverOptions::from_tol(1e-9));
    if rep.status != SolveStatus::Optimal {
        return Err(DesignError::SdpInfeasible);
    }
    let p_mat = p_tilde.value(rep.primal_or("shape SDP"));
    let p_sym = (&p_mat + p_mat.transpose()) * 0.5;
    let p_inv = p_sym
        .clone()
        .try_inverse()
        .ok_or_else(|| DesignError::Numerical("P̃ singular".into()))?;

    // Tangent rows, scaled to offset 1.
    let dirs = direction_set(nx, n_dirs)?;
    let mut t = DMatrix::zeros(dirs.len(), nx);
    for (i, d) in dirs.iter().enumerate() {
        let h = (d.transpose() * &p_inv * d)[(0, 0)].sqrt();
        if h <= 0.0 {
            return Err(DesignError::Numerical("degenerate tangent distance".into()));
        }
        t.row_mut(i).copy_from(&(d / h).transpose());
    }
    finish_shape(t, w)
}

/// Completes a shape from a given `T`: vertex maps, minimality check, `w̄`.
pub fn finish_shape(t: DMatrix<f64>, w: &HPolytope) -> Result<TubeShape> {
    let (m, u_maps, active_sets) = vertex_maps(&t)?;
    let wbar = compute_wbar(&t, w)?;
    Ok(TubeShape { t, m, u_maps, active_sets, wbar })
}

/// Enumerates the template vertices and, per vertex `j`, selects the
/// lexicographically smallest invertible active-row subset `R_j`, then builds
/// `U_j = (T_{R_j})⁻¹ E_{R_j}` so that `U_j α` is vertex `j` of `{Tx ≤ α}`.
/// Every template row must be active at some vertex (minimal representation).
pub fn vertex_maps(t: &DMatrix<f64>) -> Result<(usize, Vec<DMatrix<f64>>, Vec<Vec<usize>>)> {
    let nx = t.ncols();
    let n_alpha = t.nrows();
    let template = HPolytope::new(t.clone(), DVector::from_element(n_alpha, 1.0));
    let verts = geometry::enumerate_vertices(&template)?.vertices;
    let m = verts.len();

    let mut u_maps = Vec::with_capacity(m);
    let mut active_sets = Vec::with_capacity(m);
    let mut row_used = vec![false; n_alpha];
    for (j, v) in verts.iter().enumerate() {
        let active: Vec<usize> = (0..n_alpha)
            .filter(|&i| {
                let scale = 1.0 + t.row(i).norm() * v.norm();
                (t.row(i).transpose().dot(v) - 1.0).abs() <= 1e-8 * scale
            })
            .collect();
        for &i in &active {
            row_used[i] = true;
        }
        let mut chosen: Option<Vec<usize>> = None;
        'subsets: for subset in geometry::subsets_lex(active.len(), nx) {
            let rows: Vec<usize> = subset.iter().map(|&s| active[s]).collect();
            let mut t_sub = DMatrix::zeros(nx, nx);
            for (r, &row) in rows.iter().enumerate() {
                t_sub.row_mut(r).copy_from(&t.row(row));
            }
            let scale = t.row_iter().map(|r| r.norm()).fold(1.0_f64, f64::max);
            if t_sub.clone().full_piv_lu().determinant().abs() > 1e-10 * scale.powi(nx as i32) {
                chosen = Some(rows);
                break 'subsets;
            }
        }
        let rows = chosen.ok_or(DesignError::DegenerateVertex(j))?;
        let mut t_sub = DMatrix::zeros(nx, nx);
        for (r, &row) in rows.iter().enumerate() {
            t_sub.row_mut(r).copy_from(&t.row(row));
        }
        let t_inv = t_sub
            .try_inverse()
            .ok_or(DesignError::DegenerateVertex(j))?;
        let mut u = DMatrix::zeros(nx, n_alpha);
        for (col, &row) in rows.iter().enumerate() {
            u.column_mut(row).copy_from(&t_inv.column(col));
        }
        // identity check: [T]_i U_j = [I]_i for i ∈ R_j
        for &row in &rows {
            let lhs = t.row(row) * &u;
            for c in 0..n_alpha {
                let want = if c == row { 1.0 } else { 0.0 };
                if (lhs[c] - want).abs() > 1e-10 {
                    return Err(DesignError::Numerical(format!(
                        "vertex map identity violated at vertex {j}, row {row}"
                    )));
                }
            }
        }
        u_maps.push(u);
        active_sets.push(rows);
    }
    if let Some(i) = row_used.iter().position(|&u| !u) {
        return Err(DesignError::RedundantTubeRow(i));
    }
    Ok((m, u_maps, active_sets))
}

/// `[w̄]_i = max_{w∈W} [Tw]_i` by support LPs.
pub fn compute_wbar(t: &DMatrix<f64>, w: &HPolytope) -> Result<DVector<f64>> {
    let mut wbar = DVector::zeros(t.nrows());
    for i in 0..t.nrows() {
        wbar[i] = geometry::support_value(w, &t.row(i).transpose())?;
    }
    Ok(wbar)
}

/// Minimizes the contraction factor λ over feasible gains: one LP in the
/// entries of `K` and λ, with the contraction inequality imposed at every
/// pair of parameter vertex and tube template vertex.
pub fn min_lambda_gain(model: &UncertainModel, t: &DMatrix<f64>) -> Result<FeedbackDesign> {
    let nx = model.nx();
    let nu = model.nu();
    let template = HPolytope::new(t.clone(), DVector::from_element(t.nrows(), 1.0));
    let tube_verts = geometry::enumerate_vertices(&template)?.vertices;
    let theta_verts = theta0_vertices(model)?;

    let mut prog = ConicProgram::new();
    let k_vars: Vec<usize> = prog.add_vars(nu * nx).collect(); // row-major K
    let lambda = prog.add_var();
    prog.add_objective(lambda, 1.0);

    let mut rows = Vec::new();
    for th in &theta_verts {
        let (a, b) = model.assemble(th);
        let ta = t * &a; // n_α × n_x
        let tb = t * &b; // n_α × n_u
        for x in &tube_verts {
            let tax = &ta * x; // n_α
            for i in 0..t.nrows() {
                // λ - [T A x]_i - [T B K x]_i ≥ 0
                let mut e = LinExpr::var(lambda);
                e.offset(-tax[i]);
                for a_row in 0..nu {
                    for b_col in 0..nx {
                        e.push(k_vars[a_row * nx + b_col], -tb[(i, a_row)] * x[b_col]);
                    }
                }
                rows.push(e);
            }
        }
    }
    prog.add_nonneg_block(rows);
    let rep = prog.solve_with(&SolverOptions::from_tol(1e-9));
    if rep.status != SolveStatus::Optimal {
        return Err(DesignError::Numerical(format!("gain LP: {:?}", rep.status)));
    }
    let x = rep.primal_or("gain LP");
    let lam = x[lambda];
    if lam >= 1.0 - 1e-9 {
        return Err(DesignError::NotContractive(lam));
    }
    let k_gain = DMatrix::from_fn(nu, nx, |r, c| x[k_vars[r * nx + c]]);
    Ok(FeedbackDesign { k_gain, lambda: lam })
}

/// Checks `T Φ(θ) x ≤ λ1` for all `x ∈ {Tx ≤ 1}` and all parameter vertices,
/// row by row through support LPs.
pub fn verify_contractive(
    model: &UncertainModel,
    t: &DMatrix<f64>,
    k_gain: &DMatrix<f64>,
    lambda: f64,
) -> Result<bool> {
    let template = HPolytope::new(t.clone(), DVector::from_element(t.nrows(), 1.0));
    for th in &theta0_vertices(model)? {
        let tphi = t * model.phi(th, k_gain);
        for i in 0..t.nrows() {
            let v = geometry::support_value(&template, &tphi.row(i).transpose())?;
            if v > lambda + 1e-8 {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// Cap keeping the terminal-offset LP bounded when the operating constraints
/// leave free directions.
const ALPHA_CAP: f64 = 1e3;

/// Existence check for the terminal offsets: finds `α_N` (maximizing its
/// minimum entry) and multipliers `Λ_{N,j} ≥ 0` such that the terminal set
/// `{Tx ≤ α_N}` is robustly invariant for `u = Kx` under every parameter in
/// `Θ` and every disturbance in `W`, while satisfying the operating
/// constraints.
pub fn terminal_exists(
    model: &UncertainModel,
    shape: &TubeShape,
    feedback: &FeedbackDesign,
    theta: &ParamSet,
    cons: &Constraints,
) -> Result<DVector<f64>> {
    let n_alpha = shape.n_alpha();
    let p = model.p();
    let r = theta.num_rows();
    let k = &feedback.k_gain;

    let mut prog = ConicProgram::new();
    let alpha: Vec<usize> = prog.add_vars(n_alpha).collect();
    let s = prog.add_var();
    prog.add_objective(s, -1.0); // maximize min entry

    let mut nonneg = Vec::new();
    for &av in &alpha {
        let mut e = LinExpr::var(av);
        e.push(s, -1.0);
        nonneg.push(e); // α_i ≥ s
        let mut cap = LinExpr::constant(ALPHA_CAP);
        cap.push(av, -1.0);
        nonneg.push(cap); // α_i ≤ cap
    }

    let fgk = &cons.f + &cons.g * k;
    for j in 0..shape.m {
        let u_j = &shape.u_maps[j];
        // operating constraints at the terminal vertices: (F+GK) U_j α ≤ 1
        let fgu = &fgk * u_j; // n_c × n_α
        for c in 0..cons.num_rows() {
            let mut e = LinExpr::constant(1.0);
            for (col, &av) in alpha.iter().enumerate() {
                e.push(av, -fgu[(c, col)]);
            }
            nonneg.push(e);
        }

        let lam: Vec<usize> = prog.add_vars(n_alpha * r).collect(); // row-major Λ_j
        for &lv in &lam {
            nonneg.push(LinExpr::var(lv));
        }
        // Λ_j M = T D(U_j α, K U_j α): column i of D is (A_{i+1} + B_{i+1}K) U_j α
        for i in 0..p {
            let coef = shape.t.clone() * (model.a_mat(i + 1) + model.b_mat(i + 1) * k) * u_j;
            for a in 0..n_alpha {
                let mut e = LinExpr::constant(0.0);
                for c in 0..r {
                    e.push(lam[a * r + c], theta.directions()[(c, i)]);
                }
                for (col, &av) in alpha.iter().enumerate() {
                    e.push(av, -coef[(a, col)]);
                }
                prog.add_equality(e);
            }
        }
        // Λ_j μ ≤ α - T d(U_j α, K U_j α) - w̄
        let dcoef = shape.t.clone() * (model.a_mat(0) + model.b_mat(0) * k) * u_j;
        for a in 0..n_alpha {
            let mut e = LinExpr::constant(-shape.wbar[a]);
            e.push(alpha[a], 1.0);
            for (col, &av) in alpha.iter().enumerate() {
                e.push(av, -dcoef[(a, col)]);
            }
            for c in 0..r {
                e.push(lam[a * r + c], -theta.offsets()[c]);
            }
            nonneg.push(e);
        }
    }
    prog.add_nonneg_block(nonneg);

    let rep = prog.solve_with(&SolverOptions::from_tol(1e-9));
    match rep.status {
        SolveStatus::Optimal => {
            let x = rep.primal_or("terminal LP");
            Ok(DVector::from_iterator(n_alpha, alpha.iter().map(|&v| x[v])))
        }
        SolveStatus::Infeasible => Err(DesignError::TerminalInfeasible),
        other => Err(DesignError::Numerical(format!("terminal LP: {other:?}"))),
    }
}

/// Serialized design artifact so online runs can skip re-synthesis.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DesignArtifact {
    pub t: Vec<Vec<f64>>,
    pub u_maps: Vec<Vec<Vec<f64>>>,
    pub active_sets: Vec<Vec<usize>>,
    pub wbar: Vec<f64>,
    pub k_gain: Vec<Vec<f64>>,
    pub lambda: f64,
    pub alpha_terminal: Vec<f64>,
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().cloned().collect()).collect()
}

fn matrix_of(rows: &[Vec<f64>]) -> DMatrix<f64> {
    let nr = rows.len();
    let nc = rows.first().map_or(0, |r| r.len());
    DMatrix::from_fn(nr, nc, |i, j| rows[i][j])
}

impl DesignArtifact {
    pub fn from_parts(shape: &TubeShape, feedback: &FeedbackDesign, alpha_n: &DVector<f64>) -> Self {
        Self {
            t: rows_of(&shape.t),
            u_maps: shape.u_maps.iter().map(rows_of).collect(),
            active_sets: shape.active_sets.clone(),
            wbar: shape.wbar.iter().cloned().collect(),
            k_gain: rows_of(&feedback.k_gain),
            lambda: feedback.lambda,
            alpha_terminal: alpha_n.iter().cloned().collect(),
        }
    }

    pub fn to_parts(&self) -> (TubeShape, FeedbackDesign, DVector<f64>) {
        let shape = TubeShape {
            t: matrix_of(&self.t),
            m: self.u_maps.len(),
            u_maps: self.u_maps.iter().map(|u| matrix_of(u)).collect(),
            active_sets: self.active_sets.clone(),
            wbar: DVector::from_row_slice(&self.wbar),
        };
        let feedback = FeedbackDesign { k_gain: matrix_of(&self.k_gain), lambda: self.lambda };
        (shape, feedback, DVector::from_row_slice(&self.alpha_terminal))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::second_order_model_file;
    use approx::assert_abs_diff_eq;

    fn scalar_gain_model() -> UncertainModel {
        // x⁺ = a x + u with a = θ ∈ [0.5, 0.7]
        UncertainModel::new(
            vec![DMatrix::zeros(1, 1), DMatrix::identity(1, 1)],
            vec![DMatrix::identity(1, 1), DMatrix::zeros(1, 1)],
            DVector::from_vec(vec![0.6]),
            ParamSet::new(
                DMatrix::from_row_slice(2, 1, &[1.0, -1.0]),
                DVector::from_vec(vec![0.7, -0.5]),
            )
            .unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn scalar_min_lambda_gain() {
        let m = scalar_gain_model();
        let t = DMatrix::from_row_slice(2, 1, &[1.0, -1.0]);
        let fd = min_lambda_gain(&m, &t).unwrap();
        assert_abs_diff_eq!(fd.k_gain[(0, 0)], -0.6, epsilon = 1e-6);
        assert_abs_diff_eq!(fd.lambda, 0.1, epsilon = 1e-6);
        assert!(verify_contractive(&m, &t, &fd.k_gain, fd.lambda).unwrap());
        // halving λ must fail (the optimum is tight)
        assert!(!verify_contractive(&m, &t, &fd.k_gain, fd.lambda / 2.0).unwrap());
    }

    #[test]
    fn dead_beat_plant_contracts_to_zero() {
        // A(θ) ≡ 0 and B(θ) ≡ 0: λ = 0 for any K
        let m = UncertainModel::new(
            vec![DMatrix::zeros(1, 1), DMatrix::zeros(1, 1)],
            vec![DMatrix::zeros(1, 1), DMatrix::zeros(1, 1)],
            DVector::from_vec(vec![0.0]),
            ParamSet::inf_ball(1, 1.0),
        )
        .unwrap();
        let t = DMatrix::from_row_slice(2, 1, &[1.0, -1.0]);
        let fd = min_lambda_gain(&m, &t).unwrap();
        assert_abs_diff_eq!(fd.lambda, 0.0, epsilon = 1e-7);
        assert!(verify_contractive(&m, &t, &fd.k_gain, 0.0).unwrap());
    }

    #[test]
    fn scalar_tube_is_symmetric_interval() {
        // x⁺ = 0.5x: 1-D tube template must be {|x| ≤ 1/c}
        let m = UncertainModel::new(
            vec![
                DMatrix::from_row_slice(1, 1, &[0.5]),
                DMatrix::zeros(1, 1),
            ],
            vec![DMatrix::zeros(1, 1), DMatrix::zeros(1, 1)],
            DVector::from_vec(vec![0.0]),
            ParamSet::inf_ball(1, 1.0),
        )
        .unwrap();
        let w = HPolytope::singleton(&DVector::zeros(1));
        let q = DMatrix::identity(1, 1);
        let r = DMatrix::identity(1, 1);
        let shape = synthesize_t(&m, &w, Some(&DMatrix::zeros(1, 1)), 2, &q, &r).unwrap();
        assert_eq!(shape.t.nrows(), 2);
        assert_abs_diff_eq!(shape.t[(0, 0)], -shape.t[(1, 0)], epsilon = 1e-9);
        assert_eq!(shape.m, 2);
    }

    #[test]
    fn second_order_shape_has_nine_active_rows() {
        let mf = second_order_model_file();
        let m = mf.build_model().unwrap();
        let w = HPolytope::inf_ball(2, 0.05);
        let q = DMatrix::identity(2, 2);
        let r = DMatrix::identity(1, 1);
        let shape = synthesize_t(&m, &w, None, 9, &q, &r).unwrap();
        assert_eq!(shape.t.nrows(), 9);
        assert_eq!(shape.m, 9, "one vertex per adjacent tangent pair in 2-D");
        // every row active at some vertex by construction (else synthesize_t errs)
        // w̄ equals the vertex-enumeration oracle exactly
        let wv = geometry::enumerate_vertices(&w).unwrap().vertices;
        for i in 0..shape.t.nrows() {
            let direct = shape.wbar[i];
            let oracle = wv
                .iter()
                .map(|v| shape.t.row(i).transpose().dot(v))
                .fold(f64::NEG_INFINITY, f64::max);
            assert_abs_diff_eq!(direct, oracle, epsilon = 1e-8);
        }
    }

    #[test]
    fn box_vertex_maps() {
        // T = [I; -I] in 2-D
        let t = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 0.0, 1.0, -1.0, 0.0, 0.0, -1.0]);
        let (m, u_maps, active) = vertex_maps(&t).unwrap();
        assert_eq!(m, 4);
        // find the vertex (1,1): active rows {0,1}
        let ones = DVector::from_element(4, 1.0);
        let idx = u_maps
            .iter()
            .position(|u| {
                let v = u * &ones;
                (v[0] - 1.0).abs() < 1e-9 && (v[1] - 1.0).abs() < 1e-9
            })
            .expect("vertex (1,1)");
        assert_eq!(active[idx], vec![0, 1]);
        // α = (2,1,1,1) maps vertices to {(2,1),(2,-1),(-1,1),(-1,-1)}
        let alpha = DVector::from_vec(vec![2.0, 1.0, 1.0, 1.0]);
        let mapped: Vec<Vec<i64>> = u_maps
            .iter()
            .map(|u| (u * &alpha).iter().map(|v| v.round() as i64).collect())
            .collect();
        for want in [vec![2, 1], vec![2, -1], vec![-1, 1], vec![-1, -1]] {
            assert!(mapped.contains(&want), "missing {want:?} in {mapped:?}");
        }
    }

    #[test]
    fn triangle_vertex_maps_are_row_pairs() {
        let t = DMatrix::from_row_slice(3, 2, &[-1.0, 0.0, 0.0, -1.0, 1.0, 1.0]);
        let (m, _, active) = vertex_maps(&t).unwrap();
        assert_eq!(m, 3);
        let mut pairs: Vec<Vec<usize>> = active.clone();
        pairs.sort();
        pairs.dedup();
        assert_eq!(pairs.len(), 3, "each R_j a distinct row pair");
    }

    #[test]
    fn wbar_examples() {
        let t = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 0.0, 1.0, -1.0, 0.0, 0.0, -1.0]);
        let zero = HPolytope::singleton(&DVector::zeros(2));
        assert!(compute_wbar(&t, &zero).unwrap().amax() <= 1e-9);
        let w = HPolytope::inf_ball(2, 0.05);
        let wbar = compute_wbar(&t, &w).unwrap();
        for i in 0..4 {
            assert_abs_diff_eq!(wbar[i], 0.05, epsilon = 1e-9);
        }
    }

    #[test]
    fn terminal_set_cases() {
        // W = {0}, Θ = {0}, stable A₀: feasible
        let m = UncertainModel::new(
            vec![
                DMatrix::from_row_slice(2, 2, &[0.5, 0.1, 0.0, 0.4]),
                DMatrix::zeros(2, 2),
            ],
            vec![DMatrix::from_row_slice(2, 1, &[0.0, 0.5]), DMatrix::zeros(2, 1)],
            DVector::zeros(1),
            ParamSet::singleton(&DVector::zeros(1)),
        )
        .unwrap();
        let w = HPolytope::singleton(&DVector::zeros(2));
        let q = DMatrix::identity(2, 2);
        let r = DMatrix::identity(1, 1);
        let shape = synthesize_t(&m, &w, None, 6, &q, &r).unwrap();
        let fd = min_lambda_gain(&m, &shape.t).unwrap();
        let cons = Constraints::new(
            DMatrix::from_row_slice(1, 2, &[0.0, -1.0 / 0.3]),
            DMatrix::zeros(1, 1),
        );
        let alpha_n = terminal_exists(&m, &shape, &fd, m.theta0(), &cons).unwrap();
        assert!(alpha_n.min() > 0.0);

        // brute-force invariance oracle: every X_N vertex propagates back in
        let xn = shape.cross_section(&alpha_n);
        let xn_verts = geometry::enumerate_vertices(&xn).unwrap().vertices;
        for v in &xn_verts {
            let next = m.phi(&DVector::zeros(1), &fd.k_gain) * v;
            assert!(xn.contains_point(&next, 1e-7), "vertex {v:?} leaves X_N");
        }

        // λ ≥ 1 synthetic design must be infeasible once disturbance forces a
        // nondegenerate terminal set: expansive plant, K = 0, W ≠ {0}
        let unstable = UncertainModel::new(
            vec![
                DMatrix::from_row_slice(2, 2, &[1.4, 0.0, 0.0, 1.2]),
                DMatrix::zeros(2, 2),
            ],
            vec![DMatrix::zeros(2, 1), DMatrix::zeros(2, 1)],
            DVector::zeros(1),
            ParamSet::singleton(&DVector::zeros(1)),
        )
        .unwrap();
        let fd_bad = FeedbackDesign { k_gain: DMatrix::zeros(1, 2), lambda: 1.4 };
        let shape_w = finish_shape(shape.t.clone(), &HPolytope::inf_ball(2, 0.05)).unwrap();
        let res = terminal_exists(&unstable, &shape_w, &fd_bad, unstable.theta0(), &cons);
        assert!(matches!(res, Err(DesignError::TerminalInfeasible)));
    }

    #[test]
    fn second_order_full_design_is_contractive() {
        let mf = second_order_model_file();
        let m = mf.build_model().unwrap();
        let w = HPolytope::inf_ball(2, 0.05);
        let q = DMatrix::identity(2, 2);
        let r = DMatrix::identity(1, 1);
        let shape = synthesize_t(&m, &w, None, 9, &q, &r).unwrap();
        let fd = min_lambda_gain(&m, &shape.t).unwrap();
        assert!(fd.lambda < 1.0);
        assert!(verify_contractive(&m, &shape.t, &fd.k_gain, fd.lambda + 1e-8).unwrap());

        let cons = Constraints::new(
            DMatrix::from_row_slice(2, 2, &[0.0, -1.0 / 0.3, 0.0, 0.0]),
            DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
        );
        let alpha_n = terminal_exists(&m, &shape, &fd, m.theta0(), &cons).unwrap();
        assert!(alpha_n.min() > 0.0, "terminal offsets {alpha_n:?}");

        // invariance oracle under every Θ₀ vertex and every W vertex
        let xn = shape.cross_section(&alpha_n);
        let xn_verts = geometry::enumerate_vertices(&xn).unwrap().vertices;
        let th_verts = geometry::enumerate_vertices(&m.theta0().as_polytope()).unwrap().vertices;
        let w_verts = geometry::enumerate_vertices(&w).unwrap().vertices;
        for th in &th_verts {
            let phi = m.phi(th, &fd.k_gain);
            for v in &xn_verts {
                for wv in &w_verts {
                    let next = &phi * v + wv;
                    assert!(xn.contains_point(&next, 1e-7));
                }
            }
        }

        // artifact round trip
        let art = DesignArtifact::from_parts(&shape, &fd, &alpha_n);
        let text = serde_json::to_string(&art).unwrap();
        let back: DesignArtifact = serde_json::from_str(&text).unwrap();
        let (shape2, fd2, alpha2) = back.to_parts();
        assert_eq!(shape2.t, shape.t);
        assert_eq!(fd2.k_gain, fd.k_gain);
        assert_eq!(alpha2, alpha_n);
    }

    #[test]
    fn random_alpha_vertex_halfspace_duality() {
        // For α ≥ 0 keeping active sets, {Tx ≤ α} = Co{U_j α}.
        use rand::{Rng, SeedableRng};
        let t = DMatrix::from_row_slice(3, 2, &[-1.0, 0.0, 0.0, -1.0, 1.0, 1.0]);
        let (_, u_maps, _) = vertex_maps(&t).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(13);
        for _ in 0..20 {
            // uniform scaling keeps all active sets
            let s: f64 = rng.random_range(0.1..3.0);
            let alpha = DVector::from_element(3, s);
            let cross = HPolytope::new(t.clone(), alpha.clone());
            let enumerated = geometry::enumerate_vertices(&cross).unwrap().vertices;
            for u in &u_maps {
                let mapped = u * &alpha;
                assert!(
                    enumerated.iter().any(|v| (v - &mapped).amax() <= 1e-7),
                    "mapped vertex missing"
                );
            }
            assert_eq!(enumerated.len(), u_maps.len());
        }
    }
}
