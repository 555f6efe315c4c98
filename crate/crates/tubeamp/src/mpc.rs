//! The online tube MPC problem and control loop.
//!
//! Each step assembles one conic program: the initial-offset constraint
//! `Tx ≤ α₀`, vertex-wise operating constraints, the tube recursion with
//! parameter-set multipliers `Λ_{k,j}`, terminal invariance conditions, the
//! nominal quadratic cost with a Lyapunov terminal weight entering through a
//! second-order-cone epigraph, and (when the excitation weight γ is positive)
//! the linearized persistence-of-excitation LMIs with the `-γβ` objective
//! term. With γ = 0 the program contains no PSD blocks at all.
//!
//! One [`Controller`] instance drives one closed-loop run, strictly
//! sequentially; independent runs share nothing mutable.

use crate::conic::{ConicProgram, LinExpr, SolveReport, SolveStatus, SolverOptions};
use crate::design::{FeedbackDesign, TubeShape};
use crate::estimator::{
    self, pe_coefficient, unfalsified, EstimatorError, EstimatorState, ParamSet, UnfalsifiedSet,
};
use crate::geometry::HPolytope;
use crate::system::{Constraints, UncertainModel};
use nalgebra::{DMatrix, DVector};
use thiserror::Error;
use std::time::Instant;

#[derive(Debug, Error)]
pub enum MpcError {
    #[error("problem infeasible at t = 0 (x₀ outside the feasible region)")]
    InfeasibleAtStart,
    #[error("solver failed at t = 0: {0:?}")]
    FailedAtStart(SolveStatus),
    #[error("closed loop unstable for the given nominal parameter (ρ = {0:.4})")]
    UnstableClosedLoop(f64),
    #[error("nominal reference problem infeasible at the initial state")]
    InfeasibleReference,
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

type Result<T> = std::result::Result<T, MpcError>;

/// Controller configuration (one block of the scenario file).
#[derive(Debug, Clone)]
pub struct ControllerConfig {
    /// Prediction horizon N.
    pub horizon: usize,
    /// PE window N_u (also the estimator window).
    pub pe_window: usize,
    /// Excitation weight γ ≥ 0.
    pub gamma: f64,
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
    /// Scalar solver tolerance; the duality gap is tightened by 10× so
    /// reported costs track the epigraph variable.
    pub solver_tol: f64,
    /// Parameter-set update period (1 = every step, N_u = periodic schedule).
    pub update_period: usize,
    /// Number of PE linearization passes per step (re-solve with refreshed
    /// reference when > 1).
    pub pe_iterations: usize,
    /// Switch γ_t to 0 from this time on.
    pub gamma_off_time: Option<usize>,
}

impl ControllerConfig {
    pub fn new(horizon: usize, pe_window: usize, gamma: f64, nx: usize, nu: usize) -> Self {
        Self {
            horizon,
            pe_window,
            gamma,
            q: DMatrix::identity(nx, nx),
            r: DMatrix::identity(nu, nu),
            solver_tol: 1e-8,
            update_period: 1,
            pe_iterations: 1,
            gamma_off_time: None,
        }
    }

    pub fn solver_options(&self) -> SolverOptions {
        SolverOptions {
            tol_feas: self.solver_tol,
            tol_gap_abs: self.solver_tol,
            tol_gap_rel: self.solver_tol / 10.0,
            max_iter: 400,
        }
    }

    fn gamma_at(&self, t: usize) -> f64 {
        match self.gamma_off_time {
            Some(t0) if t >= t0 => 0.0,
            _ => self.gamma,
        }
    }
}

/// Solution of the instantaneous conic problem `P`.
#[derive(Debug, Clone)]
pub struct TubeSolution {
    pub v: Vec<DVector<f64>>,
    pub alpha: Vec<DVector<f64>>,
    pub xbar: Vec<DVector<f64>>,
    pub beta_star: Option<f64>,
    /// Epigraph value of the nominal cost (23).
    pub nominal_cost: f64,
    /// Full objective (nominal cost − γβ).
    pub objective: f64,
    pub report: SolveReport,
    /// Independently recomputed worst constraint violation.
    pub max_violation: f64,
}

/// Assembled problem `P` plus the variable layout needed to read solutions
/// back out.
pub struct TubeProblem {
    pub program: ConicProgram,
    n: usize,
    nx: usize,
    nu: usize,
    n_alpha: usize,
    v_vars: Vec<usize>,
    alpha_vars: Vec<usize>,
    xbar_vars: Vec<usize>,
    cost_t: usize,
    beta_var: Option<usize>,
}

impl TubeProblem {
    /// Number of PSD blocks in the emitted program.
    pub fn num_psd_blocks(&self) -> usize {
        self.program
            .blocks()
            .iter()
            .filter(|b| matches!(b.kind, crate::conic::ConeKind::Psd(_)))
            .count()
    }

    pub fn solve(&self, opts: &SolverOptions) -> TubeSolution {
        let report = self.program.solve_with(opts);
        self.extract(report)
    }

    fn extract(&self, report: SolveReport) -> TubeSolution {
        let (v, alpha, xbar, beta_star, nominal_cost, objective, max_violation) = match &report
            .primal
        {
            Some(x) => {
                let v = (0..self.n)
                    .map(|k| {
                        DVector::from_iterator(
                            self.nu,
                            self.v_vars[k * self.nu..(k + 1) * self.nu].iter().map(|&i| x[i]),
                        )
                    })
                    .collect();
                let alpha = (0..=self.n)
                    .map(|k| {
                        DVector::from_iterator(
                            self.n_alpha,
                            self.alpha_vars[k * self.n_alpha..(k + 1) * self.n_alpha]
                                .iter()
                                .map(|&i| x[i]),
                        )
                    })
                    .collect();
                let xbar = (0..=self.n)
                    .map(|k| {
                        DVector::from_iterator(
                            self.nx,
                            self.xbar_vars[k * self.nx..(k + 1) * self.nx].iter().map(|&i| x[i]),
                        )
                    })
                    .collect();
                let beta = self.beta_var.map(|b| x[b]);
                let viol = self.program.max_violation(x);
                (v, alpha, xbar, beta, x[self.cost_t], report.objective, viol)
            }
            None => (Vec::new(), Vec::new(), Vec::new(), None, f64::NAN, f64::NAN, f64::NAN),
        };
        TubeSolution { v, alpha, xbar, beta_star, nominal_cost, objective, report, max_violation }
    }
}

/// Constant coefficient matrices reused across steps (they depend only on
/// the model, the tube shape and the gain).
struct ProblemTemplate {
    /// `T (A_{i+1} + B_{i+1} K) U_j`, indexed `[i][j]`.
    ta_u: Vec<Vec<DMatrix<f64>>>,
    /// `T B_{i+1}`, indexed `[i]`.
    tb: Vec<DMatrix<f64>>,
    /// `T (A₀ + B₀K) U_j`, indexed `[j]`.
    td_u: Vec<DMatrix<f64>>,
    /// `T B₀`.
    tb0: DMatrix<f64>,
    /// `(F + GK) U_j`, indexed `[j]`.
    fg_u: Vec<DMatrix<f64>>,
    /// `(A_{i+1} + B_{i+1} K) U_j` for the PE blocks, indexed `[i][j]`.
    au: Vec<Vec<DMatrix<f64>>>,
}

impl ProblemTemplate {
    fn new(
        model: &UncertainModel,
        shape: &TubeShape,
        k_gain: &DMatrix<f64>,
        cons: &Constraints,
    ) -> Self {
        let p = model.p();
        let fgk = &cons.f + &cons.g * k_gain;
        let mut ta_u = Vec::with_capacity(p);
        let mut au = Vec::with_capacity(p);
        let mut tb = Vec::with_capacity(p);
        for i in 0..p {
            let ai = model.a_mat(i + 1) + model.b_mat(i + 1) * k_gain;
            ta_u.push(shape.u_maps.iter().map(|u| &shape.t * &ai * u).collect());
            au.push(shape.u_maps.iter().map(|u| &ai * u).collect());
            tb.push(&shape.t * model.b_mat(i + 1));
        }
        let a0 = model.a_mat(0) + model.b_mat(0) * k_gain;
        let td_u = shape.u_maps.iter().map(|u| &shape.t * &a0 * u).collect();
        let tb0 = &shape.t * model.b_mat(0);
        let fg_u = shape.u_maps.iter().map(|u| &fgk * u).collect();
        Self { ta_u, tb, td_u, tb0, fg_u, au }
    }
}

/// Stacked quadratic form of the nominal cost over `z = (x̄₀..x̄_N, v₀..v_{N-1})`.
fn cost_hessian(
    n: usize,
    nx: usize,
    nu: usize,
    k_gain: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    p_term: &DMatrix<f64>,
) -> DMatrix<f64> {
    let dim = (n + 1) * nx + n * nu;
    let mut h = DMatrix::zeros(dim, dim);
    let ktrk = k_gain.transpose() * r * k_gain;
    let ktr = k_gain.transpose() * r;
    for k in 0..n {
        let xo = k * nx;
        let vo = (n + 1) * nx + k * nu;
        for a in 0..nx {
            for b in 0..nx {
                h[(xo + a, xo + b)] += q[(a, b)] + ktrk[(a, b)];
            }
            for b in 0..nu {
                h[(xo + a, vo + b)] += ktr[(a, b)];
                h[(vo + b, xo + a)] += ktr[(a, b)];
            }
        }
        for a in 0..nu {
            for b in 0..nu {
                h[(vo + a, vo + b)] += r[(a, b)];
            }
        }
    }
    let xo = n * nx;
    for a in 0..nx {
        for b in 0..nx {
            h[(xo + a, xo + b)] += p_term[(a, b)];
        }
    }
    h
}

/// Direct evaluation of the nominal cost (23) on a trajectory.
pub fn nominal_cost_of(
    xbar: &[DVector<f64>],
    v: &[DVector<f64>],
    k_gain: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    p_term: &DMatrix<f64>,
) -> f64 {
    let n = v.len();
    let mut total = 0.0;
    for k in 0..n {
        let u = k_gain * &xbar[k] + &v[k];
        total += (xbar[k].transpose() * q * &xbar[k])[(0, 0)];
        total += (u.transpose() * r * &u)[(0, 0)];
    }
    total + (xbar[n].transpose() * p_term * &xbar[n])[(0, 0)]
}

/// Solves the discrete Lyapunov equation `P − ΦᵀPΦ = Q + KᵀRK` for the
/// closed loop at `theta` by the direct vectorized linear solve.
pub fn lyapunov_weight(
    model: &UncertainModel,
    k_gain: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    theta: &DVector<f64>,
) -> Result<DMatrix<f64>> {
    let phi = model.phi(theta, k_gain);
    let rho = phi.complex_eigenvalues().iter().fold(0.0_f64, |m, e| m.max(e.norm()));
    if rho >= 1.0 {
        return Err(MpcError::UnstableClosedLoop(rho));
    }
    let s = q + k_gain.transpose() * r * k_gain;
    solve_discrete_lyapunov(&phi, &s)
}

/// `P − ΦᵀPΦ = S` via `(I − Φᵀ⊗Φᵀ) vec(P) = vec(S)`.
pub fn solve_discrete_lyapunov(phi: &DMatrix<f64>, s: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = phi.nrows();
    let phit = phi.transpose();
    let kron = phit.kronecker(&phit);
    let lhs = DMatrix::identity(n * n, n * n) - kron;
    let rhs = DVector::from_iterator(n * n, s.iter().cloned());
    let vec_p = lhs
        .lu()
        .solve(&rhs)
        .ok_or_else(|| MpcError::Numerical("Lyapunov solve singular".into()))?;
    let p = DMatrix::from_iterator(n, n, vec_p.iter().cloned());
    let p = (&p + p.transpose()) * 0.5;
    let residual = (&p - phi.transpose() * &p * phi - s).amax();
    if residual > 1e-8 {
        return Err(MpcError::Numerical(format!("Lyapunov residual {residual:.3e}")));
    }
    Ok(p)
}

/// Reference sequences `(x̂₀..x̂_N, û₀..û_{N-1})`.
pub type ReferencePair = (Vec<DVector<f64>>, Vec<DVector<f64>>);

/// Initial reference from the nominal QP: dynamics under `θ̄₀`, operating
/// constraints, quadratic cost with the Lyapunov terminal weight.
pub fn initial_reference(
    model: &UncertainModel,
    k_gain: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    p_term: &DMatrix<f64>,
    theta_bar: &DVector<f64>,
    x0: &DVector<f64>,
    n: usize,
    cons: &Constraints,
) -> Result<ReferencePair> {
    let nx = model.nx();
    let nu = model.nu();
    let (a, b) = model.assemble(theta_bar);
    let phi = &a + &b * k_gain;

    let mut prog = ConicProgram::new();
    let xs: Vec<usize> = prog.add_vars((n + 1) * nx).collect();
    let vs: Vec<usize> = prog.add_vars(n * nu).collect();
    for i in 0..nx {
        let mut e = LinExpr::var(xs[i]);
        e.offset(-x0[i]);
        prog.add_equality(e);
    }
    for k in 0..n {
        for i in 0..nx {
            // x_{k+1,i} = Σ phi[i,:] x_k + Σ b[i,:] v_k
            let mut e = LinExpr::var(xs[(k + 1) * nx + i]);
            for c in 0..nx {
                e.push(xs[k * nx + c], -phi[(i, c)]);
            }
            for c in 0..nu {
                e.push(vs[k * nu + c], -b[(i, c)]);
            }
            prog.add_equality(e);
        }
    }
    let fgk = &cons.f + &cons.g * k_gain;
    let mut rows = Vec::new();
    for k in 0..n {
        for c in 0..cons.num_rows() {
            let mut e = LinExpr::constant(1.0);
            for i in 0..nx {
                e.push(xs[k * nx + i], -fgk[(c, i)]);
            }
            for i in 0..nu {
                e.push(vs[k * nu + i], -cons.g[(c, i)]);
            }
            rows.push(e);
        }
    }
    prog.add_nonneg_block(rows);
    let h = cost_hessian(n, nx, nu, k_gain, q, r, p_term);
    let z: Vec<usize> = xs.iter().chain(vs.iter()).cloned().collect();
    let epi = prog
        .quadratic_epigraph(&h, &DVector::zeros(z.len()), &z)
        .map_err(|e| MpcError::Numerical(e.to_string()))?;
    prog.add_objective(epi.t_var, 1.0);

    let rep = prog.solve_with(&SolverOptions::precise());
    match rep.status {
        SolveStatus::Optimal => {
            let x = rep.primal_or("reference QP");
            let xhat: Vec<DVector<f64>> = (0..=n)
                .map(|k| DVector::from_iterator(nx, (0..nx).map(|i| x[xs[k * nx + i]])))
                .collect();
            let uhat: Vec<DVector<f64>> = (0..n)
                .map(|k| {
                    let v = DVector::from_iterator(nu, (0..nu).map(|i| x[vs[k * nu + i]]));
                    k_gain * &xhat[k] + v
                })
                .collect();
            Ok((xhat, uhat))
        }
        SolveStatus::Infeasible => Err(MpcError::InfeasibleReference),
        other => Err(MpcError::Numerical(format!("reference QP: {other:?}"))),
    }
}

/// Shifted reference: `x̂₀ = x_t`, `v̂_k = v*_{k+1|t-1}` (last `v̂ = 0`),
/// simulated forward under `θ̄_t`.
pub fn shift_reference(
    model: &UncertainModel,
    prev_v: &[DVector<f64>],
    theta_bar: &DVector<f64>,
    x_t: &DVector<f64>,
    k_gain: &DMatrix<f64>,
    n: usize,
) -> ReferencePair {
    let (a, b) = model.assemble(theta_bar);
    let mut xs = Vec::with_capacity(n + 1);
    let mut us = Vec::with_capacity(n);
    xs.push(x_t.clone());
    for k in 0..n {
        let vhat = if k + 1 < prev_v.len() {
            prev_v[k + 1].clone()
        } else {
            DVector::zeros(model.nu())
        };
        let u = k_gain * &xs[k] + vhat;
        let next = &a * &xs[k] + &b * &u;
        us.push(u);
        xs.push(next);
    }
    (xs, us)
}

/// The Proposition-1 shifted candidate `(v̂, α̂)` from the previous optimum.
pub fn warm_start(prev: &TubeSolution) -> (Vec<DVector<f64>>, Vec<DVector<f64>>) {
    let n = prev.v.len();
    let mut v = Vec::with_capacity(n);
    for k in 1..n {
        v.push(prev.v[k].clone());
    }
    v.push(DVector::zeros(prev.v[0].len()));
    let mut alpha = Vec::with_capacity(n + 1);
    for k in 1..=n {
        alpha.push(prev.alpha[k].clone());
    }
    alpha.push(prev.alpha[n].clone());
    (v, alpha)
}

/// Exact per-vertex PE audit of a solution: smallest eigenvalue of
/// `Σ_{k<N_u} DᵀD` along every vertex trajectory, compared with `β*`.
#[derive(Debug, Clone, Copy)]
pub struct PeAudit {
    /// `min_j λ_min(Σ_k D(x_k^{(j)}, u_k^{(j)})ᵀ D(·))`.
    pub beta1_exact: f64,
    /// `beta1_exact − β*` (nonnegative up to solver tolerance).
    pub gap: f64,
}

pub fn pe_linearization_audit(
    model: &UncertainModel,
    shape: &TubeShape,
    k_gain: &DMatrix<f64>,
    n_u: usize,
    solution: &TubeSolution,
) -> Option<PeAudit> {
    let beta_star = solution.beta_star?;
    let mut worst = f64::INFINITY;
    for u_map in &shape.u_maps {
        let ds: Vec<DMatrix<f64>> = (0..n_u)
            .map(|k| {
                let x = u_map * &solution.alpha[k];
                let u = k_gain * &x + &solution.v[k];
                model.regressor(&x, &u).0
            })
            .collect();
        worst = worst.min(pe_coefficient(&ds).beta1);
    }
    Some(PeAudit { beta1_exact: worst, gap: worst - beta_star })
}

/// Assembles the conic program for the current step.
#[allow(clippy::too_many_arguments)]
fn build_problem_inner(
    model: &UncertainModel,
    shape: &TubeShape,
    feedback: &FeedbackDesign,
    cons: &Constraints,
    theta_set: &ParamSet,
    theta_bar: &DVector<f64>,
    lyap: &DMatrix<f64>,
    cfg: &ControllerConfig,
    gamma_t: f64,
    x_t: &DVector<f64>,
    refs: Option<&ReferencePair>,
    template: &ProblemTemplate,
) -> TubeProblem {
    let n = cfg.horizon;
    let n_u = cfg.pe_window;
    let nx = model.nx();
    let nu = model.nu();
    let p = model.p();
    let n_alpha = shape.n_alpha();
    let m = shape.m;
    let r_rows = theta_set.num_rows();
    let mu = theta_set.offsets();
    let m_dirs = theta_set.directions();
    let k_gain = &feedback.k_gain;

    let mut prog = ConicProgram::new();
    let v_vars: Vec<usize> = prog.add_vars(n * nu).collect();
    let alpha_vars: Vec<usize> = prog.add_vars((n + 1) * n_alpha).collect();
    let xbar_vars: Vec<usize> = prog.add_vars((n + 1) * nx).collect();

    let alpha_at = |k: usize, a: usize| alpha_vars[k * n_alpha + a];
    let v_at = |k: usize, c: usize| v_vars[k * nu + c];

    let mut nonneg: Vec<LinExpr> = Vec::new();

    // (13) Tx_t ≤ α₀
    let tx = &shape.t * x_t;
    for a in 0..n_alpha {
        let mut e = LinExpr::var(alpha_at(0, a));
        e.offset(-tx[a]);
        nonneg.push(e);
    }

    // Tube stages k = 0..N (k = N is the terminal stage with v ≡ 0).
    for k in 0..=n {
        let terminal = k == n;
        for j in 0..m {
            // operating constraints (17) / (19a)
            let fgu = &template.fg_u[j];
            for c in 0..cons.num_rows() {
                let mut e = LinExpr::constant(1.0);
                for a in 0..n_alpha {
                    e.push(alpha_at(k, a), -fgu[(c, a)]);
                }
                if !terminal {
                    for cc in 0..nu {
                        e.push(v_at(k, cc), -cons.g[(c, cc)]);
                    }
                }
                nonneg.push(e);
            }

            // multipliers Λ_{k,j} ≥ 0
            let lam: Vec<usize> = prog.add_vars(n_alpha * r_rows).collect();
            for &lv in &lam {
                nonneg.push(LinExpr::var(lv));
            }

            // (18a)/(19b): Λ M_Θ = T D(U_j α_k, K U_j α_k + v_k)
            for i in 0..p {
                let ta = &template.ta_u[i][j];
                let tb = &template.tb[i];
                for a in 0..n_alpha {
                    let mut e = LinExpr::constant(0.0);
                    for c in 0..r_rows {
                        e.push(lam[a * r_rows + c], m_dirs[(c, i)]);
                    }
                    for col in 0..n_alpha {
                        e.push(alpha_at(k, col), -ta[(a, col)]);
                    }
                    if !terminal {
                        for cc in 0..nu {
                            e.push(v_at(k, cc), -tb[(a, cc)]);
                        }
                    }
                    prog.add_equality(e);
                }
            }

            // (18b)/(19c): Λ μ_t ≤ α_{k+1} − T d(·) − w̄
            let next_k = if terminal { n } else { k + 1 };
            let td = &template.td_u[j];
            for a in 0..n_alpha {
                let mut e = LinExpr::constant(-shape.wbar[a]);
                e.push(alpha_at(next_k, a), 1.0);
                for col in 0..n_alpha {
                    e.push(alpha_at(k, col), -td[(a, col)]);
                }
                if !terminal {
                    for cc in 0..nu {
                        e.push(v_at(k, cc), -template.tb0[(a, cc)]);
                    }
                }
                for c in 0..r_rows {
                    e.push(lam[a * r_rows + c], -mu[c]);
                }
                nonneg.push(e);
            }
        }
    }

    // nominal dynamics (21): x̄₀ = x_t, x̄_{k+1} = Φ(θ̄)x̄_k + B(θ̄)v_k
    let xbar_at = |k: usize, i: usize| xbar_vars[k * nx + i];
    let (a_bar, b_bar) = model.assemble(theta_bar);
    let phi_bar = &a_bar + &b_bar * k_gain;
    for i in 0..nx {
        let mut e = LinExpr::var(xbar_at(0, i));
        e.offset(-x_t[i]);
        prog.add_equality(e);
    }
    for k in 0..n {
        for i in 0..nx {
            let mut e = LinExpr::var(xbar_at(k + 1, i));
            for c in 0..nx {
                e.push(xbar_at(k, c), -phi_bar[(i, c)]);
            }
            for c in 0..nu {
                e.push(v_at(k, c), -b_bar[(i, c)]);
            }
            prog.add_equality(e);
        }
    }

    // cost epigraph over z = (x̄, v)
    let h = cost_hessian(n, nx, nu, k_gain, &cfg.q, &cfg.r, lyap);
    let z: Vec<usize> = xbar_vars.iter().chain(v_vars.iter()).cloned().collect();
    let epi = prog
        .quadratic_epigraph(&h, &DVector::zeros(z.len()), &z)
        .expect("nominal cost Hessian is PSD by construction");
    prog.add_objective(epi.t_var, 1.0);

    // PE relaxation (27a)-(27b) and the -γβ objective term
    let mut beta_var = None;
    if gamma_t > 0.0 {
        let (xhat, uhat) = refs.expect("PE blocks need reference sequences");
        let tri_len = p * (p + 1) / 2;
        let m_vars: Vec<Vec<usize>> =
            (0..n_u).map(|_| prog.add_vars(tri_len).collect()).collect();
        let beta = prog.add_var();
        prog.add_objective(beta, -gamma_t);
        beta_var = Some(beta);
        let tri_index = |i: usize, j: usize| j * (j + 1) / 2 + i; // i <= j

        for k in 0..n_u {
            let dhat = model.regressor(&xhat[k], &uhat[k]).0;
            let dhat_cols: Vec<DVector<f64>> =
                (0..p).map(|i| dhat.column(i).into_owned()).collect();
            for j in 0..m {
                // E = D_jᵀD̂ + D̂ᵀD_j − D̂ᵀD̂ − M_k ⪰ 0, with
                // col_i(D_j) = (A_{i+1}+B_{i+1}K) U_j α_k + B_{i+1} v_k
                let mut tri = Vec::with_capacity(tri_len);
                for col_j in 0..p {
                    for col_i in 0..=col_j {
                        let mut e =
                            LinExpr::constant(-dhat_cols[col_i].dot(&dhat_cols[col_j]));
                        e.push(m_vars[k][tri_index(col_i, col_j)], -1.0);
                        // α_k coefficients: d̂_jᵀ AU_i + d̂_iᵀ AU_j
                        let au_i = &template.au[col_i][j];
                        let au_j = &template.au[col_j][j];
                        for col in 0..n_alpha {
                            let coeff = dhat_cols[col_j].dot(&au_i.column(col).into_owned())
                                + dhat_cols[col_i].dot(&au_j.column(col).into_owned());
                            e.push(alpha_at(k, col), coeff);
                        }
                        // v_k coefficients: d̂_jᵀ B_{i+1} + d̂_iᵀ B_{j+1}
                        for cc in 0..nu {
                            let coeff = dhat_cols[col_j]
                                .dot(&model.b_mat(col_i + 1).column(cc).into_owned())
                                + dhat_cols[col_i]
                                    .dot(&model.b_mat(col_j + 1).column(cc).into_owned());
                            e.push(v_at(k, cc), coeff);
                        }
                        tri.push(e);
                    }
                }
                prog.add_psd_block_from_triangle(p, tri).expect("PE triangle count");
            }
        }
        // Σ_k M_k − βI ⪰ 0
        let mut tri = Vec::with_capacity(tri_len);
        for col_j in 0..p {
            for col_i in 0..=col_j {
                let mut e = LinExpr::constant(0.0);
                for k in 0..n_u {
                    e.push(m_vars[k][tri_index(col_i, col_j)], 1.0);
                }
                if col_i == col_j {
                    e.push(beta, -1.0);
                }
                tri.push(e);
            }
        }
        prog.add_psd_block_from_triangle(p, tri).expect("PE triangle count");
    }

    prog.add_nonneg_block(nonneg);

    TubeProblem {
        program: prog,
        n,
        nx,
        nu,
        n_alpha,
        v_vars,
        alpha_vars,
        xbar_vars,
        cost_t: epi.t_var,
        beta_var,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepStatus {
    Optimal,
    /// Solver failed; the shifted previous solution supplied the input.
    DegradedFallback,
}

/// Per-step outcome kept for logging and the acceptance checks.
#[derive(Debug, Clone)]
pub struct StepRecord {
    pub t: usize,
    pub x: DVector<f64>,
    pub u: DVector<f64>,
    pub status: StepStatus,
    pub assembly_s: f64,
    pub solve_s: f64,
    pub iterations: u32,
    /// Epigraph value of the nominal cost (NaN on fallback steps).
    pub nominal_cost: f64,
    pub beta_star: Option<f64>,
    pub audit: Option<PeAudit>,
    /// Realized-regressor PE coefficient over the trailing window.
    pub beta1_window: f64,
    /// Parameter-set offsets after this step's update.
    pub mu: DVector<f64>,
    /// Optimized tube offsets α*_{0..N} (empty on fallback steps).
    pub alpha: Vec<DVector<f64>>,
    pub max_violation: f64,
}

/// One closed-loop controller instance (strictly sequential within a run).
pub struct Controller {
    model: UncertainModel,
    shape: TubeShape,
    feedback: FeedbackDesign,
    cons: Constraints,
    w_set: HPolytope,
    cfg: ControllerConfig,
    template: ProblemTemplate,
    theta_bar: DVector<f64>,
    estimator: EstimatorState,
    lyap: DMatrix<f64>,
    prev_solution: Option<TubeSolution>,
    prev_xu: Option<(DVector<f64>, DVector<f64>)>,
    realized_d: std::collections::VecDeque<DMatrix<f64>>,
    deltas: Vec<UnfalsifiedSet>,
    t: usize,
}

impl Controller {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        model: UncertainModel,
        shape: TubeShape,
        feedback: FeedbackDesign,
        cons: Constraints,
        w_set: HPolytope,
        cfg: ControllerConfig,
        theta_bar0: Option<DVector<f64>>,
    ) -> Result<Self> {
        let theta_bar = match theta_bar0 {
            Some(th) => estimator::project_nominal(&th, model.theta0())?,
            None => crate::geometry::chebyshev_center(&model.theta0().as_polytope())
                .map_err(EstimatorError::from)?,
        };
        let lyap = lyapunov_weight(&model, &feedback.k_gain, &cfg.q, &cfg.r, &theta_bar)?;
        let template = ProblemTemplate::new(&model, &shape, &feedback.k_gain, &cons);
        let estimator =
            EstimatorState::new(model.theta0().clone(), cfg.pe_window, cfg.update_period);
        Ok(Self {
            model,
            shape,
            feedback,
            cons,
            w_set,
            cfg,
            template,
            theta_bar,
            estimator,
            lyap,
            prev_solution: None,
            prev_xu: None,
            realized_d: std::collections::VecDeque::new(),
            deltas: Vec::new(),
            t: 0,
        })
    }

    pub fn param_set(&self) -> &ParamSet {
        self.estimator.set()
    }

    pub fn theta_bar(&self) -> &DVector<f64> {
        &self.theta_bar
    }

    pub fn deltas(&self) -> &[UnfalsifiedSet] {
        &self.deltas
    }

    pub fn k_gain(&self) -> &DMatrix<f64> {
        &self.feedback.k_gain
    }

    pub fn shape(&self) -> &TubeShape {
        &self.shape
    }

    fn reference_from_v(&self, x_t: &DVector<f64>, v: &[DVector<f64>]) -> ReferencePair {
        let (a, b) = self.model.assemble(&self.theta_bar);
        let mut xs = vec![x_t.clone()];
        let mut us = Vec::with_capacity(self.cfg.horizon);
        for k in 0..self.cfg.horizon {
            let vk = v.get(k).cloned().unwrap_or_else(|| DVector::zeros(self.model.nu()));
            let u = &self.feedback.k_gain * &xs[k] + vk;
            xs.push(&a * &xs[k] + &b * &u);
            us.push(u);
        }
        (xs, us)
    }

    /// Online steps 1-5 for the current measured state.
    pub fn step(&mut self, x_t: &DVector<f64>) -> Result<StepRecord> {
        let t = self.t;

        // parameter set + nominal parameter update
        if let Some((xp, up)) = self.prev_xu.take() {
            let delta = unfalsified(&self.model, &self.w_set, &xp, &up, x_t);
            self.deltas.push(delta.clone());
            self.estimator.observe(delta)?;
            let projected = estimator::project_nominal(&self.theta_bar, self.estimator.set())?;
            if projected != self.theta_bar {
                self.theta_bar = projected;
                self.lyap = lyapunov_weight(
                    &self.model,
                    &self.feedback.k_gain,
                    &self.cfg.q,
                    &self.cfg.r,
                    &self.theta_bar,
                )?;
            }
        }

        let gamma_t = self.cfg.gamma_at(t);
        let mut refs: Option<ReferencePair> = if gamma_t > 0.0 {
            Some(match &self.prev_solution {
                Some(prev) => shift_reference(
                    &self.model,
                    &prev.v,
                    &self.theta_bar,
                    x_t,
                    &self.feedback.k_gain,
                    self.cfg.horizon,
                ),
                None => initial_reference(
                    &self.model,
                    &self.feedback.k_gain,
                    &self.cfg.q,
                    &self.cfg.r,
                    &self.lyap,
                    &self.theta_bar,
                    x_t,
                    self.cfg.horizon,
                    &self.cons,
                )
                .unwrap_or_else(|_| self.reference_from_v(x_t, &[])),
            })
        } else {
            None
        };

        let mut assembly_s = 0.0;
        let mut solve_s = 0.0;
        let mut solution: Option<TubeSolution> = None;
        let passes = if gamma_t > 0.0 { self.cfg.pe_iterations.max(1) } else { 1 };
        for pass in 0..passes {
            let build_start = Instant::now();
            let problem = build_problem_inner(
                &self.model,
                &self.shape,
                &self.feedback,
                &self.cons,
                self.estimator.set(),
                &self.theta_bar,
                &self.lyap,
                &self.cfg,
                gamma_t,
                x_t,
                refs.as_ref(),
                &self.template,
            );
            assembly_s += build_start.elapsed().as_secs_f64();
            let sol = problem.solve(&self.cfg.solver_options());
            solve_s += sol.report.solve_time_s;
            let optimal = sol.report.status == SolveStatus::Optimal;
            let v_for_refs = sol.v.clone();
            solution = Some(sol);
            if !optimal || pass + 1 == passes {
                break;
            }
            refs = Some(self.reference_from_v(x_t, &v_for_refs));
        }
        let solution = solution.expect("at least one solve pass");

        let record = match solution.report.status {
            SolveStatus::Optimal => {
                let u = &self.feedback.k_gain * x_t + &solution.v[0];
                let audit = pe_linearization_audit(
                    &self.model,
                    &self.shape,
                    &self.feedback.k_gain,
                    self.cfg.pe_window,
                    &solution,
                );
                let rec = StepRecord {
                    t,
                    x: x_t.clone(),
                    u: u.clone(),
                    status: StepStatus::Optimal,
                    assembly_s,
                    solve_s,
                    iterations: solution.report.iterations,
                    nominal_cost: solution.nominal_cost,
                    beta_star: solution.beta_star,
                    audit,
                    beta1_window: 0.0,
                    mu: self.estimator.set().offsets().clone(),
                    alpha: solution.alpha.clone(),
                    max_violation: solution.max_violation,
                };
                self.prev_solution = Some(solution);
                rec
            }
            SolveStatus::Infeasible if t == 0 => return Err(MpcError::InfeasibleAtStart),
            other if t == 0 => return Err(MpcError::FailedAtStart(other)),
            _ => {
                // degraded step: apply the Proposition-1 candidate's first input
                let prev = self.prev_solution.as_ref().expect("feasible start");
                let (vhat, ahat) = warm_start(prev);
                let u = &self.feedback.k_gain * x_t + &vhat[0];
                let nx = self.model.nx();
                let rec = StepRecord {
                    t,
                    x: x_t.clone(),
                    u: u.clone(),
                    status: StepStatus::DegradedFallback,
                    assembly_s,
                    solve_s,
                    iterations: solution.report.iterations,
                    nominal_cost: f64::NAN,
                    beta_star: None,
                    audit: None,
                    beta1_window: 0.0,
                    mu: self.estimator.set().offsets().clone(),
                    alpha: ahat.clone(),
                    max_violation: f64::NAN,
                };
                self.prev_solution = Some(TubeSolution {
                    xbar: vec![DVector::zeros(nx); self.cfg.horizon + 1],
                    v: vhat,
                    alpha: ahat,
                    beta_star: None,
                    nominal_cost: f64::NAN,
                    objective: f64::NAN,
                    report: solution.report,
                    max_violation: f64::NAN,
                });
                rec
            }
        };

        let mut record = record;
        let d_t = self.model.regressor(x_t, &record.u).0;
        if self.realized_d.len() == self.cfg.pe_window {
            self.realized_d.pop_front();
        }
        self.realized_d.push_back(d_t);
        let window: Vec<DMatrix<f64>> = self.realized_d.iter().cloned().collect();
        record.beta1_window = pe_coefficient(&window).beta1;

        self.prev_xu = Some((x_t.clone(), record.u.clone()));
        self.t += 1;
        Ok(record)
    }
}
