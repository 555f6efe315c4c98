//! Backend-neutral conic programs.
//!
//! A [`ConicProgram`] is a linear objective over variables `x` subject to an
//! equality block `A x + a = 0` and a list of cone blocks `F x + g ∈ K`,
//! where `K` is the nonnegative orthant, a second-order cone, or the cone of
//! positive semidefinite matrices in scaled-triangle vectorization. Every LP,
//! QP and SDP in this crate is expressed in this form; quadratic objectives
//! enter through [`ConicProgram::quadratic_epigraph`].
//!
//! Solves are delegated to Clarabel's interior-point method. The program
//! representation stays solver-agnostic so constraint residuals can be
//! recomputed independently of the backend (see
//! [`ConicProgram::max_violation`]).

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus,
    SupportedConeT::{self, NonnegativeConeT, PSDTriangleConeT, SecondOrderConeT, ZeroConeT},
};
use nalgebra::{DMatrix, DVector};
use thiserror::Error;

/// Default feasibility / duality-gap tolerance.
pub const DEFAULT_TOL: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum ConicError {
    #[error("cone block expects {expected} rows, got {got}")]
    BlockRowCount { expected: usize, got: usize },
    #[error("expression references variable {var} but program has {num_vars}")]
    VariableOutOfRange { var: usize, num_vars: usize },
    #[error("quadratic term is not positive semidefinite (min eigenvalue {0:.3e})")]
    NotPsd(f64),
    #[error("linear term is not in the range of the quadratic form (residual {0:.3e})")]
    LinearTermOutsideRange(f64),
}

/// Affine expression `Σ coeff·x[var] + constant`.
#[derive(Debug, Clone, Default)]
pub struct LinExpr {
    pub terms: Vec<(usize, f64)>,
    pub constant: f64,
}

impl LinExpr {
    pub fn constant(c: f64) -> Self {
        Self { terms: Vec::new(), constant: c }
    }

    pub fn var(v: usize) -> Self {
        Self { terms: vec![(v, 1.0)], constant: 0.0 }
    }

    pub fn term(v: usize, coeff: f64) -> Self {
        Self { terms: vec![(v, coeff)], constant: 0.0 }
    }

    pub fn push(&mut self, v: usize, coeff: f64) -> &mut Self {
        if coeff != 0.0 {
            self.terms.push((v, coeff));
        }
        self
    }

    pub fn offset(&mut self, c: f64) -> &mut Self {
        self.constant += c;
        self
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms.iter().fold(self.constant, |acc, &(v, c)| acc + c * x[v])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConeKind {
    Nonnegative,
    SecondOrder,
    /// Matrices of side `d`, vectorized as the upper triangle stacked
    /// column-wise with off-diagonal entries scaled by √2 (d(d+1)/2 rows).
    Psd(usize),
}

#[derive(Debug, Clone)]
pub struct ConeBlock {
    pub kind: ConeKind,
    pub rows: Vec<LinExpr>,
}

/// Outcome classification of a solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    NumericalFailure,
}

/// Result of [`ConicProgram::solve`].
#[derive(Debug, Clone)]
pub struct SolveReport {
    pub status: SolveStatus,
    /// Primal solution; present iff `status == Optimal`.
    pub primal: Option<Vec<f64>>,
    /// Dual solution in row order (equalities first), kept for certificates.
    pub dual: Option<Vec<f64>>,
    pub objective: f64,
    pub iterations: u32,
    pub solve_time_s: f64,
}

impl SolveReport {
    pub fn primal_or(&self, context: &str) -> &[f64] {
        self.primal
            .as_deref()
            .unwrap_or_else(|| panic!("{context}: solver returned {:?}", self.status))
    }
}

/// Tolerance bundle passed to the backend.
#[derive(Debug, Clone, Copy)]
pub struct SolverOptions {
    pub tol_feas: f64,
    pub tol_gap_abs: f64,
    pub tol_gap_rel: f64,
    pub max_iter: u32,
}

impl SolverOptions {
    pub fn from_tol(tol: f64) -> Self {
        Self { tol_feas: tol, tol_gap_abs: tol, tol_gap_rel: tol, max_iter: 200 }
    }

    /// Tight duality gap for solves whose objective value is reported
    /// downstream (keeps epigraph slack below reporting tolerances).
    pub fn precise() -> Self {
        Self { tol_feas: 1e-9, tol_gap_abs: 1e-9, tol_gap_rel: 1e-10, max_iter: 400 }
    }
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self::from_tol(DEFAULT_TOL)
    }
}

/// Handle returned by [`ConicProgram::quadratic_epigraph`].
#[derive(Debug, Clone, Copy)]
pub struct Epigraph {
    /// Variable `t` with `t ≥ zᵀHz + 2fᵀz + constant_shift`.
    pub t_var: usize,
    /// Additive constant `‖c‖²` absorbed by the cone encoding.
    pub constant_shift: f64,
}

#[derive(Debug, Clone, Default)]
pub struct ConicProgram {
    num_vars: usize,
    objective: Vec<f64>,
    equalities: Vec<LinExpr>,
    blocks: Vec<ConeBlock>,
}

impl ConicProgram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn num_equalities(&self) -> usize {
        self.equalities.len()
    }

    pub fn blocks(&self) -> &[ConeBlock] {
        &self.blocks
    }

    pub fn add_var(&mut self) -> usize {
        self.num_vars += 1;
        self.objective.push(0.0);
        self.num_vars - 1
    }

    pub fn add_vars(&mut self, n: usize) -> std::ops::Range<usize> {
        let start = self.num_vars;
        self.num_vars += n;
        self.objective.resize(self.num_vars, 0.0);
        start..self.num_vars
    }

    /// Adds `coeff` to the objective coefficient of `var`.
    pub fn add_objective(&mut self, var: usize, coeff: f64) {
        self.objective[var] += coeff;
    }

    /// Constrains `expr = 0`.
    pub fn add_equality(&mut self, expr: LinExpr) {
        self.equalities.push(expr);
    }

    /// Constrains `expr ≥ 0`.
    pub fn add_nonneg(&mut self, expr: LinExpr) {
        self.blocks.push(ConeBlock { kind: ConeKind::Nonnegative, rows: vec![expr] });
    }

    /// Constrains each row of `rows` to be ≥ 0 as one block.
    pub fn add_nonneg_block(&mut self, rows: Vec<LinExpr>) {
        if !rows.is_empty() {
            self.blocks.push(ConeBlock { kind: ConeKind::Nonnegative, rows });
        }
    }

    /// Constrains `rows ∈ SOC`: `rows[0] ≥ ‖rows[1..]‖`.
    pub fn add_soc_block(&mut self, rows: Vec<LinExpr>) {
        assert!(rows.len() >= 2, "second-order cone needs at least 2 rows");
        self.blocks.push(ConeBlock { kind: ConeKind::SecondOrder, rows });
    }

    /// Constrains the symmetric matrix with upper triangle `tri` (column-major,
    /// `tri[j][i]` for `i ≤ j` flattened as `[(0,0),(0,1),(1,1),(0,2),…]`)
    /// to be positive semidefinite. Off-diagonal scaling is applied here.
    pub fn add_psd_block_from_triangle(
        &mut self,
        d: usize,
        tri: Vec<LinExpr>,
    ) -> Result<(), ConicError> {
        let expected = d * (d + 1) / 2;
        if tri.len() != expected {
            return Err(ConicError::BlockRowCount { expected, got: tri.len() });
        }
        let sqrt2 = std::f64::consts::SQRT_2;
        let mut rows = Vec::with_capacity(expected);
        let mut idx = 0;
        for j in 0..d {
            for i in 0..=j {
                let mut row = tri[idx].clone();
                if i != j {
                    for t in row.terms.iter_mut() {
                        t.1 *= sqrt2;
                    }
                    row.constant *= sqrt2;
                }
                rows.push(row);
                idx += 1;
            }
        }
        self.blocks.push(ConeBlock { kind: ConeKind::Psd(d), rows });
        Ok(())
    }

    /// Adds `t ≥ zᵀHz + 2fᵀz + shift` through a second-order cone, where `H`
    /// must be PSD. Minimizing `t` minimizes the quadratic up to the returned
    /// additive constant.
    pub fn quadratic_epigraph(
        &mut self,
        h: &DMatrix<f64>,
        f: &DVector<f64>,
        z: &[usize],
    ) -> Result<Epigraph, ConicError> {
        let n = z.len();
        assert_eq!(h.nrows(), n, "quadratic form size mismatch");
        assert_eq!(h.ncols(), n);
        assert_eq!(f.len(), n);

        let eig = nalgebra::SymmetricEigen::new(h.clone());
        let scale = eig.eigenvalues.iter().fold(1.0_f64, |m, &v| m.max(v.abs()));
        if let Some(min) = eig.eigenvalues.iter().cloned().reduce(f64::min) {
            if min < -1e-9 * scale {
                return Err(ConicError::NotPsd(min));
            }
        }

        // H = L Lᵀ with L = V √Λ restricted to nontrivial eigenvalues, and
        // c solving L c = f (exists iff f ∈ range(H)).
        let kept: Vec<usize> = (0..n).filter(|&i| eig.eigenvalues[i] > 1e-12 * scale).collect();
        let mut c = Vec::with_capacity(kept.len());
        let mut residual = f.clone();
        for &i in &kept {
            let v = eig.eigenvectors.column(i);
            let proj = v.dot(f);
            c.push(proj / eig.eigenvalues[i].sqrt());
            residual -= v * proj;
        }
        let res_norm = residual.norm();
        if res_norm > 1e-8 * (1.0 + f.norm()) {
            return Err(ConicError::LinearTermOutsideRange(res_norm));
        }

        let t_var = self.add_var();
        let mut rows = Vec::with_capacity(kept.len() + 2);
        let mut head = LinExpr::constant(0.5);
        head.push(t_var, 0.5);
        rows.push(head);
        let mut anti = LinExpr::constant(0.5);
        anti.push(t_var, -0.5);
        rows.push(anti);
        for (pos, &i) in kept.iter().enumerate() {
            let sq = eig.eigenvalues[i].sqrt();
            let mut row = LinExpr::constant(c[pos]);
            for (r, &zv) in z.iter().enumerate() {
                row.push(zv, sq * eig.eigenvectors[(r, i)]);
            }
            rows.push(row);
        }
        self.add_soc_block(rows);
        let constant_shift: f64 = c.iter().map(|v| v * v).sum();
        Ok(Epigraph { t_var, constant_shift })
    }

    fn validate(&self) -> Result<(), ConicError> {
        let check = |rows: &[LinExpr]| -> Result<(), ConicError> {
            for row in rows {
                for &(v, _) in &row.terms {
                    if v >= self.num_vars {
                        return Err(ConicError::VariableOutOfRange { var: v, num_vars: self.num_vars });
                    }
                }
            }
            Ok(())
        };
        check(&self.equalities)?;
        for b in &self.blocks {
            let expected = match b.kind {
                ConeKind::Psd(d) => d * (d + 1) / 2,
                _ => b.rows.len(),
            };
            if b.rows.len() != expected {
                return Err(ConicError::BlockRowCount { expected, got: b.rows.len() });
            }
            check(&b.rows)?;
        }
        Ok(())
    }

    /// Solves the program at scalar tolerance `tol`.
    pub fn solve(&self, tol: f64) -> SolveReport {
        self.solve_with(&SolverOptions::from_tol(tol))
    }

    /// Solves with explicit tolerance options.
    pub fn solve_with(&self, opts: &SolverOptions) -> SolveReport {
        if let Err(e) = self.validate() {
            panic!("malformed conic program: {e}");
        }

        // Row layout: equalities first, then cone blocks in insertion order.
        // Clarabel convention: A x + s = b with s ∈ K, so a row
        // `expr ∈ K` becomes A = -coeffs, b = +constant.
        let mut triplets: Vec<(usize, usize, f64)> = Vec::new();
        let mut b: Vec<f64> = Vec::new();
        let mut cones: Vec<SupportedConeT<f64>> = Vec::new();
        let mut row_idx = 0usize;

        if !self.equalities.is_empty() {
            for eq in &self.equalities {
                for &(v, c) in &eq.terms {
                    triplets.push((row_idx, v, c));
                }
                b.push(-eq.constant);
                row_idx += 1;
            }
            cones.push(ZeroConeT(self.equalities.len()));
        }
        for block in &self.blocks {
            for row in &block.rows {
                for &(v, c) in &row.terms {
                    triplets.push((row_idx, v, -c));
                }
                b.push(row.constant);
                row_idx += 1;
            }
            cones.push(match block.kind {
                ConeKind::Nonnegative => NonnegativeConeT(block.rows.len()),
                ConeKind::SecondOrder => SecondOrderConeT(block.rows.len()),
                ConeKind::Psd(d) => PSDTriangleConeT(d),
            });
        }

        let a = csc_from_triplets(row_idx, self.num_vars, &mut triplets);
        let p = CscMatrix::zeros((self.num_vars, self.num_vars));
        let settings = DefaultSettingsBuilder::default()
            .verbose(false)
            .tol_feas(opts.tol_feas)
            .tol_gap_abs(opts.tol_gap_abs)
            .tol_gap_rel(opts.tol_gap_rel)
            .max_iter(opts.max_iter)
            .build()
            .expect("solver settings");

        let mut solver: DefaultSolver<f64> =
            match DefaultSolver::new(&p, &self.objective, &a, &b, &cones, settings) {
                Ok(s) => s,
                Err(_) => {
                    return SolveReport {
                        status: SolveStatus::NumericalFailure,
                        primal: None,
                        dual: None,
                        objective: f64::NAN,
                        iterations: 0,
                        solve_time_s: 0.0,
                    }
                }
            };
        solver.solve();
        let sol = &solver.solution;
        let status = match sol.status {
            SolverStatus::Solved => SolveStatus::Optimal,
            SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => {
                SolveStatus::Infeasible
            }
            SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => {
                SolveStatus::Unbounded
            }
            _ => SolveStatus::NumericalFailure,
        };
        SolveReport {
            status,
            primal: (status == SolveStatus::Optimal).then(|| sol.x.clone()),
            dual: (status == SolveStatus::Optimal).then(|| sol.z.clone()),
            objective: if status == SolveStatus::Optimal { sol.obj_val } else { f64::NAN },
            iterations: sol.iterations,
            solve_time_s: sol.solve_time,
        }
    }

    /// Largest constraint violation of `x`, recomputed from the stored program
    /// (independent of the backend's own residuals).
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst = 0.0_f64;
        for eq in &self.equalities {
            worst = worst.max(eq.eval(x).abs());
        }
        for block in &self.blocks {
            let s: Vec<f64> = block.rows.iter().map(|r| r.eval(x)).collect();
            let v = match block.kind {
                ConeKind::Nonnegative => s.iter().fold(0.0_f64, |w, &si| w.max(-si)),
                ConeKind::SecondOrder => {
                    let tail: f64 = s[1..].iter().map(|v| v * v).sum::<f64>().sqrt();
                    (tail - s[0]).max(0.0)
                }
                ConeKind::Psd(d) => {
                    let m = sym_from_svec(d, &s);
                    let eig = nalgebra::SymmetricEigen::new(m);
                    eig.eigenvalues.iter().fold(0.0_f64, |w, &l| w.max(-l))
                }
            };
            worst = worst.max(v);
        }
        worst
    }

    /// Objective value `cᵀx`.
    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    /// Writes the program in a line-oriented text form, one cone block per
    /// record, for cross-checking against external solvers.
    pub fn dump(&self, w: &mut impl std::io::Write) -> std::io::Result<()> {
        writeln!(w, "conic-program vars={}", self.num_vars)?;
        write!(w, "objective")?;
        for (i, c) in self.objective.iter().enumerate() {
            if *c != 0.0 {
                write!(w, " {i}:{c}")?;
            }
        }
        writeln!(w)?;
        let write_rows = |w: &mut dyn std::io::Write, rows: &[LinExpr]| -> std::io::Result<()> {
            for row in rows {
                write!(w, "row")?;
                for &(v, c) in &row.terms {
                    write!(w, " {v}:{c}")?;
                }
                writeln!(w, " | {}", row.constant)?;
            }
            Ok(())
        };
        writeln!(w, "equalities rows={}", self.equalities.len())?;
        write_rows(w, &self.equalities)?;
        for block in &self.blocks {
            match block.kind {
                ConeKind::Nonnegative => writeln!(w, "block nonnegative rows={}", block.rows.len())?,
                ConeKind::SecondOrder => writeln!(w, "block second-order rows={}", block.rows.len())?,
                ConeKind::Psd(d) => writeln!(w, "block psd d={d} rows={}", block.rows.len())?,
            }
            write_rows(w, &block.rows)?;
        }
        Ok(())
    }
}

/// Builds a column-compressed matrix from (row, col, value) triplets,
/// summing duplicates. Sorting makes the result deterministic.
fn csc_from_triplets(m: usize, n: usize, triplets: &mut Vec<(usize, usize, f64)>) -> CscMatrix<f64> {
    triplets.sort_by(|a, b| (a.1, a.0).cmp(&(b.1, b.0)));
    let mut colptr = vec![0usize; n + 1];
    let mut rowval: Vec<usize> = Vec::with_capacity(triplets.len());
    let mut nzval: Vec<f64> = Vec::with_capacity(triplets.len());
    let mut last: Option<(usize, usize)> = None;
    for &(r, c, v) in triplets.iter() {
        if last == Some((c, r)) {
            *nzval.last_mut().unwrap() += v;
        } else {
            rowval.push(r);
            nzval.push(v);
            colptr[c + 1] += 1;
            last = Some((c, r));
        }
    }
    for c in 0..n {
        colptr[c + 1] += colptr[c];
    }
    CscMatrix::new(m, n, colptr, rowval, nzval)
}

/// Reconstructs the symmetric matrix from its scaled-triangle vectorization.
pub fn sym_from_svec(d: usize, s: &[f64]) -> DMatrix<f64> {
    let sqrt2 = std::f64::consts::SQRT_2;
    let mut m = DMatrix::zeros(d, d);
    let mut idx = 0;
    for j in 0..d {
        for i in 0..=j {
            if i == j {
                m[(i, j)] = s[idx];
            } else {
                m[(i, j)] = s[idx] / sqrt2;
                m[(j, i)] = s[idx] / sqrt2;
            }
            idx += 1;
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn one_dim_lp() {
        // min x s.t. x >= 1
        let mut p = ConicProgram::new();
        let x = p.add_var();
        p.add_objective(x, 1.0);
        let mut row = LinExpr::var(x);
        row.offset(-1.0);
        p.add_nonneg(row);
        let rep = p.solve(1e-9);
        assert_eq!(rep.status, SolveStatus::Optimal);
        assert_abs_diff_eq!(rep.primal_or("lp")[x], 1.0, epsilon = 1e-7);
        assert!(rep.dual.is_some());
    }

    #[test]
    fn soc_epigraph_of_norm_at_minimizer() {
        // min t s.t. (t; x - a) in SOC with a = (3,4); embedding x = a gives t = 0.
        let mut p = ConicProgram::new();
        let t = p.add_var();
        let x = p.add_vars(2);
        p.add_objective(t, 1.0);
        let mut r1 = LinExpr::var(x.start);
        r1.offset(-3.0);
        let mut r2 = LinExpr::var(x.start + 1);
        r2.offset(-4.0);
        p.add_soc_block(vec![LinExpr::var(t), r1, r2]);
        let rep = p.solve(1e-9);
        assert_eq!(rep.status, SolveStatus::Optimal);
        assert_abs_diff_eq!(rep.objective, 0.0, epsilon = 1e-7);
    }

    #[test]
    fn psd_eigenvalue_bound() {
        // max beta s.t. beta*I <= diag(2,5); eigenvalue by inspection gives 2,
        // cross-checked by scalarizing into two linear inequalities.
        let mut p = ConicProgram::new();
        let beta = p.add_var();
        p.add_objective(beta, -1.0); // maximize
        let tri = vec![
            {
                let mut e = LinExpr::constant(2.0);
                e.push(beta, -1.0);
                e
            },
            LinExpr::constant(0.0),
            {
                let mut e = LinExpr::constant(5.0);
                e.push(beta, -1.0);
                e
            },
        ];
        p.add_psd_block_from_triangle(2, tri).unwrap();
        let rep = p.solve(1e-9);
        assert_eq!(rep.status, SolveStatus::Optimal);
        let b = rep.primal_or("sdp")[beta];
        assert_abs_diff_eq!(b, 2.0, epsilon = 1e-6);

        // scalarized oracle
        let mut lp = ConicProgram::new();
        let bv = lp.add_var();
        lp.add_objective(bv, -1.0);
        for diag in [2.0, 5.0] {
            let mut e = LinExpr::constant(diag);
            e.push(bv, -1.0);
            lp.add_nonneg(e);
        }
        let lp_rep = lp.solve(1e-9);
        assert_abs_diff_eq!(lp_rep.primal_or("lp")[bv], b, epsilon = 1e-6);
    }

    #[test]
    fn epigraph_examples() {
        // H = I (2D), f = 0, z = (3,4) forces t >= 25.
        let check = |h: DMatrix<f64>, z_val: [f64; 2], want: f64| {
            let mut p = ConicProgram::new();
            let z = p.add_vars(2);
            let zs: Vec<usize> = z.clone().collect();
            let epi = p.quadratic_epigraph(&h, &DVector::zeros(2), &zs).unwrap();
            assert_eq!(epi.constant_shift, 0.0);
            p.add_objective(epi.t_var, 1.0);
            for (i, v) in zs.iter().enumerate() {
                let mut e = LinExpr::var(*v);
                e.offset(-z_val[i]);
                p.add_equality(e);
            }
            let rep = p.solve(1e-9);
            assert_eq!(rep.status, SolveStatus::Optimal);
            assert_abs_diff_eq!(rep.primal_or("epi")[epi.t_var], want, epsilon = 1e-6);
        };
        check(DMatrix::identity(2, 2), [3.0, 4.0], 25.0);
        check(DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 0.0])), [1.0, 7.0], 4.0);
        check(DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]), [1.0, 1.0], 6.0);
    }

    #[test]
    fn epigraph_rejects_indefinite() {
        let mut p = ConicProgram::new();
        let z = p.add_vars(2);
        let zs: Vec<usize> = z.collect();
        let h = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(matches!(
            p.quadratic_epigraph(&h, &DVector::zeros(2), &zs),
            Err(ConicError::NotPsd(_))
        ));
    }

    #[test]
    fn repeat_solve_is_deterministic() {
        let mut p = ConicProgram::new();
        let x = p.add_vars(3);
        for v in x.clone() {
            p.add_objective(v, 1.0 + v as f64);
            let mut e = LinExpr::var(v);
            e.offset(1.0);
            p.add_nonneg(e);
        }
        let mut sum = LinExpr::constant(-1.0);
        for v in x {
            sum.push(v, 1.0);
        }
        p.add_equality(sum);
        let a = p.solve(1e-9);
        let b = p.solve(1e-9);
        assert_eq!(a.status, b.status);
        assert_eq!(a.objective, b.objective);
        assert_eq!(a.primal, b.primal);
        assert!(p.max_violation(a.primal_or("det")) <= 10.0 * 1e-9);
    }

    #[test]
    fn unbounded_and_infeasible_classified() {
        let mut p = ConicProgram::new();
        let x = p.add_var();
        p.add_objective(x, -1.0);
        let mut e = LinExpr::var(x);
        e.offset(1.0);
        p.add_nonneg(e); // x >= -1, maximize x: unbounded
        assert_eq!(p.solve(1e-8).status, SolveStatus::Unbounded);

        let mut q = ConicProgram::new();
        let y = q.add_var();
        let mut lo = LinExpr::var(y);
        lo.offset(-2.0); // y >= 2
        q.add_nonneg(lo);
        let mut hi = LinExpr::term(y, -1.0);
        hi.offset(1.0); // y <= 1
        q.add_nonneg(hi);
        assert_eq!(q.solve(1e-8).status, SolveStatus::Infeasible);
    }

    #[test]
    fn dump_lists_blocks() {
        let mut p = ConicProgram::new();
        let x = p.add_vars(2);
        p.add_objective(x.start, 1.0);
        p.add_equality(LinExpr::var(x.start));
        p.add_nonneg(LinExpr::var(x.start + 1));
        let mut buf = Vec::new();
        p.dump(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.contains("conic-program vars=2"));
        assert!(text.contains("equalities rows=1"));
        assert!(text.contains("block nonnegative rows=1"));
    }

    #[test]
    fn svec_round_trip() {
        let s = [1.0, std::f64::consts::SQRT_2 * 0.5, 2.0];
        let m = sym_from_svec(2, &s);
        assert_abs_diff_eq!(m[(0, 1)], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(m[(1, 0)], 0.5, epsilon = 1e-15);
    }
}
