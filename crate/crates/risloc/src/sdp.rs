//! Generic conic-program interface: a linear objective over real variables
//! subject to linear equalities, sign constraints, and linear matrix
//! inequalities. Lowered to the Clarabel interior-point solver; nothing
//! outside this module talks to the solver directly.

use std::collections::BTreeMap;
use std::time::Instant;

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus as ClarabelStatus,
    SupportedConeT,
};
// Activates the `system` feature of the BLAS backend Clarabel links against.
use openblas_src as _;

use crate::error::{Error, Result};

/// Outcome classification shared by every solve in the crate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverStatus {
    Optimal,
    /// Solver stopped early; the returned iterate is its best effort.
    Inaccurate,
    Infeasible,
}

/// Sparse symmetric matrix stored as upper-triangle `(i, j, value)` entries
/// with `i <= j`.
#[derive(Debug, Clone)]
pub(crate) struct SparseSymMat {
    pub dim: usize,
    pub entries: Vec<(usize, usize, f64)>,
}

impl SparseSymMat {
    pub fn zeros(dim: usize) -> Self {
        SparseSymMat {
            dim,
            entries: Vec::new(),
        }
    }

    pub fn push(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(i <= j && j < self.dim);
        if v != 0.0 {
            self.entries.push((i, j, v));
        }
    }
}

/// Affine matrix expression `constant + sum_k z_{var_k} coeff_k` constrained
/// to the PSD cone.
#[derive(Debug, Clone)]
pub(crate) struct LinearMatrixInequality {
    pub dim: usize,
    pub constant: SparseSymMat,
    pub coeffs: Vec<(usize, SparseSymMat)>,
}

/// Conic program `min q^T z` subject to equalities, nonnegative variables,
/// and LMIs.
pub(crate) struct ConicProgram {
    n_vars: usize,
    objective: Vec<f64>,
    equalities: Vec<(Vec<(usize, f64)>, f64)>,
    nonneg_vars: Vec<usize>,
    lmis: Vec<LinearMatrixInequality>,
}

/// Solver output: classified status, the variable vector, the objective at
/// that point, and the pure solve time (problem assembly excluded).
pub(crate) struct ConicSolution {
    pub status: SolverStatus,
    pub variables: Vec<f64>,
    pub objective: f64,
    pub solve_seconds: f64,
}

const SQRT2: f64 = std::f64::consts::SQRT_2;

/// Column-major upper-triangle index of entry `(i, j)`, `i <= j`.
fn svec_index(i: usize, j: usize) -> usize {
    j * (j + 1) / 2 + i
}

fn svec_len(dim: usize) -> usize {
    dim * (dim + 1) / 2
}

impl ConicProgram {
    pub fn new(n_vars: usize) -> Self {
        ConicProgram {
            n_vars,
            objective: vec![0.0; n_vars],
            equalities: Vec::new(),
            nonneg_vars: Vec::new(),
            lmis: Vec::new(),
        }
    }

    pub fn set_objective_term(&mut self, var: usize, coeff: f64) {
        self.objective[var] = coeff;
    }

    pub fn add_equality(&mut self, terms: Vec<(usize, f64)>, rhs: f64) {
        self.equalities.push((terms, rhs));
    }

    pub fn add_nonneg_var(&mut self, var: usize) {
        self.nonneg_vars.push(var);
    }

    pub fn add_lmi(&mut self, lmi: LinearMatrixInequality) {
        self.lmis.push(lmi);
    }

    /// Lowers to Clarabel's `A z + s = b, s in K` form and solves.
    ///
    /// Row layout: zero cone (equalities), nonnegative cone, then one PSD
    /// triangle block per LMI with the usual sqrt(2) off-diagonal scaling.
    pub fn solve(&self, tolerance: f64, max_iterations: u32) -> Result<ConicSolution> {
        let n = self.n_vars;
        let mut rows = 0usize;
        let mut cones: Vec<SupportedConeT<f64>> = Vec::new();

        let eq_offset = rows;
        if !self.equalities.is_empty() {
            rows += self.equalities.len();
            cones.push(SupportedConeT::ZeroConeT(self.equalities.len()));
        }
        let nn_offset = rows;
        if !self.nonneg_vars.is_empty() {
            rows += self.nonneg_vars.len();
            cones.push(SupportedConeT::NonnegativeConeT(self.nonneg_vars.len()));
        }
        let mut lmi_offsets = Vec::with_capacity(self.lmis.len());
        for lmi in &self.lmis {
            lmi_offsets.push(rows);
            rows += svec_len(lmi.dim);
            cones.push(SupportedConeT::PSDTriangleConeT(lmi.dim));
        }

        // b - A z in K, i.e. s = b - A z.
        let mut b = vec![0.0; rows];
        let mut triplets: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        let mut add = |row: usize, col: usize, v: f64| {
            if v != 0.0 {
                *triplets.entry((col, row)).or_insert(0.0) += v;
            }
        };

        for (k, (terms, rhs)) in self.equalities.iter().enumerate() {
            b[eq_offset + k] = *rhs;
            for &(var, coeff) in terms {
                add(eq_offset + k, var, coeff);
            }
        }
        for (k, &var) in self.nonneg_vars.iter().enumerate() {
            // z_var >= 0  <=>  s = z_var in the nonnegative cone.
            add(nn_offset + k, var, -1.0);
        }
        for (lmi, &offset) in self.lmis.iter().zip(&lmi_offsets) {
            for &(i, j, v) in &lmi.constant.entries {
                let scale = if i == j { 1.0 } else { SQRT2 };
                b[offset + svec_index(i, j)] += v * scale;
            }
            for (var, coeff) in &lmi.coeffs {
                for &(i, j, v) in &coeff.entries {
                    let scale = if i == j { 1.0 } else { SQRT2 };
                    add(offset + svec_index(i, j), *var, -v * scale);
                }
            }
        }

        // Triplet map is keyed (col, row): already CSC ordered.
        let mut colptr = vec![0usize; n + 1];
        let mut rowval = Vec::with_capacity(triplets.len());
        let mut nzval = Vec::with_capacity(triplets.len());
        for (&(col, row), &v) in &triplets {
            colptr[col + 1] += 1;
            rowval.push(row);
            nzval.push(v);
        }
        for c in 0..n {
            colptr[c + 1] += colptr[c];
        }
        let a = CscMatrix::new(rows, n, colptr, rowval, nzval);
        let p = CscMatrix::zeros((n, n));

        let settings = DefaultSettingsBuilder::default()
            .verbose(std::env::var_os("RISLOC_SDP_VERBOSE").is_some())
            .max_iter(max_iterations)
            .tol_gap_abs(tolerance)
            .tol_gap_rel(tolerance)
            .tol_feas(tolerance)
            .build()
            .map_err(|e| Error::Solver(format!("settings: {e}")))?;

        let mut solver = DefaultSolver::new(&p, &self.objective, &a, &b, &cones, settings);
        let start = Instant::now();
        solver.solve();
        let solve_seconds = start.elapsed().as_secs_f64();

        let status = match solver.solution.status {
            ClarabelStatus::Solved => SolverStatus::Optimal,
            ClarabelStatus::PrimalInfeasible
            | ClarabelStatus::DualInfeasible
            | ClarabelStatus::AlmostPrimalInfeasible
            | ClarabelStatus::AlmostDualInfeasible => SolverStatus::Infeasible,
            _ => SolverStatus::Inaccurate,
        };
        Ok(ConicSolution {
            status,
            variables: solver.solution.x.clone(),
            objective: solver.solution.obj_val,
            solve_seconds,
        })
    }
}
