//! [`ConvexSolver`] backed by the Clarabel interior-point solver.
//!
//! Each active Hermitian block `W = X + jY` is stored as `n^2` reals
//! (diagonal, then `Re W_ij` and `Im W_ij` for `i < j`) and constrained
//! through the real embedding `[[X, -Y], [Y, X]]` in the PSD cone. A log
//! row `log2(1 + q) >= g` becomes the exponential-cone point
//! `(ln2 * g - ln c, 1, (1 + q) / c)` with a per-user scale `c`. Channels
//! are rescaled by `sqrt(P) / sigma` and blocks by `1 / P`, so the power
//! row and the linearized terms are of order one.

use clarabel::algebra::CscMatrix;
use clarabel::solver::{DefaultSettings, DefaultSolver, IPSolver, SolverStatus, SupportedConeT};
use marsma_core::linalg::{hermitian_eigen, CMatrix};
use marsma_core::subproblem::{
    Constraint, ConvexProgram, ConvexSolver, LiftedSolution, LogFamily, ScalarVar, SolveError,
};
use marsma_core::Complex64;

use std::f64::consts::LN_2;

/// Clarabel settings used for every subproblem.
#[derive(Debug, Clone)]
pub struct ClarabelSolver {
    pub max_iter: u32,
    pub tolerance: f64,
    /// KKT static regularization; Clarabel's 1e-8 stalls on late SCA
    /// iterates whose Taylor slopes span several decades.
    pub regularization: f64,
    /// Regularization of the single retry after a failed solve.
    pub retry_regularization: Option<f64>,
    pub verbose: bool,
}

impl Default for ClarabelSolver {
    fn default() -> Self {
        Self {
            max_iter: 200,
            tolerance: 1e-6,
            regularization: 1e-7,
            retry_regularization: Some(1e-6),
            verbose: false,
        }
    }
}

/// Sparse constraint matrix assembled row by row.
#[derive(Default)]
struct Rows {
    i: Vec<usize>,
    j: Vec<usize>,
    v: Vec<f64>,
    b: Vec<f64>,
}

impl Rows {
    /// Appends the row `s = b - a.x`.
    fn push(&mut self, a: &[(usize, f64)], b: f64) {
        let r = self.b.len();
        for &(j, v) in a {
            if v != 0.0 {
                self.i.push(r);
                self.j.push(j);
                self.v.push(v);
            }
        }
        self.b.push(b);
    }
}

/// Column layout of the decision vector.
struct Layout {
    n: usize,
    /// First column of each block, `None` when the block is fixed at zero.
    block_start: Vec<Option<usize>>,
    scalar_start: usize,
    n_vars: usize,
}

impl Layout {
    fn new(program: &ConvexProgram, blocks_free: bool) -> Self {
        let n = program.n_antennas;
        let mut next = 0;
        let block_start = program
            .active_blocks
            .iter()
            .map(|&a| {
                (a && blocks_free).then(|| {
                    let s = next;
                    next += n * n;
                    s
                })
            })
            .collect();
        Self {
            n,
            block_start,
            scalar_start: next,
            n_vars: next + program.scalars.len(),
        }
    }

    fn diag(&self, start: usize, i: usize) -> usize {
        start + i
    }

    /// Columns of `Re W_ij` and `Im W_ij` for `i < j`.
    fn off(&self, start: usize, i: usize, j: usize) -> (usize, usize) {
        let n = self.n;
        let pairs = n * (n - 1) / 2;
        // index of (i, j) in row-major order of the strict upper triangle
        let idx = i * n - i * (i + 1) / 2 + (j - i - 1);
        (start + n + idx, start + n + pairs + idx)
    }
}

/// Coefficients of `h^H W h` over the columns of one block.
fn quad_coefficients(layout: &Layout, start: usize, h: &[Complex64], out: &mut Vec<(usize, f64)>) {
    let n = layout.n;
    for i in 0..n {
        out.push((layout.diag(start, i), h[i].norm_sqr()));
        for j in i + 1..n {
            let c = h[i].conj() * h[j];
            let (re, im) = layout.off(start, i, j);
            out.push((re, 2.0 * c.re));
            out.push((im, -2.0 * c.im));
        }
    }
}

impl ClarabelSolver {
    fn settings(&self) -> DefaultSettings<f64> {
        DefaultSettings {
            max_iter: self.max_iter,
            verbose: self.verbose,
            tol_gap_abs: self.tolerance,
            tol_gap_rel: self.tolerance,
            tol_feas: self.tolerance,
            static_regularization_constant: self.regularization,
            ..DefaultSettings::default()
        }
    }

    fn solve_raw(&self, program: &ConvexProgram) -> Result<LiftedSolution, SolveError> {
        let n = program.n_antennas;
        let sigma2 = program.noise_power;
        let budget = program.power_budget;
        if !(sigma2 > 0.0) || !(budget >= 0.0) || n == 0 {
            return Err(SolveError::Setup(format!(
                "need n > 0, noise > 0, budget >= 0 (n={n}, noise={sigma2}, budget={budget})"
            )));
        }
        let blocks_free = budget > 0.0;
        let layout = Layout::new(program, blocks_free);
        let scale = if blocks_free { budget.sqrt() } else { 1.0 } / sigma2.sqrt();
        let channels: Vec<Vec<Complex64>> = program
            .channels
            .iter()
            .map(|h| h.iter().map(|x| x * scale).collect())
            .collect();
        let col_of = |v: ScalarVar| -> Result<usize, SolveError> {
            program
                .scalars
                .iter()
                .position(|&s| s == v)
                .map(|p| layout.scalar_start + p)
                .ok_or_else(|| SolveError::Setup(format!("unknown scalar {v:?}")))
        };

        let mut rows = Rows::default();
        let mut cones = Vec::new();
        let mut nonneg: Vec<(Vec<(usize, f64)>, f64)> = Vec::new();
        let mut exp_rows: Vec<[(Vec<(usize, f64)>, f64); 3]> = Vec::new();
        let mut psd = Vec::new();

        for con in &program.constraints {
            match con {
                Constraint::Power => {
                    if blocks_free {
                        let a: Vec<_> = layout
                            .block_start
                            .iter()
                            .flatten()
                            .flat_map(|&s| (0..n).map(move |i| (s + i, 1.0)))
                            .collect();
                        nonneg.push((a, 1.0));
                    }
                }
                Constraint::NonNegative(v) => nonneg.push((vec![(col_of(*v)?, -1.0)], 0.0)),
                Constraint::Psd(i) => {
                    if let Some(Some(s)) = layout.block_start.get(*i) {
                        psd.push(*s);
                    }
                }
                Constraint::Log(l) => {
                    let h = channels
                        .get(l.user)
                        .ok_or_else(|| SolveError::Setup(format!("user {}", l.user)))?;
                    // s1 = ln2 * (slope sigma2 q_lin - sum c v) - ln2 (log2 sigma2 + constant)
                    let mut lin = Vec::new();
                    for &b in &l.lin_blocks {
                        if let Some(Some(s)) = layout.block_start.get(b) {
                            quad_coefficients(&layout, *s, h, &mut lin);
                        }
                    }
                    let mut a1: Vec<(usize, f64)> = lin
                        .into_iter()
                        .map(|(j, c)| (j, -LN_2 * l.slope * sigma2 * c))
                        .collect();
                    for &(v, c) in &l.terms {
                        a1.push((col_of(v)?, LN_2 * c));
                    }
                    // dividing 1 + q by c keeps the third entry of order one
                    let c = 1.0 + h.iter().map(|x| x.norm_sqr()).sum::<f64>();
                    let b1 = -(sigma2.ln() + LN_2 * l.constant + c.ln());
                    let mut q = Vec::new();
                    for &b in &l.log_blocks {
                        if let Some(Some(s)) = layout.block_start.get(b) {
                            quad_coefficients(&layout, *s, h, &mut q);
                        }
                    }
                    let a3 = q.into_iter().map(|(j, v)| (j, -v / c)).collect();
                    exp_rows.push([(a1, b1), (Vec::new(), 1.0), (a3, 1.0 / c)]);
                }
            }
        }

        if !nonneg.is_empty() {
            cones.push(SupportedConeT::NonnegativeConeT(nonneg.len()));
            for (a, b) in &nonneg {
                rows.push(a, *b);
            }
        }
        for e in &exp_rows {
            cones.push(SupportedConeT::ExponentialConeT());
            for (a, b) in e {
                rows.push(a, *b);
            }
        }
        for &s in &psd {
            cones.push(SupportedConeT::PSDTriangleConeT(2 * n));
            push_embedding(&mut rows, &layout, s);
        }

        let m = rows.b.len();
        let a = CscMatrix::new_from_triplets(m, layout.n_vars, rows.i, rows.j, rows.v);
        let p = CscMatrix::zeros((layout.n_vars, layout.n_vars));
        let mut q = vec![0.0; layout.n_vars];
        q[col_of(ScalarVar::Slack)?] = -1.0;

        let mut solver = DefaultSolver::new(&p, &q, &a, &rows.b, &cones, self.settings())
            .map_err(|e| SolveError::Setup(format!("{e:?}")))?;
        solver.solve();
        let sol = &solver.solution;
        match sol.status {
            // stalled runs usually end next to the optimum; the residual
            // check after polishing decides
            SolverStatus::Solved
            | SolverStatus::AlmostSolved
            | SolverStatus::InsufficientProgress => {}
            other => return Err(SolveError::Status(format!("{other:?}"))),
        }

        let mut out = LiftedSolution::zeros(n, program.n_clusters, program.n_users());
        for (b, start) in layout.block_start.iter().enumerate() {
            if let Some(s) = *start {
                let x = &sol.x;
                let m = &mut out.blocks[b];
                for i in 0..n {
                    m[(i, i)] = Complex64::new(x[layout.diag(s, i)] * budget, 0.0);
                    for j in i + 1..n {
                        let (re, im) = layout.off(s, i, j);
                        let w = Complex64::new(x[re], x[im]) * budget;
                        m[(i, j)] = w;
                        m[(j, i)] = w.conj();
                    }
                }
            }
        }
        for (p, &v) in program.scalars.iter().enumerate() {
            out.set_scalar(v, sol.x[layout.scalar_start + p]);
        }
        Ok(out)
    }
}

/// Rows `s = svec([[X, -Y], [Y, X]])` of one block: upper triangle,
/// column-major, off-diagonal entries scaled by `sqrt(2)`.
fn push_embedding(rows: &mut Rows, layout: &Layout, start: usize) {
    let n = layout.n;
    let sqrt2 = std::f64::consts::SQRT_2;
    // entry (r, c) of the embedding as (column, coefficient), if nonzero
    let entry = |r: usize, c: usize| -> Option<(usize, f64)> {
        let (rb, ri) = (r / n, r % n);
        let (cb, ci) = (c / n, c % n);
        if rb == cb {
            // X block
            if ri == ci {
                Some((layout.diag(start, ri), 1.0))
            } else {
                let (i, j) = (ri.min(ci), ri.max(ci));
                Some((layout.off(start, i, j).0, 1.0))
            }
        } else if ri == ci {
            None
        } else {
            // Y_ij = Im W_ij with Y antisymmetric; entry (r, c) in the
            // top-right block is -Y_{ri, ci}
            let (i, j) = (ri.min(ci), ri.max(ci));
            let sign = if ri < ci { 1.0 } else { -1.0 };
            let y = sign * if rb == 1 { 1.0 } else { -1.0 };
            Some((layout.off(start, i, j).1, y))
        }
    };
    for c in 0..2 * n {
        for r in 0..=c {
            let w = if r == c { 1.0 } else { sqrt2 };
            match entry(r, c) {
                Some((col, coef)) => rows.push(&[(col, -w * coef)], 0.0),
                None => rows.push(&[], 0.0),
            }
        }
    }
}

/// Pulls a numerically solved point back inside the tolerances: blocks are
/// projected onto the PSD cone and the power budget, rate shares clamped
/// at zero and shrunk where a common-rate row is short, and the slack set
/// to the smallest private-row value.
fn polish(program: &ConvexProgram, sol: &mut LiftedSolution) {
    for (b, &active) in program.active_blocks.iter().enumerate() {
        let m = &mut sol.blocks[b];
        if !active {
            m.fill(Complex64::new(0.0, 0.0));
            continue;
        }
        let (values, vectors) = hermitian_eigen(m);
        if values.iter().any(|&v| v < 0.0) {
            let n = m.nrows();
            let mut fixed = CMatrix::zeros(n, n);
            for (k, &v) in values.iter().enumerate() {
                if v > 0.0 {
                    let u = vectors.column(k);
                    fixed += u * u.adjoint() * Complex64::new(v, 0.0);
                }
            }
            *m = fixed;
        }
    }
    let power = sol.total_power();
    if power > program.power_budget {
        let f = if power > 0.0 {
            program.power_budget / power
        } else {
            0.0
        };
        for m in &mut sol.blocks {
            *m *= Complex64::new(f, 0.0);
        }
    }
    for &v in &program.scalars {
        if v != ScalarVar::Slack && sol.scalar(v) < 0.0 {
            sol.set_scalar(v, 0.0);
        }
    }
    for l in program.log_constraints() {
        if l.family == LogFamily::Private {
            continue;
        }
        let short = -l.lhs(program, sol);
        if short > 0.0 {
            let total: f64 = l.terms.iter().map(|&(v, _)| sol.scalar(v)).sum();
            if total > 0.0 {
                let f = (1.0 - short / total).max(0.0);
                for &(v, _) in &l.terms {
                    sol.set_scalar(v, sol.scalar(v) * f);
                }
            }
        }
    }
    sol.slack = 0.0;
    let z = program
        .log_constraints()
        .filter(|l| l.family == LogFamily::Private)
        .map(|l| {
            let c = l
                .terms
                .iter()
                .find(|(v, _)| *v == ScalarVar::Slack)
                .map_or(-1.0, |&(_, c)| c);
            l.lhs(program, sol) / -c
        })
        .fold(f64::INFINITY, f64::min);
    sol.slack = if z.is_finite() { z } else { 0.0 };
}

impl ClarabelSolver {
    fn solve_once(&self, program: &ConvexProgram) -> Result<LiftedSolution, SolveError> {
        let mut sol = self.solve_raw(program)?;
        polish(program, &mut sol);
        let r = program.residuals(&sol);
        if r.within(program.power_budget) {
            Ok(sol)
        } else {
            Err(SolveError::Residual(format!("{r:?}")))
        }
    }
}

impl ConvexSolver for ClarabelSolver {
    fn solve(&self, program: &ConvexProgram) -> Result<LiftedSolution, SolveError> {
        match (self.solve_once(program), self.retry_regularization) {
            (Err(first), Some(reg)) => {
                let retry = ClarabelSolver {
                    regularization: reg,
                    retry_regularization: None,
                    ..self.clone()
                };
                retry.solve_once(program).map_err(|_| first)
            }
            (out, _) => out,
        }
    }
}
