//! Lagrange-Newton SQP for block least-squares problems with linear
//! equality coupling,
//!
//! ```text
//! min  h/2 sum_i ||r_i(q_i)||^2   s.t.   sum_i A_i q_i^Gamma = 0,
//! ```
//!
//! using the Gauss-Newton Hessian `h J_i^T J_i`. The same code path serves
//! decomposed full-order states and reduced latent coordinates.

mod dd;

pub use dd::{dd_fom_solve, DdFomRun, FomStepProblem};

use std::io::Write;
use std::time::Instant;

use log::debug;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::linalg::SparseLu;
use crate::partition::CompatibilityMatrix;
use crate::sparse::CsrMatrix;

const KKT_REGULARIZATION: f64 = 1e-10;
const MAX_BACKTRACKS: usize = 40;

/// Residual and Jacobian of one block at a given iterate.
#[derive(Debug, Clone)]
pub struct BlockEval {
    pub residual: Vec<f64>,
    pub jacobian: CsrMatrix,
}

/// A block least-squares problem with compatibility constraints acting on
/// the trailing (interface) part of each block vector.
pub trait ConstrainedLsProblem: Sync {
    fn n_blocks(&self) -> usize;

    /// Length of block `i`'s variable vector.
    fn block_dim(&self, i: usize) -> usize;

    /// Index in block `i`'s vector at which the constrained part starts.
    fn interface_offset(&self, i: usize) -> usize;

    fn constraints(&self) -> &CompatibilityMatrix;

    /// Objective weight `h > 0`.
    fn scaling(&self) -> f64;

    fn residual(&self, i: usize, q: &[f64]) -> Result<Vec<f64>>;

    fn evaluate(&self, i: usize, q: &[f64]) -> Result<BlockEval>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SqpOptions {
    /// Stationarity tolerance on `||grad L||_inf`.
    pub tol_grad: f64,
    /// Tolerance on `||sum_i A_i q_i||_inf`.
    pub tol_con: f64,
    /// Optional extra requirement `||r||_2 <= tol_res`.
    pub tol_res: Option<f64>,
    pub max_iter: usize,
    pub ls_beta: f64,
    pub ls_c: f64,
    pub penalty: f64,
    /// Evaluate blocks on the rayon pool.
    pub parallel: bool,
}

impl Default for SqpOptions {
    fn default() -> Self {
        Self {
            tol_grad: 1e-8,
            tol_con: 1e-8,
            tol_res: None,
            max_iter: 20,
            ls_beta: 0.5,
            ls_c: 1e-4,
            penalty: 10.0,
            parallel: true,
        }
    }
}

impl SqpOptions {
    /// Defaults for decomposed full-order solves: the residual is also driven
    /// to the monolithic Newton tolerance `1e-10 sqrt(n_dofs)`.
    pub fn fom(n_dofs: usize) -> Self {
        Self {
            tol_res: Some(crate::fom::NEWTON_RTOL * (n_dofs as f64).sqrt()),
            ..Self::default()
        }
    }

    pub fn rom() -> Self {
        Self {
            max_iter: 50,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParams(m.to_string()));
        if !(self.tol_grad > 0.0) || !(self.tol_con > 0.0) {
            return bad("SQP tolerances must be positive");
        }
        if matches!(self.tol_res, Some(t) if !(t > 0.0)) {
            return bad("residual tolerance must be positive");
        }
        if self.max_iter == 0 {
            return bad("max_iter must be positive");
        }
        if !(self.ls_beta > 0.0 && self.ls_beta < 1.0) {
            return bad("ls_beta must lie in (0, 1)");
        }
        if !(self.ls_c > 0.0 && self.ls_c <= 0.5) {
            return bad("ls_c must lie in (0, 0.5]");
        }
        if !(self.penalty > 0.0) {
            return bad("merit penalty must be positive");
        }
        Ok(())
    }
}

/// One row of the per-iteration convergence log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationLog {
    pub iteration: usize,
    pub residual_norm: f64,
    pub violation: f64,
    pub stationarity: f64,
    /// Step length applied after this evaluation (0 once converged).
    pub step_length: f64,
}

/// Wall-clock split of a solve: `local` sums, per evaluation pass, the
/// slowest block; `global` covers the synchronized KKT phase.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveTiming {
    pub local: f64,
    pub global: f64,
}

impl SolveTiming {
    pub fn total(&self) -> f64 {
        self.local + self.global
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SqpResult {
    pub blocks: Vec<Vec<f64>>,
    pub multipliers: Vec<f64>,
    /// Number of evaluation passes, including the final converged one.
    pub iterations: usize,
    pub converged: bool,
    /// `||r||_2` over all blocks, unscaled.
    pub residual_norm: f64,
    pub violation: f64,
    pub stationarity: f64,
    pub log: Vec<IterationLog>,
    pub timing: SolveTiming,
}

/// Linearized KKT system in triplet form.
#[derive(Debug, Clone)]
pub struct KktSystem {
    pub n_primal: usize,
    pub n_dual: usize,
    pub entries: Vec<(usize, usize, f64)>,
    pub rhs: Vec<f64>,
    /// Positions in `entries` of the Hessian diagonal.
    diagonal: Vec<usize>,
}

impl KktSystem {
    pub fn dim(&self) -> usize {
        self.n_primal + self.n_dual
    }

    fn regularize(&mut self, delta: f64) {
        for &k in &self.diagonal {
            self.entries[k].2 += delta;
        }
    }
}

fn block_offsets<P: ConstrainedLsProblem + ?Sized>(problem: &P) -> Vec<usize> {
    let mut off = Vec::with_capacity(problem.n_blocks() + 1);
    off.push(0);
    for i in 0..problem.n_blocks() {
        off.push(off[i] + problem.block_dim(i));
    }
    off
}

fn check_problem<P: ConstrainedLsProblem + ?Sized>(problem: &P, blocks: &[Vec<f64>]) -> Result<()> {
    check_len("SQP blocks", problem.n_blocks(), blocks.len())?;
    let a = problem.constraints();
    check_len("constraint blocks", problem.n_blocks(), a.blocks.len())?;
    if !(problem.scaling() > 0.0) {
        return Err(Error::InvalidParams("scaling factor h must be positive".into()));
    }
    for (i, q) in blocks.iter().enumerate() {
        check_len("SQP block", problem.block_dim(i), q.len())?;
        check_len(
            "constraint columns",
            problem.block_dim(i) - problem.interface_offset(i),
            a.blocks[i].ncols(),
        )?;
        if a.blocks[i].nrows() != a.n_rows {
            return Err(Error::InvalidLayout(format!("constraint block {i} has wrong row count")));
        }
    }
    Ok(())
}

fn constraint_residual<P: ConstrainedLsProblem + ?Sized>(problem: &P, blocks: &[Vec<f64>]) -> Result<Vec<f64>> {
    let views: Vec<&[f64]> = blocks
        .iter()
        .enumerate()
        .map(|(i, q)| &q[problem.interface_offset(i)..])
        .collect();
    problem.constraints().apply(&views)
}

/// Runs `f` on every block, returning the results and the slowest block's
/// wall time.
fn per_block<T: Send, F>(n: usize, parallel: bool, f: F) -> Result<(Vec<T>, f64)>
where
    F: Fn(usize) -> Result<T> + Sync,
{
    let timed = |i: usize| {
        let start = Instant::now();
        let out = f(i);
        (out, start.elapsed().as_secs_f64())
    };
    let results: Vec<(Result<T>, f64)> = if parallel {
        (0..n).into_par_iter().map(timed).collect()
    } else {
        (0..n).map(timed).collect()
    };
    let slowest = results.iter().fold(0.0f64, |m, r| m.max(r.1));
    let values = results.into_iter().map(|r| r.0).collect::<Result<Vec<T>>>()?;
    Ok((values, slowest))
}

fn sq_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Assembles `[[H, C^T], [C, 0]] [dq; lambda+] = [-h J^T r; -c]` at the
/// given block evaluations and iterate.
pub fn assemble_kkt<P: ConstrainedLsProblem + ?Sized>(
    problem: &P,
    blocks: &[Vec<f64>],
    evals: &[BlockEval],
) -> Result<KktSystem> {
    check_problem(problem, blocks)?;
    check_len("block evaluations", problem.n_blocks(), evals.len())?;
    let h = problem.scaling();
    let off = block_offsets(problem);
    let n_primal = off[problem.n_blocks()];
    let a = problem.constraints();
    let n_dual = a.n_rows;
    let mut entries = Vec::new();
    let mut diagonal = Vec::with_capacity(n_primal);
    let mut rhs = vec![0.0; n_primal + n_dual];
    for (i, ev) in evals.iter().enumerate() {
        check_len("block jacobian columns", problem.block_dim(i), ev.jacobian.ncols())?;
        check_len("block jacobian rows", ev.residual.len(), ev.jacobian.nrows())?;
        let o = off[i];
        for (r, c, v) in ev.jacobian.gram().iter() {
            entries.push((o + r, o + c, h * v));
        }
        // explicit diagonal keeps the pattern fixed under regularization
        for k in 0..problem.block_dim(i) {
            diagonal.push(entries.len());
            entries.push((o + k, o + k, 0.0));
        }
        for (k, g) in ev.jacobian.tr_mul_vec(&ev.residual).into_iter().enumerate() {
            rhs[o + k] = -h * g;
        }
        let shift = o + problem.interface_offset(i);
        for (r, c, v) in a.blocks[i].iter() {
            entries.push((n_primal + r, shift + c, v));
            entries.push((shift + c, n_primal + r, v));
        }
    }
    for (k, c) in constraint_residual(problem, blocks)?.into_iter().enumerate() {
        rhs[n_primal + k] = -c;
    }
    Ok(KktSystem {
        n_primal,
        n_dual,
        entries,
        rhs,
        diagonal,
    })
}

/// Reusable SQP solver; caches the KKT symbolic factorization between calls.
#[derive(Default)]
pub struct SqpSolver {
    lu: SparseLu,
}

struct Merit {
    phi: f64,
    residual_sq: f64,
    violation: f64,
}

impl SqpSolver {
    pub fn new() -> Self {
        Self::default()
    }

    fn solve_kkt(&mut self, kkt: &mut KktSystem) -> Result<Vec<f64>> {
        match self.lu.solve(kkt.dim(), &kkt.entries, &kkt.rhs) {
            Ok(x) => Ok(x),
            Err(first) => {
                debug!("KKT factorization failed ({first}); regularizing");
                kkt.regularize(KKT_REGULARIZATION);
                self.lu.solve(kkt.dim(), &kkt.entries, &kkt.rhs)
            }
        }
    }

    fn merit<P: ConstrainedLsProblem + ?Sized>(
        problem: &P,
        blocks: &[Vec<f64>],
        penalty: f64,
        parallel: bool,
    ) -> Result<(Merit, f64)> {
        let (res, slowest) = per_block(problem.n_blocks(), parallel, |i| problem.residual(i, &blocks[i]))?;
        let residual_sq: f64 = res.iter().map(|r| sq_norm(r)).sum();
        let c = constraint_residual(problem, blocks)?;
        let merit = Merit {
            phi: 0.5 * problem.scaling() * residual_sq + penalty * c.iter().map(|v| v.abs()).sum::<f64>(),
            residual_sq,
            violation: inf_norm(&c),
        };
        Ok((merit, slowest))
    }

    /// Solves one constrained least-squares problem from `initial`.
    ///
    /// Returns a flagged, non-converged result when the iteration cap is hit
    /// or the line search stalls; factorization failures are errors.
    pub fn solve<P: ConstrainedLsProblem + ?Sized>(
        &mut self,
        problem: &P,
        initial: &[Vec<f64>],
        options: &SqpOptions,
    ) -> Result<SqpResult> {
        options.validate()?;
        check_problem(problem, initial)?;
        let h = problem.scaling();
        let nb = problem.n_blocks();
        let off = block_offsets(problem);
        let mut blocks = initial.to_vec();
        let mut lambda = vec![0.0; problem.constraints().n_rows];
        let mut timing = SolveTiming::default();
        let mut log = Vec::new();
        let mut iterations = 0;

        loop {
            let (evals, slowest) = per_block(nb, options.parallel, |i| problem.evaluate(i, &blocks[i]))?;
            timing.local += slowest;
            iterations += 1;

            let start = Instant::now();
            let a = problem.constraints();
            let residual_sq: f64 = evals.iter().map(|e| sq_norm(&e.residual)).sum();
            let c = constraint_residual(problem, &blocks)?;
            let violation = inf_norm(&c);
            let mut stationarity = 0.0f64;
            for (i, ev) in evals.iter().enumerate() {
                let mut g: Vec<f64> = ev.jacobian.tr_mul_vec(&ev.residual).iter().map(|v| h * v).collect();
                let ct = a.blocks[i].tr_mul_vec(&lambda);
                let s = problem.interface_offset(i);
                for (k, v) in ct.into_iter().enumerate() {
                    g[s + k] += v;
                }
                stationarity = stationarity.max(inf_norm(&g));
            }
            let residual_norm = residual_sq.sqrt();
            let converged = stationarity <= options.tol_grad
                && violation <= options.tol_con
                && options.tol_res.is_none_or(|t| residual_norm <= t);
            let mut entry = IterationLog {
                iteration: iterations,
                residual_norm,
                violation,
                stationarity,
                step_length: 0.0,
            };
            let finish = |blocks, lambda, converged, log, mut timing: SolveTiming| {
                timing.global += start.elapsed().as_secs_f64();
                SqpResult {
                    blocks,
                    multipliers: lambda,
                    iterations,
                    converged,
                    residual_norm,
                    violation,
                    stationarity,
                    log,
                    timing,
                }
            };
            if converged || iterations > options.max_iter || !residual_norm.is_finite() {
                log.push(entry);
                return Ok(finish(blocks, lambda, converged, log, timing));
            }

            let mut kkt = assemble_kkt(problem, &blocks, &evals)?;
            let sol = self.solve_kkt(&mut kkt)?;
            let (dq, lambda_new) = sol.split_at(kkt.n_primal);

            // directional derivative of the l1 merit along the KKT step
            let mut slope = 0.0;
            for (i, ev) in evals.iter().enumerate() {
                let jd = ev.jacobian.mul_vec(&dq[off[i]..off[i + 1]]);
                slope += h * ev.residual.iter().zip(&jd).map(|(r, d)| r * d).sum::<f64>();
            }
            let con_l1: f64 = c.iter().map(|v| v.abs()).sum();
            slope -= options.penalty * con_l1;
            let phi0 = 0.5 * h * residual_sq + options.penalty * con_l1;
            timing.global += start.elapsed().as_secs_f64();

            let trial = |alpha: f64| -> Vec<Vec<f64>> {
                blocks
                    .iter()
                    .enumerate()
                    .map(|(i, q)| q.iter().zip(&dq[off[i]..off[i + 1]]).map(|(x, d)| x + alpha * d).collect())
                    .collect()
            };
            let mut alpha = 1.0;
            let mut accepted = None;
            for attempt in 0..=MAX_BACKTRACKS {
                let cand = trial(alpha);
                let (m, slowest) = Self::merit(problem, &cand, options.penalty, options.parallel)?;
                timing.local += slowest;
                let ok = if attempt == 0 {
                    // full step: any non-increase, up to rounding
                    m.phi <= phi0 + 4.0 * f64::EPSILON * phi0.abs()
                } else {
                    m.phi < phi0 && m.phi <= phi0 + options.ls_c * alpha * slope
                };
                if ok && m.phi.is_finite() {
                    accepted = Some((cand, m));
                    break;
                }
                alpha *= options.ls_beta;
            }
            let start = Instant::now();
            match accepted {
                Some((cand, m)) => {
                    debug!(
                        "SQP iter {iterations}: |r| {:.3e} viol {:.3e} step {alpha}",
                        m.residual_sq.sqrt(),
                        m.violation
                    );
                    entry.step_length = alpha;
                    log.push(entry);
                    blocks = cand;
                    for (l, ln) in lambda.iter_mut().zip(lambda_new) {
                        *l += alpha * (ln - *l);
                    }
                    timing.global += start.elapsed().as_secs_f64();
                }
                None => {
                    log.push(entry);
                    return Ok(finish(blocks, lambda, false, log, timing));
                }
            }
        }
    }
}

/// Solves with a fresh solver.
pub fn solve_step<P: ConstrainedLsProblem + ?Sized>(
    problem: &P,
    initial: &[Vec<f64>],
    options: &SqpOptions,
) -> Result<SqpResult> {
    SqpSolver::new().solve(problem, initial, options)
}

/// Writes the per-iteration log of a sequence of time steps as CSV.
pub fn write_convergence_csv<W: Write>(mut w: W, steps: &[(usize, &SqpResult)]) -> Result<()> {
    writeln!(w, "# ddnmrom-sqp-log v1")?;
    writeln!(w, "step,iteration,residual_norm,violation,stationarity,step_length")?;
    for (step, res) in steps {
        for e in &res.log {
            writeln!(
                w,
                "{step},{},{:e},{:e},{:e},{:e}",
                e.iteration, e.residual_norm, e.violation, e.stationarity, e.step_length
            )?;
        }
    }
    Ok(())
}
