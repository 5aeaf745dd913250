use log::info;

use super::{ConstrainedLsProblem, BlockEval, SqpOptions, SqpResult, SqpSolver};
use crate::error::{check_len, Error, Result};
use crate::fom::BurgersParams;
use crate::metrics::TimingRecord;
use crate::partition::{gather, scatter, CompatibilityMatrix, DdModel, SubdomainLayout, SubdomainState};

/// One Backward Euler step of the decomposed full-order model. Block `i`
/// is subdomain `i`'s local vector `[interior; interface]`.
pub struct FomStepProblem<'a> {
    model: &'a DdModel,
    previous: Vec<Vec<f64>>,
}

impl<'a> FomStepProblem<'a> {
    pub fn new(model: &'a DdModel, previous: &[SubdomainState]) -> Result<Self> {
        check_len("previous subdomain states", model.n_subdomains(), previous.len())?;
        Ok(Self {
            model,
            previous: previous.iter().map(SubdomainState::local).collect(),
        })
    }
}

impl ConstrainedLsProblem for FomStepProblem<'_> {
    fn n_blocks(&self) -> usize {
        self.model.n_subdomains()
    }

    fn block_dim(&self, i: usize) -> usize {
        self.model.kernels[i].n_local()
    }

    fn interface_offset(&self, i: usize) -> usize {
        self.model.kernels[i].n_interior()
    }

    fn constraints(&self) -> &CompatibilityMatrix {
        &self.model.constraints
    }

    fn scaling(&self) -> f64 {
        self.model.layout.grid.cell_area()
    }

    fn residual(&self, i: usize, q: &[f64]) -> Result<Vec<f64>> {
        self.model.kernels[i].residual(q, &self.previous[i])
    }

    fn evaluate(&self, i: usize, q: &[f64]) -> Result<BlockEval> {
        let kernel = &self.model.kernels[i];
        Ok(BlockEval {
            residual: kernel.residual(q, &self.previous[i])?,
            jacobian: kernel.jacobian(q)?,
        })
    }
}

/// Decomposed full-order trajectory.
#[derive(Debug, Clone)]
pub struct DdFomRun {
    /// Monolithic states rebuilt from the subdomain copies, `k = 0..=N_t`.
    pub states: Vec<Vec<f64>>,
    /// Subdomain copies at every time index.
    pub subdomain_states: Vec<Vec<SubdomainState>>,
    /// SQP outcome per step (solution blocks dropped).
    pub steps: Vec<SqpResult>,
    pub timing: TimingRecord,
}

impl DdFomRun {
    pub fn max_violation(&self) -> f64 {
        self.steps.iter().fold(0.0, |m, s| m.max(s.violation))
    }
}

/// Time loop of the decomposed full-order model, each step warm-started from
/// the previous one. Any non-converged step aborts.
pub fn dd_fom_solve(
    layout: &SubdomainLayout,
    params: &BurgersParams,
    x0: &[f64],
    options: &SqpOptions,
) -> Result<DdFomRun> {
    let grid = &layout.grid;
    check_len("initial state", grid.n_dofs(), x0.len())?;
    let model = DdModel::new(layout.clone(), params)?;
    let mut solver = SqpSolver::new();
    let mut current = gather(x0, &model.map);
    let mut states = vec![x0.to_vec()];
    let mut subdomain_states = vec![current.clone()];
    let mut steps = Vec::with_capacity(params.n_steps);
    let mut timing = TimingRecord::default();
    // chained copies of a corner may differ by a few constraint tolerances
    let copy_tol = 4.0 * options.tol_con;
    for step in 1..=params.n_steps {
        let problem = FomStepProblem::new(&model, &current)?;
        let initial: Vec<Vec<f64>> = current.iter().map(SubdomainState::local).collect();
        let mut res = solver.solve(&problem, &initial, options)?;
        if !res.converged {
            return Err(Error::SqpDiverged {
                step,
                detail: format!(
                    "{} iterations, |r| {:.3e}, violation {:.3e}, stationarity {:.3e}",
                    res.iterations, res.residual_norm, res.violation, res.stationarity
                ),
            });
        }
        timing.push(res.timing);
        current = std::mem::take(&mut res.blocks)
            .iter()
            .zip(&model.map.subdomains)
            .map(|(q, s)| SubdomainState::from_local(q, s.n_interior()))
            .collect();
        states.push(scatter(&current, &model.map, grid.n_dofs(), copy_tol)?);
        subdomain_states.push(current.clone());
        if step % 10 == 0 || step == params.n_steps {
            info!("DD FOM step {step}/{}: {} iterations", params.n_steps, res.iterations);
        }
        steps.push(res);
    }
    Ok(DdFomRun {
        states,
        subdomain_states,
        steps,
        timing,
    })
}
