use std::time::Instant;

use log::{info, warn};

use super::DdNmRom;
use crate::error::{check_len, Error, Result};
use crate::partition::{CompatibilityMatrix, SubdomainState};
use crate::metrics::TimingRecord;
use crate::sqp::{BlockEval, ConstrainedLsProblem, SolveTiming, SqpOptions, SqpResult, SqpSolver};

/// One time step of the latent problem: residuals at decoded states, with
/// the previous step given as decoded full local vectors.
pub struct RomStepProblem<'a> {
    rom: &'a DdNmRom,
    previous: Vec<Vec<f64>>,
}

impl<'a> RomStepProblem<'a> {
    pub fn new(rom: &'a DdNmRom, previous: Vec<Vec<f64>>) -> Result<Self> {
        check_len("previous decoded states", rom.n_subdomains(), previous.len())?;
        Ok(Self { rom, previous })
    }
}

impl ConstrainedLsProblem for RomStepProblem<'_> {
    fn n_blocks(&self) -> usize {
        self.rom.n_subdomains()
    }

    fn block_dim(&self, i: usize) -> usize {
        self.rom.blocks[i].n_latent
    }

    fn interface_offset(&self, i: usize) -> usize {
        self.rom.blocks[i].interface_offset
    }

    fn constraints(&self) -> &CompatibilityMatrix {
        &self.rom.constraints
    }

    fn scaling(&self) -> f64 {
        self.rom.fom.layout.grid.cell_area()
    }

    fn residual(&self, i: usize, y: &[f64]) -> Result<Vec<f64>> {
        let q = self.rom.decode_block(i, y)?;
        self.rom.fom.kernels[i].residual(&q, &self.previous[i])
    }

    fn evaluate(&self, i: usize, y: &[f64]) -> Result<BlockEval> {
        let kernel = &self.rom.fom.kernels[i];
        let (q, jacobian) = self.rom.decode_and_compose(i, y, |q| kernel.jacobian(q))?;
        Ok(BlockEval {
            residual: kernel.residual(&q, &self.previous[i])?,
            jacobian,
        })
    }
}

/// Block latents at every time index; index 0 comes from the encoders.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentTrajectory {
    pub steps: Vec<Vec<Vec<f64>>>,
}

impl LatentTrajectory {
    pub fn decode(&self, rom: &DdNmRom, k: usize) -> Result<Vec<SubdomainState>> {
        self.steps[k]
            .iter()
            .enumerate()
            .map(|(i, y)| rom.decode_subdomain(i, y))
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct RomRun {
    pub latents: LatentTrajectory,
    /// Decoded subdomain states (each subdomain's own interface copy).
    pub decoded: Vec<Vec<SubdomainState>>,
    pub steps: Vec<SqpResult>,
    pub timing: TimingRecord,
    /// Largest decoded `|u|, |v|` over all accepted steps.
    pub max_abs: f64,
}

impl RomRun {
    pub fn max_violation(&self) -> f64 {
        self.steps.iter().fold(0.0, |m, s| m.max(s.violation))
    }
}

/// Time loop of the latent problem, warm-starting every step from the
/// previous latents. Any non-converged step aborts.
pub fn rom_solve(rom: &DdNmRom, x0: &[f64], options: &SqpOptions) -> Result<RomRun> {
    let params = &rom.fom.params;
    let mut current = rom.encode_state(x0)?;
    let decode_all = |lat: &[Vec<f64>]| -> Result<(Vec<Vec<f64>>, f64)> {
        let mut slowest = 0.0f64;
        let mut out = Vec::with_capacity(lat.len());
        for (i, y) in lat.iter().enumerate() {
            let t = Instant::now();
            out.push(rom.decode_block(i, y)?);
            slowest = slowest.max(t.elapsed().as_secs_f64());
        }
        Ok((out, slowest))
    };
    let to_states = |locals: &[Vec<f64>]| -> Vec<SubdomainState> {
        locals
            .iter()
            .zip(&rom.fom.map.subdomains)
            .map(|(q, s)| SubdomainState::from_local(q, s.n_interior()))
            .collect()
    };
    let (mut previous, _) = decode_all(&current)?;
    let amplitude = x0.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut max_abs = 0.0f64;
    let mut latents = vec![current.clone()];
    let mut decoded = vec![to_states(&previous)];
    let mut steps = Vec::with_capacity(params.n_steps);
    let mut timing = TimingRecord::default();
    let mut solver = SqpSolver::new();
    for step in 1..=params.n_steps {
        let problem = RomStepProblem::new(rom, previous)?;
        let mut res = solver.solve(&problem, &current, options)?;
        if !res.converged {
            return Err(Error::SqpDiverged {
                step,
                detail: format!(
                    "latent solve: {} iterations, |r| {:.3e}, violation {:.3e}, stationarity {:.3e}",
                    res.iterations, res.residual_norm, res.violation, res.stationarity
                ),
            });
        }
        current = std::mem::take(&mut res.blocks);
        let (locals, slowest) = decode_all(&current)?;
        timing.push(SolveTiming {
            local: res.timing.local + slowest,
            global: res.timing.global,
        });
        let peak = locals.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
        if peak > 2.0 * amplitude && max_abs <= 2.0 * amplitude {
            warn!("decoded state exceeds twice the initial amplitude at step {step}");
        }
        max_abs = max_abs.max(peak);
        decoded.push(to_states(&locals));
        latents.push(current.clone());
        if step % 10 == 0 || step == params.n_steps {
            info!("ROM step {step}/{}: {} iterations", params.n_steps, res.iterations);
        }
        steps.push(res);
        previous = locals;
    }
    Ok(RomRun {
        latents: LatentTrajectory { steps: latents },
        decoded,
        steps,
        timing,
        max_abs,
    })
}
