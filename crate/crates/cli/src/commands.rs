use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use log::{info, warn};
use ndarray::Array2;
use serde_json::{json, Value};

use ddrom::io::{
    atomic_write, load_rom, read_matrix, read_snapshot_set, write_matrix, write_model, write_snapshot_set,
    write_trajectory, MatrixHeader, RoleEntry, RomManifest, MANIFEST_VERSION,
};
use ddrom::metrics::{linf_l2_error, pareto_sweep, speedup, write_pareto_csv, CaseOutcome};
use ddrom::partition::{classify_states, partition, SubdomainStateMap};
use ddrom::pipeline::{compare, models_from, train_roles};
use ddrom::rom::{compose as compose_rom, rom_solve, RoleModel};
use ddrom::snapshots::{collect_snapshots_strided, lhs_sample, SnapshotCollection};
use ddrom::sqp::{dd_fom_solve, write_convergence_csv, DdFomRun, SqpResult};
use ddrom::{fom::initial_condition, Grid2D, ParameterVector, RunConfig, SnapshotRole, SubdomainState, TimingRecord};

use crate::Common;

const CONFIGS_HEADER: &str = "# ddnmrom-configs v1";

/// Machine-readable category of a failure.
pub fn error_kind(e: &anyhow::Error) -> &'static str {
    use ddrom::Error as E;
    for cause in e.chain() {
        if let Some(err) = cause.downcast_ref::<E>() {
            return match err {
                E::Config(_) => "config",
                E::Format(_) => "format",
                E::Io(_) => "io",
                E::InvalidGrid(_) | E::InvalidParams(_) | E::InvalidLayout(_) | E::InvalidMask(_) => "invalid_input",
                E::DimensionMismatch { .. } | E::IncompatibleModel { .. } => "incompatible",
                E::NewtonDiverged { .. } | E::SqpDiverged { .. } | E::Factorization(_) => "solver",
                E::InvalidTraining(_) => "training",
                E::InconsistentCopies { .. } => "solver",
            };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return "io";
        }
    }
    "error"
}

struct Ctx {
    cfg: RunConfig,
    seed: u64,
    out: PathBuf,
}

impl Ctx {
    fn new(common: &Common) -> Result<Self> {
        let cfg = RunConfig::load(&common.config)?;
        let seed = common.seed.unwrap_or(cfg.seed);
        let out = common.out.clone().unwrap_or_else(|| cfg.output.dir.clone());
        Ok(Self { cfg, seed, out })
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.out.join(rel)
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    Ok(atomic_write(path, |w| Ok(w.write_all(text.as_bytes())?))?)
}

fn read_input(path: &Path, hint: &str) -> Result<String> {
    fs::read_to_string(path).map_err(|e| anyhow!(ddrom::Error::Io(e))).with_context(|| format!("missing input {} ({hint})", path.display()))
}

fn write_configs(path: &Path, configs: &[ParameterVector]) -> Result<()> {
    let k = configs.first().map_or(0, |c| c.len());
    let mut text = format!("{CONFIGS_HEADER}\nconfig");
    for d in 0..k {
        text.push_str(&format!(",mu_{d}"));
    }
    text.push('\n');
    for (c, mu) in configs.iter().enumerate() {
        text.push_str(&c.to_string());
        for v in &mu.mu {
            text.push_str(&format!(",{v}"));
        }
        text.push('\n');
    }
    write_text(path, &text)
}

fn read_configs(path: &Path) -> Result<Vec<ParameterVector>> {
    let text = read_input(path, "run `sample` first")?;
    let mut lines = text.lines();
    if lines.next() != Some(CONFIGS_HEADER) || lines.next().is_none() {
        return Err(ddrom::Error::Format(format!("{} is not a configs file", path.display())).into());
    }
    lines
        .map(|line| {
            let vals = line
                .split(',')
                .skip(1)
                .map(|s| s.parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| ddrom::Error::Format(format!("configs line {line:?}: {e}")))?;
            Ok(ParameterVector::new(vals)?)
        })
        .collect()
}

fn parse_mu(text: &str, n_sub: usize) -> Result<ParameterVector> {
    let vals = text
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| ddrom::Error::Config(format!("--mu: {e}")))?;
    if vals.len() != n_sub {
        return Err(ddrom::Error::Config(format!("--mu needs {n_sub} values, got {}", vals.len())).into());
    }
    Ok(ParameterVector::new(vals)?)
}

/// Test initial conditions on the deployment layout, drawn with a seed
/// distinct from the training sample.
fn test_mus(ctx: &Ctx, count: usize, n_sub: usize) -> Result<Vec<ParameterVector>> {
    let mut cfg = ctx.cfg.sample_config(ctx.seed.wrapping_add(1))?;
    cfg.m = count;
    Ok(lhs_sample(&cfg, n_sub)?)
}

fn case_mu(ctx: &Ctx, mu: Option<&str>, n_sub: usize) -> Result<ParameterVector> {
    match mu {
        Some(text) => parse_mu(text, n_sub),
        None => Ok(test_mus(ctx, 1, n_sub)?.remove(0)),
    }
}

fn deploy_map(ctx: &Ctx) -> Result<(Grid2D, SubdomainStateMap)> {
    let grid = ctx.cfg.compose_spec()?.grid()?;
    let spec = ctx.cfg.compose_spec()?;
    let layout = partition(&grid, spec.blocks_x, spec.blocks_y)?;
    let (map, _) = classify_states(&layout)?;
    Ok((grid, map))
}

/// One row per time index: all subdomain local vectors concatenated.
fn write_dd(path: &Path, grid: &Grid2D, params: &ddrom::BurgersParams, states: &[Vec<SubdomainState>]) -> Result<()> {
    let flat: Vec<f64> = states.iter().flat_map(|step| step.iter().flat_map(|s| s.local())).collect();
    let cols = flat.len() / states.len().max(1);
    let data = Array2::from_shape_vec((states.len(), cols), flat)?;
    let header = MatrixHeader::new(grid, params, states.len(), cols);
    Ok(write_matrix(path, &header, data.view())?)
}

fn read_dd(path: &Path, map: &SubdomainStateMap) -> Result<Vec<Vec<SubdomainState>>> {
    let (_, data) = read_matrix(path).with_context(|| format!("reading {}", path.display()))?;
    let want: usize = map.subdomains.iter().map(|s| s.n_interior() + s.n_interface()).sum();
    if data.ncols() != want {
        return Err(ddrom::Error::Format(format!(
            "{} has {} columns, the deployment layout needs {want}",
            path.display(),
            data.ncols()
        ))
        .into());
    }
    Ok(data
        .rows()
        .into_iter()
        .map(|row| {
            let row = row.to_vec();
            let mut at = 0;
            map.subdomains
                .iter()
                .map(|s| {
                    let n = s.n_interior() + s.n_interface();
                    let st = SubdomainState::from_local(&row[at..at + n], s.n_interior());
                    at += n;
                    st
                })
                .collect()
        })
        .collect())
}

fn write_run_logs(dir: &Path, timing: &TimingRecord, steps: &[SqpResult]) -> Result<()> {
    atomic_write(&dir.join("timing.csv"), |w| timing.write_csv(w))?;
    let indexed: Vec<(usize, &SqpResult)> = steps.iter().enumerate().map(|(k, s)| (k + 1, s)).collect();
    atomic_write(&dir.join("convergence.csv"), |w| write_convergence_csv(w, &indexed))?;
    Ok(())
}

pub fn sample(common: &Common, m: Option<usize>) -> Result<Value> {
    let ctx = Ctx::new(common)?;
    let mut cfg = ctx.cfg.sample_config(ctx.seed)?;
    if let Some(m) = m {
        cfg.m = m;
    }
    let n_sub = ctx.cfg.training_layout()?.n_subdomains();
    let configs = lhs_sample(&cfg, n_sub)?;
    let path = ctx.path("configs.csv");
    write_configs(&path, &configs)?;
    Ok(json!({ "command": "sample", "configs": configs.len(), "path": path }))
}

pub fn snapshot(common: &Common, stride: Option<usize>) -> Result<Value> {
    let ctx = Ctx::new(common)?;
    let configs = read_configs(&ctx.path("configs.csv"))?;
    let layout = ctx.cfg.training_layout()?;
    let params = ctx.cfg.params()?;
    let stride = stride.unwrap_or(ctx.cfg.sampling.snapshot_stride);
    let snaps = collect_snapshots_strided(&configs, &layout, &params, stride)?;
    let dir = ctx.path("snapshots");
    let header = MatrixHeader::new(&layout.grid, &params, 0, 0);
    let mut rows = serde_json::Map::new();
    for role in SnapshotRole::ALL {
        let set = snaps.get(role);
        write_snapshot_set(&dir, set, &header)?;
        rows.insert(role.name().into(), json!([set.rows(), set.data.ncols()]));
    }
    Ok(json!({ "command": "snapshot", "configs": configs.len(), "stride": stride, "shapes": rows }))
}

fn load_snapshots(ctx: &Ctx) -> Result<SnapshotCollection> {
    let dir = ctx.path("snapshots");
    let get = |role| {
        read_snapshot_set(&dir, role)
            .map(|(_, s)| s)
            .with_context(|| format!("missing {} snapshots in {} (run `snapshot` first)", role.name(), dir.display()))
    };
    Ok(SnapshotCollection {
        interior: get(SnapshotRole::Interior)?,
        vertical: get(SnapshotRole::VerticalPort)?,
        horizontal: get(SnapshotRole::HorizontalPort)?,
    })
}

pub fn train(common: &Common, epochs: Option<usize>, interior_dim: Option<usize>, port_dim: Option<usize>) -> Result<Value> {
    let ctx = Ctx::new(common)?;
    let snaps = load_snapshots(&ctx)?;
    let mut cfg = ctx.cfg.train_config(ctx.seed);
    if let Some(e) = epochs {
        cfg.epochs = e;
    }
    let i_dim = interior_dim.unwrap_or(ctx.cfg.training.interior_dim);
    let p_dim = port_dim.unwrap_or(ctx.cfg.training.port_dim);
    let (block_nx, _) = ctx.cfg.block_size();
    let outcomes = train_roles(&snaps, i_dim, p_dim, block_nx, &cfg)?;
    let dir = ctx.path("models");
    let mut report = serde_json::Map::new();
    for (role, out) in SnapshotRole::ALL.iter().zip(&outcomes) {
        write_model(&dir.join(format!("{}.model", role.name())), &out.model)?;
        atomic_write(&dir.join(format!("{}.history.csv", role.name())), |w| out.history.write_csv(w))?;
        report.insert(
            role.name().into(),
            json!({
                "full_dim": out.model.full_dim,
                "latent_dim": out.model.latent_dim,
                "initial_val_mse": out.history.initial_val(),
                "best_val_mse": out.history.best_val(),
                "epochs": out.history.rows.len() - 1,
            }),
        );
    }
    Ok(json!({ "command": "train", "models": report }))
}

pub fn compose(common: &Common, identity: bool) -> Result<Value> {
    let ctx = Ctx::new(common)?;
    let spec = ctx.cfg.compose_spec()?;
    let params = ctx.cfg.deploy_params()?;
    let role = |r: SnapshotRole| -> Result<RoleEntry> {
        if identity {
            return Ok(RoleEntry::Identity);
        }
        let rel = PathBuf::from("models").join(format!("{}.model", r.name()));
        let model = ddrom::io::read_model(&ctx.out.join(&rel))
            .with_context(|| format!("missing {} model (run `train` first)", r.name()))?;
        Ok(RoleEntry::Autoencoder {
            path: rel,
            full_dim: model.full_dim,
            latent_dim: model.latent_dim,
        })
    };
    let manifest = RomManifest {
        version: MANIFEST_VERSION,
        bc: spec.bc,
        blocks_x: spec.blocks_x,
        blocks_y: spec.blocks_y,
        block_nx: spec.block_nx,
        block_ny: spec.block_ny,
        x_extent: spec.x_extent,
        y_extent: spec.y_extent,
        nu: params.nu,
        tau: params.tau,
        n_steps: params.n_steps,
        interior: role(SnapshotRole::Interior)?,
        vertical: role(SnapshotRole::VerticalPort)?,
        horizontal: role(SnapshotRole::HorizontalPort)?,
    };
    let rom = manifest.load(&ctx.out)?;
    let path = ctx.path("rom.toml");
    manifest.write(&path)?;
    let ports = &rom.fom.ports;
    Ok(json!({
        "command": "compose",
        "manifest": path,
        "subdomains": rom.n_subdomains(),
        "fom_dofs": rom.fom.layout.grid.n_dofs(),
        "rom_unknowns": rom.n_unknowns(),
        "edge_ports": ports.ports.iter().filter(|p| p.kind.is_edge()).count(),
        "latent_constraints": rom.constraints.n_rows,
    }))
}

pub fn solve_fom(common: &Common, mu: Option<&str>) -> Result<Value> {
    let ctx = Ctx::new(common)?;
    let spec = ctx.cfg.compose_spec()?;
    let grid = spec.grid()?;
    let layout = partition(&grid, spec.blocks_x, spec.blocks_y)?;
    let params = ctx.cfg.deploy_params()?;
    let mu = case_mu(&ctx, mu, layout.n_subdomains())?;
    let x0 = initial_condition(&grid, &layout, &mu)?;
    let run = dd_fom_solve(&layout, &params, &x0, &ctx.cfg.fom_options(grid.n_dofs()))?;
    let dir = ctx.path("fom");
    write_trajectory(&dir.join("traj.bin"), &grid, &params, &run.states)?;
    write_dd(&dir.join("dd.bin"), &grid, &params, &run.subdomain_states)?;
    write_run_logs(&dir, &run.timing, &run.steps)?;
    Ok(json!({
        "command": "solve-fom",
        "mu": mu.mu,
        "steps": run.steps.len(),
        "total_s": run.timing.total(),
        "max_violation": run.max_violation(),
    }))
}

pub fn solve_rom(common: &Common, manifest: Option<PathBuf>, mu: Option<&str>) -> Result<Value> {
    let ctx = Ctx::new(common)?;
    let path = manifest.unwrap_or_else(|| ctx.path("rom.toml"));
    if !path.exists() {
        return Err(anyhow!(ddrom::Error::Io(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!("missing manifest {} (run `compose` first)", path.display())
        ))));
    }
    let (manifest, rom) = load_rom(&path)?;
    let grid = rom.fom.layout.grid;
    let mu = case_mu(&ctx, mu, rom.n_subdomains())?;
    let x0 = initial_condition(&grid, &rom.fom.layout, &mu)?;
    let all_identity = [&rom.models.interior, &rom.models.vertical, &rom.models.horizontal]
        .iter()
        .all(|m| matches!(m, RoleModel::Identity));
    // an all-identity ROM is the decomposed FOM and gets its tolerances
    let options = if all_identity {
        ctx.cfg.fom_options(grid.n_dofs())
    } else {
        ctx.cfg.rom_options()
    };
    let run = rom_solve(&rom, &x0, &options)?;
    let dir = ctx.path("rom");
    write_dd(&dir.join("dd.bin"), &grid, &manifest.params()?, &run.decoded)?;
    write_run_logs(&dir, &run.timing, &run.steps)?;
    Ok(json!({
        "command": "solve-rom",
        "mu": mu.mu,
        "unknowns": rom.n_unknowns(),
        "steps": run.steps.len(),
        "total_s": run.timing.total(),
        "max_violation": run.max_violation(),
        "max_abs": run.max_abs,
    }))
}

pub fn bench(common: &Common, fom: Option<PathBuf>, rom: Option<PathBuf>) -> Result<Value> {
    let ctx = Ctx::new(common)?;
    let fom_dir = fom.unwrap_or_else(|| ctx.path("fom"));
    let rom_dir = rom.unwrap_or_else(|| ctx.path("rom"));
    let (grid, map) = deploy_map(&ctx)?;
    let reference = read_dd(&fom_dir.join("dd.bin"), &map)?;
    let approx = read_dd(&rom_dir.join("dd.bin"), &map)?;
    let error = linf_l2_error(&reference, &approx, &grid)?;
    let timing = |dir: &Path| -> Result<TimingRecord> {
        Ok(TimingRecord::read_csv(&read_input(&dir.join("timing.csv"), "run the solver first")?)?)
    };
    let (tf, tr) = (timing(&fom_dir)?, timing(&rom_dir)?);
    let s = speedup(&tf, &tr);
    let summary = json!({
        "command": "bench",
        "e_abs": error.e_abs,
        "e_rel": error.e_rel,
        "speedup": s,
        "fom_total_s": tf.total(),
        "rom_total_s": tr.total(),
    });
    write_text(&ctx.path("bench.json"), &format!("{summary}\n"))?;
    Ok(summary)
}

const GNUPLOT: &str = "set datafile separator ','\n\
set logscale x\n\
set xlabel 'relative error'\n\
set ylabel 'speedup'\n\
plot 'pareto.csv' skip 2 using 4:5:(sprintf('(%d,%d)', $1, $2)) with labels point pt 7 offset 1,1 notitle\n";

pub fn pareto(common: &Common, test_cases: Option<usize>) -> Result<Value> {
    let ctx = Ctx::new(common)?;
    let snaps = load_snapshots(&ctx)?;
    let spec = ctx.cfg.compose_spec()?;
    let params = ctx.cfg.deploy_params()?;
    let grid = spec.grid()?;
    let layout = partition(&grid, spec.blocks_x, spec.blocks_y)?;
    let count = test_cases.unwrap_or(ctx.cfg.sweep.test_cases);
    let mus = test_mus(&ctx, count, layout.n_subdomains())?;
    let fom_options = ctx.cfg.fom_options(grid.n_dofs());
    let references: Vec<(Vec<f64>, DdFomRun)> = mus
        .iter()
        .map(|mu| {
            let x0 = initial_condition(&grid, &layout, mu)?;
            let run = dd_fom_solve(&layout, &params, &x0, &fom_options)?;
            Ok((x0, run))
        })
        .collect::<Result<_>>()?;
    let train_cfg = ctx.cfg.train_config(ctx.seed);
    let (block_nx, _) = ctx.cfg.block_size();
    let rom_options = ctx.cfg.rom_options();
    let sweep = &ctx.cfg.sweep;
    if sweep.interior_dims.is_empty() || sweep.port_dims.is_empty() {
        bail!(ddrom::Error::Config("sweep needs interior_dims and port_dims".into()));
    }
    let rows = pareto_sweep(&sweep.interior_dims, &sweep.port_dims, |i, p| {
        info!("pareto: I = {i}, P = {p}");
        let outcomes = train_roles(&snaps, i, p, block_nx, &train_cfg)?;
        let rom = compose_rom(&spec, models_from(&outcomes), &params)?;
        let mut cases = Vec::with_capacity(references.len());
        for (x0, fom) in &references {
            match rom_solve(&rom, x0, &rom_options) {
                Ok(run) => {
                    let (error, s) = compare(&rom, fom, &run)?;
                    cases.push(CaseOutcome {
                        e_abs: error.e_abs,
                        e_rel: error.e_rel,
                        speedup: s,
                    });
                }
                Err(e) => {
                    warn!("I = {i}, P = {p}: {e}");
                    cases.push(CaseOutcome {
                        e_abs: f64::NAN,
                        e_rel: f64::NAN,
                        speedup: f64::NAN,
                    });
                }
            }
        }
        Ok(cases)
    })?;
    let (first, last) = (rows.first().unwrap(), rows.last().unwrap());
    if last.e_rel <= first.e_rel {
        info!("largest latent pair is at least as accurate as the smallest");
    } else {
        warn!(
            "largest latent pair less accurate than the smallest ({:.3e} > {:.3e})",
            last.e_rel, first.e_rel
        );
    }
    let path = ctx.path("pareto.csv");
    atomic_write(&path, |w| write_pareto_csv(w, &rows))?;
    write_text(&ctx.path("pareto.gp"), GNUPLOT)?;
    Ok(json!({ "command": "pareto", "rows": rows.len(), "path": path }))
}
