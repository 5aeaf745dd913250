//! Trajectory error metric, timing bookkeeping, and latent-dimension sweeps.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::fom::Grid2D;
use crate::partition::{gather, SubdomainState, SubdomainStateMap};
use crate::sqp::SolveTiming;

/// Discrete `L^inf`-in-time, `L^2`-in-space error
///
/// ```text
/// e = max_k sqrt( h_x h_y / n_sub * sum_i ||x_i^k - y_i^k||^2 )
/// ```
///
/// where each subdomain contributes both its interior and its own copy of
/// the interface, so shared DOFs are counted once per sharer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub e_abs: f64,
    /// `e_abs` divided by the same metric of the reference against zero.
    pub e_rel: f64,
    /// Per-time-index values under the square root's `max`.
    pub per_step: Vec<f64>,
}

fn step_error(a: &[SubdomainState], b: Option<&[SubdomainState]>, weight: f64) -> Result<f64> {
    let mut sum = 0.0;
    for (i, x) in a.iter().enumerate() {
        let parts = [(&x.interior, b.map(|b| &b[i].interior)), (&x.interface, b.map(|b| &b[i].interface))];
        for (xa, xb) in parts {
            match xb {
                Some(xb) => {
                    check_len("error metric block", xa.len(), xb.len())?;
                    sum += xa.iter().zip(xb).map(|(p, q)| (p - q) * (p - q)).sum::<f64>();
                }
                None => sum += xa.iter().map(|p| p * p).sum::<f64>(),
            }
        }
    }
    Ok((weight * sum).sqrt())
}

/// Error of `approx` against the reference trajectory `reference`, both
/// given as per-subdomain states at every compared time index.
pub fn linf_l2_error(
    reference: &[Vec<SubdomainState>],
    approx: &[Vec<SubdomainState>],
    grid: &Grid2D,
) -> Result<ErrorReport> {
    check_len("error metric time indices", reference.len(), approx.len())?;
    if reference.is_empty() {
        return Err(Error::InvalidParams("empty trajectories".into()));
    }
    let n_sub = reference[0].len();
    let weight = grid.cell_area() / n_sub as f64;
    let mut per_step = Vec::with_capacity(reference.len());
    let mut e_ref = 0.0f64;
    for (a, b) in reference.iter().zip(approx) {
        check_len("error metric subdomains", n_sub, a.len())?;
        check_len("error metric subdomains", n_sub, b.len())?;
        per_step.push(step_error(a, Some(b), weight)?);
        e_ref = e_ref.max(step_error(a, None, weight)?);
    }
    let e_abs = per_step.iter().cloned().fold(0.0, f64::max);
    let e_rel = if e_abs == 0.0 { 0.0 } else { e_abs / e_ref };
    Ok(ErrorReport { e_abs, e_rel, per_step })
}

/// [`linf_l2_error`] for monolithic trajectories, gathered onto `map`.
pub fn linf_l2_error_monolithic(
    reference: &[Vec<f64>],
    approx: &[Vec<f64>],
    map: &SubdomainStateMap,
    grid: &Grid2D,
) -> Result<ErrorReport> {
    check_len("error metric time indices", reference.len(), approx.len())?;
    let mut a = Vec::with_capacity(reference.len());
    let mut b = Vec::with_capacity(reference.len());
    for (x, y) in reference.iter().zip(approx) {
        check_len("error metric state", grid.n_dofs(), x.len())?;
        check_len("error metric state", grid.n_dofs(), y.len())?;
        a.push(gather(x, map));
        b.push(gather(y, map));
    }
    linf_l2_error(&a, &b, grid)
}

/// Per-time-step wall clock under the max-over-subdomains convention:
/// local work is charged by the slowest subdomain, synchronized work in full.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TimingRecord {
    pub local: Vec<f64>,
    pub global: Vec<f64>,
}

impl TimingRecord {
    pub fn push(&mut self, t: SolveTiming) {
        self.local.push(t.local);
        self.global.push(t.global);
    }

    pub fn total_local(&self) -> f64 {
        self.local.iter().sum()
    }

    pub fn total_global(&self) -> f64 {
        self.global.iter().sum()
    }

    pub fn total(&self) -> f64 {
        self.total_local() + self.total_global()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# ddnmrom-timing v1")?;
        writeln!(w, "step,local_s,global_s")?;
        for (k, (l, g)) in self.local.iter().zip(&self.global).enumerate() {
            writeln!(w, "{},{l:e},{g:e}", k + 1)?;
        }
        Ok(())
    }

    pub fn read_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next() != Some("# ddnmrom-timing v1") || lines.next() != Some("step,local_s,global_s") {
            return Err(Error::Format("not a timing CSV".into()));
        }
        let mut rec = Self::default();
        for (k, line) in lines.enumerate() {
            let f: Vec<&str> = line.split(',').collect();
            let parse = |s: &str| s.parse::<f64>().map_err(|e| Error::Format(format!("timing line {}: {e}", k + 1)));
            if f.len() != 3 || f[0] != (k + 1).to_string() {
                return Err(Error::Format(format!("bad timing line {line:?}")));
            }
            rec.local.push(parse(f[1])?);
            rec.global.push(parse(f[2])?);
        }
        Ok(rec)
    }
}

/// `reference.total() / candidate.total()`.
pub fn speedup(reference: &TimingRecord, candidate: &TimingRecord) -> f64 {
    reference.total() / candidate.total()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParetoRow {
    pub interior_dim: usize,
    pub port_dim: usize,
    pub e_abs: f64,
    pub e_rel: f64,
    pub speedup: f64,
}

/// Outcome of one ROM test case in a sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CaseOutcome {
    pub e_abs: f64,
    pub e_rel: f64,
    pub speedup: f64,
}

/// Evaluates every `(I, P)` pair over the test cases and averages the
/// results; `run(I, P)` returns one outcome per test case.
pub fn pareto_sweep<F>(interior_dims: &[usize], port_dims: &[usize], mut run: F) -> Result<Vec<ParetoRow>>
where
    F: FnMut(usize, usize) -> Result<Vec<CaseOutcome>>,
{
    let mut rows = Vec::with_capacity(interior_dims.len() * port_dims.len());
    for &i in interior_dims {
        for &p in port_dims {
            let cases = run(i, p)?;
            if cases.is_empty() {
                return Err(Error::InvalidParams(format!("no test cases for I = {i}, P = {p}")));
            }
            let n = cases.len() as f64;
            rows.push(ParetoRow {
                interior_dim: i,
                port_dim: p,
                e_abs: cases.iter().map(|c| c.e_abs).sum::<f64>() / n,
                e_rel: cases.iter().map(|c| c.e_rel).sum::<f64>() / n,
                speedup: cases.iter().map(|c| c.speedup).sum::<f64>() / n,
            });
        }
    }
    Ok(rows)
}

pub fn write_pareto_csv<W: Write>(mut w: W, rows: &[ParetoRow]) -> Result<()> {
    writeln!(w, "# ddnmrom-pareto v1")?;
    writeln!(w, "interior_dim,port_dim,e_abs,e_rel,speedup")?;
    for r in rows {
        writeln!(w, "{},{},{:e},{:e},{:e}", r.interior_dim, r.port_dim, r.e_abs, r.e_rel, r.speedup)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fom::BoundaryCondition;
    use crate::partition::{classify_states, partition};

    fn setup() -> (Grid2D, SubdomainStateMap) {
        let g = Grid2D::new(12, 12, (0.0, 1.0), (0.0, 1.0), BoundaryCondition::Periodic).unwrap();
        let (map, _) = classify_states(&partition(&g, 2, 2).unwrap()).unwrap();
        (g, map)
    }

    #[test]
    fn identical_trajectories_have_zero_error() {
        let (g, map) = setup();
        let traj: Vec<Vec<f64>> = (0..3).map(|k| (0..g.n_dofs()).map(|d| (d * (k + 1)) as f64).collect()).collect();
        let rep = linf_l2_error_monolithic(&traj, &traj, &map, &g).unwrap();
        assert_eq!(rep.e_abs, 0.0);
        assert_eq!(rep.e_rel, 0.0);
    }

    #[test]
    fn constant_offset_closed_form() {
        let (g, map) = setup();
        let delta = 0.37;
        let traj: Vec<Vec<f64>> = (0..4).map(|k| (0..g.n_dofs()).map(|d| ((d + k) % 5) as f64).collect()).collect();
        let shifted: Vec<Vec<f64>> = traj.iter().map(|x| x.iter().map(|v| v + delta).collect()).collect();
        let rep = linf_l2_error_monolithic(&traj, &shifted, &map, &g).unwrap();
        let copies: usize = map.subdomains.iter().map(|s| s.n_local()).sum();
        let want = (g.hx * g.hy / 4.0 * delta * delta * copies as f64).sqrt();
        assert!((rep.e_abs - want).abs() <= 1e-12 * want);
    }

    #[test]
    fn timing_totals_and_speedup() {
        let mut a = TimingRecord::default();
        a.push(SolveTiming { local: 1.0, global: 2.0 });
        a.push(SolveTiming { local: 0.5, global: 0.5 });
        assert_eq!(a.total(), 4.0);
        assert_eq!(speedup(&a, &a), 1.0);
        let mut csv = Vec::new();
        a.write_csv(&mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert_eq!(text, "# ddnmrom-timing v1\nstep,local_s,global_s\n1,1e0,2e0\n2,5e-1,5e-1\n");
        assert_eq!(TimingRecord::read_csv(&text).unwrap(), a);
        assert!(TimingRecord::read_csv("step,local_s,global_s\n").is_err());
    }

    #[test]
    fn sweep_shapes() {
        let rows = pareto_sweep(&[12, 18, 24, 30, 36], &[6, 8, 10, 12, 14], |i, p| {
            Ok(vec![CaseOutcome {
                e_abs: 1.0 / i as f64,
                e_rel: 1.0 / p as f64,
                speedup: (i + p) as f64,
            }])
        })
        .unwrap();
        assert_eq!(rows.len(), 25);
        let mut out = Vec::new();
        write_pareto_csv(&mut out, &rows[..1]).unwrap();
        assert_eq!(
            String::from_utf8(out).unwrap(),
            "# ddnmrom-pareto v1\ninterior_dim,port_dim,e_abs,e_rel,speedup\n12,6,8.333333333333333e-2,1.6666666666666666e-1,1.8e1\n"
        );
    }
}
