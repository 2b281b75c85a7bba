use std::fmt::Write as _;
use std::path::Path;

use super::sweep::{CellStatus, SweepResult};
use super::Trajectory;
use crate::error::{Error, Result};
use crate::subspace::IterateMetrics;

pub const TRAJECTORY_HEADER: &str =
    "t,ss_err,st_norm,tt_norm,tt_err,D,A,err_spec,err_fro,grad_norm,delta_norm,elapsed_ms";

pub const SWEEP_HEADER: &str = "param,value,cell_seed,plateau_err_fro,plateau_err_fro_sq,D_final,status";

/// Trajectory as CSV. `elapsed_ms` stays empty unless `timing` is set, so
/// that repeated runs produce identical bytes.
pub fn trajectory_csv(traj: &Trajectory, timing: bool) -> String {
    let mut out = String::with_capacity(160 * (traj.len() + 1));
    out.push_str(TRAJECTORY_HEADER);
    out.push('\n');
    for (i, m) in traj.metrics.iter().enumerate() {
        let _ = write!(
            out,
            "{},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},",
            m.t, m.ss_err, m.st_norm, m.tt_norm, m.tt_err, m.d_max, m.a, m.err_spec, m.err_fro, m.grad_norm
        );
        if let Some(x) = m.delta_norm {
            let _ = write!(out, "{x:e}");
        }
        out.push(',');
        if timing {
            if let Some(ms) = traj.elapsed_ms.get(i) {
                let _ = write!(out, "{ms:e}");
            }
        }
        out.push('\n');
    }
    out
}

/// Parses a trajectory CSV back into metrics and optional timings.
pub fn read_trajectory_csv(text: &str) -> Result<(Vec<IterateMetrics>, Vec<Option<f64>>)> {
    let parse_err = |line: usize, reason: String| Error::Parse {
        what: format!("trajectory csv line {line}"),
        reason,
    };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == TRAJECTORY_HEADER => {}
        Some((_, h)) => return Err(parse_err(1, format!("unexpected header {h:?}"))),
        None => return Err(parse_err(1, "empty file".into())),
    }
    let mut metrics = Vec::new();
    let mut timings = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 12 {
            return Err(parse_err(line_no, format!("expected 12 fields, found {}", fields.len())));
        }
        let num = |j: usize| -> Result<f64> {
            fields[j]
                .trim()
                .parse::<f64>()
                .map_err(|e| parse_err(line_no, format!("field {j}: {e}")))
        };
        let opt = |j: usize| -> Result<Option<f64>> {
            if fields[j].trim().is_empty() {
                Ok(None)
            } else {
                num(j).map(Some)
            }
        };
        let t = fields[0]
            .trim()
            .parse::<usize>()
            .map_err(|e| parse_err(line_no, format!("t: {e}")))?;
        metrics.push(IterateMetrics {
            t,
            ss_err: num(1)?,
            st_norm: num(2)?,
            tt_norm: num(3)?,
            tt_err: num(4)?,
            d_max: num(5)?,
            a: num(6)?,
            err_spec: num(7)?,
            err_fro: num(8)?,
            grad_norm: num(9)?,
            delta_norm: opt(10)?,
        });
        timings.push(opt(11)?);
    }
    Ok((metrics, timings))
}

pub fn sweep_csv(result: &SweepResult) -> String {
    let mut out = String::from(SWEEP_HEADER);
    out.push('\n');
    for c in &result.cells {
        let status = match &c.status {
            CellStatus::Ok => "ok".to_string(),
            CellStatus::Diverged { iteration } => format!("diverged@{iteration}"),
            CellStatus::Failed(msg) => format!("failed:{}", msg.replace([',', '\n'], ";")),
        };
        let _ = writeln!(
            out,
            "{},{},{},{:e},{:e},{:e},{}",
            result.param.name(),
            c.value,
            c.cell_seed,
            c.plateau_err_fro,
            c.plateau_err_fro_sq,
            c.d_final,
            status
        );
    }
    out
}

/// Writes `contents`, creating parent directories as needed.
pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}
