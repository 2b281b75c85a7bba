use rayon::prelude::*;
use serde::Serialize;

use super::{run_experiment, ExperimentConfig};
use crate::error::{Error, Result};
use crate::problem::TailSpectrum;
use crate::rng::fnv1a;
use crate::stats::{loglog_fit, median, LineFit};

/// Fraction of the trajectory averaged into the plateau value.
pub const PLATEAU_FRACTION: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepParam {
    N,
    K,
    Sigma,
    D,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::N => "n",
            SweepParam::K => "k",
            SweepParam::Sigma => "sigma",
            SweepParam::D => "d",
        }
    }

    fn integral(self) -> bool {
        self != SweepParam::Sigma
    }

    fn apply(self, base: &ExperimentConfig, value: f64) -> Result<ExperimentConfig> {
        let mut c = base.clone();
        c.output = None;
        match self {
            SweepParam::N => c.n = value as usize,
            SweepParam::K => c.k = value as usize,
            SweepParam::Sigma => c.sigma = value,
            SweepParam::D => {
                if matches!(c.dt, TailSpectrum::Values(_)) {
                    return Err(Error::config("dt", "sweeping d needs dt = \"zeros\""));
                }
                c.d = value as usize;
            }
        }
        Ok(c)
    }
}

impl std::str::FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "n" => Ok(SweepParam::N),
            "k" => Ok(SweepParam::K),
            "sigma" => Ok(SweepParam::Sigma),
            "d" => Ok(SweepParam::D),
            _ => Err(Error::config("param", format!("unknown sweep parameter {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CellStatus {
    Ok,
    Diverged { iteration: usize },
    Failed(String),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepCell {
    pub value: f64,
    pub replicate: usize,
    pub cell_seed: u64,
    /// Median of `err_fro` over the final tenth of the run.
    pub plateau_err_fro: f64,
    pub plateau_err_fro_sq: f64,
    pub d_final: f64,
    pub status: CellStatus,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepResult {
    pub param: SweepParam,
    pub values: Vec<f64>,
    pub cells: Vec<SweepCell>,
    /// Log-log fit of the per-value median `plateau_err_fro_sq` against the
    /// swept value. `None` when undefined; see `slope_note`.
    pub slope: Option<LineFit>,
    pub slope_note: String,
}

/// Seed of one cell: the base seed mixed with a hash of the cell label.
pub fn cell_seed(base: u64, param: SweepParam, value: f64, replicate: usize) -> u64 {
    let label = if replicate == 0 {
        format!("{}={}", param.name(), value)
    } else {
        format!("{}={}#{}", param.name(), value, replicate)
    };
    base ^ fnv1a(label.as_bytes())
}

fn plateau(values: &[f64]) -> f64 {
    let w = ((values.len() as f64 * PLATEAU_FRACTION).ceil() as usize).max(1);
    median(&values[values.len() - w..])
}

fn run_cell(base: &ExperimentConfig, param: SweepParam, value: f64, replicate: usize) -> SweepCell {
    let seed = cell_seed(base.seed, param, value, replicate);
    let mut cell = SweepCell {
        value,
        replicate,
        cell_seed: seed,
        plateau_err_fro: f64::NAN,
        plateau_err_fro_sq: f64::NAN,
        d_final: f64::NAN,
        status: CellStatus::Ok,
    };
    let config = param.apply(base, value).map(|mut c| {
        c.seed = seed;
        c
    });
    match config.and_then(|c| run_experiment(&c)) {
        Ok(traj) => {
            let fro: Vec<f64> = traj.metrics.iter().map(|m| m.err_fro).collect();
            let sq: Vec<f64> = fro.iter().map(|x| x * x).collect();
            cell.plateau_err_fro = plateau(&fro);
            cell.plateau_err_fro_sq = plateau(&sq);
            cell.d_final = traj.metrics.last().map_or(f64::NAN, |m| m.d_max);
        }
        Err(Error::Diverged { iteration, .. }) => cell.status = CellStatus::Diverged { iteration },
        Err(e) => cell.status = CellStatus::Failed(e.to_string()),
    }
    cell
}

/// Runs one experiment per `(value, replicate)` in parallel. Cells are
/// independent and seeded from their labels, so the result does not depend
/// on the thread count.
pub fn sweep(base: &ExperimentConfig, param: SweepParam, values: &[f64], replicates: usize) -> Result<SweepResult> {
    if values.is_empty() {
        return Err(Error::config("values", "need at least one value"));
    }
    if replicates == 0 {
        return Err(Error::config("replicates", "must be at least 1"));
    }
    for (i, &v) in values.iter().enumerate() {
        if !v.is_finite() || v < 0.0 {
            return Err(Error::config("values", format!("{v} is not a finite non-negative number")));
        }
        if param.integral() && (v.fract() != 0.0 || v < 1.0) {
            return Err(Error::config("values", format!("{} takes positive integers, got {v}", param.name())));
        }
        if i > 0 && v <= values[i - 1] {
            return Err(Error::config("values", "must be strictly increasing"));
        }
    }
    let mut probe = param.apply(base, values[0])?;
    probe.seed = base.seed;
    probe.validate()?;

    let jobs: Vec<(f64, usize)> = values
        .iter()
        .flat_map(|&v| (0..replicates).map(move |r| (v, r)))
        .collect();
    let cells: Vec<SweepCell> = jobs.par_iter().map(|&(v, r)| run_cell(base, param, v, r)).collect();

    let (slope, slope_note) = fit_slope(base, param, values, &cells);
    Ok(SweepResult {
        param,
        values: values.to_vec(),
        cells,
        slope,
        slope_note,
    })
}

fn fit_slope(base: &ExperimentConfig, param: SweepParam, values: &[f64], cells: &[SweepCell]) -> (Option<LineFit>, String) {
    if cells.iter().any(|c| c.status != CellStatus::Ok) {
        return (None, "undefined: some cells did not finish".into());
    }
    let noiseless = match param {
        SweepParam::Sigma => values.iter().all(|&v| v == 0.0),
        _ => base.sigma == 0.0,
    };
    if noiseless {
        return (None, "undefined: noiseless, plateau sits at the numerical floor".into());
    }
    if values.len() < 2 {
        return (None, "undefined: need at least two values".into());
    }
    let medians: Vec<f64> = values
        .iter()
        .map(|&v| {
            let group: Vec<f64> = cells.iter().filter(|c| c.value == v).map(|c| c.plateau_err_fro_sq).collect();
            median(&group)
        })
        .collect();
    match loglog_fit(values, &medians) {
        Some(fit) => (Some(fit), "ok".into()),
        None => (None, "undefined: non-positive value or plateau".into()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> ExperimentConfig {
        ExperimentConfig {
            d: 6,
            r: 2,
            k: 2,
            n: 60,
            sigma: 0.1,
            ds: vec![1.0, 0.8],
            iters: 40,
            ..Default::default()
        }
    }

    #[test]
    fn cell_seeds_differ() {
        let a = cell_seed(7, SweepParam::N, 100.0, 0);
        let b = cell_seed(7, SweepParam::N, 200.0, 0);
        let c = cell_seed(7, SweepParam::N, 100.0, 1);
        assert!(a != b && a != c && b != c);
        assert_eq!(a, 7 ^ fnv1a(b"n=100"));
    }

    #[test]
    fn plateau_uses_final_tenth() {
        let v: Vec<f64> = (0..100).map(|i| i as f64).collect();
        assert_eq!(plateau(&v), 94.5);
        assert_eq!(plateau(&[3.0]), 3.0);
    }

    #[test]
    fn rejects_bad_values() {
        assert!(sweep(&base(), SweepParam::N, &[100.0, 50.0], 1).is_err());
        assert!(sweep(&base(), SweepParam::N, &[10.5], 1).is_err());
        assert!(sweep(&base(), SweepParam::N, &[], 1).is_err());
        assert!("q".parse::<SweepParam>().is_err());
    }

    #[test]
    fn sweep_over_n_produces_cells() {
        let res = sweep(&base(), SweepParam::N, &[60.0, 120.0], 2).unwrap();
        assert_eq!(res.cells.len(), 4);
        assert!(res.cells.iter().all(|c| c.status == CellStatus::Ok));
        assert!(res.slope.is_some(), "{}", res.slope_note);
    }

    #[test]
    fn noiseless_slope_is_undefined() {
        let mut b = base();
        b.sigma = 0.0;
        let res = sweep(&b, SweepParam::N, &[60.0, 120.0], 1).unwrap();
        assert!(res.slope.is_none());
        assert!(res.slope_note.contains("noiseless"));
    }

    #[test]
    fn thread_count_does_not_change_cells() {
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let a = one.install(|| sweep(&base(), SweepParam::K, &[2.0, 3.0], 1).unwrap());
        let b = sweep(&base(), SweepParam::K, &[2.0, 3.0], 1).unwrap();
        assert_eq!(a, b);
    }
}
