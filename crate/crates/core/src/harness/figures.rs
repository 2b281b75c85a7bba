use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::svg::{line_chart_svg, Series};
use super::{run_experiment, trajectory_csv, write_file, ExperimentConfig, InitMode, Trajectory};
use crate::error::Result;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FigureView {
    /// `‖FFᵀ − X*‖₂` alone.
    Error,
    /// The signal, cross and complement blocks next to the total error.
    Decomposition,
}

#[derive(Clone, Debug)]
pub struct FigureSpec {
    pub name: &'static str,
    pub title: &'static str,
    pub view: FigureView,
    pub config: ExperimentConfig,
}

/// Exact-rank versus over-parameterized runs, from planted and from small
/// random starts, plus the block decomposition of both planted runs.
pub fn figure_configs() -> Vec<FigureSpec> {
    let run = |k: usize, mode: InitMode, iters: usize| {
        let mut c = ExperimentConfig {
            k,
            iters,
            seed: 1,
            ..Default::default()
        };
        c.init.mode = mode;
        c
    };
    vec![
        FigureSpec {
            name: "fig1a",
            title: "k = 3, planted start",
            view: FigureView::Error,
            config: run(3, InitMode::Planted, 5000),
        },
        FigureSpec {
            name: "fig1b",
            title: "k = 4, planted start",
            view: FigureView::Error,
            config: run(4, InitMode::Planted, 5000),
        },
        FigureSpec {
            name: "fig1c",
            title: "k = 3, random start",
            view: FigureView::Error,
            config: run(3, InitMode::Random, 5000),
        },
        FigureSpec {
            name: "fig1d",
            title: "k = 4, random start",
            view: FigureView::Error,
            config: run(4, InitMode::Random, 5000),
        },
        FigureSpec {
            name: "fig2a",
            title: "k = 3, block norms",
            view: FigureView::Decomposition,
            config: run(3, InitMode::Planted, 10000),
        },
        FigureSpec {
            name: "fig2b",
            title: "k = 4, block norms",
            view: FigureView::Decomposition,
            config: run(4, InitMode::Planted, 10000),
        },
    ]
}

fn series(traj: &Trajectory, view: FigureView) -> Vec<Series> {
    let col = |label: &str, f: fn(&crate::subspace::IterateMetrics) -> f64| Series {
        label: label.into(),
        points: traj.metrics.iter().map(|m| (m.t as f64, f(m))).collect(),
    };
    match view {
        FigureView::Error => vec![col("‖FFᵀ−X*‖₂", |m| m.err_spec)],
        FigureView::Decomposition => vec![
            col("‖SSᵀ−D_S‖₂", |m| m.ss_err),
            col("‖STᵀ‖₂", |m| m.st_norm),
            col("‖TTᵀ−D_T‖₂", |m| m.tt_err),
            col("‖FFᵀ−X*‖₂", |m| m.err_spec),
        ],
    }
}

/// Runs every figure concurrently and writes `<name>.csv` and `<name>.svg`
/// into `out_dir`. `iters` overrides the iteration counts when given.
pub fn reproduce_figures(out_dir: &Path, iters: Option<usize>) -> Result<Vec<PathBuf>> {
    let specs: Vec<FigureSpec> = figure_configs()
        .into_iter()
        .map(|mut s| {
            if let Some(i) = iters {
                s.config.iters = i;
            }
            s
        })
        .collect();
    let written: Vec<Result<Vec<PathBuf>>> = specs
        .par_iter()
        .map(|spec| {
            let traj = run_experiment(&spec.config)?;
            let csv = out_dir.join(format!("{}.csv", spec.name));
            let svg = out_dir.join(format!("{}.svg", spec.name));
            write_file(&csv, &trajectory_csv(&traj, false))?;
            write_file(&svg, &line_chart_svg(spec.title, "iteration", &series(&traj, spec.view)))?;
            Ok(vec![csv, svg])
        })
        .collect();
    let mut paths = Vec::new();
    for w in written {
        paths.extend(w?);
    }
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn six_distinct_figures() {
        let specs = figure_configs();
        assert_eq!(specs.len(), 6);
        for s in &specs {
            s.config.validate().unwrap();
        }
        let mut names: Vec<_> = specs.iter().map(|s| s.name).collect();
        names.dedup();
        assert_eq!(names.len(), 6);
    }
}
