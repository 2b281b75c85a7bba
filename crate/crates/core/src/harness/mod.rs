//! Experiment orchestration: configuration, full runs, sweeps, phase
//! diagnostics, and CSV/SVG output.

mod csv;
mod figures;
mod phases;
mod svg;
mod sweep;

use std::path::PathBuf;
use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use self::csv::{read_trajectory_csv, sweep_csv, trajectory_csv, write_file, TRAJECTORY_HEADER, SWEEP_HEADER};
pub use self::figures::{figure_configs, reproduce_figures, FigureSpec, FigureView};
pub use self::phases::{detect_phases, detect_phases_on, fit_decay_window, Column, PhaseParams, PhaseReport, TailFit};
pub use self::svg::{line_chart_svg, Series};
pub use self::sweep::{cell_seed, sweep, CellStatus, SweepCell, SweepParam, SweepResult};

use crate::error::{Error, Result};
use crate::gradient::{error_matrix, fgd_step, residual_operator, theory_step_size, FactorState, StepSize};
use crate::linalg::{sym_spectral_unchecked, Matrix};
use crate::problem::{
    generate_ground_truth, generate_sensing_for, EntryScale, GroundTruth, MemoryMode, SensingDistribution,
    SensingOptions, SensingSet, TailSpectrum,
};
use crate::subspace::{
    assemble, decompose, norms_of, planted_init, random_init, spectral_init, Constants, DerivedScales,
    IterateMetrics, RHO_MAX,
};

/// Runs abort once `‖FFᵀ − X*‖₂` exceeds this multiple of σ₁.
pub const DIVERGENCE_FACTOR: f64 = 1e6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EtaSpec {
    Value(f64),
    Named(EtaName),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EtaName {
    /// `1/(100·σ₁)`.
    Theory,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitMode {
    #[default]
    Planted,
    Spectral,
    Random,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitConfig {
    pub mode: InitMode,
    /// Basin radius in units of σ_r (planted mode).
    pub rho: f64,
    /// Entry standard deviation (random mode).
    pub scale: f64,
}

impl Default for InitConfig {
    fn default() -> Self {
        InitConfig {
            mode: InitMode::Planted,
            rho: RHO_MAX,
            scale: 1e-3,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GradientMode {
    #[default]
    Sample,
    Population,
}

/// Every knob of a run. Missing JSON fields take the values of
/// [`ExperimentConfig::default`]: d = 20, r = 3, k = 4, n = 200, σ = 0,
/// spectrum (1, 0.9, 0.8), η = 0.1, 5000 iterations, planted start.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub d: usize,
    pub r: usize,
    pub k: usize,
    pub n: usize,
    pub sigma: f64,
    pub ds: Vec<f64>,
    pub dt: TailSpectrum,
    pub eta: EtaSpec,
    pub iters: usize,
    pub seed: u64,
    pub init: InitConfig,
    pub gradient_mode: GradientMode,
    pub distribution: SensingDistribution,
    pub entry_scale: EntryScale,
    pub track_delta: bool,
    pub delta_every: usize,
    pub memory_mode: MemoryMode,
    pub constants: Constants,
    pub output: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            d: 20,
            r: 3,
            k: 4,
            n: 200,
            sigma: 0.0,
            ds: vec![1.0, 0.9, 0.8],
            dt: TailSpectrum::zeros(),
            eta: EtaSpec::Value(0.1),
            iters: 5000,
            seed: 0,
            init: InitConfig::default(),
            gradient_mode: GradientMode::Sample,
            distribution: SensingDistribution::Gaussian,
            entry_scale: EntryScale::Unit,
            track_delta: false,
            delta_every: 1,
            memory_mode: MemoryMode::Dense,
            constants: Constants::default(),
            output: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse {
            what: "experiment config".into(),
            reason: e.to_string(),
        })
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Field-level checks that do not need the ground truth.
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::config("d", "must be positive"));
        }
        if self.r == 0 || self.r > self.d {
            return Err(Error::config("r", format!("must satisfy 1 <= r <= d = {}", self.d)));
        }
        if self.k == 0 {
            return Err(Error::config("k", "must be positive"));
        }
        if self.n == 0 {
            return Err(Error::config("n", "must be positive"));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::config("sigma", "must be finite and >= 0"));
        }
        if self.ds.len() != self.r {
            return Err(Error::config("ds", format!("needs r = {} entries", self.r)));
        }
        if let TailSpectrum::Values(v) = &self.dt {
            if v.len() != self.d - self.r {
                return Err(Error::config("dt", format!("needs d - r = {} entries", self.d - self.r)));
            }
        }
        if let EtaSpec::Value(eta) = self.eta {
            if !(eta > 0.0 && eta.is_finite()) {
                return Err(Error::config("eta", "must be positive or \"theory\""));
            }
        }
        if self.iters == 0 {
            return Err(Error::config("iters", "must be at least 1"));
        }
        if self.delta_every == 0 {
            return Err(Error::config("delta_every", "must be at least 1"));
        }
        match self.init.mode {
            InitMode::Planted => {
                if self.k < self.r {
                    return Err(Error::config("k", "planted init needs k >= r"));
                }
                if !(self.init.rho > 0.0 && self.init.rho <= RHO_MAX) {
                    return Err(Error::config("init.rho", format!("must lie in (0, {RHO_MAX}]")));
                }
            }
            InitMode::Random => {
                if !(self.init.scale > 0.0 && self.init.scale.is_finite()) {
                    return Err(Error::config("init.scale", "must be positive"));
                }
            }
            InitMode::Spectral => {
                if self.k > self.d {
                    return Err(Error::config("k", "spectral init needs k <= d"));
                }
            }
        }
        let c = self.constants;
        if [c.floor, c.delta_rate, c.delta_noise].iter().any(|v| !(v >= &0.0 && v.is_finite())) {
            return Err(Error::config("constants", "must be finite and >= 0"));
        }
        Ok(())
    }

    fn sensing_options(&self) -> SensingOptions {
        SensingOptions {
            distribution: self.distribution,
            entry_scale: self.entry_scale,
            memory: self.memory_mode,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Trajectory {
    pub config: ExperimentConfig,
    /// One row per recorded iterate, `t = 0, 1, …`.
    pub metrics: Vec<IterateMetrics>,
    /// Wall-clock time spent on each row.
    pub elapsed_ms: Vec<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.metrics.len()
    }

    pub fn is_empty(&self) -> bool {
        self.metrics.is_empty()
    }

    pub fn column(&self, c: Column) -> Vec<f64> {
        self.metrics.iter().map(|m| c.get(m)).collect()
    }

    /// First `t` with `err_fro < threshold`.
    pub fn first_below(&self, threshold: f64) -> Option<usize> {
        self.metrics.iter().find(|m| m.err_fro < threshold).map(|m| m.t)
    }
}

/// A configured run: ground truth, data and the current iterate.
#[derive(Clone, Debug)]
pub struct Experiment {
    config: ExperimentConfig,
    gt: GroundTruth,
    sensing: Option<SensingSet>,
    scales: DerivedScales,
    step: StepSize,
    state: FactorState,
}

impl Experiment {
    pub fn new(config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let dt = config.dt.resolve(config.d - config.r);
        let gt = generate_ground_truth(config.d, config.r, &config.ds, &dt, config.seed)
            .map_err(|e| Error::config("ds/dt", e.to_string()))?;
        let sample_mode = config.gradient_mode == GradientMode::Sample;
        let needs_data = sample_mode || config.init.mode == InitMode::Spectral;
        let sensing = if needs_data {
            Some(generate_sensing_for(
                gt.xstar(),
                config.n,
                config.sigma,
                config.sensing_options(),
                config.seed,
            )?)
        } else {
            None
        };
        let state = match config.init.mode {
            InitMode::Planted => planted_init(&gt, config.k, config.init.rho, config.seed)
                .map_err(|e| Error::config("init", e.to_string()))?,
            InitMode::Spectral => spectral_init(sensing.as_ref().expect("built above"), config.k)?,
            InitMode::Random => random_init(config.d, config.k, config.init.scale, config.seed)?,
        };
        let step = match config.eta {
            EtaSpec::Value(eta) => StepSize::explicit(eta)?,
            EtaSpec::Named(EtaName::Theory) => theory_step_size(&gt),
        };
        let scales = if sample_mode {
            DerivedScales::new(&gt, config.n, config.k, config.sigma, config.constants)
        } else {
            DerivedScales::population(config.constants)
        };
        let sensing = if sample_mode { sensing } else { None };
        Ok(Experiment {
            config,
            gt,
            sensing,
            scales,
            step,
            state,
        })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }
    pub fn ground_truth(&self) -> &GroundTruth {
        &self.gt
    }
    /// `None` in population mode.
    pub fn sensing(&self) -> Option<&SensingSet> {
        self.sensing.as_ref()
    }
    pub fn scales(&self) -> &DerivedScales {
        &self.scales
    }
    pub fn step(&self) -> StepSize {
        self.step
    }
    pub fn state(&self) -> &FactorState {
        &self.state
    }

    /// Gradient at the current iterate and, if requested, `‖Δ‖₂`.
    fn gradient(&self, with_delta: bool) -> Result<(Matrix, Option<f64>)> {
        let f = &self.state.f;
        let e = error_matrix(f, &self.gt);
        match &self.sensing {
            Some(s) => {
                let w = residual_operator(f, s)?;
                let delta = with_delta.then(|| sym_spectral_unchecked(&w.sub(&e)));
                Ok((w.matrix().matmul(f), delta))
            }
            None => Ok((e.matrix().matmul(f), with_delta.then_some(0.0))),
        }
    }

    fn record(&self, with_delta: bool) -> Result<(IterateMetrics, Matrix)> {
        let f = &self.state.f;
        let (grad, delta) = self.gradient(with_delta)?;
        let dec = decompose(f, &self.gt)?;
        let norms = norms_of(&dec.s, &dec.t, f, &self.gt);
        let m = assemble(self.state.iter, norms, &self.scales, grad.fro(), delta);
        Ok((m, grad))
    }

    /// Metrics of the current iterate without stepping.
    pub fn current_metrics(&self) -> Result<IterateMetrics> {
        Ok(self.record(self.config.track_delta)?.0)
    }

    /// Iterates `config.iters` steps, recording every iterate.
    pub fn run(mut self) -> Result<Trajectory> {
        let iters = self.config.iters;
        let mut traj = Trajectory {
            config: self.config.clone(),
            metrics: Vec::with_capacity(iters + 1),
            elapsed_ms: Vec::with_capacity(iters + 1),
        };
        let limit = DIVERGENCE_FACTOR * self.gt.sigma1();
        for t in 0..=iters {
            let clock = Instant::now();
            let with_delta = self.config.track_delta && t % self.config.delta_every == 0;
            let finite = self.state.f.is_finite();
            let recorded = if finite { Some(self.record(with_delta)?) } else { None };
            let err_spec = recorded.as_ref().map_or(f64::INFINITY, |(m, _)| m.err_spec);
            if err_spec.is_nan() || err_spec > limit || recorded.as_ref().is_some_and(|(m, _)| !m.grad_norm.is_finite()) {
                return Err(Error::Diverged {
                    iteration: t,
                    err_spec,
                    partial: Box::new(traj),
                });
            }
            let (m, grad) = recorded.expect("finite iterate");
            traj.metrics.push(m);
            if t < iters {
                self.state = fgd_step(&self.state, &grad, self.step)?;
            }
            traj.elapsed_ms.push(clock.elapsed().as_secs_f64() * 1e3);
        }
        Ok(traj)
    }
}

/// Builds and runs `config`; writes the trajectory CSV if `output` is set.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Trajectory> {
    let traj = Experiment::new(config.clone())?.run()?;
    if let Some(path) = &config.output {
        write_file(path, &trajectory_csv(&traj, false))?;
    }
    Ok(traj)
}

/// Sizes the global worker pool from `MSENSE_THREADS` if it is set.
/// Has no effect once the pool exists.
pub fn init_threads_from_env() -> Result<()> {
    if let Ok(v) = std::env::var("MSENSE_THREADS") {
        let n: usize = v
            .trim()
            .parse()
            .map_err(|_| Error::config("MSENSE_THREADS", format!("not a thread count: {v:?}")))?;
        if n == 0 {
            return Err(Error::config("MSENSE_THREADS", "must be at least 1"));
        }
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ExperimentConfig {
        ExperimentConfig {
            d: 8,
            r: 2,
            k: 3,
            n: 120,
            ds: vec![1.0, 0.8],
            iters: 50,
            ..Default::default()
        }
    }

    #[test]
    fn default_config_round_trips() {
        let c = ExperimentConfig::default();
        assert_eq!(ExperimentConfig::from_json(&c.to_json()).unwrap(), c);
        assert_eq!(ExperimentConfig::from_json("{}").unwrap(), c);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(ExperimentConfig::from_json(r#"{"d": 5, "bogus": 1}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"init": {"mode": "planted", "radius": 1}}"#).is_err());
    }

    #[test]
    fn eta_accepts_number_or_theory() {
        let c = ExperimentConfig::from_json(r#"{"eta": "theory"}"#).unwrap();
        assert_eq!(c.eta, EtaSpec::Named(EtaName::Theory));
        let c = ExperimentConfig::from_json(r#"{"eta": 0.05}"#).unwrap();
        assert_eq!(c.eta, EtaSpec::Value(0.05));
        assert!(ExperimentConfig::from_json(r#"{"eta": "fast"}"#).is_err());
    }

    #[test]
    fn validation_names_the_field() {
        let bad = |f: fn(&mut ExperimentConfig), field: &str| {
            let mut c = small();
            f(&mut c);
            match c.validate() {
                Err(Error::InvalidConfig { field: got, .. }) => assert_eq!(got, field),
                other => panic!("expected {field}, got {other:?}"),
            }
        };
        bad(|c| c.k = 1, "k");
        bad(|c| c.iters = 0, "iters");
        bad(|c| c.sigma = -1.0, "sigma");
        bad(|c| c.ds = vec![1.0], "ds");
        bad(|c| c.eta = EtaSpec::Value(0.0), "eta");
        bad(|c| c.init.rho = 0.5, "init.rho");
        bad(|c| c.delta_every = 0, "delta_every");
        bad(|c| c.dt = TailSpectrum::Values(vec![0.0]), "dt");
    }

    #[test]
    fn record_only_experiment_holds_init_metrics() {
        let e = Experiment::new(small()).unwrap();
        let m = e.current_metrics().unwrap();
        assert_eq!(m.t, 0);
        assert!(m.err_spec <= 0.7 * 0.07 * 0.8 + 1e-12);
    }

    #[test]
    fn run_records_every_iterate() {
        let traj = run_experiment(&small()).unwrap();
        assert_eq!(traj.len(), 51);
        assert!(traj.metrics.windows(2).all(|w| w[1].t == w[0].t + 1));
        assert!(traj.metrics.iter().all(|m| m.delta_norm.is_none()));
    }

    #[test]
    fn delta_every_controls_tracking() {
        let mut c = small();
        c.track_delta = true;
        c.delta_every = 10;
        let traj = run_experiment(&c).unwrap();
        for m in &traj.metrics {
            assert_eq!(m.delta_norm.is_some(), m.t % 10 == 0);
        }
    }

    #[test]
    fn divergence_is_reported_with_partial_trajectory() {
        let mut c = small();
        c.eta = EtaSpec::Value(50.0);
        c.iters = 200;
        match run_experiment(&c) {
            Err(Error::Diverged { iteration, partial, .. }) => {
                assert_eq!(partial.len(), iteration);
                assert!(iteration > 0);
            }
            other => panic!("expected divergence, got {:?}", other.map(|t| t.len())),
        }
    }

    #[test]
    fn population_mode_skips_sensing() {
        let mut c = small();
        c.gradient_mode = GradientMode::Population;
        c.track_delta = true;
        let e = Experiment::new(c).unwrap();
        assert!(e.sensing().is_none());
        assert_eq!(e.scales().eps_stat, 0.0);
        let traj = e.run().unwrap();
        assert!(traj.metrics.iter().all(|m| m.delta_norm == Some(0.0)));
    }

    #[test]
    fn init_modes_build() {
        for mode in [InitMode::Planted, InitMode::Spectral, InitMode::Random] {
            let mut c = small();
            c.init.mode = mode;
            c.iters = 3;
            assert_eq!(run_experiment(&c).unwrap().len(), 4);
        }
    }
}
