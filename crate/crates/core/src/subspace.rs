//! Signal/complement decomposition of iterates, the tracked error norms,
//! initializations, and numerical checks of the per-step contraction bounds.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gradient::{error_matrix, op_mu, op_mv, weighted_sum, FactorState};
use crate::linalg::{
    packed_len, spectral_unchecked, sym_eig, sym_spectral_unchecked, Matrix, SymMatrix,
};
use crate::problem::{GroundTruth, SensingSet};
use crate::rng::{stream, Purpose};

/// `F = U·S + V·T`.
#[derive(Clone, Debug, PartialEq)]
pub struct Decomposition {
    /// `Uᵀ F`, r×k.
    pub s: Matrix,
    /// `Vᵀ F`, (d−r)×k.
    pub t: Matrix,
}

impl Decomposition {
    pub fn recompose(&self, gt: &GroundTruth) -> Matrix {
        gt.u().matmul(&self.s).add(&gt.v().matmul(&self.t))
    }
}

pub fn decompose(f: &Matrix, gt: &GroundTruth) -> Result<Decomposition> {
    if f.rows() != gt.d() {
        return Err(Error::invalid(format!(
            "factor has {} rows, ground truth dimension is {}",
            f.rows(),
            gt.d()
        )));
    }
    Ok(Decomposition {
        s: gt.u().t_matmul(f),
        t: gt.v().t_matmul(f),
    })
}

/// Multipliers in the statistical floor and in the deviation hypothesis.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Constants {
    /// `A = D − floor·ε_stat`.
    pub floor: f64,
    /// Coefficient of `√(kd log d/n)·D` in the deviation hypothesis.
    pub delta_rate: f64,
    /// Coefficient of `√(d log d/n)·σ` in the deviation hypothesis.
    pub delta_noise: f64,
}

impl Default for Constants {
    fn default() -> Self {
        Constants {
            floor: 50.0,
            delta_rate: 10.0,
            delta_noise: 4.0,
        }
    }
}

/// `√(d ln d / n)`; zero for d = 1.
pub fn rate(d: usize, n: usize) -> f64 {
    let d = d as f64;
    (d * d.ln() / n as f64).sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DerivedScales {
    /// `κ·√(d ln d/n)·σ`.
    pub eps_stat: f64,
    /// `√(k κ² d ln d/n)·σ_r`.
    pub eps_comp: f64,
    pub constants: Constants,
}

impl DerivedScales {
    pub fn new(gt: &GroundTruth, n: usize, k: usize, sigma: f64, constants: Constants) -> Self {
        let base = rate(gt.d(), n);
        DerivedScales {
            eps_stat: gt.kappa() * base * sigma,
            eps_comp: (k as f64).sqrt() * gt.kappa() * base * gt.sigma_r(),
            constants,
        }
    }

    /// Infinite-sample limit: both scales vanish.
    pub fn population(constants: Constants) -> Self {
        DerivedScales {
            eps_stat: 0.0,
            eps_comp: 0.0,
            constants,
        }
    }

    /// `floor·ε_stat`.
    pub fn floor(&self) -> f64 {
        self.constants.floor * self.eps_stat
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterateMetrics {
    pub t: usize,
    pub ss_err: f64,
    pub st_norm: f64,
    pub tt_norm: f64,
    pub tt_err: f64,
    #[serde(rename = "D")]
    pub d_max: f64,
    #[serde(rename = "A")]
    pub a: f64,
    pub err_spec: f64,
    pub err_fro: f64,
    pub grad_norm: f64,
    pub delta_norm: Option<f64>,
}

/// Norms that depend only on `F`, without any gradient.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Norms {
    pub ss_err: f64,
    pub st_norm: f64,
    pub tt_norm: f64,
    pub tt_err: f64,
    pub err_spec: f64,
    pub err_fro: f64,
}

impl Norms {
    pub fn d_max(&self) -> f64 {
        self.ss_err.max(self.tt_norm).max(self.st_norm)
    }
}

pub(crate) fn norms_of(s: &Matrix, t: &Matrix, f: &Matrix, gt: &GroundTruth) -> Norms {
    let ss_err = sym_spectral_unchecked(&s.gram_outer().sub_diag(gt.ds()));
    let st_norm = spectral_unchecked(&s.matmul_t(t));
    let tt_norm = if t.rows() == 0 {
        0.0
    } else {
        spectral_unchecked(t).powi(2)
    };
    let tt_err = if gt.dt().iter().all(|&x| x == 0.0) {
        tt_norm
    } else {
        sym_spectral_unchecked(&t.gram_outer().sub_diag(gt.dt()))
    };
    let e = error_matrix(f, gt);
    Norms {
        ss_err,
        st_norm,
        tt_norm,
        tt_err,
        err_spec: sym_spectral_unchecked(&e),
        err_fro: e.matrix().fro(),
    }
}

/// Assembles metrics from the norms, a gradient and an optional `‖Δ‖₂`.
pub(crate) fn assemble(t: usize, n: Norms, scales: &DerivedScales, grad_norm: f64, delta_norm: Option<f64>) -> IterateMetrics {
    let d_max = n.d_max();
    IterateMetrics {
        t,
        ss_err: n.ss_err,
        st_norm: n.st_norm,
        tt_norm: n.tt_norm,
        tt_err: n.tt_err,
        d_max,
        a: (d_max - scales.floor()).max(0.0),
        err_spec: n.err_spec,
        err_fro: n.err_fro,
        grad_norm,
        delta_norm,
    }
}

/// Every tracked quantity at `F`, with `t = 0`.
///
/// `grad_norm` is the Frobenius norm of the sample gradient when a sensing
/// set is given and of the population gradient otherwise.
pub fn compute_metrics(
    f: &Matrix,
    gt: &GroundTruth,
    scales: &DerivedScales,
    s: Option<&SensingSet>,
    track_delta: bool,
) -> Result<IterateMetrics> {
    if track_delta && s.is_none() {
        return Err(Error::invalid("tracking the deviation norm needs a sensing set"));
    }
    let dec = decompose(f, gt)?;
    if !f.is_finite() {
        return Err(Error::invalid("factor has non-finite entries"));
    }
    let norms = norms_of(&dec.s, &dec.t, f, gt);
    let (grad_norm, delta_norm) = match s {
        Some(s) => {
            let w = crate::gradient::residual_operator(f, s)?;
            let g = w.matrix().matmul(f).fro();
            let delta = track_delta.then(|| sym_spectral_unchecked(&w.sub(&error_matrix(f, gt))));
            (g, delta)
        }
        None => (error_matrix(f, gt).matrix().matmul(f).fro(), None),
    };
    Ok(assemble(0, norms, scales, grad_norm, delta_norm))
}

fn check_rho(rho: f64) -> Result<()> {
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(Error::invalid(format!("rho must be positive, got {rho}")));
    }
    Ok(())
}

/// Largest `ρ` accepted by [`planted_init`].
pub const RHO_MAX: f64 = 0.07;
/// Ratio between the construction target and the basin radius.
pub const PREMISE_RATIO: f64 = 0.7;

/// `F₀ = exact factor + c·P` with Gaussian `P`, where `c` is found by
/// bisection so that `‖F₀F₀ᵀ − X*‖₂ = 0.7·ρ·σ_r·u`, `u ~ U(0.5, 1]`.
pub fn planted_init(gt: &GroundTruth, k: usize, rho: f64, seed: u64) -> Result<FactorState> {
    check_rho(rho)?;
    if rho > RHO_MAX {
        return Err(Error::invalid(format!("rho must be at most {RHO_MAX}, got {rho}")));
    }
    if k < gt.r() {
        return Err(Error::invalid(format!(
            "planted init needs k >= r, got k={k}, r={}",
            gt.r()
        )));
    }
    let mut rng = stream(seed, Purpose::Init, 0);
    let u: f64 = 1.0 - 0.5 * rng.random::<f64>();
    let target = PREMISE_RATIO * rho * gt.sigma_r() * u;
    let p = Matrix::from_fn(gt.d(), k, |_, _| rng.sample(StandardNormal));
    let base = gt.exact_factor(k);
    let dist = |c: f64| sym_spectral_unchecked(&error_matrix(&base.add_scaled(c, &p), gt));

    let at_zero = dist(0.0);
    if at_zero > target {
        return Err(Error::invalid(format!(
            "tail spectrum alone puts the exact factor at distance {at_zero:e}, above the target {target:e}"
        )));
    }
    let mut hi = 1.0;
    while dist(hi) < target {
        hi *= 2.0;
        if hi > 1e12 {
            return Err(Error::NumericFailure {
                message: "could not bracket the planted perturbation scale".into(),
                residual: target,
            });
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if dist(mid) <= target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    FactorState::new(base.add_scaled(lo, &p))
}

/// Top-k eigenpairs (by algebraic value) of `M = (1/n) Σ y_i A_i`, with
/// negative eigenvalues clipped to zero.
pub fn spectral_init(s: &SensingSet, k: usize) -> Result<FactorState> {
    let d = s.d();
    if k == 0 || k > d {
        return Err(Error::invalid(format!("spectral init needs 1 <= k <= d, got k={k}, d={d}")));
    }
    let y = s.observations();
    let zeros = vec![0.0; packed_len(d)];
    let m = SymMatrix::from_packed_upper(d, &weighted_sum(s, &zeros, |i, _| y[i]))?;
    let eig = sym_eig(&m)?;
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.values[b].total_cmp(&eig.values[a]));
    let f = Matrix::from_fn(d, k, |i, j| {
        let idx = order[j];
        eig.vectors[(i, idx)] * eig.values[idx].max(0.0).sqrt()
    });
    FactorState::new(f)
}

/// Entries iid `N(0, scale²)`.
pub fn random_init(d: usize, k: usize, scale: f64, seed: u64) -> Result<FactorState> {
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::invalid(format!("random init scale must be positive, got {scale}")));
    }
    let mut rng = stream(seed, Purpose::Init, 1);
    FactorState::new(Matrix::from_fn(d, k, |_, _| scale * rng.sample::<f64, _>(StandardNormal)))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InitReport {
    /// `‖F₀F₀ᵀ − X*‖₂`.
    pub lhs: f64,
    pub ss0: f64,
    /// `‖T₀T₀ᵀ − DT*‖₂`.
    pub tt0: f64,
    pub st0: f64,
    pub rho: f64,
    /// `ρ·σ_r`, the basin radius.
    pub basin: f64,
    /// `0.7·ρ·σ_r`, the tighter radius that guarantees the decomposed bound.
    pub premise_radius: f64,
    /// `lhs ≤ ρσ_r`.
    pub assumption_ok: bool,
    /// `lhs ≤ 0.7ρσ_r`.
    pub premise_ok: bool,
    /// `max(ss0, tt0, st0) ≤ ρσ_r`.
    pub conclusion_ok: bool,
    /// The premise implies the conclusion (vacuously true without the premise).
    pub lemma_ok: bool,
}

pub fn check_initialization(f0: &Matrix, gt: &GroundTruth, rho: f64) -> Result<InitReport> {
    check_rho(rho)?;
    let dec = decompose(f0, gt)?;
    if !f0.is_finite() {
        return Err(Error::invalid("factor has non-finite entries"));
    }
    let n = norms_of(&dec.s, &dec.t, f0, gt);
    let basin = rho * gt.sigma_r();
    let premise_radius = PREMISE_RATIO * basin;
    let premise_ok = n.err_spec <= premise_radius;
    let conclusion_ok = n.ss_err.max(n.tt_err).max(n.st_norm) <= basin;
    Ok(InitReport {
        lhs: n.err_spec,
        ss0: n.ss_err,
        tt0: n.tt_err,
        st0: n.st_norm,
        rho,
        basin,
        premise_radius,
        assumption_ok: n.err_spec <= basin,
        premise_ok,
        conclusion_ok,
        lemma_ok: !premise_ok || conclusion_ok,
    })
}

/// Radius of the region on which the population bounds are checked, in units of σ_r.
pub const REGION_RADIUS: f64 = 0.1;
/// Slack allowed on each population inequality, in units of σ_r.
pub const POPULATION_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InequalityCheck {
    pub name: &'static str,
    pub lhs: f64,
    pub rhs: f64,
    /// `rhs − lhs`.
    pub slack: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ContractionReport {
    pub checks: Vec<InequalityCheck>,
}

impl ContractionReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn get(&self, name: &str) -> Option<&InequalityCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Names of the population inequalities, in report order.
pub const POPULATION_CHECKS: [&str; 8] = [
    "signal_error",
    "cross_product",
    "complement_gram",
    "complement_error",
    "signal_half_step",
    "signal_cross_half_step",
    "complement_cross_half_step",
    "complement_half_step",
];

fn region_norms(s: &Matrix, t: &Matrix, gt: &GroundTruth) -> (f64, f64, f64) {
    let ss = sym_spectral_unchecked(&s.gram_outer().sub_diag(gt.ds()));
    let tt = sym_spectral_unchecked(&t.gram_outer().sub_diag(gt.dt()));
    let st = spectral_unchecked(&s.matmul_t(t));
    (ss, tt, st)
}

fn in_region(s: &Matrix, t: &Matrix, gt: &GroundTruth) -> bool {
    let (ss, tt, st) = region_norms(s, t, gt);
    let radius = REGION_RADIUS * gt.sigma_r();
    ss <= radius && tt <= radius && st <= radius
}

/// Evaluates both sides of the eight one-step population bounds at `(S, T)`.
///
/// With `S' = M_U(S)`, `T' = M_V(T)`, `D_S = diag(ds)`, `D_T = diag(dt)`:
///
/// | name | lhs | rhs |
/// |---|---|---|
/// | signal_error | ‖D_S − S'S'ᵀ‖ | (1−ησ_r)‖D_S − SSᵀ‖ + 3η‖STᵀ‖² |
/// | cross_product | ‖S'T'ᵀ‖ | (1−ησ_r)‖STᵀ‖ |
/// | complement_gram | ‖T'T'ᵀ‖ | ‖TTᵀ‖(1 − η‖TTᵀ‖ + 2η‖D_T‖) |
/// | complement_error | ‖T'T'ᵀ − D_T‖ | ‖TTᵀ − D_T‖·‖I − 2ηTTᵀ‖ + 3η‖STᵀ‖² |
/// | signal_half_step | ‖D_S − S'Sᵀ‖ | (1−ησ_r)‖D_S − SSᵀ‖ + η‖STᵀ‖² |
/// | signal_cross_half_step | ‖S'Tᵀ‖ | ‖STᵀ‖ |
/// | complement_cross_half_step | ‖T'Sᵀ‖ | ‖STᵀ‖ |
/// | complement_half_step | ‖T'Tᵀ‖ | ‖TTᵀ‖ + η‖STᵀ‖² |
///
/// A check passes when `lhs ≤ rhs + 1e-9·σ_r`.
pub fn verify_population_contraction(
    s: &Matrix,
    t: &Matrix,
    gt: &GroundTruth,
    eta: f64,
) -> Result<ContractionReport> {
    let r = gt.r();
    if s.rows() != r || t.rows() != gt.d() - r || s.cols() != t.cols() {
        return Err(Error::invalid("coefficient blocks do not match the ground truth"));
    }
    if s.cols() < r {
        return Err(Error::invalid("population bounds are only checked for k >= r"));
    }
    if !(s.is_finite() && t.is_finite()) {
        return Err(Error::invalid("non-finite coefficients"));
    }
    let eta_max = 1.0 / (100.0 * gt.sigma1());
    if !(eta >= 0.0 && eta <= eta_max * (1.0 + 1e-12)) {
        return Err(Error::invalid(format!("step size {eta} outside [0, {eta_max}]")));
    }
    let (ss, tt_err, st) = region_norms(s, t, gt);
    let radius = REGION_RADIUS * gt.sigma_r();
    if ss > radius || tt_err > radius || st > radius {
        return Err(Error::invalid(format!(
            "(S, T) outside the region: {ss:e}, {tt_err:e}, {st:e} vs radius {radius:e}"
        )));
    }

    let sr = gt.sigma_r();
    let mu = op_mu(s, t, gt.ds(), eta)?;
    let mv = op_mv(t, s, gt.dt(), eta)?;
    let ds = SymMatrix::from_diag(gt.ds());
    let dt = SymMatrix::from_diag(gt.dt());
    let dt_norm = gt.sigma_r_plus_1();
    let tt = t.gram_outer();
    let tt_norm = sym_spectral_unchecked(&tt);
    let st2 = st * st;
    let d_mr = gt.d() - r;
    let i_minus = SymMatrix::identity(d_mr).sub(&tt.scale(2.0 * eta));

    let contraction = 1.0 - eta * sr;
    let rows: [(f64, f64); 8] = [
        (sym_spectral_unchecked(&ds.sub(&mu.gram_outer())), contraction * ss + 3.0 * eta * st2),
        (spectral_unchecked(&mu.matmul_t(&mv)), contraction * st),
        (sym_spectral_unchecked(&mv.gram_outer()), tt_norm * (1.0 - eta * tt_norm + 2.0 * eta * dt_norm)),
        (
            sym_spectral_unchecked(&mv.gram_outer().sub(&dt)),
            tt_err * sym_spectral_unchecked(&i_minus) + 3.0 * eta * st2,
        ),
        // S'Sᵀ is not symmetric in general, so use the rectangular norm.
        (spectral_unchecked(&ds.matrix().sub(&mu.matmul_t(s))), contraction * ss + eta * st2),
        (spectral_unchecked(&mu.matmul_t(t)), st),
        (spectral_unchecked(&mv.matmul_t(s)), st),
        (spectral_unchecked(&mv.matmul_t(t)), tt_norm + eta * st2),
    ];
    let tol = POPULATION_TOL * sr;
    let checks = POPULATION_CHECKS
        .iter()
        .zip(rows)
        .map(|(&name, (lhs, rhs))| InequalityCheck {
            name,
            lhs,
            rhs,
            slack: rhs - lhs,
            pass: lhs <= rhs + tol,
        })
        .collect();
    Ok(ContractionReport { checks })
}

/// Draws `(S, T)` inside the region: exact coefficients plus Gaussian
/// perturbations at a log-uniform scale in `[1e-3, 0.2]·√σ_r`, resampled
/// until all three region constraints hold.
pub fn sample_region(gt: &GroundTruth, k: usize, seed: u64, index: u64) -> Result<(Matrix, Matrix)> {
    let r = gt.r();
    if k < r {
        return Err(Error::invalid("region samples need k >= r"));
    }
    let mut rng = stream(seed, Purpose::Region, index);
    let s0 = Matrix::from_diag(&gt.ds().iter().map(|x| x.sqrt()).collect::<Vec<_>>()).resize_cols(k);
    let (lo, hi) = (1e-3f64.ln(), 0.2f64.ln());
    let root = gt.sigma_r().sqrt();
    for _ in 0..10_000 {
        let c = root * (lo + (hi - lo) * rng.random::<f64>()).exp();
        let s = s0.add(&Matrix::from_fn(r, k, |_, _| c * rng.sample::<f64, _>(StandardNormal)));
        let t = Matrix::from_fn(gt.d() - r, k, |_, _| c * rng.sample::<f64, _>(StandardNormal));
        if in_region(&s, &t, gt) {
            return Ok((s, t));
        }
    }
    Err(Error::NumericFailure {
        message: "region rejection sampler exhausted its attempts".into(),
        residual: f64::NAN,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct PopulationBatch {
    pub trials: usize,
    pub reports: Vec<ContractionReport>,
}

impl PopulationBatch {
    /// Per-inequality failure counts in [`POPULATION_CHECKS`] order.
    pub fn failures(&self) -> Vec<(&'static str, usize)> {
        POPULATION_CHECKS
            .iter()
            .enumerate()
            .map(|(i, &name)| (name, self.reports.iter().filter(|r| !r.checks[i].pass).count()))
            .collect()
    }

    pub fn all_pass(&self) -> bool {
        self.reports.iter().all(ContractionReport::all_pass)
    }
}

/// Runs [`verify_population_contraction`] on `trials` region samples in parallel.
pub fn verify_population_batch(gt: &GroundTruth, k: usize, eta: f64, trials: usize, seed: u64) -> Result<PopulationBatch> {
    let reports = (0..trials as u64)
        .into_par_iter()
        .map(|i| {
            let (s, t) = sample_region(gt, k, seed, i)?;
            verify_population_contraction(&s, &t, gt, eta)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PopulationBatch { trials, reports })
}

/// Inputs of the per-iteration sample bounds beyond the two metric rows.
#[derive(Clone, Copy, Debug)]
pub struct SampleCheckParams {
    pub eta: f64,
    pub d: usize,
    pub k: usize,
    /// `None` for population-gradient runs.
    pub n: Option<usize>,
    pub sigma: f64,
    pub sigma_r: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckOutcome {
    Pass,
    Violation,
    /// Failed while the deviation hypothesis was itself false.
    Vacuous,
    /// Recursion only: `D_t` at or below the statistical floor.
    BelowFloor,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SampleCheck {
    pub name: &'static str,
    pub lhs: f64,
    pub rhs: f64,
    pub outcome: CheckOutcome,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SampleContractionReport {
    /// `‖Δ_t‖₂ ≤ delta_rate·√(kd ln d/n)·D_t + delta_noise·√(d ln d/n)·σ`.
    pub hypothesis_held: bool,
    pub delta_bound: f64,
    pub checks: Vec<SampleCheck>,
}

impl SampleContractionReport {
    pub fn get(&self, name: &str) -> Option<&SampleCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Checks one step `t → t+1` against the signal-error, cross-term and
/// recursion bounds:
///
/// * `ss_{t+1} ≤ (1 − 0.7ησ_r)·ss_t + √(kd ln d/n)·D_t + 0.4·√(d ln d/n)·σ`
/// * `st_{t+1} ≤ (1 − ησ_r)·st_t + √(kd ln d/n)·D_t + 0.4·√(d ln d/n)·σ`
/// * `D_{t+1} − f ≤ (1 − ½η(D_t − f))(D_t − f)` with `f = floor·ε_stat`, only when `D_t > f`.
pub fn verify_sample_contraction(
    before: &IterateMetrics,
    after: &IterateMetrics,
    scales: &DerivedScales,
    p: &SampleCheckParams,
) -> Result<SampleContractionReport> {
    let delta = before
        .delta_norm
        .ok_or_else(|| Error::invalid("the earlier iterate has no deviation norm"))?;
    let (rate_d, rate_k) = match p.n {
        Some(n) => (rate(p.d, n), (p.k as f64).sqrt() * rate(p.d, n)),
        None => (0.0, 0.0),
    };
    let c = scales.constants;
    let delta_bound = c.delta_rate * rate_k * before.d_max + c.delta_noise * rate_d * p.sigma;
    let hypothesis_held = delta <= delta_bound;
    let judge = |lhs: f64, rhs: f64| {
        if lhs <= rhs {
            CheckOutcome::Pass
        } else if hypothesis_held {
            CheckOutcome::Violation
        } else {
            CheckOutcome::Vacuous
        }
    };
    let extra = rate_k * before.d_max + 0.4 * rate_d * p.sigma;
    let ss_rhs = (1.0 - 0.7 * p.eta * p.sigma_r) * before.ss_err + extra;
    let st_rhs = (1.0 - p.eta * p.sigma_r) * before.st_norm + extra;
    let floor = scales.floor();
    let a_t = before.d_max - floor;
    let rec_lhs = after.d_max - floor;
    let rec_rhs = (1.0 - 0.5 * p.eta * a_t) * a_t;
    let rec_outcome = if a_t <= 0.0 {
        CheckOutcome::BelowFloor
    } else {
        judge(rec_lhs, rec_rhs)
    };
    Ok(SampleContractionReport {
        hypothesis_held,
        delta_bound,
        checks: vec![
            SampleCheck {
                name: "signal_error",
                lhs: after.ss_err,
                rhs: ss_rhs,
                outcome: judge(after.ss_err, ss_rhs),
            },
            SampleCheck {
                name: "cross_product",
                lhs: after.st_norm,
                rhs: st_rhs,
                outcome: judge(after.st_norm, st_rhs),
            },
            SampleCheck {
                name: "recursion",
                lhs: rec_lhs,
                rhs: rec_rhs,
                outcome: rec_outcome,
            },
        ],
    })
}
