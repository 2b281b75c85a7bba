//! Monte Carlo estimates of sensing-ensemble statistics: the noise term
//! `‖(1/n) Σ ε_i A_i‖₂`, the deviation `‖(1/n) Σ ⟨A_i,U⟩A_i − U‖₂`, and
//! the moment matrices `E[(⟨A,U⟩A − U)²]` and `E[A²]`.
//!
//! Each trial draws from its own stream `(seed, trial)` and results are
//! gathered in trial order, so reports do not depend on the thread count.

use std::fmt::Write as _;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{dot, packed_len, sym_spectral_unchecked, Matrix, SymMatrix};
use crate::problem::{draw_packed, inner_weights, EntryScale, SensingDistribution, SensingOptions};
use crate::rng::{stream, Purpose};
use crate::stats;

/// Per-trial values of a norm statistic and their summary.
#[derive(Clone, Debug, Serialize)]
pub struct McReport {
    pub statistic: String,
    pub trials: usize,
    pub samples_per_trial: usize,
    pub values: Vec<f64>,
    pub median: f64,
    pub mean: f64,
    pub std_err: f64,
    pub reference_scale: f64,
    /// `median / reference_scale`.
    pub ratio_median: f64,
}

impl McReport {
    fn new(statistic: &str, samples_per_trial: usize, values: Vec<f64>, reference_scale: f64) -> Self {
        let median = stats::median(&values);
        McReport {
            statistic: statistic.to_string(),
            trials: values.len(),
            samples_per_trial,
            median,
            mean: stats::mean(&values),
            std_err: stats::std_err(&values),
            reference_scale,
            ratio_median: median / reference_scale,
            values,
        }
    }

    /// Fraction of trials whose statistic exceeds `threshold`.
    pub fn exceedance(&self, threshold: f64) -> f64 {
        self.values.iter().filter(|&&v| v > threshold).count() as f64 / self.values.len() as f64
    }

    /// `trial,value` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("trial,value\n");
        for (i, v) in self.values.iter().enumerate() {
            let _ = writeln!(out, "{i},{v:e}");
        }
        out
    }

    /// Everything except the per-trial values.
    pub fn summary_json(&self) -> serde_json::Value {
        serde_json::json!({
            "statistic": self.statistic,
            "trials": self.trials,
            "samples_per_trial": self.samples_per_trial,
            "median": self.median,
            "mean": self.mean,
            "std_err": self.std_err,
            "reference_scale": self.reference_scale,
            "ratio_median": self.ratio_median,
        })
    }
}

fn check_counts(d: usize, n: usize, trials: usize) -> Result<()> {
    if d == 0 || n == 0 || trials == 0 {
        return Err(Error::invalid("d, n and trials must all be positive"));
    }
    Ok(())
}

/// `‖(1/n) Σ ε_i A_i‖₂` with `ε_i ~ N(0, σ²)`, against `√(dσ²/n)`.
pub fn mc_noise_term(
    d: usize,
    sigma: f64,
    n: usize,
    trials: usize,
    seed: u64,
    options: SensingOptions,
) -> Result<McReport> {
    check_counts(d, n, trials)?;
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::invalid(format!("sigma must be finite and >= 0, got {sigma}")));
    }
    let len = packed_len(d);
    let values = (0..trials as u64)
        .into_par_iter()
        .map(|trial| {
            let mut rng = stream(seed, Purpose::Trial, trial);
            let mut acc = vec![0.0; len];
            let mut a = vec![0.0; len];
            for _ in 0..n {
                draw_packed(&mut rng, d, options.distribution, options.entry_scale, &mut a);
                let eps = sigma * rng.sample::<f64, _>(StandardNormal);
                acc.iter_mut().zip(&a).for_each(|(o, x)| *o += eps * x);
            }
            acc.iter_mut().for_each(|x| *x /= n as f64);
            sym_spectral_unchecked(&SymMatrix::from_packed_upper(d, &acc).expect("packed length"))
        })
        .collect();
    let scale = (d as f64 * sigma * sigma / n as f64).sqrt();
    Ok(McReport::new("noise_term", n, values, scale))
}

/// Deviation statistic plus the pooled mean of `⟨A,U⟩A` over every draw.
#[derive(Clone, Debug, Serialize)]
pub struct DeviationReport {
    pub report: McReport,
    /// Mean of `⟨A,U⟩A` over `trials·n` draws.
    pub mean: Matrix,
    /// Standard error of each entry of `mean`.
    pub mean_std_err: Matrix,
}

impl DeviationReport {
    /// Largest `|mean − U| / se` over entries.
    pub fn max_abs_z(&self, u: &SymMatrix) -> f64 {
        z_scores(&self.mean, &self.mean_std_err, u.matrix())
            .as_slice()
            .iter()
            .fold(0.0, |m, z| m.max(z.abs()))
    }
}

/// `‖(1/n) Σ (⟨A_i,U⟩A_i − U)‖₂`, against `√(d ln d/n)·‖U‖_F`.
pub fn mc_sensing_deviation(
    u: &SymMatrix,
    n: usize,
    trials: usize,
    seed: u64,
    options: SensingOptions,
) -> Result<DeviationReport> {
    let d = u.dim();
    check_counts(d, n, trials)?;
    let ufro = u.matrix().fro();
    if !ufro.is_finite() {
        return Err(Error::invalid("U has non-finite entries"));
    }
    if ufro == 0.0 {
        return Err(Error::invalid("U must be nonzero"));
    }
    let len = packed_len(d);
    let w = inner_weights(u);
    let u_packed = u.to_packed_upper();
    let per_trial: Vec<(f64, Vec<f64>, Vec<f64>)> = (0..trials as u64)
        .into_par_iter()
        .map(|trial| {
            let mut rng = stream(seed, Purpose::Trial, trial);
            let mut sum = vec![0.0; len];
            let mut sumsq = vec![0.0; len];
            let mut a = vec![0.0; len];
            for _ in 0..n {
                draw_packed(&mut rng, d, options.distribution, options.entry_scale, &mut a);
                let g = dot(&a, &w);
                for p in 0..len {
                    let x = g * a[p];
                    sum[p] += x;
                    sumsq[p] += x * x;
                }
            }
            let dev: Vec<f64> = sum.iter().zip(&u_packed).map(|(s, u)| s / n as f64 - u).collect();
            let stat = sym_spectral_unchecked(&SymMatrix::from_packed_upper(d, &dev).expect("packed length"));
            (stat, sum, sumsq)
        })
        .collect();

    let total = (trials * n) as f64;
    let mut sum = vec![0.0; len];
    let mut sumsq = vec![0.0; len];
    let mut values = Vec::with_capacity(trials);
    for (stat, s, q) in per_trial {
        values.push(stat);
        sum.iter_mut().zip(&s).for_each(|(o, x)| *o += x);
        sumsq.iter_mut().zip(&q).for_each(|(o, x)| *o += x);
    }
    let mean: Vec<f64> = sum.iter().map(|s| s / total).collect();
    let se: Vec<f64> = mean
        .iter()
        .zip(&sumsq)
        .map(|(m, q)| ((q / total - m * m).max(0.0) * total / (total - 1.0).max(1.0) / total).sqrt())
        .collect();
    let unpack = |v: &[f64]| SymMatrix::from_packed_upper(d, v).expect("packed length").into_matrix();
    let scale = (d as f64 * (d as f64).ln() / n as f64).sqrt() * ufro;
    Ok(DeviationReport {
        report: McReport::new("sensing_deviation", n, values, scale),
        mean: unpack(&mean),
        mean_std_err: unpack(&se),
    })
}

/// A Monte Carlo matrix estimate compared against a reference.
#[derive(Clone, Debug, Serialize)]
pub struct MomentComparison {
    pub reference: Matrix,
    pub z: Matrix,
    pub max_abs_z: f64,
}

impl MomentComparison {
    fn new(estimate: &Matrix, std_err: &Matrix, reference: Matrix) -> Self {
        let z = z_scores(estimate, std_err, &reference);
        let max_abs_z = z.as_slice().iter().fold(0.0, |m: f64, v| m.max(v.abs()));
        MomentComparison {
            reference,
            z,
            max_abs_z,
        }
    }

    pub fn within(&self, k_se: f64) -> bool {
        self.max_abs_z <= k_se
    }
}

/// Entrywise `(estimate − reference)/se`. A zero standard error gives a
/// zero score on exact agreement and an infinite one otherwise.
fn z_scores(estimate: &Matrix, se: &Matrix, reference: &Matrix) -> Matrix {
    Matrix::from_fn(estimate.rows(), estimate.cols(), |i, j| {
        let diff = estimate[(i, j)] - reference[(i, j)];
        let s = se[(i, j)];
        if s > 0.0 {
            diff / s
        } else if diff.abs() <= 1e-12 * reference[(i, j)].abs().max(1.0) {
            0.0
        } else {
            f64::INFINITY.copysign(diff)
        }
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct MomentReport {
    pub trials: usize,
    pub estimate: Matrix,
    pub std_err: Matrix,
    /// Closed form quoted for the second moment: diagonal
    /// `‖U‖_F² + 2U_mm² − Σ_j U_mj²`, zero off the diagonal.
    pub stated: MomentComparison,
    /// Exact expectation for the configured ensemble.
    pub exact: MomentComparison,
}

/// Accumulates `f(A)` and its entrywise square over trials.
fn moment_mc(
    d: usize,
    trials: usize,
    seed: u64,
    options: SensingOptions,
    f: impl Fn(&SymMatrix) -> Matrix + Sync,
) -> (Matrix, Matrix) {
    const BLOCK: usize = 1024;
    let len = packed_len(d);
    let blocks = trials.div_ceil(BLOCK);
    let parts: Vec<(Matrix, Matrix)> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut sum = Matrix::zeros(d, d);
            let mut sumsq = Matrix::zeros(d, d);
            let mut a = vec![0.0; len];
            for trial in b * BLOCK..((b + 1) * BLOCK).min(trials) {
                let mut rng = stream(seed, Purpose::Trial, trial as u64);
                draw_packed(&mut rng, d, options.distribution, options.entry_scale, &mut a);
                let x = f(&SymMatrix::from_packed_upper(d, &a).expect("packed length"));
                sum.add_scaled_in_place(1.0, &x);
                sumsq.add_scaled_in_place(1.0, &x.map(|v| v * v));
            }
            (sum, sumsq)
        })
        .collect();
    let mut sum = Matrix::zeros(d, d);
    let mut sumsq = Matrix::zeros(d, d);
    for (s, q) in &parts {
        sum.add_scaled_in_place(1.0, s);
        sumsq.add_scaled_in_place(1.0, q);
    }
    let t = trials as f64;
    let mean = sum.scale(1.0 / t);
    let se = Matrix::from_fn(d, d, |i, j| {
        let m = mean[(i, j)];
        let var = (sumsq[(i, j)] / t - m * m).max(0.0) * t / (t - 1.0).max(1.0);
        (var / t).sqrt()
    });
    (mean, se)
}

/// Variance of the stored entry `(i, j)` under `scale`.
fn entry_variance(i: usize, j: usize, scale: EntryScale) -> f64 {
    match (i == j, scale) {
        (true, _) | (false, EntryScale::Unit) => 1.0,
        (false, EntryScale::Isotropic) => 0.5,
    }
}

/// Fourth cumulant of an entry: zero for Gaussian, `−2v²` for a symmetric
/// two-point law with variance `v`.
fn entry_cumulant4(variance: f64, distribution: SensingDistribution) -> f64 {
    match distribution {
        SensingDistribution::Gaussian => 0.0,
        SensingDistribution::Rademacher => -2.0 * variance * variance,
    }
}

/// Closed form stated for `E[(⟨A,U⟩A − U)²]`.
pub fn stated_second_moment(u: &SymMatrix) -> Matrix {
    let d = u.dim();
    let fro2 = u.matrix().fro().powi(2);
    Matrix::from_fn(d, d, |m, n| {
        if m == n {
            let row2: f64 = u.matrix().row(m).iter().map(|x| x * x).sum();
            fro2 + 2.0 * u[(m, m)] * u[(m, m)] - row2
        } else {
            0.0
        }
    })
}

/// `E[⟨A,U⟩A]` for the given ensemble.
pub fn exact_first_moment(u: &SymMatrix, scale: EntryScale) -> Matrix {
    let d = u.dim();
    Matrix::from_fn(d, d, |i, j| {
        let c = if i == j { 1.0 } else { 2.0 };
        c * entry_variance(i, j, scale) * u[(i, j)]
    })
}

/// Exact `E[(⟨A,U⟩A − U)²]`.
///
/// With `g = ⟨A,U⟩ = Σ_{i≤j} c_ij a_ij` (`c_ii = U_ii`, `c_ij = 2U_ij`) and
/// `Ũ = E[gA]`, pairing the four factors gives
/// `E[g²A²]_mn = δ_mn (E[g²]·Σ_l v_ml + Σ_l κ_ml c_ml²) + 2(Ũ²)_mn`,
/// where `v` and `κ` are entry variances and fourth cumulants. Then
/// `E[(gA − U)²] = E[g²A²] − ŨU − UŨ + U²`.
pub fn exact_second_moment(u: &SymMatrix, options: SensingOptions) -> Matrix {
    let d = u.dim();
    let coef = |i: usize, j: usize| if i == j { u[(i, i)] } else { 2.0 * u[(i, j)] };
    let mut eg2 = 0.0;
    for i in 0..d {
        for j in i..d {
            eg2 += coef(i, j).powi(2) * entry_variance(i, j, options.entry_scale);
        }
    }
    let ut = exact_first_moment(u, options.entry_scale);
    let mut out = ut.matmul(&ut).scale(2.0);
    for m in 0..d {
        let mut diag = 0.0;
        for l in 0..d {
            let v = entry_variance(m, l, options.entry_scale);
            diag += eg2 * v + entry_cumulant4(v, options.distribution) * coef(m, l).powi(2);
        }
        out[(m, m)] += diag;
    }
    let um = u.matrix();
    out.sub(&ut.matmul(um)).sub(&um.matmul(&ut)).add(&um.matmul(um))
}

/// Monte Carlo `E[(⟨A,U⟩A − U)²]` against the stated and exact closed forms.
pub fn mc_second_moment(u: &SymMatrix, trials: usize, seed: u64, options: SensingOptions) -> Result<MomentReport> {
    let d = u.dim();
    check_counts(d, 1, trials)?;
    if !u.matrix().is_finite() {
        return Err(Error::invalid("U has non-finite entries"));
    }
    let w = inner_weights(u);
    let (estimate, std_err) = moment_mc(d, trials, seed, options, |a| {
        let g = dot(&a.to_packed_upper(), &w);
        let b = a.matrix().scale(g).sub(u.matrix());
        b.matmul(&b)
    });
    Ok(MomentReport {
        trials,
        stated: MomentComparison::new(&estimate, &std_err, stated_second_moment(u)),
        exact: MomentComparison::new(&estimate, &std_err, exact_second_moment(u, options)),
        estimate,
        std_err,
    })
}

/// Monte Carlo `E[A²]` against `d·I` and against the exact value
/// `diag(Σ_l v_ml)`.
pub fn mc_a_squared(d: usize, trials: usize, seed: u64, options: SensingOptions) -> Result<MomentReport> {
    check_counts(d, 1, trials)?;
    let (estimate, std_err) = moment_mc(d, trials, seed, options, |a| a.matrix().matmul(a.matrix()));
    let stated = Matrix::identity(d).scale(d as f64);
    let exact = Matrix::from_diag(
        &(0..d)
            .map(|m| (0..d).map(|l| entry_variance(m, l, options.entry_scale)).sum())
            .collect::<Vec<f64>>(),
    );
    Ok(MomentReport {
        trials,
        stated: MomentComparison::new(&estimate, &std_err, stated),
        exact: MomentComparison::new(&estimate, &std_err, exact),
        estimate,
        std_err,
    })
}

/// Log-log slope of report medians against `n`.
pub fn median_slope(reports: &[McReport]) -> Option<f64> {
    let n: Vec<f64> = reports.iter().map(|r| r.samples_per_trial as f64).collect();
    let m: Vec<f64> = reports.iter().map(|r| r.median).collect();
    stats::loglog_fit(&n, &m).map(|f| f.slope)
}

/// Symmetric test direction `(G + Gᵀ)/2` with standard Gaussian `G`.
pub fn random_symmetric(d: usize, seed: u64) -> SymMatrix {
    let mut rng = stream(seed, Purpose::Basis, 77);
    let g = Matrix::from_fn(d, d, |_, _| rng.sample(StandardNormal));
    SymMatrix::symmetrized(g.add(&g.transpose()).scale(0.5))
}
