//! Sample and population gradients of the factored least-squares loss,
//! the deviation matrix, and the one-step population operators.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, packed_len, Matrix, SymMatrix};
use crate::problem::{inner_weights, GroundTruth, SensingSet};

/// Samples per accumulation chunk. Fixed so that the summation tree, and
/// therefore every bit of the result, does not depend on the thread count.
pub const CHUNK: usize = 512;

#[derive(Clone, Debug, PartialEq)]
pub struct FactorState {
    pub f: Matrix,
    pub iter: usize,
}

impl FactorState {
    pub fn new(f: Matrix) -> Result<Self> {
        if f.cols() == 0 || f.rows() == 0 {
            return Err(Error::invalid("factor needs at least one row and column"));
        }
        if !f.is_finite() {
            return Err(Error::invalid("factor has non-finite entries"));
        }
        Ok(FactorState { f, iter: 0 })
    }

    pub fn k(&self) -> usize {
        self.f.cols()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StepMode {
    Explicit,
    Theory,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepSize {
    pub eta: f64,
    pub mode: StepMode,
}

impl StepSize {
    /// Accepts `eta >= 0`; zero is allowed so a step can be a no-op.
    pub fn explicit(eta: f64) -> Result<Self> {
        if !(eta >= 0.0 && eta.is_finite()) {
            return Err(Error::invalid(format!("step size must be finite and >= 0, got {eta}")));
        }
        Ok(StepSize {
            eta,
            mode: StepMode::Explicit,
        })
    }
}

pub fn theory_step_size(gt: &GroundTruth) -> StepSize {
    StepSize {
        eta: 1.0 / (100.0 * gt.sigma1()),
        mode: StepMode::Theory,
    }
}

fn check_factor(f: &Matrix, d: usize) -> Result<()> {
    if f.rows() != d {
        return Err(Error::invalid(format!(
            "factor has {} rows, problem dimension is {d}",
            f.rows()
        )));
    }
    if !f.is_finite() {
        return Err(Error::invalid("factor has non-finite entries"));
    }
    Ok(())
}

/// `(1/n) Σ c_i · packed(A_i)` where `c_i = coef(i, ⟨A_i, X⟩)`.
///
/// Chunks of [`CHUNK`] samples are summed left to right, then chunk sums are
/// combined pairwise in index order.
pub(crate) fn weighted_sum(
    s: &SensingSet,
    weights: &[f64],
    coef: impl Fn(usize, f64) -> f64 + Sync,
) -> Vec<f64> {
    let len = packed_len(s.d());
    let n = s.n();
    let chunk_sum = |c: usize| {
        let mut acc = vec![0.0; len];
        let mut buf = Vec::new();
        for i in c * CHUNK..((c + 1) * CHUNK).min(n) {
            let a = s.packed(i, &mut buf);
            let w = coef(i, dot(a, weights));
            for (o, &x) in acc.iter_mut().zip(a) {
                *o += w * x;
            }
        }
        acc
    };
    let chunks = n.div_ceil(CHUNK);
    let mut parts: Vec<Vec<f64>> = if chunks > 1 {
        (0..chunks).into_par_iter().map(chunk_sum).collect()
    } else {
        vec![chunk_sum(0)]
    };
    while parts.len() > 1 {
        let mut next = Vec::with_capacity(parts.len().div_ceil(2));
        let mut it = parts.into_iter();
        while let Some(mut a) = it.next() {
            if let Some(b) = it.next() {
                a.iter_mut().zip(&b).for_each(|(x, y)| *x += y);
            }
            next.push(a);
        }
        parts = next;
    }
    let mut total = parts.pop().unwrap_or_else(|| vec![0.0; len]);
    let inv = 1.0 / n as f64;
    total.iter_mut().for_each(|x| *x *= inv);
    total
}

/// `W = (1/n) Σ (⟨A_i, FFᵀ⟩ − y_i) A_i`, so that the sample gradient is `W·F`.
pub fn residual_operator(f: &Matrix, s: &SensingSet) -> Result<SymMatrix> {
    check_factor(f, s.d())?;
    let w = inner_weights(&f.gram_outer());
    let y = s.observations();
    let packed = weighted_sum(s, &w, |i, fit| fit - y[i]);
    SymMatrix::from_packed_upper(s.d(), &packed)
}

/// `Gⁿ = (1/n) Σ (⟨A_i, FFᵀ⟩ − y_i) A_i F`.
pub fn sample_gradient(f: &Matrix, s: &SensingSet) -> Result<Matrix> {
    Ok(residual_operator(f, s)?.matrix().matmul(f))
}

/// `G = (FFᵀ − X*) F`.
pub fn population_gradient(f: &Matrix, gt: &GroundTruth) -> Result<Matrix> {
    check_factor(f, gt.d())?;
    Ok(error_matrix(f, gt).matrix().matmul(f))
}

/// `FFᵀ − X*`.
pub fn error_matrix(f: &Matrix, gt: &GroundTruth) -> SymMatrix {
    f.gram_outer().sub(gt.xstar())
}

/// `Δ = (1/n) Σ (⟨A_i, E⟩ − ε_i) A_i − E` with `E = FFᵀ − X*`.
///
/// The noise enters with the sign carried by the residual `⟨A_i,FFᵀ⟩ − y_i`,
/// which is what makes `Gⁿ − G = Δ·F` an identity.
pub fn deviation_matrix(f: &Matrix, gt: &GroundTruth, s: &SensingSet) -> Result<SymMatrix> {
    if gt.d() != s.d() {
        return Err(Error::invalid("ground truth and sensing set dimensions differ"));
    }
    let w = residual_operator(f, s)?;
    Ok(w.sub(&error_matrix(f, gt)))
}

/// `L(F) = (1/4n) Σ (y_i − ⟨A_i, FFᵀ⟩)²`.
pub fn loss(f: &Matrix, s: &SensingSet) -> Result<f64> {
    check_factor(f, s.d())?;
    let w = inner_weights(&f.gram_outer());
    let y = s.observations();
    let mut buf = Vec::new();
    let total: f64 = (0..s.n())
        .map(|i| {
            let r = y[i] - dot(s.packed(i, &mut buf), &w);
            r * r
        })
        .sum();
    Ok(total / (4.0 * s.n() as f64))
}

pub fn fgd_step(state: &FactorState, grad: &Matrix, step: StepSize) -> Result<FactorState> {
    if grad.shape() != state.f.shape() {
        return Err(Error::invalid(format!(
            "gradient shape {:?} does not match factor shape {:?}",
            grad.shape(),
            state.f.shape()
        )));
    }
    Ok(FactorState {
        f: state.f.add_scaled(-step.eta, grad),
        iter: state.iter + 1,
    })
}

fn check_pair(a: &Matrix, b: &Matrix, diag: &[f64], which: &str) -> Result<()> {
    if a.cols() != b.cols() {
        return Err(Error::invalid(format!(
            "{which}: coefficient blocks have {} and {} columns",
            a.cols(),
            b.cols()
        )));
    }
    if diag.len() != a.rows() {
        return Err(Error::invalid(format!(
            "{which}: diagonal has {} entries for {} rows",
            diag.len(),
            a.rows()
        )));
    }
    Ok(())
}

/// `M_U(S) = S − η(SSᵀS + STᵀT − DS*·S)`.
pub fn op_mu(s: &Matrix, t: &Matrix, ds: &[f64], eta: f64) -> Result<Matrix> {
    check_pair(s, t, ds, "M_U")?;
    Ok(population_operator(s, t, ds, eta))
}

/// `M_V(T) = T − η(TTᵀT + TSᵀS − DT*·T)`.
pub fn op_mv(t: &Matrix, s: &Matrix, dt: &[f64], eta: f64) -> Result<Matrix> {
    check_pair(t, s, dt, "M_V")?;
    Ok(population_operator(t, s, dt, eta))
}

/// `X − η(X(XᵀX + YᵀY) − diag(d)·X)`; both operators have this shape.
fn population_operator(x: &Matrix, y: &Matrix, diag: &[f64], eta: f64) -> Matrix {
    let gram = x.t_matmul(x).add(&y.t_matmul(y));
    let g = x.matmul(&gram).sub(&x.scale_rows(diag));
    x.add_scaled(-eta, &g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{generate_ground_truth, generate_sensing, generate_sensing_for, SensingDistribution, SensingOptions};
    use crate::rng::{stream, Purpose};
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn gaussian(rows: usize, cols: usize, seed: u64) -> Matrix {
        let mut rng = stream(seed, Purpose::Trial, 0);
        Matrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
    }

    #[test]
    fn zero_at_exact_factor() {
        let gt = generate_ground_truth(8, 2, &[1.0, 0.5], &[0.0; 6], 1).unwrap();
        let s = generate_sensing(&gt, 100, 0.0, SensingDistribution::Gaussian, 2).unwrap();
        let f = gt.exact_factor(3);
        assert!(sample_gradient(&f, &s).unwrap().fro() < 1e-12);
        assert!(population_gradient(&f, &gt).unwrap().fro() < 1e-14);
        assert!(deviation_matrix(&f, &gt, &s).unwrap().matrix().fro() < 1e-12);
        assert!(population_gradient(&Matrix::zeros(8, 3), &gt).unwrap().fro() == 0.0);
    }

    #[test]
    fn scalar_problem_matches_hand_formula() {
        let gt = generate_ground_truth(1, 1, &[0.7], &[], 3).unwrap();
        let s = generate_sensing(&gt, 30, 0.2, SensingDistribution::Gaussian, 4).unwrap();
        let f0 = 1.3;
        let f = Matrix::from_vec(1, 1, vec![f0]).unwrap();
        let n = s.n() as f64;
        let hand: f64 = (0..s.n())
            .map(|i| {
                let a = s.matrix(i)[(0, 0)];
                (a * f0 * f0 - s.observations()[i]) * a * f0
            })
            .sum::<f64>()
            / n;
        let g = sample_gradient(&f, &s).unwrap();
        assert!((g[(0, 0)] - hand).abs() < 1e-13 * hand.abs().max(1.0));
    }

    #[test]
    fn population_gradient_small_case() {
        // X* = diag(1, 0) in a rotated basis still gives (1.21 − 1)·1.1 along u.
        let gt = generate_ground_truth(2, 1, &[1.0], &[0.0], 5).unwrap();
        let u = gt.u().column(0);
        let f = Matrix::column_vector(&[1.1 * u[0], 1.1 * u[1]]);
        let g = population_gradient(&f, &gt).unwrap();
        assert!((g[(0, 0)] - 0.231 * u[0]).abs() < 1e-14);
        assert!((g[(1, 0)] - 0.231 * u[1]).abs() < 1e-14);
    }

    #[test]
    fn deviation_identity_holds() {
        for seed in 0..5 {
            let gt = generate_ground_truth(6, 2, &[1.0, 0.6], &[0.1, 0.0, 0.0, 0.0], seed).unwrap();
            let s = generate_sensing(&gt, 1300, 0.5, SensingDistribution::Gaussian, seed + 10).unwrap();
            let f = gaussian(6, 3, seed);
            let lhs = sample_gradient(&f, &s).unwrap().sub(&population_gradient(&f, &gt).unwrap());
            let delta = deviation_matrix(&f, &gt, &s).unwrap();
            assert!(lhs.sub(&delta.matrix().matmul(&f)).fro() < 1e-10);
        }
    }

    #[test]
    fn finite_differences() {
        let gt = generate_ground_truth(5, 1, &[1.0], &[0.2, 0.1, 0.0, 0.0], 7).unwrap();
        let s = generate_sensing(&gt, 40, 0.3, SensingDistribution::Gaussian, 8).unwrap();
        let f = gaussian(5, 2, 9);
        let g = sample_gradient(&f, &s).unwrap();
        let h = 1e-6;
        for i in 0..5 {
            for j in 0..2 {
                let mut fp = f.clone();
                fp[(i, j)] += h;
                let mut fm = f.clone();
                fm[(i, j)] -= h;
                let fd = (loss(&fp, &s).unwrap() - loss(&fm, &s).unwrap()) / (2.0 * h);
                let rel = (fd - g[(i, j)]).abs() / g[(i, j)].abs().max(1e-3);
                assert!(rel < 1e-5, "({i},{j}): fd {fd} vs {}", g[(i, j)]);
            }
        }
    }

    #[test]
    fn chunking_is_partition_independent() {
        // Over several chunks the tree sum must agree with a plain sum up to rounding,
        // and two evaluations must be bitwise equal.
        let gt = generate_ground_truth(4, 1, &[1.0], &[0.0; 3], 1).unwrap();
        let s = generate_sensing(&gt, 3 * CHUNK + 17, 0.1, SensingDistribution::Gaussian, 2).unwrap();
        let f = gaussian(4, 2, 3);
        let a = sample_gradient(&f, &s).unwrap();
        let b = sample_gradient(&f, &s).unwrap();
        assert_eq!(a, b);
        let xx = f.gram_outer();
        let mut plain = Matrix::zeros(4, 4);
        for i in 0..s.n() {
            let ai = s.matrix(i);
            let r = ai.matrix().frobenius_dot(xx.matrix()) - s.observations()[i];
            plain.add_scaled_in_place(r / s.n() as f64, ai.matrix());
        }
        assert!(plain.matmul(&f).sub(&a).fro() < 1e-12);
    }

    #[test]
    fn step_examples() {
        let f = gaussian(4, 2, 1);
        let st = FactorState::new(f.clone()).unwrap();
        let g = gaussian(4, 2, 2);
        let same = fgd_step(&st, &g, StepSize::explicit(0.0).unwrap()).unwrap();
        assert_eq!(same.f, f);
        assert_eq!(same.iter, 1);
        let fixed = fgd_step(&st, &Matrix::zeros(4, 2), StepSize::explicit(0.3).unwrap()).unwrap();
        assert_eq!(fixed.f, f);
        assert!(fgd_step(&st, &Matrix::zeros(4, 3), StepSize::explicit(0.3).unwrap()).is_err());
        assert!(StepSize::explicit(-1.0).is_err());
        assert!(StepSize::explicit(f64::NAN).is_err());
    }

    #[test]
    fn theory_step_examples() {
        for (s1, eta) in [(1.0, 0.01), (2.0, 0.005), (0.8, 0.0125)] {
            let gt = generate_ground_truth(3, 1, &[s1], &[0.0, 0.0], 0).unwrap();
            let st = theory_step_size(&gt);
            assert!((st.eta - eta).abs() < 1e-15);
            assert_eq!(st.mode, StepMode::Theory);
        }
    }

    #[test]
    fn operator_examples() {
        let s = gaussian(2, 3, 4);
        let t = gaussian(3, 3, 5);
        assert_eq!(op_mu(&s, &t, &[1.0, 0.5], 0.0).unwrap(), s);
        assert_eq!(op_mv(&t, &s, &[0.0; 3], 0.0).unwrap(), t);

        // SSᵀ = DS*, T = 0 is a fixed point.
        let ds = [1.0, 0.5];
        let s_exact = Matrix::from_diag(&[1.0, 0.5f64.sqrt()]).resize_cols(3);
        let fixed = op_mu(&s_exact, &Matrix::zeros(3, 3), &ds, 0.1).unwrap();
        assert!(fixed.sub(&s_exact).fro() < 1e-15);

        // TTᵀ = z·I with S = 0, DT* = 0 shrinks T by (1 − ηz).
        let z: f64 = 0.3;
        let t_iso = Matrix::identity(3).scale(z.sqrt());
        let shrunk = op_mv(&t_iso, &Matrix::zeros(2, 3), &[0.0; 3], 0.2).unwrap();
        assert!(shrunk.sub(&t_iso.scale(1.0 - 0.2 * z)).fro() < 1e-15);

        assert!(op_mu(&s, &gaussian(3, 2, 1), &ds, 0.1).is_err());
        assert!(op_mu(&s, &t, &[1.0], 0.1).is_err());
    }

    #[test]
    fn population_step_recomposes_from_operators() {
        let gt = generate_ground_truth(7, 2, &[1.0, 0.8], &[0.05, 0.0, 0.0, 0.0, 0.0], 3).unwrap();
        let eta = 0.1;
        for seed in 0..10 {
            let f = gt.exact_factor(3).add(&gaussian(7, 3, seed).scale(0.05));
            let st = FactorState::new(f.clone()).unwrap();
            let next = fgd_step(&st, &population_gradient(&f, &gt).unwrap(), StepSize::explicit(eta).unwrap()).unwrap();
            let s = gt.u().t_matmul(&f);
            let t = gt.v().t_matmul(&f);
            let mu = op_mu(&s, &t, gt.ds(), eta).unwrap();
            let mv = op_mv(&t, &s, gt.dt(), eta).unwrap();
            let recomposed = gt.u().matmul(&mu).add(&gt.v().matmul(&mv));
            assert!(recomposed.sub(&next.f).fro() < 1e-10);
        }
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let gt = generate_ground_truth(4, 1, &[1.0], &[0.0; 3], 1).unwrap();
        let s = generate_sensing_for(gt.xstar(), 5, 0.0, SensingOptions::default(), 1).unwrap();
        let f = Matrix::zeros(5, 2);
        assert!(sample_gradient(&f, &s).is_err());
        assert!(population_gradient(&f, &gt).is_err());
        assert!(deviation_matrix(&f, &gt, &s).is_err());
    }
}
