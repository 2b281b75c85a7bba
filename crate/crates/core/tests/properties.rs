use proptest::prelude::*;

use msense::gradient::{
    deviation_matrix, fgd_step, op_mu, op_mv, population_gradient, sample_gradient, FactorState, StepSize,
};
use msense::harness::{read_trajectory_csv, trajectory_csv, ExperimentConfig, Trajectory};
use msense::linalg::{orthonormalize, spectral_norm, frobenius_norm, sym_eig, Matrix, SymMatrix};
use msense::problem::{generate_ground_truth, generate_sensing, GroundTruth, SensingDistribution};
use msense::subspace::{check_initialization, compute_metrics, decompose, Constants, DerivedScales, IterateMetrics};

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Matrix> {
    prop::collection::vec(-3.0f64..3.0, rows * cols).prop_map(move |v| Matrix::from_vec(rows, cols, v).unwrap())
}

fn any_matrix() -> impl Strategy<Value = Matrix> {
    (1usize..7, 1usize..7).prop_flat_map(|(r, c)| matrix(r, c))
}

fn symmetric() -> impl Strategy<Value = SymMatrix> {
    (1usize..9).prop_flat_map(|n| matrix(n, n)).prop_map(|g| SymMatrix::new(g.add(&g.transpose()).scale(0.5)).unwrap())
}

/// Ground truth with a decreasing signal spectrum and a small tail.
fn seeded_truth() -> impl Strategy<Value = (GroundTruth, u64)> {
    (3usize..8, 1usize..3, any::<u64>(), 0.2f64..1.0, 0.0f64..0.15).prop_map(|(d, r, seed, top, tail)| {
        let ds: Vec<f64> = (0..r).map(|i| top + 0.3 * (r - i) as f64).collect();
        let dt: Vec<f64> = (0..d - r).map(|i| tail / (i + 1) as f64).collect();
        (generate_ground_truth(d, r, &ds, &dt, seed).unwrap(), seed)
    })
}

fn truth() -> impl Strategy<Value = GroundTruth> {
    seeded_truth().prop_map(|(gt, _)| gt)
}

fn factor_for(gt: &GroundTruth) -> impl Strategy<Value = Matrix> {
    let d = gt.d();
    (1usize..5).prop_flat_map(move |k| matrix(d, k))
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

fn metrics_close(a: &IterateMetrics, b: &IterateMetrics, tol: f64) -> bool {
    let pairs = [
        (a.ss_err, b.ss_err),
        (a.st_norm, b.st_norm),
        (a.tt_norm, b.tt_norm),
        (a.tt_err, b.tt_err),
        (a.d_max, b.d_max),
        (a.a, b.a),
        (a.err_spec, b.err_spec),
        (a.err_fro, b.err_fro),
        (a.grad_norm, b.grad_norm),
    ];
    pairs.iter().all(|&(x, y)| close(x, y, tol))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn norm_sandwich(m in any_matrix()) {
        let s = spectral_norm(&m).unwrap();
        let f = frobenius_norm(&m).unwrap();
        let p = m.rows().min(m.cols()) as f64;
        prop_assert!(s <= f * (1.0 + 1e-12) + 1e-14);
        prop_assert!(f <= p.sqrt() * s * (1.0 + 1e-12) + 1e-14);
    }

    #[test]
    fn eigen_round_trip(m in symmetric()) {
        let e = sym_eig(&m).unwrap();
        let back = e.reconstruct();
        let scale = m.matrix().fro().max(1.0);
        prop_assert!(back.sub(m.matrix()).fro() / scale < 1e-8);
        let top = e.values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        prop_assert!((spectral_norm(&m).unwrap() - top).abs() < 1e-9 * scale);
        prop_assert!(e.values.windows(2).all(|w| w[0].abs() >= w[1].abs()));
    }

    #[test]
    fn orthonormal_columns(m in (2usize..7).prop_flat_map(|n| matrix(n + 2, n))) {
        if let Ok(q) = orthonormalize(&m) {
            let g = q.t_matmul(&q);
            prop_assert!(g.sub(&Matrix::identity(q.cols())).fro() < 1e-10);
        }
    }

    #[test]
    fn ground_truth_is_deterministic_with_gap((gt, seed) in seeded_truth()) {
        prop_assert!(gt.sigma_r_plus_1() < gt.sigma_r());
        let again = generate_ground_truth(gt.d(), gt.r(), gt.ds(), gt.dt(), seed).unwrap();
        prop_assert_eq!(again.u(), gt.u());
        prop_assert_eq!(again.xstar(), gt.xstar());
        let u = gt.u().t_matmul(gt.u());
        prop_assert!(u.sub(&Matrix::identity(gt.r())).fro() < 1e-10);
        prop_assert!(gt.u().t_matmul(gt.v()).fro() < 1e-10);
    }

    #[test]
    fn gradient_identity(
        (gt, f) in truth().prop_flat_map(|gt| { let f = factor_for(&gt); (Just(gt), f) }),
        n in 5usize..80,
        sigma in 0.0f64..0.5,
        seed in any::<u64>(),
        rademacher in any::<bool>(),
    ) {
        let dist = if rademacher { SensingDistribution::Rademacher } else { SensingDistribution::Gaussian };
        let s = generate_sensing(&gt, n, sigma, dist, seed).unwrap();
        let lhs = sample_gradient(&f, &s).unwrap().sub(&population_gradient(&f, &gt).unwrap());
        let delta = deviation_matrix(&f, &gt, &s).unwrap();
        prop_assert!(lhs.sub(&delta.matrix().matmul(&f)).fro() < 1e-10);
        // Already symmetric, so rebuilding changes nothing.
        let again = SymMatrix::new(delta.matrix().clone()).unwrap();
        prop_assert_eq!(again.matrix(), delta.matrix());
    }

    #[test]
    fn population_step_matches_operators(
        (gt, f) in truth().prop_flat_map(|gt| { let f = factor_for(&gt); (Just(gt), f) }),
        scale in 0.05f64..1.0,
        eta in 0.0f64..0.05,
    ) {
        let f = f.scale(scale);
        let state = FactorState::new(f.clone()).unwrap();
        let g = population_gradient(&f, &gt).unwrap();
        let next = fgd_step(&state, &g, StepSize::explicit(eta).unwrap()).unwrap();
        let dec = decompose(&f, &gt).unwrap();
        let s1 = op_mu(&dec.s, &dec.t, gt.ds(), eta).unwrap();
        let t1 = op_mv(&dec.t, &dec.s, gt.dt(), eta).unwrap();
        let rebuilt = gt.u().matmul(&s1).add(&gt.v().matmul(&t1));
        prop_assert!(rebuilt.sub(&next.f).fro() < 1e-10);
    }

    #[test]
    fn decomposition_bounds_error(
        (gt, f) in truth().prop_flat_map(|gt| { let f = factor_for(&gt); (Just(gt), f) }),
    ) {
        let dec = decompose(&f, &gt).unwrap();
        prop_assert!(dec.recompose(&gt).sub(&f).fro() < 1e-10 * f.fro().max(1.0));
        let scales = DerivedScales::population(Constants::default());
        let m = compute_metrics(&f, &gt, &scales, None, false).unwrap();
        let bound = m.ss_err + m.tt_err + 2.0 * m.st_norm;
        prop_assert!(m.err_spec <= bound * (1.0 + 1e-10) + 1e-12);
        prop_assert!(m.a >= 0.0 && m.d_max >= 0.0);
    }

    #[test]
    fn metrics_are_rotation_invariant(
        (gt, f) in truth().prop_flat_map(|gt| { let f = factor_for(&gt); (Just(gt), f) }),
        rot in matrix(4, 4),
        n in 10usize..60,
        seed in any::<u64>(),
    ) {
        let k = f.cols();
        let r = orthonormalize(&Matrix::from_fn(k, k, |i, j| rot[(i, j)]));
        prop_assume!(r.is_ok());
        let r = r.unwrap();
        let s = generate_sensing(&gt, n, 0.1, SensingDistribution::Gaussian, seed).unwrap();
        let scales = DerivedScales::new(&gt, n, k, 0.1, Constants::default());
        let a = compute_metrics(&f, &gt, &scales, Some(&s), true).unwrap();
        let b = compute_metrics(&f.matmul(&r), &gt, &scales, Some(&s), true).unwrap();
        prop_assert!(metrics_close(&a, &b, 1e-10), "{a:?} vs {b:?}");
        prop_assert!(close(a.delta_norm.unwrap(), b.delta_norm.unwrap(), 1e-10));
    }

    #[test]
    fn init_report_flags_are_consistent(
        (gt, f) in truth().prop_flat_map(|gt| { let f = factor_for(&gt); (Just(gt), f) }),
        scale in 0.01f64..2.0,
        rho in 0.01f64..0.07,
    ) {
        let rep = check_initialization(&f.scale(scale), &gt, rho).unwrap();
        prop_assert_eq!(rep.assumption_ok, rep.lhs <= rho * gt.sigma_r());
        prop_assert_eq!(rep.premise_ok, rep.lhs <= 0.7 * rho * gt.sigma_r());
        let block = rep.ss0.max(rep.tt0).max(rep.st0);
        prop_assert_eq!(rep.lemma_ok, !rep.premise_ok || block <= rho * gt.sigma_r());
    }

    #[test]
    fn derived_scales_are_nonnegative(gt in truth(), n in 1usize..10_000, k in 1usize..6, sigma in 0.0f64..2.0) {
        let s = DerivedScales::new(&gt, n, k, sigma, Constants::default());
        prop_assert!(s.eps_stat >= 0.0 && s.eps_comp >= 0.0);
        let z = DerivedScales::new(&gt, n, k, 0.0, Constants::default());
        prop_assert_eq!(z.eps_stat, 0.0);
    }

    #[test]
    fn trajectory_csv_round_trips(rows in prop::collection::vec((prop::array::uniform10(0.0f64..1e3), prop::option::of(0.0f64..1.0)), 1..20)) {
        let metrics: Vec<IterateMetrics> = rows
            .iter()
            .enumerate()
            .map(|(t, (v, delta))| IterateMetrics {
                t,
                ss_err: v[0],
                st_norm: v[1],
                tt_norm: v[2],
                tt_err: v[3],
                d_max: v[4],
                a: v[5],
                err_spec: v[6],
                err_fro: v[7] * 1e-200,
                grad_norm: v[8] / 3.0,
                delta_norm: delta.map(|d| d * v[9]),
            })
            .collect();
        let traj = Trajectory { config: ExperimentConfig::default(), metrics, elapsed_ms: vec![] };
        let (back, _) = read_trajectory_csv(&trajectory_csv(&traj, false)).unwrap();
        prop_assert_eq!(back, traj.metrics);
    }
}
