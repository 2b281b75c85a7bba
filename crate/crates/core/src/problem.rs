//! Planted ground truth and random symmetric sensing ensembles.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, orthonormalize, packed_len, Matrix, SymMatrix};
use crate::rng::{stream, Purpose};

/// `X* = U·diag(ds)·Uᵀ + V·diag(dt)·Vᵀ` with `[U V]` orthogonal.
#[derive(Clone, Debug)]
pub struct GroundTruth {
    d: usize,
    r: usize,
    u: Matrix,
    v: Matrix,
    ds: Vec<f64>,
    dt: Vec<f64>,
    xstar: SymMatrix,
    sigma1: f64,
    sigma_r: f64,
    sigma_r_plus_1: f64,
    kappa: f64,
}

impl GroundTruth {
    pub fn d(&self) -> usize {
        self.d
    }
    pub fn r(&self) -> usize {
        self.r
    }
    /// Signal basis, d×r.
    pub fn u(&self) -> &Matrix {
        &self.u
    }
    /// Complement basis, d×(d−r).
    pub fn v(&self) -> &Matrix {
        &self.v
    }
    pub fn ds(&self) -> &[f64] {
        &self.ds
    }
    pub fn dt(&self) -> &[f64] {
        &self.dt
    }
    pub fn xstar(&self) -> &SymMatrix {
        &self.xstar
    }
    pub fn sigma1(&self) -> f64 {
        self.sigma1
    }
    pub fn sigma_r(&self) -> f64 {
        self.sigma_r
    }
    pub fn sigma_r_plus_1(&self) -> f64 {
        self.sigma_r_plus_1
    }
    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    /// `[U·diag(√ds) | 0]`, an exact factor of the signal part padded to k columns.
    pub fn exact_factor(&self, k: usize) -> Matrix {
        let sq: Vec<f64> = self.ds.iter().map(|x| x.sqrt()).collect();
        let us = Matrix::from_fn(self.d, self.r, |i, j| self.u[(i, j)] * sq[j]);
        us.resize_cols(k)
    }
}

/// Tail spectrum `dt`: an explicit list or the shorthand `"zeros"`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TailSpectrum {
    Named(TailName),
    Values(Vec<f64>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TailName {
    Zeros,
}

impl Default for TailSpectrum {
    fn default() -> Self {
        TailSpectrum::Named(TailName::Zeros)
    }
}

impl TailSpectrum {
    pub fn zeros() -> Self {
        Self::default()
    }

    pub fn resolve(&self, len: usize) -> Vec<f64> {
        match self {
            TailSpectrum::Named(TailName::Zeros) => vec![0.0; len],
            TailSpectrum::Values(v) => v.clone(),
        }
    }
}

pub fn generate_ground_truth(d: usize, r: usize, ds: &[f64], dt: &[f64], seed: u64) -> Result<GroundTruth> {
    if r == 0 || r > d {
        return Err(Error::invalid(format!("need 1 <= r <= d, got r={r}, d={d}")));
    }
    if ds.len() != r {
        return Err(Error::invalid(format!("ds has {} entries, expected r={r}", ds.len())));
    }
    if dt.len() != d - r {
        return Err(Error::invalid(format!(
            "dt has {} entries, expected d-r={}",
            dt.len(),
            d - r
        )));
    }
    if ds.iter().chain(dt).any(|x| !x.is_finite()) {
        return Err(Error::invalid("non-finite spectrum value"));
    }
    if ds.iter().any(|&x| x <= 0.0) {
        return Err(Error::invalid("ds entries must be positive"));
    }
    if ds.windows(2).any(|w| w[0] < w[1]) {
        return Err(Error::invalid("ds must be descending"));
    }
    if dt.windows(2).any(|w| w[0].abs() < w[1].abs()) {
        return Err(Error::invalid("dt must be descending in absolute value"));
    }
    let sigma1 = ds[0];
    let sigma_r = ds[r - 1];
    let sigma_r_plus_1 = dt.iter().fold(0.0, |m: f64, x| m.max(x.abs()));
    if sigma_r_plus_1 >= sigma_r {
        return Err(Error::invalid(format!(
            "no spectral gap: max|dt| = {sigma_r_plus_1} >= sigma_r = {sigma_r}"
        )));
    }

    let mut rng = stream(seed, Purpose::Basis, 0);
    let g = Matrix::from_fn(d, d, |_, _| rng.sample(StandardNormal));
    let q = orthonormalize(&g)?;
    let u = q.columns(0, r);
    let v = q.columns(r, d);

    let xs = u.scale_cols(ds).matmul_t(&u);
    let xt = v.scale_cols(dt).matmul_t(&v);
    let xstar = SymMatrix::symmetrized(xs.add(&xt));

    Ok(GroundTruth {
        d,
        r,
        u,
        v,
        ds: ds.to_vec(),
        dt: dt.to_vec(),
        xstar,
        sigma1,
        sigma_r,
        sigma_r_plus_1,
        kappa: sigma1 / sigma_r,
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SensingDistribution {
    #[default]
    Gaussian,
    Rademacher,
}

/// Variance convention for the stored entries of each `A_i`.
///
/// `Unit` gives every upper-triangle entry (diagonal included) unit
/// variance. Then `E[⟨A,B⟩A] = 2B − diag(B)` and `E[A²] = d·I`.
/// `Isotropic` halves the off-diagonal variance, i.e. `A = (G + Gᵀ)/2`
/// for an iid matrix `G`, which makes `E[⟨A,B⟩A] = B`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntryScale {
    #[default]
    Unit,
    Isotropic,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MemoryMode {
    #[default]
    Dense,
    /// Keep only `(seed, i)` and redraw each `A_i` when it is needed.
    Regenerate,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SensingOptions {
    pub distribution: SensingDistribution,
    pub entry_scale: EntryScale,
    pub memory: MemoryMode,
}

/// Fills `out` (length `d(d+1)/2`) with the packed upper triangle of one
/// random sensing matrix.
pub fn draw_packed<R: Rng + ?Sized>(
    rng: &mut R,
    d: usize,
    distribution: SensingDistribution,
    scale: EntryScale,
    out: &mut [f64],
) {
    debug_assert_eq!(out.len(), packed_len(d));
    let off = match scale {
        EntryScale::Unit => 1.0,
        EntryScale::Isotropic => std::f64::consts::FRAC_1_SQRT_2,
    };
    let mut p = 0;
    for i in 0..d {
        for j in i..d {
            let x: f64 = match distribution {
                SensingDistribution::Gaussian => rng.sample(StandardNormal),
                SensingDistribution::Rademacher => {
                    if rng.random::<bool>() {
                        1.0
                    } else {
                        -1.0
                    }
                }
            };
            out[p] = if i == j { x } else { off * x };
            p += 1;
        }
    }
}

/// Packed upper triangle of `X` with off-diagonal entries doubled, so that
/// `⟨A, X⟩ = dot(packed(A), weights(X))`.
pub fn inner_weights(x: &SymMatrix) -> Vec<f64> {
    let d = x.dim();
    let mut w = Vec::with_capacity(packed_len(d));
    for i in 0..d {
        for j in i..d {
            w.push(if i == j { x[(i, j)] } else { 2.0 * x[(i, j)] });
        }
    }
    w
}

pub fn inner_product(a: &SymMatrix, x: &SymMatrix) -> Result<f64> {
    if a.dim() != x.dim() {
        return Err(Error::invalid(format!(
            "inner product of {}x{} and {}x{}",
            a.dim(),
            a.dim(),
            x.dim(),
            x.dim()
        )));
    }
    Ok(a.matrix().frobenius_dot(x.matrix()))
}

/// `n` sensing matrices with their noise draws and observations.
#[derive(Clone, Debug)]
pub struct SensingSet {
    d: usize,
    n: usize,
    sigma: f64,
    seed: u64,
    options: SensingOptions,
    /// `n` packed upper triangles back to back; empty in regenerate mode.
    packed: Vec<f64>,
    noise: Vec<f64>,
    observations: Vec<f64>,
}

impl SensingSet {
    pub fn d(&self) -> usize {
        self.d
    }
    pub fn n(&self) -> usize {
        self.n
    }
    pub fn sigma(&self) -> f64 {
        self.sigma
    }
    pub fn seed(&self) -> u64 {
        self.seed
    }
    pub fn distribution(&self) -> SensingDistribution {
        self.options.distribution
    }
    pub fn options(&self) -> SensingOptions {
        self.options
    }
    /// The ε_i.
    pub fn noise(&self) -> &[f64] {
        &self.noise
    }
    /// The y_i.
    pub fn observations(&self) -> &[f64] {
        &self.observations
    }

    /// Packed upper triangle of `A_i`. In regenerate mode it is drawn into `buf`.
    pub fn packed<'a>(&'a self, i: usize, buf: &'a mut Vec<f64>) -> &'a [f64] {
        let len = packed_len(self.d);
        match self.options.memory {
            MemoryMode::Dense => &self.packed[i * len..(i + 1) * len],
            MemoryMode::Regenerate => {
                buf.resize(len, 0.0);
                let mut rng = stream(self.seed, Purpose::Sensing, i as u64);
                draw_packed(&mut rng, self.d, self.options.distribution, self.options.entry_scale, buf);
                buf
            }
        }
    }

    pub fn matrix(&self, i: usize) -> SymMatrix {
        let mut buf = Vec::new();
        SymMatrix::from_packed_upper(self.d, self.packed(i, &mut buf)).expect("packed length")
    }

    pub fn matrices(&self) -> Vec<SymMatrix> {
        (0..self.n).map(|i| self.matrix(i)).collect()
    }
}

/// Sensing set for the default options (dense storage, unit entry variance).
pub fn generate_sensing(
    gt: &GroundTruth,
    n: usize,
    sigma: f64,
    distribution: SensingDistribution,
    seed: u64,
) -> Result<SensingSet> {
    let options = SensingOptions {
        distribution,
        ..Default::default()
    };
    generate_sensing_for(gt.xstar(), n, sigma, options, seed)
}

/// Sensing set observing an arbitrary symmetric target.
pub fn generate_sensing_for(
    xstar: &SymMatrix,
    n: usize,
    sigma: f64,
    options: SensingOptions,
    seed: u64,
) -> Result<SensingSet> {
    if n == 0 {
        return Err(Error::invalid("n must be at least 1"));
    }
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::invalid(format!("sigma must be finite and >= 0, got {sigma}")));
    }
    let d = xstar.dim();
    let len = packed_len(d);
    let weights = inner_weights(xstar);

    let mut noise_rng = stream(seed, Purpose::Noise, 0);
    let noise: Vec<f64> = (0..n)
        .map(|_| sigma * noise_rng.sample::<f64, _>(StandardNormal))
        .collect();

    let mut packed = match options.memory {
        MemoryMode::Dense => vec![0.0; n * len],
        MemoryMode::Regenerate => Vec::new(),
    };
    let mut buf = vec![0.0; len];
    let mut observations = Vec::with_capacity(n);
    for (i, eps) in noise.iter().enumerate() {
        let slot = match options.memory {
            MemoryMode::Dense => &mut packed[i * len..(i + 1) * len],
            MemoryMode::Regenerate => &mut buf[..],
        };
        let mut rng = stream(seed, Purpose::Sensing, i as u64);
        draw_packed(&mut rng, d, options.distribution, options.entry_scale, slot);
        observations.push(dot(slot, &weights) + eps);
    }

    Ok(SensingSet {
        d,
        n,
        sigma,
        seed,
        options,
        packed,
        noise,
        observations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Norms;

    fn reference_truth(seed: u64) -> GroundTruth {
        generate_ground_truth(20, 3, &[1.0, 0.9, 0.8], &[0.0; 17], seed).unwrap()
    }

    #[test]
    fn reference_spectrum() {
        let gt = reference_truth(1);
        assert_eq!(gt.sigma1(), 1.0);
        assert_eq!(gt.sigma_r(), 0.8);
        assert_eq!(gt.sigma_r_plus_1(), 0.0);
        assert!((gt.kappa() - 1.25).abs() < 1e-15);
        let e = crate::linalg::sym_eig(gt.xstar()).unwrap();
        let rank = e.values.iter().filter(|v| v.abs() > 1e-10).count();
        assert_eq!(rank, 3);
        assert!((e.values[0] - 1.0).abs() < 1e-12);
        assert!((e.values[2] - 0.8).abs() < 1e-12);
    }

    #[test]
    fn bases_are_orthonormal_and_complementary() {
        let gt = generate_ground_truth(7, 2, &[2.0, 1.0], &[0.5, -0.3, 0.1, 0.0, 0.0], 11).unwrap();
        let u = gt.u();
        let v = gt.v();
        assert!(u.t_matmul(u).sub(&Matrix::identity(2)).fro() < 1e-10);
        assert!(v.t_matmul(v).sub(&Matrix::identity(5)).fro() < 1e-10);
        assert!(u.t_matmul(v).fro() < 1e-10);
        let rebuilt = u
            .scale_cols(gt.ds())
            .matmul_t(u)
            .add(&v.scale_cols(gt.dt()).matmul_t(v));
        assert!(rebuilt.sub(gt.xstar().matrix()).fro() < 1e-10);
    }

    #[test]
    fn full_rank_has_empty_complement() {
        let gt = generate_ground_truth(3, 3, &[1.0, 0.5, 0.25], &[], 2).unwrap();
        assert_eq!(gt.v().shape(), (3, 0));
        assert_eq!(gt.sigma_r_plus_1(), 0.0);
    }

    #[test]
    fn spectrum_validation() {
        assert!(generate_ground_truth(5, 2, &[1.0, 0.5], &[0.5, 0.0, 0.0], 0).is_err());
        assert!(generate_ground_truth(5, 2, &[0.5, 1.0], &[0.0; 3], 0).is_err());
        assert!(generate_ground_truth(5, 2, &[1.0, 0.0], &[0.0; 3], 0).is_err());
        assert!(generate_ground_truth(5, 2, &[1.0, 0.5], &[0.1, 0.2, 0.0], 0).is_err());
        assert!(generate_ground_truth(5, 2, &[1.0], &[0.0; 3], 0).is_err());
        assert!(generate_ground_truth(5, 0, &[], &[0.0; 5], 0).is_err());
        assert!(generate_ground_truth(5, 6, &[1.0; 6], &[], 0).is_err());
    }

    #[test]
    fn generation_is_deterministic() {
        let a = reference_truth(5);
        let b = reference_truth(5);
        assert_eq!(a.xstar(), b.xstar());
        assert_ne!(a.xstar(), reference_truth(6).xstar());
        let sa = generate_sensing(&a, 50, 0.3, SensingDistribution::Gaussian, 9).unwrap();
        let sb = generate_sensing(&b, 50, 0.3, SensingDistribution::Gaussian, 9).unwrap();
        assert_eq!(sa.observations(), sb.observations());
        assert_eq!(sa.matrices(), sb.matrices());
    }

    #[test]
    fn noiseless_observations_are_exact() {
        let gt = reference_truth(3);
        let s = generate_sensing(&gt, 40, 0.0, SensingDistribution::Gaussian, 4).unwrap();
        for i in 0..s.n() {
            let direct = inner_product(&s.matrix(i), gt.xstar()).unwrap();
            assert!((direct - s.observations()[i]).abs() < 1e-12);
            assert_eq!(s.noise()[i], 0.0);
        }
    }

    #[test]
    fn observations_include_stored_noise() {
        let gt = reference_truth(3);
        let s = generate_sensing(&gt, 40, 0.5, SensingDistribution::Gaussian, 4).unwrap();
        for i in 0..s.n() {
            let direct = inner_product(&s.matrix(i), gt.xstar()).unwrap() + s.noise()[i];
            assert!((direct - s.observations()[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn gaussian_entries_have_unit_variance() {
        let gt = reference_truth(0);
        let s = generate_sensing(&gt, 1000, 0.0, SensingDistribution::Gaussian, 8).unwrap();
        let mut buf = Vec::new();
        let all: Vec<f64> = (0..s.n()).flat_map(|i| s.packed(i, &mut buf).to_vec()).collect();
        let mean = all.iter().sum::<f64>() / all.len() as f64;
        let var = all.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (all.len() - 1) as f64;
        assert!((var - 1.0).abs() < 0.05, "variance {var}");
    }

    #[test]
    fn rademacher_support() {
        let gt = reference_truth(0);
        let s = generate_sensing(&gt, 30, 0.0, SensingDistribution::Rademacher, 8).unwrap();
        for a in s.matrices() {
            assert!(a.matrix().as_slice().iter().all(|&x| x == 1.0 || x == -1.0));
        }
    }

    #[test]
    fn regenerate_mode_matches_dense() {
        let gt = reference_truth(2);
        let dense = generate_sensing_for(gt.xstar(), 25, 0.1, SensingOptions::default(), 7).unwrap();
        let regen = generate_sensing_for(
            gt.xstar(),
            25,
            0.1,
            SensingOptions {
                memory: MemoryMode::Regenerate,
                ..Default::default()
            },
            7,
        )
        .unwrap();
        assert_eq!(dense.observations(), regen.observations());
        assert_eq!(dense.matrices(), regen.matrices());
    }

    #[test]
    fn isotropic_scales_off_diagonal_only() {
        let xs = SymMatrix::zeros(4);
        let unit = generate_sensing_for(&xs, 3, 0.0, SensingOptions::default(), 1).unwrap();
        let iso = generate_sensing_for(
            &xs,
            3,
            0.0,
            SensingOptions {
                entry_scale: EntryScale::Isotropic,
                ..Default::default()
            },
            1,
        )
        .unwrap();
        let (a, b) = (unit.matrix(0), iso.matrix(0));
        for i in 0..4 {
            for j in 0..4 {
                let f = if i == j { 1.0 } else { std::f64::consts::FRAC_1_SQRT_2 };
                assert!((a[(i, j)] * f - b[(i, j)]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn inner_product_examples() {
        assert_eq!(inner_product(&SymMatrix::identity(6), &SymMatrix::identity(6)).unwrap(), 6.0);
        let a = SymMatrix::from_diag(&[1.0, 2.0]);
        assert_eq!(inner_product(&a, &SymMatrix::zeros(2)).unwrap(), 0.0);
        assert_eq!(inner_product(&a, &SymMatrix::from_diag(&[3.0, 4.0])).unwrap(), 11.0);
        assert!(inner_product(&a, &SymMatrix::zeros(3)).is_err());
    }

    #[test]
    fn weights_reproduce_inner_product() {
        let gt = reference_truth(4);
        let s = generate_sensing(&gt, 3, 0.0, SensingDistribution::Gaussian, 1).unwrap();
        let w = inner_weights(gt.xstar());
        let mut buf = Vec::new();
        let direct = inner_product(&s.matrix(2), gt.xstar()).unwrap();
        assert!((dot(s.packed(2, &mut buf), &w) - direct).abs() < 1e-12);
    }

    #[test]
    fn sensing_validation() {
        let gt = reference_truth(0);
        assert!(generate_sensing(&gt, 0, 0.0, SensingDistribution::Gaussian, 0).is_err());
        assert!(generate_sensing(&gt, 5, -1.0, SensingDistribution::Gaussian, 0).is_err());
        assert!(gt.xstar().spectral_norm().unwrap() > 0.0);
    }

    #[test]
    fn tail_spectrum_parses_both_forms() {
        let z: TailSpectrum = serde_json::from_str("\"zeros\"").unwrap();
        assert_eq!(z.resolve(3), vec![0.0; 3]);
        let v: TailSpectrum = serde_json::from_str("[0.1, 0.05]").unwrap();
        assert_eq!(v.resolve(2), vec![0.1, 0.05]);
        assert!(serde_json::from_str::<TailSpectrum>("\"ones\"").is_err());
    }
}
