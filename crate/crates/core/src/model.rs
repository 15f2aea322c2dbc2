//! Heston and two-asset Heston specifications, variance path simulation and
//! the per-interval sufficient statistics that drive the conditional PDEs.
//!
//! Only the variance components are simulated: conditional on a variance
//! path the log-asset dynamics are affine, so everything the pricer needs
//! from a path over `[t_n, t_{n+1}]` is a short record of endpoints, time
//! integrals and stochastic integrals.

use std::io::{Read, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_param, Error, Result};
use crate::par;

/// One-dimensional Heston model `dS = S(r dt + sqrt(v) dW^S)`,
/// `dv = kappa (theta - v) dt + eta sqrt(v) dW^v`, `d<W^S, W^v> = rho dt`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HestonSpec {
    pub r: f64,
    pub kappa: f64,
    pub theta: f64,
    pub eta: f64,
    pub rho: f64,
    pub v0: f64,
    pub s0: f64,
}

impl HestonSpec {
    pub fn new(r: f64, kappa: f64, theta: f64, eta: f64, rho: f64, v0: f64, s0: f64) -> Result<Self> {
        let spec = Self { r, kappa, theta, eta, rho, v0, s0 };
        spec.validate()?;
        Ok(spec)
    }

    /// The single-asset benchmark set: T = 1, K = 10 put with monthly exercise.
    pub fn benchmark() -> Self {
        Self {
            r: 0.02,
            kappa: 5.0,
            theta: 0.16,
            eta: 0.9,
            rho: 0.1,
            v0: 0.15,
            s0: 10.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure_param(self.r.is_finite(), "r", self.r, "must be finite")?;
        ensure_param(self.kappa > 0.0, "kappa", self.kappa, "must be positive")?;
        ensure_param(self.theta > 0.0, "theta", self.theta, "must be positive")?;
        ensure_param(self.eta > 0.0, "eta", self.eta, "must be positive")?;
        ensure_param(self.rho.abs() <= 1.0, "rho", self.rho, "must lie in [-1, 1]")?;
        ensure_param(self.v0 >= 0.0, "v0", self.v0, "must be non-negative")?;
        ensure_param(self.s0 > 0.0, "s0", self.s0, "must be positive")?;
        Ok(())
    }
}

/// Variance factor parameters for one asset of the two-asset model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarianceFactor {
    pub kappa: f64,
    pub theta: f64,
    pub eta: f64,
    pub v0: f64,
    pub s0: f64,
}

/// Two-asset Heston model driven by four correlated Brownian motions ordered
/// `(W^{S1}, W^{S2}, W^{v1}, W^{v2})`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiHestonSpec {
    pub r: f64,
    pub assets: [VarianceFactor; 2],
    pub rho: [[f64; 4]; 4],
    /// Upper-triangular factor with `rho = chol * chol^T` and `chol[3][3] = 1`,
    /// so the second variance loads only on the last independent factor.
    pub chol: [[f64; 4]; 4],
}

impl MultiHestonSpec {
    pub fn new(r: f64, assets: [VarianceFactor; 2], rho: [[f64; 4]; 4]) -> Result<Self> {
        ensure_param(r.is_finite(), "r", r, "must be finite")?;
        for a in &assets {
            ensure_param(a.kappa > 0.0, "kappa", a.kappa, "must be positive")?;
            ensure_param(a.theta > 0.0, "theta", a.theta, "must be positive")?;
            ensure_param(a.eta > 0.0, "eta", a.eta, "must be positive")?;
            ensure_param(a.v0 >= 0.0, "v0", a.v0, "must be non-negative")?;
            ensure_param(a.s0 > 0.0, "s0", a.s0, "must be positive")?;
        }
        let chol = upper_cholesky(&rho)?;
        Ok(Self { r, assets, rho, chol })
    }

    /// The two-asset benchmark set used for the max-put.
    pub fn benchmark() -> Self {
        let assets = [
            VarianceFactor { kappa: 1.52, theta: 0.45, eta: 0.4, v0: 0.45, s0: 10.0 },
            VarianceFactor { kappa: 1.3, theta: 0.30, eta: 0.43, v0: 0.3, s0: 10.0 },
        ];
        let rho = [
            [1.0, 0.2, -0.3, -0.15],
            [0.2, 1.0, -0.11, -0.35],
            [-0.3, -0.11, 1.0, 0.2],
            [-0.15, -0.35, 0.2, 1.0],
        ];
        Self::new(0.025, assets, rho).expect("benchmark correlation is positive definite")
    }
}

/// Factor a correlation matrix as `rho = a a^T` with `a` upper triangular.
///
/// This is the standard Cholesky factorization applied in reverse index
/// order, which puts the zero pattern in the lower triangle.
pub fn upper_cholesky(rho: &[[f64; 4]; 4]) -> Result<[[f64; 4]; 4]> {
    for i in 0..4 {
        if (rho[i][i] - 1.0).abs() > 1e-12 {
            return Err(Error::Configuration(format!(
                "correlation diagonal entry {i} is {} instead of 1",
                rho[i][i]
            )));
        }
        for j in 0..4 {
            if (rho[i][j] - rho[j][i]).abs() > 1e-12 {
                return Err(Error::Configuration(format!("correlation matrix not symmetric at ({i},{j})")));
            }
            if rho[i][j].abs() > 1.0 {
                return Err(Error::Configuration(format!("correlation entry ({i},{j}) outside [-1, 1]")));
            }
        }
    }
    let mut a = [[0.0; 4]; 4];
    for i in (0..4).rev() {
        let mut pivot = rho[i][i];
        for k in (i + 1)..4 {
            pivot -= a[i][k] * a[i][k];
        }
        if pivot <= 1e-14 {
            return Err(Error::Configuration("correlation matrix is not positive definite".into()));
        }
        a[i][i] = pivot.sqrt();
        for r in 0..i {
            let mut s = rho[r][i];
            for k in (i + 1)..4 {
                s -= a[r][k] * a[i][k];
            }
            a[r][i] = s / a[i][i];
        }
    }
    for i in 0..4 {
        for j in 0..4 {
            let prod: f64 = (0..4).map(|k| a[i][k] * a[j][k]).sum();
            if (prod - rho[i][j]).abs() > 1e-12 {
                return Err(Error::Numeric(format!("cholesky factor misses rho[{i}][{j}] by {:e}", prod - rho[i][j])));
            }
        }
    }
    Ok(a)
}

/// Map independent standard increments `z` to correlated ones `a z`.
pub fn correlate(chol: &[[f64; 4]; 4], z: &[f64; 4]) -> [f64; 4] {
    let mut w = [0.0; 4];
    for i in 0..4 {
        w[i] = (i..4).map(|k| chol[i][k] * z[k]).sum();
    }
    w
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ModelSpec {
    Heston(HestonSpec),
    MultiHeston(MultiHestonSpec),
}

impl ModelSpec {
    /// Number of assets, which is also the number of variance factors.
    pub fn dim(&self) -> usize {
        match self {
            ModelSpec::Heston(_) => 1,
            ModelSpec::MultiHeston(_) => 2,
        }
    }

    pub fn rate(&self) -> f64 {
        match self {
            ModelSpec::Heston(h) => h.r,
            ModelSpec::MultiHeston(m) => m.r,
        }
    }

    pub fn spots(&self) -> Vec<f64> {
        match self {
            ModelSpec::Heston(h) => vec![h.s0],
            ModelSpec::MultiHeston(m) => m.assets.iter().map(|a| a.s0).collect(),
        }
    }

    pub fn initial_variance(&self) -> Vec<f64> {
        match self {
            ModelSpec::Heston(h) => vec![h.v0],
            ModelSpec::MultiHeston(m) => m.assets.iter().map(|a| a.v0).collect(),
        }
    }

    pub fn long_run_variance(&self) -> Vec<f64> {
        match self {
            ModelSpec::Heston(h) => vec![h.theta],
            ModelSpec::MultiHeston(m) => m.assets.iter().map(|a| a.theta).collect(),
        }
    }

    pub fn layout(&self) -> ThetaLayout {
        ThetaLayout::for_dim(self.dim())
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ModelSpec::Heston(h) => h.validate(),
            ModelSpec::MultiHeston(m) => MultiHestonSpec::new(m.r, m.assets, m.rho).map(|_| ()),
        }
    }
}

/// Equally spaced exercise dates `t_k = k T / M`, `k = 1..=M`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExerciseSchedule {
    pub maturity: f64,
    pub n_dates: usize,
}

impl ExerciseSchedule {
    pub fn new(maturity: f64, n_dates: usize) -> Result<Self> {
        ensure_param(maturity > 0.0 && maturity.is_finite(), "maturity", maturity, "must be positive")?;
        ensure_param(n_dates >= 1, "n_dates", n_dates as f64, "need at least one exercise date")?;
        Ok(Self { maturity, n_dates })
    }

    pub fn dt(&self) -> f64 {
        self.maturity / self.n_dates as f64
    }

    pub fn dates(&self) -> Vec<f64> {
        (1..=self.n_dates).map(|k| self.time(k)).collect()
    }

    /// Time of date `k`; `k = 0` is the valuation date.
    pub fn time(&self, k: usize) -> f64 {
        if k == self.n_dates {
            self.maturity
        } else {
            k as f64 * self.dt()
        }
    }
}

/// Field positions inside a Θ record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ThetaLayout {
    /// `(v_n, ∫sqrt(v) dW^v, ∫v dt, v_{n+1})`
    OneFactor,
    /// `(v1_n, v2_n, Z1, Z2, ∫v1 dt, ∫v2 dt, ∫sqrt(v1 v2) dt, v1_{n+1}, v2_{n+1})`
    TwoFactor,
}

impl ThetaLayout {
    pub const SQRT_V_DW: usize = 1;
    pub const INT_V: usize = 2;

    pub const Z1: usize = 2;
    pub const Z2: usize = 3;
    pub const INT_V1: usize = 4;
    pub const INT_V2: usize = 5;
    pub const INT_CROSS: usize = 6;

    pub fn for_dim(dim: usize) -> Self {
        if dim == 2 {
            ThetaLayout::TwoFactor
        } else {
            ThetaLayout::OneFactor
        }
    }

    pub fn dim(self) -> usize {
        match self {
            ThetaLayout::OneFactor => 1,
            ThetaLayout::TwoFactor => 2,
        }
    }

    pub fn len(self) -> usize {
        match self {
            ThetaLayout::OneFactor => 4,
            ThetaLayout::TwoFactor => 9,
        }
    }

    pub fn start_variance(self, theta: &[f64]) -> &[f64] {
        match self {
            ThetaLayout::OneFactor => &theta[0..1],
            ThetaLayout::TwoFactor => &theta[0..2],
        }
    }

    pub fn end_variance(self, theta: &[f64]) -> &[f64] {
        match self {
            ThetaLayout::OneFactor => &theta[3..4],
            ThetaLayout::TwoFactor => &theta[7..9],
        }
    }

    /// Indices of fields that are variances or time integrals (never negative).
    pub fn nonnegative_fields(self) -> &'static [usize] {
        match self {
            ThetaLayout::OneFactor => &[0, 2, 3],
            ThetaLayout::TwoFactor => &[0, 1, 4, 5, 6, 7, 8],
        }
    }
}

/// Θ for a variance path frozen at `v_const` over an interval of length `dt`.
pub fn theta_of_constant_path(v_const: f64, dt: f64) -> Result<[f64; 4]> {
    ensure_param(v_const >= 0.0, "v_const", v_const, "must be non-negative")?;
    ensure_param(dt > 0.0, "dt", dt, "must be positive")?;
    Ok([v_const, 0.0, v_const * dt, v_const])
}

/// Two-factor Θ for frozen variances `(v1, v2)` with no Brownian shift.
pub fn theta2_of_constant_path(v1: f64, v2: f64, dt: f64) -> Result<[f64; 9]> {
    ensure_param(v1 >= 0.0, "v1", v1, "must be non-negative")?;
    ensure_param(v2 >= 0.0, "v2", v2, "must be non-negative")?;
    ensure_param(dt > 0.0, "dt", dt, "must be positive")?;
    Ok([v1, v2, 0.0, 0.0, v1 * dt, v2 * dt, (v1 * v2).sqrt() * dt, v1, v2])
}

/// Θ records for `n_paths` simulated variance paths over every exercise
/// interval. Storage is path-major: record `(p, n)` starts at
/// `(p * intervals + n) * layout.len()`.
#[derive(Debug, Clone, PartialEq)]
pub struct PathBundle {
    pub layout: ThetaLayout,
    pub n_paths: usize,
    pub intervals: usize,
    pub seed: u64,
    pub theta: Vec<f64>,
}

impl PathBundle {
    pub fn record(&self, path: usize, interval: usize) -> &[f64] {
        let d = self.layout.len();
        let start = (path * self.intervals + interval) * d;
        &self.theta[start..start + d]
    }

    /// All Θ records of one interval as an `n_paths × d_Θ` row-major block.
    pub fn interval_block(&self, interval: usize) -> Vec<f64> {
        let d = self.layout.len();
        let mut out = Vec::with_capacity(self.n_paths * d);
        for p in 0..self.n_paths {
            out.extend_from_slice(self.record(p, interval));
        }
        out
    }

    /// Variance at the start of `interval` for every path, flattened as
    /// `n_paths × dim`.
    pub fn start_variances(&self, interval: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_paths * self.layout.dim());
        for p in 0..self.n_paths {
            out.extend_from_slice(self.layout.start_variance(self.record(p, interval)));
        }
        out
    }

    const MAGIC: &'static [u8; 4] = b"LSPB";
    const VERSION: u32 = 1;

    /// Little-endian dump: magic `LSPB`, u32 version, u32 factor count,
    /// u64 paths, u64 intervals, u64 seed, then the Θ array as f64.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(Self::MAGIC)?;
        w.write_all(&Self::VERSION.to_le_bytes())?;
        w.write_all(&(self.layout.dim() as u32).to_le_bytes())?;
        w.write_all(&(self.n_paths as u64).to_le_bytes())?;
        w.write_all(&(self.intervals as u64).to_le_bytes())?;
        w.write_all(&self.seed.to_le_bytes())?;
        for x in &self.theta {
            w.write_all(&x.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != Self::MAGIC {
            return Err(Error::Format("not a path bundle (bad magic)".into()));
        }
        let mut b4 = [0u8; 4];
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b4)?;
        let version = u32::from_le_bytes(b4);
        if version != Self::VERSION {
            return Err(Error::Format(format!("unsupported path bundle version {version}")));
        }
        r.read_exact(&mut b4)?;
        let layout = match u32::from_le_bytes(b4) {
            1 => ThetaLayout::OneFactor,
            2 => ThetaLayout::TwoFactor,
            d => return Err(Error::Format(format!("unsupported factor count {d}"))),
        };
        r.read_exact(&mut b8)?;
        let n_paths = u64::from_le_bytes(b8) as usize;
        r.read_exact(&mut b8)?;
        let intervals = u64::from_le_bytes(b8) as usize;
        r.read_exact(&mut b8)?;
        let seed = u64::from_le_bytes(b8);
        let len = n_paths
            .checked_mul(intervals)
            .and_then(|x| x.checked_mul(layout.len()))
            .ok_or_else(|| Error::Format("path bundle header overflows".into()))?;
        let mut theta = Vec::with_capacity(len);
        for _ in 0..len {
            r.read_exact(&mut b8)
                .map_err(|_| Error::Format("path bundle truncated".into()))?;
            theta.push(f64::from_le_bytes(b8));
        }
        Ok(Self { layout, n_paths, intervals, seed, theta })
    }
}

/// Random stream for one path: ChaCha8 keyed by `seed`, stream id = path
/// index. Streams never overlap, so any partition of paths over threads
/// reproduces the same bundle.
pub fn path_rng(seed: u64, path: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path as u64);
    rng
}

/// Independent seed for a sub-simulation (a level, the re-simulated low
/// paths, a trial) via a splitmix64 finalizer, so nearby seeds and tags do
/// not produce overlapping streams.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn check_steps(schedule: &ExerciseSchedule, n_steps: usize) -> Result<usize> {
    if n_steps < schedule.n_dates || !n_steps.is_multiple_of(schedule.n_dates) {
        return Err(Error::Configuration(format!(
            "{n_steps} Euler steps cannot be split evenly over {} exercise intervals",
            schedule.n_dates
        )));
    }
    Ok(n_steps / schedule.n_dates)
}

/// Simulate variance paths with full-truncation Euler and accumulate Θ for
/// every exercise interval. Stochastic integrals use left-point sums driven
/// by the same increments as the variance update.
pub fn simulate_paths(
    model: &ModelSpec,
    schedule: &ExerciseSchedule,
    n_paths: usize,
    n_steps: usize,
    seed: u64,
) -> Result<PathBundle> {
    model.validate()?;
    let per_interval = check_steps(schedule, n_steps)?;
    let dt = schedule.maturity / n_steps as f64;
    let layout = model.layout();
    let d = layout.len();
    let m = schedule.n_dates;
    let mut theta = vec![0.0; n_paths * m * d];
    let block = m * d;
    match model {
        ModelSpec::Heston(h) => {
            par::for_each_chunk_mut(&mut theta, block, |p, out| {
                simulate_one_factor(h, per_interval, dt, &mut path_rng(seed, p), out)
            });
        }
        ModelSpec::MultiHeston(mh) => {
            par::for_each_chunk_mut(&mut theta, block, |p, out| {
                simulate_two_factor(mh, per_interval, dt, &mut path_rng(seed, p), out)
            });
        }
    }
    Ok(PathBundle { layout, n_paths, intervals: m, seed, theta })
}

fn simulate_one_factor(h: &HestonSpec, per_interval: usize, dt: f64, rng: &mut ChaCha8Rng, out: &mut [f64]) {
    let sq_dt = dt.sqrt();
    // full truncation keeps the raw state and feeds max(v, 0) to the coefficients
    let mut v = h.v0;
    for rec in out.chunks_exact_mut(4) {
        let v_start = v.max(0.0);
        let mut sdw = 0.0;
        let mut iv = 0.0;
        for _ in 0..per_interval {
            let z: f64 = StandardNormal.sample(rng);
            let dw = sq_dt * z;
            let vp = v.max(0.0);
            let sv = vp.sqrt();
            sdw += sv * dw;
            iv += vp * dt;
            v += h.kappa * (h.theta - vp) * dt + h.eta * sv * dw;
        }
        rec[0] = v_start;
        rec[1] = sdw;
        rec[2] = iv;
        rec[3] = v.max(0.0);
    }
}

fn simulate_two_factor(mh: &MultiHestonSpec, per_interval: usize, dt: f64, rng: &mut ChaCha8Rng, out: &mut [f64]) {
    let sq_dt = dt.sqrt();
    let a = &mh.chol;
    let [f1, f2] = mh.assets;
    let (mut v1, mut v2) = (f1.v0, f2.v0);
    for rec in out.chunks_exact_mut(9) {
        let (s1, s2) = (v1.max(0.0), v2.max(0.0));
        let (mut z1, mut z2, mut i1, mut i2, mut ic) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for _ in 0..per_interval {
            let g3: f64 = StandardNormal.sample(rng);
            let g4: f64 = StandardNormal.sample(rng);
            let (db3, db4) = (sq_dt * g3, sq_dt * g4);
            let (p1, p2) = (v1.max(0.0), v2.max(0.0));
            let (r1, r2) = (p1.sqrt(), p2.sqrt());
            z1 += r1 * (a[0][2] * db3 + a[0][3] * db4);
            z2 += r2 * (a[1][2] * db3 + a[1][3] * db4);
            i1 += p1 * dt;
            i2 += p2 * dt;
            ic += r1 * r2 * dt;
            v1 += f1.kappa * (f1.theta - p1) * dt + f1.eta * r1 * (a[2][2] * db3 + a[2][3] * db4);
            v2 += f2.kappa * (f2.theta - p2) * dt + f2.eta * r2 * a[3][3] * db4;
        }
        rec.copy_from_slice(&[s1, s2, z1, z2, i1, i2, ic, v1.max(0.0), v2.max(0.0)]);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_path_statistics() {
        let t = theta_of_constant_path(0.16, 1.0 / 12.0).unwrap();
        assert_eq!(t[0], 0.16);
        assert_eq!(t[1], 0.0);
        assert!((t[2] - 0.16 / 12.0).abs() < 1e-15);
        assert_eq!(t[3], 0.16);

        let z = theta_of_constant_path(0.0, 0.5).unwrap();
        assert_eq!(z, [0.0; 4]);

        let t2 = theta2_of_constant_path(0.3, 0.3, 0.25).unwrap();
        assert!((t2[ThetaLayout::INT_CROSS] - 0.3 * 0.25).abs() < 1e-15);

        assert!(theta_of_constant_path(-0.1, 1.0).is_err());
        assert!(theta_of_constant_path(0.1, 0.0).is_err());
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(HestonSpec::new(0.02, -1.0, 0.16, 0.9, 0.1, 0.15, 10.0).is_err());
        assert!(HestonSpec::new(0.02, 5.0, 0.16, 0.9, 1.5, 0.15, 10.0).is_err());
        assert!(HestonSpec::new(0.02, 5.0, 0.16, 0.9, 0.1, -0.1, 10.0).is_err());
        assert!(HestonSpec::new(0.02, 5.0, 0.16, 0.0, 0.1, 0.15, 10.0).is_err());
    }

    #[test]
    fn steps_must_split_evenly() {
        let model = ModelSpec::Heston(HestonSpec::benchmark());
        let sched = ExerciseSchedule::new(1.0, 12).unwrap();
        let err = simulate_paths(&model, &sched, 4, 1000, 1).unwrap_err();
        assert!(matches!(err, Error::Configuration(_)));
        assert!(simulate_paths(&model, &sched, 4, 6, 1).is_err());
    }

    #[test]
    fn upper_cholesky_zero_pattern() {
        let mh = MultiHestonSpec::benchmark();
        let a = mh.chol;
        assert_eq!(a[3][3], 1.0);
        for i in 0..4 {
            for j in 0..i {
                assert_eq!(a[i][j], 0.0);
            }
        }
        for i in 0..4 {
            for j in 0..4 {
                let p: f64 = (0..4).map(|k| a[i][k] * a[j][k]).sum();
                assert!((p - mh.rho[i][j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rejects_indefinite_correlation() {
        let mut rho = MultiHestonSpec::benchmark().rho;
        rho[0][1] = 0.99;
        rho[1][0] = 0.99;
        rho[0][2] = -0.99;
        rho[2][0] = -0.99;
        rho[1][2] = 0.99;
        rho[2][1] = 0.99;
        assert!(upper_cholesky(&rho).is_err());
    }

    #[test]
    fn bundle_roundtrip() {
        let model = ModelSpec::MultiHeston(MultiHestonSpec::benchmark());
        let sched = ExerciseSchedule::new(1.0, 4).unwrap();
        let b = simulate_paths(&model, &sched, 7, 40, 99).unwrap();
        let mut buf = Vec::new();
        b.write_to(&mut buf).unwrap();
        assert_eq!(buf.len(), 4 + 4 + 4 + 24 + b.theta.len() * 8);
        let back = PathBundle::read_from(buf.as_slice()).unwrap();
        assert_eq!(back, b);
        assert!(PathBundle::read_from(&buf[..buf.len() - 3]).is_err());
        assert!(PathBundle::read_from(&b"XXXX"[..]).is_err());
    }
}
