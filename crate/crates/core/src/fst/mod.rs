//! Fourier space time-stepping for the path-conditional pricing PDE.
//!
//! Given a variance path, the log-asset process over one exercise interval
//! is Gaussian with a drift and variance fixed by the path statistics Θ.
//! The interval solve is therefore a single spectral multiplication:
//! `u_n = IFFT[ FFT[g_{n+1}] exp(Psi) ]`, exact in time.

mod grid;

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

pub use grid::{GridSpec, ValueSurface};

use crate::error::{Error, Result};
use crate::model::{ModelSpec, ThetaLayout};

/// Integrated characteristic exponent of the conditional log-asset
/// increment over one interval, kept in coefficient form
///
/// `Psi(w) = i w.drift - 1/2 w^T Sigma w`
///
/// so it can be evaluated at arbitrary frequencies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Psi {
    pub grid: GridSpec,
    /// Mean shift per axis: `Z + ∫(r - v/2) dt`.
    pub drift: [f64; 2],
    /// Integrated conditional variance per axis.
    pub var: [f64; 2],
    /// Integrated conditional covariance between the two axes.
    pub cov: f64,
}

impl Psi {
    pub fn eval(&self, w1: f64, w2: f64) -> Complex64 {
        let re = -0.5 * (w1 * w1 * self.var[0] + 2.0 * w1 * w2 * self.cov + w2 * w2 * self.var[1]);
        let im = w1 * self.drift[0] + w2 * self.drift[1];
        Complex64::new(re, im)
    }

    /// Ψ at every grid frequency, flattened like the grid.
    pub fn values(&self) -> Vec<Complex64> {
        let g = &self.grid;
        match g.dim {
            1 => (0..g.n).map(|k| self.eval(g.omega(k), 0.0)).collect(),
            _ => {
                let mut out = Vec::with_capacity(g.len());
                for k1 in 0..g.n {
                    for k2 in 0..g.n {
                        out.push(self.eval(g.omega(k1), g.omega(k2)));
                    }
                }
                out
            }
        }
    }

    fn is_finite(&self) -> bool {
        self.drift.iter().chain(self.var.iter()).all(|x| x.is_finite()) && self.cov.is_finite()
    }
}

/// Build Ψ for one interval of length `dt` from a Θ record.
pub fn build_psi(theta: &[f64], model: &ModelSpec, grid: &GridSpec, dt: f64) -> Result<Psi> {
    let layout = model.layout();
    if theta.len() != layout.len() || grid.dim != layout.dim() {
        return Err(Error::Configuration(format!(
            "Θ record of length {} and {}-d grid do not match a {}-factor model",
            theta.len(),
            grid.dim,
            model.dim()
        )));
    }
    let r = model.rate();
    Ok(match model {
        ModelSpec::Heston(h) => {
            let iv = theta[ThetaLayout::INT_V];
            let z = h.rho * theta[ThetaLayout::SQRT_V_DW];
            Psi {
                grid: *grid,
                drift: [z + r * dt - 0.5 * iv, 0.0],
                var: [(1.0 - h.rho * h.rho) * iv, 0.0],
                cov: 0.0,
            }
        }
        ModelSpec::MultiHeston(m) => {
            let a = &m.chol;
            let (iv1, iv2) = (theta[ThetaLayout::INT_V1], theta[ThetaLayout::INT_V2]);
            Psi {
                grid: *grid,
                drift: [
                    theta[ThetaLayout::Z1] + r * dt - 0.5 * iv1,
                    theta[ThetaLayout::Z2] + r * dt - 0.5 * iv2,
                ],
                var: [(a[0][0] * a[0][0] + a[0][1] * a[0][1]) * iv1, a[1][1] * a[1][1] * iv2],
                cov: a[0][1] * a[1][1] * theta[ThetaLayout::INT_CROSS],
            }
        }
    })
}

/// Reusable FFT plans for one grid. Cheap to clone; each concurrent task
/// brings its own [`FstWorkspace`].
#[derive(Clone)]
pub struct FstSolver {
    grid: GridSpec,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    omega: Vec<f64>,
}

impl std::fmt::Debug for FstSolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FstSolver").field("grid", &self.grid).finish()
    }
}

/// Per-task scratch buffers for [`FstSolver::solve_into`].
#[derive(Debug, Default)]
pub struct FstWorkspace {
    data: Vec<Complex64>,
    line: Vec<Complex64>,
    scratch: Vec<Complex64>,
}

impl FstSolver {
    pub fn new(grid: GridSpec) -> Self {
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(grid.n);
        let inverse = planner.plan_fft_inverse(grid.n);
        let omega = (0..grid.n).map(|k| grid.omega(k)).collect();
        Self { grid, forward, inverse, omega }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn workspace(&self) -> FstWorkspace {
        let scratch_len = self
            .forward
            .get_inplace_scratch_len()
            .max(self.inverse.get_inplace_scratch_len());
        FstWorkspace {
            data: vec![Complex64::default(); self.grid.len()],
            line: vec![Complex64::default(); self.grid.n],
            scratch: vec![Complex64::default(); scratch_len],
        }
    }

    /// Spectral multiplier `exp(Psi)` at one bin. At the Nyquist bin the
    /// frequency sign is ambiguous, so the multiplier is averaged over both
    /// signs; in 1-d this is the real part of `exp(Psi)`. The result is a
    /// Hermitian-symmetric multiplier and a real inverse transform.
    fn multiplier(&self, psi: &Psi, k1: usize, k2: Option<usize>) -> Complex64 {
        let w1 = self.omega[k1];
        let nyq1 = self.grid.is_nyquist(k1);
        match k2 {
            None => {
                let m = psi.eval(w1, 0.0).exp();
                if nyq1 {
                    Complex64::new(m.re, 0.0)
                } else {
                    m
                }
            }
            Some(k2) => {
                let w2 = self.omega[k2];
                let nyq2 = self.grid.is_nyquist(k2);
                match (nyq1, nyq2) {
                    (false, false) => psi.eval(w1, w2).exp(),
                    (true, false) => 0.5 * (psi.eval(w1, w2).exp() + psi.eval(-w1, w2).exp()),
                    (false, true) => 0.5 * (psi.eval(w1, w2).exp() + psi.eval(w1, -w2).exp()),
                    (true, true) => {
                        0.25 * (psi.eval(w1, w2).exp()
                            + psi.eval(-w1, w2).exp()
                            + psi.eval(w1, -w2).exp()
                            + psi.eval(-w1, -w2).exp())
                    }
                }
            }
        }
    }

    /// Undiscounted conditional expectation of `terminal` over one interval,
    /// written into `out`.
    pub fn solve_into(&self, terminal: &[f64], psi: &Psi, ws: &mut FstWorkspace, out: &mut [f64]) -> Result<()> {
        let g = &self.grid;
        if terminal.len() != g.len() || out.len() != g.len() || psi.grid != *g {
            return Err(Error::Configuration("terminal surface, Ψ and solver grids differ".into()));
        }
        if !psi.is_finite() {
            return Err(Error::Numeric("non-finite Ψ coefficients".into()));
        }
        if ws.data.len() != g.len() {
            *ws = self.workspace();
        }
        let mut max_abs = 0.0f64;
        for (d, &t) in ws.data.iter_mut().zip(terminal) {
            if !t.is_finite() {
                return Err(Error::Numeric("non-finite terminal value".into()));
            }
            max_abs = max_abs.max(t.abs());
            *d = Complex64::new(t, 0.0);
        }
        let n = g.n;
        match g.dim {
            1 => {
                self.forward.process_with_scratch(&mut ws.data, &mut ws.scratch);
                for k in 0..n {
                    ws.data[k] *= self.multiplier(psi, k, None);
                }
                self.inverse.process_with_scratch(&mut ws.data, &mut ws.scratch);
            }
            _ => {
                self.transform_2d(ws, true);
                // separable part of exp(Psi) off the Nyquist lines
                let e1: Vec<Complex64> = (0..n).map(|k| psi.eval(self.omega[k], 0.0).exp()).collect();
                let e2: Vec<Complex64> = (0..n).map(|k| psi.eval(0.0, self.omega[k]).exp()).collect();
                for k1 in 0..n {
                    for k2 in 0..n {
                        let m = if g.is_nyquist(k1) || g.is_nyquist(k2) {
                            self.multiplier(psi, k1, Some(k2))
                        } else {
                            e1[k1] * e2[k2] * (-self.omega[k1] * self.omega[k2] * psi.cov).exp()
                        };
                        ws.data[k1 * n + k2] *= m;
                    }
                }
                self.transform_2d(ws, false);
            }
        }
        let scale = 1.0 / g.len() as f64;
        let mut max_im = 0.0f64;
        let mut max_re = 0.0f64;
        for (o, d) in out.iter_mut().zip(&ws.data) {
            *o = d.re * scale;
            max_re = max_re.max(o.abs());
            max_im = max_im.max((d.im * scale).abs());
        }
        let floor = max_re.max(max_abs).max(f64::MIN_POSITIVE);
        if max_im > 1e-8 * floor {
            return Err(Error::Numeric(format!(
                "inverse transform left an imaginary residue {max_im:e} against magnitude {floor:e}"
            )));
        }
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite conditional expectation".into()));
        }
        Ok(())
    }

    fn transform_2d(&self, ws: &mut FstWorkspace, forward: bool) {
        let n = self.grid.n;
        let plan = if forward { &self.forward } else { &self.inverse };
        for row in ws.data.chunks_exact_mut(n) {
            plan.process_with_scratch(row, &mut ws.scratch);
        }
        for c in 0..n {
            for r in 0..n {
                ws.line[r] = ws.data[r * n + c];
            }
            plan.process_with_scratch(&mut ws.line, &mut ws.scratch);
            for r in 0..n {
                ws.data[r * n + c] = ws.line[r];
            }
        }
    }

    pub fn solve(&self, terminal: &ValueSurface, psi: &Psi) -> Result<ValueSurface> {
        let mut ws = self.workspace();
        let mut out = vec![0.0; self.grid.len()];
        self.solve_into(&terminal.values, psi, &mut ws, &mut out)?;
        Ok(ValueSurface { grid: self.grid, values: out })
    }
}

/// One interval of spectral time-stepping: `IFFT[FFT[terminal] exp(Psi)]`.
/// The result is undiscounted.
pub fn fst_step(terminal: &ValueSurface, psi: &Psi) -> Result<ValueSurface> {
    if terminal.grid != psi.grid {
        return Err(Error::Configuration("terminal surface and Ψ live on different grids".into()));
    }
    FstSolver::new(terminal.grid).solve(terminal, psi)
}

/// Discounted conditional expectation of `payoff` at `t + dt` given
/// `S_t = S0 e^x` on the grid and the variance path summarized by `theta`.
pub fn conditional_expectation_over_interval(
    payoff: &ValueSurface,
    theta: &[f64],
    model: &ModelSpec,
    dt: f64,
) -> Result<ValueSurface> {
    let psi = build_psi(theta, model, &payoff.grid, dt)?;
    let mut out = fst_step(payoff, &psi)?;
    let df = (-model.rate() * dt).exp();
    out.values.iter_mut().for_each(|v| *v *= df);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{theta2_of_constant_path, theta_of_constant_path, HestonSpec, MultiHestonSpec};

    fn heston(rho: f64) -> ModelSpec {
        ModelSpec::Heston(HestonSpec { rho, ..HestonSpec::benchmark() })
    }

    #[test]
    fn psi_matches_direct_substitution() {
        let g = GridSpec::standard(1, 64).unwrap();
        let dt = 1.0 / 12.0;
        let th = theta_of_constant_path(0.16, dt).unwrap();
        let psi = build_psi(&th, &heston(0.1), &g, dt).unwrap();
        for (k, p) in psi.values().iter().enumerate() {
            let w = g.omega(k);
            let re = -0.5 * w * w * 0.99 * 0.16 * dt;
            let im = w * (0.02 - 0.08) * dt;
            assert!((p.re - re).abs() < 1e-14 && (p.im - im).abs() < 1e-14);
        }
        assert_eq!(psi.values()[0], Complex64::new(0.0, 0.0));
    }

    #[test]
    fn psi_cross_term_two_factor() {
        let model = ModelSpec::MultiHeston(MultiHestonSpec::benchmark());
        let g = GridSpec::standard(2, 8).unwrap();
        let (c, dt) = (0.3, 0.25);
        let th = theta2_of_constant_path(c, c, dt).unwrap();
        let psi = build_psi(&th, &model, &g, dt).unwrap();
        let a = MultiHestonSpec::benchmark().chol;
        assert!((psi.cov - a[0][1] * a[1][1] * c * dt).abs() < 1e-15);
        assert_eq!(psi.eval(0.0, 0.0), Complex64::new(0.0, 0.0));
        // only the cross term survives in Psi(w1, w2) - Psi(w1, 0) - Psi(0, w2)
        let (w1, w2) = (1.3, -0.7);
        let cross = psi.eval(w1, w2) - psi.eval(w1, 0.0) - psi.eval(0.0, w2);
        assert!((cross.re + a[0][1] * a[1][1] * w1 * w2 * c * dt).abs() < 1e-14);
        assert!(cross.im.abs() < 1e-14);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let g = GridSpec::standard(2, 8).unwrap();
        let th = theta_of_constant_path(0.16, 0.1).unwrap();
        assert!(matches!(build_psi(&th, &heston(0.1), &g, 0.1), Err(Error::Configuration(_))));
    }

    #[test]
    fn constants_are_preserved() {
        let g = GridSpec::standard(1, 128).unwrap();
        let th = [0.2, 0.3, 0.02, 0.18];
        let psi = build_psi(&th, &heston(-0.5), &g, 0.1).unwrap();
        let out = fst_step(&ValueSurface::constant(g, 1.0), &psi).unwrap();
        assert!(out.values.iter().all(|v| (v - 1.0).abs() < 1e-12));

        let g2 = GridSpec::standard(2, 16).unwrap();
        let model = ModelSpec::MultiHeston(MultiHestonSpec::benchmark());
        let th2 = [0.4, 0.3, 0.1, -0.05, 0.04, 0.03, 0.034, 0.41, 0.28];
        let psi2 = build_psi(&th2, &model, &g2, 0.1).unwrap();
        let out2 = fst_step(&ValueSurface::constant(g2, 2.5), &psi2).unwrap();
        assert!(out2.values.iter().all(|v| (v - 2.5).abs() < 1e-12));
    }

    #[test]
    fn zero_rate_constant_payoff() {
        let model = ModelSpec::Heston(HestonSpec { r: 0.0, ..HestonSpec::benchmark() });
        let g = GridSpec::standard(1, 64).unwrap();
        let out = conditional_expectation_over_interval(
            &ValueSurface::constant(g, 3.0),
            &[0.15, 0.1, 0.0125, 0.16],
            &model,
            1.0 / 12.0,
        )
        .unwrap();
        assert!(out.values.iter().all(|v| (v - 3.0).abs() < 1e-12));
    }

    #[test]
    fn non_finite_input_is_a_numeric_error() {
        let g = GridSpec::standard(1, 16).unwrap();
        let psi = build_psi(&[0.1, 0.0, 0.01, 0.1], &heston(0.0), &g, 0.1).unwrap();
        let mut t = ValueSurface::constant(g, 1.0);
        t.values[3] = f64::NAN;
        assert!(matches!(fst_step(&t, &psi), Err(Error::Numeric(_))));
    }
}
