//! Semi-analytic European prices under Heston from the characteristic
//! function, used as an independent oracle.
//!
//! The call comes from the single-integral Lewis representation and the put
//! from the two Gil-Pelaez probabilities, so put-call parity between the two
//! is a genuine consistency check rather than an identity.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::model::HestonSpec;

const TAIL_TOL: f64 = 1e-12;
const QUAD_TOL: f64 = 1e-13;
const MAX_UPPER: f64 = 1e7;

/// Characteristic function of `ln(S_T / S0) - rT`, in the rotation-free
/// ("little trap") form that stays on the principal branch.
pub fn heston_cf(h: &HestonSpec, t: f64, u: Complex64) -> Complex64 {
    let i = Complex64::i();
    let eta2 = h.eta * h.eta;
    let xi = h.kappa - h.rho * h.eta * i * u;
    let q = u * u + i * u;
    let d = (xi * xi + eta2 * q).sqrt();
    // (xi - d) / eta^2 without the cancellation that ruins small eta
    let a = -q / (xi + d);
    let g = a * eta2 / (xi + d);
    let e = (-d * t).exp();
    let dd = a * (1.0 - e) / (1.0 - g * e);
    // 2/eta^2 ln((1 - g e)/(1 - g)) = 2 a (1 - e) / ((xi + d)(1 - g)) * ln(1 + w)/w
    let w = g * (1.0 - e) / (1.0 - g);
    let log_ratio = if w.norm() < 1e-4 { 1.0 - w / 2.0 + w * w / 3.0 - w * w * w / 4.0 } else { (1.0 + w).ln() / w };
    let cc = h.kappa * h.theta * (a * t - 2.0 * a * (1.0 - e) / ((xi + d) * (1.0 - g)) * log_ratio);
    (cc + dd * h.v0).exp()
}

/// European call by the Lewis formula:
/// `C = S0 - sqrt(S0 K) e^{-rT/2} / pi * int_0^inf Re[e^{iuk} phi(u - i/2)] / (u^2 + 1/4) du`
/// with `k = ln(S0/K) + rT`.
pub fn heston_call(h: &HestonSpec, strike: f64, maturity: f64) -> Result<f64> {
    check(h, strike, maturity)?;
    call_from_cf(|u| heston_cf(h, maturity, u), h.s0, strike, h.r, maturity)
}

/// European put from `P1`, `P2`: `K e^{-rT} (1 - P2) - S0 (1 - P1)`.
pub fn heston_european_put(h: &HestonSpec, strike: f64, maturity: f64) -> Result<f64> {
    check(h, strike, maturity)?;
    put_from_cf(|u| heston_cf(h, maturity, u), h.s0, strike, h.r, maturity)
}

/// Alias matching the oracle's role in the test-suite.
pub fn heston_european_cf(h: &HestonSpec, strike: f64, maturity: f64) -> Result<f64> {
    heston_european_put(h, strike, maturity)
}

fn check(h: &HestonSpec, strike: f64, maturity: f64) -> Result<()> {
    h.validate()?;
    if !(strike > 0.0) || !(maturity > 0.0) {
        return Err(Error::Parameter { name: "strike/maturity", value: strike.min(maturity), reason: "must be positive" });
    }
    Ok(())
}

/// Lewis call for any characteristic function `phi` of `ln(S_T/S0) - rT`.
pub fn call_from_cf(phi: impl Fn(Complex64) -> Complex64, s0: f64, strike: f64, r: f64, t: f64) -> Result<f64> {
    let k = (s0 / strike).ln() + r * t;
    let f = |u: f64| {
        let z = (Complex64::i() * u * k).exp() * phi(Complex64::new(u, -0.5));
        z.re / (u * u + 0.25)
    };
    let integral = integrate_to_infinity(f)?;
    Ok(s0 - (s0 * strike).sqrt() * (-0.5 * r * t).exp() / std::f64::consts::PI * integral)
}

/// Gil-Pelaez put for any characteristic function of `ln(S_T/S0) - rT`.
pub fn put_from_cf(phi: impl Fn(Complex64) -> Complex64, s0: f64, strike: f64, r: f64, t: f64) -> Result<f64> {
    let i = Complex64::i();
    // log-moneyness of the strike against the forward
    let m = (strike / s0).ln() - r * t;
    let p2 = 0.5 + integrate_to_infinity(|u| ((-i * u * m).exp() * phi(Complex64::new(u, 0.0)) / (i * u)).re)?
        / std::f64::consts::PI;
    // share measure: phi(u - i) / phi(-i), and phi(-i) = 1 here
    let p1 = 0.5 + integrate_to_infinity(|u| ((-i * u * m).exp() * phi(Complex64::new(u, -1.0)) / (i * u)).re)?
        / std::f64::consts::PI;
    Ok(strike * (-r * t).exp() * (1.0 - p2) - s0 * (1.0 - p1))
}

/// `int_0^inf f`, integrated over doubling panels `[0, 8], [8, 16], [16, 32], ...`
/// until a panel's integral of `|f|` falls below the tail tolerance.
pub fn integrate_to_infinity(f: impl Fn(f64) -> f64) -> Result<f64> {
    let mut total = 0.0;
    let (mut a, mut b) = (0.0, 8.0);
    loop {
        let (piece, _) = adaptive_gk(&f, a, b, QUAD_TOL, 0)?;
        total += piece;
        let (mass, _) = gk15(&|x| f(x).abs(), a, b);
        if mass < TAIL_TOL && a > 0.0 {
            return Ok(total);
        }
        if b >= MAX_UPPER {
            return Err(Error::Numeric(format!("characteristic-function integral not converged by u = {b:e}")));
        }
        a = b;
        b *= 2.0;
    }
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// 15-point Kronrod estimate and its difference from the embedded 7-point
/// Gauss rule.
fn gk15(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = WGK[7] * fc;
    let mut g = WG[3] * fc;
    for j in 0..7 {
        let x = h * XGK[j];
        let s = f(c - x) + f(c + x);
        k += WGK[j] * s;
        if j % 2 == 1 {
            g += WG[j / 2] * s;
        }
    }
    (k * h, ((k - g) * h).abs())
}

fn adaptive_gk(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: usize) -> Result<(f64, f64)> {
    let (k, err) = gk15(f, a, b);
    if !k.is_finite() {
        return Err(Error::Numeric(format!("non-finite integrand on [{a}, {b}]")));
    }
    // halving the tolerance per level eventually asks for less than the
    // rounding noise of the panel itself; stop there instead of recursing
    let noise = 64.0 * f64::EPSILON * k.abs();
    if err <= tol.max(noise) || depth >= 40 {
        if err > 1e3 * tol.max(1e-12) {
            return Err(Error::Numeric(format!("quadrature did not converge on [{a}, {b}]: error {err:e}")));
        }
        return Ok((k, err));
    }
    let m = 0.5 * (a + b);
    let (l, el) = adaptive_gk(f, a, m, 0.5 * tol, depth + 1)?;
    let (r, er) = adaptive_gk(f, m, b, 0.5 * tol, depth + 1)?;
    Ok((l + r, el + er))
}

/// Black-Scholes prices, used to validate the transforms.
pub fn black_scholes(s0: f64, strike: f64, r: f64, sigma: f64, t: f64) -> (f64, f64) {
    let sd = sigma * t.sqrt();
    let d1 = ((s0 / strike).ln() + (r + 0.5 * sigma * sigma) * t) / sd;
    let d2 = d1 - sd;
    let df = (-r * t).exp();
    let call = s0 * norm_cdf(d1) - strike * df * norm_cdf(d2);
    let put = strike * df * norm_cdf(-d2) - s0 * norm_cdf(-d1);
    (call, put)
}

/// Standard normal CDF via the complementary error function.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-x / std::f64::consts::SQRT_2)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normal_cdf_values() {
        assert!((norm_cdf(0.0) - 0.5).abs() < 1e-15);
        // statrs' erfc is accurate to roughly 1e-11
        assert!((norm_cdf(1.0) - 0.841_344_746_068_542_9).abs() < 1e-10);
        assert!((norm_cdf(-2.5) - 0.006_209_665_325_776_132).abs() < 1e-10);
        assert!((norm_cdf(4.0) - 0.999_968_328_758_166_9).abs() < 1e-9);
    }

    #[test]
    fn transforms_reproduce_black_scholes() {
        let (s0, k, r, sig, t) = (10.0, 11.0, 0.03, 0.3, 0.75);
        let bs_cf = |u: Complex64| {
            let i = Complex64::i();
            (-0.5 * sig * sig * t * (u * u + i * u)).exp()
        };
        let (call, put) = black_scholes(s0, k, r, sig, t);
        assert!((call_from_cf(bs_cf, s0, k, r, t).unwrap() - call).abs() < 1e-9);
        assert!((put_from_cf(bs_cf, s0, k, r, t).unwrap() - put).abs() < 1e-9);
    }

    #[test]
    fn forward_is_a_martingale() {
        let h = HestonSpec::benchmark();
        let z = heston_cf(&h, 1.0, Complex64::new(0.0, -1.0));
        assert!((z - 1.0).norm() < 1e-12);
        assert!((heston_cf(&h, 1.0, Complex64::new(0.0, 0.0)) - 1.0).norm() < 1e-15);
    }

    #[test]
    fn put_call_parity() {
        let h = HestonSpec::benchmark();
        for k in [8.0, 10.0, 12.5] {
            let c = heston_call(&h, k, 1.0).unwrap();
            let p = heston_european_put(&h, k, 1.0).unwrap();
            assert!((c - p - (h.s0 - k * (-h.r).exp())).abs() < 1e-8, "strike {k}");
        }
    }

    #[test]
    fn deterministic_limit() {
        let h = HestonSpec { theta: 1e-4, v0: 1e-4, eta: 1e-3, ..HestonSpec::benchmark() };
        let p = heston_european_put(&h, 12.0, 1.0).unwrap();
        let intrinsic = (-h.r).exp() * (12.0 - h.s0 * h.r.exp());
        assert!((p - intrinsic).abs() < 1e-6, "{p} vs {intrinsic}");
    }

    #[test]
    fn vanishing_vol_of_vol_is_black_scholes_on_mean_variance() {
        for eta in [1e-3, 1e-6] {
            let h = HestonSpec { eta, ..HestonSpec::benchmark() };
            let iv = h.theta + (h.v0 - h.theta) * (1.0 - (-h.kappa).exp()) / h.kappa;
            let bs = black_scholes(h.s0, 10.0, h.r, iv.sqrt(), 1.0).1;
            let p = heston_european_put(&h, 10.0, 1.0).unwrap();
            // the correction is O(eta^2)
            assert!((p - bs).abs() < 1e-8 + eta * eta * 10.0, "eta {eta}: {p} vs {bs}");
        }
    }
}
