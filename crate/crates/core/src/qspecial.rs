//! q-series, theta functions, Barnes G, log-gamma and Euler–Maclaurin summation.
//!
//! All infinite products are evaluated in log space.

use crate::error::{Error, Result};
use crate::quad::{integrate, Tolerance};
use crate::scalar::Real;
use num_complex::Complex;
use serde::Serialize;

/// `(z; q)_k = Π_{i<k} (1 − z q^i)`.
pub fn qpoch_finite<T: Real>(z: T, q: T, k: usize) -> T {
    let mut acc = T::one();
    let mut qi = T::one();
    for _ in 0..k {
        acc *= T::one() - z * qi;
        qi *= q;
    }
    acc
}

/// `log (z; q)_∞` for real `z` and `0 < q < 1`.
pub fn qpoch_infinite_log<T: Real>(z: T, q: T) -> Result<T> {
    if !(q > T::zero() && q < T::one()) {
        return Err(Error::Domain(format!("q = {q} must lie in (0, 1)")));
    }
    let cut = T::floor_tol(1e-18);
    let mut acc = T::zero();
    let mut term = z;
    let mut i = 0usize;
    while term.abs() >= cut {
        let f = T::one() - term;
        if !(f > T::zero()) {
            return Err(Error::Pole(f.to_f64_lossy()));
        }
        acc += (-term).ln_1p();
        term *= q;
        i += 1;
        if i > 1_000_000 {
            return Err(Error::Domain("q-product failed to converge".into()));
        }
    }
    // Σ_{i≥I} log(1 − z q^i) ≈ −z q^I/(1 − q).
    Ok(acc - term / (T::one() - q))
}

/// Residual of the finite q-binomial theorem at `(z, q, n)`.
pub fn q_binomial_check<T: Real>(z: T, q: T, n: usize) -> T {
    let lhs = qpoch_finite(z, q, n);
    let qq = |k| qpoch_finite(q, q, k);
    let mut rhs = T::zero();
    let mut pw = T::one();
    for k in 0..=n {
        let binom = qq(n) / (qq(k) * qq(n - k));
        let tri = q.powi((k * k.saturating_sub(1) / 2) as i32);
        rhs += binom * tri * pw;
        pw *= -z;
    }
    (lhs - rhs).abs()
}

/// Jacobi theta function `Σ_ℓ e^{2πiℓz} e^{πiℓ²τ}`.
pub fn jacobi_theta<T: Real>(z: Complex<T>, tau: Complex<T>) -> Result<Complex<T>> {
    if !(tau.im > T::zero()) {
        return Err(Error::Domain("theta needs Im(tau) > 0".into()));
    }
    let pi = T::PI();
    let i = Complex::new(T::zero(), T::one());
    let cut = T::floor_tol(1e-18).ln();
    let mut acc = Complex::new(T::one(), T::zero());
    let mut l = 1usize;
    loop {
        let lf = T::from_usize_lossy(l);
        let gauss = -pi * lf * lf * tau.im;
        let growth = T::lit(2.0) * pi * lf * z.im.abs();
        if gauss + growth < cut && l > 1 {
            break;
        }
        for sign in [T::one(), -T::one()] {
            let ll = sign * lf;
            acc += (i * (z * T::lit(2.0) * pi * ll + tau * pi * ll * ll)).exp();
        }
        l += 1;
        if l > 100_000 {
            return Err(Error::Domain("theta series failed to converge".into()));
        }
    }
    Ok(acc)
}

/// `Θ(x; p, q)` from its q-product form.
pub fn big_theta<T: Real>(x: T, p: T, q: T) -> Result<T> {
    if !(p > T::zero() && p < T::one() && q > T::zero()) {
        return Err(Error::Domain("big_theta needs 0 < p < 1 and q > 0".into()));
    }
    let two = T::lit(2.0);
    let lp = p.ln();
    let lq = q.ln();
    let p2 = p * p;
    Ok(x * (x - T::one()) * lp
        + x * lq
        + qpoch_infinite_log(-(q * (two * x * lp).exp()), p2)?
        + qpoch_infinite_log(-((two * (T::one() - x) * lp - lq).exp()), p2)?)
}

/// `Θ(x; p, q)` through the Jacobi theta function.
pub fn big_theta_via_jacobi<T: Real>(x: T, p: T, q: T) -> Result<T> {
    let half = T::lit(0.5);
    let l = -p.ln();
    let lq = q.ln();
    let pi = T::PI();
    let mut sum = T::zero();
    let mut pj = p * p;
    while pj > T::floor_tol(1e-18) {
        sum += (-pj).ln_1p();
        pj *= p * p;
    }
    let z = Complex::new(x + half - half * lq / l, T::zero());
    let tau = Complex::new(T::zero(), pi / l);
    let th = jacobi_theta(z, tau)?;
    Ok(half * (pi * q * p.powf(-half) / l).ln() + lq * lq / (T::lit(4.0) * l) - sum + th.re.ln())
}

/// `|Θ_product − Θ_theta|`.
pub fn theta_bridge_residual<T: Real>(x: T, p: T, q: T) -> Result<T> {
    Ok((big_theta(x, p, q)? - big_theta_via_jacobi(x, p, q)?).abs())
}

/// Per-gap data entering the displacement term.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GapTerm<T> {
    pub x: T,
    pub rho: T,
    pub mu: T,
}

/// Net displacement term `G_n`.
pub fn displacement_gn<T: Real>(gaps: &[GapTerm<T>]) -> Result<T> {
    let mut acc = T::zero();
    for g in gaps {
        if !(g.rho > T::zero() && g.rho < T::one() && g.mu > T::zero()) {
            return Err(Error::Domain("gap needs 0 < rho < 1 and mu > 0".into()));
        }
        let r2 = g.rho * g.rho;
        acc += g.x * g.mu.ln() - g.x * g.x * g.rho.ln()
            + qpoch_infinite_log(-(g.rho * g.mu), r2)?
            + qpoch_infinite_log(-(g.rho / g.mu), r2)?;
    }
    Ok(acc)
}

/// `G_n` assembled from `Θ(x_ν; ρ_ν, ρ_ν^{1−2x_ν} μ_ν)`.
pub fn displacement_gn_via_theta<T: Real>(gaps: &[GapTerm<T>]) -> Result<T> {
    let mut acc = T::zero();
    for g in gaps {
        let q = g.rho.powf(T::one() - T::lit(2.0) * g.x) * g.mu;
        acc += big_theta(g.x, g.rho, q)?;
    }
    Ok(acc)
}

pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;
/// `ζ'(−1) = 1/12 − log A` with Glaisher's constant `A`.
pub const ZETA_PRIME_M1: f64 = -0.165_421_143_700_450_93;
pub const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MathConstants<T> {
    pub zeta_prime_m1: T,
    pub log_2pi: T,
    pub euler_gamma: T,
}

pub fn math_constants<T: Real>() -> MathConstants<T> {
    MathConstants { zeta_prime_m1: T::lit(ZETA_PRIME_M1), log_2pi: T::lit(LN_2PI), euler_gamma: T::lit(EULER_GAMMA) }
}

/// `log Γ(x)` for `x > 0` by upward recurrence and the Stirling series.
pub fn ln_gamma<T: Real>(x: T) -> T {
    if !(x > T::zero()) {
        return T::nan();
    }
    let mut shift = T::zero();
    let mut y = x;
    let mut prod = T::one();
    while y < T::lit(15.0) {
        prod *= y;
        y += T::one();
        if prod > T::lit(1e250) {
            shift += prod.ln();
            prod = T::one();
        }
    }
    shift += prod.ln();
    let inv = T::one() / y;
    let inv2 = inv * inv;
    let c = [1.0 / 12.0, -1.0 / 360.0, 1.0 / 1260.0, -1.0 / 1680.0, 1.0 / 1188.0, -691.0 / 360_360.0, 1.0 / 156.0];
    let mut series = T::zero();
    for &ck in c.iter().rev() {
        series = series * inv2 + T::lit(ck);
    }
    (y - T::lit(0.5)) * y.ln() - y + T::lit(0.5) * T::lit(LN_2PI) + series * inv - shift
}

pub fn ln_factorial<T: Real>(n: usize) -> T {
    if n < 2 {
        return T::zero();
    }
    if n <= 20 {
        let mut f = 1.0f64;
        for k in 2..=n {
            f *= k as f64;
        }
        return T::lit(f.ln());
    }
    ln_gamma(T::from_usize_lossy(n + 1))
}

/// Hurwitz zeta `ζ(s, a)` for `s > 1` and large `a`, by Euler–Maclaurin.
fn hurwitz_large_a<T: Real>(s: T, a: T) -> T {
    let b = [1.0 / 6.0, -1.0 / 30.0, 1.0 / 42.0, -1.0 / 30.0, 5.0 / 66.0];
    let mut acc = a.powf(T::one() - s) / (s - T::one()) + T::lit(0.5) * a.powf(-s);
    let mut rising = s;
    let mut fact = T::lit(2.0);
    for (k, &bk) in b.iter().enumerate() {
        let two_k = 2 * k + 2;
        acc += T::lit(bk) / fact * rising * a.powf(-s - T::from_usize_lossy(two_k - 1));
        rising *= (s + T::from_usize_lossy(two_k - 1)) * (s + T::from_usize_lossy(two_k));
        fact *= T::from_usize_lossy(two_k + 1) * T::from_usize_lossy(two_k + 2);
    }
    acc
}

/// `log G(w)` for the Barnes G-function, `w > 0`.
pub fn log_barnes_g<T: Real>(w: T) -> Result<T> {
    if !(w > T::zero()) {
        return Err(Error::Domain(format!("Barnes G argument {w} must be positive")));
    }
    let z = w - T::one();
    let half = T::lit(0.5);
    let mut acc = half * z * T::lit(LN_2PI) - half * z * (z + T::one()) - half * T::lit(EULER_GAMMA) * z * z;
    let kmax = 200usize.max((z.abs() * T::lit(20.0)).to_usize().unwrap_or(0));
    let mut sum = T::zero();
    for k in 1..=kmax {
        let kf = T::from_usize_lossy(k);
        sum += kf * (z / kf).ln_1p() - z + z * z / (T::lit(2.0) * kf);
    }
    // Tail Σ_{k>K} Σ_{m≥3} (−1)^{m+1} z^m/(m k^{m−1}).
    let a = T::from_usize_lossy(kmax + 1);
    let mut zm = z * z * z;
    let mut tail = T::zero();
    for m in 3..60 {
        let mf = T::from_usize_lossy(m);
        let sign = if m % 2 == 1 { T::one() } else { -T::one() };
        let term = sign * zm / mf * hurwitz_large_a(mf - T::one(), a);
        tail += term;
        if term.abs() < T::epsilon() * T::lit(1e-3) {
            break;
        }
        zm *= z;
    }
    acc += sum + tail;
    Ok(acc)
}

/// Result of the Euler–Maclaurin formula together with its remainder bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EmResult<T> {
    pub value: T,
    pub bound: T,
}

/// `Σ_{j=m}^{n−1} f(j)` via Euler–Maclaurin of order `d ≤ 4`.
///
/// `f(k, x)` returns the `k`-th derivative; orders up to `2d` are used.
pub fn euler_maclaurin_sum<T: Real, F: Fn(usize, T) -> T>(f: F, m: usize, n: usize, d: usize) -> Result<EmResult<T>> {
    if !(1..=4).contains(&d) {
        return Err(Error::Domain("Euler-Maclaurin order must be in 1..=4".into()));
    }
    let (a, b) = (T::from_usize_lossy(m), T::from_usize_lossy(n));
    let tol = Tolerance::new(1e-14, 1e-14);
    let integral = integrate(|x| f(0, x), a, b, tol)?.value;
    let bern = [1.0 / 6.0, -1.0 / 30.0, 1.0 / 42.0, -1.0 / 30.0];
    let mut value = integral - (f(0, b) - f(0, a)) * T::lit(0.5);
    let mut fact = 1.0f64;
    for k in 1..d {
        fact *= ((2 * k - 1) * (2 * k)) as f64;
        value += T::lit(bern[k - 1] / fact) * (f(2 * k - 1, b) - f(2 * k - 1, a));
    }
    let pi2 = std::f64::consts::PI.powi(2);
    let zeta = [pi2 / 6.0, pi2 * pi2 / 90.0, pi2.powi(3) / 945.0, pi2.powi(4) / 9450.0][d - 1];
    let coef = 4.0 * zeta / (2.0 * std::f64::consts::PI).powi(2 * d as i32);
    let rem = integrate(|x| f(2 * d, x).abs(), a, b, Tolerance::new(1e-14, 1e-8))?.value;
    Ok(EmResult { value, bound: T::lit(coef) * rem })
}
