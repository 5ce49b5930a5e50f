//! Radial potentials, test functions and perturbations.
//!
//! A radial potential is represented by its profile `q(r) = Q(|z|)`. For such
//! profiles the Laplacian reduces to `ΔQ = (q'' + q'/r)/4 = T'(r)/(2r)` with the
//! mass function `T(r) = r q'(r)/2`.

use crate::error::{Error, Result};
use crate::scalar::Real;
use serde::{Deserialize, Serialize};
use std::fmt::Debug;
use std::sync::Arc;

/// A radial profile with optional analytic derivatives.
pub trait Profile<T: Real>: Send + Sync + Debug {
    fn q(&self, r: T) -> T;

    /// Analytic `k`-th derivative for `k` in `1..=4`, if known.
    fn derivative(&self, _k: usize, _r: T) -> Option<T> {
        None
    }

    /// `(ΔQ, ∂ΔQ, ∂²ΔQ)` in a form that is stable near the origin, if known.
    fn laplacian(&self, _r: T) -> Option<[T; 3]> {
        None
    }

    fn finite_at_origin(&self) -> bool {
        true
    }
}

/// Concrete potential families used throughout the crate and the CLI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PotentialFamily {
    /// `q = c r²`.
    Ginibre { scale: f64 },
    /// `q = Σ c_k (r² − shift)^k`.
    EvenPolynomial { coeffs: Vec<f64>, shift: f64 },
    /// `q = base − depth·exp(−(r − center)²/(2 width²))`.
    BasePlusBump { base: Box<PotentialFamily>, center: f64, depth: f64, width: f64 },
}

impl PotentialFamily {
    pub fn ginibre() -> Self {
        Self::Ginibre { scale: 1.0 }
    }

    pub fn even_polynomial(coeffs: Vec<f64>) -> Self {
        Self::EvenPolynomial { coeffs, shift: 0.0 }
    }

    /// Two-component family with mass function `T(u) = A u (u − β)^{2m} + ε u`, `u = r²`.
    ///
    /// Stored in the basis centered at `β`, where it is sparse.
    pub fn gap_polynomial(amplitude: f64, beta: f64, m: usize, slope: f64) -> Self {
        let deg = 2 * m + 1;
        let mut coeffs = vec![0.0; deg + 1];
        coeffs[0] = amplitude * beta.powi(deg as i32) / deg as f64 + slope * beta;
        coeffs[1] = slope;
        coeffs[deg] = amplitude / deg as f64;
        Self::EvenPolynomial { coeffs, shift: beta }
    }

    /// Unit Ginibre with a Gaussian well placing a shallow point at `t > 1`.
    ///
    /// Depth and center solve `g₁(t) = 1` and `g₁'(t) = 0` by Newton's method.
    pub fn ginibre_with_outpost(t: f64, width: f64) -> Result<Self> {
        if !(t > 1.0) || !(width > 0.0) || 6.0 * width > t - 1.0 {
            return Err(Error::Domain(format!("outpost needs t > 1 and 6 width <= t - 1 (t = {t}, width = {width})")));
        }
        let w2 = width * width;
        let (mut d, mut c) = (t * t - 2.0 * t.ln() - 1.0, t);
        for _ in 0..100 {
            let e = (-(t - c).powi(2) / (2.0 * w2)).exp();
            let z = (t - c) / w2;
            let f1 = t * t - d * e - 2.0 * t.ln() - 1.0;
            let f2 = 2.0 * t + d * e * z - 2.0 / t;
            let j11 = -e;
            let j12 = -d * e * z;
            let j21 = e * z;
            let j22 = d * e * (z * z - 1.0 / w2);
            let det = j11 * j22 - j12 * j21;
            let (dd, dc) = ((j22 * f1 - j12 * f2) / det, (-j21 * f1 + j11 * f2) / det);
            d -= dd;
            c -= dc;
            if dd.abs() + dc.abs() < 1e-15 {
                break;
            }
        }
        if !(d > 0.0) {
            return Err(Error::Domain("outpost well did not converge".into()));
        }
        Ok(Self::BasePlusBump { base: Box::new(Self::ginibre()), center: c, depth: d, width })
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Ginibre { scale } if *scale <= 0.0 => {
                Err(Error::Domain(format!("ginibre scale {scale} must be positive")))
            }
            Self::EvenPolynomial { coeffs, .. } => match coeffs.iter().rposition(|&c| c != 0.0) {
                Some(k) if k >= 1 && coeffs[k] > 0.0 => Ok(()),
                _ => Err(Error::Domain("even polynomial needs a positive leading coefficient".into())),
            },
            Self::BasePlusBump { base, width, .. } => {
                if *width <= 0.0 {
                    return Err(Error::Domain("bump width must be positive".into()));
                }
                base.validate()
            }
            _ => Ok(()),
        }
    }

    pub fn build<T: Real>(&self) -> Result<RadialPotential<T>> {
        self.validate()?;
        RadialPotential::new(Arc::new(FamilyProfile::<T>::from_family(self)))
    }
}

#[derive(Debug, Clone)]
enum FamilyProfile<T> {
    Poly { coeffs: Vec<T>, shift: T },
    Bump { base: Box<FamilyProfile<T>>, center: T, depth: T, width: T },
}

impl<T: Real> FamilyProfile<T> {
    fn from_family(f: &PotentialFamily) -> Self {
        match f {
            PotentialFamily::Ginibre { scale } => {
                Self::Poly { coeffs: vec![T::zero(), T::lit(*scale)], shift: T::zero() }
            }
            PotentialFamily::EvenPolynomial { coeffs, shift } => {
                Self::Poly { coeffs: coeffs.iter().map(|&c| T::lit(c)).collect(), shift: T::lit(*shift) }
            }
            PotentialFamily::BasePlusBump { base, center, depth, width } => Self::Bump {
                base: Box::new(Self::from_family(base)),
                center: T::lit(*center),
                depth: T::lit(*depth),
                width: T::lit(*width),
            },
        }
    }

    /// `P^{(m)}(u)` for `P(u) = Σ c_k (u − shift)^k`.
    fn poly_deriv(coeffs: &[T], shift: T, m: usize, u: T) -> T {
        let v = u - shift;
        let mut acc = T::zero();
        for k in (m..coeffs.len()).rev() {
            let mut fall = T::one();
            for i in 0..m {
                fall *= T::from_usize_lossy(k - i);
            }
            acc = acc * v + coeffs[k] * fall;
        }
        acc
    }

    fn bump_terms(center: T, depth: T, width: T, r: T) -> [T; 5] {
        let z = (r - center) / width;
        let e = (-(z * z) * T::lit(0.5)).exp();
        let he =
            [T::one(), z, z * z - T::one(), z * z * z - T::lit(3.0) * z, z.powi(4) - T::lit(6.0) * z * z + T::lit(3.0)];
        let mut out = [T::zero(); 5];
        let mut wk = T::one();
        for k in 0..5 {
            let sign = if k % 2 == 0 { T::one() } else { -T::one() };
            out[k] = -depth * sign * he[k] * e / wk;
            wk *= width;
        }
        out
    }
}

impl<T: Real> Profile<T> for FamilyProfile<T> {
    fn q(&self, r: T) -> T {
        match self {
            Self::Poly { coeffs, shift } => Self::poly_deriv(coeffs, *shift, 0, r * r),
            Self::Bump { base, center, depth, width } => base.q(r) + Self::bump_terms(*center, *depth, *width, r)[0],
        }
    }

    fn derivative(&self, k: usize, r: T) -> Option<T> {
        match self {
            Self::Poly { coeffs, shift } => {
                let u = r * r;
                let p = |m| Self::poly_deriv(coeffs, *shift, m, u);
                let two = T::lit(2.0);
                Some(match k {
                    1 => two * r * p(1),
                    2 => two * p(1) + T::lit(4.0) * u * p(2),
                    3 => T::lit(12.0) * r * p(2) + T::lit(8.0) * r * u * p(3),
                    4 => T::lit(12.0) * p(2) + T::lit(48.0) * u * p(3) + T::lit(16.0) * u * u * p(4),
                    _ => return None,
                })
            }
            Self::Bump { base, center, depth, width } => {
                if !(1..=4).contains(&k) {
                    return None;
                }
                Some(base.derivative(k, r)? + Self::bump_terms(*center, *depth, *width, r)[k])
            }
        }
    }

    fn laplacian(&self, r: T) -> Option<[T; 3]> {
        match self {
            Self::Poly { coeffs, shift } => {
                let u = r * r;
                let p = |m| Self::poly_deriv(coeffs, *shift, m, u);
                let (p1, p2, p3, p4) = (p(1), p(2), p(3), p(4));
                let l = p1 + u * p2;
                let l1 = T::lit(2.0) * p2 + u * p3;
                let l2 = T::lit(3.0) * p3 + u * p4;
                Some([l, T::lit(2.0) * r * l1, T::lit(2.0) * l1 + T::lit(4.0) * u * l2])
            }
            Self::Bump { base, center, depth, width } => {
                let b = base.laplacian(r)?;
                // The radial form divides by r; at the origin use a nearby point.
                let rb = r.max(T::lit(1e-8));
                let w = Self::bump_terms(*center, *depth, *width, rb);
                let w = radial_laplacian([w[1], w[2], w[3], w[4]], rb);
                Some([b[0] + w[0], b[1] + w[1], b[2] + w[2]])
            }
        }
    }
}

/// `(ΔQ, ∂ΔQ, ∂²ΔQ)` from `(q', q'', q''', q'''')`.
fn radial_laplacian<T: Real>(d: [T; 4], r: T) -> [T; 3] {
    let q4 = T::lit(0.25);
    let two = T::lit(2.0);
    [
        q4 * (d[1] + d[0] / r),
        q4 * (d[2] + d[1] / r - d[0] / (r * r)),
        q4 * (d[3] + d[2] / r - two * d[1] / (r * r) + two * d[0] / (r * r * r)),
    ]
}

/// Central difference with one Richardson step; `q` is extended evenly across the origin.
pub fn finite_difference<T: Real, F: Fn(T) -> T>(q: F, k: usize, r: T) -> T {
    let scale = [1e-3, 3e-3, 1e-2, 2e-2][k.clamp(1, 4) - 1];
    let h = T::lit(scale) * r.abs().max(T::one());
    let f = |x: T| q(x.abs());
    let stencil = |h: T| -> T {
        let two = T::lit(2.0);
        match k {
            1 => (f(r + h) - f(r - h)) / (two * h),
            2 => (f(r + h) - two * f(r) + f(r - h)) / (h * h),
            3 => (f(r + two * h) - two * f(r + h) + two * f(r - h) - f(r - two * h)) / (two * h * h * h),
            _ => {
                (f(r + two * h) - T::lit(4.0) * f(r + h) + T::lit(6.0) * f(r) - T::lit(4.0) * f(r - h) + f(r - two * h))
                    / (h * h * h * h)
            }
        }
    };
    let coarse = stencil(h);
    let fine = stencil(h * T::lit(0.5));
    (T::lit(4.0) * fine - coarse) / T::lit(3.0)
}

/// Radial potential together with its working interval.
#[derive(Debug, Clone)]
pub struct RadialPotential<T: Real> {
    profile: Arc<dyn Profile<T>>,
    pub r_min: T,
    pub r_max: T,
    pub growth_margin: T,
    pub finite_at_origin: bool,
}

impl<T: Real> RadialPotential<T> {
    pub fn new(profile: Arc<dyn Profile<T>>) -> Result<Self> {
        let finite_at_origin = profile.finite_at_origin();
        let mut p =
            Self { profile, r_min: T::lit(1e-8), r_max: T::infinity(), growth_margin: T::zero(), finite_at_origin };
        let margin = [10.0, 100.0, 1000.0].iter().map(|&r| p.q(T::lit(r)) / T::lit(r).ln()).fold(T::infinity(), T::min)
            - T::lit(2.0);
        if !(margin > T::zero()) {
            return Err(Error::Domain(format!("potential is not confining (growth margin {margin})")));
        }
        p.growth_margin = margin;
        let b = p.outer_mass_root()?;
        p.r_max = T::lit(2.0) * b + T::one();
        Ok(p)
    }

    pub fn with_interval(mut self, r_min: T, r_max: T) -> Self {
        self.r_min = r_min;
        self.r_max = r_max;
        self
    }

    /// Largest root of `T(r) = 1`.
    fn outer_mass_root(&self) -> Result<T> {
        let one = T::one();
        let mut hi = one;
        let mut guard = 0;
        while self.mass(hi) <= one || self.mass(hi * T::lit(2.0)) <= one {
            hi *= T::lit(2.0);
            guard += 1;
            if guard > 60 {
                return Err(Error::Domain("mass function never reaches 1".into()));
            }
        }
        let top = hi * T::lit(4.0);
        let m = 8192;
        let grid = |i: usize| top * T::from_usize_lossy(i) / T::from_usize_lossy(m);
        let mut bracket = None;
        for i in (1..m).rev() {
            let (x0, x1) = (grid(i), grid(i + 1));
            if (self.mass(x0) - one) * (self.mass(x1) - one) <= T::zero() {
                bracket = Some((x0, x1));
                break;
            }
        }
        let (mut a, mut b) = bracket.ok_or(Error::EmptyPeaks(1.0))?;
        for _ in 0..200 {
            let mid = (a + b) * T::lit(0.5);
            if mid <= a || mid >= b {
                break;
            }
            if (self.mass(a) - one) * (self.mass(mid) - one) <= T::zero() {
                b = mid;
            } else {
                a = mid;
            }
        }
        Ok((a + b) * T::lit(0.5))
    }

    fn check(&self, r: T) -> Result<()> {
        let lo_ok = if self.finite_at_origin { r >= T::zero() } else { r >= self.r_min };
        if lo_ok && r <= self.r_max && r.is_finite() {
            Ok(())
        } else {
            Err(Error::Domain(format!("r = {r} outside the working interval [{}, {}]", self.r_min, self.r_max)))
        }
    }

    /// Unchecked profile value.
    #[inline]
    pub fn q(&self, r: T) -> T {
        self.profile.q(r)
    }

    /// Unchecked `k`-th derivative of the profile.
    pub fn dq(&self, k: usize, r: T) -> T {
        if k == 0 {
            return self.q(r);
        }
        self.profile.derivative(k, r).unwrap_or_else(|| finite_difference(|x| self.profile.q(x), k, r))
    }

    /// Unchecked `(ΔQ, ∂ΔQ, ∂²ΔQ)`.
    pub fn lap(&self, r: T) -> [T; 3] {
        if let Some(l) = self.profile.laplacian(r) {
            return l;
        }
        let r = r.max(self.r_min);
        radial_laplacian([self.dq(1, r), self.dq(2, r), self.dq(3, r), self.dq(4, r)], r)
    }

    /// Unchecked mass function `T(r) = r q'(r)/2`.
    #[inline]
    pub fn mass(&self, r: T) -> T {
        r * self.dq(1, r) * T::lit(0.5)
    }

    pub fn laplace_density(&self, r: T) -> Result<T> {
        self.check(r)?;
        Ok(self.lap(r)[0])
    }

    pub fn laplace_triple(&self, r: T) -> Result<[T; 3]> {
        self.check(r)?;
        Ok(self.lap(r))
    }

    pub fn mass_function(&self, r: T) -> Result<T> {
        self.check(r)?;
        Ok(self.mass(r))
    }

    /// `g_τ(r) = q(r) − 2τ log r`, unchecked; `τ = 0` at `r = 0` gives `q(0)`.
    #[inline]
    pub fn g(&self, tau: T, r: T) -> T {
        if tau == T::zero() {
            self.q(r)
        } else {
            self.q(r) - T::lit(2.0) * tau * r.ln()
        }
    }

    pub fn g_tau(&self, tau: T, r: T) -> Result<T> {
        self.check(r)?;
        if r == T::zero() && tau != T::zero() {
            return Err(Error::Domain("g_tau at r = 0 requires tau = 0".into()));
        }
        Ok(self.g(tau, r))
    }

    /// `(g_τ', g_τ'')`.
    pub fn g_tau_derivs(&self, tau: T, r: T) -> Result<[T; 2]> {
        self.check(r)?;
        let two = T::lit(2.0);
        Ok([self.dq(1, r) - two * tau / r, self.dq(2, r) + two * tau / (r * r)])
    }

    fn positive_lap(&self, r: T) -> Result<[T; 3]> {
        let l = self.laplace_triple(r)?;
        if !(l[0] > T::lit(1e-12)) {
            return Err(Error::Singular { r: r.to_f64_lossy(), value: l[0].to_f64_lossy() });
        }
        Ok(l)
    }

    /// The curvature function `B(r)`.
    pub fn curvature_b(&self, r: T) -> Result<T> {
        let [d, d1, d2] = self.positive_lap(r)?;
        let c = T::lit;
        Ok(-c(1.0 / 32.0) * d2 / (d * d) - c(19.0 / 96.0) * d1 / (r * d * d)
            + c(5.0 / 96.0) * d1 * d1 / (d * d * d)
            + T::one() / (c(12.0) * r * r * d))
    }

    /// Laplace-method coefficients `(d₂, d₃, d₄)` at a peak.
    pub fn peak_derivatives(&self, r: T) -> Result<[T; 3]> {
        let [d, d1, d2] = self.positive_lap(r)?;
        let four = T::lit(4.0);
        Ok([four * d, four * d1 - four * d / r, four * d2 + T::lit(12.0) * d / (r * r) - four * d1 / r])
    }

    /// Largest relative deviation between analytic and finite-difference derivatives.
    pub fn consistency_residual(&self, points: usize) -> T {
        let mut worst = T::zero();
        let lo = self.r_min.max(T::lit(1e-3));
        for i in 0..points {
            let r = lo + (self.r_max - lo) * T::from_usize_lossy(i) / T::from_usize_lossy(points.max(2) - 1);
            for k in 1..=2 {
                let Some(a) = self.profile.derivative(k, r) else {
                    continue;
                };
                let fd = finite_difference(|x| self.profile.q(x), k, r);
                let scale = a.abs().max(self.q(r).abs()).max(T::one());
                worst = worst.max((a - fd).abs() / scale);
            }
        }
        worst
    }
}

/// Radial test function with derivatives up to order four.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TestFunction {
    Constant {
        value: f64,
    },
    /// `coef · r^power`.
    Power {
        coef: f64,
        power: u32,
    },
    /// `ℓ(r) = 2 log r`.
    Log,
    /// `height · sech((r − center)/width)`.
    CoshWindow {
        center: f64,
        width: f64,
        height: f64,
    },
    /// `(1 + tanh((r − center)/width))/2`.
    SmoothStep {
        center: f64,
        width: f64,
    },
    Scaled {
        inner: Box<TestFunction>,
        factor: f64,
    },
}

impl TestFunction {
    pub fn r_squared() -> Self {
        Self::Power { coef: 1.0, power: 2 }
    }

    pub fn bounded(&self) -> bool {
        match self {
            Self::Constant { .. } | Self::CoshWindow { .. } | Self::SmoothStep { .. } => true,
            Self::Power { power, .. } => *power == 0,
            Self::Log => false,
            Self::Scaled { inner, .. } => inner.bounded(),
        }
    }

    pub fn is_constant(&self) -> bool {
        match self {
            Self::Constant { .. } => true,
            Self::Power { power, coef } => *power == 0 || *coef == 0.0,
            Self::Scaled { inner, factor } => *factor == 0.0 || inner.is_constant(),
            _ => false,
        }
    }

    pub fn scaled(self, factor: f64) -> Self {
        Self::Scaled { inner: Box::new(self), factor }
    }

    /// `k`-th derivative at `r` for `k` in `0..=4`.
    pub fn eval<T: Real>(&self, k: usize, r: T) -> T {
        match self {
            Self::Constant { value } => {
                if k == 0 {
                    T::lit(*value)
                } else {
                    T::zero()
                }
            }
            Self::Power { coef, power } => {
                let p = *power as usize;
                if k > p {
                    return T::zero();
                }
                let mut fall = T::one();
                for i in 0..k {
                    fall *= T::from_usize_lossy(p - i);
                }
                T::lit(*coef) * fall * r.powi((p - k) as i32)
            }
            Self::Log => {
                if k == 0 {
                    return T::lit(2.0) * r.ln();
                }
                let mut c = 2.0;
                for i in 1..k {
                    c *= -(i as f64);
                }
                T::lit(c) / r.powi(k as i32)
            }
            Self::CoshWindow { center, width, height } => {
                let x = (r - T::lit(*center)) / T::lit(*width);
                let (t, s) = (x.tanh(), T::one() / x.cosh());
                let p = sech_poly(k);
                T::lit(*height) * s * horner(&p, t) / T::lit(*width).powi(k as i32)
            }
            Self::SmoothStep { center, width } => {
                let x = (r - T::lit(*center)) / T::lit(*width);
                let p = tanh_poly(k);
                horner(&p, x.tanh()) * T::lit(0.5) / T::lit(*width).powi(k as i32)
                    + if k == 0 { T::lit(0.5) } else { T::zero() }
            }
            Self::Scaled { inner, factor } => T::lit(*factor) * inner.eval(k, r),
        }
    }
}

fn horner<T: Real>(p: &[f64], t: T) -> T {
    p.iter().rev().fold(T::zero(), |acc, &c| acc * t + T::lit(c))
}

fn poly_derivative(p: &[f64]) -> Vec<f64> {
    p.iter().enumerate().skip(1).map(|(i, &c)| c * i as f64).collect()
}

/// `P_k` with `d^k/dx^k tanh x = P_k(tanh x)`.
fn tanh_poly(k: usize) -> Vec<f64> {
    let mut p = vec![0.0, 1.0];
    for _ in 0..k {
        let d = poly_derivative(&p);
        let mut next = vec![0.0; d.len() + 2];
        for (i, &c) in d.iter().enumerate() {
            next[i] += c;
            next[i + 2] -= c;
        }
        p = next;
    }
    p
}

/// `P_k` with `d^k/dx^k sech x = sech x · P_k(tanh x)`.
fn sech_poly(k: usize) -> Vec<f64> {
    let mut p = vec![1.0];
    for _ in 0..k {
        let d = poly_derivative(&p);
        let mut next = vec![0.0; p.len() + 2];
        for (i, &c) in p.iter().enumerate() {
            next[i + 1] -= c;
        }
        for (i, &c) in d.iter().enumerate() {
            next[i] += c;
            next[i + 2] -= c;
        }
        p = next;
    }
    p
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Perturbation {
    pub s: f64,
    pub alpha: f64,
}

impl Perturbation {
    pub fn new(s: f64, alpha: f64) -> Result<Self> {
        if !(alpha > -1.0) {
            return Err(Error::Domain(format!("alpha = {alpha} must exceed -1")));
        }
        Ok(Self { s, alpha })
    }

    pub fn none() -> Self {
        Self { s: 0.0, alpha: 0.0 }
    }
}

/// `k = s h + α ℓ` and its first two derivatives.
pub fn combined_k<T: Real>(h: &TestFunction, pert: &Perturbation, r: T) -> Result<[T; 3]> {
    if pert.alpha != 0.0 && !(r > T::zero()) {
        return Err(Error::Domain("log singularity at r = 0".into()));
    }
    let s = T::lit(pert.s);
    let a = T::lit(pert.alpha);
    let mut out = [T::zero(); 3];
    for (k, o) in out.iter_mut().enumerate() {
        let hk = if pert.s == 0.0 { T::zero() } else { s * h.eval(k, r) };
        let lk = if pert.alpha == 0.0 { T::zero() } else { a * TestFunction::Log.eval(k, r) };
        *o = hk + lk;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn quartic() -> RadialPotential<f64> {
        PotentialFamily::even_polynomial(vec![0.0, -2.0, 1.0]).build().unwrap()
    }

    #[test]
    fn ginibre_local_quantities() {
        let p = PotentialFamily::ginibre().build::<f64>().unwrap();
        assert_eq!(p.laplace_density(0.7).unwrap(), 1.0);
        assert_relative_eq!(p.mass_function(0.5).unwrap(), 0.25);
        assert_relative_eq!(p.mass_function(1.0).unwrap(), 1.0);
        assert_relative_eq!(p.g_tau(1.0, 1.0).unwrap(), 1.0);
        let e = std::f64::consts::E;
        assert_relative_eq!(p.g_tau(0.5, e).unwrap(), e * e - 1.0, epsilon = 1e-14);
        assert_relative_eq!(p.curvature_b(0.5).unwrap(), 1.0 / 3.0, epsilon = 1e-15);
        let d = p.peak_derivatives(0.5).unwrap();
        assert_relative_eq!(d[0], 4.0);
        assert_relative_eq!(d[1], -8.0);
        assert_relative_eq!(d[2], 48.0);
        let d = p.peak_derivatives(1.0).unwrap();
        assert_eq!(d, [4.0, -4.0, 12.0]);
        assert!(p.laplace_density(p.r_max + 1.0).is_err());
        assert_relative_eq!(p.r_max, 3.0, epsilon = 1e-12);
    }

    #[test]
    fn quartic_local_quantities() {
        let p = quartic();
        // ΔQ = 4r² − 2 for q = r⁴ − 2r².
        assert_relative_eq!(p.laplace_density(1.0).unwrap(), 2.0, epsilon = 1e-14);
        assert_relative_eq!(p.mass_function(1.0).unwrap(), 0.0, epsilon = 1e-14);
        let d = p.peak_derivatives(1.0).unwrap();
        assert_relative_eq!(d[0], 8.0, epsilon = 1e-13);
        assert_relative_eq!(d[1], 24.0, epsilon = 1e-13);
        assert_relative_eq!(d[2], 24.0, epsilon = 1e-13);
        assert!(p.curvature_b(0.5).is_err());
    }

    #[test]
    fn peak_derivatives_match_g_derivatives() {
        // At a critical point of g_τ, d_k is the k-th derivative of g_τ.
        let p = quartic();
        let r: f64 = 1.1;
        let tau = p.mass(r);
        let g = |x: f64| p.q(x) - 2.0 * tau * x.ln();
        let d = p.peak_derivatives(r).unwrap();
        for k in 2..=4 {
            let fd = finite_difference(g, k, r);
            assert_relative_eq!(d[k - 2], fd, max_relative = 1e-6);
        }
    }

    #[test]
    fn curvature_matches_finite_differences() {
        let p = quartic();
        let r = 1.1;
        let dq = |x: f64| p.lap(x)[0];
        let d1 = finite_difference(dq, 1, r);
        let d2 = finite_difference(dq, 2, r);
        let d = dq(r);
        let b = -d2 / (32.0 * d * d) - 19.0 * d1 / (96.0 * r * d * d)
            + 5.0 * d1 * d1 / (96.0 * d * d * d)
            + 1.0 / (12.0 * r * r * d);
        assert_relative_eq!(p.curvature_b(r).unwrap(), b, max_relative = 1e-8);
    }

    #[test]
    fn gap_polynomial_matches_monomials() {
        let fam = PotentialFamily::gap_polynomial(3.0, 1.0, 1, 0.5);
        let p = fam.build::<f64>().unwrap();
        // T(u) = 3u(u−1)² + u/2, so q(u) = u³ − 3u² + 3.5u.
        let mono = PotentialFamily::even_polynomial(vec![0.0, 3.5, -3.0, 1.0]).build::<f64>().unwrap();
        for &r in &[0.1, 0.7, 1.3] {
            assert_relative_eq!(p.q(r), mono.q(r), epsilon = 1e-13);
            for k in 0..3 {
                assert_relative_eq!(p.lap(r)[k], mono.lap(r)[k], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn analytic_derivatives_are_consistent() {
        for fam in [
            PotentialFamily::ginibre(),
            PotentialFamily::even_polynomial(vec![0.0, -2.0, 1.0]),
            PotentialFamily::BasePlusBump {
                base: Box::new(PotentialFamily::ginibre()),
                center: 1.6,
                depth: 0.2,
                width: 0.1,
            },
        ] {
            let p = fam.build::<f64>().unwrap();
            assert!(p.consistency_residual(100) < 1e-6, "{fam:?}");
            for i in 1..50 {
                let r = 0.05 * i as f64;
                let fd = [1, 2].map(|k| finite_difference(|x| p.lap(x)[0], k, r));
                let l = p.lap(r);
                assert_relative_eq!(l[1], fd[0], epsilon = 1e-5, max_relative = 1e-6);
                assert_relative_eq!(l[2], fd[1], epsilon = 1e-4, max_relative = 1e-5);
            }
        }
    }

    #[test]
    fn rejects_bad_families() {
        assert!(PotentialFamily::even_polynomial(vec![0.0, 1.0, -1.0]).build::<f64>().is_err());
        assert!(PotentialFamily::Ginibre { scale: 0.0 }.build::<f64>().is_err());
        assert!(Perturbation::new(0.0, -1.0).is_err());
    }

    #[test]
    fn test_function_derivatives() {
        let fns = [
            TestFunction::CoshWindow { center: 0.8, width: 0.3, height: 1.5 },
            TestFunction::SmoothStep { center: 1.2, width: 0.2 },
            TestFunction::Log,
            TestFunction::Power { coef: 2.0, power: 3 },
        ];
        for f in &fns {
            for k in 1..=3 {
                let r = 0.9;
                let fd = finite_difference(|x| f.eval(k - 1, x), 1, r);
                assert_relative_eq!(f.eval::<f64>(k, r), fd, max_relative = 1e-7, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn combined_k_examples() {
        let h = TestFunction::r_squared();
        assert_eq!(combined_k(&h, &Perturbation::none(), 0.3).unwrap()[0], 0.0);
        assert_relative_eq!(combined_k(&h, &Perturbation::new(1.0, 0.0).unwrap(), 2.0).unwrap()[0], 4.0);
        let e = std::f64::consts::E;
        assert_relative_eq!(combined_k(&h, &Perturbation::new(0.0, 1.0).unwrap(), e).unwrap()[0], 2.0);
        assert!(combined_k(&h, &Perturbation::new(0.0, 1.0).unwrap(), 0.0).is_err());
    }

    #[test]
    fn single_precision_profile() {
        let p = PotentialFamily::ginibre().build::<f32>().unwrap();
        assert!((p.curvature_b(0.5).unwrap() - 1.0 / 3.0).abs() < 1e-5);
    }
}
