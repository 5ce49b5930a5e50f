//! Heine and discrete normal distributions, and predicted fluctuation CGFs.

use crate::error::{Error, Result};
use crate::qspecial::{displacement_gn, log_barnes_g, qpoch_infinite_log, GapTerm};
use crate::scalar::Real;
use crate::sum::{compensated_sum, log_sum_exp};
use rand::Rng;
use serde::Serialize;

pub const PMF_TRUNCATION: f64 = 1e-14;

/// `He(θ, q)` on the non-negative integers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HeineDist<T> {
    pub theta: T,
    pub q: T,
}

impl<T: Real> HeineDist<T> {
    pub fn new(theta: T, q: T) -> Result<Self> {
        if !(theta > T::zero()) || !(q > T::zero() && q < T::one()) {
            return Err(Error::Domain(format!("Heine parameters theta = {theta}, q = {q}")));
        }
        Ok(Self { theta, q })
    }

    fn log_norm(&self) -> T {
        qpoch_infinite_log(-self.theta, self.q).expect("positive factors")
    }

    /// `log P(X = k)`.
    pub fn log_pmf(&self, k: usize) -> T {
        let kf = T::from_usize_lossy(k);
        let mut log_qq = T::zero();
        let mut qi = self.q;
        for _ in 0..k {
            log_qq += (-qi).ln_1p();
            qi *= self.q;
        }
        kf * (kf - T::one()) * T::lit(0.5) * self.q.ln() + kf * self.theta.ln() - log_qq - self.log_norm()
    }

    pub fn pmf(&self, k: usize) -> T {
        self.log_pmf(k).exp()
    }

    /// Probabilities until the cumulative mass reaches `1 − 1e-14`.
    pub fn table(&self) -> Vec<T> {
        let mut out = Vec::new();
        let ln0 = -self.log_norm();
        let mut logp = ln0;
        let mut cum = T::zero();
        let target = T::one() - T::floor_tol(PMF_TRUNCATION);
        let mut k = 0usize;
        loop {
            let p = logp.exp();
            out.push(p);
            cum += p;
            // Ratio P(k+1)/P(k) = θ q^k/(1 − q^{k+1}).
            let qk = self.q.powi(k as i32);
            let ratio = self.theta * qk / (T::one() - qk * self.q);
            k += 1;
            let decreasing = ratio < T::one();
            if (cum >= target && decreasing) || p == T::zero() && decreasing || k > 100_000 {
                break;
            }
            logp += ratio.ln();
        }
        out
    }

    /// `log E e^{s c X}`.
    pub fn cgf_scaled(&self, c: T, s: T) -> Result<T> {
        let th = self.theta * (c * s).exp();
        Ok(qpoch_infinite_log(-th, self.q)? - self.log_norm())
    }

    /// `(E X, E [X]_q, E q^X)`.
    pub fn moments(&self) -> (T, T, T) {
        let mut terms = Vec::new();
        let mut qj = T::one();
        loop {
            let t = self.theta * qj / (T::one() + self.theta * qj);
            terms.push(t);
            if t < T::floor_tol(1e-18) {
                break;
            }
            qj *= self.q;
        }
        let mean = compensated_sum(terms);
        let eq = T::one() / (T::one() + self.theta);
        let q_mean = (self.theta / (T::one() + self.theta)) / (T::one() - self.q);
        (mean, q_mean, eq)
    }

    pub fn sampler(&self) -> HeineSampler {
        let table = self.table();
        let mut cdf = Vec::with_capacity(table.len());
        let mut acc = 0.0;
        for p in table {
            acc += p.to_f64_lossy();
            cdf.push(acc);
        }
        HeineSampler { cdf }
    }
}

/// Inverse-CDF sampler over a truncated table.
#[derive(Debug, Clone)]
pub struct HeineSampler {
    cdf: Vec<f64>,
}

impl HeineSampler {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let total = *self.cdf.last().unwrap_or(&1.0);
        let u: f64 = rng.gen::<f64>() * total;
        self.cdf.partition_point(|&c| c <= u).min(self.cdf.len() - 1)
    }
}

/// `dN(λ, q)` on the integers, `P(k) ∝ λ^k q^{k(k−1)/2}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DiscreteNormal<T> {
    pub lambda: T,
    pub q: T,
}

impl<T: Real> DiscreteNormal<T> {
    pub fn new(lambda: T, q: T) -> Result<Self> {
        if !(lambda > T::zero()) || !(q > T::zero() && q < T::one()) {
            return Err(Error::Domain("discrete normal parameters out of range".into()));
        }
        Ok(Self { lambda, q })
    }

    fn log_weight(&self, k: i64) -> T {
        let kf = T::lit(k as f64);
        kf * self.lambda.ln() + kf * (kf - T::one()) * T::lit(0.5) * self.q.ln()
    }

    /// `(k_min, pmf)` over the range carrying all but a negligible tail.
    pub fn table(&self) -> (i64, Vec<T>) {
        let centre = (T::lit(0.5) - self.lambda.ln() / self.q.ln()).round().to_i64().unwrap_or(0);
        let top = self.log_weight(centre);
        let cut = top + T::floor_tol(1e-20).ln();
        let mut lo = centre;
        while self.log_weight(lo - 1) > cut {
            lo -= 1;
        }
        let mut hi = centre;
        while self.log_weight(hi + 1) > cut {
            hi += 1;
        }
        let logs: Vec<T> = (lo - 1..=hi + 1).map(|k| self.log_weight(k)).collect();
        let z = log_sum_exp(&logs);
        (lo - 1, logs.iter().map(|&l| (l - z).exp()).collect())
    }
}

/// Total variation between the law of `X⁺ − X⁻` and `dN(θρ, ρ²)`.
pub fn dnormal_check<T: Real>(x_plus: &HeineDist<T>, x_minus: &HeineDist<T>) -> Result<T> {
    if (x_plus.q - x_minus.q).abs() > T::epsilon() * T::lit(4.0) {
        return Err(Error::Precondition("X+ and X- must share q".into()));
    }
    let pp = x_plus.table();
    let pm = x_minus.table();
    let off = pm.len() as i64 - 1;
    let mut conv = vec![T::zero(); pp.len() + pm.len() - 1];
    for (i, &a) in pp.iter().enumerate() {
        for (k, &b) in pm.iter().enumerate() {
            conv[(i as i64 - k as i64 + off) as usize] += a * b;
        }
    }
    let dn = DiscreteNormal::new(x_plus.theta, x_plus.q)?;
    let (lo, table) = dn.table();
    let d_lo = -off;
    let d_hi = pp.len() as i64 - 1;
    let k_lo = lo.min(d_lo);
    let k_hi = (lo + table.len() as i64 - 1).max(d_hi);
    let mut tv = Vec::new();
    for d in k_lo..=k_hi {
        let a = if d >= d_lo && d <= d_hi { conv[(d - d_lo) as usize] } else { T::zero() };
        let idx = d - lo;
        let b = if idx >= 0 && (idx as usize) < table.len() { table[idx as usize] } else { T::zero() };
        tv.push((a - b).abs());
    }
    Ok(compensated_sum(tv) * T::lit(0.5))
}

/// Gap data for the predicted CGF: `θ` is `θ_{ν,α}` at `s = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GapPrediction<T> {
    pub rho: T,
    pub theta: T,
    pub c: T,
    pub x: T,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum CgfMode<T> {
    /// Gaussian part `(e_h, v_h)` plus bilateral Heine displacements.
    Regular { gaps: Vec<GapPrediction<T>>, e: T, v: T },
    /// As `Regular` with `e = e_{h,α}` and `θ = θ_{ν,α}`.
    Conical { gaps: Vec<GapPrediction<T>>, e: T, v: T },
    /// One outpost: unilateral displacement `cX`, `X ~ He(θρ, ρ²)`.
    Outpost { rho: T, theta: T, c: T, e: T, v: T },
    /// CGF of `fluct_n ℓ` in the variable `α`; `θ` is `θ_{ν,0}`.
    LogStatistic { gaps: Vec<GapPrediction<T>>, n: usize, e_tilde: T, v_tilde: T },
}

fn heine_path<T: Real>(gaps: &[GapPrediction<T>], s: T) -> Result<T> {
    let mut acc = T::zero();
    for g in gaps {
        let q = g.rho * g.rho;
        let plus = HeineDist::new(g.theta * g.rho, q)?;
        let minus = HeineDist::new(g.rho / g.theta, q)?;
        acc += s * g.c * g.x + plus.cgf_scaled(g.c, s)? + minus.cgf_scaled(-g.c, s)?;
    }
    Ok(acc)
}

fn gn_path<T: Real>(gaps: &[GapPrediction<T>], s: T) -> Result<T> {
    let terms = |s: T| -> Vec<GapTerm<T>> {
        gaps.iter().map(|g| GapTerm { x: g.x, rho: g.rho, mu: g.theta * (s * g.c).exp() }).collect()
    };
    Ok(displacement_gn(&terms(s))? - displacement_gn(&terms(T::zero()))?)
}

/// Predicted limiting CGF; the gap modes are evaluated by two independent paths.
pub fn predicted_fluct_cgf<T: Real>(mode: &CgfMode<T>, s: T) -> Result<T> {
    let half = T::lit(0.5);
    match mode {
        CgfMode::Regular { gaps, e, v } | CgfMode::Conical { gaps, e, v } => {
            let gauss = s * *e + half * s * s * *v;
            let a = heine_path(gaps, s)?;
            let b = gn_path(gaps, s)?;
            let residual = (a - b).abs();
            if residual > T::floor_tol(1e-10) * (T::one() + a.abs()) {
                return Err(Error::Identity {
                    name: "heine_vs_displacement".into(),
                    residual: residual.to_f64_lossy(),
                });
            }
            Ok(gauss + a)
        }
        CgfMode::Outpost { rho, theta, c, e, v } => {
            let x = HeineDist::new(*theta * *rho, *rho * *rho)?;
            Ok(s * *e + half * s * s * *v + x.cgf_scaled(*c, s)?)
        }
        CgfMode::LogStatistic { gaps, n, e_tilde, v_tilde } => {
            let alpha = s;
            if !(alpha > -T::one()) {
                return Err(Error::Domain("alpha must exceed -1".into()));
            }
            let at = |a: T| -> Vec<GapTerm<T>> {
                gaps.iter()
                    .map(|g| GapTerm { x: g.x, rho: g.rho, mu: g.theta * g.rho.powf(-T::lit(2.0) * a) })
                    .collect()
            };
            let shift = displacement_gn(&at(alpha))? - displacement_gn(&at(T::zero()))?;
            let a2 = half * alpha * alpha;
            Ok(a2 * T::from_usize_lossy(*n).ln() + alpha * *e_tilde + a2 * *v_tilde - log_barnes_g(T::one() + alpha)?
                + shift)
        }
    }
}
