//! Geometric functionals of the droplet.
//!
//! Radial measures: `dσ = 2rΔQ dr` on the droplet and `dA = 2r dr`.

use crate::droplet::{critical_indices, DropletGeometry};
use crate::error::{Error, Result};
use crate::potential::{Perturbation, RadialPotential, TestFunction};
use crate::qspecial::{GapTerm, LN_2PI};
use crate::quad::{integrate, Tolerance};
use crate::scalar::Real;
use crate::sum::compensated_sum;
use rayon::prelude::*;
use serde::Serialize;

pub fn default_tolerance() -> Tolerance {
    Tolerance { abs: 1e-13, rel: 1e-13, max_segments: 4000 }
}

fn quad<T: Real, F: Fn(T) -> T>(f: F, a: T, b: T) -> Result<T> {
    Ok(integrate(f, a, b, default_tolerance())?.value)
}

fn per_component<T: Real, F>(g: &DropletGeometry<T>, f: F) -> Result<Vec<T>>
where
    F: Fn(usize, T, T) -> Result<T> + Sync,
{
    g.components.par_iter().enumerate().map(|(nu, &(a, b))| f(nu, a, b)).collect()
}

fn check_positive<T: Real>(p: &RadialPotential<T>, g: &DropletGeometry<T>) -> Result<()> {
    for &(a, b) in &g.components {
        for k in 0..=32 {
            let r = a + (b - a) * T::from_usize_lossy(k) / T::lit(32.0);
            let d = p.lap(r)[0];
            if !(d > T::zero()) {
                return Err(Error::Singular { r: r.to_f64_lossy(), value: d.to_f64_lossy() });
            }
        }
    }
    Ok(())
}

/// Weighted energy `I_Q[σ]`.
pub fn energy_iq<T: Real>(p: &RadialPotential<T>, g: &DropletGeometry<T>) -> Result<T> {
    let parts = per_component(g, |nu, a, b| {
        let bulk = quad(|r| p.q(r) * T::lit(2.0) * r * p.lap(r)[0], a, b)?;
        let grad = quad(|r| r * p.dq(1, r).powi(2), a, b)? * T::lit(0.25);
        let m_prev = g.mass_before(nu);
        let m = g.masses[nu];
        let inner = if a > T::zero() { m_prev * m_prev * a.ln() } else { T::zero() };
        Ok(compensated_sum([bulk, grad, inner, -m * m * b.ln()]))
    })?;
    Ok(compensated_sum(parts))
}

/// Entropy `E_Q[σ] = ∫ log ΔQ dσ`.
pub fn entropy_eq<T: Real>(p: &RadialPotential<T>, g: &DropletGeometry<T>) -> Result<T> {
    check_positive(p, g)?;
    let parts = per_component(g, |_, a, b| {
        quad(
            |r| {
                let d = p.lap(r)[0];
                T::lit(2.0) * r * d * d.ln()
            },
            a,
            b,
        )
    })?;
    Ok(compensated_sum(parts))
}

/// `F_Q` per component and in total; the disk form is used when `a₀ = 0`.
pub fn fq_total<T: Real>(p: &RadialPotential<T>, g: &DropletGeometry<T>) -> Result<(T, Vec<T>)> {
    check_positive(p, g)?;
    let parts = per_component(g, |_, a, b| fq_component(p, a, b))?;
    Ok((compensated_sum(parts.iter().copied()), parts))
}

pub fn fq_component<T: Real>(p: &RadialPotential<T>, a: T, b: T) -> Result<T> {
    let c = T::lit;
    let lb = p.lap(b);
    let bulk = quad(
        |r| {
            let l = p.lap(r);
            (l[1] / l[0]).powi(2) * r
        },
        a,
        b,
    )? / c(24.0);
    let outer = b * lb[1] / lb[0];
    if a == T::zero() {
        Ok((T::one() / (b * b * lb[0])).ln() / c(12.0) - outer / c(16.0) + bulk)
    } else {
        let la = p.lap(a);
        let inner = a * la[1] / la[0];
        Ok((a * a * la[0] / (b * b * lb[0])).ln() / c(12.0) - (outer - inner) / c(16.0) + bulk)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum BoundaryVariant {
    /// `e_f` over the whole droplet.
    Total,
    /// `e_{ν,f}` for one component.
    Component { nu: usize },
    /// `e_{h,α}` for a central disk droplet.
    Conical { alpha: f64 },
    /// `ẽ_ℓ = e_ℓ + log(2π)/2`.
    TildeEll,
}

/// Boundary-plus-bulk functional `e_f` of one component.
pub fn boundary_component<T: Real>(p: &RadialPotential<T>, f: &TestFunction, a: T, b: T) -> Result<T> {
    let c = T::lit;
    let lb = p.lap(b);
    if !(lb[0] > T::zero()) {
        return Err(Error::Singular { r: b.to_f64_lossy(), value: lb[0].to_f64_lossy() });
    }
    if a == T::zero() && matches!(f, TestFunction::Log) {
        // Integrated by parts; the logarithmic endpoint terms cancel.
        return Ok(c(0.5) - c(0.5) * (lb[0] / p.lap(T::zero())[0]).ln());
    }
    let lprime = |r: T| {
        let l = p.lap(r);
        l[1] / l[0]
    };
    let outer = b * f.eval::<T>(1, b) / c(4.0) - b / c(4.0) * f.eval::<T>(0, b) * lprime(b);
    let inner = if a > T::zero() {
        -a * f.eval::<T>(1, a) / c(4.0) + a / c(4.0) * f.eval::<T>(0, a) * lprime(a)
    } else {
        T::zero()
    };
    let bulk = if f.is_constant() && lb[1] == T::zero() {
        T::zero()
    } else {
        quad(
            |r| {
                let l = p.lap(r);
                let l1 = l[1] / l[0];
                let l2 = l[2] / l[0] - l1 * l1;
                f.eval(0, r) * (l1 + r * l2)
            },
            a,
            b,
        )? / c(4.0)
    };
    Ok(compensated_sum([outer, inner, bulk]))
}

pub fn boundary_expectation<T: Real>(
    p: &RadialPotential<T>,
    g: &DropletGeometry<T>,
    f: &TestFunction,
    variant: BoundaryVariant,
) -> Result<T> {
    let total = |f: &TestFunction| -> Result<T> {
        let parts = per_component(g, |_, a, b| boundary_component(p, f, a, b))?;
        Ok(compensated_sum(parts))
    };
    match variant {
        BoundaryVariant::Total => total(f),
        BoundaryVariant::Component { nu } => {
            let &(a, b) = g.components.get(nu).ok_or(Error::Precondition(format!("no component {nu}")))?;
            boundary_component(p, f, a, b)
        }
        BoundaryVariant::Conical { alpha } => {
            if g.components[0].0 != T::zero() {
                return Err(Error::Geometry("e_{h,alpha} needs a central disk".into()));
            }
            let al = T::lit(alpha);
            // (α/2) ∫ ∇h·∇ℓ dA over S^ν equals 2α (h(b_ν) − h(a_ν)).
            let cross =
                g.components[1..].iter().map(|&(a, b)| T::lit(2.0) * al * (f.eval::<T>(0, b) - f.eval::<T>(0, a)));
            let b0 = g.components[0].1;
            let disk = al * (f.eval::<T>(0, b0) - f.eval::<T>(0, T::zero()));
            Ok(total(f)? + compensated_sum(cross) + disk)
        }
        BoundaryVariant::TildeEll => Ok(total(&TestFunction::Log)? + T::lit(0.5 * LN_2PI)),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum VarianceVariant {
    Total,
    Component {
        nu: usize,
    },
    /// `ṽ_ℓ = log(b₀²ΔQ(0)) + Σ_{ν≥1} v_{ν,ℓ}`.
    TildeEll,
}

fn variance_component<T: Real>(f: &TestFunction, nu: usize, a: T, b: T) -> Result<T> {
    if f.is_constant() {
        return Ok(T::zero());
    }
    if a == T::zero() && matches!(f, TestFunction::Log) {
        return Err(Error::Divergent(format!("v_{{{nu},l}} on a central disk")));
    }
    Ok(quad(|r| f.eval::<T>(1, r).powi(2) * r, a, b)? * T::lit(0.5))
}

pub fn variance_v<T: Real>(
    p: &RadialPotential<T>,
    g: &DropletGeometry<T>,
    f: &TestFunction,
    variant: VarianceVariant,
) -> Result<T> {
    match variant {
        VarianceVariant::Total => Ok(compensated_sum(per_component(g, |nu, a, b| variance_component(f, nu, a, b))?)),
        VarianceVariant::Component { nu } => {
            let &(a, b) = g.components.get(nu).ok_or(Error::Precondition(format!("no component {nu}")))?;
            variance_component(f, nu, a, b)
        }
        VarianceVariant::TildeEll => {
            let (a0, b0) = g.components[0];
            if a0 != T::zero() {
                return Err(Error::Geometry("v~_l needs a central disk".into()));
            }
            let mut acc = vec![(b0 * b0 * p.lap(T::zero())[0]).ln()];
            for (nu, &(a, b)) in g.components.iter().enumerate().skip(1) {
                acc.push(variance_component(&TestFunction::Log, nu, a, b)?);
            }
            Ok(compensated_sum(acc))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GapConstant<T> {
    pub rho: T,
    pub theta_alpha: T,
    pub c: T,
    pub mu: T,
    pub m: usize,
    pub x: T,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapConstants<T> {
    pub gaps: Vec<GapConstant<T>>,
    pub k_n: T,
}

impl<T: Real> GapConstants<T> {
    pub fn terms(&self) -> Vec<GapTerm<T>> {
        self.gaps.iter().map(|g| GapTerm { x: g.x, rho: g.rho, mu: g.mu }).collect()
    }
}

pub fn gap_constants<T: Real>(
    p: &RadialPotential<T>,
    g: &DropletGeometry<T>,
    h: &TestFunction,
    pert: &Perturbation,
    n: usize,
) -> Result<GapConstants<T>> {
    if g.gaps() == 0 {
        return Err(Error::NoGap);
    }
    let idx = critical_indices(g, n);
    let s = T::lit(pert.s);
    let alpha = T::lit(pert.alpha);
    let mut gaps = Vec::new();
    let mut k_n = Vec::new();
    for (nu, &(m, x)) in idx.iter().enumerate() {
        let b = g.components[nu].1;
        let a1 = g.components[nu + 1].0;
        let rho = b / a1;
        let theta_alpha = (p.lap(b)[0] / p.lap(a1)[0]).sqrt() * rho.powf(T::lit(2.0) * (x - alpha));
        let c = h.eval::<T>(0, a1) - h.eval::<T>(0, b);
        let mu = theta_alpha * (s * c).exp();
        k_n.push(c * x);
        gaps.push(GapConstant { rho, theta_alpha, c, mu, m, x });
    }
    Ok(GapConstants { gaps, k_n: compensated_sum(k_n) })
}

/// `∫ f dσ`; for `f = ℓ` the closed form is checked against quadrature.
pub fn sigma_moment<T: Real>(p: &RadialPotential<T>, g: &DropletGeometry<T>, f: &TestFunction) -> Result<T> {
    let parts = per_component(g, |_, a, b| quad(|r| f.eval::<T>(0, r) * T::lit(2.0) * r * p.lap(r)[0], a, b))?;
    let value = compensated_sum(parts);
    if matches!(f, TestFunction::Log) {
        let closed = ell_moment_closed_form(p, g);
        let residual = (closed - value).abs();
        if residual > T::floor_tol(1e-9) {
            return Err(Error::Identity { name: "ell_moment".into(), residual: residual.to_f64_lossy() });
        }
    }
    Ok(value)
}

/// `∫ ℓ dσ = −(q(b_N) − 2 log b_N − q(a₀))`.
pub fn ell_moment_closed_form<T: Real>(p: &RadialPotential<T>, g: &DropletGeometry<T>) -> T {
    let a0 = g.components[0].0;
    let bn = g.components[g.components.len() - 1].1;
    -(p.q(bn) - T::lit(2.0) * bn.ln() - p.q(a0))
}

/// `(∫ B dσ, right-hand side)` on an annular component.
pub fn b_identity_annulus<T: Real>(p: &RadialPotential<T>, a: T, b: T) -> Result<(T, T)> {
    let lhs = quad(|r| p.curvature_b(r).unwrap_or(T::nan()) * T::lit(2.0) * r * p.lap(r)[0], a, b)?;
    let rhs = fq_component(p, a, b)? - (p.lap(b)[0] / p.lap(a)[0]).ln() / T::lit(4.0) + (b / a).ln() / T::lit(3.0);
    Ok((lhs, rhs))
}

/// Residual of the disk analogue on `[ε, b₀]`, extrapolated to `ε → 0`.
pub fn b_identity_disk_residual<T: Real>(p: &RadialPotential<T>, b0: T) -> Result<T> {
    let d0 = p.lap(T::zero())[0];
    let c = T::lit;
    let fq = fq_component(p, T::zero(), b0)?;
    let residual = |eps: T| -> Result<T> {
        let lhs = quad(|r| p.curvature_b(r).unwrap_or(T::nan()) * c(2.0) * r * p.lap(r)[0], eps, b0)?;
        let rhs = fq + b0.ln() / c(3.0) - (d0 * eps * eps).ln() / c(12.0) - (p.lap(b0)[0] / d0).ln() / c(4.0)
            + d0.ln() / c(6.0);
        Ok(lhs - rhs)
    };
    let e1 = b0 * c(2e-3);
    let r1 = residual(e1)?;
    let r2 = residual(e1 * c(0.5))?;
    Ok((c(4.0) * r2 - r1) / c(3.0))
}
