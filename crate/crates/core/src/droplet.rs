//! Peak sets, droplet components, outposts and the cutoff policy.
//!
//! Local peaks of `g_τ` are the roots of `T(r) = τ` on intervals where `ΔQ > 0`.
//! On each such interval `T` is increasing, so every interval ("branch")
//! carries at most one peak for a given `τ`.

use crate::error::{Error, Result};
use crate::potential::RadialPotential;
use crate::scalar::Real;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub const TIE_TOL: f64 = 1e-9;
const SCAN_POINTS: usize = 4096;
const SWEEP_POINTS: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Branch<T> {
    pub lo: T,
    pub hi: T,
    pub mass_lo: T,
    pub mass_hi: T,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PeakSet<T> {
    pub tau: T,
    pub local_peaks: Vec<T>,
    pub branches: Vec<usize>,
    pub values: Vec<T>,
    pub b_tau: T,
    pub beta_tau: T,
    pub global_peaks: Vec<T>,
}

impl<T: Real> PeakSet<T> {
    pub fn index_of_branch(&self, b: usize) -> Option<usize> {
        self.branches.iter().position(|&x| x == b)
    }
}

/// Root finder for `T(r) = τ` over the increasing intervals of the mass function.
#[derive(Debug, Clone)]
pub struct PeakFinder<'a, T: Real> {
    pub potential: &'a RadialPotential<T>,
    pub branches: Vec<Branch<T>>,
}

impl<'a, T: Real> PeakFinder<'a, T> {
    pub fn new(p: &'a RadialPotential<T>) -> Self {
        let lo = if p.finite_at_origin { T::zero() } else { p.r_min };
        let span = p.r_max - lo;
        let grid: Vec<T> = (0..=SCAN_POINTS)
            .map(|i| {
                let x = T::from_usize_lossy(i) / T::from_usize_lossy(SCAN_POINTS);
                lo + span * x * x
            })
            .collect();
        let lap: Vec<T> = grid.iter().map(|&r| p.lap(r)[0]).collect();
        let zero_at = |mut a: T, mut b: T| -> T {
            let fa_pos = p.lap(a)[0] > T::zero();
            for _ in 0..200 {
                let m = (a + b) * T::lit(0.5);
                if m <= a || m >= b {
                    break;
                }
                if (p.lap(m)[0] > T::zero()) == fa_pos {
                    a = m;
                } else {
                    b = m;
                }
            }
            (a + b) * T::lit(0.5)
        };
        let mut branches = Vec::new();
        let mut start = if lap[0] > T::zero() { Some(grid[0]) } else { None };
        for i in 0..SCAN_POINTS {
            let (pos0, pos1) = (lap[i] > T::zero(), lap[i + 1] > T::zero());
            if pos0 != pos1 {
                let z = zero_at(grid[i], grid[i + 1]);
                if pos1 {
                    start = Some(z);
                } else if let Some(s) = start.take() {
                    branches.push((s, z));
                }
            }
        }
        if let Some(s) = start {
            branches.push((s, grid[SCAN_POINTS]));
        }
        let branches =
            branches.into_iter().map(|(lo, hi)| Branch { lo, hi, mass_lo: p.mass(lo), mass_hi: p.mass(hi) }).collect();
        Self { potential: p, branches }
    }

    /// Peak of branch `b` at level `τ`, if the branch carries one.
    pub fn peak_on(&self, b: usize, tau: T) -> Option<T> {
        let br = self.branches[b];
        let p = self.potential;
        if tau < br.mass_lo || tau > br.mass_hi {
            return None;
        }
        if tau == br.mass_lo {
            return if br.lo == T::zero() { Some(T::zero()) } else { None };
        }
        let (mut a, mut c) = (br.lo, br.hi);
        for _ in 0..100 {
            let m = (a + c) * T::lit(0.5);
            if m <= a || m >= c {
                break;
            }
            if p.mass(m) < tau {
                a = m;
            } else {
                c = m;
            }
            if c - a <= T::epsilon() * T::lit(4.0) * c {
                break;
            }
        }
        let mut r = (a + c) * T::lit(0.5);
        for _ in 0..4 {
            let d = T::lit(2.0) * r * p.lap(r)[0];
            if !(d > T::zero()) {
                break;
            }
            let next = r - (p.mass(r) - tau) / d;
            if next > a && next < c {
                r = next;
            }
        }
        let lap = p.lap(r)[0];
        if lap > T::floor_tol(1e-12) {
            Some(r)
        } else {
            None
        }
    }

    pub fn local_peaks(&self, tau: T) -> Result<PeakSet<T>> {
        let mut local_peaks = Vec::new();
        let mut branches = Vec::new();
        let mut values = Vec::new();
        for b in 0..self.branches.len() {
            if let Some(r) = self.peak_on(b, tau) {
                local_peaks.push(r);
                branches.push(b);
                values.push(self.potential.g(tau, r));
            }
        }
        if local_peaks.is_empty() {
            return Err(Error::EmptyPeaks(tau.to_f64_lossy()));
        }
        let b_tau = values.iter().copied().fold(T::infinity(), T::min);
        let tol = T::lit(TIE_TOL);
        let global_peaks: Vec<T> =
            local_peaks.iter().zip(&values).filter(|(_, &v)| v - b_tau <= tol).map(|(&r, _)| r).collect();
        let beta_tau = global_peaks.iter().copied().fold(T::neg_infinity(), T::max);
        Ok(PeakSet { tau, local_peaks, branches, values, b_tau, beta_tau, global_peaks })
    }

    fn g_on(&self, b: usize, tau: T) -> Option<T> {
        self.peak_on(b, tau).map(|r| self.potential.g(tau, r))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropletCase {
    CentralDisk,
    Annular,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DropletGeometry<T> {
    pub components: Vec<(T, T)>,
    pub outposts: Vec<T>,
    /// Outpost levels: `τ` at which each outpost ties the global minimum.
    pub outpost_levels: Vec<T>,
    pub masses: Vec<T>,
    pub euler_char: u8,
    pub case: DropletCase,
}

impl<T: Real> DropletGeometry<T> {
    pub fn gaps(&self) -> usize {
        self.components.len().saturating_sub(1)
    }

    /// `M_{ν−1}` with `M_{−1} = 0`.
    pub fn mass_before(&self, nu: usize) -> T {
        if nu == 0 {
            T::zero()
        } else {
            self.masses[nu - 1]
        }
    }

    pub fn contains(&self, r: T, slack: T) -> bool {
        self.components.iter().any(|&(a, b)| r >= a - slack && r <= b + slack)
    }
}

/// Critical indices `m_ν = ⌊M_ν n⌋` and fractional parts `x_ν` for each gap.
pub fn critical_indices<T: Real>(g: &DropletGeometry<T>, n: usize) -> Vec<(usize, T)> {
    let nf = T::from_usize_lossy(n);
    g.masses[..g.gaps()]
        .iter()
        .map(|&m| {
            let v = m * nf;
            let fl = v.floor();
            (fl.to_usize().unwrap_or(0), v - fl)
        })
        .collect()
}

pub fn compute_droplet<T: Real>(p: &RadialPotential<T>) -> Result<DropletGeometry<T>> {
    let finder = PeakFinder::new(p);
    compute_droplet_with(&finder)
}

pub fn compute_droplet_with<T: Real>(finder: &PeakFinder<'_, T>) -> Result<DropletGeometry<T>> {
    let p = finder.potential;
    let taus: Vec<T> = (0..=SWEEP_POINTS).map(|i| T::from_usize_lossy(i) / T::from_usize_lossy(SWEEP_POINTS)).collect();
    let sets: Vec<PeakSet<T>> = taus.par_iter().map(|&t| finder.local_peaks(t)).collect::<Result<_>>()?;
    let tol = T::lit(TIE_TOL);

    // Global branch along the sweep; ties resolved toward continuity.
    let mut argmin: Vec<usize> = Vec::with_capacity(sets.len());
    for (i, s) in sets.iter().enumerate() {
        let tied: Vec<usize> =
            s.branches.iter().zip(&s.values).filter(|(_, &v)| v - s.b_tau <= tol).map(|(&b, _)| b).collect();
        let choice = match argmin.last() {
            Some(prev) if tied.contains(prev) => *prev,
            _ if i == 0 => usize::MAX,
            _ => {
                let strict = s.branches
                    [s.values.iter().enumerate().min_by(|a, b| a.1.partial_cmp(b.1).unwrap()).map(|(k, _)| k).unwrap()];
                strict
            }
        };
        argmin.push(choice);
    }
    // The level τ = 0 inherits the branch selected just above it.
    argmin[0] = argmin[1];
    if sets[0].index_of_branch(argmin[0]).is_none() {
        return Err(Error::Geometry("first component does not reach tau = 0".into()));
    }

    let mut components = Vec::new();
    let mut masses = Vec::new();
    let mut used = Vec::new();
    let mut start = T::zero();
    for i in 0..SWEEP_POINTS {
        let (b0, b1) = (argmin[i], argmin[i + 1]);
        if b0 == b1 {
            continue;
        }
        if used.contains(&b1) {
            return Err(Error::Geometry("global peak returned to an earlier branch".into()));
        }
        let diff = |t: T| -> Option<T> { Some(finder.g_on(b0, t)? - finder.g_on(b1, t)?) };
        let (mut lo, mut hi) = (taus[i], taus[i + 1]);
        if diff(lo).is_none() || diff(hi).is_none() {
            return Err(Error::Resolution(lo.to_f64_lossy()));
        }
        for _ in 0..200 {
            let mid = (lo + hi) * T::lit(0.5);
            if hi - lo <= T::floor_tol(1e-13) || mid <= lo || mid >= hi {
                break;
            }
            match diff(mid) {
                Some(d) if d < T::zero() => lo = mid,
                Some(_) => hi = mid,
                None => return Err(Error::Resolution(mid.to_f64_lossy())),
            }
        }
        let m = (lo + hi) * T::lit(0.5);
        let at = finder.local_peaks(m)?;
        let pair = finder.g_on(b0, m).unwrap().min(finder.g_on(b1, m).unwrap());
        if at.b_tau < pair - tol {
            return Err(Error::Resolution(m.to_f64_lossy()));
        }
        let a = finder.peak_on(b0, start).unwrap_or(T::zero());
        let b = finder.peak_on(b0, m).ok_or(Error::Resolution(m.to_f64_lossy()))?;
        components.push((a, b));
        masses.push(m);
        used.push(b0);
        start = m;
    }
    let last = argmin[SWEEP_POINTS];
    let a = finder.peak_on(last, start).unwrap_or(T::zero());
    let b = finder.peak_on(last, T::one()).ok_or(Error::EmptyPeaks(1.0))?;
    components.push((a, b));
    masses.push(T::one());
    for &(a, b) in &components {
        if b - a < T::lit(1e-8) {
            return Err(Error::Degenerate((b - a).to_f64_lossy()));
        }
    }

    let mut outposts = Vec::new();
    let mut outpost_levels = Vec::new();
    let slack = T::lit(1e-7);
    let mut levels = vec![T::zero()];
    levels.extend(masses.iter().copied());
    for &tau in &levels {
        let s = finder.local_peaks(tau)?;
        for &r in &s.global_peaks {
            let inside = components.iter().any(|&(a, b)| r >= a - slack && r <= b + slack);
            let seen = outposts.iter().any(|&t: &T| (t - r).abs() <= slack);
            if !inside && !seen {
                outposts.push(r);
                outpost_levels.push(tau);
            }
        }
    }
    let euler_char = if components[0].0 == T::zero() { 1 } else { 0 };
    let case = if euler_char == 1 { DropletCase::CentralDisk } else { DropletCase::Annular };
    let _ = p;
    Ok(DropletGeometry { components, outposts, outpost_levels, masses, euler_char, case })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CutoffPolicy {
    pub c_cut: f64,
}

impl Default for CutoffPolicy {
    fn default() -> Self {
        Self { c_cut: 20.0 }
    }
}

impl CutoffPolicy {
    pub fn delta_n(&self, n: usize) -> f64 {
        let n = n as f64;
        self.c_cut * n.ln() / n
    }

    pub fn eps_n(&self, n: usize) -> f64 {
        self.delta_n(n).sqrt()
    }

    pub fn l_n(&self, n: usize) -> f64 {
        self.c_cut * (n as f64).ln()
    }

    pub fn d_n(n: usize) -> usize {
        (n as f64).powf(1.0 / 6.0).ceil() as usize
    }
}

/// Peaks with `g_τ(r) < B_τ + δ_n`.
pub fn significant_peaks<T: Real>(set: &PeakSet<T>, policy: &CutoffPolicy, n: usize) -> Vec<T> {
    let cut = set.b_tau + T::lit(policy.delta_n(n));
    set.local_peaks.iter().zip(&set.values).filter(|(_, &v)| v < cut).map(|(&r, _)| r).collect()
}

/// Branch indices of the significant peaks.
pub fn significant_branches<T: Real>(set: &PeakSet<T>, policy: &CutoffPolicy, n: usize) -> Vec<usize> {
    let cut = set.b_tau + T::lit(policy.delta_n(n));
    set.branches.iter().zip(&set.values).filter(|(_, &v)| v < cut).map(|(&b, _)| b).collect()
}

/// Tracks the peak of the branch carrying component `nu` along `taus` by warm-started Newton.
pub fn peak_trajectory<T: Real>(
    finder: &PeakFinder<'_, T>,
    g: &DropletGeometry<T>,
    nu: usize,
    taus: &[T],
) -> Result<Vec<T>> {
    let p = finder.potential;
    let (a, b) = *g.components.get(nu).ok_or(Error::Precondition(format!("no component {nu}")))?;
    let mid = (a + b) * T::lit(0.5);
    let branch = finder
        .branches
        .iter()
        .position(|br| br.lo <= mid && mid <= br.hi)
        .ok_or(Error::Geometry("component not on a branch".into()))?;
    let br = finder.branches[branch];
    let mut out = Vec::with_capacity(taus.len());
    let mut r: Option<T> = None;
    for &tau in taus {
        if tau <= T::zero() && br.lo == T::zero() {
            out.push(T::zero());
            r = None;
            continue;
        }
        let mut x = match r {
            Some(x) if x > T::zero() => x,
            _ => {
                let seed = if br.lo == T::zero() { (tau / p.lap(T::zero())[0]).sqrt() } else { mid };
                seed.max(br.lo).min(br.hi)
            }
        };
        let mut ok = false;
        for _ in 0..60 {
            let d = T::lit(2.0) * x * p.lap(x)[0];
            let step = (p.mass(x) - tau) / d;
            x -= step;
            if !(x > br.lo && x < br.hi) {
                return Err(Error::Tracking(tau.to_f64_lossy()));
            }
            if step.abs() <= T::epsilon() * T::lit(8.0) * x {
                ok = true;
                break;
            }
        }
        if !ok {
            return Err(Error::Tracking(tau.to_f64_lossy()));
        }
        out.push(x);
        r = Some(x);
    }
    Ok(out)
}

/// Empirical constant `(g_τ(r) − B_τ)/min(dist(r, LP)², 1)`; `+∞` on a global peak.
pub fn min_gap_lower_bound<T: Real>(p: &RadialPotential<T>, set: &PeakSet<T>, r: T) -> T {
    let r = r.max(p.r_min).min(p.r_max);
    let dist = set.local_peaks.iter().map(|&x| (x - r).abs()).fold(T::infinity(), T::min);
    let num = p.g(set.tau, r) - set.b_tau;
    let den = (dist * dist).min(T::one());
    if den == T::zero() {
        return T::infinity();
    }
    num / den
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::PotentialFamily;
    use approx::assert_relative_eq;

    #[test]
    fn ginibre_peaks_and_droplet() {
        let p = PotentialFamily::ginibre().build::<f64>().unwrap();
        let f = PeakFinder::new(&p);
        let s = f.local_peaks(0.36).unwrap();
        assert_eq!(s.local_peaks.len(), 1);
        assert_relative_eq!(s.local_peaks[0], 0.6, epsilon = 1e-14);
        assert_relative_eq!(s.b_tau, 0.36 - 0.72 * 0.6f64.ln(), epsilon = 1e-14);
        let g = compute_droplet(&p).unwrap();
        assert_eq!(g.components.len(), 1);
        assert_eq!(g.components[0].0, 0.0);
        assert_relative_eq!(g.components[0].1, 1.0, epsilon = 1e-12);
        assert_eq!(g.masses, vec![1.0]);
        assert_eq!(g.euler_char, 1);
        assert!(g.outposts.is_empty());
    }

    #[test]
    fn annulus_droplet() {
        let p = PotentialFamily::even_polynomial(vec![0.0, -2.0, 1.0]).build::<f64>().unwrap();
        let f = PeakFinder::new(&p);
        let s = f.local_peaks(0.0).unwrap();
        assert_eq!(s.local_peaks.len(), 1);
        assert_relative_eq!(s.local_peaks[0], 1.0, epsilon = 1e-13);
        let g = compute_droplet(&p).unwrap();
        let b = ((1.0 + 3f64.sqrt()) / 2.0).sqrt();
        assert_eq!(g.components.len(), 1);
        assert_relative_eq!(g.components[0].0, 1.0, epsilon = 1e-12);
        assert_relative_eq!(g.components[0].1, b, epsilon = 1e-12);
        assert_eq!(g.euler_char, 0);
        assert_eq!(g.case, DropletCase::Annular);
    }

    #[test]
    fn critical_index_examples() {
        let mk = |m: Vec<f64>| DropletGeometry {
            components: vec![(0.0, 1.0); m.len()],
            outposts: vec![],
            outpost_levels: vec![],
            masses: m,
            euler_char: 1,
            case: DropletCase::CentralDisk,
        };
        let c = critical_indices(&mk(vec![0.4, 1.0]), 10);
        assert_eq!(c[0].0, 4);
        assert!(c[0].1.abs() < 1e-12);
        let c = critical_indices(&mk(vec![0.37, 1.0]), 10);
        assert_eq!(c[0].0, 3);
        assert_relative_eq!(c[0].1, 0.7, epsilon = 1e-12);
        assert!(critical_indices(&mk(vec![1.0]), 7).is_empty());
    }

    #[test]
    fn trajectory_follows_square_root() {
        let p = PotentialFamily::ginibre().build::<f64>().unwrap();
        let f = PeakFinder::new(&p);
        let g = compute_droplet(&p).unwrap();
        let taus: Vec<f64> = (1..20).map(|i| i as f64 / 20.0).collect();
        let r = peak_trajectory(&f, &g, 0, &taus).unwrap();
        for (t, r) in taus.iter().zip(r) {
            assert_relative_eq!(r, t.sqrt(), epsilon = 1e-14);
        }
    }

    #[test]
    fn gap_bound_diagnostic() {
        let p = PotentialFamily::ginibre().build::<f64>().unwrap();
        let s = PeakFinder::new(&p).local_peaks(0.25).unwrap();
        assert!(min_gap_lower_bound(&p, &s, 0.6) > 0.0);
        assert!(min_gap_lower_bound(&p, &s, 0.5).is_infinite());
    }

    #[test]
    fn policy_relations() {
        let c = CutoffPolicy::default();
        assert_relative_eq!(c.eps_n(100) * c.eps_n(100), c.delta_n(100), epsilon = 1e-15);
        assert_eq!(CutoffPolicy::d_n(64), 2);
        assert_eq!(CutoffPolicy::d_n(65), 3);
    }
}
