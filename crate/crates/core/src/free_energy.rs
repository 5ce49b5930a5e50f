//! Exact `log Z_n` from orthogonal-polynomial norms, the Laplace form of the
//! norms, and the large-`n` expansions.
//!
//! `h_j = 2∫ r^{1+2α+2j} e^{s h(r)} e^{−n q(r)} dr` and `Z_n = n! ∏ h_j`.

use crate::droplet::{compute_droplet_with, significant_peaks, CutoffPolicy, DropletCase, DropletGeometry, PeakFinder};
use crate::error::{Error, Result};
use crate::functionals::{
    boundary_expectation, ell_moment_closed_form, energy_iq, entropy_eq, fq_total, gap_constants, sigma_moment,
    variance_v, BoundaryVariant, VarianceVariant,
};
use crate::potential::{Perturbation, RadialPotential, TestFunction};
use crate::qspecial::{
    displacement_gn, ln_factorial, ln_gamma, log_barnes_g, qpoch_infinite_log, LN_2PI, ZETA_PRIME_M1,
};
use crate::quad::{integrate_pieces, Estimate, Tolerance};
use crate::scalar::Real;
use crate::sum::compensated_sum;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

const WINDOW_SIGMAS: f64 = 12.0;
const TAIL_RATIO_MAX: f64 = 1e-10;
const SPOT_CHECK_EVERY: usize = 50;
/// Decay (in log units) kept below the smallest radius of a segment touching 0.
const ORIGIN_DECAY: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormMethod {
    Quadrature,
    Laplace,
    GammaClosedForm,
}

impl NormMethod {
    fn name(self) -> &'static str {
        match self {
            Self::Quadrature => "quadrature",
            Self::Laplace => "laplace",
            Self::GammaClosedForm => "gamma_closed_form",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NormEntry<T> {
    pub j: usize,
    pub log_hj: T,
    pub method: NormMethod,
    pub peaks: Vec<T>,
    /// Estimated absolute error of `log_hj`.
    pub err: T,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NormTable<T> {
    pub n: usize,
    pub entries: Vec<NormEntry<T>>,
    /// Largest Laplace-vs-quadrature discrepancy seen on spot checks.
    pub spot_check_max: Option<T>,
}

impl<T: Real> NormTable<T> {
    pub fn sum_log(&self) -> T {
        compensated_sum(self.entries.iter().map(|e| e.log_hj))
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("schema=1\nj,log_hj,method,err\n");
        for e in &self.entries {
            let _ =
                writeln!(out, "{},{:e},{},{:e}", e.j, e.log_hj.to_f64_lossy(), e.method.name(), e.err.to_f64_lossy());
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartitionMethod {
    Quadrature,
    /// Laplace for bulk `j`, quadrature elsewhere and on every 50th `j`.
    LaplaceBulk,
}

/// `log Γ(j+1+α) − (j+1+α) log n`, the norms for `q = r²`.
pub fn ginibre_log_hj<T: Real>(j: usize, n: usize, alpha: T) -> T {
    let a = T::from_usize_lossy(j + 1) + alpha;
    ln_gamma(a) - a * T::from_usize_lossy(n).ln()
}

pub fn ginibre_table<T: Real>(n: usize, alpha: T) -> NormTable<T> {
    let entries = (0..n)
        .map(|j| NormEntry {
            j,
            log_hj: ginibre_log_hj(j, n, alpha),
            method: NormMethod::GammaClosedForm,
            peaks: vec![(T::from_usize_lossy(j + 1) + alpha).max(T::zero()).sqrt() / T::from_usize_lossy(n).sqrt()],
            err: T::zero(),
        })
        .collect();
    NormTable { n, entries, spot_check_max: None }
}

#[derive(Debug, Clone, Copy)]
enum Var<T> {
    /// Integration in `r`.
    Radius,
    /// `r = c e^{−y}` on `y ∈ [0, Y]`.
    Log { c: T, y_max: T },
}

/// Everything needed to evaluate the norms `h_j` for one `(P, h, pert, n)`.
#[derive(Debug, Clone)]
pub struct NormContext<'a, T: Real> {
    pub potential: &'a RadialPotential<T>,
    finder: PeakFinder<'a, T>,
    pub h: TestFunction,
    pub pert: Perturbation,
    pub n: usize,
    pub policy: CutoffPolicy,
    /// Localization: integrals restricted to `[lo, hi]`.
    pub cut: Option<(T, T)>,
    branch_levels: Vec<T>,
}

impl<'a, T: Real> NormContext<'a, T> {
    pub fn new(p: &'a RadialPotential<T>, h: TestFunction, pert: Perturbation, n: usize) -> Result<Self> {
        let finder = PeakFinder::new(p);
        Self::with_finder(finder, h, pert, n)
    }

    pub fn with_finder(finder: PeakFinder<'a, T>, h: TestFunction, pert: Perturbation, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Precondition("n must be positive".into()));
        }
        if n >= 2 && pert.s.abs() > (n as f64).ln() {
            return Err(Error::Precondition(format!("|s| = {} exceeds log n", pert.s.abs())));
        }
        if !(pert.alpha > -1.0) {
            return Err(Error::Domain(format!("alpha = {} must exceed -1", pert.alpha)));
        }
        let branch_levels = compute_droplet_with(&finder).map(|g| g.masses[..g.gaps()].to_vec()).unwrap_or_default();
        Ok(Self {
            potential: finder.potential,
            finder,
            h,
            pert,
            n,
            policy: CutoffPolicy::default(),
            cut: None,
            branch_levels,
        })
    }

    pub fn with_policy(mut self, policy: CutoffPolicy) -> Self {
        self.policy = policy;
        self
    }

    pub fn with_cut(mut self, lo: T, hi: T) -> Self {
        self.cut = Some((lo, hi));
        self
    }

    fn domain(&self) -> (T, T) {
        let p = self.potential;
        let lo = if p.finite_at_origin { T::zero() } else { p.r_min };
        self.cut.unwrap_or((lo, T::lit(2.0) * p.r_max))
    }

    fn exponent(&self, j: usize) -> T {
        T::from_usize_lossy(2 * j + 1) + T::lit(2.0 * self.pert.alpha)
    }

    /// `log(2 r^{1+2α+2j} e^{s h(r)} e^{−n q(r)})` with `log r` supplied separately.
    pub(crate) fn log_weight(&self, j: usize, r: T, lnr: T) -> T {
        let s = T::lit(self.pert.s);
        let hv = if self.pert.s == 0.0 {
            T::zero()
        } else if matches!(self.h, TestFunction::Log) {
            T::lit(2.0) * lnr
        } else {
            self.h.eval(0, r)
        };
        T::LN_2() + self.exponent(j) * lnr + s * hv - T::from_usize_lossy(self.n) * self.potential.q(r)
    }

    /// Maxima of the integrand, one per branch carrying one; `r = 0` when the maximum sits at the origin.
    fn branch_peaks(&self, j: usize) -> Vec<(T, T)> {
        let n = T::from_usize_lossy(self.n);
        let e = self.exponent(j);
        let tau = e / (T::lit(2.0) * n);
        let s = T::lit(self.pert.s);
        let tilt = self.pert.s != 0.0 && !self.h.is_constant();
        let mut out = Vec::new();
        for (b, br) in self.finder.branches.iter().enumerate() {
            if tau <= br.mass_lo {
                if br.lo == T::zero() && b == 0 {
                    out.push((T::zero(), T::infinity()));
                }
                continue;
            }
            if tau > br.mass_hi {
                continue;
            }
            let Some(mut r) = self.finder.peak_on(b, tau) else {
                continue;
            };
            if tilt && r > T::zero() {
                for _ in 0..30 {
                    let d1 = e / r + s * self.h.eval(1, r) - n * self.potential.dq(1, r);
                    let d2 = -e / (r * r) + s * self.h.eval(2, r) - n * self.potential.dq(2, r);
                    if !(d2 < T::zero()) {
                        break;
                    }
                    let next = r - d1 / d2;
                    if !(next > br.lo && next < br.hi) {
                        break;
                    }
                    let done = (next - r).abs() <= T::epsilon() * T::lit(8.0) * r;
                    r = next;
                    if done {
                        break;
                    }
                }
            }
            let v = if r > T::zero() { self.log_weight(j, r, r.ln()) } else { T::infinity() };
            out.push((r, v));
        }
        out
    }

    /// Peaks whose windows enter the integral: the significant ones, plus every peak near a branching index.
    pub(crate) fn window_peaks(&self, j: usize) -> Vec<T> {
        let (lo, hi) = self.domain();
        let all: Vec<(T, T)> = self.branch_peaks(j).into_iter().filter(|&(r, _)| r >= lo && r <= hi).collect();
        let vmax = all.iter().map(|&(_, v)| v).filter(|v| v.is_finite()).fold(T::neg_infinity(), T::max);
        let drop = T::lit((self.policy.c_cut * (self.n.max(2) as f64).ln()).max(60.0));
        let nf = T::from_usize_lossy(self.n);
        let jf = T::from_usize_lossy(j);
        let l_n = T::lit(self.policy.l_n(self.n.max(2)));
        let near_branching = self.branch_levels.iter().any(|&m| (jf - m * nf).abs() <= l_n);
        let mut peaks: Vec<T> = all
            .iter()
            .filter(|&&(_, v)| near_branching || !v.is_finite() || v >= vmax - drop)
            .map(|&(r, _)| r)
            .collect();
        if peaks.is_empty() {
            // Localized integral with every peak outside the cut: the maximum is at an end.
            let edge = |r: T| {
                if r > T::zero() {
                    self.log_weight(j, r, r.ln())
                } else {
                    T::neg_infinity()
                }
            };
            peaks.push(if edge(lo) >= edge(hi) { lo } else { hi });
        }
        peaks.sort_by(|a, b| a.partial_cmp(b).unwrap());
        peaks
    }

    pub(crate) fn windows(&self, peaks: &[T]) -> Vec<(T, T)> {
        let (lo, hi) = self.domain();
        let n = T::from_usize_lossy(self.n);
        let eps = T::lit(self.policy.eps_n(self.n.max(2)));
        let mut spans: Vec<(T, T)> = peaks
            .iter()
            .map(|&r| {
                let d2 = T::lit(4.0) * self.potential.lap(r)[0];
                let w = if d2 > T::zero() { eps.max(T::lit(WINDOW_SIGMAS) / (n * d2).sqrt()) } else { eps };
                ((r - w).max(lo), (r + w).min(hi))
            })
            .collect();
        spans.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let mut merged: Vec<(T, T)> = Vec::new();
        for s in spans {
            match merged.last_mut() {
                Some(last) if s.0 <= last.1 => last.1 = last.1.max(s.1),
                _ => merged.push(s),
            }
        }
        merged
    }

    fn variable(&self, j: usize, seg: (T, T), peaks: &[T]) -> Result<Var<T>> {
        if seg.0 > T::zero() {
            return Ok(Var::Radius);
        }
        let mut kappa = self.exponent(j) + T::one();
        if matches!(self.h, TestFunction::Log) {
            kappa += T::lit(2.0 * self.pert.s);
        }
        if !(kappa > T::zero()) {
            return Err(Error::Divergent(format!("norm h_{j} diverges at the origin")));
        }
        let c = seg.1;
        let y_peak = peaks.iter().filter(|&&r| r > T::zero() && r <= c).map(|&r| (c / r).ln()).fold(T::zero(), T::max);
        let y_max = (y_peak + T::lit(ORIGIN_DECAY) / kappa).min(T::lit(650.0));
        Ok(Var::Log { c, y_max })
    }

    /// Integrand in the segment's own variable, and the breakpoints there.
    fn segment_plan(&self, j: usize, seg: (T, T), peaks: &[T], var: Var<T>) -> (Vec<T>, Box<dyn Fn(T) -> T + '_>) {
        match var {
            Var::Radius => {
                let mut pts = vec![seg.0];
                pts.extend(peaks.iter().copied().filter(|&r| r > seg.0 && r < seg.1));
                pts.push(seg.1);
                (pts, Box::new(move |r: T| self.log_weight(j, r, r.ln())))
            }
            Var::Log { c, y_max } => {
                let lnc = c.ln();
                let mut ys: Vec<T> = peaks
                    .iter()
                    .filter(|&&r| r > T::zero() && r < c)
                    .map(|&r| (c / r).ln())
                    .filter(|&y| y < y_max)
                    .collect();
                ys.push(T::zero());
                ys.push(y_max);
                ys.sort_by(|a, b| a.partial_cmp(b).unwrap());
                ys.dedup();
                (
                    ys,
                    Box::new(move |y: T| {
                        let lnr = lnc - y;
                        self.log_weight(j, lnr.exp(), lnr) + lnr
                    }),
                )
            }
        }
    }

    /// `log ∫` over the given segments, with its estimated absolute error in log units.
    fn log_integral(&self, j: usize, segs: &[(T, T)], peaks: &[T], tol: Tolerance) -> Result<(T, T)> {
        let mut plans = Vec::with_capacity(segs.len());
        for &seg in segs {
            if seg.1 <= seg.0 {
                continue;
            }
            let var = self.variable(j, seg, peaks)?;
            plans.push(self.segment_plan(j, seg, peaks, var));
        }
        let mut reference = T::neg_infinity();
        for (pts, psi) in &plans {
            let (a, b) = (pts[0], pts[pts.len() - 1]);
            for k in 0..=64 {
                let x = a + (b - a) * T::from_usize_lossy(k) / T::lit(64.0);
                reference = reference.max(psi(x));
            }
            for &x in pts {
                reference = reference.max(psi(x));
            }
        }
        if !reference.is_finite() {
            return if plans.is_empty() || reference == T::neg_infinity() {
                Ok((T::neg_infinity(), T::zero()))
            } else {
                Err(Error::Domain(format!("integrand of h_{j} is not finite")))
            };
        }
        let mut values = Vec::new();
        let mut errors = Vec::new();
        for (pts, psi) in &plans {
            let est: Estimate<T> = integrate_pieces(|x| (psi(x) - reference).exp(), pts, tol)?;
            values.push(est.value);
            errors.push(est.error);
        }
        let total = compensated_sum(values);
        let err = compensated_sum(errors);
        if !(total > T::zero()) {
            return Ok((T::neg_infinity(), T::zero()));
        }
        Ok((reference + total.ln(), err / total))
    }

    fn check_j(&self, j: usize) -> Result<()> {
        if j >= self.n {
            return Err(Error::Precondition(format!("j = {j} must be below n = {}", self.n)));
        }
        Ok(())
    }

    pub fn norm_hj_quadrature(&self, j: usize) -> Result<NormEntry<T>> {
        self.check_j(j)?;
        let peaks = self.window_peaks(j);
        let segs = self.windows(&peaks);
        let tol = Tolerance { abs: 1e-18, rel: 1e-13, max_segments: 4000 };
        let (log_hj, err) = self.log_integral(j, &segs, &peaks, tol)?;
        if !log_hj.is_finite() {
            return Err(Error::Domain(format!("h_{j} is not positive and finite")));
        }

        let (lo, hi) = self.domain();
        let outer = if self.cut.is_some() { hi } else { T::lit(2.0) * hi };
        let mut gaps = Vec::new();
        let mut cursor = lo;
        for &(a, b) in &segs {
            if a > cursor {
                gaps.push((cursor, a));
            }
            cursor = b;
        }
        if outer > cursor {
            gaps.push((cursor, outer));
        }
        if !gaps.is_empty() {
            let all: Vec<T> = self.branch_peaks(j).into_iter().map(|(r, _)| r).collect();
            let (log_tail, _) =
                self.log_integral(j, &gaps, &all, Tolerance { abs: 0.0, rel: 1e-3, max_segments: 400 })?;
            let ratio = (log_tail - log_hj).exp();
            if ratio > T::lit(TAIL_RATIO_MAX) {
                return Err(Error::TailMass { j, ratio: ratio.to_f64_lossy() });
            }
        }
        Ok(NormEntry { j, log_hj, method: NormMethod::Quadrature, peaks, err })
    }

    /// `log` of the mass of `h_j` below and above `split`, each integrated over its whole side.
    pub fn log_mass_split(&self, j: usize, split: T) -> Result<(T, T)> {
        self.check_j(j)?;
        let (lo, hi) = self.domain();
        if !(split > lo && split < hi) {
            return Err(Error::Precondition("split point outside the domain".into()));
        }
        let peaks: Vec<T> = self.branch_peaks(j).into_iter().map(|(r, _)| r).collect();
        let tol = Tolerance { abs: 1e-18, rel: 1e-12, max_segments: 4000 };
        let inner = self.log_integral(j, &[(lo, split)], &peaks, tol)?.0;
        let outer = self.log_integral(j, &[(split, hi)], &peaks, tol)?.0;
        Ok((inner, outer))
    }

    /// Laplace form `sqrt(2π/(n d₂)) f(r) e^{−n g_τ(r)} (1 + a/n)` in log space, `τ = j/n`.
    pub fn norm_hj_laplace(&self, j: usize) -> Result<T> {
        self.check_j(j)?;
        let n = T::from_usize_lossy(self.n);
        let tau = T::from_usize_lossy(j) / n;
        let set = self.finder.local_peaks(tau)?;
        let sig = significant_peaks(&set, &self.policy, self.n.max(2));
        if sig.len() != 1 {
            return Err(Error::MultiPeak(sig.len()));
        }
        let r = sig[0];
        if !(r > T::zero()) {
            return Err(Error::Singular { r: 0.0, value: 0.0 });
        }
        let [d2, d3, d4] = self.potential.peak_derivatives(r)?;
        let c = T::lit;
        let s = c(self.pert.s);
        let e = c(1.0 + 2.0 * self.pert.alpha);
        let log_f = T::LN_2() + e * r.ln() + s * self.h.eval(0, r);
        let f1 = e / r + s * self.h.eval(1, r);
        let f2 = f1 * f1 - e / (r * r) + s * self.h.eval(2, r);
        let a = -d4 / (c(8.0) * d2 * d2) + c(5.0) * d3 * d3 / (c(24.0) * d2 * d2 * d2) + f2 / (c(2.0) * d2)
            - f1 * d3 / (c(2.0) * d2 * d2);
        let gauss = c(0.5) * (T::TAU() / (n * d2)).ln();
        Ok(gauss + log_f - n * self.potential.g(tau, r) + (a / n).ln_1p())
    }

    fn is_bulk(&self, j: usize) -> bool {
        if j == 0 {
            return false;
        }
        let nf = T::from_usize_lossy(self.n);
        let jf = T::from_usize_lossy(j);
        let l_n = T::lit(self.policy.l_n(self.n.max(2)));
        !self.branch_levels.iter().any(|&m| (jf - m * nf).abs() <= l_n)
    }

    /// `log Z_n = log n! + Σ log h_j`.
    pub fn log_partition_exact(&self, method: PartitionMethod) -> Result<(T, NormTable<T>)> {
        if self.n < 2 {
            return Err(Error::Precondition("log_partition_exact needs n >= 2".into()));
        }
        let results: Vec<Result<(NormEntry<T>, Option<T>)>> = (0..self.n)
            .into_par_iter()
            .map(|j| {
                if method == PartitionMethod::LaplaceBulk && self.is_bulk(j) {
                    if let Ok(log_hj) = self.norm_hj_laplace(j) {
                        let spot = if j % SPOT_CHECK_EVERY == 0 {
                            Some((self.norm_hj_quadrature(j)?.log_hj - log_hj).abs())
                        } else {
                            None
                        };
                        let peaks = self.window_peaks(j);
                        let err = T::from_usize_lossy(self.n).powi(-2);
                        return Ok((NormEntry { j, log_hj, method: NormMethod::Laplace, peaks, err }, spot));
                    }
                }
                Ok((self.norm_hj_quadrature(j)?, None))
            })
            .collect();
        let mut entries = Vec::with_capacity(self.n);
        let mut spot_check_max: Option<T> = None;
        for r in results {
            let (e, spot) = r?;
            if let Some(d) = spot {
                spot_check_max = Some(spot_check_max.map_or(d, |m| m.max(d)));
            }
            entries.push(e);
        }
        let table = NormTable { n: self.n, entries, spot_check_max };
        let log_z = compensated_sum([ln_factorial::<T>(self.n), table.sum_log()]);
        Ok((log_z, table))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Theorem {
    Regular,
    Conical,
    Shallow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorOrder {
    /// `O(1/n)`.
    InverseN,
    /// `O(n^{−1/12} log³ n)`.
    CentralDisk,
}

impl ErrorOrder {
    pub fn size(self, n: usize) -> f64 {
        let n = n as f64;
        match self {
            Self::InverseN => 1.0 / n,
            Self::CentralDisk => n.powf(-1.0 / 12.0) * n.ln().powi(3),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExpansionBreakdown<T> {
    pub theorem: Theorem,
    pub n: usize,
    /// `−n² I_Q`.
    pub c1: T,
    /// `n log n / 2`.
    pub c2: T,
    /// `n · [...]`.
    pub c3: T,
    /// Coefficient times `log n`.
    pub c4: T,
    pub c5: T,
    pub gn: T,
    pub error_order: ErrorOrder,
    pub total: T,
    pub warnings: Vec<String>,
}

impl<T: Real> ExpansionBreakdown<T> {
    #[allow(clippy::too_many_arguments)]
    fn assemble(theorem: Theorem, n: usize, c1: T, c2: T, c3: T, c4: T, c5: T, gn: T, order: ErrorOrder) -> Self {
        let total = c1 + c2 + c3 + c4 + c5 + gn;
        Self { theorem, n, c1, c2, c3, c4, c5, gn, error_order: order, total, warnings: Vec::new() }
    }

    pub fn total_without_gn(&self) -> T {
        self.c1 + self.c2 + self.c3 + self.c4 + self.c5
    }
}

/// Droplet functionals shared by every `n`.
#[derive(Debug, Clone)]
pub struct ExpansionInputs<'a, T: Real> {
    pub potential: &'a RadialPotential<T>,
    pub geometry: &'a DropletGeometry<T>,
    pub h: TestFunction,
    pub pert: Perturbation,
    pub energy: T,
    pub entropy: T,
    pub fq: T,
    pub h_moment: T,
    pub e_h: T,
    /// `v_{ν,h}` per component.
    pub v_h: Vec<T>,
    pub disk: Option<DiskTerms<T>>,
}

/// Terms present only for a central disk.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DiskTerms<T> {
    pub ell_moment: T,
    pub e_ell: T,
    /// `Σ_{ν≥1} v_{ν,ℓ}`.
    pub v_ell_outer: T,
    /// `Σ_{ν≥1} 2 (h(b_ν) − h(a_ν))`.
    pub cross_outer: T,
    pub log_b0_lap0: T,
    pub h_jump: T,
}

impl<'a, T: Real> ExpansionInputs<'a, T> {
    pub fn new(
        p: &'a RadialPotential<T>,
        g: &'a DropletGeometry<T>,
        h: TestFunction,
        pert: Perturbation,
    ) -> Result<Self> {
        let energy = energy_iq(p, g)?;
        let entropy = entropy_eq(p, g)?;
        let fq = fq_total(p, g)?.0;
        let h_moment = sigma_moment(p, g, &h)?;
        let e_h = boundary_expectation(p, g, &h, BoundaryVariant::Total)?;
        let v_h = (0..g.components.len())
            .map(|nu| variance_v(p, g, &h, VarianceVariant::Component { nu }))
            .collect::<Result<Vec<T>>>()?;
        let disk = if g.case == DropletCase::CentralDisk {
            let b0 = g.components[0].1;
            let mut v_outer = Vec::new();
            let mut cross = Vec::new();
            for (nu, &(a, b)) in g.components.iter().enumerate().skip(1) {
                v_outer.push(variance_v(p, g, &TestFunction::Log, VarianceVariant::Component { nu })?);
                cross.push(T::lit(2.0) * (h.eval::<T>(0, b) - h.eval::<T>(0, a)));
            }
            Some(DiskTerms {
                ell_moment: ell_moment_closed_form(p, g),
                e_ell: boundary_expectation(p, g, &TestFunction::Log, BoundaryVariant::Total)?,
                v_ell_outer: compensated_sum(v_outer),
                cross_outer: compensated_sum(cross),
                log_b0_lap0: (b0 * b0 * p.lap(T::zero())[0]).ln(),
                h_jump: h.eval::<T>(0, b0) - h.eval::<T>(0, T::zero()),
            })
        } else {
            None
        };
        Ok(Self { potential: p, geometry: g, h, pert, energy, entropy, fq, h_moment, e_h, v_h, disk })
    }

    fn order(&self) -> ErrorOrder {
        match self.geometry.case {
            DropletCase::CentralDisk => ErrorOrder::CentralDisk,
            DropletCase::Annular => ErrorOrder::InverseN,
        }
    }

    fn gn(&self, n: usize) -> Result<T> {
        if self.geometry.gaps() == 0 {
            return Ok(T::zero());
        }
        let gc = gap_constants(self.potential, self.geometry, &self.h, &self.pert, n)?;
        displacement_gn(&gc.terms())
    }

    fn check_s(&self, n: usize) -> Result<()> {
        if n < 2 || self.pert.s.abs() > (n as f64).ln() {
            return Err(Error::Precondition(format!("need n >= 2 and |s| <= log n (n = {n})")));
        }
        Ok(())
    }

    pub fn expansion_regular(&self, n: usize) -> Result<ExpansionBreakdown<T>> {
        if !self.geometry.outposts.is_empty() {
            return Err(Error::Precondition("droplet has outposts; use the outpost pipeline".into()));
        }
        if self.pert.alpha != 0.0 {
            return Err(Error::Precondition("regular expansion needs alpha = 0".into()));
        }
        self.check_s(n)?;
        let c = T::lit;
        let nf = T::from_usize_lossy(n);
        let ln_n = nf.ln();
        let s = c(self.pert.s);
        let chi = T::from_usize_lossy(self.geometry.euler_char as usize);
        let v_h = compensated_sum(self.v_h.iter().copied());
        let c1 = -nf * nf * self.energy;
        let c2 = c(0.5) * nf * ln_n;
        let c3 = nf * (c(0.5 * LN_2PI) - T::one() - c(0.5) * self.entropy + s * self.h_moment);
        let c4 = (c(6.0) - chi) / c(12.0) * ln_n;
        let c5 =
            compensated_sum([chi * c(ZETA_PRIME_M1), self.fq, c(0.5 * LN_2PI), s * self.e_h, c(0.5) * s * s * v_h]);
        let gn = self.gn(n)?;
        Ok(ExpansionBreakdown::assemble(Theorem::Regular, n, c1, c2, c3, c4, c5, gn, self.order()))
    }

    pub fn expansion_conical(&self, n: usize) -> Result<ExpansionBreakdown<T>> {
        let disk = self.disk.ok_or(Error::Geometry("conical expansion needs a central disk droplet".into()))?;
        if !self.geometry.outposts.is_empty() {
            return Err(Error::Precondition("droplet has outposts; use the outpost pipeline".into()));
        }
        self.check_s(n)?;
        let c = T::lit;
        let nf = T::from_usize_lossy(n);
        let ln_n = nf.ln();
        let s = c(self.pert.s);
        let al = c(self.pert.alpha);
        let v_outer_h = compensated_sum(self.v_h.iter().skip(1).copied());
        let v_outer_k = s * s * v_outer_h + al * al * disk.v_ell_outer + s * al * disk.cross_outer;
        let log_g = log_barnes_g(T::one() + al)?;
        let c1 = -nf * nf * self.energy;
        let c2 = c(0.5) * nf * ln_n;
        let c3 = nf * (c(0.5 * LN_2PI) - T::one() - c(0.5) * self.entropy + s * self.h_moment + al * disk.ell_moment);
        let c4 = (c(5.0 / 12.0) + c(0.5) * al * al) * ln_n;
        let c5 = compensated_sum([
            c(ZETA_PRIME_M1),
            -log_g,
            self.fq,
            c(0.5) * (T::one() + al) * c(LN_2PI),
            s * self.e_h + al * disk.e_ell,
            -c(0.5) * al,
            c(0.5) * s * s * self.v_h[0],
            c(0.5) * v_outer_k,
            c(0.5) * al * al * disk.log_b0_lap0,
            al * s * disk.h_jump,
        ]);
        let gn = self.gn(n)?;
        let mut out = ExpansionBreakdown::assemble(Theorem::Conical, n, c1, c2, c3, c4, c5, gn, self.order());
        if -log_g > c(10.0) {
            out.warnings.push(format!("-log G(1+alpha) = {} is large", -log_g));
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum OutpostSide {
    /// Outpost outside the droplet, `t > b`.
    Outer,
    /// Outpost inside the hole, `t < a`.
    Inner,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OutpostParams<T> {
    pub side: OutpostSide,
    pub t: T,
    pub rho: T,
    pub theta: T,
    pub c: T,
    /// Boundary of the localized domain, midway between droplet and outpost.
    pub split: T,
}

pub fn outpost_params<T: Real>(
    p: &RadialPotential<T>,
    g: &DropletGeometry<T>,
    h: &TestFunction,
) -> Result<OutpostParams<T>> {
    if g.outposts.len() != 1 {
        return Err(Error::Precondition(format!("exactly one outpost supported, found {}", g.outposts.len())));
    }
    if g.components.len() != 1 {
        return Err(Error::Precondition("outpost pipeline needs a one-component droplet".into()));
    }
    let t = g.outposts[0];
    let (a, b) = g.components[0];
    let half = T::lit(0.5);
    if t > b {
        Ok(OutpostParams {
            side: OutpostSide::Outer,
            t,
            rho: b / t,
            theta: (p.lap(b)[0] / p.lap(t)[0]).sqrt(),
            c: h.eval::<T>(0, t) - h.eval::<T>(0, b),
            split: (b + t) * half,
        })
    } else if t < a {
        let theta = if t > T::zero() { (p.lap(t)[0] / p.lap(a)[0]).sqrt() } else { T::one() };
        Ok(OutpostParams {
            side: OutpostSide::Inner,
            t,
            rho: t / a,
            theta,
            c: h.eval::<T>(0, a) - h.eval::<T>(0, t),
            split: (a + t) * half,
        })
    } else {
        Err(Error::Geometry("outpost lies inside the droplet".into()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OutpostReport<T> {
    pub n: usize,
    pub s: f64,
    pub params: OutpostParams<T>,
    pub predicted: T,
    pub measured: T,
}

/// `log(−μ(s)ρ; ρ²)_∞` with `μ(s) = θ e^{s c}`; zero when `ρ = 0`.
pub fn predicted_outpost_log<T: Real>(params: &OutpostParams<T>, s: f64) -> Result<T> {
    if params.rho == T::zero() {
        return Ok(T::zero());
    }
    let mu = params.theta * (T::lit(s) * params.c).exp();
    qpoch_infinite_log(-(mu * params.rho), params.rho * params.rho)
}

/// Measured `log Z_{n,sh} − log Z̃_{n,sh}` against the outpost prediction.
pub fn outpost_log_ratio<T: Real>(
    p: &RadialPotential<T>,
    g: &DropletGeometry<T>,
    h: &TestFunction,
    s: f64,
    n: usize,
    policy: CutoffPolicy,
) -> Result<OutpostReport<T>> {
    let params = outpost_params(p, g, h)?;
    let pert = Perturbation { s, alpha: 0.0 };
    let full = NormContext::new(p, h.clone(), pert, n)?.with_policy(policy);
    let (lo, hi) = match params.side {
        OutpostSide::Outer => (T::zero(), params.split),
        OutpostSide::Inner => (params.split, p.r_max),
    };
    let local = full.clone().with_cut(lo, hi);
    let diffs: Vec<T> = (0..n)
        .into_par_iter()
        .map(|j| Ok(full.norm_hj_quadrature(j)?.log_hj - local.norm_hj_quadrature(j)?.log_hj))
        .collect::<Result<_>>()?;
    let measured = compensated_sum(diffs);
    let predicted = predicted_outpost_log(&params, s)?;
    Ok(OutpostReport { n, s, params, predicted, measured })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareRow<T> {
    pub n: usize,
    pub exact: T,
    pub expansion: T,
    pub residual: T,
    /// Residual divided by the claimed error order.
    pub scaled: T,
    /// `|scaled|` grew relative to the previous row.
    pub rising: bool,
}

pub fn compare_report<T: Real>(runs: &[(T, ExpansionBreakdown<T>)]) -> Vec<CompareRow<T>> {
    let mut rows: Vec<CompareRow<T>> = Vec::with_capacity(runs.len());
    for (exact, b) in runs {
        let residual = *exact - b.total;
        let scaled = residual / T::lit(b.error_order.size(b.n));
        let rising = rows.last().is_some_and(|prev| scaled.abs() > prev.scaled.abs());
        rows.push(CompareRow { n: b.n, exact: *exact, expansion: b.total, residual, scaled, rising });
    }
    rows
}

pub fn compare_csv<T: Real>(rows: &[CompareRow<T>]) -> String {
    let mut out = String::from("schema=1\nn,log_z_exact,expansion,residual,scaled_residual,rising\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{:e},{:e},{:e},{:e},{}",
            r.n,
            r.exact.to_f64_lossy(),
            r.expansion.to_f64_lossy(),
            r.residual.to_f64_lossy(),
            r.scaled.to_f64_lossy(),
            r.rising
        );
    }
    out
}
