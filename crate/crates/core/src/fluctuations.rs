//! Exact radial sampling and empirical cumulant generating functions.
//!
//! The moduli `R_0, …, R_{n−1}` of a radial ensemble are independent, the `j`-th
//! with density proportional to `2 r^{1+2α+2j} e^{s h(r)} e^{−n q(r)}`.

use crate::droplet::DropletGeometry;
use crate::error::{Error, Result};
use crate::free_energy::{NormContext, OutpostParams};
use crate::functionals::sigma_moment;
use crate::heine::HeineDist;
use crate::potential::{Perturbation, RadialPotential, TestFunction};
use crate::quad::{gauss10, kronrod_fixed};
use crate::sum::compensated_sum;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;
use std::io::{Read, Write};
use std::sync::atomic::{AtomicUsize, Ordering};

/// Log-density drop at which the sampling domain is truncated.
const DROP: f64 = 45.0;
const GRID: usize = 512;
const PANELS: usize = 64;
const MAX_REJECTIONS: usize = 10_000;
const MIN_ACCEPTANCE: f64 = 0.1;
const SIGMA_INFLATION: f64 = 1.2;
const UNIFORM_FLOOR: f64 = 0.02;

#[derive(Debug, Clone)]
struct InverseTable {
    edges: Vec<(f64, f64)>,
    cdf: Vec<f64>,
}

#[derive(Debug, Clone)]
struct Rejection {
    mode: f64,
    sigma: f64,
    lo: f64,
    hi: f64,
    log_k: f64,
}

#[derive(Debug, Clone)]
struct ModulusLaw {
    reference: f64,
    rejection: Option<Rejection>,
    inverse: InverseTable,
    acceptance: f64,
}

#[derive(Debug, Default, Serialize)]
pub struct SamplerLog {
    pub rejection_laws: usize,
    pub inverse_laws: usize,
    pub min_acceptance: f64,
    /// Proposals where the density exceeded the envelope.
    pub envelope_violations: usize,
    /// Draws that hit the rejection cap and used the inverse table.
    pub fallbacks: usize,
}

/// Per-`j` samplers for the moduli, built once and shared read-only.
pub struct ModulusSampler<'a> {
    ctx: &'a NormContext<'a, f64>,
    laws: Vec<ModulusLaw>,
    violations: AtomicUsize,
    fallbacks: AtomicUsize,
}

/// Maximal runs of grid points where the log-density is within `DROP` of the top.
fn islands(psi: &dyn Fn(f64) -> f64, lo: f64, hi: f64, top: f64) -> Vec<(f64, f64)> {
    let step = (hi - lo) / GRID as f64;
    let mut out = Vec::new();
    let mut run: Option<usize> = None;
    for i in 0..=GRID + 1 {
        let above = i <= GRID && psi(lo + step * i as f64) >= top - DROP;
        match (above, run) {
            (true, None) => run = Some(i),
            (false, Some(a)) => {
                let b = i - 1;
                out.push(((lo + step * a.saturating_sub(1) as f64).max(lo), (lo + step * (b + 1) as f64).min(hi)));
                run = None;
            }
            _ => {}
        }
    }
    out
}

impl<'a> ModulusSampler<'a> {
    pub fn new(ctx: &'a NormContext<'a, f64>) -> Result<Self> {
        if ctx.pert.alpha < -0.5 {
            return Err(Error::Precondition("sampler needs alpha >= -1/2".into()));
        }
        let laws = (0..ctx.n).into_par_iter().map(|j| Self::law(ctx, j)).collect::<Result<Vec<_>>>()?;
        Ok(Self { ctx, laws, violations: AtomicUsize::new(0), fallbacks: AtomicUsize::new(0) })
    }

    fn psi(ctx: &NormContext<'_, f64>, j: usize, x: f64) -> f64 {
        if x > 0.0 {
            ctx.log_weight(j, x, x.ln())
        } else {
            f64::NEG_INFINITY
        }
    }

    fn law(ctx: &NormContext<'_, f64>, j: usize) -> Result<ModulusLaw> {
        let peaks = ctx.window_peaks(j);
        let windows = ctx.windows(&peaks);
        let psi = |x: f64| Self::psi(ctx, j, x);
        let mut top = peaks.iter().map(|&r| psi(r)).fold(f64::NEG_INFINITY, f64::max);
        for &(a, b) in &windows {
            for i in 0..=GRID {
                top = top.max(psi(a + (b - a) * i as f64 / GRID as f64));
            }
        }
        if !top.is_finite() {
            return Err(Error::Sampler(j));
        }
        let spans: Vec<(f64, f64)> = windows.iter().flat_map(|&(a, b)| islands(&psi, a, b, top)).collect();
        let density = |x: f64| (psi(x) - top).exp();

        let mut edges = Vec::with_capacity(spans.len() * PANELS);
        for &(a, b) in &spans {
            let w = (b - a) / PANELS as f64;
            for k in 0..PANELS {
                edges.push((a + w * k as f64, a + w * (k + 1) as f64));
            }
        }
        let masses: Vec<f64> = edges.iter().map(|&(a, b)| kronrod_fixed(density, a, b)).collect();
        let mut cdf = Vec::with_capacity(masses.len());
        let mut acc = crate::sum::NeumaierSum::new();
        for &m in &masses {
            acc.add(m);
            cdf.push(acc.total());
        }
        let total = acc.total();
        if !(total > 0.0) {
            return Err(Error::Sampler(j));
        }
        let inverse = InverseTable { edges, cdf };

        let mut rejection = None;
        let mut acceptance = 0.0;
        let interior: Vec<f64> = peaks.iter().copied().filter(|&r| r > 0.0 && psi(r) >= top - DROP).collect();
        if spans.len() == 1 && interior.len() == 1 {
            let (lo, hi) = spans[0];
            let mut mode = interior[0];
            let mut best = psi(mode);
            let step = (hi - lo) / GRID as f64;
            let grid: Vec<(f64, f64)> = (0..=GRID).map(|i| lo + step * i as f64).map(|x| (x, psi(x))).collect();
            for &(x, v) in &grid {
                if v > best {
                    best = v;
                    mode = x;
                }
            }
            let h = 1e-4 * mode.max(1e-3);
            let curv = -(psi(mode + h) - 2.0 * psi(mode) + psi(mode - h)) / (h * h);
            let mut var = if curv > 0.0 { SIGMA_INFLATION * SIGMA_INFLATION / curv } else { step * step };
            for &(x, v) in &grid {
                let drop = best - v;
                if drop > 1e-9 {
                    var = var.max((x - mode).powi(2) / (2.0 * drop));
                }
            }
            let sigma = var.sqrt();
            let len = hi - lo;
            let proposal = |x: f64| {
                let z = (x - mode) / sigma;
                (1.0 - UNIFORM_FLOOR) * (-0.5 * z * z).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt())
                    + UNIFORM_FLOOR / len
            };
            let log_k = grid.iter().map(|&(x, v)| v - best - proposal(x).ln()).fold(f64::NEG_INFINITY, f64::max)
                + 0.02f64.ln_1p();
            acceptance = total * (top - best).exp() / log_k.exp();
            if acceptance >= MIN_ACCEPTANCE {
                rejection = Some(Rejection { mode, sigma, lo, hi, log_k: log_k + best - top });
            }
        }
        Ok(ModulusLaw { reference: top, rejection, inverse, acceptance })
    }

    pub fn n(&self) -> usize {
        self.laws.len()
    }

    pub fn log(&self) -> SamplerLog {
        let rej: Vec<f64> = self.laws.iter().filter(|l| l.rejection.is_some()).map(|l| l.acceptance).collect();
        SamplerLog {
            rejection_laws: rej.len(),
            inverse_laws: self.laws.len() - rej.len(),
            min_acceptance: rej.iter().copied().fold(f64::INFINITY, f64::min),
            envelope_violations: self.violations.load(Ordering::Relaxed),
            fallbacks: self.fallbacks.load(Ordering::Relaxed),
        }
    }

    fn density(&self, j: usize, x: f64) -> f64 {
        (Self::psi(self.ctx, j, x) - self.laws[j].reference).exp()
    }

    fn draw_inverse<R: Rng>(&self, j: usize, rng: &mut R) -> Result<f64> {
        let t = &self.laws[j].inverse;
        let total = *t.cdf.last().unwrap();
        let u: f64 = rng.gen::<f64>() * total;
        let k = t.cdf.partition_point(|&c| c < u).min(t.cdf.len() - 1);
        let before = if k == 0 { 0.0 } else { t.cdf[k - 1] };
        let (a, b) = t.edges[k];
        let target = (u - before).max(0.0);
        let mass = t.cdf[k] - before;
        let (xs, ws) = gauss10();
        let partial = |x: f64| {
            let (c, h) = (0.5 * (a + x), 0.5 * (x - a));
            h * xs.iter().zip(&ws).map(|(&xi, &wi)| wi * self.density(j, c + h * xi)).sum::<f64>()
        };
        let (mut lo, mut hi) = (a, b);
        let mut x = a + (b - a) * (target / mass).clamp(0.0, 1.0);
        for _ in 0..60 {
            let f = partial(x) - target;
            if f.abs() <= 1e-13 * mass.max(f64::MIN_POSITIVE) {
                return Ok(x);
            }
            if f > 0.0 {
                hi = x;
            } else {
                lo = x;
            }
            let d = self.density(j, x);
            let newton = x - f / d;
            x = if d > 0.0 && newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
            if hi - lo <= 4.0 * f64::EPSILON * hi {
                return Ok(x);
            }
        }
        if x.is_finite() {
            Ok(x)
        } else {
            Err(Error::Sampler(j))
        }
    }

    fn draw<R: Rng>(&self, j: usize, rng: &mut R) -> Result<f64> {
        let law = &self.laws[j];
        let Some(rj) = &law.rejection else {
            return self.draw_inverse(j, rng);
        };
        let len = rj.hi - rj.lo;
        let norm = rj.sigma * (2.0 * std::f64::consts::PI).sqrt();
        for _ in 0..MAX_REJECTIONS {
            let x = if rng.gen::<f64>() < UNIFORM_FLOOR {
                rj.lo + len * rng.gen::<f64>()
            } else {
                rj.mode + rj.sigma * rng.sample::<f64, _>(StandardNormal)
            };
            let u: f64 = rng.gen();
            if !(x > rj.lo && x < rj.hi) {
                continue;
            }
            let z = (x - rj.mode) / rj.sigma;
            let q = (1.0 - UNIFORM_FLOOR) * (-0.5 * z * z).exp() / norm + UNIFORM_FLOOR / len;
            let ratio = (Self::psi(self.ctx, j, x) - law.reference - rj.log_k).exp() / q;
            if ratio > 1.0 {
                self.violations.fetch_add(1, Ordering::Relaxed);
            }
            if u < ratio {
                return Ok(x);
            }
        }
        self.fallbacks.fetch_add(1, Ordering::Relaxed);
        self.draw_inverse(j, rng)
    }

    /// Moduli of sample `sample`; stream keyed by `(seed, sample, j)`.
    pub fn kostlan_sample(&self, seed: u64, sample: u64) -> Result<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(sample);
        (0..self.laws.len())
            .map(|j| {
                rng.set_word_pos((j as u128) << 40);
                self.draw(j, &mut rng)
            })
            .collect()
    }

    /// Applies `stat` to `n_samples` samples in parallel; returns one column per output of `stat`.
    pub fn run<F>(&self, seed: u64, n_samples: usize, stat: F) -> Result<Vec<Vec<f64>>>
    where
        F: Fn(&[f64]) -> Vec<f64> + Sync,
    {
        let rows: Vec<Vec<f64>> = (0..n_samples as u64)
            .into_par_iter()
            .map(|i| Ok(stat(&self.kostlan_sample(seed, i)?)))
            .collect::<Result<_>>()?;
        let width = rows.first().map_or(0, Vec::len);
        Ok((0..width).map(|k| rows.iter().map(|r| r[k]).collect()).collect())
    }
}

/// `fluct_n h = Σ h(R_j) − n ∫ h dσ`.
#[derive(Debug, Clone, Serialize)]
pub struct FluctStatistic {
    pub h: TestFunction,
    pub center: f64,
}

impl FluctStatistic {
    pub fn new(p: &RadialPotential<f64>, g: &DropletGeometry<f64>, h: TestFunction, n: usize) -> Result<Self> {
        let center = n as f64 * sigma_moment(p, g, &h)?;
        Ok(Self { h, center })
    }

    pub fn eval(&self, moduli: &[f64]) -> f64 {
        if self.h.is_constant() {
            return 0.0;
        }
        compensated_sum(moduli.iter().map(|&r| self.h.eval::<f64>(0, r))) - self.center
    }
}

pub fn fluct_statistic(moduli: &[f64], stat: &FluctStatistic) -> f64 {
    stat.eval(moduli)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CgfEstimate {
    pub s: f64,
    pub value: f64,
    pub se: f64,
    /// Share of the total weight carried by the top 1% of samples.
    pub top_share: f64,
    pub weight_warning: bool,
}

/// `log mean(e^{s x})` with a delta-method standard error.
pub fn empirical_cgf(values: &[f64], s_grid: &[f64]) -> Result<Vec<CgfEstimate>> {
    let n = values.len();
    if n < 2 {
        return Err(Error::Precondition("empirical_cgf needs at least two samples".into()));
    }
    s_grid
        .iter()
        .map(|&s| {
            if s == 0.0 {
                return Ok(CgfEstimate { s, value: 0.0, se: 0.0, top_share: 0.0, weight_warning: false });
            }
            let m = values.iter().map(|&x| s * x).fold(f64::NEG_INFINITY, f64::max);
            let mut w: Vec<f64> = values.iter().map(|&x| (s * x - m).exp()).collect();
            let sum = compensated_sum(w.iter().copied());
            if !(sum.is_finite() && sum > 0.0) {
                return Err(Error::DegenerateWeights(s));
            }
            let mean = sum / n as f64;
            let var = compensated_sum(w.iter().map(|&x| (x - mean).powi(2))) / (n - 1) as f64;
            w.sort_by(|a, b| b.partial_cmp(a).unwrap());
            let top = compensated_sum(w[..(n / 100).max(1)].iter().copied()) / sum;
            if top >= 0.999 {
                return Err(Error::DegenerateWeights(s));
            }
            Ok(CgfEstimate {
                s,
                value: m + mean.ln(),
                se: (var / n as f64).sqrt() / mean,
                top_share: top,
                weight_warning: top > 0.2,
            })
        })
        .collect()
}

/// Finite-`n` CGF of `fluct_n h` from exact norms: `Σ_j [log h_j(s) − log h_j(0)] − s·center`.
pub fn exact_fluct_cgf(p: &RadialPotential<f64>, stat: &FluctStatistic, n: usize, s: f64, alpha: f64) -> Result<f64> {
    let log_z = |s: f64| -> Result<f64> {
        let ctx = NormContext::new(p, stat.h.clone(), Perturbation::new(s, alpha)?, n)?;
        let v: Vec<f64> =
            (0..n).into_par_iter().map(|j| Ok(ctx.norm_hj_quadrature(j)?.log_hj)).collect::<Result<_>>()?;
        Ok(compensated_sum(v))
    };
    if s == 0.0 {
        return Ok(0.0);
    }
    Ok(log_z(s)? - log_z(0.0)? - s * stat.center)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CgfRow {
    pub s: f64,
    pub estimate: f64,
    pub se: f64,
    pub predicted: f64,
    pub z: f64,
    pub band: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CgfReport {
    pub rows: Vec<CgfRow>,
    pub pass: bool,
}

impl CgfReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("schema=1\ns,cgf_empirical,se,cgf_predicted,z,band,pass\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{:e},{:e},{:e},{:.4},{:e},{}\n",
                r.s, r.estimate, r.se, r.predicted, r.z, r.band, r.pass
            ));
        }
        out
    }
}

/// Passes where `|F̂(s) − F_pred(s)| ≤ 3 SE + band` for every `s`.
pub fn cgf_comparison<F>(values: &[f64], s_grid: &[f64], predicted: F, band: f64) -> Result<CgfReport>
where
    F: Fn(f64) -> Result<f64>,
{
    let est = empirical_cgf(values, s_grid)?;
    let mut rows = Vec::with_capacity(est.len());
    for e in est {
        let pred = predicted(e.s)?;
        let diff = e.value - pred;
        let z = if e.se > 0.0 { diff / e.se } else { 0.0 };
        let pass = diff.abs() <= 3.0 * e.se + band;
        rows.push(CgfRow { s: e.s, estimate: e.value, se: e.se, predicted: pred, z, band, pass });
    }
    let pass = rows.iter().all(|r| r.pass);
    Ok(CgfReport { rows, pass })
}

/// Law of a sum of independent Bernoulli variables.
pub fn poisson_binomial(p: &[f64]) -> Vec<f64> {
    let mut pmf = vec![1.0];
    for &q in p {
        let mut next = vec![0.0; pmf.len() + 1];
        for (k, &v) in pmf.iter().enumerate() {
            next[k] += v * (1.0 - q);
            next[k + 1] += v * q;
        }
        pmf = next;
    }
    while pmf.len() > 1 && *pmf.last().unwrap() < 1e-300 {
        pmf.pop();
    }
    pmf
}

pub fn total_variation(a: &[f64], b: &[f64]) -> f64 {
    let len = a.len().max(b.len());
    0.5 * (0..len).map(|k| (a.get(k).unwrap_or(&0.0) - b.get(k).unwrap_or(&0.0)).abs()).sum::<f64>()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CountLaw {
    pub n: usize,
    pub samples: usize,
    pub empirical: Vec<f64>,
    pub heine: Vec<f64>,
    /// Exact finite-`n` law from the per-`j` split masses.
    pub exact: Vec<f64>,
    pub tv_heine: f64,
    pub tv_exact: f64,
    pub mean: f64,
    pub mean_se: f64,
    /// `Σ_j θρ^{2j+1}/(1 + θρ^{2j+1})`.
    pub mean_series: f64,
    pub mean_exact: f64,
}

impl CountLaw {
    pub fn to_csv(&self) -> String {
        let len = self.empirical.len().max(self.heine.len()).max(self.exact.len());
        let mut out = String::from("schema=1\nk,pmf_empirical,pmf_heine,pmf_exact\n");
        for k in 0..len {
            let g = |v: &Vec<f64>| v.get(k).copied().unwrap_or(0.0);
            out.push_str(&format!("{k},{:e},{:e},{:e}\n", g(&self.empirical), g(&self.heine), g(&self.exact)));
        }
        out
    }
}

/// Mean of `He(θρ, ρ²)` as a series.
pub fn heine_mean_series(theta: f64, rho: f64) -> f64 {
    let mut acc = 0.0;
    let mut x = theta * rho;
    for _ in 0..10_000 {
        let term = x / (1.0 + x);
        acc += term;
        if term < 1e-18 {
            break;
        }
        x *= rho * rho;
    }
    acc
}

/// Empirical law of `N_n = #{j : R_j beyond the split}` against `He(θρ, ρ²)`.
pub fn outpost_count_law(
    sampler: &ModulusSampler<'_>,
    params: &OutpostParams<f64>,
    n_samples: usize,
    seed: u64,
) -> Result<CountLaw> {
    let n = sampler.n();
    let split = params.split;
    let outer = |r: f64| match params.side {
        crate::free_energy::OutpostSide::Outer => r > split,
        crate::free_energy::OutpostSide::Inner => r < split,
    };
    let cols = sampler.run(seed, n_samples, |m| vec![m.iter().filter(|&&r| outer(r)).count() as f64])?;
    let counts = &cols[0];
    let kmax = counts.iter().fold(0.0f64, |a, &b| a.max(b)) as usize;
    let mut empirical = vec![0.0; kmax + 1];
    for &c in counts {
        empirical[c as usize] += 1.0 / n_samples as f64;
    }
    let mean = compensated_sum(counts.iter().copied()) / n_samples as f64;
    let var = compensated_sum(counts.iter().map(|&c| (c - mean).powi(2))) / (n_samples - 1).max(1) as f64;

    let ctx = sampler.ctx;
    let probs: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|j| {
            let (inner, outer_mass) = ctx.log_mass_split(j, split)?;
            let (near, far) = match params.side {
                crate::free_energy::OutpostSide::Outer => (inner, outer_mass),
                crate::free_energy::OutpostSide::Inner => (outer_mass, inner),
            };
            Ok(1.0 / (1.0 + (near - far).exp()))
        })
        .collect::<Result<_>>()?;
    let exact = poisson_binomial(&probs);
    let mean_exact = compensated_sum(probs.iter().copied());
    let heine = if params.rho > 0.0 {
        HeineDist::new(params.theta * params.rho, params.rho * params.rho)?.table()
    } else {
        vec![1.0]
    };
    Ok(CountLaw {
        n,
        samples: n_samples,
        tv_heine: total_variation(&empirical, &heine),
        tv_exact: total_variation(&empirical, &exact),
        empirical,
        heine,
        exact,
        mean,
        mean_se: (var / n_samples as f64).sqrt(),
        mean_series: heine_mean_series(params.theta, params.rho),
        mean_exact,
    })
}

/// Persisted moduli: header `(n, seed, samples)` as little-endian `u64`, then moduli as little-endian `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBatch {
    pub n: usize,
    pub seed: u64,
    pub moduli: Vec<Vec<f64>>,
}

impl SampleBatch {
    pub fn collect(sampler: &ModulusSampler<'_>, seed: u64, n_samples: usize) -> Result<Self> {
        let moduli = (0..n_samples as u64)
            .into_par_iter()
            .map(|i| sampler.kostlan_sample(seed, i))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { n: sampler.n(), seed, moduli })
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for v in [self.n as u64, self.seed, self.moduli.len() as u64] {
            w.write_all(&v.to_le_bytes())?;
        }
        for row in &self.moduli {
            for &r in row {
                w.write_all(&r.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> std::io::Result<Self> {
        let mut word = [0u8; 8];
        let mut next = |r: &mut R| -> std::io::Result<[u8; 8]> {
            r.read_exact(&mut word)?;
            Ok(word)
        };
        let n = u64::from_le_bytes(next(&mut r)?) as usize;
        let seed = u64::from_le_bytes(next(&mut r)?);
        let count = u64::from_le_bytes(next(&mut r)?) as usize;
        let mut moduli = Vec::with_capacity(count);
        for _ in 0..count {
            let mut row = Vec::with_capacity(n);
            for _ in 0..n {
                let x = f64::from_le_bytes(next(&mut r)?);
                if !(x > 0.0) {
                    return Err(std::io::Error::new(std::io::ErrorKind::InvalidData, "non-positive modulus"));
                }
                row.push(x);
            }
            moduli.push(row);
        }
        Ok(Self { n, seed, moduli })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::droplet::compute_droplet;
    use crate::potential::PotentialFamily;

    fn ginibre_ctx(p: &RadialPotential<f64>, n: usize) -> NormContext<'_, f64> {
        NormContext::new(p, TestFunction::r_squared(), Perturbation::none(), n).unwrap()
    }

    #[test]
    fn gamma_law_of_squared_moduli() {
        let p = PotentialFamily::ginibre().build::<f64>().unwrap();
        let n = 20;
        let ctx = ginibre_ctx(&p, n);
        let sampler = ModulusSampler::new(&ctx).unwrap();
        let samples = 20_000;
        let cols = sampler.run(7, samples, |m| vec![m[0] * m[0], m[5] * m[5], m[19] * m[19]]).unwrap();
        for (col, j) in cols.iter().zip([0usize, 5, 19]) {
            let mean = col.iter().sum::<f64>() / samples as f64;
            let want = (j + 1) as f64 / n as f64;
            let se = ((j + 1) as f64).sqrt() / n as f64 / (samples as f64).sqrt();
            assert!((mean - want).abs() < 4.0 * se, "j {j}: {mean} vs {want}");
        }
        assert_eq!(sampler.log().envelope_violations, 0);
    }

    #[test]
    fn single_modulus() {
        let p = PotentialFamily::ginibre().build::<f64>().unwrap();
        let ctx = NormContext::new(&p, TestFunction::r_squared(), Perturbation::none(), 1).unwrap();
        let sampler = ModulusSampler::new(&ctx).unwrap();
        let m = sampler.kostlan_sample(1, 0).unwrap();
        assert_eq!(m.len(), 1);
        assert!(m[0] > 0.0);
    }

    #[test]
    fn determinism_and_batch_round_trip() {
        let p = PotentialFamily::ginibre().build::<f64>().unwrap();
        let ctx = ginibre_ctx(&p, 12);
        let sampler = ModulusSampler::new(&ctx).unwrap();
        let a = SampleBatch::collect(&sampler, 99, 5).unwrap();
        let b = SampleBatch::collect(&sampler, 99, 5).unwrap();
        assert_eq!(a, b);
        let mut buf = Vec::new();
        a.write_to(&mut buf).unwrap();
        assert_eq!(buf.len(), 24 + 8 * 12 * 5);
        assert_eq!(SampleBatch::read_from(&buf[..]).unwrap(), a);
    }

    #[test]
    fn cgf_basics() {
        let v = [0.3, -0.2, 1.0, 0.0];
        let e = empirical_cgf(&v, &[0.0, 1.0]).unwrap();
        assert_eq!(e[0].value, 0.0);
        let direct = (v.iter().map(|x: &f64| x.exp()).sum::<f64>() / 4.0).ln();
        assert!((e[1].value - direct).abs() < 1e-15);
        let flat = empirical_cgf(&[0.0; 10], &[2.0]).unwrap();
        assert_eq!(flat[0].value, 0.0);
    }

    #[test]
    fn constant_statistic_vanishes() {
        let p = PotentialFamily::ginibre().build::<f64>().unwrap();
        let g = compute_droplet(&p).unwrap();
        let st = FluctStatistic::new(&p, &g, TestFunction::Constant { value: 2.5 }, 10).unwrap();
        assert_eq!(st.eval(&[0.1; 10]), 0.0);
    }

    #[test]
    fn poisson_binomial_and_tv() {
        let pmf = poisson_binomial(&[0.5, 0.5]);
        assert_eq!(pmf, vec![0.25, 0.5, 0.25]);
        assert_eq!(total_variation(&[1.0], &[0.0, 1.0]), 1.0);
        assert!((heine_mean_series(1.0, 0.0) - 0.0).abs() < 1e-15);
    }
}
