//! Randomized self-checks of the q-series, Heine, Euler–Maclaurin and droplet identities.

use crate::droplet::compute_droplet;
use crate::error::Result;
use crate::functionals::{b_identity_annulus, b_identity_disk_residual, ell_moment_closed_form};
use crate::heine::{dnormal_check, HeineDist};
use crate::potential::{PotentialFamily, TestFunction};
use crate::qspecial::{euler_maclaurin_sum, q_binomial_check, qpoch_finite, qpoch_infinite_log, theta_bridge_residual};
use crate::quad::{integrate, Tolerance};
use crate::sum::compensated_sum;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

pub const DEFAULT_DRAWS: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdentityCheck {
    pub name: String,
    pub draws: usize,
    pub max_residual: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdentityReport {
    pub seed: u64,
    pub checks: Vec<IdentityCheck>,
}

impl IdentityReport {
    pub fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("schema=1\nname,draws,max_residual,tolerance,pass\n");
        for c in &self.checks {
            out += &format!("{},{},{:.6e},{:.1e},{}\n", c.name, c.draws, c.max_residual, c.tolerance, c.pass);
        }
        out
    }
}

type Draw = fn(&mut ChaCha8Rng) -> Result<f64>;

/// Runs every identity on `draws` random parameter sets; draw `i` uses stream `i` of `seed`.
pub fn run_identities(seed: u64, draws: usize) -> Result<IdentityReport> {
    let table: [(&str, f64, Draw); 9] = [
        ("q_binomial", 1e-10, q_binomial),
        ("euler", 1e-12, euler),
        ("theta_bridge", 1e-10, theta_bridge),
        ("heine_normalization", 1e-12, heine_normalization),
        ("heine_q_moment", 1e-12, heine_q_moment),
        ("dnormal_difference", 1e-10, dnormal_difference),
        ("ell_moment", 1e-9, ell_moment),
        ("b_identity", 1e-7, b_identity),
        ("euler_maclaurin_polynomial", 1e-9, em_polynomial),
    ];
    let mut checks = Vec::with_capacity(table.len());
    for (k, (name, tolerance, f)) in table.into_iter().enumerate() {
        let residuals: Vec<f64> = (0..draws)
            .into_par_iter()
            .map(|i| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(((k as u64) << 32) | i as u64);
                f(&mut rng)
            })
            .collect::<Result<_>>()?;
        let max_residual = residuals.iter().fold(0.0f64, |m, &r| if r.is_nan() { f64::NAN } else { m.max(r) });
        checks.push(IdentityCheck {
            name: name.into(),
            draws,
            max_residual,
            tolerance,
            pass: max_residual <= tolerance,
        });
    }
    Ok(IdentityReport { seed, checks })
}

// Relative to the largest term of the sum.
fn q_binomial(rng: &mut ChaCha8Rng) -> Result<f64> {
    let z: f64 = rng.gen_range(-1.5..1.5);
    let q: f64 = rng.gen_range(0.05..0.9);
    let n = rng.gen_range(0..=24usize);
    let scale = (0..=n).map(|k| z.abs().powi(k as i32)).fold(1.0f64, f64::max) * 1e3;
    Ok(q_binomial_check(z, q, n) / scale)
}

// Σ q^{k(k−1)/2} z^k/(q;q)_k = (−z; q)_∞.
fn euler(rng: &mut ChaCha8Rng) -> Result<f64> {
    let z: f64 = rng.gen_range(0.0..4.0);
    let q: f64 = rng.gen_range(0.05..0.8);
    let mut terms = Vec::new();
    for k in 0..400usize {
        let t = q.powf((k * k.saturating_sub(1)) as f64 / 2.0) * z.powi(k as i32) / qpoch_finite(q, q, k);
        terms.push(t);
        if k > 2 && t < 1e-300 {
            break;
        }
    }
    let lhs = compensated_sum(terms).ln();
    Ok((lhs - qpoch_infinite_log(-z, q)?).abs())
}

fn theta_bridge(rng: &mut ChaCha8Rng) -> Result<f64> {
    let x: f64 = rng.gen_range(0.0..1.0);
    let p: f64 = rng.gen_range(0.1..0.9);
    let q: f64 = rng.gen_range(0.2..5.0);
    theta_bridge_residual(x, p, q)
}

fn heine(rng: &mut ChaCha8Rng) -> Result<HeineDist<f64>> {
    HeineDist::new(rng.gen_range(0.01..5.0), rng.gen_range(0.05..0.9))
}

fn heine_normalization(rng: &mut ChaCha8Rng) -> Result<f64> {
    let d = heine(rng)?;
    let total: f64 = compensated_sum((0..400).map(|k| d.pmf(k)));
    Ok((total - 1.0).abs())
}

fn heine_q_moment(rng: &mut ChaCha8Rng) -> Result<f64> {
    let d = heine(rng)?;
    let direct: f64 = compensated_sum((0..400).map(|k| d.pmf(k) * d.q.powi(k as i32)));
    Ok((direct - 1.0 / (1.0 + d.theta)).abs())
}

// X⁺ ~ He(λ, q), X⁻ ~ He(q/λ, q) independent: X⁺ − X⁻ ~ dN(λ, q).
fn dnormal_difference(rng: &mut ChaCha8Rng) -> Result<f64> {
    let q: f64 = rng.gen_range(0.05..0.8);
    let lambda: f64 = rng.gen_range(0.1..3.0);
    dnormal_check(&HeineDist::new(lambda, q)?, &HeineDist::new(q / lambda, q)?)
}

fn random_disk(rng: &mut ChaCha8Rng) -> PotentialFamily {
    PotentialFamily::even_polynomial(vec![0.0, rng.gen_range(0.5..2.0), rng.gen_range(0.0..1.0)])
}

fn random_annulus(rng: &mut ChaCha8Rng) -> PotentialFamily {
    PotentialFamily::even_polynomial(vec![0.0, -rng.gen_range(0.5..2.0), rng.gen_range(0.5..2.0)])
}

fn ell_moment(rng: &mut ChaCha8Rng) -> Result<f64> {
    let fam = if rng.gen_bool(0.5) { random_disk(rng) } else { random_annulus(rng) };
    let p = fam.build::<f64>()?;
    let g = compute_droplet(&p)?;
    let tol = Tolerance::new(1e-14, 1e-14);
    let mut parts = Vec::new();
    for &(a, b) in &g.components {
        parts.push(integrate(|r| TestFunction::Log.eval::<f64>(0, r) * 2.0 * r * p.lap(r)[0], a, b, tol)?.value);
    }
    Ok((compensated_sum(parts) - ell_moment_closed_form(&p, &g)).abs())
}

fn b_identity(rng: &mut ChaCha8Rng) -> Result<f64> {
    if rng.gen_bool(0.5) {
        let p = random_disk(rng).build::<f64>()?;
        let g = compute_droplet(&p)?;
        Ok(b_identity_disk_residual(&p, g.components[0].1)?.abs())
    } else {
        let p = random_annulus(rng).build::<f64>()?;
        let g = compute_droplet(&p)?;
        let (a, b) = g.components[0];
        let (lhs, rhs) = b_identity_annulus(&p, a, b)?;
        Ok((lhs - rhs).abs())
    }
}

// Order d is exact on polynomials of degree below 2d.
fn em_polynomial(rng: &mut ChaCha8Rng) -> Result<f64> {
    let d = rng.gen_range(1..=4usize);
    let coeffs: Vec<f64> = (0..2 * d).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let m = rng.gen_range(0..5usize);
    let n = m + rng.gen_range(1..30usize);
    let f = |k: usize, x: f64| -> f64 {
        let mut acc = 0.0;
        for (p, &c) in coeffs.iter().enumerate().skip(k) {
            let falling: f64 = (0..k).map(|i| (p - i) as f64).product();
            acc += c * falling * x.powi((p - k) as i32);
        }
        acc
    };
    let em = euler_maclaurin_sum::<f64, _>(f, m, n, d)?;
    let direct: f64 = compensated_sum((m..n).map(|j| f(0, j as f64)));
    let scale = (n as f64).powi(2 * d as i32);
    Ok(((em.value - direct) / scale).abs() + em.bound)
}
