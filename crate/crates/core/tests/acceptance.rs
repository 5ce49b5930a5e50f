use radgas::droplet::{compute_droplet, CutoffPolicy, DropletGeometry};
use radgas::fluctuations::{
    cgf_comparison, exact_fluct_cgf, outpost_count_law, CgfReport, FluctStatistic, ModulusSampler,
};
use radgas::free_energy::{
    ginibre_log_hj, outpost_log_ratio, outpost_params, ErrorOrder, ExpansionInputs, NormContext, PartitionMethod,
};
use radgas::functionals::{boundary_expectation, gap_constants, variance_v, BoundaryVariant, VarianceVariant};
use radgas::heine::{predicted_fluct_cgf, CgfMode, GapPrediction};
use radgas::identities::{run_identities, DEFAULT_DRAWS};
use radgas::potential::{Perturbation, PotentialFamily, RadialPotential, TestFunction};
use std::process::ExitCode;
use std::time::Instant;

const SEED: u64 = 20251017;
const SAMPLES: usize = 100_000;
const S_GRID: [f64; 4] = [-1.0, -0.5, 0.5, 1.0];

const GINIBRE_REL_TOL: f64 = 1e-10;
const GINIBRE_SECONDS_PER_N: f64 = 30.0;
const ANNULAR_SCALED_BOUND: f64 = 1.0;
const TREND_SLACK: f64 = 1.1;
const OSCILLATION_RATIO: f64 = 10.0;
const PERIODIC_KAPPA: f64 = 0.1;
const CONICAL_TERM_TOL: f64 = 1e-12;
const OUTPOST_SCALED_BOUND: f64 = 1.0;
const COUNT_TV: f64 = 0.02;
const MEAN_SE: f64 = 4.0;
const IDENTITY_SECONDS: f64 = 60.0;
const LAPLACE_SLOPE: f64 = -2.0;
const LAPLACE_SLOPE_TOL: f64 = 0.2;

fn gap_family() -> PotentialFamily {
    PotentialFamily::gap_polynomial(60.0, 1.0, 6, 0.02)
}

fn quartic() -> PotentialFamily {
    PotentialFamily::even_polynomial(vec![0.0, -2.0, 1.0])
}

fn exact_log_z(p: &RadialPotential<f64>, pert: Perturbation, n: usize) -> f64 {
    let ctx = NormContext::new(p, TestFunction::r_squared(), pert, n).unwrap();
    ctx.log_partition_exact(PartitionMethod::Quadrature).unwrap().0
}

fn report(k: usize, pass: bool, detail: String) -> bool {
    println!("criterion {k:>2}: {} {detail}", if pass { "PASS" } else { "FAIL" });
    pass
}

fn c1_ginibre_exactness() -> bool {
    let p = PotentialFamily::ginibre().build::<f64>().unwrap();
    let mut worst = 0.0f64;
    let mut slowest = 0.0f64;
    for alpha in [0.0, 0.5, -0.3] {
        for n in [50, 100, 200] {
            let t = Instant::now();
            let ctx =
                NormContext::new(&p, TestFunction::r_squared(), Perturbation::new(0.0, alpha).unwrap(), n).unwrap();
            let (_, table) = ctx.log_partition_exact(PartitionMethod::Quadrature).unwrap();
            slowest = slowest.max(t.elapsed().as_secs_f64());
            for e in &table.entries {
                let want = ginibre_log_hj(e.j, n, alpha);
                worst = worst.max((e.log_hj - want).abs() / want.abs().max(1.0));
            }
        }
    }
    report(
        1,
        worst <= GINIBRE_REL_TOL && slowest < GINIBRE_SECONDS_PER_N,
        format!("max rel err {worst:.2e}, slowest n {slowest:.2}s"),
    )
}

// `a` is fitted at the first n; the band must then hold at every later n.
fn disk_band(residuals: &[(usize, f64)]) -> (bool, f64) {
    let size = |n| ErrorOrder::CentralDisk.size(n);
    let (n0, r0) = residuals[0];
    let a = r0.abs() / size(n0);
    let ok = residuals[1..].iter().all(|&(n, r)| r.abs() <= a * size(n));
    (ok && residuals.last().unwrap().1.abs() < r0.abs(), a)
}

fn c2_central_disk() -> bool {
    let p = PotentialFamily::ginibre().build::<f64>().unwrap();
    let g = compute_droplet(&p).unwrap();
    let inputs = ExpansionInputs::new(&p, &g, TestFunction::r_squared(), Perturbation::none()).unwrap();
    let res: Vec<(usize, f64)> = [50, 100, 200, 400]
        .iter()
        .map(|&n| (n, exact_log_z(&p, Perturbation::none(), n) - inputs.expansion_regular(n).unwrap().total))
        .collect();
    let (pass, a) = disk_band(&res);
    report(2, pass, format!("a = {a:.3e}, residuals {res:?}"))
}

fn c3_annular_rate() -> bool {
    let p = quartic().build::<f64>().unwrap();
    let g = compute_droplet(&p).unwrap();
    let inputs = ExpansionInputs::new(&p, &g, TestFunction::r_squared(), Perturbation::none()).unwrap();
    let scaled: Vec<f64> = [50, 100, 200, 400]
        .iter()
        .map(|&n| (exact_log_z(&p, Perturbation::none(), n) - inputs.expansion_regular(n).unwrap().total) * n as f64)
        .collect();
    let bounded = scaled.iter().all(|r| r.abs() <= ANNULAR_SCALED_BOUND);
    let no_trend = scaled[3].abs() <= TREND_SLACK * scaled[0].abs();
    report(3, bounded && no_trend, format!("residual*n {scaled:.4?}"))
}

// Least squares for y ≈ X β with few columns.
#[allow(clippy::needless_range_loop)]
fn least_squares(x: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
    let k = x[0].len();
    let mut a = vec![vec![0.0; k + 1]; k];
    for (row, &yi) in x.iter().zip(y) {
        for i in 0..k {
            for j in 0..k {
                a[i][j] += row[i] * row[j];
            }
            a[i][k] += row[i] * yi;
        }
    }
    for c in 0..k {
        let piv = (c..k).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
        a.swap(c, piv);
        for r in 0..k {
            if r != c {
                let f = a[r][c] / a[c][c];
                for j in c..=k {
                    a[r][j] -= f * a[c][j];
                }
            }
        }
    }
    (0..k).map(|i| a[i][k] / a[i][i]).collect()
}

fn c4_gap_oscillation() -> bool {
    let p = gap_family().build::<f64>().unwrap();
    let g = compute_droplet(&p).unwrap();
    let inputs = ExpansionInputs::new(&p, &g, TestFunction::r_squared(), Perturbation::none()).unwrap();
    let rows: Vec<(f64, f64, f64)> = (100..=140)
        .map(|n| {
            let exact = exact_log_z(&p, Perturbation::none(), n);
            let b = inputs.expansion_regular(n).unwrap();
            (n as f64, exact - b.total, b.gn)
        })
        .collect();
    let p2p = |v: Vec<f64>| v.iter().cloned().fold(f64::MIN, f64::max) - v.iter().cloned().fold(f64::MAX, f64::min);
    let with = p2p(rows.iter().map(|r| r.1).collect());
    let without = p2p(rows.iter().map(|r| r.1 + r.2).collect());
    let gmean = rows.iter().map(|r| r.2).sum::<f64>() / rows.len() as f64;
    let x: Vec<Vec<f64>> = rows.iter().map(|r| vec![1.0, 1.0 / r.0, r.2 - gmean]).collect();
    let y: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let kappa = least_squares(&x, &y)[2];
    let ratio = without / with;
    report(
        4,
        ratio > OSCILLATION_RATIO && kappa.abs() < PERIODIC_KAPPA,
        format!("peak-to-peak without/with G_n = {without:.4}/{with:.4} = {ratio:.1}, kappa = {kappa:.4}"),
    )
}

fn c5_conical() -> bool {
    let p = PotentialFamily::ginibre().build::<f64>().unwrap();
    let g = compute_droplet(&p).unwrap();
    let mut worst = 0.0f64;
    for s in [0.0, 0.5] {
        let inputs =
            ExpansionInputs::new(&p, &g, TestFunction::r_squared(), Perturbation::new(s, 0.0).unwrap()).unwrap();
        for n in [50, 100, 400] {
            let r = inputs.expansion_regular(n).unwrap();
            let c = inputs.expansion_conical(n).unwrap();
            for (a, b) in [(r.c1, c.c1), (r.c2, c.c2), (r.c3, c.c3), (r.c4, c.c4), (r.c5, c.c5), (r.gn, c.gn)] {
                worst = worst.max((a - b).abs() / a.abs().max(1.0));
            }
        }
    }
    let pert = Perturbation::new(0.0, 0.5).unwrap();
    let inputs = ExpansionInputs::new(&p, &g, TestFunction::r_squared(), pert).unwrap();
    let res: Vec<(usize, f64)> = [50, 100, 200, 400]
        .iter()
        .map(|&n| (n, exact_log_z(&p, pert, n) - inputs.expansion_conical(n).unwrap().total))
        .collect();
    let (band, a) = disk_band(&res);
    report(
        5,
        worst <= CONICAL_TERM_TOL && band,
        format!("alpha=0 term gap {worst:.1e}; alpha=0.5 a = {a:.3e}, residuals {res:?}"),
    )
}

fn c6_outpost_free_energy() -> bool {
    let p = PotentialFamily::ginibre_with_outpost(1.6, 0.06).unwrap().build::<f64>().unwrap();
    let g = compute_droplet(&p).unwrap();
    let h = TestFunction::r_squared();
    let mut pass = true;
    let mut detail = Vec::new();
    for s in [0.0, 0.5] {
        let scaled: Vec<f64> = [100, 200, 400]
            .iter()
            .map(|&n| {
                let r = outpost_log_ratio(&p, &g, &h, s, n, CutoffPolicy::default()).unwrap();
                (r.measured - r.predicted) * n as f64
            })
            .collect();
        pass &= scaled.iter().all(|d| d.abs() <= OUTPOST_SCALED_BOUND) && scaled[2].abs() <= 2.0 * scaled[0].abs();
        detail.push(format!("s={s}: {scaled:.4?}"));
    }
    report(6, pass, format!("diff*n {}", detail.join("; ")))
}

struct CgfRun {
    report: CgfReport,
    worst_exact_z: f64,
}

// The allowance band is twice the largest gap between the exact finite-n CGF and the
// limiting prediction at the smallest n, rescaled by the error order for later n.
fn cgf_run(
    p: &RadialPotential<f64>,
    g: &DropletGeometry<f64>,
    n: usize,
    mode: &CgfMode<f64>,
    band: Option<f64>,
) -> (CgfRun, f64) {
    let h = TestFunction::r_squared();
    let ctx = NormContext::new(p, h.clone(), Perturbation::none(), n).unwrap();
    let sampler = ModulusSampler::new(&ctx).unwrap();
    let stat = FluctStatistic::new(p, g, h, n).unwrap();
    let cols = sampler.run(SEED, SAMPLES, |m| vec![stat.eval(m)]).unwrap();
    let exact: Vec<f64> = S_GRID.iter().map(|&s| exact_fluct_cgf(p, &stat, n, s, 0.0).unwrap()).collect();
    let pred: Vec<f64> = S_GRID.iter().map(|&s| predicted_fluct_cgf(mode, s).unwrap()).collect();
    let gap = exact.iter().zip(&pred).map(|(e, q)| (e - q).abs()).fold(0.0, f64::max);
    let band = band.unwrap_or(2.0 * gap);
    let report = cgf_comparison(&cols[0], &S_GRID, |s| predicted_fluct_cgf(mode, s), band).unwrap();
    let worst_exact_z =
        report.rows.iter().zip(&exact).map(|(r, e)| ((r.estimate - e) / r.se).abs()).fold(0.0, f64::max);
    (CgfRun { report, worst_exact_z }, band)
}

fn gap_mode(p: &RadialPotential<f64>, g: &DropletGeometry<f64>, n: usize) -> (CgfMode<f64>, f64) {
    let h = TestFunction::r_squared();
    let gc = gap_constants(p, g, &h, &Perturbation::none(), n).unwrap();
    let e = boundary_expectation(p, g, &h, BoundaryVariant::Total).unwrap();
    let v = variance_v(p, g, &h, VarianceVariant::Total).unwrap();
    let gaps = gc.gaps.iter().map(|x| GapPrediction { rho: x.rho, theta: x.theta_alpha, c: x.c, x: x.x }).collect();
    (CgfMode::Regular { gaps, e, v }, gc.gaps[0].x)
}

fn c7_fluctuation_cgf() -> bool {
    let p = PotentialFamily::ginibre().build::<f64>().unwrap();
    let g = compute_droplet(&p).unwrap();
    let mode = CgfMode::Regular { gaps: vec![], e: 0.5, v: 0.5 };
    let (gin, gin_band) = cgf_run(&p, &g, 100, &mode, None);
    let mut pass = gin.report.pass;
    let mut detail = vec![format!(
        "ginibre n=100 band {gin_band:.4} max|z| {:.2} (exact {:.2})",
        max_z(&gin.report),
        gin.worst_exact_z
    )];

    let p = gap_family().build::<f64>().unwrap();
    let g = compute_droplet(&p).unwrap();
    let mut band = None;
    let mut xs = Vec::new();
    for n in [100, 103] {
        let (mode, x) = gap_mode(&p, &g, n);
        let rescaled =
            band.map(|b: (f64, usize)| b.0 * ErrorOrder::CentralDisk.size(n) / ErrorOrder::CentralDisk.size(b.1));
        let (run, used) = cgf_run(&p, &g, n, &mode, rescaled);
        band.get_or_insert((used, n));
        pass &= run.report.pass;
        xs.push(x);
        detail.push(format!(
            "gap n={n} x={x:.3} band {used:.4} max|z| {:.2} (exact {:.2})",
            max_z(&run.report),
            run.worst_exact_z
        ));
    }
    pass &= (xs[0] - xs[1]).abs() > 0.1;
    report(7, pass, detail.join("; "))
}

fn max_z(r: &CgfReport) -> f64 {
    r.rows.iter().map(|row| row.z.abs()).fold(0.0, f64::max)
}

fn c8_count_law() -> bool {
    let p = PotentialFamily::ginibre_with_outpost(1.6, 0.06).unwrap().build::<f64>().unwrap();
    let g = compute_droplet(&p).unwrap();
    let h = TestFunction::r_squared();
    let params = outpost_params(&p, &g, &h).unwrap();
    let ctx = NormContext::new(&p, h, Perturbation::none(), 200).unwrap();
    let sampler = ModulusSampler::new(&ctx).unwrap();
    let law = outpost_count_law(&sampler, &params, SAMPLES, SEED).unwrap();
    let z = (law.mean - law.mean_series) / law.mean_se;
    report(
        8,
        law.tv_heine <= COUNT_TV && z.abs() <= MEAN_SE,
        format!(
            "TV {:.4} (exact law {:.4}), mean {:.5} vs series {:.5}, z = {z:.2}",
            law.tv_heine, law.tv_exact, law.mean, law.mean_series
        ),
    )
}

fn c9_identities() -> bool {
    let t = Instant::now();
    let r = run_identities(SEED, DEFAULT_DRAWS).unwrap();
    let secs = t.elapsed().as_secs_f64();
    for c in &r.checks {
        println!(
            "    {:<28} draws {:>4} max residual {:.2e} (tol {:.0e})",
            c.name, c.draws, c.max_residual, c.tolerance
        );
    }
    report(9, r.pass() && secs < IDENTITY_SECONDS, format!("{} identities, {secs:.2}s", r.checks.len()))
}

fn laplace_slope(fam: PotentialFamily) -> f64 {
    let p = fam.build::<f64>().unwrap();
    let pts: Vec<(f64, f64)> = [100, 200, 400, 800]
        .iter()
        .map(|&n| {
            let ctx = NormContext::new(&p, TestFunction::r_squared(), Perturbation::none(), n).unwrap();
            let j = n / 2;
            let d = ctx.norm_hj_laplace(j).unwrap() - ctx.norm_hj_quadrature(j).unwrap().log_hj;
            ((n as f64).ln(), d.abs().ln())
        })
        .collect();
    let x: Vec<Vec<f64>> = pts.iter().map(|p| vec![1.0, p.0]).collect();
    let y: Vec<f64> = pts.iter().map(|p| p.1).collect();
    least_squares(&x, &y)[1]
}

fn c10_laplace_order() -> bool {
    let slopes = [laplace_slope(PotentialFamily::ginibre()), laplace_slope(quartic())];
    report(
        10,
        slopes.iter().all(|s| (s - LAPLACE_SLOPE).abs() <= LAPLACE_SLOPE_TOL),
        format!("slopes ginibre {:.3}, quartic {:.3}", slopes[0], slopes[1]),
    )
}

// Runs without the libtest harness so the PASS/FAIL lines are never captured.
fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.iter().any(|a| a == "--list") {
        println!("acceptance: test");
        return ExitCode::SUCCESS;
    }
    let filters: Vec<&String> = args.iter().filter(|a| !a.starts_with('-')).collect();
    if !filters.is_empty() && !filters.iter().any(|f| "acceptance".contains(f.as_str())) {
        return ExitCode::SUCCESS;
    }
    let criteria: [fn() -> bool; 10] = [
        c1_ginibre_exactness,
        c2_central_disk,
        c3_annular_rate,
        c4_gap_oscillation,
        c5_conical,
        c6_outpost_free_energy,
        c7_fluctuation_cgf,
        c8_count_law,
        c9_identities,
        c10_laplace_order,
    ];
    let failed: Vec<usize> = criteria.iter().enumerate().filter(|(_, c)| !c()).map(|(i, _)| i + 1).collect();
    if failed.is_empty() {
        println!("acceptance: all {} criteria passed", criteria.len());
        ExitCode::SUCCESS
    } else {
        println!("acceptance: failed criteria {failed:?}");
        ExitCode::FAILURE
    }
}
