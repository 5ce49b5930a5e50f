use crate::config::RunConfig;
use radgas::droplet::{compute_droplet, critical_indices, CutoffPolicy, DropletCase, DropletGeometry};
use radgas::fluctuations::{
    cgf_comparison, empirical_cgf, exact_fluct_cgf, outpost_count_law, FluctStatistic, ModulusSampler, SampleBatch,
};
use radgas::free_energy::{
    compare_report, outpost_log_ratio, outpost_params, ErrorOrder, ExpansionBreakdown, ExpansionInputs, NormContext,
    PartitionMethod,
};
use radgas::functionals::{
    boundary_expectation, energy_iq, entropy_eq, fq_total, gap_constants, sigma_moment, variance_v, BoundaryVariant,
    VarianceVariant,
};
use radgas::heine::{predicted_fluct_cgf, CgfMode, GapPrediction};
use radgas::identities::{run_identities, DEFAULT_DRAWS};
use radgas::potential::{Perturbation, RadialPotential, TestFunction};
use serde::Serialize;
use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;

pub const COMMANDS: [&str; 6] = ["droplet", "functionals", "free-energy", "fluct", "outpost", "identities"];
const FLUCT_GRID: [f64; 4] = [-1.0, -0.5, 0.5, 1.0];

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Gate(String),
    #[error(transparent)]
    Core(#[from] radgas::Error),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        use radgas::Error as E;
        match self {
            Self::Validation(_) => 2,
            Self::Gate(_) => 3,
            Self::Core(E::Domain(_) | E::Precondition(_) | E::Geometry(_) | E::NoGap | E::Divergent(_)) => 2,
            Self::Core(_) => 3,
            Self::Io(_) => 1,
        }
    }
}

type Outcome = Result<Vec<PathBuf>, CliError>;

struct Setup {
    potential: RadialPotential<f64>,
    geometry: DropletGeometry<f64>,
}

fn setup(cfg: &RunConfig) -> Result<Setup, CliError> {
    let potential = cfg.family.build::<f64>()?;
    let geometry = compute_droplet(&potential)?;
    Ok(Setup { potential, geometry })
}

fn emit(cfg: &RunConfig, name: &str, body: &str, files: &mut Vec<PathBuf>) -> Result<(), CliError> {
    fs::create_dir_all(&cfg.out)?;
    let path = cfg.out.join(name);
    fs::write(&path, body)?;
    files.push(path);
    Ok(())
}

fn json<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("serializable") + "\n"
}

fn policy(cfg: &RunConfig) -> CutoffPolicy {
    CutoffPolicy { c_cut: cfg.c_cut }
}

pub fn dispatch(command: &str, cfg: &RunConfig) -> Outcome {
    match command {
        "droplet" => droplet(cfg),
        "functionals" => functionals(cfg),
        "free-energy" => free_energy(cfg),
        "fluct" => fluct(cfg),
        "outpost" => outpost(cfg),
        "identities" => identities(cfg),
        other => unreachable!("unchecked command {other}"),
    }
}

#[derive(Serialize)]
struct DropletReport<'a> {
    family: &'a radgas::potential::PotentialFamily,
    geometry: &'a DropletGeometry<f64>,
    critical_indices: Vec<(usize, Vec<(usize, f64)>)>,
}

fn droplet(cfg: &RunConfig) -> Outcome {
    let s = setup(cfg)?;
    let report = DropletReport {
        family: &cfg.family,
        geometry: &s.geometry,
        critical_indices: cfg.n.iter().map(|&n| (n, critical_indices(&s.geometry, n))).collect(),
    };
    let mut files = Vec::new();
    emit(cfg, "droplet.json", &json(&report), &mut files)?;
    println!("components {:?} outposts {:?}", s.geometry.components, s.geometry.outposts);
    Ok(files)
}

fn functionals(cfg: &RunConfig) -> Outcome {
    let Setup { potential: p, geometry: g } = setup(cfg)?;
    let h = &cfg.test_function;
    let mut out = String::from("schema=1\nname,component,n,value\n");
    let mut row = |name: &str, comp: &str, n: &str, v: f64| {
        let _ = writeln!(out, "{name},{comp},{n},{v:e}");
    };
    row("energy_iq", "total", "", energy_iq(&p, &g)?);
    row("entropy_eq", "total", "", entropy_eq(&p, &g)?);
    let (fq, parts) = fq_total(&p, &g)?;
    row("fq", "total", "", fq);
    for (nu, v) in parts.iter().enumerate() {
        row("fq", &nu.to_string(), "", *v);
    }
    row("sigma_moment", "total", "", sigma_moment(&p, &g, h)?);
    row("e_h", "total", "", boundary_expectation(&p, &g, h, BoundaryVariant::Total)?);
    for nu in 0..g.components.len() {
        row("e_h", &nu.to_string(), "", boundary_expectation(&p, &g, h, BoundaryVariant::Component { nu })?);
        row("v_h", &nu.to_string(), "", variance_v(&p, &g, h, VarianceVariant::Component { nu })?);
    }
    if g.case == DropletCase::CentralDisk {
        row("e_ell_tilde", "total", "", boundary_expectation(&p, &g, &TestFunction::Log, BoundaryVariant::TildeEll)?);
        row("v_ell_tilde", "total", "", variance_v(&p, &g, &TestFunction::Log, VarianceVariant::TildeEll)?);
        if cfg.alpha != 0.0 {
            let e = boundary_expectation(&p, &g, h, BoundaryVariant::Conical { alpha: cfg.alpha })?;
            row("e_h_alpha", "total", "", e);
        }
    }
    if g.gaps() > 0 {
        let pert = Perturbation::new(0.0, cfg.alpha)?;
        for &n in &cfg.n {
            let gc = gap_constants(&p, &g, h, &pert, n)?;
            for (nu, c) in gc.gaps.iter().enumerate() {
                let (comp, ns) = ((nu + 1).to_string(), n.to_string());
                for (name, v) in [("rho", c.rho), ("theta_alpha", c.theta_alpha), ("c", c.c), ("mu", c.mu), ("x", c.x)]
                {
                    row(name, &comp, &ns, v);
                }
            }
        }
    }
    let mut files = Vec::new();
    emit(cfg, "functionals.csv", &out, &mut files)?;
    Ok(files)
}

fn free_energy(cfg: &RunConfig) -> Outcome {
    let Setup { potential: p, geometry: g } = setup(cfg)?;
    if !g.outposts.is_empty() {
        return Err(CliError::Gate(format!(
            "droplet has outposts at {:?}; the regular expansion does not apply, run `outpost` instead",
            g.outposts
        )));
    }
    if cfg.alpha != 0.0 && g.case != DropletCase::CentralDisk {
        return Err(CliError::Validation("alpha != 0 needs a droplet with a central disk".into()));
    }
    let s_list = cfg.s.clone().unwrap_or_else(|| vec![0.0]);
    let mut files = Vec::new();
    let mut csv = String::from("schema=1\ns,n,log_z_exact,expansion,residual,scaled_residual,rising\n");
    let mut breakdowns: Vec<(f64, ExpansionBreakdown<f64>)> = Vec::new();
    for &s in &s_list {
        let pert = Perturbation::new(s, cfg.alpha)?;
        let inputs = ExpansionInputs::new(&p, &g, cfg.test_function.clone(), pert)?;
        let mut runs = Vec::new();
        for &n in &cfg.n {
            let ctx = NormContext::new(&p, cfg.test_function.clone(), pert, n)?.with_policy(policy(cfg));
            let (log_z, table) = ctx.log_partition_exact(PartitionMethod::Quadrature)?;
            emit(cfg, &format!("norms_n{n}_s{s}.csv"), &table.to_csv(), &mut files)?;
            let b = if cfg.alpha == 0.0 { inputs.expansion_regular(n)? } else { inputs.expansion_conical(n)? };
            breakdowns.push((s, b.clone()));
            runs.push((log_z, b));
        }
        for r in compare_report(&runs) {
            let _ = writeln!(
                csv,
                "{s},{},{:e},{:e},{:e},{:e},{}",
                r.n, r.exact, r.expansion, r.residual, r.scaled, r.rising
            );
            println!("s={s} n={} residual {:.3e} scaled {:.3e}", r.n, r.residual, r.scaled);
        }
    }
    emit(cfg, "free_energy.csv", &csv, &mut files)?;
    emit(cfg, "free_energy.json", &json(&breakdowns), &mut files)?;
    Ok(files)
}

fn fluct_mode(
    p: &RadialPotential<f64>,
    g: &DropletGeometry<f64>,
    cfg: &RunConfig,
    n: usize,
) -> Result<CgfMode<f64>, CliError> {
    let h = &cfg.test_function;
    let v = variance_v(p, g, h, VarianceVariant::Total)?;
    if !g.outposts.is_empty() {
        let op = outpost_params(p, g, h)?;
        let e = boundary_expectation(p, g, h, BoundaryVariant::Total)?;
        return Ok(CgfMode::Outpost { rho: op.rho, theta: op.theta, c: op.c, e, v });
    }
    let gaps = if g.gaps() > 0 {
        let gc = gap_constants(p, g, h, &Perturbation::new(0.0, cfg.alpha)?, n)?;
        gc.gaps.iter().map(|c| GapPrediction { rho: c.rho, theta: c.theta_alpha, c: c.c, x: c.x }).collect()
    } else {
        Vec::new()
    };
    if cfg.alpha == 0.0 {
        Ok(CgfMode::Regular { gaps, e: boundary_expectation(p, g, h, BoundaryVariant::Total)?, v })
    } else {
        let e = boundary_expectation(p, g, h, BoundaryVariant::Conical { alpha: cfg.alpha })?;
        Ok(CgfMode::Conical { gaps, e, v })
    }
}

// Allowance band: twice the exact-vs-limit gap at the smallest n, carried to larger n by the error order.
fn fluct(cfg: &RunConfig) -> Outcome {
    let Setup { potential: p, geometry: g } = setup(cfg)?;
    if cfg.samples < 2 {
        return Err(CliError::Validation("fluct needs at least two samples".into()));
    }
    let grid = cfg.s.clone().unwrap_or_else(|| FLUCT_GRID.to_vec());
    let order = if g.case == DropletCase::CentralDisk { ErrorOrder::CentralDisk } else { ErrorOrder::InverseN };
    let mut ns = cfg.n.clone();
    ns.sort_unstable();
    let mut band: Option<(f64, usize)> = None;
    let mut files = Vec::new();
    let mut failed = Vec::new();
    for &n in &ns {
        let pert = Perturbation::new(0.0, cfg.alpha)?;
        let ctx = NormContext::new(&p, cfg.test_function.clone(), pert, n)?.with_policy(policy(cfg));
        let sampler = ModulusSampler::new(&ctx)?;
        let stat = FluctStatistic::new(&p, &g, cfg.test_function.clone(), n)?;
        let mode = fluct_mode(&p, &g, cfg, n)?;
        let allowance = match band {
            Some((b, n0)) => b * order.size(n) / order.size(n0),
            None => {
                let mut gap = 0.0f64;
                for &s in &grid {
                    gap =
                        gap.max((exact_fluct_cgf(&p, &stat, n, s, cfg.alpha)? - predicted_fluct_cgf(&mode, s)?).abs());
                }
                band = Some((2.0 * gap, n));
                2.0 * gap
            }
        };
        let values = if cfg.save_batch {
            let batch = SampleBatch::collect(&sampler, cfg.seed, cfg.samples)?;
            fs::create_dir_all(&cfg.out)?;
            let path = cfg.out.join(format!("batch_n{n}.bin"));
            batch.write_to(std::io::BufWriter::new(fs::File::create(&path)?))?;
            files.push(path);
            batch.moduli.iter().map(|m| stat.eval(m)).collect()
        } else {
            sampler.run(cfg.seed, cfg.samples, |m| vec![stat.eval(m)])?.remove(0)
        };
        let report = cgf_comparison(&values, &grid, |s| predicted_fluct_cgf(&mode, s), allowance)?;
        for e in empirical_cgf(&values, &grid)? {
            if e.weight_warning {
                eprintln!("warning: n={n} s={} top weights carry {:.0}% of the mean", e.s, 100.0 * e.top_share);
            }
        }
        println!("n={n} band {allowance:.3e} pass {}", report.pass);
        if !report.pass {
            failed.push(n);
        }
        emit(cfg, &format!("fluct_n{n}.csv"), &report.to_csv(), &mut files)?;
    }
    if failed.is_empty() {
        Ok(files)
    } else {
        Err(CliError::Gate(format!("CGF comparison failed for n = {failed:?}")))
    }
}

fn outpost(cfg: &RunConfig) -> Outcome {
    let Setup { potential: p, geometry: g } = setup(cfg)?;
    if g.outposts.is_empty() {
        return Err(CliError::Validation("droplet has no outpost".into()));
    }
    let h = &cfg.test_function;
    let params = outpost_params(&p, &g, h)?;
    let s_list = cfg.s.clone().unwrap_or_else(|| vec![0.0, 0.5]);
    let mut csv = String::from("schema=1\nn,s,measured,predicted,difference,scaled_difference\n");
    for &n in &cfg.n {
        for &s in &s_list {
            let r = outpost_log_ratio(&p, &g, h, s, n, policy(cfg))?;
            let d = r.measured - r.predicted;
            let _ = writeln!(csv, "{n},{s},{:e},{:e},{d:e},{:e}", r.measured, r.predicted, d * n as f64);
            println!("n={n} s={s} measured {:.6} predicted {:.6}", r.measured, r.predicted);
        }
    }
    let mut files = Vec::new();
    emit(cfg, "outpost.csv", &csv, &mut files)?;
    if cfg.samples > 1 {
        for &n in &cfg.n {
            let ctx = NormContext::new(&p, h.clone(), Perturbation::none(), n)?.with_policy(policy(cfg));
            let sampler = ModulusSampler::new(&ctx)?;
            let law = outpost_count_law(&sampler, &params, cfg.samples, cfg.seed)?;
            println!("n={n} TV to Heine {:.4}, mean {:.5} vs {:.5}", law.tv_heine, law.mean, law.mean_series);
            emit(cfg, &format!("outpost_count_n{n}.csv"), &law.to_csv(), &mut files)?;
        }
    }
    Ok(files)
}

fn identities(cfg: &RunConfig) -> Outcome {
    let report = run_identities(cfg.seed, DEFAULT_DRAWS)?;
    let mut files = Vec::new();
    emit(cfg, "identities.csv", &report.to_csv(), &mut files)?;
    for c in &report.checks {
        println!("{:<28} {:.2e} / {:.0e} {}", c.name, c.max_residual, c.tolerance, if c.pass { "ok" } else { "FAIL" });
    }
    if report.pass() {
        Ok(files)
    } else {
        Err(CliError::Gate("identity suite failed".into()))
    }
}
