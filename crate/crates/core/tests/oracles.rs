use approx::assert_relative_eq;
use radgas::droplet::compute_droplet;
use radgas::fluctuations::{empirical_cgf, FluctStatistic, ModulusSampler, SampleBatch};
use radgas::free_energy::{ginibre_log_hj, ExpansionInputs, NormContext, PartitionMethod};
use radgas::functionals::{energy_iq, entropy_eq, fq_total, sigma_moment};
use radgas::heine::HeineDist;
use radgas::potential::{Perturbation, PotentialFamily, TestFunction};
use radgas::qspecial::{ln_gamma, log_barnes_g};
use radgas::Error;

fn mean_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

#[test]
fn ginibre_squared_moduli_follow_gamma_laws() {
    let p = PotentialFamily::ginibre().build::<f64>().unwrap();
    for alpha in [0.0, 0.5] {
        let n = 20;
        let ctx = NormContext::new(&p, TestFunction::r_squared(), Perturbation::new(0.0, alpha).unwrap(), n).unwrap();
        let sampler = ModulusSampler::new(&ctx).unwrap();
        let cols = sampler.run(11, 100_000, |m| m.iter().map(|r| r * r).collect()).unwrap();
        for (j, col) in cols.iter().enumerate() {
            let (m, se) = mean_se(col);
            let want = (j as f64 + 1.0 + alpha) / n as f64;
            assert!((m - want).abs() <= 4.0 * se, "alpha {alpha} j {j}: {m} vs {want} (se {se})");
        }
    }
}

#[test]
fn ginibre_fluctuation_mean_is_one_half() {
    let p = PotentialFamily::ginibre().build::<f64>().unwrap();
    let g = compute_droplet(&p).unwrap();
    let n = 50;
    let ctx = NormContext::new(&p, TestFunction::r_squared(), Perturbation::none(), n).unwrap();
    let sampler = ModulusSampler::new(&ctx).unwrap();
    let stat = FluctStatistic::new(&p, &g, TestFunction::r_squared(), n).unwrap();
    let konst = FluctStatistic::new(&p, &g, TestFunction::Constant { value: 3.0 }, n).unwrap();
    let cols = sampler.run(5, 40_000, |m| vec![stat.eval(m), konst.eval(m)]).unwrap();
    let (m, se) = mean_se(&cols[0]);
    assert!((m - 0.5).abs() <= 4.0 * se, "{m} ± {se}");
    assert!(cols[1].iter().all(|&v| v == 0.0));
    let flat = empirical_cgf(&cols[1], &[-1.0, 0.0, 1.0]).unwrap();
    assert!(flat.iter().all(|e| e.value == 0.0));
}

#[test]
fn single_particle_modulus() {
    let p = PotentialFamily::ginibre().build::<f64>().unwrap();
    let ctx = NormContext::new(&p, TestFunction::r_squared(), Perturbation::none(), 1).unwrap();
    let sampler = ModulusSampler::new(&ctx).unwrap();
    let cols = sampler.run(2, 50_000, |m| vec![m.len() as f64, m[0] * m[0]]).unwrap();
    assert!(cols[0].iter().all(|&k| k == 1.0));
    let (m, se) = mean_se(&cols[1]);
    assert!((m - 1.0).abs() <= 4.0 * se);
}

#[test]
fn near_branching_index_splits_like_quadrature() {
    let p = PotentialFamily::gap_polynomial(60.0, 1.0, 6, 0.02).build::<f64>().unwrap();
    let g = compute_droplet(&p).unwrap();
    let n = 100;
    let ctx = NormContext::new(&p, TestFunction::r_squared(), Perturbation::none(), n).unwrap();
    let split = 0.5 * (g.components[0].1 + g.components[1].0);
    let (j, share) = (0..n)
        .map(|j| {
            let (inner, outer) = ctx.log_mass_split(j, split).unwrap();
            (j, 1.0 / (1.0 + (outer - inner).exp()))
        })
        .min_by(|a, b| (a.1 - 0.5).abs().total_cmp(&(b.1 - 0.5).abs()))
        .unwrap();
    assert!(share > 0.05 && share < 0.95, "no index with two live windows");
    let sampler = ModulusSampler::new(&ctx).unwrap();
    let draws = 20_000;
    let cols = sampler.run(9, draws, |m| vec![if m[j] < split { 1.0 } else { 0.0 }]).unwrap();
    let frac = cols[0].iter().sum::<f64>() / draws as f64;
    let se = (share * (1.0 - share) / draws as f64).sqrt();
    assert!((frac - share).abs() <= 4.0 * se, "j {j}: {frac} vs {share}");
}

#[test]
fn batches_round_trip_and_reproduce() {
    let p = PotentialFamily::ginibre().build::<f64>().unwrap();
    let ctx = NormContext::new(&p, TestFunction::r_squared(), Perturbation::none(), 12).unwrap();
    let sampler = ModulusSampler::new(&ctx).unwrap();
    let a = SampleBatch::collect(&sampler, 77, 64).unwrap();
    let b = SampleBatch::collect(&sampler, 77, 64).unwrap();
    assert_eq!(a, b);
    assert!(a.moduli.iter().flatten().all(|&r| r > 0.0));
    let mut buf = Vec::new();
    a.write_to(&mut buf).unwrap();
    assert_eq!(buf.len(), 24 + 8 * 12 * 64);
    assert_eq!(SampleBatch::read_from(buf.as_slice()).unwrap(), a);
}

#[test]
fn ginibre_partition_function_matches_gamma_products() {
    let p = PotentialFamily::ginibre().build::<f64>().unwrap();
    for n in [2, 7, 60] {
        let ctx = NormContext::new(&p, TestFunction::r_squared(), Perturbation::none(), n).unwrap();
        let (log_z, table) = ctx.log_partition_exact(PartitionMethod::Quadrature).unwrap();
        let want: f64 = ln_gamma((n + 1) as f64) + (0..n).map(|j| ginibre_log_hj::<f64>(j, n, 0.0)).sum::<f64>();
        assert_relative_eq!(log_z, want, max_relative = 1e-12);
        assert!(table.to_csv().starts_with("schema=1\nj,log_hj,method,err\n"));
    }
}

#[test]
fn scaled_ginibre_functionals() {
    for c in [0.5, 1.0, 3.0] {
        let p = PotentialFamily::Ginibre { scale: c }.build::<f64>().unwrap();
        let g = compute_droplet(&p).unwrap();
        assert_relative_eq!(energy_iq(&p, &g).unwrap(), 0.75 + 0.5 * c.ln(), epsilon = 1e-12);
        assert_relative_eq!(entropy_eq(&p, &g).unwrap(), c.ln(), epsilon = 1e-12);
        assert!(fq_total(&p, &g).unwrap().0.abs() < 1e-12);
        assert_relative_eq!(sigma_moment(&p, &g, &TestFunction::r_squared()).unwrap(), 0.5 / c, epsilon = 1e-12);
    }
}

#[test]
fn conical_constant_uses_barnes_g() {
    // G(1 + α) against G(2 + α) = Γ(1 + α) G(1 + α).
    for a in [-0.5, 0.3, 1.7] {
        let lhs = log_barnes_g(2.0 + a).unwrap();
        let rhs = ln_gamma(1.0 + a) + log_barnes_g(1.0 + a).unwrap();
        assert_relative_eq!(lhs, rhs, epsilon = 1e-12);
    }
}

#[test]
fn outpost_family_refuses_regular_expansion() {
    let p = PotentialFamily::ginibre_with_outpost(1.6, 0.06).unwrap().build::<f64>().unwrap();
    let g = compute_droplet(&p).unwrap();
    assert_eq!(g.outposts.len(), 1);
    let inputs = ExpansionInputs::new(&p, &g, TestFunction::r_squared(), Perturbation::none()).unwrap();
    assert!(matches!(inputs.expansion_regular(100), Err(Error::Precondition(_))));
}

#[test]
fn far_outpost_is_empty() {
    let d = HeineDist::new(1e-9, 1e-6).unwrap();
    assert!(d.pmf(0) > 1.0 - 1e-8);
}
