use proptest::prelude::*;
use radgas::droplet::compute_droplet;
use radgas::fluctuations::{poisson_binomial, total_variation};
use radgas::free_energy::NormContext;
use radgas::heine::{dnormal_check, HeineDist};
use radgas::potential::{Perturbation, PotentialFamily, TestFunction};
use radgas::qspecial::{
    displacement_gn, displacement_gn_via_theta, q_binomial_check, qpoch_finite, qpoch_infinite_log,
    theta_bridge_residual, GapTerm,
};
use radgas::sum::compensated_sum;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn q_binomial_theorem(z in -1.0f64..1.0, q in 0.05f64..0.9, n in 0usize..20) {
        prop_assert!(q_binomial_check(z, q, n) < 1e-10);
    }

    #[test]
    fn finite_products_converge(z in -0.9f64..0.9, q in 0.05f64..0.7) {
        let finite = qpoch_finite(z, q, 200).ln();
        prop_assert!((finite - qpoch_infinite_log(z, q).unwrap()).abs() < 1e-13);
    }

    #[test]
    fn theta_bridge(x in 0.0f64..1.0, p in 0.1f64..0.9, q in 0.2f64..5.0) {
        prop_assert!(theta_bridge_residual(x, p, q).unwrap() < 1e-10);
    }

    #[test]
    fn displacement_two_ways(x in 0.0f64..1.0, rho in 0.05f64..0.9, mu in 0.1f64..10.0) {
        let g = [GapTerm { x, rho, mu }];
        let a = displacement_gn(&g).unwrap();
        let b = displacement_gn_via_theta(&g).unwrap();
        prop_assert!((a - b).abs() < 1e-10 * (1.0 + a.abs()));
    }

    #[test]
    fn heine_law(theta in 0.01f64..5.0, q in 0.05f64..0.9) {
        let d = HeineDist::new(theta, q).unwrap();
        let t = d.table();
        prop_assert!((compensated_sum(t.iter().copied()) - 1.0).abs() < 1e-12);
        let (mean, _, eq) = d.moments();
        let direct: f64 = compensated_sum(t.iter().enumerate().map(|(k, p)| k as f64 * p));
        prop_assert!((mean - direct).abs() < 1e-10);
        prop_assert!((eq - 1.0 / (1.0 + theta)).abs() < 1e-15);
        prop_assert!(d.cgf_scaled(1.3, 0.0).unwrap().abs() < 1e-14);
    }

    #[test]
    fn discrete_normal_difference(theta in 0.2f64..5.0, rho in 0.1f64..0.85) {
        let q = rho * rho;
        let plus = HeineDist::new(theta * rho, q).unwrap();
        let minus = HeineDist::new(rho / theta, q).unwrap();
        prop_assert!(dnormal_check(&plus, &minus).unwrap() < 1e-10);
    }

    #[test]
    fn poisson_binomial_law(ps in proptest::collection::vec(0.0f64..1.0, 1..30)) {
        let law = poisson_binomial(&ps);
        prop_assert_eq!(law.len(), ps.len() + 1);
        prop_assert!((law.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let mean: f64 = law.iter().enumerate().map(|(k, p)| k as f64 * p).sum();
        prop_assert!((mean - ps.iter().sum::<f64>()).abs() < 1e-10);
        prop_assert!(total_variation(&law, &law) == 0.0);
    }

    #[test]
    fn total_variation_is_a_distance(a in proptest::collection::vec(0.0f64..1.0, 1..10), b in proptest::collection::vec(0.0f64..1.0, 1..10)) {
        let norm = |v: &Vec<f64>| { let s: f64 = v.iter().sum::<f64>() + 1e-9; v.iter().map(|x| x / s).collect::<Vec<_>>() };
        let (a, b) = (norm(&a), norm(&b));
        let d = total_variation(&a, &b);
        prop_assert!((0.0..=1.0 + 1e-12).contains(&d));
        prop_assert!((d - total_variation(&b, &a)).abs() < 1e-15);
    }

    #[test]
    fn compensated_sum_is_order_free(mut v in proptest::collection::vec(-1e6f64..1e6, 1..200)) {
        let a = compensated_sum(v.iter().copied());
        v.reverse();
        let b = compensated_sum(v.iter().copied());
        prop_assert!((a - b).abs() <= 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    // log h_j for q = c r² is log h_j for r² shifted by −(j + 1 + α) log c.
    #[test]
    fn scale_covariance(c in 0.3f64..3.0, alpha in -0.4f64..1.0, n in 2usize..40, frac in 0.0f64..1.0) {
        let j = ((n - 1) as f64 * frac) as usize;
        let pert = Perturbation::new(0.0, alpha).unwrap();
        let unit = PotentialFamily::ginibre().build::<f64>().unwrap();
        let scaled = PotentialFamily::Ginibre { scale: c }.build::<f64>().unwrap();
        let a = NormContext::new(&unit, TestFunction::r_squared(), pert, n).unwrap().norm_hj_quadrature(j).unwrap().log_hj;
        let b = NormContext::new(&scaled, TestFunction::r_squared(), pert, n).unwrap().norm_hj_quadrature(j).unwrap().log_hj;
        let want = a - (j as f64 + 1.0 + alpha) * c.ln();
        prop_assert!((b - want).abs() < 1e-10 * (1.0 + want.abs()));
    }

    #[test]
    fn droplet_masses_are_ordered(c1 in 0.5f64..2.0, c2 in 0.5f64..2.0) {
        let p = PotentialFamily::even_polynomial(vec![0.0, -c1, c2]).build::<f64>().unwrap();
        let g = compute_droplet(&p).unwrap();
        let (a, b) = g.components[0];
        // Inner radius solves q'(a) = 0 and the outer one b q'(b) = 2.
        prop_assert!((a * a - c1 / (2.0 * c2)).abs() < 1e-8);
        prop_assert!((b * b * (4.0 * c2 * b * b - 2.0 * c1) - 2.0).abs() < 1e-8);
        prop_assert!((g.masses.last().unwrap() - 1.0).abs() < 1e-12);
    }
}
