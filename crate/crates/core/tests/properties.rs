use proptest::prelude::*;
use qstein::asymptotics::{normal_cdf, normal_quantile, rate_estimates};
use qstein::divergence::{info_variance, psi_s, relative_entropy};
use qstein::models::spin::{high_temp_condition, pauli_string};
use qstein::models::{Caps, IidModel, Interaction};
use qstein::modular::{modular_ratio_table, ns_spectral_measure};
use qstein::operator::{
    matrix_function, positive_part, positive_support_projector, trace_norm, DensityMatrix, HermitianOperator,
};
use qstein::random::{random_commuting_pair, random_density, random_probability, random_unitary};
use qstein::testing::{beta_opt, error_pair, esym_star, li_test, np_test};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn pair(seed: u64, dim: usize) -> (DensityMatrix, DensityMatrix) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (random_density(dim, 0.05, &mut rng).unwrap(), random_density(dim, 0.05, &mut rng).unwrap())
}

fn hermitian(seed: u64, dim: usize) -> HermitianOperator {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u = random_unitary(dim, &mut rng).unwrap();
    let vals: Vec<f64> = random_probability(dim, &mut rng).iter().map(|p| 4.0 * p - 2.0 / dim as f64).collect();
    HermitianOperator::from_fn(dim, |i, j| (0..dim).map(|k| u[(i, k)] * vals[k] * u[(j, k)].conj()).sum()).unwrap()
}

fn psi(a: &DensityMatrix, b: &DensityMatrix, s: f64) -> f64 {
    psi_s(a.op(), b.op(), s).unwrap().unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn positive_part_splits(seed in any::<u64>(), dim in 2usize..6) {
        let h = hermitian(seed, dim);
        let plus = positive_part(&h).unwrap();
        let minus = positive_part(&h.scale(-1.0)).unwrap();
        prop_assert!(h.max_abs_diff(&plus.sub(&minus)) < 1e-10);
        let p = positive_support_projector(&h).unwrap();
        let php = HermitianOperator::new(p.op().matmul(&HermitianOperator::new(h.matmul(p.op())).unwrap())).unwrap();
        prop_assert!(php.max_abs_diff(&plus) < 1e-10);
        prop_assert!(trace_norm(&h).unwrap() >= h.trace().abs() - 1e-12);
    }

    #[test]
    fn matrix_function_composes(seed in any::<u64>(), dim in 2usize..6) {
        let h = hermitian(seed, dim);
        let once = matrix_function(&h, |x| (0.5 * x).exp().sin()).unwrap();
        let twice = matrix_function(&matrix_function(&h, |x| (0.5 * x).exp()).unwrap(), f64::sin).unwrap();
        prop_assert!(once.max_abs_diff(&twice) < 1e-10);
    }

    #[test]
    fn psi_swap_endpoints_and_convexity(seed in any::<u64>(), dim in 2usize..6) {
        let (rho, sigma) = pair(seed, dim);
        prop_assert!(psi(&rho, &sigma, 0.0).abs() < 1e-12);
        prop_assert!(psi(&rho, &sigma, 1.0).abs() < 1e-12);
        let h = 0.05;
        let vals: Vec<f64> = (0..=20).map(|k| psi(&rho, &sigma, k as f64 * h)).collect();
        for (k, v) in vals.iter().enumerate() {
            prop_assert!((v - psi(&sigma, &rho, 1.0 - k as f64 * h)).abs() < 1e-10);
        }
        for w in vals.windows(3) {
            prop_assert!(w[0] - 2.0 * w[1] + w[2] >= -1e-8);
        }
    }

    #[test]
    fn measure_identities(seed in any::<u64>(), dim in 2usize..6) {
        let (rho, sigma) = pair(seed, dim);
        let m_rs = ns_spectral_measure(&rho, &sigma).unwrap();
        let m_sr = ns_spectral_measure(&sigma, &rho).unwrap();
        prop_assert!((m_rs.total() - 1.0).abs() < 1e-10);
        for k in 0..=10 {
            let s = k as f64 / 10.0;
            prop_assert!((m_rs.cgf_real(s) - psi(&rho, &sigma, s)).abs() < 1e-10);
            prop_assert!((m_rs.cgf_real(s) - m_sr.cgf_real(1.0 - s)).abs() < 1e-10);
        }
        let d = relative_entropy(&rho, &sigma).unwrap().unwrap();
        let v = info_variance(&rho, &sigma).unwrap().unwrap();
        prop_assert!(d >= -1e-10 && v >= -1e-10);
        prop_assert!((m_sr.mean() - d).abs() < 1e-8);
        prop_assert!((m_sr.variance() - v).abs() < 1e-8);
        let table = modular_ratio_table(&rho, &sigma).unwrap();
        let (tr_rho, tr_sigma) = table.marginal_totals();
        prop_assert!((tr_rho - 1.0).abs() < 1e-10 && (tr_sigma - 1.0).abs() < 1e-10);
    }

    #[test]
    fn commuting_relative_entropy_is_kl(seed in any::<u64>(), dim in 2usize..7) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (rho, sigma) = random_commuting_pair(dim, 0.05, &mut rng).unwrap();
        // read the joint distribution off rho's eigenbasis
        let vecs = rho.spectrum().vectors();
        let vals = rho.spectrum().column_values();
        let kl: f64 = (0..dim)
            .map(|k| {
                let col = vecs.col(k);
                let q: f64 = (0..dim)
                    .flat_map(|i| (0..dim).map(move |j| (i, j)))
                    .map(|(i, j)| (col[i].conj() * sigma.op().get(i, j) * col[j]).re)
                    .sum();
                vals[k] * (vals[k] / q).ln()
            })
            .sum();
        prop_assert!((relative_entropy(&rho, &sigma).unwrap().unwrap() - kl).abs() < 1e-10);
    }

    #[test]
    fn esym_symmetric_and_attained(seed in any::<u64>(), dim in 2usize..6) {
        let (rho, sigma) = pair(seed, dim);
        let e = esym_star(rho.op(), sigma.op()).unwrap();
        prop_assert!((e - esym_star(sigma.op(), rho.op()).unwrap()).abs() < 1e-12);
        let t = positive_support_projector(&rho.op().sub(sigma.op())).unwrap();
        let ep = error_pair(&rho, &sigma, &t).unwrap();
        prop_assert!((ep.alpha + ep.beta - e).abs() < 1e-10);
    }

    #[test]
    fn np_tests_dominate_random_tests(seed in any::<u64>(), dim in 2usize..5, gamma in -1.5f64..1.5) {
        let (rho, sigma) = pair(seed, dim);
        let t = np_test(rho.op(), sigma.op(), gamma).unwrap();
        let ep = error_pair(&rho, &sigma, &t).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        for _ in 0..20 {
            // a random test: a random state rescaled to operator norm <= 1
            let w = random_density(dim, 0.0, &mut rng).unwrap();
            let scale = 1.0 / w.spectrum().eigenvalues().last().unwrap();
            let other = qstein::operator::TestOperator::new(w.op().scale(scale)).unwrap();
            let eo = error_pair(&rho, &sigma, &other).unwrap();
            if eo.alpha <= ep.alpha {
                prop_assert!(eo.beta >= ep.beta - 1e-10);
            }
        }
    }

    #[test]
    fn beta_opt_monotone_and_dominates_li(seed in any::<u64>(), dim in 2usize..5, l in 0.5f64..20.0) {
        let (rho, sigma) = pair(seed, dim);
        let mut prev = f64::INFINITY;
        for k in 1..10 {
            let r = beta_opt(&rho, &sigma, k as f64 / 10.0).unwrap();
            prop_assert!(r.achieved_alpha <= k as f64 / 10.0 + 1e-10);
            prop_assert!(r.beta_star <= prev + 1e-12);
            prev = r.beta_star;
        }
        let li = li_test(&rho, &sigma, l).unwrap();
        prop_assert!(li.alpha_actual <= li.alpha_bound + 1e-10);
        prop_assert!(li.beta_actual <= li.pinching_beta_bound + 1e-10);
        if li.alpha_actual > 1e-9 && li.alpha_actual < 1.0 {
            let opt = beta_opt(&rho, &sigma, li.alpha_actual).unwrap();
            prop_assert!(opt.beta_star <= li.beta_actual + 1e-10);
        }
    }

    #[test]
    fn iid_rates_do_not_depend_on_n(seed in any::<u64>(), dim in 2usize..4) {
        let (rho, sigma) = pair(seed, dim);
        let model = IidModel::new(rho, sigma, Caps::default()).unwrap();
        let est = rate_estimates(&model, &[1, 2, 3, 4, 5]).unwrap();
        for row in &est.per_n {
            prop_assert!((row.d_per_w - est.d_hat).abs() < 1e-10);
            prop_assert!((row.v_per_w - est.v_hat).abs() < 1e-10);
        }
    }

    #[test]
    fn high_temp_lhs_increasing(j in 0.1f64..2.0, h in 0.0f64..2.0, b1 in 0.0f64..0.2, b2 in 0.0f64..0.2) {
        let mut phi = Interaction::new(2);
        phi.add_term(&[0, 1], pauli_string("ZZ", j).unwrap()).unwrap();
        let psi = Interaction::new(2).with_term(&[0], pauli_string("X", h.max(0.1)).unwrap()).unwrap();
        let (base, _) = high_temp_condition(&phi, &psi, b1, b2, 0.5, 0.1).unwrap();
        let (up1, _) = high_temp_condition(&phi, &psi, b1 + 0.01, b2, 0.5, 0.1).unwrap();
        let (up2, _) = high_temp_condition(&phi, &psi, b1, b2 + 0.01, 0.5, 0.1).unwrap();
        prop_assert!(up1 > base && up2 > base);
    }
}

proptest! {
    #![proptest_config(ProptestConfig { failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn normal_quantile_inverts_cdf(p in 1e-8f64..(1.0 - 1e-8)) {
        let x = normal_quantile(p).unwrap();
        prop_assert!((normal_cdf(x) - p).abs() <= 1e-10 * p.min(1.0 - p).max(1e-6));
    }

    #[test]
    fn normal_cdf_increasing(x in -8.0f64..8.0, dx in 1e-6f64..1.0) {
        prop_assert!(normal_cdf(x + dx) > normal_cdf(x));
    }
}
