//! Structural invariants checked on random inputs.

use proptest::prelude::*;
use zrp::asymptotics::{resolve_n, NRule};
use zrp::num::compensated_sum;
use zrp::oracle::{conditional_max_cdf, log_convolve, log_convolve_direct, sum_distribution};
use zrp::sampler::{
    replica_rng, solve_tilt, Configuration, DynamicsSpec, ExactSampler, Hop, Kmc, Metropolis, TiltedMarginal,
};
use zrp::stats::{ks_distance, tv_distance, PathSpec, Record};
use zrp::{Exec, Marginal, ModelSpec};

fn pmf(raw: &[f64]) -> Vec<f64> {
    let s: f64 = raw.iter().sum();
    raw.iter().map(|x| x / s).collect()
}

fn log_vec(p: &[f64]) -> Vec<f64> {
    p.iter().map(|x| x.ln()).collect()
}

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.len() == b.len()
        && a.iter().zip(b).all(|(x, y)| x == y || (x - y).abs() <= tol * (1.0 + x.abs().max(y.abs())))
}

fn small_pmf() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.01f64..1.0, 2..8).prop_map(|v| pmf(&v))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn rate_families_are_normalized(lambda in 0.35f64..0.95, b in 0.5f64..4.0, explicit in any::<bool>()) {
        let spec = if explicit {
            ModelSpec::explicit_stretched(lambda, b)
        } else {
            ModelSpec::stretched_rates(lambda, b)
        }.unwrap();
        let m = Marginal::new(&spec).unwrap();
        let total = compensated_sum(m.p().iter().copied());
        prop_assert!((total - 1.0).abs() < 1e-12);
        prop_assert!(m.p().iter().all(|&x| x >= 0.0));
        prop_assert!(m.rho_c() > 0.0 && m.sigma2() > 0.0);
    }

    #[test]
    fn fast_convolution_matches_direct(a in small_pmf(), b in small_pmf(), extra in 0usize..6) {
        let (la, lb) = (log_vec(&a), log_vec(&b));
        let n_max = a.len() + b.len() - 2 + extra;
        let fast = log_convolve(&la, &lb, n_max, Exec::Sequential);
        let slow = log_convolve_direct(&la, &lb, n_max);
        prop_assert!(close(&fast, &slow, 1e-12));
        let par = log_convolve(&la, &lb, n_max, Exec::Parallel);
        prop_assert_eq!(par, fast);
    }

    #[test]
    fn convolution_is_commutative_and_associative(a in small_pmf(), b in small_pmf(), c in small_pmf()) {
        let (la, lb, lc) = (log_vec(&a), log_vec(&b), log_vec(&c));
        let n = a.len() + b.len() + c.len() - 3;
        let ab = log_convolve(&la, &lb, n, Exec::Sequential);
        let ba = log_convolve(&lb, &la, n, Exec::Sequential);
        prop_assert!(close(&ab, &ba, 1e-12));
        let ab_c = log_convolve(&ab, &lc, n, Exec::Sequential);
        let bc = log_convolve(&lb, &lc, n, Exec::Sequential);
        let a_bc = log_convolve(&la, &bc, n, Exec::Sequential);
        prop_assert!(close(&ab_c, &a_bc, 1e-12));
    }

    #[test]
    fn sum_law_is_normalized(p in small_pmf(), l in 1u64..40) {
        let m = Marginal::from_pmf(&p).unwrap();
        let n_max = (p.len() - 1) * l as usize;
        let law = sum_distribution(&m, l, n_max, None).unwrap();
        prop_assert!((law.total_mass() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn conditional_max_cdf_is_a_cdf(p in small_pmf(), l in 1u64..12, frac in 0.0f64..1.0) {
        let m = Marginal::from_pmf(&p).unwrap();
        let top = (p.len() - 1) * l as usize;
        let n = (frac * top as f64).round() as usize;
        let ms: Vec<usize> = (0..=n).collect();
        let cdf = conditional_max_cdf(&m, l, n, &ms).unwrap();
        prop_assert!(cdf.windows(2).all(|w| w[1] >= w[0] - 1e-12));
        prop_assert!(cdf.iter().all(|&c| (-1e-12..=1.0 + 1e-12).contains(&c)));
        prop_assert!((cdf[n] - 1.0).abs() < 1e-10);
        // M_L ≥ ⌈N/L⌉ always.
        let lower = n.div_ceil(l as usize);
        if lower > 0 {
            prop_assert!(cdf[lower - 1].abs() < 1e-12);
        }
    }

    #[test]
    fn exact_samples_live_on_the_shell(p in small_pmf(), l in 1u64..50, frac in 0.0f64..1.0, seed in any::<u64>()) {
        let m = Marginal::from_pmf(&p).unwrap();
        let n = (frac * ((p.len() - 1) as u64 * l) as f64).round() as u64;
        let s = ExactSampler::new(&m, l, n).unwrap();
        let c = s.sample(&mut replica_rng(seed, 0));
        prop_assert_eq!(c.eta.len(), l as usize);
        prop_assert_eq!(c.sum(), n);
        prop_assert!(c.eta.iter().all(|&v| (v as usize) < p.len()));
        let r = Record::from_config(&c, false);
        prop_assert!(r.second_max <= r.max);
    }

    #[test]
    fn metropolis_conserves_mass(l in 2usize..20, n in 0u64..60, moves in 0u64..5000, seed in any::<u64>()) {
        let m = Marginal::new(&ModelSpec::stretched_rates(0.6, 2.0).unwrap()).unwrap();
        let mut chain = Metropolis::new(&m, Configuration::uniform(l, n), replica_rng(seed, 1));
        chain.run(moves);
        prop_assert_eq!(chain.state().sum(), n);
        prop_assert!((0.0..=1.0).contains(&chain.acceptance_rate()));
    }

    #[test]
    fn kmc_conserves_mass(l in 1usize..16, n in 0u64..40, t in 0.0f64..20.0, symmetric in any::<bool>(), seed in any::<u64>()) {
        let m = Marginal::new(&ModelSpec::stretched_rates(0.6, 2.0).unwrap()).unwrap();
        let hop = if symmetric { Hop::Symmetric } else { Hop::TotallyAsymmetric };
        let kmc = Kmc::new(&m, DynamicsSpec { l, hop }, n);
        prop_assert_eq!(kmc.rate(0), 0.0);
        let r = kmc.run(Configuration::uniform(l, n), t, 0.0, Some(1.0), &mut replica_rng(seed, 2)).unwrap();
        prop_assert_eq!(r.state.sum(), n);
        prop_assert!(r.snapshots.iter().all(|(_, c)| c.sum() == n));
        prop_assert!(r.time <= t + 1e-12);
    }

    #[test]
    fn tilt_mean_increases_with_s(s1 in -1.0f64..0.3, ds in 0.01f64..0.5, cap in 5usize..60) {
        let m = Marginal::new(&ModelSpec::stretched_rates(0.6, 2.0).unwrap()).unwrap();
        let a = TiltedMarginal::new(&m, Some(cap), s1);
        let b = TiltedMarginal::new(&m, Some(cap), s1 + ds);
        prop_assert!(b.rho() > a.rho());
        prop_assert!(a.sigma2() > 0.0);
    }

    #[test]
    fn solved_tilt_hits_its_target(frac in 0.05f64..0.95, cap in 5usize..40) {
        let m = Marginal::new(&ModelSpec::stretched_rates(0.6, 2.0).unwrap()).unwrap();
        let target = frac * cap as f64;
        let t = solve_tilt(&m, Some(cap), target).unwrap();
        prop_assert!((t.rho() - target).abs() < 1e-6 * (1.0 + target));
    }

    #[test]
    fn distances_are_bounded(x in prop::collection::vec(-3.0f64..3.0, 1..200), p in small_pmf(), q in small_pmf()) {
        let d = ks_distance(&x, |v| 1.0 / (1.0 + (-v).exp()));
        prop_assert!((0.0..=1.0).contains(&d));
        let tv = tv_distance(&p, &q);
        prop_assert!((0.0..=1.0 + 1e-12).contains(&tv));
        prop_assert!((tv - tv_distance(&q, &p)).abs() < 1e-15);
    }

    #[test]
    fn x_path_returns_to_zero(eta in prop::collection::vec(0u64..50, 1..300)) {
        let m = Marginal::new(&ModelSpec::stretched_rates(0.6, 2.0).unwrap()).unwrap();
        let n: u64 = eta.iter().sum();
        let spec = PathSpec::x(&m, eta.len() as u64, n);
        let path = spec.path(&eta);
        prop_assert!(path.terminal().abs() < 1e-9);
        prop_assert_eq!(path.values[0], 0.0);
    }

    #[test]
    fn fixed_rule_is_identity(n in 0u64..1_000_000, l in 1u64..100_000) {
        let m = Marginal::new(&ModelSpec::stretched_rates(0.6, 2.0).unwrap()).unwrap();
        let r = resolve_n(&NRule::Fixed { n }, &m, l).unwrap();
        prop_assert_eq!(r.n, n);
    }
}
