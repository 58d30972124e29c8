//! Reference values from independent computations and finite-L sanity laws.

use approx::assert_relative_eq;
use zrp::asymptotics::{gumbel_norming, resolve_n, scale_coordinates, AsymptoticParams, CaseLabel, NRule};
use zrp::oracle::{conditional_max_cdf, conditional_site_marginal, exact_p_sln, sum_distribution};
use zrp::sampler::{replica_rng, tilted_rejection_sample, ExactSampler, TiltedMarginal};
use zrp::stats::{equivalence_test, ks_test_discrete, Record, SampleBatch};
use zrp::{Exec, Marginal, ModelSpec, Weights};

fn fig2() -> Marginal {
    Marginal::new(&ModelSpec::stretched_rates(0.6, 2.0).unwrap()).unwrap()
}

#[test]
fn explicit_stretched_partition_function() {
    // Σ_n exp(-5 n^0.4) by 30-digit series summation.
    let w = Weights::new(&ModelSpec::explicit_stretched(0.6, 2.0).unwrap()).unwrap();
    assert_relative_eq!(w.partition(1.0).unwrap().z, 1.008_847_962_338_861, epsilon = 1e-12);
}

#[test]
fn yule_simon_partition_function() {
    // w(n) = 2/((n+1)(n+2)) telescopes to z(1) = 2.
    let w = Weights::new(&ModelSpec::power_law(2.0).unwrap()).unwrap();
    let p = w.partition(1.0).unwrap();
    assert!((p.z - 2.0).abs() <= p.truncation_bound + 1e-12, "z = {}", p.z);
}

#[test]
fn local_limit_at_the_critical_density() {
    let m = Marginal::new(&ModelSpec::power_law(5.0).unwrap()).unwrap();
    let l = 1024u64;
    let n = (m.rho_c() * l as f64).floor() as usize;
    let exact = exact_p_sln(&m, l, n).unwrap().exp();
    let clt = 1.0 / (2.0 * std::f64::consts::PI * m.sigma2() * l as f64).sqrt();
    assert!((exact / clt - 1.0).abs() < 0.05, "exact {exact} vs {clt}");
}

#[test]
fn gumbel_norming_at_a_million_sites() {
    let m = fig2();
    let l = 1_000_000u64;
    let (y, b) = gumbel_norming(&m, l).unwrap();
    // The interpolated tail hits 1/L exactly, so the integer neighbours bracket it.
    let below = l as f64 * m.tail_prob(y.floor() as usize);
    let above = l as f64 * m.tail_prob(y.ceil() as usize);
    assert!(above <= 1.0 && below >= 1.0, "y_L = {y}: {above}..{below}");
    assert!(b > 0.0 && b < y, "b_L = {b}");
}

#[test]
fn untilted_rejection_rate_matches_local_limit() {
    let m = fig2();
    let l = 256usize;
    let n = (m.rho_c() * l as f64).floor() as u64;
    let tilt = TiltedMarginal::new(&m, None, 0.0);
    let mut rng = replica_rng(11, 0);
    let (mut accepted, mut trials) = (0u64, 0u64);
    while accepted < 400 {
        let d = tilted_rejection_sample(&tilt, l, n, 1_000_000, &mut rng).unwrap();
        assert_eq!(d.config.sum(), n);
        accepted += 1;
        trials += d.trials;
    }
    let rate = accepted as f64 / trials as f64;
    let clt = 1.0 / (2.0 * std::f64::consts::PI * m.sigma2() * l as f64).sqrt();
    assert!(rate / clt < 1.5 && clt / rate < 1.5, "rate {rate} vs {clt}");
}

#[test]
fn capped_rejection_matches_capped_exact_law() {
    let m = fig2();
    let (l, n, cap) = (16usize, 30u64, 12usize);
    let tilt = TiltedMarginal::new(&m, Some(cap), 0.0);
    let mut rng = replica_rng(12, 0);
    let maxima: Vec<u64> = (0..4000)
        .map(|_| tilted_rejection_sample(&tilt, l, n, 1_000_000, &mut rng).unwrap().config.max().1)
        .collect();
    assert!(maxima.iter().all(|&x| x as usize <= cap));
    let ms: Vec<usize> = (0..=cap).collect();
    let cdf = conditional_max_cdf(&m, l as u64, n as usize, &ms).unwrap();
    let top = cdf[cap];
    let capped: Vec<f64> = cdf.iter().map(|c| c / top).collect();
    let ks = ks_test_discrete(&maxima, &capped).unwrap();
    assert!(ks.p_value > 0.01, "{ks:?}");
}

#[test]
fn exact_sites_match_the_conditional_marginal() {
    let m = fig2();
    let (l, n) = (64u64, 70u64);
    let sampler = ExactSampler::new(&m, l, n).unwrap();
    let mut batch = SampleBatch::new(None, l, n, None);
    batch
        .extend(sampler.replicas(5, 100_000 / l as usize * 4, Exec::default(), |c| Record::from_config(c, true)))
        .unwrap();
    let reference = conditional_site_marginal(&m, l, n as usize).unwrap();
    let eq = equivalence_test(&batch, &reference, false).unwrap();
    assert!(eq.sites >= 100_000);
    assert!(eq.tv < 0.01, "tv = {}", eq.tv);
}

#[test]
fn critical_window_max_law_has_two_phases() {
    let m = fig2();
    let l = 64u64;
    let n = resolve_n(&NRule::Subl { gamma: 0.0 }, &m, l).unwrap().n;
    let rep = scale_coordinates(&AsymptoticParams::new(&m).unwrap(), l, n).unwrap();
    assert_eq!(rep.case, CaseLabel::SeC);
    let law = sum_distribution(&m, l, n as usize, None).unwrap();
    assert!(law.log_p(n as usize).is_finite());
    let ms: Vec<usize> = (0..=n as usize).collect();
    let cdf = conditional_max_cdf(&m, l, n as usize, &ms).unwrap();
    // Fluid replicas keep M_L small; condensed ones carry a share of the excess.
    let k = rep.k;
    let fluid = cdf[(k / 4.0) as usize];
    assert!(fluid > 0.05 && fluid < 0.95, "P[M_L <= k/4] = {fluid}");
}
