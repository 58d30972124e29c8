//! Exact finite-`L` laws of `S_L` and of `M_L` given `S_L = N`.
//!
//! Sums are built by binary power doubling of the single-site vector, with
//! direct (quadratic) convolutions so that far-tail entries keep full
//! relative accuracy. Each convolution runs in the linear domain on rescaled
//! inputs and falls back to an exact log-sum-exp for any output entry small
//! enough to be affected by underflow.

use std::collections::BTreeMap;
use std::io::Write;

use crate::asymptotics;
use crate::error::{Error, Result};
use crate::marginal::Marginal;
use crate::num::log_sum_exp;
use crate::par::Exec;

/// Linear-domain results below this (relative to the rescaled maximum) are
/// recomputed exactly in log space.
const UNDERFLOW_GUARD: f64 = 1e-250;

/// Execution settings for the oracle.
#[derive(Clone, Copy, Debug)]
pub struct OracleConfig {
    pub exec: Exec,
    /// Upper bound on `Σ (n_max+1)^2` over all convolutions of one build.
    pub budget: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            exec: Exec::default(),
            budget: 2e11,
        }
    }
}

/// Index of the last finite entry, or `None` if all are `-inf`.
fn last_finite(v: &[f64]) -> Option<usize> {
    v.iter().rposition(|x| *x > f64::NEG_INFINITY)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let tail: f64 = ra.iter().zip(rb).map(|(x, y)| x * y).sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Exact `log Σ_j exp(a[j] + b[n-j])` for a single output index.
fn lse_entry(a: &[f64], b: &[f64], n: usize) -> f64 {
    let lo = n.saturating_sub(b.len() - 1);
    let hi = n.min(a.len() - 1);
    if lo > hi {
        return f64::NEG_INFINITY;
    }
    let terms: Vec<f64> = (lo..=hi).map(|j| a[j] + b[n - j]).collect();
    log_sum_exp(&terms)
}

/// Reference convolution: log-sum-exp for every entry.
pub fn log_convolve_direct(a: &[f64], b: &[f64], n_max: usize) -> Vec<f64> {
    (0..=n_max).map(|n| lse_entry(a, b, n)).collect()
}

/// Log-domain convolution `c[n] = log Σ_j exp(a[j] + b[n-j])` for `n ≤ n_max`.
pub fn log_convolve(a: &[f64], b: &[f64], n_max: usize, exec: Exec) -> Vec<f64> {
    let mut out = vec![f64::NEG_INFINITY; n_max + 1];
    let (Some(ha), Some(hb)) = (last_finite(a), last_finite(b)) else {
        return out;
    };
    let a = &a[..=ha];
    let b = &b[..=hb];
    let ma = a.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mb = b.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let al: Vec<f64> = a.iter().map(|&x| (x - ma).exp()).collect();
    let br: Vec<f64> = b.iter().rev().map(|&x| (x - mb).exp()).collect();
    let top = (ha + hb).min(n_max);
    exec.fill(&mut out[..=top], |n| {
        let lo = n.saturating_sub(hb);
        let hi = n.min(ha);
        // b[n-j] = br[hb - n + j]
        let s = dot(&al[lo..=hi], &br[hb + lo - n..=hb + hi - n]);
        if s >= UNDERFLOW_GUARD {
            ma + mb + s.ln()
        } else {
            lse_entry(a, b, n)
        }
    });
    out
}

/// Exact law of `S_L` (optionally with every site capped at `m`), as
/// `log P[S_L = n, max_x η_x ≤ m]` for `n ≤ n_max`.
#[derive(Clone, Debug, PartialEq)]
pub struct ExactLaw {
    pub l: u64,
    pub n_max: usize,
    pub cap: Option<usize>,
    pub log_ps: Vec<f64>,
}

impl ExactLaw {
    pub fn log_p(&self, n: usize) -> f64 {
        self.log_ps.get(n).copied().unwrap_or(f64::NEG_INFINITY)
    }

    /// Total retained mass `Σ_n P[S_L = n, ...]`.
    pub fn total_mass(&self) -> f64 {
        log_sum_exp(&self.log_ps).exp()
    }

    /// CSV with header `n,log_p`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "n,log_p")?;
        for (n, lp) in self.log_ps.iter().enumerate() {
            writeln!(w, "{n},{lp:.17e}")?;
        }
        Ok(())
    }
}

/// Doubling tables for `P_m` with `m` a power of two or a residual `L mod 2^j`.
/// These are exactly the sub-block sizes visited by the exact sampler.
#[derive(Clone, Debug)]
pub struct SumTables {
    l: u64,
    n_max: usize,
    cap: Option<usize>,
    tables: BTreeMap<u64, Vec<f64>>,
}

/// Number of convolutions used by [`SumTables::build`] for `l` sites.
fn convolution_count(l: u64) -> u32 {
    let bits = 64 - l.leading_zeros();
    (bits - 1) + l.count_ones()
}

impl SumTables {
    pub fn build(
        marginal: &Marginal,
        l: u64,
        n_max: usize,
        cap: Option<usize>,
        cfg: &OracleConfig,
    ) -> Result<Self> {
        if l < 1 {
            return Err(Error::InvalidArgument("L must be at least 1".into()));
        }
        let cost = (n_max as f64 + 1.0).powi(2) * convolution_count(l) as f64;
        if cost > cfg.budget {
            return Err(Error::Budget(format!(
                "L = {l}, N_max = {n_max} needs {cost:.3e} pair operations, budget is {:.3e}",
                cfg.budget
            )));
        }
        // The stored support only certifies the mass; large single jumps
        // must still be present, so the pmf is continued up to `n_max`.
        let top = n_max.min(cap.unwrap_or(usize::MAX));
        let mut base = vec![f64::NEG_INFINITY; n_max + 1];
        base[..=top].copy_from_slice(&marginal.log_pmf_upto(top));
        let mut delta = vec![f64::NEG_INFINITY; n_max + 1];
        delta[0] = 0.0;

        let mut tables = BTreeMap::new();
        tables.insert(0u64, delta.clone());
        let bits = 64 - l.leading_zeros();
        let mut pow = base;
        let mut acc: Option<Vec<f64>> = None;
        for j in 0..bits {
            let size = 1u64 << j;
            if l & size != 0 {
                acc = Some(match acc {
                    None => pow.clone(),
                    Some(a) => log_convolve(&a, &pow, n_max, cfg.exec),
                });
                let residual = l & ((size << 1) - 1);
                tables.insert(residual, acc.clone().unwrap());
            }
            let next = if j + 1 < bits {
                Some(log_convolve(&pow, &pow, n_max, cfg.exec))
            } else {
                None
            };
            tables.insert(size, pow);
            match next {
                Some(p) => pow = p,
                None => break,
            }
        }
        Ok(SumTables {
            l,
            n_max,
            cap,
            tables,
        })
    }

    pub fn l(&self) -> u64 {
        self.l
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn cap(&self) -> Option<usize> {
        self.cap
    }

    /// `log P[S_m = ·]` for a block size held in the tables.
    pub fn table(&self, m: u64) -> Option<&[f64]> {
        self.tables.get(&m).map(|v| v.as_slice())
    }

    /// The full law of `S_L`.
    pub fn law(&self) -> ExactLaw {
        ExactLaw {
            l: self.l,
            n_max: self.n_max,
            cap: self.cap,
            log_ps: self.tables[&self.l].clone(),
        }
    }
}

/// Default retained support `⌈ρ_c L + 12σ√L + 4Δ_L⌉`.
pub fn default_n_max(marginal: &Marginal, l: u64) -> usize {
    let lf = l as f64;
    let delta = asymptotics::critical_scale(marginal, l).unwrap_or(0.0);
    (marginal.rho_c() * lf + 12.0 * marginal.sigma() * lf.sqrt() + 4.0 * delta).ceil() as usize
}

/// Exact `log P[S_L = n, all η_x ≤ cap]` for `n ≤ n_max`.
pub fn sum_distribution(
    marginal: &Marginal,
    l: u64,
    n_max: usize,
    cap: Option<usize>,
) -> Result<ExactLaw> {
    sum_distribution_with(marginal, l, n_max, cap, &OracleConfig::default())
}

pub fn sum_distribution_with(
    marginal: &Marginal,
    l: u64,
    n_max: usize,
    cap: Option<usize>,
    cfg: &OracleConfig,
) -> Result<ExactLaw> {
    Ok(SumTables::build(marginal, l, n_max, cap, cfg)?.law())
}

/// Exact `log P[S_L = N]`.
pub fn exact_p_sln(marginal: &Marginal, l: u64, n: usize) -> Result<f64> {
    exact_p_sln_with(marginal, l, n, &OracleConfig::default())
}

pub fn exact_p_sln_with(marginal: &Marginal, l: u64, n: usize, cfg: &OracleConfig) -> Result<f64> {
    let lp = sum_distribution_with(marginal, l, n, None, cfg)?.log_p(n);
    if lp == f64::NEG_INFINITY {
        return Err(Error::ImpossibleN { l, n: n as u64 });
    }
    Ok(lp)
}

/// `P[M_L ≤ m | S_L = N]` for each `m` in `ms`.
pub fn conditional_max_cdf(marginal: &Marginal, l: u64, n: usize, ms: &[usize]) -> Result<Vec<f64>> {
    conditional_max_cdf_with(marginal, l, n, ms, &OracleConfig::default())
}

pub fn conditional_max_cdf_with(
    marginal: &Marginal,
    l: u64,
    n: usize,
    ms: &[usize],
    cfg: &OracleConfig,
) -> Result<Vec<f64>> {
    let inner = OracleConfig {
        exec: Exec::Sequential,
        ..*cfg
    };
    let denom = exact_p_sln_with(marginal, l, n, cfg)?;
    let vals = cfg.exec.map(ms.len(), |i| -> Result<f64> {
        let m = ms[i];
        if m >= n || (marginal.spec().is_none() && m >= marginal.support()) {
            return Ok(1.0);
        }
        let lp = sum_distribution_with(marginal, l, n, Some(m), &inner)?.log_p(n);
        Ok((lp - denom).exp().min(1.0))
    });
    vals.into_iter().collect()
}

/// Full conditional law of `M_L` given `S_L = N`, as `P[M_L = m]` for `m ≤ N`.
pub fn conditional_max_pmf(marginal: &Marginal, l: u64, n: usize, cfg: &OracleConfig) -> Result<Vec<f64>> {
    let ms: Vec<usize> = (0..=n).collect();
    let cdf = conditional_max_cdf_with(marginal, l, n, &ms, cfg)?;
    let mut prev = 0.0;
    Ok(cdf
        .iter()
        .map(|&c| {
            let c = c.max(prev);
            let d = c - prev;
            prev = c;
            d
        })
        .collect())
}

/// Single-site conditional law `P[η_1 = j | S_L = N]`, `j ≤ N`.
pub fn conditional_site_marginal(marginal: &Marginal, l: u64, n: usize) -> Result<Vec<f64>> {
    conditional_site_marginal_with(marginal, l, n, &OracleConfig::default())
}

pub fn conditional_site_marginal_with(
    marginal: &Marginal,
    l: u64,
    n: usize,
    cfg: &OracleConfig,
) -> Result<Vec<f64>> {
    if l == 1 {
        let mut v = vec![0.0; n + 1];
        v[n] = 1.0;
        return Ok(v);
    }
    let rest = sum_distribution_with(marginal, l - 1, n, None, cfg)?;
    let single = marginal.log_pmf_upto(n);
    let terms: Vec<f64> = (0..=n)
        .map(|j| single[j] + rest.log_p(n - j))
        .collect();
    let z = log_sum_exp(&terms);
    if z == f64::NEG_INFINITY {
        return Err(Error::ImpossibleN { l, n: n as u64 });
    }
    Ok(terms.iter().map(|t| (t - z).exp()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::marginal::{CutoffPolicy, ModelSpec};
    use approx::assert_relative_eq;

    fn uniform3() -> Marginal {
        Marginal::from_pmf(&[1.0 / 3.0; 3]).unwrap()
    }

    #[test]
    fn single_site_is_identity() {
        let m = uniform3();
        let law = sum_distribution(&m, 1, 5, None).unwrap();
        for n in 0..3 {
            assert_relative_eq!(law.log_p(n), m.log_p()[n], epsilon = 1e-15);
        }
        assert_eq!(law.log_p(3), f64::NEG_INFINITY);
    }

    #[test]
    fn two_uniform_sites() {
        let m = uniform3();
        let lp = exact_p_sln(&m, 2, 2).unwrap();
        assert_relative_eq!(lp.exp(), 1.0 / 3.0, epsilon = 1e-15);
        let cdf = conditional_max_cdf(&m, 2, 2, &[0, 1, 2, 7]).unwrap();
        assert_eq!(cdf[0], 0.0);
        assert_relative_eq!(cdf[1], 1.0 / 3.0, epsilon = 1e-14);
        assert_eq!(cdf[2], 1.0);
        assert_eq!(cdf[3], 1.0);
    }

    #[test]
    fn single_site_conditional_max() {
        let m = uniform3();
        let cdf = conditional_max_cdf(&m, 1, 2, &[0, 1, 2]).unwrap();
        assert_eq!(cdf, vec![0.0, 0.0, 1.0]);
    }

    #[test]
    fn capped_mass_is_power_of_capped_mass() {
        let m = Marginal::new(&ModelSpec::stretched_rates(0.6, 2.0).unwrap()).unwrap();
        let cap = 5;
        let law = sum_distribution(&m, 7, 7 * cap, Some(cap)).unwrap();
        let single: f64 = m.p()[..=cap].iter().sum();
        assert_relative_eq!(law.total_mass(), single.powi(7), max_relative = 1e-12);
    }

    #[test]
    fn hybrid_matches_direct_in_deep_tails() {
        let spec = ModelSpec::explicit_stretched(0.3, 4.0).unwrap().with_cutoff(CutoffPolicy {
            tail_mass: 1e-300,
            ..CutoffPolicy::default()
        });
        let m = Marginal::new(&spec).unwrap();
        let a = m.log_p();
        let fast = log_convolve(a, a, 600, Exec::Sequential);
        let slow = log_convolve_direct(a, a, 600);
        for (x, y) in fast.iter().zip(&slow) {
            assert!(x == y || (x - y).abs() <= 1e-12 * y.abs().max(1.0), "{x} vs {y}");
        }
        assert!(m.support() >= 600, "support {}", m.support());
        assert!(slow[600].is_finite() && slow[600] < -300.0, "{}", slow[600]);
    }

    #[test]
    fn impossible_n_is_reported() {
        let m = uniform3();
        assert!(matches!(exact_p_sln(&m, 2, 5), Err(Error::ImpossibleN { .. })));
    }

    #[test]
    fn budget_guard() {
        let m = uniform3();
        let cfg = OracleConfig {
            budget: 10.0,
            ..Default::default()
        };
        assert!(matches!(
            sum_distribution_with(&m, 16, 32, None, &cfg),
            Err(Error::Budget(_))
        ));
    }

    #[test]
    fn csv_export() {
        let law = sum_distribution(&uniform3(), 2, 4, None).unwrap();
        let mut buf = Vec::new();
        law.write_csv(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("n,log_p\n0,"));
        assert_eq!(s.lines().count(), 6);
    }
}
