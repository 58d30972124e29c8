//! Critical single-site stationary law built from the jump rates.
//!
//! Weights `w(n) = Π_{k≤n} 1/g(k)` are kept in log space throughout; the
//! normalized probabilities `p_k = w(k)/z(1)` are only materialized after the
//! support cutoff has been certified by an explicit tail bound.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::{bisect, log_sum_exp, lstsq};

/// Tail family of the jump rates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    /// `g(n) = 1 + b/n`, power-law weights `w(n) ~ n^{-b}`.
    PowerLawRates,
    /// `g(n) = 1 + b/n^λ` with `λ ∈ (0,1)`.
    StretchedRates,
    /// `w(n) = exp(-(b/(1-λ)) n^{1-λ})` given directly.
    ExplicitStretchedWeights,
}

/// Certified truncation policy for the single-site support.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CutoffPolicy {
    /// Bound on the omitted probability mass.
    pub tail_mass: f64,
    /// Bound on the omitted second moment (ignored when it diverges).
    pub moment_tail: f64,
    /// Hard cap on the support size.
    pub max_support: usize,
}

impl Default for CutoffPolicy {
    fn default() -> Self {
        CutoffPolicy {
            tail_mass: 1e-14,
            moment_tail: 1e-11,
            max_support: 1 << 22,
        }
    }
}

/// Rate family and parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub family: Family,
    pub lambda: f64,
    pub b: f64,
    #[serde(default)]
    pub cutoff: CutoffPolicy,
}

impl ModelSpec {
    pub fn new(family: Family, lambda: f64, b: f64) -> Result<Self> {
        let spec = ModelSpec {
            family,
            lambda,
            b,
            cutoff: CutoffPolicy::default(),
        };
        spec.validate()?;
        Ok(spec)
    }

    /// `g(n) = 1 + b/n`.
    pub fn power_law(b: f64) -> Result<Self> {
        Self::new(Family::PowerLawRates, 1.0, b)
    }

    /// `g(n) = 1 + b/n^λ`.
    pub fn stretched_rates(lambda: f64, b: f64) -> Result<Self> {
        Self::new(Family::StretchedRates, lambda, b)
    }

    /// `w(n) = exp(-(b/(1-λ)) n^{1-λ})`.
    pub fn explicit_stretched(lambda: f64, b: f64) -> Result<Self> {
        Self::new(Family::ExplicitStretchedWeights, lambda, b)
    }

    pub fn with_cutoff(mut self, cutoff: CutoffPolicy) -> Self {
        self.cutoff = cutoff;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.b > 0.0 && self.b.is_finite()) {
            return Err(Error::InvalidModel(format!("b must be positive, got {}", self.b)));
        }
        match self.family {
            Family::PowerLawRates => {
                if self.lambda != 1.0 {
                    return Err(Error::InvalidModel(format!(
                        "power-law rates require lambda = 1, got {}",
                        self.lambda
                    )));
                }
            }
            Family::StretchedRates | Family::ExplicitStretchedWeights => {
                if !(self.lambda > 0.0 && self.lambda < 1.0) {
                    return Err(Error::InvalidModel(format!(
                        "stretched families require lambda in (0,1), got {}",
                        self.lambda
                    )));
                }
            }
        }
        let c = &self.cutoff;
        if !(c.tail_mass > 0.0 && c.moment_tail > 0.0 && c.max_support >= 2) {
            return Err(Error::InvalidModel("cutoff policy must be positive".into()));
        }
        Ok(())
    }

    pub fn is_power_law(&self) -> bool {
        self.family == Family::PowerLawRates
    }

    /// Stretched-exponent coefficient `b/(1-λ)` (infinite for power laws).
    pub fn gamma(&self) -> f64 {
        if self.is_power_law() {
            f64::INFINITY
        } else {
            self.b / (1.0 - self.lambda)
        }
    }

    /// `log g(n)`; `-inf` at `n = 0` since an empty site never fires.
    pub fn log_rate(&self, n: u64) -> f64 {
        if n == 0 {
            return f64::NEG_INFINITY;
        }
        let x = n as f64;
        match self.family {
            Family::PowerLawRates => (self.b / x).ln_1p(),
            Family::StretchedRates => (self.b * x.powf(-self.lambda)).ln_1p(),
            Family::ExplicitStretchedWeights => {
                // γ (n^β - (n-1)^β) written to avoid cancellation for large n.
                let beta = 1.0 - self.lambda;
                -self.gamma() * x.powf(beta) * (beta * (-1.0 / x).ln_1p()).exp_m1()
            }
        }
    }

    /// `g(n)`.
    pub fn rate(&self, n: u64) -> f64 {
        self.log_rate(n).exp()
    }

    /// Log of a bound on `Σ_{n>K} n^m w(n)` given `log w(K)`, or `+inf` when the
    /// bound is not yet applicable at this `K` (or the moment diverges).
    pub fn log_tail_bound(&self, k: usize, log_wk: f64, m: u32) -> f64 {
        let kf = k.max(1) as f64;
        let mf = m as f64;
        match self.family {
            Family::PowerLawRates => {
                // w(n)/w(K) <= ((K+1)/(n+1))^b e^{b^2/(2K)}, then an integral bound.
                let b = self.b;
                if b <= mf + 1.0 {
                    return f64::INFINITY;
                }
                log_wk + b * b / (2.0 * kf) + (mf + 1.0) * (kf + 1.0).ln() - (b - mf - 1.0).ln()
            }
            Family::StretchedRates => {
                let beta = 1.0 - self.lambda;
                let c = 1.0 - 0.5 * self.b * (kf + 1.0).powf(-self.lambda);
                if c <= 0.0 {
                    return f64::INFINITY;
                }
                let a = c * self.gamma();
                let y = kf + 1.0;
                if mf > 0.0 && y < (mf / (a * beta)).powf(1.0 / beta) {
                    return f64::INFINITY;
                }
                log_wk + a * y.powf(beta) + log_stretched_integral(a, beta, mf, y)
            }
            Family::ExplicitStretchedWeights => {
                let beta = 1.0 - self.lambda;
                let g = self.gamma();
                if mf > 0.0 && kf < (mf / (g * beta)).powf(1.0 / beta) {
                    return f64::INFINITY;
                }
                log_stretched_integral(g, beta, mf, kf)
            }
        }
    }
}

/// Log of an upper bound on `∫_y^∞ t^m e^{-a t^β} dt`.
fn log_stretched_integral(a: f64, beta: f64, m: f64, y: f64) -> f64 {
    let s = (m + 1.0) / beta;
    let x = a * y.powf(beta);
    let lg = log_upper_gamma_bound(s, x);
    -beta.ln() - s * a.ln() + lg
}

/// Log of an upper bound on the upper incomplete gamma function `Γ(s, x)`.
fn log_upper_gamma_bound(s: f64, x: f64) -> f64 {
    if s <= 1.0 {
        return (s - 1.0) * x.ln() - x;
    }
    if x <= s - 1.0 {
        return f64::INFINITY;
    }
    (s - 1.0) * x.ln() - x - (1.0 - (s - 1.0) / x).ln()
}

/// Log weights `log w(0..=K)`.
pub fn build_weights(spec: &ModelSpec, k: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(k + 1);
    out.push(0.0);
    extend_weights(spec, &mut out, k);
    out
}

fn extend_weights(spec: &ModelSpec, log_w: &mut Vec<f64>, k: usize) {
    match spec.family {
        Family::ExplicitStretchedWeights => {
            let g = spec.gamma();
            let beta = 1.0 - spec.lambda;
            for n in log_w.len()..=k {
                log_w.push(-g * (n as f64).powf(beta));
            }
        }
        _ => {
            for n in log_w.len()..=k {
                let prev = log_w[n - 1];
                log_w.push(prev - spec.log_rate(n as u64));
            }
        }
    }
}

/// Partition function value with its truncation bound.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Partition {
    pub log_z: f64,
    pub z: f64,
    /// Upper bound on the omitted terms `Σ_{n>K} w(n) φ^n`.
    pub truncation_bound: f64,
}

/// Log weights on a certified support, with fugacity-dependent sums.
#[derive(Clone, Debug, PartialEq)]
pub struct Weights {
    spec: Option<ModelSpec>,
    log_w: Vec<f64>,
    /// Log bound on `Σ_{n>K} w(n)` at φ = 1.
    log_tail: f64,
}

impl Weights {
    /// Grow the support until the omitted mass (and second moment, when finite)
    /// is certified below the spec's cutoff policy, or the size cap is hit.
    pub fn new(spec: &ModelSpec) -> Result<Self> {
        spec.validate()?;
        let policy = spec.cutoff;
        let power_divergent = spec.is_power_law() && spec.b <= 1.0;
        let mut k = 256usize.min(policy.max_support);
        let mut log_w = build_weights(spec, k);
        loop {
            let lw = log_w[k];
            let mass = spec.log_tail_bound(k, lw, 0);
            let moment_ok = if spec.is_power_law() && spec.b <= 3.0 {
                true
            } else {
                spec.log_tail_bound(k, lw, 2) < policy.moment_tail.ln()
            };
            let done = !power_divergent && mass < policy.tail_mass.ln() && moment_ok;
            if done || k >= policy.max_support || (power_divergent && k >= 1 << 16) {
                return Ok(Weights {
                    spec: Some(*spec),
                    log_w,
                    log_tail: if power_divergent { f64::INFINITY } else { mass },
                });
            }
            k = (2 * k).min(policy.max_support);
            extend_weights(spec, &mut log_w, k);
        }
    }

    /// Fixed support `0..=K`.
    pub fn with_support(spec: &ModelSpec, k: usize) -> Result<Self> {
        spec.validate()?;
        if k < 1 {
            return Err(Error::InvalidArgument("support cutoff K must be at least 1".into()));
        }
        let log_w = build_weights(spec, k);
        let log_tail = spec.log_tail_bound(k, log_w[k], 0);
        Ok(Weights {
            spec: Some(*spec),
            log_w,
            log_tail,
        })
    }

    /// Weights of a finite probability vector (`w(n) = p_n/p_0`).
    pub fn from_pmf(p: &[f64]) -> Result<Self> {
        if p.is_empty() || p[0] <= 0.0 || p.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
            return Err(Error::InvalidArgument(
                "pmf must be non-empty, finite, non-negative with p_0 > 0".into(),
            ));
        }
        let l0 = p[0].ln();
        Ok(Weights {
            spec: None,
            log_w: p.iter().map(|&x| x.ln() - l0).collect(),
            log_tail: f64::NEG_INFINITY,
        })
    }

    pub fn spec(&self) -> Option<&ModelSpec> {
        self.spec.as_ref()
    }

    pub fn log_w(&self) -> &[f64] {
        &self.log_w
    }

    /// Support cutoff `K`.
    pub fn support(&self) -> usize {
        self.log_w.len() - 1
    }

    /// Bound on the omitted mass `Σ_{n>K} w(n)` at φ = 1.
    pub fn truncation_bound(&self) -> f64 {
        self.log_tail.exp()
    }

    fn check_phi(&self, phi: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&phi) {
            return Err(Error::InvalidArgument(format!("fugacity must lie in [0,1], got {phi}")));
        }
        if phi == 1.0 {
            if let Some(s) = &self.spec {
                if s.is_power_law() && s.b <= 1.0 {
                    return Err(Error::NonConvergent { phi });
                }
            }
        }
        Ok(())
    }

    fn tilted_terms(&self, phi: f64, extra_log_n: u32) -> Vec<f64> {
        let lphi = phi.ln();
        self.log_w
            .iter()
            .enumerate()
            .map(|(n, &lw)| {
                if n == 0 {
                    return if extra_log_n == 0 { lw } else { f64::NEG_INFINITY };
                }
                let nf = n as f64;
                lw + nf * lphi + extra_log_n as f64 * nf.ln()
            })
            .collect()
    }

    /// `z(φ) = Σ_{n≤K} w(n) φ^n` with a bound on the omitted terms.
    pub fn partition(&self, phi: f64) -> Result<Partition> {
        self.check_phi(phi)?;
        if phi == 0.0 {
            return Ok(Partition {
                log_z: 0.0,
                z: 1.0,
                truncation_bound: 0.0,
            });
        }
        let log_z = log_sum_exp(&self.tilted_terms(phi, 0));
        let k = self.support();
        // w is non-increasing, so the tail is also below w(K) φ^{K+1}/(1-φ).
        let geometric = if phi < 1.0 {
            self.log_w[k] + (k as f64 + 1.0) * phi.ln() - (-phi).ln_1p()
        } else {
            f64::INFINITY
        };
        let bound = self.log_tail.min(geometric).exp();
        Ok(Partition {
            log_z,
            z: log_z.exp(),
            truncation_bound: bound,
        })
    }

    /// Density `R(φ) = Σ n w(n) φ^n / z(φ)`.
    pub fn density(&self, phi: f64) -> Result<f64> {
        self.check_phi(phi)?;
        if phi == 0.0 {
            return Ok(0.0);
        }
        let log_z = log_sum_exp(&self.tilted_terms(phi, 0));
        let log_m = log_sum_exp(&self.tilted_terms(phi, 1));
        Ok((log_m - log_z).exp())
    }

    /// Fugacity with `R(φ) = ρ`, by bisection on `[0, 1]`.
    pub fn solve_fugacity(&self, rho: f64) -> Result<f64> {
        if !(rho >= 0.0) {
            return Err(Error::InvalidArgument(format!("density must be non-negative, got {rho}")));
        }
        let rho_c = self.density(1.0)?;
        if rho > rho_c * (1.0 + 1e-14) {
            return Err(Error::Supercritical { rho, rho_c });
        }
        if rho == 0.0 {
            return Ok(0.0);
        }
        if rho >= rho_c {
            return Ok(1.0);
        }
        bisect(
            |phi| self.density(phi).map(|r| r - rho).unwrap_or(f64::NAN),
            0.0,
            1.0,
            1e-16,
        )
    }
}

/// Normalized critical single-site law with its moments and tail prefactor.
#[derive(Clone, Debug, PartialEq)]
pub struct Marginal {
    weights: Weights,
    log_z: f64,
    p: Vec<f64>,
    log_p: Vec<f64>,
    rho_c: f64,
    sigma2: f64,
    kappa3: Option<f64>,
    kappa4: Option<f64>,
    a_tail: Option<f64>,
}

/// Support size used for the tail-prefactor fit of stretched rate models.
const TAIL_FIT_SUPPORT: usize = 4096;

impl Marginal {
    /// Critical statistics of a rate family; requires a finite variance.
    pub fn new(spec: &ModelSpec) -> Result<Self> {
        spec.validate()?;
        if spec.is_power_law() && spec.b <= 3.0 {
            return Err(Error::InfiniteVariance { b: spec.b });
        }
        let weights = Weights::new(spec)?;
        let mut m = Self::from_weights(weights)?;
        m.a_tail = m.fit_tail_prefactor().ok();
        Ok(m)
    }

    /// A finite test law given directly by its probabilities.
    pub fn from_pmf(p: &[f64]) -> Result<Self> {
        let total: f64 = p.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument(format!("pmf sums to {total}, not 1")));
        }
        Self::from_weights(Weights::from_pmf(p)?)
    }

    fn from_weights(weights: Weights) -> Result<Self> {
        let log_z = log_sum_exp(&weights.log_w);
        let log_p: Vec<f64> = weights.log_w.iter().map(|&lw| lw - log_z).collect();
        let p: Vec<f64> = log_p.iter().map(|&lp| lp.exp()).collect();
        // Sum from the far tail upwards so small terms are not swamped.
        let moment = |f: &dyn Fn(f64) -> f64| -> f64 {
            p.iter()
                .enumerate()
                .rev()
                .map(|(n, &q)| q * f(n as f64))
                .sum()
        };
        let rho_c = moment(&|n| n);
        let central = |r: i32| moment(&|n| (n - rho_c).powi(r));
        let sigma2 = central(2);
        let (has3, has4) = match weights.spec {
            Some(s) if s.is_power_law() => (s.b > 4.0, s.b > 5.0),
            _ => (true, true),
        };
        let kappa3 = has3.then(|| central(3));
        let kappa4 = has4.then(|| central(4) - 3.0 * sigma2 * sigma2);
        let a_tail = match weights.spec {
            Some(s) if s.family == Family::ExplicitStretchedWeights => Some((-log_z).exp()),
            _ => None,
        };
        Ok(Marginal {
            weights,
            log_z,
            p,
            log_p,
            rho_c,
            sigma2,
            kappa3,
            kappa4,
            a_tail,
        })
    }

    pub fn spec(&self) -> Option<&ModelSpec> {
        self.weights.spec()
    }

    pub fn weights(&self) -> &Weights {
        &self.weights
    }

    /// Support cutoff `K`.
    pub fn support(&self) -> usize {
        self.p.len() - 1
    }

    pub fn p(&self) -> &[f64] {
        &self.p
    }

    pub fn log_p(&self) -> &[f64] {
        &self.log_p
    }

    pub fn log_w(&self) -> &[f64] {
        self.weights.log_w()
    }

    /// `log z(1)`.
    pub fn log_z(&self) -> f64 {
        self.log_z
    }

    pub fn rho_c(&self) -> f64 {
        self.rho_c
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn sigma(&self) -> f64 {
        self.sigma2.sqrt()
    }

    pub fn kappa3(&self) -> Option<f64> {
        self.kappa3
    }

    pub fn kappa4(&self) -> Option<f64> {
        self.kappa4
    }

    /// Probability-level tail prefactor `A` (`p_n ≃ A n^{-b}` or
    /// `p_n ≃ A e^{-γ n^{1-λ}}`). `None` when it is not defined.
    pub fn a_tail(&self) -> Option<f64> {
        self.a_tail
    }

    /// Like [`Marginal::a_tail`] but with an explanatory error.
    pub fn require_a_tail(&self) -> Result<f64> {
        self.a_tail.ok_or_else(|| {
            Error::UndefinedTailPrefactor(
                "stretched rates with lambda <= 1/2 have no finite prefactor, \
                 and finite test laws have no tail"
                    .into(),
            )
        })
    }

    /// Bound on the omitted probability mass beyond `K`.
    pub fn truncation_bound(&self) -> f64 {
        (self.weights.log_tail - self.log_z).exp()
    }

    /// `log p_n`, `-inf` beyond the support.
    #[inline]
    pub fn log_pmf(&self, n: usize) -> f64 {
        self.log_p.get(n).copied().unwrap_or(f64::NEG_INFINITY)
    }

    /// `log p_n` with the rate recursion continued past the stored support
    /// (finite test laws return `-inf` there).
    pub fn log_pmf_extended(&self, n: usize) -> f64 {
        let k = self.support();
        if n <= k {
            return self.log_p[n];
        }
        match self.spec() {
            None => f64::NEG_INFINITY,
            Some(s) if s.family == Family::ExplicitStretchedWeights => {
                -s.gamma() * (n as f64).powf(1.0 - s.lambda) - self.log_z
            }
            Some(s) => {
                let mut lw = self.log_w()[k];
                for j in k + 1..=n {
                    lw -= s.log_rate(j as u64);
                }
                lw - self.log_z
            }
        }
    }

    /// `log p_n` for `n = 0..=n_max`, continued past the stored support as in
    /// [`Marginal::log_pmf_extended`].
    pub fn log_pmf_upto(&self, n_max: usize) -> Vec<f64> {
        let k = self.support();
        let mut out: Vec<f64> = self.log_p[..=k.min(n_max)].to_vec();
        if n_max <= k {
            return out;
        }
        match self.spec() {
            None => out.resize(n_max + 1, f64::NEG_INFINITY),
            Some(s) if s.family == Family::ExplicitStretchedWeights => {
                out.extend((k + 1..=n_max).map(|n| self.log_pmf_extended(n)));
            }
            Some(s) => {
                let mut lw = self.log_w()[k];
                for j in k + 1..=n_max {
                    lw -= s.log_rate(j as u64);
                    out.push(lw - self.log_z);
                }
            }
        }
        out
    }

    /// `log g(n)` for the dynamics; beyond a finite test law's support the
    /// rate is `+inf` so that moves there are always rejected.
    pub fn log_rate(&self, n: u64) -> f64 {
        if n == 0 {
            return f64::NEG_INFINITY;
        }
        match &self.weights.spec {
            Some(s) => s.log_rate(n),
            None => {
                let n = n as usize;
                if n <= self.support() {
                    self.log_w()[n - 1] - self.log_w()[n]
                } else {
                    f64::INFINITY
                }
            }
        }
    }

    /// `P[η > m]` from the stored support.
    pub fn tail_prob(&self, m: usize) -> f64 {
        if m >= self.support() {
            return 0.0;
        }
        self.p[m + 1..].iter().rev().sum()
    }

    pub fn partition(&self, phi: f64) -> Result<Partition> {
        self.weights.partition(phi)
    }

    pub fn density(&self, phi: f64) -> Result<f64> {
        self.weights.density(phi)
    }

    pub fn solve_fugacity(&self, rho: f64) -> Result<f64> {
        self.weights.solve_fugacity(rho)
    }

    /// Grand-canonical law `ν_φ` on the stored support.
    pub fn nu_phi(&self, phi: f64) -> Result<Vec<f64>> {
        self.weights.check_phi(phi)?;
        if phi == 0.0 {
            let mut v = vec![0.0; self.p.len()];
            v[0] = 1.0;
            return Ok(v);
        }
        let terms = self.weights.tilted_terms(phi, 0);
        let lz = log_sum_exp(&terms);
        Ok(terms.iter().map(|&t| (t - lz).exp()).collect())
    }

    fn fit_tail_prefactor(&self) -> Result<f64> {
        let spec = *self.spec().ok_or_else(|| {
            Error::UndefinedTailPrefactor("finite test laws have no tail".into())
        })?;
        let top = match spec.family {
            Family::ExplicitStretchedWeights => return Ok((-self.log_z).exp()),
            Family::PowerLawRates => self.support(),
            Family::StretchedRates => self.support().max(TAIL_FIT_SUPPORT),
        };
        self.a_tail_window(top / 2, top)
    }

    /// Tail prefactor extrapolated from a fit of `log p_n` over `n ∈ [lo, hi]`.
    ///
    /// The slowly decaying corrections to `log(p_n / tail shape)` are fitted
    /// with their known asymptotic powers of `n` and the constant is kept.
    pub fn a_tail_window(&self, lo: usize, hi: usize) -> Result<f64> {
        let spec = *self.spec().ok_or_else(|| {
            Error::UndefinedTailPrefactor("finite test laws have no tail".into())
        })?;
        if lo < 2 || hi < lo + 8 {
            return Err(Error::InvalidArgument(format!("fit window [{lo}, {hi}] too small")));
        }
        let lambda = spec.lambda;
        let exponents: Vec<f64> = match spec.family {
            Family::ExplicitStretchedWeights => return Ok((-self.log_z).exp()),
            Family::PowerLawRates => vec![-1.0, -2.0],
            Family::StretchedRates => {
                if lambda <= 0.5 {
                    return Err(Error::UndefinedTailPrefactor(format!(
                        "stretched rates with lambda = {lambda} <= 1/2: \
                         log p_n + gamma n^(1-lambda) does not converge"
                    )));
                }
                let mut e: Vec<f64> = [1.0 - 2.0 * lambda, -lambda, 1.0 - 3.0 * lambda, -2.0 * lambda]
                    .into_iter()
                    .filter(|&e| e < -1e-9)
                    .collect();
                e.sort_by(|a, b| b.partial_cmp(a).unwrap());
                e.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
                e
            }
        };
        let log_w = if hi <= self.support() {
            std::borrow::Cow::Borrowed(self.log_w())
        } else {
            std::borrow::Cow::Owned(build_weights(&spec, hi))
        };
        let ns: Vec<f64> = (lo..=hi).map(|n| n as f64).collect();
        let y: Vec<f64> = (lo..=hi)
            .map(|n| {
                let nf = n as f64;
                let shape = if spec.is_power_law() {
                    spec.b * nf.ln()
                } else {
                    spec.gamma() * nf.powf(1.0 - lambda)
                };
                log_w[n] - self.log_z + shape
            })
            .collect();
        let scale = hi as f64;
        let mut cols = vec![vec![1.0; ns.len()]];
        for e in exponents {
            cols.push(ns.iter().map(|n| (n / scale).powf(e)).collect());
        }
        let c = lstsq(&cols, &y)?;
        Ok(c[0].exp())
    }

    /// JSON record: family, b, lambda, K, moments, prefactor and `p`.
    pub fn to_json(&self) -> serde_json::Value {
        #[derive(Serialize)]
        struct Record<'a> {
            family: Option<Family>,
            b: Option<f64>,
            lambda: Option<f64>,
            #[serde(rename = "K")]
            k: usize,
            rho_c: f64,
            sigma2: f64,
            kappa3: Option<f64>,
            kappa4: Option<f64>,
            #[serde(rename = "A_tail")]
            a_tail: Option<f64>,
            truncation_bound: f64,
            p: &'a [f64],
        }
        let spec = self.spec();
        serde_json::to_value(Record {
            family: spec.map(|s| s.family),
            b: spec.map(|s| s.b),
            lambda: spec.map(|s| s.lambda),
            k: self.support(),
            rho_c: self.rho_c,
            sigma2: self.sigma2,
            kappa3: self.kappa3,
            kappa4: self.kappa4,
            a_tail: self.a_tail,
            truncation_bound: self.truncation_bound(),
            p: &self.p,
        })
        .expect("marginal record is always serializable")
    }
}

/// Critical statistics for `spec`; alias of [`Marginal::new`].
pub fn critical_stats(spec: &ModelSpec) -> Result<Marginal> {
    Marginal::new(spec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn fig2() -> ModelSpec {
        ModelSpec::stretched_rates(0.6, 2.0).unwrap()
    }

    #[test]
    fn weights_match_rate_products() {
        let lw = build_weights(&ModelSpec::power_law(2.0).unwrap(), 3);
        assert_eq!(lw[0], 0.0);
        assert_relative_eq!(lw[1].exp(), 1.0 / 3.0, epsilon = 1e-15);
        assert_relative_eq!(lw[3].exp(), 1.0 / (3.0 * 2.0 * (5.0 / 3.0)), epsilon = 1e-15);
        let lw = build_weights(&ModelSpec::explicit_stretched(0.6, 2.0).unwrap(), 2);
        assert_relative_eq!(lw[1], -5.0, epsilon = 1e-15);
        assert_relative_eq!(lw[2], -5.0 * 2f64.powf(0.4), epsilon = 1e-14);
    }

    #[test]
    fn spec_validation() {
        assert!(ModelSpec::new(Family::PowerLawRates, 0.5, 2.0).is_err());
        assert!(ModelSpec::new(Family::StretchedRates, 1.0, 2.0).is_err());
        assert!(ModelSpec::stretched_rates(0.6, -1.0).is_err());
        assert!(matches!(
            Marginal::new(&ModelSpec::power_law(3.0).unwrap()),
            Err(Error::InfiniteVariance { .. })
        ));
    }

    #[test]
    fn partition_edge_cases() {
        let w = Weights::new(&ModelSpec::power_law(0.5).unwrap()).unwrap();
        assert!(matches!(w.partition(1.0), Err(Error::NonConvergent { .. })));
        assert!(w.partition(0.5).is_ok());
        let p = w.partition(0.0).unwrap();
        assert_eq!(p.z, 1.0);
        let e = Weights::new(&ModelSpec::explicit_stretched(0.6, 2.0).unwrap()).unwrap();
        let z = e.partition(1.0).unwrap();
        assert!((z.z - 1.0085).abs() < 5e-4, "z = {}", z.z);
        assert!(z.truncation_bound < 1e-14);
    }

    #[test]
    fn fig2_constants() {
        let m = Marginal::new(&fig2()).unwrap();
        assert!((m.rho_c() - 0.842).abs() < 0.005);
        assert!((m.sigma2() - 2.55).abs() < 0.02);
        assert_relative_eq!(m.density(1.0).unwrap(), m.rho_c(), epsilon = 1e-12);
        assert!(m.truncation_bound() < 1e-14);
    }

    #[test]
    fn yule_simon_prefactor() {
        // g(n) = 1 + 5/n gives p_n = 96 n!/(n+5)!, so p_n n^5 -> 96.
        let m = Marginal::new(&ModelSpec::power_law(5.0).unwrap()).unwrap();
        assert_relative_eq!(m.a_tail().unwrap(), 96.0, max_relative = 1e-6);
        assert_relative_eq!(m.rho_c(), 1.0 / 3.0, max_relative = 1e-9);
        assert_relative_eq!(m.sigma2(), 8.0 / 9.0, max_relative = 1e-9);
        assert!(m.kappa3().is_none() || m.spec().unwrap().b > 4.0);
        assert!(m.kappa4().is_none());
    }

    #[test]
    fn explicit_prefactor_is_inverse_partition() {
        let m = Marginal::new(&ModelSpec::explicit_stretched(0.45, 2.0).unwrap()).unwrap();
        assert_relative_eq!(m.a_tail().unwrap(), (-m.log_z()).exp(), epsilon = 1e-15);
    }

    #[test]
    fn low_lambda_rates_have_no_prefactor() {
        let m = Marginal::new(&ModelSpec::stretched_rates(0.45, 2.0).unwrap()).unwrap();
        assert!(m.a_tail().is_none());
        assert!(matches!(m.require_a_tail(), Err(Error::UndefinedTailPrefactor(_))));
    }

    #[test]
    fn fugacity_round_trip() {
        let m = Marginal::new(&fig2()).unwrap();
        assert_eq!(m.solve_fugacity(0.0).unwrap(), 0.0);
        assert_eq!(m.solve_fugacity(m.rho_c()).unwrap(), 1.0);
        let phi = m.solve_fugacity(m.rho_c() / 2.0).unwrap();
        assert_relative_eq!(m.density(phi).unwrap(), m.rho_c() / 2.0, max_relative = 1e-10);
        assert!(matches!(
            m.solve_fugacity(m.rho_c() + 0.01),
            Err(Error::Supercritical { .. })
        ));
    }

    #[test]
    fn json_has_fixed_fields() {
        let m = Marginal::from_pmf(&[0.5, 0.25, 0.25]).unwrap();
        let v = m.to_json();
        for key in ["family", "b", "lambda", "K", "rho_c", "sigma2", "kappa3", "A_tail", "p"] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
        assert_eq!(v["K"], 2);
    }
}
