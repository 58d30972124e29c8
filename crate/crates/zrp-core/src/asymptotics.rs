//! Critical scales, regime classification and leading-order asymptotics.
//!
//! Everything here is a closed-form or root-finding evaluation over an
//! immutable [`Marginal`]. Asymptotic probabilities are returned in log space
//! with an explicit case label so values from different regimes are never
//! mixed up silently.
//!
//! The tail prefactor `A` is always the probability-level one
//! (`p_n ≃ A n^{-b}` or `p_n ≃ A e^{-γ n^{1-λ}}`), which differs from the
//! weight-level prefactor by the factor `z(1)`.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::marginal::{Family, Marginal, ModelSpec};
use crate::num::{bisect, integrate, log_add_exp};
use crate::sampler::solve_tilt;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// `c_λ = (1+λ)(2λ)^{-λ/(1+λ)} (b/(1-λ))^{1/(1+λ)}`.
pub fn c_lambda(lambda: f64, b: f64) -> f64 {
    (1.0 + lambda)
        * (2.0 * lambda).powf(-lambda / (1.0 + lambda))
        * (b / (1.0 - lambda)).powf(1.0 / (1.0 + lambda))
}

/// Truncation order `t = ⌊1/λ⌋ - 1` of the Cramér series.
pub fn cramer_order(lambda: f64) -> usize {
    ((1.0 / lambda).floor() as usize).saturating_sub(1)
}

fn spec_of(m: &Marginal) -> Result<ModelSpec> {
    m.spec()
        .copied()
        .ok_or_else(|| Error::InvalidModel("a rate family is required, not a finite test law".into()))
}

/// Critical excess-mass scale `Δ_L`.
pub fn critical_scale(m: &Marginal, l: u64) -> Result<f64> {
    let spec = spec_of(m)?;
    let lf = l as f64;
    if spec.is_power_law() {
        if spec.b <= 3.0 {
            return Err(Error::InfiniteVariance { b: spec.b });
        }
        Ok(m.sigma() * ((spec.b - 3.0) * lf * lf.ln()).sqrt())
    } else {
        Ok(c_lambda(spec.lambda, spec.b) * (m.sigma2() * lf).powf(1.0 / (1.0 + spec.lambda)))
    }
}

/// Coefficients `λ_0..λ_{order-1}` of the Cramér series.
///
/// Only `λ_0 = κ_3 / (6 σ^6)` is built in: it is the cubic coefficient of
/// `-L·I(ρ_c + k/L)` for the Legendre rate function `I`.
pub fn cramer_series(m: &Marginal, order: usize) -> Result<Vec<f64>> {
    match order {
        0 => Ok(Vec::new()),
        1 => {
            let k3 = m
                .kappa3()
                .ok_or_else(|| Error::InvalidModel("third cumulant is infinite".into()))?;
            Ok(vec![k3 / (6.0 * m.sigma2().powi(3))])
        }
        o => Err(Error::UnsupportedCramer { order: o }),
    }
}

/// Rule for the slowly growing sequence `θ_L`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "kebab-case")]
pub enum ThetaRule {
    /// `max(log log L, 1)`.
    LogLog,
    Constant { value: f64 },
}

impl ThetaRule {
    pub fn eval(&self, l: u64) -> f64 {
        match *self {
            ThetaRule::LogLog => (l as f64).ln().ln().max(1.0),
            ThetaRule::Constant { value } => value,
        }
    }
}

/// User-adjustable case boundaries.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Thresholds {
    /// `|γ_L|` above which a power-law (or sub-leading stretched) point is
    /// classified as `a` or `b` rather than critical.
    pub gamma: f64,
    /// Slack `δ` around `c_λ` as a fraction of `c_λ`.
    pub delta_frac: f64,
    pub theta: ThetaRule,
    /// Power-law downside: `ω_L` below this is case `a`.
    pub omega_lo: f64,
    /// Power-law downside: `ω_L` above this is case `c`.
    pub omega_hi: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            gamma: 3.0,
            delta_frac: 0.1,
            theta: ThetaRule::LogLog,
            omega_lo: 0.25,
            omega_hi: 4.0,
        }
    }
}

/// Model constants used by all asymptotic formulas.
#[derive(Clone, Debug)]
pub struct AsymptoticParams<'a> {
    pub marginal: &'a Marginal,
    pub lambda: f64,
    pub b: f64,
    /// `b/(1-λ)`; infinite for power laws.
    pub gamma: f64,
    /// `c_λ`; NaN for power laws.
    pub c_lambda: f64,
    pub t_trunc: usize,
    pub cramer: Vec<f64>,
    /// Absolute slack `δ` on the `t` scale.
    pub delta: f64,
    pub thresholds: Thresholds,
}

impl<'a> AsymptoticParams<'a> {
    pub fn new(marginal: &'a Marginal) -> Result<Self> {
        Self::with_thresholds(marginal, Thresholds::default())
    }

    /// Build with explicit thresholds. Models needing Cramér terms beyond
    /// `λ_0` get an empty series here and fail later in the estimates that
    /// need it, unless supplied with [`AsymptoticParams::with_cramer`].
    pub fn with_thresholds(marginal: &'a Marginal, thresholds: Thresholds) -> Result<Self> {
        let spec = spec_of(marginal)?;
        let (lambda, b) = (spec.lambda, spec.b);
        let power = spec.is_power_law();
        let c = if power { f64::NAN } else { c_lambda(lambda, b) };
        let t_trunc = if power { 0 } else { cramer_order(lambda) };
        let cramer = if t_trunc <= 1 {
            cramer_series(marginal, t_trunc)?
        } else {
            Vec::new()
        };
        Ok(AsymptoticParams {
            marginal,
            lambda,
            b,
            gamma: spec.gamma(),
            c_lambda: c,
            t_trunc,
            cramer,
            delta: thresholds.delta_frac * c,
            thresholds,
        })
    }

    /// Supply Cramér coefficients (required when `t ≥ 2`).
    pub fn with_cramer(mut self, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() != self.t_trunc {
            return Err(Error::InvalidArgument(format!(
                "expected {} Cramér coefficients, got {}",
                self.t_trunc,
                coeffs.len()
            )));
        }
        self.cramer = coeffs;
        Ok(self)
    }

    pub fn is_power_law(&self) -> bool {
        self.lambda == 1.0
    }

    fn require_cramer(&self) -> Result<()> {
        if self.cramer.len() != self.t_trunc {
            return Err(Error::UnsupportedCramer { order: self.t_trunc });
        }
        Ok(())
    }

    /// `λ^{[t]}(z)`.
    pub fn cramer_poly(&self, z: f64) -> f64 {
        self.cramer.iter().rev().fold(0.0, |acc, &c| acc * z + c)
    }

    /// `R_λ(x) = σ² Σ λ_j (j+3) x^{j+1}`.
    pub fn r_lambda(&self, x: f64) -> f64 {
        self.marginal.sigma2()
            * self
                .cramer
                .iter()
                .enumerate()
                .map(|(j, &c)| c * (j as f64 + 3.0) * x.powi(j as i32 + 1))
                .sum::<f64>()
    }

    /// `(σ² L)^{1/(1+λ)}`.
    pub fn stretched_scale(&self, l: u64) -> f64 {
        (self.marginal.sigma2() * l as f64).powf(1.0 / (1.0 + self.lambda))
    }

    pub fn theta(&self, l: u64) -> f64 {
        self.thresholds.theta.eval(l)
    }
}

// ---------------------------------------------------------------------------
// Bernoulli parameters

/// `ℓ_γ` of the power-law critical window.
pub fn ell_gamma_powerlaw(sigma: f64, b: f64, a_tail: f64, gamma: f64) -> f64 {
    sigma.powf(b - 1.0) * (b - 3.0).powf(b / 2.0) * (-(b - 3.0) * gamma).exp()
        / ((2.0 * std::f64::consts::PI).sqrt() * a_tail)
}

/// `p_γ = 1/(1+ℓ_γ)`, the probability of the condensed phase (power laws).
pub fn p_gamma_powerlaw_raw(sigma: f64, b: f64, a_tail: f64, gamma: f64) -> f64 {
    1.0 / (1.0 + ell_gamma_powerlaw(sigma, b, a_tail, gamma))
}

pub fn p_gamma_powerlaw(m: &Marginal, gamma: f64) -> Result<f64> {
    let spec = spec_of(m)?;
    if !spec.is_power_law() {
        return Err(Error::InvalidModel("power-law rates required".into()));
    }
    Ok(p_gamma_powerlaw_raw(m.sigma(), spec.b, m.require_a_tail()?, gamma))
}

/// `ℓ_γ = √(1+λ) e^γ / (2 A √(π σ²))`, the ratio of the fluid (Gaussian) term
/// to the condensed term on the sub-leading scale.
pub fn ell_gamma_stretched(lambda: f64, sigma2: f64, a_tail: f64, gamma: f64) -> f64 {
    (1.0 + lambda).sqrt() * gamma.exp() / (2.0 * a_tail * (std::f64::consts::PI * sigma2).sqrt())
}

/// Probability of the condensed phase, `1/(1+ℓ_γ)`, on the sub-leading scale.
///
/// Since `ℓ_γ` is the fluid-to-condensed ratio, this decreases in `γ`; a
/// larger `γ` on that scale also means fewer particles.
pub fn p_gamma_stretched_raw(lambda: f64, sigma2: f64, a_tail: f64, gamma: f64) -> f64 {
    1.0 / (1.0 + ell_gamma_stretched(lambda, sigma2, a_tail, gamma))
}

pub fn p_gamma_stretched(m: &Marginal, gamma: f64) -> Result<f64> {
    let spec = spec_of(m)?;
    if spec.is_power_law() {
        return Err(Error::InvalidModel("stretched family required".into()));
    }
    Ok(p_gamma_stretched_raw(spec.lambda, m.sigma2(), m.require_a_tail()?, gamma))
}

// ---------------------------------------------------------------------------
// Condensate fraction

/// Smallest positive root `α` of
/// `σ²L/k^{1+λ} = α(1-α)^λ/b · (1 - R_λ(αk/L))` on the increasing branch.
pub fn alpha_root(p: &AsymptoticParams, l: u64, k: f64) -> Result<f64> {
    if p.is_power_law() {
        return Err(Error::InvalidModel("the condensate fraction root needs lambda < 1".into()));
    }
    p.require_cramer()?;
    let lf = l as f64;
    let lhs = p.marginal.sigma2() * lf / k.powf(1.0 + p.lambda);
    let f = |a: f64| a * (1.0 - a).powf(p.lambda) / p.b * (1.0 - p.r_lambda(a * k / lf)) - lhs;
    first_root(f, 1.0 / (1.0 + p.lambda)).map_err(|_| {
        Error::NoRoot(format!(
            "no root for L = {l}, k = {k}: the excess is below the existence threshold"
        ))
    })
}

/// Scan `(0, top]` for the first sign change of `f` and bisect it.
fn first_root<F: Fn(f64) -> f64>(f: F, top: f64) -> Result<f64> {
    let n = 2000;
    let mut prev = 0.0;
    let mut fprev = f(0.0);
    for i in 1..=n {
        let x = top * i as f64 / n as f64;
        let fx = f(x);
        if fprev < 0.0 && fx >= 0.0 {
            return bisect(&f, prev, x, 1e-13);
        }
        prev = x;
        fprev = fx;
    }
    Err(Error::NoRoot("no sign change on the increasing branch".into()))
}

/// Limit `a(t) = 1 - α` from `α(1-α)^λ = b/t^{1+λ}`.
pub fn a_of_t(lambda: f64, b: f64, t: f64) -> Result<f64> {
    if t == f64::INFINITY {
        return Ok(1.0);
    }
    let rhs = b / t.powf(1.0 + lambda);
    let f = |a: f64| a * (1.0 - a).powf(lambda) - rhs;
    first_root(f, 1.0 / (1.0 + lambda))
        .map(|alpha| 1.0 - alpha)
        .map_err(|_| Error::NoRoot(format!("t = {t} is below the existence threshold")))
}

/// `x_t = t(1 - a(t))`, the bulk share of the excess on the `t` scale.
pub fn x_t(lambda: f64, b: f64, t: f64) -> Result<f64> {
    Ok(t * (1.0 - a_of_t(lambda, b, t)?))
}

/// Variance `σ²/(1 - λ(1-a)/a)` of the condensate fluctuations.
pub fn gaussian_variance_correction(sigma2: f64, lambda: f64, a: f64) -> Result<f64> {
    let bound = lambda / (1.0 + lambda);
    let denom = 1.0 - lambda * (1.0 - a) / a;
    if !(denom > 0.0) {
        return Err(Error::NonPositive { a, bound });
    }
    if a > 1.0 {
        return Err(Error::InvalidArgument(format!("condensate fraction {a} exceeds 1")));
    }
    Ok(sigma2 / denom)
}

// ---------------------------------------------------------------------------
// Asymptotic estimates of P[S_L = N]

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EstimateCase {
    Nagaev1,
    Nagaev2,
    Nagaev3,
    Nagaev4,
    Nagaev5,
    DoneyGaussian,
    DoneyCondensate,
    DoneyMixed,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Component {
    pub name: String,
    pub log_value: f64,
}

/// Leading-order value of `log P[S_L = N]` with its case label.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AsymptoticEstimate {
    pub log_value: f64,
    pub case: EstimateCase,
    pub components: Vec<Component>,
    /// Set when `k` lies in a gap between ranges or in several at once.
    pub ambiguous: bool,
    pub warnings: Vec<String>,
}

/// Ranges of `k` for the five moderate-deviation cases.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NagaevRanges {
    pub lower1: f64,
    pub upper1: f64,
    pub upper4: f64,
    pub lower5: f64,
    pub upper5: f64,
}

impl NagaevRanges {
    pub fn new(p: &AsymptoticParams, l: u64) -> Self {
        let s = p.stretched_scale(l);
        let theta = p.theta(l);
        let edge = (l as f64).powf(1.0 / (2.0 * p.lambda));
        NagaevRanges {
            lower1: p.delta * (l as f64).sqrt(),
            upper1: (p.c_lambda - p.delta) * s,
            upper4: (p.c_lambda + p.delta) * s,
            lower5: edge / theta,
            upper5: edge * theta,
        }
    }

    /// All cases whose range contains `k`, in the order 1, 4, 2, 5, 3.
    pub fn cases(&self, k: f64) -> Vec<EstimateCase> {
        let mut out = Vec::new();
        if k > self.lower1 && k < self.upper1 {
            out.push(EstimateCase::Nagaev1);
        }
        if k >= self.upper1 && k <= self.upper4 {
            out.push(EstimateCase::Nagaev4);
        }
        if k > self.upper4 && k < self.lower5 {
            out.push(EstimateCase::Nagaev2);
        }
        if k >= self.lower5 && k <= self.upper5 {
            out.push(EstimateCase::Nagaev5);
        }
        if k > self.upper5 {
            out.push(EstimateCase::Nagaev3);
        }
        out
    }
}

fn log_gauss_term(p: &AsymptoticParams, l: u64, k: f64) -> f64 {
    let lf = l as f64;
    let s2 = p.marginal.sigma2();
    -0.5 * (LN_2PI + (s2 * lf).ln()) - k * k / (2.0 * s2 * lf)
        + k.powi(3) / (lf * lf) * p.cramer_poly(k / lf)
}

fn log_condensate_term(p: &AsymptoticParams, l: u64, k: f64, a_tail: f64) -> Result<f64> {
    let lf = l as f64;
    let s2 = p.marginal.sigma2();
    let lam = p.lambda;
    let alpha = alpha_root(p, l, k)?;
    let q = 1.0 - s2 * p.gamma * lam * (1.0 - lam) * lf / (k.powf(1.0 + lam) * (1.0 - alpha).powf(1.0 + lam));
    if !(q > 0.0) {
        return Err(Error::NoRoot(format!("prefactor vanishes at alpha = {alpha}")));
    }
    let ak = alpha * k;
    Ok((a_tail * lf).ln() - 0.5 * q.ln() - ak * ak / (2.0 * s2 * lf)
        + ak.powi(3) / (lf * lf) * p.cramer_poly(ak / lf)
        - p.gamma * ((1.0 - alpha) * k).powf(1.0 - lam))
}

/// Evaluate one case formula regardless of which range `k` lies in.
pub fn nagaev_case(p: &AsymptoticParams, l: u64, n: u64, case: EstimateCase) -> Result<AsymptoticEstimate> {
    if p.is_power_law() {
        return Err(Error::InvalidModel("moderate-deviation cases need lambda < 1".into()));
    }
    p.require_cramer()?;
    let lf = l as f64;
    let k = n as f64 - p.marginal.rho_c() * lf;
    if !(k > 0.0) {
        return Err(Error::InvalidArgument(format!("excess k = {k} must be positive")));
    }
    let a_tail = || p.marginal.require_a_tail();
    let big = |a: f64| (a * lf).ln() - p.gamma * k.powf(1.0 - p.lambda);
    let comp = |name: &str, v: f64| Component {
        name: name.into(),
        log_value: v,
    };
    let (log_value, components) = match case {
        EstimateCase::Nagaev1 => {
            let g = log_gauss_term(p, l, k);
            (g, vec![comp("gaussian", g)])
        }
        EstimateCase::Nagaev2 => {
            let c = log_condensate_term(p, l, k, a_tail()?)?;
            (c, vec![comp("condensate", c)])
        }
        EstimateCase::Nagaev3 => {
            let c = big(a_tail()?);
            (c, vec![comp("condensate", c)])
        }
        EstimateCase::Nagaev4 => {
            let g = log_gauss_term(p, l, k);
            let c = log_condensate_term(p, l, k, a_tail()?)?;
            (log_add_exp(g, c), vec![comp("condensate", c), comp("gaussian", g)])
        }
        EstimateCase::Nagaev5 => {
            let corr = lf * (1.0 - p.lambda).powi(2) * p.marginal.sigma2() / (2.0 * k.powf(2.0 * p.lambda));
            let c = big(a_tail()?) + corr;
            (c, vec![comp("condensate", c)])
        }
        other => {
            return Err(Error::InvalidArgument(format!("{other:?} is not a moderate-deviation case")))
        }
    };
    Ok(AsymptoticEstimate {
        log_value,
        case,
        components,
        ambiguous: false,
        warnings: Vec::new(),
    })
}

/// Leading-order `log P[S_L = N]` for stretched tails, choosing the case by
/// the configured ranges (first match in the order 1, 4, 2, 5, 3).
pub fn nagaev_estimate(p: &AsymptoticParams, l: u64, n: u64) -> Result<AsymptoticEstimate> {
    let k = n as f64 - p.marginal.rho_c() * l as f64;
    let ranges = NagaevRanges::new(p, l);
    let cases = ranges.cases(k);
    let (case, ambiguous, warn) = match cases.as_slice() {
        [] if k <= ranges.lower1 => (EstimateCase::Nagaev1, true, "k is below the case-1 range"),
        [] => (EstimateCase::Nagaev2, true, "k lies in a gap between case ranges"),
        [c] => (*c, false, ""),
        [c, ..] => (*c, true, "k lies in several case ranges"),
    };
    let mut est = nagaev_case(p, l, n, case)?;
    est.ambiguous = ambiguous;
    if !warn.is_empty() {
        est.warnings.push(warn.into());
    }
    Ok(est)
}

/// Gaussian plus one-big-jump split of `P[S_L = N]` for power laws.
pub fn doney_split(m: &Marginal, l: u64, n: u64) -> Result<AsymptoticEstimate> {
    let spec = spec_of(m)?;
    if !spec.is_power_law() || spec.b <= 3.0 {
        return Err(Error::InvalidModel("the split needs power-law rates with b > 3".into()));
    }
    let lf = l as f64;
    let k = n as f64 - m.rho_c() * lf;
    if k < 0.0 {
        return Err(Error::InvalidArgument(format!("excess k = {k} must be non-negative")));
    }
    let z = k / lf.sqrt();
    let g = -0.5 * (LN_2PI + (m.sigma2() * lf).ln()) - z * z / (2.0 * m.sigma2());
    let c = lf.ln() + m.log_pmf_extended(k.floor() as usize);
    let mut warnings = Vec::new();
    if z < 3.0 * m.sigma() {
        warnings.push(format!(
            "z = {z:.3} is not large; the split is only valid as z -> infinity"
        ));
    }
    let total = log_add_exp(g, c);
    let case = if (g - c).abs() < 3.0_f64.ln() {
        EstimateCase::DoneyMixed
    } else if g > c {
        EstimateCase::DoneyGaussian
    } else {
        EstimateCase::DoneyCondensate
    };
    Ok(AsymptoticEstimate {
        log_value: total,
        case,
        components: vec![
            Component {
                name: "gaussian".into(),
                log_value: g,
            },
            Component {
                name: "condensate".into(),
                log_value: c,
            },
        ],
        ambiguous: false,
        warnings,
    })
}

// ---------------------------------------------------------------------------
// Limit laws

/// `exp{-A x^{1-b}/(b-1)}` for `x > 0`.
pub fn frechet_cdf(x: f64, a_tail: f64, b: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    (-a_tail * x.powf(1.0 - b) / (b - 1.0)).exp()
}

pub fn gumbel_cdf(x: f64) -> f64 {
    (-(-x).exp()).exp()
}

pub fn gaussian_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// `exp{-A ∫_x^∞ e^{-ωt} t^{-b} dt}`, integrated in `u = 1/t`.
pub fn downside_mixture_cdf(x: f64, omega: f64, a_tail: f64, b: f64) -> Result<f64> {
    if x <= 0.0 {
        return Ok(0.0);
    }
    if omega < 0.0 || b <= 1.0 {
        return Err(Error::InvalidArgument("need omega >= 0 and b > 1".into()));
    }
    let f = |u: f64| {
        if u <= 0.0 {
            0.0
        } else {
            (-omega / u).exp() * u.powf(b - 2.0)
        }
    };
    let integral = integrate(f, 0.0, 1.0 / x, 1e-12)?;
    Ok((-a_tail * integral).exp())
}

/// Centering and scale for the maximum.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "kebab-case")]
pub enum Norming {
    /// `M_L / scale` against the Fréchet law.
    Frechet { scale: f64, a_tail: f64, b: f64 },
    /// `M_L / scale` against the downside mixture with parameter `omega`.
    FrechetMixture { scale: f64, omega: f64, a_tail: f64, b: f64 },
    /// `(M_L - center) / scale` against the Gumbel law.
    Gumbel { center: f64, scale: f64 },
    /// `(M_L - center) / scale` against the standard normal.
    Gaussian { center: f64, scale: f64 },
}

impl Norming {
    /// Normalized statistic for an observed maximum.
    pub fn normalize(&self, m: f64) -> f64 {
        match *self {
            Norming::Frechet { scale, .. } | Norming::FrechetMixture { scale, .. } => m / scale,
            Norming::Gumbel { center, scale } | Norming::Gaussian { center, scale } => (m - center) / scale,
        }
    }

    /// Limit CDF of the normalized statistic.
    pub fn cdf(&self, x: f64) -> f64 {
        match *self {
            Norming::Frechet { a_tail, b, .. } => frechet_cdf(x, a_tail, b),
            Norming::FrechetMixture { omega, a_tail, b, .. } => {
                downside_mixture_cdf(x, omega, a_tail, b).unwrap_or(f64::NAN)
            }
            Norming::Gumbel { .. } => gumbel_cdf(x),
            Norming::Gaussian { .. } => gaussian_cdf(x),
        }
    }
}

/// Continuous interpolation of `log P[η > y]` between integers.
fn log_tail_interp(log_tails: &[f64], y: f64) -> f64 {
    let i = y.floor().max(0.0) as usize;
    if i + 1 >= log_tails.len() {
        return f64::NEG_INFINITY;
    }
    let f = y - i as f64;
    if f == 0.0 {
        return log_tails[i];
    }
    if log_tails[i + 1] == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    (1.0 - f) * log_tails[i] + f * log_tails[i + 1]
}

fn log_tails(m: &Marginal) -> Vec<f64> {
    // log P[η > n] for n = 0..K-1, summed from the far end.
    let p = m.p();
    let mut out = vec![f64::NEG_INFINITY; p.len()];
    let mut acc = 0.0f64;
    for n in (0..p.len()).rev() {
        out[n] = if acc > 0.0 { acc.ln() } else { f64::NEG_INFINITY };
        acc += p[n];
    }
    out
}

/// Numeric Gumbel norming `(y_L, b_L)` for i.i.d. maxima of `L` sites:
/// `L·P[η > y_L] = 1` and `L·P[η > y_L + b_L] = e^{-1}` on the interpolated tail.
pub fn gumbel_norming(m: &Marginal, l: u64) -> Result<(f64, f64)> {
    let lt = log_tails(m);
    let target = -(l as f64).ln();
    let top = lt.iter().rposition(|v| v.is_finite()).unwrap_or(0) as f64;
    let solve = |t: f64| bisect(|y| log_tail_interp(&lt, y) - t, 0.0, top, 1e-10);
    let y = solve(target)?;
    let y1 = solve(target - 1.0)?;
    Ok((y, y1 - y))
}

/// Leading forms `y_L ≈ ((1-λ) log L / b)^{1/(1-λ)}`, `b_L ≈ y_L^λ / b`.
pub fn gumbel_norming_leading(lambda: f64, b: f64, l: u64) -> (f64, f64) {
    let y = ((1.0 - lambda) * (l as f64).ln() / b).powf(1.0 / (1.0 - lambda));
    (y, y.powf(lambda) / b)
}

/// `B_L` solving `(sB)^b e^{sB} = A L s^{b-1}` with `s = |s_*|`.
pub fn b_sub_l(a_tail: f64, b: f64, l: u64, s: f64) -> Result<f64> {
    let rhs = (a_tail * l as f64).ln() + (b - 1.0) * s.ln();
    let f = |u: f64| b * u.ln() + u - rhs;
    let mut hi = 1.0;
    while f(hi) < 0.0 {
        hi *= 2.0;
        if hi > 1e12 {
            return Err(Error::NoRoot("B_L bracket overflow".into()));
        }
    }
    let u = bisect(f, 1e-300, hi, 1e-14 * hi)?;
    Ok(u / s)
}

/// Tilt `s_*` with `ρ(s_*) = N/L` for the uncapped law (downside, `s_* < 0`).
pub fn s_star(m: &Marginal, l: u64, n: u64) -> Result<f64> {
    Ok(solve_tilt(m, None, n as f64 / l as f64)?.s())
}

/// Gumbel norming for stretched-tail downside deviations: the centre solves
/// `A L γ^λ e^{s γ - γ' γ^{1-λ}} / (|s| γ^λ + b) = 1` and the scale is
/// `1/(|s| + b γ^{-λ})`, covering all sub-cases in one formula.
pub fn stretched_downside_norming(m: &Marginal, l: u64, n: u64) -> Result<(f64, f64)> {
    let spec = spec_of(m)?;
    let a = m.require_a_tail()?;
    let s = s_star(m, l, n)?.min(0.0).abs();
    let (lam, b, g) = (spec.lambda, spec.b, spec.gamma());
    let lhs = |y: f64| {
        (a * l as f64).ln() + lam * y.ln() - s * y - g * y.powf(1.0 - lam) - (s * y.powf(lam) + b).ln()
    };
    let mut hi = 2.0;
    while lhs(hi) > 0.0 {
        hi *= 2.0;
        if hi > 1e15 {
            return Err(Error::NoRoot("downside centre bracket overflow".into()));
        }
    }
    let y = bisect(lhs, 1e-9, hi, 1e-10)?;
    Ok((y, 1.0 / (s + b * y.powf(-lam))))
}

// ---------------------------------------------------------------------------
// Regime classification

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Upside,
    Downside,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CaseLabel {
    #[serde(rename = "PL-a")]
    PlA,
    #[serde(rename = "PL-b")]
    PlB,
    #[serde(rename = "PL-c")]
    PlC,
    #[serde(rename = "PL-down-a")]
    PlDownA,
    #[serde(rename = "PL-down-b")]
    PlDownB,
    #[serde(rename = "PL-down-c")]
    PlDownC,
    #[serde(rename = "SE-a")]
    SeA,
    #[serde(rename = "SE-b")]
    SeB,
    #[serde(rename = "SE-c")]
    SeC,
    #[serde(rename = "SE-down")]
    SeDown,
}

impl std::fmt::Display for CaseLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = serde_json::to_value(self).unwrap();
        write!(f, "{}", s.as_str().unwrap())
    }
}

/// Classification of `(L, N)` with all scale coordinates.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RegimeReport {
    #[serde(rename = "L")]
    pub l: u64,
    #[serde(rename = "N")]
    pub n: u64,
    /// `N - ρ_c L` as a real number.
    pub k: f64,
    pub side: Side,
    pub case: CaseLabel,
    pub delta_l: f64,
    #[serde(rename = "gamma_L")]
    pub gamma_l: Option<f64>,
    #[serde(rename = "t_L")]
    pub t_l: Option<f64>,
    #[serde(rename = "omega_L")]
    pub omega_l: Option<f64>,
    pub p_gamma: Option<f64>,
    pub alpha: Option<f64>,
    #[serde(rename = "a_L")]
    pub a_l: Option<f64>,
    pub a_t: Option<f64>,
    pub normings: Option<Norming>,
    pub log_p: Option<f64>,
    pub components: Vec<Component>,
    pub flags: Vec<String>,
}

/// `γ_L` of the power-law critical window for excess `k`.
pub fn gamma_l_powerlaw(sigma: f64, b: f64, l: u64, k: f64) -> f64 {
    let ll = (l as f64).ln();
    let scale = sigma * ((b - 3.0) * l as f64 * ll).sqrt();
    ll * (k / scale - 1.0) - b / (2.0 * (b - 3.0)) * ll.ln()
}

/// Sub-leading `γ_L` of the stretched critical window for excess `k`.
pub fn gamma_l_stretched(p: &AsymptoticParams, l: u64, k: f64) -> f64 {
    let s = p.stretched_scale(l);
    let c = p.c_lambda;
    (c * s - k) * 2.0 * p.lambda * c / ((1.0 + p.lambda) * s.powf(p.lambda)) - 1.5 * (l as f64).ln()
}

/// Classify `(L, N)` and fill every applicable scale quantity.
pub fn scale_coordinates(p: &AsymptoticParams, l: u64, n: u64) -> Result<RegimeReport> {
    let m = p.marginal;
    let lf = l as f64;
    let k = n as f64 - m.rho_c() * lf;
    let side = if k >= 0.0 { Side::Upside } else { Side::Downside };
    let th = &p.thresholds;
    let mut r = RegimeReport {
        l,
        n,
        k,
        side,
        case: CaseLabel::SeA,
        delta_l: critical_scale(m, l)?,
        gamma_l: None,
        t_l: None,
        omega_l: None,
        p_gamma: None,
        alpha: None,
        a_l: None,
        a_t: None,
        normings: None,
        log_p: None,
        components: Vec::new(),
        flags: Vec::new(),
    };
    let a_tail = m.a_tail();
    if p.is_power_law() {
        let b = p.b;
        let frechet_scale = lf.powf(1.0 / (b - 1.0));
        match side {
            Side::Upside => {
                let g = gamma_l_powerlaw(m.sigma(), b, l, k);
                r.gamma_l = Some(g);
                r.case = if g < -th.gamma {
                    CaseLabel::PlA
                } else if g > th.gamma {
                    CaseLabel::PlB
                } else {
                    CaseLabel::PlC
                };
                if (g.abs() - th.gamma).abs() < 0.5 {
                    r.flags.push("near the gamma threshold".into());
                }
                match r.case {
                    CaseLabel::PlA => {
                        r.normings = a_tail.map(|a| Norming::Frechet {
                            scale: frechet_scale,
                            a_tail: a,
                            b,
                        })
                    }
                    CaseLabel::PlB => {
                        r.normings = Some(Norming::Gaussian {
                            center: k,
                            scale: (m.sigma2() * lf).sqrt(),
                        })
                    }
                    _ => r.p_gamma = p_gamma_powerlaw(m, g).ok(),
                }
                if let Ok(est) = doney_split(m, l, n) {
                    r.log_p = Some(est.log_value);
                    r.components = est.components;
                }
            }
            Side::Downside => {
                let w = -k / (m.sigma2() * lf.powf((b - 2.0) / (b - 1.0)));
                r.omega_l = Some(w);
                r.case = if w < th.omega_lo {
                    CaseLabel::PlDownA
                } else if w > th.omega_hi {
                    CaseLabel::PlDownC
                } else {
                    CaseLabel::PlDownB
                };
                if let Some(a) = a_tail {
                    r.normings = match r.case {
                        CaseLabel::PlDownA => Some(Norming::Frechet {
                            scale: frechet_scale,
                            a_tail: a,
                            b,
                        }),
                        CaseLabel::PlDownB => Some(Norming::FrechetMixture {
                            scale: frechet_scale,
                            omega: w,
                            a_tail: a,
                            b,
                        }),
                        _ => {
                            let s = s_star(m, l, n)?.abs();
                            let bl = b_sub_l(a, b, l, s)?;
                            Some(Norming::Gumbel {
                                center: bl,
                                scale: 1.0 / s,
                            })
                        }
                    };
                }
            }
        }
        return Ok(r);
    }

    let lam = p.lambda;
    match side {
        Side::Upside => {
            let t = k / p.stretched_scale(l);
            r.t_l = Some(t);
            let mut case = if (t - p.c_lambda).abs() <= p.delta {
                CaseLabel::SeC
            } else if t < p.c_lambda {
                CaseLabel::SeA
            } else {
                CaseLabel::SeB
            };
            if lam > 0.5 {
                let g = gamma_l_stretched(p, l, k);
                r.gamma_l = Some(g);
                if g.abs() <= th.gamma {
                    case = CaseLabel::SeC;
                }
                if case == CaseLabel::SeC {
                    r.p_gamma = p_gamma_stretched(m, g).ok();
                }
            }
            r.case = case;
            if ((t - p.c_lambda).abs() - p.delta).abs() < 0.1 * p.delta {
                r.flags.push("near the delta window around c_lambda".into());
            }
            if let Ok(alpha) = alpha_root(p, l, k) {
                r.alpha = Some(alpha);
                r.a_l = Some(1.0 - alpha);
            }
            if t > p.c_lambda {
                r.a_t = a_of_t(lam, p.b, t).ok();
            }
            match case {
                CaseLabel::SeA => {
                    if let Ok((y, bl)) = gumbel_norming(m, l) {
                        r.normings = Some(Norming::Gumbel { center: y, scale: bl });
                    }
                }
                CaseLabel::SeB => {
                    if let (Some(a_l), Some(a)) = (r.a_l, r.a_t.or(r.a_l)) {
                        if let Ok(v) = gaussian_variance_correction(m.sigma2(), lam, a) {
                            r.normings = Some(Norming::Gaussian {
                                center: a_l * k,
                                scale: (v * lf).sqrt(),
                            });
                        }
                    }
                }
                _ => {}
            }
            match nagaev_estimate(p, l, n) {
                Ok(est) => {
                    if est.ambiguous {
                        r.flags.push("moderate-deviation case is ambiguous".into());
                    }
                    r.log_p = Some(est.log_value);
                    r.components = est.components;
                }
                Err(e) => r.flags.push(format!("no asymptotic estimate: {e}")),
            }
        }
        Side::Downside => {
            r.omega_l = Some(-k * lf.ln().powf(1.0 / (1.0 - lam)) / lf);
            r.case = CaseLabel::SeDown;
            if let Ok((c, s)) = stretched_downside_norming(m, l, n) {
                r.normings = Some(Norming::Gumbel { center: c, scale: s });
            }
        }
    }
    Ok(r)
}

// ---------------------------------------------------------------------------
// Particle-number rules

/// How `N` is chosen for a given `L`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "kebab-case")]
pub enum NRule {
    Fixed { n: u64 },
    /// Sub-leading stretched window with parameter `gamma` (needs λ > 1/2).
    Subl { gamma: f64 },
    /// Power-law critical window with parameter `gamma`.
    Gammal1 { gamma: f64 },
    /// `N = ρ_c L + t (σ² L)^{1/(1+λ)}`.
    Gammal2 { t: f64 },
    /// Downside coordinate `ω_L` of the family.
    Omega { omega: f64 },
}

/// Real-valued `N` from a rule and its rounding.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ResolvedN {
    pub real: f64,
    pub n: u64,
}

pub fn resolve_n(rule: &NRule, m: &Marginal, l: u64) -> Result<ResolvedN> {
    let spec = spec_of(m)?;
    let lf = l as f64;
    let base = m.rho_c() * lf;
    let (lam, b) = (spec.lambda, spec.b);
    let real = match *rule {
        NRule::Fixed { n } => n as f64,
        NRule::Subl { gamma } => {
            if spec.is_power_law() || lam <= 0.5 {
                return Err(Error::InvalidModel("the sub-leading rule needs lambda in (1/2, 1)".into()));
            }
            let s = (m.sigma2() * lf).powf(1.0 / (1.0 + lam));
            let c = c_lambda(lam, b);
            base + c * s - (1.0 + lam) / (2.0 * lam * c) * s.powf(lam) * (1.5 * lf.ln() + gamma)
        }
        NRule::Gammal1 { gamma } => {
            if !spec.is_power_law() || b <= 3.0 {
                return Err(Error::InvalidModel("the power-law window needs lambda = 1, b > 3".into()));
            }
            let ll = lf.ln();
            base + m.sigma() * ((b - 3.0) * lf * ll).sqrt()
                * (1.0 + b / (2.0 * (b - 3.0)) * ll.ln() / ll + gamma / ll)
        }
        NRule::Gammal2 { t } => {
            if spec.is_power_law() {
                return Err(Error::InvalidModel("the t rule needs lambda < 1".into()));
            }
            base + t * (m.sigma2() * lf).powf(1.0 / (1.0 + lam))
        }
        NRule::Omega { omega } => {
            if spec.is_power_law() {
                base - omega * m.sigma2() * lf.powf((b - 2.0) / (b - 1.0))
            } else {
                base - omega * lf / lf.ln().powf(1.0 / (1.0 - lam))
            }
        }
    };
    if !(real >= 0.0) {
        return Err(Error::InvalidArgument(format!("rule gives negative N = {real}")));
    }
    Ok(ResolvedN {
        real,
        n: real.round() as u64,
    })
}

/// Predicted condensate size `(N - ρ_c L)` scaled by `2λ/(1+λ)` in the
/// stretched critical window, and by 1 otherwise.
pub fn predicted_condensate(m: &Marginal, l: u64, n: u64, case: CaseLabel) -> f64 {
    let k = n as f64 - m.rho_c() * l as f64;
    match (case, m.spec()) {
        (CaseLabel::SeC, Some(s)) if s.family != Family::PowerLawRates => {
            2.0 * s.lambda / (1.0 + s.lambda) * k
        }
        _ => k,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn fig2() -> Marginal {
        Marginal::new(&ModelSpec::stretched_rates(0.6, 2.0).unwrap()).unwrap()
    }

    #[test]
    fn c_lambda_values() {
        assert!((c_lambda(0.6, 2.0) - 4.09).abs() < 0.01);
        assert_relative_eq!(c_lambda(0.5, 0.5), 1.5, epsilon = 1e-14);
        assert!(c_lambda(0.6, 3.0) > c_lambda(0.6, 2.0));
    }

    #[test]
    fn cramer_order_uses_floor() {
        assert_eq!(cramer_order(0.6), 0);
        assert_eq!(cramer_order(0.5), 1);
        assert_eq!(cramer_order(0.45), 1);
        assert_eq!(cramer_order(0.3), 2);
    }

    #[test]
    fn symmetric_law_has_zero_cramer_coefficient() {
        let m = Marginal::from_pmf(&[0.25, 0.5, 0.25]).unwrap();
        assert!(cramer_series(&m, 1).unwrap()[0].abs() < 1e-15);
        assert!(cramer_series(&m, 0).unwrap().is_empty());
        assert!(matches!(cramer_series(&m, 2), Err(Error::UnsupportedCramer { order: 2 })));
    }

    #[test]
    fn powerlaw_p_gamma_hand_value() {
        let ell = ell_gamma_powerlaw(1.0, 5.0, 1.0, 0.0);
        assert_relative_eq!(ell, 2f64.powf(2.5) / (2.0 * std::f64::consts::PI).sqrt(), epsilon = 1e-14);
        assert!((ell - 2.2568).abs() < 1e-4);
        assert!((p_gamma_powerlaw_raw(1.0, 5.0, 1.0, 0.0) - 0.3071).abs() < 1e-4);
        assert!(p_gamma_powerlaw_raw(1.0, 5.0, 1.0, 20.0) > 0.999);
        assert!(p_gamma_powerlaw_raw(1.0, 5.0, 1.0, -20.0) < 1e-3);
    }

    #[test]
    fn a_of_t_endpoints() {
        let c = c_lambda(0.6, 2.0);
        assert_relative_eq!(a_of_t(0.6, 2.0, c).unwrap(), 0.75, epsilon = 1e-9);
        assert!(a_of_t(0.6, 2.0, 1e6).unwrap() > 0.999);
        let a = a_of_t(0.6, 2.0, 2.0 * c).unwrap();
        assert!((1.0 - a - 0.073).abs() < 0.001, "alpha = {}", 1.0 - a);
        assert!(a_of_t(0.6, 2.0, 1.0).is_err());
    }

    #[test]
    fn variance_correction() {
        assert_eq!(gaussian_variance_correction(2.0, 0.6, 1.0).unwrap(), 2.0);
        let a = 2.0 * 0.6 / 1.6;
        assert_relative_eq!(
            gaussian_variance_correction(2.0, 0.6, a).unwrap(),
            2.0 * 2.0 / 1.6,
            epsilon = 1e-12
        );
        assert!(matches!(
            gaussian_variance_correction(2.0, 0.6, 0.375),
            Err(Error::NonPositive { .. })
        ));
    }

    #[test]
    fn limit_cdfs() {
        assert_relative_eq!(gumbel_cdf(0.0), (-1f64).exp(), epsilon = 1e-15);
        assert!(frechet_cdf(1e9, 96.0, 5.0) > 1.0 - 1e-12);
        assert_eq!(frechet_cdf(-1.0, 96.0, 5.0), 0.0);
        assert_relative_eq!(gaussian_cdf(0.0), 0.5, epsilon = 1e-15);
        for &x in &[0.5, 1.0, 2.0, 5.0] {
            let mix = downside_mixture_cdf(x, 0.0, 3.0, 5.0).unwrap();
            assert_relative_eq!(mix, frechet_cdf(x, 3.0, 5.0), max_relative = 1e-9);
        }
    }

    #[test]
    fn fig2_resolve_and_classify() {
        let m = fig2();
        let r = resolve_n(&NRule::Subl { gamma: 0.0 }, &m, 1024).unwrap();
        assert!((r.n as i64 - 1356).abs() <= 1, "N = {}", r.real);
        let p = AsymptoticParams::new(&m).unwrap();
        let rep = scale_coordinates(&p, 1024, 1360).unwrap();
        assert_eq!(rep.case, CaseLabel::SeC);
        let d = critical_scale(&m, 1024).unwrap();
        assert!((d - 559.0).abs() < 3.0, "delta = {d}");
    }

    #[test]
    fn powerlaw_zero_excess_gamma() {
        let m = Marginal::new(&ModelSpec::power_law(5.0).unwrap()).unwrap();
        let l = 1000u64;
        let ll = (l as f64).ln();
        let g = gamma_l_powerlaw(m.sigma(), 5.0, l, 0.0);
        assert_relative_eq!(g, -ll - 5.0 / 4.0 * ll.ln(), epsilon = 1e-12);
        let p = AsymptoticParams::new(&m).unwrap();
        let n = resolve_n(&NRule::Gammal1 { gamma: 8.0 }, &m, 10_000).unwrap();
        assert_eq!(scale_coordinates(&p, 10_000, n.n).unwrap().case, CaseLabel::PlB);
    }

    #[test]
    fn b_sub_l_solves_its_equation() {
        let (a, b, l, s) = (96.0, 5.0, 10_000u64, 0.02);
        let bl = b_sub_l(a, b, l, s).unwrap();
        let lhs = b * (s * bl).ln() + s * bl;
        let rhs = (a * l as f64).ln() + (b - 1.0) * s.ln();
        assert!((lhs - rhs).abs() < 1e-9);
    }
}
