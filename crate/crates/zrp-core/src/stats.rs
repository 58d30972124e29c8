//! Observables of sample batches and tests against predicted laws.
//!
//! Every normalized statistic goes through [`Norming`], so each limit law is
//! checked along exactly one centering and scaling path.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::asymptotics::{predicted_condensate, CaseLabel, Norming};
use crate::error::{Error, Result};
use crate::marginal::{Marginal, ModelSpec};
use crate::par::Exec;
use crate::sampler::Configuration;

/// Smallest sample accepted by the goodness-of-fit tests.
pub const MIN_SAMPLE: usize = 1000;

/// Per-replica summary of a configuration.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Record {
    /// `M_L`.
    pub max: u64,
    pub argmax: usize,
    pub second_max: u64,
    /// `S_L`, kept as a check against `N`.
    pub sum: u64,
    pub eta: Option<Vec<u64>>,
}

impl Record {
    pub fn from_config(c: &Configuration, keep_eta: bool) -> Self {
        let (argmax, max) = c.max();
        Record {
            max,
            argmax,
            second_max: c.second_max(),
            sum: c.sum(),
            eta: keep_eta.then(|| c.eta.clone()),
        }
    }
}

/// Replica records for one `(model, L, N)` ensemble.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SampleBatch {
    pub model: Option<ModelSpec>,
    pub l: u64,
    pub n: u64,
    pub regime: Option<CaseLabel>,
    pub records: Vec<Record>,
}

impl SampleBatch {
    pub fn new(model: Option<ModelSpec>, l: u64, n: u64, regime: Option<CaseLabel>) -> Self {
        SampleBatch {
            model,
            l,
            n,
            regime,
            records: Vec::new(),
        }
    }

    /// Append a record after checking `S_L = N` and `second ≤ M_L`.
    pub fn push(&mut self, r: Record) -> Result<()> {
        if r.sum != self.n {
            return Err(Error::InvalidArgument(format!("record has S_L = {} but N = {}", r.sum, self.n)));
        }
        if r.second_max > r.max {
            return Err(Error::InvalidArgument("second maximum exceeds the maximum".into()));
        }
        if r.eta.as_ref().is_some_and(|e| e.len() as u64 != self.l) {
            return Err(Error::InvalidArgument("stored configuration has the wrong size".into()));
        }
        self.records.push(r);
        Ok(())
    }

    pub fn extend<I: IntoIterator<Item = Record>>(&mut self, it: I) -> Result<()> {
        it.into_iter().try_for_each(|r| self.push(r))
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn maxima(&self) -> Vec<u64> {
        self.records.iter().map(|r| r.max).collect()
    }

    /// `N - ρ_c L`.
    pub fn excess(&self, m: &Marginal) -> f64 {
        self.n as f64 - m.rho_c() * self.l as f64
    }
}

// ---------------------------------------------------------------------------
// Summaries and confidence intervals

/// Mean with a normal-approximation 95% interval.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub count: usize,
    pub mean: f64,
    pub std_dev: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

/// Sample mean, standard deviation and 95% interval.
pub fn summarize(x: &[f64]) -> Summary {
    let n = x.len();
    let mean = x.iter().sum::<f64>() / n.max(1) as f64;
    let var = if n > 1 {
        x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64
    } else {
        0.0
    };
    let half = 1.959964 * (var / n.max(1) as f64).sqrt();
    Summary {
        count: n,
        mean,
        std_dev: var.sqrt(),
        ci_lo: mean - half,
        ci_hi: mean + half,
    }
}

/// Wilson score interval for `k` successes out of `n` at normal quantile `z`.
pub fn wilson_ci(k: usize, n: usize, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let nf = n as f64;
    let p = k as f64 / nf;
    let z2 = z * z;
    let centre = (p + z2 / (2.0 * nf)) / (1.0 + z2 / nf);
    let half = z / (1.0 + z2 / nf) * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt();
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

/// Empirical quantile by linear interpolation of the order statistics.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let i = pos.floor() as usize;
    let j = (i + 1).min(sorted.len() - 1);
    sorted[i] + (pos - i as f64) * (sorted[j] - sorted[i])
}

// ---------------------------------------------------------------------------
// Excess-mass fraction and the Bernoulli mixture

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExcessFraction {
    /// `M_L / (N - ρ_c L)` per replica.
    pub values: Vec<f64>,
    pub summary: Summary,
}

/// Empirical law of `M_L / (N - ρ_c L)`.
pub fn excess_fraction(batch: &SampleBatch, m: &Marginal) -> Result<ExcessFraction> {
    let k = batch.excess(m);
    if k == 0.0 {
        return Err(Error::InvalidArgument("N equals rho_c L".into()));
    }
    let values: Vec<f64> = batch.records.iter().map(|r| r.max as f64 / k).collect();
    let summary = summarize(&values);
    Ok(ExcessFraction { values, summary })
}

/// Default condensate threshold: half the predicted condensed mode.
pub fn default_threshold(batch: &SampleBatch, m: &Marginal) -> f64 {
    let case = batch.regime.unwrap_or(CaseLabel::SeA);
    predicted_condensate(m, batch.l, batch.n, case) / 2.0
}

/// Whether a record is condensed at `threshold`.
pub fn is_condensed(r: &Record, threshold: f64) -> bool {
    r.max as f64 > threshold
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PhaseMixture {
    pub threshold: f64,
    pub condensed: usize,
    pub total: usize,
    pub fraction: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    /// Mean of `M_L / (N - ρ_c L)` over condensed replicas.
    pub condensed_ratio: Option<f64>,
    /// Predicted condensed fraction, if supplied.
    pub predicted: Option<f64>,
}

impl PhaseMixture {
    /// Both phases observed.
    pub fn is_mixed(&self) -> bool {
        self.condensed > 0 && self.condensed < self.total
    }
}

/// Condensed fraction with a Wilson 95% interval and the mean condensed ratio.
pub fn phase_mixture_test(
    batch: &SampleBatch,
    m: &Marginal,
    threshold: Option<f64>,
    predicted: Option<f64>,
) -> Result<PhaseMixture> {
    if batch.is_empty() {
        return Err(Error::SampleTooSmall { n: 0, min: 1 });
    }
    let threshold = threshold.unwrap_or_else(|| default_threshold(batch, m));
    let k = batch.excess(m);
    let cond: Vec<f64> = batch
        .records
        .iter()
        .filter(|r| is_condensed(r, threshold))
        .map(|r| r.max as f64 / k)
        .collect();
    let total = batch.len();
    let (ci_lo, ci_hi) = wilson_ci(cond.len(), total, 1.959964);
    Ok(PhaseMixture {
        threshold,
        condensed: cond.len(),
        total,
        fraction: cond.len() as f64 / total as f64,
        ci_lo,
        ci_hi,
        condensed_ratio: (!cond.is_empty()).then(|| summarize(&cond).mean),
        predicted,
    })
}

// ---------------------------------------------------------------------------
// Goodness of fit

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub n: usize,
    /// Kolmogorov distance in `[0, 1]`.
    pub d: f64,
    pub p_value: f64,
}

/// Asymptotic Kolmogorov survival function `P[K > x]`.
pub fn kolmogorov_sf(x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x < 0.3 {
        // Series in e^{-π²/(8x²)} converges fast for small x.
        let q = (-std::f64::consts::PI.powi(2) / (8.0 * x * x)).exp();
        let s: f64 = (0..20).map(|k| q.powi((2 * k + 1) * (2 * k + 1))).sum();
        return (1.0 - (2.0 * std::f64::consts::PI).sqrt() / x * s).clamp(0.0, 1.0);
    }
    let mut s = 0.0;
    for k in 1..=100 {
        let t = (-2.0 * (k * k) as f64 * x * x).exp();
        s += if k % 2 == 1 { t } else { -t };
        if t < 1e-17 {
            break;
        }
    }
    (2.0 * s).clamp(0.0, 1.0)
}

fn check_size(n: usize) -> Result<()> {
    if n < MIN_SAMPLE {
        return Err(Error::SampleTooSmall { n, min: MIN_SAMPLE });
    }
    Ok(())
}

/// Kolmogorov distance of `samples` against a continuous CDF.
pub fn ks_distance<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> f64 {
    let mut x: Vec<f64> = samples.to_vec();
    x.sort_by(f64::total_cmp);
    let n = x.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &v) in x.iter().enumerate() {
        let f = cdf(v);
        d = d.max((i + 1) as f64 / n - f).max(f - i as f64 / n);
    }
    d.clamp(0.0, 1.0)
}

/// One-sample KS test against a continuous CDF (asymptotic p-value).
pub fn ks_test<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> Result<KsResult> {
    check_size(samples.len())?;
    let d = ks_distance(samples, cdf);
    Ok(KsResult {
        n: samples.len(),
        d,
        p_value: kolmogorov_sf((samples.len() as f64).sqrt() * d),
    })
}

/// KS test of integer samples against a CDF tabulated on `0..cdf.len()`
/// (`F(m) = cdf[m]`, and 1 beyond the table). The asymptotic p-value is
/// conservative for discrete laws.
pub fn ks_test_discrete(samples: &[u64], cdf: &[f64]) -> Result<KsResult> {
    check_size(samples.len())?;
    let n = samples.len();
    let top = samples.iter().copied().max().unwrap_or(0) as usize;
    let mut counts = vec![0usize; top.max(cdf.len()) + 1];
    for &s in samples {
        counts[s as usize] += 1;
    }
    let mut acc = 0usize;
    let mut d: f64 = 0.0;
    for (m, &c) in counts.iter().enumerate() {
        acc += c;
        let f = cdf.get(m).copied().unwrap_or(1.0);
        d = d.max((acc as f64 / n as f64 - f).abs());
    }
    Ok(KsResult {
        n,
        d,
        p_value: kolmogorov_sf((n as f64).sqrt() * d),
    })
}

/// KS statistic of the normalized maxima against the norming's limit law.
pub fn max_law_test(batch: &SampleBatch, norming: &Norming) -> Result<KsResult> {
    let x: Vec<f64> = batch.records.iter().map(|r| norming.normalize(r.max as f64)).collect();
    ks_test(&x, |v| norming.cdf(v))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChiSquare {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

/// Pearson χ² of `counts` against `probs`. Adjacent cells are pooled from
/// the right until every expected count reaches `min_expected`.
pub fn chi_square(counts: &[u64], probs: &[f64], min_expected: f64) -> Result<ChiSquare> {
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return Err(Error::SampleTooSmall { n: 0, min: 1 });
    }
    let len = counts.len().max(probs.len());
    let norm: f64 = probs.iter().sum();
    let mut cells: Vec<(f64, f64)> = Vec::new();
    let (mut o, mut e) = (0.0, 0.0);
    for i in 0..len {
        o += counts.get(i).copied().unwrap_or(0) as f64;
        e += probs.get(i).copied().unwrap_or(0.0) / norm * total as f64;
        if e >= min_expected {
            cells.push((o, e));
            o = 0.0;
            e = 0.0;
        }
    }
    if o > 0.0 || e > 0.0 {
        match cells.last_mut() {
            Some(last) => {
                last.0 += o;
                last.1 += e;
            }
            None => cells.push((o, e)),
        }
    }
    if cells.len() < 2 {
        return Err(Error::InvalidArgument("fewer than two chi-square cells".into()));
    }
    let statistic: f64 = cells.iter().map(|(o, e)| (o - e).powi(2) / e).sum();
    let dof = cells.len() - 1;
    let dist = ChiSquared::new(dof as f64).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    Ok(ChiSquare {
        statistic,
        dof,
        p_value: dist.sf(statistic),
    })
}

/// Total variation distance `½ Σ |p - q|` (missing cells count as 0).
pub fn tv_distance(p: &[f64], q: &[f64]) -> f64 {
    let len = p.len().max(q.len());
    0.5 * (0..len)
        .map(|i| (p.get(i).copied().unwrap_or(0.0) - q.get(i).copied().unwrap_or(0.0)).abs())
        .sum::<f64>()
}

/// Normalized histogram of integer samples.
pub fn empirical_pmf(samples: &[u64]) -> Vec<f64> {
    let top = samples.iter().copied().max().unwrap_or(0) as usize;
    let mut h = vec![0.0; top + 1];
    for &s in samples {
        h[s as usize] += 1.0;
    }
    let n = samples.len().max(1) as f64;
    h.iter_mut().for_each(|v| *v /= n);
    h
}

/// Integrated autocorrelation time `1 + 2 Σ_t ρ(t)` of a chain, summed up to
/// the first lag `W ≥ 5 τ(W)` (Sokal's automatic window).
pub fn integrated_autocorr_time(x: &[f64]) -> f64 {
    let n = x.len();
    if n < 2 {
        return 1.0;
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    let d: Vec<f64> = x.iter().map(|v| v - mean).collect();
    let c0 = d.iter().map(|v| v * v).sum::<f64>() / n as f64;
    if c0 == 0.0 {
        return 1.0;
    }
    let mut tau = 1.0;
    for t in 1..n {
        let ct = d[..n - t].iter().zip(&d[t..]).map(|(a, b)| a * b).sum::<f64>() / n as f64;
        tau += 2.0 * ct / c0;
        if t as f64 >= 5.0 * tau {
            break;
        }
    }
    tau.max(1.0)
}

// ---------------------------------------------------------------------------
// Bulk fluctuation paths

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PathMode {
    /// Centered at `N/L`, no truncation.
    X,
    /// Occupations above `⌊L^{1/4}⌋` dropped, centered at `(N - a_L k)/L`.
    Y,
}

/// Centering, scale and truncation of a bulk path.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathSpec {
    pub mode: PathMode,
    pub l: u64,
    /// Per-site centering.
    pub center: f64,
    /// `σ √L`.
    pub scale: f64,
    pub truncation: Option<u64>,
}

impl PathSpec {
    /// `X^L`: centering `N/L`.
    pub fn x(m: &Marginal, l: u64, n: u64) -> Self {
        PathSpec {
            mode: PathMode::X,
            l,
            center: n as f64 / l as f64,
            scale: m.sigma() * (l as f64).sqrt(),
            truncation: None,
        }
    }

    /// `Y^L` with condensate fraction `a_l`.
    pub fn y(m: &Marginal, l: u64, n: u64, a_l: f64) -> Self {
        let k = n as f64 - m.rho_c() * l as f64;
        PathSpec {
            mode: PathMode::Y,
            l,
            center: (n as f64 - a_l * k) / l as f64,
            scale: m.sigma() * (l as f64).sqrt(),
            truncation: Some((l as f64).powf(0.25).floor() as u64),
        }
    }

    fn site(&self, v: u64) -> f64 {
        match self.truncation {
            Some(t) if v > t => 0.0,
            _ => v as f64,
        }
    }

    /// Path values at `s = j/L`, `j = 0..=L`.
    pub fn path(&self, eta: &[u64]) -> BulkPath {
        let mut values = Vec::with_capacity(eta.len() + 1);
        let mut acc = 0.0;
        values.push(0.0);
        for (j, &v) in eta.iter().enumerate() {
            acc += self.site(v);
            values.push((acc - (j + 1) as f64 * self.center) / self.scale);
        }
        BulkPath {
            mode: self.mode,
            values,
        }
    }

    /// Path values at `⌊sL⌋` for each `s` in `points`.
    pub fn at(&self, eta: &[u64], points: &[f64]) -> Vec<f64> {
        let idx: Vec<usize> = points.iter().map(|s| (s * self.l as f64).floor() as usize).collect();
        let mut out = vec![0.0; points.len()];
        let mut acc = 0.0;
        let mut j = 0;
        let mut order: Vec<usize> = (0..points.len()).collect();
        order.sort_by_key(|&i| idx[i]);
        for i in order {
            while j < idx[i] {
                acc += self.site(eta[j]);
                j += 1;
            }
            out[i] = (acc - idx[i] as f64 * self.center) / self.scale;
        }
        out
    }
}

/// Path on the grid `{0, 1/L, ..., 1}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BulkPath {
    pub mode: PathMode,
    pub values: Vec<f64>,
}

impl BulkPath {
    pub fn terminal(&self) -> f64 {
        *self.values.last().unwrap()
    }

    /// Least-squares slope through the origin, `Σ s Y_s / Σ s²`.
    pub fn drift_slope(&self) -> f64 {
        let l = (self.values.len() - 1) as f64;
        let (mut sy, mut ss) = (0.0, 0.0);
        for (j, &y) in self.values.iter().enumerate() {
            let s = j as f64 / l;
            sy += s * y;
            ss += s * s;
        }
        sy / ss
    }
}

/// Sample covariance matrix of replica vectors, reduced in a fixed order.
pub fn covariance_matrix(rows: &[Vec<f64>], exec: Exec) -> Vec<Vec<f64>> {
    let d = rows.first().map_or(0, Vec::len);
    let n = rows.len() as f64;
    let chunk = 4096;
    let chunks = rows.len().div_ceil(chunk);
    // Per-chunk sums and cross products, then combined in index order.
    let partial = exec.map(chunks, |c| {
        let mut s = vec![0.0; d];
        let mut p = vec![vec![0.0; d]; d];
        for r in &rows[c * chunk..((c + 1) * chunk).min(rows.len())] {
            for i in 0..d {
                s[i] += r[i];
                for j in 0..d {
                    p[i][j] += r[i] * r[j];
                }
            }
        }
        (s, p)
    });
    let mut s = vec![0.0; d];
    let mut p = vec![vec![0.0; d]; d];
    for (ps, pp) in partial {
        for i in 0..d {
            s[i] += ps[i];
            for j in 0..d {
                p[i][j] += pp[i][j];
            }
        }
    }
    (0..d)
        .map(|i| (0..d).map(|j| (p[i][j] - s[i] * s[j] / n) / (n - 1.0)).collect())
        .collect()
}

/// Brownian-bridge covariance `min(s, r) - s r`.
pub fn bridge_covariance(s: f64, r: f64) -> f64 {
    s.min(r) - s * r
}

/// Pearson correlation of two equally long samples.
pub fn correlation(x: &[f64], y: &[f64]) -> f64 {
    let cov = covariance_matrix(&x.iter().zip(y).map(|(a, b)| vec![*a, *b]).collect::<Vec<_>>(), Exec::Sequential);
    cov[0][1] / (cov[0][0] * cov[1][1]).sqrt()
}

// ---------------------------------------------------------------------------
// Second maximum and ensemble equivalence

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SecondMaxSummary {
    /// Quantiles 0.1, 0.25, 0.5, 0.75, 0.9 of the second maximum.
    pub quantiles: [f64; 5],
    /// Median of `second_max / M_L`.
    pub median_ratio: f64,
}

pub fn second_max_summary(batch: &SampleBatch) -> Result<SecondMaxSummary> {
    if batch.is_empty() {
        return Err(Error::SampleTooSmall { n: 0, min: 1 });
    }
    let mut second: Vec<f64> = batch.records.iter().map(|r| r.second_max as f64).collect();
    second.sort_by(f64::total_cmp);
    let mut ratio: Vec<f64> = batch
        .records
        .iter()
        .map(|r| if r.max == 0 { 0.0 } else { r.second_max as f64 / r.max as f64 })
        .collect();
    ratio.sort_by(f64::total_cmp);
    let qs = [0.1, 0.25, 0.5, 0.75, 0.9].map(|q| quantile(&second, q));
    Ok(SecondMaxSummary {
        quantiles: qs,
        median_ratio: quantile(&ratio, 0.5),
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Equivalence {
    pub sites: usize,
    pub tv: f64,
    pub empirical: Vec<f64>,
}

/// TV distance between the empirical single-site law and `reference`.
/// With `exclude_max` the maximal site of every replica is left out.
pub fn equivalence_test(batch: &SampleBatch, reference: &[f64], exclude_max: bool) -> Result<Equivalence> {
    let mut counts: Vec<u64> = Vec::new();
    let mut sites = 0usize;
    for r in &batch.records {
        let eta = r
            .eta
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument("equivalence test needs stored configurations".into()))?;
        for (x, &v) in eta.iter().enumerate() {
            if exclude_max && x == r.argmax {
                continue;
            }
            if v as usize >= counts.len() {
                counts.resize(v as usize + 1, 0);
            }
            counts[v as usize] += 1;
            sites += 1;
        }
    }
    let empirical: Vec<f64> = counts.iter().map(|&c| c as f64 / sites.max(1) as f64).collect();
    Ok(Equivalence {
        sites,
        tv: tv_distance(&empirical, reference),
        empirical,
    })
}

// ---------------------------------------------------------------------------
// CSV output

/// One row of the statistics CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StatRow {
    pub statistic: String,
    pub regime: String,
    #[serde(rename = "L")]
    pub l: u64,
    #[serde(rename = "N")]
    pub n: u64,
    pub value: f64,
    pub ci_lo: Option<f64>,
    pub ci_hi: Option<f64>,
    pub p_value: Option<f64>,
}

impl StatRow {
    pub const HEADER: &'static str = "statistic,regime,L,N,value,ci_lo,ci_hi,p_value";

    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x}"));
        format!(
            "{},{},{},{},{},{},{},{}",
            self.statistic,
            self.regime,
            self.l,
            self.n,
            self.value,
            opt(self.ci_lo),
            opt(self.ci_hi),
            opt(self.p_value)
        )
    }
}
