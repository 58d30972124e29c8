//! Configurations under the canonical measure `μ_{L,N}` and the dynamics.
//!
//! * [`ExactSampler`]: exact draws by splitting the lattice into dyadic
//!   blocks and sampling block sums from the oracle tables.
//! * [`Metropolis`]: particle-conserving Metropolis chain.
//! * [`tilted_rejection_sample`]: i.i.d. tilted sites, accepted on `S_L = N`.
//! * [`Kmc`]: continuous-time zero-range dynamics on a ring.
//!
//! Every replica owns a ChaCha stream derived from `(seed, replica)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::marginal::Marginal;
use crate::num::{bisect, log_sum_exp};
use crate::oracle::{OracleConfig, SumTables};
use crate::par::Exec;

/// Independent stream `replica` of the generator seeded with `seed`.
pub fn replica_rng(seed: u64, replica: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replica);
    rng
}

/// Occupation numbers on `L` sites.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Configuration {
    pub eta: Vec<u64>,
    pub n: u64,
}

impl Configuration {
    pub fn new(eta: Vec<u64>) -> Self {
        let n = eta.iter().sum();
        Configuration { eta, n }
    }

    /// `N` particles spread as evenly as possible.
    pub fn uniform(l: usize, n: u64) -> Self {
        let q = n / l as u64;
        let r = (n % l as u64) as usize;
        let eta = (0..l).map(|i| q + u64::from(i < r)).collect();
        Configuration { eta, n }
    }

    pub fn l(&self) -> usize {
        self.eta.len()
    }

    pub fn sum(&self) -> u64 {
        self.eta.iter().sum()
    }

    /// `(argmax, M_L)`, the first maximal site.
    pub fn max(&self) -> (usize, u64) {
        let mut best = (0, 0);
        for (i, &v) in self.eta.iter().enumerate() {
            if v > best.1 {
                best = (i, v);
            }
        }
        best
    }

    /// Second largest occupation (equal to `M_L` if the maximum is shared).
    pub fn second_max(&self) -> u64 {
        let (mut a, mut b) = (0u64, 0u64);
        for &v in &self.eta {
            if v > a {
                b = a;
                a = v;
            } else if v > b {
                b = v;
            }
        }
        b
    }
}

// ---------------------------------------------------------------------------
// Tilted single-site law

/// `p_k e^{sk} / Z_α(s)` on `k ≤ α`.
#[derive(Clone, Debug)]
pub struct TiltedMarginal {
    cap: Option<usize>,
    s: f64,
    log_z: f64,
    rho: f64,
    sigma2: f64,
    cdf: Vec<f64>,
}

fn tilted_moments(m: &Marginal, top: usize, s: f64) -> (f64, f64, f64) {
    let lp = &m.log_p()[..=top];
    let terms: Vec<f64> = lp.iter().enumerate().map(|(k, &l)| l + s * k as f64).collect();
    let log_z = log_sum_exp(&terms);
    let (mut m1, mut m2) = (0.0, 0.0);
    for (k, &t) in terms.iter().enumerate().rev() {
        let q = (t - log_z).exp();
        m1 += q * k as f64;
        m2 += q * (k * k) as f64;
    }
    (log_z, m1, (m2 - m1 * m1).max(0.0))
}

impl TiltedMarginal {
    /// Tilted law with cap `α` (`None` means the stored support).
    pub fn new(m: &Marginal, cap: Option<usize>, s: f64) -> Self {
        let top = cap.map_or(m.support(), |c| c.min(m.support()));
        let (log_z, rho, sigma2) = tilted_moments(m, top, s);
        let mut acc = 0.0;
        let mut cdf: Vec<f64> = m.log_p()[..=top]
            .iter()
            .enumerate()
            .map(|(k, &l)| {
                acc += (l + s * k as f64 - log_z).exp();
                acc
            })
            .collect();
        let total = *cdf.last().unwrap();
        cdf.iter_mut().for_each(|c| *c /= total);
        TiltedMarginal {
            cap,
            s,
            log_z,
            rho,
            sigma2,
            cdf,
        }
    }

    pub fn cap(&self) -> Option<usize> {
        self.cap
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    /// `Z_α(s) = Σ_{k≤α} e^{sk} p_k`.
    pub fn z(&self) -> f64 {
        self.log_z.exp()
    }

    pub fn log_z(&self) -> f64 {
        self.log_z
    }

    /// `ρ_α(s)`.
    pub fn rho(&self) -> f64 {
        self.rho
    }

    /// `σ²_α(s)`.
    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    /// One draw by inverse CDF.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        let u: f64 = rng.random();
        self.cdf.partition_point(|&c| c <= u).min(self.cdf.len() - 1) as u64
    }
}

/// Tilt `s_*` with `ρ_α(s_*) = target`, by bisection with an expanding bracket.
pub fn solve_tilt(m: &Marginal, cap: Option<usize>, target: f64) -> Result<TiltedMarginal> {
    let top = cap.map_or(m.support(), |c| c.min(m.support()));
    let lp = m.log_p();
    let lo = (0..=top).find(|&k| lp[k] > f64::NEG_INFINITY).unwrap_or(0) as f64;
    let hi = (0..=top).rev().find(|&k| lp[k] > f64::NEG_INFINITY).unwrap_or(0) as f64;
    if !(target > lo && target < hi) {
        return Err(Error::Unreachable { target, lo, hi });
    }
    let f = |s: f64| tilted_moments(m, top, s).1 - target;
    let f0 = f(0.0);
    if f0 == 0.0 {
        return Ok(TiltedMarginal::new(m, cap, 0.0));
    }
    let dir = if f0 < 0.0 { 1.0 } else { -1.0 };
    let mut width = 1e-3;
    let mut other = dir * width;
    while f(other).signum() == f0.signum() {
        width *= 2.0;
        other = dir * width;
        if width > 1e6 {
            return Err(Error::Unreachable { target, lo, hi });
        }
    }
    let (a, b) = if dir > 0.0 { (other / 2.0, other) } else { (other, other / 2.0) };
    let (a, b) = if width == 1e-3 { (a.min(0.0), b.max(0.0)) } else { (a, b) };
    let s = bisect(f, a, b, 1e-17)?;
    Ok(TiltedMarginal::new(m, cap, s))
}

// ---------------------------------------------------------------------------
// Exact sampler

/// Exact sampler for `μ_{L,N}` from dyadic block-sum tables.
#[derive(Clone, Debug)]
pub struct ExactSampler<'a> {
    marginal: &'a Marginal,
    tables: SumTables,
    n: usize,
}

impl<'a> ExactSampler<'a> {
    pub fn new(marginal: &'a Marginal, l: u64, n: u64) -> Result<Self> {
        Self::with_config(marginal, l, n, None, &OracleConfig::default())
    }

    /// Optionally conditioned on every site being at most `cap`.
    pub fn with_config(
        marginal: &'a Marginal,
        l: u64,
        n: u64,
        cap: Option<usize>,
        cfg: &OracleConfig,
    ) -> Result<Self> {
        let nu = n as usize;
        let tables = SumTables::build(marginal, l, nu, cap, cfg)?;
        if tables.table(l).unwrap()[nu] == f64::NEG_INFINITY {
            return Err(Error::ImpossibleN { l, n });
        }
        Ok(ExactSampler {
            marginal,
            tables,
            n: nu,
        })
    }

    pub fn l(&self) -> u64 {
        self.tables.l()
    }

    pub fn n(&self) -> u64 {
        self.n as u64
    }

    pub fn marginal(&self) -> &Marginal {
        self.marginal
    }

    pub fn tables(&self) -> &SumTables {
        &self.tables
    }

    /// One exact draw.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Configuration {
        let l = self.tables.l() as usize;
        let mut eta = vec![0u64; l];
        let mut stack = vec![(0usize, l as u64, self.n)];
        let mut w = Vec::new();
        while let Some((offset, size, total)) = stack.pop() {
            if size == 1 {
                eta[offset] = total as u64;
                continue;
            }
            if total == 0 {
                continue;
            }
            let a = if size.is_power_of_two() {
                size / 2
            } else {
                1u64 << (63 - size.leading_zeros())
            };
            let b = size - a;
            let ta = self.tables.table(a).expect("block table present");
            let tb = self.tables.table(b).expect("block table present");
            w.clear();
            let mut mx = f64::NEG_INFINITY;
            for j in 0..=total {
                let v = ta[j] + tb[total - j];
                mx = mx.max(v);
                w.push(v);
            }
            let mut acc = 0.0;
            for v in w.iter_mut() {
                acc += (*v - mx).exp();
                *v = acc;
            }
            let u = rng.random::<f64>() * acc;
            let j = w.partition_point(|&c| c <= u).min(total);
            stack.push((offset + a as usize, b, total - j));
            stack.push((offset, a, j));
        }
        Configuration {
            eta,
            n: self.n as u64,
        }
    }

    /// `count` independent replicas, replica `i` using stream `i` of `seed`.
    pub fn replicas<T, F>(&self, seed: u64, count: usize, exec: Exec, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(&Configuration) -> T + Sync + Send,
    {
        exec.map(count, |i| {
            let mut rng = replica_rng(seed, i as u64);
            f(&self.sample(&mut rng))
        })
    }
}

/// One exact draw from `μ_{L,N}` (builds the tables each call).
pub fn exact_conditional_sample<R: Rng + ?Sized>(
    marginal: &Marginal,
    l: u64,
    n: u64,
    rng: &mut R,
) -> Result<Configuration> {
    Ok(ExactSampler::new(marginal, l, n)?.sample(rng))
}

// ---------------------------------------------------------------------------
// Metropolis

/// Burn-in and thinning, in single-move units.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct McmcSchedule {
    pub burn_in: u64,
    pub thin: u64,
}

impl McmcSchedule {
    /// Burn-in `100·L·N` moves and thinning `L` moves.
    pub fn default_for(l: u64, n: u64) -> Self {
        McmcSchedule {
            burn_in: 100 * l * n.max(1),
            thin: l,
        }
    }
}

/// Particle-conserving Metropolis chain targeting `μ_{L,N}`.
#[derive(Clone, Debug)]
pub struct Metropolis<'a, R: Rng> {
    marginal: &'a Marginal,
    /// `log g(n)` for `n = 0..=N+1`.
    log_g: Vec<f64>,
    state: Configuration,
    rng: R,
    accepted: u64,
    proposed: u64,
}

impl<'a, R: Rng> Metropolis<'a, R> {
    pub fn new(marginal: &'a Marginal, init: Configuration, rng: R) -> Self {
        let log_g = (0..=init.n + 1).map(|n| marginal.log_rate(n)).collect();
        Metropolis {
            marginal,
            log_g,
            state: init,
            rng,
            accepted: 0,
            proposed: 0,
        }
    }

    pub fn state(&self) -> &Configuration {
        &self.state
    }

    pub fn marginal(&self) -> &Marginal {
        self.marginal
    }

    pub fn acceptance_rate(&self) -> f64 {
        self.accepted as f64 / self.proposed.max(1) as f64
    }

    /// Log acceptance ratio `log g(η_x) - log g(η_y + 1)` of moving one
    /// particle from `x` to `y`; `-inf` if `x` is empty.
    pub fn log_acceptance(marginal: &Marginal, eta: &[u64], x: usize, y: usize) -> f64 {
        if eta[x] == 0 {
            return f64::NEG_INFINITY;
        }
        let out = marginal.log_rate(eta[x]);
        let inn = marginal.log_rate(eta[y] + 1);
        if inn == f64::INFINITY {
            return f64::NEG_INFINITY;
        }
        out - inn
    }

    /// One proposed move over a uniform ordered pair `x ≠ y`.
    pub fn step(&mut self) {
        let l = self.state.eta.len();
        if l < 2 {
            return;
        }
        self.proposed += 1;
        let x = self.rng.random_range(0..l);
        let mut y = self.rng.random_range(0..l - 1);
        if y >= x {
            y += 1;
        }
        let (ex, ey) = (self.state.eta[x] as usize, self.state.eta[y] as usize);
        if ex == 0 {
            return;
        }
        let la = self.log_g[ex] - self.log_g[ey + 1];
        if la >= 0.0 || self.rng.random::<f64>().ln() < la {
            self.state.eta[x] -= 1;
            self.state.eta[y] += 1;
            self.accepted += 1;
        }
    }

    pub fn run(&mut self, moves: u64) {
        for _ in 0..moves {
            self.step();
        }
    }

    /// Burn in, then call `f` on `samples` states spaced `thin` moves apart.
    pub fn sample_with<T, F: FnMut(&Configuration) -> T>(
        &mut self,
        schedule: McmcSchedule,
        samples: usize,
        mut f: F,
    ) -> Vec<T> {
        self.run(schedule.burn_in);
        (0..samples)
            .map(|_| {
                self.run(schedule.thin.max(1));
                f(&self.state)
            })
            .collect()
    }
}

/// Final states of `steps` Metropolis moves from an even start, one per draw
/// of the returned iterator's caller; convenience wrapper over [`Metropolis`].
pub fn mcmc_conditional_sample<R: Rng>(
    marginal: &Marginal,
    l: usize,
    n: u64,
    steps: u64,
    rng: R,
) -> Configuration {
    let mut chain = Metropolis::new(marginal, Configuration::uniform(l, n), rng);
    chain.run(steps);
    chain.state.clone()
}

// ---------------------------------------------------------------------------
// Tilted rejection

/// A configuration accepted by the rejection sampler with its trial count.
#[derive(Clone, Debug)]
pub struct RejectionDraw {
    pub config: Configuration,
    pub trials: u64,
}

/// Draw `L` i.i.d. tilted sites (mean `N/L`, cap `α`) until `S_L = N`.
pub fn tilted_rejection_sample<R: Rng + ?Sized>(
    tilted: &TiltedMarginal,
    l: usize,
    n: u64,
    max_trials: u64,
    rng: &mut R,
) -> Result<RejectionDraw> {
    let mut eta = vec![0u64; l];
    for trial in 1..=max_trials {
        let mut s = 0u64;
        for e in eta.iter_mut() {
            *e = tilted.sample(rng);
            s += *e;
        }
        if s == n {
            return Ok(RejectionDraw {
                config: Configuration { eta, n },
                trials: trial,
            });
        }
    }
    Err(Error::RejectionBudget {
        trials: max_trials,
        rate: 0.0,
    })
}

// ---------------------------------------------------------------------------
// Kinetic Monte Carlo

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Hop {
    /// Always to the right neighbour.
    TotallyAsymmetric,
    /// Left or right with probability 1/2 each.
    Symmetric,
}

/// Ring dynamics with the marginal's jump rates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DynamicsSpec {
    pub l: usize,
    pub hop: Hop,
}

/// Binary sum tree over per-site rates.
#[derive(Clone, Debug)]
struct SumTree {
    size: usize,
    node: Vec<f64>,
}

impl SumTree {
    fn new(values: &[f64]) -> Self {
        let size = values.len().next_power_of_two();
        let mut node = vec![0.0; 2 * size];
        node[size..size + values.len()].copy_from_slice(values);
        for i in (1..size).rev() {
            node[i] = node[2 * i] + node[2 * i + 1];
        }
        SumTree { size, node }
    }

    fn total(&self) -> f64 {
        self.node[1]
    }

    fn set(&mut self, i: usize, v: f64) {
        let mut j = i + self.size;
        self.node[j] = v;
        while j > 1 {
            j /= 2;
            self.node[j] = self.node[2 * j] + self.node[2 * j + 1];
        }
    }

    /// Leaf `i` with `Σ_{j<i} v_j ≤ u < Σ_{j≤i} v_j`.
    fn find(&self, mut u: f64) -> usize {
        let mut j = 1;
        while j < self.size {
            let left = self.node[2 * j];
            if u < left || self.node[2 * j + 1] <= 0.0 {
                j *= 2;
            } else {
                u -= left;
                j = 2 * j + 1;
            }
        }
        j - self.size
    }
}

/// Output of a KMC run.
#[derive(Clone, Debug)]
pub struct KmcResult {
    pub state: Configuration,
    pub time: f64,
    pub events: u64,
    /// Time-averaged single-site occupation law after burn-in.
    pub histogram: Vec<f64>,
    pub snapshots: Vec<(f64, Configuration)>,
}

/// Event-driven simulation of the zero-range generator.
#[derive(Clone, Debug)]
pub struct Kmc<'a> {
    spec: DynamicsSpec,
    rates: Vec<f64>,
    _marginal: &'a Marginal,
}

impl<'a> Kmc<'a> {
    /// Rates `g(n)` are tabulated up to `n_max`.
    pub fn new(marginal: &'a Marginal, spec: DynamicsSpec, n_max: u64) -> Self {
        let rates = (0..=n_max).map(|n| marginal.log_rate(n).exp()).collect();
        Kmc {
            spec,
            rates,
            _marginal: marginal,
        }
    }

    pub fn rate(&self, n: u64) -> f64 {
        self.rates[n as usize]
    }

    /// Run to time `t_end`; the histogram integrates over `[burn_in, t_end]`
    /// and snapshots are taken every `snapshot_every` time units.
    pub fn run<R: Rng + ?Sized>(
        &self,
        init: Configuration,
        t_end: f64,
        burn_in: f64,
        snapshot_every: Option<f64>,
        rng: &mut R,
    ) -> Result<KmcResult> {
        let l = self.spec.l;
        if init.eta.len() != l {
            return Err(Error::InvalidArgument("initial configuration has the wrong size".into()));
        }
        if init.sum() as usize >= self.rates.len() {
            return Err(Error::InvalidArgument("rate table too short for N".into()));
        }
        let mut eta = init.eta;
        let n = init.n;
        let mut tree = SumTree::new(&eta.iter().map(|&e| self.rate(e)).collect::<Vec<_>>());
        // Time-integrated site counts per occupation value, updated lazily.
        let mut count = vec![0u64; n as usize + 1];
        for &e in &eta {
            count[e as usize] += 1;
        }
        let mut integral = vec![0.0f64; n as usize + 1];
        let mut since = vec![burn_in; n as usize + 1];
        let mut t = 0.0;
        let mut events = 0u64;
        let mut snaps = Vec::new();
        let mut next_snap = snapshot_every.unwrap_or(f64::INFINITY);
        let touch = |v: usize, t: f64, count: &[u64], integral: &mut [f64], since: &mut [f64]| {
            if t > since[v] {
                integral[v] += count[v] as f64 * (t - since[v]);
                since[v] = t;
            }
        };
        loop {
            let total = tree.total();
            let dt = if total > 0.0 {
                -(1.0 - rng.random::<f64>()).ln() / total
            } else {
                f64::INFINITY
            };
            while next_snap <= (t + dt).min(t_end) {
                snaps.push((next_snap, Configuration { eta: eta.clone(), n }));
                next_snap += snapshot_every.unwrap();
            }
            if t + dt > t_end {
                t = t_end;
                break;
            }
            t += dt;
            let x = tree.find(rng.random::<f64>() * total);
            let y = match self.spec.hop {
                Hop::TotallyAsymmetric => (x + 1) % l,
                Hop::Symmetric => {
                    if rng.random::<bool>() {
                        (x + 1) % l
                    } else {
                        (x + l - 1) % l
                    }
                }
            };
            if x == y {
                continue;
            }
            for v in [eta[x], eta[x] - 1, eta[y], eta[y] + 1] {
                touch(v as usize, t, &count, &mut integral, &mut since);
            }
            count[eta[x] as usize] -= 1;
            count[eta[y] as usize] -= 1;
            eta[x] -= 1;
            eta[y] += 1;
            count[eta[x] as usize] += 1;
            count[eta[y] as usize] += 1;
            tree.set(x, self.rate(eta[x]));
            tree.set(y, self.rate(eta[y]));
            events += 1;
        }
        for v in 0..=n as usize {
            touch(v, t, &count, &mut integral, &mut since);
        }
        let norm = (t - burn_in).max(0.0) * l as f64;
        let histogram = if norm > 0.0 {
            integral.iter().map(|x| x / norm).collect()
        } else {
            vec![0.0; n as usize + 1]
        };
        Ok(KmcResult {
            state: Configuration { eta, n },
            time: t,
            events,
            histogram,
            snapshots: snaps,
        })
    }
}

/// Run the dynamics from `init` until `t_end` without burn-in.
pub fn kmc_run<R: Rng + ?Sized>(
    marginal: &Marginal,
    spec: DynamicsSpec,
    init: Configuration,
    t_end: f64,
    rng: &mut R,
) -> Result<KmcResult> {
    Kmc::new(marginal, spec, init.n).run(init, t_end, 0.0, None, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::marginal::ModelSpec;
    use approx::assert_relative_eq;

    fn fig2() -> Marginal {
        Marginal::new(&ModelSpec::stretched_rates(0.6, 2.0).unwrap()).unwrap()
    }

    #[test]
    fn two_point_logit_tilt() {
        let m = Marginal::from_pmf(&[0.5, 0.5]).unwrap();
        let t = solve_tilt(&m, Some(1), 0.8).unwrap();
        assert_relative_eq!(t.s(), (0.8f64 / 0.2).ln(), epsilon = 1e-9);
        assert!((t.rho() - 0.8).abs() < 1e-10);
        assert!(matches!(solve_tilt(&m, Some(1), 1.5), Err(Error::Unreachable { .. })));
    }

    #[test]
    fn zero_tilt_at_the_mean() {
        let m = fig2();
        let t = solve_tilt(&m, None, m.rho_c()).unwrap();
        assert!(t.s().abs() < 1e-9);
        assert_relative_eq!(t.z(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn tilted_derivatives_match_finite_differences() {
        let m = fig2();
        let h = 1e-5;
        let s = 0.05;
        let t = TiltedMarginal::new(&m, Some(40), s);
        let tp = TiltedMarginal::new(&m, Some(40), s + h);
        let tm = TiltedMarginal::new(&m, Some(40), s - h);
        let dlogz = (tp.log_z() - tm.log_z()) / (2.0 * h);
        assert_relative_eq!(dlogz, t.rho(), max_relative = 1e-6);
        let drho = (tp.rho() - tm.rho()) / (2.0 * h);
        assert_relative_eq!(drho, t.sigma2(), max_relative = 1e-6);
    }

    #[test]
    fn single_site_sampler() {
        let m = fig2();
        let mut rng = replica_rng(1, 0);
        let c = exact_conditional_sample(&m, 1, 7, &mut rng).unwrap();
        assert_eq!(c.eta, vec![7]);
    }

    #[test]
    fn exact_samples_conserve_mass() {
        let m = fig2();
        let s = ExactSampler::new(&m, 37, 50).unwrap();
        let sums = s.replicas(3, 200, Exec::Sequential, |c| (c.sum(), c.l()));
        assert!(sums.iter().all(|&(n, l)| n == 50 && l == 37));
    }

    #[test]
    fn replicas_are_reproducible() {
        let m = fig2();
        let s = ExactSampler::new(&m, 16, 20).unwrap();
        let a = s.replicas(9, 20, Exec::Parallel, |c| c.eta.clone());
        let b = s.replicas(9, 20, Exec::Sequential, |c| c.eta.clone());
        assert_eq!(a, b);
    }

    #[test]
    fn metropolis_conserves_and_balances() {
        let m = fig2();
        let mut chain = Metropolis::new(&m, Configuration::uniform(8, 12), replica_rng(5, 0));
        for _ in 0..5000 {
            chain.step();
            assert_eq!(chain.state().sum(), 12);
        }
        // π(η) a(η→η') = π(η') a(η'→η) with a = min(1, ratio).
        let eta = vec![3u64, 0, 5, 1];
        let log_pi = |e: &[u64]| e.iter().map(|&k| m.log_w()[k as usize]).sum::<f64>();
        for (x, y) in [(0usize, 1usize), (2, 3), (3, 0)] {
            let mut moved = eta.clone();
            moved[x] -= 1;
            moved[y] += 1;
            let f = Metropolis::<ChaCha8Rng>::log_acceptance(&m, &eta, x, y).min(0.0);
            let r = Metropolis::<ChaCha8Rng>::log_acceptance(&m, &moved, y, x).min(0.0);
            assert_relative_eq!(log_pi(&eta) + f, log_pi(&moved) + r, epsilon = 1e-12);
        }
    }

    #[test]
    fn metropolis_huge_occupations_stay_finite() {
        let m = fig2();
        let eta = vec![1_000_000u64, 999_999];
        let la = Metropolis::<ChaCha8Rng>::log_acceptance(&m, &eta, 0, 1);
        assert!(la.is_finite());
    }

    #[test]
    fn kmc_conserves_and_idles_on_empty_sites() {
        let m = fig2();
        let spec = DynamicsSpec {
            l: 10,
            hop: Hop::Symmetric,
        };
        let k = Kmc::new(&m, spec, 15);
        assert_eq!(k.rate(0), 0.0);
        let mut rng = replica_rng(2, 0);
        let r = k.run(Configuration::uniform(10, 15), 50.0, 10.0, Some(5.0), &mut rng).unwrap();
        assert_eq!(r.state.sum(), 15);
        assert!(r.snapshots.iter().all(|(_, c)| c.sum() == 15));
        let mass: f64 = r.histogram.iter().sum();
        assert_relative_eq!(mass, 1.0, epsilon = 1e-9);
        let mean: f64 = r.histogram.iter().enumerate().map(|(i, h)| i as f64 * h).sum();
        assert_relative_eq!(mean, 1.5, epsilon = 1e-9);
    }

    #[test]
    fn sum_tree_selects_by_weight() {
        let t = SumTree::new(&[0.0, 2.0, 0.0, 1.0, 0.0]);
        assert_eq!(t.total(), 3.0);
        assert_eq!(t.find(0.0), 1);
        assert_eq!(t.find(1.99), 1);
        assert_eq!(t.find(2.5), 3);
    }

    #[test]
    fn configuration_statistics() {
        let c = Configuration::new(vec![1, 5, 2, 5]);
        assert_eq!(c.max(), (1, 5));
        assert_eq!(c.second_max(), 5);
        let c = Configuration::new(vec![3, 4]);
        assert_eq!(c.second_max(), c.n - c.max().1);
    }
}
