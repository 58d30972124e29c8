//! Versioned TOML experiment configuration.
//!
//! ```toml
//! version = 1
//! job = "sample-exact"
//! seed = 7
//! replicas = 1000
//!
//! [model]
//! family = "stretched-rates"
//! lambda = 0.6
//! b = 2.0
//!
//! [ensemble]
//! L = 1024
//! N = { rule = "subl", gamma = 0.0 }
//!
//! [output]
//! dir = "out"
//! ```

use std::fmt;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use zrp::asymptotics::{NRule, Thresholds};
use zrp::sampler::Hop;
use zrp::ModelSpec;

/// Current configuration format version.
pub const VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Job {
    Compute,
    Oracle,
    SampleExact,
    SampleMcmc,
    Dynamics,
    Verify,
}

impl Job {
    pub fn is_stochastic(self) -> bool {
        matches!(self, Job::SampleExact | Job::SampleMcmc | Job::Dynamics)
    }

    pub fn name(self) -> &'static str {
        match self {
            Job::Compute => "compute",
            Job::Oracle => "oracle",
            Job::SampleExact => "sample-exact",
            Job::SampleMcmc => "sample-mcmc",
            Job::Dynamics => "dynamics",
            Job::Verify => "verify",
        }
    }
}

impl fmt::Display for Job {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Ensemble {
    #[serde(rename = "L")]
    pub l: u64,
    /// Particle number, either a rule table or a plain integer.
    #[serde(rename = "N")]
    pub n: NSpec,
}

/// `N = 1356` or `N = { rule = "subl", gamma = 0.0 }`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NSpec {
    Fixed(u64),
    Rule(NRule),
}

impl NSpec {
    pub fn rule(self) -> NRule {
        match self {
            NSpec::Fixed(n) => NRule::Fixed { n },
            NSpec::Rule(r) => r,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Output {
    pub dir: PathBuf,
    /// Also write `(replica_id, k, S_k)` profiles for sampling jobs.
    pub profiles: bool,
}

impl Default for Output {
    fn default() -> Self {
        Output {
            dir: PathBuf::from("out"),
            profiles: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Limits {
    /// Upper bound on `Σ (n_max+1)^2` over the convolutions of one oracle build.
    pub oracle_budget: f64,
    /// Upper bound on `replicas · L`, the number of stored site values.
    pub max_sites: u64,
}

impl Default for Limits {
    fn default() -> Self {
        Limits {
            oracle_budget: 2e11,
            max_sites: 1 << 32,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Mcmc {
    /// Independent chains; draws are split evenly between them.
    pub chains: Option<usize>,
    /// Burn-in moves (default `100·L·N`).
    pub burn_in: Option<u64>,
    /// Moves between draws (default `L`).
    pub thin: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Dynamics {
    pub hop: Hop,
    pub t_end: f64,
    pub burn_in: f64,
    pub snapshot_every: f64,
}

impl Default for Dynamics {
    fn default() -> Self {
        Dynamics {
            hop: Hop::TotallyAsymmetric,
            t_end: 1000.0,
            burn_in: 100.0,
            snapshot_every: 10.0,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Verify {
    /// Criteria to run; empty means all.
    pub criteria: Vec<u8>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    pub job: Job,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default = "default_replicas")]
    pub replicas: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ensemble: Option<Ensemble>,
    #[serde(default)]
    pub thresholds: Thresholds,
    #[serde(default)]
    pub output: Output,
    #[serde(default)]
    pub limits: Limits,
    #[serde(default)]
    pub mcmc: Mcmc,
    #[serde(default)]
    pub dynamics: Dynamics,
    #[serde(default)]
    pub verify: Verify,
}

fn default_replicas() -> usize {
    1000
}

impl ExperimentConfig {
    /// A configuration for `job` with every optional section at its default.
    pub fn minimal(job: Job) -> Self {
        ExperimentConfig {
            version: VERSION,
            job,
            seed: None,
            replicas: default_replicas(),
            model: None,
            ensemble: None,
            thresholds: Thresholds::default(),
            output: Output::default(),
            limits: Limits::default(),
            mcmc: Mcmc::default(),
            dynamics: Dynamics::default(),
            verify: Verify::default(),
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).context("config does not parse")?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical serialization with `output.dir` blanked, as
    /// lowercase hex. Where artifacts are written does not change them.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output.dir = PathBuf::new();
        Sha256::digest(c.to_toml().as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    /// Field-level validation; messages name the offending field path.
    pub fn validate(&self) -> Result<()> {
        if self.version != VERSION {
            bail!("version: unsupported config version {} (expected {VERSION})", self.version);
        }
        if self.job.is_stochastic() && self.seed.is_none() {
            bail!("seed: required for the stochastic job {}", self.job);
        }
        if self.job != Job::Verify {
            let model = self.model.as_ref().context("model: required for this job")?;
            model.validate().map_err(|e| anyhow::anyhow!("model: {e}"))?;
            let ens = self.ensemble.as_ref().context("ensemble: required for this job")?;
            if ens.l == 0 {
                bail!("ensemble.L: must be at least 1");
            }
        }
        if self.job.is_stochastic() {
            if self.replicas == 0 {
                bail!("replicas: must be at least 1");
            }
            let l = self.ensemble.as_ref().map_or(1, |e| e.l);
            if (self.replicas as u64).saturating_mul(l) > self.limits.max_sites {
                bail!(
                    "replicas: {} replicas of L = {l} exceed limits.max_sites = {}",
                    self.replicas,
                    self.limits.max_sites
                );
            }
        }
        if self.mcmc.chains == Some(0) {
            bail!("mcmc.chains: must be at least 1");
        }
        let d = &self.dynamics;
        if !(d.t_end >= 0.0 && d.burn_in >= 0.0 && d.burn_in <= d.t_end) {
            bail!("dynamics.burn_in: need 0 <= burn_in <= t_end");
        }
        if !(d.snapshot_every > 0.0) {
            bail!("dynamics.snapshot_every: must be positive");
        }
        if let Some(bad) = self.verify.criteria.iter().find(|&&c| !(1..=10).contains(&c)) {
            bail!("verify.criteria: no criterion {bad}");
        }
        if !(self.limits.oracle_budget > 0.0) {
            bail!("limits.oracle_budget: must be positive");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use zrp::Family;

    const SAMPLE: &str = r#"
version = 1
job = "sample-exact"
seed = 7
replicas = 200

[model]
family = "stretched-rates"
lambda = 0.6
b = 2.0

[ensemble]
L = 1024
N = { rule = "subl", gamma = 0.0 }
"#;

    #[test]
    fn parses_documented_example() {
        let c = ExperimentConfig::parse(SAMPLE).unwrap();
        assert_eq!(c.job, Job::SampleExact);
        assert_eq!(c.model.unwrap().family, Family::StretchedRates);
        assert_eq!(c.ensemble.as_ref().unwrap().n.rule(), NRule::Subl { gamma: 0.0 });
        c.validate().unwrap();
    }

    #[test]
    fn round_trip_is_identity() {
        let c = ExperimentConfig::parse(SAMPLE).unwrap();
        let again = ExperimentConfig::parse(&c.to_toml()).unwrap();
        assert_eq!(c, again);
        assert_eq!(c.hash(), again.hash());
    }

    #[test]
    fn plain_integer_n() {
        let text = SAMPLE.replace(r#"N = { rule = "subl", gamma = 0.0 }"#, "N = 1356");
        let c = ExperimentConfig::parse(&text).unwrap();
        assert_eq!(c.ensemble.unwrap().n.rule(), NRule::Fixed { n: 1356 });
    }

    #[test]
    fn seed_is_mandatory_for_sampling() {
        let text = SAMPLE.replace("seed = 7\n", "");
        let err = ExperimentConfig::parse(&text).unwrap().validate().unwrap_err();
        assert!(err.to_string().starts_with("seed:"), "{err}");
    }

    #[test]
    fn errors_name_the_field() {
        let text = SAMPLE.replace("L = 1024", "L = 0");
        let err = ExperimentConfig::parse(&text).unwrap().validate().unwrap_err();
        assert!(err.to_string().starts_with("ensemble.L:"), "{err}");
        let text = SAMPLE.replace("lambda = 0.6", "lambda = 1.5");
        let err = ExperimentConfig::parse(&text).unwrap().validate().unwrap_err();
        assert!(err.to_string().starts_with("model:"), "{err}");
        let err = ExperimentConfig::parse(&SAMPLE.replace("replicas", "replicaz")).unwrap_err();
        assert!(format!("{err:#}").contains("replicaz"), "{err:#}");
    }

    #[test]
    fn hash_changes_with_seed() {
        let mut c = ExperimentConfig::parse(SAMPLE).unwrap();
        let h = c.hash();
        c.seed = Some(8);
        assert_ne!(h, c.hash());
        assert_eq!(h.len(), 64);
        c.seed = Some(7);
        c.output.dir = PathBuf::from("elsewhere");
        assert_eq!(h, c.hash());
    }

    #[test]
    fn verify_needs_no_model() {
        ExperimentConfig::minimal(Job::Verify).validate().unwrap();
        assert!(ExperimentConfig::minimal(Job::Compute).validate().is_err());
    }
}
