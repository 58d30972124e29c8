//! Job runners. Each job writes its artifacts through a [`Sink`] and returns a
//! JSON summary; [`run`] adds the metadata file common to all jobs.

use std::path::PathBuf;
use std::time::Instant;

use anyhow::{anyhow, Context, Result};
use serde::Serialize;
use serde_json::{json, Value};
use zrp::asymptotics::{c_lambda, resolve_n, scale_coordinates, AsymptoticParams, NRule, RegimeReport, ResolvedN};
use zrp::oracle::{
    conditional_max_cdf_with, conditional_site_marginal_with, default_n_max, sum_distribution_with, OracleConfig,
};
use zrp::sampler::{replica_rng, Configuration, DynamicsSpec, ExactSampler, Kmc, McmcSchedule, Metropolis};
use zrp::stats::{phase_mixture_test, second_max_summary, summarize, Record, SampleBatch, StatRow};
use zrp::verify::{self, VerifyConfig};
use zrp::{Exec, Family, Marginal};

use crate::config::{ExperimentConfig, Job};
use crate::output::{num, Sink};

/// Result of one job.
#[derive(Clone, Debug)]
pub struct Outcome {
    /// False only when a verify job has a failing criterion.
    pub pass: bool,
    pub summary: Value,
    pub files: Vec<PathBuf>,
}

/// Model, ensemble and regime shared by all model-based jobs.
struct Setup {
    marginal: Marginal,
    l: u64,
    rule: NRule,
    resolved: ResolvedN,
    report: Option<RegimeReport>,
    report_error: Option<String>,
}

impl Setup {
    fn new(cfg: &ExperimentConfig) -> Result<Self> {
        let spec = cfg.model.as_ref().context("model: required for this job")?;
        let ens = cfg.ensemble.as_ref().context("ensemble: required for this job")?;
        let marginal = Marginal::new(spec).map_err(|e| anyhow!("model: {e}"))?;
        let rule = ens.n.rule();
        let resolved = resolve_n(&rule, &marginal, ens.l).map_err(|e| anyhow!("ensemble.N: {e}"))?;
        let (report, report_error) = match AsymptoticParams::with_thresholds(&marginal, cfg.thresholds)
            .and_then(|p| scale_coordinates(&p, ens.l, resolved.n))
        {
            Ok(r) => (Some(r), None),
            Err(e) => (None, Some(e.to_string())),
        };
        Ok(Setup {
            marginal,
            l: ens.l,
            rule,
            resolved,
            report,
            report_error,
        })
    }

    fn n(&self) -> u64 {
        self.resolved.n
    }

    fn regime(&self) -> String {
        self.report.as_ref().map_or_else(|| "unclassified".into(), |r| r.case.to_string())
    }

    fn metadata(&self) -> Value {
        json!({
            "L": self.l,
            "N_rule": self.rule,
            "N_resolved": self.resolved,
            "regime_report": self.report,
            "regime_report_error": self.report_error,
        })
    }
}

/// Run `cfg` (already carrying any command-line overrides).
pub fn run(cfg: &ExperimentConfig, exec: Exec) -> Result<Outcome> {
    cfg.validate()?;
    let start = Instant::now();
    let mut sink = Sink::new(&cfg.output.dir, cfg.hash(), cfg.seed)?;
    let ocfg = OracleConfig {
        exec,
        budget: cfg.limits.oracle_budget,
    };
    let (pass, summary, setup_meta) = if cfg.job == Job::Verify {
        let (pass, summary) = verify_job(cfg, exec, &mut sink)?;
        (pass, summary, Value::Null)
    } else {
        let setup = Setup::new(cfg)?;
        let summary = match cfg.job {
            Job::Compute => compute(&setup, &mut sink)?,
            Job::Oracle => oracle(&setup, &ocfg, &mut sink)?,
            Job::SampleExact => sample_exact(cfg, &setup, &ocfg, exec, &mut sink)?,
            Job::SampleMcmc => sample_mcmc(cfg, &setup, exec, &mut sink)?,
            Job::Dynamics => dynamics(cfg, &setup, exec, &mut sink)?,
            Job::Verify => unreachable!(),
        };
        (true, summary, setup.metadata())
    };
    let mut files: Vec<PathBuf> = sink.written().to_vec();
    let meta = json!({
        "job": cfg.job,
        "pass": pass,
        "versions": { "zrp-cli": env!("CARGO_PKG_VERSION"), "zrp-core": zrp::VERSION },
        "wall_time_s": start.elapsed().as_secs_f64(),
        "ensemble": setup_meta,
        "config": cfg,
        "files": files.iter().map(|p| p.file_name().unwrap().to_string_lossy().into_owned()).collect::<Vec<_>>(),
    });
    files.push(sink.json("metadata.json", &meta)?);
    Ok(Outcome { pass, summary, files })
}

fn compute(s: &Setup, sink: &mut Sink) -> Result<Value> {
    let m = &s.marginal;
    let spec = m.spec().expect("model-based marginal");
    let crit_rule = match spec.family {
        Family::PowerLawRates if spec.b > 3.0 => Some(NRule::Gammal1 { gamma: 0.0 }),
        Family::PowerLawRates => None,
        _ if spec.lambda > 0.5 => Some(NRule::Subl { gamma: 0.0 }),
        _ => Some(NRule::Gammal2 {
            t: c_lambda(spec.lambda, spec.b),
        }),
    };
    let n_crit = crit_rule.map(|r| resolve_n(&r, m, s.l)).transpose()?;
    let summary = json!({
        "rho_c": m.rho_c(),
        "sigma2": m.sigma2(),
        "kappa3": m.kappa3(),
        "A_tail": m.a_tail(),
        "c_lambda": (!spec.is_power_law()).then(|| c_lambda(spec.lambda, spec.b)),
        "K": m.support(),
        "L": s.l,
        "N_crit_rule": crit_rule,
        "N_crit": n_crit.map(|r| r.n),
        "N_crit_real": n_crit.map(|r| r.real),
        "N": s.n(),
        "regime_report": s.report,
    });
    sink.json("compute.json", &summary)?;
    Ok(summary)
}

fn oracle(s: &Setup, ocfg: &OracleConfig, sink: &mut Sink) -> Result<Value> {
    let (m, l, n) = (&s.marginal, s.l, s.n() as usize);
    let n_max = default_n_max(m, l).max(n);
    let law = sum_distribution_with(m, l, n_max, None, ocfg)?;
    sink.csv(
        "law.csv",
        "n,log_p",
        law.log_ps.iter().enumerate().map(|(k, lp)| format!("{k},{}", num(*lp))),
    )?;
    let stride = (n + 1).div_ceil(256).max(1);
    let mut ms: Vec<usize> = (0..=n).step_by(stride).collect();
    if *ms.last().unwrap() != n {
        ms.push(n);
    }
    let cdf = conditional_max_cdf_with(m, l, n, &ms, ocfg)?;
    sink.csv(
        "max_cdf.csv",
        "m,cdf",
        ms.iter().zip(&cdf).map(|(k, c)| format!("{k},{}", num(*c))),
    )?;
    let site = conditional_site_marginal_with(m, l, n, ocfg)?;
    sink.csv(
        "site_marginal.csv",
        "j,p",
        site.iter().enumerate().map(|(j, p)| format!("{j},{}", num(*p))),
    )?;
    let summary = json!({
        "L": l,
        "N": n,
        "n_max": n_max,
        "log_p_sln": law.log_p(n),
        "total_mass": law.total_mass(),
    });
    sink.json("oracle.json", &summary)?;
    Ok(summary)
}

fn sample_exact(
    cfg: &ExperimentConfig,
    s: &Setup,
    ocfg: &OracleConfig,
    exec: Exec,
    sink: &mut Sink,
) -> Result<Value> {
    let seed = cfg.seed.expect("validated");
    let keep = cfg.output.profiles;
    let sampler = ExactSampler::with_config(&s.marginal, s.l, s.n(), None, ocfg)?;
    let records = sampler.replicas(seed, cfg.replicas, exec, |c| Record::from_config(c, keep));
    write_samples(cfg, s, records, json!({}), sink)
}

fn sample_mcmc(cfg: &ExperimentConfig, s: &Setup, exec: Exec, sink: &mut Sink) -> Result<Value> {
    let seed = cfg.seed.expect("validated");
    let keep = cfg.output.profiles;
    let (l, n) = (s.l, s.n());
    let default = McmcSchedule::default_for(l, n);
    let schedule = McmcSchedule {
        burn_in: cfg.mcmc.burn_in.unwrap_or(default.burn_in),
        thin: cfg.mcmc.thin.unwrap_or(default.thin),
    };
    let chains = cfg.mcmc.chains.unwrap_or(4).min(cfg.replicas);
    let per = |c: usize| cfg.replicas / chains + usize::from(c < cfg.replicas % chains);
    let draws: Vec<Vec<Record>> = exec.map(chains, |c| {
        let init = Configuration::uniform(l as usize, n);
        let mut chain = Metropolis::new(&s.marginal, init, replica_rng(seed, c as u64));
        chain.sample_with(schedule, per(c), |x| Record::from_config(x, keep))
    });
    let extra = json!({ "schedule": schedule, "chains": chains });
    write_samples(cfg, s, draws.into_iter().flatten().collect(), extra, sink)
}

fn dynamics(cfg: &ExperimentConfig, s: &Setup, exec: Exec, sink: &mut Sink) -> Result<Value> {
    let seed = cfg.seed.expect("validated");
    let d = &cfg.dynamics;
    let (l, n) = (s.l as usize, s.n());
    let spec = DynamicsSpec { l, hop: d.hop };
    let kmc = Kmc::new(&s.marginal, spec, n);
    let runs = exec.map(cfg.replicas, |i| {
        let mut rng = replica_rng(seed, i as u64);
        kmc.run(
            Configuration::uniform(l, n),
            d.t_end,
            d.burn_in,
            Some(d.snapshot_every),
            &mut rng,
        )
    });
    let runs = runs.into_iter().collect::<zrp::Result<Vec<_>>>()?;
    let mut trajectory = Vec::new();
    let mut hist = vec![0.0; n as usize + 1];
    for (i, r) in runs.iter().enumerate() {
        for (t, c) in &r.snapshots {
            let (_, max) = c.max();
            trajectory.push(format!("{i},{seed},{t},{l},{n},{max},{}", c.second_max()));
        }
        for (j, h) in r.histogram.iter().enumerate() {
            hist[j] += h / runs.len() as f64;
        }
    }
    sink.csv("trajectory.csv", "replica_id,seed,time,L,N,M_L,second_max", trajectory)?;
    sink.csv(
        "histogram.csv",
        "n,time_fraction",
        hist.iter().enumerate().map(|(j, h)| format!("{j},{}", num(*h))),
    )?;
    let events: u64 = runs.iter().map(|r| r.events).sum();
    let finals = runs.iter().map(|r| Record::from_config(&r.state, cfg.output.profiles)).collect();
    write_samples(cfg, s, finals, json!({ "events": events }), sink)
}

/// `samples.csv`, optional `profiles.csv`, `stats.csv` and `summary.json`
/// (with the fields of `extra` merged in).
fn write_samples(
    cfg: &ExperimentConfig,
    s: &Setup,
    records: Vec<Record>,
    extra: Value,
    sink: &mut Sink,
) -> Result<Value> {
    let seed = cfg.seed.expect("validated");
    let (l, n) = (s.l, s.n());
    let mut batch = SampleBatch::new(cfg.model, l, n, s.report.as_ref().map(|r| r.case));
    batch.extend(records)?;
    sink.csv(
        "samples.csv",
        "replica_id,seed,L,N,M_L,second_max",
        batch
            .records
            .iter()
            .enumerate()
            .map(|(i, r)| format!("{i},{seed},{l},{n},{},{}", r.max, r.second_max)),
    )?;
    if cfg.output.profiles {
        let mut rows = Vec::new();
        for (i, r) in batch.records.iter().enumerate() {
            let mut acc = 0u64;
            rows.push(format!("{i},0,0"));
            for (k, v) in r.eta.as_deref().unwrap_or_default().iter().enumerate() {
                acc += v;
                rows.push(format!("{i},{},{acc}", k + 1));
            }
        }
        sink.csv("profiles.csv", "replica_id,k,S_k", rows)?;
    }
    let rows = sample_stats(s, &batch)?;
    sink.csv("stats.csv", StatRow::HEADER, rows.iter().map(StatRow::to_csv))?;
    let mut summary = json!({ "L": l, "N": n, "replicas": batch.len(), "stats": rows });
    if let (Value::Object(map), Value::Object(more)) = (&mut summary, extra) {
        map.extend(more);
    }
    sink.json("summary.json", &summary)?;
    Ok(summary)
}

fn sample_stats(s: &Setup, batch: &SampleBatch) -> Result<Vec<StatRow>> {
    let m = &s.marginal;
    let regime = s.regime();
    let row = |statistic: &str, value: f64, ci: Option<(f64, f64)>| StatRow {
        statistic: statistic.into(),
        regime: regime.clone(),
        l: batch.l,
        n: batch.n,
        value,
        ci_lo: ci.map(|c| c.0),
        ci_hi: ci.map(|c| c.1),
        p_value: None,
    };
    let maxima: Vec<f64> = batch.records.iter().map(|r| r.max as f64).collect();
    let sm = summarize(&maxima);
    let mut rows = vec![row("mean_M_L", sm.mean, Some((sm.ci_lo, sm.ci_hi)))];
    let k = batch.excess(m);
    if k > 0.0 {
        let frac: Vec<f64> = maxima.iter().map(|x| x / k).collect();
        let sf = summarize(&frac);
        rows.push(row("mean_M_L_over_excess", sf.mean, Some((sf.ci_lo, sf.ci_hi))));
        let predicted = s.report.as_ref().and_then(|r| r.p_gamma);
        let pm = phase_mixture_test(batch, m, None, predicted)?;
        rows.push(row("condensed_fraction", pm.fraction, Some((pm.ci_lo, pm.ci_hi))));
        if let Some(r) = pm.condensed_ratio {
            rows.push(row("condensed_ratio", r, None));
        }
        if let Some(p) = predicted {
            rows.push(row("predicted_condensed_fraction", p, None));
        }
    }
    let sec = second_max_summary(batch)?;
    rows.push(row("median_second_max", sec.quantiles[2], Some((sec.quantiles[1], sec.quantiles[3]))));
    rows.push(row("median_second_max_ratio", sec.median_ratio, None));
    Ok(rows)
}

#[derive(Serialize)]
struct VerifySummary {
    pass: bool,
    criteria: Vec<verify::CriterionReport>,
}

fn verify_job(cfg: &ExperimentConfig, exec: Exec, sink: &mut Sink) -> Result<(bool, Value)> {
    let vcfg = VerifyConfig {
        seed: cfg.seed.unwrap_or(VerifyConfig::default().seed),
        exec,
    };
    let ids: Vec<u8> = if cfg.verify.criteria.is_empty() {
        (1..=10).collect()
    } else {
        cfg.verify.criteria.clone()
    };
    let mut reports = Vec::new();
    for id in ids {
        let r = verify::run_one(id, &vcfg).expect("validated criterion id");
        println!("{}", r.line());
        reports.push(r);
    }
    let summary = VerifySummary {
        pass: reports.iter().all(|r| r.pass),
        criteria: reports,
    };
    sink.json("verify.json", &summary)?;
    Ok((summary.pass, serde_json::to_value(&summary)?))
}
