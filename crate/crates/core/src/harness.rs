//! Monte Carlo orchestration: paired trials over every scheme, CSV and
//! manifest output, and per-device rate CDFs.
//!
//! Every scheme of a trial runs on the same scenario and channel draw. Trials
//! fan out over a rayon pool; each worker owns its solver, and rows are
//! written by the caller after the results are gathered in trial order, so
//! output files do not depend on the thread count.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conic::ClarabelEngine;
use crate::error::{Error, Result};
use crate::linkrates::{FrameInfo, Rate};
use crate::scenario::{generate_scenario, ScenarioConfig};
use crate::scheduler::{Scheme, SchemeOutcome, SchedulerConfig, SolveRecord, Trial};
use crate::seeds;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: ScenarioConfig,
    pub scheduler: SchedulerConfig,
    pub schemes: Vec<Scheme>,
    pub trials: usize,
    pub seed: u64,
    /// Results are kept in memory only when unset.
    pub out_dir: Option<PathBuf>,
    /// Worker threads; 0 lets rayon decide.
    pub threads: usize,
    pub dump_channels: bool,
    pub trace_solver: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            scenario: ScenarioConfig::default(),
            scheduler: SchedulerConfig::default(),
            schemes: Scheme::ALL.to_vec(),
            trials: 50,
            seed: 1,
            out_dir: None,
            threads: 0,
            dump_channels: false,
            trace_solver: false,
        }
    }
}

impl ExperimentConfig {
    pub fn check(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::Config("trial count must be at least 1".into()));
        }
        if self.schemes.is_empty() {
            return Err(Error::Config("scheme list is empty".into()));
        }
        self.scheduler.check()
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&fs::read_to_string(path)?)
    }

    /// Seed of trial `index`, independent of every other trial.
    pub fn trial_seed(&self, index: usize) -> u64 {
        seeds::derive(self.seed, &["trial", &index.to_string()])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SchemeRun {
    pub scheme: Scheme,
    /// Error text when the scheme failed on this draw.
    pub outcome: std::result::Result<SchemeOutcome, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialResult {
    pub index: usize,
    pub seed: u64,
    pub channel_hash: String,
    pub runs: Vec<SchemeRun>,
    pub records: Vec<SolveRecord>,
    /// Set when the draw itself could not be built.
    pub error: Option<String>,
}

impl TrialResult {
    pub fn outcome(&self, scheme: Scheme) -> Option<&SchemeOutcome> {
        self.runs.iter().find(|r| r.scheme == scheme).and_then(|r| r.outcome.as_ref().ok())
    }

    /// Failed schemes or a failed draw.
    pub fn flagged(&self) -> bool {
        self.error.is_some() || self.runs.iter().any(|r| r.outcome.is_err())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentResults {
    pub config: ExperimentConfig,
    pub trials: Vec<TrialResult>,
}

impl ExperimentResults {
    /// Per-device end-to-end rates of `scheme` over all successful trials.
    pub fn rates(&self, scheme: Scheme) -> Vec<f64> {
        self.trials
            .iter()
            .filter_map(|t| t.outcome(scheme))
            .flat_map(|o| o.report.c_end.iter().filter_map(|r| r.finite()).collect::<Vec<_>>())
            .collect()
    }

    /// Median per-device end-to-end rate of `scheme` in each trial, `None`
    /// where it failed.
    pub fn medians(&self, scheme: Scheme) -> Vec<Option<f64>> {
        self.trials.iter().map(|t| t.outcome(scheme).map(|o| o.report.median(f64::NAN))).collect()
    }
}

/// Runs one draw through every configured scheme.
pub fn run_trial(cfg: &ExperimentConfig, index: usize) -> TrialResult {
    let seed = cfg.trial_seed(index);
    let mut out = TrialResult { index, seed, channel_hash: String::new(), runs: vec![], records: vec![], error: None };
    let scenario = match generate_scenario(&cfg.scenario, seed) {
        Ok(s) => s,
        Err(e) => {
            out.error = Some(e.to_string());
            return out;
        }
    };
    let engine = ClarabelEngine::default();
    let trial = match Trial::new(&scenario, &cfg.scheduler, &engine) {
        Ok(t) => t,
        Err(e) => {
            out.error = Some(e.to_string());
            return out;
        }
    };
    out.channel_hash = trial.channels.hash();
    if cfg.dump_channels {
        if let Some(dir) = &cfg.out_dir {
            let res = fs::create_dir_all(dir.join("channels"))
                .map_err(Error::from)
                .and_then(|_| File::create(dir.join("channels").join(format!("trial_{index:05}.csv"))).map_err(Error::from))
                .and_then(|f| trial.channels.dump(BufWriter::new(f)));
            if let Err(e) = res {
                out.error = Some(format!("channel dump: {e}"));
            }
        }
    }
    for &scheme in &cfg.schemes {
        let outcome = trial.run_scheme(scheme).map_err(|e| e.to_string());
        out.runs.push(SchemeRun { scheme, outcome });
    }
    out.records = trial.records.take();
    out
}

/// Runs every trial and, when `out_dir` is set, writes the result files.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResults> {
    cfg.check()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    let trials: Vec<TrialResult> = pool.install(|| (0..cfg.trials).into_par_iter().map(|i| run_trial(cfg, i)).collect());
    let results = ExperimentResults { config: cfg.clone(), trials };
    if let Some(dir) = &cfg.out_dir {
        write_results(&results, dir)?;
    }
    Ok(results)
}

fn rate_cell(r: Rate) -> (String, bool) {
    match r {
        Rate::Finite(x) => (format!("{x:.6e}"), false),
        Rate::Unbounded => (String::new(), true),
    }
}

fn num(x: f64) -> String {
    format!("{x:.6e}")
}

fn writer(path: PathBuf) -> Result<csv::Writer<BufWriter<File>>> {
    Ok(csv::Writer::from_writer(BufWriter::new(File::create(path)?)))
}

/// Writes `rates.csv`, `schemes.csv`, `sweep.csv`, `balance.csv`,
/// `summary.csv`, one `cdf_<scheme>.csv` per scheme, `manifest.json`, and
/// `solver_trace.csv` when tracing is on.
///
/// `rates.csv` columns: trial, seed, channel_hash, scheme, device, c_cc,
/// c_ca, c_ad, c_end, cc_unbounded, ca_unbounded. A leg that is wired or
/// absent has an empty rate cell and its flag set.
pub fn write_results(results: &ExperimentResults, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let cfg = &results.config;

    let mut w = writer(dir.join("rates.csv"))?;
    w.write_record([
        "trial", "seed", "channel_hash", "scheme", "device", "c_cc", "c_ca", "c_ad", "c_end", "cc_unbounded", "ca_unbounded",
    ])?;
    for t in &results.trials {
        for run in &t.runs {
            let Ok(o) = &run.outcome else { continue };
            let r = &o.report;
            for u in 0..r.c_end.len() {
                let (cc, cc_inf) = rate_cell(r.c_cc[u]);
                let (ca, ca_inf) = rate_cell(r.c_ca[u]);
                w.write_record([
                    t.index.to_string(),
                    t.seed.to_string(),
                    t.channel_hash.clone(),
                    run.scheme.to_string(),
                    u.to_string(),
                    cc,
                    ca,
                    rate_cell(r.c_ad[u]).0,
                    rate_cell(r.c_end[u]).0,
                    cc_inf.to_string(),
                    ca_inf.to_string(),
                ])?;
            }
        }
    }
    w.flush()?;

    let mut w = writer(dir.join("schemes.csv"))?;
    w.write_record([
        "trial", "scheme", "status", "method", "n_clusters", "frame", "m_cc", "m_ca", "tau_cc", "tau_ca", "tau_ad", "tau_gp",
        "min_rate", "median_rate", "message",
    ])?;
    for t in &results.trials {
        let failed = |scheme: String, msg: &str| {
            let mut row = vec![t.index.to_string(), scheme, "failed".into()];
            row.extend(vec![String::new(); 11]);
            row.push(msg.to_string());
            row
        };
        if let Some(e) = &t.error {
            w.write_record(failed(String::new(), e))?;
            continue;
        }
        for run in &t.runs {
            let o = match &run.outcome {
                Ok(o) => o,
                Err(e) => {
                    w.write_record(failed(run.scheme.to_string(), e))?;
                    continue;
                }
            };
            let (frame, m_cc, m_ca, taus) = match o.report.frame {
                FrameInfo::Mdd { m_cc, m_ca, .. } => ("mdd", m_cc.to_string(), m_ca.to_string(), [String::new(), String::new(), String::new(), String::new()]),
                FrameInfo::Tdd { tau_cc, tau_ca, tau_ad, tau_gp, .. } => {
                    ("tdd", String::new(), String::new(), [num(tau_cc), num(tau_ca), num(tau_ad), num(tau_gp)])
                }
                FrameInfo::SingleTier { .. } => ("single", String::new(), String::new(), Default::default()),
            };
            let mut row = vec![
                t.index.to_string(),
                run.scheme.to_string(),
                "ok".into(),
                format!("{:?}", o.method).to_uppercase(),
                o.best_l.to_string(),
                frame.into(),
                m_cc,
                m_ca,
            ];
            row.extend(taus);
            row.push(rate_cell(o.objective()).0);
            row.push(num(o.report.median(f64::NAN)));
            row.push(String::new());
            w.write_record(row)?;
        }
    }
    w.flush()?;

    let mut w = writer(dir.join("sweep.csv"))?;
    w.write_record(["trial", "scheme", "n_clusters", "m_ca", "c_cc", "c_ca", "c_ad", "objective"])?;
    let mut b = writer(dir.join("balance.csv"))?;
    b.write_record(["trial", "n_clusters", "iteration", "m_ca", "c_cc", "c_ca", "raw_step", "stop"])?;
    for t in &results.trials {
        for run in &t.runs {
            let Ok(o) = &run.outcome else { continue };
            for r in &o.sweep {
                w.write_record([
                    t.index.to_string(),
                    run.scheme.to_string(),
                    r.n_clusters.to_string(),
                    r.m_ca.to_string(),
                    rate_cell(r.c_cc).0,
                    rate_cell(r.c_ca).0,
                    rate_cell(r.c_ad).0,
                    rate_cell(r.objective).0,
                ])?;
            }
            if run.scheme != Scheme::MddTtwl {
                continue;
            }
            for (l, bal) in &o.balance {
                for s in &bal.steps {
                    b.write_record([
                        t.index.to_string(),
                        l.to_string(),
                        s.iteration.to_string(),
                        s.m_ca.to_string(),
                        rate_cell(s.c_cc).0,
                        rate_cell(s.c_ca).0,
                        num(s.raw_step),
                        format!("{:?}", bal.stop),
                    ])?;
                }
            }
        }
    }
    w.flush()?;
    b.flush()?;

    let mut w = writer(dir.join("summary.csv"))?;
    w.write_record(["scheme", "samples", "q10", "q50", "q90", "mean"])?;
    for &scheme in &cfg.schemes {
        let Ok(c) = emit_cdf(results, scheme) else { continue };
        let mean = c.samples.iter().sum::<f64>() / c.samples.len() as f64;
        w.write_record([scheme.to_string(), c.samples.len().to_string(), num(c.q10), num(c.q50), num(c.q90), num(mean)])?;
        let mut t = writer(dir.join(format!("cdf_{}.csv", scheme.name().to_lowercase())))?;
        t.write_record(["rate", "cdf"])?;
        for (x, p) in c.table() {
            t.write_record([num(x), num(p)])?;
        }
        t.flush()?;
    }
    w.flush()?;

    if cfg.trace_solver {
        let mut w = writer(dir.join("solver_trace.csv"))?;
        w.write_record([
            "trial", "solve", "tier", "method", "n_clusters", "n_subcarriers", "with_si", "round", "iteration", "chi",
            "lower", "upper", "feasible",
        ])?;
        for t in &results.trials {
            for (k, r) in t.records.iter().enumerate() {
                for row in &r.trace {
                    w.write_record([
                        t.index.to_string(),
                        k.to_string(),
                        format!("{:?}", r.tier).to_uppercase(),
                        format!("{:?}", r.method).to_uppercase(),
                        r.n_clusters.to_string(),
                        r.n_subcarriers.to_string(),
                        r.with_si.to_string(),
                        row.round.to_string(),
                        row.iteration.to_string(),
                        num(row.chi),
                        num(row.lower),
                        num(row.upper),
                        row.feasible.to_string(),
                    ])?;
                }
            }
        }
        w.flush()?;
    }

    let flagged: Vec<usize> = results.trials.iter().filter(|t| t.flagged()).map(|t| t.index).collect();
    let manifest = serde_json::json!({
        "version": format!("v{}", env!("CARGO_PKG_VERSION")),
        "seed": cfg.seed,
        "trials": cfg.trials,
        "flagged_trials": flagged,
        "config": cfg,
    });
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Io(e.to_string()))?;
    fs::write(dir.join("manifest.json"), text + "\n")?;
    Ok(())
}

/// Empirical distribution of per-device rates.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CdfSummary {
    pub scheme: Scheme,
    /// Sorted ascending.
    pub samples: Vec<f64>,
    /// The 90%-likely rate: exceeded by 90% of device draws.
    pub q10: f64,
    pub q50: f64,
    pub q90: f64,
}

impl CdfSummary {
    pub fn from_samples(scheme: Scheme, mut samples: Vec<f64>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidArgument(format!("no samples for {scheme}")));
        }
        if samples.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument("rates must be finite".into()));
        }
        samples.sort_by(f64::total_cmp);
        Ok(CdfSummary {
            scheme,
            q10: quantile(&samples, 0.1),
            q50: quantile(&samples, 0.5),
            q90: quantile(&samples, 0.9),
            samples,
        })
    }

    /// (rate, fraction of samples ≤ rate) per sample.
    pub fn table(&self) -> Vec<(f64, f64)> {
        let n = self.samples.len() as f64;
        self.samples.iter().enumerate().map(|(i, &x)| (x, (i + 1) as f64 / n)).collect()
    }
}

/// Linear interpolation between order statistics at position p·(n − 1);
/// the median of an even count is the midpoint of the middle pair.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = p.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn emit_cdf(results: &ExperimentResults, scheme: Scheme) -> Result<CdfSummary> {
    CdfSummary::from_samples(scheme, results.rates(scheme))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn midpoint_median_and_single_sample() {
        let c = CdfSummary::from_samples(Scheme::Stw, vec![4.0, 1.0, 3.0, 2.0]).unwrap();
        assert_eq!(c.q50, 2.5);
        let c = CdfSummary::from_samples(Scheme::Stw, vec![7.0]).unwrap();
        assert_eq!((c.q10, c.q50, c.q90), (7.0, 7.0, 7.0));
        assert!(CdfSummary::from_samples(Scheme::Stw, vec![]).is_err());
    }

    #[test]
    fn uniform_quantile() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let xs: Vec<f64> = (0..10_000).map(|_| rng.gen_range(1.0..3.0)).collect();
        let c = CdfSummary::from_samples(Scheme::Ttw, xs).unwrap();
        assert!((c.q10 / 1.2 - 1.0).abs() < 0.02, "{}", c.q10);
        assert!(c.q10 <= c.q50 && c.q50 <= c.q90);
        let t = c.table();
        assert_eq!(t.len(), 10_000);
        assert_eq!(t.last().unwrap().1, 1.0);
    }

    #[test]
    fn config_checks() {
        assert!(ExperimentConfig { trials: 0, ..Default::default() }.check().is_err());
        assert!(ExperimentConfig { schemes: vec![], ..Default::default() }.check().is_err());
        let c = ExperimentConfig::from_toml("trials = 3\nschemes = [\"STW\", \"MDD-TTWL\"]\n[scenario]\nn_devices = 2\n").unwrap();
        assert_eq!(c.trials, 3);
        assert_eq!(c.schemes, vec![Scheme::Stw, Scheme::MddTtwl]);
        assert_eq!(c.scenario.n_devices, 2);
        assert!(ExperimentConfig::from_toml("trails = 3").is_err());
        assert!(ExperimentConfig::from_toml("[scenario]\nn_ap = 3").is_err());
    }

    #[test]
    fn shipped_configs_parse() {
        let d = ExperimentConfig::from_toml(include_str!("../../../configs/default.toml")).unwrap();
        assert_eq!(d, ExperimentConfig::default());
        let desk = ExperimentConfig::from_toml(include_str!("../../../configs/desk.toml")).unwrap();
        assert_eq!(desk.scheduler.fronthaul.max_outer, 10);
    }

    #[test]
    fn single_stw_trial() {
        let cfg = ExperimentConfig { trials: 1, schemes: vec![Scheme::Stw], threads: 1, ..Default::default() };
        let res = run_experiment(&cfg).unwrap();
        let o = res.trials[0].outcome(Scheme::Stw).expect("STW runs");
        assert_eq!(o.report.c_end.len(), cfg.scenario.n_devices);
        assert_eq!(o.report.c_end, o.report.c_ad);
        assert!(!res.trials[0].channel_hash.is_empty());
    }
}
