//! End-to-end composition: MDD subcarrier balancing and cluster-count sweep,
//! TDD time fractions, and the benchmark fronthaul schemes.

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::fmt;
use std::rc::Rc;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::access::{solve_access_maxmin, AccessProblem, AccessSolution, BisectionConfig};
use crate::association::{
    assign_subcarriers, ca_subcarrier_gains, cluster_access_gains, cluster_dc, cluster_idsc, cluster_sc, grid_cap_nodes,
    select_devices, ClusterAssignment, ClusteringMethod, LosGains, SubcarrierPartition, GRID_SIZES,
};
use crate::channel::{ChannelSet, NodeKey};
use crate::conic::ConicEngine;
use crate::error::{Error, Result};
use crate::fronthaul::{
    build_ca_problem, build_cc_problem, solve_fronthaul_maxmin, FronthaulProblem, FronthaulSolution, SurrogateConfig,
    TraceRow, VarKeys,
};
use crate::linkrates::{rate_ad, rate_ca, rate_cc, FrameInfo, LinkContext, PowerAllocation, Rate, RateReport};
use crate::precoding::{PrecoderConfig, PrecoderSet};
use crate::scenario::NetworkScenario;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Scheme {
    #[serde(rename = "MDD-TTWL")]
    MddTtwl,
    #[serde(rename = "TDD-TTWL")]
    TddTtwl,
    #[serde(rename = "CC-HY")]
    CcHy,
    #[serde(rename = "CA-HY")]
    CaHy,
    #[serde(rename = "TTW")]
    Ttw,
    #[serde(rename = "STWL")]
    Stwl,
    #[serde(rename = "STW")]
    Stw,
}

impl Scheme {
    pub const ALL: [Scheme; 7] =
        [Scheme::MddTtwl, Scheme::TddTtwl, Scheme::CcHy, Scheme::CaHy, Scheme::Ttw, Scheme::Stwl, Scheme::Stw];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::MddTtwl => "MDD-TTWL",
            Scheme::TddTtwl => "TDD-TTWL",
            Scheme::CcHy => "CC-HY",
            Scheme::CaHy => "CA-HY",
            Scheme::Ttw => "TTW",
            Scheme::Stwl => "STWL",
            Scheme::Stw => "STW",
        }
    }

    /// Wired legs as (CPU→CAP wired, CAP→AP wired).
    pub fn wired(self) -> (bool, bool) {
        match self {
            Scheme::MddTtwl | Scheme::TddTtwl | Scheme::Stwl => (false, false),
            Scheme::CcHy => (false, true),
            Scheme::CaHy => (true, false),
            Scheme::Ttw | Scheme::Stw => (true, true),
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim().to_ascii_uppercase().replace('_', "-");
        Scheme::ALL.into_iter().find(|x| x.name() == t).ok_or_else(|| Error::Config(format!("unknown scheme {s}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LoopConfig {
    /// Initial |M_CA| step; `None` means ⌈|M_FH|/8⌉.
    pub m_step: Option<usize>,
    /// ϑ
    pub decay: f64,
    /// κ′ relative to the smaller of the two fronthaul rates.
    pub kappa_prime: f64,
    pub l_step: usize,
    /// `None` means ⌈U/U_max⌉.
    pub l_init: Option<usize>,
    pub max_iters: usize,
}

impl Default for LoopConfig {
    fn default() -> Self {
        LoopConfig { m_step: None, decay: 0.7, kappa_prime: 0.02, l_step: 2, l_init: None, max_iters: 50 }
    }
}

impl LoopConfig {
    pub fn check(&self) -> Result<()> {
        if !(self.decay > 0.0 && self.decay <= 1.0) || !(self.kappa_prime >= 0.0) {
            return Err(Error::Config("need 0 < decay ≤ 1 and kappa_prime ≥ 0".into()));
        }
        if self.l_step == 0 || self.m_step == Some(0) || self.l_init == Some(0) || self.max_iters == 0 {
            return Err(Error::Config("loop steps and caps must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SchedulerConfig {
    pub method: ClusteringMethod,
    #[serde(rename = "loop")]
    pub loop_cfg: LoopConfig,
    pub fronthaul: SurrogateConfig,
    pub access: BisectionConfig,
    pub precoder: PrecoderConfig,
    pub tau_gp: f64,
    /// Subframes per MDD frame; `None` is the Z → ∞ idealization.
    pub n_subframes: Option<f64>,
    /// Restrict the sweep to these cluster counts when set.
    pub cluster_counts: Option<Vec<usize>>,
}

impl Default for SchedulerConfig {
    fn default() -> Self {
        SchedulerConfig {
            method: ClusteringMethod::Dc,
            loop_cfg: LoopConfig::default(),
            fronthaul: SurrogateConfig::default(),
            access: BisectionConfig::default(),
            precoder: PrecoderConfig::default(),
            tau_gp: 0.05,
            n_subframes: None,
            cluster_counts: None,
        }
    }
}

impl SchedulerConfig {
    pub fn check(&self) -> Result<()> {
        self.loop_cfg.check()?;
        self.fronthaul.check()?;
        if !(0.0..1.0).contains(&self.tau_gp) {
            return Err(Error::Config("tau_gp must lie in [0, 1)".into()));
        }
        if matches!(self.n_subframes, Some(z) if !(z > 0.0)) {
            return Err(Error::Config("n_subframes must be positive".into()));
        }
        Ok(())
    }

    /// Z/(Z + 2/3), or 1 when Z → ∞.
    pub fn mdd_frame_factor(&self) -> f64 {
        self.n_subframes.map_or(1.0, |z| z / (z + 2.0 / 3.0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum BalanceStop {
    Balanced,
    StepDecayed,
    IterationCap,
    /// Only one wireless fronthaul tier exists.
    SingleTier,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BalanceStep {
    pub iteration: usize,
    pub m_ca: usize,
    pub c_cc: Rate,
    pub c_ca: Rate,
    /// Raw step ϑ^{j−1}·m_step used after this evaluation.
    pub raw_step: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BalanceOutcome {
    /// Returned |M_CA|: the visited size with the largest min(C^CC, C^CA).
    pub m_ca: usize,
    pub c_cc: Rate,
    pub c_ca: Rate,
    pub steps: Vec<BalanceStep>,
    pub stop: BalanceStop,
}

impl BalanceOutcome {
    pub fn last(&self) -> &BalanceStep {
        self.steps.last().expect("balance evaluates at least once")
    }
}

/// Subcarrier balancing between the two fronthaul tiers. `eval(s)` returns
/// (C^CC, C^CA) with |M_CA| = s. Starts at |M_FH|/2 and moves toward the
/// weaker tier with a decaying step.
pub fn balance_with<F>(n_sc: usize, cfg: &LoopConfig, mut eval: F) -> Result<BalanceOutcome>
where
    F: FnMut(usize) -> Result<(Rate, Rate)>,
{
    cfg.check()?;
    let m_step = cfg.m_step.unwrap_or(n_sc.div_ceil(8)).max(1) as f64;
    let mut s = n_sc / 2;
    let mut steps: Vec<BalanceStep> = Vec::new();
    // Sizes already evaluated are not evaluated again; a clamped or
    // revisited size just lets the step keep decaying.
    let mut cache: BTreeMap<usize, (Rate, Rate)> = BTreeMap::new();
    let mut j = 1;
    let stop = loop {
        let (c_cc, c_ca) = match cache.get(&s) {
            Some(&v) => v,
            None => {
                let v = eval(s)?;
                cache.insert(s, v);
                v
            }
        };
        let raw = cfg.decay.powi(j as i32 - 1) * m_step;
        steps.push(BalanceStep { iteration: j, m_ca: s, c_cc, c_ca, raw_step: raw });
        if c_ca.is_unbounded() || c_cc.is_unbounded() {
            break BalanceStop::SingleTier;
        }
        let (a, b) = (c_cc.or(0.0), c_ca.or(0.0));
        if (a - b).abs() <= cfg.kappa_prime * a.min(b) {
            break BalanceStop::Balanced;
        }
        if raw < 0.5 {
            break BalanceStop::StepDecayed;
        }
        if j == cfg.max_iters {
            break BalanceStop::IterationCap;
        }
        let step = raw.round().max(1.0) as usize;
        s = if a > b { (s + step).min(n_sc) } else { s.saturating_sub(step) };
        j += 1;
    };
    let best = steps
        .iter()
        .max_by(|x, y| {
            let fx = x.c_cc.min(x.c_ca);
            let fy = y.c_cc.min(y.c_ca);
            fx.partial_cmp(&fy).unwrap_or(std::cmp::Ordering::Equal).then(y.iteration.cmp(&x.iteration))
        })
        .copied()
        .expect("nonempty");
    Ok(BalanceOutcome { m_ca: best.m_ca, c_cc: best.c_cc, c_ca: best.c_ca, steps, stop })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TddSchedule {
    pub tau_cc: f64,
    pub tau_ca: f64,
    pub tau_ad: f64,
    pub tau_gp: f64,
    pub objective: Rate,
}

impl TddSchedule {
    /// τ_CC + τ_CA + 2τ_GP, the denominator of every TDD rate.
    pub fn span(&self) -> f64 {
        self.tau_cc + self.tau_ca + 2.0 * self.tau_gp
    }

    /// Slack of both frame constraints; negative means violated.
    pub fn slack(&self) -> (f64, f64) {
        (1.0 - (self.tau_cc + self.tau_ca + self.tau_ad + self.tau_gp), self.span() - self.tau_ad)
    }
}

fn inv(r: Rate) -> f64 {
    match r {
        Rate::Unbounded => 0.0,
        Rate::Finite(x) => 1.0 / x,
    }
}

/// Time fractions maximizing min{τ_CC C^CC, τ_CA C^CA, τ_AD C^AD}/(τ_CC +
/// τ_CA + 2τ_GP) subject to τ_CC + τ_CA + τ_AD + τ_GP ≤ 1 and τ_AD ≤ τ_CC +
/// τ_CA + 2τ_GP, by bisection on the objective.
pub fn solve_tdd_fractions(c_cc: Rate, c_ca: Rate, c_ad: Rate, tau_gp: f64) -> Result<TddSchedule> {
    if !(0.0..1.0).contains(&tau_gp) {
        return Err(Error::InvalidArgument(format!("tau_gp = {tau_gp} outside [0, 1)")));
    }
    if [c_cc, c_ca, c_ad].iter().any(|r| matches!(r, Rate::Finite(x) if !(*x >= 0.0))) {
        return Err(Error::InvalidArgument("rates must be nonnegative".into()));
    }
    let g = tau_gp;
    let canonical = |objective| TddSchedule {
        tau_cc: (1.0 - g) / 3.0,
        tau_ca: (1.0 - g) / 3.0,
        tau_ad: (1.0 - g) / 3.0,
        tau_gp: g,
        objective,
    };
    if [c_cc, c_ca, c_ad].iter().any(|r| *r == Rate::Finite(0.0)) {
        return Ok(canonical(Rate::Finite(0.0)));
    }
    let (a, b, c) = (inv(c_cc), inv(c_ca), inv(c_ad));
    if a + b == 0.0 && c == 0.0 {
        return Ok(canonical(Rate::Unbounded));
    }
    // With τ_AD at its least value S·c·D, a target S is reachable iff some
    // T = τ_CC + τ_CA lies in [t_min, t_max].
    let bounds = |s: f64| {
        let f = s * (a + b);
        let t_min = if g == 0.0 { 0.0 } else { 2.0 * g * f / (1.0 - f) };
        let t_max = (1.0 - g - 2.0 * g * s * c) / (1.0 + s * c);
        (t_min, t_max)
    };
    let feasible = |s: f64| {
        let f = s * (a + b);
        if f > 1.0 || (g > 0.0 && f >= 1.0) || s * c > 1.0 {
            return false;
        }
        let (t_min, t_max) = bounds(s);
        t_max > 0.0 && t_min <= t_max
    };
    let mut hi = f64::INFINITY;
    if a + b > 0.0 {
        hi = hi.min(1.0 / (a + b));
    }
    if c > 0.0 {
        hi = hi.min(1.0 / c);
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        if hi - lo <= 1e-14 * hi {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if feasible(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let s = lo;
    let (_, t) = bounds(s);
    let (tau_cc, tau_ca) = if a + b > 0.0 { (t * a / (a + b), t * b / (a + b)) } else { (0.5 * t, 0.5 * t) };
    let d = t + 2.0 * g;
    let tau_ad = if c > 0.0 { s * c * d } else { d.min(1.0 - g - t) };
    Ok(TddSchedule { tau_cc, tau_ca, tau_ad, tau_gp: g, objective: Rate::Finite(s) })
}

/// Which fronthaul problem a solve belonged to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Tier {
    Cc,
    Ca,
}

/// Solver-side and evaluation-side view of one fronthaul solve.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveRecord {
    pub tier: Tier,
    pub method: ClusteringMethod,
    pub n_clusters: usize,
    pub n_subcarriers: usize,
    pub with_si: bool,
    /// Min row rate reported by the solver.
    pub solver_min: f64,
    /// Min link rate recomputed by `linkrates`.
    pub linkrates_min: f64,
    pub violations: Vec<String>,
    /// Bisection trace of the solve.
    pub trace: Vec<TraceRow>,
    pub warning: Option<String>,
}

/// One tier solved on a subcarrier set, already re-evaluated.
#[derive(Debug, Clone)]
pub struct TierResult {
    pub per_device: Vec<Rate>,
    pub min: Rate,
    pub alloc: PowerAllocation,
    pub solution: Option<FronthaulSolution>,
}

/// Everything that depends only on (method, L).
pub struct ClusterState {
    pub method: ClusteringMethod,
    pub n_clusters: usize,
    pub assignment: ClusterAssignment,
    pub precoders: PrecoderSet,
    pub access: AccessSolution,
    pub c_ad: Vec<Rate>,
    pub ad_alloc: PowerAllocation,
    ca_gains: Vec<Vec<f64>>,
    full_cc: RefCell<Option<Rc<TierResult>>>,
    full_ca: RefCell<Option<Rc<TierResult>>>,
    mdd: RefCell<BTreeMap<usize, (SubcarrierPartition, Rc<TierResult>, Rc<TierResult>)>>,
}

impl ClusterState {
    /// Clusters that forward over the CAP→AP tier.
    pub fn relays(&self) -> Vec<bool> {
        self.assignment
            .clusters
            .iter()
            .zip(&self.assignment.served_devices)
            .map(|(c, d)| !c.is_singleton() && !d.is_empty())
            .collect()
    }

    pub fn has_ca_tier(&self) -> bool {
        self.relays().iter().any(|&r| r)
    }
}

/// Per-L record of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub n_clusters: usize,
    pub m_ca: usize,
    pub c_cc: Rate,
    pub c_ca: Rate,
    pub c_ad: Rate,
    pub objective: Rate,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SchemeOutcome {
    pub report: RateReport,
    pub method: ClusteringMethod,
    pub best_l: usize,
    pub sweep: Vec<SweepRow>,
    /// Cluster counts that could not serve every device.
    pub skipped: Vec<(usize, String)>,
    /// Balancing runs of MDD, keyed by L.
    pub balance: Vec<(usize, BalanceOutcome)>,
    pub tdd: Option<TddSchedule>,
}

impl SchemeOutcome {
    pub fn objective(&self) -> Rate {
        self.report.min_rate()
    }
}

/// One Monte Carlo draw with every cache the schemes share.
pub struct Trial<'a> {
    pub scenario: &'a NetworkScenario,
    pub channels: ChannelSet,
    pub cfg: &'a SchedulerConfig,
    engine: &'a dyn ConicEngine,
    gains: LosGains,
    states: RefCell<BTreeMap<(ClusteringMethod, usize), Option<Rc<ClusterState>>>>,
    errors: RefCell<BTreeMap<(ClusteringMethod, usize), String>>,
    pub records: RefCell<Vec<SolveRecord>>,
}

/// Synthetic grid CAPs for every supported grid size.
pub fn all_grid_nodes(s: &NetworkScenario) -> Result<Vec<(NodeKey, crate::scenario::Position)>> {
    let mut out = Vec::new();
    for &g in GRID_SIZES.iter() {
        out.extend(grid_cap_nodes((s.area_x, s.area_y), g, s.grid_cap_height)?);
    }
    Ok(out)
}

impl<'a> Trial<'a> {
    pub fn new(scenario: &'a NetworkScenario, cfg: &'a SchedulerConfig, engine: &'a dyn ConicEngine) -> Result<Self> {
        cfg.check()?;
        let channels = ChannelSet::generate(scenario, &all_grid_nodes(scenario)?)?;
        Ok(Self::with_channels(scenario, channels, cfg, engine))
    }

    pub fn with_channels(
        scenario: &'a NetworkScenario,
        channels: ChannelSet,
        cfg: &'a SchedulerConfig,
        engine: &'a dyn ConicEngine,
    ) -> Self {
        let gains = LosGains::from_channels(&channels, scenario.n_aps());
        Trial {
            scenario,
            channels,
            cfg,
            engine,
            gains,
            states: RefCell::new(BTreeMap::new()),
            errors: RefCell::new(BTreeMap::new()),
            records: RefCell::new(Vec::new()),
        }
    }

    fn n_sc(&self) -> usize {
        self.channels.n_subcarriers
    }

    /// Cluster counts swept for `method`.
    pub fn cluster_counts(&self, method: ClusteringMethod) -> Vec<usize> {
        let s = self.scenario;
        let q = s.n_aps();
        let l_init = self.cfg.loop_cfg.l_init.unwrap_or(s.n_devices().div_ceil(s.u_max.max(1))).max(1);
        let mut ls: Vec<usize> = match method {
            ClusteringMethod::Dc => {
                let mut v: Vec<usize> = (l_init..=q).step_by(self.cfg.loop_cfg.l_step).collect();
                if v.last() != Some(&q) && l_init <= q {
                    v.push(q);
                }
                v
            }
            _ => GRID_SIZES.iter().copied().filter(|&g| g >= l_init).collect(),
        };
        if let Some(only) = &self.cfg.cluster_counts {
            ls.retain(|l| only.contains(l));
        }
        ls
    }

    /// Cluster, select devices, precode and solve the access tier for one L.
    /// `Ok(None)` when the devices cannot all be served.
    pub fn state(&self, method: ClusteringMethod, l: usize) -> Result<Option<Rc<ClusterState>>> {
        if let Some(s) = self.states.borrow().get(&(method, l)) {
            return Ok(s.clone());
        }
        let s = self.scenario;
        let u = s.n_devices();
        let area = (s.area_x, s.area_y);
        let raw = match method {
            ClusteringMethod::Dc => cluster_dc(&s.ap_positions, &self.gains, l, u)?,
            ClusteringMethod::Sc => cluster_sc(area, l, &s.ap_positions, u)?,
            ClusteringMethod::Idsc => cluster_idsc(area, l, &s.ap_positions, &self.gains, u)?.0,
        };
        let v = cluster_access_gains(&raw, &self.channels, u);
        let assignment = match select_devices(&raw, &v, s.u_max, s.c_max) {
            Ok(a) => a,
            Err(e @ Error::Unservable { .. }) => {
                self.errors.borrow_mut().insert((method, l), e.to_string());
                self.states.borrow_mut().insert((method, l), None);
                return Ok(None);
            }
            Err(e) => return Err(e),
        };
        let precoders = PrecoderSet::build(s, &self.channels, &assignment, &self.cfg.precoder)?;
        let problem = AccessProblem::build(s, &self.channels, &assignment, &precoders);
        let access = solve_access_maxmin(&problem, &self.cfg.access, self.engine)?;
        let ad_alloc = problem.to_allocation(&access.amplitudes);
        let part = SubcarrierPartition::full_band(self.n_sc());
        let ctx = LinkContext { scenario: s, channels: &self.channels, assignment: &assignment, precoders: &precoders, partition: &part };
        let c_ad = rate_ad(&ctx, &ad_alloc).into_iter().map(Rate::Finite).collect();
        let ca_gains = ca_subcarrier_gains(&assignment, &self.channels);
        let st = Rc::new(ClusterState {
            method,
            n_clusters: l,
            assignment,
            precoders,
            access,
            c_ad,
            ad_alloc,
            ca_gains,
            full_cc: RefCell::new(None),
            full_ca: RefCell::new(None),
            mdd: RefCell::new(BTreeMap::new()),
        });
        self.states.borrow_mut().insert((method, l), Some(st.clone()));
        Ok(Some(st))
    }

    fn solve_cc(&self, st: &ClusterState, subs: &[usize], with_si: bool) -> Result<TierResult> {
        let s = self.scenario;
        let noise = s.power.fronthaul_noise(&s.band);
        let si = s.power.si_variance(&s.band);
        let relays = st.relays();
        let si_var: Vec<f64> = relays.iter().map(|&r| if with_si && r { si } else { 0.0 }).collect();
        let (problem, keys) = build_cc_problem(
            &self.channels,
            &st.assignment,
            &st.precoders,
            subs,
            noise,
            &si_var,
            s.power.p_cpu,
            s.band.subcarrier_bandwidth(),
        );
        let sol = solve_fronthaul_maxmin(&problem, &self.cfg.fronthaul, self.engine)?;
        let mut alloc = PowerAllocation::default();
        if let VarKeys::Cc(keys) = &keys {
            for (i, &k) in keys.iter().enumerate() {
                alloc.cc_power.insert(k, sol.p[i]);
                alloc.cc_gamma.insert(k, sol.gamma[i]);
            }
        }
        let part = SubcarrierPartition { m_cc: subs.to_vec(), m_ca: Vec::new() };
        let ctx = LinkContext {
            scenario: s,
            channels: &self.channels,
            assignment: &st.assignment,
            precoders: &st.precoders,
            partition: &part,
        };
        let rates = rate_cc(&ctx, &alloc, &si_var);
        self.record(Tier::Cc, st, subs.len(), with_si, &problem, &sol, rates.per_link.values().copied());
        let min = Rate::min_of(rates.per_device.iter().copied());
        Ok(TierResult { per_device: rates.per_device, min, alloc, solution: Some(sol) })
    }

    fn solve_ca(&self, st: &ClusterState, subs: &[usize]) -> Result<TierResult> {
        let s = self.scenario;
        let u = s.n_devices();
        if !st.has_ca_tier() {
            return Ok(TierResult {
                per_device: vec![Rate::Unbounded; u],
                min: Rate::Unbounded,
                alloc: PowerAllocation::default(),
                solution: None,
            });
        }
        let (problem, keys) = build_ca_problem(
            &self.channels,
            &st.assignment,
            &st.precoders,
            subs,
            s.power.fronthaul_noise(&s.band),
            s.power.p_ap,
            s.band.subcarrier_bandwidth(),
        );
        let sol = solve_fronthaul_maxmin(&problem, &self.cfg.fronthaul, self.engine)?;
        let mut alloc = PowerAllocation::default();
        if let VarKeys::Ca(keys) = &keys {
            for (i, &k) in keys.iter().enumerate() {
                alloc.ca_power.insert(k, sol.p[i]);
                alloc.ca_gamma.insert(k, sol.gamma[i]);
            }
        }
        let part = SubcarrierPartition { m_cc: Vec::new(), m_ca: subs.to_vec() };
        let ctx = LinkContext {
            scenario: s,
            channels: &self.channels,
            assignment: &st.assignment,
            precoders: &st.precoders,
            partition: &part,
        };
        let rates = rate_ca(&ctx, &alloc);
        self.record(Tier::Ca, st, subs.len(), false, &problem, &sol, rates.per_link.values().copied());
        let min = Rate::min_of(rates.per_device.iter().copied());
        Ok(TierResult { per_device: rates.per_device, min, alloc, solution: Some(sol) })
    }

    #[allow(clippy::too_many_arguments)]
    fn record(
        &self,
        tier: Tier,
        st: &ClusterState,
        n_subcarriers: usize,
        with_si: bool,
        problem: &FronthaulProblem,
        sol: &FronthaulSolution,
        links: impl Iterator<Item = f64>,
    ) {
        let linkrates_min = links.fold(f64::INFINITY, f64::min);
        let solver_min = if problem.n_rows == 0 { f64::INFINITY } else { sol.min_rate };
        self.records.borrow_mut().push(SolveRecord {
            tier,
            method: st.method,
            n_clusters: st.n_clusters,
            n_subcarriers,
            with_si,
            solver_min,
            linkrates_min,
            violations: problem.violations(&sol.p, 1e-6),
            trace: sol.trace.clone(),
            warning: sol.warning.clone(),
        });
    }

    /// Both tiers over the whole band without SI (TDD and the hybrids).
    pub fn full_band_cc(&self, st: &ClusterState) -> Result<Rc<TierResult>> {
        if let Some(r) = st.full_cc.borrow().as_ref() {
            return Ok(r.clone());
        }
        let subs: Vec<usize> = (0..self.n_sc()).collect();
        let r = Rc::new(self.solve_cc(st, &subs, false)?);
        *st.full_cc.borrow_mut() = Some(r.clone());
        Ok(r)
    }

    pub fn full_band_ca(&self, st: &ClusterState) -> Result<Rc<TierResult>> {
        if let Some(r) = st.full_ca.borrow().as_ref() {
            return Ok(r.clone());
        }
        let subs: Vec<usize> = (0..self.n_sc()).collect();
        let r = Rc::new(self.solve_ca(st, &subs)?);
        *st.full_ca.borrow_mut() = Some(r.clone());
        Ok(r)
    }

    /// MDD tiers with |M_CA| = `m_ca`; CAPs that relay see residual SI on
    /// M_CC whenever M_CA is nonempty.
    pub fn mdd_tiers(
        &self,
        st: &ClusterState,
        m_ca: usize,
    ) -> Result<(SubcarrierPartition, Rc<TierResult>, Rc<TierResult>)> {
        if let Some(v) = st.mdd.borrow().get(&m_ca) {
            return Ok(v.clone());
        }
        let part = assign_subcarriers(&st.assignment, &st.ca_gains, self.n_sc(), m_ca);
        let cc = Rc::new(self.solve_cc(st, &part.m_cc, !part.m_ca.is_empty())?);
        let ca = Rc::new(self.solve_ca(st, &part.m_ca)?);
        let v = (part, cc, ca);
        st.mdd.borrow_mut().insert(m_ca, v.clone());
        Ok(v)
    }

    /// Subcarrier balancing for one cluster state.
    pub fn balance_subcarriers(&self, st: &ClusterState) -> Result<BalanceOutcome> {
        let n = self.n_sc();
        if !st.has_ca_tier() {
            let (_, cc, ca) = self.mdd_tiers(st, 0)?;
            let step = BalanceStep { iteration: 1, m_ca: 0, c_cc: cc.min, c_ca: ca.min, raw_step: 0.0 };
            return Ok(BalanceOutcome { m_ca: 0, c_cc: cc.min, c_ca: ca.min, steps: vec![step], stop: BalanceStop::SingleTier });
        }
        balance_with(n, &self.cfg.loop_cfg, |m| {
            let (_, cc, ca) = self.mdd_tiers(st, m)?;
            Ok((cc.min, ca.min))
        })
    }

    /// The cluster count of the single-tier schemes: every AP its own cluster.
    fn single_tier_state(&self) -> Result<Option<Rc<ClusterState>>> {
        self.state(ClusteringMethod::Dc, self.scenario.n_aps())
    }

    /// Evaluate `scheme` on one cluster state. Returns the report plus the
    /// balancing run and TDD fractions where they apply.
    fn evaluate(
        &self,
        scheme: Scheme,
        st: &ClusterState,
    ) -> Result<(RateReport, Option<BalanceOutcome>, Option<TddSchedule>, usize)> {
        let u = self.scenario.n_devices();
        let unbounded = vec![Rate::Unbounded; u];
        let l = st.assignment.n_clusters();
        Ok(match scheme {
            Scheme::MddTtwl | Scheme::Stwl => {
                let bal = self.balance_subcarriers(st)?;
                let (part, cc, ca) = self.mdd_tiers(st, bal.m_ca)?;
                let k = self.cfg.mdd_frame_factor();
                let frame = if st.has_ca_tier() {
                    FrameInfo::Mdd { n_clusters: l, m_cc: part.m_cc.len(), m_ca: part.m_ca.len() }
                } else {
                    FrameInfo::SingleTier { n_clusters: l }
                };
                let scale = |v: &[Rate]| v.iter().map(|r| r.scale(k)).collect::<Vec<_>>();
                let rep = RateReport::new(scheme.name(), scale(&cc.per_device), scale(&ca.per_device), scale(&st.c_ad), frame);
                (rep, Some(bal), None, part.m_ca.len())
            }
            Scheme::TddTtwl => {
                let cc = self.full_band_cc(st)?;
                let ca = self.full_band_ca(st)?;
                let c_ad = Rate::min_of(st.c_ad.iter().copied());
                let t = solve_tdd_fractions(cc.min, ca.min, c_ad, self.cfg.tau_gp)?;
                let d = t.span();
                let scale = |v: &[Rate], tau: f64| v.iter().map(|r| r.scale(tau / d)).collect::<Vec<_>>();
                let frame = FrameInfo::Tdd { n_clusters: l, tau_cc: t.tau_cc, tau_ca: t.tau_ca, tau_ad: t.tau_ad, tau_gp: t.tau_gp };
                let rep = RateReport::new(
                    scheme.name(),
                    scale(&cc.per_device, t.tau_cc),
                    scale(&ca.per_device, t.tau_ca),
                    scale(&st.c_ad, t.tau_ad),
                    frame,
                );
                (rep, None, Some(t), self.n_sc())
            }
            Scheme::CcHy => {
                let cc = self.full_band_cc(st)?;
                let rep = RateReport::new(
                    scheme.name(),
                    cc.per_device.clone(),
                    unbounded,
                    st.c_ad.clone(),
                    FrameInfo::SingleTier { n_clusters: l },
                );
                (rep, None, None, 0)
            }
            Scheme::CaHy => {
                let ca = self.full_band_ca(st)?;
                let rep = RateReport::new(
                    scheme.name(),
                    unbounded,
                    ca.per_device.clone(),
                    st.c_ad.clone(),
                    FrameInfo::SingleTier { n_clusters: l },
                );
                (rep, None, None, self.n_sc())
            }
            Scheme::Ttw | Scheme::Stw => {
                let rep = RateReport::new(
                    scheme.name(),
                    unbounded.clone(),
                    unbounded,
                    st.c_ad.clone(),
                    FrameInfo::SingleTier { n_clusters: l },
                );
                (rep, None, None, 0)
            }
        })
    }

    /// Best report over a list of cluster counts.
    pub fn sweep_clusters(&self, scheme: Scheme, method: ClusteringMethod, counts: &[usize]) -> Result<SchemeOutcome> {
        let mut sweep = Vec::new();
        let mut skipped = Vec::new();
        let mut balance = Vec::new();
        let mut best: Option<(RateReport, usize, Option<TddSchedule>)> = None;
        for &l in counts {
            let Some(st) = self.state(method, l)? else {
                let why = self.errors.borrow().get(&(method, l)).cloned().unwrap_or_default();
                skipped.push((l, why));
                continue;
            };
            let (rep, bal, tdd, m_ca) = self.evaluate(scheme, &st)?;
            let objective = rep.min_rate();
            sweep.push(SweepRow {
                n_clusters: l,
                m_ca,
                c_cc: Rate::min_of(rep.c_cc.iter().copied()),
                c_ca: Rate::min_of(rep.c_ca.iter().copied()),
                c_ad: Rate::min_of(rep.c_ad.iter().copied()),
                objective,
            });
            if let Some(b) = bal {
                balance.push((l, b));
            }
            let better = match &best {
                None => true,
                Some((r, _, _)) => objective > r.min_rate(),
            };
            if better {
                best = Some((rep, l, tdd));
            }
        }
        let (report, best_l, tdd) =
            best.ok_or_else(|| Error::Solver(format!("{scheme}: no cluster count in {counts:?} serves every device")))?;
        Ok(SchemeOutcome { report, method, best_l, sweep, skipped, balance, tdd })
    }

    pub fn run_scheme(&self, scheme: Scheme) -> Result<SchemeOutcome> {
        match scheme {
            Scheme::Stwl | Scheme::Stw => {
                let q = self.scenario.n_aps();
                if self.single_tier_state()?.is_none() {
                    return Err(Error::Solver(format!("{scheme}: {q} single-AP clusters cannot serve every device")));
                }
                self.sweep_clusters(scheme, ClusteringMethod::Dc, &[q])
            }
            _ => {
                let method = self.cfg.method;
                self.sweep_clusters(scheme, method, &self.cluster_counts(method))
            }
        }
    }
}
