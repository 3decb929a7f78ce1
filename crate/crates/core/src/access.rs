//! Max-min access SINR over per-node power coefficients: bisection on the
//! common SINR target with a second-order-cone feasibility problem.
//!
//! Variables are real amplitudes a = √p, one per (cluster, serving node,
//! device). A device's desired signal is the coherent sum over its clusters;
//! every other (cluster, device) stream adds its own interference term.

use std::collections::BTreeMap;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::association::ClusterAssignment;
use crate::channel::{ChannelSet, NodeKey};
use crate::conic::{Affine, ConeKind, ConicEngine, ConicOutcome, ConicProblem};
use crate::error::{Error, Result};
use crate::linkrates::PowerAllocation;
use crate::precoding::PrecoderSet;
use crate::scenario::NetworkScenario;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccessVar {
    pub cluster: usize,
    pub node: NodeKey,
    pub device: usize,
    /// ‖v_{l,u}[k]‖², the power this node spends per unit p.
    pub block_energy: f64,
}

/// One (cluster, device) stream and the amplitude variables that carry it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stream {
    pub cluster: usize,
    pub device: usize,
    pub vars: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccessProblem {
    pub n_devices: usize,
    pub vars: Vec<AccessVar>,
    pub streams: Vec<Stream>,
    /// `coef[u][v]` = h_{k,u}ᴴ v_{l,u'}[k] for variable v = (l, k, u').
    pub coef: Vec<Vec<Complex64>>,
    pub noise: f64,
    /// Per-node power budget P_AP.
    pub budget: f64,
}

impl AccessProblem {
    pub fn build(
        scenario: &NetworkScenario,
        channels: &ChannelSet,
        assignment: &ClusterAssignment,
        precoders: &PrecoderSet,
    ) -> Self {
        let n_devices = assignment.serving_map.len();
        let mut vars = Vec::new();
        let mut streams = Vec::new();
        let mut blocks = Vec::new();
        for (l, devs) in assignment.served_devices.iter().enumerate() {
            let nodes = assignment.clusters[l].serving_nodes();
            for (j, &up) in devs.iter().enumerate() {
                let v = &precoders.ad[l][j];
                let len = v.len() / nodes.len();
                let mut ids = Vec::new();
                for (i, &k) in nodes.iter().enumerate() {
                    let block = v.rows(i * len, len).into_owned();
                    ids.push(vars.len());
                    vars.push(AccessVar { cluster: l, node: k, device: up, block_energy: block.norm_squared() });
                    blocks.push(block);
                }
                streams.push(Stream { cluster: l, device: up, vars: ids });
            }
        }
        let coef = (0..n_devices)
            .map(|u| {
                vars.iter()
                    .zip(&blocks)
                    .map(|(v, b)| channels.access(v.node, u).gain_vector.dotc(b))
                    .collect()
            })
            .collect();
        AccessProblem {
            n_devices,
            vars,
            streams,
            coef,
            noise: scenario.power.access_noise(&scenario.band),
            budget: scenario.power.p_ap,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.noise > 0.0) || !(self.budget > 0.0) {
            return Err(Error::InvalidArgument("noise and budget must be positive".into()));
        }
        if self.coef.len() != self.n_devices || self.coef.iter().any(|r| r.len() != self.vars.len()) {
            return Err(Error::InvalidArgument("coefficient table has the wrong shape".into()));
        }
        if self.streams.iter().flat_map(|s| &s.vars).any(|&v| v >= self.vars.len()) {
            return Err(Error::InvalidArgument("stream refers to a missing variable".into()));
        }
        Ok(())
    }

    fn stream_value(&self, u: usize, s: &Stream, amp: &[f64]) -> Complex64 {
        s.vars.iter().map(|&v| self.coef[u][v] * amp[v]).sum()
    }

    /// SINR of every device for amplitudes `amp`.
    pub fn sinr(&self, amp: &[f64]) -> Vec<f64> {
        (0..self.n_devices)
            .map(|u| {
                let mut desired = Complex64::new(0.0, 0.0);
                let mut interference = self.noise;
                for s in &self.streams {
                    let x = self.stream_value(u, s, amp);
                    if s.device == u {
                        desired += x;
                    } else {
                        interference += x.norm_sqr();
                    }
                }
                desired.norm_sqr() / interference
            })
            .collect()
    }

    /// Power drawn by each node.
    pub fn node_power(&self, amp: &[f64]) -> BTreeMap<NodeKey, f64> {
        let mut out = BTreeMap::new();
        for (v, &a) in self.vars.iter().zip(amp) {
            *out.entry(v.node).or_insert(0.0) += a * a * v.block_energy;
        }
        out
    }

    pub fn to_allocation(&self, amp: &[f64]) -> PowerAllocation {
        let mut alloc = PowerAllocation::default();
        for (v, &a) in self.vars.iter().zip(amp) {
            alloc.ad_power.insert((v.cluster, v.node, v.device), a * a);
        }
        alloc
    }

    fn nodes(&self) -> BTreeMap<NodeKey, Vec<usize>> {
        let mut out: BTreeMap<NodeKey, Vec<usize>> = BTreeMap::new();
        for (i, v) in self.vars.iter().enumerate() {
            out.entry(v.node).or_default().push(i);
        }
        out
    }
}

/// Interference-free bound on the SINR the SOC rows can certify: every node
/// spends its whole budget on the device alone and only the in-phase part
/// of each coefficient counts. Returns the minimum over devices.
pub fn chi_upper(problem: &AccessProblem) -> f64 {
    let mut worst = f64::INFINITY;
    for u in 0..problem.n_devices {
        let mut per_node: BTreeMap<NodeKey, f64> = BTreeMap::new();
        for s in problem.streams.iter().filter(|s| s.device == u) {
            for &v in &s.vars {
                let var = &problem.vars[v];
                if var.block_energy > 0.0 {
                    let amp = (problem.budget / var.block_energy).sqrt();
                    *per_node.entry(var.node).or_insert(0.0) += amp * problem.coef[u][v].re.max(0.0);
                }
            }
        }
        let d: f64 = per_node.values().sum();
        worst = worst.min(d * d / problem.noise);
    }
    if worst.is_finite() {
        worst
    } else {
        0.0
    }
}

/// Feasibility at SINR target `chi`: minimize Σ_{l,u} ‖P_{l,u}‖_F subject to
/// one SOC row per device and one budget row per node. The desired sum is
/// held real through its real part, which can only understate |desired|.
/// Returns amplitudes, or `None` when infeasible.
pub fn soc_feasible(problem: &AccessProblem, chi: f64, engine: &dyn ConicEngine) -> Result<Option<Vec<f64>>> {
    let n = problem.vars.len();
    if chi <= 0.0 {
        return Ok(Some(vec![0.0; n]));
    }
    // x = a / √P, coefficients in units of the noise amplitude.
    let sp = problem.budget.sqrt();
    let sn = problem.noise.sqrt();
    let c = |u: usize, v: usize| problem.coef[u][v] * (sp / sn);
    let n_streams = problem.streams.len();
    let mut pr = ConicProblem::new(n + n_streams);
    for v in 0..n {
        pr.nonneg(Affine::var(v, 1.0));
    }
    for (si, s) in problem.streams.iter().enumerate() {
        pr.objective[n + si] = 1.0;
        let mut row = vec![Affine::var(n + si, 1.0)];
        row.extend(s.vars.iter().map(|&v| Affine::var(v, 1.0)));
        pr.push(ConeKind::Soc, row);
    }
    for ids in problem.nodes().values() {
        let mut row = vec![Affine::constant(1.0)];
        row.extend(ids.iter().map(|&v| Affine::var(v, problem.vars[v].block_energy.sqrt())));
        pr.push(ConeKind::Soc, row);
    }
    let inv = 1.0 / chi.sqrt();
    for u in 0..problem.n_devices {
        let mut desired = Affine::default();
        let mut row = vec![Affine::default(), Affine::constant(1.0)];
        for s in &problem.streams {
            if s.device == u {
                for &v in &s.vars {
                    desired = desired.plus(v, c(u, v).re * inv);
                }
                continue;
            }
            if s.vars.iter().all(|&v| problem.coef[u][v] == Complex64::new(0.0, 0.0)) {
                continue;
            }
            let mut re = Affine::default();
            let mut im = Affine::default();
            for &v in &s.vars {
                let z = c(u, v);
                re = re.plus(v, z.re);
                im = im.plus(v, z.im);
            }
            row.push(re);
            row.push(im);
        }
        row[0] = desired;
        pr.push(ConeKind::Soc, row);
    }
    match engine.solve(&pr) {
        ConicOutcome::Solved { x, .. } => {
            let mut amp: Vec<f64> = x[..n].iter().map(|&a| a.max(0.0) * sp).collect();
            // Pull interior-point overshoot back inside every budget.
            for ids in problem.nodes().values() {
                let used: f64 = ids.iter().map(|&v| amp[v] * amp[v] * problem.vars[v].block_energy).sum();
                if used > problem.budget {
                    let k = (problem.budget / used).sqrt();
                    for &v in ids {
                        amp[v] *= k;
                    }
                }
            }
            Ok(Some(amp))
        }
        ConicOutcome::Infeasible => Ok(None),
        ConicOutcome::Failed(_) => Ok(None),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BisectionConfig {
    /// Stopping gap relative to χ_upper (plain mode) or to the current
    /// upper end (warm mode).
    pub eps_rel: f64,
    pub max_iters: usize,
    /// Start from the SINR of an even power split and halve the ratio
    /// up/lo while it exceeds 2. Plain mode bisects [0, χ_upper].
    pub warm_start: bool,
}

impl Default for BisectionConfig {
    fn default() -> Self {
        BisectionConfig { eps_rel: 1e-3, max_iters: 200, warm_start: true }
    }
}

/// Every amplitude equal, as large as the tightest node allows: the RZF
/// directions unchanged. Returns the amplitudes and the target the SOC rows
/// certify for them.
pub fn even_split(problem: &AccessProblem) -> (Vec<f64>, f64) {
    let n = problem.vars.len();
    let alpha = problem
        .nodes()
        .values()
        .map(|ids| ids.iter().map(|&v| problem.vars[v].block_energy).sum::<f64>())
        .filter(|&e| e > 0.0)
        .map(|e| (problem.budget / e).sqrt())
        .fold(f64::INFINITY, f64::min);
    if !alpha.is_finite() {
        return (vec![0.0; n], 0.0);
    }
    let amp = vec![alpha; n];
    let chi = (0..problem.n_devices)
        .map(|u| {
            let mut re = 0.0;
            let mut interference = problem.noise;
            for s in &problem.streams {
                let x = problem.stream_value(u, s, &amp);
                if s.device == u {
                    re += x.re;
                } else {
                    interference += x.norm_sqr();
                }
            }
            re.max(0.0).powi(2) / interference
        })
        .fold(f64::INFINITY, f64::min);
    (amp, if chi.is_finite() { chi } else { 0.0 })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AccessSolution {
    pub amplitudes: Vec<f64>,
    pub sinr: Vec<f64>,
    /// Largest target certified feasible.
    pub chi_lower: f64,
    pub chi_upper: f64,
    pub iterations: usize,
    pub warning: Option<String>,
}

impl AccessSolution {
    pub fn min_sinr(&self) -> f64 {
        self.sinr.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

pub fn solve_access_maxmin(
    problem: &AccessProblem,
    cfg: &BisectionConfig,
    engine: &dyn ConicEngine,
) -> Result<AccessSolution> {
    problem.validate()?;
    if !(cfg.eps_rel > 0.0) || cfg.max_iters == 0 {
        return Err(Error::Config("bisection needs eps_rel > 0 and max_iters ≥ 1".into()));
    }
    let upper0 = chi_upper(problem);
    let n = problem.vars.len();
    let mut best = vec![0.0; n];
    let (mut lo, mut up) = (0.0, upper0);
    if cfg.warm_start {
        let (amp, chi0) = even_split(problem);
        if chi0 > 0.0 {
            best = amp;
            lo = chi0.min(upper0);
        }
    }
    let gap = |up: f64| if cfg.warm_start { cfg.eps_rel * up } else { cfg.eps_rel * upper0 };
    let mut iterations = 0;
    let mut warning = None;
    while up - lo > gap(up) {
        if iterations == cfg.max_iters {
            warning = Some(format!("bisection cap {} reached", cfg.max_iters));
            break;
        }
        iterations += 1;
        let chi = if cfg.warm_start && lo > 0.0 && up > 2.0 * lo { (lo * up).sqrt() } else { 0.5 * (lo + up) };
        match soc_feasible(problem, chi, engine)? {
            Some(a) => {
                lo = chi;
                best = a;
            }
            None => up = chi,
        }
    }
    let sinr = problem.sinr(&best);
    Ok(AccessSolution { amplitudes: best, sinr, chi_lower: lo, chi_upper: upper0, iterations, warning })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conic::ClarabelEngine;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    /// One node per device, device u sees its own node with `g[u][u]` and
    /// the other stream through `g[u][v]`.
    fn two_device(g: [[Complex64; 2]; 2], noise: f64, budget: f64) -> AccessProblem {
        AccessProblem {
            n_devices: 2,
            vars: vec![
                AccessVar { cluster: 0, node: NodeKey::Ap(0), device: 0, block_energy: 1.0 },
                AccessVar { cluster: 1, node: NodeKey::Ap(1), device: 1, block_energy: 1.0 },
            ],
            streams: vec![
                Stream { cluster: 0, device: 0, vars: vec![0] },
                Stream { cluster: 1, device: 1, vars: vec![1] },
            ],
            coef: vec![g[0].to_vec(), g[1].to_vec()],
            noise,
            budget,
        }
    }

    fn single(g: f64, noise: f64, budget: f64) -> AccessProblem {
        AccessProblem {
            n_devices: 1,
            vars: vec![AccessVar { cluster: 0, node: NodeKey::Ap(0), device: 0, block_energy: 1.0 }],
            streams: vec![Stream { cluster: 0, device: 0, vars: vec![0] }],
            coef: vec![vec![c(g, 0.0)]],
            noise,
            budget,
        }
    }

    #[test]
    fn rank_one_upper_bound() {
        let p = single(3e-4, 1e-12, 2.0);
        let want = 3e-4f64.powi(2) * 2.0 / 1e-12;
        assert!((chi_upper(&p) / want - 1.0).abs() < 1e-12);
        let p2 = single(3e-4, 1e-12, 4.0);
        assert!((chi_upper(&p2) / chi_upper(&p) - 2.0).abs() < 1e-12);
        assert_eq!(chi_upper(&single(0.0, 1e-12, 2.0)), 0.0);
    }

    #[test]
    fn rank_one_boundary() {
        let eng = ClarabelEngine::default();
        let p = single(3e-4, 1e-12, 2.0);
        let up = chi_upper(&p);
        assert!(soc_feasible(&p, 0.0, &eng).unwrap().is_some());
        assert!(soc_feasible(&p, 0.99 * up, &eng).unwrap().is_some());
        assert!(soc_feasible(&p, 1.01 * up, &eng).unwrap().is_none());
    }

    #[test]
    fn interference_free_targets_are_met() {
        let eng = ClarabelEngine::default();
        let z = c(0.0, 0.0);
        let p = two_device([[c(2e-4, 0.0), z], [z, c(1e-4, 0.0)]], 1e-12, 1.0);
        let chi = 0.5 * chi_upper(&p);
        let a = soc_feasible(&p, chi, &eng).unwrap().unwrap();
        for s in p.sinr(&a) {
            assert!(s >= chi * (1.0 - 1e-6));
        }
    }

    #[test]
    fn symmetric_pair_equal_sinr() {
        let eng = ClarabelEngine::default();
        let p = two_device([[c(1e-4, 0.0), c(2e-5, 1e-5)], [c(2e-5, 1e-5), c(1e-4, 0.0)]], 1e-12, 1.0);
        let sol = solve_access_maxmin(&p, &BisectionConfig::default(), &eng).unwrap();
        assert!((sol.sinr[0] / sol.sinr[1] - 1.0).abs() < 0.01);
        assert!(sol.min_sinr() >= sol.chi_lower * (1.0 - 1e-6));
    }

    #[test]
    fn iteration_count_and_budgets() {
        let eng = ClarabelEngine::default();
        let p = two_device([[c(1e-4, 0.0), c(3e-5, 0.0)], [c(1e-5, -2e-5), c(5e-5, 1e-6)]], 1e-12, 3.0);
        let cfg = BisectionConfig { warm_start: false, ..Default::default() };
        let sol = solve_access_maxmin(&p, &cfg, &eng).unwrap();
        let expect = (1.0 / cfg.eps_rel).log2().ceil() as usize;
        assert_eq!(sol.iterations, expect);
        for used in p.node_power(&sol.amplitudes).values() {
            assert!(*used <= p.budget * (1.0 + 1e-6));
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn coef() -> impl Strategy<Value = Complex64> {
            (-1.0..1.0f64, -1.0..1.0f64).prop_map(|(a, b)| c(a * 1e-4, b * 1e-4))
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(200))]

            #[test]
            fn feasibility_is_monotone(
                d0 in 1e-5..1e-4f64, d1 in 1e-5..1e-4f64,
                x in coef(), y in coef(),
                f1 in 0.05..1.0f64, f2 in 0.05..1.0f64,
            ) {
                let eng = ClarabelEngine::default();
                let p = two_device([[c(d0, 0.0), x], [y, c(d1, 0.0)]], 1e-12, 1.0);
                let up = chi_upper(&p);
                let (hi, lo) = (f1.max(f2) * up, f1.min(f2) * up);
                if soc_feasible(&p, hi, &eng).unwrap().is_some() {
                    prop_assert!(soc_feasible(&p, lo, &eng).unwrap().is_some());
                }
            }
        }
    }
}
