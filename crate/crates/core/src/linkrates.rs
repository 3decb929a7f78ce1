//! SINR and achievable-rate evaluation for the CPU→CAP, CAP→AP and access
//! links, straight from channels, precoders and a power allocation.

use std::collections::BTreeMap;
use std::fmt;

use num_complex::Complex64;
use serde::{Serialize, Serializer};

use crate::association::{ClusterAssignment, SubcarrierPartition};
use crate::channel::{ChannelSet, NodeKey};
use crate::precoding::{stacked_access_channel, PrecoderSet};
use crate::scenario::NetworkScenario;

/// A link rate in bit/s, or the sentinel for a link that does not exist or
/// is wired. The sentinel never enters float arithmetic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Rate {
    Finite(f64),
    Unbounded,
}

impl Rate {
    pub fn min(self, other: Rate) -> Rate {
        match (self, other) {
            (Rate::Unbounded, r) | (r, Rate::Unbounded) => r,
            (Rate::Finite(a), Rate::Finite(b)) => Rate::Finite(a.min(b)),
        }
    }

    /// Minimum of an iterator; empty gives the sentinel.
    pub fn min_of<I: IntoIterator<Item = Rate>>(it: I) -> Rate {
        it.into_iter().fold(Rate::Unbounded, Rate::min)
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            Rate::Finite(x) => Some(x),
            Rate::Unbounded => None,
        }
    }

    pub fn is_unbounded(self) -> bool {
        self == Rate::Unbounded
    }

    /// Finite value, or `cap` for the sentinel.
    pub fn or(self, cap: f64) -> f64 {
        self.finite().unwrap_or(cap)
    }

    pub fn scale(self, k: f64) -> Rate {
        match self {
            Rate::Finite(x) => Rate::Finite(x * k),
            Rate::Unbounded => Rate::Unbounded,
        }
    }
}

impl PartialOrd for Rate {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        use std::cmp::Ordering::*;
        match (self, other) {
            (Rate::Unbounded, Rate::Unbounded) => Some(Equal),
            (Rate::Unbounded, _) => Some(Greater),
            (_, Rate::Unbounded) => Some(Less),
            (Rate::Finite(a), Rate::Finite(b)) => a.partial_cmp(b),
        }
    }
}

impl fmt::Display for Rate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Rate::Finite(x) => write!(f, "{x}"),
            Rate::Unbounded => write!(f, "inf"),
        }
    }
}

impl Serialize for Rate {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Rate::Finite(x) => s.serialize_some(x),
            Rate::Unbounded => s.serialize_none(),
        }
    }
}

/// Powers in watts. Missing keys are zero. Gamma maps record the binary
/// activations; powers where gamma is 0 are already zeroed.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct PowerAllocation {
    /// p_{l,u}[m] keyed (l, u, m).
    pub cc_power: BTreeMap<(usize, usize, usize), f64>,
    /// p_{l,q,u}[m̄] keyed (l, q, u, m̄).
    pub ca_power: BTreeMap<(usize, usize, usize, usize), f64>,
    /// p_{l,k,u} keyed (l, serving node, u).
    pub ad_power: BTreeMap<(usize, NodeKey, usize), f64>,
    pub cc_gamma: BTreeMap<(usize, usize, usize), bool>,
    pub ca_gamma: BTreeMap<(usize, usize, usize, usize), bool>,
}

impl PowerAllocation {
    pub fn cc(&self, l: usize, u: usize, m: usize) -> f64 {
        self.cc_power.get(&(l, u, m)).copied().unwrap_or(0.0)
    }

    pub fn ca(&self, l: usize, q: usize, u: usize, m: usize) -> f64 {
        self.ca_power.get(&(l, q, u, m)).copied().unwrap_or(0.0)
    }

    pub fn ad(&self, l: usize, k: NodeKey, u: usize) -> f64 {
        self.ad_power.get(&(l, k, u)).copied().unwrap_or(0.0)
    }
}

/// Everything fixed while powers vary.
pub struct LinkContext<'a> {
    pub scenario: &'a NetworkScenario,
    pub channels: &'a ChannelSet,
    pub assignment: &'a ClusterAssignment,
    pub precoders: &'a PrecoderSet,
    pub partition: &'a SubcarrierPartition,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TierRates<K: Ord> {
    pub per_link: BTreeMap<K, f64>,
    pub per_device: Vec<Rate>,
}

fn log2_1p(x: f64) -> f64 {
    x.ln_1p() / std::f64::consts::LN_2
}

/// CPU→CAP rates. `si_var[l]` is the residual SI at CAP l (0 in TDD).
pub fn rate_cc(ctx: &LinkContext, alloc: &PowerAllocation, si_var: &[f64]) -> TierRates<(usize, usize)> {
    let a = ctx.assignment;
    let b = ctx.scenario.band.subcarrier_bandwidth();
    let noise = ctx.scenario.power.fronthaul_noise(&ctx.scenario.band);
    let mut per_link = BTreeMap::new();
    for (l, devs) in a.served_devices.iter().enumerate() {
        let cap = a.clusters[l].cap;
        for &u in devs {
            let mut bits = 0.0;
            for &m in &ctx.partition.m_cc {
                let h = &ctx.channels.thz(NodeKey::Cpu, cap)[m];
                let gain = |lp: usize| ctx.precoders.cc[m][lp].as_ref().map_or(0.0, |f| h.dotc(f).norm_sqr());
                let signal = alloc.cc(l, u, m) * gain(l);
                if signal == 0.0 {
                    continue;
                }
                let mut interference = si_var[l] + noise;
                for (lp, devs_p) in a.served_devices.iter().enumerate() {
                    if lp == l {
                        continue;
                    }
                    let p: f64 = devs_p.iter().map(|&up| alloc.cc(lp, up, m)).sum();
                    if p > 0.0 {
                        interference += p * gain(lp);
                    }
                }
                bits += log2_1p(signal / interference);
            }
            per_link.insert((l, u), b * bits);
        }
    }
    let per_device = a
        .serving_map
        .iter()
        .enumerate()
        .map(|(u, g)| Rate::min_of(g.iter().map(|&l| Rate::Finite(per_link[&(l, u)]))))
        .collect();
    TierRates { per_link, per_device }
}

/// CAP→AP rates keyed (l, q, u); singleton clusters contribute the sentinel.
pub fn rate_ca(ctx: &LinkContext, alloc: &PowerAllocation) -> TierRates<(usize, usize, usize)> {
    let a = ctx.assignment;
    let b = ctx.scenario.band.subcarrier_bandwidth();
    let noise = ctx.scenario.power.fronthaul_noise(&ctx.scenario.band);
    let targets: Vec<Vec<usize>> = a.clusters.iter().map(|c| c.targets()).collect();
    let mut per_link = BTreeMap::new();
    for (l, c) in a.clusters.iter().enumerate() {
        for (qi, &q) in targets[l].iter().enumerate() {
            for &u in &a.served_devices[l] {
                let mut bits = 0.0;
                for &m in &ctx.partition.m_ca {
                    let h = &ctx.channels.thz(c.cap, NodeKey::Ap(q))[m];
                    let w = &ctx.precoders.ca[l][m];
                    let signal = alloc.ca(l, q, u, m) * h.dotc(&w[qi]).norm_sqr();
                    if signal == 0.0 {
                        continue;
                    }
                    let mut interference = noise;
                    for (qj, &qp) in targets[l].iter().enumerate() {
                        if qp == q {
                            continue;
                        }
                        let p: f64 = a.served_devices[l].iter().map(|&up| alloc.ca(l, qp, up, m)).sum();
                        if p > 0.0 {
                            interference += p * h.dotc(&w[qj]).norm_sqr();
                        }
                    }
                    for (lp, cp) in a.clusters.iter().enumerate() {
                        if lp == l || targets[lp].is_empty() {
                            continue;
                        }
                        let hp = &ctx.channels.thz(cp.cap, NodeKey::Ap(q))[m];
                        for (qj, &qp) in targets[lp].iter().enumerate() {
                            let p: f64 = a.served_devices[lp].iter().map(|&up| alloc.ca(lp, qp, up, m)).sum();
                            if p > 0.0 {
                                interference += p * hp.dotc(&ctx.precoders.ca[lp][m][qj]).norm_sqr();
                            }
                        }
                    }
                    bits += log2_1p(signal / interference);
                }
                per_link.insert((l, q, u), b * bits);
            }
        }
    }
    let per_device = a
        .serving_map
        .iter()
        .enumerate()
        .map(|(u, g)| {
            Rate::min_of(g.iter().flat_map(|&l| targets[l].iter().map(move |&q| (l, q))).map(|(l, q)| Rate::Finite(per_link[&(l, q, u)])))
        })
        .collect();
    TierRates { per_link, per_device }
}

/// h_{l,u}ᴴ P̃_{l,u'} v_{l,u'}: the stream of device `up` from cluster `l` as
/// seen by device `u`.
fn access_stream(ctx: &LinkContext, alloc: &PowerAllocation, l: usize, up: usize, u: usize) -> Complex64 {
    let a = ctx.assignment;
    let j = a.served_devices[l].iter().position(|&d| d == up).expect("device served by cluster");
    let nodes = a.clusters[l].serving_nodes();
    let h = stacked_access_channel(ctx.channels, &nodes, u);
    let mut pv = ctx.precoders.ad[l][j].clone();
    let block = pv.len() / nodes.len();
    for (i, &k) in nodes.iter().enumerate() {
        let amp = alloc.ad(l, k, up).sqrt();
        pv.rows_mut(i * block, block).scale_mut(amp);
    }
    h.dotc(&pv)
}

/// Per-device access SINR.
pub fn sinr_ad(ctx: &LinkContext, alloc: &PowerAllocation) -> Vec<f64> {
    let a = ctx.assignment;
    let noise = ctx.scenario.power.access_noise(&ctx.scenario.band);
    (0..a.serving_map.len())
        .map(|u| {
            let g = &a.serving_map[u];
            let desired: Complex64 = g.iter().map(|&l| access_stream(ctx, alloc, l, u, u)).sum();
            let mut interference = noise;
            for (l, devs) in a.served_devices.iter().enumerate() {
                for &up in devs {
                    if g.contains(&l) && up == u {
                        continue;
                    }
                    interference += access_stream(ctx, alloc, l, up, u).norm_sqr();
                }
            }
            desired.norm_sqr() / interference
        })
        .collect()
}

pub fn rate_ad(ctx: &LinkContext, alloc: &PowerAllocation) -> Vec<f64> {
    let bw = ctx.scenario.band.access_bandwidth_hz;
    sinr_ad(ctx, alloc).into_iter().map(|s| bw * log2_1p(s)).collect()
}

/// Per-device min of the three links and the min over devices.
pub fn end_to_end(cc: &[Rate], ca: &[Rate], ad: &[Rate]) -> (Vec<Rate>, Rate) {
    let per: Vec<Rate> = cc.iter().zip(ca).zip(ad).map(|((&x, &y), &z)| x.min(y).min(z)).collect();
    let worst = Rate::min_of(per.iter().copied());
    (per, worst)
}

/// Frame bookkeeping attached to a report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum FrameInfo {
    Mdd { n_clusters: usize, m_cc: usize, m_ca: usize },
    Tdd { n_clusters: usize, tau_cc: f64, tau_ca: f64, tau_ad: f64, tau_gp: f64 },
    SingleTier { n_clusters: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateReport {
    pub scheme: String,
    pub c_cc: Vec<Rate>,
    pub c_ca: Vec<Rate>,
    pub c_ad: Vec<Rate>,
    pub c_end: Vec<Rate>,
    pub frame: FrameInfo,
}

impl RateReport {
    pub fn new(scheme: &str, c_cc: Vec<Rate>, c_ca: Vec<Rate>, c_ad: Vec<Rate>, frame: FrameInfo) -> Self {
        let (c_end, _) = end_to_end(&c_cc, &c_ca, &c_ad);
        RateReport { scheme: scheme.to_string(), c_cc, c_ca, c_ad, c_end, frame }
    }

    pub fn min_rate(&self) -> Rate {
        Rate::min_of(self.c_end.iter().copied())
    }

    /// Median per-device end-to-end rate, sentinel mapped to `cap`.
    pub fn median(&self, cap: f64) -> f64 {
        let mut v: Vec<f64> = self.c_end.iter().map(|r| r.or(cap)).collect();
        v.sort_by(f64::total_cmp);
        let n = v.len();
        if n == 0 {
            return 0.0;
        }
        if n % 2 == 1 {
            v[n / 2]
        } else {
            0.5 * (v[n / 2 - 1] + v[n / 2])
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::association::Cluster;
    use crate::channel::CVec;
    use crate::scenario::{generate_scenario, ScenarioConfig};

    #[test]
    fn rate_min_handles_sentinel() {
        assert_eq!(Rate::Finite(3.0).min(Rate::Unbounded), Rate::Finite(3.0));
        assert_eq!(Rate::Unbounded.min(Rate::Unbounded), Rate::Unbounded);
        assert_eq!(Rate::min_of([]), Rate::Unbounded);
        assert!(Rate::Unbounded > Rate::Finite(1e300));
        let (per, worst) = end_to_end(&[Rate::Finite(3.0)], &[Rate::Finite(2.0)], &[Rate::Finite(5.0)]);
        assert_eq!(per[0], Rate::Finite(2.0));
        assert_eq!(worst, Rate::Finite(2.0));
        let (per, _) = end_to_end(&[Rate::Unbounded], &[Rate::Finite(4.0)], &[Rate::Finite(7.0)]);
        assert_eq!(per[0], Rate::Finite(4.0));
        let (perm, _) = end_to_end(&[Rate::Finite(5.0)], &[Rate::Finite(3.0)], &[Rate::Finite(2.0)]);
        assert_eq!(perm[0], Rate::Finite(2.0));
    }

    #[test]
    fn median_midpoint() {
        let r = RateReport::new(
            "x",
            vec![Rate::Unbounded; 4],
            vec![Rate::Unbounded; 4],
            [1.0, 2.0, 3.0, 4.0].iter().map(|&x| Rate::Finite(x)).collect(),
            FrameInfo::SingleTier { n_clusters: 1 },
        );
        assert_eq!(r.median(0.0), 2.5);
    }

    /// Hand-built instance: scalar-like channels where every inner product is
    /// chosen by construction.
    struct Toy {
        scenario: NetworkScenario,
        channels: ChannelSet,
    }

    fn toy() -> Toy {
        let mut cfg = ScenarioConfig::default();
        cfg.n_aps = 4;
        cfg.n_devices = 2;
        cfg.band.n_fronthaul_subcarriers = 2;
        let scenario = generate_scenario(&cfg, 11).unwrap();
        let channels = ChannelSet::generate(&scenario, &[]).unwrap();
        Toy { scenario, channels }
    }

    fn ctx_parts(t: &Toy, clusters: Vec<Cluster>, serving: Vec<Vec<usize>>) -> (ClusterAssignment, PrecoderSet) {
        let mut a = ClusterAssignment::from_clusters(clusters, serving.len());
        for (u, g) in serving.iter().enumerate() {
            for &l in g {
                a.serving_map[u].push(l);
                a.served_devices[l].push(u);
            }
        }
        let p = PrecoderSet::build(&t.scenario, &t.channels, &a, &Default::default()).unwrap();
        (a, p)
    }

    #[test]
    fn zero_power_gives_zero_rates() {
        let t = toy();
        let (a, p) = ctx_parts(
            &t,
            vec![Cluster { cap: NodeKey::Ap(0), members: vec![0, 1] }, Cluster { cap: NodeKey::Ap(2), members: vec![2, 3] }],
            vec![vec![0], vec![1]],
        );
        let part = SubcarrierPartition { m_cc: vec![0], m_ca: vec![1] };
        let ctx = LinkContext { scenario: &t.scenario, channels: &t.channels, assignment: &a, precoders: &p, partition: &part };
        let alloc = PowerAllocation::default();
        assert!(rate_cc(&ctx, &alloc, &[0.0, 0.0]).per_device.iter().all(|r| *r == Rate::Finite(0.0)));
        assert!(rate_ca(&ctx, &alloc).per_device.iter().all(|r| *r == Rate::Finite(0.0)));
        assert!(rate_ad(&ctx, &alloc).iter().all(|&r| r == 0.0));
    }

    #[test]
    fn cc_single_link_hand_value() {
        let t = toy();
        let (a, p) = ctx_parts(&t, vec![Cluster { cap: NodeKey::Ap(0), members: vec![0, 1, 2, 3] }], vec![vec![0], vec![0]]);
        let part = SubcarrierPartition { m_cc: vec![0], m_ca: vec![1] };
        let ctx = LinkContext { scenario: &t.scenario, channels: &t.channels, assignment: &a, precoders: &p, partition: &part };
        let h = &t.channels.thz(NodeKey::Cpu, NodeKey::Ap(0))[0];
        let g = h.dotc(p.cc[0][0].as_ref().unwrap()).norm_sqr();
        // Single target: RZF = MRT, so |hᴴf|² = ‖h‖².
        assert!((g / h.norm_squared() - 1.0).abs() < 1e-12);
        let noise = t.scenario.power.fronthaul_noise(&t.scenario.band);
        let mut alloc = PowerAllocation::default();
        alloc.cc_power.insert((0, 0, 0), 3.0 * noise / g);
        let r = rate_cc(&ctx, &alloc, &[0.0]);
        let b = t.scenario.band.subcarrier_bandwidth();
        assert!((r.per_link[&(0, 0)] / (2.0 * b) - 1.0).abs() < 1e-12);
        assert_eq!(r.per_link[&(0, 1)], 0.0);
        let r_si = rate_cc(&ctx, &alloc, &[noise]);
        assert!(r_si.per_link[&(0, 0)] < r.per_link[&(0, 0)]);
        assert!((r_si.per_link[&(0, 0)] / b - (1.0f64 + 1.5).log2()).abs() < 1e-12);
    }

    #[test]
    fn ca_singletons_are_unbounded() {
        let t = toy();
        let (a, p) = ctx_parts(
            &t,
            (0..4).map(|q| Cluster { cap: NodeKey::Ap(q), members: vec![q] }).collect(),
            vec![vec![0], vec![1, 2]],
        );
        let part = SubcarrierPartition { m_cc: vec![0, 1], m_ca: vec![] };
        let ctx = LinkContext { scenario: &t.scenario, channels: &t.channels, assignment: &a, precoders: &p, partition: &part };
        let r = rate_ca(&ctx, &PowerAllocation::default());
        assert!(r.per_device.iter().all(|r| r.is_unbounded()));
    }

    #[test]
    fn ca_two_ap_hand_value() {
        // One cluster, CAP ap0, targets ap1 and ap2, device 0 on subcarrier
        // 0 to ap1 and device 1 on subcarrier 1 to ap2: no interference.
        let t = toy();
        let (a, p) = ctx_parts(&t, vec![Cluster { cap: NodeKey::Ap(0), members: vec![0, 1, 2] }, Cluster { cap: NodeKey::Ap(3), members: vec![3] }], vec![vec![0], vec![0]]);
        let part = SubcarrierPartition { m_cc: vec![], m_ca: vec![0, 1] };
        let ctx = LinkContext { scenario: &t.scenario, channels: &t.channels, assignment: &a, precoders: &p, partition: &part };
        let noise = t.scenario.power.fronthaul_noise(&t.scenario.band);
        let b = t.scenario.band.subcarrier_bandwidth();
        let g = |q: usize, qi: usize, m: usize| t.channels.thz(NodeKey::Ap(0), NodeKey::Ap(q))[m].dotc(&p.ca[0][m][qi]).norm_sqr();
        let mut alloc = PowerAllocation::default();
        alloc.ca_power.insert((0, 1, 0, 0), 0.5);
        alloc.ca_power.insert((0, 2, 1, 1), 0.25);
        let r = rate_ca(&ctx, &alloc);
        assert!((r.per_link[&(0, 1, 0)] - b * (1.0 + 0.5 * g(1, 0, 0) / noise).log2()).abs() < 1e-9 * r.per_link[&(0, 1, 0)]);
        assert!((r.per_link[&(0, 2, 1)] - b * (1.0 + 0.25 * g(2, 1, 1) / noise).log2()).abs() < 1e-9 * r.per_link[&(0, 2, 1)]);
        // Each device needs both APs, and each has power on only one.
        assert_eq!(r.per_device[0], Rate::Finite(0.0));
        // Same subcarrier for both: ap2's stream interferes at ap1.
        alloc.ca_power.insert((0, 2, 1, 0), 0.25);
        let r2 = rate_ca(&ctx, &alloc);
        let sinr = 0.5 * g(1, 0, 0) / (noise + 0.25 * g(1, 1, 0));
        assert!((r2.per_link[&(0, 1, 0)] - b * (1.0 + sinr).log2()).abs() < 1e-9 * r2.per_link[&(0, 1, 0)]);
    }

    #[test]
    fn access_two_cluster_hand_value() {
        let t = toy();
        let (a, p) = ctx_parts(
            &t,
            vec![Cluster { cap: NodeKey::Ap(0), members: vec![0, 1] }, Cluster { cap: NodeKey::Ap(2), members: vec![2, 3] }],
            vec![vec![0], vec![1]],
        );
        let part = SubcarrierPartition { m_cc: vec![0], m_ca: vec![1] };
        let ctx = LinkContext { scenario: &t.scenario, channels: &t.channels, assignment: &a, precoders: &p, partition: &part };
        let mut alloc = PowerAllocation::default();
        let pw = [(0, NodeKey::Ap(0), 0, 0.3), (0, NodeKey::Ap(1), 0, 0.1), (1, NodeKey::Ap(2), 1, 0.2), (1, NodeKey::Ap(3), 1, 0.4)];
        for &(l, k, u, x) in &pw {
            alloc.ad_power.insert((l, k, u), x);
        }
        // Independent evaluation block by block.
        let term = |l: usize, u_tx: usize, u_rx: usize| -> Complex64 {
            let v: &CVec = &p.ad[l][0];
            let nodes = a.clusters[l].serving_nodes();
            nodes
                .iter()
                .enumerate()
                .map(|(i, &k)| {
                    let h = &t.channels.access(k, u_rx).gain_vector;
                    let blk = v.rows(i * 4, 4).into_owned();
                    h.dotc(&blk) * alloc.ad(l, k, u_tx).sqrt()
                })
                .sum()
        };
        let noise = t.scenario.power.access_noise(&t.scenario.band);
        let s0 = term(0, 0, 0).norm_sqr() / (term(1, 1, 0).norm_sqr() + noise);
        let s1 = term(1, 1, 1).norm_sqr() / (term(0, 0, 1).norm_sqr() + noise);
        let got = sinr_ad(&ctx, &alloc);
        assert!((got[0] / s0 - 1.0).abs() < 1e-10);
        assert!((got[1] / s1 - 1.0).abs() < 1e-10);
        // Silencing the other device never lowers a rate.
        let mut quiet = alloc.clone();
        quiet.ad_power.retain(|k, _| k.2 == 0);
        assert!(rate_ad(&ctx, &quiet)[0] >= rate_ad(&ctx, &alloc)[0]);
    }
}
