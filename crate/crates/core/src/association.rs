//! AP clustering (dynamic, static and integrated), device selection and the
//! greedy split of fronthaul subcarriers between the two THz tiers.

use std::collections::BTreeSet;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::channel::{ChannelSet, NodeKey};
use crate::error::{Error, Result};
use crate::scenario::Position;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum ClusteringMethod {
    Dc,
    Sc,
    Idsc,
}

impl std::str::FromStr for ClusteringMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "DC" => Ok(ClusteringMethod::Dc),
            "SC" => Ok(ClusteringMethod::Sc),
            "IDSC" => Ok(ClusteringMethod::Idsc),
            _ => Err(Error::Config(format!("unknown clustering method {s}"))),
        }
    }
}

/// Cluster counts static clustering can lay out as a grid.
pub const GRID_SIZES: [usize; 5] = [4, 8, 12, 16, 20];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cluster {
    pub cap: NodeKey,
    /// Member AP indices, ascending. Empty only for a static-clustering cell
    /// without APs.
    pub members: Vec<usize>,
}

impl Cluster {
    /// APs the CAP feeds over the CAP→AP tier.
    pub fn targets(&self) -> Vec<usize> {
        self.members.iter().copied().filter(|&q| NodeKey::Ap(q) != self.cap).collect()
    }

    /// A cluster without CAP→AP links; its CAP talks to devices directly.
    pub fn is_singleton(&self) -> bool {
        self.targets().is_empty()
    }

    /// Nodes that transmit on the access link.
    pub fn serving_nodes(&self) -> Vec<NodeKey> {
        if self.members.is_empty() {
            vec![self.cap]
        } else {
            self.members.iter().map(|&q| NodeKey::Ap(q)).collect()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    pub clusters: Vec<Cluster>,
    /// G_u: clusters serving each device.
    pub serving_map: Vec<Vec<usize>>,
    /// U_l: devices served by each cluster.
    pub served_devices: Vec<Vec<usize>>,
}

impl ClusterAssignment {
    pub fn from_clusters(clusters: Vec<Cluster>, n_devices: usize) -> Self {
        let l = clusters.len();
        ClusterAssignment { clusters, serving_map: vec![Vec::new(); n_devices], served_devices: vec![Vec::new(); l] }
    }

    pub fn n_clusters(&self) -> usize {
        self.clusters.len()
    }

    /// Every broken structural invariant, as text.
    pub fn violations(&self, n_aps: usize, u_max: usize, c_max: usize) -> Vec<String> {
        let mut v = Vec::new();
        let mut seen = vec![0usize; n_aps];
        for (l, c) in self.clusters.iter().enumerate() {
            for &q in &c.members {
                if q >= n_aps {
                    v.push(format!("cluster {l} names unknown AP {q}"));
                } else {
                    seen[q] += 1;
                }
            }
            if let NodeKey::Ap(q) = c.cap {
                if !c.members.contains(&q) {
                    v.push(format!("cluster {l} CAP ap{q} is not a member"));
                }
            }
        }
        for (q, n) in seen.iter().enumerate() {
            if *n != 1 {
                v.push(format!("AP {q} belongs to {n} clusters"));
            }
        }
        for (l, us) in self.served_devices.iter().enumerate() {
            if us.len() > u_max {
                v.push(format!("cluster {l} serves {} devices", us.len()));
            }
            for &u in us {
                if !self.serving_map.get(u).is_some_and(|g| g.contains(&l)) {
                    v.push(format!("cluster {l} lists device {u} but not vice versa"));
                }
            }
        }
        for (u, g) in self.serving_map.iter().enumerate() {
            if g.len() > c_max {
                v.push(format!("device {u} has {} clusters", g.len()));
            }
            for &l in g {
                if !self.served_devices.get(l).is_some_and(|s| s.contains(&u)) {
                    v.push(format!("device {u} lists cluster {l} but not vice versa"));
                }
            }
        }
        v
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubcarrierPartition {
    pub m_cc: Vec<usize>,
    pub m_ca: Vec<usize>,
}

impl SubcarrierPartition {
    pub fn full_band(n: usize) -> Self {
        SubcarrierPartition { m_cc: (0..n).collect(), m_ca: (0..n).collect() }
    }

    pub fn is_orthogonal_cover(&self, n: usize) -> bool {
        let cc: BTreeSet<_> = self.m_cc.iter().collect();
        let ca: BTreeSet<_> = self.m_ca.iter().collect();
        cc.len() == self.m_cc.len()
            && ca.len() == self.m_ca.len()
            && cc.is_disjoint(&ca)
            && cc.len() + ca.len() == n
            && cc.iter().chain(ca.iter()).all(|&&m| m < n)
    }
}

/// |α^LoS| magnitudes used for CAP selection.
#[derive(Debug, Clone)]
pub struct LosGains {
    pub cpu: Vec<f64>,
    pub pair: DMatrix<f64>,
}

impl LosGains {
    pub fn from_channels(channels: &ChannelSet, n_aps: usize) -> Self {
        let cpu = (0..n_aps).map(|q| channels.los_amplitude(NodeKey::Cpu, NodeKey::Ap(q))).collect();
        let pair = DMatrix::from_fn(n_aps, n_aps, |a, b| {
            if a == b {
                0.0
            } else {
                channels.los_amplitude(NodeKey::Ap(a), NodeKey::Ap(b))
            }
        });
        LosGains { cpu, pair }
    }

    /// Ψ_q within `members`.
    pub fn psi(&self, q: usize, members: &[usize]) -> f64 {
        self.cpu[q] + members.iter().filter(|&&p| p != q).map(|&p| self.pair[(q, p)]).sum::<f64>()
    }

    /// CAP = argmax Ψ_q, lowest index on ties.
    pub fn select_cap(&self, members: &[usize]) -> usize {
        let mut best = members[0];
        let mut best_psi = self.psi(best, members);
        for &q in &members[1..] {
            let p = self.psi(q, members);
            if p > best_psi {
                best = q;
                best_psi = p;
            }
        }
        best
    }
}

/// Result of a PAM run: medoid indices, per-point labels and the cost after
/// the build phase and after every accepted swap.
#[derive(Debug, Clone)]
pub struct Pam {
    pub medoids: Vec<usize>,
    pub labels: Vec<usize>,
    pub cost_trace: Vec<f64>,
}

fn dist(a: &(f64, f64), b: &(f64, f64)) -> f64 {
    ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt()
}

fn pam_cost(points: &[(f64, f64)], medoids: &[usize]) -> f64 {
    points
        .iter()
        .map(|p| medoids.iter().map(|&m| dist(p, &points[m])).fold(f64::INFINITY, f64::min))
        .sum()
}

/// K-medoids by PAM build and best-improvement swap on Euclidean distance.
pub fn kmedoids(points: &[(f64, f64)], k: usize, max_swaps: usize) -> Pam {
    let n = points.len();
    assert!(k >= 1 && k <= n, "need 1 <= k <= n");
    let mut medoids: Vec<usize> = Vec::with_capacity(k);
    while medoids.len() < k {
        let mut best = (f64::INFINITY, 0);
        for c in 0..n {
            if medoids.contains(&c) {
                continue;
            }
            medoids.push(c);
            let cost = pam_cost(points, &medoids);
            medoids.pop();
            if cost < best.0 {
                best = (cost, c);
            }
        }
        medoids.push(best.1);
    }
    let mut cost = pam_cost(points, &medoids);
    let mut cost_trace = vec![cost];
    for _ in 0..max_swaps {
        let mut best = (cost, usize::MAX, 0);
        for i in 0..k {
            for h in 0..n {
                if medoids.contains(&h) {
                    continue;
                }
                let old = medoids[i];
                medoids[i] = h;
                let c = pam_cost(points, &medoids);
                medoids[i] = old;
                if c < best.0 - 1e-12 * cost.max(1.0) {
                    best = (c, i, h);
                }
            }
        }
        if best.1 == usize::MAX {
            break;
        }
        medoids[best.1] = best.2;
        cost = best.0;
        cost_trace.push(cost);
    }
    let labels = points
        .iter()
        .map(|p| {
            let mut best = 0;
            for j in 1..k {
                if dist(p, &points[medoids[j]]) < dist(p, &points[medoids[best]]) {
                    best = j;
                }
            }
            best
        })
        .collect();
    Pam { medoids, labels, cost_trace }
}

fn xy(p: &Position) -> (f64, f64) {
    (p.x, p.y)
}

fn sort_clusters(mut clusters: Vec<Cluster>) -> Vec<Cluster> {
    clusters.sort_by_key(|c| c.members.first().copied().unwrap_or(usize::MAX));
    clusters
}

/// Dynamic clustering: PAM on the AP floor coordinates, then the CAP of each
/// cluster maximizes Ψ_q. Clusters are ordered by their lowest AP index.
pub fn cluster_dc(ap_positions: &[Position], gains: &LosGains, l: usize, n_devices: usize) -> Result<ClusterAssignment> {
    let q = ap_positions.len();
    if l == 0 || l > q {
        return Err(Error::InvalidArgument(format!("cluster count {l} outside 1..={q}")));
    }
    let pts: Vec<_> = ap_positions.iter().map(xy).collect();
    let pam = kmedoids(&pts, l, 100);
    let mut groups = vec![Vec::new(); l];
    for (i, &lab) in pam.labels.iter().enumerate() {
        groups[lab].push(i);
    }
    let clusters = groups
        .into_iter()
        .map(|members| Cluster { cap: NodeKey::Ap(gains.select_cap(&members)), members })
        .collect();
    Ok(ClusterAssignment::from_clusters(sort_clusters(clusters), n_devices))
}

/// Grid layout (rows, cols) for a supported static cluster count.
pub fn grid_shape(grid_l: usize) -> Result<(usize, usize)> {
    match grid_l {
        4 => Ok((2, 2)),
        8 => Ok((2, 4)),
        12 => Ok((3, 4)),
        16 => Ok((4, 4)),
        20 => Ok((4, 5)),
        _ => Err(Error::InvalidArgument(format!("unsupported grid size {grid_l}; use one of {GRID_SIZES:?}"))),
    }
}

/// Sub-area containing (x, y); points on an edge go to the lower index.
pub fn grid_cell(area: (f64, f64), grid_l: usize, x: f64, y: f64) -> Result<usize> {
    let (rows, cols) = grid_shape(grid_l)?;
    let (w, h) = (area.0 / cols as f64, area.1 / rows as f64);
    let idx = |v: f64, step: f64, n: usize| (((v / step).ceil() as i64 - 1).max(0) as usize).min(n - 1);
    Ok(idx(y, h, rows) * cols + idx(x, w, cols))
}

/// Synthetic CAP nodes at the centers of the sub-areas.
pub fn grid_cap_nodes(area: (f64, f64), grid_l: usize, height: f64) -> Result<Vec<(NodeKey, Position)>> {
    let (rows, cols) = grid_shape(grid_l)?;
    let (w, h) = (area.0 / cols as f64, area.1 / rows as f64);
    Ok((0..rows * cols)
        .map(|cell| {
            let (r, c) = (cell / cols, cell % cols);
            let p = Position::new((c as f64 + 0.5) * w, (r as f64 + 0.5) * h, height);
            (NodeKey::GridCap { grid: grid_l, cell }, p)
        })
        .collect())
}

fn grid_members(area: (f64, f64), grid_l: usize, ap_positions: &[Position]) -> Result<Vec<Vec<usize>>> {
    let (rows, cols) = grid_shape(grid_l)?;
    let mut cells = vec![Vec::new(); rows * cols];
    for (q, p) in ap_positions.iter().enumerate() {
        cells[grid_cell(area, grid_l, p.x, p.y)?].push(q);
    }
    Ok(cells)
}

/// Static clustering: one cluster per sub-area, each fed by a synthetic CAP
/// at the sub-area center. Cells without APs are kept; their CAP serves
/// devices directly.
pub fn cluster_sc(area: (f64, f64), grid_l: usize, ap_positions: &[Position], n_devices: usize) -> Result<ClusterAssignment> {
    let clusters = grid_members(area, grid_l, ap_positions)?
        .into_iter()
        .enumerate()
        .map(|(cell, members)| Cluster { cap: NodeKey::GridCap { grid: grid_l, cell }, members })
        .collect();
    Ok(ClusterAssignment::from_clusters(clusters, n_devices))
}

/// Integrated clustering: static membership, dynamic CAP choice. Returns the
/// assignment and the indices of the empty cells that were dropped.
pub fn cluster_idsc(
    area: (f64, f64),
    grid_l: usize,
    ap_positions: &[Position],
    gains: &LosGains,
    n_devices: usize,
) -> Result<(ClusterAssignment, Vec<usize>)> {
    let mut dropped = Vec::new();
    let mut clusters = Vec::new();
    for (cell, members) in grid_members(area, grid_l, ap_positions)?.into_iter().enumerate() {
        if members.is_empty() {
            dropped.push(cell);
        } else {
            clusters.push(Cluster { cap: NodeKey::Ap(gains.select_cap(&members)), members });
        }
    }
    Ok((ClusterAssignment::from_clusters(clusters, n_devices), dropped))
}

/// v_{l,u} = Σ over the cluster's access nodes of ‖h̃‖².
pub fn cluster_access_gains(assignment: &ClusterAssignment, channels: &ChannelSet, n_devices: usize) -> DMatrix<f64> {
    DMatrix::from_fn(assignment.n_clusters(), n_devices, |l, u| {
        assignment.clusters[l]
            .serving_nodes()
            .iter()
            .map(|&k| channels.access(k, u).gain_vector.norm_squared())
            .sum()
    })
}

/// Gain-ranked device selection. Each device first joins its strongest
/// cluster with spare capacity; afterwards the device with the weakest total
/// gain repeatedly adds its strongest remaining cluster until no device can.
pub fn select_devices(
    assignment: &ClusterAssignment,
    gains: &DMatrix<f64>,
    u_max: usize,
    c_max: usize,
) -> Result<ClusterAssignment> {
    let (l_count, u_count) = (gains.nrows(), gains.ncols());
    let mut out = ClusterAssignment::from_clusters(assignment.clusters.clone(), u_count);
    let best_open = |out: &ClusterAssignment, u: usize| -> Option<usize> {
        let mut best: Option<usize> = None;
        for l in 0..l_count {
            if out.served_devices[l].len() >= u_max || out.serving_map[u].contains(&l) {
                continue;
            }
            if best.map_or(true, |b| gains[(l, u)] > gains[(b, u)]) {
                best = Some(l);
            }
        }
        best
    };
    let mut uncovered = Vec::new();
    for u in 0..u_count {
        if c_max == 0 {
            uncovered.push(u);
            continue;
        }
        match best_open(&out, u) {
            Some(l) => {
                out.serving_map[u].push(l);
                out.served_devices[l].push(u);
            }
            None => uncovered.push(u),
        }
    }
    if !uncovered.is_empty() {
        return Err(Error::Unservable { uncovered });
    }
    loop {
        let total = |u: usize| out.serving_map[u].iter().map(|&l| gains[(l, u)]).sum::<f64>();
        let mut pick: Option<(usize, usize)> = None;
        for u in 0..u_count {
            if out.serving_map[u].len() >= c_max {
                continue;
            }
            if let Some(l) = best_open(&out, u) {
                if pick.map_or(true, |(pu, _)| total(u) < total(pu)) {
                    pick = Some((u, l));
                }
            }
        }
        match pick {
            Some((u, l)) => {
                out.serving_map[u].push(l);
                out.served_devices[l].push(u);
            }
            None => break,
        }
    }
    for g in out.serving_map.iter_mut().chain(out.served_devices.iter_mut()) {
        g.sort_unstable();
    }
    Ok(out)
}

/// w[l][m] = Σ_{q ∈ targets(l)} ‖h_{CAP_l,q}[m]‖², the MRT gain seen by the
/// CAP→AP tier.
pub fn ca_subcarrier_gains(assignment: &ClusterAssignment, channels: &ChannelSet) -> Vec<Vec<f64>> {
    assignment
        .clusters
        .iter()
        .map(|c| {
            let mut w = vec![0.0; channels.n_subcarriers];
            for q in c.targets() {
                for (m, h) in channels.thz(c.cap, NodeKey::Ap(q)).iter().enumerate() {
                    w[m] += h.norm_squared();
                }
            }
            w
        })
        .collect()
}

/// Greedy CAP→AP-first subcarrier split. CAPs that relay to at least one AP
/// and serve at least one device take turns in cluster order, each taking
/// its best unused subcarrier, until `target_ca_size` are taken; the rest go
/// to the CPU→CAP tier.
pub fn assign_subcarriers(
    assignment: &ClusterAssignment,
    ca_gains: &[Vec<f64>],
    n_subcarriers: usize,
    target_ca_size: usize,
) -> SubcarrierPartition {
    let target = target_ca_size.min(n_subcarriers);
    let active: Vec<usize> = (0..assignment.n_clusters())
        .filter(|&l| !assignment.clusters[l].is_singleton() && !assignment.served_devices[l].is_empty())
        .collect();
    let mut used = vec![false; n_subcarriers];
    let mut m_ca = Vec::with_capacity(target);
    let mut turn = 0;
    while m_ca.len() < target {
        let w = active.get(turn % active.len().max(1)).map(|&l| &ca_gains[l]);
        let mut best: Option<usize> = None;
        for m in (0..n_subcarriers).filter(|&m| !used[m]) {
            let g = w.map_or(0.0, |w| w[m]);
            if best.map_or(true, |b| g > w.map_or(0.0, |w| w[b])) {
                best = Some(m);
            }
        }
        let m = best.expect("target never exceeds the band");
        used[m] = true;
        m_ca.push(m);
        turn += 1;
    }
    m_ca.sort_unstable();
    let m_cc = (0..n_subcarriers).filter(|&m| !used[m]).collect();
    SubcarrierPartition { m_cc, m_ca }
}


#[cfg(test)]
mod props {
    use super::*;
    use proptest::prelude::*;

    fn points(n: std::ops::Range<usize>) -> impl Strategy<Value = Vec<(f64, f64)>> {
        prop::collection::vec((0.0..100.0f64, 0.0..100.0f64), n)
    }

    fn singletons(l: usize, u: usize) -> ClusterAssignment {
        ClusterAssignment::from_clusters((0..l).map(|q| Cluster { cap: NodeKey::Ap(q), members: vec![q] }).collect(), u)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(256))]

        #[test]
        fn pam_cost_never_increases(pts in points(3..20), k in 1usize..4) {
            let k = k.min(pts.len());
            let pam = kmedoids(&pts, k, 100);
            for w in pam.cost_trace.windows(2) {
                prop_assert!(w[1] <= w[0] + 1e-9);
            }
            prop_assert!((pam_cost(&pts, &pam.medoids) - pam.cost_trace.last().unwrap()).abs() < 1e-9);
        }

        #[test]
        fn dc_partitions_aps(pts in points(2..24), l in 1usize..8) {
            let l = l.min(pts.len());
            let aps: Vec<_> = pts.iter().map(|&(x, y)| Position::new(x, y, 5.0)).collect();
            let gains = LosGains { cpu: (0..aps.len()).map(|q| 1.0 + (q % 3) as f64).collect(), pair: DMatrix::from_element(aps.len(), aps.len(), 0.1) };
            let a = cluster_dc(&aps, &gains, l, 1).unwrap();
            prop_assert_eq!(a.n_clusters(), l);
            prop_assert!(a.violations(aps.len(), 1, 1).is_empty());
            prop_assert!(a.clusters.iter().all(|c| !c.members.is_empty()));
        }

        #[test]
        fn sc_partitions_aps(pts in points(1..30), gi in 0usize..5) {
            let grid = GRID_SIZES[gi];
            let aps: Vec<_> = pts.iter().map(|&(x, y)| Position::new(x, y, 5.0)).collect();
            let a = cluster_sc((100.0, 100.0), grid, &aps, 1).unwrap();
            prop_assert_eq!(a.n_clusters(), grid);
            prop_assert!(a.violations(aps.len(), 1, 1).is_empty());
            let (rows, cols) = grid_shape(grid).unwrap();
            for (cell, c) in a.clusters.iter().enumerate() {
                let (r, col) = (cell / cols, cell % cols);
                for &q in &c.members {
                    let (x, y) = pts[q];
                    prop_assert!(x >= col as f64 * 100.0 / cols as f64 - 1e-9 && x <= (col + 1) as f64 * 100.0 / cols as f64 + 1e-9);
                    prop_assert!(y >= r as f64 * 100.0 / rows as f64 - 1e-9 && y <= (r + 1) as f64 * 100.0 / rows as f64 + 1e-9);
                }
            }
        }

        #[test]
        fn selection_respects_limits(
            l in 1usize..8, u in 1usize..10, u_max in 1usize..4, c_max in 1usize..5,
            raw in prop::collection::vec(0.0..1.0f64, 80),
        ) {
            let g = DMatrix::from_fn(l, u, |i, j| raw[(i * 10 + j) % raw.len()]);
            match select_devices(&singletons(l, u), &g, u_max, c_max) {
                Ok(s) => {
                    prop_assert!(l * u_max >= u);
                    prop_assert!(s.violations(l, u_max, c_max).is_empty());
                    prop_assert!(s.serving_map.iter().all(|g| !g.is_empty()));
                    // No device can still add a cluster.
                    for d in 0..u {
                        if s.serving_map[d].len() < c_max {
                            for c in 0..l {
                                prop_assert!(s.serving_map[d].contains(&c) || s.served_devices[c].len() >= u_max);
                            }
                        }
                    }
                }
                Err(Error::Unservable { uncovered }) => {
                    prop_assert!(l * u_max < u);
                    prop_assert!(!uncovered.is_empty());
                }
                Err(e) => prop_assert!(false, "{e}"),
            }
        }

        #[test]
        fn more_clusters_per_device_never_shrinks_total_links(
            l in 1usize..8, u in 1usize..8, u_max in 1usize..4, c_max in 1usize..4,
            raw in prop::collection::vec(0.0..1.0f64, 64),
        ) {
            prop_assume!(l * u_max >= u);
            let g = DMatrix::from_fn(l, u, |i, j| raw[(i * 8 + j) % raw.len()]);
            let a = select_devices(&singletons(l, u), &g, u_max, c_max).unwrap();
            let b = select_devices(&singletons(l, u), &g, u_max, c_max + 1).unwrap();
            let links = |s: &ClusterAssignment| s.serving_map.iter().map(Vec::len).sum::<usize>();
            prop_assert!(links(&b) >= links(&a));
        }

        #[test]
        fn subcarrier_split_is_cover(
            n in 1usize..40, target in 0usize..50, l in 1usize..5,
            raw in prop::collection::vec(0.0..1.0f64, 200),
        ) {
            let mut a = ClusterAssignment::from_clusters(
                (0..l).map(|i| Cluster { cap: NodeKey::Ap(2 * i), members: vec![2 * i, 2 * i + 1] }).collect(), l);
            for i in 0..l {
                a.served_devices[i] = vec![i];
                a.serving_map[i] = vec![i];
            }
            let w: Vec<Vec<f64>> = (0..l).map(|i| (0..n).map(|m| raw[(i * 40 + m) % 200]).collect()).collect();
            let part = assign_subcarriers(&a, &w, n, target);
            prop_assert!(part.is_orthogonal_cover(n));
            prop_assert_eq!(part.m_ca.len(), target.min(n));
        }
    }

    /// Raising c_max lets the weakest device take a slot another device would
    /// have used, so per-device totals are not monotone in c_max.
    #[test]
    fn per_device_gain_not_monotone_in_c_max() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let mut bad = 0;
        for _ in 0..2000 {
            let (l, u) = (rng.gen_range(2..8), rng.gen_range(1..8));
            let u_max = rng.gen_range(1..4);
            if l * u_max < u {
                continue;
            }
            let g = DMatrix::from_fn(l, u, |_, _| rng.gen::<f64>());
            let c = rng.gen_range(1..4);
            let a = select_devices(&singletons(l, u), &g, u_max, c).unwrap();
            let b = select_devices(&singletons(l, u), &g, u_max, c + 1).unwrap();
            let tot = |s: &ClusterAssignment, d: usize| s.serving_map[d].iter().map(|&k| g[(k, d)]).sum::<f64>();
            if (0..u).any(|d| tot(&b, d) < tot(&a, d) - 1e-12) {
                bad += 1;
            }
        }
        assert!(bad > 0);
    }
}
