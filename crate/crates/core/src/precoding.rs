//! RZF and MRT precoders for the CPU→CAP, CAP→AP and access links.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::association::ClusterAssignment;
use crate::channel::{CVec, ChannelSet, NodeKey};
use crate::error::{Error, Result};
use crate::scenario::NetworkScenario;

pub type CMat = DMatrix<Complex64>;

/// Multiplies the default regularization σ²·K/P of every RZF precoder.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PrecoderConfig {
    pub eps_scale: f64,
}

impl Default for PrecoderConfig {
    fn default() -> Self {
        PrecoderConfig { eps_scale: 1.0 }
    }
}

/// V = H(HᴴH + εI)⁻¹ with unit-norm columns. A zero channel column yields a
/// zero precoder column.
pub fn rzf(h: &CMat, epsilon: f64) -> Result<CMat> {
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(Error::InvalidArgument(format!("RZF regularization must be positive, got {epsilon}")));
    }
    if h.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
        return Err(Error::InvalidArgument("non-finite channel entry".into()));
    }
    let k = h.ncols();
    // Work in units where the channel has unit average column energy.
    let scale = (h.norm_squared() / k.max(1) as f64).sqrt();
    if scale == 0.0 {
        return Ok(CMat::zeros(h.nrows(), k));
    }
    let hs = h.unscale(scale);
    let mut gram = hs.adjoint() * &hs;
    for i in 0..k {
        gram[(i, i)] += epsilon / (scale * scale);
    }
    let inv = gram
        .cholesky()
        .ok_or_else(|| Error::Solver("RZF Gram matrix not positive definite".into()))?
        .inverse();
    let mut v = hs * inv;
    for mut col in v.column_iter_mut() {
        let n = col.norm();
        if n > 0.0 {
            col.unscale_mut(n);
        }
    }
    Ok(v)
}

pub fn mrt(h: &CVec) -> Result<CVec> {
    let n = h.norm();
    if n == 0.0 || !n.is_finite() {
        return Err(Error::InvalidArgument("MRT needs a finite nonzero channel".into()));
    }
    Ok(h.unscale(n))
}

fn stack_columns(cols: &[&CVec]) -> CMat {
    let rows = cols.first().map_or(0, |c| c.len());
    CMat::from_fn(rows, cols.len(), |i, j| cols[j][i])
}

/// Every precoder of one trial for a fixed cluster assignment. Precoders are
/// computed over the full band and do not depend on the subcarrier split.
#[derive(Debug, Clone)]
pub struct PrecoderSet {
    /// f_l[m], indexed `[m][l]`; `None` for clusters without devices.
    pub cc: Vec<Vec<Option<CVec>>>,
    /// w_{l,q}[m], indexed `[l][m][i]` with i the position of q in
    /// `clusters[l].targets()`.
    pub ca: Vec<Vec<Vec<CVec>>>,
    /// Stacked access precoder of device `served_devices[l][j]`, indexed
    /// `[l][j]`, with one N_AP-block per serving node of cluster l. The whole
    /// stacked column has unit norm.
    pub ad: Vec<Vec<CVec>>,
}

impl PrecoderSet {
    pub fn build(
        scenario: &NetworkScenario,
        channels: &ChannelSet,
        assignment: &ClusterAssignment,
        cfg: &PrecoderConfig,
    ) -> Result<Self> {
        let n_sc = channels.n_subcarriers;
        let fh_noise = scenario.power.fronthaul_noise(&scenario.band);
        let ad_noise = scenario.power.access_noise(&scenario.band);
        let clusters = &assignment.clusters;

        let active: Vec<usize> = (0..clusters.len()).filter(|&l| !assignment.served_devices[l].is_empty()).collect();
        let mut cc = vec![vec![None; clusters.len()]; n_sc];
        if !active.is_empty() {
            let eps = cfg.eps_scale * fh_noise * active.len() as f64 / scenario.power.p_cpu;
            for (m, row) in cc.iter_mut().enumerate() {
                let cols: Vec<&CVec> = active.iter().map(|&l| &channels.thz(NodeKey::Cpu, clusters[l].cap)[m]).collect();
                let v = rzf(&stack_columns(&cols), eps)?;
                for (j, &l) in active.iter().enumerate() {
                    row[l] = Some(v.column(j).into_owned());
                }
            }
        }

        let mut ca = Vec::with_capacity(clusters.len());
        for c in clusters {
            let targets = c.targets();
            let eps = cfg.eps_scale * fh_noise * targets.len().max(1) as f64 / scenario.power.p_ap;
            let mut per_m = Vec::with_capacity(n_sc);
            for m in 0..n_sc {
                if targets.is_empty() {
                    per_m.push(Vec::new());
                    continue;
                }
                let cols: Vec<&CVec> = targets.iter().map(|&q| &channels.thz(c.cap, NodeKey::Ap(q))[m]).collect();
                let v = rzf(&stack_columns(&cols), eps)?;
                per_m.push(v.column_iter().map(|col| col.into_owned()).collect());
            }
            ca.push(per_m);
        }

        let mut ad = Vec::with_capacity(clusters.len());
        for (l, c) in clusters.iter().enumerate() {
            let devs = &assignment.served_devices[l];
            if devs.is_empty() {
                ad.push(Vec::new());
                continue;
            }
            let nodes = c.serving_nodes();
            let cols: Vec<CVec> = devs.iter().map(|&u| stacked_access_channel(channels, &nodes, u)).collect();
            let refs: Vec<&CVec> = cols.iter().collect();
            let eps = cfg.eps_scale * ad_noise * devs.len() as f64 / scenario.power.p_ap;
            let v = rzf(&stack_columns(&refs), eps)?;
            ad.push(v.column_iter().map(|col| col.into_owned()).collect());
        }
        Ok(PrecoderSet { cc, ca, ad })
    }
}

/// [h̃_{k,u}] stacked over `nodes`.
pub fn stacked_access_channel(channels: &ChannelSet, nodes: &[NodeKey], u: usize) -> CVec {
    let blocks: Vec<&CVec> = nodes.iter().map(|&k| &channels.access(k, u).gain_vector).collect();
    let len: usize = blocks.iter().map(|b| b.len()).sum();
    let mut out = CVec::zeros(len);
    let mut off = 0;
    for b in blocks {
        out.rows_mut(off, b.len()).copy_from(b);
        off += b.len();
    }
    out
}
