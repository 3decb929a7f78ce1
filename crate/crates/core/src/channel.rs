//! THz multipath fronthaul channels and sub-6 GHz access channels.
//!
//! THz links are synthesized in the delay domain as a handful of taps (one
//! LoS ray plus `n_rays` reflected rays shaped by a raised-cosine pulse) and
//! moved to the subcarrier domain with an exact DFT. Receivers on THz links
//! have a single antenna, so every channel is a vector over transmit
//! elements.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::io::Write;

use nalgebra::DVector;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::scenario::{db_to_linear, NetworkScenario, Position, UpaGeometry, SPEED_OF_LIGHT};
use crate::seeds;

pub type CVec = DVector<Complex64>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ThzRayParams {
    pub n_rays: usize,
    pub n_taps: usize,
    pub sample_interval: f64,
    pub cp_length: usize,
    pub absorption: f64,
    pub fresnel_coeff: f64,
    /// Surface height deviation in meters.
    pub roughness: f64,
    pub tx_gain: f64,
    pub rx_gain: f64,
}

impl Default for ThzRayParams {
    fn default() -> Self {
        ThzRayParams {
            n_rays: 3,
            n_taps: 6,
            sample_interval: 7.8e-12,
            cp_length: 16,
            absorption: 0.0033,
            fresnel_coeff: 0.15,
            roughness: 0.088e-3,
            tx_gain: db_to_linear(20.0),
            rx_gain: db_to_linear(20.0),
        }
    }
}

impl ThzRayParams {
    /// Effective reflection coefficient: Fresnel term times the Rayleigh
    /// roughness factor at normal incidence.
    pub fn reflection_coeff(&self, f: f64) -> f64 {
        let k = 2.0 * PI * f * self.roughness / SPEED_OF_LIGHT;
        self.fresnel_coeff * (-2.0 * k * k).exp()
    }
}

/// Delay-domain channel: `taps[t]` is the vector for delay `t·T_s`.
#[derive(Debug, Clone, PartialEq)]
pub struct TapChannel {
    pub taps: Vec<CVec>,
    pub link_distance: f64,
}

impl TapChannel {
    pub fn energy(&self) -> f64 {
        self.taps.iter().map(|h| h.norm_squared()).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AccessChannel {
    pub gain_vector: CVec,
    pub large_scale: f64,
}

pub fn upa_response(geom: &UpaGeometry, azimuth: f64, elevation: f64) -> Result<CVec> {
    if !azimuth.is_finite() || !elevation.is_finite() {
        return Err(Error::InvalidArgument("angles must be finite".into()));
    }
    let n = geom.n_elements();
    let scale = 1.0 / (n as f64).sqrt();
    let kd = 2.0 * PI * geom.element_spacing;
    let (u, v) = (azimuth.sin() * elevation.cos(), elevation.sin());
    Ok(CVec::from_fn(n, |i, _| {
        let (r, c) = ((i / geom.cols) as f64, (i % geom.cols) as f64);
        Complex64::from_polar(scale, kd * (r * u + c * v))
    }))
}

fn check_link(f: f64, d: f64) -> Result<()> {
    if !(f > 0.0) {
        return Err(Error::InvalidArgument(format!("frequency must be positive, got {f}")));
    }
    if !(d > 0.0) {
        return Err(Error::InvalidArgument(format!("distance must be positive, got {d}")));
    }
    Ok(())
}

/// |α^LoS|² = (c/(4πfd))²·e^{−k_abs·d}, linear power gain.
pub fn path_gain_los(f: f64, d: f64, k_abs: f64) -> Result<f64> {
    check_link(f, d)?;
    let spread = SPEED_OF_LIGHT / (4.0 * PI * f * d);
    Ok(spread * spread * (-k_abs * d).exp())
}

/// Reflected-ray power gain Γ²·|α^LoS|².
pub fn nlos_gain(f: f64, d: f64, k_abs: f64, gamma: f64) -> Result<f64> {
    Ok(gamma * gamma * path_gain_los(f, d, k_abs)?)
}

/// Raised-cosine pulse with unit peak and roll-off `beta`, evaluated at `t`
/// for symbol period `period`.
pub fn raised_cosine(t: f64, period: f64, beta: f64) -> f64 {
    let x = t / period;
    let sinc = if x.abs() < 1e-12 { 1.0 } else { (PI * x).sin() / (PI * x) };
    let denom = 1.0 - (2.0 * beta * x).powi(2);
    if denom.abs() < 1e-10 {
        // Removable singularity at |t| = T/(2β).
        let s = 1.0 / (2.0 * beta);
        return PI / 4.0 * (PI * s).sin() / (PI * s);
    }
    sinc * (PI * beta * x).cos() / denom
}

/// Delay-domain THz channel between a transmit array at `tx` and a single
/// antenna at `rx`. The LoS ray is timing-aligned to tap 0; reflected rays
/// get delays in `[0, N_CP·T_s]` and uniform departure angles, all fixed for
/// the link.
pub fn thz_tap_channel(
    geom: &UpaGeometry,
    tx: &Position,
    rx: &Position,
    params: &ThzRayParams,
    f: f64,
    seed: u64,
) -> Result<TapChannel> {
    let d = (rx - tx).norm();
    let los = path_gain_los(f, d, params.absorption)?;
    if params.n_taps == 0 || !(params.sample_interval > 0.0) {
        return Err(Error::InvalidArgument("need at least one tap and a positive sample interval".into()));
    }
    let mut rng = seeds::rng(seed, &["taps"]);
    let n = geom.n_elements() as f64;
    let g = (params.tx_gain * params.rx_gain).sqrt();
    let ts = params.sample_interval;
    let alpha_los = Complex64::from_polar(los.sqrt(), -2.0 * PI * f * d / SPEED_OF_LIGHT);
    let a_los = upa_response(geom, rng.gen_range(-PI..PI), rng.gen_range(-PI / 2.0..PI / 2.0))?;

    struct Ray {
        alpha: Complex64,
        delay: f64,
        a: CVec,
    }
    let refl = params.reflection_coeff(f);
    let mut rays = Vec::with_capacity(params.n_rays);
    for _ in 0..params.n_rays {
        let alpha = Complex64::from_polar(refl * los.sqrt(), rng.gen_range(-PI..PI));
        let delay = rng.gen::<f64>() * params.cp_length as f64 * ts;
        let a = upa_response(geom, rng.gen_range(-PI..PI), rng.gen_range(-PI / 2.0..PI / 2.0))?;
        rays.push(Ray { alpha, delay, a });
    }

    let los_scale = n.sqrt() * g;
    let ray_scale = if params.n_rays > 0 { (n / params.n_rays as f64).sqrt() * g } else { 0.0 };
    let taps = (0..params.n_taps)
        .map(|t| {
            let tt = t as f64 * ts;
            let mut h = &a_los * (alpha_los * los_scale * raised_cosine(tt, ts, 1.0));
            for r in &rays {
                h += &r.a * (r.alpha * ray_scale * raised_cosine(tt - r.delay, ts, 1.0));
            }
            h
        })
        .collect();
    Ok(TapChannel { taps, link_distance: d })
}

/// h[m] = Σ_t h_t·e^{−j2πmt/n_sc}.
pub fn thz_subcarrier_channel(taps: &TapChannel, m: usize, n_sc: usize) -> Result<CVec> {
    if m >= n_sc {
        return Err(Error::InvalidArgument(format!("subcarrier {m} out of range 0..{n_sc}")));
    }
    let len = taps.taps.first().map_or(0, |h| h.len());
    let mut out = CVec::zeros(len);
    for (t, h) in taps.taps.iter().enumerate() {
        let ph = -2.0 * PI * ((m * t) % n_sc) as f64 / n_sc as f64;
        out += h * Complex64::from_polar(1.0, ph);
    }
    Ok(out)
}

pub fn thz_subcarrier_channels(taps: &TapChannel, n_sc: usize) -> Vec<CVec> {
    (0..n_sc)
        .map(|m| thz_subcarrier_channel(taps, m, n_sc).expect("index in range"))
        .collect()
}

/// β[dB] = −30.5 − 36.7·log10(d) + σ_sh·z.
pub fn large_scale_fading_db(d: f64, shadow_draw: f64, sigma_sh: f64) -> Result<f64> {
    if !(d > 0.0) {
        return Err(Error::InvalidArgument(format!("distance must be positive, got {d}")));
    }
    Ok(-30.5 - 36.7 * d.log10() + sigma_sh * shadow_draw)
}

/// Rayleigh access channel with entries √β·CN(0,1).
pub fn access_channel(beta: f64, n_ap: usize, seed: u64) -> Result<AccessChannel> {
    if !(beta > 0.0) {
        return Err(Error::InvalidArgument(format!("large-scale gain must be positive, got {beta}")));
    }
    let mut rng = seeds::rng(seed, &["small-scale"]);
    let s = (beta / 2.0).sqrt();
    let gain_vector = CVec::from_fn(n_ap, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex64::new(s * re, s * im)
    });
    Ok(AccessChannel { gain_vector, large_scale: beta })
}

/// Identity of a radio node. `GridCap` nodes are the synthetic CAPs of
/// static clustering, keyed by grid size and cell index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum NodeKey {
    Cpu,
    Ap(usize),
    GridCap { grid: usize, cell: usize },
}

impl fmt::Display for NodeKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NodeKey::Cpu => write!(f, "cpu"),
            NodeKey::Ap(q) => write!(f, "ap{q}"),
            NodeKey::GridCap { grid, cell } => write!(f, "grid{grid}cap{cell}"),
        }
    }
}

/// All channels of one trial.
#[derive(Debug, Clone)]
pub struct ChannelSet {
    pub n_subcarriers: usize,
    carrier: f64,
    k_abs: f64,
    positions: BTreeMap<NodeKey, Position>,
    thz: BTreeMap<(NodeKey, NodeKey), Vec<CVec>>,
    access: BTreeMap<(NodeKey, usize), AccessChannel>,
}

impl ChannelSet {
    /// Draws the CPU→node and node→AP THz channels and the node→device
    /// access channels for every AP plus the given extra CAP nodes.
    pub fn generate(s: &NetworkScenario, extra_nodes: &[(NodeKey, Position)]) -> Result<Self> {
        let n_sc = s.band.n_fronthaul_subcarriers;
        let f = s.band.fronthaul_center_hz;
        let mut positions = BTreeMap::new();
        positions.insert(NodeKey::Cpu, s.cpu_position);
        for (q, p) in s.ap_positions.iter().enumerate() {
            positions.insert(NodeKey::Ap(q), *p);
        }
        for (k, p) in extra_nodes {
            positions.insert(*k, *p);
        }
        let mut thz = BTreeMap::new();
        let link = |tx: NodeKey, rx: NodeKey, geom: &UpaGeometry| -> Result<Vec<CVec>> {
            let seed = seeds::derive(s.rng_seed, &["thz", &tx.to_string(), &rx.to_string()]);
            let taps = thz_tap_channel(geom, &positions[&tx], &positions[&rx], &s.thz, f, seed)?;
            Ok(thz_subcarrier_channels(&taps, n_sc))
        };
        let nodes: Vec<NodeKey> = positions.keys().copied().filter(|k| *k != NodeKey::Cpu).collect();
        for &k in &nodes {
            thz.insert((NodeKey::Cpu, k), link(NodeKey::Cpu, k, &s.cpu_array)?);
        }
        for &tx in &nodes {
            for q in 0..s.n_aps() {
                let rx = NodeKey::Ap(q);
                if tx != rx {
                    thz.insert((tx, rx), link(tx, rx, &s.ap_array)?);
                }
            }
        }
        let mut access = BTreeMap::new();
        let n_ap = s.ap_array.n_elements();
        for &k in &nodes {
            for (u, dev) in s.device_positions.iter().enumerate() {
                let label = [&"access", &k.to_string()[..], &format!("dev{u}")[..]];
                let seed = seeds::derive(s.rng_seed, &label);
                let mut rng = seeds::rng(seed, &["shadow"]);
                let z: f64 = rng.sample(StandardNormal);
                let d = (dev - positions[&k]).norm();
                let beta = db_to_linear(large_scale_fading_db(d, z, s.power.shadow_sigma_db)?);
                access.insert((k, u), access_channel(beta, n_ap, seed)?);
            }
        }
        Ok(ChannelSet { n_subcarriers: n_sc, carrier: f, k_abs: s.thz.absorption, positions, thz, access })
    }

    /// Per-subcarrier channel vectors from `tx` to the single-antenna `rx`.
    pub fn thz(&self, tx: NodeKey, rx: NodeKey) -> &[CVec] {
        self.thz
            .get(&(tx, rx))
            .unwrap_or_else(|| panic!("no THz channel {tx} -> {rx}"))
    }

    pub fn access(&self, node: NodeKey, device: usize) -> &AccessChannel {
        self.access
            .get(&(node, device))
            .unwrap_or_else(|| panic!("no access channel {node} -> device {device}"))
    }

    pub fn position(&self, node: NodeKey) -> Position {
        self.positions[&node]
    }

    pub fn has_node(&self, node: NodeKey) -> bool {
        self.positions.contains_key(&node)
    }

    /// |α^LoS| between two nodes at the fronthaul carrier.
    pub fn los_amplitude(&self, a: NodeKey, b: NodeKey) -> f64 {
        let d = (self.position(a) - self.position(b)).norm();
        path_gain_los(self.carrier, d, self.k_abs).map_or(0.0, f64::sqrt)
    }

    /// Short hex digest of every channel coefficient, used to tag paired
    /// results that came from the same draw.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for ((tx, rx), hs) in &self.thz {
            h.update(tx.to_string().as_bytes());
            h.update(rx.to_string().as_bytes());
            for v in hs {
                for c in v.iter() {
                    h.update(c.re.to_le_bytes());
                    h.update(c.im.to_le_bytes());
                }
            }
        }
        for ((k, u), a) in &self.access {
            h.update(k.to_string().as_bytes());
            h.update(u.to_le_bytes());
            for c in a.gain_vector.iter() {
                h.update(c.re.to_le_bytes());
                h.update(c.im.to_le_bytes());
            }
        }
        h.finalize().iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    /// Writes every coefficient as CSV with columns
    /// `link_type,tx,rx,subcarrier,antenna,re,im`. Access links use
    /// subcarrier 0.
    pub fn dump<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["link_type", "tx", "rx", "subcarrier", "antenna", "re", "im"])?;
        for ((tx, rx), hs) in &self.thz {
            let kind = if *tx == NodeKey::Cpu { "cpu_cap" } else { "cap_ap" };
            for (m, v) in hs.iter().enumerate() {
                for (i, c) in v.iter().enumerate() {
                    w.write_record([
                        kind.to_string(),
                        tx.to_string(),
                        rx.to_string(),
                        m.to_string(),
                        i.to_string(),
                        format!("{:e}", c.re),
                        format!("{:e}", c.im),
                    ])?;
                }
            }
        }
        for ((k, u), a) in &self.access {
            for (i, c) in a.gain_vector.iter().enumerate() {
                w.write_record([
                    "access".to_string(),
                    k.to_string(),
                    format!("dev{u}"),
                    "0".to_string(),
                    i.to_string(),
                    format!("{:e}", c.re),
                    format!("{:e}", c.im),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}
