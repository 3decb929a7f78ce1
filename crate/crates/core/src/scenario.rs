//! Deployment geometry, band plan and power budgets.
//!
//! A [`NetworkScenario`] is an immutable snapshot of one random indoor
//! deployment: a CPU on the roof, APs on walls and pillars, devices on the
//! floor. Everything downstream is a pure function of it plus a seed.

use nalgebra::Vector3;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::ThzRayParams;
use crate::error::{Error, Result};
use crate::seeds;

pub type Position = Vector3<f64>;

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    db_to_linear(dbm - 30.0)
}

/// Rectangular antenna grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UpaGeometry {
    pub rows: usize,
    pub cols: usize,
    /// Element spacing in wavelengths.
    #[serde(default = "half")]
    pub element_spacing: f64,
}

fn half() -> f64 {
    0.5
}

impl UpaGeometry {
    pub fn new(rows: usize, cols: usize) -> Self {
        UpaGeometry { rows, cols, element_spacing: 0.5 }
    }

    pub fn n_elements(&self) -> usize {
        self.rows * self.cols
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BandPlan {
    pub fronthaul_center_hz: f64,
    pub fronthaul_bandwidth_hz: f64,
    pub n_fronthaul_subcarriers: usize,
    pub access_center_hz: f64,
    pub access_bandwidth_hz: f64,
    pub n_access_subcarriers: usize,
}

impl Default for BandPlan {
    fn default() -> Self {
        BandPlan {
            fronthaul_center_hz: 200e9,
            fronthaul_bandwidth_hz: 1e9,
            n_fronthaul_subcarriers: 16,
            access_center_hz: 5e9,
            access_bandwidth_hz: 100e6,
            n_access_subcarriers: 1,
        }
    }
}

impl BandPlan {
    /// Per-subcarrier fronthaul bandwidth b^FH.
    pub fn subcarrier_bandwidth(&self) -> f64 {
        self.fronthaul_bandwidth_hz / self.n_fronthaul_subcarriers as f64
    }

    /// Center frequency of fronthaul subcarrier `m`.
    pub fn subcarrier_frequency(&self, m: usize) -> f64 {
        let n = self.n_fronthaul_subcarriers as f64;
        self.fronthaul_center_hz + (m as f64 - (n - 1.0) / 2.0) * self.subcarrier_bandwidth()
    }
}

/// Power budgets and noise, in linear units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerBudget {
    pub p_cpu: f64,
    pub p_ap: f64,
    /// W/Hz.
    pub noise_density: f64,
    pub si_offset_db: f64,
    pub shadow_sigma_db: f64,
}

impl PowerBudget {
    /// Per-subcarrier THz noise variance σ²_l = σ²_q.
    pub fn fronthaul_noise(&self, band: &BandPlan) -> f64 {
        self.noise_density * band.subcarrier_bandwidth()
    }

    /// Access noise variance σ²_u over the whole sub-6 GHz band.
    pub fn access_noise(&self, band: &BandPlan) -> f64 {
        self.noise_density * band.access_bandwidth_hz
    }

    /// Residual self-interference variance Δ·σ²_l.
    pub fn si_variance(&self, band: &BandPlan) -> f64 {
        db_to_linear(self.si_offset_db) * self.fronthaul_noise(band)
    }
}

/// Human-editable generation parameters. Powers are given in dBm here and
/// converted when the scenario is drawn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub area_x: f64,
    pub area_y: f64,
    pub roof_height: f64,
    pub ap_height_min: f64,
    pub ap_height_max: f64,
    pub device_height: f64,
    /// Height of the synthetic CAPs placed by static clustering.
    pub grid_cap_height: f64,
    pub n_aps: usize,
    pub n_devices: usize,
    pub cpu_array: UpaGeometry,
    pub ap_array: UpaGeometry,
    pub band: BandPlan,
    pub p_cpu_dbm: f64,
    pub p_ap_dbm: f64,
    pub noise_density_dbm_hz: f64,
    pub si_offset_db: f64,
    pub shadow_sigma_db: f64,
    pub u_max: usize,
    pub c_max: usize,
    pub thz: ThzRayParams,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            area_x: 100.0,
            area_y: 100.0,
            roof_height: 10.0,
            ap_height_min: 4.0,
            ap_height_max: 6.0,
            device_height: 1.0,
            grid_cap_height: 5.0,
            n_aps: 16,
            n_devices: 4,
            cpu_array: UpaGeometry::new(4, 4),
            ap_array: UpaGeometry::new(2, 2),
            band: BandPlan::default(),
            p_cpu_dbm: 35.0,
            p_ap_dbm: 45.0,
            noise_density_dbm_hz: -174.0,
            si_offset_db: -10.0,
            shadow_sigma_db: 4.0,
            u_max: 2,
            c_max: 4,
            thz: ThzRayParams::default(),
        }
    }
}

impl ScenarioConfig {
    /// The published full-size deployment: 32 APs, 8 devices, 8×8 CPU array,
    /// 4×4 AP arrays and 32 fronthaul subcarriers.
    pub fn full_scale() -> Self {
        ScenarioConfig {
            n_aps: 32,
            n_devices: 8,
            cpu_array: UpaGeometry::new(8, 8),
            ap_array: UpaGeometry::new(4, 4),
            band: BandPlan { n_fronthaul_subcarriers: 32, ..BandPlan::default() },
            ..ScenarioConfig::default()
        }
    }

    pub fn power_budget(&self) -> PowerBudget {
        PowerBudget {
            p_cpu: dbm_to_watts(self.p_cpu_dbm),
            p_ap: dbm_to_watts(self.p_ap_dbm),
            noise_density: dbm_to_watts(self.noise_density_dbm_hz),
            si_offset_db: self.si_offset_db,
            shadow_sigma_db: self.shadow_sigma_db,
        }
    }

    fn check(&self) -> Result<()> {
        if self.n_aps == 0 {
            return Err(Error::Config("at least one AP is required".into()));
        }
        if self.n_devices == 0 {
            return Err(Error::Config("at least one device is required".into()));
        }
        if !(self.area_x > 0.0 && self.area_y > 0.0 && self.roof_height > 0.0) {
            return Err(Error::Config("area dimensions must be positive".into()));
        }
        if self.ap_height_min > self.ap_height_max {
            return Err(Error::Config("ap_height_min exceeds ap_height_max".into()));
        }
        if self.band.n_fronthaul_subcarriers == 0 {
            return Err(Error::Config("need at least one fronthaul subcarrier".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkScenario {
    pub area_x: f64,
    pub area_y: f64,
    pub roof_height: f64,
    pub grid_cap_height: f64,
    pub cpu_position: Position,
    pub ap_positions: Vec<Position>,
    pub device_positions: Vec<Position>,
    pub cpu_array: UpaGeometry,
    pub ap_array: UpaGeometry,
    pub band: BandPlan,
    pub power: PowerBudget,
    pub thz: ThzRayParams,
    pub u_max: usize,
    pub c_max: usize,
    pub rng_seed: u64,
    /// Height range the generator used, kept for validation.
    pub ap_height_range: (f64, f64),
    pub device_height: f64,
}

impl NetworkScenario {
    pub fn n_aps(&self) -> usize {
        self.ap_positions.len()
    }

    pub fn n_devices(&self) -> usize {
        self.device_positions.len()
    }
}

pub fn generate_scenario(config: &ScenarioConfig, seed: u64) -> Result<NetworkScenario> {
    config.check()?;
    let mut rng = seeds::rng(seed, &["scenario"]);
    let mut ap_positions = Vec::with_capacity(config.n_aps);
    for _ in 0..config.n_aps {
        let x = rng.gen::<f64>() * config.area_x;
        let y = rng.gen::<f64>() * config.area_y;
        let z = config.ap_height_min + rng.gen::<f64>() * (config.ap_height_max - config.ap_height_min);
        ap_positions.push(Position::new(x, y, z));
    }
    let mut device_positions = Vec::with_capacity(config.n_devices);
    for _ in 0..config.n_devices {
        let x = rng.gen::<f64>() * config.area_x;
        let y = rng.gen::<f64>() * config.area_y;
        device_positions.push(Position::new(x, y, config.device_height));
    }
    Ok(NetworkScenario {
        area_x: config.area_x,
        area_y: config.area_y,
        roof_height: config.roof_height,
        grid_cap_height: config.grid_cap_height,
        cpu_position: Position::new(config.area_x / 2.0, config.area_y / 2.0, config.roof_height),
        ap_positions,
        device_positions,
        cpu_array: config.cpu_array,
        ap_array: config.ap_array,
        band: config.band,
        power: config.power_budget(),
        thz: config.thz,
        u_max: config.u_max,
        c_max: config.c_max,
        rng_seed: seed,
        ap_height_range: (config.ap_height_min, config.ap_height_max),
        device_height: config.device_height,
    })
}

/// Lists every broken invariant; an empty list means the scenario is usable.
pub fn validate_scenario(s: &NetworkScenario) -> Vec<String> {
    let mut v = Vec::new();
    let inside = |p: &Position| p.x >= 0.0 && p.x <= s.area_x && p.y >= 0.0 && p.y <= s.area_y;
    if s.ap_positions.is_empty() {
        v.push("at least one AP is required".to_string());
    }
    if s.device_positions.is_empty() {
        v.push("at least one device is required".to_string());
    }
    let (hmin, hmax) = s.ap_height_range;
    for (q, p) in s.ap_positions.iter().enumerate() {
        if !inside(p) {
            v.push(format!("AP {q} lies outside the area"));
        }
        if p.z < hmin || p.z > hmax {
            v.push(format!("AP {q} height {:.2} m outside [{hmin}, {hmax}]", p.z));
        }
    }
    for (u, p) in s.device_positions.iter().enumerate() {
        if !inside(p) {
            v.push(format!("device {u} lies outside the area"));
        }
        if (p.z - s.device_height).abs() > 1e-12 {
            v.push(format!("device {u} height {:.2} m differs from {}", p.z, s.device_height));
        }
    }
    if s.u_max == 0 {
        v.push("U_max must be ≥ 1".to_string());
    }
    if s.c_max == 0 {
        v.push("C_max must be ≥ 1".to_string());
    }
    for (name, g) in [("CPU", &s.cpu_array), ("AP", &s.ap_array)] {
        if g.n_elements() == 0 {
            v.push(format!("{name} array has no elements"));
        }
        if !(g.element_spacing > 0.0) {
            v.push(format!("{name} array spacing must be positive"));
        }
    }
    if !(s.band.subcarrier_bandwidth() > 0.0) {
        v.push("fronthaul subcarrier bandwidth must be positive".to_string());
    }
    if s.band.fronthaul_center_hz <= s.band.access_center_hz {
        v.push("fronthaul carrier must lie above the access carrier".to_string());
    }
    if !(s.power.p_cpu > 0.0 && s.power.p_ap > 0.0 && s.power.noise_density > 0.0) {
        v.push("powers and noise density must be positive".to_string());
    }
    v
}
