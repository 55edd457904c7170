//! Per-link radio physics: link classification, free-space loss, G/T link
//! budget, Shannon throughput, delay and remaining visibility (lifetime).

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::{self, GeoPos};
use crate::mobility::{parse_satellite_id, NodeKind, Scenario};

/// Speed of light, km/s.
pub const SPEED_OF_LIGHT_KMS: f64 = 299_792.458;
/// Boltzmann constant, dBW/K/Hz.
pub const BOLTZMANN_DBW: f64 = -228.6;
/// Satellite full-beam footprint radius, km.
pub const FOOTPRINT_RADIUS_KM: f64 = 2300.0;
/// On-shore base station coverage radius, km.
pub const BASE_STATION_RADIUS_KM: f64 = 50.0;
/// 1 KByte packet.
pub const PACKET_BITS: f64 = 8192.0;
/// Distances below this are treated as this, to keep the path loss finite.
pub const MIN_LINK_DISTANCE_KM: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LinkClass {
    A2A,
    A2G,
    S2A,
    S2G,
    ISL,
}

/// Link class of a node pair, `None` when the pair is not modeled.
pub fn classify(a: NodeKind, b: NodeKind) -> Option<LinkClass> {
    use NodeKind::*;
    let (x, y) = if a <= b { (a, b) } else { (b, a) };
    match (x, y) {
        (Satellite, Satellite) => Some(LinkClass::ISL),
        (Satellite, Airplane) => Some(LinkClass::S2A),
        (Satellite, Ship) | (Satellite, GroundStation) => Some(LinkClass::S2G),
        (Airplane, Airplane) => Some(LinkClass::A2A),
        (Airplane, Ship) | (Airplane, GroundStation) | (Airplane, BaseStation) => Some(LinkClass::A2G),
        (Ship, BaseStation) => Some(LinkClass::A2G),
        _ => None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadioProfile {
    pub carrier_ghz: f64,
    pub bandwidth_per_link_mhz: f64,
    pub tx_power_dbm: f64,
    pub tx_gain_dbi: f64,
    pub gt_db_per_k: f64,
}

impl RadioProfile {
    fn validate(&self, name: &str) -> Result<()> {
        let vals = [
            self.carrier_ghz,
            self.bandwidth_per_link_mhz,
            self.tx_power_dbm,
            self.tx_gain_dbi,
            self.gt_db_per_k,
        ];
        if vals.iter().any(|v| !v.is_finite()) || self.bandwidth_per_link_mhz <= 0.0 || self.carrier_ghz <= 0.0 {
            return Err(Error::Config(format!("radio profile `{name}` invalid")));
        }
        Ok(())
    }

    pub fn bandwidth_hz(&self) -> f64 {
        self.bandwidth_per_link_mhz * 1e6
    }
}

/// Radio profiles per transmission direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RadioProfiles {
    /// Airplane to airplane.
    pub a2a: RadioProfile,
    /// Airplane (or base station) to ship/GS/BS.
    pub a2g_to_ground: RadioProfile,
    /// Ship/GS/BS to airplane.
    pub a2g_to_air: RadioProfile,
    /// Satellite to airplane.
    pub downlink_to_air: RadioProfile,
    /// Satellite to ship/GS.
    pub downlink_to_ground: RadioProfile,
    /// Airplane/ship/GS to satellite.
    pub uplink: RadioProfile,
    pub isl: RadioProfile,
}

impl Default for RadioProfiles {
    fn default() -> Self {
        let air = RadioProfile {
            carrier_ghz: 14.0,
            bandwidth_per_link_mhz: 10.0,
            tx_power_dbm: 30.0,
            tx_gain_dbi: 25.0,
            gt_db_per_k: 1.5,
        };
        let down = RadioProfile {
            carrier_ghz: 20.0,
            bandwidth_per_link_mhz: 5.0,
            tx_power_dbm: 21.5,
            tx_gain_dbi: 38.5,
            gt_db_per_k: 16.2,
        };
        Self {
            a2a: air,
            a2g_to_ground: RadioProfile {
                gt_db_per_k: 1.2,
                ..air
            },
            a2g_to_air: air,
            downlink_to_air: down,
            downlink_to_ground: RadioProfile {
                gt_db_per_k: 15.9,
                ..down
            },
            uplink: RadioProfile {
                carrier_ghz: 30.0,
                bandwidth_per_link_mhz: 5.0,
                tx_power_dbm: 33.0,
                tx_gain_dbi: 43.2,
                gt_db_per_k: 13.0,
            },
            isl: RadioProfile {
                carrier_ghz: 23.0,
                bandwidth_per_link_mhz: 400.0,
                tx_power_dbm: 21.5,
                tx_gain_dbi: 38.5,
                gt_db_per_k: 13.0,
            },
        }
    }
}

impl RadioProfiles {
    pub fn validate(&self) -> Result<()> {
        self.a2a.validate("a2a")?;
        self.a2g_to_ground.validate("a2g_to_ground")?;
        self.a2g_to_air.validate("a2g_to_air")?;
        self.downlink_to_air.validate("downlink_to_air")?;
        self.downlink_to_ground.validate("downlink_to_ground")?;
        self.uplink.validate("uplink")?;
        self.isl.validate("isl")
    }

    /// Profile used when `tx` transmits to `rx`.
    pub fn for_direction(&self, tx: NodeKind, rx: NodeKind) -> Option<&RadioProfile> {
        use NodeKind::*;
        let class = classify(tx, rx)?;
        Some(match class {
            LinkClass::ISL => &self.isl,
            LinkClass::A2A => &self.a2a,
            LinkClass::S2A | LinkClass::S2G => {
                if tx == Satellite {
                    match rx {
                        Airplane => &self.downlink_to_air,
                        _ => &self.downlink_to_ground,
                    }
                } else {
                    &self.uplink
                }
            }
            LinkClass::A2G => match rx {
                Airplane => &self.a2g_to_air,
                _ => &self.a2g_to_ground,
            },
        })
    }
}

/// Free-space path loss, dB.
pub fn fspl_db(freq_ghz: f64, distance_km: f64) -> Result<f64> {
    if !(distance_km > 0.0) || !(freq_ghz > 0.0) {
        return Err(Error::Degenerate(format!(
            "path loss needs positive distance and frequency (d={distance_km} km, f={freq_ghz} GHz)"
        )));
    }
    let d_m = distance_km * 1e3;
    let f_hz = freq_ghz * 1e9;
    let c = SPEED_OF_LIGHT_KMS * 1e3;
    Ok(20.0 * (4.0 * std::f64::consts::PI * d_m * f_hz / c).log10())
}

/// Received SNR from the G/T link budget, dB.
pub fn snr_db(profile: &RadioProfile, distance_km: f64) -> Result<f64> {
    let loss = fspl_db(profile.carrier_ghz, distance_km)?;
    Ok((profile.tx_power_dbm - 30.0) + profile.tx_gain_dbi - loss + profile.gt_db_per_k
        - (BOLTZMANN_DBW + 10.0 * profile.bandwidth_hz().log10()))
}

/// Shannon capacity, bit/s.
pub fn shannon_throughput(profile: &RadioProfile, distance_km: f64) -> Result<f64> {
    let snr = 10f64.powf(snr_db(profile, distance_km)? / 10.0);
    Ok(profile.bandwidth_hz() * (1.0 + snr).log2())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkMetrics {
    pub delay_s: f64,
    pub throughput_bps: f64,
    pub lifetime_s: f64,
}

/// Link-level tunables.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LinkConfig {
    pub profiles: RadioProfiles,
    pub footprint_radius_km: f64,
    pub base_station_radius_km: f64,
    pub packet_bits: f64,
    pub lifetime_step_s: f64,
    pub lifetime_horizon_s: f64,
}

impl Default for LinkConfig {
    fn default() -> Self {
        Self {
            profiles: RadioProfiles::default(),
            footprint_radius_km: FOOTPRINT_RADIUS_KM,
            base_station_radius_km: BASE_STATION_RADIUS_KM,
            packet_bits: PACKET_BITS,
            lifetime_step_s: 10.0,
            lifetime_horizon_s: 3600.0,
        }
    }
}

/// Link evaluation over one scenario. Holds the inter-satellite adjacency
/// (two intra-plane and up to two cross-plane neighbors per satellite).
#[derive(Debug)]
pub struct LinkModel<'a> {
    pub scenario: &'a Scenario,
    pub config: LinkConfig,
    isl_pairs: HashSet<(String, String)>,
}

fn ordered(a: &str, b: &str) -> (String, String) {
    if a <= b {
        (a.to_string(), b.to_string())
    } else {
        (b.to_string(), a.to_string())
    }
}

/// Orbital-neighbor pairs among the satellite ids of a scenario. Planes are
/// cross-linked with their neighbors except across the counter-rotating seam
/// between the last and the first plane.
pub fn isl_neighbor_pairs<'s>(ids: impl Iterator<Item = &'s str>) -> HashSet<(String, String)> {
    let slots: Vec<(usize, usize)> = ids.filter_map(parse_satellite_id).collect();
    let n_planes = slots.iter().map(|s| s.0 + 1).max().unwrap_or(0);
    let per_plane = slots.iter().map(|s| s.1 + 1).max().unwrap_or(0);
    let present: HashSet<(usize, usize)> = slots.iter().copied().collect();
    let id = |p: usize, s: usize| crate::mobility::satellite_id(p, s);
    let mut pairs = HashSet::new();
    for &(p, s) in &slots {
        if per_plane > 1 {
            let next = (s + 1) % per_plane;
            if next != s && present.contains(&(p, next)) {
                pairs.insert(ordered(&id(p, s), &id(p, next)));
            }
        }
        if p + 1 < n_planes && present.contains(&(p + 1, s)) {
            pairs.insert(ordered(&id(p, s), &id(p + 1, s)));
        }
    }
    pairs
}

impl<'a> LinkModel<'a> {
    pub fn new(scenario: &'a Scenario, config: LinkConfig) -> Result<Self> {
        config.profiles.validate()?;
        if !(config.lifetime_step_s > 0.0) || !(config.lifetime_horizon_s > 0.0) {
            return Err(Error::Config("lifetime step and horizon must be > 0".into()));
        }
        let isl_pairs = isl_neighbor_pairs(
            scenario
                .traces
                .iter()
                .filter(|t| t.kind == NodeKind::Satellite)
                .map(|t| t.id.as_str()),
        );
        Ok(Self {
            scenario,
            config,
            isl_pairs,
        })
    }

    pub fn is_isl_pair(&self, a: &str, b: &str) -> bool {
        self.isl_pairs.contains(&ordered(a, b))
    }

    /// Whether a link of this pair exists with the given positions.
    pub fn connected(&self, a: (&str, NodeKind, &GeoPos), b: (&str, NodeKind, &GeoPos)) -> bool {
        let Some(class) = classify(a.1, b.1) else {
            return false;
        };
        if class == LinkClass::ISL && !self.is_isl_pair(a.0, b.0) {
            return false;
        }
        if !geo::visible(a.2, b.2) {
            return false;
        }
        match class {
            LinkClass::S2A | LinkClass::S2G => {
                geo::ground_distance(a.2, b.2) <= self.config.footprint_radius_km
            }
            _ if a.1 == NodeKind::BaseStation || b.1 == NodeKind::BaseStation => {
                geo::ground_distance(a.2, b.2) <= self.config.base_station_radius_km
            }
            _ => true,
        }
    }

    fn connected_at(&self, a: &str, b: &str, t: f64) -> Result<Option<bool>> {
        let ta = self.scenario.trace(a)?;
        let tb = self.scenario.trace(b)?;
        match (ta.position_at(t), tb.position_at(t)) {
            (Some(ka), Some(kb)) => Ok(Some(self.connected((a, ta.kind, &ka.pos), (b, tb.kind, &kb.pos)))),
            _ => Ok(None),
        }
    }

    /// Delay and throughput when `tx` sends to `rx` over `distance_km`.
    pub fn radio(&self, tx: NodeKind, rx: NodeKind, distance_km: f64) -> Result<Option<(f64, f64)>> {
        let Some(profile) = self.config.profiles.for_direction(tx, rx) else {
            return Ok(None);
        };
        let d = distance_km.max(MIN_LINK_DISTANCE_KM);
        let thr = shannon_throughput(profile, d)?;
        let delay = d / SPEED_OF_LIGHT_KMS + self.config.packet_bits / thr;
        Ok(Some((delay, thr)))
    }

    /// Metrics of the directed link `a -> b` at `t`, or `None` when there is no link.
    pub fn link_metrics(&self, a: &str, b: &str, t: f64) -> Result<Option<LinkMetrics>> {
        let ta = self.scenario.trace(a)?;
        let tb = self.scenario.trace(b)?;
        let (Some(ka), Some(kb)) = (ta.position_at(t), tb.position_at(t)) else {
            return Ok(None);
        };
        if !self.connected((a, ta.kind, &ka.pos), (b, tb.kind, &kb.pos)) {
            return Ok(None);
        }
        let Some((delay_s, throughput_bps)) =
            self.radio(ta.kind, tb.kind, geo::slant_distance(&ka.pos, &kb.pos))?
        else {
            return Ok(None);
        };
        let lifetime_s = self.link_lifetime(a, b, t, self.config.lifetime_step_s, self.config.lifetime_horizon_s)?;
        Ok(Some(LinkMetrics {
            delay_s,
            throughput_bps,
            lifetime_s,
        }))
    }

    /// Remaining visibility of an existing link: scans forward at `step_s`, then
    /// bisects the loss instant to within one second. Capped at `horizon_s`,
    /// which is also returned when either trace ends before the link breaks.
    pub fn link_lifetime(&self, a: &str, b: &str, t: f64, step_s: f64, horizon_s: f64) -> Result<f64> {
        let mut k = 1usize;
        loop {
            let dt = k as f64 * step_s;
            if dt >= horizon_s {
                return Ok(horizon_s);
            }
            match self.connected_at(a, b, t + dt)? {
                None => return Ok(horizon_s),
                Some(true) => k += 1,
                Some(false) => {
                    let mut lo = dt - step_s;
                    let mut hi = dt;
                    while hi - lo > 1.0 {
                        let mid = 0.5 * (lo + hi);
                        match self.connected_at(a, b, t + mid)? {
                            Some(true) => lo = mid,
                            _ => hi = mid,
                        }
                    }
                    return Ok(hi.min(horizon_s));
                }
            }
        }
    }
}
