//! Node trajectories: constellation propagation, synthetic flights and ships,
//! time-shift augmentation, interpolation, and the trace CSV format.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use chrono::{DateTime, TimeZone, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::{self, GeoPos, EARTH_RADIUS_KM};

/// Standard gravitational parameter of the Earth, km^3/s^2.
pub const MU_EARTH: f64 = 398_600.0;
/// Sampling interval of generated traces, seconds.
pub const TRACE_STEP_S: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Satellite,
    Airplane,
    Ship,
    GroundStation,
    BaseStation,
}

impl NodeKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            NodeKind::Satellite => "satellite",
            NodeKind::Airplane => "airplane",
            NodeKind::Ship => "ship",
            NodeKind::GroundStation => "ground_station",
            NodeKind::BaseStation => "base_station",
        }
    }
}

impl fmt::Display for NodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for NodeKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(match s {
            "satellite" => NodeKind::Satellite,
            "airplane" => NodeKind::Airplane,
            "ship" => NodeKind::Ship,
            "ground_station" => NodeKind::GroundStation,
            "base_station" => NodeKind::BaseStation,
            other => return Err(format!("unknown node kind `{other}`")),
        })
    }
}

/// Position, speed and heading of a node at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Kinematics {
    pub pos: GeoPos,
    pub speed_kmh: f64,
    pub heading_deg: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub t: f64,
    pub pos: GeoPos,
    pub speed_kmh: f64,
    pub heading_deg: f64,
}

impl TraceRecord {
    pub fn kinematics(&self) -> Kinematics {
        Kinematics {
            pos: self.pos,
            speed_kmh: self.speed_kmh,
            heading_deg: self.heading_deg,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeTrace {
    pub id: String,
    pub kind: NodeKind,
    pub records: Vec<TraceRecord>,
}

fn lerp_angle_deg(a: f64, b: f64, frac: f64) -> f64 {
    let diff = (b - a + 180.0).rem_euclid(360.0) - 180.0;
    (a + diff * frac).rem_euclid(360.0)
}

impl NodeTrace {
    pub fn span(&self) -> (f64, f64) {
        (
            self.records.first().map_or(f64::NAN, |r| r.t),
            self.records.last().map_or(f64::NAN, |r| r.t),
        )
    }

    pub fn alive_at(&self, t: f64) -> bool {
        let (a, b) = self.span();
        t >= a && t <= b
    }

    /// Interpolated state at `t`, or `None` outside the trace span.
    pub fn position_at(&self, t: f64) -> Option<Kinematics> {
        let recs = &self.records;
        let first = recs.first()?;
        let last = recs.last()?;
        if !(t >= first.t && t <= last.t) {
            return None;
        }
        // index of the first record with r.t > t
        let hi = recs.partition_point(|r| r.t <= t);
        if hi == 0 {
            return Some(first.kinematics());
        }
        let lo = &recs[hi - 1];
        if lo.t == t || hi == recs.len() {
            return Some(lo.kinematics());
        }
        let up = &recs[hi];
        let frac = (t - lo.t) / (up.t - lo.t);
        Some(Kinematics {
            pos: geo::interpolate(&lo.pos, &up.pos, frac),
            speed_kmh: lo.speed_kmh + (up.speed_kmh - lo.speed_kmh) * frac,
            heading_deg: lerp_angle_deg(lo.heading_deg, up.heading_deg, frac),
        })
    }

    fn validate(&self) -> Result<()> {
        if self.records.is_empty() {
            return Err(Error::Schema(format!("trace `{}` has no records", self.id)));
        }
        for w in self.records.windows(2) {
            if !(w[1].t > w[0].t) {
                return Err(Error::Schema(format!(
                    "trace `{}` timestamps not strictly increasing at t={}",
                    self.id, w[1].t
                )));
            }
        }
        Ok(())
    }
}

/// Walker-star constellation geometry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstellationParams {
    pub n_planes: usize,
    pub sats_per_plane: usize,
    pub altitude_km: f64,
    pub inclination_deg: f64,
    pub raan_spacing_deg: f64,
    /// Shift of the in-plane phase between adjacent planes.
    pub phase_offset_deg: f64,
}

impl Default for ConstellationParams {
    /// Iridium-like: 6 planes of 11 satellites at 781 km, 86.4 deg inclination.
    fn default() -> Self {
        Self {
            n_planes: 6,
            sats_per_plane: 11,
            altitude_km: 781.0,
            inclination_deg: 86.4,
            raan_spacing_deg: 30.0,
            phase_offset_deg: 180.0 / 11.0,
        }
    }
}

impl ConstellationParams {
    pub fn total(&self) -> usize {
        self.n_planes * self.sats_per_plane
    }

    /// Circular orbital speed, km/s.
    pub fn orbital_speed_kms(&self) -> f64 {
        orbital_speed_kms(self.altitude_km)
    }

    pub fn period_s(&self) -> f64 {
        2.0 * std::f64::consts::PI * (EARTH_RADIUS_KM + self.altitude_km) / self.orbital_speed_kms()
    }
}

pub fn orbital_speed_kms(altitude_km: f64) -> f64 {
    (MU_EARTH / (EARTH_RADIUS_KM + altitude_km)).sqrt()
}

/// Node id of the satellite in `plane`, `slot`.
pub fn satellite_id(plane: usize, slot: usize) -> String {
    format!("sat-{plane:02}-{slot:02}")
}

/// Parses a satellite id produced by [`satellite_id`].
pub fn parse_satellite_id(id: &str) -> Option<(usize, usize)> {
    let rest = id.strip_prefix("sat-")?;
    let (p, s) = rest.split_once('-')?;
    Some((p.parse().ok()?, s.parse().ok()?))
}

fn satellite_state(params: &ConstellationParams, plane: usize, slot: usize, t: f64) -> Kinematics {
    let r = EARTH_RADIUS_KM + params.altitude_km;
    let v = params.orbital_speed_kms();
    let raan = (plane as f64 * params.raan_spacing_deg).to_radians();
    let inc = params.inclination_deg.to_radians();
    let u0 = (slot as f64 * 360.0 / params.sats_per_plane as f64
        + plane as f64 * params.phase_offset_deg)
        .to_radians();
    let u = u0 + v / r * t;
    let (so, co) = raan.sin_cos();
    let (si, ci) = inc.sin_cos();
    let (su, cu) = u.sin_cos();
    let pos = [co * cu - so * su * ci, so * cu + co * su * ci, su * si];
    // d(pos)/du
    let vel = [-co * su - so * cu * ci, -so * su + co * cu * ci, cu * si];
    let gp = geo::from_ecef(&geo::EcefVec {
        x_km: r * pos[0],
        y_km: r * pos[1],
        z_km: r * pos[2],
    });
    let (slat, clat) = gp.lat_deg.to_radians().sin_cos();
    let (slon, clon) = gp.lon_deg.to_radians().sin_cos();
    let east = -slon * vel[0] + clon * vel[1];
    let north = -slat * clon * vel[0] - slat * slon * vel[1] + clat * vel[2];
    Kinematics {
        pos: GeoPos {
            alt_km: params.altitude_km,
            ..gp
        },
        speed_kmh: v * 3600.0,
        heading_deg: east.atan2(north).to_degrees().rem_euclid(360.0),
    }
}

/// Circular-orbit traces for every satellite, sampled every `step_s` over `[0, duration_s]`.
pub fn propagate_constellation(
    params: &ConstellationParams,
    duration_s: f64,
    step_s: f64,
) -> Result<Vec<NodeTrace>> {
    if !(params.altitude_km > 0.0) {
        return Err(Error::Range(format!("altitude {} km must be > 0", params.altitude_km)));
    }
    if !(step_s > 0.0) || !(duration_s >= 0.0) {
        return Err(Error::Range("step_s must be > 0 and duration_s >= 0".into()));
    }
    if params.n_planes == 0 || params.sats_per_plane == 0 {
        return Err(Error::Range("constellation must have at least one satellite".into()));
    }
    let n_steps = (duration_s / step_s).floor() as usize;
    let mut times: Vec<f64> = (0..=n_steps).map(|k| k as f64 * step_s).collect();
    if *times.last().unwrap() < duration_s {
        times.push(duration_s);
    }
    let mut out = Vec::with_capacity(params.total());
    for plane in 0..params.n_planes {
        for slot in 0..params.sats_per_plane {
            let records = times
                .iter()
                .map(|&t| {
                    let k = satellite_state(params, plane, slot, t);
                    TraceRecord {
                        t,
                        pos: k.pos,
                        speed_kmh: k.speed_kmh,
                        heading_deg: k.heading_deg,
                    }
                })
                .collect();
            out.push(NodeTrace {
                id: satellite_id(plane, slot),
                kind: NodeKind::Satellite,
                records,
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlightRoute {
    pub origin: GeoPos,
    pub dest: GeoPos,
    pub departure_t: f64,
}

/// Constant-altitude, constant-speed great-circle flights sampled every 10 s.
pub fn synth_flights(
    routes: &[FlightRoute],
    cruise_alt_km: f64,
    cruise_speed_kmh: f64,
) -> Result<Vec<NodeTrace>> {
    if !(cruise_speed_kmh > 0.0) {
        return Err(Error::Range("cruise speed must be > 0".into()));
    }
    routes
        .iter()
        .enumerate()
        .map(|(i, route)| {
            let o = route.origin.sub_point();
            let d = route.dest.sub_point();
            let length = geo::ground_distance(&o, &d);
            if !(length > 1e-6) {
                return Err(Error::Degenerate(format!("flight route {i} has zero length")));
            }
            let duration = length / cruise_speed_kmh * 3600.0;
            let mut offsets: Vec<f64> = Vec::new();
            let mut k = 0usize;
            while (k as f64) * TRACE_STEP_S < duration - 1e-6 {
                offsets.push(k as f64 * TRACE_STEP_S);
                k += 1;
            }
            offsets.push(duration);
            let final_heading = (geo::initial_bearing(&d, &o) + 180.0).rem_euclid(360.0);
            let records = offsets
                .iter()
                .map(|&dt| {
                    let frac = dt / duration;
                    let mut pos = geo::interpolate(&o, &d, frac);
                    pos.alt_km = cruise_alt_km;
                    let heading_deg = if frac >= 1.0 {
                        final_heading
                    } else {
                        geo::initial_bearing(&pos, &d)
                    };
                    TraceRecord {
                        t: route.departure_t + dt,
                        pos,
                        speed_kmh: cruise_speed_kmh,
                        heading_deg,
                    }
                })
                .collect();
            Ok(NodeTrace {
                id: format!("ac-{i:04}"),
                kind: NodeKind::Airplane,
                records,
            })
        })
        .collect()
}

/// A node that sits at one place for the whole span.
pub fn static_trace(id: &str, kind: NodeKind, pos: GeoPos, duration_s: f64) -> NodeTrace {
    let mut records = Vec::new();
    let mut k = 0usize;
    while (k as f64) * TRACE_STEP_S < duration_s {
        records.push(k as f64 * TRACE_STEP_S);
        k += 1;
    }
    records.push(duration_s.max(0.0));
    NodeTrace {
        id: id.to_string(),
        kind,
        records: records
            .into_iter()
            .map(|t| TraceRecord {
                t,
                pos,
                speed_kmh: 0.0,
                heading_deg: 0.0,
            })
            .collect(),
    }
}

/// Latitude/longitude box, degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub lat_min: f64,
    pub lat_max: f64,
    pub lon_min: f64,
    pub lon_max: f64,
}

impl BoundingBox {
    pub const NORTH_ATLANTIC: BoundingBox = BoundingBox {
        lat_min: 38.0,
        lat_max: 58.0,
        lon_min: -55.0,
        lon_max: -12.0,
    };

    fn sample(&self, rng: &mut impl Rng) -> GeoPos {
        GeoPos {
            lat_deg: rng.gen_range(self.lat_min..=self.lat_max),
            lon_deg: rng.gen_range(self.lon_min..=self.lon_max),
            alt_km: 0.0,
        }
    }
}

/// Ships: a fraction are static, the rest follow random waypoints at up to 40 km/h.
pub fn synth_ships(
    n: usize,
    bbox: &BoundingBox,
    duration_s: f64,
    seed: u64,
) -> Vec<NodeTrace> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let id = format!("ship-{i:03}");
            let start = bbox.sample(&mut rng);
            if rng.gen_bool(0.3) {
                return static_trace(&id, NodeKind::Ship, start, duration_s);
            }
            let speed = rng.gen_range(15.0..=40.0);
            let step_km = speed * TRACE_STEP_S / 3600.0;
            let mut pos = start;
            let mut target = bbox.sample(&mut rng);
            let n_rec = (duration_s / TRACE_STEP_S).ceil() as usize;
            let mut records = Vec::with_capacity(n_rec + 1);
            for k in 0..=n_rec {
                if geo::ground_distance(&pos, &target) < step_km {
                    target = bbox.sample(&mut rng);
                }
                let heading = geo::initial_bearing(&pos, &target);
                records.push(TraceRecord {
                    t: k as f64 * TRACE_STEP_S,
                    pos,
                    speed_kmh: speed,
                    heading_deg: heading,
                });
                pos = geo::destination(&pos, heading, step_km);
            }
            NodeTrace {
                id,
                kind: NodeKind::Ship,
                records,
            }
        })
        .collect()
}

/// Shifts every airplane trace along the timeline by an independent N(0, sigma) draw,
/// rounded to whole seconds so record spacing is preserved exactly.
pub fn time_shift_augment(traces: &[NodeTrace], sigma_s: f64, seed: u64) -> Result<Vec<NodeTrace>> {
    if !(sigma_s >= 0.0) {
        return Err(Error::Range("sigma_s must be >= 0".into()));
    }
    if sigma_s == 0.0 {
        return Ok(traces.to_vec());
    }
    let normal = Normal::new(0.0, sigma_s).map_err(|e| Error::Range(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(traces
        .iter()
        .map(|tr| {
            if tr.kind != NodeKind::Airplane {
                return tr.clone();
            }
            let shift = normal.sample(&mut rng).round();
            let mut out = tr.clone();
            for r in &mut out.records {
                r.t += shift;
            }
            out
        })
        .collect())
}

/// Scenario metadata stored next to the trace CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioMeta {
    pub epoch: DateTime<Utc>,
    pub duration_s: f64,
    pub destination_id: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub epoch: DateTime<Utc>,
    pub duration_s: f64,
    pub traces: Vec<NodeTrace>,
    pub destination_id: String,
    index: HashMap<String, usize>,
}

impl Scenario {
    pub fn new(
        epoch: DateTime<Utc>,
        duration_s: f64,
        traces: Vec<NodeTrace>,
        destination_id: impl Into<String>,
    ) -> Result<Self> {
        let destination_id = destination_id.into();
        if traces.is_empty() {
            return Err(Error::Schema("scenario has no nodes".into()));
        }
        let mut index = HashMap::with_capacity(traces.len());
        for (i, tr) in traces.iter().enumerate() {
            tr.validate()?;
            if index.insert(tr.id.clone(), i).is_some() {
                return Err(Error::Schema(format!("duplicate node id `{}`", tr.id)));
            }
        }
        if !index.contains_key(&destination_id) {
            return Err(Error::Schema(format!(
                "destination `{destination_id}` not among traces"
            )));
        }
        Ok(Self {
            epoch,
            duration_s,
            traces,
            destination_id,
            index,
        })
    }

    pub fn trace(&self, id: &str) -> Result<&NodeTrace> {
        self.index
            .get(id)
            .map(|&i| &self.traces[i])
            .ok_or_else(|| Error::UnknownNode(id.to_string()))
    }

    pub fn meta(&self) -> ScenarioMeta {
        ScenarioMeta {
            epoch: self.epoch,
            duration_s: self.duration_s,
            destination_id: self.destination_id.clone(),
        }
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= 0.0 && t <= self.duration_s
    }
}

pub const TRACE_CSV_HEADER: [&str; 8] = [
    "node_id",
    "kind",
    "t_s",
    "lat_deg",
    "lon_deg",
    "alt_km",
    "speed_kmh",
    "heading_deg",
];

pub fn write_traces_csv<W: Write>(traces: &[NodeTrace], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record(TRACE_CSV_HEADER)?;
    for tr in traces {
        for r in &tr.records {
            w.write_record([
                tr.id.clone(),
                tr.kind.to_string(),
                r.t.to_string(),
                r.pos.lat_deg.to_string(),
                r.pos.lon_deg.to_string(),
                r.pos.alt_km.to_string(),
                r.speed_kmh.to_string(),
                r.heading_deg.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_traces_csv<R: Read>(input: R) -> Result<Vec<NodeTrace>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let header = rdr.headers()?.clone();
    if header.iter().ne(TRACE_CSV_HEADER.iter().copied()) {
        return Err(Error::Parse {
            line: 1,
            msg: format!("expected header `{}`", TRACE_CSV_HEADER.join(",")),
        });
    }
    let mut traces: Vec<NodeTrace> = Vec::new();
    let mut seen: HashSet<String> = HashSet::new();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        let perr = |msg: String| Error::Parse { line, msg };
        if row.len() != 8 {
            return Err(perr(format!("expected 8 fields, found {}", row.len())));
        }
        let num = |i: usize| -> Result<f64> {
            let v: f64 = row[i]
                .trim()
                .parse()
                .map_err(|_| perr(format!("field `{}` is not a number: `{}`", TRACE_CSV_HEADER[i], &row[i])))?;
            if !v.is_finite() {
                return Err(perr(format!("field `{}` is not finite", TRACE_CSV_HEADER[i])));
            }
            Ok(v)
        };
        let id = row[0].to_string();
        if id.is_empty() {
            return Err(perr("empty node_id".into()));
        }
        let kind: NodeKind = row[1].parse().map_err(perr)?;
        let t = num(2)?;
        let (lat, lon, alt) = (num(3)?, num(4)?, num(5)?);
        let speed = num(6)?;
        let heading = num(7)?;
        if !(0.0..360.0).contains(&heading) {
            return Err(perr(format!("heading {heading} outside [0, 360)")));
        }
        if speed < 0.0 {
            return Err(perr(format!("negative speed {speed}")));
        }
        if !(-180.0..180.0).contains(&lon) {
            return Err(perr(format!("longitude {lon} outside [-180, 180)")));
        }
        let pos = GeoPos::new(lat, lon, alt).map_err(|e| perr(e.to_string()))?;
        let rec = TraceRecord {
            t,
            pos,
            speed_kmh: speed,
            heading_deg: heading,
        };
        match traces.last_mut() {
            Some(tr) if tr.id == id => {
                if tr.kind != kind {
                    return Err(perr(format!("node `{id}` changes kind")));
                }
                if !(t > tr.records.last().unwrap().t) {
                    return Err(perr(format!("timestamps of `{id}` not strictly increasing")));
                }
                tr.records.push(rec);
            }
            _ => {
                if !seen.insert(id.clone()) {
                    return Err(Error::Schema(format!(
                        "duplicate node id `{id}` (line {line}): rows of a node must be contiguous"
                    )));
                }
                traces.push(NodeTrace {
                    id,
                    kind,
                    records: vec![rec],
                });
            }
        }
    }
    Ok(traces)
}

fn meta_path(csv_path: &Path) -> std::path::PathBuf {
    csv_path.with_extension("json")
}

/// Writes `path` (trace CSV) and the metadata JSON next to it (same stem, `.json`).
pub fn save_traces(scenario: &Scenario, path: &Path) -> Result<()> {
    let f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_traces_csv(&scenario.traces, f)?;
    let meta = serde_json::to_string_pretty(&scenario.meta())?;
    std::fs::write(meta_path(path), meta + "\n")?;
    Ok(())
}

pub fn load_traces(path: &Path) -> Result<Scenario> {
    let f = std::io::BufReader::new(std::fs::File::open(path)?);
    let traces = read_traces_csv(f)?;
    let meta: ScenarioMeta = serde_json::from_slice(&std::fs::read(meta_path(path))?)?;
    Scenario::new(meta.epoch, meta.duration_s, traces, meta.destination_id)
}

/// Named airport, used by the default flight schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Airport {
    pub code: String,
    pub lat_deg: f64,
    pub lon_deg: f64,
}

fn airport(code: &str, lat: f64, lon: f64) -> Airport {
    Airport {
        code: code.into(),
        lat_deg: lat,
        lon_deg: lon,
    }
}

pub fn default_north_american_airports() -> Vec<Airport> {
    vec![
        airport("JFK", 40.64, -73.78),
        airport("BOS", 42.36, -71.01),
        airport("YUL", 45.47, -73.74),
        airport("YYZ", 43.68, -79.63),
        airport("IAD", 38.95, -77.46),
        airport("ORD", 41.98, -87.90),
        airport("YHZ", 44.88, -63.51),
        airport("PHL", 39.87, -75.24),
    ]
}

pub fn default_european_airports() -> Vec<Airport> {
    vec![
        airport("LHR", 51.47, -0.45),
        airport("DUB", 53.42, -6.27),
        airport("CDG", 49.01, 2.55),
        airport("AMS", 52.31, 4.76),
        airport("FRA", 50.03, 8.56),
        airport("MAD", 40.47, -3.56),
        airport("LIS", 38.77, -9.13),
        airport("KEF", 63.99, -22.62),
    ]
}

/// Transatlantic schedule with a diurnal pattern: eastbound departures cluster
/// around the North American evening, westbound around the European midday.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlightSchedule {
    pub n_flights: usize,
    pub west_airports: Vec<Airport>,
    pub east_airports: Vec<Airport>,
    /// Peak departure hour (UTC) of eastbound flights.
    pub eastbound_peak_h: f64,
    /// Peak departure hour (UTC) of westbound flights.
    pub westbound_peak_h: f64,
    pub spread_h: f64,
}

impl Default for FlightSchedule {
    fn default() -> Self {
        Self {
            n_flights: 120,
            west_airports: default_north_american_airports(),
            east_airports: default_european_airports(),
            eastbound_peak_h: 23.0,
            westbound_peak_h: 12.0,
            spread_h: 2.5,
        }
    }
}

impl FlightSchedule {
    pub fn routes(&self, seed: u64) -> Result<Vec<FlightRoute>> {
        if self.west_airports.is_empty() || self.east_airports.is_empty() {
            return Err(Error::Config("flight schedule needs airports on both sides".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let jitter = Normal::new(0.0, self.spread_h).map_err(|e| Error::Config(e.to_string()))?;
        let pick = |rng: &mut ChaCha8Rng, v: &[Airport]| {
            let a = &v[rng.gen_range(0..v.len())];
            GeoPos::new(a.lat_deg, a.lon_deg, 0.0)
        };
        (0..self.n_flights)
            .map(|i| {
                let west = pick(&mut rng, &self.west_airports)?;
                let east = pick(&mut rng, &self.east_airports)?;
                let eastbound = i % 2 == 0;
                let peak = if eastbound {
                    self.eastbound_peak_h
                } else {
                    self.westbound_peak_h
                };
                let hour = (peak + jitter.sample(&mut rng)).rem_euclid(24.0);
                let departure_t = (hour * 3600.0 / TRACE_STEP_S).round() * TRACE_STEP_S;
                let (origin, dest) = if eastbound { (west, east) } else { (east, west) };
                Ok(FlightRoute {
                    origin,
                    dest,
                    departure_t,
                })
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Site {
    pub id: String,
    pub lat_deg: f64,
    pub lon_deg: f64,
}

/// Parameters of the synthetic scenario generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioGenParams {
    pub epoch: DateTime<Utc>,
    pub duration_s: f64,
    pub constellation: ConstellationParams,
    pub schedule: FlightSchedule,
    pub cruise_alt_km: f64,
    pub cruise_speed_kmh: f64,
    pub n_ships: usize,
    pub ship_box: BoundingBox,
    pub ground_stations: Vec<Site>,
    pub base_stations: Vec<Site>,
    pub destination_id: String,
}

impl Default for ScenarioGenParams {
    fn default() -> Self {
        Self {
            epoch: Utc.with_ymd_and_hms(2018, 6, 29, 0, 0, 0).unwrap(),
            duration_s: 86_400.0,
            constellation: ConstellationParams::default(),
            schedule: FlightSchedule::default(),
            cruise_alt_km: 12.0,
            cruise_speed_kmh: 900.0,
            n_ships: 30,
            ship_box: BoundingBox::NORTH_ATLANTIC,
            ground_stations: vec![
                Site {
                    id: "gs-southampton".into(),
                    lat_deg: 50.90,
                    lon_deg: -1.40,
                },
                Site {
                    id: "gs-halifax".into(),
                    lat_deg: 44.65,
                    lon_deg: -63.57,
                },
            ],
            base_stations: Vec::new(),
            destination_id: "gs-southampton".into(),
        }
    }
}

/// Base traces of a synthetic scenario: constellation, flights, ships and fixed sites.
pub fn generate_scenario(params: &ScenarioGenParams, seed: u64) -> Result<Scenario> {
    let mut traces = propagate_constellation(&params.constellation, params.duration_s, TRACE_STEP_S)?;
    let routes = params.schedule.routes(seed)?;
    traces.extend(synth_flights(&routes, params.cruise_alt_km, params.cruise_speed_kmh)?);
    traces.extend(synth_ships(
        params.n_ships,
        &params.ship_box,
        params.duration_s,
        seed.wrapping_add(1),
    ));
    for s in &params.ground_stations {
        let pos = GeoPos::new(s.lat_deg, s.lon_deg, 0.0)?;
        traces.push(static_trace(&s.id, NodeKind::GroundStation, pos, params.duration_s));
    }
    for s in &params.base_stations {
        let pos = GeoPos::new(s.lat_deg, s.lon_deg, 0.0)?;
        traces.push(static_trace(&s.id, NodeKind::BaseStation, pos, params.duration_s));
    }
    Scenario::new(params.epoch, params.duration_s, traces, params.destination_id.clone())
}
