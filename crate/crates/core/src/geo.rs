//! Spherical-Earth geodesy: coordinate conversion, great-circle helpers and
//! line-of-sight visibility over the Earth's curvature.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Mean Earth radius in km.
pub const EARTH_RADIUS_KM: f64 = 6371.0;

/// Geodetic position on a spherical Earth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPos {
    pub lat_deg: f64,
    pub lon_deg: f64,
    pub alt_km: f64,
}

/// Earth-centered Earth-fixed vector in km.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EcefVec {
    pub x_km: f64,
    pub y_km: f64,
    pub z_km: f64,
}

/// Wraps a longitude into [-180, 180).
pub fn normalize_lon(lon_deg: f64) -> f64 {
    let l = (lon_deg + 180.0).rem_euclid(360.0) - 180.0;
    // rem_euclid can round up to exactly 360 for tiny negative inputs
    if l >= 180.0 {
        l - 360.0
    } else {
        l
    }
}

impl GeoPos {
    /// Validated constructor. Latitude outside [-90, 90] is rejected, longitude is wrapped.
    pub fn new(lat_deg: f64, lon_deg: f64, alt_km: f64) -> Result<Self> {
        if !lat_deg.is_finite() || !(-90.0..=90.0).contains(&lat_deg) {
            return Err(Error::Range(format!("latitude {lat_deg} outside [-90, 90]")));
        }
        if !lon_deg.is_finite() {
            return Err(Error::Range(format!("longitude {lon_deg} is not finite")));
        }
        if !alt_km.is_finite() || alt_km < 0.0 {
            return Err(Error::Range(format!("altitude {alt_km} km must be finite and >= 0")));
        }
        Ok(Self {
            lat_deg,
            lon_deg: normalize_lon(lon_deg),
            alt_km,
        })
    }

    /// Position on the sphere of radius `EARTH_RADIUS_KM` directly below this one.
    pub fn sub_point(&self) -> GeoPos {
        GeoPos {
            alt_km: 0.0,
            ..*self
        }
    }

    pub fn radius_km(&self) -> f64 {
        EARTH_RADIUS_KM + self.alt_km
    }

    fn unit(&self) -> [f64; 3] {
        let (slat, clat) = self.lat_deg.to_radians().sin_cos();
        let (slon, clon) = self.lon_deg.to_radians().sin_cos();
        [clat * clon, clat * slon, slat]
    }
}

impl EcefVec {
    pub fn norm(&self) -> f64 {
        (self.x_km * self.x_km + self.y_km * self.y_km + self.z_km * self.z_km).sqrt()
    }

    pub fn sub(&self, other: &EcefVec) -> EcefVec {
        EcefVec {
            x_km: self.x_km - other.x_km,
            y_km: self.y_km - other.y_km,
            z_km: self.z_km - other.z_km,
        }
    }
}

pub fn to_ecef(p: &GeoPos) -> EcefVec {
    let [ux, uy, uz] = p.unit();
    let r = p.radius_km();
    EcefVec {
        x_km: r * ux,
        y_km: r * uy,
        z_km: r * uz,
    }
}

/// Inverse of [`to_ecef`]. Altitude is clamped at zero.
pub fn from_ecef(v: &EcefVec) -> GeoPos {
    let r = v.norm();
    let lat = (v.z_km / r).clamp(-1.0, 1.0).asin().to_degrees();
    let lon = v.y_km.atan2(v.x_km).to_degrees();
    GeoPos {
        lat_deg: lat,
        lon_deg: normalize_lon(lon),
        alt_km: (r - EARTH_RADIUS_KM).max(0.0),
    }
}

pub fn slant_distance(a: &GeoPos, b: &GeoPos) -> f64 {
    to_ecef(a).sub(&to_ecef(b)).norm()
}

/// Maximum slant distance at which two nodes at altitudes `h1`, `h2` keep line of sight.
pub fn horizon_range(h1_km: f64, h2_km: f64) -> f64 {
    let term = |h: f64| (2.0 * EARTH_RADIUS_KM * h + h * h).sqrt();
    term(h1_km) + term(h2_km)
}

pub fn visible(a: &GeoPos, b: &GeoPos) -> bool {
    slant_distance(a, b) <= horizon_range(a.alt_km, b.alt_km)
}

/// Central angle between the sub-points of `a` and `b`, radians.
pub fn central_angle(a: &GeoPos, b: &GeoPos) -> f64 {
    let (lat1, lat2) = (a.lat_deg.to_radians(), b.lat_deg.to_radians());
    let dlat = lat2 - lat1;
    let dlon = (b.lon_deg - a.lon_deg).to_radians();
    let h = (dlat / 2.0).sin().powi(2) + lat1.cos() * lat2.cos() * (dlon / 2.0).sin().powi(2);
    2.0 * h.sqrt().min(1.0).asin()
}

/// Great-circle arc length between sub-points, km.
pub fn ground_distance(a: &GeoPos, b: &GeoPos) -> f64 {
    EARTH_RADIUS_KM * central_angle(a, b)
}

/// Initial great-circle bearing from `a` towards `b`, degrees in [0, 360).
pub fn initial_bearing(a: &GeoPos, b: &GeoPos) -> f64 {
    let (lat1, lat2) = (a.lat_deg.to_radians(), b.lat_deg.to_radians());
    let dlon = (b.lon_deg - a.lon_deg).to_radians();
    let y = dlon.sin() * lat2.cos();
    let x = lat1.cos() * lat2.sin() - lat1.sin() * lat2.cos() * dlon.cos();
    y.atan2(x).to_degrees().rem_euclid(360.0)
}

/// Point reached by travelling `dist_km` along the great circle starting at `a`
/// with `bearing_deg`. Altitude is carried over from `a`.
pub fn destination(a: &GeoPos, bearing_deg: f64, dist_km: f64) -> GeoPos {
    let delta = dist_km / EARTH_RADIUS_KM;
    let theta = bearing_deg.to_radians();
    let lat1 = a.lat_deg.to_radians();
    let lon1 = a.lon_deg.to_radians();
    let lat2 = (lat1.sin() * delta.cos() + lat1.cos() * delta.sin() * theta.cos()).asin();
    let lon2 = lon1
        + (theta.sin() * delta.sin() * lat1.cos()).atan2(delta.cos() - lat1.sin() * lat2.sin());
    GeoPos {
        lat_deg: lat2.to_degrees(),
        lon_deg: normalize_lon(lon2.to_degrees()),
        alt_km: a.alt_km,
    }
}

/// Spherical linear interpolation of the sub-points, linear in altitude.
pub fn interpolate(a: &GeoPos, b: &GeoPos, frac: f64) -> GeoPos {
    let ua = a.unit();
    let ub = b.unit();
    let dot = (ua[0] * ub[0] + ua[1] * ub[1] + ua[2] * ub[2]).clamp(-1.0, 1.0);
    let omega = dot.acos();
    let alt_km = a.alt_km + (b.alt_km - a.alt_km) * frac;
    let u = if omega < 1e-12 {
        [
            ua[0] + (ub[0] - ua[0]) * frac,
            ua[1] + (ub[1] - ua[1]) * frac,
            ua[2] + (ub[2] - ua[2]) * frac,
        ]
    } else {
        let s = omega.sin();
        let wa = ((1.0 - frac) * omega).sin() / s;
        let wb = (frac * omega).sin() / s;
        [
            wa * ua[0] + wb * ub[0],
            wa * ua[1] + wb * ub[1],
            wa * ua[2] + wb * ub[2],
        ]
    };
    let mut p = from_ecef(&EcefVec {
        x_km: u[0],
        y_km: u[1],
        z_km: u[2],
    });
    p.alt_km = alt_km;
    p
}
