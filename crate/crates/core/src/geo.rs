//! WGS-84 geodetic, ECEF and local East-North-Up conversions.
//!
//! Buoys report geodetic positions; the solver works in a flat local frame
//! anchored at the reference buoy so that "underwater" is simply `up < 0`.

use nalgebra::{Matrix3, Vector3};
use thiserror::Error;

/// WGS-84 semi-major axis in meters.
pub const WGS84_A: f64 = 6_378_137.0;
/// WGS-84 flattening.
pub const WGS84_F: f64 = 1.0 / 298.257_223_563;
/// WGS-84 semi-minor axis in meters.
pub const WGS84_B: f64 = WGS84_A * (1.0 - WGS84_F);
/// First eccentricity squared.
pub const WGS84_E2: f64 = WGS84_F * (2.0 - WGS84_F);

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeoError {
    #[error("ZeroVector: cannot convert the Earth's center to geodetic coordinates")]
    ZeroVector,
    #[error("OutOfRange: {field} = {value} is outside its valid range")]
    OutOfRange { field: &'static str, value: f64 },
}

impl GeoError {
    pub fn name(&self) -> &'static str {
        match self {
            GeoError::ZeroVector => "ZeroVector",
            GeoError::OutOfRange { .. } => "OutOfRange",
        }
    }
}

/// Latitude and longitude in degrees, height in meters above the ellipsoid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeodeticCoord {
    latitude: f64,
    longitude: f64,
    height: f64,
}

impl GeodeticCoord {
    /// Builds a coordinate, folding a longitude of exactly -180 onto +180.
    pub fn new(latitude: f64, longitude: f64, height: f64) -> Result<Self, GeoError> {
        if !(-90.0..=90.0).contains(&latitude) {
            return Err(GeoError::OutOfRange { field: "latitude", value: latitude });
        }
        if !(-180.0..=180.0).contains(&longitude) {
            return Err(GeoError::OutOfRange { field: "longitude", value: longitude });
        }
        if !height.is_finite() {
            return Err(GeoError::OutOfRange { field: "height", value: height });
        }
        let longitude = if longitude == -180.0 { 180.0 } else { longitude };
        Ok(Self { latitude, longitude, height })
    }

    pub fn latitude(&self) -> f64 {
        self.latitude
    }

    pub fn longitude(&self) -> f64 {
        self.longitude
    }

    pub fn height(&self) -> f64 {
        self.height
    }

    /// Outward ellipsoid normal at this coordinate, in ECEF axes.
    pub fn normal(&self) -> Vector3<f64> {
        let (sin_lat, cos_lat) = self.latitude.to_radians().sin_cos();
        let (sin_lon, cos_lon) = self.longitude.to_radians().sin_cos();
        Vector3::new(cos_lat * cos_lon, cos_lat * sin_lon, sin_lat)
    }
}

/// Earth-centered, Earth-fixed position in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ecef(pub Vector3<f64>);

/// Position in a local East-North-Up frame, meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Enu(pub Vector3<f64>);

impl Enu {
    pub fn new(east: f64, north: f64, up: f64) -> Self {
        Self(Vector3::new(east, north, up))
    }

    pub fn east(&self) -> f64 {
        self.0.x
    }

    pub fn north(&self) -> f64 {
        self.0.y
    }

    pub fn up(&self) -> f64 {
        self.0.z
    }
}

fn prime_vertical_radius(sin_lat: f64) -> f64 {
    WGS84_A / (1.0 - WGS84_E2 * sin_lat * sin_lat).sqrt()
}

pub fn geodetic_to_ecef(g: &GeodeticCoord) -> Ecef {
    let (sin_lat, cos_lat) = g.latitude.to_radians().sin_cos();
    let (sin_lon, cos_lon) = g.longitude.to_radians().sin_cos();
    let n = prime_vertical_radius(sin_lat);
    Ecef(Vector3::new(
        (n + g.height) * cos_lat * cos_lon,
        (n + g.height) * cos_lat * sin_lon,
        (n * (1.0 - WGS84_E2) + g.height) * sin_lat,
    ))
}

/// Iterates latitude to a fixed point; height uses the form that stays
/// well-conditioned at the poles.
pub fn ecef_to_geodetic(v: &Ecef) -> Result<GeodeticCoord, GeoError> {
    let (x, y, z) = (v.0.x, v.0.y, v.0.z);
    if !(x.is_finite() && y.is_finite() && z.is_finite()) {
        return Err(GeoError::OutOfRange { field: "ecef", value: f64::NAN });
    }
    if x == 0.0 && y == 0.0 && z == 0.0 {
        return Err(GeoError::ZeroVector);
    }
    let p = x.hypot(y);
    let mut lat = z.atan2(p * (1.0 - WGS84_E2));
    for _ in 0..16 {
        let sin_lat = lat.sin();
        let n = prime_vertical_radius(sin_lat);
        let next = (z + WGS84_E2 * n * sin_lat).atan2(p);
        let done = (next - lat).abs() < 1e-15;
        lat = next;
        if done {
            break;
        }
    }
    let (sin_lat, cos_lat) = lat.sin_cos();
    let height = p * cos_lat + z * sin_lat - WGS84_A * (1.0 - WGS84_E2 * sin_lat * sin_lat).sqrt();
    let mut lon = y.atan2(x).to_degrees();
    if lon <= -180.0 {
        lon = 180.0;
    }
    GeodeticCoord::new(lat.to_degrees().clamp(-90.0, 90.0), lon, height)
}

/// East-North-Up tangent frame anchored at a geodetic origin.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalFrame {
    origin: GeodeticCoord,
    origin_ecef: Vector3<f64>,
    // rows are the east, north and up unit vectors in ECEF axes
    rotation: Matrix3<f64>,
}

impl LocalFrame {
    pub fn new(origin: GeodeticCoord) -> Self {
        let (sin_lat, cos_lat) = origin.latitude.to_radians().sin_cos();
        let (sin_lon, cos_lon) = origin.longitude.to_radians().sin_cos();
        let rotation = Matrix3::new(
            -sin_lon,
            cos_lon,
            0.0,
            -sin_lat * cos_lon,
            -sin_lat * sin_lon,
            cos_lat,
            cos_lat * cos_lon,
            cos_lat * sin_lon,
            sin_lat,
        );
        Self { origin, origin_ecef: geodetic_to_ecef(&origin).0, rotation }
    }

    pub fn origin(&self) -> &GeodeticCoord {
        &self.origin
    }

    pub fn east_axis(&self) -> Vector3<f64> {
        self.rotation.row(0).transpose()
    }

    pub fn north_axis(&self) -> Vector3<f64> {
        self.rotation.row(1).transpose()
    }

    pub fn up_axis(&self) -> Vector3<f64> {
        self.rotation.row(2).transpose()
    }

    pub fn to_enu(&self, v: &Ecef) -> Enu {
        Enu(self.rotation * (v.0 - self.origin_ecef))
    }

    pub fn from_enu(&self, v: &Enu) -> Ecef {
        Ecef(self.rotation.transpose() * v.0 + self.origin_ecef)
    }

    pub fn geodetic_to_enu(&self, g: &GeodeticCoord) -> Enu {
        self.to_enu(&geodetic_to_ecef(g))
    }

    pub fn enu_to_geodetic(&self, v: &Enu) -> Result<GeodeticCoord, GeoError> {
        ecef_to_geodetic(&self.from_enu(v))
    }
}

pub fn to_enu(v: &Ecef, frame: &LocalFrame) -> Enu {
    frame.to_enu(v)
}

pub fn from_enu(v: &Enu, frame: &LocalFrame) -> Ecef {
    frame.from_enu(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn geo(lat: f64, lon: f64, h: f64) -> GeodeticCoord {
        GeodeticCoord::new(lat, lon, h).unwrap()
    }

    #[test]
    fn equator_prime_meridian() {
        let v = geodetic_to_ecef(&geo(0.0, 0.0, 0.0)).0;
        assert_eq!(v, Vector3::new(6_378_137.0, 0.0, 0.0));
    }

    #[test]
    fn north_pole_is_semi_minor_axis() {
        let v = geodetic_to_ecef(&geo(90.0, 0.0, 0.0)).0;
        assert!(v.x.abs() < 1e-9 && v.y.abs() < 1e-9);
        assert!((v.z - 6_356_752.314_245_179).abs() < 1e-6);
        assert!((v.z - WGS84_B).abs() < 1e-6);
    }

    #[test]
    fn equator_east_axis_with_height() {
        let v = geodetic_to_ecef(&geo(0.0, 90.0, 100.0)).0;
        assert!(v.x.abs() < 1e-9);
        assert!((v.y - 6_378_237.0).abs() < 1e-9);
        assert_eq!(v.z, 0.0);
    }

    #[test]
    fn inverse_equator_and_pole() {
        let g = ecef_to_geodetic(&Ecef(Vector3::new(WGS84_A, 0.0, 0.0))).unwrap();
        assert_eq!((g.latitude(), g.longitude()), (0.0, 0.0));
        assert!(g.height().abs() < 1e-9);

        let pole = ecef_to_geodetic(&Ecef(Vector3::new(0.0, 0.0, WGS84_B))).unwrap();
        assert!((pole.latitude() - 90.0).abs() < 1e-12);
        assert!(pole.height().abs() < 1e-6);
    }

    #[test]
    fn zero_vector_rejected() {
        assert_eq!(ecef_to_geodetic(&Ecef(Vector3::zeros())), Err(GeoError::ZeroVector));
    }

    #[test]
    fn coordinate_ranges() {
        assert!(GeodeticCoord::new(90.1, 0.0, 0.0).is_err());
        assert!(GeodeticCoord::new(0.0, 180.5, 0.0).is_err());
        assert!(GeodeticCoord::new(0.0, 0.0, f64::NAN).is_err());
        assert_eq!(geo(0.0, -180.0, 0.0).longitude(), 180.0);
    }

    #[test]
    fn origin_is_fixed_point() {
        let frame = LocalFrame::new(geo(36.72, -4.42, 3.0));
        let enu = frame.geodetic_to_enu(frame.origin());
        assert!(enu.0.norm() < 1e-9);
        let back = frame.from_enu(&Enu::new(0.0, 0.0, 0.0));
        assert!((back.0 - geodetic_to_ecef(frame.origin()).0).norm() < 1e-9);
    }

    #[test]
    fn basis_is_orthonormal() {
        let frame = LocalFrame::new(geo(-33.9, 151.2, 12.0));
        let m = Matrix3::from_rows(&[
            frame.east_axis().transpose(),
            frame.north_axis().transpose(),
            frame.up_axis().transpose(),
        ]);
        assert!((m * m.transpose() - Matrix3::identity()).abs().max() < 1e-12);
    }

    proptest! {
        #[test]
        fn geodetic_round_trip(
            lat in -90.0f64..=90.0,
            lon in -179.999_999f64..=180.0,
            h in -11_000.0f64..=9_000.0,
        ) {
            let g = geo(lat, lon, h);
            let back = ecef_to_geodetic(&geodetic_to_ecef(&g)).unwrap();
            let err = (geodetic_to_ecef(&back).0 - geodetic_to_ecef(&g).0).norm();
            prop_assert!(err < 1e-6, "round-trip error {err}");
            prop_assert!((back.height() - h).abs() < 1e-6);
        }

        #[test]
        fn enu_is_an_isometry(
            lat in -89.0f64..89.0,
            lon in -179.0f64..179.0,
            a in prop::array::uniform3(-5_000.0f64..5_000.0),
            b in prop::array::uniform3(-5_000.0f64..5_000.0),
        ) {
            let frame = LocalFrame::new(geo(lat, lon, 0.0));
            let origin = geodetic_to_ecef(frame.origin()).0;
            let p = Ecef(origin + Vector3::from(a));
            let q = Ecef(origin + Vector3::from(b));
            let (pe, qe) = (frame.to_enu(&p), frame.to_enu(&q));
            let d_ecef = (p.0 - q.0).norm();
            let d_enu = (pe.0 - qe.0).norm();
            prop_assert!((d_ecef - d_enu).abs() <= 1e-9 * d_ecef.max(1.0));
            prop_assert!((frame.from_enu(&pe).0 - p.0).norm() < 1e-9);
        }

        #[test]
        fn up_axis_is_ellipsoid_normal(lat in -90.0f64..=90.0, lon in -179.9f64..=180.0) {
            let g = geo(lat, lon, 0.0);
            let frame = LocalFrame::new(g);
            prop_assert!(frame.up_axis().dot(&g.normal()) > 1.0 - 1e-12);
        }
    }
}
