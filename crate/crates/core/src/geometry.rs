//! Points, polygons and the small amount of spherical trigonometry the rest
//! of the crate needs.
//!
//! Sphere polygons are given in (lon, lat) degrees and their edges are
//! straight lines in the lon-lat plane, so parallels and meridians are
//! represented exactly (this is what raster-traced regions produce). Planar
//! polygons use (x, y). Rings follow the even-odd rule.

use std::ops::{Add, Mul, Sub};

use serde::{Deserialize, Serialize};

pub const EARTH_RADIUS_KM: f64 = 6371.0;

/// Region label attached to triangles and vertices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RegionId(pub u32);

impl std::fmt::Display for RegionId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DomainKind {
    Sphere,
    Plane,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub const fn planar(x: f64, y: f64) -> Self {
        Self { x, y, z: 0.0 }
    }

    /// Unit vector for a (lon, lat) pair in degrees.
    pub fn from_lon_lat(lon_deg: f64, lat_deg: f64) -> Self {
        let (lon, lat) = (lon_deg.to_radians(), lat_deg.to_radians());
        Self::new(lat.cos() * lon.cos(), lat.cos() * lon.sin(), lat.sin())
    }

    /// (lon, lat) in degrees, lon in (-180, 180].
    pub fn to_lon_lat(&self) -> (f64, f64) {
        let r = self.norm();
        let lat = (self.z / r).clamp(-1.0, 1.0).asin().to_degrees();
        let lon = self.y.atan2(self.x).to_degrees();
        (lon, lat)
    }

    pub fn dot(&self, o: &Point3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(&self, o: &Point3) -> Point3 {
        Point3::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn normalized(&self) -> Point3 {
        let n = self.norm();
        Point3::new(self.x / n, self.y / n, self.z / n)
    }

    pub fn distance(&self, o: &Point3) -> f64 {
        (*self - *o).norm()
    }

    /// Great-circle angle between two directions (radians on the unit sphere).
    pub fn angle_to(&self, o: &Point3) -> f64 {
        let c = self.cross(o).norm();
        let d = self.dot(o);
        c.atan2(d)
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }
}

impl Add for Point3 {
    type Output = Point3;
    fn add(self, o: Point3) -> Point3 {
        Point3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for Point3 {
    type Output = Point3;
    fn sub(self, o: Point3) -> Point3 {
        Point3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Mul<f64> for Point3 {
    type Output = Point3;
    fn mul(self, s: f64) -> Point3 {
        Point3::new(self.x * s, self.y * s, self.z * s)
    }
}

/// Distance as measured in a domain: geodesic angle on the sphere,
/// Euclidean in the plane.
pub fn domain_distance(domain: DomainKind, a: &Point3, b: &Point3) -> f64 {
    match domain {
        DomainKind::Sphere => a.angle_to(b),
        DomainKind::Plane => a.distance(b),
    }
}

/// Area of the spherical triangle with unit-vector corners (Van Oosterom–Strackee).
pub fn spherical_triangle_area(a: &Point3, b: &Point3, c: &Point3) -> f64 {
    let triple = a.dot(&b.cross(c)).abs();
    let denom = 1.0 + a.dot(b) + b.dot(c) + c.dot(a);
    2.0 * triple.atan2(denom)
}

/// Area of the flat triangle spanned by three points in space.
pub fn flat_triangle_area(a: &Point3, b: &Point3, c: &Point3) -> f64 {
    0.5 * (*b - *a).cross(&(*c - *a)).norm()
}

/// Area of a spherical cell bounded by two parallels and two meridians, in km².
pub fn lon_lat_cell_area_km2(lat_lo: f64, lat_hi: f64, dlon_deg: f64) -> f64 {
    EARTH_RADIUS_KM
        * EARTH_RADIUS_KM
        * dlon_deg.to_radians()
        * (lat_hi.to_radians().sin() - lat_lo.to_radians().sin())
}

/// A region boundary made of one or more rings interpreted with the even-odd rule.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Polygon {
    pub rings: Vec<Vec<[f64; 2]>>,
}

impl Polygon {
    pub fn new(rings: Vec<Vec<[f64; 2]>>) -> Self {
        let rings = rings
            .into_iter()
            .map(|mut r| {
                if r.len() > 1 && r.first() == r.last() {
                    r.pop();
                }
                r
            })
            .collect();
        Self { rings }
    }

    pub fn rectangle(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Self::new(vec![vec![[x0, y0], [x1, y0], [x1, y1], [x0, y1]]])
    }

    pub fn is_empty(&self) -> bool {
        self.rings.iter().all(|r| r.len() < 3)
    }

    /// Checks that every ring has at least three vertices and no two of its
    /// edges cross.
    pub fn validate(&self) -> Result<(), String> {
        for (ri, ring) in self.rings.iter().enumerate() {
            if ring.len() < 3 {
                return Err(format!("ring {ri} has fewer than 3 vertices"));
            }
            let n = ring.len();
            for i in 0..n {
                let (a, b) = (ring[i], ring[(i + 1) % n]);
                if a == b {
                    return Err(format!("ring {ri} has a repeated vertex at {i}"));
                }
                for j in (i + 1)..n {
                    if j == i || (j + 1) % n == i || j == (i + 1) % n {
                        continue;
                    }
                    let (c, d) = (ring[j], ring[(j + 1) % n]);
                    if segments_cross(a, b, c, d) {
                        return Err(format!("ring {ri} self-intersects (edges {i} and {j})"));
                    }
                }
            }
        }
        Ok(())
    }

    /// Even-odd containment of a (u, v) point: (x, y) in the plane or
    /// (lon, lat) in degrees on the sphere.
    pub fn contains(&self, domain: DomainKind, u: f64, v: f64) -> bool {
        let mut inside = false;
        for ring in &self.rings {
            if ring_contains(domain, ring, u, v) {
                inside = !inside;
            }
        }
        inside
    }

    /// Containment test for a point in domain coordinates.
    pub fn contains_point(&self, domain: DomainKind, p: &Point3) -> bool {
        let (u, v) = to_uv(domain, p);
        self.contains(domain, u, v)
    }

    /// Area in domain units: planar units², or steradians on the unit sphere.
    pub fn area(&self, domain: DomainKind) -> f64 {
        let mut total = 0.0;
        for (i, ring) in self.rings.iter().enumerate() {
            if ring.len() < 3 {
                continue;
            }
            let probe = ring[0];
            let depth = self
                .rings
                .iter()
                .enumerate()
                .filter(|(j, other)| *j != i && ring_contains(domain, other, probe[0], probe[1]))
                .count();
            let a = ring_signed_area(domain, ring).abs();
            if depth % 2 == 0 {
                total += a;
            } else {
                total -= a;
            }
        }
        total
    }

    /// Total boundary length (planar units, or radians on the unit sphere).
    pub fn perimeter(&self, domain: DomainKind) -> f64 {
        self.rings
            .iter()
            .map(|r| {
                (0..r.len())
                    .map(|i| segment_length(domain, r[i], r[(i + 1) % r.len()]))
                    .sum::<f64>()
            })
            .sum()
    }

    /// `n` points spread at equal arclength along all rings together.
    pub fn sample_boundary(&self, domain: DomainKind, n: usize) -> Vec<Point3> {
        let segments: Vec<([f64; 2], [f64; 2], f64)> = self
            .rings
            .iter()
            .flat_map(|r| {
                (0..r.len()).map(move |i| {
                    let (a, b) = (r[i], r[(i + 1) % r.len()]);
                    (a, b, segment_length(domain, a, b))
                })
            })
            .collect();
        let total: f64 = segments.iter().map(|s| s.2).sum();
        if n == 0 || total <= 0.0 {
            return Vec::new();
        }
        let step = total / n as f64;
        let mut out = Vec::with_capacity(n);
        let mut seg = 0;
        let mut seg_start = 0.0;
        for k in 0..n {
            let target = (k as f64 + 0.5) * step;
            while seg + 1 < segments.len() && seg_start + segments[seg].2 < target {
                seg_start += segments[seg].2;
                seg += 1;
            }
            let (a, b, len) = segments[seg];
            let s = if len > 0.0 { ((target - seg_start) / len).clamp(0.0, 1.0) } else { 0.0 };
            let (u, v) = param_point(domain, a, b, s);
            out.push(from_uv(domain, u, v));
        }
        out
    }

    /// Bounding box in (u, v) coordinates: (min_u, min_v, max_u, max_v).
    pub fn bbox(&self) -> Option<(f64, f64, f64, f64)> {
        let mut it = self.rings.iter().flatten();
        let first = it.next()?;
        let mut bb = (first[0], first[1], first[0], first[1]);
        for p in it {
            bb.0 = bb.0.min(p[0]);
            bb.1 = bb.1.min(p[1]);
            bb.2 = bb.2.max(p[0]);
            bb.3 = bb.3.max(p[1]);
        }
        Some(bb)
    }
}

/// Domain coordinates of a point: (x, y) in the plane, (lon, lat) on the sphere.
pub fn to_uv(domain: DomainKind, p: &Point3) -> (f64, f64) {
    match domain {
        DomainKind::Plane => (p.x, p.y),
        DomainKind::Sphere => p.to_lon_lat(),
    }
}

pub fn from_uv(domain: DomainKind, u: f64, v: f64) -> Point3 {
    match domain {
        DomainKind::Plane => Point3::planar(u, v),
        DomainKind::Sphere => Point3::from_lon_lat(u, v),
    }
}

fn param_point(domain: DomainKind, a: [f64; 2], b: [f64; 2], s: f64) -> (f64, f64) {
    match domain {
        DomainKind::Plane => (a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])),
        DomainKind::Sphere => {
            // Invert the arclength along the lon-lat line by bisection.
            let len = segment_length(domain, a, b);
            if len == 0.0 {
                return (a[0], a[1]);
            }
            let target = s * len;
            let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                let m = [a[0] + mid * (b[0] - a[0]), a[1] + mid * (b[1] - a[1])];
                if segment_length(domain, a, m) < target {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let t = 0.5 * (lo + hi);
            (a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1]))
        }
    }
}

/// Length of a straight ring edge. On the sphere this integrates
/// ds² = cos²φ dλ² + dφ² along the lon-lat line (Simpson, 16 panels).
pub fn segment_length(domain: DomainKind, a: [f64; 2], b: [f64; 2]) -> f64 {
    match domain {
        DomainKind::Plane => ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt(),
        DomainKind::Sphere => {
            let dl = (b[0] - a[0]).to_radians();
            let dp = (b[1] - a[1]).to_radians();
            let speed = |t: f64| {
                let phi = (a[1] + t * (b[1] - a[1])).to_radians();
                ((phi.cos() * dl).powi(2) + dp * dp).sqrt()
            };
            let panels = 16;
            let h = 1.0 / panels as f64;
            let mut sum = speed(0.0) + speed(1.0);
            for i in 1..panels {
                let w = if i % 2 == 1 { 4.0 } else { 2.0 };
                sum += w * speed(i as f64 * h);
            }
            sum * h / 3.0
        }
    }
}

/// Signed ring area with counter-clockwise (interior on the left) positive.
/// On the sphere the result is in steradians and exact for lon-lat lines.
pub fn ring_signed_area(domain: DomainKind, ring: &[[f64; 2]]) -> f64 {
    let n = ring.len();
    let mut s = 0.0;
    match domain {
        DomainKind::Plane => {
            for i in 0..n {
                let (a, b) = (ring[i], ring[(i + 1) % n]);
                s += a[0] * b[1] - b[0] * a[1];
            }
            0.5 * s
        }
        DomainKind::Sphere => {
            for i in 0..n {
                let (a, b) = (ring[i], ring[(i + 1) % n]);
                let (l0, p0) = (a[0].to_radians(), a[1].to_radians());
                let (l1, p1) = (b[0].to_radians(), b[1].to_radians());
                let dl = l1 - l0;
                let dp = p1 - p0;
                // Green's theorem: area = ∮ -sin φ dλ.
                if dp.abs() < 1e-12 {
                    s -= (0.5 * (p0 + p1)).sin() * dl;
                } else {
                    s -= dl / dp * (p0.cos() - p1.cos());
                }
            }
            s
        }
    }
}

fn ring_contains(domain: DomainKind, ring: &[[f64; 2]], u: f64, v: f64) -> bool {
    if ring.len() < 3 {
        return false;
    }
    match domain {
        DomainKind::Plane => crossing_parity(ring, u, v),
        DomainKind::Sphere => {
            // Rings live in unwrapped longitude; test every 360° copy of the
            // query that falls within the ring's longitude extent.
            let (min_lon, max_lon) = ring.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p[0]), b.max(p[0])));
            let mut w = min_lon + (u - min_lon).rem_euclid(360.0);
            let mut inside = false;
            while w <= max_lon {
                inside ^= crossing_parity(ring, w, v);
                w += 360.0;
            }
            inside
        }
    }
}

fn crossing_parity(ring: &[[f64; 2]], u: f64, v: f64) -> bool {
    let n = ring.len();
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let (xi, yi) = (ring[i][0], ring[i][1]);
        let (xj, yj) = (ring[j][0], ring[j][1]);
        if (yi > v) != (yj > v) {
            let x_cross = xj + (v - yj) * (xi - xj) / (yi - yj);
            if u < x_cross {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

fn orient2(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    robust::orient2d(
        robust::Coord { x: a[0], y: a[1] },
        robust::Coord { x: b[0], y: b[1] },
        robust::Coord { x: c[0], y: c[1] },
    )
}

/// Proper or touching intersection of two closed segments.
pub fn segments_cross(a: [f64; 2], b: [f64; 2], c: [f64; 2], d: [f64; 2]) -> bool {
    let d1 = orient2(c, d, a);
    let d2 = orient2(c, d, b);
    let d3 = orient2(a, b, c);
    let d4 = orient2(a, b, d);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
        return true;
    }
    let on = |p: [f64; 2], q: [f64; 2], r: [f64; 2]| {
        r[0] >= p[0].min(q[0]) && r[0] <= p[0].max(q[0]) && r[1] >= p[1].min(q[1]) && r[1] <= p[1].max(q[1])
    };
    (d1 == 0.0 && on(c, d, a)) || (d2 == 0.0 && on(c, d, b)) || (d3 == 0.0 && on(a, b, c)) || (d4 == 0.0 && on(a, b, d))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn lon_lat_round_trip() {
        for &(lon, lat) in &[(0.0, 0.0), (45.0, 30.0), (-120.0, -60.0), (179.5, 89.0)] {
            let p = Point3::from_lon_lat(lon, lat);
            assert!((p.norm() - 1.0).abs() < 1e-15);
            let (l2, p2) = p.to_lon_lat();
            assert!((l2 - lon).abs() < 1e-10 && (p2 - lat).abs() < 1e-10);
        }
    }

    #[test]
    fn octant_triangle_area() {
        let a = Point3::new(1.0, 0.0, 0.0);
        let b = Point3::new(0.0, 1.0, 0.0);
        let c = Point3::new(0.0, 0.0, 1.0);
        assert!((spherical_triangle_area(&a, &b, &c) - PI / 2.0).abs() < 1e-14);
    }

    #[test]
    fn lon_lat_rectangle_area_matches_cell_formula() {
        let poly = Polygon::rectangle(10.0, 20.0, 30.0, 50.0);
        let exact = lon_lat_cell_area_km2(20.0, 50.0, 20.0) / (EARTH_RADIUS_KM * EARTH_RADIUS_KM);
        assert!((poly.area(DomainKind::Sphere) - exact).abs() < 1e-14);
        let whole = Polygon::rectangle(-180.0, -90.0, 180.0, 90.0);
        assert!((whole.area(DomainKind::Sphere) - 4.0 * PI).abs() < 1e-12);
    }

    #[test]
    fn holes_subtract_area() {
        let poly = Polygon::new(vec![
            vec![[0.0, 0.0], [5.0, 0.0], [5.0, 5.0], [0.0, 5.0]],
            vec![[2.0, 2.0], [3.0, 2.0], [3.0, 3.0], [2.0, 3.0]],
        ]);
        assert!((poly.area(DomainKind::Plane) - 24.0).abs() < 1e-12);
        assert!(poly.contains(DomainKind::Plane, 1.0, 1.0));
        assert!(!poly.contains(DomainKind::Plane, 2.5, 2.5));
    }

    #[test]
    fn sphere_containment_wraps_longitude() {
        let poly = Polygon::rectangle(170.0, -10.0, 190.0, 10.0);
        assert!(poly.contains(DomainKind::Sphere, -175.0, 0.0));
        assert!(poly.contains(DomainKind::Sphere, 175.0, 0.0));
        assert!(!poly.contains(DomainKind::Sphere, 160.0, 0.0));
    }

    #[test]
    fn self_intersection_detected() {
        let bowtie = Polygon::new(vec![vec![[0.0, 0.0], [1.0, 1.0], [1.0, 0.0], [0.0, 1.0]]]);
        assert!(bowtie.validate().is_err());
        assert!(Polygon::rectangle(0.0, 0.0, 1.0, 1.0).validate().is_ok());
    }

    #[test]
    fn boundary_samples_are_equally_spaced() {
        let poly = Polygon::rectangle(0.0, 0.0, 4.0, 2.0);
        let pts = poly.sample_boundary(DomainKind::Plane, 12);
        assert_eq!(pts.len(), 12);
        for (k, p) in pts.iter().take(4).enumerate() {
            assert!((p.x - (k as f64 + 0.5)).abs() < 1e-12 && p.y.abs() < 1e-12);
        }
        assert!((pts[4].x - 4.0).abs() < 1e-12 && (pts[4].y - 0.5).abs() < 1e-12);
    }
}
