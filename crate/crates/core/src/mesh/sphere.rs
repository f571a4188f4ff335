use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::geometry::{DomainKind, Point3, Polygon, RegionId};

use super::hull::convex_hull;
use super::{TriangleMesh, DEFAULT_REGION};

/// Golden-angle spiral lattice of `n` near-equal-area points on the unit sphere.
pub fn fibonacci_lattice(n: usize) -> Result<Vec<Point3>> {
    if n < 4 {
        return Err(Error::InvalidArgument(format!("fibonacci lattice needs n >= 4, got {n}")));
    }
    let golden_angle = std::f64::consts::PI * (3.0 - 5.0_f64.sqrt());
    Ok((0..n)
        .map(|i| {
            let z = 1.0 - (2.0 * i as f64 + 1.0) / n as f64;
            let r = (1.0 - z * z).sqrt();
            let phi = golden_angle * i as f64;
            Point3::new(r * phi.cos(), r * phi.sin(), z)
        })
        .collect())
}

/// Spherical Delaunay triangulation of unit vectors via their convex hull.
pub fn triangulate_sphere(points: &[Point3]) -> Result<TriangleMesh> {
    let (unique, _) = dedup_points(points, 1e-12);
    if unique.len() != points.len() {
        return Err(Error::DegenerateGeometry(format!(
            "{} duplicate point(s) in input",
            points.len() - unique.len()
        )));
    }
    for (i, p) in points.iter().enumerate() {
        if ((p.norm() - 1.0).abs()) > 1e-12 {
            return Err(Error::InvalidArgument(format!("point {i} is not on the unit sphere")));
        }
    }
    let triangles = convex_hull(points)?;
    TriangleMesh::new(points.to_vec(), triangles, DomainKind::Sphere, DEFAULT_REGION)
}

/// Merges points closer than `tol`. Returns the kept points and, for every
/// input point, the index of its representative.
pub fn dedup_points(points: &[Point3], tol: f64) -> (Vec<Point3>, Vec<usize>) {
    let key = |p: &Point3| {
        (
            (p.x / tol).floor() as i64,
            (p.y / tol).floor() as i64,
            (p.z / tol).floor() as i64,
        )
    };
    let mut grid: HashMap<(i64, i64, i64), Vec<usize>> = HashMap::new();
    let mut kept: Vec<Point3> = Vec::new();
    let mut map = Vec::with_capacity(points.len());
    for p in points {
        let (i, j, k) = key(p);
        let mut found = None;
        'search: for di in -1..=1 {
            for dj in -1..=1 {
                for dk in -1..=1 {
                    if let Some(list) = grid.get(&(i + di, j + dj, k + dk)) {
                        for &q in list {
                            if kept[q].distance(p) <= tol {
                                found = Some(q);
                                break 'search;
                            }
                        }
                    }
                }
            }
        }
        match found {
            Some(q) => map.push(q),
            None => {
                grid.entry((i, j, k)).or_default().push(kept.len());
                map.push(kept.len());
                kept.push(*p);
            }
        }
    }
    (kept, map)
}

/// A labelled vertex set contributing to a multi-resolution sphere mesh.
#[derive(Debug, Clone)]
pub struct VertexSet {
    pub region: RegionId,
    pub points: Vec<Point3>,
}

/// Merges per-region vertex sets, removes near-duplicates (1e-9 rad) and
/// re-triangulates the union. Each triangle is provisionally labelled with
/// the majority region of its corners (ties go to the lowest id).
pub fn merge_and_retriangulate(sets: &[VertexSet]) -> Result<TriangleMesh> {
    let mut all = Vec::new();
    let mut labels = Vec::new();
    for set in sets {
        for p in &set.points {
            all.push(*p);
            labels.push(set.region);
        }
    }
    if all.is_empty() {
        return Err(Error::InvalidArgument("no vertices to merge".into()));
    }
    let (unique, map) = dedup_points(&all, 1e-9);
    let mut vlabel = vec![None; unique.len()];
    for (i, &m) in map.iter().enumerate() {
        vlabel[m].get_or_insert(labels[i]);
    }
    let mut mesh = triangulate_sphere(&unique)?;
    mesh.triangle_region = mesh
        .triangles
        .iter()
        .map(|tri| {
            let l: Vec<RegionId> = tri.iter().map(|&i| vlabel[i].unwrap_or(DEFAULT_REGION)).collect();
            let mut best = l[0].min(l[1]).min(l[2]);
            for &cand in &l {
                let count = l.iter().filter(|&&x| x == cand).count();
                if count >= 2 {
                    best = cand;
                }
            }
            best
        })
        .collect();
    mesh.derive_vertex_regions();
    Ok(mesh)
}

/// Points of a Fibonacci lattice with `n_global` points that fall inside
/// `polygon`, optionally densified with points spaced `boundary_spacing`
/// radians along the polygon boundary.
pub fn lattice_in_region(polygon: Option<&Polygon>, n_global: usize, exclude: &[&Polygon], boundary_spacing: Option<f64>) -> Result<Vec<Point3>> {
    let lattice = fibonacci_lattice(n_global)?;
    let mut pts: Vec<Point3> = lattice
        .into_iter()
        .filter(|p| polygon.is_none_or(|poly| poly.contains_point(DomainKind::Sphere, p)))
        .filter(|p| !exclude.iter().any(|poly| poly.contains_point(DomainKind::Sphere, p)))
        .collect();
    if let (Some(poly), Some(spacing)) = (polygon, boundary_spacing) {
        if spacing <= 0.0 {
            return Err(Error::InvalidArgument("boundary spacing must be positive".into()));
        }
        let n = (poly.perimeter(DomainKind::Sphere) / spacing).ceil() as usize;
        pts.extend(poly.sample_boundary(DomainKind::Sphere, n.max(3)));
    }
    Ok(pts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn lattice_rejects_small_n() {
        assert!(matches!(fibonacci_lattice(3), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn four_point_lattice_is_distinct_and_unit() {
        let pts = fibonacci_lattice(4).unwrap();
        for (i, p) in pts.iter().enumerate() {
            assert!((p.norm() - 1.0).abs() < 1e-12);
            for q in &pts[i + 1..] {
                assert!(p.distance(q) > 0.0);
            }
        }
    }

    #[test]
    fn lattice_is_deterministic() {
        assert_eq!(fibonacci_lattice(257).unwrap(), fibonacci_lattice(257).unwrap());
    }

    #[test]
    fn tetrahedron_triangulates_to_four_faces() {
        let s = 1.0 / 3.0_f64.sqrt();
        let pts = vec![
            Point3::new(s, s, s),
            Point3::new(s, -s, -s),
            Point3::new(-s, s, -s),
            Point3::new(-s, -s, s),
        ];
        let mesh = triangulate_sphere(&pts).unwrap();
        assert_eq!(mesh.num_triangles(), 4);
        assert_eq!(mesh.num_edges(), 6);
        assert_eq!(mesh.euler_characteristic(), 2);
    }

    #[test]
    fn duplicates_are_degenerate() {
        let mut pts = fibonacci_lattice(20).unwrap();
        pts.push(pts[3]);
        assert!(matches!(triangulate_sphere(&pts), Err(Error::DegenerateGeometry(_))));
    }

    #[test]
    fn coplanar_points_are_degenerate() {
        let pts: Vec<Point3> = (0..8)
            .map(|i| {
                let a = i as f64 * PI / 4.0;
                Point3::new(a.cos(), a.sin(), 0.0)
            })
            .collect();
        assert!(matches!(triangulate_sphere(&pts), Err(Error::DegenerateGeometry(_))));
    }

    #[test]
    fn hundred_point_lattice_has_196_triangles() {
        let mesh = triangulate_sphere(&fibonacci_lattice(100).unwrap()).unwrap();
        assert_eq!(mesh.num_triangles(), 2 * 100 - 4);
        assert!(mesh.edge_counts().values().all(|&c| c == 2));
    }

    #[test]
    fn triangles_face_outwards() {
        let mesh = triangulate_sphere(&fibonacci_lattice(300).unwrap()).unwrap();
        for t in 0..mesh.num_triangles() {
            let [a, b, c] = mesh.corners(t);
            assert!((b - a).cross(&(c - a)).dot(&a) > 0.0);
        }
    }

    #[test]
    fn merge_single_set_matches_direct_triangulation() {
        let pts = fibonacci_lattice(500).unwrap();
        let merged = merge_and_retriangulate(&[VertexSet { region: RegionId(1), points: pts.clone() }]).unwrap();
        let direct = triangulate_sphere(&pts).unwrap();
        assert_eq!(merged.vertices, direct.vertices);
        assert_eq!(merged.triangles, direct.triangles);
        assert!(merged.triangle_region.iter().all(|&r| r == RegionId(1)));
    }

    #[test]
    fn merge_removes_coincident_vertices() {
        let a = fibonacci_lattice(200).unwrap();
        let b = fibonacci_lattice(200).unwrap()[..50].to_vec();
        let mesh = merge_and_retriangulate(&[
            VertexSet { region: RegionId(1), points: a },
            VertexSet { region: RegionId(2), points: b },
        ])
        .unwrap();
        assert_eq!(mesh.num_vertices(), 200);
        // Exhaustive pairwise scan.
        for i in 0..mesh.num_vertices() {
            for j in (i + 1)..mesh.num_vertices() {
                assert!(mesh.vertices[i].distance(&mesh.vertices[j]) > 1e-9);
            }
        }
        assert!((0..mesh.num_triangles()).all(|t| mesh.area(t) > 0.0));
    }

    #[test]
    fn empty_merge_is_rejected() {
        assert!(matches!(merge_and_retriangulate(&[]), Err(Error::InvalidArgument(_))));
    }
}
