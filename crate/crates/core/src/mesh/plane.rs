//! Planar meshing by constrained Delaunay refinement.

use std::collections::{HashMap, HashSet};

use spade::{AngleLimit, ConstrainedDelaunayTriangulation, Point2, RefinementParameters, Triangulation};

use crate::error::{Error, Result};
use crate::geometry::{DomainKind, Point3, Polygon};

use super::{TriangleMesh, DEFAULT_REGION};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanarMeshOptions {
    pub max_edge: f64,
    pub min_angle_deg: f64,
    pub max_vertices: usize,
}

impl PlanarMeshOptions {
    pub fn with_max_edge(max_edge: f64) -> Self {
        Self { max_edge, min_angle_deg: 20.0, max_vertices: 500_000 }
    }
}

type Cdt = ConstrainedDelaunayTriangulation<Point2<f64>>;

/// Triangulates `boundary` minus `holes` so that every edge is at most
/// `max_edge` long and no angle drops below the requested minimum.
pub fn triangulate_plane(boundary: &[[f64; 2]], holes: &[Vec<[f64; 2]>], opts: &PlanarMeshOptions) -> Result<TriangleMesh> {
    triangulate_plane_conforming(boundary, holes, &[], opts)
}

/// Like [`triangulate_plane`], additionally conforming to the interior
/// `constraints` rings (region boundaries) so that no triangle straddles them.
/// Each ring carries the maximum edge length used inside it.
pub fn triangulate_plane_conforming(
    boundary: &[[f64; 2]],
    holes: &[Vec<[f64; 2]>],
    constraints: &[(Vec<[f64; 2]>, f64)],
    opts: &PlanarMeshOptions,
) -> Result<TriangleMesh> {
    if !(opts.max_edge > 0.0) {
        return Err(Error::InvalidArgument("max_edge must be positive".into()));
    }
    let outer = Polygon::new(vec![boundary.to_vec()]);
    outer.validate().map_err(|e| Error::InvalidGeometry(format!("boundary: {e}")))?;
    let mut rings = outer.rings.clone();
    for (hi, hole) in holes.iter().enumerate() {
        let h = Polygon::new(vec![hole.clone()]);
        h.validate().map_err(|e| Error::InvalidGeometry(format!("hole {hi}: {e}")))?;
        for p in &h.rings[0] {
            if !outer.contains(DomainKind::Plane, p[0], p[1]) {
                return Err(Error::InvalidGeometry(format!("hole {hi} is not strictly inside the boundary")));
            }
        }
        rings.push(h.rings[0].clone());
    }
    let n_solid = rings.len();
    for (ci, (c, size)) in constraints.iter().enumerate() {
        if !(*size > 0.0) {
            return Err(Error::InvalidArgument(format!("constraint {ci} needs a positive max edge")));
        }
        let r = Polygon::new(vec![c.clone()]);
        r.validate().map_err(|e| Error::InvalidGeometry(format!("constraint {ci}: {e}")))?;
        if r.rings[0].iter().any(|p| !outer.contains(DomainKind::Plane, p[0], p[1]) && !on_ring(&outer.rings[0], *p)) {
            return Err(Error::InvalidGeometry(format!("constraint {ci} leaves the boundary")));
        }
        rings.push(r.rings[0].clone());
    }
    // Rings must not cross each other either.
    for i in 0..n_solid {
        for j in (i + 1)..rings.len() {
            for a in 0..rings[i].len() {
                for b in 0..rings[j].len() {
                    let (p, q) = (rings[i][a], rings[i][(a + 1) % rings[i].len()]);
                    let (r, s) = (rings[j][b], rings[j][(b + 1) % rings[j].len()]);
                    if crate::geometry::segments_cross(p, q, r, s) {
                        return Err(Error::InvalidGeometry(format!("rings {i} and {j} intersect")));
                    }
                }
            }
        }
    }

    let mut cdt = Cdt::new();
    for (ri, ring) in rings.iter().enumerate() {
        let step = if ri >= n_solid { opts.max_edge.min(constraints[ri - n_solid].1) } else { opts.max_edge };
        let mut pts = Vec::new();
        for k in 0..ring.len() {
            let (a, b) = (ring[k], ring[(k + 1) % ring.len()]);
            let len = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
            let pieces = (len / step).ceil().max(1.0) as usize;
            for s in 0..pieces {
                let t = s as f64 / pieces as f64;
                pts.push(Point2::new(a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])));
            }
        }
        if pts.len() < 3 {
            continue;
        }
        cdt.add_constraint_edges(pts, true)
            .map_err(|e| Error::InvalidGeometry(format!("constraint insertion failed: {e:?}")))?;
    }

    // Area cap that keeps most triangles short; remaining long edges are split below.
    let sized: Vec<(Polygon, f64)> = constraints.iter().map(|(r, h)| (Polygon::new(vec![r.clone()]), *h)).collect();
    let size_at = |c: [f64; 2]| {
        sized.iter().find(|(p, _)| p.contains(DomainKind::Plane, c[0], c[1])).map_or(opts.max_edge, |(_, h)| *h)
    };
    let largest = sized.iter().map(|(_, h)| *h).fold(opts.max_edge, f64::max);
    let area_cap = 0.35 * largest * largest;
    // Faces are classified by centroid, so interior constraint rings do not
    // act as holes during refinement.
    let holes_poly: Vec<Polygon> = rings[1..n_solid].iter().map(|r| Polygon::new(vec![r.clone()])).collect();
    let outside = |c: [f64; 2]| {
        !outer.contains(DomainKind::Plane, c[0], c[1]) || holes_poly.iter().any(|h| h.contains(DomainKind::Plane, c[0], c[1]))
    };
    let mut excluded: HashSet<usize>;
    let mut rounds = 0;
    loop {
        cdt.refine(
            RefinementParameters::new()
                .exclude_outer_faces(false)
                .with_angle_limit(AngleLimit::from_deg(opts.min_angle_deg))
                .with_max_allowed_area(area_cap)
                .with_max_additional_vertices(opts.max_vertices),
        );
        excluded = cdt
            .inner_faces()
            .filter(|f| {
                let [a, b, c] = f.positions();
                outside([(a.x + b.x + c.x) / 3.0, (a.y + b.y + c.y) / 3.0])
            })
            .map(|f| f.fix().index())
            .collect();
        let mut long_edges = Vec::new();
        for face in cdt.inner_faces() {
            if excluded.contains(&face.fix().index()) {
                continue;
            }
            let [a, b, c] = face.positions();
            let h = size_at([(a.x + b.x + c.x) / 3.0, (a.y + b.y + c.y) / 3.0]);
            for e in face.adjacent_edges() {
                if e.length_2() > h * h * (1.0 + 1e-12) {
                    let [p, q] = e.positions();
                    long_edges.push(Point2::new(0.5 * (p.x + q.x), 0.5 * (p.y + q.y)));
                }
            }
        }
        if long_edges.is_empty() {
            break;
        }
        rounds += 1;
        if rounds > 64 || cdt.num_vertices() > opts.max_vertices {
            return Err(Error::InvalidGeometry("planar refinement did not converge".into()));
        }
        for p in long_edges {
            cdt.insert(p).map_err(|e| Error::InvalidGeometry(format!("vertex insertion failed: {e:?}")))?;
        }
    }

    let mut index = HashMap::new();
    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    for face in cdt.inner_faces() {
        if excluded.contains(&face.fix().index()) {
            continue;
        }
        let mut tri = [0usize; 3];
        for (k, v) in face.vertices().iter().enumerate() {
            let id = v.fix().index();
            tri[k] = *index.entry(id).or_insert_with(|| {
                let p = v.position();
                vertices.push(Point3::planar(p.x, p.y));
                vertices.len() - 1
            });
        }
        triangles.push(tri);
    }
    TriangleMesh::new(vertices, triangles, DomainKind::Plane, DEFAULT_REGION)
}

fn on_ring(ring: &[[f64; 2]], p: [f64; 2]) -> bool {
    (0..ring.len()).any(|k| {
        let (a, b) = (ring[k], ring[(k + 1) % ring.len()]);
        let cross = (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]);
        cross.abs() <= 1e-12 * (1.0 + a[0].abs() + b[0].abs())
            && p[0] >= a[0].min(b[0]) - 1e-12
            && p[0] <= a[0].max(b[0]) + 1e-12
            && p[1] >= a[1].min(b[1]) - 1e-12
            && p[1] <= a[1].max(b[1]) + 1e-12
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square(x0: f64, y0: f64, x1: f64, y1: f64) -> Vec<[f64; 2]> {
        vec![[x0, y0], [x1, y0], [x1, y1], [x0, y1]]
    }

    #[test]
    fn five_square_respects_max_edge_and_euler() {
        let mesh = triangulate_plane(&square(0.0, 0.0, 5.0, 5.0), &[], &PlanarMeshOptions::with_max_edge(0.5)).unwrap();
        let q = mesh.quality();
        assert!(q.max_edge <= 0.5 + 1e-12, "max edge {}", q.max_edge);
        assert!(q.min_angle_deg >= 20.0 - 1e-9, "min angle {}", q.min_angle_deg);
        assert_eq!(q.euler_characteristic, 1);
        assert!((mesh.total_area() - 25.0).abs() < 1e-9);
    }

    #[test]
    fn hole_is_excluded() {
        let hole = square(2.0, 1.0, 3.0, 4.0);
        let mesh = triangulate_plane(&square(0.0, 0.0, 5.0, 5.0), &[hole], &PlanarMeshOptions::with_max_edge(0.5)).unwrap();
        assert!((mesh.total_area() - 22.0).abs() < 1e-9);
        for t in 0..mesh.num_triangles() {
            let c = mesh.centroid(t);
            assert!(!(c.x > 2.0 && c.x < 3.0 && c.y > 1.0 && c.y < 4.0));
        }
        // One hole: V - E + F = 0.
        assert_eq!(mesh.euler_characteristic(), 0);
    }

    #[test]
    fn interior_constraint_is_conformed() {
        let inner = square(1.5, 1.5, 3.5, 3.5);
        let mesh = triangulate_plane_conforming(&square(0.0, 0.0, 5.0, 5.0), &[], &[(inner.clone(), 0.5)], &PlanarMeshOptions::with_max_edge(0.5))
            .unwrap();
        assert!((mesh.total_area() - 25.0).abs() < 1e-9);
        assert!(mesh.quality().max_edge <= 0.5 + 1e-12);
        let poly = Polygon::new(vec![inner]);
        let inside: f64 = (0..mesh.num_triangles())
            .filter(|&t| {
                let c = mesh.centroid(t);
                poly.contains(DomainKind::Plane, c.x, c.y)
            })
            .map(|t| mesh.area(t))
            .sum();
        assert!((inside - 4.0).abs() < 1e-9, "{inside}");
    }

    #[test]
    fn coarse_unit_square() {
        let mesh = triangulate_plane(&square(0.0, 0.0, 1.0, 1.0), &[], &PlanarMeshOptions::with_max_edge(2.0)).unwrap();
        assert!(mesh.num_triangles() >= 2);
        assert!(mesh.quality().max_edge <= 2.0);
    }

    #[test]
    fn self_intersecting_boundary_is_rejected() {
        let bowtie = vec![[0.0, 0.0], [1.0, 1.0], [1.0, 0.0], [0.0, 1.0]];
        assert!(matches!(
            triangulate_plane(&bowtie, &[], &PlanarMeshOptions::with_max_edge(0.5)),
            Err(Error::InvalidGeometry(_))
        ));
    }

    #[test]
    fn hole_outside_boundary_is_rejected() {
        let res = triangulate_plane(
            &square(0.0, 0.0, 1.0, 1.0),
            &[square(2.0, 2.0, 3.0, 3.0)],
            &PlanarMeshOptions::with_max_edge(0.5),
        );
        assert!(matches!(res, Err(Error::InvalidGeometry(_))));
    }
}
