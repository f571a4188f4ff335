//! Triangulations of the sphere and of planar polygons, with per-triangle
//! region labels.

mod hull;
pub mod io;
mod locate;
mod plane;
mod sphere;

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{flat_triangle_area, spherical_triangle_area, to_uv, DomainKind, Point3, Polygon, RegionId};

pub use locate::{Location, MeshLocator};
pub use plane::{triangulate_plane, triangulate_plane_conforming, PlanarMeshOptions};
pub use sphere::{
    dedup_points, fibonacci_lattice, lattice_in_region, merge_and_retriangulate, triangulate_sphere, VertexSet,
};

/// Region labelling used when nothing else applies.
pub const DEFAULT_REGION: RegionId = RegionId(0);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriangleMesh {
    pub vertices: Vec<Point3>,
    pub triangles: Vec<[usize; 3]>,
    pub domain: DomainKind,
    pub triangle_region: Vec<RegionId>,
    pub vertex_region: Vec<RegionId>,
}

/// Named polygons Ω₁..Ω_p covering part of the domain; everything else
/// falls into `default_region`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionPartition {
    pub regions: Vec<(RegionId, Polygon)>,
    pub default_region: RegionId,
}

impl RegionPartition {
    pub fn single(region: RegionId) -> Self {
        Self { regions: Vec::new(), default_region: region }
    }

    /// Region of a point; the first polygon containing it wins.
    pub fn region_of(&self, domain: DomainKind, p: &Point3) -> RegionId {
        let (u, v) = to_uv(domain, p);
        self.regions
            .iter()
            .find(|(_, poly)| poly.contains(domain, u, v))
            .map(|(id, _)| *id)
            .unwrap_or(self.default_region)
    }

    pub fn polygon(&self, id: RegionId) -> Option<&Polygon> {
        self.regions.iter().find(|(r, _)| *r == id).map(|(_, p)| p)
    }

    pub fn validate(&self) -> Result<()> {
        for (id, poly) in &self.regions {
            poly.validate().map_err(|e| Error::InvalidGeometry(format!("region {id}: {e}")))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeshQuality {
    pub vertices: usize,
    pub edges: usize,
    pub triangles: usize,
    pub euler_characteristic: i64,
    pub min_edge: f64,
    pub max_edge: f64,
    pub min_angle_deg: f64,
    pub region_triangle_counts: BTreeMap<u32, usize>,
}

impl TriangleMesh {
    /// Builds a mesh with every triangle in `region`, checking indices and areas.
    pub fn new(vertices: Vec<Point3>, triangles: Vec<[usize; 3]>, domain: DomainKind, region: RegionId) -> Result<Self> {
        let nt = triangles.len();
        Self::with_regions(vertices, triangles, domain, vec![region; nt])
    }

    pub fn with_regions(
        vertices: Vec<Point3>,
        triangles: Vec<[usize; 3]>,
        domain: DomainKind,
        triangle_region: Vec<RegionId>,
    ) -> Result<Self> {
        if triangle_region.len() != triangles.len() {
            return Err(Error::InvalidArgument("one region id per triangle is required".into()));
        }
        for (t, tri) in triangles.iter().enumerate() {
            if tri.iter().any(|&i| i >= vertices.len()) {
                return Err(Error::InvalidGeometry(format!("triangle {t} references a missing vertex")));
            }
            if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
                return Err(Error::DegenerateGeometry(format!("triangle {t} repeats a vertex")));
            }
        }
        let mut mesh = Self { vertices, triangles, domain, triangle_region, vertex_region: Vec::new() };
        for t in 0..mesh.triangles.len() {
            if !(mesh.flat_area(t) > 0.0) {
                return Err(Error::DegenerateGeometry(format!("triangle {t} has zero area")));
            }
        }
        mesh.derive_vertex_regions();
        Ok(mesh)
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn corners(&self, t: usize) -> [Point3; 3] {
        let [a, b, c] = self.triangles[t];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    /// Area of the flat facet spanned by the triangle's corners.
    pub fn flat_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.corners(t);
        flat_triangle_area(&a, &b, &c)
    }

    /// Area in the domain metric: spherical excess on the sphere.
    pub fn area(&self, t: usize) -> f64 {
        let [a, b, c] = self.corners(t);
        match self.domain {
            DomainKind::Sphere => spherical_triangle_area(&a, &b, &c),
            DomainKind::Plane => flat_triangle_area(&a, &b, &c),
        }
    }

    pub fn total_area(&self) -> f64 {
        (0..self.num_triangles()).map(|t| self.area(t)).sum()
    }

    pub fn centroid(&self, t: usize) -> Point3 {
        let [a, b, c] = self.corners(t);
        let m = (a + b + c) * (1.0 / 3.0);
        match self.domain {
            DomainKind::Sphere => m.normalized(),
            DomainKind::Plane => m,
        }
    }

    /// Undirected edges with the number of incident triangles.
    pub fn edge_counts(&self) -> HashMap<(usize, usize), usize> {
        let mut edges = HashMap::with_capacity(self.triangles.len() * 3 / 2 + 1);
        for tri in &self.triangles {
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                *edges.entry((a.min(b), a.max(b))).or_insert(0) += 1;
            }
        }
        edges
    }

    pub fn num_edges(&self) -> usize {
        self.edge_counts().len()
    }

    /// V − E + F counting only vertices referenced by some triangle.
    pub fn euler_characteristic(&self) -> i64 {
        let mut used = vec![false; self.vertices.len()];
        for tri in &self.triangles {
            for &i in tri {
                used[i] = true;
            }
        }
        let v = used.iter().filter(|&&u| u).count() as i64;
        v - self.num_edges() as i64 + self.triangles.len() as i64
    }

    /// Vertex adjacency lists (sorted, without self).
    pub fn vertex_neighbours(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.vertices.len()];
        for &(a, b) in self.edge_counts().keys() {
            adj[a].push(b);
            adj[b].push(a);
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        adj
    }

    /// Lowest region id among each vertex's incident triangles.
    pub fn derive_vertex_regions(&mut self) {
        let mut vr: Vec<Option<RegionId>> = vec![None; self.vertices.len()];
        for (tri, &r) in self.triangles.iter().zip(&self.triangle_region) {
            for &i in tri {
                vr[i] = Some(match vr[i] {
                    Some(old) => old.min(r),
                    None => r,
                });
            }
        }
        self.vertex_region = vr.into_iter().map(|r| r.unwrap_or(DEFAULT_REGION)).collect();
    }

    pub fn regions(&self) -> Vec<RegionId> {
        let mut r: Vec<RegionId> = self.triangle_region.clone();
        r.sort_unstable();
        r.dedup();
        r
    }

    pub fn region_area(&self, region: RegionId) -> f64 {
        (0..self.num_triangles())
            .filter(|&t| self.triangle_region[t] == region)
            .map(|t| self.area(t))
            .sum()
    }

    pub fn quality(&self) -> MeshQuality {
        let edges = self.edge_counts();
        let (mut min_edge, mut max_edge) = (f64::INFINITY, 0.0_f64);
        for &(a, b) in edges.keys() {
            let len = self.vertices[a].distance(&self.vertices[b]);
            min_edge = min_edge.min(len);
            max_edge = max_edge.max(len);
        }
        let mut min_angle = 180.0_f64;
        for t in 0..self.num_triangles() {
            for ang in self.facet_angles_deg(t) {
                min_angle = min_angle.min(ang);
            }
        }
        let mut counts = BTreeMap::new();
        for r in &self.triangle_region {
            *counts.entry(r.0).or_insert(0) += 1;
        }
        MeshQuality {
            vertices: self.num_vertices(),
            edges: edges.len(),
            triangles: self.num_triangles(),
            euler_characteristic: self.euler_characteristic(),
            min_edge,
            max_edge,
            min_angle_deg: min_angle,
            region_triangle_counts: counts,
        }
    }

    /// Interior angles of the flat facet.
    pub fn facet_angles_deg(&self, t: usize) -> [f64; 3] {
        let p = self.corners(t);
        let mut out = [0.0; 3];
        for k in 0..3 {
            let u = p[(k + 1) % 3] - p[k];
            let v = p[(k + 2) % 3] - p[k];
            out[k] = u.cross(&v).norm().atan2(u.dot(&v)).to_degrees();
        }
        out
    }

    pub fn max_edge_length(&self) -> f64 {
        self.edge_counts()
            .keys()
            .map(|&(a, b)| self.vertices[a].distance(&self.vertices[b]))
            .fold(0.0, f64::max)
    }

    /// Keeps only triangles whose region is listed, dropping unused vertices.
    /// Returns the new mesh and, for every new vertex, its old index.
    pub fn restrict_to_regions(&self, keep: &[RegionId]) -> Result<(TriangleMesh, Vec<usize>)> {
        let tris: Vec<usize> = (0..self.num_triangles())
            .filter(|&t| keep.contains(&self.triangle_region[t]))
            .collect();
        if tris.is_empty() {
            return Err(Error::InvalidArgument(format!("no triangles in regions {keep:?}")));
        }
        Ok(self.sub_mesh(&tris))
    }

    fn sub_mesh(&self, tris: &[usize]) -> (TriangleMesh, Vec<usize>) {
        let mut new_index = vec![usize::MAX; self.vertices.len()];
        let mut old_of_new = Vec::new();
        let mut triangles = Vec::with_capacity(tris.len());
        let mut regions = Vec::with_capacity(tris.len());
        for &t in tris {
            let mut nt = [0; 3];
            for (k, &i) in self.triangles[t].iter().enumerate() {
                if new_index[i] == usize::MAX {
                    new_index[i] = old_of_new.len();
                    old_of_new.push(i);
                }
                nt[k] = new_index[i];
            }
            triangles.push(nt);
            regions.push(self.triangle_region[t]);
        }
        let vertices = old_of_new.iter().map(|&i| self.vertices[i]).collect();
        let mut mesh = TriangleMesh {
            vertices,
            triangles,
            domain: self.domain,
            triangle_region: regions,
            vertex_region: Vec::new(),
        };
        mesh.derive_vertex_regions();
        (mesh, old_of_new)
    }

    /// Disjoint union of the per-region sub-meshes: vertices on region
    /// boundaries are duplicated so no two regions share a basis function.
    pub fn split_by_region(&self) -> (TriangleMesh, Vec<usize>) {
        let mut vertices = Vec::new();
        let mut triangles = Vec::new();
        let mut regions = Vec::new();
        let mut old_of_new = Vec::new();
        for region in self.regions() {
            let tris: Vec<usize> = (0..self.num_triangles())
                .filter(|&t| self.triangle_region[t] == region)
                .collect();
            let (sub, map) = self.sub_mesh(&tris);
            let offset = vertices.len();
            vertices.extend(sub.vertices);
            triangles.extend(sub.triangles.iter().map(|t| [t[0] + offset, t[1] + offset, t[2] + offset]));
            regions.extend(sub.triangle_region);
            old_of_new.extend(map);
        }
        let mut mesh = TriangleMesh { vertices, triangles, domain: self.domain, triangle_region: regions, vertex_region: Vec::new() };
        mesh.derive_vertex_regions();
        (mesh, old_of_new)
    }
}

/// Labels every triangle by the region containing its centroid.
pub fn assign_regions(mesh: &TriangleMesh, partition: &RegionPartition) -> TriangleMesh {
    let mut out = mesh.clone();
    out.triangle_region = (0..mesh.num_triangles())
        .map(|t| partition.region_of(mesh.domain, &mesh.centroid(t)))
        .collect();
    out.derive_vertex_regions();
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Polygon;

    fn two_triangles() -> TriangleMesh {
        let v = vec![Point3::planar(0.0, 0.0), Point3::planar(1.0, 0.0), Point3::planar(1.0, 1.0), Point3::planar(0.0, 1.0)];
        TriangleMesh::with_regions(v, vec![[0, 1, 2], [0, 2, 3]], DomainKind::Plane, vec![RegionId(2), RegionId(1)]).unwrap()
    }

    #[test]
    fn vertex_region_takes_lowest_incident_region() {
        let m = two_triangles();
        assert_eq!(m.vertex_region, vec![RegionId(1), RegionId(2), RegionId(1), RegionId(1)]);
    }

    #[test]
    fn degenerate_triangle_rejected() {
        let v = vec![Point3::planar(0.0, 0.0), Point3::planar(1.0, 0.0), Point3::planar(2.0, 0.0)];
        assert!(matches!(
            TriangleMesh::new(v, vec![[0, 1, 2]], DomainKind::Plane, DEFAULT_REGION),
            Err(Error::DegenerateGeometry(_))
        ));
    }

    #[test]
    fn planar_square_euler_is_one() {
        assert_eq!(two_triangles().euler_characteristic(), 1);
    }

    #[test]
    fn trivial_partition_labels_everything() {
        let m = assign_regions(&two_triangles(), &RegionPartition::single(RegionId(1)));
        assert!(m.triangle_region.iter().all(|&r| r == RegionId(1)));
    }

    #[test]
    fn centroid_assignment_and_idempotence() {
        let part = RegionPartition {
            regions: vec![(RegionId(7), Polygon::new(vec![vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0]]]))],
            default_region: RegionId(3),
        };
        let once = assign_regions(&two_triangles(), &part);
        assert_eq!(once.triangle_region, vec![RegionId(7), RegionId(3)]);
        assert_eq!(assign_regions(&once, &part), once);
    }

    #[test]
    fn split_duplicates_shared_vertices() {
        let (split, map) = two_triangles().split_by_region();
        assert_eq!(split.num_vertices(), 6);
        assert_eq!(map.len(), 6);
        let restricted = two_triangles().restrict_to_regions(&[RegionId(1)]).unwrap().0;
        assert_eq!(restricted.num_vertices(), 3);
    }
}
