use std::collections::HashMap;

use crate::geometry::{DomainKind, Point3};

use super::TriangleMesh;

/// Containing triangle and barycentric weights of a query point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Location {
    pub triangle: usize,
    pub weights: [f64; 3],
}

/// Bucket index of triangles over a regular voxel grid.
#[derive(Debug, Clone)]
pub struct MeshLocator {
    origin: [f64; 3],
    cell: f64,
    dims: [i64; 3],
    buckets: HashMap<(i64, i64, i64), Vec<usize>>,
}

const INSIDE_TOL: f64 = 1e-12;

impl MeshLocator {
    pub fn new(mesh: &TriangleMesh) -> Self {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for v in &mesh.vertices {
            for (k, c) in v.as_array().iter().enumerate() {
                lo[k] = lo[k].min(*c);
                hi[k] = hi[k].max(*c);
            }
        }
        let max_edge = mesh.max_edge_length().max(1e-12);
        let cell = 2.0 * max_edge;
        let margin = match mesh.domain {
            DomainKind::Sphere => max_edge * max_edge + 1e-9,
            DomainKind::Plane => 1e-9 * max_edge,
        };
        let origin = [lo[0] - margin, lo[1] - margin, lo[2] - margin];
        let dims = [0, 1, 2].map(|k| (((hi[k] - lo[k] + 2.0 * margin) / cell).floor() as i64) + 1);
        let mut locator = Self { origin, cell, dims, buckets: HashMap::new() };
        for t in 0..mesh.num_triangles() {
            let c = mesh.corners(t);
            let mut tlo = [f64::INFINITY; 3];
            let mut thi = [f64::NEG_INFINITY; 3];
            for p in &c {
                for (k, v) in p.as_array().iter().enumerate() {
                    tlo[k] = tlo[k].min(*v - margin);
                    thi[k] = thi[k].max(*v + margin);
                }
            }
            let a = locator.cell_of(tlo);
            let b = locator.cell_of(thi);
            for i in a.0..=b.0 {
                for j in a.1..=b.1 {
                    for k in a.2..=b.2 {
                        locator.buckets.entry((i, j, k)).or_default().push(t);
                    }
                }
            }
        }
        locator
    }

    fn cell_of(&self, p: [f64; 3]) -> (i64, i64, i64) {
        let f = |k: usize| (((p[k] - self.origin[k]) / self.cell).floor() as i64).clamp(0, self.dims[k] - 1);
        (f(0), f(1), f(2))
    }

    /// Finds the triangle containing `p`; `None` when the point is outside a planar mesh.
    pub fn locate(&self, mesh: &TriangleMesh, p: &Point3) -> Option<Location> {
        let key = self.cell_of(p.as_array());
        let mut best: Option<(f64, usize, [f64; 3])> = None;
        if let Some(cands) = self.buckets.get(&key) {
            for &t in cands {
                let w = barycentric(mesh, t, p);
                let m = w[0].min(w[1]).min(w[2]);
                if m >= -INSIDE_TOL && best.is_none_or(|(bm, _, _)| m > bm) {
                    best = Some((m, t, w));
                }
            }
        }
        best.map(|(_, t, w)| Location { triangle: t, weights: clean(w) })
    }
}

fn clean(mut w: [f64; 3]) -> [f64; 3] {
    for x in &mut w {
        if *x < 0.0 {
            *x = 0.0;
        }
    }
    let s = w[0] + w[1] + w[2];
    [w[0] / s, w[1] / s, w[2] / s]
}

/// Barycentric weights of `p` in triangle `t`. On the sphere these are the
/// weights of the central projection of `p` onto the flat facet.
pub fn barycentric(mesh: &TriangleMesh, t: usize, p: &Point3) -> [f64; 3] {
    let [a, b, c] = mesh.corners(t);
    match mesh.domain {
        DomainKind::Plane => {
            let det = (b.x - a.x) * (c.y - a.y) - (c.x - a.x) * (b.y - a.y);
            let wa = ((b.x - p.x) * (c.y - p.y) - (c.x - p.x) * (b.y - p.y)) / det;
            let wb = ((c.x - p.x) * (a.y - p.y) - (a.x - p.x) * (c.y - p.y)) / det;
            let wc = ((a.x - p.x) * (b.y - p.y) - (b.x - p.x) * (a.y - p.y)) / det;
            [wa, wb, wc]
        }
        DomainKind::Sphere => {
            let (da, db, dc) = (a - *p, b - *p, c - *p);
            let wa = p.dot(&db.cross(&dc));
            let wb = p.dot(&dc.cross(&da));
            let wc = p.dot(&da.cross(&db));
            let s = wa + wb + wc;
            if s <= 0.0 {
                return [-1.0, -1.0, -1.0];
            }
            [wa / s, wb / s, wc / s]
        }
    }
}
