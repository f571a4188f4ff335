//! Incremental 3D convex hull with conflict lists and exact orientation
//! predicates. For points on the unit sphere the hull facets form the
//! spherical Delaunay triangulation.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::Point3;

const NONE: usize = usize::MAX;

struct Face {
    v: [usize; 3],
    /// Neighbour across edge (v[k], v[k+1]).
    nb: [usize; 3],
    alive: bool,
    outside: Vec<usize>,
}

fn coord(p: &Point3) -> robust::Coord3D<f64> {
    robust::Coord3D { x: p.x, y: p.y, z: p.z }
}

/// Negative when `d` lies on the outer side of face (a, b, c).
fn orient(pts: &[Point3], f: &[usize; 3], d: usize) -> f64 {
    robust::orient3d(coord(&pts[f[0]]), coord(&pts[f[1]]), coord(&pts[f[2]]), coord(&pts[d]))
}

fn visible(pts: &[Point3], f: &[usize; 3], d: usize) -> bool {
    orient(pts, f, d) < 0.0
}

/// Triangles of the convex hull, oriented counter-clockwise seen from outside.
/// Every input point must end up as a hull vertex.
pub(crate) fn convex_hull(pts: &[Point3]) -> Result<Vec<[usize; 3]>> {
    let n = pts.len();
    if n < 4 {
        return Err(Error::DegenerateGeometry(format!("need at least 4 points, got {n}")));
    }
    let [i0, i1, i2, i3] = initial_simplex(pts)?;

    let mut faces: Vec<Face> = Vec::with_capacity(2 * n);
    // Orient so the fourth point is inside.
    let tet = if robust::orient3d(coord(&pts[i0]), coord(&pts[i1]), coord(&pts[i2]), coord(&pts[i3])) > 0.0 {
        [[i0, i1, i2], [i0, i3, i1], [i1, i3, i2], [i2, i3, i0]]
    } else {
        [[i0, i2, i1], [i0, i1, i3], [i1, i2, i3], [i2, i0, i3]]
    };
    for v in tet {
        faces.push(Face { v, nb: [NONE; 3], alive: true, outside: Vec::new() });
    }
    link_all(&mut faces);

    let mut order: Vec<usize> = (0..n).filter(|&i| i != i0 && i != i1 && i != i2 && i != i3).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(0x5eed_4a11));

    let mut conflict = vec![NONE; n];
    for &p in &order {
        if let Some(f) = (0..4).find(|&f| visible(pts, &faces[f].v, p)) {
            conflict[p] = f;
            faces[f].outside.push(p);
        }
    }

    let mut visible_mark: Vec<u32> = vec![0; faces.len()];
    let mut stamp = 0u32;
    let mut stack = Vec::new();
    let mut vis_faces = Vec::new();
    let mut horizon: Vec<(usize, usize, usize, usize)> = Vec::new();

    for &p in &order {
        let f0 = conflict[p];
        if f0 == NONE {
            return Err(Error::DegenerateGeometry(format!("point {p} lies inside the hull of the others")));
        }
        stamp += 1;
        visible_mark.resize(faces.len(), 0);
        vis_faces.clear();
        stack.clear();
        stack.push(f0);
        visible_mark[f0] = stamp;
        while let Some(f) = stack.pop() {
            vis_faces.push(f);
            for k in 0..3 {
                let g = faces[f].nb[k];
                if visible_mark[g] != stamp && visible(pts, &faces[g].v, p) {
                    visible_mark[g] = stamp;
                    stack.push(g);
                }
            }
        }
        // Horizon edges: (a, b, outer neighbour, visible face).
        horizon.clear();
        for &f in &vis_faces {
            for k in 0..3 {
                let g = faces[f].nb[k];
                if visible_mark[g] != stamp {
                    horizon.push((faces[f].v[k], faces[f].v[(k + 1) % 3], g, f));
                }
            }
        }
        let first_new = faces.len();
        let mut by_start = std::collections::HashMap::with_capacity(horizon.len());
        for (idx, &(a, b, g, f)) in horizon.iter().enumerate() {
            let id = first_new + idx;
            faces.push(Face { v: [a, b, p], nb: [g, NONE, NONE], alive: true, outside: Vec::new() });
            for slot in faces[g].nb.iter_mut() {
                if *slot == f {
                    *slot = id;
                }
            }
            by_start.insert(a, id);
        }
        for idx in 0..horizon.len() {
            let id = first_new + idx;
            let b = horizon[idx].1;
            let next = *by_start.get(&b).ok_or_else(|| Error::DegenerateGeometry("open horizon".into()))?;
            faces[id].nb[1] = next;
            faces[next].nb[2] = id;
        }
        // Redistribute conflict points of the removed faces.
        let mut orphans = Vec::new();
        for &f in &vis_faces {
            faces[f].alive = false;
            orphans.append(&mut faces[f].outside);
        }
        for q in orphans {
            if q == p {
                continue;
            }
            conflict[q] = NONE;
            let mut found = (first_new..faces.len()).find(|&g| visible(pts, &faces[g].v, q));
            if found.is_none() {
                // Otherwise q's visible region must touch the horizon from outside.
                found = horizon.iter().map(|h| h.2).find(|&g| visible(pts, &faces[g].v, q));
            }
            if let Some(g) = found {
                conflict[q] = g;
                faces[g].outside.push(q);
            }
        }
        conflict[p] = NONE;
    }

    let tris: Vec<[usize; 3]> = faces.iter().filter(|f| f.alive).map(|f| f.v).collect();
    let mut used = vec![false; n];
    for t in &tris {
        for &i in t {
            used[i] = true;
        }
    }
    if let Some(i) = used.iter().position(|u| !u) {
        return Err(Error::DegenerateGeometry(format!("point {i} is not a hull vertex")));
    }
    Ok(tris)
}

fn link_all(faces: &mut [Face]) {
    let mut edge = std::collections::HashMap::new();
    for (fi, f) in faces.iter().enumerate() {
        for k in 0..3 {
            edge.insert((f.v[k], f.v[(k + 1) % 3]), fi);
        }
    }
    for fi in 0..faces.len() {
        for k in 0..3 {
            let (a, b) = (faces[fi].v[k], faces[fi].v[(k + 1) % 3]);
            faces[fi].nb[k] = edge[&(b, a)];
        }
    }
}

fn initial_simplex(pts: &[Point3]) -> Result<[usize; 4]> {
    let i0 = 0;
    let i1 = (0..pts.len())
        .max_by(|&a, &b| pts[a].distance(&pts[i0]).total_cmp(&pts[b].distance(&pts[i0])))
        .unwrap();
    if pts[i1].distance(&pts[i0]) == 0.0 {
        return Err(Error::DegenerateGeometry("all points coincide".into()));
    }
    let dir = pts[i1] - pts[i0];
    let i2 = (0..pts.len())
        .max_by(|&a, &b| {
            let da = dir.cross(&(pts[a] - pts[i0])).norm();
            let db = dir.cross(&(pts[b] - pts[i0])).norm();
            da.total_cmp(&db)
        })
        .unwrap();
    if dir.cross(&(pts[i2] - pts[i0])).norm() == 0.0 {
        return Err(Error::DegenerateGeometry("all points are collinear".into()));
    }
    let i3 = (0..pts.len())
        .max_by(|&a, &b| {
            let oa = robust::orient3d(coord(&pts[i0]), coord(&pts[i1]), coord(&pts[i2]), coord(&pts[a])).abs();
            let ob = robust::orient3d(coord(&pts[i0]), coord(&pts[i1]), coord(&pts[i2]), coord(&pts[b])).abs();
            oa.total_cmp(&ob)
        })
        .unwrap();
    if robust::orient3d(coord(&pts[i0]), coord(&pts[i1]), coord(&pts[i2]), coord(&pts[i3])) == 0.0 {
        return Err(Error::DegenerateGeometry("all points are coplanar".into()));
    }
    Ok([i0, i1, i2, i3])
}
