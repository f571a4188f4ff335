//! Zero-region extraction from an ensemble of gridded simulations:
//! pixelwise ensemble statistics, thresholding, 4-connected components and
//! boundary tracing.

use std::collections::{HashMap, VecDeque};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Polygon;
use crate::grid::RegularGrid;

/// Member fields sharing one grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GriddedEnsemble {
    pub grid: RegularGrid,
    pub members: Vec<Vec<f64>>,
    pub ids: Vec<String>,
}

impl GriddedEnsemble {
    pub fn new(grid: RegularGrid, members: Vec<Vec<f64>>, ids: Vec<String>) -> Result<Self> {
        if ids.len() != members.len() {
            return Err(Error::InvalidArgument("one id per member is required".into()));
        }
        for (m, id) in members.iter().zip(&ids) {
            if m.len() != grid.len() {
                return Err(Error::InvalidArgument(format!("member {id} has {} cells, grid has {}", m.len(), grid.len())));
            }
            if let Some(k) = m.iter().position(|v| !v.is_finite()) {
                return Err(Error::InvalidArgument(format!("member {id} has a missing value at cell {k}")));
            }
        }
        Ok(Self { grid, members, ids })
    }
}

/// Pixelwise mean and sample standard deviation (n − 1 denominator).
pub fn ensemble_stats(ens: &GriddedEnsemble) -> Result<(Vec<f64>, Vec<f64>)> {
    if ens.members.len() < 2 {
        return Err(Error::InvalidArgument(format!("ensemble statistics need at least 2 members, got {}", ens.members.len())));
    }
    let n = ens.members.len() as f64;
    let stats: Vec<(f64, f64)> = (0..ens.grid.len())
        .into_par_iter()
        .map(|c| {
            // Welford update.
            let (mut mean, mut m2) = (0.0, 0.0);
            for (k, m) in ens.members.iter().enumerate() {
                let x = m[c];
                let d = x - mean;
                mean += d / (k + 1) as f64;
                m2 += d * (x - mean);
            }
            (mean, (m2 / (n - 1.0)).max(0.0).sqrt())
        })
        .collect();
    Ok(stats.into_iter().unzip())
}

/// A pixel is kept iff |mean| < `mean_thresh` and sd ≤ `sd_thresh`.
pub fn threshold_mask(mean: &[f64], sd: &[f64], mean_thresh: f64, sd_thresh: f64) -> Result<Vec<bool>> {
    if !(mean_thresh > 0.0 && sd_thresh > 0.0) {
        return Err(Error::InvalidArgument("thresholds must be positive".into()));
    }
    if mean.len() != sd.len() {
        return Err(Error::InvalidArgument("mean and sd grids differ in size".into()));
    }
    Ok(mean.iter().zip(sd).map(|(m, s)| m.abs() < mean_thresh && *s <= sd_thresh).collect())
}

/// One retained connected component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZeroPolygon {
    pub polygon: Polygon,
    /// Sum of the component's cell areas (km² on the sphere).
    pub area: f64,
    pub cells: Vec<usize>,
}

/// Retained pixels and their boundary polygons.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZeroRegionMask {
    pub grid: RegularGrid,
    pub kept: Vec<bool>,
    pub polygons: Vec<ZeroPolygon>,
}

impl ZeroRegionMask {
    /// All rings of all components as one even-odd polygon.
    pub fn union(&self) -> Polygon {
        Polygon { rings: self.polygons.iter().flat_map(|p| p.polygon.rings.iter().cloned()).collect() }
    }

    pub fn total_area(&self) -> f64 {
        self.polygons.iter().map(|p| p.area).sum()
    }
}

fn neighbours(grid: &RegularGrid, c: usize) -> impl Iterator<Item = usize> + '_ {
    let (i, j) = ((c % grid.nx) as i64, (c / grid.nx) as i64);
    let wrap = grid.wraps();
    [(1, 0), (-1, 0), (0, 1), (0, -1)].into_iter().filter_map(move |(di, dj)| {
        let (mut ni, nj) = (i + di, j + dj);
        if nj < 0 || nj >= grid.ny as i64 {
            return None;
        }
        if wrap {
            ni = ni.rem_euclid(grid.nx as i64);
        } else if ni < 0 || ni >= grid.nx as i64 {
            return None;
        }
        Some(nj as usize * grid.nx + ni as usize)
    })
}

/// 4-connected components of kept cells (longitude wrap on global grids).
pub fn components(grid: &RegularGrid, mask: &[bool]) -> Vec<Vec<usize>> {
    let mut label = vec![usize::MAX; mask.len()];
    let mut out = Vec::new();
    for start in 0..mask.len() {
        if !mask[start] || label[start] != usize::MAX {
            continue;
        }
        let id = out.len();
        let mut cells = vec![start];
        label[start] = id;
        let mut queue = VecDeque::from([start]);
        while let Some(c) = queue.pop_front() {
            for n in neighbours(grid, c) {
                if mask[n] && label[n] == usize::MAX {
                    label[n] = id;
                    cells.push(n);
                    queue.push_back(n);
                }
            }
        }
        cells.sort_unstable();
        out.push(cells);
    }
    out
}

/// Components traced to polygons; components below `min_area` are removed
/// from the mask as well.
pub fn polygons_from_mask(grid: &RegularGrid, mask: &[bool], min_area: f64) -> Result<ZeroRegionMask> {
    if mask.len() != grid.len() {
        return Err(Error::InvalidArgument(format!("mask has {} cells, grid has {}", mask.len(), grid.len())));
    }
    let mut kept = vec![false; mask.len()];
    let mut polygons = Vec::new();
    for cells in components(grid, mask) {
        let area: f64 = cells.iter().map(|&c| grid.cell_area(c / grid.nx)).sum();
        if area < min_area {
            continue;
        }
        for &c in &cells {
            kept[c] = true;
        }
        polygons.push(ZeroPolygon { polygon: trace_component(grid, &cells), area, cells });
    }
    Ok(ZeroRegionMask { grid: *grid, kept, polygons })
}

const DIRS: [(i64, i64); 4] = [(1, 0), (0, 1), (-1, 0), (0, -1)];

/// Boundary rings of one component, interior on the left of every ring.
fn trace_component(grid: &RegularGrid, cells: &[usize]) -> Polygon {
    let nx = grid.nx as i64;
    let wrap = grid.wraps();
    let inside: std::collections::HashSet<usize> = cells.iter().copied().collect();
    let is_in = |i: i64, j: i64| {
        if j < 0 || j >= grid.ny as i64 {
            return false;
        }
        let i = if wrap {
            i.rem_euclid(nx)
        } else if i < 0 || i >= nx {
            return false;
        } else {
            i
        };
        inside.contains(&(j as usize * grid.nx + i as usize))
    };
    let node_key = |i: i64, j: i64| if wrap { (i.rem_euclid(nx), j) } else { (i, j) };
    // Directed unit edges keyed by their start node; value = direction index.
    let mut out_edges: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    let mut edges: Vec<((i64, i64), usize)> = Vec::new();
    for &c in cells {
        let (i, j) = ((c % grid.nx) as i64, (c / grid.nx) as i64);
        let sides = [
            (!is_in(i, j - 1), (i, j), 0),
            (!is_in(i + 1, j), (i + 1, j), 1),
            (!is_in(i, j + 1), (i + 1, j + 1), 2),
            (!is_in(i - 1, j), (i, j + 1), 3),
        ];
        for (open, start, dir) in sides {
            if open {
                let k = node_key(start.0, start.1);
                out_edges.entry(k).or_default().push(edges.len());
                edges.push((k, dir));
            }
        }
    }
    let mut used = vec![false; edges.len()];
    let polar = grid.domain == crate::geometry::DomainKind::Sphere;
    let corner = |i: i64, j: i64| [grid.x0 - 0.5 * grid.dx + i as f64 * grid.dx, grid.y0 - 0.5 * grid.dy + j as f64 * grid.dy];
    let mut rings = Vec::new();
    for e0 in 0..edges.len() {
        if used[e0] {
            continue;
        }
        let (start, _) = edges[e0];
        let mut pos = start;
        let mut pts: Vec<(i64, i64)> = vec![pos];
        let mut e = e0;
        loop {
            used[e] = true;
            let dir = edges[e].1;
            pos = (pos.0 + DIRS[dir].0, pos.1 + DIRS[dir].1);
            let key = node_key(pos.0, pos.1);
            let cands = out_edges.get(&key).map(|v| v.as_slice()).unwrap_or(&[]);
            // Prefer a left turn, then straight, then right.
            let next = [1usize, 0, 3]
                .iter()
                .filter_map(|turn| cands.iter().copied().find(|&c| !used[c] && edges[c].1 == (dir + turn) % 4))
                .next();
            match next {
                Some(n) => {
                    pts.push(pos);
                    e = n;
                }
                None => break,
            }
        }
        // `pos` is the end node (the start node shifted by a multiple of nx).
        pts.push(pos);
        let shift = pos.0 - start.0;
        let walk = if shift == 0 {
            pts
        } else {
            // Globe-encircling walk: start at its northernmost node; it is
            // closed through the north pole below.
            let body = &pts[..pts.len() - 1];
            let k = (0..body.len()).max_by_key(|&q| (body[q].1, std::cmp::Reverse(q))).unwrap_or(0);
            let mut seq: Vec<(i64, i64)> = body[k..].to_vec();
            seq.extend(body[..k].iter().map(|&(i, j)| (i + shift, j)));
            seq.push((body[k].0 + shift, body[k].1));
            seq
        };
        let (walk, loops) = split_loops(walk);
        for l in loops {
            push_ring(&mut rings, l.iter().map(|&(i, j)| corner(i, j)).collect(), polar);
        }
        if walk.len() > 1 {
            let mut ring: Vec<[f64; 2]> = walk[..walk.len() - 1].iter().map(|&(i, j)| corner(i, j)).collect();
            if shift != 0 {
                let (first, last) = (ring[0], corner(walk[walk.len() - 1].0, walk[walk.len() - 1].1));
                ring.push(last);
                ring.push([last[0], 90.0]);
                ring.push([first[0], 90.0]);
            }
            push_ring(&mut rings, ring, polar);
        }
    }
    Polygon { rings }
}

/// Adds a ring. On the sphere, a ring that reaches the north pole line more
/// than once is cut there into separate rings; edges along the pole line
/// never affect containment, so the filled set is unchanged.
fn push_ring(rings: &mut Vec<Vec<[f64; 2]>>, ring: Vec<[f64; 2]>, polar: bool) {
    let ring = simplify_ring(ring);
    if ring.len() < 3 || ring.iter().all(|p| p[1] >= 90.0) {
        return;
    }
    let at_pole: Vec<usize> = if polar { (0..ring.len()).filter(|&q| ring[q][1] >= 90.0).collect() } else { Vec::new() };
    if at_pole.len() <= 2 {
        rings.push(ring);
        return;
    }
    let n = ring.len();
    for w in 0..at_pole.len() {
        let (a, b) = (at_pole[w], at_pole[(w + 1) % at_pole.len()]);
        let len = (b + n - a) % n;
        if len < 2 {
            continue;
        }
        let piece: Vec<[f64; 2]> = (0..=len).map(|q| ring[(a + q) % n]).collect();
        let piece = simplify_ring(piece);
        if piece.len() >= 3 {
            rings.push(piece);
        }
    }
}

/// Cuts every closed sub-loop out of a node walk. Returns the remaining walk
/// (first and last node kept) and the loops (without repeated end node).
fn split_loops(pts: Vec<(i64, i64)>) -> (Vec<(i64, i64)>, Vec<Vec<(i64, i64)>>) {
    let mut stack: Vec<(i64, i64)> = Vec::with_capacity(pts.len());
    let mut at: HashMap<(i64, i64), usize> = HashMap::new();
    let mut loops = Vec::new();
    let n = pts.len();
    for (q, p) in pts.into_iter().enumerate() {
        if q + 1 < n || stack.first() != Some(&p) {
            if let Some(&k) = at.get(&p) {
                let l: Vec<(i64, i64)> = stack.drain(k..).collect();
                for v in &l {
                    at.remove(v);
                }
                loops.push(l);
            }
        }
        at.insert(p, stack.len());
        stack.push(p);
    }
    (stack, loops)
}

/// Drops repeated and collinear vertices of a closed ring.
fn simplify_ring(ring: Vec<[f64; 2]>) -> Vec<[f64; 2]> {
    let mut r: Vec<[f64; 2]> = Vec::with_capacity(ring.len());
    for p in ring {
        if r.last() != Some(&p) {
            r.push(p);
        }
    }
    while r.len() > 1 && r.first() == r.last() {
        r.pop();
    }
    loop {
        let n = r.len();
        if n < 3 {
            return r;
        }
        let keep: Vec<bool> = (0..n)
            .map(|i| {
                let (a, b, c) = (r[(i + n - 1) % n], r[i], r[(i + 1) % n]);
                (b[0] - a[0]) * (c[1] - b[1]) - (b[1] - a[1]) * (c[0] - b[0]) != 0.0
            })
            .collect();
        if keep.iter().all(|&k| k) {
            return r;
        }
        // Remove one vertex at a time from each collinear run.
        let drop = keep.iter().position(|&k| !k).unwrap();
        r.remove(drop);
    }
}

/// Cells whose centres lie inside any polygon.
pub fn rasterize(grid: &RegularGrid, polygons: &[Polygon]) -> Vec<bool> {
    let boxes: Vec<Option<(f64, f64, f64, f64)>> = polygons.iter().map(|p| p.bbox()).collect();
    grid.centers()
        .par_iter()
        .map(|&(x, y)| {
            polygons.iter().zip(&boxes).any(|(p, b)| match b {
                Some((_, y0, _, y1)) if y < *y0 || y > *y1 => false,
                Some(_) => p.contains(grid.domain, x, y),
                None => false,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{lon_lat_cell_area_km2, DomainKind};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn small_global() -> RegularGrid {
        RegularGrid::global(10.0).unwrap()
    }

    #[test]
    fn identical_and_two_point_members() {
        let g = small_global();
        let f: Vec<f64> = (0..g.len()).map(|k| k as f64 * 0.01).collect();
        let ens = GriddedEnsemble::new(g, vec![f.clone(), f.clone(), f.clone()], vec!["a".into(), "b".into(), "c".into()]).unwrap();
        let (m, s) = ensemble_stats(&ens).unwrap();
        assert!(s.iter().all(|&v| v == 0.0));
        for (a, b) in m.iter().zip(&f) {
            assert!((a - b).abs() < 1e-15);
        }
        let c = 0.7;
        let ens = GriddedEnsemble::new(g, vec![vec![c; g.len()], vec![-c; g.len()]], vec!["p".into(), "n".into()]).unwrap();
        let (m, s) = ensemble_stats(&ens).unwrap();
        assert!(m.iter().all(|&v| v == 0.0));
        assert!(s.iter().all(|&v| (v - c * 2f64.sqrt()).abs() < 1e-15));
        let one = GriddedEnsemble::new(g, vec![vec![0.0; g.len()]], vec!["x".into()]).unwrap();
        assert!(matches!(ensemble_stats(&one), Err(Error::InvalidArgument(_))));
        assert!(GriddedEnsemble::new(g, vec![vec![f64::NAN; g.len()]], vec!["x".into()]).is_err());
    }

    #[test]
    fn stats_match_two_pass() {
        let g = small_global();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let members: Vec<Vec<f64>> = (0..8).map(|_| (0..g.len()).map(|_| rng.random_range(-5.0..5.0)).collect()).collect();
        let ids = (0..8).map(|k| format!("m{k}")).collect();
        let ens = GriddedEnsemble::new(g, members.clone(), ids).unwrap();
        let (m, s) = ensemble_stats(&ens).unwrap();
        for c in 0..g.len() {
            let mean = members.iter().map(|v| v[c]).sum::<f64>() / 8.0;
            let var = members.iter().map(|v| (v[c] - mean).powi(2)).sum::<f64>() / 7.0;
            assert!((m[c] - mean).abs() < 1e-12);
            assert!((s[c] - var.sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn threshold_examples() {
        let m = threshold_mask(&[0.29, 0.31, 0.0, -0.29, -0.31], &[0.40, 0.1, 0.41, 0.0, 0.0], 0.3, 0.4).unwrap();
        assert_eq!(m, vec![true, false, false, true, false]);
        assert!(threshold_mask(&[0.0], &[0.0], 0.0, 0.4).is_err());
    }

    #[test]
    fn single_pixel_areas() {
        let g = RegularGrid::global(1.0).unwrap();
        let mut mask = vec![false; g.len()];
        let eq = g.index(200, 90); // lat 0.5
        let polar = g.index(10, 179); // lat 89.5
        mask[eq] = true;
        mask[polar] = true;
        let z = polygons_from_mask(&g, &mask, 200.0).unwrap();
        assert_eq!(z.polygons.len(), 1);
        let expected = lon_lat_cell_area_km2(0.0, 1.0, 1.0);
        assert!((z.polygons[0].area - expected).abs() < 1e-9 * expected);
        assert!((expected - 12_363.0).abs() < 5.0, "{expected}");
        let polar_area = lon_lat_cell_area_km2(89.0, 90.0, 1.0);
        assert!((polar_area - 107.9).abs() < 0.1, "{polar_area}");
        assert!(z.kept[eq] && !z.kept[polar]);
        let ring = &z.polygons[0].polygon.rings[0];
        assert_eq!(ring.len(), 4);
        let sr = z.polygons[0].polygon.area(DomainKind::Sphere) * crate::EARTH_RADIUS_KM.powi(2);
        assert!((sr - expected).abs() < 1e-6 * expected);
    }

    #[test]
    fn full_mask_is_one_polygon() {
        let g = small_global();
        let z = polygons_from_mask(&g, &vec![true; g.len()], 200.0).unwrap();
        assert_eq!(z.polygons.len(), 1);
        assert_eq!(z.polygons[0].polygon.rings.len(), 1);
        assert_eq!(rasterize(&g, &[z.union()]), vec![true; g.len()]);
        let sphere = 4.0 * std::f64::consts::PI * crate::EARTH_RADIUS_KM.powi(2);
        assert!((z.total_area() - sphere).abs() < 1e-9 * sphere);
    }

    #[test]
    fn seam_component_is_one_polygon() {
        let g = small_global();
        let mut mask = vec![false; g.len()];
        for j in 8..11 {
            mask[g.index(0, j)] = true;
            mask[g.index(g.nx - 1, j)] = true;
        }
        let z = polygons_from_mask(&g, &mask, 0.0).unwrap();
        assert_eq!(z.polygons.len(), 1);
        assert_eq!(z.polygons[0].cells.len(), 6);
        assert_eq!(rasterize(&g, &[z.union()]), mask);
    }

    #[test]
    fn belt_and_cap() {
        let g = small_global();
        let mut mask = vec![false; g.len()];
        for i in 0..g.nx {
            for j in [5, 6, 17] {
                mask[g.index(i, j)] = true;
            }
        }
        let z = polygons_from_mask(&g, &mask, 0.0).unwrap();
        assert_eq!(z.polygons.len(), 2);
        assert_eq!(rasterize(&g, &[z.union()]), mask);
    }

    #[test]
    fn monotone_in_thresholds() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m: Vec<f64> = (0..500).map(|_| rng.random_range(-1.0..1.0)).collect();
        let s: Vec<f64> = (0..500).map(|_| rng.random_range(0.0..1.0)).collect();
        let loose = threshold_mask(&m, &s, 0.5, 0.6).unwrap();
        let tight = threshold_mask(&m, &s, 0.3, 0.4).unwrap();
        assert!(loose.iter().zip(&tight).all(|(l, t)| *l || !*t));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn rasterized_polygons_reproduce_mask(seed in any::<u64>(), density in 0.2f64..0.8, step in prop::sample::select(vec![10.0, 15.0, 20.0])) {
            let g = RegularGrid::global(step).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mask: Vec<bool> = (0..g.len()).map(|_| rng.random_bool(density)).collect();
            let z = polygons_from_mask(&g, &mask, 0.0).unwrap();
            for p in &z.polygons {
                if let Err(e) = p.polygon.validate() { let k: usize = e.split_whitespace().nth(1).unwrap().parse().unwrap(); prop_assert!(false, "{} {:?}", e, p.polygon.rings[k]); }
            }
            prop_assert_eq!(rasterize(&g, &[z.union()]), z.kept.clone());
            prop_assert_eq!(&z.kept, &mask);
        }

        #[test]
        fn planar_masks_round_trip(seed in any::<u64>()) {
            let g = RegularGrid { domain: DomainKind::Plane, x0: 0.5, dx: 1.0, nx: 12, y0: 0.5, dy: 1.0, ny: 9 };
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mask: Vec<bool> = (0..g.len()).map(|_| rng.random_bool(0.5)).collect();
            let z = polygons_from_mask(&g, &mask, 0.0).unwrap();
            prop_assert_eq!(rasterize(&g, &[z.union()]), mask);
        }
    }
}
