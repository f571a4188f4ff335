use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{domain_distance, DomainKind, Point3, Polygon};
use crate::mesh::fibonacci_lattice;

use super::ObservationSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PseudoMode {
    Interior,
    Boundary,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PseudoSpec {
    pub count: usize,
    pub value: f64,
    pub std_error: f64,
    pub mode: PseudoMode,
}

impl PseudoSpec {
    pub fn interior(count: usize, std_error: f64) -> Self {
        Self { count, value: 0.0, std_error, mode: PseudoMode::Interior }
    }

    pub fn boundary(count: usize, std_error: f64) -> Self {
        Self { count, value: 0.0, std_error, mode: PseudoMode::Boundary }
    }
}

/// Candidates per requested point in interior mode.
const CANDIDATES_PER_POINT: usize = 60;
/// Lloyd relaxation sweeps applied after farthest-point seeding.
const LLOYD_SWEEPS: usize = 30;

/// Places `spec.count` pseudo-observations in (interior) or around (boundary)
/// the union of `polygons`. Interior points are seeded by farthest-point
/// sampling from a dense lattice and then moved towards the centroids of
/// their lattice cells; boundary points are equally spaced in arclength.
pub fn place_pseudo_observations(polygons: &[&Polygon], domain: DomainKind, spec: &PseudoSpec) -> Result<ObservationSet> {
    if spec.count == 0 {
        return Err(Error::InvalidArgument("pseudo-observation count must be at least 1".into()));
    }
    if !(spec.std_error > 0.0) {
        return Err(Error::InvalidArgument("pseudo-observation std_error must be positive".into()));
    }
    let union = Polygon { rings: polygons.iter().flat_map(|p| p.rings.iter().cloned()).collect() };
    if union.is_empty() {
        return Err(Error::Placement("empty region for pseudo-observations".into()));
    }
    let points = match spec.mode {
        PseudoMode::Boundary => {
            let pts = union.sample_boundary(domain, spec.count);
            if pts.len() != spec.count {
                return Err(Error::Placement("region boundary has zero length".into()));
            }
            pts
        }
        PseudoMode::Interior => farthest_points(&union, polygons, domain, spec.count)?,
    };
    let n = points.len();
    Ok(ObservationSet {
        locations: points,
        values: vec![spec.value; n],
        std_errors: vec![spec.std_error; n],
        is_pseudo: vec![true; n],
    })
}

fn inside_any(polygons: &[&Polygon], domain: DomainKind, p: &Point3) -> bool {
    polygons.iter().any(|poly| poly.contains_point(domain, p))
}

fn farthest_points(union: &Polygon, polygons: &[&Polygon], domain: DomainKind, n: usize) -> Result<Vec<Point3>> {
    let area: f64 = polygons.iter().map(|p| p.area(domain).abs()).sum();
    if !(area > 0.0) {
        return Err(Error::Placement("region has zero area".into()));
    }
    let want = CANDIDATES_PER_POINT * n;
    let candidates: Vec<Point3> = match domain {
        DomainKind::Sphere => {
            let total = ((want as f64) * 4.0 * std::f64::consts::PI / area).ceil().clamp(1000.0, 4.0e6) as usize;
            fibonacci_lattice(total)?.into_iter().filter(|p| inside_any(polygons, domain, p)).collect()
        }
        DomainKind::Plane => {
            let (x0, y0, x1, y1) = union.bbox().expect("non-empty polygon");
            let h = (area / want as f64).sqrt();
            let (nx, ny) = (((x1 - x0) / h).ceil() as usize, ((y1 - y0) / h).ceil() as usize);
            (0..ny)
                .flat_map(|j| (0..nx).map(move |i| Point3::planar(x0 + (i as f64 + 0.5) * h, y0 + (j as f64 + 0.5) * h)))
                .filter(|p| inside_any(polygons, domain, p))
                .collect()
        }
    };
    if candidates.len() < n {
        return Err(Error::Placement(format!(
            "region too small to host {n} distinct pseudo-observations ({} candidates)",
            candidates.len()
        )));
    }
    // Start from the candidate nearest the candidates' mean.
    let mut mean = candidates.iter().fold(Point3::new(0.0, 0.0, 0.0), |a, b| a + *b) * (1.0 / candidates.len() as f64);
    if domain == DomainKind::Sphere && mean.norm() > 1e-12 {
        mean = mean.normalized();
    }
    let first = (0..candidates.len())
        .min_by(|&a, &b| candidates[a].distance(&mean).total_cmp(&candidates[b].distance(&mean)))
        .unwrap();
    let mut chosen = vec![first];
    let mut dmin: Vec<f64> = candidates.iter().map(|c| domain_distance(domain, c, &candidates[first])).collect();
    while chosen.len() < n {
        let next = (0..candidates.len()).max_by(|&a, &b| dmin[a].total_cmp(&dmin[b]).then(b.cmp(&a))).unwrap();
        if dmin[next] <= 0.0 {
            return Err(Error::Placement("not enough distinct candidate points".into()));
        }
        chosen.push(next);
        for (d, c) in dmin.iter_mut().zip(&candidates) {
            *d = d.min(domain_distance(domain, c, &candidates[next]));
        }
    }
    lloyd(&candidates, domain, &mut chosen);
    Ok(chosen.into_iter().map(|i| candidates[i]).collect())
}

/// Discrete Lloyd iterations: each chosen candidate moves to the candidate
/// nearest the centroid of the candidates closest to it.
fn lloyd(candidates: &[Point3], domain: DomainKind, chosen: &mut [usize]) {
    let n = chosen.len();
    for _ in 0..LLOYD_SWEEPS {
        let mut sums = vec![Point3::new(0.0, 0.0, 0.0); n];
        let mut owner = vec![0usize; candidates.len()];
        for (c, p) in candidates.iter().enumerate() {
            let k = (0..n)
                .min_by(|&a, &b| {
                    let da = domain_distance(domain, p, &candidates[chosen[a]]);
                    let db = domain_distance(domain, p, &candidates[chosen[b]]);
                    da.total_cmp(&db)
                })
                .unwrap();
            owner[c] = k;
            sums[k] = sums[k] + *p;
        }
        let mut moved = false;
        for k in 0..n {
            let target = match domain {
                DomainKind::Sphere if sums[k].norm() > 1e-12 => sums[k].normalized(),
                DomainKind::Sphere => continue,
                DomainKind::Plane => {
                    let count = owner.iter().filter(|&&o| o == k).count().max(1);
                    sums[k] * (1.0 / count as f64)
                }
            };
            let best = (0..candidates.len())
                .filter(|&c| owner[c] == k)
                .min_by(|&a, &b| candidates[a].distance(&target).total_cmp(&candidates[b].distance(&target)).then(a.cmp(&b)))
                .unwrap_or(chosen[k]);
            if best != chosen[k] {
                chosen[k] = best;
                moved = true;
            }
        }
        if !moved {
            break;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cap() -> Polygon {
        Polygon::rectangle(-60.0, -30.0, 60.0, 30.0)
    }

    #[test]
    fn single_point_is_inside() {
        let p = cap();
        let obs = place_pseudo_observations(&[&p], DomainKind::Sphere, &PseudoSpec::interior(1, 0.1)).unwrap();
        assert_eq!(obs.len(), 1);
        assert!(p.contains_point(DomainKind::Sphere, &obs.locations[0]));
        assert!(obs.is_pseudo[0]);
    }

    #[test]
    fn interior_points_are_well_spread() {
        let p = cap();
        let n = 50;
        let obs = place_pseudo_observations(&[&p], DomainKind::Sphere, &PseudoSpec::interior(n, 0.1)).unwrap();
        let spacing = (p.area(DomainKind::Sphere) / n as f64).sqrt();
        let mut min_d = f64::INFINITY;
        for i in 0..n {
            assert!(p.contains_point(DomainKind::Sphere, &obs.locations[i]));
            for j in (i + 1)..n {
                min_d = min_d.min(obs.locations[i].angle_to(&obs.locations[j]));
            }
        }
        assert!(min_d >= 0.5 * spacing, "{min_d} vs {spacing}");
        assert!(obs.std_errors.iter().all(|&s| s == 0.1) && obs.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn boundary_points_have_equal_gaps() {
        let p = Polygon::rectangle(0.0, 0.0, 4.0, 2.0);
        let obs = place_pseudo_observations(&[&p], DomainKind::Plane, &PseudoSpec::boundary(50, 0.1)).unwrap();
        let n = obs.len();
        let gaps: Vec<f64> = (0..n)
            .map(|i| {
                let (a, b) = (obs.locations[i], obs.locations[(i + 1) % n]);
                // Arclength along the rectangle boundary.
                let s = |q: &Point3| {
                    if q.y == 0.0 {
                        q.x
                    } else if q.x == 4.0 {
                        4.0 + q.y
                    } else if q.y == 2.0 {
                        6.0 + (4.0 - q.x)
                    } else {
                        10.0 + (2.0 - q.y)
                    }
                };
                (s(&b) - s(&a)).rem_euclid(12.0)
            })
            .collect();
        let mean = gaps.iter().sum::<f64>() / n as f64;
        assert!(gaps.iter().all(|g| (g - mean).abs() < 0.01 * mean));
    }

    #[test]
    fn tiny_region_is_a_placement_error() {
        let p = Polygon::rectangle(0.0, 0.0, 1e-4, 1e-4);
        let res = place_pseudo_observations(&[&p], DomainKind::Sphere, &PseudoSpec::interior(50, 0.1));
        assert!(matches!(res, Err(Error::Placement(_))));
    }
}
