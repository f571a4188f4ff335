//! Synthetic data: a GIA-like truth with ensemble, simulation and
//! observations, ensembles with planted zero-regions, and observations of
//! fields drawn from the GMRF prior.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::{assemble_mass_stiffness, HyperParams, PrecisionBuilder};
use crate::geometry::{DomainKind, Point3};
use crate::grid::{GridField, RegularGrid};
use crate::mesh::{Location, MeshLocator, TriangleMesh};
use crate::model::ObservationSet;
use crate::sparse::Cholesky;
use crate::zeroregion::GriddedEnsemble;

/// A radially symmetric uplift dome with a negative peripheral bulge,
/// cut off steeply at three radii.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dome {
    pub lon: f64,
    pub lat: f64,
    /// Peak uplift in mm/yr.
    pub amplitude: f64,
    /// Gaussian radius in degrees of arc.
    pub radius: f64,
}

/// Bulge depth relative to the dome amplitude.
const BULGE_DEPTH: f64 = 0.35;
/// Bulge distance from the centre in dome radii.
const BULGE_OFFSET: f64 = 2.2;
/// Bulge width in dome radii.
const BULGE_WIDTH: f64 = 0.6;
/// Distance in dome radii beyond which a dome is exactly zero.
const SUPPORT: f64 = 3.0;
/// Width in dome radii of the smooth cut-off ending at `SUPPORT`.
const EDGE: f64 = 0.15;

impl Dome {
    pub fn value_at(&self, p: &Point3) -> f64 {
        let d = Point3::from_lon_lat(self.lon, self.lat).angle_to(p).to_degrees() / self.radius;
        if d >= SUPPORT {
            return 0.0;
        }
        let bulge = ((d - BULGE_OFFSET) / BULGE_WIDTH).powi(2);
        let t = ((SUPPORT - d) / EDGE).min(1.0);
        let cutoff = t * t * (3.0 - 2.0 * t);
        self.amplitude * cutoff * ((-0.5 * d * d).exp() - BULGE_DEPTH * (-0.5 * bulge).exp())
    }
}

/// Rebound centres of the former ice sheets.
pub fn default_domes() -> Vec<Dome> {
    let d = |lon, lat, amplitude, radius| Dome { lon, lat, amplitude, radius };
    vec![
        d(-88.0, 60.0, 14.0, 12.0),
        d(20.0, 64.0, 10.0, 7.0),
        d(-100.0, -78.0, 9.0, 10.0),
        d(60.0, -75.0, 6.0, 12.0),
        d(-42.0, 72.0, 5.0, 7.0),
        d(-140.0, 61.0, 5.0, 5.0),
        d(-72.0, -48.0, 5.0, 4.0),
    ]
}

pub fn domes_value(domes: &[Dome], p: &Point3) -> f64 {
    domes.iter().map(|d| d.value_at(p)).sum()
}

/// Settings of the synthetic GIA world.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GiaSpec {
    /// Grid spacing in degrees.
    pub grid_step: f64,
    pub members: usize,
    pub observations: usize,
    /// Observation standard errors are drawn uniformly from this range.
    pub std_error: (f64, f64),
    /// Relative spread of the member amplitudes and radii.
    pub member_spread: f64,
    /// Member centre jitter in degrees.
    pub member_shift: f64,
    /// Per-cell white noise of the members.
    pub member_noise: f64,
    /// Relative amplitude and radius error of the simulation.
    pub simulation_spread: f64,
    pub seed: u64,
}

impl Default for GiaSpec {
    fn default() -> Self {
        Self {
            grid_step: 1.0,
            members: 8,
            observations: 500,
            std_error: (0.3, 0.8),
            member_spread: 0.15,
            member_shift: 0.5,
            member_noise: 0.03,
            simulation_spread: 0.06,
            seed: 1,
        }
    }
}

/// Truth, simulation, ensemble and noisy point observations of the truth.
#[derive(Debug, Clone)]
pub struct GiaScenario {
    pub truth_domes: Vec<Dome>,
    pub truth: GridField,
    pub simulation: GridField,
    pub ensemble: GriddedEnsemble,
    pub observations: ObservationSet,
}

/// Copies of `domes` with perturbed centres, amplitudes and radii.
fn jittered(domes: &[Dome], spread: f64, shift: f64, rng: &mut ChaCha8Rng) -> Vec<Dome> {
    domes
        .iter()
        .map(|d| {
            let mut n = || rng.sample::<f64, _>(StandardNormal);
            Dome {
                lon: d.lon + shift * n() / d.lat.to_radians().cos().max(0.2),
                lat: (d.lat + shift * n()).clamp(-89.0, 89.0),
                amplitude: d.amplitude * (1.0 + spread * n()).max(0.1),
                radius: d.radius * (1.0 + spread * n()).max(0.5),
            }
        })
        .collect()
}

/// Copies of `domes` with amplitude errors and radii that only shrink, so
/// every copy vanishes wherever the original does.
fn narrowed(domes: &[Dome], spread: f64, rng: &mut ChaCha8Rng) -> Vec<Dome> {
    domes
        .iter()
        .map(|d| {
            let mut n = || rng.sample::<f64, _>(StandardNormal);
            Dome {
                amplitude: d.amplitude * (1.0 + spread * n()).max(0.1),
                radius: d.radius * (1.0 - 0.5 * spread * n().abs()).max(0.5),
                ..*d
            }
        })
        .collect()
}

fn grid_of(grid: &RegularGrid, domes: &[Dome], noise: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    grid.centers()
        .iter()
        .map(|&(lon, lat)| {
            let v = domes_value(domes, &Point3::from_lon_lat(lon, lat));
            if noise > 0.0 {
                v + noise * rng.sample::<f64, _>(StandardNormal)
            } else {
                v
            }
        })
        .collect()
}

/// Uniformly distributed point on the unit sphere.
pub fn random_sphere_point<R: Rng>(rng: &mut R) -> Point3 {
    loop {
        let p = Point3::new(rng.sample(StandardNormal), rng.sample(StandardNormal), rng.sample(StandardNormal));
        if p.norm() > 1e-6 {
            return p.normalized();
        }
    }
}

/// Builds the GIA-like world of `spec`. The truth is the sum of
/// [`default_domes`]. The simulation has amplitude errors and slightly
/// smaller domes; the members have perturbed centres and amplitudes and
/// wider domes. Truth and simulation vanish wherever all members do.
pub fn gia_scenario(spec: &GiaSpec) -> Result<GiaScenario> {
    if spec.members < 2 {
        return Err(Error::InvalidArgument("the ensemble needs at least 2 members".into()));
    }
    let (lo, hi) = spec.std_error;
    if !(lo > 0.0 && hi >= lo) {
        return Err(Error::InvalidArgument("observation std_error range must be positive and ordered".into()));
    }
    let grid = RegularGrid::global(spec.grid_step)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let truth_domes = default_domes();
    let truth = GridField::new(grid, grid_of(&grid, &truth_domes, 0.0, &mut rng))?;
    let sim_domes = narrowed(&truth_domes, spec.simulation_spread, &mut rng);
    let simulation = GridField::new(grid, grid_of(&grid, &sim_domes, 0.0, &mut rng))?;
    let mut members = Vec::with_capacity(spec.members);
    for _ in 0..spec.members {
        let d = jittered(&truth_domes, spec.member_spread, spec.member_shift, &mut rng);
        members.push(grid_of(&grid, &d, spec.member_noise, &mut rng));
    }
    let ids = (0..spec.members).map(|k| format!("member_{k:02}")).collect();
    let ensemble = GriddedEnsemble::new(grid, members, ids)?;
    let mut locations = Vec::with_capacity(spec.observations);
    let mut values = Vec::with_capacity(spec.observations);
    let mut std_errors = Vec::with_capacity(spec.observations);
    for _ in 0..spec.observations {
        let p = random_sphere_point(&mut rng);
        let se = rng.random_range(lo..=hi);
        values.push(domes_value(&truth_domes, &p) + se * rng.sample::<f64, _>(StandardNormal));
        locations.push(p);
        std_errors.push(se);
    }
    let observations = ObservationSet::new(locations, values, std_errors)?;
    Ok(GiaScenario { truth_domes, truth, simulation, ensemble, observations })
}

/// An ensemble whose zero-region is known by construction.
#[derive(Debug, Clone)]
pub struct PlantedEnsemble {
    pub ensemble: GriddedEnsemble,
    /// Cells of the near-zero basin, which straddles the ±180° seam.
    pub basin: Vec<bool>,
    /// Cells with near-zero mean but member spread above the sd threshold.
    pub noisy: Vec<bool>,
    /// Isolated near-zero cell in the northernmost row.
    pub speckle: usize,
}

/// Sets every cell's members to `mean + sd·e` where `e` has sample mean 0
/// and sample sd 1, so the ensemble statistics are known exactly.
fn planted_members(cells: &[(f64, f64)], n: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut members = vec![vec![0.0; cells.len()]; n];
    for (c, &(mean, sd)) in cells.iter().enumerate() {
        let mut e: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let m = e.iter().sum::<f64>() / n as f64;
        let s = (e.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
        for x in &mut e {
            *x = (*x - m) / s;
        }
        for (k, member) in members.iter_mut().enumerate() {
            member[c] = mean + sd * e[k];
        }
    }
    members
}

/// An 8-member ensemble on a 1° grid with a near-zero basin (radius 20°
/// around 175°E 15°S), a noisy patch (radius 8° around 30°W 15°N) and a
/// single near-zero cell at 89.5°N. All other cells have |mean| ≥ 1.
pub fn planted_ensemble(seed: u64) -> Result<PlantedEnsemble> {
    let grid = RegularGrid::global(1.0)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let basin_c = Point3::from_lon_lat(175.0, -15.0);
    let noisy_c = Point3::from_lon_lat(-30.0, 15.0);
    let speckle = grid.index(100, grid.ny - 1);
    let mut basin = vec![false; grid.len()];
    let mut noisy = vec![false; grid.len()];
    let mut stats = Vec::with_capacity(grid.len());
    for (c, &(lon, lat)) in grid.centers().iter().enumerate() {
        let p = Point3::from_lon_lat(lon, lat);
        let near_zero = rng.random_range(-0.2..0.2);
        let quiet = rng.random_range(0.05..0.35);
        if basin_c.angle_to(&p).to_degrees() < 20.0 {
            basin[c] = true;
            stats.push((near_zero, quiet));
        } else if noisy_c.angle_to(&p).to_degrees() < 8.0 {
            noisy[c] = true;
            stats.push((near_zero, rng.random_range(0.6..1.5)));
        } else if c == speckle {
            stats.push((near_zero, quiet));
        } else {
            let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            stats.push((sign * rng.random_range(1.0..6.0), quiet));
        }
    }
    let members = planted_members(&stats, 8, &mut rng);
    let ids = (0..8).map(|k| format!("member_{k:02}")).collect();
    Ok(PlantedEnsemble { ensemble: GriddedEnsemble::new(grid, members, ids)?, basin, noisy, speckle })
}

/// A field drawn from the GMRF prior and noisy observations of it.
#[derive(Debug, Clone)]
pub struct GmrfDataset {
    pub field: Vec<f64>,
    pub observations: ObservationSet,
}

/// Vertex values drawn from N(0, Q⁻¹) for the prior precision of `params`.
pub fn sample_prior_field(mesh: &TriangleMesh, params: &HyperParams, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    let fem = assemble_mass_stiffness(mesh)?;
    let q = PrecisionBuilder::new(&fem)?.build_for(mesh, params)?;
    let chol = Cholesky::new(&q)?;
    let z: Vec<f64> = (0..mesh.num_vertices()).map(|_| rng.sample(StandardNormal)).collect();
    Ok(chol.sample_with(&z))
}

/// Samples a prior field on `mesh` and observes it at `n_obs` uniformly
/// placed points with Gaussian noise of standard deviation `std_error`.
pub fn simulate_gmrf_dataset(
    mesh: &TriangleMesh,
    params: &HyperParams,
    n_obs: usize,
    std_error: f64,
    seed: u64,
) -> Result<GmrfDataset> {
    if !(std_error > 0.0) {
        return Err(Error::InvalidArgument("std_error must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let field = sample_prior_field(mesh, params, &mut rng)?;
    let locator = MeshLocator::new(mesh);
    let bbox = plane_bbox(mesh);
    let mut locations = Vec::with_capacity(n_obs);
    let mut values = Vec::with_capacity(n_obs);
    while locations.len() < n_obs {
        let p = match mesh.domain {
            DomainKind::Sphere => random_sphere_point(&mut rng),
            DomainKind::Plane => {
                Point3::planar(rng.random_range(bbox[0]..=bbox[2]), rng.random_range(bbox[1]..=bbox[3]))
            }
        };
        let Some(Location { triangle, weights }) = locator.locate(mesh, &p) else { continue };
        let t = mesh.triangles[triangle];
        let x: f64 = (0..3).map(|k| weights[k] * field[t[k]]).sum();
        values.push(x + std_error * rng.sample::<f64, _>(StandardNormal));
        locations.push(p);
    }
    let observations = ObservationSet::new(locations, values, vec![std_error; n_obs])?;
    Ok(GmrfDataset { field, observations })
}

fn plane_bbox(mesh: &TriangleMesh) -> [f64; 4] {
    mesh.vertices.iter().fold([f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY], |b, v| {
        [b[0].min(v.x), b[1].min(v.y), b[2].max(v.x), b[3].max(v.y)]
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::MaternParams;
    use crate::mesh::{fibonacci_lattice, triangulate_plane, triangulate_sphere, PlanarMeshOptions};
    use crate::zeroregion::{ensemble_stats, polygons_from_mask, threshold_mask};

    #[test]
    fn dome_shape() {
        let d = Dome { lon: 0.0, lat: 0.0, amplitude: 10.0, radius: 5.0 };
        let centre = d.value_at(&Point3::from_lon_lat(0.0, 0.0));
        assert!((centre - 10.0 * (1.0 - 0.35 * (-0.5f64 * (2.2f64 / 0.6).powi(2)).exp())).abs() < 1e-12);
        let bulge = d.value_at(&Point3::from_lon_lat(11.0, 0.0));
        assert!((bulge - 10.0 * ((-0.5f64 * 2.2 * 2.2).exp() - 0.35)).abs() < 1e-9);
        // Halfway through the cut-off the smoothstep weight is 1/2.
        let half = d.value_at(&Point3::from_lon_lat(5.0 * 2.925, 0.0));
        let raw = 10.0 * ((-0.5f64 * 2.925 * 2.925).exp() - 0.35 * (-0.5f64 * (0.725f64 / 0.6).powi(2)).exp());
        assert!((half - 0.5 * raw).abs() < 1e-9);
        assert_eq!(d.value_at(&Point3::from_lon_lat(15.01, 0.0)), 0.0);
        assert_eq!(d.value_at(&Point3::from_lon_lat(-25.0, 3.0)), 0.0);
    }

    #[test]
    fn gia_world_has_a_large_quiet_region() {
        let s = gia_scenario(&GiaSpec { observations: 50, ..Default::default() }).unwrap();
        let (mean, sd) = ensemble_stats(&s.ensemble).unwrap();
        let mask = threshold_mask(&mean, &sd, 0.3, 0.4).unwrap();
        let zero = polygons_from_mask(&s.ensemble.grid, &mask, 200.0).unwrap();
        let frac = zero.total_area() / (4.0 * std::f64::consts::PI * crate::EARTH_RADIUS_KM.powi(2));
        assert!(frac > 0.4 && frac < 0.95, "zero-region fraction {frac}");
        let peak = s.truth.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert!(peak > 10.0);
        assert_eq!(s.observations.len(), 50);
        // The truth is near zero wherever the ensemble says so.
        for (c, &k) in zero.kept.iter().enumerate() {
            if k {
                assert!(s.truth.values[c].abs() < 0.1 && s.simulation.values[c].abs() < 0.1, "cell {c} {:?} truth {} sim {} mean {} sd {}", s.ensemble.grid.centers()[c], s.truth.values[c], s.simulation.values[c], mean[c], sd[c]);
            }
        }
    }

    #[test]
    fn gia_world_is_deterministic() {
        let spec = GiaSpec { grid_step: 5.0, observations: 20, ..Default::default() };
        let a = gia_scenario(&spec).unwrap();
        let b = gia_scenario(&spec).unwrap();
        assert_eq!(a.ensemble.members, b.ensemble.members);
        assert_eq!(a.observations.values, b.observations.values);
        let c = gia_scenario(&GiaSpec { seed: 2, ..spec }).unwrap();
        assert_ne!(a.observations.values, c.observations.values);
    }

    #[test]
    fn planted_statistics_are_exact() {
        let p = planted_ensemble(3).unwrap();
        let (mean, sd) = ensemble_stats(&p.ensemble).unwrap();
        for c in 0..mean.len() {
            if p.basin[c] || c == p.speckle {
                assert!(mean[c].abs() < 0.2 + 1e-12 && sd[c] < 0.35 + 1e-12);
            } else if p.noisy[c] {
                assert!(sd[c] > 0.6 - 1e-12);
            } else {
                assert!(mean[c].abs() > 1.0 - 1e-12);
            }
        }
        assert!(p.basin.iter().filter(|&&b| b).count() > 1000);
        let (lon, lat) = p.ensemble.grid.center(100, 179);
        assert_eq!((lon, lat), (-79.5, 89.5));
    }

    #[test]
    fn prior_sample_has_the_prior_variance() {
        let mesh = triangulate_sphere(&fibonacci_lattice(1500).unwrap()).unwrap();
        let params = HyperParams::uniform(&mesh.regions(), MaternParams::new(2.0, 0.4));
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut acc = 0.0;
        let reps = 20;
        for _ in 0..reps {
            let x = sample_prior_field(&mesh, &params, &mut rng).unwrap();
            acc += x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64;
        }
        let var = acc / reps as f64;
        // Mesh-scale variance of the SPDE field is close to σ² = 4.
        assert!(var > 3.0 && var < 5.5, "variance {var}");
    }

    #[test]
    fn planar_dataset_stays_in_the_mesh() {
        let ring = vec![[0.0, 0.0], [3.0, 0.0], [3.0, 2.0], [0.0, 2.0]];
        let mesh = triangulate_plane(&ring, &[], &PlanarMeshOptions::with_max_edge(0.3)).unwrap();
        let params = HyperParams::uniform(&mesh.regions(), MaternParams::new(1.0, 1.0));
        let d = simulate_gmrf_dataset(&mesh, &params, 40, 0.1, 5).unwrap();
        assert_eq!(d.observations.len(), 40);
        assert!(d.observations.locations.iter().all(|p| (0.0..=3.0).contains(&p.x) && (0.0..=2.0).contains(&p.y)));
        assert!(simulate_gmrf_dataset(&mesh, &params, 1, 0.0, 5).is_err());
    }
}
