//! The pipeline commands: mesh, zeroregion, fit, predict and synthesize.

use std::f64::consts::PI;
use std::path::PathBuf;

use geofuse_core::grid::{GridField, RegularGrid};
use geofuse_core::inference::{functional_row, integrate_hyperparameters, summarize, Functional, HyperPosterior};
use geofuse_core::mesh::io::{read_regions_geojson, regions_to_geojson, write_mesh};
use geofuse_core::mesh::{
    assign_regions, fibonacci_lattice, lattice_in_region, merge_and_retriangulate, triangulate_plane_conforming,
    triangulate_sphere, MeshQuality, PlanarMeshOptions, VertexSet,
};
use geofuse_core::model::{build_model, HierModel, ModelOptions, ObservationSet, PriorSpec, PseudoMode, PseudoSpec, RegionPrior, Variant};
use geofuse_core::synthetic::gia_scenario;
use geofuse_core::zeroregion::{ensemble_stats, polygons_from_mask, threshold_mask, ZeroRegionMask};
use geofuse_core::{DomainKind, Polygon, RegionId, RegionPartition, TriangleMesh, EARTH_RADIUS_KM};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{PipelineConfig, PseudoModeName, VariantName};
use crate::error::{CliError, CliResult};
use crate::io::{
    coord_names, point_of, read_ensemble, read_grid, read_json, read_observations, write_bytes, write_grid, write_json,
    write_observations, write_table, write_text_table, Provenance,
};

/// Partition, mesh and zero-region derived from a configuration.
#[derive(Debug, Clone)]
pub struct World {
    pub partition: RegionPartition,
    pub mesh: TriangleMesh,
    /// Thresholded ensemble when the zero-region comes from one.
    pub zero_mask: Option<ZeroRegionMask>,
}

fn unit_scale(domain: DomainKind) -> f64 {
    match domain {
        DomainKind::Sphere => EARTH_RADIUS_KM,
        DomainKind::Plane => 1.0,
    }
}

/// Zero-region polygons from a GeoJSON file or by thresholding an ensemble.
pub fn zero_region(cfg: &PipelineConfig) -> CliResult<Option<(Polygon, Option<ZeroRegionMask>)>> {
    let Some(z) = &cfg.zero_region else { return Ok(None) };
    if let Some(file) = &z.file {
        let path = cfg.resolve(file);
        let text = std::fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
        let part = read_regions_geojson(&text, RegionId(cfg.regions.default_region))?;
        let rings = part.regions.into_iter().flat_map(|(_, p)| p.rings).collect();
        return Ok(Some((Polygon::new(rings), None)));
    }
    let dir = cfg.resolve(z.ensemble_dir.as_ref().expect("validated"));
    let ens = read_ensemble(&dir, cfg.domain)?;
    let (mean, sd) = ensemble_stats(&ens)?;
    let mask = threshold_mask(&mean, &sd, z.mean_thresh, z.sd_thresh)?;
    let zr = polygons_from_mask(&ens.grid, &mask, z.min_area_km2)?;
    Ok(Some((zr.union(), Some(zr))))
}

pub fn build_partition(cfg: &PipelineConfig) -> CliResult<(RegionPartition, Option<ZeroRegionMask>)> {
    let default = RegionId(cfg.regions.default_region);
    let mut partition = match &cfg.regions.file {
        Some(file) => {
            let path = cfg.resolve(file);
            let text = std::fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
            read_regions_geojson(&text, default)?
        }
        None => RegionPartition::single(default),
    };
    let mut mask = None;
    if let Some((poly, m)) = zero_region(cfg)? {
        let id = RegionId(cfg.zero_region.as_ref().expect("zero-region").region);
        if poly.is_empty() {
            return Err(CliError::Data("the zero-region is empty".into()));
        }
        if partition.regions.iter().any(|(r, _)| *r == id) {
            return Err(CliError::Config(format!("zero-region id {id} is also used by regions.file")));
        }
        partition.regions.insert(0, (id, poly));
        mask = m;
    }
    partition.validate()?;
    Ok((partition, mask))
}

pub fn build_mesh(cfg: &PipelineConfig, partition: &RegionPartition) -> CliResult<TriangleMesh> {
    let m = &cfg.mesh;
    let polygon_of = |r: u32| {
        partition.polygon(RegionId(r)).ok_or_else(|| CliError::Config(format!("mesh.regions: region {r} has no polygon")))
    };
    let mesh = match cfg.domain {
        DomainKind::Sphere => {
            if m.regions.is_empty() {
                triangulate_sphere(&fibonacci_lattice(m.fibonacci_n)?)?
            } else {
                let mut own = Vec::new();
                let mut sets = Vec::new();
                for r in &m.regions {
                    let poly = polygon_of(r.region)?;
                    if r.fibonacci_n.is_some() {
                        own.push(poly);
                    }
                    let n = r.fibonacci_n.unwrap_or(m.fibonacci_n);
                    let spacing = r.boundary_spacing_deg.map(f64::to_radians);
                    // Without an own lattice size the points repeat the background
                    // lattice and are merged away, leaving the boundary samples.
                    let points = lattice_in_region(Some(poly), n, &[], spacing)?;
                    sets.push(VertexSet { region: RegionId(r.region), points });
                }
                let background = RegionId(cfg.regions.default_region);
                sets.insert(0, VertexSet { region: background, points: lattice_in_region(None, m.fibonacci_n, &own, None)? });
                merge_and_retriangulate(&sets)?
            }
        }
        DomainKind::Plane => {
            let boundary = m.boundary.clone().expect("validated");
            let max_edge = m.max_edge.expect("validated");
            let mut constraints = Vec::new();
            for (id, poly) in &partition.regions {
                let size = m.regions.iter().find(|r| RegionId(r.region) == *id).and_then(|r| r.max_edge).unwrap_or(max_edge);
                for ring in &poly.rings {
                    constraints.push((ring.clone(), size));
                }
            }
            let opts = PlanarMeshOptions { min_angle_deg: m.min_angle_deg, ..PlanarMeshOptions::with_max_edge(max_edge) };
            triangulate_plane_conforming(&boundary, &[], &constraints, &opts)?
        }
    };
    Ok(assign_regions(&mesh, partition))
}

pub fn build_world(cfg: &PipelineConfig) -> CliResult<World> {
    let (partition, zero_mask) = build_partition(cfg)?;
    let mesh = build_mesh(cfg, &partition)?;
    Ok(World { partition, mesh, zero_mask })
}

fn variant(cfg: &PipelineConfig, world: &World) -> Variant {
    let zero = cfg.zero_region.as_ref().map(|z| RegionId(z.region));
    match cfg.variant {
        VariantName::Stationary => Variant::Stationary,
        VariantName::ParameterPartition => Variant::ParameterPartition,
        VariantName::ProcessPartition => Variant::ProcessPartition,
        VariantName::Constrained => Variant::Constrained { zero_region: zero.expect("validated") },
        VariantName::Subset => Variant::Subset {
            keep: match &cfg.regions.keep {
                Some(k) => k.iter().map(|&r| RegionId(r)).collect(),
                None => world.mesh.regions().into_iter().filter(|r| Some(*r) != zero).collect(),
            },
        },
    }
}

fn model_options(cfg: &PipelineConfig, world: &World) -> ModelOptions {
    let scale = unit_scale(cfg.domain);
    let p = &cfg.pseudo;
    let uses_pseudo = match cfg.variant {
        VariantName::Constrained => true,
        VariantName::Subset => cfg.zero_region.is_some(),
        _ => false,
    };
    let mode = match (p.mode, cfg.variant) {
        (PseudoModeName::Interior, _) => PseudoMode::Interior,
        (PseudoModeName::Boundary, _) => PseudoMode::Boundary,
        (PseudoModeName::Auto, VariantName::Subset) => PseudoMode::Boundary,
        (PseudoModeName::Auto, _) => PseudoMode::Interior,
    };
    let pseudo = (uses_pseudo && p.count > 0).then_some(PseudoSpec { count: p.count, value: p.value, std_error: p.std_error, mode });
    let zero_rho = match (cfg.prior.zero_rho, cfg.domain) {
        (Some(z), _) => z / scale,
        (None, DomainKind::Sphere) => PI,
        (None, DomainKind::Plane) => plane_diameter(&world.mesh),
    };
    ModelOptions { pseudo, zero_rho, drop_outside: cfg.variant == VariantName::Subset }
}

fn plane_diameter(mesh: &TriangleMesh) -> f64 {
    let [x0, y0, x1, y1] = bbox(mesh);
    (x1 - x0).hypot(y1 - y0)
}

fn bbox(mesh: &TriangleMesh) -> [f64; 4] {
    mesh.vertices.iter().fold([f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY], |b, v| {
        [b[0].min(v.x), b[1].min(v.y), b[2].max(v.x), b[3].max(v.y)]
    })
}

/// Observations and simulation named by the configuration.
pub struct Inputs {
    pub observations: ObservationSet,
    pub simulation: Option<GridField>,
}

pub fn load_inputs(cfg: &PipelineConfig) -> CliResult<Inputs> {
    let path = cfg
        .data
        .observations
        .as_ref()
        .ok_or_else(|| CliError::Config("data.observations is required".into()))?;
    let observations = read_observations(&cfg.resolve(path), cfg.domain)?;
    let simulation = cfg.data.simulation.as_ref().map(|p| read_grid(&cfg.resolve(p), cfg.domain)).transpose()?;
    Ok(Inputs { observations, simulation })
}

pub fn prior_spec(cfg: &PipelineConfig) -> PriorSpec {
    let p = &cfg.prior;
    PriorSpec::new(RegionPrior::new(p.sigma_mean, p.rho_mean / unit_scale(cfg.domain), p.cv))
}

pub fn build_hier_model(cfg: &PipelineConfig, world: &World, inputs: &Inputs) -> CliResult<HierModel> {
    Ok(build_model(
        variant(cfg, world),
        &world.mesh,
        &world.partition,
        &inputs.observations,
        inputs.simulation.as_ref(),
        &prior_spec(cfg),
        &model_options(cfg, world),
    )?)
}

/// `mesh`: writes the mesh, its sidecar and a quality report.
pub fn cmd_mesh(cfg: &PipelineConfig) -> CliResult<MeshQuality> {
    let hash = cfg.fit_hash()?;
    let world = build_world(cfg)?;
    let mut buf = format!("# config_hash={hash}\n").into_bytes();
    write_mesh(&world.mesh, &mut buf)?;
    let path = cfg.output("mesh.txt");
    write_bytes(&path, &buf)?;
    let quality = world.mesh.quality();
    write_json(&crate::io::meta_path(&path), &serde_json::json!({ "config_hash": hash, "quality": quality }))?;
    write_json(&cfg.output("mesh_quality.json"), &quality)?;
    Ok(quality)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZeroRegionSummary {
    pub components: usize,
    pub cells: usize,
    pub total_area: f64,
}

/// `zeroregion`: thresholds the ensemble and writes polygons and the mask.
pub fn cmd_zeroregion(cfg: &PipelineConfig) -> CliResult<ZeroRegionSummary> {
    let z = cfg.zero_region.as_ref().ok_or_else(|| CliError::Config("a [zero_region] table is required".into()))?;
    if z.ensemble_dir.is_none() {
        return Err(CliError::Config("zeroregion needs zero_region.ensemble_dir".into()));
    }
    let hash = cfg.fit_hash()?;
    let (_, mask) = zero_region(cfg)?.expect("configured");
    let mask = mask.expect("ensemble source");
    let id = RegionId(z.region);
    let features: Vec<(RegionId, Polygon)> = mask.polygons.iter().map(|p| (id, p.polygon.clone())).collect();
    write_bytes(&cfg.output("zero_region.geojson"), regions_to_geojson(&features).as_bytes())?;
    let c = coord_names(mask.grid.domain);
    let rows: Vec<Vec<f64>> = mask
        .grid
        .centers()
        .iter()
        .zip(&mask.kept)
        .map(|(&(x, y), &k)| vec![x, y, if k { 1.0 } else { 0.0 }])
        .collect();
    let prov = Provenance::new(&hash).with("content", "zero-region mask");
    write_table(&cfg.output("zero_mask.csv"), &prov, &[c[0], c[1], "value"], &rows)?;
    let summary = ZeroRegionSummary {
        components: mask.polygons.len(),
        cells: mask.kept.iter().filter(|&&k| k).count(),
        total_area: mask.total_area(),
    };
    write_json(&cfg.output("zero_region.json"), &serde_json::json!({ "config_hash": hash, "summary": summary }))?;
    Ok(summary)
}

/// Contents of `fit.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitArtifact {
    pub config_hash: String,
    pub variant: String,
    pub num_vertices: usize,
    pub num_observations: usize,
    pub num_pseudo: usize,
    /// Input observations that were not used.
    pub dropped: Vec<usize>,
    pub theta_mean: Vec<f64>,
    pub theta_sd: Vec<f64>,
    pub hyper: HyperPosterior,
}

/// `fit`: integrates the hyperparameters and writes the node table and
/// per-parameter marginals.
pub fn cmd_fit(cfg: &PipelineConfig) -> CliResult<FitArtifact> {
    let hash = cfg.fit_hash()?;
    let world = build_world(cfg)?;
    let inputs = load_inputs(cfg)?;
    let model = build_hier_model(cfg, &world, &inputs)?;
    let hyper = integrate_hyperparameters(&model, &cfg.theta_grid.grid_spec())?;
    let (theta_mean, theta_sd) = hyper.theta_mean_sd();
    let fit = FitArtifact {
        config_hash: hash.clone(),
        variant: model.variant.name().to_string(),
        num_vertices: model.num_vertices(),
        num_observations: model.num_observations(),
        num_pseudo: model.observations.is_pseudo.iter().filter(|&&p| p).count(),
        dropped: model.dropped.clone(),
        theta_mean,
        theta_sd,
        hyper,
    };
    write_json(&cfg.output("fit.json"), &fit)?;
    let prov = Provenance::new(&hash).with("variant", &fit.variant);
    write_node_table(cfg, &prov, &fit.hyper)?;
    for (d, name) in fit.hyper.names.iter().enumerate() {
        let rows = marginal_density(&fit.hyper, d).into_iter().map(|(v, p)| vec![v, p]).collect::<Vec<_>>();
        write_table(&cfg.output(&format!("marginal_{name}.csv")), &prov.clone().with("parameter", name), &["value", "density"], &rows)?;
    }
    Ok(fit)
}

fn write_node_table(cfg: &PipelineConfig, prov: &Provenance, hyper: &HyperPosterior) -> CliResult<()> {
    let mut header: Vec<&str> = hyper.names.iter().map(String::as_str).collect();
    header.extend(["log_marginal", "log_prior", "weight"]);
    let rows: Vec<Vec<f64>> = hyper
        .nodes
        .iter()
        .map(|n| n.theta.iter().copied().chain([n.log_marginal, n.log_prior, n.weight]).collect())
        .collect();
    write_table(&cfg.output("theta_nodes.csv"), prov, &header, &rows)
}

/// Marginal weights of dimension `d` divided by the axis spacing, i.e. a
/// density in log units.
pub fn marginal_density(hyper: &HyperPosterior, d: usize) -> Vec<(f64, f64)> {
    let m = hyper.marginal(d);
    let axis = &hyper.axes[d];
    let h = if axis.len() > 1 { (axis[axis.len() - 1] - axis[0]) / (axis.len() - 1) as f64 } else { 1.0 };
    m.into_iter().map(|(v, w)| (v, w / h)).collect()
}

/// A named functional in `predict.functionals` (coordinates in lon/lat or x/y).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FunctionalSpec {
    Point { at: [f64; 2] },
    Areal { polygon: Vec<Vec<[f64; 2]>>, lattice: usize },
    Difference { a: Box<FunctionalSpec>, b: Box<FunctionalSpec> },
}

impl FunctionalSpec {
    pub fn to_functional(&self, domain: DomainKind) -> Functional {
        match self {
            FunctionalSpec::Point { at } => Functional::Point { at: point_of(domain, at[0], at[1]) },
            FunctionalSpec::Areal { polygon, lattice } => Functional::Areal { polygon: Polygon::new(polygon.clone()), lattice: *lattice },
            FunctionalSpec::Difference { a, b } => {
                Functional::Difference { a: Box::new(a.to_functional(domain)), b: Box::new(b.to_functional(domain)) }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NamedFunctional {
    pub name: String,
    #[serde(flatten)]
    pub spec: FunctionalSpec,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub grid: RegularGrid,
    pub discrepancy_mean: Vec<f64>,
    pub sd: Vec<f64>,
    pub field_mean: Vec<f64>,
    pub functionals: Vec<(String, f64, f64)>,
}

pub fn prediction_grid(cfg: &PipelineConfig, mesh: &TriangleMesh) -> CliResult<RegularGrid> {
    let step = cfg.predict.grid_step;
    match cfg.domain {
        DomainKind::Sphere => Ok(RegularGrid::global(step)?),
        DomainKind::Plane => {
            let [x0, y0, x1, y1] = bbox(mesh);
            let n = |lo: f64, hi: f64| (((hi - lo) / step).round() as usize).max(1);
            let (nx, ny) = (n(x0, x1), n(y0, y1));
            let (dx, dy) = ((x1 - x0) / nx as f64, (y1 - y0) / ny as f64);
            Ok(RegularGrid { domain: DomainKind::Plane, x0: x0 + 0.5 * dx, dx, nx, y0: y0 + 0.5 * dy, dy, ny })
        }
    }
}

/// `predict`: posterior mean and sd of the discrepancy on the output grid,
/// the reconstructed field m + mean, and any configured functionals.
pub fn cmd_predict(cfg: &PipelineConfig) -> CliResult<Prediction> {
    let hash = cfg.fit_hash()?;
    let fit_path = cfg.output("fit.json");
    if !fit_path.exists() {
        return Err(CliError::Stale(format!("{} is missing; run `fit` first", fit_path.display())));
    }
    let fit: FitArtifact = read_json(&fit_path)?;
    if fit.config_hash != hash {
        return Err(CliError::Stale(format!(
            "{} was fitted with config {} but the current config is {}",
            fit_path.display(),
            fit.config_hash,
            hash
        )));
    }
    let world = build_world(cfg)?;
    let inputs = load_inputs(cfg)?;
    let model = build_hier_model(cfg, &world, &inputs)?;
    let grid = prediction_grid(cfg, &model.mesh)?;
    let centers = grid.centers();
    let rows: Vec<Option<Vec<(usize, f64)>>> = centers.iter().map(|&(u, v)| model.point_row(&point_of(cfg.domain, u, v))).collect();
    let post = summarize(&model, &fit.hyper, &rows, false)?;
    let field_mean: Vec<f64> = match &inputs.simulation {
        None => post.mean.clone(),
        Some(m) => centers
            .iter()
            .zip(&post.mean)
            .map(|(&(u, v), x)| m.interpolate(u, v).map_or(f64::NAN, |mv| mv + x))
            .collect(),
    };
    let prov = Provenance::new(&hash).with("variant", &fit.variant);
    let c = coord_names(cfg.domain);
    let table = |mean: &[f64]| -> Vec<Vec<f64>> {
        centers.iter().enumerate().map(|(k, &(u, v))| vec![u, v, mean[k], post.sd[k]]).collect()
    };
    let header = [c[0], c[1], "mean", "sd"];
    write_table(&cfg.output("discrepancy.csv"), &prov.clone().with("content", "discrepancy"), &header, &table(&post.mean))?;
    write_table(&cfg.output("field.csv"), &prov.clone().with("content", "field"), &header, &table(&field_mean))?;

    let mut functionals = Vec::new();
    if let Some(path) = &cfg.predict.functionals {
        let specs: Vec<NamedFunctional> = read_json(&cfg.resolve(path))?;
        let rows = specs
            .iter()
            .map(|f| functional_row(&model, &f.spec.to_functional(cfg.domain)).map(Some))
            .collect::<geofuse_core::Result<Vec<_>>>()?;
        let fp = summarize(&model, &fit.hyper, &rows, false)?;
        functionals = specs.iter().enumerate().map(|(k, f)| (f.name.clone(), fp.mean[k], fp.sd[k])).collect();
        let text: Vec<Vec<String>> = functionals
            .iter()
            .map(|(n, m, s)| vec![n.clone(), crate::io::fmt_f64(*m), crate::io::fmt_f64(*s)])
            .collect();
        write_text_table(&cfg.output("functionals.csv"), &prov.with("content", "discrepancy functionals"), &["name", "mean", "sd"], &text)?;
    }
    Ok(Prediction { grid, discrepancy_mean: post.mean, sd: post.sd, field_mean, functionals })
}

/// Where `synthesize` writes its files.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticFiles {
    pub truth: PathBuf,
    pub simulation: PathBuf,
    pub observations: PathBuf,
    pub ensemble_dir: PathBuf,
}

/// `synthesize`: writes a synthetic truth, simulation, ensemble and
/// observations under `<output_dir>/synthetic`. The top-level seed is used.
pub fn cmd_synthesize(cfg: &PipelineConfig) -> CliResult<SyntheticFiles> {
    if cfg.domain != DomainKind::Sphere {
        return Err(CliError::Config("synthesize supports the sphere only".into()));
    }
    let mut spec = cfg.synthesize.clone();
    spec.seed = cfg.seed;
    let json = serde_json::to_vec(&spec).map_err(|e| CliError::Config(e.to_string()))?;
    let hash = hex::encode(Sha256::digest(&json));
    let s = gia_scenario(&spec)?;
    let dir = cfg.output("synthetic");
    let files = SyntheticFiles {
        truth: dir.join("truth.csv"),
        simulation: dir.join("simulation.csv"),
        observations: dir.join("observations.csv"),
        ensemble_dir: dir.join("ensemble"),
    };
    let prov = |what: &str| Provenance::new(&hash).with("content", what);
    write_grid(&files.truth, &prov("truth"), &s.truth)?;
    write_grid(&files.simulation, &prov("simulation"), &s.simulation)?;
    write_observations(&files.observations, &prov("observations"), &s.observations, DomainKind::Sphere)?;
    for (k, member) in s.ensemble.members.iter().enumerate() {
        let field = GridField::new(s.ensemble.grid, member.clone())?;
        write_grid(&files.ensemble_dir.join(format!("member_{k:02}.csv")), &prov("ensemble member"), &field)?;
    }
    Ok(files)
}
