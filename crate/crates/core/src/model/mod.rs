//! Hierarchical model assembly: observation operator, measurement
//! precision, pseudo-observations, hyperprior and model variants.

mod obs;
mod prior;
mod pseudo;

use std::f64::consts::PI;
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::{assemble_mass_stiffness, vertex_coefficients, HyperParams, PrecisionBuilder};
use crate::geometry::{Point3, Polygon, RegionId};
use crate::grid::GridField;
use crate::mesh::{MeshLocator, RegionPartition, TriangleMesh};
use crate::sparse::{SparseRowMatrix, SparseSymMatrix, Symbolic};

pub use obs::{build_a, simulation_at, subtract_simulation, ObservationSet};
pub(crate) use obs::barycentric_row;
pub use prior::{affine_map, build_prior, HyperPrior, LogNormalSpec, ParamLayout, PriorSpec, RegionPrior, Source};
pub use pseudo::{place_pseudo_observations, PseudoMode, PseudoSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Variant {
    /// One stationary field over the whole mesh.
    Stationary,
    /// Stationary field on the triangles of `keep` only.
    Subset { keep: Vec<RegionId> },
    /// Independent fields per region, each with its own (σ, ρ).
    ProcessPartition,
    /// One field with regionwise-constant (σ, ρ).
    ParameterPartition,
    /// Parameter partition with a fixed long range in the zero-region, a
    /// shared σ and pseudo-observations inside the zero-region.
    Constrained { zero_region: RegionId },
}

impl Variant {
    pub fn name(&self) -> &'static str {
        match self {
            Variant::Stationary => "stationary",
            Variant::Subset { .. } => "subset",
            Variant::ProcessPartition => "process_partition",
            Variant::ParameterPartition => "parameter_partition",
            Variant::Constrained { .. } => "constrained",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelOptions {
    pub pseudo: Option<PseudoSpec>,
    /// Fixed range inside the zero-region (radians on the unit sphere).
    pub zero_rho: f64,
    /// Drop observations outside the model domain instead of failing.
    pub drop_outside: bool,
}

impl Default for ModelOptions {
    fn default() -> Self {
        Self { pseudo: None, zero_rho: PI, drop_outside: false }
    }
}

#[derive(Debug)]
struct PosteriorPattern {
    pattern: SparseSymMatrix,
    prior_slot: Vec<usize>,
    data_values: Vec<f64>,
    symbolic: OnceLock<Arc<Symbolic>>,
}

/// Fully assembled hierarchical model.
#[derive(Debug)]
pub struct HierModel {
    pub variant: Variant,
    pub mesh: TriangleMesh,
    /// Vertex of the input mesh behind each model vertex.
    pub base_vertex: Vec<usize>,
    pub locator: MeshLocator,
    /// Observations used (raw values, pseudo-observations appended).
    pub observations: ObservationSet,
    pub m_at_obs: Vec<f64>,
    pub y_tilde: Vec<f64>,
    pub a: SparseRowMatrix,
    pub q_y: Vec<f64>,
    pub layout: ParamLayout,
    pub prior: PriorSpec,
    pub precision: PrecisionBuilder,
    /// Input observations that were not used (outside the domain or with
    /// zero precision).
    pub dropped: Vec<usize>,
    post: PosteriorPattern,
}

impl HierModel {
    pub fn num_vertices(&self) -> usize {
        self.mesh.num_vertices()
    }

    pub fn num_observations(&self) -> usize {
        self.y_tilde.len()
    }

    /// Q_W for per-region parameters.
    pub fn prior_precision(&self, params: &HyperParams) -> Result<SparseSymMatrix> {
        let (k2, tau) = vertex_coefficients(&self.mesh, params)?;
        Ok(self.precision.build(&k2, &tau))
    }

    /// Q_W + Aᵀ Q_Y A on the cached posterior pattern.
    pub fn posterior_precision(&self, q_w: &SparseSymMatrix) -> SparseSymMatrix {
        let mut v = self.post.data_values.clone();
        for (s, &x) in q_w.values().iter().enumerate() {
            v[self.post.prior_slot[s]] += x;
        }
        self.post.pattern.with_values(v)
    }

    pub fn prior_symbolic(&self) -> Arc<Symbolic> {
        self.precision.symbolic()
    }

    pub fn posterior_symbolic(&self) -> Arc<Symbolic> {
        Arc::clone(self.post.symbolic.get_or_init(|| Arc::new(Symbolic::analyze(&self.post.pattern))))
    }

    /// Barycentric row of a point, or `None` outside the model mesh.
    pub fn point_row(&self, p: &Point3) -> Option<Vec<(usize, f64)>> {
        self.locator.locate(&self.mesh, p).map(|l| barycentric_row(&self.mesh, l.triangle, l.weights))
    }
}

/// Assembles the model for `variant`. `mesh` must carry region labels
/// matching `partition`; `simulation` is the gridded m (None means m ≡ 0).
pub fn build_model(
    variant: Variant,
    mesh: &TriangleMesh,
    partition: &RegionPartition,
    observations: &ObservationSet,
    simulation: Option<&GridField>,
    prior: &PriorSpec,
    options: &ModelOptions,
) -> Result<HierModel> {
    observations.validate()?;
    let regions = mesh.regions();
    let mut prior = prior.clone();
    let (model_mesh, base_vertex) = match &variant {
        Variant::Subset { keep } => {
            let missing: Vec<RegionId> = keep.iter().copied().filter(|r| !regions.contains(r)).collect();
            if !missing.is_empty() {
                return Err(Error::Config(format!("subset regions {missing:?} are not in the mesh")));
            }
            mesh.restrict_to_regions(keep)?
        }
        Variant::ProcessPartition => mesh.split_by_region(),
        _ => (mesh.clone(), (0..mesh.num_vertices()).collect()),
    };
    let model_regions = model_mesh.regions();

    let layout = match &variant {
        Variant::Stationary | Variant::Subset { .. } => {
            ParamLayout::grouped(&prior, &[model_regions.clone()], &[model_regions.clone()])?
        }
        Variant::ParameterPartition | Variant::ProcessPartition => {
            let each: Vec<Vec<RegionId>> = model_regions.iter().map(|&r| vec![r]).collect();
            ParamLayout::grouped(&prior, &each, &each)?
        }
        Variant::Constrained { zero_region } => {
            if !model_regions.contains(zero_region) {
                return Err(Error::Config(format!("zero-region {zero_region} is not in the mesh")));
            }
            if !(options.zero_rho > 0.0) {
                return Err(Error::Config("zero-region range must be positive".into()));
            }
            prior.fixed_rho.insert(*zero_region, options.zero_rho);
            let rest: Vec<RegionId> = model_regions.iter().copied().filter(|r| r != zero_region).collect();
            let mut rho_groups = vec![vec![*zero_region]];
            if !rest.is_empty() {
                rho_groups.push(rest);
            }
            ParamLayout::grouped(&prior, &[model_regions.clone()], &rho_groups)?
        }
    };

    let locator = MeshLocator::new(&model_mesh);

    // Pseudo-observations.
    let mut all = observations.clone();
    let n_input = observations.len();
    if let Some(spec) = &options.pseudo {
        let polys: Vec<&Polygon> = match &variant {
            Variant::Constrained { zero_region } => vec![partition
                .polygon(*zero_region)
                .ok_or_else(|| Error::Config(format!("no polygon for zero-region {zero_region}")))?],
            Variant::Subset { keep } => {
                partition.regions.iter().filter(|(r, _)| !keep.contains(r)).map(|(_, p)| p).collect()
            }
            _ => return Err(Error::Config(format!("pseudo-observations are not used by the {} variant", variant.name()))),
        };
        if polys.is_empty() {
            return Err(Error::Config("no region polygon to place pseudo-observations in".into()));
        }
        let mut pseudo = place_pseudo_observations(&polys, mesh.domain, spec)?;
        // Points that miss the (distorted) model mesh go to the nearest vertex.
        for p in &mut pseudo.locations {
            if locator.locate(&model_mesh, p).is_none() {
                let j = (0..model_mesh.num_vertices())
                    .min_by(|&a, &b| model_mesh.vertices[a].distance(p).total_cmp(&model_mesh.vertices[b].distance(p)))
                    .ok_or_else(|| Error::InvalidState("empty model mesh".into()))?;
                *p = model_mesh.vertices[j];
            }
        }
        all.extend(&pseudo);
    }

    // Keep observations with positive precision that fall in the mesh.
    let mut keep = Vec::with_capacity(all.len());
    let mut outside = Vec::new();
    let mut dropped = Vec::new();
    for i in 0..all.len() {
        if all.std_errors[i].is_infinite() {
            if i < n_input {
                dropped.push(i);
            }
            continue;
        }
        if locator.locate(&model_mesh, &all.locations[i]).is_none() {
            outside.push(i);
            continue;
        }
        keep.push(i);
    }
    if !outside.is_empty() {
        if options.drop_outside {
            dropped.extend(outside.iter().copied().filter(|&i| i < n_input));
        } else {
            return Err(Error::OutOfDomain { what: format!("observations outside the {} model domain", variant.name()), indices: outside });
        }
    }
    dropped.sort_unstable();
    let used = all.select(&keep);
    let a = build_a(&model_mesh, &locator, &used.locations)?;
    let m_at_obs = match simulation {
        Some(m) => simulation_at(&model_mesh, m, &used.locations)?,
        None => vec![0.0; used.len()],
    };
    let y_tilde: Vec<f64> = used.values.iter().zip(&m_at_obs).map(|(y, m)| y - m).collect();
    let q_y: Vec<f64> = used.std_errors.iter().map(|s| 1.0 / (s * s)).collect();

    let fem = assemble_mass_stiffness(&model_mesh)?;
    let precision = PrecisionBuilder::new(&fem)?;
    let post = posterior_pattern(&precision, &a, &q_y)?;

    Ok(HierModel {
        variant,
        mesh: model_mesh,
        base_vertex,
        locator,
        observations: used,
        m_at_obs,
        y_tilde,
        a,
        q_y,
        layout,
        prior,
        precision,
        dropped,
        post,
    })
}

fn posterior_pattern(precision: &PrecisionBuilder, a: &SparseRowMatrix, q_y: &[f64]) -> Result<PosteriorPattern> {
    let q0 = precision.build_stationary(1.0, 1.0);
    let ata = a.weighted_gram(q_y);
    let zero = q0.with_values(vec![0.0; q0.nnz()]);
    let pattern = zero.add(&ata)?;
    let prior_slot = q0.iter_upper().map(|(r, c, _)| pattern.slot(r, c).expect("union pattern")).collect();
    Ok(PosteriorPattern { data_values: pattern.values().to_vec(), pattern, prior_slot, symbolic: OnceLock::new() })
}
