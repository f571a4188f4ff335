//! Planar correlation experiments: a square domain with a removed or
//! re-parametrised central block, and convergence of the GMRF correlation
//! to the Matérn correlation.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::fem::{HyperParams, MaternParams};
use crate::geometry::{Point3, Polygon, RegionId};
use crate::inference::correlation;
use crate::matern::matern_correlation;
use crate::mesh::{assign_regions, triangulate_plane_conforming, PlanarMeshOptions, RegionPartition, TriangleMesh};
use crate::model::{build_model, HierModel, ModelOptions, ObservationSet, PriorSpec, RegionPrior, Variant};

const BLOCK: RegionId = RegionId(0);
const OUTER: RegionId = RegionId(1);

fn rect_ring(r: [f64; 4]) -> Vec<[f64; 2]> {
    vec![[r[0], r[1]], [r[2], r[1]], [r[2], r[3]], [r[0], r[3]]]
}

fn pt(p: [f64; 2]) -> Point3 {
    Point3::planar(p[0], p[1])
}

/// Square mesh conforming to a central block, labelled block / outer.
pub fn block_mesh(side: f64, block: [f64; 4], max_edge: f64, block_max_edge: f64) -> Result<(TriangleMesh, RegionPartition)> {
    let mesh = triangulate_plane_conforming(
        &rect_ring([0.0, 0.0, side, side]),
        &[],
        &[(rect_ring(block), block_max_edge)],
        &PlanarMeshOptions::with_max_edge(max_edge),
    )?;
    let partition = RegionPartition { regions: vec![(BLOCK, Polygon::new(vec![rect_ring(block)]))], default_region: OUTER };
    Ok((assign_regions(&mesh, &partition), partition))
}

fn prior_only(variant: Variant, mesh: &TriangleMesh, part: &RegionPartition) -> Result<HierModel> {
    let prior = PriorSpec::new(RegionPrior::new(1.0, 1.0, 1.0));
    build_model(variant, mesh, part, &ObservationSet::default(), None, &prior, &ModelOptions::default())
}

/// Layout of the removed-block experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubsetGeometry {
    pub side: f64,
    pub max_edge: f64,
    pub rho: f64,
    /// Removed block (x0, y0, x1, y1).
    pub block: [f64; 4],
    pub a: [f64; 2],
    pub b: [f64; 2],
    pub c: [f64; 2],
}

impl Default for SubsetGeometry {
    fn default() -> Self {
        Self { side: 5.0, max_edge: 0.5, rho: 1.0, block: [2.4, 0.5, 2.6, 4.5], a: [2.1, 2.5], b: [2.9, 2.5], c: [2.1, 1.7] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubsetCorrelations {
    pub stationary_ab: f64,
    pub stationary_ac: f64,
    pub subset_ab: f64,
    pub subset_ac: f64,
}

pub fn subset_correlations(g: &SubsetGeometry) -> Result<SubsetCorrelations> {
    let (mesh, part) = block_mesh(g.side, g.block, g.max_edge, g.max_edge)?;
    let stationary = prior_only(Variant::Stationary, &mesh, &part)?;
    let subset = prior_only(Variant::Subset { keep: vec![OUTER] }, &mesh, &part)?;
    let p = |m: &HierModel| HyperParams::uniform(&m.mesh.regions(), MaternParams::new(1.0, g.rho));
    let (a, b, c) = (pt(g.a), pt(g.b), pt(g.c));
    Ok(SubsetCorrelations {
        stationary_ab: correlation(&stationary, &p(&stationary), &a, &b)?,
        stationary_ac: correlation(&stationary, &p(&stationary), &a, &c)?,
        subset_ab: correlation(&subset, &p(&subset), &a, &b)?,
        subset_ac: correlation(&subset, &p(&subset), &a, &c)?,
    })
}

/// Layout of the re-parametrised-block experiment; A, B, C, D are the
/// corners of a square in order, with A and D inside the block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PartitionGeometry {
    pub side: f64,
    pub max_edge: f64,
    /// Maximum edge length inside the block.
    pub block_max_edge: f64,
    pub rho_block: f64,
    pub rho_outer: f64,
    pub block: [f64; 4],
    pub a: [f64; 2],
    pub b: [f64; 2],
    pub c: [f64; 2],
    pub d: [f64; 2],
}

impl Default for PartitionGeometry {
    fn default() -> Self {
        Self {
            side: 5.0,
            max_edge: 0.5,
            block_max_edge: 1.0,
            rho_block: 1.5,
            rho_outer: 1.0,
            block: [1.05, 1.05, 3.95, 3.95],
            a: [1.97, 2.56],
            b: [0.763, 2.38],
            c: [0.583, 3.586],
            d: [1.79, 3.767],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PartitionCorrelations {
    pub ab: f64,
    pub ad: f64,
    pub bc: f64,
    pub cd: f64,
}

pub fn partition_correlations(g: &PartitionGeometry) -> Result<PartitionCorrelations> {
    let (mesh, part) = block_mesh(g.side, g.block, g.max_edge, g.block_max_edge)?;
    let model = prior_only(Variant::ParameterPartition, &mesh, &part)?;
    let mut params = HyperParams::single(BLOCK, 1.0, g.rho_block);
    params.regions.insert(OUTER, MaternParams::new(1.0, g.rho_outer));
    let (a, b, c, d) = (pt(g.a), pt(g.b), pt(g.c), pt(g.d));
    Ok(PartitionCorrelations {
        ab: correlation(&model, &params, &a, &b)?,
        ad: correlation(&model, &params, &a, &d)?,
        bc: correlation(&model, &params, &b, &c)?,
        cd: correlation(&model, &params, &c, &d)?,
    })
}

/// GMRF-implied against analytic Matérn correlation along a line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub max_edge: f64,
    pub num_vertices: usize,
    pub distances: Vec<f64>,
    pub gmrf: Vec<f64>,
    pub analytic: Vec<f64>,
    pub max_abs_error: f64,
}

/// Correlations between the domain centre offset by -1.5ρ and points along
/// the x axis at `distances`, on a square of side `side` (centred at 0).
pub fn matern_convergence(side: f64, max_edge: f64, rho: f64, distances: &[f64]) -> Result<ConvergenceReport> {
    let h = 0.5 * side;
    let mesh = crate::mesh::triangulate_plane(&rect_ring([-h, -h, h, h]), &[], &PlanarMeshOptions::with_max_edge(max_edge))?;
    let part = RegionPartition::single(mesh.triangle_region[0]);
    let model = prior_only(Variant::Stationary, &mesh, &part)?;
    let params = HyperParams::uniform(&model.mesh.regions(), MaternParams::new(1.0, rho));
    let kappa = 8f64.sqrt() / rho;
    let x0 = -0.5 * distances.iter().copied().fold(0.0, f64::max);
    let origin = Point3::planar(x0, 0.0);
    let mut gmrf = Vec::with_capacity(distances.len());
    let mut analytic = Vec::with_capacity(distances.len());
    for &d in distances {
        gmrf.push(correlation(&model, &params, &origin, &Point3::planar(x0 + d, 0.0))?);
        analytic.push(matern_correlation(d, kappa));
    }
    let max_abs_error = gmrf.iter().zip(&analytic).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    Ok(ConvergenceReport { max_edge, num_vertices: model.num_vertices(), distances: distances.to_vec(), gmrf, analytic, max_abs_error })
}

/// Square side and maximum edge of the default convergence mesh (about 2000
/// vertices for ρ = 1).
pub const CONVERGENCE_MESH: (f64, f64) = (7.0, 0.25);

/// Distances in [0.1ρ, 3ρ] used by the convergence check.
pub fn convergence_distances(rho: f64) -> Vec<f64> {
    (0..=29).map(|k| rho * (0.1 + 0.1 * k as f64)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn subset_block_cuts_correlation() {
        let r = subset_correlations(&SubsetGeometry::default()).unwrap();
        assert!((r.stationary_ab - 0.19).abs() <= 0.03, "{r:?}");
        assert!(r.subset_ab <= 1e-4, "{r:?}");
        assert!((r.subset_ac - 0.27).abs() <= 0.03, "{r:?}");
        assert!(r.subset_ac > r.stationary_ac);
    }

    #[test]
    fn partition_block_correlations() {
        let r = partition_correlations(&PartitionGeometry::default()).unwrap();
        for (got, want) in [(r.ab, 0.23), (r.ad, 0.28), (r.bc, 0.14), (r.cd, 0.18)] {
            assert!((got - want).abs() <= 0.03, "{r:?}");
        }
        assert!(r.ad > r.bc);
    }

    #[test]
    fn gmrf_correlation_converges_to_matern() {
        let d = convergence_distances(1.0);
        let coarse = matern_convergence(7.0, 0.25, 1.0, &d).unwrap();
        let fine = matern_convergence(7.0, 0.125, 1.0, &d).unwrap();
        assert!(coarse.max_abs_error <= 0.05, "{}", coarse.max_abs_error);
        assert!(fine.max_abs_error < coarse.max_abs_error);
        let at_rho = coarse.gmrf[9];
        assert!((coarse.distances[9] - 1.0).abs() < 1e-12);
        assert!((at_rho - 0.13).abs() <= 0.02, "{at_rho}");
    }
}
