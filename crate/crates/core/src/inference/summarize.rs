use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{DomainKind, Point3, Polygon};
use crate::model::HierModel;

use super::{condition, HyperPosterior};

/// A linear functional of the discrepancy field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Functional {
    /// Value at a point.
    Point { at: Point3 },
    /// Average of point values over a lattice inside a polygon.
    Areal { polygon: Polygon, lattice: usize },
    /// First minus second.
    Difference { a: Box<Functional>, b: Box<Functional> },
    /// Explicit sparse row over model vertices.
    Row { entries: Vec<(usize, f64)> },
}

/// Sparse row of the functional over model vertices, with duplicates summed.
pub fn functional_row(model: &HierModel, f: &Functional) -> Result<Vec<(usize, f64)>> {
    let mut acc = std::collections::BTreeMap::new();
    add_row(model, f, 1.0, &mut acc)?;
    Ok(acc.into_iter().collect())
}

fn add_row(model: &HierModel, f: &Functional, scale: f64, acc: &mut std::collections::BTreeMap<usize, f64>) -> Result<()> {
    match f {
        Functional::Point { at } => {
            let row = model
                .point_row(at)
                .ok_or_else(|| Error::OutOfDomain { what: "functional point outside the model mesh".into(), indices: vec![0] })?;
            for (j, w) in row {
                *acc.entry(j).or_insert(0.0) += scale * w;
            }
        }
        Functional::Areal { polygon, lattice } => {
            let pts = areal_points(model.mesh.domain, polygon, *lattice)?;
            let mut rows = Vec::with_capacity(pts.len());
            let mut missing = Vec::new();
            for (i, p) in pts.iter().enumerate() {
                match model.point_row(p) {
                    Some(r) => rows.push(r),
                    None => missing.push(i),
                }
            }
            if !missing.is_empty() {
                return Err(Error::OutOfDomain { what: "areal functional lattice".into(), indices: missing });
            }
            let s = scale / rows.len() as f64;
            for row in rows {
                for (j, w) in row {
                    *acc.entry(j).or_insert(0.0) += s * w;
                }
            }
        }
        Functional::Difference { a, b } => {
            add_row(model, a, scale, acc)?;
            add_row(model, b, -scale, acc)?;
        }
        Functional::Row { entries } => {
            for &(j, w) in entries {
                if j >= model.num_vertices() {
                    return Err(Error::InvalidArgument(format!("row entry {j} exceeds vertex count {}", model.num_vertices())));
                }
                *acc.entry(j).or_insert(0.0) += scale * w;
            }
        }
    }
    Ok(())
}

/// Equal-area lattice points inside `polygon`: a Fibonacci lattice on the
/// sphere, a square grid on the plane, refined until about `n` points fall
/// inside.
pub fn areal_points(domain: DomainKind, polygon: &Polygon, n: usize) -> Result<Vec<Point3>> {
    if n == 0 {
        return Err(Error::InvalidArgument("areal lattice needs at least one point".into()));
    }
    let area = polygon.area(domain);
    if !(area > 0.0) {
        return Err(Error::InvalidGeometry("areal functional polygon has no area".into()));
    }
    let pts: Vec<Point3> = match domain {
        DomainKind::Sphere => {
            let total = ((n as f64) * 4.0 * std::f64::consts::PI / area).ceil().clamp(16.0, 2.0e7) as usize;
            crate::mesh::fibonacci_lattice(total)?.into_iter().filter(|p| polygon.contains_point(domain, p)).collect()
        }
        DomainKind::Plane => {
            let (mut x0, mut y0, mut x1, mut y1) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
            for p in polygon.rings.iter().flatten() {
                x0 = x0.min(p[0]);
                y0 = y0.min(p[1]);
                x1 = x1.max(p[0]);
                y1 = y1.max(p[1]);
            }
            let h = (area / n as f64).sqrt();
            let (nx, ny) = (((x1 - x0) / h).ceil() as usize, ((y1 - y0) / h).ceil() as usize);
            let mut out = Vec::new();
            for j in 0..ny {
                for i in 0..nx {
                    let (x, y) = (x0 + (i as f64 + 0.5) * h, y0 + (j as f64 + 0.5) * h);
                    if polygon.contains(domain, x, y) {
                        out.push(Point3::planar(x, y));
                    }
                }
            }
            out
        }
    };
    if pts.is_empty() {
        return Err(Error::InvalidGeometry("areal lattice has no points inside the polygon".into()));
    }
    Ok(pts)
}

/// Posterior mean and standard deviation of each functional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorField {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
    /// Per-node (mean, variance) components when requested.
    pub components: Option<Vec<(Vec<f64>, Vec<f64>)>>,
}

/// Mixture-of-Gaussians summary over the weighted θ nodes. Rows that are
/// `None` produce NaN (for example grid cells outside a subset mesh).
pub fn summarize(model: &HierModel, hyper: &HyperPosterior, rows: &[Option<Vec<(usize, f64)>>], keep_components: bool) -> Result<PosteriorField> {
    let active: Vec<usize> = (0..hyper.nodes.len()).filter(|&g| hyper.nodes[g].weight > 0.0).collect();
    if active.is_empty() {
        return Err(Error::InvalidState("no weighted hyperparameter nodes to summarize".into()));
    }
    let per_node: Vec<(Vec<f64>, Vec<f64>)> = active
        .par_iter()
        .map(|&g| node_moments(model, &hyper.nodes[g].theta, rows))
        .collect::<Result<_>>()?;
    let m = rows.len();
    let mut mean = vec![0.0; m];
    for (&g, (mg, _)) in active.iter().zip(&per_node) {
        let w = hyper.nodes[g].weight;
        for r in 0..m {
            mean[r] += w * mg[r];
        }
    }
    let mut var = vec![0.0; m];
    for (&g, (mg, vg)) in active.iter().zip(&per_node) {
        let w = hyper.nodes[g].weight;
        for r in 0..m {
            var[r] += w * (vg[r] + (mg[r] - mean[r]).powi(2));
        }
    }
    let total: f64 = active.iter().map(|&g| hyper.nodes[g].weight).sum();
    for r in 0..m {
        if rows[r].is_none() {
            mean[r] = f64::NAN;
            var[r] = f64::NAN;
        } else {
            mean[r] /= total;
            var[r] /= total;
        }
    }
    Ok(PosteriorField { mean, sd: var.into_iter().map(|v| v.max(0.0).sqrt()).collect(), components: keep_components.then_some(per_node) })
}

/// Row count from which variances come from the selected inverse.
const SELECTED_INVERSE_ROWS: usize = 256;

/// Conditional mean and variance of each row at one θ node.
pub fn node_moments(model: &HierModel, theta: &[f64], rows: &[Option<Vec<(usize, f64)>>]) -> Result<(Vec<f64>, Vec<f64>)> {
    let post = condition(model, theta)?;
    let mut work = post.factor.workspace();
    let selected = (rows.len() >= SELECTED_INVERSE_ROWS).then(|| post.factor.selected_inverse());
    let mut means = Vec::with_capacity(rows.len());
    let mut vars = Vec::with_capacity(rows.len());
    for row in rows {
        match row {
            Some(r) if !r.is_empty() => {
                means.push(r.iter().map(|&(j, w)| w * post.mu[j]).sum());
                let v = selected.as_ref().and_then(|s| s.quad_form(r));
                vars.push(v.unwrap_or_else(|| post.factor.quad_form_sparse(r, &mut work)));
            }
            _ => {
                means.push(0.0);
                vars.push(0.0);
            }
        }
    }
    Ok((means, vars))
}
