use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{to_uv, Point3};
use crate::grid::GridField;
use crate::mesh::{MeshLocator, TriangleMesh};
use crate::sparse::SparseRowMatrix;

/// Point observations y_i with measurement standard errors.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ObservationSet {
    pub locations: Vec<Point3>,
    pub values: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub is_pseudo: Vec<bool>,
}

impl ObservationSet {
    pub fn new(locations: Vec<Point3>, values: Vec<f64>, std_errors: Vec<f64>) -> Result<Self> {
        let n = locations.len();
        let s = Self { locations, values, std_errors, is_pseudo: vec![false; n] };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.locations.len();
        if self.values.len() != n || self.std_errors.len() != n || self.is_pseudo.len() != n {
            return Err(Error::InvalidArgument("observation columns have different lengths".into()));
        }
        let bad: Vec<usize> = (0..n).filter(|&i| !(self.std_errors[i] > 0.0) || !self.values[i].is_finite()).collect();
        if !bad.is_empty() {
            return Err(Error::OutOfDomain { what: "observations with non-positive std_error or non-finite value".into(), indices: bad });
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.locations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.locations.is_empty()
    }

    pub fn extend(&mut self, other: &ObservationSet) {
        self.locations.extend_from_slice(&other.locations);
        self.values.extend_from_slice(&other.values);
        self.std_errors.extend_from_slice(&other.std_errors);
        self.is_pseudo.extend_from_slice(&other.is_pseudo);
    }

    pub fn select(&self, idx: &[usize]) -> Self {
        Self {
            locations: idx.iter().map(|&i| self.locations[i]).collect(),
            values: idx.iter().map(|&i| self.values[i]).collect(),
            std_errors: idx.iter().map(|&i| self.std_errors[i]).collect(),
            is_pseudo: idx.iter().map(|&i| self.is_pseudo[i]).collect(),
        }
    }
}

/// Barycentric observation matrix: row i holds the weights of the triangle
/// containing location i.
pub fn build_a(mesh: &TriangleMesh, locator: &MeshLocator, locations: &[Point3]) -> Result<SparseRowMatrix> {
    let mut rows = Vec::with_capacity(locations.len());
    let mut outside = Vec::new();
    for (i, p) in locations.iter().enumerate() {
        match locator.locate(mesh, p) {
            Some(loc) => rows.push(barycentric_row(mesh, loc.triangle, loc.weights)),
            None => {
                outside.push(i);
                rows.push(Vec::new());
            }
        }
    }
    if !outside.is_empty() {
        return Err(Error::OutOfDomain { what: "locations outside the mesh".into(), indices: outside });
    }
    SparseRowMatrix::from_rows(mesh.num_vertices(), &rows)
}

pub(crate) fn barycentric_row(mesh: &TriangleMesh, t: usize, w: [f64; 3]) -> Vec<(usize, f64)> {
    mesh.triangles[t].iter().zip(w).filter(|(_, w)| *w > 0.0).map(|(&v, w)| (v, w)).collect()
}

/// Simulation values at the observation locations.
pub fn simulation_at(mesh: &TriangleMesh, m: &GridField, locations: &[Point3]) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(locations.len());
    let mut outside = Vec::new();
    for (i, p) in locations.iter().enumerate() {
        let (u, v) = to_uv(mesh.domain, p);
        match m.interpolate(u, v) {
            Some(x) => out.push(x),
            None => {
                outside.push(i);
                out.push(f64::NAN);
            }
        }
    }
    if !outside.is_empty() {
        return Err(Error::OutOfDomain { what: "locations outside the simulation grid".into(), indices: outside });
    }
    Ok(out)
}

/// ỹ = y − m(location), with m interpolated bilinearly on its grid.
pub fn subtract_simulation(y: &ObservationSet, m: &GridField, mesh: &TriangleMesh) -> Result<ObservationSet> {
    let at = simulation_at(mesh, m, &y.locations)?;
    let mut out = y.clone();
    for (v, s) in out.values.iter_mut().zip(at) {
        *v -= s;
    }
    Ok(out)
}
