//! Piecewise-linear finite elements and the SPDE precision matrix for a
//! Matérn field with ν = 1 (α = 2).

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::RegionId;
use crate::mesh::TriangleMesh;
use crate::sparse::{SparseSymMatrix, Symbolic};

/// Marginal standard deviation and range of one region.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaternParams {
    pub sigma: f64,
    pub rho: f64,
}

impl MaternParams {
    pub fn new(sigma: f64, rho: f64) -> Self {
        Self { sigma, rho }
    }

    pub fn kappa_tau(&self) -> Result<(f64, f64)> {
        convert_params(self.sigma, self.rho)
    }
}

/// κ = √8/ρ and τ = 1/(√(4π) κ σ).
pub fn convert_params(sigma: f64, rho: f64) -> Result<(f64, f64)> {
    if !(sigma > 0.0 && rho > 0.0) || !sigma.is_finite() || !rho.is_finite() {
        return Err(Error::InvalidArgument(format!("sigma and rho must be positive, got ({sigma}, {rho})")));
    }
    let kappa = 8.0_f64.sqrt() / rho;
    let tau = 1.0 / ((4.0 * PI).sqrt() * kappa * sigma);
    Ok((kappa, tau))
}

/// Inverse of [`convert_params`]: (κ, τ) → (σ, ρ).
pub fn params_from_kappa_tau(kappa: f64, tau: f64) -> Result<(f64, f64)> {
    if !(kappa > 0.0 && tau > 0.0) {
        return Err(Error::InvalidArgument(format!("kappa and tau must be positive, got ({kappa}, {tau})")));
    }
    let rho = 8.0_f64.sqrt() / kappa;
    let sigma = 1.0 / ((4.0 * PI).sqrt() * kappa * tau);
    Ok((sigma, rho))
}

/// Per-region hyperparameters θ.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct HyperParams {
    pub regions: BTreeMap<RegionId, MaternParams>,
}

impl HyperParams {
    pub fn uniform(regions: &[RegionId], p: MaternParams) -> Self {
        Self { regions: regions.iter().map(|&r| (r, p)).collect() }
    }

    pub fn single(region: RegionId, sigma: f64, rho: f64) -> Self {
        Self::uniform(&[region], MaternParams::new(sigma, rho))
    }

    pub fn get(&self, r: RegionId) -> Option<MaternParams> {
        self.regions.get(&r).copied()
    }

    pub fn validate(&self) -> Result<()> {
        for (r, p) in &self.regions {
            if !(p.sigma > 0.0 && p.rho > 0.0) {
                return Err(Error::InvalidArgument(format!("region {r}: sigma and rho must be positive")));
            }
        }
        Ok(())
    }
}

/// Lumped mass (diagonal, as a vector) and stiffness matrices.
#[derive(Debug, Clone)]
pub struct FemMatrices {
    pub c: Vec<f64>,
    pub g: SparseSymMatrix,
}

/// Lumped mass C̃_ii = Σ_{T ∋ i} |T|/3 (spherical areas on the sphere) and
/// stiffness G_ij = Σ_T ∫_T ∇ψ_i·∇ψ_j on the flat facets.
pub fn assemble_mass_stiffness(mesh: &TriangleMesh) -> Result<FemMatrices> {
    let n = mesh.num_vertices();
    let mut c = vec![0.0; n];
    let mut t = Vec::with_capacity(6 * mesh.num_triangles());
    for (ti, tri) in mesh.triangles.iter().enumerate() {
        let [a, b, cc] = mesh.corners(ti);
        let flat = mesh.flat_area(ti);
        let scale = a.distance(&b).max(b.distance(&cc)).max(cc.distance(&a));
        if !(flat > 1e-14 * scale * scale) {
            return Err(Error::Assembly { triangle: ti, reason: format!("degenerate triangle (area {flat:e})") });
        }
        let third = mesh.area(ti) / 3.0;
        let e = [cc - b, a - cc, b - a];
        for i in 0..3 {
            c[tri[i]] += third;
            for j in i..3 {
                t.push((tri[i], tri[j], e[i].dot(&e[j]) / (4.0 * flat)));
            }
        }
    }
    if let Some(i) = c.iter().position(|&v| !(v > 0.0)) {
        return Err(Error::Assembly { triangle: usize::MAX, reason: format!("vertex {i} belongs to no triangle") });
    }
    let g = SparseSymMatrix::from_triplets(n, &t)?;
    Ok(FemMatrices { c, g })
}

/// Precomputed pattern and coefficient pieces of Q(θ) so that each θ only
/// costs a pass over the stored entries:
/// Q_ij = τ_i τ_j (κ_i² κ_j² C̃_ii δ_ij + (κ_i² + κ_j²) G_ij + (G C̃⁻¹ G)_ij).
#[derive(Debug)]
pub struct PrecisionBuilder {
    c: Vec<f64>,
    pattern: SparseSymMatrix,
    rows: Vec<usize>,
    cols: Vec<usize>,
    g: Vec<f64>,
    gcg: Vec<f64>,
    symbolic: OnceLock<Arc<Symbolic>>,
}

impl PrecisionBuilder {
    pub fn new(fem: &FemMatrices) -> Result<Self> {
        let n = fem.c.len();
        let g = &fem.g;
        // Full neighbour lists of G including the diagonal.
        let mut full: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for (r, c, v) in g.iter_upper() {
            full[r].push((c, v));
            if r != c {
                full[c].push((r, v));
            }
        }
        let mut t = Vec::new();
        for k in 0..n {
            for &(i, gik) in &full[k] {
                for &(j, gkj) in &full[k] {
                    if i <= j {
                        t.push((i, j, gik * gkj / fem.c[k]));
                    }
                }
            }
            t.push((k, k, 0.0));
        }
        let gcg_m = SparseSymMatrix::from_triplets(n, &t)?;
        let pattern = gcg_m.clone();
        let mut gv = vec![0.0; pattern.nnz()];
        for (r, c, v) in g.iter_upper() {
            let s = pattern.slot(r, c).expect("G pattern inside the two-ring pattern");
            gv[s] = v;
        }
        let (rows, cols): (Vec<usize>, Vec<usize>) = pattern.iter_upper().map(|(r, c, _)| (r, c)).unzip();
        Ok(Self {
            c: fem.c.clone(),
            gcg: gcg_m.values().to_vec(),
            pattern,
            rows,
            cols,
            g: gv,
            symbolic: OnceLock::new(),
        })
    }

    pub fn dim(&self) -> usize {
        self.c.len()
    }

    pub fn lumped_mass(&self) -> &[f64] {
        &self.c
    }

    /// Symbolic Cholesky analysis of the precision pattern, computed once.
    pub fn symbolic(&self) -> Arc<Symbolic> {
        Arc::clone(self.symbolic.get_or_init(|| Arc::new(Symbolic::analyze(&self.pattern))))
    }

    /// Non-stationary precision from per-vertex κ² and τ.
    pub fn build(&self, kappa2: &[f64], tau: &[f64]) -> SparseSymMatrix {
        let vals = (0..self.rows.len())
            .map(|s| {
                let (i, j) = (self.rows[s], self.cols[s]);
                let mut v = (kappa2[i] + kappa2[j]) * self.g[s] + self.gcg[s];
                if i == j {
                    v += kappa2[i] * kappa2[i] * self.c[i];
                }
                tau[i] * tau[j] * v
            })
            .collect();
        self.pattern.with_values(vals)
    }

    /// τ² (κ⁴ C̃ + 2κ² G + G C̃⁻¹ G).
    pub fn build_stationary(&self, kappa: f64, tau: f64) -> SparseSymMatrix {
        let k2 = kappa * kappa;
        let vals = (0..self.rows.len())
            .map(|s| {
                let (i, j) = (self.rows[s], self.cols[s]);
                let mut v = 2.0 * k2 * self.g[s] + self.gcg[s];
                if i == j {
                    v += k2 * k2 * self.c[i];
                }
                tau * tau * v
            })
            .collect();
        self.pattern.with_values(vals)
    }

    /// Precision for per-region parameters, using each vertex's region.
    pub fn build_for(&self, mesh: &TriangleMesh, params: &HyperParams) -> Result<SparseSymMatrix> {
        let (k2, tau) = vertex_coefficients(mesh, params)?;
        Ok(self.build(&k2, &tau))
    }
}

/// Per-vertex κ² and τ from region parameters.
pub fn vertex_coefficients(mesh: &TriangleMesh, params: &HyperParams) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut cache: BTreeMap<RegionId, (f64, f64)> = BTreeMap::new();
    let mut k2 = Vec::with_capacity(mesh.num_vertices());
    let mut tau = Vec::with_capacity(mesh.num_vertices());
    for &r in &mesh.vertex_region {
        let (k, t) = match cache.get(&r) {
            Some(v) => *v,
            None => {
                let p = params.get(r).ok_or_else(|| Error::Config(format!("no hyperparameters for region {r}")))?;
                let v = p.kappa_tau()?;
                cache.insert(r, v);
                v
            }
        };
        k2.push(k * k);
        tau.push(t);
    }
    Ok((k2, tau))
}

/// One-shot precision assembly.
pub fn assemble_precision(fem: &FemMatrices, mesh: &TriangleMesh, params: &HyperParams) -> Result<SparseSymMatrix> {
    PrecisionBuilder::new(fem)?.build_for(mesh, params)
}
