//! Pipeline configuration: a TOML document with `--set key=value` overrides,
//! validated in full before any computation.

use std::path::{Path, PathBuf};

use geofuse_core::inference::GridSpec;
use geofuse_core::synthetic::GiaSpec;
use geofuse_core::DomainKind;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariantName {
    #[default]
    Stationary,
    Subset,
    ParameterPartition,
    ProcessPartition,
    Constrained,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_domain")]
    pub domain: DomainKind,
    #[serde(default)]
    pub variant: VariantName,
    /// Directory receiving every artifact.
    pub output_dir: PathBuf,
    #[serde(default)]
    pub mesh: MeshConfig,
    #[serde(default)]
    pub regions: RegionsConfig,
    pub zero_region: Option<ZeroRegionConfig>,
    #[serde(default)]
    pub pseudo: PseudoConfig,
    #[serde(default)]
    pub prior: PriorConfig,
    #[serde(default)]
    pub theta_grid: ThetaGridConfig,
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default)]
    pub predict: PredictConfig,
    #[serde(default)]
    pub synthesize: GiaSpec,
    /// Directory relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_seed() -> u64 {
    1
}

fn default_domain() -> DomainKind {
    DomainKind::Sphere
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MeshConfig {
    /// Global Fibonacci lattice size (sphere).
    pub fibonacci_n: usize,
    /// Per-region resolution overrides.
    pub regions: Vec<RegionMeshConfig>,
    /// Outer boundary ring (plane).
    pub boundary: Option<Vec<[f64; 2]>>,
    /// Maximum edge length (plane).
    pub max_edge: Option<f64>,
    pub min_angle_deg: f64,
}

impl Default for MeshConfig {
    fn default() -> Self {
        Self { fibonacci_n: 30000, regions: Vec::new(), boundary: None, max_edge: None, min_angle_deg: 20.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionMeshConfig {
    pub region: u32,
    /// Lattice size whose points inside the region are used (sphere).
    pub fibonacci_n: Option<usize>,
    /// Maximum edge length inside the region (plane).
    pub max_edge: Option<f64>,
    /// Extra vertices along the region boundary, spaced in degrees (sphere).
    pub boundary_spacing_deg: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RegionsConfig {
    /// GeoJSON region polygons.
    pub file: Option<PathBuf>,
    /// Region of everything outside the listed polygons.
    pub default_region: u32,
    /// Regions modelled by the subset variant (default: all but the zero-region).
    pub keep: Option<Vec<u32>>,
}

impl Default for RegionsConfig {
    fn default() -> Self {
        Self { file: None, default_region: 1, keep: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ZeroRegionConfig {
    #[serde(default)]
    pub region: u32,
    /// GeoJSON polygons of the zero-region.
    pub file: Option<PathBuf>,
    /// Directory of ensemble member grids (`lon,lat,value` CSV files).
    pub ensemble_dir: Option<PathBuf>,
    #[serde(default = "default_mean_thresh")]
    pub mean_thresh: f64,
    #[serde(default = "default_sd_thresh")]
    pub sd_thresh: f64,
    #[serde(default = "default_min_area")]
    pub min_area_km2: f64,
}

fn default_mean_thresh() -> f64 {
    0.3
}

fn default_sd_thresh() -> f64 {
    0.4
}

fn default_min_area() -> f64 {
    200.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PseudoModeName {
    /// Interior for the constrained variant, boundary for the subset variant.
    #[default]
    Auto,
    Interior,
    Boundary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PseudoConfig {
    /// Number of pseudo-observations; 0 disables them.
    pub count: usize,
    pub value: f64,
    pub std_error: f64,
    pub mode: PseudoModeName,
}

impl Default for PseudoConfig {
    fn default() -> Self {
        Self { count: 50, value: 0.0, std_error: 0.1, mode: PseudoModeName::Auto }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PriorConfig {
    pub sigma_mean: f64,
    /// Prior mean range: km on the sphere, domain units on the plane.
    pub rho_mean: f64,
    pub cv: f64,
    /// Fixed zero-region range in the units of `rho_mean` (default: antipodal
    /// distance on the sphere, bounding-box diagonal on the plane).
    pub zero_rho: Option<f64>,
}

impl Default for PriorConfig {
    fn default() -> Self {
        Self { sigma_mean: 1.5, rho_mean: 1000.0, cv: 2.0, zero_rho: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ThetaGridConfig {
    pub nodes_per_dim: usize,
    pub half_width_sd: f64,
    pub tol: f64,
    pub max_sweeps: usize,
    /// Explicit (lo, hi, count) per dimension in log units; overrides the
    /// mode-centred layout.
    pub axes: Option<Vec<(f64, f64, usize)>>,
}

impl Default for ThetaGridConfig {
    fn default() -> Self {
        Self { nodes_per_dim: 5, half_width_sd: 3.0, tol: 1e-4, max_sweeps: 100, axes: None }
    }
}

impl ThetaGridConfig {
    pub fn grid_spec(&self) -> GridSpec {
        match &self.axes {
            Some(axes) => GridSpec::Explicit { axes: axes.clone() },
            None => GridSpec::ModeCentered {
                nodes_per_dim: self.nodes_per_dim,
                half_width_sd: self.half_width_sd,
                tol: self.tol,
                max_sweeps: self.max_sweeps,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    /// Simulation grid m (`lon,lat,value` CSV); absent means m ≡ 0.
    pub simulation: Option<PathBuf>,
    /// Observations (`lon,lat,value,std_error` CSV).
    pub observations: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PredictConfig {
    /// Cell size of the output grid (degrees on the sphere).
    pub grid_step: f64,
    /// JSON list of named functionals.
    pub functionals: Option<PathBuf>,
}

impl Default for PredictConfig {
    fn default() -> Self {
        Self { grid_step: 1.0, functionals: None }
    }
}

impl PipelineConfig {
    /// Parses `text`, applies `key=value` overrides and validates.
    pub fn from_toml(text: &str, overrides: &[String], base_dir: &Path) -> CliResult<Self> {
        let mut cfg: PipelineConfig = if overrides.is_empty() {
            toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?
        } else {
            let mut table: toml::Table = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
            for o in overrides {
                apply_override(&mut table, o)?;
            }
            toml::Value::Table(table).try_into().map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?
        };
        cfg.base_dir = base_dir.to_path_buf();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &[String]) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_toml(&text, overrides, &base)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn output(&self, name: &str) -> PathBuf {
        self.resolve(&self.output_dir).join(name)
    }

    pub fn validate(&self) -> CliResult<()> {
        let err = |m: String| Err(CliError::Config(m));
        let m = &self.mesh;
        match self.domain {
            DomainKind::Sphere => {
                if m.fibonacci_n < 4 {
                    return err(format!("mesh.fibonacci_n must be at least 4, got {}", m.fibonacci_n));
                }
                if !(self.predict.grid_step > 0.0) || (180.0 / self.predict.grid_step).fract().abs() > 1e-9 {
                    return err(format!("predict.grid_step {} must divide 180 degrees", self.predict.grid_step));
                }
            }
            DomainKind::Plane => {
                match &m.boundary {
                    Some(b) if b.len() >= 3 => {}
                    _ => return err("mesh.boundary with at least 3 points is required on the plane".into()),
                }
                if !m.max_edge.is_some_and(|e| e > 0.0) {
                    return err("mesh.max_edge must be a positive number on the plane".into());
                }
                if !(self.predict.grid_step > 0.0) {
                    return err("predict.grid_step must be positive".into());
                }
            }
        }
        for r in &m.regions {
            if r.fibonacci_n.is_some_and(|n| n < 4) {
                return err(format!("mesh.regions: fibonacci_n for region {} must be at least 4", r.region));
            }
            if r.max_edge.is_some_and(|e| !(e > 0.0)) || r.boundary_spacing_deg.is_some_and(|e| !(e > 0.0)) {
                return err(format!("mesh.regions: sizes for region {} must be positive", r.region));
            }
        }
        if let Some(z) = &self.zero_region {
            if z.file.is_some() == z.ensemble_dir.is_some() {
                return err("zero_region needs exactly one of `file` or `ensemble_dir`".into());
            }
            if !(z.mean_thresh > 0.0 && z.sd_thresh > 0.0 && z.min_area_km2 >= 0.0) {
                return err("zero_region thresholds must be positive".into());
            }
            if z.region == self.regions.default_region {
                return err(format!("zero_region.region {} equals regions.default_region", z.region));
            }
        }
        if self.variant == VariantName::Constrained && self.zero_region.is_none() {
            return err("variant `constrained` requires a [zero_region] table".into());
        }
        if self.variant == VariantName::Subset && self.zero_region.is_none() && self.regions.keep.is_none() {
            return err("variant `subset` requires regions.keep or a [zero_region] table".into());
        }
        let p = &self.prior;
        if !(p.sigma_mean > 0.0 && p.rho_mean > 0.0 && p.cv > 0.0) || p.zero_rho.is_some_and(|z| !(z > 0.0)) {
            return err("prior.sigma_mean, prior.rho_mean, prior.cv and prior.zero_rho must be positive".into());
        }
        if !(self.pseudo.std_error > 0.0) || !self.pseudo.value.is_finite() {
            return err("pseudo.std_error must be positive and pseudo.value finite".into());
        }
        let t = &self.theta_grid;
        if t.axes.is_none() && (t.nodes_per_dim == 0 || !(t.half_width_sd > 0.0) || !(t.tol > 0.0)) {
            return err("theta_grid.nodes_per_dim, half_width_sd and tol must be positive".into());
        }
        if let Some(axes) = &t.axes {
            if axes.iter().any(|&(lo, hi, n)| n == 0 || !(hi >= lo)) {
                return err("theta_grid.axes entries need lo <= hi and count >= 1".into());
            }
        }
        Ok(())
    }

    /// Hex SHA-256 over the canonical JSON form of every setting that shapes
    /// the fit (prediction settings and the output directory excluded) and
    /// the bytes of each input file.
    pub fn fit_hash(&self) -> CliResult<String> {
        let mut fit = self.clone();
        fit.output_dir = PathBuf::new();
        fit.predict = PredictConfig::default();
        let mut h = Sha256::new();
        h.update(serde_json::to_vec(&fit).map_err(|e| CliError::Config(e.to_string()))?);
        for path in self.input_files() {
            let p = self.resolve(&path);
            if p.is_dir() {
                for f in sorted_files(&p, "csv")? {
                    h.update(std::fs::read(&f).map_err(|e| CliError::io(&f, e))?);
                }
            } else if p.exists() {
                h.update(std::fs::read(&p).map_err(|e| CliError::io(&p, e))?);
            }
        }
        Ok(hex::encode(h.finalize()))
    }

    fn input_files(&self) -> Vec<PathBuf> {
        let mut v: Vec<PathBuf> = Vec::new();
        v.extend(self.regions.file.clone());
        if let Some(z) = &self.zero_region {
            v.extend(z.file.clone());
            v.extend(z.ensemble_dir.clone());
        }
        v.extend(self.data.simulation.clone());
        v.extend(self.data.observations.clone());
        v
    }
}

/// Files with extension `ext` in `dir`, sorted by name.
pub fn sorted_files(dir: &Path, ext: &str) -> CliResult<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| CliError::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == ext))
        .collect();
    files.sort();
    Ok(files)
}

/// Sets the dotted `key` to `value`, parsed as a TOML value when possible and
/// as a plain string otherwise.
fn apply_override(table: &mut toml::Table, assignment: &str) -> CliResult<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override `{assignment}` is not of the form key=value")))?;
    let key = key.trim();
    let raw = raw.trim();
    let value = match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::Config(format!("bad override key `{key}`")));
    }
    let mut cur = table;
    for part in &parts[..parts.len() - 1] {
        let entry = cur.entry(part.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| CliError::Config(format!("override `{key}`: `{part}` is not a table")))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}
