//! Plain-text artifacts: CSV grids and point tables with `#` comment headers
//! carrying the config hash, plus `.meta.json` sidecars.

use std::path::{Path, PathBuf};

use geofuse_core::grid::GridField;
use geofuse_core::model::ObservationSet;
use geofuse_core::zeroregion::GriddedEnsemble;
use geofuse_core::{DomainKind, Point3};
use serde_json::Value;

use crate::config::sorted_files;
use crate::error::{CliError, CliResult};

/// Shortest round-trip text for `v`, in scientific notation for very small
/// or large magnitudes.
pub fn fmt_f64(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || !v.is_finite() || (1e-4..1e15).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

pub fn coord_names(domain: DomainKind) -> [&'static str; 2] {
    match domain {
        DomainKind::Sphere => ["lon", "lat"],
        DomainKind::Plane => ["x", "y"],
    }
}

pub fn point_of(domain: DomainKind, u: f64, v: f64) -> Point3 {
    match domain {
        DomainKind::Sphere => Point3::from_lon_lat(u, v),
        DomainKind::Plane => Point3::planar(u, v),
    }
}

/// Header comments written at the top of every CSV artifact.
#[derive(Debug, Clone, PartialEq)]
pub struct Provenance {
    pub config_hash: String,
    pub lines: Vec<(String, String)>,
}

impl Provenance {
    pub fn new(config_hash: &str) -> Self {
        Self { config_hash: config_hash.to_string(), lines: Vec::new() }
    }

    pub fn with(mut self, key: &str, value: impl ToString) -> Self {
        self.lines.push((key.to_string(), value.to_string()));
        self
    }

    fn meta(&self) -> Value {
        let mut m = serde_json::Map::new();
        m.insert("config_hash".into(), Value::String(self.config_hash.clone()));
        for (k, v) in &self.lines {
            m.insert(k.clone(), Value::String(v.clone()));
        }
        Value::Object(m)
    }
}

/// Writes a numeric CSV table with provenance comments and a `.meta.json` sidecar.
pub fn write_table(path: &Path, prov: &Provenance, header: &[&str], rows: &[Vec<f64>]) -> CliResult<()> {
    let text: Vec<Vec<String>> = rows.iter().map(|r| r.iter().map(|v| fmt_f64(*v)).collect()).collect();
    write_text_table(path, prov, header, &text)
}

/// Like [`write_table`] with preformatted fields.
pub fn write_text_table(path: &Path, prov: &Provenance, header: &[&str], rows: &[Vec<String>]) -> CliResult<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(format!("# config_hash={}\n", prov.config_hash).as_bytes());
    for (k, v) in &prov.lines {
        buf.extend_from_slice(format!("# {k}={v}\n").as_bytes());
    }
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        let csv_err = |e: csv::Error| CliError::Data(format!("{}: {e}", path.display()));
        w.write_record(header).map_err(csv_err)?;
        for r in rows {
            w.write_record(r).map_err(csv_err)?;
        }
        w.flush().map_err(|e| CliError::io(path, e))?;
    }
    write_bytes(path, &buf)?;
    let mut meta = prov.meta();
    meta["columns"] = Value::from(header.to_vec());
    meta["rows"] = Value::from(rows.len());
    write_json(&meta_path(path), &meta)
}

pub fn meta_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".meta.json");
    path.with_file_name(name)
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> CliResult<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

pub fn write_json(path: &Path, value: &impl serde::Serialize) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Data(e.to_string()))?;
    text.push('\n');
    write_bytes(path, text.as_bytes())
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

/// Numeric columns of a CSV file with `#` comments, keyed by header name.
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn column(&self, names: &[&str]) -> Option<usize> {
        names.iter().find_map(|n| self.header.iter().position(|h| h == n))
    }
}

pub fn read_table(path: &Path) -> CliResult<Table> {
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let header: Vec<String> = r
        .headers()
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?
        .iter()
        .map(|s| s.to_ascii_lowercase())
        .collect();
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        let row = rec
            .iter()
            .map(|s| {
                s.parse::<f64>()
                    .map_err(|_| CliError::Data(format!("{}: record {}: `{s}` is not a number", path.display(), i + 1)))
            })
            .collect::<CliResult<Vec<f64>>>()?;
        if row.len() != header.len() {
            return Err(CliError::Data(format!("{}: record {} has {} fields", path.display(), i + 1, row.len())));
        }
        rows.push(row);
    }
    Ok(Table { header, rows })
}

/// Reads a regular grid `u,v,value` (or `u,v,mean,...`).
pub fn read_grid(path: &Path, domain: DomainKind) -> CliResult<GridField> {
    let t = read_table(path)?;
    if t.header.len() < 3 {
        return Err(CliError::Data(format!("{}: a grid needs two coordinates and a value column", path.display())));
    }
    let vc = t.column(&["value", "mean"]).unwrap_or(2);
    let pts: Vec<(f64, f64, f64)> = t.rows.iter().map(|r| (r[0], r[1], r[vc])).collect();
    if let Some(p) = pts.iter().find(|p| !p.2.is_finite()) {
        return Err(CliError::Data(format!("{}: missing value at ({}, {})", path.display(), p.0, p.1)));
    }
    GridField::from_points(domain, &pts).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

pub fn write_grid(path: &Path, prov: &Provenance, field: &GridField) -> CliResult<()> {
    let c = coord_names(field.grid.domain);
    let rows: Vec<Vec<f64>> = field.grid.centers().iter().zip(&field.values).map(|(&(x, y), &v)| vec![x, y, v]).collect();
    write_table(path, prov, &[c[0], c[1], "value"], &rows)
}

/// Reads `u,v,value,std_error` point observations.
pub fn read_observations(path: &Path, domain: DomainKind) -> CliResult<ObservationSet> {
    let t = read_table(path)?;
    let col = |names: &[&str], k: usize| t.column(names).unwrap_or(k);
    let (vc, sc) = (col(&["value"], 2), col(&["std_error", "se", "sd"], 3));
    if t.header.len() < 4 {
        return Err(CliError::Data(format!("{}: observations need coordinates, value and std_error", path.display())));
    }
    let locations = t.rows.iter().map(|r| point_of(domain, r[0], r[1])).collect();
    let values = t.rows.iter().map(|r| r[vc]).collect();
    let se = t.rows.iter().map(|r| r[sc]).collect();
    ObservationSet::new(locations, values, se).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

pub fn write_observations(path: &Path, prov: &Provenance, obs: &ObservationSet, domain: DomainKind) -> CliResult<()> {
    let c = coord_names(domain);
    let rows: Vec<Vec<f64>> = (0..obs.len())
        .map(|i| {
            let p = &obs.locations[i];
            let (u, v) = match domain {
                DomainKind::Sphere => p.to_lon_lat(),
                DomainKind::Plane => (p.x, p.y),
            };
            vec![u, v, obs.values[i], obs.std_errors[i]]
        })
        .collect();
    write_table(path, prov, &[c[0], c[1], "value", "std_error"], &rows)
}

/// Every `*.csv` grid in `dir` (sorted by file name) as one ensemble.
pub fn read_ensemble(dir: &Path, domain: DomainKind) -> CliResult<GriddedEnsemble> {
    let files = sorted_files(dir, "csv")?;
    if files.len() < 2 {
        return Err(CliError::Data(format!("{}: an ensemble needs at least 2 member grids", dir.display())));
    }
    let mut grid = None;
    let mut members = Vec::new();
    let mut ids = Vec::new();
    for f in &files {
        let g = read_grid(f, domain)?;
        match &grid {
            None => grid = Some(g.grid),
            Some(first) if *first != g.grid => {
                return Err(CliError::Data(format!("{}: grid differs from the first member", f.display())));
            }
            _ => {}
        }
        members.push(g.values);
        ids.push(f.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default());
    }
    Ok(GriddedEnsemble::new(grid.expect("at least two members"), members, ids)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use geofuse_core::grid::RegularGrid;

    #[test]
    fn number_format_round_trips() {
        for v in [0.0, -0.0, 1.5, -3.25e-9, 1e300, 0.1 + 0.2, f64::MIN_POSITIVE, 12345.678] {
            assert_eq!(fmt_f64(v).parse::<f64>().unwrap().to_bits(), v.to_bits());
        }
        assert_eq!(fmt_f64(f64::NAN), "NaN");
        assert_eq!(fmt_f64(2.5e-7), "2.5e-7");
    }

    #[test]
    fn grid_round_trip_with_comments() {
        let dir = tempfile::tempdir().unwrap();
        let grid = RegularGrid::global(30.0).unwrap();
        let values: Vec<f64> = (0..grid.len()).map(|k| k as f64 * 0.1 - 3.0).collect();
        let field = GridField::new(grid, values).unwrap();
        let path = dir.path().join("g.csv");
        write_grid(&path, &Provenance::new("abc").with("units", "mm/yr"), &field).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("# config_hash=abc\n# units=mm/yr\nlon,lat,value\n"));
        assert_eq!(read_grid(&path, DomainKind::Sphere).unwrap(), field);
        let meta: Value = read_json(&meta_path(&path)).unwrap();
        assert_eq!(meta["config_hash"], "abc");
        assert_eq!(meta["rows"], 72);
    }

    #[test]
    fn observations_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let obs = ObservationSet::new(vec![Point3::planar(0.5, 1.0), Point3::planar(2.0, -1.0)], vec![1.0, 2.0], vec![0.1, 0.2])
            .unwrap();
        let path = dir.path().join("o.csv");
        write_observations(&path, &Provenance::new("h"), &obs, DomainKind::Plane).unwrap();
        let back = read_observations(&path, DomainKind::Plane).unwrap();
        assert_eq!(back.values, obs.values);
        assert_eq!(back.locations, obs.locations);
        assert_eq!(back.std_errors, obs.std_errors);
    }

    #[test]
    fn bad_numbers_are_data_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "lon,lat,value\n0,0,abc\n").unwrap();
        let e = read_grid(&path, DomainKind::Sphere).unwrap_err();
        assert_eq!(e.exit_code(), 3);
        assert!(e.to_string().contains("abc"));
    }
}
