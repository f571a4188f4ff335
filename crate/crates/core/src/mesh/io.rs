//! Plain-text mesh format:
//!
//! ```text
//! # comment
//! domain sphere
//! v x y z
//! t i j k region
//! ```
//!
//! Indices are 0-based; coordinates are written with 17 significant digits.
//! Region polygons are read and written as GeoJSON feature collections with
//! (lon, lat) degrees on the sphere and (x, y) on the plane.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::geometry::{DomainKind, Point3, Polygon, RegionId};

use serde_json::{json, Value};

use super::{RegionPartition, TriangleMesh};

pub fn write_mesh<W: Write>(mesh: &TriangleMesh, mut out: W) -> Result<()> {
    let mut buf = String::with_capacity(64 * (mesh.num_vertices() + mesh.num_triangles()));
    let kind = match mesh.domain {
        DomainKind::Sphere => "sphere",
        DomainKind::Plane => "plane",
    };
    writeln!(buf, "domain {kind}").unwrap();
    for v in &mesh.vertices {
        writeln!(buf, "v {:.16e} {:.16e} {:.16e}", v.x, v.y, v.z).unwrap();
    }
    for (t, r) in mesh.triangles.iter().zip(&mesh.triangle_region) {
        writeln!(buf, "t {} {} {} {}", t[0], t[1], t[2], r.0).unwrap();
    }
    out.write_all(buf.as_bytes())?;
    Ok(())
}

pub fn read_mesh<R: BufRead>(input: R) -> Result<TriangleMesh> {
    let mut domain = None;
    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    let mut regions = Vec::new();
    for (lineno, line) in input.lines().enumerate() {
        let line = line?;
        let line_no = lineno + 1;
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let err = |message: &str| Error::Parse { line: line_no, message: message.to_string() };
        let mut parts = content.split_whitespace();
        match parts.next() {
            Some("domain") => {
                domain = Some(match parts.next() {
                    Some("sphere") => DomainKind::Sphere,
                    Some("plane") => DomainKind::Plane,
                    _ => return Err(err("expected `domain sphere|plane`")),
                });
            }
            Some("v") => {
                let c: Vec<f64> = parts
                    .map(|s| s.parse::<f64>().map_err(|_| err("bad coordinate")))
                    .collect::<Result<_>>()?;
                if c.len() != 3 {
                    return Err(err("vertex needs 3 coordinates"));
                }
                vertices.push(Point3::new(c[0], c[1], c[2]));
            }
            Some("t") => {
                let c: Vec<u64> = parts
                    .map(|s| s.parse::<u64>().map_err(|_| err("bad index")))
                    .collect::<Result<_>>()?;
                if c.len() != 4 {
                    return Err(err("triangle needs 3 indices and a region"));
                }
                triangles.push([c[0] as usize, c[1] as usize, c[2] as usize]);
                regions.push(RegionId(c[3] as u32));
            }
            Some(other) => return Err(err(&format!("unknown record `{other}`"))),
            None => {}
        }
    }
    let domain = domain.ok_or(Error::Parse { line: 0, message: "missing `domain` header".into() })?;
    TriangleMesh::with_regions(vertices, triangles, domain, regions)
}

/// Parses a GeoJSON `FeatureCollection` (or a single `Feature` / geometry)
/// of `Polygon`/`MultiPolygon` features. The integer property `region`
/// gives the region id (features without it are numbered from 1). Features
/// sharing a region id are merged, and even-odd filling applies to all rings.
pub fn read_regions_geojson(text: &str, default_region: RegionId) -> Result<RegionPartition> {
    let doc: Value = serde_json::from_str(text).map_err(|e| Error::Parse { line: e.line(), message: e.to_string() })?;
    let features: Vec<Value> = match doc.get("type").and_then(Value::as_str) {
        Some("FeatureCollection") => doc
            .get("features")
            .and_then(Value::as_array)
            .cloned()
            .ok_or_else(|| geo_err("FeatureCollection without features"))?,
        Some("Feature") => vec![doc],
        Some("Polygon") | Some("MultiPolygon") => vec![json!({"type": "Feature", "geometry": doc, "properties": {}})],
        _ => return Err(geo_err("expected a FeatureCollection, Feature or Polygon")),
    };
    let mut regions: Vec<(RegionId, Polygon)> = Vec::new();
    for (k, f) in features.iter().enumerate() {
        let id = match f.pointer("/properties/region") {
            Some(v) => RegionId(v.as_u64().ok_or_else(|| geo_err("region must be a non-negative integer"))? as u32),
            None => RegionId(k as u32 + 1),
        };
        let geom = f.get("geometry").ok_or_else(|| geo_err("feature without geometry"))?;
        let coords = geom.get("coordinates").ok_or_else(|| geo_err("geometry without coordinates"))?;
        let polys: Vec<&Value> = match geom.get("type").and_then(Value::as_str) {
            Some("Polygon") => vec![coords],
            Some("MultiPolygon") => coords.as_array().ok_or_else(|| geo_err("bad MultiPolygon"))?.iter().collect(),
            other => return Err(geo_err(&format!("unsupported geometry {other:?}"))),
        };
        let mut rings = Vec::new();
        for poly in polys {
            for ring in poly.as_array().ok_or_else(|| geo_err("bad polygon"))? {
                rings.push(parse_ring(ring)?);
            }
        }
        match regions.iter_mut().find(|(r, _)| *r == id) {
            Some((_, p)) => p.rings.extend(Polygon::new(rings).rings),
            None => regions.push((id, Polygon::new(rings))),
        }
    }
    let partition = RegionPartition { regions, default_region };
    partition.validate()?;
    Ok(partition)
}

fn parse_ring(ring: &Value) -> Result<Vec<[f64; 2]>> {
    ring.as_array()
        .ok_or_else(|| geo_err("ring must be an array"))?
        .iter()
        .map(|p| {
            let a = p.as_array().filter(|a| a.len() >= 2).ok_or_else(|| geo_err("position needs 2 numbers"))?;
            match (a[0].as_f64(), a[1].as_f64()) {
                (Some(x), Some(y)) => Ok([x, y]),
                _ => Err(geo_err("non-numeric coordinate")),
            }
        })
        .collect()
}

fn geo_err(msg: &str) -> Error {
    Error::Parse { line: 0, message: msg.to_string() }
}

/// Writes polygons as a GeoJSON FeatureCollection with closed rings.
pub fn regions_to_geojson(regions: &[(RegionId, Polygon)]) -> String {
    let features: Vec<Value> = regions
        .iter()
        .map(|(id, poly)| {
            let rings: Vec<Value> = poly
                .rings
                .iter()
                .map(|r| {
                    let mut pts: Vec<Value> = r.iter().map(|p| json!([p[0], p[1]])).collect();
                    if let Some(first) = r.first() {
                        pts.push(json!([first[0], first[1]]));
                    }
                    Value::Array(pts)
                })
                .collect();
            json!({
                "type": "Feature",
                "properties": {"region": id.0},
                "geometry": {"type": "Polygon", "coordinates": rings},
            })
        })
        .collect();
    serde_json::to_string_pretty(&json!({"type": "FeatureCollection", "features": features})).unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{fibonacci_lattice, triangulate_sphere};
    use proptest::prelude::*;

    #[test]
    fn sphere_mesh_round_trips_bit_exact() {
        let mesh = triangulate_sphere(&fibonacci_lattice(200).unwrap()).unwrap();
        let mut buf = Vec::new();
        write_mesh(&mesh, &mut buf).unwrap();
        let back = read_mesh(&buf[..]).unwrap();
        assert_eq!(back, mesh);
    }

    #[test]
    fn comments_and_errors() {
        let text = "# hello\ndomain plane\nv 0 0 0\nv 1 0 0 # trailing\nv 0 1 0\nt 0 1 2 5\n";
        let m = read_mesh(text.as_bytes()).unwrap();
        assert_eq!(m.triangle_region, vec![RegionId(5)]);
        let bad = "domain plane\nv 0 0\n";
        assert!(matches!(read_mesh(bad.as_bytes()), Err(Error::Parse { line: 2, .. })));
        assert!(matches!(read_mesh("v 0 0 0\n".as_bytes()), Err(Error::Parse { .. })));
    }

    #[test]
    fn geojson_round_trip() {
        let regions = vec![
            (RegionId(1), Polygon::new(vec![vec![[0.0, 0.0], [10.0, 0.0], [10.0, 10.0], [0.0, 10.0]]])),
            (RegionId(3), Polygon::rectangle(20.0, -5.0, 30.0, 5.0)),
        ];
        let text = regions_to_geojson(&regions);
        let back = read_regions_geojson(&text, RegionId(0)).unwrap();
        assert_eq!(back.regions, regions);
        let multi = r#"{"type":"Feature","properties":{"region":2},"geometry":{"type":"MultiPolygon",
            "coordinates":[[[[0,0],[1,0],[1,1],[0,0]]],[[[5,5],[6,5],[6,6],[5,5]]]]}}"#;
        let p = read_regions_geojson(multi, RegionId(0)).unwrap();
        assert_eq!(p.regions[0].0, RegionId(2));
        assert_eq!(p.regions[0].1.rings.len(), 2);
        assert!(read_regions_geojson("{\"type\":\"Point\"}", RegionId(0)).is_err());
    }

    proptest! {
        #[test]
        fn coordinates_round_trip(x in any::<f64>().prop_filter("finite", |v| v.is_finite()),
                                  y in -1e300f64..1e300, z in -1.0f64..1.0) {
            let mesh = TriangleMesh {
                vertices: vec![Point3::new(x, y, z)],
                triangles: vec![],
                domain: DomainKind::Plane,
                triangle_region: vec![],
                vertex_region: vec![],
            };
            let mut buf = Vec::new();
            write_mesh(&mesh, &mut buf).unwrap();
            let back = read_mesh(&buf[..]).unwrap();
            prop_assert_eq!(back.vertices[0].x.to_bits(), x.to_bits());
            prop_assert_eq!(back.vertices[0].y.to_bits(), y.to_bits());
            prop_assert_eq!(back.vertices[0].z.to_bits(), z.to_bits());
        }
    }
}
