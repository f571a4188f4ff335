//! Regular cell-centred grids in (lon, lat) degrees or planar (x, y).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{lon_lat_cell_area_km2, DomainKind};

/// Cell centres at (x0 + i·dx, y0 + j·dy); each cell extends half a step
/// either side of its centre.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegularGrid {
    pub domain: DomainKind,
    pub x0: f64,
    pub dx: f64,
    pub nx: usize,
    pub y0: f64,
    pub dy: f64,
    pub ny: usize,
}

impl RegularGrid {
    /// A global grid of `step`-degree cells, centres starting at
    /// (-180 + step/2, -90 + step/2).
    pub fn global(step: f64) -> Result<Self> {
        let nx = (360.0 / step).round() as usize;
        let ny = (180.0 / step).round() as usize;
        if !(step > 0.0) || (nx as f64 * step - 360.0).abs() > 1e-9 || (ny as f64 * step - 180.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!("grid step {step} does not divide 180 degrees")));
        }
        Ok(Self { domain: DomainKind::Sphere, x0: -180.0 + 0.5 * step, dx: step, nx, y0: -90.0 + 0.5 * step, dy: step, ny })
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    pub fn center(&self, i: usize, j: usize) -> (f64, f64) {
        (self.x0 + i as f64 * self.dx, self.y0 + j as f64 * self.dy)
    }

    /// All cell centres in storage order (row by row in y).
    pub fn centers(&self) -> Vec<(f64, f64)> {
        (0..self.ny).flat_map(|j| (0..self.nx).map(move |i| self.center(i, j))).collect()
    }

    /// True when the columns go all the way around in longitude.
    pub fn wraps(&self) -> bool {
        self.domain == DomainKind::Sphere && (self.nx as f64 * self.dx - 360.0).abs() < 1e-9
    }

    /// Cell edges (x_lo, y_lo, x_hi, y_hi).
    pub fn cell_bounds(&self, i: usize, j: usize) -> (f64, f64, f64, f64) {
        let (x, y) = self.center(i, j);
        (x - 0.5 * self.dx, y - 0.5 * self.dy, x + 0.5 * self.dx, y + 0.5 * self.dy)
    }

    /// Cell area in km² on the sphere, or in planar units².
    pub fn cell_area(&self, j: usize) -> f64 {
        match self.domain {
            DomainKind::Sphere => {
                let (_, y0, _, y1) = self.cell_bounds(0, j);
                lon_lat_cell_area_km2(y0.max(-90.0), y1.min(90.0), self.dx)
            }
            DomainKind::Plane => self.dx * self.dy,
        }
    }

    /// Recovers a regular grid from scattered cell centres; returns the grid
    /// and the storage index of every input point.
    pub fn from_points(domain: DomainKind, pts: &[(f64, f64)]) -> Result<(Self, Vec<usize>)> {
        if pts.is_empty() {
            return Err(Error::InvalidArgument("empty grid".into()));
        }
        let axis = |vals: Vec<f64>| -> Result<(f64, f64, usize)> {
            let mut v = vals;
            v.sort_by(f64::total_cmp);
            v.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
            if v.len() == 1 {
                return Ok((v[0], 1.0, 1));
            }
            let d = (v[v.len() - 1] - v[0]) / (v.len() - 1) as f64;
            for w in v.windows(2) {
                if ((w[1] - w[0]) - d).abs() > 1e-6 * d {
                    return Err(Error::InvalidArgument("grid coordinates are not regularly spaced".into()));
                }
            }
            Ok((v[0], d, v.len()))
        };
        let (x0, dx, nx) = axis(pts.iter().map(|p| p.0).collect())?;
        let (y0, dy, ny) = axis(pts.iter().map(|p| p.1).collect())?;
        let grid = Self { domain, x0, dx, nx, y0, dy, ny };
        if nx * ny != pts.len() {
            return Err(Error::InvalidArgument(format!(
                "grid has {} points but {}x{} distinct coordinates",
                pts.len(),
                nx,
                ny
            )));
        }
        let mut seen = vec![false; grid.len()];
        let mut idx = Vec::with_capacity(pts.len());
        for p in pts {
            let i = ((p.0 - x0) / dx).round() as usize;
            let j = ((p.1 - y0) / dy).round() as usize;
            let k = grid.index(i, j);
            if seen[k] {
                return Err(Error::InvalidArgument(format!("duplicate grid point ({}, {})", p.0, p.1)));
            }
            seen[k] = true;
            idx.push(k);
        }
        Ok((grid, idx))
    }

    /// Fractional column position of `x` and whether it is covered.
    fn locate_x(&self, x: f64) -> Option<f64> {
        if self.wraps() {
            let f = ((x - self.x0) / self.dx).rem_euclid(self.nx as f64);
            return Some(f);
        }
        let lo = self.x0 - 0.5 * self.dx;
        let hi = self.x0 + (self.nx as f64 - 0.5) * self.dx;
        let x = if self.domain == DomainKind::Sphere { shift_into(x, lo) } else { x };
        if x < lo - 1e-9 || x > hi + 1e-9 {
            return None;
        }
        Some(((x - self.x0) / self.dx).clamp(0.0, (self.nx - 1) as f64))
    }

    fn locate_y(&self, y: f64) -> Option<f64> {
        let lo = self.y0 - 0.5 * self.dy;
        let hi = self.y0 + (self.ny as f64 - 0.5) * self.dy;
        if y < lo - 1e-9 || y > hi + 1e-9 {
            return None;
        }
        Some(((y - self.y0) / self.dy).clamp(0.0, (self.ny - 1) as f64))
    }

    /// Cell containing (x, y), if any.
    pub fn cell_of(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        let fx = self.locate_x(x)?;
        let fy = self.locate_y(y)?;
        let i = if self.wraps() { (fx.round() as usize) % self.nx } else { fx.round() as usize };
        Some((i, fy.round() as usize))
    }
}

fn shift_into(x: f64, lo: f64) -> f64 {
    let mut w = x;
    while w < lo {
        w += 360.0;
    }
    while w >= lo + 360.0 {
        w -= 360.0;
    }
    w
}

/// Values on a regular grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridField {
    pub grid: RegularGrid,
    pub values: Vec<f64>,
}

impl GridField {
    pub fn new(grid: RegularGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidArgument(format!("grid needs {} values, got {}", grid.len(), values.len())));
        }
        Ok(Self { grid, values })
    }

    pub fn constant(grid: RegularGrid, c: f64) -> Self {
        Self { grid, values: vec![c; grid.len()] }
    }

    pub fn from_points(domain: DomainKind, pts: &[(f64, f64, f64)]) -> Result<Self> {
        let coords: Vec<(f64, f64)> = pts.iter().map(|p| (p.0, p.1)).collect();
        let (grid, idx) = RegularGrid::from_points(domain, &coords)?;
        let mut values = vec![0.0; grid.len()];
        for (k, p) in idx.iter().zip(pts) {
            values[*k] = p.2;
        }
        Ok(Self { grid, values })
    }

    /// Bilinear interpolation between cell centres, wrapping in longitude
    /// for global grids. Beyond the outermost centres (but inside the cells)
    /// the nearest row or column is used.
    pub fn interpolate(&self, x: f64, y: f64) -> Option<f64> {
        let g = &self.grid;
        let fx = g.locate_x(x)?;
        let fy = g.locate_y(y)?;
        let (i0, tx) = split(fx);
        let (j0, ty) = split(fy);
        let i1 = if g.wraps() { (i0 + 1) % g.nx } else { (i0 + 1).min(g.nx - 1) };
        let j1 = (j0 + 1).min(g.ny - 1);
        let v = |i: usize, j: usize| self.values[g.index(i, j)];
        Some(
            (1.0 - tx) * (1.0 - ty) * v(i0, j0)
                + tx * (1.0 - ty) * v(i1, j0)
                + (1.0 - tx) * ty * v(i0, j1)
                + tx * ty * v(i1, j1),
        )
    }
}

fn split(f: f64) -> (usize, f64) {
    let i = f.floor();
    (i as usize, f - i)
}
