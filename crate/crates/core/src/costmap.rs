//! Collision costmap: kinetic-energy loss per cell, local ice concentration, and a smooth
//! interpolated cost field with gradients.

use crate::error::{IceNavError, Result};
use crate::geometry::{rasterize_polygon, GridSpec, Point2};
use crate::icefield::{occupancy_image, IceField};
use crate::scalar::Real;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Kinetic energy lost by the ship when it strikes a floe at offset `d` from the floe's
/// centroid (positive number).
pub fn ke_loss<T: Real>(d: T, r_ice: T, m_ice: T, m_ship: T, u: T) -> Result<T> {
    if !(r_ice > T::zero()) {
        return Err(IceNavError::DomainError("floe radius must be positive".into()));
    }
    if d < T::zero() || d > r_ice {
        return Err(IceNavError::DomainError(format!(
            "offset {:?} outside [0, {:?}]",
            d, r_ice
        )));
    }
    let two = T::lit(2.0);
    let total = m_ice + m_ship;
    let coef = m_ice * m_ship * (m_ice + two * m_ship) / (two * total * total);
    Ok(coef * u * u * (r_ice * r_ice - d * d) / (r_ice * r_ice))
}

/// Local ice concentration per cell (mean over a `z × z` window), raised to `beta`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConcentrationImage {
    pub values: Vec<f64>,
    pub kernel: usize,
    pub n_cols: usize,
    pub n_rows: usize,
}

/// Reflect index `i` into `[0, n)` with edge-inclusive mirroring (…, 1, 0 | 0, 1, …).
fn mirror(i: i64, n: usize) -> usize {
    let n = n as i64;
    let period = 2 * n;
    let mut k = i.rem_euclid(period);
    if k >= n {
        k = period - 1 - k;
    }
    k as usize
}

pub fn concentration_penalty(occupancy: &[u8], n_cols: usize, n_rows: usize, z: usize, beta: f64) -> Result<ConcentrationImage> {
    if z == 0 || z % 2 == 0 {
        return Err(IceNavError::ConfigError(format!("kernel size {z} must be odd and positive")));
    }
    if occupancy.len() != n_cols * n_rows {
        return Err(IceNavError::ConfigError("occupancy size does not match dimensions".into()));
    }
    let h = (z / 2) as i64;
    // Horizontal pass then vertical pass; sums of 0/1 are exact in f64.
    let mut horiz = vec![0.0f64; occupancy.len()];
    for iy in 0..n_rows {
        let row = &occupancy[iy * n_cols..(iy + 1) * n_cols];
        for ix in 0..n_cols {
            let mut s = 0u32;
            for k in -h..=h {
                s += row[mirror(ix as i64 + k, n_cols)] as u32;
            }
            horiz[iy * n_cols + ix] = s as f64;
        }
    }
    let norm = (z * z) as f64;
    let mut values = vec![0.0f64; occupancy.len()];
    for iy in 0..n_rows {
        for ix in 0..n_cols {
            let mut s = 0.0;
            for k in -h..=h {
                s += horiz[mirror(iy as i64 + k, n_rows) * n_cols + ix];
            }
            let mean = s / norm;
            values[iy * n_cols + ix] = if beta == 1.0 { mean } else { mean.powf(beta) };
        }
    }
    Ok(ConcentrationImage { values, kernel: z, n_cols, n_rows })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostmapParams {
    pub resolution: f64,
    /// Floe footprints are scaled about their centroid by `1 + scale_factor`.
    pub scale_factor: f64,
    pub kernel: usize,
    pub beta: f64,
}

impl Default for CostmapParams {
    fn default() -> Self {
        Self { resolution: 2.0, scale_factor: 0.1, kernel: 51, beta: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Costmap {
    pub grid: GridSpec,
    pub cost: Vec<f64>,
    pub obstacle_id: Vec<Option<usize>>,
}

impl Costmap {
    pub fn zeros(grid: GridSpec) -> Self {
        Self { grid, cost: vec![0.0; grid.len()], obstacle_id: vec![None; grid.len()] }
    }

    pub fn max_cost(&self) -> f64 {
        self.cost.iter().copied().fold(0.0, f64::max)
    }

    pub fn at(&self, ix: usize, iy: usize) -> f64 {
        self.cost[self.grid.index(ix, iy)]
    }

    /// JSON header describing the grid for the CSV dump.
    pub fn header_json(&self) -> String {
        serde_json::json!({
            "resolution": self.grid.resolution,
            "origin": [self.grid.origin.x, self.grid.origin.y],
            "n_cols": self.grid.n_cols,
            "n_rows": self.grid.n_rows,
            "layout": "rows are y (bottom first), columns are x",
        })
        .to_string()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::with_capacity(self.cost.len() * 8);
        for iy in 0..self.grid.n_rows {
            let row: Vec<String> = (0..self.grid.n_cols).map(|ix| format!("{}", self.at(ix, iy))).collect();
            s.push_str(&row.join(","));
            s.push('\n');
        }
        s
    }
}

/// Builds the per-cell collision cost over `grid` for a ship of mass `m_ship` moving at `u_nom`.
pub fn build_costmap(field: &IceField, grid: &GridSpec, u_nom: f64, m_ship: f64, params: &CostmapParams) -> Result<Costmap> {
    let occ = occupancy_image(field, grid);
    let conc = concentration_penalty(&occ, grid.n_cols, grid.n_rows, params.kernel, params.beta)?;
    let per_floe: Vec<Vec<(usize, f64)>> = field
        .floes
        .par_iter()
        .map(|f| {
            let scaled = f.polygon.scaled_about(f.centroid, 1.0 + params.scale_factor);
            rasterize_polygon(&scaled, grid)
                .into_iter()
                .map(|k| {
                    let (ix, iy) = grid.coords(k);
                    let d = grid.cell_center(ix, iy).dist(f.centroid).min(f.bounding_radius);
                    let c1 = ke_loss(d, f.bounding_radius, f.mass, m_ship, u_nom).unwrap_or(0.0);
                    (k, c1 * conc.values[k])
                })
                .collect()
        })
        .collect();
    let mut map = Costmap::zeros(*grid);
    for (f, cells) in field.floes.iter().zip(per_floe) {
        for (k, c) in cells {
            if c > map.cost[k] || (map.obstacle_id[k].is_none() && c >= map.cost[k]) {
                map.cost[k] = c;
                map.obstacle_id[k] = Some(f.id);
            }
        }
    }
    Ok(map)
}

/// Sum of cell costs over a swath.
pub fn swath_cost(swath: &[usize], map: &Costmap) -> f64 {
    swath.iter().map(|&k| map.cost[k]).sum()
}

/// Smooth cost over the plane. Inside the grid extent it interpolates the costmap
/// (Catmull-Rom on the square root of the cost, squared back), outside it adds a ramp
/// that reaches `boundary_penalty` at `boundary_margin` and keeps rising linearly.
#[derive(Debug, Clone)]
pub struct CostField {
    grid: GridSpec,
    knots: Vec<f64>,
    pub boundary_penalty: f64,
    pub boundary_margin: f64,
}

/// Floor on the cost scale used for the default wall penalty, so an ice-free map still has walls.
pub const MIN_PENALTY_SCALE: f64 = 1e6;

impl CostField {
    pub fn new(map: &Costmap, boundary_penalty: f64, boundary_margin: f64) -> Result<Self> {
        if !(boundary_margin > 0.0) || !(boundary_penalty >= 0.0) {
            return Err(IceNavError::ConfigError("boundary margin must be positive".into()));
        }
        Ok(Self {
            grid: map.grid,
            knots: map.cost.iter().map(|c| c.max(0.0).sqrt()).collect(),
            boundary_penalty,
            boundary_margin,
        })
    }

    /// Default wall settings: ten times the largest cell cost, margin of one ship width.
    pub fn with_defaults(map: &Costmap, ship_width: f64) -> Result<Self> {
        Self::new(map, 10.0 * map.max_cost().max(MIN_PENALTY_SCALE), ship_width)
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    fn knot(&self, ix: i64, iy: i64) -> f64 {
        let cx = mirror(ix, self.grid.n_cols);
        let cy = mirror(iy, self.grid.n_rows);
        self.knots[cy * self.grid.n_cols + cx]
    }

    /// Interpolated sqrt-cost and its gradient at a point inside the grid extent.
    fn interior(&self, p: Point2<f64>) -> (f64, f64, f64) {
        let res = self.grid.resolution;
        let u = (p.x - self.grid.origin.x) / res - 0.5;
        let v = (p.y - self.grid.origin.y) / res - 0.5;
        let (i0, j0) = (u.floor(), v.floor());
        let (wu, du) = catmull_rom(u - i0);
        let (wv, dv) = catmull_rom(v - j0);
        let (i0, j0) = (i0 as i64, j0 as i64);
        let (mut g, mut gx, mut gy) = (0.0, 0.0, 0.0);
        for b in 0..4 {
            let mut row = 0.0;
            let mut row_d = 0.0;
            for a in 0..4 {
                let k = self.knot(i0 - 1 + a as i64, j0 - 1 + b as i64);
                row += wu[a] * k;
                row_d += du[a] * k;
            }
            g += wv[b] * row;
            gx += wv[b] * row_d;
            gy += dv[b] * row;
        }
        (g, gx / res, gy / res)
    }

    /// Value and gradient at `(x, y)`.
    pub fn eval(&self, x: f64, y: f64) -> (f64, [f64; 2]) {
        let (x0, y0) = (self.grid.origin.x, self.grid.origin.y);
        let (x1, y1) = (self.grid.x_max(), self.grid.y_max());
        let qx = x.clamp(x0, x1);
        let qy = y.clamp(y0, y1);
        let (g, gx, gy) = self.interior(Point2::new(qx, qy));
        let mut val = g * g;
        let mut grad = [2.0 * g * gx, 2.0 * g * gy];
        if qx != x {
            grad[0] = 0.0;
        }
        if qy != y {
            grad[1] = 0.0;
        }
        let (ex, ey) = (x - qx, y - qy);
        let d = ex.hypot(ey);
        if d > 0.0 {
            let m = self.boundary_margin;
            let t = d / m;
            let (rho, drho) = if t <= 1.0 { (t * t, 2.0 * t) } else { (2.0 * t - 1.0, 2.0) };
            val += self.boundary_penalty * rho;
            let k = self.boundary_penalty * drho / (m * d);
            grad[0] += k * ex;
            grad[1] += k * ey;
        }
        (val, grad)
    }

    pub fn value(&self, x: f64, y: f64) -> f64 {
        self.eval(x, y).0
    }
}

/// Catmull-Rom weights and their derivatives for taps at offsets -1, 0, 1, 2.
fn catmull_rom(t: f64) -> ([f64; 4], [f64; 4]) {
    let t2 = t * t;
    let t3 = t2 * t;
    (
        [
            0.5 * (-t3 + 2.0 * t2 - t),
            0.5 * (3.0 * t3 - 5.0 * t2 + 2.0),
            0.5 * (-3.0 * t3 + 4.0 * t2 + t),
            0.5 * (t3 - t2),
        ],
        [
            0.5 * (-3.0 * t2 + 4.0 * t - 1.0),
            0.5 * (9.0 * t2 - 10.0 * t),
            0.5 * (-9.0 * t2 + 8.0 * t + 1.0),
            0.5 * (3.0 * t2 - 2.0 * t),
        ],
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ke_loss_edge_cases() {
        assert_eq!(ke_loss(5.0f64, 5.0, 1e5, 6e6, 2.0).unwrap(), 0.0);
        assert_eq!(ke_loss(0.0f64, 5.0, 1e5, 6e6, 0.0).unwrap(), 0.0);
        let v = ke_loss(0.0f64, 5.0, 1e5, 6e6, 2.0).unwrap();
        assert!((v - 3.90e5).abs() / 3.90e5 < 5e-3, "{v}");
        assert!(matches!(ke_loss(6.0f64, 5.0, 1e5, 6e6, 2.0), Err(IceNavError::DomainError(_))));
        assert!(matches!(ke_loss(0.0f64, 0.0, 1e5, 6e6, 2.0), Err(IceNavError::DomainError(_))));
    }

    #[test]
    fn ke_loss_f32() {
        let v = ke_loss(1.0f32, 2.0, 1e5, 6e6, 2.0).unwrap();
        let w = ke_loss(1.0f64, 2.0, 1e5, 6e6, 2.0).unwrap();
        assert!(((v as f64) - w).abs() / w < 1e-5);
    }

    #[test]
    fn corner_single_cell() {
        let mut occ = vec![0u8; 25];
        occ[0] = 1;
        let img = concentration_penalty(&occ, 5, 5, 3, 1.0).unwrap();
        assert!((img.values[0] - 4.0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn uniform_images() {
        let ones = concentration_penalty(&[1u8; 60], 10, 6, 5, 2.5).unwrap();
        assert!(ones.values.iter().all(|&v| v == 1.0));
        let zeros = concentration_penalty(&[0u8; 60], 10, 6, 5, 1.0).unwrap();
        assert!(zeros.values.iter().all(|&v| v == 0.0));
        assert!(concentration_penalty(&[0u8; 60], 10, 6, 4, 1.0).is_err());
    }

    #[test]
    fn kernel_larger_than_image() {
        let mut occ = vec![0u8; 6];
        occ[2] = 1;
        let img = concentration_penalty(&occ, 3, 2, 51, 1.0).unwrap();
        assert!(img.values.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn empty_field_zero_map() {
        let g = GridSpec::new(2.0, 20, 10, Point2::new(0.0, 0.0)).unwrap();
        let m = build_costmap(&IceField::empty(40.0, 20.0), &g, 2.0, 6e6, &CostmapParams::default()).unwrap();
        assert!(m.cost.iter().all(|&c| c == 0.0));
        assert_eq!(swath_cost(&[], &m), 0.0);
    }

    #[test]
    fn far_outside_reaches_penalty() {
        let g = GridSpec::new(2.0, 20, 10, Point2::new(0.0, 0.0)).unwrap();
        let f = CostField::new(&Costmap::zeros(g), 1e6, 18.0).unwrap();
        assert!(f.value(20.0, -36.0) >= 1e6);
        assert!(f.value(20.0, 20.0 + 36.0) >= 1e6);
        assert_eq!(f.value(20.0, 10.0), 0.0);
    }
}
