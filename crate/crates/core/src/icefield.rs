//! Random ice fields: floe size sampling, circle packing, convex floe shapes, occupancy.

use crate::error::{IceNavError, Result};
use crate::geometry::{rasterize_polygon, ConvexPolygon, GridSpec, Point2};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};
use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, TAU};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IceFloe {
    pub id: usize,
    pub polygon: ConvexPolygon<f64>,
    pub thickness: f64,
    pub density: f64,
    pub mass: f64,
    pub area: f64,
    pub centroid: Point2<f64>,
    pub bounding_radius: f64,
}

impl IceFloe {
    pub fn new(id: usize, polygon: ConvexPolygon<f64>, thickness: f64, density: f64) -> Result<Self> {
        let props = polygon.properties()?;
        Ok(Self {
            id,
            mass: density * thickness * props.area,
            area: props.area,
            centroid: props.centroid,
            bounding_radius: props.bounding_radius,
            polygon,
            thickness,
            density,
        })
    }

    /// Same floe moved to a new polygon (rigid motion keeps mass and radius).
    pub fn moved(&self, polygon: ConvexPolygon<f64>) -> Result<Self> {
        let mut f = Self::new(self.id, polygon, self.thickness, self.density)?;
        f.mass = self.mass;
        Ok(f)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IceField {
    pub channel_length: f64,
    pub channel_width: f64,
    pub floes: Vec<IceFloe>,
    pub concentration: f64,
}

impl IceField {
    pub fn new(channel_length: f64, channel_width: f64, floes: Vec<IceFloe>) -> Self {
        let area: f64 = floes.iter().map(|f| f.area).sum();
        let concentration = area / (channel_length * channel_width);
        Self { channel_length, channel_width, floes, concentration }
    }

    pub fn empty(channel_length: f64, channel_width: f64) -> Self {
        Self::new(channel_length, channel_width, Vec::new())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&FieldFile::from(self))?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let file: FieldFile = serde_json::from_str(s)?;
        file.try_into()
    }
}

/// On-disk ice-field layout: floes as vertex lists in meters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FieldFile {
    pub channel: [f64; 2],
    pub thickness: f64,
    pub density: f64,
    pub floes: Vec<Vec<[f64; 2]>>,
}

impl From<&IceField> for FieldFile {
    fn from(f: &IceField) -> Self {
        let (thickness, density) = f
            .floes
            .first()
            .map(|fl| (fl.thickness, fl.density))
            .unwrap_or((DEFAULT_THICKNESS, DEFAULT_DENSITY));
        Self {
            channel: [f.channel_length, f.channel_width],
            thickness,
            density,
            floes: f
                .floes
                .iter()
                .map(|fl| fl.polygon.vertices().iter().map(|p| [p.x, p.y]).collect())
                .collect(),
        }
    }
}

impl TryFrom<FieldFile> for IceField {
    type Error = IceNavError;
    fn try_from(file: FieldFile) -> Result<Self> {
        if !(file.thickness > 0.0 && file.density > 0.0) {
            return Err(IceNavError::ConfigError("thickness and density must be positive".into()));
        }
        let floes = file
            .floes
            .iter()
            .enumerate()
            .map(|(i, vs)| {
                let poly = ConvexPolygon::new(vs.iter().map(|v| Point2::new(v[0], v[1])).collect())?;
                IceFloe::new(i, poly, file.thickness, file.density)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(IceField::new(file.channel[0], file.channel[1], floes))
    }
}

pub const DEFAULT_THICKNESS: f64 = 1.2;
pub const DEFAULT_DENSITY: f64 = 900.0;

/// How a sampled regression value `Y` maps to a floe mass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum MassUnits {
    /// `Y` is the natural log of the mass in kg.
    LogKg,
    /// `Y` is the mass in multiples of the given kg amount.
    KgPerUnit(f64),
}

/// `Y = a + b·X` with `X ~ LogNormal(0, sigma)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MassDistribution {
    pub a: f64,
    pub b: f64,
    pub sigma: f64,
    pub units: MassUnits,
}

impl Default for MassDistribution {
    fn default() -> Self {
        Self { a: 10.21, b: 0.9324, sigma: 0.54, units: MassUnits::LogKg }
    }
}

impl MassDistribution {
    fn validate(&self) -> Result<()> {
        let unit_ok = match self.units {
            MassUnits::LogKg => true,
            MassUnits::KgPerUnit(k) => k > 0.0,
        };
        if !(self.b > 0.0 && self.sigma > 0.0 && unit_ok) || !self.a.is_finite() {
            return Err(IceNavError::ConfigError("mass distribution parameters must be positive".into()));
        }
        Ok(())
    }

    /// Untruncated regression value.
    pub fn sample_raw<R: Rng>(&self, rng: &mut R) -> f64 {
        let x: f64 = LogNormal::new(0.0, self.sigma).expect("sigma validated").sample(rng);
        self.a + self.b * x
    }

    /// Analytic CDF of the untruncated regression value.
    pub fn raw_cdf(&self, y: f64) -> f64 {
        let x = (y - self.a) / self.b;
        if x <= 0.0 {
            return 0.0;
        }
        0.5 * erfc(-x.ln() / (self.sigma * std::f64::consts::SQRT_2))
    }

    pub fn mass_of(&self, y: f64) -> f64 {
        match self.units {
            MassUnits::LogKg => y.exp(),
            MassUnits::KgPerUnit(k) => y * k,
        }
    }
}

/// Complementary error function, Chebyshev fit with fractional error below 1.2e-7.
fn erfc(x: f64) -> f64 {
    let z = x.abs();
    let t = 1.0 / (1.0 + 0.5 * z);
    let r = t
        * (-z * z - 1.26551223
            + t * (1.00002368
                + t * (0.37409196
                    + t * (0.09678418
                        + t * (-0.18628806
                            + t * (0.27886807
                                + t * (-1.13520398 + t * (1.48851587 + t * (-0.82215223 + t * 0.17087277)))))))))
            .exp();
    if x >= 0.0 {
        r
    } else {
        2.0 - r
    }
}

/// Floe size model: mass distribution plus material constants and the allowed
/// effective-width window `sqrt(area)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FloeSizeModel {
    pub dist: MassDistribution,
    pub thickness: f64,
    pub density: f64,
    pub min_width: f64,
    pub max_width: f64,
}

impl FloeSizeModel {
    pub fn full_scale() -> Self {
        Self {
            dist: MassDistribution::default(),
            thickness: DEFAULT_THICKNESS,
            density: DEFAULT_DENSITY,
            min_width: 4.0,
            max_width: 100.0,
        }
    }

    pub fn desk_scale() -> Self {
        Self { min_width: 2.0, max_width: 40.0, ..Self::full_scale() }
    }

    fn validate(&self) -> Result<()> {
        self.dist.validate()?;
        if !(self.thickness > 0.0 && self.density > 0.0 && self.min_width > 0.0 && self.max_width > self.min_width) {
            return Err(IceNavError::ConfigError("invalid floe size model".into()));
        }
        Ok(())
    }
}

impl Default for FloeSizeModel {
    fn default() -> Self {
        Self::desk_scale()
    }
}

fn draw_area<R: Rng>(model: &FloeSizeModel, rng: &mut R) -> f64 {
    loop {
        let mass = model.dist.mass_of(model.dist.sample_raw(rng));
        let area = mass / (model.density * model.thickness);
        let w = area.sqrt();
        if area > 0.0 && w >= model.min_width && w <= model.max_width {
            return area;
        }
    }
}

/// Floe areas (m²) drawn from the size model, rejecting effective widths outside the window.
pub fn sample_floe_sizes(model: &FloeSizeModel, rng_seed: u64, count: usize) -> Result<Vec<f64>> {
    model.validate()?;
    if count == 0 {
        return Err(IceNavError::ConfigError("count must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    Ok((0..count).map(|_| draw_area(model, &mut rng)).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldSpec {
    pub channel_length: f64,
    pub channel_width: f64,
    pub target_concentration: f64,
    pub sizes: FloeSizeModel,
}

impl FieldSpec {
    pub fn desk(target_concentration: f64) -> Self {
        Self {
            channel_length: 400.0,
            channel_width: 80.0,
            target_concentration,
            sizes: FloeSizeModel::desk_scale(),
        }
    }

    pub fn full_scale(target_concentration: f64) -> Self {
        Self {
            channel_length: 1000.0,
            channel_width: 200.0,
            target_concentration,
            sizes: FloeSizeModel::full_scale(),
        }
    }
}

/// Accepted distance from target concentration after removal.
const REMOVAL_BAND: f64 = 0.005;
const PACKING_RETRIES: u64 = 6;
const SHAPE_DRAWS: usize = 3;

/// Generates non-overlapping convex floes covering the channel at the target concentration.
pub fn generate_field(spec: &FieldSpec, rng_seed: u64) -> Result<IceField> {
    spec.sizes.validate()?;
    let (len, wid) = (spec.channel_length, spec.channel_width);
    if !(len > 0.0 && wid > 0.0) {
        return Err(IceNavError::ConfigError("channel dimensions must be positive".into()));
    }
    let target = spec.target_concentration;
    if !(0.0..=0.6).contains(&target) {
        return Err(IceNavError::ConfigError("target concentration must lie in [0, 0.6]".into()));
    }
    if target == 0.0 {
        return Ok(IceField::empty(len, wid));
    }
    let mut best_full = 0.0;
    for attempt in 0..PACKING_RETRIES {
        let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
        rng.set_stream(attempt);
        let floes = pack_floes(spec, &mut rng);
        let channel_area = len * wid;
        let full: f64 = floes.iter().map(|f| f.area).sum::<f64>() / channel_area;
        best_full = f64::max(best_full, full);
        if full < target - REMOVAL_BAND {
            continue;
        }
        if let Some(kept) = remove_to_target(floes, target, channel_area, &mut rng) {
            let floes = kept
                .into_iter()
                .enumerate()
                .map(|(i, mut f)| {
                    f.id = i;
                    f
                })
                .collect();
            return Ok(IceField::new(len, wid, floes));
        }
    }
    Err(IceNavError::PackingFailure(format!(
        "best packing reached concentration {best_full:.3}, target {target:.3}"
    )))
}

fn remove_to_target<R: Rng>(mut floes: Vec<IceFloe>, target: f64, channel_area: f64, rng: &mut R) -> Option<Vec<IceFloe>> {
    let mut order: Vec<usize> = (0..floes.len()).collect();
    order.shuffle(rng);
    let mut keep = vec![true; floes.len()];
    let mut covered: f64 = floes.iter().map(|f| f.area).sum();
    for &i in &order {
        if covered / channel_area <= target + REMOVAL_BAND {
            break;
        }
        if (covered - floes[i].area) / channel_area >= target - REMOVAL_BAND {
            keep[i] = false;
            covered -= floes[i].area;
        }
    }
    let c = covered / channel_area;
    if (c - target).abs() > REMOVAL_BAND {
        return None;
    }
    let mut k = keep.iter();
    floes.retain(|_| *k.next().unwrap());
    Some(floes)
}

/// Floe shape normalized so its minimum enclosing circle is the unit circle at the origin.
struct UnitShape {
    vertices: Vec<Point2<f64>>,
    fill: f64,
}

fn pack_floes<R: Rng>(spec: &FieldSpec, rng: &mut R) -> Vec<IceFloe> {
    let (len, wid) = (spec.channel_length, spec.channel_width);
    let channel_area = len * wid;
    // Pool of floes (area + shape) largest first; total circle area well above the channel.
    let mut pool: Vec<(f64, UnitShape, f64)> = Vec::new();
    let mut circle_area = 0.0;
    while circle_area < 1.6 * channel_area {
        let area = draw_area(&spec.sizes, rng);
        let shape = best_unit_shape(rng);
        let radius = (area / (shape.fill * PI)).sqrt();
        if 2.0 * radius > wid.min(len) {
            continue;
        }
        circle_area += PI * radius * radius;
        pool.push((area, shape, radius));
    }
    pool.sort_by(|a, b| b.2.total_cmp(&a.2));
    let r_max = pool.first().map_or(1.0, |p| p.2);
    let mut packer = CirclePacker::new(len, wid, r_max);
    let mut floes = Vec::new();
    for (_, shape, radius) in pool {
        if let Some(center) = packer.place(radius, rng) {
            let rot = rng.gen::<f64>() * TAU;
            let (s, c) = rot.sin_cos();
            let verts = shape
                .vertices
                .iter()
                .map(|v| Point2::new(center.x + radius * (c * v.x - s * v.y), center.y + radius * (s * v.x + c * v.y)))
                .collect();
            let poly = ConvexPolygon::from_ccw_unchecked(verts);
            if let Ok(f) = IceFloe::new(floes.len(), poly, spec.sizes.thickness, spec.sizes.density) {
                floes.push(f);
            }
        }
    }
    floes
}

fn best_unit_shape<R: Rng>(rng: &mut R) -> UnitShape {
    let n = rng.gen_range(5..=20);
    let mut best: Option<UnitShape> = None;
    let mut draws = 0;
    while draws < SHAPE_DRAWS {
        let poly = match valtr_polygon(n, rng) {
            Some(p) => p,
            None => continue,
        };
        draws += 1;
        let (c, r) = min_enclosing_circle(poly.vertices());
        // Slightly inside the unit circle so rounding never pushes a vertex past it.
        let k = (1.0 - 1e-12) / r;
        let vertices: Vec<_> = poly.vertices().iter().map(|&v| (v - c) * k).collect();
        let fill = crate::geometry::signed_area(&vertices) / PI;
        if best.as_ref().map_or(true, |b| fill > b.fill) {
            best = Some(UnitShape { vertices, fill });
        }
    }
    best.expect("at least one draw")
}

/// Random convex polygon with `n` vertices (Valtr's construction). Returns `None` when
/// the draw degenerates (collinear edges merged below 5 vertices).
pub fn valtr_polygon<R: Rng>(n: usize, rng: &mut R) -> Option<ConvexPolygon<f64>> {
    let split = |rng: &mut R| -> Vec<f64> {
        let mut v: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
        v.sort_by(f64::total_cmp);
        let (lo, hi) = (v[0], v[n - 1]);
        let mut comps = Vec::with_capacity(n);
        let (mut last_a, mut last_b) = (lo, lo);
        for &x in &v[1..n - 1] {
            if rng.gen::<bool>() {
                comps.push(x - last_a);
                last_a = x;
            } else {
                comps.push(last_b - x);
                last_b = x;
            }
        }
        comps.push(hi - last_a);
        comps.push(last_b - hi);
        comps
    };
    let xs = split(rng);
    let mut ys = split(rng);
    ys.shuffle(rng);
    let mut vecs: Vec<Point2<f64>> = xs.iter().zip(&ys).map(|(&x, &y)| Point2::new(x, y)).collect();
    vecs.sort_by(|a, b| a.y.atan2(a.x).total_cmp(&b.y.atan2(b.x)));
    let mut p = Point2::new(0.0, 0.0);
    let mut pts = Vec::with_capacity(n);
    for v in vecs {
        pts.push(p);
        p = p + v;
    }
    let poly = ConvexPolygon::new(pts).ok()?;
    (5..=20).contains(&poly.len()).then_some(poly)
}

/// Smallest circle containing all points (incremental Welzl, exact for small inputs).
pub fn min_enclosing_circle(pts: &[Point2<f64>]) -> (Point2<f64>, f64) {
    let inside = |c: Point2<f64>, r: f64, p: Point2<f64>| p.dist(c) <= r * (1.0 + 1e-12) + 1e-12;
    let mut c = pts[0];
    let mut r = 0.0;
    for i in 1..pts.len() {
        if inside(c, r, pts[i]) {
            continue;
        }
        c = pts[i];
        r = 0.0;
        for j in 0..i {
            if inside(c, r, pts[j]) {
                continue;
            }
            c = (pts[i] + pts[j]) * 0.5;
            r = pts[i].dist(c);
            for k in 0..j {
                if inside(c, r, pts[k]) {
                    continue;
                }
                if let Some(cc) = circumcenter(pts[i], pts[j], pts[k]) {
                    c = cc;
                    r = pts[i].dist(c);
                }
            }
        }
    }
    let r = pts.iter().map(|p| p.dist(c)).fold(0.0, f64::max);
    (c, r)
}

fn circumcenter(a: Point2<f64>, b: Point2<f64>, c: Point2<f64>) -> Option<Point2<f64>> {
    let (bx, by) = (b.x - a.x, b.y - a.y);
    let (cx, cy) = (c.x - a.x, c.y - a.y);
    let d = 2.0 * (bx * cy - by * cx);
    if d.abs() < 1e-300 {
        return None;
    }
    let b2 = bx * bx + by * by;
    let c2 = cx * cx + cy * cy;
    Some(Point2::new(a.x + (cy * b2 - by * c2) / d, a.y + (bx * c2 - cx * b2) / d))
}

/// Random-anchored contact packing of circles inside `[0, len] × [0, wid]`.
struct CirclePacker {
    len: f64,
    wid: f64,
    cell: f64,
    nx: usize,
    ny: usize,
    buckets: Vec<Vec<usize>>,
    circles: Vec<(Point2<f64>, f64)>,
    r_max: f64,
}

const ANCHOR_TRIES: usize = 24;

impl CirclePacker {
    fn new(len: f64, wid: f64, r_max: f64) -> Self {
        let cell = (2.0 * r_max).max(1.0);
        let nx = (len / cell).ceil() as usize + 1;
        let ny = (wid / cell).ceil() as usize + 1;
        Self { len, wid, cell, nx, ny, buckets: vec![Vec::new(); nx * ny], circles: Vec::new(), r_max }
    }

    fn bucket_range(&self, p: Point2<f64>, reach: f64) -> (usize, usize, usize, usize) {
        let clampi = |v: f64, n: usize| (v.floor().max(0.0) as usize).min(n - 1);
        (
            clampi((p.x - reach) / self.cell, self.nx),
            clampi((p.x + reach) / self.cell, self.nx),
            clampi((p.y - reach) / self.cell, self.ny),
            clampi((p.y + reach) / self.cell, self.ny),
        )
    }

    fn neighbors(&self, p: Point2<f64>, reach: f64, out: &mut Vec<usize>) {
        out.clear();
        let (x0, x1, y0, y1) = self.bucket_range(p, reach);
        for by in y0..=y1 {
            for bx in x0..=x1 {
                out.extend_from_slice(&self.buckets[by * self.nx + bx]);
            }
        }
    }

    fn fits(&self, p: Point2<f64>, r: f64, scratch: &mut Vec<usize>) -> bool {
        let tol = 1e-9;
        if p.x < r - tol || p.x > self.len - r + tol || p.y < r - tol || p.y > self.wid - r + tol {
            return false;
        }
        self.neighbors(p, r + self.r_max, scratch);
        scratch.iter().all(|&j| {
            let (c, rj) = self.circles[j];
            c.dist(p) >= r + rj - tol
        })
    }

    fn insert(&mut self, p: Point2<f64>, r: f64) {
        let bx = ((p.x / self.cell).floor().max(0.0) as usize).min(self.nx - 1);
        let by = ((p.y / self.cell).floor().max(0.0) as usize).min(self.ny - 1);
        self.buckets[by * self.nx + bx].push(self.circles.len());
        self.circles.push((p, r));
    }

    fn place<R: Rng>(&mut self, r: f64, rng: &mut R) -> Option<Point2<f64>> {
        if 2.0 * r > self.wid || 2.0 * r > self.len {
            return None;
        }
        let mut near = Vec::new();
        let mut scratch = Vec::new();
        let mut cands = Vec::new();
        for _ in 0..ANCHOR_TRIES {
            let anchor = Point2::new(rng.gen_range(r..=self.len - r), rng.gen_range(r..=self.wid - r));
            let reach = 2.0 * r + 2.0 * self.r_max;
            self.neighbors(anchor, reach, &mut near);
            near.retain(|&j| {
                let (c, rj) = self.circles[j];
                c.dist(anchor) <= rj + 3.0 * r + 0.5 * self.r_max
            });
            cands.clear();
            self.tangent_candidates(&near, r, anchor, &mut cands);
            let mut best: Option<(f64, Point2<f64>)> = None;
            for &p in &cands {
                let d = p.dist(anchor);
                if best.map_or(true, |(bd, _)| d < bd) && self.fits(p, r, &mut scratch) {
                    best = Some((d, p));
                }
            }
            if best.is_none() && self.fits(anchor, r, &mut scratch) {
                best = Some((0.0, anchor));
            }
            if let Some((_, p)) = best {
                self.insert(p, r);
                return Some(p);
            }
        }
        None
    }

    fn tangent_candidates(&self, near: &[usize], r: f64, anchor: Point2<f64>, out: &mut Vec<Point2<f64>>) {
        // Wall lines as (normal, offset): center must satisfy n·p = offset.
        let walls = [
            (Point2::new(0.0, 1.0), r),
            (Point2::new(0.0, -1.0), r - self.wid),
            (Point2::new(1.0, 0.0), r),
            (Point2::new(-1.0, 0.0), r - self.len),
        ];
        for (a, &i) in near.iter().enumerate() {
            let (ci, ri) = self.circles[i];
            for &j in &near[a + 1..] {
                let (cj, rj) = self.circles[j];
                circle_circle(ci, ri + r, cj, rj + r, out);
            }
            for (n, off) in walls {
                circle_line(ci, ri + r, n, off, out);
            }
            // Touch one circle in the direction of the anchor.
            let d = anchor - ci;
            let dn = d.norm();
            if dn > 0.0 {
                out.push(ci + d * ((ri + r) / dn));
            }
        }
        // Wall corners and wall points nearest the anchor.
        for (n, off) in walls {
            let t = n.dot(anchor) - off;
            out.push(anchor - n * t);
        }
    }
}

fn circle_circle(c0: Point2<f64>, r0: f64, c1: Point2<f64>, r1: f64, out: &mut Vec<Point2<f64>>) {
    let d = c1 - c0;
    let dd = d.norm();
    if dd <= 0.0 || dd > r0 + r1 || dd < (r0 - r1).abs() {
        return;
    }
    let a = (r0 * r0 - r1 * r1 + dd * dd) / (2.0 * dd);
    let h = (r0 * r0 - a * a).max(0.0).sqrt();
    let m = c0 + d * (a / dd);
    let perp = d.perp() * (h / dd);
    out.push(m + perp);
    out.push(m - perp);
}

fn circle_line(c: Point2<f64>, rad: f64, n: Point2<f64>, off: f64, out: &mut Vec<Point2<f64>>) {
    let t = off - n.dot(c);
    if t.abs() > rad {
        return;
    }
    let foot = c + n * t;
    let h = (rad * rad - t * t).sqrt();
    let dir = n.perp();
    out.push(foot + dir * h);
    out.push(foot - dir * h);
}

/// Binary image: 1 where the cell overlaps any floe with positive area.
pub fn occupancy_image(field: &IceField, grid: &GridSpec) -> Vec<u8> {
    let mut img = vec![0u8; grid.len()];
    for f in &field.floes {
        for c in rasterize_polygon(&f.polygon, grid) {
            img[c] = 1;
        }
    }
    img
}
