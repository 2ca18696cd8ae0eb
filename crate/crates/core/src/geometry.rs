//! Planar primitives: points, poses, convex polygons, grids, rasterization and swaths.

use crate::error::{IceNavError, Result};
use crate::scalar::Real;
use serde::{Deserialize, Serialize};
use std::ops::{Add, Mul, Neg, Sub};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point2<T> {
    pub x: T,
    pub y: T,
}

impl<T: Real> Point2<T> {
    pub fn new(x: T, y: T) -> Self {
        Self { x, y }
    }

    pub fn dot(self, o: Self) -> T {
        self.x * o.x + self.y * o.y
    }

    /// z component of the 3D cross product.
    pub fn cross(self, o: Self) -> T {
        self.x * o.y - self.y * o.x
    }

    pub fn norm(self) -> T {
        self.x.hypot(self.y)
    }

    pub fn norm_sq(self) -> T {
        self.dot(self)
    }

    pub fn dist(self, o: Self) -> T {
        (self - o).norm()
    }

    /// Rotates counter-clockwise by `angle`.
    pub fn rotate(self, angle: T) -> Self {
        let (s, c) = angle.sin_cos();
        Self::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }

    /// Left-hand perpendicular.
    pub fn perp(self) -> Self {
        Self::new(-self.y, self.x)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl<T: Real> Add for Point2<T> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self::new(self.x + o.x, self.y + o.y)
    }
}

impl<T: Real> Sub for Point2<T> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self::new(self.x - o.x, self.y - o.y)
    }
}

impl<T: Real> Mul<T> for Point2<T> {
    type Output = Self;
    fn mul(self, k: T) -> Self {
        Self::new(self.x * k, self.y * k)
    }
}

impl<T: Real> Neg for Point2<T> {
    type Output = Self;
    fn neg(self) -> Self {
        Self::new(-self.x, -self.y)
    }
}

/// Wraps an angle into `[0, 2π)`.
pub fn wrap_2pi<T: Real>(a: T) -> T {
    let two_pi = T::TAU();
    let mut w = a % two_pi;
    if w < T::zero() {
        w = w + two_pi;
    }
    if w >= two_pi {
        w = w - two_pi;
    }
    w
}

/// Wraps an angle into `(-π, π]`.
pub fn wrap_pi<T: Real>(a: T) -> T {
    let w = wrap_2pi(a);
    if w > T::PI() {
        w - T::TAU()
    } else {
        w
    }
}

/// Ship configuration in the inertial frame. `psi` is kept in `[0, 2π)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose<T> {
    pub x: T,
    pub y: T,
    pub psi: T,
}

impl<T: Real> Pose<T> {
    pub fn new(x: T, y: T, psi: T) -> Self {
        Self { x, y, psi: wrap_2pi(psi) }
    }

    pub fn position(&self) -> Point2<T> {
        Point2::new(self.x, self.y)
    }

    /// Maps a body-frame point into the inertial frame.
    pub fn to_world(&self, p: Point2<T>) -> Point2<T> {
        p.rotate(self.psi) + self.position()
    }

    /// Maps an inertial point into the body frame.
    pub fn to_body(&self, p: Point2<T>) -> Point2<T> {
        (p - self.position()).rotate(-self.psi)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvexPolygon<T> {
    vertices: Vec<Point2<T>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolygonProperties<T> {
    pub area: T,
    pub centroid: Point2<T>,
    pub bounding_radius: T,
}

impl<T: Real> ConvexPolygon<T> {
    /// Builds a polygon from vertices that are already convex, in either orientation.
    /// Near-duplicate and collinear vertices are dropped.
    pub fn new(vertices: Vec<Point2<T>>) -> Result<Self> {
        if vertices.iter().any(|p| !p.is_finite()) {
            return Err(IceNavError::DegenerateInput("non-finite vertex".into()));
        }
        let mut v = dedup_ring(vertices, T::lit(1e-9));
        if v.len() < 3 {
            return Err(IceNavError::DegenerateInput("fewer than 3 distinct vertices".into()));
        }
        if signed_area(&v) < T::zero() {
            v.reverse();
        }
        let v = drop_collinear(v);
        if v.len() < 3 || signed_area(&v) <= T::zero() {
            return Err(IceNavError::DegenerateInput("zero-area polygon".into()));
        }
        let n = v.len();
        for i in 0..n {
            let a = v[i];
            let b = v[(i + 1) % n];
            let c = v[(i + 2) % n];
            if (b - a).cross(c - b) < T::zero() {
                return Err(IceNavError::DegenerateInput("polygon is not convex".into()));
            }
        }
        Ok(Self { vertices: v })
    }

    /// Wraps vertices without validation; the caller guarantees a CCW convex ring.
    pub(crate) fn from_ccw_unchecked(vertices: Vec<Point2<T>>) -> Self {
        Self { vertices }
    }

    pub fn vertices(&self) -> &[Point2<T>] {
        &self.vertices
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn edges(&self) -> impl Iterator<Item = (Point2<T>, Point2<T>)> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |i| (self.vertices[i], self.vertices[(i + 1) % n]))
    }

    pub fn area(&self) -> T {
        signed_area(&self.vertices)
    }

    pub fn properties(&self) -> Result<PolygonProperties<T>> {
        polygon_properties(self)
    }

    pub fn translate(&self, d: Point2<T>) -> Self {
        Self::from_ccw_unchecked(self.vertices.iter().map(|&p| p + d).collect())
    }

    /// Rotates about `pivot` then translates by `d`.
    pub fn rotate_translate(&self, pivot: Point2<T>, angle: T, d: Point2<T>) -> Self {
        let (s, c) = angle.sin_cos();
        Self::from_ccw_unchecked(
            self.vertices
                .iter()
                .map(|&p| {
                    let q = p - pivot;
                    Point2::new(c * q.x - s * q.y, s * q.x + c * q.y) + pivot + d
                })
                .collect(),
        )
    }

    /// Places a body-frame outline at `pose`.
    pub fn transformed(&self, pose: &Pose<T>) -> Self {
        let (s, c) = pose.psi.sin_cos();
        Self::from_ccw_unchecked(
            self.vertices
                .iter()
                .map(|p| Point2::new(c * p.x - s * p.y + pose.x, s * p.x + c * p.y + pose.y))
                .collect(),
        )
    }

    /// Uniform scaling about `center`; `factor` must be positive.
    pub fn scaled_about(&self, center: Point2<T>, factor: T) -> Self {
        Self::from_ccw_unchecked(
            self.vertices
                .iter()
                .map(|&p| center + (p - center) * factor)
                .collect(),
        )
    }

    pub fn contains(&self, p: Point2<T>) -> bool {
        self.edges().all(|(a, b)| (b - a).cross(p - a) >= T::zero())
    }

    pub fn bounds(&self) -> (Point2<T>, Point2<T>) {
        let mut lo = self.vertices[0];
        let mut hi = self.vertices[0];
        for p in &self.vertices[1..] {
            lo.x = lo.x.min(p.x);
            lo.y = lo.y.min(p.y);
            hi.x = hi.x.max(p.x);
            hi.y = hi.y.max(p.y);
        }
        (lo, hi)
    }

    /// Area of the intersection with another convex polygon.
    pub fn intersection_area(&self, other: &Self) -> T {
        let mut ring = self.vertices.clone();
        for (a, b) in other.edges() {
            let n = (b - a).perp();
            ring = clip_half_plane(&ring, n, n.dot(a));
            if ring.len() < 3 {
                return T::zero();
            }
        }
        signed_area(&ring).max(T::zero())
    }

    /// Width of the shadow cast onto a line perpendicular to `dir`.
    pub fn projected_width(&self, dir: Point2<T>) -> T {
        let n = dir.perp();
        let len = n.norm();
        if len == T::zero() {
            return T::zero();
        }
        let mut lo = T::infinity();
        let mut hi = T::neg_infinity();
        for p in &self.vertices {
            let d = p.dot(n) / len;
            lo = lo.min(d);
            hi = hi.max(d);
        }
        hi - lo
    }
}

fn dedup_ring<T: Real>(v: Vec<Point2<T>>, tol: T) -> Vec<Point2<T>> {
    let mut out: Vec<Point2<T>> = Vec::with_capacity(v.len());
    for p in v {
        if out.last().map_or(true, |q| q.dist(p) > tol) {
            out.push(p);
        }
    }
    while out.len() > 1 && out[0].dist(*out.last().unwrap()) <= tol {
        out.pop();
    }
    out
}

fn drop_collinear<T: Real>(v: Vec<Point2<T>>) -> Vec<Point2<T>> {
    let mut v = v;
    loop {
        let n = v.len();
        if n < 3 {
            return v;
        }
        let mut removed = false;
        for i in 0..n {
            let a = v[(i + n - 1) % n];
            let b = v[i];
            let c = v[(i + 1) % n];
            let scale = (b - a).norm() * (c - b).norm();
            if (b - a).cross(c - b).abs() <= T::lit(1e-12) * scale.max(T::lit(1e-300)) {
                v.remove(i);
                removed = true;
                break;
            }
        }
        if !removed {
            return v;
        }
    }
}

pub fn signed_area<T: Real>(v: &[Point2<T>]) -> T {
    let n = v.len();
    if n < 3 {
        return T::zero();
    }
    let mut acc = T::zero();
    for i in 0..n {
        acc = acc + v[i].cross(v[(i + 1) % n]);
    }
    acc * T::lit(0.5)
}

/// Sutherland–Hodgman step: keeps the part of `ring` where `n·p >= c`.
pub fn clip_half_plane<T: Real>(ring: &[Point2<T>], n: Point2<T>, c: T) -> Vec<Point2<T>> {
    let mut out = Vec::with_capacity(ring.len() + 2);
    let k = ring.len();
    for i in 0..k {
        let p = ring[i];
        let q = ring[(i + 1) % k];
        let dp = n.dot(p) - c;
        let dq = n.dot(q) - c;
        let pin = dp >= T::zero();
        let qin = dq >= T::zero();
        if pin {
            out.push(p);
        }
        if pin != qin {
            let t = dp / (dp - dq);
            out.push(p + (q - p) * t);
        }
    }
    out
}

/// Convex hull by monotone chain. Returns a CCW polygon without collinear vertices.
pub fn convex_hull<T: Real>(points: &[Point2<T>]) -> Result<ConvexPolygon<T>> {
    let mut pts: Vec<Point2<T>> = points.iter().copied().filter(|p| p.is_finite()).collect();
    if pts.len() < 3 {
        return Err(IceNavError::DegenerateInput("need at least 3 points".into()));
    }
    pts.sort_by(|a, b| a.x.partial_cmp(&b.x).unwrap().then(a.y.partial_cmp(&b.y).unwrap()));
    pts.dedup();
    let turn = |o: Point2<T>, a: Point2<T>, b: Point2<T>| (a - o).cross(b - o);
    let mut lower: Vec<Point2<T>> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && turn(lower[lower.len() - 2], lower[lower.len() - 1], p) <= T::zero() {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<Point2<T>> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && turn(upper[upper.len() - 2], upper[upper.len() - 1], p) <= T::zero() {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    if lower.len() < 3 || signed_area(&lower) <= T::zero() {
        return Err(IceNavError::DegenerateInput("points are collinear".into()));
    }
    ConvexPolygon::new(lower)
}

/// Shoelace area, area-weighted centroid and max vertex distance from the centroid.
pub fn polygon_properties<T: Real>(p: &ConvexPolygon<T>) -> Result<PolygonProperties<T>> {
    let v = p.vertices();
    let n = v.len();
    let mut a2 = T::zero();
    let mut cx = T::zero();
    let mut cy = T::zero();
    // Offset by the first vertex to limit cancellation far from the origin.
    let o = v[0];
    for i in 0..n {
        let p0 = v[i] - o;
        let p1 = v[(i + 1) % n] - o;
        let w = p0.cross(p1);
        a2 = a2 + w;
        cx = cx + (p0.x + p1.x) * w;
        cy = cy + (p0.y + p1.y) * w;
    }
    if a2 <= T::zero() {
        return Err(IceNavError::DegenerateInput("zero-area polygon".into()));
    }
    let three = T::lit(3.0);
    let centroid = Point2::new(cx / (three * a2), cy / (three * a2)) + o;
    let bounding_radius = v.iter().map(|q| q.dist(centroid)).fold(T::zero(), T::max);
    Ok(PolygonProperties { area: a2 * T::lit(0.5), centroid, bounding_radius })
}

/// Ship outline in the body frame, bow along +x.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShipFootprint {
    pub outline: ConvexPolygon<f64>,
    pub length: f64,
    pub width: f64,
}

impl ShipFootprint {
    pub fn new(outline: ConvexPolygon<f64>) -> Result<Self> {
        if !outline.contains(Point2::new(0.0, 0.0)) {
            return Err(IceNavError::ConfigError("footprint must contain the body origin".into()));
        }
        let (lo, hi) = outline.bounds();
        if hi.x <= 0.0 {
            return Err(IceNavError::ConfigError("bow must point along +x".into()));
        }
        Ok(Self { outline, length: hi.x - lo.x, width: hi.y - lo.y })
    }

    /// Rectangular hull with a triangular bow over the forward `bow` meters.
    pub fn with_bow(length: f64, width: f64, bow: f64) -> Result<Self> {
        let half_l = 0.5 * length;
        let half_w = 0.5 * width;
        let shoulder = half_l - bow;
        let outline = ConvexPolygon::new(vec![
            Point2::new(-half_l, -half_w),
            Point2::new(shoulder, -half_w),
            Point2::new(half_l, 0.0),
            Point2::new(shoulder, half_w),
            Point2::new(-half_l, half_w),
        ])?;
        Self::new(outline)
    }

    pub fn at(&self, pose: &Pose<f64>) -> ConvexPolygon<f64> {
        self.outline.transformed(pose)
    }
}

impl Default for ShipFootprint {
    fn default() -> Self {
        Self::with_bow(76.2, 18.0, 15.0).expect("default footprint is valid")
    }
}

/// Uniform grid. Cell `(ix, iy)` spans `[origin.x + ix·res, origin.x + (ix+1)·res]` in x
/// and likewise in y. Linear index is row-major: `iy * n_cols + ix`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub resolution: f64,
    pub n_rows: usize,
    pub n_cols: usize,
    pub origin: Point2<f64>,
}

/// Positive-overlap tolerance for rasterization, in meters.
const OVERLAP_EPS: f64 = 1e-9;

impl GridSpec {
    pub fn new(resolution: f64, n_cols: usize, n_rows: usize, origin: Point2<f64>) -> Result<Self> {
        if !(resolution > 0.0) || !resolution.is_finite() {
            return Err(IceNavError::ConfigError("grid resolution must be positive".into()));
        }
        if n_cols == 0 || n_rows == 0 {
            return Err(IceNavError::ConfigError("grid must have at least one cell".into()));
        }
        Ok(Self { resolution, n_rows, n_cols, origin })
    }

    /// Smallest grid with resolution `res` covering `[x0, x1] × [y0, y1]`, anchored at `(x0, y0)`.
    pub fn covering(res: f64, x0: f64, x1: f64, y0: f64, y1: f64) -> Result<Self> {
        let nx = ((x1 - x0) / res - 1e-9).ceil().max(1.0) as usize;
        let ny = ((y1 - y0) / res - 1e-9).ceil().max(1.0) as usize;
        Self::new(res, nx, ny, Point2::new(x0, y0))
    }

    pub fn len(&self) -> usize {
        self.n_rows * self.n_cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, ix: usize, iy: usize) -> usize {
        iy * self.n_cols + ix
    }

    pub fn coords(&self, idx: usize) -> (usize, usize) {
        (idx % self.n_cols, idx / self.n_cols)
    }

    pub fn cell_center(&self, ix: usize, iy: usize) -> Point2<f64> {
        Point2::new(
            self.origin.x + (ix as f64 + 0.5) * self.resolution,
            self.origin.y + (iy as f64 + 0.5) * self.resolution,
        )
    }

    /// Cell containing `p` as signed indices (may lie outside the grid).
    pub fn cell_of(&self, p: Point2<f64>) -> (i64, i64) {
        (
            ((p.x - self.origin.x) / self.resolution).floor() as i64,
            ((p.y - self.origin.y) / self.resolution).floor() as i64,
        )
    }

    pub fn contains_cell(&self, ix: i64, iy: i64) -> bool {
        ix >= 0 && iy >= 0 && (ix as usize) < self.n_cols && (iy as usize) < self.n_rows
    }

    pub fn x_max(&self) -> f64 {
        self.origin.x + self.n_cols as f64 * self.resolution
    }

    pub fn y_max(&self) -> f64 {
        self.origin.y + self.n_rows as f64 * self.resolution
    }
}

/// Calls `f(ix, iy)` for every grid cell (possibly outside the grid) that overlaps `p`
/// with positive area.
pub fn for_each_overlapping_cell(p: &ConvexPolygon<f64>, res: f64, origin: Point2<f64>, mut f: impl FnMut(i64, i64)) {
    let (lo, hi) = p.bounds();
    let ix0 = ((lo.x - origin.x) / res).floor() as i64;
    let ix1 = ((hi.x - origin.x) / res).ceil() as i64;
    for ix in ix0..ix1 {
        let x0 = origin.x + ix as f64 * res;
        let x1 = x0 + res;
        if hi.x - x0 <= OVERLAP_EPS || x1 - lo.x <= OVERLAP_EPS {
            continue;
        }
        let (ymin, ymax) = match strip_y_range(p.vertices(), x0, x1) {
            Some(r) => r,
            None => continue,
        };
        let iy0 = ((ymin - origin.y) / res).floor() as i64;
        let iy1 = ((ymax - origin.y) / res).ceil() as i64;
        for iy in iy0..iy1 {
            let y0 = origin.y + iy as f64 * res;
            let y1 = y0 + res;
            if ymax - y0 > OVERLAP_EPS && y1 - ymin > OVERLAP_EPS {
                f(ix, iy);
            }
        }
    }
}

/// y-extent of the polygon restricted to the vertical strip `x0 <= x <= x1`.
fn strip_y_range(v: &[Point2<f64>], x0: f64, x1: f64) -> Option<(f64, f64)> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let n = v.len();
    let mut take = |y: f64| {
        lo = lo.min(y);
        hi = hi.max(y);
    };
    for i in 0..n {
        let a = v[i];
        let b = v[(i + 1) % n];
        if a.x >= x0 && a.x <= x1 {
            take(a.y);
        }
        if a.x != b.x {
            for xc in [x0, x1] {
                if (a.x < xc && b.x > xc) || (a.x > xc && b.x < xc) {
                    let t = (xc - a.x) / (b.x - a.x);
                    take(a.y + t * (b.y - a.y));
                }
            }
        }
    }
    if lo <= hi {
        Some((lo, hi))
    } else {
        None
    }
}

/// Cells (linear indices, sorted) whose square overlaps `p` with positive area.
pub fn rasterize_polygon(p: &ConvexPolygon<f64>, grid: &GridSpec) -> Vec<usize> {
    let mut out = Vec::new();
    for_each_overlapping_cell(p, grid.resolution, grid.origin, |ix, iy| {
        if grid.contains_cell(ix, iy) {
            out.push(grid.index(ix as usize, iy as usize));
        }
    });
    out.sort_unstable();
    out
}

/// Arc-length parameterized sequence of poses.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PlannedPath {
    pub poses: Vec<Pose<f64>>,
    pub s: Vec<f64>,
}

impl PlannedPath {
    /// Builds a path from poses, computing cumulative chord length.
    pub fn from_poses(poses: Vec<Pose<f64>>) -> Self {
        let mut s = Vec::with_capacity(poses.len());
        let mut acc = 0.0;
        for (i, p) in poses.iter().enumerate() {
            if i > 0 {
                acc += p.position().dist(poses[i - 1].position());
            }
            s.push(acc);
        }
        Self { poses, s }
    }

    pub fn length(&self) -> f64 {
        self.s.last().copied().unwrap_or(0.0)
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    /// Pose at arc length `s`, clamped to the ends. Heading is interpolated on the circle.
    pub fn sample(&self, s: f64) -> Pose<f64> {
        let n = self.poses.len();
        if n == 1 || s <= 0.0 {
            return self.poses[0];
        }
        if s >= self.length() {
            return self.poses[n - 1];
        }
        let k = self.s.partition_point(|&v| v <= s).clamp(1, n - 1);
        let (s0, s1) = (self.s[k - 1], self.s[k]);
        let t = if s1 > s0 { (s - s0) / (s1 - s0) } else { 0.0 };
        interpolate_pose(&self.poses[k - 1], &self.poses[k], t)
    }

    /// Closest point on the polyline: returns (arc length, distance).
    pub fn project(&self, p: Point2<f64>) -> (f64, f64) {
        let mut best = (0.0, f64::INFINITY);
        if self.poses.len() == 1 {
            return (0.0, self.poses[0].position().dist(p));
        }
        for k in 1..self.poses.len() {
            let a = self.poses[k - 1].position();
            let b = self.poses[k].position();
            let ab = b - a;
            let l2 = ab.norm_sq();
            let t = if l2 > 0.0 { ((p - a).dot(ab) / l2).clamp(0.0, 1.0) } else { 0.0 };
            let d = (a + ab * t).dist(p);
            if d < best.1 {
                best = (self.s[k - 1] + t * (self.s[k] - self.s[k - 1]), d);
            }
        }
        best
    }

    /// Resamples at uniform arc-length spacing no larger than `max_step`.
    pub fn resampled(&self, max_step: f64) -> Self {
        let len = self.length();
        let n = ((len / max_step).ceil() as usize).max(1);
        let poses = (0..=n).map(|i| self.sample(len * i as f64 / n as f64)).collect();
        Self::from_poses(poses)
    }
}

pub fn interpolate_pose(a: &Pose<f64>, b: &Pose<f64>, t: f64) -> Pose<f64> {
    let dpsi = wrap_pi(b.psi - a.psi);
    Pose::new(a.x + t * (b.x - a.x), a.y + t * (b.y - a.y), a.psi + t * dpsi)
}

/// Calls `f` for every pose obtained by subdividing `poses` so consecutive samples are at most
/// `step` apart in position.
pub fn densify(poses: &[Pose<f64>], step: f64, mut f: impl FnMut(&Pose<f64>)) {
    if poses.is_empty() {
        return;
    }
    f(&poses[0]);
    for w in poses.windows(2) {
        let d = w[0].position().dist(w[1].position());
        let turn = wrap_pi(w[1].psi - w[0].psi).abs();
        let k = ((d / step).ceil() as usize).max(((turn / 0.02).ceil()) as usize).max(1);
        for i in 1..=k {
            f(&interpolate_pose(&w[0], &w[1], i as f64 / k as f64));
        }
    }
}

/// Union of footprint cells along the path, sampled at `resolution / 2` spacing.
pub fn swath_trace(path: &PlannedPath, footprint: &ShipFootprint, grid: &GridSpec) -> Vec<usize> {
    let mut mark = vec![false; grid.len()];
    densify(&path.poses, 0.5 * grid.resolution, |pose| {
        for c in rasterize_polygon(&footprint.at(pose), grid) {
            mark[c] = true;
        }
    });
    mark.iter().enumerate().filter(|(_, &m)| m).map(|(i, _)| i).collect()
}
