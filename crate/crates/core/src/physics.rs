//! Two-dimensional impulse-based world: dynamic convex floes, a kinematic ship and straight
//! channel walls. Contacts are resolved with sequential impulses and a position pass.

use crate::error::{IceNavError, Result};
use crate::geometry::{wrap_pi, ConvexPolygon, Point2, Pose, ShipFootprint};
use crate::icefield::{IceField, IceFloe};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicsParams {
    pub dt_sim: f64,
    pub friction_ship_ice: f64,
    pub friction_ice_ice: f64,
    pub restitution: f64,
    pub drag_coefficient: f64,
    /// Fractional angular velocity loss per reference substep of 0.005 s.
    pub angular_decay: f64,
    pub water_density: f64,
    pub ship_mass: f64,
    pub velocity_iterations: usize,
    pub position_iterations: usize,
    /// Penetration tolerated before position correction kicks in.
    pub slop: f64,
    /// Fraction of the remaining penetration removed per position iteration.
    pub correction: f64,
    pub drag_enabled: bool,
}

impl Default for PhysicsParams {
    fn default() -> Self {
        Self {
            dt_sim: 0.005,
            friction_ship_ice: 0.05,
            friction_ice_ice: 0.35,
            restitution: 0.1,
            drag_coefficient: 1.0,
            angular_decay: 0.03,
            water_density: 1025.0,
            ship_mass: crate::dynamics::SHIP_MASS,
            velocity_iterations: 4,
            position_iterations: 2,
            slop: 0.005,
            correction: 0.8,
            drag_enabled: true,
        }
    }
}

const REFERENCE_SUBSTEP: f64 = 0.005;

#[derive(Debug, Clone, PartialEq)]
pub struct FloeBody {
    pub id: usize,
    /// Outline relative to the centroid at zero orientation.
    pub local: Vec<Point2<f64>>,
    pub position: Point2<f64>,
    pub angle: f64,
    pub velocity: Point2<f64>,
    pub omega: f64,
    pub mass: f64,
    pub inertia: f64,
    pub radius: f64,
    pub thickness: f64,
    pub density: f64,
    world: Vec<Point2<f64>>,
}

/// Polar moment of a uniform convex polygon about its centroid, per unit areal density.
pub fn polygon_inertia(local: &[Point2<f64>]) -> f64 {
    let n = local.len();
    let mut num = 0.0;
    for i in 0..n {
        let a = local[i];
        let b = local[(i + 1) % n];
        let c = a.cross(b);
        num += c * (a.dot(a) + a.dot(b) + b.dot(b));
    }
    num / 12.0
}

impl FloeBody {
    pub fn from_floe(f: &IceFloe) -> Self {
        let local: Vec<Point2<f64>> = f.polygon.vertices().iter().map(|&v| v - f.centroid).collect();
        let inertia = f.density * f.thickness * polygon_inertia(&local);
        let mut body = Self {
            id: f.id,
            radius: local.iter().map(|p| p.norm()).fold(0.0, f64::max),
            local,
            position: f.centroid,
            angle: 0.0,
            velocity: Point2::new(0.0, 0.0),
            omega: 0.0,
            mass: f.mass,
            inertia,
            thickness: f.thickness,
            density: f.density,
            world: Vec::new(),
        };
        body.refresh();
        body
    }

    fn refresh(&mut self) {
        let (s, c) = self.angle.sin_cos();
        self.world.clear();
        self.world.extend(self.local.iter().map(|p| Point2::new(c * p.x - s * p.y + self.position.x, s * p.x + c * p.y + self.position.y)));
    }

    pub fn vertices(&self) -> &[Point2<f64>] {
        &self.world
    }

    pub fn polygon(&self) -> ConvexPolygon<f64> {
        ConvexPolygon::new(self.world.clone()).expect("floe outline stays convex under rigid motion")
    }

    pub fn kinetic_energy(&self) -> f64 {
        0.5 * self.mass * self.velocity.norm_sq() + 0.5 * self.inertia * self.omega * self.omega
    }

    /// Submerged cross-section presented to flow along `dir`.
    pub fn projected_area(&self, dir: Point2<f64>, water_density: f64) -> f64 {
        let n = dir.perp();
        let (lo, hi) = self.world.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
            let d = p.dot(n);
            (lo.min(d), hi.max(d))
        });
        (self.density / water_density) * self.thickness * (hi - lo)
    }
}

/// Quadratic drag over one substep using the exact solution of `dv/dt = -k|v|v`, and
/// multiplicative angular decay.
pub fn apply_drag(floe: &mut FloeBody, dt: f64, params: &PhysicsParams) {
    let speed = floe.velocity.norm();
    if speed > 0.0 {
        let dir = floe.velocity * (1.0 / speed);
        let area = floe.projected_area(dir, params.water_density);
        let k = 0.5 * params.water_density * params.drag_coefficient * area / floe.mass;
        floe.velocity = floe.velocity * (1.0 / (1.0 + k * speed * dt));
    }
    floe.omega *= (1.0 - params.angular_decay * dt / REFERENCE_SUBSTEP).max(0.0);
}

/// Drag force on a floe (for reporting and tests).
pub fn drag_force(floe: &FloeBody, params: &PhysicsParams) -> Point2<f64> {
    let speed = floe.velocity.norm();
    if speed == 0.0 {
        return Point2::new(0.0, 0.0);
    }
    let area = floe.projected_area(floe.velocity * (1.0 / speed), params.water_density);
    floe.velocity * (-0.5 * params.water_density * params.drag_coefficient * area * speed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum BodyRef {
    Ship,
    Floe(usize),
    /// y = 0 wall (false) or y = W wall (true).
    Wall(bool),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Contact {
    pub a: BodyRef,
    pub b: BodyRef,
    /// Unit normal pointing from `a` into `b`.
    pub normal: Point2<f64>,
    pub point: Point2<f64>,
    pub depth: f64,
}

/// Separating-axis test between two convex CCW polygons. Returns the minimum-penetration
/// normal (from `a` to `b`), the contact point and the depth.
pub fn polygon_contact(a: &[Point2<f64>], b: &[Point2<f64>]) -> Option<(Point2<f64>, Point2<f64>, f64)> {
    let (sa, ia) = max_separation(a, b);
    if sa >= 0.0 {
        return None;
    }
    let (sb, ib) = max_separation(b, a);
    if sb >= 0.0 {
        return None;
    }
    // Reference face on the polygon with the larger (less negative) separation.
    let (reference, incident, edge, flip) = if sa >= sb { (a, b, ia, false) } else { (b, a, ib, true) };
    let p0 = reference[edge];
    let p1 = reference[(edge + 1) % reference.len()];
    let e = p1 - p0;
    let n = Point2::new(e.y, -e.x) * (1.0 / e.norm());
    let (point, depth) = deepest_point(incident, n, p0);
    let normal = if flip { -n } else { n };
    Some((normal, point, depth))
}

/// Largest signed distance of `b` beyond the faces of `a` (minimum over `b`'s vertices per face).
fn max_separation(a: &[Point2<f64>], b: &[Point2<f64>]) -> (f64, usize) {
    let mut best = (f64::NEG_INFINITY, 0);
    for i in 0..a.len() {
        let p0 = a[i];
        let e = a[(i + 1) % a.len()] - p0;
        let n = Point2::new(e.y, -e.x) * (1.0 / e.norm());
        let s = b.iter().map(|&v| n.dot(v - p0)).fold(f64::INFINITY, f64::min);
        if s > best.0 {
            best = (s, i);
        }
    }
    best
}

/// Deepest vertex of `poly` below the plane through `p0` with outward normal `n`; the midpoint
/// of the two deepest when they are within 1 cm of each other.
fn deepest_point(poly: &[Point2<f64>], n: Point2<f64>, p0: Point2<f64>) -> (Point2<f64>, f64) {
    let mut first = (f64::NEG_INFINITY, 0usize);
    let mut second = (f64::NEG_INFINITY, 0usize);
    for (i, &v) in poly.iter().enumerate() {
        let d = -n.dot(v - p0);
        if d > first.0 {
            second = first;
            first = (d, i);
        } else if d > second.0 {
            second = (d, i);
        }
    }
    if second.0.is_finite() && first.0 - second.0 <= 0.01 && second.0 > 0.0 {
        ((poly[first.1] + poly[second.1]) * 0.5, first.0)
    } else {
        (poly[first.1], first.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollisionEvent {
    pub t: f64,
    pub floe_id: usize,
    /// Magnitude of the total impulse exchanged in the substep (N·s).
    pub impulse: f64,
    /// Impulse acting on the ship, ship body frame.
    pub impulse_body: [f64; 2],
    /// Contact point in the ship body frame.
    pub contact_body: [f64; 2],
    /// Contact normal (ship toward floe) in the ship body frame.
    pub normal_body: [f64; 2],
    pub floe_mass: f64,
    pub pre_velocity: [f64; 2],
    pub post_velocity: [f64; 2],
    /// Relative normal approach speed before resolution.
    pub approach_speed: f64,
    pub delta_k_sys: f64,
    pub delta_k_ice: f64,
}

impl CollisionEvent {
    /// Impact force approximated as impulse over the substep length.
    pub fn force(&self, dt_sim: f64) -> f64 {
        self.impulse / dt_sim
    }

    pub fn delta_k_ship(&self) -> f64 {
        self.delta_k_sys - self.delta_k_ice
    }
}

#[derive(Debug, Clone)]
pub struct StepOutput {
    pub tau_env: [f64; 3],
    pub events: Vec<CollisionEvent>,
    /// Ids of floes in contact with the ship or transitively through floe contacts, per substep
    /// union.
    pub pushed: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct SimWorld {
    pub floes: Vec<FloeBody>,
    pub footprint: ShipFootprint,
    pub ship_pose: Pose<f64>,
    pub channel_width: f64,
    pub params: PhysicsParams,
    pub time: f64,
}

struct Solve {
    c: Contact,
    ra: Point2<f64>,
    rb: Point2<f64>,
    tangent: Point2<f64>,
    mass_n: f64,
    mass_t: f64,
    bias: f64,
    friction: f64,
    jn: f64,
    jt: f64,
    approach: f64,
}

#[derive(Clone, Copy)]
struct Kin {
    pos: Point2<f64>,
    vel: Point2<f64>,
    omega: f64,
    inv_m: f64,
    inv_i: f64,
}

impl SimWorld {
    pub fn new(field: &IceField, footprint: ShipFootprint, ship_pose: Pose<f64>, params: PhysicsParams) -> Result<Self> {
        if !(params.dt_sim > 0.0) {
            return Err(IceNavError::ConfigError("dt_sim must be positive".into()));
        }
        Ok(Self {
            floes: field.floes.iter().map(FloeBody::from_floe).collect(),
            footprint,
            ship_pose,
            channel_width: field.channel_width,
            params,
            time: 0.0,
        })
    }

    pub fn floe_index(&self, id: usize) -> Option<usize> {
        self.floes.iter().position(|f| f.id == id)
    }

    /// Current floe outlines as an ice field (for replanning and output).
    pub fn snapshot(&self, channel_length: f64) -> IceField {
        let floes = self
            .floes
            .iter()
            .filter_map(|f| IceFloe::new(f.id, f.polygon(), f.thickness, f.density).ok())
            .collect();
        IceField::new(channel_length, self.channel_width, floes)
    }

    pub fn floes_kinetic_energy(&self) -> f64 {
        self.floes.iter().map(FloeBody::kinetic_energy).sum()
    }

    /// All contacts at the current configuration: broadphase sort-and-sweep on bounding circles,
    /// then separating-axis narrowphase. Sorted by body pair.
    pub fn detect_contacts(&self) -> Vec<Contact> {
        let ship_poly = self.footprint.at(&self.ship_pose);
        let ship_radius = self.footprint.outline.vertices().iter().map(|p| p.norm()).fold(0.0, f64::max);
        let mut entries: Vec<(f64, f64, BodyRef, Point2<f64>, f64)> = self
            .floes
            .iter()
            .enumerate()
            .map(|(i, f)| (f.position.x - f.radius, f.position.x + f.radius, BodyRef::Floe(i), f.position, f.radius))
            .collect();
        let sp = self.ship_pose.position();
        entries.push((sp.x - ship_radius, sp.x + ship_radius, BodyRef::Ship, sp, ship_radius));
        entries.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.2.cmp(&b.2)));
        let verts = |r: BodyRef| -> &[Point2<f64>] {
            match r {
                BodyRef::Floe(i) => self.floes[i].vertices(),
                _ => ship_poly.vertices(),
            }
        };
        let mut out = Vec::new();
        for i in 0..entries.len() {
            let (_, hi, ra, ca, rad_a) = entries[i];
            for e in &entries[i + 1..] {
                if e.0 > hi {
                    break;
                }
                let (rb, cb, rad_b) = (e.2, e.3, e.4);
                if ca.dist(cb) > rad_a + rad_b {
                    continue;
                }
                // Keep the ship first so normals point away from it.
                let (a, b) = if rb == BodyRef::Ship || (ra != BodyRef::Ship && rb < ra) { (rb, ra) } else { (ra, rb) };
                if let Some((normal, point, depth)) = polygon_contact(verts(a), verts(b)) {
                    out.push(Contact { a, b, normal, point, depth });
                }
            }
        }
        let w = self.channel_width;
        for (i, f) in self.floes.iter().enumerate() {
            if f.position.y - f.radius < 0.0 {
                if let Some((point, depth)) = wall_contact(f.vertices(), false, w) {
                    out.push(Contact { a: BodyRef::Wall(false), b: BodyRef::Floe(i), normal: Point2::new(0.0, 1.0), point, depth });
                }
            }
            if f.position.y + f.radius > w {
                if let Some((point, depth)) = wall_contact(f.vertices(), true, w) {
                    out.push(Contact { a: BodyRef::Wall(true), b: BodyRef::Floe(i), normal: Point2::new(0.0, -1.0), point, depth });
                }
            }
        }
        out.sort_by(|x, y| (x.a, x.b).cmp(&(y.a, y.b)));
        out
    }

    fn kin(&self, r: BodyRef, ship_vel: Point2<f64>, ship_omega: f64) -> Kin {
        match r {
            BodyRef::Floe(i) => {
                let f = &self.floes[i];
                Kin { pos: f.position, vel: f.velocity, omega: f.omega, inv_m: 1.0 / f.mass, inv_i: 1.0 / f.inertia }
            }
            BodyRef::Ship => Kin { pos: self.ship_pose.position(), vel: ship_vel, omega: ship_omega, inv_m: 0.0, inv_i: 0.0 },
            BodyRef::Wall(_) => Kin { pos: Point2::new(0.0, 0.0), vel: Point2::new(0.0, 0.0), omega: 0.0, inv_m: 0.0, inv_i: 0.0 },
        }
    }

    /// Advances one control interval with the ship moving linearly from the current pose to
    /// `ship_to`. Returns the ice force on the ship (body frame, interval mean) and the log.
    pub fn step_world(&mut self, ship_to: Pose<f64>, dt_ctrl: f64) -> Result<StepOutput> {
        let n_sub = (dt_ctrl / self.params.dt_sim).round();
        if n_sub < 1.0 || (n_sub * self.params.dt_sim - dt_ctrl).abs() > 1e-9 * dt_ctrl.max(1.0) {
            return Err(IceNavError::ConfigError("dt_ctrl must be a multiple of dt_sim".into()));
        }
        let n_sub = n_sub as usize;
        let from = self.ship_pose;
        let dpsi = wrap_pi(ship_to.psi - from.psi);
        let ship_vel = (ship_to.position() - from.position()) * (1.0 / dt_ctrl);
        let ship_omega = dpsi / dt_ctrl;
        let mut events = Vec::new();
        let mut pushed = std::collections::BTreeSet::new();
        for k in 1..=n_sub {
            let t = k as f64 / n_sub as f64;
            self.ship_pose = Pose::new(from.x + t * (ship_to.x - from.x), from.y + t * (ship_to.y - from.y), from.psi + t * dpsi);
            self.substep(ship_vel, ship_omega, &mut events, &mut pushed);
        }
        self.ship_pose = ship_to;
        let tau_env = aggregate_forces(&events, dt_ctrl);
        Ok(StepOutput { tau_env, events, pushed: pushed.into_iter().collect() })
    }

    fn substep(&mut self, ship_vel: Point2<f64>, ship_omega: f64, events: &mut Vec<CollisionEvent>, pushed: &mut std::collections::BTreeSet<usize>) {
        let p = self.params;
        let dt = p.dt_sim;
        self.time += dt;
        if p.drag_enabled {
            for f in self.floes.iter_mut() {
                apply_drag(f, dt, &p);
            }
        }
        let contacts = self.detect_contacts();
        let pre: Vec<Point2<f64>> = self.floes.iter().map(|f| f.velocity).collect();
        let mut solves: Vec<Solve> = contacts
            .iter()
            .map(|c| {
                let ka = self.kin(c.a, ship_vel, ship_omega);
                let kb = self.kin(c.b, ship_vel, ship_omega);
                let ra = c.point - ka.pos;
                let rb = c.point - kb.pos;
                let n = c.normal;
                let tangent = n.perp();
                let rna = ra.cross(n);
                let rnb = rb.cross(n);
                let kn = ka.inv_m + kb.inv_m + ka.inv_i * rna * rna + kb.inv_i * rnb * rnb;
                let rta = ra.cross(tangent);
                let rtb = rb.cross(tangent);
                let kt = ka.inv_m + kb.inv_m + ka.inv_i * rta * rta + kb.inv_i * rtb * rtb;
                let vrel = point_velocity(&kb, rb) - point_velocity(&ka, ra);
                let vn = vrel.dot(n);
                let friction = if c.a == BodyRef::Ship { p.friction_ship_ice } else { p.friction_ice_ice };
                Solve {
                    c: *c,
                    ra,
                    rb,
                    tangent,
                    mass_n: if kn > 0.0 { 1.0 / kn } else { 0.0 },
                    mass_t: if kt > 0.0 { 1.0 / kt } else { 0.0 },
                    bias: if vn < 0.0 { -p.restitution * vn } else { 0.0 },
                    friction,
                    jn: 0.0,
                    jt: 0.0,
                    approach: (-vn).max(0.0),
                }
            })
            .collect();
        for _ in 0..p.velocity_iterations {
            for s in solves.iter_mut() {
                let ka = self.kin(s.c.a, ship_vel, ship_omega);
                let kb = self.kin(s.c.b, ship_vel, ship_omega);
                let vrel = point_velocity(&kb, s.rb) - point_velocity(&ka, s.ra);
                let vn = vrel.dot(s.c.normal);
                let new_n = (s.jn + s.mass_n * (-vn + s.bias)).max(0.0);
                let dn = new_n - s.jn;
                s.jn = new_n;
                self.apply(s.c.a, s.c.b, s.c.normal * dn, s.ra, s.rb);
                let ka = self.kin(s.c.a, ship_vel, ship_omega);
                let kb = self.kin(s.c.b, ship_vel, ship_omega);
                let vrel = point_velocity(&kb, s.rb) - point_velocity(&ka, s.ra);
                let vt = vrel.dot(s.tangent);
                let cap = s.friction * s.jn;
                let new_t = (s.jt - s.mass_t * vt).clamp(-cap, cap);
                let dt_ = new_t - s.jt;
                s.jt = new_t;
                self.apply(s.c.a, s.c.b, s.tangent * dt_, s.ra, s.rb);
            }
        }
        // Ship contacts are logged after resolution.
        for s in &solves {
            if s.c.a != BodyRef::Ship {
                continue;
            }
            let BodyRef::Floe(i) = s.c.b else { continue };
            let j = s.c.normal * s.jn + s.tangent * s.jt;
            let mag = j.norm();
            if mag <= 0.0 {
                continue;
            }
            let f = &self.floes[i];
            let m_eq = p.ship_mass * f.mass / (p.ship_mass + f.mass);
            let contact = self.ship_pose.to_body(s.c.point);
            let on_ship = (-j).rotate(-self.ship_pose.psi);
            let nb = s.c.normal.rotate(-self.ship_pose.psi);
            events.push(CollisionEvent {
                t: self.time,
                floe_id: f.id,
                impulse: mag,
                impulse_body: [on_ship.x, on_ship.y],
                contact_body: [contact.x, contact.y],
                normal_body: [nb.x, nb.y],
                floe_mass: f.mass,
                pre_velocity: [pre[i].x, pre[i].y],
                post_velocity: [f.velocity.x, f.velocity.y],
                approach_speed: s.approach,
                delta_k_sys: -0.5 * m_eq * s.approach * s.approach,
                delta_k_ice: 0.5 * f.mass * (f.velocity.norm_sq() - pre[i].norm_sq()),
            });
        }
        collect_pushed(&contacts, pushed);
        for f in self.floes.iter_mut() {
            if f.velocity.x != 0.0 || f.velocity.y != 0.0 || f.omega != 0.0 {
                f.position = f.position + f.velocity * dt;
                f.angle += f.omega * dt;
                f.refresh();
            }
        }
        self.correct_positions(&contacts);
    }

    fn apply(&mut self, a: BodyRef, b: BodyRef, impulse: Point2<f64>, ra: Point2<f64>, rb: Point2<f64>) {
        if let BodyRef::Floe(i) = a {
            let f = &mut self.floes[i];
            f.velocity = f.velocity - impulse * (1.0 / f.mass);
            f.omega -= ra.cross(impulse) / f.inertia;
        }
        if let BodyRef::Floe(i) = b {
            let f = &mut self.floes[i];
            f.velocity = f.velocity + impulse * (1.0 / f.mass);
            f.omega += rb.cross(impulse) / f.inertia;
        }
    }

    fn correct_positions(&mut self, contacts: &[Contact]) {
        let p = self.params;
        let mut moved: Vec<Point2<f64>> = vec![Point2::new(0.0, 0.0); self.floes.len()];
        for _ in 0..p.position_iterations {
            for c in contacts {
                let shift = |r: BodyRef, moved: &[Point2<f64>]| match r {
                    BodyRef::Floe(i) => moved[i],
                    _ => Point2::new(0.0, 0.0),
                };
                let depth = c.depth - (shift(c.b, &moved) - shift(c.a, &moved)).dot(c.normal);
                let excess = depth - p.slop;
                if excess <= 0.0 {
                    continue;
                }
                let inv = |r: BodyRef| match r {
                    BodyRef::Floe(i) => 1.0 / self.floes[i].mass,
                    _ => 0.0,
                };
                let (wa, wb) = (inv(c.a), inv(c.b));
                if wa + wb == 0.0 {
                    continue;
                }
                let corr = c.normal * (p.correction * excess / (wa + wb));
                if let BodyRef::Floe(i) = c.a {
                    moved[i] = moved[i] - corr * wa;
                }
                if let BodyRef::Floe(i) = c.b {
                    moved[i] = moved[i] + corr * wb;
                }
            }
        }
        let w = self.channel_width;
        for (f, d) in self.floes.iter_mut().zip(&moved) {
            if d.x != 0.0 || d.y != 0.0 {
                f.position = f.position + *d;
                f.refresh();
            }
            // Walls are hard: never leave a floe outside the channel.
            let (lo, hi) = f.world.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v.y), hi.max(v.y)));
            let push = if lo < 0.0 { -lo } else if hi > w { w - hi } else { 0.0 };
            if push != 0.0 && hi - lo <= w {
                f.position.y += push;
                f.refresh();
            }
        }
    }
}

/// Ice load on the ship over a control interval: the logged impulses averaged over the
/// interval, in the ship body frame, with the yaw moment taken about the ship origin.
pub fn aggregate_forces(events: &[CollisionEvent], dt_ctrl: f64) -> [f64; 3] {
    let mut tau = [0.0; 3];
    for e in events {
        let fx = e.impulse_body[0] / dt_ctrl;
        let fy = e.impulse_body[1] / dt_ctrl;
        tau[0] += fx;
        tau[1] += fy;
        tau[2] += e.contact_body[0] * fy - e.contact_body[1] * fx;
    }
    tau
}

fn point_velocity(k: &Kin, r: Point2<f64>) -> Point2<f64> {
    k.vel + Point2::new(-k.omega * r.y, k.omega * r.x)
}

fn wall_contact(v: &[Point2<f64>], upper: bool, w: f64) -> Option<(Point2<f64>, f64)> {
    let depth_of = |p: &Point2<f64>| if upper { p.y - w } else { -p.y };
    let mut idx: Vec<usize> = (0..v.len()).filter(|&i| depth_of(&v[i]) > 0.0).collect();
    if idx.is_empty() {
        return None;
    }
    idx.sort_by(|&a, &b| depth_of(&v[b]).total_cmp(&depth_of(&v[a])));
    let d0 = depth_of(&v[idx[0]]);
    let point = if idx.len() > 1 && d0 - depth_of(&v[idx[1]]) <= 0.01 { (v[idx[0]] + v[idx[1]]) * 0.5 } else { v[idx[0]] };
    Some((point, d0))
}

/// Floes connected to the ship through chains of contacts.
fn collect_pushed(contacts: &[Contact], pushed: &mut std::collections::BTreeSet<usize>) {
    let mut adj: std::collections::BTreeMap<BodyRef, Vec<BodyRef>> = Default::default();
    for c in contacts {
        adj.entry(c.a).or_default().push(c.b);
        adj.entry(c.b).or_default().push(c.a);
    }
    let mut stack = vec![BodyRef::Ship];
    let mut seen = std::collections::BTreeSet::from([BodyRef::Ship]);
    while let Some(r) = stack.pop() {
        for &nb in adj.get(&r).map(Vec::as_slice).unwrap_or(&[]) {
            if let BodyRef::Floe(i) = nb {
                if seen.insert(nb) {
                    pushed.insert(i);
                    stack.push(nb);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square(c: Point2<f64>, h: f64) -> Vec<Point2<f64>> {
        vec![
            Point2::new(c.x - h, c.y - h),
            Point2::new(c.x + h, c.y - h),
            Point2::new(c.x + h, c.y + h),
            Point2::new(c.x - h, c.y + h),
        ]
    }

    #[test]
    fn overlapping_squares() {
        let a = square(Point2::new(0.0, 0.0), 0.5);
        let b = square(Point2::new(0.9, 0.0), 0.5);
        let (n, p, d) = polygon_contact(&a, &b).unwrap();
        assert!((n.x - 1.0).abs() < 1e-12 && n.y.abs() < 1e-12);
        assert!((d - 0.1).abs() < 1e-12);
        assert!(p.y.abs() < 1e-12);
        assert!(polygon_contact(&a, &square(Point2::new(10.0, 0.0), 0.5)).is_none());
    }

    #[test]
    fn inertia_of_square() {
        // Unit square about its center: (1/6) per unit density.
        assert!((polygon_inertia(&square(Point2::new(0.0, 0.0), 0.5)) - 1.0 / 6.0).abs() < 1e-12);
    }

    fn floe(id: usize, c: Point2<f64>, h: f64) -> IceFloe {
        IceFloe::new(id, ConvexPolygon::new(square(c, h)).unwrap(), 1.0, 900.0).unwrap()
    }

    fn boxy_ship() -> ShipFootprint {
        ShipFootprint::new(ConvexPolygon::new(square(Point2::new(0.0, 0.0), 10.0)).unwrap()).unwrap()
    }

    fn quiet() -> PhysicsParams {
        PhysicsParams { drag_enabled: false, ..PhysicsParams::default() }
    }

    fn world(floes: Vec<IceFloe>, params: PhysicsParams) -> SimWorld {
        let field = IceField::new(1000.0, 1000.0, floes);
        SimWorld::new(&field, boxy_ship(), Pose::new(0.0, 500.0, 0.0), params).unwrap()
    }

    #[test]
    fn broadphase_rejects_distant_floes() {
        let w = world(vec![floe(0, Point2::new(100.0, 500.0), 2.0), floe(1, Point2::new(110.0, 500.0), 2.0)], quiet());
        assert!(w.floes[0].radius < 3.0);
        assert!(w.detect_contacts().is_empty());
    }

    #[test]
    fn contacts_match_exhaustive_overlap_test() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let mut floes = Vec::new();
        while floes.len() < 50 {
            let Some(poly) = crate::icefield::valtr_polygon(8, &mut rng) else { continue };
            let scale = rng.gen_range(2.0..6.0);
            let c = poly.properties().unwrap().centroid;
            let d = Point2::new(rng.gen_range(200.0..260.0), rng.gen_range(470.0..530.0));
            let poly = poly.scaled_about(c, scale).translate(d - c);
            floes.push(IceFloe::new(floes.len(), poly, 1.0, 900.0).unwrap());
        }
        let w = world(floes, quiet());
        let found: std::collections::BTreeSet<(usize, usize)> = w
            .detect_contacts()
            .iter()
            .filter_map(|c| match (c.a, c.b) {
                (BodyRef::Floe(i), BodyRef::Floe(j)) => Some((i.min(j), i.max(j))),
                _ => None,
            })
            .collect();
        let mut overlapping = 0;
        for i in 0..50 {
            for j in i + 1..50 {
                let area = w.floes[i].polygon().intersection_area(&w.floes[j].polygon());
                if area > 1e-9 {
                    overlapping += 1;
                    assert!(found.contains(&(i, j)), "missed pair {i},{j}");
                } else if found.contains(&(i, j)) {
                    assert!(area >= 0.0 && area < 1e-6);
                }
            }
        }
        assert!(overlapping > 10);
    }

    #[test]
    fn flat_face_strike_restitution() {
        let mut w = world(vec![floe(0, Point2::new(12.0, 500.0), 2.0)], quiet());
        let m = w.floes[0].mass;
        let out = w.step_world(Pose::new(0.04, 500.0, 0.0), 0.02).unwrap();
        assert_eq!(out.events.len(), 1);
        let e = &out.events[0];
        assert!((w.floes[0].velocity.x - 2.2).abs() < 1e-9);
        assert!(w.floes[0].velocity.y.abs() < 1e-12 && w.floes[0].omega.abs() < 1e-12);
        assert!((e.impulse - m * 2.2).abs() < 1e-6 * m);
        // Ice pushes back on the bow: resistance in surge only.
        assert!(out.tau_env[0] < 0.0);
        assert!(out.tau_env[1].abs() < 1e-9 * out.tau_env[0].abs());
        assert!(out.tau_env[2].abs() < 1e-9 * out.tau_env[0].abs());
        assert_eq!(out.pushed, vec![0]);
    }

    #[test]
    fn open_water_has_no_load() {
        let mut w = world(vec![floe(0, Point2::new(300.0, 300.0), 2.0)], PhysicsParams::default());
        for k in 1..=50 {
            let out = w.step_world(Pose::new(0.04 * k as f64, 500.0, 0.0), 0.02).unwrap();
            assert_eq!(out.tau_env, [0.0; 3]);
            assert!(out.events.is_empty());
        }
    }

    #[test]
    fn equal_floes_stop_head_on() {
        let params = PhysicsParams { restitution: 0.0, ..quiet() };
        let mut w = world(vec![floe(0, Point2::new(298.0, 300.0), 2.0), floe(1, Point2::new(301.99, 300.0), 2.0)], params);
        w.floes[0].velocity = Point2::new(1.0, 0.0);
        w.floes[1].velocity = Point2::new(-1.0, 0.0);
        w.step_world(Pose::new(0.0, 500.0, 0.0), 0.005).unwrap();
        for f in &w.floes {
            assert!(f.velocity.norm() < 1e-12 && f.omega.abs() < 1e-12);
        }
    }

    #[test]
    fn quadratic_drag_closed_form() {
        let mut w = world(vec![floe(0, Point2::new(300.0, 300.0), 5.0)], PhysicsParams::default());
        w.floes[0].velocity = Point2::new(1.0, 0.0);
        // Submerged projection over mass: k = 1 / (2 · side).
        let k = 0.05;
        let oracle = |t: f64| 1.0 / (1.0 + k * t);
        for s in 1..=60 {
            w.step_world(Pose::new(0.0, 500.0, 0.0), 1.0).unwrap();
            let v = w.floes[0].velocity.norm();
            assert!((v / oracle(s as f64) - 1.0).abs() < 0.01, "t={s} v={v}");
        }
        let f = drag_force(&w.floes[0], &w.params);
        assert!(f.dot(w.floes[0].velocity) < 0.0);
    }

    #[test]
    fn wall_keeps_floes_inside() {
        let field = IceField::new(200.0, 20.0, vec![floe(0, Point2::new(50.0, 3.0), 2.0), floe(1, Point2::new(60.0, 17.0), 2.0)]);
        let mut w = SimWorld::new(&field, boxy_ship(), Pose::new(-500.0, 10.0, 0.0), PhysicsParams::default()).unwrap();
        w.floes[0].velocity = Point2::new(0.5, -3.0);
        w.floes[1].velocity = Point2::new(0.0, 4.0);
        for _ in 0..500 {
            w.step_world(Pose::new(-500.0, 10.0, 0.0), 0.02).unwrap();
            for f in &w.floes {
                for v in f.vertices() {
                    assert!(v.y >= -0.01 && v.y <= 20.01, "escaped: {v:?}");
                }
            }
        }
    }

    fn disk(id: usize, c: Point2<f64>, r: f64, n: usize) -> IceFloe {
        let pts = (0..n).map(|k| {
            let a = std::f64::consts::TAU * (k as f64 + 0.5) / n as f64;
            Point2::new(c.x + r * a.cos(), c.y + r * a.sin())
        });
        IceFloe::new(id, ConvexPolygon::new(pts.collect()).unwrap(), 1.0, 900.0).unwrap()
    }

    #[test]
    fn central_strike_energy_matches_disk_model() {
        let params = PhysicsParams { restitution: 0.0, friction_ship_ice: 0.0, ..quiet() };
        let mut w = world(vec![disk(0, Point2::new(16.0, 500.0), 6.0, 64)], params);
        let m = w.floes[0].mass;
        let mut events = Vec::new();
        for k in 1..=50 {
            events.extend(w.step_world(Pose::new(0.04 * k as f64, 500.0, 0.0), 0.02).unwrap().events);
        }
        assert!(!events.is_empty());
        let ship: f64 = events.iter().map(CollisionEvent::delta_k_ship).sum();
        let closed = crate::costmap::ke_loss(0.0, 6.0, m, params.ship_mass, 2.0).unwrap();
        assert!((ship.abs() / closed - 1.0).abs() < 0.1, "{ship} vs {closed}");
        for e in &events {
            let pre = Point2::new(e.pre_velocity[0], e.pre_velocity[1]);
            let post = Point2::new(e.post_velocity[0], e.post_velocity[1]);
            assert_eq!(e.delta_k_ice, 0.5 * e.floe_mass * (post.norm_sq() - pre.norm_sq()));
            assert!(e.impulse >= 0.0);
        }
    }

    #[test]
    fn env_load_is_mean_of_logged_impulses() {
        let field = crate::icefield::generate_field(&crate::icefield::FieldSpec::desk(0.5), 3).unwrap();
        let mut w = SimWorld::new(&field, ShipFootprint::default(), Pose::new(-40.0, 40.0, 0.0), PhysicsParams::default()).unwrap();
        let mut hits = 0;
        for k in 1..=1000 {
            let out = w.step_world(Pose::new(-40.0 + 0.04 * k as f64, 40.0, 0.0002 * k as f64), 0.02).unwrap();
            let mut sum = [0.0; 3];
            for e in &out.events {
                let f = [e.impulse_body[0] / 0.02, e.impulse_body[1] / 0.02];
                sum[0] += f[0];
                sum[1] += f[1];
                sum[2] += e.contact_body[0] * f[1] - e.contact_body[1] * f[0];
            }
            assert_eq!(sum, out.tau_env);
            hits += out.events.len();
        }
        assert!(hits > 0);
    }

    #[test]
    fn reruns_are_bit_identical() {
        let run = || {
            let field = crate::icefield::generate_field(&crate::icefield::FieldSpec::desk(0.3), 11).unwrap();
            let mut w = SimWorld::new(&field, ShipFootprint::default(), Pose::new(-40.0, 40.0, 0.0), PhysicsParams::default()).unwrap();
            let mut log = Vec::new();
            for k in 1..=500 {
                log.extend(w.step_world(Pose::new(-40.0 + 0.04 * k as f64, 40.0, 0.0), 0.02).unwrap().events);
            }
            let state: Vec<(f64, f64, f64, f64, f64)> = w.floes.iter().map(|f| (f.position.x, f.position.y, f.angle, f.velocity.x, f.omega)).collect();
            (serde_json::to_string(&log).unwrap(), state)
        };
        let (a, sa) = run();
        let (b, sb) = run();
        assert_eq!(a, b);
        assert!(sa.iter().zip(&sb).all(|(x, y)| x.0.to_bits() == y.0.to_bits() && x.1.to_bits() == y.1.to_bits() && x.2.to_bits() == y.2.to_bits()));
    }
}
