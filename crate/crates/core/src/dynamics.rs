//! Three-DoF low-speed vessel model, setpoint-tracking DP controller, least-norm thrust
//! allocation and the ramped speed profile.

use crate::error::{IceNavError, Result};
use crate::geometry::{wrap_pi, ConvexPolygon, Point2, Pose, ShipFootprint};
use nalgebra::{Matrix3, SMatrix, SVector, Vector3};
use serde::{Deserialize, Serialize};

pub type Vector6 = SVector<f64, 6>;
pub type Matrix3x6 = SMatrix<f64, 3, 6>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShipState {
    pub eta: Pose<f64>,
    /// Surge, sway, yaw rate.
    pub nu: [f64; 3],
}

impl ShipState {
    pub fn at_rest(eta: Pose<f64>) -> Self {
        Self { eta, nu: [0.0; 3] }
    }

    pub fn speed(&self) -> f64 {
        self.nu[0].hypot(self.nu[1])
    }

    /// Inertial velocity of the reference point.
    pub fn world_velocity(&self) -> Point2<f64> {
        Point2::new(self.nu[0], self.nu[1]).rotate(self.eta.psi)
    }
}

pub const SHIP_MASS: f64 = 6.0e6;
pub const MAIN_PROPELLER_LIMIT: f64 = 799e3;
pub const TUNNEL_THRUSTER_LIMIT: f64 = 200e3;

#[derive(Debug, Clone, PartialEq)]
pub struct VesselModel {
    pub a: Matrix3<f64>,
    pub b: Matrix3<f64>,
    pub mass: f64,
    /// Actuator geometry: column i maps a unit force of actuator i to (X, Y, N).
    pub t: Matrix3x6,
    /// Thrust coefficients (diagonal of K).
    pub k: Vector6,
    /// Per-actuator force limits (N).
    pub limits: Vector6,
    pub footprint: ShipFootprint,
    b_inv: Matrix3<f64>,
    alloc: SMatrix<f64, 6, 3>,
}

/// Serialized form: `{A, B, T, K, limits, footprint}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[allow(non_snake_case)]
pub struct VesselConfig {
    pub A: [[f64; 3]; 3],
    pub B: [[f64; 3]; 3],
    pub T: [[f64; 6]; 3],
    pub K: [f64; 6],
    pub limits: [f64; 6],
    pub footprint: Vec<[f64; 2]>,
    #[serde(default = "default_mass")]
    pub mass: f64,
}

fn default_mass() -> f64 {
    SHIP_MASS
}

impl VesselModel {
    pub fn new(a: Matrix3<f64>, b: Matrix3<f64>, mass: f64, t: Matrix3x6, k: Vector6, limits: Vector6, footprint: ShipFootprint) -> Result<Self> {
        let b_inv = b.try_inverse().ok_or_else(|| IceNavError::ConfigError("B must be nonsingular".into()))?;
        if k.iter().any(|&v| !(v > 0.0)) || limits.iter().any(|&v| !(v > 0.0)) || !(mass > 0.0) {
            return Err(IceNavError::ConfigError("thrust coefficients, limits and mass must be positive".into()));
        }
        let tk = t * SMatrix::<f64, 6, 6>::from_diagonal(&k);
        let gram = tk * tk.transpose();
        let gram_inv = gram
            .try_inverse()
            .ok_or_else(|| IceNavError::ConfigError("actuator configuration cannot produce every force direction".into()))?;
        let alloc = tk.transpose() * gram_inv;
        Ok(Self { a, b, mass, t, k, limits, footprint, b_inv, alloc })
    }

    /// Decoupled model with surge/sway/yaw time constants 50/50/20 s, mass 6e6 kg, two stern
    /// propellers and four tunnel thrusters.
    pub fn default_psv() -> Self {
        let fp = ShipFootprint::default();
        let inertia = SHIP_MASS * (fp.length * fp.length + fp.width * fp.width) / 12.0;
        let a = Matrix3::from_diagonal(&Vector3::new(-1.0 / 50.0, -1.0 / 50.0, -1.0 / 20.0));
        let b = Matrix3::from_diagonal(&Vector3::new(1.0 / SHIP_MASS, 1.0 / SHIP_MASS, 1.0 / inertia));
        let mut t = Matrix3x6::zeros();
        // Stern propellers push along +x at y = -4 and y = 4.
        for (i, y) in [-4.0, 4.0].into_iter().enumerate() {
            t.set_column(i, &Vector3::new(1.0, 0.0, -y));
        }
        // Tunnel thrusters push along +y.
        for (i, x) in [-30.0, -26.0, 26.0, 30.0].into_iter().enumerate() {
            t.set_column(2 + i, &Vector3::new(0.0, 1.0, x));
        }
        let limits = Vector6::from_column_slice(&[
            MAIN_PROPELLER_LIMIT,
            MAIN_PROPELLER_LIMIT,
            TUNNEL_THRUSTER_LIMIT,
            TUNNEL_THRUSTER_LIMIT,
            TUNNEL_THRUSTER_LIMIT,
            TUNNEL_THRUSTER_LIMIT,
        ]);
        Self::new(a, b, SHIP_MASS, t, Vector6::repeat(1.0), limits, fp).expect("default vessel is valid")
    }

    pub fn from_config(c: &VesselConfig) -> Result<Self> {
        let a = Matrix3::from_fn(|i, j| c.A[i][j]);
        let b = Matrix3::from_fn(|i, j| c.B[i][j]);
        let t = Matrix3x6::from_fn(|i, j| c.T[i][j]);
        let outline = ConvexPolygon::new(c.footprint.iter().map(|p| Point2::new(p[0], p[1])).collect())?;
        Self::new(a, b, c.mass, t, Vector6::from_column_slice(&c.K), Vector6::from_column_slice(&c.limits), ShipFootprint::new(outline)?)
    }

    pub fn to_config(&self) -> VesselConfig {
        VesselConfig {
            A: std::array::from_fn(|i| std::array::from_fn(|j| self.a[(i, j)])),
            B: std::array::from_fn(|i| std::array::from_fn(|j| self.b[(i, j)])),
            T: std::array::from_fn(|i| std::array::from_fn(|j| self.t[(i, j)])),
            K: std::array::from_fn(|i| self.k[i]),
            limits: std::array::from_fn(|i| self.limits[i]),
            footprint: self.footprint.outline.vertices().iter().map(|p| [p.x, p.y]).collect(),
            mass: self.mass,
        }
    }

    pub fn b_inverse(&self) -> &Matrix3<f64> {
        &self.b_inv
    }

    /// Largest |X|, |Y|, |N| each producible with all actuators at their limits.
    pub fn tau_limits(&self) -> Vector3<f64> {
        Vector3::from_fn(|r, _| (0..6).map(|i| self.t[(r, i)].abs() * self.limits[i]).sum())
    }
}

fn derivative(model: &VesselModel, eta: [f64; 3], nu: Vector3<f64>, force: &Vector3<f64>) -> ([f64; 3], Vector3<f64>) {
    let (s, c) = eta[2].sin_cos();
    let deta = [c * nu[0] - s * nu[1], s * nu[0] + c * nu[1], nu[2]];
    (deta, model.a * nu + model.b * force)
}

/// Integrates the combined kinematics and dynamics with one RK4 step under constant forces.
pub fn step_vessel(state: &ShipState, tau: [f64; 3], tau_env: [f64; 3], model: &VesselModel, dt: f64) -> ShipState {
    let force = Vector3::from(tau) + Vector3::from(tau_env);
    let eta0 = [state.eta.x, state.eta.y, state.eta.psi];
    let nu0 = Vector3::from(state.nu);
    let add = |e: [f64; 3], d: [f64; 3], h: f64| [e[0] + h * d[0], e[1] + h * d[1], e[2] + h * d[2]];
    let (k1e, k1n) = derivative(model, eta0, nu0, &force);
    let (k2e, k2n) = derivative(model, add(eta0, k1e, 0.5 * dt), nu0 + k1n * (0.5 * dt), &force);
    let (k3e, k3n) = derivative(model, add(eta0, k2e, 0.5 * dt), nu0 + k2n * (0.5 * dt), &force);
    let (k4e, k4n) = derivative(model, add(eta0, k3e, dt), nu0 + k3n * dt, &force);
    let eta: [f64; 3] = std::array::from_fn(|i| eta0[i] + dt / 6.0 * (k1e[i] + 2.0 * k2e[i] + 2.0 * k3e[i] + k4e[i]));
    let nu = nu0 + (k1n + k2n * 2.0 + k3n * 2.0 + k4n) * (dt / 6.0);
    ShipState { eta: Pose::new(eta[0], eta[1], eta[2]), nu: [nu[0], nu[1], nu[2]] }
}

/// Acceleration-level gains per axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DpGains {
    pub kp: [f64; 3],
    pub kd: [f64; 3],
}

impl DpGains {
    /// Places both error poles of each axis at `-zeta*omega ± omega*sqrt(zeta^2-1)`, compensating
    /// the model's own damping on the diagonal of A.
    pub fn pole_placement(model: &VesselModel, omega: f64, zeta: f64) -> Self {
        Self {
            kp: [omega * omega; 3],
            kd: std::array::from_fn(|i| 2.0 * zeta * omega + model.a[(i, i)]),
        }
    }
}

/// Moving setpoint: desired pose, body-frame velocity and acceleration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Setpoint {
    pub pose: Pose<f64>,
    pub nu: [f64; 3],
    pub nu_dot: [f64; 3],
}

impl Setpoint {
    pub fn fixed(pose: Pose<f64>) -> Self {
        Self { pose, nu: [0.0; 3], nu_dot: [0.0; 3] }
    }

    /// Setpoint moving along a path of curvature `kappa` at `speed`, accelerating at `accel`.
    pub fn moving(pose: Pose<f64>, speed: f64, kappa: f64, accel: f64) -> Self {
        Self { pose, nu: [speed, 0.0, speed * kappa], nu_dot: [accel, 0.0, accel * kappa] }
    }
}

/// PD law on the body-frame pose error with model-based feedforward, saturated to the box of
/// forces the actuators can produce.
pub fn dp_control(state: &ShipState, sp: &Setpoint, gains: &DpGains, model: &VesselModel) -> [f64; 3] {
    let d = Point2::new(sp.pose.x - state.eta.x, sp.pose.y - state.eta.y).rotate(-state.eta.psi);
    let e = Vector3::new(d.x, d.y, wrap_pi(sp.pose.psi - state.eta.psi));
    let nu_d = Vector3::from(sp.nu);
    let nu = Vector3::from(state.nu);
    let acc = Vector3::from_fn(|i, _| gains.kp[i] * e[i] + gains.kd[i] * (nu_d[i] - nu[i]))
        - model.a * nu_d
        + Vector3::from(sp.nu_dot);
    let tau = model.b_inverse() * acc;
    let lim = model.tau_limits();
    std::array::from_fn(|i| tau[i].clamp(-lim[i], lim[i]))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Allocation {
    pub u: Vector6,
    pub rpm: Vector6,
    /// Force actually produced after clipping.
    pub tau: [f64; 3],
}

/// Least-norm allocation `u = (TK)^+ tau`, clipped per actuator; rpm = sign(u)·sqrt(|u|).
pub fn allocate_thrust(tau: [f64; 3], model: &VesselModel) -> Allocation {
    let raw = model.alloc * Vector3::from(tau);
    let rpm = Vector6::from_fn(|i, _| {
        let cap = model.limits[i] / model.k[i];
        raw[i].signum() * raw[i].abs().min(cap).sqrt()
    });
    // Commands are defined through rpm so that u = sign(n)·n² holds exactly.
    let u = rpm.map(|n| n.signum() * n * n);
    let realized = model.t * u.component_mul(&model.k);
    Allocation { u, rpm, tau: [realized[0], realized[1], realized[2]] }
}

/// Unclipped least-norm solution, for residual checks.
pub fn allocate_unclipped(tau: [f64; 3], model: &VesselModel) -> Vector6 {
    model.alloc * Vector3::from(tau)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VelocityProfile {
    pub u_start: f64,
    pub u_nom: f64,
    pub accel: f64,
}

pub const DEFAULT_ACCEL: f64 = 0.04;

pub fn make_velocity_profile(u_start: f64, u_nom: f64, accel: f64) -> Result<VelocityProfile> {
    if !(u_nom >= 0.0) || !(accel > 0.0) || !u_start.is_finite() {
        return Err(IceNavError::ConfigError("velocity profile needs u_nom >= 0 and accel > 0".into()));
    }
    Ok(VelocityProfile { u_start: u_start.min(u_nom), u_nom, accel })
}

impl VelocityProfile {
    pub fn speed_at(&self, t: f64) -> f64 {
        (self.u_start + self.accel * t.max(0.0)).min(self.u_nom)
    }

    pub fn accel_at(&self, t: f64) -> f64 {
        if self.u_start + self.accel * t.max(0.0) < self.u_nom {
            self.accel
        } else {
            0.0
        }
    }

    /// Distance covered by time `t`.
    pub fn distance_at(&self, t: f64) -> f64 {
        let t = t.max(0.0);
        let t_ramp = ((self.u_nom - self.u_start) / self.accel).max(0.0);
        if t <= t_ramp {
            self.u_start * t + 0.5 * self.accel * t * t
        } else {
            self.u_start * t_ramp + 0.5 * self.accel * t_ramp * t_ramp + self.u_nom * (t - t_ramp)
        }
    }
}
