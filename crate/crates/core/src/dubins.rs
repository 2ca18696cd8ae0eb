//! Shortest curvature-bounded paths between oriented points (six-word Dubins family).

use crate::geometry::Pose;
use std::f64::consts::TAU;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Segment {
    Left,
    Straight,
    Right,
}

use Segment::{Left as L, Right as R, Straight as S};

pub const WORDS: [[Segment; 3]; 6] = [[L, S, L], [R, S, R], [L, S, R], [R, S, L], [R, L, R], [L, R, L]];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DubinsPath {
    pub start: Pose<f64>,
    pub rho: f64,
    pub word: [Segment; 3],
    /// Segment lengths normalized by `rho`.
    pub params: [f64; 3],
}

fn mod2pi(a: f64) -> f64 {
    a.rem_euclid(TAU)
}

fn word_params(word_idx: usize, alpha: f64, beta: f64, d: f64) -> Option<[f64; 3]> {
    let (sa, sb) = (alpha.sin(), beta.sin());
    let (ca, cb) = (alpha.cos(), beta.cos());
    let c_ab = (alpha - beta).cos();
    match word_idx {
        0 => {
            let tmp0 = d + sa - sb;
            let p2 = 2.0 + d * d - 2.0 * c_ab + 2.0 * d * (sa - sb);
            if p2 < 0.0 {
                return None;
            }
            let tmp1 = (cb - ca).atan2(tmp0);
            Some([mod2pi(tmp1 - alpha), p2.sqrt(), mod2pi(beta - tmp1)])
        }
        1 => {
            let tmp0 = d - sa + sb;
            let p2 = 2.0 + d * d - 2.0 * c_ab + 2.0 * d * (sb - sa);
            if p2 < 0.0 {
                return None;
            }
            let tmp1 = (ca - cb).atan2(tmp0);
            Some([mod2pi(alpha - tmp1), p2.sqrt(), mod2pi(tmp1 - beta)])
        }
        2 => {
            let p2 = -2.0 + d * d + 2.0 * c_ab + 2.0 * d * (sa + sb);
            if p2 < 0.0 {
                return None;
            }
            let p = p2.sqrt();
            let tmp2 = (-ca - cb).atan2(d + sa + sb) - (-2.0f64).atan2(p);
            Some([mod2pi(tmp2 - alpha), p, mod2pi(tmp2 - mod2pi(beta))])
        }
        3 => {
            let p2 = -2.0 + d * d + 2.0 * c_ab - 2.0 * d * (sa + sb);
            if p2 < 0.0 {
                return None;
            }
            let p = p2.sqrt();
            let tmp2 = (ca + cb).atan2(d - sa - sb) - 2.0f64.atan2(p);
            Some([mod2pi(alpha - tmp2), p, mod2pi(beta - tmp2)])
        }
        4 => {
            let tmp0 = (6.0 - d * d + 2.0 * c_ab + 2.0 * d * (sa - sb)) / 8.0;
            if tmp0.abs() > 1.0 {
                return None;
            }
            let phi = (ca - cb).atan2(d - sa + sb);
            let p = mod2pi(TAU - tmp0.acos());
            let t = mod2pi(alpha - phi + mod2pi(p / 2.0));
            Some([t, p, mod2pi(alpha - beta - t + mod2pi(p))])
        }
        5 => {
            let tmp0 = (6.0 - d * d + 2.0 * c_ab + 2.0 * d * (sb - sa)) / 8.0;
            if tmp0.abs() > 1.0 {
                return None;
            }
            let phi = (ca - cb).atan2(d + sa - sb);
            let p = mod2pi(TAU - tmp0.acos());
            let t = mod2pi(-alpha - phi + p / 2.0);
            Some([t, p, mod2pi(mod2pi(beta) - alpha - t + mod2pi(p))])
        }
        _ => None,
    }
}

impl DubinsPath {
    /// Shortest path from `q0` to `q1` with turning radius `rho`.
    pub fn shortest(q0: Pose<f64>, q1: Pose<f64>, rho: f64) -> Option<Self> {
        (0..6)
            .filter_map(|w| Self::with_word(q0, q1, rho, w))
            .min_by(|a, b| a.length().total_cmp(&b.length()))
    }

    /// Path of a specific word (index into `WORDS`), if it exists.
    pub fn with_word(q0: Pose<f64>, q1: Pose<f64>, rho: f64, word_idx: usize) -> Option<Self> {
        let dx = q1.x - q0.x;
        let dy = q1.y - q0.y;
        let d = dx.hypot(dy) / rho;
        let theta = if d > 0.0 { mod2pi(dy.atan2(dx)) } else { 0.0 };
        let alpha = mod2pi(q0.psi - theta);
        let beta = mod2pi(q1.psi - theta);
        word_params(word_idx, alpha, beta, d).map(|params| Self { start: q0, rho, word: WORDS[word_idx], params })
    }

    pub fn length(&self) -> f64 {
        (self.params[0] + self.params[1] + self.params[2]) * self.rho
    }

    /// Pose at arc length `s` (clamped to the path).
    pub fn sample(&self, s: f64) -> Pose<f64> {
        let mut t = (s / self.rho).clamp(0.0, self.params.iter().sum());
        // Work in a normalized frame anchored at the start.
        let (mut x, mut y, mut h) = (0.0, 0.0, self.start.psi);
        for (seg, &len) in self.word.iter().zip(&self.params) {
            let step = t.min(len);
            (x, y, h) = advance(*seg, x, y, h, step);
            t -= step;
            if t <= 0.0 {
                break;
            }
        }
        Pose::new(self.start.x + x * self.rho, self.start.y + y * self.rho, h)
    }

    /// Samples at uniform spacing not exceeding `step`, including both ends.
    pub fn sample_many(&self, step: f64) -> Vec<Pose<f64>> {
        let len = self.length();
        let n = ((len / step).ceil() as usize).max(1);
        (0..=n).map(|i| self.sample(len * i as f64 / n as f64)).collect()
    }

    pub fn end(&self) -> Pose<f64> {
        self.sample(self.length())
    }

    /// Signed curvature on each segment.
    pub fn curvatures(&self) -> [f64; 3] {
        self.word.map(|s| match s {
            Segment::Left => 1.0 / self.rho,
            Segment::Straight => 0.0,
            Segment::Right => -1.0 / self.rho,
        })
    }
}

fn advance(seg: Segment, x: f64, y: f64, h: f64, t: f64) -> (f64, f64, f64) {
    match seg {
        Segment::Left => (x + (h + t).sin() - h.sin(), y - (h + t).cos() + h.cos(), h + t),
        Segment::Right => (x - (h - t).sin() + h.sin(), y + (h - t).cos() - h.cos(), h - t),
        Segment::Straight => (x + h.cos() * t, y + h.sin() * t, h),
    }
}

/// Length of the shortest curvature-bounded path from `pose` to the line `x = x_goal`
/// (free arrival point and heading).
pub fn dubins_to_line(pose: &Pose<f64>, x_goal: f64, r_min: f64) -> f64 {
    if pose.x >= x_goal {
        return 0.0;
    }
    let rel = crate::geometry::wrap_pi(pose.psi).abs();
    // Angle between the heading and the goal line; pi/2 means pointing straight at it.
    let phi = std::f64::consts::FRAC_PI_2 - rel;
    let xc = pose.x + r_min * phi.cos().abs();
    if xc <= x_goal {
        r_min * (std::f64::consts::FRAC_PI_2 - phi).abs() + x_goal - xc
    } else {
        r_min * (phi - ((xc - x_goal) / r_min).clamp(-1.0, 1.0).acos()).abs()
    }
}
