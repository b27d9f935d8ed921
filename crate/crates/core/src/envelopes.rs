//! Polyhedral envelopes of `θ = arctan(s/c)` over a `(c, s)` box.
//!
//! With corners `z1 = (c̲, s̄)`, `z2 = (c̄, s̄)`, `z3 = (c̄, s̲)`, `z4 = (c̲, s̲)`,
//! the upper planes interpolate `{z1, z2, z3}` and `{z1, z3, z4}` and the
//! lower planes `{z1, z2, z4}` and `{z2, z3, z4}`. Each plane is then shifted
//! by the largest violation over the box, found by enumerating the KKT points
//! of `arctan(s/c) − (γ + αc + βs)`.

use std::f64::consts::FRAC_PI_2;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bounds::{EdgeBoundSet, EdgeBox};
use crate::conic::{LinExpr, VariableKey};
use crate::network::Network;
use crate::relaxations::Relaxation;

/// Side length of the verification grid run after the KKT enumeration.
const GUARD_GRID: usize = 201;
/// Added to every shift to absorb rounding in the enumeration.
const SHIFT_SLACK: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvelopeError {
    #[error("arctangent box needs c_lo > 0, got {0}")]
    NonpositiveC(f64),
    #[error("inverted box side [{lo}, {hi}]")]
    Inverted { lo: f64, hi: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArctanBox {
    pub c_lo: f64,
    pub c_hi: f64,
    pub s_lo: f64,
    pub s_hi: f64,
}

impl ArctanBox {
    pub fn new(c_lo: f64, c_hi: f64, s_lo: f64, s_hi: f64) -> Result<Self, EnvelopeError> {
        if !(c_lo > 0.0) {
            return Err(EnvelopeError::NonpositiveC(c_lo));
        }
        for (lo, hi) in [(c_lo, c_hi), (s_lo, s_hi)] {
            if !(lo <= hi) {
                return Err(EnvelopeError::Inverted { lo, hi });
            }
        }
        Ok(ArctanBox { c_lo, c_hi, s_lo, s_hi })
    }

    pub fn from_edge(bx: &EdgeBox) -> Result<Self, EnvelopeError> {
        ArctanBox::new(bx.c_lo, bx.c_hi, bx.s_lo, bx.s_hi)
    }

    /// `z1..z4` as `(c, s)`.
    pub fn corners(&self) -> [(f64, f64); 4] {
        [
            (self.c_lo, self.s_hi),
            (self.c_hi, self.s_hi),
            (self.c_hi, self.s_lo),
            (self.c_lo, self.s_lo),
        ]
    }

    fn contains(&self, c: f64, s: f64) -> bool {
        c >= self.c_lo && c <= self.c_hi && s >= self.s_lo && s <= self.s_hi
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    Upper,
    Lower,
}

/// `θ ≤ γ′ + αc + βs` (upper) or `θ ≥ γ′ + αc + βs` (lower).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvelopePlane {
    pub gamma_prime: f64,
    pub alpha: f64,
    pub beta: f64,
    pub side: Side,
    pub delta_gamma: f64,
}

impl EnvelopePlane {
    pub fn eval(&self, c: f64, s: f64) -> f64 {
        self.gamma_prime + self.alpha * c + self.beta * s
    }

    /// Signed amount by which `θ` violates the plane; positive is a violation.
    pub fn violation(&self, c: f64, s: f64, theta: f64) -> f64 {
        match self.side {
            Side::Upper => theta - self.eval(c, s),
            Side::Lower => self.eval(c, s) - theta,
        }
    }
}

fn atan_cs(c: f64, s: f64) -> f64 {
    (s / c).atan()
}

/// Plane `γ + αc + βs` through three points of the graph of `arctan(s/c)`.
fn interpolate(p: [(f64, f64); 3]) -> (f64, f64, f64) {
    let m = nalgebra::Matrix3::new(1.0, p[0].0, p[0].1, 1.0, p[1].0, p[1].1, 1.0, p[2].0, p[2].1);
    let rhs = nalgebra::Vector3::new(atan_cs(p[0].0, p[0].1), atan_cs(p[1].0, p[1].1), atan_cs(p[2].0, p[2].1));
    let x = m.lu().solve(&rhs).expect("box corners are affinely independent");
    (x[0], x[1], x[2])
}

/// Points where `arctan(s/c) − αc − βs` can attain an extremum on the box:
/// corners, stationary points along each side, and the interior stationary
/// point.
pub fn kkt_candidates(b: &ArctanBox, alpha: f64, beta: f64) -> Vec<(f64, f64)> {
    let mut pts: Vec<(f64, f64)> = b.corners().to_vec();
    // Interior: ∂/∂c = −s/r² = α and ∂/∂s = c/r² = β.
    let n2 = alpha * alpha + beta * beta;
    if n2 > 0.0 {
        pts.push((beta / n2, -alpha / n2));
    }
    // Sides c = c0: c0/(c0² + s²) = β.
    if beta > 0.0 {
        for c0 in [b.c_lo, b.c_hi] {
            let s2 = c0 / beta - c0 * c0;
            if s2 >= 0.0 {
                pts.push((c0, s2.sqrt()));
                pts.push((c0, -s2.sqrt()));
            }
        }
    }
    // Sides s = s0: −s0/(c² + s0²) = α.
    if alpha != 0.0 {
        for s0 in [b.s_lo, b.s_hi] {
            let c2 = -s0 / alpha - s0 * s0;
            if c2 >= 0.0 {
                pts.push((c2.sqrt(), s0));
            }
        }
    }
    pts.retain(|&(c, s)| b.contains(c, s));
    pts
}

/// Largest value of `sign·(arctan(s/c) − (γ + αc + βs))` over the box.
fn max_gap(b: &ArctanBox, (gamma, alpha, beta): (f64, f64, f64), sign: f64) -> f64 {
    let gap = |c: f64, s: f64| sign * (atan_cs(c, s) - (gamma + alpha * c + beta * s));
    let mut best = kkt_candidates(b, alpha, beta)
        .into_iter()
        .map(|(c, s)| gap(c, s))
        .fold(f64::NEG_INFINITY, f64::max);
    let steps = (GUARD_GRID - 1) as f64;
    for i in 0..GUARD_GRID {
        let c = b.c_lo + (b.c_hi - b.c_lo) * i as f64 / steps;
        for j in 0..GUARD_GRID {
            let s = b.s_lo + (b.s_hi - b.s_lo) * j as f64 / steps;
            best = best.max(gap(c, s));
        }
    }
    best.max(0.0)
}

fn shifted(b: &ArctanBox, plane: (f64, f64, f64), side: Side) -> EnvelopePlane {
    let sign = if side == Side::Upper { 1.0 } else { -1.0 };
    let dg = max_gap(b, plane, sign);
    let delta = if dg > 0.0 { dg + SHIFT_SLACK } else { 0.0 };
    EnvelopePlane {
        gamma_prime: plane.0 + sign * delta,
        alpha: plane.1,
        beta: plane.2,
        side,
        delta_gamma: delta,
    }
}

/// The four envelope planes of the box: two upper, then two lower.
///
/// A box with a zero-width side has no three affinely independent corners;
/// the envelope then uses the secant along the remaining side, shifted up and
/// down, and each plane appears twice.
pub fn arctan_envelope(b: &ArctanBox) -> [EnvelopePlane; 4] {
    let [z1, z2, z3, z4] = b.corners();
    if b.c_lo == b.c_hi || b.s_lo == b.s_hi {
        let (lo, hi) = (z4, z2);
        let (dc, ds) = (hi.0 - lo.0, hi.1 - lo.1);
        let rise = atan_cs(hi.0, hi.1) - atan_cs(lo.0, lo.1);
        let (alpha, beta) = match (dc != 0.0, ds != 0.0) {
            (true, _) => (rise / dc, 0.0),
            (false, true) => (0.0, rise / ds),
            _ => (0.0, 0.0),
        };
        let secant = (atan_cs(lo.0, lo.1) - alpha * lo.0 - beta * lo.1, alpha, beta);
        let up = shifted(b, secant, Side::Upper);
        let down = shifted(b, secant, Side::Lower);
        return [up, up, down, down];
    }
    [
        shifted(b, interpolate([z1, z2, z3]), Side::Upper),
        shifted(b, interpolate([z1, z3, z4]), Side::Upper),
        shifted(b, interpolate([z1, z2, z4]), Side::Lower),
        shifted(b, interpolate([z2, z3, z4]), Side::Lower),
    ]
}

/// Edges that received envelopes and edges skipped because their `c`
/// interval reaches 0.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeReport {
    pub attached: Vec<usize>,
    pub skipped: Vec<usize>,
}

/// Adds bus angles `θ_i` (zero at one reference bus per component), a line
/// angle `θ_e = θ_to − θ_from` per edge with `c̲ > 0`, and the four envelope
/// planes tying `θ_e` to `(c_e, s_e)`. Branch angle limits below π/2 in
/// magnitude also bound `θ_e`.
pub fn attach_envelopes(rel: &mut Relaxation, net: &Network, bounds: &EdgeBoundSet) -> EnvelopeReport {
    let planes: Vec<Option<[EnvelopePlane; 4]>> = bounds
        .edges
        .par_iter()
        .enumerate()
        .map(|(e, bx)| {
            if rel.c.get(e).is_none_or(|c| c.is_none()) {
                return None;
            }
            ArctanBox::from_edge(bx).ok().map(|b| arctan_envelope(&b))
        })
        .collect();

    let refs = net.reference_buses();
    let prog = &mut rel.program;
    let mut theta = |prog: &mut crate::conic::ConicProgram, i: usize| -> LinExpr {
        let r = refs[net.component[i]];
        rel.theta_reference[i] = Some(r);
        if i == r {
            LinExpr::zero()
        } else {
            prog.var(VariableKey::Theta(i)).into()
        }
    };

    let mut report = EnvelopeReport::default();
    for (e, env) in planes.iter().enumerate() {
        let Some(env) = env else {
            if rel.c.get(e).is_some_and(|c| c.is_some()) {
                report.skipped.push(e);
            }
            continue;
        };
        let (from, to) = (net.edges[e].from, net.edges[e].to);
        let line = prog.var(VariableKey::LineTheta(e));
        let diff = theta(prog, to) - theta(prog, from);
        prog.add_eq(line, diff);
        let (c, s) = (rel.c[e].clone().unwrap(), rel.s[e].clone().unwrap());
        for p in env {
            let rhs = c.clone() * p.alpha + s.clone() * p.beta + p.gamma_prime;
            match p.side {
                Side::Upper => prog.add_le(line, rhs),
                Side::Lower => prog.add_ge(line, rhs),
            };
        }
        // angle_min ≤ θ_f − θ_t ≤ angle_max, and θ_e = θ_to − θ_from along the edge.
        for &k in &net.edges[e].branches {
            let br = &net.branches[k];
            let diff = LinExpr::from(line) * if br.reversed { 1.0 } else { -1.0 };
            if let Some(lo) = br.angle_min.filter(|a| a.abs() < FRAC_PI_2) {
                prog.add_ge(diff.clone(), lo);
            }
            if let Some(hi) = br.angle_max.filter(|a| a.abs() < FRAC_PI_2) {
                prog.add_le(diff, hi);
            }
        }
        report.attached.push(e);
    }
    report
}
