//! Bound tightening for `(c_ij, s_ij)`: reduced-SOCP OBBT on real edges and
//! interval propagation onto artificial edges.

use std::fs;
use std::path::{Path, PathBuf};

use log::{debug, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::conic::{ClarabelBackend, ConicError, SolveStatus, SolverOptions};
use crate::network::{neighborhood, Network};
use crate::relaxations::{build_scoped, BuildOptions, RelaxationError, RelaxationKind, Scope};

/// Outward widening applied to every solved bound so solver tolerance
/// never cuts off a feasible point.
pub const OBBT_MARGIN: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum BoundsError {
    #[error("magnitude box [{lo}, {hi}] is not strictly positive")]
    NonpositiveMagnitudeBox { lo: f64, hi: f64 },
    #[error("reduced model around edge {edge} is infeasible: the OPF instance is infeasible")]
    Infeasible { edge: usize },
    #[error("edge {0} is not in the network")]
    UnknownEdge(usize),
    #[error(transparent)]
    Relaxation(#[from] RelaxationError),
    #[error(transparent)]
    Conic(#[from] ConicError),
    #[error("bound cache i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("bound cache format: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        Interval { lo, hi }
    }

    pub fn point(v: f64) -> Self {
        Interval { lo: v, hi: v }
    }

    pub fn contains(&self, v: f64, tol: f64) -> bool {
        v >= self.lo - tol && v <= self.hi + tol
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn mul(self, o: Interval) -> Interval {
        let p = [self.lo * o.lo, self.lo * o.hi, self.hi * o.lo, self.hi * o.hi];
        Interval {
            lo: p.iter().copied().fold(f64::INFINITY, f64::min),
            hi: p.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }

    pub fn add(self, o: Interval) -> Interval {
        Interval { lo: self.lo + o.lo, hi: self.hi + o.hi }
    }

    pub fn sub(self, o: Interval) -> Interval {
        Interval { lo: self.lo - o.hi, hi: self.hi - o.lo }
    }

    /// Division by a strictly positive interval: each end is divided by the
    /// denominator end that makes it extreme.
    pub fn div_positive(self, d: Interval) -> Result<Interval, BoundsError> {
        if !(d.lo > 0.0) {
            return Err(BoundsError::NonpositiveMagnitudeBox { lo: d.lo, hi: d.hi });
        }
        let hi = if self.hi > 0.0 { self.hi / d.lo } else { self.hi / d.hi };
        let lo = if self.lo < 0.0 { self.lo / d.lo } else { self.lo / d.hi };
        Ok(Interval { lo, hi })
    }

    pub fn intersect(self, o: Interval) -> Interval {
        Interval { lo: self.lo.max(o.lo), hi: self.hi.min(o.hi) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Provenance {
    Default,
    Tightened,
    Propagated,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeBox {
    pub c_lo: f64,
    pub c_hi: f64,
    pub s_lo: f64,
    pub s_hi: f64,
    pub provenance: Provenance,
}

impl EdgeBox {
    pub fn symmetric(radius: f64) -> Self {
        EdgeBox {
            c_lo: -radius,
            c_hi: radius,
            s_lo: -radius,
            s_hi: radius,
            provenance: Provenance::Default,
        }
    }

    pub fn c(&self) -> Interval {
        Interval::new(self.c_lo, self.c_hi)
    }

    pub fn s(&self) -> Interval {
        Interval::new(self.s_lo, self.s_hi)
    }

    /// The box of `(c_ji, s_ji) = (c_ij, −s_ij)`.
    pub fn reversed(&self) -> Self {
        EdgeBox {
            s_lo: -self.s_hi,
            s_hi: -self.s_lo,
            ..*self
        }
    }

    pub fn contains(&self, c: f64, s: f64, tol: f64) -> bool {
        self.c().contains(c, tol) && self.s().contains(s, tol)
    }

    pub fn is_within(&self, o: &EdgeBox, tol: f64) -> bool {
        self.c_lo >= o.c_lo - tol && self.c_hi <= o.c_hi + tol && self.s_lo >= o.s_lo - tol && self.s_hi <= o.s_hi + tol
    }

    fn from_intervals(c: Interval, s: Interval, provenance: Provenance) -> Self {
        EdgeBox {
            c_lo: c.lo,
            c_hi: c.hi,
            s_lo: s.lo,
            s_hi: s.hi,
            provenance,
        }
    }
}

/// Box for a bus pair that is not a network edge, keyed with `from < to`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArtificialBox {
    pub from: usize,
    pub to: usize,
    #[serde(flatten)]
    pub bounds: EdgeBox,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeBoundSet {
    pub fingerprint: String,
    pub radius: Option<usize>,
    pub edges: Vec<EdgeBox>,
    /// `(V̲², V̄²)` per bus.
    pub cii: Vec<(f64, f64)>,
    /// Sorted by `(from, to)`.
    pub artificial: Vec<ArtificialBox>,
}

impl EdgeBoundSet {
    pub fn default_for(net: &Network) -> Self {
        EdgeBoundSet {
            fingerprint: net.fingerprint(),
            radius: None,
            edges: net
                .edges
                .iter()
                .map(|e| EdgeBox::symmetric(net.buses[e.from].v_max * net.buses[e.to].v_max))
                .collect(),
            cii: net.buses.iter().map(|b| (b.v_min * b.v_min, b.v_max * b.v_max)).collect(),
            artificial: Vec::new(),
        }
    }

    pub fn cii_interval(&self, bus: usize) -> Interval {
        Interval::new(self.cii[bus].0, self.cii[bus].1)
    }

    /// Box of `(c_ij, s_ij)` in the orientation `i → j`, from a real edge if
    /// one joins the pair, else from the artificial table.
    pub fn pair(&self, net: &Network, i: usize, j: usize) -> Option<EdgeBox> {
        let (a, b) = (i.min(j), i.max(j));
        let bx = match net.edge_between(a, b) {
            Some(e) => self.edges[e],
            None => {
                let k = self.artificial.binary_search_by_key(&(a, b), |x| (x.from, x.to)).ok()?;
                self.artificial[k].bounds
            }
        };
        Some(if i < j { bx } else { bx.reversed() })
    }

    /// Records a box for the pair `i → j` unless a real edge joins them.
    pub fn set_artificial(&mut self, net: &Network, i: usize, j: usize, bx: EdgeBox) {
        let (a, b) = (i.min(j), i.max(j));
        if net.edge_between(a, b).is_some() {
            return;
        }
        let bx = if i < j { bx } else { bx.reversed() };
        let entry = ArtificialBox { from: a, to: b, bounds: bx };
        match self.artificial.binary_search_by_key(&(a, b), |x| (x.from, x.to)) {
            Ok(k) => self.artificial[k] = entry,
            Err(k) => self.artificial.insert(k, entry),
        }
    }

    /// Default box for a pair not joined by an edge.
    pub fn default_pair(net: &Network, i: usize, j: usize) -> EdgeBox {
        EdgeBox::symmetric(net.buses[i].v_max * net.buses[j].v_max)
    }

    pub fn cache_path(dir: &Path, net: &Network, radius: usize) -> PathBuf {
        dir.join(format!("{}-r{}.json", &net.fingerprint()[..16], radius))
    }

    pub fn save(&self, path: &Path) -> Result<(), BoundsError> {
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, BoundsError> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }
}

/// `(c13, s13)` from `(c12, s12)`, `(c23, s23)` and `c22` through
/// `c13 = (c12c23 − s12s23)/c22`, `s13 = (s12c23 + c12s23)/c22`.
pub fn propagate_artificial_3(e12: &EdgeBox, e23: &EdgeBox, c22: Interval) -> Result<EdgeBox, BoundsError> {
    let c_num = e12.c().mul(e23.c()).sub(e12.s().mul(e23.s()));
    let s_num = e12.s().mul(e23.c()).add(e12.c().mul(e23.s()));
    Ok(EdgeBox::from_intervals(
        c_num.div_positive(c22)?,
        s_num.div_positive(c22)?,
        Provenance::Propagated,
    ))
}

/// `(c14, s14)` from three consecutive edges: bound
/// `a = c23c34 − s23s34`, `b = s23c34 + c23s34`, then
/// `c14 = (c12a − s12b)/(c22c33)`, `s14 = (s12a + c12b)/(c22c33)`.
pub fn propagate_artificial_4(
    e12: &EdgeBox,
    e23: &EdgeBox,
    e34: &EdgeBox,
    c22: Interval,
    c33: Interval,
) -> Result<EdgeBox, BoundsError> {
    for d in [c22, c33] {
        if !(d.lo > 0.0) {
            return Err(BoundsError::NonpositiveMagnitudeBox { lo: d.lo, hi: d.hi });
        }
    }
    let a = e23.c().mul(e34.c()).sub(e23.s().mul(e34.s()));
    let b = e23.s().mul(e34.c()).add(e23.c().mul(e34.s()));
    let c_num = e12.c().mul(a).sub(e12.s().mul(b));
    let s_num = e12.s().mul(a).add(e12.c().mul(b));
    let den = c22.mul(c33);
    Ok(EdgeBox::from_intervals(
        c_num.div_positive(den)?,
        s_num.div_positive(den)?,
        Provenance::Propagated,
    ))
}

/// Intersects a propagated box with the default box of the pair.
pub fn clip_to_default(bx: EdgeBox, default: &EdgeBox) -> EdgeBox {
    EdgeBox {
        c_lo: bx.c_lo.max(default.c_lo),
        c_hi: bx.c_hi.min(default.c_hi),
        s_lo: bx.s_lo.max(default.s_lo),
        s_hi: bx.s_hi.min(default.s_hi),
        provenance: bx.provenance,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObbtOptions {
    pub radius: usize,
    pub build: BuildOptions,
    pub solver: SolverOptions,
}

impl Default for ObbtOptions {
    fn default() -> Self {
        ObbtOptions {
            radius: 2,
            build: BuildOptions::default(),
            solver: SolverOptions::default(),
        }
    }
}

/// Minimizes and maximizes `c` and `s` of one edge over the ASOCP model of
/// its radius-`r` neighborhood. A failed side keeps its default value.
pub fn tighten_edge(net: &Network, edge: usize, opts: &ObbtOptions) -> Result<EdgeBox, BoundsError> {
    if edge >= net.n_edges() {
        return Err(BoundsError::UnknownEdge(edge));
    }
    let (k, l) = (net.edges[edge].from, net.edges[edge].to);
    let nb = neighborhood(net, k, l, opts.radius);
    let scope = Scope::neighborhood(net, &nb);
    let defaults = EdgeBoundSet::default_for(net);
    let base = build_scoped(net, RelaxationKind::Asocp, &defaults, &opts.build, &scope)?;
    let default = defaults.edges[edge];
    let c = base.c(edge).clone();
    let s = base.s(edge).clone();
    let mut out = [default.c_lo, default.c_hi, default.s_lo, default.s_hi];
    for (slot, (expr, sign)) in [(c.clone(), 1.0), (c, -1.0), (s.clone(), 1.0), (s, -1.0)].into_iter().enumerate() {
        let mut prog = base.program.clone();
        prog.objective = expr * sign;
        match prog.solve(&ClarabelBackend, &opts.solver) {
            Ok(sol) if sol.is_optimal() => {
                let v = sign * sol.objective;
                let widened = v - sign * OBBT_MARGIN * (1.0 + v.abs());
                out[slot] = if sign > 0.0 { widened.max(out[slot]) } else { widened.min(out[slot]) };
            }
            Ok(sol) if sol.status == SolveStatus::Infeasible => return Err(BoundsError::Infeasible { edge }),
            Ok(sol) => warn!("edge {edge}: bound subproblem {slot} ended with {:?}; keeping default", sol.status),
            Err(e) => warn!("edge {edge}: bound subproblem {slot} failed ({e}); keeping default"),
        }
    }
    if out[0] > out[1] {
        let m = 0.5 * (out[0] + out[1]);
        out[0] = m;
        out[1] = m;
    }
    if out[2] > out[3] {
        let m = 0.5 * (out[2] + out[3]);
        out[2] = m;
        out[3] = m;
    }
    debug!("edge {edge} ({k},{l}): c ∈ [{:.6}, {:.6}], s ∈ [{:.6}, {:.6}]", out[0], out[1], out[2], out[3]);
    Ok(EdgeBox {
        c_lo: out[0],
        c_hi: out[1],
        s_lo: out[2],
        s_hi: out[3],
        provenance: Provenance::Tightened,
    })
}

/// Runs [`tighten_edge`] on every edge in parallel; results are stored by
/// edge index so the outcome does not depend on scheduling.
pub fn tighten_all(net: &Network, opts: &ObbtOptions) -> Result<EdgeBoundSet, BoundsError> {
    let boxes: Vec<Result<EdgeBox, BoundsError>> = (0..net.n_edges()).into_par_iter().map(|e| tighten_edge(net, e, opts)).collect();
    let mut set = EdgeBoundSet::default_for(net);
    set.radius = Some(opts.radius);
    for (e, b) in boxes.into_iter().enumerate() {
        set.edges[e] = b?;
    }
    Ok(set)
}

/// Same as [`tighten_all`] but reads and writes a JSON cache keyed by the
/// network fingerprint and radius.
pub fn tighten_all_cached(net: &Network, opts: &ObbtOptions, cache_dir: Option<&Path>) -> Result<EdgeBoundSet, BoundsError> {
    if let Some(dir) = cache_dir {
        let path = EdgeBoundSet::cache_path(dir, net, opts.radius);
        if let Ok(set) = EdgeBoundSet::load(&path) {
            if set.fingerprint == net.fingerprint() && set.radius == Some(opts.radius) {
                return Ok(set);
            }
        }
        let set = tighten_all(net, opts)?;
        set.save(&path)?;
        return Ok(set);
    }
    tighten_all(net, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::testnets;
    use proptest::prelude::*;

    fn bx(c: (f64, f64), s: (f64, f64)) -> EdgeBox {
        EdgeBox {
            c_lo: c.0,
            c_hi: c.1,
            s_lo: s.0,
            s_hi: s.1,
            provenance: Provenance::Default,
        }
    }

    #[test]
    fn flat_point_boxes_propagate_to_flat() {
        let flat = bx((1.0, 1.0), (0.0, 0.0));
        let r3 = propagate_artificial_3(&flat, &flat, Interval::point(1.0)).unwrap();
        assert_eq!((r3.c_lo, r3.c_hi, r3.s_lo, r3.s_hi), (1.0, 1.0, 0.0, 0.0));
        let r4 = propagate_artificial_4(&flat, &flat, &flat, Interval::point(1.0), Interval::point(1.0)).unwrap();
        assert_eq!((r4.c_lo, r4.c_hi, r4.s_lo, r4.s_hi), (1.0, 1.0, 0.0, 0.0));
    }

    #[test]
    fn three_cycle_upper_bound() {
        let e = bx((0.9, 1.1), (-0.2, 0.2));
        let r = propagate_artificial_3(&e, &e, Interval::new(0.81, 1.21)).unwrap();
        // max c12c23 = 1.21, min s12s23 = −0.04
        assert!((r.c_hi - 1.25 / 0.81).abs() < 1e-12);
        assert!((r.c_hi - 1.5432).abs() < 1e-4);
        // min c12c23 − max s12s23 = 0.81 − 0.04 > 0, so divide by c̄22
        assert!((r.c_lo - 0.77 / 1.21).abs() < 1e-12);
    }

    #[test]
    fn four_cycle_steps_match_direct_interval_evaluation() {
        let e = bx((0.8, 1.2), (-0.2, 0.2));
        let r = propagate_artificial_4(&e, &e, &e, Interval::new(0.81, 1.21), Interval::new(0.81, 1.21)).unwrap();
        // a ∈ [0.64 − 0.04, 1.44 + 0.04], b ∈ [−0.48, 0.48]
        let a = (0.60, 1.48);
        let b = (-0.48, 0.48);
        let c_num_hi = 1.2 * a.1 + 0.2 * b.1;
        let c_num_lo = 0.8 * a.0 - 0.2 * b.1;
        assert!((r.c_hi - c_num_hi / (0.81 * 0.81)).abs() < 1e-12);
        assert!((r.c_lo - c_num_lo / (1.21 * 1.21)).abs() < 1e-12);
        let s_num_hi = 0.2 * a.1 + 1.2 * b.1;
        assert!((r.s_hi - s_num_hi / (0.81 * 0.81)).abs() < 1e-12);
        assert!((r.s_lo + s_num_hi / (0.81 * 0.81)).abs() < 1e-12);
    }

    #[test]
    fn nonpositive_magnitude_rejected() {
        let e = bx((0.9, 1.1), (-0.2, 0.2));
        assert!(matches!(
            propagate_artificial_3(&e, &e, Interval::new(0.0, 1.0)),
            Err(BoundsError::NonpositiveMagnitudeBox { .. })
        ));
    }

    #[test]
    fn pair_lookup_orients_s() {
        let net = testnets::graph(4, &[(0, 1), (1, 2), (2, 3), (3, 0)]);
        let mut set = EdgeBoundSet::default_for(&net);
        set.set_artificial(&net, 2, 0, bx((0.5, 1.0), (0.1, 0.3)));
        let fwd = set.pair(&net, 0, 2).unwrap();
        assert_eq!((fwd.s_lo, fwd.s_hi), (-0.3, -0.1));
        let back = set.pair(&net, 2, 0).unwrap();
        assert_eq!((back.s_lo, back.s_hi), (0.1, 0.3));
        assert!(set.pair(&net, 1, 3).is_none());
        let e = net.edge_between(0, 1).unwrap();
        set.edges[e] = bx((0.9, 1.0), (-0.1, 0.2));
        assert_eq!(set.pair(&net, 1, 0).unwrap().s_hi, 0.1);
    }

    #[test]
    fn json_round_trip() {
        let net = testnets::graph(3, &[(0, 1), (1, 2), (2, 0)]);
        let mut set = EdgeBoundSet::default_for(&net);
        set.set_artificial(&net, 0, 2, bx((0.5, 1.0), (0.1, 0.3)));
        let dir = tempfile::tempdir().unwrap();
        let path = EdgeBoundSet::cache_path(dir.path(), &net, 2);
        set.save(&path).unwrap();
        assert_eq!(EdgeBoundSet::load(&path).unwrap(), set);
    }

    #[test]
    fn unit_magnitudes_cap_c_at_one() {
        let mut net = testnets::graph(2, &[(0, 1)]);
        for b in &mut net.buses {
            b.v_min = 1.0;
            b.v_max = 1.0;
        }
        let opts = ObbtOptions { radius: 0, ..Default::default() };
        let b = tighten_edge(&net, 0, &opts).unwrap();
        assert!(b.c_hi <= 1.0 + 1e-5);
        assert!(b.s_hi <= 1.0 + 1e-5 && b.s_lo >= -1.0 - 1e-5);
        assert_eq!(b.provenance, Provenance::Tightened);
    }

    fn arb_box() -> impl Strategy<Value = EdgeBox> {
        (-1.5..1.5f64, 0.0..0.6f64, -1.0..1.0f64, 0.0..0.6f64).prop_map(|(c, dc, s, ds)| bx((c, c + dc), (s, s + ds)))
    }

    fn widen(b: &EdgeBox, w: f64) -> EdgeBox {
        bx((b.c_lo - w, b.c_hi + w), (b.s_lo - w, b.s_hi + w))
    }

    fn sample(b: &EdgeBox, t: (f64, f64)) -> (f64, f64) {
        (b.c_lo + t.0 * (b.c_hi - b.c_lo), b.s_lo + t.1 * (b.s_hi - b.s_lo))
    }

    proptest! {
        #[test]
        fn propagation_is_monotone(e12 in arb_box(), e23 in arb_box(), e34 in arb_box(), lo in 0.5..1.0f64, w in 0.0..0.3f64) {
            let c22 = Interval::new(lo, lo + 0.3);
            let wide22 = Interval::new(lo - w / 2.0, lo + 0.3 + w);
            let narrow = propagate_artificial_3(&e12, &e23, c22).unwrap();
            let wide = propagate_artificial_3(&widen(&e12, w), &widen(&e23, w), wide22).unwrap();
            prop_assert!(narrow.is_within(&wide, 1e-12));
            let narrow4 = propagate_artificial_4(&e12, &e23, &e34, c22, c22).unwrap();
            let wide4 = propagate_artificial_4(&widen(&e12, w), &widen(&e23, w), &widen(&e34, w), wide22, wide22).unwrap();
            prop_assert!(narrow4.is_within(&wide4, 1e-12));
        }

        #[test]
        fn propagation_contains_exact_values(e12 in arb_box(), e23 in arb_box(), e34 in arb_box(), lo in 0.5..1.0f64,
                                             t in proptest::array::uniform8(0.0..1.0f64)) {
            let c22 = Interval::new(lo, lo + 0.3);
            let (c12, s12) = sample(&e12, (t[0], t[1]));
            let (c23, s23) = sample(&e23, (t[2], t[3]));
            let (c34, s34) = sample(&e34, (t[4], t[5]));
            let d2 = lo + 0.3 * t[6];
            let d3 = lo + 0.3 * t[7];
            let r = propagate_artificial_3(&e12, &e23, c22).unwrap();
            prop_assert!(r.contains((c12 * c23 - s12 * s23) / d2, (s12 * c23 + c12 * s23) / d2, 1e-12));
            let r4 = propagate_artificial_4(&e12, &e23, &e34, c22, c22).unwrap();
            let a = c23 * c34 - s23 * s34;
            let b = s23 * c34 + c23 * s34;
            prop_assert!(r4.contains((c12 * a - s12 * b) / (d2 * d3), (s12 * a + c12 * b) / (d2 * d3), 1e-12));
        }
    }
}
