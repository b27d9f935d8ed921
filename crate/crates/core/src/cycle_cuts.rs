//! Cycle constraints as bilinear systems, their McCormick relaxations and the
//! LP separation oracle.
//!
//! Write `z_ab = c_ab + i·s_ab` for the ordered pair `a → b`, so that
//! `z_ab = |V_a||V_b| e^{i(θ_b − θ_a)}` at an AC point. Every cycle identity
//! used here is a product identity between such numbers:
//!
//! * fan triangle `(1, i, i+1)`: `z_{1,i}·c_{i+1,i+1} = z_{1,i+1}·conj(z_{i,i+1})`,
//! * chain triangle `(1, b, c)`: `z_{1,b}·z_{b,c} = c_bb·z_{1,c}`,
//! * square `(a, b, c, d)`: `z_ab·z_cd = conj(z_bc)·z_ad`.
//!
//! The imaginary and real parts give the two bilinear rows of each piece.
//! The 3-decomposition fans a cycle into triangles from its lowest-index
//! bus; the 4-decomposition fans it into squares, closing odd cycles with one
//! chain triangle.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::Path;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bounds::{clip_to_default, propagate_artificial_3, propagate_artificial_4, EdgeBoundSet, EdgeBox, Interval};
use crate::conic::{ConicBackend, ConicError, ConicProgram, ConicSolution, LinExpr, SolverOptions, VariableKey};
use crate::network::{Cycle, Network};
use crate::relaxations::{mccormick, McCormickBox, Relaxation};

/// Separation threshold on `v*`.
pub const EPS_SEP: f64 = 1e-6;
/// Cap on the multipliers of the separation LP.
const LAMBDA_CAP: f64 = 1e4;
/// Resolution of the duplicate-cut hash.
const DEDUP_RESOLUTION: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CutError {
    #[error("no finite box for {0:?}")]
    MissingBounds(Scalar),
    #[error("separation solve failed: {0}")]
    SolverFailure(String),
    #[error(transparent)]
    Conic(#[from] ConicError),
    #[error("cut pool i/o: {0}")]
    Io(String),
}

/// A voltage-product variable of the master relaxation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ProductVar {
    Cii(usize),
    C(usize),
    S(usize),
}

impl ProductVar {
    pub fn expr(self, rel: &Relaxation) -> &LinExpr {
        match self {
            ProductVar::Cii(i) => rel.cii(i),
            ProductVar::C(e) => rel.c(e),
            ProductVar::S(e) => rel.s(e),
        }
    }

    pub fn value(self, rel: &Relaxation, sol: &ConicSolution) -> f64 {
        sol.eval(self.expr(rel))
    }
}

/// A scalar of a bilinear cycle system: a master product or the real or
/// imaginary part of artificial edge `k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Scalar {
    Master(ProductVar),
    ArtC(usize),
    ArtS(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Decomposition {
    Three,
    Four,
}

/// Artificial chord `from → to`, `from` being the fan root.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArtificialEdge {
    pub from: usize,
    pub to: usize,
    pub bounds: EdgeBox,
}

/// `Σ coef·x·y = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BilinearRow {
    pub terms: Vec<(f64, Scalar, Scalar)>,
}

impl BilinearRow {
    pub fn eval(&self, val: &dyn Fn(Scalar) -> f64) -> f64 {
        self.terms.iter().map(|&(k, x, y)| k * val(x) * val(y)).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BilinearCycleSystem {
    pub cycle_id: usize,
    /// The cycle read from its lowest-index bus.
    pub cycle: Cycle,
    pub kind: Decomposition,
    pub artificial: Vec<ArtificialEdge>,
    /// Cycle equalities, two per triangle or square.
    pub rows: Vec<BilinearRow>,
    /// `c² + s² − c_aa·c_bb = 0` for cycle edges and artificial chords.
    pub surface: Vec<BilinearRow>,
}

/// `re + i·sign·im`; `im` is absent for a diagonal `c_ii`.
#[derive(Debug, Clone, Copy)]
struct Factor {
    re: Scalar,
    im: Option<(Scalar, f64)>,
}

impl Factor {
    fn diag(i: usize) -> Self {
        Factor { re: Scalar::Master(ProductVar::Cii(i)), im: None }
    }

    fn conj(self) -> Self {
        Factor { re: self.re, im: self.im.map(|(s, k)| (s, -k)) }
    }
}

/// Real and imaginary parts of `f·g` as bilinear terms.
fn product(f: Factor, g: Factor) -> (Vec<(f64, Scalar, Scalar)>, Vec<(f64, Scalar, Scalar)>) {
    let mut re = vec![(1.0, f.re, g.re)];
    let mut im = vec![];
    if let (Some((fs, fk)), Some((gs, gk))) = (f.im, g.im) {
        re.push((-fk * gk, fs, gs));
    }
    if let Some((gs, gk)) = g.im {
        im.push((gk, f.re, gs));
    }
    if let Some((fs, fk)) = f.im {
        im.push((fk, fs, g.re));
    }
    (re, im)
}

/// Imaginary then real row of `lhs.0·lhs.1 − rhs.0·rhs.1 = 0`.
fn identity_rows(lhs: (Factor, Factor), rhs: (Factor, Factor)) -> [BilinearRow; 2] {
    let (lre, lim) = product(lhs.0, lhs.1);
    let (rre, rim) = product(rhs.0, rhs.1);
    let neg = |v: Vec<(f64, Scalar, Scalar)>| v.into_iter().map(|(k, x, y)| (-k, x, y));
    [
        BilinearRow { terms: lim.into_iter().chain(neg(rim)).collect() },
        BilinearRow { terms: lre.into_iter().chain(neg(rre)).collect() },
    ]
}

/// Factors for the ordered pairs of one cycle: its edges and the fan chords.
struct Pairs<'a> {
    net: &'a Network,
    root: usize,
    chords: BTreeMap<usize, usize>,
}

impl Pairs<'_> {
    fn get(&self, a: usize, b: usize) -> Factor {
        if a == self.root || b == self.root {
            let other = if a == self.root { b } else { a };
            if let Some(&k) = self.chords.get(&other) {
                let f = Factor { re: Scalar::ArtC(k), im: Some((Scalar::ArtS(k), 1.0)) };
                return if a == self.root { f } else { f.conj() };
            }
        }
        let e = self.net.edge_between(a, b).expect("consecutive cycle buses share an edge");
        let sign = if self.net.edges[e].from == a { 1.0 } else { -1.0 };
        Factor {
            re: Scalar::Master(ProductVar::C(e)),
            im: Some((Scalar::Master(ProductVar::S(e)), sign)),
        }
    }
}

fn surface_row(f: Factor, a: usize, b: usize) -> BilinearRow {
    let (s, _) = f.im.unwrap();
    BilinearRow {
        terms: vec![
            (1.0, f.re, f.re),
            (1.0, s, s),
            (-1.0, Scalar::Master(ProductVar::Cii(a)), Scalar::Master(ProductVar::Cii(b))),
        ],
    }
}

/// Box of a chord: the propagated box, clipped to the magnitude box, and
/// intersected with any box already known for the pair.
fn chord_box(net: &Network, bounds: &EdgeBoundSet, root: usize, to: usize, propagated: Option<EdgeBox>) -> EdgeBox {
    let default = EdgeBoundSet::default_pair(net, root, to);
    let mut bx = propagated.map_or(default, |p| clip_to_default(p, &default));
    if let Some(known) = bounds.pair(net, root, to) {
        let meet = clip_to_default(bx, &known);
        if meet.c_lo <= meet.c_hi && meet.s_lo <= meet.s_hi {
            bx = meet;
        }
    }
    if bx.c_lo > bx.c_hi || bx.s_lo > bx.s_hi {
        bx = default;
    }
    bx
}

fn oriented(net: &Network, bounds: &EdgeBoundSet, a: usize, b: usize) -> EdgeBox {
    bounds.pair(net, a, b).unwrap_or_else(|| EdgeBoundSet::default_pair(net, a, b))
}

fn finish(
    cycle_id: usize,
    cycle: Cycle,
    kind: Decomposition,
    artificial: Vec<ArtificialEdge>,
    rows: Vec<BilinearRow>,
    pairs: &Pairs,
) -> BilinearCycleSystem {
    let n = cycle.len();
    let b = &cycle.buses;
    let mut surface: Vec<BilinearRow> = (0..n).map(|k| surface_row(pairs.get(b[k], b[(k + 1) % n]), b[k], b[(k + 1) % n])).collect();
    for a in &artificial {
        surface.push(surface_row(pairs.get(a.from, a.to), a.from, a.to));
    }
    BilinearCycleSystem { cycle_id, cycle, kind, artificial, rows, surface }
}

/// 3-decomposition: chords `(1, i)` for `i = 3..n−1` and the fan-triangle
/// rows of every `(1, i, i+1)`. A 3-cycle gets its two rows directly.
pub fn build_bilinear_3(net: &Network, cycle_id: usize, cycle: &Cycle, bounds: &EdgeBoundSet) -> BilinearCycleSystem {
    let cycle = cycle.rooted_at_min();
    let b = &cycle.buses;
    let n = b.len();
    assert!(n >= 3, "cycles have at least three buses");
    let root = b[0];
    let mut artificial = Vec::new();
    let mut chords = BTreeMap::new();
    let mut prev = oriented(net, bounds, root, b[1]);
    for i in 2..n - 1 {
        let step = oriented(net, bounds, b[i - 1], b[i]);
        let prop = propagate_artificial_3(&prev, &step, bounds.cii_interval(b[i - 1])).ok();
        let bx = chord_box(net, bounds, root, b[i], prop);
        chords.insert(b[i], artificial.len());
        artificial.push(ArtificialEdge { from: root, to: b[i], bounds: bx });
        prev = bx;
    }
    let pairs = Pairs { net, root, chords };
    let mut rows = Vec::new();
    for i in 1..n - 1 {
        let (bi, bj) = (b[i], b[i + 1]);
        rows.extend(identity_rows(
            (pairs.get(root, bi), Factor::diag(bj)),
            (pairs.get(root, bj), pairs.get(bi, bj).conj()),
        ));
    }
    finish(cycle_id, cycle, Decomposition::Three, artificial, rows, &pairs)
}

/// 4-decomposition: chords `(1, 2i)` and the square rows of every
/// `(1, 2i−2, 2i−1, 2i)`; odd cycles close with the chain triangle
/// `(1, n−1, n)`. 3-cycles fall back to [`build_bilinear_3`].
pub fn build_bilinear_4(net: &Network, cycle_id: usize, cycle: &Cycle, bounds: &EdgeBoundSet) -> BilinearCycleSystem {
    let cycle = cycle.rooted_at_min();
    let n = cycle.len();
    if n == 3 {
        return build_bilinear_3(net, cycle_id, &cycle, bounds);
    }
    let b = &cycle.buses;
    let root = b[0];
    // 1-based numbering: bus k is b[k − 1].
    let bus = |k: usize| b[k - 1];
    let last_square = if n % 2 == 0 { n / 2 } else { (n - 1) / 2 };
    let mut artificial = Vec::new();
    let mut chords = BTreeMap::new();
    let mut prev = oriented(net, bounds, root, bus(2));
    for i in 2..=last_square {
        let far = bus(2 * i);
        if far == bus(n) {
            break;
        }
        let prop = propagate_artificial_4(
            &prev,
            &oriented(net, bounds, bus(2 * i - 2), bus(2 * i - 1)),
            &oriented(net, bounds, bus(2 * i - 1), far),
            bounds.cii_interval(bus(2 * i - 2)),
            bounds.cii_interval(bus(2 * i - 1)),
        )
        .ok();
        let bx = chord_box(net, bounds, root, far, prop);
        chords.insert(far, artificial.len());
        artificial.push(ArtificialEdge { from: root, to: far, bounds: bx });
        prev = bx;
    }
    let pairs = Pairs { net, root, chords };
    let mut rows = Vec::new();
    for i in 2..=last_square {
        let (a, bb, c, d) = (root, bus(2 * i - 2), bus(2 * i - 1), bus(2 * i));
        rows.extend(identity_rows(
            (pairs.get(a, bb), pairs.get(c, d)),
            (pairs.get(bb, c).conj(), pairs.get(a, d)),
        ));
    }
    if n % 2 == 1 {
        let (mid, end) = (bus(n - 1), bus(n));
        rows.extend(identity_rows(
            (pairs.get(root, mid), pairs.get(mid, end)),
            (Factor::diag(mid), pairs.get(root, end)),
        ));
    }
    finish(cycle_id, cycle, Decomposition::Four, artificial, rows, &pairs)
}

/// Sparse row `Az + Ãz̃ + By ≤ c`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SparseRow {
    pub z: Vec<(usize, f64)>,
    pub zt: Vec<(usize, f64)>,
    pub y: Vec<(usize, f64)>,
    pub rhs: f64,
}

/// McCormick relaxation of a cycle system in the compact form
/// `Az + Ãz̃ + By ≤ c`, `Ey = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearizedCycleSystem {
    pub cycle_id: usize,
    pub kind: Decomposition,
    /// Master products on the cycle, with their boxes.
    pub z: Vec<ProductVar>,
    pub z_box: Vec<(f64, f64)>,
    /// `z̃[2k]` and `z̃[2k + 1]` are the real and imaginary parts of chord `k`.
    pub zt_box: Vec<(f64, f64)>,
    /// Bilinear products, one surrogate each.
    pub y: Vec<(Scalar, Scalar)>,
    pub ineq: Vec<SparseRow>,
    /// Rows of `E`, over `y`.
    pub eq: Vec<Vec<(usize, f64)>>,
}

enum Slot {
    Z(usize),
    Zt(usize),
}

impl LinearizedCycleSystem {
    fn slot(&self, x: Scalar) -> Slot {
        match x {
            Scalar::Master(p) => Slot::Z(self.z.binary_search(&p).expect("scalar of this system")),
            Scalar::ArtC(k) => Slot::Zt(2 * k),
            Scalar::ArtS(k) => Slot::Zt(2 * k + 1),
        }
    }

    fn scalar_box(&self, x: Scalar) -> (f64, f64) {
        match self.slot(x) {
            Slot::Z(k) => self.z_box[k],
            Slot::Zt(k) => self.zt_box[k],
        }
    }

    /// Largest `|y_k|` over the boxes.
    fn y_magnitude(&self, k: usize) -> f64 {
        let (a, b) = self.y[k];
        let (ia, ib) = (self.scalar_box(a), self.scalar_box(b));
        let p = Interval::new(ia.0, ia.1).mul(Interval::new(ib.0, ib.1));
        p.lo.abs().max(p.hi.abs())
    }

    /// Largest violation of the system at `(z, z̃)` with `y` set to the exact
    /// products.
    pub fn violation_at(&self, z: &[f64], zt: &[f64]) -> f64 {
        let val = |x: Scalar| match self.slot(x) {
            Slot::Z(k) => z[k],
            Slot::Zt(k) => zt[k],
        };
        let y: Vec<f64> = self.y.iter().map(|&(a, b)| val(a) * val(b)).collect();
        let mut worst: f64 = 0.0;
        for r in &self.ineq {
            let lhs = r.z.iter().map(|&(k, a)| a * z[k]).sum::<f64>()
                + r.zt.iter().map(|&(k, a)| a * zt[k]).sum::<f64>()
                + r.y.iter().map(|&(k, a)| a * y[k]).sum::<f64>();
            worst = worst.max(lhs - r.rhs);
        }
        for r in &self.eq {
            worst = worst.max(r.iter().map(|&(k, a)| a * y[k]).sum::<f64>().abs());
        }
        worst
    }
}

fn scalar_box(sys: &BilinearCycleSystem, bounds: &EdgeBoundSet, x: Scalar) -> Result<(f64, f64), CutError> {
    let bx = match x {
        Scalar::Master(ProductVar::Cii(i)) => bounds.cii.get(i).copied(),
        Scalar::Master(ProductVar::C(e)) => bounds.edges.get(e).map(|b| (b.c_lo, b.c_hi)),
        Scalar::Master(ProductVar::S(e)) => bounds.edges.get(e).map(|b| (b.s_lo, b.s_hi)),
        Scalar::ArtC(k) => sys.artificial.get(k).map(|a| (a.bounds.c_lo, a.bounds.c_hi)),
        Scalar::ArtS(k) => sys.artificial.get(k).map(|a| (a.bounds.s_lo, a.bounds.s_hi)),
    };
    match bx {
        Some((lo, hi)) if lo.is_finite() && hi.is_finite() && lo <= hi => Ok((lo, hi)),
        _ => Err(CutError::MissingBounds(x)),
    }
}

/// McCormick envelopes of every product plus variable boxes; cycle and
/// surface equalities become rows of `E`.
pub fn linearize(sys: &BilinearCycleSystem, bounds: &EdgeBoundSet) -> Result<LinearizedCycleSystem, CutError> {
    let all_rows: Vec<&BilinearRow> = sys.rows.iter().chain(&sys.surface).collect();
    let mut z: Vec<ProductVar> = all_rows
        .iter()
        .flat_map(|r| r.terms.iter().flat_map(|&(_, a, b)| [a, b]))
        .filter_map(|x| match x {
            Scalar::Master(p) => Some(p),
            _ => None,
        })
        .collect();
    z.sort_unstable();
    z.dedup();
    let mut lin = LinearizedCycleSystem {
        cycle_id: sys.cycle_id,
        kind: sys.kind,
        z_box: Vec::with_capacity(z.len()),
        z,
        zt_box: Vec::with_capacity(2 * sys.artificial.len()),
        y: Vec::new(),
        ineq: Vec::new(),
        eq: Vec::new(),
    };
    for k in 0..lin.z.len() {
        lin.z_box.push(scalar_box(sys, bounds, Scalar::Master(lin.z[k]))?);
    }
    for k in 0..sys.artificial.len() {
        lin.zt_box.push(scalar_box(sys, bounds, Scalar::ArtC(k))?);
        lin.zt_box.push(scalar_box(sys, bounds, Scalar::ArtS(k))?);
    }

    let mut y_index: BTreeMap<(Scalar, Scalar), usize> = BTreeMap::new();
    for row in &all_rows {
        let mut e: BTreeMap<usize, f64> = BTreeMap::new();
        for &(coef, a, b) in &row.terms {
            let key = if a <= b { (a, b) } else { (b, a) };
            let next = y_index.len();
            let k = *y_index.entry(key).or_insert(next);
            *e.entry(k).or_insert(0.0) += coef;
        }
        lin.eq.push(e.into_iter().filter(|t| t.1 != 0.0).collect());
    }
    lin.y = vec![(Scalar::ArtC(0), Scalar::ArtC(0)); y_index.len()];
    for (&key, &k) in &y_index {
        lin.y[k] = key;
    }

    let place = |lin: &LinearizedCycleSystem, row: &mut SparseRow, x: Scalar, a: f64| match lin.slot(x) {
        Slot::Z(k) => row.z.push((k, a)),
        Slot::Zt(k) => row.zt.push((k, a)),
    };
    for k in 0..lin.y.len() {
        let (a, b) = lin.y[k];
        let (ba, bb) = (lin.scalar_box(a), lin.scalar_box(b));
        let rows = mccormick(McCormickBox { x_lo: ba.0, x_hi: ba.1, y_lo: bb.0, y_hi: bb.1 })
            .map_err(|_| CutError::MissingBounds(a))?;
        let mut seen: Vec<[f64; 4]> = Vec::new();
        for r in rows {
            let (xa, xb) = if a == b { (r.x + r.y, 0.0) } else { (r.x, r.y) };
            let sig = [r.w, xa, xb, r.rhs];
            if seen.contains(&sig) {
                continue;
            }
            seen.push(sig);
            let mut row = SparseRow { y: vec![(k, r.w)], rhs: r.rhs, ..Default::default() };
            place(&lin, &mut row, a, xa);
            if a != b {
                place(&lin, &mut row, b, xb);
            }
            lin.ineq.push(row);
        }
        if a == b {
            lin.ineq.push(SparseRow { y: vec![(k, -1.0)], rhs: 0.0, ..Default::default() });
        }
    }
    let boxes: Vec<(Slot, (f64, f64))> = (0..lin.z.len())
        .map(|k| (Slot::Z(k), lin.z_box[k]))
        .chain((0..lin.zt_box.len()).map(|k| (Slot::Zt(k), lin.zt_box[k])))
        .collect();
    for (slot, (lo, hi)) in boxes {
        for (a, rhs) in [(1.0, hi), (-1.0, -lo)] {
            let mut row = SparseRow { rhs, ..Default::default() };
            match slot {
                Slot::Z(k) => row.z.push((k, a)),
                Slot::Zt(k) => row.zt.push((k, a)),
            }
            lin.ineq.push(row);
        }
    }
    Ok(lin)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CutOrigin {
    McCormick3,
    McCormick4,
    SdpCycle,
}

/// `Σ alpha·z ≤ beta` over master products.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cut {
    pub alpha: Vec<(ProductVar, f64)>,
    pub beta: f64,
    pub origin: CutOrigin,
    pub cycle_id: usize,
    /// `αᵀz* − β` at the separated point.
    pub violation: f64,
}

impl Cut {
    pub fn eval(&self, val: &dyn Fn(ProductVar) -> f64) -> f64 {
        self.alpha.iter().map(|&(p, a)| a * val(p)).sum::<f64>() - self.beta
    }

    pub fn add_to(&self, rel: &mut Relaxation) {
        let mut lhs = LinExpr::zero();
        for &(p, a) in &self.alpha {
            lhs += p.expr(rel).clone() * a;
        }
        rel.program.add_le(lhs.compact(), self.beta);
    }

    fn key(&self) -> Vec<i64> {
        let q = |v: f64| (v / DEDUP_RESOLUTION).round() as i64;
        let mut k: Vec<i64> = self.alpha.iter().flat_map(|&(p, a)| [hash_var(p), q(a)]).collect();
        k.push(q(self.beta));
        k
    }
}

fn hash_var(p: ProductVar) -> i64 {
    match p {
        ProductVar::Cii(i) => 3 * i as i64,
        ProductVar::C(e) => 3 * e as i64 + 1,
        ProductVar::S(e) => 3 * e as i64 + 2,
    }
}

/// Persistent cut pool; duplicates are dropped on insertion.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct CutPool {
    pub cuts: Vec<Cut>,
    #[serde(skip)]
    keys: HashSet<Vec<i64>>,
}

impl CutPool {
    /// Inserts the cut unless an identical one is pooled; returns whether it
    /// was new.
    pub fn insert(&mut self, cut: Cut) -> bool {
        if self.keys.insert(cut.key()) {
            self.cuts.push(cut);
            true
        } else {
            false
        }
    }

    pub fn len(&self) -> usize {
        self.cuts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cuts.is_empty()
    }

    pub fn count(&self, origin: CutOrigin) -> usize {
        self.cuts.iter().filter(|c| c.origin == origin).count()
    }

    pub fn save(&self, path: &Path) -> Result<(), CutError> {
        let text = serde_json::to_string_pretty(self).map_err(|e| CutError::Io(e.to_string()))?;
        fs::write(path, text).map_err(|e| CutError::Io(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CutError> {
        let text = fs::read_to_string(path).map_err(|e| CutError::Io(e.to_string()))?;
        let mut pool: CutPool = serde_json::from_str(&text).map_err(|e| CutError::Io(e.to_string()))?;
        pool.keys = pool.cuts.iter().map(Cut::key).collect();
        Ok(pool)
    }
}

/// Solves the separation LP
/// `min β − αᵀz*` s.t. `Aᵀλ = α`, `Ãᵀλ = 0`, `Bᵀλ + Eᵀμ = 0`, `cᵀλ ≤ β`,
/// `λ ≥ 0`, `|α| ≤ 1`, `|β| ≤ 1`, and returns the cut when `v* < −ε_sep`.
///
/// `β` is replaced by a bound that stays valid under the solver's residuals
/// in the dual equalities, so the returned cut holds on the whole
/// linearized region.
pub fn separate_mccormick(
    lin: &LinearizedCycleSystem,
    z_star: &[f64],
    backend: &dyn ConicBackend,
    opts: &SolverOptions,
) -> Result<Option<Cut>, CutError> {
    let mut p = ConicProgram::new();
    let alpha: Vec<_> = (0..lin.z.len()).map(|k| p.var(VariableKey::Aux("alpha", k))).collect();
    let beta = p.var(VariableKey::Aux("beta", 0));
    let lambda: Vec<_> = (0..lin.ineq.len()).map(|k| p.var(VariableKey::Aux("lambda", k))).collect();
    let mu: Vec<_> = (0..lin.eq.len()).map(|k| p.var(VariableKey::Aux("mu", k))).collect();

    let mut at_z = vec![LinExpr::zero(); lin.z.len()];
    let mut at_zt = vec![LinExpr::zero(); lin.zt_box.len()];
    let mut at_y = vec![LinExpr::zero(); lin.y.len()];
    let mut ct = LinExpr::zero();
    for (r, &l) in lin.ineq.iter().zip(&lambda) {
        for &(k, a) in &r.z {
            at_z[k].push(l, a);
        }
        for &(k, a) in &r.zt {
            at_zt[k].push(l, a);
        }
        for &(k, a) in &r.y {
            at_y[k].push(l, a);
        }
        ct.push(l, r.rhs);
    }
    for (row, &m) in lin.eq.iter().zip(&mu) {
        for &(k, a) in row {
            at_y[k].push(m, a);
        }
    }
    for (k, e) in at_z.into_iter().enumerate() {
        p.add_eq(e, alpha[k]);
    }
    for e in at_zt.into_iter().chain(at_y) {
        if !e.terms.is_empty() {
            p.add_eq(e, 0.0);
        }
    }
    p.add_le(ct, beta);
    for &l in &lambda {
        p.add_range(l, 0.0, LAMBDA_CAP);
    }
    for &a in &alpha {
        p.add_range(a, -1.0, 1.0);
    }
    p.add_range(beta, -1.0, 1.0);
    let mut obj = LinExpr::from(beta);
    for (k, &a) in alpha.iter().enumerate() {
        obj.push(a, -z_star[k]);
    }
    p.objective = obj;

    // Cuts are repaired to exact validity, so a loosely solved oracle is fine.
    let sol = p.solve(backend, &SolverOptions { retry_inaccurate: false, ..*opts })?;
    if !sol.is_optimal() {
        return Err(CutError::SolverFailure(format!("{:?}", sol.status)));
    }
    let lam: Vec<f64> = lambda.iter().map(|&l| sol.value(l).max(0.0)).collect();
    let mu_v: Vec<f64> = mu.iter().map(|&m| sol.value(m)).collect();
    let a_v: Vec<f64> = alpha.iter().map(|&a| sol.value(a)).collect();

    // αᵀz ≤ λᵀc + rᵀ(z, z̃, y) on the region, with r the dual residuals.
    let mut r_z = a_v.clone();
    let mut r_zt = vec![0.0; lin.zt_box.len()];
    let mut r_y = vec![0.0; lin.y.len()];
    let mut bound = 0.0;
    for (r, &l) in lin.ineq.iter().zip(&lam) {
        for &(k, a) in &r.z {
            r_z[k] -= a * l;
        }
        for &(k, a) in &r.zt {
            r_zt[k] -= a * l;
        }
        for &(k, a) in &r.y {
            r_y[k] -= a * l;
        }
        bound += r.rhs * l;
    }
    for (row, &m) in lin.eq.iter().zip(&mu_v) {
        for &(k, a) in row {
            r_y[k] -= a * m;
        }
    }
    let mag = |b: (f64, f64)| b.0.abs().max(b.1.abs());
    bound += r_z.iter().zip(&lin.z_box).map(|(r, &b)| r.abs() * mag(b)).sum::<f64>();
    bound += r_zt.iter().zip(&lin.zt_box).map(|(r, &b)| r.abs() * mag(b)).sum::<f64>();
    bound += r_y.iter().enumerate().map(|(k, r)| r.abs() * lin.y_magnitude(k)).sum::<f64>();
    let beta_safe = sol.value(beta).max(bound);

    let lhs: f64 = a_v.iter().zip(z_star).map(|(a, z)| a * z).sum();
    let v = beta_safe - lhs;
    if v >= -EPS_SEP {
        return Ok(None);
    }
    let origin = match lin.kind {
        Decomposition::Three => CutOrigin::McCormick3,
        Decomposition::Four => CutOrigin::McCormick4,
    };
    Ok(Some(Cut {
        alpha: lin.z.iter().copied().zip(a_v).filter(|t| t.1 != 0.0).collect(),
        beta: beta_safe,
        origin,
        cycle_id: lin.cycle_id,
        violation: -v,
    }))
}

/// Linearized 3- and 4-decompositions of every cycle. 3-cycles appear once.
pub fn linearized_systems(net: &Network, cycles: &[Cycle], bounds: &EdgeBoundSet) -> Vec<LinearizedCycleSystem> {
    cycles
        .par_iter()
        .enumerate()
        .flat_map_iter(|(id, cycle)| {
            let mut systems = vec![build_bilinear_3(net, id, cycle, bounds)];
            if cycle.len() >= 4 {
                systems.push(build_bilinear_4(net, id, cycle, bounds));
            }
            systems.into_iter().filter_map(move |s| match linearize(&s, bounds) {
                Ok(l) => Some(l),
                Err(e) => {
                    warn!("cycle {id}: {e}");
                    None
                }
            })
        })
        .collect()
}

/// One separation pass over all systems at the master solution. Failed
/// solves are logged and skipped.
pub fn separate_all(
    systems: &[LinearizedCycleSystem],
    rel: &Relaxation,
    sol: &ConicSolution,
    backend: &dyn ConicBackend,
    opts: &SolverOptions,
) -> Vec<Cut> {
    let found: Vec<Option<Cut>> = systems
        .par_iter()
        .map(|lin| {
            let z: Vec<f64> = lin.z.iter().map(|p| p.value(rel, sol)).collect();
            separate_mccormick(lin, &z, backend, opts).unwrap_or_else(|e| {
                warn!("cycle {}: {e}", lin.cycle_id);
                None
            })
        })
        .collect();
    found.into_iter().flatten().collect()
}
