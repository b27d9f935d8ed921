//! The six convex relaxations of AC OPF and their shared constraint
//! primitives.
//!
//! Every relaxation exposes affine expressions for the voltage products
//! `c_ii`, `c_ij`, `s_ij` in its own variables, so flow balance, voltage
//! bounds, line limits and angle limits are written once:
//!
//! | kind  | `c_ii`            | `c_ij`            | `s_ij`              |
//! |-------|-------------------|-------------------|---------------------|
//! | RM    | `E_ii + F_ii`     | `E_ij + F_ij`     | `H_ij − H_ji`       |
//! | AM    | `c_ii`            | `c_ij`            | `s_ij`              |
//! | ASOCP | `c_ii`            | `c_ij`            | `s_ij`              |
//! | RSOCP | `X_ii`            | `Re X_ij`         | `−Im X_ij`          |
//! | RSDP  | `W_ii + W_i'i'`   | `W_ij + W_i'j'`   | `W_ij' − W_ji'`     |
//! | ASDP  | `c_ii`            | `c_ij`            | `s_ij`              |
//!
//! RSDP fixes `W = [[A, −B], [B, A]]`, so its entries are `2A_ii`, `2A_ij`
//! and `2B_ij`.

use std::collections::BTreeMap;
use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bounds::EdgeBoundSet;
use crate::conic::{ConicProgram, LinExpr, Var, VariableKey};
use crate::network::{AcPoint, CostFunction, NeighborhoodSpec, Network};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RelaxationError {
    #[error("inverted McCormick bounds: [{lo}, {hi}]")]
    InvertedBounds { lo: f64, hi: f64 },
    #[error("bound set does not match the network ({0})")]
    MissingBounds(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McCormickBox {
    pub x_lo: f64,
    pub x_hi: f64,
    pub y_lo: f64,
    pub y_hi: f64,
}

/// `w·W + x·X + y·Y ≤ rhs`
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McCormickRow {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub rhs: f64,
}

impl McCormickRow {
    pub fn holds(&self, w: f64, x: f64, y: f64, tol: f64) -> bool {
        self.w * w + self.x * x + self.y * y <= self.rhs + tol
    }
}

/// The four-row envelope of `w = x·y` on a box: two under-estimators and
/// two over-estimators. A zero-width side is substituted, so the rows pin
/// `w` to the other factor times the fixed value.
pub fn mccormick(b: McCormickBox) -> Result<[McCormickRow; 4], RelaxationError> {
    for (lo, hi) in [(b.x_lo, b.x_hi), (b.y_lo, b.y_hi)] {
        if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(RelaxationError::InvertedBounds { lo, hi });
        }
    }
    let McCormickBox { x_lo, x_hi, y_lo, y_hi } = b;
    let mut rows = [
        McCormickRow { w: -1.0, x: y_lo, y: x_lo, rhs: x_lo * y_lo },
        McCormickRow { w: -1.0, x: y_hi, y: x_hi, rhs: x_hi * y_hi },
        McCormickRow { w: 1.0, x: -y_lo, y: -x_hi, rhs: -x_hi * y_lo },
        McCormickRow { w: 1.0, x: -y_hi, y: -x_lo, rhs: -x_lo * y_hi },
    ];
    for r in &mut rows {
        if x_lo == x_hi {
            r.rhs -= r.x * x_lo;
            r.x = 0.0;
        }
        if y_lo == y_hi {
            r.rhs -= r.y * y_lo;
            r.y = 0.0;
        }
    }
    Ok(rows)
}

/// Adds the envelope of `w = x·y`; with `x == y` it is the square envelope
/// plus `w ≥ 0`.
pub fn add_mccormick(prog: &mut ConicProgram, w: Var, x: Var, y: Var, b: McCormickBox) -> Result<(), RelaxationError> {
    let rows = mccormick(b)?;
    let mut seen: Vec<LinExpr> = Vec::with_capacity(4);
    for r in rows {
        let lhs = (w * r.w + x * r.x + y * r.y).compact();
        if seen.iter().any(|s| *s == lhs) && x == y {
            continue;
        }
        seen.push(lhs.clone());
        prog.add_le(lhs, r.rhs);
    }
    if x == y {
        prog.add_ge(w, 0.0);
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RelaxationKind {
    Rm,
    Am,
    Asocp,
    Rsocp,
    Rsdp,
    Asdp,
}

impl RelaxationKind {
    pub const ALL: [RelaxationKind; 6] = [
        RelaxationKind::Rm,
        RelaxationKind::Am,
        RelaxationKind::Asocp,
        RelaxationKind::Rsocp,
        RelaxationKind::Rsdp,
        RelaxationKind::Asdp,
    ];

    pub fn needs_psd(self) -> bool {
        matches!(self, RelaxationKind::Rsdp | RelaxationKind::Asdp)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BuildOptions {
    /// Apparent-power limits as SOC rows.
    pub line_limits: bool,
    /// Angle-difference limits as linear rows on `(c, s)`.
    pub angle_limits: bool,
}

impl Default for BuildOptions {
    fn default() -> Self {
        BuildOptions {
            line_limits: true,
            angle_limits: true,
        }
    }
}

/// A built relaxation with its voltage-product expressions. Entries outside
/// the modeled part of the network (reduced models) are `None`.
#[derive(Debug, Clone)]
pub struct Relaxation {
    pub kind: RelaxationKind,
    pub program: ConicProgram,
    pub cii: Vec<Option<LinExpr>>,
    pub c: Vec<Option<LinExpr>>,
    pub s: Vec<Option<LinExpr>>,
    pub pg: Vec<Option<Var>>,
    pub qg: Vec<Option<Var>>,
    /// Reference bus of each bus's angle variable, when angles are modeled.
    pub theta_reference: Vec<Option<usize>>,
}

impl Relaxation {
    pub fn cii(&self, bus: usize) -> &LinExpr {
        self.cii[bus].as_ref().expect("bus outside the model")
    }

    pub fn c(&self, edge: usize) -> &LinExpr {
        self.c[edge].as_ref().expect("edge outside the model")
    }

    pub fn s(&self, edge: usize) -> &LinExpr {
        self.s[edge].as_ref().expect("edge outside the model")
    }

    /// Value of every program variable at an AC point.
    pub fn lift(&self, net: &Network, p: &AcPoint) -> Vec<f64> {
        let nb = net.n_buses();
        let ends = |e: usize| (net.edges[e].from, net.edges[e].to);
        let z = |k: usize| asdp_generator(net, p, k);
        (0..self.program.n_vars())
            .map(|k| match self.program.key(Var(k)) {
                VariableKey::Cii(i) | VariableKey::XDiag(i) => p.vm[i] * p.vm[i],
                VariableKey::Cij(e) | VariableKey::XRe(e) => p.pair(ends(e).0, ends(e).1).0,
                VariableKey::Sij(e) => p.pair(ends(e).0, ends(e).1).1,
                VariableKey::XIm(e) => -p.pair(ends(e).0, ends(e).1).1,
                VariableKey::Pg(g) => p.pg[g],
                VariableKey::Qg(g) => p.qg[g],
                VariableKey::E(i) => p.e(i),
                VariableKey::F(i) => p.f(i),
                VariableKey::Eii(i) => p.e(i) * p.e(i),
                VariableKey::Fii(i) => p.f(i) * p.f(i),
                VariableKey::Eij(e) => p.e(ends(e).0) * p.e(ends(e).1),
                VariableKey::Fij(e) => p.f(ends(e).0) * p.f(ends(e).1),
                VariableKey::Hij(e) => p.e(ends(e).0) * p.f(ends(e).1),
                VariableKey::Hji(e) => p.e(ends(e).1) * p.f(ends(e).0),
                VariableKey::CijSq(e) => p.pair(ends(e).0, ends(e).1).0.powi(2),
                VariableKey::SijSq(e) => p.pair(ends(e).0, ends(e).1).1.powi(2),
                VariableKey::Dij(e) => (p.vm[ends(e).0] * p.vm[ends(e).1]).powi(2),
                VariableKey::W(r, c) => rsdp_entry(nb, p, r, c),
                VariableKey::Z(r, c) => z(r) * z(c),
                VariableKey::Theta(i) => p.va[i] - self.theta_reference[i].map_or(0.0, |r| p.va[r]),
                VariableKey::LineTheta(e) => {
                    let (c, s) = p.pair(ends(e).0, ends(e).1);
                    s.atan2(c)
                }
                VariableKey::CostEpigraph(g) => match &net.generators[g].cost {
                    CostFunction::Polynomial { c2, .. } => c2 * p.pg[g] * p.pg[g],
                    cost => cost.eval(p.pg[g]),
                },
                key => panic!("no AC value for {key}"),
            })
            .collect()
    }

    /// Largest constraint violation of the lifted AC point; completion
    /// entries come from the same rank-one lifting.
    pub fn violation_at(&self, net: &Network, p: &AcPoint) -> f64 {
        let nb = net.n_buses();
        let x = self.lift(net, p);
        let fill = |r: usize, c: usize| match self.kind {
            RelaxationKind::Rsdp => rsdp_entry(nb, p, r, c),
            RelaxationKind::Asdp => asdp_generator(net, p, r) * asdp_generator(net, p, c),
            _ => 0.0,
        };
        self.program.max_violation(&x, &fill)
    }
}

/// Entry of `(xxᵀ + yyᵀ)/2` with `x = (e, f)` and `y = (−f, e)`.
fn rsdp_entry(nb: usize, p: &AcPoint, r: usize, c: usize) -> f64 {
    let x = |k: usize| if k < nb { p.e(k) } else { p.f(k - nb) };
    let y = |k: usize| if k < nb { -p.f(k) } else { p.e(k - nb) };
    0.5 * (x(r) * x(c) + y(r) * y(c))
}

/// Entry `k` of `(1, c, s, c_ii)` at an AC point.
fn asdp_generator(net: &Network, p: &AcPoint, k: usize) -> f64 {
    let ne = net.n_edges();
    let ends = |e: usize| (net.edges[e].from, net.edges[e].to);
    match k {
        0 => 1.0,
        k if k <= ne => p.pair(ends(k - 1).0, ends(k - 1).1).0,
        k if k <= 2 * ne => p.pair(ends(k - 1 - ne).0, ends(k - 1 - ne).1).1,
        k => p.vm[k - 1 - 2 * ne].powi(2),
    }
}

/// Which parts of the network a model covers.
#[derive(Debug, Clone)]
pub(crate) struct Scope {
    pub balance: Vec<bool>,
    pub voltage: Vec<bool>,
    pub gens: Vec<bool>,
    pub edges: Vec<bool>,
    pub with_cost: bool,
}

impl Scope {
    pub fn full(net: &Network) -> Self {
        Scope {
            balance: vec![true; net.n_buses()],
            voltage: vec![true; net.n_buses()],
            gens: vec![true; net.generators.len()],
            edges: vec![true; net.n_edges()],
            with_cost: true,
        }
    }

    /// The bounding model around one edge: balance on the inner ball,
    /// voltage bounds on the outer ball, no cost.
    pub fn neighborhood(net: &Network, nb: &NeighborhoodSpec) -> Self {
        let mark = |n: usize, set: &std::collections::BTreeSet<usize>| (0..n).map(|i| set.contains(&i)).collect();
        Scope {
            balance: mark(net.n_buses(), &nb.buses_inner),
            voltage: mark(net.n_buses(), &nb.buses_outer),
            gens: mark(net.generators.len(), &nb.gens),
            edges: mark(net.n_edges(), &nb.lines),
            with_cost: false,
        }
    }
}

fn default_bounds_check(net: &Network, bounds: &EdgeBoundSet) -> Result<(), RelaxationError> {
    if bounds.edges.len() != net.n_edges() || bounds.cii.len() != net.n_buses() {
        return Err(RelaxationError::MissingBounds(format!(
            "{} edge boxes / {} bus boxes for {} edges / {} buses",
            bounds.edges.len(),
            bounds.cii.len(),
            net.n_edges(),
            net.n_buses()
        )));
    }
    Ok(())
}

/// Builds relaxation `kind` of the whole network. `bounds` supplies the
/// `(c, s)` boxes used by the McCormick relaxations.
pub fn build_relaxation(
    net: &Network,
    kind: RelaxationKind,
    bounds: &EdgeBoundSet,
    opts: &BuildOptions,
) -> Result<Relaxation, RelaxationError> {
    default_bounds_check(net, bounds)?;
    build_scoped(net, kind, bounds, opts, &Scope::full(net))
}

pub(crate) fn build_scoped(
    net: &Network,
    kind: RelaxationKind,
    bounds: &EdgeBoundSet,
    opts: &BuildOptions,
    scope: &Scope,
) -> Result<Relaxation, RelaxationError> {
    let mut prog = ConicProgram::new();
    let nb = net.n_buses();
    let ne = net.n_edges();
    let bus_used: Vec<bool> = (0..nb).map(|i| scope.voltage[i] || scope.balance[i]).collect();
    let mut cii: Vec<Option<LinExpr>> = vec![None; nb];
    let mut c: Vec<Option<LinExpr>> = vec![None; ne];
    let mut s: Vec<Option<LinExpr>> = vec![None; ne];
    match kind {
        RelaxationKind::Asocp | RelaxationKind::Am | RelaxationKind::Asdp => {
            for i in (0..nb).filter(|&i| bus_used[i]) {
                cii[i] = Some(prog.var(VariableKey::Cii(i)).into());
            }
            for e in (0..ne).filter(|&e| scope.edges[e]) {
                c[e] = Some(prog.var(VariableKey::Cij(e)).into());
                s[e] = Some(prog.var(VariableKey::Sij(e)).into());
            }
        }
        RelaxationKind::Rsocp => {
            for i in (0..nb).filter(|&i| bus_used[i]) {
                cii[i] = Some(prog.var(VariableKey::XDiag(i)).into());
            }
            for e in (0..ne).filter(|&e| scope.edges[e]) {
                c[e] = Some(prog.var(VariableKey::XRe(e)).into());
                s[e] = Some(-prog.var(VariableKey::XIm(e)));
            }
        }
        RelaxationKind::Rsdp => {
            // W = [[A, −B], [B, A]] with A symmetric and B skew: averaging any
            // solution with its 90° rotation keeps it optimal, and the fixed
            // structure removes the rotational degeneracy of the real form.
            for i in (0..nb).filter(|&i| bus_used[i]) {
                cii[i] = Some(prog.var(VariableKey::W(i, i)) * 2.0);
            }
            for e in (0..ne).filter(|&e| scope.edges[e]) {
                let (i, j) = (net.edges[e].from, net.edges[e].to);
                c[e] = Some(prog.var(VariableKey::W(i, j)) * 2.0);
                s[e] = Some(prog.var(VariableKey::W(i, nb + j)) * 2.0);
            }
        }
        RelaxationKind::Rm => {
            for i in (0..nb).filter(|&i| bus_used[i]) {
                let a = prog.var(VariableKey::Eii(i));
                let b = prog.var(VariableKey::Fii(i));
                cii[i] = Some(a + b);
            }
            for e in (0..ne).filter(|&e| scope.edges[e]) {
                let eij = prog.var(VariableKey::Eij(e));
                let fij = prog.var(VariableKey::Fij(e));
                let hij = prog.var(VariableKey::Hij(e));
                let hji = prog.var(VariableKey::Hji(e));
                c[e] = Some(eij + fij);
                s[e] = Some(hij - hji);
            }
        }
    }

    let (pg, qg) = add_common(&mut prog, net, &cii, &c, &s, opts, scope);

    match kind {
        RelaxationKind::Asocp | RelaxationKind::Rsocp => {
            for e in (0..ne).filter(|&e| scope.edges[e]) {
                let (i, j) = (net.edges[e].from, net.edges[e].to);
                let (ci, cj) = (cii[i].clone().unwrap(), cii[j].clone().unwrap());
                prog.add_rotated_soc(ci, cj, vec![c[e].clone().unwrap(), s[e].clone().unwrap()]);
            }
        }
        RelaxationKind::Am => {
            for e in (0..ne).filter(|&e| scope.edges[e]) {
                let (i, j) = (net.edges[e].from, net.edges[e].to);
                let bx = bounds.edges[e];
                let cv = prog.var(VariableKey::Cij(e));
                let sv = prog.var(VariableKey::Sij(e));
                prog.add_range(cv, bx.c_lo, bx.c_hi);
                prog.add_range(sv, bx.s_lo, bx.s_hi);
                let csq = prog.var(VariableKey::CijSq(e));
                let ssq = prog.var(VariableKey::SijSq(e));
                let d = prog.var(VariableKey::Dij(e));
                add_mccormick(&mut prog, csq, cv, cv, McCormickBox { x_lo: bx.c_lo, x_hi: bx.c_hi, y_lo: bx.c_lo, y_hi: bx.c_hi })?;
                add_mccormick(&mut prog, ssq, sv, sv, McCormickBox { x_lo: bx.s_lo, x_hi: bx.s_hi, y_lo: bx.s_lo, y_hi: bx.s_hi })?;
                let (bi, bj) = (bounds.cii[i], bounds.cii[j]);
                let (vi, vj) = (prog.var(VariableKey::Cii(i)), prog.var(VariableKey::Cii(j)));
                add_mccormick(&mut prog, d, vi, vj, McCormickBox { x_lo: bi.0, x_hi: bi.1, y_lo: bj.0, y_hi: bj.1 })?;
                prog.add_eq(csq + ssq, d);
            }
        }
        RelaxationKind::Rm => {
            let mut ef = vec![None; nb];
            for i in (0..nb).filter(|&i| bus_used[i]) {
                let vmax = net.buses[i].v_max;
                let e = prog.var(VariableKey::E(i));
                let f = prog.var(VariableKey::F(i));
                prog.add_range(e, -vmax, vmax);
                prog.add_range(f, -vmax, vmax);
                let sq = McCormickBox { x_lo: -vmax, x_hi: vmax, y_lo: -vmax, y_hi: vmax };
                let eii = prog.var(VariableKey::Eii(i));
                let fii = prog.var(VariableKey::Fii(i));
                add_mccormick(&mut prog, eii, e, e, sq)?;
                add_mccormick(&mut prog, fii, f, f, sq)?;
                ef[i] = Some((e, f, vmax));
            }
            for e in (0..ne).filter(|&e| scope.edges[e]) {
                let (i, j) = (net.edges[e].from, net.edges[e].to);
                let ((ei, fi, vi), (ej, fj, vj)) = (ef[i].unwrap(), ef[j].unwrap());
                let bx = McCormickBox { x_lo: -vi, x_hi: vi, y_lo: -vj, y_hi: vj };
                let bx_rev = McCormickBox { x_lo: -vj, x_hi: vj, y_lo: -vi, y_hi: vi };
                let w = prog.var(VariableKey::Eij(e));
                add_mccormick(&mut prog, w, ei, ej, bx)?;
                let w = prog.var(VariableKey::Fij(e));
                add_mccormick(&mut prog, w, fi, fj, bx)?;
                let w = prog.var(VariableKey::Hij(e));
                add_mccormick(&mut prog, w, ei, fj, bx)?;
                let w = prog.var(VariableKey::Hji(e));
                add_mccormick(&mut prog, w, ej, fi, bx_rev)?;
            }
        }
        RelaxationKind::Rsdp => {
            let mut entries = BTreeMap::new();
            for i in (0..nb).filter(|&i| bus_used[i]) {
                let d = LinExpr::from(prog.var(VariableKey::W(i, i)));
                entries.insert((i, i), d.clone());
                entries.insert((nb + i, nb + i), d);
                entries.insert((i, nb + i), LinExpr::zero());
            }
            for e in (0..ne).filter(|&e| scope.edges[e]) {
                let (i, j) = (net.edges[e].from, net.edges[e].to);
                let re = LinExpr::from(prog.var(VariableKey::W(i, j)));
                let im = LinExpr::from(prog.var(VariableKey::W(i, nb + j)));
                entries.insert((i, j), re.clone());
                entries.insert((nb + i, nb + j), re);
                entries.insert((j, nb + i), -im.clone());
                entries.insert((i, nb + j), im);
            }
            prog.add_psd(2 * nb, entries, true);
        }
        RelaxationKind::Asdp => add_asdp_lifting(&mut prog, net, scope),
    }

    Ok(Relaxation {
        kind,
        program: prog,
        cii,
        c,
        s,
        pg,
        qg,
        theta_reference: vec![None; nb],
    })
}

/// Schur-form lifting `[[1, zᵀ], [z, Z]] ⪰ 0` with
/// `z = (c_ij for all edges, s_ij for all edges, c_ii for all buses)`.
fn add_asdp_lifting(prog: &mut ConicProgram, net: &Network, scope: &Scope) {
    let ne = net.n_edges();
    let nb = net.n_buses();
    let line_c = |e: usize| 1 + e;
    let line_s = |e: usize| 1 + ne + e;
    let bus = |i: usize| 1 + 2 * ne + i;
    let dim = 1 + 2 * ne + nb;
    let mut entries = BTreeMap::new();
    entries.insert((0, 0), LinExpr::constant(1.0));
    let diag = |prog: &mut ConicProgram, entries: &mut BTreeMap<(usize, usize), LinExpr>, k: usize, z: Var| {
        entries.insert((0, k), LinExpr::from(z));
        let zz = prog.var(VariableKey::Z(k, k));
        entries.insert((k, k), LinExpr::from(zz));
        zz
    };
    let mut bus_diag = vec![None; nb];
    for i in 0..nb {
        if let Some(v) = prog.get(VariableKey::Cii(i)) {
            let zz = diag(prog, &mut entries, bus(i), v);
            let b = &net.buses[i];
            let (lo2, hi2) = (b.v_min * b.v_min, b.v_max * b.v_max);
            prog.add_le(zz, v * (lo2 + hi2) - lo2 * hi2);
            bus_diag[i] = Some(zz);
        }
    }
    for e in (0..ne).filter(|&e| scope.edges[e]) {
        let (i, j) = (net.edges[e].from, net.edges[e].to);
        let cv = prog.get(VariableKey::Cij(e)).unwrap();
        let sv = prog.get(VariableKey::Sij(e)).unwrap();
        let zc = diag(prog, &mut entries, line_c(e), cv);
        let zs = diag(prog, &mut entries, line_s(e), sv);
        let zd = prog.var(VariableKey::Z(bus(i), bus(j)));
        entries.insert((bus(i), bus(j)), LinExpr::from(zd));
        prog.add_eq(zc + zs, zd);
        let cap = (net.buses[i].v_max * net.buses[j].v_max).powi(2);
        prog.add_le(zc, cap);
        prog.add_le(zs, cap);
    }
    prog.add_psd(dim, entries, true);
}

/// Flow of one branch end as an affine expression in the edge products.
pub(crate) fn branch_flows(
    net: &Network,
    k: usize,
    cii: &[Option<LinExpr>],
    c: &[Option<LinExpr>],
    s: &[Option<LinExpr>],
) -> [LinExpr; 4] {
    let br = &net.branches[k];
    let ce = c[br.edge].clone().unwrap();
    let se = s[br.edge].clone().unwrap();
    let s_ft = if br.reversed { -se } else { se };
    let w = [cii[br.from].clone().unwrap(), cii[br.to].clone().unwrap(), ce, s_ft];
    br.flow.rows().map(|row| {
        let mut e = LinExpr::zero();
        for (coef, x) in row.iter().zip(&w) {
            if *coef != 0.0 {
                e += x.clone() * *coef;
            }
        }
        e
    })
}

/// Generator bounds and cost, voltage bounds, flow balance, line and angle
/// limits.
fn add_common(
    prog: &mut ConicProgram,
    net: &Network,
    cii: &[Option<LinExpr>],
    c: &[Option<LinExpr>],
    s: &[Option<LinExpr>],
    opts: &BuildOptions,
    scope: &Scope,
) -> (Vec<Option<Var>>, Vec<Option<Var>>) {
    let mut pg = vec![None; net.generators.len()];
    let mut qg = vec![None; net.generators.len()];
    for (k, g) in net.generators.iter().enumerate().filter(|(k, _)| scope.gens[*k]) {
        let p = prog.var(VariableKey::Pg(k));
        let q = prog.var(VariableKey::Qg(k));
        prog.add_range(p, g.p_min, g.p_max);
        prog.add_range(q, g.q_min, g.q_max);
        pg[k] = Some(p);
        qg[k] = Some(q);
        if scope.with_cost {
            match &g.cost {
                CostFunction::Polynomial { c2, c1, c0 } => {
                    prog.objective += p * *c1 + *c0;
                    if *c2 > 0.0 {
                        prog.add_quadratic_objective(VariableKey::CostEpigraph(k), *c2, p.into());
                    }
                }
                CostFunction::PiecewiseLinear { points } => {
                    let t = prog.var(VariableKey::CostEpigraph(k));
                    for w in points.windows(2) {
                        let slope = (w[1].1 - w[0].1) / (w[1].0 - w[0].0);
                        prog.add_ge(t, p * slope + (w[0].1 - slope * w[0].0));
                    }
                    prog.objective += t;
                }
            }
        }
    }
    for (i, b) in net.buses.iter().enumerate() {
        if scope.voltage[i] {
            prog.add_range(cii[i].clone().unwrap(), b.v_min * b.v_min, b.v_max * b.v_max);
        }
    }
    let mut p_out: Vec<LinExpr> = vec![LinExpr::zero(); net.n_buses()];
    let mut q_out: Vec<LinExpr> = vec![LinExpr::zero(); net.n_buses()];
    for (k, br) in net.branches.iter().enumerate() {
        if !scope.edges[br.edge] {
            continue;
        }
        let [pf, qf, pt, qt] = branch_flows(net, k, cii, c, s);
        if opts.line_limits {
            if let Some(smax) = br.s_max {
                prog.add_soc(smax, vec![pf.clone(), qf.clone()]);
                prog.add_soc(smax, vec![pt.clone(), qt.clone()]);
            }
        }
        if opts.angle_limits {
            // angle_min ≤ θ_f − θ_t ≤ angle_max with −s_ft = |V_f||V_t| sin(θ_f − θ_t).
            let ce = c[br.edge].clone().unwrap();
            let se = s[br.edge].clone().unwrap();
            let neg_s_ft = if br.reversed { se } else { -se };
            if let Some(lo) = br.angle_min.filter(|a| *a > -FRAC_PI_2) {
                prog.add_ge(neg_s_ft.clone(), ce.clone() * lo.tan());
            }
            if let Some(hi) = br.angle_max.filter(|a| *a < FRAC_PI_2) {
                prog.add_le(neg_s_ft, ce * hi.tan());
            }
        }
        p_out[br.from] += pf;
        q_out[br.from] += qf;
        p_out[br.to] += pt;
        q_out[br.to] += qt;
    }
    for (i, b) in net.buses.iter().enumerate() {
        if !scope.balance[i] {
            continue;
        }
        let ci = cii[i].clone().unwrap();
        let mut p_inj = LinExpr::constant(-b.p_load) - ci.clone() * b.g_sh;
        let mut q_inj = LinExpr::constant(-b.q_load) + ci * b.b_sh;
        for &g in net.gens_at(i) {
            p_inj += pg[g].unwrap();
            q_inj += qg[g].unwrap();
        }
        prog.add_eq(p_inj, std::mem::take(&mut p_out[i]));
        prog.add_eq(q_inj, std::mem::take(&mut q_out[i]));
    }
    (pg, qg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn unit_box_envelope() {
        let r = mccormick(McCormickBox { x_lo: 0.0, x_hi: 1.0, y_lo: 0.0, y_hi: 1.0 }).unwrap();
        // max{0, x + y − 1} ≤ w ≤ min{x, y}
        let lower = |x: f64, y: f64| r[..2].iter().map(|row| (row.x * x + row.y * y - row.rhs) / -row.w).fold(f64::MIN, f64::max);
        let upper = |x: f64, y: f64| r[2..].iter().map(|row| (row.rhs - row.x * x - row.y * y) / row.w).fold(f64::MAX, f64::min);
        for &(x, y) in &[(0.3, 0.9), (0.5, 0.5), (1.0, 0.2)] {
            assert!((lower(x, y) - f64::max(0.0, x + y - 1.0)).abs() < 1e-15);
            assert!((upper(x, y) - f64::min(x, y)).abs() < 1e-15);
        }
    }

    #[test]
    fn corner_forces_product() {
        let r = mccormick(McCormickBox { x_lo: -1.0, x_hi: 1.0, y_lo: -1.0, y_hi: 1.0 }).unwrap();
        assert!(r.iter().all(|row| row.holds(1.0, 1.0, 1.0, 0.0)));
        assert!(!r.iter().all(|row| row.holds(0.999, 1.0, 1.0, 0.0)));
        assert!(!r.iter().all(|row| row.holds(1.001, 1.0, 1.0, 0.0)));
    }

    #[test]
    fn square_envelope_at_zero() {
        let r = mccormick(McCormickBox { x_lo: -1.0, x_hi: 1.0, y_lo: -1.0, y_hi: 1.0 }).unwrap();
        // Rows alone allow w ∈ [−1, 1] at x = 0; with w ≥ 0 it is [0, 1].
        assert!(r.iter().all(|row| row.holds(-1.0, 0.0, 0.0, 0.0)));
        assert!(r.iter().all(|row| row.holds(1.0, 0.0, 0.0, 0.0)));
        assert!(!r.iter().all(|row| row.holds(1.01, 0.0, 0.0, 0.0)));
    }

    #[test]
    fn degenerate_box_is_exact() {
        let r = mccormick(McCormickBox { x_lo: 0.7, x_hi: 0.7, y_lo: -2.0, y_hi: 3.0 }).unwrap();
        for y in [-2.0, 0.1, 2.5] {
            assert!(r.iter().all(|row| row.holds(0.7 * y, 123.0, y, 1e-12)));
            assert!(!r.iter().all(|row| row.holds(0.7 * y + 1e-6, 123.0, y, 0.0)));
            assert!(!r.iter().all(|row| row.holds(0.7 * y - 1e-6, 123.0, y, 0.0)));
        }
    }

    #[test]
    fn inverted_box_rejected() {
        assert!(mccormick(McCormickBox { x_lo: 1.0, x_hi: 0.0, y_lo: 0.0, y_hi: 1.0 }).is_err());
    }

    proptest! {
        #[test]
        fn envelope_contains_products(x_lo in -3.0..3.0f64, dx in 0.0..4.0f64, y_lo in -3.0..3.0f64, dy in 0.0..4.0f64,
                                      tx in 0.0..1.0f64, ty in 0.0..1.0f64) {
            let b = McCormickBox { x_lo, x_hi: x_lo + dx, y_lo, y_hi: y_lo + dy };
            let (x, y) = (x_lo + tx * dx, y_lo + ty * dy);
            let rows = mccormick(b).unwrap();
            prop_assert!(rows.iter().all(|r| r.holds(x * y, x, y, 1e-9)));
        }

        #[test]
        fn envelope_exact_at_corners(x_lo in -3.0..3.0f64, dx in 0.01..4.0f64, y_lo in -3.0..3.0f64, dy in 0.01..4.0f64,
                                     cx in 0usize..2, cy in 0usize..2, eps in 1e-6..1.0f64) {
            let b = McCormickBox { x_lo, x_hi: x_lo + dx, y_lo, y_hi: y_lo + dy };
            let x = [b.x_lo, b.x_hi][cx];
            let y = [b.y_lo, b.y_hi][cy];
            let rows = mccormick(b).unwrap();
            prop_assert!(!rows.iter().all(|r| r.holds(x * y + eps, x, y, 0.0)));
            prop_assert!(!rows.iter().all(|r| r.holds(x * y - eps, x, y, 0.0)));
        }
    }
}
