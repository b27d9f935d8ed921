//! Backend-neutral conic programs.
//!
//! A [`ConicProgram`] holds scalar variables keyed by [`VariableKey`], a
//! linear objective and constraint blocks over affine expressions:
//! equalities, nonnegativity, second-order cones and symmetric PSD blocks.
//! PSD blocks flagged as *completion* blocks only constrain their specified
//! entries: the block must admit a PSD completion. These are lowered through
//! a chordal extension into one PSD cone per maximal clique, which is exact
//! because fill entries become free variables.
//!
//! Programs are lowered to a [`StandardForm`] and handed to a
//! [`ConicBackend`]. [`ClarabelBackend`] is the reference backend; the
//! standard form can also be written in CBF (see [`cbf`]).

pub mod cbf;
pub mod chordal;
mod clarabel_backend;
mod expr;

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use clarabel_backend::ClarabelBackend;
pub use expr::{LinExpr, Var};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConicError {
    #[error("backend failure: {0}")]
    BackendFailure(String),
    #[error("backend `{backend}` does not support {cone} cones")]
    UnsupportedCone { backend: &'static str, cone: &'static str },
    #[error("malformed program: {0}")]
    Malformed(String),
}

/// Semantic name of a scalar variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum VariableKey {
    Cii(usize),
    Cij(usize),
    Sij(usize),
    Pg(usize),
    Qg(usize),
    E(usize),
    F(usize),
    Eii(usize),
    Fii(usize),
    Eij(usize),
    Fij(usize),
    Hij(usize),
    Hji(usize),
    CijSq(usize),
    SijSq(usize),
    Dij(usize),
    W(usize, usize),
    Z(usize, usize),
    XRe(usize),
    XIm(usize),
    XDiag(usize),
    Theta(usize),
    LineTheta(usize),
    CostEpigraph(usize),
    Aux(&'static str, usize),
}

impl fmt::Display for VariableKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Constraint {
    /// `expr = 0`
    Zero(LinExpr),
    /// `expr ≥ 0`
    Nonneg(LinExpr),
    /// `xs[0] ≥ ‖xs[1..]‖₂`
    Soc(Vec<LinExpr>),
    /// Symmetric `dim × dim` matrix with the given upper-triangle entries
    /// is PSD. Unlisted entries are zero, or free when `completion` is set.
    Psd {
        dim: usize,
        entries: BTreeMap<(usize, usize), LinExpr>,
        completion: bool,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ConstraintId(pub usize);

#[derive(Debug, Clone, Default)]
pub struct ConicProgram {
    keys: Vec<VariableKey>,
    index: HashMap<VariableKey, Var>,
    /// Minimized.
    pub objective: LinExpr,
    constraints: Vec<Constraint>,
}

impl ConicProgram {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns the variable for `key`, creating it if needed.
    pub fn var(&mut self, key: VariableKey) -> Var {
        if let Some(&v) = self.index.get(&key) {
            return v;
        }
        let v = Var(self.keys.len());
        self.keys.push(key);
        self.index.insert(key, v);
        v
    }

    pub fn get(&self, key: VariableKey) -> Option<Var> {
        self.index.get(&key).copied()
    }

    pub fn key(&self, v: Var) -> VariableKey {
        self.keys[v.0]
    }

    pub fn n_vars(&self) -> usize {
        self.keys.len()
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn add(&mut self, c: Constraint) -> ConstraintId {
        self.constraints.push(c);
        ConstraintId(self.constraints.len() - 1)
    }

    pub fn add_eq(&mut self, lhs: impl Into<LinExpr>, rhs: impl Into<LinExpr>) -> ConstraintId {
        self.add(Constraint::Zero(lhs.into() - rhs))
    }

    /// `lhs ≤ rhs`
    pub fn add_le(&mut self, lhs: impl Into<LinExpr>, rhs: impl Into<LinExpr>) -> ConstraintId {
        self.add(Constraint::Nonneg(rhs.into() - lhs))
    }

    pub fn add_ge(&mut self, lhs: impl Into<LinExpr>, rhs: impl Into<LinExpr>) -> ConstraintId {
        self.add(Constraint::Nonneg(lhs.into() - rhs))
    }

    /// `lo ≤ expr ≤ hi`, skipping infinite sides.
    pub fn add_range(&mut self, expr: impl Into<LinExpr>, lo: f64, hi: f64) {
        let e = expr.into();
        if lo == hi {
            self.add_eq(e, lo);
            return;
        }
        if lo.is_finite() {
            self.add_ge(e.clone(), lo);
        }
        if hi.is_finite() {
            self.add_le(e, hi);
        }
    }

    pub fn add_soc(&mut self, t: impl Into<LinExpr>, xs: Vec<LinExpr>) -> ConstraintId {
        let mut v = vec![t.into()];
        v.extend(xs);
        self.add(Constraint::Soc(v))
    }

    /// `Σ xs² ≤ u·v` with `u, v ≥ 0`.
    pub fn add_rotated_soc(&mut self, u: LinExpr, v: LinExpr, xs: Vec<LinExpr>) -> ConstraintId {
        let mut cone = vec![u.clone() + v.clone(), u - v];
        cone.extend(xs.into_iter().map(|x| x * 2.0));
        self.add(Constraint::Soc(cone))
    }

    pub fn add_psd(&mut self, dim: usize, entries: BTreeMap<(usize, usize), LinExpr>, completion: bool) -> ConstraintId {
        self.add(Constraint::Psd {
            dim,
            entries,
            completion,
        })
    }

    /// Adds `a·x²` (a ≥ 0) to the objective through an epigraph variable
    /// `t ≥ a·x²`, returned.
    pub fn add_quadratic_objective(&mut self, key: VariableKey, a: f64, x: LinExpr) -> Var {
        let t = self.var(key);
        if a > 0.0 {
            self.add_rotated_soc(LinExpr::from(t), LinExpr::constant(1.0), vec![x * a.sqrt()]);
        } else {
            self.add_eq(t, 0.0);
        }
        self.objective += t;
        t
    }

    /// Largest absolute violation of any constraint at `x`. Missing entries
    /// of completion PSD blocks are taken from `fill(row, col)`.
    pub fn max_violation(&self, x: &[f64], fill: &dyn Fn(usize, usize) -> f64) -> f64 {
        let mut worst: f64 = 0.0;
        for c in &self.constraints {
            let v = match c {
                Constraint::Zero(e) => e.eval(x).abs(),
                Constraint::Nonneg(e) => -e.eval(x),
                Constraint::Soc(v) => {
                    let vals: Vec<f64> = v.iter().map(|e| e.eval(x)).collect();
                    vals[1..].iter().map(|a| a * a).sum::<f64>().sqrt() - vals[0]
                }
                Constraint::Psd {
                    dim,
                    entries,
                    completion,
                } => {
                    let m = DMatrix::from_fn(*dim, *dim, |i, j| {
                        let key = (i.min(j), i.max(j));
                        match entries.get(&key) {
                            Some(e) => e.eval(x),
                            None if *completion => fill(key.0, key.1),
                            None => 0.0,
                        }
                    });
                    -m.symmetric_eigenvalues().min()
                }
            };
            worst = worst.max(v);
        }
        worst
    }

    pub fn has_psd(&self) -> bool {
        self.constraints.iter().any(|c| matches!(c, Constraint::Psd { .. }))
    }

    pub fn lower(&self) -> Result<StandardForm, ConicError> {
        StandardForm::lower(self)
    }

    pub fn solve(&self, backend: &dyn ConicBackend, opts: &SolverOptions) -> Result<ConicSolution, ConicError> {
        if self.has_psd() && !backend.supports_psd() {
            return Err(ConicError::UnsupportedCone {
                backend: backend.name(),
                cone: "PSD",
            });
        }
        let sf = self.lower()?;
        let raw = backend.solve(&sf, opts)?;
        let duals = sf
            .dual_slices
            .iter()
            .map(|slices| slices.iter().flat_map(|r| raw.z[r.clone()].iter().copied()).collect())
            .collect();
        Ok(ConicSolution {
            status: raw.status,
            objective: raw.objective + sf.objective_constant,
            dual_objective: raw.dual_objective + sf.objective_constant,
            x: raw.x,
            duals,
            iterations: raw.iterations,
            solve_time: raw.solve_time,
        })
    }
}

/// A cone block of the standard form; each row is an affine expression of
/// the cone's coordinates. PSD rows list the upper triangle column by
/// column, unscaled.
#[derive(Debug, Clone, PartialEq)]
pub enum ConeBlock {
    Zero(Vec<LinExpr>),
    Nonneg(Vec<LinExpr>),
    Soc(Vec<LinExpr>),
    Psd { dim: usize, rows: Vec<LinExpr> },
}

impl ConeBlock {
    pub fn rows(&self) -> &[LinExpr] {
        match self {
            ConeBlock::Zero(r) | ConeBlock::Nonneg(r) | ConeBlock::Soc(r) => r,
            ConeBlock::Psd { rows, .. } => rows,
        }
    }
}

/// Index pairs of the upper triangle in column-major order.
pub fn triangle_order(dim: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..dim).flat_map(|j| (0..=j).map(move |i| (i, j)))
}

/// Program with all variables free and every constraint an affine image in
/// a cone. Zero and nonnegative rows are pooled into one block each, first.
#[derive(Debug, Clone)]
pub struct StandardForm {
    pub n_vars: usize,
    /// Variables added by lowering (fill entries of completion blocks).
    pub n_aux: usize,
    pub objective: Vec<(usize, f64)>,
    pub objective_constant: f64,
    pub blocks: Vec<ConeBlock>,
    /// Rows of the stacked cone vector belonging to each program constraint.
    pub dual_slices: Vec<Vec<std::ops::Range<usize>>>,
}

impl StandardForm {
    fn lower(prog: &ConicProgram) -> Result<Self, ConicError> {
        let n0 = prog.n_vars();
        let mut n_aux = 0;
        let mut zero = Vec::new();
        let mut nonneg = Vec::new();
        // Row index of each constraint inside its pooled block, fixed up
        // to absolute offsets once block sizes are known.
        enum Place {
            Zero(usize),
            Nonneg(usize),
            Cones(Vec<usize>),
        }
        let mut places = Vec::with_capacity(prog.constraints.len());
        let mut cones: Vec<ConeBlock> = Vec::new();
        let check = |e: &LinExpr| -> Result<(), ConicError> {
            if let Some(t) = e.terms.iter().find(|t| t.0 .0 >= n0 || !t.1.is_finite()) {
                return Err(ConicError::Malformed(format!("bad term {t:?}")));
            }
            if !e.constant.is_finite() {
                return Err(ConicError::Malformed("non-finite constant".into()));
            }
            Ok(())
        };
        for c in &prog.constraints {
            match c {
                Constraint::Zero(e) => {
                    check(e)?;
                    places.push(Place::Zero(zero.len()));
                    zero.push(e.clone().compact());
                }
                Constraint::Nonneg(e) => {
                    check(e)?;
                    places.push(Place::Nonneg(nonneg.len()));
                    nonneg.push(e.clone().compact());
                }
                Constraint::Soc(v) => {
                    if v.is_empty() {
                        return Err(ConicError::Malformed("empty cone".into()));
                    }
                    for e in v {
                        check(e)?;
                    }
                    places.push(Place::Cones(vec![cones.len()]));
                    cones.push(ConeBlock::Soc(v.iter().map(|e| e.clone().compact()).collect()));
                }
                Constraint::Psd {
                    dim,
                    entries,
                    completion,
                } => {
                    for (&(i, j), e) in entries {
                        if i > j || j >= *dim {
                            return Err(ConicError::Malformed(format!("PSD entry ({i},{j}) outside upper triangle")));
                        }
                        check(e)?;
                    }
                    let cliques = if *completion {
                        chordal::maximal_cliques(*dim, entries.keys().filter(|(i, j)| i != j).copied())
                    } else {
                        vec![(0..*dim).collect()]
                    };
                    let mut fill: HashMap<(usize, usize), Var> = HashMap::new();
                    let mut ids = Vec::with_capacity(cliques.len());
                    for clique in cliques {
                        let rows = triangle_order(clique.len())
                            .map(|(a, b)| {
                                let key = (clique[a], clique[b]);
                                match entries.get(&key) {
                                    Some(e) => e.clone().compact(),
                                    None if *completion => {
                                        let v = *fill.entry(key).or_insert_with(|| {
                                            n_aux += 1;
                                            Var(n0 + n_aux - 1)
                                        });
                                        LinExpr::from(v)
                                    }
                                    None => LinExpr::zero(),
                                }
                            })
                            .collect();
                        ids.push(cones.len());
                        cones.push(ConeBlock::Psd { dim: clique.len(), rows });
                    }
                    places.push(Place::Cones(ids));
                }
            }
        }
        let mut offsets = Vec::with_capacity(cones.len());
        let mut at = zero.len() + nonneg.len();
        for b in &cones {
            offsets.push(at);
            at += b.rows().len();
        }
        let nz = zero.len();
        let dual_slices = places
            .into_iter()
            .map(|p| match p {
                Place::Zero(k) => vec![k..k + 1],
                Place::Nonneg(k) => vec![nz + k..nz + k + 1],
                Place::Cones(ids) => ids.into_iter().map(|b| offsets[b]..offsets[b] + cones[b].rows().len()).collect(),
            })
            .collect();
        let mut blocks = vec![ConeBlock::Zero(zero), ConeBlock::Nonneg(nonneg)];
        blocks.extend(cones);
        let obj = prog.objective.clone().compact();
        check(&obj)?;
        Ok(StandardForm {
            n_vars: n0 + n_aux,
            n_aux,
            objective: obj.terms.iter().map(|&(v, c)| (v.0, c)).collect(),
            objective_constant: obj.constant,
            blocks,
            dual_slices,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.blocks.iter().map(|b| b.rows().len()).sum()
    }

    /// Largest violation over all cone memberships at `x`; rows are scaled
    /// by their largest coefficient (at least 1).
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let scaled = |e: &LinExpr| e.eval(x) / e.max_abs_coef().max(1.0);
        let mut worst: f64 = 0.0;
        for b in &self.blocks {
            match b {
                ConeBlock::Zero(rows) => rows.iter().for_each(|r| worst = worst.max(scaled(r).abs())),
                ConeBlock::Nonneg(rows) => rows.iter().for_each(|r| worst = worst.max(-scaled(r))),
                ConeBlock::Soc(rows) => {
                    let v: Vec<f64> = rows.iter().map(|r| r.eval(x)).collect();
                    let s = rows.iter().fold(1.0f64, |m, r| m.max(r.max_abs_coef()));
                    let norm = v[1..].iter().map(|a| a * a).sum::<f64>().sqrt();
                    worst = worst.max((norm - v[0]) / s);
                }
                ConeBlock::Psd { dim, rows } => {
                    let mut m = DMatrix::zeros(*dim, *dim);
                    let s = rows.iter().fold(1.0f64, |m, r| m.max(r.max_abs_coef()));
                    for ((i, j), r) in triangle_order(*dim).zip(rows) {
                        let v = r.eval(x);
                        m[(i, j)] = v;
                        m[(j, i)] = v;
                    }
                    let lmin = m.symmetric_eigenvalues().min();
                    worst = worst.max(-lmin / s);
                }
            }
        }
        worst
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Requested relative duality gap and feasibility tolerances.
    pub tol_gap_rel: f64,
    pub tol_feas: f64,
    /// Reduced tolerance at which a stalled solve is still accepted.
    pub accept_tol: f64,
    /// Re-solve with more conservative settings when only the reduced
    /// tolerances are met.
    pub retry_inaccurate: bool,
    /// Let the backend split sparse PSD cones along a chordal extension of
    /// their sparsity pattern.
    pub chordal: bool,
    pub max_iter: u32,
    pub time_limit: Option<f64>,
    pub verbose: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol_gap_rel: 1e-8,
            tol_feas: 1e-8,
            accept_tol: 1e-6,
            retry_inaccurate: true,
            chordal: false,
            max_iter: 200,
            time_limit: None,
            verbose: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    NumericalTrouble,
}

/// Backend output on a [`StandardForm`]; `z` is the stacked dual vector.
#[derive(Debug, Clone)]
pub struct RawSolution {
    pub status: SolveStatus,
    pub objective: f64,
    pub dual_objective: f64,
    pub x: Vec<f64>,
    pub z: Vec<f64>,
    pub iterations: u32,
    pub solve_time: f64,
}

#[derive(Debug, Clone)]
pub struct ConicSolution {
    pub status: SolveStatus,
    pub objective: f64,
    pub dual_objective: f64,
    /// Primal values, program variables first, then lowering auxiliaries.
    pub x: Vec<f64>,
    /// Dual values per program constraint, in cone coordinates.
    pub duals: Vec<Vec<f64>>,
    pub iterations: u32,
    pub solve_time: f64,
}

impl ConicSolution {
    pub fn value(&self, v: Var) -> f64 {
        self.x[v.0]
    }

    pub fn eval(&self, e: &LinExpr) -> f64 {
        e.eval(&self.x)
    }

    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }
}

/// A conic solver. Implementations declare their cone support and whether
/// one instance may serve concurrent solves.
pub trait ConicBackend: Send + Sync {
    fn name(&self) -> &'static str;
    fn supports_psd(&self) -> bool;
    /// True when `solve` may be called from several threads at once.
    fn concurrent(&self) -> bool;
    fn solve(&self, sf: &StandardForm, opts: &SolverOptions) -> Result<RawSolution, ConicError>;
}
