//! Method runs: bounding, master build, cutting-plane rounds, gaps, angle
//! recovery and warm starts for an external local solver.
//!
//! A round separates every basis cycle once at the current master solution,
//! appends the new cuts and re-solves the master.

use std::collections::{BTreeMap, VecDeque};
use std::f64::consts::PI;
use std::fmt;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::str::FromStr;
use std::time::Instant;

use log::{info, warn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bounds::{tighten_all_cached, BoundsError, EdgeBoundSet, ObbtOptions};
use crate::conic::{ClarabelBackend, ConicSolution, SolveStatus, SolverOptions};
use crate::cycle_cuts::{self, CutOrigin, CutPool, EPS_SEP};
use crate::envelopes::attach_envelopes;
use crate::network::{cycle_basis, AcPoint, Network};
use crate::relaxations::{build_relaxation, BuildOptions, Relaxation, RelaxationKind};
use crate::sdp_cuts;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("upper bound must be positive, got {0}")]
    NonpositiveUpperBound(f64),
    #[error("atan2 undefined on edge {edge}: c = s = 0")]
    UndefinedAtan2 { edge: usize },
    #[error("unknown method `{0}`")]
    UnknownMethod(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("upper-bound hook failed: {0}")]
    Hook(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    /// Plain ASOCP.
    Socp,
    /// ASOCP with arctangent envelopes on tightened boxes.
    Socpa,
    /// SOCPA master with McCormick cycle cuts.
    S34a,
    /// ASOCP master with McCormick cycle cuts.
    S34,
    /// ASOCP master with per-cycle SDP cuts.
    Ssdp,
    Raw(RelaxationKind),
}

impl Method {
    /// Default method set of benchmark tables.
    pub const COMPARED: [Method; 4] = [Method::Socp, Method::Socpa, Method::S34a, Method::Ssdp];

    fn needs_bounds(self) -> bool {
        matches!(self, Method::Socpa | Method::S34a | Method::S34)
    }

    fn has_envelopes(self) -> bool {
        matches!(self, Method::Socpa | Method::S34a)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Method::Socp => "socp",
            Method::Socpa => "socpa",
            Method::S34a => "s34a",
            Method::S34 => "s34",
            Method::Ssdp => "ssdp",
            Method::Raw(RelaxationKind::Rm) => "rm",
            Method::Raw(RelaxationKind::Am) => "am",
            Method::Raw(RelaxationKind::Asocp) => "asocp",
            Method::Raw(RelaxationKind::Rsocp) => "rsocp",
            Method::Raw(RelaxationKind::Rsdp) => "rsdp",
            Method::Raw(RelaxationKind::Asdp) => "asdp",
        };
        f.write_str(s)
    }
}

impl FromStr for Method {
    type Err = PipelineError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "socp" => Method::Socp,
            "socpa" => Method::Socpa,
            "s34a" => Method::S34a,
            "s34" => Method::S34,
            "ssdp" => Method::Ssdp,
            "rm" => Method::Raw(RelaxationKind::Rm),
            "am" => Method::Raw(RelaxationKind::Am),
            "asocp" => Method::Raw(RelaxationKind::Asocp),
            "rsocp" => Method::Raw(RelaxationKind::Rsocp),
            "rsdp" => Method::Raw(RelaxationKind::Rsdp),
            "asdp" => Method::Raw(RelaxationKind::Asdp),
            _ => return Err(PipelineError::UnknownMethod(s.into())),
        })
    }
}

#[derive(Debug, Clone)]
pub struct MethodConfig {
    pub method: Method,
    /// At least 1.
    pub max_rounds: usize,
    pub obbt_radius: usize,
    pub line_limits: bool,
    /// Cuts violated by at most this much are dropped.
    pub eps_sep: f64,
    pub solver: SolverOptions,
    pub bounds_cache: Option<PathBuf>,
}

impl MethodConfig {
    pub fn new(method: Method) -> Self {
        MethodConfig {
            method,
            max_rounds: 5,
            obbt_radius: 2,
            line_limits: true,
            eps_sep: EPS_SEP,
            // Round-over-round comparisons need more than the default accuracy.
            solver: SolverOptions { tol_gap_rel: 1e-9, tol_feas: 1e-9, ..SolverOptions::default() },
            bounds_cache: None,
        }
    }

    fn build_options(&self) -> BuildOptions {
        BuildOptions { line_limits: self.line_limits, ..BuildOptions::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoundReport {
    pub lb: f64,
    pub cuts_added: usize,
}

/// Wall-clock seconds per phase.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Times {
    pub obbt: f64,
    pub build: f64,
    pub solve: f64,
    pub separation: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Ok,
    /// The relaxation is infeasible, so the OPF instance is too.
    Infeasible,
    SolverFailure,
}

impl RunStatus {
    pub fn exit_code(self) -> i32 {
        match self {
            RunStatus::Ok => 0,
            RunStatus::Infeasible => 2,
            RunStatus::SolverFailure => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodReport {
    pub case: String,
    pub method: String,
    pub lb: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ub: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gap: Option<f64>,
    /// Round 0 is the first master solve.
    pub rounds: Vec<RoundReport>,
    pub cuts: BTreeMap<String, usize>,
    pub envelopes_skipped: usize,
    pub times: Times,
    pub status: RunStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

impl MethodReport {
    /// Attaches an upper bound and the resulting gap.
    pub fn with_upper_bound(mut self, ub: f64) -> Self {
        self.ub = Some(ub);
        self.gap = self.lb.and_then(|lb| compute_gap(lb, ub).ok()).map(|g| g.percent);
        self
    }
}

/// Final master, its solution and the cut pool of a run.
#[derive(Debug, Clone)]
pub struct MethodRun {
    pub report: MethodReport,
    pub relaxation: Option<Relaxation>,
    pub solution: Option<ConicSolution>,
    pub bounds: EdgeBoundSet,
    pub pool: CutPool,
}

fn solve_master(rel: &Relaxation, cfg: &MethodConfig, times: &mut Times) -> Result<ConicSolution, (RunStatus, String)> {
    let t = Instant::now();
    let res = rel.program.solve(&ClarabelBackend, &cfg.solver);
    times.solve += t.elapsed().as_secs_f64();
    match res {
        Ok(sol) if sol.is_optimal() => Ok(sol),
        Ok(sol) if sol.status == SolveStatus::Infeasible => Err((RunStatus::Infeasible, "relaxation infeasible".into())),
        Ok(sol) => Err((RunStatus::SolverFailure, format!("master ended with {:?}", sol.status))),
        Err(e) => Err((RunStatus::SolverFailure, e.to_string())),
    }
}

enum Separator {
    None,
    McCormick(Vec<cycle_cuts::LinearizedCycleSystem>),
    Sdp(Vec<sdp_cuts::CycleSdpMap>),
}

/// Runs one method on one network. Failures end the run early with a
/// partial report rather than an error.
pub fn run_method(net: &Network, cfg: &MethodConfig) -> MethodRun {
    let mut report = MethodReport {
        case: net.name.clone(),
        method: cfg.method.to_string(),
        lb: None,
        ub: None,
        gap: None,
        rounds: vec![],
        cuts: BTreeMap::new(),
        envelopes_skipped: 0,
        times: Times::default(),
        status: RunStatus::Ok,
        message: None,
    };
    let mut run = MethodRun {
        report: report.clone(),
        relaxation: None,
        solution: None,
        bounds: EdgeBoundSet::default_for(net),
        pool: CutPool::default(),
    };
    let fail = |mut run: MethodRun, report: MethodReport, status: RunStatus, msg: String| {
        warn!("{} {}: {msg}", report.case, report.method);
        let lb = report.rounds.iter().map(|r| r.lb).reduce(f64::max);
        run.report = MethodReport { status, message: Some(msg), lb, ..report };
        run
    };

    if cfg.method.needs_bounds() {
        let t = Instant::now();
        let opts = ObbtOptions { radius: cfg.obbt_radius, build: cfg.build_options(), solver: cfg.solver };
        let res = tighten_all_cached(net, &opts, cfg.bounds_cache.as_deref());
        report.times.obbt = t.elapsed().as_secs_f64();
        match res {
            Ok(b) => run.bounds = b,
            Err(BoundsError::Infeasible { edge }) => {
                return fail(run, report, RunStatus::Infeasible, format!("bounding problem of edge {edge} infeasible"));
            }
            Err(e) => return fail(run, report, RunStatus::SolverFailure, e.to_string()),
        }
    }

    let t = Instant::now();
    let kind = match cfg.method {
        Method::Raw(k) => k,
        _ => RelaxationKind::Asocp,
    };
    let mut rel = match build_relaxation(net, kind, &EdgeBoundSet::default_for(net), &cfg.build_options()) {
        Ok(r) => r,
        Err(e) => return fail(run, report, RunStatus::SolverFailure, e.to_string()),
    };
    if cfg.method.has_envelopes() {
        let env = attach_envelopes(&mut rel, net, &run.bounds);
        report.envelopes_skipped = env.skipped.len();
        if !env.skipped.is_empty() {
            info!("{}: envelopes skipped on {} edges with c_lo ≤ 0", net.name, env.skipped.len());
        }
    }
    let cycles = cycle_basis(net).cycles;
    let separator = match cfg.method {
        Method::S34a | Method::S34 => Separator::McCormick(cycle_cuts::linearized_systems(net, &cycles, &run.bounds)),
        Method::Ssdp => Separator::Sdp(sdp_cuts::cycle_maps(net, &cycles)),
        _ => Separator::None,
    };
    report.times.build = t.elapsed().as_secs_f64();

    let mut sol = match solve_master(&rel, cfg, &mut report.times) {
        Ok(s) => s,
        Err((status, msg)) => return fail(run, report, status, msg),
    };
    report.rounds.push(RoundReport { lb: sol.objective, cuts_added: 0 });

    if !matches!(separator, Separator::None) {
        for _ in 0..cfg.max_rounds.max(1) {
            let t = Instant::now();
            let found = match &separator {
                Separator::McCormick(sys) => cycle_cuts::separate_all(sys, &rel, &sol, &ClarabelBackend, &cfg.solver),
                Separator::Sdp(maps) => sdp_cuts::separate_all(maps, &rel, &sol, &ClarabelBackend, &cfg.solver),
                Separator::None => unreachable!(),
            };
            let mut added = 0;
            for cut in found.into_iter().filter(|c| c.violation > cfg.eps_sep) {
                if run.pool.insert(cut.clone()) {
                    cut.add_to(&mut rel);
                    added += 1;
                }
            }
            report.times.separation += t.elapsed().as_secs_f64();
            if added == 0 {
                break;
            }
            sol = match solve_master(&rel, cfg, &mut report.times) {
                Ok(s) => s,
                Err((status, msg)) => {
                    run.relaxation = Some(rel);
                    return fail(run, report, status, msg);
                }
            };
            report.rounds.push(RoundReport { lb: sol.objective, cuts_added: added });
        }
    }

    report.lb = report.rounds.iter().map(|r| r.lb).reduce(f64::max);
    for origin in [CutOrigin::McCormick3, CutOrigin::McCormick4, CutOrigin::SdpCycle] {
        let n = run.pool.count(origin);
        if n > 0 {
            report.cuts.insert(format!("{origin:?}"), n);
        }
    }
    run.report = report;
    run.relaxation = Some(rel);
    run.solution = Some(sol);
    run
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gap {
    pub percent: f64,
    /// `lb` exceeded `ub` by solver noise and the gap was clamped to 0.
    pub noise: bool,
}

/// `100·(ub − lb)/ub`.
pub fn compute_gap(lb: f64, ub: f64) -> Result<Gap, PipelineError> {
    if !(ub > 0.0) {
        return Err(PipelineError::NonpositiveUpperBound(ub));
    }
    let g = 100.0 * (ub - lb) / ub;
    if g < 0.0 {
        return Ok(Gap { percent: 0.0, noise: (lb - ub).abs() <= 1e-6 * ub });
    }
    Ok(Gap { percent: g, noise: false })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AngleRecovery {
    /// Radians, zero at each component's reference bus.
    pub theta: Vec<f64>,
    /// Per basis cycle: distance of `Σ atan2(s, c)` around it to the nearest
    /// multiple of 2π.
    pub mismatch: Vec<f64>,
}

/// Integrates `θ_to − θ_from = atan2(s, c)` along a breadth-first tree from
/// each reference bus.
pub fn recover_angles(net: &Network, c: &[f64], s: &[f64]) -> Result<AngleRecovery, PipelineError> {
    let line: Vec<f64> = (0..net.n_edges())
        .map(|e| {
            if c[e] == 0.0 && s[e] == 0.0 {
                Err(PipelineError::UndefinedAtan2 { edge: e })
            } else {
                Ok(s[e].atan2(c[e]))
            }
        })
        .collect::<Result<_, _>>()?;
    let mut theta = vec![f64::NAN; net.n_buses()];
    for r in net.reference_buses() {
        theta[r] = 0.0;
        let mut queue = VecDeque::from([r]);
        while let Some(u) = queue.pop_front() {
            for &(v, e) in &net.adjacency[u] {
                if theta[v].is_nan() {
                    let d = if net.edges[e].from == u { line[e] } else { -line[e] };
                    theta[v] = theta[u] + d;
                    queue.push_back(v);
                }
            }
        }
    }
    let mismatch = cycle_basis(net)
        .cycles
        .iter()
        .map(|cy| {
            let sum: f64 = cy.edges.iter().zip(&cy.signs).map(|(&e, &sg)| sg as f64 * line[e]).sum();
            let r = sum.rem_euclid(2.0 * PI);
            r.min(2.0 * PI - r)
        })
        .collect();
    Ok(AngleRecovery { theta, mismatch })
}

/// Solution values of the voltage products of a relaxation.
pub fn product_values(rel: &Relaxation, sol: &ConicSolution) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let f = |v: &[Option<crate::conic::LinExpr>]| v.iter().map(|e| e.as_ref().map_or(f64::NAN, |e| sol.eval(e))).collect();
    (f(&rel.cii), f(&rel.c), f(&rel.s))
}

/// Warm-start rows for an external solver: buses carry `Vm` (p.u.) and `Va`
/// (degrees), generators `Pg` (MW) and `Qg` (MVAr).
///
/// CSV columns are `kind,id,a,b`; `kind` is `bus` or `gen`, bus ids are
/// the case's external numbers and generator ids their 0-based row in the
/// case's generator table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WarmStart {
    pub rows: Vec<WarmStartRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WarmStartRow {
    pub kind: String,
    pub id: usize,
    pub a: f64,
    pub b: f64,
}

impl WarmStart {
    pub fn from_values(net: &Network, cii: &[f64], theta: &[f64], pg: &[f64], qg: &[f64]) -> Self {
        let mut buses: Vec<WarmStartRow> = net
            .buses
            .iter()
            .enumerate()
            .map(|(i, b)| WarmStartRow { kind: "bus".into(), id: b.id, a: cii[i].max(0.0).sqrt(), b: theta[i].to_degrees() })
            .collect();
        buses.sort_by_key(|r| r.id);
        let mut gens: Vec<WarmStartRow> = net
            .generators
            .iter()
            .enumerate()
            .map(|(k, g)| WarmStartRow { kind: "gen".into(), id: g.case_index, a: pg[k] * net.base_mva, b: qg[k] * net.base_mva })
            .collect();
        gens.sort_by_key(|r| r.id);
        buses.extend(gens);
        WarmStart { rows: buses }
    }

    /// Relaxation solution with angles recovered along a spanning tree.
    pub fn from_solution(net: &Network, rel: &Relaxation, sol: &ConicSolution) -> Result<Self, PipelineError> {
        let (cii, c, s) = product_values(rel, sol);
        let rec = recover_angles(net, &c, &s)?;
        let gen = |v: &[Option<crate::conic::Var>]| v.iter().map(|x| x.map_or(0.0, |x| sol.value(x))).collect::<Vec<_>>();
        Ok(Self::from_values(net, &cii, &rec.theta, &gen(&rel.pg), &gen(&rel.qg)))
    }

    /// `(c_ij, s_ij) = (1, 0)` start: unit voltages at zero angle, generators
    /// at the midpoint of their ranges.
    pub fn flat(net: &Network) -> Self {
        let nb = net.n_buses();
        let mid = |lo: f64, hi: f64| if lo.is_finite() && hi.is_finite() { 0.5 * (lo + hi) } else { 0.0 };
        let pg: Vec<f64> = net.generators.iter().map(|g| mid(g.p_min, g.p_max)).collect();
        let qg: Vec<f64> = net.generators.iter().map(|g| mid(g.q_min, g.q_max)).collect();
        Self::from_values(net, &vec![1.0; nb], &vec![0.0; nb], &pg, &qg)
    }

    pub fn write(&self, path: &Path) -> Result<(), PipelineError> {
        let mut w = csv::Writer::from_path(path)?;
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self, PipelineError> {
        let mut r = csv::Reader::from_path(path)?;
        let rows = r.deserialize().collect::<Result<Vec<WarmStartRow>, _>>()?;
        Ok(WarmStart { rows })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalBus {
    pub id: usize,
    pub vm: f64,
    pub va_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalGen {
    pub index: usize,
    pub pg_mw: f64,
    pub qg_mvar: f64,
}

/// Output of the local AC solver hook: objective and operating point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalSolution {
    #[serde(default)]
    pub success: Option<bool>,
    pub objective: f64,
    pub bus: Vec<LocalBus>,
    pub gen: Vec<LocalGen>,
}

impl LocalSolution {
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    /// The operating point in internal units (radians, per unit).
    pub fn point(&self, net: &Network) -> AcPoint {
        let mut p = AcPoint::flat(net);
        for b in &self.bus {
            if let Some(i) = net.bus_index(b.id) {
                p.vm[i] = b.vm;
                p.va[i] = b.va_deg.to_radians();
            }
        }
        for (k, g) in net.generators.iter().enumerate() {
            if let Some(r) = self.gen.iter().find(|x| x.index == g.case_index) {
                p.pg[k] = r.pg_mw / net.base_mva;
                p.qg[k] = r.qg_mvar / net.base_mva;
            }
        }
        p
    }
}

/// External local solver invocation. Arguments may contain `{case}`,
/// `{warmstart}` and `{out}`; the command must write a [`LocalSolution`]
/// JSON document to `{out}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UpperBoundHook {
    pub program: String,
    pub args: Vec<String>,
}

impl UpperBoundHook {
    /// Splits a whitespace-separated command template.
    pub fn parse(template: &str) -> Option<Self> {
        let mut parts = template.split_whitespace().map(String::from);
        Some(UpperBoundHook { program: parts.next()?, args: parts.collect() })
    }

    pub fn run(&self, case: &Path, warmstart: &Path, out: &Path) -> Result<LocalSolution, PipelineError> {
        let fill = |a: &String| {
            a.replace("{case}", &case.to_string_lossy())
                .replace("{warmstart}", &warmstart.to_string_lossy())
                .replace("{out}", &out.to_string_lossy())
        };
        let status = Command::new(&self.program).args(self.args.iter().map(fill)).status()?;
        let sol = LocalSolution::load(out).map_err(|e| PipelineError::Hook(format!("{status}: {e}")))?;
        if sol.success == Some(false) {
            return Err(PipelineError::Hook(format!("local solver reported failure ({status})")));
        }
        Ok(sol)
    }
}

/// Scales every bus load by an independent uniform factor in
/// `[1 − fraction, 1 + fraction]`.
pub fn perturb_loads(net: &Network, seed: u64, fraction: f64) -> Network {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let factors: Vec<f64> = (0..net.n_buses()).map(|_| rng.gen_range(1.0 - fraction..=1.0 + fraction)).collect();
    let mut out = net.with_load_scaling(&factors);
    out.name = format!("{}-p{seed}", net.name);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::testnets::graph;

    #[test]
    fn gap_arithmetic() {
        assert_eq!(compute_gap(5.0, 5.0).unwrap().percent, 0.0);
        assert!((compute_gap(99.0, 100.0).unwrap().percent - 1.0).abs() < 1e-12);
        let g = compute_gap(100.00001, 100.0).unwrap();
        assert!(g.percent == 0.0 && g.noise);
        assert!(matches!(compute_gap(1.0, 0.0), Err(PipelineError::NonpositiveUpperBound(_))));
    }

    #[test]
    fn method_names_round_trip() {
        for name in ["socp", "socpa", "s34a", "s34", "ssdp", "rm", "am", "asocp", "rsocp", "rsdp", "asdp"] {
            assert_eq!(name.parse::<Method>().unwrap().to_string(), name);
        }
        assert!("sdp".parse::<Method>().is_err());
    }

    #[test]
    fn flat_values_give_zero_angles() {
        let net = graph(4, &[(0, 1), (1, 2), (2, 3), (3, 0), (0, 2)]);
        let rec = recover_angles(&net, &vec![1.0; net.n_edges()], &vec![0.0; net.n_edges()]).unwrap();
        assert!(rec.theta.iter().all(|&t| t == 0.0));
        assert!(rec.mismatch.iter().all(|&m| m == 0.0));
    }

    #[test]
    fn tree_angles_have_no_mismatch_and_integrate_lines() {
        let net = graph(4, &[(0, 1), (1, 2), (1, 3)]);
        let c = [0.99, 0.98, 0.97];
        let s = [0.1, -0.2, 0.05];
        let rec = recover_angles(&net, &c, &s).unwrap();
        assert!(rec.mismatch.is_empty());
        for (e, edge) in net.edges.iter().enumerate() {
            let d = rec.theta[edge.to] - rec.theta[edge.from];
            assert!((d - s[e].atan2(c[e])).abs() < 1e-12);
        }
    }

    #[test]
    fn inconsistent_cycle_reports_mismatch() {
        let net = graph(3, &[(0, 1), (1, 2), (2, 0)]);
        let mut c = vec![1.0; 3];
        let mut s = vec![0.0; 3];
        let e = net.edge_between(0, 1).unwrap();
        c[e] = 0.3f64.cos();
        s[e] = 0.3f64.sin();
        let rec = recover_angles(&net, &c, &s).unwrap();
        assert!((rec.mismatch[0] - 0.3).abs() < 1e-12);
    }

    #[test]
    fn zero_products_are_rejected() {
        let net = graph(2, &[(0, 1)]);
        assert!(matches!(recover_angles(&net, &[0.0], &[0.0]), Err(PipelineError::UndefinedAtan2 { edge: 0 })));
    }

    #[test]
    fn flat_warm_start_round_trips() {
        let net = graph(3, &[(0, 1), (1, 2)]);
        let ws = WarmStart::flat(&net);
        assert!(ws.rows.iter().filter(|r| r.kind == "bus").all(|r| r.a == 1.0 && r.b == 0.0));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ws.csv");
        ws.write(&path).unwrap();
        assert!(std::fs::read_to_string(&path).unwrap().starts_with("kind,id,a,b\n"));
        assert_eq!(WarmStart::read(&path).unwrap(), ws);
    }

    #[test]
    fn perturbation_is_seeded_and_bounded() {
        let mut net = graph(3, &[(0, 1), (1, 2)]);
        for b in &mut net.buses {
            b.p_load = 1.0;
            b.q_load = 0.5;
        }
        let a = perturb_loads(&net, 3, 0.05);
        let b = perturb_loads(&net, 3, 0.05);
        assert_eq!(a.buses, b.buses);
        assert!(a.buses.iter().all(|x| (x.p_load - 1.0).abs() <= 0.05 && (x.q_load - 0.5).abs() <= 0.025 + 1e-15));
    }
}
