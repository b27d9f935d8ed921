//! Acceptance suite. Prints one `criterion N: PASS|FAIL` line per criterion,
//! preceded by indented detail lines.
//!
//! A criterion whose input data is not in the repository (the NESTA archive)
//! is reported as FAIL with the missing file named; only failures on
//! available data make the process exit nonzero.

mod common;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use common::{case, data_dir, product_at, reference};
use nalgebra::DMatrix;
use opfrelax::bounds::EdgeBoundSet;
use opfrelax::case_io::{load_network, parse_case, to_network};
use opfrelax::conic::{SolverOptions, VariableKey};
use opfrelax::cycle_cuts::{build_bilinear_3, build_bilinear_4, BilinearCycleSystem, ProductVar, Scalar};
use opfrelax::envelopes::{arctan_envelope, ArctanBox, Side};
use opfrelax::network::{cycle_basis, Network};
use opfrelax::pipeline::{
    compute_gap, perturb_loads, run_method, LocalSolution, Method, MethodConfig, MethodRun, RunStatus, UpperBoundHook,
};
use opfrelax::relaxations::{build_relaxation, BuildOptions, RelaxationKind};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const RSDP: Method = Method::Raw(RelaxationKind::Rsdp);

enum Outcome {
    Pass,
    Fail(String),
    /// Input data missing from the repository.
    Unavailable(String),
}

fn check(ok: bool, why: impl Into<String>) -> Outcome {
    if ok {
        Outcome::Pass
    } else {
        Outcome::Fail(why.into())
    }
}

/// Method runs shared between criteria, keyed by case and method name.
#[derive(Default)]
struct Runs {
    done: BTreeMap<(String, String), (MethodRun, f64)>,
}

impl Runs {
    fn get(&mut self, net: &Network, method: Method) -> &(MethodRun, f64) {
        self.get_with(net, MethodConfig::new(method))
    }

    fn get_with(&mut self, net: &Network, cfg: MethodConfig) -> &(MethodRun, f64) {
        let key = (net.name.clone(), cfg.method.to_string());
        self.done.entry(key).or_insert_with(|| {
            let t = Instant::now();
            let run = run_method(net, &cfg);
            (run, t.elapsed().as_secs_f64())
        })
    }

    fn lb(&mut self, net: &Network, method: Method) -> Result<f64, String> {
        let (run, _) = self.get(net, method);
        match (run.report.status, run.report.lb) {
            (RunStatus::Ok, Some(lb)) => Ok(lb),
            (s, _) => Err(format!("{} {method}: {s:?} {:?}", net.name, run.report.message)),
        }
    }
}

fn table2(runs: &mut Runs) -> Result<Outcome, String> {
    let cases = ["case9", "case14", "case_ieee30", "case30", "case57", "case118"];
    let targets: [(Method, [f64; 6]); 3] = [
        (Method::Socp, [1.0000, 0.9992, 0.9996, 0.9943, 0.9994, 0.9976]),
        (Method::Socpa, [1.0000, 0.9992, 0.9996, 0.9963, 0.9994, 0.9976]),
        (Method::Ssdp, [1.0000, 1.0000, 1.0000, 0.9993, 1.0000, 0.9997]),
    ];
    let mut bad = vec![];
    let mut column_secs = [0.0; 3];
    for (k, name) in cases.iter().enumerate() {
        let net = case(name);
        let denom = runs.lb(&net, RSDP)?;
        let mut line = format!("  {name:<12} RSDP {denom:>12.4}");
        for (m, (method, want)) in targets.iter().enumerate() {
            let lb = runs.lb(&net, *method)?;
            column_secs[m] += runs.get(&net, *method).1;
            let ratio = lb / denom;
            line += &format!("  {method} {ratio:.4} ({:.4})", want[k]);
            if (ratio - want[k]).abs() > 0.0015 {
                bad.push(format!("{name} {method} {ratio:.4} vs {:.4}", want[k]));
            }
        }
        println!("{line}");
    }
    for ((method, _), secs) in targets.iter().zip(column_secs) {
        println!("  {method} column time {secs:.1} s");
        if secs > 120.0 {
            bad.push(format!("{method} column took {secs:.1} s"));
        }
    }
    Ok(check(bad.is_empty(), bad.join("; ")))
}

fn table3(runs: &mut Runs) -> Result<Outcome, String> {
    let rows = [
        ("case9", Method::Socp, 0.00),
        ("case14", Method::Ssdp, 0.00),
        ("case57", Method::Ssdp, 0.00),
        ("case118", Method::Ssdp, 0.03),
        ("case300", Method::Ssdp, 0.00),
    ];
    let mut bad = vec![];
    for (name, method, want) in rows {
        let net = case(name);
        let (_, ub) = reference(name, &net);
        let lb = runs.lb(&net, method)?;
        let gap = compute_gap(lb, ub).map_err(|e| e.to_string())?.percent;
        println!("  {name:<8} {method:<5} lb {lb:>12.4} ub {ub:>12.4} gap {gap:.3} ({want:.2})");
        if (gap - want).abs() > 0.05 {
            bad.push(format!("{name} {method} gap {gap:.3}"));
        }
    }
    Ok(check(bad.is_empty(), bad.join("; ")))
}

fn nesta_dir() -> PathBuf {
    data_dir().join("nesta")
}

/// Upper bound of a NESTA case: a stored local solution next to the case file,
/// otherwise a run of the bundled local solver hook.
fn nesta_upper_bound(case_file: &Path) -> Result<f64, String> {
    let stored = case_file.with_extension("json");
    if stored.exists() {
        return LocalSolution::load(&stored).map(|s| s.objective).map_err(|e| e.to_string());
    }
    let hook = data_dir().join("../tools/local_solver_hook.py");
    let template = format!("python3 {} {{case}} --out {{out}}", hook.display());
    let dir = std::env::temp_dir();
    let warm = dir.join("acceptance-unused.csv");
    let out = dir.join(format!("{}-local.json", case_file.file_stem().unwrap().to_string_lossy()));
    UpperBoundHook::parse(&template).unwrap().run(case_file, &warm, &out).map(|s| s.objective).map_err(|e| e.to_string())
}

fn nesta_gap(runs: &mut Runs, file: &str, method: Method) -> Result<Result<f64, String>, String> {
    let path = nesta_dir().join(file);
    if !path.exists() {
        return Ok(Err(format!("missing data/nesta/{file}")));
    }
    let net = load_network(&path).map_err(|e| e.to_string())?;
    let ub = nesta_upper_bound(&path)?;
    let lb = runs.lb(&net, method)?;
    Ok(Ok(compute_gap(lb, ub).map_err(|e| e.to_string())?.percent))
}

fn table4(runs: &mut Runs) -> Result<Outcome, String> {
    let mut bad = vec![];
    let mut missing = vec![];
    // The typical-conditions PJM 5-bus system is MATPOWER's case5; it stands
    // in when the NESTA file is absent.
    let pjm = if nesta_dir().join("nesta_case5_pjm.m").exists() {
        nesta_gap(runs, "nesta_case5_pjm.m", Method::Socp)?.map_err(|e| e)?
    } else {
        let net = case("case5");
        let (_, ub) = reference("case5", &net);
        println!("  5pjm: using MATPOWER case5");
        compute_gap(runs.lb(&net, Method::Socp)?, ub).map_err(|e| e.to_string())?.percent
    };
    println!("  5pjm     SOCP gap {pjm:.3} (14.54 ± 0.2)");
    if (pjm - 14.54).abs() > 0.2 {
        bad.push(format!("5pjm SOCP {pjm:.3}"));
    }
    let rows = [
        ("nesta_case30_ieee.m", Method::Socp, 15.65, 0.3, 0.3),
        ("nesta_case30_ieee.m", Method::Ssdp, 0.00, 0.0, 0.05),
        ("nesta_case118_ieee.m", Method::S34a, 0.94, 0.15, 0.15),
    ];
    for (file, method, want, below, above) in rows {
        match nesta_gap(runs, file, method)? {
            Ok(gap) => {
                println!("  {file} {method} gap {gap:.3} ({want:.2})");
                if gap < want - below || gap > want + above {
                    bad.push(format!("{file} {method} {gap:.3}"));
                }
            }
            Err(m) => missing.push(m),
        }
    }
    missing.dedup();
    Ok(if !bad.is_empty() {
        Outcome::Fail(bad.join("; "))
    } else if !missing.is_empty() {
        Outcome::Unavailable(missing.join(", "))
    } else {
        Outcome::Pass
    })
}

const TWO_BUS: &str = "function mpc = two\nmpc.baseMVA = 100;\nmpc.bus = [\n1 3 0 0 0 0 1 1 0 230 1 1.1 0.9;\n2 1 50 10 0 0 1 1 0 230 1 1.1 0.9;\n];\nmpc.gen = [\n1 0 0 100 -100 1 100 1 200 0;\n];\nmpc.branch = [\n1 2 0.01 0.1 0 0 0 0 0 0 1 -360 360;\n];\nmpc.gencost = [\n2 0 0 3 0 1 0;\n];\n";

fn two_bus_certificate() -> Result<Outcome, String> {
    let net = to_network(&parse_case(TWO_BUS).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let bounds = EdgeBoundSet::default_for(&net);
    // (c12, s12, c11, c22) and the printed lifted matrix.
    let z = [1.000, 0.100, 1.000, 1.000];
    let cert = [
        [1.000, 1.000, 0.100, 1.000, 1.000],
        [1.000, 1.006, 0.100, 0.997, 0.997],
        [0.100, 0.100, 0.017, 0.100, 0.100],
        [1.000, 0.997, 0.100, 1.029, 1.023],
        [1.000, 0.997, 0.100, 1.023, 1.029],
    ];
    let value = |prog: &opfrelax::conic::ConicProgram| -> Vec<f64> {
        (0..prog.n_vars())
            .map(|k| match prog.key(opfrelax::conic::Var(k)) {
                VariableKey::Cij(0) => z[0],
                VariableKey::Sij(0) => z[1],
                VariableKey::Cii(i) => z[2 + i],
                VariableKey::Z(r, c) => cert[r][c],
                _ => 0.0,
            })
            .collect()
    };
    let socp = build_relaxation(&net, RelaxationKind::Asocp, &bounds, &BuildOptions::default()).map_err(|e| e.to_string())?;
    let x = value(&socp.program);
    let ev = |e: &opfrelax::conic::LinExpr| e.eval(&x);
    let (c, s, c11, c22) = (ev(socp.c(0)), ev(socp.s(0)), ev(socp.cii(0)), ev(socp.cii(1)));
    let cone = c * c + s * s - c11 * c22;
    println!("  ASOCP cone row c² + s² − c11·c22 = {cone:.12}");

    let m = DMatrix::from_fn(5, 5, |r, c| cert[r][c]);
    let lmin = m.symmetric_eigenvalues().min();
    println!("  certificate minimum eigenvalue {lmin:.6}");

    let asdp = build_relaxation(&net, RelaxationKind::Asdp, &bounds, &BuildOptions::default()).map_err(|e| e.to_string())?;
    let x = value(&asdp.program);
    let fill = |r: usize, c: usize| cert[r][c];
    // Only the lifting rows, those touching Z, in a program of equal width.
    let mut lifting = opfrelax::conic::ConicProgram::new();
    for k in 0..asdp.program.n_vars() {
        lifting.var(VariableKey::Aux("pad", k));
    }
    for con in asdp.program.constraints() {
        let touches_z = match con {
            opfrelax::conic::Constraint::Zero(e) | opfrelax::conic::Constraint::Nonneg(e) => {
                e.terms.iter().any(|(v, _)| matches!(asdp.program.key(*v), VariableKey::Z(..)))
            }
            opfrelax::conic::Constraint::Psd { .. } => true,
            _ => false,
        };
        if touches_z {
            lifting.add(con.clone());
        }
    }
    let worst = lifting.max_violation(&x, &fill);
    println!("  largest ASDP lifting-row violation {worst:.6}");
    Ok(check(
        (cone - 0.010).abs() <= 1e-9 && lmin >= -1e-6 && worst <= 1e-3,
        format!("cone {cone}, λmin {lmin}, lifting {worst}"),
    ))
}

fn theorem_ordering() -> Result<Outcome, String> {
    use RelaxationKind::*;
    let kinds = [Rm, Am, Asocp, Rsocp, Rsdp, Asdp];
    let tol = |v: f64| 1e-6 * v.abs().max(1.0);
    let mut strict: BTreeMap<&str, usize> = BTreeMap::new();
    let mut bad = vec![];
    let mut count = 0;
    for name in ["case9", "case14"] {
        let base = case(name);
        let instances: Vec<Network> =
            std::iter::once(base.clone()).chain((0..20).map(|seed| perturb_loads(&base, seed, 0.05))).collect();
        for net in &instances {
            let mut lb = BTreeMap::new();
            for k in kinds {
                let run = run_method(net, &MethodConfig::new(Method::Raw(k)));
                match (run.report.status, run.report.lb) {
                    (RunStatus::Ok, Some(v)) => lb.insert(format!("{k:?}"), v),
                    (s, _) => return Err(format!("{} {k:?}: {s:?}", net.name)),
                };
            }
            count += 1;
            let g = |k: &str| lb[k];
            let pairs = [
                ("RSDP ≥ ASOCP", g("Rsdp"), g("Asocp")),
                ("ASOCP ≥ AM", g("Asocp"), g("Am")),
                ("AM ≥ RM", g("Am"), g("Rm")),
                ("ASOCP ≥ ASDP", g("Asocp"), g("Asdp")),
            ];
            for (label, hi, lo) in pairs {
                if hi < lo - tol(hi) {
                    bad.push(format!("{}: {label} fails ({hi} < {lo})", net.name));
                }
                *strict.entry(label).or_default() += usize::from(hi > lo + tol(hi));
            }
            if (g("Asocp") - g("Rsocp")).abs() > tol(g("Asocp")) {
                bad.push(format!("{}: ASOCP {} ≠ RSOCP {}", net.name, g("Asocp"), g("Rsocp")));
            }
        }
    }
    println!("  {count} instances; strict inequality counts: {strict:?}");
    for (label, n) in &strict {
        if *n == 0 {
            bad.push(format!("{label} never strict"));
        }
    }
    Ok(check(bad.is_empty(), bad.join("; ")))
}

fn cut_soundness(runs: &mut Runs) -> Result<Outcome, String> {
    let mut checked = 0;
    let mut bad = vec![];
    for name in ["case9", "case14", "case30", "case118"] {
        let net = case(name);
        let (p, _) = reference(name, &net);
        for method in [Method::S34a, Method::S34, Method::Ssdp] {
            let (run, _) = runs.get(&net, method);
            if run.report.status != RunStatus::Ok {
                return Err(format!("{name} {method}: {:?}", run.report.message));
            }
            for cut in &run.pool.cuts {
                checked += 1;
                let lhs = cut.eval(&|v| product_at(&net, &p, v));
                if lhs > 1e-7 {
                    bad.push(format!("{name} {method} {:?} cycle {}: {lhs:.3e}", cut.origin, cut.cycle_id));
                }
            }
        }
    }
    println!("  {checked} cuts checked at the local optima, {} violated", bad.len());
    Ok(check(bad.is_empty(), bad.join("; ")))
}

/// Largest shortfall of a plane on an `n × n` grid, before its shift.
fn grid_shift(b: &ArctanBox, unshifted: &dyn Fn(f64, f64) -> f64, upper: bool, n: usize) -> f64 {
    let mut best: f64 = 0.0;
    for i in 0..n {
        let c = b.c_lo + (b.c_hi - b.c_lo) * i as f64 / (n - 1) as f64;
        for j in 0..n {
            let s = b.s_lo + (b.s_hi - b.s_lo) * j as f64 / (n - 1) as f64;
            let d = (s / c).atan() - unshifted(c, s);
            best = best.max(if upper { d } else { -d });
        }
    }
    best
}

fn envelope_soundness() -> Result<Outcome, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst_violation: f64 = 0.0;
    let mut worst_shift: f64 = 0.0;
    for _ in 0..50 {
        let c_lo = rng.gen_range(0.5..=1.0);
        let c_hi = c_lo + rng.gen_range(0.0..0.6);
        let s_lo = rng.gen_range(-0.8..0.6);
        let s_hi = s_lo + rng.gen_range(0.0..0.6);
        let b = ArctanBox::new(c_lo, c_hi, s_lo, s_hi).map_err(|e| e.to_string())?;
        let env = arctan_envelope(&b);
        for _ in 0..10_000 {
            let c = rng.gen_range(c_lo..=c_hi);
            let s = rng.gen_range(s_lo..=s_hi);
            for p in &env {
                worst_violation = worst_violation.max(p.violation(c, s, (s / c).atan()));
            }
        }
        for p in &env {
            let upper = p.side == Side::Upper;
            let sign = if upper { 1.0 } else { -1.0 };
            let unshifted = |c: f64, s: f64| p.eval(c, s) - sign * p.delta_gamma;
            let g = grid_shift(&b, &unshifted, upper, 1001);
            worst_shift = worst_shift.max((g - p.delta_gamma).abs());
        }
    }
    println!("  worst sampled violation {worst_violation:.3e}, worst shift error vs 1001² grid {worst_shift:.3e}");
    Ok(check(worst_violation <= 1e-9 && worst_shift <= 1e-5, format!("violation {worst_violation}, shift {worst_shift}")))
}

fn ring(n: usize, rng: &mut ChaCha8Rng) -> Network {
    let mut ids: Vec<usize> = (1..=n).collect();
    for k in (1..n).rev() {
        ids.swap(k, rng.gen_range(0..=k));
    }
    let mut text = String::from("function mpc = ring\nmpc.baseMVA = 100;\nmpc.bus = [\n");
    for (k, id) in ids.iter().enumerate() {
        text += &format!("{id} {} 10 1 0 0 1 1 0 230 1 1.1 0.9;\n", if k == 0 { 3 } else { 1 });
    }
    text += &format!("];\nmpc.gen = [\n{} 0 0 100 -100 1 100 1 200 0;\n];\nmpc.branch = [\n", ids[0]);
    for k in 0..n {
        text += &format!("{} {} 0.01 0.1 0 0 0 0 0 0 1 -360 360;\n", ids[k], ids[(k + 1) % n]);
    }
    text += "];\nmpc.gencost = [\n2 0 0 2 1 0;\n];\n";
    to_network(&parse_case(&text).unwrap()).unwrap()
}

/// Largest row residual at a point built from bus potentials `phi` with the
/// closing edge of the rooted cycle turned by an extra `delta`; chords follow
/// the potentials.
fn residual(net: &Network, sys: &BilinearCycleSystem, v: &[f64], phi: &[f64], delta: f64) -> f64 {
    let cyc = &sys.cycle;
    let n = cyc.len();
    let (last, first) = (cyc.buses[n - 1], cyc.buses[0]);
    let pair = |a: usize, b: usize, d: f64| (v[a] * v[b] * d.cos(), v[a] * v[b] * d.sin());
    let edge = |e: usize| {
        let (f, t) = (net.edges[e].from, net.edges[e].to);
        let mut d = phi[t] - phi[f];
        if (f, t) == (last, first) {
            d += delta;
        } else if (f, t) == (first, last) {
            d -= delta;
        }
        pair(f, t, d)
    };
    let val = |x: Scalar| match x {
        Scalar::Master(ProductVar::Cii(i)) => v[i] * v[i],
        Scalar::Master(ProductVar::C(e)) => edge(e).0,
        Scalar::Master(ProductVar::S(e)) => edge(e).1,
        Scalar::ArtC(k) | Scalar::ArtS(k) => {
            let a = &sys.artificial[k];
            let (c, s) = pair(a.from, a.to, phi[a.to] - phi[a.from]);
            if matches!(x, Scalar::ArtC(_)) {
                c
            } else {
                s
            }
        }
    };
    sys.rows.iter().chain(&sys.surface).map(|r| r.eval(&val).abs()).fold(0.0, f64::max)
}

fn decomposition_equivalence() -> Result<Outcome, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let tau = 2.0 * std::f64::consts::PI;
    let mut bad = vec![];
    for n in 3..=6 {
        let net = ring(n, &mut rng);
        let cycle = cycle_basis(&net).cycles.remove(0);
        let bounds = EdgeBoundSet::default_for(&net);
        let systems = [build_bilinear_3(&net, 0, &cycle, &bounds), build_bilinear_4(&net, 0, &cycle, &bounds)];
        let (mut zero_worst, mut off_least) = (0.0f64, f64::INFINITY);
        for trial in 0..1000 {
            let v: Vec<f64> = (0..n).map(|_| rng.gen_range(0.9..=1.1)).collect();
            let phi: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let consistent = trial % 2 == 0;
            let delta = if consistent {
                tau * rng.gen_range(-1i32..=1) as f64
            } else {
                let d: f64 = rng.gen_range(0.01..tau - 0.01);
                if rng.gen() { d } else { -d }
            };
            let r = systems.iter().map(|s| residual(&net, s, &v, &phi, delta)).fold(0.0, f64::max);
            if consistent {
                zero_worst = zero_worst.max(r);
            } else {
                off_least = off_least.min(r);
            }
        }
        println!("  {n}-cycle: largest residual at consistent angles {zero_worst:.1e}, smallest otherwise {off_least:.1e}");
        if zero_worst > 1e-10 || off_least <= 1e-10 {
            bad.push(format!("{n}-cycle"));
        }
    }
    Ok(check(bad.is_empty(), bad.join("; ")))
}

fn monotone_rounds(runs: &mut Runs) -> Result<Outcome, String> {
    let net = case("case14");
    let ssdp = runs.lb(&net, Method::Ssdp)?;
    let ratio = ssdp / runs.lb(&net, RSDP)?;
    let rounds = runs.get(&net, Method::Ssdp).0.report.rounds.len() - 1;
    println!("  case14 SSDP ratio {ratio:.6} after {rounds} rounds");
    let mut bad = vec![];
    for ((name, method), (run, _)) in &runs.done {
        for w in run.report.rounds.windows(2) {
            if w[1].lb < w[0].lb - 1e-7 * w[0].lb.abs() {
                bad.push(format!("{name} {method}: {} then {}", w[0].lb, w[1].lb));
            }
        }
    }
    println!("  {} runs checked", runs.done.len());
    if ratio < 0.9999 || rounds > 5 {
        bad.push(format!("case14 SSDP ratio {ratio:.6}"));
    }
    Ok(check(bad.is_empty(), bad.join("; ")))
}

fn small_angle_pattern(runs: &mut Runs) -> Result<Outcome, String> {
    let files = ["nesta_case3_lmbd__sad.m", "nesta_case5_pjm__sad.m"];
    let missing: Vec<String> =
        files.iter().filter(|f| !nesta_dir().join(f).exists()).map(|f| format!("missing data/nesta/{f}")).collect();
    if !missing.is_empty() {
        return Ok(Outcome::Unavailable(missing.join(", ")));
    }
    let gap = |runs: &mut Runs, file: &str, m: Method| nesta_gap(runs, file, m).and_then(|r| r);
    let (l_s34, l_sdp) = (gap(runs, files[0], Method::S34)?, gap(runs, files[0], RSDP)?);
    let (p_s34, p_sdp, p_socpa) =
        (gap(runs, files[1], Method::S34)?, gap(runs, files[1], RSDP)?, gap(runs, files[1], Method::Socpa)?);
    println!("  3lmbd S34 {l_s34:.3} (1.53) SDP {l_sdp:.3} (2.06)");
    println!("  5pjm  S34 {p_s34:.3} (0.40) SDP {p_sdp:.3} (0.00) SOCPA {p_socpa:.3} (0.45)");
    let ok = l_s34 < l_sdp
        && (l_s34 - 1.53).abs() <= 0.2
        && (l_sdp - 2.06).abs() <= 0.2
        && p_sdp < p_s34.min(p_socpa)
        && p_sdp.abs() <= 0.1
        && (p_s34 - 0.40).abs() <= 0.1
        && (p_socpa - 0.45).abs() <= 0.1;
    Ok(check(ok, "sign pattern or values off"))
}

/// Completion and ordering on a 2000+-bus case. Its tiny branch impedances
/// keep the interior-point residuals near 1e-5, so masters are accepted at
/// that accuracy and ordering is checked to the same relative tolerance.
fn large_case_smoke(runs: &mut Runs) -> Result<Outcome, String> {
    let net = case("case2383wp");
    let tol = 1e-4;
    let mut lb = BTreeMap::new();
    for method in [Method::Socp, Method::Socpa, Method::S34a, Method::Ssdp] {
        let cfg = MethodConfig {
            solver: SolverOptions { tol_gap_rel: 1e-8, tol_feas: 1e-8, accept_tol: tol, ..SolverOptions::default() },
            ..MethodConfig::new(method)
        };
        let (run, secs) = runs.get_with(&net, cfg);
        println!("  {method:<5} {:?} lb {:?} in {secs:.0} s", run.report.status, run.report.lb);
        match (run.report.status, run.report.lb) {
            (RunStatus::Ok, Some(v)) => lb.insert(method.to_string(), v),
            _ => return Ok(Outcome::Fail(format!("{method} did not complete: {:?}", run.report.message))),
        };
    }
    let le = |a: &str, b: &str| lb[a] <= lb[b] + tol * lb[b].abs();
    Ok(check(le("socp", "socpa") && le("socpa", "s34a") && le("socp", "ssdp"), format!("{lb:?}")))
}

fn main() -> ExitCode {
    let mut runs = Runs::default();
    type Criterion = fn(&mut Runs) -> Result<Outcome, String>;
    let criteria: [(&str, Criterion); 11] = [
        ("1", table2),
        ("2", table3),
        ("3", table4),
        ("4", |_| two_bus_certificate()),
        ("5", |_| theorem_ordering()),
        ("6", cut_soundness),
        ("7", |_| envelope_soundness()),
        ("8", |_| decomposition_equivalence()),
        ("9", monotone_rounds),
        ("10", small_angle_pattern),
        ("smoke", large_case_smoke),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (id, f) in criteria {
        if !filter.is_empty() && !filter.iter().any(|x| x == id) {
            continue;
        }
        let t = Instant::now();
        let outcome = f(&mut runs).unwrap_or_else(|e| Outcome::Fail(e));
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Outcome::Pass => println!("criterion {id}: PASS ({secs:.1} s)"),
            Outcome::Fail(why) => {
                failed += 1;
                println!("criterion {id}: FAIL ({why})");
            }
            Outcome::Unavailable(why) => println!("criterion {id}: FAIL (data unavailable: {why})"),
        }
    }
    if failed > 0 {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
