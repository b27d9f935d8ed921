mod common;

use common::{case, lower_bound, reference};
use opfrelax::pipeline::{compute_gap, product_values, recover_angles, run_method, Method, MethodConfig, RunStatus, WarmStart};
use opfrelax::relaxations::RelaxationKind;

const NOISE: f64 = 1e-7;

#[test]
fn method_ordering_on_meshed_cases() {
    for name in ["case9", "case14", "case30"] {
        let net = case(name);
        let lb = |m| lower_bound(&net, m);
        let (socp, socpa, s34a, ssdp) = (lb(Method::Socp), lb(Method::Socpa), lb(Method::S34a), lb(Method::Ssdp));
        let rsdp = lb(Method::Raw(RelaxationKind::Rsdp));
        let tol = NOISE * rsdp.abs();
        assert!(socp <= socpa + tol, "{name}: SOCP {socp} > SOCPA {socpa}");
        assert!(socpa <= s34a + tol, "{name}: SOCPA {socpa} > S34A {s34a}");
        assert!(socp <= ssdp + tol, "{name}: SOCP {socp} > SSDP {ssdp}");
        assert!(ssdp <= rsdp + 1e-6 * rsdp.abs(), "{name}: SSDP {ssdp} > RSDP {rsdp}");
    }
}

#[test]
fn runs_are_reproducible() {
    let net = case("case14");
    for method in [Method::S34a, Method::Ssdp] {
        let a = run_method(&net, &MethodConfig::new(method)).report;
        let b = run_method(&net, &MethodConfig::new(method)).report;
        assert_eq!(a.cuts, b.cuts);
        assert_eq!(a.rounds.len(), b.rounds.len());
        for (x, y) in a.rounds.iter().zip(&b.rounds) {
            assert!((x.lb - y.lb).abs() <= 1e-8 * x.lb.abs(), "{method}: {} vs {}", x.lb, y.lb);
            assert_eq!(x.cuts_added, y.cuts_added);
        }
    }
}

#[test]
fn case9_socp_closes_the_gap() {
    let net = case("case9");
    let (_, ub) = reference("case9", &net);
    let gap = compute_gap(lower_bound(&net, Method::Socp), ub).unwrap();
    assert!(gap.percent < 0.005, "{gap:?}");
}

#[test]
fn case30_asocp_leaves_a_cycle_inconsistent() {
    let net = case("case30");
    let run = run_method(&net, &MethodConfig::new(Method::Socp));
    let (_, c, s) = product_values(run.relaxation.as_ref().unwrap(), run.solution.as_ref().unwrap());
    let rec = recover_angles(&net, &c, &s).unwrap();
    let worst = rec.mismatch.iter().cloned().fold(0.0, f64::max);
    assert!(worst > 1e-3, "largest mismatch {worst}");
}

#[test]
fn case9_warm_start_round_trips() {
    let net = case("case9");
    let run = run_method(&net, &MethodConfig::new(Method::Socp));
    let ws = WarmStart::from_solution(&net, run.relaxation.as_ref().unwrap(), run.solution.as_ref().unwrap()).unwrap();
    assert_eq!(ws.rows.iter().filter(|r| r.kind == "bus").count(), 9);
    assert_eq!(ws.rows.iter().filter(|r| r.kind == "gen").count(), 3);
    let ids: Vec<usize> = ws.rows.iter().filter(|r| r.kind == "bus").map(|r| r.id).collect();
    assert!(ids.windows(2).all(|w| w[0] < w[1]));
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("case9.csv");
    ws.write(&path).unwrap();
    assert_eq!(WarmStart::read(&path).unwrap(), ws);
}

#[test]
fn overloaded_case_is_certified_infeasible() {
    let net = case("case9").with_load_scaling(&[10.0; 9]);
    for method in [Method::Socp, Method::Socpa] {
        let run = run_method(&net, &MethodConfig::new(method));
        assert_eq!(run.report.status, RunStatus::Infeasible, "{method}");
        assert_eq!(run.report.status.exit_code(), 2);
    }
}

#[test]
fn rounds_are_monotone_and_reported() {
    let net = case("case30");
    for method in [Method::S34a, Method::S34, Method::Ssdp] {
        let r = run_method(&net, &MethodConfig::new(method)).report;
        assert!(r.rounds.len() <= 6);
        for w in r.rounds.windows(2) {
            assert!(w[1].lb >= w[0].lb - NOISE * w[0].lb.abs(), "{method}: {} then {}", w[0].lb, w[1].lb);
            assert!(w[1].cuts_added > 0);
        }
        assert_eq!(r.cuts.values().sum::<usize>(), r.rounds.iter().map(|x| x.cuts_added).sum::<usize>());
        let json = serde_json::to_value(&r).unwrap();
        for key in ["case", "method", "lb", "rounds", "times", "status"] {
            assert!(json.get(key).is_some(), "missing {key}");
        }
    }
}
