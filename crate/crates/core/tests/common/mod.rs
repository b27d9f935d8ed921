#![allow(dead_code)]

use std::path::PathBuf;

use opfrelax::case_io::load_network;
use opfrelax::network::{AcPoint, Network};
use opfrelax::cycle_cuts::ProductVar;
use opfrelax::pipeline::{run_method, LocalSolution, Method, MethodConfig, RunStatus};

pub fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

pub fn case(name: &str) -> Network {
    load_network(&data_dir().join("cases").join(format!("{name}.m"))).unwrap()
}

/// Locally optimal AC point from the frozen MATPOWER/PYPOWER run and its
/// objective.
pub fn reference(name: &str, net: &Network) -> (AcPoint, f64) {
    let r = LocalSolution::load(&data_dir().join("reference").join(format!("{name}.json"))).unwrap();
    (r.point(net), r.objective)
}

pub fn rel_diff(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

/// Exact products of an AC point.
pub fn product_at(net: &Network, p: &AcPoint, v: ProductVar) -> f64 {
    match v {
        ProductVar::Cii(i) => p.vm[i] * p.vm[i],
        ProductVar::C(e) => p.pair(net.edges[e].from, net.edges[e].to).0,
        ProductVar::S(e) => p.pair(net.edges[e].from, net.edges[e].to).1,
    }
}

/// Lower bound of one method with default settings.
pub fn lower_bound(net: &Network, method: Method) -> f64 {
    let run = run_method(net, &MethodConfig::new(method));
    assert_eq!(run.report.status, RunStatus::Ok, "{} {method}: {:?}", net.name, run.report.message);
    run.report.lb.unwrap()
}
