//! Immutable per-unit network model.
//!
//! Branches between the same pair of buses share one [`Edge`]; the voltage
//! products `c_ij`, `s_ij` live on edges, oriented from the lower to the
//! higher internal bus index. Each branch keeps its own pi-model flow
//! coefficients, so taps and phase shifters never leak into the cycle
//! geometry.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BusKind {
    Reference,
    Pv,
    Pq,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    /// External id from the case file.
    pub id: usize,
    pub kind: BusKind,
    pub v_min: f64,
    pub v_max: f64,
    pub g_sh: f64,
    pub b_sh: f64,
    pub p_load: f64,
    pub q_load: f64,
    /// Case-file voltage magnitude and angle (radians), informational.
    pub vm: f64,
    pub va: f64,
}

/// Generator cost in $/h as a function of per-unit active power.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum CostFunction {
    Polynomial { c2: f64, c1: f64, c0: f64 },
    PiecewiseLinear { points: Vec<(f64, f64)> },
}

impl CostFunction {
    pub fn eval(&self, p: f64) -> f64 {
        match self {
            CostFunction::Polynomial { c2, c1, c0 } => c2 * p * p + c1 * p + c0,
            CostFunction::PiecewiseLinear { points } => points
                .windows(2)
                .map(|w| {
                    let slope = (w[1].1 - w[0].1) / (w[1].0 - w[0].0);
                    w[0].1 + slope * (p - w[0].0)
                })
                .fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    /// Row of the generator in the case file.
    pub case_index: usize,
    pub bus: usize,
    pub p_min: f64,
    pub p_max: f64,
    pub q_min: f64,
    pub q_max: f64,
    /// Case-file dispatch, informational.
    pub pg: f64,
    pub qg: f64,
    pub cost: CostFunction,
}

/// Linear maps from `(c_ff, c_tt, c_ft, s_ft)` to the four branch-end flows,
/// with `c_ft + j s_ft`'s conjugate equal to `V_from conj(V_to)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowCoefficients {
    pub p_from: [f64; 4],
    pub q_from: [f64; 4],
    pub p_to: [f64; 4],
    pub q_to: [f64; 4],
}

impl FlowCoefficients {
    /// Pi-model with series admittance `g + jb`, total charging `b_charge`,
    /// off-nominal tap `tap` at the from end and phase shift `shift`.
    pub fn pi_model(g: f64, b: f64, b_charge: f64, tap: f64, shift: f64) -> Self {
        let (sn, cs) = shift.sin_cos();
        let gff = g / (tap * tap);
        let bff = (b + b_charge / 2.0) / (tap * tap);
        let gft = -(g * cs - b * sn) / tap;
        let bft = -(b * cs + g * sn) / tap;
        let gtf = -(g * cs + b * sn) / tap;
        let btf = -(b * cs - g * sn) / tap;
        let gtt = g;
        let btt = b + b_charge / 2.0;
        FlowCoefficients {
            p_from: [gff, 0.0, gft, -bft],
            q_from: [-bff, 0.0, -bft, -gft],
            p_to: [0.0, gtt, gtf, btf],
            q_to: [0.0, -btt, -btf, gtf],
        }
    }

    pub fn rows(&self) -> [&[f64; 4]; 4] {
        [&self.p_from, &self.q_from, &self.p_to, &self.q_to]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub case_index: usize,
    pub from: usize,
    pub to: usize,
    pub r: f64,
    pub x: f64,
    /// Series conductance and susceptance, `1 / (r + jx)`.
    pub g: f64,
    pub b: f64,
    pub b_charge: f64,
    pub tap: f64,
    /// Phase shift in radians.
    pub shift: f64,
    /// Apparent power limit at each end.
    pub s_max: Option<f64>,
    /// Bounds on `θ_from − θ_to` in radians.
    pub angle_min: Option<f64>,
    pub angle_max: Option<f64>,
    pub flow: FlowCoefficients,
    pub edge: usize,
    /// True when the branch runs from the edge's `to` bus to its `from` bus.
    pub reversed: bool,
}

impl Branch {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        case_index: usize,
        from: usize,
        to: usize,
        r: f64,
        x: f64,
        b_charge: f64,
        tap: f64,
        shift: f64,
        s_max: Option<f64>,
        angle_min: Option<f64>,
        angle_max: Option<f64>,
    ) -> Self {
        let z2 = r * r + x * x;
        let (g, b) = (r / z2, -x / z2);
        Branch {
            case_index,
            from,
            to,
            r,
            x,
            g,
            b,
            b_charge,
            tap,
            shift,
            s_max,
            angle_min,
            angle_max,
            flow: FlowCoefficients::pi_model(g, b, b_charge, tap, shift),
            edge: usize::MAX,
            reversed: false,
        }
    }
}

/// An unordered bus pair carrying one or more branches; `from < to`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub from: usize,
    pub to: usize,
    pub branches: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum NetworkDiagnostic {
    /// External id of a bus with no in-service branch and no generator.
    IslandedBus { bus: usize },
    NegativeResistance { branch: usize, r: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub name: String,
    pub base_mva: f64,
    pub buses: Vec<Bus>,
    pub generators: Vec<Generator>,
    pub branches: Vec<Branch>,
    pub edges: Vec<Edge>,
    /// Per bus: `(neighbor, edge index)`, sorted by neighbor.
    pub adjacency: Vec<Vec<(usize, usize)>>,
    /// Connected component id per bus.
    pub component: Vec<usize>,
    pub n_components: usize,
    pub diagnostics: Vec<NetworkDiagnostic>,
    gens_at: Vec<Vec<usize>>,
}

impl Network {
    pub fn assemble(
        name: String,
        base_mva: f64,
        buses: Vec<Bus>,
        generators: Vec<Generator>,
        mut branches: Vec<Branch>,
        mut diagnostics: Vec<NetworkDiagnostic>,
    ) -> Self {
        let n = buses.len();
        let mut edge_of: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        let mut edges: Vec<Edge> = Vec::new();
        for (k, br) in branches.iter_mut().enumerate() {
            let key = (br.from.min(br.to), br.from.max(br.to));
            let e = *edge_of.entry(key).or_insert_with(|| {
                edges.push(Edge {
                    from: key.0,
                    to: key.1,
                    branches: Vec::new(),
                });
                edges.len() - 1
            });
            edges[e].branches.push(k);
            br.edge = e;
            br.reversed = br.from != key.0;
        }
        let mut adjacency = vec![Vec::new(); n];
        for (e, edge) in edges.iter().enumerate() {
            adjacency[edge.from].push((edge.to, e));
            adjacency[edge.to].push((edge.from, e));
        }
        for a in &mut adjacency {
            a.sort_unstable();
        }
        let mut gens_at = vec![Vec::new(); n];
        for (k, g) in generators.iter().enumerate() {
            gens_at[g.bus].push(k);
        }
        let mut component = vec![usize::MAX; n];
        let mut n_components = 0;
        for s in 0..n {
            if component[s] != usize::MAX {
                continue;
            }
            let mut queue = VecDeque::from([s]);
            component[s] = n_components;
            while let Some(u) = queue.pop_front() {
                for &(v, _) in &adjacency[u] {
                    if component[v] == usize::MAX {
                        component[v] = n_components;
                        queue.push_back(v);
                    }
                }
            }
            n_components += 1;
        }
        for (i, bus) in buses.iter().enumerate() {
            if adjacency[i].is_empty() && gens_at[i].is_empty() {
                diagnostics.push(NetworkDiagnostic::IslandedBus { bus: bus.id });
            }
        }
        Network {
            name,
            base_mva,
            buses,
            generators,
            branches,
            edges,
            adjacency,
            component,
            n_components,
            diagnostics,
            gens_at,
        }
    }

    pub fn n_buses(&self) -> usize {
        self.buses.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn gens_at(&self, bus: usize) -> &[usize] {
        &self.gens_at[bus]
    }

    pub fn bus_index(&self, id: usize) -> Option<usize> {
        self.buses.iter().position(|b| b.id == id)
    }

    pub fn edge_between(&self, i: usize, j: usize) -> Option<usize> {
        let a = &self.adjacency[i];
        a.binary_search_by_key(&j, |&(v, _)| v).ok().map(|k| a[k].1)
    }

    /// `|L| − |B| + #components` over distinct bus pairs.
    pub fn cyclomatic_number(&self) -> usize {
        self.edges.len() + self.n_components - self.buses.len()
    }

    /// One angle reference per component: its first generator bus, or its
    /// lowest-index bus when it has no generator.
    pub fn reference_buses(&self) -> Vec<usize> {
        let mut refs = vec![usize::MAX; self.n_components];
        for g in &self.generators {
            let c = self.component[g.bus];
            if refs[c] == usize::MAX {
                refs[c] = g.bus;
            }
        }
        for i in 0..self.n_buses() {
            let c = self.component[i];
            if refs[c] == usize::MAX {
                refs[c] = i;
            }
        }
        refs
    }

    /// Scales each bus load (active and reactive) by its factor.
    pub fn with_load_scaling(&self, factors: &[f64]) -> Network {
        assert_eq!(factors.len(), self.n_buses());
        let mut net = self.clone();
        for (bus, f) in net.buses.iter_mut().zip(factors) {
            bus.p_load *= f;
            bus.q_load *= f;
        }
        net
    }

    /// Hex SHA-256 of the network's serialized content.
    pub fn fingerprint(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("network serializes");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// An AC operating point: bus magnitudes and angles (radians), generator
/// injections (p.u.).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcPoint {
    pub vm: Vec<f64>,
    pub va: Vec<f64>,
    pub pg: Vec<f64>,
    pub qg: Vec<f64>,
}

impl AcPoint {
    pub fn flat(net: &Network) -> Self {
        AcPoint {
            vm: vec![1.0; net.n_buses()],
            va: vec![0.0; net.n_buses()],
            pg: vec![0.0; net.generators.len()],
            qg: vec![0.0; net.generators.len()],
        }
    }

    pub fn e(&self, i: usize) -> f64 {
        self.vm[i] * self.va[i].cos()
    }

    pub fn f(&self, i: usize) -> f64 {
        self.vm[i] * self.va[i].sin()
    }

    /// `(c_ij, s_ij) = (e_ie_j + f_if_j, e_if_j − e_jf_i)`.
    pub fn pair(&self, i: usize, j: usize) -> (f64, f64) {
        let m = self.vm[i] * self.vm[j];
        let d = self.va[j] - self.va[i];
        (m * d.cos(), m * d.sin())
    }

    /// Largest absolute power mismatch over all buses, p.u.
    pub fn balance_mismatch(&self, net: &Network) -> f64 {
        let nb = net.n_buses();
        let mut p = vec![0.0; nb];
        let mut q = vec![0.0; nb];
        for (i, b) in net.buses.iter().enumerate() {
            let v2 = self.vm[i] * self.vm[i];
            p[i] = -b.p_load - b.g_sh * v2;
            q[i] = -b.q_load + b.b_sh * v2;
        }
        for (k, g) in net.generators.iter().enumerate() {
            p[g.bus] += self.pg[k];
            q[g.bus] += self.qg[k];
        }
        for br in &net.branches {
            let (c, s) = self.pair(br.from, br.to);
            let w = [self.vm[br.from].powi(2), self.vm[br.to].powi(2), c, s];
            let dot = |row: &[f64; 4]| row.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>();
            p[br.from] -= dot(&br.flow.p_from);
            q[br.from] -= dot(&br.flow.q_from);
            p[br.to] -= dot(&br.flow.p_to);
            q[br.to] -= dot(&br.flow.q_to);
        }
        p.iter().chain(&q).fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn cost(&self, net: &Network) -> f64 {
        net.generators.iter().zip(&self.pg).map(|(g, &p)| g.cost.eval(p)).sum()
    }
}

/// A simple cycle: `edges[k]` joins `buses[k]` and `buses[(k + 1) % n]`;
/// `signs[k]` is +1 when that edge is oriented along the traversal.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cycle {
    pub buses: Vec<usize>,
    pub edges: Vec<usize>,
    pub signs: Vec<i8>,
}

impl Cycle {
    pub fn len(&self) -> usize {
        self.buses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buses.is_empty()
    }

    /// Same cycle read from its lowest-index bus.
    pub fn rooted_at_min(&self) -> Cycle {
        let k = (0..self.len()).min_by_key(|&k| self.buses[k]).unwrap_or(0);
        fn rot<T: Copy>(v: &[T], k: usize) -> Vec<T> {
            v[k..].iter().chain(&v[..k]).copied().collect()
        }
        Cycle {
            buses: rot(&self.buses, k),
            edges: rot(&self.edges, k),
            signs: rot(&self.signs, k),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CycleBasis {
    pub cycles: Vec<Cycle>,
}

/// Fundamental cycles of a breadth-first spanning forest rooted at the
/// highest-degree bus of each component.
pub fn cycle_basis(net: &Network) -> CycleBasis {
    let n = net.n_buses();
    let mut parent: Vec<Option<(usize, usize)>> = vec![None; n];
    let mut depth = vec![usize::MAX; n];
    let mut tree_edge = vec![false; net.n_edges()];
    let mut roots: Vec<usize> = vec![usize::MAX; net.n_components];
    for i in 0..n {
        let c = net.component[i];
        let better = roots[c] == usize::MAX || net.adjacency[i].len() > net.adjacency[roots[c]].len();
        if better {
            roots[c] = i;
        }
    }
    for &root in &roots {
        depth[root] = 0;
        let mut queue = VecDeque::from([root]);
        while let Some(u) = queue.pop_front() {
            for &(v, e) in &net.adjacency[u] {
                if depth[v] == usize::MAX {
                    depth[v] = depth[u] + 1;
                    parent[v] = Some((u, e));
                    tree_edge[e] = true;
                    queue.push_back(v);
                }
            }
        }
    }
    let mut cycles = Vec::new();
    for (e, edge) in net.edges.iter().enumerate() {
        if tree_edge[e] {
            continue;
        }
        // Walk both endpoints up to their lowest common ancestor.
        let (mut a, mut b) = (edge.from, edge.to);
        let mut up_a = vec![];
        let mut up_b = vec![];
        while depth[a] > depth[b] {
            let (p, pe) = parent[a].unwrap();
            up_a.push((a, pe));
            a = p;
        }
        while depth[b] > depth[a] {
            let (p, pe) = parent[b].unwrap();
            up_b.push((b, pe));
            b = p;
        }
        while a != b {
            let (pa, ea) = parent[a].unwrap();
            let (pb, eb) = parent[b].unwrap();
            up_a.push((a, ea));
            up_b.push((b, eb));
            a = pa;
            b = pb;
        }
        // Traverse: from -> ... -> lca -> ... -> to, then close with e.
        let mut buses = Vec::new();
        let mut edges = Vec::new();
        for &(v, pe) in &up_a {
            buses.push(v);
            edges.push(pe);
        }
        buses.push(a);
        for &(v, pe) in up_b.iter().rev() {
            edges.push(pe);
            buses.push(v);
        }
        edges.push(e);
        let m = buses.len();
        let signs = (0..m).map(|k| if net.edges[edges[k]].from == buses[k] { 1 } else { -1 }).collect();
        cycles.push(Cycle { buses, edges, signs });
    }
    CycleBasis { cycles }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NeighborhoodSpec {
    /// Buses within `r` steps of `k` or `l`.
    pub buses_inner: BTreeSet<usize>,
    /// Buses within `r + 1` steps.
    pub buses_outer: BTreeSet<usize>,
    /// Generators at inner buses.
    pub gens: BTreeSet<usize>,
    /// Edges with at least one endpoint in the inner set.
    pub lines: BTreeSet<usize>,
}

pub fn neighborhood(net: &Network, k: usize, l: usize, r: usize) -> NeighborhoodSpec {
    let mut dist = vec![usize::MAX; net.n_buses()];
    let mut queue = VecDeque::new();
    for s in [k, l] {
        if dist[s] == usize::MAX {
            dist[s] = 0;
            queue.push_back(s);
        }
    }
    while let Some(u) = queue.pop_front() {
        if dist[u] > r {
            continue;
        }
        for &(v, _) in &net.adjacency[u] {
            if dist[v] == usize::MAX {
                dist[v] = dist[u] + 1;
                queue.push_back(v);
            }
        }
    }
    let buses_inner: BTreeSet<usize> = (0..net.n_buses()).filter(|&i| dist[i] <= r).collect();
    let buses_outer = (0..net.n_buses()).filter(|&i| dist[i] <= r + 1).collect();
    let gens = buses_inner.iter().flat_map(|&i| net.gens_at(i).iter().copied()).collect();
    let lines = buses_inner
        .iter()
        .flat_map(|&i| net.adjacency[i].iter().map(|&(_, e)| e))
        .collect();
    NeighborhoodSpec {
        buses_inner,
        buses_outer,
        gens,
        lines,
    }
}
