//! Separation of a master solution from the PSD-representable set of a
//! cycle.
//!
//! For a cycle with buses `1..m`, `W̃` is the `2m × 2m` matrix of
//! `x = (e_1..e_m, f_1..f_m)`. Every cycle product is linear in it:
//! `c_ij = W_ij + W_i'j'`, `s_ij = W_ij' − W_ji'`, `c_ii = W_ii + W_i'i'`.
//! A point `z*` lies in the projection iff no `α` with `−Σ α_l A_l ⪰ 0`
//! has `αᵀz* > 0`.

use log::warn;
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::conic::{ConicBackend, ConicProgram, ConicSolution, LinExpr, SolverOptions, VariableKey};
use crate::cycle_cuts::{Cut, CutError, CutOrigin, ProductVar, EPS_SEP};
use crate::network::{Cycle, Network};
use crate::relaxations::Relaxation;

/// `z_l = A_l • W̃` for every product of one cycle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleSdpMap {
    pub cycle_id: usize,
    pub buses: Vec<usize>,
    pub products: Vec<ProductVar>,
    /// Upper-triangle entries of each symmetric `A_l`.
    pub matrices: Vec<BTreeMap<(usize, usize), f64>>,
}

impl CycleSdpMap {
    pub fn dim(&self) -> usize {
        2 * self.buses.len()
    }

    pub fn dense(&self, l: usize) -> DMatrix<f64> {
        let n = self.dim();
        let mut m = DMatrix::zeros(n, n);
        for (&(r, c), &v) in &self.matrices[l] {
            m[(r, c)] = v;
            m[(c, r)] = v;
        }
        m
    }

    /// `Σ w_l A_l` as a dense matrix.
    pub fn combine(&self, w: &[f64]) -> DMatrix<f64> {
        let n = self.dim();
        let mut m = DMatrix::zeros(n, n);
        for (l, entries) in self.matrices.iter().enumerate() {
            for (&(r, c), &v) in entries {
                m[(r, c)] += w[l] * v;
                if r != c {
                    m[(c, r)] += w[l] * v;
                }
            }
        }
        m
    }
}

/// One `c_ii` per cycle bus, then `c` and `s` per cycle edge in the edge's
/// own orientation.
pub fn build_cycle_map(net: &Network, cycle_id: usize, cycle: &Cycle) -> CycleSdpMap {
    let m = cycle.len();
    let local = |bus: usize| cycle.buses.iter().position(|&b| b == bus).expect("edge end on the cycle");
    let mut products = Vec::with_capacity(3 * m);
    let mut matrices = Vec::with_capacity(3 * m);
    for (k, &b) in cycle.buses.iter().enumerate() {
        products.push(ProductVar::Cii(b));
        matrices.push(BTreeMap::from([((k, k), 1.0), ((m + k, m + k), 1.0)]));
    }
    for &e in &cycle.edges {
        let (i, j) = (local(net.edges[e].from), local(net.edges[e].to));
        let up = |a: usize, b: usize| (a.min(b), a.max(b));
        products.push(ProductVar::C(e));
        matrices.push(BTreeMap::from([(up(i, j), 0.5), (up(m + i, m + j), 0.5)]));
        products.push(ProductVar::S(e));
        matrices.push(BTreeMap::from([(up(i, m + j), 0.5), (up(j, m + i), -0.5)]));
    }
    CycleSdpMap { cycle_id, buses: cycle.buses.clone(), products, matrices }
}

/// Solves `min −αᵀz*` s.t. `−Σ α_l A_l ⪰ 0`, `|α| ≤ 1`, and returns the
/// homogeneous cut `αᵀz ≤ 0` when `v* < −ε_sep`.
///
/// The `c_ii` matrices sum to the identity, so lowering every `α_cii` by the
/// most negative eigenvalue of `−Σ α_l A_l` makes the certificate exactly
/// PSD. The cut is then scaled to unit infinity norm.
pub fn separate_sdp(
    map: &CycleSdpMap,
    z_star: &[f64],
    backend: &dyn ConicBackend,
    opts: &SolverOptions,
) -> Result<Option<Cut>, CutError> {
    let n = map.dim();
    let mut p = ConicProgram::new();
    let alpha: Vec<_> = (0..map.products.len()).map(|l| p.var(VariableKey::Aux("alpha", l))).collect();
    let mut entries: BTreeMap<(usize, usize), LinExpr> = BTreeMap::new();
    for r in 0..n {
        for c in r..n {
            entries.insert((r, c), LinExpr::zero());
        }
    }
    for (l, a) in map.matrices.iter().enumerate() {
        for (&rc, &v) in a {
            entries.get_mut(&rc).unwrap().push(alpha[l], -v);
        }
    }
    p.add_psd(n, entries, false);
    for &a in &alpha {
        p.add_range(a, -1.0, 1.0);
    }
    p.objective = LinExpr::from_terms(alpha.iter().zip(z_star).map(|(&a, &z)| (a, -z)), 0.0);
    // Cuts are repaired to exact validity, so a loosely solved oracle is fine.
    // The certificate is as sparse as the cycle, which long cycles need.
    let sol = p.solve(backend, &SolverOptions { retry_inaccurate: false, chordal: true, ..*opts })?;
    if !sol.is_optimal() {
        return Err(CutError::SolverFailure(format!("{:?}", sol.status)));
    }
    let mut a: Vec<f64> = alpha.iter().map(|&v| sol.value(v)).collect();
    let neg: Vec<f64> = a.iter().map(|v| -v).collect();
    let lmin = map.combine(&neg).symmetric_eigenvalues().min();
    if lmin < 0.0 {
        let shift = -lmin * (1.0 + 1e-9) + 1e-14;
        for (l, pv) in map.products.iter().enumerate() {
            if matches!(pv, ProductVar::Cii(_)) {
                a[l] -= shift;
            }
        }
    }
    let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return Ok(None);
    }
    for v in &mut a {
        *v /= scale;
    }
    let lhs: f64 = a.iter().zip(z_star).map(|(a, z)| a * z).sum();
    if lhs * scale <= EPS_SEP {
        return Ok(None);
    }
    Ok(Some(Cut {
        alpha: map.products.iter().copied().zip(a).filter(|t| t.1 != 0.0).collect(),
        beta: 0.0,
        origin: CutOrigin::SdpCycle,
        cycle_id: map.cycle_id,
        violation: lhs,
    }))
}

pub fn cycle_maps(net: &Network, cycles: &[Cycle]) -> Vec<CycleSdpMap> {
    cycles.iter().enumerate().map(|(id, c)| build_cycle_map(net, id, c)).collect()
}

/// One SDP separation pass over every cycle. Failed solves are logged and
/// skipped.
pub fn separate_all(
    maps: &[CycleSdpMap],
    rel: &Relaxation,
    sol: &ConicSolution,
    backend: &dyn ConicBackend,
    opts: &SolverOptions,
) -> Vec<Cut> {
    let found: Vec<Option<Cut>> = maps
        .par_iter()
        .map(|map| {
            let z: Vec<f64> = map.products.iter().map(|p| p.value(rel, sol)).collect();
            separate_sdp(map, &z, backend, opts).unwrap_or_else(|e| {
                warn!("cycle {}: {e}", map.cycle_id);
                None
            })
        })
        .collect();
    found.into_iter().flatten().collect()
}
