//! Chordal extension by greedy minimum-degree elimination.

use std::collections::BTreeSet;

/// Maximal cliques of a chordal extension of the graph on `n` vertices.
/// Each clique is sorted; isolated vertices form singleton cliques.
pub fn maximal_cliques(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Vec<Vec<usize>> {
    let mut adj: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
    for (a, b) in edges {
        if a != b {
            adj[a].insert(b);
            adj[b].insert(a);
        }
    }
    let mut alive = vec![true; n];
    let mut position = vec![0usize; n];
    let mut order = Vec::with_capacity(n);
    let mut later: Vec<Vec<usize>> = vec![Vec::new(); n];
    for step in 0..n {
        let v = (0..n)
            .filter(|&v| alive[v])
            .min_by_key(|&v| (adj[v].len(), v))
            .expect("vertex left");
        alive[v] = false;
        position[v] = step;
        order.push(v);
        let nb: Vec<usize> = adj[v].iter().copied().collect();
        for (k, &a) in nb.iter().enumerate() {
            adj[a].remove(&v);
            for &b in &nb[k + 1..] {
                adj[a].insert(b);
                adj[b].insert(a);
            }
        }
        later[v] = nb;
        adj[v].clear();
    }
    // C_v = {v} ∪ later[v] fails to be maximal exactly when some u has
    // parent v and |C_u| = |C_v| + 1.
    let mut dominated = vec![false; n];
    for &u in &order {
        if let Some(&p) = later[u].iter().min_by_key(|&&w| position[w]) {
            if later[u].len() == later[p].len() + 1 {
                dominated[p] = true;
            }
        }
    }
    order
        .iter()
        .filter(|&&v| !dominated[v])
        .map(|&v| {
            let mut c = later[v].clone();
            c.push(v);
            c.sort_unstable();
            c
        })
        .collect()
}
