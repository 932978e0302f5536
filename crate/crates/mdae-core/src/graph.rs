//! Bipartite incidence graphs over (equations, variables), maximum matching,
//! and the Dulmage-Mendelsohn decomposition.
//!
//! Arrays here are desk-sized, so the matcher is a plain augmenting-path
//! search in deterministic vertex order rather than Hopcroft-Karp; what
//! matters downstream is that golden tests see the same matching every run.

use std::collections::BTreeSet;

/// Bipartite graph with `n_eqs` equation vertices and `n_vars` variable
/// vertices, identified by their indices.
#[derive(Clone, Debug, Default)]
pub struct BipartiteGraph {
    pub n_eqs: usize,
    pub n_vars: usize,
    adj: Vec<BTreeSet<usize>>,
}

impl BipartiteGraph {
    pub fn new(n_eqs: usize, n_vars: usize) -> Self {
        BipartiteGraph {
            n_eqs,
            n_vars,
            adj: vec![BTreeSet::new(); n_eqs],
        }
    }

    pub fn add_edge(&mut self, eq: usize, var: usize) {
        assert!(
            eq < self.n_eqs && var < self.n_vars,
            "edge references undeclared vertex"
        );
        self.adj[eq].insert(var);
    }

    pub fn has_edge(&self, eq: usize, var: usize) -> bool {
        self.adj[eq].contains(&var)
    }

    pub fn neighbors(&self, eq: usize) -> impl Iterator<Item = usize> + '_ {
        self.adj[eq].iter().copied()
    }
}

/// A matching as (equation -> variable) and (variable -> equation) maps.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Matching {
    pub eq_to_var: Vec<Option<usize>>,
    pub var_to_eq: Vec<Option<usize>>,
}

impl Matching {
    pub fn empty(n_eqs: usize, n_vars: usize) -> Self {
        Matching {
            eq_to_var: vec![None; n_eqs],
            var_to_eq: vec![None; n_vars],
        }
    }

    pub fn len(&self) -> usize {
        self.eq_to_var.iter().flatten().count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.eq_to_var
            .iter()
            .enumerate()
            .filter_map(|(e, v)| v.map(|v| (e, v)))
    }

    pub fn is_perfect(&self, g: &BipartiteGraph) -> bool {
        g.n_eqs == g.n_vars && self.len() == g.n_eqs
    }

    pub fn is_variable_complete(&self, g: &BipartiteGraph) -> bool {
        self.len() == g.n_vars
    }

    pub fn is_equation_complete(&self, g: &BipartiteGraph) -> bool {
        self.len() == g.n_eqs
    }
}

fn try_augment(g: &BipartiteGraph, m: &mut Matching, eq: usize, seen: &mut [bool]) -> bool {
    for v in g.neighbors(eq) {
        if seen[v] {
            continue;
        }
        seen[v] = true;
        if m.var_to_eq[v].is_none() || try_augment(g, m, m.var_to_eq[v].unwrap(), seen) {
            m.eq_to_var[eq] = Some(v);
            m.var_to_eq[v] = Some(eq);
            return true;
        }
    }
    false
}

/// Maximum-cardinality matching, deterministic for a given vertex order.
pub fn max_matching(g: &BipartiteGraph) -> Matching {
    let mut m = Matching::empty(g.n_eqs, g.n_vars);
    for eq in 0..g.n_eqs {
        let mut seen = vec![false; g.n_vars];
        try_augment(g, &mut m, eq, &mut seen);
    }
    m
}

/// Grow an existing partial matching to maximum cardinality without
/// unmatching anything already matched (only augmenting paths are applied).
pub fn complete_matching(g: &BipartiteGraph, m: &mut Matching) {
    for eq in 0..g.n_eqs {
        if m.eq_to_var[eq].is_some() {
            continue;
        }
        let mut seen = vec![false; g.n_vars];
        try_augment(g, m, eq, &mut seen);
    }
}

/// Dulmage-Mendelsohn decomposition into over-determined, regular, and
/// under-determined parts.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DMDecomposition {
    pub over_eqs: Vec<usize>,
    pub over_vars: Vec<usize>,
    pub regular_eqs: Vec<usize>,
    pub regular_vars: Vec<usize>,
    pub under_eqs: Vec<usize>,
    pub under_vars: Vec<usize>,
}

impl DMDecomposition {
    pub fn is_regular(&self) -> bool {
        self.over_eqs.is_empty() && self.under_vars.is_empty()
    }
}

/// Canonical DM partition. The under-determined part is everything reachable
/// by alternating paths from unmatched variables, the over-determined part
/// everything reachable from unmatched equations, and the regular part the
/// rest.
pub fn dm_decompose(g: &BipartiteGraph) -> DMDecomposition {
    let m = max_matching(g);
    dm_decompose_with(g, &m)
}

/// DM partition relative to a given maximum matching (the partition itself
/// is matching-independent; exposing this lets callers reuse a matching).
pub fn dm_decompose_with(g: &BipartiteGraph, m: &Matching) -> DMDecomposition {
    // under part: alternating reachability from unmatched variables
    let mut var_u = vec![false; g.n_vars];
    let mut eq_u = vec![false; g.n_eqs];
    // reverse adjacency
    let mut radj = vec![Vec::new(); g.n_vars];
    for e in 0..g.n_eqs {
        for v in g.neighbors(e) {
            radj[v].push(e);
        }
    }
    let mut stack: Vec<usize> = (0..g.n_vars)
        .filter(|&v| m.var_to_eq[v].is_none())
        .collect();
    for &v in &stack {
        var_u[v] = true;
    }
    while let Some(v) = stack.pop() {
        for &e in &radj[v] {
            if eq_u[e] {
                continue;
            }
            eq_u[e] = true;
            if let Some(w) = m.eq_to_var[e] {
                if !var_u[w] {
                    var_u[w] = true;
                    stack.push(w);
                }
            }
        }
    }
    // over part: alternating reachability from unmatched equations
    let mut var_o = vec![false; g.n_vars];
    let mut eq_o = vec![false; g.n_eqs];
    let mut stack: Vec<usize> = (0..g.n_eqs).filter(|&e| m.eq_to_var[e].is_none()).collect();
    for &e in &stack {
        eq_o[e] = true;
    }
    while let Some(e) = stack.pop() {
        for v in g.neighbors(e) {
            if var_o[v] {
                continue;
            }
            var_o[v] = true;
            if let Some(f) = m.var_to_eq[v] {
                if !eq_o[f] {
                    eq_o[f] = true;
                    stack.push(f);
                }
            }
        }
    }
    let mut dm = DMDecomposition {
        over_eqs: vec![],
        over_vars: vec![],
        regular_eqs: vec![],
        regular_vars: vec![],
        under_eqs: vec![],
        under_vars: vec![],
    };
    for e in 0..g.n_eqs {
        if eq_o[e] {
            dm.over_eqs.push(e);
        } else if eq_u[e] {
            dm.under_eqs.push(e);
        } else {
            dm.regular_eqs.push(e);
        }
    }
    for v in 0..g.n_vars {
        if var_o[v] {
            dm.over_vars.push(v);
        } else if var_u[v] {
            dm.under_vars.push(v);
        } else {
            dm.regular_vars.push(v);
        }
    }
    dm
}

pub fn is_structurally_nonsingular(g: &BipartiteGraph) -> bool {
    g.n_eqs == g.n_vars && max_matching(g).len() == g.n_eqs
}

/// Quotient of the variable side by an equivalence: `class_of[v]` maps each
/// variable to its class index. A class is incident to an equation iff some
/// representative is.
pub fn quotient_graph(g: &BipartiteGraph, class_of: &[usize], n_classes: usize) -> BipartiteGraph {
    assert_eq!(class_of.len(), g.n_vars);
    let mut q = BipartiteGraph::new(g.n_eqs, n_classes);
    for e in 0..g.n_eqs {
        for v in g.neighbors(e) {
            q.add_edge(e, class_of[v]);
        }
    }
    q
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_graph_has_perfect_matching() {
        let mut g = BipartiteGraph::new(3, 3);
        for i in 0..3 {
            g.add_edge(i, i);
        }
        let m = max_matching(&g);
        assert_eq!(m.len(), 3);
        assert!(m.is_perfect(&g));
    }

    #[test]
    fn leading_block_of_pendulum_is_regular() {
        // (e1, e2, k1'') over (x'', y'', lambda) with the incidence of the
        // index-reduced taut-rope mode.
        let mut g = BipartiteGraph::new(3, 3);
        // vars: 0 = x'', 1 = y'', 2 = lambda
        g.add_edge(0, 0); // e1: x'' + lambda*x
        g.add_edge(0, 2);
        g.add_edge(1, 1); // e2: y'' + lambda*y
        g.add_edge(1, 2);
        g.add_edge(2, 0); // k1'': x*x'' + ... + y*y''
        g.add_edge(2, 1);
        let m = max_matching(&g);
        assert_eq!(m.len(), 3);
        assert!(is_structurally_nonsingular(&g));
    }

    #[test]
    fn square_regular_system_has_empty_over_under() {
        let mut g = BipartiteGraph::new(2, 2);
        g.add_edge(0, 0);
        g.add_edge(0, 1);
        g.add_edge(1, 1);
        let dm = dm_decompose(&g);
        assert!(dm.is_regular());
        assert_eq!(dm.regular_eqs, vec![0, 1]);
    }

    #[test]
    fn rectangular_system_splits() {
        // one equation over two variables: under-determined
        let mut g = BipartiteGraph::new(1, 2);
        g.add_edge(0, 0);
        g.add_edge(0, 1);
        let dm = dm_decompose(&g);
        assert!(dm.regular_eqs.is_empty());
        assert_eq!(dm.under_vars.len(), 2);
        assert_eq!(dm.under_eqs.len(), 1);
    }

    #[test]
    fn quotient_merges_class_members() {
        // three equations, each incident to one member of the same class
        let mut g = BipartiteGraph::new(3, 3);
        g.add_edge(0, 0);
        g.add_edge(1, 1);
        g.add_edge(2, 2);
        let q = quotient_graph(&g, &[0, 0, 0], 1);
        assert!(q.has_edge(0, 0) && q.has_edge(1, 0) && q.has_edge(2, 0));
    }
}
