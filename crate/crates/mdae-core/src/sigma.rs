//! Structural index reduction of a single-mode DAE: signature weights, a
//! max-weight perfect matching, the minimal dual offsets, and the
//! index-reduced / consistency / completion systems.

use crate::expr::{Expr, Sym, VarKey, VarTag};
use crate::graph::{dm_decompose, BipartiteGraph, DMDecomposition};
use std::collections::BTreeMap;
use std::fmt;

/// One mode equation: a named expression constrained to zero.
#[derive(Clone, Debug)]
pub struct Equation {
    pub label: Sym,
    pub expr: Expr,
}

/// A square DAE system: equations over dependent base variables.
#[derive(Clone, Debug)]
pub struct DAESystem {
    pub name: Sym,
    pub equations: Vec<Equation>,
    /// Dependent base variables, in declaration order.
    pub vars: Vec<Sym>,
}

impl DAESystem {
    /// sigma_{f,x}: maximal differentiation degree of `x` in equation `f`,
    /// or None when `x` does not occur.
    pub fn signature(&self, eq: usize, var: usize) -> Option<u32> {
        let base = &self.vars[var];
        let mut best: Option<u32> = None;
        for v in self.equations[eq].expr.variables() {
            if v.tag == VarTag::State && &v.base == base {
                best = Some(best.map_or(v.m, |b| b.max(v.m)));
            }
        }
        best
    }

    pub fn incidence(&self) -> BipartiteGraph {
        let mut g = BipartiteGraph::new(self.equations.len(), self.vars.len());
        for e in 0..self.equations.len() {
            for v in 0..self.vars.len() {
                if self.signature(e, v).is_some() {
                    g.add_edge(e, v);
                }
            }
        }
        g
    }
}

/// Offsets and the perfect matching produced by the signature method.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SigmaOffsets {
    /// c_f per equation.
    pub c: Vec<u32>,
    /// d_x per variable.
    pub d: Vec<u32>,
    /// matching: equation index -> variable index.
    pub matching: Vec<usize>,
}

#[derive(thiserror::Error, Debug)]
pub enum SigmaError {
    #[error("mode {mode} is not square: {n_eqs} equations over {n_vars} variables")]
    NotSquare {
        mode: String,
        n_eqs: usize,
        n_vars: usize,
    },
    #[error("mode {mode} is structurally singular (no perfect matching)")]
    StructurallySingular {
        mode: String,
        certificate: Box<DMDecomposition>,
    },
    #[error("offset fixpoint did not converge for mode {mode}; inconsistent signature")]
    NonConvergent { mode: String },
}

/// Exhaustive max-weight perfect matching with canonical tie-breaking:
/// equations in order, each trying variables in ascending index, first
/// maximum found wins (so the assignment vector is lexicographically
/// smallest among maxima).
fn max_weight_perfect_matching(
    n: usize,
    weight: &dyn Fn(usize, usize) -> Option<i64>,
) -> Option<Vec<usize>> {
    let mut best: Option<(i64, Vec<usize>)> = None;
    let mut assign = vec![usize::MAX; n];
    let mut used = vec![false; n];
    fn rec(
        eq: usize,
        n: usize,
        acc: i64,
        weight: &dyn Fn(usize, usize) -> Option<i64>,
        assign: &mut Vec<usize>,
        used: &mut Vec<bool>,
        best: &mut Option<(i64, Vec<usize>)>,
    ) {
        if eq == n {
            if best.as_ref().is_none_or(|(w, _)| acc > *w) {
                *best = Some((acc, assign.clone()));
            }
            return;
        }
        for v in 0..n {
            if used[v] {
                continue;
            }
            if let Some(w) = weight(eq, v) {
                used[v] = true;
                assign[eq] = v;
                rec(eq + 1, n, acc + w, weight, assign, used, best);
                assign[eq] = usize::MAX;
                used[v] = false;
            }
        }
    }
    rec(0, n, 0, weight, &mut assign, &mut used, &mut best);
    best.map(|(_, a)| a)
}

/// Solve the signature problem: max-weight perfect matching plus the unique
/// pointwise-minimal offsets via the dual fixpoint iteration from c = 0.
pub fn solve_sigma(s: &DAESystem) -> Result<SigmaOffsets, SigmaError> {
    let n = s.equations.len();
    if n != s.vars.len() {
        return Err(SigmaError::NotSquare {
            mode: s.name.to_string(),
            n_eqs: n,
            n_vars: s.vars.len(),
        });
    }
    let sig: Vec<Vec<Option<u32>>> = (0..n)
        .map(|e| (0..n).map(|v| s.signature(e, v)).collect())
        .collect();
    let matching = match max_weight_perfect_matching(n, &|e, v| sig[e][v].map(|w| w as i64)) {
        Some(m) => m,
        None => {
            let certificate = Box::new(dm_decompose(&s.incidence()));
            return Err(SigmaError::StructurallySingular {
                mode: s.name.to_string(),
                certificate,
            });
        }
    };
    let max_sigma = sig.iter().flatten().flatten().copied().max().unwrap_or(0) as i64;
    let bound = (n as i64) * (1 + max_sigma) + 1;
    let mut c = vec![0i64; n];
    let mut d = vec![0i64; n];
    for _round in 0.. {
        let mut changed = false;
        for v in 0..n {
            let mut dv = 0;
            for e in 0..n {
                if let Some(w) = sig[e][v] {
                    dv = dv.max(c[e] + w as i64);
                }
            }
            if dv != d[v] {
                d[v] = dv;
                changed = true;
            }
        }
        for e in 0..n {
            let v = matching[e];
            let ce = d[v] - sig[e][v].unwrap() as i64;
            if ce != c[e] {
                c[e] = ce;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        if c.iter().chain(d.iter()).any(|x| *x > bound) {
            return Err(SigmaError::NonConvergent {
                mode: s.name.to_string(),
            });
        }
    }
    Ok(SigmaOffsets {
        c: c.into_iter().map(|x| x as u32).collect(),
        d: d.into_iter().map(|x| x as u32).collect(),
        matching,
    })
}

/// A completed-equation identifier: base equation index differentiated m times.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Debug, Hash)]
pub struct EqKey {
    pub eq: usize,
    pub m: u32,
}

/// Index-reduced, consistency, and completion systems with their matchings.
#[derive(Clone, Debug)]
pub struct CompletedSystem {
    pub offsets: SigmaOffsets,
    /// expr of (eq, m) for all 0 <= m <= c_eq, cached by repeated differentiation.
    pub rows: BTreeMap<EqKey, Expr>,
    /// leading rows: (eq, c_eq) matched with leading variable (x, d_x).
    pub index_reduced: Vec<(EqKey, VarKey)>,
    /// consistency rows (eq, m) for m < c_eq, matched per the shifted-degree rule.
    pub consistency: Vec<(EqKey, VarKey)>,
}

impl CompletedSystem {
    pub fn completion_rows(&self) -> impl Iterator<Item = (&EqKey, &Expr)> {
        self.rows.iter()
    }

    /// Leading variables (x, d_x) in declaration order.
    pub fn leading_vars(&self, s: &DAESystem) -> Vec<VarKey> {
        s.vars
            .iter()
            .enumerate()
            .map(|(i, b)| VarKey::state(b.clone(), self.offsets.d[i], 0))
            .collect()
    }

    /// State variables (x, m) for m < d_x.
    pub fn state_vars(&self, s: &DAESystem) -> Vec<VarKey> {
        let mut out = Vec::new();
        for (i, b) in s.vars.iter().enumerate() {
            for m in 0..self.offsets.d[i] {
                out.push(VarKey::state(b.clone(), m, 0));
            }
        }
        out
    }
}

/// Build the completion of a mode from its solved offsets.
pub fn complete(s: &DAESystem, offsets: &SigmaOffsets) -> CompletedSystem {
    let mut rows = BTreeMap::new();
    for (e, eq) in s.equations.iter().enumerate() {
        let mut cur = eq.expr.clone();
        rows.insert(EqKey { eq: e, m: 0 }, cur.monic());
        for m in 1..=offsets.c[e] {
            cur = cur.differentiate();
            rows.insert(EqKey { eq: e, m }, cur.monic());
        }
    }
    let mut index_reduced = Vec::new();
    let mut consistency = Vec::new();
    for e in 0..s.equations.len() {
        let v = offsets.matching[e];
        let base = s.vars[v].clone();
        let c_e = offsets.c[e];
        let d_v = offsets.d[v];
        index_reduced.push((EqKey { eq: e, m: c_e }, VarKey::state(base.clone(), d_v, 0)));
        for m in 0..c_e {
            consistency.push((
                EqKey { eq: e, m },
                VarKey::state(base.clone(), d_v - c_e + m, 0),
            ));
        }
    }
    CompletedSystem {
        offsets: offsets.clone(),
        rows,
        index_reduced,
        consistency,
    }
}

impl fmt::Display for SigmaOffsets {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "c = {:?}, d = {:?}", self.c, self.d)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Rat;

    fn sym(s: &str) -> Sym {
        Sym::new(s)
    }
    fn xv(name: &str, m: u32) -> Expr {
        Expr::var(VarKey::state(sym(name), m, 0))
    }

    fn pendulum_taut() -> DAESystem {
        // e1: x'' + lambda*x, e2: y'' + lambda*y + g, k1: L^2 - (x^2 + y^2)
        let e1 = xv("x", 2).add(&Expr::var(VarKey::state(sym("lambda"), 0, 0)).mul(&xv("x", 0)));
        let e2 = xv("y", 2)
            .add(&Expr::var(VarKey::state(sym("lambda"), 0, 0)).mul(&xv("y", 0)))
            .add(&Expr::param(sym("g")));
        let k1 = Expr::param(sym("L"))
            .pow(2)
            .sub(&xv("x", 0).pow(2).add(&xv("y", 0).pow(2)));
        DAESystem {
            name: sym("taut"),
            equations: vec![
                Equation {
                    label: sym("e1"),
                    expr: e1,
                },
                Equation {
                    label: sym("e2"),
                    expr: e2,
                },
                Equation {
                    label: sym("k1"),
                    expr: k1,
                },
            ],
            vars: vec![sym("x"), sym("y"), sym("lambda")],
        }
    }

    #[test]
    fn pendulum_offsets() {
        let s = pendulum_taut();
        let off = solve_sigma(&s).unwrap();
        assert_eq!(off.c, vec![0, 0, 2]);
        assert_eq!(off.d, vec![2, 2, 0]);
        let comp = complete(&s, &off);
        // latent equations: k1 differentiated once and twice
        let k1d = comp.rows[&EqKey { eq: 2, m: 1 }].clone();
        let want = xv("x", 0)
            .mul(&xv("x", 1))
            .add(&xv("y", 0).mul(&xv("y", 1)));
        assert_eq!(k1d.equal_up_to_constant(&want), Some(Rat::from_integer(1)));
        assert_eq!(comp.consistency.len(), 2);
        assert_eq!(comp.index_reduced.len(), 3);
    }

    #[test]
    fn explicit_ode_is_already_reduced() {
        // x' - x = 0
        let s = DAESystem {
            name: sym("ode"),
            equations: vec![Equation {
                label: sym("e"),
                expr: xv("x", 1).sub(&xv("x", 0)),
            }],
            vars: vec![sym("x")],
        };
        let off = solve_sigma(&s).unwrap();
        assert_eq!(off.c, vec![0]);
        assert_eq!(off.d, vec![1]);
        let comp = complete(&s, &off);
        assert!(comp.consistency.is_empty());
    }

    #[test]
    fn linear_circuit_offsets() {
        // f1: v1' - i; f2: v2' - i + vR; f3: i' - vR; f4: v1 + u  (u is a parameter-free
        // exogenous variable here, so we model it as a fifth dependent with its own
        // smoothness equation in the corpus; this unit test uses the 4x4 core with u
        // as a parameter to check the published offsets).
        let f1 = xv("v1", 1).sub(&xv("i", 0));
        let f2 = xv("v2", 1).sub(&xv("i", 0)).add(&xv("vR", 0));
        let f3 = xv("i", 1).sub(&xv("vR", 0));
        let f4 = xv("v1", 0).add(&Expr::param(sym("u")));
        let s = DAESystem {
            name: sym("circuit"),
            equations: vec![
                Equation {
                    label: sym("f1"),
                    expr: f1,
                },
                Equation {
                    label: sym("f2"),
                    expr: f2,
                },
                Equation {
                    label: sym("f3"),
                    expr: f3,
                },
                Equation {
                    label: sym("f4"),
                    expr: f4,
                },
            ],
            vars: vec![sym("i"), sym("v1"), sym("v2"), sym("vR")],
        };
        let off = solve_sigma(&s).unwrap();
        assert_eq!(off.c, vec![1, 0, 0, 2]);
        assert_eq!(off.d, vec![1, 2, 1, 0]);
    }

    #[test]
    fn singular_mode_is_rejected_with_certificate() {
        // two equations on x only, none on y
        let s = DAESystem {
            name: sym("bad"),
            equations: vec![
                Equation {
                    label: sym("a"),
                    expr: xv("x", 1),
                },
                Equation {
                    label: sym("b"),
                    expr: xv("x", 0),
                },
            ],
            vars: vec![sym("x"), sym("y")],
        };
        match solve_sigma(&s) {
            Err(SigmaError::StructurallySingular { certificate, .. }) => {
                assert!(!certificate.under_vars.is_empty());
            }
            other => panic!("expected structural singularity, got {other:?}"),
        }
    }

    #[test]
    fn offsets_independent_of_matching_choice() {
        // clutch engaged mode has two max-weight matchings; offsets must agree
        let e1 = xv("w1", 1).sub(&xv("tau1", 0));
        let e2 = xv("w2", 1).sub(&xv("tau2", 0));
        let e3 = xv("w1", 0).sub(&xv("w2", 0));
        let e4 = xv("tau1", 0).add(&xv("tau2", 0));
        let mk = |order: &[usize]| {
            let eqs = [
                Equation {
                    label: sym("e1"),
                    expr: e1.clone(),
                },
                Equation {
                    label: sym("e2"),
                    expr: e2.clone(),
                },
                Equation {
                    label: sym("e3"),
                    expr: e3.clone(),
                },
                Equation {
                    label: sym("e4"),
                    expr: e4.clone(),
                },
            ];
            DAESystem {
                name: sym("clutch"),
                equations: order.iter().map(|&i| eqs[i].clone()).collect(),
                vars: vec![sym("w1"), sym("w2"), sym("tau1"), sym("tau2")],
            }
        };
        let a = solve_sigma(&mk(&[0, 1, 2, 3])).unwrap();
        let b = solve_sigma(&mk(&[3, 2, 1, 0])).unwrap();
        assert_eq!(a.d, b.d);
        let mut bc = b.c.clone();
        bc.reverse();
        assert_eq!(a.c, bc);
        assert_eq!(a.c, vec![0, 0, 1, 0]);
        assert_eq!(a.d, vec![1, 1, 0, 0]);
    }
}
