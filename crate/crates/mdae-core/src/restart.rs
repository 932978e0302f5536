//! The restart pipeline: rescale the matched array, set the step to zero
//! under the structural-regularity rule, rename into left-limit / restart /
//! auxiliary namespaces, and either deliver the restart system or a
//! diagnosis of what stays undetermined.

use crate::expr::{EvalContext, Expr, Rat, Sym, VarKey, VarTag};
use crate::graph::{dm_decompose, max_matching, BipartiteGraph, DMDecomposition};
use crate::mcarray::{build_array, ArrayError, ModeChange, ModeChangeArray};
use crate::numeric::{newton_solve, NewtonOptions, NumError};
use crate::rescale::{check_goodness, score_expr, Mu, RescalingSolution};
use std::collections::{BTreeMap, BTreeSet};

#[derive(thiserror::Error, Debug)]
pub enum RestartError {
    #[error(transparent)]
    Array(#[from] ArrayError),
    #[error("equation {0} has an infinite rescaling offset and cannot be rescaled")]
    UnrescalableEquation(String),
    #[error("variable {0} has an infinite offset; expression is not rescalable")]
    InfiniteOffset(String),
    #[error("setting eps to zero left a structurally singular system (rows {rows:?})")]
    Rule1Violation {
        rows: Vec<String>,
        certificate: Box<DMDecomposition>,
    },
    #[error("variable {0} survived outside the array; renaming is not defined (containment was violated upstream)")]
    UndefinedRename(String),
    #[error(transparent)]
    Numeric(#[from] NumError),
}

/// One equation of a (partially) renamed system.
#[derive(Clone, Debug)]
pub struct RestartEq {
    pub label: String,
    pub expr: Expr,
}

/// The hot-restart system: equations over left-limits, restart values, and
/// auxiliary (head or rescaled) unknowns.
#[derive(Clone, Debug)]
pub struct RestartSystem {
    pub equations: Vec<RestartEq>,
    pub dependents: Vec<VarKey>,
    /// restart states recovered by plain continuity with the previous mode
    pub continuity_states: Vec<(Sym, u32)>,
    /// restart states determined by the system itself
    pub system_states: Vec<(Sym, u32)>,
}

impl RestartSystem {
    /// Equations free of head auxiliaries: the published shape of a restart
    /// system (left-limits, restart values, and rescaled impulses only).
    pub fn essential_equations(&self) -> Vec<&RestartEq> {
        self.equations
            .iter()
            .filter(|e| e.expr.variables().iter().all(|v| v.tag != VarTag::State))
            .collect()
    }
}

/// Failure analysis when no good rescaling exists.
#[derive(Clone, Debug)]
pub struct Diagnosis {
    pub g39_witnesses: Vec<VarKey>,
    pub infinite_rows: Vec<String>,
    pub impulsive_tail: Vec<VarKey>,
    pub equality_violations: Vec<crate::rescale::EqualityViolation>,
    pub determined: Vec<(Sym, u32)>,
    pub undetermined: Vec<(Sym, u32)>,
    /// reduced restart system over the determined part, when one exists
    pub restart: Option<RestartSystem>,
}

/// Pipeline outcome.
#[derive(Debug)]
pub enum Outcome {
    Good {
        array: ModeChangeArray,
        solution: RescalingSolution,
        restart: RestartSystem,
    },
    Undetermined {
        array: ModeChangeArray,
        solution: RescalingSolution,
        diagnosis: Diagnosis,
    },
}

/// Expression substituted for one occurrence of `v` inside a rescaled row:
/// non-impulsive variables stay; impulsive derivatives expand through their
/// Euler representative; impulsive order-zero variables become named
/// rescaled unknowns.
fn occurrence(v: &VarKey, sol: &RescalingSolution) -> Result<Expr, RestartError> {
    let mu = match sol.mu_of(v) {
        Mu::Fin(m) => m,
        Mu::Inf => return Err(RestartError::InfiniteOffset(v.to_string())),
    };
    if mu == 0 {
        return Ok(Expr::var(v.clone()));
    }
    let n = (mu.min(v.m as i64)) as u32;
    if n == 0 {
        return Ok(Expr::eps_pow(-(mu as i32)).mul(&Expr::var(VarKey::scaled(
            v.base.clone(),
            v.m,
            v.k,
        ))));
    }
    // v = eps^-n * sum_i C(n,i) (-1)^i (base, m-n, k+n-i), recursively rescaled
    let mut sum = Expr::zero();
    let mut binom = Rat::from_integer(1);
    for i in 0..=n as i64 {
        let zi = VarKey::state(v.base.clone(), v.m - n, v.k + n as i32 - i as i32);
        let sign = if i % 2 == 0 {
            Rat::from_integer(1)
        } else {
            Rat::from_integer(-1)
        };
        sum = sum.add(&occurrence(&zi, sol)?.scale(binom * sign));
        binom *= Rat::new(n as i64 - i, i + 1);
    }
    Ok(Expr::eps_pow(-(n as i32)).mul(&sum))
}

/// Rescale the matched rows: drop unmatched rows, multiply each remaining
/// row by eps to its offset, and expand impulsive occurrences. The result
/// still carries nonnegative eps powers.
pub fn rescale_array(
    a: &ModeChangeArray,
    sol: &RescalingSolution,
) -> Result<Vec<RestartEq>, RestartError> {
    let eq_mu = sol.eq_offsets();
    let mut out = Vec::new();
    for row in &a.rows {
        if row.matched.is_none() {
            continue;
        }
        let mu = match eq_mu.get(&row.label) {
            Some(Mu::Fin(m)) => *m,
            _ => return Err(RestartError::UnrescalableEquation(row.label.clone())),
        };
        let mut err = None;
        let substituted = row.expr.substitute_vars(&mut |v| match occurrence(v, sol) {
            Ok(e) => Some(e),
            Err(e) => {
                err = Some(e);
                None
            }
        });
        if let Some(e) = err {
            return Err(e);
        }
        let rescaled = Expr::eps_pow(mu as i32).mul(&substituted);
        debug_assert!(
            rescaled.terms.iter().all(|t| t.eps_pow >= 0),
            "negative eps power survived rescaling of {}",
            row.label
        );
        out.push(RestartEq {
            label: row.label.clone(),
            expr: rescaled,
        });
    }
    Ok(out)
}

fn dependents_of(rows: &[RestartEq], a: &ModeChangeArray) -> Vec<VarKey> {
    let mut deps = BTreeSet::new();
    for r in rows {
        for v in r.expr.variables() {
            match v.tag {
                VarTag::Scaled | VarTag::Plus => {
                    deps.insert(v);
                }
                VarTag::State => {
                    if !a.mc.is_past(&v) {
                        deps.insert(v);
                    }
                }
                VarTag::Left => {}
            }
        }
    }
    deps.into_iter().collect()
}

/// Set eps to zero in the rescaled rows. Identically-zero rows (already
/// satisfied identities) are dropped; the rest must stay structurally
/// nonsingular over the surviving dependents.
pub fn set_epsilon_zero(
    rescaled: &[RestartEq],
    a: &ModeChangeArray,
) -> Result<Vec<RestartEq>, RestartError> {
    let rows: Vec<RestartEq> = rescaled
        .iter()
        .map(|r| RestartEq {
            label: r.label.clone(),
            expr: r.expr.drop_positive_eps(),
        })
        .filter(|r| !r.expr.is_zero())
        .collect();
    let deps = dependents_of(&rows, a);
    let mut g = BipartiteGraph::new(rows.len(), deps.len());
    for (i, r) in rows.iter().enumerate() {
        for (j, v) in deps.iter().enumerate() {
            if r.expr.contains_var(v) {
                g.add_edge(i, j);
            }
        }
    }
    let m = max_matching(&g);
    if rows.len() != deps.len() || m.len() != rows.len() {
        let unmatched: Vec<String> = rows
            .iter()
            .enumerate()
            .filter(|(i, _)| m.eq_to_var[*i].is_none())
            .map(|(_, r)| r.label.clone())
            .collect();
        return Err(RestartError::Rule1Violation {
            rows: unmatched,
            certificate: Box::new(dm_decompose(&g)),
        });
    }
    Ok(rows)
}

fn rename_var(a: &ModeChangeArray, v: &VarKey) -> Result<VarKey, RestartError> {
    match v.tag {
        VarTag::Scaled | VarTag::Left | VarTag::Plus => Ok(v.clone()),
        VarTag::State => {
            if a.mc.is_past(v) {
                return Ok(VarKey::left(v.base.clone(), v.m));
            }
            if !a.vars.contains(v) {
                return Err(RestartError::UndefinedRename(v.to_string()));
            }
            let d =
                a.mc.next
                    .vars
                    .iter()
                    .position(|b| *b == v.base)
                    .map(|i| a.mc.next_completed.offsets.d[i])
                    .unwrap_or(0);
            if v.k == a.height as i32 && v.m < d {
                Ok(VarKey::plus(v.base.clone(), v.m))
            } else {
                Ok(v.clone())
            }
        }
    }
}

/// Rename past variables to left-limits and last-instant states to restart
/// values; add continuity equations for states the previous mode fixes.
pub fn rename_restart(
    rows: &[RestartEq],
    a: &ModeChangeArray,
) -> Result<RestartSystem, RestartError> {
    let mut equations = Vec::new();
    for r in rows {
        let mut err = None;
        let expr = r.expr.substitute_vars(&mut |v| match rename_var(a, v) {
            Ok(w) => Some(Expr::var(w)),
            Err(e) => {
                err = Some(e);
                None
            }
        });
        if let Some(e) = err {
            return Err(e);
        }
        // identities among past variables collapse once shifts share one
        // left-limit name; drop what became vacuous
        if expr.is_zero() {
            continue;
        }
        equations.push(RestartEq {
            label: r.label.clone(),
            expr,
        });
    }
    let mut continuity_states = Vec::new();
    let mut system_states = Vec::new();
    for (base, m) in a.restart_states() {
        let rv = a.restart_var(&base, m);
        if a.mc.is_past(&rv) {
            let eq = Expr::var(VarKey::plus(base.clone(), m))
                .sub(&Expr::var(VarKey::left(base.clone(), m)));
            equations.push(RestartEq {
                label: format!("cont({})", VarKey::state(base.clone(), m, 0)),
                expr: eq,
            });
            continuity_states.push((base, m));
        } else if a.vars.contains(&rv) {
            system_states.push((base, m));
        }
    }
    let mut deps = BTreeSet::new();
    for e in &equations {
        for v in e.expr.variables() {
            if v.tag != VarTag::Left {
                deps.insert(v);
            }
        }
    }
    Ok(RestartSystem {
        equations,
        dependents: deps.into_iter().collect(),
        continuity_states,
        system_states,
    })
}

/// The full pipeline for one mode change: heights, array, facts, matching,
/// offsets, goodness, and either Procedure-1 output or a diagnosis.
pub fn generate_restart(mc: &ModeChange, height: Option<u32>) -> Result<Outcome, RestartError> {
    let array = build_array(mc, height)?;
    let solution = check_goodness(&array);
    if solution.good() && array.exposed.is_empty() {
        let rescaled = rescale_array(&array, &solution)?;
        let zero = set_epsilon_zero(&rescaled, &array)?;
        let restart = rename_restart(&zero, &array)?;
        Ok(Outcome::Good {
            array,
            solution,
            restart,
        })
    } else {
        let diagnosis = diagnose(&array, &solution);
        Ok(Outcome::Undetermined {
            array,
            solution,
            diagnosis,
        })
    }
}

/// Remove the equations matched with containment witnesses, split the
/// remainder by alternating reachability, and rebuild the restart system of
/// the regular part. States whose chains touch a witness, an exposed
/// variable, or a removed row stay undetermined.
pub fn diagnose(a: &ModeChangeArray, sol: &RescalingSolution) -> Diagnosis {
    let reducible = sol.infinite_rows.is_empty()
        && sol.impulsive_tail.is_empty()
        && sol.offsets.violations.is_empty();
    if !reducible {
        // offsets themselves are inconsistent (infinite rows, impulsive
        // restart states, or a broken matched-monomial equality): report the
        // violations without claiming any state determined
        return Diagnosis {
            g39_witnesses: sol.g39_witnesses.clone(),
            infinite_rows: sol.infinite_rows.clone(),
            impulsive_tail: sol.impulsive_tail.clone(),
            equality_violations: sol.offsets.violations.clone(),
            determined: vec![],
            undetermined: a.restart_states(),
            restart: None,
        };
    }
    let witnesses: BTreeSet<VarKey> = sol.g39_witnesses.iter().cloned().collect();
    let mut seeds: BTreeSet<VarKey> = witnesses.clone();
    seeds.extend(a.exposed.iter().cloned());

    // live matched rows, minus those matched with a witness (whose other
    // dependents seed the sweep)
    let mut live: Vec<(&crate::mcarray::Row, VarKey)> = Vec::new();
    for r in &a.rows {
        let Some(mv) = &r.matched else { continue };
        if witnesses.contains(mv) {
            for v in r.expr.variables() {
                if !a.mc.is_past(&v) {
                    seeds.insert(v);
                }
            }
        } else {
            live.push((r, mv.clone()));
        }
    }
    // alternating sweep: a row touching an undetermined variable cannot
    // determine its matched variable
    let mut undet: BTreeSet<VarKey> = seeds;
    loop {
        let mut changed = false;
        for (r, mv) in &live {
            if undet.contains(mv) {
                continue;
            }
            if r.expr.variables().iter().any(|v| undet.contains(v)) {
                undet.insert(mv.clone());
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }

    let mut determined = Vec::new();
    let mut undetermined = Vec::new();
    for (base, m) in a.restart_states() {
        let rv = a.restart_var(&base, m);
        if a.mc.is_past(&rv) {
            determined.push((base, m)); // plain continuity
        } else if a.vars.contains(&rv) && !undet.contains(&rv) {
            determined.push((base, m));
        } else {
            undetermined.push((base, m));
        }
    }

    // reduced restart system over the regular rows
    let regular: Vec<RestartEq> = live
        .iter()
        .filter(|(_, mv)| !undet.contains(mv))
        .filter_map(|(r, _)| {
            if sol
                .eq_offsets()
                .get(&r.label)
                .and_then(|m| m.finite())
                .is_some()
            {
                Some(RestartEq {
                    label: r.label.clone(),
                    expr: r.expr.clone(),
                })
            } else {
                None
            }
        })
        .collect();
    let restart = (|| {
        let eq_mu = sol.eq_offsets();
        let mut rows = Vec::new();
        for r in &regular {
            let mu = eq_mu.get(&r.label).and_then(|m| m.finite())?;
            let mut failed = false;
            let substituted = r.expr.substitute_vars(&mut |v| match occurrence(v, sol) {
                Ok(e) => Some(e),
                Err(_) => {
                    failed = true;
                    None
                }
            });
            if failed {
                return None;
            }
            let rescaled = Expr::eps_pow(mu as i32)
                .mul(&substituted)
                .drop_positive_eps();
            if !rescaled.is_zero() {
                rows.push(RestartEq {
                    label: r.label.clone(),
                    expr: rescaled,
                });
            }
        }
        rename_restart(&rows, a).ok()
    })();

    Diagnosis {
        g39_witnesses: sol.g39_witnesses.clone(),
        infinite_rows: sol.infinite_rows.clone(),
        impulsive_tail: sol.impulsive_tail.clone(),
        equality_violations: sol.offsets.violations.clone(),
        determined,
        undetermined,
        restart,
    }
}

/// Rescale-then-drop operator on arbitrary expressions (the invariant
/// transport map): multiply by eps to the expression's offset, expand
/// impulsive occurrences, and erase what still carries positive eps powers.
pub fn apply_lambda(e: &Expr, sol: &RescalingSolution) -> Result<Expr, RestartError> {
    let mu = match score_expr(e, &|v| sol.mu_of(v)) {
        Mu::Fin(m) => m,
        Mu::Inf => return Err(RestartError::InfiniteOffset(format!("{e}"))),
    };
    let mut err = None;
    let substituted = e.substitute_vars(&mut |v| match occurrence(v, sol) {
        Ok(x) => Some(x),
        Err(x) => {
            err = Some(x);
            None
        }
    });
    if let Some(x) = err {
        return Err(x);
    }
    Ok(Expr::eps_pow(mu as i32)
        .mul(&substituted)
        .drop_positive_eps())
}

/// Left limits: values for (base, m) of the previous mode's completion.
pub type LeftLimits = BTreeMap<(Sym, u32), f64>;

pub fn left_context(limits: &LeftLimits) -> BTreeMap<VarKey, f64> {
    limits
        .iter()
        .map(|((b, m), v)| (VarKey::left(b.clone(), *m), *v))
        .collect()
}

/// Residuals of the previous mode's consistency equations at the left
/// limits (the caller decides whether to warn).
pub fn previous_consistency_residuals(
    mc: &ModeChange,
    limits: &LeftLimits,
    params: &BTreeMap<Sym, f64>,
) -> Vec<(String, f64)> {
    let mut ctx = EvalContext::new();
    ctx.params = params.clone();
    for ((b, m), v) in limits {
        ctx.vars.insert(VarKey::state(b.clone(), *m, 0), *v);
    }
    let mut out = Vec::new();
    for (key, _) in &mc.prev_completed.consistency {
        let expr = &mc.prev_completed.rows[key];
        if let Ok(v) = expr.evaluate(&ctx) {
            let label = mc.prev.equations[key.eq].label.to_string();
            out.push((format!("{label}^({})", key.m), v));
        }
    }
    out
}

/// Solve the restart system for given left limits. The initial guess is
/// continuity for restart values and zero for auxiliaries.
pub fn solve_restart_numeric(
    r: &RestartSystem,
    limits: &LeftLimits,
    params: &BTreeMap<Sym, f64>,
    opts: NewtonOptions,
) -> Result<BTreeMap<VarKey, f64>, NumError> {
    let mut ctx = EvalContext::new();
    ctx.params = params.clone();
    ctx.vars.extend(left_context(limits));
    let mut init = BTreeMap::new();
    for v in &r.dependents {
        let guess = match v.tag {
            VarTag::Plus => *limits.get(&(v.base.clone(), v.m)).unwrap_or(&0.0),
            _ => 0.0,
        };
        init.insert(v.clone(), guess);
    }
    let eqs: Vec<Expr> = r.equations.iter().map(|e| e.expr.clone()).collect();
    newton_solve(&eqs, &r.dependents, &mut ctx, &init, opts)
}

/// One row of the step-size convergence report.
#[derive(Clone, Debug, serde::Serialize)]
pub struct ConvergenceRow {
    pub eps: f64,
    pub distance: f64,
}

/// Solve the rescaled array at each positive step and report the distance
/// to the limit valuation.
pub fn epsilon_convergence_check(
    a: &ModeChangeArray,
    sol: &RescalingSolution,
    restart: &RestartSystem,
    limits: &LeftLimits,
    params: &BTreeMap<Sym, f64>,
    eps_list: &[f64],
) -> Result<Vec<ConvergenceRow>, RestartError> {
    let limit_val = solve_restart_numeric(restart, limits, params, NewtonOptions::default())?;
    // renamed rescaled rows with eps kept
    let rescaled = rescale_array(a, sol)?;
    let mut rows = Vec::new();
    for r in &rescaled {
        let mut err = None;
        let expr = r.expr.substitute_vars(&mut |v| match rename_var(a, v) {
            Ok(w) => Some(Expr::var(w)),
            Err(e) => {
                err = Some(e);
                None
            }
        });
        if let Some(e) = err {
            return Err(e);
        }
        if !expr.is_zero() {
            rows.push(RestartEq {
                label: r.label.clone(),
                expr,
            });
        }
    }
    let mut deps = BTreeSet::new();
    for r in &rows {
        for v in r.expr.variables() {
            if v.tag != VarTag::Left {
                deps.insert(v);
            }
        }
    }
    let deps: Vec<VarKey> = deps.into_iter().collect();
    let eqs: Vec<Expr> = rows.iter().map(|r| r.expr.clone()).collect();
    let mut out = Vec::new();
    for &eps in eps_list {
        let mut ctx = EvalContext::new();
        ctx.params = params.clone();
        ctx.eps = eps;
        ctx.vars.extend(left_context(limits));
        let mut init = BTreeMap::new();
        for v in &deps {
            let guess = limit_val.get(v).copied().unwrap_or_else(|| match v.tag {
                VarTag::Plus => *limits.get(&(v.base.clone(), v.m)).unwrap_or(&0.0),
                _ => 0.0,
            });
            init.insert(v.clone(), guess);
        }
        let val = newton_solve(&eqs, &deps, &mut ctx, &init, NewtonOptions::default())?;
        let mut dist = 0.0f64;
        for (v, x) in &val {
            if let Some(y) = limit_val.get(v) {
                dist = dist.max((x - y).abs());
            }
        }
        out.push(ConvergenceRow {
            eps,
            distance: dist,
        });
    }
    Ok(out)
}

/// Evaluate transported invariants at a restart valuation; returns the
/// absolute residual per expression.
pub fn check_invariant_preservation(
    a: &ModeChangeArray,
    sol: &RescalingSolution,
    exprs: &[(String, Expr)],
    valuation: &BTreeMap<VarKey, f64>,
    limits: &LeftLimits,
    params: &BTreeMap<Sym, f64>,
) -> Result<Vec<(String, f64)>, RestartError> {
    let mut out = Vec::new();
    for (name, e) in exprs {
        let lam = apply_lambda(e, sol)?;
        let mut err = None;
        let renamed = lam.substitute_vars(&mut |v| match rename_var(a, v) {
            Ok(w) => Some(Expr::var(w)),
            Err(x) => {
                err = Some(x);
                None
            }
        });
        if let Some(x) = err {
            return Err(x);
        }
        let mut ctx = EvalContext::new();
        ctx.params = params.clone();
        ctx.vars.extend(left_context(limits));
        ctx.vars.extend(valuation.clone());
        let v = renamed
            .evaluate(&ctx)
            .map_err(|e| RestartError::InfiniteOffset(e.to_string()))?;
        out.push((name.clone(), v.abs()));
    }
    Ok(out)
}
