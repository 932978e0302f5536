//! Rescaling offsets: build the max/+ constraint system from the matched
//! array, solve for the least nonnegative fixpoint, and check the three
//! goodness conditions.
//!
//! Two constraint families feed the solver: per matched row, the offset of
//! the matched monomial must dominate every other monomial of the row; and
//! per Euler-related pair of in-array variables, the higher derivative's
//! offset equals the step count plus the largest offset among the shifts it
//! expands into. The second family holds regardless of the matching, which
//! is what makes offsets matching-independent.

use crate::expr::{Expr, Sym, VarKey, VarTag};
use crate::mcarray::{ModeChangeArray, RowId};
use std::collections::BTreeMap;
use std::fmt;

/// An offset value: a small nonnegative integer or infinity.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Debug)]
pub enum Mu {
    Fin(i64),
    Inf,
}

impl Mu {
    pub fn finite(self) -> Option<i64> {
        match self {
            Mu::Fin(v) => Some(v),
            Mu::Inf => None,
        }
    }
    fn plus(self, c: i64) -> Mu {
        match self {
            Mu::Fin(v) => Mu::Fin(v + c),
            Mu::Inf => Mu::Inf,
        }
    }
}

impl fmt::Display for Mu {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Mu::Fin(v) => write!(f, "{v}"),
            Mu::Inf => write!(f, "inf"),
        }
    }
}

/// Offset contribution of one monomial: a constant (from eps powers), plain
/// variable factors with multiplicities, and opaque factors carrying their
/// argument variable sets (scored zero iff every argument is non-impulsive).
#[derive(Clone, Debug)]
pub struct TermOff {
    pub base: i64,
    pub vars: Vec<(usize, u32)>,
    pub opaque_args: Vec<Vec<usize>>,
    pub text: String,
}

#[derive(Clone, Debug)]
pub struct RowConstraint {
    pub label: String,
    pub matched: usize,
    pub matched_terms: Vec<TermOff>,
    pub other_terms: Vec<TermOff>,
    /// Euler identities constrain offsets through their pair equation only;
    /// their row constraint is bookkeeping for the equation offset. Whether
    /// the matched monomial of an identity survives the limit is checked
    /// structurally on the rescaled array instead.
    pub enforce: bool,
}

#[derive(Clone, Debug)]
pub struct PairConstraint {
    pub label: String,
    /// higher-derivative side
    pub x: usize,
    /// number of Euler steps
    pub n: i64,
    /// the shifts the identity expands into
    pub zs: Vec<usize>,
}

/// The full constraint system over rescaling offsets.
#[derive(Clone, Debug, Default)]
pub struct RescalingConstraints {
    pub vars: Vec<VarKey>,
    pub pinned_zero: Vec<bool>,
    pub rows: Vec<RowConstraint>,
    pub pairs: Vec<PairConstraint>,
}

impl RescalingConstraints {
    pub fn var_index(&self, v: &VarKey) -> Option<usize> {
        self.vars.iter().position(|w| w == v)
    }
}

fn term_text(t: &crate::expr::Term) -> String {
    format!(
        "{}",
        Expr {
            terms: vec![t.clone()]
        }
    )
}

fn term_offsets(e: &Expr, index: &BTreeMap<VarKey, usize>, label: &str) -> Vec<TermOff> {
    e.terms
        .iter()
        .map(|t| {
            debug_assert!(
                t.eps_pow <= 0,
                "array rows only carry nonpositive eps powers ({label})"
            );
            let vars = t
                .vars
                .iter()
                .filter_map(|(v, p)| index.get(v).map(|i| (*i, *p)))
                .collect();
            let opaque_args = t
                .opaques
                .iter()
                .map(|o| {
                    let mut ids = Vec::new();
                    for a in &o.args {
                        for v in a.variables() {
                            if let Some(i) = index.get(&v) {
                                if !ids.contains(i) {
                                    ids.push(*i);
                                }
                            }
                        }
                    }
                    ids
                })
                .collect();
            TermOff {
                base: -(t.eps_pow as i64),
                vars,
                opaque_args,
                text: term_text(t),
            }
        })
        .collect()
}

/// Build the offset constraints from a matched array. Past variables are
/// pinned at zero.
pub fn build_rescaling_system(a: &ModeChangeArray) -> RescalingConstraints {
    let vars: Vec<VarKey> = a.vars.clone();
    let index: BTreeMap<VarKey, usize> = vars
        .iter()
        .cloned()
        .enumerate()
        .map(|(i, v)| (v, i))
        .collect();
    let pinned_zero: Vec<bool> = vars.iter().map(|v| a.past.contains(v)).collect();
    let mut rows = Vec::new();
    let mut pairs = Vec::new();
    for r in &a.rows {
        let mut enforce = true;
        if let RowId::Euler { x, z } = &r.id {
            let n = (x.m - z.m) as i64;
            let zs = (0..=n).map(|i| index[&z.shifted(-(i as i32))]).collect();
            pairs.push(PairConstraint {
                label: r.label.clone(),
                x: index[x],
                n,
                zs,
            });
            enforce = false;
        }
        let Some(mv) = &r.matched else { continue };
        let all = term_offsets(&r.expr, &index, &r.label);
        let mi = index[mv];
        let (matched_terms, other_terms): (Vec<TermOff>, Vec<TermOff>) =
            all.into_iter().partition(|t| {
                t.vars.iter().any(|(i, _)| *i == mi)
                    || t.opaque_args.iter().any(|args| args.contains(&mi))
            });
        debug_assert!(
            !matched_terms.is_empty(),
            "matched variable occurs in its row"
        );
        rows.push(RowConstraint {
            label: r.label.clone(),
            matched: mi,
            matched_terms,
            other_terms,
            enforce,
        });
    }
    RescalingConstraints {
        vars,
        pinned_zero,
        rows,
        pairs,
    }
}

/// How a variable's offset was last raised (for diagnosis messages).
#[derive(Clone, Debug)]
pub struct Forcing {
    pub row: String,
    pub because: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct EqualityViolation {
    pub row: String,
    pub matched_offset: Mu,
    pub offender: String,
    pub offender_offset: Mu,
    /// chain of variables whose forced offsets explain the offender
    pub chain: Vec<String>,
}

#[derive(Clone, Debug)]
pub struct OffsetSolution {
    pub mu: Vec<Mu>,
    /// matched-row offsets (the offset of the matched monomial)
    pub eq_mu: Vec<(String, Mu)>,
    pub violations: Vec<EqualityViolation>,
    pub forced_by: Vec<Option<Forcing>>,
}

fn term_value(t: &TermOff, mu: &[Mu]) -> Mu {
    let mut acc = t.base;
    for (i, p) in &t.vars {
        match mu[*i] {
            Mu::Fin(v) => acc += v * *p as i64,
            Mu::Inf => return Mu::Inf,
        }
    }
    for args in &t.opaque_args {
        for i in args {
            if mu[*i] != Mu::Fin(0) {
                return Mu::Inf;
            }
        }
    }
    Mu::Fin(acc)
}

fn max_value(ts: &[TermOff], mu: &[Mu]) -> Mu {
    ts.iter()
        .map(|t| term_value(t, mu))
        .max()
        .unwrap_or(Mu::Fin(0))
}

/// Least fixpoint of the monotone constraint system. The bump target of a
/// row constraint is always its matched variable; rows whose matched
/// variable sits inside an opaque factor cannot be bumped and surface as
/// equality violations instead.
pub fn solve_min_offsets(c: &RescalingConstraints) -> OffsetSolution {
    let n = c.vars.len();
    let mut mu = vec![Mu::Fin(0); n];
    let mut forced_by: Vec<Option<Forcing>> = vec![None; n];
    let bound: i64 = 64 + 4 * n as i64;
    loop {
        let mut changed = false;
        for p in &c.pairs {
            if c.pinned_zero[p.x] {
                continue;
            }
            for &z in &p.zs {
                let need = mu[z].plus(p.n);
                if mu[p.x] < need {
                    mu[p.x] = need;
                    forced_by[p.x] = Some(Forcing {
                        row: p.label.clone(),
                        because: vec![z],
                    });
                    changed = true;
                }
            }
        }
        for r in &c.rows {
            if !r.enforce {
                continue;
            }
            let need = max_value(&r.other_terms, &mu);
            let have = max_value(&r.matched_terms, &mu);
            if have >= need {
                continue;
            }
            if c.pinned_zero[r.matched] {
                continue; // equality violation surfaced later
            }
            // bump through the best matched term with a plain occurrence
            let best = r
                .matched_terms
                .iter()
                .filter(|t| t.vars.iter().any(|(i, _)| *i == r.matched))
                .max_by_key(|t| term_value(t, &mu));
            let Some(t) = best else { continue };
            let mult = t.vars.iter().find(|(i, _)| *i == r.matched).unwrap().1 as i64;
            match (need, term_value(t, &mu)) {
                (Mu::Inf, _) => {
                    if mu[r.matched] != Mu::Inf {
                        mu[r.matched] = Mu::Inf;
                        forced_by[r.matched] = Some(forcing_from(r, &mu));
                        changed = true;
                    }
                }
                (Mu::Fin(nv), Mu::Fin(hv)) => {
                    let delta = (nv - hv + mult - 1) / mult;
                    if delta > 0 {
                        if let Mu::Fin(cur) = mu[r.matched] {
                            let next = cur + delta;
                            mu[r.matched] = if next > bound { Mu::Inf } else { Mu::Fin(next) };
                            forced_by[r.matched] = Some(forcing_from(r, &mu));
                            changed = true;
                        }
                    }
                }
                (Mu::Fin(_), Mu::Inf) => {}
            }
        }
        if !changed {
            break;
        }
    }
    // verification pass: matched offsets must dominate, pairs must be exact
    let mut violations = Vec::new();
    let mut eq_mu = Vec::new();
    for r in &c.rows {
        let have = max_value(&r.matched_terms, &mu);
        let offender = r
            .other_terms
            .iter()
            .map(|t| (term_value(t, &mu), t))
            .max_by_key(|(v, _)| *v);
        if let Some((v, t)) = offender {
            if r.enforce && v > have {
                let chain = t
                    .vars
                    .iter()
                    .map(|(i, _)| {
                        let mut msg = format!("mu({}) = {}", c.vars[*i], mu[*i]);
                        if let Some(f) = &forced_by[*i] {
                            msg.push_str(&format!(" forced by {}", f.row));
                        }
                        msg
                    })
                    .collect();
                violations.push(EqualityViolation {
                    row: r.label.clone(),
                    matched_offset: have,
                    offender: t.text.clone(),
                    offender_offset: v,
                    chain,
                });
            }
        }
        eq_mu.push((r.label.clone(), have));
    }
    for p in &c.pairs {
        let rhs =
            p.zs.iter()
                .map(|&z| mu[z].plus(p.n))
                .max()
                .unwrap_or(Mu::Fin(p.n));
        if !c.pinned_zero[p.x] && mu[p.x] > rhs {
            violations.push(EqualityViolation {
                row: p.label.clone(),
                matched_offset: rhs,
                offender: c.vars[p.x].to_string(),
                offender_offset: mu[p.x],
                chain: vec![],
            });
        }
    }
    OffsetSolution {
        mu,
        eq_mu,
        violations,
        forced_by,
    }
}

fn forcing_from(r: &RowConstraint, mu: &[Mu]) -> Forcing {
    let because = r
        .other_terms
        .iter()
        .max_by_key(|t| term_value(t, mu))
        .map(|t| t.vars.iter().map(|(i, _)| *i).collect())
        .unwrap_or_default();
    Forcing {
        row: r.label.clone(),
        because,
    }
}

/// The solved rescaling with goodness flags and witnesses.
#[derive(Clone, Debug)]
pub struct RescalingSolution {
    pub constraints: RescalingConstraints,
    pub offsets: OffsetSolution,
    /// g37: every matched equation offset is finite
    pub infinite_rows: Vec<String>,
    /// g38: last-instant variables carry offset zero
    pub impulsive_tail: Vec<VarKey>,
    /// g39: shifted-representative containment failures
    pub g39_witnesses: Vec<VarKey>,
}

impl RescalingSolution {
    pub fn mu_of(&self, v: &VarKey) -> Mu {
        self.constraints
            .var_index(v)
            .map(|i| self.offsets.mu[i])
            .unwrap_or(Mu::Fin(0))
    }

    pub fn var_offsets(&self) -> BTreeMap<VarKey, Mu> {
        self.constraints
            .vars
            .iter()
            .enumerate()
            .map(|(i, v)| (v.clone(), self.offsets.mu[i]))
            .collect()
    }

    pub fn eq_offsets(&self) -> BTreeMap<String, Mu> {
        self.offsets.eq_mu.iter().cloned().collect()
    }

    pub fn good(&self) -> bool {
        self.infinite_rows.is_empty()
            && self.impulsive_tail.is_empty()
            && self.g39_witnesses.is_empty()
            && self.offsets.violations.is_empty()
    }

    /// The reduced diagnosis applies when only containment fails.
    pub fn only_g39_fails(&self) -> bool {
        self.infinite_rows.is_empty()
            && self.impulsive_tail.is_empty()
            && self.offsets.violations.is_empty()
            && !self.g39_witnesses.is_empty()
    }
}

/// Solve the offsets for a matched array and evaluate goodness.
pub fn check_goodness(a: &ModeChangeArray) -> RescalingSolution {
    let constraints = build_rescaling_system(a);
    let offsets = solve_min_offsets(&constraints);
    let mut infinite_rows = Vec::new();
    for (label, mu) in &offsets.eq_mu {
        if *mu == Mu::Inf {
            infinite_rows.push(label.clone());
        }
    }
    // g38: every in-array variable of the last instant must be non-impulsive
    let mut impulsive_tail = Vec::new();
    let k = a.height as i32;
    for (i, v) in constraints.vars.iter().enumerate() {
        if v.k == k && base_offset(a, &v.base).is_some() && offsets.mu[i] != Mu::Fin(0) {
            impulsive_tail.push(v.clone());
        }
    }
    // g39: impulsive heads must keep a representative inside the array
    let mut g39_witnesses = Vec::new();
    for (i, v) in constraints.vars.iter().enumerate() {
        if a.past.contains(v) {
            continue;
        }
        if let Mu::Fin(m) = offsets.mu[i] {
            if m > 0 {
                let n = m.min(v.m as i64) as u32;
                let rep = VarKey::state(v.base.clone(), v.m - n, v.k + n as i32);
                if !a.vars.contains(&rep) {
                    g39_witnesses.push(v.clone());
                }
            }
        }
    }
    RescalingSolution {
        constraints,
        offsets,
        infinite_rows,
        impulsive_tail,
        g39_witnesses,
    }
}

fn base_offset(a: &ModeChangeArray, base: &Sym) -> Option<u32> {
    a.mc.next
        .vars
        .iter()
        .position(|b| b == base)
        .map(|i| a.mc.next_completed.offsets.d[i])
}

/// Score an arbitrary expression against an offset assignment (the monomial
/// homomorphism): max over terms of eps-order plus weighted variable offsets,
/// with opaque factors scored zero iff all arguments are non-impulsive.
pub fn score_expr(e: &Expr, mu: &dyn Fn(&VarKey) -> Mu) -> Mu {
    e.terms
        .iter()
        .map(|t| {
            let mut acc = -(t.eps_pow as i64);
            for (v, p) in &t.vars {
                match mu(v) {
                    Mu::Fin(x) => acc += x * *p as i64,
                    Mu::Inf => return Mu::Inf,
                }
            }
            for o in &t.opaques {
                for a in &o.args {
                    for v in a.variables() {
                        if v.tag == VarTag::State && mu(&v) != Mu::Fin(0) {
                            return Mu::Inf;
                        }
                    }
                }
            }
            Mu::Fin(acc)
        })
        .max()
        .unwrap_or(Mu::Fin(0))
}

/// The rescaling of an expression under an offset assignment: multiply by
/// eps to the expression's offset and express every impulsive variable
/// through its rescaled alias. Returns None on an infinite offset.
pub fn rescale_expr(e: &Expr, mu: &dyn Fn(&VarKey) -> Mu) -> Option<Expr> {
    let m = score_expr(e, mu).finite()?;
    let mut bad = false;
    let sub = e.substitute_vars(&mut |v| match mu(v) {
        Mu::Fin(0) => None,
        Mu::Fin(n) => Some(Expr::eps_pow(-(n as i32)).mul(&Expr::var(VarKey::scaled(
            v.base.clone(),
            v.m,
            v.k,
        )))),
        Mu::Inf => {
            bad = true;
            None
        }
    });
    if bad {
        return None;
    }
    Some(Expr::eps_pow(m as i32).mul(&sub))
}

/// Rescale and set eps to zero: the transport map carrying invariant
/// combinations into the restart ideal.
pub fn lambda_scaled(e: &Expr, mu: &dyn Fn(&VarKey) -> Mu) -> Option<Expr> {
    rescale_expr(e, mu).map(|r| r.drop_positive_eps())
}
