//! Mode change arrays: stacked shifts of the new mode's completion around the
//! switch instant, Euler identities from the ~ closure, fact detection and
//! removal, height bounds, the enabled/disabled split, and the canonical
//! matching (quotient lift, exchange step for tail consistency rows, Euler
//! propagation).

use crate::expr::{euler_identity, Expr, Sym, VarKey, VarTag};
use crate::graph::{dm_decompose, BipartiteGraph, DMDecomposition};
use crate::model::{Model, Trigger};
use crate::sigma::{complete, solve_sigma, CompletedSystem, DAESystem, EqKey, SigmaError};
use std::collections::BTreeSet;

/// A mode change: previous mode, new mode, and the trigger.
#[derive(Clone, Debug)]
pub struct ModeChange {
    pub prev: DAESystem,
    pub prev_completed: CompletedSystem,
    pub next: DAESystem,
    pub next_completed: CompletedSystem,
    pub trigger: Trigger,
    pub declared_facts: Vec<Expr>,
}

#[derive(thiserror::Error, Debug)]
pub enum ModeChangeError {
    #[error("unknown mode `{0}`")]
    UnknownMode(String),
    #[error("no transition from `{0}` to `{1}`")]
    UnknownTransition(String, String),
    #[error(transparent)]
    Sigma(#[from] SigmaError),
}

impl ModeChange {
    pub fn from_model(model: &Model, from: &str, to: &str) -> Result<ModeChange, ModeChangeError> {
        let t = model
            .transition(from, to)
            .ok_or_else(|| ModeChangeError::UnknownTransition(from.into(), to.into()))?;
        let prev_mode = model
            .mode(from)
            .ok_or_else(|| ModeChangeError::UnknownMode(from.into()))?;
        let next_mode = model
            .mode(to)
            .ok_or_else(|| ModeChangeError::UnknownMode(to.into()))?;
        let prev = prev_mode.system(&model.vars);
        let next = next_mode.system(&model.vars);
        let prev_off = solve_sigma(&prev)?;
        let next_off = solve_sigma(&next)?;
        Ok(ModeChange {
            prev_completed: complete(&prev, &prev_off),
            prev,
            next_completed: complete(&next, &next_off),
            next,
            trigger: t.trigger.clone(),
            declared_facts: t.facts.clone(),
        })
    }

    /// A variable is determined by the previous mode iff its base belongs to
    /// the previous mode and its total degree is below that mode's variable
    /// offset (it then relates by ~ to a pre-switch snapshot of the
    /// completion).
    pub fn is_past(&self, v: &VarKey) -> bool {
        if v.tag != VarTag::State {
            return false;
        }
        match self.prev.vars.iter().position(|b| *b == v.base) {
            Some(i) => v.total_degree() < self.prev_completed.offsets.d[i] as i64,
            None => false,
        }
    }

    /// New-mode base equation index -> matched base variable.
    fn matched_var(&self, eq: usize) -> (Sym, u32, u32) {
        let v = self.next_completed.offsets.matching[eq];
        (
            self.next.vars[v].clone(),
            self.next_completed.offsets.d[v],
            self.next_completed.offsets.c[eq],
        )
    }

    /// Root facts: completed rows entailed by the zero-crossing (detected
    /// syntactically up to a constant factor) or declared explicitly. Each
    /// root carries its shift window 0..=l.
    pub fn root_facts(&self) -> Vec<(EqKey, u32)> {
        let mut pats: Vec<Expr> = Vec::new();
        if let Trigger::Up(g) = &self.trigger {
            pats.push(g.clone());
        }
        pats.extend(self.declared_facts.iter().cloned());
        let mut out = Vec::new();
        for (key, expr) in self.next_completed.completion_rows() {
            let is_root = pats.iter().any(|p| expr.equal_up_to_constant(p).is_some());
            if !is_root {
                continue;
            }
            // largest l with all variables still past after shifting by l;
            // shifting raises total degrees, so this terminates for any
            // non-constant expression
            let vars = expr.variables();
            let mut l = 0u32;
            'outer: while !vars.is_empty() {
                for v in &vars {
                    if !self.is_past(&v.shifted(l as i32 + 1)) {
                        break 'outer;
                    }
                }
                l += 1;
            }
            // the root itself must involve past variables only
            if vars.iter().all(|v| self.is_past(v)) {
                out.push((*key, l));
            }
        }
        out
    }

    /// Is the stacked row (eq, m, k) a fact?
    pub fn is_fact(&self, roots: &[(EqKey, u32)], key: EqKey, k: i32) -> bool {
        roots
            .iter()
            .any(|(r, l)| *r == key && k >= 0 && k as u32 <= *l)
    }

    /// Is a completed row of the new mode invariant (common to both modes)?
    pub fn is_common(&self, key: EqKey) -> bool {
        let expr = &self.next_completed.rows[&key];
        self.prev_completed
            .completion_rows()
            .any(|(_, p)| expr.equal_up_to_constant(p).is_some())
    }

    /// Per-equation minimal heights (lower and upper bound variants). The
    /// lower bound requires some admissible tail pairing to exist, the upper
    /// bound requires every pairing candidate to be admissible; candidates
    /// range over all max-weight signature matchings of the new mode.
    pub fn height_bounds(&self) -> HeightBounds {
        let roots = self.root_facts();
        let n = self.next.equations.len();
        let matchings = all_sigma_matchings(&self.next, &self.next_completed);
        let mut k_star = vec![0u32; n];
        let mut k_upper = vec![0u32; n];
        let prev_dmax = self
            .prev_completed
            .offsets
            .d
            .iter()
            .copied()
            .max()
            .unwrap_or(0);
        for eq in 0..n {
            let c = self.next_completed.offsets.c[eq];
            // past-ness dies once total degrees clear the previous mode's
            // offsets, so the search always terminates within this bound
            let bound = c + prev_dmax + 8;
            for (target, exists_ok) in [(&mut k_star[eq], true), (&mut k_upper[eq], false)] {
                'search: for cand in 0..=bound {
                    for m in 0..=c {
                        if self.is_fact(&roots, EqKey { eq, m }, cand as i32) {
                            continue;
                        }
                        if cand < c - m {
                            continue 'search;
                        }
                        if m == c {
                            continue;
                        }
                        // tail pairing candidates over the matching set
                        let mut any_ok = false;
                        let mut all_ok = true;
                        for mt in &matchings {
                            let v = mt[eq];
                            let d = self.next_completed.offsets.d[v];
                            let u =
                                VarKey::state(self.next.vars[v].clone(), d - c + m, cand as i32);
                            if self.is_past(&u) {
                                all_ok = false;
                            } else {
                                any_ok = true;
                            }
                        }
                        let ok = if exists_ok { any_ok } else { all_ok };
                        if !ok {
                            continue 'search;
                        }
                    }
                    *target = cand;
                    break;
                }
            }
        }
        HeightBounds { k_star, k_upper }
    }
}

/// Enumerate every max-weight perfect matching of the new mode's signature
/// problem (assignment vectors equation -> variable).
fn all_sigma_matchings(s: &DAESystem, comp: &CompletedSystem) -> Vec<Vec<usize>> {
    let n = s.equations.len();
    let sig: Vec<Vec<Option<u32>>> = (0..n)
        .map(|e| (0..n).map(|v| s.signature(e, v)).collect())
        .collect();
    let best: i64 = (0..n)
        .map(|e| sig[e][comp.offsets.matching[e]].unwrap() as i64)
        .sum();
    let mut out = Vec::new();
    let mut assign = vec![0usize; n];
    let mut used = vec![false; n];
    #[allow(clippy::too_many_arguments)]
    fn rec(
        eq: usize,
        n: usize,
        acc: i64,
        best: i64,
        sig: &[Vec<Option<u32>>],
        assign: &mut Vec<usize>,
        used: &mut Vec<bool>,
        out: &mut Vec<Vec<usize>>,
    ) {
        if eq == n {
            if acc == best {
                out.push(assign.clone());
            }
            return;
        }
        for v in 0..n {
            if used[v] {
                continue;
            }
            if let Some(w) = sig[eq][v] {
                used[v] = true;
                assign[eq] = v;
                rec(eq + 1, n, acc + w as i64, best, sig, assign, used, out);
                used[v] = false;
            }
        }
    }
    rec(0, n, 0, best, &sig, &mut assign, &mut used, &mut out);
    out
}

#[derive(Clone, Debug)]
pub struct HeightBounds {
    pub k_star: Vec<u32>,
    pub k_upper: Vec<u32>,
}

impl HeightBounds {
    pub fn k_star_max(&self) -> u32 {
        self.k_star.iter().copied().max().unwrap_or(0)
    }
    pub fn k_upper_max(&self) -> u32 {
        self.k_upper.iter().copied().max().unwrap_or(0)
    }
}

/// Identity of one array row.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Debug)]
pub enum RowId {
    /// Shifted completed equation (eq, m) at instant k.
    Dyn { eq: usize, m: u32, k: i32 },
    /// Euler identity relating x (higher derivative) to z.
    Euler { x: VarKey, z: VarKey },
}

#[derive(Clone, Debug)]
pub struct Row {
    pub id: RowId,
    pub label: String,
    pub expr: Expr,
    pub enabled: bool,
    pub matched: Option<VarKey>,
}

/// The finite, ~ closed, fact-free mode change array with its matching.
#[derive(Clone, Debug)]
pub struct ModeChangeArray {
    pub mc: ModeChange,
    pub height: u32,
    pub bounds: HeightBounds,
    pub rows: Vec<Row>,
    /// Removed fact rows (kept for reporting).
    pub facts: Vec<(RowId, String, Expr)>,
    /// Every variable of the array, canonical order.
    pub vars: Vec<VarKey>,
    pub past: BTreeSet<VarKey>,
    /// Dependents still unmatched after the canonical construction.
    pub exposed: Vec<VarKey>,
}

#[derive(thiserror::Error, Debug)]
pub enum ArrayError {
    #[error("no admissible matching at height {height}: enabled rows {rows:?} cannot all be matched (K* lower bound is {k_star})")]
    NoAdmissibleMatching {
        height: u32,
        k_star: u32,
        rows: Vec<String>,
        certificate: Box<DMDecomposition>,
    },
}

impl ModeChangeArray {
    pub fn dependents(&self) -> Vec<VarKey> {
        self.vars
            .iter()
            .filter(|v| !self.past.contains(v))
            .cloned()
            .collect()
    }

    pub fn row_label(id: &RowId, mc: &ModeChange) -> String {
        match id {
            RowId::Dyn { eq, m, k } => {
                let mut s = mc.next.equations[*eq].label.to_string();
                for _ in 0..*m {
                    s.push('\'');
                }
                if *k != 0 {
                    s.push_str(&format!("[{k}]"));
                }
                s
            }
            RowId::Euler { x, z } => format!("E({x};{z})"),
        }
    }

    pub fn find_row(&self, id: &RowId) -> Option<usize> {
        self.rows.iter().position(|r| &r.id == id)
    }

    pub fn matching_pairs(&self) -> Vec<(String, VarKey)> {
        self.rows
            .iter()
            .filter_map(|r| r.matched.clone().map(|v| (r.label.clone(), v)))
            .collect()
    }

    /// The restart variable carrying state (base, m) at the last instant.
    pub fn restart_var(&self, base: &Sym, m: u32) -> VarKey {
        VarKey::state(base.clone(), m, self.height as i32)
    }

    /// Restart states (base, m) of the new mode, m < d_base.
    pub fn restart_states(&self) -> Vec<(Sym, u32)> {
        let mut out = Vec::new();
        for (i, b) in self.mc.next.vars.iter().enumerate() {
            for m in 0..self.mc.next_completed.offsets.d[i] {
                out.push((b.clone(), m));
            }
        }
        out
    }
}

/// Build the K-mode-change array: stack the completion over instants
/// 0..=K, remove facts, close under Euler identities, mark the enabled rows,
/// and construct the canonical matching.
pub fn build_array(mc: &ModeChange, height: Option<u32>) -> Result<ModeChangeArray, ArrayError> {
    let bounds = mc.height_bounds();
    let k = height.unwrap_or_else(|| bounds.k_upper_max());
    let roots = mc.root_facts();

    // 1. dynamics rows, facts removed
    let mut rows: Vec<Row> = Vec::new();
    let mut facts = Vec::new();
    for (key, expr) in mc.next_completed.completion_rows() {
        for shift in 0..=k as i32 {
            let id = RowId::Dyn {
                eq: key.eq,
                m: key.m,
                k: shift,
            };
            let label = ModeChangeArray::row_label(&id, mc);
            if mc.is_fact(&roots, *key, shift) {
                facts.push((id, label, expr.shift(shift)));
                continue;
            }
            let enabled = shift == k as i32 || mc.is_common(*key);
            rows.push(Row {
                id,
                label,
                expr: expr.shift(shift),
                enabled,
                matched: None,
            });
        }
    }

    // 2. ~ closure: add Euler identities for related in-array pairs that are
    // not both past; iterate because identities introduce lower-degree shifts.
    let mut vars: BTreeSet<VarKey> = rows.iter().flat_map(|r| r.expr.variables()).collect();
    let mut added: BTreeSet<(VarKey, VarKey)> = BTreeSet::new();
    loop {
        let snapshot: Vec<VarKey> = vars.iter().cloned().collect();
        let mut changed = false;
        for x in &snapshot {
            for z in &snapshot {
                if x.sim(z) && x.m > z.m && !(mc.is_past(x) && mc.is_past(z)) {
                    let pair = (x.clone(), z.clone());
                    if added.contains(&pair) {
                        continue;
                    }
                    added.insert(pair);
                    let expr = euler_identity(x, z).expect("related pair");
                    for v in expr.variables() {
                        if vars.insert(v) {
                            changed = true;
                        }
                    }
                    let id = RowId::Euler {
                        x: x.clone(),
                        z: z.clone(),
                    };
                    let label = ModeChangeArray::row_label(&id, mc);
                    rows.push(Row {
                        id,
                        label,
                        expr,
                        enabled: false,
                        matched: None,
                    });
                }
            }
        }
        if !changed {
            break;
        }
    }

    rows.sort_by(|a, b| a.id.cmp(&b.id));
    let past: BTreeSet<VarKey> = vars.iter().filter(|v| mc.is_past(v)).cloned().collect();
    let mut array = ModeChangeArray {
        mc: mc.clone(),
        height: k,
        bounds,
        rows,
        facts,
        vars: vars.into_iter().collect(),
        past,
        exposed: vec![],
    };
    canonical_matching(&mut array)?;
    Ok(array)
}

fn is_dependent(a: &ModeChangeArray, v: &VarKey) -> bool {
    !a.past.contains(v) && a.vars.contains(v)
}

/// The canonical matching: leading lift, exchange step for tail consistency
/// rows, then Euler propagation and instant-zero consistency pairing to a
/// fixpoint, and a final completion pass. Fails only when an enabled row is
/// left unmatched.
fn canonical_matching(a: &mut ModeChangeArray) -> Result<(), ArrayError> {
    let k = a.height as i32;
    let mut var_matched: BTreeSet<VarKey> = BTreeSet::new();
    let n_eqs = a.mc.next.equations.len();

    let set =
        |a: &mut ModeChangeArray, var_matched: &mut BTreeSet<VarKey>, id: &RowId, v: VarKey| {
            let i = a.find_row(id).expect("row exists");
            debug_assert!(a.rows[i].matched.is_none());
            debug_assert!(!var_matched.contains(&v));
            debug_assert!(
                a.rows[i].expr.contains_var(&v),
                "matched variable must occur in the row"
            );
            a.rows[i].matched = Some(v.clone());
            var_matched.insert(v);
        };

    // stage 1: leading rows at every instant, matched with the shifted
    // leading variable of the signature matching.
    for eq in 0..n_eqs {
        let (base, d, c) = a.mc.matched_var(eq);
        for shift in 0..=k {
            let id = RowId::Dyn { eq, m: c, k: shift };
            if a.find_row(&id).is_none() {
                continue;
            }
            let v = VarKey::state(base.clone(), d, shift);
            if is_dependent(a, &v) && !var_matched.contains(&v) {
                set(a, &mut var_matched, &id, v);
            }
        }
    }

    // stage 2: exchange step for non-fact tail consistency rows: match the
    // row with its tail state variable, rerouting the pivot leading row's
    // variable through the connecting Euler identity.
    for eq in 0..n_eqs {
        let (base, d, c) = a.mc.matched_var(eq);
        for m in 0..c {
            let id = RowId::Dyn { eq, m, k };
            if a.find_row(&id).is_none() {
                continue;
            }
            let u = VarKey::state(base.clone(), d - c + m, k);
            if !is_dependent(a, &u) || var_matched.contains(&u) {
                continue;
            }
            let pivot_k = k - c as i32 + m as i32;
            let pivot = RowId::Dyn {
                eq,
                m: c,
                k: pivot_k,
            };
            let pivot_ix = if pivot_k >= 0 {
                a.find_row(&pivot)
            } else {
                None
            };
            match pivot_ix {
                Some(pi) if a.rows[pi].matched.is_some() => {
                    let v = a.rows[pi].matched.clone().unwrap();
                    // release the pivot, reroute v through the Euler identity
                    a.rows[pi].matched = None;
                    var_matched.remove(&v);
                    set(a, &mut var_matched, &id, u.clone());
                    let e = RowId::Euler {
                        x: v.clone(),
                        z: u.clone(),
                    };
                    if a.find_row(&e).is_some() && !var_matched.contains(&v) {
                        set(a, &mut var_matched, &e, v);
                    }
                }
                _ => {
                    // no pivot: the tail state occurs directly in the row
                    set(a, &mut var_matched, &id, u);
                }
            }
        }
    }

    // stage 2b: enabled consistency rows at interior instants (shared with
    // the previous mode) claim their representative before Euler identities
    // can take it.
    for eq in 0..n_eqs {
        let (base, d, c) = a.mc.matched_var(eq);
        for m in 0..c {
            for shift in 0..k {
                let id = RowId::Dyn { eq, m, k: shift };
                let Some(i) = a.find_row(&id) else { continue };
                if !a.rows[i].enabled || a.rows[i].matched.is_some() {
                    continue;
                }
                let u = VarKey::state(base.clone(), d - c + m, shift);
                if is_dependent(a, &u) && !var_matched.contains(&u) {
                    set(a, &mut var_matched, &id, u);
                }
            }
        }
    }

    // stages 3 and 4 to a fixpoint: Euler propagation from matched class
    // members, then consistency rows at instant zero.
    loop {
        let mut changed = false;
        // Euler propagation
        loop {
            let mut step = false;
            let snapshot: Vec<VarKey> = var_matched.iter().cloned().collect();
            for x in &snapshot {
                let mates: Vec<VarKey> = a
                    .vars
                    .iter()
                    .filter(|z| {
                        z.sim(x) && *z != x && is_dependent(a, z) && !var_matched.contains(z)
                    })
                    .cloned()
                    .collect();
                for z in mates {
                    let id = if z.m > x.m {
                        RowId::Euler {
                            x: z.clone(),
                            z: x.clone(),
                        }
                    } else {
                        RowId::Euler {
                            x: x.clone(),
                            z: z.clone(),
                        }
                    };
                    if let Some(i) = a.find_row(&id) {
                        if a.rows[i].matched.is_none() {
                            set(a, &mut var_matched, &id, z.clone());
                            step = true;
                            changed = true;
                        }
                    }
                }
            }
            if !step {
                break;
            }
        }
        // consistency rows at instant zero
        for eq in 0..n_eqs {
            let (base, d, c) = a.mc.matched_var(eq);
            for m in 0..c {
                let id = RowId::Dyn { eq, m, k: 0 };
                let Some(i) = a.find_row(&id) else { continue };
                if a.rows[i].matched.is_some() {
                    continue;
                }
                let u = VarKey::state(base.clone(), d - c + m, 0);
                if is_dependent(a, &u) && !var_matched.contains(&u) {
                    set(a, &mut var_matched, &id, u);
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }

    // stage 5: completion. Unmatched Euler rows claim their own sides first
    // (higher derivative first), then leftover dependents take any unmatched
    // row that contains them.
    let euler_ids: Vec<RowId> = a
        .rows
        .iter()
        .filter(|r| matches!(r.id, RowId::Euler { .. }) && r.matched.is_none())
        .map(|r| r.id.clone())
        .collect();
    for id in euler_ids {
        let RowId::Euler { x, z } = &id else {
            unreachable!()
        };
        for v in [x.clone(), z.clone()] {
            if is_dependent(a, &v) && !var_matched.contains(&v) {
                set(a, &mut var_matched, &id, v);
                break;
            }
        }
    }
    let leftover: Vec<VarKey> = a
        .vars
        .iter()
        .filter(|v| is_dependent(a, v) && !var_matched.contains(v))
        .cloned()
        .collect();
    for v in leftover {
        let cand = a
            .rows
            .iter()
            .position(|r| r.matched.is_none() && r.expr.contains_var(&v));
        if let Some(i) = cand {
            let id = a.rows[i].id.clone();
            set(a, &mut var_matched, &id, v);
        }
    }

    a.exposed = a
        .vars
        .iter()
        .filter(|v| is_dependent(a, v) && !var_matched.contains(v))
        .cloned()
        .collect();

    // requirement: every enabled row is matched
    let unmatched_enabled: Vec<String> = a
        .rows
        .iter()
        .filter(|r| r.enabled && r.matched.is_none())
        .map(|r| r.label.clone())
        .collect();
    if !unmatched_enabled.is_empty() {
        // certificate: the DM split of enabled rows against the dependents
        let deps = a.dependents();
        let enabled: Vec<&Row> = a.rows.iter().filter(|r| r.enabled).collect();
        let mut g = BipartiteGraph::new(enabled.len(), deps.len());
        for (i, r) in enabled.iter().enumerate() {
            for (j, v) in deps.iter().enumerate() {
                if r.expr.contains_var(v) {
                    g.add_edge(i, j);
                }
            }
        }
        return Err(ArrayError::NoAdmissibleMatching {
            height: a.height,
            k_star: a.bounds.k_star_max(),
            rows: unmatched_enabled,
            certificate: Box::new(dm_decompose(&g)),
        });
    }
    Ok(())
}

/// Standalone ~ closure of a set of equations (for tests and diagnostics):
/// returns the added Euler identities.
pub fn sim_closure(exprs: &[Expr], is_past: &dyn Fn(&VarKey) -> bool) -> Vec<Expr> {
    let mut vars: BTreeSet<VarKey> = exprs.iter().flat_map(|e| e.variables()).collect();
    let mut added: BTreeSet<(VarKey, VarKey)> = BTreeSet::new();
    let mut out = Vec::new();
    loop {
        let snapshot: Vec<VarKey> = vars.iter().cloned().collect();
        let mut changed = false;
        for x in &snapshot {
            for z in &snapshot {
                if x.sim(z)
                    && x.m > z.m
                    && !(is_past(x) && is_past(z))
                    && added.insert((x.clone(), z.clone()))
                {
                    let e = euler_identity(x, z).expect("related");
                    for v in e.variables() {
                        if vars.insert(v) {
                            changed = true;
                        }
                    }
                    out.push(e);
                }
            }
        }
        if !changed {
            return out;
        }
    }
}

/// Euler identities relating the distinct members of each ~ class.
pub fn past_variables(a: &ModeChangeArray) -> Vec<VarKey> {
    a.past.iter().cloned().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::parse_model;

    pub const CUPBALL: &str = r#"
model cupball
param L = 1;
param g = 981/100;
var x, y, lambda;
mode free {
  eq e1: der(x, 2) + lambda*x = 0;
  eq e2: der(y, 2) + lambda*y + g = 0;
  eq k3: lambda = 0;
}
mode taut {
  eq e1: der(x, 2) + lambda*x = 0;
  eq e2: der(y, 2) + lambda*y + g = 0;
  eq k1: L^2 - (x^2 + y^2) = 0;
}
transition free -> taut on up(x^2 + y^2 - L^2);
"#;

    fn cupball_mc() -> ModeChange {
        let m = parse_model(CUPBALL).unwrap();
        ModeChange::from_model(&m, "free", "taut").unwrap()
    }

    #[test]
    fn past_set_matches_worked_example() {
        let mc = cupball_mc();
        let a = build_array(&mc, None).unwrap();
        let past: Vec<String> = a.past.iter().map(|v| v.to_string()).collect();
        assert_eq!(past, vec!["x", "x[1]", "x'", "y", "y[1]", "y'"]);
    }

    #[test]
    fn facts_are_k1_and_its_shift() {
        let mc = cupball_mc();
        let a = build_array(&mc, None).unwrap();
        let mut labels: Vec<&str> = a.facts.iter().map(|(_, l, _)| l.as_str()).collect();
        labels.sort();
        assert_eq!(labels, vec!["k1", "k1[1]"]);
    }

    #[test]
    fn height_bounds_are_one() {
        let mc = cupball_mc();
        let b = mc.height_bounds();
        assert_eq!(b.k_star_max(), 1);
        assert_eq!(b.k_upper_max(), 1);
    }

    #[test]
    fn array_is_the_ten_row_table() {
        let mc = cupball_mc();
        let a = build_array(&mc, None).unwrap();
        assert_eq!(a.height, 1);
        assert_eq!(a.rows.len(), 10);
        let disabled: Vec<&str> = a
            .rows
            .iter()
            .filter(|r| r.matched.is_none())
            .map(|r| r.label.as_str())
            .collect();
        assert_eq!(disabled, vec!["k1'", "k1''"]);
        assert!(a.exposed.is_empty());
    }

    #[test]
    fn canonical_matching_is_the_published_one() {
        let mc = cupball_mc();
        let a = build_array(&mc, None).unwrap();
        let mut pairs: Vec<String> = a
            .matching_pairs()
            .into_iter()
            .map(|(l, v)| format!("{l}<->{v}"))
            .collect();
        pairs.sort();
        assert_eq!(
            pairs,
            vec![
                "E(x'';x'[1])<->x'[1]",
                "E(y'';y'[1])<->y''",
                "e1<->x''",
                "e1[1]<->x''[1]",
                "e2<->lambda",
                "e2[1]<->lambda[1]",
                "k1''[1]<->y''[1]",
                "k1'[1]<->y'[1]",
            ]
        );
    }

    #[test]
    fn height_zero_has_no_admissible_matching() {
        let mc = cupball_mc();
        match build_array(&mc, Some(0)) {
            Err(ArrayError::NoAdmissibleMatching { rows, k_star, .. }) => {
                assert!(rows.contains(&"k1'".to_string()));
                assert_eq!(k_star, 1);
            }
            other => panic!("expected NoAdmissibleMatching, got {other:?}"),
        }
    }

    #[test]
    fn closure_adds_exactly_the_two_identities() {
        let mc = cupball_mc();
        let a = build_array(&mc, None).unwrap();
        let eulers: Vec<&str> = a
            .rows
            .iter()
            .filter(|r| matches!(r.id, RowId::Euler { .. }))
            .map(|r| r.label.as_str())
            .collect();
        assert_eq!(eulers, vec!["E(x'';x'[1])", "E(y'';y'[1])"]);
    }

    const CLUTCH: &str = r#"
model clutch
param J1 = 1;
param J2 = 2;
var w1, w2, tau1, tau2;
mode released {
  eq e1: J1*der(w1) = tau1;
  eq e2: J2*der(w2) = tau2;
  eq r1: tau1 = 0;
  eq r2: tau2 = 0;
}
mode engaged {
  eq e1: J1*der(w1) = tau1;
  eq e2: J2*der(w2) = tau2;
  eq e3: w1 - w2 = 0;
  eq e4: tau1 + tau2 = 0;
}
transition released -> engaged exogenous;
"#;

    #[test]
    fn clutch_past_set_and_consistency_split() {
        let m = parse_model(CLUTCH).unwrap();
        let mc = ModeChange::from_model(&m, "released", "engaged").unwrap();
        let a = build_array(&mc, None).unwrap();
        let past: Vec<String> = a.past.iter().map(|v| v.to_string()).collect();
        assert_eq!(past, vec!["w1", "w2"]);
        // the junction constraint is the consistency part, its derivative leads
        assert_eq!(mc.next_completed.consistency.len(), 1);
        let (key, _) = mc.next_completed.consistency[0];
        assert_eq!(mc.next.equations[key.eq].label.as_str(), "e3");
        let disabled: Vec<&str> = a
            .rows
            .iter()
            .filter(|r| r.matched.is_none())
            .map(|r| r.label.as_str())
            .collect();
        assert_eq!(disabled, vec!["e3", "e3'"]);
    }

    #[test]
    fn self_transition_disables_nothing() {
        let src = "model m
var x;
mode run {
  eq e: der(x) + x = 0;
}
transition run -> run exogenous;
";
        let m = parse_model(src).unwrap();
        let mc = ModeChange::from_model(&m, "run", "run").unwrap();
        let a = build_array(&mc, None).unwrap();
        assert_eq!(a.height, 0);
        assert!(
            a.rows.iter().all(|r| r.matched.is_some()),
            "every invariant row stays enabled"
        );
    }

    #[test]
    fn sim_closure_chain() {
        // x'' together with x'[1]: one identity; its expansion brings x'
        // into scope, which then pairs transitively with x[1].
        let e = Expr::var(VarKey::state(Sym::new("x"), 2, 0)).sub(&Expr::var(VarKey::state(
            Sym::new("x"),
            1,
            1,
        )));
        let added = sim_closure(&[e.clone()], &|_| false);
        assert_eq!(added.len(), 1);
        let extra = Expr::var(VarKey::state(Sym::new("x"), 0, 1));
        let two = sim_closure(&[e.clone(), extra.clone()], &|_| false);
        assert_eq!(
            two.len(),
            2,
            "transitive pair through the identity's own shifts"
        );
        // closing the closed set adds nothing
        let mut closed = vec![e, extra];
        closed.extend(two);
        assert!(sim_closure(&closed, &|_| false).is_empty());
        let none = sim_closure(&[Expr::var(VarKey::state(Sym::new("q"), 0, 0))], &|_| false);
        assert!(none.is_empty());
    }
}
