//! Run reports: a stable JSON document plus a text rendering derived from
//! it. Identical inputs produce byte-identical JSON.

use crate::expr::{Sym, VarKey, VarTag};
use crate::mcarray::{ModeChangeArray, RowId};
use crate::model::{print_expr, Model};
use crate::rescale::{Mu, RescalingSolution};
use crate::restart::{ConvergenceRow, Diagnosis, Outcome, RestartSystem};
use serde::Serialize;
use std::collections::BTreeMap;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Serialize)]
pub struct Report {
    pub schema_version: u32,
    pub model: String,
    pub transition: Option<TransitionReport>,
}

#[derive(Serialize)]
pub struct TransitionReport {
    pub from: String,
    pub to: String,
    pub sigma: BTreeMap<String, SigmaReport>,
    pub heights: HeightsReport,
    pub facts: Vec<String>,
    pub array: Vec<ArrayRowReport>,
    pub matching: Vec<MatchingPair>,
    pub variable_offsets: BTreeMap<String, String>,
    pub equation_offsets: BTreeMap<String, String>,
    pub outcome: String,
    pub goodness: GoodnessReport,
    pub restart: Option<RestartReport>,
    pub diagnosis: Option<DiagnosisReport>,
    pub numeric: Option<BTreeMap<String, f64>>,
    pub convergence: Option<Vec<ConvergenceRow>>,
    pub warnings: Vec<String>,
}

#[derive(Serialize)]
pub struct SigmaReport {
    pub c: BTreeMap<String, u32>,
    pub d: BTreeMap<String, u32>,
}

#[derive(Serialize)]
pub struct HeightsReport {
    pub used: u32,
    pub k_star: u32,
    pub k_upper: u32,
    pub per_equation_k_star: BTreeMap<String, u32>,
    pub per_equation_k_upper: BTreeMap<String, u32>,
}

#[derive(Serialize)]
pub struct ArrayRowReport {
    pub label: String,
    pub instant: Option<i32>,
    pub expr: String,
    pub status: String,
    pub matched: Option<String>,
}

#[derive(Serialize)]
pub struct MatchingPair {
    pub equation: String,
    pub variable: String,
}

#[derive(Serialize)]
pub struct GoodnessReport {
    pub finite_equation_offsets: bool,
    pub tail_non_impulsive: bool,
    pub representative_containment: bool,
    pub infinite_rows: Vec<String>,
    pub impulsive_tail: Vec<String>,
    pub g39_witnesses: Vec<String>,
    pub equality_violations: Vec<String>,
}

#[derive(Serialize)]
pub struct RestartReport {
    pub equations: Vec<EquationReport>,
    pub dependents: Vec<String>,
    pub continuity_states: Vec<String>,
    pub system_states: Vec<String>,
}

#[derive(Serialize)]
pub struct EquationReport {
    pub label: String,
    pub expr: String,
}

#[derive(Serialize)]
pub struct DiagnosisReport {
    pub determined: Vec<String>,
    pub undetermined: Vec<String>,
    pub restart: Option<RestartReport>,
}

fn mu_str(m: Mu) -> String {
    m.to_string()
}

fn state_name(b: &Sym, m: u32) -> String {
    VarKey::state(b.clone(), m, 0).to_string()
}

pub fn restart_report(r: &RestartSystem) -> RestartReport {
    RestartReport {
        equations: r
            .equations
            .iter()
            .map(|e| EquationReport {
                label: e.label.clone(),
                expr: print_expr(&e.expr),
            })
            .collect(),
        dependents: r.dependents.iter().map(|v| v.to_string()).collect(),
        continuity_states: r
            .continuity_states
            .iter()
            .map(|(b, m)| state_name(b, *m))
            .collect(),
        system_states: r
            .system_states
            .iter()
            .map(|(b, m)| state_name(b, *m))
            .collect(),
    }
}

fn diagnosis_report(d: &Diagnosis) -> DiagnosisReport {
    DiagnosisReport {
        determined: d
            .determined
            .iter()
            .map(|(b, m)| state_name(b, *m))
            .collect(),
        undetermined: d
            .undetermined
            .iter()
            .map(|(b, m)| state_name(b, *m))
            .collect(),
        restart: d.restart.as_ref().map(restart_report),
    }
}

fn goodness_report(s: &RescalingSolution) -> GoodnessReport {
    GoodnessReport {
        finite_equation_offsets: s.infinite_rows.is_empty(),
        tail_non_impulsive: s.impulsive_tail.is_empty(),
        representative_containment: s.g39_witnesses.is_empty(),
        infinite_rows: s.infinite_rows.clone(),
        impulsive_tail: s.impulsive_tail.iter().map(|v| v.to_string()).collect(),
        g39_witnesses: s.g39_witnesses.iter().map(|v| v.to_string()).collect(),
        equality_violations: s
            .offsets
            .violations
            .iter()
            .map(|v| {
                format!(
                    "{}: matched offset {} but term {} has offset {} ({})",
                    v.row,
                    mu_str(v.matched_offset),
                    v.offender,
                    mu_str(v.offender_offset),
                    v.chain.join("; ")
                )
            })
            .collect(),
    }
}

fn array_rows(a: &ModeChangeArray) -> Vec<ArrayRowReport> {
    let mut out = Vec::new();
    for (id, label, expr) in &a.facts {
        let instant = match id {
            RowId::Dyn { k, .. } => Some(*k),
            RowId::Euler { .. } => None,
        };
        out.push(ArrayRowReport {
            label: label.clone(),
            instant,
            expr: print_expr(expr),
            status: "fact".into(),
            matched: None,
        });
    }
    for r in &a.rows {
        let instant = match r.id {
            RowId::Dyn { k, .. } => Some(k),
            RowId::Euler { .. } => None,
        };
        let status = if r.matched.is_some() {
            "enabled"
        } else {
            "disabled"
        };
        out.push(ArrayRowReport {
            label: r.label.clone(),
            instant,
            expr: print_expr(&r.expr),
            status: status.into(),
            matched: r.matched.as_ref().map(|v| v.to_string()),
        });
    }
    out.sort_by_key(|r| (r.instant, r.label.clone()));
    out
}

pub fn transition_report(
    model: &Model,
    from: &str,
    to: &str,
    outcome: &Outcome,
    numeric: Option<&BTreeMap<VarKey, f64>>,
    convergence: Option<Vec<ConvergenceRow>>,
    warnings: Vec<String>,
) -> Report {
    let (array, solution) = match outcome {
        Outcome::Good {
            array, solution, ..
        } => (array, solution),
        Outcome::Undetermined {
            array, solution, ..
        } => (array, solution),
    };
    let mc = &array.mc;
    let mut sigma = BTreeMap::new();
    for (name, sys, comp) in [
        (mc.prev.name.to_string(), &mc.prev, &mc.prev_completed),
        (mc.next.name.to_string(), &mc.next, &mc.next_completed),
    ] {
        let c = sys
            .equations
            .iter()
            .enumerate()
            .map(|(i, e)| (e.label.to_string(), comp.offsets.c[i]))
            .collect();
        let d = sys
            .vars
            .iter()
            .enumerate()
            .map(|(i, v)| (v.to_string(), comp.offsets.d[i]))
            .collect();
        sigma.insert(name, SigmaReport { c, d });
    }
    let heights = HeightsReport {
        used: array.height,
        k_star: array.bounds.k_star_max(),
        k_upper: array.bounds.k_upper_max(),
        per_equation_k_star: mc
            .next
            .equations
            .iter()
            .enumerate()
            .map(|(i, e)| (e.label.to_string(), array.bounds.k_star[i]))
            .collect(),
        per_equation_k_upper: mc
            .next
            .equations
            .iter()
            .enumerate()
            .map(|(i, e)| (e.label.to_string(), array.bounds.k_upper[i]))
            .collect(),
    };
    let variable_offsets = solution
        .var_offsets()
        .into_iter()
        .filter(|(v, _)| v.tag == VarTag::State && !array.past.contains(v))
        .map(|(v, m)| (v.to_string(), mu_str(m)))
        .collect();
    let equation_offsets = solution
        .eq_offsets()
        .into_iter()
        .map(|(l, m)| (l, mu_str(m)))
        .collect();
    let (outcome_str, restart, diagnosis) = match outcome {
        Outcome::Good { restart, .. } => ("good".to_string(), Some(restart_report(restart)), None),
        Outcome::Undetermined { diagnosis, .. } => {
            let label = if diagnosis.g39_witnesses.is_empty() && diagnosis.impulsive_tail.is_empty()
            {
                "no_good_solution"
            } else if diagnosis.infinite_rows.is_empty()
                && diagnosis.impulsive_tail.is_empty()
                && diagnosis.equality_violations.is_empty()
            {
                "diagnosis"
            } else {
                "no_good_solution"
            };
            (label.to_string(), None, Some(diagnosis_report(diagnosis)))
        }
    };
    Report {
        schema_version: SCHEMA_VERSION,
        model: model.name.to_string(),
        transition: Some(TransitionReport {
            from: from.into(),
            to: to.into(),
            sigma,
            heights,
            facts: array.facts.iter().map(|(_, l, _)| l.clone()).collect(),
            array: array_rows(array),
            matching: array
                .matching_pairs()
                .into_iter()
                .map(|(e, v)| MatchingPair {
                    equation: e,
                    variable: v.to_string(),
                })
                .collect(),
            variable_offsets,
            equation_offsets,
            outcome: outcome_str,
            goodness: goodness_report(solution),
            restart,
            diagnosis,
            numeric: numeric.map(|m| m.iter().map(|(v, x)| (v.to_string(), *x)).collect()),
            convergence,
            warnings,
        }),
    }
}

impl Report {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Human-readable rendering, derived from the same data as the JSON.
    pub fn to_text(&self, color: bool) -> String {
        let mut s = String::new();
        let h = |s: &mut String, t: &str| {
            if color {
                s.push_str(&format!("\x1b[1m{t}\x1b[0m\n"));
            } else {
                s.push_str(t);
                s.push('\n');
            }
        };
        let Some(t) = &self.transition else {
            return s;
        };
        h(&mut s, &format!("== mode change {} -> {} ==", t.from, t.to));
        for (mode, sr) in &t.sigma {
            let c: Vec<String> = sr.c.iter().map(|(k, v)| format!("{k}:{v}")).collect();
            let d: Vec<String> = sr.d.iter().map(|(k, v)| format!("{k}:{v}")).collect();
            s.push_str(&format!(
                "mode {mode}: c = [{}], d = [{}]\n",
                c.join(", "),
                d.join(", ")
            ));
        }
        s.push_str(&format!(
            "height K = {} (bounds: K* = {}, K^ = {})\n",
            t.heights.used, t.heights.k_star, t.heights.k_upper
        ));
        if !t.facts.is_empty() {
            s.push_str(&format!("facts removed: {}\n", t.facts.join(", ")));
        }
        h(&mut s, "array:");
        for r in &t.array {
            let inst = r
                .instant
                .map(|k| format!("t+{k}e"))
                .unwrap_or_else(|| "euler".into());
            let matched = r.matched.as_deref().unwrap_or("-");
            s.push_str(&format!(
                "  {:<14} {:<7} {:<9} {:<10} {}\n",
                r.label, inst, r.status, matched, r.expr
            ));
        }
        h(&mut s, "rescaling offsets:");
        let vo: Vec<String> = t
            .variable_offsets
            .iter()
            .filter(|(_, m)| m.as_str() != "0")
            .map(|(v, m)| format!("mu({v}) = {m}"))
            .collect();
        s.push_str(&format!(
            "  {}\n",
            if vo.is_empty() {
                "all zero".into()
            } else {
                vo.join(", ")
            }
        ));
        s.push_str(&format!("outcome: {}\n", t.outcome));
        if let Some(r) = &t.restart {
            h(&mut s, "restart system:");
            for e in &r.equations {
                s.push_str(&format!("  {:<14} 0 = {}\n", e.label, e.expr));
            }
            if !r.continuity_states.is_empty() {
                s.push_str(&format!(
                    "continuity states: {}\n",
                    r.continuity_states.join(", ")
                ));
            }
        }
        if let Some(d) = &t.diagnosis {
            if !t.goodness.g39_witnesses.is_empty() {
                s.push_str(&format!(
                    "containment witnesses: {}\n",
                    t.goodness.g39_witnesses.join(", ")
                ));
            }
            for v in &t.goodness.equality_violations {
                s.push_str(&format!("offset conflict: {v}\n"));
            }
            s.push_str(&format!("determined: [{}]\n", d.determined.join(", ")));
            s.push_str(&format!("undetermined: [{}]\n", d.undetermined.join(", ")));
            if let Some(r) = &d.restart {
                h(&mut s, "reduced restart system:");
                for e in &r.equations {
                    s.push_str(&format!("  {:<14} 0 = {}\n", e.label, e.expr));
                }
            }
        }
        if let Some(n) = &t.numeric {
            h(&mut s, "numeric restart:");
            for (v, x) in n {
                s.push_str(&format!("  {v} = {x:.12}\n"));
            }
        }
        if let Some(c) = &t.convergence {
            h(&mut s, "step-size convergence (distance to limit):");
            for row in c {
                s.push_str(&format!(
                    "  eps = {:>10.3e}  distance = {:.6e}\n",
                    row.eps, row.distance
                ));
            }
        }
        for w in &t.warnings {
            s.push_str(&format!("warning: {w}\n"));
        }
        s
    }
}
