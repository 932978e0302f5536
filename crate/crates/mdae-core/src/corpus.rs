//! Golden-case harness: each fixture directory holds a model, an expectation
//! file, and optional left limits. Expected restart equations are compared
//! expression-for-expression with scaling factor exactly one.

use crate::expr::{Expr, Rat, Sym, VarKey};
use crate::mcarray::ModeChange;
use crate::model::{parse_model, Model};
use crate::rescale::Mu;
use crate::restart::{generate_restart, solve_restart_numeric, LeftLimits, Outcome, RestartSystem};
use serde::Deserialize;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct Expect {
    pub from: String,
    pub to: String,
    #[serde(default)]
    pub forced_height: Option<u32>,
    #[serde(default)]
    pub sigma: BTreeMap<String, SigmaExpect>,
    #[serde(default)]
    pub k_star: Option<u32>,
    #[serde(default)]
    pub k_upper: Option<u32>,
    #[serde(default)]
    pub facts: Option<Vec<String>>,
    pub outcome: String,
    /// complete set of nonzero dependent variable offsets
    #[serde(default)]
    pub var_offsets: Option<BTreeMap<String, String>>,
    /// asserted subset of matched-equation offsets
    #[serde(default)]
    pub eq_offsets: BTreeMap<String, String>,
    #[serde(default)]
    pub restart_equations: Option<Vec<String>>,
    #[serde(default)]
    pub g39_witnesses: Option<Vec<String>>,
    #[serde(default)]
    pub determined: Option<Vec<String>>,
    #[serde(default)]
    pub undetermined: Option<Vec<String>>,
    #[serde(default)]
    pub diagnosis_equations: Option<Vec<String>>,
    #[serde(default)]
    pub numeric_expect: Option<BTreeMap<String, f64>>,
}

#[derive(Deserialize, Default)]
pub struct SigmaExpect {
    pub c: BTreeMap<String, u32>,
    pub d: BTreeMap<String, u32>,
}

pub struct GoldenCase {
    pub name: String,
    pub model: Model,
    pub expect: Expect,
    pub limits: Option<LeftLimits>,
}

#[derive(Debug)]
pub struct CaseResult {
    pub name: String,
    pub failures: Vec<String>,
}

impl CaseResult {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Parse "x", "der(x)", "der(x, 2)" into (base, order).
pub fn parse_state_name(s: &str) -> Option<(Sym, u32)> {
    let s = s.trim();
    if let Some(rest) = s.strip_prefix("der(") {
        let inner = rest.strip_suffix(')')?;
        match inner.split_once(',') {
            Some((b, n)) => Some((Sym::new(b.trim()), n.trim().parse().ok()?)),
            None => Some((Sym::new(inner.trim()), 1)),
        }
    } else {
        Some((Sym::new(s), 0))
    }
}

pub fn parse_limits(json: &str) -> Result<LeftLimits, String> {
    let map: BTreeMap<String, f64> = serde_json::from_str(json).map_err(|e| e.to_string())?;
    let mut out = LeftLimits::new();
    for (k, v) in map {
        let (b, m) = parse_state_name(&k).ok_or_else(|| format!("bad limit key {k}"))?;
        out.insert((b, m), v);
    }
    Ok(out)
}

/// Tiny expression parser for expectation files. Variables are written in
/// function style: `plus(x)`, `plus(x, 1)`, `left(x)`, `dn(lambda)`, and
/// `state(x, m, k)` for raw array variables; parameters appear by name.
pub fn parse_expect_expr(s: &str, model: &Model) -> Result<Expr, String> {
    let mut p = EParser {
        s: s.as_bytes(),
        i: 0,
        model,
    };
    let e = p.sum()?;
    p.ws();
    if p.i != p.s.len() {
        return Err(format!("trailing input in `{s}`"));
    }
    Ok(e)
}

struct EParser<'a> {
    s: &'a [u8],
    i: usize,
    model: &'a Model,
}

impl<'a> EParser<'a> {
    fn ws(&mut self) {
        while self.i < self.s.len() && self.s[self.i].is_ascii_whitespace() {
            self.i += 1;
        }
    }
    fn peek(&mut self) -> Option<u8> {
        self.ws();
        self.s.get(self.i).copied()
    }
    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.i += 1;
            true
        } else {
            false
        }
    }
    fn sum(&mut self) -> Result<Expr, String> {
        let mut acc = self.product()?;
        loop {
            if self.eat(b'+') {
                acc = acc.add(&self.product()?);
            } else if self.eat(b'-') {
                acc = acc.sub(&self.product()?);
            } else {
                return Ok(acc);
            }
        }
    }
    fn product(&mut self) -> Result<Expr, String> {
        let mut acc = self.power()?;
        while self.eat(b'*') {
            acc = acc.mul(&self.power()?);
        }
        Ok(acc)
    }
    fn power(&mut self) -> Result<Expr, String> {
        let base = self.atom()?;
        if self.eat(b'^') {
            let n = self.number()? as u32;
            Ok(base.pow(n))
        } else {
            Ok(base)
        }
    }
    fn number(&mut self) -> Result<i64, String> {
        self.ws();
        let start = self.i;
        while self.i < self.s.len() && self.s[self.i].is_ascii_digit() {
            self.i += 1;
        }
        if start == self.i {
            return Err("expected number".into());
        }
        std::str::from_utf8(&self.s[start..self.i])
            .unwrap()
            .parse()
            .map_err(|_| "bad number".into())
    }
    fn ident(&mut self) -> Option<String> {
        self.ws();
        let start = self.i;
        while self.i < self.s.len()
            && (self.s[self.i].is_ascii_alphanumeric() || self.s[self.i] == b'_')
        {
            self.i += 1;
        }
        if start == self.i {
            None
        } else {
            Some(String::from_utf8(self.s[start..self.i].to_vec()).unwrap())
        }
    }
    fn name_args(&mut self) -> Result<(String, Vec<i64>), String> {
        if !self.eat(b'(') {
            return Err("expected (".into());
        }
        let name = self.ident().ok_or("expected name")?;
        let mut nums = Vec::new();
        loop {
            if self.eat(b')') {
                return Ok((name, nums));
            }
            if !self.eat(b',') {
                return Err("expected , or )".into());
            }
            self.ws();
            let neg = self.eat(b'-');
            let mut n = self.number()?;
            if neg {
                n = -n;
            }
            nums.push(n);
        }
    }
    fn atom(&mut self) -> Result<Expr, String> {
        if self.eat(b'(') {
            let e = self.sum()?;
            if !self.eat(b')') {
                return Err("expected )".into());
            }
            return Ok(e);
        }
        if self.eat(b'-') {
            return Ok(self.atom()?.neg());
        }
        if self.peek().is_some_and(|c| c.is_ascii_digit()) {
            let n = self.number()?;
            if self.eat(b'/') {
                let d = self.number()?;
                return Ok(Expr::constant(Rat::new(n, d)));
            }
            return Ok(Expr::constant(Rat::from_integer(n)));
        }
        let id = self.ident().ok_or("expected identifier")?;
        match id.as_str() {
            "plus" | "left" | "dn" | "state" => {
                let (base, nums) = self.name_args()?;
                let b = Sym::new(&base);
                let m = *nums.first().unwrap_or(&0) as u32;
                let k = *nums.get(1).unwrap_or(&0) as i32;
                let v = match id.as_str() {
                    "plus" => VarKey::plus(b, m),
                    "left" => VarKey::left(b, m),
                    "dn" => VarKey::scaled(b, m, k),
                    _ => VarKey::state(b, m, k),
                };
                Ok(Expr::var(v))
            }
            _ => {
                let s = Sym::new(&id);
                if self.model.params.iter().any(|(p, _)| *p == s) {
                    Ok(Expr::param(s))
                } else {
                    Err(format!("unknown name `{id}` in expectation"))
                }
            }
        }
    }
}

fn mu_string(m: Mu) -> String {
    m.to_string()
}

/// Compare a generated restart system's essential equations against
/// expectations: same count, and each expected expression appears with
/// scaling factor exactly one.
fn compare_equations(
    label: &str,
    expected: &[String],
    system: &RestartSystem,
    model: &Model,
    failures: &mut Vec<String>,
) {
    let essential = system.essential_equations();
    if essential.len() != expected.len() {
        failures.push(format!(
            "{label}: expected {} equations, generated {} ({})",
            expected.len(),
            essential.len(),
            essential
                .iter()
                .map(|e| format!("{}", e.expr))
                .collect::<Vec<_>>()
                .join(" | ")
        ));
    }
    let mut used = vec![false; essential.len()];
    for want in expected {
        let w = match parse_expect_expr(want, model) {
            Ok(w) => w,
            Err(e) => {
                failures.push(format!("{label}: bad expectation `{want}`: {e}"));
                continue;
            }
        };
        let mut found = false;
        for (i, got) in essential.iter().enumerate() {
            if used[i] {
                continue;
            }
            if got.expr.equal_up_to_constant(&w) == Some(Rat::from_integer(1)) {
                used[i] = true;
                found = true;
                break;
            }
        }
        if !found {
            failures.push(format!(
                "{label}: no generated equation matches `{want}` with factor 1"
            ));
        }
    }
}

pub fn run_case(case: &GoldenCase) -> CaseResult {
    let mut failures = Vec::new();
    let exp = &case.expect;
    let mc = match ModeChange::from_model(&case.model, &exp.from, &exp.to) {
        Ok(mc) => mc,
        Err(e) => {
            return CaseResult {
                name: case.name.clone(),
                failures: vec![format!("mode change: {e}")],
            };
        }
    };
    // sigma expectations
    for (mode_name, se) in &exp.sigma {
        let (sys, comp) = if mode_name == &exp.from {
            (&mc.prev, &mc.prev_completed)
        } else {
            (&mc.next, &mc.next_completed)
        };
        for (lbl, want) in &se.c {
            match sys.equations.iter().position(|e| e.label.as_str() == lbl) {
                Some(i) if comp.offsets.c[i] == *want => {}
                Some(i) => failures.push(format!(
                    "sigma c[{lbl}] = {}, want {want}",
                    comp.offsets.c[i]
                )),
                None => failures.push(format!("sigma: no equation {lbl}")),
            }
        }
        for (var, want) in &se.d {
            match sys.vars.iter().position(|v| v.as_str() == var) {
                Some(i) if comp.offsets.d[i] == *want => {}
                Some(i) => failures.push(format!(
                    "sigma d[{var}] = {}, want {want}",
                    comp.offsets.d[i]
                )),
                None => failures.push(format!("sigma: no variable {var}")),
            }
        }
    }
    let outcome = match generate_restart(&mc, exp.forced_height) {
        Ok(o) => o,
        Err(e) => {
            let got = match e {
                crate::restart::RestartError::Array(_) => "no_admissible_matching".to_string(),
                other => format!("error: {other}"),
            };
            if got != exp.outcome {
                failures.push(format!("outcome: got {got}, want {}", exp.outcome));
            }
            return CaseResult {
                name: case.name.clone(),
                failures,
            };
        }
    };
    let (array, solution) = match &outcome {
        Outcome::Good {
            array, solution, ..
        } => (array, solution),
        Outcome::Undetermined {
            array, solution, ..
        } => (array, solution),
    };
    if let Some(ks) = exp.k_star {
        if array.bounds.k_star_max() != ks {
            failures.push(format!("k_star = {}, want {ks}", array.bounds.k_star_max()));
        }
    }
    if let Some(ku) = exp.k_upper {
        if array.bounds.k_upper_max() != ku {
            failures.push(format!(
                "k_upper = {}, want {ku}",
                array.bounds.k_upper_max()
            ));
        }
    }
    if let Some(want) = &exp.facts {
        let mut got: Vec<String> = array.facts.iter().map(|(_, l, _)| l.clone()).collect();
        got.sort();
        let mut want = want.clone();
        want.sort();
        if got != want {
            failures.push(format!("facts: got {got:?}, want {want:?}"));
        }
    }
    if let Some(want) = &exp.var_offsets {
        let got: BTreeMap<String, String> = solution
            .var_offsets()
            .into_iter()
            .filter(|(v, m)| {
                v.tag == crate::expr::VarTag::State && !array.past.contains(v) && *m != Mu::Fin(0)
            })
            .map(|(v, m)| (v.to_string(), mu_string(m)))
            .collect();
        if &got != want {
            failures.push(format!("variable offsets: got {got:?}, want {want:?}"));
        }
    }
    for (lbl, want) in &exp.eq_offsets {
        match solution.eq_offsets().get(lbl) {
            Some(m) if &mu_string(*m) == want => {}
            Some(m) => failures.push(format!("equation offset {lbl} = {m}, want {want}")),
            None => failures.push(format!("equation offset: no matched row {lbl}")),
        }
    }
    match &outcome {
        Outcome::Good { restart, .. } => {
            if exp.outcome != "good" {
                failures.push(format!("outcome: got good, want {}", exp.outcome));
            }
            if let Some(eqs) = &exp.restart_equations {
                compare_equations("restart", eqs, restart, &case.model, &mut failures);
            }
            if let Some(want) = &exp.numeric_expect {
                match &case.limits {
                    Some(limits) => {
                        let params = param_values(&case.model);
                        match solve_restart_numeric(restart, limits, &params, Default::default()) {
                            Ok(val) => {
                                for (name, x) in want {
                                    let w = parse_expect_expr(name, &case.model)
                                        .ok()
                                        .and_then(|e| e.variables().first().cloned());
                                    match w.and_then(|v| val.get(&v).copied()) {
                                        Some(got) if (got - x).abs() < 1e-9 => {}
                                        Some(got) => failures
                                            .push(format!("numeric {name} = {got}, want {x}")),
                                        None => {
                                            failures.push(format!("numeric: no unknown {name}"))
                                        }
                                    }
                                }
                            }
                            Err(e) => failures.push(format!("numeric solve failed: {e}")),
                        }
                    }
                    None => failures.push("numeric expectation without limits.json".into()),
                }
            }
        }
        Outcome::Undetermined { diagnosis, .. } => {
            let got = if diagnosis.g39_witnesses.is_empty()
                || !diagnosis.equality_violations.is_empty()
                || !diagnosis.infinite_rows.is_empty()
                || !diagnosis.impulsive_tail.is_empty()
            {
                "no_good_solution"
            } else {
                "diagnosis"
            };
            if got != exp.outcome {
                failures.push(format!("outcome: got {got}, want {}", exp.outcome));
            }
            if let Some(want) = &exp.g39_witnesses {
                let got: Vec<String> = diagnosis
                    .g39_witnesses
                    .iter()
                    .map(|v| v.to_string())
                    .collect();
                if &got != want {
                    failures.push(format!("g39 witnesses: got {got:?}, want {want:?}"));
                }
            }
            let states = |xs: &Vec<(Sym, u32)>| -> Vec<String> {
                xs.iter()
                    .map(|(b, m)| {
                        if *m == 0 {
                            b.to_string()
                        } else if *m == 1 {
                            format!("der({b})")
                        } else {
                            format!("der({b}, {m})")
                        }
                    })
                    .collect()
            };
            if let Some(want) = &exp.determined {
                let got = states(&diagnosis.determined);
                if &got != want {
                    failures.push(format!("determined: got {got:?}, want {want:?}"));
                }
            }
            if let Some(want) = &exp.undetermined {
                let got = states(&diagnosis.undetermined);
                if &got != want {
                    failures.push(format!("undetermined: got {got:?}, want {want:?}"));
                }
            }
            if let Some(eqs) = &exp.diagnosis_equations {
                match &diagnosis.restart {
                    Some(r) => {
                        compare_equations("diagnosis restart", eqs, r, &case.model, &mut failures)
                    }
                    None => failures.push("diagnosis restart system missing".into()),
                }
            }
        }
    }
    CaseResult {
        name: case.name.clone(),
        failures,
    }
}

pub fn param_values(model: &Model) -> BTreeMap<Sym, f64> {
    model
        .params
        .iter()
        .map(|(p, v)| (p.clone(), *v.numer() as f64 / *v.denom() as f64))
        .collect()
}

pub fn load_case(dir: &Path) -> Result<GoldenCase, String> {
    let name = dir
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let model_text =
        std::fs::read_to_string(dir.join("model.mdae")).map_err(|e| format!("{name}: {e}"))?;
    let model = parse_model(&model_text).map_err(|e| format!("{name}: {e}"))?;
    let expect_text =
        std::fs::read_to_string(dir.join("expect.json")).map_err(|e| format!("{name}: {e}"))?;
    let expect: Expect = serde_json::from_str(&expect_text).map_err(|e| format!("{name}: {e}"))?;
    let limits = match std::fs::read_to_string(dir.join("limits.json")) {
        Ok(text) => Some(parse_limits(&text).map_err(|e| format!("{name}: {e}"))?),
        Err(_) => None,
    };
    Ok(GoldenCase {
        name,
        model,
        expect,
        limits,
    })
}

/// Run every fixture under the directory; returns one result per case.
pub fn run_corpus(dir: &Path) -> Result<Vec<CaseResult>, String> {
    let mut dirs: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| e.to_string())?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.is_dir())
        .collect();
    dirs.sort();
    let mut out = Vec::new();
    for d in dirs {
        out.push(run_case(&load_case(&d)?));
    }
    Ok(out)
}

/// Default fixture directory relative to the workspace root.
pub fn default_corpus_dir() -> PathBuf {
    let manifest = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    manifest
        .parent()
        .and_then(|p| p.parent())
        .map(|p| p.join("corpus"))
        .unwrap_or_else(|| "corpus".into())
}
