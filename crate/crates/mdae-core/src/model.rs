//! Textual model format for multimode DAE systems: parsing, validation, and
//! construction of per-mode `DAESystem`s.
//!
//! Grammar (line oriented, `#` and `//` start comments):
//!
//! ```text
//! model NAME
//! param NAME = NUMBER;
//! var NAME, NAME, ...;
//! function NAME(ARITY);
//! mode NAME { eq LABEL: EXPR = EXPR; ... }
//! transition FROM -> TO on up(EXPR) [fact EXPR;]* ;
//! transition FROM -> TO exogenous;
//! ```
//!
//! Derivatives are written `der(x)` / `der(x, n)`; `^` is integer power.

use crate::expr::{Expr, FuncId, Rat, Sym, VarKey};
use crate::sigma::{DAESystem, Equation};
use std::fmt;

#[derive(Clone, Debug)]
pub struct Mode {
    pub name: Sym,
    pub equations: Vec<Equation>,
}

impl Mode {
    /// The square system over the declared variables active in this mode.
    pub fn system(&self, declared: &[Sym]) -> DAESystem {
        let mut active: Vec<Sym> = Vec::new();
        for d in declared {
            let used = self
                .equations
                .iter()
                .any(|e| e.expr.variables().iter().any(|v| &v.base == d));
            if used {
                active.push(d.clone());
            }
        }
        DAESystem {
            name: self.name.clone(),
            equations: self.equations.clone(),
            vars: active,
        }
    }
}

#[derive(Clone, Debug)]
pub enum Trigger {
    /// Zero-crossing of the expression from below.
    Up(Expr),
    /// Externally commanded switch; no zero-crossing information.
    Exogenous,
}

#[derive(Clone, Debug)]
pub struct Transition {
    pub from: Sym,
    pub to: Sym,
    pub trigger: Trigger,
    /// Extra root-fact expressions declared by the modeler.
    pub facts: Vec<Expr>,
}

#[derive(Clone, Debug)]
pub struct Model {
    pub name: Sym,
    pub params: Vec<(Sym, Rat)>,
    pub vars: Vec<Sym>,
    pub functions: Vec<(Sym, usize)>,
    pub modes: Vec<Mode>,
    pub transitions: Vec<Transition>,
}

impl Model {
    pub fn mode(&self, name: &str) -> Option<&Mode> {
        self.modes.iter().find(|m| m.name.as_str() == name)
    }

    pub fn transition(&self, from: &str, to: &str) -> Option<&Transition> {
        self.transitions
            .iter()
            .find(|t| t.from.as_str() == from && t.to.as_str() == to)
    }

    pub fn param_value(&self, name: &Sym) -> Option<Rat> {
        self.params.iter().find(|(p, _)| p == name).map(|(_, v)| *v)
    }
}

#[derive(thiserror::Error, Debug)]
#[error("{line}:{col}: {msg}")]
pub struct ParseError {
    pub line: usize,
    pub col: usize,
    pub msg: String,
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Ident(String),
    Number(Rat),
    Sym(&'static str),
}

struct Lexer {
    toks: Vec<(Tok, usize, usize)>,
    pos: usize,
}

fn lex(text: &str) -> Result<Lexer, ParseError> {
    let mut toks = Vec::new();
    for (ln, raw) in text.lines().enumerate() {
        let line = ln + 1;
        let bytes: Vec<char> = raw.chars().collect();
        let mut i = 0;
        while i < bytes.len() {
            let c = bytes[i];
            let col = i + 1;
            if c.is_whitespace() {
                i += 1;
                continue;
            }
            if c == '#' || (c == '/' && bytes.get(i + 1) == Some(&'/')) {
                break;
            }
            if c.is_ascii_alphabetic() || c == '_' {
                let start = i;
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == '_') {
                    i += 1;
                }
                toks.push((Tok::Ident(bytes[start..i].iter().collect()), line, col));
                continue;
            }
            if c.is_ascii_digit() {
                let start = i;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
                let mut num: String = bytes[start..i].iter().collect();
                if i < bytes.len()
                    && bytes[i] == '.'
                    && bytes.get(i + 1).is_some_and(|d| d.is_ascii_digit())
                {
                    i += 1;
                    let fstart = i;
                    while i < bytes.len() && bytes[i].is_ascii_digit() {
                        i += 1;
                    }
                    let frac: String = bytes[fstart..i].iter().collect();
                    num.push('.');
                    num.push_str(&frac);
                }
                let rat = parse_number(&num).ok_or(ParseError {
                    line,
                    col,
                    msg: format!("bad number `{num}`"),
                })?;
                toks.push((Tok::Number(rat), line, col));
                continue;
            }
            if c == '-' && bytes.get(i + 1) == Some(&'>') {
                toks.push((Tok::Sym("->"), line, col));
                i += 2;
                continue;
            }
            let s = match c {
                '{' => "{",
                '}' => "}",
                '(' => "(",
                ')' => ")",
                ',' => ",",
                ';' => ";",
                ':' => ":",
                '=' => "=",
                '+' => "+",
                '-' => "-",
                '*' => "*",
                '/' => "/",
                '^' => "^",
                _ => {
                    return Err(ParseError {
                        line,
                        col,
                        msg: format!("unexpected character `{c}`"),
                    })
                }
            };
            toks.push((Tok::Sym(s), line, col));
            i += 1;
        }
    }
    Ok(Lexer { toks, pos: 0 })
}

fn parse_number(s: &str) -> Option<Rat> {
    match s.split_once('.') {
        None => s.parse::<i64>().ok().map(Rat::from_integer),
        Some((int, frac)) => {
            let scale = 10i64.checked_pow(frac.len() as u32)?;
            let n = int.parse::<i64>().ok()?;
            let f = frac.parse::<i64>().ok()?;
            Some(Rat::new(n * scale + f, scale))
        }
    }
}

impl Lexer {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(t, _, _)| t)
    }
    fn loc(&self) -> (usize, usize) {
        self.toks
            .get(self.pos)
            .or_else(|| self.toks.last())
            .map(|&(_, l, c)| (l, c))
            .unwrap_or((0, 0))
    }
    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|(t, _, _)| t.clone());
        if t.is_some() {
            self.pos += 1;
        }
        t
    }
    fn err(&self, msg: impl Into<String>) -> ParseError {
        let (line, col) = self.loc();
        ParseError {
            line,
            col,
            msg: msg.into(),
        }
    }
    fn expect_sym(&mut self, s: &str) -> Result<(), ParseError> {
        match self.next() {
            Some(Tok::Sym(t)) if t == s => Ok(()),
            other => Err(self.err(format!("expected `{s}`, found {other:?}"))),
        }
    }
    fn expect_ident(&mut self) -> Result<String, ParseError> {
        match self.next() {
            Some(Tok::Ident(s)) => Ok(s),
            other => Err(self.err(format!("expected identifier, found {other:?}"))),
        }
    }
    fn eat_sym(&mut self, s: &str) -> bool {
        if let Some(Tok::Sym(t)) = self.peek() {
            if *t == s {
                self.pos += 1;
                return true;
            }
        }
        false
    }
    fn eat_keyword(&mut self, kw: &str) -> bool {
        if let Some(Tok::Ident(s)) = self.peek() {
            if s == kw {
                self.pos += 1;
                return true;
            }
        }
        false
    }
}

struct Names<'a> {
    params: &'a [(Sym, Rat)],
    vars: &'a [Sym],
    functions: &'a [(Sym, usize)],
}

fn parse_expr(lx: &mut Lexer, names: &Names) -> Result<Expr, ParseError> {
    parse_sum(lx, names)
}

fn parse_sum(lx: &mut Lexer, names: &Names) -> Result<Expr, ParseError> {
    let mut acc = parse_product(lx, names)?;
    loop {
        if lx.eat_sym("+") {
            acc = acc.add(&parse_product(lx, names)?);
        } else if lx.eat_sym("-") {
            acc = acc.sub(&parse_product(lx, names)?);
        } else {
            return Ok(acc);
        }
    }
}

fn parse_product(lx: &mut Lexer, names: &Names) -> Result<Expr, ParseError> {
    let mut acc = parse_unary(lx, names)?;
    loop {
        if lx.eat_sym("*") {
            acc = acc.mul(&parse_unary(lx, names)?);
        } else if lx.eat_sym("/") {
            let rhs = parse_unary(lx, names)?;
            let c = rhs
                .equal_up_to_constant(&Expr::int(1))
                .ok_or_else(|| lx.err("division is only supported by nonzero constants"))?;
            acc = acc.scale(c.recip());
        } else {
            return Ok(acc);
        }
    }
}

fn parse_unary(lx: &mut Lexer, names: &Names) -> Result<Expr, ParseError> {
    if lx.eat_sym("-") {
        return Ok(parse_unary(lx, names)?.neg());
    }
    parse_power(lx, names)
}

fn parse_power(lx: &mut Lexer, names: &Names) -> Result<Expr, ParseError> {
    let base = parse_atom(lx, names)?;
    if lx.eat_sym("^") {
        match lx.next() {
            Some(Tok::Number(n)) if n.is_integer() && *n.numer() >= 1 => {
                Ok(base.pow(*n.numer() as u32))
            }
            other => Err(lx.err(format!(
                "expected positive integer exponent, found {other:?}"
            ))),
        }
    } else {
        Ok(base)
    }
}

fn parse_atom(lx: &mut Lexer, names: &Names) -> Result<Expr, ParseError> {
    match lx.next() {
        Some(Tok::Number(n)) => Ok(Expr::constant(n)),
        Some(Tok::Sym("(")) => {
            let e = parse_expr(lx, names)?;
            lx.expect_sym(")")?;
            Ok(e)
        }
        Some(Tok::Ident(id)) if id == "der" => {
            lx.expect_sym("(")?;
            let inner = parse_expr(lx, names)?;
            let mut order = 1;
            if lx.eat_sym(",") {
                match lx.next() {
                    Some(Tok::Number(n)) if n.is_integer() && *n.numer() >= 1 => order = *n.numer(),
                    other => {
                        return Err(lx.err(format!("expected derivative order, found {other:?}")))
                    }
                }
            }
            lx.expect_sym(")")?;
            let mut e = inner;
            for _ in 0..order {
                e = e.differentiate();
            }
            Ok(e)
        }
        Some(Tok::Ident(id)) => {
            let sym = Sym::new(&id);
            if let Some((_, arity)) = names.functions.iter().find(|(f, _)| f == &sym) {
                lx.expect_sym("(")?;
                let mut args = Vec::new();
                if !lx.eat_sym(")") {
                    loop {
                        args.push(parse_expr(lx, names)?);
                        if lx.eat_sym(")") {
                            break;
                        }
                        lx.expect_sym(",")?;
                    }
                }
                if args.len() != *arity {
                    return Err(lx.err(format!(
                        "function {id} expects {arity} arguments, got {}",
                        args.len()
                    )));
                }
                return Ok(Expr::app(FuncId::new(sym, *arity), args));
            }
            if names.vars.contains(&sym) {
                return Ok(Expr::var(VarKey::state(sym, 0, 0)));
            }
            if names.params.iter().any(|(p, _)| p == &sym) {
                return Ok(Expr::param(sym));
            }
            Err(lx.err(format!("unknown identifier `{id}`")))
        }
        other => Err(lx.err(format!("expected expression, found {other:?}"))),
    }
}

/// Parse a model file.
pub fn parse_model(text: &str) -> Result<Model, ParseError> {
    let mut lx = lex(text)?;
    if !lx.eat_keyword("model") {
        return Err(lx.err("expected `model NAME`"));
    }
    let name = Sym::new(&lx.expect_ident()?);
    let mut params: Vec<(Sym, Rat)> = Vec::new();
    let mut vars: Vec<Sym> = Vec::new();
    let mut functions: Vec<(Sym, usize)> = Vec::new();
    let mut modes: Vec<Mode> = Vec::new();
    let mut transitions: Vec<Transition> = Vec::new();

    let declared = |params: &[(Sym, Rat)], vars: &[Sym], functions: &[(Sym, usize)], s: &Sym| {
        params.iter().any(|(p, _)| p == s)
            || vars.contains(s)
            || functions.iter().any(|(f, _)| f == s)
    };

    while let Some(tok) = lx.peek() {
        match tok {
            Tok::Ident(kw) if kw == "param" => {
                lx.next();
                let p = Sym::new(&lx.expect_ident()?);
                if declared(&params, &vars, &functions, &p) {
                    return Err(lx.err(format!("`{p}` is already declared")));
                }
                lx.expect_sym("=")?;
                let neg = lx.eat_sym("-");
                let v = match lx.next() {
                    Some(Tok::Number(n)) => n,
                    other => return Err(lx.err(format!("expected number, found {other:?}"))),
                };
                let v = if lx.eat_sym("/") {
                    match lx.next() {
                        Some(Tok::Number(d)) if !d.numer().eq(&0) => v / d,
                        other => {
                            return Err(
                                lx.err(format!("expected nonzero denominator, found {other:?}"))
                            )
                        }
                    }
                } else {
                    v
                };
                lx.expect_sym(";")?;
                params.push((p, if neg { -v } else { v }));
            }
            Tok::Ident(kw) if kw == "var" => {
                lx.next();
                loop {
                    let v = Sym::new(&lx.expect_ident()?);
                    if declared(&params, &vars, &functions, &v) {
                        return Err(lx.err(format!("`{v}` is already declared")));
                    }
                    vars.push(v);
                    if lx.eat_sym(";") {
                        break;
                    }
                    lx.expect_sym(",")?;
                }
            }
            Tok::Ident(kw) if kw == "function" => {
                lx.next();
                let f = Sym::new(&lx.expect_ident()?);
                if declared(&params, &vars, &functions, &f) {
                    return Err(lx.err(format!("`{f}` is already declared")));
                }
                lx.expect_sym("(")?;
                let arity = match lx.next() {
                    Some(Tok::Number(n)) if n.is_integer() && *n.numer() >= 1 => {
                        *n.numer() as usize
                    }
                    other => return Err(lx.err(format!("expected arity, found {other:?}"))),
                };
                lx.expect_sym(")")?;
                lx.expect_sym(";")?;
                functions.push((f, arity));
            }
            Tok::Ident(kw) if kw == "mode" => {
                lx.next();
                let mname = Sym::new(&lx.expect_ident()?);
                if modes.iter().any(|m| m.name == mname) {
                    return Err(lx.err(format!("mode `{mname}` is already declared")));
                }
                lx.expect_sym("{")?;
                let mut equations = Vec::new();
                let names = Names {
                    params: &params,
                    vars: &vars,
                    functions: &functions,
                };
                while !lx.eat_sym("}") {
                    if !lx.eat_keyword("eq") {
                        return Err(lx.err("expected `eq LABEL: EXPR = EXPR;` or `}`"));
                    }
                    let label = Sym::new(&lx.expect_ident()?);
                    lx.expect_sym(":")?;
                    let lhs = parse_expr(&mut lx, &names)?;
                    lx.expect_sym("=")?;
                    let rhs = parse_expr(&mut lx, &names)?;
                    lx.expect_sym(";")?;
                    equations.push(Equation {
                        label,
                        expr: lhs.sub(&rhs),
                    });
                }
                modes.push(Mode {
                    name: mname,
                    equations,
                });
            }
            Tok::Ident(kw) if kw == "transition" => {
                lx.next();
                let from = Sym::new(&lx.expect_ident()?);
                lx.expect_sym("->")?;
                let to = Sym::new(&lx.expect_ident()?);
                let names = Names {
                    params: &params,
                    vars: &vars,
                    functions: &functions,
                };
                let trigger = if lx.eat_keyword("exogenous") {
                    Trigger::Exogenous
                } else if lx.eat_keyword("on") {
                    if !lx.eat_keyword("up") {
                        return Err(lx.err("expected `up(EXPR)`"));
                    }
                    lx.expect_sym("(")?;
                    let g = parse_expr(&mut lx, &names)?;
                    lx.expect_sym(")")?;
                    Trigger::Up(g)
                } else {
                    return Err(lx.err("expected `on up(EXPR)` or `exogenous`"));
                };
                let mut facts = Vec::new();
                loop {
                    if lx.eat_keyword("fact") {
                        facts.push(parse_expr(&mut lx, &names)?);
                        lx.expect_sym(";")?;
                    } else {
                        break;
                    }
                }
                lx.expect_sym(";")?;
                transitions.push(Transition {
                    from,
                    to,
                    trigger,
                    facts,
                });
            }
            other => return Err(lx.err(format!("expected a declaration, found {other:?}"))),
        }
    }

    if modes.is_empty() {
        return Err(lx.err("model has no modes"));
    }
    for t in &transitions {
        for end in [&t.from, &t.to] {
            if !modes.iter().any(|m| &m.name == end) {
                return Err(ParseError {
                    line: 0,
                    col: 0,
                    msg: format!("transition references unknown mode `{end}`"),
                });
            }
        }
    }
    Ok(Model {
        name,
        params,
        vars,
        functions,
        modes,
        transitions,
    })
}

/// One validation finding; `error` findings make `check` exit nonzero.
#[derive(Clone, Debug, serde::Serialize)]
pub struct Finding {
    pub severity: String,
    pub message: String,
}

#[derive(Clone, Debug, Default, serde::Serialize)]
pub struct ValidationReport {
    pub findings: Vec<Finding>,
}

impl ValidationReport {
    fn error(&mut self, message: String) {
        self.findings.push(Finding {
            severity: "error".into(),
            message,
        });
    }
    pub fn ok(&self) -> bool {
        self.findings.iter().all(|f| f.severity != "error")
    }
}

/// Per-mode squareness and signature feasibility, guard scope checks, and
/// label uniqueness.
pub fn validate_model(model: &Model) -> ValidationReport {
    let mut report = ValidationReport::default();
    for mode in &model.modes {
        let mut labels = Vec::new();
        for eq in &mode.equations {
            if labels.contains(&eq.label) {
                report.error(format!(
                    "mode {}: duplicate equation label {}",
                    mode.name, eq.label
                ));
            }
            labels.push(eq.label.clone());
            for v in eq.expr.variables() {
                if v.k != 0 {
                    report.error(format!(
                        "mode {}: equation {} uses a shifted variable",
                        mode.name, eq.label
                    ));
                }
            }
        }
        let sys = mode.system(&model.vars);
        if sys.equations.len() != sys.vars.len() {
            let dm = crate::graph::dm_decompose(&sys.incidence());
            report.error(format!(
                "mode {} is not square: {} equations over {} variables (over: {:?}, under: {:?})",
                mode.name,
                sys.equations.len(),
                sys.vars.len(),
                dm.over_eqs,
                dm.under_vars,
            ));
            continue;
        }
        if let Err(e) = crate::sigma::solve_sigma(&sys) {
            report.error(format!("mode {}: {e}", mode.name));
        }
    }
    for t in &model.transitions {
        if let Trigger::Up(g) = &t.trigger {
            if let Some(prev) = model.modes.iter().find(|m| m.name == t.from) {
                let sys = prev.system(&model.vars);
                if let Ok(off) = crate::sigma::solve_sigma(&sys) {
                    for v in g.variables() {
                        let ok = sys
                            .vars
                            .iter()
                            .position(|b| *b == v.base)
                            .is_some_and(|i| v.m <= off.d[i] && v.k == 0);
                        if !ok {
                            report.error(format!(
                                "transition {} -> {}: guard references {} outside the previous mode's completion",
                                t.from, t.to, v
                            ));
                        }
                    }
                }
            }
        }
    }
    report
}

impl fmt::Display for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "model {}", self.name)?;
        for (p, v) in &self.params {
            if v.is_integer() {
                writeln!(f, "param {p} = {};", v.numer())?;
            } else {
                writeln!(f, "param {p} = {}/{};", v.numer(), v.denom())?;
            }
        }
        if !self.vars.is_empty() {
            let names: Vec<&str> = self.vars.iter().map(|v| v.as_str()).collect();
            writeln!(f, "var {};", names.join(", "))?;
        }
        for (g, a) in &self.functions {
            writeln!(f, "function {g}({a});")?;
        }
        for m in &self.modes {
            writeln!(f, "mode {} {{", m.name)?;
            for e in &m.equations {
                writeln!(f, "  eq {}: {} = 0;", e.label, print_expr(&e.expr))?;
            }
            writeln!(f, "}}")?;
        }
        for t in &self.transitions {
            match &t.trigger {
                Trigger::Up(g) => write!(
                    f,
                    "transition {} -> {} on up({})",
                    t.from,
                    t.to,
                    print_expr(g)
                )?,
                Trigger::Exogenous => write!(f, "transition {} -> {} exogenous", t.from, t.to)?,
            }
            for fact in &t.facts {
                write!(f, " fact {};", print_expr(fact))?;
            }
            writeln!(f, ";")?;
        }
        Ok(())
    }
}

/// Render an expression in re-parsable syntax (der(x, n) instead of primes).
pub fn print_expr(e: &Expr) -> String {
    let s = format!("{e}");
    // VarKey display uses primes; rewrite x'' into der(x, 2) for round-trips.
    let mut out = String::new();
    let chars: Vec<char> = s.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            let ident: String = chars[start..i].iter().collect();
            let mut primes = 0;
            while i < chars.len() && chars[i] == '\'' {
                primes += 1;
                i += 1;
            }
            if primes == 0 {
                out.push_str(&ident);
            } else if primes == 1 {
                out.push_str(&format!("der({ident})"));
            } else {
                out.push_str(&format!("der({ident}, {primes})"));
            }
        } else {
            out.push(c);
            i += 1;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const CUPBALL: &str = r#"
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

    #[test]
    fn parses_cupball() {
        let m = parse_model(CUPBALL).unwrap();
        assert_eq!(m.modes.len(), 2);
        assert_eq!(m.transitions.len(), 1);
        assert!(matches!(m.transitions[0].trigger, Trigger::Up(_)));
        let report = validate_model(&m);
        assert!(report.ok(), "{report:?}");
    }

    #[test]
    fn empty_file_is_an_error() {
        assert!(parse_model("").is_err());
        assert!(parse_model("mode x {").is_err());
    }

    #[test]
    fn unknown_identifier_is_reported_with_location() {
        let src = "model m\nvar x;\nmode a {\n  eq e: der(x) + q = 0;\n}\n";
        let err = parse_model(src).unwrap_err();
        assert_eq!(err.line, 4);
        assert!(err.msg.contains("unknown identifier"));
    }

    #[test]
    fn duplicate_label_is_a_finding() {
        let src = "model m\nvar x;\nmode a {\n eq e: der(x) = 0;\n eq e: x = 0;\n}\n";
        let m = parse_model(src).unwrap();
        let report = validate_model(&m);
        assert!(!report.ok());
        assert!(report
            .findings
            .iter()
            .any(|f| f.message.contains("not square") || f.message.contains("duplicate")));
    }

    #[test]
    fn under_determined_mode_is_flagged_with_certificate() {
        let src = "model m\nvar x, y, z;\nmode a {\n eq e1: der(x) = y;\n eq e2: der(y) = z;\n}\n";
        let m = parse_model(src).unwrap();
        let report = validate_model(&m);
        assert!(!report.ok());
        assert!(report.findings[0].message.contains("not square"));
    }

    #[test]
    fn print_parse_round_trip() {
        let m = parse_model(CUPBALL).unwrap();
        let printed = m.to_string();
        let again =
            parse_model(&printed).unwrap_or_else(|e| panic!("reparse failed: {e}\n{printed}"));
        assert_eq!(m.vars, again.vars);
        assert_eq!(m.params, again.params);
        for (a, b) in m.modes.iter().zip(again.modes.iter()) {
            assert_eq!(a.name, b.name);
            for (x, y) in a.equations.iter().zip(b.equations.iter()) {
                assert_eq!(x.label, y.label);
                assert_eq!(x.expr, y.expr);
            }
        }
    }
}
