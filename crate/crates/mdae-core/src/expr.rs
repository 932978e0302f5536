//! Symbolic kernel: expressions over shifted/differentiated variables, exact
//! rational constants, signed powers of the time step `eps`, and opaque smooth
//! function applications.
//!
//! Expressions are kept in a canonical sum-of-monomials form at all times, so
//! structural equality is plain `==` and golden-file comparisons are stable.

use num_rational::Rational64;
use num_traits::{One, Signed, Zero};
use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

pub type Rat = Rational64;

/// Interned-ish symbol. Ordering is lexicographic on the name, which pins a
/// deterministic canonical order everywhere.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Sym(Arc<str>);

impl Sym {
    pub fn new(s: &str) -> Self {
        Sym(Arc::from(s))
    }
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Debug for Sym {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}
impl fmt::Display for Sym {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Namespace tag for a variable. `State` is the ordinary array variable
/// (base, m, k); the other tags appear only in restart systems. The order
/// puts restart values before left-limits so that renamed continuity
/// equations stay monic in the restart value.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum VarTag {
    /// x differentiated m times, shifted k steps.
    State,
    /// Rescaled variable: eps^mu * x, kept as an auxiliary unknown.
    Scaled,
    /// Restart value of the m-th derivative for the new mode.
    Plus,
    /// Left-limit of the m-th derivative at the switch instant.
    Left,
}

/// A base variable differentiated `m` times and shifted `k` steps of `eps`.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VarKey {
    pub base: Sym,
    pub m: u32,
    pub k: i32,
    pub tag: VarTag,
}

impl VarKey {
    pub fn state(base: Sym, m: u32, k: i32) -> Self {
        VarKey {
            base,
            m,
            k,
            tag: VarTag::State,
        }
    }
    pub fn scaled(base: Sym, m: u32, k: i32) -> Self {
        VarKey {
            base,
            m,
            k,
            tag: VarTag::Scaled,
        }
    }
    pub fn left(base: Sym, m: u32) -> Self {
        VarKey {
            base,
            m,
            k: 0,
            tag: VarTag::Left,
        }
    }
    pub fn plus(base: Sym, m: u32) -> Self {
        VarKey {
            base,
            m,
            k: 0,
            tag: VarTag::Plus,
        }
    }

    /// Total degree m + k.
    pub fn total_degree(&self) -> i64 {
        self.m as i64 + self.k as i64
    }

    /// The ~ equivalence: same base and same total degree.
    pub fn sim(&self, other: &VarKey) -> bool {
        self.tag == VarTag::State
            && other.tag == VarTag::State
            && self.base == other.base
            && self.total_degree() == other.total_degree()
    }

    pub fn differentiated(&self) -> VarKey {
        debug_assert_eq!(self.tag, VarTag::State);
        VarKey {
            base: self.base.clone(),
            m: self.m + 1,
            k: self.k,
            tag: self.tag,
        }
    }

    pub fn shifted(&self, k: i32) -> VarKey {
        VarKey {
            base: self.base.clone(),
            m: self.m,
            k: self.k + k,
            tag: self.tag,
        }
    }
}

impl fmt::Display for VarKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.base)?;
        for _ in 0..self.m {
            write!(f, "'")?;
        }
        match self.tag {
            VarTag::Left => write!(f, "-")?,
            VarTag::Plus => write!(f, "+")?,
            VarTag::Scaled => write!(f, "!")?,
            VarTag::State => {}
        }
        if self.k != 0 {
            write!(f, "[{}]", self.k)?;
        }
        Ok(())
    }
}
impl fmt::Debug for VarKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

/// Opaque smooth function symbol; `derivs[i]` is the number of times the
/// symbol has been partially differentiated in its i-th argument. Fresh
/// derivative symbols arise from the chain rule.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FuncId {
    pub name: Sym,
    pub derivs: Vec<u32>,
}

impl FuncId {
    pub fn new(name: Sym, arity: usize) -> Self {
        FuncId {
            name,
            derivs: vec![0; arity],
        }
    }
    pub fn derived(&self, arg: usize) -> FuncId {
        let mut d = self.derivs.clone();
        d[arg] += 1;
        FuncId {
            name: self.name.clone(),
            derivs: d,
        }
    }
    pub fn arity(&self) -> usize {
        self.derivs.len()
    }
}

impl fmt::Display for FuncId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.name)?;
        for (i, d) in self.derivs.iter().enumerate() {
            if *d > 0 {
                write!(f, "_d{}", i + 1)?;
                if *d > 1 {
                    write!(f, "x{d}")?;
                }
            }
        }
        Ok(())
    }
}
impl fmt::Debug for FuncId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

/// One opaque factor of a monomial: a function application raised to a power.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct OpaqueFactor {
    pub func: FuncId,
    pub args: Vec<Expr>,
    pub pow: u32,
}

/// A monomial: coeff * eps^eps_pow * prod(params^p) * prod(vars^p) * prod(opaques).
/// `eps_pow` is signed: a factor eps^-n is stored as `eps_pow = -n`.
/// Field order matters: the derived ordering sorts by the monomial key
/// first, so proportional expressions keep aligned term lists.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Term {
    pub eps_pow: i32,
    pub params: Vec<(Sym, u32)>,
    pub vars: Vec<(VarKey, u32)>,
    pub opaques: Vec<OpaqueFactor>,
    pub coeff: Rat,
}

/// Monomial identity: everything but the coefficient.
type TermKey = (i32, Vec<(Sym, u32)>, Vec<(VarKey, u32)>, Vec<OpaqueFactor>);

impl Term {
    fn key(&self) -> TermKey {
        (
            self.eps_pow,
            self.params.clone(),
            self.vars.clone(),
            self.opaques.clone(),
        )
    }

    pub fn is_constant(&self) -> bool {
        self.vars.is_empty() && self.opaques.is_empty()
    }

    /// Multiplicity of `v` among the plain variable factors.
    pub fn multiplicity(&self, v: &VarKey) -> u32 {
        self.vars
            .iter()
            .find(|(w, _)| w == v)
            .map(|(_, p)| *p)
            .unwrap_or(0)
    }

    /// Does any opaque factor of this term depend on `v`?
    pub fn opaque_depends_on(&self, v: &VarKey) -> bool {
        self.opaques
            .iter()
            .any(|o| o.args.iter().any(|a| a.contains_var(v)))
    }

    /// All variables of the term, including those inside opaque arguments.
    pub fn all_vars(&self, out: &mut Vec<VarKey>) {
        for (v, _) in &self.vars {
            if !out.contains(v) {
                out.push(v.clone());
            }
        }
        for o in &self.opaques {
            for a in &o.args {
                for v in a.variables() {
                    if !out.contains(&v) {
                        out.push(v);
                    }
                }
            }
        }
    }
}

/// An expression in canonical sum-of-monomials form. The empty term list is 0.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Expr {
    pub terms: Vec<Term>,
}

#[derive(thiserror::Error, Debug, PartialEq)]
pub enum EvalError {
    #[error("variable {0} missing from valuation")]
    MissingVariable(String),
    #[error("parameter {0} has no value")]
    MissingParameter(String),
    #[error("opaque function {0} has no numeric binding")]
    MissingFunction(String),
    #[error("eps = 0 but a strictly negative eps power remains")]
    EpsilonSingularity,
}

fn normalize_terms(mut terms: Vec<Term>) -> Vec<Term> {
    let mut map: BTreeMap<_, Rat> = BTreeMap::new();
    for t in terms.drain(..) {
        if t.coeff.is_zero() {
            continue;
        }
        *map.entry(t.key()).or_insert_with(Rat::zero) += t.coeff;
    }
    let mut out: Vec<Term> = map
        .into_iter()
        .filter(|(_, c)| !c.is_zero())
        .map(|((eps_pow, params, vars, opaques), coeff)| Term {
            coeff,
            eps_pow,
            params,
            vars,
            opaques,
        })
        .collect();
    out.sort();
    out
}

impl Expr {
    pub fn zero() -> Expr {
        Expr { terms: vec![] }
    }
    pub fn constant(c: Rat) -> Expr {
        if c.is_zero() {
            return Expr::zero();
        }
        Expr {
            terms: vec![Term {
                coeff: c,
                eps_pow: 0,
                params: vec![],
                vars: vec![],
                opaques: vec![],
            }],
        }
    }
    pub fn int(n: i64) -> Expr {
        Expr::constant(Rat::from_integer(n))
    }
    pub fn var(v: VarKey) -> Expr {
        Expr {
            terms: vec![Term {
                coeff: Rat::one(),
                eps_pow: 0,
                params: vec![],
                vars: vec![(v, 1)],
                opaques: vec![],
            }],
        }
    }
    pub fn param(p: Sym) -> Expr {
        Expr {
            terms: vec![Term {
                coeff: Rat::one(),
                eps_pow: 0,
                params: vec![(p, 1)],
                vars: vec![],
                opaques: vec![],
            }],
        }
    }
    /// eps^p with signed exponent; an eps^-n factor is `eps_pow(-n)`.
    pub fn eps_pow(p: i32) -> Expr {
        Expr {
            terms: vec![Term {
                coeff: Rat::one(),
                eps_pow: p,
                params: vec![],
                vars: vec![],
                opaques: vec![],
            }],
        }
    }
    pub fn app(func: FuncId, args: Vec<Expr>) -> Expr {
        Expr {
            terms: vec![Term {
                coeff: Rat::one(),
                eps_pow: 0,
                params: vec![],
                vars: vec![],
                opaques: vec![OpaqueFactor { func, args, pow: 1 }],
            }],
        }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn add(&self, other: &Expr) -> Expr {
        let mut terms = self.terms.clone();
        terms.extend(other.terms.iter().cloned());
        Expr {
            terms: normalize_terms(terms),
        }
    }

    pub fn neg(&self) -> Expr {
        Expr {
            terms: self
                .terms
                .iter()
                .map(|t| Term {
                    coeff: -t.coeff,
                    ..t.clone()
                })
                .collect(),
        }
    }

    pub fn sub(&self, other: &Expr) -> Expr {
        self.add(&other.neg())
    }

    pub fn scale(&self, c: Rat) -> Expr {
        if c.is_zero() {
            return Expr::zero();
        }
        let mut terms: Vec<Term> = self
            .terms
            .iter()
            .map(|t| Term {
                coeff: t.coeff * c,
                ..t.clone()
            })
            .collect();
        terms.sort();
        Expr { terms }
    }

    pub fn mul(&self, other: &Expr) -> Expr {
        let mut terms = Vec::with_capacity(self.terms.len() * other.terms.len());
        for a in &self.terms {
            for b in &other.terms {
                let mut params = a.params.clone();
                for (p, n) in &b.params {
                    match params.iter_mut().find(|(q, _)| q == p) {
                        Some((_, m)) => *m += n,
                        None => params.push((p.clone(), *n)),
                    }
                }
                params.sort();
                let mut vars = a.vars.clone();
                for (v, n) in &b.vars {
                    match vars.iter_mut().find(|(w, _)| w == v) {
                        Some((_, m)) => *m += n,
                        None => vars.push((v.clone(), *n)),
                    }
                }
                vars.sort();
                let mut opaques = a.opaques.clone();
                for o in &b.opaques {
                    match opaques
                        .iter_mut()
                        .find(|p| p.func == o.func && p.args == o.args)
                    {
                        Some(p) => p.pow += o.pow,
                        None => opaques.push(o.clone()),
                    }
                }
                opaques.sort();
                terms.push(Term {
                    coeff: a.coeff * b.coeff,
                    eps_pow: a.eps_pow + b.eps_pow,
                    params,
                    vars,
                    opaques,
                });
            }
        }
        Expr {
            terms: normalize_terms(terms),
        }
    }

    pub fn pow(&self, n: u32) -> Expr {
        let mut acc = Expr::int(1);
        for _ in 0..n {
            acc = acc.mul(self);
        }
        acc
    }

    pub fn contains_eps(&self) -> bool {
        self.terms.iter().any(|t| {
            t.eps_pow != 0
                || t.opaques
                    .iter()
                    .any(|o| o.args.iter().any(Expr::contains_eps))
        })
    }

    pub fn contains_var(&self, v: &VarKey) -> bool {
        self.terms
            .iter()
            .any(|t| t.vars.iter().any(|(w, _)| w == v) || t.opaque_depends_on(v))
    }

    /// All distinct variables, including those inside opaque arguments.
    pub fn variables(&self) -> Vec<VarKey> {
        let mut out = Vec::new();
        for t in &self.terms {
            t.all_vars(&mut out);
        }
        out.sort();
        out
    }

    /// d/dt. Precondition: no eps factors (model equations only).
    pub fn differentiate(&self) -> Expr {
        debug_assert!(
            !self.contains_eps(),
            "differentiate applies to model equations without eps"
        );
        let mut acc = Expr::zero();
        for t in &self.terms {
            // product rule over variable factors
            for (i, (v, p)) in t.vars.iter().enumerate() {
                let mut rest = t.clone();
                rest.coeff *= Rat::from_integer(*p as i64);
                if *p == 1 {
                    rest.vars.remove(i);
                } else {
                    rest.vars[i].1 -= 1;
                }
                let d = Expr::var(v.differentiated());
                acc = acc.add(&Expr { terms: vec![rest] }.mul(&d));
            }
            // product rule over opaque factors (chain rule inside)
            for (i, o) in t.opaques.iter().enumerate() {
                let mut rest = t.clone();
                rest.coeff *= Rat::from_integer(o.pow as i64);
                if o.pow == 1 {
                    rest.opaques.remove(i);
                } else {
                    rest.opaques[i].pow -= 1;
                }
                let mut dfun = Expr::zero();
                for (j, arg) in o.args.iter().enumerate() {
                    let gj = Expr::app(o.func.derived(j), o.args.clone());
                    dfun = dfun.add(&gj.mul(&arg.differentiate()));
                }
                acc = acc.add(&Expr { terms: vec![rest] }.mul(&dfun));
            }
        }
        acc
    }

    /// Shift every variable by k steps.
    pub fn shift(&self, k: i32) -> Expr {
        if k == 0 {
            return self.clone();
        }
        let mut terms: Vec<Term> = self
            .terms
            .iter()
            .map(|t| {
                let mut vars: Vec<(VarKey, u32)> =
                    t.vars.iter().map(|(v, p)| (v.shifted(k), *p)).collect();
                vars.sort();
                let opaques = t
                    .opaques
                    .iter()
                    .map(|o| OpaqueFactor {
                        func: o.func.clone(),
                        args: o.args.iter().map(|a| a.shift(k)).collect(),
                        pow: o.pow,
                    })
                    .collect();
                Term {
                    coeff: t.coeff,
                    eps_pow: t.eps_pow,
                    params: t.params.clone(),
                    vars,
                    opaques,
                }
            })
            .collect();
        terms.sort();
        Expr { terms }
    }

    /// Partial derivative with respect to one variable key.
    pub fn partial_derivative(&self, v: &VarKey) -> Expr {
        let mut acc = Expr::zero();
        for t in &self.terms {
            for (i, (w, p)) in t.vars.iter().enumerate() {
                if w != v {
                    continue;
                }
                let mut rest = t.clone();
                rest.coeff *= Rat::from_integer(*p as i64);
                if *p == 1 {
                    rest.vars.remove(i);
                } else {
                    rest.vars[i].1 -= 1;
                }
                acc = acc.add(&Expr { terms: vec![rest] });
            }
            for (i, o) in t.opaques.iter().enumerate() {
                if !o.args.iter().any(|a| a.contains_var(v)) {
                    continue;
                }
                let mut rest = t.clone();
                rest.coeff *= Rat::from_integer(o.pow as i64);
                if o.pow == 1 {
                    rest.opaques.remove(i);
                } else {
                    rest.opaques[i].pow -= 1;
                }
                let mut dfun = Expr::zero();
                for (j, arg) in o.args.iter().enumerate() {
                    let da = arg.partial_derivative(v);
                    if da.is_zero() {
                        continue;
                    }
                    let gj = Expr::app(o.func.derived(j), o.args.clone());
                    dfun = dfun.add(&gj.mul(&da));
                }
                acc = acc.add(&Expr { terms: vec![rest] }.mul(&dfun));
            }
        }
        acc
    }

    /// Replace variable occurrences; `f` returns None to keep a variable.
    /// Opaque arguments are substituted recursively.
    pub fn substitute_vars(&self, f: &mut dyn FnMut(&VarKey) -> Option<Expr>) -> Expr {
        let mut acc = Expr::zero();
        for t in &self.terms {
            let mut prod = Expr::constant(t.coeff).mul(&Expr::eps_pow(t.eps_pow));
            for (p, n) in &t.params {
                prod = prod.mul(&Expr::param(p.clone()).pow(*n));
            }
            for (v, n) in &t.vars {
                let rep = f(v).unwrap_or_else(|| Expr::var(v.clone()));
                prod = prod.mul(&rep.pow(*n));
            }
            for o in &t.opaques {
                let args = o.args.iter().map(|a| a.substitute_vars(f)).collect();
                prod = prod.mul(&Expr::app(o.func.clone(), args).pow(o.pow));
            }
            acc = acc.add(&prod);
        }
        acc
    }

    /// Drop every monomial carrying a strictly positive eps power.
    pub fn drop_positive_eps(&self) -> Expr {
        Expr {
            terms: self
                .terms
                .iter()
                .filter(|t| t.eps_pow <= 0)
                .cloned()
                .collect(),
        }
    }

    /// Lin(f): variables every occurrence of which is linear (multiplicity
    /// exactly one) and outside all opaque factors.
    pub fn lin_vars(&self) -> Vec<VarKey> {
        let all = self.variables();
        all.into_iter()
            .filter(|v| {
                self.terms.iter().all(|t| {
                    let m = t.multiplicity(v);
                    let dep = t.opaque_depends_on(v);
                    (m == 0 || m == 1) && !(dep)
                }) && self.terms.iter().any(|t| t.multiplicity(v) == 1)
            })
            .collect()
    }

    /// Restrict to the terms that involve `v` (a function cut down to its
    /// matched variable's monomials).
    pub fn restrict_to(&self, v: &VarKey) -> Expr {
        Expr {
            terms: self
                .terms
                .iter()
                .filter(|t| t.multiplicity(v) > 0 || t.opaque_depends_on(v))
                .cloned()
                .collect(),
        }
    }

    pub fn evaluate(&self, ctx: &EvalContext) -> Result<f64, EvalError> {
        let mut sum = 0.0;
        for t in &self.terms {
            let mut prod = *t.coeff.numer() as f64 / *t.coeff.denom() as f64;
            if t.eps_pow != 0 {
                if ctx.eps == 0.0 {
                    if t.eps_pow < 0 {
                        return Err(EvalError::EpsilonSingularity);
                    }
                    // 0^n = 0 for n > 0: the whole term vanishes
                    continue;
                }
                prod *= ctx.eps.powi(t.eps_pow);
            }
            for (p, n) in &t.params {
                let v = ctx
                    .params
                    .get(p)
                    .ok_or_else(|| EvalError::MissingParameter(p.to_string()))?;
                prod *= v.powi(*n as i32);
            }
            for (v, n) in &t.vars {
                let x = ctx
                    .vars
                    .get(v)
                    .ok_or_else(|| EvalError::MissingVariable(v.to_string()))?;
                prod *= x.powi(*n as i32);
            }
            for o in &t.opaques {
                let f = ctx
                    .funcs
                    .get(&o.func)
                    .ok_or_else(|| EvalError::MissingFunction(o.func.to_string()))?;
                let mut args = Vec::with_capacity(o.args.len());
                for a in &o.args {
                    args.push(a.evaluate(ctx)?);
                }
                prod *= f(&args).powi(o.pow as i32);
            }
            sum += prod;
        }
        Ok(sum)
    }

    /// Scale the equation so the canonically-first term has coefficient one
    /// (0 = e and 0 = c*e define the same constraint).
    pub fn monic(&self) -> Expr {
        match self.terms.first() {
            Some(t) if !t.coeff.is_one() => self.scale(t.coeff.recip()),
            _ => self.clone(),
        }
    }

    /// Returns c such that self = c * other for a nonzero rational c.
    pub fn equal_up_to_constant(&self, other: &Expr) -> Option<Rat> {
        if self.is_zero() && other.is_zero() {
            return Some(Rat::one());
        }
        if self.terms.len() != other.terms.len() || other.terms.is_empty() {
            return None;
        }
        // terms are sorted by monomial key, so matching keys line up
        let a = &self.terms[0];
        let b = &other.terms[0];
        if (a.eps_pow, &a.params, &a.vars, &a.opaques)
            != (b.eps_pow, &b.params, &b.vars, &b.opaques)
        {
            return None;
        }
        let c = a.coeff / b.coeff;
        if c.is_zero() {
            return None;
        }
        if *self == other.scale(c) {
            Some(c)
        } else {
            None
        }
    }
}

/// A numeric binding for an opaque function symbol.
pub type FuncImpl = Box<dyn Fn(&[f64]) -> f64>;

/// Numeric evaluation context.
#[derive(Default)]
pub struct EvalContext {
    pub vars: BTreeMap<VarKey, f64>,
    pub params: BTreeMap<Sym, f64>,
    pub funcs: BTreeMap<FuncId, FuncImpl>,
    pub eps: f64,
}

impl EvalContext {
    pub fn new() -> Self {
        Self::default()
    }
}

#[allow(clippy::type_complexity)]
fn fmt_term(t: &Term, f: &mut fmt::Formatter<'_>, lead: bool) -> fmt::Result {
    let c = t.coeff;
    if c.is_negative() {
        write!(f, "{}", if lead { "-" } else { " - " })?;
    } else if !lead {
        write!(f, " + ")?;
    }
    let a = c.abs();
    let mut printed = false;
    if !a.is_one() || t.is_constant() && t.eps_pow == 0 && t.params.is_empty() {
        if a.denom() == &1 {
            write!(f, "{}", a.numer())?;
        } else {
            write!(f, "{}/{}", a.numer(), a.denom())?;
        }
        printed = true;
    }
    let star = |f: &mut fmt::Formatter<'_>, printed: &mut bool| -> fmt::Result {
        if *printed {
            write!(f, "*")?;
        }
        *printed = true;
        Ok(())
    };
    if t.eps_pow != 0 {
        star(f, &mut printed)?;
        if t.eps_pow == 1 {
            write!(f, "eps")?;
        } else {
            write!(f, "eps^{}", t.eps_pow)?;
        }
    }
    for (p, n) in &t.params {
        star(f, &mut printed)?;
        write!(f, "{p}")?;
        if *n > 1 {
            write!(f, "^{n}")?;
        }
    }
    for (v, n) in &t.vars {
        star(f, &mut printed)?;
        write!(f, "{v}")?;
        if *n > 1 {
            write!(f, "^{n}")?;
        }
    }
    for o in &t.opaques {
        star(f, &mut printed)?;
        write!(f, "{}(", o.func)?;
        for (i, a) in o.args.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{a}")?;
        }
        write!(f, ")")?;
        if o.pow > 1 {
            write!(f, "^{}", o.pow)?;
        }
    }
    Ok(())
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (i, t) in self.terms.iter().enumerate() {
            fmt_term(t, f, i == 0)?;
        }
        Ok(())
    }
}

impl fmt::Debug for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

/// Generalized Euler identity relating x ~ z with m_x > m_z:
/// x - eps^-n * sum_i C(n,i) (-1)^i z[-i], n = m_x - m_z.
pub fn euler_identity(x: &VarKey, z: &VarKey) -> Result<Expr, NotRelated> {
    if !x.sim(z) || x.m <= z.m {
        return Err(NotRelated {
            x: x.to_string(),
            z: z.to_string(),
        });
    }
    let n = (x.m - z.m) as i64;
    let mut sum = Expr::zero();
    let mut binom = Rat::one();
    for i in 0..=n {
        let sign = if i % 2 == 0 { Rat::one() } else { -Rat::one() };
        let zi = Expr::var(z.shifted(-(i as i32)));
        sum = sum.add(&zi.scale(binom * sign));
        // C(n, i+1) = C(n, i) * (n - i) / (i + 1)
        binom *= Rat::new(n - i, i + 1);
    }
    Ok(Expr::var(x.clone()).sub(&sum.mul(&Expr::eps_pow(-(n as i32)))))
}

#[derive(thiserror::Error, Debug, PartialEq)]
#[error("{x} and {z} are not related by an Euler identity")]
pub struct NotRelated {
    pub x: String,
    pub z: String,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(name: &str, m: u32, k: i32) -> VarKey {
        VarKey::state(Sym::new(name), m, k)
    }
    fn xv(name: &str, m: u32, k: i32) -> Expr {
        Expr::var(v(name, m, k))
    }

    #[test]
    fn derivative_of_pendulum_constraint_derivative() {
        // d/dt(x*x' + y*y') = x*x'' + x'^2 + y'^2 + y*y''
        let e = xv("x", 0, 0)
            .mul(&xv("x", 1, 0))
            .add(&xv("y", 0, 0).mul(&xv("y", 1, 0)));
        let d = e.differentiate();
        let want = xv("x", 0, 0)
            .mul(&xv("x", 2, 0))
            .add(&xv("x", 1, 0).pow(2))
            .add(&xv("y", 1, 0).pow(2))
            .add(&xv("y", 0, 0).mul(&xv("y", 2, 0)));
        assert_eq!(d, want);
    }

    #[test]
    fn derivative_of_constant_is_zero() {
        assert!(Expr::int(7).differentiate().is_zero());
    }

    #[test]
    fn derivative_of_length_constraint() {
        // d/dt(L^2 - (x^2+y^2)) = -2(x*x' + y*y')
        let e = Expr::param(Sym::new("L"))
            .pow(2)
            .sub(&xv("x", 0, 0).pow(2).add(&xv("y", 0, 0).pow(2)));
        let d = e.differentiate();
        let k1dot = xv("x", 0, 0)
            .mul(&xv("x", 1, 0))
            .add(&xv("y", 0, 0).mul(&xv("y", 1, 0)));
        assert_eq!(d.equal_up_to_constant(&k1dot), Some(Rat::from_integer(-2)));
    }

    #[test]
    fn shift_maps_keys_and_is_invertible() {
        let e = xv("x", 2, 0).add(&xv("lambda", 0, 0).mul(&xv("x", 0, 0)));
        let s = e.shift(1);
        assert_eq!(
            s,
            xv("x", 2, 1).add(&xv("lambda", 0, 1).mul(&xv("x", 0, 1)))
        );
        assert_eq!(e.shift(0), e);
        assert_eq!(s.shift(-1), e);
    }

    #[test]
    fn commutativity_normalizes_to_zero() {
        let e = xv("x", 0, 0)
            .mul(&xv("y", 0, 0))
            .sub(&xv("y", 0, 0).mul(&xv("x", 0, 0)));
        assert!(e.is_zero());
    }

    #[test]
    fn lin_vars_and_restriction() {
        // x'' + lambda*x: all linear
        let f1 = xv("x", 2, 0).add(&xv("lambda", 0, 0).mul(&xv("x", 0, 0)));
        let lin = f1.lin_vars();
        assert_eq!(lin.len(), 3);

        // x*x'' + x'^2 + y'^2 + y*y'': x' occurs squared, so not linear
        let f2 = xv("x", 0, 0)
            .mul(&xv("x", 2, 0))
            .add(&xv("x", 1, 0).pow(2))
            .add(&xv("y", 1, 0).pow(2))
            .add(&xv("y", 0, 0).mul(&xv("y", 2, 0)));
        assert!(!f2.lin_vars().contains(&v("x", 1, 0)));
        assert!(f2.lin_vars().contains(&v("x", 2, 0)));

        // g(x): fully opaque
        let g = Expr::app(FuncId::new(Sym::new("g"), 1), vec![xv("x", 0, 0)]);
        assert!(g.lin_vars().is_empty());

        let r = f2.restrict_to(&v("y", 2, 0));
        assert_eq!(r, xv("y", 0, 0).mul(&xv("y", 2, 0)));
    }

    #[test]
    fn partial_derivatives() {
        let f1 = xv("x", 2, 0).add(&xv("lambda", 0, 0).mul(&xv("x", 0, 0)));
        assert_eq!(f1.partial_derivative(&v("lambda", 0, 0)), xv("x", 0, 0));
        assert_eq!(
            xv("x", 0, 0).pow(2).partial_derivative(&v("x", 0, 0)),
            xv("x", 0, 0).scale(Rat::from_integer(2))
        );
        assert_eq!(
            xv("x", 0, 0)
                .mul(&xv("x", 1, 0))
                .partial_derivative(&v("x", 1, 0)),
            xv("x", 0, 0)
        );
    }

    #[test]
    fn evaluate_arithmetic_and_eps() {
        let mut ctx = EvalContext::new();
        ctx.vars.insert(v("x", 0, 0), 1.0);
        ctx.vars.insert(v("y", 0, 0), 2.0);
        ctx.eps = 1.0;
        let e = xv("x", 0, 0).add(&xv("y", 0, 0).scale(Rat::from_integer(2)));
        assert_eq!(e.evaluate(&ctx).unwrap(), 5.0);

        // eps^-1 * (x[1] - x) at eps = 0.1 is a forward difference
        let mut ctx = EvalContext::new();
        ctx.vars.insert(v("x", 0, 1), 1.1);
        ctx.vars.insert(v("x", 0, 0), 1.0);
        ctx.eps = 0.1;
        let d = Expr::eps_pow(-1).mul(&xv("x", 0, 1).sub(&xv("x", 0, 0)));
        assert!((d.evaluate(&ctx).unwrap() - 1.0).abs() < 1e-12);

        ctx.eps = 0.0;
        let s = Expr::eps_pow(-1).mul(&xv("x", 0, 0));
        assert_eq!(s.evaluate(&ctx), Err(EvalError::EpsilonSingularity));
    }

    #[test]
    fn missing_variable_is_reported() {
        let ctx = EvalContext::new();
        assert!(matches!(
            xv("x", 0, 0).evaluate(&ctx),
            Err(EvalError::MissingVariable(_))
        ));
    }

    #[test]
    fn equal_up_to_constant_cases() {
        let a = xv("x", 0, 0).add(&xv("y", 0, 0));
        let b = xv("x", 0, 0).sub(&xv("y", 0, 0));
        assert_eq!(a.equal_up_to_constant(&b), None);
        assert_eq!(
            a.scale(Rat::new(-1, 2)).equal_up_to_constant(&a),
            Some(Rat::new(-1, 2))
        );
    }

    #[test]
    fn euler_identity_first_and_second_order() {
        // x' - eps^-1 (x[1] - x)
        let e1 = euler_identity(&v("x", 1, 0), &v("x", 0, 1)).unwrap();
        let want1 = xv("x", 1, 0).sub(&Expr::eps_pow(-1).mul(&xv("x", 0, 1).sub(&xv("x", 0, 0))));
        assert_eq!(e1, want1);

        // x'' - eps^-2 (x[2] - 2x[1] + x)
        let e2 = euler_identity(&v("x", 2, 0), &v("x", 0, 2)).unwrap();
        let inner = xv("x", 0, 2)
            .sub(&xv("x", 0, 1).scale(Rat::from_integer(2)))
            .add(&xv("x", 0, 0));
        assert_eq!(e2, xv("x", 2, 0).sub(&Expr::eps_pow(-2).mul(&inner)));

        assert!(euler_identity(&v("x", 1, 0), &v("x", 1, 0)).is_err());
        assert!(euler_identity(&v("x", 0, 1), &v("x", 1, 0)).is_err());
    }

    #[test]
    fn opaque_chain_rule_makes_fresh_symbols() {
        let g = FuncId::new(Sym::new("g"), 1);
        let e = Expr::app(g.clone(), vec![xv("x", 0, 0)]);
        let d = e.differentiate();
        let want = Expr::app(g.derived(0), vec![xv("x", 0, 0)]).mul(&xv("x", 1, 0));
        assert_eq!(d, want);
    }
}
