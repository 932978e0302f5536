//! Dense Newton solver with a symbolic Jacobian, for verifying restart
//! systems numerically. Systems here have a handful of unknowns, so a plain
//! partial-pivot LU is plenty.

use crate::expr::{EvalContext, EvalError, Expr, VarKey};
use std::collections::BTreeMap;

#[derive(thiserror::Error, Debug)]
pub enum NumError {
    #[error("system is not square: {n_eqs} equations over {n_vars} unknowns")]
    NotSquare { n_eqs: usize, n_vars: usize },
    #[error("jacobian is numerically singular at iteration {iter}")]
    SingularJacobian { iter: usize },
    #[error("newton iteration did not converge: residual {residual:.3e} after {iters} steps")]
    NonConvergence { residual: f64, iters: usize },
    #[error(transparent)]
    Eval(#[from] EvalError),
}

#[derive(Clone, Copy, Debug)]
pub struct NewtonOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions {
            tol: 1e-10,
            max_iter: 100,
        }
    }
}

#[allow(clippy::needless_range_loop)]
fn lu_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>, iter: usize) -> Result<Vec<f64>, NumError> {
    let n = b.len();
    for col in 0..n {
        let (pivot, mag) = (col..n)
            .map(|r| (r, a[r][col].abs()))
            .max_by(|x, y| x.1.total_cmp(&y.1))
            .unwrap();
        if mag < 1e-12 {
            return Err(NumError::SingularJacobian { iter });
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            if f == 0.0 {
                continue;
            }
            for c in col..n {
                let v = a[col][c];
                a[r][c] -= f * v;
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let mut s = b[r];
        for c in r + 1..n {
            s -= a[r][c] * x[c];
        }
        x[r] = s / a[r][r];
    }
    Ok(x)
}

/// Solve eqs(vars) = 0 for `vars`, other symbols valued through `ctx`.
/// The initial guess must cover every unknown.
pub fn newton_solve(
    eqs: &[Expr],
    vars: &[VarKey],
    ctx: &mut EvalContext,
    init: &BTreeMap<VarKey, f64>,
    opts: NewtonOptions,
) -> Result<BTreeMap<VarKey, f64>, NumError> {
    let n = eqs.len();
    if n != vars.len() {
        return Err(NumError::NotSquare {
            n_eqs: n,
            n_vars: vars.len(),
        });
    }
    let jac: Vec<Vec<Expr>> = eqs
        .iter()
        .map(|e| vars.iter().map(|v| e.partial_derivative(v)).collect())
        .collect();
    for v in vars {
        ctx.vars.insert(v.clone(), *init.get(v).unwrap_or(&0.0));
    }
    let mut residual = f64::INFINITY;
    for iter in 0..opts.max_iter {
        let mut f = Vec::with_capacity(n);
        for e in eqs {
            f.push(e.evaluate(ctx)?);
        }
        residual = f.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        if residual < opts.tol {
            return Ok(vars.iter().map(|v| (v.clone(), ctx.vars[v])).collect());
        }
        let mut j = vec![vec![0.0; n]; n];
        for (r, row) in jac.iter().enumerate() {
            for (c, e) in row.iter().enumerate() {
                j[r][c] = e.evaluate(ctx)?;
            }
        }
        let dx = lu_solve(j, f.iter().map(|x| -x).collect(), iter)?;
        for (v, d) in vars.iter().zip(dx.iter()) {
            *ctx.vars.get_mut(v).unwrap() += d;
        }
    }
    Err(NumError::NonConvergence {
        residual,
        iters: opts.max_iter,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Sym;

    #[test]
    fn solves_a_small_nonlinear_system() {
        // x^2 + y - 3 = 0, x - y = 0  ->  x = y, x^2 + x - 3 = 0
        let x = VarKey::state(Sym::new("x"), 0, 0);
        let y = VarKey::state(Sym::new("y"), 0, 0);
        let e1 = Expr::var(x.clone())
            .pow(2)
            .add(&Expr::var(y.clone()))
            .sub(&Expr::int(3));
        let e2 = Expr::var(x.clone()).sub(&Expr::var(y.clone()));
        let mut ctx = EvalContext::new();
        let mut init = BTreeMap::new();
        init.insert(x.clone(), 1.0);
        init.insert(y.clone(), 1.0);
        let sol = newton_solve(
            &[e1, e2],
            &[x.clone(), y],
            &mut ctx,
            &init,
            NewtonOptions::default(),
        )
        .unwrap();
        let want = (-1.0 + (13.0f64).sqrt()) / 2.0;
        assert!((sol[&x] - want).abs() < 1e-9);
    }

    #[test]
    fn singular_jacobian_is_reported() {
        let x = VarKey::state(Sym::new("x"), 0, 0);
        let y = VarKey::state(Sym::new("y"), 0, 0);
        // two identical equations: jacobian rank 1
        let e = Expr::var(x.clone())
            .add(&Expr::var(y.clone()))
            .sub(&Expr::int(1));
        let mut ctx = EvalContext::new();
        let init = BTreeMap::new();
        match newton_solve(
            &[e.clone(), e],
            &[x, y],
            &mut ctx,
            &init,
            NewtonOptions::default(),
        ) {
            Err(NumError::SingularJacobian { .. }) => {}
            other => panic!("expected singular jacobian, got {other:?}"),
        }
    }
}
