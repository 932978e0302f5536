use mdae_core::expr::{Expr, Sym, VarKey};
use mdae_core::mcarray::sim_closure;
fn main() {
    let e = Expr::var(VarKey::state(Sym::new("x"), 2, 0))
        .sub(&Expr::var(VarKey::state(Sym::new("x"), 1, 1)));
    let extra = Expr::var(VarKey::state(Sym::new("x"), 0, 1));
    let two = sim_closure(&[e.clone(), extra.clone()], &|_| false);
    for t in &two { println!("added: {t}"); }
}
