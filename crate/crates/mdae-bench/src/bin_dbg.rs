use mdae_core::mcarray::ModeChange;
use mdae_core::model::parse_model;

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

fn main() {
    let m = parse_model(CUPBALL).unwrap();
    let mc = ModeChange::from_model(&m, "free", "taut").unwrap();
    println!("next matching: {:?}", mc.next_completed.offsets);
    println!("prev offsets: {:?}", mc.prev_completed.offsets);
    println!("roots: {:?}", mc.root_facts());
    let b = mc.height_bounds();
    println!("k_star {:?} k_upper {:?}", b.k_star, b.k_upper);
}
