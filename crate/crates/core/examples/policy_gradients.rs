//! Forward pass and vector-Jacobian product of a small tanh policy, checked
//! against central differences.

use asciime::policy::{Genotype, PolicySpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = PolicySpec::new(4, 2, vec![8, 8]);
    let g = spec.init_genotype(0);
    let s = [0.3, -0.2, 1.0, 0.5];
    let c = [1.0, -0.5];
    println!("{} parameters, action {:?}", spec.parameter_count(), spec.forward(&g, &s)?);

    let grad = spec.vjp(&g, &s, &c)?;
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    let mut x = g.as_slice().to_vec();
    for p in 0..x.len() {
        let f = |x: &[f64]| -> f64 {
            let a = spec.forward(&Genotype::new(x.to_vec()).unwrap(), &s).unwrap();
            a[0] * c[0] + a[1] * c[1]
        };
        let orig = x[p];
        x[p] = orig + h;
        let up = f(&x);
        x[p] = orig - h;
        let down = f(&x);
        x[p] = orig;
        worst = worst.max((grad[p] - (up - down) / (2.0 * h)).abs());
    }
    println!("max |vjp - finite difference| = {worst:.2e}");
    Ok(())
}
