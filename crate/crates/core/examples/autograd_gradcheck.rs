//! Reverse-mode gradients checked against central differences: a hand-built
//! expression, then every registered operator.

use qcseis::autograd::gradcheck::{check, registered_op_checks, GradCheckOptions};
use qcseis::autograd::{ops, Tensor};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let a = Tensor::<f64>::param(&[2, 3], vec![0.5, -1.0, 2.0, 0.1, 0.3, -0.7])?;
    let b = Tensor::<f64>::param(&[2, 3], vec![1.5, 0.2, -0.4, 0.9, -1.2, 0.6])?;
    // f = sum(a * b + 2a)
    let f = |t: &[Tensor<f64>]| -> qcseis::autograd::Result<Tensor<f64>> {
        let prod = ops::mul(&t[0], &t[1])?;
        Ok(ops::sum(&ops::add(&prod, &ops::scale(&t[0], 2.0))?))
    };
    f(&[a.clone(), b.clone()])?.backward()?;
    println!("df/da = {:?}", a.grad().map(|g| g.to_vec()));
    let r = check("a*b + 2a", &[a, b], f, GradCheckOptions::double())?;
    println!("{}: max relative error {:.2e} over {} elements", r.name, r.max_rel_error, r.checked);

    let results = registered_op_checks::<f32>(0, GradCheckOptions::single());
    let mut worst = 0.0f64;
    let mut failed = 0;
    for res in &results {
        match res {
            Ok(r) => {
                worst = worst.max(r.max_rel_error);
                if !r.passed(1e-3) {
                    failed += 1;
                    println!("FAIL {} {:?}: {:.2e}", r.name, r.shape, r.max_rel_error);
                }
            }
            Err(e) => {
                failed += 1;
                println!("ERROR {e}");
            }
        }
    }
    println!("{} single-precision cases, {failed} failed, worst relative error {worst:.2e}", results.len());
    Ok(())
}
