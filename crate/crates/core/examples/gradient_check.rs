//! Compares tape gradients of a small attention computation with central
//! finite differences.

use legalgraph::ndiff::{grad_check, Tensor};

fn main() -> legalgraph::Result<()> {
    let x = Tensor::from_vec(4, 3, (0..12).map(|i| ((i * 7 % 5) as f64 - 2.0) * 0.3).collect())?;
    let w = Tensor::from_vec(3, 3, (0..9).map(|i| ((i * 3 % 4) as f64 - 1.5) * 0.2).collect())?;
    let a = Tensor::from_vec(3, 1, vec![0.5, -0.4, 0.3])?;
    let report = grad_check(
        |t, v| {
            let h = t.matmul(v[0], v[1])?;
            let scores = t.leaky_relu(t.matmul(h, v[2])?, 0.2)?;
            let alpha = t.segment_softmax(scores, &[0, 0, 1, 1])?;
            t.sum(t.exp(t.scale_rows(h, alpha)?)?)
        },
        &[x, w, a],
        1e-6,
        1e-6,
    )?;
    println!(
        "{} entries, max relative error {:.3e}, passed: {}",
        report.entries_checked, report.max_rel_error, report.passed
    );
    Ok(())
}
